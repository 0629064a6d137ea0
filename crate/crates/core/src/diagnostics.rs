//! Lyapunov quantities, reach-weighted divergences and trajectory statistics.

use crate::dynamics::{run, DynamicsState, Regularizer, RunOptions, RunOutcome};
use crate::error::{Error, Result};
use crate::game::GameTree;
use crate::policy::Policy;
use crate::scalar::{kl, Scalar};
use crate::transform::{DenominatorMode, TransformSpec};
use crate::values::{nash_conv, reach_probs, root_values};

/// One sample of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord<T> {
    pub step: usize,
    pub time: T,
    /// Exploitability against the base reward.
    pub nashconv: T,
    /// Root values under the base reward, one per player.
    pub values: Vec<T>,
    /// `J(y)` against the reference policy, when one is supplied.
    pub lyapunov: Option<T>,
    /// `Xi(reference, pi)`, when a reference is supplied.
    pub xi_ref: Option<T>,
    /// Summed per-infostate L1 distance to the run's first sample.
    pub dist_to_start: T,
    pub eta: T,
}

/// `J(y) = sum_i sum_{x in X_i} rho^{ref^i}(x) [phi*(y(x)) - <ref(x), y(x)>]`.
pub fn lyapunov_j<T: Scalar>(
    game: &GameTree<T>,
    reference: &Policy<T>,
    scores: &[Vec<T>],
    regularizer: Regularizer,
) -> Result<T> {
    let reach = reach_probs(game, reference)?;
    let mut total = T::zero();
    for (x, y) in scores.iter().enumerate() {
        let w = reach.infostate_own(game, x);
        if w == T::zero() {
            continue;
        }
        let inner: T = reference.get(x).iter().zip(y).map(|(&p, &v)| p * v).sum();
        total += w * (regularizer.conjugate(y) - inner);
    }
    Ok(total)
}

/// Which reach weights [`xi_divergence_weighted`] sums over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XiWeighting {
    /// `sum_x rho^{mu^i}(x) KL(mu(x), pi(x))`.
    #[default]
    Infostate,
    /// `sum_{h in H_i} rho^{mu^i}(h) KL(mu(x(h)), pi(x(h)))`: each infostate
    /// counted once per member history.
    History,
}

impl From<DenominatorMode> for XiWeighting {
    fn from(mode: DenominatorMode) -> Self {
        match mode {
            DenominatorMode::PerHistory => XiWeighting::History,
            DenominatorMode::PerInfostate => XiWeighting::Infostate,
        }
    }
}

/// `Xi(mu, pi)` with infostate weighting. Infinite when `pi` misses part of
/// `mu`'s support at a `mu`-reached infostate.
pub fn xi_divergence<T: Scalar>(game: &GameTree<T>, mu: &Policy<T>, pi: &Policy<T>) -> Result<T> {
    xi_divergence_weighted(game, mu, pi, XiWeighting::Infostate)
}

pub fn xi_divergence_weighted<T: Scalar>(
    game: &GameTree<T>,
    mu: &Policy<T>,
    pi: &Policy<T>,
    weighting: XiWeighting,
) -> Result<T> {
    pi.check_complete(game)?;
    let reach = reach_probs(game, mu)?;
    let mut total = T::zero();
    for (x, info) in game.infostates().iter().enumerate() {
        let w = match weighting {
            XiWeighting::Infostate => reach.infostate_own(game, x),
            XiWeighting::History => info.histories.iter().map(|&h| reach.own[info.player][h]).sum(),
        };
        if w > T::zero() {
            total += w * kl(mu.get(x), pi.get(x));
        }
    }
    Ok(total)
}

/// Least-squares fit of `ln Xi` against time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit<T> {
    pub slope: T,
    pub intercept: T,
    /// Time range actually fitted (after the transient cut).
    pub t_start: T,
    pub t_end: T,
    /// Root-mean-square residual of the fit in log space.
    pub residual: T,
    pub samples: usize,
}

/// Fraction of the window discarded as start-up transient.
pub const TRANSIENT_FRACTION: f64 = 0.2;

/// Fits `ln value = intercept + slope * t` over `window` (the whole series
/// if `None`) after dropping its first 20%.
pub fn fit_decay_rate<T: Scalar>(times: &[T], values: &[T], window: Option<(T, T)>) -> Result<RateFit<T>> {
    if times.len() != values.len() {
        return Err(Error::Fit("times and values differ in length".into()));
    }
    if times.is_empty() {
        return Err(Error::Fit("empty series".into()));
    }
    let (lo, hi) = window.unwrap_or((times[0], times[times.len() - 1]));
    let cut = lo + (hi - lo) * T::lit(TRANSIENT_FRACTION);
    let pts: Vec<(T, T)> = times
        .iter()
        .zip(values)
        .filter(|(&t, _)| t >= cut && t <= hi)
        .map(|(&t, &v)| (t, v))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Fit(format!("{} samples in window, need at least 3", pts.len())));
    }
    if let Some(&(t, v)) = pts.iter().find(|(_, v)| !(*v > T::zero())) {
        return Err(Error::Fit(format!("non-positive value {v} at t = {t}")));
    }
    let n = T::count(pts.len());
    let mt = pts.iter().map(|p| p.0).sum::<T>() / n;
    let ml = pts.iter().map(|p| p.1.ln()).sum::<T>() / n;
    let sxx: T = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let sxy: T = pts.iter().map(|p| (p.0 - mt) * (p.1.ln() - ml)).sum();
    if !(sxx > T::zero()) {
        return Err(Error::Fit("window spans a single time".into()));
    }
    let slope = sxy / sxx;
    let intercept = ml - slope * mt;
    let sse: T = pts
        .iter()
        .map(|p| {
            let r = p.1.ln() - intercept - slope * p.0;
            r * r
        })
        .sum();
    Ok(RateFit {
        slope,
        intercept,
        t_start: pts[0].0,
        t_end: pts[pts.len() - 1].0,
        residual: (sse / n).sqrt(),
        samples: pts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recurrence<T> {
    pub min_distance: T,
    pub time: T,
}

/// Smallest distance back to the start among samples strictly after `t0`;
/// the earliest such sample wins ties. `None` if no sample lies after `t0`.
pub fn recurrence_stat<T: Scalar>(trajectory: &[DiagnosticsRecord<T>], t0: T) -> Option<Recurrence<T>> {
    trajectory
        .iter()
        .filter(|r| r.time > t0)
        .fold(None, |best: Option<Recurrence<T>>, r| match best {
            Some(b) if b.min_distance <= r.dist_to_start => Some(b),
            _ => Some(Recurrence {
                min_distance: r.dist_to_start,
                time: r.time,
            }),
        })
}

/// Builds [`DiagnosticsRecord`]s from dynamics states.
#[derive(Debug, Clone)]
pub struct Recorder<'g, T> {
    game: &'g GameTree<T>,
    reference: Option<Policy<T>>,
    weighting: XiWeighting,
    start: Option<Policy<T>>,
    pub records: Vec<DiagnosticsRecord<T>>,
}

impl<'g, T: Scalar> Recorder<'g, T> {
    pub fn new(game: &'g GameTree<T>) -> Self {
        Self {
            game,
            reference: None,
            weighting: XiWeighting::Infostate,
            start: None,
            records: Vec::new(),
        }
    }

    pub fn with_reference(mut self, reference: Policy<T>) -> Result<Self> {
        reference.check_complete(self.game)?;
        reference.check_simplex()?;
        self.reference = Some(reference);
        Ok(self)
    }

    pub fn with_weighting(mut self, weighting: XiWeighting) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn observe(&mut self, state: &DynamicsState<T>, spec: &TransformSpec<T>) -> Result<()> {
        let game = self.game;
        let policy = state.policy();
        let start = self.start.get_or_insert_with(|| policy.clone());
        let dist_to_start = policy.l1_distance(start);
        let (lyapunov, xi_ref) = match &self.reference {
            Some(r) => (
                Some(lyapunov_j(game, r, state.scores(), state.regularizer())?),
                Some(xi_divergence_weighted(game, r, policy, self.weighting)?),
            ),
            None => (None, None),
        };
        self.records.push(DiagnosticsRecord {
            step: state.steps(),
            time: state.time(),
            nashconv: nash_conv(game, policy)?,
            values: root_values(game, policy)?,
            lyapunov,
            xi_ref,
            dist_to_start,
            eta: spec.eta(),
        });
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub records: Vec<DiagnosticsRecord<T>>,
    pub outcome: RunOutcome,
}

/// [`run`] with a [`Recorder`] attached.
pub fn run_recorded<T: Scalar>(
    game: &GameTree<T>,
    spec: &mut TransformSpec<T>,
    state: &mut DynamicsState<T>,
    opts: &RunOptions<T>,
    reference: Option<&Policy<T>>,
) -> Result<Trajectory<T>> {
    let mut rec = Recorder::new(game);
    if let Some(r) = reference {
        rec = rec.with_reference(r.clone())?;
    }
    let outcome = run(game, spec, state, opts, |s, sp| rec.observe(s, sp))?;
    Ok(Trajectory {
        records: rec.records,
        outcome,
    })
}

fn softmax_log(logits: &[f64]) -> Vec<f64> {
    Regularizer::Entropy.mirror(logits)
}

/// Regularized equilibrium of a two-player zero-sum matrix game:
/// `p ∝ mu_row exp(A q / eta)`, `q ∝ mu_col exp(-A^T p / eta)`.
///
/// The column response is solved in closed form for each row iterate and
/// the row player follows a log-space damped update whose step halves
/// whenever the fixed-point residual grows. Returns `(p, q)`.
pub fn matrix_qre(
    payoff: &[Vec<f64>],
    eta: f64,
    mu_row: &[f64],
    mu_col: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    let rows = payoff.len();
    let cols = payoff.first().map_or(0, Vec::len);
    if rows == 0 || mu_row.len() != rows || mu_col.len() != cols || payoff.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidArgument("payoff and anchor dimensions disagree".into()));
    }
    if mu_row.iter().chain(mu_col).any(|&m| !(m > 0.0)) {
        return Err(Error::Domain("anchors must be interior".into()));
    }
    let col_response = |p: &[f64]| {
        let logits: Vec<f64> = (0..cols)
            .map(|c| mu_col[c].ln() - (0..rows).map(|r| payoff[r][c] * p[r]).sum::<f64>() / eta)
            .collect();
        softmax_log(&logits)
    };
    let row_logits = |q: &[f64]| -> Vec<f64> {
        (0..rows)
            .map(|r| mu_row[r].ln() + (0..cols).map(|c| payoff[r][c] * q[c]).sum::<f64>() / eta)
            .collect()
    };
    let mut p = mu_row.to_vec();
    let mut step = 0.5;
    let mut residual = f64::INFINITY;
    for _ in 0..1_000_000 {
        let q = col_response(&p);
        let target = softmax_log(&row_logits(&q));
        let r = crate::scalar::l1_distance(&p, &target);
        if r < tol {
            return Ok((p, q));
        }
        if r > residual {
            step *= 0.5;
        }
        residual = r;
        let mixed: Vec<f64> = p
            .iter()
            .zip(&target)
            .map(|(&a, &b)| (1.0 - step) * a.ln() + step * b.ln())
            .collect();
        p = softmax_log(&mixed);
    }
    Err(Error::Fit(format!("regularized equilibrium oracle did not converge (residual {residual:e})")))
}
