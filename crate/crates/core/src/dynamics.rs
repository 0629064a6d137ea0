//! Follow-the-regularized-leader flow on per-infostate scores.
//!
//! Scores accumulate the counterfactual-weighted infostate Q-values
//! `rho^{pi^{-i}}(x) Q^i_pi(x, a)`; the policy is the regularized argmax of
//! the scores, block by block. In bounded mode the field is differenced
//! against the first action of each infostate so that score stays at zero.

use crate::error::{Error, Result};
use crate::game::GameTree;
use crate::policy::Policy;
use crate::scalar::{kl, Scalar};
use crate::transform::TransformSpec;
use crate::values::{value_tables, RewardFn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Regularizer {
    /// Negative entropy; the mirror map is softmax.
    #[default]
    Entropy,
    /// Squared Euclidean norm; the mirror map projects `y / 2` onto the simplex.
    L2,
}

impl Regularizer {
    /// Mirror map `Gamma(y) = argmax_p <y, p> - phi(p)` over the simplex.
    pub fn mirror<T: Scalar>(&self, y: &[T]) -> Vec<T> {
        match self {
            Regularizer::Entropy => {
                let m = y.iter().copied().fold(T::neg_infinity(), T::max);
                let e: Vec<T> = y.iter().map(|&v| (v - m).exp()).collect();
                let s: T = e.iter().copied().sum();
                e.into_iter().map(|v| v / s).collect()
            }
            Regularizer::L2 => {
                let half: Vec<T> = y.iter().map(|&v| v * T::lit(0.5)).collect();
                project_to_simplex(&half)
            }
        }
    }

    /// `phi(p)`: `sum p ln p` or `sum p^2`.
    pub fn phi<T: Scalar>(&self, p: &[T]) -> T {
        match self {
            Regularizer::Entropy => p.iter().filter(|&&v| v > T::zero()).map(|&v| v * v.ln()).sum(),
            Regularizer::L2 => p.iter().map(|&v| v * v).sum(),
        }
    }

    /// Convex conjugate `phi*(y) = <Gamma(y), y> - phi(Gamma(y))`.
    pub fn conjugate<T: Scalar>(&self, y: &[T]) -> T {
        match self {
            Regularizer::Entropy => {
                let m = y.iter().copied().fold(T::neg_infinity(), T::max);
                m + y.iter().map(|&v| (v - m).exp()).sum::<T>().ln()
            }
            Regularizer::L2 => {
                let p = self.mirror(y);
                p.iter().zip(y).map(|(&a, &b)| a * b).sum::<T>() - self.phi(&p)
            }
        }
    }

    /// Bregman divergence `D_phi(p, q)`: KL for entropy, squared distance for l2.
    pub fn bregman<T: Scalar>(&self, p: &[T], q: &[T]) -> T {
        match self {
            Regularizer::Entropy => kl(p, q),
            Regularizer::L2 => p.iter().zip(q).map(|(&a, &b)| (a - b) * (a - b)).sum(),
        }
    }

    /// Scores whose mirror image is `p` (`ln p` or `2 p`).
    pub fn scores_for<T: Scalar>(&self, p: &[T]) -> Vec<T> {
        match self {
            Regularizer::Entropy => p.iter().map(|&v| v.ln()).collect(),
            Regularizer::L2 => p.iter().map(|&v| v + v).collect(),
        }
    }
}

/// Euclidean projection onto the probability simplex (sort-based, exact).
pub fn project_to_simplex<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumsum = T::zero();
    let mut tau = T::zero();
    for (k, &uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - T::one()) / T::count(k + 1);
        if uk - t > T::zero() {
            tau = t;
        }
    }
    v.iter().map(|&x| (x - tau).max(T::zero())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreMode {
    /// Raw cumulative scores `y`.
    #[default]
    PlainY,
    /// Scores relative to the first action of each infostate (`w(x, a_x) = 0`).
    BoundedW,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Explicit Euler.
    #[default]
    Euler,
    /// Explicit trapezoid (second order).
    Heun,
    /// Classical fourth-order Runge-Kutta.
    Rk4,
}

#[derive(Debug, Clone)]
pub struct DynamicsState<T> {
    scores: Vec<Vec<T>>,
    policy: Policy<T>,
    time: T,
    steps: usize,
    mode: ScoreMode,
    regularizer: Regularizer,
}

impl<T: Scalar> DynamicsState<T> {
    /// Zero scores: the uniform policy under either regularizer.
    pub fn new(game: &GameTree<T>, mode: ScoreMode, regularizer: Regularizer) -> Self {
        let scores = game.infostates().iter().map(|x| vec![T::zero(); x.num_actions]).collect();
        Self::assemble(scores, mode, regularizer)
    }

    /// Starts from explicit scores. In bounded mode each block is shifted so
    /// its first entry is zero, which leaves the entropy policy unchanged.
    pub fn with_scores(
        game: &GameTree<T>,
        mode: ScoreMode,
        regularizer: Regularizer,
        mut scores: Vec<Vec<T>>,
    ) -> Result<Self> {
        if scores.len() != game.num_infostates()
            || scores.iter().zip(game.infostates()).any(|(b, x)| b.len() != x.num_actions)
        {
            return Err(Error::InvalidArgument("score blocks do not match the game's infostates".into()));
        }
        if scores.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("scores must be finite".into()));
        }
        if mode == ScoreMode::BoundedW {
            for b in &mut scores {
                let base = b[0];
                b.iter_mut().for_each(|v| *v -= base);
            }
        }
        Ok(Self::assemble(scores, mode, regularizer))
    }

    /// Starts at an interior policy (scores `ln p` for entropy, `2 p` for l2).
    pub fn from_policy(
        game: &GameTree<T>,
        mode: ScoreMode,
        regularizer: Regularizer,
        policy: &Policy<T>,
    ) -> Result<Self> {
        policy.check_complete(game)?;
        if !policy.is_interior_with(T::min_positive_value()) {
            return Err(Error::Domain("initial policy must be interior".into()));
        }
        let scores = policy.blocks().iter().map(|b| regularizer.scores_for(b)).collect();
        Self::with_scores(game, mode, regularizer, scores)
    }

    fn assemble(scores: Vec<Vec<T>>, mode: ScoreMode, regularizer: Regularizer) -> Self {
        let policy = policy_of(&scores, regularizer);
        Self {
            scores,
            policy,
            time: T::zero(),
            steps: 0,
            mode,
            regularizer,
        }
    }

    pub fn scores(&self) -> &[Vec<T>] {
        &self.scores
    }

    pub fn policy(&self) -> &Policy<T> {
        &self.policy
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn mode(&self) -> ScoreMode {
        self.mode
    }

    pub fn regularizer(&self) -> Regularizer {
        self.regularizer
    }
}

fn policy_of<T: Scalar>(scores: &[Vec<T>], regularizer: Regularizer) -> Policy<T> {
    Policy::from_blocks(scores.iter().map(|b| regularizer.mirror(b)).collect())
}

fn field_at<T: Scalar, R: RewardFn<T>>(
    game: &GameTree<T>,
    reward: &R,
    mode: ScoreMode,
    policy: &Policy<T>,
) -> Result<Vec<Vec<T>>> {
    let mut g = value_tables(game, policy, reward)?.counterfactual_q;
    if mode == ScoreMode::BoundedW {
        for b in &mut g {
            let base = b[0];
            b.iter_mut().for_each(|v| *v -= base);
        }
    }
    Ok(g)
}

/// Score-shaped field `rho^{pi^{-i}}(x) Q^i_pi(x, a)` at the state's policy,
/// differenced against the first action in bounded mode.
pub fn vector_field<T: Scalar, R: RewardFn<T>>(
    game: &GameTree<T>,
    reward: &R,
    state: &DynamicsState<T>,
) -> Result<Vec<Vec<T>>> {
    field_at(game, reward, state.mode, &state.policy)
}

fn axpy<T: Scalar>(y: &[Vec<T>], k: &[Vec<T>], h: T) -> Vec<Vec<T>> {
    y.iter()
        .zip(k)
        .map(|(yb, kb)| yb.iter().zip(kb).map(|(&a, &b)| a + h * b).collect())
        .collect()
}

fn check_finite<T: Scalar>(game: &GameTree<T>, step: usize, blocks: &[Vec<T>]) -> Result<()> {
    for (x, b) in blocks.iter().enumerate() {
        if let Some(action) = b.iter().position(|v| !v.is_finite()) {
            let info = game.infostate(x);
            return Err(Error::Integration {
                step,
                player: info.player,
                infostate: info.index,
                action,
            });
        }
    }
    Ok(())
}

/// Advances the state by one step of size `dt`.
pub fn step<T: Scalar, R: RewardFn<T>>(
    game: &GameTree<T>,
    reward: &R,
    state: &mut DynamicsState<T>,
    dt: T,
    integrator: Integrator,
) -> Result<()> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let mode = state.mode;
    let reg = state.regularizer;
    let n = state.steps;
    let eval = |scores: &[Vec<T>], policy: Option<&Policy<T>>| -> Result<Vec<Vec<T>>> {
        let owned;
        let policy = match policy {
            Some(p) => p,
            None => {
                owned = policy_of(scores, reg);
                &owned
            }
        };
        let k = field_at(game, reward, mode, policy)?;
        check_finite(game, n, &k)?;
        Ok(k)
    };
    let y = &state.scores;
    let next = match integrator {
        Integrator::Euler => {
            let k1 = eval(y, Some(&state.policy))?;
            axpy(y, &k1, dt)
        }
        Integrator::Heun => {
            let k1 = eval(y, Some(&state.policy))?;
            let k2 = eval(&axpy(y, &k1, dt), None)?;
            let half = dt * T::lit(0.5);
            axpy(&axpy(y, &k1, half), &k2, half)
        }
        Integrator::Rk4 => {
            let half = dt * T::lit(0.5);
            let k1 = eval(y, Some(&state.policy))?;
            let k2 = eval(&axpy(y, &k1, half), None)?;
            let k3 = eval(&axpy(y, &k2, half), None)?;
            let k4 = eval(&axpy(y, &k3, dt), None)?;
            let sixth = dt / T::lit(6.0);
            let third = dt / T::lit(3.0);
            axpy(&axpy(&axpy(&axpy(y, &k1, sixth), &k2, third), &k3, third), &k4, sixth)
        }
    };
    check_finite(game, n, &next)?;
    state.policy = policy_of(&next, reg);
    state.scores = next;
    state.time += dt;
    state.steps += 1;
    Ok(())
}

/// Time-varying regularization strength for long runs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EtaSchedule<T> {
    /// Keep the transform's own `eta`.
    #[default]
    Constant,
    /// `eta(t) = target + (max - target) * 2^(-t / half_life)`.
    Decay { eta_max: T, eta_target: T, half_life: T },
}

impl<T: Scalar> EtaSchedule<T> {
    pub fn eta_at(&self, t: T) -> Option<T> {
        match *self {
            EtaSchedule::Constant => None,
            EtaSchedule::Decay {
                eta_max,
                eta_target,
                half_life,
            } => Some(eta_target + (eta_max - eta_target) * T::lit(2.0).powf(-t / half_life)),
        }
    }

    fn check(&self) -> Result<()> {
        if let EtaSchedule::Decay {
            eta_max,
            eta_target,
            half_life,
        } = *self
        {
            if !(eta_max > T::zero() && eta_target > T::zero() && half_life > T::zero()) {
                return Err(Error::InvalidArgument(
                    "eta decay needs positive eta_max, eta_target and half_life".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions<T> {
    pub dt: T,
    pub steps: usize,
    pub integrator: Integrator,
    /// Observe every `stride` steps (and after the last step).
    pub stride: usize,
    pub eta_schedule: EtaSchedule<T>,
}

impl<T: Scalar> RunOptions<T> {
    pub fn new(dt: T, steps: usize) -> Self {
        Self {
            dt,
            steps,
            integrator: Integrator::Euler,
            stride: 100,
            eta_schedule: EtaSchedule::Constant,
        }
    }

    pub fn integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn eta_schedule(mut self, schedule: EtaSchedule<T>) -> Self {
        self.eta_schedule = schedule;
        self
    }
}

/// How a run ended. A failed step leaves the state at the last good step.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub steps: usize,
    pub aborted: Option<Error>,
}

/// Integrates `opts.steps` steps under `spec`, calling `observe` on the
/// initial state, every `opts.stride` steps and after the final step.
pub fn run<T, F>(
    game: &GameTree<T>,
    spec: &mut TransformSpec<T>,
    state: &mut DynamicsState<T>,
    opts: &RunOptions<T>,
    mut observe: F,
) -> Result<RunOutcome>
where
    T: Scalar,
    F: FnMut(&DynamicsState<T>, &TransformSpec<T>) -> Result<()>,
{
    if !(opts.dt > T::zero()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {}", opts.dt)));
    }
    if opts.stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    opts.eta_schedule.check()?;
    if let Some(eta) = opts.eta_schedule.eta_at(state.time) {
        spec.set_eta(eta);
    }
    observe(state, spec)?;
    for n in 1..=opts.steps {
        if let Some(eta) = opts.eta_schedule.eta_at(state.time) {
            spec.set_eta(eta);
        }
        if let Err(e) = step(game, &*spec, state, opts.dt, opts.integrator) {
            if n > 1 && (n - 1) % opts.stride != 0 {
                observe(state, spec)?;
            }
            return Ok(RunOutcome {
                steps: n - 1,
                aborted: Some(e),
            });
        }
        if n % opts.stride == 0 || n == opts.steps {
            observe(state, spec)?;
        }
    }
    Ok(RunOutcome {
        steps: opts.steps,
        aborted: None,
    })
}

/// One diagonal entry of the bounded field's Jacobian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagonalPartial<T> {
    pub player: usize,
    /// Per-player infostate index.
    pub infostate: usize,
    pub action: usize,
    pub value: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport<T> {
    pub partials: Vec<DiagonalPartial<T>>,
    /// Sum of the diagonal partials: the numerical divergence.
    pub trace: T,
}

impl<T: Scalar> DivergenceReport<T> {
    pub fn max_abs(&self) -> T {
        self.partials.iter().map(|p| p.value.abs()).fold(T::zero(), T::max)
    }
}

/// Central finite differences of each free bounded-mode coordinate's field
/// with respect to itself. Only defined for bounded scores and a
/// policy-independent reward.
pub fn divergence_check<T: Scalar, R: RewardFn<T>>(
    game: &GameTree<T>,
    reward: &R,
    state: &DynamicsState<T>,
    probe_eps: T,
) -> Result<DivergenceReport<T>> {
    if state.mode != ScoreMode::BoundedW {
        return Err(Error::UnsupportedMode("plain score"));
    }
    if !reward.is_policy_independent() {
        return Err(Error::UnsupportedVariant("a policy-independent reward"));
    }
    if !(probe_eps > T::zero()) {
        return Err(Error::InvalidArgument("probe_eps must be positive".into()));
    }
    let mut partials = Vec::new();
    let mut trace = T::zero();
    let mut scores = state.scores.clone();
    for x in 0..scores.len() {
        let info = game.infostate(x);
        for a in 1..scores[x].len() {
            let orig = scores[x][a];
            scores[x][a] = orig + probe_eps;
            let plus = field_at(game, reward, state.mode, &policy_of(&scores, state.regularizer))?[x][a];
            scores[x][a] = orig - probe_eps;
            let minus = field_at(game, reward, state.mode, &policy_of(&scores, state.regularizer))?[x][a];
            scores[x][a] = orig;
            let value = (plus - minus) / (probe_eps + probe_eps);
            trace += value;
            partials.push(DiagonalPartial {
                player: info.player,
                infostate: info.index,
                action: a,
                value,
            });
        }
    }
    Ok(DivergenceReport { partials, trace })
}

/// Runs the plain and bounded flows side by side from the same scores with
/// explicit Euler and returns the largest per-infostate L1 policy gap seen.
pub fn equivalence_check<T: Scalar, R: RewardFn<T>>(
    game: &GameTree<T>,
    reward: &R,
    regularizer: Regularizer,
    initial: Option<Vec<Vec<T>>>,
    dt: T,
    steps: usize,
) -> Result<T> {
    if !reward.is_policy_independent() {
        return Err(Error::UnsupportedVariant("a policy-independent reward"));
    }
    let (mut plain, mut bounded) = match initial {
        Some(y) => (
            DynamicsState::with_scores(game, ScoreMode::PlainY, regularizer, y.clone())?,
            DynamicsState::with_scores(game, ScoreMode::BoundedW, regularizer, y)?,
        ),
        None => (
            DynamicsState::new(game, ScoreMode::PlainY, regularizer),
            DynamicsState::new(game, ScoreMode::BoundedW, regularizer),
        ),
    };
    let gap = |a: &DynamicsState<T>, b: &DynamicsState<T>| {
        a.policy
            .blocks()
            .iter()
            .zip(b.policy.blocks())
            .map(|(p, q)| crate::scalar::l1_distance(p, q))
            .fold(T::zero(), T::max)
    };
    let mut worst = gap(&plain, &bounded);
    for _ in 0..steps {
        step(game, reward, &mut plain, dt, Integrator::Euler)?;
        step(game, reward, &mut bounded, dt, Integrator::Euler)?;
        worst = worst.max(gap(&plain, &bounded));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{build_kuhn_poker, build_matrix_game};
    use crate::transform::{DenominatorMode, TransformVariant};
    use crate::values::BaseReward;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn biased_mp() -> GameTree<f64> {
        build_matrix_game(&[vec![1.0, -1.0], vec![-1.0, 10.0]]).unwrap()
    }

    #[test]
    fn uniform_field_in_biased_mp() {
        let g = biased_mp();
        let s = DynamicsState::new(&g, ScoreMode::PlainY, Regularizer::Entropy);
        let f = vector_field(&g, &BaseReward, &s).unwrap();
        assert_eq!(f[0], vec![0.0, 4.5]);
        assert_eq!(f[1], vec![0.0, -4.5]);
    }

    #[test]
    fn single_euler_step_example() {
        let g = biased_mp();
        let mut s = DynamicsState::new(&g, ScoreMode::PlainY, Regularizer::Entropy);
        step(&g, &BaseReward, &mut s, 0.1, Integrator::Euler).unwrap();
        assert!((s.scores()[0][1] - 0.45).abs() < 1e-15);
        let e = 0.45f64.exp();
        assert!((s.policy().prob(0, 0) - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((s.policy().prob(0, 0) - 0.38936).abs() < 1e-5);
        assert!((s.time() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_field_step_keeps_uniform() {
        let g = build_matrix_game(&[vec![0.0f64, 0.0], vec![0.0, 0.0]]).unwrap();
        let mut s = DynamicsState::new(&g, ScoreMode::PlainY, Regularizer::Entropy);
        step(&g, &BaseReward, &mut s, 0.5, Integrator::Rk4).unwrap();
        assert_eq!(s.policy(), &Policy::uniform(&g));
    }

    #[test]
    fn l2_mirror_example() {
        let p = Regularizer::L2.mirror(&[0.2f64, -0.1]);
        assert!((p[0] - 0.575).abs() < 1e-15 && (p[1] - 0.425).abs() < 1e-15);
        let corner = Regularizer::L2.mirror(&[10.0f64, -10.0, 0.0]);
        assert_eq!(corner, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn bounded_field_vanishes_on_first_action_and_at_interior_nash() {
        let g = biased_mp();
        let nash = Policy::from_blocks(vec![vec![11.0 / 13.0, 2.0 / 13.0]; 2]);
        let s = DynamicsState::from_policy(&g, ScoreMode::BoundedW, Regularizer::Entropy, &nash).unwrap();
        let f = vector_field(&g, &BaseReward, &s).unwrap();
        for b in &f {
            assert_eq!(b[0], 0.0);
            assert!(b[1].abs() < 1e-9);
        }
        assert!(s.policy().max_abs_diff(&nash) < 1e-15);
    }

    #[test]
    fn divergence_check_refuses_plain_mode_and_transformed_rewards() {
        let g = biased_mp();
        let plain = DynamicsState::new(&g, ScoreMode::PlainY, Regularizer::Entropy);
        assert!(matches!(
            divergence_check(&g, &BaseReward, &plain, 1e-5),
            Err(Error::UnsupportedMode(_))
        ));
        let bounded = DynamicsState::new(&g, ScoreMode::BoundedW, Regularizer::Entropy);
        let zs = TransformSpec::new(&g, TransformVariant::ZeroSum, 1.0, Policy::uniform(&g), DenominatorMode::PerInfostate)
            .unwrap();
        assert!(matches!(
            divergence_check(&g, &zs, &bounded, 1e-5),
            Err(Error::UnsupportedVariant(_))
        ));
        assert!(divergence_check(&g, &TransformSpec::none(&g), &bounded, 1e-5).is_ok());
    }

    #[test]
    fn divergence_free_on_kuhn() {
        let g = build_kuhn_poker::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w: Vec<Vec<f64>> = g
            .infostates()
            .iter()
            .map(|x| (0..x.num_actions).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let s = DynamicsState::with_scores(&g, ScoreMode::BoundedW, Regularizer::Entropy, w).unwrap();
        let r = divergence_check(&g, &BaseReward, &s, 1e-5).unwrap();
        assert_eq!(r.partials.len(), 12);
        assert!(r.max_abs() < 1e-6 && r.trace.abs() < 1e-5);
    }

    #[test]
    fn mode_equivalence_on_short_runs() {
        let g = biased_mp();
        assert_eq!(equivalence_check(&g, &BaseReward, Regularizer::Entropy, None, 0.01, 1).unwrap(), 0.0);
        assert!(equivalence_check(&g, &BaseReward, Regularizer::Entropy, None, 0.01, 2000).unwrap() <= 1e-9);
        let k = build_kuhn_poker::<f64>();
        assert!(equivalence_check(&k, &BaseReward, Regularizer::Entropy, None, 0.01, 300).unwrap() <= 1e-8);
    }

    #[test]
    fn run_observes_on_stride_and_final_step() {
        let g = biased_mp();
        let mut spec = TransformSpec::none(&g);
        let mut s = DynamicsState::new(&g, ScoreMode::PlainY, Regularizer::Entropy);
        let mut seen = Vec::new();
        let out = run(&g, &mut spec, &mut s, &RunOptions::new(0.01, 250).stride(100), |st, _| {
            seen.push(st.steps());
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![0, 100, 200, 250]);
        assert_eq!(out, RunOutcome { steps: 250, aborted: None });

        let mut seen = 0;
        let mut s = DynamicsState::new(&g, ScoreMode::PlainY, Regularizer::Entropy);
        run(&g, &mut spec, &mut s, &RunOptions::new(0.01, 0), |_, _| {
            seen += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, 1);
    }

    #[test]
    fn run_is_deterministic() {
        let g = build_kuhn_poker::<f64>();
        let go = || {
            let mut spec =
                TransformSpec::new(&g, TransformVariant::Monotone, 0.3, Policy::uniform(&g), DenominatorMode::PerInfostate)
                    .unwrap();
            let mut s = DynamicsState::new(&g, ScoreMode::PlainY, Regularizer::Entropy);
            run(&g, &mut spec, &mut s, &RunOptions::new(0.05, 300), |_, _| Ok(())).unwrap();
            s.scores().to_vec()
        };
        let a = go();
        let b = go();
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn eta_decay_schedule() {
        let sched = EtaSchedule::Decay {
            eta_max: 1.0f64,
            eta_target: 0.1,
            half_life: 2.0,
        };
        assert_eq!(sched.eta_at(0.0), Some(1.0));
        assert!((sched.eta_at(2.0).unwrap() - 0.55).abs() < 1e-15);
        let g = biased_mp();
        let mut spec =
            TransformSpec::new(&g, TransformVariant::ZeroSum, 1.0, Policy::uniform(&g), DenominatorMode::PerInfostate).unwrap();
        let mut s = DynamicsState::new(&g, ScoreMode::PlainY, Regularizer::Entropy);
        run(&g, &mut spec, &mut s, &RunOptions::new(0.01, 400).eta_schedule(sched), |_, _| Ok(())).unwrap();
        assert!((spec.eta() - sched.eta_at(3.99).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn higher_order_integrators_agree_on_short_horizon() {
        let g = biased_mp();
        let mut fine = DynamicsState::new(&g, ScoreMode::PlainY, Regularizer::Entropy);
        for _ in 0..1000 {
            step(&g, &BaseReward, &mut fine, 0.001, Integrator::Rk4).unwrap();
        }
        for (integrator, tol) in [(Integrator::Euler, 5e-2), (Integrator::Heun, 1e-3), (Integrator::Rk4, 1e-6)] {
            let mut s = DynamicsState::new(&g, ScoreMode::PlainY, Regularizer::Entropy);
            for _ in 0..100 {
                step(&g, &BaseReward, &mut s, 0.01, integrator).unwrap();
            }
            assert!(s.policy().max_abs_diff(fine.policy()) < tol, "{integrator:?}");
        }
    }

    #[test]
    fn transformed_runs_from_different_starts_meet() {
        let g = biased_mp();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut finals = Vec::new();
        for _ in 0..2 {
            let start = Policy::random_interior(&g, &mut rng, 0.05);
            let mut spec =
                TransformSpec::new(&g, TransformVariant::Monotone, 1.0, Policy::uniform(&g), DenominatorMode::PerInfostate)
                    .unwrap();
            let mut s = DynamicsState::from_policy(&g, ScoreMode::PlainY, Regularizer::Entropy, &start).unwrap();
            run(&g, &mut spec, &mut s, &RunOptions::new(0.01, 5000), |_, _| Ok(())).unwrap();
            finals.push(s.policy().clone());
        }
        assert!(finals[0].l1_distance(&finals[1]) < 1e-4);
    }

    proptest! {
        #[test]
        fn entropy_mirror_is_shift_invariant(y in prop::collection::vec(-20.0f64..20.0, 1..6), c in -50.0f64..50.0) {
            let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
            let a = Regularizer::Entropy.mirror(&y);
            let b = Regularizer::Entropy.mirror(&shifted);
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }

        #[test]
        fn conjugate_consistency(y in prop::collection::vec(-5.0f64..5.0, 1..6)) {
            for reg in [Regularizer::Entropy, Regularizer::L2] {
                let p = reg.mirror(&y);
                let inner: f64 = p.iter().zip(&y).map(|(a, b)| a * b).sum();
                prop_assert!((reg.conjugate(&y) - inner + reg.phi(&p)).abs() < 1e-12);
            }
        }

        #[test]
        fn mirror_lands_on_simplex(y in prop::collection::vec(-5.0f64..5.0, 1..8)) {
            for reg in [Regularizer::Entropy, Regularizer::L2] {
                let p = reg.mirror(&y);
                prop_assert!(p.iter().all(|&v| v >= 0.0));
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn l2_mirror_maximizes_objective(y in prop::collection::vec(-3.0f64..3.0, 2..5), seed in any::<u64>()) {
            let reg = Regularizer::L2;
            let p = reg.mirror(&y);
            let obj = |q: &[f64]| q.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() - reg.phi(q);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..20 {
                let w: Vec<f64> = (0..y.len()).map(|_| rng.gen::<f64>()).collect();
                let s: f64 = w.iter().sum();
                let q: Vec<f64> = w.iter().map(|v| v / s).collect();
                prop_assert!(obj(&q) <= obj(&p) + 1e-12);
            }
        }
    }
}
