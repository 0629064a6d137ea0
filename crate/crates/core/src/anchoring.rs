//! Re-anchoring iteration: solve the monotone-transformed game anchored at
//! the previous solution, repeatedly, so the anchors approach a Nash
//! equilibrium of the base game.

use crate::diagnostics::{xi_divergence_weighted, XiWeighting};
use crate::dynamics::{step, DynamicsState, Integrator, Regularizer, ScoreMode};
use crate::error::{Error, Result};
use crate::game::GameTree;
use crate::policy::Policy;
use crate::scalar::Scalar;
use crate::transform::{DenominatorMode, TransformSpec, TransformVariant, LOG_PROB_FLOOR};
use crate::values::{nash_conv, reach_probs, value_tables, BaseReward};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Switch to the new anchor at once.
    #[default]
    Hard,
    /// Blend the old and new anchors' log-ratios linearly over the first half
    /// of each period, then hold the new anchor.
    LinearHalf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnchorSchedule {
    pub steps_per_anchor: usize,
    pub anchors: usize,
    pub interpolation: Interpolation,
}

impl AnchorSchedule {
    pub fn new(steps_per_anchor: usize, anchors: usize, interpolation: Interpolation) -> Result<Self> {
        if steps_per_anchor == 0 || anchors == 0 {
            return Err(Error::InvalidArgument(
                "anchor schedule needs at least one anchor and one step per anchor".into(),
            ));
        }
        Ok(Self {
            steps_per_anchor,
            anchors,
            interpolation,
        })
    }
}

/// Integration settings shared by [`solve_transformed`] and [`iterate_anchors`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    pub dt: T,
    pub integrator: Integrator,
    pub regularizer: Regularizer,
    pub denominator: DenominatorMode,
    /// Stop an inner solve once a step changes the policy by less than this (L1).
    pub early_exit: Option<T>,
}

impl<T: Scalar> SolverOptions<T> {
    pub fn new(dt: T) -> Self {
        Self {
            dt,
            integrator: Integrator::Euler,
            regularizer: Regularizer::Entropy,
            denominator: DenominatorMode::PerInfostate,
            early_exit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome<T> {
    pub policy: Policy<T>,
    /// L1 policy change over the last 1% of the steps taken.
    pub residual: T,
    pub steps: usize,
}

fn snapshot<T: Scalar>(policy: &Policy<T>) -> Policy<T> {
    policy.floored(T::lit(LOG_PROB_FLOOR))
}

/// Runs the flow under the monotone transform anchored at `anchor` for
/// `budget` steps from zero scores.
pub fn solve_transformed<T: Scalar>(
    game: &GameTree<T>,
    eta: T,
    anchor: &Policy<T>,
    budget: usize,
    opts: &SolverOptions<T>,
) -> Result<SolveOutcome<T>> {
    let spec = TransformSpec::new(game, TransformVariant::Monotone, eta, anchor.clone(), opts.denominator)?;
    let mut state = DynamicsState::new(game, ScoreMode::PlainY, opts.regularizer);
    let window = (budget / 100).max(1);
    let mut history: std::collections::VecDeque<Policy<T>> = std::collections::VecDeque::with_capacity(window + 1);
    history.push_back(state.policy().clone());
    for _ in 0..budget {
        step(game, &spec, &mut state, opts.dt, opts.integrator)?;
        let change = state.policy().l1_distance(history.back().expect("non-empty"));
        history.push_back(state.policy().clone());
        if history.len() > window + 1 {
            history.pop_front();
        }
        if opts.early_exit.is_some_and(|tol| change < tol) {
            break;
        }
    }
    let residual = state.policy().l1_distance(history.front().expect("non-empty"));
    Ok(SolveOutcome {
        policy: state.policy().clone(),
        residual,
        steps: state.steps(),
    })
}

/// Terms of the per-anchor decomposition of the change in `Xi(pi*, .)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorDecomposition<T> {
    /// `V_{pi_k} - V_{pi*^i, pi_k^-i} - V_{pi_k^i, pi*^-i} + V_{pi*}`, per player.
    pub m: Vec<T>,
    /// `V_{pi_k^i, pi*^-i} - V_{pi*}`, per player.
    pub delta: Vec<T>,
    /// Own-reach weighted `<pi* - pi_k, counterfactual Q>` under the
    /// transform anchored at `pi_{k-1}`, per player.
    pub kappa: Vec<T>,
    pub xi_ref_current: T,
    pub xi_ref_previous: T,
    /// `Xi(pi_k, pi_{k-1})` from the KL sums.
    pub xi_step: T,
    /// `Xi(pi*, pi_k) - Xi(pi*, pi_{k-1})`.
    pub lhs: T,
    /// Right-hand side with the step term taken from value differences.
    pub rhs: T,
    pub residual: T,
}

fn require_positive<T: Scalar>(game: &GameTree<T>, policy: &Policy<T>, what: &str) -> Result<()> {
    policy.check_complete(game)?;
    policy.check_simplex()?;
    if !policy.is_interior_with(T::min_positive_value()) {
        return Err(Error::Domain(format!("{what} must be interior")));
    }
    Ok(())
}

/// Evaluates both sides of
/// `Xi(pi*, pi_k) - Xi(pi*, pi_{k-1}) = -Xi(pi_k, pi_{k-1}) + (1/eta) sum_i (m + delta + kappa)`.
///
/// The left side uses KL sums. On the right, `Xi(pi_k, pi_{k-1})` is
/// recovered as `(1/eta) sum_i (V_base - V_transformed)` at `pi_k`, so the two
/// sides share no KL code. `pi*` may sit on the boundary of the simplex;
/// `pi_{k-1}` and `pi_k` must be interior.
pub fn lemma6_decomposition<T: Scalar>(
    game: &GameTree<T>,
    eta: T,
    denominator: DenominatorMode,
    pi_star: &Policy<T>,
    previous: &Policy<T>,
    current: &Policy<T>,
) -> Result<AnchorDecomposition<T>> {
    pi_star.check_complete(game)?;
    pi_star.check_simplex()?;
    require_positive(game, previous, "previous anchor")?;
    require_positive(game, current, "current policy")?;
    let np = game.num_players();
    let spec = TransformSpec::from_snapshot(game, TransformVariant::Monotone, eta, previous.clone(), denominator)?;

    let v_cur = value_tables(game, current, &BaseReward)?.root_values();
    let v_star = value_tables(game, pi_star, &BaseReward)?.root_values();
    let transformed = value_tables(game, current, &spec)?;
    let star_reach = reach_probs(game, pi_star)?;

    let mut m = Vec::with_capacity(np);
    let mut delta = Vec::with_capacity(np);
    let mut kappa = vec![T::zero(); np];
    let mut step_value = T::zero();
    for i in 0..np {
        let star_vs_cur = value_tables(game, &pi_star.splice(game, i, current), &BaseReward)?.root_value(i);
        let cur_vs_star = value_tables(game, &current.splice(game, i, pi_star), &BaseReward)?.root_value(i);
        m.push(v_cur[i] - star_vs_cur - cur_vs_star + v_star[i]);
        delta.push(cur_vs_star - v_star[i]);
        step_value += v_cur[i] - transformed.root_value(i);
    }
    for (x, info) in game.infostates().iter().enumerate() {
        let w = star_reach.infostate_own(game, x);
        if w == T::zero() {
            continue;
        }
        let inner: T = (0..info.num_actions)
            .map(|a| (pi_star.prob(x, a) - current.prob(x, a)) * transformed.counterfactual_q[x][a])
            .sum();
        kappa[info.player] += w * inner;
    }
    step_value /= eta;

    let weighting = XiWeighting::from(denominator);
    let xi_ref_current = xi_divergence_weighted(game, pi_star, current, weighting)?;
    let xi_ref_previous = xi_divergence_weighted(game, pi_star, previous, weighting)?;
    let xi_step = xi_divergence_weighted(game, current, previous, weighting)?;
    let lhs = xi_ref_current - xi_ref_previous;
    let sum: T = (0..np).map(|i| m[i] + delta[i] + kappa[i]).sum();
    let rhs = -step_value + sum / eta;
    Ok(AnchorDecomposition {
        m,
        delta,
        kappa,
        xi_ref_current,
        xi_ref_previous,
        xi_step,
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// Per-anchor record of [`iterate_anchors`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorStep<T> {
    pub k: usize,
    pub policy: Policy<T>,
    /// Exploitability of `pi_k` against the base reward.
    pub nashconv: T,
    pub xi_to_ref: Option<T>,
    /// `Xi(pi_k, pi_{k-1})`.
    pub xi_step: T,
    /// Present when a reference was supplied.
    pub decomposition: Option<AnchorDecomposition<T>>,
    /// Steps actually taken for this anchor (fewer with early exit).
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorRun<T> {
    /// `pi_0`, the uniform policy.
    pub initial: Policy<T>,
    pub anchors: Vec<AnchorStep<T>>,
}

impl<T: Scalar> AnchorRun<T> {
    pub fn final_policy(&self) -> &Policy<T> {
        self.anchors.last().map_or(&self.initial, |s| &s.policy)
    }

    /// `pi_0, pi_1, ..., pi_K`.
    pub fn policies(&self) -> Vec<Policy<T>> {
        std::iter::once(self.initial.clone())
            .chain(self.anchors.iter().map(|s| s.policy.clone()))
            .collect()
    }
}

/// Runs `schedule.anchors` periods of `schedule.steps_per_anchor` steps from
/// zero scores. Scores carry over between periods; only the anchor of the
/// monotone transform changes, to the floored snapshot of the current policy.
pub fn iterate_anchors<T: Scalar>(
    game: &GameTree<T>,
    eta: T,
    schedule: &AnchorSchedule,
    opts: &SolverOptions<T>,
    reference: Option<&Policy<T>>,
) -> Result<AnchorRun<T>> {
    iterate_anchors_with(game, eta, schedule, opts, reference, |_| Ok(()))
}

/// [`iterate_anchors`], calling `on_anchor` as each period completes. An
/// error from a step or from `on_anchor` ends the run; anchors already
/// reported stay reported.
pub fn iterate_anchors_with<T: Scalar, F>(
    game: &GameTree<T>,
    eta: T,
    schedule: &AnchorSchedule,
    opts: &SolverOptions<T>,
    reference: Option<&Policy<T>>,
    mut on_anchor: F,
) -> Result<AnchorRun<T>>
where
    F: FnMut(&AnchorStep<T>) -> Result<()>,
{
    if let Some(r) = reference {
        r.check_complete(game)?;
        r.check_simplex()?;
    }
    let weighting = XiWeighting::from(opts.denominator);
    let mut state = DynamicsState::new(game, ScoreMode::PlainY, opts.regularizer);
    let initial = snapshot(state.policy());
    let mut prev_anchor: Option<Policy<T>> = None;
    let mut anchor = initial.clone();
    let mut spec = TransformSpec::from_snapshot(game, TransformVariant::Monotone, eta, anchor.clone(), opts.denominator)?;
    let half = schedule.steps_per_anchor / 2;
    let mut anchors = Vec::with_capacity(schedule.anchors);
    for k in 1..=schedule.anchors {
        let mut taken = 0;
        for n in 0..schedule.steps_per_anchor {
            if let (Interpolation::LinearHalf, Some(prev)) = (schedule.interpolation, &prev_anchor) {
                if n <= half && half > 0 {
                    let w = T::count(n) / T::count(half);
                    spec.set_blended_anchor(prev, anchor.clone(), w);
                }
            }
            let before = opts.early_exit.map(|_| state.policy().clone());
            step(game, &spec, &mut state, opts.dt, opts.integrator)?;
            taken += 1;
            if let (Some(tol), Some(b)) = (opts.early_exit, before) {
                if state.policy().l1_distance(&b) < tol {
                    break;
                }
            }
        }
        let policy = snapshot(state.policy());
        let decomposition = match reference {
            Some(r) => Some(lemma6_decomposition(game, eta, opts.denominator, r, &anchor, &policy)?),
            None => None,
        };
        let xi_to_ref = match reference {
            Some(r) => Some(xi_divergence_weighted(game, r, &policy, weighting)?),
            None => None,
        };
        let xi_step = xi_divergence_weighted(game, &policy, &anchor, weighting)?;
        let done = AnchorStep {
            k,
            nashconv: nash_conv(game, &policy)?,
            xi_to_ref,
            xi_step,
            decomposition,
            steps: taken,
            policy: policy.clone(),
        };
        on_anchor(&done)?;
        anchors.push(done);
        spec = TransformSpec::from_snapshot(game, TransformVariant::Monotone, eta, policy.clone(), opts.denominator)?;
        prev_anchor = Some(std::mem::replace(&mut anchor, policy));
    }
    Ok(AnchorRun { initial, anchors })
}

/// `Xi(pi*, pi_k) - Xi(pi*, pi_{k-1}) + Xi(pi_k, pi_{k-1})` for each `k >= 1`
/// of `sequence = [pi_0, pi_1, ...]`.
pub fn kl_contraction_check<T: Scalar>(
    game: &GameTree<T>,
    pi_star: &Policy<T>,
    sequence: &[Policy<T>],
    weighting: XiWeighting,
) -> Result<Vec<T>> {
    let mut margins = Vec::with_capacity(sequence.len().saturating_sub(1));
    for pair in sequence.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        margins.push(
            xi_divergence_weighted(game, pi_star, cur, weighting)? - xi_divergence_weighted(game, pi_star, prev, weighting)?
                + xi_divergence_weighted(game, cur, prev, weighting)?,
        );
    }
    Ok(margins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::matrix_qre;
    use crate::game::{build_kuhn_poker, build_matrix_game, kuhn_equilibrium};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn biased_mp() -> GameTree<f64> {
        build_matrix_game(&[vec![1.0, -1.0], vec![-1.0, 10.0]]).unwrap()
    }

    #[test]
    fn zero_budget_returns_uniform() {
        let g = biased_mp();
        let out = solve_transformed(&g, 1.0, &Policy::uniform(&g), 0, &SolverOptions::new(0.01)).unwrap();
        assert_eq!(out.policy, Policy::uniform(&g));
        assert_eq!(out.residual, 0.0);
    }

    #[test]
    fn large_eta_stays_near_anchor() {
        let g = biased_mp();
        let out = solve_transformed(&g, 100.0, &Policy::uniform(&g), 5000, &SolverOptions::new(0.01)).unwrap();
        assert!(out.policy.l1_distance(&Policy::uniform(&g)) < 0.05);
    }

    #[test]
    fn solve_matches_oracle() {
        let g = biased_mp();
        let a = vec![vec![1.0, -1.0], vec![-1.0, 10.0]];
        let (p, q) = matrix_qre(&a, 1.0, &[0.5, 0.5], &[0.5, 0.5], 1e-15).unwrap();
        let mut opts = SolverOptions::new(0.01);
        opts.early_exit = Some(1e-14);
        let out = solve_transformed(&g, 1.0, &Policy::uniform(&g), 100_000, &opts).unwrap();
        let oracle = Policy::from_blocks(vec![p, q]);
        assert!(out.policy.l1_distance(&oracle) < 1e-4, "{:?}", out.policy);
        assert!(out.steps < 100_000);
    }

    #[test]
    fn identity_residual_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for g in [biased_mp(), build_kuhn_poker::<f64>()] {
            for mode in [DenominatorMode::PerInfostate, DenominatorMode::PerHistory] {
                for _ in 0..20 {
                    let star = Policy::random_interior(&g, &mut rng, 1e-3);
                    let prev = Policy::random_interior(&g, &mut rng, 1e-3);
                    let cur = Policy::random_interior(&g, &mut rng, 1e-3);
                    let d = lemma6_decomposition(&g, 0.7, mode, &star, &prev, &cur).unwrap();
                    assert!(d.residual < 1e-9, "{mode:?} {}", d.residual);
                    // The value-based step term agrees with the KL one.
                    let kl_rhs = -d.xi_step + (0..2).map(|i| d.m[i] + d.delta[i] + d.kappa[i]).sum::<f64>() / 0.7;
                    assert!((kl_rhs - d.rhs).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn identity_at_common_point_is_zero() {
        let g = biased_mp();
        let p = Policy::from_blocks(vec![vec![0.3, 0.7], vec![0.6, 0.4]]);
        let d = lemma6_decomposition(&g, 1.0, DenominatorMode::PerInfostate, &p, &p, &p).unwrap();
        for v in d.m.iter().chain(&d.delta).chain(&d.kappa) {
            assert!(v.abs() < 1e-15);
        }
        assert!(d.residual < 1e-15 && d.xi_step == 0.0);
    }

    #[test]
    fn decomposition_rejects_boundary_iterates() {
        let g = biased_mp();
        let u = Policy::uniform(&g);
        let corner = Policy::from_blocks(vec![vec![1.0, 0.0], vec![0.5, 0.5]]);
        assert!(matches!(
            lemma6_decomposition(&g, 1.0, DenominatorMode::PerInfostate, &u, &corner, &u),
            Err(Error::Domain(_))
        ));
        assert!(lemma6_decomposition(&g, 1.0, DenominatorMode::PerInfostate, &corner, &u, &u).is_ok());
    }

    #[test]
    fn schedule_validation() {
        assert!(AnchorSchedule::new(0, 3, Interpolation::Hard).is_err());
        assert!(AnchorSchedule::new(3, 0, Interpolation::Hard).is_err());
    }

    #[test]
    fn single_anchor_with_huge_eta_stays_uniform() {
        let g = biased_mp();
        let sched = AnchorSchedule::new(2000, 1, Interpolation::Hard).unwrap();
        let run = iterate_anchors(&g, 1000.0, &sched, &SolverOptions::new(0.001), None).unwrap();
        assert!(run.final_policy().l1_distance(&Policy::uniform(&g)) < 0.01);
    }

    #[test]
    fn matching_pennies_collapses_at_once() {
        let g = build_matrix_game(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let sched = AnchorSchedule::new(200, 3, Interpolation::Hard).unwrap();
        let u = Policy::uniform(&g);
        let run = iterate_anchors(&g, 1.0, &sched, &SolverOptions::new(0.01), Some(&u)).unwrap();
        for s in &run.anchors {
            assert!(s.xi_to_ref.unwrap() < 1e-6);
            assert!(s.nashconv < 1e-12);
        }
    }

    #[test]
    fn observer_sees_each_anchor_and_can_stop_the_run() {
        let g = biased_mp();
        let sched = AnchorSchedule::new(50, 4, Interpolation::Hard).unwrap();
        let mut seen = Vec::new();
        let run = iterate_anchors_with(&g, 1.0, &sched, &SolverOptions::new(0.01), None, |s| {
            seen.push(s.k);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![1, 2, 3, 4]);
        assert_eq!(run.anchors.len(), 4);

        let stop = iterate_anchors_with(&g, 1.0, &sched, &SolverOptions::new(0.01), None, |s| {
            if s.k == 2 {
                Err(Error::InvalidArgument("stop".into()))
            } else {
                Ok(())
            }
        });
        assert!(stop.is_err());
    }

    #[test]
    fn linear_half_runs_and_improves_biased_mp() {
        let g = biased_mp();
        let nash = Policy::from_blocks(vec![vec![11.0 / 13.0, 2.0 / 13.0]; 2]);
        let sched = AnchorSchedule::new(2000, 6, Interpolation::LinearHalf).unwrap();
        let run = iterate_anchors(&g, 1.0, &sched, &SolverOptions::new(0.01), Some(&nash)).unwrap();
        let first = run.anchors[0].xi_to_ref.unwrap();
        let last = run.anchors.last().unwrap().xi_to_ref.unwrap();
        assert!(last < first);
        let margins = kl_contraction_check(&g, &nash, &run.policies(), XiWeighting::Infostate).unwrap();
        assert_eq!(margins.len(), 6);
    }

    #[test]
    fn kuhn_anchoring_reports_decomposition() {
        let g = build_kuhn_poker::<f64>();
        let star = kuhn_equilibrium(&g, 1.0 / 3.0).unwrap();
        let sched = AnchorSchedule::new(500, 2, Interpolation::Hard).unwrap();
        let run = iterate_anchors(&g, 0.5, &sched, &SolverOptions::new(0.02), Some(&star)).unwrap();
        for s in &run.anchors {
            let d = s.decomposition.as_ref().unwrap();
            assert!(d.residual < 1e-8);
            assert!((d.xi_ref_current - s.xi_to_ref.unwrap()).abs() < 1e-15);
        }
        assert!(run.anchors[1].nashconv < nash_conv(&g, &Policy::uniform(&g)).unwrap());
    }
}
