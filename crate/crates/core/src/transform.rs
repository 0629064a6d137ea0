//! Policy-dependent reward transformations.
//!
//! Both transformations add a log-ratio penalty `log(pi(a|x) / mu(a|x))`
//! against an anchor policy `mu`:
//!
//! * `Monotone` charges only the acting player, scaled by `eta` over its
//!   counterfactual reach, which keeps a monotone game monotone.
//! * `ZeroSum` charges the acting player `eta * log-ratio` and pays the same
//!   amount to the other player, which keeps a two-player game zero-sum.

use crate::error::{Error, Result};
use crate::game::{Actor, GameTree, HistoryId, InfostateId};
use crate::policy::Policy;
use crate::scalar::Scalar;
use crate::values::{reach_probs, value_tables, BaseReward, EvalContext, RewardFn};

/// Default clamp on the counterfactual-reach denominator of the monotone variant.
pub const REACH_FLOOR: f64 = 1e-8;

/// Probabilities are clamped to this value before taking logarithms.
pub const LOG_PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformVariant {
    None,
    Monotone,
    ZeroSum,
}

/// Which counterfactual reach divides the monotone penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DenominatorMode {
    /// `rho^{pi^{-i}}(h)` of the history itself.
    PerHistory,
    /// `rho^{pi^{-i}}(x(h))`, summed over the infostate.
    #[default]
    PerInfostate,
}

#[derive(Debug, Clone)]
pub struct TransformSpec<T> {
    variant: TransformVariant,
    eta: T,
    anchor: Policy<T>,
    denominator: DenominatorMode,
    reach_floor: T,
    /// `log mu(a|x)`, or a blend of two anchors' logs during interpolation.
    log_anchor: Vec<Vec<T>>,
}

fn log_blocks<T: Scalar>(policy: &Policy<T>) -> Vec<Vec<T>> {
    let floor = T::lit(LOG_PROB_FLOOR);
    policy
        .blocks()
        .iter()
        .map(|b| b.iter().map(|&p| p.max(floor).ln()).collect())
        .collect()
}

impl<T: Scalar> TransformSpec<T> {
    /// The identity transform: rewards are left untouched.
    pub fn none(game: &GameTree<T>) -> Self {
        let anchor = Policy::uniform(game);
        Self {
            variant: TransformVariant::None,
            eta: T::zero(),
            log_anchor: log_blocks(&anchor),
            anchor,
            denominator: DenominatorMode::default(),
            reach_floor: T::lit(REACH_FLOOR),
        }
    }

    /// A transform anchored at `anchor`, which must be complete and interior.
    pub fn new(
        game: &GameTree<T>,
        variant: TransformVariant,
        eta: T,
        anchor: Policy<T>,
        denominator: DenominatorMode,
    ) -> Result<Self> {
        Self::build(game, variant, eta, anchor, denominator, T::lit(crate::policy::INTERIOR_EPS))
    }

    /// Like [`TransformSpec::new`] but accepts anchors produced by the
    /// dynamics, which may carry probabilities down to the log floor.
    pub fn from_snapshot(
        game: &GameTree<T>,
        variant: TransformVariant,
        eta: T,
        anchor: Policy<T>,
        denominator: DenominatorMode,
    ) -> Result<Self> {
        // Renormalising after flooring can dip just below the floor.
        Self::build(game, variant, eta, anchor, denominator, T::lit(0.5 * LOG_PROB_FLOOR))
    }

    fn build(
        game: &GameTree<T>,
        variant: TransformVariant,
        eta: T,
        anchor: Policy<T>,
        denominator: DenominatorMode,
        min_prob: T,
    ) -> Result<Self> {
        anchor
            .check_complete(game)
            .map_err(|e| Error::InvalidTransform(format!("anchor: {e}")))?;
        anchor
            .check_simplex()
            .map_err(|e| Error::InvalidTransform(format!("anchor: {e}")))?;
        if !anchor.is_interior_with(min_prob) {
            return Err(Error::InvalidTransform(format!(
                "anchor is not interior (some probability below {min_prob:e})"
            )));
        }
        if variant != TransformVariant::None && !(eta > T::zero() && eta.is_finite()) {
            return Err(Error::InvalidTransform(format!("eta must be positive, got {eta}")));
        }
        if variant == TransformVariant::ZeroSum && game.num_players() != 2 {
            return Err(Error::InvalidTransform(
                "the zero-sum transform needs exactly two players".into(),
            ));
        }
        Ok(Self {
            variant,
            eta,
            log_anchor: log_blocks(&anchor),
            anchor,
            denominator,
            reach_floor: T::lit(REACH_FLOOR),
        })
    }

    pub fn with_reach_floor(mut self, floor: T) -> Result<Self> {
        if !(floor > T::zero()) {
            return Err(Error::InvalidTransform(format!("reach floor must be positive, got {floor}")));
        }
        self.reach_floor = floor;
        Ok(self)
    }

    pub fn variant(&self) -> TransformVariant {
        self.variant
    }

    pub fn eta(&self) -> T {
        self.eta
    }

    pub fn anchor(&self) -> &Policy<T> {
        &self.anchor
    }

    pub fn denominator(&self) -> DenominatorMode {
        self.denominator
    }

    pub fn reach_floor(&self) -> T {
        self.reach_floor
    }

    pub fn is_policy_independent(&self) -> bool {
        self.variant == TransformVariant::None
    }

    /// Changes the regularization strength (used by decaying schedules).
    pub fn set_eta(&mut self, eta: T) {
        self.eta = eta;
    }

    /// Anchors at `current` with log-ratios blended linearly towards
    /// `previous`: `w * log(pi/current) + (1 - w) * log(pi/previous)`.
    pub fn set_blended_anchor(&mut self, previous: &Policy<T>, current: Policy<T>, weight_current: T) {
        let prev = log_blocks(previous);
        let cur = log_blocks(&current);
        let w = weight_current;
        self.log_anchor = cur
            .iter()
            .zip(&prev)
            .map(|(c, p)| c.iter().zip(p).map(|(&lc, &lp)| w * lc + (T::one() - w) * lp).collect())
            .collect();
        self.anchor = current;
    }

    /// `log(max(pi(a|x), floor)) - log mu(a|x)`.
    pub fn log_ratio(&self, policy: &Policy<T>, x: InfostateId, a: usize) -> Result<T> {
        let p = policy.prob(x, a);
        if !(p >= T::zero()) {
            return Err(Error::Domain(format!(
                "policy probability {p} at infostate {x}, action {a}"
            )));
        }
        Ok(p.max(T::lit(LOG_PROB_FLOOR)).ln() - self.log_anchor[x][a])
    }

    fn penalty(&self, ctx: &EvalContext<'_, T>, h: HistoryId, a: usize, player: usize) -> Result<T> {
        let hist = ctx.game.history(h);
        let (Actor::Player(actor), Some(x)) = (hist.actor, hist.infostate) else {
            return Ok(T::zero());
        };
        match self.variant {
            TransformVariant::None => Ok(T::zero()),
            TransformVariant::Monotone => {
                if actor != player {
                    return Ok(T::zero());
                }
                let den = match self.denominator {
                    DenominatorMode::PerHistory => ctx.reach.others[player][h],
                    DenominatorMode::PerInfostate => ctx.reach.infostate_others[x],
                };
                Ok(-self.eta / den.max(self.reach_floor) * self.log_ratio(ctx.policy, x, a)?)
            }
            TransformVariant::ZeroSum => {
                let lr = self.eta * self.log_ratio(ctx.policy, x, a)?;
                Ok(if actor == player { -lr } else { lr })
            }
        }
    }
}

impl<T: Scalar> RewardFn<T> for TransformSpec<T> {
    fn reward(&self, ctx: &EvalContext<'_, T>, h: HistoryId, a: usize, player: usize) -> Result<T> {
        Ok(ctx.game.reward(h, a, player) + self.penalty(ctx, h, a, player)?)
    }

    fn is_policy_independent(&self) -> bool {
        TransformSpec::is_policy_independent(self)
    }
}

/// `r^i_pi(h, a)` under `spec` for a single transition.
pub fn transformed_reward<T: Scalar>(
    spec: &TransformSpec<T>,
    game: &GameTree<T>,
    policy: &Policy<T>,
    h: HistoryId,
    a: usize,
    player: usize,
) -> Result<T> {
    if let Some(x) = game.history(h).infostate {
        if !(policy.prob(x, a) > T::zero()) {
            return Err(Error::Domain(format!(
                "policy probability {} at history {h}, action {a} is not positive",
                policy.prob(x, a)
            )));
        }
    }
    let reach = reach_probs(game, policy)?;
    let ctx = EvalContext {
        game,
        policy,
        reach: &reach,
    };
    spec.reward(&ctx, h, a, player)
}

/// Split of the monotone-transformed value into base value minus an
/// own-policy penalty.
#[derive(Debug, Clone)]
pub struct PenaltyDecomposition<T> {
    /// `T^i(pi^i)`: `eta` times the own-reach weighted KL to the anchor.
    pub penalty: Vec<T>,
    pub base_values: Vec<T>,
    pub transformed_values: Vec<T>,
    /// `max_i |V^i_transformed - (V^i_base - T^i)|`.
    pub residual: T,
}

/// Computes `T^i(pi^i)` directly from the policy and checks it against the
/// difference of base and transformed root values.
///
/// With per-history denominators the KL terms are weighted by
/// `rho^{pi^i}(h)` over every history of the player; with per-infostate
/// denominators by `rho^{pi^i}(x)` over infostates.
pub fn expected_penalty_decomposition<T: Scalar>(
    spec: &TransformSpec<T>,
    game: &GameTree<T>,
    policy: &Policy<T>,
) -> Result<PenaltyDecomposition<T>> {
    if spec.variant() != TransformVariant::Monotone {
        return Err(Error::UnsupportedVariant("the monotone transform"));
    }
    let reach = reach_probs(game, policy)?;
    let mut penalty = vec![T::zero(); game.num_players()];
    for (x, info) in game.infostates().iter().enumerate() {
        let mut kl = T::zero();
        for a in 0..info.num_actions {
            let p = policy.prob(x, a);
            if p > T::zero() {
                kl += p * spec.log_ratio(policy, x, a)?;
            }
        }
        let weight = match spec.denominator() {
            DenominatorMode::PerHistory => info.histories.iter().map(|&h| reach.own[info.player][h]).sum(),
            DenominatorMode::PerInfostate => reach.infostate_own(game, x),
        };
        penalty[info.player] += spec.eta() * weight * kl;
    }
    let base_values = value_tables(game, policy, &BaseReward)?.root_values();
    let transformed_values = value_tables(game, policy, spec)?.root_values();
    let residual = (0..game.num_players())
        .map(|i| (transformed_values[i] - (base_values[i] - penalty[i])).abs())
        .fold(T::zero(), T::max);
    Ok(PenaltyDecomposition {
        penalty,
        base_values,
        transformed_values,
        residual,
    })
}
