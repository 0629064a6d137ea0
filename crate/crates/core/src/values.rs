//! Reach probabilities, value functions, best responses and NashConv for a
//! fixed policy, under the base reward or any policy-dependent reward.

use crate::error::{Error, Result};
use crate::game::{Actor, GameTree, HistoryId, InfostateId};
use crate::policy::Policy;
use crate::scalar::Scalar;

/// Reach probabilities of every history and infostate under one policy.
#[derive(Debug, Clone)]
pub struct ReachTable<T> {
    /// `rho^pi(h)`, chance included.
    pub total: Vec<T>,
    /// `own[i][h] = rho^{pi^i}(h)`: product of player `i`'s action probabilities.
    pub own: Vec<Vec<T>>,
    /// `others[i][h] = rho^{pi^{-i}}(h)`: opponents and chance.
    pub others: Vec<Vec<T>>,
    /// `rho^pi(x)` summed over the histories of `x`.
    pub infostate_total: Vec<T>,
    /// `rho^{pi^{-i}}(x)` for the owner `i` of `x`.
    pub infostate_others: Vec<T>,
}

impl<T: Scalar> ReachTable<T> {
    /// `rho^{pi^i}(x)` for the owner of `x`, read off its first history.
    pub fn infostate_own(&self, game: &GameTree<T>, x: InfostateId) -> T {
        let info = game.infostate(x);
        self.own[info.player][info.histories[0]]
    }
}

/// Action probability at a non-terminal history: chance distribution or policy.
fn action_prob<T: Scalar>(game: &GameTree<T>, policy: &Policy<T>, h: HistoryId, a: usize) -> T {
    let hist = game.history(h);
    match hist.actor {
        Actor::Chance => hist.chance_probs[a],
        Actor::Player(_) => policy.prob(hist.infostate.expect("decision history has infostate"), a),
        Actor::Terminal => unreachable!("terminal histories have no actions"),
    }
}

pub fn reach_probs<T: Scalar>(game: &GameTree<T>, policy: &Policy<T>) -> Result<ReachTable<T>> {
    policy.check_complete(game)?;
    let n = game.num_histories();
    let np = game.num_players();
    let mut total = vec![T::zero(); n];
    let mut own = vec![vec![T::zero(); n]; np];
    let mut others = vec![vec![T::zero(); n]; np];
    total[0] = T::one();
    for i in 0..np {
        own[i][0] = T::one();
        others[i][0] = T::one();
    }
    for h in 0..n {
        let hist = game.history(h);
        let mover = hist.player();
        for (a, &c) in hist.children.iter().enumerate() {
            let p = action_prob(game, policy, h, a);
            total[c] = total[h] * p;
            for i in 0..np {
                if mover == Some(i) {
                    own[i][c] = own[i][h] * p;
                    others[i][c] = others[i][h];
                } else {
                    own[i][c] = own[i][h];
                    others[i][c] = others[i][h] * p;
                }
            }
        }
    }
    let mut infostate_total = vec![T::zero(); game.num_infostates()];
    let mut infostate_others = vec![T::zero(); game.num_infostates()];
    for (x, info) in game.infostates().iter().enumerate() {
        for &h in &info.histories {
            infostate_total[x] += total[h];
            infostate_others[x] += others[info.player][h];
        }
    }
    Ok(ReachTable {
        total,
        own,
        others,
        infostate_total,
        infostate_others,
    })
}

/// Everything a reward function may look at.
pub struct EvalContext<'a, T> {
    pub game: &'a GameTree<T>,
    pub policy: &'a Policy<T>,
    pub reach: &'a ReachTable<T>,
}

/// Reward `r^i_pi(h, a)`, possibly depending on the policy being evaluated.
pub trait RewardFn<T: Scalar> {
    fn reward(&self, ctx: &EvalContext<'_, T>, h: HistoryId, a: usize, player: usize) -> Result<T>;

    /// True when the reward ignores the policy (the base reward).
    fn is_policy_independent(&self) -> bool {
        false
    }
}

/// The game's own transition rewards.
#[derive(Debug, Clone, Copy, Default)]
pub struct BaseReward;

impl<T: Scalar> RewardFn<T> for BaseReward {
    fn reward(&self, ctx: &EvalContext<'_, T>, h: HistoryId, a: usize, player: usize) -> Result<T> {
        Ok(ctx.game.reward(h, a, player))
    }

    fn is_policy_independent(&self) -> bool {
        true
    }
}

impl<T: Scalar, R: RewardFn<T> + ?Sized> RewardFn<T> for &R {
    fn reward(&self, ctx: &EvalContext<'_, T>, h: HistoryId, a: usize, player: usize) -> Result<T> {
        (**self).reward(ctx, h, a, player)
    }

    fn is_policy_independent(&self) -> bool {
        (**self).is_policy_independent()
    }
}

/// History and infostate values of a policy for every player.
#[derive(Debug, Clone)]
pub struct ValueTable<T> {
    /// `history[i][h] = V^i_pi(h)`.
    pub history: Vec<Vec<T>>,
    /// `q[i][edge(h, a)] = Q^i_pi(h, a)`.
    pub q: Vec<Vec<T>>,
    /// `r^i_pi(h, a)` as evaluated, edge-indexed per player.
    pub rewards: Vec<Vec<T>>,
    /// `V^i_pi(x)` for the owner `i` of `x`.
    pub infostate_value: Vec<T>,
    /// `Q^i_pi(x, a)` for the owner `i` of `x`, counterfactually weighted.
    pub infostate_q: Vec<Vec<T>>,
    /// `sum_{h in x} rho^{pi^{-i}}(h) Q^i_pi(h, a)`, i.e. `rho^{pi^{-i}}(x) Q^i_pi(x, a)`.
    pub counterfactual_q: Vec<Vec<T>>,
    pub reach: ReachTable<T>,
}

impl<T: Scalar> ValueTable<T> {
    pub fn root_value(&self, player: usize) -> T {
        self.history[player][0]
    }

    pub fn root_values(&self) -> Vec<T> {
        self.history.iter().map(|v| v[0]).collect()
    }
}

/// Exact backward induction of `V` and `Q` under `reward`.
///
/// Infostate quantities average the member histories with weights
/// `rho^{pi^{-i}}(h)`. When the opponents never reach `x` the weights vanish
/// and the plain average over member histories is used instead.
pub fn value_tables<T: Scalar, R: RewardFn<T>>(
    game: &GameTree<T>,
    policy: &Policy<T>,
    reward: &R,
) -> Result<ValueTable<T>> {
    let reach = reach_probs(game, policy)?;
    let n = game.num_histories();
    let np = game.num_players();
    let mut history = vec![vec![T::zero(); n]; np];
    let mut q = vec![vec![T::zero(); game.num_edges()]; np];
    let mut rewards = vec![vec![T::zero(); game.num_edges()]; np];
    {
        let ctx = EvalContext {
            game,
            policy,
            reach: &reach,
        };
        for h in (0..n).rev() {
            let hist = game.history(h);
            for (a, &c) in hist.children.iter().enumerate() {
                let p = action_prob(game, policy, h, a);
                let e = game.edge(h, a);
                for i in 0..np {
                    let r = reward.reward(&ctx, h, a, i)?;
                    if !r.is_finite() {
                        return Err(Error::NonFiniteReward {
                            history: h,
                            action: a,
                            player: i,
                        });
                    }
                    let qa = r + history[i][c];
                    rewards[i][e] = r;
                    q[i][e] = qa;
                    history[i][h] += p * qa;
                }
            }
        }
    }
    let mut infostate_value = Vec::with_capacity(game.num_infostates());
    let mut infostate_q = Vec::with_capacity(game.num_infostates());
    let mut counterfactual_q = Vec::with_capacity(game.num_infostates());
    for info in game.infostates() {
        let i = info.player;
        let k = info.num_actions;
        let mut cf = vec![T::zero(); k];
        let mut cf_v = T::zero();
        let mut den = T::zero();
        for &h in &info.histories {
            let w = reach.others[i][h];
            den += w;
            cf_v += w * history[i][h];
            for (a, c) in cf.iter_mut().enumerate() {
                *c += w * q[i][game.edge(h, a)];
            }
        }
        if den > T::zero() {
            infostate_q.push(cf.iter().map(|&c| c / den).collect());
            infostate_value.push(cf_v / den);
        } else {
            let m = T::count(info.histories.len());
            infostate_q.push(
                (0..k)
                    .map(|a| info.histories.iter().map(|&h| q[i][game.edge(h, a)]).sum::<T>() / m)
                    .collect(),
            );
            infostate_value.push(info.histories.iter().map(|&h| history[i][h]).sum::<T>() / m);
        }
        counterfactual_q.push(cf);
    }
    Ok(ValueTable {
        history,
        q,
        rewards,
        infostate_value,
        infostate_q,
        counterfactual_q,
        reach,
    })
}

/// `V^i_pi(h_init)` for every player under the base reward.
pub fn root_values<T: Scalar>(game: &GameTree<T>, policy: &Policy<T>) -> Result<Vec<T>> {
    Ok(value_tables(game, policy, &BaseReward)?.root_values())
}

/// `rho^{pi^{-i}}(h)` for every history, ignoring player `i`'s blocks.
fn opponent_reach<T: Scalar>(game: &GameTree<T>, policy: &Policy<T>, player: usize) -> Vec<T> {
    let mut reach = vec![T::zero(); game.num_histories()];
    reach[0] = T::one();
    for h in 0..game.num_histories() {
        let hist = game.history(h);
        for (a, &c) in hist.children.iter().enumerate() {
            reach[c] = if hist.player() == Some(player) {
                reach[h]
            } else {
                reach[h] * action_prob(game, policy, h, a)
            };
        }
    }
    reach
}

/// Best response of `player` to the other players' blocks of `policy`, under
/// the base reward.
///
/// Returns a pure policy defined on `player`'s infostates only, and its
/// value `max_{pi'} V^i_{pi', pi^{-i}}(h_init)`. Infostates are decided
/// deepest first along the player's own sequence; ties go to the lowest
/// action index.
pub fn best_response<T: Scalar>(game: &GameTree<T>, policy: &Policy<T>, player: usize) -> Result<(Policy<T>, T)> {
    if player >= game.num_players() {
        return Err(Error::InvalidArgument(format!("no player {player}")));
    }
    policy.check_players(game, |i| i != player)?;
    let reach = opponent_reach(game, policy, player);

    let mine = game.player_infostates(player);
    let own_depth = |x: InfostateId| {
        game.infostate(x)
            .histories
            .iter()
            .map(|&h| {
                game.path(h)
                    .iter()
                    .filter(|(hp, _)| game.history(*hp).player() == Some(player))
                    .count()
            })
            .max()
            .unwrap_or(0)
    };
    let mut order: Vec<(usize, InfostateId)> = mine.iter().map(|&x| (own_depth(x), x)).collect();
    order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut choice: Vec<Option<usize>> = vec![None; game.num_infostates()];
    let mut memo: Vec<Option<T>> = vec![None; game.num_histories()];
    for &(_, x) in &order {
        let info = game.infostate(x);
        let mut best = (0usize, T::neg_infinity());
        for a in 0..info.num_actions {
            let mut total = T::zero();
            for &h in &info.histories {
                let c = game.child(h, a);
                let v = br_value(game, policy, player, &choice, &mut memo, c);
                total += reach[h] * (game.reward(h, a, player) + v);
            }
            if total > best.1 {
                best = (a, total);
            }
        }
        choice[x] = Some(best.0);
    }
    let value = br_value(game, policy, player, &choice, &mut memo, game.root());

    let mut br = Policy::empty(game);
    for &x in mine {
        let mut block = vec![T::zero(); game.infostate(x).num_actions];
        block[choice[x].unwrap_or(0)] = T::one();
        br.set(x, block);
    }
    Ok((br, value))
}

fn br_value<T: Scalar>(
    game: &GameTree<T>,
    policy: &Policy<T>,
    player: usize,
    choice: &[Option<usize>],
    memo: &mut Vec<Option<T>>,
    h: HistoryId,
) -> T {
    if let Some(v) = memo[h] {
        return v;
    }
    let hist = game.history(h);
    let v = match hist.actor {
        Actor::Terminal => T::zero(),
        Actor::Player(p) if p == player => {
            let x = hist.infostate.expect("decision history has infostate");
            let a = choice[x].expect("deeper infostates are decided first");
            game.reward(h, a, player) + br_value(game, policy, player, choice, memo, hist.children[a])
        }
        _ => {
            let mut acc = T::zero();
            for (a, &c) in hist.children.iter().enumerate() {
                let p = action_prob(game, policy, h, a);
                acc += p * (game.reward(h, a, player) + br_value(game, policy, player, choice, memo, c));
            }
            acc
        }
    };
    memo[h] = Some(v);
    v
}

/// `sum_i max_{pi'^i} V^i_{pi'^i, pi^{-i}}(h_init) - V^i_pi(h_init)` under the base reward.
pub fn nash_conv<T: Scalar>(game: &GameTree<T>, policy: &Policy<T>) -> Result<T> {
    let values = root_values(game, policy)?;
    let mut total = T::zero();
    for (i, v) in values.iter().enumerate() {
        total += best_response(game, policy, i)?.1 - *v;
    }
    Ok(total)
}

/// Per-player `Omega^i(pi, mu)` and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityGap<T> {
    pub per_player: Vec<T>,
    pub total: T,
}

/// `Omega^i(pi, mu) = V^i_{pi^i,pi^-i} - V^i_{mu^i,pi^-i} - V^i_{pi^i,mu^-i} + V^i_{mu^i,mu^-i}`
/// evaluated at the root under `reward`.
pub fn monotonicity_gap<T: Scalar, R: RewardFn<T>>(
    game: &GameTree<T>,
    reward: &R,
    pi: &Policy<T>,
    mu: &Policy<T>,
) -> Result<MonotonicityGap<T>> {
    let v_pi = value_tables(game, pi, reward)?.root_values();
    let v_mu = value_tables(game, mu, reward)?.root_values();
    let mut per_player = Vec::with_capacity(game.num_players());
    for i in 0..game.num_players() {
        let mu_vs_pi = value_tables(game, &mu.splice(game, i, pi), reward)?.root_value(i);
        let pi_vs_mu = value_tables(game, &pi.splice(game, i, mu), reward)?.root_value(i);
        per_player.push(v_pi[i] - mu_vs_pi - pi_vs_mu + v_mu[i]);
    }
    let total = per_player.iter().copied().sum();
    Ok(MonotonicityGap { per_player, total })
}
