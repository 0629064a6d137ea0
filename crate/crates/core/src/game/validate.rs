use std::fmt;

use super::{Actor, GameTree, HistoryId};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Structure,
    MixedActingPlayers,
    MixedActionSets,
    ChanceDistribution,
    PerfectRecall,
    NonFiniteReward,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

/// Checks every structural invariant of `game`. Returns an empty list iff the
/// game is a well-formed finite tree with consistent infostates, proper
/// chance distributions and perfect recall.
pub fn validate<T: Scalar>(game: &GameTree<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |kind, message: String| out.push(Violation { kind, message });

    let n = game.num_histories();
    if n == 0 {
        push(ViolationKind::Structure, "game has no histories".into());
        return out;
    }
    if game.history(0).parent.is_some() {
        push(ViolationKind::Structure, "root has a parent".into());
    }
    for (h, hist) in game.histories().iter().enumerate() {
        if h > 0 {
            match hist.parent {
                None => push(ViolationKind::Structure, format!("history {h} is unreachable from the root")),
                Some((p, a)) => {
                    if p >= h || game.history(p).children.get(a) != Some(&h) {
                        push(
                            ViolationKind::Structure,
                            format!("history {h}: inconsistent parent link ({p}, {a})"),
                        );
                    }
                }
            }
        }
        match hist.actor {
            Actor::Terminal => {
                if !hist.children.is_empty() {
                    push(ViolationKind::Structure, format!("terminal history {h} has children"));
                }
            }
            Actor::Chance => {
                let probs = &hist.chance_probs;
                if probs.len() != hist.children.len() || probs.is_empty() {
                    push(
                        ViolationKind::ChanceDistribution,
                        format!("chance history {h}: {} probabilities for {} outcomes", probs.len(), hist.children.len()),
                    );
                } else {
                    let sum: T = probs.iter().copied().sum();
                    if probs.iter().any(|&p| !(p > T::zero())) {
                        push(
                            ViolationKind::ChanceDistribution,
                            format!("chance history {h}: non-positive outcome probability"),
                        );
                    }
                    if !((sum - T::one()).abs() <= T::lit(1e-12)) {
                        push(
                            ViolationKind::ChanceDistribution,
                            format!("chance history {h}: probabilities sum to {sum}"),
                        );
                    }
                }
            }
            Actor::Player(p) => {
                if hist.children.is_empty() {
                    push(ViolationKind::Structure, format!("decision history {h} has no actions"));
                }
                let Some(x) = hist.infostate else {
                    push(ViolationKind::Structure, format!("decision history {h} has no infostate"));
                    continue;
                };
                let info = game.infostate(x);
                if info.player != p {
                    push(
                        ViolationKind::MixedActingPlayers,
                        format!(
                            "infostate '{}' contains history {h} of player {p} and histories of player {}",
                            info.key, info.player
                        ),
                    );
                }
                if info.num_actions != hist.num_actions() {
                    push(
                        ViolationKind::MixedActionSets,
                        format!(
                            "infostate '{}': history {h} has {} actions, expected {}",
                            info.key,
                            hist.num_actions(),
                            info.num_actions
                        ),
                    );
                }
            }
        }
        for a in 0..hist.num_actions() {
            for i in 0..game.num_players() {
                if !game.reward(h, a, i).is_finite() {
                    push(
                        ViolationKind::NonFiniteReward,
                        format!("history {h}, action {a}: non-finite reward for player {i}"),
                    );
                }
            }
        }
    }

    for info in game.infostates() {
        let mut reference: Option<(HistoryId, Vec<(usize, usize)>)> = None;
        // Histories of a foreign player were already reported above.
        let own = info
            .histories
            .iter()
            .filter(|&&h| game.history(h).actor == Actor::Player(info.player));
        for &h in own {
            let seq = own_sequence(game, h, info.player);
            match &reference {
                None => reference = Some((h, seq)),
                Some((h0, seq0)) => {
                    if *seq0 != seq {
                        push(
                            ViolationKind::PerfectRecall,
                            format!(
                                "infostate '{}': histories {h0} and {h} differ in player {}'s own past infostates/actions",
                                info.key, info.player
                            ),
                        );
                    }
                }
            }
        }
    }
    out
}

/// Sequence of `(infostate, action)` pairs taken by `player` on the path to `h`.
fn own_sequence<T: Scalar>(game: &GameTree<T>, h: HistoryId, player: usize) -> Vec<(usize, usize)> {
    game.path(h)
        .into_iter()
        .filter_map(|(hp, a)| {
            let hist = game.history(hp);
            match (hist.actor, hist.infostate) {
                (Actor::Player(p), Some(x)) if p == player => Some((x, a)),
                _ => None,
            }
        })
        .collect()
}
