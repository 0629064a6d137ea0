//! Behavioral policies: one probability vector per information state.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::game::{GameTree, InfostateId};
use crate::scalar::Scalar;

/// Interiority threshold for [`Policy::is_interior`].
pub const INTERIOR_EPS: f64 = 1e-9;

/// Tolerance on block sums for [`Policy::check_simplex`].
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Action probabilities indexed by global infostate id.
///
/// A block may be empty, meaning the policy does not define that infostate
/// (for instance a best-response block for one player only). Evaluation
/// routines reject incomplete policies with [`Error::IncompletePolicy`].
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<T> {
    blocks: Vec<Vec<T>>,
}

impl<T: Scalar> Policy<T> {
    pub fn uniform(game: &GameTree<T>) -> Self {
        let blocks = game
            .infostates()
            .iter()
            .map(|x| vec![T::one() / T::count(x.num_actions); x.num_actions])
            .collect();
        Self { blocks }
    }

    /// Policy with every block undefined.
    pub fn empty(game: &GameTree<T>) -> Self {
        Self {
            blocks: vec![Vec::new(); game.num_infostates()],
        }
    }

    pub fn from_blocks(blocks: Vec<Vec<T>>) -> Self {
        Self { blocks }
    }

    /// Random policy with every probability at least `min_prob`: uniform
    /// weights in `[0, 1)` mixed with the uniform distribution.
    pub fn random_interior<R: Rng + ?Sized>(game: &GameTree<T>, rng: &mut R, min_prob: f64) -> Self {
        let blocks = game
            .infostates()
            .iter()
            .map(|x| {
                let k = x.num_actions;
                let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 1e-3).collect();
                let total: f64 = raw.iter().sum();
                let floor = min_prob.min(1.0 / k as f64);
                raw.iter()
                    .map(|w| T::lit(floor + (1.0 - k as f64 * floor) * w / total))
                    .collect()
            })
            .collect();
        Self { blocks }
    }

    pub fn blocks(&self) -> &[Vec<T>] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<Vec<T>> {
        self.blocks
    }

    pub fn get(&self, x: InfostateId) -> &[T] {
        &self.blocks[x]
    }

    pub fn get_mut(&mut self, x: InfostateId) -> &mut Vec<T> {
        &mut self.blocks[x]
    }

    pub fn set(&mut self, x: InfostateId, probs: Vec<T>) {
        self.blocks[x] = probs;
    }

    pub fn prob(&self, x: InfostateId, a: usize) -> T {
        self.blocks[x][a]
    }

    /// Errors unless every infostate of `game` has a block of the right length.
    pub fn check_complete(&self, game: &GameTree<T>) -> Result<()> {
        self.check_players(game, |_| true)
    }

    /// Errors unless every infostate of players selected by `want` has a block.
    pub fn check_players(&self, game: &GameTree<T>, want: impl Fn(usize) -> bool) -> Result<()> {
        for (x, info) in game.infostates().iter().enumerate() {
            if want(info.player) && self.blocks.get(x).is_none_or(|b| b.len() != info.num_actions) {
                return Err(Error::IncompletePolicy {
                    player: info.player,
                    infostate: info.index,
                });
            }
        }
        Ok(())
    }

    /// Errors if a block is negative, non-finite or does not sum to one.
    pub fn check_simplex(&self) -> Result<()> {
        for (x, block) in self.blocks.iter().enumerate() {
            if block.is_empty() {
                continue;
            }
            let sum: T = block.iter().copied().sum();
            if block.iter().any(|&p| !(p >= T::zero()) || !p.is_finite())
                || !((sum - T::one()).abs() <= T::lit(SIMPLEX_TOL))
            {
                return Err(Error::Domain(format!("infostate {x} is not a probability vector")));
            }
        }
        Ok(())
    }

    /// Every defined probability is at least `eps`.
    pub fn is_interior_with(&self, eps: T) -> bool {
        self.blocks.iter().flatten().all(|&p| p >= eps)
    }

    pub fn is_interior(&self) -> bool {
        self.is_interior_with(T::lit(INTERIOR_EPS))
    }

    /// `player`'s blocks from `self`, every other block from `other`.
    pub fn splice(&self, game: &GameTree<T>, player: usize, other: &Policy<T>) -> Policy<T> {
        let blocks = game
            .infostates()
            .iter()
            .enumerate()
            .map(|(x, info)| {
                if info.player == player {
                    self.blocks[x].clone()
                } else {
                    other.blocks[x].clone()
                }
            })
            .collect();
        Policy { blocks }
    }

    /// Clamps every probability to at least `floor` and renormalises.
    pub fn floored(&self, floor: T) -> Policy<T> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let clamped: Vec<T> = b.iter().map(|&p| p.max(floor)).collect();
                let s: T = clamped.iter().copied().sum();
                clamped.into_iter().map(|p| p / s).collect()
            })
            .collect();
        Policy { blocks }
    }

    /// Sum over infostates of the L1 distance between blocks.
    pub fn l1_distance(&self, other: &Policy<T>) -> T {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| crate::scalar::l1_distance(a, b))
            .sum()
    }

    pub fn max_abs_diff(&self, other: &Policy<T>) -> T {
        self.blocks
            .iter()
            .flatten()
            .zip(other.blocks.iter().flatten())
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    /// Text form: one line `player infostate p_0 p_1 ...` per defined block,
    /// probabilities written with 17 significant digits.
    pub fn to_text(&self, game: &GameTree<T>) -> String {
        let mut out = String::from("# player infostate probabilities...\n");
        for player in 0..game.num_players() {
            for &x in game.player_infostates(player) {
                let block = &self.blocks[x];
                if block.is_empty() {
                    continue;
                }
                let _ = write!(out, "{player} {}", game.infostate(x).index);
                for p in block {
                    let _ = write!(out, " {:.16e}", p.as_f64());
                }
                out.push('\n');
            }
        }
        out
    }

    /// Parses [`Policy::to_text`] output. Infostates absent from the text are left undefined.
    pub fn from_text(game: &GameTree<T>, text: &str) -> Result<Self> {
        let mut policy = Policy::empty(game);
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |message: String| Error::PolicyFormat { line, message };
            let mut toks = body.split_whitespace();
            let mut int = |what: &str| {
                toks.next()
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| err(format!("expected {what}")))
            };
            let player = int("player index")?;
            let index = int("infostate index")?;
            let x = game
                .infostate_id(player, index)
                .ok_or_else(|| err(format!("no infostate {index} for player {player}")))?;
            let probs = toks
                .map(|t| {
                    t.parse::<f64>()
                        .ok()
                        .and_then(T::from_f64)
                        .ok_or_else(|| err(format!("malformed probability '{t}'")))
                })
                .collect::<Result<Vec<T>>>()?;
            if probs.len() != game.infostate(x).num_actions {
                return Err(err(format!(
                    "{} probabilities for {} actions",
                    probs.len(),
                    game.infostate(x).num_actions
                )));
            }
            if !policy.blocks[x].is_empty() {
                return Err(err(format!("duplicate block for player {player} infostate {index}")));
            }
            policy.blocks[x] = probs;
        }
        Ok(policy)
    }
}
