//! Finite extensive-form games with imperfect information.
//!
//! A [`GameTree`] is an immutable, flattened tree of histories stored in
//! depth-first preorder: every parent precedes its children, so forward
//! (reach) passes iterate in index order and backward (value) passes iterate
//! in reverse. Rewards live on transitions `(h, a)`; terminal payoffs are the
//! reward of the last transition.
//!
//! Information states have a global id (position in [`GameTree::infostates`])
//! and a dense per-player index. Both are assigned in first-visit depth-first
//! order, so ids are reproducible across runs.

mod kuhn;
mod leduc;
mod matrix;
mod text;
mod validate;

use std::collections::HashMap;

pub use kuhn::{build_kuhn_poker, kuhn_equilibrium};
pub use leduc::build_leduc_poker;
pub use matrix::{build_matrix_game, build_polymatrix_game, PolymatrixPayoffs};
pub use text::{parse_game_text, GameFile};
pub use validate::{validate, Violation, ViolationKind};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type HistoryId = usize;
pub type InfostateId = usize;

/// Who moves at a history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Actor {
    Terminal,
    Chance,
    Player(usize),
}

#[derive(Debug, Clone)]
pub struct History<T> {
    pub parent: Option<(HistoryId, usize)>,
    pub actor: Actor,
    pub infostate: Option<InfostateId>,
    pub children: Vec<HistoryId>,
    /// Chance distribution over `children`; empty at decision and terminal nodes.
    pub chance_probs: Vec<T>,
    pub action_labels: Vec<String>,
    /// Row-major `[action][player]` transition rewards.
    rewards: Vec<T>,
    /// Offset of this history's first action in edge-indexed arrays.
    edge_offset: usize,
    pub depth: usize,
}

impl<T: Scalar> History<T> {
    pub fn num_actions(&self) -> usize {
        self.children.len()
    }

    pub fn is_terminal(&self) -> bool {
        self.actor == Actor::Terminal
    }

    pub fn player(&self) -> Option<usize> {
        match self.actor {
            Actor::Player(p) => Some(p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Infostate {
    pub key: String,
    /// Acting player (taken from the first history that carries the key).
    pub player: usize,
    /// Dense index among `player`'s infostates.
    pub index: usize,
    pub num_actions: usize,
    pub histories: Vec<HistoryId>,
}

/// Immutable extensive-form game. Players are numbered `0..num_players`.
#[derive(Debug, Clone)]
pub struct GameTree<T> {
    num_players: usize,
    histories: Vec<History<T>>,
    infostates: Vec<Infostate>,
    player_infostates: Vec<Vec<InfostateId>>,
    num_edges: usize,
}

impl<T: Scalar> GameTree<T> {
    pub fn num_players(&self) -> usize {
        self.num_players
    }

    pub fn root(&self) -> HistoryId {
        0
    }

    pub fn histories(&self) -> &[History<T>] {
        &self.histories
    }

    pub fn history(&self, h: HistoryId) -> &History<T> {
        &self.histories[h]
    }

    pub fn num_histories(&self) -> usize {
        self.histories.len()
    }

    pub fn infostates(&self) -> &[Infostate] {
        &self.infostates
    }

    pub fn infostate(&self, x: InfostateId) -> &Infostate {
        &self.infostates[x]
    }

    pub fn num_infostates(&self) -> usize {
        self.infostates.len()
    }

    /// Global ids of player `i`'s infostates, ordered by per-player index.
    pub fn player_infostates(&self, player: usize) -> &[InfostateId] {
        &self.player_infostates[player]
    }

    /// Global id of player `i`'s infostate with dense index `index`.
    pub fn infostate_id(&self, player: usize, index: usize) -> Option<InfostateId> {
        self.player_infostates.get(player)?.get(index).copied()
    }

    /// Total number of non-terminal transitions `(h, a)`.
    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn edge(&self, h: HistoryId, a: usize) -> usize {
        self.histories[h].edge_offset + a
    }

    pub fn child(&self, h: HistoryId, a: usize) -> HistoryId {
        self.histories[h].children[a]
    }

    /// Base reward `r^i(h, a)`.
    pub fn reward(&self, h: HistoryId, a: usize, player: usize) -> T {
        self.histories[h].rewards[a * self.num_players + player]
    }

    pub fn terminals(&self) -> impl Iterator<Item = HistoryId> + '_ {
        self.histories
            .iter()
            .enumerate()
            .filter(|(_, h)| h.is_terminal())
            .map(|(id, _)| id)
    }

    /// Path from the root to `h` as `(history, action)` transitions.
    pub fn path(&self, h: HistoryId) -> Vec<(HistoryId, usize)> {
        let mut path = Vec::with_capacity(self.histories[h].depth);
        let mut cur = h;
        while let Some((parent, action)) = self.histories[cur].parent {
            path.push((parent, action));
            cur = parent;
        }
        path.reverse();
        path
    }

    /// Sum over the path of base rewards for every player (the realized return of a terminal).
    pub fn realized_return(&self, h: HistoryId) -> Vec<T> {
        let mut total = vec![T::zero(); self.num_players];
        for (hp, a) in self.path(h) {
            for (i, t) in total.iter_mut().enumerate() {
                *t += self.reward(hp, a, i);
            }
        }
        total
    }
}

/// One outgoing transition in a [`NodeSpec`].
#[derive(Debug, Clone)]
pub struct Edge<T> {
    pub label: String,
    /// Reward of the transition for every player.
    pub reward: Vec<T>,
    pub child: NodeSpec<T>,
}

impl<T: Scalar> Edge<T> {
    pub fn new(label: impl Into<String>, reward: Vec<T>, child: NodeSpec<T>) -> Self {
        Self {
            label: label.into(),
            reward,
            child,
        }
    }

    /// Transition with zero reward for `num_players` players.
    pub fn silent(label: impl Into<String>, num_players: usize, child: NodeSpec<T>) -> Self {
        Self::new(label, vec![T::zero(); num_players], child)
    }

    /// Final transition carrying the terminal payoff vector.
    pub fn terminal(label: impl Into<String>, payoff: Vec<T>) -> Self {
        Self::new(label, payoff, NodeSpec::Terminal)
    }
}

/// Recursive description of a game, flattened by [`GameTree::from_spec`].
#[derive(Debug, Clone)]
pub enum NodeSpec<T> {
    Terminal,
    Chance {
        outcomes: Vec<(T, Edge<T>)>,
    },
    Decision {
        player: usize,
        infostate: String,
        actions: Vec<Edge<T>>,
    },
}

impl<T: Scalar> GameTree<T> {
    /// Flattens a recursive description. Structural errors (reward vectors of
    /// the wrong length, player ids out of range) are rejected; semantic
    /// invariants such as perfect recall are left to [`validate`].
    pub fn from_spec(num_players: usize, root: NodeSpec<T>) -> Result<Self> {
        if num_players == 0 {
            return Err(Error::InvalidGame("a game needs at least one player".into()));
        }
        let mut flat = Flattener {
            num_players,
            histories: Vec::new(),
            infostates: Vec::new(),
            player_infostates: vec![Vec::new(); num_players],
            keys: HashMap::new(),
            num_edges: 0,
        };
        flat.push(root, None, 0)?;
        Ok(GameTree {
            num_players,
            histories: flat.histories,
            infostates: flat.infostates,
            player_infostates: flat.player_infostates,
            num_edges: flat.num_edges,
        })
    }
}

struct Flattener<T> {
    num_players: usize,
    histories: Vec<History<T>>,
    infostates: Vec<Infostate>,
    player_infostates: Vec<Vec<InfostateId>>,
    keys: HashMap<String, InfostateId>,
    num_edges: usize,
}

impl<T: Scalar> Flattener<T> {
    fn push(
        &mut self,
        node: NodeSpec<T>,
        parent: Option<(HistoryId, usize)>,
        depth: usize,
    ) -> Result<HistoryId> {
        let id = self.histories.len();
        let (actor, infostate, chance_probs, edges) = match node {
            NodeSpec::Terminal => (Actor::Terminal, None, Vec::new(), Vec::new()),
            NodeSpec::Chance { outcomes } => {
                let (probs, edges): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
                (Actor::Chance, None, probs, edges)
            }
            NodeSpec::Decision {
                player,
                infostate,
                actions,
            } => {
                if player >= self.num_players {
                    return Err(Error::InvalidGame(format!(
                        "history {id}: player {player} out of range"
                    )));
                }
                let x = self.intern(infostate, player, actions.len());
                self.infostates[x].histories.push(id);
                (Actor::Player(player), Some(x), Vec::new(), actions)
            }
        };
        let mut rewards = Vec::with_capacity(edges.len() * self.num_players);
        let mut labels = Vec::with_capacity(edges.len());
        let mut children_specs = Vec::with_capacity(edges.len());
        for edge in edges {
            if edge.reward.len() != self.num_players {
                return Err(Error::InvalidGame(format!(
                    "history {id}: reward vector of length {} for {} players",
                    edge.reward.len(),
                    self.num_players
                )));
            }
            rewards.extend(edge.reward);
            labels.push(edge.label);
            children_specs.push(edge.child);
        }
        let edge_offset = self.num_edges;
        self.num_edges += children_specs.len();
        self.histories.push(History {
            parent,
            actor,
            infostate,
            children: Vec::with_capacity(children_specs.len()),
            chance_probs,
            action_labels: labels,
            rewards,
            edge_offset,
            depth,
        });
        for (a, child) in children_specs.into_iter().enumerate() {
            let c = self.push(child, Some((id, a)), depth + 1)?;
            self.histories[id].children.push(c);
        }
        Ok(id)
    }

    fn intern(&mut self, key: String, player: usize, num_actions: usize) -> InfostateId {
        if let Some(&x) = self.keys.get(&key) {
            return x;
        }
        let x = self.infostates.len();
        let index = self.player_infostates[player].len();
        self.player_infostates[player].push(x);
        self.keys.insert(key.clone(), x);
        self.infostates.push(Infostate {
            key,
            player,
            index,
            num_actions,
            histories: Vec::new(),
        });
        x
    }
}
