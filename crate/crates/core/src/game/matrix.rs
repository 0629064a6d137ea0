use super::{Edge, GameTree, NodeSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Two-player zero-sum normal-form game embedded as a two-ply tree.
///
/// Player 0 moves at the root; player 1 moves next without observing that
/// move (one shared infostate). Terminal payoff is `(A[r][c], -A[r][c])`.
pub fn build_matrix_game<T: Scalar>(payoff: &[Vec<T>]) -> Result<GameTree<T>> {
    let rows = payoff.len();
    let cols = payoff.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidGame("empty payoff matrix".into()));
    }
    if payoff.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidGame("ragged payoff matrix".into()));
    }
    if payoff.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidGame("non-finite payoff".into()));
    }
    let root = NodeSpec::Decision {
        player: 0,
        infostate: "p0".into(),
        actions: (0..rows)
            .map(|r| {
                let second = NodeSpec::Decision {
                    player: 1,
                    infostate: "p1".into(),
                    actions: (0..cols)
                        .map(|c| Edge::terminal(format!("c{c}"), vec![payoff[r][c], -payoff[r][c]]))
                        .collect(),
                };
                Edge::silent(format!("r{r}"), 2, second)
            })
            .collect(),
    };
    GameTree::from_spec(2, root)
}

/// Pairwise payoff blocks of an N-player polymatrix game.
///
/// `blocks[i][j]` is the `k_i x k_j` matrix `A^{ij}` paid to player `i` from
/// its interaction with player `j`; diagonal entries are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct PolymatrixPayoffs<T> {
    pub actions: Vec<usize>,
    pub blocks: Vec<Vec<Vec<Vec<T>>>>,
}

impl<T: Scalar> PolymatrixPayoffs<T> {
    /// Builds the family from the blocks `A^{ij}` with `i < j`, filling
    /// `A^{ji} = -(A^{ij})^T`.
    pub fn from_upper(actions: Vec<usize>, mut upper: impl FnMut(usize, usize) -> Vec<Vec<T>>) -> Self {
        let n = actions.len();
        let mut blocks = vec![vec![Vec::new(); n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let a = upper(i, j);
                let mut t = vec![vec![T::zero(); actions[i]]; actions[j]];
                for (r, row) in a.iter().enumerate() {
                    for (c, &v) in row.iter().enumerate() {
                        t[c][r] = -v;
                    }
                }
                blocks[i][j] = a;
                blocks[j][i] = t;
            }
        }
        Self { actions, blocks }
    }

    pub fn num_players(&self) -> usize {
        self.actions.len()
    }

    /// Payoff of every player for a pure action profile.
    pub fn payoff(&self, profile: &[usize]) -> Vec<T> {
        let n = self.num_players();
        (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| self.blocks[i][j][profile[i]][profile[j]])
                    .sum()
            })
            .collect()
    }

    fn check(&self) -> Result<()> {
        let n = self.num_players();
        if n < 2 {
            return Err(Error::InvalidGame("polymatrix game needs at least two players".into()));
        }
        if self.actions.contains(&0) {
            return Err(Error::InvalidGame("every player needs at least one action".into()));
        }
        if self.blocks.len() != n || self.blocks.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidGame("expected an N x N family of blocks".into()));
        }
        let tol = T::lit(1e-12);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let a = &self.blocks[i][j];
                if a.len() != self.actions[i] || a.iter().any(|r| r.len() != self.actions[j]) {
                    return Err(Error::InvalidGame(format!(
                        "block A^({i},{j}) must be {} x {}",
                        self.actions[i], self.actions[j]
                    )));
                }
                for (r, row) in a.iter().enumerate() {
                    for (c, &v) in row.iter().enumerate() {
                        let mirror = self.blocks[j][i]
                            .get(c)
                            .and_then(|row| row.get(r))
                            .copied()
                            .unwrap_or_else(T::nan);
                        if !v.is_finite() || !((v + mirror).abs() <= tol) {
                            return Err(Error::InvalidGame(format!(
                                "antisymmetry violated: A^({i},{j})[{r}][{c}] = {v} but A^({j},{i})[{c}][{r}] = {mirror}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Zero-sum polymatrix game: players move in turn, each blind to all earlier moves.
pub fn build_polymatrix_game<T: Scalar>(payoffs: &PolymatrixPayoffs<T>) -> Result<GameTree<T>> {
    payoffs.check()?;
    let n = payoffs.num_players();
    let mut profile = Vec::with_capacity(n);
    let root = polymatrix_node(payoffs, &mut profile);
    GameTree::from_spec(n, root)
}

fn polymatrix_node<T: Scalar>(payoffs: &PolymatrixPayoffs<T>, profile: &mut Vec<usize>) -> NodeSpec<T> {
    let n = payoffs.num_players();
    let player = profile.len();
    let actions = (0..payoffs.actions[player])
        .map(|a| {
            profile.push(a);
            let edge = if player + 1 == n {
                Edge::terminal(format!("a{a}"), payoffs.payoff(profile))
            } else {
                Edge::silent(format!("a{a}"), n, polymatrix_node(payoffs, profile))
            };
            profile.pop();
            edge
        })
        .collect();
    NodeSpec::Decision {
        player,
        infostate: format!("p{player}"),
        actions,
    }
}
