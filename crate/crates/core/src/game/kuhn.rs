use super::{Edge, GameTree, NodeSpec};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::scalar::Scalar;

const CARDS: [&str; 3] = ["J", "Q", "K"];

/// Two-player Kuhn poker with a three card deck (J < Q < K) and an ante of 1.
///
/// A single chance node deals one of the six ordered card pairs. Action 0 is
/// pass (check or fold), action 1 is bet (bet or call).
pub fn build_kuhn_poker<T: Scalar>() -> GameTree<T> {
    let prob = T::lit(1.0) / T::lit(6.0);
    let mut outcomes = Vec::with_capacity(6);
    for c0 in 0..3 {
        for c1 in 0..3 {
            if c0 != c1 {
                let label = format!("{}{}", CARDS[c0], CARDS[c1]);
                outcomes.push((prob, Edge::silent(label, 2, betting_node([c0, c1], String::new()))));
            }
        }
    }
    GameTree::from_spec(2, NodeSpec::Chance { outcomes }).expect("kuhn poker is well formed")
}

fn betting_node<T: Scalar>(cards: [usize; 2], seq: String) -> NodeSpec<T> {
    let player = seq.len() % 2;
    let infostate = format!("{}:{}{}", player, CARDS[cards[player]], seq);
    let actions = ["p", "b"]
        .into_iter()
        .map(|act| {
            let next = format!("{seq}{act}");
            match terminal_payoff(cards, &next) {
                Some(v) => Edge::terminal(act, vec![T::lit(v), T::lit(-v)]),
                None => Edge::silent(act, 2, betting_node(cards, next)),
            }
        })
        .collect();
    NodeSpec::Decision {
        player,
        infostate,
        actions,
    }
}

/// Payoff to player 0 if `seq` ends the hand.
fn terminal_payoff(cards: [usize; 2], seq: &str) -> Option<f64> {
    let showdown = if cards[0] > cards[1] { 1.0 } else { -1.0 };
    match seq {
        "pp" => Some(showdown),
        "bb" | "pbb" => Some(2.0 * showdown),
        "bp" => Some(1.0),
        "pbp" => Some(-1.0),
        _ => None,
    }
}

/// Member of the one-parameter Nash family of Kuhn poker, `alpha` in `[0, 1/3]`.
///
/// The first player bets a jack with probability `alpha`, a king with
/// `3 alpha`, and calls a bet holding a queen with `alpha + 1/3`. The second
/// player's strategy is fixed. Root value for the first player is `-1/18`.
pub fn kuhn_equilibrium<T: Scalar>(game: &GameTree<T>, alpha: T) -> Result<Policy<T>> {
    let third = T::one() / T::lit(3.0);
    if !(alpha >= T::zero() && alpha <= third) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1/3], got {alpha}")));
    }
    let bet = |p: T| vec![T::one() - p, p];
    let table = [
        ("0:J", bet(alpha)),
        ("0:Q", bet(T::zero())),
        ("0:K", bet(T::lit(3.0) * alpha)),
        ("0:Jpb", bet(T::zero())),
        ("0:Qpb", bet(alpha + third)),
        ("0:Kpb", bet(T::one())),
        ("1:Jp", bet(third)),
        ("1:Jb", bet(T::zero())),
        ("1:Qp", bet(T::zero())),
        ("1:Qb", bet(third)),
        ("1:Kp", bet(T::one())),
        ("1:Kb", bet(T::one())),
    ];
    let mut policy = Policy::empty(game);
    for (key, probs) in table {
        let x = game
            .infostates()
            .iter()
            .position(|info| info.key == key)
            .ok_or_else(|| Error::InvalidArgument(format!("game has no Kuhn infostate '{key}'")))?;
        policy.set(x, probs);
    }
    policy.check_complete(game)?;
    Ok(policy)
}
