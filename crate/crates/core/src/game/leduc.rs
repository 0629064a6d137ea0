use super::{Edge, GameTree, NodeSpec};
use crate::scalar::Scalar;

const DECK: usize = 6;
const RAISE: [f64; 2] = [2.0, 4.0];
const MAX_RAISES: usize = 2;

fn rank(card: usize) -> usize {
    card / 2
}

#[derive(Clone)]
struct State {
    cards: [usize; 2],
    public: Option<usize>,
    round: usize,
    /// Betting actions of the completed first round and of the current round.
    rounds: [String; 2],
    contrib: [f64; 2],
    raises: usize,
}

impl State {
    fn to_act(&self) -> usize {
        self.rounds[self.round].len() % 2
    }

    fn key(&self, player: usize) -> String {
        let public = self.public.map_or("-".to_string(), |c| c.to_string());
        format!(
            "{player}:{}:{public}:{}|{}",
            self.cards[player], self.rounds[0], self.rounds[1]
        )
    }
}

/// Two-player Leduc hold'em: six cards (two suits of J, Q, K), antes of 1,
/// raises of 2 then 4, at most two raises per round. Folding is only legal
/// when facing a bet. Cards are distinguished by suit in infostate keys,
/// which gives 936 infostates in total.
pub fn build_leduc_poker<T: Scalar>() -> GameTree<T> {
    let p0_prob = T::lit(1.0 / DECK as f64);
    let p1_prob = T::lit(1.0 / (DECK - 1) as f64);
    let outcomes = (0..DECK)
        .map(|c0| {
            let inner = (0..DECK)
                .filter(|&c1| c1 != c0)
                .map(|c1| {
                    let state = State {
                        cards: [c0, c1],
                        public: None,
                        round: 0,
                        rounds: [String::new(), String::new()],
                        contrib: [1.0, 1.0],
                        raises: 0,
                    };
                    (p1_prob, Edge::silent(format!("c{c1}"), 2, betting(state)))
                })
                .collect();
            (p0_prob, Edge::silent(format!("c{c0}"), 2, NodeSpec::Chance { outcomes: inner }))
        })
        .collect();
    GameTree::from_spec(2, NodeSpec::Chance { outcomes }).expect("leduc poker is well formed")
}

fn betting<T: Scalar>(state: State) -> NodeSpec<T> {
    let player = state.to_act();
    let facing_bet = state.contrib[1 - player] > state.contrib[player];
    let mut actions = Vec::with_capacity(3);
    if facing_bet {
        let mut payoff = [0.0; 2];
        payoff[player] = -state.contrib[player];
        payoff[1 - player] = state.contrib[player];
        actions.push(Edge::terminal("f", payoff.iter().map(|&v| T::lit(v)).collect()));
    }
    {
        let mut next = state.clone();
        next.contrib[player] = next.contrib[1 - player];
        next.rounds[next.round].push('c');
        let round_over = next.rounds[next.round].len() >= 2;
        actions.push(if round_over {
            end_of_round(next)
        } else {
            Edge::silent("c", 2, betting(next))
        });
    }
    if state.raises < MAX_RAISES {
        let mut next = state.clone();
        next.contrib[player] = next.contrib[1 - player] + RAISE[state.round];
        next.raises += 1;
        next.rounds[next.round].push('r');
        actions.push(Edge::silent("r", 2, betting(next)));
    }
    let infostate = state.key(player);
    NodeSpec::Decision {
        player,
        infostate,
        actions,
    }
}

/// Transition for a call that closes the current betting round.
fn end_of_round<T: Scalar>(state: State) -> Edge<T> {
    if state.round == 0 {
        let remaining: Vec<usize> = (0..DECK).filter(|c| !state.cards.contains(c)).collect();
        let prob = T::lit(1.0 / remaining.len() as f64);
        let outcomes = remaining
            .into_iter()
            .map(|public| {
                let mut next = state.clone();
                next.public = Some(public);
                next.round = 1;
                next.raises = 0;
                (prob, Edge::silent(format!("d{public}"), 2, betting(next)))
            })
            .collect();
        Edge::silent("c", 2, NodeSpec::Chance { outcomes })
    } else {
        let public = state.public.expect("public card dealt before second round");
        let strength = |card: usize| {
            if rank(card) == rank(public) {
                10 + rank(card)
            } else {
                rank(card)
            }
        };
        let (s0, s1) = (strength(state.cards[0]), strength(state.cards[1]));
        let pot = state.contrib[0];
        let v = match s0.cmp(&s1) {
            std::cmp::Ordering::Greater => pot,
            std::cmp::Ordering::Less => -pot,
            std::cmp::Ordering::Equal => 0.0,
        };
        Edge::terminal("c", vec![T::lit(v), T::lit(-v)])
    }
}
