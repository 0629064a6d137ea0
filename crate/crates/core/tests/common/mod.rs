//! Independent Kuhn poker enumerator used as a test oracle. It shares no code
//! with the game tree: rules, payoffs and strategy indexing are rewritten here.

#![allow(dead_code)]

use std::collections::HashMap;

use forel_core::{GameTree, Policy};

const CARD: [char; 3] = ['J', 'Q', 'K'];

/// Decision sequences per player, in the order used for pure-strategy bits.
pub const SEQS: [[&str; 2]; 2] = [["", "pb"], ["p", "b"]];

/// Payoff to the first player, if `seq` is terminal.
fn showdown(c0: usize, c1: usize, seq: &str) -> Option<f64> {
    let winner = if c0 > c1 { 1.0 } else { -1.0 };
    match seq {
        "pp" => Some(winner),
        "bp" => Some(1.0),
        "pbp" => Some(-1.0),
        "bb" | "pbb" => Some(2.0 * winner),
        _ => None,
    }
}

/// Behavioral probabilities of the opponent, keyed by "player:CARDseq".
pub struct Lookup(HashMap<String, [f64; 2]>);

impl Lookup {
    pub fn new(game: &GameTree<f64>, policy: &Policy<f64>) -> Self {
        let mut map = HashMap::new();
        for (x, info) in game.infostates().iter().enumerate() {
            let b = policy.get(x);
            if b.len() == 2 {
                map.insert(info.key.clone(), [b[0], b[1]]);
            }
        }
        Lookup(map)
    }

    fn prob(&self, player: usize, card: usize, seq: &str, bet: bool) -> f64 {
        let key = format!("{player}:{}{seq}", CARD[card]);
        self.0[&key][bet as usize]
    }
}

fn bit(player: usize, card: usize, seq: &str, strategy: u32) -> bool {
    let s = SEQS[player].iter().position(|&q| q == seq).unwrap();
    strategy >> (card * 2 + s) & 1 == 1
}

fn walk(player: usize, strategy: u32, opp: &Lookup, cards: [usize; 2], seq: &str) -> f64 {
    if let Some(v) = showdown(cards[0], cards[1], seq) {
        return if player == 0 { v } else { -v };
    }
    let actor = seq.len() % 2;
    let next = |act: &str| walk(player, strategy, opp, cards, &format!("{seq}{act}"));
    if actor == player {
        if bit(player, cards[player], seq, strategy) {
            next("b")
        } else {
            next("p")
        }
    } else {
        let pb = opp.prob(actor, cards[actor], seq, true);
        (1.0 - pb) * next("p") + pb * next("b")
    }
}

/// Expected payoff of pure strategy `strategy` (6 bits) for `player`.
pub fn pure_value(player: usize, strategy: u32, opp: &Lookup) -> f64 {
    let mut total = 0.0;
    for c0 in 0..3 {
        for c1 in 0..3 {
            if c0 != c1 {
                total += walk(player, strategy, opp, [c0, c1], "") / 6.0;
            }
        }
    }
    total
}

/// Best value over all 64 pure strategies.
pub fn brute_force_best(player: usize, opp: &Lookup) -> f64 {
    (0..64).map(|s| pure_value(player, s, opp)).fold(f64::NEG_INFINITY, f64::max)
}

/// Encodes a pure block-per-infostate policy of `player` as strategy bits.
pub fn strategy_bits(game: &GameTree<f64>, policy: &Policy<f64>, player: usize) -> u32 {
    let mut bits = 0;
    for (x, info) in game.infostates().iter().enumerate() {
        if info.player != player {
            continue;
        }
        let card = CARD.iter().position(|&c| info.key.chars().nth(2) == Some(c)).unwrap();
        let seq = &info.key[3..];
        let s = SEQS[player].iter().position(|&q| q == seq).unwrap();
        if policy.get(x)[1] > 0.5 {
            bits |= 1 << (card * 2 + s);
        }
    }
    bits
}

/// Value to the first player of a full behavioral profile.
pub fn profile_value(game: &GameTree<f64>, policy: &Policy<f64>) -> f64 {
    let look = Lookup::new(game, policy);
    let mut total = 0.0;
    for c0 in 0..3 {
        for c1 in 0..3 {
            if c0 != c1 {
                total += mixed(&look, [c0, c1], "") / 6.0;
            }
        }
    }
    total
}

fn mixed(look: &Lookup, cards: [usize; 2], seq: &str) -> f64 {
    if let Some(v) = showdown(cards[0], cards[1], seq) {
        return v;
    }
    let actor = seq.len() % 2;
    let pb = look.prob(actor, cards[actor], seq, true);
    (1.0 - pb) * mixed(look, cards, &format!("{seq}p")) + pb * mixed(look, cards, &format!("{seq}b"))
}
