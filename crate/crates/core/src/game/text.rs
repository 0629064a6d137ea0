//! Plain-text matrix and polymatrix game files.
//!
//! ```text
//! matrix R C
//! a11 a12 ... a1C
//! ...
//! aR1 ...     aRC
//! ```
//!
//! ```text
//! polymatrix N
//! k1 k2 ... kN
//! <A^(1,2): k1 rows of k2 numbers>
//! <A^(1,3)> ... <A^(N,N-1)>
//! ```
//!
//! Polymatrix blocks are listed for every ordered pair `i != j` in
//! lexicographic order. Blank lines and `#` comments are ignored. Each row
//! of a matrix must sit on its own line with exactly the expected width.

use super::{build_matrix_game, build_polymatrix_game, GameTree, PolymatrixPayoffs};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum GameFile<T> {
    Matrix(Vec<Vec<T>>),
    Polymatrix(PolymatrixPayoffs<T>),
}

impl<T: Scalar> GameFile<T> {
    pub fn build(&self) -> Result<GameTree<T>> {
        match self {
            GameFile::Matrix(m) => build_matrix_game(m),
            GameFile::Polymatrix(p) => build_polymatrix_game(p),
        }
    }
}

struct Lines<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
                .filter(|(_, l)| !l.is_empty()),
        );
        Self { inner: it.peekable() }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.inner.next().ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("unexpected end of file, expected {what}"),
        })
    }

    fn row<T: Scalar>(&mut self, width: usize, what: &str) -> Result<Vec<T>> {
        let (line, text) = self.next(what)?;
        let row = text
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .and_then(T::from_f64)
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: format!("malformed number '{tok}'"),
                    })
            })
            .collect::<Result<Vec<T>>>()?;
        if row.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("ragged row: {} entries, expected {width}", row.len()),
            });
        }
        Ok(row)
    }
}

fn parse_count(line: usize, tok: Option<&str>, what: &str) -> Result<usize> {
    tok.and_then(|t| t.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .ok_or_else(|| Error::Parse {
            line,
            message: format!("expected positive integer {what}"),
        })
}

pub fn parse_game_text<T: Scalar>(text: &str) -> Result<GameFile<T>> {
    let mut lines = Lines::new(text);
    let (line, header) = lines.next("header")?;
    let mut toks = header.split_whitespace();
    let kind = toks.next().unwrap_or("");
    let parsed = match kind {
        "matrix" => {
            let rows = parse_count(line, toks.next(), "row count")?;
            let cols = parse_count(line, toks.next(), "column count")?;
            if toks.next().is_some() {
                return Err(Error::Parse { line, message: "trailing tokens in header".into() });
            }
            let m = (0..rows)
                .map(|_| lines.row(cols, "matrix row"))
                .collect::<Result<Vec<_>>>()?;
            GameFile::Matrix(m)
        }
        "polymatrix" => {
            let n = parse_count(line, toks.next(), "player count")?;
            if toks.next().is_some() {
                return Err(Error::Parse { line, message: "trailing tokens in header".into() });
            }
            let (line, counts) = lines.next("action counts")?;
            let actions = counts
                .split_whitespace()
                .map(|t| parse_count(line, Some(t), "action count"))
                .collect::<Result<Vec<_>>>()?;
            if actions.len() != n {
                return Err(Error::Parse {
                    line,
                    message: format!("{} action counts for {n} players", actions.len()),
                });
            }
            let mut blocks = vec![vec![Vec::new(); n]; n];
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    blocks[i][j] = (0..actions[i])
                        .map(|_| lines.row(actions[j], "polymatrix row"))
                        .collect::<Result<Vec<_>>>()?;
                }
            }
            GameFile::Polymatrix(PolymatrixPayoffs { actions, blocks })
        }
        other => {
            return Err(Error::Parse {
                line,
                message: format!("unknown game kind '{other}', expected 'matrix' or 'polymatrix'"),
            })
        }
    };
    if let Some((line, _)) = lines.inner.next() {
        return Err(Error::Parse { line, message: "trailing data after game".into() });
    }
    Ok(parsed)
}
