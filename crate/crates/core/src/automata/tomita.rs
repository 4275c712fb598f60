use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Dfa;
use crate::error::Error;

/// One of the seven Tomita grammars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct GrammarId(u8);

impl GrammarId {
    pub fn new(id: u8) -> Result<GrammarId, Error> {
        if (1..=7).contains(&id) {
            Ok(GrammarId(id))
        } else {
            Err(Error::InvalidGrammar(id))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = GrammarId> {
        (1..=7).map(GrammarId)
    }
}

impl TryFrom<u8> for GrammarId {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self, Error> {
        GrammarId::new(v)
    }
}

impl From<GrammarId> for u8 {
    fn from(g: GrammarId) -> u8 {
        g.0
    }
}

impl fmt::Display for GrammarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for GrammarId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        let s = s.strip_prefix('G').or_else(|| s.strip_prefix('g')).unwrap_or(s);
        let v: u8 = s
            .parse()
            .map_err(|_| Error::InvalidInput(format!("not a grammar id: {s:?}")))?;
        GrammarId::new(v)
    }
}

/// Minimal state counts of the canonical oracles, grammar 1 first.
pub const TOMITA_STATE_COUNTS: [usize; 7] = [2, 3, 5, 4, 4, 3, 5];

// Rows are [on '0', on '1']. Every table is minimal and total.
pub(super) fn dfa(g: GrammarId) -> Dfa {
    let built = match g.0 {
        // 1*
        1 => Dfa::binary(&[[1, 0], [1, 1]], 0, [0]),
        // (10)*
        2 => Dfa::binary(&[[2, 1], [0, 2], [2, 2]], 0, [0]),
        // no odd-length run of 1s immediately followed by an odd-length run of 0s.
        // 0: neutral, 1: inside an odd run of 1s, 2: odd 0s after odd 1s,
        // 3: even 0s after odd 1s, 4: sink
        3 => Dfa::binary(&[[0, 1], [2, 0], [3, 4], [2, 1], [4, 4]], 0, [0, 1, 3]),
        // no "000"; state = length of the trailing run of 0s
        4 => Dfa::binary(&[[1, 0], [2, 0], [3, 0], [3, 3]], 0, [0, 1, 2]),
        // even 0s and even 1s; state = 2 * (#1 mod 2) + (#0 mod 2)
        5 => Dfa::binary(&[[1, 2], [0, 3], [3, 0], [2, 1]], 0, [0]),
        // (#0 - #1) mod 3 == 0
        6 => Dfa::binary(&[[1, 2], [2, 0], [0, 1]], 0, [0]),
        // 0*1*0*1*
        7 => Dfa::binary(&[[0, 1], [2, 1], [2, 3], [4, 3], [4, 4]], 0, [0, 1, 2, 3]),
        _ => unreachable!("GrammarId is validated on construction"),
    };
    built.expect("hand-written Tomita tables are well formed")
}
