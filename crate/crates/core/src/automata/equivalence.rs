use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::Dfa;
use crate::error::{Error, Result};

/// Outcome of a language-equivalence check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Equivalence {
    pub equivalent: bool,
    /// Shortest (then lexicographically least) string on which the two
    /// automata disagree.
    pub counterexample: Option<String>,
}

/// Breadth-first search of the product automaton for a reachable pair with
/// different acceptance.
pub(super) fn equivalent(a: &Dfa, b: &Dfa) -> Result<Equivalence> {
    if a.alphabet != b.alphabet {
        return Err(Error::AlphabetMismatch {
            left: a.alphabet.clone(),
            right: b.alphabet.clone(),
        });
    }
    let nb = b.num_states();
    let k = a.alphabet.len();
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; a.num_states() * nb];
    let mut seen = vec![false; a.num_states() * nb];
    let root = a.start * nb + b.start;
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(pair) = queue.pop_front() {
        let (p, q) = (pair / nb, pair % nb);
        if a.accepting[p] != b.accepting[q] {
            let mut symbols = Vec::new();
            let mut cur = pair;
            while let Some((prev, sym)) = parent[cur] {
                symbols.push(a.alphabet[sym]);
                cur = prev;
            }
            symbols.reverse();
            return Ok(Equivalence {
                equivalent: false,
                counterexample: Some(symbols.into_iter().collect()),
            });
        }
        for sym in 0..k {
            let next = a.transitions[p][sym] * nb + b.transitions[q][sym];
            if !seen[next] {
                seen[next] = true;
                parent[next] = Some((pair, sym));
                queue.push_back(next);
            }
        }
    }
    Ok(Equivalence {
        equivalent: true,
        counterexample: None,
    })
}
