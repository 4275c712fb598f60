//! Explicit deterministic finite automata, the Tomita oracles and labeled
//! string datasets.

mod dataset;
mod equivalence;
mod minimize;
mod text;
mod tomita;

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{generate_dataset, split_dataset, ClassCounts, LabeledDataset, Sample, Split};
pub use equivalence::Equivalence;
pub use tomita::{GrammarId, TOMITA_STATE_COUNTS};

/// Binary classification outcome. Ordering puts `Negative` first so that
/// argmax ties resolve toward it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn flip(self) -> Label {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Negative => "negative",
            Label::Positive => "positive",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s.trim() {
            "positive" | "1" | "pos" | "+" => Some(Label::Positive),
            "negative" | "0" | "neg" | "-" => Some(Label::Negative),
            _ => None,
        }
    }
}

impl From<bool> for Label {
    fn from(accepted: bool) -> Self {
        if accepted {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The alphabet every grammar in this crate is defined over.
pub const BINARY: [char; 2] = ['0', '1'];

/// A complete deterministic automaton. `transitions[q][a]` is the successor
/// of state `q` on the `a`-th alphabet symbol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dfa {
    alphabet: Vec<char>,
    transitions: Vec<Vec<usize>>,
    start: usize,
    accepting: Vec<bool>,
}

impl Dfa {
    pub fn new(
        alphabet: Vec<char>,
        transitions: Vec<Vec<usize>>,
        start: usize,
        accepting: impl IntoIterator<Item = usize>,
    ) -> Result<Dfa> {
        let n = transitions.len();
        if n == 0 {
            return Err(Error::MalformedDfa("no states".into()));
        }
        if alphabet.is_empty() {
            return Err(Error::MalformedDfa("empty alphabet".into()));
        }
        for (i, a) in alphabet.iter().enumerate() {
            if alphabet[..i].contains(a) {
                return Err(Error::MalformedDfa(format!("duplicate symbol {a:?}")));
            }
        }
        if start >= n {
            return Err(Error::MalformedDfa(format!("start {start} >= {n} states")));
        }
        for (q, row) in transitions.iter().enumerate() {
            if row.len() != alphabet.len() {
                return Err(Error::MalformedDfa(format!(
                    "state {q} has {} transitions, expected {}",
                    row.len(),
                    alphabet.len()
                )));
            }
            if let Some(&t) = row.iter().find(|&&t| t >= n) {
                return Err(Error::MalformedDfa(format!("state {q} targets {t} >= {n}")));
            }
        }
        let mut acc = vec![false; n];
        for q in accepting {
            if q >= n {
                return Err(Error::MalformedDfa(format!("accepting state {q} >= {n}")));
            }
            acc[q] = true;
        }
        Ok(Dfa {
            alphabet,
            transitions,
            start,
            accepting: acc,
        })
    }

    /// Shorthand for a DFA over `{0,1}` with rows `[on '0', on '1']`.
    pub fn binary(
        transitions: &[[usize; 2]],
        start: usize,
        accepting: impl IntoIterator<Item = usize>,
    ) -> Result<Dfa> {
        Dfa::new(
            BINARY.to_vec(),
            transitions.iter().map(|r| r.to_vec()).collect(),
            start,
            accepting,
        )
    }

    pub fn num_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn is_accepting(&self, q: usize) -> bool {
        self.accepting[q]
    }

    pub fn accepting_states(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_states()).filter(|&q| self.accepting[q])
    }

    pub fn next(&self, q: usize, symbol: usize) -> usize {
        self.transitions[q][symbol]
    }

    pub fn symbol_index(&self, c: char) -> Result<usize> {
        self.alphabet
            .iter()
            .position(|&a| a == c)
            .ok_or_else(|| Error::InvalidSymbol {
                symbol: c,
                alphabet: self.alphabet.clone(),
            })
    }

    /// State reached from `from` after consuming `x`.
    pub fn run_from(&self, from: usize, x: &str) -> Result<usize> {
        x.chars()
            .try_fold(from, |q, c| Ok(self.transitions[q][self.symbol_index(c)?]))
    }

    pub fn run(&self, x: &str) -> Result<usize> {
        self.run_from(self.start, x)
    }

    pub fn accepts(&self, x: &str) -> Result<bool> {
        Ok(self.accepting[self.run(x)?])
    }

    pub fn label(&self, x: &str) -> Result<Label> {
        self.accepts(x).map(Label::from)
    }

    /// Same language with accepting and rejecting states swapped.
    pub fn complement(&self) -> Dfa {
        let mut d = self.clone();
        for a in d.accepting.iter_mut() {
            *a = !*a;
        }
        d
    }

    /// States reachable from the start state, in breadth-first order.
    pub fn reachable(&self) -> Vec<usize> {
        let mut seen = vec![false; self.num_states()];
        let mut order = Vec::new();
        let mut queue = VecDeque::from([self.start]);
        seen[self.start] = true;
        while let Some(q) = queue.pop_front() {
            order.push(q);
            for &t in &self.transitions[q] {
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        order
    }

    pub fn minimize(&self) -> Dfa {
        minimize::hopcroft(self)
    }

    pub fn equivalent(&self, other: &Dfa) -> Result<Equivalence> {
        equivalence::equivalent(self, other)
    }

    pub fn to_text(&self) -> String {
        text::write(self)
    }

    pub fn from_text(s: &str) -> Result<Dfa> {
        text::parse(s)
    }

    /// Renumber states in breadth-first order from the start state, dropping
    /// unreachable states. Two isomorphic DFAs map to the same value.
    pub fn canonical(&self) -> Dfa {
        let order = self.reachable();
        let mut index = vec![usize::MAX; self.num_states()];
        for (i, &q) in order.iter().enumerate() {
            index[q] = i;
        }
        let transitions = order
            .iter()
            .map(|&q| self.transitions[q].iter().map(|&t| index[t]).collect())
            .collect();
        let accepting = order.iter().map(|&q| self.accepting[q]).collect();
        Dfa {
            alphabet: self.alphabet.clone(),
            transitions,
            start: 0,
            accepting,
        }
    }
}

/// Membership of `x` in the language of `d`.
pub fn dfa_accepts(d: &Dfa, x: &str) -> Result<Label> {
    d.label(x)
}

pub fn tomita_dfa(g: GrammarId) -> Dfa {
    tomita::dfa(g)
}

pub fn minimize(d: &Dfa) -> Dfa {
    d.minimize()
}

pub fn equivalent(a: &Dfa, b: &Dfa) -> Result<Equivalence> {
    a.equivalent(b)
}

/// Every string over `{0,1}` of exactly `n` symbols, in lexicographic order.
pub fn binary_strings(n: usize) -> impl Iterator<Item = String> {
    assert!(n < usize::BITS as usize, "length {n} too large to enumerate");
    (0usize..1 << n).map(move |bits| {
        (0..n)
            .map(|i| if bits >> (n - 1 - i) & 1 == 1 { '1' } else { '0' })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(id: u8) -> Dfa {
        tomita_dfa(GrammarId::new(id).unwrap())
    }

    #[test]
    fn rejects_foreign_symbols() {
        let err = g(1).accepts("12").unwrap_err();
        assert!(matches!(err, Error::InvalidSymbol { symbol: '2', .. }));
    }

    #[test]
    fn empty_string_is_start_membership() {
        assert_eq!(dfa_accepts(&g(1), "").unwrap(), Label::Positive);
        assert_eq!(dfa_accepts(&g(3), "").unwrap(), Label::Positive);
        let d = Dfa::binary(&[[1, 1], [1, 1]], 0, [1]).unwrap();
        assert_eq!(dfa_accepts(&d, "").unwrap(), Label::Negative);
    }

    #[test]
    fn constructor_validates() {
        assert!(Dfa::binary(&[[0, 2]], 0, []).is_err());
        assert!(Dfa::binary(&[[0, 0]], 1, []).is_err());
        assert!(Dfa::binary(&[[0, 0]], 0, [3]).is_err());
        assert!(Dfa::new(vec!['0', '0'], vec![vec![0, 0]], 0, []).is_err());
        assert!(Dfa::new(vec!['0'], vec![vec![0, 0]], 0, []).is_err());
    }

    #[test]
    fn complement_flips_every_string() {
        let d = g(4);
        let c = d.complement();
        for n in 0..7 {
            for x in binary_strings(n) {
                assert_ne!(d.accepts(&x).unwrap(), c.accepts(&x).unwrap());
            }
        }
    }

    #[test]
    fn binary_strings_enumerates_in_order() {
        let v: Vec<String> = binary_strings(2).collect();
        assert_eq!(v, ["00", "01", "10", "11"]);
        assert_eq!(binary_strings(0).collect::<Vec<_>>(), [""]);
    }

    #[test]
    fn label_ordering_prefers_negative() {
        assert!(Label::Negative < Label::Positive);
        assert_eq!(Label::Positive.flip(), Label::Negative);
        assert_eq!(Label::parse("positive"), Some(Label::Positive));
        assert_eq!(Label::parse("maybe"), None);
    }
}
