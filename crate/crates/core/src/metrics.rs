//! Edit distance between strings and between the label classes of a grammar.

use std::fmt;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::automata::{tomita_dfa, GrammarId, Label};
use crate::error::{Error, Result};

/// Unit-cost Levenshtein distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = (diag + usize::from(ca != cb)).min(up + 1).min(row[j] + 1);
            diag = up;
        }
    }
    row[b.len()]
}

/// Levenshtein distance if it is at most `bound`, else `None`. Only the
/// diagonal band of width `bound` is evaluated.
pub fn levenshtein_within<T: PartialEq>(a: &[T], b: &[T], bound: usize) -> Option<usize> {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    if a.len() - b.len() > bound {
        return None;
    }
    let over = bound + 1;
    let mut prev: Vec<usize> = (0..=b.len()).map(|j| j.min(over)).collect();
    let mut cur = vec![over; b.len() + 1];
    for i in 1..=a.len() {
        let lo = i.saturating_sub(bound).max(1);
        let hi = (i + bound).min(b.len());
        cur.fill(over);
        cur[0] = i.min(over);
        let mut row_min = cur[0];
        for j in lo..=hi {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            let v = sub.min(prev[j] + 1).min(cur[j - 1] + 1).min(over);
            cur[j] = v;
            row_min = row_min.min(v);
        }
        if row_min > bound {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[b.len()];
    (d <= bound).then_some(d)
}

pub fn edit_distance(a: &str, b: &str) -> usize {
    if a.is_ascii() && b.is_ascii() {
        levenshtein(a.as_bytes(), b.as_bytes())
    } else {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        levenshtein(&a, &b)
    }
}

/// `floor` is a known lower bound on the answer; the scan stops once it is hit.
fn min_distance_bytes(x: &[u8], set: &[&[u8]], floor: usize) -> usize {
    let mut best = usize::MAX;
    for y in set {
        if y.len().abs_diff(x.len()) >= best {
            continue;
        }
        let bound = best.saturating_sub(1).min(x.len().max(y.len()));
        if let Some(d) = levenshtein_within(x, y, bound) {
            best = d;
            if best <= floor {
                break;
            }
        }
    }
    best
}

/// Minimum edit distance from `x` to any member of `set`.
pub fn min_distance_to_set<S: AsRef<str>>(x: &str, set: &[S]) -> Result<usize> {
    if set.is_empty() {
        return Err(Error::InvalidInput(
            "distance to an empty set is undefined".into(),
        ));
    }
    if x.is_ascii() && set.iter().all(|s| s.as_ref().is_ascii()) {
        let set: Vec<&[u8]> = set.iter().map(|s| s.as_ref().as_bytes()).collect();
        if set.contains(&x.as_bytes()) {
            return Ok(0);
        }
        Ok(min_distance_bytes(x.as_bytes(), &set, 1))
    } else {
        Ok(set
            .iter()
            .map(|s| edit_distance(x, s.as_ref()))
            .min()
            .expect("non-empty"))
    }
}

/// Which edit operations the class-to-class distance may use.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    /// Edits never leave length N, which leaves only substitutions (Hamming
    /// distance). This is the convention that reproduces the published
    /// fixed-length table.
    #[default]
    SameLength,
    /// Unrestricted Levenshtein: paths may pass through other lengths.
    Levenshtein,
}

impl fmt::Display for DistanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceMode::SameLength => "same-length",
            DistanceMode::Levenshtein => "levenshtein",
        })
    }
}

impl std::str::FromStr for DistanceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "same-length" | "hamming" => Ok(DistanceMode::SameLength),
            "levenshtein" => Ok(DistanceMode::Levenshtein),
            _ => Err(Error::InvalidInput(format!("unknown distance mode {s:?}"))),
        }
    }
}

/// Fixed-length average edit distance between the accepted and rejected
/// strings of a grammar. Sums are exact integers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub grammar: GrammarId,
    pub length: usize,
    pub mode: DistanceMode,
    pub positives: u64,
    pub negatives: u64,
    /// Sum over positives of the distance to the nearest negative.
    pub positive_sum: u64,
    /// Sum over negatives of the distance to the nearest positive.
    pub negative_sum: u64,
}

impl DistanceReport {
    pub fn d_pos(&self) -> Ratio<u64> {
        Ratio::new(self.positive_sum, self.positives)
    }

    pub fn d_neg(&self) -> Ratio<u64> {
        Ratio::new(self.negative_sum, self.negatives)
    }

    pub fn d_avg(&self) -> Ratio<u64> {
        (self.d_pos() + self.d_neg()) / 2
    }

    pub fn d_pos_f64(&self) -> f64 {
        ratio_f64(self.d_pos())
    }

    pub fn d_neg_f64(&self) -> f64 {
        ratio_f64(self.d_neg())
    }

    pub fn d_avg_f64(&self) -> f64 {
        ratio_f64(self.d_avg())
    }
}

pub fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

// The two classes are disjoint, so every distance is at least one.
fn levenshtein_sum(from: &[&[u8]], to: &[&[u8]]) -> u64 {
    from.par_iter()
        .map(|x| min_distance_bytes(x, to, 1) as u64)
        .sum()
}

fn hamming_sum(from: &[u64], to: &[u64]) -> u64 {
    from.par_iter()
        .map(|&x| {
            let mut best = u32::MAX;
            for &y in to {
                best = best.min((x ^ y).count_ones());
                if best == 1 {
                    break;
                }
            }
            u64::from(best)
        })
        .sum()
}

/// [`average_edit_distance_with`] in the default same-length mode.
pub fn average_edit_distance_at_n(g: GrammarId, n: usize) -> Result<DistanceReport> {
    average_edit_distance_with(g, n, DistanceMode::default())
}

/// Enumerates every string of length `n`, classifies it with the grammar's
/// oracle and averages the two directed nearest-opposite-class distances.
pub fn average_edit_distance_with(g: GrammarId, n: usize, mode: DistanceMode) -> Result<DistanceReport> {
    if n >= 40 {
        return Err(Error::InvalidInput(format!("length {n} is too long to enumerate")));
    }
    let oracle = tomita_dfa(g);
    let (pos, neg): (Vec<u64>, Vec<u64>) = (0u64..1 << n).partition(|&bits| {
        let q = (0..n).fold(oracle.start(), |q, i| oracle.next(q, (bits >> (n - 1 - i) & 1) as usize));
        oracle.is_accepting(q)
    });
    let empty = match (pos.is_empty(), neg.is_empty()) {
        (true, _) => Some(Label::Positive.as_str()),
        (_, true) => Some(Label::Negative.as_str()),
        _ => None,
    };
    if let Some(empty) = empty {
        return Err(Error::UndefinedDistance {
            grammar: g.get(),
            length: n,
            empty,
        });
    }
    let (positive_sum, negative_sum) = match mode {
        DistanceMode::SameLength => {
            rayon::join(|| hamming_sum(&pos, &neg), || hamming_sum(&neg, &pos))
        }
        DistanceMode::Levenshtein => {
            let spell = |v: &[u64]| -> Vec<Vec<u8>> {
                v.iter()
                    .map(|&bits| (0..n).map(|i| b'0' + (bits >> (n - 1 - i) & 1) as u8).collect())
                    .collect()
            };
            let (pos_s, neg_s) = (spell(&pos), spell(&neg));
            let pos_b: Vec<&[u8]> = pos_s.iter().map(Vec::as_slice).collect();
            let neg_b: Vec<&[u8]> = neg_s.iter().map(Vec::as_slice).collect();
            rayon::join(|| levenshtein_sum(&pos_b, &neg_b), || levenshtein_sum(&neg_b, &pos_b))
        }
    };
    Ok(DistanceReport {
        grammar: g,
        length: n,
        mode,
        positives: pos.len() as u64,
        negatives: neg.len() as u64,
        positive_sum,
        negative_sum,
    })
}

/// How the average edit distance of a grammar behaves as strings grow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityClass {
    /// Grows without bound (grammars 1, 2, 7).
    Unbounded,
    /// Stays above one but grows slowly (grammars 3, 4).
    BoundedAboveOne,
    /// Exactly one at every length (grammars 5, 6).
    EqualOne,
}

impl fmt::Display for ComplexityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComplexityClass::Unbounded => "unbounded",
            ComplexityClass::BoundedAboveOne => "bounded_above_one",
            ComplexityClass::EqualOne => "equal_one",
        })
    }
}

pub fn complexity_class(g: GrammarId) -> ComplexityClass {
    match g.get() {
        1 | 2 | 7 => ComplexityClass::Unbounded,
        3 | 4 => ComplexityClass::BoundedAboveOne,
        _ => ComplexityClass::EqualOne,
    }
}
