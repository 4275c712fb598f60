//! Adversarial accuracy of a classifier against a DFA oracle over edit
//! neighborhoods, plus pointwise invariance and sampled equivalence checks.

use std::collections::BTreeSet;
use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::automata::{binary_strings, Dfa, GrammarId, Label, BINARY};
use crate::classifier::{is_binary, symbol, Recognizer};
use crate::error::{Error, Result};

/// All strings within edit distance `radius` of `center`, excluding it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhood {
    pub center: String,
    pub radius: usize,
    /// Sorted and distinct.
    pub members: Vec<String>,
}

fn one_edit(x: &str, out: &mut BTreeSet<String>) {
    let b = x.as_bytes();
    for i in 0..b.len() {
        let mut s = b.to_vec();
        s[i] = if s[i] == b'0' { b'1' } else { b'0' };
        out.insert(String::from_utf8(s).expect("ascii"));
        let mut d = b.to_vec();
        d.remove(i);
        out.insert(String::from_utf8(d).expect("ascii"));
    }
    for i in 0..=b.len() {
        for &c in &BINARY {
            let mut s = b.to_vec();
            s.insert(i, c as u8);
            out.insert(String::from_utf8(s).expect("ascii"));
        }
    }
}

pub fn neighborhood(x: &str, radius: usize) -> Result<Neighborhood> {
    if radius == 0 {
        return Err(Error::InvalidInput("neighborhood radius must be at least 1".into()));
    }
    if !is_binary(x) {
        return Err(Error::InvalidInput(format!("{x:?} is not a binary string")));
    }
    let mut ball = BTreeSet::from([x.to_string()]);
    let mut frontier = ball.clone();
    for _ in 0..radius {
        let mut next = BTreeSet::new();
        for s in &frontier {
            one_edit(s, &mut next);
        }
        frontier = next.difference(&ball).cloned().collect();
        ball.extend(frontier.iter().cloned());
    }
    ball.remove(x);
    Ok(Neighborhood {
        center: x.to_string(),
        radius,
        members: ball.into_iter().collect(),
    })
}

/// Sampling and scoring settings for adversarial accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Protocol {
    pub length: usize,
    /// Centers per trial and label.
    pub samples: usize,
    pub trials: usize,
    pub radius: usize,
    pub seed: u64,
    /// Draws allowed per center before giving up.
    pub max_attempts: u64,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            length: 200,
            samples: 100,
            trials: 30,
            radius: 1,
            seed: 0,
            max_attempts: 1_000_000,
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.trials == 0 || self.radius == 0 || self.max_attempts == 0 {
            return Err(Error::InvalidInput(format!("invalid verification protocol {self:?}")));
        }
        Ok(())
    }
}

/// The grammars the robustness experiment uses by default.
pub fn default_grammars() -> Vec<GrammarId> {
    [3, 4, 7].into_iter().map(|g| GrammarId::new(g).expect("valid id")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub trial: usize,
    pub center: String,
    pub perturbed: String,
    pub oracle_label: Label,
    pub rnn_label: Label,
}

impl Witness {
    /// Re-checks the hit condition from scratch.
    pub fn holds<R: Recognizer + ?Sized>(&self, f: &R, oracle: &Dfa) -> bool {
        let (Ok(oc), Ok(op)) = (oracle.label(&self.center), oracle.label(&self.perturbed)) else {
            return false;
        };
        oc == op
            && oc == self.oracle_label
            && f.classify(&self.center) == oc
            && f.classify(&self.perturbed) == self.rnn_label
            && self.rnn_label != oc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialGamma {
    pub trial: usize,
    pub label: Label,
    pub broken: usize,
    pub samples: usize,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub grammar: Option<GrammarId>,
    pub model: String,
    pub protocol: Protocol,
    /// Positive trials first, then negative, each in trial order.
    pub trials: Vec<TrialGamma>,
    pub witnesses: Vec<Witness>,
}

impl VerificationReport {
    fn mean_gamma(&self, label: Label) -> f64 {
        let g: Vec<f64> = self.trials.iter().filter(|t| t.label == label).map(|t| t.gamma).collect();
        g.iter().sum::<f64>() / g.len() as f64
    }

    pub fn gamma_pos(&self) -> f64 {
        self.mean_gamma(Label::Positive)
    }

    pub fn gamma_neg(&self) -> f64 {
        self.mean_gamma(Label::Negative)
    }
}

/// `counts[r][q]`: strings of length `r` leading from `q` to a state
/// labeled `target`. Floating point so lengths in the hundreds fit.
fn path_counts(oracle: &Dfa, length: usize, target: Label) -> Vec<Vec<f64>> {
    let n = oracle.num_states();
    let mut counts = vec![(0..n).map(|q| f64::from(u8::from(oracle.decide(&q) == target))).collect::<Vec<_>>()];
    for r in 1..=length {
        let row = (0..n)
            .map(|q| (0..BINARY.len()).map(|a| counts[r - 1][oracle.next(q, a)]).sum())
            .collect();
        counts.push(row);
    }
    counts
}

/// Number of strings of length `length` the oracle labels `target`
/// (approximate once it passes 2^53).
pub fn class_count(oracle: &Dfa, length: usize, target: Label) -> f64 {
    path_counts(oracle, length, target)[length][oracle.start()]
}

/// Draws strings uniformly from the oracle's `target` class at one length.
struct ClassSampler<'a> {
    oracle: &'a Dfa,
    counts: Vec<Vec<f64>>,
    length: usize,
}

impl<'a> ClassSampler<'a> {
    fn new(oracle: &'a Dfa, length: usize, target: Label) -> Self {
        ClassSampler {
            oracle,
            counts: path_counts(oracle, length, target),
            length,
        }
    }

    fn is_empty(&self) -> bool {
        self.counts[self.length][self.oracle.start()] == 0.0
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> String {
        let mut q = self.oracle.start();
        let mut out = String::with_capacity(self.length);
        for r in (1..=self.length).rev() {
            let w0 = self.counts[r - 1][self.oracle.next(q, 0)];
            let w1 = self.counts[r - 1][self.oracle.next(q, 1)];
            let a = usize::from(rng.gen::<f64>() * (w0 + w1) >= w0 || w0 == 0.0);
            out.push(BINARY[a]);
            q = self.oracle.next(q, a);
        }
        out
    }
}

fn common_prefix(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// First neighbor of `x` that the oracle labels like `x` but `f` does not.
fn find_flip<R: Recognizer + ?Sized>(f: &R, oracle: &Dfa, x: &str, radius: usize) -> Result<Option<(String, Label, Label)>> {
    let xb = x.as_bytes();
    let mut fs = vec![f.initial()];
    let mut qs = vec![oracle.start()];
    for &b in xb {
        fs.push(f.step(fs.last().expect("non-empty"), symbol(b)));
        qs.push(oracle.next(*qs.last().expect("non-empty"), symbol(b)));
    }
    let fx = f.decide(&fs[xb.len()]);
    let ox = oracle.decide(&qs[xb.len()]);
    for m in neighborhood(x, radius)?.members {
        let mb = m.as_bytes();
        let l = common_prefix(xb, mb);
        if oracle.decide(&Recognizer::run_from(oracle, &qs[l], &mb[l..])) != ox {
            continue;
        }
        let fl = f.decide(&f.run_from(&fs[l], &mb[l..]));
        if fl != fx {
            return Ok(Some((m, ox, fl)));
        }
    }
    Ok(None)
}

fn trial_rng(seed: u64, trial: usize, label: Label) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((trial as u64) << 1 | label.index() as u64);
    rng
}

fn run_trial<R: Recognizer + ?Sized>(
    f: &R,
    oracle: &Dfa,
    sampler: &ClassSampler,
    p: &Protocol,
    target: Label,
    trial: usize,
) -> Result<(TrialGamma, Vec<Witness>)> {
    let mut rng = trial_rng(p.seed, trial, target);
    let mut centers = Vec::with_capacity(p.samples);
    let mut attempts = 0u64;
    while centers.len() < p.samples {
        let mut tries = 0u64;
        let x = loop {
            if tries == p.max_attempts {
                return Err(Error::InsufficientSamples {
                    label: target.as_str(),
                    length: p.length,
                    wanted: p.samples,
                    found: centers.len(),
                    attempts,
                });
            }
            tries += 1;
            attempts += 1;
            let x = sampler.draw(&mut rng);
            if f.classify(&x) == target {
                break x;
            }
        };
        centers.push(x);
    }
    let hits: Vec<Option<(String, Label, Label)>> = centers
        .par_iter()
        .map(|x| find_flip(f, oracle, x, p.radius))
        .collect::<Result<_>>()?;
    let mut witnesses = Vec::new();
    for (x, hit) in centers.iter().zip(hits) {
        if let Some((perturbed, oracle_label, rnn_label)) = hit {
            witnesses.push(Witness {
                trial,
                center: x.clone(),
                perturbed,
                oracle_label,
                rnn_label,
            });
        }
    }
    let broken = witnesses.len();
    let gamma = TrialGamma {
        trial,
        label: target,
        broken,
        samples: p.samples,
        gamma: 1.0 - broken as f64 / p.samples as f64,
    };
    Ok((gamma, witnesses))
}

/// Runs every trial for centers of one label. Centers are drawn uniformly
/// (with replacement) from length-`p.length` strings the oracle gives
/// `target`, keeping those `f` also labels `target`.
pub fn adversarial_accuracy<R: Recognizer + ?Sized>(
    f: &R,
    oracle: &Dfa,
    p: &Protocol,
    target: Label,
) -> Result<(Vec<TrialGamma>, Vec<Witness>)> {
    p.validate()?;
    let sampler = ClassSampler::new(oracle, p.length, target);
    if sampler.is_empty() {
        return Err(Error::InsufficientSamples {
            label: target.as_str(),
            length: p.length,
            wanted: p.samples,
            found: 0,
            attempts: 0,
        });
    }
    let per_trial: Vec<(TrialGamma, Vec<Witness>)> = (0..p.trials)
        .into_par_iter()
        .map(|t| run_trial(f, oracle, &sampler, p, target, t))
        .collect::<Result<_>>()?;
    let mut gammas = Vec::with_capacity(p.trials);
    let mut witnesses = Vec::new();
    for (g, w) in per_trial {
        gammas.push(g);
        witnesses.extend(w);
    }
    Ok((gammas, witnesses))
}

/// Both labels, positive first.
pub fn verify<R: Recognizer + ?Sized>(f: &R, oracle: &Dfa, p: &Protocol) -> Result<VerificationReport> {
    let (mut trials, mut witnesses) = adversarial_accuracy(f, oracle, p, Label::Positive)?;
    let (neg_trials, neg_witnesses) = adversarial_accuracy(f, oracle, p, Label::Negative)?;
    trials.extend(neg_trials);
    witnesses.extend(neg_witnesses);
    Ok(VerificationReport {
        grammar: None,
        model: String::new(),
        protocol: p.clone(),
        trials,
        witnesses,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Invariance {
    Holds,
    Violated(String),
}

/// Looks for a neighbor the oracle labels like `x` but `f` labels
/// differently. `f` and the oracle must agree on `x`.
pub fn local_invariance<R: Recognizer + ?Sized>(f: &R, oracle: &Dfa, x: &str, radius: usize) -> Result<Invariance> {
    let ox = oracle.label(x)?;
    if f.classify(x) != ox {
        return Err(Error::InvalidInput(format!("model and oracle disagree on {x:?}")));
    }
    Ok(match find_flip(f, oracle, x, radius)? {
        Some((m, _, _)) => Invariance::Violated(m),
        None => Invariance::Holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub checked: usize,
    pub agreed: usize,
    /// Lengths that were enumerated completely rather than sampled.
    pub exhaustive_lengths: Vec<usize>,
    /// Strings on which the model and the oracle disagree.
    pub witnesses: Vec<String>,
}

impl EquivalenceReport {
    pub fn agreement(&self) -> f64 {
        self.agreed as f64 / self.checked as f64
    }
}

/// Compares `f` with the oracle on every string of each length when there
/// are at most `budget` of them, and on `budget` uniform draws otherwise.
pub fn equivalence_check<R: Recognizer + ?Sized>(
    f: &R,
    oracle: &Dfa,
    lengths: RangeInclusive<usize>,
    budget: usize,
    seed: u64,
) -> Result<EquivalenceReport> {
    if budget == 0 || lengths.is_empty() {
        return Err(Error::InvalidInput("equivalence check needs a budget and lengths".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = EquivalenceReport {
        checked: 0,
        agreed: 0,
        exhaustive_lengths: Vec::new(),
        witnesses: Vec::new(),
    };
    for n in lengths {
        let strings: Vec<String> = if n < 64 && (1u64 << n) <= budget as u64 {
            report.exhaustive_lengths.push(n);
            binary_strings(n).collect()
        } else {
            (0..budget)
                .map(|_| (0..n).map(|_| BINARY[rng.gen_range(0..2)]).collect())
                .collect()
        };
        let bad: Vec<Option<String>> = strings
            .par_iter()
            .map(|x| (f.classify(x) != oracle.classify(x)).then(|| x.clone()))
            .collect();
        report.checked += strings.len();
        let before = report.witnesses.len();
        report.witnesses.extend(bad.into_iter().flatten());
        report.agreed += strings.len() - (report.witnesses.len() - before);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthGamma {
    pub length: usize,
    pub gamma_pos: Option<f64>,
    pub gamma_neg: Option<f64>,
    pub error: Option<String>,
}

/// Adversarial accuracy at each length; a length whose sampling fails is
/// recorded and skipped.
pub fn length_sweep<R: Recognizer + ?Sized>(f: &R, oracle: &Dfa, lengths: &[usize], p: &Protocol) -> Vec<LengthGamma> {
    lengths
        .iter()
        .map(|&length| {
            let pl = Protocol { length, ..p.clone() };
            match verify(f, oracle, &pl) {
                Ok(r) => LengthGamma {
                    length,
                    gamma_pos: Some(r.gamma_pos()),
                    gamma_neg: Some(r.gamma_neg()),
                    error: None,
                },
                Err(e) => LengthGamma {
                    length,
                    gamma_pos: None,
                    gamma_neg: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}
