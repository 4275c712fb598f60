//! DFA extraction by quantizing hidden states.
//!
//! Hidden vectors recorded on the training split are clustered with
//! k-means, the observed cluster-to-cluster moves are counted per symbol,
//! and the most frequent successor of each (cluster, symbol) pair becomes
//! the transition. States are labeled by the network's final predictions.

mod kmeans;

pub use kmeans::{kmeans, Clustering};

use serde::{Deserialize, Serialize};

use crate::automata::{Dfa, GrammarId, Label, LabeledDataset, Split, BINARY};
use crate::classifier::{symbol, Recognizer};
use crate::error::{Error, Result};
use crate::rnn::{CellKind, HiddenTrace, RnnModel};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    pub k: usize,
    pub kmeans_seed: u64,
    pub kmeans_max_iters: usize,
    pub restarts: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            k: 10,
            kmeans_seed: 0,
            kmeans_max_iters: 100,
            restarts: 4,
        }
    }
}

impl ExtractionConfig {
    pub fn with_k(k: usize) -> Self {
        ExtractionConfig {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 || self.restarts < 1 || self.kmeans_max_iters < 1 {
            return Err(Error::InvalidInput(format!("invalid extraction config {self:?}")));
        }
        Ok(())
    }
}

/// Cluster ids for every hidden vector, grouped like the traces.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantization {
    /// `clusters[i][t]` is the cluster of `traces[i].states[t]`.
    pub clusters: Vec<Vec<usize>>,
    pub requested_k: usize,
    /// Smaller than `requested_k` when there were too few distinct vectors.
    pub effective_k: usize,
    pub wcss: f64,
}

pub fn quantize<F: Scalar>(traces: &[HiddenTrace<F>], cfg: &ExtractionConfig) -> Result<Quantization> {
    cfg.validate()?;
    let points: Vec<&[F]> = traces
        .iter()
        .flat_map(|t| t.states.iter().map(Vec::as_slice))
        .collect();
    if points.is_empty() {
        return Err(Error::InvalidInput("no hidden states to quantize".into()));
    }
    let c = kmeans(&points, cfg.k, cfg.kmeans_seed, cfg.kmeans_max_iters, cfg.restarts);
    let mut ids = c.assignment.into_iter();
    let clusters = traces
        .iter()
        .map(|t| ids.by_ref().take(t.states.len()).collect())
        .collect();
    Ok(Quantization {
        clusters,
        requested_k: cfg.k,
        effective_k: c.centroids.len(),
        wcss: c.wcss,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionDiagram {
    k: usize,
    /// Dense `[from][symbol][to]` counts.
    counts: Vec<u64>,
    pub initial_cluster: usize,
    /// Per cluster, final-step predictions `[negative, positive]`.
    pub votes: Vec<[u64; 2]>,
}

impl TransitionDiagram {
    pub fn k(&self) -> usize {
        self.k
    }

    fn slot(&self, from: usize, sym: usize, to: usize) -> usize {
        (from * BINARY.len() + sym) * self.k + to
    }

    pub fn count(&self, from: usize, sym: usize, to: usize) -> u64 {
        self.counts[self.slot(from, sym, to)]
    }

    pub fn successors(&self, from: usize, sym: usize) -> &[u64] {
        let s = self.slot(from, sym, 0);
        &self.counts[s..s + self.k]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Counts cluster moves. Panics if `clusters` does not match the traces.
pub fn build_diagram<F: Scalar>(traces: &[HiddenTrace<F>], q: &Quantization) -> TransitionDiagram {
    let k = q.effective_k;
    let mut d = TransitionDiagram {
        k,
        counts: vec![0; k * BINARY.len() * k],
        initial_cluster: 0,
        votes: vec![[0; 2]; k],
    };
    let mut starts = vec![0u64; k];
    for (trace, ids) in traces.iter().zip(&q.clusters) {
        assert_eq!(ids.len(), trace.string.len() + 1, "assignment does not cover trace");
        starts[ids[0]] += 1;
        for (t, b) in trace.string.bytes().enumerate() {
            let s = d.slot(ids[t], symbol(b), ids[t + 1]);
            d.counts[s] += 1;
        }
        d.votes[ids[ids.len() - 1]][trace.prediction.index()] += 1;
    }
    // every trace of one model starts at the same h0; take the most common
    // start cluster anyway so mixed inputs stay well defined
    d.initial_cluster = (0..k).max_by_key(|&c| (starts[c], std::cmp::Reverse(c))).unwrap_or(0);
    d
}

/// Keeps the most frequent successor per (cluster, symbol) and completes
/// the automaton with a rejecting sink (state `k`).
pub fn prune_to_dfa(d: &TransitionDiagram) -> Dfa {
    let sink = d.k;
    let mut table = Vec::with_capacity(d.k + 1);
    for from in 0..d.k {
        let mut row = [sink; 2];
        for (sym, slot) in row.iter_mut().enumerate() {
            let succ = d.successors(from, sym);
            if let Some((to, _)) = succ
                .iter()
                .enumerate()
                .filter(|&(_, &n)| n > 0)
                .max_by_key(|&(to, &n)| (n, std::cmp::Reverse(to)))
            {
                *slot = to;
            }
        }
        table.push(row);
    }
    table.push([sink, sink]);
    let accepting = (0..d.k).filter(|&c| d.votes[c][1] > d.votes[c][0]);
    Dfa::binary(&table, d.initial_cluster, accepting).expect("pruned table is total")
}

/// Where an extracted automaton came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_id: String,
    pub grammar: Option<GrammarId>,
    pub cell: Option<CellKind>,
    pub model_seed: Option<u64>,
    pub trial: Option<usize>,
    pub k: usize,
    pub effective_k: usize,
    pub kmeans_seed: u64,
    pub kmeans_max_iters: usize,
    pub restarts: usize,
    pub traces: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedDfa {
    pub dfa: Dfa,
    pub provenance: Provenance,
}

impl ExtractedDfa {
    pub fn provenance_json(&self) -> String {
        serde_json::to_string_pretty(&self.provenance).expect("provenance serializes")
    }
}

/// Quantize, count, prune and minimize; the shared core of extraction.
pub fn extract_from_traces<F: Scalar>(
    traces: &[HiddenTrace<F>],
    cfg: &ExtractionConfig,
) -> Result<(Dfa, Quantization)> {
    let q = quantize(traces, cfg).map_err(Error::at("quantize"))?;
    let diagram = build_diagram(traces, &q);
    let dfa = prune_to_dfa(&diagram).minimize();
    Ok((dfa, q))
}

/// Extracts a DFA from `m` using the training strings of `data`.
pub fn extract_dfa<F: Scalar>(
    m: &RnnModel<F>,
    data: &LabeledDataset,
    cfg: &ExtractionConfig,
) -> Result<ExtractedDfa> {
    let strings: Vec<&str> = data
        .indices(Split::Train)
        .iter()
        .map(|&i| data.samples[i].string.as_str())
        .collect();
    if strings.is_empty() {
        return Err(Error::at("record traces")(Error::InvalidInput("training split is empty".into())));
    }
    let traces = m.record_traces(&strings);
    let (dfa, q) = extract_from_traces(&traces, cfg)?;
    Ok(ExtractedDfa {
        dfa,
        provenance: Provenance {
            model_id: format!("{}-h{}-s{}", m.kind(), m.hidden_size(), m.seed()),
            grammar: data.grammar,
            cell: Some(m.kind()),
            model_seed: Some(m.seed()),
            trial: None,
            k: cfg.k,
            effective_k: q.effective_k,
            kmeans_seed: cfg.kmeans_seed,
            kmeans_max_iters: cfg.kmeans_max_iters,
            restarts: cfg.restarts,
            traces: traces.len(),
        },
    })
}

/// Traces whose hidden vectors are one-hot encodings of `dfa`'s states and
/// whose predictions are the DFA's labels.
pub fn dfa_state_traces<S: AsRef<str>>(dfa: &Dfa, strings: &[S]) -> Vec<HiddenTrace<f64>> {
    let n = dfa.num_states();
    let one_hot = |q: usize| {
        let mut v = vec![0.0; n];
        v[q] = 1.0;
        v
    };
    strings
        .iter()
        .map(|s| {
            let s = s.as_ref();
            let mut q = dfa.initial();
            let mut states = vec![one_hot(q)];
            for b in s.bytes() {
                q = dfa.step(&q, symbol(b));
                states.push(one_hot(q));
            }
            let prediction = dfa.decide(&q);
            let scores = match prediction {
                Label::Positive => [0.0, 1.0],
                Label::Negative => [1.0, 0.0],
            };
            HiddenTrace {
                string: s.to_string(),
                states,
                scores,
                prediction,
            }
        })
        .collect()
}
