//! Accuracy, extraction success rate and fidelity, plus the multi-seed,
//! multi-K extraction sweep.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::automata::{generate_dataset, split_dataset, tomita_dfa, Dfa, GrammarId, Label, LabeledDataset, Split};
use crate::classifier::Recognizer;
use crate::error::{Error, Result};
use crate::extraction::{extract_dfa, ExtractedDfa, ExtractionConfig};
use crate::rnn::{CellKind, RnnModel, TrainConfig, TrainLog};
use crate::scalar::Scalar;

/// Fraction of `split` that `m` labels correctly.
pub fn accuracy<R: Recognizer + ?Sized>(m: &R, data: &LabeledDataset, split: Split) -> Result<f64> {
    let idx = data.indices(split);
    if idx.is_empty() {
        return Err(Error::InvalidInput(format!("{split:?} split is empty")));
    }
    let hits = data
        .split_samples(split)
        .filter(|s| m.classify(&s.string) == s.label)
        .count();
    Ok(hits as f64 / idx.len() as f64)
}

/// Fraction of `strings` on which `a` and `b` agree.
pub fn fidelity<A, B, S>(a: &A, b: &B, strings: &[S]) -> Result<f64>
where
    A: Recognizer + ?Sized,
    B: Recognizer + ?Sized,
    S: AsRef<str>,
{
    if strings.is_empty() {
        return Err(Error::InvalidInput("fidelity needs at least one string".into()));
    }
    let agree = strings
        .iter()
        .filter(|s| a.classify(s.as_ref()) == b.classify(s.as_ref()))
        .count();
    Ok(agree as f64 / strings.len() as f64)
}

/// Flips `n_pos` positive and `n_neg` negative training labels.
///
/// Classes are judged by the grammar's oracle when the dataset has one, so
/// applying the same call to the noisy output restores the original.
pub fn inject_label_noise(data: &LabeledDataset, n_pos: usize, n_neg: usize, seed: u64) -> Result<LabeledDataset> {
    let oracle = data.grammar.map(tomita_dfa);
    let class_of = |i: usize| match &oracle {
        Some(o) => o.classify(&data.samples[i].string),
        None => data.samples[i].label,
    };
    let mut order = data.train.clone();
    order.sort_unstable();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = data.clone();
    for (label, n) in [(Label::Positive, n_pos), (Label::Negative, n_neg)] {
        let chosen: Vec<usize> = order.iter().copied().filter(|&i| class_of(i) == label).take(n).collect();
        if chosen.len() < n {
            return Err(Error::InvalidInput(format!(
                "cannot flip {n} {label} training labels, only {} available",
                chosen.len()
            )));
        }
        for i in chosen {
            out.samples[i].label = out.samples[i].label.flip();
        }
    }
    Ok(out)
}

/// How datasets are drawn for each grammar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub min_length: usize,
    pub max_length: usize,
    pub per_class: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            min_length: 1,
            max_length: 14,
            per_class: 500,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl DataConfig {
    /// Generates and splits the dataset for `g`. Each grammar gets its own
    /// stream derived from `seed`.
    pub fn build(&self, g: GrammarId) -> Result<LabeledDataset> {
        let seed = self.seed.wrapping_mul(1000).wrapping_add(g.get() as u64);
        let d = generate_dataset(g, self.min_length..=self.max_length, self.per_class, seed)?;
        split_dataset(&d, self.train_fraction, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub n_pos: usize,
    pub n_neg: usize,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            n_pos: 2,
            n_neg: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub grammars: Vec<GrammarId>,
    pub cells: Vec<CellKind>,
    pub k_values: Vec<usize>,
    pub hidden_seeds: Vec<u64>,
    /// Each cell's hidden size is chosen so its parameter count is closest
    /// to this.
    pub param_budget: usize,
    pub data: DataConfig,
    pub train: TrainConfig,
    /// `k` is overridden by each entry of `k_values`.
    pub extraction: ExtractionConfig,
    /// Train on noisy labels and compare against a clean model.
    pub noise: Option<NoiseConfig>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            grammars: GrammarId::all().collect(),
            cells: CellKind::ALL.to_vec(),
            k_values: (3..=15).collect(),
            hidden_seeds: (0..10).collect(),
            param_budget: CellKind::SecondOrder.param_count(8),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            extraction: ExtractionConfig::default(),
            noise: None,
        }
    }
}

impl SweepConfig {
    /// K fixed at 20, label noise of two strings per class.
    pub fn fidelity_preset() -> Self {
        SweepConfig {
            k_values: vec![20],
            noise: Some(NoiseConfig::default()),
            ..Self::default()
        }
    }

    /// K from 6 to 30 under label noise.
    pub fn fidelity_k_preset() -> Self {
        SweepConfig {
            k_values: (6..=30).collect(),
            noise: Some(NoiseConfig::default()),
            ..Self::default()
        }
    }

    pub fn hidden_size(&self, kind: CellKind) -> usize {
        kind.hidden_size_for_budget(self.param_budget)
    }

    pub fn trial_count(&self) -> usize {
        self.grammars.len() * self.cells.len() * self.hidden_seeds.len() * self.k_values.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub grammar: GrammarId,
    pub cell: CellKind,
    pub k: usize,
    pub effective_k: usize,
    pub model_seed: u64,
    pub kmeans_seed: u64,
    pub dfa_accuracy: f64,
    /// Test accuracy of the model trained on clean labels.
    pub rnn_accuracy_clean: f64,
    /// Test accuracy of the model trained on noisy labels, when noise is on.
    pub rnn_accuracy_noisy: Option<f64>,
    /// Agreement on the test split between the extracted DFA and the model
    /// it came from.
    pub fidelity: f64,
    pub success: bool,
    pub states: usize,
    pub error: Option<String>,
}

impl TrialResult {
    pub fn failed(grammar: GrammarId, cell: CellKind, k: usize, seed: u64, kmeans_seed: u64, err: &Error) -> Self {
        TrialResult {
            grammar,
            cell,
            k,
            effective_k: 0,
            model_seed: seed,
            kmeans_seed,
            dfa_accuracy: 0.0,
            rnn_accuracy_clean: 0.0,
            rnn_accuracy_noisy: None,
            fidelity: 0.0,
            success: false,
            states: 0,
            error: Some(err.to_string()),
        }
    }
}

/// Fraction of trials whose DFA labels the whole test split correctly.
pub fn success_rate(results: &[TrialResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::InvalidInput("no trials".into()));
    }
    Ok(results.iter().filter(|r| r.success).count() as f64 / results.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub grammar: GrammarId,
    pub cell: CellKind,
    pub trials: usize,
    pub successes: usize,
    pub failed: usize,
    pub success_rate: f64,
    pub mean_dfa_accuracy: f64,
    pub var_dfa_accuracy: f64,
    pub mean_fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: Vec<SummaryRow>,
}

impl SweepSummary {
    pub fn get(&self, g: GrammarId, cell: CellKind) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.grammar == g && r.cell == cell)
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Aggregates per (grammar, cell). Failed trials count as unsuccessful and
/// are left out of the means.
pub fn summarize(results: &[TrialResult]) -> SweepSummary {
    let mut groups: BTreeMap<(GrammarId, usize), Vec<&TrialResult>> = BTreeMap::new();
    for r in results {
        let cell_pos = CellKind::ALL.iter().position(|&c| c == r.cell).unwrap_or(usize::MAX);
        groups.entry((r.grammar, cell_pos)).or_default().push(r);
    }
    let rows = groups
        .into_values()
        .map(|rs| {
            let ok: Vec<&&TrialResult> = rs.iter().filter(|r| r.error.is_none()).collect();
            let acc: Vec<f64> = ok.iter().map(|r| r.dfa_accuracy).collect();
            let fid: Vec<f64> = ok.iter().map(|r| r.fidelity).collect();
            let (mean_dfa_accuracy, var_dfa_accuracy) = mean_var(&acc);
            let successes = rs.iter().filter(|r| r.success).count();
            SummaryRow {
                grammar: rs[0].grammar,
                cell: rs[0].cell,
                trials: rs.len(),
                successes,
                failed: rs.len() - ok.len(),
                success_rate: successes as f64 / rs.len() as f64,
                mean_dfa_accuracy,
                var_dfa_accuracy,
                mean_fidelity: mean_var(&fid).0,
            }
        })
        .collect();
    SweepSummary { rows }
}

/// Population variance of DFA accuracy across seeds, per K.
pub fn accuracy_variance_by_k(results: &[TrialResult], g: GrammarId, cell: CellKind) -> BTreeMap<usize, f64> {
    let mut by_k: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in results.iter().filter(|r| r.grammar == g && r.cell == cell && r.error.is_none()) {
        by_k.entry(r.k).or_default().push(r.dfa_accuracy);
    }
    by_k.into_iter().map(|(k, xs)| (k, mean_var(&xs).1)).collect()
}

/// Test-split scores of an extracted DFA against its source model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionScores {
    pub dfa_accuracy: f64,
    pub rnn_accuracy: f64,
    pub fidelity: f64,
    pub success: bool,
}

pub fn score_extraction<F: Scalar>(m: &RnnModel<F>, dfa: &Dfa, data: &LabeledDataset) -> Result<ExtractionScores> {
    let dfa_accuracy = accuracy(dfa, data, Split::Test)?;
    let rnn_accuracy = accuracy(m, data, Split::Test)?;
    let strings: Vec<&str> = data.split_samples(Split::Test).map(|s| s.string.as_str()).collect();
    Ok(ExtractionScores {
        dfa_accuracy,
        rnn_accuracy,
        fidelity: fidelity(m, dfa, &strings)?,
        success: dfa_accuracy == 1.0,
    })
}

/// Trains a fresh model with seed `seed` for both initialization and
/// batch order.
pub fn train_model(
    cell: CellKind,
    hidden: usize,
    seed: u64,
    data: &LabeledDataset,
    train: &TrainConfig,
) -> Result<(RnnModel<f64>, TrainLog)> {
    let mut m = RnnModel::init(cell, hidden, seed)?;
    let tc = TrainConfig {
        seed,
        ..train.clone()
    };
    let log = m.fit(data, &tc)?;
    Ok((m, log))
}

/// Scores one extraction. `source` is the model the DFA came from; with
/// `noisy` set it is the model trained on flipped labels. `data` carries
/// the clean labels.
#[allow(clippy::too_many_arguments)]
pub fn trial_result(
    cell: CellKind,
    k: usize,
    model_seed: u64,
    rnn_accuracy_clean: f64,
    source: &RnnModel<f64>,
    noisy: bool,
    extracted: &ExtractedDfa,
    data: &LabeledDataset,
) -> Result<TrialResult> {
    let grammar = data
        .grammar
        .ok_or_else(|| Error::InvalidInput("dataset has no grammar".into()))?;
    let s = score_extraction(source, &extracted.dfa, data)?;
    Ok(TrialResult {
        grammar,
        cell,
        k,
        effective_k: extracted.provenance.effective_k,
        model_seed,
        kmeans_seed: extracted.provenance.kmeans_seed,
        dfa_accuracy: s.dfa_accuracy,
        rnn_accuracy_clean,
        rnn_accuracy_noisy: noisy.then_some(s.rnn_accuracy),
        fidelity: s.fidelity,
        success: s.success,
        states: extracted.dfa.num_states(),
        error: None,
    })
}

struct Job {
    grammar: GrammarId,
    cell: CellKind,
    seed: u64,
}

fn run_job(cfg: &SweepConfig, job: &Job, data: &LabeledDataset) -> Vec<TrialResult> {
    let kmeans_seed = cfg.extraction.kmeans_seed;
    let fail_all = |e: &Error| -> Vec<TrialResult> {
        cfg.k_values
            .iter()
            .map(|&k| TrialResult::failed(job.grammar, job.cell, k, job.seed, kmeans_seed, e))
            .collect()
    };
    let hidden = cfg.hidden_size(job.cell);
    let clean = match train_model(job.cell, hidden, job.seed, data, &cfg.train) {
        Ok((m, _)) => m,
        Err(e) => return fail_all(&e),
    };
    let (source, source_data) = match &cfg.noise {
        None => (clean.clone(), data.clone()),
        Some(n) => {
            let noisy = inject_label_noise(data, n.n_pos, n.n_neg, n.seed)
                .and_then(|nd| train_model(job.cell, hidden, job.seed, &nd, &cfg.train).map(|(m, _)| (m, nd)));
            match noisy {
                Ok(pair) => pair,
                Err(e) => return fail_all(&e),
            }
        }
    };
    let rnn_accuracy_clean = accuracy(&clean, data, Split::Test).unwrap_or(f64::NAN);
    cfg.k_values
        .iter()
        .map(|&k| {
            let ec = ExtractionConfig {
                k,
                ..cfg.extraction.clone()
            };
            // traces come from the split the source model was trained on
            extract_dfa(&source, &source_data, &ec)
                .and_then(|ex| {
                    trial_result(job.cell, k, job.seed, rnn_accuracy_clean, &source, cfg.noise.is_some(), &ex, data)
                })
                .unwrap_or_else(|e| TrialResult::failed(job.grammar, job.cell, k, job.seed, kmeans_seed, &e))
        })
        .collect()
}

/// Trains one model per (grammar, cell, seed) and extracts one DFA per K
/// from each. Results are ordered by (grammar, cell, seed, K).
pub fn run_sweep(cfg: &SweepConfig) -> Result<(SweepSummary, Vec<TrialResult>)> {
    cfg.train.validate()?;
    if cfg.k_values.iter().any(|&k| k < 2) {
        return Err(Error::InvalidInput("every K must be at least 2".into()));
    }
    let datasets: Vec<(GrammarId, LabeledDataset)> = cfg
        .grammars
        .iter()
        .map(|&g| cfg.data.build(g).map(|d| (g, d)))
        .collect::<Result<_>>()?;
    let jobs: Vec<(Job, &LabeledDataset)> = datasets
        .iter()
        .flat_map(|(g, d)| {
            cfg.cells.iter().flat_map(move |&cell| {
                cfg.hidden_seeds.iter().map(move |&seed| {
                    (
                        Job {
                            grammar: *g,
                            cell,
                            seed,
                        },
                        d,
                    )
                })
            })
        })
        .collect();
    let results: Vec<TrialResult> = jobs
        .par_iter()
        .map(|(job, d)| run_job(cfg, job, d))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Ok((summarize(&results), results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::{binary_strings, Sample};
    use crate::classifier::Complement;

    fn data(g: u8) -> LabeledDataset {
        let d = generate_dataset(GrammarId::new(g).unwrap(), 1..=8, 40, 1).unwrap();
        split_dataset(&d, 0.75, 1).unwrap()
    }

    struct Constant(Label);

    impl Recognizer for Constant {
        type State = ();
        fn initial(&self) {}
        fn step(&self, _: &(), _: usize) {}
        fn decide(&self, _: &()) -> Label {
            self.0
        }
    }

    #[test]
    fn oracle_complement_and_constant_accuracy() {
        for g in GrammarId::all() {
            let d = split_dataset(&generate_dataset(g, 1..=8, 30, 4).unwrap(), 0.5, 4).unwrap();
            let o = tomita_dfa(g);
            assert_eq!(accuracy(&o, &d, Split::Test).unwrap(), 1.0);
            assert_eq!(accuracy(&Complement(&o), &d, Split::Train).unwrap(), 0.0);
        }
        let d = data(1);
        let counts = d.split_counts(Split::Train);
        let expected = counts.negative as f64 / counts.total() as f64;
        assert_eq!(accuracy(&Constant(Label::Negative), &d, Split::Train).unwrap(), expected);
    }

    #[test]
    fn constant_negative_on_balanced_set_is_half() {
        let samples: Vec<Sample> = ["0", "1", "00", "11"]
            .iter()
            .zip([Label::Positive, Label::Negative, Label::Negative, Label::Positive])
            .map(|(s, label)| Sample {
                string: s.to_string(),
                label,
            })
            .collect();
        let d = LabeledDataset::with_split(None, samples, vec![0, 1, 2, 3], vec![]).unwrap();
        assert_eq!(accuracy(&Constant(Label::Negative), &d, Split::Train).unwrap(), 0.5);
        assert!(accuracy(&Constant(Label::Negative), &d, Split::Test).is_err());
    }

    #[test]
    fn fidelity_identities() {
        let strings: Vec<String> = (0..=6).flat_map(binary_strings).collect();
        for g in GrammarId::all() {
            let o = tomita_dfa(g);
            assert_eq!(fidelity(&o, &o, &strings).unwrap(), 1.0);
            assert_eq!(fidelity(&o, &Complement(&o), &strings).unwrap(), 0.0);
        }
        let empty: [&str; 0] = [];
        assert!(fidelity(&tomita_dfa(GrammarId::new(1).unwrap()), &Constant(Label::Negative), &empty).is_err());
    }

    #[test]
    fn fidelity_is_one_minus_symmetric_difference() {
        let strings: Vec<String> = (0..=7).flat_map(binary_strings).collect();
        for a in GrammarId::all() {
            for b in GrammarId::all() {
                let (da, db) = (tomita_dfa(a), tomita_dfa(b));
                let sym_diff = strings.iter().filter(|s| da.accepts(s).unwrap() != db.accepts(s).unwrap()).count();
                let expected = 1.0 - sym_diff as f64 / strings.len() as f64;
                assert!((fidelity(&da, &db, &strings).unwrap() - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noise_flips_exactly_and_is_an_involution() {
        let d = data(4);
        let noisy = inject_label_noise(&d, 2, 2, 9).unwrap();
        let changed: Vec<usize> = (0..d.len())
            .filter(|&i| d.samples[i].label != noisy.samples[i].label)
            .collect();
        assert_eq!(changed.len(), 4);
        assert!(changed.iter().all(|i| d.train.contains(i)));
        assert_eq!(inject_label_noise(&noisy, 2, 2, 9).unwrap(), d);
        assert_eq!(inject_label_noise(&d, 0, 0, 9).unwrap(), d);
        assert_eq!(noisy, inject_label_noise(&d, 2, 2, 9).unwrap());
        assert!(inject_label_noise(&d, 10_000, 0, 9).is_err());
    }

    #[test]
    fn success_rate_counts() {
        let g = GrammarId::new(1).unwrap();
        let mk = |success| TrialResult {
            success,
            dfa_accuracy: if success { 1.0 } else { 0.9 },
            ..TrialResult::failed(g, CellKind::Elman, 3, 0, 0, &Error::InvalidInput(String::new()))
        };
        assert_eq!(success_rate(&[mk(true), mk(true)]).unwrap(), 1.0);
        assert_eq!(success_rate(&[mk(true), mk(false), mk(true), mk(true)]).unwrap(), 0.75);
        assert!(success_rate(&[]).is_err());
    }

    #[test]
    fn tiny_sweep_shape_and_consistency() {
        let cfg = SweepConfig {
            grammars: vec![GrammarId::new(1).unwrap()],
            cells: vec![CellKind::SecondOrder, CellKind::Elman],
            k_values: vec![3, 4],
            hidden_seeds: vec![0, 1],
            data: DataConfig {
                max_length: 6,
                per_class: 40,
                ..DataConfig::default()
            },
            train: TrainConfig {
                max_epochs: 30,
                ..TrainConfig::default()
            },
            ..SweepConfig::default()
        };
        assert_eq!(cfg.trial_count(), 8);
        let (summary, results) = run_sweep(&cfg).unwrap();
        assert_eq!(results.len(), 8);
        assert_eq!(results[0].cell, CellKind::SecondOrder);
        assert_eq!((results[1].k, results[2].model_seed), (4, 1));
        for r in &results {
            assert!(!r.success || r.dfa_accuracy == 1.0);
        }
        for row in &summary.rows {
            let recount: Vec<TrialResult> = results
                .iter()
                .filter(|r| r.grammar == row.grammar && r.cell == row.cell)
                .cloned()
                .collect();
            assert_eq!(row.success_rate, success_rate(&recount).unwrap());
            assert_eq!(row.trials, 4);
        }
        assert_eq!(run_sweep(&cfg).unwrap().1, results);

        let one = SweepConfig {
            cells: vec![CellKind::SecondOrder],
            k_values: vec![3],
            hidden_seeds: vec![0],
            ..cfg
        };
        assert_eq!(run_sweep(&one).unwrap().1.len(), 1);
    }

    #[test]
    fn presets() {
        let d = SweepConfig::default();
        assert_eq!(d.trial_count() / (d.grammars.len() * d.cells.len()), 130);
        assert_eq!(SweepConfig::fidelity_preset().k_values, vec![20]);
        let f = SweepConfig::fidelity_k_preset();
        assert_eq!((f.k_values[0], *f.k_values.last().unwrap()), (6, 30));
        assert_eq!(f.noise.unwrap().n_pos, 2);
    }
}
