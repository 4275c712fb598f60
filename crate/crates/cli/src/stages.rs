//! The pipeline stages. Each reads its inputs from the output directory,
//! writes its own files atomically and finishes with a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tomita_core::automata::{tomita_dfa, Split};
use tomita_core::evaluation::{self, TrialResult};
use tomita_core::extraction::{extract_dfa, ExtractedDfa, ExtractionConfig, Provenance};
use tomita_core::metrics::{average_edit_distance_with, DistanceMode};
use tomita_core::rnn::{CellKind, TrainLog};
use tomita_core::verification::{self, LengthGamma, VerificationReport};
use tomita_core::{Dfa, GrammarId, Label, LabeledDataset, Recognizer, RnnModelF64};

use crate::config::ExperimentConfig;
use crate::io::{self, Manifest};
use crate::report;

/// How a stage ended when it did not fail outright.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Complete,
    /// Some requested cells failed; the messages say which.
    Partial(Vec<String>),
}

impl Status {
    fn from_failures(failures: Vec<String>) -> Status {
        if failures.is_empty() {
            Status::Complete
        } else {
            Status::Partial(failures)
        }
    }

    pub fn merge(self, other: Status) -> Status {
        match (self, other) {
            (Status::Complete, s) | (s, Status::Complete) => s,
            (Status::Partial(mut a), Status::Partial(b)) => {
                a.extend(b);
                Status::Partial(a)
            }
        }
    }
}

pub struct Ctx {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Variant {
    Clean,
    Noisy,
}

impl Variant {
    fn as_str(self) -> &'static str {
        match self {
            Variant::Clean => "clean",
            Variant::Noisy => "noisy",
        }
    }
}

impl Ctx {
    pub fn new(cfg: ExperimentConfig) -> Ctx {
        let out = cfg.out_dir.clone();
        Ctx { cfg, out }
    }

    fn gen_fingerprint(&self) -> Value {
        let c = &self.cfg;
        json!({"seed": c.seed, "grammars": c.grammars, "data": c.data, "noise": c.noise})
    }

    fn train_fingerprint(&self) -> Value {
        let c = &self.cfg;
        json!({
            "gen": self.gen_fingerprint(),
            "cells": c.cells,
            "param_budget": c.param_budget,
            "hidden_seeds": c.extraction.hidden_seeds,
            "train": c.train,
            "learning_rates": c.learning_rates,
        })
    }

    fn extract_fingerprint(&self) -> Value {
        let e = &self.cfg.extraction;
        json!({
            "train": self.train_fingerprint(),
            "k_values": e.k_values,
            "kmeans_max_iters": e.kmeans_max_iters,
            "restarts": e.restarts,
        })
    }

    fn data_path(&self, g: GrammarId, variant: Variant) -> PathBuf {
        let suffix = if variant == Variant::Noisy { ".noisy" } else { "" };
        self.out.join("data").join(format!("G{g}{suffix}.csv"))
    }

    fn model_stem(&self, g: GrammarId, cell: CellKind, seed: u64, variant: Variant) -> PathBuf {
        let suffix = if variant == Variant::Noisy { ".noisy" } else { "" };
        self.out
            .join("models")
            .join(format!("G{g}"))
            .join(cell.as_str())
            .join(format!("seed{seed}{suffix}"))
    }

    fn dfa_stem(&self, g: GrammarId, cell: CellKind, seed: u64, k: usize) -> PathBuf {
        self.out
            .join("dfas")
            .join(format!("G{g}"))
            .join(cell.as_str())
            .join(format!("seed{seed}_k{k}"))
    }

    fn report_path(&self, name: &str) -> PathBuf {
        self.out.join("reports").join(name)
    }

    fn source_variant(&self) -> Variant {
        if self.cfg.noise.is_some() {
            Variant::Noisy
        } else {
            Variant::Clean
        }
    }

    fn load_data(&self, g: GrammarId, variant: Variant) -> Result<LabeledDataset> {
        io::read_dataset(&self.data_path(g, variant), Some(g))
    }

    fn load_model(&self, g: GrammarId, cell: CellKind, seed: u64, variant: Variant) -> Result<RnnModelF64> {
        let path = with_ext(&self.model_stem(g, cell, seed, variant), "json");
        RnnModelF64::from_json(&io::read_to_string(&path)?).with_context(|| format!("loading {}", path.display()))
    }

    fn save_config(&self) -> Result<()> {
        io::write_atomic(&self.out.join("config.toml"), self.cfg.to_toml().as_bytes())
    }
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

// ---- gen ----

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub grammar: GrammarId,
    pub file: String,
    pub seed: u64,
    pub train_positive: usize,
    pub train_negative: usize,
    pub test_positive: usize,
    pub test_negative: usize,
    pub noisy_file: Option<String>,
    pub flipped: usize,
    pub note: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenBody {
    pub datasets: Vec<DatasetEntry>,
}

/// Lengths in the configured range at which the oracle accepts, or
/// rejects, nothing.
fn empty_class_note(g: GrammarId, min: usize, max: usize) -> Option<String> {
    let oracle = tomita_dfa(g);
    let mut notes = Vec::new();
    for label in [Label::Positive, Label::Negative] {
        let lens: Vec<String> = (min..=max)
            .filter(|&n| verification::class_count(&oracle, n, label) == 0.0)
            .map(|n| n.to_string())
            .collect();
        if !lens.is_empty() {
            notes.push(format!("no {label} strings of length {}", lens.join(", ")));
        }
    }
    (!notes.is_empty()).then(|| notes.join("; "))
}

pub fn gen(ctx: &Ctx) -> Result<Status> {
    let cfg = &ctx.cfg;
    ctx.save_config()?;
    let dc = cfg.data_config();
    let mut entries = Vec::new();
    for &g in &cfg.grammars {
        let d = dc.build(g).with_context(|| format!("generating G{g}"))?;
        io::write_atomic(&ctx.data_path(g, Variant::Clean), &io::dataset_csv(&d)?)?;
        let (mut noisy_file, mut flipped) = (None, 0);
        if let Some(n) = &cfg.noise {
            let nd = evaluation::inject_label_noise(&d, n.n_pos, n.n_neg, cfg.seed)?;
            flipped = d.samples.iter().zip(&nd.samples).filter(|(a, b)| a.label != b.label).count();
            let path = ctx.data_path(g, Variant::Noisy);
            io::write_atomic(&path, &io::dataset_csv(&nd)?)?;
            noisy_file = Some(file_name(&path));
        }
        let (tr, te) = (d.split_counts(Split::Train), d.split_counts(Split::Test));
        entries.push(DatasetEntry {
            grammar: g,
            file: file_name(&ctx.data_path(g, Variant::Clean)),
            seed: dc.seed.wrapping_mul(1000).wrapping_add(g.get() as u64),
            train_positive: tr.positive,
            train_negative: tr.negative,
            test_positive: te.positive,
            test_negative: te.negative,
            noisy_file,
            flipped,
            note: empty_class_note(g, cfg.data.min_length, cfg.data.max_length),
        });
        eprintln!("gen: G{g}: {} train / {} test", tr.total(), te.total());
    }
    let m = Manifest {
        stage: "gen".into(),
        fingerprint: ctx.gen_fingerprint(),
        body: GenBody { datasets: entries },
    };
    io::write_json(&io::manifest_path(&ctx.out, "data"), &m)?;
    Ok(Status::Complete)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

// ---- train ----

/// Sits next to each checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainRecord {
    pub fingerprint: Value,
    pub row: ModelRow,
    pub log: TrainLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub grammar: GrammarId,
    pub cell: CellKind,
    pub seed: u64,
    pub variant: String,
    pub hidden: usize,
    pub params: usize,
    pub epochs: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// False flags a checkpoint that missed the accuracy target; it is kept.
    pub target_met: bool,
    pub error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainBody {
    pub models: usize,
    pub below_target: usize,
    pub failed: usize,
}

struct TrainJob {
    grammar: GrammarId,
    cell: CellKind,
    seed: u64,
    variant: Variant,
}

fn train_one(ctx: &Ctx, job: &TrainJob, data: &LabeledDataset, fingerprint: &Value) -> Result<(ModelRow, bool)> {
    let stem = ctx.model_stem(job.grammar, job.cell, job.seed, job.variant);
    let (ckpt, log_path) = (with_ext(&stem, "json"), with_ext(&stem, "log.json"));
    if ckpt.exists() && log_path.exists() {
        if let Ok(rec) = io::read_json::<TrainRecord>(&log_path) {
            if &rec.fingerprint == fingerprint && RnnModelF64::from_json(&io::read_to_string(&ckpt)?).is_ok() {
                return Ok((rec.row, true));
            }
        }
    }
    let hidden = ctx.cfg.hidden_size(job.cell);
    let tc = ctx.cfg.train_config(job.cell);
    let mut row = ModelRow {
        grammar: job.grammar,
        cell: job.cell,
        seed: job.seed,
        variant: job.variant.as_str().into(),
        hidden,
        params: job.cell.param_count(hidden),
        epochs: 0,
        train_accuracy: 0.0,
        test_accuracy: 0.0,
        target_met: false,
        error: None,
    };
    match evaluation::train_model(job.cell, hidden, job.seed, data, &tc) {
        Ok((m, log)) => {
            row.epochs = log.epochs.len();
            row.train_accuracy = evaluation::accuracy(&m, data, Split::Train)?;
            row.test_accuracy = evaluation::accuracy(&m, data, Split::Test)?;
            row.target_met = row.test_accuracy >= tc.target_accuracy;
            io::write_atomic(&ckpt, m.to_json().as_bytes())?;
            let rec = TrainRecord {
                fingerprint: fingerprint.clone(),
                row: row.clone(),
                log,
            };
            io::write_json(&log_path, &rec)?;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    Ok((row, false))
}

pub fn train(ctx: &Ctx) -> Result<Status> {
    let cfg = &ctx.cfg;
    io::require_stage::<GenBody>(&ctx.out, "gen", "data", &ctx.gen_fingerprint())?;
    ctx.save_config()?;
    let fingerprint = ctx.train_fingerprint();
    let mut data = BTreeMap::new();
    let mut variants = vec![Variant::Clean];
    if cfg.noise.is_some() {
        variants.push(Variant::Noisy);
    }
    for &g in &cfg.grammars {
        for &v in &variants {
            data.insert((g, v.as_str()), ctx.load_data(g, v)?);
        }
    }
    let mut jobs = Vec::new();
    for &grammar in &cfg.grammars {
        for &cell in &cfg.cells {
            for seed in cfg.model_seeds() {
                for &variant in &variants {
                    jobs.push(TrainJob { grammar, cell, seed, variant });
                }
            }
        }
    }
    let rows: Vec<ModelRow> = jobs
        .par_iter()
        .map(|job| {
            let d = &data[&(job.grammar, job.variant.as_str())];
            let (row, resumed) = train_one(ctx, job, d, &fingerprint)?;
            let what = if resumed { "kept" } else { "trained" };
            eprintln!(
                "train: {what} G{} {} seed {} {}: test accuracy {:.4}{}",
                row.grammar,
                row.cell,
                row.seed,
                row.variant,
                row.test_accuracy,
                row.error.as_deref().map(|e| format!(" (error: {e})")).unwrap_or_default()
            );
            Ok(row)
        })
        .collect::<Result<_>>()?;
    io::write_csv(&ctx.report_path("models.csv"), &rows)?;
    let failures: Vec<String> = rows
        .iter()
        .filter(|r| r.error.is_some() || !r.target_met)
        .map(|r| {
            let why = r.error.clone().unwrap_or_else(|| format!("test accuracy {} below target", r.test_accuracy));
            format!("train G{} {} seed {} {}: {why}", r.grammar, r.cell, r.seed, r.variant)
        })
        .collect();
    let m = Manifest {
        stage: "train".into(),
        fingerprint,
        body: TrainBody {
            models: rows.len(),
            below_target: rows.iter().filter(|r| r.error.is_none() && !r.target_met).count(),
            failed: rows.iter().filter(|r| r.error.is_some()).count(),
        },
    };
    io::write_json(&io::manifest_path(&ctx.out, "models"), &m)?;
    Ok(Status::from_failures(failures))
}

// ---- extract ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractRow {
    pub grammar: GrammarId,
    pub cell: CellKind,
    pub seed: u64,
    pub k: usize,
    pub effective_k: usize,
    pub states: usize,
    pub error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExtractBody {
    pub rows: Vec<ExtractRow>,
}

pub fn extract(ctx: &Ctx) -> Result<Status> {
    let cfg = &ctx.cfg;
    io::require_stage::<TrainBody>(&ctx.out, "train", "models", &ctx.train_fingerprint())?;
    ctx.save_config()?;
    let data: BTreeMap<GrammarId, LabeledDataset> = cfg
        .grammars
        .iter()
        .map(|&g| Ok((g, ctx.load_data(g, Variant::Clean)?)))
        .collect::<Result<_>>()?;
    let mut jobs = Vec::new();
    for &g in &cfg.grammars {
        for &cell in &cfg.cells {
            for (trial, seed) in cfg.model_seeds().into_iter().enumerate() {
                jobs.push((g, cell, trial, seed));
            }
        }
    }
    let variant = ctx.source_variant();
    let rows: Vec<ExtractRow> = jobs
        .par_iter()
        .map(|&(g, cell, trial, seed)| -> Result<Vec<ExtractRow>> {
            let model = ctx.load_model(g, cell, seed, variant);
            let mut rows = Vec::new();
            for &k in &cfg.extraction.k_values {
                let ec = ExtractionConfig {
                    k,
                    kmeans_seed: cfg.seed,
                    kmeans_max_iters: cfg.extraction.kmeans_max_iters,
                    restarts: cfg.extraction.restarts,
                };
                // Traces depend only on the strings, so the clean split
                // serves the noisy model too.
                let res = match &model {
                    Ok(m) => extract_dfa(m, &data[&g], &ec).map_err(|e| e.to_string()),
                    Err(e) => Err(format!("no checkpoint: {e:#}")),
                };
                let mut row = ExtractRow { grammar: g, cell, seed, k, effective_k: 0, states: 0, error: None };
                match res {
                    Ok(mut ex) => {
                        ex.provenance.trial = Some(trial);
                        let stem = ctx.dfa_stem(g, cell, seed, k);
                        io::write_atomic(&with_ext(&stem, "dfa"), ex.dfa.to_text().as_bytes())?;
                        io::write_atomic(&with_ext(&stem, "json"), (ex.provenance_json() + "\n").as_bytes())?;
                        row.effective_k = ex.provenance.effective_k;
                        row.states = ex.dfa.num_states();
                    }
                    Err(e) => row.error = Some(e),
                }
                rows.push(row);
            }
            eprintln!("extract: G{g} {cell} seed {seed}: {} DFAs", rows.iter().filter(|r| r.error.is_none()).count());
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let failures = rows
        .iter()
        .filter_map(|r| {
            r.error
                .as_ref()
                .map(|e| format!("extract G{} {} seed {} K={}: {e}", r.grammar, r.cell, r.seed, r.k))
        })
        .collect();
    let m = Manifest {
        stage: "extract".into(),
        fingerprint: ctx.extract_fingerprint(),
        body: ExtractBody { rows },
    };
    io::write_json(&io::manifest_path(&ctx.out, "dfas"), &m)?;
    Ok(Status::from_failures(failures))
}

// ---- evaluate ----

fn evaluate_row(ctx: &Ctx, row: &ExtractRow, data: &LabeledDataset) -> Result<TrialResult> {
    let (g, cell, seed) = (row.grammar, row.cell, row.seed);
    let stem = ctx.dfa_stem(g, cell, seed, row.k);
    let dfa = Dfa::from_text(&io::read_to_string(&with_ext(&stem, "dfa"))?)?;
    let provenance: Provenance = io::read_json(&with_ext(&stem, "json"))?;
    let clean_log: TrainRecord = io::read_json(&with_ext(&ctx.model_stem(g, cell, seed, Variant::Clean), "log.json"))?;
    let variant = ctx.source_variant();
    let source = ctx.load_model(g, cell, seed, variant)?;
    let ex = ExtractedDfa { dfa, provenance };
    Ok(evaluation::trial_result(
        cell,
        row.k,
        seed,
        clean_log.row.test_accuracy,
        &source,
        variant == Variant::Noisy,
        &ex,
        data,
    )?)
}

pub fn evaluate(ctx: &Ctx) -> Result<Status> {
    let cfg = &ctx.cfg;
    let m = io::require_stage::<ExtractBody>(&ctx.out, "extract", "dfas", &ctx.extract_fingerprint())?;
    ctx.save_config()?;
    let data: BTreeMap<GrammarId, LabeledDataset> = cfg
        .grammars
        .iter()
        .map(|&g| Ok((g, ctx.load_data(g, Variant::Clean)?)))
        .collect::<Result<_>>()?;
    let results: Vec<TrialResult> = m
        .body
        .rows
        .par_iter()
        .map(|row| {
            let err = match &row.error {
                Some(e) => e.clone(),
                None => match evaluate_row(ctx, row, &data[&row.grammar]) {
                    Ok(r) => return r,
                    Err(e) => format!("{e:#}"),
                },
            };
            let mut t = TrialResult::failed(
                row.grammar,
                row.cell,
                row.k,
                row.seed,
                cfg.seed,
                &tomita_core::Error::InvalidInput(String::new()),
            );
            t.error = Some(err);
            t
        })
        .collect();
    io::write_csv(&ctx.report_path("trials.csv"), &results)?;
    report::write_extraction_summaries(&ctx.out.join("reports"), &results)?;
    let failures = results
        .iter()
        .filter_map(|r| {
            r.error
                .as_ref()
                .map(|e| format!("evaluate G{} {} seed {} K={}: {e}", r.grammar, r.cell, r.model_seed, r.k))
        })
        .collect();
    Ok(Status::from_failures(failures))
}

// ---- verify ----

/// Per (grammar, model) result, kept so reruns skip finished cells.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyRecord {
    pub fingerprint: Value,
    pub grammar: GrammarId,
    pub cell: String,
    pub report: Option<VerificationReport>,
    pub lengths: Vec<LengthGamma>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct GammaRow {
    pub grammar: GrammarId,
    pub cell: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub trial: usize,
    pub label: Label,
    pub gamma: f64,
}

#[derive(Debug, Serialize)]
pub struct WitnessRow {
    pub grammar: GrammarId,
    pub cell: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub trial: usize,
    pub center: String,
    pub perturbed: String,
    pub oracle_label: Label,
    pub rnn_label: Label,
}

#[derive(Debug, Serialize)]
pub struct VerifySummaryRow {
    pub grammar: GrammarId,
    pub cell: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub gamma_pos: Option<f64>,
    pub gamma_neg: Option<f64>,
    pub witnesses: usize,
    pub error: Option<String>,
}

pub struct VerifyOptions {
    /// Verify each grammar's own DFA instead of trained models.
    pub oracle_as_model: bool,
}

fn run_verification<R: Recognizer + ?Sized>(ctx: &Ctx, f: &R, oracle: &Dfa) -> (Option<VerificationReport>, Vec<LengthGamma>, Option<String>) {
    let v = &ctx.cfg.verification;
    let p = ctx.cfg.protocol(v.length);
    let (report, error) = match verification::verify(f, oracle, &p) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let lengths = if v.sweep_lengths.is_empty() {
        Vec::new()
    } else {
        verification::length_sweep(f, oracle, &v.sweep_lengths, &p)
    };
    (report, lengths, error)
}

pub fn verify(ctx: &Ctx, opts: &VerifyOptions) -> Result<Status> {
    let cfg = &ctx.cfg;
    let v = &cfg.verification;
    let base = if opts.oracle_as_model {
        json!("oracle")
    } else {
        for g in &v.grammars {
            if !cfg.grammars.contains(g) {
                bail!("verification grammar G{g} is not among the configured grammars");
            }
        }
        io::require_stage::<TrainBody>(&ctx.out, "train", "models", &ctx.train_fingerprint())?;
        ctx.train_fingerprint()
    };
    ctx.save_config()?;
    let fingerprint = json!({
        "models": base,
        "protocol": cfg.protocol(v.length),
        "model_index": v.model_index,
        "sweep_lengths": v.sweep_lengths,
    });
    let cells: Vec<Option<CellKind>> = if opts.oracle_as_model {
        vec![None]
    } else {
        cfg.cells.iter().copied().map(Some).collect()
    };
    let seed = cfg.model_seed(v.model_index);
    let mut records = Vec::new();
    for &g in &v.grammars {
        let oracle = tomita_dfa(g);
        for &cell in &cells {
            let name = cell.map_or("oracle", CellKind::as_str).to_string();
            let path = ctx.out.join("verify").join(format!("G{g}_{name}.json"));
            if let Ok(rec) = io::read_json::<VerifyRecord>(&path) {
                if rec.fingerprint == fingerprint {
                    eprintln!("verify: kept G{g} {name}");
                    records.push(rec);
                    continue;
                }
            }
            let (report, lengths, error) = match cell {
                None => run_verification(ctx, &oracle, &oracle),
                Some(c) => match ctx.load_model(g, c, seed, Variant::Clean) {
                    Ok(m) => run_verification(ctx, &m, &oracle),
                    Err(e) => (None, Vec::new(), Some(format!("no checkpoint: {e:#}"))),
                },
            };
            if let (Some(r), Some(c)) = (&report, cell) {
                let m = ctx.load_model(g, c, seed, Variant::Clean)?;
                if let Some(w) = r.witnesses.iter().find(|w| !w.holds(&m, &oracle)) {
                    bail!("internal error: witness {w:?} does not re-verify");
                }
            }
            let rec = VerifyRecord { fingerprint: fingerprint.clone(), grammar: g, cell: name.clone(), report, lengths, error };
            io::write_json(&path, &rec)?;
            eprintln!(
                "verify: G{g} {name}: {}",
                match &rec.report {
                    Some(r) => format!("gamma+ {:.4} gamma- {:.4}", r.gamma_pos(), r.gamma_neg()),
                    None => format!("error: {}", rec.error.as_deref().unwrap_or("")),
                }
            );
            records.push(rec);
        }
    }
    let prefix = if opts.oracle_as_model { "oracle_" } else { "" };
    write_verification_reports(ctx, prefix, &records)?;
    let failures = records
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("verify G{} {}: {e}", r.grammar, r.cell)))
        .chain(records.iter().flat_map(|r| {
            r.lengths
                .iter()
                .filter_map(move |l| l.error.as_ref().map(|e| format!("verify G{} {} N={}: {e}", r.grammar, r.cell, l.length)))
        }))
        .collect();
    Ok(Status::from_failures(failures))
}

fn write_verification_reports(ctx: &Ctx, prefix: &str, records: &[VerifyRecord]) -> Result<()> {
    let n = ctx.cfg.verification.length;
    let (mut gammas, mut witnesses, mut summary, mut sweep) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for rec in records {
        let (g, cell) = (rec.grammar, &rec.cell);
        if let Some(r) = &rec.report {
            gammas.extend(r.trials.iter().map(|t| GammaRow {
                grammar: g,
                cell: cell.clone(),
                n,
                trial: t.trial,
                label: t.label,
                gamma: t.gamma,
            }));
            witnesses.extend(r.witnesses.iter().map(|w| WitnessRow {
                grammar: g,
                cell: cell.clone(),
                n,
                trial: w.trial,
                center: w.center.clone(),
                perturbed: w.perturbed.clone(),
                oracle_label: w.oracle_label,
                rnn_label: w.rnn_label,
            }));
        }
        summary.push(VerifySummaryRow {
            grammar: g,
            cell: cell.clone(),
            n,
            gamma_pos: rec.report.as_ref().map(VerificationReport::gamma_pos),
            gamma_neg: rec.report.as_ref().map(VerificationReport::gamma_neg),
            witnesses: rec.report.as_ref().map_or(0, |r| r.witnesses.len()),
            error: rec.error.clone(),
        });
        sweep.extend(rec.lengths.iter().map(|l| VerifySummaryRow {
            grammar: g,
            cell: cell.clone(),
            n: l.length,
            gamma_pos: l.gamma_pos,
            gamma_neg: l.gamma_neg,
            witnesses: 0,
            error: l.error.clone(),
        }));
    }
    io::write_csv(&ctx.report_path(&format!("{prefix}verification.csv")), &gammas)?;
    io::write_csv(&ctx.report_path(&format!("{prefix}witnesses.csv")), &witnesses)?;
    io::write_csv(&ctx.report_path(&format!("{prefix}verification_summary.csv")), &summary)?;
    if !sweep.is_empty() {
        io::write_csv(&ctx.report_path(&format!("{prefix}length_sweep.csv")), &sweep)?;
    }
    Ok(())
}

// ---- distance ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub grammar: GrammarId,
    #[serde(rename = "N")]
    pub n: usize,
    pub d_pos: Option<f64>,
    pub d_neg: Option<f64>,
    pub d_avg: Option<f64>,
}

pub fn distance_rows(grammars: &[GrammarId], lengths: &[usize], mode: DistanceMode) -> (Vec<DistanceRow>, Vec<String>) {
    let cells: Vec<(GrammarId, usize)> = grammars
        .iter()
        .flat_map(|&g| lengths.iter().map(move |&n| (g, n)))
        .collect();
    let results: Vec<_> = cells
        .par_iter()
        .map(|&(g, n)| (g, n, average_edit_distance_with(g, n, mode)))
        .collect();
    let mut failures = Vec::new();
    let rows = results
        .into_iter()
        .map(|(g, n, r)| match r {
            Ok(r) => DistanceRow {
                grammar: g,
                n,
                d_pos: Some(r.d_pos_f64()),
                d_neg: Some(r.d_neg_f64()),
                d_avg: Some(r.d_avg_f64()),
            },
            Err(e) => {
                failures.push(format!("distance G{g} N={n}: {e}"));
                DistanceRow { grammar: g, n, d_pos: None, d_neg: None, d_avg: None }
            }
        })
        .collect();
    (rows, failures)
}

pub fn distance(ctx: &Ctx) -> Result<Status> {
    let d = &ctx.cfg.distance;
    ctx.save_config()?;
    let (rows, failures) = distance_rows(&ctx.cfg.grammars, &d.lengths, d.metric);
    io::write_csv(&ctx.report_path("distance.csv"), &rows)?;
    Ok(Status::from_failures(failures))
}

// ---- report ----

pub fn report(ctx: &Ctx) -> Result<Status> {
    let dir = ctx.out.join("reports");
    let text = report::regenerate(&dir)?;
    if text.is_empty() {
        return Err(anyhow!(
            "missing prerequisite: no raw results in {}; run `tomita evaluate`, `tomita verify` or `tomita distance` first",
            dir.display()
        ));
    }
    print!("{text}");
    Ok(Status::Complete)
}
