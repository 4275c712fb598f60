//! Derived reports: summaries rebuilt from the raw result CSVs, and the
//! plain-text tables `tomita report` prints.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use serde::Serialize;
use tomita_core::evaluation::{accuracy_variance_by_k, summarize, TrialResult};
use tomita_core::rnn::CellKind;
use tomita_core::GrammarId;

use crate::io;
use crate::stages::DistanceRow;

#[derive(Debug, Serialize)]
struct VarianceRow {
    grammar: GrammarId,
    cell: CellKind,
    k: usize,
    var_dfa_accuracy: f64,
}

/// Writes `summary.csv` and `accuracy_variance.csv` next to the trials.
pub fn write_extraction_summaries(dir: &Path, results: &[TrialResult]) -> Result<()> {
    let summary = summarize(results);
    io::write_csv(&dir.join("summary.csv"), &summary.rows)?;
    let mut var = Vec::new();
    for r in &summary.rows {
        for (k, v) in accuracy_variance_by_k(results, r.grammar, r.cell) {
            var.push(VarianceRow { grammar: r.grammar, cell: r.cell, k, var_dfa_accuracy: v });
        }
    }
    io::write_csv(&dir.join("accuracy_variance.csv"), &var)
}

fn extraction_table(results: &[TrialResult]) -> String {
    let summary = summarize(results);
    let mut s = String::from("Extraction success rate\n");
    let cells: Vec<CellKind> = {
        let mut c: Vec<_> = summary.rows.iter().map(|r| r.cell).collect();
        c.sort();
        c.dedup();
        c
    };
    let mut grammars: Vec<GrammarId> = summary.rows.iter().map(|r| r.grammar).collect();
    grammars.sort();
    grammars.dedup();
    let _ = write!(s, "{:<14}", "cell");
    for g in &grammars {
        let _ = write!(s, "{:>8}", format!("G{g}"));
    }
    let _ = writeln!(s, "{:>8}", "avg");
    for c in cells {
        let _ = write!(s, "{:<14}", c.as_str());
        let mut rates = Vec::new();
        for &g in &grammars {
            match summary.get(g, c) {
                Some(r) => {
                    rates.push(r.success_rate);
                    let _ = write!(s, "{:>8.3}", r.success_rate);
                }
                None => {
                    let _ = write!(s, "{:>8}", "-");
                }
            }
        }
        let avg = rates.iter().sum::<f64>() / rates.len().max(1) as f64;
        let _ = writeln!(s, "{avg:>8.3}");
    }
    s
}

fn distance_table(rows: &[DistanceRow]) -> String {
    let mut grid: BTreeMap<GrammarId, BTreeMap<usize, Option<f64>>> = BTreeMap::new();
    let mut lengths: Vec<usize> = rows.iter().map(|r| r.n).collect();
    lengths.sort();
    lengths.dedup();
    for r in rows {
        grid.entry(r.grammar).or_default().insert(r.n, r.d_avg);
    }
    let mut s = String::from("Average edit distance d_avg\n");
    let _ = write!(s, "{:<8}", "grammar");
    for n in &lengths {
        let _ = write!(s, "{:>8}", format!("N={n}"));
    }
    s.push('\n');
    for (g, row) in grid {
        let _ = write!(s, "{:<8}", format!("G{g}"));
        for n in &lengths {
            match row.get(n).copied().flatten() {
                Some(v) => {
                    let _ = write!(s, "{v:>8.2}");
                }
                None => {
                    let _ = write!(s, "{:>8}", "-");
                }
            }
        }
        s.push('\n');
    }
    s
}

/// Any CSV as aligned columns.
fn csv_table(title: &str, path: &Path) -> Result<String> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = vec![r.headers()?.iter().map(str::to_owned).collect::<Vec<_>>()];
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_owned).collect());
    }
    let cols = rows[0].len();
    let width: Vec<usize> = (0..cols)
        .map(|i| rows.iter().map(|r| r.get(i).map_or(0, |c| c.len())).max().unwrap_or(0))
        .collect();
    let mut s = format!("{title}\n");
    for row in rows {
        let line: Vec<String> = row.iter().enumerate().map(|(i, c)| format!("{c:<w$}", w = width[i])).collect();
        let _ = writeln!(s, "{}", line.join("  ").trim_end());
    }
    Ok(s)
}

/// Rebuilds the derived CSVs from the raw ones in `dir` and returns the
/// text tables; empty when there are no raw results at all.
pub fn regenerate(dir: &Path) -> Result<String> {
    let mut sections = Vec::new();
    let trials = dir.join("trials.csv");
    if trials.exists() {
        let results: Vec<TrialResult> = io::read_csv(&trials)?;
        write_extraction_summaries(dir, &results)?;
        sections.push(extraction_table(&results));
    }
    for (prefix, title) in [("", "Adversarial accuracy"), ("oracle_", "Adversarial accuracy (oracle as model)")] {
        let p = dir.join(format!("{prefix}verification_summary.csv"));
        if p.exists() {
            sections.push(csv_table(title, &p)?);
        }
        let p = dir.join(format!("{prefix}length_sweep.csv"));
        if p.exists() {
            sections.push(csv_table(&format!("{title} by length"), &p)?);
        }
    }
    let dist = dir.join("distance.csv");
    if dist.exists() {
        let rows: Vec<DistanceRow> = io::read_csv(&dist)?;
        sections.push(distance_table(&rows));
    }
    Ok(sections.join("\n"))
}
