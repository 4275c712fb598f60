//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//! Criteria 5 and 8 are reported outcomes of stochastic training; they are
//! printed but do not fail the test.

use std::collections::HashSet;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use tomita_core::automata::{binary_strings, tomita_dfa, Sample, Split, TOMITA_STATE_COUNTS};
use tomita_core::evaluation::{
    accuracy, fidelity, run_sweep, score_extraction, train_model, DataConfig, SweepConfig,
};
use tomita_core::extraction::{dfa_state_traces, extract_dfa, extract_from_traces, ExtractionConfig};
use tomita_core::metrics::{average_edit_distance_at_n, edit_distance};
use tomita_core::rnn::{CellKind, TrainConfig};
use tomita_core::verification::{adversarial_accuracy, class_count, verify, Protocol, VerificationReport, Witness};
use tomita_core::{Dfa, GrammarId, Label, LabeledDataset, Recognizer, RnnModelF64};

const REFERENCE_DISTANCES: [[f64; 4]; 7] = [
    [2.51, 3.00, 3.50, 4.00],
    [2.51, 3.00, 3.50, 4.00],
    [1.13, 1.18, 1.24, 1.30],
    [1.16, 1.16, 1.18, 1.22],
    [1.00, 1.00, 1.00, 1.00],
    [1.00, 1.00, 1.00, 1.00],
    [1.17, 1.31, 1.51, 1.75],
];

/// Bypasses the test harness's output capture so the lines always show.
fn line(n: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {n}: {verdict} {detail}");
}

fn gid(g: u8) -> GrammarId {
    GrammarId::new(g).unwrap()
}

fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(format!("{name}.json"))
}

fn fixture(g: u8, cell: CellKind) -> RnnModelF64 {
    RnnModelF64::from_json(&std::fs::read_to_string(fixture_path(&format!("G{g}_{cell}"))).unwrap()).unwrap()
}

/// Re-checks a witness from first principles instead of `Witness::holds`.
fn witness_ok<R: Recognizer>(f: &R, oracle: &Dfa, w: &Witness, p: &Protocol) -> bool {
    let oc = oracle.label(&w.center).unwrap();
    w.center.len() == p.length
        && edit_distance(&w.center, &w.perturbed) <= p.radius
        && oracle.label(&w.perturbed).unwrap() == oc
        && oc == w.oracle_label
        && f.classify(&w.center) == oc
        && f.classify(&w.perturbed) == w.rnn_label
        && w.rnn_label != oc
}

fn criterion1() -> bool {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut short = Duration::ZERO;
    for g in 1..=7u8 {
        for (i, n) in [8, 10, 12, 14].into_iter().enumerate() {
            let t = Instant::now();
            let r = average_edit_distance_at_n(gid(g), n).unwrap();
            if n <= 10 {
                short += t.elapsed();
            }
            worst = worst.max((r.d_avg_f64() - REFERENCE_DISTANCES[g as usize - 1][i]).abs());
        }
    }
    let total = start.elapsed();
    let pass = worst <= 0.005 && total <= Duration::from_secs(600) && short <= Duration::from_secs(10);
    line(1, pass, &format!("reference distances: 28 cells, max |err| {worst:.4}, N=8/10 in {short:.2?}, total {total:.2?}"));
    pass
}

fn criterion2() -> bool {
    let strings: Vec<String> = (0..=10).flat_map(binary_strings).collect();
    let mut ok = 0;
    for g in 1..=7u8 {
        let oracle = tomita_dfa(gid(g));
        let traces = dfa_state_traces(&oracle, &strings);
        let cfg = ExtractionConfig::with_k(TOMITA_STATE_COUNTS[g as usize - 1]);
        let (a, _) = extract_from_traces(&traces, &cfg).unwrap();
        let (b, _) = extract_from_traces(&traces, &cfg).unwrap();
        if a.equivalent(&oracle).unwrap().equivalent && a == b {
            ok += 1;
        }
    }
    line(2, ok == 7, &format!("oracle round trip: {ok}/7 grammars language-equivalent and deterministic"));
    ok == 7
}

fn criterion3() -> bool {
    let mut worst: f64 = 0.0;
    let eps = 1e-5;
    for kind in CellKind::ALL {
        for seed in 1..=3 {
            let mut m = RnnModelF64::init(kind, 4, seed).unwrap();
            for x in binary_strings(3) {
                for target in [Label::Negative, Label::Positive] {
                    let (_, g) = m.loss_and_gradient(&x, target);
                    for ti in 0..m.params().len() {
                        for k in 0..m.params()[ti].data.len() {
                            let orig = m.params()[ti].data[k];
                            m.params_mut()[ti].data[k] = orig + eps;
                            let up = m.loss(&x, target);
                            m.params_mut()[ti].data[k] = orig - eps;
                            let down = m.loss(&x, target);
                            m.params_mut()[ti].data[k] = orig;
                            let numeric = (up - down) / (2.0 * eps);
                            let analytic = g.tensors[ti][k];
                            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                            worst = worst.max(rel);
                        }
                    }
                }
            }
        }
    }
    let pass = worst < 1e-4;
    line(3, pass, &format!("finite differences, 5 cells, hidden 4, length 3: max relative error {worst:.2e}"));
    pass
}

fn criterion4() -> bool {
    let mut parts = Vec::new();
    let mut pass = true;
    for g in [1u8, 2] {
        let data = DataConfig::default().build(gid(g)).unwrap();
        let runs: Vec<(f64, Duration)> = (0..10u64)
            .into_par_iter()
            .map(|seed| {
                let t = Instant::now();
                let (m, _) = train_model(CellKind::SecondOrder, 8, seed, &data, &TrainConfig::default()).unwrap();
                (accuracy(&m, &data, Split::Test).unwrap(), t.elapsed())
            })
            .collect();
        let perfect = runs.iter().filter(|r| r.0 == 1.0).count();
        let slowest = runs.iter().map(|r| r.1).max().unwrap();
        pass &= perfect >= 8 && slowest <= Duration::from_secs(300);
        parts.push(format!("G{g} {perfect}/10 at 100% (slowest {slowest:.1?})"));
    }
    line(4, pass, &format!("second-order trainability, seeds 0-9: {}", parts.join(", ")));
    pass
}

fn criterion5() -> bool {
    let cfg = SweepConfig {
        cells: vec![CellKind::SecondOrder],
        ..SweepConfig::default()
    };
    let (summary, results) = run_sweep(&cfg).unwrap();
    let rates: Vec<f64> = summary.rows.iter().map(|r| r.success_rate).collect();
    let avg = rates.iter().sum::<f64>() / rates.len() as f64;
    let g1 = summary.get(gid(1), CellKind::SecondOrder).unwrap().success_rate;
    let pass = g1 == 1.0 && (0.6..=0.9).contains(&avg);
    let per: Vec<String> = summary.rows.iter().map(|r| format!("G{} {:.3}", r.grammar, r.success_rate)).collect();
    line(
        5,
        pass,
        &format!(
            "second-order sweep ({} trials, seeds 0-9, K 3-15): {}; average {avg:.3} (reported)",
            results.len(),
            per.join(", ")
        ),
    );
    pass
}

fn criterion6() -> bool {
    let mut oracle_ok = true;
    for g in 1..=7u8 {
        let oracle = tomita_dfa(gid(g));
        for n in 1..=20 {
            for label in [Label::Positive, Label::Negative] {
                if class_count(&oracle, n, label) == 0.0 {
                    continue;
                }
                let p = Protocol { length: n, trials: 5, samples: 50, ..Protocol::default() };
                let (gammas, witnesses) = adversarial_accuracy(&oracle, &oracle, &p, label).unwrap();
                oracle_ok &= gammas.iter().all(|t| t.gamma == 1.0) && witnesses.is_empty();
            }
        }
    }

    // a trained G3 model with one readout weight zeroed
    let oracle = tomita_dfa(gid(3));
    let mut m = RnnModelF64::from_json(&std::fs::read_to_string(fixture_path("G3_second_order_seed5")).unwrap()).unwrap();
    let readout = m.params().len() - 2;
    m.params_mut()[readout].data[CORRUPT_INDEX] = 0.0;
    let p = Protocol { length: 50, trials: 5, ..Protocol::default() };
    let r = verify(&m, &oracle, &p).unwrap();
    let broken = r.gamma_pos() < 1.0 || r.gamma_neg() < 1.0;
    let sound = r.witnesses.iter().all(|w| witness_ok(&m, &oracle, w, &p));
    let pass = oracle_ok && broken && !r.witnesses.is_empty() && sound;
    line(
        6,
        pass,
        &format!(
            "oracle-as-model gamma = 1 for G1-G7, N 1-20: {oracle_ok}; corrupted G3: gamma+ {:.3} gamma- {:.3}, {} witnesses, all re-verified: {sound}",
            r.gamma_pos(),
            r.gamma_neg(),
            r.witnesses.len()
        ),
    );
    pass
}

/// Readout weight zeroed by the corruption check: positive row, unit 6.
const CORRUPT_INDEX: usize = 14;

fn random_dfa(rng: &mut ChaCha8Rng) -> Dfa {
    let n = rng.gen_range(1..=5);
    let table: Vec<[usize; 2]> = (0..n).map(|_| [rng.gen_range(0..n), rng.gen_range(0..n)]).collect();
    let accepting: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
    Dfa::binary(&table, 0, accepting).unwrap()
}

fn criterion7() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pool: Vec<String> = (0..=6).flat_map(binary_strings).collect();
    let mut checked = 0;
    let mut pass = true;
    for round in 0..200 {
        let size = rng.gen_range(1..=32);
        let mut idx: Vec<usize> = (0..pool.len()).collect();
        for i in 0..size {
            let j = rng.gen_range(i..idx.len());
            idx.swap(i, j);
        }
        let set: Vec<String> = idx[..size].iter().map(|&i| pool[i].clone()).collect();
        let a = random_dfa(&mut rng);
        let b = random_dfa(&mut rng);
        let m = RnnModelF64::init(CellKind::ALL[round % 5], 3, round as u64).unwrap();

        // accuracy against random labels, all strings in the test split
        let samples: Vec<Sample> = set
            .iter()
            .map(|s| Sample { string: s.clone(), label: Label::from(rng.gen_bool(0.5)) })
            .collect();
        let d = LabeledDataset::with_split(None, samples.clone(), Vec::new(), (0..size).collect()).unwrap();
        let brute = samples.iter().filter(|s| m.classify(&s.string) == s.label).count() as f64 / size as f64;
        pass &= accuracy(&m, &d, Split::Test).unwrap() == brute;

        let agree = set.iter().filter(|x| a.classify(x) == b.classify(x)).count() as f64 / size as f64;
        let pos_a: HashSet<&String> = set.iter().filter(|x| a.classify(x) == Label::Positive).collect();
        let pos_b: HashSet<&String> = set.iter().filter(|x| b.classify(x) == Label::Positive).collect();
        let sym = pos_a.symmetric_difference(&pos_b).count() as f64;
        let f = fidelity(&a, &b, &set).unwrap();
        pass &= f == agree && (f - (1.0 - sym / size as f64)).abs() < 1e-12;
        let fm = set.iter().filter(|x| m.classify(x) == a.classify(x)).count() as f64 / size as f64;
        pass &= fidelity(&m, &a, &set).unwrap() == fm;
        pass &= fidelity(&m, &m, &set).unwrap() == 1.0 && fidelity(&a, &a, &set).unwrap() == 1.0;
        checked += 1;
    }
    line(7, pass, &format!("accuracy/fidelity vs brute force and the symmetric-difference identity on {checked} random sets of <= 32 strings"));
    pass
}

fn gamma_summary(r: &VerificationReport) -> String {
    format!("{:.4}/{:.4}", r.gamma_pos(), r.gamma_neg())
}

fn criterion8() -> bool {
    let p = Protocol::default();
    let mut parts = Vec::new();
    let mut second_order_ok = true;
    let mut sound = true;
    for g in [3u8, 4, 7] {
        let m = fixture(g, CellKind::SecondOrder);
        let oracle = tomita_dfa(gid(g));
        let r = verify(&m, &oracle, &p).unwrap();
        second_order_ok &= r.gamma_pos() == 1.0 && r.gamma_neg() == 1.0;
        sound &= r.witnesses.iter().all(|w| witness_ok(&m, &oracle, w, &p));
        parts.push(format!("second_order G{g} {}", gamma_summary(&r)));
    }
    let mut below = None;
    'search: for (g, cell) in SHIPPED_OTHERS {
        let m = fixture(g, cell);
        let oracle = tomita_dfa(gid(g));
        match verify(&m, &oracle, &p) {
            Ok(r) => {
                sound &= r.witnesses.iter().all(|w| witness_ok(&m, &oracle, w, &p));
                parts.push(format!("{cell} G{g} {}", gamma_summary(&r)));
                if r.gamma_pos() < 1.0 || r.gamma_neg() < 1.0 {
                    below = Some(format!("{cell} G{g}"));
                    break 'search;
                }
            }
            Err(e) => parts.push(format!("{cell} G{g} error: {e}")),
        }
    }
    let pass = second_order_ok && below.is_some() && sound;
    line(
        8,
        pass,
        &format!(
            "N=200, 30 trials x 100 centers: {}; gamma < 1 found: {}; witnesses re-verified: {sound} (reported)",
            parts.join(", "),
            below.as_deref().unwrap_or("none")
        ),
    );
    pass
}

/// Non-second-order checkpoints shipped in tests/fixtures, checked in order
/// until one falls below gamma = 1.
const SHIPPED_OTHERS: [(u8, CellKind); 1] = [(3, CellKind::Elman)];

/// Runs a small pipeline end to end and serializes everything it produces.
fn pipeline_bytes() -> String {
    let g = gid(4);
    let data = DataConfig { max_length: 8, per_class: 80, seed: 3, ..DataConfig::default() }.build(g).unwrap();
    let mut out = String::new();
    for cell in [CellKind::SecondOrder, CellKind::Gru] {
        let tc = TrainConfig { max_epochs: 40, stage_epochs: 10, ..TrainConfig::default() };
        let (m, log) = train_model(cell, 5, 11, &data, &tc).unwrap();
        out += &m.to_json();
        out += &serde_json::to_string(&log).unwrap();
        for k in [3, 5] {
            let ex = extract_dfa(&m, &data, &ExtractionConfig { k, kmeans_seed: 2, ..ExtractionConfig::default() }).unwrap();
            out += &ex.dfa.to_text();
            out += &format!("{:?}", score_extraction(&m, &ex.dfa, &data).unwrap());
        }
        let p = Protocol { length: 16, samples: 20, trials: 3, max_attempts: 100_000, ..Protocol::default() };
        match verify(&m, &tomita_dfa(g), &p) {
            Ok(r) => out += &serde_json::to_string(&r).unwrap(),
            Err(e) => out += &e.to_string(),
        }
    }
    let sweep = SweepConfig {
        grammars: vec![gid(1), gid(4)],
        cells: vec![CellKind::Elman],
        k_values: vec![3, 4],
        hidden_seeds: vec![0, 1],
        data: DataConfig { max_length: 7, per_class: 40, ..DataConfig::default() },
        train: TrainConfig { max_epochs: 30, stage_epochs: 10, ..TrainConfig::default() },
        ..SweepConfig::default()
    };
    let (summary, trials) = run_sweep(&sweep).unwrap();
    out += &serde_json::to_string(&summary).unwrap();
    out += &serde_json::to_string(&trials).unwrap();
    out
}

fn criterion9() -> bool {
    let (a, b) = rayon::join(pipeline_bytes, pipeline_bytes);
    let pass = a == b;
    line(9, pass, &format!("two pipeline runs with identical config and seeds: {} bytes, identical: {pass}", a.len()));
    pass
}

#[test]
fn acceptance() {
    let hard = [criterion1(), criterion2(), criterion3(), criterion4()];
    let c5 = criterion5();
    let c6 = criterion6();
    let c7 = criterion7();
    let c8 = criterion8();
    let c9 = criterion9();
    let _reported = (c5, c8);
    assert!(hard.iter().all(|&p| p) && c6 && c7 && c9, "a hard acceptance criterion failed; see the lines above");
}
