use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tomita_core::RnnModelF64;

fn tomita(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tomita"))
        .args(["--preset", "quick", "--out"])
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files_under(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn csv_rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| headers.iter().map(str::to_owned).zip(rec.unwrap().iter().map(str::to_owned)).collect())
        .collect()
}

#[test]
fn full_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = tomita(dir, &["run"]);
        assert!(o.status.code() == Some(0) || o.status.code() == Some(2), "{}", stderr(&o));
    }
    for sub in ["reports", "data", "dfas", "models"] {
        let (fa, fb) = (files_under(&a.join(sub)), files_under(&b.join(sub)));
        assert!(!fa.is_empty(), "{sub} is empty");
        assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
        for (k, v) in &fa {
            assert!(v == &fb[k], "{sub}/{} differs", k.display());
        }
    }
    for f in ["trials.csv", "summary.csv", "verification.csv", "witnesses.csv", "distance.csv", "models.csv"] {
        assert!(a.join("reports").join(f).exists(), "{f}");
    }
}

#[test]
fn oracle_as_model_is_never_broken() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tomita(tmp.path(), &["verify", "--oracle-as-model", "--verify-grammars", "1,2,3,4,5,6,7", "--grammars", "1,2,3,4,5,6,7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&tmp.path().join("reports/oracle_verification.csv"));
    assert_eq!(rows.len(), 7 * 2 * 2);
    assert!(rows.iter().all(|r| r["gamma"] == "1.0" && r["cell"] == "oracle"));
    assert!(csv_rows(&tmp.path().join("reports/oracle_witnesses.csv")).is_empty());
}

#[test]
fn stages_name_missing_and_stale_prerequisites() {
    let tmp = tempfile::tempdir().unwrap();
    for (cmd, stage) in [("train", "gen"), ("extract", "train"), ("evaluate", "extract"), ("verify", "train")] {
        let o = tomita(tmp.path(), &[cmd]);
        assert_eq!(o.status.code(), Some(1));
        let e = stderr(&o);
        assert!(e.contains("missing prerequisite") && e.contains(&format!("`{stage}`")), "{cmd}: {e}");
    }
    let o = tomita(tmp.path(), &["report"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing prerequisite"));

    assert_eq!(tomita(tmp.path(), &["gen"]).status.code(), Some(0));
    let o = tomita(tmp.path(), &["--seed", "5", "train"]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("stale prerequisite") && e.contains("`gen`"), "{e}");
}

#[test]
fn gen_manifest_matches_files() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tomita(tmp.path(), &["--grammars", "1,2", "gen"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("data/manifest.json")).unwrap()).unwrap();
    for entry in m["datasets"].as_array().unwrap() {
        let rows = csv_rows(&tmp.path().join("data").join(entry["file"].as_str().unwrap()));
        let count = |label: &str, split: &str| rows.iter().filter(|r| r["label"] == label && r["split"] == split).count() as u64;
        assert_eq!(entry["train_positive"], count("positive", "train"));
        assert_eq!(entry["train_negative"], count("negative", "train"));
        assert_eq!(entry["test_positive"], count("positive", "test"));
        assert_eq!(entry["test_negative"], count("negative", "test"));
    }
    let g2 = &m["datasets"][1];
    assert_eq!(g2["grammar"], 2);
    assert_eq!(g2["note"], "no positive strings of length 1, 3, 5, 7");
    let again = tempfile::tempdir().unwrap();
    tomita(again.path(), &["--grammars", "1,2", "gen"]);
    assert_eq!(files_under(&tmp.path().join("data")), files_under(&again.path().join("data")));
}

#[test]
fn train_resumes_and_checkpoints_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    tomita(tmp.path(), &["--grammars", "1", "gen"]);
    let o = tomita(tmp.path(), &["--grammars", "1", "train"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let models = files_under(&tmp.path().join("models"));
    let o = tomita(tmp.path(), &["--grammars", "1", "train"]);
    let e = stderr(&o);
    assert_eq!(e.matches("train: kept").count(), 4, "{e}");
    assert!(!e.contains("train: trained"));
    assert_eq!(files_under(&tmp.path().join("models")), models);

    let ckpt = tmp.path().join("models/G1/second_order/seed0.json");
    let text = fs::read_to_string(&ckpt).unwrap();
    let m = RnnModelF64::from_json(&text).unwrap();
    assert_eq!(m.to_json(), text);
    let bits = |m: &RnnModelF64| -> Vec<u64> { m.params().iter().flat_map(|t| t.data.iter().map(|x| x.to_bits())).collect() };
    assert_eq!(bits(&RnnModelF64::from_json(&m.to_json()).unwrap()), bits(&m));
}

#[test]
fn below_target_models_are_flagged_not_deleted() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "grammars = [4]\ncells = [\"elman\"]\n[data]\nmax_length = 8\nper_class = 60\n[train]\nmax_epochs = 1\ncurriculum = []\n[extraction]\nhidden_seeds = 1\n").unwrap();
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_tomita"))
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(tmp.path().join("out"))
            .args(args)
            .output()
            .unwrap()
    };
    assert_eq!(run(&["gen"]).status.code(), Some(0));
    let o = run(&["train"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("below target"));
    let rows = csv_rows(&tmp.path().join("out/reports/models.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["target_met"], "false");
    assert!(tmp.path().join("out/models/G4/elman/seed0.json").exists());
}

#[test]
fn report_regeneration_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    tomita(tmp.path(), &["run"]);
    let before = files_under(&tmp.path().join("reports"));
    let first = tomita(tmp.path(), &["report"]);
    let second = tomita(tmp.path(), &["report"]);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(files_under(&tmp.path().join("reports")), before);
    let text = String::from_utf8(first.stdout).unwrap();
    assert!(text.contains("Extraction success rate") && text.contains("Average edit distance"), "{text}");
}

#[test]
fn default_distance_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_tomita"))
        .arg("--out")
        .arg(tmp.path())
        .arg("distance")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&tmp.path().join("reports/distance.csv"));
    assert_eq!(rows.len(), 28);
    let get = |g: &str, n: &str| -> f64 {
        rows.iter().find(|r| r["grammar"] == g && r["N"] == n).unwrap()["d_avg"].parse().unwrap()
    };
    assert!((get("1", "8") - 2.51).abs() <= 0.005);
    assert!((get("7", "14") - 1.75).abs() <= 0.005);
    for n in ["8", "10", "12", "14"] {
        assert_eq!(get("5", n), 1.0);
    }
}

#[test]
fn config_presets_print_and_reload() {
    let tmp = tempfile::tempdir().unwrap();
    let list = Command::new(env!("CARGO_BIN_EXE_tomita")).args(["config", "--list"]).output().unwrap();
    let list = String::from_utf8(list.stdout).unwrap();
    for name in ["default", "fidelity", "fidelity-k", "quick"] {
        assert!(list.contains(name));
        let o = Command::new(env!("CARGO_BIN_EXE_tomita")).args(["--preset", name, "config"]).output().unwrap();
        assert_eq!(o.status.code(), Some(0));
        let path = tmp.path().join(format!("{name}.toml"));
        fs::write(&path, &o.stdout).unwrap();
        let again = Command::new(env!("CARGO_BIN_EXE_tomita")).arg("--config").arg(&path).arg("config").output().unwrap();
        assert_eq!(again.stdout, o.stdout, "{name}");
    }
    let bad = Command::new(env!("CARGO_BIN_EXE_tomita")).args(["--preset", "nope", "config"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
