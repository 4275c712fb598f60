//! File plumbing: atomic writes, dataset CSVs, stage manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tomita_core::automata::{Sample, Split};
use tomita_core::{GrammarId, Label, LabeledDataset};

/// Writes `bytes` to a sibling temp file and renames it over `path`, so
/// readers see either the old file or the whole new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().ok_or_else(|| anyhow!("no file name in {}", path.display()))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let res = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res.with_context(|| format!("writing {}", path.display()))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_to_string(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_atomic(path, &csv_bytes(rows)?)
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner().map_err(|e| anyhow!("{e}"))?)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetRow {
    string: String,
    label: String,
    split: String,
}

pub fn dataset_csv(d: &LabeledDataset) -> Result<Vec<u8>> {
    let splits = d.split_column();
    let rows: Vec<DatasetRow> = d
        .samples
        .iter()
        .zip(splits)
        .map(|(s, sp)| DatasetRow {
            string: s.string.clone(),
            label: s.label.as_str().into(),
            split: sp.map_or("", Split::as_str).into(),
        })
        .collect();
    csv_bytes(&rows)
}

pub fn read_dataset(path: &Path, grammar: Option<GrammarId>) -> Result<LabeledDataset> {
    let rows: Vec<DatasetRow> = read_csv(path)?;
    let (mut train, mut test, mut samples) = (Vec::new(), Vec::new(), Vec::new());
    for (i, r) in rows.into_iter().enumerate() {
        let label = Label::parse(&r.label)
            .ok_or_else(|| anyhow!("{}: row {}: bad label {:?}", path.display(), i + 1, r.label))?;
        match r.split.trim() {
            "train" => train.push(i),
            "test" => test.push(i),
            "" => {}
            other => bail!("{}: row {}: bad split {other:?}", path.display(), i + 1),
        }
        samples.push(Sample { string: r.string, label });
    }
    LabeledDataset::with_split(grammar, samples, train, test).with_context(|| format!("loading {}", path.display()))
}

/// Written last by each stage; records the configuration it ran under so
/// later stages can tell missing output from stale output.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest<T> {
    pub stage: String,
    pub fingerprint: serde_json::Value,
    #[serde(flatten)]
    pub body: T,
}

pub fn manifest_path(out: &Path, dir: &str) -> PathBuf {
    out.join(dir).join("manifest.json")
}

/// Loads the manifest `stage` left in `dir`, failing with a message that
/// names the stage when it is absent or was produced under a different
/// configuration.
pub fn require_stage<T: DeserializeOwned>(
    out: &Path,
    stage: &str,
    dir: &str,
    fingerprint: &serde_json::Value,
) -> Result<Manifest<T>> {
    let path = manifest_path(out, dir);
    if !path.exists() {
        bail!(
            "missing prerequisite: stage `{stage}` has not been run in {} (no {}); run `tomita {stage}` first",
            out.display(),
            path.display()
        );
    }
    let m: Manifest<T> = read_json(&path)?;
    if &m.fingerprint != fingerprint {
        bail!(
            "stale prerequisite: stage `{stage}` output in {} was produced under a different configuration; rerun `tomita {stage}`",
            out.display()
        );
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tomita_core::evaluation::DataConfig;

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.txt");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "second");
        let names: Vec<_> = fs::read_dir(dir.path().join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn dataset_csv_round_trip() {
        let g = GrammarId::new(2).unwrap();
        let d = DataConfig { max_length: 6, per_class: 20, ..DataConfig::default() }.build(g).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        write_atomic(&p, &dataset_csv(&d).unwrap()).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("string,label,split\n"));
        assert_eq!(read_dataset(&p, Some(g)).unwrap(), d);
    }

    #[test]
    fn require_stage_names_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let fp = serde_json::json!({"seed": 1});
        let e = require_stage::<serde_json::Value>(dir.path(), "gen", "data", &fp).unwrap_err().to_string();
        assert!(e.contains("missing prerequisite") && e.contains("`gen`"), "{e}");
        let m = Manifest { stage: "gen".into(), fingerprint: serde_json::json!({"seed": 2}), body: serde_json::json!({}) };
        write_json(&manifest_path(dir.path(), "data"), &m).unwrap();
        let e = require_stage::<serde_json::Value>(dir.path(), "gen", "data", &fp).unwrap_err().to_string();
        assert!(e.contains("stale prerequisite") && e.contains("`gen`"), "{e}");
    }
}
