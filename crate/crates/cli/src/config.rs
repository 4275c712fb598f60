//! Experiment configuration and its named presets.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use tomita_core::evaluation::DataConfig;
use tomita_core::metrics::DistanceMode;
use tomita_core::rnn::{CellKind, TrainConfig};
use tomita_core::verification::Protocol;
use tomita_core::GrammarId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Every stage's seeds are derived from this one.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub grammars: Vec<GrammarId>,
    pub cells: Vec<CellKind>,
    /// Hidden sizes are picked per cell to match this parameter count.
    pub param_budget: usize,
    pub data: DataConfig,
    pub train: TrainConfig,
    /// Per-cell learning rates; cells not listed use `train.learning_rate`.
    pub learning_rates: BTreeMap<CellKind, f64>,
    pub extraction: ExtractionSection,
    pub noise: Option<NoiseSection>,
    pub verification: VerificationSection,
    pub distance: DistanceSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionSection {
    pub k_values: Vec<usize>,
    /// Models per (grammar, cell); each gets its own initialization seed.
    pub hidden_seeds: usize,
    pub kmeans_max_iters: usize,
    pub restarts: usize,
}

impl Default for ExtractionSection {
    fn default() -> Self {
        ExtractionSection {
            k_values: (3..=15).collect(),
            hidden_seeds: 10,
            kmeans_max_iters: 100,
            restarts: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub n_pos: usize,
    pub n_neg: usize,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { n_pos: 2, n_neg: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerificationSection {
    pub grammars: Vec<GrammarId>,
    pub length: usize,
    pub samples: usize,
    pub trials: usize,
    pub radius: usize,
    pub max_attempts: u64,
    /// Which of the hidden seeds' models to verify (0-based).
    pub model_index: usize,
    /// When non-empty, also report gamma at each of these lengths.
    pub sweep_lengths: Vec<usize>,
}

impl Default for VerificationSection {
    fn default() -> Self {
        let p = Protocol::default();
        VerificationSection {
            grammars: tomita_core::verification::default_grammars(),
            length: p.length,
            samples: p.samples,
            trials: p.trials,
            radius: p.radius,
            max_attempts: p.max_attempts,
            model_index: 0,
            sweep_lengths: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceSection {
    pub lengths: Vec<usize>,
    pub metric: DistanceMode,
}

impl Default for DistanceSection {
    fn default() -> Self {
        DistanceSection {
            lengths: vec![8, 10, 12, 14],
            metric: DistanceMode::default(),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            grammars: GrammarId::all().collect(),
            cells: CellKind::ALL.to_vec(),
            param_budget: CellKind::SecondOrder.param_count(8),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            learning_rates: [CellKind::Elman, CellKind::MiRnn, CellKind::Gru, CellKind::Lstm]
                .into_iter()
                .map(|c| (c, 0.03))
                .collect(),
            extraction: ExtractionSection::default(),
            noise: None,
            verification: VerificationSection::default(),
            distance: DistanceSection::default(),
        }
    }
}

pub const PRESETS: &[(&str, &str)] = &[
    ("default", "extraction sweep over K = 3..15 with 10 models per grammar and cell"),
    ("fidelity", "label noise of 2 + 2 strings, K = 20"),
    ("fidelity-k", "label noise of 2 + 2 strings, K = 6..30"),
    ("robustness", "second-order, Elman, MI-RNN, GRU and LSTM on grammars 3, 4 and 7"),
    ("length-sweep", "Elman on grammar 3, gamma at lengths 100..200"),
    ("quick", "small smoke-test run"),
];

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let base = ExperimentConfig::default();
        Ok(match name {
            "default" => base,
            "fidelity" => ExperimentConfig {
                out_dir: "runs/fidelity".into(),
                extraction: ExtractionSection {
                    k_values: vec![20],
                    ..ExtractionSection::default()
                },
                noise: Some(NoiseSection::default()),
                ..base
            },
            "fidelity-k" => ExperimentConfig {
                out_dir: "runs/fidelity-k".into(),
                extraction: ExtractionSection {
                    k_values: (6..=30).collect(),
                    ..ExtractionSection::default()
                },
                noise: Some(NoiseSection::default()),
                ..base
            },
            "robustness" => ExperimentConfig {
                out_dir: "runs/robustness".into(),
                grammars: tomita_core::verification::default_grammars(),
                ..base
            },
            "length-sweep" => ExperimentConfig {
                out_dir: "runs/length-sweep".into(),
                grammars: vec![GrammarId::new(3)?],
                cells: vec![CellKind::Elman],
                verification: VerificationSection {
                    grammars: vec![GrammarId::new(3)?],
                    sweep_lengths: (100..=200).step_by(20).collect(),
                    ..VerificationSection::default()
                },
                ..base
            },
            "quick" => ExperimentConfig {
                out_dir: "runs/quick".into(),
                grammars: vec![GrammarId::new(1)?, GrammarId::new(4)?],
                cells: vec![CellKind::SecondOrder, CellKind::Elman],
                data: DataConfig {
                    max_length: 8,
                    per_class: 60,
                    ..DataConfig::default()
                },
                train: TrainConfig {
                    max_epochs: 60,
                    stage_epochs: 30,
                    ..TrainConfig::default()
                },
                extraction: ExtractionSection {
                    k_values: vec![3, 6],
                    hidden_seeds: 2,
                    restarts: 2,
                    ..ExtractionSection::default()
                },
                verification: VerificationSection {
                    grammars: vec![GrammarId::new(4)?],
                    length: 20,
                    samples: 10,
                    trials: 2,
                    max_attempts: 10_000,
                    ..VerificationSection::default()
                },
                distance: DistanceSection {
                    lengths: vec![6, 8],
                    ..DistanceSection::default()
                },
                ..base
            },
            other => {
                let names: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
                bail!("unknown preset {other:?}; available: {}", names.join(", "))
            }
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.seed != 0 || self.train.seed != 0 {
            bail!("set only the top-level `seed`; data and training seeds are derived from it");
        }
        if self.grammars.is_empty() || self.cells.is_empty() {
            bail!("at least one grammar and one cell are required");
        }
        if self.extraction.k_values.iter().any(|&k| k < 2) {
            bail!("every K must be at least 2");
        }
        if self.extraction.hidden_seeds == 0 {
            bail!("hidden_seeds must be at least 1");
        }
        if self.verification.model_index >= self.extraction.hidden_seeds {
            bail!(
                "verification.model_index {} but only {} models per cell",
                self.verification.model_index,
                self.extraction.hidden_seeds
            );
        }
        for &cell in &self.cells {
            self.train_config(cell).validate()?;
        }
        self.protocol(self.verification.length).validate()?;
        Ok(())
    }

    pub fn data_config(&self) -> DataConfig {
        DataConfig {
            seed: self.seed,
            ..self.data.clone()
        }
    }

    /// Initialization and batch-order seed of the `index`-th model.
    pub fn model_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(index as u64)
    }

    pub fn model_seeds(&self) -> Vec<u64> {
        (0..self.extraction.hidden_seeds).map(|i| self.model_seed(i)).collect()
    }

    pub fn hidden_size(&self, cell: CellKind) -> usize {
        cell.hidden_size_for_budget(self.param_budget)
    }

    pub fn train_config(&self, cell: CellKind) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rates.get(&cell).copied().unwrap_or(self.train.learning_rate),
            ..self.train.clone()
        }
    }

    pub fn protocol(&self, length: usize) -> Protocol {
        let v = &self.verification;
        Protocol {
            length,
            samples: v.samples,
            trials: v.trials,
            radius: v.radius,
            seed: self.seed,
            max_attempts: v.max_attempts,
        }
    }
}
