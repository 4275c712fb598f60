use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cell::{loss_and_grad, Grads};
use super::RnnModel;
use crate::automata::{Label, LabeledDataset, Split};
use crate::classifier::Recognizer;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Momentum gradient descent settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop once test accuracy reaches this value.
    pub target_accuracy: f64,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    /// Weight each class inversely to its frequency in the training split.
    pub balance_classes: bool,
    /// Ascending length caps. Each stage trains on the training strings no
    /// longer than its cap until they are all fit or `stage_epochs` runs
    /// out; the full split follows. Caps that select nothing new are skipped.
    pub curriculum: Vec<usize>,
    pub stage_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            max_epochs: 300,
            batch_size: 16,
            seed: 0,
            target_accuracy: 1.0,
            clip_norm: 5.0,
            balance_classes: true,
            curriculum: vec![4, 6, 8, 10],
            stage_epochs: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.batch_size > 0
            && self.target_accuracy > 0.0
            && self.target_accuracy <= 1.0
            && self.clip_norm > 0.0
            && self.curriculum.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid training config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Length cap of the curriculum stage; `None` for the full split.
    pub max_length: Option<usize>,
    pub loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub param_count: usize,
    pub epochs: Vec<EpochLog>,
    /// Whether the target accuracy was reached.
    pub converged: bool,
}

impl TrainLog {
    pub fn final_test_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.test_accuracy)
    }
}

fn split_accuracy<F: Scalar>(m: &RnnModel<F>, data: &LabeledDataset, split: Split) -> f64 {
    let idx = data.indices(split);
    if idx.is_empty() {
        return f64::NAN;
    }
    let hits = idx
        .iter()
        .filter(|&&i| m.classify(&data.samples[i].string) == data.samples[i].label)
        .count();
    hits as f64 / idx.len() as f64
}

struct Run<'a, F> {
    data: &'a LabeledDataset,
    cfg: &'a TrainConfig,
    rng: ChaCha8Rng,
    grads: Grads<F>,
    velocity: Grads<F>,
    weights: [F; 2],
    epoch: usize,
}

impl<F: Scalar> Run<'_, F> {
    /// Trains on `subset` for at most `epochs` epochs. Returns whether the
    /// stop criterion was met.
    fn stage(
        &mut self,
        m: &mut RnnModel<F>,
        subset: &[usize],
        max_length: Option<usize>,
        epochs: usize,
        log: &mut TrainLog,
    ) -> Result<bool> {
        let (data, cfg) = (self.data, self.cfg);
        let lr = F::of(cfg.learning_rate);
        let mu = F::of(cfg.momentum);
        let clip = F::of(cfg.clip_norm);
        let mut order = subset.to_vec();
        self.velocity.fill_zero();
        for _ in 0..epochs {
            self.epoch += 1;
            let epoch = self.epoch;
            order.shuffle(&mut self.rng);
            let mut total = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                self.grads.fill_zero();
                for &i in batch {
                    let s = &data.samples[i];
                    let w = self.weights[s.label.index()];
                    total += loss_and_grad(m, &s.string, s.label, w, &mut self.grads).as_f64();
                }
                if !total.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, loss: total });
                }
                self.grads.scale(F::one() / F::of(batch.len() as f64));
                let norm = self.grads.norm();
                if !norm.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        loss: norm.as_f64(),
                    });
                }
                if norm > clip {
                    self.grads.scale(clip / norm);
                }
                for ((p, v), g) in m
                    .params
                    .iter_mut()
                    .zip(self.velocity.tensors.iter_mut())
                    .zip(&self.grads.tensors)
                {
                    for ((pk, vk), &gk) in p.data.iter_mut().zip(v.iter_mut()).zip(g) {
                        *vk = mu * *vk - lr * gk;
                        *pk += *vk;
                    }
                }
            }
            let entry = EpochLog {
                epoch,
                max_length,
                loss: total / order.len() as f64,
                train_accuracy: split_accuracy(m, data, Split::Train),
                test_accuracy: split_accuracy(m, data, Split::Test),
            };
            let reached = match max_length {
                Some(_) => accuracy_on(m, data, subset),
                None if data.test.is_empty() => entry.train_accuracy,
                None => entry.test_accuracy,
            } >= cfg.target_accuracy;
            log.epochs.push(entry);
            if reached {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

fn accuracy_on<F: Scalar>(m: &RnnModel<F>, data: &LabeledDataset, idx: &[usize]) -> f64 {
    let hits = idx
        .iter()
        .filter(|&&i| m.classify(&data.samples[i].string) == data.samples[i].label)
        .count();
    hits as f64 / idx.len() as f64
}

impl<F: Scalar> RnnModel<F> {
    /// Minimizes final-step cross-entropy on the training split, running the
    /// length curriculum first.
    pub fn fit(&mut self, data: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainLog> {
        cfg.validate()?;
        let train_idx = data.indices(Split::Train);
        if train_idx.is_empty() {
            return Err(Error::InvalidInput("training split is empty".into()));
        }
        let counts = data.split_counts(Split::Train);
        let weight_of = |label: Label| -> F {
            if !cfg.balance_classes {
                return F::one();
            }
            let present = usize::from(counts.positive > 0) + usize::from(counts.negative > 0);
            let n_c = match label {
                Label::Positive => counts.positive,
                Label::Negative => counts.negative,
            };
            if n_c == 0 {
                return F::one();
            }
            F::of(counts.total() as f64 / (present * n_c) as f64)
        };
        let mut run = Run {
            data,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            grads: Grads::zeros_like(self),
            velocity: Grads::zeros_like(self),
            weights: [weight_of(Label::Negative), weight_of(Label::Positive)],
            epoch: 0,
        };
        let mut log = TrainLog {
            param_count: self.param_count(),
            epochs: Vec::new(),
            converged: false,
        };
        if cfg.max_epochs == 0 {
            return Ok(log);
        }
        let mut previous = 0;
        for &cap in &cfg.curriculum {
            let subset: Vec<usize> = train_idx
                .iter()
                .copied()
                .filter(|&i| data.samples[i].string.len() <= cap)
                .collect();
            if subset.len() == previous || subset.len() == train_idx.len() {
                continue;
            }
            previous = subset.len();
            run.stage(self, &subset, Some(cap), cfg.stage_epochs, &mut log)?;
        }
        log.converged = run.stage(self, train_idx, None, cfg.max_epochs, &mut log)?;
        Ok(log)
    }
}

/// Trains a copy of `m` and returns it with its log.
pub fn train<F: Scalar>(
    m: &RnnModel<F>,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(RnnModel<F>, TrainLog)> {
    let mut trained = m.clone();
    let log = trained.fit(data, cfg)?;
    Ok((trained, log))
}
