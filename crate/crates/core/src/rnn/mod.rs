//! Recurrent cells over one-hot binary input, trained with backpropagation
//! through time.

mod cell;
mod checkpoint;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::automata::Label;
use crate::classifier::{symbol, Recognizer};
use crate::error::Error;
use crate::scalar::Scalar;

pub use cell::{Grads, State};
pub use train::{train, EpochLog, TrainConfig, TrainLog};

/// Symbols are one-hot vectors of this width.
pub const INPUT_SIZE: usize = 2;
/// Two class scores: negative, positive.
pub const CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Elman,
    SecondOrder,
    MiRnn,
    Gru,
    Lstm,
}

impl CellKind {
    pub const ALL: [CellKind; 5] = [
        CellKind::SecondOrder,
        CellKind::Elman,
        CellKind::MiRnn,
        CellKind::Gru,
        CellKind::Lstm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Elman => "elman",
            CellKind::SecondOrder => "second_order",
            CellKind::MiRnn => "mi_rnn",
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
        }
    }

    /// Names and shapes of the recurrent tensors, readout excluded.
    fn layout(self, h: usize) -> Vec<(&'static str, Vec<usize>)> {
        let gate = |w: &'static str, u: &'static str, b: &'static str| {
            vec![(w, vec![h, INPUT_SIZE]), (u, vec![h, h]), (b, vec![h])]
        };
        match self {
            CellKind::Elman => gate("w", "u", "b"),
            CellKind::SecondOrder => vec![("t", vec![h, h, INPUT_SIZE]), ("b", vec![h])],
            CellKind::MiRnn => vec![
                ("w", vec![h, INPUT_SIZE]),
                ("u", vec![h, h]),
                ("alpha", vec![h]),
                ("beta1", vec![h]),
                ("beta2", vec![h]),
                ("b", vec![h]),
            ],
            CellKind::Gru => [
                gate("w_z", "u_z", "b_z"),
                gate("w_r", "u_r", "b_r"),
                gate("w_n", "u_n", "b_n"),
            ]
            .concat(),
            CellKind::Lstm => [
                gate("w_i", "u_i", "b_i"),
                gate("w_f", "u_f", "b_f"),
                gate("w_o", "u_o", "b_o"),
                gate("w_g", "u_g", "b_g"),
            ]
            .concat(),
        }
    }

    /// Trainable weights and biases for a given hidden size, readout included.
    pub fn param_count(self, hidden: usize) -> usize {
        self.layout(hidden)
            .iter()
            .chain(&readout_layout(hidden))
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    /// Hidden size whose parameter count is closest to `budget` (ties go to
    /// the smaller network).
    pub fn hidden_size_for_budget(self, budget: usize) -> usize {
        (1..=512)
            .min_by_key(|&h| self.param_count(h).abs_diff(budget))
            .expect("non-empty range")
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CellKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "elman" => Ok(CellKind::Elman),
            "second_order" | "2nd" | "second" => Ok(CellKind::SecondOrder),
            "mi_rnn" | "mi" | "mirnn" => Ok(CellKind::MiRnn),
            "gru" => Ok(CellKind::Gru),
            "lstm" => Ok(CellKind::Lstm),
            _ => Err(Error::InvalidInput(format!("unknown cell kind {s:?}"))),
        }
    }
}

fn readout_layout(h: usize) -> [(&'static str, Vec<usize>); 2] {
    [("v", vec![CLASSES, h]), ("c", vec![CLASSES])]
}

/// A named, row-major parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Tensor<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

/// A recurrent classifier: cell parameters, an affine readout to two class
/// scores and a fixed initial hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnModel<F> {
    pub(crate) kind: CellKind,
    pub(crate) hidden: usize,
    pub(crate) seed: u64,
    /// Cell tensors in layout order, followed by readout `v` and `c`.
    pub(crate) params: Vec<Tensor<F>>,
    pub(crate) h0: Vec<F>,
    /// Initial memory cell; empty unless `kind` is `Lstm`.
    pub(crate) c0: Vec<F>,
}

/// Forward pass record for one string.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenTrace<F> {
    pub string: String,
    /// `h_0 ..= h_T`; one more entry than the string has symbols.
    pub states: Vec<Vec<F>>,
    /// Normalized class scores `[negative, positive]`.
    pub scores: [F; CLASSES],
    pub prediction: Label,
}

impl<F: Scalar> RnnModel<F> {
    /// Random model; weights are uniform in `[-2, 2] / sqrt(fan_in)`
    /// and `h0` is uniform in `[0, 1)`.
    pub fn init(kind: CellKind, hidden: usize, seed: u64) -> Result<Self, Error> {
        if hidden == 0 {
            return Err(Error::InvalidInput("hidden size must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let layout = kind.layout(hidden);
        for (name, shape) in layout.iter().chain(&readout_layout(hidden)) {
            let fan_in = match *name {
                "v" | "c" => hidden,
                // second-order units see every (hidden, input) product
                "t" => hidden * INPUT_SIZE,
                _ => hidden + INPUT_SIZE,
            };
            let scale = 1.0 / (fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            let data = (0..n)
                .map(|_| {
                    // multiplicative-integration gains start near one
                    if matches!(*name, "alpha" | "beta1" | "beta2") {
                        F::of(1.0 + rng.gen_range(-0.5..0.5) * scale)
                    } else {
                        F::of(rng.gen_range(-2.0..2.0) * scale)
                    }
                })
                .collect();
            params.push(Tensor {
                name: name.to_string(),
                shape: shape.clone(),
                data,
            });
        }
        let h0 = (0..hidden).map(|_| F::of(rng.gen_range(0.0..1.0))).collect();
        let c0 = if kind == CellKind::Lstm {
            (0..hidden).map(|_| F::of(rng.gen_range(0.0..1.0))).collect()
        } else {
            Vec::new()
        };
        Ok(RnnModel {
            kind,
            hidden,
            seed,
            params,
            h0,
            c0,
        })
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[Tensor<F>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<F>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<F>> {
        self.params.iter().find(|t| t.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<F>> {
        self.params.iter_mut().find(|t| t.name == name)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|t| t.data.len()).sum()
    }

    pub fn h0(&self) -> &[F] {
        &self.h0
    }

    /// Normalized class scores for a hidden vector.
    pub fn scores(&self, h: &[F]) -> [F; CLASSES] {
        let logits = self.logits(h);
        softmax(logits)
    }

    fn logits(&self, h: &[F]) -> [F; CLASSES] {
        let n = self.params.len();
        let (v, c) = (&self.params[n - 2].data, &self.params[n - 1].data);
        let mut out = [F::zero(); CLASSES];
        for (k, o) in out.iter_mut().enumerate() {
            *o = c[k] + (0..self.hidden).map(|i| v[k * self.hidden + i] * h[i]).sum::<F>();
        }
        out
    }

    pub fn forward(&self, x: &str) -> HiddenTrace<F> {
        let mut state = self.initial();
        let mut states = Vec::with_capacity(x.len() + 1);
        states.push(state.h.clone());
        for b in x.bytes() {
            state = self.step(&state, symbol(b));
            states.push(state.h.clone());
        }
        let scores = self.scores(&state.h);
        HiddenTrace {
            string: x.to_string(),
            states,
            prediction: argmax(&scores),
            scores,
        }
    }

    pub fn record_traces<S: AsRef<str>>(&self, strings: &[S]) -> Vec<HiddenTrace<F>> {
        strings.iter().map(|s| self.forward(s.as_ref())).collect()
    }

    /// Cross-entropy of the final-step scores against `target`.
    pub fn loss(&self, x: &str, target: Label) -> F {
        cell::loss(self, x, target, F::one())
    }

    /// The loss and its gradient for every parameter, by backpropagation
    /// through time. `Grads::tensors` lines up with `params()`.
    pub fn loss_and_gradient(&self, x: &str, target: Label) -> (F, Grads<F>) {
        let mut g = Grads::zeros_like(self);
        let l = cell::loss_and_grad(self, x, target, F::one(), &mut g);
        (l, g)
    }
}

/// Argmax over `[negative, positive]`; ties go to negative.
pub fn argmax<F: Scalar>(scores: &[F; CLASSES]) -> Label {
    Label::from(scores[1] > scores[0])
}

pub(crate) fn softmax<F: Scalar>(logits: [F; CLASSES]) -> [F; CLASSES] {
    let m = logits[0].max(logits[1]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    let z = e[0] + e[1];
    [e[0] / z, e[1] / z]
}

impl<F: Scalar> Recognizer for RnnModel<F> {
    type State = State<F>;

    fn initial(&self) -> State<F> {
        State {
            h: self.h0.clone(),
            c: self.c0.clone(),
        }
    }

    fn step(&self, state: &State<F>, symbol: usize) -> State<F> {
        cell::advance(self, state, symbol)
    }

    fn decide(&self, state: &State<F>) -> Label {
        argmax(&self.scores(&state.h))
    }
}

pub fn init_model<F: Scalar>(kind: CellKind, hidden: usize, seed: u64) -> Result<RnnModel<F>, Error> {
    RnnModel::init(kind, hidden, seed)
}

pub fn forward<F: Scalar>(m: &RnnModel<F>, x: &str) -> HiddenTrace<F> {
    m.forward(x)
}

pub fn classify<F: Scalar>(m: &RnnModel<F>, x: &str) -> Label {
    m.classify(x)
}

pub fn record_traces<F: Scalar, S: AsRef<str>>(m: &RnnModel<F>, strings: &[S]) -> Vec<HiddenTrace<F>> {
    m.record_traces(strings)
}
