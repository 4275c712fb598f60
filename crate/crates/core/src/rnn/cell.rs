//! Per-step recurrences and their hand-derived backward passes.
//!
//! Gates of the form `W x + U h + b` share one tensor triple. With a one-hot
//! input, `W x` is column `sym` of `W`.

use super::{softmax, CellKind, RnnModel, CLASSES, INPUT_SIZE};
use crate::automata::Label;
use crate::classifier::symbol;
use crate::scalar::Scalar;

/// Recurrent state; `c` is the LSTM memory cell and empty for other kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct State<F> {
    pub h: Vec<F>,
    pub c: Vec<F>,
}

/// Gradient buffers mirroring `RnnModel::params`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<F> {
    pub tensors: Vec<Vec<F>>,
}

impl<F: Scalar> Grads<F> {
    pub fn zeros_like(m: &RnnModel<F>) -> Self {
        Grads {
            tensors: m.params.iter().map(|t| vec![F::zero(); t.data.len()]).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.fill(F::zero());
        }
    }

    pub fn scale(&mut self, k: F) {
        for v in self.tensors.iter_mut().flatten() {
            *v *= k;
        }
    }

    pub fn norm(&self) -> F {
        self.tensors
            .iter()
            .flatten()
            .map(|&v| v * v)
            .sum::<F>()
            .sqrt()
    }
}

/// Activations one step needs for its backward pass.
pub(crate) struct StepCache<F> {
    acts: Vec<Vec<F>>,
}

fn affine<F: Scalar>(m: &RnnModel<F>, first: usize, h: &[F], sym: usize) -> Vec<F> {
    let n = m.hidden;
    let (w, u, b) = (&m.params[first].data, &m.params[first + 1].data, &m.params[first + 2].data);
    (0..n)
        .map(|j| {
            let row = &u[j * n..(j + 1) * n];
            w[j * INPUT_SIZE + sym] + b[j] + row.iter().zip(h).map(|(&a, &x)| a * x).sum::<F>()
        })
        .collect()
}

fn affine_backward<F: Scalar>(
    m: &RnnModel<F>,
    first: usize,
    h: &[F],
    sym: usize,
    da: &[F],
    grads: &mut Grads<F>,
    dh: &mut [F],
) {
    let n = m.hidden;
    let u = &m.params[first + 1].data;
    for j in 0..n {
        grads.tensors[first][j * INPUT_SIZE + sym] += da[j];
        grads.tensors[first + 2][j] += da[j];
        for i in 0..n {
            grads.tensors[first + 1][j * n + i] += da[j] * h[i];
            dh[i] += u[j * n + i] * da[j];
        }
    }
}

fn map<F: Scalar>(v: &[F], f: impl Fn(F) -> F) -> Vec<F> {
    v.iter().map(|&x| f(x)).collect()
}

fn tanh_grad<F: Scalar>(y: F) -> F {
    F::one() - y * y
}

fn sigmoid_grad<F: Scalar>(y: F) -> F {
    y * (F::one() - y)
}

pub(crate) fn step<F: Scalar>(m: &RnnModel<F>, prev: &State<F>, sym: usize) -> (State<F>, StepCache<F>) {
    let n = m.hidden;
    let h = &prev.h;
    match m.kind {
        CellKind::Elman => {
            let out = map(&affine(m, 0, h, sym), F::tanh);
            (State { h: out.clone(), c: Vec::new() }, StepCache { acts: vec![out] })
        }
        CellKind::SecondOrder => {
            let (t, b) = (&m.params[0].data, &m.params[1].data);
            let out: Vec<F> = (0..n)
                .map(|j| {
                    let s = (0..n)
                        .map(|i| t[(j * n + i) * INPUT_SIZE + sym] * h[i])
                        .sum::<F>();
                    (s + b[j]).sigmoid()
                })
                .collect();
            (State { h: out.clone(), c: Vec::new() }, StepCache { acts: vec![out] })
        }
        CellKind::MiRnn => {
            let p = &m.params;
            let (w, u) = (&p[0].data, &p[1].data);
            let (alpha, beta1, beta2, b) = (&p[2].data, &p[3].data, &p[4].data, &p[5].data);
            let wx: Vec<F> = (0..n).map(|j| w[j * INPUT_SIZE + sym]).collect();
            let uh: Vec<F> = (0..n)
                .map(|j| (0..n).map(|i| u[j * n + i] * h[i]).sum())
                .collect();
            let out: Vec<F> = (0..n)
                .map(|j| {
                    (alpha[j] * wx[j] * uh[j] + beta1[j] * uh[j] + beta2[j] * wx[j] + b[j]).tanh()
                })
                .collect();
            (
                State { h: out.clone(), c: Vec::new() },
                StepCache { acts: vec![wx, uh, out] },
            )
        }
        CellKind::Gru => {
            let z = map(&affine(m, 0, h, sym), F::sigmoid);
            let r = map(&affine(m, 3, h, sym), F::sigmoid);
            let rh: Vec<F> = r.iter().zip(h).map(|(&a, &b)| a * b).collect();
            let cand = map(&affine(m, 6, &rh, sym), F::tanh);
            let out: Vec<F> = (0..n)
                .map(|j| (F::one() - z[j]) * cand[j] + z[j] * h[j])
                .collect();
            (
                State { h: out, c: Vec::new() },
                StepCache { acts: vec![z, r, rh, cand] },
            )
        }
        CellKind::Lstm => {
            let i = map(&affine(m, 0, h, sym), F::sigmoid);
            let f = map(&affine(m, 3, h, sym), F::sigmoid);
            let o = map(&affine(m, 6, h, sym), F::sigmoid);
            let g = map(&affine(m, 9, h, sym), F::tanh);
            let c: Vec<F> = (0..n).map(|j| f[j] * prev.c[j] + i[j] * g[j]).collect();
            let tc = map(&c, F::tanh);
            let out: Vec<F> = (0..n).map(|j| o[j] * tc[j]).collect();
            (
                State { h: out, c: c.clone() },
                StepCache { acts: vec![i, f, o, g, tc] },
            )
        }
    }
}

/// Forward step without the backward cache.
pub(crate) fn advance<F: Scalar>(m: &RnnModel<F>, prev: &State<F>, sym: usize) -> State<F> {
    let n = m.hidden;
    let h = &prev.h;
    let out = match m.kind {
        CellKind::Elman => map(&affine(m, 0, h, sym), F::tanh),
        CellKind::SecondOrder => {
            let (t, b) = (&m.params[0].data, &m.params[1].data);
            (0..n)
                .map(|j| {
                    let s = (0..n)
                        .map(|i| t[(j * n + i) * INPUT_SIZE + sym] * h[i])
                        .sum::<F>();
                    (s + b[j]).sigmoid()
                })
                .collect()
        }
        _ => return step(m, prev, sym).0,
    };
    State { h: out, c: Vec::new() }
}

/// Backpropagates `dh`/`dc` (gradients at the step output) into the
/// parameters, returning gradients at the step input.
fn step_backward<F: Scalar>(
    m: &RnnModel<F>,
    prev: &State<F>,
    sym: usize,
    cache: &StepCache<F>,
    dh_out: &[F],
    dc_out: &[F],
    grads: &mut Grads<F>,
) -> (Vec<F>, Vec<F>) {
    let n = m.hidden;
    let h = &prev.h;
    let mut dh = vec![F::zero(); n];
    match m.kind {
        CellKind::Elman => {
            let out = &cache.acts[0];
            let da: Vec<F> = (0..n).map(|j| dh_out[j] * tanh_grad(out[j])).collect();
            affine_backward(m, 0, h, sym, &da, grads, &mut dh);
            (dh, Vec::new())
        }
        CellKind::SecondOrder => {
            let out = &cache.acts[0];
            let t = &m.params[0].data;
            for j in 0..n {
                let da = dh_out[j] * sigmoid_grad(out[j]);
                grads.tensors[1][j] += da;
                for i in 0..n {
                    let idx = (j * n + i) * INPUT_SIZE + sym;
                    grads.tensors[0][idx] += da * h[i];
                    dh[i] += t[idx] * da;
                }
            }
            (dh, Vec::new())
        }
        CellKind::MiRnn => {
            let (wx, uh, out) = (&cache.acts[0], &cache.acts[1], &cache.acts[2]);
            let p = &m.params;
            let (u, alpha, beta1, beta2) = (&p[1].data, &p[2].data, &p[3].data, &p[4].data);
            for j in 0..n {
                let da = dh_out[j] * tanh_grad(out[j]);
                grads.tensors[2][j] += da * wx[j] * uh[j];
                grads.tensors[3][j] += da * uh[j];
                grads.tensors[4][j] += da * wx[j];
                grads.tensors[5][j] += da;
                grads.tensors[0][j * INPUT_SIZE + sym] += da * (alpha[j] * uh[j] + beta2[j]);
                let duh = da * (alpha[j] * wx[j] + beta1[j]);
                for i in 0..n {
                    grads.tensors[1][j * n + i] += duh * h[i];
                    dh[i] += u[j * n + i] * duh;
                }
            }
            (dh, Vec::new())
        }
        CellKind::Gru => {
            let (z, r, rh, cand) = (&cache.acts[0], &cache.acts[1], &cache.acts[2], &cache.acts[3]);
            let mut da_z = vec![F::zero(); n];
            let mut da_n = vec![F::zero(); n];
            for j in 0..n {
                dh[j] = dh_out[j] * z[j];
                da_z[j] = dh_out[j] * (h[j] - cand[j]) * sigmoid_grad(z[j]);
                da_n[j] = dh_out[j] * (F::one() - z[j]) * tanh_grad(cand[j]);
            }
            let mut drh = vec![F::zero(); n];
            affine_backward(m, 6, rh, sym, &da_n, grads, &mut drh);
            let da_r: Vec<F> = (0..n).map(|j| drh[j] * h[j] * sigmoid_grad(r[j])).collect();
            for j in 0..n {
                dh[j] += drh[j] * r[j];
            }
            affine_backward(m, 0, h, sym, &da_z, grads, &mut dh);
            affine_backward(m, 3, h, sym, &da_r, grads, &mut dh);
            (dh, Vec::new())
        }
        CellKind::Lstm => {
            let (i, f, o, g, tc) = (
                &cache.acts[0],
                &cache.acts[1],
                &cache.acts[2],
                &cache.acts[3],
                &cache.acts[4],
            );
            let mut dc_prev = vec![F::zero(); n];
            let mut da = [
                vec![F::zero(); n],
                vec![F::zero(); n],
                vec![F::zero(); n],
                vec![F::zero(); n],
            ];
            for j in 0..n {
                let dc = dc_out[j] + dh_out[j] * o[j] * tanh_grad(tc[j]);
                da[0][j] = dc * g[j] * sigmoid_grad(i[j]);
                da[1][j] = dc * prev.c[j] * sigmoid_grad(f[j]);
                da[2][j] = dh_out[j] * tc[j] * sigmoid_grad(o[j]);
                da[3][j] = dc * i[j] * tanh_grad(g[j]);
                dc_prev[j] = dc * f[j];
            }
            for (gate, d) in da.iter().enumerate() {
                affine_backward(m, 3 * gate, h, sym, d, grads, &mut dh);
            }
            (dh, dc_prev)
        }
    }
}

/// Weighted cross-entropy of the final-step scores against `target`;
/// accumulates its gradient into `grads` and returns the loss.
pub(crate) fn loss_and_grad<F: Scalar>(
    m: &RnnModel<F>,
    x: &str,
    target: Label,
    weight: F,
    grads: &mut Grads<F>,
) -> F {
    let n = m.hidden;
    let mut states = Vec::with_capacity(x.len() + 1);
    let mut caches = Vec::with_capacity(x.len());
    let syms: Vec<usize> = x.bytes().map(symbol).collect();
    states.push(State {
        h: m.h0.clone(),
        c: m.c0.clone(),
    });
    for &s in &syms {
        let (next, cache) = step(m, states.last().expect("non-empty"), s);
        states.push(next);
        caches.push(cache);
    }
    let last = &states.last().expect("non-empty").h;
    let p = softmax(m.logits(last));
    let y = target.index();
    let loss = -weight * p[y].max(F::min_positive_value()).ln();

    let np = m.params.len();
    let v = &m.params[np - 2].data;
    let mut dh = vec![F::zero(); n];
    for k in 0..CLASSES {
        let indicator = if k == y { F::one() } else { F::zero() };
        let dlogit = weight * (p[k] - indicator);
        grads.tensors[np - 1][k] += dlogit;
        for j in 0..n {
            grads.tensors[np - 2][k * n + j] += dlogit * last[j];
            dh[j] += v[k * n + j] * dlogit;
        }
    }
    let mut dc = if m.kind == CellKind::Lstm {
        vec![F::zero(); n]
    } else {
        Vec::new()
    };
    for t in (0..syms.len()).rev() {
        let (dh_prev, dc_prev) = step_backward(m, &states[t], syms[t], &caches[t], &dh, &dc, grads);
        dh = dh_prev;
        dc = dc_prev;
    }
    loss
}

/// Loss without gradients.
pub(crate) fn loss<F: Scalar>(m: &RnnModel<F>, x: &str, target: Label, weight: F) -> F {
    let trace = m.forward(x);
    -weight * trace.scores[target.index()].max(F::min_positive_value()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advance_matches_step() {
        for kind in CellKind::ALL {
            let m = RnnModel::<f64>::init(kind, 5, 8).unwrap();
            let mut a = State { h: m.h0.clone(), c: m.c0.clone() };
            let mut b = a.clone();
            for sym in [0, 1, 1, 0, 1] {
                a = advance(&m, &a, sym);
                b = step(&m, &b, sym).0;
                assert_eq!(a, b, "{kind}");
            }
        }
    }

    fn check_gradients(kind: CellKind, x: &str, target: Label, seed: u64) -> f64 {
        let mut m = RnnModel::<f64>::init(kind, 4, seed).unwrap();
        // break the symmetry of zero biases so every path carries signal
        for t in m.params.iter_mut() {
            for (k, v) in t.data.iter_mut().enumerate() {
                *v += 0.05 * ((k % 5) as f64 - 2.0);
            }
        }
        let mut grads = Grads::zeros_like(&m);
        loss_and_grad(&m, x, target, 1.0, &mut grads);
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for ti in 0..m.params.len() {
            for k in 0..m.params[ti].data.len() {
                let orig = m.params[ti].data[k];
                m.params[ti].data[k] = orig + eps;
                let up = loss(&m, x, target, 1.0);
                m.params[ti].data[k] = orig - eps;
                let down = loss(&m, x, target, 1.0);
                m.params[ti].data[k] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let analytic = grads.tensors[ti][k];
                let denom = numeric.abs().max(analytic.abs()).max(1e-6);
                let rel = (numeric - analytic).abs() / denom;
                assert!(
                    rel < 1e-4,
                    "{kind} {}[{k}]: analytic {analytic} numeric {numeric}",
                    m.params[ti].name
                );
                worst = worst.max(rel);
            }
        }
        worst
    }

    #[test]
    fn finite_difference_gradients() {
        for kind in CellKind::ALL {
            for (x, y, seed) in [("101", Label::Positive, 1), ("001", Label::Negative, 2), ("110", Label::Positive, 3)] {
                check_gradients(kind, x, y, seed);
            }
        }
    }

    #[test]
    fn weight_scales_loss_and_gradient() {
        let m = RnnModel::<f64>::init(CellKind::Gru, 3, 5).unwrap();
        let mut g1 = Grads::zeros_like(&m);
        let mut g2 = Grads::zeros_like(&m);
        let l1 = loss_and_grad(&m, "0110", Label::Negative, 1.0, &mut g1);
        let l2 = loss_and_grad(&m, "0110", Label::Negative, 2.5, &mut g2);
        assert!((l2 - 2.5 * l1).abs() < 1e-12);
        g1.scale(2.5);
        for (a, b) in g1.tensors.iter().flatten().zip(g2.tensors.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
