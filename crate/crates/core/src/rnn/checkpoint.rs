//! Self-describing JSON checkpoints. Floats use shortest round-trip
//! formatting, so loading reproduces every parameter bit for bit.

use serde::{Deserialize, Serialize};

use super::{readout_layout, CellKind, RnnModel, Tensor, INPUT_SIZE};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const FORMAT: &str = "tomita-rnn-checkpoint";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
struct Checkpoint<F> {
    format: String,
    version: u32,
    scalar: String,
    kind: CellKind,
    hidden_size: usize,
    input_size: usize,
    seed: u64,
    h0: Vec<F>,
    c0: Vec<F>,
    params: Vec<Tensor<F>>,
}

impl<F: Scalar> RnnModel<F> {
    pub fn to_json(&self) -> String {
        let ck = Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            scalar: F::NAME.into(),
            kind: self.kind,
            hidden_size: self.hidden,
            input_size: INPUT_SIZE,
            seed: self.seed,
            h0: self.h0.clone(),
            c0: self.c0.clone(),
            params: self.params.clone(),
        };
        serde_json::to_string_pretty(&ck).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint<F> = serde_json::from_str(s)?;
        let bad = |msg: String| Err(Error::InvalidInput(format!("checkpoint: {msg}")));
        if ck.format != FORMAT || ck.version != VERSION {
            return bad(format!("unsupported format {} v{}", ck.format, ck.version));
        }
        if ck.scalar != F::NAME {
            return bad(format!("stored as {}, loading as {}", ck.scalar, F::NAME));
        }
        if ck.input_size != INPUT_SIZE || ck.hidden_size == 0 {
            return bad(format!("sizes {}x{}", ck.input_size, ck.hidden_size));
        }
        let h = ck.hidden_size;
        let expected: Vec<_> = ck.kind.layout(h).into_iter().chain(readout_layout(h)).collect();
        if expected.len() != ck.params.len() {
            return bad(format!("{} tensors, expected {}", ck.params.len(), expected.len()));
        }
        for ((name, shape), t) in expected.iter().zip(&ck.params) {
            if t.name != *name || t.shape != *shape || t.data.len() != shape.iter().product::<usize>() {
                return bad(format!("tensor {} {:?} does not match {name} {shape:?}", t.name, t.shape));
            }
        }
        let c_len = if ck.kind == CellKind::Lstm { h } else { 0 };
        if ck.h0.len() != h || ck.c0.len() != c_len {
            return bad("initial state has the wrong size".into());
        }
        Ok(RnnModel {
            kind: ck.kind,
            hidden: h,
            seed: ck.seed,
            params: ck.params,
            h0: ck.h0,
            c0: ck.c0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        for kind in CellKind::ALL {
            let m = RnnModel::<f64>::init(kind, 5, 77).unwrap();
            let back = RnnModel::<f64>::from_json(&m.to_json()).unwrap();
            for (a, b) in m.params.iter().zip(&back.params) {
                let ab: Vec<u64> = a.data.iter().map(|v| v.to_bits()).collect();
                let bb: Vec<u64> = b.data.iter().map(|v| v.to_bits()).collect();
                assert_eq!(ab, bb);
            }
            assert_eq!(m, back);
        }
        let m = RnnModel::<f32>::init(CellKind::Gru, 3, 1).unwrap();
        assert_eq!(RnnModel::<f32>::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn rejects_mismatches() {
        let m = RnnModel::<f64>::init(CellKind::Elman, 3, 1).unwrap();
        let json = m.to_json();
        assert!(RnnModel::<f32>::from_json(&json).is_err());
        let tampered = json.replace("\"elman\"", "\"gru\"");
        assert!(RnnModel::<f64>::from_json(&tampered).is_err());
        assert!(RnnModel::<f64>::from_json("{}").is_err());
    }
}
