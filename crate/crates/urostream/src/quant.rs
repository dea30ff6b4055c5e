//! Post-training weight-only int8 quantization.
//!
//! Symmetric per-tensor scheme: `scale = max|w| / 127`, codes rounded to
//! nearest even, biases kept at full precision. Inference dequantizes to
//! floats (`code × scale`), simulating int8 weight storage; every entry's
//! round-trip error is bounded by `scale / 2`.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::model::ModelWeights;

/// One quantized tensor: int8 codes plus a single scale.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantTensor {
    pub codes: Vec<i8>,
    pub shape: Vec<usize>,
    pub scale: f64,
}

impl QuantTensor {
    fn from_slice(data: &[f64], shape: Vec<usize>) -> QuantTensor {
        let max_abs = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // Degenerate all-zero tensors keep a valid unit scale.
        let scale = if max_abs > 0.0 { max_abs / 127.0 } else { 1.0 };
        let codes = data
            .iter()
            .map(|&w| (w / scale).round_ties_even().clamp(-127.0, 127.0) as i8)
            .collect();
        QuantTensor {
            codes,
            shape,
            scale,
        }
    }

    pub fn dequantize(&self) -> Vec<f64> {
        self.codes.iter().map(|&c| c as f64 * self.scale).collect()
    }

    fn to_array2(&self) -> Result<Array2<f64>> {
        if self.shape.len() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "expected a matrix, got shape {:?}",
                self.shape
            )));
        }
        Array2::from_shape_vec((self.shape[0], self.shape[1]), self.dequantize())
            .map_err(|e| Error::ShapeMismatch(e.to_string()))
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// Quantized model: int8 weight matrices, full-precision biases.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedWeights {
    pub w_proj: QuantTensor,
    pub w_q: QuantTensor,
    pub w_k: QuantTensor,
    pub w_v: QuantTensor,
    pub w1: QuantTensor,
    pub w2: QuantTensor,
    pub w_o: QuantTensor,
    pub pos: Option<QuantTensor>,
    pub b1: Array1<f64>,
    pub b2: Array1<f64>,
    pub b_o: Array1<f64>,
}

/// Quantizes every weight matrix; biases pass through untouched.
pub fn quantize(weights: &ModelWeights) -> Result<QuantizedWeights> {
    for (name, _, data) in weights.tensors() {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor {name} contains NaN/Inf")));
        }
    }
    let q = |m: &Array2<f64>| QuantTensor::from_slice(m.as_slice().unwrap(), m.shape().to_vec());
    Ok(QuantizedWeights {
        w_proj: q(&weights.w_proj),
        w_q: q(&weights.w_q),
        w_k: q(&weights.w_k),
        w_v: q(&weights.w_v),
        w1: q(&weights.w1),
        w2: q(&weights.w2),
        w_o: q(&weights.w_o),
        pos: weights.pos.as_ref().map(&q),
        b1: weights.b1.clone(),
        b2: weights.b2.clone(),
        b_o: weights.b_o.clone(),
    })
}

/// Reconstructs float weights (`code × scale`) for dequantized inference.
pub fn dequantize(q: &QuantizedWeights) -> Result<ModelWeights> {
    Ok(ModelWeights {
        w_proj: q.w_proj.to_array2()?,
        w_q: q.w_q.to_array2()?,
        w_k: q.w_k.to_array2()?,
        w_v: q.w_v.to_array2()?,
        w1: q.w1.to_array2()?,
        b1: q.b1.clone(),
        w2: q.w2.to_array2()?,
        b2: q.b2.clone(),
        w_o: q.w_o.to_array2()?,
        b_o: q.b_o.clone(),
        pos: q.pos.as_ref().map(|p| p.to_array2()).transpose()?,
    })
}

/// Size of the quantized weight payload: one byte per weight entry, one
/// f64 scale per tensor, four bytes per full-precision bias entry.
pub fn weight_payload_bytes(q: &QuantizedWeights) -> usize {
    let mats = [&q.w_proj, &q.w_q, &q.w_k, &q.w_v, &q.w1, &q.w2, &q.w_o];
    let mut bytes: usize = mats.iter().map(|t| t.len() + 8).sum();
    if let Some(pos) = &q.pos {
        bytes += pos.len() + 8;
    }
    bytes += 4 * (q.b1.len() + q.b2.len() + q.b_o.len());
    bytes
}
