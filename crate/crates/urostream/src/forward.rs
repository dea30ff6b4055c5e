//! Pure-function forward pass of the single-layer transformer.
//!
//! The segment-level path runs
//! `project → multi-head self-attention → position-wise MLP → mean pool →
//! classifier head` over one T×16 segment matrix. The streaming path
//! prepends the m cached context rows before projection and pools only the
//! current segment's output rows, so each prediction stays tied to its
//! segment while attention ranges over ~(m+T) tokens of history.
//!
//! There are no residual connections, no layer normalization, and no
//! positional encoding by default; with positional encoding off the whole
//! pipeline is equivariant under row permutations of the input (attention)
//! and the mean pool then makes the output permutation-invariant.

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::model::{ClassProbs, HeadMode, MemoryBank, ModelConfig, ModelWeights};

/// Numerically stable softmax over a slice.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Linear projection of `d_in`-dimensional rows into the model width,
/// plus the positional table when enabled.
///
/// With positional encoding on, an n-row input is aligned to the *last* n
/// slots of the (T+m)-row table so current-segment positions agree between
/// segment-level and streaming calls.
pub fn project(x: ArrayView2<'_, f64>, weights: &ModelWeights, cfg: &ModelConfig) -> Result<Array2<f64>> {
    if x.ncols() != cfg.d_in {
        return Err(Error::ShapeMismatch(format!(
            "projection input has {} columns, expected d_in = {}",
            x.ncols(),
            cfg.d_in
        )));
    }
    let mut out = x.dot(&weights.w_proj);
    if cfg.positional_encoding {
        let pos = weights.pos.as_ref().ok_or_else(|| {
            Error::ShapeMismatch("positional_encoding on but no positional table".into())
        })?;
        let n = out.nrows();
        let total = pos.nrows();
        if n > total {
            return Err(Error::ShapeMismatch(format!(
                "{n} input rows exceed the {total}-row positional table"
            )));
        }
        let offset = total - n;
        out += &pos.slice(ndarray::s![offset..offset + n, ..]);
    }
    Ok(out)
}

/// Multi-head self-attention, returning the per-head attention matrices
/// alongside the output so invariants (rows forming distributions) can be
/// inspected directly.
pub fn mhsa_with_attention(
    x: ArrayView2<'_, f64>,
    w_q: &Array2<f64>,
    w_k: &Array2<f64>,
    w_v: &Array2<f64>,
    num_heads: usize,
) -> Result<(Array2<f64>, Vec<Array2<f64>>)> {
    let n = x.nrows();
    let d_model = w_q.nrows();
    if n == 0 {
        return Err(Error::ShapeMismatch("attention needs at least one row".into()));
    }
    if x.ncols() != d_model || w_q.ncols() != d_model || w_k.shape() != w_q.shape() || w_v.shape() != w_q.shape() {
        return Err(Error::ShapeMismatch(format!(
            "attention shapes: x {:?}, w_q {:?}, w_k {:?}, w_v {:?}",
            x.shape(),
            w_q.shape(),
            w_k.shape(),
            w_v.shape()
        )));
    }
    if d_model % num_heads != 0 {
        return Err(Error::ShapeMismatch(format!(
            "num_heads {num_heads} must divide d_model {d_model}"
        )));
    }
    let head_dim = d_model / num_heads;
    let scale = (head_dim as f64).sqrt();

    let q = x.dot(w_q);
    let k = x.dot(w_k);
    let v = x.dot(w_v);

    let mut out = Array2::zeros((n, d_model));
    let mut attentions = Vec::with_capacity(num_heads);
    for h in 0..num_heads {
        let cols = ndarray::s![.., h * head_dim..(h + 1) * head_dim];
        let qh = q.slice(cols);
        let kh = k.slice(cols);
        let vh = v.slice(cols);

        let mut scores = qh.dot(&kh.t());
        scores.mapv_inplace(|s| s / scale);
        let mut attn = Array2::zeros((n, n));
        for (i, row) in scores.rows().into_iter().enumerate() {
            let soft = softmax(row.as_slice().unwrap());
            for (j, p) in soft.into_iter().enumerate() {
                attn[[i, j]] = p;
            }
        }
        let zh = attn.dot(&vh);
        out.slice_mut(cols).assign(&zh);
        attentions.push(attn);
    }
    Ok((out, attentions))
}

/// Multi-head self-attention: per head, `softmax(QKᵀ/√d_head)·V`, heads
/// concatenated. With a single head the scale is √d_model.
pub fn mhsa(
    x: ArrayView2<'_, f64>,
    w_q: &Array2<f64>,
    w_k: &Array2<f64>,
    w_v: &Array2<f64>,
    num_heads: usize,
) -> Result<Array2<f64>> {
    mhsa_with_attention(x, w_q, w_k, w_v, num_heads).map(|(out, _)| out)
}

/// Position-wise MLP: `ReLU(Z·W1 + b1)·W2 + b2` applied row-wise.
pub fn mlp(
    z: ArrayView2<'_, f64>,
    w1: &Array2<f64>,
    b1: &Array1<f64>,
    w2: &Array2<f64>,
    b2: &Array1<f64>,
) -> Result<Array2<f64>> {
    if z.ncols() != w1.nrows() || w1.ncols() != b1.len() || w1.ncols() != w2.nrows() || w2.ncols() != b2.len() {
        return Err(Error::ShapeMismatch(format!(
            "mlp shapes: z {:?}, w1 {:?}, b1 {}, w2 {:?}, b2 {}",
            z.shape(),
            w1.shape(),
            b1.len(),
            w2.shape(),
            b2.len()
        )));
    }
    let mut hidden = z.dot(w1) + b1;
    hidden.mapv_inplace(|v| v.max(0.0));
    Ok(hidden.dot(w2) + b2)
}

/// Mean-pools the given output rows and applies the classifier head.
///
/// The row count must equal the segment length T (or T+m when
/// `pool_all_rows` is set); streaming callers slice out the current
/// segment's rows before calling.
pub fn pool_and_classify(
    o_pool: ArrayView2<'_, f64>,
    weights: &ModelWeights,
    cfg: &ModelConfig,
) -> Result<ClassProbs> {
    let expected = if cfg.pool_all_rows {
        cfg.total_tokens()
    } else {
        cfg.segment_len
    };
    if o_pool.nrows() != expected {
        return Err(Error::ShapeMismatch(format!(
            "pooling expects {} rows, got {}",
            expected,
            o_pool.nrows()
        )));
    }
    if o_pool.ncols() != cfg.classifier_in {
        return Err(Error::ShapeMismatch(format!(
            "classifier expects {} inputs, got {}",
            cfg.classifier_in,
            o_pool.ncols()
        )));
    }
    let pooled = o_pool.mean_axis(Axis(0)).unwrap();
    let logits = pooled.dot(&weights.w_o) + &weights.b_o;
    let p = match cfg.head_mode {
        HeadMode::Softmax => softmax(logits.as_slice().unwrap()),
        HeadMode::Sigmoid => logits.iter().map(|&z| sigmoid(z)).collect(),
    };
    Ok(ClassProbs {
        p,
        mode: cfg.head_mode,
    })
}

fn forward_from_tokens(
    tokens: ArrayView2<'_, f64>,
    weights: &ModelWeights,
    cfg: &ModelConfig,
) -> Result<ClassProbs> {
    let projected = project(tokens, weights, cfg)?;
    let attended = mhsa(projected.view(), &weights.w_q, &weights.w_k, &weights.w_v, cfg.num_heads)?;
    let output = mlp(attended.view(), &weights.w1, &weights.b1, &weights.w2, &weights.b2)?;
    let pool_rows = if cfg.pool_all_rows {
        output.view()
    } else {
        output.slice(ndarray::s![output.nrows() - cfg.segment_len.., ..])
    };
    pool_and_classify(pool_rows, weights, cfg)
}

/// Forward pass over one segment matrix (no memory).
pub fn segment_forward(
    segment: ArrayView2<'_, f64>,
    weights: &ModelWeights,
    cfg: &ModelConfig,
) -> Result<ClassProbs> {
    if segment.nrows() != cfg.segment_len {
        return Err(Error::ShapeMismatch(format!(
            "segment has {} rows, expected T = {}",
            segment.nrows(),
            cfg.segment_len
        )));
    }
    if cfg.pool_all_rows && cfg.memory_len != 0 {
        return Err(Error::Config(
            "pool_all_rows with memory requires the streaming forward pass".into(),
        ));
    }
    forward_from_tokens(segment, weights, cfg)
}

/// Column-wise mean of the segment's rows: the 16-dimensional context
/// vector cached for future segments (computed on pre-projection features).
pub fn pooled_context(segment: ArrayView2<'_, f64>) -> Array1<f64> {
    segment.mean_axis(Axis(0)).unwrap()
}

/// Streaming forward pass: attends over `[memory; segment]`, pools the
/// current segment's output rows, and returns the new context vector.
/// The caller decides when to push the context into the bank.
pub fn streaming_forward<'a>(
    memory: &'a MemoryBank,
    segment: ArrayView2<'a, f64>,
    weights: &ModelWeights,
    cfg: &ModelConfig,
) -> Result<(ClassProbs, Array1<f64>)> {
    if segment.nrows() != cfg.segment_len || segment.ncols() != cfg.d_in {
        return Err(Error::ShapeMismatch(format!(
            "segment shape {:?}, expected ({}, {})",
            segment.shape(),
            cfg.segment_len,
            cfg.d_in
        )));
    }
    if memory.len() != cfg.memory_len {
        return Err(Error::ShapeMismatch(format!(
            "memory bank has {} rows, config says m = {}",
            memory.len(),
            cfg.memory_len
        )));
    }
    let probs = if cfg.memory_len == 0 {
        forward_from_tokens(segment, weights, cfg)?
    } else {
        let combined = concatenate(Axis(0), &[memory.rows(), segment])
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        forward_from_tokens(combined.view(), weights, cfg)?
    };
    Ok((probs, pooled_context(segment)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            segment_len: 3,
            memory_len: 2,
            d_in: 16,
            d_model: 8,
            num_heads: 2,
            mlp_hidden: 6,
            mlp_out: 5,
            classifier_in: 5,
            num_classes: 4,
            head_mode: HeadMode::Softmax,
            preset: crate::model::Preset::Custom,
            positional_encoding: false,
            pool_all_rows: false,
        }
    }

    #[test]
    fn identity_extended_projection_copies_input() {
        let cfg = ModelConfig::equation();
        let mut w = ModelWeights::zeros(&cfg);
        for i in 0..16 {
            w.w_proj[[i, i]] = 1.0;
        }
        let e = Array2::from_shape_fn((8, 16), |(i, j)| (i * 16 + j) as f64 * 0.01);
        let out = project(e.view(), &w, &cfg).unwrap();
        assert_eq!(out.dim(), (8, 64));
        for i in 0..8 {
            for j in 0..16 {
                assert_eq!(out[[i, j]], e[[i, j]]);
            }
            for j in 16..64 {
                assert_eq!(out[[i, j]], 0.0);
            }
        }

        let zero = Array2::zeros((8, 16));
        let out0 = project(zero.view(), &w, &cfg).unwrap();
        assert!(out0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projection_rejects_wrong_width() {
        let cfg = ModelConfig::equation();
        let w = ModelWeights::zeros(&cfg);
        let bad = Array2::zeros((8, 15));
        assert!(project(bad.view(), &w, &cfg).is_err());
    }

    #[test]
    fn single_row_attention_returns_value_row() {
        let cfg = tiny_cfg();
        let w = ModelWeights::init(&cfg, 3);
        let x = Array2::from_shape_fn((1, 8), |(_, j)| j as f64 * 0.3 - 1.0);
        let (out, attn) = mhsa_with_attention(x.view(), &w.w_q, &w.w_k, &w.w_v, 2).unwrap();
        for a in &attn {
            assert_eq!(a.dim(), (1, 1));
            assert!((a[[0, 0]] - 1.0).abs() < 1e-12);
        }
        let v = x.dot(&w.w_v);
        for j in 0..8 {
            assert!((out[[0, j]] - v[[0, j]]).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_rows_give_identical_outputs() {
        let cfg = tiny_cfg();
        let w = ModelWeights::init(&cfg, 5);
        let row: Vec<f64> = (0..8).map(|j| (j as f64).cos()).collect();
        let x = Array2::from_shape_fn((4, 8), |(_, j)| row[j]);
        let out = mhsa(x.view(), &w.w_q, &w.w_k, &w.w_v, 2).unwrap();
        for i in 1..4 {
            for j in 0..8 {
                assert!((out[[i, j]] - out[[0, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mlp_zero_input_broadcasts_output_bias() {
        let cfg = tiny_cfg();
        let mut w = ModelWeights::init(&cfg, 9);
        w.b1.fill(0.0);
        w.b2 = array![0.5, -1.0, 2.0, 0.0, 3.0];
        let z = Array2::zeros((3, 8));
        let o = mlp(z.view(), &w.w1, &w.b1, &w.w2, &w.b2).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                assert_eq!(o[[i, j]], w.b2[j]);
            }
        }

        // Saturated ReLU: very negative hidden bias kills the first layer.
        w.b1.fill(-1e6);
        let z2 = Array2::from_elem((3, 8), 0.1);
        let o2 = mlp(z2.view(), &w.w1, &w.b1, &w.w2, &w.b2).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                assert_eq!(o2[[i, j]], w.b2[j]);
            }
        }
    }

    #[test]
    fn uniform_logits_classify_uniformly() {
        let cfg = tiny_cfg();
        let mut w = ModelWeights::zeros(&cfg);
        w.b_o.fill(1.7);
        let o = Array2::zeros((3, 5));
        let probs = pool_and_classify(o.view(), &w, &cfg).unwrap();
        for p in &probs.p {
            assert!((p - 0.25).abs() < 1e-12);
        }

        let mut sig_cfg = cfg.clone();
        sig_cfg.head_mode = HeadMode::Sigmoid;
        let mut w2 = ModelWeights::zeros(&sig_cfg);
        w2.b_o.fill(0.0);
        let probs2 = pool_and_classify(o.view(), &w2, &sig_cfg).unwrap();
        for p in &probs2.p {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn pooling_rejects_wrong_row_count() {
        let cfg = tiny_cfg();
        let w = ModelWeights::zeros(&cfg);
        let o = Array2::zeros((2, 5));
        assert!(pool_and_classify(o.view(), &w, &cfg).is_err());
    }

    #[test]
    fn segment_forward_equals_composed_ops() {
        let cfg = tiny_cfg();
        let w = ModelWeights::init(&cfg, 11);
        let e = Array2::from_shape_fn((3, 16), |(i, j)| ((i * 31 + j * 7) % 13) as f64 * 0.1 - 0.6);

        let direct = segment_forward(e.view(), &w, &cfg).unwrap();
        let projected = project(e.view(), &w, &cfg).unwrap();
        let attended = mhsa(projected.view(), &w.w_q, &w.w_k, &w.w_v, cfg.num_heads).unwrap();
        let output = mlp(attended.view(), &w.w1, &w.b1, &w.w2, &w.b2).unwrap();
        let composed = pool_and_classify(output.view(), &w, &cfg).unwrap();
        assert_eq!(direct.p, composed.p);
    }

    #[test]
    fn pooled_context_is_row_mean() {
        let e = Array2::from_shape_fn((4, 16), |(i, j)| if j == i { 1.0 } else { 0.0 });
        let r = pooled_context(e.view());
        for j in 0..16 {
            let expected = if j < 4 { 0.25 } else { 0.0 };
            assert!((r[j] - expected).abs() < 1e-15);
        }

        let v: Vec<f64> = (0..16).map(|j| j as f64).collect();
        let same = Array2::from_shape_fn((4, 16), |(_, j)| v[j]);
        let r2 = pooled_context(same.view());
        for j in 0..16 {
            assert_eq!(r2[j], v[j]);
        }
    }

    #[test]
    fn zero_memory_streaming_matches_segment_forward_bitwise() {
        let mut cfg = tiny_cfg();
        cfg.memory_len = 0;
        let w = ModelWeights::init(&cfg, 13);
        let e = Array2::from_shape_fn((3, 16), |(i, j)| ((i + j) as f64).sin());
        let bank = MemoryBank::new(0);
        let (streamed, ctx) = streaming_forward(&bank, e.view(), &w, &cfg).unwrap();
        let direct = segment_forward(e.view(), &w, &cfg).unwrap();
        assert_eq!(streamed.p, direct.p);
        assert_eq!(ctx, pooled_context(e.view()));
    }

    #[test]
    fn streaming_with_zero_memory_rows_runs_and_is_finite() {
        // Zero memory rows still receive attention mass, so this does not
        // reduce to the segment-level pass; it only has to run cleanly.
        let cfg = tiny_cfg();
        let w = ModelWeights::init(&cfg, 17);
        let e = Array2::from_shape_fn((3, 16), |(i, j)| ((i * j) as f64 * 0.05).cos());
        let bank = MemoryBank::new(2);
        let (probs, _) = streaming_forward(&bank, e.view(), &w, &cfg).unwrap();
        assert!(probs.p.iter().all(|p| p.is_finite()));
        let sum: f64 = probs.p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }
}
