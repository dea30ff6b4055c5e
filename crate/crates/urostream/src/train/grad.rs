//! Explicit analytic gradients through the full forward pass.
//!
//! Backpropagation runs through classifier → mean pool → MLP → per-head
//! attention (softmax included) → Q/K/V projections → input projection.
//! Teacher-forced memory rows are inputs, not activations, so no gradient
//! crosses segment boundaries.

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::forward::softmax;
use crate::model::{ClassProbs, GradientSet, HeadMode, ModelConfig, ModelWeights};

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    tokens: Array2<f64>,
    projected: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
    attended: Array2<f64>,
    hidden_pre: Array2<f64>,
    hidden: Array2<f64>,
    output: Array2<f64>,
    pooled: Array1<f64>,
    pub probs: ClassProbs,
}

/// Stacks memory (if any) on top of the segment rows.
pub fn assemble_tokens(
    features: &Array2<f64>,
    memory: Option<&Array2<f64>>,
    cfg: &ModelConfig,
) -> Result<Array2<f64>> {
    if features.nrows() != cfg.segment_len || features.ncols() != cfg.d_in {
        return Err(Error::ShapeMismatch(format!(
            "segment features {:?}, expected ({}, {})",
            features.shape(),
            cfg.segment_len,
            cfg.d_in
        )));
    }
    match memory {
        None => Ok(features.clone()),
        Some(mem) => {
            if mem.nrows() != cfg.memory_len || mem.ncols() != cfg.d_in {
                return Err(Error::ShapeMismatch(format!(
                    "memory rows {:?}, expected ({}, {})",
                    mem.shape(),
                    cfg.memory_len,
                    cfg.d_in
                )));
            }
            if mem.nrows() == 0 {
                return Ok(features.clone());
            }
            concatenate(Axis(0), &[mem.view(), features.view()])
                .map_err(|e| Error::ShapeMismatch(e.to_string()))
        }
    }
}

fn pool_range(cfg: &ModelConfig, n: usize) -> (usize, usize) {
    if cfg.pool_all_rows {
        (0, n)
    } else {
        (n - cfg.segment_len, n)
    }
}

/// Forward pass that records every intermediate needed by [`backward`].
/// Matches the inference path in [`crate::forward`] exactly.
pub fn forward_cached(
    tokens: ArrayView2<'_, f64>,
    weights: &ModelWeights,
    cfg: &ModelConfig,
) -> Result<ForwardCache> {
    let n = tokens.nrows();
    let mut projected = tokens.dot(&weights.w_proj);
    if cfg.positional_encoding {
        let pos = weights.pos.as_ref().ok_or_else(|| {
            Error::ShapeMismatch("positional_encoding on but no positional table".into())
        })?;
        let offset = pos.nrows() - n;
        projected += &pos.slice(ndarray::s![offset..offset + n, ..]);
    }
    let q = projected.dot(&weights.w_q);
    let k = projected.dot(&weights.w_k);
    let v = projected.dot(&weights.w_v);

    let head_dim = cfg.head_dim();
    let scale = (head_dim as f64).sqrt();
    let mut attended = Array2::zeros((n, cfg.d_model));
    let mut attn = Vec::with_capacity(cfg.num_heads);
    for h in 0..cfg.num_heads {
        let cols = ndarray::s![.., h * head_dim..(h + 1) * head_dim];
        let scores = q.slice(cols).dot(&k.slice(cols).t()) / scale;
        let mut a = Array2::zeros((n, n));
        for (i, row) in scores.rows().into_iter().enumerate() {
            let soft = softmax(row.as_slice().unwrap());
            for (j, p) in soft.into_iter().enumerate() {
                a[[i, j]] = p;
            }
        }
        attended.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
        attn.push(a);
    }

    let hidden_pre = attended.dot(&weights.w1) + &weights.b1;
    let hidden = hidden_pre.mapv(|x| x.max(0.0));
    let output = hidden.dot(&weights.w2) + &weights.b2;

    let (p0, p1) = pool_range(cfg, n);
    let pooled = output
        .slice(ndarray::s![p0..p1, ..])
        .mean_axis(Axis(0))
        .unwrap();
    let logits = pooled.dot(&weights.w_o) + &weights.b_o;
    let p = match cfg.head_mode {
        HeadMode::Softmax => softmax(logits.as_slice().unwrap()),
        HeadMode::Sigmoid => logits.iter().map(|&z| 1.0 / (1.0 + (-z).exp())).collect(),
    };
    Ok(ForwardCache {
        tokens: tokens.to_owned(),
        projected,
        q,
        k,
        v,
        attn,
        attended,
        hidden_pre,
        hidden,
        output,
        pooled,
        probs: ClassProbs {
            p,
            mode: cfg.head_mode,
        },
    })
}

/// Backpropagates a logit gradient through the cached forward pass,
/// accumulating scaled parameter gradients into `grads`.
pub fn backward(
    cache: &ForwardCache,
    weights: &ModelWeights,
    cfg: &ModelConfig,
    dlogits: &Array1<f64>,
    scale_factor: f64,
    grads: &mut GradientSet,
) {
    let n = cache.tokens.nrows();
    let (p0, p1) = pool_range(cfg, n);
    let pool_len = (p1 - p0) as f64;

    // Classifier head.
    let d_wo = outer(&cache.pooled, dlogits);
    grads.w_o.scaled_add(scale_factor, &d_wo);
    grads.b_o.scaled_add(scale_factor, dlogits);
    let d_pooled = weights.w_o.dot(dlogits);

    // Mean pool: pooled rows share the gradient equally.
    let mut d_output = Array2::zeros(cache.output.raw_dim());
    for i in p0..p1 {
        let mut row = d_output.row_mut(i);
        row.scaled_add(1.0 / pool_len, &d_pooled);
    }

    // MLP.
    grads
        .w2
        .scaled_add(scale_factor, &cache.hidden.t().dot(&d_output));
    grads
        .b2
        .scaled_add(scale_factor, &d_output.sum_axis(Axis(0)));
    let d_hidden = d_output.dot(&weights.w2.t());
    let mut d_hidden_pre = d_hidden;
    d_hidden_pre.zip_mut_with(&cache.hidden_pre, |g, &pre| {
        if pre <= 0.0 {
            *g = 0.0;
        }
    });
    grads
        .w1
        .scaled_add(scale_factor, &cache.attended.t().dot(&d_hidden_pre));
    grads
        .b1
        .scaled_add(scale_factor, &d_hidden_pre.sum_axis(Axis(0)));
    let d_attended = d_hidden_pre.dot(&weights.w1.t());

    // Attention heads.
    let head_dim = cfg.head_dim();
    let att_scale = (head_dim as f64).sqrt();
    let mut d_q = Array2::zeros((n, cfg.d_model));
    let mut d_k = Array2::zeros((n, cfg.d_model));
    let mut d_v = Array2::zeros((n, cfg.d_model));
    for h in 0..cfg.num_heads {
        let cols = ndarray::s![.., h * head_dim..(h + 1) * head_dim];
        let a = &cache.attn[h];
        let vh = cache.v.slice(cols);
        let d_zh = d_attended.slice(cols);

        let d_a = d_zh.dot(&vh.t());
        d_v.slice_mut(cols).assign(&a.t().dot(&d_zh));

        // Softmax backward per row: dS = A ∘ (dA − rowsum(dA ∘ A)).
        let mut d_scores = Array2::zeros((n, n));
        for i in 0..n {
            let dot: f64 = (0..n).map(|j| d_a[[i, j]] * a[[i, j]]).sum();
            for j in 0..n {
                d_scores[[i, j]] = a[[i, j]] * (d_a[[i, j]] - dot);
            }
        }
        d_scores.mapv_inplace(|x| x / att_scale);

        let kh = cache.k.slice(cols);
        let qh = cache.q.slice(cols);
        d_q.slice_mut(cols).assign(&d_scores.dot(&kh));
        d_k.slice_mut(cols).assign(&d_scores.t().dot(&qh));
    }
    grads
        .w_q
        .scaled_add(scale_factor, &cache.projected.t().dot(&d_q));
    grads
        .w_k
        .scaled_add(scale_factor, &cache.projected.t().dot(&d_k));
    grads
        .w_v
        .scaled_add(scale_factor, &cache.projected.t().dot(&d_v));

    let d_projected =
        d_q.dot(&weights.w_q.t()) + d_k.dot(&weights.w_k.t()) + d_v.dot(&weights.w_v.t());
    grads
        .w_proj
        .scaled_add(scale_factor, &cache.tokens.t().dot(&d_projected));
    if cfg.positional_encoding {
        if let Some(pos_grad) = grads.pos.as_mut() {
            let offset = pos_grad.nrows() - n;
            let mut rows = pos_grad.slice_mut(ndarray::s![offset..offset + n, ..]);
            rows.scaled_add(scale_factor, &d_projected);
        }
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let (na, nb) = (a.len(), b.len());
    Array2::from_shape_fn((na, nb), |(i, j)| a[i] * b[j])
}
