//! Independent oracles shared by the integration and acceptance suites.
//!
//! Everything here deliberately avoids the library's linear-algebra path:
//! convolutions and matrix products are written as plain loops so agreement
//! with the implementation is evidence, not tautology.

#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use urostream::engine::EngineMode;
use urostream::features::{
    apply_norm, feature_from_window, FeatureVector, NormStats, RatioPairSet, FEATURE_DIM,
};
use urostream::label::{Label, LabelSet};
use urostream::model::{HeadMode, ModelConfig, ModelWeights};
use urostream::wavelet::WINDOW_LEN;

/// Classic D4 analysis filter taps.
pub fn d4_lowpass() -> [f64; 4] {
    let s3 = 3f64.sqrt();
    let norm = 4.0 * 2f64.sqrt();
    [
        (1.0 + s3) / norm,
        (3.0 + s3) / norm,
        (3.0 - s3) / norm,
        (1.0 - s3) / norm,
    ]
}

/// One analysis level as a direct circular convolution and downsample.
///
/// Conventions match the lifting factorization under periodic extension:
/// `a[m] = Σ_k h[k]·x[2m+k]` and, for the quadrature-mirror high-pass
/// `g[k] = (−1)^{k+1}·h[3−k]`, `d[m] = Σ_k g[k]·x[2m−2+k]` (the detail
/// band sits one sample pair earlier than the textbook alignment).
pub fn d4_analysis_step(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h = d4_lowpass();
    let g = [-h[3], h[2], -h[1], h[0]];
    let n = x.len();
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for m in 0..half {
        let mut sa = 0.0;
        let mut sd = 0.0;
        for k in 0..4 {
            sa += h[k] * x[(2 * m + k) % n];
            sd += g[k] * x[(2 * m + n - 2 + k) % n];
        }
        a[m] = sa;
        d[m] = sd;
    }
    (a, d)
}

/// Five-level filterbank decomposition (approx/detail per level).
pub fn d4_filterbank_5level(x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut approx = Vec::new();
    let mut detail = Vec::new();
    let mut current = x.to_vec();
    for _ in 0..5 {
        let (a, d) = d4_analysis_step(&current);
        current = a.clone();
        approx.push(a);
        detail.push(d);
    }
    (approx, detail)
}

/// Triple-loop matrix multiply.
pub fn naive_matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, k) = a.dim();
    let (k2, m) = b.dim();
    assert_eq!(k, k2);
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for l in 0..k {
                acc += a[[i, l]] * b[[l, j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

pub fn naive_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Direct per-head attention: softmax(Q·Kᵀ/√d_head)·V with explicit loops.
pub fn naive_mhsa(
    x: &Array2<f64>,
    w_q: &Array2<f64>,
    w_k: &Array2<f64>,
    w_v: &Array2<f64>,
    num_heads: usize,
) -> Array2<f64> {
    let n = x.nrows();
    let d = w_q.ncols();
    let head_dim = d / num_heads;
    let scale = (head_dim as f64).sqrt();
    let q = naive_matmul(x, w_q);
    let k = naive_matmul(x, w_k);
    let v = naive_matmul(x, w_v);
    let mut out = Array2::zeros((n, d));
    for h in 0..num_heads {
        let c0 = h * head_dim;
        for i in 0..n {
            let mut scores = vec![0.0; n];
            for (j, s) in scores.iter_mut().enumerate() {
                let mut acc = 0.0;
                for l in 0..head_dim {
                    acc += q[[i, c0 + l]] * k[[j, c0 + l]];
                }
                *s = acc / scale;
            }
            let attn = naive_softmax(&scores);
            for l in 0..head_dim {
                let mut acc = 0.0;
                for (j, a) in attn.iter().enumerate() {
                    acc += a * v[[j, c0 + l]];
                }
                out[[i, c0 + l]] = acc;
            }
        }
    }
    out
}

/// From-scratch dense forward pass: projection (+ positional rows), naive
/// attention over all tokens, position-wise MLP, mean pool over the last T
/// (or all) rows, classifier head.
pub fn naive_forward(
    tokens: &Array2<f64>,
    weights: &ModelWeights,
    cfg: &ModelConfig,
) -> Vec<f64> {
    let n = tokens.nrows();
    let mut projected = naive_matmul(tokens, &weights.w_proj);
    if cfg.positional_encoding {
        let pos = weights.pos.as_ref().expect("positional table");
        let offset = pos.nrows() - n;
        for i in 0..n {
            for j in 0..cfg.d_model {
                projected[[i, j]] += pos[[offset + i, j]];
            }
        }
    }
    let attended = naive_mhsa(&projected, &weights.w_q, &weights.w_k, &weights.w_v, cfg.num_heads);

    let mut hidden = naive_matmul(&attended, &weights.w1);
    for i in 0..n {
        for j in 0..cfg.mlp_hidden {
            hidden[[i, j]] = (hidden[[i, j]] + weights.b1[j]).max(0.0);
        }
    }
    let mut output = naive_matmul(&hidden, &weights.w2);
    for i in 0..n {
        for j in 0..cfg.mlp_out {
            output[[i, j]] += weights.b2[j];
        }
    }

    let (p0, p1) = if cfg.pool_all_rows {
        (0, n)
    } else {
        (n - cfg.segment_len, n)
    };
    let mut pooled = vec![0.0; cfg.mlp_out];
    for (j, p) in pooled.iter_mut().enumerate() {
        for i in p0..p1 {
            *p += output[[i, j]];
        }
        *p /= (p1 - p0) as f64;
    }
    let mut logits = vec![0.0; cfg.num_classes];
    for (c, logit) in logits.iter_mut().enumerate() {
        let mut acc = weights.b_o[c];
        for (j, p) in pooled.iter().enumerate() {
            acc += p * weights.w_o[[j, c]];
        }
        *logit = acc;
    }
    match cfg.head_mode {
        HeadMode::Softmax => naive_softmax(&logits),
        HeadMode::Sigmoid => logits.iter().map(|z| 1.0 / (1.0 + (-z).exp())).collect(),
    }
}

/// One offline prediction: segment index, probabilities, labels, warm-up.
pub struct OfflinePrediction {
    pub segment_end_index: usize,
    pub probs: Vec<f64>,
    pub labels: LabelSet,
    pub warmup: bool,
}

/// Offline dense evaluation of a whole trace in streaming mode: features
/// from fresh per-sample window slices, explicit segment matrices, memory
/// banks materialized from scratch, and the naive forward pass.
pub fn offline_streaming_predictions(
    samples: &[f64],
    weights: &ModelWeights,
    cfg: &ModelConfig,
    norm: &NormStats,
    pairs: &RatioPairSet,
    ratio_eps: f64,
    threshold: f64,
) -> Vec<OfflinePrediction> {
    let features: Vec<FeatureVector> = (0..samples.len())
        .map(|t| {
            let mut window = vec![0.0; WINDOW_LEN];
            let have = (t + 1).min(WINDOW_LEN);
            window[WINDOW_LEN - have..].copy_from_slice(&samples[t + 1 - have..=t]);
            let f = feature_from_window(&window, samples[t], pairs, ratio_eps).unwrap();
            apply_norm(&f, norm)
        })
        .collect();

    let t_len = cfg.segment_len;
    let m = cfg.memory_len;
    let n_segments = samples.len() / t_len;
    let segment_rows = |k: usize| {
        Array2::from_shape_fn((t_len, FEATURE_DIM), |(i, j)| features[k * t_len + i].0[j])
    };
    let pool = |k: usize| -> Array1<f64> {
        let mut p = Array1::zeros(FEATURE_DIM);
        for i in 0..t_len {
            for j in 0..FEATURE_DIM {
                p[j] += features[k * t_len + i].0[j] / t_len as f64;
            }
        }
        p
    };

    (0..n_segments)
        .map(|k| {
            let mut tokens = Array2::zeros((m + t_len, FEATURE_DIM));
            for j in 1..=m {
                if k >= j {
                    let row = pool(k - j);
                    for d in 0..FEATURE_DIM {
                        tokens[[m - j, d]] = row[d];
                    }
                }
            }
            let seg = segment_rows(k);
            for i in 0..t_len {
                for d in 0..FEATURE_DIM {
                    tokens[[m + i, d]] = seg[[i, d]];
                }
            }
            let probs = naive_forward(&tokens, weights, cfg);
            let labels = decode_oracle(&probs, cfg.head_mode, threshold);
            // Warm-up: the oldest feature of the segment must have seen a
            // full window, plus m fully-real pooled segments before it.
            let first_real_segment = WINDOW_LEN / t_len;
            let warmup = k < first_real_segment + m;
            OfflinePrediction {
                segment_end_index: k * t_len + t_len - 1,
                probs,
                labels,
                warmup,
            }
        })
        .collect()
}

pub fn decode_oracle(probs: &[f64], mode: HeadMode, threshold: f64) -> LabelSet {
    let mut set = LabelSet::new();
    match mode {
        HeadMode::Softmax => {
            let mut best = 0;
            for (i, p) in probs.iter().enumerate() {
                if *p > probs[best] {
                    best = i;
                }
            }
            set.insert(Label::from_index(best).unwrap());
        }
        HeadMode::Sigmoid => {
            for (i, p) in probs.iter().enumerate() {
                if *p >= threshold {
                    set.insert(Label::from_index(i).unwrap());
                }
            }
            if set.is_empty() {
                set.insert(Label::None);
            }
        }
    }
    set
}

/// Seeded standard-normal-ish window for oracle comparisons.
pub fn seeded_window(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-10.0..10.0)).collect()
}

pub fn seeded_matrix(seed: u64, rows: usize, cols: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Tiny custom config used by gradient checks.
pub fn tiny_config(head: HeadMode, memory_len: usize, positional: bool) -> ModelConfig {
    ModelConfig {
        segment_len: 4,
        memory_len,
        d_in: FEATURE_DIM,
        d_model: 8,
        num_heads: 2,
        mlp_hidden: 10,
        mlp_out: 6,
        classifier_in: 6,
        num_classes: 4,
        head_mode: head,
        preset: urostream::model::Preset::Custom,
        positional_encoding: positional,
        pool_all_rows: false,
    }
}

pub fn variant_name(mode: EngineMode) -> &'static str {
    match mode {
        EngineMode::SegmentLevel => "segment-level",
        EngineMode::Streaming => "streaming",
    }
}
