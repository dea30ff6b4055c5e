//! Per-sample feature extraction: FIFO window, wavelet coefficient
//! retention, ratio features, and z-score normalization.
//!
//! Each incoming pressure sample is turned into a 16-dimensional feature
//! vector `[x_t, c_0..c_9, r_0..r_4]`: the raw sample, the newest
//! coefficient of each wavelet subband in the fixed order
//! `[A5, A4, A3, A2, A1, D5, D4, D3, D2, D1]`, and five ratios between
//! selected coefficient pairs.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::wavelet::{lwt5, WaveletCoeffs, LEVELS, WINDOW_LEN};

/// Dimensionality of the per-sample feature vector.
pub const FEATURE_DIM: usize = 16;
/// Number of retained wavelet coefficients.
pub const NUM_RETAINED: usize = 10;
/// Number of ratio features.
pub const NUM_RATIOS: usize = 5;
/// Default denominator guard for ratio features.
pub const DEFAULT_RATIO_EPS: f64 = 1e-6;

/// Fixed-capacity FIFO of the latest 512 pressure samples.
///
/// Until 512 samples have arrived the exported window is zero-padded at the
/// oldest end; [`SampleBuffer::is_full`] reports when the padding is gone.
#[derive(Debug, Clone)]
pub struct SampleBuffer {
    samples: VecDeque<f64>,
}

impl SampleBuffer {
    pub fn new() -> Self {
        Self {
            samples: VecDeque::with_capacity(WINDOW_LEN),
        }
    }

    /// Appends a sample, evicting the oldest once the buffer holds 512.
    pub fn push(&mut self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("sample value {x}")));
        }
        if self.samples.len() == WINDOW_LEN {
            self.samples.pop_front();
        }
        self.samples.push_back(x);
        Ok(())
    }

    /// Number of real samples currently held, saturating at 512.
    pub fn fill_count(&self) -> usize {
        self.samples.len()
    }

    pub fn is_full(&self) -> bool {
        self.samples.len() == WINDOW_LEN
    }

    /// The current 512-sample window, oldest to newest, zero-padded at the
    /// oldest end while warming up.
    pub fn window(&self) -> Vec<f64> {
        let mut w = vec![0.0; WINDOW_LEN - self.samples.len()];
        w.extend(self.samples.iter().copied());
        w
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }
}

impl Default for SampleBuffer {
    fn default() -> Self {
        Self::new()
    }
}

/// The newest coefficient of each subband, ordered
/// `[A5, A4, A3, A2, A1, D5, D4, D3, D2, D1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetainedCoeffs(pub [f64; NUM_RETAINED]);

/// Extracts the last coefficient of every subband.
pub fn retain_latest(coeffs: &WaveletCoeffs) -> RetainedCoeffs {
    let mut c = [0.0; NUM_RETAINED];
    for level in 0..LEVELS {
        // A5 first, descending to A1; then D5 down to D1.
        c[level] = *coeffs.approx[LEVELS - 1 - level].last().unwrap();
        c[LEVELS + level] = *coeffs.detail[LEVELS - 1 - level].last().unwrap();
    }
    RetainedCoeffs(c)
}

/// Five ordered index pairs `(numerator, denominator)` into
/// [`RetainedCoeffs`] used to build ratio features.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RatioPairSet {
    pub pairs: [(usize, usize); NUM_RATIOS],
}

impl RatioPairSet {
    pub fn new(pairs: [(usize, usize); NUM_RATIOS]) -> Result<Self> {
        for &(i, j) in &pairs {
            if i >= NUM_RETAINED || j >= NUM_RETAINED {
                return Err(Error::Config(format!(
                    "ratio pair index ({i},{j}) out of range 0..{NUM_RETAINED}"
                )));
            }
            if i == j {
                return Err(Error::Config(format!(
                    "ratio pair ({i},{j}) divides a coefficient by itself"
                )));
            }
        }
        Ok(Self { pairs })
    }

    /// Parses `"0:4,5:0,7:9,2:7,8:4"`-style pair lists.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for part in text.split(',') {
            let (a, b) = part.trim().split_once(':').ok_or_else(|| {
                Error::Config(format!("ratio pair '{part}' is not of the form i:j"))
            })?;
            let i: usize = a
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad ratio pair index '{a}'")))?;
            let j: usize = b
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad ratio pair index '{b}'")))?;
            pairs.push((i, j));
        }
        let arr: [(usize, usize); NUM_RATIOS] = pairs.try_into().map_err(|v: Vec<_>| {
            Error::Config(format!("expected {NUM_RATIOS} ratio pairs, got {}", v.len()))
        })?;
        Self::new(arr)
    }

    pub fn to_string_spec(&self) -> String {
        self.pairs
            .iter()
            .map(|(i, j)| format!("{i}:{j}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl Default for RatioPairSet {
    /// Pairs spanning low/high-frequency contrasts:
    /// (A5,A1), (D5,A5), (D3,D1), (A3,D3), (D2,A1).
    fn default() -> Self {
        Self {
            pairs: [(0, 4), (5, 0), (7, 9), (2, 7), (8, 4)],
        }
    }
}

/// Clamps a denominator away from zero while preserving its sign
/// (zero counts as positive).
fn sign_preserving_clamp(v: f64, eps: f64) -> f64 {
    if v.abs() >= eps {
        v
    } else if v.is_sign_negative() && v != 0.0 {
        -eps
    } else {
        eps
    }
}

/// Ratio features `r_k = c_i / clamp(c_j, eps)` for each configured pair.
pub fn ratio_features(c: &RetainedCoeffs, pairs: &RatioPairSet, eps: f64) -> [f64; NUM_RATIOS] {
    debug_assert!(eps > 0.0);
    let mut r = [0.0; NUM_RATIOS];
    for (k, &(i, j)) in pairs.pairs.iter().enumerate() {
        r[k] = c.0[i] / sign_preserving_clamp(c.0[j], eps);
    }
    r
}

/// A complete 16-dimensional per-sample embedding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Concatenates `[x_t, c, r]` into a feature vector.
pub fn make_feature(x_t: f64, c: &RetainedCoeffs, r: &[f64; NUM_RATIOS]) -> Result<FeatureVector> {
    let mut e = [0.0; FEATURE_DIM];
    e[0] = x_t;
    e[1..1 + NUM_RETAINED].copy_from_slice(&c.0);
    e[1 + NUM_RETAINED..].copy_from_slice(r);
    if let Some(bad) = e.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("feature entry {bad}")));
    }
    Ok(FeatureVector(e))
}

/// Per-dimension z-score parameters. Standard deviations are clamped to
/// at least 1e-8 so constant dimensions normalize to zero.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Identity normalization (mean 0, std 1).
    pub fn identity() -> Self {
        Self {
            mean: vec![0.0; FEATURE_DIM],
            std: vec![1.0; FEATURE_DIM],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != FEATURE_DIM || self.std.len() != FEATURE_DIM {
            return Err(Error::ShapeMismatch(format!(
                "normalization stats must have {FEATURE_DIM} entries"
            )));
        }
        if self.std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput("std entries must be positive".into()));
        }
        Ok(())
    }
}

/// Fits population mean/std per feature dimension.
pub fn fit_norm(features: &[FeatureVector]) -> Result<NormStats> {
    if features.is_empty() {
        return Err(Error::InvalidInput(
            "cannot fit normalization on an empty feature set".into(),
        ));
    }
    let n = features.len() as f64;
    let mut mean = vec![0.0; FEATURE_DIM];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f.0.iter()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; FEATURE_DIM];
    for f in features {
        for (vacc, (v, m)) in var.iter_mut().zip(f.0.iter().zip(mean.iter())) {
            let d = v - m;
            *vacc += d * d;
        }
    }
    let std = var.iter().map(|v| (v / n).sqrt().max(1e-8)).collect();
    Ok(NormStats { mean, std })
}

/// Applies `(e − mean) / std` elementwise.
pub fn apply_norm(e: &FeatureVector, stats: &NormStats) -> FeatureVector {
    let mut out = [0.0; FEATURE_DIM];
    for (o, ((v, m), s)) in out
        .iter_mut()
        .zip(e.0.iter().zip(stats.mean.iter()).zip(stats.std.iter()))
    {
        *o = (v - m) / s;
    }
    FeatureVector(out)
}

/// Stateful per-sample extractor: FIFO + transform + retention + ratios.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    buffer: SampleBuffer,
    pairs: RatioPairSet,
    ratio_eps: f64,
}

impl FeatureExtractor {
    pub fn new(pairs: RatioPairSet, ratio_eps: f64) -> Self {
        Self {
            buffer: SampleBuffer::new(),
            pairs,
            ratio_eps,
        }
    }

    /// Ingests one sample and returns the (unnormalized) feature vector.
    pub fn push(&mut self, x: f64) -> Result<FeatureVector> {
        self.buffer.push(x)?;
        feature_from_window(&self.buffer.window(), x, &self.pairs, self.ratio_eps)
    }

    pub fn is_warmed_up(&self) -> bool {
        self.buffer.is_full()
    }

    pub fn buffer(&self) -> &SampleBuffer {
        &self.buffer
    }

    pub fn reset(&mut self) {
        self.buffer.clear();
    }
}

/// Computes the feature vector for one explicit 512-sample window whose
/// newest sample is `x_t`: transform, retention, ratios, concatenation.
pub fn feature_from_window(
    window: &[f64],
    x_t: f64,
    pairs: &RatioPairSet,
    ratio_eps: f64,
) -> Result<FeatureVector> {
    let coeffs = lwt5(window)?;
    let c = retain_latest(&coeffs);
    let r = ratio_features(&c, pairs, ratio_eps);
    make_feature(x_t, &c, &r)
}

/// Runs the extractor over a whole trace, one feature vector per sample.
pub fn trace_features(samples: &[f64], pairs: &RatioPairSet, eps: f64) -> Result<Vec<FeatureVector>> {
    let mut extractor = FeatureExtractor::new(pairs.clone(), eps);
    samples.iter().map(|&x| extractor.push(x)).collect()
}
