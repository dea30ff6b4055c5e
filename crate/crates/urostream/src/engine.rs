//! Per-sample streaming engine: FIFO update, feature extraction, segment
//! assembly, memory maintenance, and one prediction per completed segment.
//!
//! The engine is strictly causal: a prediction depends only on the samples
//! ingested so far, so the prediction stream over a trace prefix is a
//! bit-exact prefix of the stream over any extension. State is bounded by
//! the 512-sample FIFO, at most T pending features, and the m×16 memory
//! bank, independent of trace length.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::features::{apply_norm, FeatureExtractor, FeatureVector, NormStats, RatioPairSet, FEATURE_DIM};
use crate::forward::{segment_forward, streaming_forward};
use crate::label::{Label, LabelSet};
use crate::model::{ClassProbs, HeadMode, MemoryBank, ModelConfig, ModelWeights};

/// Inference regime: per-segment only, or with cross-segment memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineMode {
    SegmentLevel,
    Streaming,
}

/// One per-segment classification result.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// 0-based index of the segment's last sample.
    pub segment_end_index: usize,
    pub probs: ClassProbs,
    pub labels: LabelSet,
    /// True while the FIFO (and, in streaming mode, the memory bank) still
    /// contains padding rather than real history.
    pub warmup: bool,
}

/// Decodes class probabilities into a label set.
///
/// Softmax heads produce the singleton argmax (lowest class index wins exact
/// ties); sigmoid heads produce every class at or above `threshold`, with an
/// empty result decoding as `{NONE}`.
pub fn decode_labels(probs: &ClassProbs, threshold: f64) -> LabelSet {
    debug_assert!(threshold > 0.0 && threshold < 1.0);
    let mut set = LabelSet::new();
    match probs.mode {
        HeadMode::Softmax => {
            let mut best = 0;
            for (i, &p) in probs.p.iter().enumerate() {
                if p > probs.p[best] {
                    best = i;
                }
            }
            set.insert(Label::from_index(best).expect("class count fixed at 4"));
        }
        HeadMode::Sigmoid => {
            for (i, &p) in probs.p.iter().enumerate() {
                if p >= threshold {
                    set.insert(Label::from_index(i).expect("class count fixed at 4"));
                }
            }
            if set.is_empty() {
                set.insert(Label::None);
            }
        }
    }
    set
}

/// Streaming inference state for one logical signal stream.
#[derive(Debug, Clone)]
pub struct Engine {
    extractor: FeatureExtractor,
    pending: Vec<FeatureVector>,
    memory: MemoryBank,
    sample_index: usize,
    /// Memory updates computed after the FIFO was fully warmed.
    real_pools: usize,
    mode: EngineMode,
    cfg: ModelConfig,
    norm: NormStats,
    decode_threshold: f64,
}

impl Engine {
    pub fn new(
        cfg: ModelConfig,
        norm: NormStats,
        mode: EngineMode,
        pairs: RatioPairSet,
        ratio_eps: f64,
        decode_threshold: f64,
    ) -> Result<Self> {
        cfg.validate()?;
        norm.validate()?;
        if cfg.d_in != FEATURE_DIM {
            return Err(Error::Config(format!(
                "engine features are {FEATURE_DIM}-dimensional but d_in = {}",
                cfg.d_in
            )));
        }
        if !(decode_threshold > 0.0 && decode_threshold < 1.0) {
            return Err(Error::Config(format!(
                "decode threshold must lie in (0,1), got {decode_threshold}"
            )));
        }
        if !(ratio_eps > 0.0) {
            return Err(Error::Config(format!(
                "ratio epsilon must be positive, got {ratio_eps}"
            )));
        }
        let memory = MemoryBank::new(cfg.memory_len);
        Ok(Self {
            extractor: FeatureExtractor::new(pairs, ratio_eps),
            pending: Vec::with_capacity(cfg.segment_len),
            memory,
            sample_index: 0,
            real_pools: 0,
            mode,
            cfg,
            norm,
            decode_threshold,
        })
    }

    /// Ingests one sample; returns a prediction when it completes a segment.
    ///
    /// Non-finite samples are rejected with the engine state unchanged.
    pub fn step(&mut self, x: f64, weights: &ModelWeights) -> Result<Option<Prediction>> {
        let raw = self.extractor.push(x)?;
        self.pending.push(apply_norm(&raw, &self.norm));
        self.sample_index += 1;
        if self.pending.len() < self.cfg.segment_len {
            return Ok(None);
        }

        let segment = self.pending_matrix();
        // A segment is fully real once even its oldest feature was computed
        // from a full FIFO window; streaming additionally needs m such
        // segments pooled into the bank.
        let fully_real =
            self.sample_index >= crate::wavelet::WINDOW_LEN + self.cfg.segment_len;
        let warmed = fully_real
            && (self.mode == EngineMode::SegmentLevel || self.real_pools >= self.memory.len());
        let probs = match self.mode {
            EngineMode::SegmentLevel => segment_forward(segment.view(), weights, &self.cfg)?,
            EngineMode::Streaming => {
                let (probs, context) =
                    streaming_forward(&self.memory, segment.view(), weights, &self.cfg)?;
                self.memory.update(&context);
                if fully_real {
                    self.real_pools = (self.real_pools + 1).min(self.memory.len());
                }
                probs
            }
        };
        self.pending.clear();
        let labels = decode_labels(&probs, self.decode_threshold);
        Ok(Some(Prediction {
            segment_end_index: self.sample_index - 1,
            probs,
            labels,
            warmup: !warmed,
        }))
    }

    fn pending_matrix(&self) -> Array2<f64> {
        let t = self.pending.len();
        Array2::from_shape_fn((t, FEATURE_DIM), |(i, j)| self.pending[i].0[j])
    }

    /// Clears all signal state; weights and configuration are untouched.
    pub fn reset(&mut self) {
        self.extractor.reset();
        self.pending.clear();
        self.memory.reset();
        self.sample_index = 0;
        self.real_pools = 0;
    }

    pub fn mode(&self) -> EngineMode {
        self.mode
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn sample_index(&self) -> usize {
        self.sample_index
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    pub fn buffer_fill(&self) -> usize {
        self.extractor.buffer().fill_count()
    }

    pub fn memory(&self) -> &MemoryBank {
        &self.memory
    }

    /// Mutable access to the memory bank (offline evaluation and tests).
    pub fn memory_mut(&mut self) -> &mut MemoryBank {
        &mut self.memory
    }
}

/// Folds [`Engine::step`] over a full trace. A trailing partial segment
/// produces no prediction.
pub fn run_trace(
    engine: &mut Engine,
    samples: &[f64],
    weights: &ModelWeights,
) -> Result<Vec<Prediction>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("trace is empty".into()));
    }
    let mut out = Vec::with_capacity(samples.len() / engine.cfg.segment_len);
    for &x in samples {
        if let Some(p) = engine.step(x, weights)? {
            out.push(p);
        }
    }
    Ok(out)
}

/// Header of the prediction CSV stream.
pub const PREDICTION_CSV_HEADER: &str = "segment_end_index,p0,p1,p2,p3,labels,warmup";

/// Formats one prediction as a CSV row matching [`PREDICTION_CSV_HEADER`].
pub fn prediction_csv_row(p: &Prediction) -> String {
    debug_assert_eq!(p.probs.p.len(), 4);
    format!(
        "{},{},{},{},{},{},{}",
        p.segment_end_index,
        p.probs.p[0],
        p.probs.p[1],
        p.probs.p[2],
        p.probs.p[3],
        crate::label::format_label_set(&p.labels),
        u8::from(p.warmup),
    )
}
