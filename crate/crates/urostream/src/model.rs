//! Model configuration, learnable weights, and the rolling memory bank.

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FEATURE_DIM;

/// Number of bladder-state classes (NONE, DO, VOID, ABD).
pub const NUM_CLASSES: usize = 4;

/// Shape preset selecting the MLP/classifier widths.
///
/// `Equation` follows the forward equations literally (MLP 64→64→16,
/// classifier 16→4). `Table` uses the widths implied by the published
/// per-component cost arithmetic (MLP 64→256→64, classifier 64→4).
/// `Custom` allows arbitrary dimensions, used mainly by tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Equation,
    Table,
    Custom,
}

/// Output head: softmax for single-label, per-class sigmoid for multi-label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    Softmax,
    Sigmoid,
}

/// All structural hyperparameters of the single-layer transformer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Segment length T (samples per prediction).
    pub segment_len: usize,
    /// Memory length m (cached context vectors).
    pub memory_len: usize,
    /// Input feature dimensionality.
    pub d_in: usize,
    /// Embedding width.
    pub d_model: usize,
    /// Attention heads; must divide `d_model`.
    pub num_heads: usize,
    pub mlp_hidden: usize,
    pub mlp_out: usize,
    /// Classifier input width; must equal `mlp_out`.
    pub classifier_in: usize,
    pub num_classes: usize,
    pub head_mode: HeadMode,
    pub preset: Preset,
    /// Learned positional table of shape (T+m)×d_model when enabled.
    pub positional_encoding: bool,
    /// Pool the classifier input over memory rows as well as the current
    /// segment (default pools over the current segment only).
    pub pool_all_rows: bool,
}

impl ModelConfig {
    /// Preset matching the forward equations (MLP 64→64→16).
    pub fn equation() -> Self {
        Self {
            segment_len: 8,
            memory_len: 8,
            d_in: FEATURE_DIM,
            d_model: 64,
            num_heads: 4,
            mlp_hidden: 64,
            mlp_out: 16,
            classifier_in: 16,
            num_classes: NUM_CLASSES,
            head_mode: HeadMode::Softmax,
            preset: Preset::Equation,
            positional_encoding: false,
            pool_all_rows: false,
        }
    }

    /// Preset matching the published cost table (MLP 64→256→64).
    pub fn table() -> Self {
        Self {
            mlp_hidden: 256,
            mlp_out: 64,
            classifier_in: 64,
            preset: Preset::Table,
            ..Self::equation()
        }
    }

    /// Total token count seen by streaming attention.
    pub fn total_tokens(&self) -> usize {
        self.segment_len + self.memory_len
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("segment_len", self.segment_len),
            ("d_in", self.d_in),
            ("d_model", self.d_model),
            ("num_heads", self.num_heads),
            ("mlp_hidden", self.mlp_hidden),
            ("mlp_out", self.mlp_out),
            ("classifier_in", self.classifier_in),
            ("num_classes", self.num_classes),
        ];
        for (name, v) in dims {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be >= 1, got {v}")));
            }
        }
        if self.d_model % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "num_heads {} must divide d_model {}",
                self.num_heads, self.d_model
            )));
        }
        if self.classifier_in != self.mlp_out {
            return Err(Error::Config(format!(
                "classifier_in {} must equal mlp_out {}",
                self.classifier_in, self.mlp_out
            )));
        }
        let preset_shape = match self.preset {
            Preset::Equation => Some((64, 64, 16, 16)),
            Preset::Table => Some((64, 256, 64, 64)),
            Preset::Custom => None,
        };
        if let Some((d, h, o, c)) = preset_shape {
            if (self.d_model, self.mlp_hidden, self.mlp_out, self.classifier_in) != (d, h, o, c) {
                return Err(Error::Config(format!(
                    "preset {:?} fixes (d_model, mlp_hidden, mlp_out, classifier_in) = ({d}, {h}, {o}, {c})",
                    self.preset
                )));
            }
        }
        Ok(())
    }
}

/// Learnable tensors. Shapes are fixed by [`ModelConfig`]; see
/// [`ModelWeights::tensors`] for the canonical naming and ordering used by
/// the optimizer and the checkpoint format.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub w_proj: Array2<f64>,
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w_o: Array2<f64>,
    pub b_o: Array1<f64>,
    pub pos: Option<Array2<f64>>,
}

/// Gradients mirror the weight shapes exactly, so the same container works
/// for both.
pub type GradientSet = ModelWeights;

impl ModelWeights {
    /// Zero-initialized weights (also used as a gradient accumulator).
    pub fn zeros(cfg: &ModelConfig) -> Self {
        Self {
            w_proj: Array2::zeros((cfg.d_in, cfg.d_model)),
            w_q: Array2::zeros((cfg.d_model, cfg.d_model)),
            w_k: Array2::zeros((cfg.d_model, cfg.d_model)),
            w_v: Array2::zeros((cfg.d_model, cfg.d_model)),
            w1: Array2::zeros((cfg.d_model, cfg.mlp_hidden)),
            b1: Array1::zeros(cfg.mlp_hidden),
            w2: Array2::zeros((cfg.mlp_hidden, cfg.mlp_out)),
            b2: Array1::zeros(cfg.mlp_out),
            w_o: Array2::zeros((cfg.classifier_in, cfg.num_classes)),
            b_o: Array1::zeros(cfg.num_classes),
            pos: cfg
                .positional_encoding
                .then(|| Array2::zeros((cfg.total_tokens(), cfg.d_model))),
        }
    }

    /// Seeded He-style uniform initialization (limit √(6/fan_in) per matrix,
    /// zero biases). The draw order is fixed so a seed fully determines the
    /// weights.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        fn he_uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
            let limit = (6.0 / rows as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit))
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w_proj = he_uniform(&mut rng, cfg.d_in, cfg.d_model);
        let w_q = he_uniform(&mut rng, cfg.d_model, cfg.d_model);
        let w_k = he_uniform(&mut rng, cfg.d_model, cfg.d_model);
        let w_v = he_uniform(&mut rng, cfg.d_model, cfg.d_model);
        let w1 = he_uniform(&mut rng, cfg.d_model, cfg.mlp_hidden);
        let w2 = he_uniform(&mut rng, cfg.mlp_hidden, cfg.mlp_out);
        let w_o = he_uniform(&mut rng, cfg.classifier_in, cfg.num_classes);
        let pos = if cfg.positional_encoding {
            let limit = (6.0 / cfg.d_model as f64).sqrt();
            Some(Array2::from_shape_fn(
                (cfg.total_tokens(), cfg.d_model),
                |_| rng.gen_range(-limit..limit),
            ))
        } else {
            None
        };
        Self {
            w_proj,
            w_q,
            w_k,
            w_v,
            w1,
            b1: Array1::zeros(cfg.mlp_hidden),
            w2,
            b2: Array1::zeros(cfg.mlp_out),
            w_o,
            b_o: Array1::zeros(cfg.num_classes),
            pos,
        }
    }

    /// Named tensors in canonical order: name, shape, row-major data.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let mut out: Vec<(&'static str, Vec<usize>, &[f64])> = vec![
            ("w_proj", self.w_proj.shape().to_vec(), self.w_proj.as_slice().unwrap()),
            ("w_q", self.w_q.shape().to_vec(), self.w_q.as_slice().unwrap()),
            ("w_k", self.w_k.shape().to_vec(), self.w_k.as_slice().unwrap()),
            ("w_v", self.w_v.shape().to_vec(), self.w_v.as_slice().unwrap()),
            ("w1", self.w1.shape().to_vec(), self.w1.as_slice().unwrap()),
            ("b1", self.b1.shape().to_vec(), self.b1.as_slice().unwrap()),
            ("w2", self.w2.shape().to_vec(), self.w2.as_slice().unwrap()),
            ("b2", self.b2.shape().to_vec(), self.b2.as_slice().unwrap()),
            ("w_o", self.w_o.shape().to_vec(), self.w_o.as_slice().unwrap()),
            ("b_o", self.b_o.shape().to_vec(), self.b_o.as_slice().unwrap()),
        ];
        if let Some(pos) = &self.pos {
            out.push(("pos", pos.shape().to_vec(), pos.as_slice().unwrap()));
        }
        out
    }

    /// Mutable flat views in the same order as [`ModelWeights::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = vec![
            ("w_proj", self.w_proj.as_slice_mut().unwrap()),
            ("w_q", self.w_q.as_slice_mut().unwrap()),
            ("w_k", self.w_k.as_slice_mut().unwrap()),
            ("w_v", self.w_v.as_slice_mut().unwrap()),
            ("w1", self.w1.as_slice_mut().unwrap()),
            ("b1", self.b1.as_slice_mut().unwrap()),
            ("w2", self.w2.as_slice_mut().unwrap()),
            ("b2", self.b2.as_slice_mut().unwrap()),
            ("w_o", self.w_o.as_slice_mut().unwrap()),
            ("b_o", self.b_o.as_slice_mut().unwrap()),
        ];
        if let Some(pos) = &mut self.pos {
            out.push(("pos", pos.as_slice_mut().unwrap()));
        }
        out
    }

    /// Total learnable parameter count.
    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    pub fn validate_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let checks: Vec<(&str, &[usize], Vec<usize>)> = vec![
            ("w_proj", self.w_proj.shape(), vec![cfg.d_in, cfg.d_model]),
            ("w_q", self.w_q.shape(), vec![cfg.d_model, cfg.d_model]),
            ("w_k", self.w_k.shape(), vec![cfg.d_model, cfg.d_model]),
            ("w_v", self.w_v.shape(), vec![cfg.d_model, cfg.d_model]),
            ("w1", self.w1.shape(), vec![cfg.d_model, cfg.mlp_hidden]),
            ("b1", self.b1.shape(), vec![cfg.mlp_hidden]),
            ("w2", self.w2.shape(), vec![cfg.mlp_hidden, cfg.mlp_out]),
            ("b2", self.b2.shape(), vec![cfg.mlp_out]),
            ("w_o", self.w_o.shape(), vec![cfg.classifier_in, cfg.num_classes]),
            ("b_o", self.b_o.shape(), vec![cfg.num_classes]),
        ];
        for (name, got, want) in checks {
            if got != want.as_slice() {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: expected {want:?}, got {got:?}"
                )));
            }
        }
        match (&self.pos, cfg.positional_encoding) {
            (Some(p), true) => {
                let want = [cfg.total_tokens(), cfg.d_model];
                if p.shape() != want {
                    return Err(Error::ShapeMismatch(format!(
                        "pos: expected {want:?}, got {:?}",
                        p.shape()
                    )));
                }
            }
            (None, false) => {}
            (Some(_), false) => {
                return Err(Error::ShapeMismatch(
                    "positional table present but positional_encoding is off".into(),
                ))
            }
            (None, true) => {
                return Err(Error::ShapeMismatch(
                    "positional_encoding is on but no positional table".into(),
                ))
            }
        }
        if self.tensors().iter().any(|(_, _, d)| d.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("model weights contain NaN/Inf".into()));
        }
        Ok(())
    }
}

/// Output probabilities of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbs {
    pub p: Vec<f64>,
    pub mode: HeadMode,
}

/// Rolling store of the last `m` mean-pooled segment context vectors,
/// oldest first. Slots start as zero vectors; `valid_count` tracks how many
/// hold real history.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    rows: Array2<f64>,
    valid: usize,
}

impl MemoryBank {
    pub fn new(memory_len: usize) -> Self {
        Self {
            rows: Array2::zeros((memory_len, FEATURE_DIM)),
            valid: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn valid_count(&self) -> usize {
        self.valid
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    /// Appends the newest context vector, discarding the oldest row.
    pub fn update(&mut self, context: &Array1<f64>) {
        let m = self.rows.nrows();
        if m == 0 {
            return;
        }
        for i in 0..m - 1 {
            let next = self.rows.row(i + 1).to_owned();
            self.rows.row_mut(i).assign(&next);
        }
        self.rows.row_mut(m - 1).assign(context);
        self.valid = (self.valid + 1).min(m);
    }

    pub fn reset(&mut self) {
        self.rows.fill(0.0);
        self.valid = 0;
    }

    /// Overwrites the whole bank; used by offline evaluation and tests.
    pub fn set_rows(&mut self, rows: Array2<f64>, valid: usize) -> Result<()> {
        if rows.shape() != self.rows.shape() {
            return Err(Error::ShapeMismatch(format!(
                "memory bank expects {:?}, got {:?}",
                self.rows.shape(),
                rows.shape()
            )));
        }
        self.valid = valid.min(rows.nrows());
        self.rows = rows;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_mismatch_is_rejected() {
        assert!(ModelConfig::equation().validate().is_ok());
        assert!(ModelConfig::table().validate().is_ok());

        let mut bad = ModelConfig::equation();
        bad.mlp_hidden = 128;
        assert!(bad.validate().is_err());

        let mut heads = ModelConfig::equation();
        heads.num_heads = 3;
        assert!(heads.validate().is_err());

        let mut cls = ModelConfig::equation();
        cls.preset = Preset::Custom;
        cls.classifier_in = 8;
        assert!(cls.validate().is_err());
    }

    #[test]
    fn init_is_seed_deterministic() {
        let cfg = ModelConfig::equation();
        let a = ModelWeights::init(&cfg, 7);
        let b = ModelWeights::init(&cfg, 7);
        assert_eq!(a, b);
        let c = ModelWeights::init(&cfg, 8);
        assert_ne!(a, c);
        a.validate_shapes(&cfg).unwrap();
    }

    #[test]
    fn memory_bank_rolls_chronologically() {
        let mut bank = MemoryBank::new(3);
        assert_eq!(bank.valid_count(), 0);
        for k in 1..=4 {
            bank.update(&Array1::from_elem(FEATURE_DIM, k as f64));
        }
        assert_eq!(bank.valid_count(), 3);
        let rows = bank.rows();
        assert_eq!(rows[[0, 0]], 2.0);
        assert_eq!(rows[[1, 0]], 3.0);
        assert_eq!(rows[[2, 0]], 4.0);
        bank.reset();
        assert_eq!(bank.valid_count(), 0);
        assert_eq!(bank.rows().sum(), 0.0);
    }

    #[test]
    fn zero_length_memory_bank_is_inert() {
        let mut bank = MemoryBank::new(0);
        bank.update(&Array1::zeros(FEATURE_DIM));
        assert_eq!(bank.valid_count(), 0);
        assert_eq!(bank.rows().nrows(), 0);
    }

    #[test]
    fn param_count_matches_shapes() {
        let cfg = ModelConfig::equation();
        let w = ModelWeights::init(&cfg, 0);
        let expected = 16 * 64 + 3 * 64 * 64 + 64 * 64 + 64 + 64 * 16 + 16 + 16 * 4 + 4;
        assert_eq!(w.param_count(), expected);
    }
}
