//! Training: losses, batched explicit gradients, AdamW, and evaluation.
//!
//! Softmax heads train with cross-entropy against voted single labels;
//! sigmoid heads with mean binary cross-entropy against multi-hot targets.
//! The streaming variant trains on teacher-forced memory contexts
//! precomputed from the feature trace, so no gradient flows across segment
//! boundaries. Everything is seeded and single-threaded with a fixed
//! reduction order: identical seeds give bit-identical weight trajectories.

mod adamw;
mod dataset;
mod grad;
mod metrics;

pub use adamw::AdamW;
pub use dataset::{build_dataset, union_labels, vote_single_label, LabeledSegment};
pub use grad::{assemble_tokens, backward, forward_cached, ForwardCache};
pub use metrics::{evaluate, ClassMetrics, MetricsReport};

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::EngineMode;
use crate::error::{Error, Result};
use crate::label::{Label, MultiHot};
use crate::model::{ClassProbs, GradientSet, HeadMode, ModelConfig, ModelWeights};

/// Probability clamp applied inside every logarithm.
const PROB_EPS: f64 = 1e-12;

/// Optimization hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adamw_eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub voting_threshold: f64,
    /// Weight per-class loss terms by inverse class frequency.
    pub class_weighting: bool,
}

impl TrainConfig {
    /// Defaults per variant: learning rate 1e-3 for segment-level training,
    /// 1e-6 for streaming.
    pub fn for_variant(variant: EngineMode) -> Self {
        Self {
            learning_rate: match variant {
                EngineMode::SegmentLevel => 1e-3,
                EngineMode::Streaming => 1e-6,
            },
            epochs: 100,
            batch_size: 64,
            beta1: 0.9,
            beta2: 0.999,
            adamw_eps: 1e-8,
            weight_decay: 0.01,
            seed: 42,
            voting_threshold: 0.5,
            class_weighting: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        // learning_rate 0 is allowed: it makes training a documented no-op.
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.voting_threshold > 0.0 && self.voting_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "voting threshold must lie in (0,1], got {}",
                self.voting_threshold
            )));
        }
        Ok(())
    }
}

/// Training target matching the head mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Single(Label),
    Multi(MultiHot),
}

impl Target {
    pub fn for_segment(seg: &LabeledSegment, head: HeadMode) -> Target {
        match head {
            HeadMode::Softmax => Target::Single(seg.target_single),
            HeadMode::Sigmoid => Target::Multi(seg.target_multi),
        }
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Loss of one prediction: cross-entropy (softmax head, single label) or
/// mean binary cross-entropy over the four outputs (sigmoid head).
pub fn loss(probs: &ClassProbs, target: &Target) -> f64 {
    weighted_loss(probs, target, &[1.0; 4])
}

fn weighted_loss(probs: &ClassProbs, target: &Target, class_weights: &[f64; 4]) -> f64 {
    match (probs.mode, target) {
        (HeadMode::Softmax, Target::Single(label)) => {
            -class_weights[label.index()] * clamp_prob(probs.p[label.index()]).ln()
        }
        (HeadMode::Sigmoid, Target::Multi(row)) => {
            let mut total = 0.0;
            for c in 0..4 {
                let p = clamp_prob(probs.p[c]);
                let y = f64::from(row[c]);
                total -= class_weights[c] * (y * p.ln() + (1.0 - y) * (1.0 - p).ln());
            }
            total / 4.0
        }
        (HeadMode::Softmax, Target::Multi(row)) => {
            // Fall back to the dominant class when given a multi-hot target.
            let label = Label::ALL
                .iter()
                .rev()
                .find(|l| row[l.index()])
                .copied()
                .unwrap_or(Label::None);
            -class_weights[label.index()] * clamp_prob(probs.p[label.index()]).ln()
        }
        (HeadMode::Sigmoid, Target::Single(label)) => {
            let mut row = [false; 4];
            row[label.index()] = true;
            weighted_loss(probs, &Target::Multi(row), class_weights)
        }
    }
}

/// Gradient of the loss with respect to the logits.
fn dlogits(probs: &ClassProbs, target: &Target, class_weights: &[f64; 4]) -> Array1<f64> {
    match (probs.mode, target) {
        (HeadMode::Softmax, Target::Single(label)) => {
            let w = class_weights[label.index()];
            let mut d = Array1::from_iter(probs.p.iter().map(|&p| w * p));
            d[label.index()] -= w;
            d
        }
        (HeadMode::Sigmoid, Target::Multi(row)) => Array1::from_shape_fn(4, |c| {
            class_weights[c] * (probs.p[c] - f64::from(row[c])) / 4.0
        }),
        (HeadMode::Softmax, Target::Multi(row)) => {
            let label = Label::ALL
                .iter()
                .rev()
                .find(|l| row[l.index()])
                .copied()
                .unwrap_or(Label::None);
            dlogits(probs, &Target::Single(label), class_weights)
        }
        (HeadMode::Sigmoid, Target::Single(label)) => {
            let mut row = [false; 4];
            row[label.index()] = true;
            dlogits(probs, &Target::Multi(row), class_weights)
        }
    }
}

/// Mean loss and mean gradients over a batch of segments.
pub fn grad_batch(
    weights: &ModelWeights,
    batch: &[&LabeledSegment],
    cfg: &ModelConfig,
    class_weights: &[f64; 4],
) -> Result<(GradientSet, f64)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("gradient batch is empty".into()));
    }
    let mut grads = ModelWeights::zeros(cfg);
    let mut total_loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for seg in batch {
        let tokens = assemble_tokens(&seg.features, seg.memory.as_ref(), cfg)?;
        let cache = forward_cached(tokens.view(), weights, cfg)?;
        let target = Target::for_segment(seg, cfg.head_mode);
        total_loss += weighted_loss(&cache.probs, &target, class_weights) * scale;
        let d = dlogits(&cache.probs, &target, class_weights);
        backward(&cache, weights, cfg, &d, scale, &mut grads);
    }
    Ok((grads, total_loss))
}

/// Inverse-frequency class weights (mean 1) from the dataset targets.
pub fn inverse_frequency_weights(dataset: &[LabeledSegment], head: HeadMode) -> [f64; 4] {
    let mut counts = [0usize; 4];
    for seg in dataset {
        match head {
            HeadMode::Softmax => counts[seg.target_single.index()] += 1,
            HeadMode::Sigmoid => {
                for c in 0..4 {
                    if seg.target_multi[c] {
                        counts[c] += 1;
                    }
                }
            }
        }
    }
    let mut weights = [0.0; 4];
    for c in 0..4 {
        weights[c] = 1.0 / counts[c].max(1) as f64;
    }
    let mean = weights.iter().sum::<f64>() / 4.0;
    for w in &mut weights {
        *w /= mean;
    }
    weights
}

/// Trains a model from seeded initialization; returns the weights and the
/// per-epoch mean loss curve. Aborts with a diagnostic if the loss turns
/// NaN.
pub fn train(
    dataset: &[LabeledSegment],
    cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    variant: EngineMode,
) -> Result<(ModelWeights, Vec<f64>)> {
    cfg.validate()?;
    train_cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidInput("training dataset is empty".into()));
    }
    let expects_memory = variant == EngineMode::Streaming;
    for seg in dataset {
        if seg.memory.is_some() != expects_memory {
            return Err(Error::InvalidInput(
                "dataset memory contexts do not match the training variant".into(),
            ));
        }
    }

    let class_weights = if train_cfg.class_weighting {
        inverse_frequency_weights(dataset, cfg.head_mode)
    } else {
        [1.0; 4]
    };

    let mut weights = ModelWeights::init(cfg, train_cfg.seed);
    let mut optimizer = AdamW::new(
        train_cfg.learning_rate,
        train_cfg.beta1,
        train_cfg.beta2,
        train_cfg.adamw_eps,
        train_cfg.weight_decay,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    let mut curve = Vec::with_capacity(train_cfg.epochs);

    for epoch in 0..train_cfg.epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in indices.chunks(train_cfg.batch_size) {
            let batch: Vec<&LabeledSegment> = chunk.iter().map(|&i| &dataset[i]).collect();
            let (grads, batch_loss) = grad_batch(&weights, &batch, cfg, &class_weights)?;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "loss became {batch_loss} in epoch {epoch}"
                )));
            }
            optimizer.step(&mut weights, &grads);
            epoch_loss += batch_loss * chunk.len() as f64;
        }
        curve.push(epoch_loss / dataset.len() as f64);
    }
    Ok((weights, curve))
}

/// Loss-curve CSV (`epoch,mean_loss`).
pub fn loss_curve_csv(curve: &[f64]) -> String {
    let mut s = String::from("epoch,mean_loss\n");
    for (e, l) in curve.iter().enumerate() {
        s.push_str(&format!("{e},{l}\n"));
    }
    s
}
