//! Windowing a labeled trace into training/evaluation segments.
//!
//! Training uses stride-1 sliding windows to maximize label utilization;
//! evaluation uses non-overlapping stride-T windows. Targets aggregate the
//! window's per-sample multi-hot labels by union (multi-label) and by a
//! threshold voting scheme (single-label). The streaming variant also
//! materializes the m teacher-forced memory contexts: mean pools of the
//! windows shifted back by whole segments, zeros where the trace does not
//! reach.

use ndarray::Array2;

use crate::engine::EngineMode;
use crate::error::{Error, Result};
use crate::features::{apply_norm, trace_features, NormStats, RatioPairSet, FEATURE_DIM};
use crate::label::{Label, MultiHot};
use crate::model::ModelConfig;
use crate::synth::LabeledTrace;

/// One training/evaluation example.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSegment {
    /// Normalized features, T×16, rows oldest to newest.
    pub features: Array2<f64>,
    /// Teacher-forced memory contexts (m×16), present for the streaming
    /// variant; rows oldest to newest, zero where history is unavailable.
    pub memory: Option<Array2<f64>>,
    /// Union of the window's per-sample labels (NONE iff no event).
    pub target_multi: MultiHot,
    /// Dominant class under threshold voting.
    pub target_single: Label,
}

/// Threshold voting: the non-NONE class active in the largest fraction of
/// samples wins if that fraction reaches `threshold`, else NONE. Ties break
/// by fixed priority VOID > DO > ABD.
pub fn vote_single_label(per_sample: &[MultiHot], threshold: f64) -> Label {
    debug_assert!(threshold > 0.0 && threshold <= 1.0);
    let n = per_sample.len().max(1) as f64;
    let mut best = Label::None;
    let mut best_count = 0usize;
    for class in [Label::Void, Label::Do, Label::Abd] {
        let count = per_sample.iter().filter(|r| r[class.index()]).count();
        if count > best_count {
            best = class;
            best_count = count;
        }
    }
    if best_count as f64 / n >= threshold {
        best
    } else {
        Label::None
    }
}

/// Union of per-sample multi-hot labels over a window.
pub fn union_labels(per_sample: &[MultiHot]) -> MultiHot {
    let mut row = [false; 4];
    for r in per_sample {
        for c in 1..4 {
            row[c] |= r[c];
        }
    }
    row[0] = !(row[1] || row[2] || row[3]);
    row
}

/// Builds the segment dataset for one trace.
///
/// `stride` is 1 for training windows and T for non-overlapping evaluation.
/// A trace shorter than T yields an empty dataset.
#[allow(clippy::too_many_arguments)]
pub fn build_dataset(
    trace: &LabeledTrace,
    stride: usize,
    variant: EngineMode,
    cfg: &ModelConfig,
    norm: &NormStats,
    pairs: &RatioPairSet,
    ratio_eps: f64,
    voting_threshold: f64,
) -> Result<Vec<LabeledSegment>> {
    if stride < 1 {
        return Err(Error::InvalidInput("stride must be >= 1".into()));
    }
    if !(voting_threshold > 0.0 && voting_threshold <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "voting threshold must lie in (0,1], got {voting_threshold}"
        )));
    }
    let t_len = cfg.segment_len;
    if trace.len() < t_len {
        return Ok(Vec::new());
    }

    let raw = trace_features(&trace.samples, pairs, ratio_eps)?;
    let normalized: Vec<[f64; FEATURE_DIM]> =
        raw.iter().map(|f| apply_norm(f, norm).0).collect();

    let mut out = Vec::new();
    let mut end = t_len - 1;
    while end < trace.len() {
        let start = end + 1 - t_len;
        let features = Array2::from_shape_fn((t_len, FEATURE_DIM), |(i, j)| {
            normalized[start + i][j]
        });
        let window_labels = &trace.labels[start..=end];
        let target_multi = union_labels(window_labels);
        let target_single = vote_single_label(window_labels, voting_threshold);
        let memory = match variant {
            EngineMode::SegmentLevel => None,
            EngineMode::Streaming => {
                let m = cfg.memory_len;
                let mut bank = Array2::zeros((m, FEATURE_DIM));
                for j in 1..=m {
                    let offset = j * t_len;
                    if start < offset {
                        continue; // row stays zero during warm-up
                    }
                    let ps = start - offset;
                    for i in 0..t_len {
                        for d in 0..FEATURE_DIM {
                            bank[[m - j, d]] += normalized[ps + i][d] / t_len as f64;
                        }
                    }
                }
                Some(bank)
            }
        };
        out.push(LabeledSegment {
            features,
            memory,
            target_multi,
            target_single,
        });
        end += stride;
    }
    Ok(out)
}
