//! Analytic per-segment FLOP and memory accounting, plus wall-clock
//! latency benchmarking of the streaming engine.
//!
//! FLOP counts use the multiply-accumulate = 2 FLOPs convention and charge
//! each segment its marginal work: linear layers over the T new tokens, and
//! attention as the two matrix products QKᵀ and A·V with T query rows
//! against the full T+m token set (cached context keys cost no new
//! projection work). Softmax and activation evaluations are excluded.
//! Memory counts assume 8-bit weights (one byte per entry, biases and the
//! m×16 context buffer reported separately).

use std::time::Instant;

use crate::engine::{Engine, Prediction};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelWeights};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostRow {
    pub component: &'static str,
    pub flops: u64,
    pub memory_bytes: u64,
}

/// Per-component costs; totals are exact row sums.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
    /// The rolling m×16 context buffer, reported separately from weights.
    pub memory_buffer_bytes: u64,
}

impl CostReport {
    pub fn total_flops(&self) -> u64 {
        self.rows.iter().map(|r| r.flops).sum()
    }

    pub fn total_memory_bytes(&self) -> u64 {
        self.rows.iter().map(|r| r.memory_bytes).sum()
    }

    pub fn row(&self, component: &str) -> Option<&CostRow> {
        self.rows.iter().find(|r| r.component == component)
    }

    /// Markdown table in the Component / FLOPs (M) / Mem. (kB) layout.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        s.push_str("| Component | FLOPs (M) | Mem. (kB) |\n");
        s.push_str("|---|---|---|\n");
        for r in &self.rows {
            s.push_str(&format!(
                "| {} | {} | {} |\n",
                r.component,
                format_mflops(r.flops),
                format_kb(r.memory_bytes)
            ));
        }
        s.push_str(&format!(
            "| **Total** | **{}** | **{}** |\n",
            format_mflops(self.total_flops()),
            format_kb(self.total_memory_bytes())
        ));
        s.push_str(&format!(
            "\nMemory buffer: {} kB\n",
            format_kb(self.memory_buffer_bytes)
        ));
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("component,flops,memory_bytes\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{}\n", r.component, r.flops, r.memory_bytes));
        }
        s.push_str(&format!(
            "TOTAL,{},{}\n",
            self.total_flops(),
            self.total_memory_bytes()
        ));
        s.push_str(&format!("MEMORY_BUFFER,0,{}\n", self.memory_buffer_bytes));
        s
    }
}

pub fn format_mflops(flops: u64) -> String {
    let m = flops as f64 / 1e6;
    if m >= 0.01 {
        format!("{m:.3}")
    } else {
        format!("{m:.4}")
    }
}

pub fn format_kb(bytes: u64) -> String {
    let kb = bytes as f64 / 1024.0;
    let s = format!("{kb:.3}");
    let trimmed = s.trim_end_matches('0').trim_end_matches('.');
    trimmed.to_string()
}

fn cost_rows(cfg: &ModelConfig) -> Vec<CostRow> {
    let t = cfg.segment_len as u64;
    let tokens = (cfg.segment_len + cfg.memory_len) as u64;
    let d_in = cfg.d_in as u64;
    let d = cfg.d_model as u64;
    let h = cfg.mlp_hidden as u64;
    let o = cfg.mlp_out as u64;
    let c = cfg.num_classes as u64;
    vec![
        CostRow {
            component: "Embedding layer",
            flops: t * d_in * d * 2,
            memory_bytes: d_in * d,
        },
        CostRow {
            component: "Q/K/V projections",
            flops: 3 * t * d * d * 2,
            memory_bytes: 3 * d * d,
        },
        CostRow {
            component: "MHSA",
            flops: 2 * t * tokens * d * 2,
            memory_bytes: 0,
        },
        CostRow {
            component: "Feedforward MLP",
            flops: t * (d * h + h * o) * 2,
            memory_bytes: d * h + h * o,
        },
        CostRow {
            component: "Classifier head",
            flops: cfg.classifier_in as u64 * c * 2,
            memory_bytes: cfg.classifier_in as u64 * c,
        },
    ]
}

/// Analytic FLOP counts per segment. Pure in the config: identical configs
/// give identical reports, independent of anything streamed so far.
pub fn count_flops(cfg: &ModelConfig) -> Result<CostReport> {
    cfg.validate()?;
    Ok(CostReport {
        rows: cost_rows(cfg),
        memory_buffer_bytes: (cfg.memory_len * cfg.d_in) as u64,
    })
}

/// Analytic 8-bit weight footprint per component.
pub fn count_memory(cfg: &ModelConfig) -> Result<CostReport> {
    count_flops(cfg)
}

/// Wall-clock per-segment latency distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub per_segment_ms: Vec<f64>,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    pub host: String,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Runs the engine over the trace, timing each segment (the T ingest steps
/// plus the forward pass). The first `warmup_segments` are excluded from
/// the distribution.
pub fn bench_latency(
    engine: &mut Engine,
    weights: &ModelWeights,
    samples: &[f64],
    warmup_segments: usize,
) -> Result<LatencyReport> {
    let t = engine.config().segment_len;
    let total_segments = samples.len() / t;
    if total_segments < 100 {
        return Err(Error::InvalidInput(format!(
            "latency benchmark needs at least 100 segments, trace provides {total_segments}"
        )));
    }
    let mut per_segment = Vec::with_capacity(total_segments);
    let mut acc = 0.0f64;
    for &x in samples {
        let start = Instant::now();
        let pred: Option<Prediction> = engine.step(x, weights)?;
        acc += start.elapsed().as_secs_f64() * 1e3;
        if pred.is_some() {
            per_segment.push(acc);
            acc = 0.0;
        }
    }
    if per_segment.len() <= warmup_segments {
        return Err(Error::InvalidInput(
            "warm-up exclusion leaves no measured segments".into(),
        ));
    }
    let measured: Vec<f64> = per_segment[warmup_segments..].to_vec();
    let mut sorted = measured.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(LatencyReport {
        mean_ms: measured.iter().sum::<f64>() / measured.len() as f64,
        p50_ms: percentile(&sorted, 0.50),
        p99_ms: percentile(&sorted, 0.99),
        max_ms: *sorted.last().unwrap(),
        per_segment_ms: measured,
        host: format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
    })
}

impl LatencyReport {
    pub fn summary(&self) -> String {
        format!(
            "per-segment latency on {}: mean {:.3} ms, p50 {:.3} ms, p99 {:.3} ms, max {:.3} ms ({} segments)",
            self.host,
            self.mean_ms,
            self.p50_ms,
            self.p99_ms,
            self.max_ms,
            self.per_segment_ms.len()
        )
    }
}
