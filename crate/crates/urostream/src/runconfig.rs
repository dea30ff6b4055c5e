//! Flat key-value run configuration.
//!
//! One `key = value` pair per line, `#` comments. Every tunable has a
//! documented default; unknown keys are hard errors so typos cannot pass
//! silently. [`RunConfig::to_key_values`] round-trips the full key set,
//! which doubles as the reference list of supported keys.

use std::path::Path;

use crate::engine::EngineMode;
use crate::error::{Error, Result};
use crate::features::{RatioPairSet, DEFAULT_RATIO_EPS};
use crate::model::{HeadMode, ModelConfig, Preset};
use crate::synth::{EventShape, TraceConfig};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // Model shape.
    pub preset: Preset,
    pub head_mode: HeadMode,
    pub num_heads: usize,
    pub segment_len: usize,
    pub memory_len: usize,
    pub d_model: usize,
    pub positional_encoding: bool,
    pub pool_all_rows: bool,
    // Features.
    pub ratio_pairs: RatioPairSet,
    pub ratio_eps: f64,
    // Training.
    pub learning_rate_segment: f64,
    pub learning_rate_streaming: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adamw_beta1: f64,
    pub adamw_beta2: f64,
    pub adamw_eps: f64,
    pub weight_decay: f64,
    pub class_weighting: bool,
    pub voting_threshold: f64,
    pub decode_threshold: f64,
    pub seed: u64,
    // Generator.
    pub gen_length: usize,
    pub baseline_start: f64,
    pub baseline_end: f64,
    pub noise_std: f64,
    pub do_rate: f64,
    pub void_rate: f64,
    pub abd_rate: f64,
    pub do_amp_min: f64,
    pub do_amp_max: f64,
    pub do_dur_min: usize,
    pub do_dur_max: usize,
    pub void_amp_min: f64,
    pub void_amp_max: f64,
    pub void_dur_min: usize,
    pub void_dur_max: usize,
    pub abd_amp_min: f64,
    pub abd_amp_max: f64,
    pub abd_dur_min: usize,
    pub abd_dur_max: usize,
    pub overlap_probability: f64,
    /// Marker-to-label delay (samples) in the long-memory generator.
    pub lm_delay: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let trace = TraceConfig::default();
        Self {
            preset: Preset::Equation,
            head_mode: HeadMode::Softmax,
            num_heads: 4,
            segment_len: 8,
            memory_len: 8,
            d_model: 64,
            positional_encoding: false,
            pool_all_rows: false,
            ratio_pairs: RatioPairSet::default(),
            ratio_eps: DEFAULT_RATIO_EPS,
            learning_rate_segment: 1e-3,
            learning_rate_streaming: 1e-6,
            epochs: 100,
            batch_size: 64,
            adamw_beta1: 0.9,
            adamw_beta2: 0.999,
            adamw_eps: 1e-8,
            weight_decay: 0.01,
            class_weighting: false,
            voting_threshold: 0.5,
            decode_threshold: 0.5,
            seed: 42,
            gen_length: trace.length,
            baseline_start: trace.baseline_start,
            baseline_end: trace.baseline_end,
            noise_std: trace.noise_std,
            do_rate: trace.do_rate,
            void_rate: trace.void_rate,
            abd_rate: trace.abd_rate,
            do_amp_min: trace.do_shape.amp.0,
            do_amp_max: trace.do_shape.amp.1,
            do_dur_min: trace.do_shape.dur.0,
            do_dur_max: trace.do_shape.dur.1,
            void_amp_min: trace.void_shape.amp.0,
            void_amp_max: trace.void_shape.amp.1,
            void_dur_min: trace.void_shape.dur.0,
            void_dur_max: trace.void_shape.dur.1,
            abd_amp_min: trace.abd_shape.amp.0,
            abd_amp_max: trace.abd_shape.amp.1,
            abd_dur_min: trace.abd_shape.dur.0,
            abd_dur_max: trace.abd_shape.dur.1,
            overlap_probability: trace.overlap_probability,
            lm_delay: 72,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(lineno, format!("expected 'key = value', got '{line}'")))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::parse(lineno, e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Sets one key from its textual value; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value '{value}' for key '{key}'")))
        }
        match key {
            "preset" => {
                self.preset = match value {
                    "equation" => Preset::Equation,
                    "table" => Preset::Table,
                    "custom" => Preset::Custom,
                    other => {
                        return Err(Error::Config(format!(
                            "preset must be equation|table|custom, got '{other}'"
                        )))
                    }
                }
            }
            "head_mode" => {
                self.head_mode = match value {
                    "softmax" => HeadMode::Softmax,
                    "sigmoid" => HeadMode::Sigmoid,
                    other => {
                        return Err(Error::Config(format!(
                            "head_mode must be softmax|sigmoid, got '{other}'"
                        )))
                    }
                }
            }
            "num_heads" => self.num_heads = num(key, value)?,
            "segment_len" => self.segment_len = num(key, value)?,
            "memory_len" => self.memory_len = num(key, value)?,
            "d_model" => self.d_model = num(key, value)?,
            "positional_encoding" => self.positional_encoding = parse_bool(key, value)?,
            "pool_all_rows" => self.pool_all_rows = parse_bool(key, value)?,
            "ratio_pairs" => self.ratio_pairs = RatioPairSet::parse(value)?,
            "ratio_eps" => self.ratio_eps = num(key, value)?,
            "learning_rate_segment" => self.learning_rate_segment = num(key, value)?,
            "learning_rate_streaming" => self.learning_rate_streaming = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "adamw_beta1" => self.adamw_beta1 = num(key, value)?,
            "adamw_beta2" => self.adamw_beta2 = num(key, value)?,
            "adamw_eps" => self.adamw_eps = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "class_weighting" => self.class_weighting = parse_bool(key, value)?,
            "voting_threshold" => self.voting_threshold = num(key, value)?,
            "decode_threshold" => self.decode_threshold = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "gen_length" => self.gen_length = num(key, value)?,
            "baseline_start" => self.baseline_start = num(key, value)?,
            "baseline_end" => self.baseline_end = num(key, value)?,
            "noise_std" => self.noise_std = num(key, value)?,
            "do_rate" => self.do_rate = num(key, value)?,
            "void_rate" => self.void_rate = num(key, value)?,
            "abd_rate" => self.abd_rate = num(key, value)?,
            "do_amp_min" => self.do_amp_min = num(key, value)?,
            "do_amp_max" => self.do_amp_max = num(key, value)?,
            "do_dur_min" => self.do_dur_min = num(key, value)?,
            "do_dur_max" => self.do_dur_max = num(key, value)?,
            "void_amp_min" => self.void_amp_min = num(key, value)?,
            "void_amp_max" => self.void_amp_max = num(key, value)?,
            "void_dur_min" => self.void_dur_min = num(key, value)?,
            "void_dur_max" => self.void_dur_max = num(key, value)?,
            "abd_amp_min" => self.abd_amp_min = num(key, value)?,
            "abd_amp_max" => self.abd_amp_max = num(key, value)?,
            "abd_dur_min" => self.abd_dur_min = num(key, value)?,
            "abd_dur_max" => self.abd_dur_max = num(key, value)?,
            "overlap_probability" => self.overlap_probability = num(key, value)?,
            "lm_delay" => self.lm_delay = num(key, value)?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// The full key set with current values, in parse-compatible form.
    pub fn to_key_values(&self) -> Vec<(&'static str, String)> {
        let preset = match self.preset {
            Preset::Equation => "equation",
            Preset::Table => "table",
            Preset::Custom => "custom",
        };
        let head = match self.head_mode {
            HeadMode::Softmax => "softmax",
            HeadMode::Sigmoid => "sigmoid",
        };
        vec![
            ("preset", preset.into()),
            ("head_mode", head.into()),
            ("num_heads", self.num_heads.to_string()),
            ("segment_len", self.segment_len.to_string()),
            ("memory_len", self.memory_len.to_string()),
            ("d_model", self.d_model.to_string()),
            ("positional_encoding", self.positional_encoding.to_string()),
            ("pool_all_rows", self.pool_all_rows.to_string()),
            ("ratio_pairs", self.ratio_pairs.to_string_spec()),
            ("ratio_eps", self.ratio_eps.to_string()),
            ("learning_rate_segment", self.learning_rate_segment.to_string()),
            ("learning_rate_streaming", self.learning_rate_streaming.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("adamw_beta1", self.adamw_beta1.to_string()),
            ("adamw_beta2", self.adamw_beta2.to_string()),
            ("adamw_eps", self.adamw_eps.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("class_weighting", self.class_weighting.to_string()),
            ("voting_threshold", self.voting_threshold.to_string()),
            ("decode_threshold", self.decode_threshold.to_string()),
            ("seed", self.seed.to_string()),
            ("gen_length", self.gen_length.to_string()),
            ("baseline_start", self.baseline_start.to_string()),
            ("baseline_end", self.baseline_end.to_string()),
            ("noise_std", self.noise_std.to_string()),
            ("do_rate", self.do_rate.to_string()),
            ("void_rate", self.void_rate.to_string()),
            ("abd_rate", self.abd_rate.to_string()),
            ("do_amp_min", self.do_amp_min.to_string()),
            ("do_amp_max", self.do_amp_max.to_string()),
            ("do_dur_min", self.do_dur_min.to_string()),
            ("do_dur_max", self.do_dur_max.to_string()),
            ("void_amp_min", self.void_amp_min.to_string()),
            ("void_amp_max", self.void_amp_max.to_string()),
            ("void_dur_min", self.void_dur_min.to_string()),
            ("void_dur_max", self.void_dur_max.to_string()),
            ("abd_amp_min", self.abd_amp_min.to_string()),
            ("abd_amp_max", self.abd_amp_max.to_string()),
            ("abd_dur_min", self.abd_dur_min.to_string()),
            ("abd_dur_max", self.abd_dur_max.to_string()),
            ("overlap_probability", self.overlap_probability.to_string()),
            ("lm_delay", self.lm_delay.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_key_values() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    /// Model configuration implied by this run config.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let mut cfg = match self.preset {
            Preset::Equation => ModelConfig::equation(),
            Preset::Table => ModelConfig::table(),
            Preset::Custom => ModelConfig {
                preset: Preset::Custom,
                ..ModelConfig::equation()
            },
        };
        cfg.segment_len = self.segment_len;
        cfg.memory_len = self.memory_len;
        cfg.num_heads = self.num_heads;
        cfg.head_mode = self.head_mode;
        cfg.positional_encoding = self.positional_encoding;
        cfg.pool_all_rows = self.pool_all_rows;
        if self.preset == Preset::Custom {
            cfg.d_model = self.d_model;
        } else if self.d_model != cfg.d_model {
            return Err(Error::Config(format!(
                "preset {preset:?} fixes d_model = {fixed}; set preset = custom to change it",
                preset = self.preset,
                fixed = cfg.d_model
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn trace_config(&self) -> TraceConfig {
        TraceConfig {
            length: self.gen_length,
            seed: self.seed,
            baseline_start: self.baseline_start,
            baseline_end: self.baseline_end,
            noise_std: self.noise_std,
            do_rate: self.do_rate,
            void_rate: self.void_rate,
            abd_rate: self.abd_rate,
            do_shape: EventShape {
                amp: (self.do_amp_min, self.do_amp_max),
                dur: (self.do_dur_min, self.do_dur_max),
            },
            void_shape: EventShape {
                amp: (self.void_amp_min, self.void_amp_max),
                dur: (self.void_dur_min, self.void_dur_max),
            },
            abd_shape: EventShape {
                amp: (self.abd_amp_min, self.abd_amp_max),
                dur: (self.abd_dur_min, self.abd_dur_max),
            },
            overlap_probability: self.overlap_probability,
        }
    }

    pub fn train_config(&self, variant: EngineMode) -> TrainConfig {
        TrainConfig {
            learning_rate: match variant {
                EngineMode::SegmentLevel => self.learning_rate_segment,
                EngineMode::Streaming => self.learning_rate_streaming,
            },
            epochs: self.epochs,
            batch_size: self.batch_size,
            beta1: self.adamw_beta1,
            beta2: self.adamw_beta2,
            adamw_eps: self.adamw_eps,
            weight_decay: self.weight_decay,
            seed: self.seed,
            voting_threshold: self.voting_threshold,
            class_weighting: self.class_weighting,
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!(
            "bad boolean '{other}' for key '{key}'"
        ))),
    }
}
