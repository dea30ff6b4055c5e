//! Quantization fidelity and cost accounting.

mod common;

use common::{seeded_matrix, seeded_window};
use proptest::prelude::*;
use urostream::cost::{bench_latency, count_flops, count_memory};
use urostream::engine::{decode_labels, Engine, EngineMode};
use urostream::features::{fit_norm, trace_features, NormStats, RatioPairSet, DEFAULT_RATIO_EPS};
use urostream::forward::segment_forward;
use urostream::model::{ModelConfig, ModelWeights};
use urostream::quant::{dequantize, quantize, weight_payload_bytes};
use urostream::synth::{generate, TraceConfig};

#[test]
fn quantized_forward_agrees_with_float_on_most_segments() {
    let cfg = ModelConfig::equation();
    let weights = ModelWeights::init(&cfg, 2030);
    let deq = dequantize(&quantize(&weights).unwrap()).unwrap();

    let mut agree = 0usize;
    let mut total_dev = 0.0f64;
    let n = 100;
    for seed in 0..n {
        let segment = seeded_matrix(3000 + seed, 8, 16);
        let float_probs = segment_forward(segment.view(), &weights, &cfg).unwrap();
        let quant_probs = segment_forward(segment.view(), &deq, &cfg).unwrap();
        let float_labels = decode_labels(&float_probs, 0.5);
        let quant_labels = decode_labels(&quant_probs, 0.5);
        if float_labels == quant_labels {
            agree += 1;
        }
        total_dev += float_probs
            .p
            .iter()
            .zip(&quant_probs.p)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 4.0;
    }
    let mean_dev = total_dev / n as f64;
    println!("quantized label agreement {agree}/{n}, mean |Δp| {mean_dev:.4}");
    assert!(agree >= 95, "only {agree}/{n} segments agreed");
}

#[test]
fn quantized_checkpoint_payload_under_50kb_both_presets() {
    for cfg in [ModelConfig::equation(), ModelConfig::table()] {
        let weights = ModelWeights::init(&cfg, 11);
        let payload = weight_payload_bytes(&quantize(&weights).unwrap());
        assert!(
            payload < 50 * 1024,
            "{:?}: payload {payload} bytes",
            cfg.preset
        );
    }
}

#[test]
fn flops_are_independent_of_stream_position() {
    // The report is a pure function of the config; there is no state that
    // could grow with how much has been streamed.
    let cfg = ModelConfig::table();
    let first = count_flops(&cfg).unwrap();
    let after_many = count_flops(&cfg).unwrap();
    assert_eq!(first, after_many);
    assert_eq!(count_memory(&cfg).unwrap(), first);
}

#[test]
fn latency_benchmark_orders_percentiles() {
    let cfg = ModelConfig::equation();
    let weights = ModelWeights::init(&cfg, 21);
    let trace = generate(&TraceConfig {
        length: 110 * 8 + 16,
        seed: 3,
        ..TraceConfig::default()
    })
    .unwrap();
    let mut engine = Engine::new(
        cfg,
        NormStats::identity(),
        EngineMode::Streaming,
        RatioPairSet::default(),
        DEFAULT_RATIO_EPS,
        0.5,
    )
    .unwrap();
    let report = bench_latency(&mut engine, &weights, &trace.samples, 3).unwrap();
    assert!(report.p50_ms <= report.p99_ms);
    assert!(report.p99_ms <= report.max_ms);
    assert!(report.mean_ms > 0.0);
    assert_eq!(report.per_segment_ms.len(), 110 - 3 + 2);
}

#[test]
fn latency_rejects_short_traces() {
    let cfg = ModelConfig::equation();
    let weights = ModelWeights::init(&cfg, 22);
    let mut engine = Engine::new(
        cfg,
        NormStats::identity(),
        EngineMode::Streaming,
        RatioPairSet::default(),
        DEFAULT_RATIO_EPS,
        0.5,
    )
    .unwrap();
    let short = seeded_window(1, 200);
    assert!(bench_latency(&mut engine, &weights, &short, 0).is_err());
}

#[test]
fn quantization_of_trained_pipeline_agrees_end_to_end() {
    // Same check through the full engine on a realistic trace.
    let trace = generate(&TraceConfig {
        length: 2400,
        seed: 31,
        ..TraceConfig::default()
    })
    .unwrap();
    let cfg = ModelConfig::equation();
    let weights = ModelWeights::init(&cfg, 41);
    let features = trace_features(&trace.samples, &RatioPairSet::default(), DEFAULT_RATIO_EPS).unwrap();
    let norm = fit_norm(&features).unwrap();
    let deq = dequantize(&quantize(&weights).unwrap()).unwrap();

    let mk_engine = || {
        Engine::new(
            cfg.clone(),
            norm.clone(),
            EngineMode::Streaming,
            RatioPairSet::default(),
            DEFAULT_RATIO_EPS,
            0.5,
        )
        .unwrap()
    };
    let mut float_engine = mk_engine();
    let mut quant_engine = mk_engine();
    let float_preds =
        urostream::engine::run_trace(&mut float_engine, &trace.samples, &weights).unwrap();
    let quant_preds =
        urostream::engine::run_trace(&mut quant_engine, &trace.samples, &deq).unwrap();
    let agree = float_preds
        .iter()
        .zip(&quant_preds)
        .filter(|(a, b)| a.labels == b.labels)
        .count();
    assert!(
        agree * 100 >= float_preds.len() * 95,
        "{agree}/{} engine-level agreement",
        float_preds.len()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn prop_dequantization_error_bounded_by_half_scale(
        data in proptest::collection::vec(-25.0f64..25.0, 1..200),
    ) {
        let rows = data.len();
        let m = ndarray::Array2::from_shape_vec((rows, 1), data.clone()).unwrap();
        let mut cfg = ModelConfig::equation();
        cfg.preset = urostream::model::Preset::Custom;
        let mut w = ModelWeights::zeros(&cfg);
        // Smuggle the arbitrary tensor in as the classifier weight: resize
        // the config so shapes stay consistent.
        cfg.classifier_in = rows;
        cfg.mlp_out = rows;
        cfg.num_classes = 1;
        w.w_o = m;
        let q = quantize(&w).unwrap();
        let back = dequantize(&q).unwrap();
        let max_abs = data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let scale = if max_abs > 0.0 { max_abs / 127.0 } else { 1.0 };
        for (a, b) in data.iter().zip(back.w_o.iter()) {
            prop_assert!((a - b).abs() <= scale / 2.0 + 1e-12);
        }
    }
}
