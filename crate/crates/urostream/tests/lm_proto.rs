//! Scratch prototype for the long-memory separation experiment.
mod common;

use std::time::Instant;
use urostream::engine::{run_trace, Engine, EngineMode};
use urostream::features::{fit_norm, trace_features, RatioPairSet, DEFAULT_RATIO_EPS};
use urostream::label::LabelSet;
use urostream::model::ModelConfig;
use urostream::synth::{long_memory_task, TraceConfig};
use urostream::train::{build_dataset, evaluate, train, vote_single_label, TrainConfig};

#[test]
#[ignore = "prototype"]
fn lm_experiment() {
    let t0 = Instant::now();
    let train_trace = long_memory_task(&TraceConfig {
        length: 6000,
        seed: 101,
        baseline_start: 10.0,
        baseline_end: 10.0,
        ..TraceConfig::default()
    })
    .unwrap();
    let eval_trace = long_memory_task(&TraceConfig {
        length: 16_000,
        seed: 202,
        baseline_start: 10.0,
        baseline_end: 10.0,
        ..TraceConfig::default()
    })
    .unwrap();

    let pairs = RatioPairSet::default();
    let feats = trace_features(&train_trace.samples, &pairs, DEFAULT_RATIO_EPS).unwrap();
    let norm = fit_norm(&feats).unwrap();
    println!("setup {:?}", t0.elapsed());

    for (variant, epochs, lr) in [
        (EngineMode::SegmentLevel, 30usize, 1e-3),
        (EngineMode::Streaming, 30, 1e-3),
    ] {
        let t1 = Instant::now();
        let cfg = ModelConfig::equation();
        let dataset = build_dataset(
            &train_trace, 1, variant, &cfg, &norm, &pairs, DEFAULT_RATIO_EPS, 0.5,
        )
        .unwrap();
        let tc = TrainConfig {
            learning_rate: lr,
            epochs,
            seed: 7,
            ..TrainConfig::for_variant(variant)
        };
        let (weights, curve) = train(&dataset, &cfg, &tc, variant).unwrap();
        println!(
            "{variant:?}: {} segs, loss {:.4} -> {:.4}, train {:?}",
            dataset.len(),
            curve[0],
            curve.last().unwrap(),
            t1.elapsed()
        );

        let mut engine = Engine::new(
            cfg.clone(),
            norm.clone(),
            variant,
            pairs.clone(),
            DEFAULT_RATIO_EPS,
            0.5,
        )
        .unwrap();
        let preds = run_trace(&mut engine, &eval_trace.samples, &weights).unwrap();
        let mut p_sets: Vec<LabelSet> = Vec::new();
        let mut t_sets: Vec<LabelSet> = Vec::new();
        for (k, p) in preds.iter().enumerate() {
            if p.warmup {
                continue;
            }
            let rows = &eval_trace.labels[k * 8..(k + 1) * 8];
            t_sets.push([vote_single_label(rows, 0.5)].into_iter().collect());
            p_sets.push(p.labels.clone());
        }
        let report = evaluate(&p_sets, &t_sets).unwrap();
        // Majority-class rate of the evaluation targets.
        let mut counts = std::collections::HashMap::new();
        for t in &t_sets {
            *counts.entry(format!("{t:?}")).or_insert(0usize) += 1;
        }
        let majority = counts.values().max().unwrap();
        println!(
            "{variant:?}: overall {:.2}%, majority {:.2}%, eval {:?}",
            report.overall_accuracy,
            100.0 * *majority as f64 / t_sets.len() as f64,
            t1.elapsed()
        );
    }
}
