//! End-to-end checks of the command-line binary: determinism, file
//! formats, exit codes, and pipe behavior.

use std::path::Path;
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_urostream"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn gen_is_deterministic_and_atomic() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = run(
        &["gen", "--out", "a.csv", "--seed", "7", "--length", "2000"],
        dir.path(),
    );
    assert_success(&out1);
    let out2 = run(
        &["gen", "--out", "b.csv", "--seed", "7", "--length", "2000"],
        dir.path(),
    );
    assert_success(&out2);
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
    let ae = std::fs::read(dir.path().join("a.events.csv")).unwrap();
    let be = std::fs::read(dir.path().join("b.events.csv")).unwrap();
    assert_eq!(ae, be);

    // Missing output directory: nonzero exit, nothing written.
    let bad = run(
        &["gen", "--out", "missing-dir/x.csv", "--seed", "1", "--length", "1000"],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(2));
    assert!(!dir.path().join("missing-dir").exists());
}

#[test]
fn long_memory_preset_dispatches() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "gen",
            "--out",
            "lm.csv",
            "--seed",
            "3",
            "--length",
            "2000",
            "--preset",
            "long-memory",
        ],
        dir.path(),
    );
    assert_success(&out);
    let text = std::fs::read_to_string(dir.path().join("lm.events.csv")).unwrap();
    // Long-memory label windows are 64 samples: start/end differ by 64.
    let line = text.lines().nth(1).unwrap();
    let fields: Vec<&str> = line.split(',').collect();
    let start: usize = fields[1].parse().unwrap();
    let end: usize = fields[2].parse().unwrap();
    assert_eq!(end - start, 64);
}

#[test]
fn train_is_byte_deterministic_and_epochs_zero_is_loadable() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&run(
        &["gen", "--out", "t.csv", "--seed", "11", "--length", "1500"],
        dir.path(),
    ));
    for name in ["m1.ckpt", "m2.ckpt"] {
        let out = run(
            &[
                "train", "--trace", "t.csv", "--out", name, "--variant", "segment",
                "--epochs", "2", "--seed", "5",
            ],
            dir.path(),
        );
        assert_success(&out);
    }
    let c1 = std::fs::read(dir.path().join("m1.ckpt")).unwrap();
    let c2 = std::fs::read(dir.path().join("m2.ckpt")).unwrap();
    assert_eq!(c1, c2, "same seed must give byte-identical checkpoints");
    assert!(dir.path().join("m1.loss.csv").exists());

    let out = run(
        &[
            "train", "--trace", "t.csv", "--out", "init.ckpt", "--variant", "streaming",
            "--epochs", "0", "--seed", "5",
        ],
        dir.path(),
    );
    assert_success(&out);
    // An epochs-0 checkpoint evaluates cleanly.
    let eval = run(
        &["eval", "--checkpoint", "init.ckpt", "--trace", "t.csv"],
        dir.path(),
    );
    assert_success(&eval);
}

#[test]
fn eval_reports_metrics_and_rejects_short_traces() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&run(
        &["gen", "--out", "t.csv", "--seed", "13", "--length", "1800"],
        dir.path(),
    ));
    assert_success(&run(
        &[
            "train", "--trace", "t.csv", "--out", "m.ckpt", "--variant", "segment",
            "--epochs", "2",
        ],
        dir.path(),
    ));
    let out = run(
        &[
            "eval", "--checkpoint", "m.ckpt", "--trace", "t.csv", "--out-dir", "metrics",
        ],
        dir.path(),
    );
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("steady state"));
    assert!(stdout.contains("| Class | N | Acc. | F1 | TP | TN | FP | FN |"));
    let csv = std::fs::read_to_string(dir.path().join("metrics/metrics.csv")).unwrap();
    assert!(csv.starts_with("class,n,accuracy"));

    // Identical inputs give identical reports.
    let again = run(
        &["eval", "--checkpoint", "m.ckpt", "--trace", "t.csv"],
        dir.path(),
    );
    let third = run(
        &["eval", "--checkpoint", "m.ckpt", "--trace", "t.csv"],
        dir.path(),
    );
    assert_eq!(again.stdout, third.stdout);

    // A trace shorter than one segment is an explicit error.
    let short = "t,pressure,none,do,void,abd\n0,1.0,1,0,0,0\n1,1.5,1,0,0,0\n";
    std::fs::write(dir.path().join("short.csv"), short).unwrap();
    let bad = run(
        &["eval", "--checkpoint", "m.ckpt", "--trace", "short.csv"],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("no segments"));
}

#[test]
fn stream_file_and_stdin_agree_and_prefix_holds() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&run(
        &["gen", "--out", "t.csv", "--seed", "17", "--length", "1200"],
        dir.path(),
    ));
    assert_success(&run(
        &[
            "train", "--trace", "t.csv", "--out", "m.ckpt", "--variant", "streaming",
            "--epochs", "1",
        ],
        dir.path(),
    ));
    let from_file = run(
        &["stream", "--checkpoint", "m.ckpt", "--input", "t.csv"],
        dir.path(),
    );
    assert_success(&from_file);

    let trace_bytes = std::fs::read(dir.path().join("t.csv")).unwrap();
    let mut child = bin()
        .args(["stream", "--checkpoint", "m.ckpt"])
        .current_dir(dir.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    use std::io::Write;
    child
        .stdin
        .take()
        .unwrap()
        .write_all(&trace_bytes)
        .unwrap();
    let from_stdin = child.wait_with_output().unwrap();
    assert_eq!(from_file.stdout, from_stdin.stdout);

    // Prefix property at the CLI level: truncating the input at a segment
    // boundary leaves earlier lines unchanged.
    let text = String::from_utf8(trace_bytes).unwrap();
    let truncated: String = text.lines().take(1 + 400).collect::<Vec<_>>().join("\n");
    std::fs::write(dir.path().join("prefix.csv"), truncated).unwrap();
    let prefix_out = run(
        &["stream", "--checkpoint", "m.ckpt", "--input", "prefix.csv"],
        dir.path(),
    );
    assert_success(&prefix_out);
    let full_lines: Vec<&str> = std::str::from_utf8(&from_file.stdout)
        .unwrap()
        .lines()
        .collect();
    let prefix_lines: Vec<&str> = std::str::from_utf8(&prefix_out.stdout)
        .unwrap()
        .lines()
        .collect();
    assert_eq!(prefix_lines.len(), 1 + 400 / 8);
    for (a, b) in prefix_lines.iter().zip(full_lines.iter()) {
        assert_eq!(a, b);
    }
}

#[test]
fn stream_quantized_reports_agreement_and_strict_aborts() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&run(
        &["gen", "--out", "t.csv", "--seed", "19", "--length", "1000"],
        dir.path(),
    ));
    assert_success(&run(
        &[
            "train", "--trace", "t.csv", "--out", "m.ckpt", "--variant", "segment",
            "--epochs", "1",
        ],
        dir.path(),
    ));
    let out = run(
        &[
            "stream", "--checkpoint", "m.ckpt", "--input", "t.csv", "--quantized",
        ],
        dir.path(),
    );
    assert_success(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("label agreement"));

    // Malformed line: skipped with a warning by default, fatal under --strict.
    std::fs::write(
        dir.path().join("bad.csv"),
        "t,pressure\n0,1.0\n1,oops\n2,2.0\n",
    )
    .unwrap();
    let lax = run(
        &["stream", "--checkpoint", "m.ckpt", "--input", "bad.csv"],
        dir.path(),
    );
    assert_success(&lax);
    assert!(String::from_utf8_lossy(&lax.stderr).contains("skipped"));
    let strict = run(
        &[
            "stream", "--checkpoint", "m.ckpt", "--input", "bad.csv", "--strict",
        ],
        dir.path(),
    );
    assert_eq!(strict.status.code(), Some(2));
}

#[test]
fn bench_reproduces_published_cost_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["bench", "--preset", "table", "--segments", "120"], dir.path());
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("| Embedding layer | 0.016 | 1 |"));
    assert!(stdout.contains("| Q/K/V projections | 0.197 | 12 |"));
    assert!(stdout.contains("| MHSA | 0.033 | 0 |"));
    assert!(stdout.contains("| Feedforward MLP | 0.524 | 32 |"));
    assert!(stdout.contains("**45.25**"));
    assert!(stdout.contains("Memory buffer: 0.125 kB"));
    assert!(stdout.contains("per-segment latency"));

    let eq = run(&["bench", "--preset", "equation", "--segments", "120"], dir.path());
    assert_success(&eq);
    let eq_out = String::from_utf8_lossy(&eq.stdout);
    assert!(eq_out.contains("| Feedforward MLP | 0.082 |"));
    assert!(eq_out.contains("note:"), "equation preset prints its discrepancy note");

    // Cost rows are pure; only latency may differ between runs.
    let again = run(&["bench", "--preset", "table", "--segments", "120"], dir.path());
    let a: Vec<String> = stdout.lines().take(10).map(String::from).collect();
    let b: Vec<String> = String::from_utf8_lossy(&again.stdout)
        .lines()
        .take(10)
        .map(String::from)
        .collect();
    assert_eq!(a, b);
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    // Usage error: unknown flag.
    let usage = run(&["gen", "--no-such-flag"], dir.path());
    assert_eq!(usage.status.code(), Some(1));
    // Data error: missing checkpoint file.
    let data = run(
        &["eval", "--checkpoint", "nope.ckpt", "--trace", "nope.csv"],
        dir.path(),
    );
    assert_eq!(data.status.code(), Some(2));
    // Config error: unknown key in the run config.
    std::fs::write(dir.path().join("bad.cfg"), "not_a_key = 1\n").unwrap();
    let cfg = run(
        &[
            "gen", "--config", "bad.cfg", "--out", "x.csv", "--length", "1000",
        ],
        dir.path(),
    );
    assert_eq!(cfg.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&cfg.stderr).contains("unknown config key"));
}
