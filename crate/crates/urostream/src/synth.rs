//! Deterministic generator of labeled pressure traces emulating the four
//! bladder states, including overlapping events.
//!
//! Event morphologies are stand-ins chosen to exercise the pipeline, not to
//! be clinically faithful: DO events are smooth raised-cosine bumps, VOID
//! events are sustained rise–plateau–fall excursions with the largest
//! amplitudes, and ABD events are short oscillatory bursts. With some
//! probability an ABD event is placed inside a DO or VOID interval, which
//! yields multi-hot labels. Labels are per-sample so both stride-1 and
//! stride-T segmentation derive from one ground truth.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::label::{multi_hot_valid, Label, MultiHot};

/// Amplitude (cmH2O) and duration (samples) ranges for one event class.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EventShape {
    pub amp: (f64, f64),
    pub dur: (usize, usize),
}

impl EventShape {
    fn validate(&self, name: &str) -> Result<()> {
        if !(self.amp.0 > 0.0) || self.amp.1 < self.amp.0 {
            return Err(Error::Config(format!(
                "{name} amplitude range ({}, {}) is degenerate",
                self.amp.0, self.amp.1
            )));
        }
        if self.dur.0 < 2 || self.dur.1 < self.dur.0 {
            return Err(Error::Config(format!(
                "{name} duration range ({}, {}) is degenerate",
                self.dur.0, self.dur.1
            )));
        }
        Ok(())
    }

    fn mean_dur(&self) -> f64 {
        (self.dur.0 + self.dur.1) as f64 / 2.0
    }
}

/// Generator parameters. Event rates are in events per 1000 samples.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TraceConfig {
    pub length: usize,
    pub seed: u64,
    pub baseline_start: f64,
    pub baseline_end: f64,
    pub noise_std: f64,
    pub do_rate: f64,
    pub void_rate: f64,
    pub abd_rate: f64,
    pub do_shape: EventShape,
    pub void_shape: EventShape,
    pub abd_shape: EventShape,
    pub overlap_probability: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            length: 20_000,
            seed: 42,
            baseline_start: 5.0,
            baseline_end: 15.0,
            noise_std: 0.5,
            do_rate: 1.0,
            void_rate: 0.4,
            abd_rate: 1.5,
            do_shape: EventShape {
                amp: (4.0, 12.0),
                dur: (30, 100),
            },
            void_shape: EventShape {
                amp: (15.0, 35.0),
                dur: (100, 400),
            },
            abd_shape: EventShape {
                amp: (3.0, 10.0),
                dur: (5, 30),
            },
            overlap_probability: 0.3,
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length < 512 {
            return Err(Error::Config(format!(
                "trace length must be >= 512, got {}",
                self.length
            )));
        }
        if !self.baseline_start.is_finite() || !self.baseline_end.is_finite() {
            return Err(Error::Config("baseline endpoints must be finite".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config("noise_std must be >= 0".into()));
        }
        for (name, rate) in [
            ("do_rate", self.do_rate),
            ("void_rate", self.void_rate),
            ("abd_rate", self.abd_rate),
        ] {
            if !(rate >= 0.0) || !rate.is_finite() {
                return Err(Error::Config(format!("{name} must be >= 0, got {rate}")));
            }
        }
        self.do_shape.validate("DO")?;
        self.void_shape.validate("VOID")?;
        self.abd_shape.validate("ABD")?;
        if !(0.0..=1.0).contains(&self.overlap_probability) {
            return Err(Error::Config(format!(
                "overlap_probability must lie in [0,1], got {}",
                self.overlap_probability
            )));
        }
        // Infeasible packing: expected event mass must leave room to place
        // events disjointly.
        let expected = self.do_rate * self.length as f64 / 1000.0 * self.do_shape.mean_dur()
            + self.void_rate * self.length as f64 / 1000.0 * self.void_shape.mean_dur()
            + self.abd_rate * self.length as f64 / 1000.0 * self.abd_shape.mean_dur();
        if expected > 0.5 * self.length as f64 {
            return Err(Error::Config(format!(
                "event rates too high: expected {expected:.0} event samples in a {}-sample trace",
                self.length
            )));
        }
        Ok(())
    }
}

/// One labeled event interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventRecord {
    pub class: Label,
    pub start: usize,
    pub end: usize,
}

/// A pressure trace with per-sample multi-hot labels and its event log.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrace {
    pub samples: Vec<f64>,
    pub labels: Vec<MultiHot>,
    pub events: Vec<EventRecord>,
}

impl LabeledTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn intersects_with_gap(events: &[(usize, usize)], start: usize, end: usize, gap: usize) -> bool {
    events
        .iter()
        .any(|&(s, e)| start < e + gap && s < end + gap)
}

fn do_bump(amp: f64, dur: usize, i: usize) -> f64 {
    let phase = i as f64 / (dur - 1) as f64;
    amp * 0.5 * (1.0 - (2.0 * std::f64::consts::PI * phase).cos())
}

fn void_excursion(amp: f64, dur: usize, i: usize) -> f64 {
    let ramp = ((dur as f64 * 0.2) as usize).max(1);
    if i < ramp {
        amp * 0.5 * (1.0 - (std::f64::consts::PI * (i + 1) as f64 / ramp as f64).cos())
    } else if i >= dur - ramp {
        let j = dur - 1 - i;
        amp * 0.5 * (1.0 - (std::f64::consts::PI * (j + 1) as f64 / ramp as f64).cos())
    } else {
        amp
    }
}

fn abd_burst(amp: f64, dur: usize, i: usize) -> f64 {
    let phase = i as f64 / (dur - 1) as f64;
    let envelope = (std::f64::consts::PI * phase).sin().powi(2);
    amp * (2.0 * std::f64::consts::PI * 3.0 * phase).sin() * envelope
}

fn event_count(rng: &mut ChaCha8Rng, rate_per_1000: f64, length: usize) -> usize {
    let lambda = rate_per_1000 * length as f64 / 1000.0;
    if lambda <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(lambda).expect("lambda > 0");
    dist.sample(rng) as usize
}

fn place_disjoint(
    rng: &mut ChaCha8Rng,
    occupied: &[(usize, usize)],
    length: usize,
    dur: usize,
) -> Option<usize> {
    if dur >= length {
        return None;
    }
    for _ in 0..200 {
        let start = rng.gen_range(0..=length - dur);
        if !intersects_with_gap(occupied, start, start + dur, 1) {
            return Some(start);
        }
    }
    None
}

/// Generates a labeled trace: sloped baseline, Gaussian noise, and the three
/// event morphologies, with ABD events optionally nested in DO/VOID hosts.
pub fn generate(cfg: &TraceConfig) -> Result<LabeledTrace> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.length;

    let n_do = event_count(&mut rng, cfg.do_rate, n);
    let n_void = event_count(&mut rng, cfg.void_rate, n);
    let n_abd = event_count(&mut rng, cfg.abd_rate, n);

    // VOID and DO events occupy mutually disjoint intervals; ABD may nest.
    let mut hosts: Vec<(usize, usize)> = Vec::new();
    let mut events: Vec<EventRecord> = Vec::new();

    let place_host = |rng: &mut ChaCha8Rng,
                          hosts: &mut Vec<(usize, usize)>,
                          events: &mut Vec<EventRecord>,
                          class: Label,
                          shape: &EventShape|
     -> Result<(f64, usize, usize)> {
        if shape.dur.0 >= n {
            return Err(Error::Config(format!(
                "{class} events of >= {} samples cannot fit a {n}-sample trace",
                shape.dur.0
            )));
        }
        let dur = rng.gen_range(shape.dur.0..=shape.dur.1.min(n - 1));
        let amp = rng.gen_range(shape.amp.0..=shape.amp.1);
        let start = place_disjoint(rng, hosts, n, dur).ok_or_else(|| {
            Error::Config(format!(
                "could not place a {class} event of {dur} samples; rates too high for length {n}"
            ))
        })?;
        hosts.push((start, start + dur));
        events.push(EventRecord {
            class,
            start,
            end: start + dur,
        });
        Ok((amp, dur, start))
    };

    let mut signal = vec![0.0; n];
    for _ in 0..n_void {
        let (amp, dur, start) =
            place_host(&mut rng, &mut hosts, &mut events, Label::Void, &cfg.void_shape)?;
        for i in 0..dur {
            signal[start + i] += void_excursion(amp, dur, i);
        }
    }
    for _ in 0..n_do {
        let (amp, dur, start) =
            place_host(&mut rng, &mut hosts, &mut events, Label::Do, &cfg.do_shape)?;
        for i in 0..dur {
            signal[start + i] += do_bump(amp, dur, i);
        }
    }

    let mut abd_intervals: Vec<(usize, usize)> = Vec::new();
    for _ in 0..n_abd {
        let dur = rng.gen_range(cfg.abd_shape.dur.0..=cfg.abd_shape.dur.1);
        let amp = rng.gen_range(cfg.abd_shape.amp.0..=cfg.abd_shape.amp.1);
        let nest = !hosts.is_empty() && rng.gen_bool(cfg.overlap_probability);
        let start = if nest {
            // Drop inside a random host interval (shrinking if needed) to
            // produce a multi-hot overlap zone.
            let &(hs, he) = &hosts[rng.gen_range(0..hosts.len())];
            let dur = dur.min(he - hs);
            let start = if he - hs == dur {
                hs
            } else {
                rng.gen_range(hs..=he - dur)
            };
            if intersects_with_gap(&abd_intervals, start, start + dur, 1) {
                continue; // overlapping ABDs would merge in the event log
            }
            for i in 0..dur {
                signal[start + i] += abd_burst(amp, dur, i);
            }
            abd_intervals.push((start, start + dur));
            events.push(EventRecord {
                class: Label::Abd,
                start,
                end: start + dur,
            });
            continue;
        } else {
            let mut occupied = hosts.clone();
            occupied.extend(&abd_intervals);
            match place_disjoint(&mut rng, &occupied, n, dur) {
                Some(s) => s,
                None => {
                    return Err(Error::Config(format!(
                        "could not place an ABD event of {dur} samples; rates too high"
                    )))
                }
            }
        };
        for i in 0..dur {
            signal[start + i] += abd_burst(amp, dur, i);
        }
        abd_intervals.push((start, start + dur));
        events.push(EventRecord {
            class: Label::Abd,
            start,
            end: start + dur,
        });
    }

    // Baseline ramp plus noise underneath everything.
    let noise = Normal::new(0.0, cfg.noise_std.max(f64::MIN_POSITIVE)).unwrap();
    let denom = (n - 1).max(1) as f64;
    for (i, s) in signal.iter_mut().enumerate() {
        let baseline =
            cfg.baseline_start + (cfg.baseline_end - cfg.baseline_start) * i as f64 / denom;
        let eps = if cfg.noise_std > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        *s += baseline + eps;
    }

    events.sort_by_key(|e| (e.start, e.class.index()));
    let labels = labels_from_events(n, &events);
    Ok(LabeledTrace {
        samples: signal,
        labels,
        events,
    })
}

fn labels_from_events(n: usize, events: &[EventRecord]) -> Vec<MultiHot> {
    let mut labels = vec![[true, false, false, false]; n];
    for ev in events {
        for row in labels.iter_mut().take(ev.end).skip(ev.start) {
            row[ev.class.index()] = true;
            row[0] = false;
        }
    }
    labels
}

/// Fixed layout of the long-memory task. One trial per `trial_len` samples:
/// a short marker bump whose amplitude encodes a class, then `delay` samples
/// later a class-neutral plateau that carries the label. The delay is chosen
/// so the marker sits outside the receptive field of every feature in the
/// labeled segments but inside the reach of the memory bank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongMemoryLayout {
    pub first_trial: usize,
    pub trial_len: usize,
    pub marker_len: usize,
    pub marker_amps: [f64; 3],
    pub delay: usize,
    pub window_len: usize,
    pub window_amp: f64,
}

impl LongMemoryLayout {
    pub fn with_delay(delay: usize) -> Self {
        Self {
            first_trial: 640,
            trial_len: 144,
            marker_len: 8,
            marker_amps: [6.0, 12.0, 18.0],
            delay,
            window_len: 64,
            window_amp: 3.0,
        }
    }
}

impl Default for LongMemoryLayout {
    fn default() -> Self {
        // 72 samples = 7.2 s: beyond the ~6.4 s newest-coefficient support
        // of the wavelet features, within the memory bank's reach.
        Self::with_delay(72)
    }
}

/// Long-memory variant of [`generate`]: segment labels are decidable only
/// from information several segments in the past. See [`LongMemoryLayout`].
pub fn long_memory_task(cfg: &TraceConfig) -> Result<LabeledTrace> {
    long_memory_task_with_layout(cfg, &LongMemoryLayout::default())
}

pub fn long_memory_task_with_layout(
    cfg: &TraceConfig,
    layout: &LongMemoryLayout,
) -> Result<LabeledTrace> {
    cfg.validate()?;
    if layout.delay + layout.window_len > layout.trial_len {
        return Err(Error::Config(format!(
            "label window [{}, {}) exceeds the {}-sample trial",
            layout.delay,
            layout.delay + layout.window_len,
            layout.trial_len
        )));
    }
    let n = cfg.length;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut signal = vec![0.0; n];
    let mut events = Vec::new();

    let classes = [Label::Do, Label::Void, Label::Abd];
    let mut t0 = layout.first_trial;
    while t0 + layout.trial_len <= n {
        let k = rng.gen_range(0..3);
        let class = classes[k];
        let amp = layout.marker_amps[k];
        for i in 0..layout.marker_len {
            signal[t0 + i] += do_bump(amp, layout.marker_len, i);
        }
        let ws = t0 + layout.delay;
        let we = ws + layout.window_len;
        for s in signal.iter_mut().take(we).skip(ws) {
            *s += layout.window_amp;
        }
        events.push(EventRecord {
            class,
            start: ws,
            end: we,
        });
        t0 += layout.trial_len;
    }

    let noise = Normal::new(0.0, cfg.noise_std.max(f64::MIN_POSITIVE)).unwrap();
    let denom = (n - 1).max(1) as f64;
    for (i, s) in signal.iter_mut().enumerate() {
        let baseline =
            cfg.baseline_start + (cfg.baseline_end - cfg.baseline_start) * i as f64 / denom;
        let eps = if cfg.noise_std > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        *s += baseline + eps;
    }

    let labels = labels_from_events(n, &events);
    Ok(LabeledTrace {
        samples: signal,
        labels,
        events,
    })
}

pub const TRACE_CSV_HEADER: &str = "t,pressure,none,do,void,abd";
pub const EVENTS_CSV_HEADER: &str = "class,start,end";

/// Sidecar path for the event log: `foo.csv` → `foo.events.csv`.
pub fn events_path(trace_path: &Path) -> PathBuf {
    let stem = trace_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    trace_path.with_file_name(format!("{stem}.events.csv"))
}

/// Writes the trace CSV and its event-log sidecar atomically (via a
/// temporary file and rename, so failures leave no partial outputs).
pub fn write_trace(path: &Path, trace: &LabeledTrace) -> Result<()> {
    let mut body = String::with_capacity(trace.len() * 24);
    body.push_str(TRACE_CSV_HEADER);
    body.push('\n');
    for (t, (x, row)) in trace.samples.iter().zip(&trace.labels).enumerate() {
        // `{}` prints the shortest round-trip decimal for f64, which always
        // carries at least the 9 significant digits the format requires.
        body.push_str(&format!(
            "{t},{x},{},{},{},{}\n",
            u8::from(row[0]),
            u8::from(row[1]),
            u8::from(row[2]),
            u8::from(row[3])
        ));
    }
    atomic_write(path, body.as_bytes())?;

    let mut ev = String::new();
    ev.push_str(EVENTS_CSV_HEADER);
    ev.push('\n');
    for e in &trace.events {
        ev.push_str(&format!("{},{},{}\n", e.class, e.start, e.end));
    }
    atomic_write(&events_path(path), ev.as_bytes())
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        if !dir.exists() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("output directory {} does not exist", dir.display()),
            )));
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a trace CSV (and its event sidecar when present). Errors carry
/// 1-based line numbers.
pub fn read_trace(path: &Path) -> Result<LabeledTrace> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty trace file"))?;
    if header.trim() != TRACE_CSV_HEADER {
        return Err(Error::parse(
            1,
            format!("expected header '{TRACE_CSV_HEADER}', got '{header}'"),
        ));
    }

    let mut samples = Vec::new();
    let mut labels: Vec<MultiHot> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                lineno,
                format!("expected 6 fields, got {}", fields.len()),
            ));
        }
        let t: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad sample index '{}'", fields[0])))?;
        if t != samples.len() {
            return Err(Error::parse(
                lineno,
                format!("sample index {t} out of order (expected {})", samples.len()),
            ));
        }
        let x: f64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad pressure value '{}'", fields[1])))?;
        if !x.is_finite() {
            return Err(Error::parse(lineno, "pressure value is not finite"));
        }
        let mut row = [false; 4];
        for (k, f) in fields[2..].iter().enumerate() {
            row[k] = match f.trim() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::parse(
                        lineno,
                        format!("label column must be 0 or 1, got '{other}'"),
                    ))
                }
            };
        }
        if !multi_hot_valid(&row) {
            return Err(Error::parse(
                lineno,
                "label row violates NONE-exclusivity (NONE must be set iff no event is)",
            ));
        }
        samples.push(x);
        labels.push(row);
    }
    if samples.is_empty() {
        return Err(Error::parse(1, "trace has no samples"));
    }

    let ev_path = events_path(path);
    let events = if ev_path.exists() {
        read_events(&ev_path)?
    } else {
        events_from_labels(&labels)
    };
    Ok(LabeledTrace {
        samples,
        labels,
        events,
    })
}

fn read_events(path: &Path) -> Result<Vec<EventRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty event log"))?;
    if header.trim() != EVENTS_CSV_HEADER {
        return Err(Error::parse(
            1,
            format!("expected header '{EVENTS_CSV_HEADER}', got '{header}'"),
        ));
    }
    let mut events = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                lineno,
                format!("expected 3 fields, got {}", fields.len()),
            ));
        }
        let class = Label::parse(fields[0].trim())
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
        let start: usize = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad start '{}'", fields[1])))?;
        let end: usize = fields[2]
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad end '{}'", fields[2])))?;
        if end <= start {
            return Err(Error::parse(lineno, "event end must exceed start"));
        }
        events.push(EventRecord { class, start, end });
    }
    Ok(events)
}

/// Reconstructs the event log as maximal per-class label runs.
pub fn events_from_labels(labels: &[MultiHot]) -> Vec<EventRecord> {
    let mut events = Vec::new();
    for class in [Label::Do, Label::Void, Label::Abd] {
        let c = class.index();
        let mut start = None;
        for (t, row) in labels.iter().enumerate() {
            match (row[c], start) {
                (true, None) => start = Some(t),
                (false, Some(s)) => {
                    events.push(EventRecord {
                        class,
                        start: s,
                        end: t,
                    });
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            events.push(EventRecord {
                class,
                start: s,
                end: labels.len(),
            });
        }
    }
    events.sort_by_key(|e| (e.start, e.class.index()));
    events
}
