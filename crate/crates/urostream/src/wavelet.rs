//! Five-level lifting wavelet transform with 4-tap Daubechies filters.
//!
//! The forward transform factors the classic D4 analysis filter bank into
//! lifting steps (Daubechies–Sweldens factorization):
//!
//! ```text
//! s1[n] = x[2n] + √3·x[2n+1]
//! d1[n] = x[2n+1] − (√3/4)·s1[n] − ((√3−2)/4)·s1[n−1]
//! s2[n] = s1[n] − d1[n+1]
//! a[n]  = ((√3−1)/√2)·s2[n]        d[n] = ((√3+1)/√2)·d1[n]
//! ```
//!
//! Out-of-range indices wrap periodically; the 512-sample window is a power
//! of two, so every level halves cleanly. Because each lifting step only
//! adds a function of *other* samples, running the steps backwards with the
//! signs flipped reconstructs the input exactly up to rounding.
//!
//! Expanding the steps shows the approximation output equals the textbook
//! D4 analysis convolution `a[n] = Σ_k h[k]·x[2n+k]` and the detail output
//! equals the quadrature-mirror high-pass shifted one pair left,
//! `d[n] = Σ_k (−1)^{k+1} h[3−k]·x[2n−2+k]`. The test suite checks this
//! against an independent convolution implementation.

use crate::error::{Error, Result};

/// FIFO window length fed to the transform.
pub const WINDOW_LEN: usize = 512;
/// Number of decomposition levels.
pub const LEVELS: usize = 5;

const SQRT3: f64 = 1.7320508075688772;
const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Subband outputs of [`lwt5`]. `approx[i]` holds A_{i+1} and `detail[i]`
/// holds D_{i+1}, with lengths 256, 128, 64, 32, 16.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoeffs {
    pub approx: Vec<Vec<f64>>,
    pub detail: Vec<Vec<f64>>,
}

impl WaveletCoeffs {
    /// Length of the level-`i` subbands (1-based level).
    pub fn level_len(level: usize) -> usize {
        WINDOW_LEN >> level
    }
}

/// One analysis level: split `x` (even length) into approximation and
/// detail halves via the lifting steps above.
fn analyze_step(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let half = x.len() / 2;
    debug_assert!(half >= 1 && x.len() % 2 == 0);

    let s1: Vec<f64> = (0..half).map(|n| x[2 * n] + SQRT3 * x[2 * n + 1]).collect();
    let d1: Vec<f64> = (0..half)
        .map(|n| {
            let prev = s1[(n + half - 1) % half];
            x[2 * n + 1] - SQRT3 / 4.0 * s1[n] - (SQRT3 - 2.0) / 4.0 * prev
        })
        .collect();
    let ka = (SQRT3 - 1.0) / SQRT2;
    let kd = (SQRT3 + 1.0) / SQRT2;
    let approx: Vec<f64> = (0..half)
        .map(|n| ka * (s1[n] - d1[(n + 1) % half]))
        .collect();
    let detail: Vec<f64> = d1.iter().map(|v| kd * v).collect();
    (approx, detail)
}

/// One synthesis level: exact inverse of [`analyze_step`].
fn synthesize_step(approx: &[f64], detail: &[f64]) -> Vec<f64> {
    let half = approx.len();
    debug_assert_eq!(half, detail.len());

    // The scale factors are reciprocals: ((√3−1)/√2)·((√3+1)/√2) = 1.
    let ka_inv = (SQRT3 + 1.0) / SQRT2;
    let kd_inv = (SQRT3 - 1.0) / SQRT2;
    let d1: Vec<f64> = detail.iter().map(|v| kd_inv * v).collect();
    let s2: Vec<f64> = approx.iter().map(|v| ka_inv * v).collect();
    let s1: Vec<f64> = (0..half).map(|n| s2[n] + d1[(n + 1) % half]).collect();

    let mut x = vec![0.0; 2 * half];
    for n in 0..half {
        let prev = s1[(n + half - 1) % half];
        let odd = d1[n] + SQRT3 / 4.0 * s1[n] + (SQRT3 - 2.0) / 4.0 * prev;
        x[2 * n + 1] = odd;
        x[2 * n] = s1[n] - SQRT3 * odd;
    }
    x
}

/// Five-level analysis of a 512-sample window.
///
/// Every intermediate approximation band is kept because the feature
/// extractor retains the newest coefficient of all ten subbands.
pub fn lwt5(window: &[f64]) -> Result<WaveletCoeffs> {
    if window.len() != WINDOW_LEN {
        return Err(Error::InvalidInput(format!(
            "wavelet window must have {} samples, got {}",
            WINDOW_LEN,
            window.len()
        )));
    }
    if let Some(bad) = window.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("wavelet window contains {bad}")));
    }

    let mut approx = Vec::with_capacity(LEVELS);
    let mut detail = Vec::with_capacity(LEVELS);
    let mut current = window.to_vec();
    for _ in 0..LEVELS {
        let (a, d) = analyze_step(&current);
        current = a.clone();
        approx.push(a);
        detail.push(d);
    }
    Ok(WaveletCoeffs { approx, detail })
}

/// Inverse of [`lwt5`]: reconstructs the window from A_5 and D_5..D_1.
pub fn inverse_lwt5(coeffs: &WaveletCoeffs) -> Result<Vec<f64>> {
    if coeffs.approx.len() != LEVELS || coeffs.detail.len() != LEVELS {
        return Err(Error::ShapeMismatch(format!(
            "expected {} subband levels, got {}/{}",
            LEVELS,
            coeffs.approx.len(),
            coeffs.detail.len()
        )));
    }
    for level in 1..=LEVELS {
        let want = WaveletCoeffs::level_len(level);
        let (a, d) = (&coeffs.approx[level - 1], &coeffs.detail[level - 1]);
        if a.len() != want || d.len() != want {
            return Err(Error::ShapeMismatch(format!(
                "level {} subbands must have length {}, got {}/{}",
                level,
                want,
                a.len(),
                d.len()
            )));
        }
    }

    let mut current = coeffs.approx[LEVELS - 1].clone();
    for level in (0..LEVELS).rev() {
        current = synthesize_step(&current, &coeffs.detail[level]);
    }
    Ok(current)
}
