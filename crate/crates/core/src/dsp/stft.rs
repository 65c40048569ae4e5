//! Short-time Fourier transform with centered frames and a least-squares
//! overlap-add inverse.
//!
//! Frame `f` is centered on sample `320 f` (the signal is zero-padded by 512
//! samples on each side) and a clip of `n` samples has `floor(n / 320)`
//! frames. The inverse divides the windowed overlap-add by the summed
//! squared window, which makes it the least-squares signal estimate for any
//! (possibly inconsistent) spectrogram.

use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

use super::{HOP, N_BINS, N_FFT};

/// One-sided complex spectrogram, frame-major (`frames x 513`).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    pub frames: usize,
    pub bins: Vec<Complex64>,
}

impl ComplexSpectrogram {
    pub fn frame(&self, f: usize) -> &[Complex64] {
        &self.bins[f * N_BINS..(f + 1) * N_BINS]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm()).collect()
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
}

fn plans() -> &'static Plans {
    static PLANS: OnceLock<Plans> = OnceLock::new();
    PLANS.get_or_init(|| {
        let mut planner = FftPlanner::new();
        Plans {
            forward: planner.plan_fft_forward(N_FFT),
            inverse: planner.plan_fft_inverse(N_FFT),
            window: hann_window(N_FFT),
        }
    })
}

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let s = (std::f64::consts::PI * i as f64 / n as f64).sin();
            s * s
        })
        .collect()
}

pub fn frame_count(num_samples: usize) -> usize {
    num_samples / HOP
}

/// STFT of `samples`. Rejects signals shorter than one hop.
pub fn stft(samples: &[f32]) -> Result<ComplexSpectrogram> {
    if samples.is_empty() {
        return Err(Error::invalid("stft: empty audio"));
    }
    let x: Vec<f64> = samples.iter().map(|&s| s as f64).collect();
    let spec = stft_f64(&x);
    if spec.frames == 0 {
        return Err(Error::invalid(format!(
            "stft: {} samples is shorter than one {HOP}-sample hop",
            samples.len()
        )));
    }
    Ok(spec)
}

pub(crate) fn stft_f64(x: &[f64]) -> ComplexSpectrogram {
    let p = plans();
    let frames = frame_count(x.len());
    let half = (N_FFT / 2) as isize;
    let mut bins = Vec::with_capacity(frames * N_BINS);
    let mut buf = vec![Complex64::new(0.0, 0.0); N_FFT];
    let mut scratch = vec![Complex64::new(0.0, 0.0); p.forward.get_inplace_scratch_len()];
    for f in 0..frames {
        let start = (f * HOP) as isize - half;
        for (m, slot) in buf.iter_mut().enumerate() {
            let n = start + m as isize;
            let v = if n >= 0 && (n as usize) < x.len() {
                x[n as usize] * p.window[m]
            } else {
                0.0
            };
            *slot = Complex64::new(v, 0.0);
        }
        p.forward.process_with_scratch(&mut buf, &mut scratch);
        bins.extend_from_slice(&buf[..N_BINS]);
    }
    ComplexSpectrogram { frames, bins }
}

/// Least-squares inverse STFT producing `len` samples. Samples covered by
/// no window energy are zero.
pub fn istft(spec: &ComplexSpectrogram, len: usize) -> Vec<f64> {
    let p = plans();
    let half = (N_FFT / 2) as isize;
    let mut num = vec![0.0f64; len];
    let mut den = vec![0.0f64; len];
    let mut buf = vec![Complex64::new(0.0, 0.0); N_FFT];
    let mut scratch = vec![Complex64::new(0.0, 0.0); p.inverse.get_inplace_scratch_len()];
    let scale = 1.0 / N_FFT as f64;
    for f in 0..spec.frames {
        let frame = spec.frame(f);
        buf[..N_BINS].copy_from_slice(frame);
        for k in 1..N_FFT / 2 {
            buf[N_FFT - k] = frame[k].conj();
        }
        p.inverse.process_with_scratch(&mut buf, &mut scratch);
        let start = (f * HOP) as isize - half;
        for (m, c) in buf.iter().enumerate() {
            let n = start + m as isize;
            if n >= 0 && (n as usize) < len {
                let w = p.window[m];
                num[n as usize] += w * c.re * scale;
                den[n as usize] += w * w;
            }
        }
    }
    num.iter()
        .zip(&den)
        .map(|(&a, &d)| if d > 1e-12 { a / d } else { 0.0 })
        .collect()
}
