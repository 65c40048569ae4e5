//! Griffin-Lim phase reconstruction.
//!
//! Starting from a random phase, the estimate alternates between imposing
//! the target magnitude on the current STFT and taking the least-squares
//! inverse. With that inverse the spectral error
//! `sum |(|STFT(x_i)| - mag)|^2` (over the full two-sided spectrum) can
//! never increase from one iterate to the next.

use rustfft::num_complex::Complex64;

use crate::error::Result;
use crate::tensor::RngStream;

use super::stft::{istft, stft_f64, ComplexSpectrogram};
use super::{AudioClip, LinearMagnitude, HOP, N_BINS, PEAK};

pub const DEFAULT_ITERS: usize = 60;

/// Two-sided energy weight of one-sided bin `k`.
fn bin_weight(k: usize) -> f64 {
    if k == 0 || k == N_BINS - 1 {
        1.0
    } else {
        2.0
    }
}

/// Squared distance between `|spec|` and `mag`, counted over the full
/// two-sided spectrum.
pub fn spectral_error(spec: &ComplexSpectrogram, mag: &[f64]) -> f64 {
    spec.bins
        .iter()
        .zip(mag)
        .enumerate()
        .map(|(i, (c, &m))| {
            let d = c.norm() - m;
            bin_weight(i % N_BINS) * d * d
        })
        .sum()
}

/// Reconstructs audio from a magnitude spectrogram; see [`griffin_lim_traced`].
pub fn griffin_lim(mag: &LinearMagnitude, iters: usize, rng: &mut RngStream) -> Result<AudioClip> {
    griffin_lim_traced(mag, iters, rng).map(|(audio, _)| audio)
}

/// Runs `iters` Griffin-Lim iterations and also returns the spectral error
/// of every iterate `x_0 ..= x_iters`.
///
/// The output has `frames * 320` samples and is peak-normalized to 0.99.
pub fn griffin_lim_traced(mag: &LinearMagnitude, iters: usize, rng: &mut RngStream) -> Result<(AudioClip, Vec<f64>)> {
    // LinearMagnitude guarantees finite, non-negative values.
    let target: Vec<f64> = mag.data().iter().map(|&m| m as f64).collect();
    let len = mag.frames() * HOP;
    let bins = target
        .iter()
        .map(|&m| Complex64::from_polar(m, rng.uniform_range(-std::f64::consts::PI, std::f64::consts::PI)))
        .collect();
    let mut x = istft(
        &ComplexSpectrogram {
            frames: mag.frames(),
            bins,
        },
        len,
    );
    let mut errors = Vec::with_capacity(iters + 1);
    for i in 0..=iters {
        let mut spec = stft_f64(&x);
        errors.push(spectral_error(&spec, &target));
        if i == iters {
            break;
        }
        for (c, &m) in spec.bins.iter_mut().zip(&target) {
            let n = c.norm();
            *c = if n > 0.0 {
                *c * (m / n)
            } else {
                Complex64::new(m, 0.0)
            };
        }
        x = istft(&spec, len);
    }
    let peak = x.iter().fold(0.0f64, |p, v| p.max(v.abs()));
    let gain = if peak > 0.0 { PEAK as f64 / peak } else { 0.0 };
    let audio = AudioClip::new(x.iter().map(|&v| (v * gain) as f32).collect())?;
    Ok((audio, errors))
}
