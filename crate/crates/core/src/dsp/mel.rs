//! 64-band Mel filterbank and the normalized log-Mel codec.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::stft::stft_f64;
use super::{AudioClip, DB_RANGE, F_MAX, F_MIN, N_BINS, N_FFT, N_MELS, SAMPLE_RATE};

const POWER_FLOOR: f64 = 1e-10;

/// HTK Mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filterbank, `64 x 513`, row-major.
pub(crate) struct Filterbank {
    pub weights: Vec<f64>,
    pub row_sums: Vec<f64>,
    pub col_sums: Vec<f64>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub edge_bins: Vec<usize>,
}

/// Frequency of FFT bin `k`.
pub fn bin_hz(k: usize) -> f64 {
    k as f64 * SAMPLE_RATE as f64 / N_FFT as f64
}

/// The 66 filter edge frequencies, uniform in Mel between 300 Hz and 8 kHz.
pub fn edge_frequencies() -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(F_MIN), hz_to_mel(F_MAX));
    (0..N_MELS + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (N_MELS + 1) as f64))
        .collect()
}

pub(crate) fn filterbank() -> &'static Filterbank {
    static BANK: OnceLock<Filterbank> = OnceLock::new();
    BANK.get_or_init(|| {
        let bin_width = SAMPLE_RATE as f64 / N_FFT as f64;
        let edge_bins: Vec<usize> = edge_frequencies()
            .iter()
            .map(|&f| ((f / bin_width).round() as usize).min(N_BINS - 1))
            .collect();
        let mut weights = vec![0.0; N_MELS * N_BINS];
        for m in 0..N_MELS {
            let (l, c, r) = (edge_bins[m], edge_bins[m + 1], edge_bins[m + 2]);
            let row = &mut weights[m * N_BINS..(m + 1) * N_BINS];
            for (k, w) in row.iter_mut().enumerate().take(r + 1).skip(l) {
                *w = if k == c {
                    1.0
                } else if k < c {
                    (k - l) as f64 / (c - l) as f64
                } else {
                    (r - k) as f64 / (r - c) as f64
                };
            }
        }
        let row_sums = weights.chunks_exact(N_BINS).map(|r| r.iter().sum()).collect();
        let col_sums = (0..N_BINS)
            .map(|k| (0..N_MELS).map(|m| weights[m * N_BINS + k]).sum())
            .collect();
        Filterbank {
            weights,
            row_sums,
            col_sums,
            edge_bins,
        }
    })
}

/// The Mel filterbank as a `[64, 513]` tensor.
pub fn mel_matrix() -> Tensor<f32> {
    let bank = filterbank();
    Tensor::new(
        vec![N_MELS, N_BINS],
        bank.weights.iter().map(|&w| w as f32).collect(),
    )
    .expect("filterbank dims")
}

/// Normalized log-Mel spectrogram, frame-major `frames x 64`, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    frames: usize,
    data: Vec<f32>,
}

impl MelSpectrogram {
    pub fn new(frames: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != frames * N_MELS {
            return Err(Error::shape(format!(
                "mel spectrogram of {frames} frames needs {} values, got {}",
                frames * N_MELS,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "mel value {} at frame {}, band {} is outside [0, 1]",
                data[i],
                i / N_MELS,
                i % N_MELS
            )));
        }
        Ok(MelSpectrogram { frames, data })
    }

    pub fn zeros(frames: usize) -> Self {
        MelSpectrogram {
            frames,
            data: vec![0.0; frames * N_MELS],
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.data[i * N_MELS..(i + 1) * N_MELS]
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new(vec![self.frames, N_MELS], self.data.clone()).expect("mel dims")
    }

    pub fn from_tensor(t: &Tensor<f32>) -> Result<Self> {
        if t.ndim() != 2 || t.dims()[1] != N_MELS {
            return Err(Error::shape(format!(
                "mel tensor must be [frames, {N_MELS}], got {:?}",
                t.dims()
            )));
        }
        Self::new(t.dims()[0], t.data().to_vec())
    }
}

/// Linear magnitude spectrogram, frame-major `frames x 513`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMagnitude {
    frames: usize,
    data: Vec<f32>,
}

impl LinearMagnitude {
    pub fn new(frames: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != frames * N_BINS {
            return Err(Error::shape(format!(
                "magnitude of {frames} frames needs {} values, got {}",
                frames * N_BINS,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("magnitude element {i} is {}", data[i])));
        }
        if let Some(i) = data.iter().position(|&v| v < 0.0) {
            return Err(Error::invalid(format!("negative magnitude {} at element {i}", data[i])));
        }
        Ok(LinearMagnitude { frames, data })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Magnitude of a real signal's STFT.
    pub fn of_audio(audio: &AudioClip) -> Result<Self> {
        let spec = super::stft(audio.samples())?;
        Self::new(spec.frames, spec.bins.iter().map(|c| c.norm() as f32).collect())
    }
}

/// Encodes audio as a normalized log-Mel spectrogram.
///
/// The clip is peak-normalized, analysed, projected onto the filterbank and
/// converted to dB; the clip's loudest cell maps to 1 and anything 80 dB or
/// more below it maps to 0. Digital silence encodes to all zeros.
pub fn mel_encode(audio: &AudioClip) -> Result<MelSpectrogram> {
    if audio.is_empty() {
        return Err(Error::invalid("mel_encode: empty audio"));
    }
    let frames = super::stft::frame_count(audio.len());
    if frames == 0 {
        return Err(Error::invalid(format!(
            "mel_encode: {} samples is shorter than one hop",
            audio.len()
        )));
    }
    if audio.peak() == 0.0 {
        return Ok(MelSpectrogram::zeros(frames));
    }
    let normalized = audio.peak_normalized();
    let x: Vec<f64> = normalized.samples().iter().map(|&s| s as f64).collect();
    let spec = stft_f64(&x);
    let bank = filterbank();
    let mut db = Vec::with_capacity(frames * N_MELS);
    let mut power = vec![0.0; N_BINS];
    for f in 0..frames {
        for (p, c) in power.iter_mut().zip(spec.frame(f)) {
            *p = c.norm_sqr();
        }
        for m in 0..N_MELS {
            let row = &bank.weights[m * N_BINS..(m + 1) * N_BINS];
            let e: f64 = row.iter().zip(&power).map(|(w, p)| w * p).sum();
            db.push(10.0 * (e + POWER_FLOOR).log10());
        }
    }
    let max_db = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let data = db
        .iter()
        .map(|&d| ((d - max_db + DB_RANGE) / DB_RANGE).clamp(0.0, 1.0) as f32)
        .collect();
    MelSpectrogram::new(frames, data)
}

/// Maps a normalized Mel spectrogram back to a linear magnitude spectrogram,
/// taking `gain_db` as the level of a cell with value 1.
///
/// Band powers above the floor are spread uniformly over each filter's
/// support (divided by the filter's weight sum) and recombined per bin
/// through the transposed filterbank normalized by the bin's weight sum.
/// The `-80 dB` floor itself is spread flat over every bin, so an all-zero
/// input decodes to a uniform magnitude of `10^((gain_db - 80) / 20)`.
pub fn mel_decode(mel: &MelSpectrogram, gain_db: f64) -> Result<LinearMagnitude> {
    if let Some(i) = mel.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid(format!(
            "mel_decode: value {} at element {i} is outside [0, 1]",
            mel.data()[i]
        )));
    }
    let bank = filterbank();
    let floor = 10f64.powf((gain_db - DB_RANGE) / 10.0);
    let mut data = Vec::with_capacity(mel.frames() * N_BINS);
    let mut excess = vec![0.0f64; N_MELS];
    for f in 0..mel.frames() {
        for (m, (e, &v)) in excess.iter_mut().zip(mel.frame(f)).enumerate() {
            let p = 10f64.powf((DB_RANGE * v as f64 - DB_RANGE + gain_db) / 10.0);
            *e = (p - floor).max(0.0) / bank.row_sums[m];
        }
        for k in 0..N_BINS {
            let mut lin = floor;
            if bank.col_sums[k] > 0.0 {
                let s: f64 = (0..N_MELS).map(|m| bank.weights[m * N_BINS + k] * excess[m]).sum();
                lin += s / bank.col_sums[k];
            }
            data.push(lin.max(0.0).sqrt() as f32);
        }
    }
    LinearMagnitude::new(mel.frames(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn htk_edges() {
        assert!((hz_to_mel(300.0) - 401.97).abs() < 0.01);
        assert!((hz_to_mel(8000.0) - 2840.023).abs() < 0.001);
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
        let e = edge_frequencies();
        assert_eq!(e.len(), 66);
        assert!((e[0] - 300.0).abs() < 1e-9 && (e[65] - 8000.0).abs() < 1e-6);
    }

    #[test]
    fn filters_peak_at_one_and_touch_neighbours_only() {
        let bank = filterbank();
        for m in 0..N_MELS {
            let row = &bank.weights[m * N_BINS..(m + 1) * N_BINS];
            let peak = row.iter().copied().fold(0.0, f64::max);
            assert_eq!(peak, 1.0, "filter {m}");
            assert_eq!(row[bank.edge_bins[m + 1]], 1.0);
            for other in 0..N_MELS {
                if other + 1 < m || other > m + 1 {
                    let o = &bank.weights[other * N_BINS..(other + 1) * N_BINS];
                    assert!(row.iter().zip(o).all(|(a, b)| a * b == 0.0), "{m} overlaps {other}");
                }
            }
        }
    }

    #[test]
    fn no_weight_below_300_hz() {
        let bank = filterbank();
        for k in 0..=19 {
            assert!(bin_hz(k) <= 300.0);
            assert_eq!(bank.col_sums[k], 0.0, "bin {k}");
        }
    }

    #[test]
    fn decode_rejects_out_of_range() {
        let mel = MelSpectrogram {
            frames: 1,
            data: vec![1.5; N_MELS],
        };
        assert!(mel_decode(&mel, 0.0).is_err());
        assert!(MelSpectrogram::new(1, vec![-0.1; N_MELS]).is_err());
    }
}
