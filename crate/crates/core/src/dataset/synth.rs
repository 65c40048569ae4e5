//! Synthetic paired corpus with a closed-form frame-to-audio dependency.
//!
//! Each clip draws a smooth 4-dimensional latent trajectory `a(t)` in
//! `[0.1, 1]`. Frames show four Gaussian blobs whose heights encode `a(t)`
//! over a speckled background; the audio is a sum of harmonics 2..=5 of a
//! 200 Hz fundamental whose amplitude envelopes are `a(t)`.

use std::f64::consts::TAU;
use std::path::Path;

use crate::dsp::{AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::tensor::RngStream;

use super::svt::{SvtTensor, TensorSet};
use super::{FrameClip, FPS, FRAME_SIZE};

pub const LATENT_DIMS: usize = 4;
const COMPONENTS: usize = 3;
const FUNDAMENTAL_HZ: f64 = 200.0;
const FIRST_HARMONIC: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub frame_size: usize,
    /// Peak amplitude of the uniform speckle added to every pixel.
    pub frame_noise: f64,
    /// How late video timestamps are relative to the state they show.
    pub video_lag_ms: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            frame_size: FRAME_SIZE,
            frame_noise: 0.3,
            video_lag_ms: 0.0,
        }
    }
}

/// Sum-of-sinusoids trajectory per latent dimension.
#[derive(Clone, Debug)]
struct Trajectory {
    // (amplitude, frequency Hz, phase) per component, per dimension.
    comps: [[(f64, f64, f64); COMPONENTS]; LATENT_DIMS],
}

impl Trajectory {
    fn draw(rng: &mut RngStream) -> Self {
        let mut comps = [[(0.0, 0.0, 0.0); COMPONENTS]; LATENT_DIMS];
        for dim in comps.iter_mut() {
            for c in dim.iter_mut() {
                *c = (
                    rng.uniform_range(0.5, 1.0),
                    rng.uniform_range(0.5, 3.0),
                    rng.uniform_range(0.0, TAU),
                );
            }
        }
        Trajectory { comps }
    }

    fn at(&self, t: f64) -> [f64; LATENT_DIMS] {
        let mut out = [0.0; LATENT_DIMS];
        for (o, dim) in out.iter_mut().zip(&self.comps) {
            let total: f64 = dim.iter().map(|c| c.0).sum();
            let s: f64 = dim.iter().map(|&(a, f, p)| a * (TAU * f * t + p).sin()).sum();
            *o = 0.55 + 0.45 * s / total;
        }
        out
    }
}

/// Vertical blob centre (pixels) encoding latent value `a` in a frame of
/// `size` rows.
pub fn blob_row(a: f64, size: usize) -> f64 {
    (20.0 + 88.0 * a) * size as f64 / 128.0
}

/// Horizontal centre (pixels) of blob `d`.
pub fn blob_column(d: usize, size: usize) -> f64 {
    (2 * d + 1) as f64 * size as f64 / 8.0
}

pub fn blob_sigma(size: usize) -> f64 {
    4.5 * size as f64 / 128.0
}

/// One synthetic clip with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthClip {
    pub id: String,
    pub frames: FrameClip,
    pub audio: AudioClip,
    /// `frames x 4`: the latent state shown by each frame.
    pub latent: Vec<f32>,
    pub video_lag_ms: f64,
}

impl SynthClip {
    pub fn to_tensor_set(&self) -> Result<TensorSet> {
        let f = &self.frames;
        let mut set = TensorSet::new();
        set.insert("frames", SvtTensor::u8([f.len(), f.height(), f.width()], f.to_u8())?)?;
        set.insert("fps", SvtTensor::scalar(f.fps() as f32))?;
        set.insert("audio", SvtTensor::f32([self.audio.len()], self.audio.samples().to_vec())?)?;
        set.insert("sample_rate", SvtTensor::scalar(SAMPLE_RATE as f32))?;
        set.insert("latent", SvtTensor::f32([f.len(), LATENT_DIMS], self.latent.clone())?)?;
        set.insert("video_lag_ms", SvtTensor::scalar(self.video_lag_ms as f32))?;
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_tensor_set()?.pack(path)
    }

    /// Loads a clip file; the id is the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let set = TensorSet::load(path)?;
        let frames = load_frames(&set)?;
        let (_, audio) = set.f32("audio")?;
        let rate = set.scalar("sample_rate")?;
        if rate != SAMPLE_RATE as f32 {
            return Err(Error::format(format!("clip sample rate {rate} Hz, expected {SAMPLE_RATE}")));
        }
        let (dims, latent) = set.f32("latent")?;
        if dims != [frames.len(), LATENT_DIMS] {
            return Err(Error::TensorShape {
                name: "latent".into(),
                expected: vec![frames.len(), LATENT_DIMS],
                found: dims.to_vec(),
            });
        }
        Ok(SynthClip {
            id: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            frames,
            audio: AudioClip::new(audio.to_vec())?,
            latent: latent.to_vec(),
            video_lag_ms: set.scalar("video_lag_ms").unwrap_or(0.0) as f64,
        })
    }
}

/// Reads the `frames` u8 tensor (and checks `fps`) from a clip container.
pub fn load_frames(set: &TensorSet) -> Result<FrameClip> {
    let (dims, pixels) = set.u8("frames")?;
    let &[n, h, w] = dims else {
        return Err(Error::TensorShape {
            name: "frames".into(),
            expected: vec![0, FRAME_SIZE, FRAME_SIZE],
            found: dims.to_vec(),
        });
    };
    let fps = set.scalar("fps")?;
    if fps as f64 != FPS {
        return Err(Error::format(format!("clip is {fps} fps, expected {FPS}")));
    }
    FrameClip::from_u8(n, h, w, pixels)
}

/// Generates clip `index` of the corpus for `seed`. Independent of every
/// other clip.
pub fn synth_clip(seed: u64, index: usize, duration_s: f64, config: &SynthConfig) -> Result<SynthClip> {
    if !(duration_s >= 1.0 && duration_s.is_finite()) {
        return Err(Error::invalid(format!("synth: duration {duration_s} s must be at least 1 s")));
    }
    if config.frame_size < 8 || !(0.0..=1.0).contains(&config.frame_noise) || !config.video_lag_ms.is_finite() {
        return Err(Error::invalid(format!("synth: bad config {config:?}")));
    }
    let mut rng = RngStream::new(seed, "synth").derive(format!("clip-{index}"));
    let traj = Trajectory::draw(&mut rng);
    let lag = config.video_lag_ms / 1000.0;

    let size = config.frame_size;
    let n_frames = (duration_s * FPS + 1e-9).floor() as usize;
    let sigma = blob_sigma(size);
    let cols: Vec<Vec<f64>> = (0..LATENT_DIMS)
        .map(|d| {
            let cx = blob_column(d, size);
            (0..size).map(|x| (-(x as f64 - cx).powi(2) / (2.0 * sigma * sigma)).exp()).collect()
        })
        .collect();
    let mut pixels = Vec::with_capacity(n_frames * size * size);
    let mut latent = Vec::with_capacity(n_frames * LATENT_DIMS);
    let mut rows = vec![vec![0.0; size]; LATENT_DIMS];
    for j in 0..n_frames {
        let a = traj.at(j as f64 / FPS - lag);
        latent.extend(a.iter().map(|&v| v as f32));
        for (row, &ad) in rows.iter_mut().zip(&a) {
            let cy = blob_row(ad, size);
            for (y, r) in row.iter_mut().enumerate() {
                *r = (-(y as f64 - cy).powi(2) / (2.0 * sigma * sigma)).exp();
            }
        }
        #[allow(clippy::needless_range_loop)]
        for y in 0..size {
            for x in 0..size {
                let blob: f64 = (0..LATENT_DIMS).map(|d| rows[d][y] * cols[d][x]).sum();
                let v = 0.05 + config.frame_noise * rng.uniform() + 0.9 * blob;
                pixels.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    let frames = FrameClip::from_u8(n_frames, size, size, &pixels)?;

    let sr = SAMPLE_RATE as f64;
    let n_samples = (duration_s * sr).round() as usize;
    let phases: Vec<f64> = (0..LATENT_DIMS).map(|_| rng.uniform_range(0.0, TAU)).collect();
    let samples = (0..n_samples)
        .map(|n| {
            let t = n as f64 / sr;
            let a = traj.at(t);
            let s: f64 = (0..LATENT_DIMS)
                .map(|d| {
                    let hz = FUNDAMENTAL_HZ * (d + FIRST_HARMONIC) as f64;
                    a[d] * (TAU * hz * t + phases[d]).sin()
                })
                .sum();
            (0.9 * s / LATENT_DIMS as f64) as f32
        })
        .collect();
    Ok(SynthClip {
        id: format!("clip_{index:03}"),
        frames,
        audio: AudioClip::new(samples)?,
        latent,
        video_lag_ms: config.video_lag_ms,
    })
}

/// Frequency of the harmonic driven by latent dimension `d`.
pub fn harmonic_hz(d: usize) -> f64 {
    FUNDAMENTAL_HZ * (d + FIRST_HARMONIC) as f64
}

/// `n_clips` clips of `duration_s` seconds each; deterministic per seed.
pub fn synth_corpus(seed: u64, n_clips: usize, duration_s: f64, config: &SynthConfig) -> Result<Vec<SynthClip>> {
    (0..n_clips).map(|i| synth_clip(seed, i, duration_s, config)).collect()
}
