use crate::dsp::{mel_encode, AudioClip, MelSpectrogram, SAMPLE_RATE};
use crate::error::{Error, Result};

pub const FPS: f64 = 30.0;
pub const FRAME_SIZE: usize = 128;

/// Grayscale frames at 30 fps, stored frame-major as `n x height x width`
/// values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameClip {
    len: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FrameClip {
    pub fn new(len: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape(format!("frame size {height}x{width} must be positive")));
        }
        if data.len() != len * height * width {
            return Err(Error::shape(format!(
                "{len} frames of {height}x{width} need {} values, got {}",
                len * height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "pixel {} of frame {} is {}, outside [0, 1]",
                i % (height * width),
                i / (height * width),
                data[i]
            )));
        }
        Ok(FrameClip {
            len,
            height,
            width,
            data,
        })
    }

    /// Builds a clip from 8-bit pixels, mapping 255 to 1.
    pub fn from_u8(len: usize, height: usize, width: usize, pixels: &[u8]) -> Result<Self> {
        Self::new(len, height, width, pixels.iter().map(|&p| p as f32 / 255.0).collect())
    }

    /// Pixels as 8-bit values (exact for clips built by [`FrameClip::from_u8`]).
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| (v * 255.0).round() as u8).collect()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width
    }

    pub fn fps(&self) -> f64 {
        FPS
    }

    pub fn duration_s(&self) -> f64 {
        self.len as f64 / FPS
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        let n = self.frame_len();
        &self.data[i * n..(i + 1) * n]
    }

    /// `count` consecutive frames starting at `start`, as one contiguous slice.
    pub fn frames(&self, start: usize, count: usize) -> &[f32] {
        let n = self.frame_len();
        &self.data[start * n..(start + count) * n]
    }

    /// Frames `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> FrameClip {
        FrameClip {
            len: end - start,
            height: self.height,
            width: self.width,
            data: self.frames(start, end - start).to_vec(),
        }
    }
}

/// Frames and audio trimmed to their common interval after delay
/// compensation. Frame `k` shows the state at audio time `k / 30` s.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedClip {
    pub frames: FrameClip,
    pub audio: AudioClip,
    pub delay_ms: f64,
}

impl AlignedClip {
    pub fn duration_s(&self) -> f64 {
        self.audio.duration_s()
    }
}

/// Shifts video timestamps by `-delay_ms` and trims both streams to their
/// overlap.
///
/// A frame stamped `j / 30` is taken to show the state at `j / 30 - delay`.
/// The kept frames are those whose shifted time falls inside the overlap;
/// the audio is cut to start exactly at the first kept frame so that frame
/// and audio clocks share an origin.
pub fn align(frames: &FrameClip, audio: &AudioClip, delay_ms: f64) -> Result<AlignedClip> {
    if frames.is_empty() || audio.is_empty() {
        return Err(Error::invalid("align: frames and audio must both be non-empty"));
    }
    if !delay_ms.is_finite() {
        return Err(Error::invalid(format!("align: delay {delay_ms} ms is not finite")));
    }
    let (dur_v, dur_a) = (frames.duration_s(), audio.duration_s());
    let d = delay_ms / 1000.0;
    if d.abs() >= dur_v.min(dur_a) {
        return Err(Error::invalid(format!(
            "align: |delay| {delay_ms} ms must be below the shorter stream ({:.3} s)",
            dur_v.min(dur_a)
        )));
    }
    let start = (-d).max(0.0);
    let end = (dur_v - d).min(dur_a);
    if end - start <= 0.0 {
        return Err(Error::invalid(format!("align: streams do not overlap ({start:.3}..{end:.3} s)")));
    }
    let eps = 1e-9;
    let j0 = ((start + d) * FPS - eps).ceil().max(0.0) as usize;
    let j1 = (((end + d) * FPS - eps).ceil().max(0.0) as usize).min(frames.len());
    if j1 <= j0 {
        return Err(Error::invalid("align: no frame falls inside the overlap"));
    }
    let t0 = j0 as f64 / FPS - d;
    let sr = SAMPLE_RATE as f64;
    let a0 = (t0 * sr).round() as usize;
    let a1 = ((end * sr).round() as usize).min(audio.len());
    if a1 <= a0 {
        return Err(Error::invalid("align: no audio falls inside the overlap"));
    }
    Ok(AlignedClip {
        frames: frames.slice(j0, j1),
        audio: audio.slice(a0, a1),
        delay_ms,
    })
}

/// An aligned clip with its teacher Mel spectrogram, ready for training.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedClip {
    pub id: String,
    pub frames: FrameClip,
    pub mel: MelSpectrogram,
}

impl PreparedClip {
    pub fn new(id: impl Into<String>, aligned: &AlignedClip) -> Result<Self> {
        Ok(PreparedClip {
            id: id.into(),
            frames: aligned.frames.clone(),
            mel: mel_encode(&aligned.audio)?,
        })
    }
}
