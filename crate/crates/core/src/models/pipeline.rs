//! End-to-end inference: frames -> Net1 -> Net2 -> Griffin-Lim audio.

use crate::dataset::{pair_centers, FrameClip, SegmentGrid, HALF_WINDOW, SEGMENT_FRAMES, WINDOW};
use crate::dsp::{griffin_lim, mel_decode, AudioClip, MelSpectrogram, HOP, N_MELS, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::tensor::RngStream;

use super::{Net1, Net2};

/// Runs Net1 on every valid 13-frame window of `frames` (Mel frames
/// `0..n_mel`) and places each output at its Mel index on the 184-frame
/// grid. The mask marks the placed frames.
pub fn stitch_net1(net1: &Net1, frames: &FrameClip, n_mel: usize) -> Result<SegmentGrid> {
    if frames.len() < WINDOW {
        return Err(Error::invalid(format!(
            "need ≥ {WINDOW} frames for one window, got {}",
            frames.len()
        )));
    }
    if frames.height() != net1.config.frame_size || frames.width() != net1.config.frame_size {
        return Err(Error::shape(format!(
            "frames are {}x{}, net1 expects {}x{}",
            frames.height(),
            frames.width(),
            net1.config.frame_size,
            net1.config.frame_size
        )));
    }
    if net1.config.outputs != N_MELS {
        return Err(Error::shape(format!("net1 produces {} bands, expected {N_MELS}", net1.config.outputs)));
    }
    let centers: Vec<(usize, usize)> = pair_centers(frames.len(), n_mel)
        .into_iter()
        .filter(|&(i, _)| i < SEGMENT_FRAMES)
        .collect();
    let windows: Vec<&[f32]> = centers
        .iter()
        .map(|&(_, c)| frames.frames(c - HALF_WINDOW, WINDOW))
        .collect();
    let pred = net1.predict(&windows)?;
    let mut grid = SegmentGrid {
        data: vec![0.0; SEGMENT_FRAMES * N_MELS],
        mask: vec![false; SEGMENT_FRAMES],
    };
    for (&(i, _), row) in centers.iter().zip(pred.chunks(N_MELS)) {
        grid.data[i * N_MELS..(i + 1) * N_MELS].copy_from_slice(row);
        grid.mask[i] = true;
    }
    Ok(grid)
}

/// Mel frames spanned by a clip of `n_frames` video frames.
pub fn mel_frames_for(n_frames: usize) -> usize {
    let samples = n_frames * SAMPLE_RATE as usize / 30;
    samples / HOP
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    /// Net1 outputs on the 184-frame grid (zeros where no window fits).
    pub net1_mel: MelSpectrogram,
    pub net2_mel: MelSpectrogram,
    /// Frames covered by Net1.
    pub mask: Vec<bool>,
    /// Audio reconstructed from the refined spectrogram.
    pub audio: AudioClip,
    /// Audio reconstructed from the Net1 spectrogram, when requested.
    pub net1_audio: Option<AudioClip>,
}

/// Converts a frame clip to audio through both networks.
pub fn pipeline_infer(
    frames: &FrameClip,
    net1: &Net1,
    net2: &Net2,
    gl_iters: usize,
    with_net1_audio: bool,
    rng: &mut RngStream,
) -> Result<PipelineOutput> {
    let grid = stitch_net1(net1, frames, mel_frames_for(frames.len()))?;
    if net2.config.length != SEGMENT_FRAMES || net2.config.mels != N_MELS {
        return Err(Error::shape(format!(
            "net2 expects {}x{} grids, the pipeline produces {SEGMENT_FRAMES}x{N_MELS}",
            net2.config.length, net2.config.mels
        )));
    }
    let refined = net2.predict(&grid.data)?;
    let net1_mel = MelSpectrogram::new(SEGMENT_FRAMES, grid.data)?;
    let net2_mel = MelSpectrogram::new(SEGMENT_FRAMES, refined)?;
    let mut gl_rng = rng.derive("gl-init");
    let audio = griffin_lim(&mel_decode(&net2_mel, 0.0)?, gl_iters, &mut gl_rng)?;
    let net1_audio = if with_net1_audio {
        Some(griffin_lim(&mel_decode(&net1_mel, 0.0)?, gl_iters, &mut gl_rng)?)
    } else {
        None
    };
    Ok(PipelineOutput {
        net1_mel,
        net2_mel,
        mask: grid.mask,
        audio,
        net1_audio,
    })
}
