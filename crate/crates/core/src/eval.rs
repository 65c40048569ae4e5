//! Spectrogram-space metrics on held-out clips.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::{segment_net2, Net2Segment, PreparedClip};
use crate::dsp::{griffin_lim, mel_decode, mel_encode, MelSpectrogram};
use crate::error::{Error, Result};
use crate::models::{masked_mse, net2_segments, Net1, Net2};
use crate::tensor::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub clips: usize,
    /// Masked MSE of Net1's stitched output against the teacher Mel.
    pub net1_mse: f64,
    /// Masked MSE of Net2's refinement of that output.
    pub net2_mse: f64,
    /// Mean absolute Mel error after decoding the teacher spectrogram,
    /// running Griffin-Lim and re-encoding.
    pub gl_mel_mae: f64,
}

impl EvalReport {
    /// `net2_mse / net1_mse`; below 1 when refinement helps.
    pub fn ratio(&self) -> f64 {
        if self.net1_mse == 0.0 {
            if self.net2_mse == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            self.net2_mse / self.net1_mse
        }
    }

    pub fn healthy(&self) -> bool {
        self.net2_mse <= self.net1_mse
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "held-out clips      {}", self.clips)?;
        writeln!(f, "net1 masked MSE     {:.6}", self.net1_mse)?;
        writeln!(f, "net1+net2 masked MSE {:.6}", self.net2_mse)?;
        writeln!(f, "ratio net2/net1     {:.4}", self.ratio())?;
        writeln!(f, "griffin-lim mel MAE {:.6}", self.gl_mel_mae)?;
        writeln!(f, "status              {}", if self.healthy() { "ok" } else { "net2 worse than net1" })
    }
}

/// Rejects held-out clips whose ids also appear in `train_ids`.
pub fn check_disjoint(held_out: &[PreparedClip], train_ids: &[String]) -> Result<()> {
    let train: BTreeSet<&str> = train_ids.iter().map(String::as_str).collect();
    let overlap: Vec<&str> = held_out.iter().map(|c| c.id.as_str()).filter(|id| train.contains(id)).collect();
    if overlap.is_empty() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "held-out clips overlap the training set: {}",
            overlap.join(", ")
        )))
    }
}

/// Average masked MSE of `predict(segment)` against each segment's target.
/// Each segment contributes in proportion to its masked frame count.
pub fn score(segments: &[Net2Segment], mut predict: impl FnMut(&Net2Segment) -> Result<Vec<f32>>) -> Result<f64> {
    let (mut sum, mut frames) = (0.0, 0usize);
    for seg in segments {
        let n = seg.mask.iter().filter(|&&m| m).count();
        sum += masked_mse(&predict(seg)?, &seg.target, &seg.mask) * n as f64;
        frames += n;
    }
    Ok(if frames == 0 { 0.0 } else { sum / frames as f64 })
}

/// Round-trip error of the codec on one teacher spectrogram.
pub fn griffin_lim_error(mel: &MelSpectrogram, iters: usize, rng: &mut RngStream) -> Result<f64> {
    let audio = griffin_lim(&mel_decode(mel, 0.0)?, iters, rng)?;
    let again = mel_encode(&audio)?;
    let (a, b) = (segment_net2(mel), segment_net2(&again));
    let n = mel.frames().min(again.frames()).min(a.mask.len());
    let bands = crate::dsp::N_MELS;
    let sum: f64 = (0..n * bands).map(|k| (a.data[k] - b.data[k]).abs() as f64).sum();
    Ok(sum / (n * bands).max(1) as f64)
}

/// Scores Net1 alone and Net1+Net2 on `held_out`, after checking it shares
/// no clip with `train_ids`.
pub fn evaluate(
    net1: &Net1,
    net2: &Net2,
    held_out: &[PreparedClip],
    train_ids: &[String],
    gl_iters: usize,
    seed: u64,
) -> Result<EvalReport> {
    if held_out.is_empty() {
        return Err(Error::invalid("evaluate: no held-out clips"));
    }
    check_disjoint(held_out, train_ids)?;
    let segments = net2_segments(net1, held_out)?;
    let net1_mse = score(&segments, |s| Ok(s.input.clone()))?;
    let net2_mse = score(&segments, |s| net2.predict(&s.input))?;
    let mut rng = RngStream::new(seed, "gl-init");
    let mut gl = 0.0;
    for clip in held_out {
        gl += griffin_lim_error(&clip.mel, gl_iters, &mut rng)?;
    }
    Ok(EvalReport {
        clips: held_out.len(),
        net1_mse,
        net2_mse,
        gl_mel_mae: gl / held_out.len() as f64,
    })
}
