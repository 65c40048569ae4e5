use crate::dsp::{MelSpectrogram, N_MELS};
use crate::error::{Error, Result};
use crate::tensor::RngStream;

use super::FrameClip;

/// Frames per Net1 input window.
pub const WINDOW: usize = 13;
pub const HALF_WINDOW: usize = WINDOW / 2;
/// Fixed Net2 segment length in Mel frames (3.68 s at a 20 ms hop).
pub const SEGMENT_FRAMES: usize = 184;

/// A window of 13 consecutive frames and the Mel vector at its centre time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingPair<'a> {
    /// `13 x height x width`, oldest frame first.
    pub window: &'a [f32],
    pub target: &'a [f32],
    /// Index of the Mel frame this pair supervises.
    pub mel_index: usize,
    pub center_frame: usize,
    pub center_time: f64,
}

/// Centre frame nearest to Mel frame `i`: `round(30 * 0.02 * i)`.
fn center_of(i: usize) -> usize {
    // 0.6 * i never lands on a half integer, so this is exact rounding.
    (6 * i + 5) / 10
}

/// `(mel_index, center_frame)` for every Mel frame whose 13-frame window
/// lies entirely inside a clip of `n_frames` frames.
pub fn pair_centers(n_frames: usize, n_mel: usize) -> Vec<(usize, usize)> {
    (0..n_mel)
        .map(|i| (i, center_of(i)))
        .filter(|&(_, c)| c >= HALF_WINDOW && c + HALF_WINDOW < n_frames)
        .collect()
}

/// Pairs every Mel frame with the frame window centred on its time, keeping
/// only windows fully inside the clip. Ordered by Mel index.
pub fn make_pairs<'a>(frames: &'a FrameClip, mel: &'a MelSpectrogram) -> Vec<TrainingPair<'a>> {
    pair_centers(frames.len(), mel.frames())
        .into_iter()
        .map(|(i, c)| TrainingPair {
            window: frames.frames(c - HALF_WINDOW, WINDOW),
            target: mel.frame(i),
            mel_index: i,
            center_frame: c,
            center_time: 0.02 * i as f64,
        })
        .collect()
}

/// A fixed-length `184 x 64` Mel grid with a per-frame validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentGrid {
    pub data: Vec<f32>,
    pub mask: Vec<bool>,
}

impl SegmentGrid {
    pub fn valid_frames(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.data[i * N_MELS..(i + 1) * N_MELS]
    }
}

/// Trims to the first 184 frames or right-pads with zero frames.
pub fn segment_net2(mel: &MelSpectrogram) -> SegmentGrid {
    let real = mel.frames().min(SEGMENT_FRAMES);
    let mut data = vec![0.0; SEGMENT_FRAMES * N_MELS];
    data[..real * N_MELS].copy_from_slice(&mel.data()[..real * N_MELS]);
    let mask = (0..SEGMENT_FRAMES).map(|i| i < real).collect();
    SegmentGrid { data, mask }
}

/// One Net2 training example: Net1 predictions in, teacher Mel out, with the
/// frames that carry loss.
#[derive(Clone, Debug, PartialEq)]
pub struct Net2Segment {
    pub id: String,
    pub input: Vec<f32>,
    pub target: Vec<f32>,
    pub mask: Vec<bool>,
}

/// `count` copies of `grid`, each with i.i.d. `N(0, sigma^2)` noise added and
/// clipped to `[0, 1]`.
pub fn augment_gaussian(grid: &[f32], sigma: f64, count: usize, rng: &mut RngStream) -> Result<Vec<Vec<f32>>> {
    if count == 0 {
        return Err(Error::invalid("augment_gaussian: count must be positive"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("augment_gaussian: sigma {sigma} must be finite and >= 0")));
    }
    if grid.len() != SEGMENT_FRAMES * N_MELS {
        return Err(Error::shape(format!(
            "augment_gaussian: grid has {} values, expected {SEGMENT_FRAMES}x{N_MELS}",
            grid.len()
        )));
    }
    Ok((0..count)
        .map(|_| {
            grid.iter()
                .map(|&v| {
                    if sigma == 0.0 {
                        v
                    } else {
                        (v as f64 + sigma * rng.normal()).clamp(0.0, 1.0) as f32
                    }
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_exact() {
        for i in 0..10_000 {
            assert_eq!(center_of(i), (0.6 * i as f64).round() as usize, "i = {i}");
        }
    }

    #[test]
    fn full_segment_pairs() {
        let centers = pair_centers(110, 184);
        assert_eq!(centers.len(), 163);
        assert_eq!(centers[0], (10, 6));
        assert_eq!(centers.last().unwrap().0, 172);
        assert!(pair_centers(12, 184).is_empty());
    }

    #[test]
    fn segment_pads_and_trims() {
        let short = segment_net2(&MelSpectrogram::new(100, vec![0.5; 100 * N_MELS]).unwrap());
        assert_eq!(short.valid_frames(), 100);
        assert!(short.data[100 * N_MELS..].iter().all(|&v| v == 0.0));
        let long = MelSpectrogram::new(200, (0..200 * N_MELS).map(|i| (i % 7) as f32 / 7.0).collect()).unwrap();
        let seg = segment_net2(&long);
        assert_eq!(seg.valid_frames(), 184);
        assert_eq!(&seg.data[..], &long.data()[..184 * N_MELS]);
    }

    #[test]
    fn augment_rejects_bad_arguments() {
        let grid = vec![0.5; SEGMENT_FRAMES * N_MELS];
        let mut rng = RngStream::new(0, "augment");
        assert!(augment_gaussian(&grid, 0.1, 0, &mut rng).is_err());
        assert!(augment_gaussian(&grid, -0.1, 1, &mut rng).is_err());
        assert!(augment_gaussian(&grid[1..], 0.1, 1, &mut rng).is_err());
    }
}
