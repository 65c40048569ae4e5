//! Video/audio alignment, supervision pairs for the frame network, fixed
//! length segments for the refinement network, augmentation, the synthetic
//! corpus and the `SVT1` tensor container.

mod clip;
mod pairs;
pub mod svt;
pub mod synth;

pub use clip::{align, AlignedClip, FrameClip, PreparedClip, FPS, FRAME_SIZE};
pub use pairs::{
    augment_gaussian, make_pairs, pair_centers, segment_net2, Net2Segment, SegmentGrid, TrainingPair, HALF_WINDOW,
    SEGMENT_FRAMES, WINDOW,
};
pub use svt::{SvtTensor, TensorSet};
pub use synth::{harmonic_hz, load_frames, synth_clip, synth_corpus, SynthClip, SynthConfig, LATENT_DIMS};

/// Default video delay applied by [`align`], in milliseconds.
pub const DEFAULT_DELAY_MS: f64 = 300.0;
/// Default standard deviation of the Mel-input augmentation noise.
pub const DEFAULT_SIGMA: f64 = 0.05;
/// Default number of augmented copies per clip.
pub const DEFAULT_AUGMENT_COUNT: usize = 8;
