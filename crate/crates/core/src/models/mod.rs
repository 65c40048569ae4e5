//! The frame network (Net1), the spectrogram refinement network (Net2),
//! their training loops, checkpoints and the end-to-end inference pipeline.

pub mod check;
pub mod checkpoint;
mod layers;
pub mod net1;
pub mod net2;
pub mod pipeline;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Manifest, CHECKPOINT_VERSION};
pub use layers::{he_limit, RunningUpdate, LEAKY_SLOPE};
pub use net1::{Net1, Net1Config};
pub use net2::{Net2, Net2Config};
pub use pipeline::{mel_frames_for, pipeline_infer, stitch_net1, PipelineOutput};
pub use train::{masked_mse, net1_mse, net2_segments, train_net1, train_net2, Net2TrainConfig, TrainConfig, TrainReport};
