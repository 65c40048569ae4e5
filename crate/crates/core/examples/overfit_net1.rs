//! Overfits Net1 on 64 synthetic pairs and reports the inference-mode MSE.
//!
//! `cargo run --release --example overfit_net1 -- [steps]`

use silent_speech::dataset::{align, make_pairs, synth_clip, PreparedClip, SynthConfig, TrainingPair};
use silent_speech::models::{train::net1_mse, train_net1, Net1Config, TrainConfig};

fn main() -> silent_speech::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let clip = synth_clip(1, 0, 3.68, &SynthConfig::default())?;
    let prepared = PreparedClip::new(&clip.id, &align(&clip.frames, &clip.audio, 0.0)?)?;
    let pairs: Vec<TrainingPair> = make_pairs(&prepared.frames, &prepared.mel).into_iter().step_by(2).take(64).collect();
    let config = TrainConfig {
        epochs: usize::MAX,
        batch_size: 8,
        lr: 1e-3,
        max_steps: Some(steps),
        seed: 1,
    };
    let (net, report) = train_net1(&pairs, &[], Net1Config::default(), &config)?;
    report.ensure_completed()?;
    println!("steps           {}", report.steps);
    println!("first loss      {:.5}", report.step_losses[0]);
    println!("last epoch loss {:.5}", report.epoch_losses.last().copied().unwrap_or(f64::NAN));
    println!("train MSE       {:.5}", net1_mse(&net, &pairs)?);
    println!("wall time       {:.1} s", report.wall_time_s);
    Ok(())
}
