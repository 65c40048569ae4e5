//! Trains small networks briefly on a synthetic corpus, saves and reloads
//! the checkpoints, then converts an unseen clip to speech and reports the
//! timing of each stage.
//!
//! `cargo run --release --example infer_pipeline -- [out_dir]`

use std::time::Instant;

use silent_speech::dataset::{align, make_pairs, synth_clip, synth_corpus, PreparedClip, SynthConfig, TrainingPair};
use silent_speech::dsp::wav_write;
use silent_speech::models::{pipeline_infer, train_net1, train_net2, Net1, Net1Config, Net2, Net2TrainConfig, TrainConfig};
use silent_speech::tensor::RngStream;

fn main() -> silent_speech::Result<()> {
    let out_dir = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "pipeline_out".into()));
    std::fs::create_dir_all(&out_dir).map_err(|e| silent_speech::Error::io(&out_dir, e))?;
    let config = SynthConfig::default();
    let clips = synth_corpus(3, 6, 3.68, &config)?
        .iter()
        .map(|c| PreparedClip::new(&c.id, &align(&c.frames, &c.audio, 0.0)?))
        .collect::<silent_speech::Result<Vec<_>>>()?;
    let pairs: Vec<TrainingPair> = clips.iter().flat_map(|c| make_pairs(&c.frames, &c.mel)).collect();

    let t = TrainConfig { epochs: 1, batch_size: 16, ..TrainConfig::default() };
    let (net1, _) = train_net1(&pairs, &[], Net1Config::default(), &t)?;
    let mut t2 = Net2TrainConfig::default();
    t2.train.epochs = 3;
    let (net2, _) = train_net2(&net1, &clips, &t2)?;

    let (p1, p2) = (out_dir.join("net1.svt"), out_dir.join("net2.svt"));
    net1.save(&p1, 0, serde_json::json!({}))?;
    net2.save(&p2, 0, serde_json::json!({}))?;
    let (net1, _) = Net1::load(&p1)?;
    let (net2, _) = Net2::load(&p2)?;

    let unseen = synth_clip(3, 99, 3.68, &config)?;
    let start = Instant::now();
    let out = pipeline_infer(&unseen.frames, &net1, &net2, 60, true, &mut RngStream::new(0, "infer"))?;
    println!(
        "{} frames -> {} Mel frames -> {} samples in {:.2} s",
        unseen.frames.len(),
        out.net2_mel.frames(),
        out.audio.len(),
        start.elapsed().as_secs_f64()
    );
    wav_write(out_dir.join("net1_net2.wav"), &out.audio)?;
    if let Some(a) = &out.net1_audio {
        wav_write(out_dir.join("net1_only.wav"), a)?;
    }
    wav_write(out_dir.join("reference.wav"), &unseen.audio)?;
    println!("wrote audio to {}", out_dir.display());
    Ok(())
}
