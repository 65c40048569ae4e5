//! Trains both networks on a 40-clip synthetic corpus and compares Net1
//! alone against Net1+Net2 on 10 held-out clips.
//!
//! `cargo run --release --example refine -- [net1_epochs] [net2_epochs]`

use silent_speech::dataset::{align, make_pairs, synth_corpus, PreparedClip, SynthConfig, TrainingPair};
use silent_speech::eval::evaluate;
use silent_speech::models::{train_net1, train_net2, Net1Config, Net2TrainConfig, TrainConfig};

fn main() -> silent_speech::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>().ok());
    let net1_epochs = args.next().flatten().unwrap_or(4);
    let net2_epochs = args.next().flatten().unwrap_or(30);
    let seed = 7;

    let corpus = synth_corpus(seed, 50, 3.68, &SynthConfig::default())?;
    let prepared = corpus
        .iter()
        .map(|c| PreparedClip::new(&c.id, &align(&c.frames, &c.audio, c.video_lag_ms)?))
        .collect::<silent_speech::Result<Vec<_>>>()?;
    drop(corpus);
    let (train, held_out) = prepared.split_at(40);

    let pairs: Vec<TrainingPair> = train.iter().flat_map(|c| make_pairs(&c.frames, &c.mel)).collect();
    let t1 = TrainConfig {
        epochs: net1_epochs,
        batch_size: 16,
        lr: 1e-3,
        max_steps: None,
        seed,
    };
    let (net1, r1) = train_net1(&pairs, &[], Net1Config::default(), &t1)?;
    r1.ensure_completed()?;
    println!("net1: {} steps, epoch losses {:?}, {:.0} s", r1.steps, r1.epoch_losses, r1.wall_time_s);

    let mut t2 = Net2TrainConfig::default();
    t2.train.epochs = net2_epochs;
    t2.train.seed = seed;
    let (net2, r2) = train_net2(&net1, train, &t2)?;
    r2.ensure_completed()?;
    println!("net2: {} steps, last epoch loss {:?}, {:.0} s", r2.steps, r2.epoch_losses.last(), r2.wall_time_s);

    let ids: Vec<String> = train.iter().map(|c| c.id.clone()).collect();
    let report = evaluate(&net1, &net2, held_out, &ids, 60, seed)?;
    print!("{report}");
    Ok(())
}
