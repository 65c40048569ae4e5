//! Generates a few synthetic clips, aligns them and counts the Net1
//! training pairs and Net2 segments they yield.
//!
//! `cargo run --release --example synth_pairs -- [clips]`

use silent_speech::dataset::{align, make_pairs, segment_net2, synth_corpus, PreparedClip, SynthConfig};

fn main() -> silent_speech::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let config = SynthConfig {
        video_lag_ms: 300.0,
        ..SynthConfig::default()
    };
    let mut total = 0;
    for clip in synth_corpus(42, n, 3.68, &config)? {
        let prepared = PreparedClip::new(&clip.id, &align(&clip.frames, &clip.audio, clip.video_lag_ms)?)?;
        let pairs = make_pairs(&prepared.frames, &prepared.mel);
        let grid = segment_net2(&prepared.mel);
        let first = &pairs[0];
        println!(
            "{}: {} frames of {}x{}, {} Mel frames, {} pairs (first centre frame {} at {:.2} s), {} segment frames",
            clip.id,
            prepared.frames.len(),
            prepared.frames.height(),
            prepared.frames.width(),
            prepared.mel.frames(),
            pairs.len(),
            first.center_frame,
            first.center_time,
            grid.valid_frames(),
        );
        total += pairs.len();
    }
    println!("{total} pairs in total");
    Ok(())
}
