//! Encodes a WAV file (or a synthetic vowel-like tone) to a normalized Mel
//! spectrogram, inverts it with Griffin-Lim and writes the result.
//!
//! `cargo run --release --example codec_round_trip -- [input.wav] [output.wav]`

use silent_speech::dsp::{griffin_lim_traced, mel_decode, mel_encode, wav_read, wav_write, AudioClip, SAMPLE_RATE};
use silent_speech::tensor::RngStream;

fn tone() -> silent_speech::Result<AudioClip> {
    let sr = SAMPLE_RATE as f64;
    let samples = (0..58_880)
        .map(|i| {
            let t = i as f64 / sr;
            let f0 = 140.0 + 30.0 * (2.0 * std::f64::consts::PI * 1.5 * t).sin();
            (1..=12)
                .map(|h| {
                    let f = f0 * h as f64;
                    let formant = (-((f - 700.0) / 300.0).powi(2)).exp() + 0.5 * (-((f - 1200.0) / 400.0).powi(2)).exp();
                    formant * (2.0 * std::f64::consts::PI * f * t).sin()
                })
                .sum::<f64>() as f32
                * 0.2
        })
        .collect();
    AudioClip::new(samples)
}

fn main() -> silent_speech::Result<()> {
    let mut args = std::env::args().skip(1);
    let audio = match args.next() {
        Some(path) => wav_read(path)?,
        None => tone()?,
    };
    let out = args.next().unwrap_or_else(|| "round_trip.wav".into());

    let mel = mel_encode(&audio)?;
    println!("{} samples -> {} Mel frames", audio.len(), mel.frames());
    let (recon, errors) = griffin_lim_traced(&mel_decode(&mel, 0.0)?, 60, &mut RngStream::new(0, "gl-init"))?;
    for (i, e) in errors.iter().enumerate().step_by(10) {
        println!("iteration {i:2}  spectral error {e:.4}");
    }
    let again = mel_encode(&recon)?;
    let mae = mel.data().iter().zip(again.data()).map(|(a, b)| (a - b).abs() as f64).sum::<f64>() / mel.data().len() as f64;
    println!("re-encoded Mel MAE {mae:.4}");
    wav_write(&out, &recon)?;
    println!("wrote {out}");
    Ok(())
}
