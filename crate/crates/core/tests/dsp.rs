mod common;

use common::{mean_abs_diff, sine, speech_like};
use proptest::prelude::*;
use silent_speech::dsp::{
    griffin_lim, griffin_lim_traced, hz_to_mel, istft, mel_decode, mel_encode, mel_matrix, stft, wav,
    wav_read, wav_write, AudioClip, LinearMagnitude, MelSpectrogram, DEFAULT_ITERS, N_BINS, N_MELS,
};
use silent_speech::tensor::RngStream;
use silent_speech::Error;

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::MIN), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

fn mean_spectrum(audio: &AudioClip) -> Vec<f64> {
    let spec = stft(audio.samples()).unwrap();
    let mut acc = vec![0.0; N_BINS];
    for f in 0..spec.frames {
        for (a, c) in acc.iter_mut().zip(spec.frame(f)) {
            *a += c.norm();
        }
    }
    acc
}

#[test]
fn stft_geometry_and_zeros() {
    let spec = stft(&vec![0.0; 58_880]).unwrap();
    assert_eq!(spec.frames, 184);
    assert_eq!(spec.bins.len(), 184 * 513);
    assert!(spec.bins.iter().all(|c| c.norm() == 0.0));
    assert!(stft(&[]).is_err());
}

#[test]
fn sine_peaks_at_bin_64_every_frame() {
    let spec = stft(sine(1000.0, 16_000).samples()).unwrap();
    for f in 2..spec.frames - 2 {
        let mags: Vec<f64> = spec.frame(f).iter().map(|c| c.norm()).collect();
        assert_eq!(argmax(&mags), 64, "frame {f}");
    }
}

#[test]
fn istft_inverts_stft_on_interior_samples() {
    let audio = speech_like(3, 16_000);
    let spec = stft(audio.samples()).unwrap();
    let back = istft(&spec, audio.len());
    let err = audio
        .samples()
        .iter()
        .zip(&back)
        .skip(512)
        .take(audio.len() - 1024)
        .map(|(a, b)| (*a as f64 - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-4, "max interior error {err}");
}

#[test]
fn mel_matrix_geometry() {
    let m = mel_matrix();
    assert_eq!(m.dims(), &[64, 513]);
    // Exact HTK values, then the rounded figures commonly quoted for them.
    assert!((hz_to_mel(300.0) - 401.970_586_163).abs() < 1e-6);
    assert!((hz_to_mel(8000.0) - 2_840.023_046_708).abs() < 1e-6);
    assert!((hz_to_mel(300.0) - 401.97).abs() < 0.01);
    assert!((hz_to_mel(8000.0) - 2840.04).abs() < 0.05);
    for row in m.data().chunks(513) {
        assert!(row.iter().any(|&w| w > 0.0));
        assert!(row.iter().all(|&w| w >= 0.0));
    }
    assert!(m.data()[..20].iter().all(|&w| w == 0.0));
}

#[test]
fn encode_shapes_silence_and_max() {
    let mel = mel_encode(&speech_like(1, 58_880)).unwrap();
    assert_eq!(mel.frames(), 184);
    assert_eq!(mel.data().len(), 184 * 64);
    assert_eq!(mel.data().iter().copied().fold(0.0, f32::max), 1.0);
    let silent = mel_encode(&AudioClip::new(vec![0.0; 3200]).unwrap()).unwrap();
    assert!(silent.data().iter().all(|&v| v == 0.0));
    assert!(mel_encode(&AudioClip::new(vec![]).unwrap()).is_err());
}

#[test]
fn decode_zero_mel_is_uniform_floor() {
    let lin = mel_decode(&MelSpectrogram::zeros(184), 0.0).unwrap();
    assert_eq!(lin.frames(), 184);
    assert_eq!(lin.data().len(), 184 * 513);
    let first = lin.data()[0];
    assert!(first > 0.0 && first <= 1e-4);
    assert!(lin.data().iter().all(|&v| v == first));
}

#[test]
fn codec_round_trip_on_speech_like_clips() {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let mel = mel_encode(&speech_like(seed, 58_880)).unwrap();
        let mut rng = RngStream::new(seed, "gl-init");
        let audio = griffin_lim(&mel_decode(&mel, 0.0).unwrap(), DEFAULT_ITERS, &mut rng).unwrap();
        let again = mel_encode(&audio).unwrap();
        let mae = mean_abs_diff(mel.data(), again.data());
        worst = worst.max(mae);
    }
    eprintln!("worst round-trip MAE {worst:.4}");
    assert!(worst < 0.08, "worst round-trip MAE {worst}");
}

#[test]
fn griffin_lim_error_is_monotone() {
    for seed in 0..5 {
        let mut rng = RngStream::new(seed, "magnitudes");
        let frames = 40;
        let data = (0..frames * N_BINS).map(|_| rng.uniform() as f32).collect();
        let mag = LinearMagnitude::new(frames, data).unwrap();
        let (audio, errors) = griffin_lim_traced(&mag, DEFAULT_ITERS, &mut RngStream::new(seed, "gl-init")).unwrap();
        assert_eq!(audio.len(), frames * 320);
        assert_eq!(errors.len(), DEFAULT_ITERS + 1);
        for w in errors.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "error rose {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn griffin_lim_recovers_sine_frequency() {
    let mag = LinearMagnitude::of_audio(&sine(1000.0, 16_000)).unwrap();
    let audio = griffin_lim(&mag, DEFAULT_ITERS, &mut RngStream::new(0, "gl-init")).unwrap();
    let peak = argmax(&mean_spectrum(&audio));
    assert!((63..=65).contains(&peak), "peak bin {peak}");
    assert!((audio.peak() - 0.99).abs() < 1e-6);
}

#[test]
fn griffin_lim_edge_cases() {
    let zero = LinearMagnitude::new(10, vec![0.0; 10 * N_BINS]).unwrap();
    let audio = griffin_lim(&zero, 5, &mut RngStream::new(0, "gl-init")).unwrap();
    assert!(audio.samples().iter().all(|&s| s == 0.0));
    let mut neg = vec![0.0; N_BINS];
    neg[3] = -1.0;
    assert!(matches!(LinearMagnitude::new(1, neg), Err(Error::Invalid(_))));
    let mag = LinearMagnitude::of_audio(&speech_like(9, 8000)).unwrap();
    let a = griffin_lim(&mag, 10, &mut RngStream::new(4, "gl-init")).unwrap();
    let b = griffin_lim(&mag, 10, &mut RngStream::new(4, "gl-init")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn wav_examples() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zeros.wav");
    let zeros = AudioClip::new(vec![0.0; 16_000]).unwrap();
    wav_write(&path, &zeros).unwrap();
    assert_eq!(wav_read(&path).unwrap(), zeros);
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 44 + 32_000);

    let half = wav::decode(&wav::encode(&AudioClip::new(vec![0.5]).unwrap())).unwrap();
    assert!((half.samples()[0] - 0.5).abs() <= 1.0 / 32768.0);

    let truncated = dir.path().join("short.wav");
    std::fs::write(&truncated, b"RIFF\x24\x00\x00\x00WAVEfmt ").unwrap();
    assert!(matches!(wav_read(&truncated), Err(Error::Format(_))));
    assert!(matches!(wav_read(dir.path().join("missing.wav")), Err(Error::Io { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn wav_round_trip_within_one_lsb(samples in prop::collection::vec(-1.0f32..=1.0, 1..400)) {
        let audio = AudioClip::new(samples).unwrap();
        let back = wav::decode(&wav::encode(&audio)).unwrap();
        for (a, b) in audio.samples().iter().zip(back.samples()) {
            prop_assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn encoding_is_amplitude_invariant(seed in 0u64..1000, scale in 0.01f32..4.0) {
        let audio = speech_like(seed, 4800);
        let scaled = AudioClip::new(audio.samples().iter().map(|s| s * 0.5).collect()).unwrap();
        prop_assert_eq!(mel_encode(&audio).unwrap(), mel_encode(&scaled).unwrap());
        let other = AudioClip::new(audio.samples().iter().map(|s| s * scale).collect()).unwrap();
        let enc = mel_encode(&other).unwrap();
        prop_assert!(enc.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn decode_is_non_negative(values in prop::collection::vec(0.0f32..=1.0, N_MELS * 3), gain in -20.0f64..20.0) {
        let mel = MelSpectrogram::new(3, values).unwrap();
        let lin = mel_decode(&mel, gain).unwrap();
        prop_assert!(lin.data().iter().all(|&v| v >= 0.0 && v.is_finite()));
    }
}
