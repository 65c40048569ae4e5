#![allow(dead_code)]

use silent_speech::dsp::{AudioClip, SAMPLE_RATE};
use silent_speech::tensor::RngStream;

/// Pure sine at `hz`, unit amplitude.
pub fn sine(hz: f64, samples: usize) -> AudioClip {
    let sr = SAMPLE_RATE as f64;
    AudioClip::new(
        (0..samples)
            .map(|n| (2.0 * std::f64::consts::PI * hz * n as f64 / sr).sin() as f32)
            .collect(),
    )
    .unwrap()
}

/// Vowel-like test signal: a glottal pulse train with a drifting pitch,
/// shaped by three resonators whose centre frequencies wander, under a
/// syllabic loudness envelope.
pub fn speech_like(seed: u64, samples: usize) -> AudioClip {
    let mut rng = RngStream::new(seed, "speech-like");
    let sr = SAMPLE_RATE as f64;
    let f0 = rng.uniform_range(100.0, 220.0);
    let vib = rng.uniform_range(0.5, 3.0);
    let formants: Vec<(f64, f64, f64)> = [(500.0, 900.0), (1000.0, 2200.0), (2300.0, 3300.0)]
        .iter()
        .map(|&(lo, hi)| (rng.uniform_range(lo, hi), rng.uniform_range(0.2, 1.5), rng.uniform_range(0.0, std::f64::consts::TAU)))
        .collect();
    let syllable = rng.uniform_range(2.0, 5.0);
    let mut phase = 0.0f64;
    let mut pulse = vec![0.0f64; samples];
    for (n, p) in pulse.iter_mut().enumerate() {
        let t = n as f64 / sr;
        phase += (f0 * (1.0 + 0.1 * (2.0 * std::f64::consts::PI * vib * t).sin())) / sr;
        if phase >= 1.0 {
            phase -= 1.0;
            *p = 1.0;
        }
        *p += 0.02 * rng.normal();
    }
    let mut out = vec![0.0f64; samples];
    for &(fc, rate, ph) in &formants {
        let (mut y1, mut y2) = (0.0, 0.0);
        let bw = 120.0;
        let r = (-std::f64::consts::PI * bw / sr).exp();
        for n in 0..samples {
            let t = n as f64 / sr;
            let f = fc * (1.0 + 0.15 * (2.0 * std::f64::consts::PI * rate * t + ph).sin());
            let c = 2.0 * r * (2.0 * std::f64::consts::PI * f / sr).cos();
            let y = pulse[n] + c * y1 - r * r * y2;
            y2 = y1;
            y1 = y;
            out[n] += y;
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    AudioClip::new(
        out.iter()
            .enumerate()
            .map(|(n, v)| {
                let t = n as f64 / sr;
                let env = 0.55 - 0.45 * (2.0 * std::f64::consts::PI * syllable * t).cos();
                (v / peak * env) as f32
            })
            .collect(),
    )
    .unwrap()
}

pub fn mean_abs_diff(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / a.len() as f64
}
