//! Audio to Mel-spectrogram codec, Griffin-Lim phase reconstruction and
//! 16-bit PCM WAV I/O.
//!
//! Analysis uses a 1024-sample Hann window with a 320-sample (20 ms) hop at
//! 16 kHz; the Mel filterbank has 64 HTK-scale triangular bands spanning
//! 300 Hz to 8 kHz.

mod audio;
pub mod griffin_lim;
pub mod mel;
pub mod stft;
pub mod wav;

pub use audio::AudioClip;
pub use griffin_lim::{griffin_lim, griffin_lim_traced, DEFAULT_ITERS};
pub use mel::{hz_to_mel, mel_decode, mel_encode, mel_matrix, mel_to_hz, LinearMagnitude, MelSpectrogram};
pub use stft::{istft, stft, ComplexSpectrogram};
pub use wav::{wav_read, wav_write};

pub const SAMPLE_RATE: u32 = 16_000;
pub const N_FFT: usize = 1024;
pub const HOP: usize = 320;
pub const N_BINS: usize = N_FFT / 2 + 1;
pub const N_MELS: usize = 64;
pub const F_MIN: f64 = 300.0;
pub const F_MAX: f64 = 8000.0;
/// Dynamic range below the clip maximum mapped onto `[0, 1]`.
pub const DB_RANGE: f64 = 80.0;
/// Peak level applied before analysis.
pub const PEAK: f32 = 0.99;
