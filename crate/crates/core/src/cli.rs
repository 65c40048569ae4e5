//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code: 0 on success, 1 on a
//! runtime or validation failure, 2 on an argument error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::dataset::{align, load_frames, make_pairs, synth_clip, PreparedClip, SvtTensor, SynthClip, SynthConfig, TensorSet, TrainingPair};
use crate::dsp::{griffin_lim, mel_decode, mel_encode, wav_read, wav_write, MelSpectrogram, DEFAULT_ITERS, N_MELS};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::models::{check, pipeline_infer, train_net1, train_net2, Net1, Net1Config, Net2, Net2TrainConfig, TrainConfig};
use crate::tensor::gradcheck::{operator_suite, DEFAULT_H};
use crate::tensor::RngStream;

const OPERATOR_TOLERANCE: f64 = 1e-4;
const MODEL_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "silent-speech", version, about = "Frames-to-speech pipeline: corpus synthesis, training, codec and inference")]
struct Cli {
    /// JSON file with default values for seed, epochs, batch_size, lr,
    /// sigma, augment_count, frame_noise and the corpus, net1, net2 and out
    /// paths; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic paired corpus of clip_NNN.svt files.
    Synth(SynthArgs),
    /// Train the frame network on a corpus.
    TrainNet1(TrainNet1Args),
    /// Train the refinement network on Net1 outputs over a corpus.
    TrainNet2(TrainNet2Args),
    /// Encode a WAV file into a normalized Mel spectrogram (.svt).
    Encode(EncodeArgs),
    /// Decode a Mel spectrogram (.svt) into a WAV file via Griffin-Lim.
    Decode(DecodeArgs),
    /// Convert a frame clip into speech audio through both networks.
    Infer(InferArgs),
    /// Finite-difference check of every operator and both reduced models.
    Gradcheck(GradcheckArgs),
    /// Score Net1 and Net1+Net2 on held-out clips.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    clips: usize,
    #[arg(long, default_value_t = 3.68)]
    duration: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    frame_size: usize,
    /// Speckle amplitude added to every pixel.
    #[arg(long)]
    noise: Option<f64>,
    /// Video timestamp lag relative to the audio, in milliseconds.
    #[arg(long, default_value_t = 0.0)]
    lag_ms: f64,
}

#[derive(Debug, Args)]
struct CorpusArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Leave the last N clips (by file name) out of training.
    #[arg(long, default_value_t = 0)]
    holdout: usize,
    /// Video delay compensation; defaults to the lag stored in each clip.
    #[arg(long, allow_hyphen_values = true)]
    delay_ms: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Also write the training report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainNet1Args {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainNet2Args {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    net1: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    augment_count: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long)]
    audio: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long)]
    mel: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ITERS)]
    iters: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    gain_db: f64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    net1: Option<PathBuf>,
    #[arg(long)]
    net2: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the Net1-only reconstruction.
    #[arg(long)]
    net1_out: Option<PathBuf>,
    /// Also write both spectrograms as an .svt file.
    #[arg(long)]
    mel_out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ITERS)]
    iters: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 10)]
    points: usize,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    net1: Option<PathBuf>,
    #[arg(long)]
    net2: Option<PathBuf>,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ITERS)]
    iters: usize,
    #[arg(long)]
    seed: Option<u64>,
}

/// Optional defaults read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    seed: Option<u64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    sigma: Option<f64>,
    augment_count: Option<usize>,
    frame_noise: Option<f64>,
    corpus: Option<PathBuf>,
    net1: Option<PathBuf>,
    net2: Option<PathBuf>,
    out: Option<PathBuf>,
}

impl RunConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(format!("config: `{name}` must be positive")))
            }
        };
        positive("epochs", self.epochs.is_none_or(|v| v > 0))?;
        positive("batch_size", self.batch_size.is_none_or(|v| v > 0))?;
        positive("lr", self.lr.is_none_or(|v| v > 0.0))?;
        positive("augment_count", self.augment_count.is_none_or(|v| v > 0))?;
        if self.sigma.is_some_and(|s| s < 0.0) {
            return Err(Error::invalid("config: `sigma` must be >= 0"));
        }
        let paths = [("corpus", &self.corpus), ("net1", &self.net1), ("net2", &self.net2), ("out", &self.out)];
        for (name, p) in paths {
            if p.as_ref().is_some_and(|p| p.as_os_str().is_empty()) {
                return Err(Error::invalid(format!("config: `{name}` must be a non-empty path")));
            }
        }
        Ok(())
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let config = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => synth(a, &config),
        Command::TrainNet1(a) => cmd_train_net1(a, &config),
        Command::TrainNet2(a) => cmd_train_net2(a, &config),
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a, &config),
        Command::Infer(a) => infer(a, &config),
        Command::Gradcheck(a) => gradcheck(a, &config),
        Command::Eval(a) => eval(a, &config),
    }
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .filter(|p| !p.as_os_str().is_empty())
        .ok_or_else(|| Error::invalid(format!("--{name} is required (flag or config file)")))
}

fn synth(a: SynthArgs, config: &RunConfig) -> Result<()> {
    let out = required(a.out, &config.out, "out")?;
    let synth_config = SynthConfig {
        frame_size: a.frame_size,
        frame_noise: a.noise.or(config.frame_noise).unwrap_or(SynthConfig::default().frame_noise),
        video_lag_ms: a.lag_ms,
    };
    let seed = a.seed.or(config.seed).unwrap_or(0);
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    for i in 0..a.clips {
        let clip = synth_clip(seed, i, a.duration, &synth_config)?;
        clip.save(out.join(format!("{}.svt", clip.id)))?;
    }
    println!("wrote {} clips to {}", a.clips, out.display());
    Ok(())
}

/// Clips of a corpus directory in file-name order, aligned and Mel-encoded.
fn load_corpus(dir: &Path, delay_ms: Option<f64>) -> Result<Vec<PreparedClip>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "svt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::invalid(format!("no .svt clips in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let clip = SynthClip::load(p)?;
            let aligned = align(&clip.frames, &clip.audio, delay_ms.unwrap_or(clip.video_lag_ms))?;
            PreparedClip::new(clip.id, &aligned)
        })
        .collect()
}

fn split(clips: Vec<PreparedClip>, holdout: usize) -> Result<(Vec<PreparedClip>, Vec<PreparedClip>)> {
    if holdout >= clips.len() {
        return Err(Error::invalid(format!(
            "--holdout {holdout} leaves no training clips out of {}",
            clips.len()
        )));
    }
    let mut train = clips;
    let held = train.split_off(train.len() - holdout);
    Ok((train, held))
}

fn train_config(a: &TrainArgs, config: &RunConfig, defaults: TrainConfig) -> TrainConfig {
    TrainConfig {
        epochs: a.epochs.or(config.epochs).unwrap_or(defaults.epochs),
        batch_size: a.batch_size.or(config.batch_size).unwrap_or(defaults.batch_size),
        lr: a.lr.or(config.lr).unwrap_or(defaults.lr),
        max_steps: a.max_steps.or(defaults.max_steps),
        seed: a.seed.or(config.seed).unwrap_or(defaults.seed),
    }
}

fn write_report(path: Option<&Path>, report: &crate::models::TrainReport) -> Result<()> {
    if let Some(path) = path {
        let text = serde_json::to_string_pretty(report)? + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn ids(clips: &[PreparedClip]) -> Vec<String> {
    clips.iter().map(|c| c.id.clone()).collect()
}

fn cmd_train_net1(a: TrainNet1Args, config: &RunConfig) -> Result<()> {
    let corpus = required(a.corpus.corpus, &config.corpus, "corpus")?;
    let out = required(a.out, &config.out, "out")?;
    let (train, _) = split(load_corpus(&corpus, a.corpus.delay_ms)?, a.corpus.holdout)?;
    let frame_size = train[0].frames.height();
    let pairs: Vec<TrainingPair> = train.iter().flat_map(|c| make_pairs(&c.frames, &c.mel)).collect();
    let t = train_config(&a.train, config, TrainConfig { epochs: 4, batch_size: 16, ..TrainConfig::default() });
    let net_config = Net1Config { frame_size, ..Net1Config::default() };
    let (net, report) = train_net1(&pairs, &[], net_config, &t)?;
    let hyper = serde_json::json!({ "train": t, "train_clips": ids(&train), "pairs": pairs.len() });
    net.save(&out, t.seed, hyper)?;
    write_report(a.train.report.as_deref(), &report)?;
    report.ensure_completed()?;
    println!(
        "net1: {} pairs, {} steps, final epoch loss {:.6}",
        pairs.len(),
        report.steps,
        report.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_train_net2(a: TrainNet2Args, config: &RunConfig) -> Result<()> {
    let corpus = required(a.corpus.corpus, &config.corpus, "corpus")?;
    let out = required(a.out, &config.out, "out")?;
    let (net1, _) = Net1::load(required(a.net1, &config.net1, "net1")?)?;
    let (train, _) = split(load_corpus(&corpus, a.corpus.delay_ms)?, a.corpus.holdout)?;
    let defaults = Net2TrainConfig::default();
    let t = Net2TrainConfig {
        train: train_config(&a.train, config, defaults.train.clone()),
        sigma: a.sigma.or(config.sigma).unwrap_or(defaults.sigma),
        augment_count: a.augment_count.or(config.augment_count).unwrap_or(defaults.augment_count),
        ..defaults
    };
    let (net, report) = train_net2(&net1, &train, &t)?;
    let hyper = serde_json::json!({
        "train": t.train,
        "sigma": t.sigma,
        "augment_count": t.augment_count,
        "train_clips": ids(&train),
    });
    net.save(&out, t.train.seed, hyper)?;
    write_report(a.train.report.as_deref(), &report)?;
    report.ensure_completed()?;
    println!(
        "net2: {} examples, {} steps, final epoch loss {:.6}",
        report.examples,
        report.steps,
        report.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn mel_to_set(mel: &MelSpectrogram) -> Result<TensorSet> {
    let mut set = TensorSet::new();
    set.insert("mel", SvtTensor::f32([mel.frames(), N_MELS], mel.data().to_vec())?)?;
    Ok(set)
}

fn encode(a: EncodeArgs) -> Result<()> {
    let mel = mel_encode(&wav_read(&a.audio)?)?;
    mel_to_set(&mel)?.pack(&a.out)?;
    println!("{} frames", mel.frames());
    Ok(())
}

fn decode(a: DecodeArgs, config: &RunConfig) -> Result<()> {
    let set = TensorSet::load(&a.mel)?;
    let (dims, data) = set.f32("mel")?;
    let &[frames, bands] = dims else {
        return Err(Error::TensorShape {
            name: "mel".into(),
            expected: vec![0, N_MELS],
            found: dims.to_vec(),
        });
    };
    if bands != N_MELS {
        return Err(Error::TensorShape {
            name: "mel".into(),
            expected: vec![frames, N_MELS],
            found: dims.to_vec(),
        });
    }
    let mel = MelSpectrogram::new(frames, data.to_vec())?;
    let seed = a.seed.or(config.seed).unwrap_or(0);
    let audio = griffin_lim(&mel_decode(&mel, a.gain_db)?, a.iters, &mut RngStream::new(seed, "gl-init"))?;
    wav_write(&a.out, &audio)?;
    println!("{} samples", audio.len());
    Ok(())
}

fn infer(a: InferArgs, config: &RunConfig) -> Result<()> {
    let frames = load_frames(&TensorSet::load(&a.frames)?)?;
    let (net1, _) = Net1::load(required(a.net1, &config.net1, "net1")?)?;
    let (net2, _) = Net2::load(required(a.net2, &config.net2, "net2")?)?;
    let seed = a.seed.or(config.seed).unwrap_or(0);
    let out = pipeline_infer(&frames, &net1, &net2, a.iters, a.net1_out.is_some(), &mut RngStream::new(seed, "infer"))?;
    wav_write(&a.out, &out.audio)?;
    if let (Some(path), Some(audio)) = (&a.net1_out, &out.net1_audio) {
        wav_write(path, audio)?;
    }
    if let Some(path) = &a.mel_out {
        let mut set = TensorSet::new();
        set.insert("net1_mel", SvtTensor::f32([out.net1_mel.frames(), N_MELS], out.net1_mel.data().to_vec())?)?;
        set.insert("net2_mel", SvtTensor::f32([out.net2_mel.frames(), N_MELS], out.net2_mel.data().to_vec())?)?;
        set.insert("mask", SvtTensor::u8([out.mask.len()], out.mask.iter().map(|&m| m as u8).collect())?)?;
        set.pack(path)?;
    }
    println!("{} samples", out.audio.len());
    Ok(())
}

fn gradcheck(a: GradcheckArgs, config: &RunConfig) -> Result<()> {
    let seed = a.seed.or(config.seed).unwrap_or(0);
    let mut ok = true;
    for check in operator_suite(seed, a.points, DEFAULT_H)? {
        let pass = check.max_rel_error < OPERATOR_TOLERANCE;
        ok &= pass;
        println!(
            "{:<12} {:.3e}  {}",
            check.name,
            check.max_rel_error,
            if pass { "ok" } else { "FAIL" }
        );
    }
    for (name, report) in [
        ("net1-reduced", check::net1_gradient_check(seed)?),
        ("net2-reduced", check::net2_gradient_check(seed)?),
    ] {
        let pass = report.max_rel_error < MODEL_TOLERANCE;
        ok &= pass;
        println!(
            "{name:<12} {:.3e}  {}",
            report.max_rel_error,
            if pass { "ok" } else { "FAIL" }
        );
    }
    if ok {
        Ok(())
    } else {
        Err(Error::invalid("gradient check failed"))
    }
}

fn eval(a: EvalArgs, config: &RunConfig) -> Result<()> {
    let corpus = required(a.corpus.corpus, &config.corpus, "corpus")?;
    let (net1, m1) = Net1::load(required(a.net1, &config.net1, "net1")?)?;
    let (net2, m2) = Net2::load(required(a.net2, &config.net2, "net2")?)?;
    let clips = load_corpus(&corpus, a.corpus.delay_ms)?;
    let held = if a.corpus.holdout > 0 {
        split(clips, a.corpus.holdout)?.1
    } else {
        clips
    };
    let mut train_ids: Vec<String> = Vec::new();
    for m in [&m1, &m2] {
        if let Some(list) = m.hyper.get("train_clips").and_then(|v| v.as_array()) {
            train_ids.extend(list.iter().filter_map(|v| v.as_str().map(str::to_string)));
        }
    }
    let seed = a.seed.or(config.seed).unwrap_or(0);
    let report = evaluate(&net1, &net2, &held, &train_ids, a.iters, seed)?;
    print!("{report}");
    if let Some(path) = &a.out {
        fs::write(path, report.to_string()).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
