//! Mini-batch Adam training for both networks.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{augment_gaussian, segment_net2, Net2Segment, PreparedClip, TrainingPair};
use crate::error::{Error, Result};
use crate::tensor::{AdamState, Graph, ParamSet, RngStream, Tensor, Var};

use super::layers::{apply_running, RunningUpdate};
use super::net2::transpose;
use super::pipeline::stitch_net1;
use super::{Net1, Net1Config, Net2, Net2Config};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Stop after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 8,
            lr: 1e-3,
            max_steps: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Net2TrainConfig {
    pub train: TrainConfig,
    pub net: Net2Config,
    pub sigma: f64,
    pub augment_count: usize,
}

impl Default for Net2TrainConfig {
    fn default() -> Self {
        Net2TrainConfig {
            train: TrainConfig {
                epochs: 30,
                batch_size: 4,
                ..TrainConfig::default()
            },
            net: Net2Config::default(),
            sigma: crate::dataset::DEFAULT_SIGMA,
            augment_count: crate::dataset::DEFAULT_AUGMENT_COUNT,
        }
    }
}

/// Loss history of one training run. Wall time is informational and is
/// ignored by equality and serialization, so identical runs compare equal.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub examples: usize,
    pub steps: usize,
    pub step_losses: Vec<f64>,
    pub epoch_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub seeds: Vec<(String, u64)>,
    /// Why training stopped early, if it did.
    pub abort: Option<String>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl PartialEq for TrainReport {
    fn eq(&self, other: &Self) -> bool {
        self.examples == other.examples
            && self.steps == other.steps
            && self.step_losses == other.step_losses
            && self.epoch_losses == other.epoch_losses
            && self.val_losses == other.val_losses
            && self.seeds == other.seeds
            && self.abort == other.abort
    }
}

impl TrainReport {
    /// Turns an aborted run into an error.
    pub fn ensure_completed(&self) -> Result<()> {
        match &self.abort {
            Some(why) => Err(Error::NonFinite(why.clone())),
            None => Ok(()),
        }
    }
}

struct Batch {
    input: Tensor<f32>,
    target: Tensor<f32>,
    weights: Option<Vec<f32>>,
}

trait Trainable {
    fn params(&self) -> &ParamSet<f32>;
    fn params_mut(&mut self) -> &mut ParamSet<f32>;
    fn bind(&self, g: &mut Graph<f32>) -> Vec<Var>;
    fn forward(&self, g: &mut Graph<f32>, input: Var, vars: &[Var], rng: &mut RngStream)
        -> Result<(Var, Vec<RunningUpdate<f32>>)>;
    /// Smallest batch the model can train on.
    fn min_batch(&self) -> usize;
}

impl Trainable for Net1 {
    fn params(&self) -> &ParamSet<f32> {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet<f32> {
        &mut self.params
    }
    fn bind(&self, g: &mut Graph<f32>) -> Vec<Var> {
        Net1::bind(self, g, true)
    }
    fn forward(&self, g: &mut Graph<f32>, input: Var, vars: &[Var], rng: &mut RngStream) -> Result<(Var, Vec<RunningUpdate<f32>>)> {
        Net1::forward(self, g, input, vars, true, rng)
    }
    fn min_batch(&self) -> usize {
        2
    }
}

impl Trainable for Net2 {
    fn params(&self) -> &ParamSet<f32> {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet<f32> {
        &mut self.params
    }
    fn bind(&self, g: &mut Graph<f32>) -> Vec<Var> {
        Net2::bind(self, g, true)
    }
    fn forward(&self, g: &mut Graph<f32>, input: Var, vars: &[Var], rng: &mut RngStream) -> Result<(Var, Vec<RunningUpdate<f32>>)> {
        Net2::forward(self, g, input, vars, true, rng)
    }
    fn min_batch(&self) -> usize {
        1
    }
}

fn run<M: Trainable>(
    model: &mut M,
    examples: usize,
    config: &TrainConfig,
    mut make_batch: impl FnMut(&[usize]) -> Result<Batch>,
    mut validate: impl FnMut(&M) -> Result<Option<f64>>,
    report: &mut TrainReport,
) -> Result<()> {
    if config.batch_size < model.min_batch() {
        return Err(Error::invalid(format!(
            "batch size {} is below the minimum of {}",
            config.batch_size,
            model.min_batch()
        )));
    }
    if !(config.lr > 0.0 && config.lr.is_finite()) {
        return Err(Error::invalid(format!("learning rate {} must be positive", config.lr)));
    }
    let start = Instant::now();
    let mut adam = AdamState::new(config.lr);
    let mut shuffle = RngStream::new(config.seed, "shuffle");
    let mut dropout = RngStream::new(config.seed, "dropout");
    report.seeds.push(("shuffle".into(), config.seed));
    report.seeds.push(("dropout".into(), config.seed));
    report.examples = examples;
    let mut order: Vec<usize> = (0..examples).collect();
    'epochs: for epoch in 0..config.epochs {
        shuffle.shuffle(&mut order);
        let (mut sum, mut count) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            if config.max_steps.is_some_and(|max| report.steps >= max) {
                break 'epochs;
            }
            if chunk.len() < model.min_batch() {
                continue;
            }
            let batch = make_batch(chunk)?;
            let mut g = Graph::new();
            let input = g.constant(batch.input);
            let vars = model.bind(&mut g);
            let (y, updates) = model.forward(&mut g, input, &vars, &mut dropout)?;
            let loss = match batch.weights {
                Some(w) => g.masked_mse(y, &batch.target, w)?,
                None => g.mse(y, &batch.target)?,
            };
            let value = g.scalar(loss)? as f64;
            if !value.is_finite() {
                report.abort = Some(format!("loss became {value} at epoch {epoch}, step {}", report.steps));
                break 'epochs;
            }
            g.backward(loss)?;
            let grads: Vec<Option<Vec<f32>>> = vars
                .iter()
                .zip(model.params().iter())
                .map(|(&v, p)| if p.trainable { g.take_grad(v) } else { None })
                .collect();
            let bad = grads
                .iter()
                .zip(model.params().iter())
                .find(|(gr, _)| gr.as_ref().is_some_and(|gr| gr.iter().any(|x| !x.is_finite())));
            if let Some((_, p)) = bad {
                report.abort = Some(format!("non-finite gradient for `{}` at step {}", p.name, report.steps));
                break 'epochs;
            }
            adam.step(model.params_mut(), &grads)?;
            apply_running(model.params_mut(), updates);
            report.steps += 1;
            report.step_losses.push(value);
            sum += value;
            count += 1;
        }
        if count > 0 {
            report.epoch_losses.push(sum / count as f64);
        }
        if let Some(v) = validate(model)? {
            report.val_losses.push(v);
        }
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(())
}

/// Mean squared error of clamped inference outputs over `pairs`.
pub fn net1_mse(net: &Net1, pairs: &[TrainingPair<'_>]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("net1_mse: no pairs"));
    }
    let windows: Vec<&[f32]> = pairs.iter().map(|p| p.window).collect();
    let pred = net.predict(&windows)?;
    let n = net.config.outputs;
    let mut sum = 0.0;
    for (p, row) in pairs.iter().zip(pred.chunks(n)) {
        sum += p.target.iter().zip(row).map(|(t, y)| ((t - y) as f64).powi(2)).sum::<f64>();
    }
    Ok(sum / (pairs.len() * n) as f64)
}

/// Trains Net1 on `pairs` with MSE and Adam; `validation` (possibly empty)
/// is scored in inference mode after every epoch.
///
/// A non-finite loss or gradient stops training early; the returned network
/// then holds the last finite parameters and the report records why.
pub fn train_net1(
    pairs: &[TrainingPair<'_>],
    validation: &[TrainingPair<'_>],
    net_config: Net1Config,
    config: &TrainConfig,
) -> Result<(Net1, TrainReport)> {
    if pairs.is_empty() {
        return Err(Error::invalid("train_net1: no training pairs"));
    }
    let mut report = TrainReport::default();
    report.seeds.push(("init".into(), config.seed));
    let mut net = Net1::init(net_config, &mut RngStream::new(config.seed, "init"))?;
    let c = net.config.clone();
    let per = c.window * c.frame_size * c.frame_size;
    let make_batch = |idx: &[usize]| -> Result<Batch> {
        let mut input = Vec::with_capacity(idx.len() * per);
        let mut target = Vec::with_capacity(idx.len() * c.outputs);
        for &i in idx {
            let p = &pairs[i];
            if p.window.len() != per || p.target.len() != c.outputs {
                return Err(Error::shape(format!(
                    "train_net1: pair {i} has a {}-value window and {}-value target, expected {per} and {}",
                    p.window.len(),
                    p.target.len(),
                    c.outputs
                )));
            }
            input.extend_from_slice(p.window);
            target.extend_from_slice(p.target);
        }
        Ok(Batch {
            input: Tensor::new(vec![idx.len(), c.window, c.frame_size, c.frame_size], input)?,
            target: Tensor::new(vec![idx.len(), c.outputs], target)?,
            weights: None,
        })
    };
    let validate = |net: &Net1| {
        if validation.is_empty() {
            Ok(None)
        } else {
            net1_mse(net, validation).map(Some)
        }
    };
    run(&mut net, pairs.len(), config, make_batch, validate, &mut report)?;
    Ok((net, report))
}

/// Net2 supervision for each clip: Net1 inference outputs stitched onto the
/// 184-frame grid as input, the clip's own segmented Mel as target, and a
/// mask of frames that are both real and covered by Net1.
pub fn net2_segments(net1: &Net1, clips: &[PreparedClip]) -> Result<Vec<Net2Segment>> {
    clips
        .iter()
        .map(|clip| {
            let input = stitch_net1(net1, &clip.frames, clip.mel.frames())?;
            let target = segment_net2(&clip.mel);
            let mask = input.mask.iter().zip(&target.mask).map(|(a, b)| *a && *b).collect();
            Ok(Net2Segment {
                id: clip.id.clone(),
                input: input.data,
                target: target.data,
                mask,
            })
        })
        .collect()
}

/// Masked MSE between two frame-major grids over frames where `mask` holds.
pub fn masked_mse(pred: &[f32], target: &[f32], mask: &[bool]) -> f64 {
    let bands = pred.len() / mask.len().max(1);
    let (mut sum, mut n) = (0.0, 0usize);
    for (t, &m) in mask.iter().enumerate() {
        if m {
            for k in t * bands..(t + 1) * bands {
                sum += ((pred[k] - target[k]) as f64).powi(2);
            }
            n += bands;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Trains Net2 to map Net1's stitched predictions onto the teacher
/// spectrograms of `clips`, with Gaussian-augmented inputs and a masked MSE.
pub fn train_net2(net1: &Net1, clips: &[PreparedClip], config: &Net2TrainConfig) -> Result<(Net2, TrainReport)> {
    if clips.is_empty() {
        return Err(Error::invalid("train_net2: empty corpus"));
    }
    let t = &config.train;
    let segments = net2_segments(net1, clips)?;
    let mut augment_rng = RngStream::new(t.seed, "augment");
    let mut inputs = Vec::with_capacity(segments.len() * config.augment_count);
    for (s, seg) in segments.iter().enumerate() {
        for copy in augment_gaussian(&seg.input, config.sigma, config.augment_count, &mut augment_rng)? {
            inputs.push((s, copy));
        }
    }
    let mut report = TrainReport::default();
    report.seeds.push(("init".into(), t.seed));
    report.seeds.push(("augment".into(), t.seed));
    let mut net = Net2::init(config.net.clone(), &mut RngStream::new(t.seed, "init"))?;
    let c = net.config.clone();
    let make_batch = |idx: &[usize]| -> Result<Batch> {
        let mut input = Vec::with_capacity(idx.len() * c.mels * c.length);
        let mut target = Vec::with_capacity(idx.len() * c.mels * c.length);
        let mut weights = Vec::with_capacity(idx.len() * c.mels * c.length);
        for &i in idx {
            let (s, grid) = &inputs[i];
            let seg = &segments[*s];
            input.extend(transpose(grid, c.length, c.mels));
            target.extend(transpose(&seg.target, c.length, c.mels));
            for _ in 0..c.mels {
                weights.extend(seg.mask.iter().map(|&m| if m { 1.0f32 } else { 0.0 }));
            }
        }
        Ok(Batch {
            input: Tensor::new(vec![idx.len(), c.mels, c.length], input)?,
            target: Tensor::new(vec![idx.len(), c.mels, c.length], target)?,
            weights: Some(weights),
        })
    };
    run(&mut net, inputs.len(), t, make_batch, |_| Ok(None), &mut report)?;
    Ok((net, report))
}
