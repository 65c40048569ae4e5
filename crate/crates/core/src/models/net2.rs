//! Spectrogram refinement network: a bank of 1-D convolutions with kernel
//! sizes 1..=8 feeding a three-level 1-D U-Net.
//!
//! Encoder level: `conv k3 -> maxpool /2 -> leaky -> dropout`, keeping the
//! pre-pool activation as the skip. Decoder level: `deconv k2 s2 -> concat
//! skip -> conv k3 -> leaky`. A linear `k1` convolution projects back to the
//! Mel bands.

use serde::{Deserialize, Serialize};

use crate::dataset::SEGMENT_FRAMES;
use crate::dsp::N_MELS;
use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamSet, Real, RngStream, Tensor, Var};

use super::layers::{bind, clamp_unit, he_uniform, RunningUpdate, Scope, LEAKY_SLOPE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Net2Config {
    pub mels: usize,
    pub length: usize,
    /// The bank holds one filter group for every kernel size `1..=bank_kernels`.
    pub bank_kernels: usize,
    pub bank_width: usize,
    pub width: usize,
    pub depth: usize,
    pub dropout: f64,
}

impl Default for Net2Config {
    fn default() -> Self {
        Net2Config {
            mels: N_MELS,
            length: SEGMENT_FRAMES,
            bank_kernels: 8,
            bank_width: 16,
            width: 128,
            depth: 3,
            dropout: 0.2,
        }
    }
}

impl Net2Config {
    /// Small variant for finite-difference checks.
    pub fn reduced() -> Self {
        Net2Config {
            mels: 3,
            length: 16,
            bank_kernels: 8,
            bank_width: 1,
            width: 3,
            depth: 3,
            dropout: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mels == 0 || self.bank_kernels == 0 || self.bank_width == 0 || self.width == 0 || self.depth == 0 {
            return Err(Error::invalid(format!("net2: all widths must be positive in {self:?}")));
        }
        if self.length == 0 || !self.length.is_multiple_of(1 << self.depth) {
            return Err(Error::invalid(format!(
                "net2: length {} must be a positive multiple of 2^{}",
                self.length, self.depth
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("net2: dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Sequence length at each encoder level, input first.
    pub fn level_lengths(&self) -> Vec<usize> {
        (0..=self.depth).map(|l| self.length >> l).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Net2<T: Real = f32> {
    pub config: Net2Config,
    pub params: ParamSet<T>,
}

impl<T: Real> Net2<T> {
    pub fn init(config: Net2Config, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut params = ParamSet::new();
        for k in 1..=c.bank_kernels {
            params.insert(format!("bank{k}.weight"), he_uniform(vec![c.bank_width, c.mels, k], c.mels * k, rng), true)?;
            params.insert(format!("bank{k}.bias"), Tensor::zeros(vec![c.bank_width]), true)?;
        }
        let mut cin = c.bank_kernels * c.bank_width;
        for l in 1..=c.depth {
            params.insert(format!("enc{l}.weight"), he_uniform(vec![c.width, cin, 3], cin * 3, rng), true)?;
            params.insert(format!("enc{l}.bias"), Tensor::zeros(vec![c.width]), true)?;
            cin = c.width;
        }
        for l in (1..=c.depth).rev() {
            params.insert(
                format!("dec{l}.up.weight"),
                he_uniform(vec![c.width, c.width, 2], c.width, rng),
                true,
            )?;
            params.insert(format!("dec{l}.up.bias"), Tensor::zeros(vec![c.width]), true)?;
            params.insert(
                format!("dec{l}.merge.weight"),
                he_uniform(vec![c.width, 2 * c.width, 3], 2 * c.width * 3, rng),
                true,
            )?;
            params.insert(format!("dec{l}.merge.bias"), Tensor::zeros(vec![c.width]), true)?;
        }
        params.insert("out.weight", he_uniform(vec![c.mels, c.width, 1], c.width, rng), true)?;
        params.insert("out.bias", Tensor::zeros(vec![c.mels]), true)?;
        Ok(Net2 { config, params })
    }

    pub fn bind(&self, g: &mut Graph<T>, with_grads: bool) -> Vec<Var> {
        bind(g, &self.params, with_grads)
    }

    /// Runs `input` (`[B, mels, length]`, channel-major) through the
    /// network. Returns the unclamped output of the same shape.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        input: Var,
        vars: &[Var],
        training: bool,
        rng: &mut RngStream,
    ) -> Result<(Var, Vec<RunningUpdate<T>>)> {
        let c = &self.config;
        let dims = g.dims(input);
        if dims.len() != 3 || dims[1] != c.mels || dims[2] != c.length {
            return Err(Error::shape(format!(
                "net2: input must be [batch, {}, {}], got {dims:?}",
                c.mels, c.length
            )));
        }
        let alpha = T::lit(LEAKY_SLOPE);
        let s = Scope::new(&self.params, vars, training);
        let mut bank = g.conv1d_same(input, s.var("bank1.weight")?, s.var("bank1.bias")?)?;
        for k in 2..=c.bank_kernels {
            let branch = g.conv1d_same(input, s.var(&format!("bank{k}.weight"))?, s.var(&format!("bank{k}.bias"))?)?;
            bank = g.concat(bank, branch)?;
        }
        let mut x = g.leaky_relu(bank, alpha)?;
        let mut skips = Vec::with_capacity(c.depth);
        for l in 1..=c.depth {
            let conv = g.conv1d_same(x, s.var(&format!("enc{l}.weight"))?, s.var(&format!("enc{l}.bias"))?)?;
            skips.push(conv);
            x = g.maxpool1d(conv)?;
            x = g.leaky_relu(x, alpha)?;
            x = g.dropout(x, c.dropout, rng, training)?;
        }
        for l in (1..=c.depth).rev() {
            x = g.deconv1d(x, s.var(&format!("dec{l}.up.weight"))?, Some(s.var(&format!("dec{l}.up.bias"))?))?;
            x = g.concat(x, skips[l - 1])?;
            x = g.conv1d_same(x, s.var(&format!("dec{l}.merge.weight"))?, s.var(&format!("dec{l}.merge.bias"))?)?;
            x = g.leaky_relu(x, alpha)?;
        }
        let y = g.conv1d_same(x, s.var("out.weight")?, s.var("out.bias")?)?;
        Ok((y, s.updates))
    }

    /// Inference on one frame-major `length x mels` grid; returns the
    /// refined grid in the same layout, clamped to `[0, 1]`.
    pub fn predict(&self, grid: &[f32]) -> Result<Vec<f32>> {
        let c = &self.config;
        if grid.len() != c.length * c.mels {
            return Err(Error::shape(format!(
                "net2: grid has {} values, expected {}x{}",
                grid.len(),
                c.length,
                c.mels
            )));
        }
        let mut g = Graph::new();
        let input = g.constant(Tensor::new(
            vec![1, c.mels, c.length],
            transpose(grid, c.length, c.mels).into_iter().map(|v| T::lit(v as f64)).collect(),
        )?);
        let vars = self.bind(&mut g, false);
        let mut rng = RngStream::new(0, "inference");
        let (y, _) = self.forward(&mut g, input, &vars, false, &mut rng)?;
        let out = clamp_unit(g.value(y).data());
        Ok(transpose(&out, c.mels, c.length))
    }
}

/// Transposes a row-major `rows x cols` matrix.
pub(crate) fn transpose(m: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0.0; m.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = m[r * cols + c];
        }
    }
    out
}
