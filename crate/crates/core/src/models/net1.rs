//! Frame-window network: 13 stacked frames in, one 64-band Mel vector out.
//!
//! Four `conv 4x4 / stride 2 -> leaky -> dropout -> batch-norm` blocks halve
//! the spatial size each time; the result is flattened and passed through
//! `dense -> leaky -> dropout -> dense -> leaky`.

use serde::{Deserialize, Serialize};

use crate::dataset::{FRAME_SIZE, WINDOW};
use crate::dsp::N_MELS;
use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamSet, Real, RngStream, Tensor, Var};

use super::layers::{bind, clamp_unit, he_uniform, insert_batchnorm, RunningUpdate, Scope, LEAKY_SLOPE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Net1Config {
    pub frame_size: usize,
    pub window: usize,
    pub channels: [usize; 4],
    pub hidden: usize,
    pub outputs: usize,
    pub dropout: f64,
}

impl Default for Net1Config {
    fn default() -> Self {
        Net1Config {
            frame_size: FRAME_SIZE,
            window: WINDOW,
            channels: [16, 32, 64, 128],
            hidden: 512,
            outputs: N_MELS,
            dropout: 0.2,
        }
    }
}

impl Net1Config {
    /// Small variant for finite-difference checks on 16x16 frames.
    pub fn reduced() -> Self {
        Net1Config {
            frame_size: 16,
            window: WINDOW,
            channels: [2, 3, 3, 4],
            hidden: 6,
            outputs: 5,
            dropout: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_size < 16 || !self.frame_size.is_multiple_of(16) {
            return Err(Error::invalid(format!(
                "net1: frame size {} must be a positive multiple of 16",
                self.frame_size
            )));
        }
        if self.window == 0 || self.hidden == 0 || self.outputs == 0 || self.channels.contains(&0) {
            return Err(Error::invalid(format!("net1: all widths must be positive in {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("net1: dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Flattened feature count after the conv stack.
    pub fn flat_features(&self) -> usize {
        let side = self.frame_size / 16;
        self.channels[3] * side * side
    }

    /// Closed-form count of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        let mut total = 0;
        let mut cin = self.window;
        for &c in &self.channels {
            total += c * cin * 16 + c + 2 * c;
            cin = c;
        }
        total + self.flat_features() * self.hidden + self.hidden + self.hidden * self.outputs + self.outputs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Net1<T: Real = f32> {
    pub config: Net1Config,
    pub params: ParamSet<T>,
}

impl<T: Real> Net1<T> {
    /// He-uniform conv/dense weights, zero biases, unit gamma, zero beta.
    pub fn init(config: Net1Config, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let mut cin = config.window;
        for (i, &c) in config.channels.iter().enumerate() {
            let n = i + 1;
            params.insert(format!("conv{n}.weight"), he_uniform(vec![c, cin, 4, 4], cin * 16, rng), true)?;
            params.insert(format!("conv{n}.bias"), Tensor::zeros(vec![c]), true)?;
            insert_batchnorm(&mut params, &format!("bn{n}"), c)?;
            cin = c;
        }
        let flat = config.flat_features();
        params.insert("dense1.weight", he_uniform(vec![config.hidden, flat], flat, rng), true)?;
        params.insert("dense1.bias", Tensor::zeros(vec![config.hidden]), true)?;
        params.insert(
            "dense2.weight",
            he_uniform(vec![config.outputs, config.hidden], config.hidden, rng),
            true,
        )?;
        params.insert("dense2.bias", Tensor::zeros(vec![config.outputs]), true)?;
        Ok(Net1 { config, params })
    }

    /// Adds the parameters to `g`; see [`Net1::forward`].
    pub fn bind(&self, g: &mut Graph<T>, with_grads: bool) -> Vec<Var> {
        bind(g, &self.params, with_grads)
    }

    /// Runs `input` (`[B, window, S, S]`) through the network with the
    /// parameters bound as `vars` (one per entry of `params`). Returns the
    /// unclamped `[B, outputs]` node and, in training, the new batch-norm
    /// running statistics.
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
        if dims.len() != 4 || dims[1..] != [c.window, c.frame_size, c.frame_size] {
            return Err(Error::shape(format!(
                "net1: input must be [batch, {}, {}, {}], got {dims:?}",
                c.window, c.frame_size, c.frame_size
            )));
        }
        let batch = dims[0];
        let alpha = T::lit(LEAKY_SLOPE);
        let mut s = Scope::new(&self.params, vars, training);
        let mut x = input;
        for n in 1..=4 {
            x = g.conv2d(x, s.var(&format!("conv{n}.weight"))?, s.var(&format!("conv{n}.bias"))?, 2, 1)?;
            x = g.leaky_relu(x, alpha)?;
            x = g.dropout(x, c.dropout, rng, training)?;
            x = s.batchnorm(g, x, &format!("bn{n}"))?;
        }
        x = g.reshape(x, vec![batch, c.flat_features()])?;
        x = g.dense(x, s.var("dense1.weight")?, s.var("dense1.bias")?)?;
        x = g.leaky_relu(x, alpha)?;
        x = g.dropout(x, c.dropout, rng, training)?;
        x = g.dense(x, s.var("dense2.weight")?, s.var("dense2.bias")?)?;
        x = g.leaky_relu(x, alpha)?;
        Ok((x, s.updates))
    }

    /// Inference on a batch of windows, each `window x S x S` values.
    /// Outputs are clamped to `[0, 1]`, `outputs` values per window.
    pub fn predict(&self, windows: &[&[f32]]) -> Result<Vec<f32>> {
        let c = &self.config;
        let per = c.window * c.frame_size * c.frame_size;
        let mut out = Vec::with_capacity(windows.len() * c.outputs);
        // Dropout is inactive at inference, so this stream is never drawn from.
        let mut rng = RngStream::new(0, "inference");
        for chunk in windows.chunks(16) {
            let mut data = Vec::with_capacity(chunk.len() * per);
            for w in chunk {
                if w.len() != per {
                    return Err(Error::shape(format!(
                        "net1: window has {} values, expected {}x{}x{}",
                        w.len(),
                        c.window,
                        c.frame_size,
                        c.frame_size
                    )));
                }
                data.extend(w.iter().map(|&v| T::lit(v as f64)));
            }
            let mut g = Graph::new();
            let input = g.constant(Tensor::new(vec![chunk.len(), c.window, c.frame_size, c.frame_size], data)?);
            let vars = self.bind(&mut g, false);
            let (y, _) = self.forward(&mut g, input, &vars, false, &mut rng)?;
            out.extend(clamp_unit(g.value(y).data()));
        }
        Ok(out)
    }
}
