use crate::error::Result;
use crate::tensor::{Graph, ParamSet, Real, RngStream, RunningStats, Tensor, Var};

/// Negative-side slope of every leaky rectifier.
pub const LEAKY_SLOPE: f64 = 0.2;

/// New batch-norm running statistics produced by a training forward pass,
/// to be written back with [`apply_running`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunningUpdate<T = f32> {
    pub mean_index: usize,
    pub var_index: usize,
    pub stats: RunningStats<T>,
}

/// He-uniform tensor: `U(-limit, limit)` with `limit = sqrt(6 / fan_in)`.
pub(crate) fn he_uniform<T: Real>(dims: Vec<usize>, fan_in: usize, rng: &mut RngStream) -> Tensor<T> {
    let limit = (6.0 / fan_in as f64).sqrt();
    let n = dims.iter().product();
    let data = (0..n).map(|_| T::lit(rng.uniform_range(-limit, limit))).collect();
    Tensor::new(dims, data).expect("init dims")
}

/// Scaled-uniform limit used by [`he_uniform`].
pub fn he_limit(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

/// Adds every parameter to `g`: trainable ones as gradient leaves when
/// `with_grads` is set, everything else as constants.
pub(crate) fn bind<T: Real>(g: &mut Graph<T>, params: &ParamSet<T>, with_grads: bool) -> Vec<Var> {
    params
        .iter()
        .map(|p| {
            if with_grads && p.trainable {
                g.param(p.tensor.clone())
            } else {
                g.constant(p.tensor.clone())
            }
        })
        .collect()
}

/// Resolves parameter names to graph variables.
pub(crate) struct Scope<'a, T: Real> {
    pub params: &'a ParamSet<T>,
    pub vars: &'a [Var],
    pub training: bool,
    pub updates: Vec<RunningUpdate<T>>,
}

impl<'a, T: Real> Scope<'a, T> {
    pub fn new(params: &'a ParamSet<T>, vars: &'a [Var], training: bool) -> Self {
        assert_eq!(params.len(), vars.len(), "one graph variable per parameter");
        Scope {
            params,
            vars,
            training,
            updates: Vec::new(),
        }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        let i = self
            .params
            .index_of(name)
            .ok_or_else(|| crate::Error::MissingTensor(name.to_string()))?;
        Ok(self.vars[i])
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.params
            .index_of(name)
            .ok_or_else(|| crate::Error::MissingTensor(name.to_string()))
    }

    pub fn batchnorm(&mut self, g: &mut Graph<T>, x: Var, prefix: &str) -> Result<Var> {
        let mean_index = self.index(&format!("{prefix}.running_mean"))?;
        let var_index = self.index(&format!("{prefix}.running_var"))?;
        let mut stats = RunningStats {
            mean: self.params.entry(mean_index).tensor.data().to_vec(),
            var: self.params.entry(var_index).tensor.data().to_vec(),
        };
        let gamma = self.var(&format!("{prefix}.gamma"))?;
        let beta = self.var(&format!("{prefix}.beta"))?;
        let y = g.batchnorm(x, gamma, beta, &mut stats, self.training)?;
        if self.training {
            self.updates.push(RunningUpdate {
                mean_index,
                var_index,
                stats,
            });
        }
        Ok(y)
    }
}

/// Writes running statistics from a training pass back into `params`.
pub(crate) fn apply_running<T: Real>(params: &mut ParamSet<T>, updates: Vec<RunningUpdate<T>>) {
    for u in updates {
        params.entry_mut(u.mean_index).tensor.data_mut().copy_from_slice(&u.stats.mean);
        params.entry_mut(u.var_index).tensor.data_mut().copy_from_slice(&u.stats.var);
    }
}

/// Inserts a batch-norm layer's four tensors.
pub(crate) fn insert_batchnorm<T: Real>(params: &mut ParamSet<T>, prefix: &str, channels: usize) -> Result<()> {
    params.insert(format!("{prefix}.gamma"), Tensor::full(vec![channels], T::one()), true)?;
    params.insert(format!("{prefix}.beta"), Tensor::zeros(vec![channels]), true)?;
    params.insert(format!("{prefix}.running_mean"), Tensor::zeros(vec![channels]), false)?;
    params.insert(format!("{prefix}.running_var"), Tensor::full(vec![channels], T::one()), false)?;
    Ok(())
}

pub(crate) fn clamp_unit<T: Real>(values: &[T]) -> Vec<f32> {
    values.iter().map(|v| (Real::to_f64(*v) as f32).clamp(0.0, 1.0)).collect()
}
