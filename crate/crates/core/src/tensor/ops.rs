//! Graph-free versions of the differentiable operators, for one-off
//! evaluation and tests.

use crate::error::{Error, Result};

use super::{Graph, Real, RngStream, RunningStats, Tensor};

fn unary<T: Real>(x: &Tensor<T>, f: impl FnOnce(&mut Graph<T>, super::Var) -> Result<super::Var>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let v = g.constant(x.clone());
    let out = f(&mut g, v)?;
    Ok(g.take_value(out))
}

pub fn conv2d<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>, stride: usize, pad: usize) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let (x, w, b) = (g.constant(input.clone()), g.constant(weight.clone()), g.constant(bias.clone()));
    let out = g.conv2d(x, w, b, stride, pad)?;
    Ok(g.take_value(out))
}

pub fn conv1d_same<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let (x, w, b) = (g.constant(input.clone()), g.constant(weight.clone()), g.constant(bias.clone()));
    let out = g.conv1d_same(x, w, b)?;
    Ok(g.take_value(out))
}

pub fn deconv1d<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let (x, w) = (g.constant(input.clone()), g.constant(weight.clone()));
    let b = bias.map(|b| g.constant(b.clone()));
    let out = g.deconv1d(x, w, b)?;
    Ok(g.take_value(out))
}

pub fn dense<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let (x, w, b) = (g.constant(input.clone()), g.constant(weight.clone()), g.constant(bias.clone()));
    let out = g.dense(x, w, b)?;
    Ok(g.take_value(out))
}

pub fn leaky_relu<T: Real>(x: &Tensor<T>, alpha: T) -> Result<Tensor<T>> {
    unary(x, |g, v| g.leaky_relu(v, alpha))
}

pub fn dropout<T: Real>(x: &Tensor<T>, p: f64, rng: &mut RngStream, training: bool) -> Result<Tensor<T>> {
    unary(x, |g, v| g.dropout(v, p, rng, training))
}

pub fn batchnorm<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: &mut RunningStats<T>,
    training: bool,
) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let (v, ga, be) = (g.constant(x.clone()), g.constant(gamma.clone()), g.constant(beta.clone()));
    let out = g.batchnorm(v, ga, be, running, training)?;
    Ok(g.take_value(out))
}

pub fn maxpool1d<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    unary(x, |g, v| g.maxpool1d(v))
}

pub fn concat<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let (x, y) = (g.constant(a.clone()), g.constant(b.clone()));
    let out = g.concat(x, y)?;
    Ok(g.take_value(out))
}

pub fn mse<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    if pred.dims() != target.dims() {
        return Err(Error::shape(format!(
            "mse: prediction dims {:?} differ from target dims {:?}",
            pred.dims(),
            target.dims()
        )));
    }
    let mut g = Graph::new();
    let p = g.constant(pred.clone());
    let l = g.mse(p, target)?;
    g.scalar(l)
}
