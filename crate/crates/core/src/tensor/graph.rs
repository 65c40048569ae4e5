//! Reverse-mode automatic differentiation over a linear tape.
//!
//! A [`Graph`] records every operator applied to its variables. Calling
//! [`Graph::backward`] on a scalar walks the tape in reverse and accumulates
//! gradients into every variable that (transitively) depends on a leaf with
//! `requires_grad` set. Nodes that do not need a gradient keep no backward
//! cache, so inference through a graph is cheap.

use crate::error::{Error, Result};

use super::array::numel;
use super::kernels::{self, Conv1dGeom, Conv2dGeom, DeconvGeom};
use super::real::{MatMut, MatRef};
use super::{Real, RngStream, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Running mean/variance of a batch-normalization layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T = f32> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }
}

pub const BATCHNORM_EPS: f64 = 1e-5;
pub const BATCHNORM_MOMENTUM: f64 = 0.9;

enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        geom: Conv2dGeom,
    },
    Conv1d {
        input: Var,
        weight: Var,
        bias: Var,
        geom: Conv1dGeom,
    },
    Deconv1d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: DeconvGeom,
    },
    Dense {
        input: Var,
        weight: Var,
        bias: Var,
        batch: usize,
        n_in: usize,
        n_out: usize,
    },
    LeakyRelu {
        x: Var,
        alpha: T,
    },
    Scale {
        x: Var,
        mask: Vec<T>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        channels: usize,
        inner: usize,
        batch_stats: bool,
    },
    MaxPool1d {
        x: Var,
        argmax: Vec<usize>,
    },
    Concat {
        a: Var,
        b: Var,
        batch: usize,
        a_len: usize,
        b_len: usize,
    },
    Reshape {
        x: Var,
    },
    Mse {
        pred: Var,
        target: Vec<T>,
        weights: Option<Vec<T>>,
        denom: T,
    },
    WeightedSum {
        x: Var,
        weights: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Vec<T>>,
    needs_grad: bool,
    op: Op<T>,
}

/// Tape of tensor operations supporting reverse-mode differentiation.
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Splits `dims` into `(batch, rest, batched)` where an unbatched tensor has
/// `base_ndim` dims and a batched one has `base_ndim + 1`.
fn split_batch<'a>(what: &str, dims: &'a [usize], base_ndim: usize) -> Result<(usize, &'a [usize], bool)> {
    if dims.len() == base_ndim {
        Ok((1, dims, false))
    } else if dims.len() == base_ndim + 1 {
        Ok((dims[0], &dims[1..], true))
    } else {
        Err(Error::shape(format!(
            "{what}: expected a {base_ndim}-d or batched {}-d input, got dims {dims:?}",
            base_ndim + 1
        )))
    }
}

fn with_batch(batch: usize, batched: bool, rest: &[usize]) -> Vec<usize> {
    let mut dims = Vec::with_capacity(rest.len() + 1);
    if batched {
        dims.push(batch);
    }
    dims.extend_from_slice(rest);
    dims
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, needs_grad: bool, op: Op<T>) -> Var {
        let op = if needs_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            grad: None,
            needs_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Adds a tensor as a leaf; it receives a gradient iff `requires_grad` is set.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let needs = tensor.requires_grad();
        self.push(tensor, needs, Op::Leaf)
    }

    /// Adds a tensor that never receives a gradient.
    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.push(tensor.with_requires_grad(false), false, Op::Leaf)
    }

    /// Adds a tensor that always receives a gradient.
    pub fn param(&mut self, tensor: Tensor<T>) -> Var {
        self.push(tensor.with_requires_grad(true), true, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.dims()
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.nodes[v.0].grad.take()
    }

    /// Consumes the node value (leaving an empty tensor behind).
    pub fn take_value(&mut self, v: Var) -> Tensor<T> {
        std::mem::replace(&mut self.nodes[v.0].value, Tensor::zeros(vec![0]))
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> Result<T> {
        let t = self.value(v);
        if t.len() != 1 {
            return Err(Error::shape(format!("expected a scalar, got dims {:?}", t.dims())));
        }
        Ok(t.data()[0])
    }

    /// 2-D convolution. `input`: `[Cin,H,W]` or `[B,Cin,H,W]`; `weight`:
    /// `[Cout,Cin,kh,kw]`; `bias`: `[Cout]`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, stride: usize, pad: usize) -> Result<Var> {
        let (batch, rest, batched) = split_batch("conv2d", self.dims(input), 3)?;
        let (cin, h, w) = (rest[0], rest[1], rest[2]);
        let wd = self.dims(weight);
        if wd.len() != 4 {
            return Err(Error::shape(format!("conv2d: weight must be [Cout,Cin,kh,kw], got {wd:?}")));
        }
        let (cout, wcin, kh, kw) = (wd[0], wd[1], wd[2], wd[3]);
        if wcin != cin {
            return Err(Error::shape(format!(
                "conv2d: input has Cin={cin} but weight expects Cin={wcin}"
            )));
        }
        if self.dims(bias) != [cout] {
            return Err(Error::shape(format!(
                "conv2d: bias dims {:?} do not match Cout={cout}",
                self.dims(bias)
            )));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d: stride must be >= 1"));
        }
        if h + 2 * pad < kh || w + 2 * pad < kw || kh == 0 || kw == 0 {
            return Err(Error::shape(format!(
                "conv2d: kernel {kh}x{kw} does not fit padded input {}x{}",
                h + 2 * pad,
                w + 2 * pad
            )));
        }
        let geom = Conv2dGeom {
            batch,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            stride,
            pad,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (w + 2 * pad - kw) / stride + 1,
        };
        let out = kernels::conv2d_forward(
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
            &geom,
        );
        let dims = with_batch(batch, batched, &[cout, geom.oh, geom.ow]);
        let needs = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(
            Tensor::new(dims, out)?,
            needs,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            },
        ))
    }

    /// 1-D convolution with explicit zero padding. `input`: `[Cin,T]` or
    /// `[B,Cin,T]`; `weight`: `[Cout,Cin,k]`.
    pub fn conv1d_padded(&mut self, input: Var, weight: Var, bias: Var, pad_left: usize, pad_right: usize) -> Result<Var> {
        let (batch, rest, batched) = split_batch("conv1d", self.dims(input), 2)?;
        let (cin, t) = (rest[0], rest[1]);
        let wd = self.dims(weight);
        if wd.len() != 3 {
            return Err(Error::shape(format!("conv1d: weight must be [Cout,Cin,k], got {wd:?}")));
        }
        let (cout, wcin, k) = (wd[0], wd[1], wd[2]);
        if wcin != cin {
            return Err(Error::shape(format!(
                "conv1d: input has Cin={cin} but weight expects Cin={wcin}"
            )));
        }
        if self.dims(bias) != [cout] {
            return Err(Error::shape(format!(
                "conv1d: bias dims {:?} do not match Cout={cout}",
                self.dims(bias)
            )));
        }
        if k == 0 || k > t + pad_left + pad_right {
            return Err(Error::shape(format!(
                "conv1d: kernel length {k} exceeds padded input length {}",
                t + pad_left + pad_right
            )));
        }
        let geom = Conv1dGeom {
            batch,
            cin,
            t,
            cout,
            k,
            pad_left,
            pad_right,
            tout: t + pad_left + pad_right - k + 1,
        };
        let out = kernels::conv1d_forward(
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
            &geom,
        );
        let dims = with_batch(batch, batched, &[cout, geom.tout]);
        let needs = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(
            Tensor::new(dims, out)?,
            needs,
            Op::Conv1d {
                input,
                weight,
                bias,
                geom,
            },
        ))
    }

    /// 1-D convolution with "same" padding: `ceil((k-1)/2)` zeros on the
    /// left and `floor((k-1)/2)` on the right, so the length is preserved
    /// and even kernels lean on past samples (`[1,1]` on `[1,2,3]` gives
    /// `[1,3,5]`).
    pub fn conv1d_same(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let k = *self
            .dims(weight)
            .last()
            .ok_or_else(|| Error::shape("conv1d: weight has no dims"))?;
        if k == 0 {
            return Err(Error::shape("conv1d: kernel length must be >= 1"));
        }
        self.conv1d_padded(input, weight, bias, k / 2, (k - 1) / 2)
    }

    /// Transposed 1-D convolution with kernel 2 and stride 2 (exact 2x
    /// upsampling). `input`: `[C,T]` or `[B,C,T]`; `weight`: `[Cout,C,2]`.
    pub fn deconv1d(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let (batch, rest, batched) = split_batch("deconv1d", self.dims(input), 2)?;
        let (cin, t) = (rest[0], rest[1]);
        let wd = self.dims(weight);
        if wd.len() != 3 || wd[2] != 2 {
            return Err(Error::shape(format!("deconv1d: weight must be [Cout,Cin,2], got {wd:?}")));
        }
        let (cout, wcin) = (wd[0], wd[1]);
        if wcin != cin {
            return Err(Error::shape(format!(
                "deconv1d: input has {cin} channels but weight expects {wcin}"
            )));
        }
        if let Some(b) = bias {
            if self.dims(b) != [cout] {
                return Err(Error::shape(format!(
                    "deconv1d: bias dims {:?} do not match Cout={cout}",
                    self.dims(b)
                )));
            }
        }
        let geom = DeconvGeom { batch, cin, t, cout };
        let out = kernels::deconv1d_forward(
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
            &geom,
        );
        let dims = with_batch(batch, batched, &[cout, 2 * t]);
        let needs = self.needs(input) || self.needs(weight) || bias.is_some_and(|b| self.needs(b));
        Ok(self.push(
            Tensor::new(dims, out)?,
            needs,
            Op::Deconv1d {
                input,
                weight,
                bias,
                geom,
            },
        ))
    }

    /// Affine layer `weight * input + bias`. `input`: `[N]` or `[B,N]`;
    /// `weight`: `[M,N]`; `bias`: `[M]`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (batch, rest, batched) = split_batch("dense", self.dims(input), 1)?;
        let n_in = rest[0];
        let wd = self.dims(weight);
        if wd.len() != 2 || wd[1] != n_in {
            return Err(Error::shape(format!(
                "dense: weight dims {wd:?} do not accept an input of length {n_in}"
            )));
        }
        let n_out = wd[0];
        if self.dims(bias) != [n_out] {
            return Err(Error::shape(format!(
                "dense: bias dims {:?} do not match output length {n_out}",
                self.dims(bias)
            )));
        }
        let mut out = Vec::with_capacity(batch * n_out);
        let b = self.value(bias).data();
        for _ in 0..batch {
            out.extend_from_slice(b);
        }
        T::gemm(
            batch,
            n_in,
            n_out,
            MatRef::rows(self.value(input).data(), n_in),
            MatRef::transposed(self.value(weight).data(), n_in),
            T::one(),
            MatMut::rows(&mut out, n_out),
        );
        let dims = with_batch(batch, batched, &[n_out]);
        let needs = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(
            Tensor::new(dims, out)?,
            needs,
            Op::Dense {
                input,
                weight,
                bias,
                batch,
                n_in,
                n_out,
            },
        ))
    }

    /// Elementwise `x` for `x >= 0`, `alpha * x` otherwise.
    pub fn leaky_relu(&mut self, x: Var, alpha: T) -> Result<Var> {
        if !(alpha >= T::zero() && alpha < T::one()) {
            return Err(Error::invalid(format!("leaky_relu: alpha {alpha} outside [0, 1)")));
        }
        let out = self
            .value(x)
            .map(|v| if v >= T::zero() { v } else { alpha * v });
        let needs = self.needs(x);
        Ok(self.push(out, needs, Op::LeakyRelu { x, alpha }))
    }

    /// Inverted dropout: in training each element is zeroed with probability
    /// `p` and survivors are scaled by `1/(1-p)`; otherwise the identity.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut RngStream, training: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid(format!("dropout: p = {p} outside [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| if rng.uniform() < p { T::zero() } else { keep })
            .collect();
        let src = self.value(x);
        let data = src.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let out = Tensor::new(src.dims().to_vec(), data)?;
        let needs = self.needs(x);
        Ok(self.push(out, needs, Op::Scale { x, mask }))
    }

    /// Batch normalization over axis 1 (or per element of a 1-d batch).
    ///
    /// In training the batch statistics normalize the input and the running
    /// statistics move towards them with momentum 0.9; at inference the
    /// running statistics are used.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: &mut RunningStats<T>,
        training: bool,
    ) -> Result<Var> {
        let dims = self.dims(x).to_vec();
        if dims.is_empty() {
            return Err(Error::shape("batchnorm: input must have a batch axis"));
        }
        let batch = dims[0];
        let channels = if dims.len() >= 2 { dims[1] } else { 1 };
        let inner = if dims.len() >= 2 { numel(&dims[2..]) } else { 1 };
        if training && batch < 2 {
            return Err(Error::invalid(format!(
                "batchnorm: training needs a batch of at least 2, got {batch}"
            )));
        }
        if self.dims(gamma) != [channels] || self.dims(beta) != [channels] {
            return Err(Error::shape(format!(
                "batchnorm: gamma/beta dims {:?}/{:?} do not match {channels} channels",
                self.dims(gamma),
                self.dims(beta)
            )));
        }
        if running.mean.len() != channels || running.var.len() != channels {
            return Err(Error::shape(format!(
                "batchnorm: running stats have {} channels, input has {channels}",
                running.mean.len()
            )));
        }
        let eps = T::lit(BATCHNORM_EPS);
        let xs = self.value(x).data();
        let count = batch * inner;
        let (mean, var) = if training {
            let mut mean = vec![T::zero(); channels];
            let mut var = vec![T::zero(); channels];
            let n = T::lit(count as f64);
            for c in 0..channels {
                let mut s = T::zero();
                for b in 0..batch {
                    let off = (b * channels + c) * inner;
                    s += xs[off..off + inner].iter().copied().sum::<T>();
                }
                let m = s / n;
                let mut ss = T::zero();
                for b in 0..batch {
                    let off = (b * channels + c) * inner;
                    ss += xs[off..off + inner].iter().map(|&v| (v - m) * (v - m)).sum::<T>();
                }
                mean[c] = m;
                var[c] = ss / n;
            }
            let mom = T::lit(BATCHNORM_MOMENTUM);
            let unbias = T::lit(count as f64 / (count as f64 - 1.0).max(1.0));
            for c in 0..channels {
                running.mean[c] = mom * running.mean[c] + (T::one() - mom) * mean[c];
                running.var[c] = mom * running.var[c] + (T::one() - mom) * var[c] * unbias;
            }
            (mean, var)
        } else {
            (running.mean.clone(), running.var.clone())
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = vec![T::zero(); xs.len()];
        let mut out = vec![T::zero(); xs.len()];
        for b in 0..batch {
            for c in 0..channels {
                let off = (b * channels + c) * inner;
                for i in off..off + inner {
                    let h = (xs[i] - mean[c]) * inv_std[c];
                    xhat[i] = h;
                    out[i] = g[c] * h + bt[c];
                }
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(
            Tensor::new(dims, out)?,
            needs,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                channels,
                inner,
                batch_stats: training,
            },
        ))
    }

    /// Non-overlapping pairwise max over the last axis. Ties resolve to the
    /// first element. `x`: `[C,T]` or `[B,C,T]` with even `T`.
    pub fn maxpool1d(&mut self, x: Var) -> Result<Var> {
        let dims = self.dims(x).to_vec();
        split_batch("maxpool1d", &dims, 2)?;
        let t = *dims.last().unwrap();
        if !t.is_multiple_of(2) {
            return Err(Error::shape(format!("maxpool1d: time length {t} is odd")));
        }
        let xs = self.value(x).data();
        let mut out = Vec::with_capacity(xs.len() / 2);
        let mut argmax = Vec::with_capacity(xs.len() / 2);
        for (i, pair) in xs.chunks_exact(2).enumerate() {
            if pair[1] > pair[0] {
                out.push(pair[1]);
                argmax.push(2 * i + 1);
            } else {
                out.push(pair[0]);
                argmax.push(2 * i);
            }
        }
        let mut out_dims = dims;
        *out_dims.last_mut().unwrap() = t / 2;
        let needs = self.needs(x);
        Ok(self.push(Tensor::new(out_dims, out)?, needs, Op::MaxPool1d { x, argmax }))
    }

    /// Channel-axis concatenation of `[Ca,T]`/`[B,Ca,T]` with `[Cb,T]`/`[B,Cb,T]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let ad = self.dims(a).to_vec();
        let bd = self.dims(b).to_vec();
        let (batch, ar, batched) = split_batch("concat", &ad, 2)?;
        let (bbatch, br, bbatched) = split_batch("concat", &bd, 2)?;
        if batched != bbatched || batch != bbatch {
            return Err(Error::shape(format!("concat: batch mismatch between {ad:?} and {bd:?}")));
        }
        if ar[1] != br[1] {
            return Err(Error::shape(format!(
                "concat: time lengths differ ({} vs {})",
                ar[1], br[1]
            )));
        }
        let a_len = ar[0] * ar[1];
        let b_len = br[0] * br[1];
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(av.len() + bv.len());
        for i in 0..batch {
            out.extend_from_slice(&av[i * a_len..(i + 1) * a_len]);
            out.extend_from_slice(&bv[i * b_len..(i + 1) * b_len]);
        }
        let dims = with_batch(batch, batched, &[ar[0] + br[0], ar[1]]);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(
            Tensor::new(dims, out)?,
            needs,
            Op::Concat {
                a,
                b,
                batch,
                a_len,
                b_len,
            },
        ))
    }

    pub fn reshape(&mut self, x: Var, dims: impl Into<Vec<usize>>) -> Result<Var> {
        let out = self.value(x).clone().with_requires_grad(false).reshape(dims)?;
        let needs = self.needs(x);
        Ok(self.push(out, needs, Op::Reshape { x }))
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var> {
        if self.dims(pred) != target.dims() {
            return Err(Error::shape(format!(
                "mse: prediction dims {:?} differ from target dims {:?}",
                self.dims(pred),
                target.dims()
            )));
        }
        self.mse_impl(pred, target.data().to_vec(), None)
    }

    /// Weighted mean squared error: `sum w (p - t)^2 / sum w`, where `w` has
    /// one entry per element (0 excludes the element). An all-zero weight
    /// vector yields a loss of 0.
    pub fn masked_mse(&mut self, pred: Var, target: &Tensor<T>, weights: Vec<T>) -> Result<Var> {
        if self.dims(pred) != target.dims() || weights.len() != target.len() {
            return Err(Error::shape(format!(
                "masked_mse: prediction dims {:?}, target dims {:?}, {} weights",
                self.dims(pred),
                target.dims(),
                weights.len()
            )));
        }
        self.mse_impl(pred, target.data().to_vec(), Some(weights))
    }

    fn mse_impl(&mut self, pred: Var, target: Vec<T>, weights: Option<Vec<T>>) -> Result<Var> {
        let p = self.value(pred).data();
        let (sum, denom) = match &weights {
            None => (
                p.iter().zip(&target).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>(),
                T::lit(p.len().max(1) as f64),
            ),
            Some(w) => (
                p.iter()
                    .zip(&target)
                    .zip(w)
                    .map(|((&a, &b), &w)| w * (a - b) * (a - b))
                    .sum::<T>(),
                w.iter().copied().sum::<T>(),
            ),
        };
        let loss = if denom > T::zero() { sum / denom } else { T::zero() };
        let needs = self.needs(pred);
        Ok(self.push(
            Tensor::scalar(loss),
            needs,
            Op::Mse {
                pred,
                target,
                weights,
                denom,
            },
        ))
    }

    /// `sum_i weights[i] * x[i]`, a scalar projection used by gradient checks.
    pub fn weighted_sum(&mut self, x: Var, weights: Vec<T>) -> Result<Var> {
        let xs = self.value(x).data();
        if xs.len() != weights.len() {
            return Err(Error::shape(format!(
                "weighted_sum: {} weights for {} elements",
                weights.len(),
                xs.len()
            )));
        }
        let s = xs.iter().zip(&weights).map(|(&a, &w)| a * w).sum::<T>();
        let needs = self.needs(x);
        Ok(self.push(Tensor::scalar(s), needs, Op::WeightedSum { x, weights }))
    }

    /// Back-propagates from the scalar `loss`, accumulating gradients into
    /// every node that needs one.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(format!(
                "backward: loss must be a scalar, got dims {:?}",
                self.dims(loss)
            )));
        }
        if !self.needs(loss) {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(grad) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.node_backward(i, &grad);
            self.nodes[i].grad = Some(grad);
            for (v, g) in contributions {
                let node = &mut self.nodes[v.0];
                match node.grad.as_mut() {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                    None => node.grad = Some(g),
                }
            }
        }
        Ok(())
    }

    fn node_backward(&self, i: usize, dy: &[T]) -> Vec<(Var, Vec<T>)> {
        let mut out = Vec::new();
        let mut emit = |v: Var, g: Option<Vec<T>>| {
            if let Some(g) = g {
                out.push((v, g));
            }
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            } => {
                let need = [self.needs(*input), self.needs(*weight), self.needs(*bias)];
                let g = kernels::conv2d_backward(
                    self.value(*input).data(),
                    self.value(*weight).data(),
                    dy,
                    geom,
                    need,
                );
                emit(*input, g.dx);
                emit(*weight, g.dw);
                emit(*bias, g.db);
            }
            Op::Conv1d {
                input,
                weight,
                bias,
                geom,
            } => {
                let need = [self.needs(*input), self.needs(*weight), self.needs(*bias)];
                let g = kernels::conv1d_backward(
                    self.value(*input).data(),
                    self.value(*weight).data(),
                    dy,
                    geom,
                    need,
                );
                emit(*input, g.dx);
                emit(*weight, g.dw);
                emit(*bias, g.db);
            }
            Op::Deconv1d {
                input,
                weight,
                bias,
                geom,
            } => {
                let need = [
                    self.needs(*input),
                    self.needs(*weight),
                    bias.is_some_and(|b| self.needs(b)),
                ];
                let g = kernels::deconv1d_backward(
                    self.value(*input).data(),
                    self.value(*weight).data(),
                    dy,
                    geom,
                    need,
                );
                emit(*input, g.dx);
                emit(*weight, g.dw);
                if let Some(b) = bias {
                    emit(*b, g.db);
                }
            }
            Op::Dense {
                input,
                weight,
                bias,
                batch,
                n_in,
                n_out,
            } => {
                let (batch, n_in, n_out) = (*batch, *n_in, *n_out);
                if self.needs(*input) {
                    let mut dx = vec![T::zero(); batch * n_in];
                    T::gemm(
                        batch,
                        n_out,
                        n_in,
                        MatRef::rows(dy, n_out),
                        MatRef::rows(self.value(*weight).data(), n_in),
                        T::zero(),
                        MatMut::rows(&mut dx, n_in),
                    );
                    emit(*input, Some(dx));
                }
                if self.needs(*weight) {
                    let mut dw = vec![T::zero(); n_out * n_in];
                    T::gemm(
                        n_out,
                        batch,
                        n_in,
                        MatRef::transposed(dy, n_out),
                        MatRef::rows(self.value(*input).data(), n_in),
                        T::zero(),
                        MatMut::rows(&mut dw, n_in),
                    );
                    emit(*weight, Some(dw));
                }
                if self.needs(*bias) {
                    let mut db = vec![T::zero(); n_out];
                    for row in dy.chunks_exact(n_out) {
                        db.iter_mut().zip(row).for_each(|(a, &b)| *a += b);
                    }
                    emit(*bias, Some(db));
                }
            }
            Op::LeakyRelu { x, alpha } => {
                let xs = self.value(*x).data();
                let g = xs
                    .iter()
                    .zip(dy)
                    .map(|(&v, &d)| if v >= T::zero() { d } else { *alpha * d })
                    .collect();
                emit(*x, Some(g));
            }
            Op::Scale { x, mask } => {
                emit(*x, Some(dy.iter().zip(mask).map(|(&d, &m)| d * m).collect()));
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                channels,
                inner,
                batch_stats,
            } => {
                let (channels, inner) = (*channels, *inner);
                let batch = xhat.len() / (channels * inner);
                let gv = self.value(*gamma).data();
                let mut sum_dy = vec![T::zero(); channels];
                let mut sum_dy_xhat = vec![T::zero(); channels];
                for b in 0..batch {
                    for c in 0..channels {
                        let off = (b * channels + c) * inner;
                        for i in off..off + inner {
                            sum_dy[c] += dy[i];
                            sum_dy_xhat[c] += dy[i] * xhat[i];
                        }
                    }
                }
                if self.needs(*x) {
                    let mut dx = vec![T::zero(); xhat.len()];
                    let n = T::lit((batch * inner) as f64);
                    for b in 0..batch {
                        for c in 0..channels {
                            let off = (b * channels + c) * inner;
                            let k = gv[c] * inv_std[c];
                            for i in off..off + inner {
                                dx[i] = if *batch_stats {
                                    k * (dy[i] - sum_dy[c] / n - xhat[i] * sum_dy_xhat[c] / n)
                                } else {
                                    k * dy[i]
                                };
                            }
                        }
                    }
                    emit(*x, Some(dx));
                }
                if self.needs(*gamma) {
                    emit(*gamma, Some(sum_dy_xhat));
                }
                if self.needs(*beta) {
                    emit(*beta, Some(sum_dy));
                }
            }
            Op::MaxPool1d { x, argmax } => {
                let mut g = vec![T::zero(); self.value(*x).len()];
                for (&j, &d) in argmax.iter().zip(dy) {
                    g[j] += d;
                }
                emit(*x, Some(g));
            }
            Op::Concat {
                a,
                b,
                batch,
                a_len,
                b_len,
            } => {
                let (a_len, b_len) = (*a_len, *b_len);
                let mut ga = Vec::with_capacity(batch * a_len);
                let mut gb = Vec::with_capacity(batch * b_len);
                for chunk in dy.chunks_exact(a_len + b_len) {
                    ga.extend_from_slice(&chunk[..a_len]);
                    gb.extend_from_slice(&chunk[a_len..]);
                }
                if self.needs(*a) {
                    emit(*a, Some(ga));
                }
                if self.needs(*b) {
                    emit(*b, Some(gb));
                }
            }
            Op::Reshape { x } => emit(*x, Some(dy.to_vec())),
            Op::Mse {
                pred,
                target,
                weights,
                denom,
            } => {
                let p = self.value(*pred).data();
                let g = if *denom > T::zero() {
                    let scale = dy[0] * T::lit(2.0) / *denom;
                    match weights {
                        None => p.iter().zip(target).map(|(&a, &b)| scale * (a - b)).collect(),
                        Some(w) => p
                            .iter()
                            .zip(target)
                            .zip(w)
                            .map(|((&a, &b), &w)| scale * w * (a - b))
                            .collect(),
                    }
                } else {
                    vec![T::zero(); p.len()]
                };
                emit(*pred, Some(g));
            }
            Op::WeightedSum { x, weights } => {
                emit(*x, Some(weights.iter().map(|&w| w * dy[0]).collect()));
            }
        }
        out
    }
}
