//! Finite-difference verification of analytic gradients in 64-bit precision.

use crate::error::{Error, Result};

use super::{Graph, RngStream, Tensor, Var};

pub const DEFAULT_H: f64 = 1e-5;

/// `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Max relative error per input tensor.
    pub per_input: Vec<f64>,
    pub coords_checked: usize,
}

/// Gradient-check settings.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub h: f64,
    /// Check at most this many randomly chosen coordinates per input
    /// (all coordinates when `None`).
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            h: DEFAULT_H,
            max_coords: None,
            seed: 0,
        }
    }
}

impl GradCheck {
    /// Compares the reverse-mode gradient of the scalar built by `f` with
    /// central differences, for every input tensor.
    ///
    /// `f` must be a pure function of the input values: any randomness it
    /// uses (dropout masks) has to be re-created from a fixed seed inside it.
    pub fn run<F>(&self, inputs: &[Tensor<f64>], f: F) -> Result<GradCheckReport>
    where
        F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
    {
        let eval = |values: &[Tensor<f64>]| -> Result<f64> {
            let mut g = Graph::new();
            let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
            let out = f(&mut g, &vars)?;
            g.scalar(out)
        };

        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        if g.value(out).len() != 1 {
            return Err(Error::shape("grad_check: function must return a scalar"));
        }
        g.backward(out)?;
        let analytic: Vec<Vec<f64>> = vars
            .iter()
            .zip(inputs)
            .map(|(&v, t)| g.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()]))
            .collect();

        let mut rng = RngStream::new(self.seed, "gradcheck");
        let mut work: Vec<Tensor<f64>> = inputs.to_vec();
        let mut per_input = Vec::with_capacity(inputs.len());
        let mut coords_checked = 0;
        for (i, input) in inputs.iter().enumerate() {
            let mut coords: Vec<usize> = (0..input.len()).collect();
            if let Some(limit) = self.max_coords {
                if coords.len() > limit {
                    rng.shuffle(&mut coords);
                    coords.truncate(limit);
                    coords.sort_unstable();
                }
            }
            let mut worst = 0f64;
            for &c in &coords {
                let orig = input.data()[c];
                work[i].data_mut()[c] = orig + self.h;
                let plus = eval(&work)?;
                work[i].data_mut()[c] = orig - self.h;
                let minus = eval(&work)?;
                work[i].data_mut()[c] = orig;
                let numeric = (plus - minus) / (2.0 * self.h);
                worst = worst.max(rel_error(analytic[i][c], numeric));
            }
            coords_checked += coords.len();
            per_input.push(worst);
        }
        Ok(GradCheckReport {
            max_rel_error: per_input.iter().copied().fold(0.0, f64::max),
            per_input,
            coords_checked,
        })
    }
}

/// Checks `f` at `point` with default settings.
pub fn grad_check<F>(inputs: &[Tensor<f64>], h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    GradCheck {
        h,
        ..GradCheck::default()
    }
    .run(inputs, f)
}

/// Random projection weights that turn a tensor output into a scalar.
pub fn projection(len: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..len).map(|_| rng.uniform_range(-1.0, 1.0)).collect()
}

/// Uniform random tensor in `[-scale, scale)` whose entries all satisfy
/// `|x| >= min_abs` (redrawn otherwise), keeping points away from kinks.
pub fn random_tensor(dims: &[usize], scale: f64, min_abs: f64, rng: &mut RngStream) -> Tensor<f64> {
    let n: usize = dims.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let x = rng.uniform_range(-scale, scale);
            if x.abs() >= min_abs {
                break x;
            }
        })
        .collect();
    Tensor::new(dims.to_vec(), data).expect("dims match data")
}

/// Result of checking one operator at several random points.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorCheck {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub points: usize,
}

/// Minimum separation kept from non-differentiable points (the leaky
/// rectifier kink at 0 and pooling ties).
pub const KINK_MARGIN: f64 = 1e-3;

fn pool_input(dims: &[usize], rng: &mut RngStream) -> Tensor<f64> {
    loop {
        let t = random_tensor(dims, 1.0, 0.0, rng);
        if t.data().chunks_exact(2).all(|p| (p[0] - p[1]).abs() >= KINK_MARGIN) {
            return t;
        }
    }
}

type Sampler = Box<dyn Fn(&mut RngStream) -> Vec<Tensor<f64>>>;
type Builder = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>;

fn fixed(dims: &[usize], seed: u64) -> Tensor<f64> {
    random_tensor(dims, 1.0, 0.0, &mut RngStream::new(seed, "gradcheck/fixed"))
}

fn operator_cases() -> Vec<(&'static str, Sampler, Builder)> {
    fn rt(dims: &'static [usize]) -> impl Fn(&mut RngStream) -> Tensor<f64> {
        move |r| random_tensor(dims, 1.0, 0.0, r)
    }
    vec![
        (
            "conv2d",
            Box::new(|r| vec![rt(&[2, 2, 4, 4])(r), rt(&[3, 2, 3, 3])(r), rt(&[3])(r)]),
            Box::new(|g, v| g.conv2d(v[0], v[1], v[2], 1, 1)),
        ),
        (
            "conv2d_strided",
            Box::new(|r| vec![rt(&[2, 2, 6, 6])(r), rt(&[2, 2, 4, 4])(r), rt(&[2])(r)]),
            Box::new(|g, v| g.conv2d(v[0], v[1], v[2], 2, 1)),
        ),
        (
            "conv1d",
            Box::new(|r| vec![rt(&[2, 3, 7])(r), rt(&[2, 3, 4])(r), rt(&[2])(r)]),
            Box::new(|g, v| g.conv1d_same(v[0], v[1], v[2])),
        ),
        (
            "deconv1d",
            Box::new(|r| vec![rt(&[2, 3, 5])(r), rt(&[2, 3, 2])(r), rt(&[2])(r)]),
            Box::new(|g, v| g.deconv1d(v[0], v[1], Some(v[2]))),
        ),
        (
            "dense",
            Box::new(|r| vec![rt(&[3, 5])(r), rt(&[4, 5])(r), rt(&[4])(r)]),
            Box::new(|g, v| g.dense(v[0], v[1], v[2])),
        ),
        (
            "leaky_relu",
            Box::new(|r| vec![random_tensor(&[4, 6], 1.0, KINK_MARGIN, r)]),
            Box::new(|g, v| g.leaky_relu(v[0], 0.2)),
        ),
        (
            "dropout",
            Box::new(|r| vec![rt(&[4, 6])(r)]),
            Box::new(|g, v| {
                let mut mask_rng = RngStream::new(11, "dropout");
                g.dropout(v[0], 0.3, &mut mask_rng, true)
            }),
        ),
        (
            "batchnorm",
            Box::new(|r| vec![rt(&[3, 2, 5])(r), rt(&[2])(r), rt(&[2])(r)]),
            Box::new(|g, v| {
                let mut stats = super::RunningStats::new(2);
                g.batchnorm(v[0], v[1], v[2], &mut stats, true)
            }),
        ),
        (
            "batchnorm_inference",
            Box::new(|r| vec![rt(&[3, 2, 5])(r), rt(&[2])(r), rt(&[2])(r)]),
            Box::new(|g, v| {
                let mut stats = super::RunningStats {
                    mean: vec![0.1, -0.2],
                    var: vec![0.5, 2.0],
                };
                g.batchnorm(v[0], v[1], v[2], &mut stats, false)
            }),
        ),
        (
            "maxpool1d",
            Box::new(|r| vec![pool_input(&[2, 3, 8], r)]),
            Box::new(|g, v| g.maxpool1d(v[0])),
        ),
        (
            "concat",
            Box::new(|r| vec![rt(&[2, 2, 5])(r), rt(&[2, 3, 5])(r)]),
            Box::new(|g, v| g.concat(v[0], v[1])),
        ),
        (
            "mse",
            Box::new(|r| vec![rt(&[3, 4])(r)]),
            Box::new(|g, v| g.mse(v[0], &fixed(&[3, 4], 1))),
        ),
        (
            "masked_mse",
            Box::new(|r| vec![rt(&[3, 4])(r)]),
            Box::new(|g, v| {
                let mask = (0..12).map(|i| if i % 3 == 0 { 0.0 } else { 1.0 }).collect();
                g.masked_mse(v[0], &fixed(&[3, 4], 2), mask)
            }),
        ),
    ]
}

/// Gradient-checks every differentiable operator at `points` random
/// points. Tensor-valued outputs are reduced to a scalar by a random
/// projection.
pub fn operator_suite(seed: u64, points: usize, h: f64) -> Result<Vec<OperatorCheck>> {
    let mut rng = RngStream::new(seed, "gradcheck/points");
    let mut results = Vec::new();
    for (name, sample, build) in operator_cases() {
        let mut worst = 0f64;
        for _ in 0..points {
            let inputs = sample(&mut rng);
            let out_len = {
                let mut g = Graph::new();
                let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
                let y = build(&mut g, &vars)?;
                g.value(y).len()
            };
            let weights = (out_len > 1).then(|| projection(out_len, &mut rng));
            let report = GradCheck {
                h,
                ..GradCheck::default()
            }
            .run(&inputs, |g, v| {
                let y = build(g, v)?;
                match &weights {
                    Some(w) => g.weighted_sum(y, w.clone()),
                    None => Ok(y),
                }
            })?;
            worst = worst.max(report.max_rel_error);
        }
        results.push(OperatorCheck {
            name,
            max_rel_error: worst,
            points,
        });
    }
    Ok(results)
}
