//! Whole-model finite-difference checks on reduced-size variants.

use crate::error::Result;
use crate::tensor::gradcheck::{projection, random_tensor};
use crate::tensor::{GradCheck, GradCheckReport, Graph, ParamSet, RngStream, Tensor, Var};

use super::{Net1, Net1Config, Net2, Net2Config};

/// Coordinates sampled per input tensor.
const COORDS: usize = 24;

/// Gradient of a random projection of the model output with respect to the
/// input and every trainable parameter, in training mode. The dropout mask
/// is fixed by reseeding on every evaluation.
fn check_model<F>(params: &ParamSet<f64>, input: Tensor<f64>, seed: u64, forward: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, Var, &[Var], &mut RngStream) -> Result<Var>,
{
    let mut inputs = vec![input];
    inputs.extend(params.iter().filter(|p| p.trainable).map(|p| p.tensor.clone()));
    GradCheck {
        max_coords: Some(COORDS),
        seed,
        ..GradCheck::default()
    }
    .run(&inputs, |g, vars| {
        let mut next = vars[1..].iter();
        let bound: Vec<Var> = params
            .iter()
            .map(|p| {
                if p.trainable {
                    *next.next().expect("one input per trainable parameter")
                } else {
                    g.constant(p.tensor.clone())
                }
            })
            .collect();
        let y = forward(g, vars[0], &bound, &mut RngStream::new(seed, "dropout"))?;
        let w = projection(g.value(y).len(), &mut RngStream::new(seed, "projection"));
        g.weighted_sum(y, w)
    })
}

/// Full-model check of Net1 on 13x16x16 windows (batch of 3).
pub fn net1_gradient_check(seed: u64) -> Result<GradCheckReport> {
    let net: Net1<f64> = Net1::init(Net1Config::reduced(), &mut RngStream::new(seed, "init"))?;
    let x = random_tensor(&[3, 13, 16, 16], 1.0, 0.0, &mut RngStream::new(seed, "input")).map(f64::abs);
    check_model(&net.params, x, seed, |g, input, vars, rng| {
        Ok(net.forward(g, input, vars, true, rng)?.0)
    })
}

/// Full-model check of Net2 on 3-band, 16-frame grids (batch of 2).
pub fn net2_gradient_check(seed: u64) -> Result<GradCheckReport> {
    let net: Net2<f64> = Net2::init(Net2Config::reduced(), &mut RngStream::new(seed, "init"))?;
    let x = random_tensor(&[2, 3, 16], 1.0, 0.0, &mut RngStream::new(seed, "input"));
    check_model(&net.params, x, seed, |g, input, vars, rng| {
        Ok(net.forward(g, input, vars, true, rng)?.0)
    })
}
