//! Fits a tiny two-layer network to `y = sin(3x)` with the tape autodiff
//! and Adam, printing the loss as it falls.
//!
//! `cargo run --release --example autodiff_regression`

use silent_speech::tensor::{AdamState, Graph, ParamSet, RngStream, Tensor};

fn main() -> silent_speech::Result<()> {
    let mut rng = RngStream::new(0, "example");
    let n = 64;
    let xs: Vec<f32> = (0..n).map(|i| -1.0 + 2.0 * i as f32 / (n - 1) as f32).collect();
    let x = Tensor::new(vec![n, 1], xs.clone())?;
    let y = Tensor::new(vec![n, 1], xs.iter().map(|v| (3.0 * v).sin()).collect())?;

    let hidden = 16;
    let mut params = ParamSet::new();
    let mut init = |len: usize, scale: f64| -> Vec<f32> { (0..len).map(|_| rng.uniform_range(-scale, scale) as f32).collect() };
    params.insert("w1", Tensor::new(vec![hidden, 1], init(hidden, 1.0))?, true)?;
    params.insert("b1", Tensor::new(vec![hidden], init(hidden, 1.0))?, true)?;
    params.insert("w2", Tensor::new(vec![1, hidden], init(hidden, 0.25))?, true)?;
    params.insert("b2", Tensor::zeros(vec![1]), true)?;

    let mut adam = AdamState::new(1e-2);
    for step in 0..=1500 {
        let mut g = Graph::new();
        let vars: Vec<_> = params.iter().map(|p| g.param(p.tensor.clone())).collect();
        let input = g.constant(x.clone());
        let h = g.dense(input, vars[0], vars[1])?;
        let h = g.leaky_relu(h, 0.2)?;
        let out = g.dense(h, vars[2], vars[3])?;
        let loss = g.mse(out, &y)?;
        if step % 300 == 0 {
            println!("step {step:4}  mse {:.5}", g.scalar(loss)?);
        }
        g.backward(loss)?;
        let grads: Vec<_> = vars.iter().map(|&v| g.take_grad(v)).collect();
        adam.step(&mut params, &grads)?;
    }
    Ok(())
}
