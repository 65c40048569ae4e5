use proptest::prelude::*;
use silent_speech::tensor::gradcheck::{self, operator_suite, random_tensor, GradCheck};
use silent_speech::tensor::{ops, AdamState, Graph, ParamSet, RngStream, RunningStats, Tensor};

fn t(dims: &[usize], v: &[f64]) -> Tensor<f32> {
    Tensor::from_f64(dims.to_vec(), v).unwrap()
}

fn close(a: &[f32], b: &[f32], tol: f32) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn conv2d_examples() {
    let x = t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
    let y = ops::conv2d(&x, &t(&[1, 1, 1, 1], &[1.0]), &t(&[1], &[0.0]), 1, 0).unwrap();
    assert_eq!(y.dims(), &[1, 2, 2]);
    assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);

    let y = ops::conv2d(&x, &t(&[1, 1, 2, 2], &[0.25; 4]), &t(&[1], &[0.0]), 1, 0).unwrap();
    assert_eq!(y.dims(), &[1, 1, 1]);
    assert_eq!(y.data(), &[2.5]);

    let x = t(&[2, 3, 3], &(0..18).map(|i| i as f64 * 0.3 - 2.0).collect::<Vec<_>>());
    let y = ops::conv2d(&x, &Tensor::zeros(vec![2, 2, 2, 2]), &t(&[2], &[1.5, -4.0]), 1, 1).unwrap();
    assert_eq!(y.dims(), &[2, 4, 4]);
    assert!(y.data()[..16].iter().all(|&v| v == 1.5));
    assert!(y.data()[16..].iter().all(|&v| v == -4.0));
}

#[test]
fn conv2d_output_geometry() {
    let x = Tensor::<f32>::zeros(vec![3, 13, 128, 128]);
    let y = ops::conv2d(&x, &Tensor::zeros(vec![16, 13, 4, 4]), &Tensor::zeros(vec![16]), 2, 1).unwrap();
    assert_eq!(y.dims(), &[3, 16, 64, 64]);
    let y = ops::conv2d(&Tensor::<f32>::zeros(vec![1, 7, 5]), &Tensor::zeros(vec![1, 1, 3, 2]), &Tensor::zeros(vec![1]), 2, 0).unwrap();
    assert_eq!(y.dims(), &[1, 3, 2]);
}

#[test]
fn conv2d_channel_mismatch_names_both() {
    let err = ops::conv2d(
        &Tensor::<f32>::zeros(vec![3, 4, 4]),
        &Tensor::zeros(vec![1, 2, 3, 3]),
        &Tensor::zeros(vec![1]),
        1,
        0,
    )
    .unwrap_err()
    .to_string();
    assert!(err.contains("Cin=3") && err.contains("Cin=2"), "{err}");
    assert!(ops::conv2d(&Tensor::<f32>::zeros(vec![1, 2, 2]), &Tensor::zeros(vec![1, 1, 3, 3]), &Tensor::zeros(vec![1]), 1, 0).is_err());
}

#[test]
fn conv1d_examples() {
    let x = t(&[1, 3], &[1.0, 2.0, 3.0]);
    let zero = t(&[1], &[0.0]);
    let y = ops::conv1d_same(&x, &t(&[1, 1, 3], &[0.0, 1.0, 0.0]), &zero).unwrap();
    assert_eq!(y.data(), &[1.0, 2.0, 3.0]);
    let y = ops::conv1d_same(&x, &t(&[1, 1, 2], &[1.0, 1.0]), &zero).unwrap();
    assert_eq!(y.data(), &[1.0, 3.0, 5.0]);
    let y = ops::conv1d_same(&x, &Tensor::zeros(vec![1, 1, 3]), &zero).unwrap();
    assert_eq!(y.data(), &[0.0; 3]);
    // every kernel length preserves time
    for k in 1..=8 {
        let y = ops::conv1d_same(&Tensor::<f32>::zeros(vec![2, 4, 11]), &Tensor::zeros(vec![5, 4, k]), &Tensor::zeros(vec![5])).unwrap();
        assert_eq!(y.dims(), &[2, 5, 11], "k={k}");
    }
    let mut g = Graph::<f32>::new();
    let (xv, wv, bv) = (g.constant(x.clone()), g.constant(Tensor::zeros(vec![1, 1, 5])), g.constant(zero.clone()));
    assert!(g.conv1d_padded(xv, wv, bv, 1, 0).is_err());
    assert!(ops::conv1d_same(&x, &Tensor::zeros(vec![1, 2, 3]), &zero).is_err());
}

#[test]
fn deconv1d_examples() {
    let y = ops::deconv1d(&t(&[1, 2], &[1.0, 2.0]), &t(&[1, 1, 2], &[1.0, 1.0]), None).unwrap();
    assert_eq!(y.data(), &[1.0, 1.0, 2.0, 2.0]);
    let y = ops::deconv1d(&t(&[1, 2], &[5.0, 7.0]), &t(&[1, 1, 2], &[1.0, 0.0]), None).unwrap();
    assert_eq!(y.data(), &[5.0, 0.0, 7.0, 0.0]);
    let y = ops::deconv1d(&Tensor::<f32>::zeros(vec![3, 2, 5]), &t(&[4, 2, 2], &[0.7; 16]), None).unwrap();
    assert_eq!(y.dims(), &[3, 4, 10]);
    assert!(y.data().iter().all(|&v| v == 0.0));
    assert!(ops::deconv1d(&Tensor::<f32>::zeros(vec![3, 5]), &Tensor::zeros(vec![1, 2, 2]), None).is_err());
}

#[test]
fn deconv1d_matches_scatter_definition() {
    let mut rng = RngStream::new(5, "deconv");
    let x = random_tensor(&[3, 4], 1.0, 0.0, &mut rng);
    let w = random_tensor(&[2, 3, 2], 1.0, 0.0, &mut rng);
    let b = random_tensor(&[2], 1.0, 0.0, &mut rng);
    let y = ops::deconv1d(&x, &w, Some(&b)).unwrap();
    let mut expect = vec![0.0f64; 2 * 8];
    for co in 0..2 {
        for tt in 0..8 {
            expect[co * 8 + tt] = b.data()[co];
        }
        for ci in 0..3 {
            for tt in 0..4 {
                for j in 0..2 {
                    expect[co * 8 + 2 * tt + j] += w.data()[(co * 3 + ci) * 2 + j] * x.data()[ci * 4 + tt];
                }
            }
        }
    }
    for (a, e) in y.data().iter().zip(&expect) {
        assert!((a - e).abs() < 1e-12);
    }
}

#[test]
fn dense_examples() {
    let x = t(&[2], &[0.3, -1.2]);
    let y = ops::dense(&x, &t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]), &t(&[2], &[0.0, 0.0])).unwrap();
    assert_eq!(y.data(), x.data());
    let y = ops::dense(&t(&[2], &[1.0, 1.0]), &t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]), &t(&[2], &[0.0, 0.0])).unwrap();
    assert_eq!(y.data(), &[3.0, 7.0]);
    let y = ops::dense(&t(&[3], &[1.0, 2.0, 3.0]), &Tensor::zeros(vec![1, 3]), &t(&[1], &[9.0])).unwrap();
    assert_eq!(y.data(), &[9.0]);
    assert!(ops::dense(&t(&[3], &[1.0, 2.0, 3.0]), &Tensor::zeros(vec![1, 2]), &t(&[1], &[9.0])).is_err());
}

#[test]
fn leaky_relu_examples() {
    let y = ops::leaky_relu(&t(&[3], &[5.0, -2.0, 0.0]), 0.2).unwrap();
    assert!(close(y.data(), &[5.0, -0.4, 0.0], 1e-7));
    assert!(ops::leaky_relu(&t(&[1], &[1.0]), 1.0).is_err());
}

#[test]
fn dropout_examples() {
    let x = Tensor::<f32>::full(vec![10_000], 1.0);
    let mut rng = RngStream::new(1, "dropout");
    assert_eq!(ops::dropout(&x, 0.0, &mut rng, true).unwrap(), x);
    assert_eq!(ops::dropout(&x, 0.7, &mut rng, false).unwrap(), x);
    let y = ops::dropout(&x, 0.5, &mut rng, true).unwrap();
    let mean = y.data().iter().map(|&v| v as f64).sum::<f64>() / 10_000.0;
    assert!((mean - 1.0).abs() < 3.0 * 0.01, "mean {mean}");
    assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    assert!(ops::dropout(&x, 1.0, &mut rng, true).is_err());
}

#[test]
fn batchnorm_examples() {
    let one = t(&[1], &[1.0]);
    let zero = t(&[1], &[0.0]);
    let mut stats = RunningStats::new(1);
    let y = ops::batchnorm(&t(&[2], &[1.0, 3.0]), &one, &zero, &mut stats, true).unwrap();
    assert!(close(y.data(), &[-1.0, 1.0], 1e-5), "{:?}", y.data());
    // running stats moved 10% towards mean 2, unbiased variance 2
    assert!((stats.mean[0] - 0.2).abs() < 1e-6);
    assert!((stats.var[0] - (0.9 + 0.1 * 2.0)).abs() < 1e-6);

    let beta = t(&[1], &[0.7]);
    let y = ops::batchnorm(&t(&[3], &[4.0; 3]), &one, &beta, &mut RunningStats::new(1), true).unwrap();
    assert!(y.data().iter().all(|&v| (v - 0.7).abs() < 1e-6));
    let y = ops::batchnorm(&t(&[3], &[1.0, 5.0, -2.0]), &zero, &beta, &mut RunningStats::new(1), true).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.7));

    // inference uses the running statistics, so a batch of one is fine
    let mut stats = RunningStats { mean: vec![1.0], var: vec![4.0] };
    let y = ops::batchnorm(&t(&[1], &[3.0]), &one, &zero, &mut stats, false).unwrap();
    assert!((y.data()[0] - 2.0 / (4.0f32 + 1e-5).sqrt()).abs() < 1e-6);

    assert!(ops::batchnorm(&t(&[1], &[3.0]), &one, &zero, &mut RunningStats::new(1), true).is_err());
}

#[test]
fn maxpool_examples() {
    assert_eq!(ops::maxpool1d(&t(&[1, 4], &[1.0, 3.0, 2.0, 5.0])).unwrap().data(), &[3.0, 5.0]);
    assert_eq!(ops::maxpool1d(&t(&[1, 4], &[2.0; 4])).unwrap().data(), &[2.0, 2.0]);
    assert_eq!(ops::maxpool1d(&t(&[1, 2], &[-1.0, -2.0])).unwrap().data(), &[-1.0]);
    assert!(ops::maxpool1d(&t(&[1, 3], &[1.0, 2.0, 3.0])).is_err());
}

#[test]
fn maxpool_gradient_goes_to_first_argmax() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::from_f64(vec![1, 4], &[2.0, 2.0, 1.0, 4.0]).unwrap());
    let y = g.maxpool1d(x).unwrap();
    let s = g.weighted_sum(y, vec![1.0, 1.0]).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0, 0.0, 0.0, 1.0]);
}

#[test]
fn concat_examples() {
    let a = t(&[1, 2], &[1.0, 2.0]);
    let y = ops::concat(&a, &t(&[1, 2], &[3.0, 4.0])).unwrap();
    assert_eq!(y.dims(), &[2, 2]);
    assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(ops::concat(&a, &Tensor::zeros(vec![0, 2])).unwrap(), a);
    let y = ops::concat(&Tensor::<f32>::zeros(vec![2, 5]), &Tensor::zeros(vec![3, 5])).unwrap();
    assert_eq!(y.dims(), &[5, 5]);
    assert!(ops::concat(&Tensor::<f32>::zeros(vec![2, 5]), &Tensor::zeros(vec![3, 4])).is_err());
}

#[test]
fn mse_examples() {
    let a = t(&[2], &[0.3, 0.9]);
    assert_eq!(ops::mse(&a, &a).unwrap(), 0.0);
    assert_eq!(ops::mse(&t(&[2], &[0.0, 0.0]), &t(&[2], &[1.0, 1.0])).unwrap(), 1.0);
    let b = t(&[2], &[-1.0, 2.5]);
    assert_eq!(ops::mse(&a, &b).unwrap(), ops::mse(&b, &a).unwrap());
    assert!(ops::mse(&a, &t(&[3], &[0.0; 3])).is_err());
}

#[test]
fn grad_check_examples() {
    let r = gradcheck::grad_check(&[Tensor::scalar(5.0)], 1e-5, |g, v| g.leaky_relu(v[0], 0.2)).unwrap();
    assert!(r.max_rel_error < 1e-7, "{r:?}");

    let mut rng = RngStream::new(9, "example");
    let x = random_tensor(&[2, 4, 4], 1.0, 0.0, &mut rng);
    let w = random_tensor(&[3, 2, 3, 3], 1.0, 0.0, &mut rng);
    let b = random_tensor(&[3], 1.0, 0.0, &mut rng);
    let proj = gradcheck::projection(3 * 4 * 4, &mut rng);
    let r = gradcheck::grad_check(&[x, w, b], 1e-5, |g, v| {
        let y = g.conv2d(v[0], v[1], v[2], 1, 1)?;
        g.weighted_sum(y, proj.clone())
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-4, "{r:?}");

    let eye = Tensor::from_f64(vec![3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    let x = Tensor::from_f64(vec![3], &[0.4, -1.0, 2.0]).unwrap();
    let r = gradcheck::grad_check(&[x, eye, Tensor::zeros(vec![3])], 1e-5, |g, v| {
        let y = g.dense(v[0], v[1], v[2])?;
        g.weighted_sum(y, vec![0.3, -0.5, 0.9])
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-7, "{r:?}");
}

#[test]
fn every_operator_passes_gradient_check_at_ten_points() {
    let results = operator_suite(2024, 10, 1e-5).unwrap();
    assert!(results.len() >= 11);
    for r in &results {
        assert!(r.max_rel_error < 1e-4, "{}: {}", r.name, r.max_rel_error);
    }
}

#[test]
fn sampled_grad_check_limits_coordinates() {
    let mut rng = RngStream::new(1, "x");
    let x = random_tensor(&[50], 1.0, 0.0, &mut rng);
    let r = GradCheck { max_coords: Some(7), ..GradCheck::default() }
        .run(&[x], |g, v| g.weighted_sum(v[0], vec![2.0; 50]))
        .unwrap();
    assert_eq!(r.coords_checked, 7);
    assert!(r.max_rel_error < 1e-8);
}

#[test]
fn forward_outputs_are_finite_for_finite_inputs() {
    let mut rng = RngStream::new(3, "finite");
    let x = random_tensor(&[2, 3, 8], 100.0, 0.0, &mut rng).cast::<f32>();
    let w = random_tensor(&[4, 3, 3], 10.0, 0.0, &mut rng).cast::<f32>();
    let b = Tensor::<f32>::zeros(vec![4]);
    let y = ops::conv1d_same(&x, &w, &b).unwrap();
    assert!(y.all_finite());
    let y = ops::maxpool1d(&y).unwrap();
    assert!(y.all_finite());
    let y = ops::leaky_relu(&y, 0.2).unwrap();
    let y = ops::batchnorm(&y, &Tensor::full(vec![4], 1.0), &Tensor::zeros(vec![4]), &mut RunningStats::new(4), true).unwrap();
    assert!(y.all_finite());
}

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-3.0f32..3.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conv_is_linear_without_bias(x in vec_strategy(2 * 6 * 6), w in vec_strategy(3 * 2 * 3 * 3), a in -4.0f32..4.0) {
        let xt = Tensor::new(vec![2, 6, 6], x).unwrap();
        let wt = Tensor::new(vec![3, 2, 3, 3], w).unwrap();
        let b = Tensor::zeros(vec![3]);
        let lhs = ops::conv2d(&xt.map(|v| a * v), &wt, &b, 1, 1).unwrap();
        let rhs = ops::conv2d(&xt, &wt, &b, 1, 1).unwrap().map(|v| a * v);
        let scale = rhs.max_abs().max(1.0);
        for (l, r) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((l - r).abs() <= 1e-5 * scale);
        }
    }

    #[test]
    fn conv1d_is_linear_without_bias(x in vec_strategy(3 * 9), w in vec_strategy(2 * 3 * 4), a in -4.0f32..4.0) {
        let xt = Tensor::new(vec![3, 9], x).unwrap();
        let wt = Tensor::new(vec![2, 3, 4], w).unwrap();
        let b = Tensor::zeros(vec![2]);
        let lhs = ops::conv1d_same(&xt.map(|v| a * v), &wt, &b).unwrap();
        let rhs = ops::conv1d_same(&xt, &wt, &b).unwrap().map(|v| a * v);
        let scale = rhs.max_abs().max(1.0);
        for (l, r) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((l - r).abs() <= 1e-5 * scale);
        }
    }

    #[test]
    fn maxpool_undoes_duplication(x in vec_strategy(2 * 7)) {
        let doubled: Vec<f32> = x.iter().flat_map(|&v| [v, v]).collect();
        let y = ops::maxpool1d(&Tensor::new(vec![2, 14], doubled).unwrap()).unwrap();
        prop_assert_eq!(y.data(), &x[..]);
    }

    #[test]
    fn adam_zero_gradient_is_noop_for_any_state(
        init in vec_strategy(6),
        history in prop::collection::vec(vec_strategy(6), 1..5),
    ) {
        let mut params = ParamSet::new();
        params.insert("p", Tensor::new(vec![6], init).unwrap(), true).unwrap();
        let mut adam = AdamState::new(1e-2);
        for g in history {
            adam.step(&mut params, &[Some(g)]).unwrap();
        }
        let before = params.clone();
        adam.step(&mut params, &[Some(vec![0.0; 6])]).unwrap();
        prop_assert_eq!(before, params);
    }
}
