use silent_speech::dataset::{align, make_pairs, synth_clip, synth_corpus, PreparedClip, SynthConfig, TrainingPair};
use silent_speech::models::{
    he_limit, pipeline_infer, train_net1, train_net2, Net1, Net1Config, Net2, Net2Config, Net2TrainConfig, TrainConfig,
};
use silent_speech::models::check;
use silent_speech::tensor::{Graph, RngStream, Tensor};
use silent_speech::Error;

fn small_net1_config() -> Net1Config {
    Net1Config {
        frame_size: 16,
        ..Net1Config::default()
    }
}

fn small_corpus(n: usize) -> Vec<PreparedClip> {
    let config = SynthConfig {
        frame_size: 16,
        ..SynthConfig::default()
    };
    synth_corpus(3, n, 3.68, &config)
        .unwrap()
        .iter()
        .map(|c| PreparedClip::new(&c.id, &align(&c.frames, &c.audio, 0.0).unwrap()).unwrap())
        .collect()
}

fn zero_all<T: silent_speech::tensor::Real>(params: &mut silent_speech::tensor::ParamSet<T>) {
    for p in params.iter_mut() {
        if p.name.ends_with("running_var") || p.name.ends_with("gamma") {
            continue;
        }
        p.tensor.data_mut().iter_mut().for_each(|v| *v = T::zero());
    }
}

#[test]
fn net1_parameter_count_matches_table() {
    let net: Net1 = Net1::init(Net1Config::default(), &mut RngStream::new(0, "init")).unwrap();
    // conv blocks (weights, biases, gamma, beta) then the two dense layers.
    let conv = [(16, 13), (32, 16), (64, 32), (128, 64)]
        .iter()
        .map(|&(c, cin)| c * cin * 16 + c + 2 * c)
        .sum::<usize>();
    let dense = 8192 * 512 + 512 + 512 * 64 + 64;
    assert_eq!(net.params.trainable_count(), conv + dense);
    assert_eq!(net.params.trainable_count(), 4_403_728);
    assert_eq!(Net1Config::default().trainable_count(), 4_403_728);
}

#[test]
fn net1_init_is_deterministic_and_bounded() {
    let a: Net1 = Net1::init(Net1Config::default(), &mut RngStream::new(4, "init")).unwrap();
    let b: Net1 = Net1::init(Net1Config::default(), &mut RngStream::new(4, "init")).unwrap();
    assert_eq!(a, b);
    for p in a.params.iter() {
        let dims = p.tensor.dims();
        if p.name.ends_with(".weight") {
            let fan_in: usize = dims[1..].iter().product();
            let limit = he_limit(fan_in) as f32;
            assert!(p.tensor.max_abs() <= limit, "{} exceeds {limit}", p.name);
            assert!(p.tensor.max_abs() > 0.5 * limit, "{} suspiciously small", p.name);
        } else if p.name.ends_with(".bias") || p.name.ends_with(".beta") {
            assert!(p.tensor.data().iter().all(|&v| v == 0.0), "{}", p.name);
        } else if p.name.ends_with(".gamma") {
            assert!(p.tensor.data().iter().all(|&v| v == 1.0), "{}", p.name);
        }
    }
}

#[test]
fn net1_inference_contract() {
    let mut net: Net1 = Net1::init(small_net1_config(), &mut RngStream::new(1, "init")).unwrap();
    let mut rng = RngStream::new(2, "windows");
    let w1: Vec<f32> = (0..13 * 256).map(|_| rng.uniform() as f32).collect();
    let w2: Vec<f32> = (0..13 * 256).map(|_| rng.uniform() as f32).collect();
    let out = net.predict(&[&w1, &w2, &w1]).unwrap();
    assert_eq!(out.len(), 3 * 64);
    assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(out[..64], out[128..]);
    assert!(net.predict(&[&w1[1..]]).is_err());
    zero_all(&mut net.params);
    assert!(net.predict(&[&w1]).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn net1_rejects_wrong_window_shape() {
    let net: Net1 = Net1::init(small_net1_config(), &mut RngStream::new(1, "init")).unwrap();
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(vec![2, 12, 16, 16]));
    let vars = net.bind(&mut g, false);
    let err = net.forward(&mut g, x, &vars, false, &mut RngStream::new(0, "d")).unwrap_err();
    assert!(matches!(err, Error::Shape(_)));
}

#[test]
fn net1_reduced_gradient_check() {
    for seed in 0..2 {
        let report = check::net1_gradient_check(seed).unwrap();
        assert!(report.max_rel_error < 1e-3, "net1 seed {seed}: {report:?}");
        assert!(report.coords_checked > 100);
    }
}

#[test]
fn net2_reduced_gradient_check() {
    for seed in 0..2 {
        let report = check::net2_gradient_check(seed).unwrap();
        assert!(report.max_rel_error < 1e-3, "net2 seed {seed}: {report:?}");
        assert!(report.coords_checked > 100);
    }
}

#[test]
fn net2_shapes_and_zero_weights() {
    let config = Net2Config::default();
    assert_eq!(config.level_lengths(), vec![184, 92, 46, 23]);
    let mut net: Net2 = Net2::init(config, &mut RngStream::new(1, "init")).unwrap();
    let mut rng = RngStream::new(3, "grid");
    let grid: Vec<f32> = (0..184 * 64).map(|_| rng.uniform() as f32).collect();
    let out = net.predict(&grid).unwrap();
    assert_eq!(out.len(), 184 * 64);
    assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(net.predict(&grid[64..]).is_err());
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(vec![1, 64, 176]));
    let vars = net.bind(&mut g, false);
    assert!(net.forward(&mut g, x, &vars, false, &mut rng).is_err());
    zero_all(&mut net.params);
    assert!(net.predict(&grid).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn net2_preserves_length_for_any_parameters() {
    for seed in 0..3 {
        let mut rng = RngStream::new(seed, "params");
        let mut net: Net2 = Net2::init(Net2Config::default(), &mut rng).unwrap();
        let scale = [0.01f32, 1.0, 30.0][seed as usize];
        for p in net.params.iter_mut() {
            p.tensor.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(vec![2, 64, 184], 0.5f32));
        let vars = net.bind(&mut g, false);
        let (y, _) = net.forward(&mut g, x, &vars, true, &mut rng).unwrap();
        assert_eq!(g.dims(y), &[2, 64, 184]);
        assert!(g.value(y).all_finite());
    }
}

fn overfit_pairs(clip: &PreparedClip) -> Vec<TrainingPair<'_>> {
    make_pairs(&clip.frames, &clip.mel).into_iter().step_by(2).take(64).collect()
}

#[test]
fn zero_epochs_returns_initialization() {
    let clips = small_corpus(1);
    let pairs = overfit_pairs(&clips[0]);
    let config = TrainConfig {
        epochs: 0,
        seed: 5,
        ..TrainConfig::default()
    };
    let (net, report) = train_net1(&pairs, &[], small_net1_config(), &config).unwrap();
    assert_eq!(net, Net1::init(small_net1_config(), &mut RngStream::new(5, "init")).unwrap());
    assert_eq!(report.steps, 0);
    assert!(train_net1(&[], &[], small_net1_config(), &config).is_err());
    let tiny = TrainConfig {
        batch_size: 1,
        ..config
    };
    assert!(train_net1(&pairs, &[], small_net1_config(), &tiny).is_err());
}

#[test]
fn training_is_deterministic() {
    let clips = small_corpus(1);
    let pairs = overfit_pairs(&clips[0]);
    let config = TrainConfig {
        epochs: 2,
        seed: 9,
        ..TrainConfig::default()
    };
    let (a, ra) = train_net1(&pairs, &pairs[..8], small_net1_config(), &config).unwrap();
    let (b, rb) = train_net1(&pairs, &pairs[..8], small_net1_config(), &config).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(a, b);
    assert_eq!(ra.steps, 16);
    assert_eq!(ra.val_losses.len(), 2);
    assert!(ra.step_losses.iter().all(|l| l.is_finite() && *l >= 0.0));
}

#[test]
fn non_finite_loss_aborts_with_last_good_parameters() {
    let clips = small_corpus(1);
    let pairs = overfit_pairs(&clips[0]);
    let bad_target = vec![f32::NAN; 64];
    let mut poisoned = pairs.clone();
    for p in poisoned.iter_mut() {
        p.target = &bad_target;
    }
    let config = TrainConfig {
        epochs: 1,
        seed: 2,
        ..TrainConfig::default()
    };
    let (net, report) = train_net1(&poisoned, &[], small_net1_config(), &config).unwrap();
    assert!(report.abort.is_some());
    assert!(report.ensure_completed().is_err());
    assert_eq!(net, Net1::init(small_net1_config(), &mut RngStream::new(2, "init")).unwrap());
}

#[test]
fn net1_loss_halves_within_50_steps() {
    let clip = synth_clip(1, 0, 3.68, &SynthConfig::default()).unwrap();
    let prepared = PreparedClip::new(&clip.id, &align(&clip.frames, &clip.audio, 0.0).unwrap()).unwrap();
    let pairs = overfit_pairs(&prepared);
    let config = TrainConfig {
        epochs: usize::MAX,
        batch_size: 8,
        max_steps: Some(50),
        seed: 1,
        ..TrainConfig::default()
    };
    let (_, report) = train_net1(&pairs, &[], Net1Config::default(), &config).unwrap();
    let first = report.step_losses[0];
    let tail: f64 = report.step_losses[45..].iter().sum::<f64>() / 5.0;
    assert!(tail <= 0.5 * first, "loss {first} -> {tail}");
}

#[test]
fn net2_training_contract() {
    let clips = small_corpus(3);
    let (net1, _) = train_net1(
        &overfit_pairs(&clips[0]),
        &[],
        small_net1_config(),
        &TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let config = Net2TrainConfig {
        train: TrainConfig {
            epochs: 1,
            batch_size: 2,
            seed: 4,
            ..TrainConfig::default()
        },
        sigma: 0.0,
        augment_count: 1,
        ..Net2TrainConfig::default()
    };
    let (a, ra) = train_net2(&net1, &clips, &config).unwrap();
    assert_eq!(ra.examples, 3);
    let (b, rb) = train_net2(&net1, &clips, &config).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(a, b);
    assert!(train_net2(&net1, &[], &config).is_err());
}

#[test]
fn checkpoints_round_trip_and_diagnose() {
    let dir = tempfile::tempdir().unwrap();
    let net1: Net1 = Net1::init(small_net1_config(), &mut RngStream::new(1, "init")).unwrap();
    let net2: Net2 = Net2::init(Net2Config::default(), &mut RngStream::new(1, "init")).unwrap();
    let p1 = dir.path().join("n1.ckpt");
    let p2 = dir.path().join("n2.ckpt");
    net1.save(&p1, 1, serde_json::json!({"epochs": 3})).unwrap();
    net2.save(&p2, 1, serde_json::json!({"train_clips": ["clip_000"]})).unwrap();
    let (back1, m1) = Net1::load(&p1).unwrap();
    assert_eq!(back1, net1);
    assert_eq!(m1.arch, "net1");
    assert_eq!(m1.hyper["epochs"], 3);
    for (a, b) in back1.params.iter().zip(net1.params.iter()) {
        assert!(a.tensor.data().iter().zip(b.tensor.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    assert_eq!(Net2::load(&p2).unwrap().0, net2);
    assert!(std::fs::read_to_string(dir.path().join("n1.ckpt.json")).unwrap().contains("\"arch\": \"net1\""));

    assert!(matches!(Net1::load(&p2), Err(Error::ArchMismatch { .. })));

    let m = dir.path().join("n1.ckpt.json");
    let text = std::fs::read_to_string(&m).unwrap();
    std::fs::write(&m, text.replace("\"version\": 1", "\"version\": 9")).unwrap();
    assert!(matches!(Net1::load(&p1), Err(Error::VersionMismatch { found: 9, .. })));
    std::fs::write(&m, &text).unwrap();

    use silent_speech::dataset::{SvtTensor, TensorSet};
    let set = TensorSet::load(&p1).unwrap();
    let mut tampered = TensorSet::new();
    let mut missing = TensorSet::new();
    for (name, t) in set.iter() {
        let t = if name == "dense2.bias" {
            SvtTensor::f32([2, 32], vec![0.0; 64]).unwrap()
        } else {
            t.clone()
        };
        if name != "conv3.weight" {
            missing.insert(name, t.clone()).unwrap();
        }
        tampered.insert(name, t).unwrap();
    }
    tampered.pack(&p1).unwrap();
    let err = Net1::load(&p1).unwrap_err();
    assert!(matches!(&err, Error::TensorShape { name, .. } if name == "dense2.bias"), "{err}");
    assert!(err.to_string().contains("dense2.bias"));
    missing.pack(&p1).unwrap();
    assert!(matches!(Net1::load(&p1), Err(Error::MissingTensor(n)) if n == "conv3.weight"));
}

#[test]
fn pipeline_arithmetic_and_determinism() {
    let net1: Net1 = Net1::init(Net1Config::default(), &mut RngStream::new(1, "init")).unwrap();
    let net2: Net2 = Net2::init(Net2Config::default(), &mut RngStream::new(2, "init")).unwrap();
    let clip = synth_clip(5, 0, 3.68, &SynthConfig::default()).unwrap();
    assert_eq!(clip.frames.len(), 110);
    let run = |seed| pipeline_infer(&clip.frames, &net1, &net2, 8, true, &mut RngStream::new(seed, "infer")).unwrap();
    let out = run(3);
    assert_eq!(out.mask.iter().filter(|&&m| m).count(), 163);
    assert_eq!(out.net1_mel.frames(), 184);
    assert_eq!(out.net2_mel.frames(), 184);
    assert_eq!(out.audio.len(), 58_880);
    assert_eq!(out.net1_audio.as_ref().unwrap().len(), 58_880);
    assert_eq!(out, run(3));
    let short = clip.frames.slice(0, 12);
    let err = pipeline_infer(&short, &net1, &net2, 8, false, &mut RngStream::new(0, "infer")).unwrap_err();
    assert!(err.to_string().contains("need ≥ 13 frames"), "{err}");
}
