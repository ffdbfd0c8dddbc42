mod common;

use common::*;
use csrnet::data::{synthetic_blobs, BlobSpec, Dataset};
use csrnet::nn::{Activation, Layer, OptimizerSpec, SoftmaxCrossEntropy};
use csrnet::sparsity::{Seed, Stream};
use csrnet::tensor::parallel::with_threads;
use csrnet::train::{sgd_train, Backend, LayerSpec, LrSchedule, SequentialModel, TrainConfig};
use csrnet::Error;

fn blobs(features: usize, classes: usize, per_class: usize) -> Dataset<f32> {
    let spec = BlobSpec::new(classes, features, per_class, 1.0);
    synthetic_blobs(&spec, &mut Seed(11).stream(Stream::Data, 0)).unwrap()
}

fn mlp(backend: Backend, layers: &[usize], density: f64) -> SequentialModel<f32> {
    let mut m = SequentialModel::new().with_backend(backend);
    let last = layers.len() - 2;
    for (i, &units) in layers[1..].iter().enumerate() {
        let act = if i == last {
            Activation::NoActivation
        } else {
            Activation::ReLU
        };
        m.add(LayerSpec::sparse(units, density, act, OptimizerSpec::nesterov(0.9)));
    }
    m.compile(layers[0], 20, Seed(3)).unwrap();
    m
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 20,
        ..TrainConfig::default()
    }
}

#[test]
fn loss_decreases_and_schedule_is_followed() {
    let data = blobs(10, 3, 60);
    let mut m = mlp(Backend::Sparse, &[10, 32, 3], 0.5);
    let schedule = LrSchedule::multi_step(0.05, vec![0.5, 0.75], 0.1).unwrap();
    let h = sgd_train(&mut m, &data, &SoftmaxCrossEntropy, &schedule, &config(8)).unwrap();
    assert_eq!(h.len(), 8);
    let lrs: Vec<f64> = h.iter().map(|e| e.lr).collect();
    assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(lrs[0], 0.05);
    assert!((lrs[4] - 0.005).abs() < 1e-15 && (lrs[6] - 0.0005).abs() < 1e-15);
    assert!(h[7].train_loss < h[0].train_loss);
    assert!(h
        .iter()
        .all(|e| e.train_acc.is_some() && e.test_acc.is_some() && e.seconds >= 0.0));
}

#[test]
fn same_seed_gives_identical_weights() {
    let data = blobs(10, 3, 60);
    let run = || {
        let mut m = mlp(Backend::Sparse, &[10, 32, 16, 3], 0.4);
        sgd_train(
            &mut m,
            &data,
            &SoftmaxCrossEntropy,
            &LrSchedule::constant(0.05),
            &config(3),
        )
        .unwrap();
        m.parameters_snapshot().unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    assert_eq!(a, with_threads(3, run).unwrap());
}

#[test]
fn shuffle_seed_changes_the_trajectory() {
    let data = blobs(10, 3, 60);
    let run = |seed| {
        let mut m = mlp(Backend::Sparse, &[10, 16, 3], 0.5);
        let c = TrainConfig {
            seed: Seed(seed),
            ..config(2)
        };
        sgd_train(&mut m, &data, &SoftmaxCrossEntropy, &LrSchedule::constant(0.05), &c).unwrap();
        m.parameters_snapshot().unwrap()
    };
    assert_ne!(run(1), run(2));
}

#[test]
fn sparse_pattern_stays_fixed() {
    let data = blobs(10, 3, 60);
    let mut m = mlp(Backend::Sparse, &[10, 32, 3], 0.3);
    let before: Vec<Vec<(usize, usize)>> = m
        .layers()
        .unwrap()
        .iter()
        .filter_map(|l| match l {
            Layer::Sparse(s) => Some(s.weights().pattern().positions().collect()),
            _ => None,
        })
        .collect();
    sgd_train(
        &mut m,
        &data,
        &SoftmaxCrossEntropy,
        &LrSchedule::constant(0.05),
        &config(2),
    )
    .unwrap();
    let mut k = 0;
    for l in m.layers().unwrap() {
        if let Layer::Sparse(s) = l {
            let now: Vec<_> = s.weights().pattern().positions().collect();
            assert_eq!(now, before[k]);
            assert!(s.grad_weights().pattern() == s.weights().pattern());
            assert!(s.velocity().unwrap().pattern() == s.weights().pattern());
            k += 1;
        }
    }
    assert_eq!(k, 2);
}

#[test]
fn masked_weights_stay_zero_off_mask() {
    let data = blobs(10, 3, 60);
    let mut m = mlp(Backend::Masked, &[10, 32, 3], 0.3);
    sgd_train(
        &mut m,
        &data,
        &SoftmaxCrossEntropy,
        &LrSchedule::constant(0.05),
        &config(3),
    )
    .unwrap();
    for l in m.layers().unwrap() {
        let Layer::Dense(d) = l else {
            panic!("masked backend builds dense layers")
        };
        let mask = d.mask().expect("mask");
        for (w, mk) in d.weights().as_slice().iter().zip(mask.as_slice()) {
            if *mk == 0.0 {
                assert_eq!(*w, 0.0);
            }
        }
    }
}

#[test]
fn backends_agree_after_a_few_steps() {
    let data = blobs(12, 3, 40);
    let mut s = mlp(Backend::Sparse, &[12, 24, 3], 0.4);
    let mut d = mlp(Backend::Masked, &[12, 24, 3], 0.4);
    let c = TrainConfig {
        evaluate: false,
        ..config(2)
    };
    sgd_train(&mut s, &data, &SoftmaxCrossEntropy, &LrSchedule::constant(0.03), &c).unwrap();
    sgd_train(&mut d, &data, &SoftmaxCrossEntropy, &LrSchedule::constant(0.03), &c).unwrap();
    for (ls, ld) in s.layers().unwrap().iter().zip(d.layers().unwrap()) {
        let (Layer::Sparse(ls), Layer::Dense(ld)) = (ls, ld) else {
            panic!()
        };
        let got = csr_as_f64(ls.weights());
        let want = dense_as_f64(ld.weights());
        assert!(rel_err(&got, &want) <= 1e-5);
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let data = blobs(10, 3, 10);
    let schedule = LrSchedule::constant(0.01);
    let mut wrong_in = mlp(Backend::Sparse, &[9, 8, 3], 0.5);
    assert!(matches!(
        sgd_train(&mut wrong_in, &data, &SoftmaxCrossEntropy, &schedule, &config(1)),
        Err(Error::InvalidArgument(_))
    ));
    let mut wrong_out = mlp(Backend::Sparse, &[10, 8, 4], 0.5);
    assert!(sgd_train(&mut wrong_out, &data, &SoftmaxCrossEntropy, &schedule, &config(1)).is_err());
    let mut ok = mlp(Backend::Sparse, &[10, 8, 3], 0.5);
    let huge = TrainConfig {
        batch_size: 1000,
        ..config(1)
    };
    assert!(sgd_train(&mut ok, &data, &SoftmaxCrossEntropy, &schedule, &huge).is_err());
    let mut uncompiled = SequentialModel::<f32>::new();
    uncompiled.add(LayerSpec::dense(
        3,
        Activation::NoActivation,
        OptimizerSpec::GradientDescent,
    ));
    assert!(sgd_train(&mut uncompiled, &data, &SoftmaxCrossEntropy, &schedule, &config(1)).is_err());
    let zero = sgd_train(&mut ok, &data, &SoftmaxCrossEntropy, &schedule, &config(0)).unwrap();
    assert!(zero.is_empty());
}

#[test]
fn divergence_is_reported() {
    let data = blobs(10, 3, 60);
    let mut m = mlp(Backend::Sparse, &[10, 64, 3], 1.0);
    let r = sgd_train(
        &mut m,
        &data,
        &SoftmaxCrossEntropy,
        &LrSchedule::constant(1e6),
        &config(5),
    );
    assert!(matches!(r, Err(Error::State(_))), "{r:?}");
}
