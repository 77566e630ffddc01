mod common;

use common::*;
use s2fin_core::data::PatchTriple;
use s2fin_core::train::{evaluate, train, Adam, TrainConfig};
use s2fin_core::{Error, ModelConfig, ModelParams, Tensor};

fn toy_set(n: usize, classes: usize) -> Vec<PatchTriple> {
    let mut r = rng(21);
    (0..n)
        .map(|i| {
            let x_spec = random(&mut r, &[4, 5, 5], -1.0, 1.0);
            PatchTriple {
                x_spat: x_spec.clone(),
                x_spec,
                x_active: random(&mut r, &[1, 5, 5], -1.0, 1.0),
                label: Some(i % classes),
            }
        })
        .collect()
}

fn toy_config() -> (ModelConfig, TrainConfig) {
    let mut m = ModelConfig::new(4, 1, 3, 5);
    m.embed_dim = 8;
    let t = TrainConfig {
        epochs: 3,
        batch_size: 4,
        embed_dim: 8,
        window: 5,
        seed: 9,
        ..TrainConfig::default()
    };
    (m, t)
}

#[test]
fn same_seed_same_history() {
    let set = toy_set(9, 3);
    let (m, t) = toy_config();
    let a = train(&set, m.clone(), &t).unwrap();
    let b = train(&set, m.clone(), &t).unwrap();
    assert_eq!(a.history.epochs.len(), 3);
    for (x, y) in a.history.epochs.iter().zip(&b.history.epochs) {
        assert_eq!(x.loss.to_bits(), y.loss.to_bits());
        assert_eq!(x.train_accuracy.to_bits(), y.train_accuracy.to_bits());
    }
    for (x, y) in a.params.leaves().iter().zip(b.params.leaves()) {
        assert_eq!(x.value, y.value);
    }
    let ea = evaluate(&a.model, &a.params, &set).unwrap();
    let eb = evaluate(&b.model, &b.params, &set).unwrap();
    assert_eq!(ea, eb);

    let t2 = TrainConfig { seed: 10, ..t };
    let c = train(&set, m, &t2).unwrap();
    assert_ne!(a.history.epochs[0].loss, c.history.epochs[0].loss);
}

#[test]
fn missing_class_is_named() {
    let set: Vec<PatchTriple> = toy_set(9, 3).into_iter().filter(|p| p.label != Some(1)).collect();
    let (m, t) = toy_config();
    match train(&set, m, &t) {
        Err(Error::InsufficientSamples { class, .. }) => assert_eq!(class, 2),
        other => panic!("unexpected {:?}", other.map(|_| ())),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let set = toy_set(3, 3);
    let (m, t) = toy_config();
    for bad in [
        TrainConfig { window: 4, ..t.clone() },
        TrainConfig { learning_rate: 0.0, ..t.clone() },
        TrainConfig { epochs: 0, ..t.clone() },
    ] {
        assert!(train(&set, m.clone(), &bad).is_err());
    }
}

#[test]
fn adam_first_step_moves_by_lr() {
    let mut params = ModelParams::new();
    let id = params.insert("w", Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap(), true).unwrap();
    params.insert("frozen", Tensor::from_vec(&[1], vec![4.0]).unwrap(), false).unwrap();
    params.leaf_mut(id).grad = Tensor::from_vec(&[3], vec![0.3, -5.0, 0.0]).unwrap();
    let mut adam = Adam::new(&params, 0.0);
    adam.step(&mut params, 0.1);
    let w = params.leaf(id).value.data();
    assert!((w[0] - 0.9).abs() < 1e-6);
    assert!((w[1] + 1.9).abs() < 1e-6);
    assert_eq!(w[2], 0.5);
    assert_eq!(params.get("frozen").unwrap().value.data()[0], 4.0);
    assert_eq!(adam.steps(), 1);
}
