mod common;

use common::bench;
use kmf_core::numerics::GradCheckOptions;
use kmf_core::objectives::total_loss;
use kmf_core::pipeline::eval::{represent, zero_shot_accuracy};
use kmf_core::pipeline::synth::{synth_generate, SynthConfig};
use kmf_core::pipeline::train::{gradient_check, step_inputs, train};
use kmf_core::pipeline::{
    make_split, partition_nodes, prepare, SplitConfig, SplitMode, TrainConfig,
};
use kmf_core::KmfError;

fn small(seed: u64) -> kmf_core::pipeline::synth::SynthData {
    synth_generate(&SynthConfig {
        nodes_per_class: 25,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

#[test]
fn epoch_zero_total_is_sum_of_parts() {
    let d = small(0);
    let cfg = TrainConfig {
        epochs: 3,
        negatives: 2,
        lambda1: 0.4,
        lambda2: 0.2,
        ..TrainConfig::default()
    };
    let r = bench::run(&d, &cfg);
    for m in &r.outcome.metrics {
        let l = m.losses;
        let parts = total_loss(
            l.classification,
            l.contrastive,
            l.distance,
            l.direction,
            0.4,
            0.2,
        );
        assert!((l.total - parts).abs() < 1e-12);
    }
}

#[test]
fn layerless_scorer_never_increases_loss() {
    let d = small(1);
    let cfg = TrainConfig {
        layers: 0,
        lambda1: 0.0,
        lambda2: 0.0,
        epochs: 10,
        ..TrainConfig::default()
    };
    let r = bench::run(&d, &cfg);
    let trace: Vec<f64> = r.outcome.metrics.iter().map(|m| m.losses.total).collect();
    assert!(trace.windows(2).all(|w| w[1] <= w[0]), "{trace:?}");
}

#[test]
fn one_layer_training_lowers_classification_loss() {
    let d = small(2);
    let cfg = TrainConfig {
        layers: 1,
        lambda1: 0.0,
        lambda2: 0.0,
        learning_rate: 0.01,
        epochs: 60,
        ..TrainConfig::default()
    };
    let r = bench::run(&d, &cfg);
    let (first, last) = (
        r.outcome.metrics[0].losses.total,
        r.outcome.metrics.last().unwrap().losses.total,
    );
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn mode_two_keeps_best_validation_epoch() {
    let d = small(3);
    let cfg = TrainConfig {
        epochs: 15,
        learning_rate: 0.01,
        negatives: 0,
        split: SplitConfig {
            mode: SplitMode::II,
            train: 2,
            val: 2,
            unseen: 2,
            unseen_val_fraction: 0.0,
        },
        ..TrainConfig::default()
    };
    let r = bench::run(&d, &cfg);
    let ckpt = &r.outcome.checkpoint;
    assert_eq!(ckpt.split.val.len(), 2);
    let hg = represent(&ckpt.params, &r.prepared).unwrap();
    let acc = zero_shot_accuracy(
        &hg,
        &r.prepared.csds,
        &r.prepared.labels,
        &r.partition.val,
        &ckpt.split.val,
    )
    .unwrap();
    assert_eq!(Some(acc), r.outcome.val_accuracy);
    assert!(r.outcome.best_epoch < 15);
}

#[test]
fn non_finite_loss_reports_epoch() {
    let d = small(4);
    let cfg = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let ds = d.dataset().unwrap();
    let mut prepared = prepare(&ds, &bench::neighborhoods(&d, &cfg), &d.table, &cfg).unwrap();
    prepared
        .csds
        .data_mut()
        .iter_mut()
        .for_each(|x| *x = f64::MAX);
    let split = make_split(6, &cfg.split, 0).unwrap();
    let part = partition_nodes(&ds, &split, 0.0, 0);
    assert!(matches!(
        train(&prepared, &split, &part, &cfg),
        Err(KmfError::Divergence { epoch: 0 })
    ));
}

#[test]
fn gradients_check_on_generated_graph() {
    let d = small(5);
    let cfg = TrainConfig {
        negatives: 2,
        lambda1: 0.5,
        lambda2: 0.5,
        ..TrainConfig::default()
    };
    let ds = d.dataset().unwrap();
    let prepared = prepare(&ds, &bench::neighborhoods(&d, &cfg), &d.table, &cfg).unwrap();
    let split = make_split(6, &cfg.split, 0).unwrap();
    let part = partition_nodes(&ds, &split, 0.0, 0);
    let err = gradient_check(&prepared, &split, &part, &cfg, &GradCheckOptions::default()).unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn training_sees_only_seen_class_nodes() {
    let d = small(6);
    let cfg = TrainConfig::default();
    let ds = d.dataset().unwrap();
    let prepared = prepare(&ds, &bench::neighborhoods(&d, &cfg), &d.table, &cfg).unwrap();
    let split = make_split(6, &cfg.split, 6).unwrap();
    let part = partition_nodes(&ds, &split, 0.0, 6);
    let inputs = step_inputs(&prepared, &split, &part, &cfg, 0).unwrap();
    let labels = ds.labels();
    assert!(inputs
        .train_nodes
        .iter()
        .all(|&v| split.train.contains(&labels[v])));
    assert!(part.test.iter().all(|&v| split.unseen.contains(&labels[v])));
    assert_eq!(part.train.len() + part.test.len(), ds.len());
}
