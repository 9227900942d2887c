mod common;

use std::sync::Arc;

use gatqec::graph::{self, FlatGraph};
use gatqec::model::{self, ModelConfig, Topology};
use gatqec::training::{self, Mode, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn full_objective_gradient_matches_finite_differences() {
    let r = common::full_model_gradient_check(20, 3);
    assert!(r.coordinates >= 20 * 20);
    assert!(r.max_rel_err < 1e-4, "max relative error {}", r.max_rel_err);
}

#[test]
fn seed_42_logit_is_stable() {
    let layout = common::grid_layout(4, 2);
    let params = model::init_params(&ModelConfig::default(), &layout).unwrap();
    let teacher: Arc<[f64]> = vec![0.0; 6].into();
    let g = graph::build_flat_graph(&[1, 0, 0, 1, 0, 1, 0, 0], &layout, &teacher, 0).unwrap();
    let topo = Topology::for_graph(&params, &g).unwrap();
    let (logit, edges) = model::predict(&params, &topo, &g).unwrap();
    assert_eq!(edges.len(), 6);
    let golden = f64::from_bits(GOLDEN_LOGIT_BITS);
    assert!(
        (logit - golden).abs() < 1e-12,
        "logit {logit:.17} ({:#x})",
        logit.to_bits()
    );
}

const GOLDEN_LOGIT_BITS: u64 = 0xbfeace3d27846e6f;

fn dataset(n: usize, seed: u64) -> (gatqec::graph::SpatialLayout, Vec<FlatGraph>) {
    let layout = common::grid_layout(4, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let teacher: Arc<[f64]> = (0..6).map(|e| 0.01 * e as f64).collect();
    let graphs = (0..n)
        .map(|_| {
            let shot: Vec<u8> = (0..8).map(|_| u8::from(rng.gen_bool(0.12))).collect();
            // any detection event flips the label: permutation invariant, so learnable
            let label = u8::from(shot.contains(&1));
            graph::build_flat_graph(&shot, &layout, &teacher, label).unwrap()
        })
        .collect();
    (layout, graphs)
}

fn small_config(mode: Mode, lambda: f64) -> TrainConfig {
    TrainConfig {
        mode,
        lambda,
        epochs: 3,
        batch_size: 16,
        lr: 5e-3,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_deterministic() {
    let (layout, graphs) = dataset(300, 1);
    let cfg = small_config(Mode::Distill, 0.5);
    let a = training::train(&layout, &graphs, &ModelConfig::default(), &cfg).unwrap();
    let b = training::train(&layout, &graphs, &ModelConfig::default(), &cfg).unwrap();
    assert_eq!(a.params, b.params);
    let losses = |o: &training::TrainOutcome| {
        o.history
            .history
            .iter()
            .map(|r| r.train_loss.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(losses(&a), losses(&b));
    assert_eq!(a.split, b.split);
}

#[test]
fn zero_lambda_reproduces_the_baseline_bit_for_bit() {
    let (layout, graphs) = dataset(300, 2);
    let base = training::train(
        &layout,
        &graphs,
        &ModelConfig::default(),
        &small_config(Mode::Baseline, 0.5),
    )
    .unwrap();
    let dist = training::train(
        &layout,
        &graphs,
        &ModelConfig::default(),
        &small_config(Mode::Distill, 0.0),
    )
    .unwrap();
    let bits = |o: &training::TrainOutcome| o.params.flatten().iter().map(|w| w.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&base), bits(&dist));
}

#[test]
fn separable_labels_are_learned() {
    let (layout, graphs) = dataset(600, 3);
    let cfg = TrainConfig {
        epochs: 8,
        ..small_config(Mode::Baseline, 0.0)
    };
    let out = training::train(&layout, &graphs, &ModelConfig::default(), &cfg).unwrap();
    let first = out.history.history[0].train_loss;
    let last = out.history.history.last().unwrap().train_loss;
    assert!(last < first, "loss {first} -> {last}");
    assert!(
        out.history.final_accuracy > 0.9,
        "accuracy {}",
        out.history.final_accuracy
    );
}

#[test]
fn edge_head_gradient_depends_on_mode() {
    let (_, graphs) = dataset(1, 4);
    let params = model::init_params_for(&ModelConfig::default(), 2, 6).unwrap();
    let topo = Topology::for_graph(&params, &graphs[0]).unwrap();
    let range = params.edge_head_range();
    for (mode, nonzero) in [(Mode::Baseline, false), (Mode::Distill, true)] {
        let mut grad = vec![0.0; params.n_trainable()];
        let cfg = TrainConfig {
            mode,
            ..TrainConfig::default()
        };
        training::graph_step(&params, &topo, &graphs[0], 2.0, &cfg, &mut grad).unwrap();
        assert_eq!(grad[range.clone()].iter().any(|&g| g != 0.0), nonzero, "{mode}");
        assert!(grad[..range.start].iter().any(|&g| g != 0.0));
    }
}

#[test]
fn distillation_alone_fits_the_teacher() {
    let (steps, err) = common::distill_only_steps(2000, 0.05);
    assert!(err < 0.05, "error {err} after {steps} steps");
}
