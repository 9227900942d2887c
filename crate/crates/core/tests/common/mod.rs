//! Independent oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use gatqec::formats::{self, DetectorModel, ShotTable};
use gatqec::graph::{self, FlatGraph, SpatialLayout};
use gatqec::matching::{DecodingEdge, DecodingGraph};
use gatqec::model::{self, ModelConfig, ModelParams, Topology};
use gatqec::tensor::{sigmoid, Tape};
use gatqec::training::{self, Adam, Mode, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/chain_4x2.dem")
}

pub fn fixture_model() -> DetectorModel {
    formats::read_dem_file(fixture_path()).expect("fixture parses")
}

pub fn random_table(rng: &mut ChaCha8Rng, n_shots: usize, n_bits: usize) -> ShotTable {
    let bits = (0..n_shots * n_bits).map(|_| rng.gen_range(0..2u8)).collect();
    ShotTable::from_bits(n_bits, bits).unwrap()
}

/// Probability of every (syndrome, observable mask) outcome, by summing over
/// all 2^m subsets of mechanisms. Indexed `[syndrome][obs]`.
pub fn outcome_distribution(model: &DetectorModel) -> Vec<Vec<f64>> {
    assert!(model.mechanisms.len() <= 22 && model.n_detectors <= 16 && model.n_observables <= 4);
    let n_syn = 1usize << model.n_detectors;
    let n_obs = 1usize << model.n_observables;
    let mut dist = vec![vec![0.0; n_obs]; n_syn];
    let masks: Vec<(usize, usize)> = model
        .mechanisms
        .iter()
        .map(|m| {
            (
                m.detectors.iter().fold(0, |a, &d| a ^ (1 << d)),
                m.observables.iter().fold(0, |a, &o| a ^ (1 << o)),
            )
        })
        .collect();
    for subset in 0u64..(1 << masks.len()) {
        let mut p = 1.0;
        let (mut syn, mut obs) = (0, 0);
        for (k, m) in model.mechanisms.iter().enumerate() {
            if subset >> k & 1 == 1 {
                p *= m.probability;
                syn ^= masks[k].0;
                obs ^= masks[k].1;
            } else {
                p *= 1.0 - m.probability;
            }
        }
        dist[syn][obs] += p;
    }
    dist
}

/// Most likely observable mask for each syndrome.
pub fn ml_decoder(model: &DetectorModel) -> Vec<u64> {
    outcome_distribution(model)
        .iter()
        .map(|row| {
            (0..row.len())
                .max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap().then(b.cmp(&a)))
                .unwrap() as u64
        })
        .collect()
}

pub fn row_mask(row: &[u8]) -> u64 {
    row.iter().enumerate().fold(0, |a, (i, &b)| a | (u64::from(b) << i))
}

/// A connected random decoding graph with integer weights, so that every
/// path and matching weight is exact in floating point.
pub fn random_integer_graph(rng: &mut ChaCha8Rng, n_detectors: usize) -> DecodingGraph {
    let boundary = n_detectors;
    let mut edges = Vec::new();
    let mut push = |u: usize, v: usize, rng: &mut ChaCha8Rng| {
        edges.push(DecodingEdge {
            u,
            v,
            probability: 0.1,
            weight: f64::from(rng.gen_range(1..=20u32)),
            observables: rng.gen_range(0..4),
        })
    };
    // spanning path guarantees connectivity
    for d in 1..n_detectors {
        push(d - 1, d, rng);
    }
    for u in 0..n_detectors {
        for v in u + 2..n_detectors {
            if rng.gen_bool(0.3) {
                push(u, v, rng);
            }
        }
        if rng.gen_bool(0.4) {
            push(u, boundary, rng);
        }
    }
    DecodingGraph::from_edges(n_detectors, edges).unwrap()
}

/// All-pairs distances by Floyd-Warshall where the boundary may end a path
/// but never be an intermediate node. `None` means unreachable.
pub fn floyd_warshall(graph: &DecodingGraph) -> Vec<Vec<Option<u64>>> {
    let n = graph.n_nodes();
    let b = graph.boundary();
    let mut d = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0u64);
    }
    for e in &graph.edges {
        let w = e.weight as u64;
        for (x, y) in [(e.u, e.v), (e.v, e.u)] {
            if d[x][y].is_none_or(|c| w < c) {
                d[x][y] = Some(w);
            }
        }
    }
    for k in (0..n).filter(|&k| k != b) {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(c)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|x| a + c < x) {
                        d[i][j] = Some(a + c);
                    }
                }
            }
        }
    }
    d
}

/// Minimum perfect matching weight by recursive enumeration: the first
/// unmatched defect goes to the boundary or to each other defect in turn.
pub fn brute_force_matching(pair: &[Vec<Option<u64>>], boundary: &[Option<u64>]) -> Option<u64> {
    fn go(left: &mut Vec<usize>, pair: &[Vec<Option<u64>>], boundary: &[Option<u64>]) -> Option<u64> {
        let Some(&first) = left.first() else {
            return Some(0);
        };
        let mut best: Option<u64> = None;
        let mut consider = |c: Option<u64>| {
            if let Some(c) = c {
                best = Some(best.map_or(c, |b| b.min(c)));
            }
        };
        left.remove(0);
        if let Some(w) = boundary[first] {
            consider(go(left, pair, boundary).map(|r| r + w));
        }
        for k in 0..left.len() {
            let other = left.remove(k);
            if let Some(w) = pair[first][other] {
                consider(go(left, pair, boundary).map(|r| r + w));
            }
            left.insert(k, other);
        }
        left.insert(0, first);
        best
    }
    go(&mut (0..boundary.len()).collect(), pair, boundary)
}

/// A layout of `nodes` spatial sites over `rounds` rounds, one detector per site and round.
pub fn grid_layout(nodes: usize, rounds: usize) -> SpatialLayout {
    let mut text = String::new();
    for t in 0..rounds {
        for v in 0..nodes {
            text.push_str(&format!("detector({v}, 0, {t}) D{}\n", t * nodes + v));
        }
    }
    let model = formats::parse_dem(&text).unwrap();
    graph::extract_layout(&model).unwrap()
}

/// A random graph example on `layout` with random features, label and teacher.
pub fn random_graph(rng: &mut ChaCha8Rng, layout: &SpatialLayout) -> FlatGraph {
    let shot: Vec<u8> = (0..layout.n_detectors()).map(|_| rng.gen_range(0..2)).collect();
    let teacher: Arc<[f64]> = (0..layout.edges.len()).map(|_| rng.gen_range(0.0..0.2)).collect();
    graph::build_flat_graph(&shot, layout, &teacher, rng.gen_range(0..2)).unwrap()
}

/// Composite training loss of one graph at flattened parameters `flat`.
pub fn loss_at(
    params: &ModelParams,
    flat: &[f64],
    topo: &Topology,
    g: &FlatGraph,
    pos_weight: f64,
    cfg: &TrainConfig,
) -> f64 {
    let mut p = params.clone();
    p.unflatten(flat).unwrap();
    let mut tape = Tape::new();
    let (out, _) = model::forward(&mut tape, &p, topo, g).unwrap();
    let loss = training::total_loss(&mut tape, &out, g.label, pos_weight, &g.teacher_probs, cfg).unwrap();
    tape.scalar(loss.total)
}

/// Denominator floor of the relative error. Central differences at h = 1e-5
/// carry roundoff near 1e-10 for losses of order 1-10, so smaller gradients
/// are compared absolutely at 1e-4 * GRAD_FLOOR.
pub const GRAD_FLOOR: f64 = 1e-5;

pub struct GradCheck {
    pub instances: usize,
    pub coordinates: usize,
    pub max_rel_err: f64,
}

/// Compares the analytic gradient of the full distillation objective with
/// central differences on `instances` seeded random (params, graph) pairs.
/// Every parameter tensor contributes `per_tensor` random coordinates.
pub fn full_model_gradient_check(instances: usize, per_tensor: usize) -> GradCheck {
    let h = 1e-5;
    let mut max_rel_err: f64 = 0.0;
    let mut coordinates = 0;
    for inst in 0..instances as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + inst);
        let layout = if inst % 2 == 0 {
            grid_layout(4, 2)
        } else {
            grid_layout(3, 3)
        };
        let config = ModelConfig {
            seed: inst,
            ..ModelConfig::default()
        };
        let mut params = model::init_params(&config, &layout).unwrap();
        // move off the zero-bias, unit-gain initialization
        let flat: Vec<f64> = params.flatten().iter().map(|w| w + rng.gen_range(-0.1..0.1)).collect();
        params.unflatten(&flat).unwrap();
        let g = random_graph(&mut rng, &layout);
        let topo = Topology::for_graph(&params, &g).unwrap();
        let pos_weight = rng.gen_range(1.0..12.0);
        let cfg = TrainConfig {
            mode: Mode::Distill,
            lambda: rng.gen_range(0.1..2.0),
            ..TrainConfig::default()
        };
        let mut grad = vec![0.0; flat.len()];
        training::graph_step(&params, &topo, &g, pos_weight, &cfg, &mut grad).unwrap();

        let mut offset = 0;
        for m in params.matrices() {
            let len = m.data.len();
            for _ in 0..per_tensor.min(len) {
                let k = offset + rng.gen_range(0..len);
                let mut plus = flat.clone();
                plus[k] += h;
                let mut minus = flat.clone();
                minus[k] -= h;
                let numeric = (loss_at(&params, &plus, &topo, &g, pos_weight, &cfg)
                    - loss_at(&params, &minus, &topo, &g, pos_weight, &cfg))
                    / (2.0 * h);
                let analytic = grad[k];
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(GRAD_FLOOR);
                max_rel_err = max_rel_err.max(rel);
                coordinates += 1;
            }
            offset += len;
        }
    }
    GradCheck {
        instances,
        coordinates,
        max_rel_err,
    }
}

/// Steps of Adam on the distillation loss alone until every edge is within
/// `tol` of its teacher probability.
pub fn distill_only_steps(max_steps: usize, tol: f64) -> (usize, f64) {
    let model_dem = fixture_model();
    let layout = graph::extract_layout(&model_dem).unwrap();
    let teacher: Arc<[f64]> = graph::teacher_edge_probs(&model_dem, &layout).probs.into();
    let g = graph::build_flat_graph(&[0, 1, 0, 0, 1, 1, 0, 0], &layout, &teacher, 1).unwrap();
    let mut params = model::init_params(&ModelConfig::default(), &layout).unwrap();
    let topo = Topology::for_graph(&params, &g).unwrap();
    let mut flat = params.flatten();
    let mut adam = Adam::from_config(flat.len(), &TrainConfig::default());
    let max_err = |p: &model::ModelParams| {
        let (_, edges) = model::predict(p, &topo, &g).unwrap();
        edges
            .iter()
            .zip(teacher.iter())
            .map(|(&l, &t)| (sigmoid(l) - t).abs())
            .fold(0.0, f64::max)
    };
    for step in 0..max_steps {
        let err = max_err(&params);
        if err < tol {
            return (step, err);
        }
        let mut tape = Tape::new();
        let (out, bound) = model::forward(&mut tape, &params, &topo, &g).unwrap();
        let loss = training::distill_mse(&mut tape, out.edge_logits, &teacher).unwrap();
        tape.backward(loss).unwrap();
        adam.step(&mut flat, &bound.gradient(&tape));
        params.unflatten(&flat).unwrap();
    }
    (max_steps, max_err(&params))
}
