//! Time-flattened graphs.
//!
//! Detectors are projected onto their spatial coordinates (every coordinate
//! but the last, which is time). Each distinct spatial position becomes a node
//! whose feature vector is its detection history over the `T` rounds, and the
//! nodes are joined by a complete graph without self-loops.

use std::collections::HashMap;
use std::sync::Arc;

use serde_json::json;

use crate::error::{Error, Result};
use crate::formats::{DetectorModel, ShotTable};

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialLayout {
    /// Spatial coordinates of each node, in order of first appearance.
    pub nodes: Vec<Vec<f64>>,
    /// Distinct time coordinates, ascending; round `t` is `times[t]`.
    pub times: Vec<f64>,
    /// Detector id -> (node, round).
    pub det_map: Vec<(usize, usize)>,
    /// Complete graph, `(i, j)` with `i < j`, lexicographic order.
    pub edges: Arc<[(usize, usize)]>,
}

/// Coordinates compared bitwise, with -0.0 folded into 0.0.
fn coord_key(coords: &[f64]) -> Vec<u64> {
    coords.iter().map(|c| (c + 0.0).to_bits()).collect()
}

pub fn complete_edges(n_nodes: usize) -> Arc<[(usize, usize)]> {
    (0..n_nodes)
        .flat_map(|i| (i + 1..n_nodes).map(move |j| (i, j)))
        .collect()
}

impl SpatialLayout {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// T, the number of measurement rounds.
    pub fn rounds(&self) -> usize {
        self.times.len()
    }

    pub fn n_detectors(&self) -> usize {
        self.det_map.len()
    }

    /// Position of the undirected edge `{i, j}` in [`Self::edges`].
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let n = self.n_nodes();
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        if a == b || b >= n {
            return None;
        }
        // edges before row a: sum_{r<a} (n-1-r)
        Some(a * (2 * n - a - 1) / 2 + (b - a - 1))
    }

    /// The distinct spatial nodes touched by a set of detectors, sorted.
    pub fn project(&self, detectors: &[usize]) -> Vec<usize> {
        let mut nodes: Vec<usize> = detectors.iter().map(|&d| self.det_map[d].0).collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }
}

/// Projects the model's detectors onto spatial nodes and rounds.
pub fn extract_layout(model: &DetectorModel) -> Result<SpatialLayout> {
    if model.n_detectors == 0 {
        return Err(Error::Layout("model has no detectors".into()));
    }
    let mut coords: Vec<Option<&[f64]>> = vec![None; model.n_detectors];
    for d in &model.detectors {
        coords[d.id] = Some(&d.coords);
    }
    for (id, c) in coords.iter().enumerate() {
        match c {
            None => return Err(Error::Layout(format!("detector D{id} has no coordinates"))),
            Some(c) if c.len() < 2 => {
                return Err(Error::Layout(format!(
                    "detector D{id} needs at least one spatial and one time coordinate, has {}",
                    c.len()
                )))
            }
            _ => {}
        }
    }

    let mut seen_full: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut node_of: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut nodes: Vec<Vec<f64>> = Vec::new();
    let mut node_per_det = vec![0usize; model.n_detectors];

    for d in &model.detectors {
        if let Some(other) = seen_full.insert(coord_key(&d.coords), d.id) {
            return Err(Error::Layout(format!(
                "detectors D{other} and D{} share coordinates {:?}",
                d.id, d.coords
            )));
        }
        let spatial = &d.coords[..d.coords.len() - 1];
        let next = nodes.len();
        let node = *node_of.entry(coord_key(spatial)).or_insert(next);
        if node == next {
            nodes.push(spatial.to_vec());
        }
        node_per_det[d.id] = node;
    }

    let mut times: Vec<f64> = model
        .detectors
        .iter()
        .map(|d| d.coords[d.coords.len() - 1] + 0.0)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let det_map = (0..model.n_detectors)
        .map(|id| {
            let c = coords[id].unwrap();
            let t = c[c.len() - 1] + 0.0;
            let round = times.partition_point(|&x| x < t);
            (node_per_det[id], round)
        })
        .collect();

    Ok(SpatialLayout {
        edges: complete_edges(nodes.len()),
        nodes,
        times,
        det_map,
    })
}

/// Per-edge teacher probabilities plus projection diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherProbs {
    pub probs: Vec<f64>,
    /// Number of mechanisms folded into each edge.
    pub mechanisms_per_edge: Vec<usize>,
    /// Mechanisms whose projection is not exactly two nodes.
    pub unassigned: usize,
}

/// Probability that an odd number of two independent events fire.
pub fn xor_combine(p: f64, q: f64) -> f64 {
    p * (1.0 - q) + q * (1.0 - p)
}

/// Folds every mechanism whose spatial projection is exactly `{i, j}` into
/// the probability for edge `(i, j)`.
pub fn teacher_edge_probs(model: &DetectorModel, layout: &SpatialLayout) -> TeacherProbs {
    let n_edges = layout.edges.len();
    let mut probs = vec![0.0; n_edges];
    let mut counts = vec![0usize; n_edges];
    let mut unassigned = 0;
    for m in &model.mechanisms {
        match layout.project(&m.detectors)[..] {
            [i, j] => {
                let e = layout.edge_index(i, j).expect("projected nodes are in range");
                probs[e] = xor_combine(probs[e], m.probability);
                counts[e] += 1;
            }
            _ => unassigned += 1,
        }
    }
    TeacherProbs {
        probs,
        mechanisms_per_edge: counts,
        unassigned,
    }
}

/// One shot as a graph-level training example.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatGraph {
    n_nodes: usize,
    rounds: usize,
    /// Node-major `n_nodes x rounds` detection events.
    features: Vec<u8>,
    pub edges: Arc<[(usize, usize)]>,
    pub teacher_probs: Arc<[f64]>,
    pub label: u8,
}

impl FlatGraph {
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn feature(&self, node: usize, round: usize) -> u8 {
        self.features[node * self.rounds + round]
    }

    pub fn features(&self) -> &[u8] {
        &self.features
    }

    /// Features as a row-major `n_nodes x rounds` real matrix.
    pub fn feature_matrix(&self) -> Vec<f64> {
        self.features.iter().map(|&b| f64::from(b)).collect()
    }

    /// A graph with the same structure and an arbitrary feature matrix.
    pub fn with_features(&self, features: Vec<u8>) -> Result<Self> {
        if features.len() != self.features.len() {
            return Err(Error::Dimension(format!(
                "expected {} features, got {}",
                self.features.len(),
                features.len()
            )));
        }
        Ok(FlatGraph {
            features,
            ..self.clone()
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let features: Vec<&[u8]> = self.features.chunks(self.rounds.max(1)).collect();
        json!({
            "features": features,
            "edges": self.edges.iter().map(|&(i, j)| [i, j]).collect::<Vec<_>>(),
            "teacher_probs": &*self.teacher_probs,
            "label": self.label,
        })
    }
}

pub fn build_flat_graph(shot: &[u8], layout: &SpatialLayout, teacher: &Arc<[f64]>, label: u8) -> Result<FlatGraph> {
    if shot.len() != layout.n_detectors() {
        return Err(Error::Dimension(format!(
            "shot has {} detection events, layout has {} detectors",
            shot.len(),
            layout.n_detectors()
        )));
    }
    if teacher.len() != layout.edges.len() {
        return Err(Error::Dimension(format!(
            "{} teacher probabilities for {} edges",
            teacher.len(),
            layout.edges.len()
        )));
    }
    let rounds = layout.rounds();
    let mut features = vec![0u8; layout.n_nodes() * rounds];
    for (&bit, &(node, round)) in shot.iter().zip(&layout.det_map) {
        features[node * rounds + round] = bit;
    }
    Ok(FlatGraph {
        n_nodes: layout.n_nodes(),
        rounds,
        features,
        edges: layout.edges.clone(),
        teacher_probs: teacher.clone(),
        label: label & 1,
    })
}

/// Builds one graph per shot. Labels come from the last observable column.
pub fn build_dataset(
    layout: &SpatialLayout,
    teacher: &TeacherProbs,
    detections: &ShotTable,
    observables: &ShotTable,
) -> Result<Vec<FlatGraph>> {
    if detections.n_shots() != observables.n_shots() {
        return Err(Error::Dimension(format!(
            "{} detection shots but {} observable shots",
            detections.n_shots(),
            observables.n_shots()
        )));
    }
    if observables.n_bits() == 0 && observables.n_shots() > 0 {
        return Err(Error::Dimension("observable table has no columns".into()));
    }
    let teacher: Arc<[f64]> = teacher.probs.clone().into();
    detections
        .rows()
        .zip(observables.rows())
        .map(|(shot, obs)| build_flat_graph(shot, layout, &teacher, obs[obs.len() - 1]))
        .collect()
}
