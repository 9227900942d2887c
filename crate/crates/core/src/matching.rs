//! Minimum-weight perfect matching reference decoder.
//!
//! Each one- or two-detector mechanism of the model becomes an edge of a
//! decoding graph weighted `ln((1 - p) / p)`; one-detector mechanisms attach
//! to a single virtual boundary node. For a syndrome, shortest paths between
//! the fired detectors (and to the boundary) are computed with Dijkstra, and
//! an exact minimum-weight pairing is found by dynamic programming over
//! subsets of defects. The prediction is the XOR of the observable masks of
//! the matched paths.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{DetectorModel, ShotTable};
use crate::graph::xor_combine;

/// Largest defect count the exact matcher accepts.
pub const MAX_DEFECTS: usize = 16;

/// Observable flips as a bitset; bit `j` is observable `L<j>`.
pub type ObsMask = u64;

#[derive(Clone, Debug, PartialEq)]
pub struct DecodingEdge {
    pub u: usize,
    /// Equal to the graph's boundary index for boundary edges.
    pub v: usize,
    pub probability: f64,
    pub weight: f64,
    pub observables: ObsMask,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodingGraph {
    pub n_detectors: usize,
    pub n_observables: usize,
    pub edges: Vec<DecodingEdge>,
    adjacency: Vec<Vec<(usize, usize)>>,
    /// Mechanisms skipped because they touch no detector or have p = 0.
    pub skipped: usize,
}

pub fn edge_weight(p: f64) -> f64 {
    ((1.0 - p) / p).ln()
}

fn obs_mask(observables: &[usize]) -> ObsMask {
    observables.iter().fold(0, |m, &o| m | (1 << o))
}

struct Merged {
    probability: f64,
    dominant_p: f64,
    observables: ObsMask,
}

/// Builds the weighted decoding graph of `model`.
pub fn build_decoding_graph(model: &DetectorModel) -> Result<DecodingGraph> {
    if model.n_observables > ObsMask::BITS as usize {
        return Err(Error::UnsupportedModel(format!(
            "{} observables exceed the {}-bit mask",
            model.n_observables,
            ObsMask::BITS
        )));
    }
    let boundary = model.n_detectors;
    let too_wide: Vec<usize> = model
        .mechanisms
        .iter()
        .enumerate()
        .filter(|(_, m)| m.detectors.len() > 2)
        .map(|(i, _)| i)
        .collect();
    if !too_wide.is_empty() {
        return Err(Error::UnsupportedModel(format!(
            "mechanisms {too_wide:?} touch more than two detectors"
        )));
    }

    let mut merged: BTreeMap<(usize, usize), Merged> = BTreeMap::new();
    let mut skipped = 0;
    for (i, m) in model.mechanisms.iter().enumerate() {
        if m.probability >= 0.5 {
            return Err(Error::Validation(format!(
                "mechanism {i} has p = {} >= 0.5, which has no positive matching weight",
                m.probability
            )));
        }
        let key = match m.detectors[..] {
            [a] => (a, boundary),
            [a, b] => (a, b),
            _ => {
                skipped += 1;
                continue;
            }
        };
        if m.probability == 0.0 {
            skipped += 1;
            continue;
        }
        let mask = obs_mask(&m.observables);
        merged
            .entry(key)
            .and_modify(|e| {
                e.probability = xor_combine(e.probability, m.probability);
                if m.probability > e.dominant_p {
                    e.dominant_p = m.probability;
                    e.observables = mask;
                }
            })
            .or_insert(Merged {
                probability: m.probability,
                dominant_p: m.probability,
                observables: mask,
            });
    }

    let mut adjacency = vec![Vec::new(); boundary + 1];
    let edges: Vec<DecodingEdge> = merged
        .into_iter()
        .enumerate()
        .map(|(idx, ((u, v), e))| {
            adjacency[u].push((v, idx));
            adjacency[v].push((u, idx));
            DecodingEdge {
                u,
                v,
                probability: e.probability,
                weight: edge_weight(e.probability),
                observables: e.observables,
            }
        })
        .collect();
    for adj in &mut adjacency {
        adj.sort_unstable();
    }
    Ok(DecodingGraph {
        n_detectors: model.n_detectors,
        n_observables: model.n_observables,
        edges,
        adjacency,
        skipped,
    })
}

impl DecodingGraph {
    pub fn boundary(&self) -> usize {
        self.n_detectors
    }

    pub fn n_nodes(&self) -> usize {
        self.n_detectors + 1
    }

    /// A copy with every edge weight multiplied by `c`.
    pub fn scaled(&self, c: f64) -> DecodingGraph {
        let mut g = self.clone();
        g.edges.iter_mut().for_each(|e| e.weight *= c);
        g
    }

    /// A graph with explicit weights, for testing the path and matching stages.
    pub fn from_edges(n_detectors: usize, edges: Vec<DecodingEdge>) -> Result<DecodingGraph> {
        let mut adjacency = vec![Vec::new(); n_detectors + 1];
        for (idx, e) in edges.iter().enumerate() {
            if e.u > n_detectors || e.v > n_detectors || e.u == e.v {
                return Err(Error::Validation(format!("edge {idx} ({}, {}) is invalid", e.u, e.v)));
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(Error::Validation(format!(
                    "edge {idx} weight {} is not positive",
                    e.weight
                )));
            }
            adjacency[e.u].push((e.v, idx));
            adjacency[e.v].push((e.u, idx));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Ok(DecodingGraph {
            n_detectors,
            n_observables: ObsMask::BITS as usize,
            edges,
            adjacency,
            skipped: 0,
        })
    }

    /// Single-source shortest paths from `source`. The boundary absorbs
    /// paths but is never passed through. Among equal-weight paths the
    /// lexicographically smallest node sequence wins.
    pub fn shortest_paths(&self, source: usize) -> Vec<Option<PathInfo>> {
        let n = self.n_nodes();
        let mut best: Vec<Option<PathInfo>> = vec![None; n];
        let mut done = vec![false; n];
        best[source] = Some(PathInfo {
            distance: 0.0,
            observables: 0,
            nodes: vec![source],
        });
        let mut heap = BinaryHeap::new();
        heap.push(HeapEntry {
            distance: 0.0,
            node: source,
        });
        while let Some(HeapEntry { node, .. }) = heap.pop() {
            if done[node] {
                continue;
            }
            done[node] = true;
            if node == self.boundary() && node != source {
                continue;
            }
            let here = best[node].clone().expect("popped nodes have a path");
            for &(next, e) in &self.adjacency[node] {
                if done[next] {
                    continue;
                }
                let edge = &self.edges[e];
                let d = here.distance + edge.weight;
                let better = match &best[next] {
                    None => true,
                    Some(cur) => {
                        d < cur.distance || (d == cur.distance && lex_less_extended(&here.nodes, next, &cur.nodes))
                    }
                };
                if better {
                    let mut nodes = here.nodes.clone();
                    nodes.push(next);
                    best[next] = Some(PathInfo {
                        distance: d,
                        observables: here.observables ^ edge.observables,
                        nodes,
                    });
                    heap.push(HeapEntry {
                        distance: d,
                        node: next,
                    });
                }
            }
        }
        best
    }
}

/// `prefix ++ [last] < other`, lexicographically.
fn lex_less_extended(prefix: &[usize], last: usize, other: &[usize]) -> bool {
    prefix
        .iter()
        .copied()
        .chain(std::iter::once(last))
        .cmp(other.iter().copied())
        == Ordering::Less
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathInfo {
    pub distance: f64,
    pub observables: ObsMask,
    pub nodes: Vec<usize>,
}

#[derive(PartialEq)]
struct HeapEntry {
    distance: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then node id
        other
            .distance
            .total_cmp(&self.distance)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Distances between defects and from each defect to the boundary.
/// Unreachable entries are infinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DefectDistances {
    pub n: usize,
    /// Row-major `n x n`.
    pub pair: Vec<f64>,
    pub pair_mask: Vec<ObsMask>,
    pub boundary: Vec<f64>,
    pub boundary_mask: Vec<ObsMask>,
}

impl DefectDistances {
    pub fn pair(&self, a: usize, b: usize) -> f64 {
        self.pair[a * self.n + b]
    }

    /// Distances with no observable information, e.g. for matching tests.
    pub fn from_weights(pair: Vec<f64>, boundary: Vec<f64>) -> Result<Self> {
        let n = boundary.len();
        if pair.len() != n * n {
            return Err(Error::Dimension(format!(
                "{} pair distances for {n} defects",
                pair.len()
            )));
        }
        Ok(DefectDistances {
            n,
            pair,
            pair_mask: vec![0; n * n],
            boundary,
            boundary_mask: vec![0; n],
        })
    }
}

pub fn all_pairs_defect_distances(graph: &DecodingGraph, defects: &[usize]) -> Result<DefectDistances> {
    let n = defects.len();
    if let Some(&d) = defects.iter().find(|&&d| d >= graph.n_detectors) {
        return Err(Error::Dimension(format!(
            "defect D{d} outside the {} detectors",
            graph.n_detectors
        )));
    }
    let mut out = DefectDistances {
        n,
        pair: vec![f64::INFINITY; n * n],
        pair_mask: vec![0; n * n],
        boundary: vec![f64::INFINITY; n],
        boundary_mask: vec![0; n],
    };
    for (a, &src) in defects.iter().enumerate() {
        let paths = graph.shortest_paths(src);
        for (b, &dst) in defects.iter().enumerate() {
            if let Some(p) = &paths[dst] {
                out.pair[a * n + b] = p.distance;
                out.pair_mask[a * n + b] = p.observables;
            }
        }
        if let Some(p) = &paths[graph.boundary()] {
            out.boundary[a] = p.distance;
            out.boundary_mask[a] = p.observables;
        }
    }
    Ok(out)
}

/// A perfect matching of defects, each paired with another or with the boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct Matching {
    /// `(a, Some(b))` with `a < b`, or `(a, None)` for a boundary match; sorted.
    pub pairs: Vec<(usize, Option<usize>)>,
    pub weight: f64,
}

/// Exact minimum-weight matching by dynamic programming over defect subsets.
pub fn min_weight_matching(dist: &DefectDistances) -> Result<Matching> {
    let n = dist.n;
    if n > MAX_DEFECTS {
        return Err(Error::Capacity {
            defects: n,
            max: MAX_DEFECTS,
        });
    }
    let full = (1usize << n) - 1;
    // cost[mask]: best weight for matching exactly the defects in `mask`
    let mut cost = vec![f64::INFINITY; full + 1];
    let mut choice = vec![usize::MAX; full + 1];
    cost[0] = 0.0;
    for mask in 1..=full {
        let i = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << i);
        let mut best = cost[rest] + dist.boundary[i];
        let mut pick = i;
        let mut others = rest;
        while others != 0 {
            let j = others.trailing_zeros() as usize;
            others &= others - 1;
            let c = cost[rest & !(1 << j)] + dist.pair(i, j);
            if c < best {
                best = c;
                pick = j;
            }
        }
        cost[mask] = best;
        choice[mask] = pick;
    }
    if !cost[full].is_finite() {
        let stuck = (0..n)
            .find(|&i| !dist.boundary[i].is_finite() && (0..n).all(|j| j == i || !dist.pair(i, j).is_finite()))
            .unwrap_or(0);
        return Err(Error::NoMatching(stuck));
    }
    let mut pairs = Vec::new();
    let mut mask = full;
    while mask != 0 {
        let i = mask.trailing_zeros() as usize;
        let j = choice[mask];
        if j == i {
            pairs.push((i, None));
            mask &= !(1 << i);
        } else {
            pairs.push((i, Some(j)));
            mask &= !(1 << i) & !(1 << j);
        }
    }
    pairs.sort_unstable();
    Ok(Matching {
        pairs,
        weight: cost[full],
    })
}

fn defects_of(syndrome: &[u8]) -> Vec<usize> {
    syndrome
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == 1)
        .map(|(i, _)| i)
        .collect()
}

/// Predicted observable flips for one syndrome.
pub fn decode(graph: &DecodingGraph, syndrome: &[u8]) -> Result<ObsMask> {
    if syndrome.len() != graph.n_detectors {
        return Err(Error::Dimension(format!(
            "syndrome has {} bits, graph has {} detectors",
            syndrome.len(),
            graph.n_detectors
        )));
    }
    let defects = defects_of(syndrome);
    if defects.is_empty() {
        return Ok(0);
    }
    if defects.len() > MAX_DEFECTS {
        return Err(Error::Capacity {
            defects: defects.len(),
            max: MAX_DEFECTS,
        });
    }
    let dist = all_pairs_defect_distances(graph, &defects)?;
    let matching = min_weight_matching(&dist)?;
    Ok(matching.pairs.iter().fold(0, |acc, &(a, b)| {
        acc ^ match b {
            Some(b) => dist.pair_mask[a * dist.n + b],
            None => dist.boundary_mask[a],
        }
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub shots: usize,
    pub accuracy: f64,
    pub error_rate: f64,
    pub mean_defects_per_shot: f64,
}

/// Decodes every shot and compares the full observable row.
pub fn evaluate(graph: &DecodingGraph, detections: &ShotTable, observables: &ShotTable) -> Result<EvalReport> {
    let indices: Vec<usize> = (0..detections.n_shots()).collect();
    evaluate_subset(graph, detections, observables, &indices)
}

pub fn evaluate_subset(
    graph: &DecodingGraph,
    detections: &ShotTable,
    observables: &ShotTable,
    shots: &[usize],
) -> Result<EvalReport> {
    if detections.n_shots() != observables.n_shots() {
        return Err(Error::Dimension(format!(
            "{} detection shots but {} observable shots",
            detections.n_shots(),
            observables.n_shots()
        )));
    }
    if observables.n_bits() > ObsMask::BITS as usize {
        return Err(Error::Dimension("too many observables for the mask".into()));
    }
    if shots.is_empty() {
        return Err(Error::Config("no shots to evaluate".into()));
    }
    let results = shots
        .par_iter()
        .map(|&s| {
            let syndrome = detections.row(s);
            let predicted = decode(graph, syndrome)?;
            let actual = obs_mask(&defects_of(observables.row(s)));
            let defects = syndrome.iter().filter(|&&b| b == 1).count();
            Ok((predicted == actual, defects))
        })
        .collect::<Result<Vec<_>>>()?;
    let correct = results.iter().filter(|r| r.0).count();
    let defects: usize = results.iter().map(|r| r.1).sum();
    let accuracy = correct as f64 / shots.len() as f64;
    Ok(EvalReport {
        shots: shots.len(),
        accuracy,
        error_rate: 1.0 - accuracy,
        mean_defects_per_shot: defects as f64 / shots.len() as f64,
    })
}
