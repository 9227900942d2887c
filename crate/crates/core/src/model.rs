//! The dual-head GATv2 decoder.
//!
//! ```text
//! x (n x T) -> GATv2 -> LayerNorm -> ReLU -> GATv2 -> LayerNorm -> ReLU = H (n x heads*d)
//!   graph head: mean_rows(H) -> Linear -> ReLU -> Linear       -> graph logit
//!   edge head:  [H_i | H_j] per edge i<j -> Linear -> ReLU -> Linear -> edge logits
//! ```
//!
//! Attention runs over the complete graph in both directions plus one self
//! loop per node. For a directed edge `j -> i` and each head,
//! `e_ij = a . LeakyReLU(W_left h_i + W_right h_j) + s_ij`, where `s_ij` is a
//! fixed per-edge offset (`static_edge_weights`, zero on self loops) drawn
//! once from the seed and never trained. The layer output is
//! `h'_i = sum_j softmax_j(e_ij) W_right h_j + bias`, heads concatenated.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FlatGraph, SpatialLayout};
use crate::tensor::{Tape, Tensor};

/// Magnitude bound of the untrained per-edge attention offsets.
pub const STATIC_EDGE_WEIGHT_BOUND: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub heads: usize,
    pub head_dim: usize,
    pub mlp_hidden: usize,
    pub leaky_slope: f64,
    pub layer_norm_eps: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            heads: 4,
            head_dim: 8,
            mlp_hidden: 16,
            leaky_slope: 0.2,
            layer_norm_eps: 1e-5,
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn hidden(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.head_dim == 0 || self.mlp_hidden == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(self.leaky_slope > 0.0 && self.layer_norm_eps > 0.0) {
            return Err(Error::Config(
                "leaky slope and layer-norm epsilon must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A dense row-major matrix of weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    /// Uniform in `[-s, s]` with `s = sqrt(6 / (fan_in + fan_out))`.
    fn xavier(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let s = xavier_bound(fan_in, fan_out);
        let dist = Uniform::new_inclusive(-s, s);
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| dist.sample(rng)).collect(),
        }
    }
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatParams {
    pub w_left: Matrix,
    pub w_right: Matrix,
    /// `1 x heads*d`: head `h` owns columns `h*d..(h+1)*d`.
    pub att: Matrix,
    pub bias: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormParams {
    pub gain: Matrix,
    pub bias: Matrix,
}

/// Linear -> ReLU -> Linear.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// Feature width of the input nodes (the number of rounds).
    pub input_dim: usize,
    pub gat1: GatParams,
    pub norm1: NormParams,
    pub gat2: GatParams,
    pub norm2: NormParams,
    pub graph_head: MlpParams,
    pub edge_head: MlpParams,
    /// One untrained attention offset per undirected edge.
    pub static_edge_weights: Vec<f64>,
}

const TENSOR_NAMES: [&str; 20] = [
    "gat1.w_left",
    "gat1.w_right",
    "gat1.att",
    "gat1.bias",
    "norm1.gain",
    "norm1.bias",
    "gat2.w_left",
    "gat2.w_right",
    "gat2.att",
    "gat2.bias",
    "norm2.gain",
    "norm2.bias",
    "graph_head.w1",
    "graph_head.b1",
    "graph_head.w2",
    "graph_head.b2",
    "edge_head.w1",
    "edge_head.b1",
    "edge_head.w2",
    "edge_head.b2",
];

/// Index of the first edge-head tensor in [`ModelParams::matrices`].
const EDGE_HEAD_FIRST: usize = 16;

fn init_gat(d_in: usize, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> GatParams {
    let hidden = cfg.hidden();
    GatParams {
        w_left: Matrix::xavier(d_in, hidden, d_in, hidden, rng),
        w_right: Matrix::xavier(d_in, hidden, d_in, hidden, rng),
        att: Matrix::xavier(1, hidden, cfg.head_dim, 1, rng),
        bias: Matrix::zeros(1, hidden),
    }
}

fn init_mlp(d_in: usize, d_hidden: usize, rng: &mut ChaCha8Rng) -> MlpParams {
    MlpParams {
        w1: Matrix::xavier(d_in, d_hidden, d_in, d_hidden, rng),
        b1: Matrix::zeros(1, d_hidden),
        w2: Matrix::xavier(d_hidden, 1, d_hidden, 1, rng),
        b2: Matrix::zeros(1, 1),
    }
}

fn init_norm(d: usize) -> NormParams {
    NormParams {
        gain: Matrix::filled(1, d, 1.0),
        bias: Matrix::zeros(1, d),
    }
}

/// Draws fresh parameters for `layout`. Identical seeds give bitwise-identical parameters.
pub fn init_params(config: &ModelConfig, layout: &SpatialLayout) -> Result<ModelParams> {
    init_params_for(config, layout.rounds(), layout.edges.len())
}

pub fn init_params_for(config: &ModelConfig, input_dim: usize, n_edges: usize) -> Result<ModelParams> {
    config.validate()?;
    if input_dim == 0 {
        return Err(Error::Config("input dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let hidden = config.hidden();
    let gat1 = init_gat(input_dim, config, &mut rng);
    let gat2 = init_gat(hidden, config, &mut rng);
    let graph_head = init_mlp(hidden, config.mlp_hidden, &mut rng);
    let edge_head = init_mlp(2 * hidden, config.mlp_hidden, &mut rng);
    let dist = Uniform::new_inclusive(-STATIC_EDGE_WEIGHT_BOUND, STATIC_EDGE_WEIGHT_BOUND);
    let static_edge_weights = (0..n_edges).map(|_| dist.sample(&mut rng)).collect();
    Ok(ModelParams {
        config: config.clone(),
        input_dim,
        gat1,
        norm1: init_norm(hidden),
        gat2,
        norm2: init_norm(hidden),
        graph_head,
        edge_head,
        static_edge_weights,
    })
}

impl ModelParams {
    /// Trainable tensors in their fixed flattening order.
    pub fn matrices(&self) -> [&Matrix; 20] {
        [
            &self.gat1.w_left,
            &self.gat1.w_right,
            &self.gat1.att,
            &self.gat1.bias,
            &self.norm1.gain,
            &self.norm1.bias,
            &self.gat2.w_left,
            &self.gat2.w_right,
            &self.gat2.att,
            &self.gat2.bias,
            &self.norm2.gain,
            &self.norm2.bias,
            &self.graph_head.w1,
            &self.graph_head.b1,
            &self.graph_head.w2,
            &self.graph_head.b2,
            &self.edge_head.w1,
            &self.edge_head.b1,
            &self.edge_head.w2,
            &self.edge_head.b2,
        ]
    }

    pub fn matrices_mut(&mut self) -> [&mut Matrix; 20] {
        [
            &mut self.gat1.w_left,
            &mut self.gat1.w_right,
            &mut self.gat1.att,
            &mut self.gat1.bias,
            &mut self.norm1.gain,
            &mut self.norm1.bias,
            &mut self.gat2.w_left,
            &mut self.gat2.w_right,
            &mut self.gat2.att,
            &mut self.gat2.bias,
            &mut self.norm2.gain,
            &mut self.norm2.bias,
            &mut self.graph_head.w1,
            &mut self.graph_head.b1,
            &mut self.graph_head.w2,
            &mut self.graph_head.b2,
            &mut self.edge_head.w1,
            &mut self.edge_head.b1,
            &mut self.edge_head.w2,
            &mut self.edge_head.b2,
        ]
    }

    pub fn n_trainable(&self) -> usize {
        self.matrices().iter().map(|m| m.data.len()).sum()
    }

    /// Range of the edge-head weights inside [`Self::flatten`].
    pub fn edge_head_range(&self) -> std::ops::Range<usize> {
        let start = self.matrices()[..EDGE_HEAD_FIRST].iter().map(|m| m.data.len()).sum();
        start..self.n_trainable()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_trainable());
        for m in self.matrices() {
            out.extend_from_slice(&m.data);
        }
        out
    }

    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_trainable() {
            return Err(Error::Dimension(format!(
                "{} values for {} trainable parameters",
                flat.len(),
                self.n_trainable()
            )));
        }
        let mut offset = 0;
        for m in self.matrices_mut() {
            let n = m.data.len();
            m.data.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Places every trainable tensor on `tape`, as parameters when
    /// `trainable`, otherwise as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundParams {
        let mut handles = Vec::with_capacity(20);
        for m in self.matrices() {
            let t = if trainable {
                tape.param(m.rows, m.cols, m.data.clone())
            } else {
                tape.constant(m.rows, m.cols, m.data.clone())
            };
            handles.push(t.expect("matrix shapes are consistent"));
        }
        let h: [Tensor; 20] = handles.try_into().expect("20 tensors");
        BoundParams { handles: h }
    }
}

/// Tape handles for every trainable tensor, in flattening order.
#[derive(Clone, Copy, Debug)]
pub struct BoundParams {
    handles: [Tensor; 20],
}

struct BoundGat {
    w_left: Tensor,
    w_right: Tensor,
    att: Tensor,
    bias: Tensor,
}

struct BoundMlp {
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
}

impl BoundParams {
    fn gat(&self, first: usize) -> BoundGat {
        let h = &self.handles[first..first + 4];
        BoundGat {
            w_left: h[0],
            w_right: h[1],
            att: h[2],
            bias: h[3],
        }
    }

    fn mlp(&self, first: usize) -> BoundMlp {
        let h = &self.handles[first..first + 4];
        BoundMlp {
            w1: h[0],
            b1: h[1],
            w2: h[2],
            b2: h[3],
        }
    }

    /// The gradient in flattening order; tensors the loss never reached get zeros.
    pub fn gradient(&self, tape: &Tape) -> Vec<f64> {
        let mut out = Vec::new();
        for &t in &self.handles {
            match tape.grad(t) {
                Some(g) => out.extend_from_slice(g),
                None => out.extend(std::iter::repeat_n(0.0, tape.shape(t).len())),
            }
        }
        out
    }

    /// Adds this tape's gradient into `acc`.
    pub fn accumulate_gradient(&self, tape: &Tape, acc: &mut [f64]) {
        let mut offset = 0;
        for &t in &self.handles {
            let n = tape.shape(t).len();
            if let Some(g) = tape.grad(t) {
                for (a, x) in acc[offset..offset + n].iter_mut().zip(g) {
                    *a += x;
                }
            }
            offset += n;
        }
    }
}

/// Directed attention structure for one graph shape.
#[derive(Clone, Debug)]
pub struct Topology {
    n_nodes: usize,
    /// Directed edges `src -> dst`, grouped by destination, self loops included.
    src: Arc<[usize]>,
    dst: Arc<[usize]>,
    /// `|directed edges| x heads` fixed score offsets.
    static_scores: Vec<f64>,
    edge_i: Arc<[usize]>,
    edge_j: Arc<[usize]>,
}

impl Topology {
    pub fn new(n_nodes: usize, edges: &[(usize, usize)], static_edge_weights: &[f64], heads: usize) -> Result<Self> {
        if static_edge_weights.len() != edges.len() {
            return Err(Error::Dimension(format!(
                "{} static edge weights for {} edges",
                static_edge_weights.len(),
                edges.len()
            )));
        }
        let mut weight = vec![0.0; n_nodes * n_nodes];
        let mut adjacent = vec![false; n_nodes * n_nodes];
        for (&(i, j), &w) in edges.iter().zip(static_edge_weights) {
            if i >= n_nodes || j >= n_nodes || i == j {
                return Err(Error::Dimension(format!("edge ({i}, {j}) invalid for {n_nodes} nodes")));
            }
            for (a, b) in [(i, j), (j, i)] {
                weight[a * n_nodes + b] = w;
                adjacent[a * n_nodes + b] = true;
            }
        }
        let (mut src, mut dst, mut static_scores) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..n_nodes {
            for j in 0..n_nodes {
                if i == j || adjacent[i * n_nodes + j] {
                    src.push(j);
                    dst.push(i);
                    static_scores.extend(std::iter::repeat_n(weight[i * n_nodes + j], heads));
                }
            }
        }
        Ok(Topology {
            n_nodes,
            src: src.into(),
            dst: dst.into(),
            static_scores,
            edge_i: edges.iter().map(|e| e.0).collect(),
            edge_j: edges.iter().map(|e| e.1).collect(),
        })
    }

    pub fn for_graph(params: &ModelParams, graph: &FlatGraph) -> Result<Self> {
        Topology::new(
            graph.n_nodes(),
            &graph.edges,
            &params.static_edge_weights,
            params.config.heads,
        )
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_directed(&self) -> usize {
        self.src.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edge_i.len()
    }

    /// `(src, dst)` of each directed attention edge.
    pub fn directed_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.src.iter().copied().zip(self.dst.iter().copied())
    }
}

/// Output of the last [`gatv2_layer`] call's attention, for inspection.
pub struct LayerOutput {
    pub out: Tensor,
    /// `|directed edges| x heads` attention coefficients.
    pub attention: Tensor,
}

/// One GATv2 layer over `topo`'s directed edges.
fn gatv2_layer(
    tape: &mut Tape,
    h: Tensor,
    layer: &BoundGat,
    topo: &Topology,
    config: &ModelConfig,
) -> Result<LayerOutput> {
    if tape.shape(h).rows != topo.n_nodes {
        return Err(Error::Dimension(format!(
            "{} feature rows for {} nodes",
            tape.shape(h).rows,
            topo.n_nodes
        )));
    }
    let target = tape.matmul(h, layer.w_left)?;
    let source = tape.matmul(h, layer.w_right)?;
    let target_e = tape.gather_rows(target, topo.dst.clone())?;
    let source_e = tape.gather_rows(source, topo.src.clone())?;
    let z = tape.add(target_e, source_e)?;
    let z = tape.leaky_relu(z, config.leaky_slope);
    let z = tape.mul(z, layer.att)?;
    let scores = tape.block_sum(z, config.heads)?;
    let offsets = tape.constant(topo.n_directed(), config.heads, topo.static_scores.clone())?;
    let scores = tape.add(scores, offsets)?;
    let attention = tape.segment_softmax(scores, topo.dst.clone())?;
    let agg = tape.segment_weighted_sum(source_e, attention, topo.dst.clone(), topo.n_nodes)?;
    let out = tape.add(agg, layer.bias)?;
    Ok(LayerOutput { out, attention })
}

fn mlp(tape: &mut Tape, x: Tensor, p: &BoundMlp) -> Result<Tensor> {
    let h = tape.matmul(x, p.w1)?;
    let h = tape.add(h, p.b1)?;
    let h = tape.relu(h);
    let o = tape.matmul(h, p.w2)?;
    tape.add(o, p.b2)
}

#[derive(Clone, Copy, Debug)]
pub struct Outputs {
    /// `1 x 1`
    pub graph_logit: Tensor,
    /// `|edges| x 1`, one logit per undirected edge in layout order.
    pub edge_logits: Tensor,
    /// Final node embeddings, `n x heads*d`.
    pub node_embeddings: Tensor,
    /// Attention of both layers, `|directed edges| x heads`.
    pub attention: [Tensor; 2],
}

/// Runs the decoder on a `n x T` feature tensor.
pub fn forward_features(
    tape: &mut Tape,
    bound: &BoundParams,
    topo: &Topology,
    features: Tensor,
    config: &ModelConfig,
) -> Result<Outputs> {
    let mut h = features;
    let mut attention = [features; 2];
    for (layer, (gat_at, norm_at)) in [(0, 4), (6, 10)].into_iter().enumerate() {
        let gat = bound.gat(gat_at);
        let l = gatv2_layer(tape, h, &gat, topo, config)?;
        attention[layer] = l.attention;
        let (gain, bias) = (bound.handles[norm_at], bound.handles[norm_at + 1]);
        let n = tape.layer_norm(l.out, gain, bias, config.layer_norm_eps)?;
        h = tape.relu(n);
    }
    let pooled = tape.mean_rows(h)?;
    let graph_logit = mlp(tape, pooled, &bound.mlp(12))?;

    let hi = tape.gather_rows(h, topo.edge_i.clone())?;
    let hj = tape.gather_rows(h, topo.edge_j.clone())?;
    let pair = tape.concat_rows(hi, hj)?;
    let edge_logits = mlp(tape, pair, &bound.mlp(EDGE_HEAD_FIRST))?;
    Ok(Outputs {
        graph_logit,
        edge_logits,
        node_embeddings: h,
        attention,
    })
}

/// Binds `params` (trainable) and runs the decoder on `graph`.
pub fn forward(
    tape: &mut Tape,
    params: &ModelParams,
    topo: &Topology,
    graph: &FlatGraph,
) -> Result<(Outputs, BoundParams)> {
    if graph.rounds() != params.input_dim {
        return Err(Error::Dimension(format!(
            "graph has {} rounds, model expects {}",
            graph.rounds(),
            params.input_dim
        )));
    }
    let bound = params.bind(tape, true);
    let x = tape.constant(graph.n_nodes(), graph.rounds(), graph.feature_matrix())?;
    let out = forward_features(tape, &bound, topo, x, &params.config)?;
    Ok((out, bound))
}

/// Graph and edge logits without gradient bookkeeping.
pub fn predict(params: &ModelParams, topo: &Topology, graph: &FlatGraph) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let x = tape.constant(graph.n_nodes(), graph.rounds(), graph.feature_matrix())?;
    let out = forward_features(&mut tape, &bound, topo, x, &params.config)?;
    Ok((tape.scalar(out.graph_logit), tape.value(out.edge_logits).to_vec()))
}

const CHECKPOINT_FORMAT: &str = "gatqec-checkpoint";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
    config: ModelConfig,
    input_dim: usize,
    tensors: Vec<TensorEntry>,
    n_trainable: usize,
    n_static: usize,
}

/// Writes a checkpoint: one JSON header line, then every trainable value
/// followed by the static edge weights as little-endian `f64`.
pub fn write_checkpoint<W: Write>(params: &ModelParams, mut w: W) -> Result<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        version: 1,
        config: params.config.clone(),
        input_dim: params.input_dim,
        tensors: TENSOR_NAMES
            .iter()
            .zip(params.matrices())
            .map(|(name, m)| TensorEntry {
                name: name.to_string(),
                rows: m.rows,
                cols: m.cols,
            })
            .collect(),
        n_trainable: params.n_trainable(),
        n_static: params.static_edge_weights.len(),
    };
    let io = |e| Error::Checkpoint(format!("write failed: {e}"));
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n").map_err(io)?;
    for v in params.flatten().iter().chain(&params.static_edge_weights) {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<ModelParams> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)
        .map_err(|e| Error::Checkpoint(format!("read failed: {e}")))?;
    let header: CheckpointHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT || header.version != 1 {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint {} v{}",
            header.format, header.version
        )));
    }
    let mut params = init_params_for(&header.config, header.input_dim, header.n_static)?;
    let shapes_match = header.tensors.len() == 20
        && header
            .tensors
            .iter()
            .zip(params.matrices())
            .zip(TENSOR_NAMES)
            .all(|((t, m), name)| t.name == name && t.rows == m.rows && t.cols == m.cols);
    if !shapes_match || header.n_trainable != params.n_trainable() {
        return Err(Error::Checkpoint(
            "tensor shapes do not match the stored configuration".into(),
        ));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Checkpoint(format!("read failed: {e}")))?;
    let expected = (header.n_trainable + header.n_static) * 8;
    if bytes.len() != expected {
        return Err(Error::Checkpoint(format!(
            "payload has {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    params.unflatten(&values[..header.n_trainable])?;
    params.static_edge_weights = values[header.n_trainable..].to_vec();
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(params, std::io::BufWriter::new(f))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(f)
}
