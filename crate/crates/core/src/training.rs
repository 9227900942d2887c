//! Objectives, the Adam optimizer and the epoch loop for both experimental arms.
//!
//! The data term is positive-weighted binary cross-entropy on the graph logit.
//! The distillation term is the mean squared error between the sigmoid of the
//! edge logits and the teacher's per-edge probabilities. Baseline runs use the
//! data term alone; distillation runs add `lambda` times the distillation term.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FlatGraph, SpatialLayout};
use crate::model::{self, ModelConfig, ModelParams, Outputs, Topology};
use crate::tensor::{Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Distill,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Distill => "distill",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub lambda: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of shots used for training; the rest is the test split.
    pub train_fraction: f64,
    pub seed_shuffle: u64,
    pub seed_split: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Distill,
            lambda: 0.5,
            lr: 1e-3,
            batch_size: 64,
            epochs: 50,
            train_fraction: 0.8,
            seed_shuffle: 0,
            seed_split: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(Error::Config(format!("lambda {} must be >= 0", self.lambda)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction {} must lie in (0, 1)",
                self.train_fraction
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.eps > 0.0) {
            return Err(Error::Config("learning rate and epsilon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// `N_neg / N_pos` over `labels`.
pub fn compute_pos_weight(labels: &[u8]) -> Result<f64> {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 {
        return Err(Error::Config(
            "no positive labels: positive-class weight is undefined".into(),
        ));
    }
    let neg = labels.len() - pos;
    Ok(neg as f64 / pos as f64)
}

/// `-[w_p y log s(x) + (1 - y) log(1 - s(x))]`, as `w_p y softplus(-x) + (1 - y) softplus(x)`.
pub fn weighted_bce_with_logits(tape: &mut Tape, logit: Tensor, y: u8, pos_weight: f64) -> Result<Tensor> {
    if tape.shape(logit).len() != 1 {
        return Err(Error::Dimension(format!(
            "graph logit must be scalar, got {:?}",
            tape.shape(logit)
        )));
    }
    Ok(if y == 1 {
        let neg = tape.scale(logit, -1.0);
        let sp = tape.softplus(neg);
        tape.scale(sp, pos_weight)
    } else {
        tape.softplus(logit)
    })
}

/// Mean over edges of `(sigmoid(logit_e) - p_e)^2`.
pub fn distill_mse(tape: &mut Tape, edge_logits: Tensor, teacher: &[f64]) -> Result<Tensor> {
    let n = tape.shape(edge_logits).len();
    if n != teacher.len() {
        return Err(Error::Dimension(format!(
            "{n} edge logits for {} teacher probabilities",
            teacher.len()
        )));
    }
    let probs = tape.sigmoid(edge_logits);
    let shape = tape.shape(edge_logits);
    let target = tape.constant(shape.rows, shape.cols, teacher.to_vec())?;
    let diff = tape.sub(probs, target)?;
    let sq = tape.mul(diff, diff)?;
    tape.mean(sq)
}

#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Tensor,
    pub data: Tensor,
    /// Present in distillation mode only.
    pub distill: Option<Tensor>,
}

/// The training objective for one graph.
pub fn total_loss(
    tape: &mut Tape,
    outputs: &Outputs,
    label: u8,
    pos_weight: f64,
    teacher: &[f64],
    config: &TrainConfig,
) -> Result<LossTerms> {
    let data = weighted_bce_with_logits(tape, outputs.graph_logit, label, pos_weight)?;
    match config.mode {
        Mode::Baseline => Ok(LossTerms {
            total: data,
            data,
            distill: None,
        }),
        Mode::Distill => {
            let distill = distill_mse(tape, outputs.edge_logits, teacher)?;
            let weighted = tape.scale(distill, config.lambda);
            let total = tape.add(data, weighted)?;
            Ok(LossTerms {
                total,
                data,
                distill: Some(distill),
            })
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn from_config(n_params: usize, cfg: &TrainConfig) -> Self {
        Adam::new(n_params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    }

    /// Steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient length mismatch");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powf(self.t as f64);
        let c2 = 1.0 - self.beta2.powf(self.t as f64);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_acc: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub history: Vec<EpochRecord>,
    pub final_accuracy: f64,
    /// Training wall time summed over epochs (evaluation excluded).
    pub total_seconds: f64,
}

impl RunHistory {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for rec in &self.history {
            wtr.serialize(rec)?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }
}

/// Deterministic train/test partition of shot indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<Split> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (n as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::Config(format!(
            "{n} shots split at {train_fraction} leaves an empty train or test set"
        )));
    }
    let test = idx.split_off(n_train);
    Ok(Split { train: idx, test })
}

/// Fraction of `graphs[indices]` whose graph logit has the label's sign (threshold 0).
pub fn accuracy(params: &ModelParams, topo: &Topology, graphs: &[FlatGraph], indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Config("accuracy over an empty set".into()));
    }
    let correct = indices
        .par_iter()
        .map(|&i| {
            let g = &graphs[i];
            let (logit, _) = model::predict(params, topo, g)?;
            Ok(usize::from(u8::from(logit > 0.0) == g.label))
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / indices.len() as f64)
}

/// Loss and gradient of one graph; the gradient is added into `grad`.
pub fn graph_step(
    params: &ModelParams,
    topo: &Topology,
    graph: &FlatGraph,
    pos_weight: f64,
    config: &TrainConfig,
    grad: &mut [f64],
) -> Result<f64> {
    let mut tape = Tape::new();
    let (out, bound) = model::forward(&mut tape, params, topo, graph)?;
    let loss = total_loss(&mut tape, &out, graph.label, pos_weight, &graph.teacher_probs, config)?;
    tape.backward(loss.total)?;
    bound.accumulate_gradient(&tape, grad);
    Ok(tape.scalar(loss.total))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: RunHistory,
    pub params: ModelParams,
    pub split: Split,
    pub pos_weight: f64,
}

fn check_dataset(dataset: &[FlatGraph]) -> Result<()> {
    let first = dataset.first().ok_or_else(|| Error::Config("empty dataset".into()))?;
    if let Some(g) = dataset
        .iter()
        .find(|g| g.n_nodes() != first.n_nodes() || g.rounds() != first.rounds() || g.edges != first.edges)
    {
        return Err(Error::Dimension(format!(
            "graphs disagree on shape: {}x{} vs {}x{}",
            g.n_nodes(),
            g.rounds(),
            first.n_nodes(),
            first.rounds()
        )));
    }
    Ok(())
}

/// Initializes parameters for `layout` and trains them.
pub fn train(
    layout: &SpatialLayout,
    dataset: &[FlatGraph],
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let params = model::init_params(model_config, layout)?;
    train_from(params, dataset, config)
}

/// Trains `params` in place of a fresh initialization.
pub fn train_from(mut params: ModelParams, dataset: &[FlatGraph], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    check_dataset(dataset)?;
    let split = split_indices(dataset.len(), config.train_fraction, config.seed_split)?;
    let train_labels: Vec<u8> = split.train.iter().map(|&i| dataset[i].label).collect();
    let pos_weight = compute_pos_weight(&train_labels)?;
    let topo = Topology::for_graph(&params, &dataset[0])?;

    let mut flat = params.flatten();
    let mut adam = Adam::from_config(flat.len(), config);
    let mut grad = vec![0.0; flat.len()];
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed_shuffle);
    let mut order = split.train.clone();
    let mut history = Vec::with_capacity(config.epochs);

    info!(
        "training {} arm: {} train / {} test shots, pos_weight {:.4}",
        config.mode,
        split.train.len(),
        split.test.len(),
        pos_weight
    );
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                loss_sum += graph_step(&params, &topo, &dataset[i], pos_weight, config, &mut grad)?;
            }
            let inv = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            adam.step(&mut flat, &grad);
            params.unflatten(&flat)?;
        }
        let seconds = start.elapsed().as_secs_f64();
        let test_acc = accuracy(&params, &topo, dataset, &split.test)?;
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            test_acc,
            seconds,
        };
        info!(
            "[{}] epoch {:>3}  loss {:.5}  test acc {:.4}  {:.2}s",
            config.mode, rec.epoch, rec.train_loss, rec.test_acc, rec.seconds
        );
        history.push(rec);
    }
    let final_accuracy = match history.last() {
        Some(r) => r.test_acc,
        None => accuracy(&params, &topo, dataset, &split.test)?,
    };
    let total_seconds = history.iter().map(|r| r.seconds).sum();
    Ok(TrainOutcome {
        history: RunHistory {
            history,
            final_accuracy,
            total_seconds,
        },
        params,
        split,
        pos_weight,
    })
}
