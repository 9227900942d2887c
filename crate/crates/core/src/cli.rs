//! Command-line front end: argument types and one function per subcommand.
//!
//! Every command writes its results (and an echo of every setting that
//! produced them) to files; human-readable summaries go to stdout and
//! diagnostics to stderr.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::formats::{self, DetectorModel, ShotTable};
use crate::graph::{self, FlatGraph, SpatialLayout, TeacherProbs};
use crate::matching::{self, EvalReport};
use crate::model::{self, ModelConfig, Topology};
use crate::sampler;
use crate::training::{self, Mode, RunHistory, TrainConfig};

pub const DETECTIONS_FILE: &str = "detection_events.b8";
pub const OBSERVABLES_FILE: &str = "obs_flips_actual.01";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

#[derive(Debug, Parser)]
#[command(
    name = "gatqec",
    version,
    about = "GATv2 and MWPM decoders for detector error models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample detection events (b8) and observable flips (01) from a DEM.
    Sample(SampleArgs),
    /// Report the time-flattened layout and teacher edge probabilities of a DEM.
    Inspect(InspectArgs),
    /// Train one decoder arm and write its checkpoint and learning curve.
    Train(TrainArgs),
    /// Evaluate a trained checkpoint on a dataset.
    Eval(EvalArgs),
    /// Evaluate the matching decoder on a dataset.
    Mwpm(MwpmArgs),
    /// Train both arms with identical settings and tabulate them against matching.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub dem: PathBuf,
    /// Detection events, b8 format, one bit per detector.
    #[arg(long)]
    pub dets: PathBuf,
    /// Observable flips, 01 format; the last column is the label.
    #[arg(long)]
    pub obs: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub dem: PathBuf,
    #[arg(long = "shots", short = 'n')]
    pub shots: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub dem: PathBuf,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct HyperArgs {
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long = "seed-params", default_value_t = 42)]
    pub seed_params: u64,
    #[arg(long = "seed-shuffle", default_value_t = 0)]
    pub seed_shuffle: u64,
    #[arg(long = "seed-split", default_value_t = 0)]
    pub seed_split: u64,
    #[arg(long = "train-fraction", default_value_t = 0.8)]
    pub train_fraction: f64,
}

impl Default for HyperArgs {
    fn default() -> Self {
        HyperArgs {
            lambda: 0.5,
            lr: 1e-3,
            batch: 64,
            epochs: 50,
            seed_params: 42,
            seed_shuffle: 0,
            seed_split: 0,
            train_fraction: 0.8,
        }
    }
}

impl HyperArgs {
    pub fn train_config(&self, mode: Mode) -> TrainConfig {
        TrainConfig {
            mode,
            lambda: self.lambda,
            lr: self.lr,
            batch_size: self.batch,
            epochs: self.epochs,
            train_fraction: self.train_fraction,
            seed_shuffle: self.seed_shuffle,
            seed_split: self.seed_split,
            ..TrainConfig::default()
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            seed: self.seed_params,
            ..ModelConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = Mode::Distill)]
    pub mode: Mode,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MwpmArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// Everything loaded from a (DEM, detections, observables) triple.
pub struct Dataset {
    pub model: DetectorModel,
    pub layout: SpatialLayout,
    pub teacher: TeacherProbs,
    pub detections: ShotTable,
    pub observables: ShotTable,
    pub graphs: Vec<FlatGraph>,
}

pub fn load_dataset(data: &DataArgs) -> Result<Dataset> {
    let model = formats::read_dem_file(&data.dem)?;
    let layout = graph::extract_layout(&model)?;
    let teacher = graph::teacher_edge_probs(&model, &layout);
    let detections = formats::read_b8_file(&data.dets, model.n_detectors)?;
    let observables = formats::read_01_file(&data.obs)?;
    let graphs = graph::build_dataset(&layout, &teacher, &detections, &observables)?;
    Ok(Dataset {
        model,
        layout,
        teacher,
        detections,
        observables,
        graphs,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn data_echo(data: &DataArgs) -> serde_json::Value {
    json!({ "dem": data.dem, "dets": data.dets, "obs": data.obs })
}

pub fn cmd_sample(args: &SampleArgs) -> Result<(ShotTable, ShotTable)> {
    let model = formats::read_dem_file(&args.dem)?;
    let (dets, obs) = sampler::sample(&model, args.shots, args.seed)?;
    create_dir(&args.out)?;
    formats::write_b8_file(args.out.join(DETECTIONS_FILE), &dets)?;
    formats::write_01_file(args.out.join(OBSERVABLES_FILE), &obs)?;
    write_json(
        &args.out.join("sample.json"),
        &json!({
            "config": { "dem": args.dem, "shots": args.shots, "seed": args.seed },
            "n_detectors": model.n_detectors,
            "n_observables": model.n_observables,
        }),
    )?;
    Ok((dets, obs))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TeacherEdge {
    pub i: usize,
    pub j: usize,
    pub p: f64,
    pub mechanisms: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InspectReport {
    pub n_detectors: usize,
    pub n_observables: usize,
    pub n_mechanisms: usize,
    pub nodes: usize,
    pub rounds: usize,
    pub edges: usize,
    pub node_coords: Vec<Vec<f64>>,
    pub teacher: Vec<TeacherEdge>,
    pub unassigned_mechanisms: usize,
}

impl InspectReport {
    pub fn summary_line(&self) -> String {
        format!("|V_s|={}, T={}, edges={}", self.nodes, self.rounds, self.edges)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} detectors, {} observables, {} mechanisms",
            self.n_detectors, self.n_observables, self.n_mechanisms
        );
        let _ = writeln!(s, "{}", self.summary_line());
        for (k, c) in self.node_coords.iter().enumerate() {
            let _ = writeln!(s, "  node {k}: {c:?}");
        }
        let _ = writeln!(s, "teacher edge probabilities:");
        for e in &self.teacher {
            let _ = writeln!(s, "  ({}, {})  p = {:.6}  [{} mechanisms]", e.i, e.j, e.p, e.mechanisms);
        }
        let _ = writeln!(s, "unassigned mechanisms: {}", self.unassigned_mechanisms);
        s
    }
}

pub fn inspect_model(model: &DetectorModel) -> Result<InspectReport> {
    let layout = graph::extract_layout(model)?;
    let teacher = graph::teacher_edge_probs(model, &layout);
    Ok(InspectReport {
        n_detectors: model.n_detectors,
        n_observables: model.n_observables,
        n_mechanisms: model.mechanisms.len(),
        nodes: layout.n_nodes(),
        rounds: layout.rounds(),
        edges: layout.edges.len(),
        node_coords: layout.nodes.clone(),
        teacher: layout
            .edges
            .iter()
            .zip(teacher.probs.iter().zip(&teacher.mechanisms_per_edge))
            .map(|(&(i, j), (&p, &mechanisms))| TeacherEdge { i, j, p, mechanisms })
            .collect(),
        unassigned_mechanisms: teacher.unassigned,
    })
}

pub fn cmd_inspect(args: &InspectArgs) -> Result<InspectReport> {
    let model = formats::read_dem_file(&args.dem)?;
    let report = inspect_model(&model)?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(report)
}

fn run_report(config: serde_json::Value, history: &RunHistory) -> serde_json::Value {
    json!({
        "config": config,
        "history": history.history,
        "final": { "accuracy": history.final_accuracy, "total_seconds": history.total_seconds },
    })
}

fn train_echo(data: &DataArgs, hyper: &HyperArgs, cfg: &TrainConfig) -> serde_json::Value {
    json!({
        "data": data_echo(data),
        "mode": cfg.mode,
        "lambda": cfg.lambda,
        "lr": cfg.lr,
        "batch": cfg.batch_size,
        "epochs": cfg.epochs,
        "seed_params": hyper.seed_params,
        "seed_shuffle": cfg.seed_shuffle,
        "seed_split": cfg.seed_split,
        "train_fraction": cfg.train_fraction,
        "adam": { "beta1": cfg.beta1, "beta2": cfg.beta2, "eps": cfg.eps },
        "model": hyper.model_config(),
    })
}

pub fn cmd_train(args: &TrainArgs) -> Result<serde_json::Value> {
    let data = load_dataset(&args.data)?;
    let cfg = args.hyper.train_config(args.mode);
    let outcome = training::train(&data.layout, &data.graphs, &args.hyper.model_config(), &cfg)?;
    create_dir(&args.out)?;
    model::save_checkpoint(&outcome.params, args.out.join(CHECKPOINT_FILE))?;
    let report = run_report(train_echo(&args.data, &args.hyper, &cfg), &outcome.history);
    write_json(&args.out.join("history.json"), &report)?;
    outcome.history.save_csv(args.out.join("history.csv"))?;
    Ok(report)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<serde_json::Value> {
    let data = load_dataset(&args.data)?;
    let params = model::load_checkpoint(&args.checkpoint)?;
    if data.graphs.is_empty() {
        return Err(Error::Config("no shots to evaluate".into()));
    }
    let topo = Topology::for_graph(&params, &data.graphs[0])?;
    let all: Vec<usize> = (0..data.graphs.len()).collect();
    let acc = training::accuracy(&params, &topo, &data.graphs, &all)?;
    let report = json!({
        "config": { "data": data_echo(&args.data), "checkpoint": args.checkpoint, "model": params.config },
        "shots": all.len(),
        "accuracy": acc,
        "error_rate": 1.0 - acc,
    });
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(report)
}

pub fn cmd_mwpm(args: &MwpmArgs) -> Result<EvalReport> {
    let model = formats::read_dem_file(&args.data.dem)?;
    let graph = matching::build_decoding_graph(&model)?;
    let dets = formats::read_b8_file(&args.data.dets, model.n_detectors)?;
    let obs = formats::read_01_file(&args.data.obs)?;
    let report = matching::evaluate(&graph, &dets, &obs)?;
    if let Some(out) = &args.out {
        let mut v = serde_json::to_value(&report)?;
        v["config"] = json!({ "data": data_echo(&args.data) });
        write_json(out, &v)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonRow {
    pub model: String,
    pub accuracy: f64,
    pub total_seconds: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub baseline: RunHistory,
    pub distill: RunHistory,
    /// Matching decoder evaluated on the same test split.
    pub mwpm: EvalReport,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "| Model | Final Test Accuracy (%) | Training Time (s) |");
        let _ = writeln!(s, "|---|---:|---:|");
        for r in &self.rows[..2] {
            let _ = writeln!(
                s,
                "| {} | {:.2} | {:.2} |",
                r.model,
                100.0 * r.accuracy,
                r.total_seconds.unwrap_or(0.0)
            );
        }
        let _ = writeln!(
            s,
            "| {} | {:.2}% (Error Rate {:.4}) | |",
            self.rows[2].model,
            100.0 * self.mwpm.accuracy,
            self.mwpm.error_rate
        );
        s
    }
}

/// Trains both arms with identical settings and evaluates matching on their test split.
pub fn compare(data: &Dataset, hyper: &HyperArgs) -> Result<Comparison> {
    let model_cfg = hyper.model_config();
    let base_cfg = hyper.train_config(Mode::Baseline);
    let dist_cfg = hyper.train_config(Mode::Distill);
    let baseline = training::train(&data.layout, &data.graphs, &model_cfg, &base_cfg)?;
    let distill = training::train(&data.layout, &data.graphs, &model_cfg, &dist_cfg)?;
    let graph = matching::build_decoding_graph(&data.model)?;
    let mwpm = matching::evaluate_subset(&graph, &data.detections, &data.observables, &baseline.split.test)?;
    let rows = vec![
        ComparisonRow {
            model: "Baseline (L_data only)".into(),
            accuracy: baseline.history.final_accuracy,
            total_seconds: Some(baseline.history.total_seconds),
        },
        ComparisonRow {
            model: format!("Distillation (L_data + {} * L_distill)", hyper.lambda),
            accuracy: distill.history.final_accuracy,
            total_seconds: Some(distill.history.total_seconds),
        },
        ComparisonRow {
            model: "Reference: MWPM".into(),
            accuracy: mwpm.accuracy,
            total_seconds: None,
        },
    ];
    Ok(Comparison {
        baseline: baseline.history,
        distill: distill.history,
        mwpm,
        rows,
    })
}

pub fn cmd_compare(args: &CompareArgs) -> Result<Comparison> {
    let data = load_dataset(&args.data)?;
    let cmp = compare(&data, &args.hyper)?;
    create_dir(&args.out)?;
    let echo = train_echo(&args.data, &args.hyper, &args.hyper.train_config(Mode::Distill));
    write_json(
        &args.out.join("compare.json"),
        &json!({
            "config": echo,
            "baseline": run_report(json!({"mode": Mode::Baseline}), &cmp.baseline),
            "distill": run_report(json!({"mode": Mode::Distill}), &cmp.distill),
            "mwpm": cmp.mwpm,
            "table": cmp.rows,
        }),
    )?;
    cmp.baseline.save_csv(args.out.join("baseline_history.csv"))?;
    cmp.distill.save_csv(args.out.join("distill_history.csv"))?;
    let table = cmp.render_table();
    std::fs::write(args.out.join("table.md"), &table).map_err(|e| Error::io(args.out.join("table.md"), e))?;
    Ok(cmp)
}

/// Runs one parsed command, printing summaries to stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample(a) => {
            let (d, _) = cmd_sample(&a)?;
            println!("wrote {} shots to {}", d.n_shots(), a.out.display());
        }
        Command::Inspect(a) => print!("{}", cmd_inspect(&a)?.render()),
        Command::Train(a) => {
            let r = cmd_train(&a)?;
            println!(
                "{} arm: final accuracy {:.4}, {:.2}s; outputs in {}",
                a.mode,
                r["final"]["accuracy"].as_f64().unwrap_or(f64::NAN),
                r["final"]["total_seconds"].as_f64().unwrap_or(f64::NAN),
                a.out.display()
            );
        }
        Command::Eval(a) => {
            let r = cmd_eval(&a)?;
            println!(
                "accuracy {:.4} over {} shots",
                r["accuracy"].as_f64().unwrap_or(f64::NAN),
                r["shots"]
            );
        }
        Command::Mwpm(a) => {
            let r = cmd_mwpm(&a)?;
            println!(
                "accuracy {:.4} (error rate {:.4}) over {} shots, {:.3} defects/shot",
                r.accuracy, r.error_rate, r.shots, r.mean_defects_per_shot
            );
        }
        Command::Compare(a) => print!("{}", cmd_compare(&a)?.render_table()),
    }
    Ok(())
}
