//! Command-line front end: run configuration, the five verbs and the files
//! they exchange.
//!
//! Every verb resolves a [`RunConfig`] (defaults, then an optional JSON
//! file, then flags) and echoes it to `config.json` in its output
//! directory.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bitops::{report, GraphDims};
use crate::error::{Error, Result};
use crate::graph::{
    generate_graph_collection, generate_synthetic, load_dataset, save_dataset, GraphDataset,
    LoadOptions, SyntheticSpec,
};
use crate::model::model_forward;
use crate::model::{Mode, Model, ModelConfig, PreparedGraph, Scheme};
use crate::relaxed::{validate_bit_choices, BitWidthAssignment};
use crate::train::{
    accuracy, per_class_accuracy, search, train, AlphaGrad, EpochLog, SearchConfig, TrainConfig,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Directory in the on-disk dataset layout.
    Path(PathBuf),
    Synthetic(SyntheticSpec),
    /// Many small labelled graphs for graph classification.
    GraphCollection {
        num_graphs: usize,
        features: usize,
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    Gcn,
    Sage,
    /// GIN layers, max pooling and a linear head.
    Gin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub kind: ArchKind,
    pub hidden: usize,
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    pub arch: ArchConfig,
    pub bits: Vec<u32>,
    pub lambda: f64,
    pub warmup_epochs: usize,
    pub search_epochs: usize,
    pub retrain_epochs: usize,
    pub lr: f64,
    pub alpha_lr: Option<f64>,
    pub seed: u64,
    pub symmetrize: bool,
    pub sage_sample: Option<usize>,
    pub alpha_grad: AlphaGrad,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataSource::Synthetic(SyntheticSpec::sbm(100, 0)),
            arch: ArchConfig {
                kind: ArchKind::Gcn,
                hidden: 16,
                depth: 2,
            },
            bits: vec![2, 4, 8],
            lambda: 0.1,
            warmup_epochs: 20,
            search_epochs: 100,
            retrain_epochs: 50,
            lr: 0.01,
            alpha_lr: Some(0.05),
            seed: 0,
            symmetrize: true,
            sage_sample: None,
            alpha_grad: AlphaGrad::Joint,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        validate_bit_choices(&self.bits)?;
        if !self.lambda.is_finite() {
            return Err(Error::config("lambda must be finite"));
        }
        let positive = |v: f64| v > 0.0;
        if !positive(self.lr) || self.alpha_lr.is_some_and(|a| !positive(a)) {
            return Err(Error::config("learning rates must be positive"));
        }
        if self.arch.hidden == 0 || self.arch.depth == 0 {
            return Err(Error::config("hidden width and depth must be positive"));
        }
        if self.sage_sample == Some(0) {
            return Err(Error::config("sage_sample must be positive"));
        }
        Ok(())
    }

    pub fn train_config(&self, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            lr: self.lr,
            seed: self.seed,
            warmup_epochs: self.warmup_epochs,
            sage_sample: self.sage_sample,
        }
    }

    pub fn search_config(&self) -> SearchConfig {
        let mut sc = SearchConfig::new(
            self.bits.clone(),
            self.lambda,
            self.train_config(self.search_epochs),
        );
        sc.alpha_lr = self.alpha_lr;
        sc.alpha_grad = self.alpha_grad;
        sc
    }

    pub fn dataset(&self) -> Result<GraphDataset> {
        match &self.data {
            DataSource::Path(p) => load_dataset(
                p,
                LoadOptions {
                    symmetrize: self.symmetrize,
                },
            ),
            DataSource::Synthetic(spec) => generate_synthetic(spec),
            DataSource::GraphCollection {
                num_graphs,
                features,
                seed,
            } => generate_graph_collection(*num_graphs, *features, *seed),
        }
    }

    pub fn graph(&self) -> Result<PreparedGraph> {
        PreparedGraph::new(&self.dataset()?)
    }

    pub fn model_config(&self, graph: &PreparedGraph) -> ModelConfig {
        let (f, c, a) = (graph.features.cols(), graph.num_classes, &self.arch);
        match a.kind {
            ArchKind::Gcn => ModelConfig::gcn(f, a.hidden, c, a.depth),
            ArchKind::Sage => ModelConfig::sage(f, a.hidden, c, a.depth),
            ArchKind::Gin => ModelConfig::gin_graph(f, a.hidden, c, a.depth),
        }
    }

    fn echo(&self, dir: &Path) -> Result<()> {
        write(
            &dir.join("config.json"),
            &serde_json::to_string_pretty(self)?,
        )
    }
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,task_loss,penalty,expected_bits,val_accuracy\n");
    for e in log {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.epoch, e.task_loss, e.penalty, e.expected_bits, e.val_accuracy
        ));
    }
    out
}

/// Test-split evaluation written to `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub per_class: Vec<Option<f64>>,
    pub avg_bits: f64,
    pub gbitops: f64,
    pub mode: Mode,
    pub seed: u64,
    pub lambda: Option<f64>,
}

pub fn evaluate_metrics(
    model: &Model,
    graph: &PreparedGraph,
    mode: Mode,
    seed: u64,
    lambda: Option<f64>,
) -> Result<Metrics> {
    let logits = model_forward(model, graph, mode)?;
    let cost = report(model, &GraphDims::of(graph))?;
    Ok(Metrics {
        accuracy: accuracy(&logits, &graph.labels, &graph.test_mask),
        per_class: per_class_accuracy(&logits, &graph.labels, &graph.test_mask, graph.num_classes),
        avg_bits: cost.average_bits,
        gbitops: cost.gbitops(),
        mode,
        seed,
        lambda,
    })
}

pub fn cmd_gen_data(spec: &SyntheticSpec, out: &Path) -> Result<()> {
    save_dataset(&generate_synthetic(spec)?, out)
}

/// Runs the search and writes `assignment.json`, `search_log.csv` and the
/// relaxed model as `relaxed.json`.
pub fn cmd_search(cfg: &RunConfig, out: &Path) -> Result<BitWidthAssignment> {
    cfg.validate()?;
    let graph = cfg.graph()?;
    cfg.echo(out)?;
    let found = search(&graph, &cfg.model_config(&graph), &cfg.search_config())?;
    write(&out.join("assignment.json"), &found.assignment.to_json()?)?;
    write(&out.join("search_log.csv"), &log_csv(&found.log))?;
    found.model.save(out.join("relaxed.json"))?;
    Ok(found.assignment)
}

/// What `train` quantizes to.
#[derive(Clone, Debug)]
pub enum TrainTarget {
    FullPrecision,
    Uniform(u32),
    /// Assignment plus an optional relaxed model to finalize from.
    Assignment(BitWidthAssignment, Option<PathBuf>),
}

/// Builds (or finalizes) the model, trains it and writes `checkpoint.json`
/// and `train_log.csv`.
pub fn cmd_train(cfg: &RunConfig, target: &TrainTarget, out: &Path) -> Result<Model> {
    cfg.validate()?;
    let graph = cfg.graph()?;
    let config = cfg.model_config(&graph);
    cfg.echo(out)?;
    let n = graph.num_nodes();
    let mut model = match target {
        TrainTarget::FullPrecision => Model::build(&config, Scheme::FullPrecision, n, cfg.seed)?,
        TrainTarget::Uniform(bits) => {
            Model::build(&config, Scheme::Uniform { bits: *bits }, n, cfg.seed)?
        }
        TrainTarget::Assignment(a, None) => Model::build(
            &config,
            Scheme::Fixed {
                assignment: a.clone(),
            },
            n,
            cfg.seed,
        )?,
        TrainTarget::Assignment(a, Some(relaxed)) => {
            let relaxed = Model::load(relaxed)?;
            if relaxed.config != config {
                return Err(Error::config(
                    "relaxed model was built for a different architecture",
                ));
            }
            relaxed.finalize(a)?
        }
    };
    let epochs = match target {
        TrainTarget::FullPrecision => cfg.search_epochs + cfg.retrain_epochs,
        _ => cfg.retrain_epochs,
    };
    let log = train(&mut model, &graph, &cfg.train_config(epochs))?;
    write(&out.join("train_log.csv"), &log_csv(&log))?;
    model.save(out.join("checkpoint.json"))?;
    Ok(model)
}

pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, mode: Mode, out: &Path) -> Result<Metrics> {
    let graph = cfg.graph()?;
    let model = Model::load(checkpoint)?;
    let lambda = matches!(model.scheme, Scheme::Fixed { .. }).then_some(cfg.lambda);
    let m = evaluate_metrics(&model, &graph, mode, cfg.seed, lambda)?;
    write(
        &out.join("metrics.json"),
        &serde_json::to_string_pretty(&m)?,
    )?;
    Ok(m)
}

/// One row of `summary.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub run: String,
    pub lambda: Option<f64>,
    pub seed: u64,
    pub avg_bits: f64,
    pub gbitops: f64,
    pub accuracy: f64,
}

/// `a` dominates `b`: no worse on both axes and better on one.
pub fn dominates(a: &RunRow, b: &RunRow) -> bool {
    a.accuracy >= b.accuracy
        && a.avg_bits <= b.avg_bits
        && (a.accuracy > b.accuracy || a.avg_bits < b.avg_bits)
}

/// Rows not dominated by any other row (maximize accuracy, minimize bits),
/// sorted by bits.
pub fn pareto_front(rows: &[RunRow]) -> Vec<RunRow> {
    let mut sorted: Vec<&RunRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.avg_bits
            .total_cmp(&b.avg_bits)
            .then(b.accuracy.total_cmp(&a.accuracy))
    });
    let mut front = Vec::new();
    // best accuracy at strictly fewer bits
    let mut best = f64::NEG_INFINITY;
    for group in sorted.chunk_by(|a, b| a.avg_bits == b.avg_bits) {
        let top = group[0].accuracy;
        if top > best {
            front.extend(
                group
                    .iter()
                    .take_while(|r| r.accuracy == top)
                    .map(|r| (*r).clone()),
            );
            best = top;
        }
    }
    front
}

fn rows_csv(rows: &[RunRow]) -> String {
    let mut out = String::from("run,lambda,seed,avg_bits,gbitops,accuracy\n");
    for r in rows {
        let lambda = r.lambda.map_or(String::new(), |l| l.to_string());
        out.push_str(&format!(
            "{},{lambda},{},{},{},{}\n",
            r.run, r.seed, r.avg_bits, r.gbitops, r.accuracy
        ));
    }
    out
}

fn collect_metrics(root: &Path, dir: &Path, rows: &mut Vec<RunRow>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_metrics(root, &p, rows)?;
        } else if p.file_name().is_some_and(|n| n == "metrics.json") {
            let m: Metrics = serde_json::from_str(&read(&p)?)?;
            let run = dir.strip_prefix(root).unwrap_or(dir).display().to_string();
            rows.push(RunRow {
                run: if run.is_empty() { ".".into() } else { run },
                lambda: m.lambda,
                seed: m.seed,
                avg_bits: m.avg_bits,
                gbitops: m.gbitops,
                accuracy: m.accuracy,
            });
        }
    }
    Ok(())
}

/// Aggregates every `metrics.json` under `runs` into `summary.csv` and
/// `pareto.csv` in `out`.
pub fn cmd_report(runs: &Path, out: &Path) -> Result<(Vec<RunRow>, Vec<RunRow>)> {
    let mut rows = Vec::new();
    collect_metrics(runs, runs, &mut rows)?;
    if rows.is_empty() {
        return Err(Error::config(format!(
            "no metrics.json under {}",
            runs.display()
        )));
    }
    let front = pareto_front(&rows);
    write(&out.join("summary.csv"), &rows_csv(&rows))?;
    write(&out.join("pareto.csv"), &rows_csv(&front))?;
    Ok((rows, front))
}

/// Search, retrain the selection and evaluate it in integer mode, all in
/// `out`.
pub fn run_pipeline(cfg: &RunConfig, out: &Path) -> Result<Metrics> {
    let assignment = cmd_search(cfg, out)?;
    cmd_train(
        cfg,
        &TrainTarget::Assignment(assignment, Some(out.join("relaxed.json"))),
        out,
    )?;
    cmd_eval(cfg, &out.join("checkpoint.json"), Mode::Integer, out)
}

/// Runs every `(lambda, seed)` pair on `threads` workers, each in its own
/// `lambda_{l}_seed_{s}` directory.
pub fn sweep(
    cfg: &RunConfig,
    lambdas: &[f64],
    seeds: &[u64],
    threads: usize,
    out: &Path,
) -> Result<Vec<Metrics>> {
    let jobs: VecDeque<(usize, f64, u64)> = lambdas
        .iter()
        .flat_map(|&l| seeds.iter().map(move |&s| (l, s)))
        .enumerate()
        .map(|(i, (l, s))| (i, l, s))
        .collect();
    let total = jobs.len();
    let queue = Mutex::new(jobs);
    let results: Mutex<Vec<Option<Result<Metrics>>>> =
        Mutex::new((0..total).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.max(1).min(total.max(1)) {
            scope.spawn(|| loop {
                let Some((i, lambda, seed)) = queue.lock().expect("queue").pop_front() else {
                    break;
                };
                let mut c = cfg.clone();
                c.lambda = lambda;
                c.seed = seed;
                let dir = out.join(format!("lambda_{lambda}_seed_{seed}"));
                c.out_dir = dir.clone();
                let r = run_pipeline(&c, &dir);
                results.lock().expect("results")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("results")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

#[derive(Debug, Parser)]
#[command(
    name = "mixq",
    about = "Mixed-precision quantized GNNs: search, train, evaluate, report"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    /// JSON run configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory (replaces the configured data source).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub arch: Option<ArchKind>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub bits: Option<Vec<u32>>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    #[arg(long)]
    pub search_epochs: Option<usize>,
    #[arg(long)]
    pub retrain_epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub alpha_lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub symmetrize: Option<bool>,
    #[arg(long)]
    pub sage_sample: Option<usize>,
    #[arg(long, value_enum)]
    pub alpha_grad: Option<AlphaGradArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AlphaGradArg {
    Joint,
    PenaltyOnly,
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.data {
            c.data = DataSource::Path(d.clone());
        }
        if let Some(v) = self.arch {
            c.arch.kind = v;
        }
        if let Some(v) = self.hidden {
            c.arch.hidden = v;
        }
        if let Some(v) = self.depth {
            c.arch.depth = v;
        }
        if let Some(v) = &self.bits {
            c.bits = v.clone();
        }
        if let Some(v) = self.lambda {
            c.lambda = v;
        }
        if let Some(v) = self.warmup_epochs {
            c.warmup_epochs = v;
        }
        if let Some(v) = self.search_epochs {
            c.search_epochs = v;
        }
        if let Some(v) = self.retrain_epochs {
            c.retrain_epochs = v;
        }
        if let Some(v) = self.lr {
            c.lr = v;
        }
        if let Some(v) = self.alpha_lr {
            c.alpha_lr = Some(v);
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.symmetrize {
            c.symmetrize = v;
        }
        if let Some(v) = self.sage_sample {
            c.sage_sample = Some(v);
        }
        if let Some(v) = self.alpha_grad {
            c.alpha_grad = match v {
                AlphaGradArg::Joint => AlphaGrad::Joint,
                AlphaGradArg::PenaltyOnly => AlphaGrad::PenaltyOnly,
            };
        }
        if let Some(v) = &self.out {
            c.out_dir = v.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DataKind {
    Sbm,
    Ring,
    Star,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EvalMode {
    Fp,
    FakeQuant,
    Integer,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset directory.
    GenData {
        #[arg(long, value_enum, default_value = "sbm")]
        kind: DataKind,
        #[arg(long, default_value_t = 100)]
        nodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search bit-widths; writes assignment.json, search_log.csv, relaxed.json.
    Search {
        #[command(flatten)]
        o: Overrides,
        /// Also retrain the selection and evaluate it.
        #[arg(long)]
        pipeline: bool,
        /// Full pipeline for each lambda x seed pair, in subdirectories.
        #[arg(long)]
        sweep: bool,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        lambdas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Train a model at fixed precision; writes checkpoint.json.
    Train {
        #[command(flatten)]
        o: Overrides,
        /// Bit-width assignment from `search`.
        #[arg(long, conflicts_with = "uniform_bits")]
        assignment: Option<PathBuf>,
        /// Relaxed model from `search` to finalize instead of starting fresh.
        #[arg(long, requires = "assignment")]
        relaxed: Option<PathBuf>,
        /// Every component at this width.
        #[arg(long)]
        uniform_bits: Option<u32>,
    },
    /// Evaluate a checkpoint on the test split; writes metrics.json.
    Eval {
        #[command(flatten)]
        o: Overrides,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "integer")]
        mode: EvalMode,
    },
    /// Aggregate metrics.json files into summary.csv and pareto.csv.
    Report {
        #[arg(long)]
        runs: PathBuf,
        /// Defaults to the runs directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            kind,
            nodes,
            seed,
            out,
        } => {
            let spec = match kind {
                DataKind::Sbm => SyntheticSpec::sbm(nodes, seed),
                DataKind::Ring => SyntheticSpec::ring(nodes, seed),
                DataKind::Star => SyntheticSpec::star(nodes, seed),
            };
            cmd_gen_data(&spec, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Search {
            o,
            pipeline,
            sweep: is_sweep,
            lambdas,
            seeds,
            threads,
        } => {
            let cfg = o.resolve()?;
            if is_sweep {
                let lambdas = lambdas.unwrap_or_else(|| vec![cfg.lambda]);
                let seeds = seeds.unwrap_or_else(|| vec![cfg.seed]);
                cfg.echo(&cfg.out_dir)?;
                for m in sweep(&cfg, &lambdas, &seeds, threads, &cfg.out_dir)? {
                    println!(
                        "lambda {:?} seed {}: accuracy {:.4} avg_bits {:.3} gbitops {:.6}",
                        m.lambda, m.seed, m.accuracy, m.avg_bits, m.gbitops
                    );
                }
            } else if pipeline {
                let m = run_pipeline(&cfg, &cfg.out_dir)?;
                println!(
                    "accuracy {:.4} avg_bits {:.3} gbitops {:.6}",
                    m.accuracy, m.avg_bits, m.gbitops
                );
            } else {
                let a = cmd_search(&cfg, &cfg.out_dir)?;
                println!(
                    "mean bits {:.3}: {}",
                    a.mean_bits(),
                    cfg.out_dir.join("assignment.json").display()
                );
            }
        }
        Command::Train {
            o,
            assignment,
            relaxed,
            uniform_bits,
        } => {
            let cfg = o.resolve()?;
            let target = match (assignment, uniform_bits) {
                (Some(p), _) => {
                    TrainTarget::Assignment(BitWidthAssignment::from_json(&read(&p)?)?, relaxed)
                }
                (None, Some(b)) => TrainTarget::Uniform(b),
                (None, None) => TrainTarget::FullPrecision,
            };
            cmd_train(&cfg, &target, &cfg.out_dir)?;
            println!("wrote {}", cfg.out_dir.join("checkpoint.json").display());
        }
        Command::Eval {
            o,
            checkpoint,
            mode,
        } => {
            let cfg = o.resolve()?;
            let mode = match mode {
                EvalMode::Fp => Mode::Fp,
                EvalMode::FakeQuant => Mode::FakeQuant,
                EvalMode::Integer => Mode::Integer,
            };
            let m = cmd_eval(&cfg, &checkpoint, mode, &cfg.out_dir)?;
            println!(
                "accuracy {:.4} avg_bits {:.3} gbitops {:.6}",
                m.accuracy, m.avg_bits, m.gbitops
            );
        }
        Command::Report { runs, out } => {
            let out = out.unwrap_or_else(|| runs.clone());
            let (rows, front) = cmd_report(&runs, &out)?;
            println!("{} runs, {} on the pareto front", rows.len(), front.len());
        }
    }
    Ok(())
}
