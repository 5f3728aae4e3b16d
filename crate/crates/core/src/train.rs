//! Training loops: full-precision / QAT training, the relaxed bit-width
//! search, and evaluation.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Split;
use crate::model::{
    forward, forward_with_penalty, model_forward, Mode, Model, ModelConfig, PreparedGraph, Scheme,
};
use crate::relaxed::{total_loss, validate_bit_choices, BitWidthAssignment};
use crate::tensor::{Adam, ParamId, Tape, Tensor};

impl PreparedGraph {
    pub fn mask(&self, split: Split) -> &[bool] {
        match split {
            Split::Train => &self.train_mask,
            Split::Val => &self.val_mask,
            Split::Test => &self.test_mask,
            Split::None => &[],
        }
    }
}

/// Fraction of masked rows whose argmax equals the label.
pub fn accuracy(logits: &Tensor, labels: &[usize], mask: &[bool]) -> f64 {
    let pred = logits.argmax_rows();
    let (mut hit, mut total) = (0usize, 0usize);
    for ((p, l), &m) in pred.iter().zip(labels).zip(mask) {
        if m {
            total += 1;
            hit += usize::from(p == l);
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Per-class accuracy over the masked rows (`None` for absent classes).
pub fn per_class_accuracy(
    logits: &Tensor,
    labels: &[usize],
    mask: &[bool],
    classes: usize,
) -> Vec<Option<f64>> {
    let pred = logits.argmax_rows();
    let mut hit = vec![0usize; classes];
    let mut total = vec![0usize; classes];
    for ((p, &l), &m) in pred.iter().zip(labels).zip(mask) {
        if m && l < classes {
            total[l] += 1;
            hit[l] += usize::from(*p == l);
        }
    }
    hit.iter()
        .zip(&total)
        .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
        .collect()
}

pub fn evaluate(model: &Model, graph: &PreparedGraph, mode: Mode, split: Split) -> Result<f64> {
    let logits = model_forward(model, graph, mode)?;
    Ok(accuracy(&logits, &graph.labels, graph.mask(split)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Full-precision epochs run before calibration (quantized models only).
    #[serde(default)]
    pub warmup_epochs: usize,
    /// Neighbor cap for mean aggregation, resampled every epoch.
    #[serde(default)]
    pub sage_sample: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            lr: 0.01,
            seed: 0,
            warmup_epochs: 0,
            sage_sample: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub task_loss: f64,
    pub penalty: f64,
    pub expected_bits: f64,
    pub val_accuracy: f64,
}

fn check_finite(epoch: usize, v: f64, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Training {
            epoch,
            message: format!("{what} is {v}"),
        })
    }
}

fn epoch_graph(
    graph: &PreparedGraph,
    cap: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<Option<PreparedGraph>> {
    cap.map(|k| graph.with_sampled_neighbors(k, rng))
        .transpose()
}

fn fp_epochs(
    model: &mut Model,
    graph: &PreparedGraph,
    cfg: &TrainConfig,
    epochs: usize,
    adam: &mut Adam,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    for epoch in 0..epochs {
        let sampled = epoch_graph(graph, cfg.sage_sample, rng)?;
        let g = sampled.as_ref().unwrap_or(graph);
        let tape = Tape::new();
        let logits = forward(model, &tape, g, Mode::Fp)?;
        let loss = logits.softmax_cross_entropy(&g.labels, &g.train_mask)?;
        check_finite(epoch, loss.value().item(), "warm-up loss")?;
        model.store.zero_grad();
        tape.backward_into(loss, &mut model.store)?;
        adam.step(&mut model.store);
    }
    Ok(())
}

/// Trains a full-precision model in FP mode or a fixed-precision model
/// with fake quantization (calibrating first if needed).
pub fn train(model: &mut Model, graph: &PreparedGraph, cfg: &TrainConfig) -> Result<Vec<EpochLog>> {
    if model.is_relaxed() {
        return Err(Error::state("use search() for relaxed models"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut adam = Adam::new(cfg.lr);
    let mode = if model.is_quantized() {
        Mode::FakeQuant
    } else {
        Mode::Fp
    };
    if model.is_quantized() && !model.is_calibrated() {
        fp_epochs(model, graph, cfg, cfg.warmup_epochs, &mut adam, &mut rng)?;
        model.calibrate(graph)?;
    }
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let sampled = epoch_graph(graph, cfg.sage_sample, &mut rng)?;
        let g = sampled.as_ref().unwrap_or(graph);
        let tape = Tape::new();
        let logits = forward(model, &tape, g, mode)?;
        let loss = logits.softmax_cross_entropy(&g.labels, &g.train_mask)?;
        let lv = loss.value().item();
        check_finite(epoch, lv, "loss")?;
        model.store.zero_grad();
        tape.backward_into(loss, &mut model.store)?;
        adam.step(&mut model.store);
        log.push(EpochLog {
            epoch,
            task_loss: lv,
            penalty: 0.0,
            expected_bits: 0.0,
            val_accuracy: accuracy(&logits.value(), &g.labels, &g.val_mask),
        });
    }
    Ok(log)
}

/// Which objective the architecture weights `alpha` follow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaGrad {
    /// One update over everything from `task + lambda * penalty`.
    #[default]
    Joint,
    /// Alpha sees only `lambda * penalty`; all else only the task loss.
    PenaltyOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub bits: Vec<u32>,
    pub lambda: f64,
    #[serde(flatten)]
    pub train: TrainConfig,
    /// Learning rate of alpha (defaults to `train.lr`).
    #[serde(default)]
    pub alpha_lr: Option<f64>,
    #[serde(default)]
    pub alpha_grad: AlphaGrad,
}

impl SearchConfig {
    pub fn new(bits: Vec<u32>, lambda: f64, train: TrainConfig) -> Self {
        SearchConfig {
            bits,
            lambda,
            train,
            alpha_lr: None,
            alpha_grad: AlphaGrad::Joint,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub model: Model,
    pub assignment: BitWidthAssignment,
    pub log: Vec<EpochLog>,
}

/// Trains a relaxed model on `task + lambda * penalty` and selects the
/// highest-alpha bit-width per component.
pub fn search(
    graph: &PreparedGraph,
    config: &ModelConfig,
    sc: &SearchConfig,
) -> Result<SearchOutcome> {
    validate_bit_choices(&sc.bits)?;
    if !sc.lambda.is_finite() {
        return Err(Error::config("lambda must be finite"));
    }
    let cfg = &sc.train;
    let mut model = Model::build(
        config,
        Scheme::Relaxed {
            bits: sc.bits.clone(),
        },
        graph.num_nodes(),
        cfg.seed,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut adam = Adam::new(cfg.lr);
    fp_epochs(
        &mut model,
        graph,
        cfg,
        cfg.warmup_epochs,
        &mut adam,
        &mut rng,
    )?;
    model.calibrate(graph)?;

    let alphas: HashSet<ParamId> = model.alpha_params().into_iter().collect();
    let alpha_scale = sc.alpha_lr.map_or(1.0, |a| a / cfg.lr);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let sampled = epoch_graph(graph, cfg.sage_sample, &mut rng)?;
        let g = sampled.as_ref().unwrap_or(graph);
        let tape = Tape::new();
        let (logits, acc) = forward_with_penalty(&model, &tape, g)?;
        let task = logits.softmax_cross_entropy(&g.labels, &g.train_mask)?;
        let penalty = acc.cost(&tape)?;
        let (tv, pv) = (task.value().item(), penalty.value().item());
        check_finite(epoch, tv, "task loss")?;
        check_finite(epoch, pv, "penalty")?;
        model.store.zero_grad();
        match sc.alpha_grad {
            AlphaGrad::Joint => {
                let total = total_loss(task, penalty, sc.lambda)?;
                tape.backward_into(total, &mut model.store)?;
            }
            AlphaGrad::PenaltyOnly => {
                let gt = tape.backward(task)?;
                tape.accumulate(&gt, &mut model.store, |id| !alphas.contains(&id));
                let gp = tape.backward(penalty.scale(sc.lambda))?;
                tape.accumulate(&gp, &mut model.store, |id| alphas.contains(&id));
            }
        }
        adam.step_with(&mut model.store, |id| {
            if alphas.contains(&id) {
                alpha_scale
            } else {
                1.0
            }
        });
        log.push(EpochLog {
            epoch,
            task_loss: tv,
            penalty: pv,
            expected_bits: acc.expected_bits(),
            val_accuracy: accuracy(&logits.value(), &g.labels, &g.val_mask),
        });
    }
    let assignment = model.selected_assignment()?;
    Ok(SearchOutcome {
        model,
        assignment,
        log,
    })
}

/// Search result after the selected fixed-precision model is retrained.
#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub model: Model,
    pub assignment: BitWidthAssignment,
    pub search_log: Vec<EpochLog>,
    pub retrain_log: Vec<EpochLog>,
}

/// Search, finalize the argmax selection and retrain it with fake
/// quantization for `retrain_epochs`.
pub fn search_and_retrain(
    graph: &PreparedGraph,
    config: &ModelConfig,
    sc: &SearchConfig,
    retrain_epochs: usize,
) -> Result<PipelineOutcome> {
    let found = search(graph, config, sc)?;
    let mut model = found.model.finalize(&found.assignment)?;
    let cfg = TrainConfig {
        epochs: retrain_epochs,
        warmup_epochs: 0,
        ..sc.train.clone()
    };
    let retrain_log = train(&mut model, graph, &cfg)?;
    Ok(PipelineOutcome {
        model,
        assignment: found.assignment,
        search_log: found.log,
        retrain_log,
    })
}
