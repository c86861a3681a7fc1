//! Full-batch optimization for the semi-supervised and unsupervised
//! objectives, with Adam, L2 weight decay and early stopping on the
//! validation loss.

pub mod loss;
pub mod negative;

use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use loss::{semi_supervised_loss, semi_supervised_loss_value, unsupervised_loss, unsupervised_loss_value};
pub use negative::negative_sample;

use crate::error::{Error, Result};
use crate::graph::NodeTypeId;
use crate::model::{Activation, ForwardOutput, Magnn, ModelParams};
use crate::rng::{Rng, SeedTree};
use crate::model::ParamVars;
use crate::tensor::{grad_check, GradCheckOptions, GradCheckReport, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// L2 penalty coefficient; its gradient `weight_decay * theta` is added
    /// to every parameter gradient before the Adam moments.
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub negatives_per_positive: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            weight_decay: 0.001,
            max_epochs: 100,
            patience: 30,
            seed: 0,
            negatives_per_positive: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning rate {} must be finite and >= 0", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight decay {} must be >= 0", self.weight_decay)));
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config("epochs and patience must be at least 1".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.negatives_per_positive == 0 {
            return Err(Error::Config("negatives per positive must be at least 1".into()));
        }
        Ok(())
    }
}

/// Link-prediction training data over one pair of node types.
#[derive(Debug, Clone)]
pub struct LinkObjective {
    pub left: NodeTypeId,
    pub right: NodeTypeId,
    pub train: Vec<(usize, usize)>,
    pub val: Vec<(usize, usize)>,
    /// Drawn once; keeps the validation loss comparable across epochs.
    pub val_negatives: Vec<(usize, usize)>,
    /// Pairs never used as negatives (every known positive).
    pub exclude: HashSet<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub enum Objective {
    /// Cross entropy on the labeled type's train mask; validation on its
    /// validation mask.
    SemiSupervised { target: NodeTypeId },
    Unsupervised(LinkObjective),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub epochs_run: usize,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

/// Labeled nodes and their classes for one mask.
fn labeled(model: &Magnn, target: NodeTypeId, split: Split) -> Result<(Vec<usize>, Vec<usize>)> {
    let g = model.graph();
    let sym = &g.schema().node_type(target).symbol;
    let labels = g
        .labels(target)
        .ok_or_else(|| Error::InvalidInput(format!("type {sym} has no labels")))?;
    let masks = g
        .masks(target)
        .ok_or_else(|| Error::InvalidInput(format!("type {sym} has no train/validation masks")))?;
    let nodes = match split {
        Split::Train => &masks.train,
        Split::Val => &masks.val,
    };
    let mut classes = Vec::with_capacity(nodes.len());
    for &v in nodes {
        classes.push(
            labels.classes[v].ok_or_else(|| Error::InvalidInput(format!("masked node {sym}:{v} has no label")))?,
        );
    }
    Ok((nodes.clone(), classes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Split {
    Train,
    Val,
}

fn output(out: &ForwardOutput, ty: NodeTypeId) -> Result<Var> {
    out.outputs[ty.0].ok_or_else(|| Error::Config(format!("no metapath targets type id {}", ty.0)))
}

fn objective_loss(
    tape: &mut Tape,
    model: &Magnn,
    out: &ForwardOutput,
    objective: &Objective,
    split: Split,
    negatives: &[(usize, usize)],
) -> Result<Var> {
    match objective {
        Objective::SemiSupervised { target } => {
            if model.config().output_activation != Activation::Softmax {
                return Err(Error::Config("semi-supervised training needs a softmax output".into()));
            }
            let (nodes, classes) = labeled(model, *target, split)?;
            if nodes.is_empty() {
                return Err(Error::InvalidInput(format!("empty {split:?} mask")));
            }
            let probs = output(out, *target)?;
            semi_supervised_loss(tape, probs, &nodes, &classes)
        }
        Objective::Unsupervised(link) => {
            let l = output(out, link.left)?;
            let r = output(out, link.right)?;
            let (pos, neg) = match split {
                Split::Train => (&link.train[..], negatives),
                Split::Val => (&link.val[..], &link.val_negatives[..]),
            };
            unsupervised_loss(tape, l, r, pos, neg)
        }
    }
}

fn check_objective(model: &Magnn, objective: &Objective) -> Result<()> {
    match objective {
        Objective::SemiSupervised { target } => {
            let (tr, _) = labeled(model, *target, Split::Train)?;
            let (va, _) = labeled(model, *target, Split::Val)?;
            if tr.is_empty() || va.is_empty() {
                return Err(Error::InvalidInput("train and validation masks must be nonempty".into()));
            }
        }
        Objective::Unsupervised(link) => {
            if link.train.is_empty() || link.val.is_empty() {
                return Err(Error::InvalidInput("link objective needs train and validation positives".into()));
            }
            let (nl, nr) = (model.graph().num_nodes(link.left), model.graph().num_nodes(link.right));
            let bad = link
                .train
                .iter()
                .chain(&link.val)
                .chain(&link.val_negatives)
                .find(|&&(u, v)| u >= nl || v >= nr);
            if let Some(p) = bad {
                return Err(Error::InvalidInput(format!("pair {p:?} out of range")));
            }
        }
    }
    Ok(())
}

/// Training-split loss and its gradient for every parameter.
///
/// The tape runs in training mode (dropout active) when `training` is set.
pub fn loss_and_gradients(
    model: &Magnn,
    params: &ModelParams,
    objective: &Objective,
    negatives: &[(usize, usize)],
    rng: &mut Rng,
    training: bool,
) -> Result<(f64, BTreeMap<String, Tensor>)> {
    let mut tape = if training { Tape::training() } else { Tape::new() };
    let vars = params.register(&mut tape);
    let out = model.forward(&mut tape, &vars, rng)?;
    let loss = objective_loss(&mut tape, model, &out, objective, Split::Train, negatives)?;
    let value = tape.value(loss).item()?;
    let grads = tape.backward(loss)?;
    let map = vars
        .iter()
        .map(|(name, v)| {
            let p = params.get(name).expect("registered");
            (name.to_string(), grads.get_or_zeros(v, p))
        })
        .collect();
    Ok((value, map))
}

/// Training-split loss in evaluation mode.
pub fn train_loss(model: &Magnn, params: &ModelParams, objective: &Objective, negatives: &[(usize, usize)]) -> Result<f64> {
    split_loss(model, params, objective, Split::Train, negatives)
}

/// Validation loss in evaluation mode.
pub fn validation_loss(model: &Magnn, params: &ModelParams, objective: &Objective) -> Result<f64> {
    split_loss(model, params, objective, Split::Val, &[])
}

fn split_loss(
    model: &Magnn,
    params: &ModelParams,
    objective: &Objective,
    split: Split,
    negatives: &[(usize, usize)],
) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = params.register_frozen(&mut tape);
    let mut rng = SeedTree::new(0).stream("unused");
    let out = model.forward(&mut tape, &vars, &mut rng)?;
    let loss = objective_loss(&mut tape, model, &out, objective, split, negatives)?;
    tape.value(loss).item()
}

/// Checks tape gradients of the training-split loss against central
/// differences. The forward pass runs in evaluation mode, so dropout is off.
/// `per_param` of the report follows the name order of `params`.
pub fn objective_gradcheck(
    model: &Magnn,
    params: &ModelParams,
    objective: &Objective,
    negatives: &[(usize, usize)],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    check_objective(model, objective)?;
    let names: Vec<&str> = params.names().collect();
    let tensors: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
    let f = |tape: &mut Tape, vars: &[Var]| {
        let pv = ParamVars::from_map(names.iter().map(|n| n.to_string()).zip(vars.iter().copied()).collect());
        let out = model.forward(tape, &pv, &mut SeedTree::new(0).stream("unused"))?;
        objective_loss(tape, model, &out, objective, Split::Train, negatives)
    };
    grad_check(f, &tensors, opts)
}

/// Adam with the L2 penalty gradient folded into the raw gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: i32,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &BTreeMap<String, Tensor>) -> Result<()> {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t);
        let b2t = 1.0 - self.beta2.powi(self.t);
        for (name, p) in params.iter_mut() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::Config(format!("no gradient for {name}")))?;
            if g.shape() != p.shape() {
                return Err(Error::shape("adam", format!("gradient shape for {name}")));
            }
            let m = self.m.entry(name.to_string()).or_insert_with(|| vec![0.0; p.len()]);
            let v = self.v.entry(name.to_string()).or_insert_with(|| vec![0.0; p.len()]);
            for (((x, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                let gi = gi + self.weight_decay * *x;
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mh = *mi / b1t;
                let vh = *vi / b2t;
                *x -= self.learning_rate * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Trains fresh parameters drawn from the `"init"` stream of the seed.
pub fn train(model: &Magnn, config: &TrainConfig, objective: &Objective) -> Result<(ModelParams, TrainReport)> {
    let seeds = SeedTree::new(config.seed);
    let params = model.init_params(&mut seeds.stream("init"))?;
    train_from(model, params, config, objective)
}

/// Trains from given parameters; returns those of the best validation epoch.
pub fn train_from(
    model: &Magnn,
    mut params: ModelParams,
    config: &TrainConfig,
    objective: &Objective,
) -> Result<(ModelParams, TrainReport)> {
    config.validate()?;
    check_objective(model, objective)?;
    let start = Instant::now();
    let seeds = SeedTree::new(config.seed);
    let mut dropout_rng = seeds.stream("dropout");
    let mut sampling_rng = seeds.stream("sampling");
    let mut adam = Adam::new(config.learning_rate, config.weight_decay);

    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
        epochs_run: 0,
        wall_clock_secs: 0.0,
    };
    let mut best = (f64::INFINITY, params.clone());
    let mut waited = 0;
    for epoch in 1..=config.max_epochs {
        let negatives = match objective {
            Objective::Unsupervised(link) => negative_sample(
                &link.exclude,
                model.graph().num_nodes(link.left),
                model.graph().num_nodes(link.right),
                link.train.len() * config.negatives_per_positive,
                &mut sampling_rng,
            )?,
            Objective::SemiSupervised { .. } => Vec::new(),
        };
        let (loss, grads) = loss_and_gradients(model, &params, objective, &negatives, &mut dropout_rng, true)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("training loss {loss} at epoch {epoch}")));
        }
        adam.step(&mut params, &grads)?;
        let val = validation_loss(model, &params, objective)?;
        if !val.is_finite() {
            return Err(Error::Numeric(format!("validation loss {val} at epoch {epoch}")));
        }
        report.train_loss.push(loss);
        report.val_loss.push(val);
        report.epochs_run = epoch;
        if val < best.0 {
            best = (val, params.clone());
            report.best_epoch = epoch;
            waited = 0;
        } else {
            waited += 1;
            if waited >= config.patience {
                break;
            }
        }
    }
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok((best.1, report))
}
