//! Downstream evaluation: linear probes, clustering, link prediction,
//! ablation variants and synthetic data.

pub mod ablation;
pub mod cluster;
pub mod metrics;
pub mod probe;
pub mod synth;

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use ablation::{ablation_run, Variant};
pub use cluster::{cluster_eval, kmeans};
pub use metrics::{ari, average_precision, f1_scores, nmi, roc_auc};
pub use probe::{linear_probe, Logistic, ProbeOptions, ProbeResult};
pub use synth::{split_links, synth_hetgraph, synth_link_graph, LinkSplit, LinkSynthConfig, SynthConfig};

use crate::error::{Error, Result};
use crate::graph::{HetGraph, NodeTypeId, RelationId};
use crate::model::{Activation, Magnn, ModelConfig, ModelParams};
use crate::rng::SeedTree;
use crate::tensor::Tensor;
use crate::train::{self, LinkObjective, Objective, TrainConfig, TrainReport};

/// Train fractions of the probe protocol.
pub const PROBE_FRACTIONS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

/// One evaluation record. Serialized as a single JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_fraction: Option<f64>,
    /// Number of repeats averaged into the metrics.
    pub runs: usize,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
}

impl EvalReport {
    pub fn new(task: &str, seed: u64, runs: usize) -> Self {
        Self {
            task: task.to_string(),
            variant: None,
            train_fraction: None,
            runs,
            seed,
            metrics: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.metrics.insert(name.to_string(), value);
        self
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::Format(format!("bad report line: {e}")))
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Link scores `sigmoid(h_u . h_v)` of `pairs`.
pub fn link_scores(left: &Tensor, right: &Tensor, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    if left.cols() != right.cols() {
        return Err(Error::Dimension("endpoint embeddings differ in width".into()));
    }
    pairs
        .iter()
        .map(|&(u, v)| {
            if u >= left.rows() || v >= right.rows() {
                return Err(Error::InvalidInput(format!("pair ({u}, {v}) out of range")));
            }
            Ok(sigmoid(left.row(u).iter().zip(right.row(v)).map(|(a, b)| a * b).sum()))
        })
        .collect()
}

/// `(AUC, AP)` of positive against negative test pairs.
pub fn link_predict_eval(
    left: &Tensor,
    right: &Tensor,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> Result<(f64, f64)> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::InvalidInput("link evaluation needs test pairs".into()));
    }
    if positives.len() != negatives.len() {
        return Err(Error::InvalidInput(format!(
            "{} positive and {} negative pairs; sets must be equally large",
            positives.len(),
            negatives.len()
        )));
    }
    let p = link_scores(left, right, positives)?;
    let n = link_scores(left, right, negatives)?;
    Ok((roc_auc(&p, &n)?, average_precision(&p, &n)?))
}

/// What an experiment trains for and how it is scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Task {
    /// Semi-supervised node classification of the labeled type.
    Classify { target: NodeTypeId },
    /// Unsupervised training on one relation's edges, scored by link
    /// prediction on held-out edges.
    LinkPred {
        relation: RelationId,
        val_fraction: f64,
        test_fraction: f64,
    },
}

/// A complete train + evaluate specification.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub graph: Arc<HetGraph>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub task: Task,
    pub cap: Option<usize>,
    /// Also run the linear probe and clustering protocols.
    pub probe: bool,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub model: Magnn,
    pub params: ModelParams,
    pub train_report: TrainReport,
    pub reports: Vec<EvalReport>,
    /// Final outputs `z` per type.
    pub outputs: Vec<Option<Tensor>>,
    /// Best validation loss, used to pick among variants.
    pub best_val_loss: f64,
}

/// Adjusts the model configuration to what `task` requires: a softmax
/// output with one unit per class for classification.
pub fn task_config(graph: &HetGraph, mut config: ModelConfig, task: &Task) -> Result<ModelConfig> {
    if let Task::Classify { target } = task {
        let labels = graph
            .labels(*target)
            .ok_or_else(|| Error::InvalidInput("classification needs labels".into()))?;
        config.out_dim = labels.num_classes;
        config.output_activation = Activation::Softmax;
    }
    Ok(config)
}

fn masked(graph: &HetGraph, target: NodeTypeId, nodes: &[usize]) -> Result<Vec<usize>> {
    let labels = graph
        .labels(target)
        .ok_or_else(|| Error::InvalidInput("classification needs labels".into()))?;
    nodes
        .iter()
        .map(|&v| labels.classes[v].ok_or_else(|| Error::InvalidInput(format!("node {v} is unlabeled"))))
        .collect()
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Logistic regression on raw features: fit on the train mask, score the
/// test mask. Returns `(macro F1, micro F1)`.
pub fn raw_feature_baseline(graph: &HetGraph, target: NodeTypeId) -> Result<(f64, f64)> {
    let masks = graph
        .masks(target)
        .ok_or_else(|| Error::InvalidInput("baseline needs masks".into()))?;
    let x = graph.features(target).to_dense();
    let y_train = masked(graph, target, &masks.train)?;
    let y_test = masked(graph, target, &masks.test)?;
    let rows: Vec<&[f64]> = masks.train.iter().map(|&v| x.row(v)).collect();
    let classes = graph.labels(target).expect("checked").num_classes;
    let model = Logistic::fit(&rows, &y_train, classes, &ProbeOptions::default())?;
    let pred: Vec<usize> = masks.test.iter().map(|&v| model.predict(x.row(v))).collect();
    f1_scores(&y_test, &pred)
}

/// Classification reports of trained parameters: the model's own test-mask
/// predictions, and (with `probe`) the linear probe at every train fraction
/// and k-means clustering, both on test-mask embeddings only.
pub fn classification_reports(
    model: &Magnn,
    params: &ModelParams,
    target: NodeTypeId,
    seed: u64,
    probe: bool,
) -> Result<Vec<EvalReport>> {
    let graph = model.graph();
    let masks = graph
        .masks(target)
        .ok_or_else(|| Error::InvalidInput("classification needs masks".into()))?;
    let truth = masked(graph, target, &masks.test)?;
    let (outputs, fused) = model.evaluate(params)?;
    let z = outputs[target.0]
        .as_ref()
        .ok_or_else(|| Error::Config("no metapath targets the labeled type".into()))?;
    let pred: Vec<usize> = masks.test.iter().map(|&v| argmax(z.row(v))).collect();
    let (ma, mi) = f1_scores(&truth, &pred)?;
    let mut reports = vec![EvalReport::new("classify", seed, 1)
        .with("macro_f1", ma)
        .with("micro_f1", mi)];
    if probe {
        let h = fused[target.0].as_ref().expect("fused exists with outputs");
        let emb = h.select_rows(&masks.test);
        let seeds = SeedTree::new(seed);
        for f in PROBE_FRACTIONS {
            let r = linear_probe(&emb, &truth, f, seeds.child("probe", (f * 100.0) as u64).root(), &ProbeOptions::default())?;
            let mut rep = EvalReport::new("probe", seed, ProbeOptions::default().runs)
                .with("macro_f1", r.macro_f1)
                .with("micro_f1", r.micro_f1)
                .with("macro_f1_std", r.macro_f1_std)
                .with("micro_f1_std", r.micro_f1_std);
            rep.train_fraction = Some(f);
            reports.push(rep);
        }
        let k = graph.labels(target).expect("checked").num_classes;
        let (n, a) = cluster_eval(&emb, &truth, k, seeds.child("cluster", 0).root())?;
        reports.push(EvalReport::new("cluster", seed, 10).with("nmi", n).with("ari", a));
    }
    Ok(reports)
}

/// A model built for an experiment, with what training and scoring need.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub model: Magnn,
    pub objective: Objective,
    /// Held-out edges of a link task.
    pub split: Option<LinkSplit>,
}

/// Builds the model of `exp` on the graph it trains on. Link tasks split
/// the relation's edges and keep only the training edges in that graph.
pub fn prepare(exp: &Experiment) -> Result<Prepared> {
    let config = task_config(&exp.graph, exp.model.clone(), &exp.task)?;
    let seeds = SeedTree::new(exp.train.seed);
    let instance_seed = seeds.child("instances", 0).root();
    match &exp.task {
        Task::Classify { target } => Ok(Prepared {
            model: Magnn::with_enumeration(exp.graph.clone(), config, exp.cap, instance_seed)?,
            objective: Objective::SemiSupervised { target: *target },
            split: None,
        }),
        Task::LinkPred {
            relation,
            val_fraction,
            test_fraction,
        } => {
            let split = split_links(&exp.graph, *relation, *val_fraction, *test_fraction, &mut seeds.stream("splits"))?;
            let train_graph = Arc::new(exp.graph.with_relation_edges(*relation, &split.train)?);
            let model = Magnn::with_enumeration(train_graph, config, exp.cap, instance_seed)?;
            let r = exp.graph.schema().relation(*relation);
            let exclude: HashSet<(usize, usize)> = split.train.iter().chain(&split.val).copied().collect();
            let objective = Objective::Unsupervised(LinkObjective {
                left: r.source,
                right: r.target,
                train: split.train.clone(),
                val: split.val.clone(),
                val_negatives: split.val_negatives.clone(),
                exclude,
            });
            Ok(Prepared {
                model,
                objective,
                split: Some(split),
            })
        }
    }
}

/// Reports of `params` on a prepared experiment, plus the outputs `z`.
pub fn score(exp: &Experiment, prepared: &Prepared, params: &ModelParams) -> Result<(Vec<EvalReport>, Vec<Option<Tensor>>)> {
    let model = &prepared.model;
    let (outputs, _) = model.evaluate(params)?;
    let reports = match (&exp.task, &prepared.split) {
        (Task::Classify { target }, _) => classification_reports(model, params, *target, exp.train.seed, exp.probe)?,
        (Task::LinkPred { relation, .. }, Some(split)) => {
            let r = exp.graph.schema().relation(*relation);
            let emb = |t: NodeTypeId| {
                outputs[t.0]
                    .as_ref()
                    .ok_or_else(|| Error::Config("link endpoint type has no metapath".into()))
            };
            let (auc, ap) = link_predict_eval(emb(r.source)?, emb(r.target)?, &split.test, &split.test_negatives)?;
            vec![EvalReport::new("linkpred", exp.train.seed, 1).with("auc", auc).with("ap", ap)]
        }
        (Task::LinkPred { .. }, None) => return Err(Error::Config("link task prepared without a split".into())),
    };
    Ok((reports, outputs))
}

/// Trains and evaluates one experiment.
pub fn run_experiment(exp: &Experiment) -> Result<Outcome> {
    let prepared = prepare(exp)?;
    let (params, report) = train::train(&prepared.model, &exp.train, &prepared.objective)?;
    let best_val_loss = report.val_loss[report.best_epoch - 1];
    let (reports, outputs) = score(exp, &prepared, &params)?;
    Ok(Outcome {
        model: prepared.model,
        params,
        train_report: report,
        reports,
        outputs,
        best_val_loss,
    })
}
