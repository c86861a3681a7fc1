//! The run pipeline behind every CLI command.
//!
//! Each command takes a [`RunConfig`], writes its artifacts under the
//! configured output directory and returns a summary for the caller to
//! print. Artifacts hold no wall-clock data, so a repeated run with the
//! same configuration produces the same bytes.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{DatasetSpec, RunConfig, TaskSpec};
use super::dataset::{load_dataset, write_dataset};
use super::text::{format_metapath, parse_metapath};
use super::toy::toy_graph;
use crate::error::{Error, Result};
use crate::eval::{
    ablation_run, cluster_eval, prepare, score, synth_hetgraph, synth_link_graph, EvalReport, Experiment, Prepared, Task,
    Variant,
};
use crate::graph::{HetGraph, Metapath, RelationId};
use crate::metapath::enumerate_all;
use crate::model::checkpoint::{read_checkpoint, write_checkpoint};
use crate::model::ModelParams;
use crate::rng::SeedTree;
use crate::tensor::{GradCheckOptions, Tensor};
use crate::train::{self, negative_sample, Objective, TrainReport};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const REPORTS_FILE: &str = "reports.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// A graph with the warnings raised while loading it.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: HetGraph,
    pub warnings: Vec<String>,
}

pub fn load_graph(spec: &DatasetSpec) -> Result<LoadedGraph> {
    let (graph, warnings) = match spec {
        DatasetSpec::Files { schema, data_dir } => {
            let d = load_dataset(schema, data_dir.as_deref())?;
            (d.graph, d.warnings)
        }
        DatasetSpec::Toy => (toy_graph()?, Vec::new()),
        DatasetSpec::Synth(c) => (synth_hetgraph(c)?, Vec::new()),
        DatasetSpec::SynthLink(c) => (synth_link_graph(c)?, Vec::new()),
    };
    Ok(LoadedGraph { graph, warnings })
}

/// Resolves a relation by name, or by `S-T` symbols when exactly one
/// relation links those types.
fn resolve_relation(graph: &HetGraph, text: &str) -> Result<RelationId> {
    let schema = graph.schema();
    if let Some(r) = schema.relation_by_name(text) {
        return Ok(r);
    }
    if let Some((s, t)) = text.split_once('-') {
        if let (Some(a), Some(b)) = (schema.type_by_symbol(s), schema.type_by_symbol(t)) {
            if let [r] = schema.relations_between(a, b).as_slice() {
                return Ok(*r);
            }
        }
    }
    Err(Error::Config(format!("unknown relation {text:?}")))
}

pub fn parse_metapaths(graph: &HetGraph, texts: &[String]) -> Result<Vec<Metapath>> {
    texts.iter().map(|t| parse_metapath(t, graph.schema())).collect()
}

/// Builds the experiment a run config describes on `graph`.
pub fn experiment(cfg: &RunConfig, graph: Arc<HetGraph>) -> Result<Experiment> {
    cfg.validate()?;
    let metapaths = parse_metapaths(&graph, &cfg.metapaths)?;
    let symbol = |s: &str| {
        graph
            .schema()
            .type_by_symbol(s)
            .ok_or_else(|| Error::Config(format!("unknown target type {s:?}")))
    };
    let (task, probe) = match &cfg.task {
        TaskSpec::Classify { target, probe } => (Task::Classify { target: symbol(target)? }, *probe),
        TaskSpec::Cluster { target } => (Task::Classify { target: symbol(target)? }, false),
        TaskSpec::LinkPred {
            relation,
            val_fraction,
            test_fraction,
        } => (
            Task::LinkPred {
                relation: resolve_relation(&graph, relation)?,
                val_fraction: *val_fraction,
                test_fraction: *test_fraction,
            },
            false,
        ),
    };
    Ok(Experiment {
        model: cfg.model.to_model_config(metapaths),
        train: cfg.train_config(),
        task,
        cap: cfg.cap,
        probe,
        graph,
    })
}

/// Scores trained parameters under the run's task. The cluster task
/// replaces the classification report by k-means on test embeddings.
fn task_reports(
    cfg: &RunConfig,
    exp: &Experiment,
    prepared: &Prepared,
    params: &ModelParams,
) -> Result<(Vec<EvalReport>, Vec<Option<Tensor>>)> {
    let (reports, outputs) = score(exp, prepared, params)?;
    let (TaskSpec::Cluster { .. }, Task::Classify { target }) = (&cfg.task, &exp.task) else {
        return Ok((reports, outputs));
    };
    let model = &prepared.model;
    let g = model.graph();
    let masks = g.masks(*target).ok_or_else(|| Error::InvalidInput("clustering needs masks".into()))?;
    let labels = g.labels(*target).ok_or_else(|| Error::InvalidInput("clustering needs labels".into()))?;
    let truth = masks
        .test
        .iter()
        .map(|&v| labels.classes[v].ok_or_else(|| Error::InvalidInput(format!("test node {v} is unlabeled"))))
        .collect::<Result<Vec<_>>>()?;
    let (_, fused) = model.evaluate(params)?;
    let h = fused[target.0]
        .as_ref()
        .ok_or_else(|| Error::Config("no metapath targets the clustered type".into()))?;
    let seed = SeedTree::new(exp.train.seed).child("cluster", 0).root();
    let (n, a) = cluster_eval(&h.select_rows(&masks.test), &truth, labels.num_classes, seed)?;
    Ok((vec![EvalReport::new("cluster", exp.train.seed, 10).with("nmi", n).with("ari", a)], outputs))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Embedding export: a `count dim` header, then `SYMBOL index v1 .. vdim`
/// per node, types in schema order and nodes in index order. Values use
/// the shortest decimal that reads back to the same `f64`.
pub fn format_embeddings(graph: &HetGraph, outputs: &[Option<Tensor>]) -> Result<String> {
    let present: Vec<(usize, &Tensor)> = outputs.iter().enumerate().filter_map(|(t, z)| z.as_ref().map(|z| (t, z))).collect();
    let dim = present.first().map_or(0, |(_, z)| z.cols());
    if present.iter().any(|(_, z)| z.cols() != dim) {
        return Err(Error::Dimension("output widths differ across types".into()));
    }
    let count: usize = present.iter().map(|(_, z)| z.rows()).sum();
    let mut s = format!("{count} {dim}\n");
    for (t, z) in present {
        let sym = &graph.schema().node_types()[t].symbol;
        for v in 0..z.rows() {
            write!(s, "{sym} {v}").expect("string write");
            for x in z.row(v) {
                write!(s, " {x}").expect("string write");
            }
            s.push('\n');
        }
    }
    Ok(s)
}

/// One row of an embedding export.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub symbol: String,
    pub index: usize,
    pub values: Vec<f64>,
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().ok_or_else(|| err(1, "missing header".into()))?.map_err(|e| Error::io(path, e))?;
    let nums: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| err(1, format!("bad header {header:?}")))?;
    let [count, dim] = nums[..] else {
        return Err(err(1, format!("header needs count and dim, got {header:?}")));
    };
    let mut rows = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 2;
        let mut it = line.split_whitespace();
        let symbol = it.next().ok_or_else(|| err(lineno, "empty line".into()))?.to_string();
        let index = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| err(lineno, "missing node index".into()))?;
        let values: Vec<f64> = it
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err(lineno, "bad value".into()))?;
        if values.len() != dim {
            return Err(err(lineno, format!("expected {dim} values, found {}", values.len())));
        }
        rows.push(EmbeddingRow { symbol, index, values });
    }
    if rows.len() != count {
        return Err(err(1, format!("header declares {count} rows, file has {}", rows.len())));
    }
    Ok(rows)
}

fn reports_jsonl(reports: &[EvalReport]) -> String {
    reports.iter().map(|r| r.to_json_line() + "\n").collect()
}

pub fn read_reports(path: &Path) -> Result<Vec<EvalReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines().filter(|l| !l.trim().is_empty()).map(EvalReport::from_json_line).collect()
}

/// Run metadata written next to the artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: RunConfig,
    /// Canonical text of every metapath, in config order.
    pub metapaths: Vec<String>,
    pub node_counts: Vec<(String, usize)>,
    pub edge_counts: Vec<(String, usize)>,
    pub warnings: Vec<String>,
    pub num_parameters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainReport>,
    pub artifacts: Vec<String>,
}

impl Manifest {
    fn new(command: &str, cfg: &RunConfig, loaded: &LoadedGraph, metapaths: &[Metapath]) -> Self {
        let g = &loaded.graph;
        let s = g.schema();
        Self {
            command: command.to_string(),
            config: cfg.clone(),
            metapaths: metapaths.iter().map(|p| format_metapath(p, s)).collect(),
            node_counts: s.node_types().iter().map(|t| t.symbol.clone()).zip(g.node_counts().iter().copied()).collect(),
            edge_counts: (0..s.num_relations())
                .map(|r| (s.relations()[r].name.clone(), g.num_edges(RelationId(r))))
                .collect(),
            warnings: loaded.warnings.clone(),
            num_parameters: 0,
            train: None,
            artifacts: Vec::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(&dir.join(MANIFEST_FILE), (json + "\n").as_bytes())
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub reports: Vec<EvalReport>,
    pub train: TrainReport,
    pub output: PathBuf,
    pub warnings: Vec<String>,
}

/// `train`: enumerate, train, score; write checkpoint, embeddings,
/// reports and manifest.
pub fn run_train(cfg: &RunConfig) -> Result<TrainSummary> {
    let loaded = load_graph(&cfg.dataset)?;
    let exp = experiment(cfg, Arc::new(loaded.graph.clone()))?;
    let prepared = prepare(&exp)?;
    let (params, report) = train::train(&prepared.model, &exp.train, &prepared.objective)?;
    let (reports, outputs) = task_reports(cfg, &exp, &prepared, &params)?;

    let dir = &cfg.output;
    create_dir(dir)?;
    let ckpt_path = dir.join(CHECKPOINT_FILE);
    let file = File::create(&ckpt_path).map_err(|e| Error::io(&ckpt_path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, prepared.model.config(), &params)?;
    w.flush().map_err(|e| Error::io(&ckpt_path, e))?;
    write_file(&dir.join(EMBEDDINGS_FILE), format_embeddings(prepared.model.graph(), &outputs)?.as_bytes())?;
    write_file(&dir.join(REPORTS_FILE), reports_jsonl(&reports).as_bytes())?;

    let mut manifest = Manifest::new("train", cfg, &loaded, &exp.model.metapaths);
    manifest.num_parameters = params.num_scalars();
    manifest.train = Some(report.clone());
    manifest.artifacts = [CHECKPOINT_FILE, EMBEDDINGS_FILE, REPORTS_FILE].map(String::from).to_vec();
    manifest.write(dir)?;
    Ok(TrainSummary {
        reports,
        train: report,
        output: dir.clone(),
        warnings: loaded.warnings,
    })
}

/// `eval`: score a saved checkpoint under the run's task. Link tasks redo
/// the seeded split, so the held-out edges match those of training.
pub fn run_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<Vec<EvalReport>> {
    let loaded = load_graph(&cfg.dataset)?;
    let exp = experiment(cfg, Arc::new(loaded.graph))?;
    let prepared = prepare(&exp)?;
    let file = File::open(checkpoint).map_err(|e| Error::io(checkpoint, e))?;
    let (config, params) = read_checkpoint(BufReader::new(file))?;
    if &config != prepared.model.config() {
        return Err(Error::Config(format!(
            "checkpoint {} was trained with a different model configuration",
            checkpoint.display()
        )));
    }
    let (reports, _) = task_reports(cfg, &exp, &prepared, &params)?;
    create_dir(&cfg.output)?;
    write_file(&cfg.output.join(REPORTS_FILE), reports_jsonl(&reports).as_bytes())?;
    Ok(reports)
}

/// Instance statistics of one metapath.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationCount {
    pub metapath: String,
    pub instances: usize,
    /// Targets with at least one instance.
    pub covered_targets: usize,
    pub targets: usize,
}

/// `enumerate`: instance counts per metapath, with the run's cap and the
/// same instance seed training uses.
pub fn run_enumerate(cfg: &RunConfig) -> Result<Vec<EnumerationCount>> {
    let loaded = load_graph(&cfg.dataset)?;
    let g = &loaded.graph;
    let seed = SeedTree::new(cfg.seed).child("instances", 0).root();
    let mut out = Vec::new();
    for p in parse_metapaths(g, &cfg.metapaths)? {
        let table = enumerate_all(g, &p, cfg.cap, seed)?;
        let offsets = table.offsets();
        out.push(EnumerationCount {
            metapath: format_metapath(&p, g.schema()),
            instances: table.num_instances(),
            covered_targets: offsets.windows(2).filter(|w| w[1] > w[0]).count(),
            targets: table.targets().len(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckSummary {
    pub max_rel_error: f64,
    /// `(parameter name, max relative error)` in name order.
    pub per_param: Vec<(String, f64)>,
    pub checked: usize,
    pub skipped: usize,
    pub tolerance: f64,
    /// Relative-error denominator floor used; see [`run_gradcheck`].
    pub floor: f64,
    /// Parameter, coordinate, analytic and numeric value of the worst check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradcheckSummary {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

pub const GRADCHECK_TOLERANCE: f64 = 1e-3;
pub const ROUNDOFF_FLOOR_FACTOR: f64 = 1e4;

/// `gradcheck`: central differences on the run's training loss at freshly
/// initialized parameters, with dropout disabled. `coords` caps how many
/// coordinates of each tensor are checked.
///
/// A difference quotient carries roundoff of a few `eps * |loss| / step`,
/// so gradients far below that scale cannot be resolved. The relative
/// error denominator gets a floor of `ROUNDOFF_FLOOR_FACTOR` times that
/// scale; coordinates beneath it are effectively compared in absolute
/// terms.
pub fn run_gradcheck(cfg: &RunConfig, coords: Option<usize>) -> Result<GradcheckSummary> {
    let loaded = load_graph(&cfg.dataset)?;
    let mut exp = experiment(cfg, Arc::new(loaded.graph))?;
    exp.model.dropout = 0.0;
    let prepared = prepare(&exp)?;
    let seeds = SeedTree::new(cfg.seed);
    let params: ModelParams = prepared.model.init_params(&mut seeds.stream("init"))?;
    let negatives = match &prepared.objective {
        Objective::Unsupervised(link) => {
            let g = prepared.model.graph();
            negative_sample(
                &link.exclude,
                g.num_nodes(link.left),
                g.num_nodes(link.right),
                link.train.len() * exp.train.negatives_per_positive,
                &mut seeds.stream("sampling"),
            )?
        }
        Objective::SemiSupervised { .. } => Vec::new(),
    };
    let loss = train::train_loss(&prepared.model, &params, &prepared.objective, &negatives)?;
    let step = GradCheckOptions::default().step;
    let opts = GradCheckOptions {
        max_coords_per_param: coords,
        seed: cfg.seed,
        floor: ROUNDOFF_FLOOR_FACTOR * f64::EPSILON * loss.abs().max(1.0) / step,
        ..GradCheckOptions::default()
    };
    let report = train::objective_gradcheck(&prepared.model, &params, &prepared.objective, &negatives, &opts)?;
    if !report.max_rel_error.is_finite() {
        return Err(Error::Numeric("gradient check produced a non-finite error".into()));
    }
    let names: Vec<String> = params.names().map(String::from).collect();
    let worst = report
        .worst
        .zip(report.worst_values)
        .map(|((p, c), (a, n))| (names[p].clone(), c, a, n));
    Ok(GradcheckSummary {
        max_rel_error: report.max_rel_error,
        worst,
        per_param: names.into_iter().zip(report.per_param).collect(),
        checked: report.checked,
        skipped: report.skipped,
        tolerance: GRADCHECK_TOLERANCE,
        floor: opts.floor,
    })
}

/// `ablation`: every configured variant for `runs` consecutive seeds.
/// Reports go to `reports.jsonl`, tagged with variant and seed.
pub fn run_ablation(cfg: &RunConfig) -> Result<Vec<EvalReport>> {
    let loaded = load_graph(&cfg.dataset)?;
    let graph = Arc::new(loaded.graph.clone());
    let base = experiment(cfg, graph)?;
    let mut reports = Vec::new();
    for run in 0..cfg.ablation.runs as u64 {
        let mut exp = base.clone();
        exp.train.seed = cfg.seed + run;
        for &v in &cfg.ablation.variants {
            reports.extend(ablation_run(v, &exp)?.reports);
        }
    }
    create_dir(&cfg.output)?;
    write_file(&cfg.output.join(REPORTS_FILE), reports_jsonl(&reports).as_bytes())?;
    let mut manifest = Manifest::new("ablation", cfg, &loaded, &base.model.metapaths);
    manifest.artifacts = vec![REPORTS_FILE.to_string()];
    manifest.write(&cfg.output)?;
    Ok(reports)
}

/// Mean of `metric` per variant over reports without a train fraction,
/// in the order variants first appear.
pub fn ablation_table(reports: &[EvalReport], metric: &str) -> Vec<(String, f64)> {
    let mut order: Vec<String> = Vec::new();
    for r in reports {
        if let Some(v) = &r.variant {
            if !order.contains(v) {
                order.push(v.clone());
            }
        }
    }
    order
        .into_iter()
        .filter_map(|v| {
            let vals: Vec<f64> = reports
                .iter()
                .filter(|r| r.variant.as_ref() == Some(&v) && r.train_fraction.is_none())
                .filter_map(|r| r.metric(metric))
                .collect();
            (!vals.is_empty()).then(|| (v, vals.iter().sum::<f64>() / vals.len() as f64))
        })
        .collect()
}

/// `synth`: writes the run's dataset as schema and data files under `dir`.
pub fn run_synth(spec: &DatasetSpec, dir: &Path) -> Result<PathBuf> {
    let loaded = load_graph(spec)?;
    create_dir(dir)?;
    write_dataset(&loaded.graph, dir)
}

/// Parses a variant name as used in reports.
pub fn parse_variant(s: &str) -> Result<Variant> {
    Variant::ALL
        .into_iter()
        .find(|v| v.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::config::TrainSettings;

    fn quick(dir: &Path) -> RunConfig {
        let mut c = RunConfig {
            output: dir.to_path_buf(),
            ..RunConfig::default()
        };
        c.model.hidden_dim = 4;
        c.model.attn_dim = 4;
        c.model.heads = 2;
        c.train = TrainSettings {
            max_epochs: 5,
            patience: 5,
            ..TrainSettings::default()
        };
        c
    }

    #[test]
    fn embeddings_round_trip() {
        let g = toy_graph().unwrap();
        let z = Tensor::matrix(12, 2, (0..24).map(|i| i as f64 / 7.0).collect()).unwrap();
        let text = format_embeddings(&g, &[Some(z.clone()), None, None]).unwrap();
        assert!(text.starts_with("12 2\nA 0 0 0.14285714285714285\n"));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        std::fs::write(&p, &text).unwrap();
        let rows = read_embeddings(&p).unwrap();
        assert_eq!(rows.len(), 12);
        for (v, r) in rows.iter().enumerate() {
            assert_eq!(r.symbol, "A");
            assert_eq!(r.index, v);
            assert_eq!(r.values, z.row(v));
        }
        std::fs::write(&p, "3 2\nA 0 1 2\n").unwrap();
        assert!(read_embeddings(&p).is_err());
    }

    #[test]
    fn train_writes_artifacts_and_manifest_echoes_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick(dir.path());
        let s = run_train(&cfg).unwrap();
        assert_eq!(s.reports[0].task, "classify");
        for f in [CHECKPOINT_FILE, EMBEDDINGS_FILE, REPORTS_FILE, MANIFEST_FILE] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let m = Manifest::read(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(m.config, cfg);
        assert_eq!(m.metapaths, cfg.metapaths);
        assert_eq!(read_reports(&dir.path().join(REPORTS_FILE)).unwrap(), s.reports);
        let rows = read_embeddings(&dir.path().join(EMBEDDINGS_FILE)).unwrap();
        assert_eq!(rows.len(), 12);
        assert_eq!(rows[0].values.len(), 2);

        let again = run_eval(&cfg, &dir.path().join(CHECKPOINT_FILE)).unwrap();
        assert_eq!(again, s.reports);
        let mut other = cfg.clone();
        other.model.heads = 1;
        assert!(matches!(run_eval(&other, &dir.path().join(CHECKPOINT_FILE)), Err(Error::Config(_))));
    }

    #[test]
    fn cluster_task_reports_only_clustering() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            task: TaskSpec::Cluster { target: "A".into() },
            ..quick(dir.path())
        };
        let s = run_train(&cfg).unwrap();
        assert_eq!(s.reports.len(), 1);
        assert_eq!(s.reports[0].task, "cluster");
    }

    #[test]
    fn enumerate_counts_on_toy() {
        let cfg = RunConfig {
            metapaths: vec!["A-B-A".into()],
            ..RunConfig::default()
        };
        let c = run_enumerate(&cfg).unwrap();
        // every A node has two B neighbors, each with two A neighbors
        assert_eq!(c[0].instances, 48);
        assert_eq!(c[0].covered_targets, 12);
        let capped = RunConfig { cap: Some(3), ..cfg };
        assert_eq!(run_enumerate(&capped).unwrap()[0].instances, 36);
    }

    #[test]
    fn unknown_names_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick(dir.path());
        cfg.metapaths = vec!["A-C".into()];
        assert_eq!(run_train(&cfg).unwrap_err().kind(), crate::error::ErrorKind::Config);
        let cfg = RunConfig {
            task: TaskSpec::Classify {
                target: "Z".into(),
                probe: false,
            },
            ..quick(dir.path())
        };
        assert_eq!(run_train(&cfg).unwrap_err().kind(), crate::error::ErrorKind::Config);
    }

    #[test]
    fn ablation_table_averages_per_variant() {
        let mk = |v: &str, x: f64| {
            let mut r = EvalReport::new("classify", 0, 1).with("macro_f1", x);
            r.variant = Some(v.into());
            r
        };
        let t = ablation_table(&[mk("rot", 0.9), mk("nb", 0.5), mk("rot", 0.7)], "macro_f1");
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].0, "rot");
        assert!((t[0].1 - 0.8).abs() < 1e-15);
        assert_eq!(parse_variant("nb").unwrap(), Variant::Nb);
        assert!(parse_variant("x").is_err());
    }
}
