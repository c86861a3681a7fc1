//! `magnn`: the command-line front end over the run pipeline.
//!
//! Every command builds a [`RunConfig`] from an optional TOML file and then
//! applies flag overrides. Exit codes: 0 success, 2 configuration error,
//! 3 data error, 4 numeric failure (including a failed gradient check).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use magnn::error::ErrorKind;
use magnn::eval::{LinkSynthConfig, SynthConfig};
use magnn::io::run::{
    ablation_table, parse_variant, run_ablation, run_enumerate, run_eval, run_gradcheck, run_synth, run_train,
    CHECKPOINT_FILE,
};
use magnn::io::dataset::SchemaFile;
use magnn::io::{DatasetSpec, RunConfig, TaskSpec};
use magnn::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "magnn", version, about = "Train and evaluate metapath-instance graph networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model, then write checkpoint, embeddings, reports and manifest.
    Train(RunArgs),
    /// Score a saved checkpoint under the configured task.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Defaults to checkpoint.bin in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Count metapath instances per metapath.
    Enumerate(RunArgs),
    /// Compare analytic gradients with central differences.
    Gradcheck {
        #[command(flatten)]
        run: RunArgs,
        /// Check at most this many coordinates per parameter tensor.
        #[arg(long)]
        coords: Option<usize>,
    },
    /// Run ablation variants over consecutive seeds.
    Ablation {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated subset of feat,nb,sm,avg,linear,rot.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Write the configured dataset (synthetic by default) as files.
    Synth {
        #[command(flatten)]
        run: RunArgs,
        /// Directory for schema.toml and data files.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// TOML run configuration; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Use the bundled toy graph.
    #[arg(long, group = "data")]
    toy: bool,
    /// Use the synthetic movie graph.
    #[arg(long, group = "data")]
    synth: bool,
    /// Use the synthetic user-artist graph.
    #[arg(long, group = "data")]
    synth_link: bool,
    /// Schema file of a dataset on disk.
    #[arg(long, group = "data")]
    schema: Option<PathBuf>,
    /// Directory of the data files; defaults to the schema's directory.
    #[arg(long, requires = "schema")]
    data_dir: Option<PathBuf>,
    /// Seed of the synthetic generators.
    #[arg(long)]
    data_seed: Option<u64>,

    /// Metapath such as M-D-M; repeat for several. Replaces the configured list.
    #[arg(long = "metapath")]
    metapaths: Vec<String>,

    /// classify, cluster or linkpred.
    #[arg(long)]
    task: Option<String>,
    /// Symbol of the classified or clustered type.
    #[arg(long)]
    target: Option<String>,
    /// Relation of a link prediction task, by name or as S-T.
    #[arg(long)]
    relation: Option<String>,
    /// Also run the linear probe and clustering after classification.
    #[arg(long)]
    probe: bool,

    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    attn_dim: Option<usize>,
    #[arg(long)]
    out_dim: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    /// rotation, mean or linear.
    #[arg(long)]
    encoder: Option<String>,
    #[arg(long)]
    dropout: Option<f64>,

    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,

    /// Sample at most this many instances per target and metapath.
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self, default_dataset: DatasetSpec) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig {
                dataset: default_dataset,
                ..RunConfig::default()
            },
        };
        if self.toy {
            cfg.dataset = DatasetSpec::Toy;
        } else if self.synth {
            cfg.dataset = DatasetSpec::Synth(SynthConfig::default());
        } else if self.synth_link {
            cfg.dataset = DatasetSpec::SynthLink(LinkSynthConfig::default());
        } else if let Some(schema) = &self.schema {
            cfg.dataset = DatasetSpec::Files {
                schema: schema.clone(),
                data_dir: self.data_dir.clone(),
            };
        }
        if let Some(seed) = self.data_seed {
            match &mut cfg.dataset {
                DatasetSpec::Synth(c) => c.seed = seed,
                DatasetSpec::SynthLink(c) => c.seed = seed,
                _ => return Err(Error::Config("--data-seed needs a synthetic dataset".into())),
            }
        }
        if !self.metapaths.is_empty() {
            cfg.metapaths = self.metapaths.clone();
        } else if self.config.is_none() {
            cfg.metapaths = default_metapaths(&cfg.dataset);
        }
        self.apply_task(&mut cfg)?;

        let m = &mut cfg.model;
        set(&mut m.hidden_dim, self.hidden_dim);
        set(&mut m.attn_dim, self.attn_dim);
        set(&mut m.out_dim, self.out_dim);
        set(&mut m.heads, self.heads);
        set(&mut m.layers, self.layers);
        set(&mut m.dropout, self.dropout);
        if let Some(e) = &self.encoder {
            m.encoder = e.parse()?;
        }
        let t = &mut cfg.train;
        set(&mut t.learning_rate, self.lr);
        set(&mut t.weight_decay, self.weight_decay);
        set(&mut t.max_epochs, self.epochs);
        set(&mut t.patience, self.patience);
        if self.cap.is_some() {
            cfg.cap = self.cap;
        }
        set(&mut cfg.seed, self.seed);
        if let Some(o) = &self.output {
            cfg.output = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_task(&self, cfg: &mut RunConfig) -> Result<()> {
        let kind = match (&self.task, self.config.is_some()) {
            (Some(k), _) => k.as_str(),
            (None, true) => return self.patch_task(cfg),
            (None, false) => default_task(&cfg.dataset),
        };
        let target = || match &self.target {
            Some(t) => Ok(t.clone()),
            None => default_target(&cfg.dataset)?.ok_or_else(|| Error::Config("--target is required".into())),
        };
        cfg.task = match kind {
            "classify" => TaskSpec::Classify {
                target: target()?,
                probe: self.probe,
            },
            "cluster" => TaskSpec::Cluster { target: target()? },
            "linkpred" => TaskSpec::LinkPred {
                relation: self
                    .relation
                    .clone()
                    .or_else(|| default_relation(&cfg.dataset))
                    .ok_or_else(|| Error::Config("--relation is required".into()))?,
                val_fraction: 0.1,
                test_fraction: 0.2,
            },
            other => return Err(Error::Config(format!("unknown task {other:?}"))),
        };
        Ok(())
    }

    /// Flag overrides on the task of a config file.
    fn patch_task(&self, cfg: &mut RunConfig) -> Result<()> {
        match &mut cfg.task {
            TaskSpec::Classify { target, probe } => {
                set(target, self.target.clone());
                *probe |= self.probe;
            }
            TaskSpec::Cluster { target } => set(target, self.target.clone()),
            TaskSpec::LinkPred { relation, .. } => set(relation, self.relation.clone()),
        }
        Ok(())
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn default_metapaths(d: &DatasetSpec) -> Vec<String> {
    let v: &[&str] = match d {
        DatasetSpec::Synth(_) => &["M-D-M", "M-A-M"],
        DatasetSpec::SynthLink(_) => &["U-A-U", "A-U-A"],
        DatasetSpec::Toy | DatasetSpec::Files { .. } => return RunConfig::default().metapaths,
    };
    v.iter().map(|s| s.to_string()).collect()
}

fn default_task(d: &DatasetSpec) -> &'static str {
    match d {
        DatasetSpec::SynthLink(_) => "linkpred",
        _ => "classify",
    }
}

/// The labeled type of the dataset; for files, the first type with a
/// labels file.
fn default_target(d: &DatasetSpec) -> Result<Option<String>> {
    Ok(match d {
        DatasetSpec::Toy => Some("A".into()),
        DatasetSpec::Synth(_) => Some("M".into()),
        DatasetSpec::SynthLink(_) => None,
        DatasetSpec::Files { schema, .. } => {
            let file = SchemaFile::load(schema)?;
            file.node_types.into_iter().find(|t| t.labels.is_some()).map(|t| t.symbol)
        }
    })
}

fn default_relation(d: &DatasetSpec) -> Option<String> {
    match d {
        DatasetSpec::SynthLink(_) => Some("U-A".into()),
        _ => None,
    }
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::Train(args) => {
            let cfg = args.resolve(DatasetSpec::Toy)?;
            let s = run_train(&cfg)?;
            print_warnings(&s.warnings);
            println!(
                "trained {} epochs, best epoch {} (validation loss {})",
                s.train.epochs_run,
                s.train.best_epoch,
                s.train.val_loss[s.train.best_epoch - 1]
            );
            for r in &s.reports {
                println!("{}", r.to_json_line());
            }
            println!("artifacts in {}", s.output.display());
        }
        Command::Eval { run, checkpoint } => {
            let cfg = run.resolve(DatasetSpec::Toy)?;
            let path = checkpoint.unwrap_or_else(|| cfg.output.join(CHECKPOINT_FILE));
            for r in run_eval(&cfg, &path)? {
                println!("{}", r.to_json_line());
            }
        }
        Command::Enumerate(args) => {
            let cfg = args.resolve(DatasetSpec::Toy)?;
            for c in run_enumerate(&cfg)? {
                println!(
                    "{}\tinstances {}\ttargets {}/{}",
                    c.metapath, c.instances, c.covered_targets, c.targets
                );
            }
        }
        Command::Gradcheck { run, coords } => {
            let cfg = run.resolve(DatasetSpec::Toy)?;
            let s = run_gradcheck(&cfg, coords)?;
            for (name, err) in &s.per_param {
                println!("{name}\t{err:e}");
            }
            if let Some((name, c, a, n)) = &s.worst {
                println!("worst {name}[{c}]: analytic {a:e}, numeric {n:e}");
            }
            println!(
                "max relative error {:e} over {} coordinates ({} skipped at kinks, floor {:e})",
                s.max_rel_error, s.checked, s.skipped, s.floor
            );
            if !s.passed() {
                eprintln!("gradient check failed: tolerance {:e}", s.tolerance);
                return Ok(ExitCode::from(4));
            }
        }
        Command::Ablation { run, variants, runs } => {
            let mut cfg = run.resolve(DatasetSpec::Synth(SynthConfig::default()))?;
            if let Some(v) = variants {
                cfg.ablation.variants = v.iter().map(|s| parse_variant(s)).collect::<Result<_>>()?;
            }
            set(&mut cfg.ablation.runs, runs);
            cfg.validate()?;
            let reports = run_ablation(&cfg)?;
            let metric = match cfg.task {
                TaskSpec::LinkPred { .. } => "auc",
                TaskSpec::Cluster { .. } => "nmi",
                TaskSpec::Classify { .. } => "macro_f1",
            };
            for (variant, mean) in ablation_table(&reports, metric) {
                println!("{variant}\t{metric} {mean:.4}");
            }
        }
        Command::Synth { run, out } => {
            let cfg = run.resolve(DatasetSpec::Synth(SynthConfig::default()))?;
            let schema = run_synth(&cfg.dataset, &out)?;
            println!("wrote {}", schema.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numeric => 4,
            })
        }
    }
}
