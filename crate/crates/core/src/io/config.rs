//! Run configuration, read from TOML and echoed into run manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{LinkSynthConfig, SynthConfig, Variant};
use crate::model::{Activation, EncoderKind, ModelConfig};
use crate::train::TrainConfig;

/// Where the graph comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    /// A schema file plus data files; see [`super::dataset`].
    Files {
        schema: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data_dir: Option<PathBuf>,
    },
    /// The small built-in graph of [`super::toy_graph`].
    Toy,
    /// [`crate::eval::synth_hetgraph`] generated in memory.
    Synth(SynthConfig),
    /// [`crate::eval::synth_link_graph`] generated in memory.
    SynthLink(LinkSynthConfig),
}

/// What a run trains for and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TaskSpec {
    /// Semi-supervised classification of the type with this symbol.
    /// With `probe`, also the linear probe and clustering protocols,
    /// which need a few labeled test nodes per class.
    Classify {
        target: String,
        #[serde(default)]
        probe: bool,
    },
    /// Semi-supervised training scored by k-means clustering of the
    /// test embeddings only.
    Cluster { target: String },
    /// Unsupervised training on the named relation, scored by link
    /// prediction on held-out edges of that relation.
    LinkPred {
        relation: String,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
}

fn default_val_fraction() -> f64 {
    0.1
}

fn default_test_fraction() -> f64 {
    0.2
}

/// [`ModelConfig`] without the metapaths, which a run gives as text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub hidden_dim: usize,
    pub attn_dim: usize,
    pub out_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub encoder: EncoderKind,
    pub dropout: f64,
    pub activation: Activation,
    pub output_activation: Activation,
    pub leaky_slope: f64,
    pub endpoints_only: bool,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            hidden_dim: m.hidden_dim,
            attn_dim: m.attn_dim,
            out_dim: m.out_dim,
            heads: m.heads,
            layers: m.layers,
            encoder: m.encoder,
            dropout: m.dropout,
            activation: m.activation,
            output_activation: m.output_activation,
            leaky_slope: m.leaky_slope,
            endpoints_only: m.endpoints_only,
        }
    }
}

impl ModelSettings {
    pub fn to_model_config(&self, metapaths: Vec<crate::graph::Metapath>) -> ModelConfig {
        ModelConfig {
            hidden_dim: self.hidden_dim,
            attn_dim: self.attn_dim,
            out_dim: self.out_dim,
            heads: self.heads,
            layers: self.layers,
            encoder: self.encoder,
            dropout: self.dropout,
            activation: self.activation,
            output_activation: self.output_activation,
            leaky_slope: self.leaky_slope,
            endpoints_only: self.endpoints_only,
            metapaths,
        }
    }
}

/// [`TrainConfig`] without the seed, which lives at the top of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub negatives_per_positive: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            max_epochs: t.max_epochs,
            patience: t.patience,
            negatives_per_positive: t.negatives_per_positive,
        }
    }
}

impl TrainSettings {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
            negatives_per_positive: self.negatives_per_positive,
        }
    }
}

/// Settings of the `ablation` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSettings {
    pub variants: Vec<Variant>,
    /// Seeds `seed, seed + 1, ..` each get one run per variant.
    pub runs: usize,
}

impl Default for AblationSettings {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
            runs: 1,
        }
    }
}

/// Everything one CLI run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    /// Metapaths in text form, e.g. `"M-D-M"`.
    pub metapaths: Vec<String>,
    pub task: TaskSpec,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub ablation: AblationSettings,
    /// Sample at most this many instances per target and metapath.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("magnn-out")
}

impl Default for RunConfig {
    /// Classification on the bundled toy graph.
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::Toy,
            metapaths: vec!["A-B-A".into(), "A-B-C-B-A".into()],
            task: TaskSpec::Classify {
                target: "A".into(),
                probe: false,
            },
            model: ModelSettings::default(),
            train: TrainSettings::default(),
            ablation: AblationSettings::default(),
            cap: None,
            seed: 0,
            output: default_output(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("run config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn train_config(&self) -> TrainConfig {
        self.train.to_train_config(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.metapaths.is_empty() {
            return Err(Error::Config("no metapaths configured".into()));
        }
        self.train_config().validate()?;
        if self.ablation.runs == 0 {
            return Err(Error::Config("ablation runs must be at least 1".into()));
        }
        if let TaskSpec::LinkPred {
            val_fraction,
            test_fraction,
            ..
        } = &self.task
        {
            if !(*val_fraction > 0.0 && *test_fraction > 0.0 && val_fraction + test_fraction < 1.0) {
                return Err(Error::Config("link fractions must be positive and sum below 1".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_protocol() {
        let c = RunConfig::default();
        assert_eq!(c.train.learning_rate, 0.005);
        assert_eq!(c.train.weight_decay, 0.001);
        assert_eq!(c.model.dropout, 0.5);
        assert_eq!(c.model.heads, 8);
        assert_eq!(c.model.attn_dim, 128);
        assert_eq!(c.model.hidden_dim, 64);
        assert_eq!(c.train.max_epochs, 100);
        assert_eq!(c.train.patience, 30);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn toml_and_json_round_trip() {
        let mut c = RunConfig {
            dataset: DatasetSpec::Synth(SynthConfig {
                feature_noise: 0.3,
                ..SynthConfig::default()
            }),
            metapaths: vec!["M-D-M".into(), "M-A-M".into()],
            task: TaskSpec::LinkPred {
                relation: "M-D".into(),
                val_fraction: 0.15,
                test_fraction: 0.25,
            },
            cap: Some(7),
            seed: 42,
            ..RunConfig::default()
        };
        c.model.encoder = EncoderKind::Linear;
        c.ablation.variants = vec![Variant::Rot, Variant::Nb];
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), c);
        let files = RunConfig {
            dataset: DatasetSpec::Files {
                schema: "data/schema.toml".into(),
                data_dir: None,
            },
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_toml(&files.to_toml()).unwrap(), files);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let c = RunConfig::from_toml(
            r#"
metapaths = ["A-B-A"]
seed = 3

[dataset]
kind = "toy"

[task]
kind = "classify"
target = "A"

[model]
heads = 2
"#,
        )
        .unwrap();
        assert_eq!(c.model.heads, 2);
        assert_eq!(c.model.hidden_dim, 64);
        assert_eq!(c.train, TrainSettings::default());
        assert_eq!(c.output, PathBuf::from("magnn-out"));
        assert!(matches!(c.task, TaskSpec::Classify { probe: false, .. }));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(RunConfig::from_toml("metapaths = []\nbogus = 1\n[dataset]\nkind=\"toy\"\n[task]\nkind=\"cluster\"\ntarget=\"A\"").is_err());
        let mut c = RunConfig::default();
        c.metapaths.clear();
        assert!(c.validate().is_err());
        let c = RunConfig {
            task: TaskSpec::LinkPred {
                relation: "A-B".into(),
                val_fraction: 0.5,
                test_fraction: 0.5,
            },
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
