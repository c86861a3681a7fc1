use std::collections::BTreeMap;

use rand::Rng;

use super::config::{EncoderKind, ModelConfig};
use crate::error::{Error, Result};
use crate::graph::{HetGraph, NodeTypeId, RelationId, Schema};
use crate::tensor::{Tape, Tensor, Var};

/// All learnable tensors of a model, keyed by name.
///
/// Names follow a fixed scheme so checkpoints and gradient reports stay
/// readable:
///
/// | name | shape | role |
/// |------|-------|------|
/// | `content.{A}` | `d' x d_A` | type-specific content projection |
/// | `l{l}.attn.{p}` | `K x 2d'` | intra-metapath attention, one row per head |
/// | `l{l}.enc.{p}` | `d' x d'` | linear instance encoder |
/// | `l{l}.rel.{r}` | `1 x d'/2` | rotation phases of relation `r` |
/// | `l{l}.inter.{A}.m` | `d_m x K d'` | inter-metapath projection |
/// | `l{l}.inter.{A}.b` | `1 x d_m` | inter-metapath bias |
/// | `l{l}.inter.{A}.q` | `1 x d_m` | inter-metapath attention vector |
/// | `l{l}.out` | `d' x K d'` (hidden) or `d_o x K d'` (last) | layer output projection |
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    tensors: BTreeMap<String, Tensor>,
}

pub fn content_name(schema: &Schema, ty: NodeTypeId) -> String {
    format!("content.{}", schema.node_type(ty).symbol)
}

pub fn attn_name(layer: usize, path: usize) -> String {
    format!("l{layer}.attn.{path}")
}

pub fn enc_name(layer: usize, path: usize) -> String {
    format!("l{layer}.enc.{path}")
}

pub fn rel_name(layer: usize, rel: RelationId) -> String {
    format!("l{layer}.rel.{}", rel.0)
}

pub fn inter_name(layer: usize, schema: &Schema, ty: NodeTypeId, part: &str) -> String {
    format!("l{layer}.inter.{}.{part}", schema.node_type(ty).symbol)
}

pub fn out_name(layer: usize) -> String {
    format!("l{layer}.out")
}

fn glorot<R: Rng>(rng: &mut R, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::matrix(rows, cols, data).expect("shape")
}

impl ModelParams {
    pub fn from_map(tensors: BTreeMap<String, Tensor>) -> Self {
        Self { tensors }
    }

    /// Fresh parameters for `config` on `graph`.
    ///
    /// Matrices and attention vectors use Glorot-uniform scaling, phases are
    /// uniform in `[-pi, pi)`, biases start at zero.
    pub fn init<R: Rng>(graph: &HetGraph, config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let schema = graph.schema();
        config.validate(schema)?;
        let d = config.hidden_dim;
        let kd = config.fused_dim();
        let nt = schema.num_types();
        let by_target = config.metapaths_by_target(nt);
        let mut t = BTreeMap::new();

        for ty in config.used_types(nt) {
            let da = graph.features(ty).dim();
            if da == 0 {
                return Err(Error::Dimension(format!(
                    "type {} has zero-width features",
                    schema.node_type(ty).symbol
                )));
            }
            t.insert(content_name(schema, ty), glorot(rng, d, da, da, d));
        }

        let mut rels: Vec<RelationId> = config
            .metapaths
            .iter()
            .flat_map(|p| p.relations().iter().copied())
            .collect();
        rels.sort();
        rels.dedup();

        for l in 0..config.layers {
            for p in 0..config.metapaths.len() {
                t.insert(attn_name(l, p), glorot(rng, config.heads, 2 * d, 2 * d, 1));
                if config.encoder == EncoderKind::Linear {
                    t.insert(enc_name(l, p), glorot(rng, d, d, d, d));
                }
            }
            if config.encoder == EncoderKind::Rotation {
                for &r in &rels {
                    let data = (0..d / 2)
                        .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
                        .collect();
                    t.insert(rel_name(l, r), Tensor::row_vector(data));
                }
            }
            for (ty, paths) in by_target.iter().enumerate() {
                if paths.is_empty() {
                    continue;
                }
                let ty = NodeTypeId(ty);
                let dm = config.attn_dim;
                t.insert(inter_name(l, schema, ty, "m"), glorot(rng, dm, kd, kd, dm));
                t.insert(inter_name(l, schema, ty, "b"), Tensor::zeros(&[1, dm]));
                t.insert(inter_name(l, schema, ty, "q"), glorot(rng, 1, dm, dm, 1));
            }
            let out = if l + 1 == config.layers { config.out_dim } else { d };
            t.insert(out_name(l), glorot(rng, out, kd, kd, out));
        }
        Ok(Self { tensors: t })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Records every tensor on `tape` as a trainable leaf.
    pub fn register(&self, tape: &mut Tape) -> ParamVars {
        ParamVars {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), tape.param(v.clone())))
                .collect(),
        }
    }

    /// Like [`ModelParams::register`], but as constants (no gradients).
    pub fn register_frozen(&self, tape: &mut Tape) -> ParamVars {
        ParamVars {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), tape.constant(v.clone())))
                .collect(),
        }
    }
}

/// Tape handles of a registered [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    pub fn from_map(vars: BTreeMap<String, Var>) -> Self {
        Self { vars }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("missing parameter {name:?}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}
