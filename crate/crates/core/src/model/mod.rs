//! The MAGNN network: content projection, instance encoding, intra- and
//! inter-metapath attention, and the per-layer output projection.
//!
//! A [`Magnn`] binds a configuration to a graph and one complete
//! [`InstanceTable`] per metapath. Parameters live outside the model in a
//! [`ModelParams`] map so the same model can be evaluated with frozen or
//! trainable weights.

pub mod checkpoint;
pub mod config;
pub mod layers;
pub mod params;

use std::sync::Arc;

pub use config::{Activation, EncoderKind, ModelConfig};
pub use params::{ModelParams, ParamVars};

use crate::error::{Error, Result};
use crate::graph::{Direction, HetGraph, NodeTypeId};
use crate::metapath::{enumerate_all, InstanceTable};
use crate::rng::Rng;
use crate::tensor::{SegmentLayout, Tape, Tensor, Var};
use layers::{InstanceEncoder, RotationStep};

/// Index data of one metapath, precomputed once.
#[derive(Debug, Clone)]
struct PathPlan {
    /// Per position `t_i`, the local node index of every instance.
    columns: Vec<Arc<[usize]>>,
    layout: Arc<SegmentLayout>,
    directions: Vec<Direction>,
}

/// A configured model over a fixed graph.
#[derive(Debug, Clone)]
pub struct Magnn {
    graph: Arc<HetGraph>,
    config: ModelConfig,
    tables: Vec<Arc<InstanceTable>>,
    plans: Vec<PathPlan>,
    by_target: Vec<Vec<usize>>,
}

/// Everything a forward pass exposes, as tape handles.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Final outputs `z` per type (`n_A x d_o`); `None` for types no
    /// metapath targets.
    pub outputs: Vec<Option<Var>>,
    /// Fused metapath vectors of the last layer (`n_A x K d'`).
    pub fused: Vec<Option<Var>>,
    /// Intra-metapath weights, `[layer][metapath]`, each `n_inst x K`.
    pub alphas: Vec<Vec<Var>>,
    /// Inter-metapath weights, `[layer][type]`, each `M_A x 1`.
    pub betas: Vec<Vec<Option<Var>>>,
    /// Metapath-specific node vectors, `[layer][metapath]`.
    pub metapath_vectors: Vec<Vec<Var>>,
}

impl Magnn {
    /// Binds `config` to `graph` with precomputed instance tables, one per
    /// configured metapath and covering every node of its target type.
    pub fn new(graph: Arc<HetGraph>, config: ModelConfig, tables: Vec<Arc<InstanceTable>>) -> Result<Self> {
        config.validate(graph.schema())?;
        if tables.len() != config.metapaths.len() {
            return Err(Error::Config(format!(
                "{} instance tables for {} metapaths",
                tables.len(),
                config.metapaths.len()
            )));
        }
        let mut plans = Vec::with_capacity(tables.len());
        for (p, t) in config.metapaths.iter().zip(&tables) {
            if t.metapath().types() != p.types() || t.metapath().relations() != p.relations() {
                return Err(Error::Config(format!(
                    "instance table for {} does not match its metapath",
                    p.display(graph.schema())
                )));
            }
            let n = graph.num_nodes(p.target_type());
            if t.targets().len() != n || t.targets().iter().enumerate().any(|(i, &v)| i != v) {
                return Err(Error::Config(format!(
                    "instance table for {} must cover all {n} targets in order",
                    p.display(graph.schema())
                )));
            }
            plans.push(PathPlan {
                columns: (0..t.width()).map(|i| Arc::from(t.column(i))).collect(),
                layout: Arc::new(t.layout()),
                directions: p.directions(graph.schema()),
            });
        }
        let by_target = config.metapaths_by_target(graph.schema().num_types());
        Ok(Self {
            graph,
            config,
            tables,
            plans,
            by_target,
        })
    }

    /// Enumerates uncapped tables for every metapath and builds the model.
    pub fn with_enumeration(graph: Arc<HetGraph>, config: ModelConfig, cap: Option<usize>, seed: u64) -> Result<Self> {
        let tables = config
            .metapaths
            .iter()
            .map(|p| enumerate_all(&graph, p, cap, seed).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        Self::new(graph, config, tables)
    }

    pub fn graph(&self) -> &HetGraph {
        &self.graph
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tables(&self) -> &[Arc<InstanceTable>] {
        &self.tables
    }

    /// Same graph and tables with a different configuration; the metapath
    /// list must be a subset of this model's.
    pub fn restricted(&self, config: ModelConfig) -> Result<Self> {
        let tables = config
            .metapaths
            .iter()
            .map(|p| {
                self.config
                    .metapaths
                    .iter()
                    .position(|q| q == p)
                    .map(|i| self.tables[i].clone())
                    .ok_or_else(|| Error::Config("metapath not enumerated by the parent model".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.graph.clone(), config, tables)
    }

    /// Fresh parameters for this model.
    pub fn init_params(&self, rng: &mut Rng) -> Result<ModelParams> {
        ModelParams::init(&self.graph, &self.config, rng)
    }

    fn encoder(&self, layer: usize, path: usize, params: &ParamVars) -> Result<InstanceEncoder> {
        Ok(match self.config.encoder {
            EncoderKind::Mean => InstanceEncoder::Mean,
            EncoderKind::Linear => InstanceEncoder::Linear(params.get(&params::enc_name(layer, path))?),
            EncoderKind::Rotation => {
                let p = &self.config.metapaths[path];
                let steps = p
                    .relations()
                    .iter()
                    .zip(&self.plans[path].directions)
                    .map(|(&r, &direction)| {
                        Ok(RotationStep {
                            phases: params.get(&params::rel_name(layer, r))?,
                            direction,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                InstanceEncoder::Rotation(steps)
            }
        })
    }

    /// Runs all layers on `tape`.
    ///
    /// Dropout is active only on a training tape and draws from `rng`.
    pub fn forward(&self, tape: &mut Tape, params: &ParamVars, rng: &mut Rng) -> Result<ForwardOutput> {
        let schema = self.graph.schema();
        let nt = schema.num_types();
        let cfg = &self.config;
        let d = cfg.hidden_dim;

        let mut current: Vec<Option<Var>> = vec![None; nt];
        for ty in cfg.used_types(nt) {
            let w = params.get(&params::content_name(schema, ty))?;
            current[ty.0] = Some(layers::content_transform(tape, self.graph.features(ty), w)?);
        }

        let mut alphas = Vec::with_capacity(cfg.layers);
        let mut betas = Vec::with_capacity(cfg.layers);
        let mut vectors = Vec::with_capacity(cfg.layers);
        let mut fused_last = vec![None; nt];

        for l in 0..cfg.layers {
            let last = l + 1 == cfg.layers;
            let mut input: Vec<Option<Var>> = vec![None; nt];
            for (t, cur) in current.iter().enumerate() {
                if let Some(x) = cur {
                    input[t] = Some(tape.dropout(*x, cfg.dropout, rng)?);
                }
            }

            let mut layer_alpha = Vec::with_capacity(cfg.metapaths.len());
            let mut layer_vec = Vec::with_capacity(cfg.metapaths.len());
            for (pi, path) in cfg.metapaths.iter().enumerate() {
                let plan = &self.plans[pi];
                let mut positions = Vec::with_capacity(plan.columns.len());
                for (ty, col) in path.types().iter().zip(&plan.columns) {
                    let x = input[ty.0].ok_or_else(|| missing(schema.node_type(*ty).symbol.as_str()))?;
                    positions.push(tape.gather_rows(x, col.clone())?);
                }
                let encoder = self.encoder(l, pi, params)?;
                let encoded = layers::encode_instances(tape, &positions, &encoder, cfg.endpoints_only)?;
                let target_rows = *positions.last().expect("width >= 2");
                let attn = params.get(&params::attn_name(l, pi))?;
                let (h, alpha) = layers::intra_metapath_aggregate(
                    tape,
                    target_rows,
                    encoded,
                    attn,
                    plan.layout.clone(),
                    cfg.leaky_slope,
                    cfg.activation,
                )?;
                layer_alpha.push(alpha);
                layer_vec.push(h);
            }

            let w_out = params.get(&params::out_name(l))?;
            let act = if last { cfg.output_activation } else { cfg.activation };
            let mut next = current.clone();
            let mut layer_beta = vec![None; nt];
            for (t, paths) in self.by_target.iter().enumerate() {
                if paths.is_empty() {
                    continue;
                }
                let ty = NodeTypeId(t);
                let hs: Vec<Var> = paths.iter().map(|&p| layer_vec[p]).collect();
                let m = params.get(&params::inter_name(l, schema, ty, "m"))?;
                let b = params.get(&params::inter_name(l, schema, ty, "b"))?;
                let q = params.get(&params::inter_name(l, schema, ty, "q"))?;
                let (fused, beta) = layers::inter_metapath_aggregate(tape, &hs, m, b, q)?;
                layer_beta[t] = Some(beta);
                if last {
                    fused_last[t] = Some(fused);
                }
                next[t] = Some(layers::output_projection(tape, fused, w_out, act)?);
            }
            if !last {
                for (t, v) in next.iter().enumerate() {
                    if let Some(v) = v {
                        if tape.value(*v).cols() != d {
                            return Err(Error::shape("forward", format!("type {t} hidden width")));
                        }
                    }
                }
            }
            current = next;
            alphas.push(layer_alpha);
            betas.push(layer_beta);
            vectors.push(layer_vec);
        }

        let outputs = (0..nt)
            .map(|t| if self.by_target[t].is_empty() { None } else { current[t] })
            .collect();
        Ok(ForwardOutput {
            outputs,
            fused: fused_last,
            alphas,
            betas,
            metapath_vectors: vectors,
        })
    }

    /// Evaluation-mode forward pass returning plain tensors:
    /// `(outputs, fused)` per type.
    pub fn evaluate(&self, params: &ModelParams) -> Result<(Vec<Option<Tensor>>, Vec<Option<Tensor>>)> {
        let mut tape = Tape::new();
        let vars = params.register_frozen(&mut tape);
        // dropout is inert on an evaluation tape, so the stream is irrelevant
        let mut rng = crate::rng::SeedTree::new(0).stream("unused");
        let out = self.forward(&mut tape, &vars, &mut rng)?;
        let grab = |v: &Vec<Option<Var>>| v.iter().map(|x| x.map(|x| tape.value(x).clone())).collect();
        Ok((grab(&out.outputs), grab(&out.fused)))
    }
}

fn missing(symbol: &str) -> Error {
    Error::Config(format!("type {symbol} has no representation at this layer"))
}
