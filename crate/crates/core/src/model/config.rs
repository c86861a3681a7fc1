use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{validate_metapath, Metapath, NodeTypeId, Schema};

/// How a metapath instance is turned into one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    /// Elementwise mean of the node vectors.
    Mean,
    /// Mean followed by a per-metapath linear map.
    Linear,
    /// Cumulative relational rotation in complex space.
    Rotation,
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" | "avg" => Ok(Self::Mean),
            "linear" => Ok(Self::Linear),
            "rotation" | "rot" => Ok(Self::Rotation),
            other => Err(Error::Config(format!("unknown encoder {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Identity,
    Tanh,
    Sigmoid,
    /// Row-wise softmax; only valid on the final output.
    Softmax,
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elu" => Ok(Self::Elu),
            "identity" | "none" => Ok(Self::Identity),
            "tanh" => Ok(Self::Tanh),
            "sigmoid" => Ok(Self::Sigmoid),
            "softmax" => Ok(Self::Softmax),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

/// Architecture of a MAGNN model.
///
/// The metapath list defines, for each node type `A`, the set of metapaths
/// whose target (last) type is `A`. Types targeted by no metapath get no
/// embedding of their own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Per-head hidden width `d'`; must be even for the rotation encoder.
    pub hidden_dim: usize,
    /// Width `d_m` of the inter-metapath attention space.
    pub attn_dim: usize,
    /// Output width `d_o` of the last layer.
    pub out_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub encoder: EncoderKind,
    pub dropout: f64,
    /// Nonlinearity after intra-metapath aggregation and hidden projections.
    pub activation: Activation,
    /// Nonlinearity of the last projection (`softmax` for classification).
    pub output_activation: Activation,
    pub leaky_slope: f64,
    /// Encode only the two endpoints of every instance.
    #[serde(default)]
    pub endpoints_only: bool,
    pub metapaths: Vec<Metapath>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            attn_dim: 128,
            out_dim: 64,
            heads: 8,
            layers: 1,
            encoder: EncoderKind::Rotation,
            dropout: 0.5,
            activation: Activation::Elu,
            output_activation: Activation::Elu,
            leaky_slope: 0.2,
            endpoints_only: false,
            metapaths: Vec::new(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        if self.heads == 0 || self.layers == 0 {
            return Err(Error::Config("heads and layers must be at least 1".into()));
        }
        if self.hidden_dim == 0 || self.attn_dim == 0 || self.out_dim == 0 {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        if !self.hidden_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "hidden dim {} must be even (complex interpretation)",
                self.hidden_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if self.activation == Activation::Softmax {
            return Err(Error::Config("softmax is only allowed as the output activation".into()));
        }
        if self.metapaths.is_empty() {
            return Err(Error::Config("no metapaths configured".into()));
        }
        for p in &self.metapaths {
            validate_metapath(schema, p)?;
        }
        Ok(())
    }

    /// Metapath indices grouped by target type, indexed by type id.
    pub fn metapaths_by_target(&self, num_types: usize) -> Vec<Vec<usize>> {
        let mut by = vec![Vec::new(); num_types];
        for (i, p) in self.metapaths.iter().enumerate() {
            by[p.target_type().0].push(i);
        }
        by
    }

    /// Types that some metapath visits, in id order.
    pub fn used_types(&self, num_types: usize) -> Vec<NodeTypeId> {
        let mut used = vec![false; num_types];
        for p in &self.metapaths {
            for t in p.types() {
                used[t.0] = true;
            }
        }
        (0..num_types).filter(|&t| used[t]).map(NodeTypeId).collect()
    }

    /// Width of a fused metapath vector, `K * d'`.
    pub fn fused_dim(&self) -> usize {
        self.heads * self.hidden_dim
    }
}
