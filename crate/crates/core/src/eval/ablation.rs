//! Model variants used to attribute performance to model components.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{run_experiment, EvalReport, Experiment, Outcome, Task};
use crate::error::{Error, Result};
use crate::graph::NodeTypeId;
use crate::model::EncoderKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Every node type gets one-hot identity features.
    Feat,
    /// Instance encoders see only the two endpoints.
    Nb,
    /// Only the single metapath per type with the best validation loss.
    Sm,
    /// Mean instance encoder.
    Avg,
    /// Linear instance encoder.
    Linear,
    /// Relational rotation encoder; the reference model.
    Rot,
}

impl Variant {
    pub const ALL: [Variant; 6] = [Self::Feat, Self::Nb, Self::Sm, Self::Avg, Self::Linear, Self::Rot];

    pub fn name(self) -> &'static str {
        match self {
            Self::Feat => "feat",
            Self::Nb => "nb",
            Self::Sm => "sm",
            Self::Avg => "avg",
            Self::Linear => "linear",
            Self::Rot => "rot",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn task_types(exp: &Experiment) -> Vec<NodeTypeId> {
    match &exp.task {
        Task::Classify { target } => vec![*target],
        Task::LinkPred { relation, .. } => {
            let r = exp.graph.schema().relation(*relation);
            let mut t = vec![r.source, r.target];
            t.dedup();
            t
        }
    }
}

/// Every way to keep exactly one metapath per task type.
fn single_metapath_choices(exp: &Experiment) -> Result<Vec<Vec<usize>>> {
    let mut choices: Vec<Vec<usize>> = vec![Vec::new()];
    for ty in task_types(exp) {
        let mine: Vec<usize> = exp
            .model
            .metapaths
            .iter()
            .enumerate()
            .filter(|(_, p)| p.target_type() == ty)
            .map(|(i, _)| i)
            .collect();
        if mine.is_empty() {
            return Err(Error::Config("a task type has no metapath".into()));
        }
        choices = choices
            .into_iter()
            .flat_map(|c| {
                mine.iter().map(move |&m| {
                    let mut c = c.clone();
                    c.push(m);
                    c
                })
            })
            .collect();
    }
    Ok(choices)
}

/// Applies `variant` to `base` and runs it. Reports are tagged with the
/// variant name.
pub fn ablation_run(variant: Variant, base: &Experiment) -> Result<Outcome> {
    let mut exp = base.clone();
    exp.model.encoder = EncoderKind::Rotation;
    exp.model.endpoints_only = false;
    let mut outcome = match variant {
        Variant::Rot => run_experiment(&exp)?,
        Variant::Avg => {
            exp.model.encoder = EncoderKind::Mean;
            run_experiment(&exp)?
        }
        Variant::Linear => {
            exp.model.encoder = EncoderKind::Linear;
            run_experiment(&exp)?
        }
        Variant::Nb => {
            exp.model.endpoints_only = true;
            run_experiment(&exp)?
        }
        Variant::Feat => {
            exp.graph = Arc::new(exp.graph.with_identity_features());
            run_experiment(&exp)?
        }
        Variant::Sm => {
            let mut best: Option<Outcome> = None;
            for choice in single_metapath_choices(&exp)? {
                let mut e = exp.clone();
                e.model.metapaths = choice.iter().map(|&i| exp.model.metapaths[i].clone()).collect();
                let o = run_experiment(&e)?;
                if best.as_ref().is_none_or(|b| o.best_val_loss < b.best_val_loss) {
                    best = Some(o);
                }
            }
            best.expect("at least one choice")
        }
    };
    for r in &mut outcome.reports {
        r.variant = Some(variant.name().to_string());
    }
    Ok(outcome)
}

/// Mean of one metric across reports of the same task.
pub fn mean_metric(reports: &[EvalReport], task: &str, metric: &str) -> Option<f64> {
    let vals: Vec<f64> = reports
        .iter()
        .filter(|r| r.task == task && r.train_fraction.is_none())
        .filter_map(|r| r.metric(metric))
        .collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("gat".parse::<Variant>().is_err());
    }
}
