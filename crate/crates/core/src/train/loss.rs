//! Training objectives, both on the tape and as plain values.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Floor applied inside every logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().find(|&&c| c >= classes) {
        Some(c) => Err(Error::InvalidInput(format!("label {c} out of range for {classes} classes"))),
        None => Ok(()),
    }
}

/// Cross entropy summed over `nodes`: `-sum log probs[v, labels[i]]`.
pub fn semi_supervised_loss(tape: &mut Tape, probs: Var, nodes: &[usize], labels: &[usize]) -> Result<Var> {
    if nodes.len() != labels.len() {
        return Err(Error::InvalidInput(format!("{} nodes with {} labels", nodes.len(), labels.len())));
    }
    check_labels(labels, tape.value(probs).cols())?;
    let rows = tape.gather_rows(probs, Arc::from(nodes))?;
    let picked = tape.pick_columns(rows, Arc::from(labels))?;
    let logs = tape.log_clamped(picked, LOG_FLOOR);
    let s = tape.sum(logs);
    Ok(tape.scale(s, -1.0))
}

pub fn semi_supervised_loss_value(probs: &Tensor, nodes: &[usize], labels: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let p = tape.constant(probs.clone());
    let l = semi_supervised_loss(&mut tape, p, nodes, labels)?;
    tape.value(l).item()
}

/// Negative-sampling objective:
/// `-sum_pos log sig(h_u . h_v) - sum_neg log sig(-h_u . h_v)`.
///
/// `left` and `right` hold the embeddings of the two endpoint types (the
/// same var for a self relation); pairs index into them.
pub fn unsupervised_loss(
    tape: &mut Tape,
    left: Var,
    right: Var,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> Result<Var> {
    let mut terms = Vec::with_capacity(2);
    for (pairs, sign) in [(positives, 1.0), (negatives, -1.0)] {
        if pairs.is_empty() {
            continue;
        }
        let us: Arc<[usize]> = pairs.iter().map(|p| p.0).collect();
        let vs: Arc<[usize]> = pairs.iter().map(|p| p.1).collect();
        let hu = tape.gather_rows(left, us)?;
        let hv = tape.gather_rows(right, vs)?;
        let dots = tape.row_dot(hu, hv)?;
        let dots = tape.scale(dots, sign);
        let ls = tape.log_sigmoid(dots, LOG_FLOOR);
        terms.push(tape.sum(ls));
    }
    let total = match terms[..] {
        [] => tape.constant(Tensor::scalar(0.0)),
        [a] => a,
        [a, b] => tape.add(a, b)?,
        _ => unreachable!(),
    };
    Ok(tape.scale(total, -1.0))
}

pub fn unsupervised_loss_value(
    left: &Tensor,
    right: &Tensor,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> Result<f64> {
    let mut tape = Tape::new();
    let l = tape.constant(left.clone());
    let r = tape.constant(right.clone());
    let loss = unsupervised_loss(&mut tape, l, r, positives, negatives)?;
    tape.value(loss).item()
}
