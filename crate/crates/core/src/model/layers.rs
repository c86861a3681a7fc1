//! The building blocks of one MAGNN layer, expressed as tape operations.

use std::sync::Arc;

use super::config::Activation;
use crate::error::{Error, Result};
use crate::graph::{Direction, Features};
use crate::tensor::{SegmentLayout, Tape, Var};

pub fn activate(tape: &mut Tape, x: Var, act: Activation) -> Var {
    match act {
        Activation::Elu => tape.elu(x, 1.0),
        Activation::Identity => x,
        Activation::Tanh => tape.tanh(x),
        Activation::Sigmoid => tape.sigmoid(x),
        Activation::Softmax => tape.softmax_rows(x),
    }
}

/// Projects one type's features into the shared hidden space: `X W_A^T`.
///
/// `w` is `d' x d_A`. One-hot features skip the product: the projection of
/// the identity is `W_A^T` itself.
pub fn content_transform(tape: &mut Tape, features: &Features, w: Var) -> Result<Var> {
    let wd = tape.value(w).cols();
    if wd != features.dim() {
        return Err(Error::Dimension(format!(
            "content weight expects {wd} features, type has {}",
            features.dim()
        )));
    }
    match features {
        Features::Dense(x) => {
            let x = tape.constant(x.clone());
            tape.linear(x, w)
        }
        Features::Identity(_) => Ok(tape.transpose(w)),
    }
}

/// Phase vector of one relation step, with the walk direction.
#[derive(Debug, Clone, Copy)]
pub struct RotationStep {
    pub phases: Var,
    pub direction: Direction,
}

/// Instance encoder parameters.
#[derive(Debug, Clone)]
pub enum InstanceEncoder {
    Mean,
    /// `d' x d'` matrix applied after the mean.
    Linear(Var),
    /// One step per relation of the metapath, in walk order `t0 -> tn`.
    Rotation(Vec<RotationStep>),
}

/// Unit-modulus rotation `exp(i * s * theta)` as a `1 x d'` row, with `s`
/// the sign of the step (reverse steps rotate by the conjugate).
fn rotation_row(tape: &mut Tape, theta: Var) -> Result<Var> {
    let c = tape.cos(theta);
    let s = tape.sin(theta);
    tape.concat_cols(&[c, s])
}

fn signed_phase(tape: &mut Tape, step: &RotationStep) -> Var {
    match step.direction {
        Direction::Forward => step.phases,
        Direction::Reverse => tape.scale(step.phases, -1.0),
    }
}

/// Encodes a batch of metapath instances.
///
/// `positions[i]` holds, for every instance, the vector of node `t_i`
/// (`n_inst x d'`), from the neighbor `t0` to the target `tn`. With
/// `endpoints_only` only `t0` and `tn` are seen; the rotation encoder then
/// applies the composition of all relation rotations to `t0`.
pub fn encode_instances(
    tape: &mut Tape,
    positions: &[Var],
    encoder: &InstanceEncoder,
    endpoints_only: bool,
) -> Result<Var> {
    let n = positions.len();
    if n < 2 {
        return Err(Error::shape("encode_instances", "an instance has at least two nodes"));
    }
    let used: Vec<Var> = if endpoints_only {
        vec![positions[0], positions[n - 1]]
    } else {
        positions.to_vec()
    };
    let count = used.len() as f64;
    let mean = |tape: &mut Tape| -> Result<Var> {
        let mut acc = used[0];
        for &p in &used[1..] {
            acc = tape.add(acc, p)?;
        }
        Ok(tape.scale(acc, 1.0 / count))
    };
    match encoder {
        InstanceEncoder::Mean => mean(tape),
        InstanceEncoder::Linear(w) => {
            let m = mean(tape)?;
            tape.linear(m, *w)
        }
        InstanceEncoder::Rotation(steps) => {
            if steps.len() != n - 1 {
                return Err(Error::shape(
                    "encode_instances",
                    format!("{} rotation steps for {} nodes", steps.len(), n),
                ));
            }
            let d = tape.value(positions[0]).cols();
            if !d.is_multiple_of(2) {
                return Err(Error::shape("encode_instances", format!("odd hidden width {d}")));
            }
            let mut o;
            if endpoints_only {
                let mut theta = signed_phase(tape, &steps[0]);
                for s in &steps[1..] {
                    let p = signed_phase(tape, s);
                    theta = tape.add(theta, p)?;
                }
                let r = rotation_row(tape, theta)?;
                let rotated = tape.complex_mul(positions[0], r)?;
                o = tape.add(positions[n - 1], rotated)?;
            } else {
                o = positions[0];
                for (i, s) in steps.iter().enumerate() {
                    let theta = signed_phase(tape, s);
                    let r = rotation_row(tape, theta)?;
                    let rotated = tape.complex_mul(o, r)?;
                    o = tape.add(positions[i + 1], rotated)?;
                }
            }
            Ok(tape.scale(o, 1.0 / count))
        }
    }
}

/// Attention over the instances of each target, per head.
///
/// `target_rows` holds `h'_v` for the target of every instance and
/// `encoded` the instance vectors, both `n_inst x d'`; `attn` is
/// `K x 2d'`. Returns the activated, head-concatenated per-target vectors
/// (`targets x K d'`) and the attention weights (`n_inst x K`). Targets
/// with no instances get zero vectors.
pub fn intra_metapath_aggregate(
    tape: &mut Tape,
    target_rows: Var,
    encoded: Var,
    attn: Var,
    layout: Arc<SegmentLayout>,
    slope: f64,
    act: Activation,
) -> Result<(Var, Var)> {
    let d = tape.value(encoded).cols();
    if tape.value(attn).cols() != 2 * d {
        return Err(Error::shape(
            "intra_metapath_aggregate",
            format!("attention width {} for hidden {d}", tape.value(attn).cols()),
        ));
    }
    if tape.value(target_rows).rows() != tape.value(encoded).rows() {
        return Err(Error::shape("intra_metapath_aggregate", "target rows misaligned with instances"));
    }
    let a_target = tape.slice_cols(attn, 0, d)?;
    let a_inst = tape.slice_cols(attn, d, 2 * d)?;
    let s1 = tape.linear(target_rows, a_target)?;
    let s2 = tape.linear(encoded, a_inst)?;
    let e = tape.add(s1, s2)?;
    let e = tape.leaky_relu(e, slope);
    let alpha = tape.segment_softmax(e, layout.clone())?;
    let agg = tape.segment_weighted_sum(encoded, alpha, layout)?;
    let out = match act {
        // zero rows of empty blocks stay zero for these activations
        Activation::Elu | Activation::Identity | Activation::Tanh => activate(tape, agg, act),
        _ => {
            return Err(Error::Config(format!(
                "activation {act:?} does not keep empty neighborhoods at zero"
            )))
        }
    };
    Ok((out, alpha))
}

/// Fuses the metapath-specific vectors of one node type.
///
/// Each metapath is summarized by the mean over all nodes of
/// `tanh(h M^T + b)`, scored against `q`, and the scores are normalized
/// across metapaths. Returns the fused vectors and the weights (`M x 1`).
pub fn inter_metapath_aggregate(
    tape: &mut Tape,
    per_metapath: &[Var],
    m: Var,
    b: Var,
    q: Var,
) -> Result<(Var, Var)> {
    if per_metapath.is_empty() {
        return Err(Error::Config("inter-metapath aggregation needs at least one metapath".into()));
    }
    let mut scores = Vec::with_capacity(per_metapath.len());
    for &h in per_metapath {
        let z = tape.linear(h, m)?;
        let z = tape.add_row(z, b)?;
        let z = tape.tanh(z);
        let s = tape.mean_rows(z);
        scores.push(tape.linear(s, q)?);
    }
    let e = tape.concat_rows(&scores)?;
    let beta = tape.segment_softmax(e, Arc::new(SegmentLayout::single(per_metapath.len())))?;
    let mut fused: Option<Var> = None;
    for (i, &h) in per_metapath.iter().enumerate() {
        let w = tape.slice_rows(beta, i, i + 1)?;
        let term = tape.mul_scalar(h, w)?;
        fused = Some(match fused {
            None => term,
            Some(f) => tape.add(f, term)?,
        });
    }
    Ok((fused.expect("nonempty"), beta))
}

/// `act(x W_o^T)`.
pub fn output_projection(tape: &mut Tape, x: Var, w: Var, act: Activation) -> Result<Var> {
    let y = tape.linear(x, w)?;
    Ok(activate(tape, y, act))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use std::f64::consts::PI;

    #[test]
    fn identity_content_transform() {
        let mut t = Tape::new();
        let w = t.param(Tensor::identity(2));
        let f = Features::Dense(Tensor::matrix(1, 2, vec![0.5, -1.0]).unwrap());
        let h = content_transform(&mut t, &f, w).unwrap();
        assert_eq!(t.value(h).data(), &[0.5, -1.0]);
        let z = t.param(Tensor::zeros(&[3, 2]));
        let h = content_transform(&mut t, &f, z).unwrap();
        assert_eq!(t.value(h).data(), &[0.0; 3]);
        let bad = t.param(Tensor::zeros(&[3, 5]));
        assert!(content_transform(&mut t, &f, bad).is_err());
    }

    #[test]
    fn one_hot_content_is_weight_transpose() {
        let mut t = Tape::new();
        let w = t.param(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let h = content_transform(&mut t, &Features::Identity(3), w).unwrap();
        assert_eq!(t.value(h).data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn mean_of_two() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::row_vector(vec![1.0, 2.0]));
        let b = t.constant(Tensor::row_vector(vec![3.0, 4.0]));
        let h = encode_instances(&mut t, &[a, b], &InstanceEncoder::Mean, false).unwrap();
        assert_eq!(t.value(h).data(), &[2.0, 3.0]);
    }

    #[test]
    fn quarter_turn_rotation() {
        let mut t = Tape::new();
        let u = t.constant(Tensor::row_vector(vec![1.0, 0.0]));
        let v = t.constant(Tensor::row_vector(vec![0.0, 0.0]));
        let theta = t.param(Tensor::row_vector(vec![PI / 2.0]));
        let enc = InstanceEncoder::Rotation(vec![RotationStep {
            phases: theta,
            direction: Direction::Forward,
        }]);
        let h = encode_instances(&mut t, &[u, v], &enc, false).unwrap();
        let out = t.value(h).data();
        assert!(out[0].abs() < 1e-16);
        assert!((out[1] - 0.5).abs() < 1e-16);
    }

    #[test]
    fn rotation_step_count_must_match() {
        let mut t = Tape::new();
        let u = t.constant(Tensor::row_vector(vec![1.0, 0.0]));
        let enc = InstanceEncoder::Rotation(vec![]);
        assert!(encode_instances(&mut t, &[u, u], &enc, false).is_err());
    }

    #[test]
    fn single_instance_gets_full_weight() {
        let mut t = Tape::new();
        let hv = t.constant(Tensor::row_vector(vec![0.3, -0.2]));
        let enc = t.constant(Tensor::row_vector(vec![-0.7, 0.4]));
        let attn = t.param(Tensor::row_vector(vec![0.1, 0.2, 0.3, 0.4]));
        let (h, alpha) = intra_metapath_aggregate(
            &mut t,
            hv,
            enc,
            attn,
            Arc::new(SegmentLayout::single(1)),
            0.2,
            Activation::Elu,
        )
        .unwrap();
        assert_eq!(t.value(alpha).data(), &[1.0]);
        let want = [(-0.7f64).exp_m1(), 0.4];
        for (a, b) in t.value(h).data().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_instances_share_weight() {
        let mut t = Tape::new();
        let hv = t.constant(Tensor::matrix(2, 2, vec![0.3, -0.2, 0.3, -0.2]).unwrap());
        let enc = t.constant(Tensor::matrix(2, 2, vec![0.5, 0.1, 0.5, 0.1]).unwrap());
        let attn = t.param(Tensor::matrix(2, 4, vec![0.1, 0.2, 0.3, 0.4, -1.0, 2.0, 0.5, 0.9]).unwrap());
        let (_, alpha) = intra_metapath_aggregate(
            &mut t,
            hv,
            enc,
            attn,
            Arc::new(SegmentLayout::single(2)),
            0.2,
            Activation::Elu,
        )
        .unwrap();
        assert_eq!(t.value(alpha).data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn single_metapath_passes_through() {
        let mut t = Tape::new();
        let h = t.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let m = t.param(Tensor::matrix(3, 2, vec![0.1; 6]).unwrap());
        let b = t.param(Tensor::zeros(&[1, 3]));
        let q = t.param(Tensor::row_vector(vec![0.5, -0.5, 1.0]));
        let (fused, beta) = inter_metapath_aggregate(&mut t, &[h], m, b, q).unwrap();
        assert_eq!(t.value(beta).data(), &[1.0]);
        assert_eq!(t.value(fused), t.value(h));
        assert!(inter_metapath_aggregate(&mut t, &[], m, b, q).is_err());
    }

    #[test]
    fn identical_metapaths_split_evenly() {
        let mut t = Tape::new();
        let h = t.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let h2 = t.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let m = t.param(Tensor::matrix(3, 2, vec![0.1, -0.3, 0.2, 0.5, 0.9, -0.1]).unwrap());
        let b = t.param(Tensor::row_vector(vec![0.1, 0.0, -0.2]));
        let q = t.param(Tensor::row_vector(vec![0.5, -0.5, 1.0]));
        let (_, beta) = inter_metapath_aggregate(&mut t, &[h, h2], m, b, q).unwrap();
        assert_eq!(t.value(beta).data(), &[0.5, 0.5]);
    }

    #[test]
    fn output_projection_cases() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::row_vector(vec![0.4, -2.0]));
        let zero = t.param(Tensor::zeros(&[3, 2]));
        let y = output_projection(&mut t, x, zero, Activation::Sigmoid).unwrap();
        assert_eq!(t.value(y).data(), &[0.5; 3]);
        let id = t.param(Tensor::identity(2));
        let y = output_projection(&mut t, x, id, Activation::Identity).unwrap();
        assert_eq!(t.value(y).data(), &[0.4, -2.0]);
        let bad = t.param(Tensor::zeros(&[3, 3]));
        assert!(output_projection(&mut t, x, bad, Activation::Identity).is_err());
    }
}
