use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Check at most this many coordinates per parameter tensor, sampled
    /// uniformly. `None` checks every coordinate.
    pub max_coords_per_param: Option<usize>,
    pub seed: u64,
    /// Added to the relative-error denominator. Gradients much smaller than
    /// this are effectively compared in absolute terms, which keeps
    /// roundoff in the loss from dominating near-zero coordinates.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_coords_per_param: None,
            seed: 0,
            floor: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max over checked coordinates of
    /// `|analytic - numeric| / (|analytic| + |numeric| + floor)`.
    pub max_rel_error: f64,
    /// Max relative error per parameter tensor (0 when nothing was checked).
    pub per_param: Vec<f64>,
    pub checked: usize,
    /// Coordinates whose perturbation crossed a kink.
    pub skipped: usize,
    /// `(param, coordinate)` achieving the max error.
    pub worst: Option<(usize, usize)>,
    /// `(analytic, numeric)` at the worst coordinate.
    pub worst_values: Option<(f64, f64)>,
}

fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<(f64, Vec<bool>)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let v = tape.value(loss).item()?;
    Ok((v, tape.kink_signature().to_vec()))
}

/// Compares tape gradients of a scalar function against central differences.
///
/// `f` rebuilds the computation on a fresh tape from the given parameter
/// vars. Coordinates whose `±step` perturbations land on different sides of
/// a nondifferentiable point are skipped.
pub fn grad_check<F>(f: F, params: &[Tensor], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(opts.step > 0.0) {
        return Err(Error::Config(format!("grad check step must be positive, got {}", opts.step)));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.get_or_zeros(v, p))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        per_param: vec![0.0; params.len()],
        checked: 0,
        skipped: 0,
        worst: None,
        worst_values: None,
    };
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        let coords: Vec<usize> = match opts.max_coords_per_param {
            Some(m) if m < p.len() => {
                let mut c = sample(&mut rng, p.len(), m).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..p.len()).collect(),
        };
        for c in coords {
            let x0 = p.data()[c];
            work[pi].data_mut()[c] = x0 + opts.step;
            let (fp, kp) = evaluate(&f, &work)?;
            work[pi].data_mut()[c] = x0 - opts.step;
            let (fm, km) = evaluate(&f, &work)?;
            work[pi].data_mut()[c] = x0;
            if kp != km {
                report.skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * opts.step);
            let a = analytic[pi].data()[c];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + opts.floor);
            report.checked += 1;
            if rel > report.per_param[pi] {
                report.per_param[pi] = rel;
            }
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((pi, c));
                report.worst_values = Some((a, numeric));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let w = Tensor::row_vector(vec![1.0, 2.0]);
        let r = grad_check(
            |t, p| {
                let sq = t.mul(p[0], p[0])?;
                Ok(t.sum(sq))
            },
            &[w],
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_eq!(r.checked, 2);
        assert!(r.max_rel_error < 1e-8);
    }

    #[test]
    fn kink_at_zero_is_skipped() {
        let w = Tensor::row_vector(vec![0.0, 0.5]);
        let r = grad_check(
            |t, p| {
                let y = t.leaky_relu(p[0], 0.2);
                Ok(t.sum(y))
            },
            &[w],
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_eq!(r.skipped, 1);
        assert_eq!(r.checked, 1);
        assert!(r.max_rel_error < 1e-8);
    }

    #[test]
    fn nonpositive_step_is_rejected() {
        let w = Tensor::scalar(1.0);
        let opts = GradCheckOptions {
            step: 0.0,
            ..Default::default()
        };
        assert!(grad_check(|t, p| Ok(t.sum(p[0])), &[w], &opts).is_err());
    }

    #[test]
    fn sampling_limits_coordinates() {
        let w = Tensor::zeros(&[10, 10]);
        let opts = GradCheckOptions {
            max_coords_per_param: Some(7),
            ..Default::default()
        };
        let r = grad_check(
            |t, p| {
                let y = t.tanh(p[0]);
                Ok(t.sum(y))
            },
            &[w],
            &opts,
        )
        .unwrap();
        assert_eq!(r.checked, 7);
    }
}
