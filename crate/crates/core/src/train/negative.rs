//! Uniform negative pairs by rejection.

use std::collections::HashSet;

use rand::Rng;

use crate::error::{Error, Result};

/// Draws `count` pairs `(u, v)` with `u < n_left`, `v < n_right`, uniformly
/// among pairs not in `positives`. Draws are independent, so a pair may
/// repeat.
pub fn negative_sample<R: Rng + ?Sized>(
    positives: &HashSet<(usize, usize)>,
    n_left: usize,
    n_right: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let total = n_left.saturating_mul(n_right);
    let inside = positives.iter().filter(|&&(u, v)| u < n_left && v < n_right).count();
    if inside >= total {
        return Err(Error::InvalidInput(
            "no unobserved pairs to sample negatives from".into(),
        ));
    }
    let mut out = Vec::with_capacity(count);
    if inside * 2 > total {
        // dense positives: sample from the explicit complement instead
        let complement: Vec<(usize, usize)> = (0..n_left)
            .flat_map(|u| (0..n_right).map(move |v| (u, v)))
            .filter(|p| !positives.contains(p))
            .collect();
        for _ in 0..count {
            out.push(complement[rng.random_range(0..complement.len())]);
        }
        return Ok(out);
    }
    while out.len() < count {
        let p = (rng.random_range(0..n_left), rng.random_range(0..n_right));
        if !positives.contains(&p) {
            out.push(p);
        }
    }
    Ok(out)
}
