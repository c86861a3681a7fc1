//! Linear probe: multinomial logistic regression on frozen embeddings.

use rand::seq::SliceRandom;

use super::metrics::f1_scores;
use crate::error::{Error, Result};
use crate::rng::SeedTree;
use crate::tensor::Tensor;

/// Training settings of the probe classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOptions {
    pub iterations: usize,
    pub learning_rate: f64,
    /// L2 penalty on the weights (not the bias), per training example.
    pub l2: f64,
    pub runs: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            iterations: 300,
            learning_rate: 0.5,
            l2: 1e-3,
            runs: 10,
        }
    }
}

/// A fitted softmax classifier over standardized inputs.
#[derive(Debug, Clone)]
pub struct Logistic {
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// `classes x (dim + 1)`, bias last.
    weights: Vec<Vec<f64>>,
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

impl Logistic {
    /// Full-batch gradient descent on the mean cross entropy.
    pub fn fit(x: &[&[f64]], y: &[usize], classes: usize, opts: &ProbeOptions) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::InvalidInput("probe needs matching nonempty inputs".into()));
        }
        if let Some(&c) = y.iter().find(|&&c| c >= classes) {
            return Err(Error::InvalidInput(format!("label {c} out of range")));
        }
        let d = x[0].len();
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(*row) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; d];
        for row in x {
            for ((s, v), m) in scale.iter_mut().zip(*row).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 1e-24 { 1.0 / s.sqrt() } else { 0.0 };
        }
        let xs: Vec<Vec<f64>> = x
            .iter()
            .map(|row| row.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) * s).collect())
            .collect();
        let mut w = vec![vec![0.0; d + 1]; classes];
        let mut grad = vec![vec![0.0; d + 1]; classes];
        let mut p = vec![0.0; classes];
        for _ in 0..opts.iterations {
            for g in &mut grad {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            for (row, &label) in xs.iter().zip(y) {
                for (pc, wc) in p.iter_mut().zip(&w) {
                    *pc = wc[d] + wc[..d].iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
                }
                softmax_in_place(&mut p);
                for (c, g) in grad.iter_mut().enumerate() {
                    let r = p[c] - if c == label { 1.0 } else { 0.0 };
                    for (gj, xj) in g[..d].iter_mut().zip(row) {
                        *gj += r * xj;
                    }
                    g[d] += r;
                }
            }
            for (wc, gc) in w.iter_mut().zip(&grad) {
                for j in 0..=d {
                    let pen = if j < d { opts.l2 * wc[j] } else { 0.0 };
                    wc[j] -= opts.learning_rate * (gc[j] / n + pen);
                }
            }
        }
        Ok(Self {
            mean,
            scale,
            weights: w,
        })
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let d = self.mean.len();
        let z: Vec<f64> = x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) * s).collect();
        let mut best = (f64::NEG_INFINITY, 0);
        for (c, wc) in self.weights.iter().enumerate() {
            let s = wc[d] + wc[..d].iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
            if s > best.0 {
                best = (s, c);
            }
        }
        best.1
    }
}

/// Mean F1 scores of a probe over repeated random splits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub macro_f1_std: f64,
    pub micro_f1_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

/// Trains on a random `fraction` of the given rows and scores the rest,
/// averaged over `opts.runs` splits.
///
/// Only the rows passed in are ever read; callers pass test-mask rows.
/// A split whose training part misses a class is redrawn.
pub fn linear_probe(
    embeddings: &Tensor,
    labels: &[usize],
    fraction: f64,
    seed: u64,
    opts: &ProbeOptions,
) -> Result<ProbeResult> {
    let n = embeddings.rows();
    if n != labels.len() {
        return Err(Error::InvalidInput(format!("{n} embeddings for {} labels", labels.len())));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {fraction} not in (0, 1)")));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let n_train = ((n as f64) * fraction).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::InvalidInput(format!("cannot split {n} rows at fraction {fraction}")));
    }
    let mut present = vec![false; classes];
    labels.iter().for_each(|&c| present[c] = true);
    let seeds = SeedTree::new(seed);
    let (mut macros, mut micros) = (Vec::new(), Vec::new());
    for run in 0..opts.runs {
        let mut rng = seeds.indexed("probe-split", run as u64);
        let mut order: Vec<usize> = (0..n).collect();
        let mut ok = false;
        for _ in 0..1000 {
            order.shuffle(&mut rng);
            let mut seen = vec![false; classes];
            order[..n_train].iter().for_each(|&i| seen[labels[i]] = true);
            if seen == present {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::InvalidInput("no split covers every class; too few rows".into()));
        }
        let (tr, te) = order.split_at(n_train);
        let x: Vec<&[f64]> = tr.iter().map(|&i| embeddings.row(i)).collect();
        let y: Vec<usize> = tr.iter().map(|&i| labels[i]).collect();
        let model = Logistic::fit(&x, &y, classes, opts)?;
        let truth: Vec<usize> = te.iter().map(|&i| labels[i]).collect();
        let pred: Vec<usize> = te.iter().map(|&i| model.predict(embeddings.row(i))).collect();
        let (ma, mi) = f1_scores(&truth, &pred)?;
        macros.push(ma);
        micros.push(mi);
    }
    let (ma, mas) = mean_std(&macros);
    let (mi, mis) = mean_std(&micros);
    Ok(ProbeResult {
        macro_f1: ma,
        micro_f1: mi,
        macro_f1_std: mas,
        micro_f1_std: mis,
    })
}
