//! Classification, clustering and ranking metrics.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// `(macro F1, micro F1)` of single-label predictions.
///
/// Macro F1 averages over every class that occurs in either `truth` or
/// `pred`; micro F1 equals accuracy in the single-label case.
pub fn f1_scores(truth: &[usize], pred: &[usize]) -> Result<(f64, f64)> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::InvalidInput(format!(
            "f1 needs equal nonempty inputs, got {} and {}",
            truth.len(),
            pred.len()
        )));
    }
    let mut tp: BTreeMap<usize, usize> = BTreeMap::new();
    let mut fp: BTreeMap<usize, usize> = BTreeMap::new();
    let mut fn_: BTreeMap<usize, usize> = BTreeMap::new();
    for (&t, &p) in truth.iter().zip(pred) {
        tp.entry(t).or_default();
        tp.entry(p).or_default();
        if t == p {
            *tp.get_mut(&t).unwrap() += 1;
        } else {
            *fp.entry(p).or_default() += 1;
            *fn_.entry(t).or_default() += 1;
        }
    }
    let mut macro_sum = 0.0;
    let mut correct = 0;
    for (c, &t) in &tp {
        let f = fp.get(c).copied().unwrap_or(0);
        let n = fn_.get(c).copied().unwrap_or(0);
        let denom = 2 * t + f + n;
        macro_sum += if denom == 0 { 0.0 } else { 2.0 * t as f64 / denom as f64 };
        correct += t;
    }
    Ok((macro_sum / tp.len() as f64, correct as f64 / truth.len() as f64))
}

fn contingency(a: &[usize], b: &[usize]) -> (BTreeMap<(usize, usize), usize>, BTreeMap<usize, usize>, BTreeMap<usize, usize>) {
    let mut joint = BTreeMap::new();
    let mut ra = BTreeMap::new();
    let mut rb = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_insert(0) += 1;
        *ra.entry(x).or_insert(0) += 1;
        *rb.entry(y).or_insert(0) += 1;
    }
    (joint, ra, rb)
}

fn entropy(counts: &BTreeMap<usize, usize>, n: f64) -> f64 {
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn check_pair(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidInput("partitions must be nonempty and equally long".into()));
    }
    Ok(())
}

/// Normalized mutual information with arithmetic-mean normalization.
/// Two single-cluster partitions score 1.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len() as f64;
    let (joint, ra, rb) = contingency(a, b);
    let (ha, hb) = (entropy(&ra, n), entropy(&rb, n));
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (&(x, y), &c) in &joint {
        let pxy = c as f64 / n;
        mi += pxy * (pxy * n * n / (ra[&x] as f64 * rb[&y] as f64)).ln();
    }
    Ok((mi / (0.5 * (ha + hb))).clamp(0.0, 1.0))
}

fn comb2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index. When the chance-corrected denominator vanishes
/// (both partitions trivial in the same way) the score is 1.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    check_pair(a, b)?;
    let (joint, ra, rb) = contingency(a, b);
    let index: f64 = joint.values().map(|&c| comb2(c)).sum();
    let sa: f64 = ra.values().map(|&c| comb2(c)).sum();
    let sb: f64 = rb.values().map(|&c| comb2(c)).sum();
    let total = comb2(a.len());
    let expected = if total == 0.0 { 0.0 } else { sa * sb / total };
    let max = 0.5 * (sa + sb);
    if max - expected == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

fn check_scores(pos: &[f64], neg: &[f64]) -> Result<()> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidInput("ranking metrics need positives and negatives".into()));
    }
    if pos.iter().chain(neg).any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite link score".into()));
    }
    Ok(())
}

/// Area under the ROC curve from average ranks; tied scores count half.
pub fn roc_auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_scores(pos, neg)?;
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let avg = (i + 1 + j) as f64 / 2.0;
        rank_sum += avg * all[i..j].iter().filter(|e| e.1).count() as f64;
        i = j;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Average precision: the precision at each distinct score threshold,
/// weighted by the recall gained there.
pub fn average_precision(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_scores(pos, neg)?;
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|x, y| y.0.total_cmp(&x.0));
    let np = pos.len() as f64;
    let (mut tp, mut seen, mut ap, mut last_recall) = (0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                tp += 1.0;
            }
            seen += 1.0;
            j += 1;
        }
        let recall = tp / np;
        ap += (recall - last_recall) * (tp / seen);
        last_recall = recall;
        i = j;
    }
    Ok(ap)
}
