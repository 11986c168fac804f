//! Scoring fits against ground truth.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{FitResult, VariantParams};
use crate::membership::argmax;
use crate::robust::NOISE_FLAG_THRESHOLD;

pub const HARD_THRESHOLD: f64 = 0.70;

/// Hard label per object, `None` when no membership reaches `threshold`.
pub fn harden(u: &DMatrix<f64>, threshold: f64) -> Vec<Option<usize>> {
    u.row_iter()
        .map(|r| {
            let k = argmax(r.iter().copied());
            (r[k] >= threshold).then_some(k)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagRule {
    /// Maximum membership below the hardening threshold.
    NoDominantMembership,
    /// Noise membership at or above one half.
    NoiseMembership,
    /// Outside the retained set.
    Trimmed,
}

pub fn flag_rule(params: &VariantParams) -> FlagRule {
    match params {
        VariantParams::Fcpca | VariantParams::Exponential { .. } => FlagRule::NoDominantMembership,
        VariantParams::Noise { .. } => FlagRule::NoiseMembership,
        VariantParams::Trimmed { .. } => FlagRule::Trimmed,
    }
}

/// Indices the variant's own rule marks as outliers, ascending.
pub fn flag_outliers(fit: &FitResult) -> Vec<usize> {
    flag_outliers_in(fit.memberships.values(), &fit.params)
}

/// As [`flag_outliers`], from stored memberships and variant parameters.
pub fn flag_outliers_in(u: &DMatrix<f64>, params: &VariantParams) -> Vec<usize> {
    let n = u.nrows();
    match params {
        VariantParams::Fcpca | VariantParams::Exponential { .. } => {
            harden(u, HARD_THRESHOLD).iter().enumerate().filter(|(_, l)| l.is_none()).map(|(i, _)| i).collect()
        }
        VariantParams::Noise { .. } => {
            let noise = u.ncols() - 1;
            (0..n).filter(|&i| u[(i, noise)] >= NOISE_FLAG_THRESHOLD).collect()
        }
        VariantParams::Trimmed { retained, .. } => {
            let mut keep = alloc::vec![false; n];
            for &i in retained {
                keep[i] = true;
            }
            (0..n).filter(|&i| !keep[i]).collect()
        }
    }
}

/// Substantive-cluster memberships; for the noise variant the noise column is
/// dropped and each row renormalised.
pub fn substantive_memberships(fit: &FitResult) -> DMatrix<f64> {
    substantive_memberships_in(fit.memberships.values(), &fit.params)
}

pub fn substantive_memberships_in(u: &DMatrix<f64>, params: &VariantParams) -> DMatrix<f64> {
    match params {
        VariantParams::Noise { .. } => {
            let s = u.ncols() - 1;
            let mut v = u.columns(0, s).into_owned();
            for mut r in v.row_iter_mut() {
                let total: f64 = r.sum();
                if total > 0.0 {
                    r /= total;
                } else {
                    r.fill(1.0 / s as f64);
                }
            }
            v
        }
        _ => u.clone(),
    }
}

fn pairs(n: usize) -> f64 {
    n as f64 * (n as f64 - 1.0) / 2.0
}

struct PairCounts {
    total: f64,
    both: f64,
    a_only: f64,
    b_only: f64,
}

fn pair_counts(a: &[usize], b: &[usize]) -> Result<PairCounts> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::EmptyIndexSet);
    }
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut ra: BTreeMap<usize, usize> = BTreeMap::new();
    let mut rb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let both: f64 = joint.values().map(|&c| pairs(c)).sum();
    let same_a: f64 = ra.values().map(|&c| pairs(c)).sum();
    let same_b: f64 = rb.values().map(|&c| pairs(c)).sum();
    Ok(PairCounts { total: pairs(a.len()), both, a_only: same_a - both, b_only: same_b - both })
}

/// Fraction of object pairs on which the two labelings agree.
pub fn rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    let c = pair_counts(a, b)?;
    let neither = c.total - c.both - c.a_only - c.b_only;
    Ok((c.both + neither) / c.total)
}

pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    let c = pair_counts(a, b)?;
    let same_a = c.both + c.a_only;
    let same_b = c.both + c.b_only;
    let expected = same_a * same_b / c.total;
    let max = 0.5 * (same_a + same_b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((c.both - expected) / (max - expected))
}

/// `|flagged ∩ truth| / |truth|`, `None` for an empty truth set.
pub fn outlier_recall(flagged: &[usize], truth: &[usize]) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    let hits = truth.iter().filter(|t| flagged.contains(t)).count();
    Some(hits as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rule: FlagRule,
    /// `None` when fewer than two objects are scored.
    pub acc_rand: Option<f64>,
    pub acc_adjusted_rand: Option<f64>,
    /// `None` when there are no true outliers.
    pub outlier_recall: Option<f64>,
    pub flagged: Vec<usize>,
    /// Not flagged, but no cluster reached the hardening threshold.
    pub unassigned: Vec<usize>,
    pub false_positives: usize,
    pub n_scored: usize,
}

/// Flagged objects are dropped; unassigned ones get a label of their own so
/// they count against accuracy.
pub fn evaluate(fit: &FitResult, truth_labels: &[usize], truth_outliers: &[usize]) -> Result<EvalReport> {
    evaluate_memberships(fit.memberships.values(), &fit.params, truth_labels, truth_outliers)
}

/// As [`evaluate`], from stored memberships and variant parameters.
pub fn evaluate_memberships(
    u: &DMatrix<f64>,
    params: &VariantParams,
    truth_labels: &[usize],
    truth_outliers: &[usize],
) -> Result<EvalReport> {
    let n = u.nrows();
    if truth_labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: truth_labels.len() });
    }
    let flagged = flag_outliers_in(u, params);
    let substantive = substantive_memberships_in(u, params);
    let hard = harden(&substantive, HARD_THRESHOLD);
    let mut is_flagged = alloc::vec![false; n];
    for &i in &flagged {
        is_flagged[i] = true;
    }
    let fresh = truth_labels.iter().copied().max().unwrap_or(0).max(substantive.ncols()) + 1;
    let mut unassigned = Vec::new();
    let (mut truth, mut pred) = (Vec::new(), Vec::new());
    for i in (0..n).filter(|&i| !is_flagged[i]) {
        truth.push(truth_labels[i]);
        pred.push(match hard[i] {
            Some(l) => l,
            None => {
                unassigned.push(i);
                fresh + i
            }
        });
    }
    let (acc_rand, acc_adjusted_rand) = if truth.len() >= 2 {
        (Some(rand_index(&truth, &pred)?), Some(adjusted_rand_index(&truth, &pred)?))
    } else {
        (None, None)
    };
    let false_positives = flagged.iter().filter(|i| !truth_outliers.contains(i)).count();
    Ok(EvalReport {
        rule: flag_rule(params),
        acc_rand,
        acc_adjusted_rand,
        outlier_recall: outlier_recall(&flagged, truth_outliers),
        n_scored: truth.len(),
        flagged,
        unassigned,
        false_positives,
    })
}
