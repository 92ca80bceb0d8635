//! Impurity measures, per-sample losses, and leaf-value minimizers.
//!
//! Conventions fixed here and relied on everywhere else:
//!
//! * logarithms are natural, and entropy/cross-entropy carry the standard
//!   leading minus so both are nonnegative on the simplex, with 0*ln 0 = 0;
//! * the mean-absolute-error loss is the concrete symmetric loss: summing
//!   `mae_loss(e_k, v)` over all c classes gives the constant 2(c-1) for any
//!   v on the simplex, which is why its optimal leaf is a plurality
//!   indicator rather than a mean;
//! * all tie-breaking goes to the lowest class index.

use crate::error::CoreError;
use crate::label_algebra::{argmax_tie_low, dot, one_hot};

/// How far off the simplex a predicted vector may be before the symmetric
/// loss refuses it (the 2(c-1) constant only holds on the simplex).
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// An impurity/loss pairing together with its leaf-value rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    /// Gini impurity 1 - v.v with squared-error loss; mean leaves.
    GiniMse,
    /// Entropy -sum v ln v with cross-entropy loss; mean leaves.
    EntropyCe,
    /// Symmetric L1 loss; plurality-indicator leaves.
    SymmetricMae,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::GiniMse => "gini_mse",
            Criterion::EntropyCe => "entropy_ce",
            Criterion::SymmetricMae => "symmetric_mae",
        }
    }

    /// True when the loss-minimizing leaf value is the weighted mean of the
    /// member labels; false when it is the plurality indicator.
    pub fn mean_leaf(self) -> bool {
        !matches!(self, Criterion::SymmetricMae)
    }

    pub fn impurity(self, v: &[f64]) -> Result<f64, CoreError> {
        match self {
            Criterion::GiniMse => Ok(gini_impurity(v)),
            Criterion::EntropyCe => entropy_impurity(v),
            Criterion::SymmetricMae => Ok(mae_impurity(v)),
        }
    }

    pub fn loss(self, y: &[f64], yhat: &[f64]) -> Result<f64, CoreError> {
        match self {
            Criterion::GiniMse => mse_loss(y, yhat),
            Criterion::EntropyCe => ce_loss(y, yhat),
            Criterion::SymmetricMae => mae_loss(y, yhat),
        }
    }
}

/// 1 - v.v; zero exactly on indicator vectors.
pub fn gini_impurity(v: &[f64]) -> f64 {
    1.0 - dot(v, v)
}

/// -sum v_k ln v_k with 0 ln 0 = 0. Negative entries have no entropy and are
/// rejected, which is also what forbids entropy fits on backward-transformed
/// labels.
pub fn entropy_impurity(v: &[f64]) -> Result<f64, CoreError> {
    let mut acc = 0.0;
    for &x in v {
        if x < 0.0 {
            return Err(CoreError::Domain(format!(
                "entropy undefined for negative entry {x}"
            )));
        }
        if x > 0.0 {
            acc -= x * x.ln();
        }
    }
    Ok(acc)
}

/// 2(1 - max v): twice the mean symmetric loss of the plurality indicator
/// against members with mean label v.
pub fn mae_impurity(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    2.0 * (1.0 - max)
}

/// Squared Euclidean distance, no averaging.
pub fn mse_loss(y: &[f64], yhat: &[f64]) -> Result<f64, CoreError> {
    check_same_len(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// -y.ln(yhat). Entries of yhat must be nonnegative; a zero prediction for a
/// positively-weighted class yields the +infinity sentinel.
pub fn ce_loss(y: &[f64], yhat: &[f64]) -> Result<f64, CoreError> {
    check_same_len(y, yhat)?;
    let mut acc = 0.0;
    for (&w, &p) in y.iter().zip(yhat) {
        if p < 0.0 {
            return Err(CoreError::Domain(format!(
                "cross-entropy undefined for negative prediction entry {p}"
            )));
        }
        if w == 0.0 {
            continue;
        }
        if p == 0.0 {
            if w > 0.0 {
                return Ok(f64::INFINITY);
            }
            return Err(CoreError::Domain(
                "cross-entropy undefined for negative weight on a zero prediction".into(),
            ));
        }
        acc -= w * p.ln();
    }
    Ok(acc)
}

/// L1 distance. The prediction must lie on the probability simplex within
/// [`SIMPLEX_TOLERANCE`].
pub fn mae_loss(y: &[f64], yhat: &[f64]) -> Result<f64, CoreError> {
    check_same_len(y, yhat)?;
    let sum: f64 = yhat.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE || yhat.iter().any(|&p| p < -SIMPLEX_TOLERANCE) {
        return Err(CoreError::Domain(format!(
            "symmetric loss needs a prediction on the simplex; entries sum to {sum}"
        )));
    }
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum())
}

fn check_same_len(y: &[f64], yhat: &[f64]) -> Result<(), CoreError> {
    if y.len() != yhat.len() {
        return Err(CoreError::Shape(format!(
            "label length {} vs prediction length {}",
            y.len(),
            yhat.len()
        )));
    }
    Ok(())
}

/// Membership-weighted aggregate of a leaf's labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafStats {
    /// Total membership weight.
    pub weight: f64,
    /// Weighted mean label.
    pub mean_label: Vec<f64>,
    /// Weighted label sum; equals the per-class counts when labels are
    /// one-hot and memberships are 0/1.
    pub class_weights: Vec<f64>,
}

pub fn leaf_stats(labels: &[Vec<f64>], membership: &[f64]) -> Result<LeafStats, CoreError> {
    if labels.len() != membership.len() {
        return Err(CoreError::Shape(format!(
            "{} labels vs {} membership weights",
            labels.len(),
            membership.len()
        )));
    }
    let c = match labels.first() {
        Some(first) => first.len(),
        None => return Err(CoreError::EmptyLeaf),
    };
    let mut sum = vec![0.0; c];
    let mut weight = 0.0;
    for (y, &mu) in labels.iter().zip(membership) {
        if y.len() != c {
            return Err(CoreError::Shape("labels have inconsistent lengths".into()));
        }
        if mu < 0.0 {
            return Err(CoreError::Domain(format!("negative membership weight {mu}")));
        }
        if mu == 0.0 {
            continue;
        }
        weight += mu;
        for (s, &v) in sum.iter_mut().zip(y) {
            *s += mu * v;
        }
    }
    if weight <= 0.0 {
        return Err(CoreError::EmptyLeaf);
    }
    let mean_label = sum.iter().map(|s| s / weight).collect();
    Ok(LeafStats {
        weight,
        mean_label,
        class_weights: sum,
    })
}

/// Indicator of the heaviest class; ties go to the lowest index.
pub fn plurality_leaf(stats: &LeafStats) -> Vec<f64> {
    let k = argmax_tie_low(&stats.class_weights);
    let mut v = vec![0.0; stats.class_weights.len()];
    v[k] = 1.0;
    v
}

/// Exhaustive minimizer of sum_k w_k * loss(e_k, v) over the simplex lattice
/// with the given step. Serves as the independent oracle for the analytic
/// leaf rules; capacity-limited to c <= 4 where the lattice stays small.
/// Zero-weight classes are skipped so losses with infinite sentinels cannot
/// poison the objective through a 0 * inf term. On ties the first lattice
/// point in the enumeration wins; enumeration puts mass on low indices
/// first, matching the plurality tie rule.
pub fn minimize_leaf_bruteforce<F>(
    loss: F,
    class_weights: &[f64],
    grid_step: f64,
) -> Result<Vec<f64>, CoreError>
where
    F: Fn(&[f64], &[f64]) -> Result<f64, CoreError>,
{
    let c = class_weights.len();
    if c == 0 || c > 4 {
        return Err(CoreError::Capacity(format!(
            "simplex enumeration supports 1 to 4 classes, got {c}"
        )));
    }
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(CoreError::Domain(format!("grid step {grid_step} outside (0, 1]")));
    }
    let steps_f = (1.0 / grid_step).round();
    if (steps_f * grid_step - 1.0).abs() > 1e-9 {
        return Err(CoreError::Domain(format!(
            "grid step {grid_step} does not evenly divide 1"
        )));
    }
    let steps = steps_f as usize;
    let basis: Vec<Vec<f64>> = (0..c).map(|k| one_hot(k, c).expect("k < c")).collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut counts = vec![0usize; c];
    enumerate_compositions(steps, c, 0, &mut counts, &mut |counts| {
        let v: Vec<f64> = counts.iter().map(|&i| i as f64 / steps_f).collect();
        let mut objective = 0.0;
        for k in 0..c {
            if class_weights[k] == 0.0 {
                continue;
            }
            objective += class_weights[k] * loss(&basis[k], &v)?;
        }
        if best.as_ref().map_or(true, |(b, _)| objective < *b) {
            best = Some((objective, v));
        }
        Ok(())
    })?;
    Ok(best.expect("lattice is non-empty").1)
}

/// Visits every way to place `total` units into `c` slots, largest leading
/// counts first.
fn enumerate_compositions<F>(
    total: usize,
    c: usize,
    slot: usize,
    counts: &mut Vec<usize>,
    visit: &mut F,
) -> Result<(), CoreError>
where
    F: FnMut(&[usize]) -> Result<(), CoreError>,
{
    if slot == c - 1 {
        counts[slot] = total;
        visit(counts)?;
        return Ok(());
    }
    for take in (0..=total).rev() {
        counts[slot] = take;
        enumerate_compositions(total - take, c, slot + 1, counts, visit)?;
    }
    Ok(())
}
