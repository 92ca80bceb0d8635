//! Forward and backward correction for a known noise transition matrix.
//!
//! Forward correction is post-hoc: fit on the observed labels, then replace
//! every leaf value v by inv(T) v. For uniform-flip matrices inv(T) is a
//! positive-affine map per component, so corrected trees predict exactly
//! what the uncorrected trees predict; the transform only rescales leaf
//! vectors.
//!
//! Backward correction is a label transform: fitting under the corrected
//! loss y' inv(T)' lossvec(v) is the same as fitting plainly on the data set
//! with labels inv(T) y. The transformed labels sum to 1 but may be
//! negative, which is why this mode pairs only with the Gini criterion.

use crate::criteria::Criterion;
use crate::dataset::Dataset;
use crate::ensemble::Ensemble;
use crate::error::CoreError;
use crate::label_algebra::{
    dot, mat_vec, one_hot, uniform_inverse_coefficients, TransitionMatrix,
};
use crate::tree::Tree;

/// Which correction a pipeline applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionKind {
    None,
    Forward,
    Backward,
}

impl CorrectionKind {
    pub fn name(self) -> &'static str {
        match self {
            CorrectionKind::None => "none",
            CorrectionKind::Forward => "forward",
            CorrectionKind::Backward => "backward",
        }
    }
}

/// Applies inv(T) to vectors. Matrices with bit-uniform diagonal and
/// off-diagonal entries (every matrix the noise model produces) go through
/// the closed form gamma*v + delta*sum(v), which both avoids elimination
/// error and maps bit-equal components to bit-equal components, so exact
/// argmax ties survive the correction. Everything else multiplies by the
/// Gauss-Jordan inverse.
pub struct InverseApplier {
    inner: Inner,
    c: usize,
}

enum Inner {
    Uniform { gamma: f64, delta: f64 },
    General(Vec<Vec<f64>>),
}

impl InverseApplier {
    pub fn new(t: &TransitionMatrix) -> Result<Self, CoreError> {
        let c = t.c();
        if let Some((d, o)) = t.uniform_structure() {
            let (gamma, delta) = uniform_inverse_coefficients(d, o, c)?;
            return Ok(InverseApplier {
                inner: Inner::Uniform { gamma, delta },
                c,
            });
        }
        Ok(InverseApplier {
            inner: Inner::General(t.invert()?),
            c,
        })
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>, CoreError> {
        if v.len() != self.c {
            return Err(CoreError::Shape(format!(
                "vector length {} vs matrix size {}",
                v.len(),
                self.c
            )));
        }
        match &self.inner {
            Inner::Uniform { gamma, delta } => {
                let total: f64 = v.iter().sum();
                Ok(v.iter().map(|&x| gamma * x + delta * total).collect())
            }
            Inner::General(m) => mat_vec(m, v),
        }
    }

    /// inv(T) e_k, the transformed label of a class-k sample.
    pub fn column(&self, k: usize) -> Result<Vec<f64>, CoreError> {
        self.apply(&one_hot(k, self.c)?)
    }
}

/// Copy of the tree with every leaf value v replaced by inv(T) v; the split
/// structure is untouched by construction.
pub fn forward_correct(tree: &Tree, t: &TransitionMatrix) -> Result<Tree, CoreError> {
    if tree.n_classes() != t.c() {
        return Err(CoreError::Shape(format!(
            "tree has {} classes, matrix has {}",
            tree.n_classes(),
            t.c()
        )));
    }
    let applier = InverseApplier::new(t)?;
    Ok(tree.map_leaf_values(|v| applier.apply(v).expect("leaf length equals matrix size")))
}

/// Forward correction applied to every tree of an ensemble.
pub fn forward_correct_ensemble(e: &Ensemble, t: &TransitionMatrix) -> Result<Ensemble, CoreError> {
    e.map_trees(|tree| forward_correct(tree, t))
}

/// Replaces every one-hot label y by inv(T) y; features untouched. The
/// transformed labels still sum to 1 (rows of inv(T) sum to 1 because rows
/// of T do) but may be negative.
pub fn backward_transform(data: &Dataset, t: &TransitionMatrix) -> Result<Dataset, CoreError> {
    if data.c() != t.c() {
        return Err(CoreError::Shape(format!(
            "dataset has {} classes, matrix has {}",
            data.c(),
            t.c()
        )));
    }
    if !data.is_one_hot() {
        return Err(CoreError::Label(
            "backward transform expects one-hot labels".into(),
        ));
    }
    let applier = InverseApplier::new(t)?;
    let columns: Vec<Vec<f64>> = (0..t.c())
        .map(|k| applier.column(k))
        .collect::<Result<_, _>>()?;
    for (k, col) in columns.iter().enumerate() {
        let sum: f64 = col.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CoreError::Domain(format!(
                "transformed label for class {k} sums to {sum}, expected 1"
            )));
        }
    }
    let classes = data.class_indices()?;
    let labels = classes.iter().map(|&k| columns[k].clone()).collect();
    data.with_labels(labels)
}

/// Backward-corrected empirical loss straight from its definition:
/// (1/n) sum_i (inv(T) y_i) . lossvec(yhat_i), where lossvec(v) stacks
/// loss(e_k, v) over classes and yhat_i is the tree value at x_i. Serves as
/// the oracle that fitting on transformed labels is checked against.
/// Zero-weight components skip their loss term so infinite sentinels cannot
/// contribute through a weight of zero.
pub fn corrected_training_loss(
    tree: &Tree,
    data: &Dataset,
    t: &TransitionMatrix,
    criterion: Criterion,
) -> Result<f64, CoreError> {
    if data.c() != t.c() {
        return Err(CoreError::Shape(format!(
            "dataset has {} classes, matrix has {}",
            data.c(),
            t.c()
        )));
    }
    let applier = InverseApplier::new(t)?;
    let c = t.c();
    let basis: Vec<Vec<f64>> = (0..c).map(|k| one_hot(k, c).expect("k < c")).collect();
    let classes = data.class_indices()?;
    let columns: Vec<Vec<f64>> = (0..c)
        .map(|k| applier.column(k))
        .collect::<Result<_, _>>()?;

    let mut acc = 0.0;
    for i in 0..data.n() {
        let yhat = tree.predict_soft(data.feature_row(i))?;
        let z = &columns[classes[i]];
        for k in 0..c {
            if z[k] == 0.0 {
                continue;
            }
            acc += z[k] * criterion.loss(&basis[k], yhat)?;
        }
    }
    Ok(acc / data.n() as f64)
}

/// Mean training loss under the forward-corrected loss L(y, T v): the tree
/// value passes through T before the plain loss is taken.
pub fn forward_corrected_loss(
    tree: &Tree,
    data: &Dataset,
    t: &TransitionMatrix,
    criterion: Criterion,
) -> Result<f64, CoreError> {
    if data.c() != t.c() {
        return Err(CoreError::Shape(format!(
            "dataset has {} classes, matrix has {}",
            data.c(),
            t.c()
        )));
    }
    let mut acc = 0.0;
    for i in 0..data.n() {
        let yhat = tree.predict_soft(data.feature_row(i))?;
        let mapped = mat_vec(t.rows(), yhat)?;
        acc += criterion.loss(data.label(i), &mapped)?;
    }
    Ok(acc / data.n() as f64)
}

/// Per-sample constant separating the corrected-loss oracle from the plain
/// squared-error loss on transformed labels: for soft z the identity reads
/// z . lossvec(v) = |z - v|^2 + (1 - |z|^2), so the two routes differ by the
/// mean of (1 - |z_i|^2), which vanishes exactly when the labels are still
/// one-hot (T = I).
pub fn mse_soft_label_offset(data_transformed: &Dataset) -> f64 {
    let n = data_transformed.n() as f64;
    data_transformed
        .labels()
        .iter()
        .map(|z| 1.0 - dot(z, z))
        .sum::<f64>()
        / n
}
