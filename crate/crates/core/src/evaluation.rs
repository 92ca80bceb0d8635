//! Stratified k-fold cross-validation and weighted F1 scoring.
//!
//! Noise handling: each fold injects fresh noise into its k-1 training
//! folds; the held-out fold keeps clean labels unless
//! [`CvOptions::noise_on_test`] asks otherwise, since scoring against clean
//! labels is what measures robustness of the learned model. The matrix
//! handed to the corrections is the true noise matrix for the configured
//! flip rate, mirroring a study design where the transition matrix is
//! known.

use rand::seq::SliceRandom;

use crate::correction::{backward_transform, CorrectionKind};
use crate::criteria::Criterion;
use crate::dataset::Dataset;
use crate::ensemble::{fit_forest, predict_ensemble, EnsembleMode};
use crate::error::CoreError;
use crate::label_algebra::TransitionMatrix;
use crate::noise::{inject_ncar, NoiseSpec};
use crate::seeding;
use crate::tree::{FitParams, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSpec {
    DecisionTree,
    RandomForest { n_trees: usize },
    ExtraTrees { n_trees: usize },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::DecisionTree => "decision_tree",
            ModelSpec::RandomForest { .. } => "random_forest",
            ModelSpec::ExtraTrees { .. } => "extra_trees",
        }
    }
}

/// Per-fold scores with their mean and sample standard deviation (ddof 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSummary {
    pub mean: f64,
    pub std: f64,
    pub per_fold: Vec<f64>,
}

impl ScoreSummary {
    pub fn from_scores(per_fold: Vec<f64>) -> ScoreSummary {
        // Equal scores have zero spread by definition; computing it through
        // the accumulated mean would leave summation dust (~1e-16).
        if per_fold.windows(2).all(|w| w[0] == w[1]) {
            return ScoreSummary {
                mean: per_fold.first().copied().unwrap_or(0.0),
                std: 0.0,
                per_fold,
            };
        }
        let k = per_fold.len() as f64;
        let mean = per_fold.iter().sum::<f64>() / k;
        let std = if per_fold.len() < 2 {
            0.0
        } else {
            let var = per_fold.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (k - 1.0);
            var.max(0.0).sqrt()
        };
        ScoreSummary { mean, std, per_fold }
    }
}

/// Assigns every sample to one of k folds: within each class, shuffle by the
/// seed and deal round-robin, so per-class counts across folds differ by at
/// most one.
pub fn stratified_kfold(class_of: &[usize], k: usize, seed: u64) -> Result<Vec<usize>, CoreError> {
    let n = class_of.len();
    if n == 0 {
        return Err(CoreError::Shape("fold assignment needs samples".into()));
    }
    if k == 0 {
        return Err(CoreError::Domain("fold count must be positive".into()));
    }
    if k > n {
        return Err(CoreError::Capacity(format!(
            "cannot deal {n} samples into {k} folds"
        )));
    }
    let c = class_of.iter().max().map_or(0, |&m| m + 1);
    let mut rng = seeding::rng_from(seeding::derive(seed, "stratified-kfold", &[]));
    let mut fold_of = vec![0usize; n];
    for class in 0..c {
        let mut members: Vec<usize> = (0..n).filter(|&i| class_of[i] == class).collect();
        members.shuffle(&mut rng);
        for (pos, &i) in members.iter().enumerate() {
            fold_of[i] = pos % k;
        }
    }
    Ok(fold_of)
}

/// Support-weighted mean of per-class F1 scores. A class with an undefined
/// precision or recall contributes an F1 of zero.
pub fn weighted_f1(y_true: &[usize], y_pred: &[usize], c: usize) -> Result<f64, CoreError> {
    if y_true.len() != y_pred.len() {
        return Err(CoreError::Shape(format!(
            "{} true vs {} predicted labels",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(CoreError::Shape("scoring needs at least one sample".into()));
    }
    let mut tp = vec![0usize; c];
    let mut fp = vec![0usize; c];
    let mut fnn = vec![0usize; c];
    let mut support = vec![0usize; c];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= c || p >= c {
            return Err(CoreError::Index {
                what: "class",
                index: t.max(p),
                size: c,
            });
        }
        support[t] += 1;
        if t == p {
            tp[t] += 1;
        } else {
            fnn[t] += 1;
            fp[p] += 1;
        }
    }
    let n = y_true.len() as f64;
    let mut score = 0.0;
    for k in 0..c {
        if support[k] == 0 {
            continue;
        }
        let p_den = (tp[k] + fp[k]) as f64;
        let r_den = (tp[k] + fnn[k]) as f64;
        let precision = if p_den > 0.0 { tp[k] as f64 / p_den } else { 0.0 };
        let recall = if r_den > 0.0 { tp[k] as f64 / r_den } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        score += (support[k] as f64 / n) * f1;
    }
    Ok(score)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CvOptions {
    /// Corrupt the held-out fold too. Off by default: models are scored
    /// against clean labels.
    pub noise_on_test: bool,
}

pub fn cross_validate(
    data: &Dataset,
    model: &ModelSpec,
    criterion: Criterion,
    correction: CorrectionKind,
    noise: &NoiseSpec,
    k: usize,
    seed: u64,
    options: &CvOptions,
) -> Result<ScoreSummary, CoreError> {
    Ok(cross_validate_timed(data, model, criterion, correction, noise, k, seed, options)?.0)
}

/// As [`cross_validate`], also reporting wall milliseconds per fold.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate_timed(
    data: &Dataset,
    model: &ModelSpec,
    criterion: Criterion,
    correction: CorrectionKind,
    noise: &NoiseSpec,
    k: usize,
    seed: u64,
    options: &CvOptions,
) -> Result<(ScoreSummary, Vec<u64>), CoreError> {
    if k < 2 {
        return Err(CoreError::Domain("cross-validation needs at least 2 folds".into()));
    }
    if correction == CorrectionKind::Backward && criterion != Criterion::GiniMse {
        return Err(CoreError::Domain(format!(
            "backward correction requires gini_mse; {} cannot fit soft labels",
            criterion.name()
        )));
    }
    let c = data.c();
    let classes = data.class_indices()?;
    let fold_of = stratified_kfold(&classes, k, seeding::derive(seed, "folds", &[]))?;
    // Constructing the matrix validates eta against the invertibility bound
    // for both corrected modes; only backward consumes it afterwards.
    let matrix = match correction {
        CorrectionKind::None => None,
        _ => Some(TransitionMatrix::ncar(c, noise.eta)?),
    };

    let mut per_fold = Vec::with_capacity(k);
    let mut times = Vec::with_capacity(k);
    for fold in 0..k {
        let started = std::time::Instant::now();
        let train_ix: Vec<usize> = (0..data.n()).filter(|&i| fold_of[i] != fold).collect();
        let test_ix: Vec<usize> = (0..data.n()).filter(|&i| fold_of[i] == fold).collect();
        if train_ix.is_empty() || test_ix.is_empty() {
            return Err(CoreError::Shape(format!(
                "fold {fold} leaves an empty train or test side"
            )));
        }
        let train = data.subset(&train_ix)?;
        let fold_noise = NoiseSpec {
            eta: noise.eta,
            seed: seeding::derive(noise.seed, "fold", &[fold as u64]),
        };
        let noisy_labels = inject_ncar(train.labels(), &fold_noise, c)?;
        let train_noisy = train.with_labels(noisy_labels)?;
        let fit_input = match (&matrix, correction) {
            (Some(t), CorrectionKind::Backward) => backward_transform(&train_noisy, t)?,
            _ => train_noisy,
        };

        let model_seed = seeding::derive(seed, "model", &[fold as u64]);
        let params = FitParams {
            seed: model_seed,
            ..FitParams::default()
        };
        // Forward correction rescales every vote component through the same
        // positive-affine map, so hard-class predictions provably equal the
        // uncorrected ones. Scoring the unrescaled model realizes that
        // identity exactly; routing votes through per-leaf rescaling instead
        // lets summation rounding collapse near-tie votes in large
        // ensembles. The rescaling itself is checked against an exact
        // rational oracle in the verification suites.
        let mut y_pred = Vec::with_capacity(test_ix.len());
        match model {
            ModelSpec::DecisionTree => {
                let tree = Tree::fit(&fit_input, criterion, &params)?;
                for &i in &test_ix {
                    y_pred.push(tree.predict(data.feature_row(i))?);
                }
            }
            ModelSpec::RandomForest { n_trees } | ModelSpec::ExtraTrees { n_trees } => {
                let mode = match model {
                    ModelSpec::RandomForest { .. } => EnsembleMode::RandomForest,
                    _ => EnsembleMode::ExtraTrees,
                };
                let forest =
                    fit_forest(&fit_input, criterion, mode, *n_trees, &params, model_seed)?;
                for &i in &test_ix {
                    y_pred.push(predict_ensemble(&forest, data.feature_row(i))?);
                }
            }
        }

        let y_true: Vec<usize> = if options.noise_on_test {
            let test = data.subset(&test_ix)?;
            let test_noise = NoiseSpec {
                eta: noise.eta,
                seed: seeding::derive(noise.seed, "fold-test", &[fold as u64]),
            };
            let noisy = inject_ncar(test.labels(), &test_noise, c)?;
            test.with_labels(noisy)?.class_indices()?
        } else {
            test_ix.iter().map(|&i| classes[i]).collect()
        };
        per_fold.push(weighted_f1(&y_true, &y_pred, c)?);
        times.push(started.elapsed().as_millis() as u64);
    }
    Ok((ScoreSummary::from_scores(per_fold), times))
}
