//! Random-forest and extra-trees ensembles.
//!
//! Both modes fit trees over ceil(sqrt(m)) candidate features per node.
//! Random forests draw a bootstrap resample (n draws with replacement) per
//! tree and search thresholds exhaustively; extra trees keep the full sample
//! and draw one random threshold per candidate feature. Per-tree seeds come
//! from the splittable scheme in [`crate::seeding`], so parallel fitting
//! cannot change results. Aggregation is a soft vote: the mean of the
//! per-tree leaf vectors, argmax with ties to the lowest index.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::criteria::Criterion;
use crate::dataset::Dataset;
use crate::error::CoreError;
use crate::label_algebra::argmax_tie_low;
use crate::seeding;
use crate::tree::{FitParams, SplitMode, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleMode {
    RandomForest,
    ExtraTrees,
}

impl EnsembleMode {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleMode::RandomForest => "random_forest",
            EnsembleMode::ExtraTrees => "extra_trees",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    trees: Vec<Tree>,
    pub mode: EnsembleMode,
    pub seed: u64,
}

impl Ensemble {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn map_trees(
        &self,
        f: impl Fn(&Tree) -> Result<Tree, CoreError> + Sync,
    ) -> Result<Ensemble, CoreError> {
        let trees = self
            .trees
            .iter()
            .map(&f)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Ensemble {
            trees,
            mode: self.mode,
            seed: self.seed,
        })
    }
}

/// n draws with replacement from 0..n.
pub fn bootstrap_indices(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

pub fn fit_forest(
    data: &Dataset,
    criterion: Criterion,
    mode: EnsembleMode,
    n_trees: usize,
    base: &FitParams,
    seed: u64,
) -> Result<Ensemble, CoreError> {
    if n_trees == 0 {
        return Err(CoreError::Domain("an ensemble needs at least one tree".into()));
    }
    if data.n() < 2 {
        return Err(CoreError::Shape(
            "ensembles need at least two samples".into(),
        ));
    }
    let k = (data.m() as f64).sqrt().ceil() as usize;
    let trees: Vec<Tree> = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = seeding::derive(seed, "tree", &[t as u64]);
            match mode {
                EnsembleMode::RandomForest => {
                    let mut rng = seeding::rng_from(seeding::derive(tree_seed, "bootstrap", &[]));
                    let indices = bootstrap_indices(&mut rng, data.n());
                    let resample = data.subset(&indices)?;
                    let params = FitParams {
                        split_mode: SplitMode::Exhaustive,
                        feature_subsample: Some(k),
                        seed: seeding::derive(tree_seed, "fit", &[]),
                        ..base.clone()
                    };
                    Tree::fit(&resample, criterion, &params)
                }
                EnsembleMode::ExtraTrees => {
                    let params = FitParams {
                        split_mode: SplitMode::ExtraRandom,
                        feature_subsample: Some(k),
                        seed: seeding::derive(tree_seed, "fit", &[]),
                        ..base.clone()
                    };
                    Tree::fit(data, criterion, &params)
                }
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Ensemble { trees, mode, seed })
}

/// Mean of the per-tree leaf vectors, accumulated in tree order.
pub fn predict_soft_ensemble(e: &Ensemble, x: &[f64]) -> Result<Vec<f64>, CoreError> {
    let first = e.trees.first().ok_or_else(|| {
        CoreError::Domain("an ensemble needs at least one tree".into())
    })?;
    let mut acc = vec![0.0; first.n_classes()];
    for tree in &e.trees {
        let soft = tree.predict_soft(x)?;
        for (a, &v) in acc.iter_mut().zip(soft) {
            *a += v;
        }
    }
    let scale = 1.0 / e.trees.len() as f64;
    for a in acc.iter_mut() {
        *a *= scale;
    }
    Ok(acc)
}

pub fn predict_ensemble(e: &Ensemble, x: &[f64]) -> Result<usize, CoreError> {
    Ok(argmax_tie_low(&predict_soft_ensemble(e, x)?))
}
