use std::sync::atomic::{AtomicUsize, Ordering};

use noisytree_core::criteria::Criterion;
use noisytree_core::dataset::Dataset;
use noisytree_core::ensemble::{
    bootstrap_indices, fit_forest, predict_ensemble, predict_soft_ensemble, Ensemble, EnsembleMode,
};
use noisytree_core::error::CoreError;
use noisytree_core::tree::{FitParams, Tree};
use noisytree_core::{correction, label_algebra, seeding};

fn blob_dataset(n: usize) -> Dataset {
    // Two noisy-ish but separable blobs along feature 0, a distractor on 1.
    let rows: Vec<(Vec<f64>, usize)> = (0..n)
        .map(|i| {
            let k = usize::from(i % 2 == 1);
            let x = k as f64 * 4.0 + (i % 7) as f64 * 0.3;
            let d = (i * 31 % 13) as f64;
            (vec![x, d], k)
        })
        .collect();
    Dataset::from_rows(&rows, &["left", "right"]).unwrap()
}

#[test]
fn mode_names_match_the_config_vocabulary() {
    assert_eq!(EnsembleMode::RandomForest.name(), "random_forest");
    assert_eq!(EnsembleMode::ExtraTrees.name(), "extra_trees");
}

#[test]
fn bootstrap_keeps_about_two_thirds_unique() {
    // E[unique fraction] = 1 - (1 - 1/n)^n -> 1 - 1/e ~ 0.632. Averaged over
    // 1000 resamples of n = 100 the estimate lands well inside 0.02.
    let mut rng = seeding::rng_from(seeding::derive(3, "bootstrap-test", &[]));
    let n = 100;
    let mut total_unique = 0usize;
    for _ in 0..1000 {
        let draw = bootstrap_indices(&mut rng, n);
        assert_eq!(draw.len(), n);
        assert!(draw.iter().all(|&i| i < n));
        let mut seen = vec![false; n];
        for &i in &draw {
            seen[i] = true;
        }
        total_unique += seen.iter().filter(|&&s| s).count();
    }
    let frac = total_unique as f64 / (1000 * n) as f64;
    assert!(
        (frac - 0.632).abs() < 0.02,
        "unique fraction {frac} far from 0.632"
    );
}

#[test]
fn forests_are_deterministic_for_a_fixed_seed() {
    let data = blob_dataset(60);
    for mode in [EnsembleMode::RandomForest, EnsembleMode::ExtraTrees] {
        let a = fit_forest(&data, Criterion::GiniMse, mode, 20, &FitParams::default(), 7).unwrap();
        let b = fit_forest(&data, Criterion::GiniMse, mode, 20, &FitParams::default(), 7).unwrap();
        assert_eq!(a.n_trees(), 20);
        for (ta, tb) in a.trees().iter().zip(b.trees()) {
            assert_eq!(ta.to_text(), tb.to_text());
        }
        let c = fit_forest(&data, Criterion::GiniMse, mode, 20, &FitParams::default(), 8).unwrap();
        assert!(a
            .trees()
            .iter()
            .zip(c.trees())
            .any(|(ta, tc)| ta.to_text() != tc.to_text()));
    }
}

#[test]
fn tree_order_does_not_depend_on_the_thread_pool() {
    // Per-tree seeds derive from the tree index, so a single-threaded pool
    // must reproduce the default pool's forest exactly.
    let data = blob_dataset(50);
    let parallel = fit_forest(
        &data,
        Criterion::GiniMse,
        EnsembleMode::RandomForest,
        16,
        &FitParams::default(),
        42,
    )
    .unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = pool
        .install(|| {
            fit_forest(
                &data,
                Criterion::GiniMse,
                EnsembleMode::RandomForest,
                16,
                &FitParams::default(),
                42,
            )
        })
        .unwrap();
    for (a, b) in parallel.trees().iter().zip(serial.trees()) {
        assert_eq!(a.to_text(), b.to_text());
    }
}

#[test]
fn single_extra_tree_matches_its_standalone_fit() {
    // With one tree the ensemble's soft vote is that tree's leaf vector.
    let data = blob_dataset(40);
    let forest = fit_forest(
        &data,
        Criterion::GiniMse,
        EnsembleMode::ExtraTrees,
        1,
        &FitParams::default(),
        5,
    )
    .unwrap();
    let tree = &forest.trees()[0];
    for i in 0..data.n() {
        let x = data.feature_row(i);
        assert_eq!(
            predict_soft_ensemble(&forest, x).unwrap(),
            tree.predict_soft(x).unwrap()
        );
        assert_eq!(predict_ensemble(&forest, x).unwrap(), tree.predict(x).unwrap());
    }
}

fn pure_stump(k: usize) -> Tree {
    let rows: Vec<(Vec<f64>, usize)> = vec![(vec![0.0], k), (vec![1.0], k)];
    let data = Dataset::from_rows(&rows, &["a", "b"]).unwrap();
    Tree::fit(&data, Criterion::GiniMse, &FitParams::default()).unwrap()
}

// A fitted forest of the right size whose trees are swapped for the given
// hand-built ones, so voting can be checked against known leaves.
fn forest_of(trees: &[Tree]) -> Ensemble {
    let forest = fit_forest(
        &blob_dataset(10),
        Criterion::GiniMse,
        EnsembleMode::ExtraTrees,
        trees.len(),
        &FitParams::default(),
        1,
    )
    .unwrap();
    let next = AtomicUsize::new(0);
    forest
        .map_trees(|_| Ok(trees[next.fetch_add(1, Ordering::Relaxed)].clone()))
        .unwrap()
}

#[test]
fn soft_vote_averages_leaf_vectors() {
    // Two stumps that disagree: leaves (1,0) and (0,1) average to (0.5, 0.5),
    // and the tie resolves to class 0.
    let forest = forest_of(&[pure_stump(0), pure_stump(1)]);
    let soft = predict_soft_ensemble(&forest, &[0.5]).unwrap();
    assert_eq!(soft, vec![0.5, 0.5]);
    assert_eq!(predict_ensemble(&forest, &[0.5]).unwrap(), 0);
}

#[test]
fn majority_of_pure_trees_wins() {
    let forest = forest_of(&[pure_stump(1), pure_stump(1), pure_stump(0)]);
    assert_eq!(predict_ensemble(&forest, &[0.5]).unwrap(), 1);
}

#[test]
fn forests_fit_the_training_blobs() {
    let data = blob_dataset(80);
    for mode in [EnsembleMode::RandomForest, EnsembleMode::ExtraTrees] {
        let forest = fit_forest(&data, Criterion::GiniMse, mode, 30, &FitParams::default(), 9)
            .unwrap();
        let correct = (0..data.n())
            .filter(|&i| {
                predict_ensemble(&forest, data.feature_row(i)).unwrap()
                    == data.class_indices().unwrap()[i]
            })
            .count();
        assert!(
            correct as f64 / data.n() as f64 > 0.9,
            "{} got {correct}/{}",
            mode.name(),
            data.n()
        );
    }
}

#[test]
fn forward_correcting_an_ensemble_maps_every_tree() {
    let data = blob_dataset(40);
    let forest = fit_forest(
        &data,
        Criterion::GiniMse,
        EnsembleMode::RandomForest,
        8,
        &FitParams::default(),
        13,
    )
    .unwrap();
    let t = label_algebra::TransitionMatrix::ncar(2, 0.2).unwrap();
    let corrected = correction::forward_correct_ensemble(&forest, &t).unwrap();
    assert_eq!(corrected.n_trees(), forest.n_trees());
    for (orig, fixed) in forest.trees().iter().zip(corrected.trees()) {
        assert!(orig.structural_equal(fixed));
    }
    // Corrected and uncorrected ensembles agree on every training point.
    for i in 0..data.n() {
        let x = data.feature_row(i);
        assert_eq!(
            predict_ensemble(&forest, x).unwrap(),
            predict_ensemble(&corrected, x).unwrap()
        );
    }
}

#[test]
fn degenerate_inputs_are_rejected() {
    let data = blob_dataset(10);
    assert!(matches!(
        fit_forest(
            &data,
            Criterion::GiniMse,
            EnsembleMode::RandomForest,
            0,
            &FitParams::default(),
            1,
        ),
        Err(CoreError::Domain(_))
    ));
    let tiny = Dataset::from_rows(&[(vec![0.0], 0)], &["a", "b"]).unwrap();
    assert!(matches!(
        fit_forest(
            &tiny,
            Criterion::GiniMse,
            EnsembleMode::RandomForest,
            4,
            &FitParams::default(),
            1,
        ),
        Err(CoreError::Shape(_))
    ));
}

#[test]
fn map_trees_propagates_errors() {
    let data = blob_dataset(20);
    let forest = fit_forest(
        &data,
        Criterion::GiniMse,
        EnsembleMode::ExtraTrees,
        4,
        &FitParams::default(),
        2,
    )
    .unwrap();
    let result: Result<Ensemble, CoreError> =
        forest.map_trees(|_| Err(CoreError::Domain("boom".into())));
    assert!(matches!(result, Err(CoreError::Domain(_))));
}
