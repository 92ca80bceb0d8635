use approx::assert_abs_diff_eq;
use noisytree_core::criteria::{
    ce_loss, entropy_impurity, gini_impurity, leaf_stats, mae_impurity, mae_loss,
    minimize_leaf_bruteforce, mse_loss, plurality_leaf, Criterion,
};
use noisytree_core::error::CoreError;
use proptest::prelude::*;

#[test]
fn criterion_names_and_leaf_rules() {
    assert_eq!(Criterion::GiniMse.name(), "gini_mse");
    assert_eq!(Criterion::EntropyCe.name(), "entropy_ce");
    assert_eq!(Criterion::SymmetricMae.name(), "symmetric_mae");
    assert!(Criterion::GiniMse.mean_leaf());
    assert!(Criterion::EntropyCe.mean_leaf());
    assert!(!Criterion::SymmetricMae.mean_leaf());
}

#[test]
fn gini_examples() {
    assert_abs_diff_eq!(gini_impurity(&[1.0, 0.0, 0.0]), 0.0);
    assert_abs_diff_eq!(gini_impurity(&[0.5, 0.5]), 0.5);
    assert_abs_diff_eq!(gini_impurity(&[1.0 / 3.0; 3]), 2.0 / 3.0, epsilon = 1e-15);
}

#[test]
fn entropy_examples() {
    assert_abs_diff_eq!(entropy_impurity(&[1.0, 0.0]).unwrap(), 0.0);
    assert_abs_diff_eq!(entropy_impurity(&[0.5, 0.5]).unwrap(), 2f64.ln(), epsilon = 1e-15);
    assert_abs_diff_eq!(
        entropy_impurity(&[0.25, 0.75]).unwrap(),
        0.5623351446188083,
        epsilon = 1e-12
    );
    assert!(matches!(
        entropy_impurity(&[-0.1, 1.1]),
        Err(CoreError::Domain(_))
    ));
}

#[test]
fn mae_impurity_examples() {
    assert_abs_diff_eq!(mae_impurity(&[1.0, 0.0]), 0.0);
    assert_abs_diff_eq!(mae_impurity(&[0.5, 0.5]), 1.0);
    assert_abs_diff_eq!(mae_impurity(&[0.2, 0.3, 0.5]), 1.0, epsilon = 1e-15);
}

#[test]
fn mse_examples() {
    assert_abs_diff_eq!(mse_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
    assert_abs_diff_eq!(mse_loss(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 0.5);
    assert_abs_diff_eq!(
        mse_loss(&[0.0, 1.0, 0.0], &[1.0 / 3.0; 3]).unwrap(),
        2.0 / 3.0,
        epsilon = 1e-15
    );
    assert!(matches!(
        mse_loss(&[1.0], &[0.5, 0.5]),
        Err(CoreError::Shape(_))
    ));
}

#[test]
fn ce_examples() {
    assert_abs_diff_eq!(ce_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
    assert_abs_diff_eq!(ce_loss(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 2f64.ln(), epsilon = 1e-15);
    assert_abs_diff_eq!(
        ce_loss(&[0.0, 0.0, 1.0], &[0.2, 0.3, 0.5]).unwrap(),
        -(0.5f64.ln()),
        epsilon = 1e-15
    );
    // Prediction mass zero where the label has weight is an infinite loss,
    // not an error.
    assert!(ce_loss(&[1.0, 0.0], &[0.0, 1.0]).unwrap().is_infinite());
    // Zero-weight entries are skipped, so a zero prediction there is fine.
    assert_abs_diff_eq!(ce_loss(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), 0.0);
    assert!(matches!(
        ce_loss(&[1.0, 0.0], &[-0.2, 1.2]),
        Err(CoreError::Domain(_))
    ));
}

#[test]
fn mae_examples() {
    assert_abs_diff_eq!(mae_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
    assert_abs_diff_eq!(
        mae_loss(&[1.0, 0.0, 0.0], &[1.0 / 3.0; 3]).unwrap(),
        4.0 / 3.0,
        epsilon = 1e-15
    );
    // Off-simplex predictions are rejected; the symmetry constant depends
    // on the simplex restriction.
    assert!(matches!(
        mae_loss(&[1.0, 0.0], &[0.7, 0.7]),
        Err(CoreError::Domain(_))
    ));
    assert!(matches!(
        mae_loss(&[1.0, 0.0], &[1.2, -0.2]),
        Err(CoreError::Domain(_))
    ));
}

#[test]
fn mae_symmetry_constant_for_four_classes() {
    let yhat = [0.1, 0.2, 0.3, 0.4];
    let mut total = 0.0;
    for k in 0..4 {
        let mut y = [0.0; 4];
        y[k] = 1.0;
        total += mae_loss(&y, &yhat).unwrap();
    }
    assert_abs_diff_eq!(total, 6.0, epsilon = 1e-12);
}

#[test]
fn leaf_stats_examples() {
    let labels = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let s = leaf_stats(&labels, &[1.0, 1.0]).unwrap();
    assert_eq!(s.mean_label, vec![0.5, 0.5]);
    assert_eq!(s.weight, 2.0);

    let s = leaf_stats(&labels, &[1.0, 0.0]).unwrap();
    assert_eq!(s.mean_label, vec![1.0, 0.0]);
    assert_eq!(s.weight, 1.0);

    let soft = vec![vec![0.9, 0.1], vec![0.7, 0.3]];
    let s = leaf_stats(&soft, &[1.0, 1.0]).unwrap();
    assert_abs_diff_eq!(s.mean_label[0], 0.8, epsilon = 1e-15);
    assert_abs_diff_eq!(s.mean_label[1], 0.2, epsilon = 1e-15);

    assert!(matches!(
        leaf_stats(&labels, &[0.0, 0.0]),
        Err(CoreError::EmptyLeaf)
    ));
    assert!(matches!(
        leaf_stats(&labels, &[1.0]),
        Err(CoreError::Shape(_))
    ));
}

#[test]
fn plurality_examples() {
    let stats = |w: &[f64]| {
        let labels: Vec<Vec<f64>> = (0..w.len())
            .map(|k| {
                let mut v = vec![0.0; w.len()];
                v[k] = 1.0;
                v
            })
            .collect();
        leaf_stats(&labels, w).unwrap()
    };
    assert_eq!(plurality_leaf(&stats(&[3.0, 1.0, 1.0])), vec![1.0, 0.0, 0.0]);
    assert_eq!(plurality_leaf(&stats(&[2.0, 2.0])), vec![1.0, 0.0]);
    assert_eq!(plurality_leaf(&stats(&[0.0, 5.0, 4.0])), vec![0.0, 1.0, 0.0]);
}

#[test]
fn bruteforce_examples() {
    let v = minimize_leaf_bruteforce(mae_loss, &[3.0, 1.0], 0.05).unwrap();
    assert_eq!(v, vec![1.0, 0.0]);

    let v = minimize_leaf_bruteforce(mse_loss, &[3.0, 1.0], 0.05).unwrap();
    assert_abs_diff_eq!(v[0], 0.75, epsilon = 1e-12);
    assert_abs_diff_eq!(v[1], 0.25, epsilon = 1e-12);

    for loss in [mae_loss as fn(&[f64], &[f64]) -> Result<f64, CoreError>, mse_loss, ce_loss] {
        let v = minimize_leaf_bruteforce(loss, &[7.0, 0.0, 0.0], 0.1).unwrap();
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
    }
}

#[test]
fn bruteforce_guards() {
    assert!(matches!(
        minimize_leaf_bruteforce(mse_loss, &[1.0; 5], 0.5),
        Err(CoreError::Capacity(_))
    ));
    // Step must tile the interval exactly.
    assert!(matches!(
        minimize_leaf_bruteforce(mse_loss, &[1.0, 1.0], 0.3),
        Err(CoreError::Domain(_))
    ));
    assert!(minimize_leaf_bruteforce(mse_loss, &[1.0, 1.0], 0.25).is_ok());
}

#[test]
fn criterion_dispatch_matches_the_free_functions() {
    let v = [0.25, 0.75];
    assert_eq!(
        Criterion::GiniMse.impurity(&v).unwrap(),
        gini_impurity(&v)
    );
    assert_eq!(
        Criterion::EntropyCe.impurity(&v).unwrap(),
        entropy_impurity(&v).unwrap()
    );
    assert_eq!(Criterion::SymmetricMae.impurity(&v).unwrap(), mae_impurity(&v));
    let y = [1.0, 0.0];
    let p = [0.6, 0.4];
    assert_eq!(
        Criterion::GiniMse.loss(&y, &p).unwrap(),
        mse_loss(&y, &p).unwrap()
    );
    assert_eq!(
        Criterion::EntropyCe.loss(&y, &p).unwrap(),
        ce_loss(&y, &p).unwrap()
    );
    assert_eq!(
        Criterion::SymmetricMae.loss(&y, &p).unwrap(),
        mae_loss(&y, &p).unwrap()
    );
}

fn simplex_strategy(c: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6f64..1.0, c).prop_map(|raw| {
        let s: f64 = raw.iter().sum();
        raw.iter().map(|x| x / s).collect()
    })
}

proptest! {
    // The one-hot loss sum over classes is a constant 2(c-1) on the simplex,
    // independent of the prediction.
    #[test]
    fn mae_symmetry_holds_on_random_simplex_points(yhat in simplex_strategy(3)) {
        let mut total = 0.0;
        for k in 0..3 {
            let mut y = vec![0.0; 3];
            y[k] = 1.0;
            total += mae_loss(&y, &yhat).unwrap();
        }
        prop_assert!((total - 4.0).abs() < 1e-9);
    }

    // Impurity of the mean equals mean loss against the mean for both
    // mean-leaf criteria, evaluated directly on simplex points.
    #[test]
    fn impurity_equals_self_loss(v in simplex_strategy(4)) {
        let g = gini_impurity(&v);
        let direct = mse_loss(&v, &v).unwrap();
        // gini(v) = 1 - |v|^2 and mse(v, v) = 0; the identity that matters
        // is against one-hot draws: E mse(e_k, v) with weights v equals gini.
        prop_assert!(direct.abs() < 1e-15);
        let mut expected = 0.0;
        for k in 0..4 {
            let mut e = vec![0.0; 4];
            e[k] = 1.0;
            expected += v[k] * mse_loss(&e, &v).unwrap();
        }
        prop_assert!((expected - g).abs() < 1e-12);

        let h = entropy_impurity(&v).unwrap();
        let mut expected = 0.0;
        for k in 0..4 {
            let mut e = vec![0.0; 4];
            e[k] = 1.0;
            expected += v[k] * ce_loss(&e, &v).unwrap();
        }
        prop_assert!((expected - h).abs() < 1e-12);
    }
}
