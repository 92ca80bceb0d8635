use approx::assert_abs_diff_eq;
use noisytree_core::error::CoreError;
use noisytree_core::label_algebra::{
    argmax_tie_low, dot, invert_matrix, mat_vec, one_hot, transpose,
    uniform_inverse_coefficients, TransitionMatrix,
};
use proptest::prelude::*;

#[test]
fn one_hot_indicators() {
    assert_eq!(one_hot(0, 3).unwrap(), vec![1.0, 0.0, 0.0]);
    assert_eq!(one_hot(2, 3).unwrap(), vec![0.0, 0.0, 1.0]);
    assert_eq!(one_hot(1, 2).unwrap(), vec![0.0, 1.0]);
    assert!(matches!(one_hot(3, 3), Err(CoreError::Index { .. })));
}

#[test]
fn argmax_prefers_lowest_index_on_ties() {
    assert_eq!(argmax_tie_low(&[0.2, 0.8]), 1);
    assert_eq!(argmax_tie_low(&[0.5, 0.5]), 0);
    assert_eq!(argmax_tie_low(&[-0.1, 0.05, 0.05]), 1);
    assert_eq!(argmax_tie_low(&[3.0]), 0);
}

#[test]
fn dot_product() {
    assert_abs_diff_eq!(dot(&[1.0, 2.0], &[3.0, 4.0]), 11.0);
    assert_abs_diff_eq!(dot(&[], &[]), 0.0);
}

#[test]
fn ncar_zero_noise_is_identity() {
    let t = TransitionMatrix::ncar(3, 0.0).unwrap();
    for a in 0..3 {
        for b in 0..3 {
            assert_eq!(t.entry(a, b), if a == b { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn ncar_entries_match_definition() {
    let t = TransitionMatrix::ncar(3, 0.2).unwrap();
    for a in 0..3 {
        for b in 0..3 {
            let want = if a == b { 0.8 } else { 0.1 };
            assert_abs_diff_eq!(t.entry(a, b), want, epsilon = 1e-15);
        }
    }
    let t = TransitionMatrix::ncar(2, 0.4).unwrap();
    assert_abs_diff_eq!(t.entry(0, 0), 0.6, epsilon = 1e-15);
    assert_abs_diff_eq!(t.entry(0, 1), 0.4, epsilon = 1e-15);
    assert_abs_diff_eq!(t.entry(1, 0), 0.4, epsilon = 1e-15);
    assert_abs_diff_eq!(t.entry(1, 1), 0.6, epsilon = 1e-15);
}

#[test]
fn ncar_rejects_out_of_range_eta() {
    // The invertibility bound is eta < (c-1)/c, and the error should say so.
    let err = TransitionMatrix::ncar(3, 2.0 / 3.0).unwrap_err();
    match err {
        CoreError::Domain(msg) => assert!(msg.contains("(c-1)/c") || msg.contains("2/3") || msg.contains("0.66"), "unhelpful message: {msg}"),
        other => panic!("wrong error kind: {other}"),
    }
    assert!(TransitionMatrix::ncar(3, -0.1).is_err());
    assert!(TransitionMatrix::ncar(1, 0.1).is_err());
    assert!(TransitionMatrix::ncar(2, 0.49999).is_ok());
}

#[test]
fn constructor_validates_rows() {
    assert!(TransitionMatrix::new(vec![vec![0.5, 0.5], vec![0.5]]).is_err());
    assert!(TransitionMatrix::new(vec![vec![0.7, 0.2], vec![0.5, 0.5]]).is_err());
    assert!(TransitionMatrix::new(vec![vec![1.1, -0.1], vec![0.5, 0.5]]).is_err());
    assert!(TransitionMatrix::new(vec![vec![0.9, 0.1], vec![0.3, 0.7]]).is_ok());
}

#[test]
fn identity_inverts_to_identity() {
    let inv = TransitionMatrix::identity(4).invert().unwrap();
    for a in 0..4 {
        for b in 0..4 {
            assert_abs_diff_eq!(inv[a][b], if a == b { 1.0 } else { 0.0 }, epsilon = 1e-12);
        }
    }
}

#[test]
fn ncar_inverse_has_the_known_closed_form() {
    // For c=3, eta=0.2 the inverse has 9/7 on the diagonal and -1/7 off it.
    let inv = TransitionMatrix::ncar(3, 0.2).unwrap().invert().unwrap();
    for a in 0..3 {
        for b in 0..3 {
            let want = if a == b { 9.0 / 7.0 } else { -1.0 / 7.0 };
            assert_abs_diff_eq!(inv[a][b], want, epsilon = 1e-12);
        }
    }
}

#[test]
fn uniform_coefficients_match_the_eliminated_inverse() {
    let t = TransitionMatrix::ncar(2, 0.2).unwrap();
    let (d, o) = t.uniform_structure().unwrap();
    let (gamma, delta) = uniform_inverse_coefficients(d, o, 2).unwrap();
    assert_abs_diff_eq!(gamma + delta, 4.0 / 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(delta, -1.0 / 3.0, epsilon = 1e-12);
    let inv = t.invert().unwrap();
    assert_abs_diff_eq!(inv[0][0], 4.0 / 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(inv[0][1], -1.0 / 3.0, epsilon = 1e-12);
}

#[test]
fn uniform_structure_detects_non_uniform_matrices() {
    assert!(TransitionMatrix::ncar(4, 0.3).unwrap().uniform_structure().is_some());
    let lopsided = TransitionMatrix::new(vec![vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
    assert!(lopsided.uniform_structure().is_none());
}

#[test]
fn singular_matrix_reports_singularity() {
    let uniform = TransitionMatrix::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
    assert!(matches!(uniform.invert(), Err(CoreError::Singular(_))));
    let raw = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
    assert!(matches!(invert_matrix(&raw), Err(CoreError::Singular(_))));
}

#[test]
fn inverse_rows_of_a_doubly_stochastic_matrix_sum_to_one() {
    // Row sums of T^-1 are 1 whenever T is row-stochastic (T 1 = 1 implies
    // T^-1 1 = 1); the uniform noise matrix is also symmetric, so the same
    // holds for columns.
    for c in [2usize, 3, 5, 8] {
        for eta in [0.1, 0.25, 0.4] {
            let inv = TransitionMatrix::ncar(c, eta).unwrap().invert().unwrap();
            for row in &inv {
                let sum: f64 = row.iter().sum();
                assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
            }
            for b in 0..c {
                let col: f64 = (0..c).map(|a| inv[a][b]).sum();
                assert_abs_diff_eq!(col, 1.0, epsilon = 1e-9);
            }
        }
    }
}

#[test]
fn mat_vec_and_transpose() {
    let m = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
    assert_eq!(mat_vec(&m, &[1.0, 0.0]).unwrap(), vec![1.0, 3.0]);
    assert!(mat_vec(&m, &[1.0]).is_err());
    let mt = transpose(&m);
    assert_eq!(mt, vec![vec![1.0, 3.0], vec![2.0, 4.0]]);
}

#[test]
fn gauss_jordan_handles_a_pivoting_case() {
    // Leading zero forces a row swap.
    let m = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    let inv = invert_matrix(&m).unwrap();
    assert_eq!(inv, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
}

proptest! {
    // T * invert(T) stays within the residual tolerance across the noise
    // grid and class counts used anywhere in the experiments.
    #[test]
    fn inversion_residual_is_tiny(c in 2usize..10, eta_ix in 0usize..5) {
        let eta = [0.0, 0.1, 0.2, 0.3, 0.4][eta_ix];
        let t = TransitionMatrix::ncar(c, eta).unwrap();
        let inv = t.invert().unwrap();
        for a in 0..c {
            for b in 0..c {
                let mut acc = 0.0;
                for k in 0..c {
                    acc += t.entry(a, k) * inv[k][b];
                }
                let want = if a == b { 1.0 } else { 0.0 };
                prop_assert!((acc - want).abs() <= 1e-9);
            }
        }
    }

    // Applying the inverse of a uniform matrix never moves the argmax:
    // the map is x -> gamma x + delta (sum x) 1 with gamma > 0.
    #[test]
    fn uniform_inverse_preserves_argmax(
        v in prop::collection::vec(-1.0f64..1.0, 2..6),
        eta in 0.0f64..0.49,
    ) {
        let c = v.len();
        prop_assume!(eta < (c as f64 - 1.0) / c as f64);
        let t = TransitionMatrix::ncar(c, eta).unwrap();
        let mapped = mat_vec(&t.invert().unwrap(), &v).unwrap();
        prop_assert_eq!(argmax_tie_low(&mapped), argmax_tie_low(&v));
    }
}
