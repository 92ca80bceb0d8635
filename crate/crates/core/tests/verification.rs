use noisytree_core::verification::{
    exact_argmax_cowalk, exact_greedy_structure, plurality_locked_dataset, random_dataset,
    verify_theorems, ExactMode, VerifyScale,
};
use noisytree_core::criteria::Criterion;
use noisytree_core::error::CoreError;
use noisytree_core::seeding;
use noisytree_core::tree::{FitParams, Tree};

#[test]
fn quick_scale_passes_every_suite() {
    let report = verify_theorems(VerifyScale::Quick);
    assert!(
        report.all_passed(),
        "verification failures:\n{}",
        report.render()
    );
    assert_eq!(report.suites.len(), 6);
}

#[test]
fn render_lists_one_line_per_suite() {
    let report = verify_theorems(VerifyScale::Quick);
    let text = report.render();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    for line in lines {
        assert!(line.starts_with("PASS "), "unexpected line: {line}");
    }
    for name in [
        "impurity-loss-identities",
        "forward-structure-and-loss",
        "backward-label-transform",
        "ncar-argmax-invariance",
        "plurality-minimizer",
        "symmetric-zero-gain",
    ] {
        assert!(text.contains(name), "missing suite {name}");
    }
}

#[test]
fn random_dataset_covers_every_class() {
    let mut rng = seeding::rng_from(seeding::derive(3, "test", &[]));
    for _ in 0..50 {
        let data = random_dataset(&mut rng, 40, 4, 4);
        let classes = data.class_indices().unwrap();
        let mut seen = vec![false; data.c()];
        for k in classes {
            seen[k] = true;
        }
        assert!(seen.iter().all(|&s| s), "a class has no samples");
    }
}

#[test]
fn plurality_locked_dataset_has_expected_shape() {
    let data = plurality_locked_dataset(6);
    assert_eq!(data.n(), 20);
    assert_eq!(data.m(), 1);
    assert_eq!(data.c(), 2);
    let classes = data.class_indices().unwrap();
    let minority = classes.iter().filter(|&&k| k == 1).count();
    assert_eq!(minority, 6);
}

// The oracle itself must flag a tree grown with different rules, otherwise
// the structural suites prove nothing.
#[test]
fn exact_oracle_detects_a_wrong_tree() {
    let mut rng = seeding::rng_from(seeding::derive(9, "test", &[]));
    let (data, stump) = loop {
        let data = random_dataset(&mut rng, 25, 3, 3);
        let params = FitParams {
            max_depth: Some(1),
            ..FitParams::default()
        };
        let deep = FitParams::default();
        let stump = Tree::fit(&data, Criterion::GiniMse, &params).unwrap();
        let full = Tree::fit(&data, Criterion::GiniMse, &deep).unwrap();
        if stump.n_leaves() < full.n_leaves() {
            break (data, stump);
        }
    };
    let verdict = exact_argmax_cowalk(&data, ExactMode::Plain, &stump).unwrap();
    assert!(
        verdict.is_some(),
        "a depth-capped tree should disagree with the uncapped recursion"
    );
}

#[test]
fn default_fit_is_an_exact_argmax_path() {
    let mut rng = seeding::rng_from(seeding::derive(10, "test", &[]));
    for case in 0..20 {
        let data = random_dataset(&mut rng, 30, 3, 3);
        let params = FitParams {
            seed: seeding::derive(case, "fit", &[]),
            ..FitParams::default()
        };
        let tree = Tree::fit(&data, Criterion::GiniMse, &params).unwrap();
        let verdict = exact_argmax_cowalk(&data, ExactMode::Plain, &tree).unwrap();
        assert!(verdict.is_none(), "case {case}: {verdict:?}");
    }
}

// Exact structures for the three objectives coincide even on tie-rich data;
// this is the heart of the two structural claims.
#[test]
fn exact_structures_coincide_across_objectives() {
    let mut rng = seeding::rng_from(seeding::derive(12, "test", &[]));
    for case in 0..20 {
        let data = random_dataset(&mut rng, 30, 3, 3);
        let eta_tenths = 1 + (case % 4) as u32;
        let plain = exact_greedy_structure(&data, ExactMode::Plain).unwrap();
        let fwd = exact_greedy_structure(&data, ExactMode::Forward { eta_tenths }).unwrap();
        let back = exact_greedy_structure(&data, ExactMode::Backward { eta_tenths }).unwrap();
        assert!(plain == fwd, "case {case}: forward objective diverged");
        assert!(plain == back, "case {case}: backward objective diverged");
        assert!(plain.n_nodes() >= 1);
    }
}

#[test]
fn exact_oracle_rejects_flip_rates_at_the_invertibility_bound() {
    let mut rng = seeding::rng_from(seeding::derive(11, "test", &[]));
    let data = loop {
        let data = random_dataset(&mut rng, 20, 2, 2);
        if data.c() == 2 {
            break data;
        }
    };
    // 5/10 = (c-1)/c for two classes.
    match exact_greedy_structure(&data, ExactMode::Forward { eta_tenths: 5 }) {
        Err(CoreError::Domain(_)) => {}
        other => panic!("expected a domain error, got {other:?}"),
    }
}
