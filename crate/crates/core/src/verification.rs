//! Runnable suites for the structural and numerical invariants the
//! correction machinery promises. Each suite draws seeded random instances,
//! checks one family of claims, and reports failures as strings instead of
//! panicking, so error paths in the components surface as readable suite
//! failures.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::correction::{
    backward_transform, corrected_training_loss, forward_correct, forward_corrected_loss,
    mse_soft_label_offset, InverseApplier,
};
use crate::criteria::{
    ce_loss, leaf_stats, mae_loss, minimize_leaf_bruteforce, mse_loss, plurality_leaf, Criterion,
};
use crate::dataset::Dataset;
use crate::error::CoreError;
use crate::label_algebra::{argmax_tie_low, one_hot, TransitionMatrix};
use crate::seeding;
use crate::tree::{FitParams, Node, Tree};

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyScale {
    Quick,
    Full,
}

#[derive(Debug)]
pub struct SuiteResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: Vec<String>,
    pub wall_ms: u64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.suites.iter().all(SuiteResult::passed)
    }

    /// One line per suite; failing suites list their first few failures.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.suites {
            let status = if s.passed() { "PASS" } else { "FAIL" };
            out.push_str(&format!(
                "{status} {} ({} cases, {} ms)\n",
                s.name, s.cases, s.wall_ms
            ));
            for f in s.failures.iter().take(5) {
                out.push_str(&format!("  - {f}\n"));
            }
            if s.failures.len() > 5 {
                out.push_str(&format!("  ... and {} more\n", s.failures.len() - 5));
            }
        }
        out
    }
}

pub fn verify_theorems(scale: VerifyScale) -> VerifyReport {
    let datasets = match scale {
        VerifyScale::Quick => 25,
        VerifyScale::Full => 100,
    };
    let weights = match scale {
        VerifyScale::Quick => 100,
        VerifyScale::Full => 500,
    };
    VerifyReport {
        suites: vec![
            suite_impurity_loss_identities(datasets),
            suite_forward_structure_and_loss(datasets),
            suite_backward_label_transform(datasets),
            suite_argmax_invariance(datasets),
            suite_plurality_minimizer(weights),
            suite_symmetric_zero_gain(),
        ],
    }
}

/// Random one-hot dataset with every class present at least once.
pub fn random_dataset(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize, max_c: usize) -> Dataset {
    let c = rng.gen_range(2..=max_c.max(2));
    let n = rng.gen_range(max_c.max(10)..=max_n.max(10 + max_c));
    let m = rng.gen_range(1..=max_m.max(1));
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let x: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
        let k = if i < c { i } else { rng.gen_range(0..c) };
        rows.push((x, k));
    }
    let names: Vec<String> = (0..c).map(|k| format!("c{k}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    Dataset::from_rows(&rows, &refs).expect("generator output is well-formed")
}

fn random_simplex(rng: &mut ChaCha8Rng, c: usize) -> Vec<f64> {
    // Normalized exponentials give a strictly positive interior point.
    let raw: Vec<f64> = (0..c).map(|_| -f64::ln(rng.gen_range(1e-12..1.0))).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|x| x / sum).collect()
}

fn etas() -> [f64; 4] {
    [0.1, 0.2, 0.3, 0.4]
}

fn timed(f: impl FnOnce(&mut Vec<String>) -> usize) -> (usize, Vec<String>, u64) {
    let start = std::time::Instant::now();
    let mut failures = Vec::new();
    let cases = f(&mut failures);
    (cases, failures, start.elapsed().as_millis() as u64)
}

/// Weighted impurity sums equal mean training losses for both mean-leaf
/// criteria, and the stacked per-class loss vector contracts with a one-hot
/// label to the plain loss.
fn suite_impurity_loss_identities(n_datasets: usize) -> SuiteResult {
    let (cases, failures, wall_ms) = timed(|failures| {
        let mut rng = seeding::rng_from(seeding::derive(0xA11CE, "suite-identities", &[]));
        let mut cases = 0;
        for case in 0..n_datasets {
            let data = random_dataset(&mut rng, 200, 5, 4);
            for criterion in [Criterion::GiniMse, Criterion::EntropyCe] {
                cases += 1;
                let params = FitParams {
                    seed: seeding::derive(7, "fit", &[case as u64]),
                    ..FitParams::default()
                };
                match Tree::fit(&data, criterion, &params)
                    .and_then(|tree| tree.total_training_loss(&data, criterion))
                {
                    Ok((by_impurity, by_loss)) => {
                        if (by_impurity - by_loss).abs() > TOL {
                            failures.push(format!(
                                "case {case} {}: impurity sum {by_impurity} vs loss {by_loss}",
                                criterion.name()
                            ));
                        }
                    }
                    Err(e) => failures.push(format!("case {case} {}: {e}", criterion.name())),
                }
            }
            // One-hot contraction of the stacked loss vector.
            cases += 1;
            let c = data.c();
            let yhat = random_simplex(&mut rng, c);
            for j in 0..c {
                let y = one_hot(j, c).expect("j < c");
                for (name, loss) in [("mse", mse_loss as fn(&[f64], &[f64]) -> Result<f64, CoreError>), ("ce", ce_loss as fn(&[f64], &[f64]) -> Result<f64, CoreError>)] {
                    let direct = match loss(&y, &yhat) {
                        Ok(v) => v,
                        Err(e) => {
                            failures.push(format!("case {case} {name}: {e}"));
                            continue;
                        }
                    };
                    let mut contracted = 0.0;
                    let mut ok = true;
                    for k in 0..c {
                        let e_k = one_hot(k, c).expect("k < c");
                        match loss(&e_k, &yhat) {
                            Ok(v) => contracted += y[k] * v,
                            Err(e) => {
                                failures.push(format!("case {case} {name}: {e}"));
                                ok = false;
                                break;
                            }
                        }
                    }
                    if ok && (contracted - direct).abs() > TOL {
                        failures.push(format!(
                            "case {case} {name}: contraction {contracted} vs direct {direct}"
                        ));
                    }
                }
            }
        }
        cases
    });
    SuiteResult {
        name: "impurity-loss-identities",
        cases,
        failures,
        wall_ms,
    }
}

/// Forward correction leaves structure untouched by construction and leaves
/// the corrected training loss equal to the uncorrected one. An honest refit
/// under the corrected split objective, run in exact rational arithmetic so
/// real-arithmetic gain ties stay ties, reproduces the fitted structure node
/// for node.
fn suite_forward_structure_and_loss(n_datasets: usize) -> SuiteResult {
    let (cases, failures, wall_ms) = timed(|failures| {
        let mut rng = seeding::rng_from(seeding::derive(0xF0 + 1, "suite-forward", &[]));
        let mut cases = 0;
        for case in 0..n_datasets {
            cases += 1;
            let large = random_dataset(&mut rng, 200, 5, 4);
            let small = random_dataset(&mut rng, 30, 3, 3);
            let eta = etas()[case % 4];
            let eta_tenths = (eta * 10.0).round() as u32;
            let params = FitParams {
                seed: seeding::derive(11, "fit", &[case as u64]),
                ..FitParams::default()
            };
            let run = || -> Result<Option<String>, CoreError> {
                let t_large = TransitionMatrix::ncar(large.c(), eta)?;
                let tree = Tree::fit(&large, Criterion::GiniMse, &params)?;
                let corrected = forward_correct(&tree, &t_large)?;
                if !tree.structural_equal(&corrected) {
                    return Ok(Some(format!("case {case}: leaf transform changed structure")));
                }
                let plain = tree.total_training_loss(&large, Criterion::GiniMse)?.1;
                let through_t =
                    forward_corrected_loss(&corrected, &large, &t_large, Criterion::GiniMse)?;
                if (plain - through_t).abs() > TOL {
                    return Ok(Some(format!(
                        "case {case}: corrected loss {through_t} vs plain {plain}"
                    )));
                }
                let exact_plain = exact_greedy_structure(&small, ExactMode::Plain)?;
                let exact_fwd =
                    exact_greedy_structure(&small, ExactMode::Forward { eta_tenths })?;
                if exact_plain != exact_fwd {
                    return Ok(Some(format!(
                        "case {case}: corrected split objective changed the greedy structure"
                    )));
                }
                // The fitted tree must be an argmax path of the corrected
                // objective too (tie-break jitter aside, the gains agree).
                let small_tree = Tree::fit(&small, Criterion::GiniMse, &params)?;
                if let Some(msg) =
                    exact_argmax_cowalk(&small, ExactMode::Forward { eta_tenths }, &small_tree)?
                {
                    return Ok(Some(format!("case {case}: {msg}")));
                }
                Ok(None)
            };
            match run() {
                Ok(None) => {}
                Ok(Some(msg)) => failures.push(msg),
                Err(e) => failures.push(format!("case {case}: {e}")),
            }
        }
        cases
    });
    SuiteResult {
        name: "forward-structure-and-loss",
        cases,
        failures,
        wall_ms,
    }
}

/// Fitting on transformed labels produces leaf values equal to the weighted
/// means of the transformed labels and, up to the exact soft-label offset,
/// the same training loss the corrected-loss oracle reports. Under the
/// uniform noise model the transform rescales every gain by a positive
/// constant, so the greedy structure is unchanged; that claim is checked in
/// exact rational arithmetic, where gain ties survive the rescaling (the f64
/// fit may break real-arithmetic ties differently after the transform).
fn suite_backward_label_transform(n_datasets: usize) -> SuiteResult {
    let (cases, failures, wall_ms) = timed(|failures| {
        let mut rng = seeding::rng_from(seeding::derive(0xBAC4, "suite-backward", &[]));
        let mut cases = 0;
        for case in 0..n_datasets {
            cases += 1;
            let data = random_dataset(&mut rng, 200, 5, 4);
            let small = random_dataset(&mut rng, 30, 3, 3);
            let eta = etas()[case % 4];
            let eta_tenths = (eta * 10.0).round() as u32;
            let params = FitParams {
                seed: seeding::derive(13, "fit", &[case as u64]),
                ..FitParams::default()
            };
            let run = || -> Result<Option<String>, CoreError> {
                let t = TransitionMatrix::ncar(data.c(), eta)?;
                let transformed = backward_transform(&data, &t)?;
                let fitted = Tree::fit(&transformed, Criterion::GiniMse, &params)?;

                // Leaf values are the means of the transformed labels that
                // route there.
                let mut by_leaf: std::collections::HashMap<usize, Vec<usize>> =
                    std::collections::HashMap::new();
                for i in 0..transformed.n() {
                    by_leaf
                        .entry(fitted.leaf_for(transformed.feature_row(i))?)
                        .or_default()
                        .push(i);
                }
                for (leaf, members) in &by_leaf {
                    let labels: Vec<Vec<f64>> = members
                        .iter()
                        .map(|&i| transformed.label(i).to_vec())
                        .collect();
                    let stats = leaf_stats(&labels, &vec![1.0; labels.len()])?;
                    if let Node::Leaf { value, .. } = fitted.node(*leaf) {
                        let gap = value
                            .iter()
                            .zip(&stats.mean_label)
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0, f64::max);
                        if gap > TOL {
                            return Ok(Some(format!(
                                "case {case}: leaf value off the routed mean by {gap}"
                            )));
                        }
                    }
                }

                // Corrected-loss oracle vs plain loss on transformed labels.
                let oracle = corrected_training_loss(&fitted, &data, &t, Criterion::GiniMse)?;
                let plain = fitted.total_training_loss(&transformed, Criterion::GiniMse)?.1;
                let offset = mse_soft_label_offset(&transformed);
                if (oracle - (plain + offset)).abs() > TOL {
                    return Ok(Some(format!(
                        "case {case}: oracle {oracle} vs plain {plain} + offset {offset}"
                    )));
                }

                // Exact-match route for the linear loss: contraction equals
                // the plain cross-entropy against a strictly positive root
                // leaf.
                let stump_params = FitParams {
                    max_depth: Some(0),
                    ..params.clone()
                };
                let stump = Tree::fit(&data, Criterion::GiniMse, &stump_params)?;
                let ce_oracle = corrected_training_loss(&stump, &data, &t, Criterion::EntropyCe)?;
                let mut ce_plain = 0.0;
                for i in 0..data.n() {
                    let yhat = stump.predict_soft(data.feature_row(i))?;
                    ce_plain += ce_loss(transformed.label(i), yhat)?;
                }
                ce_plain /= data.n() as f64;
                if (ce_oracle - ce_plain).abs() > TOL {
                    return Ok(Some(format!(
                        "case {case}: linear-loss oracle {ce_oracle} vs plain {ce_plain}"
                    )));
                }

                // Structural null result under uniform noise, in exact
                // arithmetic; both production fits (plain labels and
                // transformed labels) must be argmax paths of the
                // transformed objective.
                let exact_plain = exact_greedy_structure(&small, ExactMode::Plain)?;
                let exact_back =
                    exact_greedy_structure(&small, ExactMode::Backward { eta_tenths })?;
                if exact_plain != exact_back {
                    return Ok(Some(format!(
                        "case {case}: transformed-label objective changed the greedy structure"
                    )));
                }
                let small_fit = Tree::fit(&small, Criterion::GiniMse, &params)?;
                if let Some(msg) =
                    exact_argmax_cowalk(&small, ExactMode::Backward { eta_tenths }, &small_fit)?
                {
                    return Ok(Some(format!("case {case}: plain fit: {msg}")));
                }
                let t_small = TransitionMatrix::ncar(small.c(), eta)?;
                let small_back_fit = Tree::fit(
                    &backward_transform(&small, &t_small)?,
                    Criterion::GiniMse,
                    &params,
                )?;
                if let Some(msg) = exact_argmax_cowalk(
                    &small,
                    ExactMode::Backward { eta_tenths },
                    &small_back_fit,
                )? {
                    return Ok(Some(format!("case {case}: transformed fit: {msg}")));
                }
                Ok(None)
            };
            match run() {
                Ok(None) => {}
                Ok(Some(msg)) => failures.push(msg),
                Err(e) => failures.push(format!("case {case}: {e}")),
            }
        }
        cases
    });
    SuiteResult {
        name: "backward-label-transform",
        cases,
        failures,
        wall_ms,
    }
}

/// The inverse of a uniform noise matrix is a positive-affine map per
/// component, so argmaxes survive it, both on raw vectors and through tree
/// predictions. Singular inputs must surface errors, not crashes.
fn suite_argmax_invariance(n_datasets: usize) -> SuiteResult {
    let (cases, failures, wall_ms) = timed(|failures| {
        let mut rng = seeding::rng_from(seeding::derive(0xA6A, "suite-argmax", &[]));
        let mut cases = 0;
        for case in 0..n_datasets {
            cases += 1;
            let c = rng.gen_range(2..=10usize);
            let eta = etas()[case % 4];
            let mut run = || -> Result<Option<String>, CoreError> {
                let t = TransitionMatrix::ncar(c, eta)?;
                let applier = InverseApplier::new(&t)?;
                for _ in 0..20 {
                    let v: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let mapped = applier.apply(&v)?;
                    if argmax_tie_low(&mapped) != argmax_tie_low(&v) {
                        return Ok(Some(format!("case {case}: argmax moved under the inverse")));
                    }
                    let inv = t.invert()?;
                    let mapped2 = crate::label_algebra::mat_vec(&inv, &v)?;
                    if argmax_tie_low(&mapped2) != argmax_tie_low(&v) {
                        return Ok(Some(format!(
                            "case {case}: argmax moved under the eliminated inverse"
                        )));
                    }
                }
                Ok(None)
            };
            match run() {
                Ok(None) => {}
                Ok(Some(msg)) => failures.push(msg),
                Err(e) => failures.push(format!("case {case}: {e}")),
            }

            // Tree-level invariance on fresh test points.
            cases += 1;
            let data = random_dataset(&mut rng, 120, 4, 4);
            let eta = etas()[(case + 1) % 4];
            let params = FitParams {
                seed: seeding::derive(17, "fit", &[case as u64]),
                ..FitParams::default()
            };
            let mut run = || -> Result<Option<String>, CoreError> {
                let t = TransitionMatrix::ncar(data.c(), eta)?;
                let tree = Tree::fit(&data, Criterion::GiniMse, &params)?;
                let corrected = forward_correct(&tree, &t)?;
                for _ in 0..50 {
                    let x: Vec<f64> = (0..data.m()).map(|_| rng.gen_range(-0.2..1.2)).collect();
                    if tree.predict(&x)? != corrected.predict(&x)? {
                        return Ok(Some(format!("case {case}: prediction changed")));
                    }
                }
                Ok(None)
            };
            match run() {
                Ok(None) => {}
                Ok(Some(msg)) => failures.push(msg),
                Err(e) => failures.push(format!("case {case}: {e}")),
            }
        }

        // Deliberately broken matrices must error cleanly.
        cases += 1;
        let c = 3;
        let uniform = TransitionMatrix::new(vec![vec![1.0 / c as f64; c]; c]);
        match uniform {
            Ok(t) => match t.invert() {
                Err(CoreError::Singular(_)) => {}
                Err(e) => failures.push(format!("singular input: wrong error kind: {e}")),
                Ok(_) => failures.push("singular input: inversion did not fail".into()),
            },
            Err(e) => failures.push(format!("uniform matrix construction: {e}")),
        }
        match TransitionMatrix::ncar(3, 2.0 / 3.0) {
            Err(CoreError::Domain(_)) => {}
            Err(e) => failures.push(format!("eta at the bound: wrong error kind: {e}")),
            Ok(_) => failures.push("eta at the bound was accepted".into()),
        }
        cases
    });
    SuiteResult {
        name: "ncar-argmax-invariance",
        cases,
        failures,
        wall_ms,
    }
}

/// Brute-force simplex minimization of the symmetric leaf objective returns
/// a plurality indicator; for the squared loss it returns the lattice point
/// nearest the normalized weights.
fn suite_plurality_minimizer(n_weights: usize) -> SuiteResult {
    let (cases, failures, wall_ms) = timed(|failures| {
        let mut rng = seeding::rng_from(seeding::derive(0x97, "suite-plurality", &[]));
        let mut cases = 0;
        for case in 0..n_weights {
            cases += 1;
            let c = rng.gen_range(2..=4usize);
            let mut w: Vec<f64> = (0..c).map(|_| rng.gen_range(0.05..1.0)).collect();
            // Nudge the heaviest class so the plurality is unambiguous.
            let top = argmax_tie_low(&w);
            w[top] += 1e-3;
            let step = if case % 5 == 0 { 0.02 } else { 0.05 };
            let run = || -> Result<Option<String>, CoreError> {
                let by_grid = minimize_leaf_bruteforce(mae_loss, &w, step)?;
                let stats = leaf_stats(
                    &(0..c).map(|k| one_hot(k, c)).collect::<Result<Vec<_>, _>>()?,
                    &w,
                )?;
                let analytic = plurality_leaf(&stats);
                if by_grid != analytic {
                    return Ok(Some(format!(
                        "case {case}: grid minimizer {by_grid:?} vs plurality {analytic:?}"
                    )));
                }
                let by_grid_mse = minimize_leaf_bruteforce(mse_loss, &w, step)?;
                let total: f64 = w.iter().sum();
                let mean: Vec<f64> = w.iter().map(|x| x / total).collect();
                let nearest = nearest_lattice_point(&mean, step);
                let d_grid = sq_dist(&by_grid_mse, &mean);
                let d_near = sq_dist(&nearest, &mean);
                if d_grid > d_near + 1e-12 {
                    return Ok(Some(format!(
                        "case {case}: squared-loss minimizer is {d_grid} from the mean, lattice best is {d_near}"
                    )));
                }
                Ok(None)
            };
            match run() {
                Ok(None) => {}
                Ok(Some(msg)) => failures.push(msg),
                Err(e) => failures.push(format!("case {case}: {e}")),
            }
        }
        cases
    });
    SuiteResult {
        name: "plurality-minimizer",
        cases,
        failures,
        wall_ms,
    }
}

/// On a two-class dataset where class 0 is the strict plurality of every
/// prefix and suffix, every candidate split hands both children the same
/// plurality leaf, so the symmetric criterion sees zero gain everywhere and
/// fits a single leaf; the Gini criterion splits the same data.
fn suite_symmetric_zero_gain() -> SuiteResult {
    let (cases, failures, wall_ms) = timed(|failures| {
        let mut cases = 0;
        for (case, repeats) in [6usize, 16, 66].iter().enumerate() {
            cases += 1;
            let data = plurality_locked_dataset(*repeats);
            let params = FitParams::default();
            match Tree::fit(&data, Criterion::SymmetricMae, &params) {
                Ok(tree) => {
                    if tree.n_leaves() != 1 {
                        failures.push(format!(
                            "case {case}: symmetric fit grew {} leaves, expected 1",
                            tree.n_leaves()
                        ));
                    }
                }
                Err(e) => failures.push(format!("case {case}: {e}")),
            }
            match Tree::fit(&data, Criterion::GiniMse, &params) {
                Ok(tree) => {
                    if tree.n_leaves() < 2 {
                        failures.push(format!(
                            "case {case}: the Gini contrast fit did not split"
                        ));
                    }
                }
                Err(e) => failures.push(format!("case {case}: {e}")),
            }
        }
        cases
    });
    SuiteResult {
        name: "symmetric-zero-gain",
        cases,
        failures,
        wall_ms,
    }
}

/// Two classes on a line: the pattern 0,0,1 repeated, then two trailing 0s,
/// keeps class 0 a strict plurality of every prefix and every suffix.
pub fn plurality_locked_dataset(repeats: usize) -> Dataset {
    let mut rows = Vec::new();
    for r in 0..repeats {
        rows.push((vec![(3 * r) as f64], 0));
        rows.push((vec![(3 * r + 1) as f64], 0));
        rows.push((vec![(3 * r + 2) as f64], 1));
    }
    rows.push((vec![(3 * repeats) as f64], 0));
    rows.push((vec![(3 * repeats + 1) as f64], 0));
    Dataset::from_rows(&rows, &["majority", "minority"]).expect("well-formed by construction")
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_lattice_point(target: &[f64], step: f64) -> Vec<f64> {
    let c = target.len();
    let steps = (1.0 / step).round() as usize;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut counts = vec![0usize; c];
    fn walk(
        slot: usize,
        remaining: usize,
        c: usize,
        steps: usize,
        counts: &mut Vec<usize>,
        target: &[f64],
        best: &mut Option<(f64, Vec<f64>)>,
    ) {
        if slot == c - 1 {
            counts[slot] = remaining;
            let v: Vec<f64> = counts.iter().map(|&i| i as f64 / steps as f64).collect();
            let d = v
                .iter()
                .zip(target)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>();
            if best.as_ref().map_or(true, |(b, _)| d < *b) {
                *best = Some((d, v));
            }
            return;
        }
        for take in (0..=remaining).rev() {
            counts[slot] = take;
            walk(slot + 1, remaining - take, c, steps, counts, target, best);
        }
    }
    walk(0, steps, c, steps, &mut counts, target, &mut best);
    best.expect("lattice is non-empty").1
}

/// How the exact greedy replica maps labels and routes candidate leaves.
/// `eta_tenths` is the uniform flip probability times ten, so every matrix
/// entry stays rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactMode {
    /// One-hot labels, squared loss on the member mean.
    Plain,
    /// One-hot labels; each candidate leaf is the member mean pulled back
    /// through the inverse noise matrix, and the loss routes it forward
    /// through the matrix again.
    Forward { eta_tenths: u32 },
    /// Labels replaced by inverse-matrix columns before fitting.
    Backward { eta_tenths: u32 },
}

#[derive(Debug, PartialEq)]
pub enum ExactNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf,
}

/// Structure produced by the exact greedy recursion; node layout is
/// irrelevant, comparisons walk the trees in parallel.
#[derive(Debug)]
pub struct ExactTree {
    nodes: Vec<ExactNode>,
}

impl ExactTree {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

impl PartialEq for ExactTree {
    fn eq(&self, other: &ExactTree) -> bool {
        let mut stack = vec![(self.nodes.len() - 1, other.nodes.len() - 1)];
        while let Some((a, b)) = stack.pop() {
            match (&self.nodes[a], &other.nodes[b]) {
                (
                    ExactNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    },
                    ExactNode::Split {
                        feature: fb,
                        threshold: tb,
                        left: lb,
                        right: rb,
                    },
                ) => {
                    if feature != fb || threshold != tb {
                        return false;
                    }
                    stack.push((*left, *lb));
                    stack.push((*right, *rb));
                }
                (ExactNode::Leaf, ExactNode::Leaf) => {}
                _ => return false,
            }
        }
        true
    }
}

/// Replays the default greedy recursion (exhaustive thresholds, first-wins
/// tie-break in ascending feature and threshold order, size and purity
/// stops, the default gain floor) with all gain arithmetic in exact
/// rationals. Ties between candidates that are equal in real arithmetic
/// therefore stay ties regardless of label transforms or loss routing,
/// which is what the structural claims are about. Feature values are only
/// ordered, never added, so f64 features are fine; thresholds are computed
/// in f64 exactly as the production fit computes them.
pub fn exact_greedy_structure(data: &Dataset, mode: ExactMode) -> Result<ExactTree, CoreError> {
    let classes = data.class_indices()?;
    let c = data.c();
    let (label_map, route) = match mode {
        ExactMode::Plain => (None, None),
        ExactMode::Forward { eta_tenths } => (None, Some(exact::ncar(c, eta_tenths)?)),
        ExactMode::Backward { eta_tenths } => {
            let t = exact::ncar(c, eta_tenths)?;
            (Some(exact::inverse_coefficients(t, c)), None)
        }
    };
    let labels: Vec<Vec<exact::Rat>> = (0..c)
        .map(|k| {
            (0..c)
                .map(|j| {
                    let base = if j == k { exact::Rat::int(1) } else { exact::Rat::int(0) };
                    match label_map {
                        Some((gamma, delta)) => gamma.mul(base).add(delta),
                        None => base,
                    }
                })
                .collect()
        })
        .collect();
    let fitter = exact::Fitter::new(data, classes, labels, route);
    let mut nodes = Vec::new();
    fitter.build(&mut nodes, (0..data.n()).collect());
    Ok(ExactTree { nodes })
}

/// Checks that `tree` is a valid greedy argmax path of the exact-rational
/// objective for `mode`: every split node's partition attains the exact best
/// gain over all candidates (gain ties are equally valid picks, and the f64
/// fit breaks real-arithmetic ties by rounding jitter, so node-for-node
/// structural equality against a deterministic oracle is not a fair ask),
/// and every leaf is a valid stop. Assumes the tree was grown with default
/// parameters: exhaustive splits over all features, no depth cap, the
/// default gain floor. Returns the first discrepancy as a message.
pub fn exact_argmax_cowalk(
    data: &Dataset,
    mode: ExactMode,
    tree: &Tree,
) -> Result<Option<String>, CoreError> {
    let classes = data.class_indices()?;
    let c = data.c();
    let (label_map, route) = match mode {
        ExactMode::Plain => (None, None),
        ExactMode::Forward { eta_tenths } => (None, Some(exact::ncar(c, eta_tenths)?)),
        ExactMode::Backward { eta_tenths } => {
            let t = exact::ncar(c, eta_tenths)?;
            (Some(exact::inverse_coefficients(t, c)), None)
        }
    };
    let labels: Vec<Vec<exact::Rat>> = (0..c)
        .map(|k| {
            (0..c)
                .map(|j| {
                    let base = if j == k { exact::Rat::int(1) } else { exact::Rat::int(0) };
                    match label_map {
                        Some((gamma, delta)) => gamma.mul(base).add(delta),
                        None => base,
                    }
                })
                .collect()
        })
        .collect();
    let fitter = exact::Fitter::new(data, classes, labels, route);
    let mut stack = vec![(0usize, (0..data.n()).collect::<Vec<usize>>())];
    while let Some((node_ix, members)) = stack.pop() {
        let stopped = fitter.must_stop(&members);
        match tree.node(node_ix) {
            Node::Leaf { .. } => {
                if !stopped {
                    if let Some(best) = fitter.best_gain(&members) {
                        return Ok(Some(format!(
                            "leaf over {} members but a candidate gains {best:?}",
                            members.len()
                        )));
                    }
                }
            }
            Node::Split { rule, left, right } => {
                if stopped {
                    return Ok(Some(format!(
                        "split over {} members where the stop rules apply",
                        members.len()
                    )));
                }
                let best = match fitter.best_gain(&members) {
                    Some(g) => g,
                    None => {
                        return Ok(Some(
                            "split where no candidate clears the gain floor".into(),
                        ));
                    }
                };
                let (l, r): (Vec<usize>, Vec<usize>) = members
                    .iter()
                    .copied()
                    .partition(|&i| data.feature_row(i)[rule.feature] <= rule.threshold);
                if l.is_empty() || r.is_empty() {
                    return Ok(Some("degenerate partition".into()));
                }
                let gain = fitter.partition_gain(&members, &l, &r);
                if gain != best {
                    return Ok(Some(format!(
                        "split on f{} at {} gains {gain:?}, best is {best:?}",
                        rule.feature, rule.threshold
                    )));
                }
                stack.push((*left, l));
                stack.push((*right, r));
            }
        }
    }
    Ok(None)
}

mod exact {
    use super::{CoreError, Dataset, ExactNode};

    /// Reduced fraction over i128; magnitudes stay tiny here (counts up to a
    /// few hundred, denominators built from tenths), far from overflow.
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub struct Rat {
        n: i128,
        d: i128,
    }

    fn gcd(mut a: i128, mut b: i128) -> i128 {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a.abs()
    }

    impl Rat {
        pub fn new(n: i128, d: i128) -> Rat {
            assert!(d != 0, "zero denominator");
            let sign = if d < 0 { -1 } else { 1 };
            let g = gcd(n, d).max(1);
            Rat {
                n: sign * n / g,
                d: sign * d / g,
            }
        }

        pub fn int(n: i128) -> Rat {
            Rat { n, d: 1 }
        }

        pub fn add(self, o: Rat) -> Rat {
            let g = gcd(self.d, o.d).max(1);
            let (da, db) = (self.d / g, o.d / g);
            Rat::new(self.n * db + o.n * da, self.d * db)
        }

        pub fn sub(self, o: Rat) -> Rat {
            self.add(Rat { n: -o.n, d: o.d })
        }

        pub fn mul(self, o: Rat) -> Rat {
            let g1 = gcd(self.n, o.d).max(1);
            let g2 = gcd(o.n, self.d).max(1);
            Rat::new((self.n / g1) * (o.n / g2), (self.d / g2) * (o.d / g1))
        }

        pub fn div(self, o: Rat) -> Rat {
            assert!(o.n != 0, "division by zero");
            self.mul(Rat { n: o.d, d: o.n })
        }

        pub fn gt(self, o: Rat) -> bool {
            self.sub(o).n > 0
        }
    }

    /// Diagonal and off-diagonal entries of the uniform noise matrix with
    /// flip probability eta_tenths/10.
    pub fn ncar(c: usize, eta_tenths: u32) -> Result<(Rat, Rat), CoreError> {
        if c < 2 {
            return Err(CoreError::Domain(
                "the uniform noise matrix needs at least two classes".into(),
            ));
        }
        let k = eta_tenths as i128;
        // Invertibility bound: eta < (c-1)/c.
        if k * c as i128 >= 10 * (c as i128 - 1) {
            return Err(CoreError::Domain(format!(
                "flip probability {k}/10 is not below (c-1)/c for c={c}"
            )));
        }
        let diag = Rat::new(10 - k, 10);
        let off = Rat::new(k, 10 * (c as i128 - 1));
        Ok((diag, off))
    }

    /// (gamma, delta) with inverse = gamma I + delta J, from the
    /// Sherman-Morrison form of (a I + o J)^-1 where a = diag - off.
    pub fn inverse_coefficients((diag, off): (Rat, Rat), c: usize) -> (Rat, Rat) {
        let a = diag.sub(off);
        let gamma = Rat::int(1).div(a);
        let delta = Rat::int(0)
            .sub(off)
            .div(a.mul(a.add(Rat::int(c as i128).mul(off))));
        (gamma, delta)
    }

    pub struct Fitter<'a> {
        data: &'a Dataset,
        classes: Vec<usize>,
        labels: Vec<Vec<Rat>>,
        route: Option<(Rat, Rat)>,
        min_gain: Rat,
    }

    impl<'a> Fitter<'a> {
        pub fn new(
            data: &'a Dataset,
            classes: Vec<usize>,
            labels: Vec<Vec<Rat>>,
            route: Option<(Rat, Rat)>,
        ) -> Fitter<'a> {
            Fitter {
                data,
                classes,
                labels,
                route,
                min_gain: Rat::new(1, 1_000_000_000_000),
            }
        }

        /// Size and purity stops of the default fitting parameters.
        pub fn must_stop(&self, members: &[usize]) -> bool {
            members.len() < 2
                || members[1..]
                    .iter()
                    .all(|&i| self.classes[i] == self.classes[members[0]])
        }

        /// Best gain over all candidates, if any clears the floor.
        pub fn best_gain(&self, members: &[usize]) -> Option<Rat> {
            self.scan(members).map(|(g, _, _)| g)
        }

        /// Gain of an arbitrary partition of `members`.
        pub fn partition_gain(&self, members: &[usize], l: &[usize], r: &[usize]) -> Rat {
            let count = |ixs: &[usize]| {
                let mut counts = vec![0i128; self.data.c()];
                for &i in ixs {
                    counts[self.classes[i]] += 1;
                }
                counts
            };
            let parent = self.leaf_loss(&count(members), members.len() as i128);
            let children = self
                .leaf_loss(&count(l), l.len() as i128)
                .add(self.leaf_loss(&count(r), r.len() as i128));
            parent.sub(children)
        }

        /// Appends this subtree's nodes and returns the root index.
        pub fn build(&self, nodes: &mut Vec<ExactNode>, members: Vec<usize>) -> usize {
            if !self.must_stop(&members) {
                if let Some((feature, threshold)) = self.best_split(&members) {
                    let (l, r): (Vec<usize>, Vec<usize>) = members
                        .iter()
                        .copied()
                        .partition(|&i| self.data.feature_row(i)[feature] <= threshold);
                    let left = self.build(nodes, l);
                    let right = self.build(nodes, r);
                    nodes.push(ExactNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    });
                    return nodes.len() - 1;
                }
            }
            nodes.push(ExactNode::Leaf);
            nodes.len() - 1
        }

        fn best_split(&self, members: &[usize]) -> Option<(usize, f64)> {
            self.scan(members).map(|(_, f, t)| (f, t))
        }

        fn scan(&self, members: &[usize]) -> Option<(Rat, usize, f64)> {
            let c = self.data.c();
            let mut parent_counts = vec![0i128; c];
            for &i in members {
                parent_counts[self.classes[i]] += 1;
            }
            let parent_loss = self.leaf_loss(&parent_counts, members.len() as i128);
            let mut best: Option<(Rat, usize, f64)> = None;
            for feature in 0..self.data.m() {
                let mut order = members.to_vec();
                order.sort_by(|&a, &b| {
                    self.data.feature_row(a)[feature]
                        .total_cmp(&self.data.feature_row(b)[feature])
                        .then(a.cmp(&b))
                });
                let mut left_counts = vec![0i128; c];
                for pos in 0..order.len() - 1 {
                    left_counts[self.classes[order[pos]]] += 1;
                    let here = self.data.feature_row(order[pos])[feature];
                    let next = self.data.feature_row(order[pos + 1])[feature];
                    if !(here < next) {
                        continue;
                    }
                    let mut threshold = 0.5 * here + 0.5 * next;
                    if !(threshold < next) {
                        threshold = here;
                    }
                    let right_counts: Vec<i128> = parent_counts
                        .iter()
                        .zip(&left_counts)
                        .map(|(p, l)| p - l)
                        .collect();
                    let n_left = (pos + 1) as i128;
                    let n_right = members.len() as i128 - n_left;
                    let children = self
                        .leaf_loss(&left_counts, n_left)
                        .add(self.leaf_loss(&right_counts, n_right));
                    let gain = parent_loss.sub(children);
                    if !gain.gt(self.min_gain) {
                        continue;
                    }
                    if best.as_ref().map_or(true, |(g, _, _)| gain.gt(*g)) {
                        best = Some((gain, feature, threshold));
                    }
                }
            }
            best
        }

        /// Squared loss of the member multiset against its optimal leaf.
        /// Without routing that leaf is the mean; with routing it is the
        /// mean pulled back through the inverse matrix and mapped forward
        /// again, computed step by step rather than cancelled symbolically.
        fn leaf_loss(&self, counts: &[i128], n: i128) -> Rat {
            let c = counts.len();
            let mut mean = vec![Rat::int(0); c];
            for (k, &count) in counts.iter().enumerate() {
                if count == 0 {
                    continue;
                }
                let w = Rat::int(count);
                for j in 0..c {
                    mean[j] = mean[j].add(w.mul(self.labels[k][j]));
                }
            }
            for entry in mean.iter_mut() {
                *entry = entry.div(Rat::int(n));
            }
            let target = match self.route {
                None => mean,
                Some((diag, off)) => {
                    let (gamma, delta) = inverse_coefficients((diag, off), c);
                    let sum = mean.iter().fold(Rat::int(0), |acc, &x| acc.add(x));
                    let pulled: Vec<Rat> = mean
                        .iter()
                        .map(|&x| gamma.mul(x).add(delta.mul(sum)))
                        .collect();
                    let a = diag.sub(off);
                    let pulled_sum = pulled.iter().fold(Rat::int(0), |acc, &x| acc.add(x));
                    pulled
                        .iter()
                        .map(|&x| a.mul(x).add(off.mul(pulled_sum)))
                        .collect()
                }
            };
            let mut acc = Rat::int(0);
            for (k, &count) in counts.iter().enumerate() {
                if count == 0 {
                    continue;
                }
                let mut dist = Rat::int(0);
                for j in 0..c {
                    let diff = self.labels[k][j].sub(target[j]);
                    dist = dist.add(diff.mul(diff));
                }
                acc = acc.add(Rat::int(count).mul(dist));
            }
            acc
        }
    }
}
