//! Greedy binary decision-tree induction.
//!
//! Trees grow CART-style: at each node the split maximizing the weighted
//! impurity decrease is taken, with ties broken to the lowest feature index
//! and then the lowest threshold so refits are exactly reproducible. Two
//! split modes exist: `Exhaustive` tries the midpoint between every pair of
//! consecutive distinct sorted values, `ExtraRandom` draws one uniform
//! threshold per candidate feature from [min, max). Nodes stop splitting on
//! depth, membership size, a strictly-positive-gain requirement, or purity,
//! where purity means every member label is bit-identical; that definition
//! consumes no randomness and is invariant under per-class label
//! transforms, which keeps refits on transformed labels aligned with the
//! original recursion.
//!
//! Soft labels (entries off 0/1, e.g. after a backward transform) are only
//! meaningful under [`Criterion::GiniMse`]; the entropy criterion rejects
//! them because logarithms of negative means are undefined.
//!
//! Nodes live in an arena indexed by `usize`, so deep trees neither recurse
//! on fit nor on drop.

use rand::Rng;

use crate::criteria::Criterion;
use crate::dataset::Dataset;
use crate::error::CoreError;
use crate::label_algebra::argmax_tie_low;
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitMode {
    Exhaustive,
    ExtraRandom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// A split is taken only when its gain strictly exceeds this.
    pub min_gain: f64,
    pub split_mode: SplitMode,
    /// Candidate features per node; None means all features.
    pub feature_subsample: Option<usize>,
    pub seed: u64,
}

impl Default for FitParams {
    fn default() -> Self {
        FitParams {
            max_depth: None,
            min_samples_split: 2,
            min_gain: 1e-12,
            split_mode: SplitMode::Exhaustive,
            feature_subsample: None,
            seed: 0,
        }
    }
}

/// Axis-aligned test: route left iff x[feature] <= threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitRule {
    pub feature: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        rule: SplitRule,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Leaf value: mean label for mean-leaf criteria, plurality
        /// indicator for the symmetric criterion, possibly off-simplex after
        /// forward correction.
        value: Vec<f64>,
        weight: f64,
        class_weights: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    n_features: usize,
    n_classes: usize,
}

struct WorkItem {
    slot: usize,
    members: Vec<u32>,
    depth: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Tree {
    pub fn fit(data: &Dataset, criterion: Criterion, params: &FitParams) -> Result<Tree, CoreError> {
        if params.min_samples_split < 2 {
            return Err(CoreError::Domain(
                "min_samples_split must be at least 2".into(),
            ));
        }
        if !(params.min_gain >= 0.0) {
            return Err(CoreError::Domain("min_gain must be nonnegative".into()));
        }
        if !data.is_one_hot() && criterion != Criterion::GiniMse {
            return Err(CoreError::Domain(format!(
                "soft labels are only supported under gini_mse, not {}",
                criterion.name()
            )));
        }
        let n = data.n();
        let c = data.c();
        let mut rng = seeding::rng_from(params.seed);
        let mut nodes: Vec<Node> = Vec::new();
        nodes.push(placeholder(c));
        let mut stack = vec![WorkItem {
            slot: 0,
            members: (0..n as u32).collect(),
            depth: 0,
        }];

        while let Some(item) = stack.pop() {
            let members = &item.members;
            let w = members.len() as f64;
            let mut sums = vec![0.0; c];
            for &i in members {
                for (s, &v) in sums.iter_mut().zip(data.label(i as usize)) {
                    *s += v;
                }
            }

            let stop = members.len() < params.min_samples_split
                || params.max_depth.is_some_and(|d| item.depth >= d)
                || all_labels_identical(data, members);
            let split = if stop {
                None
            } else {
                best_split(data, criterion, params, members, &sums, w, &mut rng)
            };

            match split {
                Some(best) => {
                    let mut left = Vec::new();
                    let mut right = Vec::new();
                    for &i in members {
                        if data.feature_row(i as usize)[best.feature] <= best.threshold {
                            left.push(i);
                        } else {
                            right.push(i);
                        }
                    }
                    debug_assert!(!left.is_empty() && !right.is_empty());
                    let left_slot = nodes.len();
                    nodes.push(placeholder(c));
                    let right_slot = nodes.len();
                    nodes.push(placeholder(c));
                    nodes[item.slot] = Node::Split {
                        rule: SplitRule {
                            feature: best.feature,
                            threshold: best.threshold,
                        },
                        left: left_slot,
                        right: right_slot,
                    };
                    // Left is processed first so the RNG stream replays in
                    // depth-first order.
                    stack.push(WorkItem {
                        slot: right_slot,
                        members: right,
                        depth: item.depth + 1,
                    });
                    stack.push(WorkItem {
                        slot: left_slot,
                        members: left,
                        depth: item.depth + 1,
                    });
                }
                None => {
                    let value = if criterion.mean_leaf() {
                        sums.iter().map(|s| s / w).collect()
                    } else {
                        let k = argmax_tie_low(&sums);
                        let mut v = vec![0.0; c];
                        v[k] = 1.0;
                        v
                    };
                    nodes[item.slot] = Node::Leaf {
                        value,
                        weight: w,
                        class_weights: sums,
                    };
                }
            }
        }

        Ok(Tree {
            nodes,
            n_features: data.m(),
            n_classes: c,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn node(&self, index: usize) -> &Node {
        &self.nodes[index]
    }

    /// Index of the leaf the point routes to.
    pub fn leaf_for(&self, x: &[f64]) -> Result<usize, CoreError> {
        if x.len() != self.n_features {
            return Err(CoreError::Shape(format!(
                "point has {} features, tree expects {}",
                x.len(),
                self.n_features
            )));
        }
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split { rule, left, right } => {
                    at = if x[rule.feature] <= rule.threshold {
                        *left
                    } else {
                        *right
                    };
                }
                Node::Leaf { .. } => return Ok(at),
            }
        }
    }

    /// The raw leaf vector for the point, unmodified even when off-simplex.
    pub fn predict_soft(&self, x: &[f64]) -> Result<&[f64], CoreError> {
        let at = self.leaf_for(x)?;
        match &self.nodes[at] {
            Node::Leaf { value, .. } => Ok(value),
            Node::Split { .. } => unreachable!("leaf_for returns leaves"),
        }
    }

    /// Predicted class: argmax of the leaf vector, ties to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize, CoreError> {
        Ok(argmax_tie_low(self.predict_soft(x)?))
    }

    /// Training loss evaluated two independent ways: the weighted-impurity
    /// sum (1/n) sum_l w_l * impurity(v_l) over leaves, and the plain mean
    /// per-sample loss (1/n) sum_i loss(y_i, leaf value for x_i). For mean
    /// leaves on one-hot data the two agree.
    pub fn total_training_loss(
        &self,
        data: &Dataset,
        criterion: Criterion,
    ) -> Result<(f64, f64), CoreError> {
        let n = data.n() as f64;
        let mut impurity_sum = 0.0;
        for node in &self.nodes {
            if let Node::Leaf { value, weight, .. } = node {
                impurity_sum += weight * criterion.impurity(value)?;
            }
        }
        let mut loss_sum = 0.0;
        for i in 0..data.n() {
            let yhat = self.predict_soft(data.feature_row(i))?;
            loss_sum += criterion.loss(data.label(i), yhat)?;
        }
        Ok((impurity_sum / n, loss_sum / n))
    }

    /// True when both trees have the same shape and identical split rules;
    /// leaf values are ignored.
    pub fn structural_equal(&self, other: &Tree) -> bool {
        let mut stack = vec![(0usize, 0usize)];
        while let Some((a, b)) = stack.pop() {
            match (&self.nodes[a], &other.nodes[b]) {
                (
                    Node::Split {
                        rule: ra,
                        left: la,
                        right: rra,
                    },
                    Node::Split {
                        rule: rb,
                        left: lb,
                        right: rrb,
                    },
                ) => {
                    if ra.feature != rb.feature || ra.threshold != rb.threshold {
                        return false;
                    }
                    stack.push((*la, *lb));
                    stack.push((*rra, *rrb));
                }
                (Node::Leaf { .. }, Node::Leaf { .. }) => {}
                _ => return false,
            }
        }
        true
    }

    /// Copy with every leaf value rewritten by `f`; structure, weights, and
    /// class weights are untouched.
    pub fn map_leaf_values(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Tree {
        let nodes = self
            .nodes
            .iter()
            .map(|node| match node {
                Node::Split { rule, left, right } => Node::Split {
                    rule: rule.clone(),
                    left: *left,
                    right: *right,
                },
                Node::Leaf {
                    value,
                    weight,
                    class_weights,
                } => Node::Leaf {
                    value: f(value),
                    weight: *weight,
                    class_weights: class_weights.clone(),
                },
            })
            .collect();
        Tree {
            nodes,
            n_features: self.n_features,
            n_classes: self.n_classes,
        }
    }

    /// Deterministic text form, one node per line in pre-order:
    /// `split f<idx> t<threshold>` / `leaf v=<values> w=<weight>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut stack = vec![0usize];
        while let Some(at) = stack.pop() {
            match &self.nodes[at] {
                Node::Split { rule, left, right } => {
                    out.push_str(&format!("split f{} t{}\n", rule.feature, rule.threshold));
                    stack.push(*right);
                    stack.push(*left);
                }
                Node::Leaf { value, weight, .. } => {
                    let vals: Vec<String> = value.iter().map(|v| format!("{v}")).collect();
                    out.push_str(&format!("leaf v={} w={}\n", vals.join(","), weight));
                }
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        let mut max = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((at, d)) = stack.pop() {
            match &self.nodes[at] {
                Node::Split { left, right, .. } => {
                    stack.push((*left, d + 1));
                    stack.push((*right, d + 1));
                }
                Node::Leaf { .. } => max = max.max(d),
            }
        }
        max
    }
}

fn placeholder(c: usize) -> Node {
    Node::Leaf {
        value: vec![0.0; c],
        weight: 0.0,
        class_weights: vec![0.0; c],
    }
}

fn all_labels_identical(data: &Dataset, members: &[u32]) -> bool {
    let first = data.label(members[0] as usize);
    members[1..].iter().all(|&i| {
        data.label(i as usize)
            .iter()
            .zip(first)
            .all(|(a, b)| a.to_bits() == b.to_bits())
    })
}

/// Per-child score such that gain = score(left) + score(right) -
/// score(parent). Monotone transforms of the usual forms: s.s/w for Gini,
/// sum s ln(s/w) for entropy (the negated weighted entropy), 2*max(s) for
/// the symmetric criterion.
fn node_score(criterion: Criterion, sums: &[f64], w: f64) -> f64 {
    match criterion {
        Criterion::GiniMse => sums.iter().map(|s| s * s).sum::<f64>() / w,
        Criterion::EntropyCe => {
            let mut acc = 0.0;
            for &s in sums {
                if s > 0.0 {
                    acc += s * (s / w).ln();
                }
            }
            acc
        }
        Criterion::SymmetricMae => 2.0 * sums.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

fn best_split(
    data: &Dataset,
    criterion: Criterion,
    params: &FitParams,
    members: &[u32],
    parent_sums: &[f64],
    parent_w: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Option<BestSplit> {
    let m = data.m();
    let c = data.c();
    let candidates: Vec<usize> = match params.feature_subsample {
        None => (0..m).collect(),
        Some(k) => {
            let k = k.max(1).min(m);
            // Partial Fisher-Yates, then ascending order so the tie rule
            // "lowest feature index wins" applies to the subsample too.
            let mut pool: Vec<usize> = (0..m).collect();
            for i in 0..k {
                let j = rng.gen_range(i..m);
                pool.swap(i, j);
            }
            let mut chosen = pool[..k].to_vec();
            chosen.sort_unstable();
            chosen
        }
    };

    let parent_score = node_score(criterion, parent_sums, parent_w);
    let mut best: Option<BestSplit> = None;

    for &feature in &candidates {
        match params.split_mode {
            SplitMode::Exhaustive => {
                let mut order: Vec<u32> = members.to_vec();
                order.sort_unstable_by(|&a, &b| {
                    let xa = data.feature_row(a as usize)[feature];
                    let xb = data.feature_row(b as usize)[feature];
                    xa.total_cmp(&xb).then(a.cmp(&b))
                });
                let mut left_sums = vec![0.0; c];
                for pos in 0..order.len() - 1 {
                    let i = order[pos] as usize;
                    for (s, &v) in left_sums.iter_mut().zip(data.label(i)) {
                        *s += v;
                    }
                    let here = data.feature_row(i)[feature];
                    let next = data.feature_row(order[pos + 1] as usize)[feature];
                    if !(here < next) {
                        continue;
                    }
                    // Midpoint, pulled back to the left value when rounding
                    // would land it on the right value and misroute the
                    // boundary sample.
                    let mut threshold = 0.5 * here + 0.5 * next;
                    if !(threshold < next) {
                        threshold = here;
                    }
                    let w_l = (pos + 1) as f64;
                    let w_r = parent_w - w_l;
                    let right_sums: Vec<f64> = parent_sums
                        .iter()
                        .zip(&left_sums)
                        .map(|(p, l)| p - l)
                        .collect();
                    let gain = node_score(criterion, &left_sums, w_l)
                        + node_score(criterion, &right_sums, w_r)
                        - parent_score;
                    consider(&mut best, feature, threshold, gain, params.min_gain);
                }
            }
            SplitMode::ExtraRandom => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for &i in members {
                    let x = data.feature_row(i as usize)[feature];
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
                if !(lo < hi) {
                    continue; // constant feature, nothing to draw
                }
                let threshold = rng.gen_range(lo..hi);
                let mut left_sums = vec![0.0; c];
                let mut w_l = 0.0;
                for &i in members {
                    if data.feature_row(i as usize)[feature] <= threshold {
                        w_l += 1.0;
                        for (s, &v) in left_sums.iter_mut().zip(data.label(i as usize)) {
                            *s += v;
                        }
                    }
                }
                let w_r = parent_w - w_l;
                debug_assert!(w_l > 0.0 && w_r > 0.0);
                let right_sums: Vec<f64> = parent_sums
                    .iter()
                    .zip(&left_sums)
                    .map(|(p, l)| p - l)
                    .collect();
                let gain = node_score(criterion, &left_sums, w_l)
                    + node_score(criterion, &right_sums, w_r)
                    - parent_score;
                consider(&mut best, feature, threshold, gain, params.min_gain);
            }
        }
    }
    best
}

/// Keeps the candidate iff it beats the incumbent strictly; candidates
/// arrive in ascending (feature, threshold) order, so equal gains keep the
/// earlier one.
fn consider(best: &mut Option<BestSplit>, feature: usize, threshold: f64, gain: f64, min_gain: f64) {
    if !(gain > min_gain) {
        return;
    }
    if best.as_ref().map_or(true, |b| gain > b.gain) {
        *best = Some(BestSplit {
            feature,
            threshold,
            gain,
        });
    }
}
