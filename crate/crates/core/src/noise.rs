//! Uniform label-noise injection and measurement.

use rand::Rng;

use crate::error::CoreError;
use crate::label_algebra::one_hot;
use crate::seeding;

/// Flip probability plus the seed that makes the injection reproducible.
/// The probability is capped at the experimental grid bound 0.4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub eta: f64,
    pub seed: u64,
}

pub const ETA_GRID_MAX: f64 = 0.4;

impl NoiseSpec {
    pub fn new(eta: f64, seed: u64) -> Result<Self, CoreError> {
        if !eta.is_finite() || !(0.0..=ETA_GRID_MAX).contains(&eta) {
            return Err(CoreError::Domain(format!(
                "flip probability {eta} outside the supported grid [0, {ETA_GRID_MAX}]"
            )));
        }
        Ok(NoiseSpec { eta, seed })
    }
}

/// Independently per sample: with probability eta, replace the class by a
/// uniform draw over the other c-1 classes. Labels must be one-hot; the
/// result is one-hot. A flipped sample never keeps its class.
pub fn inject_ncar(
    labels: &[Vec<f64>],
    spec: &NoiseSpec,
    c: usize,
) -> Result<Vec<Vec<f64>>, CoreError> {
    if c < 2 {
        return Err(CoreError::Domain(format!(
            "noise injection needs at least 2 classes, got {c}"
        )));
    }
    let mut rng = seeding::rng_from(spec.seed);
    let mut out = Vec::with_capacity(labels.len());
    for (i, y) in labels.iter().enumerate() {
        let k = class_of(y, c).ok_or_else(|| {
            CoreError::Domain(format!("label {i} is not one-hot; noise needs hard labels"))
        })?;
        // One uniform per sample keeps the stream aligned whether or not a
        // flip happens.
        let u: f64 = rng.gen_range(0.0..1.0);
        let k_new = if u < spec.eta {
            let mut j = rng.gen_range(0..c - 1);
            if j >= k {
                j += 1;
            }
            j
        } else {
            k
        };
        out.push(one_hot(k_new, c)?);
    }
    Ok(out)
}

fn class_of(y: &[f64], c: usize) -> Option<usize> {
    if y.len() != c {
        return None;
    }
    let mut hit = None;
    for (k, &v) in y.iter().enumerate() {
        if v == 1.0 && hit.is_none() {
            hit = Some(k);
        } else if v != 0.0 {
            return None;
        }
    }
    hit
}

/// Row-normalized confusion counts between original and observed class
/// indices. Rows for classes with no originals are None.
pub fn empirical_transition(
    orig: &[usize],
    noisy: &[usize],
    c: usize,
) -> Result<Vec<Option<Vec<f64>>>, CoreError> {
    if orig.len() != noisy.len() {
        return Err(CoreError::Shape(format!(
            "{} original vs {} observed labels",
            orig.len(),
            noisy.len()
        )));
    }
    let mut counts = vec![vec![0usize; c]; c];
    for (&a, &b) in orig.iter().zip(noisy) {
        if a >= c || b >= c {
            return Err(CoreError::Index {
                what: "class",
                index: a.max(b),
                size: c,
            });
        }
        counts[a][b] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            if total == 0 {
                None
            } else {
                Some(row.iter().map(|&k| k as f64 / total as f64).collect())
            }
        })
        .collect())
}
