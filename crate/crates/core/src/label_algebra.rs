//! Label vectors, noise transition matrices, and their inverses.
//!
//! A label is a length-c real vector: one-hot for observed classes, possibly
//! soft (summing to 1, entries allowed to be negative) after a backward
//! transform. A transition matrix T is row-stochastic with T\[a\]\[b\] the
//! probability that a clean class-a label is observed as class b. The
//! uniform-flip family built by [`TransitionMatrix::ncar`] puts 1-eta on the
//! diagonal and eta/(c-1) elsewhere; it stays invertible exactly while
//! eta < (c-1)/c, and its inverse is gamma*I + delta*J with gamma > 0, so
//! applying the inverse never changes which component is largest.

use crate::error::CoreError;

/// Rows of a transition matrix must sum to 1 within this.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;
/// Pivots below this magnitude during elimination mean the matrix is treated
/// as singular.
pub const PIVOT_TOLERANCE: f64 = 1e-10;
/// Largest absolute entry allowed in T*inv(T) - I.
pub const INVERSE_RESIDUAL_TOLERANCE: f64 = 1e-9;

/// The indicator vector e_k in dimension c.
pub fn one_hot(k: usize, c: usize) -> Result<Vec<f64>, CoreError> {
    if k >= c {
        return Err(CoreError::Index {
            what: "class",
            index: k,
            size: c,
        });
    }
    let mut v = vec![0.0; c];
    v[k] = 1.0;
    Ok(v)
}

/// Argmax with ties resolved to the lowest index.
pub fn argmax_tie_low(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-stochastic c by c matrix of observation probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    rows: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    /// Validates squareness, entry range, and row sums.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, CoreError> {
        let c = rows.len();
        if c == 0 {
            return Err(CoreError::Shape("transition matrix must be non-empty".into()));
        }
        for (a, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(CoreError::Shape(format!(
                    "transition matrix row {a} has {} entries, expected {c}",
                    row.len()
                )));
            }
            let mut sum = 0.0;
            for (b, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(CoreError::Domain(format!(
                        "transition probability at ({a}, {b}) is {p}, outside [0, 1]"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(CoreError::Domain(format!(
                    "transition matrix row {a} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(TransitionMatrix { rows })
    }

    pub fn identity(c: usize) -> Self {
        let rows = (0..c)
            .map(|a| {
                let mut row = vec![0.0; c];
                row[a] = 1.0;
                row
            })
            .collect();
        TransitionMatrix { rows }
    }

    /// Uniform-flip noise: with probability `eta` a label moves to one of the
    /// other c-1 classes chosen uniformly. Rejects eta at or beyond the
    /// invertibility bound (c-1)/c.
    pub fn ncar(c: usize, eta: f64) -> Result<Self, CoreError> {
        if c < 2 {
            return Err(CoreError::Domain(format!(
                "uniform-flip noise needs at least 2 classes, got {c}"
            )));
        }
        let bound = (c - 1) as f64 / c as f64;
        if !eta.is_finite() || eta < 0.0 || eta >= bound {
            return Err(CoreError::Domain(format!(
                "flip probability {eta} outside [0, {bound}); the matrix is invertible only below (c-1)/c"
            )));
        }
        let off = eta / (c - 1) as f64;
        let diag = 1.0 - eta;
        let rows = (0..c)
            .map(|a| (0..c).map(|b| if a == b { diag } else { off }).collect())
            .collect();
        Ok(TransitionMatrix { rows })
    }

    pub fn c(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn entry(&self, a: usize, b: usize) -> f64 {
        self.rows[a][b]
    }

    /// Some((diag, off)) when every diagonal entry carries the same bits and
    /// every off-diagonal entry carries the same bits. Such matrices invert
    /// in closed form, which [`uniform_inverse_coefficients`] exploits.
    pub fn uniform_structure(&self) -> Option<(f64, f64)> {
        let c = self.c();
        if c < 2 {
            return None;
        }
        let d = self.rows[0][0];
        let o = self.rows[0][1];
        for a in 0..c {
            for b in 0..c {
                let want = if a == b { d } else { o };
                if self.rows[a][b].to_bits() != want.to_bits() {
                    return None;
                }
            }
        }
        Some((d, o))
    }

    /// Gauss-Jordan inverse with the residual check ||T*inv - I||max.
    pub fn invert(&self) -> Result<Vec<Vec<f64>>, CoreError> {
        let inv = invert_matrix(&self.rows)?;
        let c = self.c();
        let mut resid = 0.0f64;
        for a in 0..c {
            for b in 0..c {
                let mut acc = 0.0;
                for k in 0..c {
                    acc += self.rows[a][k] * inv[k][b];
                }
                let target = if a == b { 1.0 } else { 0.0 };
                resid = resid.max((acc - target).abs());
            }
        }
        if resid > INVERSE_RESIDUAL_TOLERANCE {
            return Err(CoreError::Singular(format!(
                "inverse residual {resid:e} exceeds {INVERSE_RESIDUAL_TOLERANCE:e}"
            )));
        }
        Ok(inv)
    }
}

/// Gauss-Jordan elimination with partial pivoting. Sized for the small,
/// well-conditioned matrices of this domain (c <= 100).
pub fn invert_matrix(m: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, CoreError> {
    let c = m.len();
    if c == 0 || m.iter().any(|row| row.len() != c) {
        return Err(CoreError::Shape("matrix must be square and non-empty".into()));
    }
    // Augmented [A | I], reduced in place.
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut aug = row.clone();
            aug.extend((0..c).map(|j| if i == j { 1.0 } else { 0.0 }));
            aug
        })
        .collect();
    for col in 0..c {
        let pivot_row = (col..c)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty pivot range");
        let pivot = a[pivot_row][col];
        if pivot.abs() < PIVOT_TOLERANCE {
            return Err(CoreError::Singular(format!(
                "pivot magnitude {:e} below {PIVOT_TOLERANCE:e} at column {col}",
                pivot.abs()
            )));
        }
        a.swap(col, pivot_row);
        let inv_pivot = 1.0 / pivot;
        for x in a[col].iter_mut() {
            *x *= inv_pivot;
        }
        for row in 0..c {
            if row == col {
                continue;
            }
            let factor = a[row][col];
            if factor == 0.0 {
                continue;
            }
            for k in 0..2 * c {
                let delta = factor * a[col][k];
                a[row][k] -= delta;
            }
        }
    }
    Ok(a.into_iter().map(|row| row[c..].to_vec()).collect())
}

/// Coefficients (gamma, delta) such that the inverse of the matrix with
/// constant diagonal `d` and constant off-diagonal `o` is gamma*I + delta*J
/// (J all ones). Via the rank-one update formula; `d - o` near zero or a
/// zero row sum means the matrix is singular.
pub fn uniform_inverse_coefficients(d: f64, o: f64, c: usize) -> Result<(f64, f64), CoreError> {
    let a = d - o;
    let row_sum = a + c as f64 * o;
    if a.abs() < PIVOT_TOLERANCE || row_sum.abs() < PIVOT_TOLERANCE {
        return Err(CoreError::Singular(format!(
            "uniform matrix with diagonal {d} and off-diagonal {o} is not invertible"
        )));
    }
    Ok((1.0 / a, -o / (a * row_sum)))
}

pub fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Result<Vec<f64>, CoreError> {
    if m.iter().any(|row| row.len() != v.len()) {
        return Err(CoreError::Shape(format!(
            "matrix-vector shape mismatch: matrix columns vs vector length {}",
            v.len()
        )));
    }
    Ok(m.iter().map(|row| dot(row, v)).collect())
}

pub fn transpose(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if m.is_empty() {
        return Vec::new();
    }
    let rows = m.len();
    let cols = m[0].len();
    (0..cols)
        .map(|j| (0..rows).map(|i| m[i][j]).collect())
        .collect()
}
