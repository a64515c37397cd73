//! Naive dense reference solvers used by the test suites.
//!
//! These deliberately avoid the recursive machinery in [`crate::forward`]
//! and [`crate::backward`]: the normal equations are formed explicitly and
//! solved by LU with partial pivoting, and rank is estimated by
//! complete-pivoting triangularization of the alpha Gram matrix. O(k^3)
//! solves, never on the hot path.

use ndarray::Array1;

use crate::model::{ConstraintSystem, DerivedData};
use crate::wgeom::{as_slice, dot_w, DataVector};
use crate::{Error, Result};

/// Pivot-ratio ceiling used as a cheap ill-conditioning proxy.
const MAX_PIVOT_RATIO: f64 = 1e12;

/// Least-squares coefficients of `ftilde` on the span of the given alpha
/// vectors, via the explicitly formed Gram matrix, plus the resulting
/// projection.
pub fn solve_normal(
    sys: &ConstraintSystem,
    d: &DerivedData,
    indices: &[usize],
) -> Result<(Vec<f64>, DataVector)> {
    project_onto_span(sys, indices, d.ftilde())
}

/// Same normal-equations solve against an arbitrary right-hand-side vector.
pub fn project_onto_span(
    sys: &ConstraintSystem,
    indices: &[usize],
    rhs: &DataVector,
) -> Result<(Vec<f64>, DataVector)> {
    let k = indices.len();
    let m = sys.m();
    if rhs.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: rhs.len(),
        });
    }
    if k == 0 {
        return Ok((Vec::new(), Array1::zeros(m)));
    }
    let w = sys.mu().as_slice();
    let alphas: Vec<&Array1<f64>> = indices
        .iter()
        .map(|&l| sys.alpha(l))
        .collect::<Result<_>>()?;

    let mut gram = vec![vec![0.0; k]; k];
    let mut b = vec![0.0; k];
    for j in 0..k {
        b[j] = dot_w(as_slice(alphas[j]), as_slice(rhs), w);
        for t in j..k {
            let v = dot_w(as_slice(alphas[j]), as_slice(alphas[t]), w);
            gram[j][t] = v;
            gram[t][j] = v;
        }
    }
    let coeffs = lu_solve(gram, b)?;
    let mut projection = Array1::zeros(m);
    for (c, a) in coeffs.iter().zip(&alphas) {
        projection.scaled_add(*c, *a);
    }
    Ok((coeffs, projection))
}

/// Dense LU solve with partial pivoting. Rejects systems whose pivot ratio
/// exceeds [`MAX_PIVOT_RATIO`].
#[allow(clippy::needless_range_loop)]
fn lu_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    let mut max_pivot: f64 = 0.0;
    let mut min_pivot = f64::INFINITY;
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .expect("non-empty pivot range");
        let pivot = a[pivot_row][col];
        if pivot == 0.0 {
            return Err(Error::IllConditionedGram {
                pivot_ratio: f64::INFINITY,
            });
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        max_pivot = max_pivot.max(pivot.abs());
        min_pivot = min_pivot.min(pivot.abs());
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for t in col..n {
                a[row][t] -= factor * a[col][t];
            }
            b[row] -= factor * b[col];
        }
    }
    if max_pivot / min_pivot > MAX_PIVOT_RATIO {
        return Err(Error::IllConditionedGram {
            pivot_ratio: max_pivot / min_pivot,
        });
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for t in row + 1..n {
            acc -= a[row][t] * x[t];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Numerical rank of the alpha family: the number of complete-pivoting
/// triangularization pivots of the alpha Gram matrix above `tol` times the
/// largest pivot.
pub fn numerical_rank(sys: &ConstraintSystem, tol: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&tol) || tol <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "rank tolerance must lie in (0,1), got {tol}"
        )));
    }
    let m = sys.m();
    let w = sys.mu().as_slice();
    let alphas: Vec<&Array1<f64>> = (0..m).map(|l| sys.alpha(l)).collect::<Result<_>>()?;
    let mut gram = vec![0.0; m * m];
    for j in 0..m {
        for t in j..m {
            let v = dot_w(as_slice(alphas[j]), as_slice(alphas[t]), w);
            gram[j * m + t] = v;
            gram[t * m + j] = v;
        }
    }

    // Diagonal (= complete, for a PSD matrix) pivoting with in-place Schur
    // complement updates.
    let mut active: Vec<bool> = vec![true; m];
    let mut rank = 0;
    let mut first_pivot = None;
    loop {
        let mut best = None;
        let mut best_val = 0.0;
        for (i, &is_active) in active.iter().enumerate() {
            if is_active && gram[i * m + i] > best_val {
                best_val = gram[i * m + i];
                best = Some(i);
            }
        }
        let Some(p) = best else { break };
        let threshold = match first_pivot {
            None => 0.0,
            Some(fp) => tol * fp,
        };
        if best_val <= threshold {
            break;
        }
        if first_pivot.is_none() {
            first_pivot = Some(best_val);
        }
        rank += 1;
        active[p] = false;
        let d = best_val;
        for i in 0..m {
            if !active[i] {
                continue;
            }
            let gip = gram[i * m + p];
            if gip == 0.0 {
                continue;
            }
            for j in 0..m {
                if active[j] {
                    gram[i * m + j] -= gip * gram[p * m + j] / d;
                }
            }
        }
    }
    Ok(rank)
}
