//! Small dense linear algebra for the normal equations that show up in the
//! sigma line fits, Gauss-Newton steps and Jacobian propagation. Systems here
//! are tiny (one per model parameter), so a pivoted Gaussian elimination is
//! all that is needed.

use crate::error::{RcrError, Result};

/// Solve `a x = b` in place for a square row-major matrix.
///
/// Fails with `DegenerateTuple` when the matrix is singular to working
/// precision (pivot below `1e-12` of the row scale).
pub(crate) fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    debug_assert!(a.len() == n && a.iter().all(|row| row.len() == n));

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);

        let pivot = a[col][col];
        let scale = a[col].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !pivot.is_finite() || scale == 0.0 || pivot.abs() < 1e-12 * scale {
            return Err(RcrError::DegenerateTuple);
        }

        for row in col + 1..n {
            let factor = a[row][col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }

    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
        if !x[row].is_finite() {
            return Err(RcrError::DegenerateTuple);
        }
    }
    Ok(x)
}

/// Invert a square row-major matrix by solving against the identity.
pub(crate) fn invert(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let mut columns = Vec::with_capacity(n);
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        columns.push(solve(a.to_vec(), e)?);
    }
    // columns[k] is the k-th column of the inverse; transpose into rows.
    let mut inv = vec![vec![0.0; n]; n];
    for (k, col) in columns.iter().enumerate() {
        for (row, value) in col.iter().enumerate() {
            inv[row][k] = *value;
        }
    }
    Ok(inv)
}
