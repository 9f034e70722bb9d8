//! Dense complex least squares shared by the gain updates.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result, C64};

/// Solve `min_x ||b - A x||^2` with a Householder QR factorization.
///
/// Fails with [`Error::RankDeficient`] when `A` has fewer rows than columns or
/// when a diagonal entry of `R` falls below the usual numerical-rank
/// tolerance `max(rows, cols) * eps * max|R_ii|`.
pub fn least_squares(a: &DMatrix<C64>, b: &DVector<C64>) -> Result<DVector<C64>> {
    let (rows, cols) = a.shape();
    if b.len() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            got: b.len(),
        });
    }
    if cols == 0 {
        return Ok(DVector::zeros(0));
    }
    if rows < cols {
        return Err(Error::RankDeficient {
            rows,
            cols,
            reason: "underdetermined system (fewer observations than unknowns)".into(),
        });
    }

    let qr = a.clone().qr();
    let r = qr.r();
    let max_diag = (0..cols).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
    let tol = rows.max(cols) as f64 * f64::EPSILON * max_diag;
    if let Some(i) = (0..cols).find(|&i| r[(i, i)].norm() <= tol) {
        return Err(Error::RankDeficient {
            rows,
            cols,
            reason: format!("|R[{i},{i}]| = {:e} below tolerance {:e}", r[(i, i)].norm(), tol),
        });
    }

    let mut qtb = DMatrix::from_column_slice(rows, 1, b.as_slice());
    qr.q_tr_mul(&mut qtb);
    let rhs = DVector::from_iterator(cols, qtb.column(0).iter().take(cols).copied());
    let x = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::RankDeficient {
            rows,
            cols,
            reason: "singular triangular factor".into(),
        })?;
    Ok(x)
}
