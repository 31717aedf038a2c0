//! Small dense helpers on top of nalgebra: pivot-checked Cholesky, log
//! determinants, principal submatrices and spectra.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Smallest Cholesky pivot accepted as positive.
pub const PIVOT_TOL: f64 = 1e-10;

/// Relative tolerance used when checking symmetry of inputs.
pub const SYMMETRY_TOL: f64 = 1e-9;

pub fn check_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what} is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Largest asymmetry `|m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    check_square(m, "matrix")?;
    let scale = m.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// `(m + mᵀ) / 2`
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Cholesky factorization rejecting pivots below [`PIVOT_TOL`].
pub fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    check_square(m, "matrix")?;
    let chol = Cholesky::new(m.clone())
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    let l = chol.l_dirty();
    for i in 0..m.nrows() {
        let pivot = l[(i, i)] * l[(i, i)];
        if !(pivot > PIVOT_TOL) {
            return Err(Error::NotPositiveDefinite(format!(
                "pivot {i} is {pivot:e}, below {PIVOT_TOL:e}"
            )));
        }
    }
    Ok(chol)
}

/// Natural log of the determinant of a symmetric positive-definite matrix.
pub fn logdet(m: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(m)?;
    let chol = cholesky(m)?;
    let l = chol.l_dirty();
    Ok((0..m.nrows()).map(|i| 2.0 * l[(i, i)].ln()).sum())
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut inv = cholesky(m)?.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Principal submatrix on the given (ordered) index set.
pub fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Eigenvalues of a symmetric matrix, sorted descending.
pub fn eigenvalues_desc(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigenvalues_desc(m).last().copied().unwrap_or(f64::INFINITY)
}

/// `Tr(a · b)` without forming the product.
pub fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut t = 0.0;
    for i in 0..n {
        for k in 0..n {
            t += a[(i, k)] * b[(k, i)];
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn logdet_examples() {
        assert_abs_diff_eq!(logdet(&DMatrix::identity(3, 3)).unwrap(), 0.0, epsilon = 1e-15);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert_abs_diff_eq!(logdet(&m).unwrap(), 0.75f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(logdet(&m).unwrap(), -0.287682, epsilon = 1e-6);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let err = logdet(&singular).unwrap_err();
        assert!(err.to_string().contains("not PD"), "{err}");
    }

    #[test]
    fn logdet_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
        assert!(matches!(logdet(&m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn inverse_matches_closed_form() {
        let rho = 0.3;
        let m = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let inv = spd_inverse(&m).unwrap();
        let d = 1.0 - rho * rho;
        assert_abs_diff_eq!(inv[(0, 0)], 1.0 / d, epsilon = 1e-12);
        assert_abs_diff_eq!(inv[(0, 1)], -rho / d, epsilon = 1e-12);
    }

    #[test]
    fn spectrum_sorted_descending() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0, 2.0]));
        assert_eq!(eigenvalues_desc(&m), vec![4.0, 2.0, 1.0]);
    }
}
