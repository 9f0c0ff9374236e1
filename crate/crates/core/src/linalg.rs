//! Small dense helpers built on nalgebra.
//!
//! Matrices met here mix columns of very different magnitude (a unit column
//! next to power-law columns in the thousands), so determinants and
//! condition numbers are taken after symmetric diagonal scaling.

use nalgebra::{DMatrix, DVector};

/// Diagonal scaling `d_i = 1/sqrt(|a_ii|)`; zero diagonals keep scale 1.
pub fn jacobi_scaling(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        a.nrows(),
        (0..a.nrows()).map(|i| {
            let d = a[(i, i)].abs();
            if d > 0.0 && d.is_finite() {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        }),
    )
}

fn scaled(a: &DMatrix<f64>, left: &DVector<f64>, right: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| left[i] * a[(i, j)] * right[j])
}

/// Log-determinant of a symmetric positive-definite matrix, or `None` if the
/// Cholesky factorization fails.
pub fn spd_logdet(a: &DMatrix<f64>) -> Option<f64> {
    let d = jacobi_scaling(a);
    let chol = scaled(a, &d, &d).cholesky()?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        acc += 2.0 * l[(i, i)].ln() - 2.0 * d[i].ln();
    }
    acc.is_finite().then_some(acc)
}

/// `ln |det a|` of a general square matrix via LU with row and column scaling.
pub fn log_abs_det(a: &DMatrix<f64>) -> Option<f64> {
    let n = a.nrows();
    let row_scale = DVector::from_iterator(
        n,
        (0..n).map(|i| inv_or_one(a.row(i).amax())),
    );
    let col_scale = DVector::from_iterator(
        n,
        (0..n).map(|j| inv_or_one(a.column(j).amax())),
    );
    let lu = scaled(a, &row_scale, &col_scale).lu();
    let u = lu.u();
    let mut acc = 0.0;
    for i in 0..n {
        let pivot = u[(i, i)].abs();
        if pivot == 0.0 || !pivot.is_finite() {
            return None;
        }
        acc += pivot.ln() - row_scale[i].ln() - col_scale[i].ln();
    }
    Some(acc)
}

fn inv_or_one(x: f64) -> f64 {
    if x > 0.0 && x.is_finite() {
        1.0 / x
    } else {
        1.0
    }
}

/// Inverse of a symmetric positive-definite matrix, with Jacobi scaling.
pub fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let d = jacobi_scaling(a);
    let inv = scaled(a, &d, &d).cholesky()?.inverse();
    let out = scaled(&inv, &d, &d);
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// 2-norm condition number of a symmetric matrix after Jacobi scaling.
pub fn scaled_condition(a: &DMatrix<f64>) -> f64 {
    let d = jacobi_scaling(a);
    let eig = scaled(a, &d, &d).symmetric_eigenvalues();
    let max = eig.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logdet_of_badly_scaled_spd() {
        let a = DMatrix::from_row_slice(3, 3, &[1e8, 1e3, 0.0, 1e3, 2.0, 0.1, 0.0, 0.1, 1e-1]);
        let exact = a.determinant();
        let got = spd_logdet(&a).unwrap();
        assert!((got - exact.ln()).abs() < 1e-10);
    }

    #[test]
    fn logdet_no_overflow() {
        let a = DMatrix::from_diagonal(&DVector::from_element(6, 1e200));
        let got = spd_logdet(&a).unwrap();
        assert!((got - 6.0 * 200.0 * 10f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn indefinite_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(spd_logdet(&a).is_none());
        assert!(spd_inverse(&a).is_none());
    }

    #[test]
    fn general_logabsdet() {
        let a = DMatrix::<f64>::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 3.0, -1.0, 4.0, 1e4, 5.0, 7.0]);
        let exact = a.determinant().abs().ln();
        assert!((log_abs_det(&a).unwrap() - exact).abs() < 1e-12);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(log_abs_det(&singular).map_or(true, |v| v < -30.0));
    }

    #[test]
    fn inverse_and_condition() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let inv = spd_inverse(&a).unwrap();
        let id = &a * &inv;
        assert!((id - DMatrix::identity(2, 2)).amax() < 1e-14);
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![1e10, 1.0]));
        assert!((scaled_condition(&diag) - 1.0).abs() < 1e-12);
    }
}
