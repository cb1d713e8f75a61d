//! Dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue floor used when inverting estimated Hessians.
pub const HESSIAN_EIG_FLOOR: f64 = 1e-8;

/// Symmetric matrix factored as `Q diag(values) Qᵀ` with eigenvalues floored
/// at `floor_rel * max_eigenvalue`.
#[derive(Debug, Clone)]
pub struct FlooredEigen {
    pub vectors: DMatrix<f64>,
    pub values: DVector<f64>,
    pub floored: usize,
}

impl FlooredEigen {
    pub fn new(m: &DMatrix<f64>, floor_rel: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidArgument("matrix must be square".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite matrix entry".into()));
        }
        let sym = symmetrize(m);
        let eig = SymmetricEigen::new(sym);
        let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
        if max <= 0.0 {
            return Err(Error::Numeric("matrix has no positive eigenvalue".into()));
        }
        let floor = floor_rel * max;
        let mut floored = 0;
        let values = eig.eigenvalues.map(|v| {
            if v < floor {
                floored += 1;
                floor
            } else {
                v
            }
        });
        Ok(Self {
            vectors: eig.eigenvectors,
            values,
            floored,
        })
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let inv = self.values.map(|v| 1.0 / v);
        &self.vectors * DMatrix::from_diagonal(&inv) * self.vectors.transpose()
    }

    /// `tr(A⁻¹ M A⁻¹)` without forming the inverse.
    pub fn sandwich_trace(&self, m: &DMatrix<f64>) -> f64 {
        // tr(Q Λ⁻¹ Qᵀ M Q Λ⁻¹ Qᵀ) = Σ_i (Qᵀ M Q)_ii / λ_i²
        let mq = m * &self.vectors;
        let mut acc = 0.0;
        for i in 0..self.values.len() {
            let q = self.vectors.column(i);
            let d = q.dot(&mq.column(i));
            acc += d / (self.values[i] * self.values[i]);
        }
        acc
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Inverse square root of a symmetric PSD matrix, eigenvalues floored at `floor`.
pub fn inv_sqrt_psd(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = eig.eigenvalues.map(|v| 1.0 / v.max(floor).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Empirical covariance `(1/m) Σ (u_i − ū)(v_i − v̄)ᵀ` of paired row samples.
pub fn cross_covariance(u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(u.nrows(), v.nrows());
    let m = u.nrows();
    if m == 0 {
        return DMatrix::zeros(u.ncols(), v.ncols());
    }
    let uc = center_rows(u);
    let vc = center_rows(v);
    uc.transpose() * vc / m as f64
}

pub fn covariance(u: &DMatrix<f64>) -> DMatrix<f64> {
    let uc = center_rows(u);
    let m = u.nrows().max(1);
    uc.transpose() * &uc / m as f64
}

fn center_rows(u: &DMatrix<f64>) -> DMatrix<f64> {
    let m = u.nrows();
    let mean = u.row_mean();
    let mut out = u.clone();
    for i in 0..m {
        let mut row = out.row_mut(i);
        row -= &mean;
    }
    out
}

/// Rows of `vectors` stacked into a matrix.
pub fn rows_to_matrix(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

/// Solve `A x = b` for symmetric PSD `A`; retries with `ridge·I` on failure.
/// Returns the solution and whether the ridge fallback was used.
pub fn solve_psd(a: &DMatrix<f64>, b: &DVector<f64>, ridge: f64) -> Result<(DVector<f64>, bool)> {
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Ok((x, false));
        }
    }
    let n = a.nrows();
    let reg = a + DMatrix::identity(n, n) * ridge;
    if let Some(ch) = reg.clone().cholesky() {
        return Ok((ch.solve(b), true));
    }
    reg.lu()
        .solve(b)
        .map(|x| (x, true))
        .ok_or_else(|| Error::Numeric("singular system after ridge fallback".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sandwich_trace_matches_explicit_inverse() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.0, 0.1, 2.0, 0.4, 0.0, 0.4, 1.5]);
        let e = FlooredEigen::new(&a, HESSIAN_EIG_FLOOR).unwrap();
        let inv = a.clone().try_inverse().unwrap();
        let direct = (&inv * &m * &inv).trace();
        assert!((e.sandwich_trace(&m) - direct).abs() < 1e-12);
        assert!((e.inverse() - inv).abs().max() < 1e-12);
    }

    #[test]
    fn floor_clamps_tiny_eigenvalues() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-12]));
        let e = FlooredEigen::new(&a, 1e-8).unwrap();
        assert_eq!(e.floored, 1);
        assert!((e.inverse()[(1, 1)] - 1e8).abs() < 1e-3);
    }

    #[test]
    fn covariance_of_two_points() {
        let u = DMatrix::from_row_slice(2, 1, &[1.0, 3.0]);
        assert!((covariance(&u)[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ridge_fallback_flags_singular_system() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let (_, flagged) = solve_psd(&a, &b, 1e-8).unwrap();
        assert!(flagged);
    }
}
