//! The tangent-space projector of a rank-S fit.
//!
//! With `J = 11'/n`, `C = I_n - J`, `P_U = UU'` and `P_V = VV'`, the projector
//! acting on column-stacked `n x p` matrices is
//!
//! ```text
//! P = (I_p (x) J) + (P_V (x) C) + (I_p (x) P_U) - (P_V (x) P_U)
//! ```
//!
//! and `P vec(X) = vec(Xhat)`. Its diagonal gives the cell leverages. The
//! operator can be materialized for small tables, applied in matrix form
//! (`JZ + CZP_V + P_U Z - P_U Z P_V`) at any size, or reduced to its
//! diagonal in closed form.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::pca::PcaFit;

/// Largest `n * p` for which [`projection_operator`] materializes `P`.
pub const DEFAULT_MATERIALIZE_LIMIT: usize = 4000;

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionOperator {
    /// `np x np`, column-stacked cell order (`i + j * n`).
    pub matrix: DMatrix<f64>,
    pub diag: DVector<f64>,
}

pub fn projection_operator(fit: &PcaFit) -> Result<ProjectionOperator> {
    projection_operator_with_limit(fit, DEFAULT_MATERIALIZE_LIMIT)
}

pub fn projection_operator_with_limit(fit: &PcaFit, limit: usize) -> Result<ProjectionOperator> {
    let (n, p) = (fit.nrows(), fit.ncols());
    let size = n * p;
    if size > limit {
        return Err(Error::ProjectionTooLarge { size, limit });
    }
    let eye_n = DMatrix::<f64>::identity(n, n);
    let eye_p = DMatrix::<f64>::identity(p, p);
    let j = DMatrix::from_element(n, n, 1.0 / n as f64);
    let c = &eye_n - &j;
    let p_u = &fit.u * fit.u.transpose();
    let p_v = &fit.v * fit.v.transpose();

    let matrix = eye_p.kronecker(&j) + p_v.transpose().kronecker(&c) + eye_p.kronecker(&p_u)
        - p_v.transpose().kronecker(&p_u);
    let diag = matrix.diagonal();
    Ok(ProjectionOperator { matrix, diag })
}

/// `P_ij,ij = 1/n + (P_V)_jj C_ii + (P_U)_ii - (P_V)_jj (P_U)_ii`, in
/// column-stacked order, without forming `P`.
pub fn projection_diagonal(fit: &PcaFit) -> DVector<f64> {
    let (n, p) = (fit.nrows(), fit.ncols());
    let inv_n = 1.0 / n as f64;
    let pu: Vec<f64> = fit.u.row_iter().map(|r| r.norm_squared()).collect();
    let pv: Vec<f64> = fit.v.row_iter().map(|r| r.norm_squared()).collect();
    let mut out = DVector::zeros(n * p);
    for j in 0..p {
        for i in 0..n {
            out[i + j * n] = inv_n + pv[j] * (1.0 - inv_n) + pu[i] - pv[j] * pu[i];
        }
    }
    out
}

/// Applies `P` to an `n x p` matrix `Z` in matrix form.
pub fn apply_projection(fit: &PcaFit, z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = z.nrows();
    let means = crate::linalg::column_means(z);
    // JZ puts each column mean in every row; CZ is the centered matrix
    let zc = crate::linalg::subtract_row(z, &means);
    let zc_v = &zc * &fit.v;
    let ut_z = fit.u.transpose() * z;
    let ut_z_v = &ut_z * &fit.v;
    let mut out = &zc_v * fit.v.transpose() + &fit.u * (ut_z - ut_z_v * fit.v.transpose());
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(means[j]);
    }
    debug_assert_eq!(out.nrows(), n);
    out
}
