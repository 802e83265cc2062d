//! Data preparation, truncated-SVD fitting and the scalar diagnostics that
//! go with a fixed-effects PCA fit.
//!
//! A fit always centers the matrix it is given. Everything downstream (noise
//! estimate, projector, resampling) works in the coordinates of that matrix;
//! [`Preprocess`] records how a raw [`Dataset`] was mapped into them.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{add_row, center_columns, column_means, frobenius2, sorted_svd};

/// Observed table with row and column labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub values: DMatrix<f64>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

impl Dataset {
    pub fn new(
        values: DMatrix<f64>,
        row_labels: Vec<String>,
        col_labels: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = values.shape();
        if n < 3 || p < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 3 rows and 2 columns, got {n}x{p}"
            )));
        }
        if row_labels.len() != n || col_labels.len() != p {
            return Err(Error::InvalidInput(format!(
                "labels ({} rows, {} columns) do not match a {n}x{p} matrix",
                row_labels.len(),
                col_labels.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at row {}, column {}",
                k % n + 1,
                k / n + 1
            )));
        }
        Ok(Self {
            values,
            row_labels,
            col_labels,
        })
    }

    /// Wraps a bare matrix, labelling rows `R1..` and columns `C1..`.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let rows = (1..=values.nrows()).map(|i| format!("R{i}")).collect();
        let cols = (1..=values.ncols()).map(|j| format!("C{j}")).collect();
        Self::new(values, rows, cols)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }
}

/// Column centering (always) and optional unit-variance scaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocess {
    pub col_means: DVector<f64>,
    pub col_scales: DVector<f64>,
    pub scaled: bool,
}

impl Preprocess {
    pub fn centering(col_means: DVector<f64>) -> Self {
        let p = col_means.len();
        Self {
            col_means,
            col_scales: DVector::from_element(p, 1.0),
            scaled: false,
        }
    }

    /// Raw coordinates to working coordinates.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.col_means[j], self.col_scales[j]);
            col.apply(|v| *v = (*v - m) / s);
        }
        out
    }

    /// Working coordinates back to raw coordinates.
    pub fn restore(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = w.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.col_means[j], self.col_scales[j]);
            col.apply(|v| *v = *v * s + m);
        }
        out
    }
}

/// Centers (and optionally scales to unit sample standard deviation) the
/// dataset, returning the working matrix.
pub fn preprocess(data: &Dataset, scale: bool) -> Result<(DMatrix<f64>, Preprocess)> {
    let x = &data.values;
    let n = x.nrows() as f64;
    let means = column_means(x);
    let mut scales = DVector::from_element(x.ncols(), 1.0);
    if scale {
        for (j, col) in x.column_iter().enumerate() {
            let ss: f64 = col.iter().map(|v| (v - means[j]).powi(2)).sum();
            let sd = (ss / (n - 1.0)).sqrt();
            if sd <= 1e-14 * means[j].abs() || sd == 0.0 {
                return Err(Error::ZeroVariance {
                    column: data.col_labels[j].clone(),
                });
            }
            scales[j] = sd;
        }
    }
    let pre = Preprocess {
        col_means: means,
        col_scales: scales,
        scaled: scale,
    };
    Ok((pre.apply(x), pre))
}

/// Rank-S truncated SVD of a column-centered matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaFit {
    /// Left singular vectors, `n x S`.
    pub u: DMatrix<f64>,
    /// Leading singular values `sqrt(lambda_s)`, non-increasing.
    pub sqrt_lambda: DVector<f64>,
    /// Principal axes, `p x S`.
    pub v: DMatrix<f64>,
    pub rank: usize,
    /// Centering applied by the fit (scales are all 1).
    pub preprocess: Preprocess,
    /// Rank-S reconstruction in the coordinates of the fitted matrix.
    pub fitted: DMatrix<f64>,
    /// Every singular value of the centered matrix.
    pub spectrum: DVector<f64>,
    /// Set when `lambda_S` and `lambda_{S+1}` coincide within 1e-10 (relative
    /// to `lambda_1`); the rank-S subspace is then not identified.
    pub degenerate: bool,
}

impl PcaFit {
    pub fn nrows(&self) -> usize {
        self.u.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.v.nrows()
    }

    /// Row coordinates `F = U diag(sqrt_lambda)`.
    pub fn scores(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.sqrt_lambda)
    }

    /// Column coordinates `V diag(sqrt_lambda)`.
    pub fn column_coordinates(&self) -> DMatrix<f64> {
        &self.v * DMatrix::from_diagonal(&self.sqrt_lambda)
    }

    /// `lambda_s`, the squared singular values.
    pub fn eigenvalues(&self) -> DVector<f64> {
        self.sqrt_lambda.map(|s| s * s)
    }

    pub fn total_inertia(&self) -> f64 {
        self.spectrum.iter().map(|s| s * s).sum()
    }

    /// Share of total inertia carried by each retained component.
    pub fn explained_ratio(&self) -> DVector<f64> {
        let total = self.total_inertia();
        self.eigenvalues()
            .map(|l| if total > 0.0 { l / total } else { 0.0 })
    }

    /// `U diag(sqrt_lambda) V'`.
    pub fn centered_fitted(&self) -> DMatrix<f64> {
        self.scores() * self.v.transpose()
    }
}

/// Fits a rank-`rank` PCA to `x` after centering its columns.
pub fn fit_pca(x: &DMatrix<f64>, rank: usize) -> Result<PcaFit> {
    let (n, p) = x.shape();
    let max = (n.saturating_sub(1)).min(p);
    if rank == 0 || rank > max {
        return Err(Error::RankOutOfRange { rank, max });
    }
    let means = column_means(x);
    let xc = center_columns(x);
    let (u_all, s_all, v_all) = sorted_svd(&xc);

    let mut u = u_all.columns(0, rank).into_owned();
    let mut v = v_all.columns(0, rank).into_owned();
    let sqrt_lambda = s_all.rows(0, rank).into_owned();

    for s in 0..rank {
        let col = v.column(s);
        let mut best = 0;
        for j in 1..p {
            if col[j].abs() > col[best].abs() {
                best = j;
            }
        }
        if col[best] < 0.0 {
            v.column_mut(s).neg_mut();
            u.column_mut(s).neg_mut();
        }
    }

    let null_tol = f64::EPSILON * (n.max(p) as f64) * s_all[0];
    for s in 0..rank {
        if sqrt_lambda[s] <= null_tol {
            reorthogonalize_null_column(&mut u, s);
        }
    }

    let l1 = s_all[0] * s_all[0];
    let degenerate = s_all.len() > rank && {
        let (ls, next) = (s_all[rank - 1].powi(2), s_all[rank].powi(2));
        (ls - next).abs() <= 1e-10 * l1.max(f64::MIN_POSITIVE)
    };

    let fitted_c = &u * DMatrix::from_diagonal(&sqrt_lambda) * v.transpose();
    let fitted = add_row(&fitted_c, &means);
    Ok(PcaFit {
        u,
        sqrt_lambda,
        v,
        rank,
        preprocess: Preprocess::centering(means),
        fitted,
        spectrum: s_all,
        degenerate,
    })
}

/// Left singular vectors attached to a zero singular value are arbitrary;
/// pick one orthogonal to the constant vector and to the earlier columns so
/// that `U'1 = 0` keeps holding.
fn reorthogonalize_null_column(u: &mut DMatrix<f64>, s: usize) {
    let n = u.nrows();
    let mut basis: Vec<DVector<f64>> = vec![DVector::from_element(n, 1.0 / (n as f64).sqrt())];
    basis.extend((0..s).map(|k| u.column(k).into_owned()));
    let candidates = std::iter::once(u.column(s).into_owned())
        .chain((0..n).map(|i| DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 })));
    for mut c in candidates {
        for _ in 0..2 {
            for b in &basis {
                let d = b.dot(&c);
                c.axpy(-d, b, 1.0);
            }
        }
        let norm = c.norm();
        if norm > 1e-6 {
            u.set_column(s, &(c / norm));
            return;
        }
    }
}

/// Noise variance estimate and its degrees of freedom.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma2: f64,
    pub df: i64,
}

impl NoiseModel {
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

/// `np - nS - pS + S + S^2`.
pub fn degrees_of_freedom(n: usize, p: usize, rank: usize) -> i64 {
    let (n, p, s) = (n as i64, p as i64, rank as i64);
    n * p - n * s - p * s + s + s * s
}

/// Residual sum of squares divided by [`degrees_of_freedom`].
pub fn estimate_noise_variance(x: &DMatrix<f64>, fit: &PcaFit) -> Result<NoiseModel> {
    let df = degrees_of_freedom(x.nrows(), x.ncols(), fit.rank);
    if df <= 0 {
        return Err(Error::DegreesOfFreedom { df });
    }
    let rss = frobenius2(&(x - &fit.fitted));
    Ok(NoiseModel {
        sigma2: rss / df as f64,
        df,
    })
}

/// Intrinsic non-linearity index `1 / sqrt(lambda_S)`.
pub fn curvature_index(fit: &PcaFit) -> Result<f64> {
    let last = fit.sqrt_lambda[fit.rank - 1];
    let top = fit.spectrum[0];
    if top <= 0.0 || last <= 1e-12 * top {
        return Err(Error::SignalRankDeficient { index: fit.rank });
    }
    Ok(1.0 / last)
}

/// Leverage-corrected residuals `(xhat - x) / sqrt(1 - P_ij,ij)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectedResiduals {
    /// NaN where the cell is undefined.
    pub values: DMatrix<f64>,
    pub undefined: Vec<(usize, usize)>,
}

/// `leverage` is the projector diagonal in column-stacked order.
pub fn corrected_residuals(
    x: &DMatrix<f64>,
    fit: &PcaFit,
    leverage: &DVector<f64>,
) -> CorrectedResiduals {
    let (n, p) = x.shape();
    let mut values = DMatrix::zeros(n, p);
    let mut undefined = Vec::new();
    for j in 0..p {
        for i in 0..n {
            let h = leverage[i + j * n];
            if h >= 1.0 - 1e-10 {
                values[(i, j)] = f64::NAN;
                undefined.push((i, j));
            } else {
                values[(i, j)] = (fit.fitted[(i, j)] - x[(i, j)]) / (1.0 - h).sqrt();
            }
        }
    }
    CorrectedResiduals { values, undefined }
}
