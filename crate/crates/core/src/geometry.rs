//! Procrustes alignment, point clouds and Gaussian confidence ellipsoids.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF};

use crate::error::{Error, Result};
use crate::inference::PseudoRealizationSet;
use crate::linalg::{center_columns, sorted_svd, sym_sqrt};

/// Which points of the table the ellipsoids describe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Rows,
    Columns,
}

/// Whether replicates are rotated onto the reference before projection.
///
/// Replicates are matrices, not factorizations, so projecting them onto the
/// reference axes already puts them in a common frame. A Procrustes rotation
/// on top of that also removes the rotational part of their spread.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alignment {
    Procrustes,
    #[default]
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rotation {
    pub matrix: DMatrix<f64>,
    /// The replicate was all zeros and the identity was used.
    pub identity_fallback: bool,
}

/// Orthogonal `R` minimising `||replicate * R - reference||_F`.
pub fn procrustes_rotation(reference: &DMatrix<f64>, replicate: &DMatrix<f64>) -> Result<Rotation> {
    if reference.shape() != replicate.shape() {
        return Err(Error::InvalidInput(format!(
            "procrustes shapes differ: {:?} vs {:?}",
            reference.shape(),
            replicate.shape()
        )));
    }
    let p = reference.ncols();
    if replicate.iter().all(|&v| v == 0.0) {
        return Ok(Rotation {
            matrix: DMatrix::identity(p, p),
            identity_fallback: true,
        });
    }
    let (u, _, v) = sorted_svd(&(replicate.transpose() * reference));
    let matrix = u * v.transpose();
    Ok(Rotation {
        matrix,
        identity_fallback: false,
    })
}

fn oriented(x: &DMatrix<f64>, side: Side) -> DMatrix<f64> {
    match side {
        Side::Rows => x.clone(),
        Side::Columns => x.transpose(),
    }
}

/// Centers every replicate and rotates it onto the centered reference. For
/// `Side::Columns` the matrices are transposed (`p x n`) after centering.
pub fn align_set(set: &PseudoRealizationSet, side: Side) -> Result<Vec<DMatrix<f64>>> {
    let reference = oriented(&set.reference.centered_fitted(), side);
    set.replicates
        .iter()
        .map(|d| {
            let b = oriented(&center_columns(d), side);
            let r = procrustes_rotation(&reference, &b)?;
            Ok(b * r.matrix)
        })
        .collect()
}

/// Coordinates of an aligned replicate on the reference axes (`V` for rows,
/// `U` for columns), restricted to `dims`.
pub fn project_scores(aligned: &DMatrix<f64>, axes: &DMatrix<f64>, dims: &[usize]) -> DMatrix<f64> {
    let sub = axes.select_columns(dims);
    aligned * sub
}

/// Aligned coordinates of one centered replicate without forming the `p x p`
/// rotation. With `G = B' F_ref = E S W'` the rotated, projected replicate is
/// `B E W'`, which equals `B R A` for the full Procrustes `R`.
///
/// `reference_coords` are the reference coordinates on `axes`
/// (`reference_c * axes`); `replicate_c` is in the same orientation.
pub fn aligned_coordinates(
    reference_coords: &DMatrix<f64>,
    axes: &DMatrix<f64>,
    replicate_c: &DMatrix<f64>,
    alignment: Alignment,
) -> DMatrix<f64> {
    match alignment {
        Alignment::None => replicate_c * axes,
        Alignment::Procrustes => {
            let g = replicate_c.transpose() * reference_coords;
            if g.iter().all(|&v| v == 0.0) {
                return replicate_c * axes;
            }
            let (e, _, w) = sorted_svd(&g);
            replicate_c * e * w.transpose()
        }
    }
}

/// Reference points and aligned replicate points for one side of the table.
#[derive(Clone, Debug, PartialEq)]
pub struct PointClouds {
    pub side: Side,
    pub dims: Vec<usize>,
    /// `m x d` reference coordinates.
    pub reference: DMatrix<f64>,
    /// One `m x d` matrix per replicate.
    pub replicates: Vec<DMatrix<f64>>,
}

impl PointClouds {
    pub fn npoints(&self) -> usize {
        self.reference.nrows()
    }

    /// `K x d` cloud of point `i` across replicates.
    pub fn cloud(&self, i: usize) -> DMatrix<f64> {
        let d = self.dims.len();
        DMatrix::from_fn(self.replicates.len(), d, |k, c| self.replicates[k][(i, c)])
    }
}

/// Reference frame for one side: `(centered reference, axes)`.
pub fn reference_frame(fit: &crate::pca::PcaFit, side: Side) -> (DMatrix<f64>, DMatrix<f64>) {
    let centered = oriented(&fit.centered_fitted(), side);
    let axes = match side {
        Side::Rows => fit.v.clone(),
        Side::Columns => fit.u.clone(),
    };
    (centered, axes)
}

/// Aligns and projects every replicate of `set` onto all `S` reference axes,
/// then keeps `dims` (0-based).
pub fn point_clouds(
    set: &PseudoRealizationSet,
    side: Side,
    dims: &[usize],
    alignment: Alignment,
) -> Result<PointClouds> {
    let s = set.reference.rank;
    if dims.is_empty() || dims.iter().any(|&d| d >= s) {
        return Err(Error::InvalidInput(format!(
            "dimensions {dims:?} outside 0..{s}"
        )));
    }
    let (centered, axes) = reference_frame(&set.reference, side);
    let reference_coords = &centered * &axes;
    let replicates = set
        .replicates
        .iter()
        .map(|d| {
            let b = oriented(&center_columns(d), side);
            aligned_coordinates(&reference_coords, &axes, &b, alignment).select_columns(dims)
        })
        .collect();
    Ok(PointClouds {
        side,
        dims: dims.to_vec(),
        reference: reference_coords.select_columns(dims),
        replicates,
    })
}

/// `chi^2_d` quantile at `level`.
pub fn chi2_quantile(d: usize, level: f64) -> Result<f64> {
    check_level(level)?;
    let dist = ChiSquared::new(d as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
    // the library inverse is only accurate to a few digits; polish with Newton
    let mut x = dist.inverse_cdf(level);
    for _ in 0..8 {
        let step = (dist.cdf(x) - level) / dist.pdf(x);
        if !step.is_finite() {
            break;
        }
        x = (x - step).max(x / 2.0);
        if step.abs() <= 1e-15 * x {
            break;
        }
    }
    Ok(x)
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!(
            "confidence level {level} not in (0, 1)"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceEllipsoid {
    pub center: DVector<f64>,
    /// Sample covariance of the cloud (divisor `K - 1`).
    pub cov: DMatrix<f64>,
    pub level: f64,
    pub radius2: f64,
}

impl ConfidenceEllipsoid {
    pub fn dims(&self) -> usize {
        self.center.len()
    }

    /// `cov` plus a small ridge so collapsed clouds still define a region.
    pub fn shape(&self) -> DMatrix<f64> {
        let d = self.dims();
        let ridge =
            1e-12 * self.cov.trace() / d as f64 + 1e-24 * (1.0 + self.center.norm_squared());
        &self.cov + DMatrix::identity(d, d) * ridge
    }

    pub fn mahalanobis2(&self, point: &DVector<f64>) -> Result<f64> {
        if point.len() != self.dims() {
            return Err(Error::InvalidInput("point dimension mismatch".into()));
        }
        let chol = self.shape().cholesky().ok_or(Error::SingularCovariance)?;
        let diff = point - &self.center;
        Ok(diff.dot(&chol.solve(&diff)))
    }
}

/// Gaussian ellipsoid from a `K x d` cloud.
pub fn fit_ellipsoid(points: &DMatrix<f64>, level: f64) -> Result<ConfidenceEllipsoid> {
    check_level(level)?;
    let (k, d) = points.shape();
    if d == 0 || k <= d {
        return Err(Error::TooFewPoints { points: k, dims: d });
    }
    let center = DVector::from_iterator(d, points.column_iter().map(|c| c.mean()));
    let centered = DMatrix::from_fn(k, d, |r, c| points[(r, c)] - center[c]);
    let cov = centered.transpose() * &centered / (k - 1) as f64;
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularCovariance);
    }
    Ok(ConfidenceEllipsoid {
        center,
        cov,
        level,
        radius2: chi2_quantile(d, level)?,
    })
}

pub fn contains(ellipsoid: &ConfidenceEllipsoid, point: &DVector<f64>) -> Result<bool> {
    Ok(ellipsoid.mahalanobis2(point)? <= ellipsoid.radius2)
}

/// `m` boundary points of a 2-D ellipse, `center + sqrt(r2) Sigma^(1/2) (cos t, sin t)`.
pub fn ellipse_outline(ellipsoid: &ConfidenceEllipsoid, m: usize) -> Result<Vec<[f64; 2]>> {
    if ellipsoid.dims() != 2 {
        return Err(Error::InvalidInput("outlines need a 2-D ellipse".into()));
    }
    if m < 8 {
        return Err(Error::InvalidInput(
            "outline needs at least 8 points".into(),
        ));
    }
    let root = sym_sqrt(&ellipsoid.shape()) * ellipsoid.radius2.sqrt();
    Ok((0..m)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / m as f64;
            let (s, c) = t.sin_cos();
            [
                ellipsoid.center[0] + root[(0, 0)] * c + root[(0, 1)] * s,
                ellipsoid.center[1] + root[(1, 0)] * c + root[(1, 1)] * s,
            ]
        })
        .collect())
}
