//! PCA with missing cells by alternating imputation (EM-PCA).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::frobenius2;
use crate::pca::{fit_pca, PcaFit};

/// A matrix together with its observation mask (`true` = observed).
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedMatrix {
    pub values: DMatrix<f64>,
    pub mask: DMatrix<bool>,
}

impl MaskedMatrix {
    pub fn new(values: DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(Error::InvalidInput(format!(
                "mask shape {:?} does not match values {:?}",
                mask.shape(),
                values.shape()
            )));
        }
        Ok(Self { values, mask })
    }

    pub fn complete(values: DMatrix<f64>) -> Self {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), true);
        Self { values, mask }
    }

    /// `values` with the listed `(row, column)` cells marked missing.
    pub fn with_missing(values: DMatrix<f64>, cells: &[(usize, usize)]) -> Self {
        let mut m = Self::complete(values);
        for &(i, j) in cells {
            m.mask[(i, j)] = false;
        }
        m
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&w| w).count()
    }

    pub fn missing_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..self.mask.ncols() {
            for i in 0..self.mask.nrows() {
                if !self.mask[(i, j)] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Checks that a rank-`rank` fit is identifiable from the observed cells.
    pub fn validate(&self, rank: usize) -> Result<()> {
        let (n, p) = self.mask.shape();
        for (i, row) in self.mask.row_iter().enumerate() {
            if !row.iter().any(|&w| w) {
                return Err(Error::InvalidInput(format!(
                    "row {} has no observed cell",
                    i + 1
                )));
            }
        }
        for (j, col) in self.mask.column_iter().enumerate() {
            if col.iter().filter(|&&w| w).count() < 2 {
                return Err(Error::InvalidInput(format!(
                    "column {} has fewer than two observed cells",
                    j + 1
                )));
            }
        }
        // free parameters of column means plus a rank-S centered matrix
        let needed = (p + (n - 1) * rank + p * rank).saturating_sub(rank * rank);
        if self.observed_count() < needed {
            return Err(Error::InvalidInput(format!(
                "{} observed cells, a rank-{rank} fit needs at least {needed}",
                self.observed_count()
            )));
        }
        Ok(())
    }
}

/// Starting values for the missing cells.
#[derive(Clone, Debug, PartialEq)]
pub enum EmInit {
    /// Mean of the observed entries of the column.
    ColumnMean,
    Zero,
    /// Missing cells start from the matching entries of this matrix.
    Provided(DMatrix<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmConfig {
    /// Stop once `||X_k+1 - X_k|| / ||X_k+1||` on the completed matrix falls to this.
    pub tol: f64,
    pub max_iter: usize,
    pub init: EmInit,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 1000,
            init: EmInit::ColumnMean,
        }
    }
}

impl EmConfig {
    pub fn with_init(mut self, init: EmInit) -> Self {
        self.init = init;
        self
    }
}

#[derive(Clone, Debug)]
pub struct EmOutcome {
    pub fit: PcaFit,
    /// Observed cells untouched, missing cells holding the final imputation.
    pub completed: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Observed-cell loss of the fit at each iteration.
    pub losses: Vec<f64>,
}

/// Sum of squared residuals over the observed cells.
pub fn weighted_loss(masked: &MaskedMatrix, fit: &PcaFit) -> f64 {
    masked
        .values
        .iter()
        .zip(fit.fitted.iter())
        .zip(masked.mask.iter())
        .filter(|(_, &w)| w)
        .map(|((x, f), _)| (x - f).powi(2))
        .sum()
}

pub fn em_pca(masked: &MaskedMatrix, rank: usize, cfg: &EmConfig) -> Result<EmOutcome> {
    masked.validate(rank)?;
    if !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return Err(Error::InvalidInput(
            "EM needs tol > 0 and max_iter >= 1".into(),
        ));
    }
    let missing = masked.missing_cells();
    let mut completed = masked.values.clone();
    match &cfg.init {
        EmInit::ColumnMean => {
            let (n, p) = completed.shape();
            let mut means = vec![0.0; p];
            for j in 0..p {
                let (sum, count) = (0..n)
                    .filter(|&i| masked.mask[(i, j)])
                    .fold((0.0, 0usize), |(s, c), i| {
                        (s + masked.values[(i, j)], c + 1)
                    });
                means[j] = sum / count as f64;
            }
            for &(i, j) in &missing {
                completed[(i, j)] = means[j];
            }
        }
        EmInit::Zero => {
            for &(i, j) in &missing {
                completed[(i, j)] = 0.0;
            }
        }
        EmInit::Provided(start) => {
            if start.shape() != completed.shape() {
                return Err(Error::InvalidInput(
                    "EM starting matrix has the wrong shape".into(),
                ));
            }
            for &(i, j) in &missing {
                completed[(i, j)] = start[(i, j)];
            }
        }
    }

    let mut losses = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut fit = fit_pca(&completed, rank)?;
    loop {
        iterations += 1;
        losses.push(weighted_loss(masked, &fit));
        let mut change2 = 0.0;
        for &(i, j) in &missing {
            let d = fit.fitted[(i, j)] - completed[(i, j)];
            change2 += d * d;
            completed[(i, j)] = fit.fitted[(i, j)];
        }
        let norm = frobenius2(&completed).sqrt();
        let rel = if norm > 0.0 {
            change2.sqrt() / norm
        } else {
            change2.sqrt()
        };
        if rel <= cfg.tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }
        fit = fit_pca(&completed, rank)?;
    }
    Ok(EmOutcome {
        fit,
        completed,
        iterations,
        converged,
        losses,
    })
}
