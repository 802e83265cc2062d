//! Data set in, result bundle out.

use crate::error::{Error, Result};
use crate::geometry::{fit_ellipsoid, point_clouds, Alignment, Side};
use crate::inference::{pseudo_realizations, InferenceOptions, Method, ReferenceModel};
use crate::io::{EllipseRecord, FitSummary, InferenceSummary, ResultBundle};
use crate::pca::{curvature_index, preprocess, Dataset};
use crate::rng::SeedStream;

#[derive(Clone, Debug, PartialEq)]
pub struct InferRequest {
    pub rank: usize,
    pub scale: bool,
    /// `None` fits without ellipses.
    pub method: Option<Method>,
    pub options: InferenceOptions,
    pub level: f64,
    pub seed: u64,
    /// 1-based dimension pairs to draw ellipses in.
    pub dims: Vec<[usize; 2]>,
    pub columns: bool,
    pub alignment: Alignment,
}

impl InferRequest {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            scale: false,
            method: None,
            options: InferenceOptions::default(),
            level: 0.95,
            seed: 0,
            dims: vec![[1, 2]],
            columns: false,
            alignment: Alignment::None,
        }
    }
}

fn summarize(data: &Dataset, reference: &ReferenceModel, scaled: bool) -> FitSummary {
    let fit = &reference.fit;
    let mut warnings = Vec::new();
    if fit.degenerate {
        warnings.push(format!(
            "eigenvalues {} and {} are nearly tied; the rank-{} subspace is not well defined",
            fit.rank,
            fit.rank + 1,
            fit.rank
        ));
    }
    let curvature = match curvature_index(fit) {
        Ok(k) => Some(k),
        Err(e) => {
            warnings.push(e.to_string());
            None
        }
    };
    let rows_of = |m: nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    };
    FitSummary {
        rows: data.row_labels.clone(),
        columns: data.col_labels.clone(),
        rank: fit.rank,
        scaled,
        eigenvalues: fit.spectrum.iter().map(|s| s * s).collect(),
        explained_percent: {
            let total = fit.total_inertia();
            fit.spectrum.iter().map(|s| 100.0 * s * s / total).collect()
        },
        scores: rows_of(fit.scores()),
        loadings: rows_of(fit.v.clone()),
        sigma2: reference.noise.sigma2,
        df: reference.noise.df,
        curvature,
        sigma_curvature: curvature.map(|k| k * reference.noise.sigma()),
        degenerate: fit.degenerate,
        warnings,
    }
}

/// Fits the rank-S model and, if a method is requested, builds ellipses for
/// every requested dimension pair.
pub fn infer(data: &Dataset, req: &InferRequest) -> Result<ResultBundle> {
    let (working, _) = preprocess(data, req.scale)?;
    let reference = ReferenceModel::new(working, req.rank)?;
    let mut summary = summarize(data, &reference, req.scale);

    let Some(method) = req.method else {
        return Ok(ResultBundle {
            summary,
            inference: None,
            ellipses: Vec::new(),
            coverage: None,
        });
    };
    for d in &req.dims {
        if d[0] == 0 || d[1] == 0 || d[0] > req.rank || d[1] > req.rank || d[0] == d[1] {
            return Err(Error::InvalidInput(format!(
                "dimension pair {},{} invalid for rank {}",
                d[0], d[1], req.rank
            )));
        }
    }
    let set = pseudo_realizations(&reference, method, &req.options, SeedStream::new(req.seed))?;
    let alignment = req.alignment;
    if !set.skipped.is_empty() {
        summary.warnings.push(format!(
            "{} cells with leverage near 1 were skipped",
            set.skipped.len()
        ));
    }
    if !set.flags.is_empty() {
        summary
            .warnings
            .push(format!("{} replicates were flagged", set.flags.len()));
    }

    let mut sides = vec![Side::Rows];
    if req.columns {
        sides.push(Side::Columns);
    }
    let mut ellipses = Vec::new();
    for pair in &req.dims {
        let dims = [pair[0] - 1, pair[1] - 1];
        for &side in &sides {
            let clouds = point_clouds(&set, side, &dims, alignment)?;
            let labels = match side {
                Side::Rows => &data.row_labels,
                Side::Columns => &data.col_labels,
            };
            for (i, label) in labels.iter().enumerate() {
                let e = fit_ellipsoid(&clouds.cloud(i), req.level)?;
                ellipses.push(EllipseRecord {
                    side,
                    label: label.clone(),
                    dims: *pair,
                    point: [clouds.reference[(i, 0)], clouds.reference[(i, 1)]],
                    center: [e.center[0], e.center[1]],
                    cov: [
                        [e.cov[(0, 0)], e.cov[(0, 1)]],
                        [e.cov[(1, 0)], e.cov[(1, 1)]],
                    ],
                    level: e.level,
                    radius2: e.radius2,
                });
            }
        }
    }
    let inference = InferenceSummary {
        method,
        replicates: set.len(),
        seed: set.seed,
        level: req.level,
        alignment,
        skipped_cells: set
            .skipped
            .iter()
            .map(|&(i, j)| (data.row_labels[i].clone(), data.col_labels[j].clone()))
            .collect(),
        flagged_replicates: set.flags.len(),
    };
    Ok(ResultBundle {
        summary,
        inference: Some(inference),
        ellipses,
        coverage: None,
    })
}
