//! Fixed-effects PCA with confidence ellipsoids.
//!
//! The data matrix is modelled as a fixed rank-S structure plus isotropic
//! Gaussian noise. This crate fits the rank-S estimator, produces
//! pseudo-realizations of it by four methods (linearized asymptotic draws,
//! parametric bootstrap, cell-wise jackknife via EM-PCA, and a leverage-based
//! approximation to that jackknife), projects them onto the reference axes
//! (optionally after an orthogonal Procrustes rotation), and turns the
//! resulting point clouds into Gaussian confidence ellipsoids for row and
//! column points. A Monte-Carlo harness measures the coverage of those
//! ellipsoids.

pub mod cli;
pub mod error;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod missing;
pub mod pca;
pub mod pipeline;
pub mod projection;
pub mod rng;
pub mod simulation;
pub mod svg;

pub use error::{Error, Result};
pub use geometry::{
    align_set, aligned_coordinates, chi2_quantile, contains, ellipse_outline, fit_ellipsoid,
    point_clouds, procrustes_rotation, project_scores, reference_frame, Alignment,
    ConfidenceEllipsoid, PointClouds, Rotation, Side,
};
pub use inference::{
    approximate_jackknife, asymptotic_draws, cellwise_jackknife, deletion_values,
    parametric_bootstrap, pseudo_realizations, pseudo_value, Covariance, InferenceOptions, Method,
    PseudoRealizationSet, ReferenceModel, ReplicateFlag,
};
pub use io::{
    parse_csv, read_csv, read_results, write_coverage, write_coverage_csv, write_results,
    CsvOptions, EllipseRecord, FitSummary, InferenceSummary, ResultBundle,
};
pub use missing::{em_pca, weighted_loss, EmConfig, EmInit, EmOutcome, MaskedMatrix};
pub use pca::{
    corrected_residuals, curvature_index, degrees_of_freedom, estimate_noise_variance, fit_pca,
    preprocess, CorrectedResiduals, Dataset, NoiseModel, PcaFit, Preprocess,
};
pub use pipeline::{infer, InferRequest};
pub use projection::{
    apply_projection, projection_diagonal, projection_operator, projection_operator_with_limit,
    ProjectionOperator,
};
pub use rng::SeedStream;
pub use simulation::{
    add_noise, generate_structure, run_coverage_experiment, signal_from_dataset, split_columns,
    CoverageCell, CoverageTable, NoiseLevel, SignalSpec, SimulationConfig, TruthMap,
};
pub use svg::{render_svg, SvgOptions};
