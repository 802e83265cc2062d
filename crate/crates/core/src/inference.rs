//! Pseudo-realizations of the rank-S estimator.
//!
//! Each method returns a set of `n x p` matrices that stand in for draws of
//! `Xhat` under the noise model. They all live in the coordinates of the
//! matrix the reference fit was computed on.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::missing::{em_pca, EmConfig, EmInit, MaskedMatrix};
use crate::pca::{estimate_noise_variance, fit_pca, NoiseModel, PcaFit};
use crate::projection::{apply_projection, projection_diagonal};
use crate::rng::{SeedStream, TAG_ASYMPTOTIC, TAG_BOOTSTRAP};

/// Leverages at or above `1 - LEVERAGE_GUARD` make the deletion formula blow up.
pub const LEVERAGE_GUARD: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Asymptotic,
    Bootstrap,
    Jackknife,
    ApproxJackknife,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Asymptotic,
        Method::Bootstrap,
        Method::Jackknife,
        Method::ApproxJackknife,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Asymptotic => "asymptotic",
            Method::Bootstrap => "bootstrap",
            Method::Jackknife => "jackknife",
            Method::ApproxJackknife => "approx-jackknife",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown method '{s}' (expected asymptotic, bootstrap, jackknife or approx-jackknife)"
                ))
            })
    }
}

/// How asymptotic draws use the projector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Covariance {
    /// `sigma * P z`, correlated across cells.
    #[default]
    Full,
    /// `sigma * sqrt(P_ij,ij) z_ij`, independent cells.
    DiagonalOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferenceOptions {
    pub asymptotic_draws: usize,
    pub bootstrap_draws: usize,
    pub covariance: Covariance,
    /// Replace each asymptotic draw by its own rank-S fit.
    pub truncate_draws: bool,
    pub em: EmConfig,
    /// Start each leave-one-out EM from the reference fitted values.
    pub warm_start: bool,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self {
            asymptotic_draws: 500,
            bootstrap_draws: 500,
            covariance: Covariance::Full,
            truncate_draws: false,
            em: EmConfig::default(),
            warm_start: true,
        }
    }
}

/// The data a set of pseudo-realizations is built around.
#[derive(Clone, Debug)]
pub struct ReferenceModel {
    pub data: DMatrix<f64>,
    pub fit: PcaFit,
    pub noise: NoiseModel,
}

impl ReferenceModel {
    pub fn new(data: DMatrix<f64>, rank: usize) -> Result<Self> {
        let fit = fit_pca(&data, rank)?;
        let noise = estimate_noise_variance(&data, &fit)?;
        Ok(Self { data, fit, noise })
    }

    pub fn rank(&self) -> usize {
        self.fit.rank
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReplicateFlag {
    /// Leave-one-out EM stopped at `max_iter`.
    EmNotConverged { iterations: usize },
    /// The replicate fit had a near-tie at the truncation rank.
    Degenerate,
}

#[derive(Clone, Debug)]
pub struct PseudoRealizationSet {
    pub method: Method,
    pub replicates: Vec<DMatrix<f64>>,
    /// Left-out cell of each replicate (jackknife methods only).
    pub cells: Vec<(usize, usize)>,
    /// Cells the approximate jackknife could not use.
    pub skipped: Vec<(usize, usize)>,
    pub flags: Vec<(usize, ReplicateFlag)>,
    pub reference: PcaFit,
    pub seed: Option<u64>,
}

impl PseudoRealizationSet {
    pub fn len(&self) -> usize {
        self.replicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicates.is_empty()
    }
}

/// `Xhat + sqrt(np) (Xhat_without_ij - Xhat)`.
pub fn pseudo_value(reference: &DMatrix<f64>, leave_out: &DMatrix<f64>) -> DMatrix<f64> {
    let scale = ((reference.nrows() * reference.ncols()) as f64).sqrt();
    reference + (leave_out - reference) * scale
}

fn gaussian_matrix<R: Rng>(n: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn check_draws(draws: usize) -> Result<()> {
    if draws < 2 {
        return Err(Error::InvalidInput("need at least 2 draws".into()));
    }
    Ok(())
}

/// Draws from the linearized sampling distribution `N(Xhat, sigma^2 P)`.
pub fn asymptotic_draws(
    reference: &ReferenceModel,
    draws: usize,
    covariance: Covariance,
    truncate: bool,
    seed: SeedStream,
) -> Result<PseudoRealizationSet> {
    check_draws(draws)?;
    let fit = &reference.fit;
    let (n, p) = (fit.nrows(), fit.ncols());
    let sigma = reference.noise.sigma();
    let sd = projection_diagonal(fit).map(|h| h.max(0.0).sqrt());
    let stream = seed.child(TAG_ASYMPTOTIC, 0);
    let replicates = (0..draws)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream.child(TAG_ASYMPTOTIC, k as u64).rng();
            let z = gaussian_matrix(n, p, &mut rng);
            let dz = match covariance {
                Covariance::Full => apply_projection(fit, &z),
                Covariance::DiagonalOnly => {
                    DMatrix::from_fn(n, p, |i, j| sd[i + j * n] * z[(i, j)])
                }
            };
            let d = &fit.fitted + dz * sigma;
            if truncate {
                fit_pca(&d, fit.rank).map(|f| f.fitted)
            } else {
                Ok(d)
            }
        })
        .collect::<Result<_>>()?;
    Ok(PseudoRealizationSet {
        method: Method::Asymptotic,
        replicates,
        cells: Vec::new(),
        skipped: Vec::new(),
        flags: Vec::new(),
        reference: fit.clone(),
        seed: Some(seed.key()),
    })
}

/// Refits of `Xhat + sigma_hat * E` with fresh Gaussian `E`.
pub fn parametric_bootstrap(
    reference: &ReferenceModel,
    draws: usize,
    seed: SeedStream,
) -> Result<PseudoRealizationSet> {
    check_draws(draws)?;
    let fit = &reference.fit;
    let (n, p) = (fit.nrows(), fit.ncols());
    let sigma = reference.noise.sigma();
    let stream = seed.child(TAG_BOOTSTRAP, 0);
    let fits: Vec<PcaFit> = (0..draws)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream.child(TAG_BOOTSTRAP, b as u64).rng();
            let xb = &fit.fitted + gaussian_matrix(n, p, &mut rng) * sigma;
            fit_pca(&xb, fit.rank)
        })
        .collect::<Result<_>>()?;
    let flags = fits
        .iter()
        .enumerate()
        .filter(|(_, f)| f.degenerate)
        .map(|(b, _)| (b, ReplicateFlag::Degenerate))
        .collect();
    Ok(PseudoRealizationSet {
        method: Method::Bootstrap,
        replicates: fits.into_iter().map(|f| f.fitted).collect(),
        cells: Vec::new(),
        skipped: Vec::new(),
        flags,
        reference: fit.clone(),
        seed: Some(seed.key()),
    })
}

fn all_cells(n: usize, p: usize) -> Vec<(usize, usize)> {
    (0..p).flat_map(|j| (0..n).map(move |i| (i, j))).collect()
}

/// One EM-PCA refit per left-out cell, turned into pseudo-values.
pub fn cellwise_jackknife(
    reference: &ReferenceModel,
    em: &EmConfig,
    warm_start: bool,
) -> Result<PseudoRealizationSet> {
    let fit = &reference.fit;
    let (n, p) = (fit.nrows(), fit.ncols());
    let cells = all_cells(n, p);
    let cfg = if warm_start {
        em.clone().with_init(EmInit::Provided(fit.fitted.clone()))
    } else {
        em.clone()
    };
    let outcomes: Vec<(DMatrix<f64>, Option<ReplicateFlag>)> = cells
        .par_iter()
        .map(|&cell| {
            let masked = MaskedMatrix::with_missing(reference.data.clone(), &[cell]);
            let out = em_pca(&masked, fit.rank, &cfg)?;
            let flag = (!out.converged).then_some(ReplicateFlag::EmNotConverged {
                iterations: out.iterations,
            });
            Ok((pseudo_value(&fit.fitted, &out.fit.fitted), flag))
        })
        .collect::<Result<_>>()?;
    let mut replicates = Vec::with_capacity(outcomes.len());
    let mut flags = Vec::new();
    for (k, (rep, flag)) in outcomes.into_iter().enumerate() {
        replicates.push(rep);
        if let Some(f) = flag {
            flags.push((k, f));
        }
    }
    Ok(PseudoRealizationSet {
        method: Method::Jackknife,
        replicates,
        cells,
        skipped: Vec::new(),
        flags,
        reference: fit.clone(),
        seed: None,
    })
}

/// Leverage-based stand-in for the left-out cell value:
/// `x_ij - (x_ij - xhat_ij) / (1 - P_ij,ij)`. `None` where the leverage is
/// too close to one.
pub fn deletion_values(reference: &ReferenceModel) -> DMatrix<Option<f64>> {
    let fit = &reference.fit;
    let n = fit.nrows();
    let lev = projection_diagonal(fit);
    DMatrix::from_fn(n, fit.ncols(), |i, j| {
        let h = lev[i + j * n];
        (h < 1.0 - LEVERAGE_GUARD).then(|| {
            let x = reference.data[(i, j)];
            x - (x - fit.fitted[(i, j)]) / (1.0 - h)
        })
    })
}

/// Replaces each cell by its deletion value and refits on complete data.
pub fn approximate_jackknife(reference: &ReferenceModel) -> Result<PseudoRealizationSet> {
    let fit = &reference.fit;
    let (n, p) = (fit.nrows(), fit.ncols());
    let subst = deletion_values(reference);
    let mut cells = Vec::new();
    let mut skipped = Vec::new();
    for (i, j) in all_cells(n, p) {
        match subst[(i, j)] {
            Some(_) => cells.push((i, j)),
            None => skipped.push((i, j)),
        }
    }
    if cells.is_empty() {
        return Err(Error::AllCellsSkipped);
    }
    let fits: Vec<PcaFit> = cells
        .par_iter()
        .map(|&(i, j)| {
            let mut y = reference.data.clone();
            y[(i, j)] = subst[(i, j)].expect("usable cell");
            fit_pca(&y, fit.rank)
        })
        .collect::<Result<_>>()?;
    let flags = fits
        .iter()
        .enumerate()
        .filter(|(_, f)| f.degenerate)
        .map(|(k, _)| (k, ReplicateFlag::Degenerate))
        .collect();
    let replicates = fits
        .into_iter()
        .map(|f| pseudo_value(&fit.fitted, &f.fitted))
        .collect();
    Ok(PseudoRealizationSet {
        method: Method::ApproxJackknife,
        replicates,
        cells,
        skipped,
        flags,
        reference: fit.clone(),
        seed: None,
    })
}

/// Dispatches to one of the four methods.
pub fn pseudo_realizations(
    reference: &ReferenceModel,
    method: Method,
    options: &InferenceOptions,
    seed: SeedStream,
) -> Result<PseudoRealizationSet> {
    match method {
        Method::Asymptotic => asymptotic_draws(
            reference,
            options.asymptotic_draws,
            options.covariance,
            options.truncate_draws,
            seed,
        ),
        Method::Bootstrap => parametric_bootstrap(reference, options.bootstrap_draws, seed),
        Method::Jackknife => cellwise_jackknife(reference, &options.em, options.warm_start),
        Method::ApproxJackknife => approximate_jackknife(reference),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::center_columns;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        gaussian_matrix(n, p, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn noisy_low_rank(n: usize, p: usize, s: usize, sigma: f64, seed: u64) -> DMatrix<f64> {
        let signal = gaussian(n, s, seed) * gaussian(s, p, seed + 1) * 2.0;
        signal + gaussian(n, p, seed + 2) * sigma
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
        assert!("jack".parse::<Method>().is_err());
    }

    #[test]
    fn pseudo_value_formula() {
        let r = DMatrix::from_element(2, 2, 1.0);
        let l = DMatrix::from_element(2, 2, 1.5);
        assert!((pseudo_value(&r, &l) - DMatrix::from_element(2, 2, 2.0)).amax() < 1e-15);
        assert_eq!(pseudo_value(&r, &r), r);
    }

    #[test]
    fn asymptotic_mean_and_cell_variance() {
        let reference = ReferenceModel::new(noisy_low_rank(6, 4, 2, 0.3, 3), 2).unwrap();
        let k = 10_000;
        let set =
            asymptotic_draws(&reference, k, Covariance::Full, false, SeedStream::new(1)).unwrap();
        let lev = projection_diagonal(&reference.fit);
        let s2 = reference.noise.sigma2;
        let mut mean = DMatrix::zeros(6, 4);
        for d in &set.replicates {
            mean += d;
        }
        mean /= k as f64;
        let sd_mean = (s2 / k as f64).sqrt();
        assert!((&mean - &reference.fit.fitted).amax() < 5.0 * sd_mean);
        for j in 0..4 {
            for i in 0..6 {
                let var = set
                    .replicates
                    .iter()
                    .map(|d| (d[(i, j)] - mean[(i, j)]).powi(2))
                    .sum::<f64>()
                    / (k - 1) as f64;
                let expected = s2 * lev[i + j * 6];
                assert!(
                    (var / expected - 1.0).abs() < 0.1,
                    "cell ({i},{j}): {var} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn asymptotic_draws_are_tangent() {
        // D - Xhat lies in the range of P, so P leaves it unchanged
        let reference = ReferenceModel::new(noisy_low_rank(7, 5, 2, 0.5, 5), 2).unwrap();
        let set =
            asymptotic_draws(&reference, 5, Covariance::Full, false, SeedStream::new(2)).unwrap();
        for d in &set.replicates {
            let delta = d - &reference.fit.fitted;
            assert!((apply_projection(&reference.fit, &delta) - &delta).amax() < 1e-10);
        }
        let diag = asymptotic_draws(
            &reference,
            5,
            Covariance::DiagonalOnly,
            false,
            SeedStream::new(2),
        )
        .unwrap();
        assert_eq!(diag.len(), 5);
    }

    #[test]
    fn zero_noise_bootstrap_reproduces_reference() {
        let x = gaussian(6, 2, 8) * gaussian(2, 5, 9);
        let reference = ReferenceModel::new(x, 2).unwrap();
        assert!(reference.noise.sigma2 < 1e-20);
        let set = parametric_bootstrap(&reference, 20, SeedStream::new(3)).unwrap();
        for d in &set.replicates {
            assert!((d - &reference.fit.fitted).amax() < 1e-9);
        }
    }

    #[test]
    fn bootstrap_replicates_have_rank_s_and_are_seeded() {
        let reference = ReferenceModel::new(noisy_low_rank(8, 5, 2, 0.4, 11), 2).unwrap();
        let a = parametric_bootstrap(&reference, 10, SeedStream::new(4)).unwrap();
        let b = parametric_bootstrap(&reference, 10, SeedStream::new(4)).unwrap();
        let c = parametric_bootstrap(&reference, 10, SeedStream::new(5)).unwrap();
        assert_eq!(a.replicates, b.replicates);
        assert_ne!(a.replicates, c.replicates);
        for d in &a.replicates {
            let sv = center_columns(d).singular_values();
            let mut sv: Vec<f64> = sv.iter().copied().collect();
            sv.sort_by(|x, y| y.total_cmp(x));
            assert!(sv[2] <= 1e-9 * sv[0]);
        }
    }

    #[test]
    fn bootstrap_spread_grows_with_sigma() {
        let signal = noisy_low_rank(10, 15, 2, 0.0, 21);
        let noise = gaussian(10, 15, 22);
        let mut prev = 0.0;
        for sigma in [0.05, 0.2, 0.8] {
            let reference = ReferenceModel::new(&signal + &noise * sigma, 2).unwrap();
            let set = parametric_bootstrap(&reference, 200, SeedStream::new(6)).unwrap();
            let spread = set
                .replicates
                .iter()
                .map(|d| (d - &reference.fit.fitted).norm_squared())
                .sum::<f64>()
                / 200.0;
            assert!(spread > prev, "sigma {sigma}: {spread} <= {prev}");
            prev = spread;
        }
    }

    /// Leave-one-out rank-S fit by EM written against the raw SVD, sharing no
    /// code with `em_pca`.
    fn leave_out_oracle(x: &DMatrix<f64>, s: usize, cell: (usize, usize)) -> DMatrix<f64> {
        let (n, p) = x.shape();
        let mut y = x.clone();
        let mean = (0..n)
            .filter(|&i| i != cell.0)
            .map(|i| x[(i, cell.1)])
            .sum::<f64>()
            / (n - 1) as f64;
        y[cell] = mean;
        let mut fitted = y.clone();
        for _ in 0..20_000 {
            let means = DMatrix::from_fn(1, p, |_, j| y.column(j).mean());
            let centered = DMatrix::from_fn(n, p, |i, j| y[(i, j)] - means[(0, j)]);
            let svd = centered.clone().svd(true, true);
            let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
            order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
            let u = svd.u.as_ref().unwrap();
            let vt = svd.v_t.as_ref().unwrap();
            fitted = DMatrix::from_fn(n, p, |i, j| {
                means[(0, j)]
                    + order[..s]
                        .iter()
                        .map(|&k| u[(i, k)] * svd.singular_values[k] * vt[(k, j)])
                        .sum::<f64>()
            });
            let delta = (fitted[cell] - y[cell]).abs();
            y[cell] = fitted[cell];
            if delta < 1e-14 {
                break;
            }
        }
        fitted
    }

    #[test]
    fn jackknife_matches_leave_one_out_oracle() {
        let x = noisy_low_rank(5, 4, 1, 0.3, 31);
        let reference = ReferenceModel::new(x.clone(), 1).unwrap();
        let em = EmConfig {
            tol: 1e-12,
            ..EmConfig::default()
        };
        let set = cellwise_jackknife(&reference, &em, true).unwrap();
        assert_eq!(set.len(), 20);
        assert!(set.flags.is_empty());
        for (k, &cell) in set.cells.iter().enumerate() {
            let oracle = pseudo_value(&reference.fit.fitted, &leave_out_oracle(&x, 1, cell));
            assert!((&set.replicates[k] - oracle).amax() < 1e-6, "cell {cell:?}");
        }
    }

    #[test]
    fn warm_and_cold_jackknife_agree() {
        let reference = ReferenceModel::new(noisy_low_rank(6, 4, 2, 0.2, 41), 2).unwrap();
        let em = EmConfig {
            tol: 1e-11,
            ..EmConfig::default()
        };
        let warm = cellwise_jackknife(&reference, &em, true).unwrap();
        let cold = cellwise_jackknife(&reference, &em, false).unwrap();
        // slow cells (leverage near one) hit max_iter and must be flagged
        let unconverged: Vec<usize> = warm.flags.iter().chain(&cold.flags).map(|f| f.0).collect();
        let mut compared = 0;
        for (k, (a, b)) in warm.replicates.iter().zip(&cold.replicates).enumerate() {
            if !unconverged.contains(&k) {
                assert!((a - b).amax() < 1e-6, "cell {k}: {}", (a - b).amax());
                compared += 1;
            }
        }
        assert!(compared >= 20);
    }

    #[test]
    fn full_rank_approx_jackknife_skips_everything() {
        let reference = ReferenceModel::new(gaussian(4, 3, 1), 3).unwrap();
        assert!(matches!(
            approximate_jackknife(&reference),
            Err(Error::AllCellsSkipped)
        ));
    }

    #[test]
    fn approx_jackknife_counts_and_fidelity() {
        let x = noisy_low_rank(10, 6, 2, 0.1, 51);
        let reference = ReferenceModel::new(x.clone(), 2).unwrap();
        let approx = approximate_jackknife(&reference).unwrap();
        assert_eq!(approx.len() + approx.skipped.len(), 60);
        let em = EmConfig {
            tol: 1e-12,
            ..EmConfig::default()
        };
        let exact = cellwise_jackknife(&reference, &em, true).unwrap();
        let mut rel = Vec::new();
        for (k, cell) in approx.cells.iter().enumerate() {
            let e = exact.cells.iter().position(|c| c == cell).unwrap();
            let da = &approx.replicates[k] - &reference.fit.fitted;
            let de = &exact.replicates[e] - &reference.fit.fitted;
            rel.push((da - &de).norm() / de.norm());
        }
        rel.sort_by(f64::total_cmp);
        assert!(
            rel[rel.len() / 2] < 0.1,
            "median relative gap {}",
            rel[rel.len() / 2]
        );
    }

    #[test]
    fn deletion_value_matches_explicit_form() {
        let reference = ReferenceModel::new(noisy_low_rank(6, 4, 1, 0.5, 61), 1).unwrap();
        let lev = projection_diagonal(&reference.fit);
        let d = deletion_values(&reference);
        let (x, f) = (reference.data[(2, 3)], reference.fit.fitted[(2, 3)]);
        let h = lev[2 + 3 * 6];
        assert!((d[(2, 3)].unwrap() - (x - (x - f) / (1.0 - h))).abs() < 1e-12);
    }

    #[test]
    fn exact_low_rank_data_gives_trivial_jackknife() {
        let x = noisy_low_rank(7, 5, 2, 0.0, 71);
        let reference = ReferenceModel::new(x.clone(), 2).unwrap();
        let d = deletion_values(&reference);
        for ((i, j), v) in d.iter().enumerate().map(|(k, v)| ((k % 7, k / 7), v)) {
            if let Some(v) = v {
                assert!((v - x[(i, j)]).abs() < 1e-8 * (1.0 + x.amax()));
            }
        }
        let em = EmConfig {
            tol: 1e-13,
            ..EmConfig::default()
        };
        let exact = cellwise_jackknife(&reference, &em, true).unwrap();
        let scale = reference.fit.fitted.amax();
        for r in &exact.replicates {
            assert!((r - &reference.fit.fitted).amax() < 1e-5 * scale);
        }
    }
}
