//! Monte-Carlo coverage of the confidence ellipsoids.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    aligned_coordinates, contains, fit_ellipsoid, point_clouds, reference_frame, Alignment, Side,
};
use crate::inference::{pseudo_realizations, InferenceOptions, Method, ReferenceModel};
use crate::linalg::{center_columns, frobenius2, sorted_svd, subtract_row};
use crate::pca::fit_pca;
use crate::rng::{SeedStream, TAG_NOISE, TAG_REPLICATE, TAG_STRUCTURE};

/// Columns carried by the first of two generated components.
pub fn split_columns(p: usize, ratio: f64) -> Result<(usize, usize)> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::InvalidInput(format!(
            "eigenvalue ratio {ratio} must be positive"
        )));
    }
    let p1 = (p as f64 * ratio / (ratio + 1.0)).round() as usize;
    if p1 == 0 || p1 >= p {
        return Err(Error::InvalidInput(format!(
            "p = {p} with ratio {ratio} leaves an empty block"
        )));
    }
    Ok((p1, p - p1))
}

/// Two orthonormal directions, the first repeated over `p1` columns and the
/// second over `p - p1`, so the Gram matrix has eigenvalues `p1` and `p - p1`.
pub fn generate_structure<R: Rng>(
    n: usize,
    p: usize,
    ratio: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if n < 3 {
        return Err(Error::InvalidInput("need n >= 3".into()));
    }
    let (p1, _) = split_columns(p, ratio)?;
    let z = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let (u, _, _) = sorted_svd(&z);
    Ok(DMatrix::from_fn(n, p, |i, j| {
        if j < p1 {
            u[(i, 0)]
        } else {
            u[(i, 1)]
        }
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseLevel {
    Sigma(f64),
    /// `sigma = ||signal||_F / (snr * sqrt(np))`.
    Snr(f64),
}

impl NoiseLevel {
    pub fn sigma(self, signal: &DMatrix<f64>) -> Result<f64> {
        let sigma = match self {
            NoiseLevel::Sigma(s) => s,
            NoiseLevel::Snr(snr) => {
                if !(snr > 0.0) {
                    return Err(Error::InvalidInput(format!("SNR {snr} must be positive")));
                }
                frobenius2(signal).sqrt() / (snr * ((signal.len()) as f64).sqrt())
            }
        };
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "noise level {sigma} must be >= 0"
            )));
        }
        Ok(sigma)
    }

    pub fn label(self) -> String {
        match self {
            NoiseLevel::Sigma(s) => format!("sigma={s}"),
            NoiseLevel::Snr(s) => format!("snr={s}"),
        }
    }
}

pub fn add_noise<R: Rng>(signal: &DMatrix<f64>, sigma: f64, rng: &mut R) -> DMatrix<f64> {
    signal.map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
}

/// Rank-`rank` fitted values of a data set, used as a fixed true signal.
pub fn signal_from_dataset(x: &DMatrix<f64>, rank: usize) -> Result<DMatrix<f64>> {
    Ok(fit_pca(x, rank)?.fitted)
}

#[derive(Clone, Debug, PartialEq)]
pub enum SignalSpec {
    /// A fresh two-component structure per replicate.
    Generated {
        n: usize,
        p: usize,
        ratio: f64,
    },
    Fixed(DMatrix<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub signal: SignalSpec,
    pub rank: usize,
    pub noise: Vec<NoiseLevel>,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub level: f64,
    pub seed: u64,
    pub inference: InferenceOptions,
    pub alignment: Alignment,
    pub truth: TruthMap,
}

/// How the true configuration is placed on the reference map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthMap {
    /// Center with the reference column means and project onto `V`.
    #[default]
    Projection,
    /// Center, rotate onto the reference configuration, then project.
    Procrustes,
}

impl SimulationConfig {
    pub fn dims(&self) -> Result<(usize, usize)> {
        match &self.signal {
            SignalSpec::Generated { n, p, .. } => Ok((*n, *p)),
            SignalSpec::Fixed(m) => Ok(m.shape()),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.methods.is_empty() || self.noise.is_empty() {
            return Err(Error::InvalidInput(
                "simulation needs replicates, methods and noise levels".into(),
            ));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidInput(format!(
                "level {} not in (0, 1)",
                self.level
            )));
        }
        let (n, p) = self.dims()?;
        if self.rank == 0 || self.rank >= n.min(p) {
            return Err(Error::RankOutOfRange {
                rank: self.rank,
                max: n.min(p).saturating_sub(1),
            });
        }
        if let SignalSpec::Generated { p, ratio, .. } = self.signal {
            split_columns(p, ratio)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub condition: String,
    pub method: Method,
    /// Points inside their ellipsoid, summed over replicates.
    pub inside: usize,
    pub total: usize,
    pub coverage: f64,
    pub std_error: f64,
    /// Inside-count of each replicate (`None` when the method failed on it).
    pub per_replicate: Vec<Option<usize>>,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub level: f64,
    pub replicates: usize,
    pub points: usize,
    pub conditions: Vec<String>,
    pub methods: Vec<Method>,
    pub cells: Vec<CoverageCell>,
}

impl CoverageTable {
    pub fn get(&self, condition: &str, method: Method) -> Option<&CoverageCell> {
        self.cells
            .iter()
            .find(|c| c.condition == condition && c.method == method)
    }
}

/// Outcome of one simulated data set: per method, inside-count or failure.
type ReplicateResult = Vec<std::result::Result<usize, String>>;

fn one_replicate(
    cfg: &SimulationConfig,
    noise: NoiseLevel,
    stream: SeedStream,
) -> Result<ReplicateResult> {
    let signal = match &cfg.signal {
        SignalSpec::Generated { n, p, ratio } => {
            generate_structure(*n, *p, *ratio, &mut stream.child(TAG_STRUCTURE, 0).rng())?
        }
        SignalSpec::Fixed(m) => m.clone(),
    };
    let sigma = noise.sigma(&signal)?;
    let x = add_noise(&signal, sigma, &mut stream.child(TAG_NOISE, 0).rng());
    let reference = ReferenceModel::new(x, cfg.rank)?;
    let dims: Vec<usize> = (0..cfg.rank).collect();

    let (centered_ref, axes) = reference_frame(&reference.fit, Side::Rows);
    let truth = match cfg.truth {
        TruthMap::Projection => subtract_row(&signal, &reference.fit.preprocess.col_means) * &axes,
        TruthMap::Procrustes => {
            let ref_coords = &centered_ref * &axes;
            aligned_coordinates(
                &ref_coords,
                &axes,
                &center_columns(&signal),
                Alignment::Procrustes,
            )
        }
    };

    Ok(cfg
        .methods
        .iter()
        .map(|&method| {
            let set = pseudo_realizations(&reference, method, &cfg.inference, stream)
                .map_err(|e| e.to_string())?;
            let clouds =
                point_clouds(&set, Side::Rows, &dims, cfg.alignment).map_err(|e| e.to_string())?;
            let mut inside = 0;
            for i in 0..clouds.npoints() {
                let e = fit_ellipsoid(&clouds.cloud(i), cfg.level).map_err(|e| e.to_string())?;
                let t = DVector::from_iterator(cfg.rank, truth.row(i).iter().copied());
                inside += contains(&e, &t).map_err(|e| e.to_string())? as usize;
            }
            Ok(inside)
        })
        .collect())
}

/// Runs every noise level and method over `cfg.replicates` simulated data
/// sets. Results depend only on the seed, not on the thread count.
pub fn run_coverage_experiment(cfg: &SimulationConfig) -> Result<CoverageTable> {
    cfg.validate()?;
    let (n, _) = cfg.dims()?;
    let root = SeedStream::new(cfg.seed);
    let mut cells = Vec::new();
    let mut conditions = Vec::new();
    for (c, &noise) in cfg.noise.iter().enumerate() {
        let condition = noise.label();
        let cond_stream = root.child(TAG_REPLICATE, c as u64);
        let results: Vec<ReplicateResult> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| one_replicate(cfg, noise, cond_stream.child(TAG_REPLICATE, r as u64)))
            .collect::<Result<_>>()?;
        for (m, &method) in cfg.methods.iter().enumerate() {
            let per_replicate: Vec<Option<usize>> = results
                .iter()
                .map(|r| r[m].as_ref().ok().copied())
                .collect();
            let failures: Vec<String> = results
                .iter()
                .enumerate()
                .filter_map(|(k, r)| r[m].as_ref().err().map(|e| format!("replicate {k}: {e}")))
                .collect();
            let used = per_replicate.iter().flatten().count();
            let inside: usize = per_replicate.iter().flatten().sum();
            let total = used * n;
            let coverage = if total > 0 {
                inside as f64 / total as f64
            } else {
                f64::NAN
            };
            let std_error = if total > 0 {
                (coverage * (1.0 - coverage) / total as f64).sqrt()
            } else {
                f64::NAN
            };
            cells.push(CoverageCell {
                condition: condition.clone(),
                method,
                inside,
                total,
                coverage,
                std_error,
                per_replicate,
                failures,
            });
        }
        conditions.push(condition);
    }
    Ok(CoverageTable {
        level: cfg.level,
        replicates: cfg.replicates,
        points: n,
        conditions,
        methods: cfg.methods.clone(),
        cells,
    })
}
