// Exact cell-wise jackknife against its leverage approximation on a small
// noisy table.

use fepca::{approximate_jackknife, cellwise_jackknife, EmConfig, ReferenceModel};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn run_example() -> fepca::Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut g = |r, c| DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = g(10, 2) * g(2, 8) + g(10, 8) * 0.25;
    let reference = ReferenceModel::new(x, 2)?;
    let exact = cellwise_jackknife(&reference, &EmConfig::default(), true)?;
    let approx = approximate_jackknife(&reference)?;

    let mut rel: Vec<f64> = approx
        .cells
        .iter()
        .enumerate()
        .filter_map(|(k, cell)| {
            let e = exact.cells.iter().position(|c| c == cell)?;
            let da = &approx.replicates[k] - &reference.fit.fitted;
            let de = &exact.replicates[e] - &reference.fit.fitted;
            Some((da - &de).norm() / de.norm())
        })
        .collect();
    rel.sort_by(f64::total_cmp);
    Ok(format!(
        "{} exact and {} approximate pseudo-values ({} cells skipped, {} flagged)\nrelative gap median {:.3}, max {:.3}\n",
        exact.len(),
        approx.len(),
        approx.skipped.len(),
        exact.flags.len(),
        rel[rel.len() / 2],
        rel[rel.len() - 1]
    ))
}

fn main() -> fepca::Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
