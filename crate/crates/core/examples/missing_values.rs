// EM-PCA with holes: impute three cells of an exact rank-2 table and a
// noisy one, and show the loss trace.

use fepca::{em_pca, EmConfig, MaskedMatrix};
use nalgebra::DMatrix;

fn run_example() -> fepca::Result<String> {
    let a = DMatrix::from_fn(8, 2, |i, k| ((i + 1) as f64).powi(k as i32 + 1).sin());
    let b = DMatrix::from_fn(2, 5, |k, j| ((k + 2 * j) as f64).cos() * 3.0);
    let truth = a * b;
    let holes = [(0, 1), (3, 4), (6, 0)];
    let masked = MaskedMatrix::with_missing(truth.clone(), &holes);
    masked.validate(2)?;
    let em = em_pca(&masked, 2, &EmConfig::default())?;

    let mut out = format!(
        "converged {} after {} iterations\n",
        em.converged, em.iterations
    );
    for &(i, j) in &holes {
        out += &format!(
            "cell ({i},{j}) truth {:8.5} imputed {:8.5}\n",
            truth[(i, j)],
            em.completed[(i, j)]
        );
    }
    let first = em.losses.first().copied().unwrap_or(0.0);
    let last = em.losses.last().copied().unwrap_or(0.0);
    out += &format!("observed-cell loss {first:.3e} -> {last:.3e}\n");
    Ok(out)
}

fn main() -> fepca::Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
