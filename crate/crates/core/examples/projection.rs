// The fitted values are a linear projection of the data. Applying the
// factored projector reproduces the fit; its diagonal gives cell leverages.

use fepca::{apply_projection, fit_pca, projection_diagonal, projection_operator};
use nalgebra::DMatrix;

fn run_example() -> fepca::Result<String> {
    let x = DMatrix::from_fn(6, 4, |i, j| {
        ((3 * i + 5 * j) % 7) as f64 + 0.25 * (i * j) as f64
    });
    let fit = fit_pca(&x, 2)?;
    let gap = (apply_projection(&fit, &x) - &fit.fitted).amax();
    let p = projection_operator(&fit)?;
    let idem = (&p.matrix * &p.matrix - &p.matrix).amax();
    let lev = projection_diagonal(&fit);
    let (n, q, s) = (6.0, 4.0, 2.0);
    Ok(format!(
        "|P x - fit| = {gap:.1e}\n|P^2 - P| = {idem:.1e}\ntrace {:.6} (expected {})\nleverage range {:.3}..{:.3}\n",
        lev.sum(),
        q + q * s + (n - 1.0) * s - s * s,
        lev.min(),
        lev.max()
    ))
}

fn main() -> fepca::Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
