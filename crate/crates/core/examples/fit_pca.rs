// Rank-4 fit of the scaled decathlon events: spectrum, noise estimate,
// curvature index and the cells whose corrected residual is largest.

use fepca::{
    corrected_residuals, curvature_index, estimate_noise_variance, fit_pca, preprocess,
    projection_diagonal, read_csv, CsvOptions,
};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/decathlon.csv");

fn run_example() -> fepca::Result<String> {
    let data = read_csv(DATA, &CsvOptions::default())?;
    let (x, _) = preprocess(&data, true)?;
    let fit = fit_pca(&x, 4)?;
    let noise = estimate_noise_variance(&x, &fit)?;
    let k = curvature_index(&fit)?;

    let mut out = format!("{} athletes x {} events\n", data.nrows(), data.ncols());
    for (s, l) in fit.eigenvalues().iter().enumerate() {
        out += &format!(
            "dim {}  eigenvalue {l:7.3}  {:5.1}%\n",
            s + 1,
            100.0 * fit.explained_ratio()[s]
        );
    }
    out += &format!(
        "sigma2 {:.4} on {} df, K_int {k:.4}, sigma*K_int {:.4}\n",
        noise.sigma2,
        noise.df,
        k * noise.sigma()
    );

    let lev = projection_diagonal(&fit);
    let r = corrected_residuals(&x, &fit, &lev);
    let mut cells: Vec<(f64, usize, usize)> = (0..x.ncols())
        .flat_map(|j| (0..x.nrows()).map(move |i| (i, j)))
        .map(|(i, j)| (r.values[(i, j)].abs(), i, j))
        .collect();
    cells.sort_by(|a, b| b.0.total_cmp(&a.0));
    for &(v, i, j) in cells.iter().take(3) {
        out += &format!(
            "{:>12} {:>14}  {v:.3}\n",
            data.row_labels[i], data.col_labels[j]
        );
    }
    Ok(out)
}

fn main() -> fepca::Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
