//! Small dense helpers shared by the fitting, alignment and ellipsoid code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

pub fn center_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(x);
    subtract_row(x, &means)
}

/// `x - 1 * row'`, i.e. subtracts `row[j]` from every entry of column `j`.
pub fn subtract_row(x: &DMatrix<f64>, row: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-row[j]);
    }
    out
}

pub fn add_row(x: &DMatrix<f64>, row: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(row[j]);
    }
    out
}

pub fn frobenius2(x: &DMatrix<f64>) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Thin SVD with singular values sorted in non-increasing order.
///
/// Returns `(U, s, V)` with `U: n x r`, `V: p x r`, `r = min(n, p)`.
/// nalgebra's implicit-shift QR can return factors that do not reproduce
/// exactly rank-deficient input, so the decomposition is done by faer.
pub fn sorted_svd(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (n, p) = x.shape();
    let m = faer::Mat::<f64>::from_fn(n, p, |i, j| x[(i, j)]);
    let svd = m.thin_svd().expect("svd did not converge");
    let (u, v, s) = (svd.U(), svd.V(), svd.S().column_vector());
    let r = n.min(p);
    (
        DMatrix::from_fn(n, r, |i, k| u[(i, k)]),
        DVector::from_fn(r, |k, _| s[k]),
        DMatrix::from_fn(p, r, |j, k| v[(j, k)]),
    )
}

/// Symmetric square root of a positive semi-definite matrix; negative
/// eigenvalues from roundoff are clamped to zero.
pub fn sym_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Column-stacked vectorization.
pub fn vec_of(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

pub fn unvec(v: &DVector<f64>, nrows: usize, ncols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(nrows, ncols, v.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_svd_reconstructs() {
        let x = DMatrix::from_fn(5, 3, |i, j| {
            ((i * 7 + j * 3) % 5) as f64 - 1.5 + (i as f64) * 0.1
        });
        let (u, s, v) = sorted_svd(&x);
        let back = &u * DMatrix::from_diagonal(&s) * v.transpose();
        assert!((back - &x).abs().max() < 1e-12);
        assert!(s.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn sorted_svd_reconstructs_rank_deficient_input() {
        use rand::{Rng, SeedableRng};
        for seed in 0..300u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (n, p, s) = (
                3 + (seed % 20) as usize,
                2 + (seed % 13) as usize,
                1 + (seed % 3) as usize,
            );
            let mut g = |r, c| {
                DMatrix::from_fn(r, c, |_, _| {
                    rng.sample::<f64, _>(rand_distr::StandardNormal)
                })
            };
            let x = center_columns(&(g(n, s) * g(s, p)));
            let (u, sv, v) = sorted_svd(&x);
            let back = &u * DMatrix::from_diagonal(&sv) * v.transpose();
            assert!((back - &x).amax() < 1e-10, "seed {seed}");
        }
    }

    #[test]
    fn vec_is_column_major() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(vec_of(&x).as_slice(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(unvec(&vec_of(&x), 2, 2), x);
    }

    #[test]
    fn sym_sqrt_squares_back() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = sym_sqrt(&a);
        assert!((&r * &r - a).abs().max() < 1e-12);
    }
}
