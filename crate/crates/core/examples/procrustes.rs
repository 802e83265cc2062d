// Recover a planted rotation, then compare projected and rotated clouds for
// one bootstrap set.

use fepca::{
    fit_ellipsoid, parametric_bootstrap, point_clouds, procrustes_rotation, Alignment,
    ReferenceModel, SeedStream, Side,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn run_example() -> fepca::Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut g = |r, c| DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let a = g(12, 3);
    let q = g(3, 3).qr().q();
    let r = procrustes_rotation(&a, &(&a * q.transpose()))?;
    let mut out = format!("planted rotation error {:.1e}\n", (&r.matrix - &q).amax());

    let x = g(12, 2) * g(2, 30) + g(12, 30) * 0.5;
    let reference = ReferenceModel::new(x, 2)?;
    let set = parametric_bootstrap(&reference, 300, SeedStream::new(1))?;
    for alignment in [Alignment::None, Alignment::Procrustes] {
        let clouds = point_clouds(&set, Side::Rows, &[0, 1], alignment)?;
        let area: f64 = (0..clouds.npoints())
            .map(|i| fit_ellipsoid(&clouds.cloud(i), 0.95).map(|e| e.cov.determinant().sqrt()))
            .sum::<fepca::Result<f64>>()?;
        out += &format!(
            "{alignment:?}: mean ellipse area {:.4}\n",
            std::f64::consts::PI * area / 12.0
        );
    }
    Ok(out)
}

fn main() -> fepca::Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
