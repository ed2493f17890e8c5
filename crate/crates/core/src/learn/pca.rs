use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Principal axes of the training covariance, truncated at a variance fraction.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `d x m`, orthonormal columns, largest variance first.
    pub components: DMatrix<f64>,
    pub explained_fraction: f64,
    /// All `d` covariance eigenvalues, descending, negatives clamped to zero.
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }
}

/// Population covariance of the rows about their column means.
pub(crate) fn covariance(rows: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = rows.nrows() as f64;
    let mean: Vec<f64> = rows.column_iter().map(|c| c.sum() / n).collect();
    let mut centered = rows.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let cov = centered.transpose() * &centered / n;
    (mean, cov)
}

/// Smallest `m` whose leading eigenvalues reach `target` of the total.
pub fn retained_count(eigenvalues: &[f64], target: f64) -> usize {
    let total: f64 = eigenvalues.iter().sum();
    let mut acc = 0.0;
    for (k, v) in eigenvalues.iter().enumerate() {
        acc += v;
        if acc >= target * total {
            return k + 1;
        }
    }
    eigenvalues.len()
}

pub fn fit_pca(scaled_train: &DMatrix<f64>, target_fraction: f64) -> Result<PcaModel> {
    if scaled_train.nrows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 2 rows, got {}",
            scaled_train.nrows()
        )));
    }
    if !(target_fraction > 0.0 && target_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target fraction must lie in (0, 1], got {target_fraction}"
        )));
    }
    let (mean, cov) = covariance(scaled_train);
    let d = cov.nrows();
    let eig = SymmetricEigen::try_new(cov, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::EigenNoConvergence(format!("{d}x{d} PCA covariance")))?;

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("training covariance has zero total variance".into()));
    }
    let m = retained_count(&eigenvalues, target_fraction);

    let mut components = DMatrix::zeros(d, m);
    for (out, &k) in order.iter().take(m).enumerate() {
        let v = eig.eigenvectors.column(k);
        // sign convention: largest-magnitude entry positive (first one on ties)
        let pivot = (0..d).fold(0, |best, i| if v[i].abs() > v[best].abs() { i } else { best });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        components.set_column(out, &(v * sign));
    }
    Ok(PcaModel {
        mean,
        explained_fraction: eigenvalues[..m].iter().sum::<f64>() / total,
        components,
        eigenvalues,
    })
}

pub fn project(model: &PcaModel, rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if rows.ncols() != model.mean.len() {
        return Err(Error::DimensionMismatch {
            expected: model.mean.len(),
            got: rows.ncols(),
        });
    }
    let mut centered = rows.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-model.mean[j]);
    }
    Ok(centered * &model.components)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn line_data_is_rank_one() {
        let x = DMatrix::from_fn(10, 2, |r, c| (r as f64 - 4.5) * if c == 0 { 1.0 } else { 2.0 });
        let m = fit_pca(&x, 0.9).unwrap();
        assert_eq!(m.n_components(), 1);
        assert!((m.explained_fraction - 1.0).abs() < 1e-12);
        let c = m.components.column(0);
        assert!((c[1] / c[0] - 2.0).abs() < 1e-9 && c[1] > 0.0);
    }

    /// Eigenvalues of a symmetric 3x3 by the trigonometric closed form.
    fn sym3_eigenvalues(a: &DMatrix<f64>) -> [f64; 3] {
        let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        let q = a.trace() / 3.0;
        let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = (a - DMatrix::identity(3, 3) * q) / p;
        let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        [e1, 3.0 * q - e1 - e3, e3]
    }

    #[test]
    fn isotropic_cloud_keeps_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = DMatrix::from_fn(400, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let m = fit_pca(&x, 0.9).unwrap();
        let (_, cov) = covariance(&x);
        let oracle = sym3_eigenvalues(&cov);
        for (a, b) in m.eigenvalues.iter().zip(oracle) {
            assert!((a - b).abs() < 1e-9);
        }
        // each axis explains roughly a third, so two axes fall short of 0.9
        assert!((oracle[0] + oracle[1]) / oracle.iter().sum::<f64>() < 0.9);
        assert_eq!(m.n_components(), 3);
    }

    #[test]
    fn orthonormal_and_minimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..20 {
            let d = rng.random_range(2..12);
            let mix = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = DMatrix::from_fn(60, d, |_, _| rng.sample::<f64, _>(StandardNormal)) * mix;
            let m = fit_pca(&x, 0.9).unwrap();
            let gram = m.components.transpose() * &m.components;
            assert!((gram - DMatrix::identity(m.n_components(), m.n_components())).amax() < 1e-8);
            let total: f64 = m.eigenvalues.iter().sum();
            let k = m.n_components();
            assert!(m.eigenvalues[..k].iter().sum::<f64>() >= 0.9 * total);
            assert!(m.eigenvalues[..k - 1].iter().sum::<f64>() < 0.9 * total);
        }
    }

    #[test]
    fn reconstruction_error_shrinks_with_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mix = DMatrix::from_fn(8, 8, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = DMatrix::from_fn(100, 8, |_, _| rng.sample::<f64, _>(StandardNormal)) * mix;
        let mut last = f64::INFINITY;
        for target in [0.3, 0.5, 0.7, 0.9, 0.99, 1.0] {
            let m = fit_pca(&x, target).unwrap();
            let z = project(&m, &x).unwrap();
            let mut recon = z * m.components.transpose();
            for (j, mut col) in recon.column_iter_mut().enumerate() {
                col.add_scalar_mut(m.mean[j]);
            }
            let err = (&x - recon).norm();
            assert!(err <= last + 1e-9);
            last = err;
        }
        assert!(last < 1e-8);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit_pca(&DMatrix::from_element(5, 3, 2.0), 0.9).is_err());
        assert!(fit_pca(&DMatrix::zeros(1, 3), 0.9).is_err());
        let x = DMatrix::from_fn(4, 2, |r, c| (r * (c + 1)) as f64);
        assert!(fit_pca(&x, 0.0).is_err());
        let m = fit_pca(&x, 0.9).unwrap();
        assert!(project(&m, &DMatrix::zeros(1, 3)).is_err());
    }
}
