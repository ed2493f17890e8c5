use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::learn::pca::covariance;

/// Relative ridge added to every covariance.
pub const RIDGE_FACTOR: f64 = 1e-6;
/// Relative ridge used when a covariance has more dimensions than degrees of freedom.
pub const RANK_DEFICIENT_RIDGE_FACTOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CovarianceMode {
    /// One covariance of all training rows about the global mean.
    #[default]
    PooledTotal,
    PerClass,
}

impl CovarianceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CovarianceMode::PooledTotal => "pooled_total",
            CovarianceMode::PerClass => "per_class",
        }
    }
}

impl fmt::Display for CovarianceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CovarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled_total" => Ok(CovarianceMode::PooledTotal),
            "per_class" => Ok(CovarianceMode::PerClass),
            other => Err(Error::InvalidArgument(format!("unknown covariance mode `{other}`"))),
        }
    }
}

/// Class-conditional Gaussians scoring `log p(x | fail) - log p(x | success)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianLlrModel {
    pub mode: CovarianceMode,
    pub mean_fail: Vec<f64>,
    pub mean_succ: Vec<f64>,
    /// Lower Cholesky factors of the ridged covariances; identical in pooled mode.
    pub chol_fail: DMatrix<f64>,
    pub chol_succ: DMatrix<f64>,
    pub ridge: f64,
}

fn ridged_cholesky(mut cov: DMatrix<f64>, dof: usize) -> Result<(DMatrix<f64>, f64)> {
    let d = cov.nrows();
    let mean_diag = cov.trace() / d as f64;
    let factor = if d > dof { RANK_DEFICIENT_RIDGE_FACTOR } else { RIDGE_FACTOR };
    let ridge = factor * if mean_diag > 0.0 { mean_diag } else { 1.0 };
    for i in 0..d {
        cov[(i, i)] += ridge;
    }
    let chol = Cholesky::new(cov).ok_or(Error::NotPositiveDefinite { ridge })?;
    Ok((chol.l(), ridge))
}

fn class_rows(x: &DMatrix<f64>, labels_fail: &[bool], fail: bool) -> DMatrix<f64> {
    let idx: Vec<usize> = (0..x.nrows()).filter(|&r| labels_fail[r] == fail).collect();
    x.select_rows(&idx)
}

fn column_means(x: &DMatrix<f64>) -> Vec<f64> {
    x.column_iter().map(|c| c.sum() / x.nrows() as f64).collect()
}

pub fn fit_gaussian_llr(
    projected_train: &DMatrix<f64>,
    labels_fail: &[bool],
    mode: CovarianceMode,
) -> Result<GaussianLlrModel> {
    if labels_fail.len() != projected_train.nrows() {
        return Err(Error::DimensionMismatch {
            expected: projected_train.nrows(),
            got: labels_fail.len(),
        });
    }
    let fail = class_rows(projected_train, labels_fail, true);
    let succ = class_rows(projected_train, labels_fail, false);
    if fail.nrows() < 2 || succ.nrows() < 2 {
        return Err(Error::SingleClass(format!(
            "Gaussian fit needs at least 2 rows per class, got {} failure / {} success",
            fail.nrows(),
            succ.nrows()
        )));
    }
    let mean_fail = column_means(&fail);
    let mean_succ = column_means(&succ);
    let (chol_fail, chol_succ, ridge) = match mode {
        CovarianceMode::PooledTotal => {
            let (_, cov) = covariance(projected_train);
            let (l, ridge) = ridged_cholesky(cov, projected_train.nrows() - 1)?;
            (l.clone(), l, ridge)
        }
        CovarianceMode::PerClass => {
            let (lf, rf) = ridged_cholesky(covariance(&fail).1, fail.nrows() - 1)?;
            let (ls, rs) = ridged_cholesky(covariance(&succ).1, succ.nrows() - 1)?;
            (lf, ls, rf.max(rs))
        }
    };
    Ok(GaussianLlrModel {
        mode,
        mean_fail,
        mean_succ,
        chol_fail,
        chol_succ,
        ridge,
    })
}

/// `log N(x; mean, L L^T)`.
fn log_density(x: &[f64], mean: &[f64], chol: &DMatrix<f64>) -> f64 {
    let d = mean.len();
    let diff = DVector::from_iterator(d, x.iter().zip(mean).map(|(a, b)| a - b));
    let z = chol
        .solve_lower_triangular(&diff)
        .expect("Cholesky factor has a positive diagonal");
    let log_det: f64 = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (z.norm_squared() + log_det + d as f64 * (2.0 * std::f64::consts::PI).ln())
}

impl GaussianLlrModel {
    pub fn dim(&self) -> usize {
        self.mean_fail.len()
    }

    pub fn covariance_fail(&self) -> DMatrix<f64> {
        &self.chol_fail * self.chol_fail.transpose()
    }

    pub fn covariance_succ(&self) -> DMatrix<f64> {
        &self.chol_succ * self.chol_succ.transpose()
    }
}

pub fn score_llr(model: &GaussianLlrModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x.len(),
        });
    }
    Ok(log_density(x, &model.mean_fail, &model.chol_fail) - log_density(x, &model.mean_succ, &model.chol_succ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn one_d_model() -> GaussianLlrModel {
        // fail rows at +1, success rows at -1: total variance about the global mean is 1
        let x = DMatrix::from_row_slice(4, 1, &[1.0, 1.0, -1.0, -1.0]);
        fit_gaussian_llr(&x, &[true, true, false, false], CovarianceMode::PooledTotal).unwrap()
    }

    #[test]
    fn one_d_closed_form() {
        let m = one_d_model();
        assert_eq!(m.mean_fail, vec![1.0]);
        assert_eq!(m.mean_succ, vec![-1.0]);
        let var = 1.0 + RIDGE_FACTOR;
        assert!((m.covariance_fail()[(0, 0)] - var).abs() < 1e-12);
        // (x + 1)^2 / 2 - (x - 1)^2 / 2 at x = 1, divided by the variance
        let oracle = |x: f64| ((x + 1.0).powi(2) - (x - 1.0).powi(2)) / (2.0 * var);
        assert!((score_llr(&m, &[1.0]).unwrap() - oracle(1.0)).abs() < 1e-12);
        assert!((score_llr(&m, &[1.0]).unwrap() - 2.0).abs() < 1e-5);
        assert!(score_llr(&m, &[0.0]).unwrap().abs() < 1e-12);
        assert!(matches!(score_llr(&m, &[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn identical_rows_give_between_class_scatter() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 1.0, 2.0, -1.0, 0.0, -1.0, 0.0]);
        let m = fit_gaussian_llr(&x, &[true, true, false, false], CovarianceMode::PooledTotal).unwrap();
        assert_eq!(m.mean_fail, vec![1.0, 2.0]);
        assert_eq!(m.mean_succ, vec![-1.0, 0.0]);
        // between-class scatter about the global mean (0, 1): every row deviates by +-(1, 1)
        let cov = m.covariance_fail();
        let ridge = RIDGE_FACTOR * 1.0;
        assert!((cov[(0, 0)] - (1.0 + ridge)).abs() < 1e-12);
        assert!((cov[(0, 1)] - 1.0).abs() < 1e-12);
        assert!((cov[(1, 1)] - (1.0 + ridge)).abs() < 1e-12);
    }

    #[test]
    fn single_class_rejected() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert!(matches!(
            fit_gaussian_llr(&x, &[true, true, true], CovarianceMode::PooledTotal),
            Err(Error::SingleClass(_))
        ));
    }

    fn random_fit(seed: u64, mode: CovarianceMode) -> (DMatrix<f64>, Vec<bool>, GaussianLlrModel) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        let x = DMatrix::from_fn(40, 3, |r, _| rng.sample::<f64, _>(StandardNormal) + if labels[r] { 0.7 } else { 0.0 });
        let m = fit_gaussian_llr(&x, &labels, mode).unwrap();
        (x, labels, m)
    }

    #[test]
    fn pooled_llr_is_affine() {
        let (_, _, m) = random_fit(31, CovarianceMode::PooledTotal);
        let mid: Vec<f64> = m.mean_fail.iter().zip(&m.mean_succ).map(|(a, b)| (a + b) / 2.0).collect();
        assert!(score_llr(&m, &mid).unwrap().abs() < 1e-9);
        let a = [0.3, -1.2, 2.0];
        let b = [-0.5, 0.4, 1.1];
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y) / 2.0).collect();
        let lhs = score_llr(&m, &a).unwrap() + score_llr(&m, &b).unwrap() - 2.0 * score_llr(&m, &ab).unwrap();
        assert!(lhs.abs() < 1e-9);
    }

    #[test]
    fn pooled_llr_translation_invariant() {
        let (x, labels, m) = random_fit(32, CovarianceMode::PooledTotal);
        let shift = [5.0, -3.0, 0.25];
        let shifted = DMatrix::from_fn(x.nrows(), 3, |r, c| x[(r, c)] + shift[c]);
        let ms = fit_gaussian_llr(&shifted, &labels, CovarianceMode::PooledTotal).unwrap();
        for r in 0..x.nrows() {
            let p: Vec<f64> = x.row(r).iter().copied().collect();
            let q: Vec<f64> = shifted.row(r).iter().copied().collect();
            assert!((score_llr(&m, &p).unwrap() - score_llr(&ms, &q).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn per_class_mode_uses_two_covariances() {
        let (_, _, m) = random_fit(33, CovarianceMode::PerClass);
        assert_ne!(m.chol_fail, m.chol_succ);
        let (_, _, p) = random_fit(33, CovarianceMode::PooledTotal);
        assert_eq!(p.chol_fail, p.chol_succ);
    }
}
