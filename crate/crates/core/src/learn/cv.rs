//! Leave-one-subject-out cross-validation of a scaler -> PCA -> Gaussian chain.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::learn::gaussian::{fit_gaussian_llr, score_llr, CovarianceMode, GaussianLlrModel};
use crate::learn::pca::{fit_pca, project, PcaModel};
use crate::learn::scaler::{apply_scaler, fit_scaler, Scaler};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CvConfig {
    pub pca_target_fraction: f64,
    pub covariance_mode: CovarianceMode,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            pca_target_fraction: 0.90,
            covariance_mode: CovarianceMode::PooledTotal,
        }
    }
}

/// A trained chain; every parameter comes from training rows only.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedPipeline {
    pub scaler: Scaler,
    pub pca: PcaModel,
    pub gaussian: GaussianLlrModel,
}

impl FittedPipeline {
    pub fn fit(train: &DMatrix<f64>, labels_fail: &[bool], config: &CvConfig) -> Result<Self> {
        let scaler = fit_scaler(train)?;
        let scaled = apply_scaler(&scaler, train)?;
        let pca = fit_pca(&scaled, config.pca_target_fraction)?;
        let projected = project(&pca, &scaled)?;
        let gaussian = fit_gaussian_llr(&projected, labels_fail, config.covariance_mode)?;
        Ok(FittedPipeline { scaler, pca, gaussian })
    }

    pub fn score(&self, rows: &DMatrix<f64>) -> Result<Vec<f64>> {
        let projected = project(&self.pca, &apply_scaler(&self.scaler, rows)?)?;
        projected
            .row_iter()
            .map(|r| score_llr(&self.gaussian, &r.iter().copied().collect::<Vec<_>>()))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Fold {
    pub held_out: String,
    pub model: FittedPipeline,
}

#[derive(Clone, Debug)]
pub struct CvResult {
    /// One score per input row, from the fold that held out its subject.
    pub scores: Vec<f64>,
    /// Folds in order of first subject appearance.
    pub folds: Vec<Fold>,
}

fn distinct_in_order(subjects: &[String]) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    for s in subjects {
        if !out.contains(&s.as_str()) {
            out.push(s);
        }
    }
    out
}

/// Scores every row with the model trained on all other subjects.
pub fn loso_cv(
    features: &DMatrix<f64>,
    subjects: &[String],
    labels_fail: &[bool],
    config: &CvConfig,
) -> Result<CvResult> {
    let n = features.nrows();
    if subjects.len() != n || labels_fail.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: subjects.len().min(labels_fail.len()),
        });
    }
    let held: Vec<&str> = distinct_in_order(subjects);
    if held.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "leave-one-subject-out needs at least 2 subjects, got {}",
            held.len()
        )));
    }

    let folds: Vec<(Vec<usize>, Fold)> = held
        .par_iter()
        .map(|&subject| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&r| subjects[r] == subject);
            let train_labels: Vec<bool> = train.iter().map(|&r| labels_fail[r]).collect();
            let n_fail = train_labels.iter().filter(|&&f| f).count();
            if n_fail < 2 || train_labels.len() - n_fail < 2 {
                return Err(Error::SingleClass(format!(
                    "training fold without subject `{subject}` has {n_fail} failure / {} success trials",
                    train_labels.len() - n_fail
                )));
            }
            let model = FittedPipeline::fit(&features.select_rows(&train), &train_labels, config)?;
            Ok((
                test,
                Fold {
                    held_out: subject.to_string(),
                    model,
                },
            ))
        })
        .collect::<Result<_>>()?;

    let mut scores = vec![f64::NAN; n];
    let mut out = Vec::with_capacity(folds.len());
    for (test, fold) in folds {
        let s = fold.model.score(&features.select_rows(&test))?;
        for (&r, v) in test.iter().zip(s) {
            scores[r] = v;
        }
        out.push(fold);
    }
    Ok(CvResult { scores, folds: out })
}
