//! Scaling, PCA, Gaussian log-likelihood ratios, fusion and cross-validation.

pub mod container;
pub mod cv;
pub mod fusion;
pub mod gaussian;
pub mod pca;
pub mod scaler;

pub use cv::{loso_cv, CvConfig, CvResult, FittedPipeline, Fold};
pub use fusion::{fuse, CellKey, FusionSpec};
pub use gaussian::{fit_gaussian_llr, score_llr, CovarianceMode, GaussianLlrModel};
pub use pca::{fit_pca, project, PcaModel};
pub use scaler::{apply_scaler, fit_scaler, Scaler};
