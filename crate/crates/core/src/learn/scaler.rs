use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::stats;

/// Per-dimension z-scoring fitted on training rows. Zero-variance dimensions are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaler {
    pub input_dim: usize,
    /// Indices of retained input dimensions.
    pub kept: Vec<usize>,
    /// Means and population stds of the retained dimensions.
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Scaler {
    pub fn output_dim(&self) -> usize {
        self.kept.len()
    }
}

pub fn fit_scaler(train: &DMatrix<f64>) -> Result<Scaler> {
    if train.nrows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "scaler needs at least 2 training rows, got {}",
            train.nrows()
        )));
    }
    let mut kept = Vec::new();
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for (d, col) in train.column_iter().enumerate() {
        let values: Vec<f64> = col.iter().copied().collect();
        let m = stats::mean(&values);
        let s = stats::pop_std(&values);
        if s > 1e-12 * m.abs().max(1.0) {
            kept.push(d);
            means.push(m);
            stds.push(s);
        }
    }
    Ok(Scaler {
        input_dim: train.ncols(),
        kept,
        means,
        stds,
    })
}

pub fn apply_scaler(scaler: &Scaler, rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if rows.ncols() != scaler.input_dim {
        return Err(Error::DimensionMismatch {
            expected: scaler.input_dim,
            got: rows.ncols(),
        });
    }
    Ok(DMatrix::from_fn(rows.nrows(), scaler.kept.len(), |r, k| {
        (rows[(r, scaler.kept[k])] - scaler.means[k]) / scaler.stds[k]
    }))
}
