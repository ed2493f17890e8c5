//! Connectivity-structure features: the descending eigenvalue spectrum of a
//! coherence matrix, and per-rank z-scoring across trials for cohort curves.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::data::BandName;
use crate::dsp::CoherenceMatrix;
use crate::error::{Error, Result};
use crate::stats;

const EIGEN_MAX_ITER: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct EigenSpectrum {
    pub band: BandName,
    /// Sorted in non-increasing order.
    pub eigenvalues: Vec<f64>,
}

/// Eigenvalues of a symmetric matrix, largest first.
///
/// Householder tridiagonalization followed by implicit symmetric QR, iterated to
/// machine precision.
pub fn symmetric_eigenvalues(m: DMatrix<f64>) -> Result<Vec<f64>> {
    let diag = format!(
        "{}x{} matrix, Frobenius norm {:.3e}",
        m.nrows(),
        m.ncols(),
        m.norm()
    );
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or(Error::EigenNoConvergence(diag))?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

pub fn eigen_spectrum(c: &CoherenceMatrix) -> Result<EigenSpectrum> {
    Ok(EigenSpectrum {
        band: c.band,
        eigenvalues: symmetric_eigenvalues(c.to_matrix())?,
    })
}

/// Column-wise population z-score of an `n_trials x n_ranks` matrix.
pub fn rank_zscore(spectra: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if spectra.nrows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "z-scoring needs at least 2 trials, got {}",
            spectra.nrows()
        )));
    }
    let mut out = spectra.clone();
    for (rank, mut col) in out.column_iter_mut().enumerate() {
        let values: Vec<f64> = col.iter().copied().collect();
        let m = stats::mean(&values);
        let s = stats::pop_std(&values);
        if !(s > 0.0) {
            return Err(Error::ZeroVarianceRank(rank + 1));
        }
        col.apply(|v| *v = (*v - m) / s);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassCurves {
    pub mean_correct: Vec<f64>,
    pub mean_incorrect: Vec<f64>,
}

/// Per-column class means; `correct[i]` labels row `i`.
pub fn class_mean_curves(zscored: &DMatrix<f64>, correct: &[bool]) -> Result<ClassCurves> {
    if correct.len() != zscored.nrows() {
        return Err(Error::DimensionMismatch {
            expected: zscored.nrows(),
            got: correct.len(),
        });
    }
    let n_correct = correct.iter().filter(|&&c| c).count();
    let n_incorrect = correct.len() - n_correct;
    if n_correct == 0 || n_incorrect == 0 {
        return Err(Error::SingleClass("class curves need both correct and incorrect trials".into()));
    }
    let d = zscored.ncols();
    let mut mean_correct = vec![0.0; d];
    let mut mean_incorrect = vec![0.0; d];
    for (row, &ok) in zscored.row_iter().zip(correct) {
        let target = if ok { &mut mean_correct } else { &mut mean_incorrect };
        for (t, v) in target.iter_mut().zip(row.iter()) {
            *t += v;
        }
    }
    mean_correct.iter_mut().for_each(|v| *v /= n_correct as f64);
    mean_incorrect.iter_mut().for_each(|v| *v /= n_incorrect as f64);
    Ok(ClassCurves {
        mean_correct,
        mean_incorrect,
    })
}

/// `rank,mean_correct,mean_incorrect` with 1-based ranks.
pub fn write_rank_curves(path: impl AsRef<Path>, curves: &ClassCurves) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    writeln!(w, "rank,mean_correct,mean_incorrect").map_err(io_err)?;
    for (r, (c, i)) in curves.mean_correct.iter().zip(&curves.mean_incorrect).enumerate() {
        writeln!(w, "{},{},{}", r + 1, c, i).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn coherence(n: usize, values: Vec<f64>) -> CoherenceMatrix {
        CoherenceMatrix::from_values(BandName::Theta, n, values).unwrap()
    }

    /// Real roots of a monic cubic with three real roots, by the trigonometric formula.
    fn cubic_roots(a: f64, b: f64, c: f64) -> [f64; 3] {
        // x^3 + a x^2 + b x + c; substitute x = t - a/3
        let p = b - a * a / 3.0;
        let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        let mut r = [0.0; 3];
        for (k, slot) in r.iter_mut().enumerate() {
            *slot = m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - a / 3.0;
        }
        r.sort_by(|x, y| y.total_cmp(x));
        r
    }

    #[test]
    fn identity_spectrum() {
        let mut v = vec![0.0; 64 * 64];
        for i in 0..64 {
            v[i * 64 + i] = 1.0;
        }
        let s = eigen_spectrum(&coherence(64, v)).unwrap();
        assert!(s.eigenvalues.iter().all(|&e| (e - 1.0).abs() < 1e-12));
    }

    #[test]
    fn all_ones_is_rank_one() {
        let s = eigen_spectrum(&coherence(64, vec![1.0; 64 * 64])).unwrap();
        assert!((s.eigenvalues[0] - 64.0).abs() < 1e-9);
        assert!(s.eigenvalues[1..].iter().all(|e| e.abs() < 1e-9));
    }

    #[test]
    fn three_by_three_matches_cubic_formula() {
        for (x, y, z) in [(0.3, 0.8, 0.1), (0.95, 0.2, 0.5), (0.0, 0.0, 0.7), (0.6, 0.5, 0.4)] {
            let m = vec![1.0, x, y, x, 1.0, z, y, z, 1.0];
            // det(lambda I - M) = l^3 - 3 l^2 + (3 - x^2 - y^2 - z^2) l - det(M)
            let det = 1.0 + 2.0 * x * y * z - x * x - y * y - z * z;
            let oracle = cubic_roots(-3.0, 3.0 - x * x - y * y - z * z, -det);
            let got = eigen_spectrum(&coherence(3, m)).unwrap().eigenvalues;
            for (g, o) in got.iter().zip(oracle) {
                assert!((g - o).abs() < 1e-9, "{got:?} vs {oracle:?}");
            }
        }
    }

    #[test]
    fn zscore_examples() {
        let m = DMatrix::from_row_slice(2, 1, &[1.0, 3.0]);
        let z = rank_zscore(&m).unwrap();
        assert_eq!(z.as_slice(), &[-1.0, 1.0]);

        let m = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        assert!(matches!(rank_zscore(&m), Err(Error::ZeroVarianceRank(2))));
    }

    #[test]
    fn curves_for_two_trials_equal_rows() {
        let z = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        let c = class_mean_curves(&z, &[true, false]).unwrap();
        assert_eq!(c.mean_correct, vec![-1.0, 1.0]);
        assert_eq!(c.mean_incorrect, vec![1.0, -1.0]);
        assert!(class_mean_curves(&z, &[true, true]).is_err());
    }

    fn unit_diag_matrix(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..=1.0, n * (n - 1) / 2).prop_map(move |upper| {
            let mut v = vec![0.0; n * n];
            let mut k = 0;
            for i in 0..n {
                v[i * n + i] = 1.0;
                for j in i + 1..n {
                    v[i * n + j] = upper[k];
                    v[j * n + i] = upper[k];
                    k += 1;
                }
            }
            v
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn trace_and_bounds(v in unit_diag_matrix(16)) {
            let s = eigen_spectrum(&coherence(16, v)).unwrap().eigenvalues;
            prop_assert!((s.iter().sum::<f64>() - 16.0).abs() < 1e-6);
            prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(s[0] <= 16.0 + 1e-9 && s[15] >= -16.0 - 1e-9);
        }

        #[test]
        fn permutation_invariant(v in unit_diag_matrix(12), seed in 0u64..1000) {
            let n = 12;
            let mut perm: Vec<usize> = (0..n).collect();
            // deterministic shuffle from the seed
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            for i in (1..n).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (state >> 33) as usize % (i + 1));
            }
            let mut p = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    p[i * n + j] = v[perm[i] * n + perm[j]];
                }
            }
            let a = eigen_spectrum(&coherence(n, v)).unwrap().eigenvalues;
            let b = eigen_spectrum(&coherence(n, p)).unwrap().eigenvalues;
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn zscored_columns_are_standard(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 3..30)) {
            let n = rows.len();
            let m = DMatrix::from_row_iterator(n, 4, rows.into_iter().flatten());
            if let Ok(z) = rank_zscore(&m) {
                for col in z.column_iter() {
                    let v: Vec<f64> = col.iter().copied().collect();
                    prop_assert!(stats::mean(&v).abs() <= 1e-12);
                    prop_assert!((stats::pop_std(&v) - 1.0).abs() <= 1e-12);
                }
                let labels: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
                let c = class_mean_curves(&z, &labels).unwrap();
                let nc = labels.iter().filter(|&&l| l).count() as f64;
                let ni = n as f64 - nc;
                for (a, b) in c.mean_correct.iter().zip(&c.mean_incorrect) {
                    prop_assert!((nc * a + ni * b).abs() < 1e-9);
                }
            }
        }
    }
}
