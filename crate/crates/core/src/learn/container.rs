//! Binary container for a fitted pipeline.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! b"CGM1"
//! u32  covariance mode (0 = pooled_total, 1 = per_class)
//! then arrays, each: u32 rank (1 or 2), u64 per dimension, f64 values row-major
//!   [input_dim] [kept] [scaler means] [scaler stds]
//!   [pca mean] [pca components d x m] [explained fraction] [eigenvalues]
//!   [mean_fail] [mean_succ] [chol_fail d x d] [chol_succ d x d] [ridge]
//! ```

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::learn::cv::FittedPipeline;
use crate::learn::gaussian::{CovarianceMode, GaussianLlrModel};
use crate::learn::pca::PcaModel;
use crate::learn::scaler::Scaler;

pub const MAGIC: &[u8; 4] = b"CGM1";

struct Writer(Vec<u8>);

impl Writer {
    fn vector(&mut self, v: &[f64]) {
        self.0.extend_from_slice(&1u32.to_le_bytes());
        self.0.extend_from_slice(&(v.len() as u64).to_le_bytes());
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }

    fn matrix(&mut self, m: &DMatrix<f64>) {
        self.0.extend_from_slice(&2u32.to_le_bytes());
        self.0.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
        self.0.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                self.0.extend_from_slice(&m[(r, c)].to_le_bytes());
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Container(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Container(format!("dimension {v} too large")))
    }

    fn values(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Container("array too large".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect())
    }

    fn vector(&mut self) -> Result<Vec<f64>> {
        match self.u32()? {
            1 => {
                let n = self.u64()?;
                self.values(n)
            }
            r => Err(Error::Container(format!("expected a rank-1 array, found rank {r}"))),
        }
    }

    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        match self.u32()? {
            2 => {
                let rows = self.u64()?;
                let cols = self.u64()?;
                let n = rows.checked_mul(cols).ok_or_else(|| Error::Container("array too large".into()))?;
                Ok(DMatrix::from_row_slice(rows, cols, &self.values(n)?))
            }
            r => Err(Error::Container(format!("expected a rank-2 array, found rank {r}"))),
        }
    }

    fn scalar(&mut self) -> Result<f64> {
        let v = self.vector()?;
        match v.as_slice() {
            [x] => Ok(*x),
            _ => Err(Error::Container(format!("expected a scalar, found {} values", v.len()))),
        }
    }
}

pub fn encode(model: &FittedPipeline) -> Vec<u8> {
    let mut w = Writer(MAGIC.to_vec());
    let mode: u32 = match model.gaussian.mode {
        CovarianceMode::PooledTotal => 0,
        CovarianceMode::PerClass => 1,
    };
    w.0.extend_from_slice(&mode.to_le_bytes());
    let s = &model.scaler;
    w.vector(&[s.input_dim as f64]);
    w.vector(&s.kept.iter().map(|&k| k as f64).collect::<Vec<_>>());
    w.vector(&s.means);
    w.vector(&s.stds);
    let p = &model.pca;
    w.vector(&p.mean);
    w.matrix(&p.components);
    w.vector(&[p.explained_fraction]);
    w.vector(&p.eigenvalues);
    let g = &model.gaussian;
    w.vector(&g.mean_fail);
    w.vector(&g.mean_succ);
    w.matrix(&g.chol_fail);
    w.matrix(&g.chol_succ);
    w.vector(&[g.ridge]);
    w.0
}

fn as_index(v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::Container(format!("invalid index {v}")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<FittedPipeline> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Container("bad magic, expected CGM1".into()));
    }
    let mode = match r.u32()? {
        0 => CovarianceMode::PooledTotal,
        1 => CovarianceMode::PerClass,
        m => return Err(Error::Container(format!("unknown covariance mode {m}"))),
    };
    let input_dim = as_index(r.scalar()?)?;
    let kept = r.vector()?.into_iter().map(as_index).collect::<Result<Vec<_>>>()?;
    let scaler = Scaler {
        input_dim,
        kept,
        means: r.vector()?,
        stds: r.vector()?,
    };
    let pca = PcaModel {
        mean: r.vector()?,
        components: r.matrix()?,
        explained_fraction: r.scalar()?,
        eigenvalues: r.vector()?,
    };
    let gaussian = GaussianLlrModel {
        mode,
        mean_fail: r.vector()?,
        mean_succ: r.vector()?,
        chol_fail: r.matrix()?,
        chol_succ: r.matrix()?,
        ridge: r.scalar()?,
    };
    if r.pos != bytes.len() {
        return Err(Error::Container(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let d = scaler.kept.len();
    let m = pca.components.ncols();
    let consistent = scaler.means.len() == d
        && scaler.stds.len() == d
        && pca.mean.len() == d
        && pca.components.nrows() == d
        && gaussian.mean_fail.len() == m
        && gaussian.mean_succ.len() == m
        && gaussian.chol_fail.shape() == (m, m)
        && gaussian.chol_succ.shape() == (m, m);
    if !consistent {
        return Err(Error::Container("array dimensions are inconsistent".into()));
    }
    Ok(FittedPipeline { scaler, pca, gaussian })
}

pub fn save(path: impl AsRef<Path>, model: &FittedPipeline) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<FittedPipeline> {
    let path = path.as_ref();
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
