//! On-disk formats: the CSV manifest, raw `f32` signal files and the long-format feature store.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::data::{BandName, Dataset, FeatureFamily, Trial, TrialDescriptor};
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 8] = [
    "subject_id",
    "trial_id",
    "signal_path",
    "sample_rate_hz",
    "n_channels",
    "n_samples",
    "digit_correct",
    "sentence_correct",
];

pub const FEATURE_HEADER: [&str; 6] = ["subject_id", "trial_id", "family", "band", "dim", "value"];

fn parse_label(s: &str) -> Option<bool> {
    match s {
        "1" => Some(true),
        "0" => Some(false),
        _ => None,
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(MANIFEST_HEADER) {
        return Err(Error::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`", MANIFEST_HEADER.join(",")),
        });
    }

    let mut trials = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |message: String| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            message,
        };
        if record.len() != MANIFEST_HEADER.len() {
            return Err(bad(format!(
                "expected {} columns, found {}",
                MANIFEST_HEADER.len(),
                record.len()
            )));
        }
        let sample_rate_hz: f64 = record[3]
            .parse()
            .map_err(|_| bad(format!("non-numeric sample_rate_hz `{}`", &record[3])))?;
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(bad(format!("sample_rate_hz must be positive, got {sample_rate_hz}")));
        }
        let n_channels: usize = record[4]
            .parse()
            .map_err(|_| bad(format!("bad n_channels `{}`", &record[4])))?;
        let n_samples: usize = record[5]
            .parse()
            .map_err(|_| bad(format!("bad n_samples `{}`", &record[5])))?;
        if n_channels == 0 || n_samples == 0 {
            return Err(bad("n_channels and n_samples must be positive".into()));
        }
        let digit_correct = parse_label(&record[6])
            .ok_or_else(|| bad(format!("digit_correct must be 0 or 1, got `{}`", &record[6])))?;
        let sentence_correct = parse_label(&record[7])
            .ok_or_else(|| bad(format!("sentence_correct must be 0 or 1, got `{}`", &record[7])))?;
        trials.push(TrialDescriptor {
            subject_id: record[0].to_string(),
            trial_id: record[1].to_string(),
            signal_path: base.join(&record[2]),
            sample_rate_hz,
            n_channels,
            n_samples,
            digit_correct,
            sentence_correct,
        });
    }
    Dataset::new(trials)
}

/// Writes a manifest. Signal paths are written relative to the manifest directory when possible.
pub fn write_manifest(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let io_err = |e: csv::Error| csv_error(path, e);
    w.write_record(MANIFEST_HEADER).map_err(io_err)?;
    for t in &dataset.trials {
        let rel = t.signal_path.strip_prefix(base).unwrap_or(&t.signal_path);
        w.write_record([
            t.subject_id.as_str(),
            t.trial_id.as_str(),
            &rel.to_string_lossy(),
            &t.sample_rate_hz.to_string(),
            &t.n_channels.to_string(),
            &t.n_samples.to_string(),
            if t.digit_correct { "1" } else { "0" },
            if t.sentence_correct { "1" } else { "0" },
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_trial(desc: &TrialDescriptor) -> Result<Trial> {
    let path = &desc.signal_path;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = (desc.n_channels * desc.n_samples * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::ByteLengthMismatch {
            path: path.clone(),
            n_channels: desc.n_channels,
            n_samples: desc.n_samples,
            expected,
            found: bytes.len() as u64,
        });
    }
    let samples = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    Trial::new(
        desc.subject_id.clone(),
        desc.trial_id.clone(),
        desc.sample_rate_hz,
        desc.n_channels,
        samples,
        desc.digit_correct,
        desc.sentence_correct,
    )
}

/// Writes samples as little-endian `f32`, channel-major. Values are rounded to `f32`.
pub fn write_signal(path: impl AsRef<Path>, trial: &Trial) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(trial.samples().len() * 4);
    for &v in trial.samples() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Descriptor for a trial whose signal lives at `signal_path`.
pub fn describe(trial: &Trial, signal_path: PathBuf) -> TrialDescriptor {
    TrialDescriptor {
        subject_id: trial.subject_id.clone(),
        trial_id: trial.trial_id.clone(),
        signal_path,
        sample_rate_hz: trial.sample_rate_hz,
        n_channels: trial.n_channels(),
        n_samples: trial.n_samples(),
        digit_correct: trial.digit_correct,
        sentence_correct: trial.sentence_correct,
    }
}

/// One trial's feature vector for one family and band.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRecord {
    pub subject_id: String,
    pub trial_id: String,
    pub family: FeatureFamily,
    pub band: BandName,
    pub values: Vec<f64>,
}

pub fn write_feature_store(path: impl AsRef<Path>, records: &[FeatureRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    writeln!(w, "{}", FEATURE_HEADER.join(",")).map_err(io_err)?;
    for r in records {
        for (dim, v) in r.values.iter().enumerate() {
            // `Display` for f64 is the shortest string that parses back to the same bits.
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.subject_id, r.trial_id, r.family, r.band, dim, v
            )
            .map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// Reads the long format back into records. Rows of one record must be contiguous with dims `0..n`.
pub fn read_feature_store(path: impl AsRef<Path>) -> Result<Vec<FeatureRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(FEATURE_HEADER) {
        return Err(Error::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`", FEATURE_HEADER.join(",")),
        });
    }

    let mut records: Vec<FeatureRecord> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |message: String| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            message,
        };
        let family: FeatureFamily = row[2].parse().map_err(|e: Error| bad(e.to_string()))?;
        let band: BandName = row[3].parse().map_err(|e: Error| bad(e.to_string()))?;
        let dim: usize = row[4].parse().map_err(|_| bad(format!("bad dim `{}`", &row[4])))?;
        let value: f64 = row[5].parse().map_err(|_| bad(format!("bad value `{}`", &row[5])))?;

        let continues = records.last().is_some_and(|r| {
            r.trial_id == row[1] && r.subject_id == row[0] && r.family == family && r.band == band
        });
        if continues {
            let r = records.last_mut().expect("checked above");
            if dim != r.values.len() {
                return Err(bad(format!("expected dim {}, found {dim}", r.values.len())));
            }
            r.values.push(value);
        } else {
            if dim != 0 {
                return Err(bad(format!("record starts at dim {dim}, expected 0")));
            }
            records.push(FeatureRecord {
                subject_id: row[0].to_string(),
                trial_id: row[1].to_string(),
                family,
                band,
                values: vec![value],
            });
        }
    }
    Ok(records)
}
