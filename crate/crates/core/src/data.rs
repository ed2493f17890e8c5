//! Trials, datasets, labels and frequency bands.
//!
//! Samples are held channel-major as `f64`. Signal files store `f32`, so every
//! trial that went through disk holds values exactly representable in `f32`.

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Shortest analyzable trial.
pub const MIN_DURATION_S: f64 = 1.0;

/// Default channel count of a recording.
pub const DEFAULT_CHANNELS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BandName {
    Theta,
    Alpha,
    Beta,
    Gamma,
}

impl BandName {
    pub const ALL: [BandName; 4] = [
        BandName::Theta,
        BandName::Alpha,
        BandName::Beta,
        BandName::Gamma,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BandName::Theta => "theta",
            BandName::Alpha => "alpha",
            BandName::Beta => "beta",
            BandName::Gamma => "gamma",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for BandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BandName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theta" => Ok(BandName::Theta),
            "alpha" => Ok(BandName::Alpha),
            "beta" => Ok(BandName::Beta),
            "gamma" => Ok(BandName::Gamma),
            other => Err(Error::InvalidArgument(format!("unknown band `{other}`"))),
        }
    }
}

/// A half-open frequency range `[lo_hz, hi_hz)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyBand {
    pub name: BandName,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl FrequencyBand {
    pub fn new(name: BandName, lo_hz: f64, hi_hz: f64) -> Result<Self> {
        if !(lo_hz > 0.0 && hi_hz > lo_hz && hi_hz.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "band `{name}` needs 0 < lo < hi, got [{lo_hz}, {hi_hz})"
            )));
        }
        Ok(FrequencyBand { name, lo_hz, hi_hz })
    }

    pub fn contains(&self, freq_hz: f64) -> bool {
        self.lo_hz <= freq_hz && freq_hz < self.hi_hz
    }

    pub fn check_nyquist(&self, sample_rate_hz: f64) -> Result<()> {
        let nyquist = sample_rate_hz / 2.0;
        if self.hi_hz >= nyquist {
            return Err(Error::AboveNyquist {
                what: "band upper edge",
                value: self.hi_hz,
                nyquist,
            });
        }
        Ok(())
    }
}

/// Theta 4-8, alpha 8-12, beta 12-30, gamma 30-50 Hz.
pub fn default_bands() -> [FrequencyBand; 4] {
    [
        FrequencyBand { name: BandName::Theta, lo_hz: 4.0, hi_hz: 8.0 },
        FrequencyBand { name: BandName::Alpha, lo_hz: 8.0, hi_hz: 12.0 },
        FrequencyBand { name: BandName::Beta, lo_hz: 12.0, hi_hz: 30.0 },
        FrequencyBand { name: BandName::Gamma, lo_hz: 30.0, hi_hz: 50.0 },
    ]
}

/// Bands must appear in canonical order with ascending, non-overlapping ranges.
pub fn validate_bands(bands: &[FrequencyBand; 4]) -> Result<()> {
    for (band, expected) in bands.iter().zip(BandName::ALL) {
        if band.name != expected {
            return Err(Error::Config(format!(
                "band `{}` is out of order, expected `{expected}`",
                band.name
            )));
        }
        FrequencyBand::new(band.name, band.lo_hz, band.hi_hz).map_err(|e| Error::Config(e.to_string()))?;
    }
    for pair in bands.windows(2) {
        if pair[1].lo_hz < pair[0].hi_hz {
            return Err(Error::Config(format!(
                "bands `{}` and `{}` overlap: [{}, {}) vs [{}, {})",
                pair[0].name, pair[1].name, pair[0].lo_hz, pair[0].hi_hz, pair[1].lo_hz, pair[1].hi_hz
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LabelKind {
    Digit,
    Sentence,
}

impl LabelKind {
    pub const ALL: [LabelKind; 2] = [LabelKind::Digit, LabelKind::Sentence];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelKind::Digit => "digit",
            LabelKind::Sentence => "sentence",
        }
    }
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "digit" => Ok(LabelKind::Digit),
            "sentence" => Ok(LabelKind::Sentence),
            other => Err(Error::InvalidArgument(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureFamily {
    ConnectivityStructure,
    GraphVariability,
    LogPower,
}

impl FeatureFamily {
    pub const ALL: [FeatureFamily; 3] = [
        FeatureFamily::ConnectivityStructure,
        FeatureFamily::GraphVariability,
        FeatureFamily::LogPower,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureFamily::ConnectivityStructure => "connectivity_structure",
            FeatureFamily::GraphVariability => "graph_variability",
            FeatureFamily::LogPower => "log_power",
        }
    }

    /// Column-name stem used in the report table.
    pub fn short_name(self) -> &'static str {
        match self {
            FeatureFamily::ConnectivityStructure => "connstruct",
            FeatureFamily::GraphVariability => "graphvar",
            FeatureFamily::LogPower => "power",
        }
    }
}

impl fmt::Display for FeatureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "connectivity_structure" => Ok(FeatureFamily::ConnectivityStructure),
            "graph_variability" => Ok(FeatureFamily::GraphVariability),
            "log_power" => Ok(FeatureFamily::LogPower),
            other => Err(Error::InvalidArgument(format!("unknown feature family `{other}`"))),
        }
    }
}

/// One recording epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub subject_id: String,
    pub trial_id: String,
    pub sample_rate_hz: f64,
    n_channels: usize,
    n_samples: usize,
    samples: Vec<f64>,
    pub digit_correct: bool,
    pub sentence_correct: bool,
}

impl Trial {
    /// Builds a trial from channel-major samples, checking finiteness and minimum duration.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        subject_id: impl Into<String>,
        trial_id: impl Into<String>,
        sample_rate_hz: f64,
        n_channels: usize,
        samples: Vec<f64>,
        digit_correct: bool,
        sentence_correct: bool,
    ) -> Result<Self> {
        let trial_id = trial_id.into();
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "trial `{trial_id}`: sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if n_channels == 0 || !samples.len().is_multiple_of(n_channels) {
            return Err(Error::InvalidArgument(format!(
                "trial `{trial_id}`: {} samples do not split into {n_channels} channels",
                samples.len()
            )));
        }
        let n_samples = samples.len() / n_channels;
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                trial_id,
                channel: pos / n_samples,
                index: pos % n_samples,
            });
        }
        let duration_s = n_samples as f64 / sample_rate_hz;
        if duration_s < MIN_DURATION_S {
            return Err(Error::TooShort {
                trial_id,
                duration_s,
                min_s: MIN_DURATION_S,
            });
        }
        Ok(Trial {
            subject_id: subject_id.into(),
            trial_id,
            sample_rate_hz,
            n_channels,
            n_samples,
            samples,
            digit_correct,
            sentence_correct,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples as f64 / self.sample_rate_hz
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.samples[c * self.n_samples..(c + 1) * self.n_samples]
    }

    pub fn channels(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.n_samples)
    }

    /// Channel-major sample buffer.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn is_failure(&self, label: LabelKind) -> bool {
        match label {
            LabelKind::Digit => !self.digit_correct,
            LabelKind::Sentence => !self.sentence_correct,
        }
    }

    /// Same metadata, new samples of identical shape.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != self.samples.len() {
            return Err(Error::DimensionMismatch {
                expected: self.samples.len(),
                got: samples.len(),
            });
        }
        Trial::new(
            self.subject_id.clone(),
            self.trial_id.clone(),
            self.sample_rate_hz,
            self.n_channels,
            samples,
            self.digit_correct,
            self.sentence_correct,
        )
    }
}

/// A manifest row: everything about a trial except its samples.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialDescriptor {
    pub subject_id: String,
    pub trial_id: String,
    /// Resolved against the manifest directory.
    pub signal_path: PathBuf,
    pub sample_rate_hz: f64,
    pub n_channels: usize,
    pub n_samples: usize,
    pub digit_correct: bool,
    pub sentence_correct: bool,
}

impl TrialDescriptor {
    pub fn duration_s(&self) -> f64 {
        self.n_samples as f64 / self.sample_rate_hz
    }

    pub fn is_failure(&self, label: LabelKind) -> bool {
        match label {
            LabelKind::Digit => !self.digit_correct,
            LabelKind::Sentence => !self.sentence_correct,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub trials: Vec<TrialDescriptor>,
    /// Distinct subject ids in order of first appearance.
    pub subjects: Vec<String>,
}

impl Dataset {
    pub fn new(trials: Vec<TrialDescriptor>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut subjects: Vec<String> = Vec::new();
        for t in &trials {
            if !seen.insert(t.trial_id.as_str()) {
                return Err(Error::DuplicateTrial(t.trial_id.clone()));
            }
            if !subjects.contains(&t.subject_id) {
                subjects.push(t.subject_id.clone());
            }
        }
        Ok(Dataset { trials, subjects })
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetWarning {
    Duration { trial_id: String, duration_s: f64 },
    SingleClass { label: LabelKind },
    FewTrials { subject_id: String, count: usize },
}

impl fmt::Display for DatasetWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetWarning::Duration { trial_id, duration_s } => {
                write!(f, "trial `{trial_id}` lasts {duration_s:.3} s, outside [1, 30] s")
            }
            DatasetWarning::SingleClass { label } => {
                write!(f, "{label} labels contain a single class")
            }
            DatasetWarning::FewTrials { subject_id, count } => {
                write!(f, "subject `{subject_id}` has only {count} trial(s)")
            }
        }
    }
}

/// Soft checks; never fails.
pub fn validate_dataset(dataset: &Dataset) -> Vec<DatasetWarning> {
    let mut warnings = Vec::new();
    for t in &dataset.trials {
        let d = t.duration_s();
        if !(MIN_DURATION_S..=30.0).contains(&d) {
            warnings.push(DatasetWarning::Duration {
                trial_id: t.trial_id.clone(),
                duration_s: d,
            });
        }
    }
    if !dataset.trials.is_empty() {
        for label in LabelKind::ALL {
            let fails = dataset.trials.iter().filter(|t| t.is_failure(label)).count();
            if fails == 0 || fails == dataset.trials.len() {
                warnings.push(DatasetWarning::SingleClass { label });
            }
        }
    }
    for s in &dataset.subjects {
        let count = dataset.trials.iter().filter(|t| &t.subject_id == s).count();
        if count < 10 {
            warnings.push(DatasetWarning::FewTrials {
                subject_id: s.clone(),
                count,
            });
        }
    }
    warnings
}

#[cfg(test)]
mod tests {
    use super::*;

    fn descriptor(subject: &str, id: &str, n_samples: usize, digit: bool) -> TrialDescriptor {
        TrialDescriptor {
            subject_id: subject.into(),
            trial_id: id.into(),
            signal_path: PathBuf::from(format!("{id}.f32")),
            sample_rate_hz: 256.0,
            n_channels: 64,
            n_samples,
            digit_correct: digit,
            sentence_correct: true,
        }
    }

    #[test]
    fn default_bands_partition_4_to_50() {
        let bands = default_bands();
        validate_bands(&bands).unwrap();
        assert_eq!(bands[0].lo_hz, 4.0);
        assert_eq!(bands[3].hi_hz, 50.0);
        for pair in bands.windows(2) {
            assert_eq!(pair[0].hi_hz, pair[1].lo_hz);
        }
        // half-open membership: every integer frequency in [4, 50) lands in exactly one band
        for f in 4..50 {
            let hits = bands.iter().filter(|b| b.contains(f as f64)).count();
            assert_eq!(hits, 1, "{f} Hz");
        }
        assert!(!bands.iter().any(|b| b.contains(50.0)));
    }

    #[test]
    fn overlapping_bands_name_both() {
        let mut bands = default_bands();
        bands[1].hi_hz = 13.0;
        let msg = validate_bands(&bands).unwrap_err().to_string();
        assert!(msg.contains("alpha") && msg.contains("beta"), "{msg}");
    }

    #[test]
    fn trial_invariants() {
        let t = Trial::new("s", "t", 256.0, 64, vec![0.0; 64 * 256], true, true).unwrap();
        assert_eq!(t.duration_s(), 1.0);
        assert_eq!(t.n_samples(), 256);

        let short = Trial::new("s", "t", 256.0, 2, vec![0.0; 2 * 128], true, true);
        assert!(matches!(short, Err(Error::TooShort { .. })));

        let mut v = vec![0.0; 2 * 256];
        v[256 + 7] = f64::NAN;
        let err = Trial::new("s", "t", 256.0, 2, v, true, true).unwrap_err();
        assert!(matches!(err, Error::NonFinite { channel: 1, index: 7, .. }));
    }

    #[test]
    fn duplicate_trial_ids_rejected() {
        let trials = vec![descriptor("a", "x", 256, true), descriptor("b", "x", 256, true)];
        assert!(matches!(Dataset::new(trials), Err(Error::DuplicateTrial(_))));
    }

    #[test]
    fn warnings() {
        let mut trials: Vec<_> = (0..10)
            .map(|i| descriptor("a", &format!("a{i}"), (5.3 * 256.0) as usize, i % 2 == 0))
            .collect();
        for t in trials.iter_mut().take(3) {
            t.sentence_correct = false;
        }
        let ds = Dataset::new(trials.clone()).unwrap();
        assert!(validate_dataset(&ds).is_empty());

        trials[0].n_samples = 31 * 256;
        let ds = Dataset::new(trials.clone()).unwrap();
        assert_eq!(
            validate_dataset(&ds),
            vec![DatasetWarning::Duration { trial_id: "a0".into(), duration_s: 31.0 }]
        );

        for t in trials.iter_mut() {
            t.digit_correct = true;
            t.n_samples = 1000;
        }
        let ds = Dataset::new(trials[..4].to_vec()).unwrap();
        let w = validate_dataset(&ds);
        assert!(w.contains(&DatasetWarning::SingleClass { label: LabelKind::Digit }));
        assert!(w.contains(&DatasetWarning::FewTrials { subject_id: "a".into(), count: 4 }));
    }
}
