//! Line-oriented `key = value` configuration with dotted section prefixes.
//!
//! ```text
//! # comments start with '#'
//! bands.theta.lo_hz = 4
//! spectral.segment_length_s = 1.0
//! graph.cost_levels = 6, 6.5, 7, 7.5
//! fusion.log_power = beta, gamma
//! synth.digit.gain_fail.theta = 1.0
//! ```
//!
//! Absent keys keep their defaults; unknown or repeated keys are errors.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::data::{default_bands, validate_bands, BandName, FeatureFamily, FrequencyBand, LabelKind};
use crate::dsp::{SpectralConfig, Window};
use crate::error::{Error, Result};
use crate::graphnet::DEFAULT_COST_LEVELS;
use crate::learn::{CvConfig, FusionSpec};
use crate::synth::{LabelGains, SynthConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterConfig {
    pub highpass_hz: f64,
    pub notch_hz: f64,
    pub notch_q: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            highpass_hz: 0.1,
            notch_hz: 60.0,
            notch_q: 30.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub bands: [FrequencyBand; 4],
    pub spectral: SpectralConfig,
    pub filter: FilterConfig,
    pub cost_levels: Vec<f64>,
    pub cv: CvConfig,
    pub fusion: FusionSpec,
    /// Its `bands` always mirror the top-level bands.
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            bands: default_bands(),
            spectral: SpectralConfig::default(),
            filter: FilterConfig::default(),
            cost_levels: DEFAULT_COST_LEVELS.to_vec(),
            cv: CvConfig::default(),
            fusion: FusionSpec::default(),
            synth: SynthConfig::default(),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}` as a number")))
}

fn parse_list<T: FromStr<Err = Error>>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e: Error| Error::Config(format!("`{key}`: {e}"))))
        .collect()
}

impl PipelineConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    /// Copy with `key = value` overrides applied in order, validated as a whole.
    pub fn with_overrides<'a>(&self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut config = self.clone();
        for (key, value) in pairs {
            config.set(key.trim(), value.trim())?;
        }
        config.synth.bands = config.bands;
        config.validate()?;
        Ok(config)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let parts: Vec<&str> = key.split('.').collect();
        match parts.as_slice() {
            ["bands", band, edge] => {
                let b: BandName = band.parse().map_err(|e: Error| Error::Config(format!("`{key}`: {e}")))?;
                let slot = &mut self.bands[b.index()];
                match *edge {
                    "lo_hz" => slot.lo_hz = parse_num(key, value)?,
                    "hi_hz" => slot.hi_hz = parse_num(key, value)?,
                    _ => return unknown(key),
                }
            }
            ["spectral", "segment_length_s"] => self.spectral.segment_length_s = parse_num(key, value)?,
            ["spectral", "overlap_fraction"] => self.spectral.overlap_fraction = parse_num(key, value)?,
            ["spectral", "window"] => {
                self.spectral.window = match value {
                    "hann" => Window::Hann,
                    other => return Err(Error::Config(format!("`{key}`: unknown window `{other}`"))),
                }
            }
            ["filter", "highpass_hz"] => self.filter.highpass_hz = parse_num(key, value)?,
            ["filter", "notch_hz"] => self.filter.notch_hz = parse_num(key, value)?,
            ["filter", "notch_q"] => self.filter.notch_q = parse_num(key, value)?,
            ["graph", "cost_levels"] => {
                self.cost_levels = value
                    .split(',')
                    .map(|v| parse_num(key, v.trim()))
                    .collect::<Result<_>>()?;
            }
            ["pca", "target_fraction"] => self.cv.pca_target_fraction = parse_num(key, value)?,
            ["model", "covariance_mode"] => {
                self.cv.covariance_mode = value.parse().map_err(|e: Error| Error::Config(format!("`{key}`: {e}")))?
            }
            ["fusion", family] => {
                let f: FeatureFamily = family.parse().map_err(|e: Error| Error::Config(format!("`{key}`: {e}")))?;
                let bands: Vec<BandName> = parse_list(key, value)?;
                self.fusion.bands.insert(f, bands);
            }
            ["synth", field] => {
                let s = &mut self.synth;
                match *field {
                    "seed" => s.seed = parse_num(key, value)?,
                    "n_subjects" => s.n_subjects = parse_num(key, value)?,
                    "trials_per_subject" => s.trials_per_subject = parse_num(key, value)?,
                    "failure_rate" => s.failure_rate = parse_num(key, value)?,
                    "label_assignment" => {
                        s.label_assignment =
                            value.parse().map_err(|e: Error| Error::Config(format!("`{key}`: {e}")))?
                    }
                    "sample_rate_hz" => s.sample_rate_hz = parse_num(key, value)?,
                    "duration_min_s" => s.duration_min_s = parse_num(key, value)?,
                    "duration_max_s" => s.duration_max_s = parse_num(key, value)?,
                    "n_channels" => s.n_channels = parse_num(key, value)?,
                    "subject_scale_jitter" => s.subject_scale_jitter = parse_num(key, value)?,
                    _ => return unknown(key),
                }
            }
            ["synth", label, class, band] => {
                let l: LabelKind = label.parse().map_err(|e: Error| Error::Config(format!("`{key}`: {e}")))?;
                let b: BandName = band.parse().map_err(|e: Error| Error::Config(format!("`{key}`: {e}")))?;
                let gains: &mut LabelGains = match l {
                    LabelKind::Digit => &mut self.synth.digit,
                    LabelKind::Sentence => &mut self.synth.sentence,
                };
                match *class {
                    "gain_succ" => gains.succ[b.index()] = parse_num(key, value)?,
                    "gain_fail" => gains.fail[b.index()] = parse_num(key, value)?,
                    _ => return unknown(key),
                }
            }
            _ => return unknown(key),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        validate_bands(&self.bands)?;
        let f = &self.filter;
        if !(f.highpass_hz > 0.0 && f.notch_hz > 0.0 && f.notch_q > 0.0) {
            return Err(Error::Config(format!(
                "filter settings must be positive: highpass {} Hz, notch {} Hz, Q {}",
                f.highpass_hz, f.notch_hz, f.notch_q
            )));
        }
        if !(0.0..1.0).contains(&self.spectral.overlap_fraction) || !(self.spectral.segment_length_s > 0.0) {
            return Err(Error::Config(format!(
                "spectral segment length must be positive and overlap in [0, 1), got {} s and {}",
                self.spectral.segment_length_s, self.spectral.overlap_fraction
            )));
        }
        if self.cost_levels.is_empty() || self.cost_levels.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::Config(format!(
                "graph.cost_levels must be a non-empty list of positive numbers, got {:?}",
                self.cost_levels
            )));
        }
        let t = self.cv.pca_target_fraction;
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Config(format!("pca.target_fraction must lie in (0, 1], got {t}")));
        }
        for family in FeatureFamily::ALL {
            if self.fusion.bands_for(family).is_empty() {
                return Err(Error::Config(format!("fusion.{family} selects no bands")));
            }
        }
        Ok(())
    }

    /// Full config text; parsing it back yields an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("write to String");
        for b in &self.bands {
            line(&format!("bands.{}.lo_hz", b.name), b.lo_hz.to_string());
            line(&format!("bands.{}.hi_hz", b.name), b.hi_hz.to_string());
        }
        line("spectral.segment_length_s", self.spectral.segment_length_s.to_string());
        line("spectral.overlap_fraction", self.spectral.overlap_fraction.to_string());
        line("spectral.window", "hann".into());
        line("filter.highpass_hz", self.filter.highpass_hz.to_string());
        line("filter.notch_hz", self.filter.notch_hz.to_string());
        line("filter.notch_q", self.filter.notch_q.to_string());
        let costs: Vec<String> = self.cost_levels.iter().map(f64::to_string).collect();
        line("graph.cost_levels", costs.join(", "));
        line("pca.target_fraction", self.cv.pca_target_fraction.to_string());
        line("model.covariance_mode", self.cv.covariance_mode.to_string());
        for family in FeatureFamily::ALL {
            let bands: Vec<&str> = self.fusion.bands_for(family).iter().map(|b| b.as_str()).collect();
            line(&format!("fusion.{family}"), bands.join(", "));
        }
        let s = &self.synth;
        line("synth.seed", s.seed.to_string());
        line("synth.n_subjects", s.n_subjects.to_string());
        line("synth.trials_per_subject", s.trials_per_subject.to_string());
        line("synth.failure_rate", s.failure_rate.to_string());
        line("synth.label_assignment", s.label_assignment.as_str().into());
        line("synth.sample_rate_hz", s.sample_rate_hz.to_string());
        line("synth.duration_min_s", s.duration_min_s.to_string());
        line("synth.duration_max_s", s.duration_max_s.to_string());
        line("synth.n_channels", s.n_channels.to_string());
        line("synth.subject_scale_jitter", s.subject_scale_jitter.to_string());
        for label in LabelKind::ALL {
            let g = s.label_gains(label);
            for band in BandName::ALL {
                line(&format!("synth.{label}.gain_succ.{band}"), g.succ[band.index()].to_string());
                line(&format!("synth.{label}.gain_fail.{band}"), g.fail[band.index()].to_string());
            }
        }
        out
    }
}

fn unknown(key: &str) -> Result<()> {
    Err(Error::Config(format!("unknown key `{key}`")))
}

impl FromStr for PipelineConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut config = PipelineConfig::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: key `{key}` repeated", i + 1)));
            }
            config
                .set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, e.to_string().trim_start_matches("config: "))))?;
        }
        config.synth.bands = config.bands;
        config.validate()?;
        Ok(config)
    }
}
