//! Seeded synthetic recordings with a planted class effect.
//!
//! Each channel is a weighted sum of band-limited sources shared across all
//! channels plus independent unit-variance white noise:
//!
//! ```text
//! x_c(t) = a_c * ( sum over label L, band b of g_{L,b}(class_L) * w_{L,c,b} * s_{L,b}(t) + e_c(t) )
//! ```
//!
//! `g` is the configured gain for the trial's class under label `L`, `w` and
//! `a` are fixed per subject, and `s_{L,b}` is white noise band-passed to `b`
//! and scaled so its variance equals that of unit white noise inside the band.
//! A larger failure gain therefore raises both coherence and power in that
//! band for failure trials.
//!
//! Randomness comes from ChaCha8 keyed by `(seed, subject, trial, stream, purpose)`,
//! so any trial can be generated alone, in any order.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::{default_bands, validate_bands, BandName, Dataset, FrequencyBand, LabelKind, Trial, DEFAULT_CHANNELS};
use crate::dsp::Sos;
use crate::error::{Error, Result};
use crate::io::{describe, write_manifest, write_signal};

/// How failure labels are spread over a subject's trials.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LabelAssignment {
    /// Exactly `round(failure_rate * trials_per_subject)` failures per subject, at seeded positions.
    #[default]
    Balanced,
    /// An independent draw per trial.
    Bernoulli,
}

impl LabelAssignment {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelAssignment::Balanced => "balanced",
            LabelAssignment::Bernoulli => "bernoulli",
        }
    }
}

impl std::str::FromStr for LabelAssignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(LabelAssignment::Balanced),
            "bernoulli" => Ok(LabelAssignment::Bernoulli),
            other => Err(Error::InvalidArgument(format!("unknown label assignment `{other}`"))),
        }
    }
}

/// Order of each half of the band-pass used to shape shared sources.
const SOURCE_FILTER_ORDER: usize = 4;
const MIXING_WEIGHT_RANGE: (f64, f64) = (0.5, 1.5);

/// Shared-source gains for one label, indexed by [`BandName::index`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelGains {
    pub succ: [f64; 4],
    pub fail: [f64; 4],
}

impl LabelGains {
    pub fn uniform(g: f64) -> Self {
        LabelGains { succ: [g; 4], fail: [g; 4] }
    }

    /// Baseline gain everywhere, `fail` gain in the listed bands.
    pub fn boosted(base: f64, fail: f64, bands: &[BandName]) -> Self {
        let mut g = LabelGains::uniform(base);
        for b in bands {
            g.fail[b.index()] = fail;
        }
        g
    }

    pub fn gain(&self, band: BandName, failure: bool) -> f64 {
        if failure {
            self.fail[band.index()]
        } else {
            self.succ[band.index()]
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_subjects: usize,
    pub trials_per_subject: usize,
    pub failure_rate: f64,
    pub label_assignment: LabelAssignment,
    pub sample_rate_hz: f64,
    pub duration_min_s: f64,
    pub duration_max_s: f64,
    pub n_channels: usize,
    pub digit: LabelGains,
    pub sentence: LabelGains,
    /// Std of the log per-channel amplitude scale of each subject.
    pub subject_scale_jitter: f64,
    pub bands: [FrequencyBand; 4],
}

impl Default for SynthConfig {
    /// Digit failures boost theta and gamma; sentence failures boost beta.
    fn default() -> Self {
        SynthConfig {
            seed: 20_240_601,
            n_subjects: 8,
            trials_per_subject: 64,
            failure_rate: 0.3,
            label_assignment: LabelAssignment::Balanced,
            sample_rate_hz: 256.0,
            duration_min_s: 3.8,
            duration_max_s: 7.7,
            n_channels: DEFAULT_CHANNELS,
            digit: LabelGains::boosted(0.5, 1.0, &[BandName::Theta, BandName::Gamma]),
            sentence: LabelGains::boosted(0.5, 1.0, &[BandName::Beta]),
            subject_scale_jitter: 0.2,
            bands: default_bands(),
        }
    }
}

impl SynthConfig {
    /// Same as the default but with no class difference in any band.
    pub fn null() -> Self {
        SynthConfig {
            digit: LabelGains::uniform(0.5),
            sentence: LabelGains::uniform(0.5),
            ..SynthConfig::default()
        }
    }

    pub fn n_trials(&self) -> usize {
        self.n_subjects * self.trials_per_subject
    }

    /// Failures per subject under [`LabelAssignment::Balanced`].
    pub fn failures_per_subject(&self) -> usize {
        (self.failure_rate * self.trials_per_subject as f64).round() as usize
    }

    pub fn label_gains(&self, label: LabelKind) -> &LabelGains {
        match label {
            LabelKind::Digit => &self.digit,
            LabelKind::Sentence => &self.sentence,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_subjects < 2 {
            return bad(format!("synth.n_subjects must be at least 2, got {}", self.n_subjects));
        }
        if !(self.failure_rate > 0.0 && self.failure_rate < 1.0) {
            return bad(format!("synth.failure_rate must lie in (0, 1), got {}", self.failure_rate));
        }
        let per = self.trials_per_subject as f64;
        let n_fail = self.failures_per_subject() as f64;
        if per * self.failure_rate < 2.0
            || per * (1.0 - self.failure_rate) < 2.0
            || (self.label_assignment == LabelAssignment::Balanced && (n_fail < 2.0 || per - n_fail < 2.0))
        {
            return bad(format!(
                "synth.trials_per_subject = {} gives fewer than 2 expected trials of a class at failure rate {}",
                self.trials_per_subject, self.failure_rate
            ));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return bad(format!("synth.sample_rate_hz must be positive, got {}", self.sample_rate_hz));
        }
        if !(self.duration_min_s >= 1.0 && self.duration_max_s >= self.duration_min_s && self.duration_max_s.is_finite()) {
            return bad(format!(
                "synth duration range [{}, {}] s must be ordered and at least 1 s",
                self.duration_min_s, self.duration_max_s
            ));
        }
        if self.n_channels < 2 {
            return bad(format!("synth.n_channels must be at least 2, got {}", self.n_channels));
        }
        for (label, gains) in [("digit", &self.digit), ("sentence", &self.sentence)] {
            if gains.succ.iter().chain(&gains.fail).any(|g| !(g.is_finite() && *g >= 0.0)) {
                return bad(format!("synth.{label} gains must be finite and non-negative"));
            }
        }
        if !(self.subject_scale_jitter >= 0.0 && self.subject_scale_jitter.is_finite()) {
            return bad(format!(
                "synth.subject_scale_jitter must be non-negative, got {}",
                self.subject_scale_jitter
            ));
        }
        validate_bands(&self.bands)?;
        for b in &self.bands {
            b.check_nyquist(self.sample_rate_hz)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
#[repr(u32)]
enum Purpose {
    TrialMeta = 1,
    Source = 2,
    Noise = 3,
    MixingWeights = 4,
    ChannelScale = 5,
    Labels = 6,
}

const WHOLE: u32 = u32::MAX;

/// Independent generator for one `(subject, trial, stream, purpose)` key.
fn rng_for(seed: u64, subject: u32, trial: u32, stream: u32, purpose: Purpose) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&subject.to_le_bytes());
    key[12..16].copy_from_slice(&trial.to_le_bytes());
    key[16..20].copy_from_slice(&stream.to_le_bytes());
    key[20..24].copy_from_slice(&(purpose as u32).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

pub fn subject_id(subject: usize) -> String {
    format!("s{:02}", subject + 1)
}

pub fn trial_id(subject: usize, trial: usize) -> String {
    format!("s{:02}_t{:03}", subject + 1, trial + 1)
}

/// Labels and length of one trial, drawn before its samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialPlan {
    pub digit_failure: bool,
    pub sentence_failure: bool,
    pub n_samples: usize,
}

impl TrialPlan {
    pub fn is_failure(&self, label: LabelKind) -> bool {
        match label {
            LabelKind::Digit => self.digit_failure,
            LabelKind::Sentence => self.sentence_failure,
        }
    }
}

/// Whether `trial` is among the subject's failures for label stream `stream`.
fn balanced_failure(config: &SynthConfig, subject: usize, trial: usize, stream: u32) -> bool {
    let mut rng = rng_for(config.seed, subject as u32, WHOLE, stream, Purpose::Labels);
    let mut order: Vec<usize> = (0..config.trials_per_subject).collect();
    order.shuffle(&mut rng);
    order[..config.failures_per_subject()].contains(&trial)
}

pub fn plan_trial(config: &SynthConfig, subject: usize, trial: usize) -> TrialPlan {
    let mut rng = rng_for(config.seed, subject as u32, trial as u32, WHOLE, Purpose::TrialMeta);
    let (digit_failure, sentence_failure) = match config.label_assignment {
        LabelAssignment::Balanced => (
            balanced_failure(config, subject, trial, 0),
            balanced_failure(config, subject, trial, 1),
        ),
        LabelAssignment::Bernoulli => (rng.random_bool(config.failure_rate), rng.random_bool(config.failure_rate)),
    };
    let duration = if config.duration_max_s > config.duration_min_s {
        rng.random_range(config.duration_min_s..=config.duration_max_s)
    } else {
        config.duration_min_s
    };
    TrialPlan {
        digit_failure,
        sentence_failure,
        n_samples: (duration * config.sample_rate_hz).round() as usize,
    }
}

/// Per-subject mixing weights `w[label][band][channel]`.
fn mixing_weights(config: &SynthConfig, subject: usize) -> [[Vec<f64>; 4]; 2] {
    let mut rng = rng_for(config.seed, subject as u32, WHOLE, WHOLE, Purpose::MixingWeights);
    let (lo, hi) = MIXING_WEIGHT_RANGE;
    let mut draw = || -> Vec<f64> { (0..config.n_channels).map(|_| rng.random_range(lo..hi)).collect() };
    [
        [draw(), draw(), draw(), draw()],
        [draw(), draw(), draw(), draw()],
    ]
}

fn channel_scales(config: &SynthConfig, subject: usize) -> Vec<f64> {
    let mut rng = rng_for(config.seed, subject as u32, WHOLE, WHOLE, Purpose::ChannelScale);
    (0..config.n_channels)
        .map(|_| (config.subject_scale_jitter * rng.sample::<f64, _>(StandardNormal)).exp())
        .collect()
}

/// White noise band-passed to `band`, with the variance unit white noise has inside it.
fn band_source(rng: &mut ChaCha8Rng, band: &FrequencyBand, n: usize, fs: f64) -> Result<Vec<f64>> {
    let white: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let shaped = Sos::butterworth_bandpass(SOURCE_FILTER_ORDER, band.lo_hz, band.hi_hz, fs)?.filtfilt(&white);
    let rms = (shaped.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let target = (2.0 * (band.hi_hz - band.lo_hz) / fs).sqrt();
    Ok(shaped.into_iter().map(|v| v * target / rms).collect())
}

/// Deterministic in `(config.seed, subject, trial)`. Samples are rounded to `f32`
/// so the trial survives a round trip through a signal file unchanged.
pub fn generate_trial(config: &SynthConfig, subject: usize, trial: usize) -> Result<Trial> {
    let plan = plan_trial(config, subject, trial);
    let n = plan.n_samples;
    let fs = config.sample_rate_hz;
    let weights = mixing_weights(config, subject);
    let scales = channel_scales(config, subject);

    let mut samples = vec![0.0; config.n_channels * n];
    for (li, label) in LabelKind::ALL.into_iter().enumerate() {
        let failure = plan.is_failure(label);
        for band in &config.bands {
            let g = config.label_gains(label).gain(band.name, failure);
            if g == 0.0 {
                continue;
            }
            let stream = (li * 4 + band.name.index()) as u32;
            let mut rng = rng_for(config.seed, subject as u32, trial as u32, stream, Purpose::Source);
            let s = band_source(&mut rng, band, n, fs)?;
            let w = &weights[li][band.name.index()];
            for (c, chunk) in samples.chunks_exact_mut(n).enumerate() {
                let k = g * w[c];
                for (x, v) in chunk.iter_mut().zip(&s) {
                    *x += k * v;
                }
            }
        }
    }
    for (c, chunk) in samples.chunks_exact_mut(n).enumerate() {
        let mut rng = rng_for(config.seed, subject as u32, trial as u32, c as u32, Purpose::Noise);
        for x in chunk.iter_mut() {
            let noise: f64 = rng.sample(StandardNormal);
            *x = ((*x + noise) * scales[c]) as f32 as f64;
        }
    }
    Trial::new(
        subject_id(subject),
        trial_id(subject, trial),
        fs,
        config.n_channels,
        samples,
        !plan.digit_failure,
        !plan.sentence_failure,
    )
}

/// Every trial, subject-major, generated in parallel.
pub fn generate_trials(config: &SynthConfig) -> Result<Vec<Trial>> {
    config.validate()?;
    (0..config.n_trials())
        .into_par_iter()
        .map(|i| generate_trial(config, i / config.trials_per_subject, i % config.trials_per_subject))
        .collect()
}

pub const SIGNAL_DIR: &str = "signals";
pub const MANIFEST_NAME: &str = "manifest.csv";

/// Writes `manifest.csv` and `signals/<trial_id>.f32` under `out_dir`.
pub fn generate_dataset(config: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<Dataset> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    let signal_dir = out_dir.join(SIGNAL_DIR);
    std::fs::create_dir_all(&signal_dir).map_err(|e| Error::io(&signal_dir, e))?;
    let descriptors = (0..config.n_trials())
        .into_par_iter()
        .map(|i| {
            let trial = generate_trial(config, i / config.trials_per_subject, i % config.trials_per_subject)?;
            let path: PathBuf = signal_dir.join(format!("{}.f32", trial.trial_id));
            write_signal(&path, &trial)?;
            Ok(describe(&trial, path))
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset::new(descriptors)?;
    write_manifest(out_dir.join(MANIFEST_NAME), &dataset)?;
    Ok(dataset)
}
