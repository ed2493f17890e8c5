//! Welch auto/cross spectra, band-averaged magnitude-squared coherence and band log-power.

use std::f64::consts::PI;
use std::ops::Range;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::data::{BandName, FrequencyBand, Trial};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Window {
    #[default]
    Hann,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

pub const MIN_SEGMENT_SAMPLES: usize = 32;

/// Welch estimator settings. Each segment has its mean removed before windowing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralConfig {
    pub segment_length_s: f64,
    pub overlap_fraction: f64,
    pub window: Window,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            segment_length_s: 1.0,
            overlap_fraction: 0.5,
            window: Window::Hann,
        }
    }
}

impl SpectralConfig {
    pub fn segment_len(&self, sample_rate_hz: f64) -> usize {
        (self.segment_length_s * sample_rate_hz).round() as usize
    }

    pub fn step(&self, sample_rate_hz: f64) -> usize {
        let seg = self.segment_len(sample_rate_hz);
        let overlap = (self.overlap_fraction * seg as f64).round() as usize;
        (seg - overlap.min(seg - 1)).max(1)
    }

    pub fn n_segments(&self, n_samples: usize, sample_rate_hz: f64) -> usize {
        let seg = self.segment_len(sample_rate_hz);
        if n_samples < seg {
            0
        } else {
            (n_samples - seg) / self.step(sample_rate_hz) + 1
        }
    }

    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::InvalidArgument(format!(
                "overlap fraction must lie in [0, 1), got {}",
                self.overlap_fraction
            )));
        }
        let seg = self.segment_len(sample_rate_hz);
        if !(self.segment_length_s > 0.0) || seg < MIN_SEGMENT_SAMPLES {
            return Err(Error::InvalidArgument(format!(
                "segments of {} s at {sample_rate_hz} Hz give {seg} samples, need at least {MIN_SEGMENT_SAMPLES}",
                self.segment_length_s
            )));
        }
        Ok(())
    }
}

/// Welch-averaged one-sided spectral density estimates for every channel and channel pair.
#[derive(Clone, Debug)]
pub struct Spectra {
    pub freqs: Vec<f64>,
    pub n_segments: usize,
    n_channels: usize,
    /// `[channel][bin]`, flattened.
    auto: Vec<f64>,
    /// `[pair(i < j)][bin]`, flattened in row-major upper-triangle order.
    cross: Vec<Complex64>,
}

fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

impl Spectra {
    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_bins(&self) -> usize {
        self.freqs.len()
    }

    pub fn auto(&self, ch: usize) -> &[f64] {
        let nb = self.n_bins();
        &self.auto[ch * nb..(ch + 1) * nb]
    }

    /// `S_ij` at `bin`; `S_ji = conj(S_ij)` and `S_ii` is the auto-spectrum.
    pub fn cross(&self, i: usize, j: usize, bin: usize) -> Complex64 {
        let nb = self.n_bins();
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => Complex64::new(self.auto[i * nb + bin], 0.0),
            std::cmp::Ordering::Less => self.cross[pair_index(self.n_channels, i, j) * nb + bin],
            std::cmp::Ordering::Greater => self.cross[pair_index(self.n_channels, j, i) * nb + bin].conj(),
        }
    }

    /// Bins whose frequency lies in the band's half-open range.
    pub fn band_bins(&self, band: &FrequencyBand) -> Result<Range<usize>> {
        let start = self.freqs.iter().position(|&f| f >= band.lo_hz);
        let end = self.freqs.iter().position(|&f| f >= band.hi_hz).unwrap_or(self.freqs.len());
        match start {
            Some(s) if s < end => Ok(s..end),
            _ => Err(Error::EmptyBand(band.name.to_string())),
        }
    }
}

pub fn welch_spectra(trial: &Trial, config: &SpectralConfig) -> Result<Spectra> {
    let fs = trial.sample_rate_hz;
    config.validate(fs)?;
    let seg = config.segment_len(fs);
    let step = config.step(fs);
    let n_segments = config.n_segments(trial.n_samples(), fs);
    if n_segments < 2 {
        return Err(Error::TooFewSegments {
            n_samples: trial.n_samples(),
            segment_len: seg,
            segments: n_segments,
        });
    }

    let n_ch = trial.n_channels();
    let n_bins = seg / 2 + 1;
    let window = config.window.coefficients(seg);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(seg);

    // density scaling, one-sided: interior bins count twice
    let norm = 1.0 / (fs * window.iter().map(|w| w * w).sum::<f64>() * n_segments as f64);
    let bin_scale: Vec<f64> = (0..n_bins)
        .map(|k| {
            let nyquist_bin = seg.is_multiple_of(2) && k == seg / 2;
            if k == 0 || nyquist_bin { norm } else { 2.0 * norm }
        })
        .collect();

    let n_pairs = n_ch * (n_ch - 1) / 2;
    let mut auto = vec![0.0; n_ch * n_bins];
    let mut cross = vec![Complex64::new(0.0, 0.0); n_pairs * n_bins];
    let mut spectra = vec![Complex64::new(0.0, 0.0); n_ch * seg];

    for s in 0..n_segments {
        let start = s * step;
        for (c, buf) in spectra.chunks_exact_mut(seg).enumerate() {
            let x = &trial.channel(c)[start..start + seg];
            let mean = x.iter().sum::<f64>() / seg as f64;
            for ((b, &v), &w) in buf.iter_mut().zip(x).zip(&window) {
                *b = Complex64::new((v - mean) * w, 0.0);
            }
            fft.process(buf);
        }
        for c in 0..n_ch {
            let xc = &spectra[c * seg..c * seg + n_bins];
            for (k, a) in auto[c * n_bins..(c + 1) * n_bins].iter_mut().enumerate() {
                *a += xc[k].norm_sqr() * bin_scale[k];
            }
        }
        let mut p = 0;
        for i in 0..n_ch {
            let xi = &spectra[i * seg..i * seg + n_bins];
            for j in i + 1..n_ch {
                let xj = &spectra[j * seg..j * seg + n_bins];
                let acc = &mut cross[p * n_bins..(p + 1) * n_bins];
                for k in 0..n_bins {
                    acc[k] += xi[k] * xj[k].conj() * bin_scale[k];
                }
                p += 1;
            }
        }
    }

    Ok(Spectra {
        freqs: (0..n_bins).map(|k| k as f64 * fs / seg as f64).collect(),
        n_segments,
        n_channels: n_ch,
        auto,
        cross,
    })
}

/// Symmetric band-averaged coherence matrix with unit diagonal and entries in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceMatrix {
    pub band: BandName,
    n: usize,
    values: Vec<f64>,
}

impl CoherenceMatrix {
    /// Row-major values; checked for symmetry, unit diagonal and range.
    pub fn from_values(band: BandName, n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: values.len(),
            });
        }
        for i in 0..n {
            if values[i * n + i] != 1.0 {
                return Err(Error::InvalidArgument(format!("diagonal entry {i} is not 1")));
            }
            for j in i + 1..n {
                let v = values[i * n + j];
                if v != values[j * n + i] {
                    return Err(Error::InvalidArgument(format!("entry ({i}, {j}) is not symmetric")));
                }
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidArgument(format!("entry ({i}, {j}) = {v} outside [0, 1]")));
                }
            }
        }
        Ok(CoherenceMatrix { band, n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.n, self.n, &self.values)
    }

    /// Mean of the strictly upper-triangular entries.
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.n;
        let mut sum = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                sum += self.get(i, j);
            }
        }
        sum / (n * (n - 1) / 2) as f64
    }
}

fn band_power(spectra: &Spectra, bins: &Range<usize>, ch: usize) -> f64 {
    let auto = spectra.auto(ch);
    auto[bins.clone()].iter().sum::<f64>() / bins.len() as f64
}

fn check_band_power(spectra: &Spectra, bins: &Range<usize>, band: BandName) -> Result<Vec<f64>> {
    (0..spectra.n_channels())
        .map(|ch| {
            let p = band_power(spectra, bins, ch);
            if p > 0.0 && p.is_finite() {
                Ok(p)
            } else {
                Err(Error::ZeroPower {
                    channel: ch,
                    band: band.to_string(),
                })
            }
        })
        .collect()
}

/// Mean over in-band bins of `|S_xy|^2 / (S_xx S_yy)` for every channel pair.
pub fn coherence_from_spectra(spectra: &Spectra, band: &FrequencyBand) -> Result<CoherenceMatrix> {
    let bins = spectra.band_bins(band)?;
    check_band_power(spectra, &bins, band.name)?;
    let n = spectra.n_channels();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        let ai = spectra.auto(i);
        for j in i + 1..n {
            let aj = spectra.auto(j);
            let mut sum = 0.0;
            for k in bins.clone() {
                let denom = ai[k] * aj[k];
                if denom > 0.0 {
                    sum += (spectra.cross(i, j, k).norm_sqr() / denom).min(1.0);
                }
            }
            let msc = sum / bins.len() as f64;
            values[i * n + j] = msc;
            values[j * n + i] = msc;
        }
    }
    Ok(CoherenceMatrix {
        band: band.name,
        n,
        values,
    })
}

pub fn coherence_matrix(trial: &Trial, band: &FrequencyBand, config: &SpectralConfig) -> Result<CoherenceMatrix> {
    band.check_nyquist(trial.sample_rate_hz)?;
    coherence_from_spectra(&welch_spectra(trial, config)?, band)
}

/// Natural log of mean in-band power spectral density, per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct LogPowerVector {
    pub band: BandName,
    pub values: Vec<f64>,
}

pub fn log_power_from_spectra(spectra: &Spectra, band: &FrequencyBand) -> Result<LogPowerVector> {
    let bins = spectra.band_bins(band)?;
    let powers = check_band_power(spectra, &bins, band.name)?;
    Ok(LogPowerVector {
        band: band.name,
        values: powers.into_iter().map(f64::ln).collect(),
    })
}

pub fn band_log_power(trial: &Trial, band: &FrequencyBand, config: &SpectralConfig) -> Result<LogPowerVector> {
    band.check_nyquist(trial.sample_rate_hz)?;
    log_power_from_spectra(&welch_spectra(trial, config)?, band)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::default_bands;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    const FS: f64 = 256.0;

    fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn trial(n_ch: usize, samples: Vec<f64>) -> Trial {
        Trial::new("s", "t", FS, n_ch, samples, true, true).unwrap()
    }

    #[test]
    fn identical_channels_have_equal_auto_and_cross() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = noise(&mut rng, 1024);
        let t = trial(2, [x.clone(), x].concat());
        let s = welch_spectra(&t, &SpectralConfig::default()).unwrap();
        for k in 0..s.n_bins() {
            let sxy = s.cross(0, 1, k);
            assert!((sxy.re - s.auto(0)[k]).abs() <= 1e-12 * s.auto(0)[k].max(1e-300));
            assert!(sxy.im.abs() <= 1e-12 * s.auto(0)[k].max(1e-300));
        }
    }

    #[test]
    fn sine_peak_at_10hz() {
        let x: Vec<f64> = (0..1024).map(|i| (2.0 * PI * 10.0 * i as f64 / FS).sin()).collect();
        let s = welch_spectra(&trial(1, x), &SpectralConfig::default()).unwrap();
        let auto = s.auto(0);
        let argmax = (0..auto.len()).max_by(|&a, &b| auto[a].total_cmp(&auto[b])).unwrap();
        assert_eq!(s.freqs[argmax], 10.0);
        assert_eq!(s.freqs[1] - s.freqs[0], 1.0);
        assert_eq!(s.n_segments, 7);
    }

    #[test]
    fn conjugate_symmetry_and_nonnegative_auto() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = trial(3, noise(&mut rng, 3 * 700));
        let s = welch_spectra(&t, &SpectralConfig::default()).unwrap();
        for k in 0..s.n_bins() {
            for i in 0..3 {
                assert!(s.auto(i)[k] >= 0.0);
                for j in 0..3 {
                    assert_eq!(s.cross(i, j, k), s.cross(j, i, k).conj());
                }
            }
        }
    }

    #[test]
    fn too_few_segments() {
        let t = trial(1, vec![1.0; 300]);
        assert!(matches!(
            welch_spectra(&t, &SpectralConfig::default()),
            Err(Error::TooFewSegments { segments: 1, .. })
        ));
    }

    #[test]
    fn copied_channel_is_fully_coherent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = noise(&mut rng, 2048);
        let b = noise(&mut rng, 2048);
        let t = trial(3, [a.clone(), b, a].concat());
        for band in default_bands() {
            let c = coherence_matrix(&t, &band, &SpectralConfig::default()).unwrap();
            assert!((c.get(0, 2) - 1.0).abs() < 1e-9);
            assert!(c.get(0, 1) < 0.9);
        }
    }

    #[test]
    fn zero_channel_is_named() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = trial(3, [noise(&mut rng, 1024), vec![0.0; 1024], noise(&mut rng, 1024)].concat());
        let band = default_bands()[0];
        let cfg = SpectralConfig::default();
        assert!(matches!(coherence_matrix(&t, &band, &cfg), Err(Error::ZeroPower { channel: 1, .. })));
        assert!(matches!(band_log_power(&t, &band, &cfg), Err(Error::ZeroPower { channel: 1, .. })));
    }

    #[test]
    fn empty_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = trial(1, noise(&mut rng, 1024));
        let band = FrequencyBand::new(BandName::Theta, 4.2, 4.8).unwrap();
        assert!(matches!(
            coherence_matrix(&t, &band, &SpectralConfig::default()),
            Err(Error::EmptyBand(_))
        ));
    }

    #[test]
    fn log_power_scales_by_ln4() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = noise(&mut rng, 4 * 1024);
        let t = trial(4, x.clone());
        let t2 = trial(4, x.iter().map(|v| 2.0 * v).collect());
        let cfg = SpectralConfig::default();
        for band in default_bands() {
            let a = band_log_power(&t, &band, &cfg).unwrap();
            let b = band_log_power(&t2, &band, &cfg).unwrap();
            for (u, v) in a.values.iter().zip(&b.values) {
                assert!((v - u - 4f64.ln()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sine_log_power_alpha_exceeds_beta() {
        // Welch oracle on the analytic signal: the sine lands on bin 10 with energy |W(0)|^2
        // while beta bins only see Hann sidelobe leakage (zero at every integer offset > 1).
        let x: Vec<f64> = (0..2048).map(|i| (2.0 * PI * 10.0 * i as f64 / FS).sin()).collect();
        let t = trial(1, x);
        let cfg = SpectralConfig::default();
        let bands = default_bands();
        let alpha = band_log_power(&t, &bands[1], &cfg).unwrap().values[0];
        let beta = band_log_power(&t, &bands[2], &cfg).unwrap().values[0];
        assert!(alpha - beta >= 2.0, "{alpha} vs {beta}");
    }
}
