//! IIR preprocessing filters as cascades of second-order sections, applied zero-phase.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::data::Trial;
use crate::error::{Error, Result};

/// Normalized biquad: `b` numerator, `a` = `[a1, a2]` with `a0 = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn normalized(b: [f64; 3], a: [f64; 3]) -> Self {
        Biquad {
            b: [b[0] / a[0], b[1] / a[0], b[2] / a[0]],
            a: [a[1] / a[0], a[2] / a[0]],
        }
    }

    fn highpass(w0: f64, q: f64) -> Self {
        let (s, c) = w0.sin_cos();
        let alpha = s / (2.0 * q);
        Biquad::normalized(
            [(1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0],
            [1.0 + alpha, -2.0 * c, 1.0 - alpha],
        )
    }

    fn lowpass(w0: f64, q: f64) -> Self {
        let (s, c) = w0.sin_cos();
        let alpha = s / (2.0 * q);
        Biquad::normalized(
            [(1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0],
            [1.0 + alpha, -2.0 * c, 1.0 - alpha],
        )
    }

    fn notch(w0: f64, q: f64) -> Self {
        let (s, c) = w0.sin_cos();
        let alpha = s / (2.0 * q);
        Biquad::normalized([1.0, -2.0 * c, 1.0], [1.0 + alpha, -2.0 * c, 1.0 - alpha])
    }

    /// DC gain.
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        (self.b[0] + self.b[1] * z1 + self.b[2] * z2) / (1.0 + self.a[0] * z1 + self.a[1] * z2)
    }
}

/// A cascade of biquads.
#[derive(Clone, Debug, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

fn butterworth_qs(order: usize) -> Vec<f64> {
    assert!(order >= 2 && order.is_multiple_of(2), "even Butterworth orders only");
    (1..=order / 2)
        .map(|k| {
            let theta = PI * (2 * k - 1) as f64 / (2 * order) as f64;
            1.0 / (2.0 * theta.cos())
        })
        .collect()
}

fn check_below_nyquist(what: &'static str, freq: f64, sample_rate_hz: f64) -> Result<()> {
    let nyquist = sample_rate_hz / 2.0;
    if !(freq > 0.0) {
        return Err(Error::InvalidArgument(format!("{what} must be positive, got {freq}")));
    }
    if freq >= nyquist {
        return Err(Error::AboveNyquist {
            what,
            value: freq,
            nyquist,
        });
    }
    Ok(())
}

impl Sos {
    /// Even-order digital Butterworth highpass (bilinear transform, prewarped at the cutoff).
    pub fn butterworth_highpass(order: usize, cutoff_hz: f64, sample_rate_hz: f64) -> Result<Self> {
        check_below_nyquist("highpass cutoff", cutoff_hz, sample_rate_hz)?;
        let w0 = 2.0 * PI * cutoff_hz / sample_rate_hz;
        let sections = butterworth_qs(order).into_iter().map(|q| Biquad::highpass(w0, q)).collect();
        Ok(Sos { sections })
    }

    pub fn butterworth_lowpass(order: usize, cutoff_hz: f64, sample_rate_hz: f64) -> Result<Self> {
        check_below_nyquist("lowpass cutoff", cutoff_hz, sample_rate_hz)?;
        let w0 = 2.0 * PI * cutoff_hz / sample_rate_hz;
        let sections = butterworth_qs(order).into_iter().map(|q| Biquad::lowpass(w0, q)).collect();
        Ok(Sos { sections })
    }

    /// Highpass at `lo_hz` cascaded with lowpass at `hi_hz`.
    pub fn butterworth_bandpass(order: usize, lo_hz: f64, hi_hz: f64, sample_rate_hz: f64) -> Result<Self> {
        if lo_hz >= hi_hz {
            return Err(Error::InvalidArgument(format!("bandpass needs lo < hi, got {lo_hz} >= {hi_hz}")));
        }
        let mut sos = Sos::butterworth_highpass(order, lo_hz, sample_rate_hz)?;
        sos.sections.extend(Sos::butterworth_lowpass(order, hi_hz, sample_rate_hz)?.sections);
        Ok(sos)
    }

    pub fn notch(center_hz: f64, q: f64, sample_rate_hz: f64) -> Result<Self> {
        check_below_nyquist("notch center", center_hz, sample_rate_hz)?;
        if !(q > 0.0) {
            return Err(Error::InvalidArgument(format!("notch Q must be positive, got {q}")));
        }
        let w0 = 2.0 * PI * center_hz / sample_rate_hz;
        Ok(Sos {
            sections: vec![Biquad::notch(w0, q)],
        })
    }

    /// Single-pass magnitude response at `freq_hz`.
    pub fn magnitude_response(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate_hz;
        self.sections.iter().map(|s| s.response(w)).product::<Complex64>().norm()
    }

    /// Largest pole radius over all sections.
    fn max_pole_radius(&self) -> f64 {
        self.sections
            .iter()
            .map(|s| {
                let disc = s.a[0] * s.a[0] - 4.0 * s.a[1];
                if disc < 0.0 {
                    s.a[1].sqrt()
                } else {
                    let r = disc.sqrt();
                    ((-s.a[0] + r) / 2.0).abs().max(((-s.a[0] - r) / 2.0).abs())
                }
            })
            .fold(0.0, f64::max)
    }

    /// Samples until the slowest pole's envelope decays below 1%.
    pub fn effective_length(&self) -> usize {
        let r = self.max_pole_radius();
        if r <= 0.0 {
            return 2 * self.sections.len() + 1;
        }
        ((100f64).ln() / -r.ln()).ceil() as usize
    }

    /// Edge padding used by [`Sos::filtfilt`]: three effective lengths, capped by the signal.
    pub fn pad_len(&self, n: usize) -> usize {
        (3 * self.effective_length()).min(n.saturating_sub(1))
    }

    /// Per-section transposed direct-form II states for a unit step at steady state.
    fn step_states(&self) -> Vec<[f64; 2]> {
        let mut gain = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let y = s.dc_gain();
                let z2 = s.b[2] - s.a[1] * y;
                let z1 = s.b[1] - s.a[0] * y + z2;
                let state = [z1 * gain, z2 * gain];
                gain *= y;
                state
            })
            .collect()
    }

    /// Runs the cascade over `L` interleaved signals at once, each starting at
    /// steady state for its own first sample.
    fn filter_lanes<const L: usize>(&self, x: &mut [[f64; L]]) {
        let Some(&initial) = x.first() else { return };
        let zi = self.step_states();
        for (s, z) in self.sections.iter().zip(zi) {
            let mut z1 = initial.map(|v| z[0] * v);
            let mut z2 = initial.map(|v| z[1] * v);
            for frame in x.iter_mut() {
                for l in 0..L {
                    let input = frame[l];
                    let y = s.b[0] * input + z1[l];
                    z1[l] = s.b[1] * input - s.a[0] * y + z2[l];
                    z2[l] = s.b[2] * input - s.a[1] * y;
                    frame[l] = y;
                }
            }
        }
    }

    fn forward_backward<const L: usize>(&self, ext: &mut [[f64; L]]) {
        self.filter_lanes(ext);
        ext.reverse();
        self.filter_lanes(ext);
        ext.reverse();
    }

    /// Zero-phase filtering.
    ///
    /// Each edge is extended by a mirror reflection that a raised-cosine taper fades
    /// into the mean of the reflected samples, and both passes start from steady
    /// state at the first padded value. The
    /// forward-backward and backward-forward results are averaged, which makes
    /// filtering a time-reversed signal yield exactly the time-reversed output.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let [y] = self.filtfilt_lanes([x]);
        y
    }

    /// [`Sos::filtfilt`] on `L` equal-length signals, interleaved so the
    /// recursions overlap. Each output equals the single-signal result exactly.
    fn filtfilt_lanes<const L: usize>(&self, xs: [&[f64]; L]) -> [Vec<f64>; L] {
        let n = xs[0].len();
        debug_assert!(xs.iter().all(|x| x.len() == n));
        if n < 2 {
            return xs.map(|x| x.to_vec());
        }
        let pad = self.pad_len(n);
        let taper: Vec<f64> = (0..=pad)
            .map(|i| 0.5 + 0.5 * (PI * i as f64 / (pad + 1) as f64).cos())
            .collect();
        let mut ext = vec![[0.0; L]; n + 2 * pad];
        for (l, x) in xs.iter().enumerate() {
            let head = x[..=pad].iter().sum::<f64>() / (pad + 1) as f64;
            let tail = x[n - 1 - pad..].iter().sum::<f64>() / (pad + 1) as f64;
            for i in 1..=pad {
                ext[pad - i][l] = head + taper[i] * (x[i] - head);
                ext[pad + n - 1 + i][l] = tail + taper[i] * (x[n - 1 - i] - tail);
            }
            for (k, &v) in x.iter().enumerate() {
                ext[pad + k][l] = v;
            }
        }

        let mut fb = ext.clone();
        self.forward_backward(&mut fb);
        let mut bf = ext;
        bf.reverse();
        self.forward_backward(&mut bf);
        bf.reverse();

        std::array::from_fn(|l| {
            fb[pad..pad + n]
                .iter()
                .zip(&bf[pad..pad + n])
                .map(|(a, b)| 0.5 * (a[l] + b[l]))
                .collect()
        })
    }

    /// Applies [`Sos::filtfilt`] to every channel of a trial.
    pub fn apply(&self, trial: &Trial) -> Result<Trial> {
        const LANES: usize = 4;
        let channels: Vec<&[f64]> = trial.channels().collect();
        let mut out = Vec::with_capacity(trial.samples().len());
        let mut blocks = channels.chunks_exact(LANES);
        for block in &mut blocks {
            let lanes: [&[f64]; LANES] = block.try_into().expect("exact chunk");
            for y in self.filtfilt_lanes(lanes) {
                out.extend(y);
            }
        }
        for ch in blocks.remainder() {
            out.extend(self.filtfilt(ch));
        }
        trial.with_samples(out)
    }
}

pub const HIGHPASS_ORDER: usize = 4;

/// Zero-phase 4th-order Butterworth highpass.
pub fn highpass_filter(trial: &Trial, cutoff_hz: f64) -> Result<Trial> {
    Sos::butterworth_highpass(HIGHPASS_ORDER, cutoff_hz, trial.sample_rate_hz)?.apply(trial)
}

/// Zero-phase biquad notch.
pub fn notch_filter(trial: &Trial, center_hz: f64, q: f64) -> Result<Trial> {
    Sos::notch(center_hz, q, trial.sample_rate_hz)?.apply(trial)
}
