use std::collections::BTreeMap;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use cogconn::config::PipelineConfig;
use cogconn::data::{default_bands, BandName, FeatureFamily, Trial};
use cogconn::dsp::{coherence_matrix, welch_spectra, CoherenceMatrix, Sos, SpectralConfig};
use cogconn::graphnet::{build_graph, node_apls, DEFAULT_COST_LEVELS};
use cogconn::io::{load_manifest, load_trial};
use cogconn::learn::{fit_gaussian_llr, fit_pca, fuse, project, score_llr, CovarianceMode, FusionSpec};
use cogconn::synth::{generate_dataset, generate_trial, SynthConfig};

const FS: f64 = 256.0;

fn mixed_trial(seed: u64, channels: usize, seconds: f64) -> Trial {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = (seconds * FS) as usize;
    let shared: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
    let mut samples = Vec::with_capacity(channels * n);
    for _ in 0..channels {
        let w: f64 = r.random_range(0.0..2.0);
        samples.extend(shared.iter().map(|s| w * s + r.sample::<f64, _>(StandardNormal)));
    }
    Trial::new("s01", "s01_t001", FS, channels, samples, true, true).unwrap()
}

fn random_coherence(seed: u64, n: usize, ties: bool) -> CoherenceMatrix {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![1.0; n * n];
    for a in 0..n {
        for b in a + 1..n {
            let v: f64 = if ties { r.random_range(0..8) as f64 / 8.0 } else { r.random_range(0.0..1.0) };
            values[a * n + b] = v;
            values[b * n + a] = v;
        }
    }
    CoherenceMatrix::from_values(BandName::Alpha, n, values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coherence_matrix_invariants(seed in 0u64..10_000, channels in 2usize..10, seconds in 3.0f64..6.0) {
        let t = mixed_trial(seed, channels, seconds);
        for band in default_bands() {
            let c = coherence_matrix(&t, &band, &SpectralConfig::default()).unwrap();
            for a in 0..channels {
                prop_assert_eq!(c.get(a, a), 1.0);
                for b in 0..channels {
                    prop_assert_eq!(c.get(a, b), c.get(b, a));
                    prop_assert!((0.0..=1.0).contains(&c.get(a, b)));
                }
            }
        }
    }

    #[test]
    fn coherence_ignores_channel_scale(seed in 0u64..10_000, log_scale in -4.0f64..4.0, channel in 0usize..6) {
        let t = mixed_trial(seed, 6, 4.0);
        let n = t.n_samples();
        let mut samples = t.samples().to_vec();
        for v in &mut samples[channel * n..(channel + 1) * n] {
            *v *= 10f64.powf(log_scale);
        }
        let scaled = t.with_samples(samples).unwrap();
        for band in default_bands() {
            let a = coherence_matrix(&t, &band, &SpectralConfig::default()).unwrap();
            let b = coherence_matrix(&scaled, &band, &SpectralConfig::default()).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn auto_spectra_non_negative(seed in 0u64..10_000, offset in -100.0f64..100.0) {
        let t = mixed_trial(seed, 3, 4.0);
        let shifted = t.with_samples(t.samples().iter().map(|v| v + offset).collect()).unwrap();
        let s = welch_spectra(&shifted, &SpectralConfig::default()).unwrap();
        for ch in 0..3 {
            prop_assert!(s.auto(ch).iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn filtfilt_commutes_with_time_reversal(seed in 0u64..10_000, seconds in 2.0f64..8.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..(seconds * FS) as usize).map(|_| r.sample(StandardNormal)).collect();
        let hp = Sos::butterworth_highpass(4, 0.1, FS).unwrap();
        let mut reversed = x.clone();
        reversed.reverse();
        let mut forward = hp.filtfilt(&x);
        forward.reverse();
        for (a, b) in forward.iter().zip(hp.filtfilt(&reversed)) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }
}

proptest! {
    #[test]
    fn edge_count_grows_with_cost(seed in 0u64..10_000, ties in any::<bool>()) {
        let c = random_coherence(seed, 64, ties);
        let counts: Vec<usize> = DEFAULT_COST_LEVELS.iter().map(|&k| build_graph(&c, k).unwrap().edges().len()).collect();
        prop_assert_eq!(counts, vec![192, 208, 224, 240]);
    }

    #[test]
    fn kept_edges_dominate_dropped(seed in 0u64..10_000, ties in any::<bool>(), cost in 1.0f64..8.0) {
        let c = random_coherence(seed, 32, ties);
        let g = build_graph(&c, cost).unwrap();
        let kept: std::collections::HashSet<_> = g.edges().iter().copied().collect();
        let (mut min_kept, mut max_dropped) = (f64::INFINITY, f64::NEG_INFINITY);
        for a in 0..32 {
            for b in a + 1..32 {
                if kept.contains(&(a, b)) {
                    min_kept = min_kept.min(c.get(a, b));
                } else {
                    max_dropped = max_dropped.max(c.get(a, b));
                }
            }
        }
        prop_assert!(min_kept >= max_dropped);
    }

    #[test]
    fn apl_at_least_one(seed in 0u64..10_000, cost in 0.5f64..6.0) {
        let c = random_coherence(seed, 16, false);
        let g = build_graph(&c, cost).unwrap();
        let apls = node_apls(&g);
        for &(v, apl) in &apls.apl {
            prop_assert!(apl >= 1.0);
            // APL is exactly 1 when v touches its whole component
            let mut seen = [false; 16];
            let mut stack = vec![v];
            seen[v] = true;
            while let Some(u) = stack.pop() {
                for &w in g.neighbors(u) {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            let component = seen.iter().filter(|&&s| s).count() - 1;
            prop_assert_eq!(apl == 1.0, g.neighbors(v).len() == component);
        }
    }

    #[test]
    fn pooled_llr_translation_invariant(seed in 0u64..10_000, shift in prop::collection::vec(-50.0f64..50.0, 3)) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = 30;
        let labels: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let x = DMatrix::from_fn(n, 3, |i, _| r.sample::<f64, _>(StandardNormal) + if labels[i] { 0.5 } else { 0.0 });
        let moved = DMatrix::from_fn(n, 3, |i, j| x[(i, j)] + shift[j]);
        let a = fit_gaussian_llr(&x, &labels, CovarianceMode::PooledTotal).unwrap();
        let b = fit_gaussian_llr(&moved, &labels, CovarianceMode::PooledTotal).unwrap();
        for i in 0..n {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let moved_row: Vec<f64> = moved.row(i).iter().copied().collect();
            prop_assert!((score_llr(&a, &row).unwrap() - score_llr(&b, &moved_row).unwrap()).abs() <= 1e-9);
        }
    }

    #[test]
    fn pca_reconstruction_improves_with_fraction(seed in 0u64..10_000, d in 2usize..12) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mixing = DMatrix::from_fn(d, d, |_, _| r.sample::<f64, _>(StandardNormal));
        let x = DMatrix::from_fn(40, d, |_, _| r.sample::<f64, _>(StandardNormal)) * mixing;
        let mut last = f64::INFINITY;
        for fraction in [0.3, 0.5, 0.7, 0.9, 0.99, 1.0] {
            let model = fit_pca(&x, fraction).unwrap();
            let rebuilt = project(&model, &x).unwrap() * model.components.transpose();
            let mut err = 0.0;
            for i in 0..x.nrows() {
                for j in 0..d {
                    err += (x[(i, j)] - model.mean[j] - rebuilt[(i, j)]).powi(2);
                }
            }
            prop_assert!(err <= last * (1.0 + 1e-12) + 1e-12);
            last = err;
        }
    }

    #[test]
    fn fusion_order_independent(seed in 0u64..10_000) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut keys = Vec::new();
        for family in FeatureFamily::ALL {
            for band in BandName::ALL {
                keys.push((family, band));
            }
        }
        let values: Vec<Vec<f64>> = keys.iter().map(|_| (0..10).map(|_| r.random_range(-1e3..1e3)).collect()).collect();
        let forward: BTreeMap<_, _> = keys.iter().copied().zip(values.iter().cloned()).collect();
        let backward: BTreeMap<_, _> = keys.iter().rev().copied().zip(values.iter().rev().cloned()).collect();
        let spec = FusionSpec::default();
        let a = fuse(&forward, &spec, &FeatureFamily::ALL).unwrap();
        let b = fuse(&backward, &spec, &FeatureFamily::ALL).unwrap();
        let naive: Vec<f64> = (0..10)
            .map(|i| keys.iter().rev().zip(values.iter().rev())
                .filter(|((f, band), _)| spec.bands_for(*f).contains(band))
                .map(|(_, v)| v[i])
                .sum())
            .collect();
        for ((x, y), z) in a.iter().zip(&b).zip(&naive) {
            prop_assert!((x - y).abs() <= 1e-12 && (x - z).abs() <= 1e-9);
        }
    }

    #[test]
    fn config_text_round_trips(seed in any::<u64>(), costs in prop::collection::vec(4.0f64..9.0, 1..5), jitter in 0.0f64..1.0) {
        let config = PipelineConfig::default()
            .with_overrides([
                ("synth.seed", seed.to_string().as_str()),
                ("synth.subject_scale_jitter", jitter.to_string().as_str()),
                ("graph.cost_levels", costs.iter().map(f64::to_string).collect::<Vec<_>>().join(",").as_str()),
            ])
            .unwrap();
        prop_assert_eq!(config.to_text().parse::<PipelineConfig>().unwrap(), config);
    }
}

#[test]
fn dataset_round_trip_is_bit_exact() {
    let config = SynthConfig {
        seed: 3,
        n_subjects: 2,
        trials_per_subject: 7,
        n_channels: 5,
        duration_min_s: 3.8,
        duration_max_s: 4.1,
        ..SynthConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let written = generate_dataset(&config, dir.path()).unwrap();
    let loaded = load_manifest(dir.path().join("manifest.csv")).unwrap();
    assert_eq!(loaded.trials.len(), written.trials.len());
    for (i, desc) in loaded.trials.iter().enumerate() {
        let trial = load_trial(desc).unwrap();
        let fresh = generate_trial(&config, i / 7, i % 7).unwrap();
        assert_eq!(trial, fresh);
    }

    // a second run writes identical bytes
    let again = tempfile::tempdir().unwrap();
    generate_dataset(&config, again.path()).unwrap();
    for name in ["manifest.csv", "signals/s02_t007.f32"] {
        let a = std::fs::read(dir.path().join(name)).unwrap();
        let b = std::fs::read(again.path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

fn gamma_class_gap(config: &SynthConfig) -> f64 {
    let gamma = default_bands()[3];
    let (mut fail, mut succ) = (Vec::new(), Vec::new());
    for t in cogconn::synth::generate_trials(config).unwrap() {
        let m = coherence_matrix(&t, &gamma, &SpectralConfig::default()).unwrap().mean_off_diagonal();
        if t.digit_correct { succ.push(m) } else { fail.push(m) }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    mean(&fail) - mean(&succ)
}

#[test]
fn theta_effect_stays_out_of_gamma() {
    let base = SynthConfig {
        n_subjects: 2,
        trials_per_subject: 16,
        n_channels: 16,
        failure_rate: 0.5,
        duration_min_s: 3.8,
        duration_max_s: 4.5,
        ..SynthConfig::null()
    };
    let null_spread = (0..20)
        .map(|i| gamma_class_gap(&SynthConfig { seed: 500 + i, ..base.clone() }).abs())
        .fold(0.0, f64::max);
    let planted = SynthConfig {
        digit: cogconn::synth::LabelGains::boosted(0.5, 1.5, &[BandName::Theta]),
        ..base
    };
    let gap = gamma_class_gap(&planted).abs();
    assert!(gap < null_spread, "gamma gap {gap} vs null spread {null_spread}");
}
