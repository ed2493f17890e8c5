//! End-to-end stages shared by the command-line tool and the bindings:
//! feature extraction, cross-validated evaluation and class curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::config::{FilterConfig, PipelineConfig};
use crate::connstruct::{class_mean_curves, eigen_spectrum, rank_zscore, write_rank_curves, ClassCurves};
use crate::data::{BandName, Dataset, FeatureFamily, LabelKind, Trial};
use crate::dsp::{coherence_from_spectra, log_power_from_spectra, welch_spectra, Sos};
use crate::dsp::filter::HIGHPASS_ORDER;
use crate::error::{Error, Result};
use crate::eval::{build_report, evaluate_scores, per_subject_auc, EvalCell, FusionCell, Report, ReportRow};
use crate::graphnet::variability_features;
use crate::io::{load_trial, FeatureRecord};
use crate::learn::{container, fuse, loso_cv, CellKey, CvResult};

/// Zero-phase highpass followed by the line-noise notch.
pub fn preprocess(trial: &Trial, filter: &FilterConfig) -> Result<Trial> {
    let fs = trial.sample_rate_hz;
    let hp = Sos::butterworth_highpass(HIGHPASS_ORDER, filter.highpass_hz, fs)?;
    let notch = Sos::notch(filter.notch_hz, filter.notch_q, fs)?;
    notch.apply(&hp.apply(trial)?)
}

/// All three families for every band, family-major.
pub fn extract_trial(trial: &Trial, config: &PipelineConfig) -> Result<Vec<FeatureRecord>> {
    let run = || -> Result<Vec<FeatureRecord>> {
        for band in &config.bands {
            band.check_nyquist(trial.sample_rate_hz)?;
        }
        let filtered = preprocess(trial, &config.filter)?;
        let spectra = welch_spectra(&filtered, &config.spectral)?;
        let mut eigen = Vec::with_capacity(4);
        let mut graph = Vec::with_capacity(4);
        let mut power = Vec::with_capacity(4);
        for band in &config.bands {
            let c = coherence_from_spectra(&spectra, band)?;
            eigen.push(eigen_spectrum(&c)?.eigenvalues);
            graph.push(variability_features(&c, &config.cost_levels)?.values);
            power.push(log_power_from_spectra(&spectra, band)?.values);
        }
        let record = |family, band: BandName, values| FeatureRecord {
            subject_id: trial.subject_id.clone(),
            trial_id: trial.trial_id.clone(),
            family,
            band,
            values,
        };
        let mut out = Vec::with_capacity(12);
        for (family, per_band) in [
            (FeatureFamily::ConnectivityStructure, eigen),
            (FeatureFamily::GraphVariability, graph),
            (FeatureFamily::LogPower, power),
        ] {
            for (band, values) in BandName::ALL.into_iter().zip(per_band) {
                out.push(record(family, band, values));
            }
        }
        Ok(out)
    };
    run().map_err(|e| e.in_trial(&trial.trial_id))
}

/// Labels of one trial, kept beside the feature store.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialLabels {
    pub subject_id: String,
    pub trial_id: String,
    pub digit_correct: bool,
    pub sentence_correct: bool,
}

impl TrialLabels {
    pub fn is_failure(&self, label: LabelKind) -> bool {
        match label {
            LabelKind::Digit => !self.digit_correct,
            LabelKind::Sentence => !self.sentence_correct,
        }
    }
}

pub const LABELS_HEADER: &str = "subject_id,trial_id,digit_correct,sentence_correct";

/// `features.csv` -> `features.labels.csv`.
pub fn labels_path(features_path: &Path) -> PathBuf {
    let stem = features_path.file_stem().unwrap_or_default().to_string_lossy();
    features_path.with_file_name(format!("{stem}.labels.csv"))
}

pub fn write_labels(path: &Path, labels: &[TrialLabels]) -> Result<()> {
    let mut out = String::from(LABELS_HEADER);
    out.push('\n');
    for l in labels {
        writeln!(
            out,
            "{},{},{},{}",
            l.subject_id, l.trial_id, l.digit_correct as u8, l.sentence_correct as u8
        )
        .expect("write to String");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<TrialLabels>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, message: String| Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        message,
    };
    match lines.next() {
        Some((_, h)) if h.trim() == LABELS_HEADER => {}
        _ => return Err(bad(1, format!("expected header `{LABELS_HEADER}`"))),
    }
    let flag = |line: usize, v: &str| match v.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(bad(line, format!("label must be 0 or 1, got `{other}`"))),
    };
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 4 {
                return Err(bad(i + 1, format!("expected 4 fields, found {}", f.len())));
            }
            Ok(TrialLabels {
                subject_id: f[0].trim().to_string(),
                trial_id: f[1].trim().to_string(),
                digit_correct: flag(i + 1, f[2])?,
                sentence_correct: flag(i + 1, f[3])?,
            })
        })
        .collect()
}

fn labels_of(trial: &Trial) -> TrialLabels {
    TrialLabels {
        subject_id: trial.subject_id.clone(),
        trial_id: trial.trial_id.clone(),
        digit_correct: trial.digit_correct,
        sentence_correct: trial.sentence_correct,
    }
}

#[derive(Clone, Debug, Default)]
pub struct Extraction {
    pub records: Vec<FeatureRecord>,
    pub labels: Vec<TrialLabels>,
    /// Trials dropped under `skip_bad`, with the reason.
    pub skipped: Vec<(String, String)>,
}

type TrialOutcome = (String, Result<(Vec<FeatureRecord>, TrialLabels)>);

fn collect_extraction(results: Vec<TrialOutcome>, skip_bad: bool) -> Result<Extraction> {
    let mut out = Extraction::default();
    for (trial_id, r) in results {
        match r {
            Ok((records, labels)) => {
                out.records.extend(records);
                out.labels.push(labels);
            }
            Err(e) if skip_bad && !e.is_io() => {
                log::warn!("skipping {e}");
                out.skipped.push((trial_id, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Loads, filters and featurizes every trial of a dataset in parallel; output keeps manifest order.
pub fn run_extract(dataset: &Dataset, config: &PipelineConfig, skip_bad: bool) -> Result<Extraction> {
    let results = dataset
        .trials
        .par_iter()
        .map(|desc| {
            let start = Instant::now();
            let r = load_trial(desc).and_then(|t| Ok((extract_trial(&t, config)?, labels_of(&t))));
            log::debug!("{}: {:.1} ms", desc.trial_id, start.elapsed().as_secs_f64() * 1e3);
            (desc.trial_id.clone(), r)
        })
        .collect();
    collect_extraction(results, skip_bad)
}

/// Same as [`run_extract`] for trials already in memory.
pub fn extract_trials(trials: &[Trial], config: &PipelineConfig, skip_bad: bool) -> Result<Extraction> {
    let results = trials
        .par_iter()
        .map(|t| (t.trial_id.clone(), extract_trial(t, config).map(|r| (r, labels_of(t)))))
        .collect();
    collect_extraction(results, skip_bad)
}

/// Feature records pivoted into one `trials x dims` matrix per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub trial_ids: Vec<String>,
    pub subjects: Vec<String>,
    pub cells: BTreeMap<CellKey, DMatrix<f64>>,
}

impl FeatureTable {
    pub fn from_records(records: &[FeatureRecord]) -> Result<Self> {
        let mut trial_ids: Vec<String> = Vec::new();
        let mut subjects: Vec<String> = Vec::new();
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for r in records {
            if !index.contains_key(r.trial_id.as_str()) {
                index.insert(&r.trial_id, trial_ids.len());
                trial_ids.push(r.trial_id.clone());
                subjects.push(r.subject_id.clone());
            }
        }
        let n = trial_ids.len();
        let mut rows: BTreeMap<CellKey, Vec<Option<&[f64]>>> = BTreeMap::new();
        for r in records {
            let slot = rows.entry((r.family, r.band)).or_insert_with(|| vec![None; n]);
            let t = index[r.trial_id.as_str()];
            if slot[t].is_some() {
                return Err(Error::InvalidArgument(format!(
                    "trial `{}` has two {}/{} records",
                    r.trial_id, r.family, r.band
                )));
            }
            slot[t] = Some(&r.values);
        }
        let mut missing = Vec::new();
        for family in FeatureFamily::ALL {
            for band in BandName::ALL {
                match rows.get(&(family, band)) {
                    None => missing.push(format!("{family}/{band}")),
                    Some(v) => {
                        if let Some(t) = v.iter().position(Option::is_none) {
                            missing.push(format!("{family}/{band} for trial `{}`", trial_ids[t]));
                        }
                    }
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingCell(missing.join(", ")));
        }
        let mut cells = BTreeMap::new();
        for (key, v) in rows {
            let d = v[0].expect("checked").len();
            let mut m = DMatrix::zeros(n, d);
            for (t, values) in v.into_iter().enumerate() {
                let values = values.expect("checked");
                if values.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: values.len() });
                }
                m.row_mut(t).copy_from_slice(values);
            }
            cells.insert(key, m);
        }
        Ok(FeatureTable {
            trial_ids,
            subjects,
            cells,
        })
    }

    /// Labels reordered to match the table's trials.
    pub fn align_labels(&self, labels: &[TrialLabels]) -> Result<Vec<TrialLabels>> {
        let by_id: BTreeMap<&str, &TrialLabels> = labels.iter().map(|l| (l.trial_id.as_str(), l)).collect();
        self.trial_ids
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|l| (*l).clone())
                    .ok_or_else(|| Error::InvalidArgument(format!("no labels for trial `{id}`")))
            })
            .collect()
    }
}

/// Cross-validated scores for one label.
#[derive(Clone, Debug)]
pub struct LabelScores {
    pub label: LabelKind,
    pub labels_fail: Vec<bool>,
    pub cells: BTreeMap<CellKey, CvResult>,
}

impl LabelScores {
    pub fn llrs(&self) -> BTreeMap<CellKey, Vec<f64>> {
        self.cells.iter().map(|(k, r)| (*k, r.scores.clone())).collect()
    }

    pub fn fused(&self, config: &PipelineConfig, families: &[FeatureFamily]) -> Result<Vec<f64>> {
        fuse(&self.llrs(), &config.fusion, families)
    }
}

pub fn score_label(table: &FeatureTable, labels: &[TrialLabels], label: LabelKind, config: &PipelineConfig) -> Result<LabelScores> {
    let labels_fail: Vec<bool> = labels.iter().map(|l| l.is_failure(label)).collect();
    let cells = table
        .cells
        .par_iter()
        .map(|(key, x)| Ok((*key, loso_cv(x, &table.subjects, &labels_fail, &config.cv)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(LabelScores {
        label,
        labels_fail,
        cells,
    })
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: Report,
    pub cells: Vec<EvalCell>,
    pub fusion: Vec<FusionCell>,
    pub scores: Vec<LabelScores>,
}

impl Evaluation {
    pub fn scores_for(&self, label: LabelKind) -> &LabelScores {
        self.scores.iter().find(|s| s.label == label).expect("every label is scored")
    }

    pub fn fusion_for(&self, label: LabelKind) -> &FusionCell {
        self.fusion.iter().find(|f| f.label == label).expect("every label is fused")
    }

    pub fn cell(&self, label: LabelKind, family: FeatureFamily, row: ReportRow) -> Option<&EvalCell> {
        self.cells.iter().find(|c| c.label == label && c.family == family && c.row == row)
    }
}

/// Both labels, every cell, every family fusion and the all-family fusion.
pub fn run_eval(table: &FeatureTable, labels: &[TrialLabels], config: &PipelineConfig) -> Result<Evaluation> {
    let labels = table.align_labels(labels)?;
    let mut cells = Vec::new();
    let mut fusion = Vec::new();
    let mut scores = Vec::new();
    for label in LabelKind::ALL {
        let s = score_label(table, &labels, label, config)?;
        let cell = |family, row, v: &[f64]| -> Result<EvalCell> {
            let (auc, p_value, n_fail, n_succ) = evaluate_scores(v, &s.labels_fail)?;
            Ok(EvalCell { label, family, row, auc, p_value, n_fail, n_succ })
        };
        for family in FeatureFamily::ALL {
            for band in BandName::ALL {
                cells.push(cell(family, ReportRow::Band(band), &s.cells[&(family, band)].scores)?);
            }
            cells.push(cell(family, ReportRow::Combined, &s.fused(config, &[family])?)?);
        }
        let (auc, p_value, n_fail, n_succ) = evaluate_scores(&s.fused(config, &FeatureFamily::ALL)?, &s.labels_fail)?;
        fusion.push(FusionCell { label, auc, p_value, n_fail, n_succ });
        scores.push(s);
    }
    let report = build_report(&cells, &fusion)?;
    Ok(Evaluation { report, cells, fusion, scores })
}

/// Report tables plus, for `label`, per-trial LLRs, per-subject AUCs and fold models.
pub fn write_eval_outputs(
    dir: &Path,
    evaluation: &Evaluation,
    table: &FeatureTable,
    label: LabelKind,
    config: &PipelineConfig,
) -> Result<()> {
    evaluation.report.write(dir)?;
    let s = evaluation.scores_for(label);
    let mut series: Vec<(String, String, Vec<f64>)> = Vec::new();
    for family in FeatureFamily::ALL {
        for band in BandName::ALL {
            series.push((family.to_string(), band.to_string(), s.cells[&(family, band)].scores.clone()));
        }
        series.push((family.to_string(), "combined".into(), s.fused(config, &[family])?));
    }
    series.push(("all".into(), "combined".into(), s.fused(config, &FeatureFamily::ALL)?));

    let mut llr = String::from("trial_id,family,band,llr\n");
    for (family, band, v) in &series {
        for (id, x) in table.trial_ids.iter().zip(v) {
            writeln!(llr, "{id},{family},{band},{x}").expect("write to String");
        }
    }
    let path = dir.join(format!("llr_{label}.csv"));
    std::fs::write(&path, llr).map_err(|e| Error::io(&path, e))?;

    let mut per_subject = String::from("subject_id,family,band,auc\n");
    for (family, band, v) in &series {
        for (subject, auc) in per_subject_auc(v, &s.labels_fail, &table.subjects)? {
            let auc = auc.map(|a| format!("{a:.6}")).unwrap_or_default();
            writeln!(per_subject, "{subject},{family},{band},{auc}").expect("write to String");
        }
    }
    let path = dir.join(format!("per_subject_auc_{label}.csv"));
    std::fs::write(&path, per_subject).map_err(|e| Error::io(&path, e))?;

    let models = dir.join(format!("models_{label}"));
    std::fs::create_dir_all(&models).map_err(|e| Error::io(&models, e))?;
    for ((family, band), cv) in &s.cells {
        for fold in &cv.folds {
            container::save(models.join(format!("{family}_{band}_{}.cgm", fold.held_out)), &fold.model)?;
        }
    }
    Ok(())
}

/// Class-mean z-scored eigenvalue curves per band and graph-variability means per band.
#[derive(Clone, Debug, PartialEq)]
pub struct Curves {
    pub eigen: Vec<(BandName, ClassCurves)>,
    /// Per band: (mean APL spread, mean degree spread) curves, each averaged over cost levels.
    pub graph: Vec<(BandName, ClassCurves)>,
}

pub fn run_curves(table: &FeatureTable, labels: &[TrialLabels], label: LabelKind) -> Result<Curves> {
    let labels = table.align_labels(labels)?;
    let correct: Vec<bool> = labels.iter().map(|l| !l.is_failure(label)).collect();
    let mut eigen = Vec::new();
    let mut graph = Vec::new();
    for band in BandName::ALL {
        let spectra = &table.cells[&(FeatureFamily::ConnectivityStructure, band)];
        eigen.push((band, class_mean_curves(&rank_zscore(spectra)?, &correct)?));
        let g = &table.cells[&(FeatureFamily::GraphVariability, band)];
        let levels = (g.ncols() / 2).max(1) as f64;
        let summary = DMatrix::from_fn(g.nrows(), 2, |r, m| {
            (0..g.ncols()).filter(|c| c % 2 == m).map(|c| g[(r, c)]).sum::<f64>() / levels
        });
        graph.push((band, class_mean_curves(&rank_zscore(&summary)?, &correct)?));
    }
    Ok(Curves { eigen, graph })
}

pub fn write_curves(dir: &Path, curves: &Curves) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (band, c) in &curves.eigen {
        write_rank_curves(dir.join(format!("eigen_curves_{band}.csv")), c)?;
    }
    let mut out = String::from("band,measure,mean_correct,mean_incorrect\n");
    for (band, c) in &curves.graph {
        for (i, measure) in ["apl_std", "degree_std"].into_iter().enumerate() {
            writeln!(out, "{band},{measure},{},{}", c.mean_correct[i], c.mean_incorrect[i]).expect("write to String");
        }
    }
    let path = dir.join("graph_curves.csv");
    std::fs::write(&path, out).map_err(|e| Error::io(&path, e))
}
