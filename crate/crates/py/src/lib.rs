//! Python bindings: configs, trials, per-trial features, the file-based pipeline
//! stages and the ranking statistics.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use cogconn::config::PipelineConfig;
use cogconn::data::{BandName, LabelKind};
use cogconn::dsp::{band_log_power, coherence_matrix};
use cogconn::{connstruct, eval, graphnet, io, pipeline, synth};

fn err(e: cogconn::Error) -> PyErr {
    if e.is_io() {
        PyOSError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn parse<T: std::str::FromStr<Err = cogconn::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

/// Pipeline and synthetic-data settings.
#[pyclass(name = "Config", module = "cogconn_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: PipelineConfig,
}

#[pymethods]
impl PyConfig {
    /// Parses `key = value` text. No argument gives the defaults.
    #[new]
    #[pyo3(signature = (text = ""))]
    fn new(text: &str) -> PyResult<Self> {
        Ok(PyConfig { inner: parse(text)? })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Ok(PyConfig { inner: PipelineConfig::from_file(path).map_err(err)? })
    }

    /// A copy with the given keys overridden, e.g. `{"synth.seed": 3}`.
    fn with_overrides(&self, overrides: Vec<(String, Bound<'_, PyAny>)>) -> PyResult<Self> {
        let pairs: Vec<(String, String)> = overrides
            .into_iter()
            .map(|(k, v)| Ok((k, v.str()?.to_string())))
            .collect::<PyResult<_>>()?;
        let inner = self
            .inner
            .with_overrides(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .map_err(err)?;
        Ok(PyConfig { inner })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    /// `(lo_hz, hi_hz)` of a named band.
    fn band(&self, name: &str) -> PyResult<(f64, f64)> {
        let b = &self.inner.bands[parse::<BandName>(name)?.index()];
        Ok((b.lo_hz, b.hi_hz))
    }

    fn __repr__(&self) -> String {
        format!("Config(seed={}, n_subjects={})", self.inner.synth.seed, self.inner.synth.n_subjects)
    }
}

/// One trial: channel-major samples plus both recall labels.
#[pyclass(name = "Trial", module = "cogconn_py", frozen)]
struct PyTrial {
    inner: cogconn::data::Trial,
}

#[pymethods]
impl PyTrial {
    #[new]
    #[pyo3(signature = (subject_id, trial_id, sample_rate_hz, channels, digit_correct = true, sentence_correct = true))]
    fn new(
        subject_id: String,
        trial_id: String,
        sample_rate_hz: f64,
        channels: Vec<Vec<f64>>,
        digit_correct: bool,
        sentence_correct: bool,
    ) -> PyResult<Self> {
        let n_channels = channels.len();
        let n = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != n) {
            return Err(PyValueError::new_err("channels differ in length"));
        }
        let samples = channels.into_iter().flatten().collect();
        let inner = cogconn::data::Trial::new(
            subject_id,
            trial_id,
            sample_rate_hz,
            n_channels,
            samples,
            digit_correct,
            sentence_correct,
        )
        .map_err(err)?;
        Ok(PyTrial { inner })
    }

    #[getter]
    fn subject_id(&self) -> &str {
        &self.inner.subject_id
    }

    #[getter]
    fn trial_id(&self) -> &str {
        &self.inner.trial_id
    }

    #[getter]
    fn sample_rate_hz(&self) -> f64 {
        self.inner.sample_rate_hz
    }

    #[getter]
    fn n_channels(&self) -> usize {
        self.inner.n_channels()
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    #[getter]
    fn digit_correct(&self) -> bool {
        self.inner.digit_correct
    }

    #[getter]
    fn sentence_correct(&self) -> bool {
        self.inner.sentence_correct
    }

    fn channel(&self, index: usize) -> PyResult<Vec<f64>> {
        if index >= self.inner.n_channels() {
            return Err(PyValueError::new_err(format!("channel {index} out of range")));
        }
        Ok(self.inner.channel(index).to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "Trial({}, {} channels x {} samples)",
            self.inner.trial_id,
            self.inner.n_channels(),
            self.inner.n_samples()
        )
    }
}

fn band_of(config: Option<&PyConfig>, name: &str) -> PyResult<(PipelineConfig, cogconn::data::FrequencyBand)> {
    let config = config.map_or_else(PipelineConfig::default, |c| c.inner.clone());
    let band = config.bands[parse::<BandName>(name)?.index()];
    Ok((config, band))
}

/// One synthetic trial, deterministic in `(config.synth.seed, subject, trial)`.
#[pyfunction]
#[pyo3(signature = (subject, trial, config = None))]
fn synth_trial(subject: usize, trial: usize, config: Option<&PyConfig>) -> PyResult<PyTrial> {
    let config = config.map_or_else(PipelineConfig::default, |c| c.inner.clone());
    config.synth.validate().map_err(err)?;
    Ok(PyTrial { inner: synth::generate_trial(&config.synth, subject, trial).map_err(err)? })
}

/// Writes a synthetic dataset and returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, config = None))]
fn synth_dataset(py: Python<'_>, out_dir: PathBuf, config: Option<&PyConfig>) -> PyResult<PathBuf> {
    let config = config.map_or_else(PipelineConfig::default, |c| c.inner.clone());
    py.detach(|| synth::generate_dataset(&config.synth, &out_dir)).map_err(err)?;
    Ok(out_dir.join(synth::MANIFEST_NAME))
}

/// Every trial listed in a manifest, in manifest order.
#[pyfunction]
fn load_trials(py: Python<'_>, manifest: PathBuf) -> PyResult<Vec<PyTrial>> {
    let trials = py.detach(|| {
        let dataset = io::load_manifest(&manifest)?;
        dataset.trials.iter().map(io::load_trial).collect::<cogconn::Result<Vec<_>>>()
    });
    Ok(trials.map_err(err)?.into_iter().map(|inner| PyTrial { inner }).collect())
}

/// Band coherence matrix of the trial as given (no filtering), as rows.
#[pyfunction]
#[pyo3(signature = (trial, band, config = None))]
fn coherence(trial: &PyTrial, band: &str, config: Option<&PyConfig>) -> PyResult<Vec<Vec<f64>>> {
    let (config, band) = band_of(config, band)?;
    let c = coherence_matrix(&trial.inner, &band, &config.spectral).map_err(err)?;
    Ok(c.values().chunks(c.n()).map(<[f64]>::to_vec).collect())
}

/// Eigenvalues of the band coherence matrix, largest first.
#[pyfunction]
#[pyo3(signature = (trial, band, config = None))]
fn eigenvalues(trial: &PyTrial, band: &str, config: Option<&PyConfig>) -> PyResult<Vec<f64>> {
    let (config, band) = band_of(config, band)?;
    let c = coherence_matrix(&trial.inner, &band, &config.spectral).map_err(err)?;
    Ok(connstruct::eigen_spectrum(&c).map_err(err)?.eigenvalues)
}

/// Per-channel natural log of mean in-band power.
#[pyfunction]
#[pyo3(signature = (trial, band, config = None))]
fn log_power(trial: &PyTrial, band: &str, config: Option<&PyConfig>) -> PyResult<Vec<f64>> {
    let (config, band) = band_of(config, band)?;
    Ok(band_log_power(&trial.inner, &band, &config.spectral).map_err(err)?.values)
}

/// `(std_apl, std_degree)` of the top-coherence graph with the given mean degree.
#[pyfunction]
#[pyo3(signature = (trial, band, mean_degree, config = None))]
fn graph_spread(trial: &PyTrial, band: &str, mean_degree: f64, config: Option<&PyConfig>) -> PyResult<(f64, f64)> {
    let (config, band) = band_of(config, band)?;
    let c = coherence_matrix(&trial.inner, &band, &config.spectral).map_err(err)?;
    Ok(graphnet::graph_spread(&graphnet::build_graph(&c, mean_degree).map_err(err)?))
}

/// Preprocesses a trial and returns `(family, band, values)` for every cell.
#[pyfunction]
#[pyo3(signature = (trial, config = None))]
fn extract_trial(trial: &PyTrial, config: Option<&PyConfig>) -> PyResult<Vec<(String, String, Vec<f64>)>> {
    let config = config.map_or_else(PipelineConfig::default, |c| c.inner.clone());
    let records = pipeline::extract_trial(&trial.inner, &config).map_err(err)?;
    Ok(records
        .into_iter()
        .map(|r| (r.family.to_string(), r.band.to_string(), r.values))
        .collect())
}

/// Extracts a manifest's trials into a feature store plus its labels file.
/// Returns the ids of skipped trials.
#[pyfunction]
#[pyo3(signature = (manifest, out, config = None, skip_bad = false))]
fn extract(
    py: Python<'_>,
    manifest: PathBuf,
    out: PathBuf,
    config: Option<&PyConfig>,
    skip_bad: bool,
) -> PyResult<Vec<String>> {
    let config = config.map_or_else(PipelineConfig::default, |c| c.inner.clone());
    let skipped = py.detach(|| -> cogconn::Result<Vec<String>> {
        let dataset = io::load_manifest(&manifest)?;
        let extraction = pipeline::run_extract(&dataset, &config, skip_bad)?;
        io::write_feature_store(&out, &extraction.records)?;
        pipeline::write_labels(&pipeline::labels_path(&out), &extraction.labels)?;
        Ok(extraction.skipped.into_iter().map(|(id, _)| id).collect())
    });
    skipped.map_err(err)
}

/// Runs LOSO evaluation on a feature store and writes the report files.
/// Returns `{label: (fusion_auc, fusion_p)}` plus the report table under `"table"`.
#[pyfunction]
#[pyo3(signature = (features, out, label = "digit", config = None, labels = None))]
fn evaluate<'py>(
    py: Python<'py>,
    features: PathBuf,
    out: PathBuf,
    label: &str,
    config: Option<&PyConfig>,
    labels: Option<PathBuf>,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let config = config.map_or_else(PipelineConfig::default, |c| c.inner.clone());
    let label: LabelKind = parse(label)?;
    let evaluation = py.detach(|| -> cogconn::Result<pipeline::Evaluation> {
        let table = pipeline::FeatureTable::from_records(&io::read_feature_store(&features)?)?;
        let trial_labels = pipeline::read_labels(&labels.unwrap_or_else(|| pipeline::labels_path(&features)))?;
        let evaluation = pipeline::run_eval(&table, &trial_labels, &config)?;
        pipeline::write_eval_outputs(&out, &evaluation, &table, label, &config)?;
        Ok(evaluation)
    });
    let evaluation = evaluation.map_err(err)?;
    let result = pyo3::types::PyDict::new(py);
    for f in &evaluation.fusion {
        result.set_item(f.label.to_string(), (f.auc, f.p_value))?;
    }
    result.set_item("table", &evaluation.report.table_csv)?;
    Ok(result)
}

/// Area under the ROC curve with failures as the positive class.
#[pyfunction]
fn auc(scores: Vec<f64>, labels_fail: Vec<bool>) -> PyResult<f64> {
    eval::auc(&scores, &labels_fail).map_err(err)
}

/// Two-sided rank-sum p-value.
#[pyfunction]
fn wilcoxon_rank_sum(scores_fail: Vec<f64>, scores_succ: Vec<f64>) -> PyResult<f64> {
    eval::wilcoxon_rank_sum(&scores_fail, &scores_succ).map_err(err)
}

#[pymodule]
fn cogconn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyTrial>()?;
    m.add_function(wrap_pyfunction!(synth_trial, m)?)?;
    m.add_function(wrap_pyfunction!(synth_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(load_trials, m)?)?;
    m.add_function(wrap_pyfunction!(coherence, m)?)?;
    m.add_function(wrap_pyfunction!(eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(log_power, m)?)?;
    m.add_function(wrap_pyfunction!(graph_spread, m)?)?;
    m.add_function(wrap_pyfunction!(extract_trial, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(wilcoxon_rank_sum, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
