//! Python bindings for the vocodet core library.

use ndarray::Array2;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use vocodet::attribution::{blur_ig as core_blur_ig, BlurIgConfig};
use vocodet::audio_io::{self, SignalKind};
use vocodet::dsp::{self, FeatureConfig, FeatureKind};
use vocodet::eval::{self, Companding, PhoneChannelConfig, ScoreSet};
use vocodet::gmm::{self, TrainConfig};

create_exception!(pyvocodet, VocodetError, PyException);

fn err(e: vocodet::Error) -> PyErr {
    VocodetError::new_err(e.to_string())
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(VocodetError::new_err("rows must all have the same length"));
    }
    Ok(
        Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect())
            .expect("checked shape"),
    )
}

#[pyclass(name = "AudioClip", module = "pyvocodet", from_py_object)]
#[derive(Clone)]
struct PyAudioClip {
    inner: audio_io::AudioClip,
}

#[pymethods]
impl PyAudioClip {
    #[new]
    #[pyo3(signature = (samples, sample_rate, source_id = "python"))]
    fn new(samples: Vec<f64>, sample_rate: u32, source_id: &str) -> PyResult<Self> {
        Ok(Self {
            inner: audio_io::AudioClip::new(samples, sample_rate, source_id).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: audio_io::load_wav(path).map_err(err)?,
        })
    }

    /// Generate a test signal. `kind` is sine, white_noise, chirp, silence,
    /// harmonic or shaped_noise.
    #[staticmethod]
    #[pyo3(signature = (kind, duration_s, sample_rate, freq = 440.0, seed = 0, f1 = 4000.0, max_freq = 4000.0, corner = 200.0))]
    #[allow(clippy::too_many_arguments)]
    fn synth(
        kind: &str,
        duration_s: f64,
        sample_rate: u32,
        freq: f64,
        seed: u64,
        f1: f64,
        max_freq: f64,
        corner: f64,
    ) -> PyResult<Self> {
        let kind = match kind {
            "sine" => SignalKind::Sine { freq },
            "white_noise" => SignalKind::WhiteNoise { seed },
            "chirp" => SignalKind::Chirp { f0: freq, f1 },
            "silence" => SignalKind::Silence,
            "harmonic" => SignalKind::Harmonic { f0: freq, max_freq },
            "shaped_noise" => SignalKind::ShapedNoise {
                seed,
                corner,
                max_freq,
            },
            other => {
                return Err(VocodetError::new_err(format!(
                    "unknown signal kind '{other}'"
                )))
            }
        };
        Ok(Self {
            inner: audio_io::synth_signal(kind, duration_s, sample_rate).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        audio_io::write_wav(&self.inner, path).map_err(err)
    }

    fn resample(&self, sample_rate: u32) -> PyResult<Self> {
        Ok(Self {
            inner: audio_io::resample(&self.inner, sample_rate).map_err(err)?,
        })
    }

    #[getter]
    fn samples(&self) -> Vec<f64> {
        self.inner.samples.clone()
    }

    #[getter]
    fn sample_rate(&self) -> u32 {
        self.inner.sample_rate
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.inner.duration_s()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "AudioClip({} samples at {} Hz, '{}')",
            self.inner.len(),
            self.inner.sample_rate,
            self.inner.source_id
        )
    }
}

#[pyclass(name = "Features", module = "pyvocodet", from_py_object)]
#[derive(Clone)]
struct PyFeatures {
    inner: dsp::CepstralFeatures,
}

#[pymethods]
impl PyFeatures {
    #[getter]
    fn base(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.base)
    }

    #[getter]
    fn delta(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.delta)
    }

    #[getter]
    fn delta2(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.delta2)
    }

    /// `T x 3R` frame vectors as the detector sees them.
    fn stacked(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.stacked())
    }

    #[getter]
    fn n_frames(&self) -> usize {
        self.inner.n_frames()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: dsp::read_feature_cache(path).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        dsp::write_feature_cache(&self.inner, path).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Features({} frames x {} dims)",
            self.inner.n_frames(),
            self.inner.dim()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (clip, kind = "lfcc", filters = 40, coeffs = 20, delta_window = 2))]
fn extract_features(
    clip: &PyAudioClip,
    kind: &str,
    filters: usize,
    coeffs: usize,
    delta_window: usize,
) -> PyResult<PyFeatures> {
    let kind: FeatureKind = kind.parse().map_err(err)?;
    let cfg = FeatureConfig {
        filters,
        coeffs,
        delta_window,
        ..FeatureConfig::default()
    };
    Ok(PyFeatures {
        inner: dsp::extract_features(&clip.inner, kind, &cfg).map_err(err)?,
    })
}

#[pyfunction]
fn hz_to_mel(f: f64) -> PyResult<f64> {
    dsp::hz_to_mel(f).map_err(err)
}

#[pyclass(name = "GmmModel", module = "pyvocodet", from_py_object)]
#[derive(Clone)]
struct PyGmmModel {
    inner: gmm::GmmModel,
}

#[pymethods]
impl PyGmmModel {
    #[new]
    fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: gmm::GmmModel::new(weights, matrix(means)?, matrix(variances)?).map_err(err)?,
        })
    }

    /// Gradient training with Adam on minibatches.
    #[staticmethod]
    #[pyo3(signature = (frames, components, epochs = 10, batch_size = 128, learning_rate = 1e-3, seed = 0))]
    fn train(
        frames: Vec<Vec<f64>>,
        components: usize,
        epochs: usize,
        batch_size: usize,
        learning_rate: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = TrainConfig {
            components,
            epochs,
            batch_size,
            learning_rate,
            seed,
            ..TrainConfig::default()
        };
        let frames = matrix(frames)?;
        Ok(Self {
            inner: gmm::train_gd(frames.view(), &cfg).map_err(err)?,
        })
    }

    /// Expectation-maximisation; returns the model and its log-likelihood history.
    #[staticmethod]
    #[pyo3(signature = (frames, components, iterations = 50, seed = 0))]
    fn train_em(
        frames: Vec<Vec<f64>>,
        components: usize,
        iterations: usize,
        seed: u64,
    ) -> PyResult<(Self, Vec<f64>)> {
        let frames = matrix(frames)?;
        let fit = gmm::train_em(frames.view(), components, iterations, seed).map_err(err)?;
        Ok((Self { inner: fit.model }, fit.log_likelihoods))
    }

    fn log_density(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.log_density(&x).map_err(err)
    }

    fn mean_log_likelihood(&self, frames: Vec<Vec<f64>>) -> PyResult<f64> {
        self.inner
            .mean_log_likelihood(matrix(frames)?.view())
            .map_err(err)
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn means(&self) -> Vec<Vec<f64>> {
        rows(self.inner.means())
    }

    #[getter]
    fn variances(&self) -> Vec<Vec<f64>> {
        rows(self.inner.variances())
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json(None).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "GmmModel(M={}, D={})",
            self.inner.n_components(),
            self.inner.dim()
        )
    }
}

#[pyclass(name = "Detector", module = "pyvocodet", from_py_object)]
#[derive(Clone)]
struct PyDetector {
    inner: gmm::DetectorPair,
}

#[pymethods]
impl PyDetector {
    #[new]
    fn new(real: &PyGmmModel, fake: &PyGmmModel) -> PyResult<Self> {
        Ok(Self {
            inner: gmm::DetectorPair::new(real.inner.clone(), fake.inner.clone(), None)
                .map_err(err)?,
        })
    }

    /// Detector written by the `train` subcommand.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (inner, _) = gmm::DetectorPair::load(path).map_err(err)?;
        Ok(Self { inner })
    }

    /// Mean per-frame log-likelihood ratio; positive leans real.
    fn score(&self, features: &PyFeatures) -> PyResult<f64> {
        self.inner.check_compatible(&features.inner).map_err(err)?;
        gmm::score(&self.inner, &features.inner).map_err(err)
    }

    #[getter]
    fn real(&self) -> PyGmmModel {
        PyGmmModel {
            inner: self.inner.real.clone(),
        }
    }

    #[getter]
    fn fake(&self) -> PyGmmModel {
        PyGmmModel {
            inner: self.inner.fake.clone(),
        }
    }
}

/// Returns `(eer, threshold)`.
#[pyfunction]
fn compute_eer(real: Vec<f64>, fake: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = eval::compute_eer(&ScoreSet { real, fake }).map_err(err)?;
    Ok((r.eer, r.threshold))
}

#[pyfunction]
#[pyo3(signature = (clip, mu_law = false))]
fn simulate_phone(clip: &PyAudioClip, mu_law: bool) -> PyResult<PyAudioClip> {
    let cfg = PhoneChannelConfig {
        companding: if mu_law {
            Companding::MuLaw
        } else {
            Companding::None
        },
        ..PhoneChannelConfig::default()
    };
    Ok(PyAudioClip {
        inner: eval::simulate_phone(&clip.inner, &cfg).map_err(err)?,
    })
}

/// Blur-path attributions as a dict with `base`, `delta`, `delta2`,
/// `score` and `baseline_score`.
#[pyfunction]
#[pyo3(signature = (detector, features, sigma_max = 5.0, steps = 100))]
fn blur_ig<'py>(
    py: Python<'py>,
    detector: &PyDetector,
    features: &PyFeatures,
    sigma_max: f64,
    steps: usize,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let map = core_blur_ig(
        &detector.inner,
        &features.inner,
        &BlurIgConfig { sigma_max, steps },
    )
    .map_err(err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("base", rows(&map.base))?;
    d.set_item("delta", rows(&map.delta))?;
    d.set_item("delta2", rows(&map.delta2))?;
    d.set_item("score", map.score)?;
    d.set_item("baseline_score", map.baseline_score)?;
    d.set_item("completeness_residual", map.completeness_residual())?;
    Ok(d)
}

#[pymodule]
fn pyvocodet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("VocodetError", m.py().get_type::<VocodetError>())?;
    m.add_class::<PyAudioClip>()?;
    m.add_class::<PyFeatures>()?;
    m.add_class::<PyGmmModel>()?;
    m.add_class::<PyDetector>()?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(hz_to_mel, m)?)?;
    m.add_function(wrap_pyfunction!(compute_eer, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_phone, m)?)?;
    m.add_function(wrap_pyfunction!(blur_ig, m)?)?;
    Ok(())
}
