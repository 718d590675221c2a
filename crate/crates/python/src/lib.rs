//! Python bindings. Audio is exchanged as lists of floats in [-1, 1].

use std::collections::HashMap;

use plc_lab::audio_io;
use plc_lab::conceal::{conceal_clip, ConcealerKind, EngineConfig};
use plc_lab::degrade;
use plc_lab::metrics;
use plc_lab::mushra::{self, ConditionRole};
use plc_lab::trace_model::{self, TracePools};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Mono audio with its sample rate.
#[pyclass(name = "Waveform", module = "plc_lab", from_py_object)]
#[derive(Clone)]
pub struct PyWaveform {
    pub inner: plc_lab::Waveform,
}

#[pymethods]
impl PyWaveform {
    #[new]
    #[pyo3(signature = (samples, sample_rate = 44100))]
    fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            inner: plc_lab::Waveform::new(samples, sample_rate),
        }
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        audio_io::read_wav(path)
            .map(|inner| Self { inner })
            .map_err(|e| PyIOError::new_err(e.to_string()))
    }

    fn write(&self, path: &str) -> PyResult<()> {
        audio_io::write_wav(&self.inner, path).map_err(|e| PyIOError::new_err(e.to_string()))
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
    fn duration(&self) -> f64 {
        self.inner.duration()
    }

    fn silence_ratio(&self) -> PyResult<f64> {
        audio_io::silence_ratio(&self.inner).map_err(value_err)
    }

    fn resample(&self, target_rate: u32) -> PyResult<Self> {
        if target_rate == 0 {
            return Err(PyValueError::new_err("target rate must be positive"));
        }
        Ok(Self {
            inner: audio_io::resample(&self.inner, target_rate),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Waveform({} samples @ {} Hz)",
            self.inner.len(),
            self.inner.sample_rate
        )
    }
}

/// Per-packet loss flags (True = lost).
#[pyclass(name = "PacketTrace", module = "plc_lab", from_py_object)]
#[derive(Clone)]
pub struct PyPacketTrace {
    pub inner: plc_lab::PacketTrace,
}

#[pymethods]
impl PyPacketTrace {
    #[new]
    fn new(flags: Vec<bool>) -> Self {
        Self {
            inner: plc_lab::PacketTrace::new(flags),
        }
    }

    /// Parses a string of '0'/'1' digits; whitespace is ignored.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        trace_model::parse_trace(text)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        trace_model::read_trace(path)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    #[getter]
    fn flags(&self) -> Vec<bool> {
        self.inner.flags.clone()
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id()
    }

    fn lost_count(&self) -> usize {
        self.inner.lost_count()
    }

    /// `{"loss_rate", "burst_lengths", "max_burst"}`.
    fn burst_stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        let s = self.inner.burst_stats();
        let d = pyo3::types::PyDict::new(py);
        d.set_item("loss_rate", s.loss_rate)?;
        d.set_item("burst_lengths", s.burst_lengths)?;
        d.set_item("max_burst", s.max_burst)?;
        Ok(d)
    }

    /// Subset number 1-3; raises if the longest burst exceeds 50 packets.
    fn subset(&self) -> PyResult<u8> {
        trace_model::classify_subset(&self.inner.burst_stats())
            .map(|l| l.number())
            .map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __str__(&self) -> String {
        self.inner.to_digits()
    }
}

/// Concealment engine parameters.
#[pyclass(
    name = "EngineConfig",
    module = "plc_lab",
    get_all,
    set_all,
    from_py_object
)]
#[derive(Clone)]
pub struct PyEngineConfig {
    pub context_packets: usize,
    pub ar_order: usize,
    pub extra_pred: usize,
    pub crossfade_len: usize,
    pub noise_comp: f64,
}

impl PyEngineConfig {
    fn to_core(&self) -> PyResult<EngineConfig> {
        let cfg = EngineConfig {
            context_packets: self.context_packets,
            ar_order: self.ar_order,
            extra_pred: self.extra_pred,
            crossfade_len: self.crossfade_len,
            noise_comp: self.noise_comp,
            ..EngineConfig::default()
        };
        cfg.validate().map_err(value_err)?;
        Ok(cfg)
    }
}

#[pymethods]
impl PyEngineConfig {
    #[new]
    #[pyo3(signature = (context_packets = 8, ar_order = 256, extra_pred = 256, crossfade_len = 256, noise_comp = 1e-6))]
    fn new(
        context_packets: usize,
        ar_order: usize,
        extra_pred: usize,
        crossfade_len: usize,
        noise_comp: f64,
    ) -> Self {
        Self {
            context_packets,
            ar_order,
            extra_pred,
            crossfade_len,
            noise_comp,
        }
    }
}

/// The five objective metrics for one clip.
#[pyclass(
    name = "MetricReport",
    module = "plc_lab",
    get_all,
    skip_from_py_object
)]
#[derive(Clone)]
pub struct PyMetricReport {
    pub mse: f64,
    pub sdr_db: f64,
    pub si_sdr_db: f64,
    pub lsd: f64,
    pub mcd: f64,
    pub si_sdr_alpha: f64,
}

#[pymethods]
impl PyMetricReport {
    fn as_dict(&self) -> HashMap<&'static str, f64> {
        HashMap::from([
            ("mse", self.mse),
            ("sdr_db", self.sdr_db),
            ("si_sdr_db", self.si_sdr_db),
            ("lsd", self.lsd),
            ("mcd", self.mcd),
        ])
    }

    fn __repr__(&self) -> String {
        format!(
            "MetricReport(mse={:.4e}, sdr_db={:.3}, si_sdr_db={:.3}, lsd={:.4}, mcd={:.4})",
            self.mse, self.sdr_db, self.si_sdr_db, self.lsd, self.mcd
        )
    }
}

#[pyfunction]
pub fn apply_zero_fill(clean: &PyWaveform, trace: &PyPacketTrace) -> PyResult<PyWaveform> {
    degrade::apply_zero_fill(&clean.inner, &trace.inner)
        .map(|c| PyWaveform { inner: c.audio })
        .map_err(value_err)
}

/// Conceals a zero-filled clip with "zero", "repeat" or "ar".
#[pyfunction]
#[pyo3(signature = (lossy, trace, method = "ar", config = None))]
pub fn conceal(
    lossy: &PyWaveform,
    trace: &PyPacketTrace,
    method: &str,
    config: Option<PyEngineConfig>,
) -> PyResult<PyWaveform> {
    let kind: ConcealerKind = method.parse().map_err(value_err)?;
    let cfg = match config {
        Some(c) => c.to_core()?,
        None => EngineConfig::default(),
    };
    conceal_clip(&lossy.inner, &trace.inner, &cfg, kind)
        .map(|inner| PyWaveform { inner })
        .map_err(value_err)
}

#[pyfunction]
pub fn evaluate(reference: &PyWaveform, estimate: &PyWaveform) -> PyResult<PyMetricReport> {
    let r = metrics::evaluate_clip(&reference.inner, &estimate.inner).map_err(value_err)?;
    Ok(PyMetricReport {
        mse: r.mse,
        sdr_db: r.sdr_db,
        si_sdr_db: r.si_sdr_db,
        lsd: r.lsd,
        mcd: r.mcd,
        si_sdr_alpha: r.si_sdr_alpha,
    })
}

#[pyfunction]
fn mse(reference: Vec<f64>, estimate: Vec<f64>) -> PyResult<f64> {
    metrics::mse(&reference, &estimate).map_err(value_err)
}

#[pyfunction]
fn sdr(reference: Vec<f64>, estimate: Vec<f64>) -> PyResult<f64> {
    metrics::sdr(&reference, &estimate).map_err(value_err)
}

#[pyfunction]
fn si_sdr(reference: Vec<f64>, estimate: Vec<f64>) -> PyResult<f64> {
    metrics::si_sdr(&reference, &estimate).map_err(value_err)
}

#[pyfunction]
fn lsd(reference: Vec<f64>, estimate: Vec<f64>) -> PyResult<f64> {
    metrics::lsd(&reference, &estimate).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (reference, estimate, sample_rate = 44100))]
fn mcd(reference: Vec<f64>, estimate: Vec<f64>, sample_rate: u32) -> PyResult<f64> {
    metrics::mcd(&reference, &estimate, sample_rate).map_err(value_err)
}

/// Samples a plan from the given traces (classified into subsets) and
/// returns the realized trace with the plan line.
#[pyfunction]
pub fn sample_trace_plan(
    traces: Vec<PyPacketTrace>,
    clip_packets: usize,
    seed: u64,
) -> PyResult<(PyPacketTrace, String)> {
    let (pools, _) = TracePools::classify(traces.into_iter().map(|t| t.inner));
    let plan = trace_model::sample_trace_plan(clip_packets, &pools, seed).map_err(value_err)?;
    Ok((
        PyPacketTrace {
            inner: trace_model::realize_plan(&plan),
        },
        plan.to_line(),
    ))
}

#[pyfunction]
pub fn confidence_interval(scores: Vec<f64>) -> PyResult<f64> {
    mushra::confidence_interval(&scores).map_err(value_err)
}

/// Winner among systems given `{condition: [scores]}`; "reference" and
/// "anchor" are ineligible.
#[pyfunction]
pub fn trial_winner(scores: HashMap<String, Vec<f64>>) -> PyResult<String> {
    let flat: Vec<(ConditionRole, f64)> = scores
        .iter()
        .flat_map(|(k, v)| {
            let role: ConditionRole = k.parse().expect("infallible");
            v.iter().map(move |s| (role.clone(), *s))
        })
        .collect();
    mushra::trial_winner(&flat).map_err(value_err)
}

/// Ranks systems from a ratings CSV; returns `[(system, wins, mean)]`, best first.
#[pyfunction]
pub fn rank_ratings_csv(path: &str) -> PyResult<Vec<(String, usize, f64)>> {
    let ratings = mushra::read_ratings_csv(path).map_err(value_err)?;
    let mut trials: Vec<String> = ratings.iter().map(|r| r.rating.trial_id.clone()).collect();
    trials.sort();
    trials.dedup();
    let mut systems: Vec<String> = ratings
        .iter()
        .filter_map(|r| r.condition.system().map(str::to_string))
        .collect();
    systems.sort();
    systems.dedup();
    let result = mushra::compute_ranking(&ratings, &trials, &systems).map_err(value_err)?;
    Ok(result
        .ranking
        .into_iter()
        .map(|r| (r.system, r.wins, r.mean))
        .collect())
}

#[pymodule]
#[pyo3(name = "plc_lab")]
pub fn plc_lab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", plc_lab::VERSION)?;
    m.add("PACKET_SIZE", plc_lab::PACKET_SIZE)?;
    m.add("SAMPLE_RATE", plc_lab::CHALLENGE_SAMPLE_RATE)?;
    m.add_class::<PyWaveform>()?;
    m.add_class::<PyPacketTrace>()?;
    m.add_class::<PyEngineConfig>()?;
    m.add_class::<PyMetricReport>()?;
    m.add_function(wrap_pyfunction!(apply_zero_fill, m)?)?;
    m.add_function(wrap_pyfunction!(conceal, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(sdr, m)?)?;
    m.add_function(wrap_pyfunction!(si_sdr, m)?)?;
    m.add_function(wrap_pyfunction!(lsd, m)?)?;
    m.add_function(wrap_pyfunction!(mcd, m)?)?;
    m.add_function(wrap_pyfunction!(sample_trace_plan, m)?)?;
    m.add_function(wrap_pyfunction!(confidence_interval, m)?)?;
    m.add_function(wrap_pyfunction!(trial_winner, m)?)?;
    m.add_function(wrap_pyfunction!(rank_ratings_csv, m)?)?;
    Ok(())
}
