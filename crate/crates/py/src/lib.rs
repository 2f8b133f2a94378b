//! Python bindings: field arithmetic, code construction and I/O, single-frame
//! decoding, Monte-Carlo sweeps and the structural checks.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use eprldpc::channel::{CodeSpec, ChannelModel, Mode};
use eprldpc::construction::{optimize_code, ConstructionConfig};
use eprldpc::decoders::{DecoderKind, HybridSchedule};
use eprldpc::gf::FieldContext;
use eprldpc::graph::{girth, TannerGraph};
use eprldpc::sim::qalist;
use eprldpc::sim::sweep::{decode_frame, run_sweep, ChannelParam, ExperimentPlan, StopRule};
use eprldpc::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

/// GF(2^p) with the default primitive polynomial.
#[pyclass(name = "Field", frozen)]
struct PyField {
    ctx: FieldContext,
}

#[pymethods]
impl PyField {
    #[new]
    fn new(p: u32) -> PyResult<Self> {
        Ok(PyField { ctx: FieldContext::new(p).map_err(py_err)? })
    }

    #[getter]
    fn q(&self) -> u32 {
        self.ctx.q()
    }

    #[getter]
    fn prim_poly(&self) -> u32 {
        self.ctx.prim_poly()
    }

    fn add(&self, a: u32, b: u32) -> u32 {
        self.ctx.add(a, b)
    }

    fn mul(&self, a: u32, b: u32) -> u32 {
        self.ctx.mul(a, b)
    }

    fn inv(&self, a: u32) -> PyResult<u32> {
        self.ctx.inv(a).map_err(py_err)
    }

    /// Rows of the multiplication-by-`u` matrix as bit masks.
    fn companion(&self, u: u32) -> Vec<u32> {
        self.ctx.companion_label(u).rows().to_vec()
    }
}

/// A code with its field matrix, binary image and extended matrix.
#[pyclass(name = "Code", frozen)]
struct PyCode {
    spec: CodeSpec,
}

#[pymethods]
impl PyCode {
    /// PEG mother plus label and extended-matrix search to reach `girth`.
    #[staticmethod]
    #[pyo3(signature = (p, girth, n, m=None, dv=3, dc=6, seed=1, mode="extended"))]
    #[allow(clippy::too_many_arguments)]
    fn construct(
        py: Python<'_>,
        p: usize,
        girth: usize,
        n: usize,
        m: Option<usize>,
        dv: usize,
        dc: usize,
        seed: u64,
        mode: &str,
    ) -> PyResult<Self> {
        let mode: Mode = parse(mode)?;
        let cfg = ConstructionConfig::regular(n, m.unwrap_or(n * dv / dc), dv, dc, p, girth, seed);
        let c = py.allow_threads(|| optimize_code(&cfg)).map_err(py_err)?;
        Ok(PyCode { spec: CodeSpec::from_construction(&c, mode).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyCode { spec: qalist::read(&path).map_err(py_err)? })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyCode { spec: qalist::parse(text).map_err(py_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        qalist::write(&path, &self.spec).map_err(py_err)
    }

    fn to_qalist(&self) -> String {
        qalist::to_string(&self.spec)
    }

    #[getter]
    fn p(&self) -> usize {
        self.spec.p()
    }

    #[getter]
    fn n(&self) -> usize {
        self.spec.n()
    }

    #[getter]
    fn k(&self) -> usize {
        self.spec.k()
    }

    #[getter]
    fn m_s(&self) -> usize {
        self.spec.m_s()
    }

    #[getter]
    fn mode(&self) -> String {
        self.spec.mode.to_string()
    }

    #[getter]
    fn rate(&self) -> f64 {
        self.spec.rate()
    }

    #[getter]
    fn extended_rate(&self) -> f64 {
        self.spec.extended_rate()
    }

    /// Girth of the extended matrix; `None` when no cycle up to `cap` exists.
    #[pyo3(signature = (cap=16))]
    fn girth(&self, cap: usize) -> Option<usize> {
        match girth(&TannerGraph::from_matrix(self.spec.omega_e.matrix()), cap).girth.value() {
            Some(0) | None => None,
            Some(g) => Some(g),
        }
    }

    /// `(symbols, base bits)` of a uniformly random codeword.
    fn random_codeword(&self, seed: u64, frame: u64) -> (Vec<u32>, Vec<u8>) {
        self.spec.random_codeword(seed, frame)
    }

    fn is_codeword(&self, symbols: Vec<u32>) -> bool {
        symbols.len() == self.spec.n() && self.spec.h.is_codeword(&symbols)
    }

    /// Bits placed on the channel in `mode` for the given base bits.
    #[pyo3(signature = (bits, mode=None))]
    fn channel_word(&self, bits: Vec<u8>, mode: Option<&str>) -> PyResult<Vec<u8>> {
        let mode = mode.map(parse).transpose()?.unwrap_or(self.spec.mode);
        if bits.len() != self.spec.np() {
            return Err(PyValueError::new_err(format!("expected {} base bits", self.spec.np())));
        }
        Ok(self.spec.channel_word(&bits, mode))
    }

    /// Transmits `bits` over a Gaussian channel and decodes once.
    ///
    /// Returns a dict with `converged`, `iterations`, `symbols` and `bits`.
    #[pyo3(signature = (bits, decoder, sigma, seed=1, frame=0, mode=None, mu=16, nu=4, rounds=2))]
    #[allow(clippy::too_many_arguments)]
    fn decode_awgn(
        &self,
        py: Python<'_>,
        bits: Vec<u8>,
        decoder: &str,
        sigma: f64,
        seed: u64,
        frame: u64,
        mode: Option<&str>,
        mu: usize,
        nu: usize,
        rounds: usize,
    ) -> PyResult<PyObject> {
        let decoder: DecoderKind = parse(decoder)?;
        let mode = mode.map(parse).transpose()?.unwrap_or(self.spec.mode);
        let sched = HybridSchedule::new(mu, nu, rounds, None).map_err(py_err)?;
        let word = self.channel_word(bits, Some(&mode.to_string()))?;
        let ch = ChannelModel::biawgn(sigma, seed).map_err(py_err)?;
        let rx = ch.transmit(&word, frame);
        let r = decode_frame(&self.spec, decoder, &ch, &rx, mode, &sched).map_err(py_err)?;
        let d = pyo3::types::PyDict::new(py);
        d.set_item("converged", r.converged())?;
        d.set_item("iterations", r.iterations)?;
        d.set_item("symbols", r.x_hat)?;
        d.set_item("bits", r.xbar_hat)?;
        Ok(d.into_any().unbind())
    }

    fn __repr__(&self) -> String {
        format!(
            "Code(p={}, n={}, k={}, m_s={}, mode={})",
            self.spec.p(),
            self.spec.n(),
            self.spec.k(),
            self.spec.m_s(),
            self.spec.mode
        )
    }
}

/// Monte-Carlo sweep; returns the CSV text.
#[pyfunction]
#[pyo3(signature = (code, decoder, channel, grid, min_errors=100, max_frames=1_000_000, seed=1, mode=None, threads=0))]
#[allow(clippy::too_many_arguments)]
fn sweep(
    py: Python<'_>,
    code: &PyCode,
    decoder: &str,
    channel: &str,
    grid: Vec<f64>,
    min_errors: u64,
    max_frames: u64,
    seed: u64,
    mode: Option<&str>,
    threads: usize,
) -> PyResult<String> {
    let channel: ChannelParam = parse(channel)?;
    let mut plan = ExperimentPlan::new(parse(decoder)?, channel, grid);
    plan.stop = StopRule { min_frame_errors: min_errors, max_frames };
    plan.seed = seed;
    plan.mode = mode.map(parse).transpose()?.unwrap_or(code.spec.mode);
    plan.threads = threads;
    let spec = &code.spec;
    py.allow_threads(|| run_sweep(spec, &plan)).map(|r| r.to_csv()).map_err(py_err)
}

/// Runs the structural checks; returns `(name, passed, detail)` triples.
#[pyfunction]
#[pyo3(signature = (seed=1))]
fn verify(py: Python<'_>, seed: u64) -> PyResult<Vec<(String, bool, String)>> {
    let checks = py.allow_threads(|| eprldpc::verify::run_all(seed)).map_err(py_err)?;
    Ok(checks.into_iter().map(|c| (c.name, c.passed, c.detail)).collect())
}

/// Monte-Carlo length-4 cycle probability: `(estimate, standard error)`.
#[pyfunction]
#[pyo3(signature = (p, trials=100_000, seed=1))]
fn estimate_p4(p: u32, trials: u64, seed: u64) -> PyResult<(f64, f64)> {
    let ctx = FieldContext::new(p).map_err(py_err)?;
    let e = eprldpc::graph::estimate_p4(&ctx, trials, seed).map_err(py_err)?;
    Ok((e.estimate, e.standard_error))
}

#[pymodule]
fn eprldpc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyField>()?;
    m.add_class::<PyCode>()?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_p4, m)?)?;
    Ok(())
}
