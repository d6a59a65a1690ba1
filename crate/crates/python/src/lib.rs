//! Python bindings. Fields cross the boundary as flat row-major lists of
//! floats together with a `(C, H, W)` shape tuple.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use ses_core::field::{NoiseField, Shape};
use ses_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Stdio(_) => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn field(data: Vec<f64>, shape: (usize, usize, usize)) -> PyResult<NoiseField> {
    NoiseField::from_vec(Shape::new(shape.0, shape.1, shape.2), data).map_err(to_py)
}

#[pymodule]
mod ses_py {
    use std::path::PathBuf;

    use pyo3::prelude::*;
    use pyo3::types::PyDict;

    use ses_core::cem::init_distribution;
    use ses_core::flowsim::{cumulative_gain_closed_form, FlowSchedule, PowerLawPrior, WienerFlowGenerator};
    use ses_core::harness::config::RunConfig as CoreRunConfig;
    use ses_core::harness::protocol;
    use ses_core::harness::run::{execute, run as run_to_dir};
    use ses_core::harness::theory;
    use ses_core::reward::ranking_consistency;
    use ses_core::rng::SeedStreams;
    use ses_core::subspace::{self, LowFreqVector, SpectralSubspace};
    use ses_core::wavelet::{self, WaveletPyramid};

    use super::{field, to_py, Shape};

    type Dims = (usize, usize, usize);

    /// Orthonormal Haar decomposition; coefficients in flat pyramid order
    /// (LL first, then details from coarsest to finest).
    #[pyfunction]
    fn dwt2(data: Vec<f64>, shape: Dims, levels: usize) -> PyResult<Vec<f64>> {
        Ok(wavelet::dwt2(&field(data, shape)?, levels).map_err(to_py)?.to_flat())
    }

    /// Inverse of `dwt2`.
    #[pyfunction]
    fn idwt2(coefficients: Vec<f64>, shape: Dims, levels: usize) -> PyResult<Vec<f64>> {
        let p = WaveletPyramid::from_flat(Shape::new(shape.0, shape.1, shape.2), levels, &coefficients).map_err(to_py)?;
        Ok(wavelet::idwt2(&p).map_err(to_py)?.into_vec())
    }

    /// Frozen high-frequency details of a reference noise.
    #[pyclass(frozen)]
    struct Subspace {
        inner: SpectralSubspace,
    }

    #[pymethods]
    impl Subspace {
        #[getter]
        fn low_dim(&self) -> usize {
            self.inner.low_dim()
        }

        #[getter]
        fn level(&self) -> usize {
            self.inner.level()
        }

        /// Noise field with low-frequency coordinates `u` and the frozen details.
        fn reconstruct(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
            Ok(subspace::reconstruct(&LowFreqVector(u), &self.inner)
                .map_err(to_py)?
                .into_vec())
        }
    }

    /// Split a noise field into low-frequency coordinates and a subspace.
    #[pyfunction]
    #[pyo3(signature = (data, shape, level=4))]
    fn decouple(data: Vec<f64>, shape: Dims, level: usize) -> PyResult<(Vec<f64>, Subspace)> {
        let (u, s) = subspace::decouple(&field(data, shape)?, level).map_err(to_py)?;
        Ok((u.0, Subspace { inner: s }))
    }

    /// Standard-normal noise from a seed.
    #[pyfunction]
    fn standard_normal(shape: Dims, seed: u64) -> Vec<f64> {
        let s = Shape::new(shape.0, shape.1, shape.2);
        ses_core::field::NoiseField::standard_normal(s, &mut SeedStreams::new(seed).stream("python", 0)).into_vec()
    }

    /// Initial search distribution sample of dimension `dim`.
    #[pyfunction]
    fn sample_initial(dim: usize, seed: u64) -> Vec<f64> {
        init_distribution(dim).sample(&mut SeedStreams::new(seed).stream("python", 0)).0
    }

    /// Linear flow simulator with a power-law prior.
    #[pyclass(frozen)]
    struct FlowSim {
        inner: WienerFlowGenerator,
    }

    #[pymethods]
    impl FlowSim {
        #[new]
        #[pyo3(signature = (shape, beta=1.3, amplitude=1.0, delta=1e-3, steps=50))]
        fn new(shape: Dims, beta: f64, amplitude: f64, delta: f64, steps: usize) -> PyResult<Self> {
            let g = WienerFlowGenerator::new(
                Shape::new(shape.0, shape.1, shape.2),
                PowerLawPrior::new(beta, amplitude).map_err(to_py)?,
                FlowSchedule::rectified(delta).map_err(to_py)?,
                steps,
            )
            .map_err(to_py)?;
            Ok(Self { inner: g })
        }

        #[getter]
        fn steps(&self) -> usize {
            self.inner.steps()
        }

        /// Generated output for the noise `data`.
        fn integrate(&self, data: Vec<f64>) -> PyResult<Vec<f64>> {
            let s = self.inner.shape();
            let x = field(data, (s.channels, s.height, s.width))?;
            Ok(self.inner.integrate(&x).map_err(to_py)?.into_vec())
        }

        /// Predicted gain at frequency norm `omega` (radians per sample).
        fn gain(&self, omega: f64) -> f64 {
            cumulative_gain_closed_form(&self.inner, omega)
        }
    }

    /// Parsed and validated run configuration.
    #[pyclass(frozen)]
    struct RunConfig {
        inner: CoreRunConfig,
    }

    #[pymethods]
    impl RunConfig {
        #[staticmethod]
        fn from_toml(text: &str) -> PyResult<Self> {
            Ok(Self {
                inner: CoreRunConfig::from_toml_str(text).map_err(to_py)?,
            })
        }

        #[staticmethod]
        fn load(path: PathBuf) -> PyResult<Self> {
            Ok(Self {
                inner: CoreRunConfig::load(&path).map_err(to_py)?,
            })
        }

        fn to_toml(&self) -> PyResult<String> {
            self.inner.resolved().to_toml_string().map_err(to_py)
        }

        fn digest(&self) -> PyResult<String> {
            self.inner.digest().map_err(to_py)
        }

        #[getter]
        fn strategy(&self) -> &'static str {
            self.inner.strategy.name()
        }

        #[getter]
        fn seed(&self) -> u64 {
            self.inner.seed
        }

        #[getter]
        fn budget_nre(&self) -> u64 {
            self.inner.budget_nre
        }

        /// Run in memory. Returns a dict with the best score and noise, the
        /// evaluation count and one dict per record.
        fn search<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
            let scorer = self.inner.scorer().map_err(to_py)?;
            let out = py
                .detach(|| execute(&self.inner, scorer.as_ref()))
                .map_err(|a| to_py(a.error))?;
            let d = PyDict::new(py);
            d.set_item("best_score", out.best.score)?;
            d.set_item("best_eval_index", out.best.eval_index)?;
            d.set_item("nre_used", out.nre_used())?;
            d.set_item("best_noise", out.best_noise.as_slice().to_vec())?;
            d.set_item("final_noise", out.final_noise.as_slice().to_vec())?;
            let records = out
                .records
                .iter()
                .map(|r| {
                    let row = PyDict::new(py);
                    row.set_item("generation", r.generation)?;
                    row.set_item("nre_used", r.nre_used)?;
                    row.set_item("best_score_so_far", r.best_score_so_far)?;
                    row.set_item("generation_mean_score", r.generation_mean_score)?;
                    row.set_item("mu_norm", r.mu_norm)?;
                    row.set_item("var_trace_mean", r.var_trace_mean)?;
                    row.set_item("diversity", r.diversity)?;
                    Ok(row)
                })
                .collect::<PyResult<Vec<_>>>()?;
            d.set_item("records", records)?;
            Ok(d)
        }

        /// Run and write a run directory; returns the best score.
        fn run(&self, py: Python<'_>, out_dir: PathBuf) -> PyResult<f64> {
            let s = py.detach(|| run_to_dir(&self.inner, &out_dir)).map_err(to_py)?;
            Ok(s.best_score)
        }
    }

    /// Gain curve report; returns a dict with the CSV text and fitted slopes.
    #[pyfunction]
    #[pyo3(signature = (beta, size=64, bands=8, steps=400, seed=0))]
    fn validate_theory<'py>(
        py: Python<'py>,
        beta: f64,
        size: usize,
        bands: usize,
        steps: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let r = py
            .detach(|| theory::validate_theory(beta, size, bands, steps, seed))
            .map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("csv", r.to_csv())?;
        d.set_item("target_slope", r.target_slope)?;
        d.set_item("slope_empirical", r.empirical.fit.exponent)?;
        d.set_item("slope_closed_form", r.closed_form.fit.exponent)?;
        d.set_item("slope_piecewise", r.piecewise.fit.exponent)?;
        d.set_item("max_relative_error", r.max_relative_error())?;
        d.set_item("strictly_decreasing", r.all_decreasing())?;
        Ok(d)
    }

    /// Kendall tau-b between two score lists.
    #[pyfunction]
    fn kendall_tau_b(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
        ranking_consistency(&a, &b).map_err(to_py)
    }

    #[pyfunction]
    fn encode_noise(data: Vec<f64>, shape: Dims) -> PyResult<String> {
        Ok(protocol::encode_noise(&field(data, shape)?))
    }

    #[pyfunction]
    fn decode_noise(payload: &str, shape: Dims) -> PyResult<Vec<f64>> {
        Ok(protocol::decode_noise(payload, Shape::new(shape.0, shape.1, shape.2))
            .map_err(to_py)?
            .into_vec())
    }

    #[pyfunction]
    fn protocol_spec() -> &'static str {
        protocol::protocol_spec()
    }
}
