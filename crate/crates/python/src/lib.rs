//! Python bindings: optics, simulated DPC stacks, the reconstruction solvers,
//! the noise sensor, metrics and pupil learning. Images cross the boundary as
//! 2D float64 (or complex128) numpy arrays with the zero frequency at [0, 0].

use numpy::ndarray::Array2;
use numpy::{IntoPyArray, PyArray2, PyReadonlyArray2};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use qdpc::forward::{self, AcquisitionMeta, BackgroundSpec, TargetKind, TargetParams};
use qdpc::scenario::{Method, ScenarioConfig};
use qdpc::solvers::{PdParams, TvParams};
use qdpc::transfer::TransferFunction;
use qdpc::{metrics, ComplexImage, FrequencyGrid, RealImage};

fn err(e: qdpc::Error) -> PyErr {
    use qdpc::Error as E;
    match e {
        E::Io(_) | E::Npy(_) | E::Png(_) => PyIOError::new_err(e.to_string()),
        E::Divergence { .. } | E::Learning(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_numpy<'py>(py: Python<'py>, img: &RealImage) -> Bound<'py, PyArray2<f64>> {
    let g = img.grid();
    Array2::from_shape_vec((g.height(), g.width()), img.data().to_vec())
        .expect("image buffer matches its grid")
        .into_pyarray(py)
}

fn to_numpy_complex<'py>(py: Python<'py>, img: &ComplexImage) -> Bound<'py, PyArray2<qdpc::Complex64>> {
    let g = img.grid();
    Array2::from_shape_vec((g.height(), g.width()), img.data().to_vec())
        .expect("image buffer matches its grid")
        .into_pyarray(py)
}

fn from_numpy(arr: &PyReadonlyArray2<'_, f64>, grid: FrequencyGrid) -> PyResult<RealImage> {
    let view = arr.as_array();
    let (h, w) = view.dim();
    if (h, w) != (grid.height(), grid.width()) {
        return Err(PyValueError::new_err(format!(
            "array is {h}x{w}, expected {}x{}",
            grid.height(),
            grid.width()
        )));
    }
    RealImage::new(grid, view.iter().copied().collect()).map_err(err)
}

/// Grid from the array shape alone, for metrics.
fn plain(arr: &PyReadonlyArray2<'_, f64>) -> PyResult<RealImage> {
    let (h, w) = arr.as_array().dim();
    let grid = FrequencyGrid::new(w, h, 1.0, 1.0).map_err(err)?;
    from_numpy(arr, grid)
}

/// Microscope and camera parameters on a square grid.
#[pyclass(name = "Optics", frozen, from_py_object)]
#[derive(Clone, Debug)]
struct PyOptics {
    #[pyo3(get)]
    size: usize,
    #[pyo3(get)]
    na: f64,
    #[pyo3(get)]
    na_illum: f64,
    #[pyo3(get)]
    lambda_um: f64,
    #[pyo3(get)]
    pixel_size_um: f64,
    #[pyo3(get)]
    magnification: f64,
}

impl PyOptics {
    fn meta(&self) -> AcquisitionMeta {
        AcquisitionMeta {
            na: self.na,
            na_illum: self.na_illum,
            lambda_um: self.lambda_um,
            pixel_size_um: self.pixel_size_um,
            magnification: self.magnification,
        }
    }

    fn grid(&self) -> PyResult<FrequencyGrid> {
        FrequencyGrid::new(self.size, self.size, self.pixel_size_um, self.magnification).map_err(err)
    }

    fn tfs(&self, axes_deg: &[f64]) -> PyResult<Vec<TransferFunction>> {
        let axes: Vec<f64> = axes_deg.iter().map(|d| d.to_radians()).collect();
        qdpc::transfer::half_circle_ptfs(self.grid()?, self.na, self.na_illum, self.lambda_um, &axes).map_err(err)
    }
}

#[pymethods]
impl PyOptics {
    #[new]
    #[pyo3(signature = (size=256, na=0.25, na_illum=None, lambda_um=0.532, pixel_size_um=4.0, magnification=10.0))]
    fn new(
        size: usize,
        na: f64,
        na_illum: Option<f64>,
        lambda_um: f64,
        pixel_size_um: f64,
        magnification: f64,
    ) -> PyResult<Self> {
        let o = Self {
            size,
            na,
            na_illum: na_illum.unwrap_or(na),
            lambda_um,
            pixel_size_um,
            magnification,
        };
        o.grid()?;
        Ok(o)
    }

    /// Half-circle phase transfer functions, one complex array per axis.
    #[pyo3(signature = (axes_deg=vec![0.0, 90.0]))]
    fn transfer_functions<'py>(
        &self,
        py: Python<'py>,
        axes_deg: Vec<f64>,
    ) -> PyResult<Vec<Bound<'py, PyArray2<qdpc::Complex64>>>> {
        Ok(self.tfs(&axes_deg)?.iter().map(|tf| to_numpy_complex(py, tf.data())).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Optics(size={}, na={}, na_illum={}, lambda_um={}, pixel_size_um={}, magnification={})",
            self.size, self.na, self.na_illum, self.lambda_um, self.pixel_size_um, self.magnification
        )
    }
}

/// DPC images with the transfer functions that produced them.
#[pyclass(name = "DpcStack", from_py_object)]
#[derive(Clone)]
struct PyStack {
    inner: forward::DpcStack,
}

#[pymethods]
impl PyStack {
    /// Wraps measured DPC images taken with half-circle sources on `axes_deg`.
    #[new]
    #[pyo3(signature = (images, optics, axes_deg=vec![0.0, 90.0]))]
    fn new(images: Vec<PyReadonlyArray2<'_, f64>>, optics: &PyOptics, axes_deg: Vec<f64>) -> PyResult<Self> {
        let grid = optics.grid()?;
        let imgs = images.iter().map(|a| from_numpy(a, grid)).collect::<PyResult<Vec<_>>>()?;
        let inner = forward::DpcStack::new(imgs, optics.tfs(&axes_deg)?, optics.meta()).map_err(err)?;
        Ok(Self { inner })
    }

    /// Simulates a stack; returns `(stack, ground_truth)`.
    #[staticmethod]
    #[pyo3(signature = (optics, target="wedding-cake", snr_db=None, seed=0, background=true, axes_deg=vec![0.0, 90.0]))]
    fn simulate<'py>(
        py: Python<'py>,
        optics: &PyOptics,
        target: &str,
        snr_db: Option<f64>,
        seed: u64,
        background: bool,
        axes_deg: Vec<f64>,
    ) -> PyResult<(Self, Bound<'py, PyArray2<f64>>)> {
        let grid = optics.grid()?;
        let kind: TargetKind = target.parse().map_err(err)?;
        let gt = forward::phase_target(&kind, grid, &TargetParams::for_grid(&grid)).map_err(err)?;
        let d = ScenarioConfig::default();
        let bg = background.then(|| BackgroundSpec {
            layer_phase: forward::random_layer(grid, d.layer_seed, d.layer_bumps, d.layer_phase),
            z_um: d.z_um,
            mismatch: d.mismatch,
        });
        let stack = forward::simulate_stack(&gt, &optics.tfs(&axes_deg)?, optics.meta(), bg.as_ref(), snr_db, seed)
            .map_err(err)?;
        Ok((Self { inner: stack }, to_numpy(py, gt.image())))
    }

    #[getter]
    fn images<'py>(&self, py: Python<'py>) -> Vec<Bound<'py, PyArray2<f64>>> {
        self.inner.images.iter().map(|i| to_numpy(py, i)).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Out-of-band noise estimate sigma.
    fn noise_sigma(&self) -> PyResult<f64> {
        Ok(qdpc::sensor::noise_sigma(&self.inner).map_err(err)?.sigma)
    }

    /// Penalty weights `(alpha, beta)` from the noise sensor.
    fn auto_params(&self) -> PyResult<(f64, f64)> {
        qdpc::sensor::auto_params_for(&self.inner).map_err(err)
    }

    /// Phase by one of `l2`, `iso`, `tv`, `retinex-tv`, `pd`. Missing
    /// weights come from the noise sensor.
    #[pyo3(signature = (method="pd", alpha=None, beta=None, iters=50, omega=10.0))]
    fn reconstruct<'py>(
        &self,
        py: Python<'py>,
        method: &str,
        alpha: Option<f64>,
        beta: Option<f64>,
        iters: usize,
        omega: f64,
    ) -> PyResult<Bound<'py, PyArray2<f64>>> {
        let (alpha, beta) = self.weights(alpha, beta)?;
        let m = match method {
            "l2" => Method::L2 { alpha },
            "iso" => Method::Iso {
                alpha,
                beta,
                sigma_px: qdpc::scenario::ISO_SIGMA_PX,
            },
            "tv" => Method::Tv(TvParams::new(alpha, iters)),
            "retinex-tv" => Method::RetinexTv(TvParams::new(alpha, iters)),
            "pd" => Method::Pd(PdParams {
                max_iters: iters,
                omega,
                ..PdParams::with_weights(alpha, beta)
            }),
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown method {other:?} (expected l2, iso, tv, retinex-tv or pd)"
                )))
            }
        };
        let phase = py.detach(|| m.run(&self.inner)).map_err(err)?;
        Ok(to_numpy(py, phase.image()))
    }

    /// Pupil-driven reconstruction with its edge maps and cost trace, as a dict.
    #[pyo3(signature = (alpha=None, beta=None, iters=50, omega=10.0, isotropic=false))]
    fn reconstruct_pd<'py>(
        &self,
        py: Python<'py>,
        alpha: Option<f64>,
        beta: Option<f64>,
        iters: usize,
        omega: f64,
        isotropic: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let (alpha, beta) = self.weights(alpha, beta)?;
        let params = PdParams {
            max_iters: iters,
            omega,
            isotropic,
            ..PdParams::with_weights(alpha, beta)
        };
        let res = py.detach(|| qdpc::solvers::solve_pd(&self.inner, &params)).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("phase", to_numpy(py, res.phase.image()))?;
        d.set_item("edges", res.edge_maps.iter().map(|e| to_numpy(py, e)).collect::<Vec<_>>())?;
        d.set_item("initial_cost", res.initial_cost)?;
        d.set_item("cost_trace", res.cost_trace)?;
        d.set_item("iterations", res.iterations_run)?;
        d.set_item("alpha", res.alpha)?;
        d.set_item("beta", res.beta)?;
        Ok(d)
    }
}

impl PyStack {
    fn weights(&self, alpha: Option<f64>, beta: Option<f64>) -> PyResult<(f64, f64)> {
        if let (Some(a), Some(b)) = (alpha, beta) {
            return Ok((a, b));
        }
        let (sa, sb) = qdpc::sensor::auto_params_for(&self.inner).map_err(err)?;
        Ok((alpha.unwrap_or(sa), beta.unwrap_or(sb)))
    }
}

/// Regression SNR in dB, invariant to affine rescaling of `rec`.
#[pyfunction]
fn rpsnr(rec: PyReadonlyArray2<'_, f64>, gt: PyReadonlyArray2<'_, f64>) -> PyResult<f64> {
    metrics::rpsnr(&plain(&rec)?, &plain(&gt)?).map_err(err)
}

#[pyfunction]
fn psnr(rec: PyReadonlyArray2<'_, f64>, gt: PyReadonlyArray2<'_, f64>) -> PyResult<f64> {
    metrics::psnr(&plain(&rec)?, &plain(&gt)?).map_err(err)
}

#[pyfunction]
fn ssim(rec: PyReadonlyArray2<'_, f64>, gt: PyReadonlyArray2<'_, f64>) -> PyResult<f64> {
    metrics::ssim(&plain(&rec)?, &plain(&gt)?).map_err(err)
}

/// Reweighted soft threshold of a scalar.
#[pyfunction]
fn rst_shrink(v: f64, t: f64, omega: f64) -> f64 {
    qdpc::solvers::rst_shrink_scalar(v, t, omega)
}

/// Learns an illumination pupil for `edges` (`(normal angle in degrees,
/// weight)` pairs). Returns a dict with the final signed pupil `q`, the DPC
/// lobe `source`, the cost trace and summary statistics.
#[pyfunction]
#[pyo3(signature = (optics, edges=vec![(0.0, 1.0)], iters=25, seed=0))]
fn learn_pupil<'py>(
    py: Python<'py>,
    optics: &PyOptics,
    edges: Vec<(f64, f64)>,
    iters: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let total: f64 = edges.iter().map(|e| e.1).sum();
    if !(total > 0.0) {
        return Err(PyValueError::new_err("edge weights need a positive sum"));
    }
    let pupil = qdpc::pupils::objective_pupil(optics.grid()?, optics.na, optics.lambda_um).map_err(err)?;
    let cfg = qdpc::learn::LearnConfig {
        iters,
        seed,
        ..qdpc::learn::LearnConfig::new(pupil, edges.iter().map(|&(a, w)| (a.to_radians(), w / total)).collect())
    };
    let (source, trace) = py.detach(|| qdpc::learn::learn_pupil(&cfg)).map_err(err)?;
    let grid = optics.grid()?;
    let d = PyDict::new(py);
    d.set_item("q", to_numpy(py, &trace.final_q))?;
    d.set_item("source", to_numpy(py, &RealImage::new(grid, source.data().to_vec()).map_err(err)?))?;
    d.set_item("costs", trace.costs)?;
    d.set_item("annulus_energy", trace.annulus_energy)?;
    d.set_item("theta0_deg", source.theta0().to_degrees())?;
    Ok(d)
}

#[pymodule]
fn qdpc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOptics>()?;
    m.add_class::<PyStack>()?;
    m.add_function(wrap_pyfunction!(rpsnr, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(rst_shrink, m)?)?;
    m.add_function(wrap_pyfunction!(learn_pupil, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
