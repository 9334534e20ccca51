//! Python bindings: `import mrm`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mrm_core::chaos::{self, ChaosSimulator, DiscreteMeasure};
use mrm_core::geometry::PullbackChart;
use mrm_core::io;
use mrm_core::kpz::{self, Reference};
use mrm_core::rng::{role, StreamKey};
use mrm_core::timechange;
use mrm_core::transport::{self, ChainedMap, MultiStepOptions, SinkhornOptions, Solver};
use mrm_core::Point;

fn err(e: mrm_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pairs(points: &[Point], m: usize) -> Vec<Vec<f64>> {
    points.iter().map(|p| p[..m].to_vec()).collect()
}

fn point(xs: &[f64]) -> PyResult<Point> {
    match *xs {
        [x] => Ok([x, 0.0]),
        [x, y] => Ok([x, y]),
        _ => Err(PyValueError::new_err("points have one or two coordinates")),
    }
}

#[pyclass(name = "ModelParams", frozen, from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    inner: mrm_core::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (m=2, gamma2=1.0, t=1.0, r=1.0, seed=0))]
    fn new(m: usize, gamma2: f64, t: f64, r: f64, seed: u64) -> PyResult<Self> {
        let inner = mrm_core::ModelParams::new(m, gamma2, t, r, seed).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn gamma2(&self) -> f64 {
        self.inner.gamma2
    }

    #[getter(T)]
    fn t(&self) -> f64 {
        self.inner.t
    }

    #[getter(R)]
    fn r(&self) -> f64 {
        self.inner.r
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn psi(&self, q: f64) -> f64 {
        self.inner.psi(q)
    }

    fn zeta(&self, q: f64) -> f64 {
        self.inner.zeta(q)
    }

    fn min_steps(&self) -> PyResult<usize> {
        self.inner.min_steps().map_err(err)
    }

    /// Header line `m=.. gamma2=.. T=.. R=.. seed=..`.
    fn header(&self) -> String {
        self.inner.to_header().emit()
    }

    fn __repr__(&self) -> String {
        format!("ModelParams({})", self.header())
    }
}

#[pyclass(name = "Measure", frozen, skip_from_py_object)]
struct PyMeasure {
    inner: DiscreteMeasure,
}

#[pymethods]
impl PyMeasure {
    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn atoms(&self) -> Vec<Vec<f64>> {
        pairs(&self.inner.atoms, self.inner.m)
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    #[getter]
    fn layers(&self) -> usize {
        self.inner.meta.layers
    }

    #[getter]
    fn grid(&self) -> Option<usize> {
        self.inner.meta.grid_n
    }

    fn total_mass(&self) -> f64 {
        self.inner.total_mass()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Writes the measure as a binary `.grid` file.
    fn save(&self, path: &str) -> PyResult<()> {
        io::GridFile::from_measure(&self.inner, &Default::default())
            .and_then(|g| g.write(path))
            .map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = io::GridFile::read(path).and_then(|g| g.to_measure()).map_err(err)?;
        Ok(Self { inner })
    }
}

/// One replica of the measure on a `grid^m` lattice.
#[pyfunction]
#[pyo3(signature = (params, grid, replica=0))]
fn simulate(params: &PyModelParams, grid: usize, replica: u64) -> PyResult<PyMeasure> {
    let sim = ChaosSimulator::new(&params.inner, grid).map_err(err)?;
    Ok(PyMeasure {
        inner: sim.measure(replica),
    })
}

/// Layers `M^(0)` (Lebesgue) to `M^(n)`.
#[pyfunction]
#[pyo3(signature = (params, n, grid, replica=0))]
fn compose(params: &PyModelParams, n: usize, grid: usize, replica: u64) -> PyResult<Vec<PyMeasure>> {
    let layers = chaos::compose_chaos(&params.inner, n, grid, replica).map_err(err)?;
    Ok(layers.into_iter().map(|inner| PyMeasure { inner }).collect())
}

#[pyclass(name = "TransportChain", frozen, skip_from_py_object)]
struct PyChain {
    inner: ChainedMap,
}

#[pymethods]
impl PyChain {
    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps.len()
    }

    #[getter]
    fn solver(&self) -> &'static str {
        self.inner.kind.as_str()
    }

    #[getter]
    fn atoms(&self) -> Vec<Vec<f64>> {
        pairs(&self.inner.atoms, self.inner.m)
    }

    #[getter]
    fn images(&self) -> Vec<Vec<f64>> {
        pairs(&self.inner.images, self.inner.m)
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    #[getter]
    fn costs(&self) -> Vec<f64> {
        self.inner.steps.iter().map(|s| s.map.cost).collect()
    }

    #[getter]
    fn marginal_errors(&self) -> Vec<f64> {
        self.inner.steps.iter().map(|s| s.info.marginal_error()).collect()
    }

    #[getter]
    fn mass_b_r(&self) -> f64 {
        self.inner.mass_b_r
    }

    #[getter]
    fn c_r(&self) -> f64 {
        self.inner.c_r
    }

    #[getter]
    fn quantization_tv(&self) -> f64 {
        self.inner.quantization_tv
    }

    /// Total variation between the binned pushforward and `lambda_R`.
    fn binned_tv(&self) -> f64 {
        transport::total_variation(&self.inner.pushforward(true), &self.inner.lambda_r())
    }

    fn save(&self, path: &str) -> PyResult<()> {
        io::write_tmap_file(path, &self.inner, &Default::default()).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: io::read_tmap_file(path).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Multi-step transport of `M^(n)` to `lambda_R`; `steps=None` uses the
/// minimum admissible count.
#[pyfunction]
#[pyo3(signature = (params, grid, steps=None, replica=0, solver="auto", epsilon=1e-3, tol=1e-7, max_iter=20000, halvings=3, exact_threshold=4096))]
#[allow(clippy::too_many_arguments)]
fn transport_chain(
    params: &PyModelParams,
    grid: usize,
    steps: Option<usize>,
    replica: u64,
    solver: &str,
    epsilon: f64,
    tol: f64,
    max_iter: usize,
    halvings: u32,
    exact_threshold: usize,
) -> PyResult<PyChain> {
    let n = match steps {
        Some(n) => n,
        None => params.inner.min_steps().map_err(err)?,
    };
    let options = MultiStepOptions {
        solver: solver.parse::<Solver>().map_err(err)?,
        exact_threshold,
        sinkhorn: SinkhornOptions {
            epsilon,
            tol,
            max_iter,
            halvings,
        },
    };
    let layers = chaos::compose_chaos(&params.inner, n, grid, replica).map_err(err)?;
    let inner = transport::multi_step(&layers, &options).map_err(err)?;
    Ok(PyChain { inner })
}

#[pyclass(name = "Chart", frozen, skip_from_py_object)]
struct PyChart {
    inner: PullbackChart,
    m: usize,
}

#[pymethods]
impl PyChart {
    #[new]
    fn new(chain: &PyChain) -> PyResult<Self> {
        Ok(Self {
            inner: PullbackChart::new(&chain.inner).map_err(err)?,
            m: chain.inner.m,
        })
    }

    fn metric_factor(&self) -> f64 {
        self.inner.metric_factor()
    }

    /// Index of the support atom nearest to `x`.
    fn locate(&self, x: Vec<f64>) -> PyResult<usize> {
        Ok(self.inner.locate(&point(&x)?).index)
    }

    fn dist(&self, i: usize, j: usize) -> PyResult<f64> {
        self.inner.dist(i, j).map_err(err)
    }

    /// Atoms along the geodesic from atom `i` to atom `j`.
    #[pyo3(signature = (i, j, samples=65))]
    fn geodesic(&self, i: usize, j: usize, samples: usize) -> PyResult<Vec<Vec<f64>>> {
        let line = self.inner.geodesic_polyline(j, i, samples).map_err(err)?;
        Ok(pairs(&line.points, self.m))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

fn report(py: Python<'_>, items: &[(&str, f64)]) -> PyResult<Py<PyDict>> {
    let d = PyDict::new(py);
    for (k, v) in items {
        d.set_item(*k, *v)?;
    }
    Ok(d.unbind())
}

/// Structure exponents from centered-ball moments.
#[pyfunction]
#[pyo3(signature = (params, qs, radii, replicas, grid))]
fn estimate_zeta(
    py: Python<'_>,
    params: &PyModelParams,
    qs: Vec<f64>,
    radii: Vec<f64>,
    replicas: usize,
    grid: usize,
) -> PyResult<Py<PyDict>> {
    let r = py
        .detach(|| chaos::estimate_zeta(&params.inner, &qs, &radii, replicas, grid))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("qs", r.qs)?;
    d.set_item("zeta_hat", r.zeta_hat)?;
    d.set_item("stderr", r.stderr)?;
    d.set_item("warnings", r.warnings)?;
    Ok(d.unbind())
}

/// Box-counting dimension of `points` relative to Lebesgue measure or to
/// the given measures (log contents averaged over them).
#[pyfunction]
#[pyo3(signature = (points, levels, radius=1.0, measures=None))]
fn hausdorff_estimate(
    py: Python<'_>,
    points: Vec<Vec<f64>>,
    levels: Vec<u32>,
    radius: f64,
    measures: Option<Vec<PyRef<'_, PyMeasure>>>,
) -> PyResult<f64> {
    let e = points.iter().map(|p| point(p)).collect::<PyResult<Vec<_>>>()?;
    let est = match measures {
        None => kpz::hausdorff_estimate(&e, Reference::Lebesgue, radius, &levels),
        Some(ms) => {
            let ms: Vec<DiscreteMeasure> = ms.iter().map(|m| m.inner.clone()).collect();
            py.detach(|| kpz::hausdorff_estimate_replicas(&e, &ms, radius, &levels))
        }
    };
    Ok(est.map_err(err)?.s_hat)
}

/// Lower root `s` of `xi(s / 2) = d`.
#[pyfunction]
fn kpz_inverse(params: &PyModelParams, d: f64) -> PyResult<f64> {
    kpz::kpz_inverse(&params.inner, d).map_err(err)
}

/// KPZ check on a horizontal segment across the domain.
#[pyfunction]
#[pyo3(signature = (params, replicas, grid, levels))]
fn kpz_segment(
    py: Python<'_>,
    params: &PyModelParams,
    replicas: u64,
    grid: usize,
    levels: Vec<u32>,
) -> PyResult<Py<PyDict>> {
    let p = params.inner;
    let finest = levels.iter().copied().max().unwrap_or(3);
    let e = kpz::segment([-p.r, 0.137 * p.r], [p.r, 0.137 * p.r], kpz::dyadic_side(p.r, finest) / 4.0);
    let r = py
        .detach(|| {
            let sim = ChaosSimulator::new(&p, grid)?;
            let ms: Vec<DiscreteMeasure> = (0..replicas).map(|k| sim.measure(k)).collect();
            kpz::kpz_check(&p, &e, 1.0, &ms, &levels)
        })
        .map_err(err)?;
    report(
        py,
        &[
            ("s_hat", r.estimate.s_hat),
            ("xi_of_half", r.xi_of_half),
            ("s_target", r.s_target),
            ("spread", r.spread),
        ],
    )
}

/// Brownian motion on the clock of a 1D measure: `(t, clock, values)`.
#[pyfunction]
#[pyo3(signature = (measure, resolution=4, seed=0, replica=0))]
fn time_change(
    measure: &PyMeasure,
    resolution: usize,
    seed: u64,
    replica: u64,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let key = StreamKey::new(seed, replica, 1, role::BROWNIAN);
    let p = timechange::time_change_1d(&measure.inner, resolution, key).map_err(err)?;
    Ok((p.t, p.clock, p.values))
}

/// Corner field of a chain at `points`: `(values, variances, total_variance)`.
#[pyfunction]
#[pyo3(signature = (chain, points, seed=0))]
fn corner_field(chain: &PyChain, points: Vec<Vec<f64>>, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let pts = points.iter().map(|p| point(p)).collect::<PyResult<Vec<_>>>()?;
    let key = StreamKey::new(seed, 0, 1, role::WHITE_NOISE);
    let f = timechange::corner_field(&chain.inner, &pts, key).map_err(err)?;
    let total = f.total_variance();
    Ok((f.values, f.variances, total))
}

#[pymodule]
fn mrm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyMeasure>()?;
    m.add_class::<PyChain>()?;
    m.add_class::<PyChart>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(compose, m)?)?;
    m.add_function(wrap_pyfunction!(transport_chain, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_zeta, m)?)?;
    m.add_function(wrap_pyfunction!(hausdorff_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(kpz_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(kpz_segment, m)?)?;
    m.add_function(wrap_pyfunction!(time_change, m)?)?;
    m.add_function(wrap_pyfunction!(corner_field, m)?)?;
    Ok(())
}
