//! Python bindings: geometry, the lazy simulator, ensemble estimators,
//! exact oracle quantities and the LSRW coupling.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use dynperc::coupling;
use dynperc::estimators as est;
use dynperc::lattice::{Geometry, Vertex};
use dynperc::oracle;
use dynperc::rng::{self, Ensemble};
use dynperc::simulator::{Engine, InitialCondition, SimParams, SimState};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn geometry(d: usize, n: Option<u32>) -> PyResult<Geometry> {
    match n {
        Some(n) => Geometry::torus(d, n).map_err(err),
        None => Geometry::infinite(d).map_err(err),
    }
}

fn vertex(g: &Geometry, coords: &[i64]) -> PyResult<Vertex> {
    g.vertex(coords).map_err(err)
}

fn initial(g: &Geometry, name: &str) -> PyResult<InitialCondition> {
    Ok(match name {
        "stationary" if g.is_torus() => InitialCondition::StationaryUniformWalker,
        "stationary" | "origin" => InitialCondition::origin(g),
        "all_open" | "all_closed" => InitialCondition::ExplicitAll {
            open: name == "all_open",
            walker: g.origin(),
        },
        other => return Err(PyValueError::new_err(format!("unknown initial condition {other:?}"))),
    })
}

/// `T^{d,n}` when `n` is given, otherwise `Z^d`.
#[pyclass(name = "Geometry", frozen)]
struct PyGeometry {
    inner: Geometry,
}

#[pymethods]
impl PyGeometry {
    #[new]
    #[pyo3(signature = (d, n=None))]
    fn new(d: usize, n: Option<u32>) -> PyResult<Self> {
        Ok(PyGeometry { inner: geometry(d, n)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn side(&self) -> Option<i64> {
        self.inner.side()
    }

    fn vertex_count(&self) -> Option<usize> {
        self.inner.vertex_count()
    }

    fn edge_count(&self) -> Option<usize> {
        self.inner.edge_count()
    }

    fn neighbors(&self, v: Vec<i64>) -> PyResult<Vec<Vec<i64>>> {
        let v = vertex(&self.inner, &v)?;
        Ok(self.inner.neighbors(&v).into_iter().map(|u| u.coords().to_vec()).collect())
    }

    fn graph_distance(&self, a: Vec<i64>, b: Vec<i64>) -> PyResult<u64> {
        Ok(self.inner.graph_distance(&vertex(&self.inner, &a)?, &vertex(&self.inner, &b)?))
    }

    fn __repr__(&self) -> String {
        match self.inner.side() {
            Some(n) => format!("Geometry(d={}, n={n})", self.inner.dim()),
            None => format!("Geometry(d={})", self.inner.dim()),
        }
    }
}

/// Exact event-driven simulation with lazily revealed edges.
#[pyclass(name = "Simulator")]
struct PySimulator {
    inner: SimState,
}

#[pymethods]
impl PySimulator {
    #[new]
    #[pyo3(signature = (d, n, p, mu, seed=0, initial="stationary"))]
    fn new(d: usize, n: Option<u32>, p: f64, mu: f64, seed: u64, initial: &str) -> PyResult<Self> {
        let g = geometry(d, n)?;
        let ic = self::initial(&g, initial)?;
        let inner = SimState::init(&SimParams::new(g, p, mu, seed, ic)).map_err(err)?;
        Ok(PySimulator { inner })
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.time()
    }

    #[getter]
    fn walker(&self) -> Vec<i64> {
        self.inner.walker().coords().to_vec()
    }

    #[getter]
    fn lifted(&self) -> Vec<i64> {
        self.inner.lifted().to_vec()
    }

    #[getter]
    fn revealed_count(&self) -> usize {
        self.inner.revealed_count()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings().to_vec()
    }

    fn counters(&self) -> BTreeMap<&'static str, u64> {
        let c = self.inner.counters();
        BTreeMap::from([("attempts", c.attempts), ("moves", c.moves), ("refreshes", c.refreshes)])
    }

    /// Processes one event; returns `(time, moved)`.
    fn step(&mut self) -> (f64, bool) {
        let out = self.inner.step();
        (out.time(), out.moved())
    }

    fn run_until(&mut self, t: f64) -> PyResult<()> {
        self.inner.run_until(t).map_err(err)
    }

    fn is_regenerative(&mut self) -> bool {
        self.inner.is_regenerative()
    }

    /// Runs until the walker stands on `target`; `None` past the horizon.
    fn run_until_hit(&mut self, target: Vec<i64>, horizon: f64) -> PyResult<Option<f64>> {
        let v = vertex(self.inner.geometry(), &target)?;
        self.inner.run_until_hit(&v, horizon).map_err(err)
    }
}

fn params(d: usize, n: Option<u32>, p: f64, mu: f64, init: &str) -> PyResult<SimParams> {
    let g = geometry(d, n)?;
    let ic = initial(&g, init)?;
    Ok(SimParams::new(g, p, mu, 0, ic))
}

/// Mean squared displacement on `t_grid`: `(mean, ci_half)`.
#[pyfunction]
#[pyo3(signature = (d, n, p, mu, t_grid, replicas, seed=0, initial="stationary"))]
#[allow(clippy::too_many_arguments)]
fn estimate_msd(
    py: Python<'_>,
    d: usize,
    n: Option<u32>,
    p: f64,
    mu: f64,
    t_grid: Vec<f64>,
    replicas: usize,
    seed: u64,
    initial: &str,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let sp = params(d, n, p, mu, initial)?;
    let c = py
        .detach(|| est::estimate_msd(&sp, &t_grid, &Ensemble::new(seed, replicas)))
        .map_err(err)?;
    Ok((c.mean, c.ci_half_width))
}

/// Baseline-corrected walker TV profile: `(tv_corrected, tv_raw, crossing)`.
#[pyfunction]
#[pyo3(signature = (d, n, p, mu, epsilon, t_grid, replicas, seed=0))]
#[allow(clippy::too_many_arguments)]
fn estimate_tv_profile(
    py: Python<'_>,
    d: usize,
    n: u32,
    p: f64,
    mu: f64,
    epsilon: f64,
    t_grid: Vec<f64>,
    replicas: usize,
    seed: u64,
) -> PyResult<(Vec<f64>, Vec<f64>, Option<f64>)> {
    let sp = params(d, Some(n), p, mu, "origin")?;
    let prof = py
        .detach(|| est::estimate_tv_profile(&sp, epsilon, &t_grid, &Ensemble::new(seed, replicas)))
        .map_err(err)?;
    Ok((prof.curve.mean, prof.tv_raw, prof.crossing))
}

/// Mean hitting time from the origin: `(mean, ci_half, truncated_fraction)`.
#[pyfunction]
#[pyo3(signature = (d, n, p, mu, replicas, target=None, horizon=None, seed=0))]
#[allow(clippy::too_many_arguments)]
fn estimate_hitting(
    py: Python<'_>,
    d: usize,
    n: u32,
    p: f64,
    mu: f64,
    replicas: usize,
    target: Option<Vec<i64>>,
    horizon: Option<f64>,
    seed: u64,
) -> PyResult<(f64, f64, f64)> {
    let sp = params(d, Some(n), p, mu, "origin")?;
    let target = target.map(|t| vertex(&sp.geometry, &t)).transpose()?;
    let h = py
        .detach(|| est::estimate_hitting(&sp, target, horizon, &Ensemble::new(seed, replicas)))
        .map_err(err)?;
    Ok((h.mean_time, h.ci, h.truncated_fraction))
}

/// Diffusion constant from unit-block regenerations on `Z^d`.
#[pyfunction]
#[pyo3(signature = (d, p, mu, records, seed=0))]
fn sigma2_regeneration(py: Python<'_>, d: usize, p: f64, mu: f64, records: usize, seed: u64) -> PyResult<f64> {
    let sp = params(d, None, p, mu, "origin")?.with_seed(seed);
    py.detach(|| {
        let recs = est::collect_unit_regenerations(&sp, records, u64::MAX)?;
        est::sigma2_regeneration(&recs)
    })
    .map_err(err)
}

/// `(gap, increment)` pairs between observed regenerations on a torus.
#[pyfunction]
#[pyo3(signature = (d, n, p, mu, count, c_obs=1.0, seed=0))]
#[allow(clippy::too_many_arguments)]
fn collect_excursions(
    py: Python<'_>,
    d: usize,
    n: u32,
    p: f64,
    mu: f64,
    count: usize,
    c_obs: f64,
    seed: u64,
) -> PyResult<Vec<(u64, Vec<i64>)>> {
    let sp = params(d, Some(n), p, mu, "stationary")?.with_seed(seed);
    let settings = est::ExcursionSettings {
        block_constant: c_obs,
        count,
        ..Default::default()
    };
    let recs = py.detach(|| est::collect_excursions(&sp, &settings)).map_err(err)?;
    Ok(recs.into_iter().map(|r| (r.gap, r.increment)).collect())
}

/// `(probability, ci_half)` that the walker is within `kappa` of the origin at `c/mu`.
#[pyfunction]
#[pyo3(signature = (d, n, p, mu, kappa, c, replicas, seed=0))]
#[allow(clippy::too_many_arguments)]
fn freeze_probability(
    py: Python<'_>,
    d: usize,
    n: u32,
    p: f64,
    mu: f64,
    kappa: u64,
    c: f64,
    replicas: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let sp = params(d, Some(n), p, mu, "origin")?;
    let f = py
        .detach(|| est::freeze_probability(&sp, kappa, c, &Ensemble::new(seed, replicas)))
        .map_err(err)?;
    Ok((f.probability, f.ci_half))
}

#[pyfunction]
fn open_window_probability(p: f64, beta: f64) -> PyResult<f64> {
    est::open_window_probability(p, beta).map_err(err)
}

/// Steps until two coupled lazy walks started at `a` and `b` meet.
#[pyfunction]
#[pyo3(signature = (d, n, a, b, seed=0))]
fn lsrw_coupled_meet(d: usize, n: u32, a: Vec<i64>, b: Vec<i64>, seed: u64) -> PyResult<u64> {
    let g = geometry(d, Some(n))?;
    let (a, b) = (vertex(&g, &a)?, vertex(&g, &b)?);
    coupling::lsrw_coupled_meet(&g, (&a, &b), &mut rng::stream(seed)).map_err(err)
}

#[pyfunction]
fn exact_meet_time_1d(n: u32, k: u32) -> f64 {
    coupling::exact_meet_time_1d(n, k)
}

/// `(stationary, detailed_balance)` residuals of the exact generator.
#[pyfunction]
fn stationary_residual(d: usize, n: u32, p: f64, mu: f64) -> PyResult<(f64, f64)> {
    let gen = oracle::build_generator(d, n, p, mu).map_err(err)?;
    let r = oracle::stationary_residual(&gen);
    Ok((r.stationary, r.detailed_balance))
}

/// Exact walker law at time `t` from the origin in a stationary environment.
#[pyfunction]
fn exact_walker_marginal(d: usize, n: u32, p: f64, mu: f64, t: f64) -> PyResult<Vec<f64>> {
    let gen = oracle::build_generator(d, n, p, mu).map_err(err)?;
    let dist = oracle::marginal_at(&gen, &gen.walker_at_stationary_env(0), t).map_err(err)?;
    Ok(gen.walker_marginal(&dist))
}

#[pyfunction]
fn spectral_gap(d: usize, n: u32, p: f64, mu: f64) -> PyResult<f64> {
    let gen = oracle::build_generator(d, n, p, mu).map_err(err)?;
    oracle::spectral_gap(&gen).map_err(err)
}

/// Exact mean hitting time of vertex index `target` from the origin.
#[pyfunction]
fn exact_hitting_time(d: usize, n: u32, p: f64, mu: f64, target: usize) -> PyResult<f64> {
    let gen = oracle::build_generator(d, n, p, mu).map_err(err)?;
    oracle::expected_hitting_time(&gen, &gen.walker_at_stationary_env(0), target).map_err(err)
}

#[pyfunction]
fn derive_seed(master: u64, experiment: &str, grid_index: u64, replica: u64) -> u64 {
    rng::derive_seed(master, experiment, grid_index, replica)
}

#[pymodule]
fn pydynperc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("SEED_RULE_ID", rng::SEED_RULE_ID)?;
    m.add_class::<PyGeometry>()?;
    m.add_class::<PySimulator>()?;
    m.add_function(wrap_pyfunction!(estimate_msd, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_tv_profile, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_hitting, m)?)?;
    m.add_function(wrap_pyfunction!(sigma2_regeneration, m)?)?;
    m.add_function(wrap_pyfunction!(collect_excursions, m)?)?;
    m.add_function(wrap_pyfunction!(freeze_probability, m)?)?;
    m.add_function(wrap_pyfunction!(open_window_probability, m)?)?;
    m.add_function(wrap_pyfunction!(lsrw_coupled_meet, m)?)?;
    m.add_function(wrap_pyfunction!(exact_meet_time_1d, m)?)?;
    m.add_function(wrap_pyfunction!(stationary_residual, m)?)?;
    m.add_function(wrap_pyfunction!(exact_walker_marginal, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_gap, m)?)?;
    m.add_function(wrap_pyfunction!(exact_hitting_time, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    Ok(())
}
