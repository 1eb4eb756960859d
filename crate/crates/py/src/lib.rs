//! Python module `adapted_ot`: lattices, bi-causal distances, path-tree
//! metrics and the Monte Carlo experiments.
//!
//! Coefficients are passed in their text form, e.g. `"kind=ou,theta=1"` or
//! `"0.5"`. Transport values are in power units.

use adapted_ot::acceptance::{run_criterion, Scale, CRITERIA};
use adapted_ot::estimate::{
    closed_form_cost, convergence_study, counterexample_nonmarkov, preset, presets, rho_scan, sync_distance_mc,
    Dynamics, LatticeSettings, SimSettings, Simulator,
};
use adapted_ot::lattice::{build_lattice, check_fosd, LatticeConfig};
use adapted_ot::model::{CoefficientSpec, DiscretePathMeasure, MarkovLattice, TimeGrid};
use adapted_ot::noise::sample_brownian;
use adapted_ot::sde::Scheme;
use adapted_ot::transport::{bicausal_dp, causal_lp, coupled_cost, kr_coupling, metric_suite, CausalMode, StateChain};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: adapted_ot::Error) -> PyErr {
    if e.is_divergence() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn coefficient(s: &str) -> PyResult<CoefficientSpec> {
    s.parse().map_err(err)
}

fn tree(paths: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> PyResult<DiscretePathMeasure> {
    match weights {
        Some(w) => DiscretePathMeasure::new(paths, w),
        None => DiscretePathMeasure::uniform(paths),
    }
    .map_err(err)
}

fn settings(scheme: &str, substeps: usize) -> PyResult<SimSettings> {
    Ok(SimSettings {
        scheme: scheme.parse::<Scheme>().map_err(err)?,
        substeps,
        ..SimSettings::default()
    })
}

fn pair(name: &str) -> PyResult<(Dynamics, Dynamics)> {
    let p = preset(name).map_err(err)?;
    Ok((p.x, p.y))
}

/// A finite Markov lattice approximating one SDE.
#[pyclass(name = "Lattice", module = "adapted_ot", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyLattice {
    inner: MarkovLattice,
}

#[pymethods]
impl PyLattice {
    #[staticmethod]
    #[pyo3(signature = (drift, vol, n_steps=8, atoms=5, max_support=40, trunc_k=4.0, x0=0.0))]
    fn build(
        drift: &str,
        vol: &str,
        n_steps: usize,
        atoms: usize,
        max_support: usize,
        trunc_k: f64,
        x0: f64,
    ) -> PyResult<Self> {
        let cfg = LatticeConfig {
            x0,
            n_steps,
            atoms,
            max_support,
            trunc_k,
        };
        let build = build_lattice(&coefficient(drift)?, &coefficient(vol)?, &cfg).map_err(err)?;
        Ok(PyLattice { inner: build.lattice })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyLattice {
            inner: MarkovLattice::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn n_stages(&self) -> usize {
        self.inner.n_stages()
    }

    fn support(&self, stage: usize) -> PyResult<Vec<f64>> {
        if stage > self.inner.n_stages() {
            return Err(PyValueError::new_err(format!("stage {stage} out of range")));
        }
        Ok(self.inner.support(stage).to_vec())
    }

    /// Probabilities of the support points at every stage.
    fn marginals(&self) -> Vec<Vec<f64>> {
        self.inner.marginals()
    }

    /// `(mean, variance)` at a stage.
    fn moments(&self, stage: usize) -> PyResult<(f64, f64)> {
        if stage > self.inner.n_stages() {
            return Err(PyValueError::new_err(format!("stage {stage} out of range")));
        }
        Ok(self.inner.moments(stage))
    }

    fn fosd_certified(&self) -> bool {
        check_fosd(&self.inner).is_certified()
    }

    fn __repr__(&self) -> String {
        format!("Lattice(n_stages={})", self.inner.n_stages())
    }
}

/// Bi-causal transport value between two lattices.
#[pyfunction]
#[pyo3(signature = (x, y, p=2.0, scaled=false))]
fn aw_distance(x: &PyLattice, y: &PyLattice, p: f64, scaled: bool) -> PyResult<f64> {
    let (cx, cy) = (StateChain::from(&x.inner), StateChain::from(&y.inner));
    Ok(bicausal_dp(&cx, &cy, p, scaled).map_err(err)?.value)
}

/// Cost of the Knothe–Rosenblatt coupling of two lattices.
#[pyfunction]
#[pyo3(signature = (x, y, p=2.0, scaled=false))]
fn kr_cost(x: &PyLattice, y: &PyLattice, p: f64, scaled: bool) -> PyResult<f64> {
    let (cx, cy) = (StateChain::from(&x.inner), StateChain::from(&y.inner));
    Ok(coupled_cost(&kr_coupling(&cx, &cy).map_err(err)?, p, scaled))
}

/// Transport LP between two path trees; `mode` is classical, causal,
/// anticausal or bicausal.
#[pyfunction]
#[pyo3(signature = (mu_paths, nu_paths, p=2.0, mode="bicausal", mu_weights=None, nu_weights=None))]
fn transport_lp(
    mu_paths: Vec<Vec<f64>>,
    nu_paths: Vec<Vec<f64>>,
    p: f64,
    mode: &str,
    mu_weights: Option<Vec<f64>>,
    nu_weights: Option<Vec<f64>>,
) -> PyResult<f64> {
    let mode = match mode {
        "classical" => CausalMode::Classical,
        "causal" => CausalMode::Causal,
        "anticausal" => CausalMode::Anticausal,
        "bicausal" => CausalMode::Bicausal,
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    causal_lp(&tree(mu_paths, mu_weights)?, &tree(nu_paths, nu_weights)?, p, mode).map_err(err)
}

/// Classical, causal (both directions) and bi-causal values as a dict.
#[pyfunction]
#[pyo3(signature = (mu_paths, nu_paths, p=2.0, mu_weights=None, nu_weights=None))]
fn metrics<'py>(
    py: Python<'py>,
    mu_paths: Vec<Vec<f64>>,
    nu_paths: Vec<Vec<f64>>,
    p: f64,
    mu_weights: Option<Vec<f64>>,
    nu_weights: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let s = metric_suite(&tree(mu_paths, mu_weights)?, &tree(nu_paths, nu_weights)?, p).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("wasserstein", s.wasserstein)?;
    d.set_item("causal", s.causal)?;
    d.set_item("causal_reverse", s.causal_reverse)?;
    d.set_item("symmetrized_causal", s.symmetrized_causal)?;
    d.set_item("adapted", s.adapted)?;
    Ok(d)
}

#[pyfunction]
fn preset_names() -> Vec<String> {
    presets().into_iter().map(|p| p.name).collect()
}

/// Closed-form synchronous cost of a preset, if one is known.
#[pyfunction]
#[pyo3(signature = (name, p=2.0))]
fn closed_form(name: &str, p: f64) -> PyResult<Option<f64>> {
    let (x, y) = pair(name)?;
    Ok(closed_form_cost(&x, &y, p))
}

/// Synchronous coupling cost of a preset: `(estimate, stderr)`.
#[pyfunction]
#[pyo3(signature = (name, n_steps=64, p=2.0, samples=10_000, seed=0, scheme="monotone-em", substeps=16))]
#[allow(clippy::too_many_arguments)]
fn sync_distance(
    py: Python<'_>,
    name: &str,
    n_steps: usize,
    p: f64,
    samples: usize,
    seed: u64,
    scheme: &str,
    substeps: usize,
) -> PyResult<(f64, f64)> {
    let (x, y) = pair(name)?;
    let grid = TimeGrid::new(n_steps).map_err(err)?;
    let s = settings(scheme, substeps)?;
    let e = py.detach(|| sync_distance_mc(&x, &y, grid, p, samples, &s, seed)).map_err(err)?;
    Ok((e.estimate, e.stderr))
}

/// Coupled cost per constant correlation: list of `(rho, estimate, stderr)`.
#[pyfunction]
#[pyo3(signature = (name, rhos, n_steps=32, p=2.0, samples=10_000, seed=0))]
fn rho_scan_preset(
    py: Python<'_>,
    name: &str,
    rhos: Vec<f64>,
    n_steps: usize,
    p: f64,
    samples: usize,
    seed: u64,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let (x, y) = pair(name)?;
    let grid = TimeGrid::new(n_steps).map_err(err)?;
    let rows = py
        .detach(|| rho_scan(&x, &y, grid, p, &rhos, samples, &SimSettings::default(), seed))
        .map_err(err)?;
    Ok(rows.into_iter().map(|r| (r.rho, r.estimate, r.stderr)).collect())
}

/// `(N, h, dp_scaled, kr_cost, mc_sync, mc_stderr)`
type ConvergenceRow = (usize, f64, f64, f64, f64, f64);

/// One row per step count.
#[pyfunction]
#[pyo3(signature = (name, n_list, p=2.0, samples=0, seed=0))]
fn convergence(
    py: Python<'_>,
    name: &str,
    n_list: Vec<usize>,
    p: f64,
    samples: usize,
    seed: u64,
) -> PyResult<Vec<ConvergenceRow>> {
    let (x, y) = pair(name)?;
    let rows = py
        .detach(|| {
            convergence_study(&x, &y, p, &n_list, &LatticeSettings::default(), samples, &SimSettings::default(), seed)
        })
        .map_err(err)?;
    Ok(rows
        .into_iter()
        .map(|r| (r.n, r.h, r.dp_scaled, r.kr_cost, r.mc_sync, r.mc_stderr))
        .collect())
}

/// Synchronous and asynchronous costs for the sign-switch drift:
/// `((sync, stderr), (async, stderr))`.
#[pyfunction]
#[pyo3(signature = (c=5.0, h_sw=0.1, p=2.0, n_steps=100, substeps=16, samples=10_000, seed=0))]
#[allow(clippy::too_many_arguments)]
fn counterexample(
    py: Python<'_>,
    c: f64,
    h_sw: f64,
    p: f64,
    n_steps: usize,
    substeps: usize,
    samples: usize,
    seed: u64,
) -> PyResult<((f64, f64), (f64, f64))> {
    let grid = TimeGrid::new(n_steps).map_err(err)?;
    let r = py
        .detach(|| counterexample_nonmarkov(c, h_sw, p, grid, substeps, samples, seed))
        .map_err(err)?;
    Ok(((r.sync.estimate, r.sync.stderr), (r.async_.estimate, r.async_.stderr)))
}

/// Sample paths on the coarse grid, one list per replicate.
#[pyfunction]
#[pyo3(signature = (drift, vol, n_steps=64, samples=10, seed=0, scheme="monotone-em", substeps=16, x0=0.0))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    drift: &str,
    vol: &str,
    n_steps: usize,
    samples: usize,
    seed: u64,
    scheme: &str,
    substeps: usize,
    x0: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let grid = TimeGrid::new(n_steps).map_err(err)?;
    let s = SimSettings {
        x0,
        ..settings(scheme, substeps)?
    };
    let sim = Simulator::new(&Dynamics::new(coefficient(drift)?, coefficient(vol)?), &s, grid).map_err(err)?;
    (0..samples as u64)
        .map(|i| Ok(sim.run(&sample_brownian(grid, substeps, seed, i)).map_err(err)?.coarse().values))
        .collect()
}

/// Acceptance criteria: list of `(id, name, passed, detail)`.
#[pyfunction]
#[pyo3(signature = (quick=true, only=None))]
fn selftest(py: Python<'_>, quick: bool, only: Option<Vec<usize>>) -> Vec<(usize, String, bool, String)> {
    let ids = only.unwrap_or_else(|| (1..=CRITERIA.len()).collect());
    let scale = if quick { Scale::Quick } else { Scale::Full };
    py.detach(|| {
        ids.iter()
            .map(|&id| {
                let r = run_criterion(id, scale);
                (r.id, r.name, r.passed, r.detail)
            })
            .collect()
    })
}

/// Adds every class and function to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLattice>()?;
    m.add_function(wrap_pyfunction!(aw_distance, m)?)?;
    m.add_function(wrap_pyfunction!(kr_cost, m)?)?;
    m.add_function(wrap_pyfunction!(transport_lp, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(sync_distance, m)?)?;
    m.add_function(wrap_pyfunction!(rho_scan_preset, m)?)?;
    m.add_function(wrap_pyfunction!(convergence, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}

#[pymodule(name = "adapted_ot")]
fn adapted_ot_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
