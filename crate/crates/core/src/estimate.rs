//! Monte Carlo estimators and experiment drivers.
//!
//! Costs `∫_0^1 |X_t − Y_t|^p dt` are integrated exactly over the piecewise
//! linear interpolation of the difference path at substep resolution.
//! Standard errors use batch means over contiguous replicate blocks, and all
//! sums run in replicate order so results do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{build_lattice, check_fosd, lattice_barrier, LatticeConfig};
use crate::model::{CoefficientSpec, TimeGrid};
use crate::noise::{sample_brownian, sample_correlated_pair, RhoControl, DEFAULT_SUBSTEPS};
use crate::sde::{
    euler_maruyama, monotone_em, transformed_monotone_em, zvonkin_transform, FinePath, Scheme,
    ZvonkinConfig, ZvonkinTransform,
};
use crate::transport::{bicausal_dp, coupled_cost, kr_coupling, StateChain};

/// Batches used for batch-means standard errors.
pub const BATCHES: usize = 20;

/// Largest tolerated fraction of diverging replicates.
pub const MAX_DIVERGENCE_FRACTION: f64 = 1e-3;

/// Drift and diffusion of one SDE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    pub drift: CoefficientSpec,
    pub vol: CoefficientSpec,
}

impl Dynamics {
    pub fn new(drift: CoefficientSpec, vol: CoefficientSpec) -> Self {
        Dynamics { drift, vol }
    }
}

/// Scheme settings shared by both marginals of a coupled simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub scheme: Scheme,
    pub substeps: usize,
    pub trunc_k: f64,
    pub x0: f64,
    pub zvonkin: ZvonkinConfig,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            scheme: Scheme::MonotoneEm,
            substeps: DEFAULT_SUBSTEPS,
            trunc_k: 4.0,
            x0: 0.0,
            zvonkin: ZvonkinConfig::default(),
        }
    }
}

/// A prepared scheme for one SDE.
pub struct Simulator {
    dynamics: Dynamics,
    settings: SimSettings,
    grid: TimeGrid,
    barrier: f64,
    transform: Option<ZvonkinTransform>,
}

impl Simulator {
    pub fn new(dynamics: &Dynamics, settings: &SimSettings, grid: TimeGrid) -> Result<Self> {
        if settings.substeps == 0 {
            return Err(Error::Config("substeps must be positive".into()));
        }
        let barrier = match settings.scheme {
            Scheme::Em => f64::INFINITY,
            _ => lattice_barrier(grid.n_steps, settings.trunc_k)?,
        };
        let transform = match settings.scheme {
            Scheme::ZvonkinEm => Some(zvonkin_transform(
                &dynamics.drift,
                &dynamics.vol,
                settings.x0,
                settings.zvonkin,
            )?),
            _ => None,
        };
        Ok(Simulator {
            dynamics: dynamics.clone(),
            settings: *settings,
            grid,
            barrier,
            transform,
        })
    }

    pub fn run(&self, dw: &[f64]) -> Result<FinePath> {
        let (d, s) = (&self.dynamics, &self.settings);
        match (&self.transform, s.scheme) {
            (Some(zt), _) => transformed_monotone_em(zt, self.grid, s.substeps, self.barrier, dw),
            (None, Scheme::Em) => euler_maruyama(&d.drift, &d.vol, s.x0, self.grid, s.substeps, dw),
            (None, _) if self.barrier.is_infinite() => {
                euler_maruyama(&d.drift, &d.vol, s.x0, self.grid, s.substeps, dw)
            }
            (None, _) => monotone_em(&d.drift, &d.vol, s.x0, self.grid, s.substeps, self.barrier, dw),
        }
    }
}

/// `∫ |d(t)|^p dt` over one interval of length `dt` on which `d` is linear
/// from `a` to `b`.
pub fn segment_integral(a: f64, b: f64, dt: f64, p: f64) -> f64 {
    if p == 2.0 {
        return dt * (a * a + a * b + b * b) / 3.0;
    }
    let (fa, fb) = (a.abs(), b.abs());
    if a == b {
        return dt * fa.powf(p);
    }
    if a.signum() == b.signum() || a == 0.0 || b == 0.0 {
        let (lo, hi) = if fa < fb { (fa, fb) } else { (fb, fa) };
        dt * (hi.powf(p + 1.0) - lo.powf(p + 1.0)) / ((p + 1.0) * (hi - lo))
    } else {
        dt * (fa.powf(p + 1.0) + fb.powf(p + 1.0)) / ((p + 1.0) * (fa + fb))
    }
}

/// Integrated `|x − y|^p` along two paths on the same fine grid.
pub fn path_cost(x: &[f64], y: &[f64], dt: f64, p: f64) -> f64 {
    let mut total = 0.0;
    for j in 1..x.len() {
        total += segment_integral(x[j - 1] - y[j - 1], x[j] - y[j], dt, p);
    }
    total
}

/// Mean and standard error of replicate values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n_used: usize,
    pub n_diverged: usize,
}

impl McEstimate {
    /// `|estimate − target| ≤ k·stderr`, with a relative floor of 1e−9 for
    /// estimators whose replicates are all identical.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.estimate - target).abs() <= k * self.stderr + 1e-9 * target.abs().max(1e-300)
    }
}

/// Batch-means summary of values in replicate order.
pub fn batch_means(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 * BATCHES {
        if n < 2 {
            return (mean, f64::NAN);
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        return (mean, (var / n as f64).sqrt());
    }
    let means: Vec<f64> = (0..BATCHES)
        .map(|b| {
            let (lo, hi) = (b * n / BATCHES, (b + 1) * n / BATCHES);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let bm = means.iter().sum::<f64>() / BATCHES as f64;
    let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    (mean, (var / BATCHES as f64).sqrt())
}

/// Runs `n` replicates in parallel and summarizes them, tolerating at most
/// 0.1% numerically diverging ones.
fn replicate_values<F>(n: usize, f: F) -> Result<(Vec<f64>, usize)>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    if n == 0 {
        return Err(Error::Config("need at least one replicate".into()));
    }
    let results: Vec<Result<f64>> = (0..n as u64).into_par_iter().map(&f).collect();
    let mut values = Vec::with_capacity(n);
    let mut failed = 0;
    let mut first = None;
    for r in results {
        match r {
            Ok(v) => values.push(v),
            Err(e) if e.is_divergence() => {
                failed += 1;
                first.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    if failed as f64 > MAX_DIVERGENCE_FRACTION * n as f64 {
        return Err(Error::TooManyDivergences {
            failed,
            total: n,
            first: first.map(|e| e.to_string()).unwrap_or_default(),
        });
    }
    Ok((values, failed))
}

fn summarize(values: &[f64], diverged: usize) -> McEstimate {
    let (estimate, stderr) = batch_means(values);
    McEstimate {
        estimate,
        stderr,
        n_used: values.len(),
        n_diverged: diverged,
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Domain(format!("cost order p = {p} must be ≥ 1")));
    }
    Ok(())
}

/// Per-replicate costs of the pair driven by `(W, W̄)` with correlation `ρ`;
/// `None` means the synchronous coupling `W̄ = W`.
fn coupled_costs(
    x: &Dynamics,
    y: &Dynamics,
    grid: TimeGrid,
    p: f64,
    n: usize,
    settings: &SimSettings,
    seed: u64,
    rho: Option<&RhoControl>,
) -> Result<(Vec<f64>, usize)> {
    check_p(p)?;
    let sx = Simulator::new(x, settings, grid)?;
    let sy = Simulator::new(y, settings, grid)?;
    let dt = grid.h() / settings.substeps as f64;
    replicate_values(n, |i| {
        let (dw, dw_bar) = match rho {
            None => {
                let dw = sample_brownian(grid, settings.substeps, seed, i);
                (dw.clone(), dw)
            }
            Some(r) => {
                let block = sample_correlated_pair(grid, r, settings.substeps, seed, i)?;
                (block.dw, block.dw_bar)
            }
        };
        let px = sx.run(&dw)?;
        let py = sy.run(&dw_bar)?;
        Ok(path_cost(&px.values, &py.values, dt, p))
    })
}

/// `E ∫_0^1 |X_t − Y_t|^p dt` with both SDEs driven by one Wiener process.
pub fn sync_distance_mc(
    x: &Dynamics,
    y: &Dynamics,
    grid: TimeGrid,
    p: f64,
    n_samples: usize,
    settings: &SimSettings,
    seed: u64,
) -> Result<McEstimate> {
    let (v, d) = coupled_costs(x, y, grid, p, n_samples, settings, seed, None)?;
    Ok(summarize(&v, d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoScanRow {
    pub rho: f64,
    pub estimate: f64,
    pub stderr: f64,
}

/// Coupled cost for each constant correlation, on common random numbers.
pub fn rho_scan(
    x: &Dynamics,
    y: &Dynamics,
    grid: TimeGrid,
    p: f64,
    rho_values: &[f64],
    n_samples: usize,
    settings: &SimSettings,
    seed: u64,
) -> Result<Vec<RhoScanRow>> {
    rho_values
        .iter()
        .map(|&rho| {
            let control = RhoControl::constant(rho)?;
            let (v, d) = coupled_costs(x, y, grid, p, n_samples, settings, seed, Some(&control))?;
            let e = summarize(&v, d);
            Ok(RhoScanRow {
                rho,
                estimate: e.estimate,
                stderr: e.stderr,
            })
        })
        .collect()
}

/// `(c, s)` if both coefficients are constant.
fn constant_pair(d: &Dynamics) -> Option<(f64, f64)> {
    let c = |spec: &CoefficientSpec| match *spec {
        CoefficientSpec::Constant { c } => Some(c),
        CoefficientSpec::Affine { a, slope: 0.0 } => Some(a),
        _ => None,
    };
    Some((c(&d.drift)?, c(&d.vol)?))
}

/// Synchronous cost for constant coefficients driven with correlation `ρ`:
/// `(c₁ − c₂)²/3 + (s² + s̄² − 2ρ s s̄)/2`.
pub fn closed_form_rho_cost(c1: f64, s1: f64, c2: f64, s2: f64, rho: f64) -> f64 {
    (c1 - c2).powi(2) / 3.0 + (s1 * s1 + s2 * s2 - 2.0 * rho * s1 * s2) / 2.0
}

/// `∫_0^1 E D_t² dt` for `dD = −θ D dt + δ dW`, `D_0 = 0`.
pub fn ou_gap_cost(theta: f64, delta: f64) -> f64 {
    delta * delta * (1.0 / (2.0 * theta) - (1.0 - (-2.0 * theta).exp()) / (4.0 * theta * theta))
}

/// Exact synchronous cost for the recognized families at `p = 2`, started
/// from a common point: constant coefficients, and OU drifts with a common
/// rate and constant diffusions.
pub fn closed_form_cost(x: &Dynamics, y: &Dynamics, p: f64) -> Option<f64> {
    if p != 2.0 {
        return None;
    }
    if let (Some((c1, s1)), Some((c2, s2))) = (constant_pair(x), constant_pair(y)) {
        return Some(closed_form_rho_cost(c1, s1, c2, s2, 1.0));
    }
    match (&x.drift, &y.drift, &x.vol, &y.vol) {
        (
            CoefficientSpec::Ou { theta: t1 },
            CoefficientSpec::Ou { theta: t2 },
            CoefficientSpec::Constant { c: s1 },
            CoefficientSpec::Constant { c: s2 },
        ) if t1 == t2 && *t1 > 0.0 => Some(ou_gap_cost(*t1, s1 - s2)),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    /// Scaled bi-causal value, in power units.
    pub dp_scaled: f64,
    /// Scaled cost of the Knothe–Rosenblatt coupling of the two lattices.
    pub kr_cost: f64,
    pub mc_sync: f64,
    pub mc_stderr: f64,
    pub fosd_certified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSettings {
    pub atoms: usize,
    pub max_support: usize,
    pub trunc_k: f64,
}

impl Default for LatticeSettings {
    fn default() -> Self {
        LatticeSettings {
            atoms: 5,
            max_support: 40,
            trunc_k: 4.0,
        }
    }
}

/// Scaled lattice DP, KR cost and Monte Carlo synchronous cost per step count.
pub fn convergence_study(
    x: &Dynamics,
    y: &Dynamics,
    p: f64,
    n_list: &[usize],
    lattice: &LatticeSettings,
    mc_samples: usize,
    settings: &SimSettings,
    seed: u64,
) -> Result<Vec<ConvergenceRow>> {
    check_p(p)?;
    n_list
        .iter()
        .map(|&n| {
            let cfg = LatticeConfig {
                x0: settings.x0,
                n_steps: n,
                atoms: lattice.atoms,
                max_support: lattice.max_support,
                trunc_k: lattice.trunc_k,
            };
            let lx = build_lattice(&x.drift, &x.vol, &cfg)?.lattice;
            let ly = build_lattice(&y.drift, &y.vol, &cfg)?.lattice;
            let certified = check_fosd(&lx).is_certified() && check_fosd(&ly).is_certified();
            let (cx, cy) = (StateChain::from(&lx), StateChain::from(&ly));
            let dp = bicausal_dp(&cx, &cy, p, true)?;
            let kr = coupled_cost(&kr_coupling(&cx, &cy)?, p, true);
            let grid = TimeGrid::new(n)?;
            let mc = if mc_samples > 0 {
                sync_distance_mc(x, y, grid, p, mc_samples, settings, seed)?
            } else {
                McEstimate { estimate: f64::NAN, stderr: f64::NAN, n_used: 0, n_diverged: 0 }
            };
            Ok(ConvergenceRow {
                n,
                h: grid.h(),
                dp_scaled: dp.value,
                kr_cost: kr,
                mc_sync: mc.estimate,
                mc_stderr: mc.stderr,
                fosd_certified: certified,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub level: usize,
    pub cost: f64,
    pub cost_stderr: f64,
    /// `|cost − target cost|`
    pub gap: f64,
    /// Standard error of the replicate-wise cost difference.
    pub gap_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityStudy {
    pub target: McEstimate,
    pub rows: Vec<StabilityRow>,
}

/// Synchronous costs against `y` for a sequence of approximations of
/// `target`, all on common random numbers.
pub fn stability_study(
    target: &Dynamics,
    sequence: &[Dynamics],
    y: &Dynamics,
    grid: TimeGrid,
    p: f64,
    n_samples: usize,
    settings: &SimSettings,
    seed: u64,
) -> Result<StabilityStudy> {
    let (base, bd) = coupled_costs(target, y, grid, p, n_samples, settings, seed, None)?;
    if bd > 0 {
        return Err(Error::Config("target simulation diverged; stability needs all replicates".into()));
    }
    let rows = sequence
        .iter()
        .enumerate()
        .map(|(level, d)| {
            let (v, dv) = coupled_costs(d, y, grid, p, n_samples, settings, seed, None)?;
            if dv > 0 {
                return Err(Error::Config("approximation diverged; stability needs all replicates".into()));
            }
            let (cost, cost_stderr) = batch_means(&v);
            let diff: Vec<f64> = v.iter().zip(&base).map(|(a, b)| a - b).collect();
            let (_, gap_stderr) = batch_means(&diff);
            Ok(StabilityRow {
                level,
                cost,
                cost_stderr,
                gap: (cost - batch_means(&base).0).abs(),
                gap_stderr,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityStudy {
        target: summarize(&base, 0),
        rows,
    })
}

/// Piecewise-linear interpolant of `f` on knots `(i + ½)·2^{−level}`
/// covering `[−range, range]`. The offset keeps a kink at 0 off the knots.
pub fn offset_table(level: u32, range: f64, f: impl Fn(f64) -> f64) -> Result<CoefficientSpec> {
    let dx = 0.5f64.powi(level as i32);
    let n = (range / dx).ceil() as i64 + 1;
    let knots: Vec<f64> = (-n..n).map(|i| (i as f64 + 0.5) * dx).collect();
    CoefficientSpec::tabulate(knots, f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleResult {
    pub sync: McEstimate,
    pub async_: McEstimate,
    /// Standard error of the replicate-wise difference `sync − async`.
    pub diff_stderr: f64,
    pub sync_closed_form: f64,
    pub async_closed_form: f64,
}

/// `X = W + C sign(W_s)(t − s)₊` against `X̄ = W̄ − C sign(W̄_s)(t − s)₊`,
/// coupled with `W̄ = W` (synchronous) or `W̄ = −W` (asynchronous), where
/// `s` is the switch time. Both laws coincide; the synchronous difference is
/// `2C sign(W_s)(t − s)₊` and the asynchronous one is `2W`.
pub fn counterexample_nonmarkov(
    c: f64,
    h_sw: f64,
    p: f64,
    grid: TimeGrid,
    substeps: usize,
    n_samples: usize,
    seed: u64,
) -> Result<CounterexampleResult> {
    check_p(p)?;
    if !(c >= 0.0) || !(h_sw > 0.0 && h_sw < 1.0) {
        return Err(Error::Domain("need C ≥ 0 and 0 < h_sw < 1".into()));
    }
    let k_sw = grid
        .index_of(h_sw)
        .ok_or_else(|| Error::Config(format!("switch time {h_sw} is not a grid point")))?;
    if substeps == 0 {
        return Err(Error::Config("substeps must be positive".into()));
    }
    let dt = grid.h() / substeps as f64;
    let j_sw = k_sw * substeps;
    let pairs: Vec<Result<(f64, f64)>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let dw = sample_brownian(grid, substeps, seed, i);
            let mut w = Vec::with_capacity(dw.len() + 1);
            w.push(0.0);
            let mut s = 0.0;
            for d in &dw {
                s += d;
                w.push(s);
            }
            let sign = w[j_sw].signum();
            let path = |wbar_sign: f64| -> Vec<f64> {
                w.iter()
                    .enumerate()
                    .map(|(j, &wt)| {
                        let t = j as f64 * dt;
                        let ramp = (t - h_sw).max(0.0);
                        let x = wt + c * sign * ramp;
                        let wb = wbar_sign * wt;
                        let xb = wb - c * (wbar_sign * sign) * ramp;
                        x - xb
                    })
                    .collect()
            };
            let zeros = vec![0.0; w.len()];
            Ok((path_cost(&path(1.0), &zeros, dt, p), path_cost(&path(-1.0), &zeros, dt, p)))
        })
        .collect();
    let pairs = pairs.into_iter().collect::<Result<Vec<_>>>()?;
    let sync: Vec<f64> = pairs.iter().map(|v| v.0).collect();
    let asyn: Vec<f64> = pairs.iter().map(|v| v.1).collect();
    let diff: Vec<f64> = pairs.iter().map(|v| v.0 - v.1).collect();
    let (sync_closed_form, async_closed_form) = if p == 2.0 {
        (4.0 * c * c * (1.0 - h_sw).powi(3) / 3.0, 2.0)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(CounterexampleResult {
        sync: summarize(&sync, 0),
        async_: summarize(&asyn, 0),
        diff_stderr: batch_means(&diff).1,
        sync_closed_form,
        async_closed_form,
    })
}

/// A named pair of SDEs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub x: Dynamics,
    pub y: Dynamics,
}

/// Range of the tabulated coefficients used by presets.
pub const TABLE_RANGE: f64 = 50.0;

fn abs_table() -> CoefficientSpec {
    CoefficientSpec::table(vec![-TABLE_RANGE, 0.0, TABLE_RANGE], vec![TABLE_RANGE, 0.0, TABLE_RANGE])
        .expect("valid table")
}

/// `σ(x) = sqrt(0.1 + |x|)` on a fine offset table.
pub fn sqrt_vol_table(level: u32) -> Result<CoefficientSpec> {
    offset_table(level, TABLE_RANGE, |x| (0.1 + x.abs()).sqrt())
}

pub fn presets() -> Vec<Preset> {
    use CoefficientSpec as C;
    let p = |name: &str, x: Dynamics, y: Dynamics| Preset {
        name: name.into(),
        x,
        y,
    };
    let d = Dynamics::new;
    vec![
        p("drift-gap", d(C::constant(1.0), C::constant(1.0)), d(C::constant(0.0), C::constant(1.0))),
        p("vol-gap", d(C::constant(0.0), C::constant(1.0)), d(C::constant(0.0), C::constant(0.5))),
        p("ou-vol", d(C::ou(1.0), C::constant(1.0)), d(C::ou(1.0), C::constant(2.0))),
        p("ou-vs-const", d(C::ou(2.0), C::constant(1.0)), d(C::constant(1.0), C::constant(0.8))),
        p(
            "mixed-table",
            d(
                C::affine(0.5, -1.0),
                C::table(vec![-TABLE_RANGE, 0.0, TABLE_RANGE], vec![0.5, 1.0, 1.5]).expect("valid table"),
            ),
            d(C::ou(0.5), C::constant(0.7)),
        ),
        p("abs-drift", d(abs_table(), C::constant(1.0)), d(C::constant(0.0), C::constant(1.0))),
        p(
            "sqrt-vol",
            d(C::constant(0.0), sqrt_vol_table(10).expect("valid table")),
            d(C::constant(0.0), C::constant(1.0)),
        ),
    ]
}

pub fn preset(name: &str) -> Result<Preset> {
    presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| {
            let names: Vec<String> = presets().into_iter().map(|p| p.name).collect();
            Error::Config(format!("unknown preset {name:?}; known: {}", names.join(", ")))
        })
}

/// Presets with Lipschitz coefficients and positive diffusions.
pub const LIPSCHITZ_PRESETS: [&str; 5] = ["drift-gap", "vol-gap", "ou-vol", "ou-vs-const", "mixed-table"];
