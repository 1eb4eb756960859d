//! Path-level schemes for `dX = b(X) dt + σ(X) dW` on `[0, 1]`.
//!
//! All schemes are evaluated at substep resolution: within coarse step `k`
//! the drift and diffusion are frozen at `X_{kh}` and the noise enters
//! through the running (possibly stopped) Brownian increment, so the fine
//! path is the in-step interpolation sampled at the substep times.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{eval_coefficient, growth_bounds, CoefficientSpec, SamplePath, TimeGrid};
use crate::noise::stopped_walk;

/// Paths with `|x|` above this are reported as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Em,
    MonotoneEm,
    ZvonkinEm,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "em" => Ok(Scheme::Em),
            "monotone-em" => Ok(Scheme::MonotoneEm),
            "zvonkin-em" => Ok(Scheme::ZvonkinEm),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Em => "em",
            Scheme::MonotoneEm => "monotone-em",
            Scheme::ZvonkinEm => "zvonkin-em",
        })
    }
}

/// A path sampled at every substep of a coarse grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FinePath {
    pub grid: TimeGrid,
    pub substeps: usize,
    /// `grid.n_steps · substeps + 1` values.
    pub values: Vec<f64>,
}

impl FinePath {
    pub fn fine_dt(&self) -> f64 {
        self.grid.h() / self.substeps as f64
    }

    /// The grid-point values `X_{kh}`.
    pub fn coarse(&self) -> SamplePath {
        SamplePath {
            grid: self.grid,
            values: self.values.iter().step_by(self.substeps).copied().collect(),
        }
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

fn check_value(x: f64, stage: usize) -> Result<f64> {
    if !x.is_finite() || x.abs() > DIVERGENCE_THRESHOLD {
        return Err(Error::Divergence { stage, value: x });
    }
    Ok(x)
}

fn check_noise(grid: TimeGrid, substeps: usize, dw: &[f64]) -> Result<()> {
    if substeps == 0 || dw.len() != grid.n_steps * substeps {
        return Err(Error::Config(format!(
            "{} increments do not match {} steps x {} substeps",
            dw.len(),
            grid.n_steps,
            substeps
        )));
    }
    Ok(())
}

/// One step of the (monotone) Euler–Maruyama map `x + h b(x) + σ(x) δ`.
pub fn em_step(b: &CoefficientSpec, sigma: &CoefficientSpec, x: f64, h: f64, delta: f64) -> Result<f64> {
    Ok(x + h * b.eval(x)? + sigma.eval_diffusion(x)? * delta)
}

fn drift_at(b: &CoefficientSpec, grid: TimeGrid, k: usize, coarse: &[f64]) -> Result<f64> {
    if b.is_markovian() {
        b.eval(coarse[k])
    } else {
        eval_coefficient(b, grid.time(k), &SamplePath::prefix(grid, &coarse[..=k]))
    }
}

fn run_scheme(
    b: &CoefficientSpec,
    sigma: &CoefficientSpec,
    x0: f64,
    grid: TimeGrid,
    substeps: usize,
    dw: &[f64],
    barrier: Option<f64>,
) -> Result<FinePath> {
    check_noise(grid, substeps, dw)?;
    let h = grid.h();
    let dt = h / substeps as f64;
    let mut values = Vec::with_capacity(dw.len() + 1);
    let mut coarse = Vec::with_capacity(grid.n_steps + 1);
    values.push(check_value(x0, 0)?);
    coarse.push(x0);
    let mut walk = vec![0.0; substeps];
    for k in 0..grid.n_steps {
        let x = coarse[k];
        let drift = drift_at(b, grid, k, &coarse)?;
        let vol = sigma.eval_diffusion(x)?;
        let incs = &dw[k * substeps..(k + 1) * substeps];
        match barrier {
            Some(a) => {
                stopped_walk(incs, a, Some(&mut walk));
            }
            None => {
                let mut s = 0.0;
                for (w, d) in walk.iter_mut().zip(incs) {
                    s += d;
                    *w = s;
                }
            }
        }
        for (j, w) in walk.iter().enumerate() {
            let v = x + (j + 1) as f64 * dt * drift + vol * w;
            values.push(check_value(v, k + 1)?);
        }
        coarse.push(*values.last().unwrap());
    }
    Ok(FinePath {
        grid,
        substeps,
        values,
    })
}

/// Classical Euler–Maruyama driven by the substep increments `dw`.
/// Path-dependent drifts (`SignSwitch`) are supported.
pub fn euler_maruyama(
    b: &CoefficientSpec,
    sigma: &CoefficientSpec,
    x0: f64,
    grid: TimeGrid,
    substeps: usize,
    dw: &[f64],
) -> Result<FinePath> {
    run_scheme(b, sigma, x0, grid, substeps, dw, None)
}

/// Monotone Euler–Maruyama: the Brownian increment over each step is stopped
/// when it leaves `(−A, A)`.
pub fn monotone_em(
    b: &CoefficientSpec,
    sigma: &CoefficientSpec,
    x0: f64,
    grid: TimeGrid,
    substeps: usize,
    barrier: f64,
    dw: &[f64],
) -> Result<FinePath> {
    if !(barrier > 0.0) {
        return Err(Error::Domain("truncation barrier must be positive".into()));
    }
    run_scheme(b, sigma, x0, grid, substeps, dw, Some(barrier))
}

/// `1 − h C_0 − A_h C_1`, the slope lower bound of the one-step map.
pub fn one_step_margin(c0: f64, c1: f64, h: f64, barrier: f64) -> f64 {
    1.0 - h * c0 - barrier * c1
}

/// Tabulated drift-removing transform
/// `T(x) = ∫_{x0}^x exp(−2 ∫_{x0}^z b/σ² dy) dz` on `[x0 − R, x0 + R]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZvonkinTransform {
    pub x0: f64,
    nodes: Vec<f64>,
    t_vals: Vec<f64>,
    t_prime: Vec<f64>,
    sigma_vals: Vec<f64>,
    /// `K^σ + 2 ‖b‖_∞ / inf σ` over the working interval.
    pub lipschitz_certificate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZvonkinConfig {
    pub radius: f64,
    /// Number of quadrature intervals (even).
    pub intervals: usize,
}

impl Default for ZvonkinConfig {
    fn default() -> Self {
        ZvonkinConfig {
            radius: 10.0,
            intervals: 10_000,
        }
    }
}

/// Cumulative integral of samples `f` on a uniform grid of spacing `dx`,
/// starting from zero at index 0. Composite Simpson on pairs of intervals;
/// odd offsets add a three-point quadratic rule for the last interval.
fn cumulative_simpson(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    let mut even = 0.0;
    for i in (2..n).step_by(2) {
        even += dx / 3.0 * (f[i - 2] + 4.0 * f[i - 1] + f[i]);
        out[i] = even;
    }
    for i in (1..n).step_by(2) {
        let base = if i >= 2 { out[i - 1] } else { 0.0 };
        let last = if i + 1 < n {
            dx / 12.0 * (5.0 * f[i - 1] + 8.0 * f[i] - f[i + 1])
        } else if i >= 2 {
            dx / 12.0 * (-f[i - 2] + 8.0 * f[i - 1] + 5.0 * f[i])
        } else {
            dx / 2.0 * (f[0] + f[1])
        };
        out[i] = base + last;
    }
    out
}

/// Integral from the centre node outwards in both directions.
fn centred_integral(f: &[f64], centre: usize, dx: f64) -> Vec<f64> {
    let right = cumulative_simpson(&f[centre..], dx);
    let left_rev: Vec<f64> = f[..=centre].iter().rev().copied().collect();
    let left = cumulative_simpson(&left_rev, dx);
    let mut out = Vec::with_capacity(f.len());
    out.extend(left.iter().rev().map(|v| -v));
    out.extend_from_slice(&right[1..]);
    out
}

pub fn zvonkin_transform(
    b: &CoefficientSpec,
    sigma: &CoefficientSpec,
    x0: f64,
    config: ZvonkinConfig,
) -> Result<ZvonkinTransform> {
    if !b.is_markovian() {
        return Err(Error::NotMarkovian);
    }
    if config.intervals < 2 || !config.intervals.is_multiple_of(2) || !(config.radius > 0.0) {
        return Err(Error::Config(
            "Zvonkin table needs an even number of intervals and a positive radius".into(),
        ));
    }
    let half = config.intervals / 2;
    let dx = config.radius / half as f64;
    let nodes: Vec<f64> = (0..=config.intervals)
        .map(|i| x0 + (i as f64 - half as f64) * dx)
        .collect();
    let b_vals = nodes.iter().map(|&x| b.eval(x)).collect::<Result<Vec<_>>>()?;
    let sigma_vals = nodes
        .iter()
        .map(|&x| sigma.eval_diffusion(x))
        .collect::<Result<Vec<_>>>()?;
    let inf_sigma = sigma_vals.iter().copied().fold(f64::INFINITY, f64::min);
    if !(inf_sigma > 0.0) {
        return Err(Error::Domain(format!(
            "Zvonkin transform needs a uniformly positive diffusion (inf = {inf_sigma})"
        )));
    }
    let ratio: Vec<f64> = b_vals
        .iter()
        .zip(&sigma_vals)
        .map(|(b, s)| b / (s * s))
        .collect();
    let inner = centred_integral(&ratio, half, dx);
    let t_prime: Vec<f64> = inner.iter().map(|i| (-2.0 * i).exp()).collect();
    if t_prime.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Domain(
            "T' under- or overflows on the table; shrink the radius".into(),
        ));
    }
    let t_vals = centred_integral(&t_prime, half, dx);
    if t_vals.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("tabulated T is not strictly increasing".into()));
    }
    let k_sigma = growth_bounds(sigma)?.lipschitz.unwrap_or(f64::INFINITY);
    let b_sup = b_vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(ZvonkinTransform {
        x0,
        nodes,
        t_vals,
        t_prime,
        sigma_vals,
        lipschitz_certificate: k_sigma + 2.0 * b_sup / inf_sigma,
    })
}

impl ZvonkinTransform {
    fn locate(&self, x: f64) -> Result<(usize, f64)> {
        let lo = self.nodes[0];
        let hi = *self.nodes.last().unwrap();
        if !(x >= lo && x <= hi) {
            return Err(Error::Extrapolation { x, lo, hi });
        }
        let j = self.nodes.partition_point(|&n| n <= x).min(self.nodes.len() - 1).max(1);
        let i = j - 1;
        Ok((i, (x - self.nodes[i]) / (self.nodes[j] - self.nodes[i])))
    }

    fn interp(table: &[f64], i: usize, w: f64) -> f64 {
        if w == 0.0 {
            table[i]
        } else {
            table[i] + w * (table[i + 1] - table[i])
        }
    }

    pub fn t(&self, x: f64) -> Result<f64> {
        let (i, w) = self.locate(x)?;
        Ok(Self::interp(&self.t_vals, i, w))
    }

    pub fn t_prime(&self, x: f64) -> Result<f64> {
        let (i, w) = self.locate(x)?;
        Ok(Self::interp(&self.t_prime, i, w))
    }

    pub fn sigma(&self, x: f64) -> Result<f64> {
        let (i, w) = self.locate(x)?;
        Ok(Self::interp(&self.sigma_vals, i, w))
    }

    /// Inverse of the piecewise-linear `T`.
    pub fn t_inv(&self, y: f64) -> Result<f64> {
        let lo = self.t_vals[0];
        let hi = *self.t_vals.last().unwrap();
        if !(y >= lo && y <= hi) {
            return Err(Error::TransformRange { y, lo, hi });
        }
        let j = self
            .t_vals
            .partition_point(|&v| v <= y)
            .min(self.t_vals.len() - 1)
            .max(1);
        let i = j - 1;
        if y == self.t_vals[i] {
            return Ok(self.nodes[i]);
        }
        let w = (y - self.t_vals[i]) / (self.t_vals[j] - self.t_vals[i]);
        Ok(self.nodes[i] + w * (self.nodes[j] - self.nodes[i]))
    }

    /// `(σ T') ∘ T⁻¹` tabulated on the image nodes `T(x_i)`.
    pub fn transformed_sigma(&self) -> Result<CoefficientSpec> {
        let values = self
            .sigma_vals
            .iter()
            .zip(&self.t_prime)
            .map(|(s, t)| s * t)
            .collect();
        CoefficientSpec::table(self.t_vals.clone(), values)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.nodes[0], *self.nodes.last().unwrap())
    }
}

/// Monotone Euler–Maruyama in the driftless coordinates `Y = T(X)`, mapped
/// back through `T⁻¹`:
/// `X_t = T⁻¹[T(X_{kh}) + T'(X_{kh}) σ(X_{kh}) (W^h_t − W^h_{kh})]`.
pub fn transformed_monotone_em(
    zt: &ZvonkinTransform,
    grid: TimeGrid,
    substeps: usize,
    barrier: f64,
    dw: &[f64],
) -> Result<FinePath> {
    check_noise(grid, substeps, dw)?;
    if !(barrier > 0.0) {
        return Err(Error::Domain("truncation barrier must be positive".into()));
    }
    let mut values = Vec::with_capacity(dw.len() + 1);
    values.push(zt.x0);
    let mut walk = vec![0.0; substeps];
    let mut x = zt.x0;
    for k in 0..grid.n_steps {
        let y = zt.t(x)?;
        let scale = zt.t_prime(x)? * zt.sigma(x)?;
        stopped_walk(&dw[k * substeps..(k + 1) * substeps], barrier, Some(&mut walk));
        for w in &walk {
            let v = zt.t_inv(y + scale * w)?;
            values.push(check_value(v, k + 1)?);
        }
        x = *values.last().unwrap();
    }
    Ok(FinePath {
        grid,
        substeps,
        values,
    })
}
