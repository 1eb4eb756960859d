//! Seeded Brownian increments, ρ-correlated pairs, and increments stopped at
//! a symmetric barrier.
//!
//! Every replicate owns its generator: the stream is derived from
//! `(master seed, replicate index)`, so serial and parallel runs produce the
//! same numbers. Within a replicate the driving noise `W` uses stream
//! `2·index` and the independent component `W⊥` uses stream `2·index + 1`;
//! a ρ = 1 pair therefore reproduces the single-noise path bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::model::TimeGrid;

pub const DEFAULT_SUBSTEPS: usize = 16;

/// Generator for one stream of one replicate.
pub fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

fn noise_stream(index: u64) -> u64 {
    index.wrapping_mul(2)
}

fn perp_stream(index: u64) -> u64 {
    index.wrapping_mul(2).wrapping_add(1)
}

/// Standard normal upper tail `Φ̄(z) = P[Z ≥ z]`.
pub fn normal_upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Correlation between the two driving Wiener processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RhoControl {
    Constant { rho: f64 },
    /// Piecewise constant: `values[i]` on `[starts[i], starts[i+1])`;
    /// `starts[0]` must be 0.
    TableOfTime { starts: Vec<f64>, values: Vec<f64> },
}

impl RhoControl {
    pub fn constant(rho: f64) -> Result<Self> {
        let r = RhoControl::Constant { rho };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let in_range = |r: f64| (-1.0..=1.0).contains(&r);
        match self {
            RhoControl::Constant { rho } if in_range(*rho) => Ok(()),
            RhoControl::Constant { rho } => Err(Error::Domain(format!("rho = {rho} not in [-1, 1]"))),
            RhoControl::TableOfTime { starts, values } => {
                if starts.is_empty() || starts.len() != values.len() || starts[0] != 0.0 {
                    return Err(Error::Config(
                        "rho table needs matching starts/values with starts[0] = 0".into(),
                    ));
                }
                if starts.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config("rho table starts must increase".into()));
                }
                if let Some(r) = values.iter().find(|r| !in_range(**r)) {
                    return Err(Error::Domain(format!("rho = {r} not in [-1, 1]")));
                }
                Ok(())
            }
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        match self {
            RhoControl::Constant { rho } => *rho,
            RhoControl::TableOfTime { starts, values } => {
                let i = starts.partition_point(|&s| s <= t).max(1) - 1;
                values[i]
            }
        }
    }

    /// `∫_0^1 ρ(t) dt`
    pub fn time_average(&self) -> f64 {
        match self {
            RhoControl::Constant { rho } => *rho,
            RhoControl::TableOfTime { starts, values } => {
                let mut total = 0.0;
                for i in 0..starts.len() {
                    let end = starts.get(i + 1).copied().unwrap_or(1.0).min(1.0);
                    total += values[i] * (end - starts[i]).max(0.0);
                }
                total
            }
        }
    }
}

/// Substep increments of a pair of Wiener processes on one replicate.
///
/// Both vectors have `grid.n_steps · substeps` entries, each with variance
/// `h / substeps`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementBlock {
    pub grid: TimeGrid,
    pub substeps: usize,
    pub seed: u64,
    pub index: u64,
    pub dw: Vec<f64>,
    pub dw_bar: Vec<f64>,
}

impl IncrementBlock {
    /// Increments of `W` within coarse step `k`.
    pub fn step(&self, k: usize) -> &[f64] {
        &self.dw[k * self.substeps..(k + 1) * self.substeps]
    }

    pub fn step_bar(&self, k: usize) -> &[f64] {
        &self.dw_bar[k * self.substeps..(k + 1) * self.substeps]
    }
}

fn fill_normals(rng: &mut ChaCha8Rng, sd: f64, out: &mut [f64]) {
    for v in out {
        let z: f64 = rng.sample(StandardNormal);
        *v = sd * z;
    }
}

/// Substep increments of a single Wiener process for replicate `index`.
pub fn sample_brownian(grid: TimeGrid, substeps: usize, seed: u64, index: u64) -> Vec<f64> {
    let n = grid.n_steps * substeps;
    let sd = (grid.h() / substeps as f64).sqrt();
    let mut out = vec![0.0; n];
    fill_normals(&mut stream_rng(seed, noise_stream(index)), sd, &mut out);
    out
}

/// A ρ-correlated pair: `dW̄ = ρ·dW + sqrt(1 − ρ²)·dW⊥`, with ρ evaluated at
/// the start of each substep.
pub fn sample_correlated_pair(
    grid: TimeGrid,
    rho: &RhoControl,
    substeps: usize,
    seed: u64,
    index: u64,
) -> Result<IncrementBlock> {
    rho.validate()?;
    if substeps == 0 {
        return Err(Error::Config("substeps must be positive".into()));
    }
    let dw = sample_brownian(grid, substeps, seed, index);
    let sd = (grid.h() / substeps as f64).sqrt();
    let mut perp = vec![0.0; dw.len()];
    fill_normals(&mut stream_rng(seed, perp_stream(index)), sd, &mut perp);
    let dt = grid.h() / substeps as f64;
    let dw_bar = dw
        .iter()
        .zip(&perp)
        .enumerate()
        .map(|(j, (&w, &p))| {
            let r = rho.at(j as f64 * dt);
            r * w + (1.0 - r * r).sqrt() * p
        })
        .collect();
    Ok(IncrementBlock {
        grid,
        substeps,
        seed,
        index,
        dw,
        dw_bar,
    })
}

/// `A_h = K·sqrt(−h log h)`
pub fn truncation_level(h: f64, k: f64) -> Result<f64> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::Domain(format!(
            "truncation level needs 0 < h < 1, got h = {h}"
        )));
    }
    if !(k >= 1.0) {
        return Err(Error::Domain(format!("truncation multiplier K = {k} < 1")));
    }
    Ok(k * (-h * h.ln()).sqrt())
}

/// Walk the substep increments, stopping at the first substep where the
/// running sum leaves `(−A, A)`; the stopped value is clamped to `±A`.
///
/// Writes the stopped running sum after each substep into `out` (if given)
/// and returns `(stopped value, exited)`.
pub fn stopped_walk(increments: &[f64], barrier: f64, mut out: Option<&mut [f64]>) -> (f64, bool) {
    let mut sum = 0.0;
    let mut exited = false;
    for (j, &d) in increments.iter().enumerate() {
        if !exited {
            sum += d;
            if sum.abs() >= barrier {
                sum = barrier.copysign(sum);
                exited = true;
            }
        }
        if let Some(o) = out.as_deref_mut() {
            o[j] = sum;
        }
    }
    (sum, exited)
}

/// One stopped increment `W_{h∧τ}` by sub-stepping: returns `(value, exited)`
/// with `|value| ≤ A`.
pub fn sample_truncated_increment(h: f64, barrier: f64, substeps: usize, seed: u64) -> (f64, bool) {
    let (v, _, exited) = truncated_and_raw(h, barrier, substeps, seed, 0);
    (v, exited)
}

fn truncated_and_raw(h: f64, barrier: f64, substeps: usize, seed: u64, index: u64) -> (f64, f64, bool) {
    let mut inc = vec![0.0; substeps];
    fill_normals(
        &mut stream_rng(seed, noise_stream(index)),
        (h / substeps as f64).sqrt(),
        &mut inc,
    );
    let raw: f64 = inc.iter().sum();
    let (v, exited) = stopped_walk(&inc, barrier, None);
    (v, raw, exited)
}

/// Reflection-principle sandwich `(2Φ̄(A/√h), 4Φ̄(A/√h))` for the two-sided
/// exit probability of `W` from `(−A, A)` before `h`, both clamped to 1.
pub fn exit_probability_bounds(h: f64, barrier: f64) -> Result<(f64, f64)> {
    if !(h > 0.0) || !(barrier >= 0.0) {
        return Err(Error::Domain("need h > 0 and A >= 0".into()));
    }
    let tail = normal_upper_tail(barrier / h.sqrt());
    Ok(((2.0 * tail).min(1.0), (4.0 * tail).min(1.0)))
}

/// Observed exit frequency over `n_samples` stopped increments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitFrequency {
    pub n_samples: usize,
    pub exits: usize,
    pub frequency: f64,
}

pub fn exit_frequency(h: f64, barrier: f64, n_samples: usize, substeps: usize, seed: u64) -> ExitFrequency {
    let exits = (0..n_samples as u64)
        .into_par_iter()
        .filter(|&i| truncated_and_raw(h, barrier, substeps, seed, i).2)
        .count();
    ExitFrequency {
        n_samples,
        exits,
        frequency: exits as f64 / n_samples as f64,
    }
}

/// Monte Carlo estimate of `E|ΔW − ΔW^h|⁴`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourthMomentEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub exits: usize,
    /// Set when no exit was observed; the estimate is then exactly 0.
    pub no_exits: bool,
    /// `6 h² h^{K²/2}`, or `6 h² exp(−A²/2h)` when given a raw barrier.
    pub bound: f64,
}

impl FourthMomentEstimate {
    pub fn within_bound(&self) -> bool {
        self.estimate - 5.0 * self.stderr <= self.bound
    }
}

pub fn fourth_moment_truncation_error(
    h: f64,
    k: f64,
    n_samples: usize,
    substeps: usize,
    seed: u64,
) -> Result<FourthMomentEstimate> {
    let barrier = truncation_level(h, k)?;
    let mut est = fourth_moment_at_barrier(h, barrier, n_samples, substeps, seed)?;
    est.bound = 6.0 * h * h * h.powf(k * k / 2.0);
    Ok(est)
}

pub fn fourth_moment_at_barrier(
    h: f64,
    barrier: f64,
    n_samples: usize,
    substeps: usize,
    seed: u64,
) -> Result<FourthMomentEstimate> {
    if n_samples < 2 || substeps == 0 {
        return Err(Error::Config("need n_samples >= 2 and substeps >= 1".into()));
    }
    let samples: Vec<(f64, bool)> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let (v, raw, exited) = truncated_and_raw(h, barrier, substeps, seed, i);
            ((raw - v).powi(4), exited)
        })
        .collect();
    let exits = samples.iter().filter(|s| s.1).count();
    let n = n_samples as f64;
    let bound = 6.0 * h * h * (-barrier * barrier / (2.0 * h)).exp();
    if exits == 0 {
        return Ok(FourthMomentEstimate {
            estimate: 0.0,
            stderr: 0.0,
            exits,
            no_exits: true,
            bound,
        });
    }
    let mean = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let var = samples.iter().map(|s| (s.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(FourthMomentEstimate {
        estimate: mean,
        stderr: (var / n).sqrt(),
        exits,
        no_exits: false,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn truncation_level_examples() {
        // reference values: independent evaluation of K·sqrt(−h ln h) in scipy
        assert_abs_diff_eq!(truncation_level(0.01, 4.0).unwrap(), 0.858386410515739, epsilon = 1e-12);
        assert_abs_diff_eq!(truncation_level(0.25, 4.0).unwrap(), 2.354820045030949, epsilon = 1e-12);
        assert!(truncation_level(1.0 - 1e-12, 4.0).unwrap() < 1e-5);
        assert!(truncation_level(1.0, 4.0).is_err());
        assert!(truncation_level(0.0, 4.0).is_err());
    }

    #[test]
    fn exit_bounds_examples() {
        let h = 0.1;
        let (lo, hi) = exit_probability_bounds(h, 1.51742 * h.sqrt()).unwrap();
        // scipy.stats.norm.sf(1.51742) = 0.0645803387732
        assert_abs_diff_eq!(lo, 0.129160677546489, epsilon = 1e-9);
        assert_abs_diff_eq!(hi, 0.258321355092979, epsilon = 1e-9);
        assert_eq!(exit_probability_bounds(h, 0.0).unwrap(), (1.0, 1.0));
        let z = 4.0 * 100f64.ln().sqrt();
        let (_, hi) = exit_probability_bounds(0.01, z * 0.1).unwrap();
        assert_abs_diff_eq!(hi, 1.834766744065502e-17, epsilon = 1e-25);
    }

    #[test]
    fn synchronous_and_antithetic_pairs_are_exact() {
        let g = TimeGrid::new(8).unwrap();
        let b = sample_correlated_pair(g, &RhoControl::constant(1.0).unwrap(), 4, 3, 9).unwrap();
        assert_eq!(b.dw, b.dw_bar);
        assert_eq!(b.dw, sample_brownian(g, 4, 3, 9));
        let b = sample_correlated_pair(g, &RhoControl::constant(-1.0).unwrap(), 4, 3, 9).unwrap();
        assert!(b.dw.iter().zip(&b.dw_bar).all(|(w, v)| *v == -*w));
    }

    #[test]
    fn independent_pair_is_uncorrelated() {
        let g = TimeGrid::new(1).unwrap();
        let rho = RhoControl::constant(0.0).unwrap();
        let n = 100_000;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let b = sample_correlated_pair(g, &rho, 1, 11, i).unwrap();
            let (x, y) = (b.dw[0], b.dw_bar[0]);
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!(corr.abs() < 0.01, "{corr}");
    }

    #[test]
    fn correlation_law_within_four_stderr() {
        let g = TimeGrid::new(4).unwrap();
        let n = 40_000u64;
        for r in [-0.5, 0.3, 0.8] {
            let rho = RhoControl::constant(r).unwrap();
            let pairs: Vec<(f64, f64)> = (0..n)
                .map(|i| {
                    let b = sample_correlated_pair(g, &rho, 2, 5, i).unwrap();
                    (b.dw.iter().sum(), b.dw_bar.iter().sum())
                })
                .collect();
            let nf = n as f64;
            let var_bar: Vec<f64> = pairs.iter().map(|p| p.1 * p.1).collect();
            let cov: Vec<f64> = pairs.iter().map(|p| p.0 * p.1).collect();
            for (samples, target) in [(var_bar, 1.0), (cov, r)] {
                let m = samples.iter().sum::<f64>() / nf;
                let sd = (samples.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
                assert!((m - target).abs() < 4.0 * sd / nf.sqrt(), "rho {r}: {m} vs {target}");
            }
        }
    }

    #[test]
    fn time_dependent_rho() {
        let rho = RhoControl::TableOfTime {
            starts: vec![0.0, 0.5],
            values: vec![1.0, -1.0],
        };
        rho.validate().unwrap();
        assert_eq!(rho.at(0.25), 1.0);
        assert_eq!(rho.at(0.5), -1.0);
        assert_abs_diff_eq!(rho.time_average(), 0.0);
        let b = sample_correlated_pair(TimeGrid::new(2).unwrap(), &rho, 2, 1, 0).unwrap();
        assert_eq!(b.step(0), b.step_bar(0));
        assert!(b.step(1).iter().zip(b.step_bar(1)).all(|(w, v)| *v == -*w));
        assert!(RhoControl::constant(1.5).is_err());
    }

    #[test]
    fn truncated_increment_edge_cases() {
        for seed in 0..20 {
            let (v, exited) = sample_truncated_increment(0.1, 1e9, 16, seed);
            assert!(!exited);
            let raw: f64 = sample_brownian(TimeGrid::new(10).unwrap(), 16, seed, 0)[..16]
                .iter()
                .sum();
            assert_eq!(v, raw);
        }
        let a = 1e-9;
        let exits = (0..200)
            .filter(|&s| {
                let (v, e) = sample_truncated_increment(0.1, a, 16, s);
                assert!(v.abs() <= a);
                e
            })
            .count();
        assert_eq!(exits, 200);
    }

    #[test]
    fn fourth_moment_infinite_barrier_is_zero() {
        let e = fourth_moment_at_barrier(0.1, 1e9, 1000, 4, 1).unwrap();
        assert_eq!(e.estimate, 0.0);
        assert!(e.no_exits);
    }

    #[test]
    fn fourth_moment_k1_below_bound() {
        let e = fourth_moment_truncation_error(0.1, 1.0, 100_000, 16, 7).unwrap();
        assert_abs_diff_eq!(e.bound, 6.0 * 0.01 * 0.1f64.sqrt(), epsilon = 1e-12);
        assert!(e.exits > 0);
        assert!(e.within_bound(), "{e:?}");
        assert!(e.estimate <= 0.01897);
    }

    proptest! {
        #[test]
        fn stopped_walk_respects_barrier(incs in proptest::collection::vec(-1.0..1.0f64, 1..40),
                                         a in 0.01..2.0f64) {
            let mut out = vec![0.0; incs.len()];
            let (v, exited) = stopped_walk(&incs, a, Some(&mut out));
            prop_assert!(v.abs() <= a);
            prop_assert!(out.iter().all(|x| x.abs() <= a));
            prop_assert_eq!(*out.last().unwrap(), v);
            if !exited {
                let s: f64 = incs.iter().sum();
                prop_assert!((s - v).abs() < 1e-12);
            }
        }

        #[test]
        fn increments_are_deterministic(seed in any::<u64>(), idx in 0u64..1000) {
            let g = TimeGrid::new(3).unwrap();
            let rho = RhoControl::constant(0.4).unwrap();
            let a = sample_correlated_pair(g, &rho, 2, seed, idx).unwrap();
            let b = sample_correlated_pair(g, &rho, 2, seed, idx).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
