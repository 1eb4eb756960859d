//! Finite Markov lattices for the discrete-time monotone Euler–Maruyama
//! chain, and first-order stochastic dominance (FOSD) certificates.
//!
//! The stopped Brownian increment is replaced by the clipped Gaussian
//! `clamp(Z√h, −A, A)`, quantized by conditional means on `m` cells of equal
//! probability. Each stage pushes every node through
//! `x ↦ x + h b(x) + σ(x) δ` for every atom `δ`; when the raw support grows
//! past `G` nodes it is merged into at most `G` contiguous bins of roughly
//! equal probability, each represented by its probability-weighted mean.
//! Contiguous binning is monotone, so it preserves FOSD and stage means.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{growth_bounds, CoefficientSpec, LatticeStage, MarkovLattice};
use crate::noise::{normal_upper_tail, truncation_level};
use crate::sde::one_step_margin;

/// Tolerance used when comparing conditional CDFs.
pub const FOSD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementQuantization {
    /// Sorted atoms, all within `[−A, A]`.
    pub atoms: Vec<f64>,
    pub weights: Vec<f64>,
}

impl IncrementQuantization {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| w * (a - m).powi(2))
            .sum()
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

fn pdf(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }
}

/// `Φ(z)`, computed through the tail function so the lower tail keeps its
/// relative accuracy.
fn cdf(z: f64) -> f64 {
    normal_upper_tail(-z)
}

/// `∫_l^u clamp(z, −a, a) φ(z) dz` for `l < u ≤ 0` or general `l < u`.
fn clipped_first_moment(l: f64, u: f64, a: f64) -> f64 {
    let mut total = 0.0;
    if l < -a {
        total += -a * (cdf(u.min(-a)) - cdf(l));
    }
    let (lo, hi) = (l.max(-a), u.min(a));
    if lo < hi {
        total += pdf(lo) - pdf(hi);
    }
    if u > a {
        total += a * (cdf(u) - cdf(l.max(a)));
    }
    total
}

/// Conditional means of `clamp(Z√h, −A, A)` on `m` equal-probability cells.
pub fn quantize_increment(h: f64, barrier: f64, m: usize) -> Result<IncrementQuantization> {
    if m < 2 {
        return Err(Error::Config("need at least two atoms".into()));
    }
    if !(h > 0.0) || !(barrier > 0.0) {
        return Err(Error::Domain("need h > 0 and A > 0".into()));
    }
    let normal = std_normal();
    let a = barrier / h.sqrt();
    let bound = |i: usize| -> f64 {
        if i == 0 {
            f64::NEG_INFINITY
        } else if i == m {
            f64::INFINITY
        } else {
            normal.inverse_cdf(i as f64 / m as f64)
        }
    };
    let mut atoms = vec![0.0; m];
    // lower half, mirrored; an odd middle cell has mean exactly zero
    for i in 0..m / 2 {
        let mean = clipped_first_moment(bound(i), bound(i + 1), a) * m as f64 * h.sqrt();
        let floor = if i == 0 { -barrier } else { atoms[i - 1] };
        let mean = mean.max(floor).min(0.0);
        atoms[i] = mean;
        atoms[m - 1 - i] = -mean;
    }
    Ok(IncrementQuantization {
        atoms,
        weights: vec![1.0 / m as f64; m],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub x0: f64,
    pub n_steps: usize,
    /// Atoms per increment (`m`).
    pub atoms: usize,
    /// Largest support size per stage (`G`).
    pub max_support: usize,
    /// Truncation multiplier `K` in `A_h = K sqrt(−h log h)`.
    pub trunc_k: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig {
            x0: 0.0,
            n_steps: 8,
            atoms: 5,
            max_support: 40,
            trunc_k: 4.0,
        }
    }
}

/// A lattice together with the atom-to-child map used to build it.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeBuild {
    pub lattice: MarkovLattice,
    pub quantization: IncrementQuantization,
    /// `atom_children[k][i][l]`: stage-`k+1` node reached from stage-`k`
    /// node `i` through atom `l`.
    pub atom_children: Vec<Vec<Vec<usize>>>,
    /// True if any stage was merged down to `max_support`.
    pub merged: bool,
}

/// Barrier used for the lattice at `n_steps` steps. A single step (`h = 1`)
/// has no finite truncation level and is left untruncated.
pub fn lattice_barrier(n_steps: usize, trunc_k: f64) -> Result<f64> {
    if n_steps == 1 {
        return Ok(f64::INFINITY);
    }
    truncation_level(1.0 / n_steps as f64, trunc_k)
}

pub fn build_lattice(
    b: &CoefficientSpec,
    sigma: &CoefficientSpec,
    config: &LatticeConfig,
) -> Result<LatticeBuild> {
    if config.n_steps == 0 {
        return Err(Error::Config("n_steps must be positive".into()));
    }
    if config.atoms < 2 {
        return Err(Error::Config("need at least two atoms".into()));
    }
    if config.max_support < config.atoms {
        return Err(Error::Config(format!(
            "max support G = {} is smaller than the atom count m = {}",
            config.max_support, config.atoms
        )));
    }
    if !b.is_markovian() || !sigma.is_markovian() {
        return Err(Error::NotMarkovian);
    }
    let h = 1.0 / config.n_steps as f64;
    let barrier = lattice_barrier(config.n_steps, config.trunc_k)?;
    let quant = quantize_increment(h, barrier, config.atoms)?;
    let m = quant.len();

    let mut support = vec![config.x0];
    let mut marginal = vec![1.0];
    let mut stages = Vec::with_capacity(config.n_steps);
    let mut atom_children = Vec::with_capacity(config.n_steps);
    let mut merged = false;

    for k in 0..config.n_steps {
        // raw pushforward: (value, mass, parent, atom)
        let mut raw = Vec::with_capacity(support.len() * m);
        for (i, &x) in support.iter().enumerate() {
            let drift = b.eval(x)?;
            let vol = sigma.eval_diffusion(x)?;
            for (l, (&d, &w)) in quant.atoms.iter().zip(&quant.weights).enumerate() {
                let c = x + h * drift + vol * d;
                if !c.is_finite() {
                    return Err(Error::Divergence { stage: k + 1, value: c });
                }
                raw.push((c, marginal[i] * w, i, l));
            }
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));

        // numerically coincident values form one state
        let mut group_of = vec![0usize; raw.len()];
        let mut groups: Vec<(f64, f64)> = Vec::new(); // (Σ mass·value, Σ mass)
        let mut last = f64::NAN;
        for (r, &(v, mass, _, _)) in raw.iter().enumerate() {
            if groups.is_empty() || (v - last).abs() > 1e-12 * (1.0 + v.abs()) {
                groups.push((0.0, 0.0));
            }
            let g = groups.last_mut().unwrap();
            g.0 += mass * v;
            g.1 += mass;
            group_of[r] = groups.len() - 1;
            last = v;
        }
        let group_value = |g: &(f64, f64), r: usize| {
            if g.1 > 0.0 {
                g.0 / g.1
            } else {
                raw[r].0
            }
        };

        // contiguous equal-probability bins when the support is too large
        let node_of_group: Vec<usize> = if groups.len() > config.max_support {
            merged = true;
            let total: f64 = groups.iter().map(|g| g.1).sum();
            let g_count = config.max_support as f64;
            let mut cum = 0.0;
            let mut bins = Vec::with_capacity(groups.len());
            for g in &groups {
                let mid = (cum + 0.5 * g.1) / total;
                cum += g.1;
                bins.push(((mid * g_count).floor() as usize).min(config.max_support - 1));
            }
            // compress to consecutive indices
            let mut out = Vec::with_capacity(bins.len());
            let mut next = 0usize;
            let mut prev = usize::MAX;
            for b in bins {
                if b != prev {
                    if prev != usize::MAX {
                        next += 1;
                    }
                    prev = b;
                }
                out.push(next);
            }
            out
        } else {
            (0..groups.len()).collect()
        };
        let n_nodes = node_of_group.last().map_or(0, |n| n + 1);
        let mut acc = vec![(0.0, 0.0); n_nodes];
        let mut first_member = vec![usize::MAX; n_nodes];
        for (r, g) in group_of.iter().enumerate() {
            let node = node_of_group[*g];
            acc[node].0 += raw[r].1 * raw[r].0;
            acc[node].1 += raw[r].1;
            if first_member[node] == usize::MAX {
                first_member[node] = r;
            }
        }
        let mut next_support: Vec<f64> = acc
            .iter()
            .zip(&first_member)
            .map(|(a, &r)| group_value(a, r))
            .collect();
        // averaging can only produce non-decreasing values; guard ties
        for j in 1..next_support.len() {
            if next_support[j] <= next_support[j - 1] {
                next_support[j] = next_support[j - 1].next_up();
            }
        }

        let mut transitions = vec![vec![0.0; n_nodes]; support.len()];
        let mut children = vec![vec![0usize; m]; support.len()];
        for (r, &(_, _, i, l)) in raw.iter().enumerate() {
            let node = node_of_group[group_of[r]];
            transitions[i][node] += quant.weights[l];
            children[i][l] = node;
        }
        let next_marginal: Vec<f64> = acc.iter().map(|a| a.1).collect();

        stages.push(LatticeStage {
            support: next_support.clone(),
            transitions,
        });
        atom_children.push(children);
        support = next_support;
        marginal = next_marginal;
    }

    Ok(LatticeBuild {
        lattice: MarkovLattice::new(config.x0, stages)?,
        quantization: quant,
        atom_children,
        merged,
    })
}

/// First pair of adjacent states whose conditional CDFs are out of order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FosdWitness {
    /// Stage of the conditioning states (0 = initial).
    pub stage: usize,
    pub lower_state: usize,
    pub upper_state: usize,
    pub lower_value: f64,
    pub upper_value: f64,
    /// Index in the next stage's support at which `F_upper > F_lower`.
    pub next_index: usize,
    pub next_value: f64,
    pub cdf_lower: f64,
    pub cdf_upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum FosdCheck {
    Certified,
    Violation(FosdWitness),
}

impl FosdCheck {
    pub fn is_certified(&self) -> bool {
        matches!(self, FosdCheck::Certified)
    }
}

/// Checks that every kernel is increasing in first-order stochastic
/// dominance: for adjacent states `x < x'`, `F_{x'}(a) ≤ F_x(a)` at every
/// point of the next support.
pub fn check_fosd(lattice: &MarkovLattice) -> FosdCheck {
    for (k, stage) in lattice.stages.iter().enumerate() {
        let prev_support = lattice.support(k);
        let cdfs: Vec<Vec<f64>> = stage
            .transitions
            .iter()
            .map(|row| {
                row.iter()
                    .scan(0.0, |s, p| {
                        *s += p;
                        Some(*s)
                    })
                    .collect()
            })
            .collect();
        for i in 0..cdfs.len().saturating_sub(1) {
            for (a, (&lo, &up)) in cdfs[i].iter().zip(&cdfs[i + 1]).enumerate() {
                if up > lo + FOSD_TOL {
                    return FosdCheck::Violation(FosdWitness {
                        stage: k,
                        lower_state: i,
                        upper_state: i + 1,
                        lower_value: prev_support[i],
                        upper_value: prev_support[i + 1],
                        next_index: a,
                        next_value: stage.support[a],
                        cdf_lower: lo,
                        cdf_upper: up,
                    });
                }
            }
        }
    }
    FosdCheck::Certified
}

/// `1 − h C_0 − A_h C_1 > 0`
pub fn fosd_sufficient_condition(c0: f64, c1: f64, h: f64, trunc_k: f64) -> Result<bool> {
    if c0 < 0.0 || c1 < 0.0 {
        return Err(Error::Domain("Lipschitz constants must be nonnegative".into()));
    }
    let barrier = if h >= 1.0 {
        f64::INFINITY
    } else {
        truncation_level(h, trunc_k)?
    };
    if c1 == 0.0 {
        return Ok(1.0 - h * c0 > 0.0);
    }
    Ok(one_step_margin(c0, c1, h, barrier) > 0.0)
}

/// The sufficient condition evaluated with the exact Lipschitz constants of
/// `b` and `σ`.
pub fn coefficients_certified(
    b: &CoefficientSpec,
    sigma: &CoefficientSpec,
    n_steps: usize,
    trunc_k: f64,
) -> Result<bool> {
    let c0 = growth_bounds(b)?.lipschitz.unwrap_or(f64::INFINITY);
    let c1 = growth_bounds(sigma)?.lipschitz.unwrap_or(f64::INFINITY);
    fosd_sufficient_condition(c0, c1, 1.0 / n_steps as f64, trunc_k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::em_step;
    use crate::model::CoefficientSpec as C;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cfg(n: usize, m: usize, g: usize) -> LatticeConfig {
        LatticeConfig {
            x0: 0.0,
            n_steps: n,
            atoms: m,
            max_support: g,
            trunc_k: 4.0,
        }
    }

    #[test]
    fn half_normal_atoms() {
        let q = quantize_increment(1.0, 1e9, 2).unwrap();
        let e = (2.0 / std::f64::consts::PI).sqrt();
        assert_abs_diff_eq!(q.atoms[0], -e, epsilon = 1e-12);
        assert_abs_diff_eq!(q.atoms[1], e, epsilon = 1e-12);
        assert_eq!(q.weights, vec![0.5, 0.5]);
        let q = quantize_increment(0.01, 0.8584, 2).unwrap();
        assert_abs_diff_eq!(q.atoms[1], 0.1 * e, epsilon = 1e-9);
    }

    #[test]
    fn built_lattice_json_is_bit_exact() {
        let l = build_lattice(&C::affine(0.3, -0.7), &C::affine(1.0, 0.1), &cfg(6, 5, 40)).unwrap().lattice;
        assert_eq!(MarkovLattice::from_json(&l.to_json().unwrap()).unwrap(), l);
    }

    #[test]
    fn five_atom_variance_ratio() {
        // independent quadrature value of the kept variance fraction
        let q = quantize_increment(1.0, 1e9, 5).unwrap();
        assert_abs_diff_eq!(q.variance(), 0.8969551171963064, epsilon = 1e-10);
    }

    #[test]
    fn quantization_invariants() {
        for m in 2..12 {
            for (h, a) in [(0.1, 0.2), (0.01, 0.858), (0.25, 10.0), (0.1, 0.05)] {
                let q = quantize_increment(h, a, m).unwrap();
                assert!(q.mean().abs() < 1e-12);
                assert_abs_diff_eq!(q.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
                assert!(q.atoms.windows(2).all(|w| w[0] <= w[1]));
                assert!(q.atoms.iter().all(|x| x.abs() <= a));
                for i in 0..m {
                    assert_eq!(q.atoms[i], -q.atoms[m - 1 - i]);
                }
            }
        }
        assert!(quantize_increment(0.1, 1.0, 1).is_err());
    }

    #[test]
    fn clipped_atoms_match_quadrature() {
        // independent check: midpoint-rule integration of the clipped law
        let (h, a, m) = (0.1, 0.25, 4);
        let q = quantize_increment(h, a, m).unwrap();
        let normal = std_normal();
        let n = 400_000;
        let mut sums = vec![0.0; m];
        for i in 0..n {
            let u = (i as f64 + 0.5) / n as f64;
            let z = normal.inverse_cdf(u) * h.sqrt();
            let cell = ((u * m as f64) as usize).min(m - 1);
            sums[cell] += z.clamp(-a, a);
        }
        for (s, atom) in sums.iter().zip(&q.atoms) {
            assert_abs_diff_eq!(s / (n as f64 / m as f64), *atom, epsilon = 1e-4);
        }
    }

    #[test]
    fn one_step_brownian_lattice() {
        let lb = build_lattice(&C::constant(0.0), &C::constant(1.0), &cfg(1, 2, 40)).unwrap();
        let l = &lb.lattice;
        let e = (2.0 / std::f64::consts::PI).sqrt();
        assert_eq!(l.support(0), &[0.0]);
        assert_abs_diff_eq!(l.support(1)[0], -e, epsilon = 1e-12);
        assert_abs_diff_eq!(l.support(1)[1], e, epsilon = 1e-12);
        assert_eq!(l.stages[0].transitions, vec![vec![0.5, 0.5]]);
    }

    #[test]
    fn deterministic_lattice() {
        let lb = build_lattice(&C::constant(1.0), &C::constant(0.0), &cfg(2, 2, 40)).unwrap();
        let l = &lb.lattice;
        assert_eq!(l.support(1), &[0.5]);
        assert_eq!(l.support(2), &[1.0]);
        assert!(check_fosd(l).is_certified());
    }

    #[test]
    fn config_errors() {
        assert!(matches!(
            build_lattice(&C::constant(0.0), &C::constant(1.0), &cfg(4, 5, 4)),
            Err(Error::Config(_))
        ));
        assert!(build_lattice(&C::sign_switch(1.0, 0.5), &C::constant(1.0), &cfg(4, 5, 40)).is_err());
    }

    #[test]
    fn merging_caps_support_and_preserves_means() {
        let lb = build_lattice(&C::ou(1.0), &C::constant(1.0), &cfg(8, 5, 30)).unwrap();
        assert!(lb.merged);
        let l = &lb.lattice;
        for k in 1..=8 {
            assert!(l.support(k).len() <= 30);
        }
        // OU mean from x0 = 0 stays 0; from x0 = 1 it is (1 − h)^k
        let mut c = cfg(8, 5, 30);
        c.x0 = 1.0;
        let l = build_lattice(&C::ou(1.0), &C::constant(1.0), &c).unwrap().lattice;
        for k in 0..=8 {
            assert_abs_diff_eq!(l.moments(k).0, (1.0 - 0.125f64).powi(k as i32), epsilon = 1e-12);
        }
    }

    /// Monte Carlo of the same quantized chain without merging.
    fn mc_moments(b: &C, sigma: &C, c: &LatticeConfig, n: usize) -> (f64, f64, f64) {
        use rand::{Rng, SeedableRng};
        let q = quantize_increment(1.0 / c.n_steps as f64, lattice_barrier(c.n_steps, c.trunc_k).unwrap(), c.atoms).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let h = 1.0 / c.n_steps as f64;
        let xs: Vec<f64> = (0..n)
            .map(|_| {
                let mut x = c.x0;
                for _ in 0..c.n_steps {
                    let d = q.atoms[rng.random_range(0..q.len())];
                    x = em_step(b, sigma, x, h, d).unwrap();
                }
                x
            })
            .collect();
        let nf = n as f64;
        let mean = xs.iter().sum::<f64>() / nf;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
        (mean, var, m4)
    }

    #[test]
    fn lattice_marginals_match_monte_carlo() {
        let n = 100_000;
        let families = [
            (C::ou(1.0), C::constant(1.0)),
            (C::affine(0.5, -0.5), C::affine(1.0, 0.1)),
            (C::constant(1.0), C::constant(0.5)),
        ];
        for (b, sigma) in families {
            // merging drops within-bin variance; at G = 30 that is ~2% for
            // multiplicative noise, beyond 4 s.e. at this sample size
            let c = LatticeConfig { x0: 0.5, n_steps: 8, atoms: 5, max_support: 60, trunc_k: 4.0 };
            let l = build_lattice(&b, &sigma, &c).unwrap().lattice;
            let (lm, lv) = l.moments(8);
            let (mm, mv, m4) = mc_moments(&b, &sigma, &c, n);
            let se_mean = (mv / n as f64).sqrt();
            let se_var = ((m4 - mv * mv) / n as f64).sqrt();
            assert!((lm - mm).abs() < 4.0 * se_mean, "{b}: mean {lm} vs {mm}");
            assert!((lv - mv).abs() < 4.0 * se_var, "{b}: var {lv} vs {mv} (se {se_var})");
        }
        // the smaller example: OU, N = 4, m = 3, G = 30, mean within 3 s.e.
        let c = LatticeConfig { x0: 1.0, n_steps: 4, atoms: 3, max_support: 30, trunc_k: 4.0 };
        let l = build_lattice(&C::ou(1.0), &C::constant(1.0), &c).unwrap().lattice;
        let (mm, mv, _) = mc_moments(&C::ou(1.0), &C::constant(1.0), &c, n);
        assert!((l.moments(4).0 - mm).abs() < 3.0 * (mv / n as f64).sqrt());
    }

    #[test]
    fn constructed_violation_is_detected() {
        let l = MarkovLattice::new(
            0.0,
            vec![
                LatticeStage { support: vec![0.0, 1.0], transitions: vec![vec![0.5, 0.5]] },
                LatticeStage {
                    support: vec![-1.0, 0.0, 1.0, 2.0],
                    // low node jumps up by 1, high node jumps down by 1
                    transitions: vec![vec![0.0, 0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]],
                },
            ],
        )
        .unwrap();
        match check_fosd(&l) {
            FosdCheck::Violation(w) => {
                assert_eq!(w.stage, 1);
                assert_eq!((w.lower_state, w.upper_state), (0, 1));
                assert_eq!(w.next_index, 1);
                assert_eq!(w.next_value, 0.0);
                assert_eq!((w.cdf_lower, w.cdf_upper), (0.0, 1.0));
            }
            FosdCheck::Certified => panic!("violation missed"),
        }
    }

    #[test]
    fn sufficient_condition_examples() {
        assert!(fosd_sufficient_condition(2.0, 1.0, 0.01, 4.0).unwrap());
        assert!(!fosd_sufficient_condition(2.0, 2.0, 0.01, 4.0).unwrap());
        for h in [0.5, 0.1, 0.01] {
            assert!(fosd_sufficient_condition(0.0, 0.0, h, 4.0).unwrap());
        }
    }

    #[test]
    fn certified_unmerged_lattices_pass() {
        let pairs = [
            (C::ou(1.0), C::constant(1.0)),
            (C::affine(0.3, 0.8), C::affine(2.0, 0.05)),
            (C::constant(-1.0), C::table(vec![-10.0, 10.0], vec![1.0, 1.5]).unwrap()),
        ];
        for (b, sigma) in pairs {
            for n in [2usize, 3, 4] {
                assert!(coefficients_certified(&b, &sigma, n, 1.0).unwrap() || n < 4);
                let lb = build_lattice(&b, &sigma, &LatticeConfig { x0: 0.0, n_steps: n, atoms: 3, max_support: 10_000, trunc_k: 1.0 }).unwrap();
                assert!(!lb.merged);
                if coefficients_certified(&b, &sigma, n, 1.0).unwrap() {
                    assert!(check_fosd(&lb.lattice).is_certified());
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn merge_preserves_fosd(s0 in -1.5..1.5f64, a0 in -1.0..1.0f64, s1 in 0.0..0.15f64,
                                n in 2usize..6, g in 5usize..20) {
            let b = C::affine(a0, s0);
            let sigma = C::table(vec![-50.0, 50.0], vec![1.0 + 50.0 * s1 * 0.0, 1.0 + 100.0 * s1]).unwrap();
            let raw = build_lattice(&b, &sigma, &LatticeConfig { x0: 0.0, n_steps: n, atoms: 3, max_support: 100_000, trunc_k: 4.0 }).unwrap();
            let merged = build_lattice(&b, &sigma, &LatticeConfig { x0: 0.0, n_steps: n, atoms: 3, max_support: g.max(3), trunc_k: 4.0 }).unwrap();
            if check_fosd(&raw.lattice).is_certified() {
                prop_assert!(check_fosd(&merged.lattice).is_certified());
            }
            let raw_m = raw.lattice.moments(n).0;
            let merged_m = merged.lattice.moments(n).0;
            if s0 == 0.0 {
                prop_assert!((raw_m - merged_m).abs() < 1e-9);
            }
        }
    }
}
