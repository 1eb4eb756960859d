//! Optimal transport on finite supports: quantile couplings, an exact
//! transportation simplex, Knothe–Rosenblatt and synchronous couplings of
//! Markov chains, the bi-causal dynamic program and a causality-constrained
//! LP for small path trees.
//!
//! All transport values are reported in power units, i.e. `AW_p^p`, so that
//! they compare directly with integrated `|x − y|^p` costs.

mod chain;
mod dp;
mod lp;
mod simplex;

pub use chain::{
    coupled_cost, coupled_cost_weighted, kr_coupling, stage_weights, synchronous_coupling,
    ConditionalPlan, CoupledChain, StateChain,
};
pub use dp::{bicausal_dp, bicausal_dp_weighted, BicausalSolution};
pub use lp::{causal_lp, metric_suite, CausalMode, MetricSuite, MAX_LP_PATHS};
pub use simplex::transportation_lp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::check_probability_vector;

/// Breakpoint tolerance of the quantile construction.
pub const QUANTILE_TOL: f64 = 1e-14;

/// `|u|^p`, with the common orders computed exactly.
pub fn power_cost(u: f64, p: f64) -> f64 {
    if p == 2.0 {
        u * u
    } else if p == 1.0 {
        u.abs()
    } else {
        u.abs().powf(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub atoms: Vec<f64>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::InvalidMeasure(
                "atoms and weights must be non-empty and of equal length".into(),
            ));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite atom".into()));
        }
        check_probability_vector(&weights)?;
        Ok(DiscreteMeasure { atoms, weights })
    }

    pub fn dirac(a: f64) -> Self {
        DiscreteMeasure {
            atoms: vec![a],
            weights: vec![1.0],
        }
    }

    fn sorted_indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.atoms.len()).collect();
        idx.sort_by(|&a, &b| self.atoms[a].total_cmp(&self.atoms[b]));
        idx
    }
}

/// Left-continuous generalized inverse `inf{x : F(x) ≥ u}`.
pub fn quantile(measure: &DiscreteMeasure, u: f64) -> Result<f64> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::Domain(format!("quantile level {u} outside (0, 1]")));
    }
    let mut cum = 0.0;
    let idx = measure.sorted_indices();
    for &i in &idx {
        cum += measure.weights[i];
        if cum >= u - QUANTILE_TOL {
            return Ok(measure.atoms[i]);
        }
    }
    Ok(measure.atoms[*idx.last().unwrap()])
}

/// A coupling of two finite measures, indexed like its marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub row_marginal: Vec<f64>,
    pub col_marginal: Vec<f64>,
    pub joint: Vec<Vec<f64>>,
    pub cost: f64,
}

impl TransportPlan {
    fn from_joint(joint: Vec<Vec<f64>>, cost_matrix: &[Vec<f64>]) -> Self {
        let row_marginal = joint.iter().map(|r| r.iter().sum()).collect();
        let m = joint.first().map_or(0, |r| r.len());
        let col_marginal = (0..m).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
        let cost = joint
            .iter()
            .zip(cost_matrix)
            .flat_map(|(r, c)| r.iter().zip(c).map(|(x, c)| x * c))
            .sum();
        TransportPlan {
            row_marginal,
            col_marginal,
            joint,
            cost,
        }
    }

    /// Largest violation of the marginal constraints against `a` and `b`.
    pub fn marginal_defect(&self, a: &[f64], b: &[f64]) -> f64 {
        let rows = self
            .joint
            .iter()
            .zip(a)
            .map(|(r, a)| (r.iter().sum::<f64>() - a).abs());
        let m = b.len();
        let cols = (0..m).map(|j| (self.joint.iter().map(|r| r[j]).sum::<f64>() - b[j]).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }

    pub fn evaluate(&self, cost_matrix: &[Vec<f64>]) -> f64 {
        self.joint
            .iter()
            .zip(cost_matrix)
            .flat_map(|(r, c)| r.iter().zip(c).map(|(x, c)| x * c))
            .sum()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.joint.iter().flatten().all(|&x| x >= 0.0)
    }
}

/// Quantile coupling of `(xs, wx)` and `(ys, wy)` as `(i, j, mass)` triples.
pub(crate) fn quantile_pairs(xs: &[f64], wx: &[f64], ys: &[f64], wy: &[f64]) -> Vec<(usize, usize, f64)> {
    let order = |v: &[f64], w: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).filter(|&i| w[i] > 0.0).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        idx
    };
    let (ix, iy) = (order(xs, wx), order(ys, wy));
    let mut out = Vec::with_capacity(ix.len() + iy.len());
    let (mut a, mut b) = (0, 0);
    if ix.is_empty() || iy.is_empty() {
        return out;
    }
    let (mut ra, mut rb) = (wx[ix[0]], wy[iy[0]]);
    while a < ix.len() && b < iy.len() {
        let q = ra.min(rb);
        if q > 0.0 {
            out.push((ix[a], iy[b], q));
        }
        ra -= q;
        rb -= q;
        if ra <= QUANTILE_TOL {
            a += 1;
            if a < ix.len() {
                ra = wx[ix[a]];
            }
        }
        if rb <= QUANTILE_TOL {
            b += 1;
            if b < iy.len() {
                rb = wy[iy[b]];
            }
        }
    }
    out
}

/// The quantile (comonotone) coupling `(F_μ⁻¹(U), F_ν⁻¹(U))`.
pub fn monotone_rearrangement(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: impl Fn(f64, f64) -> f64,
) -> TransportPlan {
    let mut joint = vec![vec![0.0; nu.atoms.len()]; mu.atoms.len()];
    for (i, j, q) in quantile_pairs(&mu.atoms, &mu.weights, &nu.atoms, &nu.weights) {
        joint[i][j] += q;
    }
    let cm: Vec<Vec<f64>> = mu
        .atoms
        .iter()
        .map(|&x| nu.atoms.iter().map(|&y| cost(x, y)).collect())
        .collect();
    TransportPlan::from_joint(joint, &cm)
}

/// `c(x_i, y_j)` for all pairs.
pub fn cost_matrix(xs: &[f64], ys: &[f64], cost: impl Fn(f64, f64) -> f64) -> Vec<Vec<f64>> {
    xs.iter()
        .map(|&x| ys.iter().map(|&y| cost(x, y)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(a: &[f64], w: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::new(a.to_vec(), w.to_vec()).unwrap()
    }

    #[test]
    fn quantile_examples() {
        let two = m(&[0.0, 1.0], &[0.5, 0.5]);
        assert_eq!(quantile(&two, 0.5).unwrap(), 0.0);
        assert_eq!(quantile(&two, 0.50001).unwrap(), 1.0);
        assert_eq!(quantile(&two, 1.0).unwrap(), 1.0);
        let d = DiscreteMeasure::dirac(3.5);
        for u in [1e-9, 0.3, 1.0] {
            assert_eq!(quantile(&d, u).unwrap(), 3.5);
        }
        let skew = m(&[2.0, -1.0], &[0.75, 0.25]);
        assert_eq!(quantile(&skew, 0.25).unwrap(), -1.0);
        assert_eq!(quantile(&skew, 0.3).unwrap(), 2.0);
        assert!(quantile(&two, 0.0).is_err());
        assert!(quantile(&two, 1.5).is_err());
    }

    #[test]
    fn rearrangement_examples() {
        let mu = m(&[0.0, 1.0], &[0.5, 0.5]);
        let nu = m(&[-1.0, 2.0], &[0.25, 0.75]);
        let plan = monotone_rearrangement(&mu, &nu, |x, y| (x - y).abs());
        assert_eq!(plan.joint, vec![vec![0.25, 0.25], vec![0.0, 0.5]]);
        assert_abs_diff_eq!(plan.cost, 1.25, epsilon = 1e-15);

        let plan = monotone_rearrangement(&nu, &nu, |x, y| (x - y).powi(2));
        assert_eq!(plan.joint, vec![vec![0.25, 0.0], vec![0.0, 0.75]]);
        assert_eq!(plan.cost, 0.0);

        let plan = monotone_rearrangement(&DiscreteMeasure::dirac(0.0), &nu, |x, y| (x - y).powi(2));
        assert_eq!(plan.joint, vec![vec![0.25, 0.75]]);
        assert_abs_diff_eq!(plan.cost, 0.25 + 0.75 * 4.0, epsilon = 1e-15);
    }

    #[test]
    fn rearrangement_handles_unsorted_atoms() {
        let mu = m(&[1.0, 0.0], &[0.5, 0.5]);
        let nu = m(&[2.0, -1.0], &[0.75, 0.25]);
        let plan = monotone_rearrangement(&mu, &nu, |x, y| (x - y).abs());
        assert_eq!(plan.joint, vec![vec![0.5, 0.0], vec![0.25, 0.25]]);
        assert!(plan.marginal_defect(&mu.weights, &nu.weights) < 1e-15);
    }
}
