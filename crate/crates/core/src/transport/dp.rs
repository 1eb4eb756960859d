//! Backward induction for the bi-causal transport problem with a
//! stage-separable cost `Σ_k w_k |x_k − y_k|^p`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chain::{coupled_cost_weighted, stage_weights, ConditionalPlan, CoupledChain, StateChain};
use super::{power_cost, transportation_lp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicausalSolution {
    pub value: f64,
    pub p: f64,
    pub weights: Vec<f64>,
    /// The optimal Markov coupling; its kernels are the stagewise argmins.
    pub policy: CoupledChain,
}

impl BicausalSolution {
    /// Forward expectation of the cost under the policy.
    pub fn evaluate_policy(&self) -> f64 {
        coupled_cost_weighted(&self.policy, self.p, &self.weights)
    }

    /// Number of conditional plans stored in the policy.
    pub fn policy_size(&self) -> usize {
        self.policy.kernels.iter().map(|s| s.iter().map(|r| r.len()).sum::<usize>()).sum()
    }
}

pub fn bicausal_dp(x: &StateChain, y: &StateChain, p: f64, scaled: bool) -> Result<BicausalSolution> {
    bicausal_dp_weighted(x, y, p, &stage_weights(x.n_stages(), scaled))
}

/// `V_N = 0`, `V_k(i, j) = min_γ Σ γ(a, b) [w_{k+1} |x_a − y_b|^p + V_{k+1}(a, b)]`
/// over couplings `γ` of the two conditional kernels.
pub fn bicausal_dp_weighted(
    x: &StateChain,
    y: &StateChain,
    p: f64,
    weights: &[f64],
) -> Result<BicausalSolution> {
    let n = x.n_stages();
    if n != y.n_stages() {
        return Err(Error::StageMismatch(n, y.n_stages()));
    }
    if weights.len() != n {
        return Err(Error::Config(format!("{} stage weights for {n} stages", weights.len())));
    }
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("cost order p = {p} must be ≥ 1")));
    }
    let mut value = vec![vec![0.0; y.values[n].len()]; x.values[n].len()];
    let mut kernels = Vec::with_capacity(n);
    for k in (0..n).rev() {
        let next = &value;
        let stage: Vec<Vec<(f64, ConditionalPlan)>> = (0..x.values[k].len())
            .into_par_iter()
            .map(|i| {
                let (xc, xw) = x.children(k, i);
                (0..y.values[k].len())
                    .map(|j| {
                        let (yc, yw) = y.children(k, j);
                        let cost: Vec<Vec<f64>> = xc
                            .iter()
                            .map(|&a| {
                                yc.iter()
                                    .map(|&b| {
                                        weights[k]
                                            * power_cost(x.values[k + 1][a] - y.values[k + 1][b], p)
                                            + next[a][b]
                                    })
                                    .collect()
                            })
                            .collect();
                        let plan = transportation_lp(&cost, &xw, &yw)?;
                        Ok((
                            plan.cost,
                            ConditionalPlan {
                                x_children: xc.clone(),
                                y_children: yc,
                                plan,
                            },
                        ))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        value = stage
            .iter()
            .map(|r| r.iter().map(|(v, _)| *v).collect())
            .collect();
        kernels.push(
            stage
                .into_iter()
                .map(|r| r.into_iter().map(|(_, cp)| cp).collect())
                .collect(),
        );
    }
    kernels.reverse();
    Ok(BicausalSolution {
        value: value[0][0],
        p,
        weights: weights.to_vec(),
        policy: CoupledChain {
            x: x.clone(),
            y: y.clone(),
            kernels,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::super::{coupled_cost, kr_coupling};
    use super::*;
    use crate::lattice::{build_lattice, check_fosd, LatticeConfig};
    use crate::model::{CoefficientSpec as C, DiscretePathMeasure};
    use approx::assert_abs_diff_eq;

    #[test]
    fn identical_chains_cost_nothing() {
        let l = build_lattice(&C::ou(1.0), &C::constant(1.0), &LatticeConfig::default()).unwrap().lattice;
        let s = StateChain::from(&l);
        let sol = bicausal_dp(&s, &s, 2.0, true).unwrap();
        assert_abs_diff_eq!(sol.value, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn example_trees_value() {
        let mu = DiscretePathMeasure::uniform(vec![vec![0.5, 1.0], vec![-0.5, -1.0]]).unwrap();
        let nu = DiscretePathMeasure::uniform(vec![vec![0.0, 1.0], vec![0.0, -1.0]]).unwrap();
        let sol = bicausal_dp(&StateChain::from_tree(&mu).unwrap(), &StateChain::from_tree(&nu).unwrap(), 2.0, false).unwrap();
        assert_abs_diff_eq!(sol.value, 2.25, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.evaluate_policy(), 2.25, epsilon = 1e-12);
    }

    #[test]
    fn kr_is_optimal_on_certified_lattices() {
        let cfg = LatticeConfig { n_steps: 6, atoms: 5, max_support: 40, trunc_k: 4.0, x0: 0.2 };
        let x = build_lattice(&C::affine(0.5, -1.0), &C::affine(1.0, 0.2), &cfg).unwrap().lattice;
        let y = build_lattice(&C::ou(2.0), &C::constant(0.6), &cfg).unwrap().lattice;
        assert!(check_fosd(&x).is_certified() && check_fosd(&y).is_certified());
        let (sx, sy) = (StateChain::from(&x), StateChain::from(&y));
        let kr = kr_coupling(&sx, &sy).unwrap();
        for p in [1.0, 2.0] {
            for scaled in [false, true] {
                let sol = bicausal_dp(&sx, &sy, p, scaled).unwrap();
                assert_abs_diff_eq!(sol.value, coupled_cost(&kr, p, scaled), epsilon = 1e-9);
                assert_abs_diff_eq!(sol.value, sol.evaluate_policy(), epsilon = 1e-9);
            }
            let w = [0.3, 1.0, 0.1, 2.0, 0.5, 0.7];
            let sol = bicausal_dp_weighted(&sx, &sy, p, &w).unwrap();
            assert_abs_diff_eq!(sol.value, coupled_cost_weighted(&kr, p, &w), epsilon = 1e-9);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let l = build_lattice(&C::ou(1.0), &C::constant(1.0), &LatticeConfig { n_steps: 2, ..LatticeConfig::default() }).unwrap().lattice;
        let s = StateChain::from(&l);
        assert!(bicausal_dp(&s, &s, 0.5, false).is_err());
        assert!(bicausal_dp_weighted(&s, &s, 2.0, &[1.0]).is_err());
    }
}
