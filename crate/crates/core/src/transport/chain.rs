//! Finite-state chains and couplings between them.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{power_cost, quantile_pairs, TransportPlan};
use crate::error::{Error, Result};
use crate::lattice::LatticeBuild;
use crate::model::{DiscretePathMeasure, MarkovLattice};

/// A finite-stage Markov chain whose states carry real values. Unlike
/// [`MarkovLattice`], values need not be sorted or distinct, so a path tree
/// can be represented with one state per history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateChain {
    /// `values[k]`: state values at stage `k` (stage 0 has one state).
    pub values: Vec<Vec<f64>>,
    /// `transitions[k][i][j]`: stage `k` state `i` to stage `k+1` state `j`.
    pub transitions: Vec<Vec<Vec<f64>>>,
}

impl StateChain {
    pub fn n_stages(&self) -> usize {
        self.transitions.len()
    }

    /// Children of state `i` at stage `k` with positive probability.
    pub fn children(&self, k: usize, i: usize) -> (Vec<usize>, Vec<f64>) {
        self.transitions[k][i]
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(j, &p)| (j, p))
            .unzip()
    }

    /// History expansion of a path tree: a state for every distinct prefix.
    pub fn from_tree(measure: &DiscretePathMeasure) -> Result<Self> {
        measure.validate()?;
        let t_len = measure.n_stages();
        let mut values = vec![vec![0.0]];
        let mut transitions = Vec::with_capacity(t_len);
        // node of each path at the previous stage
        let mut prev_node = vec![0usize; measure.paths.len()];
        let mut prev_mass = vec![1.0];
        for t in 1..=t_len {
            let mut ids: HashMap<Vec<u64>, usize> = HashMap::new();
            let mut vals = Vec::new();
            let mut mass = Vec::new();
            let mut parent = Vec::new();
            let mut node = vec![0usize; measure.paths.len()];
            for (a, path) in measure.paths.iter().enumerate() {
                let key: Vec<u64> = path[..t].iter().map(|v| v.to_bits()).collect();
                let id = *ids.entry(key).or_insert_with(|| {
                    vals.push(path[t - 1]);
                    mass.push(0.0);
                    parent.push(prev_node[a]);
                    vals.len() - 1
                });
                mass[id] += measure.weights[a];
                node[a] = id;
            }
            let mut trans = vec![vec![0.0; vals.len()]; prev_mass.len()];
            for (id, (&par, &w)) in parent.iter().zip(&mass).enumerate() {
                if prev_mass[par] > 0.0 {
                    trans[par][id] = w / prev_mass[par];
                }
            }
            // rows of massless histories: any distribution will do
            for (par, row) in trans.iter_mut().enumerate() {
                if prev_mass[par] == 0.0 {
                    if let Some(id) = parent.iter().position(|&p| p == par) {
                        row[id] = 1.0;
                    }
                }
            }
            values.push(vals);
            transitions.push(trans);
            prev_node = node;
            prev_mass = mass;
        }
        Ok(StateChain {
            values,
            transitions,
        })
    }
}

impl From<&MarkovLattice> for StateChain {
    fn from(l: &MarkovLattice) -> Self {
        StateChain {
            values: (0..=l.n_stages()).map(|k| l.support(k).to_vec()).collect(),
            transitions: l.stages.iter().map(|s| s.transitions.clone()).collect(),
        }
    }
}

/// Joint kernel of a product state: a plan between the positive-probability
/// children of the two coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPlan {
    pub x_children: Vec<usize>,
    pub y_children: Vec<usize>,
    pub plan: TransportPlan,
}

/// A Markov coupling of two chains on product states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledChain {
    pub x: StateChain,
    pub y: StateChain,
    /// `kernels[k][i][j]`: joint law of the stage-`k+1` pair given `(i, j)`.
    pub kernels: Vec<Vec<Vec<ConditionalPlan>>>,
}

impl CoupledChain {
    pub fn n_stages(&self) -> usize {
        self.kernels.len()
    }

    /// Stage-`k` probabilities of product states.
    pub fn pair_marginals(&self) -> Vec<Vec<Vec<f64>>> {
        let mut out = vec![vec![vec![1.0]]];
        for k in 0..self.n_stages() {
            let prev = out.last().unwrap();
            let mut next = vec![vec![0.0; self.y.values[k + 1].len()]; self.x.values[k + 1].len()];
            for (i, row) in prev.iter().enumerate() {
                for (j, &mass) in row.iter().enumerate() {
                    if mass == 0.0 {
                        continue;
                    }
                    let cp = &self.kernels[k][i][j];
                    for (a, &xa) in cp.x_children.iter().enumerate() {
                        for (b, &yb) in cp.y_children.iter().enumerate() {
                            next[xa][yb] += mass * cp.plan.joint[a][b];
                        }
                    }
                }
            }
            out.push(next);
        }
        out
    }

    /// Pairs with positive probability at stage `k`.
    pub fn reachable_pairs(&self, k: usize) -> Vec<(usize, usize)> {
        let marg = &self.pair_marginals()[k];
        let mut out = Vec::new();
        for (i, row) in marg.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Largest elementwise gap between the marginalized joint kernels and
    /// the transition matrices of the two chains.
    pub fn marginal_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.n_stages() {
            for (i, row) in self.kernels[k].iter().enumerate() {
                for (j, cp) in row.iter().enumerate() {
                    let mut xm = vec![0.0; self.x.values[k + 1].len()];
                    let mut ym = vec![0.0; self.y.values[k + 1].len()];
                    for (a, &xa) in cp.x_children.iter().enumerate() {
                        for (b, &yb) in cp.y_children.iter().enumerate() {
                            xm[xa] += cp.plan.joint[a][b];
                            ym[yb] += cp.plan.joint[a][b];
                        }
                    }
                    for (m, t) in xm.iter().zip(&self.x.transitions[k][i]) {
                        worst = worst.max((m - t).abs());
                    }
                    for (m, t) in ym.iter().zip(&self.y.transitions[k][j]) {
                        worst = worst.max((m - t).abs());
                    }
                }
            }
        }
        worst
    }
}

fn check_stages(x: &StateChain, y: &StateChain) -> Result<()> {
    if x.n_stages() != y.n_stages() {
        return Err(Error::StageMismatch(x.n_stages(), y.n_stages()));
    }
    Ok(())
}

fn plan_from_pairs(
    xc: Vec<usize>,
    yc: Vec<usize>,
    pairs: &[(usize, usize, f64)],
    cost: impl Fn(usize, usize) -> f64,
) -> ConditionalPlan {
    let mut joint = vec![vec![0.0; yc.len()]; xc.len()];
    for &(a, b, q) in pairs {
        joint[a][b] += q;
    }
    let cm: Vec<Vec<f64>> = (0..xc.len())
        .map(|a| (0..yc.len()).map(|b| cost(xc[a], yc[b])).collect())
        .collect();
    ConditionalPlan {
        plan: TransportPlan::from_joint(joint, &cm),
        x_children: xc,
        y_children: yc,
    }
}

/// Knothe–Rosenblatt coupling: every product state couples its two
/// conditional kernels by the quantile coupling.
pub fn kr_coupling(x: &StateChain, y: &StateChain) -> Result<CoupledChain> {
    check_stages(x, y)?;
    let kernels = (0..x.n_stages())
        .map(|k| {
            (0..x.values[k].len())
                .map(|i| {
                    let (xc, xw) = x.children(k, i);
                    let xv: Vec<f64> = xc.iter().map(|&a| x.values[k + 1][a]).collect();
                    (0..y.values[k].len())
                        .map(|j| {
                            let (yc, yw) = y.children(k, j);
                            let yv: Vec<f64> = yc.iter().map(|&b| y.values[k + 1][b]).collect();
                            let pairs = quantile_pairs(&xv, &xw, &yv, &yw);
                            plan_from_pairs(xc.clone(), yc, &pairs, |a, b| {
                                (x.values[k + 1][a] - y.values[k + 1][b]).abs()
                            })
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(CoupledChain {
        x: x.clone(),
        y: y.clone(),
        kernels,
    })
}

/// Couples two lattices built from one increment quantization by feeding
/// both the same atom.
pub fn synchronous_coupling(x: &LatticeBuild, y: &LatticeBuild) -> Result<CoupledChain> {
    if x.quantization.atoms.len() != y.quantization.atoms.len() {
        return Err(Error::Config("lattices use different atom counts".into()));
    }
    let (xs, ys) = (StateChain::from(&x.lattice), StateChain::from(&y.lattice));
    check_stages(&xs, &ys)?;
    let w = &x.quantization.weights;
    let kernels = (0..xs.n_stages())
        .map(|k| {
            (0..xs.values[k].len())
                .map(|i| {
                    let (xc, _) = xs.children(k, i);
                    (0..ys.values[k].len())
                        .map(|j| {
                            let (yc, _) = ys.children(k, j);
                            let pairs: Vec<(usize, usize, f64)> = (0..w.len())
                                .map(|l| {
                                    let a = xc.binary_search(&x.atom_children[k][i][l]).unwrap();
                                    let b = yc.binary_search(&y.atom_children[k][j][l]).unwrap();
                                    (a, b, w[l])
                                })
                                .collect();
                            plan_from_pairs(xc.clone(), yc, &pairs, |a, b| {
                                (xs.values[k + 1][a] - ys.values[k + 1][b]).abs()
                            })
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(CoupledChain {
        x: xs,
        y: ys,
        kernels,
    })
}

/// `h = 1/N` on every stage if `scaled`, else 1.
pub fn stage_weights(n_stages: usize, scaled: bool) -> Vec<f64> {
    let w = if scaled { 1.0 / n_stages as f64 } else { 1.0 };
    vec![w; n_stages]
}

/// `E Σ_k w_k |x_k − y_k|^p` under the coupling.
pub fn coupled_cost(chain: &CoupledChain, p: f64, scaled: bool) -> f64 {
    coupled_cost_weighted(chain, p, &stage_weights(chain.n_stages(), scaled))
}

pub fn coupled_cost_weighted(chain: &CoupledChain, p: f64, weights: &[f64]) -> f64 {
    let marg = chain.pair_marginals();
    let mut total = 0.0;
    for k in 1..marg.len() {
        let mut stage = 0.0;
        for (i, row) in marg[k].iter().enumerate() {
            for (j, &mass) in row.iter().enumerate() {
                if mass > 0.0 {
                    stage += mass * power_cost(chain.x.values[k][i] - chain.y.values[k][j], p);
                }
            }
        }
        total += weights[k - 1] * stage;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, LatticeConfig};
    use crate::model::CoefficientSpec as C;
    use approx::assert_abs_diff_eq;

    fn example_trees(n: f64) -> (DiscretePathMeasure, DiscretePathMeasure) {
        (
            DiscretePathMeasure::uniform(vec![vec![1.0 / n, 1.0], vec![-1.0 / n, -1.0]]).unwrap(),
            DiscretePathMeasure::uniform(vec![vec![0.0, 1.0], vec![0.0, -1.0]]).unwrap(),
        )
    }

    #[test]
    fn tree_expansion() {
        let (mu, nu) = example_trees(2.0);
        let x = StateChain::from_tree(&mu).unwrap();
        assert_eq!(x.values, vec![vec![0.0], vec![0.5, -0.5], vec![1.0, -1.0]]);
        assert_eq!(x.transitions[1], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let y = StateChain::from_tree(&nu).unwrap();
        assert_eq!(y.values[1], vec![0.0]);
        assert_eq!(y.transitions[1], vec![vec![0.5, 0.5]]);
    }

    #[test]
    fn product_cost_of_example_trees() {
        let (mu, nu) = example_trees(2.0);
        let chain = kr_coupling(&StateChain::from_tree(&mu).unwrap(), &StateChain::from_tree(&nu).unwrap()).unwrap();
        // all kernels here are forced to be products
        assert_abs_diff_eq!(coupled_cost(&chain, 2.0, false), 2.25, epsilon = 1e-15);
    }

    #[test]
    fn diagonal_and_deterministic() {
        let l = build_lattice(&C::ou(1.0), &C::constant(1.0), &LatticeConfig::default()).unwrap().lattice;
        let s = StateChain::from(&l);
        let chain = kr_coupling(&s, &s).unwrap();
        assert_eq!(coupled_cost(&chain, 2.0, true), 0.0);
        assert_eq!(coupled_cost(&chain, 1.0, false), 0.0);
        assert!(chain.marginal_defect() < 1e-15);

        // deterministic lines x_k = k h c1, y_k = k h c2
        let n = 16;
        let cfg = LatticeConfig { n_steps: n, ..LatticeConfig::default() };
        let x = build_lattice(&C::constant(1.0), &C::constant(0.0), &cfg).unwrap().lattice;
        let y = build_lattice(&C::constant(-0.5), &C::constant(0.0), &cfg).unwrap().lattice;
        let chain = kr_coupling(&(&x).into(), &(&y).into()).unwrap();
        let h = 1.0 / n as f64;
        let expected: f64 = (1..=n).map(|k| h.powi(3) * 2.25 * (k * k) as f64).sum();
        assert_abs_diff_eq!(coupled_cost(&chain, 2.0, true), expected, epsilon = 1e-12);
    }

    #[test]
    fn dirac_kernel_gives_product() {
        let cfg = LatticeConfig { n_steps: 3, atoms: 3, ..LatticeConfig::default() };
        let x = build_lattice(&C::constant(1.0), &C::constant(0.0), &cfg).unwrap().lattice;
        let y = build_lattice(&C::ou(0.5), &C::constant(1.0), &cfg).unwrap().lattice;
        let chain = kr_coupling(&(&x).into(), &(&y).into()).unwrap();
        for k in 0..3 {
            for row in &chain.kernels[k] {
                for cp in row {
                    assert_eq!(cp.x_children.len(), 1);
                    assert_eq!(cp.plan.joint.len(), 1);
                }
            }
        }
        for (j, cp) in chain.kernels[1][0].iter().enumerate() {
            let (_, yw) = chain.y.children(1, j);
            for (a, b) in cp.plan.joint[0].iter().zip(&yw) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn common_atoms_reproduce_kr() {
        let cfg = LatticeConfig { n_steps: 4, atoms: 5, max_support: 40, ..LatticeConfig::default() };
        let pairs = [
            (C::constant(1.0), C::constant(1.0), C::constant(0.0), C::constant(1.0)),
            (C::ou(1.0), C::constant(1.0), C::ou(1.0), C::constant(0.5)),
            (C::affine(0.3, -0.4), C::affine(1.0, 0.1), C::constant(-0.2), C::constant(0.7)),
        ];
        for (b1, s1, b2, s2) in pairs {
            let bx = build_lattice(&b1, &s1, &cfg).unwrap();
            let by = build_lattice(&b2, &s2, &cfg).unwrap();
            let sync = synchronous_coupling(&bx, &by).unwrap();
            let kr = kr_coupling(&(&bx.lattice).into(), &(&by.lattice).into()).unwrap();
            assert!(sync.marginal_defect() < 1e-12);
            assert!(kr.marginal_defect() < 1e-10);
            for k in 0..4 {
                for (rs, rk) in sync.kernels[k].iter().zip(&kr.kernels[k]) {
                    for (cs, ck) in rs.iter().zip(rk) {
                        assert_eq!(cs.x_children, ck.x_children);
                        assert_eq!(cs.y_children, ck.y_children);
                        for (a, b) in cs.plan.joint.iter().flatten().zip(ck.plan.joint.iter().flatten()) {
                            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn stage_mismatch() {
        let a = build_lattice(&C::constant(0.0), &C::constant(1.0), &LatticeConfig { n_steps: 2, ..LatticeConfig::default() }).unwrap().lattice;
        let b = build_lattice(&C::constant(0.0), &C::constant(1.0), &LatticeConfig { n_steps: 3, ..LatticeConfig::default() }).unwrap().lattice;
        assert!(matches!(kr_coupling(&(&a).into(), &(&b).into()), Err(Error::StageMismatch(2, 3))));
    }
}
