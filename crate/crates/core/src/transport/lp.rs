//! Causality-constrained transport LP on small path trees.
//!
//! A coupling `π` of two tree laws is causal from `μ` to `ν` iff, at every
//! stage `t`, the next `x` coordinate is conditionally independent of
//! `y_{1:t}` given `x_{1:t}`:
//! `π(x_{1:t+1}, y_{1:t}) = μ(x_{t+1} | x_{1:t}) π(x_{1:t}, y_{1:t})`.
//! Anticausality is the mirror condition; bi-causal couplings satisfy both.

use std::collections::HashMap;

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use super::power_cost;
use crate::error::{Error, Result};
use crate::model::DiscretePathMeasure;

/// Largest number of distinct paths per marginal accepted by [`causal_lp`].
pub const MAX_LP_PATHS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CausalMode {
    Classical,
    Causal,
    Anticausal,
    Bicausal,
}

/// Identical paths merged, with prefix-node ids per stage.
struct Tree {
    paths: Vec<Vec<f64>>,
    weights: Vec<f64>,
    /// `node[t][a]`: id of the length-`t+1` prefix of path `a`.
    node: Vec<Vec<usize>>,
    /// `mass[t][id]`
    mass: Vec<Vec<f64>>,
    /// `parent[t][id]`: id of the length-`t` prefix (t ≥ 1).
    parent: Vec<Vec<usize>>,
}

impl Tree {
    fn new(m: &DiscretePathMeasure) -> Result<Tree> {
        m.validate()?;
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let (mut paths, mut weights) = (Vec::new(), Vec::new());
        for (p, &w) in m.paths.iter().zip(&m.weights) {
            if w == 0.0 {
                continue;
            }
            let key = p.iter().map(|v| v.to_bits()).collect();
            let id = *index.entry(key).or_insert_with(|| {
                paths.push(p.clone());
                weights.push(0.0);
                paths.len() - 1
            });
            weights[id] += w;
        }
        if paths.len() > MAX_LP_PATHS {
            return Err(Error::TooLarge(paths.len(), MAX_LP_PATHS));
        }
        let t_len = m.n_stages();
        let (mut node, mut mass, mut parent) = (Vec::new(), Vec::new(), Vec::new());
        for t in 0..t_len {
            let mut ids: HashMap<Vec<u64>, usize> = HashMap::new();
            let mut nt = Vec::with_capacity(paths.len());
            let mut mt: Vec<f64> = Vec::new();
            let mut pt = Vec::new();
            for (a, p) in paths.iter().enumerate() {
                let key: Vec<u64> = p[..=t].iter().map(|v| v.to_bits()).collect();
                let id = *ids.entry(key).or_insert_with(|| {
                    mt.push(0.0);
                    pt.push(if t == 0 { 0 } else { node_at(&node, t - 1, a) });
                    mt.len() - 1
                });
                mt[id] += weights[a];
                nt.push(id);
            }
            node.push(nt);
            mass.push(mt);
            parent.push(pt);
        }
        Ok(Tree {
            paths,
            weights,
            node,
            mass,
            parent,
        })
    }

    fn n_nodes(&self, t: usize) -> usize {
        self.mass[t].len()
    }
}

fn node_at(node: &[Vec<usize>], t: usize, a: usize) -> usize {
    node[t][a]
}

/// Adds `π(child_t+1, v_t) − κ(child | u) π(u_t, v_t) = 0` for the tree on
/// the constrained side. `side_x` selects which coordinate is constrained.
fn add_causality(
    problem: &mut Problem,
    vars: &[Vec<microlp::Variable>],
    own: &Tree,
    other: &Tree,
    side_x: bool,
) {
    let t_len = own.node.len();
    for t in 0..t_len.saturating_sub(1) {
        // children of each stage-t node of the constrained tree
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); own.n_nodes(t)];
        for (c, &par) in own.parent[t + 1].iter().enumerate() {
            children[par].push(c);
        }
        for (u, kids) in children.iter().enumerate() {
            if kids.len() < 2 {
                continue;
            }
            // the last child's constraint is implied by the others
            for &c in &kids[..kids.len() - 1] {
                let kappa = own.mass[t + 1][c] / own.mass[t][u];
                for v in 0..other.n_nodes(t) {
                    let mut expr = LinearExpr::empty();
                    for (a, _) in own.paths.iter().enumerate() {
                        if own.node[t][a] != u {
                            continue;
                        }
                        let coef = if own.node[t + 1][a] == c { 1.0 - kappa } else { -kappa };
                        for (b, _) in other.paths.iter().enumerate() {
                            if other.node[t][b] == v {
                                let var = if side_x { vars[a][b] } else { vars[b][a] };
                                expr.add(var, coef);
                            }
                        }
                    }
                    problem.add_constraint(expr, ComparisonOp::Eq, 0.0);
                }
            }
        }
    }
}

/// Optimal value of `E_π Σ_t |x_t − y_t|^p` over couplings of the given
/// causality class.
pub fn causal_lp(
    mu: &DiscretePathMeasure,
    nu: &DiscretePathMeasure,
    p: f64,
    mode: CausalMode,
) -> Result<f64> {
    if mu.n_stages() != nu.n_stages() {
        return Err(Error::StageMismatch(mu.n_stages(), nu.n_stages()));
    }
    let (tx, ty) = (Tree::new(mu)?, Tree::new(nu)?);
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Vec<microlp::Variable>> = tx
        .paths
        .iter()
        .map(|xa| {
            ty.paths
                .iter()
                .map(|yb| {
                    let c: f64 = xa.iter().zip(yb).map(|(x, y)| power_cost(x - y, p)).sum();
                    problem.add_var(c, (0.0, f64::INFINITY))
                })
                .collect()
        })
        .collect();
    for (a, &w) in tx.weights.iter().enumerate() {
        let expr: LinearExpr = vars[a].iter().map(|&v| (v, 1.0)).collect();
        problem.add_constraint(expr, ComparisonOp::Eq, w);
    }
    // one column constraint is implied by the rest and total mass
    for (b, &w) in ty.weights.iter().enumerate().skip(1) {
        let expr: LinearExpr = vars.iter().map(|r| (r[b], 1.0)).collect();
        problem.add_constraint(expr, ComparisonOp::Eq, w);
    }
    if matches!(mode, CausalMode::Causal | CausalMode::Bicausal) {
        add_causality(&mut problem, &vars, &tx, &ty, true);
    }
    if matches!(mode, CausalMode::Anticausal | CausalMode::Bicausal) {
        add_causality(&mut problem, &vars, &ty, &tx, false);
    }
    let solution = problem
        .solve()
        .map_err(|e| Error::Solver(format!("{e:?}")))?
        .into_solution()
        .map_err(|e| Error::Solver(format!("{e:?}")))?;
    Ok(solution.objective())
}

/// Transport values in power units (`W_p^p` etc.).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSuite {
    pub wasserstein: f64,
    /// Causal from the first measure to the second.
    pub causal: f64,
    /// Causal from the second measure to the first.
    pub causal_reverse: f64,
    pub symmetrized_causal: f64,
    pub adapted: f64,
}

impl MetricSuite {
    /// Largest violation of `AW ≥ SCW ≥ W`.
    pub fn ordering_violation(&self) -> f64 {
        (self.symmetrized_causal - self.adapted)
            .max(self.wasserstein - self.symmetrized_causal)
            .max(0.0)
    }
}

/// LP tolerance for the ordering check.
const ORDERING_TOL: f64 = 1e-8;

pub fn metric_suite(mu: &DiscretePathMeasure, nu: &DiscretePathMeasure, p: f64) -> Result<MetricSuite> {
    let wasserstein = causal_lp(mu, nu, p, CausalMode::Classical)?;
    let causal = causal_lp(mu, nu, p, CausalMode::Causal)?;
    let causal_reverse = causal_lp(mu, nu, p, CausalMode::Anticausal)?;
    let adapted = causal_lp(mu, nu, p, CausalMode::Bicausal)?;
    let suite = MetricSuite {
        wasserstein,
        causal,
        causal_reverse,
        symmetrized_causal: causal.max(causal_reverse),
        adapted,
    };
    if suite.ordering_violation() > ORDERING_TOL {
        return Err(Error::Solver(format!(
            "metric ordering violated by {}",
            suite.ordering_violation()
        )));
    }
    Ok(suite)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn trees(n: f64) -> (DiscretePathMeasure, DiscretePathMeasure) {
        (
            DiscretePathMeasure::uniform(vec![vec![1.0 / n, 1.0], vec![-1.0 / n, -1.0]]).unwrap(),
            DiscretePathMeasure::uniform(vec![vec![0.0, 1.0], vec![0.0, -1.0]]).unwrap(),
        )
    }

    #[test]
    fn example_tree_values() {
        let (mu, nu) = trees(2.0);
        assert_abs_diff_eq!(causal_lp(&mu, &nu, 2.0, CausalMode::Bicausal).unwrap(), 2.25, epsilon = 1e-10);
        assert_abs_diff_eq!(causal_lp(&mu, &nu, 2.0, CausalMode::Classical).unwrap(), 0.25, epsilon = 1e-10);
        let s = metric_suite(&mu, &nu, 2.0).unwrap();
        assert!(s.symmetrized_causal >= 0.25 - 1e-10 && s.symmetrized_causal <= 2.25 + 1e-10);
        // y_2 may follow x_1 causally, but x_1 cannot anticipate y_2
        assert_abs_diff_eq!(s.causal, 0.25, epsilon = 1e-10);
        assert_abs_diff_eq!(s.causal_reverse, 2.25, epsilon = 1e-10);
    }

    #[test]
    fn identical_measures() {
        let (mu, _) = trees(3.0);
        for mode in [CausalMode::Classical, CausalMode::Causal, CausalMode::Anticausal, CausalMode::Bicausal] {
            assert_abs_diff_eq!(causal_lp(&mu, &mu, 2.0, mode).unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn duplicate_paths_merge_and_size_limit() {
        let mu = DiscretePathMeasure::uniform(vec![vec![1.0], vec![1.0], vec![2.0]]).unwrap();
        let nu = DiscretePathMeasure::uniform(vec![vec![1.0], vec![2.0], vec![2.0]]).unwrap();
        assert_abs_diff_eq!(causal_lp(&mu, &nu, 1.0, CausalMode::Classical).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
        let big = DiscretePathMeasure::uniform((0..65).map(|i| vec![i as f64]).collect()).unwrap();
        assert!(matches!(causal_lp(&big, &mu, 1.0, CausalMode::Classical), Err(Error::TooLarge(65, 64))));
    }
}
