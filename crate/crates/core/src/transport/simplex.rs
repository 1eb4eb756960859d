//! Transportation simplex (u–v / MODI method) on a spanning-tree basis.

use std::collections::VecDeque;

use super::TransportPlan;
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-12;
const FEASIBILITY_TOL: f64 = 1e-9;

/// Exact minimizer of `Σ π_ij c_ij` over couplings of `a` and `b`.
pub fn transportation_lp(cost: &[Vec<f64>], a: &[f64], b: &[f64]) -> Result<TransportPlan> {
    if cost.len() != a.len() || cost.iter().any(|r| r.len() != b.len()) {
        return Err(Error::Config("cost matrix shape does not match marginals".into()));
    }
    if a.iter().chain(b).any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidMeasure("marginals must be nonnegative".into()));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::Config("non-finite cost".into()));
    }
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if (sa - sb).abs() > FEASIBILITY_TOL {
        return Err(Error::Infeasible(sa, sb));
    }

    let rows: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..b.len()).filter(|&j| b[j] > 0.0).collect();
    let mut joint = vec![vec![0.0; b.len()]; a.len()];
    if rows.is_empty() || cols.is_empty() {
        return Ok(TransportPlan::from_joint(joint, cost));
    }
    let ra: Vec<f64> = rows.iter().map(|&i| a[i]).collect();
    let rb: Vec<f64> = cols.iter().map(|&j| b[j] * sa / sb).collect();
    let c: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| cols.iter().map(|&j| cost[i][j]).collect())
        .collect();
    let x = solve(&c, &ra, &rb)?;
    for (ri, &i) in rows.iter().enumerate() {
        for (ci, &j) in cols.iter().enumerate() {
            joint[i][j] = x[ri][ci];
        }
    }
    Ok(TransportPlan::from_joint(joint, cost))
}

fn solve(c: &[Vec<f64>], a: &[f64], b: &[f64]) -> Result<Vec<Vec<f64>>> {
    let (n, m) = (a.len(), b.len());
    let mut x = vec![vec![0.0; m]; n];
    let mut basic = vec![vec![false; m]; n];

    // north-west corner start, n + m − 1 basic cells (degenerate ones at 0)
    let (mut sa, mut sb) = (a.to_vec(), b.to_vec());
    let (mut i, mut j) = (0, 0);
    loop {
        let q = sa[i].min(sb[j]).max(0.0);
        x[i][j] = q;
        basic[i][j] = true;
        sa[i] -= q;
        sb[j] -= q;
        if i == n - 1 && j == m - 1 {
            break;
        }
        if i == n - 1 {
            j += 1;
        } else if j == m - 1 || sa[i] <= sb[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    if n == 1 || m == 1 {
        return Ok(x);
    }

    let scale = c.iter().flatten().fold(1.0f64, |s, v| s.max(v.abs()));
    let tol = PIVOT_TOL * scale;
    let max_iter = 10_000 * (n + m);
    let bland_after = 50 * (n + m);
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; m];

    for iter in 0..max_iter {
        potentials(c, &basic, &mut u, &mut v);

        let mut enter = None;
        let mut best = -tol;
        'scan: for i in 0..n {
            for j in 0..m {
                if basic[i][j] {
                    continue;
                }
                let d = c[i][j] - u[i] - v[j];
                if d < best {
                    enter = Some((i, j));
                    if iter >= bland_after {
                        break 'scan;
                    }
                    best = d;
                }
            }
        }
        let Some((ei, ej)) = enter else {
            return Ok(x);
        };

        // basis path from column ej back to row ei; cells alternate −, +, ...
        let path = tree_path(&basic, ej, ei);
        let mut theta = f64::INFINITY;
        let mut leave = path[0];
        for (k, &(pi, pj)) in path.iter().enumerate() {
            if k % 2 == 0 && x[pi][pj] < theta {
                theta = x[pi][pj];
                leave = (pi, pj);
            }
        }
        for (k, &(pi, pj)) in path.iter().enumerate() {
            if k % 2 == 0 {
                x[pi][pj] -= theta;
            } else {
                x[pi][pj] += theta;
            }
        }
        x[ei][ej] = theta;
        basic[ei][ej] = true;
        basic[leave.0][leave.1] = false;
        x[leave.0][leave.1] = 0.0;
    }
    Err(Error::Solver("transportation simplex did not terminate".into()))
}

/// Solves `u_i + v_j = c_ij` on the basis tree with `u_0 = 0`.
fn potentials(c: &[Vec<f64>], basic: &[Vec<bool>], u: &mut [f64], v: &mut [f64]) {
    let (n, m) = (u.len(), v.len());
    let mut seen_r = vec![false; n];
    let mut seen_c = vec![false; m];
    let mut queue = VecDeque::new();
    u[0] = 0.0;
    seen_r[0] = true;
    queue.push_back((true, 0usize));
    while let Some((is_row, k)) = queue.pop_front() {
        if is_row {
            for j in 0..m {
                if basic[k][j] && !seen_c[j] {
                    v[j] = c[k][j] - u[k];
                    seen_c[j] = true;
                    queue.push_back((false, j));
                }
            }
        } else {
            for i in 0..n {
                if basic[i][k] && !seen_r[i] {
                    u[i] = c[i][k] - v[k];
                    seen_r[i] = true;
                    queue.push_back((true, i));
                }
            }
        }
    }
}

/// Cells on the unique basis-tree path from column `col` to row `row`.
fn tree_path(basic: &[Vec<bool>], col: usize, row: usize) -> Vec<(usize, usize)> {
    let (n, m) = (basic.len(), basic[0].len());
    // nodes: rows 0..n, columns n..n+m
    let mut parent = vec![usize::MAX; n + m];
    let start = n + col;
    parent[start] = start;
    let mut queue = VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        if node == row {
            break;
        }
        if node < n {
            for j in 0..m {
                if basic[node][j] && parent[n + j] == usize::MAX {
                    parent[n + j] = node;
                    queue.push_back(n + j);
                }
            }
        } else {
            let j = node - n;
            for i in 0..n {
                if basic[i][j] && parent[i] == usize::MAX {
                    parent[i] = node;
                    queue.push_back(i);
                }
            }
        }
    }
    let mut cells = Vec::new();
    let mut node = row;
    while node != start {
        let p = parent[node];
        let cell = if node < n { (node, p - n) } else { (p, node - n) };
        cells.push(cell);
        node = p;
    }
    cells.reverse();
    cells
}
