//! Primal network simplex for the bipartite transportation problem
//!
//! ```text
//! minimize Σ c_ij f_ij  subject to  Σ_j f_ij = a_i,  Σ_i f_ij = b_j,  f ≥ 0.
//! ```
//!
//! The basis is a spanning tree of the complete bipartite graph with
//! `m + n - 1` cells, started from the north-west corner rule. Node
//! potentials `u_i + v_j = c_ij` on tree cells give reduced costs
//! `c_ij - u_i - v_j`; an entering cell closes a unique cycle in the tree and
//! flow is pushed around it.
//!
//! Pivoting is deterministic. The entering cell has the most negative reduced
//! cost (lowest flat index on ties); the leaving cell is the lowest-index
//! blocking cell. After a long run of degenerate pivots the entering rule
//! falls back to the lowest-index improving cell (Bland), which cannot cycle.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SimplexSolution {
    /// Row-major `m × n` flows.
    pub flow: Vec<f64>,
    /// Row potentials.
    pub u: Vec<f64>,
    /// Column potentials.
    pub v: Vec<f64>,
    pub pivots: usize,
}

struct Tree {
    m: usize,
    n: usize,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    flow: Vec<f64>,
}

impl Tree {
    fn north_west(supply: &[f64], demand: &[f64]) -> Tree {
        let (m, n) = (supply.len(), demand.len());
        let mut sup = supply.to_vec();
        let mut dem = demand.to_vec();
        let mut flow = vec![0.0; m * n];
        let mut is_basic = vec![false; m * n];
        let mut basis = Vec::with_capacity(m + n - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let row_first = sup[i] <= dem[j];
            let q = if i == m - 1 && j == n - 1 {
                sup[i].max(0.0)
            } else {
                sup[i].min(dem[j]).max(0.0)
            };
            flow[i * n + j] = q;
            is_basic[i * n + j] = true;
            basis.push(i * n + j);
            sup[i] -= q;
            dem[j] -= q;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if i == m - 1 {
                j += 1;
            } else if j == n - 1 || row_first {
                i += 1;
            } else {
                j += 1;
            }
        }
        debug_assert_eq!(basis.len(), m + n - 1);
        Tree {
            m,
            n,
            basis,
            is_basic,
            flow,
        }
    }

    /// Adjacency over nodes `0..m` (rows) and `m..m+n` (columns); each entry is
    /// `(neighbor, cell)`.
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.m + self.n];
        for &cell in &self.basis {
            let (i, j) = (cell / self.n, cell % self.n);
            adj[i].push((self.m + j, cell));
            adj[self.m + j].push((i, cell));
        }
        adj
    }

    fn potentials(&self, cost: &[f64], adj: &[Vec<(usize, usize)>]) -> (Vec<f64>, Vec<f64>) {
        let (m, n) = (self.m, self.n);
        let mut pot = vec![f64::NAN; m + n];
        let mut seen = vec![false; m + n];
        pot[0] = 0.0;
        seen[0] = true;
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            for &(nb, cell) in &adj[node] {
                if !seen[nb] {
                    seen[nb] = true;
                    // row potential + column potential = cost
                    pot[nb] = cost[cell] - pot[node];
                    stack.push(nb);
                }
            }
        }
        debug_assert!(seen.iter().all(|&s| s), "basis is not a spanning tree");
        (pot[..m].to_vec(), pot[m..].to_vec())
    }

    /// Tree path from column node of `j` back to row node `i`, as cells.
    fn path(&self, adj: &[Vec<(usize, usize)>], i: usize, j: usize) -> Vec<usize> {
        let total = self.m + self.n;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; total];
        let mut seen = vec![false; total];
        seen[i] = true;
        let mut queue = std::collections::VecDeque::from([i]);
        let target = self.m + j;
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &(nb, cell) in &adj[node] {
                if !seen[nb] {
                    seen[nb] = true;
                    parent[nb] = Some((node, cell));
                    queue.push_back(nb);
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = target;
        while node != i {
            let (prev, cell) = parent[node].expect("tree is connected");
            cells.push(cell);
            node = prev;
        }
        cells
    }
}

/// Solve a balanced transportation problem exactly.
pub fn solve(cost: &[f64], supply: &[f64], demand: &[f64]) -> Result<SimplexSolution> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 || cost.len() != m * n {
        return Err(Error::InvalidInput(format!(
            "cost has {} entries for a {m} × {n} problem",
            cost.len()
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("cost matrix is not finite".into()));
    }
    let (sa, sb): (f64, f64) = (supply.iter().sum(), demand.iter().sum());
    if (sa - sb).abs() > 1e-9 * sa.abs().max(1.0) {
        return Err(Error::Imbalance(sa, sb));
    }

    let scale = cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
    let eps = 1e-13 * scale;
    let mut tree = Tree::north_west(supply, demand);
    let mut pivots = 0;
    let mut degenerate_run = 0;
    let bland_after = 5 * (m + n);
    let max_pivots = 200 * (m + n) * (m + n).max(50);

    loop {
        let adj = tree.adjacency();
        let (u, v) = tree.potentials(cost, &adj);
        let bland = degenerate_run > bland_after;
        let mut entering: Option<usize> = None;
        let mut best = -eps;
        'scan: for i in 0..m {
            for j in 0..n {
                let cell = i * n + j;
                if tree.is_basic[cell] {
                    continue;
                }
                let r = cost[cell] - u[i] - v[j];
                if r < best {
                    entering = Some(cell);
                    if bland {
                        break 'scan;
                    }
                    best = r;
                }
            }
        }
        let Some(enter) = entering else {
            return Ok(SimplexSolution {
                flow: tree.flow,
                u,
                v,
                pivots,
            });
        };
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Solver(format!("network simplex exceeded {max_pivots} pivots")));
        }

        let (ei, ej) = (enter / n, enter % n);
        let path = tree.path(&adj, ei, ej);
        // path cells alternate −, +, −, … starting from the entering column
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for (k, &cell) in path.iter().enumerate() {
            if k % 2 == 0 {
                let f = tree.flow[cell];
                if f < theta || (f == theta && cell < leave) {
                    theta = f;
                    leave = cell;
                }
            }
        }
        for (k, &cell) in path.iter().enumerate() {
            if k % 2 == 0 {
                tree.flow[cell] -= theta;
            } else {
                tree.flow[cell] += theta;
            }
        }
        tree.flow[enter] = theta;
        tree.flow[leave] = 0.0;
        tree.is_basic[leave] = false;
        tree.is_basic[enter] = true;
        let pos = tree.basis.iter().position(|&c| c == leave).expect("leaving cell is basic");
        tree.basis[pos] = enter;

        if theta > 0.0 {
            degenerate_run = 0;
        } else {
            degenerate_run += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_textbook_instance() {
        // supplies 20, 30, 25; demands 10, 35, 30
        let cost = [8.0, 6.0, 10.0, 9.0, 12.0, 13.0, 14.0, 9.0, 16.0];
        let sol = solve(&cost, &[20.0, 30.0, 25.0], &[10.0, 35.0, 30.0]).unwrap();
        let value: f64 = sol.flow.iter().zip(&cost).map(|(f, c)| f * c).sum();
        // dual feasibility plus equal objectives certifies optimality
        for i in 0..3 {
            for j in 0..3 {
                assert!(cost[i * 3 + j] - sol.u[i] - sol.v[j] >= -1e-12);
            }
        }
        let dual: f64 = [20.0, 30.0, 25.0].iter().zip(&sol.u).map(|(a, u)| a * u).sum::<f64>()
            + [10.0, 35.0, 30.0].iter().zip(&sol.v).map(|(b, v)| b * v).sum::<f64>();
        assert!((value - dual).abs() < 1e-9);
    }

    #[test]
    fn imbalance_is_rejected() {
        assert!(matches!(
            solve(&[1.0, 2.0], &[1.0], &[0.5, 0.4]),
            Err(Error::Imbalance(_, _))
        ));
    }

    #[test]
    fn degenerate_assignment_terminates() {
        let n = 12;
        let cost: Vec<f64> = (0..n * n).map(|k| ((k * 7919) % 13) as f64).collect();
        let w = vec![1.0 / n as f64; n];
        let sol = solve(&cost, &w, &w).unwrap();
        for i in 0..n {
            let row: f64 = sol.flow[i * n..(i + 1) * n].iter().sum();
            assert!((row - w[i]).abs() < 1e-12);
        }
    }
}
