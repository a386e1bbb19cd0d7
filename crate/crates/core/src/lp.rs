//! Dense two-phase simplex for small standard-form LPs.
//!
//! ```text
//! minimize cᵀx  subject to  Ax = b,  x ≥ 0
//! ```
//!
//! Phase one minimizes the sum of artificial variables; artificials left in
//! the basis at level zero are pivoted out or their rows dropped as
//! redundant. The entering column is the most negative reduced cost (lowest
//! index on ties) until a run of degenerate pivots, then Bland's rule.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// `(rows + 1) × (cols + 1)`; the last row holds reduced costs, the last
    /// column the right-hand side.
    data: Vec<f64>,
    basis: Vec<usize>,
    active: Vec<bool>,
}

impl Tableau {
    fn width(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width() + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width();
        let p = self.at(r, c);
        for k in 0..w {
            self.data[r * w + k] /= p;
        }
        let pivot_row: Vec<f64> = self.data[r * w..(r + 1) * w].to_vec();
        for i in 0..=self.rows {
            if i == r {
                continue;
            }
            let f = self.data[i * w + c];
            if f != 0.0 {
                let row = &mut self.data[i * w..(i + 1) * w];
                for (x, &pv) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Runs the simplex on the current objective row over columns
    /// `0..allowed`. Returns the pivot count.
    fn optimize(&mut self, allowed: usize, eps: f64) -> Result<usize> {
        let bland_after = 5 * (self.rows + allowed);
        let max_pivots = 50 * (self.rows + allowed) * self.rows.max(10);
        let mut degenerate = 0;
        let mut pivots = 0;
        loop {
            let bland = degenerate > bland_after;
            let obj = self.rows;
            let mut enter = None;
            let mut best = -eps;
            for c in 0..allowed {
                let d = self.at(obj, c);
                if d < best {
                    enter = Some(c);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(c) = enter else {
                return Ok(pivots);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                if !self.active[r] {
                    continue;
                }
                let a = self.at(r, c);
                if a > eps {
                    let ratio = self.rhs(r) / a;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - eps
                                || (ratio <= lratio + eps && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return Err(Error::Solver("linear program is unbounded".into()));
            };
            self.pivot(r, c);
            pivots += 1;
            if pivots > max_pivots {
                return Err(Error::Solver(format!("simplex exceeded {max_pivots} pivots")));
            }
            if ratio > eps {
                degenerate = 0;
            } else {
                degenerate += 1;
            }
        }
    }
}

/// Solve `min cᵀx, Ax = b, x ≥ 0` with `A` row-major `m × n`.
pub fn solve_standard(a: &[f64], b: &[f64], c: &[f64]) -> Result<LpSolution> {
    let (m, n) = (b.len(), c.len());
    if a.len() != m * n {
        return Err(Error::InvalidInput(format!(
            "constraint matrix has {} entries for {m} × {n}",
            a.len()
        )));
    }
    if a.iter().chain(b).chain(c).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("linear program data is not finite".into()));
    }
    let scale = a.iter().chain(b).fold(1.0f64, |s, v| s.max(v.abs()));
    let eps = 1e-11 * scale;
    let cols = n + m;
    let w = cols + 1;
    let mut data = vec![0.0; (m + 1) * w];
    for r in 0..m {
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            data[r * w + j] = sign * a[r * n + j];
        }
        data[r * w + n + r] = 1.0;
        data[r * w + cols] = sign * b[r];
    }
    // phase-one reduced costs: minus the column sums of the original block
    for r in 0..m {
        for j in 0..n {
            data[m * w + j] -= data[r * w + j];
        }
        data[m * w + cols] -= data[r * w + cols];
    }
    let mut t = Tableau {
        rows: m,
        cols,
        data,
        basis: (n..n + m).collect(),
        active: vec![true; m],
    };
    let mut pivots = t.optimize(cols, eps)?;
    let infeasibility = -t.at(m, cols);
    if infeasibility > 1e-9 * scale {
        return Err(Error::Solver(format!(
            "linear program is infeasible (phase-one residual {infeasibility:e})"
        )));
    }
    for r in 0..m {
        if t.basis[r] < n {
            continue;
        }
        match (0..n).find(|&j| t.at(r, j).abs() > eps) {
            Some(j) => {
                t.pivot(r, j);
                pivots += 1;
            }
            None => t.active[r] = false,
        }
    }
    // phase two: reduced costs c_j − c_Bᵀ B⁻¹ A_j over original columns
    for k in 0..w {
        t.data[m * w + k] = if k < n { c[k] } else { 0.0 };
    }
    for r in 0..m {
        if !t.active[r] {
            continue;
        }
        let cb = c[t.basis[r]];
        if cb != 0.0 {
            for k in 0..w {
                t.data[m * w + k] -= cb * t.data[r * w + k];
            }
        }
    }
    pivots += t.optimize(n, eps)?;
    let mut x = vec![0.0; n];
    for r in 0..m {
        if t.active[r] && t.basis[r] < n {
            x[t.basis[r]] = t.rhs(r).max(0.0);
        }
    }
    let objective = x.iter().zip(c).map(|(x, c)| x * c).sum();
    Ok(LpSolution { x, objective, pivots })
}

/// Minimum of `Σ c_ij η_ij` over probability matrices `η` whose row and column
/// sums agree. Returns the row-major optimizer and the optimum.
pub fn equal_marginals(cost: &[f64], n: usize) -> Result<LpSolution> {
    if cost.len() != n * n || n == 0 {
        return Err(Error::InvalidInput(format!(
            "cost has {} entries, expected {n}²",
            cost.len()
        )));
    }
    let vars = n * n;
    let m = n + 1;
    let mut a = vec![0.0; m * vars];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                a[i * vars + i * n + j] += 1.0;
                a[i * vars + j * n + i] -= 1.0;
            }
        }
    }
    for v in 0..vars {
        a[n * vars + v] = 1.0;
    }
    let mut b = vec![0.0; m];
    b[n] = 1.0;
    solve_standard(&a, &b, cost)
}

/// Karp's minimum cycle mean over the complete digraph (self-loops included)
/// with arc weights `cost[i * n + j]`.
pub fn min_cycle_mean(cost: &[f64], n: usize) -> f64 {
    // d[k][v]: minimum weight of a k-arc walk ending at v, from any start
    let mut d = vec![vec![0.0; n]; n + 1];
    for k in 1..=n {
        for v in 0..n {
            d[k][v] = (0..n)
                .map(|u| d[k - 1][u] + cost[u * n + v])
                .fold(f64::INFINITY, f64::min);
        }
    }
    (0..n)
        .map(|v| {
            (0..n)
                .map(|k| (d[n][v] - d[k][v]) / (n - k) as f64)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_lp() {
        // min -x - y, x + 2y + s1 = 4, 3x + y + s2 = 6
        let a = [1.0, 2.0, 1.0, 0.0, 3.0, 1.0, 0.0, 1.0];
        let sol = solve_standard(&a, &[4.0, 6.0], &[-1.0, -1.0, 0.0, 0.0]).unwrap();
        assert!((sol.objective + 2.8).abs() < 1e-12);
        assert!((sol.x[0] - 1.6).abs() < 1e-12 && (sol.x[1] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        // x = -1 with x ≥ 0
        assert!(solve_standard(&[1.0], &[-1.0], &[0.0]).is_err());
        // min -x, x - y = 0
        assert!(solve_standard(&[1.0, -1.0], &[0.0], &[-1.0, 0.0]).is_err());
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        let a = [1.0, 1.0, 2.0, 2.0];
        let sol = solve_standard(&a, &[1.0, 2.0], &[1.0, 3.0]).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_marginals_matches_cycle_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in 1..=12 {
            let cost: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sol = equal_marginals(&cost, n).unwrap();
            let karp = min_cycle_mean(&cost, n);
            assert!((sol.objective - karp).abs() < 1e-10, "n={n}: {} vs {karp}", sol.objective);
            let total: f64 = sol.x.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            for i in 0..n {
                let row: f64 = (0..n).map(|j| sol.x[i * n + j]).sum();
                let col: f64 = (0..n).map(|j| sol.x[j * n + i]).sum();
                assert!((row - col).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn cycle_mean_of_a_known_graph() {
        // the 2-cycle 0 → 1 → 0 has mean 1.5; self-loops cost 4
        let cost = [4.0, 1.0, 2.0, 4.0];
        assert_eq!(min_cycle_mean(&cost, 2), 1.5);
        assert!((equal_marginals(&cost, 2).unwrap().objective - 1.5).abs() < 1e-12);
    }
}
