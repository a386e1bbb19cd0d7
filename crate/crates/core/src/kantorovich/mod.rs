//! Discrete Monge-Kantorovich problem: exact primal plans, dual potential
//! pairs, complementary-slackness certificates, cost recovery from admissible
//! pairs and Monge-map extraction.
//!
//! Potentials follow the convention `φ₁(y) − φ₀(x) ≤ c(x, y)`; the dual value
//! is `∫φ₁ dμ₁ − ∫φ₀ dμ₀`.

pub mod network_simplex;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dynamics::{steps_for, LagrangianSpec};
use crate::error::{Error, Result};
use crate::manifold::{Covec, GridSpec, TorusPoint};
use crate::measure::DiscreteMeasure;

/// Plan entries at or below this mass are treated as empty.
pub const MASS_THRESHOLD: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub coupling: Array2<f64>,
    pub source: DiscreteMeasure,
    pub target: DiscreteMeasure,
}

impl TransportPlan {
    pub fn new(coupling: Array2<f64>, source: DiscreteMeasure, target: DiscreteMeasure) -> Result<Self> {
        if coupling.dim() != (source.len(), target.len()) {
            return Err(Error::InvalidInput("coupling shape does not match the marginals".into()));
        }
        if coupling.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput("coupling must be finite and non-negative".into()));
        }
        Ok(TransportPlan {
            coupling,
            source,
            target,
        })
    }

    /// Largest deviation of a row or column sum from its marginal weight.
    pub fn marginal_residual(&self) -> f64 {
        let rows = self
            .coupling
            .rows()
            .into_iter()
            .zip(self.source.weights())
            .map(|(r, w)| (r.sum() - w).abs());
        let cols = self
            .coupling
            .columns()
            .into_iter()
            .zip(self.target.weights())
            .map(|(c, w)| (c.sum() - w).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }

    pub fn cost(&self, cost: &Array2<f64>) -> f64 {
        self.coupling.iter().zip(cost.iter()).map(|(m, c)| m * c).sum()
    }

    /// Cells with mass above [`MASS_THRESHOLD`], row-major.
    pub fn support(&self) -> Vec<(usize, usize, f64)> {
        self.coupling
            .indexed_iter()
            .filter(|(_, &m)| m > MASS_THRESHOLD)
            .map(|((i, j), &m)| (i, j, m))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialPair {
    pub phi0: Vec<f64>,
    pub phi1: Vec<f64>,
}

impl PotentialPair {
    /// `∫φ₁ dμ₁ − ∫φ₀ dμ₀`.
    pub fn value(&self, mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> f64 {
        let a: f64 = self.phi1.iter().zip(mu1.weights()).map(|(p, w)| p * w).sum();
        let b: f64 = self.phi0.iter().zip(mu0.weights()).map(|(p, w)| p * w).sum();
        a - b
    }

    /// Largest `φ₁(y) − φ₀(x) − c(x, y)` over all cells (≤ 0 when admissible).
    pub fn admissibility_violation(&self, cost: &Array2<f64>) -> f64 {
        cost.indexed_iter()
            .map(|((i, j), c)| self.phi1[j] - self.phi0[i] - c)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Replace `φ₁` by `min_x φ₀(x) + c(x, ·)`, then `φ₀` by
    /// `max_y φ₁(y) − c(·, y)`. The result is admissible and its value does
    /// not decrease.
    pub fn c_transform_sweeps(&self, cost: &Array2<f64>) -> PotentialPair {
        let phi1: Vec<f64> = cost
            .columns()
            .into_iter()
            .map(|col| {
                col.iter()
                    .zip(&self.phi0)
                    .map(|(c, p)| p + c)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let phi0 = cost
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .zip(&phi1)
                    .map(|(c, p)| p - c)
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        PotentialPair { phi0, phi1 }
    }
}

/// Primal plan, dual pair and both objective values of one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KantorovichSolution {
    pub plan: TransportPlan,
    pub primal: f64,
    pub potentials: PotentialPair,
    pub dual: f64,
    pub pivots: usize,
}

impl KantorovichSolution {
    pub fn duality_gap(&self) -> f64 {
        (self.primal - self.dual).abs()
    }
}

fn check_instance(cost: &Array2<f64>, mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<()> {
    if cost.dim() != (mu0.len(), mu1.len()) {
        return Err(Error::InvalidInput(format!(
            "cost is {:?} but measures have {} and {} atoms",
            cost.dim(),
            mu0.len(),
            mu1.len()
        )));
    }
    Ok(())
}

/// Solve primal and dual together from one network simplex run.
pub fn solve(cost: &Array2<f64>, mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<KantorovichSolution> {
    check_instance(cost, mu0, mu1)?;
    let flat: Vec<f64> = cost.iter().copied().collect();
    let sol = network_simplex::solve(&flat, mu0.weights(), mu1.weights())?;
    let coupling = Array2::from_shape_vec(cost.dim(), sol.flow).expect("shape matches");
    let plan = TransportPlan::new(coupling, mu0.clone(), mu1.clone())?;
    let primal = plan.cost(cost);
    // u_i + v_j ≤ c_ij at optimality, so φ₀ = −u, φ₁ = v is admissible up to rounding
    let basis_pair = PotentialPair {
        phi0: sol.u.iter().map(|u| -u).collect(),
        phi1: sol.v,
    };
    let potentials = basis_pair.c_transform_sweeps(cost);
    let dual = potentials.value(mu0, mu1);
    Ok(KantorovichSolution {
        plan,
        primal,
        potentials,
        dual,
        pivots: sol.pivots,
    })
}

/// Optimal plan and its cost.
pub fn solve_primal(cost: &Array2<f64>, mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<(TransportPlan, f64)> {
    let s = solve(cost, mu0, mu1)?;
    Ok((s.plan, s.primal))
}

/// Optimal admissible pair and its dual value.
pub fn solve_dual(cost: &Array2<f64>, mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<(PotentialPair, f64)> {
    let s = solve(cost, mu0, mu1)?;
    Ok((s.potentials, s.dual))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlacknessReport {
    /// Largest `|φ₁(j) − φ₀(i) − c_ij|` over supported cells.
    pub worst: f64,
    pub at: Option<(usize, usize)>,
    pub violations: usize,
    pub tolerance: f64,
}

impl SlacknessReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Check that the plan is supported where `φ₁(y) − φ₀(x) = c(x, y)`.
pub fn check_slackness(plan: &TransportPlan, pair: &PotentialPair, cost: &Array2<f64>, tol: f64) -> SlacknessReport {
    let mut report = SlacknessReport {
        worst: 0.0,
        at: None,
        violations: 0,
        tolerance: tol,
    };
    for (i, j, _) in plan.support() {
        let gap = (pair.phi1[j] - pair.phi0[i] - cost[[i, j]]).abs();
        if gap > report.worst {
            report.worst = gap;
            report.at = Some((i, j));
        }
        if gap > tol {
            report.violations += 1;
        }
    }
    report
}

/// The admissible pair built from `φ₁ = c(x₀, ·)` and its c-transform
/// `φ₀ = max_y φ₁(y) − c(·, y)`; it attains `φ₁(y) − φ₀(x₀) = c(x₀, y)`.
pub fn anchored_pair(cost: &Array2<f64>, anchor: usize) -> PotentialPair {
    let phi1: Vec<f64> = cost.row(anchor).to_vec();
    let phi0 = cost
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .zip(&phi1)
                .map(|(c, p)| p - c)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    PotentialPair { phi0, phi1 }
}

/// `max over pairs of φ₁(y) − φ₀(x)`: a lower bound on `c(x, y)` when every
/// pair is admissible. `-∞` for an empty list.
pub fn cost_from_pairs(source: usize, target: usize, pairs: &[PotentialPair]) -> f64 {
    pairs
        .iter()
        .map(|p| p.phi1[target] - p.phi0[source])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Gradient of a potential sampled on a grid, with a differentiability flag
/// per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialGradient {
    pub gradient: Vec<Covec>,
    pub differentiable: Vec<bool>,
    /// `max |Δφ| / h` over grid edges.
    pub lipschitz: f64,
}

/// Centered differences of `phi` on `grid`. A node counts as differentiable
/// when every per-axis second difference satisfies
/// `|Δ²φ| / h² ≤ 10 · max(L, 1)`, `L` the grid Lipschitz estimate.
pub fn potential_gradient(grid: &GridSpec, phi: &[f64]) -> Result<PotentialGradient> {
    if phi.len() != grid.len() {
        return Err(Error::InvalidInput("potential does not match the grid".into()));
    }
    let h = grid.spacing();
    let d = grid.dim();
    let mut lip: f64 = 0.0;
    for node in 0..grid.len() {
        for a in 0..d {
            let nb = grid.neighbor(node, a, 1);
            lip = lip.max((phi[nb] - phi[node]).abs() / h);
        }
    }
    let threshold = 10.0 * lip.max(1.0);
    let mut gradient = Vec::with_capacity(grid.len());
    let mut differentiable = Vec::with_capacity(grid.len());
    for node in 0..grid.len() {
        let mut g = vec![0.0; d];
        let mut smooth = true;
        for (a, ga) in g.iter_mut().enumerate() {
            let (up, dn) = (grid.neighbor(node, a, 1), grid.neighbor(node, a, -1));
            *ga = (phi[up] - phi[dn]) / (2.0 * h);
            if ((phi[up] - 2.0 * phi[node] + phi[dn]) / (h * h)).abs() > threshold {
                smooth = false;
            }
        }
        gradient.push(Covec(g));
        differentiable.push(smooth);
    }
    Ok(PotentialGradient {
        gradient,
        differentiable,
        lipschitz: lip,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapExtraction {
    /// True when every row with mass has a single supported column.
    pub is_map: bool,
    /// The single supported column per row, when there is one.
    pub plan_image: Vec<Option<usize>>,
    /// `π ∘ ψ_0^T(x, ∂_pH(x, dφ₀(x), 0))` at differentiable atoms.
    pub analytic_image: Vec<Option<TorusPoint>>,
    pub nondifferentiable_fraction: f64,
    /// Set when the non-differentiable fraction exceeds the allowed one.
    pub degenerate_potential: bool,
}

/// Read a Monge map off a plan and compare it with the map generated by the
/// gradient of the initial potential.
pub fn extract_map(
    plan: &TransportPlan,
    grad: &PotentialGradient,
    spec: &LagrangianSpec,
    horizon: f64,
    steps_per_unit: usize,
    max_nondifferentiable: f64,
) -> Result<MapExtraction> {
    let n0 = plan.source.len();
    if grad.gradient.len() != n0 {
        return Err(Error::InvalidInput("gradient field does not match the source atoms".into()));
    }
    let mut plan_image = Vec::with_capacity(n0);
    let mut is_map = true;
    for (i, row) in plan.coupling.rows().into_iter().enumerate() {
        let cols: Vec<usize> = row
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > MASS_THRESHOLD)
            .map(|(j, _)| j)
            .collect();
        if cols.len() == 1 {
            plan_image.push(Some(cols[0]));
        } else {
            plan_image.push(None);
            if plan.source.weights()[i] > MASS_THRESHOLD {
                is_map = false;
            }
        }
    }
    let steps = steps_for(0.0, horizon, steps_per_unit);
    let mut analytic_image = Vec::with_capacity(n0);
    for (i, x) in plan.source.atoms().iter().enumerate() {
        if !grad.differentiable[i] {
            analytic_image.push(None);
            continue;
        }
        let v = spec.legendre_p_to_v(&grad.gradient[i]);
        let p = spec.legendre_v_to_p(&v);
        let (end, _) = spec.flow_lifted(x.coords(), &p.0, 0.0, horizon, steps)?;
        analytic_image.push(Some(LagrangianSpec::wrap_lifted(&end)));
    }
    let bad = grad.differentiable.iter().filter(|d| !**d).count();
    let frac = bad as f64 / n0 as f64;
    Ok(MapExtraction {
        is_map,
        plan_image,
        analytic_image,
        nondifferentiable_fraction: frac,
        degenerate_potential: frac > max_nondifferentiable,
    })
}

#[cfg(test)]
mod tests;
