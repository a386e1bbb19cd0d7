//! Time-periodic mode: Mather's `α = min_μ C₀¹(μ, μ)` on a grid, the Mather
//! measure in phase space, and its invariance and graph certificates.
//!
//! The minimum over `μ` is one linear program over probability matrices `η`
//! with equal row and column sums. Its optimizers are convex combinations of
//! cycles, so Karp's minimum cycle mean computes the same value.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{minimize_bvp, ActionOptions};
use crate::cache::{cached_cost_matrix, CacheStats, CostCache};
use crate::dynamics::{LagrangianSpec, PhasePoint};
use crate::error::{Error, Result};
use crate::hamilton_jacobi::{lipschitz_estimate, value_slices, velocity_field, DEFAULT_MASK_TOLERANCE};
use crate::kantorovich::{self, TransportPlan};
use crate::lp;
use crate::manifold::{distance, GridSpec, TangentVec, TorusPoint};
use crate::measure::DiscreteMeasure;
use crate::wasserstein::w1_with_cost;

/// Grid nodes carrying less mass than this are dropped from `μ`.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;
/// Slack in the graph inequality `‖v − v′‖ ≤ K d(x, x′) + tol`.
pub const MERGE_TOL: f64 = 1e-9;
/// `ε` at which the default graph bound is read off the Lipschitz estimate.
pub const GRAPH_EPSILON: f64 = 0.25;

/// One phase-space atom of `m₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseAtom {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub mass: f64,
    /// Grid nodes of the plan cell that produced the atom.
    pub source: usize,
    pub target: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphReport {
    /// `max ‖v − v′‖ / d(x, x′)` over atom pairs; `None` with fewer than two
    /// atoms.
    pub max_ratio: Option<f64>,
    pub worst_pair: Option<(usize, usize)>,
    pub k_bound: Option<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatherDiagnostics {
    /// `‖row sums − column sums‖∞` of the LP optimizer.
    pub marginal_residual: f64,
    pub lp_pivots: usize,
    pub invariance_defect: Option<f64>,
    pub graph: Option<GraphReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatherSolution {
    pub alpha: f64,
    pub grid: GridSpec,
    /// Grid nodes in the support of `μ`, increasing.
    pub support: Vec<usize>,
    /// Common marginal of the plan, on the support nodes.
    pub mu: DiscreteMeasure,
    pub plan: TransportPlan,
    pub m0: Vec<PhaseAtom>,
    pub diagnostics: MatherDiagnostics,
}

fn check_periodic(spec: &LagrangianSpec, horizon: f64) -> Result<()> {
    match spec.time_period() {
        None if spec.is_autonomous() => Ok(()),
        Some(p) if ((horizon / p) - (horizon / p).round()).abs() < 1e-12 => Ok(()),
        _ => Err(Error::InvalidInput(format!(
            "Mather mode needs a Lagrangian with time period dividing {horizon}"
        ))),
    }
}

/// Minimum of `Σ c_ij η_ij` over the equal-marginals polytope for a square
/// cost on grid nodes; returns the optimizer as an `n × n` matrix.
pub fn equal_marginals_lp(cost: &Array2<f64>) -> Result<(f64, Array2<f64>, usize)> {
    let n = cost.nrows();
    if cost.ncols() != n {
        return Err(Error::InvalidInput("equal-marginals cost must be square".into()));
    }
    let flat: Vec<f64> = cost.iter().copied().collect();
    let sol = lp::equal_marginals(&flat, n)?;
    let eta = Array2::from_shape_vec((n, n), sol.x).map_err(|e| Error::Solver(e.to_string()))?;
    Ok((sol.objective, eta, sol.pivots))
}

/// `α` and the optimal equal-marginals plan from a precomputed `c₀¹` on the
/// grid nodes.
pub fn alpha_from_cost(grid: &GridSpec, cost: &Array2<f64>) -> Result<MatherSolution> {
    if cost.dim() != (grid.len(), grid.len()) {
        return Err(Error::Dependency("cost matrix does not match the grid".into()));
    }
    let (alpha, eta, pivots) = equal_marginals_lp(cost)?;
    let rows: Vec<f64> = eta.rows().into_iter().map(|r| r.sum()).collect();
    let cols: Vec<f64> = eta.columns().into_iter().map(|c| c.sum()).collect();
    let marginal_residual = rows.iter().zip(&cols).map(|(r, c)| (r - c).abs()).fold(0.0, f64::max);
    let support: Vec<usize> = (0..grid.len())
        .filter(|&i| rows[i].max(cols[i]) > SUPPORT_THRESHOLD)
        .collect();
    let atoms: Vec<TorusPoint> = support.iter().map(|&i| grid.node(i)).collect();
    let mu = DiscreteMeasure::normalized(atoms, support.iter().map(|&i| rows[i]).collect())?;
    let coupling = Array2::from_shape_fn((support.len(), support.len()), |(a, b)| {
        eta[[support[a], support[b]]].max(0.0)
    });
    let plan = TransportPlan::new(coupling, mu.clone(), mu.clone())?;
    Ok(MatherSolution {
        alpha,
        grid: *grid,
        support,
        mu,
        plan,
        m0: Vec::new(),
        diagnostics: MatherDiagnostics {
            marginal_residual,
            lp_pivots: pivots,
            ..Default::default()
        },
    })
}

/// `α` by the equal-marginals LP on `c₀¹` over all grid nodes.
pub fn alpha_lp(
    spec: &LagrangianSpec,
    grid: &GridSpec,
    opts: &ActionOptions,
    cache: Option<&CostCache>,
) -> Result<(MatherSolution, CacheStats)> {
    check_periodic(spec, 1.0)?;
    let nodes = grid.nodes();
    let (cost, stats) = cached_cost_matrix(cache, spec, &nodes, &nodes, 0.0, 1.0, opts)?;
    Ok((alpha_from_cost(grid, &cost)?, stats))
}

/// Phase-space atoms `(x, γ̇(0), m)` for every plan cell, with `γ` the
/// minimizing extremal from `x` to the cell's target over `[0, 1]`.
pub fn mather_measure(solution: &MatherSolution, spec: &LagrangianSpec, opts: &ActionOptions) -> Result<Vec<PhaseAtom>> {
    let atoms = solution.mu.atoms();
    solution
        .plan
        .support()
        .into_par_iter()
        .map(|(a, b, m)| {
            let r = minimize_bvp(spec, &atoms[a], &atoms[b], 0.0, 1.0, opts).map_err(|e| Error::Pair {
                source_atom: solution.support[a],
                target_atom: solution.support[b],
                source: Box::new(e),
            })?;
            Ok(PhaseAtom {
                x: atoms[a].coords().to_vec(),
                v: r.curve.initial_velocity(spec).0,
                mass: m,
                source: solution.support[a],
                target: solution.support[b],
            })
        })
        .collect()
}

fn phase_distance(a: &PhasePoint, b: &PhasePoint) -> f64 {
    let dv: f64 = a.v.0.iter().zip(&b.v.0).map(|(x, y)| (x - y) * (x - y)).sum();
    distance(&a.x, &b.x) + dv.sqrt()
}

fn phase_points(m0: &[PhaseAtom]) -> Result<Vec<PhasePoint>> {
    m0.iter()
        .map(|a| {
            Ok(PhasePoint {
                x: crate::manifold::wrap(&a.x)?,
                v: TangentVec(a.v.clone()),
                t: 0.0,
            })
        })
        .collect()
}

/// W1 in phase space, metric `d(x, x′) + ‖v − v′‖`, between `m₀` and its
/// image under the time-one flow.
pub fn invariance_check(m0: &[PhaseAtom], spec: &LagrangianSpec, steps_per_unit: usize) -> Result<f64> {
    if m0.is_empty() {
        return Err(Error::InvalidInput("empty phase-space measure".into()));
    }
    let start = phase_points(m0)?;
    let image: Vec<PhasePoint> = start
        .par_iter()
        .map(|p| spec.flow(p, 1.0, steps_per_unit))
        .collect::<Result<_>>()?;
    let cost = Array2::from_shape_fn((start.len(), image.len()), |(i, j)| phase_distance(&start[i], &image[j]));
    let w: Vec<f64> = m0.iter().map(|a| a.mass).collect();
    w1_with_cost(&w, &w, &cost)
}

/// Checks `‖v − v′‖ ≤ K d(x, x′) + MERGE_TOL` over all atom pairs and
/// reports the largest ratio. Coincident positions with distinct velocities
/// give an infinite ratio.
pub fn graph_check(m0: &[PhaseAtom], k_bound: Option<f64>) -> GraphReport {
    let mut max_ratio: Option<f64> = None;
    let mut worst_pair = None;
    let mut passed = true;
    for i in 0..m0.len() {
        for j in i + 1..m0.len() {
            let (a, b) = (&m0[i], &m0[j]);
            let d = crate::manifold::shortest_displacement(&a.x, &b.x)
                .iter()
                .map(|c| c * c)
                .sum::<f64>()
                .sqrt();
            let dv = a.v.iter().zip(&b.v).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            let ratio = if dv <= MERGE_TOL {
                0.0
            } else if d == 0.0 {
                f64::INFINITY
            } else {
                dv / d
            };
            if max_ratio.is_none_or(|r| ratio > r) {
                max_ratio = Some(ratio);
                worst_pair = Some((i, j));
            }
            if let Some(k) = k_bound {
                passed &= dv <= k * d + MERGE_TOL;
            }
        }
    }
    GraphReport {
        max_ratio,
        worst_pair,
        k_bound,
        passed,
    }
}

/// `K̂(ε = 0.25)` of the transport from `μ` to itself over `[0, 1]`, with
/// value slices at multiples of 1/8. `None` when the estimate is undefined.
pub fn graph_bound(
    solution: &MatherSolution,
    spec: &LagrangianSpec,
    opts: &ActionOptions,
    cache: Option<&CostCache>,
) -> Result<Option<f64>> {
    let atoms = solution.mu.atoms();
    let (cost, _) = cached_cost_matrix(cache, spec, atoms, atoms, 0.0, 1.0, opts)?;
    let sol = kantorovich::solve(&cost, &solution.mu, &solution.mu)?;
    let times: Vec<f64> = (1..8).map(|k| k as f64 / 8.0).collect();
    let (slices, _) = value_slices(
        spec,
        &solution.grid,
        atoms,
        atoms,
        &sol.potentials,
        1.0,
        &times,
        DEFAULT_MASK_TOLERANCE,
        opts,
        cache,
    )?;
    let field = velocity_field(spec, &solution.grid, atoms, &slices, opts)?;
    Ok(lipschitz_estimate(&field, 1.0, &[GRAPH_EPSILON])[0].k_hat)
}

/// Full pipeline: `α`, `m₀`, invariance defect and graph check against the
/// default bound.
pub fn solve(
    spec: &LagrangianSpec,
    grid: &GridSpec,
    opts: &ActionOptions,
    steps_per_unit: usize,
    cache: Option<&CostCache>,
) -> Result<(MatherSolution, CacheStats)> {
    let (mut sol, stats) = alpha_lp(spec, grid, opts, cache)?;
    sol.m0 = mather_measure(&sol, spec, opts)?;
    sol.diagnostics.invariance_defect = Some(invariance_check(&sol.m0, spec, steps_per_unit)?);
    let k = graph_bound(&sol, spec, opts, cache)?;
    sol.diagnostics.graph = Some(graph_check(&sol.m0, k));
    Ok((sol, stats))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaTReport {
    /// `(T, α_T)` with `α_T = min_μ C₀ᵀ(μ, μ) / T`.
    pub values: Vec<(u32, f64)>,
    /// Largest `|α_T − α_T′|` over all pairs.
    pub max_deviation: f64,
}

/// `α_T` for each `T` by the equal-marginals LP on `c₀ᵀ`.
pub fn alpha_t_check(
    spec: &LagrangianSpec,
    grid: &GridSpec,
    t_values: &[u32],
    opts: &ActionOptions,
    cache: Option<&CostCache>,
) -> Result<AlphaTReport> {
    if t_values.is_empty() || t_values.contains(&0) {
        return Err(Error::InvalidInput("periods must be integers ≥ 1".into()));
    }
    check_periodic(spec, 1.0)?;
    let nodes = grid.nodes();
    let mut values = Vec::with_capacity(t_values.len());
    for &t in t_values {
        let (cost, _) = cached_cost_matrix(cache, spec, &nodes, &nodes, 0.0, t as f64, opts)?;
        let (value, _, _) = equal_marginals_lp(&cost)?;
        values.push((t, value / t as f64));
    }
    let mut max_deviation: f64 = 0.0;
    for a in &values {
        for b in &values {
            max_deviation = max_deviation.max((a.1 - b.1).abs());
        }
    }
    Ok(AlphaTReport { values, max_deviation })
}

#[cfg(test)]
mod tests;
