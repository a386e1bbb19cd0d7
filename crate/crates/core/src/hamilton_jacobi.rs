//! Lax-Oleinik value functions on grids and the transport set.
//!
//! For a Kantorovich pair `(φ₀, φ₁)` on the atoms of `μ₀` and `μ_T`,
//!
//! ```text
//! u(x, t) = min_i φ₀(x_i) + c_0^t(x_i, x)
//! ŭ(x, t) = max_j φ₁(y_j) − c_t^T(x, y_j)
//! ```
//!
//! are evaluated at the nodes of a grid by a min (max) over cost matrices. For
//! an admissible pair `ŭ ≤ u`, and the transport set is where they agree up
//! to a tolerance. On it the interpolation field `X(x, t)` is read off the
//! minimizing extremal arriving at `(x, t)` and cross-checked against
//! `∂_pH(x, ∂_x u)` from finite differences.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{minimize_bvp, ActionOptions};
use crate::cache::{cached_cost_matrix, CacheStats, CostCache};
use crate::dynamics::LagrangianSpec;
use crate::error::{Error, Result};
use crate::kantorovich::PotentialPair;
use crate::manifold::{distance, GridSpec, TorusPoint};

/// Assumed accuracy of converged cost-matrix entries relative to each other.
pub const DEFAULT_COST_ACCURACY: f64 = 1e-5;

/// Mask tolerance used when none is given: ten times the cost accuracy.
pub const DEFAULT_MASK_TOLERANCE: f64 = 10.0 * DEFAULT_COST_ACCURACY;

/// Only masked points closer than this (in space-time) enter `K̂(ε)`.
pub const LIPSCHITZ_CUTOFF: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub time: f64,
}

/// A value function slice together with its optimizers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaxOleinik {
    pub field: GridField,
    /// Per node, the atoms attaining the min (max) within `1e-12`, ascending.
    pub optimizers: Vec<Vec<usize>>,
    /// Per node, the centered difference of the branch `φ(i) ± cost(i, ·)`
    /// of the lowest-index optimizer; equals `∂_x u` where `u` is
    /// differentiable.
    pub branch_gradient: Vec<Vec<f64>>,
}

impl LaxOleinik {
    pub fn values(&self) -> &[f64] {
        &self.field.values
    }

    /// Lowest-index optimizer at `node`.
    pub fn argopt(&self, node: usize) -> usize {
        self.optimizers[node][0]
    }
}

fn check_shape(cost: &Array2<f64>, expected: (usize, usize), what: &str) -> Result<()> {
    if cost.dim() != expected {
        return Err(Error::Dependency(format!(
            "{what} cost matrix is {:?}, expected {:?}",
            cost.dim(),
            expected
        )));
    }
    Ok(())
}

fn optimize(
    values: impl Fn(usize) -> Vec<f64> + Sync,
    grid: &GridSpec,
    time: f64,
    better: fn(f64, f64) -> bool,
) -> Result<LaxOleinik> {
    let (vals, optimizers): (Vec<f64>, Vec<Vec<usize>>) = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let cand = values(node);
            let best = cand
                .iter()
                .copied()
                .fold(None, |acc: Option<f64>, c| match acc {
                    Some(a) if !better(c, a) => Some(a),
                    _ => Some(c),
                })
                .expect("nonempty candidate list");
            let tol = 1e-12 * best.abs().max(1.0);
            let opt = cand
                .iter()
                .enumerate()
                .filter(|(_, c)| (**c - best).abs() <= tol)
                .map(|(i, _)| i)
                .collect();
            (best, opt)
        })
        .unzip();
    if let Some(node) = vals.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("value function is not finite at node {node}")));
    }
    Ok(LaxOleinik {
        field: GridField {
            grid: grid.clone(),
            values: vals,
            time,
        },
        optimizers,
        branch_gradient: Vec::new(),
    })
}

fn branch_gradients(grid: &GridSpec, opt: &[Vec<usize>], branch: impl Fn(usize, usize) -> f64) -> Vec<Vec<f64>> {
    let h = grid.spacing();
    (0..grid.len())
        .map(|x| {
            let i = opt[x][0];
            (0..grid.dim())
                .map(|a| (branch(i, grid.neighbor(x, a, 1)) - branch(i, grid.neighbor(x, a, -1))) / (2.0 * h))
                .collect()
        })
        .collect()
}

/// `u(x) = min_i φ₀(i) + cost[i, x]` at every grid node; `cost` is
/// `sources × grid` for `c_0^t`.
pub fn lax_oleinik_forward(phi0: &[f64], cost: &Array2<f64>, grid: &GridSpec, t: f64) -> Result<LaxOleinik> {
    check_shape(cost, (phi0.len(), grid.len()), "forward")?;
    let mut lo = optimize(
        |x| phi0.iter().enumerate().map(|(i, p)| p + cost[[i, x]]).collect(),
        grid,
        t,
        |a, b| a < b,
    )?;
    lo.branch_gradient = branch_gradients(grid, &lo.optimizers, |i, x| cost[[i, x]]);
    Ok(lo)
}

/// `ŭ(x) = max_j φ₁(j) − cost[x, j]` at every grid node; `cost` is
/// `grid × targets` for `c_t^T`.
pub fn lax_oleinik_backward(phi1: &[f64], cost: &Array2<f64>, grid: &GridSpec, t: f64) -> Result<LaxOleinik> {
    check_shape(cost, (grid.len(), phi1.len()), "backward")?;
    let mut lo = optimize(
        |x| phi1.iter().enumerate().map(|(j, p)| p - cost[[x, j]]).collect(),
        grid,
        t,
        |a, b| a > b,
    )?;
    lo.branch_gradient = branch_gradients(grid, &lo.optimizers, |j, x| -cost[[x, j]]);
    Ok(lo)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportSetMask {
    pub time: f64,
    pub mask: Vec<bool>,
    pub tolerance: f64,
}

impl TransportSetMask {
    pub fn nodes(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).collect()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Nodes where `u − ŭ ≤ tol`.
pub fn transport_set(u: &GridField, u_back: &GridField, tol: f64) -> Result<TransportSetMask> {
    if u.values.len() != u_back.values.len() || u.time != u_back.time {
        return Err(Error::InvalidInput("u and ŭ live on different grids or times".into()));
    }
    Ok(TransportSetMask {
        time: u.time,
        mask: u.values.iter().zip(&u_back.values).map(|(a, b)| a - b <= tol).collect(),
        tolerance: tol,
    })
}

/// Forward and backward value functions and the mask at one interior time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HjSlice {
    pub time: f64,
    pub u: LaxOleinik,
    pub u_back: LaxOleinik,
    pub mask: TransportSetMask,
}

impl HjSlice {
    /// `max (ŭ − u)`; non-positive when the ordering holds.
    pub fn ordering_violation(&self) -> f64 {
        self.u
            .values()
            .iter()
            .zip(self.u_back.values())
            .map(|(a, b)| b - a)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Value functions of a Kantorovich pair at interior `times` of `[0, horizon]`.
#[allow(clippy::too_many_arguments)]
pub fn value_slices(
    spec: &LagrangianSpec,
    grid: &GridSpec,
    sources: &[TorusPoint],
    targets: &[TorusPoint],
    pair: &PotentialPair,
    horizon: f64,
    times: &[f64],
    tol: f64,
    opts: &ActionOptions,
    cache: Option<&CostCache>,
) -> Result<(Vec<HjSlice>, CacheStats)> {
    if pair.phi0.len() != sources.len() || pair.phi1.len() != targets.len() {
        return Err(Error::InvalidInput("potentials do not match the atoms".into()));
    }
    let nodes = grid.nodes();
    let mut stats = CacheStats::default();
    let mut slices = Vec::with_capacity(times.len());
    for &t in times {
        if !(t > 0.0 && t < horizon) {
            return Err(Error::InvalidInput(format!("slice time {t} is not interior to (0, {horizon})")));
        }
        let (fwd, s1) = cached_cost_matrix(cache, spec, sources, &nodes, 0.0, t, opts)?;
        let (bwd, s2) = cached_cost_matrix(cache, spec, &nodes, targets, t, horizon, opts)?;
        stats += s1;
        stats += s2;
        let u = lax_oleinik_forward(&pair.phi0, &fwd, grid, t)?;
        let u_back = lax_oleinik_backward(&pair.phi1, &bwd, grid, t)?;
        let mask = transport_set(&u.field, &u_back.field, tol)?;
        slices.push(HjSlice { time: t, u, u_back, mask });
    }
    Ok((slices, stats))
}

/// `∂_x u` at `node` from centered differences, one-sided (second order when
/// two usable neighbors are available) when only one side is usable. A
/// neighbor is usable when `usable(neighbor)` holds.
pub fn masked_gradient(grid: &GridSpec, values: &[f64], usable: impl Fn(usize) -> bool, node: usize) -> Vec<f64> {
    let h = grid.spacing();
    (0..grid.dim())
        .map(|a| {
            let up = grid.neighbor(node, a, 1);
            let dn = grid.neighbor(node, a, -1);
            let u0 = values[node];
            match (usable(up), usable(dn)) {
                (true, false) => {
                    let up2 = grid.neighbor(node, a, 2);
                    if usable(up2) {
                        (-3.0 * u0 + 4.0 * values[up] - values[up2]) / (2.0 * h)
                    } else {
                        (values[up] - u0) / h
                    }
                }
                (false, true) => {
                    let dn2 = grid.neighbor(node, a, -2);
                    if usable(dn2) {
                        (3.0 * u0 - 4.0 * values[dn] + values[dn2]) / (2.0 * h)
                    } else {
                        (u0 - values[dn]) / h
                    }
                }
                _ => (values[up] - values[dn]) / (2.0 * h),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSlice {
    pub time: f64,
    pub nodes: Vec<usize>,
    /// Velocity at time `t` of the minimizing extremal ending at the node.
    pub extremal: Vec<Vec<f64>>,
    /// `∂_pH(x, ∂_x u)` with `∂_x u` the centered difference of the active
    /// branch of `u`.
    pub gradient: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldEstimate {
    pub grid: GridSpec,
    pub slices: Vec<FieldSlice>,
    /// Sup over the mask of `|extremal − gradient|`.
    pub max_deviation: f64,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl VectorFieldEstimate {
    pub fn is_empty(&self) -> bool {
        self.slices.iter().all(|s| s.nodes.is_empty())
    }

    /// Extremal velocity at the masked node nearest to `x` on the slice
    /// nearest to `t` (earliest on ties). Also returns the node distance.
    pub fn lookup(&self, x: &TorusPoint, t: f64) -> Option<(Vec<f64>, f64)> {
        let slice = self
            .slices
            .iter()
            .filter(|s| !s.nodes.is_empty())
            .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))?;
        slice
            .nodes
            .iter()
            .enumerate()
            .map(|(k, &n)| (k, distance(x, &self.grid.node(n))))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, d)| (slice.extremal[k].clone(), d))
    }
}

/// The interpolation field on the masks of `slices`, whose forward value
/// functions were built from `sources`.
pub fn velocity_field(
    spec: &LagrangianSpec,
    grid: &GridSpec,
    sources: &[TorusPoint],
    slices: &[HjSlice],
    opts: &ActionOptions,
) -> Result<VectorFieldEstimate> {
    let mut out = Vec::with_capacity(slices.len());
    let mut max_deviation: f64 = 0.0;
    for slice in slices {
        let nodes = slice.mask.nodes();
        let extremal = nodes
            .par_iter()
            .map(|&node| {
                let src = &sources[slice.u.argopt(node)];
                let r = minimize_bvp(spec, src, &grid.node(node), 0.0, slice.time, opts)?;
                Ok(r.curve.final_velocity(spec).0)
            })
            .collect::<Result<Vec<_>>>()?;
        let gradient: Vec<Vec<f64>> = nodes
            .iter()
            .map(|&node| {
                let p = &slice.u.branch_gradient[node];
                let mut v = vec![0.0; p.len()];
                for (a, va) in v.iter_mut().enumerate() {
                    for (b, pb) in p.iter().enumerate() {
                        *va += spec.kinetic_inv()[a * p.len() + b] * pb;
                    }
                }
                v
            })
            .collect();
        for (e, g) in extremal.iter().zip(&gradient) {
            max_deviation = max_deviation.max(euclid(e, g));
        }
        out.push(FieldSlice {
            time: slice.time,
            nodes,
            extremal,
            gradient,
        });
    }
    Ok(VectorFieldEstimate {
        grid: grid.clone(),
        slices: out,
        max_deviation,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub epsilon: f64,
    /// `None` when fewer than two masked points lie in `[ε, T − ε]`.
    pub k_hat: Option<f64>,
    pub points: usize,
}

/// `K̂(ε)`: the largest `|X − X'| / dist` over masked space-time points with
/// times in `[ε, T − ε]` at space-time distance at most [`LIPSCHITZ_CUTOFF`].
pub fn lipschitz_estimate(field: &VectorFieldEstimate, horizon: f64, epsilons: &[f64]) -> Vec<LipschitzEstimate> {
    let points: Vec<(TorusPoint, f64, &[f64])> = field
        .slices
        .iter()
        .flat_map(|s| {
            s.nodes
                .iter()
                .zip(&s.extremal)
                .map(move |(&n, v)| (field.grid.node(n), s.time, v.as_slice()))
        })
        .collect();
    epsilons
        .iter()
        .map(|&eps| {
            let inside: Vec<&(TorusPoint, f64, &[f64])> = points
                .iter()
                .filter(|p| p.1 >= eps - 1e-12 && p.1 <= horizon - eps + 1e-12)
                .collect();
            let mut k: Option<f64> = None;
            if inside.len() >= 2 {
                let mut best: f64 = 0.0;
                for i in 0..inside.len() {
                    for j in i + 1..inside.len() {
                        let (a, b) = (inside[i], inside[j]);
                        let ds = distance(&a.0, &b.0);
                        let dist = (ds * ds + (a.1 - b.1).powi(2)).sqrt();
                        if dist > 0.0 && dist <= LIPSCHITZ_CUTOFF {
                            best = best.max(euclid(a.2, b.2) / dist);
                        }
                    }
                }
                k = Some(best);
            }
            LipschitzEstimate {
                epsilon: eps,
                k_hat: k,
                points: inside.len(),
            }
        })
        .collect()
}

/// Finite-difference residual `∂_t u + H(x, ∂_x u, t)` between two forward
/// slices, at nodes where both slices have bounded second differences
/// (`|Δ²u| / h² ≤ curvature_bound`); `None` elsewhere.
pub fn hj_residual(spec: &LagrangianSpec, a: &GridField, b: &GridField, curvature_bound: f64) -> Result<Vec<Option<f64>>> {
    if a.values.len() != b.values.len() || !(b.time > a.time) {
        return Err(Error::InvalidInput("slices must share a grid with increasing times".into()));
    }
    let grid = &a.grid;
    let h = grid.spacing();
    let dt = b.time - a.time;
    let tm = 0.5 * (a.time + b.time);
    let mean: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| 0.5 * (x + y)).collect();
    Ok((0..grid.len())
        .map(|node| {
            let smooth = (0..grid.dim()).all(|ax| {
                [&a.values, &b.values].iter().all(|v| {
                    let (up, dn) = (grid.neighbor(node, ax, 1), grid.neighbor(node, ax, -1));
                    ((v[up] - 2.0 * v[node] + v[dn]) / (h * h)).abs() <= curvature_bound
                })
            });
            smooth.then(|| {
                let p = masked_gradient(grid, &mean, |_| true, node);
                (b.values[node] - a.values[node]) / dt + spec.hamiltonian(grid.node(node).coords(), &p, tm)
            })
        })
        .collect())
}

#[cfg(test)]
mod tests;
