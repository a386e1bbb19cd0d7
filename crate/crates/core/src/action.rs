//! Action minimization between two points of the torus.
//!
//! The action of a curve is discretized with the midpoint rule on a uniform
//! time grid. For each winding class the discrete action is minimized from the
//! path of a coarse space-time dynamic program (and from the straight-line
//! lift when that starts lower) by preconditioned gradient descent (the preconditioner is
//! the kinetic part of the Hessian, i.e. an `H¹` gradient) with Armijo
//! backtracking, then polished by damped Newton steps on the discrete
//! Euler-Lagrange system. The cost `c_s^t(x, y)` is the smallest converged
//! value over the configured winding classes.
//!
//! The number of knots scales with the length of the time interval, so a
//! curve on `[s, t]` and one on `[t, u]` concatenate into an admissible discrete
//! curve on `[s, u]` whenever `t` lies on the shared knot lattice.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::LagrangianSpec;
use crate::error::{Error, Result};
use crate::linalg::{BandCholesky, SymBand};
use crate::manifold::{displacement, windings, wrap_coord, TangentVec, TorusPoint, MAX_DIM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionOptions {
    /// Knots per unit time; an interval of length `τ` gets `round(τ · knots_per_unit)` segments.
    pub knots_per_unit: usize,
    /// Convergence threshold on the sup norm of the action gradient at interior knots.
    pub grad_tol: f64,
    pub max_descent_iters: usize,
    /// Gradient norm below which descent hands over to Newton polishing.
    pub newton_switch: f64,
    pub max_newton_iters: usize,
    /// Windings searched per axis: `-winding_range..=winding_range`.
    pub winding_range: u32,
    /// Also descend from the path of a coarse space-time dynamic program,
    /// which finds dwelling minimizers a straight start misses.
    pub global_seed: bool,
}

impl Default for ActionOptions {
    fn default() -> Self {
        ActionOptions {
            knots_per_unit: 64,
            grad_tol: 1e-9,
            max_descent_iters: 500,
            newton_switch: 1e-2,
            max_newton_iters: 60,
            winding_range: 2,
            global_seed: true,
        }
    }
}

impl ActionOptions {
    pub fn segments_for(&self, s: f64, t: f64) -> usize {
        ((t - s) * self.knots_per_unit as f64).round().max(1.0) as usize
    }
}

/// A curve sampled at `segments + 1` uniform knots on `[start, end]`, stored
/// as lifted positions in the universal cover.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCurve {
    start: f64,
    end: f64,
    dim: usize,
    winding: Vec<i32>,
    points: Vec<f64>,
}

impl DiscreteCurve {
    /// Straight segment from the lift `x` to `y + winding`.
    pub fn straight(
        x: &TorusPoint,
        y: &TorusPoint,
        winding: &[i32],
        start: f64,
        end: f64,
        segments: usize,
    ) -> Self {
        let d = x.dim();
        let disp = displacement(x, y, winding);
        let mut points = Vec::with_capacity((segments + 1) * d);
        for k in 0..=segments {
            let f = k as f64 / segments as f64;
            for a in 0..d {
                points.push(x.coords()[a] + f * disp.0[a]);
            }
        }
        // pin the last knot to the exact lift so endpoints are bitwise stable
        for a in 0..d {
            points[segments * d + a] = y.coords()[a] + winding[a] as f64;
        }
        DiscreteCurve {
            start,
            end,
            dim: d,
            winding: winding.to_vec(),
            points,
        }
    }

    /// Build from explicit lifted knots (`(segments + 1) · dim` values).
    pub fn from_points(start: f64, end: f64, dim: usize, winding: Vec<i32>, points: Vec<f64>) -> Result<Self> {
        if points.len() % dim != 0 || points.len() < 2 * dim || !(end > start) {
            return Err(Error::InvalidInput("malformed discrete curve".into()));
        }
        Ok(DiscreteCurve {
            start,
            end,
            dim,
            winding,
            points,
        })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn winding(&self) -> &[i32] {
        &self.winding
    }

    pub fn segments(&self) -> usize {
        self.points.len() / self.dim - 1
    }

    pub fn step(&self) -> f64 {
        (self.end - self.start) / self.segments() as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let n = self.segments();
        (0..=n)
            .map(|k| self.start + (self.end - self.start) * k as f64 / n as f64)
            .collect()
    }

    /// Lifted position of knot `k`.
    pub fn knot(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn lifted_points(&self) -> &[f64] {
        &self.points
    }

    /// Lifted position at time `t` by linear interpolation between knots.
    pub fn lifted_position_at(&self, t: f64) -> Vec<f64> {
        let n = self.segments();
        let u = ((t - self.start) / (self.end - self.start) * n as f64).clamp(0.0, n as f64);
        let k = (u.floor() as usize).min(n - 1);
        let f = u - k as f64;
        if f == 0.0 {
            return self.knot(k).to_vec();
        }
        if f == 1.0 {
            return self.knot(k + 1).to_vec();
        }
        let (a, b) = (self.knot(k), self.knot(k + 1));
        a.iter().zip(b).map(|(p, q)| p + f * (q - p)).collect()
    }

    pub fn position_at(&self, t: f64) -> TorusPoint {
        LagrangianSpec::wrap_lifted(&self.lifted_position_at(t))
    }

    /// Discrete momentum at knot `k`. At the endpoints this is the one-sided
    /// discrete Legendre transform; at interior knots the two one-sided
    /// momenta are averaged (they agree on a discrete extremal).
    pub fn momentum_at_knot(&self, spec: &LagrangianSpec, k: usize) -> Vec<f64> {
        let n = self.segments();
        let h = self.step();
        let d = self.dim;
        let left = |k: usize| -> Vec<f64> {
            // D₂L_d(x_{k-1}, x_k) = A (x_k - x_{k-1})/h - (h/2) ∇V(m)
            let seg = segment_parts(spec, self.knot(k - 1), self.knot(k), self.start + (k as f64 - 0.5) * h, h);
            (0..d).map(|a| seg.av[a] - 0.5 * h * seg.grad[a]).collect()
        };
        let right = |k: usize| -> Vec<f64> {
            // -D₁L_d(x_k, x_{k+1}) = A (x_{k+1} - x_k)/h + (h/2) ∇V(m)
            let seg = segment_parts(spec, self.knot(k), self.knot(k + 1), self.start + (k as f64 + 0.5) * h, h);
            (0..d).map(|a| seg.av[a] + 0.5 * h * seg.grad[a]).collect()
        };
        if k == 0 {
            right(0)
        } else if k == n {
            left(n)
        } else {
            let (l, r) = (left(k), right(k));
            l.iter().zip(&r).map(|(a, b)| 0.5 * (a + b)).collect()
        }
    }

    pub fn velocity_at_knot(&self, spec: &LagrangianSpec, k: usize) -> TangentVec {
        let p = self.momentum_at_knot(spec, k);
        let mut v = vec![0.0; self.dim];
        LagrangianSpec::apply(spec.kinetic_inv(), &p, &mut v);
        TangentVec(v)
    }

    /// Velocity at time `t`, linearly interpolated between knot velocities.
    pub fn velocity_at(&self, spec: &LagrangianSpec, t: f64) -> TangentVec {
        let n = self.segments();
        let u = ((t - self.start) / (self.end - self.start) * n as f64).clamp(0.0, n as f64);
        let k = (u.floor() as usize).min(n - 1);
        let f = u - k as f64;
        if f == 0.0 {
            return self.velocity_at_knot(spec, k);
        }
        if f == 1.0 {
            return self.velocity_at_knot(spec, k + 1);
        }
        let a = self.velocity_at_knot(spec, k);
        let b = self.velocity_at_knot(spec, k + 1);
        TangentVec(a.0.iter().zip(&b.0).map(|(p, q)| p + f * (q - p)).collect())
    }

    pub fn initial_velocity(&self, spec: &LagrangianSpec) -> TangentVec {
        self.velocity_at_knot(spec, 0)
    }

    pub fn final_velocity(&self, spec: &LagrangianSpec) -> TangentVec {
        self.velocity_at_knot(spec, self.segments())
    }

    /// Velocity of the piecewise-linear interpolant on segment `k`.
    pub fn segment_velocity(&self, k: usize) -> Vec<f64> {
        let h = self.step();
        self.knot(k + 1)
            .iter()
            .zip(self.knot(k))
            .map(|(b, a)| (b - a) / h)
            .collect()
    }
}

struct SegmentParts {
    av: [f64; MAX_DIM],
    grad: [f64; MAX_DIM],
}

#[inline]
fn segment_parts(spec: &LagrangianSpec, a: &[f64], b: &[f64], tm: f64, h: f64) -> SegmentParts {
    let d = a.len();
    let mut v = [0.0; MAX_DIM];
    let mut m = [0.0; MAX_DIM];
    for i in 0..d {
        v[i] = (b[i] - a[i]) / h;
        m[i] = 0.5 * (a[i] + b[i]);
    }
    let mut av = [0.0; MAX_DIM];
    LagrangianSpec::apply(spec.kinetic(), &v[..d], &mut av[..d]);
    let mut grad = [0.0; MAX_DIM];
    spec.potential_gradient(&m[..d], tm, &mut grad[..d]);
    SegmentParts { av, grad }
}

/// Midpoint-rule action `Σ h · L((x_k + x_{k+1})/2, (x_{k+1} − x_k)/h, t_k + h/2)`.
pub fn discrete_action(spec: &LagrangianSpec, curve: &DiscreteCurve) -> f64 {
    action_of_points(spec, &curve.points, curve.dim, curve.start, curve.step())
}

fn action_of_points(spec: &LagrangianSpec, pts: &[f64], d: usize, start: f64, h: f64) -> f64 {
    let n = pts.len() / d - 1;
    let mut total = 0.0;
    let mut v = [0.0; MAX_DIM];
    let mut m = [0.0; MAX_DIM];
    for k in 0..n {
        let (a, b) = (&pts[k * d..(k + 1) * d], &pts[(k + 1) * d..(k + 2) * d]);
        for i in 0..d {
            v[i] = (b[i] - a[i]) / h;
            m[i] = 0.5 * (a[i] + b[i]);
        }
        total += h * spec.lagrangian(&m[..d], &v[..d], start + (k as f64 + 0.5) * h);
    }
    total
}

/// Gradient of the discrete action with respect to the interior knots,
/// laid out knot-major (`(k - 1) · d + a` for knot `k`, axis `a`).
pub fn action_gradient(spec: &LagrangianSpec, curve: &DiscreteCurve) -> Vec<f64> {
    gradient_of_points(spec, &curve.points, curve.dim, curve.start, curve.step())
}

fn gradient_of_points(spec: &LagrangianSpec, pts: &[f64], d: usize, start: f64, h: f64) -> Vec<f64> {
    let n = pts.len() / d - 1;
    let mut g = vec![0.0; (n - 1) * d];
    for k in 0..n {
        let seg = segment_parts(spec, &pts[k * d..(k + 1) * d], &pts[(k + 1) * d..(k + 2) * d], start + (k as f64 + 0.5) * h, h);
        // D₁L_d = -A v - (h/2)∇V ; D₂L_d = A v - (h/2)∇V
        if k >= 1 {
            for a in 0..d {
                g[(k - 1) * d + a] += -seg.av[a] - 0.5 * h * seg.grad[a];
            }
        }
        if k + 1 <= n - 1 {
            for a in 0..d {
                g[k * d + a] += seg.av[a] - 0.5 * h * seg.grad[a];
            }
        }
    }
    g
}

fn hessian_of_points(spec: &LagrangianSpec, pts: &[f64], d: usize, start: f64, h: f64) -> SymBand {
    let n = pts.len() / d - 1;
    let mut hess = SymBand::zeros((n - 1) * d, 2 * d - 1);
    let a_mat = spec.kinetic();
    let mut hv = [0.0; MAX_DIM * MAX_DIM];
    let mut m = [0.0; MAX_DIM];
    for k in 0..n {
        for i in 0..d {
            m[i] = 0.5 * (pts[k * d + i] + pts[(k + 1) * d + i]);
        }
        spec.potential_hessian(&m[..d], start + (k as f64 + 0.5) * h, &mut hv[..d * d]);
        for a in 0..d {
            for b in 0..d {
                let kin = a_mat[a * d + b] / h;
                let pot = -0.25 * h * hv[a * d + b];
                // diagonal blocks for knots k and k + 1, off-diagonal block between them
                if k >= 1 && b <= a {
                    hess.add((k - 1) * d + a, (k - 1) * d + b, kin + pot);
                }
                if k + 1 <= n - 1 && b <= a {
                    hess.add(k * d + a, k * d + b, kin + pot);
                }
                if k >= 1 && k + 1 <= n - 1 {
                    hess.add(k * d + a, (k - 1) * d + b, -kin + pot);
                }
            }
        }
    }
    hess
}

fn kinetic_band(spec: &LagrangianSpec, n: usize, d: usize, h: f64) -> SymBand {
    let mut k_band = SymBand::zeros((n - 1) * d, 2 * d - 1);
    let a_mat = spec.kinetic();
    for k in 1..n {
        for a in 0..d {
            for b in 0..=a {
                k_band.add((k - 1) * d + a, (k - 1) * d + b, 2.0 * a_mat[a * d + b] / h);
            }
            if k + 1 <= n - 1 {
                for b in 0..d {
                    k_band.add(k * d + a, (k - 1) * d + b, -a_mat[a * d + b] / h);
                }
            }
        }
    }
    k_band
}

/// Sup norm of the discrete Euler-Lagrange residual at interior knots.
pub fn euler_lagrange_residual(spec: &LagrangianSpec, curve: &DiscreteCurve) -> f64 {
    sup_norm(&action_gradient(spec, curve))
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Outcome of a boundary value solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostResult {
    pub value: f64,
    pub curve: DiscreteCurve,
    pub converged: bool,
    pub grad_norm: f64,
}

struct Descent<'a> {
    spec: &'a LagrangianSpec,
    d: usize,
    start: f64,
    h: f64,
    pts: Vec<f64>,
}

impl Descent<'_> {
    fn value_of(&self, pts: &[f64]) -> f64 {
        action_of_points(self.spec, pts, self.d, self.start, self.h)
    }

    fn gradient(&self) -> Vec<f64> {
        gradient_of_points(self.spec, &self.pts, self.d, self.start, self.h)
    }

    fn trial(&self, dir: &[f64], alpha: f64) -> Vec<f64> {
        let mut p = self.pts.clone();
        let d = self.d;
        for (i, dv) in dir.iter().enumerate() {
            p[d + i] += alpha * dv;
        }
        p
    }

    /// Armijo backtracking along `dir`; returns whether a step was taken.
    fn line_search(&mut self, value: &mut f64, grad: &[f64], dir: &[f64]) -> bool {
        let slope: f64 = grad.iter().zip(dir).map(|(g, d)| g * d).sum();
        if !(slope < 0.0) {
            return false;
        }
        let mut alpha = 1.0;
        let slack = 1e-14 * value.abs().max(1.0);
        while alpha > 1e-12 {
            let cand = self.trial(dir, alpha);
            let v = self.value_of(&cand);
            if v.is_finite() && v <= *value + 1e-4 * alpha * slope + slack {
                self.pts = cand;
                *value = v;
                return true;
            }
            alpha *= 0.5;
        }
        false
    }
}

fn minimize_from(
    spec: &LagrangianSpec,
    init: DiscreteCurve,
    opts: &ActionOptions,
) -> CostResult {
    let d = init.dim;
    let n = init.segments();
    let h = init.step();
    let mut run = Descent {
        spec,
        d,
        start: init.start,
        h,
        pts: init.points.clone(),
    };
    let mut value = run.value_of(&run.pts);
    if n < 2 {
        return CostResult {
            value,
            curve: init,
            converged: true,
            grad_norm: 0.0,
        };
    }
    let kin = kinetic_band(spec, n, d, h);
    let kin_chol: BandCholesky = kin.cholesky().expect("kinetic block matrix is positive definite");

    let mut grad = run.gradient();
    let mut gnorm = sup_norm(&grad);

    let switch = opts.newton_switch.max(opts.grad_tol);
    let mut iters = 0;
    while gnorm > switch && iters < opts.max_descent_iters {
        let dir: Vec<f64> = kin_chol.solve(&grad).into_iter().map(|x| -x).collect();
        if !run.line_search(&mut value, &grad, &dir) {
            break;
        }
        grad = run.gradient();
        gnorm = sup_norm(&grad);
        iters += 1;
    }

    let mut newton = 0;
    while gnorm > opts.grad_tol && newton < opts.max_newton_iters {
        newton += 1;
        let hess = hessian_of_points(spec, &run.pts, d, run.start, h);
        let mut factor = hess.cholesky();
        let mut shift = 1e-3;
        while factor.is_none() && shift < 1e8 {
            factor = hess.shifted(&kin, shift).cholesky();
            shift *= 10.0;
        }
        let stepped = match factor {
            Some(f) => {
                let dir: Vec<f64> = f.solve(&grad).into_iter().map(|x| -x).collect();
                let full = run.trial(&dir, 1.0);
                let full_grad = gradient_of_points(spec, &full, d, run.start, h);
                let full_value = run.value_of(&full);
                // near the optimum the action changes below rounding; accept a
                // full step that shrinks the residual without raising the value
                if full_value.is_finite()
                    && full_value <= value + 1e-13 * value.abs().max(1.0)
                    && sup_norm(&full_grad) < gnorm
                {
                    run.pts = full;
                    value = full_value;
                    true
                } else {
                    run.line_search(&mut value, &grad, &dir)
                }
            }
            None => false,
        };
        if !stepped {
            let dir: Vec<f64> = kin_chol.solve(&grad).into_iter().map(|x| -x).collect();
            if !run.line_search(&mut value, &grad, &dir) {
                break;
            }
        }
        grad = run.gradient();
        gnorm = sup_norm(&grad);
    }

    let mut curve = init;
    curve.points = run.pts;
    CostResult {
        value,
        curve,
        converged: gnorm <= opts.grad_tol,
        grad_norm: gnorm,
    }
}

const SEED_STEPS_PER_UNIT: f64 = 8.0;
const SEED_MARGIN: f64 = 0.5;
const SEED_SPACING: f64 = 1.0 / 32.0;

/// Optimal path of a coarse space-time dynamic program over a lifted box
/// around the class's straight segment, resampled on the knot lattice.
/// `None` when the interval is too short for interior layers.
fn coarse_seed(
    spec: &LagrangianSpec,
    x: &TorusPoint,
    y: &TorusPoint,
    winding: &[i32],
    s: f64,
    t: f64,
    segments: usize,
) -> Option<DiscreteCurve> {
    let d = x.dim();
    let dt = t - s;
    let steps = ((dt * SEED_STEPS_PER_UNIT).ceil() as usize).min(segments);
    if steps < 2 {
        return None;
    }
    let tau = dt / steps as f64;
    let a = x.coords().to_vec();
    let b: Vec<f64> = (0..d).map(|k| y.coords()[k] + winding[k] as f64).collect();
    let max_nodes = if d == 1 { 256 } else { 16 };
    let (mut lo, mut delta, mut m) = (vec![0.0; d], vec![0.0; d], vec![0usize; d]);
    for k in 0..d {
        let (l, h) = (a[k].min(b[k]) - SEED_MARGIN, a[k].max(b[k]) + SEED_MARGIN);
        let cells = (((h - l) / SEED_SPACING).ceil() as usize).clamp(1, max_nodes - 1);
        lo[k] = l;
        delta[k] = (h - l) / cells as f64;
        m[k] = cells + 1;
    }
    let total: usize = m.iter().product();
    // multi-indices, axis 0 slowest
    let multi: Vec<Vec<usize>> = (0..total)
        .map(|idx| {
            let mut r = idx;
            let mut mi = vec![0; d];
            for k in (0..d).rev() {
                mi[k] = r % m[k];
                r /= m[k];
            }
            mi
        })
        .collect();
    let position = |mi: &[usize]| -> Vec<f64> { (0..d).map(|k| lo[k] + mi[k] as f64 * delta[k]).collect() };
    // strides over index sums/differences in 0..2m-1
    let wide: Vec<usize> = m.iter().map(|&mk| 2 * mk - 1).collect();
    let wide_total: usize = wide.iter().product();
    let wide_index = |vals: &[usize]| vals.iter().zip(&wide).fold(0, |acc, (v, w)| acc * w + v);
    let mut kinetic = vec![0.0; wide_total];
    let mut buf = vec![0usize; d];
    for (idx, kin) in kinetic.iter_mut().enumerate() {
        let mut r = idx;
        for k in (0..d).rev() {
            buf[k] = r % wide[k];
            r /= wide[k];
        }
        let disp: Vec<f64> = (0..d).map(|k| (buf[k] as f64 - (m[k] - 1) as f64) * delta[k]).collect();
        *kin = spec.kinetic_energy(&disp) / tau;
    }
    let edge = |p: &[f64], q: &[f64], tm: f64| {
        let disp: Vec<f64> = p.iter().zip(q).map(|(p, q)| q - p).collect();
        let mid: Vec<f64> = p.iter().zip(q).map(|(p, q)| 0.5 * (p + q)).collect();
        spec.kinetic_energy(&disp) / tau - tau * spec.potential_value(&mid, tm)
    };
    let positions: Vec<Vec<f64>> = multi.iter().map(|mi| position(mi)).collect();
    let mut value: Vec<f64> = positions.iter().map(|p| edge(&a, p, s + 0.5 * tau)).collect();
    let mut parents: Vec<Vec<u32>> = Vec::with_capacity(steps - 2);
    let mut mid_v = vec![0.0; wide_total];
    let mut sum = vec![0usize; d];
    let mut diff = vec![0usize; d];
    for layer in 1..steps - 1 {
        let tm = s + (layer as f64 + 0.5) * tau;
        for (idx, v) in mid_v.iter_mut().enumerate() {
            let mut r = idx;
            let mut mid = vec![0.0; d];
            for k in (0..d).rev() {
                mid[k] = lo[k] + 0.5 * (r % wide[k]) as f64 * delta[k];
                r /= wide[k];
            }
            *v = tau * spec.potential_value(&mid, tm);
        }
        let mut next = vec![f64::INFINITY; total];
        let mut parent = vec![0u32; total];
        for j in 0..total {
            for i in 0..total {
                for k in 0..d {
                    sum[k] = multi[i][k] + multi[j][k];
                    diff[k] = multi[j][k] + m[k] - 1 - multi[i][k];
                }
                let c = value[i] + kinetic[wide_index(&diff)] - mid_v[wide_index(&sum)];
                if c < next[j] {
                    next[j] = c;
                    parent[j] = i as u32;
                }
            }
        }
        value = next;
        parents.push(parent);
    }
    let last_t = s + (steps as f64 - 0.5) * tau;
    let (mut node, _) = positions
        .iter()
        .enumerate()
        .map(|(i, p)| (i, value[i] + edge(p, &b, last_t)))
        .fold((0, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
    let mut coarse = vec![b.clone(); steps + 1];
    coarse[0] = a.clone();
    for layer in (1..steps).rev() {
        coarse[layer] = positions[node].clone();
        if layer >= 2 {
            node = parents[layer - 2][node] as usize;
        }
    }
    let mut points = Vec::with_capacity((segments + 1) * d);
    for j in 0..=segments {
        let f = j as f64 * steps as f64 / segments as f64;
        let l = (f.floor() as usize).min(steps - 1);
        let w = f - l as f64;
        for k in 0..d {
            points.push(coarse[l][k] + w * (coarse[l + 1][k] - coarse[l][k]));
        }
    }
    for k in 0..d {
        points[segments * d + k] = b[k];
    }
    DiscreteCurve::from_points(s, t, d, winding.to_vec(), points).ok()
}

/// Minimize the action over curves from `x` at time `s` to `y` at time `t`
/// in one winding class.
pub fn minimize_in_class(
    spec: &LagrangianSpec,
    x: &TorusPoint,
    y: &TorusPoint,
    winding: &[i32],
    s: f64,
    t: f64,
    opts: &ActionOptions,
) -> CostResult {
    let segments = opts.segments_for(s, t);
    let straight = DiscreteCurve::straight(x, y, winding, s, t, segments);
    let seed = if opts.global_seed && spec.potential().sup_bound() > 0.0 {
        coarse_seed(spec, x, y, winding, s, t, segments)
    } else {
        None
    };
    let Some(seed) = seed else {
        return minimize_from(spec, straight, opts);
    };
    // descent never increases the action, so a start already above the
    // incumbent is skipped
    let mut best = minimize_from(spec, seed, opts);
    if discrete_action(spec, &straight) < best.value || !best.converged {
        let r = minimize_from(spec, straight, opts);
        if r.converged && (!best.converged || r.value < best.value - TIE_TOL) {
            best = r;
        }
    }
    best
}

/// Jensen lower bound on the action in a winding class.
fn class_lower_bound(spec: &LagrangianSpec, x: &TorusPoint, y: &TorusPoint, w: &[i32], dt: f64) -> f64 {
    let disp = displacement(x, y, w);
    spec.kinetic_energy(&disp.0) / dt - dt * spec.potential().sup_bound()
}

const TIE_TOL: f64 = 1e-12;

/// Approximate `c_s^t(x, y)` from above. Winding classes are scanned in
/// lexicographic order; a later class replaces the incumbent only when it is
/// lower by more than `1e-12`, so ties go to the lexicographically smallest
/// winding.
pub fn minimize_bvp(
    spec: &LagrangianSpec,
    x: &TorusPoint,
    y: &TorusPoint,
    s: f64,
    t: f64,
    opts: &ActionOptions,
) -> Result<CostResult> {
    if !(t > s) {
        return Err(Error::InvalidInput(format!("need s < t, got s = {s}, t = {t}")));
    }
    if x.dim() != spec.dim() || y.dim() != spec.dim() {
        return Err(Error::InvalidInput("point dimension does not match the Lagrangian".into()));
    }
    let dt = t - s;
    let mut classes: Vec<(f64, Vec<i32>)> = windings(spec.dim(), opts.winding_range)
        .into_iter()
        .map(|w| (class_lower_bound(spec, x, y, &w, dt), w))
        .collect();
    // solve promising classes first, then restore lexicographic tie-breaking below
    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.sort_by(|&a, &b| classes[a].0.total_cmp(&classes[b].0).then(a.cmp(&b)));

    let mut results: Vec<Option<CostResult>> = vec![None; classes.len()];
    let mut best_converged = f64::INFINITY;
    for &i in &order {
        if classes[i].0 > best_converged + TIE_TOL {
            continue;
        }
        let r = minimize_in_class(spec, x, y, &classes[i].1, s, t, opts);
        if r.converged {
            best_converged = best_converged.min(r.value);
        }
        results[i] = Some(r);
    }
    let mut best: Option<&CostResult> = None;
    for r in results.iter().flatten().filter(|r| r.converged) {
        if best.map_or(true, |b| r.value < b.value - TIE_TOL) {
            best = Some(r);
        }
    }
    classes.clear();
    match best {
        Some(b) => Ok(b.clone()),
        None => {
            let attempt = results
                .into_iter()
                .flatten()
                .min_by(|a, b| a.grad_norm.total_cmp(&b.grad_norm));
            Err(Error::Convergence {
                value: attempt.as_ref().map_or(f64::NAN, |a| a.value),
                grad_norm: attempt.as_ref().map_or(f64::NAN, |a| a.grad_norm),
                best: attempt.map(Box::new),
            })
        }
    }
}

/// `c_s^t(source_i, target_j)` for every pair, rows in parallel.
pub fn cost_matrix(
    spec: &LagrangianSpec,
    sources: &[TorusPoint],
    targets: &[TorusPoint],
    s: f64,
    t: f64,
    opts: &ActionOptions,
) -> Result<Array2<f64>> {
    if sources.is_empty() || targets.is_empty() {
        return Err(Error::InvalidInput("cost matrix needs nonempty point lists".into()));
    }
    if !(t > s) {
        return Err(Error::InvalidInput(format!("need s < t, got s = {s}, t = {t}")));
    }
    let rows: Vec<Vec<f64>> = sources
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            targets
                .iter()
                .enumerate()
                .map(|(j, y)| {
                    minimize_bvp(spec, x, y, s, t, opts)
                        .map(|r| r.value)
                        .map_err(|e| Error::CostEntry {
                            row: i,
                            col: j,
                            source: Box::new(e),
                        })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let n = targets.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((sources.len(), n), flat).expect("row lengths match"))
}

/// Wrap every knot of a curve onto the torus (for export).
pub fn wrapped_knots(curve: &DiscreteCurve) -> Vec<Vec<f64>> {
    curve
        .lifted_points()
        .chunks(curve.dim())
        .map(|c| c.iter().map(|&v| wrap_coord(v)).collect())
        .collect()
}
