//! Transport interpolations built from minimizing extremals.
//!
//! Every cell `(i, j)` of an optimal plan with positive mass contributes a
//! particle following the minimizing extremal from `x_i` to `y_j`, and
//! `μ_t = Σ m_ij δ_{γ_ij(t)}`. The path is then certified: the transport
//! cost is additive along it, the interpolation field transports `μ_s` to
//! `μ_t`, and the continuity equation holds against test functions.

use std::f64::consts::PI;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{cost_matrix, minimize_bvp, ActionOptions, DiscreteCurve};
use crate::dynamics::LagrangianSpec;
use crate::error::{Error, Result};
use crate::hamilton_jacobi::VectorFieldEstimate;
use crate::kantorovich::{self, TransportPlan};
use crate::manifold::{distance, wrap, TorusPoint};
use crate::measure::DiscreteMeasure;
use crate::wasserstein::w1;

/// Atoms of `μ_t` closer than this are merged.
pub const MERGE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub source: usize,
    pub target: usize,
    pub mass: f64,
    pub curve: DiscreteCurve,
}

impl Particle {
    pub fn position_at(&self, t: f64) -> TorusPoint {
        self.curve.position_at(t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationPath {
    pub horizon: f64,
    pub times: Vec<f64>,
    pub particles: Vec<Particle>,
    /// `μ_t` at each sampled time.
    pub measures: Vec<DiscreteMeasure>,
}

impl InterpolationPath {
    /// Index of a sampled time (exact match).
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| s == t)
    }

    /// Unmerged particle measure at time `t`.
    pub fn particle_measure(&self, t: f64) -> Result<DiscreteMeasure> {
        DiscreteMeasure::normalized(
            self.particles.iter().map(|p| p.position_at(t)).collect(),
            self.particles.iter().map(|p| p.mass).collect(),
        )
    }
}

/// Particle interpolation of `plan` over `[0, horizon]` sampled at `times`.
pub fn interpolate(
    plan: &TransportPlan,
    spec: &LagrangianSpec,
    horizon: f64,
    times: &[f64],
    opts: &ActionOptions,
) -> Result<InterpolationPath> {
    if times.iter().any(|&t| !(0.0..=horizon).contains(&t)) || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(format!(
            "sample times must increase within [0, {horizon}]"
        )));
    }
    let particles = plan
        .support()
        .into_par_iter()
        .map(|(i, j, m)| {
            let r = minimize_bvp(
                spec,
                &plan.source.atoms()[i],
                &plan.target.atoms()[j],
                0.0,
                horizon,
                opts,
            )
            .map_err(|e| Error::Pair {
                source_atom: i,
                target_atom: j,
                source: Box::new(e),
            })?;
            Ok(Particle {
                source: i,
                target: j,
                mass: m,
                curve: r.curve,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut path = InterpolationPath {
        horizon,
        times: times.to_vec(),
        particles,
        measures: Vec::with_capacity(times.len()),
    };
    for &t in times {
        let m = path.particle_measure(t)?.merged(MERGE_TOL);
        path.measures.push(m);
    }
    Ok(path)
}

/// Optimal value and solution between two measures over `[s, t]`.
fn kantorovich_value(
    spec: &LagrangianSpec,
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    s: f64,
    t: f64,
    opts: &ActionOptions,
) -> Result<(Array2<f64>, f64)> {
    let c = cost_matrix(spec, a.atoms(), b.atoms(), s, t, opts)?;
    let (_, value) = kantorovich::solve_primal(&c, a, b)?;
    Ok((c, value))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangleReport {
    pub times: [f64; 3],
    pub c13: f64,
    pub c12: f64,
    pub c23: f64,
    /// `|C₁₃ − C₁₂ − C₂₃|`.
    pub defect: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks `C_{t1}^{t3} = C_{t1}^{t2} + C_{t2}^{t3}` on the sampled measures
/// with sample indices `(i1, i2, i3)`. The tolerance is `cost_accuracy`
/// times the largest atom count.
pub fn verify_triangle(
    path: &InterpolationPath,
    spec: &LagrangianSpec,
    (i1, i2, i3): (usize, usize, usize),
    cost_accuracy: f64,
    opts: &ActionOptions,
) -> Result<TriangleReport> {
    if !(i1 < i2 && i2 < i3 && i3 < path.times.len()) {
        return Err(Error::InvalidInput("triangle needs increasing sample indices".into()));
    }
    let (t1, t2, t3) = (path.times[i1], path.times[i2], path.times[i3]);
    let (m1, m2, m3) = (&path.measures[i1], &path.measures[i2], &path.measures[i3]);
    let (_, c13) = kantorovich_value(spec, m1, m3, t1, t3, opts)?;
    let (_, c12) = kantorovich_value(spec, m1, m2, t1, t2, opts)?;
    let (_, c23) = kantorovich_value(spec, m2, m3, t2, t3, opts)?;
    let defect = (c13 - c12 - c23).abs();
    let atoms = m1.len().max(m2.len()).max(m3.len());
    let tolerance = cost_accuracy * atoms as f64;
    Ok(TriangleReport {
        times: [t1, t2, t3],
        c13,
        c12,
        c23,
        defect,
        tolerance,
        passed: defect <= tolerance,
    })
}

/// Cost of the plan matching particles at sample indices `i < j` and the
/// optimal cost between the unmerged particle measures.
pub fn restriction_check(
    path: &InterpolationPath,
    spec: &LagrangianSpec,
    i: usize,
    j: usize,
    opts: &ActionOptions,
) -> Result<(f64, f64)> {
    let (s, t) = (path.times[i], path.times[j]);
    let a = path.particle_measure(s)?;
    let b = path.particle_measure(t)?;
    let (c, optimal) = kantorovich_value(spec, &a, &b, s, t, opts)?;
    let induced = (0..path.particles.len()).map(|k| a.weights()[k] * c[[k, k]]).sum::<f64>();
    Ok((induced, optimal))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub s: f64,
    pub t: f64,
    /// Largest distance between a flowed particle and its stored position.
    pub max_deviation: f64,
    /// W1 between the flowed measure and `μ_t`.
    pub w1: f64,
    /// Field lookups farther than two grid spacings from any masked node.
    pub coverage_warnings: usize,
}

/// Flows each particle from its time-`s` position with the nearest-node
/// field and compares with its time-`t` position and with `μ_t`.
pub fn flow_consistency(
    path: &InterpolationPath,
    field: &VectorFieldEstimate,
    s: f64,
    t: f64,
    steps_per_unit: usize,
    seed: u64,
) -> Result<FlowReport> {
    if field.is_empty() {
        return Err(Error::InvalidInput("interpolation field is empty".into()));
    }
    if !(t > s) {
        return Err(Error::InvalidInput(format!("need s < t, got {s} and {t}")));
    }
    let steps = ((t - s) * steps_per_unit as f64).ceil().max(1.0) as usize;
    let dt = (t - s) / steps as f64;
    let far = 2.0 * field.grid.spacing();
    let results: Vec<(TorusPoint, f64, usize)> = path
        .particles
        .par_iter()
        .map(|p| -> Result<(TorusPoint, f64, usize)> {
            let mut x: Vec<f64> = p.curve.lifted_position_at(s);
            let mut warnings = 0;
            let mut vel = |x: &[f64], tau: f64| -> Result<Vec<f64>> {
                let (v, d) = field
                    .lookup(&wrap(x)?, tau)
                    .ok_or_else(|| Error::InvalidInput("interpolation field is empty".into()))?;
                if d > far {
                    warnings += 1;
                }
                Ok(v)
            };
            for k in 0..steps {
                let tau = s + k as f64 * dt;
                let k1 = vel(&x, tau)?;
                let x2: Vec<f64> = x.iter().zip(&k1).map(|(a, b)| a + 0.5 * dt * b).collect();
                let k2 = vel(&x2, tau + 0.5 * dt)?;
                let x3: Vec<f64> = x.iter().zip(&k2).map(|(a, b)| a + 0.5 * dt * b).collect();
                let k3 = vel(&x3, tau + 0.5 * dt)?;
                let x4: Vec<f64> = x.iter().zip(&k3).map(|(a, b)| a + dt * b).collect();
                let k4 = vel(&x4, tau + dt)?;
                for a in 0..x.len() {
                    x[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
                }
            }
            let end = wrap(&x)?;
            let dev = distance(&end, &p.position_at(t));
            Ok((end, dev, warnings))
        })
        .collect::<Result<_>>()?;
    let max_deviation = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let coverage_warnings = results.iter().map(|r| r.2).sum();
    let pushed = DiscreteMeasure::normalized(
        results.iter().map(|r| r.0.clone()).collect(),
        path.particles.iter().map(|p| p.mass).collect(),
    )?;
    let target = match path.time_index(t) {
        Some(k) => path.measures[k].clone(),
        None => path.particle_measure(t)?,
    };
    Ok(FlowReport {
        s,
        t,
        max_deviation,
        w1: w1(&pushed, &target, seed)?,
        coverage_warnings,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trig {
    Cos,
    Sin,
}

/// `f(x, t) = trig(2π k·x) · t^power`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub wavevector: Vec<i32>,
    pub trig: Trig,
    pub power: u32,
}

impl TestFunction {
    fn phase(&self, x: &[f64]) -> f64 {
        2.0 * PI * self.wavevector.iter().zip(x).map(|(k, x)| *k as f64 * x).sum::<f64>()
    }

    pub fn value(&self, x: &[f64], t: f64) -> f64 {
        let th = self.phase(x);
        let s = match self.trig {
            Trig::Cos => th.cos(),
            Trig::Sin => th.sin(),
        };
        s * t.powi(self.power as i32)
    }

    /// `∂_t f + ∇f · v`.
    pub fn transport_derivative(&self, x: &[f64], t: f64, v: &[f64]) -> f64 {
        let th = self.phase(x);
        let (s, ds) = match self.trig {
            Trig::Cos => (th.cos(), -th.sin()),
            Trig::Sin => (th.sin(), th.cos()),
        };
        let dt = if self.power == 0 {
            0.0
        } else {
            self.power as f64 * t.powi(self.power as i32 - 1)
        };
        let kv: f64 = self.wavevector.iter().zip(v).map(|(k, v)| *k as f64 * v).sum();
        s * dt + ds * 2.0 * PI * kv * t.powi(self.power as i32)
    }

    pub fn label(&self) -> String {
        let trig = match self.trig {
            Trig::Cos => "cos",
            Trig::Sin => "sin",
        };
        format!("{trig}{:?}*t^{}", self.wavevector, self.power)
    }
}

/// Fourier modes with wavevector entries in `-2..=2` (1-D) or `-1..=1`
/// (2-D), one of each `±k` pair, times `1, t, t²`.
pub fn default_test_functions(dim: usize) -> Vec<TestFunction> {
    let range: i32 = if dim == 1 { 2 } else { 1 };
    let mut out = Vec::new();
    for k in crate::manifold::windings(dim, range as u32) {
        // keep the lexicographically positive representative of ±k
        if k.iter().find(|&&c| c != 0).is_some_and(|&c| c < 0) {
            continue;
        }
        let zero = k.iter().all(|&c| c == 0);
        for power in 0..3 {
            out.push(TestFunction {
                wavevector: k.clone(),
                trig: Trig::Cos,
                power,
            });
            if !zero {
                out.push(TestFunction {
                    wavevector: k.clone(),
                    trig: Trig::Sin,
                    power,
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    /// `(label, residual with particle velocities, residual with field)`.
    pub residuals: Vec<(String, f64, Option<f64>)>,
    pub max_residual: f64,
    pub max_field_residual: Option<f64>,
}

const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_08),
    (0.906_179_845_938_664, 0.236_926_885_056_189_08),
];

/// `Σ m ∫ (∂_t f + ∇f·v) dt − (∫f_T dμ_T − ∫f_0 dμ_0)` per test function,
/// with `v = γ̇` along the particle curves (5-point Gauss per knot segment)
/// and, when a field is supplied, with `v` from the field as well.
pub fn continuity_residual(
    path: &InterpolationPath,
    field: Option<&VectorFieldEstimate>,
    tests: &[TestFunction],
) -> ContinuityReport {
    let horizon = path.horizon;
    let residuals: Vec<(String, f64, Option<f64>)> = tests
        .par_iter()
        .map(|f| {
            let mut lagrangian = 0.0;
            let mut eulerian = 0.0;
            let mut boundary = 0.0;
            for p in &path.particles {
                let c = &p.curve;
                let h = c.step();
                for k in 0..c.segments() {
                    let (a, b) = (c.knot(k), c.knot(k + 1));
                    let v = c.segment_velocity(k);
                    let t0 = c.start() + k as f64 * h;
                    for &(node, w) in &GAUSS5 {
                        let u = 0.5 * (node + 1.0);
                        let x: Vec<f64> = a.iter().zip(b).map(|(a, b)| a + u * (b - a)).collect();
                        let t = t0 + u * h;
                        lagrangian += p.mass * 0.5 * h * w * f.transport_derivative(&x, t, &v);
                        if let Some(fld) = field {
                            let xv = wrap(&x)
                                .ok()
                                .and_then(|q| fld.lookup(&q, t))
                                .map(|r| r.0)
                                .unwrap_or_else(|| vec![0.0; x.len()]);
                            eulerian += p.mass * 0.5 * h * w * f.transport_derivative(&x, t, &xv);
                        }
                    }
                }
                boundary += p.mass
                    * (f.value(c.knot(c.segments()), horizon) - f.value(c.knot(0), 0.0));
            }
            (
                f.label(),
                (lagrangian - boundary).abs(),
                field.map(|_| (eulerian - boundary).abs()),
            )
        })
        .collect();
    let max_residual = residuals.iter().map(|r| r.1).fold(0.0, f64::max);
    let max_field_residual = field.map(|_| residuals.iter().filter_map(|r| r.2).fold(0.0, f64::max));
    ContinuityReport {
        residuals,
        max_residual,
        max_field_residual,
    }
}
