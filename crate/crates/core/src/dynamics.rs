//! Mechanical Lagrangians `L(x, v, t) = ½ vᵀA v − V(x, t)` on the torus, their
//! Legendre-dual Hamiltonians `H(x, p, t) = ½ pᵀA⁻¹p + V(x, t)`, and the
//! Hamiltonian flow integrated with fixed-step classical Runge-Kutta.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{wrap, wrap_coord, Covec, TangentVec, TorusPoint, MAX_DIM};

const TWO_PI: f64 = 2.0 * PI;

/// Default number of integrator steps per unit of time.
pub const DEFAULT_STEPS_PER_UNIT: usize = 1000;

/// One term `amplitude · cos(2π (k·x − frequency·t))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineMode {
    pub amplitude: f64,
    pub wavevector: Vec<i32>,
    pub frequency: f64,
}

impl CosineMode {
    #[inline]
    fn phase(&self, x: &[f64], t: f64) -> f64 {
        let kx: f64 = self
            .wavevector
            .iter()
            .zip(x)
            .map(|(&k, &xi)| k as f64 * xi)
            .sum();
        TWO_PI * (kx - self.frequency * t)
    }
}

/// The built-in potentials. Each is a finite sum of cosine modes, so values,
/// gradients and Hessians are available in closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Potential {
    Zero,
    /// `a · cos(2π k·x)`.
    Cosine { amplitude: f64, wavevector: Vec<i32> },
    /// `a₁ cos(2π k₁·x) + a₂ cos(2π k₂·x)`.
    TwoMode {
        amplitude: f64,
        wavevector: Vec<i32>,
        amplitude2: f64,
        wavevector2: Vec<i32>,
    },
    /// `a · cos(2π (k·x − c t))`.
    Traveling {
        amplitude: f64,
        wavevector: Vec<i32>,
        speed: f64,
    },
}

impl Potential {
    /// `cos(2π x)` on the circle.
    pub fn pendulum() -> Self {
        Potential::Cosine {
            amplitude: 1.0,
            wavevector: vec![1],
        }
    }

    pub fn modes(&self) -> Vec<CosineMode> {
        match self {
            Potential::Zero => vec![],
            Potential::Cosine {
                amplitude,
                wavevector,
            } => vec![CosineMode {
                amplitude: *amplitude,
                wavevector: wavevector.clone(),
                frequency: 0.0,
            }],
            Potential::TwoMode {
                amplitude,
                wavevector,
                amplitude2,
                wavevector2,
            } => vec![
                CosineMode {
                    amplitude: *amplitude,
                    wavevector: wavevector.clone(),
                    frequency: 0.0,
                },
                CosineMode {
                    amplitude: *amplitude2,
                    wavevector: wavevector2.clone(),
                    frequency: 0.0,
                },
            ],
            Potential::Traveling {
                amplitude,
                wavevector,
                speed,
            } => vec![CosineMode {
                amplitude: *amplitude,
                wavevector: wavevector.clone(),
                frequency: *speed,
            }],
        }
    }

    /// True when `V` does not depend on time.
    pub fn is_autonomous(&self) -> bool {
        !matches!(self, Potential::Traveling { speed, .. } if *speed != 0.0)
    }

    /// Upper bound on `|V|`.
    pub fn sup_bound(&self) -> f64 {
        self.modes().iter().map(|m| m.amplitude.abs()).sum()
    }
}

/// Potential compiled into modes for fast repeated evaluation.
#[derive(Clone, Debug)]
struct CompiledPotential {
    modes: Vec<CosineMode>,
}

impl CompiledPotential {
    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| m.amplitude * m.phase(x, t).cos())
            .sum()
    }

    fn gradient(&self, x: &[f64], t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for m in &self.modes {
            let s = -m.amplitude * TWO_PI * m.phase(x, t).sin();
            for (o, &k) in out.iter_mut().zip(&m.wavevector) {
                *o += s * k as f64;
            }
        }
    }

    /// Row-major `d × d` Hessian.
    fn hessian(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let d = x.len();
        out.iter_mut().for_each(|o| *o = 0.0);
        for m in &self.modes {
            let c = -m.amplitude * TWO_PI * TWO_PI * m.phase(x, t).cos();
            for a in 0..d {
                for b in 0..d {
                    out[a * d + b] += c * (m.wavevector[a] * m.wavevector[b]) as f64;
                }
            }
        }
    }
}

/// Serializable description of a mechanical Lagrangian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangianConfig {
    /// Row-major entries of the kinetic matrix `A`.
    pub kinetic: Vec<f64>,
    pub potential: Potential,
    pub time_period: Option<f64>,
}

/// `L(x, v, t) = ½ vᵀA v − V(x, t)` with `A` symmetric positive definite.
#[derive(Clone, Debug)]
pub struct LagrangianSpec {
    config: LagrangianConfig,
    dim: usize,
    kinetic: Vec<f64>,
    kinetic_inv: Vec<f64>,
    potential: CompiledPotential,
}

/// A point of the Lagrangian phase space `TM × [0, T]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: TorusPoint,
    pub v: TangentVec,
    pub t: f64,
}

impl LagrangianSpec {
    pub fn new(config: LagrangianConfig) -> Result<Self> {
        let n = config.kinetic.len();
        let dim = match n {
            1 => 1,
            4 => 2,
            _ => {
                return Err(Error::InvalidInput(format!(
                    "kinetic matrix must have 1 or 4 entries, got {n}"
                )))
            }
        };
        debug_assert!(dim <= MAX_DIM);
        let a = &config.kinetic;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("kinetic matrix is not finite".into()));
        }
        let kinetic_inv = if dim == 1 {
            if a[0] <= 0.0 {
                return Err(Error::InvalidInput(
                    "kinetic matrix is not positive definite".into(),
                ));
            }
            vec![1.0 / a[0]]
        } else {
            if (a[1] - a[2]).abs() > 1e-12 * (a[1].abs() + a[2].abs()).max(1.0) {
                return Err(Error::InvalidInput("kinetic matrix is not symmetric".into()));
            }
            // Cholesky: l11 = √a00, l21 = a10 / l11, l22² = a11 − l21²
            if a[0] <= 0.0 {
                return Err(Error::InvalidInput(
                    "kinetic matrix is not positive definite".into(),
                ));
            }
            let l21 = a[2] / a[0].sqrt();
            if a[3] - l21 * l21 <= 0.0 {
                return Err(Error::InvalidInput(
                    "kinetic matrix is not positive definite".into(),
                ));
            }
            let det = a[0] * a[3] - a[1] * a[2];
            vec![a[3] / det, -a[1] / det, -a[2] / det, a[0] / det]
        };
        let modes = config.potential.modes();
        for m in &modes {
            if m.wavevector.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "potential wavevector {:?} does not match dimension {dim}",
                    m.wavevector
                )));
            }
            if !m.amplitude.is_finite() || !m.frequency.is_finite() {
                return Err(Error::InvalidInput("potential parameters must be finite".into()));
            }
        }
        if let Some(p) = config.time_period {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::InvalidInput(format!("time period must be positive, got {p}")));
            }
            for m in &modes {
                let cycles = m.frequency * p;
                if (cycles - cycles.round()).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "potential is not {p}-periodic in time"
                    )));
                }
            }
        }
        Ok(LagrangianSpec {
            kinetic: config.kinetic.clone(),
            kinetic_inv,
            potential: CompiledPotential { modes },
            dim,
            config,
        })
    }

    /// `A = I` with the given potential on the circle.
    pub fn circle(potential: Potential) -> Result<Self> {
        Self::new(LagrangianConfig {
            kinetic: vec![1.0],
            potential,
            time_period: None,
        })
    }

    pub fn config(&self) -> &LagrangianConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn potential(&self) -> &Potential {
        &self.config.potential
    }

    pub fn time_period(&self) -> Option<f64> {
        self.config.time_period
    }

    pub fn kinetic(&self) -> &[f64] {
        &self.kinetic
    }

    pub fn kinetic_inv(&self) -> &[f64] {
        &self.kinetic_inv
    }

    pub fn is_autonomous(&self) -> bool {
        self.config.potential.is_autonomous()
    }

    /// `V(x, t)` with `x` given in any lift.
    #[inline]
    pub fn potential_value(&self, x: &[f64], t: f64) -> f64 {
        self.potential.value(x, t)
    }

    #[inline]
    pub fn potential_gradient(&self, x: &[f64], t: f64, out: &mut [f64]) {
        self.potential.gradient(x, t, out)
    }

    #[inline]
    pub fn potential_hessian(&self, x: &[f64], t: f64, out: &mut [f64]) {
        self.potential.hessian(x, t, out)
    }

    /// `½ vᵀ M v` for a row-major `d × d` matrix `M`.
    #[inline]
    fn quad(&self, m: &[f64], v: &[f64]) -> f64 {
        if self.dim == 1 {
            0.5 * m[0] * v[0] * v[0]
        } else {
            0.5 * (m[0] * v[0] * v[0] + (m[1] + m[2]) * v[0] * v[1] + m[3] * v[1] * v[1])
        }
    }

    #[inline]
    pub(crate) fn apply(m: &[f64], v: &[f64], out: &mut [f64]) {
        if v.len() == 1 {
            out[0] = m[0] * v[0];
        } else {
            out[0] = m[0] * v[0] + m[1] * v[1];
            out[1] = m[2] * v[0] + m[3] * v[1];
        }
    }

    /// Kinetic energy `½ vᵀA v`.
    #[inline]
    pub fn kinetic_energy(&self, v: &[f64]) -> f64 {
        self.quad(&self.kinetic, v)
    }

    #[inline]
    pub fn lagrangian(&self, x: &[f64], v: &[f64], t: f64) -> f64 {
        self.quad(&self.kinetic, v) - self.potential.value(x, t)
    }

    #[inline]
    pub fn hamiltonian(&self, x: &[f64], p: &[f64], t: f64) -> f64 {
        self.quad(&self.kinetic_inv, p) + self.potential.value(x, t)
    }

    pub fn eval_l(&self, x: &TorusPoint, v: &TangentVec, t: f64) -> f64 {
        self.lagrangian(x.coords(), &v.0, t)
    }

    pub fn eval_h(&self, x: &TorusPoint, p: &Covec, t: f64) -> f64 {
        self.hamiltonian(x.coords(), &p.0, t)
    }

    /// `p = ∂_v L = A v`.
    pub fn legendre_v_to_p(&self, v: &TangentVec) -> Covec {
        let mut p = vec![0.0; self.dim];
        Self::apply(&self.kinetic, &v.0, &mut p);
        Covec(p)
    }

    /// `v = ∂_p H = A⁻¹ p`.
    pub fn legendre_p_to_v(&self, p: &Covec) -> TangentVec {
        let mut v = vec![0.0; self.dim];
        Self::apply(&self.kinetic_inv, &p.0, &mut v);
        TangentVec(v)
    }

    /// Integrate Hamilton's equations from `(x, p)` at time `s` to time `t`
    /// with `steps` RK4 steps. Positions stay in the universal cover.
    pub fn flow_lifted(
        &self,
        x: &[f64],
        p: &[f64],
        s: f64,
        t: f64,
        steps: usize,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.dim;
        let mut x = x.to_vec();
        let mut p = p.to_vec();
        if steps == 0 || s == t {
            return Ok((x, p));
        }
        let h = (t - s) / steps as f64;
        let mut k = [[0.0; 2 * MAX_DIM]; 4];
        let mut xs = [0.0; MAX_DIM];
        let mut ps = [0.0; MAX_DIM];
        let mut grad = [0.0; MAX_DIM];
        let mut vel = [0.0; MAX_DIM];

        for step in 0..steps {
            let tau = s + step as f64 * h;
            let stages = [(0.0, 0.0), (0.5, 0.5), (0.5, 0.5), (1.0, 1.0)];
            for (si, &(cprev, ct)) in stages.iter().enumerate() {
                for a in 0..d {
                    let (dx, dp) = if si == 0 {
                        (0.0, 0.0)
                    } else {
                        (k[si - 1][a], k[si - 1][d + a])
                    };
                    xs[a] = x[a] + cprev * h * dx;
                    ps[a] = p[a] + cprev * h * dp;
                }
                let tt = tau + ct * h;
                Self::apply(&self.kinetic_inv, &ps[..d], &mut vel[..d]);
                self.potential.gradient(&xs[..d], tt, &mut grad[..d]);
                for a in 0..d {
                    k[si][a] = vel[a];
                    k[si][d + a] = -grad[a];
                }
            }
            for a in 0..d {
                x[a] += h / 6.0 * (k[0][a] + 2.0 * k[1][a] + 2.0 * k[2][a] + k[3][a]);
                p[a] += h / 6.0
                    * (k[0][d + a] + 2.0 * k[1][d + a] + 2.0 * k[2][d + a] + k[3][d + a]);
            }
            if x.iter().chain(&p).any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    time: tau + h,
                });
            }
        }
        Ok((x, p))
    }

    /// The Euler-Lagrange flow `ψ_s^t`: carries `start` (at time `start.t`)
    /// to time `t`, passing through the Hamiltonian side.
    pub fn flow(&self, start: &PhasePoint, t: f64, steps: usize) -> Result<PhasePoint> {
        let p = self.legendre_v_to_p(&start.v);
        let (x, p) = self.flow_lifted(start.x.coords(), &p.0, start.t, t, steps)?;
        Ok(PhasePoint {
            x: wrap(&x)?,
            v: self.legendre_p_to_v(&Covec(p)),
            t,
        })
    }

    /// Project a finite lifted position onto the torus.
    pub fn wrap_lifted(x: &[f64]) -> TorusPoint {
        TorusPoint::from_wrapped(x.iter().map(|&c| wrap_coord(c)).collect())
    }
}

/// Number of fixed steps covering `[s, t]` at `per_unit` steps per unit time.
pub fn steps_for(s: f64, t: f64, per_unit: usize) -> usize {
    ((t - s).abs() * per_unit as f64).round().max(1.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pendulum() -> LagrangianSpec {
        LagrangianSpec::circle(Potential::pendulum()).unwrap()
    }

    fn free() -> LagrangianSpec {
        LagrangianSpec::circle(Potential::Zero).unwrap()
    }

    fn diag2() -> LagrangianSpec {
        LagrangianSpec::new(LagrangianConfig {
            kinetic: vec![2.0],
            potential: Potential::Zero,
            time_period: None,
        })
        .unwrap()
    }

    fn x(c: f64) -> TorusPoint {
        TorusPoint::on_circle(c).unwrap()
    }

    #[test]
    fn lagrangian_examples() {
        assert_eq!(free().eval_l(&x(0.3), &TangentVec(vec![1.0]), 0.0), 0.5);
        assert!((pendulum().eval_l(&x(0.0), &TangentVec(vec![0.0]), 0.0) + 1.0).abs() < 1e-15);
        assert_eq!(diag2().eval_l(&x(0.0), &TangentVec(vec![1.0]), 0.0), 1.0);
    }

    #[test]
    fn hamiltonian_examples() {
        assert_eq!(free().eval_h(&x(0.3), &Covec(vec![1.0]), 0.0), 0.5);
        assert!((pendulum().eval_h(&x(0.0), &Covec(vec![0.0]), 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(diag2().eval_h(&x(0.0), &Covec(vec![2.0]), 0.0), 1.0);
    }

    #[test]
    fn legendre_examples() {
        let p = free().legendre_v_to_p(&TangentVec(vec![0.3]));
        assert_eq!(p.0, vec![0.3]);
        let p = diag2().legendre_v_to_p(&TangentVec(vec![1.0]));
        assert_eq!(p.0, vec![2.0]);
        let spec = LagrangianSpec::new(LagrangianConfig {
            kinetic: vec![2.0, 0.5, 0.5, 1.0],
            potential: Potential::Zero,
            time_period: None,
        })
        .unwrap();
        let v = TangentVec(vec![0.37, -1.2]);
        let back = spec.legendre_p_to_v(&spec.legendre_v_to_p(&v));
        for (a, b) in back.0.iter().zip(&v.0) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_non_mechanical_kinetic_forms() {
        for k in [vec![0.0], vec![-1.0], vec![1.0, 2.0, 2.0, 1.0], vec![1.0, 0.3, 0.0, 1.0]] {
            let cfg = LagrangianConfig {
                kinetic: k,
                potential: Potential::Zero,
                time_period: None,
            };
            assert!(LagrangianSpec::new(cfg).is_err());
        }
        let cfg = LagrangianConfig {
            kinetic: vec![1.0],
            potential: Potential::Cosine {
                amplitude: 1.0,
                wavevector: vec![1, 1],
            },
            time_period: None,
        };
        assert!(LagrangianSpec::new(cfg).is_err());
    }

    #[test]
    fn time_period_must_match_potential() {
        let cfg = LagrangianConfig {
            kinetic: vec![1.0],
            potential: Potential::Traveling {
                amplitude: 0.2,
                wavevector: vec![1],
                speed: 0.5,
            },
            time_period: Some(1.0),
        };
        assert!(LagrangianSpec::new(cfg).is_err());
    }

    #[test]
    fn hamiltonian_is_the_numerical_legendre_transform() {
        let spec = pendulum();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let xx = [rng.gen::<f64>()];
            let p = [rng.gen_range(-3.0..3.0)];
            // H = max_v p·v − L on a fine velocity grid refined around the maximizer
            let mut best = f64::NEG_INFINITY;
            let mut vbest = 0.0;
            for i in 0..=6000 {
                let v = -6.0 + 12.0 * i as f64 / 6000.0;
                let val = p[0] * v - spec.lagrangian(&xx, &[v], 0.3);
                if val > best {
                    best = val;
                    vbest = v;
                }
            }
            for i in 0..=2000 {
                let v = vbest - 0.002 + 0.004 * i as f64 / 2000.0;
                best = best.max(p[0] * v - spec.lagrangian(&xx, &[v], 0.3));
            }
            assert!((best - spec.hamiltonian(&xx, &p, 0.3)).abs() < 1e-6);
        }
    }

    #[test]
    fn lagrangian_is_the_numerical_legendre_transform_of_h() {
        let spec = pendulum();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let xx = [rng.gen::<f64>()];
            let v = [rng.gen_range(-3.0..3.0)];
            let mut best = f64::NEG_INFINITY;
            for i in 0..=6000 {
                let p = -6.0 + 12.0 * i as f64 / 6000.0;
                best = best.max(p * v[0] - spec.hamiltonian(&xx, &[p], 0.0));
            }
            let centre = v[0];
            for i in 0..=2000 {
                let p = centre - 0.002 + 0.004 * i as f64 / 2000.0;
                best = best.max(p * v[0] - spec.hamiltonian(&xx, &[p], 0.0));
            }
            assert!((best - spec.lagrangian(&xx, &v, 0.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn free_motion_is_straight() {
        let start = PhasePoint {
            x: x(0.0),
            v: TangentVec(vec![1.0]),
            t: 0.0,
        };
        let end = free().flow(&start, 0.5, 500).unwrap();
        assert!((end.x.coords()[0] - 0.5).abs() < 1e-14);
        assert!((end.v.0[0] - 1.0).abs() < 1e-14);
        let same = free().flow(&start, 0.0, 10).unwrap();
        assert_eq!(same, start);
    }

    #[test]
    fn pendulum_equilibrium_is_fixed() {
        let start = PhasePoint {
            x: x(0.5),
            v: TangentVec(vec![0.0]),
            t: 0.0,
        };
        let end = pendulum().flow(&start, 1.0, 1000).unwrap();
        assert!((end.x.coords()[0] - 0.5).abs() < 1e-10);
        assert!(end.v.0[0].abs() < 1e-10);
    }

    #[test]
    fn flow_composes() {
        let spec = pendulum();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut times = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            if rng.gen_bool(0.5) {
                times.swap(0, 2);
            }
            let [r, s, t] = times;
            let start = PhasePoint {
                x: x(rng.gen()),
                v: TangentVec(vec![rng.gen_range(-1.0..1.0)]),
                t: r,
            };
            let st = |a: f64, b: f64| steps_for(a, b, DEFAULT_STEPS_PER_UNIT);
            let mid = spec.flow(&start, s, st(r, s)).unwrap();
            let two = spec.flow(&mid, t, st(s, t)).unwrap();
            let one = spec.flow(&start, t, st(r, t)).unwrap();
            assert!(crate::manifold::distance(&one.x, &two.x) < 1e-8);
            assert!((one.v.0[0] - two.v.0[0]).abs() < 1e-8);
        }
    }

    #[test]
    fn autonomous_energy_is_conserved() {
        let spec = pendulum();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let xx = [rng.gen::<f64>()];
            let p = [rng.gen_range(-2.0..2.0)];
            let e0 = spec.hamiltonian(&xx, &p, 0.0);
            let (x1, p1) = spec.flow_lifted(&xx, &p, 0.0, 1.0, 1000).unwrap();
            assert!((spec.hamiltonian(&x1, &p1, 1.0) - e0).abs() < 1e-8);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let spec = LagrangianSpec::circle(Potential::Cosine {
            amplitude: 1e308,
            wavevector: vec![1],
        })
        .unwrap();
        let r = spec.flow_lifted(&[0.1], &[0.0], 0.0, 1.0, 10);
        assert!(matches!(r, Err(Error::Divergence { .. })));
    }
}
