//! Built-in transport and Mather instances used by the command line tool and
//! the test suites.

use std::f64::consts::PI;

use crate::dynamics::{LagrangianSpec, Potential};
use crate::error::Result;
use crate::manifold::{GridSpec, TorusPoint};
use crate::measure::DiscreteMeasure;

fn p(x: f64) -> TorusPoint {
    TorusPoint::on_circle(x).expect("finite coordinate")
}

/// A transport problem: Lagrangian, marginals and horizon.
#[derive(Clone, Debug)]
pub struct Instance {
    pub name: &'static str,
    pub spec: LagrangianSpec,
    pub mu0: DiscreteMeasure,
    pub mu1: DiscreteMeasure,
    pub horizon: f64,
}

/// `½δ₀ + ½δ_{0.5}` to `½δ_{0.1} + ½δ_{0.6}` for the free particle.
pub fn two_atom() -> Instance {
    Instance {
        name: "two_atom",
        spec: LagrangianSpec::circle(Potential::Zero).expect("valid spec"),
        mu0: DiscreteMeasure::uniform(vec![p(0.0), p(0.5)]).expect("two atoms"),
        mu1: DiscreteMeasure::uniform(vec![p(0.1), p(0.6)]).expect("two atoms"),
        horizon: 1.0,
    }
}

/// `δ₀` to `δ_{0.5}` for the free particle.
pub fn dirac_pair() -> Instance {
    Instance {
        name: "dirac_pair",
        spec: LagrangianSpec::circle(Potential::Zero).expect("valid spec"),
        mu0: DiscreteMeasure::dirac(p(0.0)),
        mu1: DiscreteMeasure::dirac(p(0.5)),
        horizon: 1.0,
    }
}

/// Uniform measure on the `n` nodes `k/n`.
pub fn uniform(n: usize) -> Result<DiscreteMeasure> {
    Ok(DiscreteMeasure::uniform_on_grid(&GridSpec::new(n, 1)?))
}

/// Image of [`uniform`] under the monotone circle map `x ↦ x + a sin 2πx`
/// (monotone for `|a| < 1/2π`).
pub fn pushforward_sine(n: usize, amplitude: f64) -> Result<DiscreteMeasure> {
    let atoms = GridSpec::new(n, 1)?
        .nodes()
        .iter()
        .map(|x| {
            let c = x.coords()[0];
            p(c + amplitude * (2.0 * PI * c).sin())
        })
        .collect();
    DiscreteMeasure::uniform(atoms)
}

/// Uniform(64) to its pushforward by `x + 0.1 sin 2πx`, free particle.
pub fn uniform_pushforward() -> Instance {
    Instance {
        name: "uniform_pushforward",
        spec: LagrangianSpec::circle(Potential::Zero).expect("valid spec"),
        mu0: uniform(64).expect("grid"),
        mu1: pushforward_sine(64, 0.1).expect("grid"),
        horizon: 1.0,
    }
}

/// Uniform(16) to its sine pushforward under the pendulum Lagrangian.
pub fn pendulum_transport() -> Instance {
    Instance {
        name: "pendulum",
        spec: LagrangianSpec::circle(Potential::pendulum()).expect("valid spec"),
        mu0: uniform(16).expect("grid"),
        mu1: pushforward_sine(16, 0.1).expect("grid"),
        horizon: 1.0,
    }
}

/// The three time-periodic model Lagrangians on the circle: the pendulum
/// `cos 2πx`, the two-well `cos 4πx` and the traveling wave
/// `0.2 cos 2π(x − t)`.
pub fn periodic_specs() -> Vec<(&'static str, LagrangianSpec)> {
    vec![
        ("pendulum", LagrangianSpec::circle(Potential::pendulum()).expect("valid spec")),
        (
            "two_well",
            LagrangianSpec::circle(Potential::Cosine {
                amplitude: 1.0,
                wavevector: vec![2],
            })
            .expect("valid spec"),
        ),
        ("traveling", traveling_spec()),
    ]
}

pub fn traveling_spec() -> LagrangianSpec {
    LagrangianSpec::new(crate::dynamics::LagrangianConfig {
        kinetic: vec![1.0],
        potential: Potential::Traveling {
            amplitude: 0.2,
            wavevector: vec![1],
            speed: 1.0,
        },
        time_period: Some(1.0),
    })
    .expect("valid spec")
}
