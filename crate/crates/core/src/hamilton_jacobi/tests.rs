use std::f64::consts::PI;

use proptest::prelude::*;

use super::*;
use crate::dynamics::Potential;
use crate::instances;
use crate::kantorovich;
use crate::measure::DiscreteMeasure;

/// Free-particle cost `d(x, y)² / 2τ` in closed form.
fn free_cost(xs: &[TorusPoint], ys: &[TorusPoint], tau: f64) -> Array2<f64> {
    Array2::from_shape_fn((xs.len(), ys.len()), |(i, j)| {
        let d = distance(&xs[i], &ys[j]);
        d * d / (2.0 * tau)
    })
}

fn free() -> LagrangianSpec {
    LagrangianSpec::circle(Potential::Zero).unwrap()
}

fn p(x: f64) -> TorusPoint {
    TorusPoint::on_circle(x).unwrap()
}

#[test]
fn forward_trivial_examples() {
    let grid = GridSpec::new(32, 1).unwrap();
    let nodes = grid.nodes();
    for t in [0.1, 0.5, 0.9] {
        let c = free_cost(&nodes, &nodes, t);
        let u = lax_oleinik_forward(&vec![0.0; 32], &c, &grid, t).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
        assert!((0..32).all(|x| u.optimizers[x] == vec![x]));
        let u3 = lax_oleinik_forward(&vec![3.0; 32], &c, &grid, t).unwrap();
        assert!(u3.values().iter().all(|&v| v == 3.0));
    }
}

#[test]
fn forward_matches_double_resolution_minimization() {
    let grid = GridSpec::new(128, 1).unwrap();
    let fine = GridSpec::new(256, 1).unwrap();
    let phi = |y: &TorusPoint| 0.05 * (2.0 * PI * y.coords()[0]).cos();
    let coarse_nodes = grid.nodes();
    let fine_nodes = fine.nodes();
    let phi0: Vec<f64> = coarse_nodes.iter().map(phi).collect();
    let u = lax_oleinik_forward(&phi0, &free_cost(&coarse_nodes, &coarse_nodes, 0.5), &grid, 0.5).unwrap();
    for (x, node) in coarse_nodes.iter().enumerate() {
        let oracle = fine_nodes
            .iter()
            .map(|y| {
                let d = distance(y, node);
                phi(y) + d * d
            })
            .fold(f64::INFINITY, f64::min);
        assert!((u.values()[x] - oracle).abs() <= 1e-4);
    }
}

#[test]
fn backward_trivial_examples() {
    let grid = GridSpec::new(16, 1).unwrap();
    let nodes = grid.nodes();
    let ub = lax_oleinik_backward(&vec![0.0; 16], &free_cost(&nodes, &nodes, 0.5), &grid, 0.5).unwrap();
    assert!(ub.values().iter().all(|&v| v == 0.0));
    // zero-duration cost: 0 on the diagonal, +∞ elsewhere
    let phi1: Vec<f64> = (0..16).map(|k| (k as f64).sin()).collect();
    let c = Array2::from_shape_fn((16, 16), |(i, j)| if i == j { 0.0 } else { f64::INFINITY });
    let ub = lax_oleinik_backward(&phi1, &c, &grid, 1.0).unwrap();
    assert_eq!(ub.values(), phi1.as_slice());
}

#[test]
fn missing_cost_matrix_is_a_dependency_error() {
    let grid = GridSpec::new(8, 1).unwrap();
    let c = Array2::zeros((3, 7));
    assert!(matches!(lax_oleinik_forward(&[0.0; 3], &c, &grid, 0.5), Err(Error::Dependency(_))));
    assert!(matches!(lax_oleinik_backward(&[0.0; 7], &c, &grid, 0.5), Err(Error::Dependency(_))));
}

fn solved_slices(
    inst: &instances::Instance,
    grid: &GridSpec,
    times: &[f64],
    tol: f64,
) -> (kantorovich::KantorovichSolution, Vec<HjSlice>) {
    let opts = ActionOptions::default();
    let c = crate::action::cost_matrix(&inst.spec, inst.mu0.atoms(), inst.mu1.atoms(), 0.0, inst.horizon, &opts).unwrap();
    let sol = kantorovich::solve(&c, &inst.mu0, &inst.mu1).unwrap();
    let (slices, _) = value_slices(
        &inst.spec,
        grid,
        inst.mu0.atoms(),
        inst.mu1.atoms(),
        &sol.potentials,
        inst.horizon,
        times,
        tol,
        &opts,
        None,
    )
    .unwrap();
    (sol, slices)
}

#[test]
fn pendulum_ordering_on_a_coarse_grid() {
    let inst = instances::pendulum_transport();
    let grid = GridSpec::new(32, 1).unwrap();
    let (_, slices) = solved_slices(&inst, &grid, &[0.25, 0.5, 0.75], DEFAULT_MASK_TOLERANCE);
    for s in &slices {
        assert!(s.ordering_violation() <= 1e-9, "t={} violation {}", s.time, s.ordering_violation());
        assert!(s.mask.count() > 0);
    }
}

#[test]
fn dirac_transport_set_and_field() {
    let inst = instances::dirac_pair();
    let grid = GridSpec::new(128, 1).unwrap();
    let times = [0.25, 0.5, 0.75];
    let (_, slices) = solved_slices(&inst, &grid, &times, DEFAULT_MASK_TOLERANCE);
    let h = grid.spacing();
    // 0 and 0.5 are antipodal: both geodesics x = ±t/2 are minimizing
    for s in &slices {
        let branches = [p(0.5 * s.time), p(-0.5 * s.time)];
        for b in &branches {
            assert!(s.mask.mask[grid.nearest_node(b)]);
        }
        for n in s.mask.nodes() {
            let d = branches.iter().map(|b| distance(&grid.node(n), b)).fold(f64::INFINITY, f64::min);
            assert!(d <= 2.0 * h);
        }
    }
    let field = velocity_field(&inst.spec, &grid, inst.mu0.atoms(), &slices, &ActionOptions::default()).unwrap();
    let mid = &field.slices[1];
    let k = mid.nodes.iter().position(|&n| n == 32).unwrap();
    assert!((mid.extremal[k][0] - 0.5).abs() < 1e-9);
    let est = lipschitz_estimate(&field, 1.0, &[0.1, 0.25]);
    assert!(est.iter().all(|e| e.k_hat.is_some_and(f64::is_finite)));

    let everything = transport_set(&slices[0].u.field, &slices[0].u_back.field, f64::INFINITY).unwrap();
    assert_eq!(everything.count(), grid.len());
}

#[test]
fn stationary_dirac_has_zero_field() {
    let x = p(0.3125);
    let inst = instances::Instance {
        name: "stay",
        spec: free(),
        mu0: DiscreteMeasure::dirac(x.clone()),
        mu1: DiscreteMeasure::dirac(x.clone()),
        horizon: 1.0,
    };
    let grid = GridSpec::new(64, 1).unwrap();
    let (_, slices) = solved_slices(&inst, &grid, &[0.125, 0.5, 0.875], DEFAULT_MASK_TOLERANCE);
    let node = grid.nearest_node(&x);
    for s in &slices {
        assert!(s.mask.mask[node]);
    }
    let field = velocity_field(&inst.spec, &grid, inst.mu0.atoms(), &slices, &ActionOptions::default()).unwrap();
    for s in &field.slices {
        let k = s.nodes.iter().position(|&n| n == node).unwrap();
        assert!(s.extremal[k][0].abs() < 1e-12);
    }
}

#[test]
fn uniform_identity_has_zero_lipschitz_constant() {
    let mu = instances::uniform(16).unwrap();
    let inst = instances::Instance {
        name: "identity",
        spec: free(),
        mu0: mu.clone(),
        mu1: mu,
        horizon: 1.0,
    };
    let grid = GridSpec::new(16, 1).unwrap();
    let (_, slices) = solved_slices(&inst, &grid, &[0.25, 0.5, 0.75], DEFAULT_MASK_TOLERANCE);
    let field = velocity_field(&inst.spec, &grid, inst.mu0.atoms(), &slices, &ActionOptions::default()).unwrap();
    assert!(!field.is_empty());
    for e in lipschitz_estimate(&field, 1.0, &[0.1, 0.25]) {
        assert_eq!(e.k_hat, Some(0.0));
    }
}

#[test]
fn pendulum_field_computations_agree() {
    let inst = instances::pendulum_transport();
    let grid = GridSpec::new(64, 1).unwrap();
    let times: Vec<f64> = (1..8).map(|k| k as f64 / 8.0).collect();
    let (_, slices) = solved_slices(&inst, &grid, &times, DEFAULT_MASK_TOLERANCE);
    let field = velocity_field(&inst.spec, &grid, inst.mu0.atoms(), &slices, &ActionOptions::default()).unwrap();
    assert!(!field.is_empty());
    assert!(field.max_deviation <= 2.0 * grid.spacing(), "deviation {}", field.max_deviation);
    let est = lipschitz_estimate(&field, 1.0, &[0.125, 0.25, 0.375]);
    for w in est.windows(2) {
        assert!(w[0].k_hat.unwrap() >= w[1].k_hat.unwrap() - 1e-9);
    }
}

#[test]
fn forward_operator_is_a_semigroup() {
    let grid = GridSpec::new(512, 1).unwrap();
    let nodes = grid.nodes();
    let phi0: Vec<f64> = nodes.iter().map(|y| 0.05 * (2.0 * PI * y.coords()[0]).cos()).collect();
    let direct = lax_oleinik_forward(&phi0, &free_cost(&nodes, &nodes, 0.5), &grid, 0.5).unwrap();
    let half = lax_oleinik_forward(&phi0, &free_cost(&nodes, &nodes, 0.25), &grid, 0.25).unwrap();
    let composed = lax_oleinik_forward(half.values(), &free_cost(&nodes, &nodes, 0.25), &grid, 0.5).unwrap();
    for (a, b) in direct.values().iter().zip(composed.values()) {
        assert!((a - b).abs() <= 2.0 * DEFAULT_COST_ACCURACY);
    }
}

#[test]
fn constant_shifts_leave_mask_and_field_unchanged() {
    let inst = instances::two_atom();
    let grid = GridSpec::new(32, 1).unwrap();
    let opts = ActionOptions::default();
    let (sol, slices) = solved_slices(&inst, &grid, &[0.5], DEFAULT_MASK_TOLERANCE);
    let shifted = kantorovich::PotentialPair {
        phi0: sol.potentials.phi0.iter().map(|v| v + 0.75).collect(),
        phi1: sol.potentials.phi1.iter().map(|v| v + 0.75).collect(),
    };
    let (moved, _) = value_slices(
        &inst.spec,
        &grid,
        inst.mu0.atoms(),
        inst.mu1.atoms(),
        &shifted,
        1.0,
        &[0.5],
        DEFAULT_MASK_TOLERANCE,
        &opts,
        None,
    )
    .unwrap();
    assert_eq!(moved[0].mask, slices[0].mask);
    assert_eq!(moved[0].u.optimizers, slices[0].u.optimizers);
    for (a, b) in moved[0].u.values().iter().zip(slices[0].u.values()) {
        assert!((a - b - 0.75).abs() < 1e-12);
    }
    let f1 = velocity_field(&inst.spec, &grid, inst.mu0.atoms(), &slices, &opts).unwrap();
    let f2 = velocity_field(&inst.spec, &grid, inst.mu0.atoms(), &moved, &opts).unwrap();
    assert_eq!(f1.slices[0].extremal, f2.slices[0].extremal);
}

#[test]
fn hamilton_jacobi_residual_is_small_where_smooth() {
    let spec = free();
    let grid = GridSpec::new(256, 1).unwrap();
    let nodes = grid.nodes();
    let phi0: Vec<f64> = nodes.iter().map(|y| 0.05 * (2.0 * PI * y.coords()[0]).cos()).collect();
    let slice = |t: f64| lax_oleinik_forward(&phi0, &free_cost(&nodes, &nodes, t), &grid, t).unwrap().field;
    let (a, b) = (slice(0.2), slice(0.21));
    let res = hj_residual(&spec, &a, &b, 50.0).unwrap();
    let defined: Vec<f64> = res.into_iter().flatten().collect();
    assert!(defined.len() > 200);
    for r in defined {
        assert!(r.abs() <= 2e-3, "residual {r}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn backward_stays_below_forward(
        xs in prop::collection::vec(0.0f64..1.0, 1..6),
        ys in prop::collection::vec(0.0f64..1.0, 1..6),
        t in 0.05f64..0.95,
    ) {
        let mu0 = DiscreteMeasure::uniform(xs.iter().map(|&x| p(x)).collect()).unwrap();
        let mu1 = DiscreteMeasure::uniform(ys.iter().map(|&y| p(y)).collect()).unwrap();
        let sol = kantorovich::solve(&free_cost(mu0.atoms(), mu1.atoms(), 1.0), &mu0, &mu1).unwrap();
        let grid = GridSpec::new(64, 1).unwrap();
        let nodes = grid.nodes();
        let u = lax_oleinik_forward(&sol.potentials.phi0, &free_cost(mu0.atoms(), &nodes, t), &grid, t).unwrap();
        let ub = lax_oleinik_backward(&sol.potentials.phi1, &free_cost(&nodes, mu1.atoms(), 1.0 - t), &grid, t).unwrap();
        for (a, b) in u.values().iter().zip(ub.values()) {
            prop_assert!(b <= &(a + 1e-12));
        }
    }
}
