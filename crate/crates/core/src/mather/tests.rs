use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::action::cost_matrix;
use crate::dynamics::{LagrangianConfig, Potential};
use crate::instances;

fn free() -> LagrangianSpec {
    LagrangianSpec::circle(Potential::Zero).unwrap()
}

fn grid_cost(spec: &LagrangianSpec, grid: &GridSpec, t: f64) -> Array2<f64> {
    let nodes = grid.nodes();
    cost_matrix(spec, &nodes, &nodes, 0.0, t, &ActionOptions::default()).unwrap()
}

fn atom(x: f64, v: f64) -> PhaseAtom {
    PhaseAtom {
        x: vec![x],
        v: vec![v],
        mass: 1.0,
        source: 0,
        target: 0,
    }
}

#[test]
fn free_particle_has_zero_alpha() {
    let grid = GridSpec::new(16, 1).unwrap();
    let spec = free();
    let opts = ActionOptions::default();
    let (mut sol, _) = alpha_lp(&spec, &grid, &opts, None).unwrap();
    assert!(sol.alpha.abs() < 1e-12);
    assert!(sol.diagnostics.marginal_residual <= 1e-10);
    for (i, j, _) in sol.plan.support() {
        assert_eq!(i, j);
    }
    sol.m0 = mather_measure(&sol, &spec, &opts).unwrap();
    assert!(sol.m0.iter().all(|a| a.v[0].abs() < 1e-12));
    assert!((sol.m0.iter().map(|a| a.mass).sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(invariance_check(&sol.m0, &spec, 1000).unwrap() < 1e-12);
    let g = graph_check(&sol.m0, Some(0.0));
    assert!(g.passed);
    assert!(g.max_ratio.is_none_or(|r| r == 0.0));
    let r = alpha_t_check(&spec, &grid, &[1, 2], &opts, None).unwrap();
    assert!(r.values.iter().all(|v| v.1.abs() < 1e-12));
}

#[test]
fn pendulum_alpha_is_minus_max_potential() {
    let grid = GridSpec::new(32, 1).unwrap();
    let spec = LagrangianSpec::circle(Potential::pendulum()).unwrap();
    let (sol, _) = solve(&spec, &grid, &ActionOptions::default(), 1000, None).unwrap();
    assert!((sol.alpha + 1.0).abs() <= 2e-3, "alpha {}", sol.alpha);
    assert_eq!(sol.support, vec![0]);
    assert_eq!(sol.m0.len(), 1);
    assert!(sol.m0[0].x[0].abs() < 1e-15 && sol.m0[0].v[0].abs() < 1e-9);
    assert!(sol.diagnostics.invariance_defect.unwrap() <= 1e-6);
    let g = sol.diagnostics.graph.unwrap();
    assert!(g.passed && g.max_ratio.is_none());
}

#[test]
fn lp_agrees_with_minimum_cycle_mean() {
    let grid = GridSpec::new(12, 1).unwrap();
    for (name, spec) in instances::periodic_specs() {
        let c = grid_cost(&spec, &grid, 1.0);
        let flat: Vec<f64> = c.iter().copied().collect();
        let (alpha, _, _) = equal_marginals_lp(&c).unwrap();
        let karp = lp::min_cycle_mean(&flat, grid.len());
        assert!((alpha - karp).abs() < 1e-10, "{name}: {alpha} vs {karp}");
    }
}

#[test]
fn alpha_is_below_every_fixed_marginal_cost() {
    let grid = GridSpec::new(16, 1).unwrap();
    let spec = instances::traveling_spec();
    let c = grid_cost(&spec, &grid, 1.0);
    let sol = alpha_from_cost(&grid, &c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let w: Vec<f64> = (0..grid.len()).map(|_| rng.gen::<f64>()).collect();
        let mu = DiscreteMeasure::normalized(grid.nodes(), w).unwrap();
        let (_, value) = kantorovich::solve_primal(&c, &mu, &mu).unwrap();
        assert!(sol.alpha <= value + 1e-12, "{} > {}", sol.alpha, value);
    }
}

#[test]
fn alpha_lies_in_the_analytic_sandwich() {
    let grid = GridSpec::new(16, 1).unwrap();
    for (name, spec) in instances::periodic_specs() {
        let c = grid_cost(&spec, &grid, 1.0);
        let sol = alpha_from_cost(&grid, &c).unwrap();
        let max_v = spec.potential().sup_bound();
        assert!(sol.alpha >= -max_v - 1e-9, "{name}: {}", sol.alpha);
        // resting at a node costs −∫₀¹ V(x, t) dt
        let rest = grid
            .nodes()
            .iter()
            .map(|x| {
                let k = 1000;
                -(0..k)
                    .map(|i| spec.potential_value(x.coords(), (i as f64 + 0.5) / k as f64))
                    .sum::<f64>()
                    / k as f64
            })
            .fold(f64::INFINITY, f64::min);
        assert!(sol.alpha <= rest + 1e-6, "{name}: {} > {rest}", sol.alpha);
        assert!(sol.diagnostics.marginal_residual <= 1e-10);
    }
}

#[test]
fn two_well_measure_sits_on_a_maximum() {
    let grid = GridSpec::new(32, 1).unwrap();
    let (_, spec) = instances::periodic_specs().swap_remove(1);
    let opts = ActionOptions::default();
    let (mut sol, _) = alpha_lp(&spec, &grid, &opts, None).unwrap();
    assert!((sol.alpha + 1.0).abs() <= 2e-3);
    sol.m0 = mather_measure(&sol, &spec, &opts).unwrap();
    for a in &sol.m0 {
        let x = a.x[0];
        assert!(x.abs() < 1e-12 || (x - 0.5).abs() < 1e-12, "atom at {x}");
        assert!(a.v[0].abs() < 1e-9);
    }
    // the mirror-image Dirac is optimal too, and mixing both keeps the graph
    let c = grid_cost(&spec, &grid, 1.0);
    assert!((c[[0, 0]] - c[[16, 16]]).abs() < 1e-12);
    assert!((c[[0, 0]] - sol.alpha).abs() < 1e-12);
    let mixed = vec![atom(0.0, 0.0), atom(0.5, 0.0)];
    assert!(graph_check(&mixed, Some(0.0)).passed);
}

#[test]
fn graph_check_reports_the_worst_pair() {
    let m0 = vec![atom(0.0, 0.0), atom(0.25, 0.5), atom(0.9, -0.1)];
    let g = graph_check(&m0, Some(2.0));
    // pairs: 0.5/0.25 = 2, 0.1/0.1 = 1, 0.6/0.35
    assert_eq!(g.worst_pair, Some((0, 1)));
    assert!((g.max_ratio.unwrap() - 2.0).abs() < 1e-12);
    assert!(g.passed);
    assert!(!graph_check(&m0, Some(1.5)).passed);
    let stacked = vec![atom(0.3, 0.0), atom(0.3, 1.0)];
    assert_eq!(graph_check(&stacked, None).max_ratio, Some(f64::INFINITY));
    assert!(graph_check(&m0[..1], Some(0.0)).max_ratio.is_none());
}

#[test]
fn invariance_detects_a_moving_atom() {
    let spec = free();
    let m0 = vec![PhaseAtom {
        mass: 1.0,
        ..atom(0.0, 0.25)
    }];
    let d = invariance_check(&m0, &spec, 100).unwrap();
    assert!((d - 0.25).abs() < 1e-12);
    let loop_once = vec![atom(0.0, 1.0)];
    assert!(invariance_check(&loop_once, &spec, 100).unwrap() < 1e-12);
    assert!(invariance_check(&[], &spec, 100).is_err());
}

#[test]
fn rejects_non_periodic_specs() {
    let spec = LagrangianSpec::new(LagrangianConfig {
        kinetic: vec![1.0],
        potential: Potential::Traveling {
            amplitude: 0.2,
            wavevector: vec![1],
            speed: 1.0,
        },
        time_period: None,
    })
    .unwrap();
    let grid = GridSpec::new(4, 1).unwrap();
    assert!(alpha_lp(&spec, &grid, &ActionOptions::default(), None).is_err());
    assert!(alpha_t_check(&free(), &grid, &[0], &ActionOptions::default(), None).is_err());
}

#[test]
fn mismatched_cost_is_a_dependency_error() {
    let grid = GridSpec::new(4, 1).unwrap();
    let c = Array2::zeros((3, 3));
    assert!(matches!(alpha_from_cost(&grid, &c), Err(Error::Dependency(_))));
}
