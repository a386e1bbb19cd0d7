use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dynamics::{Potential, DEFAULT_STEPS_PER_UNIT};
use crate::manifold::distance;

fn p(x: f64) -> TorusPoint {
    TorusPoint::on_circle(x).unwrap()
}

/// `min_k (Δ + k)² / 2T` on the circle.
fn quad_cost(a: &TorusPoint, b: &TorusPoint, horizon: f64) -> f64 {
    let d = distance(a, b);
    d * d / (2.0 * horizon)
}

fn quad_matrix(xs: &[TorusPoint], ys: &[TorusPoint], horizon: f64) -> Array2<f64> {
    Array2::from_shape_fn((xs.len(), ys.len()), |(i, j)| quad_cost(&xs[i], &ys[j], horizon))
}

fn random_measure(rng: &mut ChaCha8Rng, n: usize) -> DiscreteMeasure {
    let atoms = (0..n).map(|_| p(rng.gen())).collect();
    let w = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    DiscreteMeasure::normalized(atoms, w).unwrap()
}

fn two_atom() -> (DiscreteMeasure, DiscreteMeasure, Array2<f64>) {
    let mu0 = DiscreteMeasure::uniform(vec![p(0.0), p(0.5)]).unwrap();
    let mu1 = DiscreteMeasure::uniform(vec![p(0.1), p(0.6)]).unwrap();
    let c = quad_matrix(mu0.atoms(), mu1.atoms(), 1.0);
    (mu0, mu1, c)
}

#[test]
fn dirac_to_dirac() {
    let c = Array2::from_elem((1, 1), 0.37);
    let (mu0, mu1) = (DiscreteMeasure::dirac(p(0.1)), DiscreteMeasure::dirac(p(0.7)));
    let (plan, value) = solve_primal(&c, &mu0, &mu1).unwrap();
    assert_eq!(plan.coupling[[0, 0]], 1.0);
    assert_eq!(value, 0.37);
    let (_, dual) = solve_dual(&c, &mu0, &mu1).unwrap();
    assert!((dual - 0.37).abs() < 1e-15);
}

#[test]
fn two_atom_instance_picks_the_diagonal() {
    let (mu0, mu1, c) = two_atom();
    // the only two extreme plans: diagonal and crossed
    let diag = 0.5 * (c[[0, 0]] + c[[1, 1]]);
    let crossed = 0.5 * (c[[0, 1]] + c[[1, 0]]);
    assert!((diag - 0.005).abs() < 1e-15 && (crossed - 0.08).abs() < 1e-15);
    let sol = solve(&c, &mu0, &mu1).unwrap();
    assert!((sol.primal - diag).abs() < 1e-15);
    assert_eq!(sol.plan.coupling[[0, 0]], 0.5);
    assert_eq!(sol.plan.coupling[[1, 1]], 0.5);
    assert_eq!(sol.plan.coupling[[0, 1]], 0.0);
    assert!(sol.duality_gap() <= 1e-10);
    assert!((sol.dual - 0.005).abs() <= 1e-10);
}

#[test]
fn measure_against_itself_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mu = random_measure(&mut rng, 9);
    let c = quad_matrix(mu.atoms(), mu.atoms(), 1.0);
    let sol = solve(&c, &mu, &mu).unwrap();
    assert_eq!(sol.primal, 0.0);
    for i in 0..9 {
        assert!((sol.plan.coupling[[i, i]] - mu.weights()[i]).abs() < 1e-15);
    }
    assert!(sol.dual.abs() < 1e-12);
    assert!(sol.potentials.admissibility_violation(&c) <= 1e-12);
}

#[test]
fn mismatched_instances_are_rejected() {
    let (mu0, mu1, _) = two_atom();
    assert!(solve(&Array2::zeros((3, 2)), &mu0, &mu1).is_err());
}

#[test]
fn slackness_examples() {
    let (mu0, mu1, c) = two_atom();
    let sol = solve(&c, &mu0, &mu1).unwrap();
    assert!(check_slackness(&sol.plan, &sol.potentials, &c, 1e-9).worst <= 1e-9);

    let mut bumped = sol.potentials.clone();
    bumped.phi0[0] += 0.1;
    let r = check_slackness(&sol.plan, &bumped, &c, 1e-9);
    assert!((r.worst - 0.1).abs() < 1e-12);
    assert_eq!(r.at, Some((0, 0)));
    assert!(!r.passed());

    let crossed = TransportPlan::new(
        ndarray::array![[0.0, 0.5], [0.5, 0.0]],
        mu0.clone(),
        mu1.clone(),
    )
    .unwrap();
    let pair = PotentialPair { phi0: vec![0.0, 0.0], phi1: vec![0.005, 0.005] };
    assert!(pair.admissibility_violation(&c) <= 1e-15);
    let r = check_slackness(&crossed, &pair, &c, 1e-9);
    assert!((r.worst - 0.075).abs() < 1e-9, "worst {}", r.worst);
}

#[test]
fn strong_duality_and_feasibility_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for k in 0..20 {
        let n0 = 1 + (k * 7) % 64;
        let n1 = 1 + (k * 13 + 5) % 64;
        let mu0 = random_measure(&mut rng, n0);
        let mu1 = random_measure(&mut rng, n1);
        let c = quad_matrix(mu0.atoms(), mu1.atoms(), 0.7);
        let sol = solve(&c, &mu0, &mu1).unwrap();
        assert!(sol.duality_gap() <= 1e-9, "gap {}", sol.duality_gap());
        assert!(sol.plan.marginal_residual() <= 1e-10);
        assert!(sol.potentials.admissibility_violation(&c) <= 1e-9);
        assert!(check_slackness(&sol.plan, &sol.potentials, &c, 1e-9).passed());
        // weak duality for arbitrary admissible pairs
        for _ in 0..5 {
            let phi0: Vec<f64> = (0..n0).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let pair = PotentialPair { phi0, phi1: vec![0.0; n1] }.c_transform_sweeps(&c);
            assert!(pair.value(&mu0, &mu1) <= sol.primal + 1e-9);
        }
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for perm in permutations(n - 1) {
        for pos in 0..=perm.len() {
            let mut q = perm.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn equal_mass_instances_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for k in 0..50 {
        let n = 1 + k % 8;
        let xs: Vec<TorusPoint> = (0..n).map(|_| p(rng.gen())).collect();
        let ys: Vec<TorusPoint> = (0..n).map(|_| p(rng.gen())).collect();
        let c = quad_matrix(&xs, &ys, 1.0);
        let mu0 = DiscreteMeasure::uniform(xs).unwrap();
        let mu1 = DiscreteMeasure::uniform(ys).unwrap();
        let (_, value) = solve_primal(&c, &mu0, &mu1).unwrap();
        let brute = permutations(n)
            .iter()
            .map(|perm| perm.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum::<f64>() / n as f64)
            .fold(f64::INFINITY, f64::min);
        assert!((value - brute).abs() <= 1e-15 * brute.max(1.0) * n as f64, "{value} vs {brute}");
    }
}

#[test]
fn anchored_pairs_recover_the_cost() {
    let grid = GridSpec::new(16, 1).unwrap();
    let nodes = grid.nodes();
    let spec = LagrangianSpec::circle(Potential::pendulum()).unwrap();
    let c = crate::action::cost_matrix(&spec, &nodes, &nodes, 0.0, 1.0, &Default::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let anchors: Vec<usize> = (0..50).map(|_| rng.gen_range(0..16)).collect();
    let pairs: Vec<PotentialPair> = anchors.iter().map(|&a| anchored_pair(&c, a)).collect();
    for pair in &pairs {
        assert!(pair.admissibility_violation(&c) <= 1e-12);
    }
    for i in 0..16 {
        for j in 0..16 {
            let bound = cost_from_pairs(i, j, &pairs);
            assert!(bound <= c[[i, j]] + 1e-9);
            if anchors.contains(&i) {
                assert!((bound - c[[i, j]]).abs() <= 1e-9);
            }
        }
    }
    // a single anchored pair is exact at its anchor
    let single = anchored_pair(&c, 3);
    assert_eq!(cost_from_pairs(3, 11, &[single]), c[[3, 11]]);
    // the zero pair is admissible for a non-negative cost and bounds by 0
    let free = quad_matrix(&nodes, &nodes, 1.0);
    let zero = PotentialPair { phi0: vec![0.0; 16], phi1: vec![0.0; 16] };
    assert!(zero.admissibility_violation(&free) <= 0.0);
    assert_eq!(cost_from_pairs(2, 9, &[zero]), 0.0);
    assert_eq!(cost_from_pairs(2, 9, &[]), f64::NEG_INFINITY);
}

/// Optimal equal-weight matching on the circle for quadratic cost: a cyclic
/// shift of the sorted orders. Returns, per source in `xs` order, the matched
/// target index.
fn monotone_rearrangement(xs: &[TorusPoint], ys: &[TorusPoint]) -> Vec<usize> {
    let n = xs.len();
    let order = |pts: &[TorusPoint]| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| pts[a].coords()[0].total_cmp(&pts[b].coords()[0]));
        idx
    };
    let (ox, oy) = (order(xs), order(ys));
    let mut best = (f64::INFINITY, 0);
    for shift in 0..n {
        let cost: f64 = (0..n).map(|k| quad_cost(&xs[ox[k]], &ys[oy[(k + shift) % n]], 1.0)).sum();
        if cost < best.0 {
            best = (cost, shift);
        }
    }
    let mut image = vec![0; n];
    for k in 0..n {
        image[ox[k]] = oy[(k + best.1) % n];
    }
    image
}

fn pushforward_instance(n: usize, amp: f64) -> (GridSpec, DiscreteMeasure, DiscreteMeasure) {
    let grid = GridSpec::new(n, 1).unwrap();
    let mu0 = DiscreteMeasure::uniform_on_grid(&grid);
    let ys = grid
        .nodes()
        .iter()
        .map(|x| p(x.coords()[0] + amp * (2.0 * PI * x.coords()[0]).sin()))
        .collect();
    (grid, mu0, DiscreteMeasure::uniform(ys).unwrap())
}

#[test]
fn pushforward_plan_is_the_monotone_map() {
    let (grid, mu0, mu1) = pushforward_instance(64, 0.1);
    let c = quad_matrix(mu0.atoms(), mu1.atoms(), 1.0);
    let sol = solve(&c, &mu0, &mu1).unwrap();
    let spec = LagrangianSpec::circle(Potential::Zero).unwrap();
    let grad = potential_gradient(&grid, &sol.potentials.phi0).unwrap();
    let ex = extract_map(&sol.plan, &grad, &spec, 1.0, DEFAULT_STEPS_PER_UNIT, 0.1).unwrap();
    assert!(ex.is_map);
    let oracle = monotone_rearrangement(mu0.atoms(), mu1.atoms());
    let h = grid.spacing();
    for i in 0..64 {
        let j = ex.plan_image[i].unwrap();
        assert!(distance(&mu1.atoms()[j], &mu1.atoms()[oracle[i]]) <= h);
        if let Some(y) = &ex.analytic_image[i] {
            assert!(distance(y, &mu1.atoms()[oracle[i]]) <= h, "analytic map off at {i}");
        }
    }
    assert!(!ex.degenerate_potential);
}

#[test]
fn identity_and_collapse_maps() {
    let grid = GridSpec::new(32, 1).unwrap();
    let mu = DiscreteMeasure::uniform_on_grid(&grid);
    let spec = LagrangianSpec::circle(Potential::Zero).unwrap();
    let c = quad_matrix(mu.atoms(), mu.atoms(), 1.0);
    let sol = solve(&c, &mu, &mu).unwrap();
    let grad = potential_gradient(&grid, &sol.potentials.phi0).unwrap();
    let ex = extract_map(&sol.plan, &grad, &spec, 1.0, DEFAULT_STEPS_PER_UNIT, 0.1).unwrap();
    assert!(ex.is_map);
    for i in 0..32 {
        assert_eq!(ex.plan_image[i], Some(i));
        let y = ex.analytic_image[i].as_ref().unwrap();
        // the optimal potential is not unique here; any slope below h/2 is optimal
        assert!(distance(y, &mu.atoms()[i]) <= grid.spacing());
    }

    let target = DiscreteMeasure::dirac(p(0.5));
    let c = quad_matrix(mu.atoms(), target.atoms(), 1.0);
    let sol = solve(&c, &mu, &target).unwrap();
    let grad = potential_gradient(&grid, &sol.potentials.phi0).unwrap();
    let ex = extract_map(&sol.plan, &grad, &spec, 1.0, DEFAULT_STEPS_PER_UNIT, 0.5).unwrap();
    assert!(ex.is_map);
    assert!(ex.plan_image.iter().all(|j| *j == Some(0)));
}

#[test]
fn kinked_potentials_are_flagged() {
    let grid = GridSpec::new(32, 1).unwrap();
    // a concave kink at x = 0.5
    let phi: Vec<f64> = grid.nodes().iter().map(|x| -(x.coords()[0] - 0.5).abs() * 40.0).collect();
    let g = potential_gradient(&grid, &phi).unwrap();
    assert!(!g.differentiable[16]);
    assert!(g.differentiable[8]);
}
