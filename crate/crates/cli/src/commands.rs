//! `cost`, `transport` and `mather`.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use lagrange_ot::cache::{CacheStats, CostCache};
use lagrange_ot::hamilton_jacobi::{self, HjSlice, LipschitzEstimate, VectorFieldEstimate};
use lagrange_ot::interpolation::{self, InterpolationPath};
use lagrange_ot::kantorovich::{self, KantorovichSolution, MASS_THRESHOLD};
use lagrange_ot::manifold::{distance, TorusPoint};
use lagrange_ot::mather::{self, AlphaTReport, MatherSolution};
use lagrange_ot::measure::DiscreteMeasure;

use crate::config::{as_grid, RunConfig};
use crate::error::CliResult;
use crate::output::{coord_header, num, nums, OutputDir, RunLog};

/// Allowed fraction of non-differentiable source atoms in map extraction.
const MAX_NONDIFFERENTIABLE: f64 = 0.1;
/// Complementary slackness tolerance reported in the certificate.
const SLACKNESS_TOL: f64 = 1e-9;

fn open(cfg: &RunConfig, command: &str) -> CliResult<(OutputDir, RunLog, CostCache)> {
    let out = OutputDir::create(&cfg.output.directory)?;
    let log = RunLog::open(&cfg.output.directory, command)?;
    log.line(format!("config {}", cfg.path.display()));
    let cache = CostCache::new(cfg.cache_dir())?;
    Ok((out, log, cache))
}

fn log_cache(log: &RunLog, what: &str, stats: CacheStats) {
    log.line(format!("{what}: cache hits={} misses={}", stats.hits, stats.misses));
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CostOutput {
    pub s: f64,
    pub t: f64,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<Vec<f64>>,
}

/// Cost matrix between `mu0` and `mu1` (grid nodes when absent) over
/// `[0, T]`.
pub fn cmd_cost(cfg: &RunConfig) -> CliResult<CacheStats> {
    let (out, log, cache) = open(cfg, "cost")?;
    let nodes = cfg.problem.grid.nodes();
    let sources: Vec<TorusPoint> = cfg.problem.mu0.as_ref().map_or(nodes.clone(), |m| m.atoms().to_vec());
    let targets: Vec<TorusPoint> = cfg.problem.mu1.as_ref().map_or(nodes, |m| m.atoms().to_vec());
    let t = cfg.problem.horizon;
    let (m, stats) = cache.cost_matrix(&cfg.spec, &sources, &targets, 0.0, t, &cfg.solver.action)?;
    log_cache(&log, "cost matrix", stats);
    if cfg.output.csv() {
        out.write_csv("cost.csv", &[], m.rows().into_iter().map(|r| nums(r.as_slice().unwrap_or(&r.to_vec()))))?;
    }
    if cfg.output.json() {
        out.write_json(
            "cost.json",
            &CostOutput {
                s: 0.0,
                t,
                rows: m.nrows(),
                cols: m.ncols(),
                values: m.rows().into_iter().map(|r| r.to_vec()).collect(),
            },
        )?;
    }
    log.line("done");
    Ok(stats)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangleEntry {
    pub times: [f64; 3],
    pub defect: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KHatEntry {
    pub epsilon: f64,
    pub k_hat: Option<f64>,
    pub points: usize,
}

/// The transport certificate. Field names are fixed; see the README.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportCertificate {
    pub instance: Option<String>,
    pub horizon: f64,
    pub grid: usize,
    pub source_atoms: usize,
    pub target_atoms: usize,
    pub seed: u64,
    pub primal: f64,
    pub dual: f64,
    pub duality_gap: f64,
    pub slackness_max: f64,
    pub admissibility_max: f64,
    pub ordering_violation_max: f64,
    pub mask_tolerance: f64,
    pub mask_counts: Vec<usize>,
    pub empty_transport_set: bool,
    pub triangle_defects: Vec<TriangleEntry>,
    pub flow_interval: Option<[f64; 2]>,
    /// W1 between `μ_s` pushed by the field's flow and `μ_t`.
    pub flow_deviation: Option<f64>,
    pub flow_particle_deviation: Option<f64>,
    pub flow_coverage_warnings: usize,
    pub field_max_deviation: f64,
    #[serde(rename = "K_hat")]
    pub k_hat: Vec<KHatEntry>,
    pub is_map: bool,
    pub map_max_error: Option<f64>,
    pub nondifferentiable_fraction: Option<f64>,
    pub continuity_residual_max: f64,
    pub continuity_field_residual_max: Option<f64>,
}

/// Everything a transport run computes.
pub struct TransportRun {
    pub cost: Array2<f64>,
    pub solution: KantorovichSolution,
    pub slices: Vec<HjSlice>,
    pub field: VectorFieldEstimate,
    pub lipschitz: Vec<LipschitzEstimate>,
    pub path: InterpolationPath,
    pub certificate: TransportCertificate,
}

fn triangle_indices(n_interior: usize, random: usize, seed: u64) -> Vec<(usize, usize, usize)> {
    let last = n_interior + 1;
    let mut idx: Vec<(usize, usize, usize)> = (1..=n_interior).map(|k| (0, k, last)).collect();
    let total = last + 1;
    if total >= 3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..random {
            let mut v = sample(&mut rng, total, 3).into_vec();
            v.sort_unstable();
            let t = (v[0], v[1], v[2]);
            if !idx.contains(&t) {
                idx.push(t);
            }
        }
    }
    idx
}

/// Plan, potentials, value functions, field, interpolation and certificate.
pub fn run_transport(cfg: &RunConfig, cache: Option<&CostCache>, log: Option<&RunLog>) -> CliResult<TransportRun> {
    let (mu0, mu1) = cfg.measures()?;
    let spec = &cfg.spec;
    let opts = &cfg.solver.action;
    let horizon = cfg.problem.horizon;
    let grid = &cfg.problem.grid;
    let note = |s: String| {
        if let Some(l) = log {
            l.line(s);
        }
    };

    let (cost, stats) =
        lagrange_ot::cache::cached_cost_matrix(cache, spec, mu0.atoms(), mu1.atoms(), 0.0, horizon, opts)?;
    note(format!("cost matrix: cache hits={} misses={}", stats.hits, stats.misses));
    let solution = kantorovich::solve(&cost, mu0, mu1)?;
    let slack = kantorovich::check_slackness(&solution.plan, &solution.potentials, &cost, SLACKNESS_TOL);
    note(format!("kantorovich: primal {} dual {} pivots {}", solution.primal, solution.dual, solution.pivots));

    let slice_times = cfg.slice_times();
    let (slices, stats) = hamilton_jacobi::value_slices(
        spec,
        grid,
        mu0.atoms(),
        mu1.atoms(),
        &solution.potentials,
        horizon,
        &slice_times,
        cfg.solver.mask_tolerance,
        opts,
        cache,
    )?;
    note(format!("value slices: cache hits={} misses={}", stats.hits, stats.misses));
    let field = hamilton_jacobi::velocity_field(spec, grid, mu0.atoms(), &slices, opts)?;
    let lipschitz = hamilton_jacobi::lipschitz_estimate(&field, horizon, &cfg.problem.epsilons);

    let mut sample_times = vec![0.0];
    sample_times.extend(&cfg.problem.times);
    sample_times.push(horizon);
    let path = interpolation::interpolate(&solution.plan, spec, horizon, &sample_times, opts)?;
    let mut triangles = Vec::new();
    for idx in triangle_indices(cfg.problem.times.len(), cfg.problem.random_triples, cfg.solver.seed) {
        let r = interpolation::verify_triangle(&path, spec, idx, cfg.solver.cost_accuracy, opts)?;
        triangles.push(TriangleEntry {
            times: r.times,
            defect: r.defect,
            tolerance: r.tolerance,
            passed: r.passed,
        });
    }

    let (s, t) = (cfg.problem.times[0], *cfg.problem.times.last().unwrap_or(&horizon));
    let (s, t) = if s < t { (s, t) } else { (s, horizon) };
    let flow = if field.is_empty() {
        note("interpolation field is empty; flow check skipped".into());
        None
    } else {
        Some(interpolation::flow_consistency(
            &path,
            &field,
            s,
            t,
            cfg.solver.steps_per_unit,
            cfg.solver.seed,
        )?)
    };
    let continuity = interpolation::continuity_residual(
        &path,
        (!field.is_empty()).then_some(&field),
        &interpolation::default_test_functions(grid.dim()),
    );

    let rows_single = solution
        .plan
        .coupling
        .rows()
        .into_iter()
        .all(|r| r.iter().filter(|&&m| m > MASS_THRESHOLD).count() <= 1);
    let (is_map, map_max_error, nondiff) = match as_grid(mu0) {
        Some(g) => {
            let grad = kantorovich::potential_gradient(&g, &solution.potentials.phi0)?;
            let ex = kantorovich::extract_map(
                &solution.plan,
                &grad,
                spec,
                horizon,
                cfg.solver.steps_per_unit,
                MAX_NONDIFFERENTIABLE,
            )?;
            let err = ex
                .plan_image
                .iter()
                .zip(&ex.analytic_image)
                .filter_map(|(j, a)| Some(distance(&mu1.atoms()[(*j)?], a.as_ref()?)))
                .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))));
            (ex.is_map, err, Some(ex.nondifferentiable_fraction))
        }
        None => (rows_single, None, None),
    };

    let mask_counts: Vec<usize> = slices.iter().map(|s| s.mask.count()).collect();
    let certificate = TransportCertificate {
        instance: cfg.problem.instance.clone(),
        horizon,
        grid: grid.n_per_axis(),
        source_atoms: mu0.len(),
        target_atoms: mu1.len(),
        seed: cfg.solver.seed,
        primal: solution.primal,
        dual: solution.dual,
        duality_gap: solution.duality_gap(),
        slackness_max: slack.worst,
        admissibility_max: solution.potentials.admissibility_violation(&cost),
        ordering_violation_max: slices.iter().map(|s| s.ordering_violation()).fold(0.0, f64::max),
        mask_tolerance: cfg.solver.mask_tolerance,
        empty_transport_set: mask_counts.iter().all(|&c| c == 0),
        mask_counts,
        triangle_defects: triangles,
        flow_interval: flow.as_ref().map(|f| [f.s, f.t]),
        flow_deviation: flow.as_ref().map(|f| f.w1),
        flow_particle_deviation: flow.as_ref().map(|f| f.max_deviation),
        flow_coverage_warnings: flow.as_ref().map_or(0, |f| f.coverage_warnings),
        field_max_deviation: field.max_deviation,
        k_hat: lipschitz
            .iter()
            .map(|e| KHatEntry {
                epsilon: e.epsilon,
                k_hat: e.k_hat,
                points: e.points,
            })
            .collect(),
        is_map,
        map_max_error,
        nondifferentiable_fraction: nondiff,
        continuity_residual_max: continuity.max_residual,
        continuity_field_residual_max: continuity.max_field_residual,
    };
    Ok(TransportRun {
        cost,
        solution,
        slices,
        field,
        lipschitz,
        path,
        certificate,
    })
}

#[derive(Serialize)]
struct TransportDump<'a> {
    solution: &'a KantorovichSolution,
    path_times: &'a [f64],
    path_measures: &'a [DiscreteMeasure],
}

fn point_row(p: &TorusPoint) -> Vec<String> {
    nums(p.coords())
}

/// Writes plan, potentials, value fields, mask, field estimates,
/// interpolation series and `certificate.json`.
pub fn cmd_transport(cfg: &RunConfig) -> CliResult<TransportCertificate> {
    let (out, log, cache) = open(cfg, "transport")?;
    let run = run_transport(cfg, Some(&cache), Some(&log))?;
    let (mu0, mu1) = cfg.measures()?;
    let dim = cfg.spec.dim();
    let sol = &run.solution;

    if cfg.output.csv() {
        out.write_csv(
            "plan.csv",
            &["source".into(), "target".into(), "mass".into()],
            sol.plan
                .support()
                .into_iter()
                .map(|(i, j, m)| vec![i.to_string(), j.to_string(), num(m)]),
        )?;
        for (name, measure, phi) in [("phi0.csv", mu0, &sol.potentials.phi0), ("phi1.csv", mu1, &sol.potentials.phi1)] {
            let mut header = vec!["index".to_string()];
            header.extend(coord_header("x", dim));
            header.push("phi".into());
            out.write_csv(
                name,
                &header,
                measure.atoms().iter().zip(phi.iter()).enumerate().map(|(i, (a, v))| {
                    let mut r = vec![i.to_string()];
                    r.extend(point_row(a));
                    r.push(num(*v));
                    r
                }),
            )?;
        }
        let grid = &cfg.problem.grid;
        let nodes = grid.nodes();
        let mut header = vec!["t".to_string(), "node".into()];
        header.extend(coord_header("x", dim));
        header.extend(["u", "u_back", "gap", "mask"].map(String::from));
        let mut rows = Vec::new();
        for s in &run.slices {
            for (n, node) in nodes.iter().enumerate() {
                let (u, ub) = (s.u.values()[n], s.u_back.values()[n]);
                let mut r = vec![num(s.time), n.to_string()];
                r.extend(point_row(node));
                r.extend([num(u), num(ub), num(u - ub), u8::from(s.mask.mask[n]).to_string()]);
                rows.push(r);
            }
        }
        out.write_csv("hj.csv", &header, rows)?;

        let mut header = vec!["t".to_string(), "node".into()];
        header.extend(coord_header("x", dim));
        header.extend(coord_header("X", dim));
        header.extend(coord_header("grad", dim));
        let mut rows = Vec::new();
        for s in &run.field.slices {
            for (k, &n) in s.nodes.iter().enumerate() {
                let mut r = vec![num(s.time), n.to_string()];
                r.extend(point_row(&nodes[n]));
                r.extend(nums(&s.extremal[k]));
                r.extend(nums(&s.gradient[k]));
                rows.push(r);
            }
        }
        out.write_csv("field.csv", &header, rows)?;

        let mut header = vec!["t".to_string()];
        header.extend(coord_header("x", dim));
        header.push("weight".into());
        let mut rows = Vec::new();
        for (t, m) in run.path.times.iter().zip(&run.path.measures) {
            for (a, w) in m.atoms().iter().zip(m.weights()) {
                let mut r = vec![num(*t)];
                r.extend(point_row(a));
                r.push(num(*w));
                rows.push(r);
            }
        }
        out.write_csv("mu_t.csv", &header, rows)?;

        let dir = out.subdir("particles")?;
        let mut header = vec!["t".to_string()];
        header.extend(coord_header("x", dim));
        let mut index_rows = Vec::new();
        for (k, p) in run.path.particles.iter().enumerate() {
            let name = format!("particle_{k:04}.csv");
            let times = p.curve.times();
            crate::output::write_csv(
                &dir.join(&name),
                &header,
                times.iter().enumerate().map(|(i, t)| {
                    let mut r = vec![num(*t)];
                    r.extend(nums(p.curve.knot(i)));
                    r
                }),
            )?;
            index_rows.push(vec![
                format!("particles/{name}"),
                p.source.to_string(),
                p.target.to_string(),
                num(p.mass),
            ]);
        }
        out.write_csv(
            "particles.csv",
            &["file".into(), "source".into(), "target".into(), "mass".into()],
            index_rows,
        )?;

        out.write_csv(
            "k_hat.csv",
            &["epsilon", "k_hat", "points"].map(String::from),
            run.lipschitz.iter().map(|e| {
                vec![
                    num(e.epsilon),
                    e.k_hat.map_or_else(|| "nan".into(), num),
                    e.points.to_string(),
                ]
            }),
        )?;
    }
    if cfg.output.json() {
        out.write_json(
            "transport.json",
            &TransportDump {
                solution: sol,
                path_times: &run.path.times,
                path_measures: &run.path.measures,
            },
        )?;
    }
    out.write_json("certificate.json", &run.certificate)?;
    log.line(format!(
        "duality gap {} slackness {} triangle max {}",
        run.certificate.duality_gap,
        run.certificate.slackness_max,
        run.certificate.triangle_defects.iter().map(|t| t.defect).fold(0.0, f64::max)
    ));
    log.line("done");
    Ok(run.certificate)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatherReport {
    pub alpha: f64,
    pub grid: usize,
    pub dim: usize,
    pub invariance_defect: Option<f64>,
    /// Largest `‖v − v′‖ / d(x, x′)` over atom pairs of `m₀`.
    pub graph_constant: Option<f64>,
    pub graph_bound: Option<f64>,
    pub graph_passed: bool,
    pub marginal_residual: f64,
    pub alpha_t: AlphaTReport,
    pub solution: MatherSolution,
}

/// `α`, `m₀`, diagnostics and the `α_T` report.
pub fn run_mather(cfg: &RunConfig, cache: Option<&CostCache>, log: Option<&RunLog>) -> CliResult<MatherReport> {
    let grid = &cfg.problem.grid;
    let opts = &cfg.solver.action;
    let (solution, stats) = mather::solve(&cfg.spec, grid, opts, cfg.solver.steps_per_unit, cache)?;
    if let Some(l) = log {
        log_cache(l, "c_0^1 on the grid", stats);
        l.line(format!("alpha {} support {}", solution.alpha, solution.support.len()));
    }
    let alpha_t = mather::alpha_t_check(&cfg.spec, grid, &cfg.problem.periods, opts, cache)?;
    let graph = solution.diagnostics.graph.clone();
    Ok(MatherReport {
        alpha: solution.alpha,
        grid: grid.n_per_axis(),
        dim: grid.dim(),
        invariance_defect: solution.diagnostics.invariance_defect,
        graph_constant: graph.as_ref().and_then(|g| g.max_ratio),
        graph_bound: graph.as_ref().and_then(|g| g.k_bound),
        graph_passed: graph.as_ref().is_none_or(|g| g.passed),
        marginal_residual: solution.diagnostics.marginal_residual,
        alpha_t,
        solution,
    })
}

pub fn cmd_mather(cfg: &RunConfig) -> CliResult<MatherReport> {
    let (out, log, cache) = open(cfg, "mather")?;
    let report = run_mather(cfg, Some(&cache), Some(&log))?;
    let dim = report.dim;
    if cfg.output.csv() {
        let mut header = coord_header("x", dim);
        header.extend(coord_header("v", dim));
        header.push("mass".into());
        out.write_csv(
            "m0.csv",
            &header,
            report.solution.m0.iter().map(|a| {
                let mut r = nums(&a.x);
                r.extend(nums(&a.v));
                r.push(num(a.mass));
                r
            }),
        )?;
        let mut header = coord_header("x", dim);
        header.push("weight".into());
        let mu = &report.solution.mu;
        out.write_csv(
            "mu.csv",
            &header,
            mu.atoms().iter().zip(mu.weights()).map(|(a, w)| {
                let mut r = point_row(a);
                r.push(num(*w));
                r
            }),
        )?;
        out.write_csv(
            "alpha_t.csv",
            &["T".into(), "alpha_T".into()],
            report.alpha_t.values.iter().map(|(t, a)| vec![t.to_string(), num(*a)]),
        )?;
    }
    out.write_json("mather.json", &report)?;
    log.line("done");
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_indices_are_increasing_and_seeded() {
        let a = triangle_indices(3, 4, 9);
        assert_eq!(&a[..3], &[(0, 1, 4), (0, 2, 4), (0, 3, 4)]);
        assert!(a.iter().all(|&(i, j, k)| i < j && j < k && k <= 4));
        assert_eq!(a, triangle_indices(3, 4, 9));
        assert_eq!(triangle_indices(1, 5, 0), vec![(0, 1, 2)]);
    }
}
