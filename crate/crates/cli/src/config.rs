//! INI run configuration.
//!
//! ```ini
//! [spec]
//! kinetic = 1
//! potential = cosine
//! amplitude = 1
//! wavevector = 1
//!
//! [problem]
//! grid = 32
//! horizon = 1
//! mu0 = uniform:16
//! mu1 = file:target.csv
//!
//! [solver]
//! seed = 7
//!
//! [output]
//! directory = out
//! ```
//!
//! Relative paths resolve against the directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ini::Ini;
use lagrange_ot::action::ActionOptions;
use lagrange_ot::dynamics::{LagrangianConfig, LagrangianSpec, Potential, DEFAULT_STEPS_PER_UNIT};
use lagrange_ot::hamilton_jacobi::{DEFAULT_COST_ACCURACY, DEFAULT_MASK_TOLERANCE};
use lagrange_ot::instances;
use lagrange_ot::manifold::{GridSpec, TorusPoint};
use lagrange_ot::measure::DiscreteMeasure;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug)]
pub struct Problem {
    pub instance: Option<String>,
    pub horizon: f64,
    pub grid: GridSpec,
    pub mu0: Option<DiscreteMeasure>,
    pub mu1: Option<DiscreteMeasure>,
    /// Interior sample times of the interpolation.
    pub times: Vec<f64>,
    /// Number of interior Hamilton-Jacobi slices, at multiples of `T / (slices + 1)`.
    pub slices: usize,
    pub epsilons: Vec<f64>,
    pub periods: Vec<u32>,
    pub random_triples: usize,
}

#[derive(Clone, Debug)]
pub struct Solver {
    pub action: ActionOptions,
    pub steps_per_unit: usize,
    pub cost_accuracy: f64,
    pub mask_tolerance: f64,
    pub cache_dir: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Output {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Output {
    pub fn csv(&self) -> bool {
        self.formats.contains(&Format::Csv)
    }

    pub fn json(&self) -> bool {
        self.formats.contains(&Format::Json)
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub path: PathBuf,
    pub spec_config: LagrangianConfig,
    pub spec: LagrangianSpec,
    pub problem: Problem,
    pub solver: Solver,
    pub output: Output,
}

const SPEC_KEYS: &[&str] = &[
    "kinetic",
    "potential",
    "amplitude",
    "wavevector",
    "amplitude2",
    "wavevector2",
    "speed",
    "time_period",
];
const PROBLEM_KEYS: &[&str] = &[
    "instance",
    "horizon",
    "T",
    "grid",
    "mu0",
    "mu1",
    "times",
    "slices",
    "epsilons",
    "periods",
    "winding_range",
    "random_triples",
];
const SOLVER_KEYS: &[&str] = &[
    "knots_per_unit",
    "grad_tol",
    "max_descent_iters",
    "newton_switch",
    "max_newton_iters",
    "global_seed",
    "steps_per_unit",
    "cost_accuracy",
    "mask_tolerance",
    "cache_dir",
    "seed",
];
const OUTPUT_KEYS: &[&str] = &["directory", "formats"];

type Section = BTreeMap<String, String>;

fn cfg(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn parse<T: std::str::FromStr>(section: &str, key: &str, raw: &str) -> CliResult<T> {
    raw.trim()
        .parse()
        .map_err(|_| cfg(format!("[{section}] {key}: cannot parse {raw:?}")))
}

fn parse_list<T: std::str::FromStr>(section: &str, key: &str, raw: &str) -> CliResult<Vec<T>> {
    raw.split([',', ' ', '\t'])
        .filter(|s| !s.is_empty())
        .map(|s| parse(section, key, s))
        .collect()
}

fn positive(section: &str, key: &str, v: f64) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(cfg(format!("[{section}] {key} must be positive, got {v}")))
    }
}

struct Sections {
    spec: Section,
    problem: Section,
    solver: Section,
    output: Section,
}

fn read_sections(text: &str) -> CliResult<Sections> {
    let ini = Ini::load_from_str(text).map_err(|e| cfg(format!("malformed config: {e}")))?;
    let mut out = Sections {
        spec: Section::new(),
        problem: Section::new(),
        solver: Section::new(),
        output: Section::new(),
    };
    for (name, props) in ini.iter() {
        let (target, allowed) = match name {
            Some("spec") => (&mut out.spec, SPEC_KEYS),
            Some("problem") => (&mut out.problem, PROBLEM_KEYS),
            Some("solver") => (&mut out.solver, SOLVER_KEYS),
            Some("output") => (&mut out.output, OUTPUT_KEYS),
            None if props.is_empty() => continue,
            None => return Err(cfg("keys outside a section")),
            Some(other) => return Err(cfg(format!("unknown section [{other}]"))),
        };
        let section = name.unwrap_or_default();
        for (k, v) in props.iter() {
            if !allowed.contains(&k) {
                return Err(cfg(format!("unknown key {k:?} in [{section}]")));
            }
            target.insert(k.to_string(), v.to_string());
        }
    }
    Ok(out)
}

fn parse_potential(s: &Section) -> CliResult<Option<Potential>> {
    let Some(name) = s.get("potential") else {
        return Ok(None);
    };
    let amplitude = || -> CliResult<f64> {
        s.get("amplitude").map_or(Ok(1.0), |v| parse("spec", "amplitude", v))
    };
    let wavevector = |key: &str| -> CliResult<Vec<i32>> {
        s.get(key)
            .map_or(Ok(vec![1]), |v| parse_list("spec", key, v))
    };
    let p = match name.trim() {
        "zero" => Potential::Zero,
        "pendulum" => Potential::pendulum(),
        "cosine" => Potential::Cosine {
            amplitude: amplitude()?,
            wavevector: wavevector("wavevector")?,
        },
        "two_mode" => Potential::TwoMode {
            amplitude: amplitude()?,
            wavevector: wavevector("wavevector")?,
            amplitude2: s
                .get("amplitude2")
                .map_or(Ok(0.0), |v| parse("spec", "amplitude2", v))?,
            wavevector2: wavevector("wavevector2")?,
        },
        "traveling" => Potential::Traveling {
            amplitude: amplitude()?,
            wavevector: wavevector("wavevector")?,
            speed: s.get("speed").map_or(Ok(1.0), |v| parse("spec", "speed", v))?,
        },
        other => return Err(cfg(format!("[spec] unknown potential {other:?}"))),
    };
    Ok(Some(p))
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p.trim());
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads a measure CSV: one row per atom, columns `x1[,x2],weight`. A header
/// row is allowed when its first field is not numeric.
pub fn read_measure_csv(path: &Path, dim: usize) -> CliResult<DiscreteMeasure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| cfg(format!("{}: {e}", path.display())))?;
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| cfg(format!("{}: {e}", path.display())))?;
        if line == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if rec.len() != dim + 1 {
            return Err(cfg(format!(
                "{}: row {} has {} columns, expected {}",
                path.display(),
                line + 1,
                rec.len(),
                dim + 1
            )));
        }
        let vals: Vec<f64> = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| cfg(format!("{}: bad number {f:?}", path.display()))))
            .collect::<CliResult<_>>()?;
        atoms.push(lagrange_ot::manifold::wrap(&vals[..dim]).map_err(|e| cfg(e.to_string()))?);
        weights.push(vals[dim]);
    }
    DiscreteMeasure::normalized(atoms, weights).map_err(|e| cfg(format!("{}: {e}", path.display())))
}

fn parse_measure(base: &Path, raw: &str, grid: &GridSpec, key: &str) -> CliResult<DiscreteMeasure> {
    let raw = raw.trim();
    let (kind, arg) = raw.split_once(':').unwrap_or((raw, ""));
    let dim = grid.dim();
    let bad = |e: lagrange_ot::Error| cfg(format!("[problem] {key}: {e}"));
    match kind {
        "uniform" if arg.is_empty() => Ok(DiscreteMeasure::uniform_on_grid(grid)),
        "uniform" => {
            let n: usize = parse("problem", key, arg)?;
            Ok(DiscreteMeasure::uniform_on_grid(&GridSpec::new(n, dim).map_err(bad)?))
        }
        "dirac" => {
            let x: Vec<f64> = parse_list("problem", key, arg)?;
            if x.len() != dim {
                return Err(cfg(format!("[problem] {key}: dirac needs {dim} coordinates")));
            }
            Ok(DiscreteMeasure::dirac(lagrange_ot::manifold::wrap(&x).map_err(bad)?))
        }
        "sine_pushforward" if dim == 1 => {
            let (n, a) = arg
                .split_once(':')
                .ok_or_else(|| cfg(format!("[problem] {key}: expected sine_pushforward:N:amplitude")))?;
            instances::pushforward_sine(parse("problem", key, n)?, parse("problem", key, a)?).map_err(bad)
        }
        "file" => {
            let path = resolve(base, arg);
            if !path.is_file() {
                return Err(cfg(format!("[problem] {key}: no such file {}", path.display())));
            }
            read_measure_csv(&path, dim)
        }
        _ => Err(cfg(format!("[problem] {key}: unknown measure {raw:?}"))),
    }
}

fn check_dim(m: &DiscreteMeasure, dim: usize, key: &str) -> CliResult<()> {
    if m.dim() != dim {
        return Err(cfg(format!("[problem] {key} has dimension {}, spec has {dim}", m.dim())));
    }
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, path, &base)
    }

    pub fn from_str(text: &str, path: &Path, base: &Path) -> CliResult<Self> {
        let s = read_sections(text)?;

        let instance = match s.problem.get("instance").map(|v| v.trim()) {
            None => None,
            Some(name) => Some(match name {
                "two_atom" => instances::two_atom(),
                "dirac_pair" => instances::dirac_pair(),
                "uniform_pushforward" => instances::uniform_pushforward(),
                "pendulum" => instances::pendulum_transport(),
                other => return Err(cfg(format!("[problem] unknown instance {other:?}"))),
            }),
        };

        let mut spec_config = instance
            .as_ref()
            .map(|i| i.spec.config().clone())
            .unwrap_or(LagrangianConfig {
                kinetic: vec![1.0],
                potential: Potential::Zero,
                time_period: None,
            });
        if let Some(k) = s.spec.get("kinetic") {
            spec_config.kinetic = parse_list("spec", "kinetic", k)?;
        }
        if let Some(p) = parse_potential(&s.spec)? {
            spec_config.potential = p;
        }
        if let Some(tp) = s.spec.get("time_period") {
            spec_config.time_period = Some(positive("spec", "time_period", parse("spec", "time_period", tp)?)?);
        }
        let spec = LagrangianSpec::new(spec_config.clone()).map_err(|e| cfg(format!("[spec] {e}")))?;
        let dim = spec.dim();

        let p = &s.problem;
        let horizon_raw = p.get("horizon").or_else(|| p.get("T"));
        let horizon = match horizon_raw {
            Some(v) => positive("problem", "horizon", parse("problem", "horizon", v)?)?,
            None => instance.as_ref().map_or(1.0, |i| i.horizon),
        };
        let n: usize = p.get("grid").map_or(Ok(32), |v| parse("problem", "grid", v))?;
        let grid = GridSpec::new(n, dim).map_err(|e| cfg(format!("[problem] grid: {e}")))?;
        let mut mu0 = instance.as_ref().map(|i| i.mu0.clone());
        let mut mu1 = instance.as_ref().map(|i| i.mu1.clone());
        if let Some(v) = p.get("mu0") {
            mu0 = Some(parse_measure(base, v, &grid, "mu0")?);
        }
        if let Some(v) = p.get("mu1") {
            mu1 = Some(parse_measure(base, v, &grid, "mu1")?);
        }
        for (m, key) in [(&mu0, "mu0"), (&mu1, "mu1")] {
            if let Some(m) = m {
                check_dim(m, dim, key)?;
            }
        }
        let times: Vec<f64> = match p.get("times") {
            Some(v) => parse_list("problem", "times", v)?,
            None => vec![0.25 * horizon, 0.5 * horizon, 0.75 * horizon],
        };
        if times.is_empty() || times.iter().any(|&t| !(t > 0.0 && t < horizon)) || times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(cfg("[problem] times must be nonempty and increase strictly inside (0, horizon)"));
        }
        let slices = p.get("slices").map_or(Ok(15), |v| parse("problem", "slices", v))?;
        if slices == 0 {
            return Err(cfg("[problem] slices must be positive"));
        }
        let epsilons: Vec<f64> = match p.get("epsilons") {
            Some(v) => parse_list("problem", "epsilons", v)?,
            None => vec![0.05 * horizon, 0.1 * horizon, 0.25 * horizon],
        };
        for &e in &epsilons {
            positive("problem", "epsilons", e)?;
        }
        let periods: Vec<u32> = match p.get("periods") {
            Some(v) => parse_list("problem", "periods", v)?,
            None => vec![1, 2],
        };
        if periods.is_empty() || periods.contains(&0) {
            return Err(cfg("[problem] periods must be integers >= 1"));
        }
        let random_triples = p
            .get("random_triples")
            .map_or(Ok(2), |v| parse("problem", "random_triples", v))?;

        let mut action = ActionOptions::default();
        if let Some(v) = p.get("winding_range") {
            action.winding_range = parse("problem", "winding_range", v)?;
        }
        let sv = &s.solver;
        if let Some(v) = sv.get("knots_per_unit") {
            action.knots_per_unit = parse("solver", "knots_per_unit", v)?;
            if action.knots_per_unit == 0 {
                return Err(cfg("[solver] knots_per_unit must be positive"));
            }
        }
        if let Some(v) = sv.get("grad_tol") {
            action.grad_tol = positive("solver", "grad_tol", parse("solver", "grad_tol", v)?)?;
        }
        if let Some(v) = sv.get("newton_switch") {
            action.newton_switch = positive("solver", "newton_switch", parse("solver", "newton_switch", v)?)?;
        }
        if let Some(v) = sv.get("max_descent_iters") {
            action.max_descent_iters = parse("solver", "max_descent_iters", v)?;
        }
        if let Some(v) = sv.get("max_newton_iters") {
            action.max_newton_iters = parse("solver", "max_newton_iters", v)?;
        }
        if let Some(v) = sv.get("global_seed") {
            action.global_seed = parse("solver", "global_seed", v)?;
        }
        let steps_per_unit = sv
            .get("steps_per_unit")
            .map_or(Ok(DEFAULT_STEPS_PER_UNIT), |v| parse("solver", "steps_per_unit", v))?;
        if steps_per_unit == 0 {
            return Err(cfg("[solver] steps_per_unit must be positive"));
        }
        let cost_accuracy = match sv.get("cost_accuracy") {
            Some(v) => positive("solver", "cost_accuracy", parse("solver", "cost_accuracy", v)?)?,
            None => DEFAULT_COST_ACCURACY,
        };
        let mask_tolerance = match sv.get("mask_tolerance") {
            Some(v) => positive("solver", "mask_tolerance", parse("solver", "mask_tolerance", v)?)?,
            None if sv.contains_key("cost_accuracy") => 10.0 * cost_accuracy,
            None => DEFAULT_MASK_TOLERANCE,
        };
        let seed = sv.get("seed").map_or(Ok(0), |v| parse("solver", "seed", v))?;

        let directory = resolve(base, s.output.get("directory").map_or("out", String::as_str));
        let cache_dir = sv.get("cache_dir").map(|v| resolve(base, v));
        let formats = match s.output.get("formats") {
            None => vec![Format::Csv, Format::Json],
            Some(v) => v
                .split([',', ' '])
                .filter(|f| !f.is_empty())
                .map(|f| match f {
                    "csv" => Ok(Format::Csv),
                    "json" => Ok(Format::Json),
                    other => Err(cfg(format!("[output] unknown format {other:?}"))),
                })
                .collect::<CliResult<_>>()?,
        };

        Ok(RunConfig {
            path: path.to_path_buf(),
            spec_config,
            spec,
            problem: Problem {
                instance: instance.map(|i| i.name.to_string()),
                horizon,
                grid,
                mu0,
                mu1,
                times,
                slices,
                epsilons,
                periods,
                random_triples,
            },
            solver: Solver {
                action,
                steps_per_unit,
                cost_accuracy,
                mask_tolerance,
                cache_dir,
                seed,
            },
            output: Output { directory, formats },
        })
    }

    /// Cache directory: the configured one, else `<output>/cache`.
    pub fn cache_dir(&self) -> PathBuf {
        self.solver
            .cache_dir
            .clone()
            .unwrap_or_else(|| self.output.directory.join("cache"))
    }

    /// Interior Hamilton-Jacobi slice times.
    pub fn slice_times(&self) -> Vec<f64> {
        let k = self.problem.slices;
        (1..=k)
            .map(|i| i as f64 * self.problem.horizon / (k + 1) as f64)
            .collect()
    }

    pub fn measures(&self) -> CliResult<(&DiscreteMeasure, &DiscreteMeasure)> {
        match (&self.problem.mu0, &self.problem.mu1) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(cfg("[problem] mu0 and mu1 are required")),
        }
    }
}

/// Coarser grids give no usable potential gradient.
pub const MIN_MAP_GRID: usize = 8;

/// The grid whose nodes are exactly the atoms of `m`, if any.
pub fn as_grid(m: &DiscreteMeasure) -> Option<GridSpec> {
    let dim = m.dim();
    let n = (m.len() as f64).powf(1.0 / dim as f64).round() as usize;
    let grid = GridSpec::new(n, dim).ok()?;
    if grid.len() != m.len() || n < MIN_MAP_GRID {
        return None;
    }
    let nodes: Vec<TorusPoint> = grid.nodes();
    nodes
        .iter()
        .zip(m.atoms())
        .all(|(a, b)| lagrange_ot::manifold::distance(a, b) < 1e-12)
        .then_some(grid)
}
