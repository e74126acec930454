//! Batch runner: subcommands, config resolution, CSV artifacts and the run
//! manifest.
//!
//! Settings come from built-in defaults, then an optional `key = value` file
//! (`--config`), then command-line flags. Every run writes `manifest.txt` and
//! `results.csv` into the output directory; the manifest records the resolved
//! settings, the crate version and each gate with its threshold.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::blowup::{self, BlowupReport};
use crate::bubble::BubbleProfile;
use crate::constants::{b0_lower_bound, bubble_scale_constant, critical_exponent, k_opt, k_opt_inv, Params};
use crate::error::{Error, Result};
use crate::expansion::{self, FitOptions};
use crate::geometry::{ManifoldModel, ModelKind};
use crate::radial::{build_grid, write_grid_csv};
use crate::solver::{self, GridPolicy, MinimizationResult, SolverOptions, SweepOptions};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_GATE_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// Flat chart radius in units of the bubble scale `k` when none is given.
pub const DEFAULT_FLAT_RADIUS: f64 = 1e3;
/// Rescaled window for the bubble comparison and the tail, in units of μ.
pub const BLOWUP_WINDOW: f64 = 5.0;
pub const TAIL_WINDOW: f64 = 10.0;

#[derive(Parser, Debug)]
#[command(name = "hslab", version, about = "Sharp Hardy-Sobolev experiments on radial model manifolds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Subcommand, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    /// Critical exponent, optimal constant and bubble scale.
    Constants,
    /// Bubble normalization, energy and PDE residual on `nodes/4`, `nodes/2`
    /// and `nodes` grid points.
    BubbleCheck,
    /// Minimize the quotient for one α.
    Minimize,
    /// Minimize over an increasing α list, with blow-up diagnostics.
    Sweep,
    /// Blow-up report of a sweep, gated on the concentration thresholds.
    Blowup,
    /// Fit the test-function expansion at one B.
    Expansion,
    /// Bisection for the smallest admissible B in the radial class.
    B0Search,
}

impl Command {
    pub fn label(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::BubbleCheck => "bubble-check",
            Command::Minimize => "minimize",
            Command::Sweep => "sweep",
            Command::Blowup => "blowup",
            Command::Expansion => "expansion",
            Command::B0Search => "b0-search",
        }
    }
}

#[derive(Args, Debug, Default, Clone)]
pub struct Flags {
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub s: Option<f64>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Comma list `1,4,16` or geometric ladder `geom:START:RATIO:COUNT`.
    #[arg(long, global = true)]
    pub alphas: Option<String>,
    /// `sphere` or `flat`.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Flat chart radius (default 1000·k).
    #[arg(long, global = true)]
    pub flat_radius: Option<f64>,
    #[arg(long, global = true)]
    pub nodes: Option<usize>,
    #[arg(long, global = true)]
    pub grading: Option<f64>,
    /// Solver tolerance, or the λ tolerance of b0-search.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Comma list of decreasing ε values.
    #[arg(long, global = true)]
    pub eps_ladder: Option<String>,
    /// Second constant B for the expansion fit.
    #[arg(long, global = true)]
    pub b: Option<f64>,
    /// Exponent δ of the optional ε^{2+δ} column of the expansion fit.
    #[arg(long, global = true)]
    pub nuisance: Option<f64>,
    /// `key = value` file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

const KEYS: [&str; 14] = [
    "n",
    "s",
    "alpha",
    "alphas",
    "model",
    "flat-radius",
    "nodes",
    "grading",
    "tol",
    "out",
    "jobs",
    "eps-ladder",
    "b",
    "nuisance",
];

/// Fully resolved settings of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub params: Params,
    pub model: String,
    pub flat_radius: f64,
    pub nodes: usize,
    pub grading: f64,
    pub tol: f64,
    pub alphas: Vec<f64>,
    pub eps_ladder: Option<Vec<f64>>,
    pub b: f64,
    pub nuisance: Option<f64>,
    pub out: PathBuf,
    pub jobs: usize,
}

fn config_error(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Reads a `key = value` file. Blank lines and `#` comments are skipped.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(config_error(line, format!("line {}: expected `key = value`", i + 1)));
        };
        let key = key.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(config_error(&key, format!("line {}: unknown key", i + 1)));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(config_error(&key, format!("line {}: duplicate key", i + 1)));
        }
    }
    Ok(map)
}

fn pick<T: FromStr>(flag: Option<T>, file: &BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if flag.is_some() {
        return Ok(flag);
    }
    file.get(key)
        .map(|v| v.parse::<T>().map_err(|e| config_error(key, format!("cannot parse `{v}`: {e}"))))
        .transpose()
}

fn parse_list(key: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| config_error(key, format!("cannot parse `{}`: {e}", t.trim())))
        })
        .collect()
}

/// `1,4,16` or `geom:START:RATIO:COUNT`.
pub fn parse_alphas(text: &str) -> Result<Vec<f64>> {
    let Some(spec) = text.strip_prefix("geom:") else {
        return parse_list("alphas", text);
    };
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(config_error("alphas", "geometric ladder is `geom:START:RATIO:COUNT`"));
    }
    let start = parse_list("alphas", parts[0])?[0];
    let ratio = parse_list("alphas", parts[1])?[0];
    let count: usize = parts[2]
        .parse()
        .map_err(|e| config_error("alphas", format!("cannot parse count `{}`: {e}", parts[2])))?;
    if !(start > 0.0 && ratio > 1.0 && count > 0) {
        return Err(config_error("alphas", "need START > 0, RATIO > 1, COUNT > 0"));
    }
    Ok((0..count).map(|i| start * ratio.powi(i as i32)).collect())
}

impl RunConfig {
    pub fn resolve(command: Command, flags: &Flags) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| config_error("config", format!("cannot read {}: {e}", path.display())))?;
                parse_config_file(&text)?
            }
            None => BTreeMap::new(),
        };
        let n = pick(flags.n, &file, "n")?.ok_or_else(|| config_error("n", "missing"))?;
        let s = pick(flags.s, &file, "s")?.ok_or_else(|| config_error("s", "missing"))?;
        let alpha = pick(flags.alpha, &file, "alpha")?;
        if command == Command::Minimize && alpha.is_none() {
            return Err(config_error("alpha", "missing"));
        }
        let params =
            Params::new(n, s, alpha.unwrap_or(0.0)).map_err(|e| config_error("n", e.to_string()))?;
        let model = pick(flags.model.clone(), &file, "model")?.unwrap_or_else(|| "sphere".into());
        if !matches!(model.as_str(), "sphere" | "flat") {
            return Err(config_error("model", format!("unknown model `{model}`")));
        }
        let flat_radius = pick(flags.flat_radius, &file, "flat-radius")?
            .unwrap_or(DEFAULT_FLAT_RADIUS * bubble_scale_constant(&params));
        if !(flat_radius > 0.0 && flat_radius.is_finite()) {
            return Err(config_error("flat-radius", "must be positive"));
        }
        let default_nodes = if command == Command::BubbleCheck { 2048 } else { 4000 };
        let nodes = pick(flags.nodes, &file, "nodes")?.unwrap_or(default_nodes);
        let grading = pick(flags.grading, &file, "grading")?.unwrap_or(2.0);
        if !(grading >= 1.0 && grading.is_finite()) {
            return Err(config_error("grading", "must be at least 1"));
        }
        let default_tol = if command == Command::B0Search { 1e-4 } else { 1e-8 };
        let tol = pick(flags.tol, &file, "tol")?.unwrap_or(default_tol);
        if !(tol > 0.0 && tol < 1.0) {
            return Err(config_error("tol", "must lie in (0, 1)"));
        }
        let alphas = match pick(flags.alphas.clone(), &file, "alphas")? {
            Some(text) => parse_alphas(&text)?,
            None if matches!(command, Command::Sweep | Command::Blowup) => {
                return Err(config_error("alphas", "missing"));
            }
            None => Vec::new(),
        };
        if alphas.windows(2).any(|w| !(w[0] < w[1])) || alphas.iter().any(|a| !(*a >= 0.0)) {
            return Err(config_error("alphas", "must be nonnegative and strictly increasing"));
        }
        let eps_ladder = pick(flags.eps_ladder.clone(), &file, "eps-ladder")?
            .map(|t| parse_list("eps-ladder", &t))
            .transpose()?;
        let b = pick(flags.b, &file, "b")?.unwrap_or(0.0);
        if !(b >= 0.0 && b.is_finite()) {
            return Err(config_error("b", "must be nonnegative"));
        }
        let nuisance = pick(flags.nuisance, &file, "nuisance")?;
        if nuisance.is_some_and(|d| !(d >= 0.0)) {
            return Err(config_error("nuisance", "must be nonnegative"));
        }
        let out = pick(flags.out.clone(), &file, "out")?.unwrap_or_else(|| PathBuf::from("hslab-out"));
        let jobs = pick(flags.jobs, &file, "jobs")?.unwrap_or(1);
        if jobs == 0 {
            return Err(config_error("jobs", "must be at least 1"));
        }
        Ok(RunConfig {
            command,
            params,
            model,
            flat_radius,
            nodes,
            grading,
            tol,
            alphas,
            eps_ladder,
            b,
            nuisance,
            out,
            jobs,
        })
    }

    fn manifold(&self) -> Result<ManifoldModel> {
        ManifoldModel::from_label(&self.model, self.params.n(), self.flat_radius)
            .map_err(|e| config_error("model", e.to_string()))
    }

    fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.tol,
            ..SolverOptions::default()
        }
    }

    fn describe(&self) -> String {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut text = String::new();
        let mut line = |k: &str, v: String| writeln!(text, "{k} = {v}").unwrap();
        line("command", self.command.label().into());
        line("n", self.params.n().to_string());
        line("s", self.params.s().to_string());
        line("alpha", self.params.alpha().to_string());
        line("alphas", list(&self.alphas));
        line("model", self.model.clone());
        line("flat-radius", self.flat_radius.to_string());
        line("nodes", self.nodes.to_string());
        line("grading", self.grading.to_string());
        line("tol", self.tol.to_string());
        line("eps-ladder", self.eps_ladder.as_deref().map(list).unwrap_or_else(|| "default".into()));
        line("b", self.b.to_string());
        line("nuisance", self.nuisance.map(|d| d.to_string()).unwrap_or_else(|| "off".into()));
        line("out", self.out.display().to_string());
        line("jobs", self.jobs.to_string());
        text
    }
}

/// One pass/fail check of a subcommand.
#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub name: String,
    pub threshold: String,
    pub value: String,
    pub passed: bool,
}

impl Gate {
    fn new(name: &str, threshold: &str, value: impl ToString, passed: bool) -> Self {
        Gate {
            name: name.into(),
            threshold: threshold.into(),
            value: value.to_string(),
            passed,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub gates: Vec<Gate>,
    /// Human-readable lines printed after the run.
    pub summary: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_profiles(dir: &Path, runs: &[MinimizationResult]) -> Result<()> {
    for r in runs {
        let path = dir.join(format!("profile_{}.csv", r.alpha));
        write_grid_csv(r.u.grid(), Some(r.u.values()), create(&path)?)?;
    }
    Ok(())
}

fn run_constants(cfg: &RunConfig) -> Result<Outcome> {
    let p = &cfg.params;
    let values = [
        ("critical_exponent", critical_exponent(p)),
        ("k_opt", k_opt(p)),
        ("k_opt_inv", k_opt_inv(p)),
        ("bubble_scale", bubble_scale_constant(p)),
    ];
    let mut w = csv::Writer::from_writer(create(&cfg.out.join("results.csv"))?);
    w.write_record(["n", "s"].iter().copied().chain(values.iter().map(|v| v.0)))?;
    w.write_record(
        [p.n().to_string(), p.s().to_string()]
            .into_iter()
            .chain(values.iter().map(|v| v.1.to_string())),
    )?;
    w.flush().map_err(|e| Error::io("results.csv", e))?;
    Ok(Outcome {
        gates: Vec::new(),
        summary: values.iter().map(|(k, v)| format!("{k} = {v}")).collect(),
    })
}

const MASS_TOL: f64 = 1e-6;
const ENERGY_TOL: f64 = 1e-6;
const MIN_ORDER: f64 = 3.0;

fn run_bubble_check(cfg: &RunConfig) -> Result<Outcome> {
    let p = Params::new(cfg.params.n(), cfg.params.s(), 0.0)?;
    let b = BubbleProfile::unit(p);
    let m = ManifoldModel::flat_disk(p.n(), 50.0 * b.k())?;
    let mut rows = Vec::new();
    // `nodes` is the finest level; the two coarser ones halve it, keeping the
    // finest residual above the rounding floor of the stencil.
    for level in (0..3).rev() {
        let g = build_grid(&m, &p, cfg.nodes >> level, cfg.grading)?;
        rows.push((g.count(), b.weighted_mass(&g)?, b.dirichlet_energy(&g)?, b.pde_residual(&g)?));
    }
    let mut w = csv::Writer::from_writer(create(&cfg.out.join("results.csv"))?);
    w.write_record(["nodes", "weighted_mass", "dirichlet_energy", "pde_residual", "observed_order"])?;
    let mut orders = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let order = if i == 0 { f64::NAN } else { (rows[i - 1].3 / r.3).log2() };
        if i > 0 {
            orders.push(order);
        }
        w.write_record([r.0.to_string(), r.1.to_string(), r.2.to_string(), r.3.to_string(), order.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("results.csv", e))?;
    let finest = rows.last().unwrap();
    let mass_err = (finest.1 - 1.0).abs();
    let energy_err = (finest.2 / k_opt_inv(&p) - 1.0).abs();
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Outcome {
        gates: vec![
            Gate::new("weighted_mass", "|mass - 1| <= 1e-6", mass_err, mass_err <= MASS_TOL),
            Gate::new("dirichlet_energy", "|energy*K - 1| <= 1e-6", energy_err, energy_err <= ENERGY_TOL),
            Gate::new("residual_order", "observed order >= 3", min_order, min_order >= MIN_ORDER),
        ],
        summary: rows
            .iter()
            .map(|r| format!("nodes {} mass {} energy {} residual {:e}", r.0, r.1, r.2, r.3))
            .collect(),
    })
}

fn run_minimize(cfg: &RunConfig) -> Result<Outcome> {
    let m = cfg.manifold()?;
    let grid = Arc::new(build_grid(&m, &cfg.params, cfg.nodes, cfg.grading)?);
    let r = solver::minimize(grid, &cfg.params, &cfg.solver_options())?;
    solver::write_run_csv(std::slice::from_ref(&r), create(&cfg.out.join("results.csv"))?)?;
    write_profiles(&cfg.out, std::slice::from_ref(&r))?;
    Ok(Outcome {
        gates: vec![Gate::new("converged", "relative lambda change < tol", r.converged, r.converged)],
        summary: vec![format!(
            "alpha {} lambda {} lambda*K {} mu {} iterations {}",
            r.alpha,
            r.lambda,
            r.lambda * k_opt(&cfg.params),
            r.mu,
            r.iterations
        )],
    })
}

fn sweep_runs(cfg: &RunConfig, outcome: &mut Outcome) -> Result<Vec<MinimizationResult>> {
    let m = cfg.manifold()?;
    let opts = SweepOptions {
        policy: GridPolicy {
            count: cfg.nodes,
            grading: cfg.grading,
            ..GridPolicy::default()
        },
        solver: cfg.solver_options(),
        warm_start: cfg.jobs == 1,
        jobs: cfg.jobs,
    };
    let mut runs = Vec::new();
    let mut failures = 0;
    for (alpha, r) in cfg.alphas.iter().zip(solver::sweep_alpha(&m, &cfg.params, &cfg.alphas, &opts)?) {
        match r {
            Ok(r) => runs.push(r),
            Err(e) => {
                failures += 1;
                outcome.summary.push(format!("alpha {alpha}: {e}"));
            }
        }
    }
    if runs.is_empty() {
        return Err(Error::SweepFailed(outcome.summary.join("; ")));
    }
    let converged = runs.iter().filter(|r| r.converged).count();
    outcome.gates.push(Gate::new(
        "runs_converged",
        "every alpha converges",
        format!("{converged}/{}", cfg.alphas.len()),
        failures == 0 && converged == runs.len(),
    ));
    Ok(runs)
}

fn reports(cfg: &RunConfig, runs: &[MinimizationResult], outcome: &mut Outcome) -> Vec<BlowupReport> {
    let mut out = Vec::new();
    for r in runs {
        match blowup::report(r, &cfg.params, BLOWUP_WINDOW, TAIL_WINDOW) {
            Ok(rep) => out.push(rep),
            Err(e) => outcome.summary.push(format!("alpha {}: no blow-up report: {e}", r.alpha)),
        }
    }
    out
}

fn strictly<T: Copy>(v: &[T], f: impl Fn(T, T) -> bool) -> bool {
    v.windows(2).all(|w| f(w[0], w[1]))
}

fn run_sweep(cfg: &RunConfig) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let runs = sweep_runs(cfg, &mut outcome)?;
    let lambdas: Vec<f64> = runs.iter().map(|r| r.lambda).collect();
    let mus: Vec<f64> = runs.iter().map(|r| r.mu).collect();
    outcome.gates.push(Gate::new(
        "lambda_increasing",
        "strictly increasing in alpha",
        strictly(&lambdas, |a, b| a < b),
        strictly(&lambdas, |a, b| a < b),
    ));
    outcome.gates.push(Gate::new(
        "mu_decreasing",
        "strictly decreasing in alpha",
        strictly(&mus, |a, b| a > b),
        strictly(&mus, |a, b| a > b),
    ));
    solver::write_run_csv(&runs, create(&cfg.out.join("results.csv"))?)?;
    let reps = reports(cfg, &runs, &mut outcome);
    blowup::write_blowup_csv(&reps, create(&cfg.out.join("blowup.csv"))?)?;
    write_profiles(&cfg.out, &runs)?;
    let k_inv = k_opt_inv(&cfg.params);
    outcome.summary.extend(
        runs.iter()
            .map(|r| format!("alpha {} lambda*K {} mu {:e}", r.alpha, r.lambda / k_inv, r.mu)),
    );
    Ok(outcome)
}

const DEVIATION_MAX: f64 = 5e-2;
const TAIL_MAX: f64 = 0.05;
const POINTWISE_FACTOR: f64 = 2.0;

fn run_blowup(cfg: &RunConfig) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let runs = sweep_runs(cfg, &mut outcome)?;
    let reps = reports(cfg, &runs, &mut outcome);
    blowup::write_blowup_csv(&reps, create(&cfg.out.join("results.csv"))?)?;
    write_profiles(&cfg.out, &runs)?;
    if let Some(last) = reps.last() {
        outcome.gates.push(Gate::new(
            "sup_deviation",
            "last <= 5e-2 on |X| <= 5",
            last.sup_deviation,
            last.sup_deviation <= DEVIATION_MAX,
        ));
        outcome.gates.push(Gate::new(
            "concentration_tail",
            "last <= 0.05 outside |X| = 10",
            last.concentration_tail,
            last.concentration_tail <= TAIL_MAX,
        ));
    }
    let pairs: Vec<(f64, f64)> = runs.iter().map(|r| (r.alpha, r.mu)).collect();
    match blowup::vanishing_a_fit(&pairs) {
        Ok(fit) => outcome.gates.push(Gate::new("alpha_mu2_slope", "log-log slope < 0", fit.slope, fit.vanishing)),
        Err(e) => outcome.summary.push(format!("alpha mu^2 fit skipped: {e}")),
    }
    let bound = runs.iter().map(|r| blowup::pointwise_bound(&r.u)).fold(0.0, f64::max);
    let limit = POINTWISE_FACTOR * BubbleProfile::unit(cfg.params).pointwise_sup();
    outcome.gates.push(Gate::new("pointwise_bound", "<= 2 x bubble sup", bound, bound <= limit));
    Ok(outcome)
}

fn run_expansion(cfg: &RunConfig) -> Result<Outcome> {
    let m = cfg.manifold()?;
    let ladder = cfg.eps_ladder.clone().unwrap_or_else(|| expansion::default_eps_ladder(&m));
    let opts = FitOptions { nuisance: cfg.nuisance };
    let fit = expansion::expansion_fit(&m, &cfg.params, cfg.b, &ladder, opts)?;
    let k_inv = k_opt_inv(&cfg.params);
    expansion::write_fit_csv(&fit, k_inv, create(&cfg.out.join("results.csv"))?)?;
    let critical = b0_lower_bound(&cfg.params, m.scalar_curvature_at_base());
    Ok(Outcome {
        gates: Vec::new(),
        summary: vec![
            format!("B {} fitted coefficient {} residual {:e}", cfg.b, fit.fitted_coeff, fit.fit_residual),
            format!("closed-form critical B {critical}"),
        ],
    })
}

const B0_FACTOR: f64 = 0.95;

fn run_b0_search(cfg: &RunConfig) -> Result<Outcome> {
    let m = cfg.manifold()?;
    let policy = GridPolicy {
        count: cfg.nodes,
        grading: cfg.grading,
        ..GridPolicy::default()
    };
    let e = expansion::b0_search(&m, &cfg.params, &policy, cfg.tol)?;
    let bound = if cfg.params.n() >= 4 {
        b0_lower_bound(&cfg.params, m.scalar_curvature_at_base())
    } else {
        0.0
    };
    let mut w = csv::Writer::from_writer(create(&cfg.out.join("results.csv"))?);
    w.write_record(["b_low", "b_high", "lambda_at_b", "iterations", "lower_bound"])?;
    w.write_record([
        e.b_low.to_string(),
        e.b_high.to_string(),
        e.lambda_at_b.to_string(),
        e.iterations.to_string(),
        bound.to_string(),
    ])?;
    w.flush().map_err(|e| Error::io("results.csv", e))?;
    let mut gates = Vec::new();
    if cfg.params.n() >= 4 && m.kind() == ModelKind::Sphere {
        gates.push(Gate::new(
            "b_high_vs_bound",
            "b_high >= 0.95 x curvature bound",
            e.b_high / bound,
            e.b_high >= B0_FACTOR * bound,
        ));
    }
    Ok(Outcome {
        gates,
        summary: vec![format!("B in [{}, {}], curvature bound {bound}", e.b_low, e.b_high)],
    })
}

fn write_manifest(cfg: &RunConfig, outcome: &Outcome) -> Result<()> {
    let mut text = format!("hslab {}\n", env!("CARGO_PKG_VERSION"));
    text.push_str(&cfg.describe());
    for g in &outcome.gates {
        writeln!(
            text,
            "gate {}: {} (value {}) {}",
            g.name,
            g.threshold,
            g.value,
            if g.passed { "PASS" } else { "FAIL" }
        )
        .unwrap();
    }
    let path = cfg.out.join("manifest.txt");
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// Executes the subcommand and writes its artifacts.
pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    fs::create_dir_all(&cfg.out)
        .map_err(|e| config_error("out", format!("cannot create {}: {e}", cfg.out.display())))?;
    let outcome = match cfg.command {
        Command::Constants => run_constants(cfg),
        Command::BubbleCheck => run_bubble_check(cfg),
        Command::Minimize => run_minimize(cfg),
        Command::Sweep => run_sweep(cfg),
        Command::Blowup => run_blowup(cfg),
        Command::Expansion => run_expansion(cfg),
        Command::B0Search => run_b0_search(cfg),
    }?;
    write_manifest(cfg, &outcome)?;
    Ok(outcome)
}

/// Exit status for a failed run: input problems are config errors,
/// everything else is a numeric failure.
pub fn error_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. }
        | Error::Io { .. }
        | Error::Domain(_)
        | Error::InvalidParameter(_)
        | Error::EpsTooLarge { .. }
        | Error::TooFewPoints { .. }
        | Error::WindowExceedsChart { .. } => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

/// Parses arguments, runs, prints the outcome and returns the exit status.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
        }
    };
    let cfg = match RunConfig::resolve(cli.command, &cli.flags) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match run(&cfg) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for g in &outcome.gates {
                println!("{} {}: {} ({})", if g.passed { "PASS" } else { "FAIL" }, g.name, g.value, g.threshold);
            }
            if outcome.passed() {
                EXIT_PASS
            } else {
                EXIT_GATE_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            error_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(n: usize, s: f64) -> Flags {
        Flags {
            n: Some(n),
            s: Some(s),
            ..Flags::default()
        }
    }

    #[test]
    fn config_file_parsing() {
        let map = parse_config_file("# comment\nn = 4\n\ns=1 # inline\neps_ladder = 0.1,0.05\n").unwrap();
        assert_eq!(map["n"], "4");
        assert_eq!(map["s"], "1");
        assert_eq!(map["eps-ladder"], "0.1,0.05");
        match parse_config_file("n = 4\nwidth = 3\n") {
            Err(Error::Config { key, message }) => {
                assert_eq!(key, "width");
                assert!(message.contains("line 2"));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_config_file("n 4").is_err());
        assert!(parse_config_file("n = 4\nn = 5").is_err());
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "n = 5\ns = 0.5\nnodes = 100\nmodel = flat\n").unwrap();
        let f = Flags {
            n: Some(4),
            config: Some(path),
            ..Flags::default()
        };
        let cfg = RunConfig::resolve(Command::Constants, &f).unwrap();
        assert_eq!(cfg.params.n(), 4);
        assert_eq!(cfg.params.s(), 0.5);
        assert_eq!(cfg.nodes, 100);
        assert_eq!(cfg.model, "flat");
    }

    #[test]
    fn errors_name_the_key() {
        let key_of = |cmd, f: &Flags| match RunConfig::resolve(cmd, f) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("{other:?}"),
        };
        assert_eq!(key_of(Command::Constants, &Flags::default()), "n");
        assert_eq!(key_of(Command::Minimize, &flags(4, 1.0)), "alpha");
        assert_eq!(key_of(Command::Sweep, &flags(4, 1.0)), "alphas");
        let bad_model = Flags {
            model: Some("torus".into()),
            ..flags(4, 1.0)
        };
        assert_eq!(key_of(Command::Constants, &bad_model), "model");
        let bad_alphas = Flags {
            alphas: Some("4,1".into()),
            ..flags(4, 1.0)
        };
        assert_eq!(key_of(Command::Sweep, &bad_alphas), "alphas");
        let bad_s = flags(4, 2.0);
        assert_eq!(key_of(Command::Constants, &bad_s), "n");
        let bad_tol = Flags {
            tol: Some(0.0),
            ..flags(4, 1.0)
        };
        assert_eq!(key_of(Command::Constants, &bad_tol), "tol");
    }

    #[test]
    fn alpha_ladders() {
        assert_eq!(parse_alphas("1,4,16").unwrap(), vec![1.0, 4.0, 16.0]);
        assert_eq!(parse_alphas("geom:1:4:5").unwrap(), vec![1.0, 4.0, 16.0, 64.0, 256.0]);
        assert!(parse_alphas("geom:1:4").is_err());
        assert!(parse_alphas("geom:1:0.5:3").is_err());
        assert!(parse_alphas("1,x").is_err());
    }

    #[test]
    fn defaults() {
        let cfg = RunConfig::resolve(Command::B0Search, &flags(4, 1.0)).unwrap();
        assert_eq!(cfg.tol, 1e-4);
        assert_eq!(cfg.model, "sphere");
        assert_eq!(cfg.nodes, 4000);
        let cfg = RunConfig::resolve(Command::BubbleCheck, &flags(3, 1.0)).unwrap();
        assert_eq!(cfg.nodes, 2048);
        assert_eq!(cfg.tol, 1e-8);
        let p = Params::new(3, 1.0, 0.0).unwrap();
        assert_eq!(cfg.flat_radius, DEFAULT_FLAT_RADIUS * bubble_scale_constant(&p));
    }

    #[test]
    fn error_codes() {
        assert_eq!(error_code(&config_error("n", "x")), EXIT_CONFIG);
        assert_eq!(error_code(&Error::ZeroFunction), EXIT_NUMERIC);
        assert_eq!(error_code(&Error::Divergence { steps: 1, lambda: 1.0 }), EXIT_NUMERIC);
    }

    #[test]
    fn manifest_records_settings_and_gates() {
        let dir = tempfile::tempdir().unwrap();
        let f = Flags {
            out: Some(dir.path().to_path_buf()),
            ..flags(4, 1.0)
        };
        let cfg = RunConfig::resolve(Command::Constants, &f).unwrap();
        let outcome = run(&cfg).unwrap();
        assert!(outcome.passed());
        let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        assert!(manifest.starts_with(&format!("hslab {}\n", env!("CARGO_PKG_VERSION"))));
        assert!(manifest.contains("command = constants\n"));
        assert!(manifest.contains("n = 4\n"));
        let results = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert!(results.starts_with("n,s,critical_exponent,k_opt,k_opt_inv,bubble_scale\n"));
    }
}
