//! Command-line driver: solve builtin problems, compute multipliers, sweep
//! discretization parameters and inspect meshes.
//!
//! A run is described by a [`RunConfig`], read from TOML and overridden by
//! command-line flags. CSV outputs carry `#` header lines with a hash of the
//! resolved configuration, so identical configurations give identical files.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bvp::{logistic_orbit, solve_periodic, BvpOptions, BvpProblem, BvpResult, CollocationPoints, PhaseCondition};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, NodeFamily, NodeKind};
use crate::model::{
    builtin, linearize, plant_adapted_mesh, Block, Builtin, BuiltinParams, LinearPeriodicEquation, NonlinearProblem,
    PeriodicOrbit, PiecewiseSolution,
};
use crate::monodromy::{assemble, multipliers, AssembleOptions, BreakpointPolicy, Mode, MultiplierOptions, MultiplierSet};

/// Exit code for numerical failures (no convergence, singular systems).
pub const EXIT_NUMERICAL: i32 = 2;
/// Exit code for bad input or configuration.
pub const EXIT_CONFIG: i32 = 3;

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub bvp: BvpConfig,
    pub monodromy: MonodromyConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    pub params: std::collections::BTreeMap<String, f64>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self { name: "logistic".into(), params: Default::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BvpConfig {
    /// Pieces of the uniform BVP mesh when no mesh file is given; unset
    /// means 40, or the shipped adapted mesh for the Plant problems.
    pub pieces: Option<usize>,
    /// Unset means 4, or 5 for the Plant problems.
    pub degree: Option<usize>,
    pub tol: f64,
    pub max_iters: usize,
    pub collocation: String,
    /// `integral` or `fixed-component`.
    pub phase: String,
    /// Mesh for the BVP, rescaled to `[0, 1]`.
    pub mesh_file: Option<PathBuf>,
    /// Use this solution instead of solving.
    pub solution_file: Option<PathBuf>,
    /// Use the closed-form solution when the problem has one.
    pub exact: bool,
}

impl Default for BvpConfig {
    fn default() -> Self {
        Self {
            pieces: None,
            degree: None,
            tol: 1e-10,
            max_iters: 50,
            collocation: "gauss-legendre".into(),
            phase: "integral".into(),
            mesh_file: None,
            solution_file: None,
            exact: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MonodromyConfig {
    /// `solution-mesh`, `uniform:L`, `refined`, `refined:hmax` or `file:path`.
    pub mesh: String,
    pub degree: Option<usize>,
    pub nodes: String,
    pub mode: String,
    pub policy: String,
    pub quad_degree: Option<usize>,
    pub tol_stab: f64,
    pub tol_discard: f64,
}

impl Default for MonodromyConfig {
    fn default() -> Self {
        Self {
            mesh: "solution-mesh".into(),
            degree: None,
            nodes: "chebyshev-extrema".into(),
            mode: "direct".into(),
            policy: "merge".into(),
            quad_degree: None,
            tol_stab: 1e-6,
            tol_discard: 1e-12,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub solution: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse { line: 0, message: e.to_string() })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is serializable")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    fn params(&self) -> BuiltinParams {
        BuiltinParams(self.problem.params.clone())
    }
}

#[derive(Parser, Debug)]
#[command(name = "pwfloquet", version, about = "Floquet multipliers of periodic delay equations by piecewise collocation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compute a periodic solution and write it to a solution file.
    Solve(RunArgs),
    /// Print the approximate multipliers as CSV.
    Multipliers(RunArgs),
    /// Sweep M or L and report errors of a selected multiplier.
    Converge(ConvergeArgs),
    /// Describe a mesh file, optionally refining it.
    MeshInfo(MeshInfoArgs),
}

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// TOML configuration; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// logistic, quadratic-re, plant, plant-coupled, tent, ode or zero.
    #[arg(long)]
    pub problem: Option<String>,
    /// Extra problem parameter, `name=value`.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    /// Logistic rate, or the Plant recovery rate.
    #[arg(long)]
    pub r: Option<f64>,
    /// Quadratic renewal equation parameter.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Plant parameter `a`, or the rate of the `ode` toy.
    #[arg(long)]
    pub a: Option<f64>,
    /// Plant parameter `b`.
    #[arg(long)]
    pub b: Option<f64>,
    /// Plant feedback gain.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Delay.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Pieces of the uniform BVP mesh.
    #[arg(short = 'L', long)]
    pub pieces: Option<usize>,
    /// Degree of the BVP polynomials.
    #[arg(short = 'm', long)]
    pub degree: Option<usize>,
    /// Newton tolerance on the residual max-norm.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Newton iteration limit.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// BVP collocation points: gauss-legendre or chebyshev.
    #[arg(long)]
    pub collocation: Option<String>,
    /// Phase condition: integral or fixed-component.
    #[arg(long)]
    pub phase: Option<String>,
    /// BVP mesh file (rescaled to [0, 1]).
    #[arg(long)]
    pub mesh_file: Option<PathBuf>,
    /// Load this solution instead of solving.
    #[arg(long)]
    pub solution_file: Option<PathBuf>,
    /// Use the closed-form solution.
    #[arg(long)]
    pub exact: bool,
    /// Monodromy mesh: solution-mesh, uniform:L, refined[:hmax], file:path.
    #[arg(long)]
    pub mesh: Option<String>,
    /// Degree M of the monodromy collocation.
    #[arg(short = 'M', long = "collocation-degree")]
    pub collocation_degree: Option<usize>,
    /// Monodromy nodes: chebyshev (extrema) or uniform.
    #[arg(long)]
    pub nodes: Option<String>,
    /// direct, pencil or qz.
    #[arg(long)]
    pub mode: Option<String>,
    /// merge, strict or ignore.
    #[arg(long)]
    pub policy: Option<String>,
    /// Clenshaw–Curtis degree for distributed delays; default max(M, 5).
    #[arg(long)]
    pub quad_degree: Option<usize>,
    /// Solution file for `solve`, CSV file otherwise (default stdout).
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// `M=4..64`, `M=4,8,16` or `L=5,10,20`; the other size comes from the run options.
    #[arg(long)]
    pub sweep: String,
    /// dominant, dominant-nontrivial or trivial.
    #[arg(long, default_value = "dominant-nontrivial")]
    pub target: String,
    /// Reference value `re` or `re,im`; defaults to a finer self-computed run.
    #[arg(long)]
    pub reference: Option<String>,
}

#[derive(Args, Debug)]
pub struct MeshInfoArgs {
    pub mesh: PathBuf,
    /// Subdivide pieces longer than this.
    #[arg(long)]
    pub refine: Option<f64>,
    /// Write the (refined) mesh here.
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(String, f64)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::InvalidParameter(format!("expected NAME=VALUE, got `{s}`")))?;
    let v = v
        .trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("not a number in `{s}`")))?;
    Ok((k.trim().to_string(), v))
}

impl RunArgs {
    /// Configuration file (if any) with the flags applied on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::read(p)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.problem {
            cfg.problem.name = p.clone();
        }
        for s in &self.params {
            let (k, v) = parse_pair(s)?;
            cfg.problem.params.insert(k, v);
        }
        for (k, v) in [("r", self.r), ("gamma", self.gamma), ("a", self.a), ("b", self.b), ("eta", self.eta), ("tau", self.tau)] {
            if let Some(v) = v {
                cfg.problem.params.insert(k.into(), v);
            }
        }
        macro_rules! set {
            ($src:expr => $dst:expr) => {
                if let Some(v) = &$src {
                    $dst = v.clone().into();
                }
            };
        }
        set!(self.pieces => cfg.bvp.pieces);
        set!(self.degree => cfg.bvp.degree);
        set!(self.tol => cfg.bvp.tol);
        set!(self.max_iters => cfg.bvp.max_iters);
        set!(self.collocation => cfg.bvp.collocation);
        set!(self.phase => cfg.bvp.phase);
        set!(self.mesh_file => cfg.bvp.mesh_file);
        set!(self.solution_file => cfg.bvp.solution_file);
        if self.exact {
            cfg.bvp.exact = true;
        }
        set!(self.mesh => cfg.monodromy.mesh);
        set!(self.collocation_degree => cfg.monodromy.degree);
        set!(self.nodes => cfg.monodromy.nodes);
        set!(self.mode => cfg.monodromy.mode);
        set!(self.policy => cfg.monodromy.policy);
        set!(self.quad_degree => cfg.monodromy.quad_degree);
        Ok(cfg)
    }
}

/// Where the periodic orbit came from.
pub enum OrbitSource {
    Exact,
    File(PathBuf),
    Solved(BvpResult),
}

/// The problem of a run with its periodic orbit, or a linear equation.
pub enum Prepared {
    Nonlinear {
        problem: Arc<dyn NonlinearProblem>,
        orbit: Arc<dyn PeriodicOrbit>,
        /// Piecewise representation, when the orbit is not closed-form.
        solution: Option<PiecewiseSolution>,
        source: OrbitSource,
    },
    Linear(LinearPeriodicEquation),
}

fn is_plant(cfg: &RunConfig) -> bool {
    matches!(cfg.problem.name.as_str(), "plant" | "plant-coupled")
}

/// Partition of `[0, 1]` for the BVP.
fn bvp_mesh(cfg: &RunConfig) -> Result<Mesh> {
    match (&cfg.bvp.mesh_file, cfg.bvp.pieces) {
        (Some(p), _) => Mesh::read(p)?.mapped(0.0, 1.0),
        (None, Some(l)) => Mesh::uniform(0.0, 1.0, l),
        // a uniform mesh cannot resolve the relaxation oscillation cheaply
        (None, None) if is_plant(cfg) => plant_adapted_mesh()?.mapped(0.0, 1.0),
        (None, None) => Mesh::uniform(0.0, 1.0, 40),
    }
}

fn bvp_degree(cfg: &RunConfig) -> usize {
    cfg.bvp.degree.unwrap_or(if is_plant(cfg) { 5 } else { 4 })
}

fn bvp_options(cfg: &RunConfig) -> BvpOptions {
    BvpOptions { tol: cfg.bvp.tol, max_iters: cfg.bvp.max_iters, ..Default::default() }
}

/// Solve the periodic problem described by `cfg`.
pub fn solve_bvp(problem: Arc<dyn NonlinearProblem>, cfg: &RunConfig) -> Result<BvpResult> {
    let options = bvp_options(cfg);
    let collocation: CollocationPoints = cfg.bvp.collocation.parse()?;
    if problem.name() == "logistic" && cfg.bvp.mesh_file.is_none() && collocation == CollocationPoints::GaussLegendre && cfg.bvp.phase == "integral" {
        let r = cfg.params().get("r", 1.6);
        return logistic_orbit(r, cfg.bvp.pieces.unwrap_or(40), bvp_degree(cfg), &options);
    }
    let guess = problem.initial_guess().ok_or_else(|| {
        Error::InvalidParameter(format!(
            "no initial guess available for `{}` with these parameters; pass --solution-file",
            problem.name()
        ))
    })?;
    let mut bvp = BvpProblem::new(problem, bvp_mesh(cfg)?, bvp_degree(cfg), guess.clone())?;
    bvp.collocation = collocation;
    bvp.phase = match cfg.bvp.phase.as_str() {
        "integral" => PhaseCondition::Integral(guess.clone()),
        "fixed-component" => PhaseCondition::FixedComponent { component: 0, value: guess.eval(0.0)[0] },
        other => return Err(Error::InvalidParameter(format!("unknown phase condition `{other}`"))),
    };
    solve_periodic(&bvp, &options)
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let problem = match builtin(&cfg.problem.name, &cfg.params())? {
        Builtin::Linear(eq) => return Ok(Prepared::Linear(eq)),
        Builtin::Nonlinear(p) => p,
    };
    if cfg.bvp.exact {
        let orbit = problem.exact_solution().ok_or_else(|| {
            Error::InvalidParameter(format!("`{}` has no closed-form solution", problem.name()))
        })?;
        return Ok(Prepared::Nonlinear { problem, orbit, solution: None, source: OrbitSource::Exact });
    }
    if let Some(path) = &cfg.bvp.solution_file {
        let s = PiecewiseSolution::read(path)?;
        s.check_continuity()?;
        return Ok(Prepared::Nonlinear {
            problem,
            orbit: Arc::new(s.clone()),
            solution: Some(s),
            source: OrbitSource::File(path.clone()),
        });
    }
    let res = solve_bvp(problem.clone(), cfg)?;
    Ok(Prepared::Nonlinear {
        problem,
        orbit: Arc::new(res.solution.clone()),
        solution: Some(res.solution.clone()),
        source: OrbitSource::Solved(res),
    })
}

/// Monodromy mesh over `[0, ω]` from the `monodromy.mesh` setting.
pub fn monodromy_mesh(spec: &str, omega: f64, solution: Option<&PiecewiseSolution>) -> Result<Mesh> {
    let need_solution = || {
        solution.map(|s| s.mesh().clone()).ok_or_else(|| {
            Error::InvalidParameter(format!("mesh source `{spec}` needs a piecewise solution"))
        })
    };
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "solution-mesh" => need_solution(),
        "uniform" => {
            let l = arg
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad piece count in `{spec}`")))?;
            Mesh::uniform(0.0, omega, l)
        }
        "refined" => {
            let base = need_solution()?;
            let hmax = if arg.is_empty() {
                base.max_width() / 5.0
            } else {
                arg.parse().map_err(|_| Error::InvalidParameter(format!("bad hmax in `{spec}`")))?
            };
            base.refine(hmax)
        }
        "file" => Mesh::read(arg)?.mapped(0.0, omega),
        _ => Err(Error::InvalidParameter(format!("unknown mesh source `{spec}`"))),
    }
}

/// Everything `multipliers` reports.
pub struct MultiplierRun {
    pub set: MultiplierSet,
    pub mesh: Mesh,
    pub degree: usize,
    pub merged: Vec<f64>,
    pub equation: LinearPeriodicEquation,
}

fn linear_equation(prepared: &Prepared) -> Result<(LinearPeriodicEquation, Option<&PiecewiseSolution>)> {
    Ok(match prepared {
        Prepared::Linear(eq) => (eq.clone(), None),
        Prepared::Nonlinear { problem, orbit, solution, .. } => (linearize(problem.as_ref(), orbit.clone())?, solution.as_ref()),
    })
}

fn default_mesh_spec(cfg: &RunConfig, solution: Option<&PiecewiseSolution>) -> String {
    if cfg.monodromy.mesh == "solution-mesh" && solution.is_none() {
        "uniform:1".into()
    } else {
        cfg.monodromy.mesh.clone()
    }
}

fn run_multipliers_on(eq: &LinearPeriodicEquation, mesh: &Mesh, degree: usize, cfg: &RunConfig) -> Result<(MultiplierSet, Vec<f64>)> {
    let family = NodeFamily::new(cfg.monodromy.nodes.parse::<NodeKind>()?, degree)?;
    let opts = AssembleOptions {
        policy: cfg.monodromy.policy.parse::<BreakpointPolicy>()?,
        quad_degree: cfg.monodromy.quad_degree,
        ..Default::default()
    };
    let disc = assemble(eq, mesh, &family, &opts)?;
    let mopts = MultiplierOptions { tol_stab: cfg.monodromy.tol_stab, tol_discard: cfg.monodromy.tol_discard, ..Default::default() };
    let set = multipliers(&disc, cfg.monodromy.mode.parse::<Mode>()?, &mopts)?;
    Ok((set, disc.merged().to_vec()))
}

pub fn compute_multipliers(cfg: &RunConfig, prepared: &Prepared) -> Result<MultiplierRun> {
    let (eq, solution) = linear_equation(prepared)?;
    let spec = default_mesh_spec(cfg, solution);
    let mesh = monodromy_mesh(&spec, eq.period(), solution)?;
    let degree = cfg.monodromy.degree.or(solution.map(|s| s.degree())).unwrap_or(10);
    let (set, merged) = run_multipliers_on(&eq, &mesh, degree, cfg)?;
    Ok(MultiplierRun { set, mesh, degree, merged, equation: eq })
}

fn fmt_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{:.10e}", z.re)
    } else {
        format!("{:.10e}{:+.10e}i", z.re, z.im)
    }
}

fn header(cmd: &str, cfg: &RunConfig, extra: &[String]) -> String {
    let mut s = format!("# pwfloquet {cmd}\n# problem: {}\n# config-hash: {}\n", cfg.problem.name, cfg.hash());
    for e in extra {
        let _ = writeln!(s, "# {e}");
    }
    s
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<String> {
    let prepared = prepare(cfg)?;
    let Prepared::Nonlinear { problem, orbit, solution, source } = prepared else {
        return Err(Error::InvalidParameter(format!("`{}` is a linear equation; nothing to solve", cfg.problem.name)));
    };
    let solution = match solution {
        Some(s) => s,
        None => {
            // closed form: sample on the BVP mesh
            let mesh = bvp_mesh(cfg)?.mapped(0.0, orbit.period())?;
            PiecewiseSolution::from_orbit(orbit.as_ref(), mesh, NodeKind::Uniform, bvp_degree(cfg))?
        }
    };
    let path = cfg.output.solution.clone().unwrap_or_else(|| PathBuf::from(format!("{}_solution.txt", problem.name())));
    solution.write(&path)?;
    let mut summary = format!(
        "problem={} omega={:.10} pieces={} degree={} rho={:.4}",
        problem.name(),
        orbit.period(),
        solution.mesh().pieces(),
        solution.degree(),
        solution.ratio()
    );
    match source {
        OrbitSource::Solved(res) => {
            let _ = write!(summary, " iterations={} residual={:.3e}", res.iterations, res.residual);
        }
        OrbitSource::Exact => summary.push_str(" source=exact"),
        OrbitSource::File(p) => {
            let _ = write!(summary, " source={}", p.display());
        }
    }
    let _ = write!(summary, " output={}", path.display());
    Ok(summary)
}

pub fn cmd_multipliers(cfg: &RunConfig) -> Result<(String, String)> {
    let prepared = prepare(cfg)?;
    let run = compute_multipliers(cfg, &prepared)?;
    let mut extra = vec![
        format!("omega: {:?}", run.equation.period()),
        format!("mesh-pieces: {}", run.mesh.pieces()),
        format!("mesh-ratio: {:.6}", run.mesh.ratio()),
        format!("collocation-degree: {}", run.degree),
        format!("mode: {}", cfg.monodromy.mode),
    ];
    if !run.merged.is_empty() {
        extra.push(format!("merged-breakpoints: {:?}", run.merged));
    }
    let mut summary = String::new();
    if let Some(z) = run.set.dominant() {
        let _ = writeln!(summary, "dominant: {}", fmt_complex(z));
    }
    if let Some(z) = run.set.dominant_nontrivial() {
        let _ = writeln!(summary, "dominant nontrivial: {}", fmt_complex(z));
    }
    if let Some(e) = run.set.trivial_error() {
        let _ = writeln!(summary, "trivial error: {e:.3e}");
        extra.push(format!("trivial-error: {e:.6e}"));
    }
    let _ = write!(summary, "verdict: {}", run.set.verdict);
    extra.push(format!("verdict: {}", run.set.verdict));
    if is_neutral(&run.equation) {
        let note = "neutral renewal term: approximations of the essential spectrum can sit on or just outside the unit circle";
        let _ = write!(summary, "\nwarning: {note}");
        extra.push(format!("warning: {note}"));
    }
    let csv = format!("{}{}", header("multipliers", cfg, &extra), run.set.to_csv());
    Ok((csv, summary))
}

/// A renewal component fed by its own delayed value: no convergence theory applies.
fn is_neutral(eq: &LinearPeriodicEquation) -> bool {
    eq.discrete_terms()
        .iter()
        .any(|t| t.target == Block::Renewal && t.source == Block::Renewal && t.delay > 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Target {
    Dominant,
    DominantNontrivial,
    Trivial,
}

fn pick(set: &MultiplierSet, target: Target, near: Option<Complex64>) -> Option<Complex64> {
    match target {
        Target::Trivial => set.trivial_value().or_else(|| set.closest(Complex64::new(1.0, 0.0))),
        _ if near.is_some() => set.closest(near.unwrap()),
        Target::Dominant => set.dominant(),
        Target::DominantNontrivial => set.dominant_nontrivial(),
    }
}

/// `(axis, values)` from `M=4..64`, `M=4,8` or `L=5,10`.
pub fn parse_sweep(s: &str) -> Result<(char, Vec<usize>)> {
    let bad = || Error::InvalidParameter(format!("bad sweep `{s}`"));
    let (axis, rest) = s.split_once('=').ok_or_else(bad)?;
    let axis = match axis.trim() {
        "M" | "m" => 'M',
        "L" | "l" => 'L',
        _ => return Err(bad()),
    };
    let values: Vec<usize> = if let Some((a, b)) = rest.split_once("..") {
        let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        (a..=b).collect()
    } else {
        rest.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if values.is_empty() || values.contains(&0) {
        return Err(bad());
    }
    Ok((axis, values))
}

/// Least-squares slope of `-log(error)` against `log(size)`; zero errors are skipped.
pub fn fitted_order(sizes: &[f64], errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = sizes
        .iter()
        .zip(errors)
        .filter(|(_, e)| **e > 0.0 && e.is_finite())
        .map(|(s, e)| (s.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

pub fn cmd_converge(cfg: &RunConfig, sweep: &str, target: &str, reference: Option<&str>) -> Result<String> {
    let (axis, values) = parse_sweep(sweep)?;
    let target = match target {
        "dominant" => Target::Dominant,
        "dominant-nontrivial" => Target::DominantNontrivial,
        "trivial" => Target::Trivial,
        _ => return Err(Error::InvalidParameter(format!("unknown target `{target}`"))),
    };
    let prepared = prepare(cfg)?;
    let (eq, solution) = linear_equation(&prepared)?;
    let omega = eq.period();
    let base_l = match default_mesh_spec(cfg, solution).split_once(':') {
        Some(("uniform", l)) => l.parse().unwrap_or(1),
        _ => 1,
    };
    let base_m = cfg.monodromy.degree.unwrap_or(10);
    let mesh_for = |l: usize| -> Result<Mesh> {
        if axis == 'L' || cfg.monodromy.mesh.starts_with("uniform") || solution.is_none() {
            Mesh::uniform(0.0, omega, l)
        } else {
            monodromy_mesh(&cfg.monodromy.mesh, omega, solution)
        }
    };
    let sizes: Vec<(usize, usize)> = values.iter().map(|&v| if axis == 'M' { (base_l, v) } else { (v, base_m) }).collect();

    let (reference_value, provenance) = match reference {
        Some(r) => {
            let parts: Vec<f64> = r
                .split(',')
                .map(|p| p.trim().parse().map_err(|_| Error::InvalidParameter(format!("bad reference `{r}`"))))
                .collect::<Result<_>>()?;
            let z = Complex64::new(parts[0], parts.get(1).copied().unwrap_or(0.0));
            (z, format!("reference: {} (supplied)", fmt_complex(z)))
        }
        None if target == Target::Trivial => (Complex64::new(1.0, 0.0), "reference: 1 (trivial multiplier)".into()),
        None => {
            let (l, m) = sizes.iter().copied().max_by_key(|(l, m)| l * m).unwrap();
            let (rl, rm) = if axis == 'M' { (l, 2 * m) } else { (2 * l, m) };
            let (set, _) = run_multipliers_on(&eq, &mesh_for(rl)?, rm, cfg)?;
            let z = pick(&set, target, None).ok_or_else(|| Error::InvalidParameter("reference multiplier unavailable".into()))?;
            (z, format!("reference: {} (self-computed, L={rl} M={rm})", fmt_complex(z)))
        }
    };
    let near = (target != Target::Trivial).then_some(reference_value);

    let rows: Vec<Result<(usize, usize, Complex64)>> = sizes
        .par_iter()
        .map(|&(l, m)| {
            let (set, _) = run_multipliers_on(&eq, &mesh_for(l)?, m, cfg)?;
            let z = pick(&set, target, near).ok_or_else(|| Error::InvalidParameter("multiplier unavailable".into()))?;
            Ok((l, m, z))
        })
        .collect();
    let rows: Vec<(usize, usize, Complex64)> = rows.into_iter().collect::<Result<_>>()?;
    let errors: Vec<f64> = rows.iter().map(|r| (r.2 - reference_value).norm()).collect();
    let xs: Vec<f64> = rows.iter().map(|r| if axis == 'M' { r.1 } else { r.0 } as f64).collect();
    let order = fitted_order(&xs, &errors);
    let extra = vec![
        provenance,
        format!("sweep: {sweep}"),
        format!("fitted-order: {}", order.map_or("n/a".into(), |o| format!("{o:.4}"))),
    ];
    let mut csv = header("converge", cfg, &extra);
    csv.push_str("L,M,re,im,error\n");
    for (r, e) in rows.iter().zip(&errors) {
        let _ = writeln!(csv, "{},{},{:.16e},{:.16e},{:.6e}", r.0, r.1, r.2.re, r.2.im, e);
    }
    Ok(csv)
}

pub fn cmd_mesh_info(args: &MeshInfoArgs) -> Result<String> {
    let mesh = Mesh::read(&args.mesh)?;
    let describe = |m: &Mesh| {
        let min = m.widths().fold(f64::INFINITY, f64::min);
        format!(
            "pieces={} start={} end={} min_width={:.6e} max_width={:.6e} ratio={:.4}",
            m.pieces(),
            m.start(),
            m.end(),
            min,
            m.max_width(),
            m.ratio()
        )
    };
    let mut out = describe(&mesh);
    if let Some(h) = args.refine {
        let refined = mesh.refine(h)?;
        let _ = write!(out, "\nrefined(hmax={h}): {}", describe(&refined));
        if let Some(p) = &args.output {
            refined.write(p)?;
        }
    }
    Ok(out)
}

/// The reference mesh shipped for the Plant model, for the `mesh-info` help text.
pub fn shipped_plant_mesh() -> Result<Mesh> {
    plant_adapted_mesh()
}

/// Run a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Solve(args) => args.resolve().and_then(|cfg| {
            let cfg = RunConfig { output: OutputConfig { solution: args.output.clone().or(cfg.output.solution.clone()), ..cfg.output.clone() }, ..cfg };
            cmd_solve(&cfg).map(|s| println!("{s}"))
        }),
        Command::Multipliers(args) => args.resolve().and_then(|cfg| {
            let (csv, summary) = cmd_multipliers(&cfg)?;
            eprintln!("{summary}");
            emit(args.output.as_deref().or(cfg.output.csv.as_deref()), &csv)
        }),
        Command::Converge(c) => c.run.resolve().and_then(|cfg| {
            let csv = cmd_converge(&cfg, &c.sweep, &c.target, c.reference.as_deref())?;
            emit(c.run.output.as_deref().or(cfg.output.csv.as_deref()), &csv)
        }),
        Command::MeshInfo(args) => cmd_mesh_info(args).map(|s| println!("{s}")),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_CONFIG
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_parsing() {
        assert_eq!(parse_sweep("M=4..7").unwrap(), ('M', vec![4, 5, 6, 7]));
        assert_eq!(parse_sweep("L=5,10,20").unwrap(), ('L', vec![5, 10, 20]));
        assert!(parse_sweep("Q=1").is_err());
        assert!(parse_sweep("M=0,1").is_err());
    }

    #[test]
    fn fitted_order_of_power_law() {
        let xs = [4.0, 8.0, 16.0, 32.0];
        let es: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-2.0)).collect();
        assert!((fitted_order(&xs, &es).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn config_round_trip_and_hash() {
        let cfg = RunConfig::from_toml("[problem]\nname = \"tent\"\n[monodromy]\nmesh = \"uniform:2\"\ndegree = 40\n").unwrap();
        assert_eq!(cfg.monodromy.degree, Some(40));
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert!(RunConfig::from_toml("[problem]\nnmae = 1").is_err());
    }

    #[test]
    fn flags_override_config() {
        let args = RunArgs { problem: Some("quadratic-re".into()), gamma: Some(4.0), collocation_degree: Some(15), ..Default::default() };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.problem.name, "quadratic-re");
        assert_eq!(cfg.problem.params["gamma"], 4.0);
        assert_eq!(cfg.monodromy.degree, Some(15));
    }
}
