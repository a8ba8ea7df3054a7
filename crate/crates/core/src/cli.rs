//! Command-line front end. `run` returns the process exit code:
//! 0 success, 1 validation error, 2 numerical failure.

use crate::experiments::{self, Check, ExperimentError, StudyConfig};
use crate::fem::{self, Expr, FemError, Mode, ProblemSpec, SolveOptions};
use crate::geometry::{build_tree, critical_ratio, make_config, theta0_holes, tree_to_json, tree_to_svg, IfsConfig};
use crate::meshing::{build_slit_mesh, MeshError, MeshOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "ramlab",
    version,
    about = "Ramified domains with prefractal interfaces: geometry, meshes, transmission problems and convergence studies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the prefractal tree and export it as JSON and SVG
    Geom(GeomArgs),
    /// Critical contraction ratio r* for an angle
    CriticalR(CriticalArgs),
    /// Build the slit mesh of a level and write it in text form
    Mesh(MeshArgs),
    /// Solve the level-n transmission problem
    Solve(SolveArgs),
    /// Run a level sweep with the enabled checks
    Study(StudyArgs),
    /// Run the built-in invariant suites
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct IfsArgs {
    /// Contraction ratio
    #[arg(long, default_value_t = 0.45)]
    pub r: f64,
    /// Rotation angle in radians
    #[arg(long, default_value_t = std::f64::consts::PI / 5.0)]
    pub theta: f64,
    /// Horizontal offset of the fixed translations
    #[arg(long, default_value_t = 0.7)]
    pub beta1: f64,
    /// Vertical offset of the fixed translations
    #[arg(long, default_value_t = 4.0)]
    pub beta2: f64,
}

impl IfsArgs {
    fn config(&self) -> Result<IfsConfig, Failure> {
        make_config(self.r, self.theta, self.beta1, self.beta2).map_err(Failure::validation)
    }
}

#[derive(Debug, Args)]
pub struct GeomArgs {
    #[command(flatten)]
    pub ifs: IfsArgs,
    /// Tree level n (generations 0..n-1)
    #[arg(long)]
    pub level: usize,
    /// JSON output path
    #[arg(long)]
    pub out: PathBuf,
    /// Optional SVG output path
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CriticalArgs {
    /// Rotation angle in radians
    #[arg(long)]
    pub theta: f64,
    /// Horizontal offset of the fixed translations
    #[arg(long, default_value_t = 0.7)]
    pub beta1: f64,
    /// Vertical offset of the fixed translations
    #[arg(long, default_value_t = 4.0)]
    pub beta2: f64,
    /// Bisection tolerance
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Subcritical,
    Critical,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Subcritical => Mode::Subcritical,
            ModeArg::Critical => Mode::CriticalTheta0,
        }
    }
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    #[command(flatten)]
    pub ifs: IfsArgs,
    /// Tree level n
    #[arg(long)]
    pub level: usize,
    /// Target mesh size of the reference cell
    #[arg(long, default_value_t = 0.25)]
    pub h: f64,
    /// Insert the strip lines of the flat-angle critical geometry
    #[arg(long)]
    pub critical: bool,
    /// Mesh output path (text format)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub ifs: IfsArgs,
    /// Tree level n
    #[arg(long, default_value_t = 3)]
    pub level: usize,
    /// Target mesh size of the reference cell
    #[arg(long, default_value_t = 0.25)]
    pub h: f64,
    /// Interface coefficient (> 0)
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Reaction coefficient (>= 0, > 0 in critical mode)
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    /// Source expression in x1, x2
    #[arg(long, default_value = "1")]
    pub f: String,
    /// Dirichlet datum on the base segment
    #[arg(long, default_value = "0")]
    pub u0: String,
    /// Problem mode
    #[arg(long, value_enum, default_value_t = ModeArg::Subcritical)]
    pub mode: ModeArg,
    /// Relative CG residual tolerance
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// CG iteration cap (default 20·sqrt(DOF))
    #[arg(long)]
    pub maxit: Option<usize>,
    /// Field output path (JSON)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Mesh output path (text format)
    #[arg(long)]
    pub mesh_out: Option<PathBuf>,
}

/// Every flag maps onto the StudyConfig field of the same name; flags that
/// are given override the config file, which overrides built-in defaults.
#[derive(Debug, Args)]
pub struct StudyArgs {
    /// StudyConfig JSON file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Contraction ratio
    #[arg(long)]
    pub r: Option<f64>,
    /// Rotation angle in radians
    #[arg(long)]
    pub theta: Option<f64>,
    /// Horizontal offset of the fixed translations
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Vertical offset of the fixed translations
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Levels, as "1..6" or "1,2,4"
    #[arg(long)]
    pub n_range: Option<String>,
    /// Reference level, must equal max(nRange)
    #[arg(long)]
    pub reference_level: Option<usize>,
    /// Target mesh size of the reference cell
    #[arg(long)]
    pub h: Option<f64>,
    /// Interface coefficient (> 0)
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Reaction coefficient (>= 0, > 0 in critical mode)
    #[arg(long)]
    pub beta: Option<f64>,
    /// Source expression in x1, x2
    #[arg(long)]
    pub f: Option<String>,
    /// Dirichlet datum on the base segment
    #[arg(long)]
    pub u0: Option<String>,
    /// Problem mode
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Comma list of energyBound, boundaryAverage, coercivity, poincare, spi (or "none")
    #[arg(long)]
    pub checks: Option<String>,
    /// SPI weight in (2r², 1)
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Background grid resolution per side
    #[arg(long)]
    pub grid: Option<usize>,
    /// Level of the μ quadrature
    #[arg(long)]
    pub mu_level: Option<usize>,
    /// Number of seeded SPI sample fields
    #[arg(long)]
    pub spi_samples: Option<usize>,
    /// Power iteration cap of the Poincaré estimate
    #[arg(long)]
    pub power_steps: Option<usize>,
    /// Seed of the sample fields
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV report path
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON report path
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// SVG plot path
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// all, geometry, measure, meshing, fem or experiments
    #[arg(long, default_value = "all")]
    pub suite: String,
}

/// Error with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub msg: String,
}

impl Failure {
    fn validation(e: impl std::fmt::Display) -> Self {
        Failure { code: 1, msg: e.to_string() }
    }
    fn numerical(e: impl std::fmt::Display) -> Self {
        Failure { code: 2, msg: e.to_string() }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Failure {
            code: if e.is_validation() { 1 } else { 2 },
            msg: e.to_string(),
        }
    }
}

impl From<FemError> for Failure {
    fn from(e: FemError) -> Self {
        ExperimentError::from(e).into()
    }
}

impl From<MeshError> for Failure {
    fn from(e: MeshError) -> Self {
        ExperimentError::from(e).into()
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), Failure> {
    std::fs::write(path, content).map_err(|e| Failure::numerical(format!("cannot write {}: {e}", path.display())))
}

pub fn parse_levels(s: &str) -> Result<Vec<usize>, String> {
    let bad = || format!("invalid level list '{s}'");
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

pub fn parse_checks(s: &str) -> Result<Vec<Check>, String> {
    if s.trim() == "none" {
        return Ok(vec![]);
    }
    s.split(',')
        .map(|t| {
            serde_json::from_value(serde_json::Value::String(t.trim().to_string()))
                .map_err(|_| format!("unknown check '{}'", t.trim()))
        })
        .collect()
}

/// Resolve the study configuration from the optional file and the flags.
pub fn study_config(a: &StudyArgs) -> Result<StudyConfig, Failure> {
    let mut sc = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::validation(format!("cannot read {}: {e}", p.display())))?;
            StudyConfig::from_json(&text)?
        }
        None => StudyConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = &a.$field { sc.$field = v.clone(); } )* };
    }
    set!(r, theta, beta1, beta2, h, alpha, beta, f, u0, kappa, grid, mu_level, spi_samples, power_steps, seed);
    if let Some(s) = &a.n_range {
        sc.n_range = parse_levels(s).map_err(Failure::validation)?;
    }
    if a.reference_level.is_some() {
        sc.reference_level = a.reference_level;
    }
    if let Some(m) = a.mode {
        sc.mode = m.into();
    }
    if let Some(c) = &a.checks {
        sc.checks = parse_checks(c).map_err(Failure::validation)?;
    }
    if a.csv.is_some() {
        sc.outputs.csv = a.csv.clone();
    }
    if a.json.is_some() {
        sc.outputs.json = a.json.clone();
    }
    if a.svg.is_some() {
        sc.outputs.svg = a.svg.clone();
    }
    Ok(sc)
}

fn geom(a: &GeomArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = a.ifs.config()?;
    let tree = build_tree(&cfg, a.level).map_err(Failure::validation)?;
    let holes = if cfg.is_theta0_critical() && a.level >= 1 {
        Some(theta0_holes(&cfg, a.level).map_err(Failure::validation)?)
    } else {
        None
    };
    let json = tree_to_json(&tree, holes.as_ref());
    write_file(&a.out, &serde_json::to_string_pretty(&json).expect("json"))?;
    if let Some(p) = &a.svg {
        write_file(p, &tree_to_svg(&tree, holes.as_ref()))?;
    }
    let _ = writeln!(
        out,
        "level {}: {} cells, {} interface segments, |Γⁿ| = {}",
        a.level,
        tree.cells.len(),
        tree.interface.len(),
        tree.total_interface_length
    );
    Ok(())
}

fn critical(a: &CriticalArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let r = critical_ratio(a.theta, a.beta1, a.beta2, a.tol).map_err(Failure::validation)?;
    let _ = writeln!(out, "{r}");
    Ok(())
}

fn mesh(a: &MeshArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = a.ifs.config()?;
    let m = build_slit_mesh(
        &cfg,
        a.level,
        &MeshOptions {
            h: a.h,
            domain: None,
            critical: a.critical,
        },
    )?;
    write_file(&a.out, &m.to_text())?;
    let _ = writeln!(
        out,
        "level {}: {} vertices, {} dofs, {} triangles",
        a.level,
        m.vertices.len(),
        m.dof_count(),
        m.triangles.len()
    );
    Ok(())
}

fn solve(a: &SolveArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = a.ifs.config()?;
    let spec = ProblemSpec::new(
        &cfg,
        a.alpha,
        a.beta,
        Expr::parse(&a.f).map_err(Failure::validation)?,
        Expr::parse(&a.u0).map_err(Failure::validation)?,
        a.mode.into(),
        a.level,
    )?;
    let m = build_slit_mesh(
        &cfg,
        a.level,
        &MeshOptions {
            h: a.h,
            domain: None,
            critical: spec.mode == Mode::CriticalTheta0,
        },
    )?;
    let sol = fem::solve(&m, &spec, &SolveOptions { tol: a.tol, maxit: a.maxit })?;
    let u = &sol.u.values;
    let mesh_ref = match &a.mesh_out {
        Some(p) => {
            write_file(p, &m.to_text())?;
            p.display().to_string()
        }
        None => format!("level{}-h{}", a.level, a.h),
    };
    if let Some(p) = &a.out {
        write_file(p, &serde_json::to_string(&sol.u.to_json(&mesh_ref)).expect("json"))?;
    }
    let _ = writeln!(out, "dofs {}", m.dof_count());
    let _ = writeln!(out, "iterations {}", sol.iterations);
    let _ = writeln!(out, "residual {:e}", sol.rel_residual);
    let _ = writeln!(out, "energy {:.16e}", sol.system.bilinear(u, u));
    let _ = writeln!(out, "functional {:.16e}", sol.functional());
    Ok(())
}

fn study(a: &StudyArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let sc = study_config(a)?;
    let rep = experiments::run_study(&sc)?;
    let _ = write!(out, "{}", experiments::report_to_csv(&rep));
    let failed: Vec<String> = rep
        .rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("level {}: {e}", r.n)))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::numerical(failed.join("; ")))
    }
}

fn check(a: &CheckArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let results = experiments::run_suite(&a.suite)?;
    let mut bad = 0;
    for c in &results {
        let _ = writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        if !c.passed {
            bad += 1;
        }
    }
    if bad > 0 {
        return Err(Failure::numerical(format!("{bad} of {} checks failed", results.len())));
    }
    Ok(())
}

/// Dispatch a parsed invocation.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    match &cli.command {
        Command::Geom(a) => geom(a, out),
        Command::CriticalR(a) => critical(a, out),
        Command::Mesh(a) => mesh(a, out),
        Command::Solve(a) => solve(a, out),
        Command::Study(a) => study(a, out),
        Command::Check(a) => check(a, out),
    }
}

/// Parse `argv` (program name first), run, report errors on `err`.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.msg);
            f.code
        }
    }
}
