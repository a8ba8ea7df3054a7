//! Level sweeps, inequality checks and report export.

use crate::fem::{
    self, apply_dirichlet, assemble_with_coefficient, default_maxit, dot, lanczos_extremes, norm,
    sample, solve_cg, CoefficientField, Expr, FemError, Mode, ProblemSpec, SolveOptions,
    TriangleLocator,
};
use crate::geometry::{
    build_tree, default_domain, make_config, GeometryError, IfsConfig,
};
use crate::measure::{boundary_average_sq, integrate_mu, MeasureError, MuQuadrature, TraceSamples};
use crate::meshing::{build_slit_mesh, EdgeTag, MeshError, MeshOptions, SlitMesh};
use crate::point::{point_segment_dist, segment_segment_dist, BBox, Point};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid study configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("power iteration stalled: {0}")]
    IterationStall(String),
    #[error("denominator vanished for the sampled field")]
    ZeroDenominator,
    #[error("i/o failure on {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("report parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl ExperimentError {
    /// True for errors caused by bad input rather than numerics.
    pub fn is_validation(&self) -> bool {
        match self {
            ExperimentError::Config(_) | ExperimentError::Parse { .. } => true,
            ExperimentError::Geometry(_) => true,
            ExperimentError::Measure(MeasureError::InvalidArgument(_)) => true,
            ExperimentError::Mesh(MeshError::InvalidArgument(_) | MeshError::Parse { .. }) => true,
            ExperimentError::Fem(
                FemError::InvalidSpec(_)
                | FemError::InvalidArgument(_)
                | FemError::ModeMismatch(_)
                | FemError::Expr(_)
                | FemError::NonfiniteCoefficient(_),
            ) => true,
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Check {
    EnergyBound,
    BoundaryAverage,
    Coercivity,
    Poincare,
    Spi,
}

impl Check {
    pub const ALL: [Check; 5] = [
        Check::EnergyBound,
        Check::BoundaryAverage,
        Check::Coercivity,
        Check::Poincare,
        Check::Spi,
    ];
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Outputs {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub json: Option<PathBuf>,
    #[serde(default)]
    pub svg: Option<PathBuf>,
}

fn d_grid() -> usize {
    400
}
fn d_mu_level() -> usize {
    10
}
fn d_spi_samples() -> usize {
    20
}
fn d_power_steps() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct StudyConfig {
    pub r: f64,
    pub theta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub n_range: Vec<usize>,
    /// Must equal max(nRange) when given.
    #[serde(default)]
    pub reference_level: Option<usize>,
    pub h: f64,
    pub alpha: f64,
    pub beta: f64,
    pub f: String,
    pub u0: String,
    pub mode: Mode,
    pub checks: Vec<Check>,
    #[serde(default)]
    pub outputs: Outputs,
    pub kappa: f64,
    #[serde(default = "d_grid")]
    pub grid: usize,
    #[serde(default = "d_mu_level")]
    pub mu_level: usize,
    #[serde(default = "d_spi_samples")]
    pub spi_samples: usize,
    #[serde(default = "d_power_steps")]
    pub power_steps: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            r: 0.45,
            theta: std::f64::consts::PI / 5.0,
            beta1: 0.7,
            beta2: 4.0,
            n_range: (1..=6).collect(),
            reference_level: None,
            h: 0.25,
            alpha: 1.0,
            beta: 0.0,
            f: "1".into(),
            u0: "0".into(),
            mode: Mode::Subcritical,
            checks: Check::ALL.to_vec(),
            outputs: Outputs::default(),
            kappa: 0.6,
            grid: d_grid(),
            mu_level: d_mu_level(),
            spi_samples: d_spi_samples(),
            power_steps: d_power_steps(),
            seed: 0,
        }
    }
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Stable digest of the numerical content (outputs excluded).
    pub fn hash_hex(&self) -> String {
        let mut c = self.clone();
        c.outputs = Outputs::default();
        let mut h = DefaultHasher::new();
        serde_json::to_string(&c).expect("config serializes").hash(&mut h);
        format!("{:016x}", h.finish())
    }

    pub fn ifs(&self) -> Result<IfsConfig> {
        Ok(make_config(self.r, self.theta, self.beta1, self.beta2)?)
    }

    pub fn reference(&self) -> usize {
        self.n_range.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<IfsConfig> {
        let cfg = self.ifs()?;
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.n_range.is_empty() || self.n_range.contains(&0) {
            return bad("nRange must be a nonempty list of levels >= 1".into());
        }
        let mut sorted = self.n_range.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.n_range.len() {
            return bad("nRange contains duplicates".into());
        }
        let nmax = self.reference();
        if let Some(r) = self.reference_level {
            if r != nmax {
                return bad(format!("referenceLevel {r} must equal max(nRange) = {nmax}"));
            }
        }
        if !(self.h > 0.0 && self.h < 2.0) {
            return bad(format!("h = {} must lie in (0, 2)", self.h));
        }
        let lo = 2.0 * self.r * self.r;
        if !(self.kappa > lo && self.kappa < 1.0) {
            return bad(format!("kappa = {} must lie in ({lo}, 1)", self.kappa));
        }
        if self.grid < 2 {
            return bad("grid must be at least 2".into());
        }
        if self.checks.contains(&Check::Spi) && self.spi_samples == 0 {
            return bad("spiSamples must be positive".into());
        }
        // full problem validation at one level
        self.problem(&cfg, nmax)?;
        Ok(cfg)
    }

    pub fn problem(&self, cfg: &IfsConfig, n: usize) -> Result<ProblemSpec> {
        Ok(ProblemSpec::new(
            cfg,
            self.alpha,
            self.beta,
            Expr::parse(&self.f).map_err(FemError::from)?,
            Expr::parse(&self.u0).map_err(FemError::from)?,
            self.mode,
            n,
        )?)
    }

    pub fn mesh_options(&self) -> MeshOptions {
        MeshOptions {
            h: self.h,
            domain: None,
            critical: self.mode == Mode::CriticalTheta0,
        }
    }
}

/// One level of a study. Disabled checks and failed levels hold NaN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StudyRow {
    pub n: usize,
    pub dofs: usize,
    pub energy: f64,
    pub load: f64,
    pub bound_margin: f64,
    pub l2dist: f64,
    pub bavg: f64,
    pub muint: f64,
    pub poincare: f64,
    pub spi: f64,
    pub c0: f64,
    pub smallest_ritz: f64,
    pub iterations: usize,
    pub error: Option<String>,
}

impl StudyRow {
    fn failed(n: usize, msg: String) -> Self {
        StudyRow {
            n,
            dofs: 0,
            energy: f64::NAN,
            load: f64::NAN,
            bound_margin: f64::NAN,
            l2dist: f64::NAN,
            bavg: f64::NAN,
            muint: f64::NAN,
            poincare: f64::NAN,
            spi: f64::NAN,
            c0: f64::NAN,
            smallest_ritz: f64::NAN,
            iterations: 0,
            error: Some(msg),
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StudyReport {
    pub config_hash: String,
    pub runtime_ms: u128,
    pub reference_level: usize,
    pub rows: Vec<StudyRow>,
}

struct LevelData {
    row: StudyRow,
    grid_values: Vec<f64>,
    mu_values: Option<Vec<f64>>,
}

/// Cell-centred sampling grid over D.
pub fn background_grid(d: BBox, k: usize) -> Vec<Point> {
    let mut pts = Vec::with_capacity(k * k);
    for j in 0..k {
        for i in 0..k {
            pts.push(Point::new(
                d.min.x + (i as f64 + 0.5) / k as f64 * d.width(),
                d.min.y + (j as f64 + 0.5) / k as f64 * d.height(),
            ));
        }
    }
    pts
}

/// Tent lifting of the Dirichlet datum, supported in a band of half the
/// distance between Γ⁰ and the first-generation top sides.
pub struct TentLifting {
    u0: Expr,
    rho: f64,
}

impl TentLifting {
    pub fn new(cfg: &IfsConfig, u0: Expr) -> Self {
        let (p1, p2) = (Point::new(-1.0, 0.0), Point::new(1.0, 0.0));
        let d = (1..=2)
            .map(|i| segment_segment_dist(p1, p2, cfg.f(i, p1), cfg.f(i, p2)))
            .fold(f64::INFINITY, f64::min);
        TentLifting { u0, rho: 0.5 * d }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn eval(&self, x: Point) -> f64 {
        let d = point_segment_dist(x, Point::new(-1.0, 0.0), Point::new(1.0, 0.0));
        let w = (1.0 - d / self.rho).max(0.0);
        if w == 0.0 {
            return 0.0;
        }
        w * self.u0.eval(Point::new(x.x.clamp(-1.0, 1.0), 0.0))
    }
}

/// (1/|Γⁿ|)∫_{Γⁿ} u² for a nodal field, exact for the P1 trace.
pub fn fe_boundary_average_sq(mesh: &SlitMesh, u: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, b, t) in &mesh.edges {
        if let EdgeTag::Interface(_) = t {
            let l = mesh.dof_point(*a).dist(mesh.dof_point(*b));
            let (x, y) = (u[*a], u[*b]);
            s += l / 3.0 * (x * x + x * y + y * y);
        }
    }
    s / mesh.interface_length
}

fn solve_level(sc: &StudyConfig, cfg: &IfsConfig, n: usize, grid: &[Point], mu: Option<&MuQuadrature>) -> Result<LevelData> {
    let mesh = build_slit_mesh(cfg, n, &sc.mesh_options())?;
    let spec = sc.problem(cfg, n)?;
    let sol = fem::solve(&mesh, &spec, &SolveOptions::default())?;
    let u = &sol.u.values;
    let energy = sol.system.bilinear(u, u);
    let load = dot(&sol.system.b, u);
    let mut row = StudyRow::failed(n, String::new());
    row.error = None;
    row.dofs = mesh.dof_count();
    row.energy = energy;
    row.load = load;
    row.iterations = sol.iterations;
    if sc.checks.contains(&Check::EnergyBound) {
        let tent = TentLifting::new(cfg, spec.u0.clone());
        let w: Vec<f64> = (0..mesh.dof_count()).map(|d| tent.eval(mesh.dof_point(d))).collect();
        row.c0 = sol.system.functional(&w);
        row.bound_margin = row.c0 - (energy - 2.0 * load);
    }
    if sc.checks.contains(&Check::BoundaryAverage) {
        row.bavg = fe_boundary_average_sq(&mesh, u);
    }
    if sc.checks.contains(&Check::Coercivity) {
        let red = apply_dirichlet(&sol.system, &sol.system.dirichlet);
        row.smallest_ritz = lanczos_extremes(&red.a, 50).0;
    }
    if sc.checks.contains(&Check::Poincare) {
        row.poincare = estimate_poincare(&mesh, sc.power_steps, sc.seed ^ n as u64)?;
    }
    if sc.checks.contains(&Check::Spi) {
        row.spi = check_spi(cfg, n, sc.kappa, sc.spi_samples, sc.seed)?;
    }
    let loc = TriangleLocator::new(&mesh);
    let grid_values = grid
        .par_iter()
        .map(|&p| {
            sample(&loc, &mesh, &sol.u, p).ok_or(FemError::PointOutsideDomain { x: p.x, y: p.y })
        })
        .collect::<std::result::Result<Vec<f64>, FemError>>()?;
    let mu_values = match mu {
        Some(q) => Some(
            q.nodes
                .iter()
                .map(|&p| sample(&loc, &mesh, &sol.u, p).ok_or(FemError::PointOutsideDomain { x: p.x, y: p.y }))
                .collect::<std::result::Result<Vec<f64>, FemError>>()?,
        ),
        None => None,
    };
    Ok(LevelData {
        row,
        grid_values,
        mu_values,
    })
}

/// Solve every level, compare against the finest one and run the enabled checks.
pub fn run_study(sc: &StudyConfig) -> Result<StudyReport> {
    let start = Instant::now();
    let cfg = sc.validate()?;
    let nref = sc.reference();
    let mut levels = sc.n_range.clone();
    levels.sort_unstable();
    let grid = background_grid(default_domain(&cfg), sc.grid);
    let mu = MuQuadrature::new(&cfg, sc.mu_level);
    let results: Vec<(usize, Result<LevelData>)> = levels
        .par_iter()
        .map(|&n| {
            let q = (n == nref).then_some(&mu);
            (n, solve_level(sc, &cfg, n, &grid, q))
        })
        .collect();
    let cell = {
        let d = default_domain(&cfg);
        d.area() / (sc.grid * sc.grid) as f64
    };
    let reference = results
        .iter()
        .find(|(n, _)| *n == nref)
        .and_then(|(_, r)| r.as_ref().ok());
    let muint = reference
        .and_then(|l| l.mu_values.as_ref())
        .map(|v| mu.reduce(&v.iter().map(|x| x * x).collect::<Vec<_>>()))
        .unwrap_or(f64::NAN);
    let rows = results
        .iter()
        .map(|(n, r)| match r {
            Ok(l) => {
                let mut row = l.row.clone();
                row.l2dist = match reference {
                    Some(rf) => (l
                        .grid_values
                        .iter()
                        .zip(&rf.grid_values)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        * cell)
                        .sqrt(),
                    None => f64::NAN,
                };
                if sc.checks.contains(&Check::BoundaryAverage) {
                    row.muint = muint;
                }
                row
            }
            Err(e) => StudyRow::failed(*n, e.to_string()),
        })
        .collect();
    let report = StudyReport {
        config_hash: sc.hash_hex(),
        runtime_ms: start.elapsed().as_millis(),
        reference_level: nref,
        rows,
    };
    export_report(&report, &sc.outputs)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryAverageRow {
    pub n: usize,
    pub average: f64,
    pub mu_integral: f64,
    pub error: f64,
}

/// e_n = |(1/|Γⁿ|)∫_{Γⁿ}u² - ∫_Γ u² dμ| for an analytic u.
pub fn check_boundary_average(
    cfg: &IfsConfig,
    u: &Expr,
    n_range: &[usize],
    m_mu: usize,
) -> Result<Vec<BoundaryAverageRow>> {
    let target = integrate_mu(cfg, m_mu, |p| {
        let v = u.eval(p);
        v * v
    });
    n_range
        .iter()
        .map(|&n| {
            let tree = build_tree(cfg, n)?;
            let tr = TraceSamples::from_fn(&tree, 16, |p| u.eval(p));
            let avg = boundary_average_sq(&tree, &tr)?;
            Ok(BoundaryAverageRow {
                n,
                average: avg,
                mu_integral: target,
                error: (avg - target).abs(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyMargin {
    pub n: usize,
    pub c0: f64,
    pub margin: f64,
    pub holds: bool,
}

/// C₀ - (a_n(u_n,u_n) - 2∫f u_n) per solved level.
pub fn check_energy_bound(report: &StudyReport) -> Vec<EnergyMargin> {
    report
        .rows
        .iter()
        .filter(|r| r.ok())
        .map(|r| EnergyMargin {
            n: r.n,
            c0: r.c0,
            margin: r.bound_margin,
            holds: r.bound_margin >= -1e-8,
        })
        .collect()
}

fn assemble_poincare(mesh: &SlitMesh) -> Result<(fem::CsrMatrix, fem::CsrMatrix)> {
    let zero = Expr::constant(0.0);
    let stiff = ProblemSpec {
        alpha: 1.0,
        beta: 0.0,
        f: zero.clone(),
        u0: zero.clone(),
        mode: Mode::Subcritical,
        level: mesh.level,
    };
    let ones = CoefficientField {
        values: vec![1.0; mesh.triangles.len()],
    };
    // gradient part only: drop the interface term by using a zero-length scale
    let mut m0 = mesh.clone();
    m0.interface_length = 0.0;
    let k = assemble_with_coefficient(&m0, &stiff, ones.clone())?.a;
    let mut trips = Vec::with_capacity(k.nnz() + 4 * m0.edges.len());
    for i in 0..k.n {
        for (j, v) in k.row(i) {
            trips.push((i, j, v));
        }
    }
    for (a, b, t) in &mesh.edges {
        if *t == EdgeTag::BaseDirichlet {
            let l = mesh.dof_point(*a).dist(mesh.dof_point(*b));
            let e = fem::edge_mass(l);
            let d = [*a, *b];
            for i in 0..2 {
                for j in 0..2 {
                    trips.push((d[i], d[j], e[i][j]));
                }
            }
        }
    }
    let kk = fem::CsrMatrix::from_triplets(k.n, trips);
    let mass_spec = ProblemSpec {
        beta: 1.0,
        ..stiff
    };
    let zeros = CoefficientField {
        values: vec![0.0; mesh.triangles.len()],
    };
    let m = assemble_with_coefficient(&m0, &mass_spec, zeros)?.a;
    Ok((kk, m))
}

/// Largest generalized eigenvalue of M v = λ K v, where M is the L²(D) mass
/// and K the broken H¹ seminorm plus the Γ⁰ trace mass.
pub fn estimate_poincare(mesh: &SlitMesh, steps: usize, seed: u64) -> Result<f64> {
    let (k, m) = assemble_poincare(mesh)?;
    let n = k.n;
    if n == 0 {
        return Err(ExperimentError::IterationStall("empty mesh".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| 1.0 + 0.1 * rng.random_range(-1.0..1.0)).collect();
    let maxit = default_maxit(n) * 4;
    let mut lambda = f64::NAN;
    for _ in 0..steps.max(1) {
        let mv = m.mul(&v);
        let w = solve_cg(&k, &mv, 1e-10, maxit)?.x;
        let kw = k.mul(&w);
        let num = dot(&w, &m.mul(&w));
        let den = dot(&w, &kw);
        if !(den > 0.0 && num.is_finite()) {
            return Err(ExperimentError::IterationStall("Rayleigh quotient undefined".into()));
        }
        let next = num / den;
        let s = norm(&w);
        v = w.iter().map(|x| x / s).collect();
        let done = (next - lambda).abs() <= 1e-10 * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    if !lambda.is_finite() {
        return Err(ExperimentError::IterationStall("no finite estimate".into()));
    }
    Ok(lambda)
}

/// Rayleigh quotient of the Poincaré estimate for a given nodal field.
pub fn poincare_quotient(mesh: &SlitMesh, v: &[f64]) -> Result<f64> {
    let (k, m) = assemble_poincare(mesh)?;
    let den = dot(v, &k.mul(v));
    if den <= 0.0 {
        return Err(ExperimentError::ZeroDenominator);
    }
    Ok(dot(v, &m.mul(v)) / den)
}

/// Smooth field vanishing on the line of Γ⁰: x₂ · P(x) · bump(x).
#[derive(Clone, Debug)]
pub struct SampleField {
    coef: [[f64; 3]; 3],
    center: Point,
    width: f64,
    scale: f64,
}

impl SampleField {
    pub fn random(cfg: &IfsConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coef = [[0.0; 3]; 3];
        for row in coef.iter_mut() {
            for c in row.iter_mut() {
                *c = rng.random_range(-1.0..1.0);
            }
        }
        let b = default_domain(cfg);
        let center = Point::new(0.5 * (b.min.x + b.max.x), 0.5 * (b.min.y + b.max.y));
        let width = 0.5 * b.width().hypot(b.height());
        SampleField {
            coef,
            center,
            width,
            scale: 1.0,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        SampleField {
            scale: self.scale * s,
            ..self.clone()
        }
    }

    pub fn eval(&self, p: Point) -> f64 {
        let (x, y) = (p.x / self.width, p.y / self.width);
        let mut poly = 0.0;
        for (i, row) in self.coef.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                poly += c * x.powi(i as i32) * y.powi(j as i32);
            }
        }
        let d = (p - self.center).norm() / self.width;
        self.scale * y * poly * (-d * d).exp()
    }

    pub fn grad(&self, p: Point) -> Point {
        let e = 1e-6 * self.width;
        let dx = (self.eval(p + Point::new(e, 0.0)) - self.eval(p - Point::new(e, 0.0))) / (2.0 * e);
        let dy = (self.eval(p + Point::new(0.0, e)) - self.eval(p - Point::new(0.0, e))) / (2.0 * e);
        Point::new(dx, dy)
    }
}

/// Quadrature on Y⁰: fan triangles from P1, each split into k² subtriangles,
/// three edge-midpoint nodes per subtriangle.
fn cell_quadrature(cfg: &IfsConfig, k: usize) -> Vec<(Point, f64)> {
    let y = cfg.y0();
    let mut out = Vec::new();
    for i in 1..5 {
        let (a, b, c) = (y[0], y[i], y[i + 1]);
        let at = |s: f64, t: f64| a + (b - a) * s + (c - a) * t;
        let area = 0.5 * (b - a).cross(c - a);
        if area <= 0.0 {
            continue;
        }
        let sub = area / (k * k) as f64;
        let h = 1.0 / k as f64;
        for u in 0..k {
            for v in 0..k - u {
                let tris: Vec<[(f64, f64); 3]> = {
                    let (s, t) = (u as f64 * h, v as f64 * h);
                    let mut t2 = vec![[(s, t), (s + h, t), (s, t + h)]];
                    if u + v + 1 < k {
                        t2.push([(s + h, t), (s + h, t + h), (s, t + h)]);
                    }
                    t2
                };
                for tri in tris {
                    let p = tri.map(|(s, t)| at(s, t));
                    for j in 0..3 {
                        out.push((p[j].lerp(p[(j + 1) % 3], 0.5), sub / 3.0));
                    }
                }
            }
        }
    }
    out
}

fn spi_ratio(cfg: &IfsConfig, n: usize, kappa: f64, v: &SampleField, quad: &[(Point, f64)]) -> Result<f64> {
    let tree = build_tree(cfg, n)?;
    let tr = TraceSamples::from_fn(&tree, 8, |p| v.eval(p));
    let num = boundary_average_sq(&tree, &tr)?;
    let mut den = 0.0;
    for m in 0..n {
        let scale = kappa.powi(m as i32) * cfg.r().powi(2 * m as i32);
        let mut s = 0.0;
        for map in cfg.word_maps(m) {
            for &(q, w) in quad {
                let g = v.grad(map.apply(q));
                s += w * g.dot(g);
            }
        }
        den += scale * s;
    }
    if !(den > 0.0) {
        return Err(ExperimentError::ZeroDenominator);
    }
    Ok(num / den)
}

/// Largest trace-to-weighted-energy ratio over seeded smooth samples.
pub fn check_spi(cfg: &IfsConfig, n: usize, kappa: f64, samples: usize, seed: u64) -> Result<f64> {
    if !(kappa > 2.0 * cfg.r() * cfg.r() && kappa < 1.0) {
        return Err(ExperimentError::Config(format!(
            "kappa = {kappa} must lie in (2r², 1)"
        )));
    }
    let quad = cell_quadrature(cfg, 6);
    let ratios = (0..samples as u64)
        .map(|i| spi_ratio(cfg, n, kappa, &SampleField::random(cfg, seed.wrapping_mul(1000) + i), &quad))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ratios.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// SPI ratio of one explicit field.
pub fn spi_ratio_of(cfg: &IfsConfig, n: usize, kappa: f64, v: &SampleField) -> Result<f64> {
    spi_ratio(cfg, n, kappa, v, &cell_quadrature(cfg, 6))
}

pub const CSV_HEADER: &str = "n,dofs,energy,load,boundMargin,l2dist,bavg,muint,poincare,spi";

/// The ten CSV columns of a row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub n: usize,
    pub dofs: usize,
    pub values: [f64; 8],
}

impl From<&StudyRow> for CsvRow {
    fn from(r: &StudyRow) -> Self {
        CsvRow {
            n: r.n,
            dofs: r.dofs,
            values: [
                r.energy,
                r.load,
                r.bound_margin,
                r.l2dist,
                r.bavg,
                r.muint,
                r.poincare,
                r.spi,
            ],
        }
    }
}

pub fn rows_to_csv(rows: &[CsvRow]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in rows {
        let _ = write!(s, "{},{}", r.n, r.dofs);
        for v in r.values {
            let _ = write!(s, ",{v:.16e}");
        }
        s.push('\n');
    }
    s
}

pub fn report_to_csv(report: &StudyReport) -> String {
    rows_to_csv(&report.rows.iter().map(CsvRow::from).collect::<Vec<_>>())
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(ExperimentError::Parse {
            line: 1,
            msg: "unexpected header".into(),
        });
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let perr = |msg: &str| ExperimentError::Parse {
                line: i + 2,
                msg: msg.into(),
            };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 10 {
                return Err(perr("expected 10 fields"));
            }
            let mut values = [0.0; 8];
            for k in 0..8 {
                values[k] = f[k + 2].parse().map_err(|_| perr("bad number"))?;
            }
            Ok(CsvRow {
                n: f[0].parse().map_err(|_| perr("bad level"))?,
                dofs: f[1].parse().map_err(|_| perr("bad DOF count"))?,
                values,
            })
        })
        .collect()
}

/// Log-scale line plot of the L² distance and the boundary-average error.
pub fn report_to_svg(report: &StudyReport) -> String {
    let series: [(&str, Vec<(f64, f64)>); 2] = [
        (
            "l2dist",
            report.rows.iter().map(|r| (r.n as f64, r.l2dist)).collect(),
        ),
        (
            "bavgError",
            report
                .rows
                .iter()
                .map(|r| (r.n as f64, (r.bavg - r.muint).abs()))
                .collect(),
        ),
    ];
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let usable = |p: &(f64, f64)| p.1.is_finite() && p.1 > 0.0;
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.1.iter().copied()).filter(usable).collect();
    let (x0, x1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    let (y0, y1) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1.log10()), a.1.max(p.1.log10())));
    let sx = |x: f64| if x1 > x0 { pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad) } else { w / 2.0 };
    let sy = |y: f64| if y1 > y0 { h - pad - (y.log10() - y0) / (y1 - y0) * (h - 2.0 * pad) } else { h / 2.0 };
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    let _ = writeln!(
        s,
        "<rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>",
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let colors = ["#1f77b4", "#d62728"];
    for ((name, pts), color) in series.iter().zip(colors) {
        let coords: Vec<String> = pts
            .iter()
            .filter(|p| usable(p))
            .map(|&(x, y)| format!("{:.3},{:.3}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline class=\"{name}\" fill=\"none\" stroke=\"{color}\" points=\"{}\"/>",
            coords.join(" ")
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{pad}\" y=\"{}\" font-size=\"12\">n (log-y: l2dist blue, bavg error red)</text>",
        h - 15.0
    );
    s.push_str("</svg>\n");
    s
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| ExperimentError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

pub fn export_report(report: &StudyReport, out: &Outputs) -> Result<()> {
    if let Some(p) = &out.csv {
        write_file(p, &report_to_csv(report))?;
    }
    if let Some(p) = &out.json {
        write_file(p, &serde_json::to_string_pretty(report).expect("report serializes"))?;
    }
    if let Some(p) = &out.svg {
        write_file(p, &report_to_svg(report))?;
    }
    Ok(())
}

/// Outcome of one invariant check in the built-in suite.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

pub const SUITES: [&str; 6] = ["all", "geometry", "measure", "meshing", "fem", "experiments"];

/// Fast invariant checks per module, for `check --suite`.
pub fn run_suite(suite: &str) -> Result<Vec<SuiteCheck>> {
    if !SUITES.contains(&suite) {
        return Err(ExperimentError::Config(format!(
            "unknown suite '{suite}', expected one of {}",
            SUITES.join(", ")
        )));
    }
    let want = |s: &str| suite == "all" || suite == s;
    let mut out = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        out.push(SuiteCheck {
            name: name.into(),
            passed,
            detail,
        })
    };
    let crit = make_config(0.5, 0.0, 0.7, 4.0)?;
    let sub = make_config(0.45, std::f64::consts::PI / 5.0, 0.7, 4.0)?;
    if want("geometry") {
        let t = build_tree(&crit, 5)?;
        push(
            "geometry.interface_length",
            (t.total_interface_length - 2.0).abs() < 1e-12,
            format!("|Γ⁵| = {}", t.total_interface_length),
        );
        let h = crate::geometry::theta0_holes(&crit, 3)?;
        push(
            "geometry.strip_area",
            (h.low_area - 7.0 / 64.0).abs() < 1e-10,
            format!("area = {}", h.low_area),
        );
        let rs = crate::geometry::critical_ratio(0.0, 0.7, 4.0, 1e-6)?;
        push("geometry.critical_ratio", (rs - 0.5).abs() <= 1e-6, format!("r* = {rs}"));
        let rep = crate::geometry::verify_assumption1(&sub, 6);
        push("geometry.assumption1", rep.disjoint && !rep.contact, format!("{} violations", rep.violations.len()));
    }
    if want("measure") {
        let ok = (0..10).all(|m| integrate_mu(&sub, m, |_| 1.0) == 1.0);
        push("measure.mass", ok, "∫1 dμ = 1 at levels 0..9".into());
        let g = |p: Point| p.x * p.x + p.y;
        let lhs = integrate_mu(&sub, 8, g);
        let rhs = 0.5 * integrate_mu(&sub, 7, |p| g(sub.f(1, p))) + 0.5 * integrate_mu(&sub, 7, |p| g(sub.f(2, p)));
        push("measure.self_similarity", lhs == rhs, format!("{lhs} vs {rhs}"));
    }
    if want("meshing") {
        let m = build_slit_mesh(&crit, 3, &MeshOptions { h: 0.3, domain: None, critical: true })?;
        let d = default_domain(&crit).area();
        push(
            "meshing.coverage",
            (m.total_area() - d).abs() <= 1e-9 * d,
            format!("area {} vs {d}", m.total_area()),
        );
        let strip = m.region_area(|r| *r == crate::meshing::RegionTag::StripLow);
        push("meshing.strip_area", (strip - 7.0 / 64.0).abs() < 1e-9, format!("{strip}"));
        let back = SlitMesh::from_text(&m.to_text())?;
        push("meshing.roundtrip", back == m, "text round trip".into());
    }
    if want("fem") {
        let k = fem::element_stiffness([Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)], 1.0);
        let ok = (k[0][0] - 1.0).abs() < 1e-12 && (k[0][1] + 0.5).abs() < 1e-12 && k[1][2].abs() < 1e-12;
        push("fem.element_stiffness", ok, format!("{k:?}"));
        let m = build_slit_mesh(&sub, 2, &MeshOptions { h: 0.4, domain: None, critical: false })?;
        let spec = ProblemSpec::new(&sub, 1.0, 0.0, Expr::constant(1.0), Expr::constant(0.0), Mode::Subcritical, 2)?;
        let sys = fem::assemble(&m, &spec)?;
        let one = vec![1.0; m.dof_count()];
        let e = sys.bilinear(&one, &one);
        push("fem.constant_energy", (e - 1.0).abs() < 1e-12, format!("a(1,1) = {e}"));
        let red = apply_dirichlet(&sys, &sys.dirichlet);
        let lo = lanczos_extremes(&red.a, 50).0;
        push("fem.coercivity", lo > 0.0, format!("smallest Ritz value {lo:e}"));
    }
    if want("experiments") {
        let rows = check_boundary_average(&crit, &Expr::X2, &[2, 3, 4], 8)?;
        push("experiments.bavg_e3", rows[1].error == 15.0, format!("e3 = {}", rows[1].error));
        let sc = StudyConfig {
            n_range: vec![1, 2],
            h: 0.5,
            grid: 60,
            checks: vec![Check::EnergyBound, Check::Coercivity],
            ..StudyConfig::default()
        };
        let rep = run_study(&sc)?;
        let ok = rep.rows.iter().all(|r| r.ok() && r.bound_margin >= -1e-8 && r.smallest_ritz > 0.0);
        push("experiments.small_study", ok, format!("{} rows", rep.rows.len()));
    }
    Ok(out)
}

/// Nodal values of `u` (a field on `fine`) at the DOFs of `coarse`, each DOF
/// sampled from inside one of its own triangles so slit sides stay apart.
pub fn transfer_field(coarse: &SlitMesh, fine: &SlitMesh, u: &fem::FeField) -> Result<Vec<f64>> {
    let loc = TriangleLocator::new(fine);
    let mut probe: Vec<Option<Point>> = vec![None; coarse.dof_count()];
    for (t, tri) in coarse.triangles.iter().enumerate() {
        let p = coarse.triangle_points(t);
        let c = Point::new((p[0].x + p[1].x + p[2].x) / 3.0, (p[0].y + p[1].y + p[2].y) / 3.0);
        for k in 0..3 {
            probe[tri[k]].get_or_insert(p[k].lerp(c, 1e-7));
        }
    }
    probe
        .par_iter()
        .enumerate()
        .map(|(d, q)| {
            let q = q.unwrap_or_else(|| coarse.dof_point(d));
            sample(&loc, fine, u, q).ok_or(FemError::PointOutsideDomain { x: q.x, y: q.y }.into())
        })
        .collect()
}

/// Recovery diagnostic: the finest solution u_N carried to each coarser level
/// (boundary data restored) and |a_n(w_n,w_n) - a_N(u_N,u_N)| recorded.
pub fn recovery_gaps(sc: &StudyConfig) -> Result<Vec<(usize, f64)>> {
    let cfg = sc.validate()?;
    let nref = sc.reference();
    let opts = SolveOptions::default();
    let fine = build_slit_mesh(&cfg, nref, &sc.mesh_options())?;
    let sol = fem::solve(&fine, &sc.problem(&cfg, nref)?, &opts)?;
    let target = sol.system.bilinear(&sol.u.values, &sol.u.values);
    let mut levels: Vec<usize> = sc.n_range.iter().copied().filter(|&n| n != nref).collect();
    levels.sort_unstable();
    levels
        .iter()
        .map(|&n| {
            let mesh = build_slit_mesh(&cfg, n, &sc.mesh_options())?;
            let sys = fem::assemble(&mesh, &sc.problem(&cfg, n)?)?;
            let mut w = transfer_field(&mesh, &fine, &sol.u)?;
            for &(d, v) in &sys.dirichlet {
                w[d] = v;
            }
            Ok((n, (sys.bilinear(&w, &w) - target).abs()))
        })
        .collect()
}

/// Mean square of the P1 interpolant of `u` over Γⁿ next to the exact value
/// from trace sampling; the two agree up to the mesh interpolation error.
pub fn trace_cross_check(cfg: &IfsConfig, n: usize, h: f64, u: &Expr) -> Result<(f64, f64)> {
    let mesh = build_slit_mesh(cfg, n, &MeshOptions { h, domain: None, critical: false })?;
    let vals: Vec<f64> = (0..mesh.dof_count()).map(|d| u.eval(mesh.dof_point(d))).collect();
    let tree = build_tree(cfg, n)?;
    // dense sampling: the interpolation error here is far below the mesh one
    let tr = TraceSamples::from_fn(&tree, 4096, |p| u.eval(p));
    Ok((fe_boundary_average_sq(&mesh, &vals), boundary_average_sq(&tree, &tr)?))
}
