//! P1 finite elements on slit meshes: assembly, Dirichlet elimination, PCG, energies.

mod expr;
mod locate;
mod sparse;

pub use expr::{Expr, ExprError};
pub use locate::{barycentric, TriangleLocator};
pub use sparse::{default_maxit, dot, lanczos_extremes, norm, solve_cg, CgSolution, CsrMatrix};

use crate::geometry::{critical_ratio, IfsConfig};
use crate::meshing::{EdgeTag, RegionTag, SlitMesh};
use crate::point::Point;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("mode mismatch: {0}")]
    ModeMismatch(String),
    #[error("nonfinite coefficient: {0}")]
    NonfiniteCoefficient(String),
    #[error("CG did not converge in {iterations} iterations (relative residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("matrix is not positive definite on the free DOFs")]
    NotPositiveDefinite,
    #[error("point ({x}, {y}) lies outside the mesh domain")]
    PointOutsideDomain { x: f64, y: f64 },
    #[error("invalid problem: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

pub type Result<T> = std::result::Result<T, FemError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Mode {
    Subcritical,
    #[serde(alias = "critical")]
    CriticalTheta0,
}

/// Data of the discrete transmission problem at level n.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub alpha: f64,
    pub beta: f64,
    pub f: Expr,
    pub u0: Expr,
    pub mode: Mode,
    pub level: usize,
}

impl ProblemSpec {
    /// Validated constructor.
    pub fn new(
        cfg: &IfsConfig,
        alpha: f64,
        beta: f64,
        f: Expr,
        u0: Expr,
        mode: Mode,
        level: usize,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(FemError::InvalidSpec(format!("alpha = {alpha} must be positive")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(FemError::InvalidSpec(format!("beta = {beta} must be nonnegative")));
        }
        match mode {
            Mode::CriticalTheta0 => {
                if beta <= 0.0 {
                    return Err(FemError::InvalidSpec(
                        "critical mode is not well posed with beta = 0 (requires beta > 0)".into(),
                    ));
                }
                if !cfg.is_theta0_critical() {
                    return Err(FemError::InvalidSpec(
                        "critical mode needs theta = 0 and r = 1/2".into(),
                    ));
                }
            }
            Mode::Subcritical => check_subcritical(cfg)?,
        }
        Ok(ProblemSpec {
            alpha,
            beta,
            f,
            u0,
            mode,
            level,
        })
    }
}

// r* ≥ 1/2 always; near r* the bracket is tightened once, since the
// contact search cost grows quickly with the tolerance.
fn check_subcritical(cfg: &IfsConfig) -> Result<()> {
    let r = cfg.r();
    if r < 0.5 {
        return Ok(());
    }
    let mut tol = 1e-4;
    loop {
        let r_star = critical_ratio(cfg.theta(), cfg.beta1(), cfg.beta2(), tol)
            .map_err(|e| FemError::InvalidSpec(e.to_string()))?;
        if r < r_star - tol {
            return Ok(());
        }
        if r > r_star + tol || tol < 1e-5 {
            return Err(FemError::InvalidSpec(format!(
                "subcritical mode needs r < r* = {r_star}, got r = {r}"
            )));
        }
        tol = 1e-5 * 0.99;
    }
}

/// Per-triangle diffusion coefficient ν_n.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    pub values: Vec<f64>,
}

impl CoefficientField {
    pub fn new(mesh: &SlitMesh, mode: Mode, level: usize) -> Self {
        let low = 0.25f64.powi(level as i32);
        let values = mesh
            .regions
            .iter()
            .map(|r| match (mode, r) {
                (Mode::CriticalTheta0, RegionTag::StripLow) => low,
                _ => 1.0,
            })
            .collect();
        CoefficientField { values }
    }
}

/// DOF-indexed coefficient vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeField {
    pub values: Vec<f64>,
}

impl FeField {
    pub fn to_json(&self, mesh_ref: &str) -> serde_json::Value {
        serde_json::json!({ "meshRef": mesh_ref, "dofValues": self.values })
    }
}

/// Assembled symmetric system before Dirichlet elimination.
#[derive(Clone, Debug)]
pub struct SymmetricSparseSystem {
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub dirichlet: Vec<(usize, f64)>,
    pub nu: CoefficientField,
}

impl SymmetricSparseSystem {
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        dot(u, &self.a.mul(v))
    }

    /// a(u,u) - 2∫f u with the assembled load.
    pub fn functional(&self, u: &[f64]) -> f64 {
        self.bilinear(u, u) - 2.0 * dot(&self.b, u)
    }
}

pub fn element_stiffness(p: [Point; 3], nu: f64) -> [[f64; 3]; 3] {
    let area = 0.5 * (p[1] - p[0]).cross(p[2] - p[0]);
    let e = [p[2] - p[1], p[0] - p[2], p[1] - p[0]];
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = nu * e[i].dot(e[j]) / (4.0 * area);
        }
    }
    k
}

pub fn element_mass(p: [Point; 3]) -> [[f64; 3]; 3] {
    let area = 0.5 * (p[1] - p[0]).cross(p[2] - p[0]);
    let mut m = [[area / 12.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = area / 6.0;
    }
    m
}

pub fn edge_mass(len: f64) -> [[f64; 2]; 2] {
    [[len / 3.0, len / 6.0], [len / 6.0, len / 3.0]]
}

fn has_critical_regions(mesh: &SlitMesh) -> bool {
    mesh.regions
        .iter()
        .any(|r| matches!(r, RegionTag::StripLow | RegionTag::Hole(_)))
}

pub fn assemble(mesh: &SlitMesh, spec: &ProblemSpec) -> Result<SymmetricSparseSystem> {
    if mesh.level != spec.level {
        return Err(FemError::ModeMismatch(format!(
            "mesh level {} but problem level {}",
            mesh.level, spec.level
        )));
    }
    match (spec.mode, has_critical_regions(mesh)) {
        (Mode::CriticalTheta0, false) => {
            return Err(FemError::ModeMismatch("critical mode needs a mesh with strip regions".into()))
        }
        (Mode::Subcritical, true) => {
            return Err(FemError::ModeMismatch("subcritical mode on a mesh with strip regions".into()))
        }
        _ => {}
    }
    let nu = CoefficientField::new(mesh, spec.mode, spec.level);
    assemble_with_coefficient(mesh, spec, nu)
}

/// Assembly with an explicit diffusion coefficient; skips the mode checks.
pub fn assemble_with_coefficient(
    mesh: &SlitMesh,
    spec: &ProblemSpec,
    nu: CoefficientField,
) -> Result<SymmetricSparseSystem> {
    if !spec.alpha.is_finite() || !spec.beta.is_finite() {
        return Err(FemError::NonfiniteCoefficient("alpha or beta".into()));
    }
    if nu.values.len() != mesh.triangles.len() || nu.values.iter().any(|v| !v.is_finite()) {
        return Err(FemError::NonfiniteCoefficient("coefficient field".into()));
    }
    let n = mesh.dof_count();
    let beta = spec.beta;

    let elems: Vec<([(usize, usize, f64); 9], [f64; 3], f64)> = (0..mesh.triangles.len())
        .into_par_iter()
        .map(|t| {
            let p = mesh.triangle_points(t);
            let k = element_stiffness(p, nu.values[t]);
            let m = element_mass(p);
            let d = mesh.triangles[t];
            let mut out = [(0, 0, 0.0); 9];
            for i in 0..3 {
                for j in 0..3 {
                    out[3 * i + j] = (d[i], d[j], k[i][j] + beta * m[i][j]);
                }
            }
            let c = (p[0] + p[1] + p[2]) * (1.0 / 3.0);
            let fc = spec.f.eval(c);
            let area = 0.5 * (p[1] - p[0]).cross(p[2] - p[0]);
            (out, [fc * area / 3.0; 3], fc)
        })
        .collect();
    let mut trips = Vec::with_capacity(9 * elems.len());
    let mut b = vec![0.0; n];
    for (t, (e, load, fc)) in elems.iter().enumerate() {
        if !fc.is_finite() {
            let p = mesh.triangle_points(t);
            return Err(FemError::NonfiniteCoefficient(format!(
                "source is not finite near ({}, {})",
                p[0].x, p[0].y
            )));
        }
        trips.extend_from_slice(e);
        for k in 0..3 {
            b[mesh.triangles[t][k]] += load[k];
        }
    }
    let scale = if mesh.interface_length > 0.0 {
        spec.alpha / mesh.interface_length
    } else {
        0.0
    };
    for (a, c, tag) in &mesh.edges {
        if let EdgeTag::Interface(_) = tag {
            let m = edge_mass(mesh.dof_point(*a).dist(mesh.dof_point(*c)));
            let d = [*a, *c];
            for i in 0..2 {
                for j in 0..2 {
                    trips.push((d[i], d[j], scale * m[i][j]));
                }
            }
        }
    }
    let a = CsrMatrix::from_triplets(n, trips);
    let mut dirichlet = Vec::new();
    for d in mesh.dirichlet_dofs() {
        let v = spec.u0.eval(mesh.dof_point(d));
        if !v.is_finite() {
            return Err(FemError::NonfiniteCoefficient(format!("u0 is not finite at DOF {d}")));
        }
        dirichlet.push((d, v));
    }
    Ok(SymmetricSparseSystem { a, b, dirichlet, nu })
}

/// System restricted to the free DOFs.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub free: Vec<usize>,
    pub fixed: Vec<(usize, f64)>,
    pub full_len: usize,
}

impl ReducedSystem {
    /// Full-length vector with the fixed values in place.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.full_len];
        for (&i, &v) in self.free.iter().zip(x) {
            u[i] = v;
        }
        for &(i, v) in &self.fixed {
            u[i] = v;
        }
        u
    }
}

/// Symmetric elimination of the prescribed DOFs.
pub fn apply_dirichlet(system: &SymmetricSparseSystem, values: &[(usize, f64)]) -> ReducedSystem {
    let n = system.a.n;
    let mut fixed_val = vec![None; n];
    for &(i, v) in values {
        fixed_val[i] = Some(v);
    }
    let mut map = vec![usize::MAX; n];
    let mut free = Vec::new();
    for i in 0..n {
        if fixed_val[i].is_none() {
            map[i] = free.len();
            free.push(i);
        }
    }
    let mut row_ptr = vec![0usize];
    let mut col_idx = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::with_capacity(free.len());
    for &i in &free {
        let mut bi = system.b[i];
        for (j, v) in system.a.row(i) {
            match fixed_val[j] {
                Some(u) => bi -= v * u,
                None => {
                    col_idx.push(map[j]);
                    vals.push(v);
                }
            }
        }
        b.push(bi);
        row_ptr.push(col_idx.len());
    }
    let mut fixed: Vec<(usize, f64)> = (0..n).filter_map(|i| fixed_val[i].map(|v| (i, v))).collect();
    fixed.sort_by_key(|e| e.0);
    ReducedSystem {
        a: CsrMatrix {
            n: free.len(),
            row_ptr,
            col_idx,
            values: vals,
        },
        b,
        free,
        fixed,
        full_len: n,
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub tol: f64,
    pub maxit: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            maxit: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub u: FeField,
    pub system: SymmetricSparseSystem,
    pub iterations: usize,
    pub rel_residual: f64,
}

impl Solution {
    /// a_n(u,u) - 2∫f u at the computed solution.
    pub fn functional(&self) -> f64 {
        self.system.functional(&self.u.values)
    }
}

/// Assemble, eliminate, solve and re-insert.
pub fn solve(mesh: &SlitMesh, spec: &ProblemSpec, opts: &SolveOptions) -> Result<Solution> {
    let system = assemble(mesh, spec)?;
    let red = apply_dirichlet(&system, &system.dirichlet);
    let maxit = opts.maxit.unwrap_or_else(|| default_maxit(red.a.n));
    let cg = solve_cg(&red.a, &red.b, opts.tol, maxit)?;
    Ok(Solution {
        u: FeField {
            values: red.expand(&cg.x),
        },
        system,
        iterations: cg.iterations,
        rel_residual: cg.rel_residual,
    })
}

/// a_n(u, v).
pub fn energy(mesh: &SlitMesh, spec: &ProblemSpec, u: &FeField, v: &FeField) -> Result<f64> {
    let n = mesh.dof_count();
    if u.values.len() != n || v.values.len() != n {
        return Err(FemError::InvalidArgument("field length differs from the DOF count".into()));
    }
    Ok(assemble(mesh, spec)?.bilinear(&u.values, &v.values))
}

/// L² norm of u over the triangles whose region satisfies `pred`.
pub fn l2_region_norm(mesh: &SlitMesh, u: &FeField, pred: impl Fn(&RegionTag) -> bool) -> f64 {
    let mut s = 0.0;
    for (t, d) in mesh.triangles.iter().enumerate() {
        if !pred(&mesh.regions[t]) {
            continue;
        }
        let [a, b, c] = d.map(|i| u.values[i]);
        s += mesh.triangle_area(t) / 6.0 * (a * a + b * b + c * c + a * b + b * c + c * a);
    }
    s.sqrt()
}

/// Piecewise-linear evaluation at arbitrary points of D.
pub fn evaluate_at_points(mesh: &SlitMesh, u: &FeField, points: &[Point]) -> Result<Vec<f64>> {
    let loc = TriangleLocator::new(mesh);
    points
        .par_iter()
        .map(|&p| sample(&loc, mesh, u, p).ok_or(FemError::PointOutsideDomain { x: p.x, y: p.y }))
        .collect()
}

pub fn sample(loc: &TriangleLocator, mesh: &SlitMesh, u: &FeField, p: Point) -> Option<f64> {
    let (t, lam) = loc.locate(p)?;
    let d = mesh.triangles[t];
    Some(lam[0] * u.values[d[0]] + lam[1] * u.values[d[1]] + lam[2] * u.values[d[2]])
}
