//! C interface to ramlab.
//!
//! Every fallible function returns a `RamlabStatus`; on failure the message
//! is available from `ramlab_last_error` on the same thread. Objects are
//! opaque handles released with their `_free` function. Strings returned by
//! the library are released with `ramlab_string_free`.

use ramlab::experiments::{report_to_csv, run_study, ExperimentError, StudyConfig};
use ramlab::fem::{self, Expr, FemError, Mode, ProblemSpec, SolveOptions};
use ramlab::geometry::{build_tree, critical_ratio, make_config, IfsConfig, PrefractalTree};
use ramlab::measure::integrate_mu;
use ramlab::meshing::{build_slit_mesh, MeshError, MeshOptions, SlitMesh};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RamlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Geometry = 3,
    Mesh = 4,
    Numerical = 5,
    Io = 6,
    Panic = 7,
}

/// Problem mode for `ramlab_solve`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RamlabMode {
    Subcritical = 0,
    CriticalTheta0 = 1,
}

/// Opaque IFS configuration.
pub struct RamlabConfig(IfsConfig);
/// Opaque prefractal tree.
pub struct RamlabTree(PrefractalTree);
/// Opaque slit mesh.
pub struct RamlabMesh(SlitMesh);
/// Opaque discrete solution with its energy.
pub struct RamlabSolution {
    values: Vec<f64>,
    energy: f64,
    functional: f64,
    iterations: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(RamlabStatus, String);

impl From<ramlab::geometry::GeometryError> for Fail {
    fn from(e: ramlab::geometry::GeometryError) -> Self {
        Fail(RamlabStatus::Geometry, e.to_string())
    }
}

impl From<MeshError> for Fail {
    fn from(e: MeshError) -> Self {
        let code = match e {
            MeshError::InvalidArgument(_) | MeshError::Parse { .. } => RamlabStatus::InvalidArgument,
            _ => RamlabStatus::Mesh,
        };
        Fail(code, e.to_string())
    }
}

impl From<FemError> for Fail {
    fn from(e: FemError) -> Self {
        let code = match e {
            FemError::MaxIterations { .. } | FemError::NotPositiveDefinite => RamlabStatus::Numerical,
            _ => RamlabStatus::InvalidArgument,
        };
        Fail(code, e.to_string())
    }
}

impl From<ExperimentError> for Fail {
    fn from(e: ExperimentError) -> Self {
        let code = match &e {
            ExperimentError::Io { .. } => RamlabStatus::Io,
            e if e.is_validation() => RamlabStatus::InvalidArgument,
            _ => RamlabStatus::Numerical,
        };
        Fail(code, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RamlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RamlabStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            RamlabStatus::Panic
        }
    }
}

fn null() -> Fail {
    Fail(RamlabStatus::NullPointer, "null pointer argument".into())
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(null)
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(null)
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(RamlabStatus::InvalidArgument, "string is not UTF-8".into()))
}

/// Message of the last failed call on this thread, or NULL. Valid until the next call.
#[no_mangle]
pub extern "C" fn ramlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ramlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn ramlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ramlab_config_new(
    r: f64,
    theta: f64,
    beta1: f64,
    beta2: f64,
    out_cfg: *mut *mut RamlabConfig,
) -> RamlabStatus {
    guard(|| {
        let slot = out(out_cfg)?;
        *slot = ptr::null_mut();
        let cfg = make_config(r, theta, beta1, beta2)?;
        *slot = Box::into_raw(Box::new(RamlabConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be NULL or a handle from `ramlab_config_new`.
#[no_mangle]
pub unsafe extern "C" fn ramlab_config_free(cfg: *mut RamlabConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Critical contraction ratio r* for the angle.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ramlab_critical_ratio(
    theta: f64,
    beta1: f64,
    beta2: f64,
    tol: f64,
    out_r: *mut f64,
) -> RamlabStatus {
    guard(|| {
        let slot = out(out_r)?;
        *slot = critical_ratio(theta, beta1, beta2, tol)?;
        Ok(())
    })
}

/// ∫ g dμ at quadrature level `m` for g = x1^p · x2^q.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ramlab_mu_moment(
    cfg: *const RamlabConfig,
    m: usize,
    p: i32,
    q: i32,
    out_v: *mut f64,
) -> RamlabStatus {
    guard(|| {
        let cfg = &deref(cfg)?.0;
        let slot = out(out_v)?;
        if m > 24 {
            return Err(Fail(RamlabStatus::InvalidArgument, "quadrature level above 24".into()));
        }
        *slot = integrate_mu(cfg, m, |x| x.x.powi(p) * x.y.powi(q));
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ramlab_tree_new(cfg: *const RamlabConfig, n: usize, out_tree: *mut *mut RamlabTree) -> RamlabStatus {
    guard(|| {
        let cfg = &deref(cfg)?.0;
        let slot = out(out_tree)?;
        *slot = ptr::null_mut();
        *slot = Box::into_raw(Box::new(RamlabTree(build_tree(cfg, n)?)));
        Ok(())
    })
}

/// # Safety
/// `tree` must be NULL or a handle from `ramlab_tree_new`.
#[no_mangle]
pub unsafe extern "C" fn ramlab_tree_free(tree: *mut RamlabTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

/// Number of cells, interface segments and |Γⁿ|.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ramlab_tree_info(
    tree: *const RamlabTree,
    cells: *mut usize,
    segments: *mut usize,
    interface_length: *mut f64,
) -> RamlabStatus {
    guard(|| {
        let t = &deref(tree)?.0;
        *out(cells)? = t.cells.len();
        *out(segments)? = t.interface.len();
        *out(interface_length)? = t.total_interface_length;
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ramlab_mesh_build(
    cfg: *const RamlabConfig,
    n: usize,
    h: f64,
    critical: bool,
    out_mesh: *mut *mut RamlabMesh,
) -> RamlabStatus {
    guard(|| {
        let cfg = &deref(cfg)?.0;
        let slot = out(out_mesh)?;
        *slot = ptr::null_mut();
        let m = build_slit_mesh(cfg, n, &MeshOptions { h, domain: None, critical })?;
        *slot = Box::into_raw(Box::new(RamlabMesh(m)));
        Ok(())
    })
}

/// # Safety
/// `text` must be a NUL-terminated string, `out_mesh` valid.
#[no_mangle]
pub unsafe extern "C" fn ramlab_mesh_from_text(text_in: *const c_char, out_mesh: *mut *mut RamlabMesh) -> RamlabStatus {
    guard(|| {
        let s = text(text_in)?;
        let slot = out(out_mesh)?;
        *slot = ptr::null_mut();
        *slot = Box::into_raw(Box::new(RamlabMesh(SlitMesh::from_text(s)?)));
        Ok(())
    })
}

/// # Safety
/// `mesh` must be NULL or a mesh handle.
#[no_mangle]
pub unsafe extern "C" fn ramlab_mesh_free(mesh: *mut RamlabMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// DOF and triangle counts.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ramlab_mesh_info(mesh: *const RamlabMesh, dofs: *mut usize, triangles: *mut usize) -> RamlabStatus {
    guard(|| {
        let m = &deref(mesh)?.0;
        *out(dofs)? = m.dof_count();
        *out(triangles)? = m.triangles.len();
        Ok(())
    })
}

/// Text serialization; release with `ramlab_string_free`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ramlab_mesh_to_text(mesh: *const RamlabMesh, out_text: *mut *mut c_char) -> RamlabStatus {
    guard(|| {
        let m = &deref(mesh)?.0;
        let slot = out(out_text)?;
        *slot = CString::new(m.to_text()).expect("no NUL in mesh text").into_raw();
        Ok(())
    })
}

/// Assemble and solve the level problem on `mesh`.
///
/// # Safety
/// Pointers must be valid; `f` and `u0` NUL-terminated expressions.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ramlab_solve(
    cfg: *const RamlabConfig,
    mesh: *const RamlabMesh,
    alpha: f64,
    beta: f64,
    f: *const c_char,
    u0: *const c_char,
    mode: RamlabMode,
    tol: f64,
    out_sol: *mut *mut RamlabSolution,
) -> RamlabStatus {
    guard(|| {
        let cfg = &deref(cfg)?.0;
        let m = &deref(mesh)?.0;
        let (f, u0) = (text(f)?, text(u0)?);
        let slot = out(out_sol)?;
        *slot = ptr::null_mut();
        let mode = match mode {
            RamlabMode::Subcritical => Mode::Subcritical,
            RamlabMode::CriticalTheta0 => Mode::CriticalTheta0,
        };
        let spec = ProblemSpec::new(
            cfg,
            alpha,
            beta,
            Expr::parse(f).map_err(FemError::from)?,
            Expr::parse(u0).map_err(FemError::from)?,
            mode,
            m.level,
        )?;
        let sol = fem::solve(m, &spec, &SolveOptions { tol, maxit: None })?;
        let u = &sol.u.values;
        *slot = Box::into_raw(Box::new(RamlabSolution {
            energy: sol.system.bilinear(u, u),
            functional: sol.functional(),
            iterations: sol.iterations,
            values: sol.u.values.clone(),
        }));
        Ok(())
    })
}

/// # Safety
/// `sol` must be NULL or a solution handle.
#[no_mangle]
pub unsafe extern "C" fn ramlab_solution_free(sol: *mut RamlabSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// a_n(u,u), the functional value and the CG iteration count.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ramlab_solution_info(
    sol: *const RamlabSolution,
    energy: *mut f64,
    functional: *mut f64,
    iterations: *mut usize,
) -> RamlabStatus {
    guard(|| {
        let s = deref(sol)?;
        *out(energy)? = s.energy;
        *out(functional)? = s.functional;
        *out(iterations)? = s.iterations;
        Ok(())
    })
}

/// Copy DOF values into `buf` of length `len`; `len` must be at least the DOF count.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ramlab_solution_values(sol: *const RamlabSolution, buf: *mut f64, len: usize) -> RamlabStatus {
    guard(|| {
        let s = deref(sol)?;
        if buf.is_null() {
            return Err(null());
        }
        if len < s.values.len() {
            return Err(Fail(
                RamlabStatus::InvalidArgument,
                format!("buffer holds {len} values, need {}", s.values.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, s.values.len()).copy_from_slice(&s.values);
        Ok(())
    })
}

/// Run a study from a JSON configuration and return the report CSV.
///
/// # Safety
/// `config_json` NUL-terminated, `out_csv` valid.
#[no_mangle]
pub unsafe extern "C" fn ramlab_study_csv(config_json: *const c_char, out_csv: *mut *mut c_char) -> RamlabStatus {
    guard(|| {
        let s = text(config_json)?;
        let slot = out(out_csv)?;
        *slot = ptr::null_mut();
        let sc = StudyConfig::from_json(s)?;
        let rep = run_study(&sc)?;
        *slot = CString::new(report_to_csv(&rep)).expect("csv has no NUL").into_raw();
        Ok(())
    })
}
