//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

mod common;

use common::{l2_error, unit_square};
use ramlab::experiments::{
    check_boundary_average, check_energy_bound, check_spi, estimate_poincare, run_study, Check, StudyConfig,
    StudyReport,
};
use ramlab::fem::{element_stiffness, edge_mass, solve, Expr, Mode, ProblemSpec, SolveOptions};
use ramlab::geometry::{build_tree, critical_ratio, make_config, theta0_holes, IfsConfig};
use ramlab::measure::integrate_mu;
use ramlab::meshing::{build_slit_mesh, MeshOptions};
use ramlab::Point;
use std::f64::consts::PI;
use std::time::Instant;

type Outcome = Result<String, String>;

fn crit() -> IfsConfig {
    make_config(0.5, 0.0, 0.7, 4.0).unwrap()
}

fn sub() -> IfsConfig {
    make_config(0.45, PI / 5.0, 0.7, 4.0).unwrap()
}

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn c1_manufactured() -> Outcome {
    let start = Instant::now();
    let spec = ProblemSpec {
        alpha: 1.0,
        beta: 0.0,
        f: Expr::parse("-2").unwrap(),
        u0: Expr::parse("x1*x1").unwrap(),
        mode: Mode::Subcritical,
        level: 0,
    };
    let mut errs = Vec::new();
    for k in [8, 16, 32] {
        let m = unit_square(k);
        let sol = solve(&m, &spec, &SolveOptions { tol: 1e-13, maxit: None }).map_err(|e| e.to_string())?;
        errs.push(l2_error(&m, &sol.u, |p| p.x * p.x));
    }
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    let secs = start.elapsed().as_secs_f64();
    let msg = format!("error ratios {ratios:.3?} in {secs:.2}s");
    ensure(ratios.iter().all(|r| (3.5..=4.5).contains(r)) && secs < 60.0, msg.clone())?;
    Ok(msg)
}

fn c2_element_forms() -> Outcome {
    let k = element_stiffness([Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)], 1.0);
    let want = [[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]];
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            worst = worst.max((k[i][j] - 0.5 * want[i][j]).abs());
        }
    }
    for l in [1.0, 0.3, 2.5] {
        let m = edge_mass(l);
        let e = [[2.0, 1.0], [1.0, 2.0]];
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((m[i][j] - l / 6.0 * e[i][j]).abs());
            }
        }
    }
    ensure(worst <= 1e-12, format!("max deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:e}"))
}

// Sutherland–Hodgman clip of a convex polygon against y >= lo and y <= hi.
fn clip_band(poly: &[Point], lo: f64, hi: f64) -> Vec<Point> {
    let clip = |pts: Vec<Point>, inside: &dyn Fn(Point) -> bool, y: f64| {
        let mut out = Vec::new();
        for i in 0..pts.len() {
            let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
            let cut = || Point::new(a.x + (b.x - a.x) * (y - a.y) / (b.y - a.y), y);
            match (inside(a), inside(b)) {
                (true, true) => out.push(b),
                (true, false) => out.push(cut()),
                (false, true) => {
                    out.push(cut());
                    out.push(b)
                }
                (false, false) => {}
            }
        }
        out
    };
    let p = clip(poly.to_vec(), &|q: Point| q.y >= lo, lo);
    clip(p, &|q: Point| q.y <= hi, hi)
}

fn shoelace(p: &[Point]) -> f64 {
    (0..p.len())
        .map(|i| {
            let (a, b) = (p[i], p[(i + 1) % p.len()]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

fn c3_geometry() -> Outcome {
    let cfg = crit();
    let y = cfg.y0();
    ensure((y[0].dist(y[1]) - 2.0).abs() <= 1e-12, format!("|Γ⁰| = {}", y[0].dist(y[1])))?;
    for n in 1..=12 {
        let t = build_tree(&cfg, n).map_err(|e| e.to_string())?;
        let len: f64 = t.interface.iter().map(|s| s.a.dist(s.b)).sum();
        ensure((len - 2.0).abs() <= 1e-12, format!("|Γ^{n}| = {len}"))?;
    }
    let holes = theta0_holes(&cfg, 3).map_err(|e| e.to_string())?;
    let want = [Point::new(-0.2, 4.0), Point::new(0.2, 4.0), Point::new(0.0, 8.0)];
    let tri_err = holes
        .triangle
        .iter()
        .zip(&want)
        .map(|(a, b)| a.dist(*b))
        .fold(0.0, f64::max);
    ensure(tri_err <= 1e-12 && (holes.height - 4.0).abs() <= 1e-12, format!("T = {:?}, H = {}", holes.triangle, holes.height))?;
    // independent oracle: images of T under words of length < 3, clipped to the band
    let h = 4.0;
    let (lo, hi) = ((2.0 - 3.0 / 16.0) * h, (2.0 - 1.0 / 8.0) * h);
    let f = |i: usize, p: Point| {
        let s = if i == 1 { -0.7 } else { 0.7 };
        Point::new(s + 0.5 * p.x, 4.0 + 0.5 * p.y)
    };
    let mut tris = vec![want.to_vec()];
    let mut frontier = tris.clone();
    for _ in 1..3 {
        let next: Vec<Vec<Point>> = frontier
            .iter()
            .flat_map(|t| [1, 2].map(|i| t.iter().map(|&p| f(i, p)).collect::<Vec<_>>()))
            .collect();
        tris.extend(next.iter().cloned());
        frontier = next;
    }
    let oracle: f64 = tris.iter().map(|t| shoelace(&clip_band(t, lo, hi))).sum();
    ensure((oracle - 7.0 / 64.0).abs() <= 1e-12, format!("oracle area {oracle}"))?;
    ensure(
        (holes.low_area - oracle).abs() <= 1e-10,
        format!("strip area {} vs oracle {oracle}", holes.low_area),
    )?;
    let r = critical_ratio(0.0, 0.7, 4.0, 1e-6).map_err(|e| e.to_string())?;
    ensure((r - 0.5).abs() <= 1e-6, format!("r* = {r}"))?;
    Ok(format!(
        "|Γⁿ| = 2 for 0 ≤ n ≤ 12, T exact, H = 4, strip area {} (oracle {oracle}), r* = {r}",
        holes.low_area
    ))
}

fn c4_measure() -> Outcome {
    let s = sub();
    let c = crit();
    for m in 0..=16 {
        for cfg in [&s, &c] {
            let v = integrate_mu(cfg, m, |_| 1.0);
            ensure(v == 1.0, format!("∫1 dμ = {v} at level {m}"))?;
        }
    }
    // E = 0.49 + 0.25 E
    let oracle = 0.49 / 0.75;
    let e = integrate_mu(&c, 12, |p| p.x * p.x);
    let rel = (e - oracle).abs() / oracle;
    ensure(rel < 1e-3, format!("second moment {e} vs {oracle}"))?;
    let g = |p: Point| (p.x * 1.3).sin() + p.x * p.y;
    for cfg in [&s, &c] {
        for m in 1..=10 {
            let lhs = integrate_mu(cfg, m, g);
            let rhs = 0.5 * integrate_mu(cfg, m - 1, |p| g(cfg.f(1, p))) + 0.5 * integrate_mu(cfg, m - 1, |p| g(cfg.f(2, p)));
            ensure(lhs == rhs, format!("self-similarity at level {m}: {lhs} vs {rhs}"))?;
        }
    }
    Ok(format!("mass exact, second moment {e:.6} (rel err {rel:.1e}), self-similarity exact"))
}

fn c5_boundary_average() -> Outcome {
    let ns: Vec<usize> = (2..=8).collect();
    let rows = check_boundary_average(&crit(), &Expr::X2, &ns, 12).map_err(|e| e.to_string())?;
    let e: Vec<f64> = rows.iter().map(|r| r.error).collect();
    ensure(e[1] == 15.0, format!("e3 = {}", e[1]))?;
    ensure(strictly_decreasing(&e), format!("e_n = {e:?}"))?;
    ensure(e[6] / e[0] < 0.1, format!("e8/e2 = {}", e[6] / e[0]))?;
    let ns2: Vec<usize> = (2..=7).collect();
    let rows2 = check_boundary_average(&sub(), &Expr::parse("x1 + x2").unwrap(), &ns2, 14).map_err(|e| e.to_string())?;
    let e2: Vec<f64> = rows2.iter().map(|r| r.error).collect();
    ensure(strictly_decreasing(&e2), format!("subcritical e_n = {e2:?}"))?;
    Ok(format!("e3 = 15, e8/e2 = {:.3e}, subcritical e_n decreasing ({:.3e} → {:.3e})", e[6] / e[0], e2[0], e2[5]))
}

struct Studies {
    sub: StudyReport,
    crit: StudyReport,
    runtime: f64,
}

fn study_config(mode: Mode) -> StudyConfig {
    let base = StudyConfig {
        n_range: (1..=6).collect(),
        h: 0.125,
        f: "1".into(),
        u0: "0".into(),
        alpha: 1.0,
        checks: vec![Check::EnergyBound, Check::Coercivity],
        ..StudyConfig::default()
    };
    match mode {
        Mode::Subcritical => base,
        Mode::CriticalTheta0 => StudyConfig {
            r: 0.5,
            theta: 0.0,
            beta: 1.0,
            mode,
            ..base
        },
    }
}

fn run_studies() -> Result<Studies, String> {
    let start = Instant::now();
    let sub = run_study(&study_config(Mode::Subcritical)).map_err(|e| e.to_string())?;
    let crit = run_study(&study_config(Mode::CriticalTheta0)).map_err(|e| e.to_string())?;
    Ok(Studies {
        sub,
        crit,
        runtime: start.elapsed().as_secs_f64(),
    })
}

fn c6_energy_bound(st: &Result<Studies, String>) -> Outcome {
    let st = st.as_ref().map_err(|e| e.clone())?;
    let mut worst = f64::INFINITY;
    let mut count = 0;
    // nonzero Dirichlet data as well
    let extra: Vec<StudyReport> = [Mode::Subcritical, Mode::CriticalTheta0]
        .into_iter()
        .map(|m| {
            run_study(&StudyConfig {
                u0: "1 + 0.5*x1".into(),
                n_range: (1..=4).collect(),
                h: 0.25,
                checks: vec![Check::EnergyBound],
                ..study_config(m)
            })
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    for rep in [&st.sub, &st.crit].into_iter().chain(extra.iter()) {
        ensure(rep.rows.iter().all(|r| r.ok()), "a level failed".into())?;
        for m in check_energy_bound(rep) {
            ensure(m.margin >= -1e-8, format!("level {} margin {}", m.n, m.margin))?;
            worst = worst.min(m.margin);
            count += 1;
        }
    }
    Ok(format!("{count} levels, smallest margin {worst:.4e}"))
}

fn c7_convergence(st: &Result<Studies, String>) -> Outcome {
    let st = st.as_ref().map_err(|e| e.clone())?;
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    for (name, rep) in [("subcritical", &st.sub), ("critical", &st.crit)] {
        if let Some(r) = rep.rows.iter().find(|r| !r.ok()) {
            return Err(format!("{name} level {} failed: {:?}", r.n, r.error));
        }
        let max_dofs = rep.rows.iter().map(|r| r.dofs).max().unwrap_or(0);
        if max_dofs > 200_000 {
            failures.push(format!("{name}: {max_dofs} DOFs"));
        }
        let d: Vec<f64> = rep.rows.iter().map(|r| r.l2dist).collect();
        let e: Vec<f64> = rep.rows.iter().map(|r| r.energy).collect();
        let gaps: Vec<f64> = e.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let ratio = d[4] / d[0];
        notes.push(format!("{name}: δ5/δ1 = {ratio:.3}, gaps {}", sci(&gaps)));
        if !strictly_decreasing(&d[..6]) {
            failures.push(format!("{name}: δ_n not strictly decreasing {}", sci(&d)));
        }
        if ratio >= 0.25 {
            failures.push(format!("{name}: δ5/δ1 = {ratio}"));
        }
        if !strictly_decreasing(&gaps) {
            failures.push(format!("{name}: energy gaps not decreasing {}", sci(&gaps)));
        }
    }
    if st.runtime >= 600.0 {
        failures.push(format!("runtime {:.1}s", st.runtime));
    }
    let msg = format!("{}; runtime {:.1}s", notes.join("; "), st.runtime);
    if failures.is_empty() {
        Ok(msg)
    } else {
        Err(format!("{} ({msg})", failures.join("; ")))
    }
}

fn c8_coercivity(st: &Result<Studies, String>) -> Outcome {
    let st = st.as_ref().map_err(|e| e.clone())?;
    let mut lo = f64::INFINITY;
    for rep in [&st.sub, &st.crit] {
        for r in &rep.rows {
            ensure(r.smallest_ritz > 0.0, format!("level {} Ritz value {}", r.n, r.smallest_ritz))?;
            lo = lo.min(r.smallest_ritz);
        }
    }
    Ok(format!("smallest Ritz value over 12 systems {lo:.3e}"))
}

fn c9_spi() -> Outcome {
    let cfg = crit();
    let ratios: Vec<f64> = (4..=7)
        .map(|n| check_spi(&cfg, n, 0.6, 20, 0))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    ensure(ratios.iter().all(|r| r.is_finite() && *r > 0.0), format!("{ratios:?}"))?;
    let (mn, mx) = ratios.iter().fold((f64::INFINITY, 0.0f64), |a, &r| (a.0.min(r), a.1.max(r)));
    ensure(mx / mn < 2.0, format!("ratios {ratios:?}"))?;
    Ok(format!("max ratios {ratios:.4?}, spread {:.3}", mx / mn))
}

fn c10_poincare() -> Outcome {
    let cfg = sub();
    let est: Vec<f64> = (1..=6)
        .map(|n| {
            let m = build_slit_mesh(&cfg, n, &MeshOptions { h: 0.25, domain: None, critical: false })
                .map_err(|e| e.to_string())?;
            estimate_poincare(&m, 200, n as u64).map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    let mut sorted = est.clone();
    sorted.sort_by(f64::total_cmp);
    let median = 0.5 * (sorted[2] + sorted[3]);
    ensure(est.iter().all(|&c| c.is_finite() && c > 0.0 && c <= 2.0 * median), format!("{est:?}"))?;
    Ok(format!("estimates {est:.1?}, median {median:.1}"))
}

fn c11_determinism() -> Outcome {
    let args = [
        "ramlab", "study", "--n-range", "1..4", "--h", "0.25", "--grid", "200", "--checks",
        "energyBound,boundaryAverage,coercivity,poincare,spi",
    ];
    let once = || {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = ramlab::cli::run(args, &mut out, &mut err);
        (code, out)
    };
    let (c1, a) = once();
    let (c2, b) = once();
    ensure(c1 == 0 && c2 == 0, format!("exit codes {c1}, {c2}"))?;
    ensure(a == b, "CSV differs between runs".into())?;
    Ok(format!("{} identical CSV bytes", a.len()))
}

fn main() {
    let start = Instant::now();
    let studies = run_studies();
    let results: Vec<(&str, Outcome)> = vec![
        ("FEM manufactured solution", c1_manufactured()),
        ("element closed forms", c2_element_forms()),
        ("geometry exactness", c3_geometry()),
        ("measure", c4_measure()),
        ("boundary-average convergence", c5_boundary_average()),
        ("energy bound", c6_energy_bound(&studies)),
        ("solution convergence", c7_convergence(&studies)),
        ("coercivity", c8_coercivity(&studies)),
        ("SPI inequality", c9_spi()),
        ("Poincaré bound", c10_poincare()),
        ("determinism", c11_determinism()),
    ];
    let mut failed = 0;
    for (i, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(m) => println!("criterion {:>2} PASS {name}: {m}", i + 1),
            Err(m) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {m}", i + 1)
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
