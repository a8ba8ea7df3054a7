mod common;

use common::unit_square;
use ramlab::experiments::*;
use ramlab::fem::{Expr, Mode};
use ramlab::geometry::{make_config, IfsConfig};
use ramlab::meshing::{build_slit_mesh, MeshOptions};
use std::f64::consts::PI;

fn crit() -> IfsConfig {
    make_config(0.5, 0.0, 0.7, 4.0).unwrap()
}

fn sub() -> IfsConfig {
    make_config(0.45, PI / 5.0, 0.7, 4.0).unwrap()
}

fn small(n_range: Vec<usize>, checks: Vec<Check>) -> StudyConfig {
    StudyConfig {
        n_range,
        h: 0.5,
        grid: 80,
        checks,
        ..StudyConfig::default()
    }
}

fn critical(sc: StudyConfig) -> StudyConfig {
    StudyConfig {
        r: 0.5,
        theta: 0.0,
        beta: 1.0,
        mode: Mode::CriticalTheta0,
        ..sc
    }
}

#[test]
fn single_level_has_zero_distance() {
    let rep = run_study(&small(vec![2], vec![])).unwrap();
    assert_eq!(rep.rows.len(), 1);
    assert_eq!(rep.reference_level, 2);
    assert_eq!(rep.rows[0].l2dist, 0.0);
    assert!(rep.rows[0].energy.is_finite() && rep.rows[0].energy > 0.0);
    // disabled checks stay empty
    assert!(rep.rows[0].poincare.is_nan() && rep.rows[0].spi.is_nan());
}

#[test]
fn rows_sorted_and_finite() {
    let rep = run_study(&small(vec![3, 1, 2], vec![Check::EnergyBound, Check::BoundaryAverage, Check::Coercivity])).unwrap();
    let ns: Vec<usize> = rep.rows.iter().map(|r| r.n).collect();
    assert_eq!(ns, vec![1, 2, 3]);
    for r in &rep.rows {
        assert!(r.ok());
        for v in [r.energy, r.load, r.bound_margin, r.l2dist, r.bavg, r.muint, r.c0, r.smallest_ritz] {
            assert!(v.is_finite());
        }
        assert!(r.smallest_ritz > 0.0);
        // at the minimizer a(u,u) = ∫f u when u0 = 0
        assert!((r.energy - r.load).abs() <= 1e-6 * r.energy);
    }
}

#[test]
fn boundary_average_constant_is_exact() {
    let rows = check_boundary_average(&sub(), &Expr::constant(1.0), &[1, 2, 3, 4], 8).unwrap();
    for r in rows {
        assert_eq!(r.error, 0.0);
    }
}

#[test]
fn boundary_average_heights_theta0() {
    let ns: Vec<usize> = (2..=8).collect();
    let rows = check_boundary_average(&crit(), &Expr::X2, &ns, 12).unwrap();
    assert_eq!(rows[1].n, 3);
    assert_eq!(rows[1].error, 15.0);
    for (r, &n) in rows.iter().zip(&ns) {
        let closed = (64.0 * (1.0 - 0.5f64.powi(n as i32)).powi(2) - 64.0).abs();
        assert!((r.error - closed).abs() <= 1e-12 * 64.0, "n={n}: {} vs {closed}", r.error);
    }
    for w in rows.windows(2) {
        assert!(w[1].error < w[0].error);
    }
}

#[test]
fn boundary_average_x1_theta0_decays() {
    let rows = check_boundary_average(&crit(), &Expr::X1, &[2, 8], 12).unwrap();
    assert!(rows[1].error / rows[0].error < 0.1, "{rows:?}");
}

#[test]
fn boundary_average_subcritical_decreasing() {
    let u = Expr::parse("x1 + x2").unwrap();
    let rows = check_boundary_average(&sub(), &u, &(2..=7).collect::<Vec<_>>(), 14).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].error < w[0].error, "{rows:?}");
    }
}

#[test]
fn energy_bound_trivial_data() {
    let sc = StudyConfig {
        f: "0".into(),
        u0: "0".into(),
        ..small(vec![1, 2], vec![Check::EnergyBound])
    };
    let rep = run_study(&sc).unwrap();
    for m in check_energy_bound(&rep) {
        assert_eq!(m.c0, 0.0);
        assert_eq!(m.margin, 0.0);
        assert!(m.holds);
    }
}

#[test]
fn energy_bound_unit_datum_both_modes() {
    for sc in [
        small(vec![1, 2, 3], vec![Check::EnergyBound]),
        critical(small(vec![1, 2, 3], vec![Check::EnergyBound])),
    ] {
        let sc = StudyConfig {
            f: "0".into(),
            u0: "1".into(),
            ..sc
        };
        let rep = run_study(&sc).unwrap();
        let margins = check_energy_bound(&rep);
        assert_eq!(margins.len(), 3);
        for m in &margins {
            assert!(m.holds && m.margin.is_finite(), "{m:?}");
            assert!(m.c0 > 0.0 && m.margin <= m.c0 + 1e-8);
        }
    }
}

#[test]
fn tent_lifting_support() {
    let cfg = crit();
    let tent = TentLifting::new(&cfg, Expr::constant(2.0));
    // Γ⁰ to the first-generation top sides: heights 0 and 4
    assert!((tent.rho() - 2.0).abs() < 1e-12);
    assert_eq!(tent.eval(ramlab::Point::new(0.3, 0.0)), 2.0);
    assert_eq!(tent.eval(ramlab::Point::new(0.0, 2.5)), 0.0);
    assert!((tent.eval(ramlab::Point::new(0.0, 1.0)) - 1.0).abs() < 1e-12);
}

#[test]
fn poincare_square_closed_form() {
    let mesh = unit_square(8);
    // v ≡ 1: area 1 over trace mass 4
    let q1 = poincare_quotient(&mesh, &vec![1.0; mesh.dof_count()]).unwrap();
    assert!((q1 - 0.25).abs() < 1e-12);
    let est = estimate_poincare(&mesh, 200, 0).unwrap();
    assert!(est >= q1 - 1e-12, "{est}");
    assert!(est < 1.0);
}

#[test]
fn poincare_quotient_homogeneous() {
    let mesh = build_slit_mesh(&sub(), 2, &MeshOptions { h: 0.5, domain: None, critical: false }).unwrap();
    let v: Vec<f64> = (0..mesh.dof_count()).map(|d| (d as f64 * 0.37).sin() + 0.2).collect();
    let v2: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
    let (a, b) = (poincare_quotient(&mesh, &v).unwrap(), poincare_quotient(&mesh, &v2).unwrap());
    assert!((a - b).abs() <= 1e-12 * a);
    let est = estimate_poincare(&mesh, 200, 3).unwrap();
    assert!(est >= a * (1.0 - 1e-9));
}

#[test]
fn spi_zero_field_rejected() {
    let v = SampleField::random(&crit(), 1).scaled(0.0);
    assert!(matches!(spi_ratio_of(&crit(), 4, 0.6, &v), Err(ExperimentError::ZeroDenominator)));
}

#[test]
fn spi_homogeneous() {
    let cfg = crit();
    let v = SampleField::random(&cfg, 7);
    let a = spi_ratio_of(&cfg, 5, 0.6, &v).unwrap();
    let b = spi_ratio_of(&cfg, 5, 0.6, &v.scaled(3.0)).unwrap();
    assert!(a.is_finite() && a > 0.0);
    assert!((a - b).abs() <= 1e-12 * a);
}

#[test]
fn spi_kappa_range() {
    assert!(matches!(check_spi(&crit(), 4, 0.5, 2, 0), Err(ExperimentError::Config(_))));
    assert!(matches!(check_spi(&crit(), 4, 1.0, 2, 0), Err(ExperimentError::Config(_))));
    let a = check_spi(&crit(), 4, 0.6, 5, 9).unwrap();
    assert_eq!(a, check_spi(&crit(), 4, 0.6, 5, 9).unwrap());
}

#[test]
fn sample_fields_vanish_on_base_line() {
    let v = SampleField::random(&sub(), 4);
    for i in 0..=20 {
        let x = -1.0 + 0.1 * i as f64;
        assert_eq!(v.eval(ramlab::Point::new(x, 0.0)), 0.0);
    }
}

#[test]
fn empty_report_csv_is_header_only() {
    let rep = StudyReport {
        config_hash: String::new(),
        runtime_ms: 0,
        reference_level: 0,
        rows: vec![],
    };
    assert_eq!(report_to_csv(&rep), format!("{CSV_HEADER}\n"));
    assert!(parse_csv(&report_to_csv(&rep)).unwrap().is_empty());
}

#[test]
fn csv_round_trip_and_svg() {
    let rep = run_study(&small(vec![1, 2, 3], vec![Check::BoundaryAverage])).unwrap();
    let csv = report_to_csv(&rep);
    let parsed = parse_csv(&csv).unwrap();
    assert_eq!(parsed.len(), 3);
    assert_eq!(rows_to_csv(&parsed), csv);
    assert!(matches!(parse_csv("n,dofs\n"), Err(ExperimentError::Parse { line: 1, .. })));
    assert!(matches!(parse_csv(&format!("{CSV_HEADER}\n1,2,3\n")), Err(ExperimentError::Parse { line: 2, .. })));
    let svg = report_to_svg(&rep);
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn export_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let outputs = Outputs {
        csv: Some(dir.path().join("r.csv")),
        json: Some(dir.path().join("r.json")),
        svg: Some(dir.path().join("r.svg")),
    };
    let sc = StudyConfig {
        outputs: outputs.clone(),
        ..small(vec![1, 2], vec![])
    };
    let rep = run_study(&sc).unwrap();
    let csv = std::fs::read_to_string(outputs.csv.unwrap()).unwrap();
    assert_eq!(csv, report_to_csv(&rep));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(outputs.json.unwrap()).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 2);
    assert!(json["runtimeMs"].is_u64());
    assert!(std::fs::read_to_string(outputs.svg.unwrap()).unwrap().contains("<polyline"));
    let bad = Outputs {
        csv: Some(dir.path().join("missing/dir/r.csv")),
        ..Outputs::default()
    };
    assert!(matches!(export_report(&rep, &bad), Err(ExperimentError::Io { .. })));
}

#[test]
fn study_csv_deterministic() {
    let sc = small(vec![1, 2, 3], vec![Check::EnergyBound, Check::BoundaryAverage, Check::Poincare, Check::Spi]);
    let a = report_to_csv(&run_study(&sc).unwrap());
    let b = report_to_csv(&run_study(&sc).unwrap());
    assert_eq!(a, b);
}

#[test]
fn config_json_and_validation() {
    let sc = StudyConfig::default();
    let back = StudyConfig::from_json(&sc.to_json()).unwrap();
    assert_eq!(back, sc);
    assert_eq!(back.hash_hex(), sc.hash_hex());
    let text = r#"{"r":0.5,"theta":0,"beta1":0.7,"beta2":4,"nRange":[1,2],"h":0.5,"alpha":1,"beta":1,
        "f":"1","u0":"0","mode":"critical","checks":["energyBound"],"kappa":0.6}"#;
    let c = StudyConfig::from_json(text).unwrap();
    assert_eq!(c.mode, Mode::CriticalTheta0);
    assert_eq!(c.grid, 400);
    c.validate().unwrap();
    assert!(StudyConfig::from_json(r#"{"bogus":1}"#).is_err());
    let bad = [
        StudyConfig { kappa: 0.3, ..StudyConfig::default() },
        StudyConfig { reference_level: Some(3), ..StudyConfig::default() },
        StudyConfig { n_range: vec![], ..StudyConfig::default() },
        StudyConfig { n_range: vec![1, 1], ..StudyConfig::default() },
        StudyConfig { f: "x3".into(), ..StudyConfig::default() },
        StudyConfig { beta: 0.0, ..critical(StudyConfig::default()) },
    ];
    for b in bad {
        let e = b.validate().unwrap_err();
        assert!(e.is_validation(), "{e}");
    }
}

#[test]
fn recovery_gaps_shrink_subcritical() {
    let gaps = recovery_gaps(&small(vec![1, 2, 3, 4], vec![])).unwrap();
    assert_eq!(gaps.len(), 3);
    for w in gaps.windows(2) {
        assert!(w[1].1 < w[0].1, "{gaps:?}");
    }
}

#[test]
fn trace_cross_check_second_order() {
    let u = Expr::parse("sin(x1) + x2*x2").unwrap();
    let errs: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&h| {
            let (fe, exact) = trace_cross_check(&sub(), 2, h, &u).unwrap();
            (fe - exact).abs()
        })
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.0..=5.0).contains(&ratio), "{errs:?}");
    }
}

#[test]
fn suites_pass() {
    for s in ["geometry", "measure", "meshing", "fem"] {
        for c in run_suite(s).unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
    assert!(matches!(run_suite("nope"), Err(ExperimentError::Config(_))));
}
