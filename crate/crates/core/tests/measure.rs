use proptest::prelude::*;
use ramlab::geometry::{build_tree, make_config, IfsConfig};
use ramlab::measure::{
    boundary_average_sq, integrate_mu, mu_nodes, piecewise_projection, slobodeckij_seminorm, MuQuadrature, TraceSamples,
};
use ramlab::point::Point;
use std::f64::consts::PI;

fn config() -> impl Strategy<Value = IfsConfig> {
    (0.2f64..0.65, 0.0f64..1.2).prop_map(|(r, t)| make_config(r, t, 0.9, 3.0).unwrap())
}

fn lipschitz(a: f64, b: f64) -> impl Fn(Point) -> f64 {
    // |∇g| ≤ |a| + |b|
    move |p: Point| a * p.x.sin() + b * (0.5 * p.y).cos() * 2.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn level_difference_bounded(cfg in config(), m in 1usize..9, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let g = lipschitz(a, b);
        let lip = a.abs() + b.abs();
        let x = cfg.anchor();
        let step = cfg.f(1, x).dist(x).max(cfg.f(2, x).dist(x));
        let d = (integrate_mu(&cfg, m + 1, &g) - integrate_mu(&cfg, m, &g)).abs();
        prop_assert!(d <= lip * step * cfg.r().powi(m as i32) + 1e-13);
    }

    #[test]
    fn self_similar_split(cfg in config(), m in 1usize..9, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let g = lipschitz(a, b);
        let whole = integrate_mu(&cfg, m, &g);
        let left = integrate_mu(&cfg, m - 1, |p| g(cfg.f(1, p)));
        let right = integrate_mu(&cfg, m - 1, |p| g(cfg.f(2, p)));
        prop_assert!((whole - 0.5 * (left + right)).abs() < 1e-12);
    }

    #[test]
    fn odd_functions_nearly_balance(cfg in config(), m in 0usize..10, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        // the anchor sits off the axis, so the balance is only up to r^m |x*_1|
        let v = integrate_mu(&cfg, m, |p| a * p.x.sin() + b * p.x);
        let bound = (a.abs() + b.abs()) * cfg.r().powi(m as i32) * cfg.anchor().x.abs();
        prop_assert!(v.abs() <= bound + 1e-13, "{} vs {}", v, bound);
    }

    #[test]
    fn seminorm_homogeneous(cfg in config(), m in 2usize..6, c in -3.0f64..3.0, s in 0.1f64..0.9, p in 1.0f64..3.0) {
        let v: Vec<f64> = mu_nodes(&cfg, m).iter().map(|q| q.x + q.y * q.y).collect();
        let w: Vec<f64> = v.iter().map(|x| c * x).collect();
        let a = slobodeckij_seminorm(&cfg, m, &v, s, p).unwrap();
        let b = slobodeckij_seminorm(&cfg, m, &w, s, p).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((b - c.abs().powf(p) * a).abs() <= 1e-10 * a.max(1.0));
    }

    #[test]
    fn mean_square_dominates_mean(n in 1usize..6, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let cfg = make_config(0.45, PI / 5.0, 0.7, 4.0).unwrap();
        let t = build_tree(&cfg, n).unwrap();
        let tr = TraceSamples::from_fn(&t, 8, lipschitz(a, b));
        let sq = boundary_average_sq(&t, &tr).unwrap();
        let proj = piecewise_projection(&t, &tr).unwrap();
        let mean = proj.iter().map(|(_, v)| v).sum::<f64>() / proj.len() as f64;
        let mean_sq = proj.iter().map(|(_, v)| v * v).sum::<f64>() / proj.len() as f64;
        prop_assert!(sq >= mean_sq - 1e-12);
        prop_assert!(mean_sq >= mean * mean - 1e-12);
    }
}

#[test]
fn unit_mass_and_weights() {
    let cfg = make_config(0.5, 0.0, 0.7, 4.0).unwrap();
    for m in 0..=10 {
        assert!((integrate_mu(&cfg, m, |_| 1.0) - 1.0).abs() < 1e-15);
        let q = MuQuadrature::new(&cfg, m);
        assert_eq!(q.nodes.len(), 1 << m);
        assert_eq!(q.weight, 0.5f64.powi(m as i32));
    }
}

#[test]
fn half_mass_left_of_axis() {
    let cfg = make_config(0.45, PI / 5.0, 0.7, 4.0).unwrap();
    let left = integrate_mu(&cfg, 10, |p| if p.x < 0.0 { 1.0 } else { 0.0 });
    assert!((left - 0.5).abs() < 1e-15);
}

#[test]
fn height_average_flat_angle() {
    let cfg = make_config(0.5, 0.0, 0.7, 4.0).unwrap();
    let t = build_tree(&cfg, 3).unwrap();
    let y = TraceSamples::from_fn(&t, 4, |p| p.y);
    assert!((boundary_average_sq(&t, &y).unwrap() - 49.0).abs() < 1e-12);
    // both maps send height 8 to height 8, so every node sits on that line
    let m = 6;
    let mean = integrate_mu(&cfg, m, |p| p.y);
    assert!((mean - 8.0).abs() < 1e-12, "{mean}");
}

#[test]
fn seminorm_rejects_bad_arguments() {
    let cfg = make_config(0.5, 0.0, 0.7, 4.0).unwrap();
    let v = vec![0.0; 4];
    assert!(slobodeckij_seminorm(&cfg, 2, &v, 1.0, 2.0).is_err());
    assert!(slobodeckij_seminorm(&cfg, 2, &v, 0.5, 0.5).is_err());
    assert!(slobodeckij_seminorm(&cfg, 3, &v, 0.5, 2.0).is_err());
}
