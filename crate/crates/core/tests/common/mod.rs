#![allow(dead_code)]

use ramlab::fem::FeField;
use ramlab::meshing::{DofSide, EdgeTag, RegionTag, SlitMesh};
use ramlab::point::Point;

/// Uniform right-triangle mesh of (0,1)² with the whole boundary tagged BaseDirichlet.
pub fn unit_square(k: usize) -> SlitMesh {
    let mut vertices = Vec::new();
    for j in 0..=k {
        for i in 0..=k {
            vertices.push(Point::new(i as f64 / k as f64, j as f64 / k as f64));
        }
    }
    let id = |i: usize, j: usize| j * (k + 1) + i;
    let mut triangles = Vec::new();
    for j in 0..k {
        for i in 0..k {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let mut edges = Vec::new();
    for s in 0..k {
        edges.push((id(s, 0), id(s + 1, 0), EdgeTag::BaseDirichlet));
        edges.push((id(s, k), id(s + 1, k), EdgeTag::BaseDirichlet));
        edges.push((id(0, s), id(0, s + 1), EdgeTag::BaseDirichlet));
        edges.push((id(k, s), id(k, s + 1), EdgeTag::BaseDirichlet));
    }
    let nv = vertices.len();
    SlitMesh {
        level: 0,
        vertices,
        dofs: (0..nv).map(|v| (v, DofSide::Exterior)).collect(),
        regions: vec![RegionTag::ExteriorOuter; triangles.len()],
        triangles,
        edges,
        interface_length: 0.0,
    }
}

// 7-point degree-5 rule on the reference triangle: (λ1, λ2, weight).
const DUNAVANT5: [(f64, f64, f64); 7] = [
    (1.0 / 3.0, 1.0 / 3.0, 0.225),
    (0.059_715_871_789_770, 0.470_142_064_105_115, 0.132_394_152_788_506),
    (0.470_142_064_105_115, 0.059_715_871_789_770, 0.132_394_152_788_506),
    (0.470_142_064_105_115, 0.470_142_064_105_115, 0.132_394_152_788_506),
    (0.797_426_985_353_087, 0.101_286_507_323_456, 0.125_939_180_544_827),
    (0.101_286_507_323_456, 0.797_426_985_353_087, 0.125_939_180_544_827),
    (0.101_286_507_323_456, 0.101_286_507_323_456, 0.125_939_180_544_827),
];

/// L² error of a P1 field against `exact`, exact when `exact` is quadratic.
pub fn l2_error(m: &SlitMesh, u: &FeField, exact: impl Fn(Point) -> f64) -> f64 {
    let mut s = 0.0;
    for t in 0..m.triangles.len() {
        let [a, b, c] = m.triangle_points(t);
        let v = m.triangles[t].map(|d| u.values[d]);
        for (l1, l2, w) in DUNAVANT5 {
            let l0 = 1.0 - l1 - l2;
            let p = Point::new(l0 * a.x + l1 * b.x + l2 * c.x, l0 * a.y + l1 * b.y + l2 * c.y);
            let e = l0 * v[0] + l1 * v[1] + l2 * v[2] - exact(p);
            s += m.triangle_area(t) * w * e * e;
        }
    }
    s.sqrt()
}
