use proptest::prelude::*;
use ramlab::geometry::{build_tree, default_domain, make_config, theta0_holes, IfsConfig};
use ramlab::meshing::*;
use ramlab::point::{orient, polygon_area, Point};
use std::collections::{BTreeSet, HashMap};
use std::f64::consts::PI;

fn crit() -> IfsConfig {
    make_config(0.5, 0.0, 0.7, 4.0).unwrap()
}

fn sub() -> IfsConfig {
    make_config(0.45, PI / 5.0, 0.7, 4.0).unwrap()
}

fn opts(h: f64, critical: bool) -> MeshOptions {
    MeshOptions {
        h,
        domain: None,
        critical,
    }
}

#[test]
fn reference_cell_sides() {
    let cfg = crit();
    let rm = mesh_reference_cell(&cfg, 0.5).unwrap();
    assert_eq!(rm.base.len(), 5);
    for i in 0..2 {
        assert_eq!(rm.top[i].len(), rm.base.len());
        let f = cfg.map(i as u8 + 1);
        for (k, &b) in rm.base.iter().enumerate() {
            let img = f.apply(rm.vertices[b]);
            assert!(img.dist(rm.vertices[rm.top[i][k]]) < 1e-14);
        }
    }
    for t in &rm.triangles {
        let [a, b, c] = t.map(|v| rm.vertices[v]);
        assert!(orient(a, b, c) > 0.0);
        assert!(min_angle_deg(a, b, c) >= 15.0);
    }
    let y0 = cfg.y0();
    assert!((rm.area() - polygon_area(&y0)).abs() < 1e-12);
}

#[test]
fn reference_cell_scaling() {
    for cfg in [crit(), sub()] {
        let a = mesh_reference_cell(&cfg, 0.2).unwrap().vertices.len() as f64;
        let b = mesh_reference_cell(&cfg, 0.1).unwrap().vertices.len() as f64;
        let ratio = b / a;
        assert!((ratio - 4.0).abs() <= 0.3 * 4.0, "ratio {ratio}");
    }
}

#[test]
fn reference_cell_rejects_bad_h() {
    assert!(matches!(
        mesh_reference_cell(&crit(), 0.0),
        Err(MeshError::InvalidArgument(_))
    ));
    assert!(matches!(
        mesh_reference_cell(&crit(), f64::NAN),
        Err(MeshError::InvalidArgument(_))
    ));
}

#[test]
fn interior_counts_and_coverage() {
    let cfg = sub();
    let rm = mesh_reference_cell(&cfg, 0.25).unwrap();
    let one = build_interior_mesh(&cfg, 1, &rm).unwrap();
    assert_eq!(one.vertices, rm.vertices);
    assert_eq!(one.triangles, rm.triangles);
    let three = build_interior_mesh(&cfg, 3, &rm).unwrap();
    assert_eq!(three.triangles.len(), rm.triangles.len() * 7);
    let area: f64 = three
        .triangles
        .iter()
        .map(|t| 0.5 * orient(three.vertices[t[0]], three.vertices[t[1]], three.vertices[t[2]]))
        .sum();
    let y0 = polygon_area(&cfg.y0());
    let expect: f64 = (0..3).map(|k| 2f64.powi(k) * cfg.r().powi(2 * k) * y0).sum();
    assert!((area - expect).abs() <= 1e-9 * expect);
    assert!(build_interior_mesh(&cfg, 0, &rm).is_err());
}

#[test]
fn interface_nodes_are_mapped_base_nodes() {
    let cfg = sub();
    let n = 3;
    let rm = mesh_reference_cell(&cfg, 0.3).unwrap();
    let im = build_interior_mesh(&cfg, n, &rm).unwrap();
    let images: Vec<Point> = cfg
        .word_maps(n)
        .iter()
        .flat_map(|m| rm.base.iter().map(|&b| m.apply(rm.vertices[b])).collect::<Vec<_>>())
        .collect();
    assert_eq!(im.interface_vertices.len(), (1 << n) * rm.base.len());
    for &v in &im.interface_vertices {
        let p = im.vertices[v];
        assert!(images.iter().any(|q| q.dist(p) < 1e-12));
    }
}

#[test]
fn mapped_triangles_are_similar() {
    let cfg = sub();
    let rm = mesh_reference_cell(&cfg, 0.3).unwrap();
    let im = build_interior_mesh(&cfg, 4, &rm).unwrap();
    let nt = rm.triangles.len();
    let angles = |p: [Point; 3]| {
        let ang = |a: Point, b: Point, c: Point| (b - a).cross(c - a).atan2((b - a).dot(c - a));
        [ang(p[0], p[1], p[2]), ang(p[1], p[2], p[0]), ang(p[2], p[0], p[1])]
    };
    for (i, t) in im.triangles.iter().enumerate() {
        let k = im.cells[im.tri_cell[i]].len() as i32;
        let r = rm.triangles[i % nt];
        let p = t.map(|v| im.vertices[v]);
        let q = r.map(|v| rm.vertices[v]);
        let (a, b) = (angles(p), angles(q));
        for j in 0..3 {
            assert!((a[j] - b[j]).abs() < 1e-10);
        }
        let ratio = p[0].dist(p[1]) / q[0].dist(q[1]);
        assert!((ratio - cfg.r().powi(k)).abs() < 1e-10);
    }
}

#[test]
fn exterior_euler_one_hole() {
    let cfg = sub();
    let rm = mesh_reference_cell(&cfg, 0.3).unwrap();
    let im = build_interior_mesh(&cfg, 1, &rm).unwrap();
    let ext = build_exterior_mesh(&cfg, &im, default_domain(&cfg), 0.5, None).unwrap();
    let mut edges = BTreeSet::new();
    for t in &ext.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let chi = ext.vertices.len() as i64 - edges.len() as i64 + ext.triangles.len() as i64;
    assert_eq!(chi, 0);
    assert!(ext.min_angle_deg >= MIN_ANGLE_GATE_DEG);
}

#[test]
fn exterior_requires_domain_containment() {
    let cfg = sub();
    let rm = mesh_reference_cell(&cfg, 0.3).unwrap();
    let im = build_interior_mesh(&cfg, 2, &rm).unwrap();
    let tb = build_tree(&cfg, 2).unwrap().bbox();
    assert!(matches!(
        build_exterior_mesh(&cfg, &im, tb, 0.5, None),
        Err(MeshError::InvalidArgument(_))
    ));
}

#[test]
fn critical_holes_and_strip_area() {
    let cfg = crit();
    let m = build_slit_mesh(&cfg, 3, &opts(0.25, true)).unwrap();
    let holes: BTreeSet<String> = m
        .regions
        .iter()
        .filter_map(|r| match r {
            RegionTag::Hole(a) => Some(a.to_string()),
            _ => None,
        })
        .collect();
    assert_eq!(holes.len(), 7);
    let strip = m.region_area(|r| *r == RegionTag::StripLow);
    assert!((strip - 7.0 / 64.0).abs() < 1e-9, "{strip}");
    let ho = theta0_holes(&cfg, 3).unwrap();
    for t in 0..m.triangles.len() {
        if m.regions[t] == RegionTag::StripLow {
            let p = m.triangle_points(t);
            let c = (p[0] + p[1] + p[2]) * (1.0 / 3.0);
            assert!(ho.hole_of(c).is_some() && ho.in_strip_band(c.y));
        }
    }
}

fn check_slit(m: &SlitMesh, cfg: &IfsConfig) {
    // every triangle positively oriented
    for t in 0..m.triangles.len() {
        assert!(m.triangle_area(t) > 0.0);
    }
    let d = default_domain(cfg);
    assert!((m.total_area() - d.area()).abs() <= 1e-9 * d.area());

    let mut inc: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (i, t) in m.triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            inc.entry((a.min(b), a.max(b))).or_default().push(i);
        }
    }
    let mut tagged: HashMap<(usize, usize), &EdgeTag> = HashMap::new();
    for (a, b, t) in &m.edges {
        tagged.insert((*a.min(b), *a.max(b)), t);
    }
    for (e, ts) in &inc {
        assert!(ts.len() == 1 || ts.len() == 2, "edge {e:?} has {} triangles", ts.len());
        if ts.len() == 1 {
            let tag = tagged.get(e).unwrap_or_else(|| panic!("untagged boundary edge {e:?}"));
            assert!(!matches!(tag, EdgeTag::Interface(_) | EdgeTag::HoleBdry));
        }
    }
    for (a, b, t) in &m.edges {
        let key = (*a.min(b), *a.max(b));
        let ts = &inc[&key];
        match t {
            EdgeTag::Interface(s) => {
                assert_eq!(s.len(), m.level);
                assert_eq!(ts.len(), 2);
                let ints = ts.iter().filter(|&&i| m.regions[i].is_interior()).count();
                assert_eq!(ints, 1);
                assert_eq!(m.dofs[*a].1, DofSide::Shared);
                assert_eq!(m.dofs[*b].1, DofSide::Shared);
            }
            EdgeTag::WallInt | EdgeTag::BaseDirichlet => {
                assert_eq!(ts.len(), 1);
                assert!(m.regions[ts[0]].is_interior());
            }
            EdgeTag::WallExt | EdgeTag::BaseNeumann | EdgeTag::OuterBox => {
                assert_eq!(ts.len(), 1);
                assert!(!m.regions[ts[0]].is_interior());
            }
            EdgeTag::HoleBdry => assert_eq!(ts.len(), 2),
        }
    }
    // wall pairs: same geometry, disjoint DOFs
    let geo = |a: usize, b: usize| {
        let (p, q) = (m.dofs[a].0, m.dofs[b].0);
        (p.min(q), p.max(q))
    };
    let ints: BTreeSet<_> = m
        .edges
        .iter()
        .filter(|e| e.2 == EdgeTag::WallInt)
        .map(|e| geo(e.0, e.1))
        .collect();
    let exts: BTreeSet<_> = m
        .edges
        .iter()
        .filter(|e| e.2 == EdgeTag::WallExt)
        .map(|e| geo(e.0, e.1))
        .collect();
    assert_eq!(ints, exts);
    // a wall end on Γⁿ keeps its single shared DOF
    for e in &m.edges {
        let sides = [m.dofs[e.0].1, m.dofs[e.1].1];
        match e.2 {
            EdgeTag::WallExt => {
                assert!(!sides.contains(&DofSide::Interior));
                assert!(sides.contains(&DofSide::Exterior));
            }
            EdgeTag::WallInt => assert!(!sides.contains(&DofSide::Exterior)),
            _ => {}
        }
    }
    let tree = build_tree(cfg, m.level).unwrap();
    assert!((m.interface_length - tree.total_interface_length).abs() < 1e-12);
}

#[test]
fn slit_mesh_structure() {
    for (cfg, critical) in [(sub(), false), (crit(), true)] {
        for n in [1, 2, 4] {
            let m = build_slit_mesh(&cfg, n, &opts(0.3, critical)).unwrap();
            assert_eq!(m.level, n);
            check_slit(&m, &cfg);
        }
    }
}

#[test]
fn dof_bookkeeping() {
    let cfg = sub();
    let rm = mesh_reference_cell(&cfg, 0.3).unwrap();
    let im = build_interior_mesh(&cfg, 3, &rm).unwrap();
    let ext = build_exterior_mesh(&cfg, &im, default_domain(&cfg), 0.4, None).unwrap();
    let m = fuse_slit(&im, &ext).unwrap();
    assert_eq!(
        m.dof_count(),
        im.vertices.len() + ext.vertices.len() - im.interface_vertices.len()
    );
    let duplicated = m
        .dofs
        .iter()
        .filter(|(v, s)| *s == DofSide::Exterior && *v < im.vertices.len())
        .count();
    let glued = fuse_without_slit(&im, &ext).unwrap();
    assert_eq!(m.dof_count() - glued.dof_count(), duplicated);
    assert!(duplicated > 0);

    // indicator of the interior: single-valued on Γⁿ, jumps across walls
    let u: Vec<f64> = m
        .dofs
        .iter()
        .map(|(_, s)| if *s == DofSide::Exterior { 0.0 } else { 1.0 })
        .collect();
    for (a, b, t) in &m.edges {
        match t {
            EdgeTag::Interface(_) => {
                assert_eq!(u[*a], 1.0);
                assert_eq!(u[*b], 1.0);
            }
            EdgeTag::WallExt => assert!(u[*a] + u[*b] <= 1.0),
            _ => {}
        }
    }
}

#[test]
fn node_mismatch_detected() {
    let cfg = sub();
    let rm = mesh_reference_cell(&cfg, 0.3).unwrap();
    let im2 = build_interior_mesh(&cfg, 2, &rm).unwrap();
    let im3 = build_interior_mesh(&cfg, 3, &rm).unwrap();
    let ext2 = build_exterior_mesh(&cfg, &im2, default_domain(&cfg), 0.5, None).unwrap();
    assert!(matches!(fuse_slit(&im3, &ext2), Err(MeshError::NodeMismatch { .. })));
}

#[test]
fn text_roundtrip_is_exact() {
    let m = build_slit_mesh(&crit(), 2, &opts(0.3, true)).unwrap();
    let txt = m.to_text();
    assert!(txt.starts_with("ramlab-mesh v1\n"));
    let back = SlitMesh::from_text(&txt).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.to_text(), txt);
}

#[test]
fn text_parse_errors() {
    assert!(matches!(
        SlitMesh::from_text("nope\n"),
        Err(MeshError::Parse { line: 1, .. })
    ));
    let m = build_slit_mesh(&sub(), 1, &opts(0.5, false)).unwrap();
    let txt = m.to_text().replace(" E\n", " Q\n");
    assert!(matches!(SlitMesh::from_text(&txt), Err(MeshError::Parse { .. })));
    let short: String = m.to_text().lines().take(10).map(|l| format!("{l}\n")).collect();
    assert!(matches!(SlitMesh::from_text(&short), Err(MeshError::Parse { .. })));
}

#[test]
fn mesh_is_deterministic() {
    let a = build_slit_mesh(&crit(), 3, &opts(0.3, true)).unwrap();
    let b = build_slit_mesh(&crit(), 3, &opts(0.3, true)).unwrap();
    assert_eq!(a.to_text(), b.to_text());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn random_subcritical_meshes_conform(r in 0.3f64..0.45, theta in 0.1f64..0.8, n in 1usize..4) {
        let cfg = make_config(r, theta, 0.7, 4.0).unwrap();
        let m = build_slit_mesh(&cfg, n, &opts(0.35, false)).unwrap();
        check_slit(&m, &cfg);
    }
}
