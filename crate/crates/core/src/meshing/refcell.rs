use super::{face_inside, flood_component, min_angle_deg, MeshError, Result};
use crate::geometry::IfsConfig;
use crate::point::{orient, Point};
use spade::handles::FixedVertexHandle;
use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};
use std::collections::HashMap;

/// Triangulation of the reference cell Y⁰ with side node lists.
///
/// `top[0]` lies on f1(Γ⁰) and `top[1]` on f2(Γ⁰); both are ordered like
/// `base` so that `top[i][k]` is the image of `base[k]` under f_{i+1}.
/// Wall chains run in counter-clockwise boundary order.
#[derive(Clone, Debug)]
pub struct RefCellMesh {
    pub h: f64,
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub base: Vec<usize>,
    pub top: [Vec<usize>; 2],
    pub right_wall: Vec<usize>,
    pub middle_wall: Vec<usize>,
    pub left_wall: Vec<usize>,
}

fn subdivide(a: Point, b: Point, h: f64) -> Vec<Point> {
    let k = ((a.dist(b) / h).ceil() as usize).max(1);
    (0..=k).map(|i| a.lerp(b, i as f64 / k as f64)).collect()
}

pub(crate) fn cdt_point(p: Point) -> Point2<f64> {
    Point2::new(p.x, p.y)
}

pub fn mesh_reference_cell(cfg: &IfsConfig, h: f64) -> Result<RefCellMesh> {
    let y = cfg.y0();
    // Sides shorter than h simply stay unsplit.
    if !(h > 0.0 && h < 2.0) {
        return Err(MeshError::InvalidArgument(format!("h = {h} must lie in (0, 2)")));
    }
    for i in 0..6 {
        if orient(y[i], y[(i + 1) % 6], y[(i + 2) % 6]) < -1e-14 {
            return Err(MeshError::DegenerateCell);
        }
    }
    let n = (2.0 / h).ceil() as usize;
    let base_pts: Vec<Point> = (0..=n)
        .map(|k| Point::new(-1.0 + 2.0 * k as f64 / n as f64, 0.0))
        .collect();
    let f1 = cfg.map(1);
    let f2 = cfg.map(2);
    let top1: Vec<Point> = base_pts.iter().map(|&p| f1.apply(p)).collect();
    let top2: Vec<Point> = base_pts.iter().map(|&p| f2.apply(p)).collect();

    // Boundary loop, counter-clockwise, each point once.
    let mut ring: Vec<Point> = Vec::new();
    let mut base = Vec::new();
    let mut top = [vec![0; n + 1], vec![0; n + 1]];
    for &p in &base_pts {
        base.push(ring.len());
        ring.push(p);
    }
    let rw = subdivide(y[1], y[2], h);
    let mut right_wall = vec![base[n]];
    for &p in &rw[1..rw.len() - 1] {
        right_wall.push(ring.len());
        ring.push(p);
    }
    for k in (0..=n).rev() {
        top[1][k] = ring.len();
        ring.push(top2[k]);
    }
    right_wall.push(top[1][n]);
    let mw = subdivide(y[3], y[4], h);
    let mut middle_wall = vec![top[1][0]];
    for &p in &mw[1..mw.len() - 1] {
        middle_wall.push(ring.len());
        ring.push(p);
    }
    for k in (0..=n).rev() {
        top[0][k] = ring.len();
        ring.push(top1[k]);
    }
    middle_wall.push(top[0][n]);
    let lw = subdivide(y[5], y[0], h);
    let mut left_wall = vec![top[0][0]];
    for &p in &lw[1..lw.len() - 1] {
        left_wall.push(ring.len());
        ring.push(p);
    }
    left_wall.push(base[0]);

    let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::new();
    let mut handles: Vec<FixedVertexHandle> = Vec::with_capacity(ring.len());
    for &p in &ring {
        handles.push(
            cdt.insert(cdt_point(p))
                .map_err(|e| MeshError::Triangulation(format!("{e:?}")))?,
        );
    }
    for i in 0..ring.len() {
        cdt.add_constraint(handles[i], handles[(i + 1) % ring.len()]);
    }
    let params = RefinementParameters::<f64>::new()
        .with_angle_limit(AngleLimit::from_deg(25.0))
        .with_max_allowed_area(0.5 * h * h)
        .keep_constraint_edges()
        .exclude_outer_faces(true)
        .with_max_additional_vertices(1_000_000);
    cdt.refine(params);

    let mut index: HashMap<usize, usize> = HashMap::new();
    for (i, hnd) in handles.iter().enumerate() {
        index.insert(hnd.index(), i);
    }
    let mut vertices = ring.clone();
    for v in cdt.vertices() {
        let key = v.fix().index();
        if let std::collections::hash_map::Entry::Vacant(e) = index.entry(key) {
            e.insert(vertices.len());
            let p = v.position();
            vertices.push(Point::new(p.x, p.y));
        }
    }
    let seed = face_inside(&cdt, &y).ok_or(MeshError::DegenerateCell)?;
    let keep = flood_component(&cdt, seed);
    let mut triangles = Vec::new();
    for f in cdt.inner_faces() {
        if !keep.contains(&f.fix().index()) {
            continue;
        }
        let vs = f.vertices();
        let t = [
            index[&vs[0].fix().index()],
            index[&vs[1].fix().index()],
            index[&vs[2].fix().index()],
        ];
        triangles.push(t);
    }
    let mesh = RefCellMesh {
        h,
        vertices,
        triangles,
        base,
        top,
        right_wall,
        middle_wall,
        left_wall,
    };
    let ang = mesh
        .triangles
        .iter()
        .map(|t| min_angle_deg(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]))
        .fold(f64::INFINITY, f64::min);
    if ang < 15.0 {
        return Err(MeshError::QualityFailure { min_angle_deg: ang });
    }
    Ok(mesh)
}

impl RefCellMesh {
    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| 0.5 * orient(self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]))
            .sum()
    }

    /// Boundary chains with the side they belong to, counter-clockwise.
    pub fn wall_chains(&self) -> [(&Vec<usize>, crate::geometry::WallSide); 3] {
        use crate::geometry::WallSide::*;
        [
            (&self.right_wall, Right),
            (&self.middle_wall, Middle),
            (&self.left_wall, Left),
        ]
    }
}
