//! Slit meshes: mapped reference-cell interior, constrained Delaunay exterior, DOF fusion.

mod exterior;
mod interior;
mod refcell;

pub use exterior::{build_exterior_mesh, ExteriorMesh, MIN_ANGLE_GATE_DEG};
pub use interior::{build_interior_mesh, InteriorMesh};
pub use refcell::{mesh_reference_cell, RefCellMesh};

use crate::geometry::{default_domain, theta0_holes, Address, BoundaryTag, IfsConfig};
use crate::point::{in_convex_polygon, orient, polygon_area, BBox, Point};
use spade::handles::{FixedFaceHandle, InnerTag};
use spade::Triangulation as _;
use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("reference cell is degenerate or nonconvex")]
    DegenerateCell,
    #[error("gluing mismatch at cell {address}: distance {distance:e}")]
    GluingMismatch { address: String, distance: f64 },
    #[error("seed conflict: {0}")]
    SeedConflict(String),
    #[error("mesh quality failure: minimum angle {min_angle_deg:.3} degrees")]
    QualityFailure { min_angle_deg: f64 },
    #[error("node mismatch: interface vertex ({x}, {y}) has no exterior partner")]
    NodeMismatch { x: f64, y: f64 },
    #[error("triangulation failure: {0}")]
    Triangulation(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("mesh file parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, MeshError>;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RegionTag {
    Interior(Address),
    ExteriorOuter,
    Hole(Address),
    StripLow,
}

impl RegionTag {
    pub fn is_interior(&self) -> bool {
        matches!(self, RegionTag::Interior(_))
    }

    fn encode(&self) -> String {
        match self {
            RegionTag::Interior(a) => format!("I{a}"),
            RegionTag::ExteriorOuter => "E".into(),
            RegionTag::Hole(a) => format!("H{a}"),
            RegionTag::StripLow => "S".into(),
        }
    }

    fn decode(s: &str) -> Option<Self> {
        let addr = |t: &str| Address::parse(t).ok();
        match s.chars().next()? {
            'I' => Some(RegionTag::Interior(addr(&s[1..])?)),
            'E' if s.len() == 1 => Some(RegionTag::ExteriorOuter),
            'H' => Some(RegionTag::Hole(addr(&s[1..])?)),
            'S' if s.len() == 1 => Some(RegionTag::StripLow),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum EdgeTag {
    BaseDirichlet,
    BaseNeumann,
    WallInt,
    WallExt,
    Interface(Address),
    OuterBox,
    HoleBdry,
}

impl EdgeTag {
    fn encode(&self) -> String {
        match self {
            EdgeTag::BaseDirichlet => "BD".into(),
            EdgeTag::BaseNeumann => "BN".into(),
            EdgeTag::WallInt => "WI".into(),
            EdgeTag::WallExt => "WE".into(),
            EdgeTag::Interface(a) => format!("IF{a}"),
            EdgeTag::OuterBox => "OB".into(),
            EdgeTag::HoleBdry => "HB".into(),
        }
    }

    fn decode(s: &str) -> Option<Self> {
        Some(match s {
            "BD" => EdgeTag::BaseDirichlet,
            "BN" => EdgeTag::BaseNeumann,
            "WI" => EdgeTag::WallInt,
            "WE" => EdgeTag::WallExt,
            "OB" => EdgeTag::OuterBox,
            "HB" => EdgeTag::HoleBdry,
            _ if s.starts_with("IF") => EdgeTag::Interface(Address::parse(&s[2..]).ok()?),
            _ => return None,
        })
    }
}

/// Which side of the slit a DOF lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DofSide {
    Interior = 0,
    Exterior = 1,
    Shared = 2,
}

/// Fused interior/exterior triangulation carrying the discrete space.
#[derive(Clone, Debug, PartialEq)]
pub struct SlitMesh {
    pub level: usize,
    pub vertices: Vec<Point>,
    /// (geometric vertex, side) per DOF.
    pub dofs: Vec<(usize, DofSide)>,
    /// DOF triples, counter-clockwise.
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<RegionTag>,
    /// DOF pairs with their tag.
    pub edges: Vec<(usize, usize, EdgeTag)>,
    pub interface_length: f64,
}

pub fn min_angle_deg(a: Point, b: Point, c: Point) -> f64 {
    let ang = |p: Point, q: Point, r: Point| {
        let u = q - p;
        let v = r - p;
        u.cross(v).abs().atan2(u.dot(v)).to_degrees()
    };
    ang(a, b, c).min(ang(b, c, a)).min(ang(c, a, b))
}

fn snap_key(p: Point) -> (i64, i64) {
    ((p.x * 1e12).round() as i64, (p.y * 1e12).round() as i64)
}

/// Fuse interior and exterior meshes: shared DOFs on Γⁿ, duplicated DOFs on walls and Γ⁰.
pub fn fuse_slit(interior: &InteriorMesh, exterior: &ExteriorMesh) -> Result<SlitMesh> {
    fuse(interior, exterior, true)
}

/// Same fusion with walls and Γ⁰ glued as ordinary edges (no slit).
pub fn fuse_without_slit(interior: &InteriorMesh, exterior: &ExteriorMesh) -> Result<SlitMesh> {
    fuse(interior, exterior, false)
}

fn fuse(interior: &InteriorMesh, exterior: &ExteriorMesh, slit: bool) -> Result<SlitMesh> {
    let mut on_boundary = vec![false; interior.vertices.len()];
    for (a, b, _) in &interior.boundary {
        on_boundary[*a] = true;
        on_boundary[*b] = true;
    }
    let mut on_if = vec![false; interior.vertices.len()];
    for &v in &interior.interface_vertices {
        on_if[v] = true;
    }
    let mut by_key: HashMap<(i64, i64), usize> = HashMap::new();
    for v in 0..interior.vertices.len() {
        if on_boundary[v] {
            by_key.insert(snap_key(interior.vertices[v]), v);
        }
    }
    let mut vertices = interior.vertices.clone();
    let mut dofs: Vec<(usize, DofSide)> = (0..interior.vertices.len())
        .map(|v| (v, if on_if[v] { DofSide::Shared } else { DofSide::Interior }))
        .collect();
    let mut ext_dof = Vec::with_capacity(exterior.vertices.len());
    let mut matched_if = vec![false; interior.vertices.len()];
    for &p in &exterior.vertices {
        let k = snap_key(p);
        let mut found = None;
        'outer: for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(&v) = by_key.get(&(k.0 + dx, k.1 + dy)) {
                    found = Some(v);
                    break 'outer;
                }
            }
        }
        let d = match found {
            Some(v) if on_if[v] || !slit => {
                matched_if[v] = true;
                v
            }
            Some(v) => {
                dofs.push((v, DofSide::Exterior));
                dofs.len() - 1
            }
            None => {
                vertices.push(p);
                dofs.push((vertices.len() - 1, DofSide::Exterior));
                dofs.len() - 1
            }
        };
        ext_dof.push(d);
    }
    for &v in &interior.interface_vertices {
        if !matched_if[v] {
            let p = interior.vertices[v];
            return Err(MeshError::NodeMismatch { x: p.x, y: p.y });
        }
    }
    let mut triangles = interior.triangles.clone();
    let mut regions: Vec<RegionTag> = interior
        .tri_cell
        .iter()
        .map(|&c| RegionTag::Interior(interior.cells[c].clone()))
        .collect();
    for (t, r) in exterior.triangles.iter().zip(&exterior.regions) {
        triangles.push(t.map(|v| ext_dof[v]));
        regions.push(r.clone());
    }
    let mut edges = Vec::new();
    let mut interface_length = 0.0;
    for (a, b, t) in &interior.boundary {
        let tag = match t {
            BoundaryTag::Base => EdgeTag::BaseDirichlet,
            BoundaryTag::Wall(..) => EdgeTag::WallInt,
            BoundaryTag::Interface(s) => {
                interface_length += interior.vertices[*a].dist(interior.vertices[*b]);
                EdgeTag::Interface(s.clone())
            }
        };
        edges.push((*a, *b, tag));
    }
    for (a, b, t) in &exterior.edges {
        if matches!(t, EdgeTag::Interface(_)) {
            continue;
        }
        edges.push((ext_dof[*a], ext_dof[*b], t.clone()));
    }
    Ok(SlitMesh {
        level: interior.level,
        vertices,
        dofs,
        triangles,
        regions,
        edges,
        interface_length,
    })
}

/// Options for the full mesh pipeline.
#[derive(Clone, Debug)]
pub struct MeshOptions {
    pub h: f64,
    pub domain: Option<BBox>,
    /// Insert strip lines for the flat-angle critical geometry.
    pub critical: bool,
}

/// Reference cell, interior, exterior and fusion in one call.
pub fn build_slit_mesh(cfg: &IfsConfig, n: usize, opts: &MeshOptions) -> Result<SlitMesh> {
    let rm = mesh_reference_cell(cfg, opts.h)?;
    let int = build_interior_mesh(cfg, n, &rm)?;
    let domain = opts.domain.unwrap_or_else(|| default_domain(cfg));
    let holes = if opts.critical {
        Some(theta0_holes(cfg, n).map_err(|e| MeshError::InvalidArgument(e.to_string()))?)
    } else {
        None
    };
    let ext = build_exterior_mesh(cfg, &int, domain, opts.h, holes.as_ref())?;
    fuse_slit(&int, &ext)
}

impl SlitMesh {
    pub fn dof_count(&self) -> usize {
        self.dofs.len()
    }

    pub fn dof_point(&self, d: usize) -> Point {
        self.vertices[self.dofs[d].0]
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|d| self.dof_point(d))
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * orient(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn region_area(&self, pred: impl Fn(&RegionTag) -> bool) -> f64 {
        (0..self.triangles.len())
            .filter(|&t| pred(&self.regions[t]))
            .map(|t| self.triangle_area(t))
            .sum()
    }

    pub fn bbox(&self) -> BBox {
        BBox::of(self.vertices.iter().copied())
    }

    /// DOFs carrying the Dirichlet condition (interior side of Γ⁰).
    pub fn dirichlet_dofs(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .edges
            .iter()
            .filter(|e| e.2 == EdgeTag::BaseDirichlet)
            .flat_map(|e| [e.0, e.1])
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Plain-text serialization; floats use the shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut s = String::from("ramlab-mesh v1\n");
        let _ = writeln!(s, "{}", self.vertices.len());
        for p in &self.vertices {
            let _ = writeln!(s, "{:?} {:?}", p.x, p.y);
        }
        let _ = writeln!(s, "{}", self.dofs.len());
        for (v, side) in &self.dofs {
            let _ = writeln!(s, "{} {}", v, *side as u8);
        }
        let _ = writeln!(s, "{}", self.triangles.len());
        for (t, r) in self.triangles.iter().zip(&self.regions) {
            let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], r.encode());
        }
        let _ = writeln!(s, "{}", self.edges.len());
        for (a, b, t) in &self.edges {
            let _ = writeln!(s, "{} {} {}", a, b, t.encode());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut rd = LineReader {
            lines: text.lines().collect(),
            pos: 0,
        };
        let perr = |line: usize, msg: &str| MeshError::Parse {
            line,
            msg: msg.into(),
        };
        let (l, head) = rd.next("header")?;
        if head.trim() != "ramlab-mesh v1" {
            return Err(perr(l, "bad header"));
        }
        let nv = rd.count("vertex")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (l, s) = rd.next("vertex")?;
            let mut it = s.split_whitespace();
            let x: f64 = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| perr(l, "bad x"))?;
            let y: f64 = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| perr(l, "bad y"))?;
            vertices.push(Point::new(x, y));
        }
        let nd = rd.count("dof")?;
        let mut dofs = Vec::with_capacity(nd);
        for _ in 0..nd {
            let (l, s) = rd.next("dof")?;
            let mut it = s.split_whitespace();
            let v: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| perr(l, "bad vertex id"))?;
            let side = match it.next() {
                Some("0") => DofSide::Interior,
                Some("1") => DofSide::Exterior,
                Some("2") => DofSide::Shared,
                _ => return Err(perr(l, "bad side")),
            };
            if v >= nv {
                return Err(perr(l, "vertex id out of range"));
            }
            dofs.push((v, side));
        }
        let nt = rd.count("triangle")?;
        let mut triangles = Vec::with_capacity(nt);
        let mut regions = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (l, s) = rd.next("triangle")?;
            let f: Vec<&str> = s.split_whitespace().collect();
            if f.len() != 4 {
                return Err(perr(l, "triangle needs 3 DOFs and a tag"));
            }
            let mut t = [0usize; 3];
            for k in 0..3 {
                t[k] = f[k].parse().map_err(|_| perr(l, "bad DOF"))?;
                if t[k] >= nd {
                    return Err(perr(l, "DOF out of range"));
                }
            }
            triangles.push(t);
            regions.push(RegionTag::decode(f[3]).ok_or_else(|| perr(l, "bad region tag"))?);
        }
        let ne = rd.count("edge")?;
        let mut edges = Vec::with_capacity(ne);
        let mut level = 0;
        for _ in 0..ne {
            let (l, s) = rd.next("edge")?;
            let f: Vec<&str> = s.split_whitespace().collect();
            if f.len() != 3 {
                return Err(perr(l, "edge needs 2 DOFs and a tag"));
            }
            let a: usize = f[0].parse().map_err(|_| perr(l, "bad DOF"))?;
            let b: usize = f[1].parse().map_err(|_| perr(l, "bad DOF"))?;
            if a >= nd || b >= nd {
                return Err(perr(l, "DOF out of range"));
            }
            let tag = EdgeTag::decode(f[2]).ok_or_else(|| perr(l, "bad edge tag"))?;
            if let EdgeTag::Interface(s) = &tag {
                level = s.len();
            }
            edges.push((a, b, tag));
        }
        let mut m = SlitMesh {
            level,
            vertices,
            dofs,
            triangles,
            regions,
            edges,
            interface_length: 0.0,
        };
        m.interface_length = m
            .edges
            .iter()
            .filter(|e| matches!(e.2, EdgeTag::Interface(_)))
            .map(|e| m.dof_point(e.0).dist(m.dof_point(e.1)))
            .sum();
        Ok(m)
    }
}

struct LineReader<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> LineReader<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let l = self.lines.get(self.pos).copied().ok_or_else(|| MeshError::Parse {
            line: self.pos + 1,
            msg: format!("unexpected end of file, expected {what}"),
        })?;
        self.pos += 1;
        Ok((self.pos, l))
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let (l, c) = self.next(what)?;
        c.trim().parse().map_err(|_| MeshError::Parse {
            line: l,
            msg: format!("bad {what} count"),
        })
    }
}

type Cdt = spade::ConstrainedDelaunayTriangulation<spade::Point2<f64>>;
type InnerFace = FixedFaceHandle<InnerTag>;

/// Inner faces reachable from `seed` without crossing a constraint edge.
pub(crate) fn flood_component(cdt: &Cdt, seed: InnerFace) -> HashSet<usize> {
    let mut seen = HashSet::new();
    let mut stack = vec![seed];
    seen.insert(seed.index());
    while let Some(f) = stack.pop() {
        for e in cdt.face(f).adjacent_edges() {
            if cdt.is_constraint_edge(e.as_undirected().fix()) {
                continue;
            }
            if let Some(g) = e.rev().face().as_inner() {
                if seen.insert(g.fix().index()) {
                    stack.push(g.fix());
                }
            }
        }
    }
    seen
}

/// An inner face whose centroid lies well inside the convex polygon `poly`.
pub(crate) fn face_inside(cdt: &Cdt, poly: &[Point]) -> Option<InnerFace> {
    let area = polygon_area(poly).abs();
    cdt.inner_faces()
        .filter_map(|f| {
            let p = f.vertices().map(|v| Point::new(v.position().x, v.position().y));
            let c = (p[0] + p[1] + p[2]) * (1.0 / 3.0);
            let a = orient(p[0], p[1], p[2]);
            (a > 1e-9 * area && in_convex_polygon(poly, c)).then_some((a, f.fix()))
        })
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, f)| f)
}
