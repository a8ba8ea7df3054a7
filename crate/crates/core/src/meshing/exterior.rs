use super::refcell::cdt_point;
use super::{face_inside, flood_component, min_angle_deg, EdgeTag, InteriorMesh, MeshError, RegionTag, Result};
use crate::geometry::{build_tree, BoundaryTag, IfsConfig, Theta0Holes};
use crate::point::{orient, BBox, Point};
use spade::handles::FixedVertexHandle;
use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};
use std::collections::HashMap;

/// Triangulation of D minus the truncated interior domain.
#[derive(Clone, Debug)]
pub struct ExteriorMesh {
    pub level: usize,
    pub domain: BBox,
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<RegionTag>,
    /// Boundary edges and internal coefficient lines.
    pub edges: Vec<(usize, usize, EdgeTag)>,
    pub min_angle_deg: f64,
}

pub const MIN_ANGLE_GATE_DEG: f64 = 5.0;

struct Builder {
    cdt: ConstrainedDelaunayTriangulation<Point2<f64>>,
}

impl Builder {
    fn insert(&mut self, p: Point) -> Result<FixedVertexHandle> {
        self.cdt
            .insert(cdt_point(p))
            .map_err(|e| MeshError::Triangulation(format!("{e:?}")))
    }

    fn constrain(&mut self, a: FixedVertexHandle, b: FixedVertexHandle) -> Result<()> {
        if a == b {
            return Ok(());
        }
        if !self.cdt.can_add_constraint(a, b) {
            let pa = self.cdt.vertex(a).position();
            return Err(MeshError::SeedConflict(format!(
                "constraint from ({}, {}) crosses an existing one",
                pa.x, pa.y
            )));
        }
        self.cdt.add_constraint(a, b);
        Ok(())
    }

    /// Subdivided polyline a→b; returns the handles of all points.
    fn line(&mut self, a: FixedVertexHandle, b: FixedVertexHandle, spacing: f64) -> Result<()> {
        let pa = self.cdt.vertex(a).position();
        let pb = self.cdt.vertex(b).position();
        let pa = Point::new(pa.x, pa.y);
        let pb = Point::new(pb.x, pb.y);
        let k = ((pa.dist(pb) / spacing).ceil() as usize).max(1);
        let mut prev = a;
        for i in 1..k {
            let h = self.insert(pa.lerp(pb, i as f64 / k as f64))?;
            self.constrain(prev, h)?;
            prev = h;
        }
        self.constrain(prev, b)
    }
}

fn on_box(d: &BBox, p: Point) -> bool {
    let e = 1e-12 * (1.0 + d.width().max(d.height()));
    (p.x - d.min.x).abs() < e
        || (p.x - d.max.x).abs() < e
        || (p.y - d.min.y).abs() < e
        || (p.y - d.max.y).abs() < e
}

/// Triangulate D ∖ Ω_int^n, seeding every interior boundary vertex.
///
/// With `holes`, the hole sides above Γⁿ and the two horizontal strip lines are
/// inserted as mesh lines so that the coefficient is constant per triangle.
pub fn build_exterior_mesh(
    cfg: &IfsConfig,
    interior: &InteriorMesh,
    domain: BBox,
    h: f64,
    holes: Option<&Theta0Holes>,
) -> Result<ExteriorMesh> {
    let n = interior.level;
    let tree = build_tree(cfg, n).map_err(|e| MeshError::InvalidArgument(e.to_string()))?;
    let tb = tree.bbox();
    if !(domain.min.x < tb.min.x && domain.min.y < tb.min.y && domain.max.x > tb.max.x && domain.max.y > tb.max.y) {
        return Err(MeshError::InvalidArgument(
            "the interior domain must lie strictly inside D".into(),
        ));
    }
    if !(h > 0.0) {
        return Err(MeshError::InvalidArgument("h must be positive".into()));
    }
    let mut b = Builder {
        cdt: ConstrainedDelaunayTriangulation::new(),
    };

    // Seeds: every interior boundary vertex, in first-appearance order.
    let mut seed_of_int: HashMap<usize, FixedVertexHandle> = HashMap::new();
    let mut int_of_handle: HashMap<usize, usize> = HashMap::new();
    let mut seed_by_pos: HashMap<(u64, u64), usize> = HashMap::new();
    for (a, bb, _) in &interior.boundary {
        for &v in [a, bb] {
            if let std::collections::hash_map::Entry::Vacant(e) = seed_of_int.entry(v) {
                let p = interior.vertices[v];
                let hnd = b
                    .cdt
                    .insert(cdt_point(p))
                    .map_err(|e| MeshError::Triangulation(format!("{e:?}")))?;
                if let Some(&other) = int_of_handle.get(&hnd.index()) {
                    return Err(MeshError::SeedConflict(format!(
                        "interior vertices {other} and {v} coincide"
                    )));
                }
                e.insert(hnd);
                int_of_handle.insert(hnd.index(), v);
                seed_by_pos.insert((p.x.to_bits(), p.y.to_bits()), v);
            }
        }
    }
    let mut int_edges: HashMap<(usize, usize), &BoundaryTag> = HashMap::new();
    for (a, bb, t) in &interior.boundary {
        b.constrain(seed_of_int[a], seed_of_int[bb])?;
        int_edges.insert((*a.min(bb), *a.max(bb)), t);
    }

    // Outer box.
    let corners = [
        domain.min,
        Point::new(domain.max.x, domain.min.y),
        domain.max,
        Point::new(domain.min.x, domain.max.y),
    ];
    let ch: Vec<FixedVertexHandle> = corners.iter().map(|&p| b.insert(p)).collect::<Result<_>>()?;
    for i in 0..4 {
        b.line(ch[i], ch[(i + 1) % 4], h)?;
    }

    if let Some(ho) = holes {
        let fine = h * cfg.r().powi(n as i32);
        let y_n = tree.interface[0].a.y;
        for hole in &ho.holes {
            let [bl, br, ap] = hole.triangle;
            let at = |p: Point, q: Point, y: f64| p.lerp(q, (y - p.y) / (q.y - p.y));
            let mut handles = [[None; 3]; 2];
            for (s, foot) in [bl, br].into_iter().enumerate() {
                let start = at(foot, ap, y_n);
                // the side meets Γⁿ at a segment endpoint
                let seed = seed_by_pos
                    .iter()
                    .filter(|(_, &v)| interior.vertices[v].dist(start) < 1e-9)
                    .map(|(_, &v)| v)
                    .next()
                    .ok_or_else(|| {
                        MeshError::SeedConflict(format!(
                            "hole {} side does not meet a seeded vertex at ({}, {})",
                            hole.address, start.x, start.y
                        ))
                    })?;
                let h0 = seed_of_int[&seed];
                let p_lo = at(foot, ap, ho.strip_lo);
                let p_hi = at(foot, ap, ho.strip_hi);
                let h_lo = b.insert(p_lo)?;
                let h_hi = b.insert(p_hi)?;
                b.line(h0, h_lo, fine)?;
                b.line(h_lo, h_hi, fine)?;
                handles[s] = [Some(h0), Some(h_lo), Some(h_hi)];
            }
            b.line(handles[0][1].unwrap(), handles[1][1].unwrap(), fine)?;
            b.line(handles[0][2].unwrap(), handles[1][2].unwrap(), fine)?;
        }
    }

    let params = RefinementParameters::<f64>::new()
        .with_angle_limit(AngleLimit::from_deg(22.0))
        .with_max_allowed_area(0.5 * h * h)
        .keep_constraint_edges()
        .with_max_additional_vertices(5_000_000);
    let res = b.cdt.refine(params);
    if !res.refinement_complete {
        return Err(MeshError::Triangulation("refinement ran out of vertices".into()));
    }

    // Faces inside Ω_int^n form one constraint-bounded component.
    let seed = face_inside(&b.cdt, &tree.cells[0].polygon)
        .ok_or_else(|| MeshError::Triangulation("no face inside the root cell".into()))?;
    let inner = flood_component(&b.cdt, seed);

    let mut index: HashMap<usize, usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut regions = Vec::new();
    let mut seeded: Vec<Option<usize>> = Vec::new();
    let mut handle_of: Vec<FixedVertexHandle> = Vec::new();
    for f in b.cdt.inner_faces() {
        let vs = f.vertices();
        let pts = vs.map(|v| {
            let p = v.position();
            Point::new(p.x, p.y)
        });
        if inner.contains(&f.fix().index()) {
            continue;
        }
        let c = (pts[0] + pts[1] + pts[2]) * (1.0 / 3.0);
        if orient(pts[0], pts[1], pts[2]) <= 0.0 {
            continue;
        }
        let mut t = [0usize; 3];
        for k in 0..3 {
            let key = vs[k].fix().index();
            t[k] = *index.entry(key).or_insert_with(|| {
                vertices.push(pts[k]);
                handle_of.push(vs[k].fix());
                seeded.push(int_of_handle.get(&key).copied());
                vertices.len() - 1
            });
        }
        let region = match holes {
            Some(ho) => match ho.hole_of(c) {
                Some(hole) if c.y < ho.strip_lo => RegionTag::Hole(hole.address.clone()),
                Some(_) if ho.in_strip_band(c.y) => RegionTag::StripLow,
                _ => RegionTag::ExteriorOuter,
            },
            None => RegionTag::ExteriorOuter,
        };
        triangles.push(t);
        regions.push(region);
    }

    // Edge census over kept triangles.
    let mut count: HashMap<(usize, usize), u32> = HashMap::new();
    for t in &triangles {
        for k in 0..3 {
            let (a, c) = (t[k], t[(k + 1) % 3]);
            *count.entry((a.min(c), a.max(c))).or_default() += 1;
        }
    }
    let mut keys: Vec<_> = count.into_iter().collect();
    keys.sort();
    let mut edges = Vec::new();
    for ((a, c), cnt) in keys {
        let tag = if cnt == 1 {
            match (seeded[a], seeded[c]) {
                (Some(ia), Some(ic)) if int_edges.contains_key(&(ia.min(ic), ia.max(ic))) => {
                    match int_edges[&(ia.min(ic), ia.max(ic))] {
                        BoundaryTag::Base => EdgeTag::BaseNeumann,
                        BoundaryTag::Wall(..) => EdgeTag::WallExt,
                        BoundaryTag::Interface(s) => EdgeTag::Interface(s.clone()),
                    }
                }
                _ if on_box(&domain, vertices[a]) && on_box(&domain, vertices[c]) => EdgeTag::OuterBox,
                _ => {
                    return Err(MeshError::Triangulation(format!(
                        "untagged boundary edge ({}, {}) - ({}, {})",
                        vertices[a].x, vertices[a].y, vertices[c].x, vertices[c].y
                    )))
                }
            }
        } else {
            let is_con = b
                .cdt
                .get_edge_from_neighbors(handle_of[a], handle_of[c])
                .map(|e| b.cdt.is_constraint_edge(e.as_undirected().fix()))
                .unwrap_or(false);
            if is_con {
                EdgeTag::HoleBdry
            } else {
                continue;
            }
        };
        edges.push((a, c, tag));
    }
    let min_angle = triangles
        .iter()
        .map(|t| min_angle_deg(vertices[t[0]], vertices[t[1]], vertices[t[2]]))
        .fold(f64::INFINITY, f64::min);
    if min_angle < MIN_ANGLE_GATE_DEG {
        return Err(MeshError::QualityFailure {
            min_angle_deg: min_angle,
        });
    }
    Ok(ExteriorMesh {
        level: n,
        domain,
        vertices,
        triangles,
        regions,
        edges,
        min_angle_deg: min_angle,
    })
}
