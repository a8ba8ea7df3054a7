use super::{MeshError, RefCellMesh, Result};
use crate::geometry::{Address, BoundaryTag, IfsConfig};
use crate::point::Point;

/// Union of the mapped reference meshes f_σ(ref), |σ| ≤ n-1, glued along top sides.
#[derive(Clone, Debug)]
pub struct InteriorMesh {
    pub level: usize,
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    /// Index into `cells` for every triangle.
    pub tri_cell: Vec<usize>,
    pub cells: Vec<Address>,
    /// Boundary edges of the truncated domain.
    pub boundary: Vec<(usize, usize, BoundaryTag)>,
    /// Vertices lying on Γⁿ.
    pub interface_vertices: Vec<usize>,
}

pub fn build_interior_mesh(cfg: &IfsConfig, n: usize, rm: &RefCellMesh) -> Result<InteriorMesh> {
    if n < 1 {
        return Err(MeshError::InvalidArgument("level must be >= 1".into()));
    }
    let nv = rm.vertices.len();
    let mut vertices: Vec<Point> = Vec::new();
    let mut triangles = Vec::new();
    let mut tri_cell = Vec::new();
    let mut cells = Vec::new();
    // local-to-global vertex maps of the previous generation, lexicographic
    let mut prev: Vec<Vec<usize>> = Vec::new();
    let mut boundary = Vec::new();
    let tol = 1e-10;

    for g in 0..n {
        let maps = cfg.word_maps(g);
        let addrs = Address::all(g);
        let mut cur = Vec::with_capacity(maps.len());
        for (ci, (addr, map)) in addrs.into_iter().zip(maps).enumerate() {
            let mut l2g = vec![usize::MAX; nv];
            if g > 0 {
                let parent = &prev[ci / 2];
                let side = ci % 2;
                for (k, &b) in rm.base.iter().enumerate() {
                    let gid = parent[rm.top[side][k]];
                    let p = map.apply(rm.vertices[b]);
                    if p.dist(vertices[gid]) > tol {
                        return Err(MeshError::GluingMismatch {
                            address: addr.to_string(),
                            distance: p.dist(vertices[gid]),
                        });
                    }
                    l2g[b] = gid;
                }
            }
            for (i, slot) in l2g.iter_mut().enumerate() {
                if *slot == usize::MAX {
                    *slot = vertices.len();
                    vertices.push(map.apply(rm.vertices[i]));
                }
            }
            let cell_idx = cells.len();
            for t in &rm.triangles {
                triangles.push([l2g[t[0]], l2g[t[1]], l2g[t[2]]]);
                tri_cell.push(cell_idx);
            }
            if g == 0 {
                for w in rm.base.windows(2) {
                    boundary.push((l2g[w[0]], l2g[w[1]], BoundaryTag::Base));
                }
            }
            for (chain, side) in rm.wall_chains() {
                for w in chain.windows(2) {
                    boundary.push((l2g[w[0]], l2g[w[1]], BoundaryTag::Wall(addr.clone(), side)));
                }
            }
            if g == n - 1 {
                for d in 0..2 {
                    let child = addr.child(d as u8 + 1);
                    for w in rm.top[d].windows(2) {
                        boundary.push((
                            l2g[w[0]],
                            l2g[w[1]],
                            BoundaryTag::Interface(child.clone()),
                        ));
                    }
                }
            }
            cells.push(addr);
            cur.push(l2g);
        }
        prev = cur;
    }
    let mut on_if = vec![false; vertices.len()];
    for (a, b, t) in &boundary {
        if matches!(t, BoundaryTag::Interface(_)) {
            on_if[*a] = true;
            on_if[*b] = true;
        }
    }
    let interface_vertices = (0..vertices.len()).filter(|&v| on_if[v]).collect();
    Ok(InteriorMesh {
        level: n,
        vertices,
        triangles,
        tri_cell,
        cells,
        boundary,
        interface_vertices,
    })
}
