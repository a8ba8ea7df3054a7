use crate::meshing::SlitMesh;
use crate::point::{BBox, Point};

/// Bucket grid over the triangles of a mesh for point location.
pub struct TriangleLocator<'a> {
    mesh: &'a SlitMesh,
    bb: BBox,
    nx: usize,
    ny: usize,
    start: Vec<usize>,
    items: Vec<usize>,
}

impl<'a> TriangleLocator<'a> {
    pub fn new(mesh: &'a SlitMesh) -> Self {
        let bb = mesh.bbox();
        let nt = mesh.triangles.len().max(1);
        let side = ((nt as f64).sqrt() * 1.5).ceil().clamp(1.0, 2048.0) as usize;
        let (nx, ny) = (side, side);
        let mut me = TriangleLocator {
            mesh,
            bb,
            nx,
            ny,
            start: Vec::new(),
            items: Vec::new(),
        };
        let ranges: Vec<(usize, usize, usize, usize)> = (0..mesh.triangles.len())
            .map(|t| {
                let tb = BBox::of(mesh.triangle_points(t));
                let (x0, y0) = me.bucket(tb.min);
                let (x1, y1) = me.bucket(tb.max);
                (x0, y0, x1, y1)
            })
            .collect();
        let mut count = vec![0usize; nx * ny + 1];
        for &(x0, y0, x1, y1) in &ranges {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    count[y * nx + x + 1] += 1;
                }
            }
        }
        for i in 0..nx * ny {
            count[i + 1] += count[i];
        }
        let mut fill = count.clone();
        let mut items = vec![0usize; count[nx * ny]];
        for (t, &(x0, y0, x1, y1)) in ranges.iter().enumerate() {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let b = y * nx + x;
                    items[fill[b]] = t;
                    fill[b] += 1;
                }
            }
        }
        me.start = count;
        me.items = items;
        me
    }

    fn bucket(&self, p: Point) -> (usize, usize) {
        let fx = ((p.x - self.bb.min.x) / self.bb.width() * self.nx as f64).floor();
        let fy = ((p.y - self.bb.min.y) / self.bb.height() * self.ny as f64).floor();
        (
            (fx.max(0.0) as usize).min(self.nx - 1),
            (fy.max(0.0) as usize).min(self.ny - 1),
        )
    }

    pub fn domain(&self) -> BBox {
        self.bb
    }

    /// Containing triangle and barycentric coordinates. The lowest triangle
    /// index wins on shared edges, so interior triangles take precedence on the slit.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        let eps = 1e-12 * self.bb.width().max(self.bb.height());
        if p.x < self.bb.min.x - eps
            || p.x > self.bb.max.x + eps
            || p.y < self.bb.min.y - eps
            || p.y > self.bb.max.y + eps
        {
            return None;
        }
        let (x, y) = self.bucket(p);
        let b = y * self.nx + x;
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.items[self.start[b]..self.start[b + 1]] {
            let lam = barycentric(self.mesh.triangle_points(t), p);
            let worst = lam[0].min(lam[1]).min(lam[2]);
            if worst >= -1e-12 {
                return Some((t, lam));
            }
            if best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((t, lam, worst));
            }
        }
        // rounding gaps along long constrained edges
        best.filter(|b| b.2 > -1e-9).map(|b| (b.0, b.1))
    }
}

pub fn barycentric(t: [Point; 3], p: Point) -> [f64; 3] {
    let [a, b, c] = t;
    let det = (b - a).cross(c - a);
    let l1 = (p - a).cross(c - a) / det;
    let l2 = (b - a).cross(p - a) / det;
    [1.0 - l1 - l2, l1, l2]
}
