//! Similitude pair, address words, prefractal trees and the flat-angle hole geometry.

use crate::point::{in_convex_polygon, orient, polygon_area, segments_intersect, BBox, Point};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("ratio out of range: r = {r} must satisfy 0 < r < 1/sqrt(2) and 0 <= theta < pi/2 (theta = {theta})")]
    RatioOutOfRange { r: f64, theta: f64 },
    #[error("cond1 violated: need r*cos(theta) < beta1 and r*sin(theta) < beta2, got {lhs1} vs {beta1}, {lhs2} vs {beta2}")]
    Cond1Violated {
        lhs1: f64,
        beta1: f64,
        lhs2: f64,
        beta2: f64,
    },
    #[error("cond2 violated: need (beta1 - 1)*sin(theta) + beta2*cos(theta) > 0, got {value}")]
    Cond2Violated { value: f64 },
    #[error("not critical: r = {r} differs from the critical ratio {r_star}")]
    NotCritical { r: f64, r_star: f64 },
    #[error("bracket failure: contact predicate is not sign-separated on [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },
    #[error("flat-angle hole geometry needs theta = 0, r = 1/2 and beta1 > 1/2")]
    NotTheta0Critical,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Affine map `x -> m x + t` with `m` row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub m: [f64; 4],
    pub t: Point,
}

impl Affine {
    pub const IDENTITY: Affine = Affine {
        m: [1.0, 0.0, 0.0, 1.0],
        t: Point::new(0.0, 0.0),
    };

    pub fn apply(&self, p: Point) -> Point {
        Point::new(
            self.m[0] * p.x + self.m[1] * p.y + self.t.x,
            self.m[2] * p.x + self.m[3] * p.y + self.t.y,
        )
    }

    /// `self ∘ other`
    pub fn compose(&self, o: &Affine) -> Affine {
        let a = &self.m;
        let b = &o.m;
        Affine {
            m: [
                a[0] * b[0] + a[1] * b[2],
                a[0] * b[1] + a[1] * b[3],
                a[2] * b[0] + a[3] * b[2],
                a[2] * b[1] + a[3] * b[3],
            ],
            t: self.apply(o.t),
        }
    }

    pub fn det(&self) -> f64 {
        self.m[0] * self.m[3] - self.m[1] * self.m[2]
    }

    pub fn fixed_point(&self) -> Point {
        let (a, b, c, d) = (1.0 - self.m[0], -self.m[1], -self.m[2], 1.0 - self.m[3]);
        let det = a * d - b * c;
        Point::new(
            (d * self.t.x - b * self.t.y) / det,
            (-c * self.t.x + a * self.t.y) / det,
        )
    }
}

/// Validated parameters of the similitude pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IfsConfig {
    r: f64,
    theta: f64,
    beta1: f64,
    beta2: f64,
}

pub fn make_config(r: f64, theta: f64, beta1: f64, beta2: f64) -> Result<IfsConfig> {
    if !(r.is_finite() && theta.is_finite() && beta1.is_finite() && beta2.is_finite()) {
        return Err(GeometryError::InvalidArgument("non-finite parameter".into()));
    }
    if !(r > 0.0 && r < FRAC_1_SQRT_2 && (0.0..FRAC_PI_2).contains(&theta)) {
        return Err(GeometryError::RatioOutOfRange { r, theta });
    }
    check_conditions(r, theta, beta1, beta2)?;
    Ok(IfsConfig::raw(r, theta, beta1, beta2))
}

fn check_conditions(r: f64, theta: f64, beta1: f64, beta2: f64) -> Result<()> {
    let lhs1 = r * theta.cos();
    let lhs2 = r * theta.sin();
    if !(lhs1 < beta1 && lhs2 < beta2) {
        return Err(GeometryError::Cond1Violated {
            lhs1,
            beta1,
            lhs2,
            beta2,
        });
    }
    let value = (beta1 - 1.0) * theta.sin() + beta2 * theta.cos();
    if value <= 0.0 {
        return Err(GeometryError::Cond2Violated { value });
    }
    Ok(())
}

impl IfsConfig {
    /// Unvalidated constructor, used where only the maps matter.
    pub(crate) fn raw(r: f64, theta: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            r,
            theta,
            beta1,
            beta2,
        }
    }

    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn beta1(&self) -> f64 {
        self.beta1
    }
    pub fn beta2(&self) -> f64 {
        self.beta2
    }

    pub fn map(&self, i: u8) -> Affine {
        let (s, c) = self.theta.sin_cos();
        let r = self.r;
        match i {
            1 => Affine {
                m: [r * c, -r * s, r * s, r * c],
                t: Point::new(-self.beta1, self.beta2),
            },
            2 => Affine {
                m: [r * c, r * s, -r * s, r * c],
                t: Point::new(self.beta1, self.beta2),
            },
            _ => panic!("address digit must be 1 or 2"),
        }
    }

    pub fn f(&self, i: u8, p: Point) -> Point {
        self.map(i).apply(p)
    }

    /// Fixed point of f1; every μ-node and attractor sample is anchored here.
    pub fn anchor(&self) -> Point {
        self.map(1).fixed_point()
    }

    pub fn word_map(&self, sigma: &Address) -> Affine {
        let f1 = self.map(1);
        let f2 = self.map(2);
        sigma.0.iter().fold(Affine::IDENTITY, |acc, &d| {
            acc.compose(if d == 1 { &f1 } else { &f2 })
        })
    }

    /// Maps f_σ for all |σ| = n in lexicographic order.
    pub fn word_maps(&self, n: usize) -> Vec<Affine> {
        let f = [self.map(1), self.map(2)];
        let mut cur = vec![Affine::IDENTITY];
        for _ in 0..n {
            let mut next = Vec::with_capacity(cur.len() * 2);
            for a in &cur {
                next.push(a.compose(&f[0]));
                next.push(a.compose(&f[1]));
            }
            cur = next;
        }
        cur
    }

    /// Vertices of the reference cell Y⁰ in counter-clockwise order:
    /// P1, P2, f2(P2), f2(P1), f1(P2), f1(P1).
    pub fn y0(&self) -> [Point; 6] {
        let p1 = Point::new(-1.0, 0.0);
        let p2 = Point::new(1.0, 0.0);
        [
            p1,
            p2,
            self.f(2, p2),
            self.f(2, p1),
            self.f(1, p2),
            self.f(1, p1),
        ]
    }

    pub fn is_theta0_critical(&self) -> bool {
        self.theta == 0.0 && self.r == 0.5 && self.beta1 > 0.5
    }

    /// Center and radius of a disc mapped into itself by both maps; it contains Γ.
    pub fn invariant_ball(&self) -> (Point, f64) {
        let c = self.map(1).fixed_point().lerp(self.map(2).fixed_point(), 0.5);
        let rad = (1..=2)
            .map(|i| self.f(i, c).dist(c))
            .fold(0.0, f64::max)
            / (1.0 - self.r);
        (c, rad)
    }
}

/// Finite word over {1, 2}; the empty word is the identity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Address(pub Vec<u8>);

impl Address {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn new(digits: Vec<u8>) -> Result<Self> {
        if digits.iter().any(|&d| d != 1 && d != 2) {
            return Err(GeometryError::InvalidArgument(
                "address digits must be 1 or 2".into(),
            ));
        }
        Ok(Self(digits))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, d: u8) -> Address {
        let mut v = self.0.clone();
        v.push(d);
        Address(v)
    }

    pub fn concat(&self, o: &Address) -> Address {
        let mut v = self.0.clone();
        v.extend_from_slice(&o.0);
        Address(v)
    }

    pub fn swapped(&self) -> Address {
        Address(self.0.iter().map(|&d| 3 - d).collect())
    }

    /// All words of length n, lexicographic.
    pub fn all(n: usize) -> Vec<Address> {
        let mut cur = vec![Address::empty()];
        for _ in 0..n {
            cur = cur
                .iter()
                .flat_map(|a| [a.child(1), a.child(2)])
                .collect();
        }
        cur
    }

    /// Position of this word among `Address::all(self.len())`.
    pub fn index(&self) -> usize {
        self.0
            .iter()
            .fold(0usize, |acc, &d| acc * 2 + (d as usize - 1))
    }

    pub fn parse(s: &str) -> Result<Self> {
        let digits = s
            .chars()
            .map(|c| match c {
                '1' => Ok(1),
                '2' => Ok(2),
                _ => Err(GeometryError::InvalidArgument(format!(
                    "bad address digit '{c}'"
                ))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Self(digits))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.0 {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

pub fn apply_word(cfg: &IfsConfig, sigma: &Address, p: Point) -> Point {
    sigma
        .0
        .iter()
        .rev()
        .fold(p, |q, &d| cfg.f(d, q))
}

pub fn hausdorff_dimension(r: f64) -> f64 {
    -(2f64.ln()) / r.ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct XiProfile {
    pub dim_xi: f64,
    pub p_star: f64,
}

/// Tolerance within which `r` is accepted as critical by [`xi_profile`].
pub const CRITICAL_MATCH_TOL: f64 = 1e-5;

/// Dimension of the self-contact set and the extension exponent at criticality.
pub fn xi_profile(theta: f64, r: f64) -> Result<XiProfile> {
    if !(0.0..FRAC_PI_2).contains(&theta) {
        return Err(GeometryError::RatioOutOfRange { r, theta });
    }
    let r_star = if theta == 0.0 {
        0.5
    } else {
        critical_ratio(theta, 1.0, 1.0, 1e-7)?
    };
    if (r - r_star).abs() > CRITICAL_MATCH_TOL {
        return Err(GeometryError::NotCritical { r, r_star });
    }
    let dim_xi = if theta == 0.0 {
        0.0
    } else {
        let k = PI / (2.0 * theta);
        if (k - k.round()).abs() < 1e-9 && k.round() >= 1.0 {
            hausdorff_dimension(r) / 2.0
        } else {
            0.0
        }
    };
    Ok(XiProfile {
        dim_xi,
        p_star: 2.0 - dim_xi,
    })
}

/// Threshold under which a cloud gap at depth m counts as contact.
pub fn contact_threshold(cfg: &IfsConfig, m: usize) -> f64 {
    let (_, rad) = cfg.invariant_ball();
    4.0 * rad * cfg.r.powi(m as i32 + 1)
}

struct GapSearch<'a> {
    f: [Affine; 2],
    center: Point,
    rad: f64,
    r: f64,
    anchor: Point,
    leaf_depth: usize,
    best: f64,
    stop_below: f64,
    _cfg: &'a IfsConfig,
}

impl GapSearch<'_> {
    // Both maps have depth k; balls have radius r^k * rad.
    fn recurse(&mut self, a: &Affine, b: &Affine, k: usize) {
        if self.best <= self.stop_below {
            return;
        }
        if k == self.leaf_depth {
            let d = a.apply(self.anchor).dist(b.apply(self.anchor));
            if d < self.best {
                self.best = d;
            }
            return;
        }
        let ca = [a.compose(&self.f[0]), a.compose(&self.f[1])];
        let cb = [b.compose(&self.f[0]), b.compose(&self.f[1])];
        let rk = self.rad * self.r.powi(k as i32 + 1);
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(4);
        for i in 0..2 {
            let pa = ca[i].apply(self.center);
            for j in 0..2 {
                let pb = cb[j].apply(self.center);
                let lb = pa.dist(pb) - 2.0 * rk;
                pairs.push((lb, i, j));
            }
        }
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        for (lb, i, j) in pairs {
            if lb >= self.best {
                break;
            }
            self.recurse(&ca[i], &cb[j], k + 1);
        }
    }
}

fn cloud_gap(cfg: &IfsConfig, m: usize, stop_below: f64) -> f64 {
    let (center, rad) = cfg.invariant_ball();
    let anchor = cfg.anchor();
    let f = [cfg.map(1), cfg.map(2)];
    let mut s = GapSearch {
        f,
        center,
        rad,
        r: cfg.r,
        anchor,
        leaf_depth: m + 1,
        best: f64::INFINITY,
        stop_below,
        _cfg: cfg,
    };
    s.recurse(&f[0], &f[1], 1);
    s.best
}

/// Distance between the clouds {f1 f_τ(x*)} and {f2 f_τ(x*)}, |τ| = m.
pub fn contact_gap(cfg: &IfsConfig, m: usize) -> f64 {
    cloud_gap(cfg, m, -1.0)
}

fn is_contact(theta: f64, beta1: f64, beta2: f64, r: f64, tol: f64) -> bool {
    let cfg = IfsConfig::raw(r, theta, beta1, beta2);
    let (_, rad) = cfg.invariant_ball();
    let target = 0.1 * tol;
    let mut m = 1usize;
    while 4.0 * rad * r.powi(m as i32 + 1) > target && m < 200 {
        m += 1;
    }
    let thr = contact_threshold(&cfg, m);
    cloud_gap(&cfg, m, thr) <= thr
}

/// Bisection for the critical ratio on [1/2, 1/√2).
pub fn critical_ratio(theta: f64, beta1: f64, beta2: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) || !(0.0..FRAC_PI_2).contains(&theta) {
        return Err(GeometryError::InvalidArgument(
            "need tol > 0 and 0 <= theta < pi/2".into(),
        ));
    }
    let mut lo = 0.5;
    let mut hi = FRAC_1_SQRT_2 - 1e-9;
    if !(beta1 > 0.0 && beta2 > 0.0 && beta1.is_finite() && beta2.is_finite()) {
        return Err(GeometryError::InvalidArgument(
            "translation offsets must be positive".into(),
        ));
    }
    if is_contact(theta, beta1, beta2, lo, tol) {
        return Ok(lo);
    }
    if !is_contact(theta, beta1, beta2, hi, tol) {
        return Err(GeometryError::BracketFailure { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if is_contact(theta, beta1, beta2, mid, tol) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Which side of the reference cell a wall segment comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WallSide {
    Right,
    Middle,
    Left,
}

impl WallSide {
    /// Index of the side in the vertex list of Y⁰ (side k joins vertex k to k+1).
    pub fn side_index(self) -> usize {
        match self {
            WallSide::Right => 1,
            WallSide::Middle => 3,
            WallSide::Left => 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub address: Address,
    pub polygon: [Point; 6],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InterfaceSegment {
    pub address: Address,
    pub a: Point,
    pub b: Point,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Wall {
    pub address: Address,
    pub side: WallSide,
    pub a: Point,
    pub b: Point,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum BoundaryTag {
    Base,
    Wall(Address, WallSide),
    Interface(Address),
}

/// Level-n truncated ramified domain: generations 0..n-1, top boundary Γⁿ.
#[derive(Clone, Debug, Serialize)]
pub struct PrefractalTree {
    pub config: IfsConfig,
    pub level: usize,
    pub cells: Vec<Cell>,
    pub interface: Vec<InterfaceSegment>,
    pub base: (Point, Point),
    pub walls: Vec<Wall>,
    pub total_interface_length: f64,
}

pub fn build_tree(cfg: &IfsConfig, n: usize) -> Result<PrefractalTree> {
    make_config(cfg.r, cfg.theta, cfg.beta1, cfg.beta2)?;
    if n < 1 {
        return Err(GeometryError::InvalidArgument("level must be >= 1".into()));
    }
    let y0 = cfg.y0();
    let mut cells = Vec::new();
    let mut walls = Vec::new();
    for g in 0..n {
        for (addr, map) in Address::all(g).into_iter().zip(cfg.word_maps(g)) {
            let poly = y0.map(|p| map.apply(p));
            for side in [WallSide::Right, WallSide::Middle, WallSide::Left] {
                let k = side.side_index();
                walls.push(Wall {
                    address: addr.clone(),
                    side,
                    a: poly[k],
                    b: poly[(k + 1) % 6],
                });
            }
            cells.push(Cell {
                address: addr,
                polygon: poly,
            });
        }
    }
    let p1 = Point::new(-1.0, 0.0);
    let p2 = Point::new(1.0, 0.0);
    let interface = Address::all(n)
        .into_iter()
        .zip(cfg.word_maps(n))
        .map(|(address, m)| InterfaceSegment {
            address,
            a: m.apply(p1),
            b: m.apply(p2),
        })
        .collect();
    Ok(PrefractalTree {
        config: *cfg,
        level: n,
        cells,
        interface,
        base: (p1, p2),
        walls,
        total_interface_length: 2f64.powi(n as i32) * 2.0 * cfg.r.powi(n as i32),
    })
}

impl PrefractalTree {
    /// Every boundary edge of the truncated domain with its unique tag.
    pub fn boundary_edges(&self) -> Vec<(Point, Point, BoundaryTag)> {
        let mut out = vec![(self.base.0, self.base.1, BoundaryTag::Base)];
        for w in &self.walls {
            out.push((w.a, w.b, BoundaryTag::Wall(w.address.clone(), w.side)));
        }
        for s in &self.interface {
            out.push((s.a, s.b, BoundaryTag::Interface(s.address.clone())));
        }
        out
    }

    pub fn interior_area(&self) -> f64 {
        self.cells.iter().map(|c| polygon_area(&c.polygon)).sum()
    }

    pub fn bbox(&self) -> BBox {
        BBox::of(self.cells.iter().flat_map(|c| c.polygon))
    }

    /// Cell containing `p` in its open interior, if any.
    pub fn locate_cell(&self, p: Point) -> Option<usize> {
        self.cells
            .iter()
            .position(|c| in_convex_polygon(&c.polygon, p))
    }
}

/// Bounding box of the full ramified domain Ω_int (all generations).
pub fn limit_bbox(cfg: &IfsConfig) -> BBox {
    let depth = 12;
    let y0 = cfg.y0();
    let mut b = BBox::empty();
    for g in 0..=10 {
        for m in cfg.word_maps(g) {
            for p in y0 {
                b.include(m.apply(p));
            }
        }
    }
    let x = cfg.anchor();
    for m in cfg.word_maps(depth) {
        b.include(m.apply(x));
    }
    b
}

/// Default outer box D: the bounding box of Ω_int expanded by one unit.
pub fn default_domain(cfg: &IfsConfig) -> BBox {
    limit_bbox(cfg).expand(1.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct Assumption1Report {
    pub depth: usize,
    pub polygons: usize,
    pub disjoint: bool,
    pub violations: Vec<(Address, Address)>,
    pub contact: bool,
    pub subtree_distance: f64,
    pub contact_threshold: f64,
}

fn shrink(poly: &[Point; 6], eps: f64) -> [Point; 6] {
    let c = poly.iter().fold(Point::default(), |a, &p| a + p) * (1.0 / 6.0);
    poly.map(|p| {
        let d = p - c;
        let n = d.norm();
        if n == 0.0 {
            p
        } else {
            c + d * ((n - eps) / n)
        }
    })
}

fn polygons_overlap(a: &[Point; 6], b: &[Point; 6]) -> bool {
    for i in 0..6 {
        for j in 0..6 {
            if segments_intersect(a[i], a[(i + 1) % 6], b[j], b[(j + 1) % 6]) {
                return true;
            }
        }
    }
    in_convex_polygon(a, b[0]) || in_convex_polygon(b, a[0])
}

fn polygon_distance(a: &[Point; 6], b: &[Point; 6]) -> f64 {
    if polygons_overlap(a, b) {
        return 0.0;
    }
    let mut d = f64::INFINITY;
    for i in 0..6 {
        for j in 0..6 {
            d = d.min(crate::point::segment_segment_dist(
                a[i],
                a[(i + 1) % 6],
                b[j],
                b[(j + 1) % 6],
            ));
        }
    }
    d
}

/// Interior disjointness of {f_σ(Y⁰) : |σ| ≤ depth} and subtree contact.
pub fn verify_assumption1(cfg: &IfsConfig, depth: usize) -> Assumption1Report {
    let y0 = cfg.y0();
    let mut polys: Vec<(Address, [Point; 6])> = Vec::new();
    for g in 0..=depth {
        for (a, m) in Address::all(g).into_iter().zip(cfg.word_maps(g)) {
            polys.push((a, y0.map(|p| m.apply(p))));
        }
    }
    let shrunk: Vec<[Point; 6]> = polys.iter().map(|(_, p)| shrink(p, 1e-10)).collect();
    let boxes: Vec<BBox> = shrunk.iter().map(|p| BBox::of(p.iter().copied())).collect();
    let mut violations = Vec::new();
    for i in 0..polys.len() {
        for j in i + 1..polys.len() {
            if boxes[i].overlaps(&boxes[j]) && polygons_overlap(&shrunk[i], &shrunk[j]) {
                violations.push((polys[i].0.clone(), polys[j].0.clone()));
            }
        }
    }
    let mut dist = f64::INFINITY;
    if depth >= 1 {
        let left: Vec<usize> = (0..polys.len())
            .filter(|&k| polys[k].0 .0.first() == Some(&1))
            .collect();
        let right: Vec<usize> = (0..polys.len())
            .filter(|&k| polys[k].0 .0.first() == Some(&2))
            .collect();
        for &i in &left {
            for &j in &right {
                let lb = box_distance(&boxes[i], &boxes[j]);
                if lb < dist {
                    dist = dist.min(polygon_distance(&polys[i].1, &polys[j].1));
                }
            }
        }
    }
    let diam = {
        let b = limit_bbox(cfg);
        b.width().hypot(b.height())
    };
    let threshold = 2.0 * diam * cfg.r.powi(depth as i32);
    Assumption1Report {
        depth,
        polygons: polys.len(),
        disjoint: violations.is_empty(),
        violations,
        contact: depth >= 1 && dist <= threshold,
        subtree_distance: dist,
        contact_threshold: threshold,
    }
}

fn box_distance(a: &BBox, b: &BBox) -> f64 {
    let dx = (a.min.x - b.max.x).max(b.min.x - a.max.x).max(0.0);
    let dy = (a.min.y - b.max.y).max(b.min.y - a.max.y).max(0.0);
    dx.hypot(dy)
}

#[derive(Clone, Debug, Serialize)]
pub struct Hole {
    pub address: Address,
    /// Left base vertex, right base vertex, apex.
    pub triangle: [Point; 3],
}

#[derive(Clone, Debug, Serialize)]
pub struct Strip {
    pub address: Address,
    /// Counter-clockwise trapezoid: bottom-left, bottom-right, top-right, top-left.
    pub quad: [Point; 4],
}

/// Holes f_σ(T) and the low-coefficient strips of the flat-angle critical geometry.
#[derive(Clone, Debug, Serialize)]
pub struct Theta0Holes {
    pub level: usize,
    pub triangle: [Point; 3],
    pub height: f64,
    pub holes: Vec<Hole>,
    pub strips: Vec<Strip>,
    pub strip_lo: f64,
    pub strip_hi: f64,
    pub low_area: f64,
    pub nu_low: f64,
}

fn side_x_at(a: Point, b: Point, y: f64) -> f64 {
    a.x + (b.x - a.x) * (y - a.y) / (b.y - a.y)
}

pub fn theta0_holes(cfg: &IfsConfig, n: usize) -> Result<Theta0Holes> {
    if !cfg.is_theta0_critical() {
        return Err(GeometryError::NotTheta0Critical);
    }
    if n < 1 {
        return Err(GeometryError::InvalidArgument("level must be >= 1".into()));
    }
    let h = cfg.beta2;
    let half = cfg.beta1 - 0.5;
    let t = [
        Point::new(-half, h),
        Point::new(half, h),
        Point::new(0.0, 2.0 * h),
    ];
    let lo = (2.0 - 3.0 / 2f64.powi(n as i32 + 1)) * h;
    let hi = (2.0 - 2f64.powi(-(n as i32))) * h;
    let mut holes = Vec::new();
    let mut strips = Vec::new();
    let mut low_area = 0.0;
    for m in 0..n {
        for (addr, map) in Address::all(m).into_iter().zip(cfg.word_maps(m)) {
            let tri = t.map(|p| map.apply(p));
            let (bl, br, ap) = (tri[0], tri[1], tri[2]);
            let y_lo = lo.max(bl.y);
            let y_hi = hi.min(ap.y);
            if y_hi > y_lo {
                let quad = [
                    Point::new(side_x_at(bl, ap, y_lo), y_lo),
                    Point::new(side_x_at(br, ap, y_lo), y_lo),
                    Point::new(side_x_at(br, ap, y_hi), y_hi),
                    Point::new(side_x_at(bl, ap, y_hi), y_hi),
                ];
                let w_lo = quad[1].x - quad[0].x;
                let w_hi = quad[2].x - quad[3].x;
                low_area += 0.5 * (w_lo + w_hi) * (y_hi - y_lo);
                strips.push(Strip {
                    address: addr.clone(),
                    quad,
                });
            }
            holes.push(Hole {
                address: addr,
                triangle: tri,
            });
        }
    }
    Ok(Theta0Holes {
        level: n,
        triangle: t,
        height: h,
        holes,
        strips,
        strip_lo: lo,
        strip_hi: hi,
        low_area,
        nu_low: 2f64.powi(-2 * n as i32),
    })
}

impl Theta0Holes {
    /// Hole containing `p` strictly, if any.
    pub fn hole_of(&self, p: Point) -> Option<&Hole> {
        self.holes.iter().find(|h| {
            let t = &h.triangle;
            orient(t[0], t[1], p) > 0.0 && orient(t[1], t[2], p) > 0.0 && orient(t[2], t[0], p) > 0.0
        })
    }

    pub fn in_strip_band(&self, y: f64) -> bool {
        y > self.strip_lo && y < self.strip_hi
    }
}

fn pt(p: Point) -> serde_json::Value {
    json!([p.x, p.y])
}

/// JSON document with the configuration, cells, interface, walls and holes.
pub fn tree_to_json(tree: &PrefractalTree, holes: Option<&Theta0Holes>) -> serde_json::Value {
    json!({
        "config": {
            "r": tree.config.r,
            "theta": tree.config.theta,
            "beta1": tree.config.beta1,
            "beta2": tree.config.beta2,
        },
        "level": tree.level,
        "cells": tree.cells.iter().map(|c| c.polygon.iter().map(|&p| pt(p)).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "interface": tree.interface.iter().map(|s| json!([pt(s.a), pt(s.b)])).collect::<Vec<_>>(),
        "walls": tree.walls.iter().map(|w| json!([pt(w.a), pt(w.b)])).collect::<Vec<_>>(),
        "holes": holes.map(|h| h.holes.iter().map(|t| t.triangle.iter().map(|&p| pt(p)).collect::<Vec<_>>()).collect::<Vec<_>>()).unwrap_or_default(),
    })
}

/// SVG drawing with one path per boundary class.
pub fn tree_to_svg(tree: &PrefractalTree, holes: Option<&Theta0Holes>) -> String {
    let bb = tree.bbox().expand(0.2);
    let scale = 600.0 / bb.width().max(bb.height());
    let w = bb.width() * scale;
    let hgt = bb.height() * scale;
    let tx = |p: Point| ((p.x - bb.min.x) * scale, (bb.max.y - p.y) * scale);
    let seg_path = |segs: &mut dyn Iterator<Item = (Point, Point)>| {
        let mut d = String::new();
        for (a, b) in segs {
            let (ax, ay) = tx(a);
            let (bx, by) = tx(b);
            d.push_str(&format!("M{ax:.3} {ay:.3}L{bx:.3} {by:.3}"));
        }
        d
    };
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{hgt:.0}\" viewBox=\"0 0 {w:.3} {hgt:.3}\">\n"
    );
    let base = seg_path(&mut std::iter::once(tree.base));
    let walls = seg_path(&mut tree.walls.iter().map(|w| (w.a, w.b)));
    let iface = seg_path(&mut tree.interface.iter().map(|s| (s.a, s.b)));
    out.push_str(&format!(
        "<path class=\"base\" d=\"{base}\" stroke=\"black\" stroke-width=\"2\" fill=\"none\"/>\n"
    ));
    out.push_str(&format!(
        "<path class=\"walls\" d=\"{walls}\" stroke=\"gray\" stroke-width=\"1\" fill=\"none\"/>\n"
    ));
    out.push_str(&format!(
        "<path class=\"interface\" d=\"{iface}\" stroke=\"red\" stroke-width=\"1.5\" fill=\"none\"/>\n"
    ));
    if let Some(h) = holes {
        let hp = seg_path(&mut h.holes.iter().flat_map(|t| {
            let v = t.triangle;
            [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])]
        }));
        out.push_str(&format!(
            "<path class=\"holes\" d=\"{hp}\" stroke=\"blue\" stroke-width=\"0.5\" fill=\"none\"/>\n"
        ));
    }
    out.push_str("</svg>\n");
    out
}
