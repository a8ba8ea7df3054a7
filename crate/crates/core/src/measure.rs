//! Quadrature for the self-similar measure, boundary averages on Γⁿ and trace norms.

use crate::geometry::{hausdorff_dimension, Address, IfsConfig, PrefractalTree};
use crate::point::Point;
use std::collections::HashMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("no trace samples for interface segment {0}")]
    MissingSegment(Address),
    #[error("the Lipschitz-type norm needs theta = 0 and r = 1/2")]
    NotTheta0Critical,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, MeasureError>;

/// Equal-weight nodes f_σ(x*), |σ| = m, in lexicographic order of σ.
#[derive(Clone, Debug)]
pub struct MuQuadrature {
    pub level: usize,
    pub nodes: Vec<Point>,
    pub weight: f64,
}

impl MuQuadrature {
    pub fn new(cfg: &IfsConfig, m: usize) -> Self {
        Self {
            level: m,
            nodes: mu_nodes(cfg, m),
            weight: 0.5f64.powi(m as i32),
        }
    }

    /// Combine one value per node into the integral.
    pub fn reduce(&self, values: &[f64]) -> f64 {
        pairwise_mean(values.to_vec())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sigma,x,y,weight\n");
        for (a, p) in Address::all(self.level).iter().zip(&self.nodes) {
            let _ = writeln!(s, "{a},{:?},{:?},{:?}", p.x, p.y, self.weight);
        }
        s
    }
}

/// nodes(0) = [x*], nodes(m) = f1(nodes(m-1)) ++ f2(nodes(m-1)).
pub fn mu_nodes(cfg: &IfsConfig, m: usize) -> Vec<Point> {
    let f1 = cfg.map(1);
    let f2 = cfg.map(2);
    let mut cur = vec![cfg.anchor()];
    for _ in 0..m {
        let mut next = Vec::with_capacity(cur.len() * 2);
        next.extend(cur.iter().map(|&p| f1.apply(p)));
        next.extend(cur.iter().map(|&p| f2.apply(p)));
        cur = next;
    }
    cur
}

// Adjacent pairs averaged level by level; mirrors the binary address tree.
fn pairwise_mean(mut v: Vec<f64>) -> f64 {
    debug_assert!(v.len().is_power_of_two());
    while v.len() > 1 {
        v = v.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect();
    }
    v[0]
}

pub fn integrate_mu(cfg: &IfsConfig, m: usize, g: impl Fn(Point) -> f64) -> f64 {
    let vals: Vec<f64> = mu_nodes(cfg, m).into_iter().map(g).collect();
    pairwise_mean(vals)
}

/// Samples of a function along one interface segment: parameter t ∈ [0, 1]
/// from endpoint `a` to endpoint `b`, with the value there.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentTrace {
    pub address: Address,
    pub samples: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceSamples {
    pub segments: Vec<SegmentTrace>,
}

impl TraceSamples {
    /// Sample `u` at `k + 1` equispaced points of every interface segment.
    pub fn from_fn(tree: &PrefractalTree, k: usize, u: impl Fn(Point) -> f64) -> Self {
        let k = k.max(1);
        let segments = tree
            .interface
            .iter()
            .map(|s| SegmentTrace {
                address: s.address.clone(),
                samples: (0..=k)
                    .map(|i| {
                        let t = i as f64 / k as f64;
                        (t, u(s.a.lerp(s.b, t)))
                    })
                    .collect(),
            })
            .collect();
        Self { segments }
    }

    fn by_address(&self) -> HashMap<&Address, &SegmentTrace> {
        self.segments.iter().map(|s| (&s.address, s)).collect()
    }
}

const GAUSS2: [(f64, f64); 2] = [
    (0.211_324_865_405_187_1, 0.5),
    (0.788_675_134_594_812_9, 0.5),
];

fn sorted_samples(tr: &SegmentTrace) -> Result<Vec<(f64, f64)>> {
    if tr.samples.is_empty() {
        return Err(MeasureError::MissingSegment(tr.address.clone()));
    }
    let mut s = tr.samples.clone();
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    // constant extension to the segment ends
    if s[0].0 > 0.0 {
        s.insert(0, (0.0, s[0].1));
    }
    let last = *s.last().unwrap();
    if last.0 < 1.0 {
        s.push((1.0, last.1));
    }
    Ok(s)
}

/// (∫ u, ∫ u²) over the unit parameter interval of the piecewise-linear interpolant.
fn segment_moments(tr: &SegmentTrace) -> Result<(f64, f64)> {
    let s = sorted_samples(tr)?;
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for w in s.windows(2) {
        let (t0, v0) = w[0];
        let (t1, v1) = w[1];
        let dt = t1 - t0;
        if dt <= 0.0 {
            continue;
        }
        m1 += 0.5 * (v0 + v1) * dt;
        for (x, wt) in GAUSS2 {
            let v = v0 + (v1 - v0) * x;
            m2 += wt * v * v * dt;
        }
    }
    Ok((m1, m2))
}

/// (1/|Γⁿ|) Σ_σ ∫_{Γ^σ} u².
pub fn boundary_average_sq(tree: &PrefractalTree, u: &TraceSamples) -> Result<f64> {
    let map = u.by_address();
    let mut total = 0.0;
    let mut len = 0.0;
    for s in &tree.interface {
        let tr = map
            .get(&s.address)
            .ok_or_else(|| MeasureError::MissingSegment(s.address.clone()))?;
        let l = s.a.dist(s.b);
        total += segment_moments(tr)?.1 * l;
        len += l;
    }
    Ok(total / len)
}

/// Mean value of the trace on every interface segment.
pub fn piecewise_projection(tree: &PrefractalTree, u: &TraceSamples) -> Result<Vec<(Address, f64)>> {
    let map = u.by_address();
    tree.interface
        .iter()
        .map(|s| {
            let tr = map
                .get(&s.address)
                .ok_or_else(|| MeasureError::MissingSegment(s.address.clone()))?;
            Ok((s.address.clone(), segment_moments(tr)?.0))
        })
        .collect()
}

/// p-th power of the Slobodeckij seminorm from values at the level-m μ-nodes.
pub fn slobodeckij_seminorm(cfg: &IfsConfig, m: usize, values: &[f64], s: f64, p: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0 && p >= 1.0 && m >= 1) {
        return Err(MeasureError::InvalidArgument(
            "need 0 < s < 1, p >= 1, m >= 1".into(),
        ));
    }
    let nodes = mu_nodes(cfg, m);
    if values.len() != nodes.len() {
        return Err(MeasureError::InvalidArgument(format!(
            "expected {} values, got {}",
            nodes.len(),
            values.len()
        )));
    }
    let d = hausdorff_dimension(cfg.r());
    let cutoff = cfg.r().powi(m as i32) * 2.0;
    let expo = d + p * s;
    let w = 0.25f64.powi(m as i32);
    let mut total = 0.0;
    for i in 0..nodes.len() {
        let mut row = 0.0;
        for j in 0..nodes.len() {
            if i == j {
                continue;
            }
            let dist = nodes[i].dist(nodes[j]);
            if dist < cutoff {
                continue;
            }
            row += (values[i] - values[j]).abs().powf(p) / dist.powf(expo);
        }
        total += row;
    }
    Ok(total * w)
}

/// Piecewise-linear function of one variable.
struct Pl1 {
    x: Vec<f64>,
    v: Vec<f64>,
}

impl Pl1 {
    fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.v[0];
        }
        if t >= self.x[n - 1] {
            return self.v[n - 1];
        }
        let k = self.x.partition_point(|&a| a <= t).min(n - 1);
        let (x0, x1) = (self.x[k - 1], self.x[k]);
        let th = if x1 > x0 { (t - x0) / (x1 - x0) } else { 0.0 };
        self.v[k - 1] + th * (self.v[k] - self.v[k - 1])
    }

    /// ∫_a^b h(v(x)) dx, 4-point Gauss on every linear piece.
    fn integrate(&self, a: f64, b: f64, h: impl Fn(f64) -> f64) -> f64 {
        const G: [(f64, f64); 4] = [
            (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
            (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
            (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
            (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
        ];
        let mut cuts = vec![a];
        let lo = self.x.partition_point(|&x| x <= a);
        let hi = self.x.partition_point(|&x| x < b);
        cuts.extend_from_slice(&self.x[lo..hi]);
        cuts.push(b);
        let mut sum = 0.0;
        for w in cuts.windows(2) {
            let (p, q) = (w[0], w[1]);
            if q <= p {
                continue;
            }
            let mid = 0.5 * (p + q);
            let half = 0.5 * (q - p);
            for (x, wt) in G {
                sum += wt * half * h(self.eval(mid + half * x));
            }
        }
        sum
    }
}

/// Lipschitz-type equivalent W^{s,p} norm (p-th power) on the flat interface.
///
/// `samples` are pairs (x₁, v) along Γ, interpolated linearly.
pub fn lip_norm_theta0(cfg: &IfsConfig, samples: &[(f64, f64)], s: f64, p: f64, k_max: usize) -> Result<f64> {
    if !cfg.is_theta0_critical() {
        return Err(MeasureError::NotTheta0Critical);
    }
    if samples.is_empty() || !(p >= 1.0) || !(s > 0.0 && s < 1.0) {
        return Err(MeasureError::InvalidArgument(
            "need samples, p >= 1 and 0 < s < 1".into(),
        ));
    }
    let mut sm = samples.to_vec();
    sm.sort_by(|a, b| a.0.total_cmp(&b.0));
    let f = Pl1 {
        x: sm.iter().map(|q| q.0).collect(),
        v: sm.iter().map(|q| q.1).collect(),
    };
    // Γ = [-2β1, 2β1] at height 2β2
    let g_lo = -2.0 * cfg.beta1();
    let g_hi = 2.0 * cfg.beta1();
    let glen = g_hi - g_lo;
    let mut total = f.integrate(g_lo, g_hi, |v| v.abs().powf(p)) / glen;
    for k in 0..=k_max {
        let n = 1usize << k;
        let piece = glen / n as f64;
        let mut level = 0.0;
        for i in 0..n {
            let c = g_lo + (i as f64 + 0.5) * piece;
            let a = (c - piece).max(g_lo);
            let b = (c + piece).min(g_hi);
            let mean = f.integrate(a, b, |v| v) / (b - a);
            level += f.integrate(a, b, |v| (v - mean).abs().powf(p));
        }
        total += 2f64.powf(s * k as f64 * p) * level;
    }
    Ok(total)
}
