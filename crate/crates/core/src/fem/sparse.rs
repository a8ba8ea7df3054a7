use super::{FemError, Result};
use nalgebra::{DMatrix, SymmetricEigen};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries; the result does not depend on triplet order
    /// beyond the floating-point summation order within one entry.
    pub fn from_triplets(n: usize, mut trips: Vec<(usize, usize, f64)>) -> Self {
        trips.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(trips.len() / 2);
        let mut values: Vec<f64> = Vec::with_capacity(trips.len() / 2);
        let mut last = None;
        for (i, j, v) in trips {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for (j, v) in self.row(i) {
                s += v * x[j];
            }
            *yi = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// Largest |A_ij - A_ji| over the stored pattern, or infinity if the pattern is not symmetric.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let r = self.row_ptr[j]..self.row_ptr[j + 1];
                match self.col_idx[r.clone()].binary_search(&i) {
                    Ok(k) => worst = worst.max((v - self.values[r.start + k]).abs()),
                    Err(_) => return f64::INFINITY,
                }
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Result of a conjugate gradient run.
#[derive(Clone, Debug)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
    /// ½xᵀAx - bᵀx after each iteration, starting with the initial guess.
    pub energies: Vec<f64>,
}

/// Default iteration cap for a system of `n` unknowns.
pub fn default_maxit(n: usize) -> usize {
    (20.0 * (n as f64).sqrt()).ceil().max(100.0) as usize
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
pub fn solve_cg(a: &CsrMatrix, b: &[f64], tol: f64, maxit: usize) -> Result<CgSolution> {
    if !(tol > 0.0) {
        return Err(FemError::InvalidArgument("tol must be positive".into()));
    }
    if b.len() != a.n {
        return Err(FemError::InvalidArgument("right-hand side length mismatch".into()));
    }
    let n = a.n;
    let mut x = vec![0.0; n];
    let bn = norm(b);
    if bn == 0.0 {
        return Ok(CgSolution {
            x,
            iterations: 0,
            rel_residual: 0.0,
            energies: vec![0.0],
        });
    }
    let dinv: Vec<f64> = a
        .diag()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut energies = vec![0.0];
    let mut res = 1.0;
    for it in 1..=maxit {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(FemError::NotPositiveDefinite);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        // J(x) = ½xᵀAx - bᵀx = -½xᵀ(b + r) since Ax = b - r
        let j = -0.5 * x.iter().zip(b.iter().zip(&r)).map(|(x, (b, r))| x * (b + r)).sum::<f64>();
        energies.push(j);
        res = norm(&r) / bn;
        if res <= tol {
            return Ok(CgSolution {
                x,
                iterations: it,
                rel_residual: res,
                energies,
            });
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(FemError::MaxIterations {
        iterations: maxit,
        residual: res,
    })
}

/// Smallest and largest Ritz values of `a` after `steps` Lanczos steps
/// with full reorthogonalization.
pub fn lanczos_extremes(a: &CsrMatrix, steps: usize) -> (f64, f64) {
    let n = a.n;
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let k = steps.min(n).max(1);
    // deterministic start vector with no special structure
    let mut q: Vec<f64> = (0..n).map(|i| 1.0 + ((i as f64) * 0.618_033_988_75).fract()).collect();
    let qn = norm(&q);
    q.iter_mut().for_each(|v| *v /= qn);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut w = vec![0.0; n];
    for j in 0..k {
        a.matvec(&basis[j], &mut w);
        let al = dot(&w, &basis[j]);
        alphas.push(al);
        for v in &basis {
            let c = dot(&w, v);
            w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
        }
        for v in &basis {
            let c = dot(&w, v);
            w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
        }
        let b = norm(&w);
        if j + 1 == k || b < 1e-14 * al.abs().max(1e-300) {
            break;
        }
        betas.push(b);
        basis.push(w.iter().map(|v| v / b).collect());
    }
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let ev = SymmetricEigen::new(t).eigenvalues;
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_system() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 2.0), (1, 1, 3.0)]);
        let s = solve_cg(&a, &[2.0, 3.0], 1e-12, 10).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn triplets_merge() {
        let a = CsrMatrix::from_triplets(2, vec![(1, 0, 1.0), (0, 0, 1.0), (0, 0, 2.0), (0, 1, 1.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.asymmetry(), 0.0);
    }

    #[test]
    fn cg_energy_decreases() {
        // 1D Laplacian
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, t);
        let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let s = solve_cg(&a, &b, 1e-12, 500).unwrap();
        for w in s.energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        let r: Vec<f64> = a.mul(&s.x).iter().zip(&b).map(|(x, y)| x - y).collect();
        assert!(norm(&r) <= 1e-12 * norm(&b) * 1.0001);
        assert!(matches!(solve_cg(&a, &b, 1e-12, 3), Err(FemError::MaxIterations { .. })));
        let (lo, hi) = lanczos_extremes(&a, 50);
        let exact_lo = 2.0 - 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!(lo >= exact_lo - 1e-10 && lo < 0.05);
        assert!(hi <= 4.0);
    }
}
