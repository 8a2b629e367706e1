//! Sparse symmetric positive definite solvers.
//!
//! A left-looking-by-rows ("up-looking") sparse Cholesky factorization under a
//! geometric nested-dissection ordering, and a Jacobi-preconditioned conjugate
//! gradient method for systems too large to factor. Both are deterministic.

use thiserror::Error;

use crate::par;

/// Systems with more unknowns than this are solved iteratively.
pub const DIRECT_LIMIT: usize = 200_000;
/// Relative residual target of the iterative solver.
pub const CG_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("matrix is not positive definite at pivot {0}")]
    NotPositiveDefinite(usize),
    #[error("conjugate gradient stalled with relative residual {0:e}")]
    Stalled(f64),
}

const NONE: usize = usize::MAX;

/// Symmetric matrix with both triangles stored, rows sorted by column.
#[derive(Clone, Debug)]
pub struct SymCsr {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    data: Vec<f64>,
}

impl SymCsr {
    /// Builds from rows of `(column, value)` pairs. Rows must describe a
    /// symmetric matrix; columns need not be sorted.
    pub fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let n = rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            for (c, v) in r {
                indices.push(c);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        Self { n, indptr, indices, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().map(|&c| c as usize).zip(self.data[r].iter().copied())
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).find(|(c, _)| *c == i).map_or(0.0, |e| e.1)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        par::map_range(self.n, |i| self.row(i).map(|(c, v)| v * x[c]).sum())
    }

    /// Copy with `s` added to every diagonal entry.
    pub fn shifted(&self, s: f64) -> Self {
        let mut m = self.clone();
        for i in 0..self.n {
            for p in m.indptr[i]..m.indptr[i + 1] {
                if m.indices[p] as usize == i {
                    m.data[p] += s;
                }
            }
        }
        m
    }

    /// Copy scaled by `s` plus `t` times the identity.
    pub fn scaled_shifted(&self, s: f64, t: f64) -> Self {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|v| *v *= s);
        m.shifted(t)
    }
}

/// Geometric nested dissection of points on an integer lattice whose edges
/// join 4-neighbours. Returns the elimination order (new index -> old index).
pub fn nested_dissection(coords: &[(i32, i32)]) -> Vec<u32> {
    let mut out = Vec::with_capacity(coords.len());
    let ids: Vec<u32> = (0..coords.len() as u32).collect();
    dissect(ids, coords, &mut out);
    out
}

const ND_LEAF: usize = 64;

fn dissect(ids: Vec<u32>, coords: &[(i32, i32)], out: &mut Vec<u32>) {
    if ids.len() <= ND_LEAF {
        out.extend(ids);
        return;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (i32::MAX, i32::MIN, i32::MAX, i32::MIN);
    for &i in &ids {
        let (x, y) = coords[i as usize];
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let axis_x = x1 - x0 >= y1 - y0;
    let key = |i: u32| if axis_x { coords[i as usize].0 } else { coords[i as usize].1 };
    let mut keys: Vec<i32> = ids.iter().map(|&i| key(i)).collect();
    let mid = keys.len() / 2;
    let (_, m, _) = keys.select_nth_unstable(mid);
    let mut m = *m;
    let (lo, hi) = if axis_x { (x0, x1) } else { (y0, y1) };
    if m == lo || m == hi {
        m = lo + (hi - lo) / 2;
        if m == lo {
            out.extend(ids);
            return;
        }
    }
    let (mut left, mut right, mut sep) = (Vec::new(), Vec::new(), Vec::new());
    for i in ids {
        match key(i).cmp(&m) {
            std::cmp::Ordering::Less => left.push(i),
            std::cmp::Ordering::Greater => right.push(i),
            std::cmp::Ordering::Equal => sep.push(i),
        }
    }
    dissect(left, coords, out);
    dissect(right, coords, out);
    out.extend(sep);
}

/// Sparse Cholesky factor `P A Pᵀ = L Lᵀ`, L stored by columns with the
/// diagonal entry first in each column.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    perm: Vec<u32>,
    lp: Vec<usize>,
    li: Vec<u32>,
    lx: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &SymCsr, perm: Vec<u32>) -> Result<Self, SparseError> {
        let n = a.n;
        assert_eq!(perm.len(), n);
        let mut iperm = vec![0u32; n];
        for (k, &o) in perm.iter().enumerate() {
            iperm[o as usize] = k as u32;
        }
        // upper part of the permuted matrix, by column: entries (i, v), i <= k
        let cols: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|k| {
                a.row(perm[k] as usize)
                    .map(|(c, v)| (iperm[c] as usize, v))
                    .filter(|(i, _)| *i <= k)
                    .collect()
            })
            .collect();

        let parent = etree(&cols);
        let mut flag = vec![NONE; n];
        let mut stack = vec![0usize; n];
        let mut counts = vec![1usize; n];
        for k in 0..n {
            let top = ereach(&cols[k], k, &parent, &mut flag, &mut stack);
            for &j in &stack[top..] {
                counts[j] += 1;
            }
        }
        let mut lp = vec![0usize; n + 1];
        for j in 0..n {
            lp[j + 1] = lp[j] + counts[j];
        }
        let nnz = lp[n];
        let mut li = vec![0u32; nnz];
        let mut lx = vec![0.0f64; nnz];
        let mut next: Vec<usize> = lp[..n].to_vec();
        let mut x = vec![0.0f64; n];
        flag.iter_mut().for_each(|f| *f = NONE);

        for k in 0..n {
            let top = ereach(&cols[k], k, &parent, &mut flag, &mut stack);
            x[k] = 0.0;
            for &(i, v) in &cols[k] {
                x[i] = v;
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..] {
                let lki = x[i] / lx[lp[i]];
                x[i] = 0.0;
                for p in lp[i] + 1..next[i] {
                    x[li[p] as usize] -= lx[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                li[p] = k as u32;
                lx[p] = lki;
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(SparseError::NotPositiveDefinite(perm[k] as usize));
            }
            let p = next[k];
            next[k] += 1;
            li[p] = k as u32;
            lx[p] = d.sqrt();
        }
        Ok(Self { n, perm, lp, li, lx })
    }

    pub fn nnz(&self) -> usize {
        self.lx.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o as usize]).collect();
        for j in 0..n {
            let (s, e) = (self.lp[j], self.lp[j + 1]);
            y[j] /= self.lx[s];
            let yj = y[j];
            for p in s + 1..e {
                y[self.li[p] as usize] -= self.lx[p] * yj;
            }
        }
        for j in (0..n).rev() {
            let (s, e) = (self.lp[j], self.lp[j + 1]);
            let mut t = y[j];
            for p in s + 1..e {
                t -= self.lx[p] * y[self.li[p] as usize];
            }
            y[j] = t / self.lx[s];
        }
        let mut x = vec![0.0; n];
        for (k, &o) in self.perm.iter().enumerate() {
            x[o as usize] = y[k];
        }
        x
    }
}

fn etree(cols: &[Vec<(usize, f64)>]) -> Vec<usize> {
    let n = cols.len();
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for &(i0, _) in &cols[k] {
            let mut i = i0;
            while i != NONE && i < k {
                let inext = ancestor[i];
                ancestor[i] = k;
                if inext == NONE {
                    parent[i] = k;
                }
                i = inext;
            }
        }
    }
    parent
}

/// Nonzero pattern of row k of L, in topological order, as `stack[top..]`.
fn ereach(col: &[(usize, f64)], k: usize, parent: &[usize], flag: &mut [usize], stack: &mut [usize]) -> usize {
    let n = parent.len();
    let mut top = n;
    flag[k] = k;
    let mut path = Vec::new();
    for &(i0, _) in col {
        let mut i = i0;
        path.clear();
        while flag[i] != k {
            path.push(i);
            flag[i] = k;
            i = parent[i];
        }
        while let Some(j) = path.pop() {
            top -= 1;
            stack[top] = j;
        }
    }
    top
}

/// Jacobi-preconditioned conjugate gradient to relative residual `tol`.
pub fn pcg(a: &SymCsr, b: &[f64], x0: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<Vec<f64>, SparseError> {
    let n = a.n;
    let dinv: Vec<f64> = a.diag().iter().map(|d| 1.0 / d).collect();
    let bnorm = par::dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let ax = a.matvec(&x);
    let mut r: Vec<f64> = (0..n).map(|i| b[i] - ax[i]).collect();
    let mut z: Vec<f64> = (0..n).map(|i| r[i] * dinv[i]).collect();
    let mut p = z.clone();
    let mut rz = par::dot(&r, &z);
    let mut res = par::dot(&r, &r).sqrt() / bnorm;
    for _ in 0..max_iter {
        if res < tol {
            return Ok(x);
        }
        let ap = a.matvec(&p);
        let alpha = rz / par::dot(&p, &ap);
        par::for_each_mut(&mut x, |i, xi| *xi += alpha * p[i]);
        par::for_each_mut(&mut r, |i, ri| *ri -= alpha * ap[i]);
        par::for_each_mut(&mut z, |i, zi| *zi = r[i] * dinv[i]);
        let rz_new = par::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        par::for_each_mut(&mut p, |i, pi| *pi = z[i] + beta * *pi);
        res = par::dot(&r, &r).sqrt() / bnorm;
    }
    if res < tol {
        Ok(x)
    } else {
        Err(SparseError::Stalled(res))
    }
}

/// A reusable solver for one SPD matrix: a Cholesky factor for moderate
/// sizes, conjugate gradient otherwise.
#[derive(Clone, Debug)]
pub enum SpdSolver {
    Direct(Cholesky),
    Iterative(SymCsr),
}

impl SpdSolver {
    pub fn new(a: SymCsr, coords: &[(i32, i32)]) -> Result<Self, SparseError> {
        if a.n() <= DIRECT_LIMIT {
            let perm = nested_dissection(coords);
            Ok(SpdSolver::Direct(Cholesky::factor(&a, perm)?))
        } else {
            Ok(SpdSolver::Iterative(a))
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SparseError> {
        match self {
            SpdSolver::Direct(c) => Ok(c.solve(b)),
            SpdSolver::Iterative(a) => pcg(a, b, None, CG_TOL, 50 * a.n().max(100)),
        }
    }

    /// Solves for several right-hand sides, in parallel when enabled.
    pub fn solve_many(&self, bs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SparseError> {
        par::map_range(bs.len(), |i| self.solve(&bs[i])).into_iter().collect()
    }
}
