//! Sparse symmetric storage and the handful of solvers the obstacle layer needs.
//!
//! Matrices are kept in full (both triangles) CSR form with sorted column
//! indices. Small systems are handed to nalgebra's dense Cholesky; large ones
//! go through Jacobi-preconditioned conjugate gradients. Positive definiteness
//! of large forms is certified by an envelope Cholesky factorization under a
//! reverse Cuthill-McKee ordering.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Result, YoError};

/// Systems at or below this size are solved densely.
pub const DENSE_LIMIT: usize = 320;

/// Relative pivot below which a factorization is declared singular.
pub const SINGULAR_PIVOT: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct SymCsr {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SymCsr {
    /// Builds from (row, col, value) triplets. Duplicates are summed in the
    /// order given, so the result is deterministic for a fixed triplet order.
    /// Only the triplets passed are stored; callers supply both triangles.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n + 1];
        for &(i, j, _) in triplets {
            if i >= n || j >= n {
                return Err(YoError::Input(format!("triplet ({i}, {j}) out of range for size {n}")));
            }
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            cols[fill[i]] = j;
            vals[fill[i]] = v;
            fill[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..n {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            // stable sort keeps the summation order of duplicates
            scratch.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < scratch.len() {
                let c = scratch[k].0;
                let mut acc = 0.0;
                while k < scratch.len() && scratch[k].0 == c {
                    acc += scratch[k].1;
                    k += 1;
                }
                col_idx.push(c);
                values.push(acc);
            }
            row_ptr.push(col_idx.len());
        }
        let m = SymCsr { n, row_ptr, col_idx, values };
        m.check_symmetric()?;
        Ok(m)
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut trip = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            check_len(n, row.len())?;
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 || i == j {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &trip)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        Self::from_dense(&rows)
    }

    fn check_symmetric(&self) -> Result<()> {
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                let v = self.values[k];
                if self.get(j, i) != v {
                    return Err(YoError::Input(format!(
                        "matrix not symmetric at ({i}, {j}): {v} vs {}",
                        self.get(j, i)
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    /// Iterates `(col, value)` over the stored entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }

    /// `u^T A v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * v[self.col_idx[k]];
            }
            total += u[i] * acc;
        }
        total
    }

    /// Diagonal congruence `D A D` with `D = diag(d)`.
    pub fn congruence(&self, d: &[f64]) -> SymCsr {
        let mut values = self.values.clone();
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                values[k] = d[i] * self.values[k] * d[self.col_idx[k]];
            }
        }
        SymCsr { values, ..self.clone() }
    }

    /// Adds `d[i]` to each diagonal entry, inserting entries that are absent.
    pub fn add_diagonal(&self, d: &[f64]) -> Result<SymCsr> {
        check_len(self.n, d.len())?;
        let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz() + self.n);
        for i in 0..self.n {
            trip.extend(self.row(i).map(|(j, v)| (i, j, v)));
            if d[i] != 0.0 {
                trip.push((i, i, d[i]));
            }
        }
        SymCsr::from_triplets(self.n, &trip)
    }

    pub fn principal_submatrix(&self, keep: &[usize]) -> SymCsr {
        let mut local = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            local[i] = k;
        }
        let mut row_ptr = Vec::with_capacity(keep.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &i in keep {
            for (j, v) in self.row(i) {
                if local[j] != usize::MAX {
                    col_idx.push(local[j]);
                    values.push(v);
                }
            }
            // keep columns sorted even when `keep` is not increasing
            let start = *row_ptr.last().unwrap();
            let mut pairs: Vec<(usize, f64)> =
                col_idx[start..].iter().copied().zip(values[start..].iter().copied()).collect();
            pairs.sort_by_key(|&(c, _)| c);
            for (t, (c, v)) in pairs.into_iter().enumerate() {
                col_idx[start + t] = c;
                values[start + t] = v;
            }
            row_ptr.push(col_idx.len());
        }
        SymCsr { n: keep.len(), row_ptr, col_idx, values }
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

    /// Solves `A x = b` for SPD `A`; dense Cholesky when small, PCG otherwise.
    pub fn solve_spd(&self, b: &[f64], x0: Option<&[f64]>) -> Result<Vec<f64>> {
        check_len(self.n, b.len())?;
        if self.n == 0 {
            return Ok(Vec::new());
        }
        if self.n <= DENSE_LIMIT {
            let chol = self.to_dense().cholesky().ok_or_else(|| YoError::NotPositiveDefinite {
                detail: "dense Cholesky failed on subsystem".into(),
            })?;
            let x = chol.solve(&DVector::from_column_slice(b));
            return Ok(x.iter().copied().collect());
        }
        Ok(pcg(self, b, x0, 1e-14))
    }
}

/// Jacobi-preconditioned conjugate gradients. Returns the iterate with the
/// smallest residual seen; stops on `rtol`, stagnation, or the iteration cap.
pub fn pcg(a: &SymCsr, b: &[f64], x0: Option<&[f64]>, rtol: f64) -> Vec<f64> {
    let n = a.dim();
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| 1.0 / d).collect();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let bnorm = norm2(b).max(f64::MIN_POSITIVE);
    let mut r = a.matvec(&x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut best = x.clone();
    let mut best_res = norm2(&r);
    let mut since_best = 0;
    let max_iter = 20 * n + 200;
    for it in 0..max_iter {
        if best_res <= rtol * bnorm || since_best > 60 {
            break;
        }
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        // periodic true-residual refresh limits drift near machine precision
        if it % 50 == 49 {
            a.matvec_into(&x, &mut ap);
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
        }
        let res = norm2(&r);
        if res < best_res {
            best_res = res;
            best.copy_from_slice(&x);
            since_best = 0;
        } else {
            since_best += 1;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    best
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

/// Outcome of a successful Cholesky test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpdCertificate {
    /// Smallest and largest Cholesky pivot `L_ii^2`.
    pub min_pivot: f64,
    pub max_pivot: f64,
    /// Exact spectral condition number for dense-sized forms, pivot ratio otherwise.
    pub condition_estimate: f64,
}

/// Cholesky test. Fails with `NotPositiveDefinite` on a negative pivot or a
/// pivot that is numerically zero relative to the largest diagonal entry.
pub fn certify_spd(a: &SymCsr) -> Result<SpdCertificate> {
    let n = a.dim();
    if n == 0 {
        return Err(YoError::Input("empty matrix".into()));
    }
    let max_diag = a.diagonal().iter().fold(0.0f64, |m, &d| m.max(d));
    if max_diag <= 0.0 {
        return Err(YoError::NotPositiveDefinite {
            detail: "nonpositive diagonal".into(),
        });
    }
    let pivots = if n <= DENSE_LIMIT {
        dense_pivots(&a.to_dense())?
    } else {
        EnvelopeCholesky::factor(a)?.pivots()
    };
    let min_pivot = pivots.iter().copied().fold(f64::INFINITY, f64::min);
    let max_pivot = pivots.iter().copied().fold(0.0, f64::max);
    if min_pivot <= SINGULAR_PIVOT * max_diag {
        return Err(YoError::NotPositiveDefinite {
            detail: format!("pivot {min_pivot:.3e} is numerically zero (max diagonal {max_diag:.3e}); kernel detected"),
        });
    }
    let condition_estimate = if n <= DENSE_LIMIT {
        let eig = a.to_dense().symmetric_eigenvalues();
        let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().copied().fold(0.0, f64::max);
        if lo > 0.0 {
            hi / lo
        } else {
            f64::INFINITY
        }
    } else {
        max_pivot / min_pivot
    };
    Ok(SpdCertificate {
        min_pivot,
        max_pivot,
        condition_estimate,
    })
}

fn dense_pivots(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = m.clone().cholesky().ok_or_else(|| YoError::NotPositiveDefinite {
        detail: "Cholesky factorization failed (nonpositive pivot)".into(),
    })?;
    let l = chol.l();
    Ok((0..m.nrows()).map(|i| l[(i, i)] * l[(i, i)]).collect())
}

/// Reverse Cuthill-McKee ordering of the sparsity graph. Returns `perm`
/// with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &SymCsr) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).filter(|&(j, _)| j != i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(a, seed, &degree);
        let mut queue = VecDeque::new();
        queue.push_back(start);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = a.row(v).map(|(j, _)| j).filter(|&j| !visited[j]).collect();
            nbrs.sort_by_key(|&j| (degree[j], j));
            for j in nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(a: &SymCsr, start: usize) -> (Vec<usize>, usize) {
    let n = a.dim();
    let mut level = vec![usize::MAX; n];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut last = start;
    while let Some(v) = queue.pop_front() {
        last = v;
        for (j, _) in a.row(v) {
            if level[j] == usize::MAX {
                level[j] = level[v] + 1;
                queue.push_back(j);
            }
        }
    }
    (level, last)
}

fn pseudo_peripheral(a: &SymCsr, seed: usize, degree: &[usize]) -> usize {
    let mut current = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let (level, _) = bfs_levels(a, current);
        let depth = level.iter().filter(|&&l| l != usize::MAX).copied().max().unwrap_or(0);
        if depth <= ecc && current != seed {
            break;
        }
        ecc = depth;
        let candidate = (0..a.dim())
            .filter(|&i| level[i] == depth)
            .min_by_key(|&i| (degree[i], i))
            .unwrap_or(current);
        if candidate == current {
            break;
        }
        current = candidate;
    }
    current
}

/// Profile (envelope) Cholesky factorization `P A P^T = L L^T`.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    row_start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &SymCsr) -> Result<Self> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for (j, _) in a.row(old) {
                let nj = inv[j];
                if nj < first[new] {
                    first[new] = nj;
                }
            }
        }
        let mut row_start = Vec::with_capacity(n + 1);
        row_start.push(0);
        for i in 0..n {
            row_start.push(row_start[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; row_start[n]];
        for (new, &old) in perm.iter().enumerate() {
            for (j, v) in a.row(old) {
                let nj = inv[j];
                if nj <= new {
                    data[row_start[new] + nj - first[new]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = data[row_start[i] + j - fi];
                for k in lo..j {
                    s -= data[row_start[i] + k - fi] * data[row_start[j] + k - fj];
                }
                data[row_start[i] + j - fi] = s / data[row_start[j] + j - fj];
            }
            let mut d = data[row_start[i] + i - fi];
            for k in fi..i {
                let l = data[row_start[i] + k - fi];
                d -= l * l;
            }
            if !(d > 0.0) {
                return Err(YoError::NotPositiveDefinite {
                    detail: format!("nonpositive pivot {d:.3e} at ordered row {i}"),
                });
            }
            data[row_start[i] + i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            perm,
            first,
            row_start,
            data,
        })
    }

    pub fn pivots(&self) -> Vec<f64> {
        (0..self.perm.len())
            .map(|i| {
                let l = self.data[self.row_start[i] + i - self.first[i]];
                l * l
            })
            .collect()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.data[self.row_start[i] + k - fi] * y[k];
            }
            y[i] = s / self.data[self.row_start[i] + i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            y[i] /= self.data[self.row_start[i] + i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.data[self.row_start[i] + k - fi] * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}
