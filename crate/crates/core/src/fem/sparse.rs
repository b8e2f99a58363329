//! Symmetric sparse matrices and a profile LDLᵀ factorization with
//! 1×1 / 2×2 diagonal pivots for saddle-point systems.

use crate::error::{Error, Result};

/// Symmetric matrix with the lower triangle stored row by row
#[derive(Clone, Debug)]
pub struct SymSparse {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SymSparse {
    /// Creates a zero matrix from per-row column lists (entries with `j > i`
    /// are mirrored, duplicates removed, diagonal always present)
    pub fn from_rows(n: usize, rows: Vec<Vec<usize>>) -> Self {
        let mut lower: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, row) in rows.into_iter().enumerate() {
            for j in row {
                let (r, c) = if j <= i { (i, j) } else { (j, i) };
                lower[r].push(c);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for (i, mut row) in lower.into_iter().enumerate() {
            row.push(i);
            row.sort_unstable();
            row.dedup();
            cols.extend(row);
            row_ptr.push(cols.len());
        }
        let nnz = cols.len();
        SymSparse { n, row_ptr, cols, vals: vec![0.0; nnz] }
    }

    /// Dense symmetric input (lower triangle is read)
    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let n = a.len();
        let rows = (0..n).map(|i| (0..=i).collect()).collect();
        let mut m = SymSparse::from_rows(n, rows);
        for i in 0..n {
            for j in 0..=i {
                m.add(i, j, a[i][j]);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn set_zero(&mut self) {
        self.vals.iter_mut().for_each(|v| *v = 0.0);
    }

    fn find(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = if j <= i { (i, j) } else { (j, i) };
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[range.clone()].binary_search(&c).ok().map(|k| range.start + k)
    }

    /// Adds `v` to entry (i, j); panics if the entry is not in the pattern
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        match self.find(i, j) {
            Some(k) => self.vals[k] += v,
            None => panic!("entry ({i}, {j}) outside the sparsity pattern"),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.find(i, j).map_or(0.0, |k| self.vals[k])
    }

    /// Iterates over the stored lower-triangle entries (i, j, value)
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.cols[k], self.vals[k]))
        })
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                let v = self.vals[k];
                y[i] += v * x[j];
                if j != i {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Restriction to the rows/columns with `keep[i] == true`, renumbered in order
    pub fn restrict(&self, keep: &[bool]) -> SymSparse {
        let mut map = vec![usize::MAX; self.n];
        let mut m = 0;
        for i in 0..self.n {
            if keep[i] {
                map[i] = m;
                m += 1;
            }
        }
        let mut row_ptr = Vec::with_capacity(m + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..self.n {
            if !keep[i] {
                continue;
            }
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                if keep[j] {
                    cols.push(map[j]);
                    vals.push(self.vals[k]);
                }
            }
            row_ptr.push(cols.len());
        }
        SymSparse { n: m, row_ptr, cols, vals }
    }

    /// Dense copy, used by small diagnostics and tests
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n]; self.n];
        for (i, j, v) in self.entries() {
            a[i][j] = v;
            a[j][i] = v;
        }
        a
    }
}

/// Bunch-Kaufman growth constant (1 + √17)/8
const GAMMA: f64 = 0.6403882032022076;

/// LDLᵀ factor in profile storage with block-diagonal D
///
/// Pivots are taken in the natural order; a 2×2 pivot may couple only
/// adjacent unknowns, so the unknown ordering should place saddle partners
/// next to each other (as the nodal DOF layouts do).
#[derive(Clone, Debug)]
pub struct LdltFactor {
    n: usize,
    first: Vec<usize>,
    ptr: Vec<usize>,
    vals: Vec<f64>,
    col_rows: Vec<Vec<usize>>,
    /// 1 for a 1×1 pivot, 2 for the first index of a 2×2 block, 0 for its second index
    pivot: Vec<u8>,
    min_pivot: (usize, f64),
}

impl LdltFactor {
    pub fn factor(a: &SymSparse) -> Result<LdltFactor> {
        let n = a.n;
        let mut first = vec![0usize; n];
        for i in 0..n {
            let f = a.cols[a.row_ptr[i]];
            first[i] = if i > 0 { f.min(i).saturating_sub(1) } else { 0 };
        }
        let mut ptr = Vec::with_capacity(n + 1);
        ptr.push(0);
        for i in 0..n {
            ptr.push(ptr[i] + i - first[i] + 1);
        }
        let mut vals = vec![0.0; ptr[n]];
        for (i, j, v) in a.entries() {
            vals[ptr[i] + j - first[i]] = v;
        }
        let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            for k in first[i]..i {
                col_rows[k].push(i);
            }
        }
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let tiny = 1e-14 * scale;
        let mut pivot = vec![1u8; n];
        let mut min_pivot = (0usize, f64::INFINITY);
        let at = |vals: &Vec<f64>, i: usize, j: usize| vals[ptr[i] + j - first[i]];
        let mut w = Vec::new();
        let mut w1: Vec<f64> = Vec::new();
        let mut k = 0;
        while k < n {
            let akk = at(&vals, k, k);
            let omega1 = col_rows[k].iter().fold(0.0f64, |m, &i| m.max(at(&vals, i, k).abs()));
            let mut two = false;
            if akk.abs() < GAMMA * omega1 && k + 1 < n {
                let b = at(&vals, k + 1, k);
                let c = at(&vals, k + 1, k + 1);
                let omega_r = col_rows[k + 1]
                    .iter()
                    .fold(b.abs(), |m, &i| m.max(at(&vals, i, k + 1).abs()));
                let det = akk * c - b * b;
                let one_ok = akk.abs() * omega_r >= GAMMA * omega1 * omega1 && akk.abs() > tiny;
                if !one_ok && det.abs() > 1e-14 * (akk.abs() * c.abs() + b * b) && det.abs() > tiny * tiny {
                    two = true;
                }
            }
            if two {
                let a11 = at(&vals, k, k);
                let a21 = at(&vals, k + 1, k);
                let a22 = at(&vals, k + 1, k + 1);
                let det = a11 * a22 - a21 * a21;
                let (i11, i12, i22) = (a22 / det, -a21 / det, a11 / det);
                // rows strictly below the block that touch column k
                let rows: Vec<usize> = col_rows[k].iter().copied().filter(|&i| i > k + 1).collect();
                w.clear();
                for &i in &rows {
                    w.push((at(&vals, i, k), at(&vals, i, k + 1)));
                }
                let contiguous = rows.last().is_none_or(|&last| last + 1 - rows[0] == rows.len());
                for (ii, &i) in rows.iter().enumerate() {
                    let (wi0, wi1) = w[ii];
                    let l0 = wi0 * i11 + wi1 * i12;
                    let l1 = wi0 * i12 + wi1 * i22;
                    let base = ptr[i] - first[i];
                    if contiguous {
                        let dst = &mut vals[base + rows[0]..=base + i];
                        for (d, &(wj0, wj1)) in dst.iter_mut().zip(&w[..=ii]) {
                            *d -= l0 * wj0 + l1 * wj1;
                        }
                    } else {
                        for (&j, &(wj0, wj1)) in rows[..=ii].iter().zip(&w[..=ii]) {
                            vals[base + j] -= l0 * wj0 + l1 * wj1;
                        }
                    }
                    vals[base + k] = l0;
                    vals[base + k + 1] = l1;
                }
                let dmin = (det / (a11.abs() + a22.abs() + a21.abs()).max(f64::MIN_POSITIVE)).abs();
                if dmin < min_pivot.1 {
                    min_pivot = (k, dmin);
                }
                pivot[k] = 2;
                pivot[k + 1] = 0;
                k += 2;
            } else {
                if akk.abs() <= tiny {
                    return Err(Error::SingularMatrix { dof: k, pivot: akk });
                }
                if akk.abs() < min_pivot.1 {
                    min_pivot = (k, akk.abs());
                }
                let rows = &col_rows[k];
                w1.clear();
                for &i in rows {
                    w1.push(at(&vals, i, k));
                }
                let contiguous = rows.last().is_none_or(|&last| last + 1 - rows[0] == rows.len());
                for (ii, &i) in rows.iter().enumerate() {
                    let l = w1[ii] / akk;
                    let base = ptr[i] - first[i];
                    if contiguous {
                        let dst = &mut vals[base + rows[0]..=base + i];
                        for (d, &wj) in dst.iter_mut().zip(&w1[..=ii]) {
                            *d -= l * wj;
                        }
                    } else {
                        for (&j, &wj) in rows[..=ii].iter().zip(&w1[..=ii]) {
                            vals[base + j] -= l * wj;
                        }
                    }
                    vals[base + k] = l;
                }
                pivot[k] = 1;
                k += 1;
            }
        }
        Ok(LdltFactor { n, first, ptr, vals, col_rows, pivot, min_pivot })
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.vals[self.ptr[i] + j - self.first[i]]
    }

    /// DOF and magnitude of the smallest pivot met during the factorization
    pub fn smallest_pivot(&self) -> (usize, f64) {
        self.min_pivot
    }

    /// Numbers of positive, negative and zero eigenvalues (Sylvester inertia of D)
    pub fn inertia(&self) -> (usize, usize, usize) {
        let (mut pos, mut neg, mut zero) = (0, 0, 0);
        let mut count = |v: f64| {
            if v > 0.0 {
                pos += 1
            } else if v < 0.0 {
                neg += 1
            } else {
                zero += 1
            }
        };
        let mut k = 0;
        while k < self.n {
            if self.pivot[k] == 2 {
                let (a, b, c) = (self.at(k, k), self.at(k + 1, k), self.at(k + 1, k + 1));
                let det = a * c - b * b;
                if det < 0.0 {
                    count(1.0);
                    count(-1.0);
                } else {
                    count(a + c);
                    count(a + c);
                }
                k += 2;
            } else {
                count(self.at(k, k));
                k += 1;
            }
        }
        (pos, neg, zero)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        let mut k = 0;
        while k < n {
            if self.pivot[k] == 2 {
                let (yk, yk1) = (y[k], y[k + 1]);
                for &i in self.col_rows[k].iter().filter(|&&i| i > k + 1) {
                    y[i] -= self.at(i, k) * yk + self.at(i, k + 1) * yk1;
                }
                k += 2;
            } else {
                let yk = y[k];
                for &i in &self.col_rows[k] {
                    y[i] -= self.at(i, k) * yk;
                }
                k += 1;
            }
        }
        let mut k = 0;
        while k < n {
            if self.pivot[k] == 2 {
                let (a, bb, c) = (self.at(k, k), self.at(k + 1, k), self.at(k + 1, k + 1));
                let det = a * c - bb * bb;
                let (r0, r1) = (y[k], y[k + 1]);
                y[k] = (c * r0 - bb * r1) / det;
                y[k + 1] = (a * r1 - bb * r0) / det;
                k += 2;
            } else {
                y[k] /= self.at(k, k);
                k += 1;
            }
        }
        let mut k = n;
        while k > 0 {
            let top = k - 1;
            if self.pivot[top] == 0 {
                let s = top - 1;
                let (mut x0, mut x1) = (y[s], y[top]);
                for &i in self.col_rows[s].iter().filter(|&&i| i > top) {
                    x0 -= self.at(i, s) * y[i];
                    x1 -= self.at(i, top) * y[i];
                }
                y[s] = x0;
                y[top] = x1;
                k -= 2;
            } else {
                let mut x = y[top];
                for &i in &self.col_rows[top] {
                    x -= self.at(i, top) * y[i];
                }
                y[top] = x;
                k -= 1;
            }
        }
        y
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Factorizes and solves A x = b with a few steps of iterative refinement
pub fn factor_solve(a: &SymSparse, b: &[f64]) -> Result<Vec<f64>> {
    let f = LdltFactor::factor(a)?;
    let mut x = f.solve(b);
    let bnorm = norm(b);
    let mut rnorm = f64::INFINITY;
    for _ in 0..4 {
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let rn = norm(&r);
        if rn <= 1e-15 * bnorm || rn >= rnorm {
            break;
        }
        rnorm = rn;
        let dx = f.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
    }
    if x.iter().any(|v| !v.is_finite()) {
        let (dof, pivot) = f.smallest_pivot();
        return Err(Error::SingularMatrix { dof, pivot });
    }
    Ok(x)
}
