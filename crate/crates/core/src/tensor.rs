//! Second-order tensors and the logarithmic strain calculus.
//!
//! Symmetric tensors are stored with the six independent components in the
//! order 11, 22, 33, 12, 23, 13 (tensorial shear values). Derivatives with
//! respect to a symmetric tensor are always taken with respect to these six
//! independent components, so chain rules are plain matrix products. The only
//! place where the shear factor of two appears is [`SymTensor3::from_gradient`]
//! and [`SymTensor3::to_gradient`].

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

/// Row/column pair of each Voigt slot
pub const VOIGT: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (0, 2)];

/// Voigt slot of the component (i, j)
pub const fn voigt_index(i: usize, j: usize) -> usize {
    const MAP: [[usize; 3]; 3] = [[0, 3, 5], [3, 1, 4], [5, 4, 2]];
    MAP[i][j]
}

/// General second-order tensor with row-major components
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tensor3(pub [[f64; 3]; 3]);

impl Tensor3 {
    pub fn zero() -> Self {
        Tensor3([[0.0; 3]; 3])
    }

    pub fn identity() -> Self {
        Tensor3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        Tensor3([[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]])
    }

    pub fn det(&self) -> f64 {
        let a = &self.0;
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    }

    pub fn transpose(&self) -> Self {
        let mut t = [[0.0; 3]; 3];
        for (i, row) in t.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.0[j][i];
            }
        }
        Tensor3(t)
    }

    pub fn matmul(&self, other: &Tensor3) -> Self {
        let mut t = [[0.0; 3]; 3];
        for (i, row) in t.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * other.0[k][j]).sum();
            }
        }
        Tensor3(t)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Symmetric second-order tensor (Voigt order 11, 22, 33, 12, 23, 13)
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymTensor3(pub [f64; 6]);

impl SymTensor3 {
    pub fn zero() -> Self {
        SymTensor3([0.0; 6])
    }

    pub fn identity() -> Self {
        SymTensor3([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        SymTensor3([a, b, c, 0.0, 0.0, 0.0])
    }

    /// Builds from a full matrix using the symmetric part
    pub fn from_matrix(m: &[[f64; 3]; 3]) -> Self {
        let mut v = [0.0; 6];
        for (k, &(i, j)) in VOIGT.iter().enumerate() {
            v[k] = 0.5 * (m[i][j] + m[j][i]);
        }
        SymTensor3(v)
    }

    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.0[voigt_index(i, j)];
            }
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[voigt_index(i, j)]
    }

    /// Converts a derivative with respect to the six independent components
    /// into the symmetric tensor it represents (shear slots are halved)
    pub fn from_gradient(g: &[f64; 6]) -> Self {
        SymTensor3([g[0], g[1], g[2], 0.5 * g[3], 0.5 * g[4], 0.5 * g[5]])
    }

    /// Inverse of [`SymTensor3::from_gradient`]: the derivative of `A : X`
    /// with respect to the independent components of `X`
    pub fn to_gradient(&self) -> [f64; 6] {
        let v = &self.0;
        [v[0], v[1], v[2], 2.0 * v[3], 2.0 * v[4], 2.0 * v[5]]
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }

    pub fn deviator(&self) -> Self {
        let m = self.trace() / 3.0;
        let v = &self.0;
        SymTensor3([v[0] - m, v[1] - m, v[2] - m, v[3], v[4], v[5]])
    }

    /// Full contraction A : B
    pub fn ddot(&self, other: &SymTensor3) -> f64 {
        let (a, b) = (&self.0, &other.0);
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + 2.0 * (a[3] * b[3] + a[4] * b[4] + a[5] * b[5])
    }

    pub fn norm(&self) -> f64 {
        self.ddot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut v = self.0;
        v.iter_mut().for_each(|x| *x *= s);
        SymTensor3(v)
    }

    pub fn det(&self) -> f64 {
        Tensor3(self.to_matrix()).det()
    }

    /// Inverse via the adjugate; `None` if the determinant vanishes
    pub fn inverse(&self) -> Option<Self> {
        let m = self.to_matrix();
        let det = self.det();
        if det.abs() <= 1e-300 {
            return None;
        }
        let c = |i: usize, j: usize| {
            let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
            let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
            m[i1][j1] * m[i2][j2] - m[i1][j2] * m[i2][j1]
        };
        let mut inv = [[0.0; 3]; 3];
        for (i, row) in inv.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = c(j, i) / det;
            }
        }
        Some(SymTensor3::from_matrix(&inv))
    }

    /// Rotated tensor Qᵀ A Q
    pub fn rotate(&self, q: &Tensor3) -> Self {
        let a = Tensor3(self.to_matrix());
        SymTensor3::from_matrix(&q.transpose().matmul(&a).matmul(q).0)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Add for SymTensor3 {
    type Output = SymTensor3;
    fn add(self, rhs: SymTensor3) -> SymTensor3 {
        let mut v = self.0;
        v.iter_mut().zip(rhs.0).for_each(|(a, b)| *a += b);
        SymTensor3(v)
    }
}

impl Sub for SymTensor3 {
    type Output = SymTensor3;
    fn sub(self, rhs: SymTensor3) -> SymTensor3 {
        let mut v = self.0;
        v.iter_mut().zip(rhs.0).for_each(|(a, b)| *a -= b);
        SymTensor3(v)
    }
}

impl Mul<SymTensor3> for f64 {
    type Output = SymTensor3;
    fn mul(self, rhs: SymTensor3) -> SymTensor3 {
        rhs.scale(self)
    }
}

/// Trace of a symmetric tensor
pub fn trace(a: &SymTensor3) -> f64 {
    a.trace()
}

/// Deviatoric part A − (tr A / 3) I
pub fn deviator(a: &SymTensor3) -> SymTensor3 {
    a.deviator()
}

/// Right Cauchy-Green tensor C = Fᵀ F
pub fn right_cauchy_green(f: &Tensor3) -> Result<SymTensor3> {
    let det = f.det();
    if det.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::NonPositiveJacobian(format!("det F = {det:e}")));
    }
    Ok(SymTensor3::from_matrix(&f.transpose().matmul(f).0))
}

/// Eigenvalues (descending) and orthonormal eigenvectors (columns of `vectors`)
/// of a symmetric tensor by cyclic Jacobi rotations
pub fn symmetric_eigen(a: &SymTensor3) -> ([f64; 3], Tensor3) {
    let mut m = a.to_matrix();
    let mut v = Tensor3::identity().0;
    let scale = a.max_abs();
    if scale > 0.0 {
        for _sweep in 0..50 {
            let off = m[0][1].abs() + m[1][2].abs() + m[0][2].abs();
            if off <= 1e-300 || off <= f64::EPSILON * 1e-3 * scale {
                break;
            }
            for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = 0.5 * (m[q][q] - m[p][p]) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..3 {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..3 {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                m[p][q] = 0.0;
                m[q][p] = 0.0;
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| m[j][j].partial_cmp(&m[i][i]).unwrap_or(std::cmp::Ordering::Equal));
    let values = [m[order[0]][order[0]], m[order[1]][order[1]], m[order[2]][order[2]]];
    let mut vectors = [[0.0; 3]; 3];
    for (col, &src) in order.iter().enumerate() {
        for row in 0..3 {
            vectors[row][col] = v[row][src];
        }
    }
    (values, Tensor3(vectors))
}

/// Spectral representation with coalescent eigenvalues merged
#[derive(Clone, Debug)]
pub struct SpectralDecomp {
    /// Eigenvalues in descending order (with multiplicity)
    pub eigenvalues: [f64; 3],

    /// Orthonormal eigenvectors stored as columns
    pub eigenvectors: Tensor3,

    /// Distinct eigenvalues with their eigenprojections
    pub projections: Vec<(f64, SymTensor3)>,
}

impl SpectralDecomp {
    /// Reassembles Σ λᵢ Pᵢ
    pub fn reconstruct(&self) -> SymTensor3 {
        self.projections.iter().fold(SymTensor3::zero(), |acc, (l, p)| acc + p.scale(*l))
    }
}

/// Relative gap below which eigenvalues are merged into one projection
pub const COALESCENCE_TOL: f64 = 1e-9;

/// Eigenvalues and eigenprojections of a symmetric tensor
pub fn spectral_decompose(a: &SymTensor3) -> SpectralDecomp {
    let (values, vectors) = symmetric_eigen(a);
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let q = &vectors.0;
    let mut projections: Vec<(f64, SymTensor3, usize)> = Vec::new();
    for k in 0..3 {
        let mut p = [[0.0; 3]; 3];
        for (i, row) in p.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = q[i][k] * q[j][k];
            }
        }
        let pk = SymTensor3::from_matrix(&p);
        match projections.last_mut() {
            Some((lam, proj, count)) if (*lam - values[k]).abs() < COALESCENCE_TOL * scale => {
                *lam = (*lam * *count as f64 + values[k]) / (*count as f64 + 1.0);
                *proj = *proj + pk;
                *count += 1;
            }
            _ => projections.push((values[k], pk, 1)),
        }
    }
    SpectralDecomp {
        eigenvalues: values,
        eigenvectors: vectors,
        projections: projections.into_iter().map(|(l, p, _)| (l, p)).collect(),
    }
}

/// Unit symmetric direction for the independent component `k`
/// (shear slots carry both off-diagonal entries)
fn unit_direction(k: usize) -> [[f64; 3]; 3] {
    let (i, j) = VOIGT[k];
    let mut e = [[0.0; 3]; 3];
    e[i][j] = 1.0;
    e[j][i] = 1.0;
    e
}

fn half_log(x: f64) -> f64 {
    0.5 * x.ln()
}

/// First divided difference of x ↦ ½ ln x
fn divided1(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.5 / a;
    }
    let t = (a - b) / b;
    0.5 * t.ln_1p() / (t * b)
}

/// Second divided difference of x ↦ ½ ln x
fn divided2(x: [f64; 3]) -> f64 {
    let m = (x[0] + x[1] + x[2]) / 3.0;
    let d = [x[0] - m, x[1] - m, x[2] - m];
    let spread = d.iter().fold(0.0f64, |s, v| s.max(v.abs())) / m;
    if spread < 1e-3 {
        // Taylor series about the mean: Σ_k f⁽ᵏ⁾(m)/k! · h_{k-2}(d)
        let mut pw = [[1.0; 5]; 3];
        for (v, row) in pw.iter_mut().enumerate() {
            for a in 1..5 {
                row[a] = row[a - 1] * d[v];
            }
        }
        let mut h = [0.0; 5];
        for (deg, hv) in h.iter_mut().enumerate() {
            let mut s = 0.0;
            for a in 0..=deg {
                for b in 0..=(deg - a) {
                    s += pw[0][a] * pw[1][b] * pw[2][deg - a - b];
                }
            }
            *hv = s;
        }
        let mut sum = 0.0;
        let mut mk = m;
        for k in 2..=6 {
            mk *= m;
            let coef = 0.5 * if k % 2 == 0 { -1.0 } else { 1.0 } / (k as f64 * mk);
            sum += coef * h[k - 2];
        }
        return sum;
    }
    // difference quotient over the most separated pair
    let (mut i, mut j, mut gap) = (0, 1, (x[0] - x[1]).abs());
    for &(p, q) in &[(0usize, 2usize), (1, 2)] {
        if (x[p] - x[q]).abs() > gap {
            gap = (x[p] - x[q]).abs();
            i = p;
            j = q;
        }
    }
    let k = 3 - i - j;
    (divided1(x[i], x[k]) - divided1(x[k], x[j])) / (x[i] - x[j])
}

/// Logarithmic strain ε = ½ ln C with its first and second derivatives
#[derive(Clone, Debug)]
pub struct HenckyStrain {
    pub strain: SymTensor3,
    lambda: [f64; 3],
    q: Tensor3,
    f1: [[f64; 3]; 3],
    f2: [[[f64; 3]; 3]; 3],
    /// Unit directions rotated into the eigenbasis
    rotated: [[[f64; 3]; 3]; 6],
}

impl HenckyStrain {
    pub fn new(c: &SymTensor3) -> Result<Self> {
        let (lambda, q) = symmetric_eigen(c);
        if lambda.iter().any(|&l| l.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)) {
            return Err(Error::NonPositiveJacobian(format!("eigenvalue of C = {:e}", lambda[2])));
        }
        let mut logm = [[0.0; 3]; 3];
        for (i, row) in logm.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| q.0[i][k] * half_log(lambda[k]) * q.0[j][k]).sum();
            }
        }
        let mut f1 = [[0.0; 3]; 3];
        let mut f2 = [[[0.0; 3]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                f1[i][j] = divided1(lambda[i], lambda[j]);
            }
        }
        // the second divided difference is symmetric in its arguments
        for i in 0..3 {
            for k in i..3 {
                for j in k..3 {
                    let v = divided2([lambda[i], lambda[k], lambda[j]]);
                    for [a, b, c] in [[i, k, j], [i, j, k], [k, i, j], [k, j, i], [j, i, k], [j, k, i]] {
                        f2[a][b][c] = v;
                    }
                }
            }
        }
        let mut rotated = [[[0.0; 3]; 3]; 6];
        for (l, r) in rotated.iter_mut().enumerate() {
            let e = Tensor3(unit_direction(l));
            *r = q.transpose().matmul(&e).matmul(&q).0;
        }
        Ok(HenckyStrain { strain: SymTensor3::from_matrix(&logm), lambda, q, f1, f2, rotated })
    }

    /// Eigenvalues of C (descending)
    pub fn stretches_squared(&self) -> [f64; 3] {
        self.lambda
    }

    fn to_global(&self, m: &[[f64; 3]; 3]) -> SymTensor3 {
        let mt = Tensor3(*m);
        SymTensor3::from_matrix(&self.q.matmul(&mt).matmul(&self.q.transpose()).0)
    }

    /// Jacobian ∂ε_k/∂C_l in independent components
    pub fn first(&self) -> [[f64; 6]; 6] {
        let mut d = [[0.0; 6]; 6];
        for l in 0..6 {
            let h = &self.rotated[l];
            let mut m = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] = self.f1[i][j] * h[i][j];
                }
            }
            let col = self.to_global(&m);
            for k in 0..6 {
                d[k][l] = col.0[k];
            }
        }
        d
    }

    fn second_eigen(&self, l: usize, m: usize) -> [[f64; 3]; 3] {
        let (h, k) = (&self.rotated[l], &self.rotated[m]);
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for p in 0..3 {
                    s += self.f2[i][p][j] * (h[i][p] * k[p][j] + k[i][p] * h[p][j]);
                }
                out[i][j] = s;
            }
        }
        out
    }

    /// Second derivative ∂²ε_k/∂C_l∂C_m in independent components, indexed [k][l][m]
    pub fn second(&self) -> Box<[[[f64; 6]; 6]; 6]> {
        let mut d = Box::new([[[0.0; 6]; 6]; 6]);
        for l in 0..6 {
            for m in l..6 {
                let val = self.to_global(&self.second_eigen(l, m));
                for k in 0..6 {
                    d[k][l][m] = val.0[k];
                    d[k][m][l] = val.0[k];
                }
            }
        }
        d
    }

    /// Contraction Σ_k g_k ∂²ε_k/∂C_l∂C_m for a gradient `g` taken with
    /// respect to the independent components of ε
    pub fn second_contracted(&self, g: &[f64; 6]) -> [[f64; 6]; 6] {
        let sigma = SymTensor3::from_gradient(g).rotate(&self.q).to_matrix();
        let mut out = [[0.0; 6]; 6];
        for l in 0..6 {
            for m in l..6 {
                let (h, k) = (&self.rotated[l], &self.rotated[m]);
                let mut s = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        if sigma[i][j] == 0.0 {
                            continue;
                        }
                        let mut t = 0.0;
                        for p in 0..3 {
                            t += self.f2[i][p][j] * (h[i][p] * k[p][j] + k[i][p] * h[p][j]);
                        }
                        s += sigma[i][j] * t;
                    }
                }
                out[l][m] = s;
                out[m][l] = s;
            }
        }
        out
    }
}

/// Hencky strain with fourth- and sixth-order derivatives
pub fn hencky_strain(c: &SymTensor3) -> Result<(SymTensor3, [[f64; 6]; 6], Box<[[[f64; 6]; 6]; 6]>)> {
    let h = HenckyStrain::new(c)?;
    Ok((h.strain, h.first(), h.second()))
}

/// Plane-strain deformation gradient from the in-plane displacement gradient
/// [u_x,x, u_x,y, u_y,x, u_y,y]
pub fn plane_strain_f(grad_u: &[f64; 4]) -> Tensor3 {
    Tensor3([[1.0 + grad_u[0], grad_u[1], 0.0], [grad_u[2], 1.0 + grad_u[3], 0.0], [0.0, 0.0, 1.0]])
}

/// Jacobian ∂C_l/∂F_a and the constant second derivative ∂²C_l/∂F_a∂F_b for
/// plane strain, where F_a runs over (F11, F12, F21, F22)
pub fn plane_strain_dc_df(f: &Tensor3) -> ([[f64; 4]; 6], [[[f64; 4]; 4]; 6]) {
    const SLOTS: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];
    let mut d1 = [[0.0; 4]; 6];
    let mut d2 = [[[0.0; 4]; 4]; 6];
    // C_ij = Σ_k F_ki F_kj
    for (l, &(i, j)) in VOIGT.iter().enumerate() {
        for (a, &(ka, ca)) in SLOTS.iter().enumerate() {
            let mut v = 0.0;
            if ca == i {
                v += f.0[ka][j];
            }
            if ca == j {
                v += f.0[ka][i];
            }
            d1[l][a] = v;
            for (b, &(kb, cb)) in SLOTS.iter().enumerate() {
                if ka != kb {
                    continue;
                }
                let mut w = 0.0;
                if ca == i && cb == j {
                    w += 1.0;
                }
                if ca == j && cb == i {
                    w += 1.0;
                }
                d2[l][a][b] = w;
            }
        }
    }
    (d1, d2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn voigt_roundtrip() {
        let a = SymTensor3([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(SymTensor3::from_matrix(&a.to_matrix()), a);
        assert_eq!(SymTensor3::from_gradient(&a.to_gradient()), a);
        assert_eq!(a.get(1, 0), 4.0);
        assert_eq!(a.get(2, 1), 5.0);
        assert_eq!(a.get(0, 2), 6.0);
    }

    #[test]
    fn deviator_and_trace() {
        let i = SymTensor3::identity();
        assert_eq!(trace(&i), 3.0);
        assert_eq!(deviator(&i), SymTensor3::zero());
        let d = deviator(&SymTensor3::diag(1.0, 0.0, 0.0));
        let expect = [2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0];
        for k in 0..3 {
            assert!((d.0[k] - expect[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn right_cauchy_green_closed_forms() {
        assert_eq!(right_cauchy_green(&Tensor3::identity()).unwrap(), SymTensor3::identity());
        assert_eq!(right_cauchy_green(&Tensor3::diag(2.0, 1.0, 1.0)).unwrap(), SymTensor3::diag(4.0, 1.0, 1.0));
        assert!(matches!(right_cauchy_green(&Tensor3::diag(-1.0, 1.0, 1.0)), Err(Error::NonPositiveJacobian(_))));
    }

    #[test]
    fn spectral_identity_has_one_projection() {
        let s = spectral_decompose(&SymTensor3::identity());
        assert_eq!(s.projections.len(), 1);
        assert!((s.projections[0].0 - 1.0).abs() < 1e-15);
        assert!((s.projections[0].1 - SymTensor3::identity()).max_abs() < 1e-15);
    }

    #[test]
    fn spectral_diag_411() {
        let s = spectral_decompose(&SymTensor3::diag(4.0, 1.0, 1.0));
        assert_eq!(s.projections.len(), 2);
        assert!((s.projections[0].0 - 4.0).abs() < 1e-15);
        assert!((s.projections[1].0 - 1.0).abs() < 1e-15);
        assert!((s.projections[0].1 - SymTensor3::diag(1.0, 0.0, 0.0)).max_abs() < 1e-15);
        assert!((s.projections[1].1 - SymTensor3::diag(0.0, 1.0, 1.0)).max_abs() < 1e-15);
    }

    #[test]
    fn hencky_closed_forms() {
        let h = HenckyStrain::new(&SymTensor3::identity()).unwrap();
        assert!(h.strain.max_abs() < 1e-16);
        let d = h.first();
        for k in 0..6 {
            for l in 0..6 {
                // ½ of the identity on symmetric tensors, in independent components
                let expect = if k == l { 0.5 } else { 0.0 };
                assert!((d[k][l] - expect).abs() < 1e-15, "{k} {l} {}", d[k][l]);
            }
        }
        let h = HenckyStrain::new(&SymTensor3::diag(4.0, 1.0, 1.0)).unwrap();
        assert!((h.strain.0[0] - 2f64.ln()).abs() < 1e-15);
        assert!(h.strain.0[1].abs() < 1e-15 && h.strain.0[3].abs() < 1e-15);
    }

    #[test]
    fn divided_differences_are_continuous() {
        let f = |x: f64| 0.5 * x.ln();
        let (a, b) = (2.0, 2.0 + 1e-4);
        assert!((divided1(a, b) - (f(a) - f(b)) / (a - b)).abs() < 1e-10);
        // second divided difference of ln tends to f''/2 = -1/(4x²)
        let v = divided2([3.0, 3.0, 3.0]);
        assert!((v + 0.25 / 9.0).abs() < 1e-15);
        let x = [1.0, 1.5, 2.5];
        let direct = ((f(x[0]) - f(x[1])) / (x[0] - x[1]) - (f(x[1]) - f(x[2])) / (x[1] - x[2])) / (x[0] - x[2]);
        assert!((divided2(x) - direct).abs() < 1e-14);
        let y = [1.0, 1.0 + 2e-4, 1.0 - 3e-4];
        let near = divided2(y);
        let z = [1.0, 1.0 + 2e-3, 1.0 - 3e-3];
        let far = divided2(z);
        assert!((near + 0.25).abs() < 1e-3);
        assert!((far + 0.25).abs() < 3e-3);
    }

    #[test]
    fn plane_strain_dc_df_matches_finite_differences() {
        let g = [0.1, -0.2, 0.05, 0.3];
        let f = plane_strain_f(&g);
        let (d1, d2) = plane_strain_dc_df(&f);
        let h = 1e-6;
        for a in 0..4 {
            let mut gp = g;
            let mut gm = g;
            gp[a] += h;
            gm[a] -= h;
            let cp = right_cauchy_green(&plane_strain_f(&gp)).unwrap();
            let cm = right_cauchy_green(&plane_strain_f(&gm)).unwrap();
            for l in 0..6 {
                assert!(((cp.0[l] - cm.0[l]) / (2.0 * h) - d1[l][a]).abs() < 1e-8);
            }
            let (d1p, _) = plane_strain_dc_df(&plane_strain_f(&gp));
            let (d1m, _) = plane_strain_dc_df(&plane_strain_f(&gm));
            for l in 0..6 {
                for b in 0..4 {
                    assert!(((d1p[l][b] - d1m[l][b]) / (2.0 * h) - d2[l][a][b]).abs() < 1e-8);
                }
            }
        }
    }
}
