//! Small dense real matrices with a runtime dimension.
//!
//! Everything here works for any `d >= 1`; the hot paths (`apply`,
//! `apply_transpose`, `mul`, singular values, eigenvalues) have closed-form
//! branches for `d = 2` and `d = 3`.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Row-major `d x d` matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = self.data.chunks(self.dim).collect();
        f.debug_struct("Matrix").field("rows", &rows).finish()
    }
}

impl Matrix {
    /// Builds a matrix from row-major data. Panics if `data.len() != dim * dim`.
    pub fn new(dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim * dim, "matrix data has wrong length");
        Matrix { dim, data }
    }

    /// Builds a matrix from rows; `None` if the rows are ragged or not square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return None;
        }
        Some(Matrix {
            dim,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, 1.0)
    }

    pub fn zeros(dim: usize) -> Self {
        Matrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn scalar(dim: usize, c: f64) -> Self {
        Self::diag(&vec![c; dim])
    }

    pub fn diag(values: &[f64]) -> Self {
        let dim = values.len();
        let mut m = Self::zeros(dim);
        for (i, v) in values.iter().enumerate() {
            m.data[i * dim + i] = *v;
        }
        m
    }

    /// `scale * R(theta)`, the planar rotation by `theta` radians scaled by `scale`.
    pub fn scaled_rotation(scale: f64, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Matrix::new(2, vec![scale * c, -scale * s, scale * s, scale * c])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let d = self.dim;
        let mut out = Matrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.data[j * d + i] = self.data[i * d + j];
            }
        }
        out
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix {
            dim: self.dim,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.dim, other.dim);
        Matrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.add(&other.scaled(-1.0))
    }

    /// Matrix product `self * other`.
    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut out = Matrix::zeros(d);
        mul_into(&self.data, &other.data, &mut out.data, d);
        out
    }

    /// `out = self * v`.
    #[inline]
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        apply_raw(&self.data, self.dim, v, out);
    }

    /// `out = self^T * v`.
    #[inline]
    pub fn apply_transpose(&self, v: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let a = &self.data;
        match d {
            2 => {
                out[0] = a[0] * v[0] + a[2] * v[1];
                out[1] = a[1] * v[0] + a[3] * v[1];
            }
            _ => {
                for j in 0..d {
                    let mut s = 0.0;
                    for i in 0..d {
                        s += a[i * d + j] * v[i];
                    }
                    out[j] = s;
                }
            }
        }
    }

    pub fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.apply(v, &mut out);
        out
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn det(&self) -> f64 {
        let a = &self.data;
        match self.dim {
            1 => a[0],
            2 => a[0] * a[3] - a[1] * a[2],
            3 => {
                a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                    + a[2] * (a[3] * a[7] - a[4] * a[6])
            }
            d => {
                let mut lu = a.clone();
                let mut det = 1.0;
                for k in 0..d {
                    let p = (k..d)
                        .max_by(|&i, &j| lu[i * d + k].abs().total_cmp(&lu[j * d + k].abs()))
                        .unwrap();
                    if lu[p * d + k] == 0.0 {
                        return 0.0;
                    }
                    if p != k {
                        for j in 0..d {
                            lu.swap(k * d + j, p * d + j);
                        }
                        det = -det;
                    }
                    let piv = lu[k * d + k];
                    det *= piv;
                    for i in k + 1..d {
                        let f = lu[i * d + k] / piv;
                        for j in k..d {
                            lu[i * d + j] -= f * lu[k * d + j];
                        }
                    }
                }
                det
            }
        }
    }

    /// Solves `self * x = rhs` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let d = self.dim;
        let mut a = self.data.clone();
        let mut b = rhs.to_vec();
        for k in 0..d {
            let p = (k..d).max_by(|&i, &j| a[i * d + k].abs().total_cmp(&a[j * d + k].abs()))?;
            if a[p * d + k].abs() < 1e-300 {
                return None;
            }
            if p != k {
                for j in 0..d {
                    a.swap(k * d + j, p * d + j);
                }
                b.swap(k, p);
            }
            for i in k + 1..d {
                let f = a[i * d + k] / a[k * d + k];
                for j in k..d {
                    a[i * d + j] -= f * a[k * d + j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; d];
        for i in (0..d).rev() {
            let s: f64 = (i + 1..d).map(|j| a[i * d + j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i * d + i];
        }
        Some(x)
    }

    /// Singular values in decreasing order.
    pub fn singular_values(&self) -> Vec<f64> {
        let gram = self.transpose().mul(self);
        let mut ev = match self.dim {
            2 => {
                let (a, b, c) = (gram.data[0], gram.data[1], gram.data[3]);
                let m = 0.5 * (a + c);
                let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
                vec![m + r, (m - r).max(0.0)]
            }
            _ => symmetric_eigen(&gram).0,
        };
        ev.sort_by(|x, y| y.total_cmp(x));
        ev.into_iter().map(|x| x.max(0.0).sqrt()).collect()
    }

    /// Operator norm induced by the Euclidean norm (largest singular value).
    pub fn op_norm(&self) -> f64 {
        self.singular_values()[0]
    }

    pub fn min_singular_value(&self) -> f64 {
        *self.singular_values().last().unwrap()
    }

    /// `true` when `self^T self = c I` for some `c > 0` (a scaled orthogonal map).
    pub fn is_conformal(&self, tol: f64) -> bool {
        let gram = self.transpose().mul(self);
        let c = gram.trace() / self.dim as f64;
        if c <= 0.0 {
            return false;
        }
        gram.max_abs_diff(&Matrix::scalar(self.dim, c)) <= tol * c
    }

    /// All complex eigenvalues, sorted by decreasing modulus.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let mut ev = match self.dim {
            1 => vec![Complex64::new(self.data[0], 0.0)],
            2 => {
                let tr = self.trace();
                let det = self.det();
                let disc = 0.25 * tr * tr - det;
                if disc >= 0.0 {
                    let r = disc.sqrt();
                    // avoid cancellation for the small root
                    let big = 0.5 * tr + r.copysign(tr);
                    let small = if big != 0.0 { det / big } else { 0.0 };
                    vec![Complex64::new(big, 0.0), Complex64::new(small, 0.0)]
                } else {
                    let im = (-disc).sqrt();
                    vec![
                        Complex64::new(0.5 * tr, im),
                        Complex64::new(0.5 * tr, -im),
                    ]
                }
            }
            d => {
                let m = nalgebra::DMatrix::from_row_slice(d, d, &self.data);
                m.complex_eigenvalues()
                    .iter()
                    .map(|c| Complex64::new(c.re, c.im))
                    .collect()
            }
        };
        ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        ev
    }

    /// Unit vector spanning (approximately) the kernel of `self - lambda I`.
    pub fn real_eigenvector(&self, lambda: f64) -> Vec<f64> {
        let shifted = self.sub(&Matrix::scalar(self.dim, lambda));
        let gram = shifted.transpose().mul(&shifted);
        let (vals, vecs) = symmetric_eigen(&gram);
        let k = (0..vals.len())
            .min_by(|&i, &j| vals[i].total_cmp(&vals[j]))
            .unwrap();
        let mut v: Vec<f64> = (0..self.dim).map(|i| vecs.get(i, k)).collect();
        normalize(&mut v);
        v
    }
}

#[inline]
pub(crate) fn apply_raw(a: &[f64], d: usize, v: &[f64], out: &mut [f64]) {
    match d {
        2 => {
            out[0] = a[0] * v[0] + a[1] * v[1];
            out[1] = a[2] * v[0] + a[3] * v[1];
        }
        3 => {
            out[0] = a[0] * v[0] + a[1] * v[1] + a[2] * v[2];
            out[1] = a[3] * v[0] + a[4] * v[1] + a[5] * v[2];
            out[2] = a[6] * v[0] + a[7] * v[1] + a[8] * v[2];
        }
        _ => {
            for i in 0..d {
                let row = &a[i * d..(i + 1) * d];
                out[i] = row.iter().zip(v).map(|(x, y)| x * y).sum();
            }
        }
    }
}

#[inline]
pub(crate) fn mul_into(a: &[f64], b: &[f64], out: &mut [f64], d: usize) {
    if d == 2 {
        out[0] = a[0] * b[0] + a[1] * b[2];
        out[1] = a[0] * b[1] + a[1] * b[3];
        out[2] = a[2] * b[0] + a[3] * b[2];
        out[3] = a[2] * b[1] + a[3] * b[3];
        return;
    }
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += a[i * d + k] * b[k * d + j];
            }
            out[i * d + j] = s;
        }
    }
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
///
/// Returns the eigenvalues and a matrix whose columns are the eigenvectors.
pub fn symmetric_eigen(m: &Matrix) -> (Vec<f64>, Matrix) {
    let d = m.dim;
    let mut a = m.data.clone();
    let mut v = Matrix::identity(d).data;
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * d + j] * a[i * d + j])
            .sum();
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>();
        if off <= 1e-30 * scale.max(1e-300) {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..d).map(|i| a[i * d + i]).collect(), Matrix::new(d, v))
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Scales `v` to unit length in place and returns the original length.
#[inline]
pub fn normalize(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn singular_values_closed_form_and_jacobi_agree() {
        let m2 = Matrix::new(2, vec![0.3, -0.7, 0.2, 0.5]);
        let sv2 = m2.singular_values();
        // 3x3 block-diagonal embedding goes through the Jacobi path
        let m3 = Matrix::new(3, vec![0.3, -0.7, 0.0, 0.2, 0.5, 0.0, 0.0, 0.0, 0.1]);
        let sv3 = m3.singular_values();
        assert_relative_eq!(sv2[0], sv3[0], epsilon = 1e-13);
        assert_relative_eq!(sv2[1], sv3[1], epsilon = 1e-13);
        assert_relative_eq!(sv3[2], 0.1, epsilon = 1e-13);
        assert_relative_eq!(sv2[0] * sv2[1], m2.det().abs(), epsilon = 1e-14);
    }

    #[test]
    fn op_norm_of_diag_and_rotation() {
        assert_relative_eq!(Matrix::diag(&[1.2, 0.3]).op_norm(), 1.2, epsilon = 1e-15);
        assert_relative_eq!(
            Matrix::scaled_rotation(0.45, 1.0).op_norm(),
            0.45,
            epsilon = 1e-15
        );
    }

    #[test]
    fn det_general_path_matches_closed_form() {
        let m = Matrix::new(
            4,
            vec![
                2.0, 1.0, 0.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, 0.0, 1.0, 4.0, 0.0, 0.0, 2.0, 1.0,
            ],
        );
        // block determinant: 5 * (1 - 8)
        assert_relative_eq!(m.det(), -35.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenvalues_2x2_and_3x3() {
        let ev = Matrix::diag(&[0.9, 0.1]).eigenvalues();
        assert_relative_eq!(ev[0].re, 0.9);
        assert_relative_eq!(ev[1].re, 0.1, epsilon = 1e-15);
        let ev = Matrix::scaled_rotation(0.5, 1.0).eigenvalues();
        assert_relative_eq!(ev[0].norm(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(ev[0].im.abs(), 0.5 * 1.0f64.sin(), epsilon = 1e-15);
        let ev = Matrix::diag(&[0.2, -0.7, 0.5]).eigenvalues();
        assert_relative_eq!(ev[0].re, -0.7, epsilon = 1e-12);
        assert_relative_eq!(ev[2].re, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn real_eigenvector_spans_kernel() {
        let m = Matrix::new(2, vec![0.6, 0.2, 0.0, 0.25]);
        let v = m.real_eigenvector(0.25);
        let mv = m.apply_vec(&v);
        assert_relative_eq!(mv[0], 0.25 * v[0], epsilon = 1e-12);
        assert_relative_eq!(mv[1], 0.25 * v[1], epsilon = 1e-12);
    }

    #[test]
    fn solve_and_transpose_apply() {
        let m = Matrix::new(3, vec![2.0, 1.0, 0.0, 0.0, 1.0, -1.0, 1.0, 0.0, 3.0]);
        let x = m.solve(&[1.0, 2.0, 3.0]).unwrap();
        let back = m.apply_vec(&x);
        for (a, b) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
        let v = [0.3, -1.0, 2.0];
        let mut out = [0.0; 3];
        m.apply_transpose(&v, &mut out);
        assert_eq!(out.to_vec(), m.transpose().apply_vec(&v));
    }

    #[test]
    fn conformal_detection() {
        assert!(Matrix::scaled_rotation(0.3, 2.0).is_conformal(1e-12));
        assert!(!Matrix::diag(&[0.3, 0.2]).is_conformal(1e-12));
    }
}
