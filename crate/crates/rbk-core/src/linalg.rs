//! Small dense linear algebra: 3-vectors and row-major matrices.
//!
//! The matrices here are tiny (basis tables are k-by-k with k <= 8, QCQP
//! systems are a few hundred rows at most), so plain dense storage with
//! partial-pivot LU and Cholesky covers everything the crate needs.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// Float helpers routed through `libm` so the crate stays `no_std`.
pub(crate) mod flt {
    #[inline]
    pub fn sqrt(x: f64) -> f64 {
        libm::sqrt(x)
    }
    #[inline]
    pub fn floor(x: f64) -> f64 {
        libm::floor(x)
    }
    #[inline]
    pub fn ceil(x: f64) -> f64 {
        libm::ceil(x)
    }
    #[inline]
    pub fn round(x: f64) -> f64 {
        libm::round(x)
    }
    #[inline]
    pub fn abs(x: f64) -> f64 {
        libm::fabs(x)
    }
    /// Integer power by repeated multiplication; exact operation order keeps
    /// results reproducible across platforms.
    #[inline]
    pub fn powi(x: f64, n: u32) -> f64 {
        let mut acc = 1.0;
        for _ in 0..n {
            acc *= x;
        }
        acc
    }
}

/// A 3-vector in meters (or any consistent unit).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn splat(v: f64) -> Self {
        Vec3::new(v, v, v)
    }

    #[inline]
    pub fn axis(&self, d: usize) -> f64 {
        match d {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    #[inline]
    pub fn set_axis(&mut self, d: usize, v: f64) {
        match d {
            0 => self.x = v,
            1 => self.y = v,
            _ => self.z = v,
        }
    }

    #[inline]
    pub fn dot(&self, o: &Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        flt::sqrt(self.norm_sq())
    }

    #[inline]
    pub fn dist(&self, o: &Vec3) -> f64 {
        (*self - *o).norm()
    }

    #[inline]
    pub fn dist_sq(&self, o: &Vec3) -> f64 {
        (*self - *o).norm_sq()
    }

    /// Unit vector, or `None` when the norm is numerically zero.
    pub fn normalized(&self) -> Option<Vec3> {
        let n = self.norm();
        if n <= 1e-12 {
            None
        } else {
            Some(*self / n)
        }
    }

    /// Largest absolute component.
    pub fn max_abs(&self) -> f64 {
        flt::abs(self.x).max(flt::abs(self.y)).max(flt::abs(self.z))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Mat {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut m = Mat::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            m.data[i * c..(i + 1) * c].copy_from_slice(row);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, o: &Mat) -> Mat {
        assert_eq!(self.cols, o.rows, "dimension mismatch");
        let mut out = Mat::zeros(self.rows, o.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == 0.0 {
                    continue;
                }
                for c in 0..o.cols {
                    out[(r, c)] += a * o[(k, c)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "dimension mismatch");
        let mut out = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(v.iter()) {
                acc += a * b;
            }
            out[r] = acc;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Mat {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    pub fn add(&self, o: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(o.data.iter()) {
            *a += b;
        }
        out
    }

    /// `x^T self x` for a square matrix.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut acc = 0.0;
        for r in 0..self.rows {
            let row = self.row(r);
            let mut s = 0.0;
            for (a, b) in row.iter().zip(x.iter()) {
                s += a * b;
            }
            acc += x[r] * s;
        }
        acc
    }

    /// Solve `self * x = b` for each column of `b` via partial-pivot LU.
    /// Returns `None` for singular systems.
    pub fn solve(&self, b: &Mat) -> Option<Mat> {
        assert_eq!(self.rows, self.cols, "solve needs a square matrix");
        assert_eq!(self.rows, b.rows);
        let n = self.rows;
        let mut a = self.clone();
        let mut x = b.clone();
        for col in 0..n {
            let mut piv = col;
            let mut best = flt::abs(a[(col, col)]);
            for r in col + 1..n {
                let v = flt::abs(a[(r, col)]);
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-300 {
                return None;
            }
            if piv != col {
                for c in 0..n {
                    a.data.swap(piv * n + c, col * n + c);
                }
                for c in 0..x.cols {
                    x.data.swap(piv * x.cols + c, col * x.cols + c);
                }
            }
            let d = a[(col, col)];
            for r in col + 1..n {
                let f = a[(r, col)] / d;
                if f == 0.0 {
                    continue;
                }
                a[(r, col)] = 0.0;
                for c in col + 1..n {
                    a[(r, c)] -= f * a[(col, c)];
                }
                for c in 0..x.cols {
                    x[(r, c)] -= f * x[(col, c)];
                }
            }
        }
        for col in (0..n).rev() {
            let d = a[(col, col)];
            for c in 0..x.cols {
                let mut s = x[(col, c)];
                for k in col + 1..n {
                    s -= a[(col, k)] * x[(k, c)];
                }
                x[(col, c)] = s / d;
            }
        }
        Some(x)
    }

    pub fn inverse(&self) -> Option<Mat> {
        self.solve(&Mat::identity(self.rows))
    }

    /// Cholesky factorization of a symmetric positive-definite matrix.
    pub fn cholesky(&self) -> Option<Chol> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= 0.0 {
                        return None;
                    }
                    l[i * n + i] = flt::sqrt(s);
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Chol { n, l })
    }
}

impl core::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Lower-triangular Cholesky factor, reused across many solves.
#[derive(Debug, Clone)]
pub struct Chol {
    n: usize,
    l: Vec<f64>,
}

impl Chol {
    /// Solve `L L^T x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vec3_basics() {
        let a = Vec3::new(1.0, 2.0, 2.0);
        assert_eq!(a.norm(), 3.0);
        assert_eq!(a.dot(&Vec3::new(1.0, 0.0, 0.0)), 1.0);
        assert_eq!((a - a).norm(), 0.0);
        assert!(Vec3::ZERO.normalized().is_none());
    }

    #[test]
    fn solve_recovers_known_system() {
        let a = Mat::from_rows(&[&[4.0, 1.0, 0.0], &[1.0, 3.0, 1.0], &[0.0, 1.0, 2.0]]);
        let x_true = Mat::from_rows(&[&[1.0], &[-2.0], &[0.5]]);
        let b = a.matmul(&x_true);
        let x = a.solve(&b).unwrap();
        for r in 0..3 {
            assert!((x[(r, 0)] - x_true[(r, 0)]).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_roundtrip() {
        let a = Mat::from_rows(&[&[2.0, 1.0], &[1.0, 3.0]]);
        let inv = a.inverse().unwrap();
        let id = a.matmul(&inv);
        assert!((id[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((id[(0, 1)]).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = Mat::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(a.inverse().is_none());
    }

    #[test]
    fn cholesky_solve_matches_lu() {
        let a = Mat::from_rows(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, 1.0], &[0.5, 1.0, 2.0]]);
        let chol = a.cholesky().unwrap();
        let b = [1.0, 2.0, 3.0];
        let mut x = b;
        chol.solve_in_place(&mut x);
        let lu = a.solve(&Mat::from_rows(&[&[b[0]], &[b[1]], &[b[2]]])).unwrap();
        for i in 0..3 {
            assert!((x[i] - lu[(i, 0)]).abs() < 1e-12);
        }
    }
}
