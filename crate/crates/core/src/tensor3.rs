//! Real 3×3 tensors with the Frobenius inner product.
//!
//! Entries are stored row-major. The space splits orthogonally into
//! symmetric and antisymmetric parts, which is what every constitutive
//! formula in this crate is built on.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// A real 3×3 matrix, row-major.
///
/// Serializes as a flat JSON array of 9 numbers.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mat3(pub [f64; 9]);

impl Mat3 {
    pub const ZERO: Mat3 = Mat3([0.0; 9]);
    pub const IDENTITY: Mat3 = Mat3([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Self {
        let mut m = [0.0; 9];
        for (i, row) in rows.iter().enumerate() {
            m[3 * i..3 * i + 3].copy_from_slice(row);
        }
        Mat3(m)
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        Mat3([a, 0.0, 0.0, 0.0, b, 0.0, 0.0, 0.0, c])
    }

    /// Matrix with a single nonzero entry at `(i, j)` (zero-based).
    pub fn unit(i: usize, j: usize) -> Self {
        let mut m = Mat3::ZERO;
        m[(i, j)] = 1.0;
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[3 * i + j]
    }

    pub fn transpose(&self) -> Self {
        let a = &self.0;
        Mat3([a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]])
    }

    /// `(X + Xᵀ) / 2`
    pub fn sym_part(&self) -> Self {
        let mut out = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                out[3 * i + j] = 0.5 * (self.0[3 * i + j] + self.0[3 * j + i]);
            }
        }
        Mat3(out)
    }

    /// `(X − Xᵀ) / 2`
    pub fn asym_part(&self) -> Self {
        let mut out = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                out[3 * i + j] = 0.5 * (self.0[3 * i + j] - self.0[3 * j + i]);
            }
        }
        Mat3(out)
    }

    /// Frobenius product `X : Y = Σ XᵢⱼYᵢⱼ`.
    #[inline]
    pub fn dot(&self, other: &Mat3) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[4] + self.0[8]
    }

    /// `X − (tr X / 3) I`
    pub fn deviatoric(&self) -> Self {
        let t = self.trace() / 3.0;
        let mut out = *self;
        out.0[0] -= t;
        out.0[4] -= t;
        out.0[8] -= t;
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Mat3(self.0.map(|x| x * s))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }
}

/// Free-function form of [`Mat3::sym_part`].
pub fn sym_part(x: &Mat3) -> Mat3 {
    x.sym_part()
}

/// Free-function form of [`Mat3::asym_part`].
pub fn asym_part(x: &Mat3) -> Mat3 {
    x.asym_part()
}

pub fn frobenius_dot(x: &Mat3, y: &Mat3) -> f64 {
    x.dot(y)
}

pub fn frobenius_norm(x: &Mat3) -> f64 {
    x.norm()
}

pub fn trace(x: &Mat3) -> f64 {
    x.trace()
}

pub fn deviatoric(x: &Mat3) -> Mat3 {
    x.deviatoric()
}

impl Index<(usize, usize)> for Mat3 {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.0[3 * i + j]
    }
}

impl IndexMut<(usize, usize)> for Mat3 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.0[3 * i + j]
    }
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(self, rhs: Mat3) -> Mat3 {
        let mut out = self;
        out += rhs;
        out
    }
}

impl AddAssign for Mat3 {
    fn add_assign(&mut self, rhs: Mat3) {
        for (a, b) in self.0.iter_mut().zip(rhs.0.iter()) {
            *a += b;
        }
    }
}

impl Sub for Mat3 {
    type Output = Mat3;
    fn sub(self, rhs: Mat3) -> Mat3 {
        let mut out = self;
        out -= rhs;
        out
    }
}

impl SubAssign for Mat3 {
    fn sub_assign(&mut self, rhs: Mat3) {
        for (a, b) in self.0.iter_mut().zip(rhs.0.iter()) {
            *a -= b;
        }
    }
}

impl Neg for Mat3 {
    type Output = Mat3;
    fn neg(self) -> Mat3 {
        self.scale(-1.0)
    }
}

impl Mul<f64> for Mat3 {
    type Output = Mat3;
    fn mul(self, s: f64) -> Mat3 {
        self.scale(s)
    }
}

impl Mul<Mat3> for f64 {
    type Output = Mat3;
    fn mul(self, m: Mat3) -> Mat3 {
        m.scale(self)
    }
}
