//! Closed-form 2×2 linear algebra and a 6×6 determinant.
//!
//! Only what the stability analysis needs: eigenvalues, spectral radius and
//! norm of 2×2 matrices, the 2×2 Lyapunov solve `MᵀQ + QM = -I`, and
//! `|det(A - λI)|` for 6×6 matrices.

use std::cmp::Ordering;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not Hurwitz: eigenvalue with real part {max_real_part} >= 0")]
    NotHurwitz { max_real_part: f64 },
    #[error("matrix is singular")]
    Singular,
}

/// Row-major 2×2 real matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2::new(1.0, 0.0, 0.0, 1.0);
    pub const ZERO: Mat2 = Mat2::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Mat2 { a11, a12, a21, a22 }
    }

    pub const fn diag(d1: f64, d2: f64) -> Self {
        Mat2::new(d1, 0.0, 0.0, d2)
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.a11, self.a21, self.a12, self.a22)
    }

    pub fn scale(&self, k: f64) -> Mat2 {
        Mat2::new(k * self.a11, k * self.a12, k * self.a21, k * self.a22)
    }

    pub fn inverse(&self) -> Result<Mat2, LinalgError> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return Err(LinalgError::Singular);
        }
        Ok(Mat2::new(self.a22, -self.a12, -self.a21, self.a11).scale(1.0 / det))
    }

    pub fn frobenius_norm(&self) -> f64 {
        (self.a11 * self.a11 + self.a12 * self.a12 + self.a21 * self.a21 + self.a22 * self.a22)
            .sqrt()
    }

    /// Induced ∞-norm (max absolute row sum).
    pub fn row_sum_norm(&self) -> f64 {
        (self.a11.abs() + self.a12.abs()).max(self.a21.abs() + self.a22.abs())
    }

    pub fn is_finite(&self) -> bool {
        [self.a11, self.a12, self.a21, self.a22]
            .iter()
            .all(|v| v.is_finite())
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a11 + o.a11,
            self.a12 + o.a12,
            self.a21 + o.a21,
            self.a22 + o.a22,
        )
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a11 - o.a11,
            self.a12 - o.a12,
            self.a21 - o.a21,
            self.a22 - o.a22,
        )
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a11 * o.a11 + self.a12 * o.a21,
            self.a11 * o.a12 + self.a12 * o.a22,
            self.a21 * o.a11 + self.a22 * o.a21,
            self.a21 * o.a12 + self.a22 * o.a22,
        )
    }
}

/// Roots of `λ² - tr·λ + det`, ordered by real part descending, then
/// imaginary part descending.
pub fn eigenvalues_2x2(m: &Mat2) -> [Complex64; 2] {
    let half_tr = 0.5 * m.trace();
    // (a11 - a22)²/4 + a12·a21 avoids cancellation in tr²/4 - det.
    let half_diff = 0.5 * (m.a11 - m.a22);
    let disc = half_diff * half_diff + m.a12 * m.a21;
    let mut ev = if disc >= 0.0 {
        let root = disc.sqrt();
        [
            Complex64::new(half_tr + root, 0.0),
            Complex64::new(half_tr - root, 0.0),
        ]
    } else {
        let root = (-disc).sqrt();
        [
            Complex64::new(half_tr, root),
            Complex64::new(half_tr, -root),
        ]
    };
    ev.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap_or(Ordering::Equal)
            .then(b.im.partial_cmp(&a.im).unwrap_or(Ordering::Equal))
    });
    ev
}

pub fn spectral_radius(m: &Mat2) -> f64 {
    let [l1, l2] = eigenvalues_2x2(m);
    l1.norm().max(l2.norm())
}

/// Largest singular value, from the larger eigenvalue of `MᵀM`.
pub fn spectral_norm(m: &Mat2) -> f64 {
    let g = m.transpose() * *m;
    let half_tr = 0.5 * g.trace();
    let half_diff = 0.5 * (g.a11 - g.a22);
    let root = (half_diff * half_diff + g.a12 * g.a21).max(0.0).sqrt();
    (half_tr + root).max(0.0).sqrt()
}

/// Solves `MᵀQ + QM = -I` for symmetric `Q`.
///
/// Written out in the unknowns `(q11, q12, q22)`:
///
/// ```text
/// 2 m11 q11           + 2 m21 q12                       = -1
///   m12 q11 + (m11 + m22) q12 +   m21 q22               =  0
///                       2 m12 q12 + 2 m22 q22           = -1
/// ```
pub fn solve_lyapunov(m: &Mat2) -> Result<Mat2, LinalgError> {
    let [lead, _] = eigenvalues_2x2(m);
    if !(lead.re < 0.0) {
        return Err(LinalgError::NotHurwitz {
            max_real_part: lead.re,
        });
    }
    let a = [
        [2.0 * m.a11, 2.0 * m.a21, 0.0],
        [m.a12, m.a11 + m.a22, m.a21],
        [0.0, 2.0 * m.a12, 2.0 * m.a22],
    ];
    let q = solve3(a, [-1.0, 0.0, -1.0])?;
    Ok(Mat2::new(q[0], q[1], q[1], q[2]))
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Result<[f64; 3], LinalgError> {
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col] == 0.0 {
            return Err(LinalgError::Singular);
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (rhs[row] - tail) / a[row][row];
    }
    Ok(x)
}

pub type Mat6 = [[f64; 6]; 6];

/// `|det(A - λI)|` by LU factorization with partial pivoting.
pub fn char_residual_6(matrix: &Mat6, lambda: f64) -> f64 {
    let mut a = *matrix;
    for (k, row) in a.iter_mut().enumerate() {
        row[k] -= lambda;
    }
    let mut det = 1.0;
    for col in 0..6 {
        let pivot = (col..6)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            a.swap(col, pivot);
            det = -det;
        }
        det *= a[col][col];
        for row in col + 1..6 {
            let f = a[row][col] / a[col][col];
            for k in col..6 {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    det.abs()
}

/// Max absolute row sum of a 6×6 matrix.
pub fn row_sum_norm_6(matrix: &Mat6) -> f64 {
    matrix
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
