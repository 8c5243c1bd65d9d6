//! Small fixed-size helpers for the bivariate model.

use nalgebra::{Matrix2, Vector2};

use crate::{Error, Result};

/// Symmetric 2×2 matrix stored by its lower half, `vech = (s11, s21, s22)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cov2 {
    pub s11: f64,
    pub s21: f64,
    pub s22: f64,
}

impl Cov2 {
    pub const fn new(s11: f64, s21: f64, s22: f64) -> Self {
        Self { s11, s21, s22 }
    }

    /// Covariance with the given standard deviations and correlation.
    pub fn from_sd_corr(sd1: f64, sd2: f64, corr: f64) -> Self {
        Self::new(sd1 * sd1, corr * sd1 * sd2, sd2 * sd2)
    }

    pub fn from_matrix(m: &Matrix2<f64>) -> Self {
        // symmetrise against round-off in products
        Self::new(m[(0, 0)], 0.5 * (m[(1, 0)] + m[(0, 1)]), m[(1, 1)])
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.s11, self.s21, self.s21, self.s22)
    }

    pub fn vech(&self) -> [f64; 3] {
        [self.s11, self.s21, self.s22]
    }

    pub fn from_vech(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn det(&self) -> f64 {
        self.s11 * self.s22 - self.s21 * self.s21
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(self.s11 * c, self.s21 * c, self.s22 * c)
    }

    pub fn is_finite(&self) -> bool {
        self.s11.is_finite() && self.s21.is_finite() && self.s22.is_finite()
    }

    /// Positive diagonal and positive determinant.
    pub fn is_positive_definite(&self) -> bool {
        self.s11 > 0.0 && self.s22 > 0.0 && self.det() > 0.0
    }

    pub fn inverse(&self) -> Result<Cov2> {
        let det = self.det();
        let scale = (self.s11 * self.s22).abs().max(f64::MIN_POSITIVE);
        if !det.is_finite() || det.abs() <= 1e-14 * scale || det == 0.0 {
            return Err(Error::Singular(format!("2x2 matrix with det {det:e} is not invertible")));
        }
        Ok(Cov2::new(self.s22 / det, -self.s21 / det, self.s11 / det))
    }

    /// Lower Cholesky factor. Accepts positive semi-definite input so that
    /// noiseless simulations (a zero matrix) stay expressible.
    pub fn cholesky_psd(&self) -> Result<Matrix2<f64>> {
        if self.s11 < 0.0 || self.s22 < 0.0 || self.det() < -1e-15 * (self.s11 * self.s22).abs() {
            return Err(Error::domain(format!(
                "matrix ({}, {}, {}) is not positive semi-definite",
                self.s11, self.s21, self.s22
            )));
        }
        let l11 = self.s11.sqrt();
        let (l21, l22) = if l11 > 0.0 {
            let l21 = self.s21 / l11;
            (l21, (self.s22 - l21 * l21).max(0.0).sqrt())
        } else {
            (0.0, self.s22.sqrt())
        };
        Ok(Matrix2::new(l11, 0.0, l21, l22))
    }

    /// `tr(self · other)` for two symmetric matrices.
    pub fn trace_product(&self, other: &Cov2) -> f64 {
        self.s11 * other.s11 + 2.0 * self.s21 * other.s21 + self.s22 * other.s22
    }

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        [self.s11 * v[0] + self.s21 * v[1], self.s21 * v[0] + self.s22 * v[1]]
    }

    pub fn add(&self, other: &Cov2) -> Cov2 {
        Cov2::new(self.s11 + other.s11, self.s21 + other.s21, self.s22 + other.s22)
    }
}

/// Accumulates `Σ_t x_t y_t'` over rows for paired two-vectors, returning
/// the (generally non-symmetric) cross-product matrix.
pub(crate) fn cross_product<I>(pairs: I) -> Matrix2<f64>
where
    I: IntoIterator<Item = ([f64; 2], [f64; 2])>,
{
    let mut acc = Matrix2::zeros();
    for (x, y) in pairs {
        acc += Vector2::new(x[0], x[1]) * Vector2::new(y[0], y[1]).transpose();
    }
    acc
}

/// `tr(A B)` for a symmetric `A` and an arbitrary `B`.
pub(crate) fn trace_sym_mat(a: &Cov2, b: &Matrix2<f64>) -> f64 {
    (a.matrix() * b).trace()
}

/// Duplication-matrix factor `2 D⁺ (S ⊗ S) D⁺'` for a 2×2 symmetric `S`,
/// ordered as `vech = (s11, s21, s22)`.
pub fn vech_kron_cov(s: &Cov2) -> [[f64; 3]; 3] {
    // Closed form of 2 D⁺(S⊗S)D⁺' for the 2×2 case:
    // cov(s_ij, s_kl) = s_ik s_jl + s_il s_jk.
    let m = s.matrix();
    let idx = [(0usize, 0usize), (1, 0), (1, 1)];
    let mut out = [[0.0; 3]; 3];
    for (p, &(i, j)) in idx.iter().enumerate() {
        for (q, &(k, l)) in idx.iter().enumerate() {
            out[p][q] = m[(i, k)] * m[(j, l)] + m[(i, l)] * m[(j, k)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force 2 D⁺(S⊗S)D⁺' from explicit 4×4 and 3×4 matrices.
    fn brute_force_vech_cov(s: &Cov2) -> [[f64; 3]; 3] {
        let sm = s.matrix();
        let mut kron = [[0.0; 4]; 4];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        kron[2 * i + k][2 * j + l] = sm[(i, j)] * sm[(k, l)];
                    }
                }
            }
        }
        // vec order is column-major: (s11, s21, s12, s22)
        let d_plus = [[1.0, 0.0, 0.0, 0.0], [0.0, 0.5, 0.5, 0.0], [0.0, 0.0, 0.0, 1.0]];
        let mut out = [[0.0; 3]; 3];
        for p in 0..3 {
            for q in 0..3 {
                let mut acc = 0.0;
                for r in 0..4 {
                    for c in 0..4 {
                        acc += d_plus[p][r] * kron[r][c] * d_plus[q][c];
                    }
                }
                out[p][q] = 2.0 * acc;
            }
        }
        out
    }

    #[test]
    fn vech_cov_of_identity_is_diag_2_1_2() {
        let v = vech_kron_cov(&Cov2::new(1.0, 0.0, 1.0));
        let expected = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]];
        assert_eq!(v, expected);
        assert_eq!(brute_force_vech_cov(&Cov2::new(1.0, 0.0, 1.0)), expected);
    }

    #[test]
    fn vech_cov_matches_brute_force() {
        let s = Cov2::new(5.5e-5, 3.9e-5, 4.4e-5);
        let a = vech_kron_cov(&s);
        let b = brute_force_vech_cov(&s);
        for p in 0..3 {
            for q in 0..3 {
                assert!((a[p][q] - b[p][q]).abs() <= 1e-24, "{p}{q}");
            }
        }
    }

    #[test]
    fn inverse_round_trip() {
        let s = Cov2::new(2.0, 0.3, 1.0);
        let inv = s.inverse().unwrap();
        let id = s.matrix() * inv.matrix();
        assert!((id - Matrix2::identity()).norm() < 1e-14);
        assert!(Cov2::new(1.0, 1.0, 1.0).inverse().is_err());
    }

    #[test]
    fn cholesky_handles_zero_matrix() {
        let l = Cov2::new(0.0, 0.0, 0.0).cholesky_psd().unwrap();
        assert_eq!(l, Matrix2::zeros());
        let s = Cov2::new(4.0, 1.0, 3.0);
        let l = s.cholesky_psd().unwrap();
        assert!((l * l.transpose() - s.matrix()).norm() < 1e-14);
    }
}
