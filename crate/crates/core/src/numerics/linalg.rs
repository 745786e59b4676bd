use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CONDITION_CAP: f64 = 1e8;
const PIVOT_RELATIVE_FLOOR: f64 = 1e-14;

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be >= 1");
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Domain("matrix must be square and non-empty".into()));
        }
        let data: Vec<Complex64> = rows.into_iter().flatten().collect();
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("matrix entries must be finite".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<Complex64>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn norm_sqr(&self, i: usize, j: usize) -> f64 {
        self[(i, j)].norm_sqr()
    }

    pub fn mul(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = ComplexMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs[(k, j)];
                }
            }
        }
        out
    }

    /// Max-row-sum norm (induced infinity norm).
    pub fn inf_norm(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `‖self·other − I‖_∞`.
    pub fn identity_residual(&self, other: &ComplexMatrix) -> f64 {
        let mut p = self.mul(other);
        for i in 0..self.dim {
            p[(i, i)] -= Complex64::new(1.0, 0.0);
        }
        p.inf_norm()
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

pub fn invert_complex_matrix(h: &ComplexMatrix) -> Result<ComplexMatrix> {
    invert_complex_matrix_capped(h, DEFAULT_CONDITION_CAP)
}

/// Gauss–Jordan elimination with partial pivoting.
///
/// Rejects the matrix when a pivot falls below `1e-14` of its original row
/// scale, or when the infinity-norm condition estimate exceeds `condition_cap`.
pub fn invert_complex_matrix_capped(h: &ComplexMatrix, condition_cap: f64) -> Result<ComplexMatrix> {
    let n = h.dim;
    if h.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Domain("matrix entries must be finite".into()));
    }
    let row_scale: Vec<f64> = (0..n).map(|i| h.row(i).iter().map(|z| z.norm()).fold(0.0, f64::max)).collect();
    if let Some(i) = row_scale.iter().position(|&s| s == 0.0) {
        return Err(Error::SingularMatrix(format!("row {i} is zero")));
    }

    let mut a = h.clone();
    let mut inv = ComplexMatrix::identity(n);
    // scale of the row currently sitting at each position, tracked through swaps
    let mut scale = row_scale;

    for col in 0..n {
        let (pivot_row, pivot_mag) =
            (col..n)
                .map(|r| (r, a[(r, col)].norm() / scale[r]))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_mag < PIVOT_RELATIVE_FLOOR {
            return Err(Error::SingularMatrix(format!(
                "pivot {pivot_mag:e} relative to row scale in column {col}"
            )));
        }
        if pivot_row != col {
            for j in 0..n {
                a.data.swap(col * n + j, pivot_row * n + j);
                inv.data.swap(col * n + j, pivot_row * n + j);
            }
            scale.swap(col, pivot_row);
        }
        let p_inv = a[(col, col)].inv();
        for j in 0..n {
            a.data[col * n + j] *= p_inv;
            inv.data[col * n + j] *= p_inv;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a[(r, col)];
            if factor == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                let av = a.data[col * n + j];
                let iv = inv.data[col * n + j];
                a.data[r * n + j] -= factor * av;
                inv.data[r * n + j] -= factor * iv;
            }
        }
    }

    let cond = h.inf_norm() * inv.inf_norm();
    if !cond.is_finite() || cond > condition_cap {
        return Err(Error::SingularMatrix(format!(
            "condition estimate {cond:e} exceeds cap {condition_cap:e}"
        )));
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_inverts_to_identity() {
        let i3 = ComplexMatrix::identity(3);
        assert_eq!(invert_complex_matrix(&i3).unwrap(), i3);
    }

    #[test]
    fn diagonal_inverse() {
        let d = ComplexMatrix::from_diagonal(&[c(2.0, 0.0), c(4.0, 0.0)]);
        let s = invert_complex_matrix(&d).unwrap();
        assert_eq!(s[(0, 0)], c(0.5, 0.0));
        assert_eq!(s[(1, 1)], c(0.25, 0.0));
        assert_eq!(s[(0, 1)], c(0.0, 0.0));
        assert_eq!(s[(1, 0)], c(0.0, 0.0));
    }

    #[test]
    fn needs_pivoting() {
        let m = ComplexMatrix::from_rows(vec![vec![c(0.0, 0.0), c(1.0, 1.0)], vec![c(2.0, -1.0), c(0.5, 0.0)]]).unwrap();
        let s = invert_complex_matrix(&m).unwrap();
        assert!(s.identity_residual(&m) < 1e-14);
    }

    #[test]
    fn singular_rejected() {
        let m = ComplexMatrix::from_rows(vec![vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(2.0, 0.0), c(4.0, 0.0)]]).unwrap();
        assert!(matches!(invert_complex_matrix(&m), Err(Error::SingularMatrix(_))));
        let z = ComplexMatrix::zeros(2);
        assert!(matches!(invert_complex_matrix(&z), Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn ill_conditioned_rejected_by_cap() {
        let m = ComplexMatrix::from_rows(vec![vec![c(1.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(1.0 + 1e-10, 0.0)]]).unwrap();
        assert!(invert_complex_matrix(&m).is_err());
    }

    #[test]
    fn rejects_non_square_and_nan() {
        assert!(ComplexMatrix::from_rows(vec![vec![c(1.0, 0.0)], vec![]]).is_err());
        assert!(ComplexMatrix::from_rows(vec![vec![c(f64::NAN, 0.0)]]).is_err());
    }
}
