//! Small dense matrices (dimension ≤ 16): inversion and the symmetric-definite
//! generalized eigenproblem.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};
use thiserror::Error;

pub const MAX_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("matrix dimension {0} outside 1..={MAX_DIM}")]
    Dimension(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    Mismatch(usize, usize),
    #[error("matrix is singular (pivot {pivot:e} at column {column})")]
    Singular { column: usize, pivot: f64 },
    #[error("matrix is not symmetric positive definite (column {0})")]
    NotSpd(usize),
    #[error("non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),
}

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SmallMatrix {
    pub fn zeros(dim: usize) -> Result<Self, MatrixError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(MatrixError::Dimension(dim));
        }
        Ok(Self { dim, data: vec![0.0; dim * dim] })
    }

    pub fn identity(dim: usize) -> Result<Self, MatrixError> {
        let mut m = Self::zeros(dim)?;
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, MatrixError> {
        let mut m = Self::zeros(rows.len())?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m.dim {
                return Err(MatrixError::Mismatch(row.len(), m.dim));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(MatrixError::NonFinite(i, j));
                }
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut t = self.clone();
        for i in 0..self.dim {
            for j in 0..self.dim {
                t[(i, j)] = self[(j, i)];
            }
        }
        t
    }

    pub fn mul(&self, rhs: &Self) -> Result<Self, MatrixError> {
        if self.dim != rhs.dim {
            return Err(MatrixError::Mismatch(self.dim, rhs.dim));
        }
        let n = self.dim;
        let mut out = Self { dim: n, data: vec![0.0; n * n] };
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// The matrix with its first row and column removed.
    pub fn without_first(&self) -> Result<Self, MatrixError> {
        let mut out = Self::zeros(self.dim - 1)?;
        for i in 1..self.dim {
            for j in 1..self.dim {
                out[(i - 1, j - 1)] = self[(i, j)];
            }
        }
        Ok(out)
    }

    fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// max_i Σ_j |a_ij|
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for SmallMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for SmallMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

/// Inverse by Gauss–Jordan elimination with partial pivoting.
///
/// A pivot smaller than `pivot_tol` times the largest entry is singular.
pub fn invert(m: &SmallMatrix, pivot_tol: f64) -> Result<SmallMatrix, MatrixError> {
    let n = m.dim;
    let scale = m.max_abs();
    if scale == 0.0 {
        return Err(MatrixError::Singular { column: 0, pivot: 0.0 });
    }
    let mut a = m.clone();
    let mut inv = SmallMatrix::identity(n)?;
    for col in 0..n {
        let (piv_row, piv_val) = (col..n)
            .map(|r| (r, a[(r, col)]))
            .fold((col, 0.0f64), |best, (r, v)| if v.abs() > best.1.abs() { (r, v) } else { best });
        if piv_val.abs() <= pivot_tol * scale {
            return Err(MatrixError::Singular { column: col, pivot: piv_val });
        }
        if piv_row != col {
            for j in 0..n {
                a.data.swap(col * n + j, piv_row * n + j);
                inv.data.swap(col * n + j, piv_row * n + j);
            }
        }
        let p = a[(col, col)];
        for j in 0..n {
            a[(col, j)] /= p;
            inv[(col, j)] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a[(r, col)];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                a[(r, j)] -= factor * a[(col, j)];
                inv[(r, j)] -= factor * inv[(col, j)];
            }
        }
    }
    Ok(inv)
}

/// Lower-triangular Cholesky factor L with L Lᵀ = m.
pub fn cholesky(m: &SmallMatrix, pivot_tol: f64) -> Result<SmallMatrix, MatrixError> {
    let n = m.dim;
    let scale = m.max_abs();
    let mut l = SmallMatrix::zeros(n)?;
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > pivot_tol * scale) {
            return Err(MatrixError::NotSpd(j));
        }
        let d = libm::sqrt(diag);
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves L X = B for lower-triangular L, column by column.
fn forward_solve(l: &SmallMatrix, b: &SmallMatrix) -> SmallMatrix {
    let n = l.dim;
    let mut x = b.clone();
    for col in 0..n {
        for i in 0..n {
            let mut s = b[(i, col)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = s / l[(i, i)];
        }
    }
    x
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(m: &SmallMatrix) -> Vec<f64> {
    let n = m.dim;
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let diag: f64 = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    eig
}

/// Eigenvalues of H⁻¹G for symmetric G and symmetric positive definite H.
///
/// Whitens with the Cholesky factor of H (C = L⁻¹ G L⁻ᵀ) and diagonalizes the
/// symmetric C with Jacobi rotations. Returned in ascending order.
pub fn gen_eigen_spd(g: &SmallMatrix, h: &SmallMatrix, pivot_tol: f64) -> Result<Vec<f64>, MatrixError> {
    if g.dim != h.dim {
        return Err(MatrixError::Mismatch(g.dim, h.dim));
    }
    let l = cholesky(h, pivot_tol)?;
    let y = forward_solve(&l, g); // L⁻¹ G
    let c = forward_solve(&l, &y.transpose()); // L⁻¹ (L⁻¹ G)ᵀ = L⁻¹ G L⁻ᵀ
    let mut sym = c.clone();
    for i in 0..c.dim {
        for j in 0..c.dim {
            sym[(i, j)] = 0.5 * (c[(i, j)] + c[(j, i)]);
        }
    }
    Ok(symmetric_eigenvalues(&sym))
}
