//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type RealMatrix = DMatrix<f64>;

/// Invertibility threshold: smallest / largest singular value.
pub const SINGULAR_RATIO: f64 = 1e-12;

pub fn singular_ratio(m: &RealMatrix) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    if max == 0.0 || !max.is_finite() {
        return 0.0;
    }
    sv.min() / max
}

pub fn check_invertible(m: &RealMatrix) -> Result<()> {
    let ratio = singular_ratio(m);
    if ratio > SINGULAR_RATIO {
        Ok(())
    } else {
        Err(Error::Singular { ratio })
    }
}

/// Inverse via LU with one step of iterative refinement.
pub fn inverse(m: &RealMatrix) -> Result<RealMatrix> {
    if !m.is_square() {
        return Err(Error::invalid("inverse of a non-square matrix"));
    }
    check_invertible(m)?;
    let n = m.nrows();
    let mut x = m
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::Singular { ratio: 0.0 })?;
    let r = RealMatrix::identity(n, n) - m * &x;
    x += &x * r;
    Ok(x)
}

pub fn mat_vec(m: &RealMatrix, x: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum())
        .collect()
}

pub fn elementary(n: usize, i: usize, j: usize) -> RealMatrix {
    let mut e = RealMatrix::zeros(n, n);
    e[(i, j)] = 1.0;
    e
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn max_abs(m: &RealMatrix) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<RealMatrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::invalid("ragged matrix rows"));
    }
    Ok(RealMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn to_rows(m: &RealMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Affine solution set of a linear least-squares problem.
#[derive(Debug, Clone)]
pub struct AffineSolution {
    /// Minimum-norm least-squares solution.
    pub particular: DVector<f64>,
    /// Orthonormal basis of the numerical kernel.
    pub kernel: Vec<DVector<f64>>,
    /// `|L x - rhs|` at the particular solution.
    pub residual: f64,
}

/// Minimum-norm least-squares solve through the SVD. Singular values at or
/// below `cutoff * sigma_max` count as zero.
pub fn solve_min_norm(l: &DMatrix<f64>, rhs: &DVector<f64>, cutoff: f64) -> AffineSolution {
    let cols = l.ncols();
    // Pad with zero rows so the SVD returns a full right singular basis.
    let rows = l.nrows().max(cols);
    let mut a = DMatrix::zeros(rows, cols);
    a.view_mut((0, 0), (l.nrows(), cols)).copy_from(l);
    let mut b = DVector::zeros(rows);
    b.rows_mut(0, rhs.len()).copy_from(rhs);

    let svd = a.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values.max();
    let cut = cutoff * smax;

    let mut x = DVector::zeros(cols);
    let mut kernel = Vec::new();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let v = v_t.row(k).transpose();
        if smax > 0.0 && s > cut {
            let coef = u.column(k).dot(&b) / s;
            x += v * coef;
        } else {
            kernel.push(v);
        }
    }
    let residual = (l * &x - rhs).norm();
    AffineSolution {
        particular: x,
        kernel,
        residual,
    }
}
