//! Dense symmetric matrices stored as one packed triangle, plus a small
//! general matrix type for orthogonal frames.
//!
//! Scaled coordinates: a symmetric `n x n` matrix is identified with the
//! vector `(W11, sqrt(2) W12, W22, sqrt(2) W13, sqrt(2) W23, W33, ...)` of
//! length `n(n+1)/2`, so that the trace inner product of matrices equals the
//! dot product of their coordinate vectors.

use crate::error::{Error, Result};

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Dimension of the symmetric matrices of order `n` (packed length).
pub fn sym_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of the entry `(i, j)`, `i <= j`, in packed column-major order.
fn tri_index(i: usize, j: usize) -> usize {
    debug_assert!(i <= j);
    j * (j + 1) / 2 + i
}

/// Symmetric matrix of order `n`. Only the upper triangle is stored, so the
/// symmetry defect is zero by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    tri: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix { n, tri: vec![0.0; sym_dim(n)] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn diag(vals: &[f64]) -> Self {
        let mut m = Self::zeros(vals.len());
        for (i, &v) in vals.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for j in 0..n {
            for i in 0..=j {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds from a dense row-major square array, rejecting asymmetry beyond
    /// a small relative tolerance and averaging what remains.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has length {} in a matrix of order {n}",
                    r.len()
                )));
            }
        }
        let scale = rows
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |a, &b| a.max(b.abs()));
        let mut m = Self::zeros(n);
        for j in 0..n {
            for i in 0..=j {
                let defect = (rows[i][j] - rows[j][i]).abs();
                if defect > 1e-9 * (1.0 + scale) {
                    return Err(Error::DimensionMismatch(format!(
                        "entries ({i},{j}) and ({j},{i}) differ by {defect:.3e}"
                    )));
                }
                m.set(i, j, 0.5 * (rows[i][j] + rows[j][i]));
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.tri[tri_index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.tri[tri_index(i, j)] = v;
    }

    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.tri[tri_index(i, j)] += v;
    }

    /// Scaled coordinate vector; the map is a linear isometry for the trace
    /// inner product.
    pub fn to_svec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(sym_dim(self.n));
        for j in 0..self.n {
            for i in 0..=j {
                let x = self.tri[tri_index(i, j)];
                v.push(if i == j { x } else { SQRT2 * x });
            }
        }
        v
    }

    pub fn from_svec(v: &[f64]) -> Result<Self> {
        let n = order_of_sym_dim(v.len())?;
        let mut m = Self::zeros(n);
        let mut k = 0;
        for j in 0..n {
            for i in 0..=j {
                m.set(i, j, if i == j { v[k] } else { v[k] / SQRT2 });
                k += 1;
            }
        }
        Ok(m)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn scale(&self, t: f64) -> Self {
        SymMatrix { n: self.n, tri: self.tri.iter().map(|x| x * t).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        SymMatrix {
            n: self.n,
            tri: self.tri.iter().zip(&other.tri).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        SymMatrix {
            n: self.n,
            tri: self.tri.iter().zip(&other.tri).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn axpy(&mut self, t: f64, other: &Self) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.tri.iter_mut().zip(&other.tri) {
            *a += t * b;
        }
    }

    /// Trace inner product `<A, B> = trace(A B)`.
    pub fn inner(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.n, other.n);
        let mut acc = 0.0;
        for j in 0..self.n {
            for i in 0..=j {
                let w = if i == j { 1.0 } else { 2.0 };
                acc += w * self.tri[tri_index(i, j)] * other.tri[tri_index(i, j)];
            }
        }
        acc
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn norm_fro(&self) -> f64 {
        self.inner(self).max(0.0).sqrt()
    }

    pub fn norm_max(&self) -> f64 {
        self.tri.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// Quadratic form `x' M x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn to_mat(&self) -> Mat {
        Mat::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// `A B` as a general matrix (the product of symmetric matrices is not
    /// symmetric in general).
    pub fn mul_sym(&self, other: &Self) -> Mat {
        self.to_mat().mul(&other.to_mat())
    }

    /// Residual `max |AB - BA|`, used as the commutation test.
    pub fn commutator_norm(&self, other: &Self) -> f64 {
        let ab = self.mul_sym(other);
        let ba = other.mul_sym(self);
        ab.sub(&ba).norm_max()
    }
}

/// Recovers `n` from `n(n+1)/2`, rejecting lengths that are not of this form.
pub fn order_of_sym_dim(len: usize) -> Result<usize> {
    let mut n = 0usize;
    while sym_dim(n) < len {
        n += 1;
    }
    if sym_dim(n) != len {
        return Err(Error::DimensionMismatch(format!(
            "length {len} is not n(n+1)/2 for any n"
        )));
    }
    Ok(n)
}

/// Dense general matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Matrix with the listed columns of `self`, in the given order.
    pub fn select_cols(&self, idx: &[usize]) -> Mat {
        Mat::from_fn(self.rows, idx.len(), |i, k| self.get(i, idx[k]))
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        debug_assert_eq!(self.cols, other.rows);
        let mut m = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    m.data[i * m.cols + j] += a * other.get(k, j);
                }
            }
        }
        m
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn norm_max(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `max |P'P - I|`; zero for an orthogonal matrix.
    pub fn orthogonality_residual(&self) -> f64 {
        self.transpose().mul(self).sub(&Mat::identity(self.cols)).norm_max()
    }

    /// Congruence `P' M P`, symmetrised to kill roundoff asymmetry.
    pub fn congruence(&self, m: &SymMatrix) -> SymMatrix {
        debug_assert_eq!(self.rows, m.dim());
        let pm = self.transpose().mul(&m.to_mat()).mul(self);
        SymMatrix::from_fn(self.cols, |i, j| 0.5 * (pm.get(i, j) + pm.get(j, i)))
    }

    /// `P M P'` for symmetric `M` of order `cols`.
    pub fn congruence_rev(&self, m: &SymMatrix) -> SymMatrix {
        debug_assert_eq!(self.cols, m.dim());
        let pm = self.mul(&m.to_mat()).mul(&self.transpose());
        SymMatrix::from_fn(self.rows, |i, j| 0.5 * (pm.get(i, j) + pm.get(j, i)))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_round_trip_preserves_entries() {
        let m = SymMatrix::from_fn(4, |i, j| (i + 2 * j) as f64);
        let back = SymMatrix::from_svec(&m.to_svec()).unwrap();
        assert!(m.sub(&back).norm_max() < 1e-15);
    }

    #[test]
    fn svec_is_isometry_for_trace_inner_product() {
        let a = SymMatrix::from_fn(3, |i, j| ((i * 3 + j) as f64).sin());
        let b = SymMatrix::from_fn(3, |i, j| ((i + j) as f64).cos());
        let dot_vec = dot(&a.to_svec(), &b.to_svec());
        assert!((a.inner(&b) - dot_vec).abs() < 1e-12);
    }

    #[test]
    fn svec_order_matches_documented_layout() {
        let mut m = SymMatrix::zeros(3);
        m.set(0, 0, 1.0);
        m.set(0, 1, 2.0);
        m.set(1, 1, 3.0);
        m.set(0, 2, 4.0);
        m.set(1, 2, 5.0);
        m.set(2, 2, 6.0);
        let v = m.to_svec();
        let expect = [1.0, 2.0 * SQRT2, 3.0, 4.0 * SQRT2, 5.0 * SQRT2, 6.0];
        for (a, b) in v.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn from_rows_rejects_asymmetric_input() {
        let rows = vec![vec![1.0, 2.0], vec![2.5, 4.0]];
        assert!(SymMatrix::from_rows(&rows).is_err());
    }

    #[test]
    fn congruence_with_identity_is_identity_map() {
        let m = SymMatrix::from_fn(3, |i, j| (i * j) as f64 + 1.0);
        let p = Mat::identity(3);
        assert!(p.congruence(&m).sub(&m).norm_max() < 1e-15);
    }

    #[test]
    fn trace_inner_product_matches_direct_sum() {
        let a = SymMatrix::from_fn(3, |i, j| (i + j) as f64);
        let b = SymMatrix::from_fn(3, |i, j| (i as f64) - (j as f64) * 0.5);
        let direct: f64 = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j) * b.get(i, j))
            .sum();
        assert!((a.inner(&b) - direct).abs() < 1e-12);
    }
}
