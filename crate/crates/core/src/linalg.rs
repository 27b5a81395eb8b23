//! Small dense linear algebra: a row-major matrix, a pivoting solver and
//! least-squares R² via modified Gram-Schmidt.

use serde::{Deserialize, Serialize};

use crate::num::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    /// Builds a matrix from equally sized rows. `cols` is needed for the
    /// zero-row case.
    pub fn from_rows(rows: &[Vec<T>], cols: usize) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Selects rows by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: idx.len(), cols: self.cols, data }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(idx.iter().map(|&c| row[c]));
        }
        Self { rows: self.rows, cols: idx.len(), data }
    }

    /// Horizontal concatenation; row counts must agree.
    pub fn hstack(parts: &[&Matrix<T>]) -> Self {
        let rows = parts.first().map_or(0, |m| m.rows);
        assert!(parts.iter().all(|m| m.rows == rows), "hstack row mismatch");
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for m in parts {
                data.extend_from_slice(m.row(r));
            }
        }
        Self { rows, cols, data }
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Solves `a x = b` for square `a` by Gaussian elimination with partial
/// pivoting. Returns `None` when a pivot falls below `tol` times the largest
/// absolute entry.
pub fn solve<T: Real>(a: &Matrix<T>, b: &[T], tol: T) -> Option<Vec<T>> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "solve needs a square matrix");
    assert_eq!(n, b.len());
    let scale = a.as_slice().iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if n == 0 {
        return Some(Vec::new());
    }
    if scale == T::zero() {
        return None;
    }
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    for k in 0..n {
        let (piv, best) = (k..n)
            .map(|r| (r, m.get(r, k).abs()))
            .fold((k, T::neg_infinity()), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= tol * scale {
            return None;
        }
        if piv != k {
            for c in 0..n {
                let t = m.get(k, c);
                m.set(k, c, m.get(piv, c));
                m.set(piv, c, t);
            }
            rhs.swap(k, piv);
        }
        let p = m.get(k, k);
        for r in (k + 1)..n {
            let f = m.get(r, k) / p;
            if f == T::zero() {
                continue;
            }
            for c in k..n {
                let v = m.get(r, c) - f * m.get(k, c);
                m.set(r, c, v);
            }
            rhs[r] = rhs[r] - f * rhs[k];
        }
    }
    let mut x = vec![T::zero(); n];
    for k in (0..n).rev() {
        let mut s = rhs[k];
        for c in (k + 1)..n {
            s = s - m.get(k, c) * x[c];
        }
        x[k] = s / m.get(k, k);
    }
    Some(x)
}

/// Coefficient of determination of `y` regressed on `regressors` plus an
/// intercept. Regressors that are linearly dependent on earlier ones are
/// dropped (relative tolerance 1e-10), so the fit is defined for any design.
/// Returns 0 for a constant `y`.
pub fn r_squared<T: Real>(y: &[T], regressors: &[Vec<T>]) -> T {
    let n = y.len();
    let center = |v: &[T]| -> Vec<T> {
        let mean = v.iter().copied().sum::<T>() / T::from_usize(n.max(1)).unwrap();
        v.iter().map(|&x| x - mean).collect()
    };
    let yc = center(y);
    let sst = dot(&yc, &yc);
    if sst == T::zero() {
        return T::zero();
    }
    let tol = T::of(1e-10);
    let mut basis: Vec<Vec<T>> = Vec::new();
    for x in regressors {
        let mut v = center(x);
        let norm0 = dot(&v, &v).sqrt();
        if norm0 == T::zero() {
            continue;
        }
        // two passes of modified Gram-Schmidt keep the basis orthogonal
        for _ in 0..2 {
            for q in &basis {
                let p = dot(&v, q);
                for (vi, &qi) in v.iter_mut().zip(q) {
                    *vi = *vi - p * qi;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm <= tol * norm0 {
            continue;
        }
        v.iter_mut().for_each(|vi| *vi = *vi / norm);
        basis.push(v);
    }
    let explained: T = basis.iter().map(|q| {
        let p = dot(&yc, q);
        p * p
    }).sum();
    (explained / sst).min(T::one()).max(T::zero())
}
