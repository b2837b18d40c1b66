//! Envelope (skyline) Cholesky factorization for sparse SPD systems.
//!
//! Row `i` of the factor stores columns `first[i]..=i`. Fill-in of a Cholesky
//! factorization never leaves the envelope of the original matrix, so a
//! row-major lattice ordering costs O(N w^2) time and O(N w) memory for
//! bandwidth `w`. Identified vertices are ordered last, which keeps their
//! dense rows at the bottom where they do not widen anything else.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct EnvelopeCholesky {
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors the symmetric matrix whose lower triangle is given row by row
    /// as `(column, value)` pairs with `column <= row`. Entries may repeat and
    /// are summed.
    pub fn factor(rows: &[Vec<(usize, f64)>]) -> Result<Self> {
        let n = rows.len();
        let mut first = Vec::with_capacity(n);
        for (i, row) in rows.iter().enumerate() {
            let f = row.iter().map(|&(j, _)| j).min().unwrap_or(i);
            if f > i || row.iter().any(|&(j, _)| j > i) {
                return Err(Error::NumericalFailure(format!(
                    "row {i} has entries above the diagonal"
                )));
            }
            first.push(f);
        }
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; start[n]];
        for (i, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                data[start[i] + j - first[i]] += v;
            }
        }

        for i in 0..n {
            let fi = first[i];
            let row_i = start[i];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let (head, tail) = data.split_at_mut(row_i);
                let lj = &head[start[j]..start[j + 1]];
                let li = &mut tail[..i - fi + 1];
                let dot: f64 = li[lo - fi..j - fi]
                    .iter()
                    .zip(&lj[lo - fj..j - fj])
                    .map(|(a, b)| a * b)
                    .sum();
                let diag = lj[j - fj];
                li[j - fi] = (li[j - fi] - dot) / diag;
            }
            let li = &mut data[row_i..start[i + 1]];
            let (off, diag) = li.split_at_mut(i - fi);
            let s = diag[0] - off.iter().map(|a| a * a).sum::<f64>();
            if !(s > 0.0) {
                return Err(Error::NumericalFailure(format!(
                    "non-positive pivot {s:e} at row {i}"
                )));
            }
            diag[0] = s.sqrt();
        }
        Ok(EnvelopeCholesky { first, start, data })
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    /// Stored entries of the factor.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[self.start[i]..self.start[i + 1]]
    }

    /// In place `L y = b`.
    pub fn forward(&self, b: &mut [f64]) {
        for i in 0..self.dim() {
            let fi = self.first[i];
            let row = self.row(i);
            let dot: f64 = row[..i - fi].iter().zip(&b[fi..i]).map(|(a, x)| a * x).sum();
            b[i] = (b[i] - dot) / row[i - fi];
        }
    }

    /// In place `L^T x = y`.
    pub fn backward(&self, y: &mut [f64]) {
        for i in (0..self.dim()).rev() {
            let fi = self.first[i];
            let row = self.row(i);
            let xi = y[i] / row[i - fi];
            y[i] = xi;
            for (t, a) in y[fi..i].iter_mut().zip(&row[..i - fi]) {
                *t -= a * xi;
            }
        }
    }

    /// In place `A x = b`.
    pub fn solve(&self, b: &mut [f64]) {
        self.forward(b);
        self.backward(b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lower_rows(dense: &[Vec<f64>]) -> Vec<Vec<(usize, f64)>> {
        dense
            .iter()
            .enumerate()
            .map(|(i, r)| {
                (0..=i)
                    .filter(|&j| r[j] != 0.0 || j == i)
                    .map(|j| (j, r[j]))
                    .collect()
            })
            .collect()
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|r| r.iter().zip(x).map(|(u, v)| u * v).sum())
            .collect()
    }

    #[test]
    fn solves_path_laplacian_with_ground() {
        // Dirichlet Laplacian of a path: tridiagonal 2, -1.
        let n = 30;
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 2.0;
            if i > 0 {
                a[i][i - 1] = -1.0;
                a[i - 1][i] = -1.0;
            }
        }
        let f = EnvelopeCholesky::factor(&lower_rows(&a)).unwrap();
        assert_eq!(f.envelope_size(), 2 * n - 1);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = b.clone();
        f.solve(&mut x);
        for (u, v) in matvec(&a, &x).iter().zip(&b) {
            assert!((u - v).abs() < 1e-11);
        }
    }

    #[test]
    fn irregular_envelope_with_dense_last_row() {
        let n = 12;
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 10.0 + i as f64;
            if i >= 3 {
                a[i][i - 3] = -1.0;
                a[i - 3][i] = -1.0;
            }
        }
        for j in 0..n - 1 {
            a[n - 1][j] = -0.5;
            a[j][n - 1] = -0.5;
        }
        let f = EnvelopeCholesky::factor(&lower_rows(&a)).unwrap();
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let mut x = b.clone();
        f.solve(&mut x);
        for (u, v) in matvec(&a, &x).iter().zip(&b) {
            assert!((u - v).abs() < 1e-11);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        // Neumann Laplacian of two nodes is singular.
        let rows = vec![vec![(0, 1.0)], vec![(0, -1.0), (1, 1.0)]];
        assert!(matches!(
            EnvelopeCholesky::factor(&rows),
            Err(Error::NumericalFailure(_))
        ));
    }
}
