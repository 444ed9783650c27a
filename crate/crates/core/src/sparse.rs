//! Compressed-row complex matrix with a fixed, value-independent pattern.

use faer::sparse::{SparseColMat, Triplet};
use num_complex::Complex64;
use std::io::Write;

use crate::error::{Error, Result};
use crate::special::ZERO;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<Complex64>,
}

impl CsrMatrix {
    /// Build from per-row entries; duplicate columns are summed and
    /// explicit zeros are kept so the pattern does not depend on values.
    pub fn from_rows(rows: Vec<Vec<(usize, Complex64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let col = row[k].0;
                let mut v = ZERO;
                while k < row.len() && row[k].0 == col {
                    v += row[k].1;
                    k += 1;
                }
                col_idx.push(col);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(a: &[Vec<Complex64>]) -> Self {
        CsrMatrix::from_rows(
            a.iter()
                .map(|r| r.iter().copied().enumerate().collect())
                .collect(),
        )
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b]
            .iter()
            .copied()
            .zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.row(i).find(|e| e.0 == j).map_or(ZERO, |e| e.1)
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut rows = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                rows[j].push((i, v));
            }
        }
        CsrMatrix::from_rows(rows)
    }

    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.n == other.n && self.row_ptr == other.row_ptr && self.col_idx == other.col_idx
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let mut a = vec![vec![ZERO; self.n]; self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                a[i][j] += v;
            }
        }
        a
    }

    pub fn frobenius(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `A - shift I` in faer's compressed-column layout.
    pub fn to_faer_shifted(&self, shift: Complex64) -> Result<SparseColMat<usize, Complex64>> {
        let mut trip = Vec::with_capacity(self.nnz() + self.n);
        for i in 0..self.n {
            let mut has_diag = false;
            for (j, v) in self.row(i) {
                if i == j {
                    has_diag = true;
                    trip.push(Triplet::new(i, j, v - shift));
                } else {
                    trip.push(Triplet::new(i, j, v));
                }
            }
            if !has_diag {
                trip.push(Triplet::new(i, i, -shift));
            }
        }
        SparseColMat::try_new_from_triplets(self.n, self.n, &trip)
            .map_err(|e| Error::InvalidInput(format!("sparse matrix construction failed: {e:?}")))
    }

    /// Matrix Market coordinate dump, complex general, 1-based.
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate complex general")?;
        writeln!(out, "{} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                writeln!(out, "{} {} {:e} {:e}", i + 1, j + 1, v.re, v.im)?;
            }
        }
        Ok(())
    }
}
