use nalgebra::DMatrix;
use rayon::prelude::*;

/// Rows per partial sum in transposed products. Fixed so the reduction
/// order, and therefore the result, does not depend on the thread count.
const CHUNK_ROWS: usize = 256;

/// Row-major dense Jacobian.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseJacobian {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseJacobian {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let mut j = Self::zeros(m.nrows(), m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                j.data[r * m.ncols() + c] = m[(r, c)];
            }
        }
        j
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    /// `J·x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        if self.cols == 0 {
            return vec![0.0; self.rows];
        }
        self.data
            .par_chunks(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `Jᵀ·y` with a fixed-order chunked reduction.
    pub fn tmatvec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        self.reduce_rows(|r, row, acc| {
            let w = y[r];
            if w != 0.0 {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += w * v;
                }
            }
        })
    }

    /// Squared column norms, the diagonal of `JᵀJ`.
    pub fn column_sq_norms(&self) -> Vec<f64> {
        self.reduce_rows(|_, row, acc| {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v * v;
            }
        })
    }

    fn reduce_rows(&self, f: impl Fn(usize, &[f64], &mut [f64]) + Sync) -> Vec<f64> {
        let cols = self.cols;
        if cols == 0 {
            return Vec::new();
        }
        let partials: Vec<Vec<f64>> = self
            .data
            .par_chunks(CHUNK_ROWS * cols)
            .enumerate()
            .map(|(chunk, block)| {
                let mut acc = vec![0.0; cols];
                for (k, row) in block.chunks(cols).enumerate() {
                    f(chunk * CHUNK_ROWS + k, row, &mut acc);
                }
                acc
            })
            .collect();
        let mut out = vec![0.0; cols];
        for p in partials {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        out
    }
}
