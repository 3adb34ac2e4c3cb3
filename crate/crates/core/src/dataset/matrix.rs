use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Row-major `T x D` block of `f32` activations: one row per token, one
/// column per neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl ActivationMatrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(ActivationMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ActivationMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Ok(ActivationMatrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    /// Narrows an `f64` matrix to `f32`.
    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(m[(r, c)] as f32);
            }
        }
        ActivationMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col) as f64).collect()
    }

    /// Column-major `f64` copy for the linear-algebra routines.
    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c) as f64)
    }

    pub fn select_columns(&self, cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, cols.len(), |r, c| self.get(r, cols[c]) as f64)
    }

    /// Columns whose entries are all bitwise-equal.
    pub fn constant_columns(&self) -> Vec<usize> {
        if self.rows == 0 {
            return (0..self.cols).collect();
        }
        (0..self.cols)
            .filter(|&c| {
                let first = self.get(0, c);
                (1..self.rows).all(|r| self.get(r, c) == first)
            })
            .collect()
    }

    pub(crate) fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|i| (i / self.cols, i % self.cols))
    }

    /// Number of entries that differ bitwise between two equally shaped matrices.
    pub fn count_differences(&self, other: &ActivationMatrix) -> Result<usize> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| a.to_bits() != b.to_bits())
            .count())
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn write_f32(&self, path: &Path) -> Result<()> {
        super::write_file(path, &self.to_le_bytes())
    }

    /// Reads a raw little-endian payload whose shape is known from the
    /// manifest. The file length must match exactly and every value must be
    /// finite.
    pub fn read_f32(path: &Path, rows: usize, cols: usize, model: &str) -> Result<Self> {
        let expected = (rows * cols * 4) as u64;
        let actual = fs::metadata(path).map_err(|e| Error::io(path, e))?.len();
        if actual != expected {
            return Err(Error::ShapeMismatch {
                model: model.to_owned(),
                rows,
                cols,
                expected,
                actual,
            });
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let m = ActivationMatrix { rows, cols, data };
        if let Some((row, col)) = m.first_non_finite() {
            return Err(Error::NonFinite {
                model: model.to_owned(),
                row,
                col,
            });
        }
        Ok(m)
    }
}
