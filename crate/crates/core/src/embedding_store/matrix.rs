use ndarray::Array2;

use crate::error::{CrofError, Result};

/// Tolerance on the row L2 norm for matrices flagged as normalized.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// Row-major matrix of embedding vectors stored as `f32`, the on-disk width.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dims: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingMatrix {
    /// Validates shape, finiteness and (when flagged) unit row norms.
    pub fn new(rows: usize, dims: usize, data: Vec<f32>, normalized: bool) -> Result<Self> {
        if rows < 1 {
            return Err(CrofError::Shape("embedding matrix needs at least one row".into()));
        }
        if dims < 2 {
            return Err(CrofError::Shape(format!(
                "embedding matrix needs at least two dims, got {dims}"
            )));
        }
        if data.len() != rows * dims {
            return Err(CrofError::Length(format!(
                "expected {rows}x{dims}={} values, got {}",
                rows * dims,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(CrofError::Value(format!(
                "non-finite value at row {}, col {}",
                pos / dims,
                pos % dims
            )));
        }
        let m = Self {
            rows,
            dims,
            data,
            normalized,
        };
        if normalized {
            m.check_unit_rows()?;
        }
        Ok(m)
    }

    /// Builds from `f64` rows, rounding to `f32`.
    pub fn from_rows(rows: &[Vec<f64>], normalized: bool) -> Result<Self> {
        let dims = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dims) {
            return Err(CrofError::Shape("ragged rows".into()));
        }
        let data = rows.iter().flatten().map(|&v| v as f32).collect();
        Self::new(rows.len(), dims, data, normalized)
    }

    pub fn from_array(a: &Array2<f64>, normalized: bool) -> Result<Self> {
        let (rows, dims) = a.dim();
        let data = a.iter().map(|&v| v as f32).collect();
        Self::new(rows, dims, data, normalized)
    }

    /// L2-normalizes every row in `f64` and sets the normalized flag.
    pub fn normalized_rows(a: &Array2<f64>) -> Result<Self> {
        let mut out = a.clone();
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if norm < 1e-12 {
                return Err(CrofError::Value(format!("row {i} has zero norm")));
            }
            row.mapv_inplace(|v| v / norm);
        }
        Self::from_array(&out, true)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.rows, self.dims), |(i, j)| {
            self.data[i * self.dims + j] as f64
        })
    }

    /// Copies the selected rows, keeping the normalized flag.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(idx.len() * self.dims);
        for &i in idx {
            if i >= self.rows {
                return Err(CrofError::Index(format!("row {i} out of {}", self.rows)));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(idx.len(), self.dims, data, self.normalized)
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.row(i)
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    fn check_unit_rows(&self) -> Result<()> {
        for i in 0..self.rows {
            let n = self.row_norm(i);
            if (n - 1.0).abs() > UNIT_NORM_TOL {
                return Err(CrofError::Value(format!(
                    "row {i} flagged normalized but has norm {n}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(matches!(
            EmbeddingMatrix::new(0, 3, vec![], false),
            Err(CrofError::Shape(_))
        ));
        assert!(matches!(
            EmbeddingMatrix::new(1, 1, vec![1.0], false),
            Err(CrofError::Shape(_))
        ));
        assert!(matches!(
            EmbeddingMatrix::new(1, 2, vec![1.0], false),
            Err(CrofError::Length(_))
        ));
        assert!(matches!(
            EmbeddingMatrix::new(1, 2, vec![1.0, f32::NAN], false),
            Err(CrofError::Value(_))
        ));
        assert!(matches!(
            EmbeddingMatrix::new(1, 2, vec![1.0, 1.0], true),
            Err(CrofError::Value(_))
        ));
    }

    #[test]
    fn normalizes_rows() {
        let a = ndarray::array![[3.0, 4.0], [0.0, -2.0]];
        let m = EmbeddingMatrix::normalized_rows(&a).unwrap();
        assert!(m.is_normalized());
        assert_eq!(m.row(0), &[0.6, 0.8]);
        assert_eq!(m.row(1), &[0.0, -1.0]);
    }
}
