//! Dense row-major feature matrices.
//!
//! `FeatureMatrix` backs node features, relation embeddings and every
//! propagation hop. Values are stored as `f32`; all construction paths
//! reject NaN/Inf so downstream kernels can assume finite inputs.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        FeatureMatrix {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    /// Builds a matrix from raw row-major data, checking shape and finiteness.
    pub fn from_data(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} x {} matrix",
                data.len(),
                rows,
                dim
            )));
        }
        let m = FeatureMatrix { rows, dim, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_data(rows.len(), dim, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn check_finite(&self) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: i / self.dim.max(1),
                    col: i % self.dim.max(1),
                });
            }
        }
        Ok(())
    }
}

/// Relation (edge-type) embedding table: one row per edge type.
///
/// The row dimension must equal the node feature dimension, which the
/// propagation kernel's elementwise message modulation relies on.
#[derive(Debug, Clone)]
pub struct RelationEmbeddingTable {
    inner: FeatureMatrix,
}

impl RelationEmbeddingTable {
    pub fn new(m: FeatureMatrix, edge_type_count: u32) -> Result<Self> {
        if m.rows() != edge_type_count as usize {
            return Err(Error::ShapeMismatch(format!(
                "relation table has {} rows, expected {} (one per edge type)",
                m.rows(),
                edge_type_count
            )));
        }
        Ok(RelationEmbeddingTable { inner: m })
    }

    pub fn type_count(&self) -> u32 {
        self.inner.rows() as u32
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn row(&self, type_id: u32) -> &[f32] {
        self.inner.row(type_id as usize)
    }

    pub fn as_matrix(&self) -> &FeatureMatrix {
        &self.inner
    }
}
