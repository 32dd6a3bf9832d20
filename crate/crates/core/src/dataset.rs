//! Tabular data with designated protected columns and binary labels.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Row-major feature matrix with named columns, protected column indices
/// and one binary label per row.
///
/// The protected columns form `Z`; every other column is part of `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    values: Vec<f64>,
    labels: Vec<u8>,
    protected: Vec<usize>,
}

impl Dataset {
    pub fn new(
        names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<u8>,
        protected: Vec<usize>,
    ) -> Result<Self> {
        let dim = names.len();
        let mut values = Vec::with_capacity(rows.len() * dim);
        for row in &rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(names, values, labels, protected)
    }

    pub fn from_flat(
        names: Vec<String>,
        values: Vec<f64>,
        labels: Vec<u8>,
        mut protected: Vec<usize>,
    ) -> Result<Self> {
        let dim = names.len();
        if dim == 0 {
            return Err(Error::invalid("dataset needs at least one column"));
        }
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if values.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * dim,
                got: values.len(),
            });
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name `{name}`")));
            }
        }
        if let Some(row) = labels.iter().position(|&y| y > 1) {
            return Err(Error::invalid(format!("label at row {row} is not 0/1")));
        }
        protected.sort_unstable();
        protected.dedup();
        if let Some(&bad) = protected.iter().find(|&&j| j >= dim) {
            return Err(Error::invalid(format!("protected column {bad} out of range")));
        }
        if protected.len() == dim {
            return Err(Error::invalid("every column is protected; X would be empty"));
        }
        Ok(Self {
            names,
            values,
            labels,
            protected,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.n_cols())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Indices of `Z`.
    pub fn protected(&self) -> &[usize] {
        &self.protected
    }

    /// Indices of `X`, in column order.
    pub fn unprotected(&self) -> Vec<usize> {
        (0..self.n_cols())
            .filter(|j| self.protected.binary_search(j).is_err())
            .collect()
    }

    pub fn is_protected(&self, j: usize) -> bool {
        self.protected.binary_search(&j).is_ok()
    }

    /// The protected part of row `i`.
    pub fn protected_values(&self, i: usize) -> Vec<f64> {
        let row = self.row(i);
        self.protected.iter().map(|&j| row[j]).collect()
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.n_cols());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n_rows() {
                return Err(Error::invalid(format!("row {i} out of range")));
            }
            values.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::from_flat(self.names.clone(), values, labels, self.protected.clone())
    }

    /// Fails on the first NaN or infinite cell.
    pub fn check_finite(&self) -> Result<()> {
        let d = self.n_cols();
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(Error::NonFinite {
                row: k / d,
                column: k % d,
            }),
            None => Ok(()),
        }
    }

    pub fn label_mean(&self) -> f64 {
        self.labels.iter().map(|&y| f64::from(y)).sum::<f64>() / self.n_rows() as f64
    }
}
