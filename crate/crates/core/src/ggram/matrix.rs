use super::GGramMatchSet;
use crate::error::{Error, Result};

/// Binary `N x T` incidence table: `get(n, t)` is set iff token `n` lies in
/// the span of match `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchingMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl MatchingMatrix {
    pub fn from_matches(set: &GGramMatchSet) -> Self {
        let (rows, cols) = (set.source_len, set.matches.len());
        let mut bits = vec![false; rows * cols];
        for (t, m) in set.matches.iter().enumerate() {
            for n in m.start..m.end.min(rows) {
                bits[n * cols + t] = true;
            }
        }
        MatchingMatrix { rows, cols, bits }
    }

    /// Builds from an explicit row-major bit table.
    pub fn from_bits(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} bits for a {rows}x{cols} matrix",
                bits.len()
            )));
        }
        Ok(MatchingMatrix { rows, cols, bits })
    }

    pub fn empty(rows: usize) -> Self {
        MatchingMatrix {
            rows,
            cols: 0,
            bits: Vec::new(),
        }
    }

    /// `(N, T)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, n: usize, t: usize) -> bool {
        self.bits[n * self.cols + t]
    }

    /// Token rows covered by column `t`.
    pub fn column_rows(&self, t: usize) -> Vec<usize> {
        (0..self.rows).filter(|&n| self.get(n, t)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<usize>> {
        (0..self.cols).map(|t| self.column_rows(t)).collect()
    }

    pub fn column_sum(&self, t: usize) -> usize {
        (0..self.rows).filter(|&n| self.get(n, t)).count()
    }

    /// Row-major 0/1 floats.
    pub fn to_dense(&self) -> Vec<f32> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Drops the listed columns, keeping the rest in order.
    pub fn without_columns(&self, drop: &[usize]) -> MatchingMatrix {
        let keep: Vec<usize> = (0..self.cols).filter(|t| !drop.contains(t)).collect();
        let mut bits = Vec::with_capacity(self.rows * keep.len());
        for n in 0..self.rows {
            bits.extend(keep.iter().map(|&t| self.get(n, t)));
        }
        MatchingMatrix {
            rows: self.rows,
            cols: keep.len(),
            bits,
        }
    }
}
