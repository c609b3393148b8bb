use crate::error::{invalid, Error, Result};

use super::Matrix;

/// Compressed sparse row matrix.
///
/// Row `i` holds the incoming entries of destination `i`; the column
/// indices of a row are kept sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        offsets: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if offsets.len() != rows + 1 || offsets[0] != 0 {
            return Err(invalid(format!(
                "csr: expected {} offsets starting at 0, got {}",
                rows + 1,
                offsets.len()
            )));
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("csr: offsets must be non-decreasing"));
        }
        if offsets[rows] != indices.len() || indices.len() != values.len() {
            return Err(invalid(format!(
                "csr: last offset {} must equal nnz {} and values {}",
                offsets[rows],
                indices.len(),
                values.len()
            )));
        }
        if let Some(&c) = indices.iter().find(|&&c| c >= cols) {
            return Err(invalid(format!("csr: column {c} out of range for {cols} columns")));
        }
        Ok(Self {
            rows,
            cols,
            offsets,
            indices,
            values,
        })
    }

    /// Builds from `(row, col, value)` triplets; duplicate coordinates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= rows || c >= cols {
                return Err(invalid(format!("csr: entry ({r}, {c}) outside {rows}x{cols}")));
            }
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut offsets = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
                continue;
            }
            last = Some((r, c));
            offsets[r + 1] += 1;
            indices.push(c);
            values.push(v);
        }
        for i in 0..rows {
            offsets[i + 1] += offsets[i];
        }
        Self::new(rows, cols, offsets, indices, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            offsets: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same sparsity pattern with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.nnz() {
            return Err(Error::Shape {
                op: "csr_with_values",
                left: (self.nnz(), 1),
                right: (values.len(), 1),
            });
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    /// Row index of every stored entry, in storage order.
    pub fn row_of_entries(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.rows {
            out.extend(std::iter::repeat_n(i, self.offsets[i + 1] - self.offsets[i]));
        }
        out
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[i]..self.offsets[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row_entries(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Dense product `self · v` with a plain matrix.
    pub fn matmul_dense(&self, v: &Matrix) -> Result<Matrix> {
        spmm_values(self, &self.values, v)
    }

    /// `P A Pᵀ` where node `i` moves to `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.rows {
            for (j, v) in self.row_entries(i) {
                triplets.push((perm[i], perm[j], v));
            }
        }
        Self::from_triplets(self.rows, self.cols, &triplets)
    }
}

pub(crate) fn spmm_values(pattern: &CsrMatrix, values: &[f64], v: &Matrix) -> Result<Matrix> {
    if pattern.cols != v.rows() {
        return Err(Error::Shape {
            op: "spmm",
            left: (pattern.rows, pattern.cols),
            right: v.shape(),
        });
    }
    let k = v.cols();
    let mut out = Matrix::zeros(pattern.rows, k);
    for i in 0..pattern.rows {
        let span = pattern.offsets[i]..pattern.offsets[i + 1];
        let out_row = out.row_mut(i);
        for e in span {
            let a = values[e];
            let src = v.row(pattern.indices[e]);
            for (o, &x) in out_row.iter_mut().zip(src) {
                *o += a * x;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_offsets() {
        assert!(CsrMatrix::new(2, 2, vec![0, 2, 1], vec![0], vec![1.0]).is_err());
        assert!(CsrMatrix::new(1, 2, vec![0, 1], vec![5], vec![1.0]).is_err());
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, 2, &[(1, 0, 1.0), (0, 1, 2.0), (1, 0, 0.5)]).unwrap();
        assert_eq!(a.offsets(), &[0, 1, 2]);
        assert_eq!(a.values(), &[2.0, 1.5]);
        assert_eq!(a.row_of_entries(), vec![0, 1]);
    }
}
