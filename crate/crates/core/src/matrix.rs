//! Compressed sparse row storage for document-term matrices.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifies the comment a matrix row came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowId {
    pub project: String,
    pub comment_id: u64,
}

/// Sparse row-major matrix. Column indices inside a row are strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    row_ids: Vec<RowId>,
}

impl FeatureMatrix {
    pub fn empty(n_cols: usize) -> Self {
        FeatureMatrix {
            n_cols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
            row_ids: Vec::new(),
        }
    }

    /// Appends one row given as `(column, value)` pairs. Pairs are sorted and
    /// explicit zeros dropped.
    pub fn push_row(&mut self, id: RowId, mut entries: Vec<(u32, f64)>) {
        entries.sort_by_key(|&(c, _)| c);
        for (c, v) in entries {
            debug_assert!((c as usize) < self.n_cols);
            if v != 0.0 {
                if let Some(&last) = self.indices[self.indptr[self.indptr.len() - 1]..].last() {
                    debug_assert!(last < c, "duplicate column {c}");
                }
                self.indices.push(c);
                self.values.push(v);
            }
        }
        self.indptr.push(self.indices.len());
        self.row_ids.push(id);
    }

    /// Builds a matrix from dense rows; row ids are synthesized as `("dense", i)`.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut m = FeatureMatrix::empty(n_cols);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n_cols, "ragged dense input");
            let entries = row
                .iter()
                .enumerate()
                .map(|(c, &v)| (c as u32, v))
                .collect();
            m.push_row(
                RowId {
                    project: "dense".into(),
                    comment_id: i as u64,
                },
                entries,
            );
        }
        m
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.rows())
            .map(|r| {
                let mut out = vec![0.0; self.n_cols];
                let (cols, vals) = self.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    out[c as usize] = v;
                }
                out
            })
            .collect()
    }

    pub fn rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let (start, end) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[start..end], &self.values[start..end])
    }

    pub fn get(&self, r: usize, c: u32) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    pub fn row_ids(&self) -> &[RowId] {
        &self.row_ids
    }

    pub fn row_id(&self, r: usize) -> &RowId {
        &self.row_ids[r]
    }

    pub fn row_norm(&self, r: usize) -> f64 {
        self.row(r).1.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot_row(&self, r: usize, dense: &[f64]) -> f64 {
        let (cols, vals) = self.row(r);
        cols.iter()
            .zip(vals)
            .map(|(&c, &v)| v * dense[c as usize])
            .sum()
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let nnz: usize = rows
            .iter()
            .map(|&r| self.indptr[r + 1] - self.indptr[r])
            .sum();
        let mut out = FeatureMatrix {
            n_cols: self.n_cols,
            indptr: Vec::with_capacity(rows.len() + 1),
            indices: Vec::with_capacity(nnz),
            values: Vec::with_capacity(nnz),
            row_ids: Vec::with_capacity(rows.len()),
        };
        out.indptr.push(0);
        for &r in rows {
            let (cols, vals) = self.row(r);
            out.indices.extend_from_slice(cols);
            out.values.extend_from_slice(vals);
            out.indptr.push(out.indices.len());
            out.row_ids.push(self.row_ids[r].clone());
        }
        out
    }

    /// Keeps only the listed columns, renumbered in the given order.
    pub fn select_cols(&self, cols: &[u32]) -> FeatureMatrix {
        let mut remap = vec![u32::MAX; self.n_cols];
        for (new, &old) in cols.iter().enumerate() {
            remap[old as usize] = new as u32;
        }
        let mut out = FeatureMatrix::empty(cols.len());
        for r in 0..self.rows() {
            let (cs, vs) = self.row(r);
            let entries = cs
                .iter()
                .zip(vs)
                .filter(|(&c, _)| remap[c as usize] != u32::MAX)
                .map(|(&c, &v)| (remap[c as usize], v))
                .collect();
            out.push_row(self.row_ids[r].clone(), entries);
        }
        out
    }

    /// Concatenates matrices with equal column counts.
    pub fn vstack(parts: &[&FeatureMatrix]) -> Result<FeatureMatrix> {
        let n_cols = parts.first().map_or(0, |m| m.n_cols);
        let mut out = FeatureMatrix::empty(n_cols);
        for part in parts {
            if part.n_cols != n_cols {
                return Err(Error::Shape {
                    expected: n_cols,
                    actual: part.n_cols,
                });
            }
            let base = out.indices.len();
            out.indices.extend_from_slice(&part.indices);
            out.values.extend_from_slice(&part.values);
            out.indptr
                .extend(part.indptr[1..].iter().map(|&p| p + base));
            out.row_ids.extend(part.row_ids.iter().cloned());
        }
        Ok(out)
    }

    /// Per-column value lists (nonzeros only), as `(row, value)` pairs in row order.
    pub fn columns(&self) -> Vec<Vec<(u32, f64)>> {
        let mut cols: Vec<Vec<(u32, f64)>> = vec![Vec::new(); self.n_cols];
        for r in 0..self.rows() {
            let (cs, vs) = self.row(r);
            for (&c, &v) in cs.iter().zip(vs) {
                cols[c as usize].push((r as u32, v));
            }
        }
        cols
    }

    /// Median of every column, zeros included.
    pub fn column_medians(&self) -> Vec<f64> {
        let n = self.rows();
        self.columns()
            .into_iter()
            .map(|col| {
                let mut nonzero: Vec<f64> = col.into_iter().map(|(_, v)| v).collect();
                median_with_zeros(&mut nonzero, n)
            })
            .collect()
    }

    /// Writes `row,col,weight` triplets with a header line.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "row,col,weight")?;
        for r in 0..self.rows() {
            let (cs, vs) = self.row(r);
            for (&c, &v) in cs.iter().zip(vs) {
                writeln!(out, "{r},{c},{v}")?;
            }
        }
        Ok(())
    }
}

/// Median of a column of length `n` whose nonzero entries are `nonzero`; the
/// remaining `n - nonzero.len()` entries are zeros. Sorts `nonzero` in place.
pub(crate) fn median_with_zeros(nonzero: &mut [f64], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    nonzero.sort_by(f64::total_cmp);
    let zeros = n - nonzero.len();
    let negatives = nonzero.partition_point(|&v| v < 0.0);
    // k-th order statistic of the merged sequence.
    let kth = |k: usize| -> f64 {
        if k < negatives {
            nonzero[k]
        } else if k < negatives + zeros {
            0.0
        } else {
            nonzero[k - zeros]
        }
    };
    if n % 2 == 1 {
        kth(n / 2)
    } else {
        (kth(n / 2 - 1) + kth(n / 2)) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> FeatureMatrix {
        FeatureMatrix::from_dense(&[
            vec![5.0, 1.0, 0.0],
            vec![3.0, 4.0, 2.0],
            vec![1.0, 2.0, 3.0],
            vec![0.0, 0.0, 1.0],
        ])
    }

    #[test]
    fn dense_round_trip() {
        let m = example();
        assert_eq!(m.nnz(), 9);
        assert_eq!(m.to_dense()[1], vec![3.0, 4.0, 2.0]);
        assert_eq!(m.get(0, 2), 0.0);
        assert_eq!(m.get(2, 1), 2.0);
    }

    #[test]
    fn medians_count_implicit_zeros() {
        assert_eq!(example().column_medians(), vec![2.0, 1.5, 1.5]);
    }

    #[test]
    fn median_handles_negative_values() {
        let mut v = vec![-3.0, 2.0, -1.0];
        // column: -3, -1, 0, 0, 2
        assert_eq!(median_with_zeros(&mut v, 5), 0.0);
        let mut v = vec![-3.0, -2.0, -1.0];
        // column: -3, -2, -1, 0
        assert_eq!(median_with_zeros(&mut v, 4), -1.5);
    }

    #[test]
    fn select_and_stack() {
        let m = example();
        let s = m.select_rows(&[3, 0]);
        assert_eq!(s.to_dense(), vec![vec![0.0, 0.0, 1.0], vec![5.0, 1.0, 0.0]]);
        let st = FeatureMatrix::vstack(&[&s, &m]).unwrap();
        assert_eq!(st.rows(), 6);
        assert_eq!(st.to_dense()[2], vec![5.0, 1.0, 0.0]);
        let c = m.select_cols(&[2, 0]);
        assert_eq!(c.to_dense()[1], vec![2.0, 3.0]);
    }

    #[test]
    fn vstack_rejects_mismatched_columns() {
        let a = FeatureMatrix::empty(2);
        let b = FeatureMatrix::empty(3);
        assert!(matches!(
            FeatureMatrix::vstack(&[&a, &b]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn triplet_export() {
        let m = FeatureMatrix::from_dense(&[vec![0.0, 0.5]]);
        let mut buf = Vec::new();
        m.write_triplets(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "row,col,weight\n0,1,0.5\n");
    }
}
