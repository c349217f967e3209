//! Compressed-row interaction matrix.

use super::Interactions;

/// How raw ratings become matrix values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueMode {
    /// Every interaction row marks the cell with 1.
    Presence,
    /// `rating > 0` marks the cell with 1; other rows are ignored.
    Binary,
    /// Ratings of repeated `(query, item)` rows are summed.
    Ratings,
}

/// CSR matrix with sorted, unique column indices in every row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseInteractionMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseInteractionMatrix {
    pub fn from_interactions(data: &Interactions, mode: ValueMode) -> Self {
        let log = data.log();
        let triplets = log.iter().filter_map(|row| {
            let v = match mode {
                ValueMode::Presence => 1.0,
                ValueMode::Binary if row.rating > 0.0 => 1.0,
                ValueMode::Binary => return None,
                ValueMode::Ratings => row.rating,
            };
            Some((*row.query, *row.item, v))
        });
        Self::from_triplets(data.n_queries(), data.n_items(), triplets, mode != ValueMode::Ratings)
    }

    /// Builds from `(row, col, value)`; duplicates are summed, or collapsed to
    /// 1 when `saturate` is set.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (u32, u32, f64)>,
        saturate: bool,
    ) -> Self {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_rows];
        for (r, c, v) in triplets {
            rows[r as usize].push((c, v));
        }
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    if !saturate {
                        v += v2;
                    }
                    iter.next();
                }
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self { n_rows, n_cols, indptr, indices, values }
    }

    pub(crate) fn from_raw_parts(
        n_rows: usize,
        n_cols: usize,
        indptr: Vec<usize>,
        indices: Vec<u32>,
        values: Vec<f64>,
    ) -> Self {
        Self { n_rows, n_cols, indptr, indices, values }
    }

    pub(crate) fn raw_parts(&self) -> (&[usize], &[u32], &[f64]) {
        (&self.indptr, &self.indices, &self.values)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Column indices and values of row `r`; empty for rows past the end.
    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        if r >= self.n_rows {
            return (&[], &[]);
        }
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn row_iter(&self, r: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let (idx, val) = self.row(r);
        idx.iter().copied().zip(val.iter().copied())
    }

    pub fn contains(&self, r: usize, c: u32) -> bool {
        self.row(r).0.binary_search(&c).is_ok()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.indices {
            counts[c as usize + 1] += 1;
        }
        for i in 0..self.n_cols {
            counts[i + 1] += counts[i];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0u32; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.n_rows {
            for (c, v) in self.row_iter(r) {
                let slot = next[c as usize];
                indices[slot] = r as u32;
                values[slot] = v;
                next[c as usize] += 1;
            }
        }
        Self { n_rows: self.n_cols, n_cols: self.n_rows, indptr, indices, values }
    }

    /// Dense copy, row-major; only for small matrices in tests and oracles.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row_iter(r) {
                row[c as usize] = v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InteractionLog;

    #[test]
    fn duplicates_and_modes() {
        let log: InteractionLog<u32> =
            [(0, 1, 0, 2.0), (0, 1, 1, 3.0), (1, 0, 2, 0.0), (0, 0, 3, 1.0)].into_iter().collect();
        let data = Interactions::new(log, 2, 2).unwrap();
        let r = SparseInteractionMatrix::from_interactions(&data, ValueMode::Ratings);
        assert_eq!(r.row(0), (&[0u32, 1][..], &[1.0, 5.0][..]));
        assert_eq!(r.row(1), (&[0u32][..], &[0.0][..]));
        let b = SparseInteractionMatrix::from_interactions(&data, ValueMode::Binary);
        assert_eq!(b.row(0).1, &[1.0, 1.0]);
        assert_eq!(b.row(1).0.len(), 0);
        let p = SparseInteractionMatrix::from_interactions(&data, ValueMode::Presence);
        assert_eq!(p.nnz(), 3);
    }

    #[test]
    fn transpose_round_trip() {
        let m = SparseInteractionMatrix::from_triplets(3, 4, [(0, 3, 1.0), (2, 0, 2.0), (1, 3, 4.0)], false);
        let t = m.transpose();
        assert_eq!(t.n_rows(), 4);
        assert_eq!(t.row(3), (&[0u32, 1][..], &[1.0, 4.0][..]));
        assert_eq!(t.transpose(), m);
    }
}
