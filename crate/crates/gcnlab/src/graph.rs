//! Sparse symmetric adjacency in CSR form, symmetric renormalization, and
//! sparse-dense propagation.
//!
//! The central object is [`SparseAdjacency`]. Graphs enter the crate as
//! undirected edge lists; [`SparseAdjacency::from_edges_counted`] canonicalizes
//! them (both directions stored, duplicates and self-loops dropped with
//! counts). [`SparseAdjacency::renormalize`] produces the propagation operator
//! `D^{-1/2} (A + I) D^{-1/2}` used by every model in the crate.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Number of rows above which spmm parallelizes over output rows.
const PAR_ROW_THRESHOLD: usize = 64;

/// Counts of edge-list entries dropped during canonicalization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeCleanup {
    /// Redundant mentions of an undirected edge (either direction).
    pub duplicates: usize,
    /// Entries of the form `(v, v)`.
    pub self_loops: usize,
}

/// A sparse square matrix in compressed sparse row form.
///
/// Column indices within each row are strictly increasing. Instances built
/// through [`SparseAdjacency::from_edges`] are structurally symmetric and
/// binary; [`SparseAdjacency::from_parts`] admits arbitrary well-formed CSR
/// so validation paths can be exercised.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdjacency {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseAdjacency {
    /// Build a binary symmetric adjacency from an undirected edge list,
    /// dropping duplicate edges and self-loops silently.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Ok(Self::from_edges_counted(n, edges)?.0)
    }

    /// Like [`from_edges`](Self::from_edges) but reports how many entries
    /// were dropped, so loaders can surface warnings.
    pub fn from_edges_counted(n: usize, edges: &[(usize, usize)]) -> Result<(Self, EdgeCleanup)> {
        let mut cleanup = EdgeCleanup::default();
        let mut canon: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Invalid(format!(
                    "edge ({u}, {v}) out of range for a graph with {n} nodes"
                )));
            }
            if u == v {
                cleanup.self_loops += 1;
                continue;
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        let before = canon.len();
        canon.dedup();
        cleanup.duplicates = before - canon.len();

        let mut degree = vec![0usize; n];
        for &(u, v) in &canon {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut row_offsets = Vec::with_capacity(n + 1);
        row_offsets.push(0);
        for d in &degree {
            row_offsets.push(row_offsets.last().unwrap() + d);
        }
        let nnz = *row_offsets.last().unwrap();
        let mut col_indices = vec![0usize; nnz];
        let mut cursor = row_offsets[..n].to_vec();
        for &(u, v) in &canon {
            col_indices[cursor[u]] = v;
            cursor[u] += 1;
            col_indices[cursor[v]] = u;
            cursor[v] += 1;
        }
        // Each row was filled in ascending canonical order for the `u` side
        // but interleaved for the `v` side; sort rows to restore the CSR
        // invariant.
        for i in 0..n {
            col_indices[row_offsets[i]..row_offsets[i + 1]].sort_unstable();
        }
        let values = vec![1.0; nnz];
        let adj = SparseAdjacency { n, row_offsets, col_indices, values };
        Ok((adj, cleanup))
    }

    /// Build directly from CSR arrays. Checks CSR well-formedness (offsets
    /// monotone and bounded, columns in range and strictly increasing per
    /// row) but not symmetry; use this to construct adversarial inputs.
    pub fn from_parts(
        n: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n + 1 || row_offsets[0] != 0 {
            return Err(Error::Invalid(format!(
                "row_offsets must have length n+1 = {} and start at 0",
                n + 1
            )));
        }
        if *row_offsets.last().unwrap() != col_indices.len() || col_indices.len() != values.len() {
            return Err(Error::Invalid(
                "row_offsets, col_indices and values disagree about nnz".into(),
            ));
        }
        for i in 0..n {
            if row_offsets[i] > row_offsets[i + 1] {
                return Err(Error::Invalid(format!("row_offsets not monotone at row {i}")));
            }
            let row = &col_indices[row_offsets[i]..row_offsets[i + 1]];
            for w in row.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::Invalid(format!(
                        "columns in row {i} are not strictly increasing"
                    )));
                }
            }
            if let Some(&last) = row.last() {
                if last >= n {
                    return Err(Error::Invalid(format!("column {last} out of range in row {i}")));
                }
            }
        }
        Ok(SparseAdjacency { n, row_offsets, col_indices, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored entries (each undirected edge counts twice).
    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    /// Neighbor column indices of row `i`, ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    /// Stored values of row `i`, aligned with [`neighbors`](Self::neighbors).
    pub fn row_values(&self, i: usize) -> &[f64] {
        &self.values[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    /// Value at `(i, j)`, 0 when the entry is structurally absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.neighbors(i).binary_search(&j) {
            Ok(pos) => self.row_values(i)[pos],
            Err(_) => 0.0,
        }
    }

    /// True when for every stored `(i, j, v)` the entry `(j, i)` exists with
    /// the same value.
    pub fn is_symmetric(&self) -> bool {
        for i in 0..self.n {
            for (&j, &v) in self.neighbors(i).iter().zip(self.row_values(i)) {
                if self.get(j, i) != v {
                    return false;
                }
            }
        }
        true
    }

    /// Symmetric renormalization `D^{-1/2} (A + I) D^{-1/2}`.
    ///
    /// Requires a symmetric binary adjacency. A pre-existing diagonal entry is
    /// absorbed (the added identity is a set union, not a sum), matching the
    /// convention that self-loops in raw data are deduplicated rather than
    /// rejected. Degrees are those of `A + I`, so isolated nodes get degree 1
    /// and a diagonal entry of exactly 1.
    pub fn renormalize(&self) -> Result<SparseAdjacency> {
        for &v in &self.values {
            if v != 1.0 {
                return Err(Error::Invalid(format!(
                    "renormalize requires a binary adjacency; found value {v}"
                )));
            }
        }
        if !self.is_symmetric() {
            return Err(Error::Invalid(
                "renormalize requires a structurally symmetric adjacency".into(),
            ));
        }
        let n = self.n;
        let mut degree = vec![0usize; n];
        for (i, deg) in degree.iter_mut().enumerate() {
            let has_diag = self.neighbors(i).binary_search(&i).is_ok();
            *deg = self.neighbors(i).len() + usize::from(!has_diag);
        }
        let inv_sqrt: Vec<f64> = degree.iter().map(|&d| 1.0 / (d as f64).sqrt()).collect();

        let mut row_offsets = Vec::with_capacity(n + 1);
        row_offsets.push(0usize);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            let mut inserted_diag = false;
            for &j in self.neighbors(i) {
                if !inserted_diag && j > i {
                    col_indices.push(i);
                    values.push(inv_sqrt[i] * inv_sqrt[i]);
                    inserted_diag = true;
                }
                if j == i {
                    inserted_diag = true;
                }
                col_indices.push(j);
                values.push(inv_sqrt[i] * inv_sqrt[j]);
            }
            if !inserted_diag {
                col_indices.push(i);
                values.push(inv_sqrt[i] * inv_sqrt[i]);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseAdjacency { n, row_offsets, col_indices, values })
    }

    /// Sparse-dense product `self * h`.
    pub fn spmm(&self, h: &Matrix) -> Result<Matrix> {
        if h.rows() != self.n {
            return Err(Error::Shape(format!(
                "spmm: adjacency is {0}x{0} but matrix has {1} rows",
                self.n,
                h.rows()
            )));
        }
        let cols = h.cols();
        let mut out = Matrix::zeros(self.n, cols);
        let body = |(i, out_row): (usize, &mut [f64])| {
            for (&j, &v) in self.neighbors(i).iter().zip(self.row_values(i)) {
                let h_row = h.row(j);
                for (o, &x) in out_row.iter_mut().zip(h_row) {
                    *o += v * x;
                }
            }
        };
        if cols == 0 || self.n == 0 {
            return Ok(out);
        }
        if self.n >= PAR_ROW_THRESHOLD && rayon::current_num_threads() > 1 {
            out.as_mut_slice().par_chunks_exact_mut(cols).enumerate().for_each(body);
        } else {
            out.as_mut_slice().chunks_exact_mut(cols).enumerate().for_each(body);
        }
        Ok(out)
    }

    /// `self^k * h` by repeated spmm; `k = 0` returns a copy of `h`.
    pub fn power_propagate(&self, h: &Matrix, k: usize) -> Result<Matrix> {
        let mut cur = h.clone();
        for _ in 0..k {
            cur = self.spmm(&cur)?;
        }
        Ok(cur)
    }

    /// Dense copy, for oracle comparisons in tests and diagnostics.
    pub fn to_dense(&self) -> Matrix {
        let mut out = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (&j, &v) in self.neighbors(i).iter().zip(self.row_values(i)) {
                out.set(i, j, v);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn assert_close(a: f64, b: f64) {
        assert!((a - b).abs() < TOL, "{a} vs {b}");
    }

    /// Path graph 0-1-2. Degrees of A+I are [2, 3, 2], so the renormalized
    /// entries are 1/2 and 1/3 on the diagonal and 1/sqrt(6) off it.
    #[test]
    fn renormalize_path_graph_matches_hand_computation() {
        let adj = SparseAdjacency::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let ahat = adj.renormalize().unwrap();
        let s6 = 1.0 / 6.0f64.sqrt();
        assert_close(ahat.get(0, 0), 0.5);
        assert_close(ahat.get(0, 1), s6);
        assert_close(ahat.get(0, 2), 0.0);
        assert_close(ahat.get(1, 0), s6);
        assert_close(ahat.get(1, 1), 1.0 / 3.0);
        assert_close(ahat.get(1, 2), s6);
        assert_close(ahat.get(2, 2), 0.5);
        assert!(ahat.is_symmetric());
    }

    /// Single undirected edge: both degrees of A+I are 2, every entry 1/2.
    #[test]
    fn renormalize_single_edge() {
        let adj = SparseAdjacency::from_edges(2, &[(0, 1)]).unwrap();
        let ahat = adj.renormalize().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_close(ahat.get(i, j), 0.5);
            }
        }
    }

    /// An isolated node has degree 1 in A+I and a lone diagonal entry of 1.
    #[test]
    fn renormalize_isolated_node() {
        let adj = SparseAdjacency::from_edges(3, &[(0, 1)]).unwrap();
        let ahat = adj.renormalize().unwrap();
        assert_close(ahat.get(2, 2), 1.0);
        assert_eq!(ahat.neighbors(2), &[2]);
    }

    /// The empty graph renormalizes to the identity.
    #[test]
    fn renormalize_empty_graph_is_identity() {
        let adj = SparseAdjacency::from_edges(4, &[]).unwrap();
        let ahat = adj.renormalize().unwrap();
        for i in 0..4 {
            assert_close(ahat.get(i, i), 1.0);
            assert_eq!(ahat.neighbors(i).len(), 1);
        }
    }

    /// sqrt(deg(A+I)) is an eigenvector of the renormalized operator with
    /// eigenvalue exactly 1; a strong structural check on the construction.
    #[test]
    fn renormalized_operator_fixes_sqrt_degree_vector() {
        let edges = [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (4, 0), (4, 2)];
        let adj = SparseAdjacency::from_edges(5, &edges).unwrap();
        let ahat = adj.renormalize().unwrap();
        let mut v = Matrix::zeros(5, 1);
        for i in 0..5 {
            let d = adj.neighbors(i).len() + 1;
            v.set(i, 0, (d as f64).sqrt());
        }
        let av = ahat.spmm(&v).unwrap();
        for i in 0..5 {
            assert!((av.get(i, 0) - v.get(i, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn from_edges_counts_duplicates_and_self_loops() {
        let (adj, cleanup) =
            SparseAdjacency::from_edges_counted(3, &[(0, 1), (1, 0), (0, 1), (2, 2)]).unwrap();
        assert_eq!(cleanup, EdgeCleanup { duplicates: 2, self_loops: 1 });
        assert_eq!(adj.nnz(), 2);
        assert_eq!(adj.neighbors(0), &[1]);
        assert_eq!(adj.neighbors(1), &[0]);
        assert!(adj.neighbors(2).is_empty());
    }

    #[test]
    fn from_edges_rejects_out_of_range() {
        let e = SparseAdjacency::from_edges(2, &[(0, 5)]);
        assert!(matches!(e, Err(Error::Invalid(_))));
    }

    #[test]
    fn renormalize_rejects_asymmetric_input() {
        // Single directed entry (0 -> 1).
        let adj = SparseAdjacency::from_parts(2, vec![0, 1, 1], vec![1], vec![1.0]).unwrap();
        let e = adj.renormalize();
        assert!(matches!(e, Err(Error::Invalid(ref m)) if m.contains("symmetric")), "{e:?}");
    }

    #[test]
    fn renormalize_rejects_non_binary_values() {
        let adj =
            SparseAdjacency::from_parts(2, vec![0, 1, 2], vec![1, 0], vec![2.0, 2.0]).unwrap();
        assert!(matches!(adj.renormalize(), Err(Error::Invalid(_))));
        let neg =
            SparseAdjacency::from_parts(2, vec![0, 1, 2], vec![1, 0], vec![-1.0, -1.0]).unwrap();
        assert!(matches!(neg.renormalize(), Err(Error::Invalid(_))));
    }

    /// A self-loop already present in the CSR is absorbed, not double-counted:
    /// the result equals renormalizing the same graph without the loop.
    #[test]
    fn renormalize_absorbs_existing_diagonal() {
        let with_loop = SparseAdjacency::from_parts(
            2,
            vec![0, 2, 3],
            vec![0, 1, 0],
            vec![1.0, 1.0, 1.0],
        )
        .unwrap();
        let without = SparseAdjacency::from_edges(2, &[(0, 1)]).unwrap();
        let a = with_loop.renormalize().unwrap();
        let b = without.renormalize().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_close(a.get(i, j), b.get(i, j));
            }
        }
    }

    #[test]
    fn spmm_matches_dense_product() {
        let adj = SparseAdjacency::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let ahat = adj.renormalize().unwrap();
        let mut h = Matrix::zeros(4, 3);
        for i in 0..4 {
            for j in 0..3 {
                h.set(i, j, (i * 3 + j) as f64 - 4.0);
            }
        }
        let sparse = ahat.spmm(&h).unwrap();
        let dense = ahat.to_dense().matmul(&h).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                assert!((sparse.get(i, j) - dense.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spmm_rejects_row_mismatch() {
        let adj = SparseAdjacency::from_edges(3, &[(0, 1)]).unwrap();
        assert!(matches!(adj.spmm(&Matrix::zeros(4, 2)), Err(Error::Shape(_))));
    }

    #[test]
    fn power_propagate_composes() {
        let adj = SparseAdjacency::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)])
            .unwrap()
            .renormalize()
            .unwrap();
        let mut h = Matrix::zeros(5, 2);
        for i in 0..5 {
            h.set(i, 0, i as f64);
            h.set(i, 1, 1.0 - i as f64 * 0.5);
        }
        let a = adj.power_propagate(&h, 3).unwrap();
        let b = adj.spmm(&adj.spmm(&adj.spmm(&h).unwrap()).unwrap()).unwrap();
        for i in 0..5 {
            for j in 0..2 {
                assert!((a.get(i, j) - b.get(i, j)).abs() < 1e-12);
            }
        }
        // k = 0 is the identity.
        let id = adj.power_propagate(&h, 0).unwrap();
        assert_eq!(id, h);
    }

    #[test]
    fn from_parts_validates_csr_shape() {
        assert!(SparseAdjacency::from_parts(2, vec![0, 1], vec![0], vec![1.0]).is_err());
        assert!(SparseAdjacency::from_parts(2, vec![0, 2, 2], vec![1, 1], vec![1.0; 2]).is_err());
        assert!(SparseAdjacency::from_parts(2, vec![0, 1, 2], vec![1, 5], vec![1.0; 2]).is_err());
    }
}
