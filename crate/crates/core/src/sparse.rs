//! Compressed-row sparse matrices sharing a mesh-derived sparsity pattern.

use std::sync::Arc;

use crate::mesh::Mesh;

/// Row-compressed structure of a square matrix. Column indices within each
/// row are sorted and include the diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Vertex adjacency of a triangulation (each vertex coupled to itself and
    /// to every vertex it shares a triangle with).
    pub fn from_mesh(mesh: &Mesh) -> Self {
        let n = mesh.n_vertices();
        let mut neighbours: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for tri in &mesh.triangles {
            for &a in tri {
                for &b in tri {
                    if a != b {
                        neighbours[a].push(b);
                    }
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut cols in neighbours {
            cols.sort_unstable();
            cols.dedup();
            col_idx.extend_from_slice(&cols);
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx }
    }

    /// Builds a pattern from explicit rows; columns are sorted and deduplicated.
    pub fn from_rows(rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        for mut cols in rows {
            cols.sort_unstable();
            cols.dedup();
            assert!(cols.iter().all(|&c| c < n), "column index out of range");
            col_idx.extend_from_slice(&cols);
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Position of entry `(i, j)` in the value array.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.row(i).binary_search(&j).ok().map(|k| start + k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>, symmetric: bool) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self {
            pattern,
            values,
            symmetric,
        }
    }

    pub fn identity(n: usize) -> Self {
        let pattern = Arc::new(SparsityPattern::from_rows((0..n).map(|i| vec![i]).collect()));
        Self {
            values: vec![1.0; n],
            pattern,
            symmetric: true,
        }
    }

    /// Dense row-major input; exact zeros off the diagonal are not stored.
    pub fn from_dense(rows: &[Vec<f64>], symmetric: bool) -> Self {
        let n = rows.len();
        let structure = rows
            .iter()
            .enumerate()
            .map(|(i, r)| (0..n).filter(|&j| j == i || r[j] != 0.0).collect())
            .collect();
        let pattern = Arc::new(SparsityPattern::from_rows(structure));
        let mut m = Self::zeros(pattern, symmetric);
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                if let Some(s) = m.pattern.slot(i, j) {
                    m.values[s] = v;
                }
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_symmetric_flagged(&self) -> bool {
        self.symmetric
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.slot(i, j).map_or(0.0, |s| self.values[s])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`, accumulated row by row in column order.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        let p = &*self.pattern;
        debug_assert_eq!(x.len(), p.n);
        debug_assert_eq!(y.len(), p.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let (lo, hi) = (p.row_ptr[i], p.row_ptr[i + 1]);
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[p.col_idx[k]];
            }
            *yi = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        self.matvec_into(x, &mut y);
        y
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    /// Sum of all entries, `1^T A 1`.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let p = &*self.pattern;
        (0..p.n)
            .map(|i| self.values[p.row_ptr[i]..p.row_ptr[i + 1]].iter().sum())
            .collect()
    }

    /// Largest `|a_ij - a_ji|` relative to the largest `|a_ij|`.
    pub fn symmetry_defect(&self) -> f64 {
        let p = &*self.pattern;
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..p.n {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                let j = p.col_idx[k];
                worst = worst.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    /// `self + scale * other`; both operands must share a pattern.
    pub fn add_scaled(&self, other: &SparseMatrix, scale: f64) -> SparseMatrix {
        assert!(
            Arc::ptr_eq(&self.pattern, &other.pattern) || *self.pattern == *other.pattern,
            "sparsity patterns differ"
        );
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + scale * b)
            .collect();
        SparseMatrix {
            pattern: Arc::clone(&self.pattern),
            values,
            symmetric: self.symmetric && other.symmetric,
        }
    }

    /// Symmetric elimination of the flagged rows and columns: they are zeroed
    /// and given a unit diagonal.
    pub fn eliminate_rows(&mut self, fixed: &[bool]) {
        let p = Arc::clone(&self.pattern);
        for i in 0..p.n {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                let j = p.col_idx[k];
                if fixed[i] || fixed[j] {
                    self.values[k] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut out = vec![vec![0.0; n]; n];
        for (i, row) in out.iter_mut().enumerate() {
            for &j in self.pattern.row(i) {
                row[j] = self.get(i, j);
            }
        }
        out
    }
}
