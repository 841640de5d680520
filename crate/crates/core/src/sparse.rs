//! Compressed sparse row kernels: construction, products, normalization and
//! blocked top-k cosine neighbor selection.
//!
//! All kernels are sequential and bitwise deterministic.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dense::{dot, DenseMatrix};
use crate::error::{CoreError, Result};
use crate::math;

/// Row sums below this threshold fall back to uniform weights in
/// [`row_normalize`].
pub const ROW_SUM_EPS: f64 = 1e-12;

/// Row-compressed sparse real matrix in canonical form: within each row the
/// column indices are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedSparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    values: Vec<f64>,
}

pub enum Axis {
    Row,
    Col,
}

impl CompressedSparseMatrix {
    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        CompressedSparseMatrix {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CompressedSparseMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n as u32).collect(),
            values: vec![1.0; n],
        }
    }

    /// Build canonical CSR from COO triplets; duplicate coordinates are summed.
    pub fn from_triplets(
        rows: &[usize],
        cols: &[usize],
        vals: &[f64],
        n_rows: usize,
        n_cols: usize,
    ) -> Result<Self> {
        if rows.len() != cols.len() || rows.len() != vals.len() {
            return Err(CoreError::InvalidInput(format!(
                "triplet arrays have unequal lengths {} / {} / {}",
                rows.len(),
                cols.len(),
                vals.len()
            )));
        }
        for (&r, &c) in rows.iter().zip(cols) {
            if r >= n_rows || c >= n_cols {
                return Err(CoreError::IndexOutOfBounds(format!(
                    "entry ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
        }
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_unstable_by_key(|&t| (rows[t], cols[t]));

        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(rows.len());
        let mut values: Vec<f64> = Vec::with_capacity(rows.len());
        let mut last: Option<(usize, usize)> = None;
        for &t in &order {
            let key = (rows[t], cols[t]);
            if last == Some(key) {
                *values.last_mut().unwrap() += vals[t];
            } else {
                col_indices.push(cols[t] as u32);
                values.push(vals[t]);
                row_offsets[rows[t] + 1] += 1;
                last = Some(key);
            }
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(CompressedSparseMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Build from per-row (col, value) lists that are already sorted by column.
    pub(crate) fn from_sorted_rows(
        n_rows: usize,
        n_cols: usize,
        rows: &[Vec<(u32, f64)>],
    ) -> Self {
        debug_assert_eq!(rows.len(), n_rows);
        let nnz: usize = rows.iter().map(|r| r.len()).sum();
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_offsets.push(0);
        for row in rows {
            for &(c, v) in row {
                col_indices.push(c);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        CompressedSparseMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// (columns, values) of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                out.set(i, c as usize, v);
            }
        }
        out
    }

    pub fn transpose(&self) -> CompressedSparseMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_indices {
            counts[c as usize + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let mut col_indices = vec![0u32; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        let mut cursor = counts.clone();
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let p = cursor[c as usize];
                col_indices[p] = i as u32;
                values[p] = v;
                cursor[c as usize] += 1;
            }
        }
        CompressedSparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets: counts,
            col_indices,
            values,
        }
    }

    /// Sparse-dense product `self * dense`.
    pub fn spmm(&self, dense: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_cols != dense.n_rows() {
            return Err(CoreError::ShapeMismatch(format!(
                "spmm: {}x{} * {}x{}",
                self.n_rows,
                self.n_cols,
                dense.n_rows(),
                dense.n_cols()
            )));
        }
        let d = dense.n_cols();
        let mut out = DenseMatrix::zeros(self.n_rows, d);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let o = out.row_mut(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let src = dense.row(c as usize);
                for (ov, &sv) in o.iter_mut().zip(src) {
                    *ov += v * sv;
                }
            }
        }
        Ok(out)
    }

    /// Transposed product `self^T * dense` without materializing the transpose.
    pub fn spmm_t(&self, dense: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_rows != dense.n_rows() {
            return Err(CoreError::ShapeMismatch(format!(
                "spmm_t: ({}x{})^T * {}x{}",
                self.n_rows,
                self.n_cols,
                dense.n_rows(),
                dense.n_cols()
            )));
        }
        let d = dense.n_cols();
        let mut out = DenseMatrix::zeros(self.n_cols, d);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let src = dense.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let o = out.row_mut(c as usize);
                for (ov, &sv) in o.iter_mut().zip(src) {
                    *ov += v * sv;
                }
            }
        }
        Ok(out)
    }

    /// Structural degree per row or column (count of stored entries).
    pub fn degree_vector(&self, axis: Axis) -> Vec<f64> {
        match axis {
            Axis::Row => (0..self.n_rows)
                .map(|i| (self.row_offsets[i + 1] - self.row_offsets[i]) as f64)
                .collect(),
            Axis::Col => {
                let mut deg = vec![0.0; self.n_cols];
                for &c in &self.col_indices {
                    deg[c as usize] += 1.0;
                }
                deg
            }
        }
    }

    /// Symmetric normalization: entry at (i, j) becomes
    /// `v / sqrt(row_deg[i] * col_deg[j])`.
    pub fn sym_normalize(&self, row_deg: &[f64], col_deg: &[f64]) -> Result<CompressedSparseMatrix> {
        if row_deg.len() != self.n_rows || col_deg.len() != self.n_cols {
            return Err(CoreError::ShapeMismatch(format!(
                "sym_normalize: degree lengths {}/{} for {}x{}",
                row_deg.len(),
                col_deg.len(),
                self.n_rows,
                self.n_cols
            )));
        }
        let mut out = self.clone();
        for i in 0..self.n_rows {
            let lo = self.row_offsets[i];
            let hi = self.row_offsets[i + 1];
            if lo == hi {
                continue;
            }
            if row_deg[i] <= 0.0 {
                return Err(CoreError::InvalidInput(format!(
                    "row {i} has entries but degree {}",
                    row_deg[i]
                )));
            }
            for p in lo..hi {
                let j = self.col_indices[p] as usize;
                if col_deg[j] <= 0.0 {
                    return Err(CoreError::InvalidInput(format!(
                        "column {j} has entries but degree {}",
                        col_deg[j]
                    )));
                }
                out.values[p] = self.values[p] / math::sqrt(row_deg[i] * col_deg[j]);
            }
        }
        Ok(out)
    }

    /// Divide each nonempty row by its sum so it becomes row-stochastic.
    /// Rows whose sum is at most [`ROW_SUM_EPS`] fall back to uniform weights
    /// over the retained support.
    pub fn row_normalize(&self) -> CompressedSparseMatrix {
        let mut out = self.clone();
        for i in 0..self.n_rows {
            let lo = self.row_offsets[i];
            let hi = self.row_offsets[i + 1];
            if lo == hi {
                continue;
            }
            let sum: f64 = self.values[lo..hi].iter().sum();
            if sum <= ROW_SUM_EPS {
                let w = 1.0 / (hi - lo) as f64;
                for v in &mut out.values[lo..hi] {
                    *v = w;
                }
            } else {
                for v in &mut out.values[lo..hi] {
                    *v /= sum;
                }
            }
        }
        out
    }

    /// Convert values to 32-bit storage. Used only by the benchmark harness
    /// to report the compact-footprint variant.
    pub fn to_f32_storage(&self) -> CsrF32 {
        CsrF32 {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_offsets: self.row_offsets.clone(),
            col_indices: self.col_indices.clone(),
            values: self.values.iter().map(|&v| v as f32).collect(),
        }
    }
}

/// CSR with 32-bit value storage (benchmark harness only).
#[derive(Debug, Clone)]
pub struct CsrF32 {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<u32>,
    pub values: Vec<f32>,
}

impl CsrF32 {
    /// Approximate heap footprint in bytes.
    pub fn heap_bytes(&self) -> usize {
        self.row_offsets.len() * core::mem::size_of::<usize>()
            + self.col_indices.len() * 4
            + self.values.len() * 4
    }
}

/// Per-row cosine norms of a dense matrix.
pub fn row_norms(x: &DenseMatrix) -> Vec<f64> {
    (0..x.n_rows()).map(|i| x.row_norm(i)).collect()
}

/// Top-k cosine-similarity neighbors per row, self excluded, computed in row
/// blocks so the full pairwise map is never materialized.
///
/// Zero-norm rows have similarity 0 to everything. Ties are broken toward the
/// lower column index.
pub fn blocked_cosine_topk(
    x: &DenseMatrix,
    k: usize,
    block: usize,
) -> Result<CompressedSparseMatrix> {
    let n = x.n_rows();
    if k == 0 {
        return Err(CoreError::InvalidInput("top-k requires k >= 1".into()));
    }
    if k >= n {
        return Err(CoreError::InvalidInput(format!(
            "k = {k} must be smaller than the row count {n}"
        )));
    }
    let block = block.max(1);
    let norms = row_norms(x);
    let mut rows: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n);

    let mut sims = vec![0.0f64; block * n];
    let mut start = 0;
    while start < n {
        let end = (start + block).min(n);
        let rows_here = end - start;
        // sims[b, j] = cos(x[start + b], x[j])
        for b in 0..rows_here {
            let i = start + b;
            let xi = x.row(i);
            let out = &mut sims[b * n..(b + 1) * n];
            if norms[i] == 0.0 {
                out.fill(0.0);
                continue;
            }
            for (j, ov) in out.iter_mut().enumerate() {
                *ov = if norms[j] == 0.0 {
                    0.0
                } else {
                    dot(xi, x.row(j)) / (norms[i] * norms[j])
                };
            }
        }
        for b in 0..rows_here {
            let i = start + b;
            let row_sims = &sims[b * n..(b + 1) * n];
            rows.push(select_topk_row(row_sims, i, k));
        }
        start = end;
    }
    Ok(CompressedSparseMatrix::from_sorted_rows(n, n, &rows))
}

/// Keep the k largest values of `sims` excluding index `skip`; ties go to the
/// lower index. The result is sorted by column.
pub(crate) fn select_topk_row(sims: &[f64], skip: usize, k: usize) -> Vec<(u32, f64)> {
    // (value, index) max-selection; lower index wins ties via the comparator.
    let mut selected: Vec<(u32, f64)> = Vec::with_capacity(k + 1);
    for (j, &s) in sims.iter().enumerate() {
        if j == skip {
            continue;
        }
        let candidate = (j as u32, s);
        let pos = selected
            .binary_search_by(|probe| {
                // Descending by value, ascending by index among equals.
                probe
                    .1
                    .partial_cmp(&candidate.1)
                    .unwrap()
                    .reverse()
                    .then(probe.0.cmp(&candidate.0))
            })
            .unwrap_or_else(|p| p);
        if pos < k {
            selected.insert(pos, candidate);
            if selected.len() > k {
                selected.pop();
            }
        }
    }
    selected.sort_unstable_by_key(|&(c, _)| c);
    selected
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn random_dense(rng: &mut SeededRng, r: usize, c: usize) -> DenseMatrix {
        DenseMatrix::from_vec(r, c, (0..r * c).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn triplets_singleton_and_empty() {
        let m = CompressedSparseMatrix::from_triplets(&[0], &[0], &[1.0], 1, 1).unwrap();
        assert_eq!(m.to_dense().values(), &[1.0]);

        let e = CompressedSparseMatrix::from_triplets(&[], &[], &[], 2, 3).unwrap();
        assert_eq!(e.nnz(), 0);
        assert_eq!(e.to_dense().values(), &[0.0; 6]);
    }

    #[test]
    fn triplets_sum_duplicates_against_dense_accumulation() {
        let rows = [0usize, 0];
        let cols = [1usize, 1];
        let vals = [1.0, 2.0];
        let m = CompressedSparseMatrix::from_triplets(&rows, &cols, &vals, 1, 2).unwrap();
        // dense accumulation oracle
        let mut dense = [0.0f64; 2];
        for t in 0..rows.len() {
            dense[cols[t]] += vals[t];
        }
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.to_dense().values(), &dense);
    }

    #[test]
    fn triplets_random_match_dense_accumulation() {
        let mut rng = SeededRng::new(11);
        let (nr, nc) = (6, 5);
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut oracle = DenseMatrix::zeros(nr, nc);
        for _ in 0..40 {
            let r = rng.gen_index(nr);
            let c = rng.gen_index(nc);
            let v = rng.uniform(-2.0, 2.0);
            rows.push(r);
            cols.push(c);
            vals.push(v);
            oracle.set(r, c, oracle.get(r, c) + v);
        }
        let m = CompressedSparseMatrix::from_triplets(&rows, &cols, &vals, nr, nc).unwrap();
        for (a, b) in m.to_dense().values().iter().zip(oracle.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        // canonical form
        for i in 0..nr {
            let (cs, _) = m.row(i);
            for w in cs.windows(2) {
                assert!(w[0] < w[1]);
            }
        }
    }

    #[test]
    fn triplets_out_of_bounds_rejected() {
        assert!(matches!(
            CompressedSparseMatrix::from_triplets(&[0], &[3], &[1.0], 1, 2),
            Err(CoreError::IndexOutOfBounds(_))
        ));
    }

    #[test]
    fn spmm_identity_zero_and_reference() {
        let mut rng = SeededRng::new(3);
        let d = random_dense(&mut rng, 4, 3);
        let id = CompressedSparseMatrix::identity(4);
        assert_eq!(id.spmm(&d).unwrap(), d);

        let z = CompressedSparseMatrix::empty(4, 4);
        assert_eq!(z.spmm(&d).unwrap().values(), &[0.0; 12]);

        let a =
            CompressedSparseMatrix::from_triplets(&[0, 1], &[1, 0], &[2.0, 1.0], 2, 2).unwrap();
        let x = DenseMatrix::from_vec(2, 1, vec![1.0, 3.0]).unwrap();
        assert_eq!(a.spmm(&x).unwrap().values(), &[6.0, 1.0]);
    }

    #[test]
    fn spmm_matches_dense_reference_and_is_linear() {
        let mut rng = SeededRng::new(17);
        let a = CompressedSparseMatrix::from_triplets(
            &[0, 0, 1, 2, 3, 4],
            &[1, 3, 2, 0, 3, 1],
            &[0.5, -1.5, 2.0, 1.0, 0.25, -0.75],
            5,
            4,
        )
        .unwrap();
        let d1 = random_dense(&mut rng, 4, 3);
        let d2 = random_dense(&mut rng, 4, 3);

        let reference = a.to_dense().matmul(&d1).unwrap();
        let fast = a.spmm(&d1).unwrap();
        for (x, y) in fast.values().iter().zip(reference.values()) {
            assert!((x - y).abs() < 1e-12);
        }

        // linearity: A(2 d1 + 3 d2) = 2 A d1 + 3 A d2
        let mut combo = d1.clone();
        combo.scale(2.0);
        combo.add_scaled_assign(&d2, 3.0).unwrap();
        let lhs = a.spmm(&combo).unwrap();
        let mut rhs = a.spmm(&d1).unwrap();
        rhs.scale(2.0);
        rhs.add_scaled_assign(&a.spmm(&d2).unwrap(), 3.0).unwrap();
        for (x, y) in lhs.values().iter().zip(rhs.values()) {
            let scale = x.abs().max(y.abs()).max(1.0);
            assert!((x - y).abs() / scale < 1e-10);
        }
    }

    #[test]
    fn spmm_t_matches_transpose() {
        let mut rng = SeededRng::new(29);
        let a = CompressedSparseMatrix::from_triplets(
            &[0, 0, 1, 2],
            &[1, 2, 0, 2],
            &[1.0, -0.5, 2.0, 4.0],
            3,
            3,
        )
        .unwrap();
        let d = random_dense(&mut rng, 3, 2);
        let fast = a.spmm_t(&d).unwrap();
        let explicit = a.transpose().spmm(&d).unwrap();
        for (x, y) in fast.values().iter().zip(explicit.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn degree_vector_basics() {
        let m = CompressedSparseMatrix::from_triplets(&[0], &[0], &[5.0], 1, 1).unwrap();
        assert_eq!(m.degree_vector(Axis::Row), vec![1.0]);

        let e = CompressedSparseMatrix::empty(2, 3);
        assert_eq!(e.degree_vector(Axis::Row), vec![0.0, 0.0]);
        assert_eq!(e.degree_vector(Axis::Col), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn sym_normalize_unit_and_known_value() {
        let m = CompressedSparseMatrix::from_triplets(&[0], &[0], &[1.0], 1, 1).unwrap();
        let n = m.sym_normalize(&[1.0], &[1.0]).unwrap();
        assert_eq!(n.values(), &[1.0]);

        let n2 = m.sym_normalize(&[4.0], &[9.0]).unwrap();
        assert!((n2.values()[0] - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn sym_normalize_random_matches_dense_oracle() {
        let mut rng = SeededRng::new(41);
        let n = 5;
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if rng.next_f64() < 0.4 {
                    rows.push(i);
                    cols.push(j);
                    vals.push(rng.uniform(0.1, 2.0));
                }
            }
        }
        let m = CompressedSparseMatrix::from_triplets(&rows, &cols, &vals, n, n).unwrap();
        let rd: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
        let cd: Vec<f64> = (0..n).map(|i| (i as f64 + 1.0) * 2.0).collect();
        let normalized = m.sym_normalize(&rd, &cd).unwrap();
        // dense oracle: D_r^{-1/2} A D_c^{-1/2}
        let dense = m.to_dense();
        for i in 0..n {
            for j in 0..n {
                let expect = dense.get(i, j) / (rd[i] * cd[j]).sqrt();
                let got = normalized.to_dense().get(i, j);
                assert!((expect - got).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sym_normalize_zero_degree_on_populated_row_errors() {
        let m = CompressedSparseMatrix::from_triplets(&[0], &[0], &[1.0], 2, 1).unwrap();
        assert!(m.sym_normalize(&[0.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn row_normalize_examples() {
        let m =
            CompressedSparseMatrix::from_triplets(&[0, 0], &[0, 1], &[2.0, 2.0], 1, 2).unwrap();
        assert_eq!(m.row_normalize().values(), &[0.5, 0.5]);

        let s = CompressedSparseMatrix::from_triplets(&[0], &[0], &[1.0], 1, 1).unwrap();
        assert_eq!(s.row_normalize().values(), &[1.0]);

        // sign-mixed row: [0.6, -0.2] -> [1.5, -0.5]
        let sm =
            CompressedSparseMatrix::from_triplets(&[0, 0], &[0, 1], &[0.6, -0.2], 1, 2).unwrap();
        let n = sm.row_normalize();
        assert!((n.values()[0] - 1.5).abs() < 1e-12);
        assert!((n.values()[1] + 0.5).abs() < 1e-12);
        assert!((n.values().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn row_normalize_degenerate_sum_falls_back_to_uniform() {
        let m = CompressedSparseMatrix::from_triplets(
            &[0, 0],
            &[0, 1],
            &[1e-13, -5e-14],
            1,
            2,
        )
        .unwrap();
        assert_eq!(m.row_normalize().values(), &[0.5, 0.5]);
    }

    #[test]
    fn cosine_topk_parallel_and_orthogonal() {
        let x = DenseMatrix::from_vec(2, 2, vec![1.0, 1.0, 2.0, 2.0]).unwrap();
        let s = blocked_cosine_topk(&x, 1, 8).unwrap();
        assert_eq!(s.row(0).0, &[1]);
        assert!((s.row(0).1[0] - 1.0).abs() < 1e-12);
        assert_eq!(s.row(1).0, &[0]);

        let o = DenseMatrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let so = blocked_cosine_topk(&o, 1, 8).unwrap();
        assert_eq!(so.row(0).1, &[0.0]);
    }

    #[test]
    fn cosine_topk_k_too_large_errors() {
        let x = DenseMatrix::zeros(3, 2);
        assert!(blocked_cosine_topk(&x, 3, 8).is_err());
    }

    /// Full dense cosine + sort oracle.
    fn brute_force_topk(x: &DenseMatrix, k: usize) -> Vec<Vec<(u32, f64)>> {
        let n = x.n_rows();
        let norms = row_norms(x);
        (0..n)
            .map(|i| {
                let mut cands: Vec<(u32, f64)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| {
                        let s = if norms[i] == 0.0 || norms[j] == 0.0 {
                            0.0
                        } else {
                            dot(x.row(i), x.row(j)) / (norms[i] * norms[j])
                        };
                        (j as u32, s)
                    })
                    .collect();
                cands.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
                cands.truncate(k);
                cands.sort_unstable_by_key(|&(c, _)| c);
                cands
            })
            .collect()
    }

    #[test]
    fn cosine_topk_matches_brute_force_oracle() {
        let mut rng = SeededRng::new(2024);
        let n = 200;
        let x = random_dense(&mut rng, n, 9);
        let k = 15;
        let fast = blocked_cosine_topk(&x, k, 37).unwrap();
        let oracle = brute_force_topk(&x, k);
        for i in 0..n {
            let (cols, vals) = fast.row(i);
            assert_eq!(cols.len(), k);
            let ocols: Vec<u32> = oracle[i].iter().map(|&(c, _)| c).collect();
            assert_eq!(cols, &ocols[..], "row {i}");
            for (p, &(_, ov)) in oracle[i].iter().enumerate() {
                assert!((vals[p] - ov).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cosine_topk_handles_zero_norm_rows() {
        let mut x = DenseMatrix::zeros(4, 3);
        x.row_mut(1).copy_from_slice(&[1.0, 0.0, 0.0]);
        x.row_mut(2).copy_from_slice(&[0.0, 1.0, 0.0]);
        let s = blocked_cosine_topk(&x, 2, 2).unwrap();
        // zero-norm row 0 ties everything at similarity 0; lowest indices win
        assert_eq!(s.row(0).0, &[1, 2]);
        assert_eq!(s.row(0).1, &[0.0, 0.0]);
    }

    #[test]
    fn topk_properties_bounds_and_no_diagonal() {
        let mut rng = SeededRng::new(77);
        for _ in 0..5 {
            let n = 20 + rng.gen_index(30);
            let x = random_dense(&mut rng, n, 4);
            let k = 1 + rng.gen_index(6);
            let s = blocked_cosine_topk(&x, k, 7).unwrap();
            for i in 0..n {
                let (cols, vals) = s.row(i);
                assert!(cols.len() <= k);
                for (&c, &v) in cols.iter().zip(vals) {
                    assert_ne!(c as usize, i);
                    assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v));
                }
            }
        }
    }

    #[test]
    fn row_stochastic_propagation_preserves_constants() {
        let mut rng = SeededRng::new(55);
        // nonnegative features give nonnegative similarities: no fallback rows
        let x = DenseMatrix::from_vec(
            12,
            4,
            (0..48).map(|_| rng.uniform(0.1, 1.0)).collect(),
        )
        .unwrap();
        let s = blocked_cosine_topk(&x, 3, 5).unwrap().row_normalize();
        let c = DenseMatrix::from_vec(12, 1, vec![2.5; 12]).unwrap();
        let out = s.spmm(&c).unwrap();
        for i in 0..12 {
            assert!((out.get(i, 0) - 2.5).abs() < 1e-9);
        }
    }
}
