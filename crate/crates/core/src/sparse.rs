//! Compressed sparse row matrices with the handful of kernels the rate and
//! simulation code needs.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// CSR matrix in canonical form: columns sorted within each row, no
/// duplicates and no explicitly stored zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseMatrix<T> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, row_ptr: vec![0; n_rows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![T::one(); n])
    }

    /// Square diagonal matrix; zeros on the diagonal are dropped.
    pub fn from_diagonal(d: &[T]) -> Self {
        let n = d.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (i, &v) in d.iter().enumerate() {
            if v != T::zero() {
                col_idx.push(i);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self { n_rows: n, n_cols: n, row_ptr, col_idx, values }
    }

    /// Builds from `(row, col, value)` triples. Zero values are discarded,
    /// duplicates and out-of-range indices are rejected.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, T)>,
    {
        let mut trip: Vec<(usize, usize, T)> = Vec::new();
        for (r, c, v) in entries {
            if r >= n_rows || c >= n_cols {
                return Err(Error::IndexOutOfBounds { row: r, col: c, n_rows, n_cols });
            }
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite entry at ({r}, {c})")));
            }
            trip.push((r, c, v));
        }
        trip.sort_by_key(|t| (t.0, t.1));
        for w in trip.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::DuplicateEntry { what: "matrix".into(), row: w[0].0, col: w[0].1 });
            }
        }
        Ok(Self::from_sorted_unique(n_rows, n_cols, trip))
    }

    fn from_sorted_unique(n_rows: usize, n_cols: usize, trip: Vec<(usize, usize, T)>) -> Self {
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(trip.len());
        let mut values = Vec::with_capacity(trip.len());
        for &(r, c, v) in &trip {
            if v == T::zero() {
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n_rows, n_cols, row_ptr, col_idx, values }
    }

    pub fn from_dense(rows: &[Vec<T>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::DimensionMismatch("ragged dense matrix".into()));
        }
        let trip = rows.iter().enumerate().flat_map(|(i, r)| r.iter().enumerate().map(move |(j, &v)| (i, j, v)));
        Self::from_triplets(n_rows, n_cols, trip)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); self.n_cols]; self.n_rows];
        for (i, j, v) in self.triplets() {
            out[i][j] = v;
        }
        out
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_empty()
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &x)| (i, j, x))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if i >= self.n_rows {
            return T::zero();
        }
        let (c, v) = self.row(i);
        match c.binary_search(&j) {
            Ok(k) => v[k],
            Err(_) => T::zero(),
        }
    }

    /// Writes one entry; a zero value removes it.
    pub fn set(&mut self, i: usize, j: usize, value: T) -> Result<()> {
        if i >= self.n_rows || j >= self.n_cols {
            return Err(Error::IndexOutOfBounds { row: i, col: j, n_rows: self.n_rows, n_cols: self.n_cols });
        }
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.col_idx[a..b].binary_search(&j) {
            Ok(k) => {
                if value == T::zero() {
                    self.col_idx.remove(a + k);
                    self.values.remove(a + k);
                    for p in &mut self.row_ptr[i + 1..] {
                        *p -= 1;
                    }
                } else {
                    self.values[a + k] = value;
                }
            }
            Err(k) => {
                if value != T::zero() {
                    self.col_idx.insert(a + k, j);
                    self.values.insert(a + k, value);
                    for p in &mut self.row_ptr[i + 1..] {
                        *p += 1;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn remove(&mut self, i: usize, j: usize) -> Result<()> {
        self.set(i, j, T::zero())
    }

    pub fn map_values(&self, f: impl Fn(T) -> T) -> Self {
        let trip = self.triplets().map(|(i, j, v)| (i, j, f(v))).collect();
        Self::from_sorted_unique(self.n_rows, self.n_cols, trip)
    }

    /// Entrywise sum; both operands must share dimensions.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} plus {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut trip = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n_rows {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                if q == cb.len() || (p < ca.len() && ca[p] < cb[q]) {
                    trip.push((i, ca[p], va[p]));
                    p += 1;
                } else if p == ca.len() || cb[q] < ca[p] {
                    trip.push((i, cb[q], vb[q]));
                    q += 1;
                } else {
                    trip.push((i, ca[p], va[p] + vb[q]));
                    p += 1;
                    q += 1;
                }
            }
        }
        Ok(Self::from_sorted_unique(self.n_rows, self.n_cols, trip))
    }

    /// Entrywise absolute value.
    pub fn abs(&self) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v = v.abs();
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        self.map_values(|v| v * s)
    }

    /// Copy with every diagonal entry removed.
    pub fn off_diagonal(&self) -> Self {
        let trip = self.triplets().filter(|&(i, j, _)| i != j).collect();
        Self::from_sorted_unique(self.n_rows, self.n_cols, trip)
    }

    /// Diagonal part as a dense vector of length `min(n_rows, n_cols)`.
    pub fn diag(&self) -> Vec<T> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    /// True when every stored entry sits at some `(i, i)`.
    pub fn is_diagonal(&self) -> bool {
        self.triplets().all(|(i, j, _)| i == j)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `sup_i |A_ii|`.
    pub fn max_abs_diag(&self) -> T {
        self.diag().into_iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `sup_i sum_j |A_ij|`.
    pub fn max_abs_row_sum(&self) -> T {
        (0..self.n_rows).map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<T>()).fold(T::zero(), T::max)
    }

    /// `max_i sqrt(sum_j A_ij^2)`.
    pub fn max_row_norm(&self) -> T {
        (0..self.n_rows).map(|i| self.row(i).1.iter().map(|&v| v * v).sum::<T>()).fold(T::zero(), T::max).sqrt()
    }

    /// Largest number of stored entries in any row.
    pub fn max_row_nnz(&self) -> usize {
        (0..self.n_rows).map(|i| self.row_ptr[i + 1] - self.row_ptr[i]).max().unwrap_or(0)
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &j in &self.col_idx {
            counts[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for i in 0..self.n_rows {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                let p = next[j];
                col_idx[p] = i;
                values[p] = x;
                next[j] += 1;
            }
        }
        Self { n_rows: self.n_cols, n_cols: self.n_rows, row_ptr, col_idx, values }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.n_cols);
        for (i, yi) in y.iter_mut().enumerate().take(self.n_rows) {
            let (c, v) = self.row(i);
            let mut s = T::zero();
            for (&j, &a) in c.iter().zip(v) {
                s += a * x[j];
            }
            *yi = s;
        }
    }

    /// Sparse product `self * rhs` (Gustavson).
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.n_cols != rhs.n_rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.n_rows, self.n_cols, rhs.n_rows, rhs.n_cols
            )));
        }
        let mut acc = vec![T::zero(); rhs.n_cols];
        let mut mark = vec![usize::MAX; rhs.n_cols];
        let mut row_ptr = vec![0usize];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut touched = Vec::new();
        for i in 0..self.n_rows {
            touched.clear();
            let (ca, va) = self.row(i);
            for (&k, &a) in ca.iter().zip(va) {
                let (cb, vb) = rhs.row(k);
                for (&j, &b) in cb.iter().zip(vb) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = T::zero();
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                if acc[j] != T::zero() {
                    col_idx.push(j);
                    values.push(acc[j]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { n_rows: self.n_rows, n_cols: rhs.n_cols, row_ptr, col_idx, values })
    }

    /// Diagonal of `A C A'` without forming the product; `C` must be
    /// `n_cols x n_cols`.
    pub fn diag_sandwich(&self, c: &Self) -> Result<Vec<T>> {
        if c.n_rows != self.n_cols || c.n_cols != self.n_cols {
            return Err(Error::DimensionMismatch(format!(
                "sandwich of {}x{} around {}x{}",
                self.n_rows, self.n_cols, c.n_rows, c.n_cols
            )));
        }
        let mut w = vec![T::zero(); self.n_cols];
        let mut out = vec![T::zero(); self.n_rows];
        for (i, o) in out.iter_mut().enumerate() {
            let (ca, va) = self.row(i);
            for (&k, &a) in ca.iter().zip(va) {
                w[k] = a;
            }
            let mut s = T::zero();
            for (&j, &aj) in ca.iter().zip(va) {
                let (cc, vc) = c.row(j);
                let mut t = T::zero();
                for (&k, &ck) in cc.iter().zip(vc) {
                    t += ck * w[k];
                }
                s += aj * t;
            }
            for &k in ca {
                w[k] = T::zero();
            }
            *o = s;
        }
        Ok(out)
    }

    /// Relabels rows and columns: entry `(i, j)` moves to `(pr[i], pc[j])`.
    pub fn permute(&self, pr: &[usize], pc: &[usize]) -> Result<Self> {
        if pr.len() != self.n_rows || pc.len() != self.n_cols {
            return Err(Error::DimensionMismatch("permutation length".into()));
        }
        Self::from_triplets(self.n_rows, self.n_cols, self.triplets().map(|(i, j, v)| (pr[i], pc[j], v)))
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.n_rows == self.n_cols
            && self.triplets().all(|(i, j, v)| (self.get(j, i) - v).abs() <= tol * v.abs().max(T::one()))
    }

    /// Converts the scalar type.
    pub fn cast<U: Scalar>(&self) -> SparseMatrix<U> {
        SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|v| U::lit(v.f64())).collect(),
        }
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (n, k, m) = (a.len(), b.len(), b.first().map_or(0, |r| r.len()));
        let mut c = vec![vec![0.0; m]; n];
        for i in 0..n {
            for l in 0..k {
                for j in 0..m {
                    c[i][j] += a[i][l] * b[l][j];
                }
            }
        }
        c
    }

    #[test]
    fn rejects_duplicates_and_bounds() {
        let e = SparseMatrix::<f64>::from_triplets(2, 2, [(0, 1, 1.0), (0, 1, 2.0)]);
        assert!(matches!(e, Err(Error::DuplicateEntry { row: 0, col: 1, .. })));
        let e = SparseMatrix::<f64>::from_triplets(2, 2, [(2, 0, 1.0)]);
        assert!(matches!(e, Err(Error::IndexOutOfBounds { .. })));
    }

    #[test]
    fn zeros_dropped() {
        let m = SparseMatrix::<f64>::from_triplets(3, 3, [(0, 0, 0.0), (1, 2, 3.0)]).unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(1, 2), 3.0);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn norms() {
        let m = SparseMatrix::<f64>::from_dense(&[vec![-1.0, 2.0], vec![0.5, -3.0]]).unwrap();
        assert_eq!(m.max_abs_diag(), 3.0);
        assert_eq!(m.max_abs_row_sum(), 3.5);
        assert_eq!(m.off_diagonal().diag(), vec![0.0, 0.0]);
        assert!(!m.is_diagonal());
    }

    #[test]
    fn transpose_rectangular() {
        let m = SparseMatrix::<f64>::from_triplets(2, 3, [(0, 2, 1.0), (1, 0, 2.0)]).unwrap();
        let t = m.transpose();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.get(2, 0), 1.0);
        assert_eq!(t.get(0, 1), 2.0);
        assert_eq!(t.transpose(), m);
    }

    fn arb_dense(n: usize, m: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(prop_oneof![3 => Just(0.0), 2 => -2.0..2.0f64], m), n)
    }

    proptest! {
        #[test]
        fn set_remove_roundtrip(d in arb_dense(4, 5), i in 0usize..4, j in 0usize..5, v in 0.1..3.0f64) {
            let mut m = SparseMatrix::from_dense(&d).unwrap();
            m.remove(i, j).unwrap();
            let base = m.clone();
            m.set(i, j, v).unwrap();
            prop_assert_eq!(m.get(i, j), v);
            m.remove(i, j).unwrap();
            prop_assert_eq!(m, base);
        }

        #[test]
        fn matmul_matches_dense(a in arb_dense(4, 3), b in arb_dense(3, 5)) {
            let c = SparseMatrix::from_dense(&a).unwrap().matmul(&SparseMatrix::from_dense(&b).unwrap()).unwrap();
            let d = dense_mul(&a, &b);
            for i in 0..4 { for j in 0..5 {
                prop_assert!((c.get(i, j) - d[i][j]).abs() < 1e-12);
            }}
        }

        #[test]
        fn sandwich_matches_dense(a in arb_dense(4, 5), c in arb_dense(5, 5)) {
            let s = SparseMatrix::from_dense(&a).unwrap()
                .diag_sandwich(&SparseMatrix::from_dense(&c).unwrap()).unwrap();
            let at: Vec<Vec<f64>> = (0..5).map(|j| (0..4).map(|i| a[i][j]).collect()).collect();
            let d = dense_mul(&dense_mul(&a, &c), &at);
            for i in 0..4 {
                prop_assert!((s[i] - d[i][i]).abs() < 1e-12);
            }
        }

        #[test]
        fn matvec_matches_dense(a in arb_dense(3, 4), x in proptest::collection::vec(-1.0..1.0f64, 4)) {
            let y = SparseMatrix::from_dense(&a).unwrap().matvec(&x);
            for i in 0..3 {
                let e: f64 = (0..4).map(|j| a[i][j] * x[j]).sum();
                prop_assert!((y[i] - e).abs() < 1e-12);
            }
        }
    }
}
