//! The selector matrix B, the Gram matrix A = B'B/n, their norms, and the
//! quadratic-form identities, as runnable diagnostics.
//!
//! B has unit diagonal and -1/k at each of the k neighbor positions, so By is
//! the vector of leave-one-out residuals and y'Ay = ||By||^2 / n equals the
//! LOOCV curve value f(k). A is kept sparse; above [`EXPLICIT_A_LIMIT`]
//! points it is never materialized and every diagnostic works through B.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, CHUNK};
use crate::neighbors::{in_degree, NeighborTable};
use crate::rng::{self, tag};

/// Sparse n x n matrix with b_ii = 1 and b_ij = -1/k for j in N_k(i).
/// Exactly k + 1 nonzeros per row; every row sums to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorMatrix {
    n: usize,
    k: usize,
    /// Row-major sorted column indices: row i holds {i} union N_k(i).
    row_cols: Vec<u32>,
    /// Transpose adjacency: rows containing each column, ascending.
    col_ptr: Vec<u32>,
    col_rows: Vec<u32>,
}

impl SelectorMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn nnz(&self) -> usize {
        self.n * (self.k + 1)
    }

    pub fn row_cols(&self, i: usize) -> &[u32] {
        let w = self.k + 1;
        &self.row_cols[i * w..(i + 1) * w]
    }

    fn col_rows(&self, j: usize) -> &[u32] {
        &self.col_rows[self.col_ptr[j] as usize..self.col_ptr[j + 1] as usize]
    }

    /// Entry value at (i, col), assuming col is in row i's support.
    #[inline]
    fn value(&self, i: usize, col: u32) -> f64 {
        if col as usize == i {
            1.0
        } else {
            -1.0 / self.k as f64
        }
    }

    /// Number of rows j != l with l in N_k(j): the in-degree of l.
    pub fn col_in_degree(&self, l: usize) -> usize {
        self.col_rows(l).len() - 1
    }

    /// By: the leave-one-out residual vector y_i - mean over N_k(i).
    pub fn residuals(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                actual: y.len(),
            });
        }
        Ok(exec::map_indices(self.n, true, |i| {
            let mut s = 0.0;
            for &c in self.row_cols(i) {
                if c as usize != i {
                    s += y[c as usize];
                }
            }
            y[i] - s / self.k as f64
        }))
    }

    /// B'x via the transpose adjacency, gathered per output index.
    fn transpose_apply(&self, x: &[f64]) -> Vec<f64> {
        exec::map_indices(self.n, true, |j| {
            let mut s = 0.0;
            for &r in self.col_rows(j) {
                if r as usize != j {
                    s += x[r as usize];
                }
            }
            x[j] - s / self.k as f64
        })
    }

    /// <b_i, b_l> by merging the two sorted supports.
    pub fn row_dot(&self, i: usize, l: usize) -> f64 {
        let (ra, rb) = (self.row_cols(i), self.row_cols(l));
        let (mut a, mut b) = (0, 0);
        let mut acc = 0.0;
        while a < ra.len() && b < rb.len() {
            match ra[a].cmp(&rb[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.value(i, ra[a]) * self.value(l, rb[b]);
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row_cols(i).iter().map(|&c| self.value(i, c)).sum()
    }

    fn row_norm_sq(&self, i: usize) -> f64 {
        self.row_cols(i)
            .iter()
            .map(|&c| {
                let v = self.value(i, c);
                v * v
            })
            .sum()
    }
}

/// Build B for a fixed k from the neighbor table.
pub fn build_b(table: &NeighborTable, k: usize) -> Result<SelectorMatrix> {
    table.check_k(k)?;
    let n = table.len();
    let w = k + 1;

    let mut row_cols = Vec::with_capacity(n * w);
    for i in 0..n {
        let start = row_cols.len();
        row_cols.push(i as u32);
        row_cols.extend_from_slice(&table.row(i)[..k]);
        row_cols[start..].sort_unstable();
    }

    let mut counts = vec![0u32; n + 1];
    for &c in &row_cols {
        counts[c as usize + 1] += 1;
    }
    let mut col_ptr = counts;
    for j in 0..n {
        col_ptr[j + 1] += col_ptr[j];
    }
    let mut fill = col_ptr.clone();
    let mut col_rows = vec![0u32; n * w];
    for i in 0..n {
        for &c in &row_cols[i * w..(i + 1) * w] {
            col_rows[fill[c as usize] as usize] = i as u32;
            fill[c as usize] += 1;
        }
    }

    Ok(SelectorMatrix {
        n,
        k,
        row_cols,
        col_ptr,
        col_rows,
    })
}

/// Above this many points A is not materialized; diagnostics run through B.
pub const EXPLICIT_A_LIMIT: usize = 2048;

/// The symmetric positive semidefinite matrix A = B'B / n.
#[derive(Debug)]
pub struct GramMatrix {
    b: SelectorMatrix,
    /// Sorted sparse rows, built on first use and only for
    /// n <= EXPLICIT_A_LIMIT.
    rows: std::sync::OnceLock<Option<Vec<Vec<(u32, f64)>>>>,
}

/// A = B'B/n, stored symmetric.
pub fn build_a(b: SelectorMatrix) -> GramMatrix {
    GramMatrix {
        b,
        rows: std::sync::OnceLock::new(),
    }
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.b.n
    }

    pub fn k(&self) -> usize {
        self.b.k
    }

    pub fn selector(&self) -> &SelectorMatrix {
        &self.b
    }

    pub fn is_explicit(&self) -> bool {
        self.b.n <= EXPLICIT_A_LIMIT
    }

    /// Explicit entries, accumulated in a fixed order so a_ij and a_ji
    /// receive identical addition sequences and the stored matrix is exactly
    /// symmetric. None above the size limit.
    fn explicit_rows(&self) -> Option<&Vec<Vec<(u32, f64)>>> {
        self.rows
            .get_or_init(|| {
                let n = self.b.n;
                (n <= EXPLICIT_A_LIMIT).then(|| {
                    let mut acc: Vec<std::collections::BTreeMap<u32, f64>> =
                        vec![Default::default(); n];
                    for r in 0..n {
                        let cols = self.b.row_cols(r);
                        for &p in cols {
                            let vp = self.b.value(r, p);
                            let row = &mut acc[p as usize];
                            for &q in cols {
                                *row.entry(q).or_insert(0.0) += vp * self.b.value(r, q);
                            }
                        }
                    }
                    let n_f = n as f64;
                    acc.into_iter()
                        .map(|row| row.into_iter().map(|(q, v)| (q, v / n_f)).collect())
                        .collect()
                })
            })
            .as_ref()
    }

    /// a_ij. Reads the stored entry when A is explicit, otherwise computes
    /// the column inner product through B.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if let Some(rows) = self.explicit_rows() {
            return match rows[i].binary_search_by_key(&(j as u32), |e| e.0) {
                Ok(pos) => rows[i][pos].1,
                Err(_) => 0.0,
            };
        }
        let (ca, cb) = (self.b.col_rows(i), self.b.col_rows(j));
        let (mut a, mut b) = (0, 0);
        let mut acc = 0.0;
        while a < ca.len() && b < cb.len() {
            match ca[a].cmp(&cb[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    let r = ca[a] as usize;
                    acc += self.b.value(r, i as u32) * self.b.value(r, j as u32);
                    a += 1;
                    b += 1;
                }
            }
        }
        acc / self.b.n as f64
    }

    /// tr(A) = (1/n) sum_i ||b_i||^2; always (1 + 1/k) up to rounding.
    pub fn trace(&self) -> f64 {
        let partials = exec::map_chunks(self.b.n, CHUNK, true, |range| {
            vec![range.map(|i| self.b.row_norm_sq(i)).fold(0.0, |a, v| a + v)]
        });
        exec::merge_partials(partials)[0] / self.b.n as f64
    }

    /// Exact sum of squared stored entries. Without an explicit A this
    /// enumerates overlapping row pairs of B:
    /// ||A||_F^2 = (1/n^2) sum_{i,j} <b_i, b_j>^2.
    pub fn frobenius_sq(&self) -> f64 {
        if let Some(rows) = self.explicit_rows() {
            let partials = exec::map_chunks(rows.len(), CHUNK, true, |range| {
                let mut acc = 0.0;
                for i in range {
                    for &(_, v) in &rows[i] {
                        acc += v * v;
                    }
                }
                vec![acc]
            });
            return exec::merge_partials(partials)[0];
        }
        let b = &self.b;
        let partials = exec::map_chunks(b.n, CHUNK, true, |range| {
            let mut acc = 0.0;
            let mut overlapping: Vec<u32> = Vec::new();
            for i in range {
                let self_dot = b.row_norm_sq(i);
                acc += self_dot * self_dot;
                overlapping.clear();
                for &c in b.row_cols(i) {
                    overlapping.extend_from_slice(b.col_rows(c as usize));
                }
                overlapping.sort_unstable();
                overlapping.dedup();
                for &j in &overlapping {
                    // count each unordered pair once from the smaller index
                    if (j as usize) > i {
                        let dot = b.row_dot(i, j as usize);
                        acc += 2.0 * dot * dot;
                    }
                }
            }
            vec![acc]
        });
        exec::merge_partials(partials)[0] / (b.n as f64 * b.n as f64)
    }

    /// Ax = B'(Bx)/n without forming A.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let bx = self.b.residuals(x)?;
        let mut out = self.b.transpose_apply(&bx);
        let n_f = self.b.n as f64;
        for v in &mut out {
            *v /= n_f;
        }
        Ok(out)
    }

    /// y'Ay computed through the sparse B as ||By||^2 / n.
    pub fn quadratic_form(&self, y: &[f64]) -> Result<f64> {
        let r = self.b.residuals(y)?;
        let partials = exec::map_chunks(r.len(), CHUNK, true, |range| {
            vec![r[range].iter().map(|v| v * v).fold(0.0, |a, v| a + v)]
        });
        Ok(exec::merge_partials(partials)[0] / self.b.n as f64)
    }

    /// Largest eigenvalue of the PSD matrix A by power iteration on
    /// x -> B'(Bx)/n. Deterministic all-ones start; restarts from a seeded
    /// random vector when the Rayleigh quotient stalls below the largest
    /// diagonal entry (the all-ones vector lies in B's kernel).
    pub fn two_norm(&self, tol: f64) -> Result<f64> {
        assert!(tol > 0.0, "tolerance must be positive");
        let n = self.b.n;
        let max_diag = (0..n)
            .map(|j| self.entry_diag(j))
            .fold(f64::NEG_INFINITY, f64::max);

        const MAX_ITERS: usize = 10_000;
        const MAX_RESTARTS: usize = 4;

        let mut x = vec![1.0 / (n as f64).sqrt(); n];
        let mut lambda_prev = f64::NAN;
        let mut restarts = 0;
        let mut last_residual = f64::INFINITY;

        for _iter in 0..MAX_ITERS {
            let y = self.apply(&x).expect("length matches");
            let lambda: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            let norm_y: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();

            let mut restart = norm_y == 0.0;
            if !restart && !lambda_prev.is_nan() {
                last_residual = (lambda - lambda_prev).abs();
                if last_residual <= tol * lambda.abs().max(f64::MIN_POSITIVE) {
                    if lambda >= max_diag * (1.0 - 1e-6) {
                        return Ok(lambda);
                    }
                    // converged to a subdominant component; reseed
                    restart = true;
                }
            }

            if restart {
                if restarts >= MAX_RESTARTS {
                    break;
                }
                let mut rng = rng::stream(restarts as u64, &[tag::POWER_RESTART]);
                use rand::Rng;
                x = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
                let norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                for v in &mut x {
                    *v /= norm;
                }
                lambda_prev = f64::NAN;
                restarts += 1;
                continue;
            }

            lambda_prev = lambda;
            for (xv, yv) in x.iter_mut().zip(&y) {
                *xv = yv / norm_y;
            }
        }
        Err(Error::NoConvergence {
            iterations: MAX_ITERS,
            residual: last_residual,
        })
    }

    /// a_jj = (1 + in_degree(j)/k^2) / n, from the transpose adjacency.
    fn entry_diag(&self, j: usize) -> f64 {
        let k = self.b.k as f64;
        (1.0 + self.b.col_in_degree(j) as f64 / (k * k)) / self.b.n as f64
    }
}

/// E[eps' A eps] = (1 + 1/k) * E[eps^2] for i.i.d. mean-zero noise.
pub fn expected_quadratic_noise(k: usize, sigma_sq: f64) -> f64 {
    assert!(k >= 1, "k must be >= 1");
    assert!(sigma_sq >= 0.0, "variance must be nonnegative");
    (1.0 + 1.0 / k as f64) * sigma_sq
}

/// Diagnostic summary emitted as JSON. The n-scaled norms are the empirical
/// form of the O(1/n) norm bounds; the constant depends only on d.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralReport {
    pub format_version: u32,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub frobenius_sq: f64,
    pub two_norm: f64,
    pub trace: f64,
    pub max_in_degree: usize,
    pub n_frobenius_sq: f64,
    pub n_two_norm: f64,
}

/// Build B and A for one k and collect the report.
pub fn diagnostics(table: &NeighborTable, d: usize, k: usize, tol: f64) -> Result<SpectralReport> {
    let b = build_b(table, k)?;
    let a = build_a(b);
    let frob = a.frobenius_sq();
    let two = a.two_norm(tol)?;
    let trace = a.trace();
    let max_in_degree = in_degree(table, k)?.into_iter().max().unwrap_or(0);
    let n = table.len();
    Ok(SpectralReport {
        format_version: crate::dataset::FORMAT_VERSION,
        n,
        d,
        k,
        frobenius_sq: frob,
        two_norm: two,
        trace,
        max_in_degree,
        n_frobenius_sq: n as f64 * frob,
        n_two_norm: n as f64 * two,
    })
}
