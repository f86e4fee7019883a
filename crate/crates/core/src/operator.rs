// SPDX-License-Identifier: Apache-2.0
//! Row-compressed complex operators tied to an explicit basis.

use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::chain::{C64, ZERO};
use crate::error::{Result, ScarError};

/// Entries with modulus below this are never stored.
pub const STORED_ZERO: f64 = 1e-15;
/// Relative tolerance for the Hermitian flag.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Identifies the basis an operator or state lives on.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum BasisTag {
    Full { local_dim: u64, sites: usize },
    Sector { local_dim: u64, sites: usize, label: String, dim: usize },
    Blockade { sites: usize, dim: usize },
    Plain { dim: usize },
}

impl fmt::Display for BasisTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisTag::Full { local_dim, sites } => write!(f, "full(d={local_dim},N={sites})"),
            BasisTag::Sector { local_dim, sites, label, dim } => {
                write!(f, "sector[{label}](d={local_dim},N={sites},dim={dim})")
            }
            BasisTag::Blockade { sites, dim } => write!(f, "blockade(M={sites},dim={dim})"),
            BasisTag::Plain { dim } => write!(f, "plain(dim={dim})"),
        }
    }
}

/// The product-basis codes an operator is built on.
#[derive(Clone, Copy, Debug)]
pub enum CodeSet<'a> {
    /// Every code in 0..n, index equal to code.
    Range(u64),
    /// Ascending codes.
    Sorted(&'a [u64]),
}

impl CodeSet<'_> {
    pub fn len(&self) -> usize {
        match self {
            CodeSet::Range(n) => *n as usize,
            CodeSet::Sorted(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn code(&self, i: usize) -> u64 {
        match self {
            CodeSet::Range(_) => i as u64,
            CodeSet::Sorted(c) => c[i],
        }
    }

    #[inline]
    pub fn index(&self, code: u64) -> Option<usize> {
        match self {
            CodeSet::Range(n) => (code < *n).then_some(code as usize),
            CodeSet::Sorted(c) => c.binary_search(&code).ok(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
    hermitian: bool,
    basis: BasisTag,
}

impl SparseOperator {
    /// Assemble from (row, col, value) triplets; duplicates are summed and
    /// near-zeros dropped. The Hermitian flag is computed, not trusted.
    pub fn from_triplets(basis: BasisTag, dim: usize, mut triplets: Vec<(usize, usize, C64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|&&(r, c, _)| r >= dim || c >= dim) {
            return Err(ScarError::DimensionMismatch { expected: dim, got: r.max(c) + 1 });
        }
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut i = 0;
        while i < triplets.len() {
            let (r, c, mut v) = triplets[i];
            i += 1;
            while i < triplets.len() && triplets[i].0 == r && triplets[i].1 == c {
                v += triplets[i].2;
                i += 1;
            }
            if v.norm() >= STORED_ZERO {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
            }
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self::from_csr(basis, dim, row_ptr, cols, vals))
    }

    fn from_csr(basis: BasisTag, dim: usize, row_ptr: Vec<usize>, cols: Vec<usize>, vals: Vec<C64>) -> Self {
        let mut op = Self { dim, row_ptr, cols, vals, hermitian: false, basis };
        op.hermitian = op.check_hermitian();
        op
    }

    /// Build column by column: `rule(code, out)` pushes the image
    /// Σ amp |target⟩ of |code⟩. Targets outside `codes` are discarded, so on
    /// a subset this yields P·O·P.
    pub fn from_rule<F>(basis: BasisTag, codes: CodeSet<'_>, mut rule: F) -> Result<Self>
    where
        F: FnMut(u64, &mut Vec<(u64, C64)>),
    {
        let dim = codes.len();
        let mut triplets = Vec::with_capacity(dim * 4);
        let mut buf = Vec::new();
        for col in 0..dim {
            buf.clear();
            rule(codes.code(col), &mut buf);
            for &(target, v) in &buf {
                if let Some(row) = codes.index(target) {
                    triplets.push((row, col, v));
                }
            }
        }
        Self::from_triplets(basis, dim, triplets)
    }

    pub fn identity(basis: BasisTag, dim: usize) -> Self {
        Self::diagonal(basis, &vec![C64::new(1.0, 0.0); dim])
    }

    pub fn zero(basis: BasisTag, dim: usize) -> Self {
        Self::from_csr(basis, dim, vec![0; dim + 1], Vec::new(), Vec::new())
    }

    pub fn diagonal(basis: BasisTag, diag: &[C64]) -> Self {
        let dim = diag.len();
        let trip = diag.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(basis, dim, trip).expect("indices in range")
    }

    pub fn from_dense(basis: BasisTag, m: &DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(ScarError::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        let mut trip = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)].norm() >= STORED_ZERO {
                    trip.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(basis, m.nrows(), trip)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn basis(&self) -> &BasisTag {
        &self.basis
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Same matrix, different basis label (used when a basis is re-labelled
    /// by a bijection, e.g. the spin-1 → PXP dictionary).
    pub fn relabel(mut self, basis: BasisTag) -> Self {
        self.basis = basis;
        self
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        match self.cols[a..b].binary_search(&c) {
            Ok(k) => self.vals[a + k],
            Err(_) => ZERO,
        }
    }

    pub fn diagonal_values(&self) -> Vec<C64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.dim).all(|r| self.row(r).all(|(c, _)| c == r))
    }

    fn conform(&self, other: &Self) -> Result<()> {
        if self.basis != other.basis {
            return Err(ScarError::BasisMismatch { left: self.basis.to_string(), right: other.basis.to_string() });
        }
        if self.dim != other.dim {
            return Err(ScarError::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        Ok(())
    }

    /// y = A x without allocating.
    #[inline]
    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) -> Result<()> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(ScarError::DimensionMismatch { expected: self.dim, got: x.len().min(y.len()) });
        }
        for (r, yr) in y.iter_mut().enumerate() {
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut acc = ZERO;
            for k in a..b {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yr = acc;
        }
        Ok(())
    }

    pub fn matvec(&self, x: &[C64]) -> Result<Vec<C64>> {
        let mut y = vec![ZERO; self.dim];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }

    /// ⟨x|A|x⟩.
    pub fn expectation(&self, x: &[C64]) -> Result<C64> {
        let y = self.matvec(x)?;
        Ok(x.iter().zip(&y).map(|(a, b)| a.conj() * b).sum())
    }

    fn combine(&self, other: &Self, alpha: C64, beta: C64) -> Result<Self> {
        self.conform(other)?;
        let mut trip = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.dim {
            trip.extend(self.row(r).map(|(c, v)| (r, c, alpha * v)));
            trip.extend(other.row(r).map(|(c, v)| (r, c, beta * v)));
        }
        Self::from_triplets(self.basis.clone(), self.dim, trip)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(other, C64::new(1.0, 0.0), C64::new(1.0, 0.0))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(other, C64::new(1.0, 0.0), C64::new(-1.0, 0.0))
    }

    /// alpha·A + beta·B.
    pub fn linear_combination(&self, alpha: C64, other: &Self, beta: C64) -> Result<Self> {
        self.combine(other, alpha, beta)
    }

    pub fn scale(&self, s: C64) -> Self {
        let trip = (0..self.dim).flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v * s))).collect();
        Self::from_triplets(self.basis.clone(), self.dim, trip).expect("same shape")
    }

    /// Sparse product A·B (Gustavson, dense accumulator per row).
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.conform(other)?;
        let n = self.dim;
        let mut acc = vec![ZERO; n];
        let mut mark = vec![usize::MAX; n];
        let mut touched = Vec::new();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for r in 0..n {
            touched.clear();
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = ZERO;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                if acc[c].norm() >= STORED_ZERO {
                    cols.push(c);
                    vals.push(acc[c]);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(Self::from_csr(self.basis.clone(), n, row_ptr, cols, vals))
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut count = vec![0usize; n + 1];
        for &c in &self.cols {
            count[c + 1] += 1;
        }
        for i in 0..n {
            count[i + 1] += count[i];
        }
        let row_ptr = count.clone();
        let mut next = count;
        let mut cols = vec![0usize; self.nnz()];
        let mut vals = vec![ZERO; self.nnz()];
        for r in 0..n {
            for (c, v) in self.row(r) {
                let k = next[c];
                cols[k] = r;
                vals[k] = v.conj();
                next[c] += 1;
            }
        }
        Self { dim: n, row_ptr, cols, vals, hermitian: self.hermitian, basis: self.basis.clone() }
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    pub fn anticommutator(&self, other: &Self) -> Result<Self> {
        self.mul(other)?.add(&other.mul(self)?)
    }

    /// U·A·U† for the given U.
    pub fn conjugate_by(&self, u: &Self) -> Result<Self> {
        u.mul(self)?.mul(&u.adjoint())
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.vals.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Rigorous upper bound on the spectral norm, √(‖A‖₁‖A‖∞).
    pub fn norm_bound(&self) -> f64 {
        let mut col_sum = vec![0.0; self.dim];
        let mut row_max: f64 = 0.0;
        for r in 0..self.dim {
            let mut s = 0.0;
            for (c, v) in self.row(r) {
                s += v.norm();
                col_sum[c] += v.norm();
            }
            row_max = row_max.max(s);
        }
        let col_max = col_sum.into_iter().fold(0.0, f64::max);
        (row_max * col_max).sqrt()
    }

    /// Spectral-norm estimate: largest Ritz value of a short Lanczos run on A†A.
    pub fn operator_norm_estimate(&self) -> f64 {
        if self.nnz() == 0 {
            return 0.0;
        }
        let n = self.dim;
        let adj = self.adjoint();
        let steps = n.min(80);
        // Deterministic, generic start vector.
        let mut q: Vec<C64> = (0..n)
            .map(|i| {
                let t = (i as f64 + 1.0) * 0.618_033_988_749_895;
                C64::new(1.0 + 0.5 * (t - t.floor()), 0.25 * (3.0 * t).sin())
            })
            .collect();
        let nq = q.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        q.iter_mut().for_each(|v| *v /= nq);
        let mut basis: Vec<Vec<C64>> = Vec::with_capacity(steps);
        let (mut alpha, mut beta) = (Vec::new(), Vec::new());
        let mut y = vec![ZERO; n];
        let mut w = vec![ZERO; n];
        for _ in 0..steps {
            self.matvec_into(&q, &mut y).expect("square");
            adj.matvec_into(&y, &mut w).expect("square");
            basis.push(q.clone());
            alpha.push(q.iter().zip(&w).map(|(a, b)| (a.conj() * b).re).sum::<f64>());
            for _ in 0..2 {
                for v in &basis {
                    let c: C64 = v.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                    w.iter_mut().zip(v).for_each(|(x, a)| *x -= c * a);
                }
            }
            let b = w.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if b <= 1e-13 * alpha.iter().fold(0.0f64, |m, a| m.max(a.abs())) {
                break;
            }
            beta.push(b);
            q.iter_mut().zip(&w).for_each(|(x, v)| *x = v / b);
        }
        let m = alpha.len();
        let t = DMatrix::<f64>::from_fn(m, m, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j || j + 1 == i {
                beta[i.min(j)]
            } else {
                0.0
            }
        });
        t.symmetric_eigenvalues().iter().fold(0.0f64, |a, &b| a.max(b)).sqrt()
    }

    fn check_hermitian(&self) -> bool {
        let scale = self.max_abs();
        if scale == 0.0 {
            return true;
        }
        let tol = HERMITIAN_TOL * scale;
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                if (v - self.get(c, r).conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::<C64>::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Restriction to a subset of basis indices (ascending), relabelled.
    pub fn restrict(&self, indices: &[usize], basis: BasisTag) -> Result<Self> {
        let mut map = vec![usize::MAX; self.dim];
        for (new, &old) in indices.iter().enumerate() {
            if old >= self.dim {
                return Err(ScarError::DimensionMismatch { expected: self.dim, got: old + 1 });
            }
            map[old] = new;
        }
        let mut trip = Vec::new();
        for (new_r, &old_r) in indices.iter().enumerate() {
            for (c, v) in self.row(old_r) {
                if map[c] != usize::MAX {
                    trip.push((new_r, map[c], v));
                }
            }
        }
        Self::from_triplets(basis, indices.len(), trip)
    }

    /// Reorder the basis: old index i becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize], basis: BasisTag) -> Result<Self> {
        if perm.len() != self.dim {
            return Err(ScarError::DimensionMismatch { expected: self.dim, got: perm.len() });
        }
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                trip.push((perm[r], perm[c], v));
            }
        }
        Self::from_triplets(basis, self.dim, trip)
    }
}
