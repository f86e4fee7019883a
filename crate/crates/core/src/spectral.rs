// SPDX-License-Identifier: Apache-2.0
//! Exact diagonalization (dense or Lanczos) and level-spacing statistics.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{C64, ZERO};
use crate::error::{Result, ScarError};
use crate::operator::{BasisTag, SparseOperator};
use crate::state::{dot, norm, StateVector};

pub const DEFAULT_DENSE_CAP: usize = 12_000;
pub const DENSE_CAP_ENV: &str = "SCARLAB_DENSE_CAP";

/// Dense-diagonalization size limit, overridable through the environment.
pub fn dense_cap() -> usize {
    std::env::var(DENSE_CAP_ENV).ok().and_then(|s| s.trim().parse().ok()).unwrap_or(DEFAULT_DENSE_CAP)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumEnd {
    Lowest,
    Highest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagMode {
    Dense { vectors: bool },
    Extremal { count: usize, end: SpectrumEnd },
}

#[derive(Clone, Debug)]
pub struct DiagOptions {
    pub dense_cap: usize,
    /// Lanczos residual tolerance relative to the operator scale.
    pub lanczos_tol: f64,
    pub seed: u64,
}

impl Default for DiagOptions {
    fn default() -> Self {
        DiagOptions { dense_cap: dense_cap(), lanczos_tol: 1e-11, seed: 0x5eed_1a2c }
    }
}

#[derive(Clone, Debug)]
pub struct SpectralData {
    eigenvalues: Vec<f64>,
    eigenvectors: Option<DMatrix<C64>>,
    residuals: Vec<f64>,
    basis: BasisTag,
    spectral_radius: f64,
}

impl SpectralData {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> Option<&DMatrix<C64>> {
        self.eigenvectors.as_ref()
    }

    /// ‖Hv − Ev‖ per pair; empty when only eigenvalues were requested.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn basis(&self) -> &BasisTag {
        &self.basis
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn eigenvector(&self, i: usize) -> Result<StateVector> {
        let v = self.eigenvectors.as_ref().ok_or(ScarError::MissingEigenvectors)?;
        if i >= v.ncols() {
            return Err(ScarError::DimensionMismatch { expected: v.ncols(), got: i });
        }
        Ok(StateVector::new(self.basis.clone(), v.column(i).iter().copied().collect()))
    }

    /// CSV with header `index,eigenvalue,residual`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,eigenvalue,residual\n");
        for (i, e) in self.eigenvalues.iter().enumerate() {
            let _ = match self.residuals.get(i) {
                Some(r) => writeln!(out, "{i},{e:?},{r:?}"),
                None => writeln!(out, "{i},{e:?},"),
            };
        }
        out
    }
}

pub fn diagonalize(op: &SparseOperator, mode: DiagMode) -> Result<SpectralData> {
    diagonalize_with(op, mode, &DiagOptions::default())
}

pub fn diagonalize_with(op: &SparseOperator, mode: DiagMode, opts: &DiagOptions) -> Result<SpectralData> {
    if !op.is_hermitian() {
        return Err(ScarError::NotHermitian);
    }
    let n = op.dim();
    if n == 0 {
        return Err(ScarError::Sector(format!("cannot diagonalize an empty block ({})", op.basis())));
    }
    match mode {
        DiagMode::Dense { vectors } => {
            if n > opts.dense_cap {
                return Err(ScarError::DenseCapExceeded { dim: n, cap: opts.dense_cap });
            }
            let (vals, vecs) = dense_eigen(op, vectors);
            let radius = vals.iter().fold(0.0f64, |m, e| m.max(e.abs()));
            let residuals = match &vecs {
                Some(v) => residuals(op, &vals, v)?,
                None => Vec::new(),
            };
            Ok(SpectralData { eigenvalues: vals, eigenvectors: vecs, residuals, basis: op.basis().clone(), spectral_radius: radius })
        }
        DiagMode::Extremal { count, end } => {
            let count = count.min(n);
            let (vals, vecs) = match end {
                SpectrumEnd::Lowest => lanczos_lowest(op, count, opts.lanczos_tol, opts.seed)?,
                SpectrumEnd::Highest => {
                    let (v, x) = lanczos_lowest(&op.scale(C64::new(-1.0, 0.0)), count, opts.lanczos_tol, opts.seed)?;
                    let mut pairs: Vec<(f64, Vec<C64>)> = v.into_iter().map(|e| -e).zip(x).collect();
                    pairs.reverse();
                    pairs.into_iter().unzip()
                }
            };
            let mat = DMatrix::from_fn(n, vals.len(), |r, c| vecs[c][r]);
            let residuals = residuals(op, &vals, &mat)?;
            let radius = op.operator_norm_estimate();
            Ok(SpectralData { eigenvalues: vals, eigenvectors: Some(mat), residuals, basis: op.basis().clone(), spectral_radius: radius })
        }
    }
}

fn dense_eigen(op: &SparseOperator, vectors: bool) -> (Vec<f64>, Option<DMatrix<C64>>) {
    let m = op.to_dense();
    let n = m.nrows();
    // Real-symmetric blocks (θ = 0, k = 0) take the cheaper real path.
    let real = m.iter().all(|z| z.im == 0.0);
    let (vals, vecs): (DVector<f64>, Option<DMatrix<C64>>) = match (real, vectors) {
        (true, true) => {
            let e = m.map(|z| z.re).symmetric_eigen();
            (e.eigenvalues, Some(e.eigenvectors.map(|x| C64::new(x, 0.0))))
        }
        (true, false) => (m.map(|z| z.re).symmetric_eigenvalues(), None),
        (false, true) => {
            let e = m.symmetric_eigen();
            (e.eigenvalues, Some(e.eigenvectors))
        }
        (false, false) => (m.symmetric_eigenvalues(), None),
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let vecs = vecs.map(|v| DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]));
    (sorted, vecs)
}

fn residuals(op: &SparseOperator, vals: &[f64], vecs: &DMatrix<C64>) -> Result<Vec<f64>> {
    (0..vals.len())
        .into_par_iter()
        .map(|i| {
            let x: Vec<C64> = vecs.column(i).iter().copied().collect();
            let hx = op.matvec(&x)?;
            Ok(hx.iter().zip(&x).map(|(h, v)| (h - v * vals[i]).norm_sqr()).sum::<f64>().sqrt())
        })
        .collect()
}

fn axpy(a: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Two passes of classical Gram-Schmidt against an orthonormal set.
fn orthogonalize(v: &mut [C64], basis: &[Vec<C64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            axpy(-c, q, v);
        }
    }
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng, against: &[Vec<C64>]) -> Vec<C64> {
    loop {
        let mut v: Vec<C64> = (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        orthogonalize(&mut v, against);
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return v;
        }
    }
}

struct Ritz {
    values: Vec<f64>,
    vectors: Vec<Vec<C64>>,
    /// Leading Ritz pairs (ascending) whose residual bound meets the tolerance.
    converged: usize,
}

/// One Lanczos cycle with full reorthogonalization, deflated against `locked`.
fn lanczos_cycle(op: &SparseOperator, start: Vec<C64>, locked: &[Vec<C64>], want: usize, m_max: usize, tol: f64, scale: f64) -> Result<Ritz> {
    let n = op.dim();
    let mut q = vec![start];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![ZERO; n];
    loop {
        let j = q.len() - 1;
        op.matvec_into(&q[j], &mut w)?;
        let a = dot(&q[j], &w).re;
        axpy(C64::new(-a, 0.0), &q[j], &mut w);
        if j > 0 {
            axpy(C64::new(-beta[j - 1], 0.0), &q[j - 1], &mut w);
        }
        orthogonalize(&mut w, locked);
        orthogonalize(&mut w, &q);
        alpha.push(a);
        let b = norm(&w);
        let m = q.len();
        let exhausted = b <= 1e-13 * scale || m >= m_max;
        if exhausted || m % 8 == 0 {
            let t = DMatrix::from_fn(m, m, |r, c| match r.abs_diff(c) {
                0 => alpha[r],
                1 => beta[r.min(c)],
                _ => 0.0,
            });
            let e = t.symmetric_eigen();
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&x, &y| e.eigenvalues[x].total_cmp(&e.eigenvalues[y]));
            let bound = |i: usize| if b <= 1e-13 * scale { 0.0 } else { b * e.eigenvectors[(m - 1, i)].abs() };
            let converged = order.iter().take_while(|&&i| bound(i) <= tol).count();
            if exhausted || converged >= want {
                let keep = order.len().min(want.max(converged).max(1));
                let mut values = Vec::with_capacity(keep);
                let mut vectors = Vec::with_capacity(keep);
                for &i in order.iter().take(keep) {
                    let mut x = vec![ZERO; n];
                    for (k, qk) in q.iter().enumerate() {
                        axpy(C64::new(e.eigenvectors[(k, i)], 0.0), qk, &mut x);
                    }
                    let nx = norm(&x);
                    x.iter_mut().for_each(|v| *v /= nx);
                    values.push(e.eigenvalues[i]);
                    vectors.push(x);
                }
                return Ok(Ritz { values, vectors, converged: converged.min(keep) });
            }
        }
        beta.push(b);
        q.push(w.iter().map(|x| x / b).collect());
    }
}

/// Lowest `k` eigenpairs by deflated Lanczos with locking. A final cycle
/// started from a fresh random vector confirms no lower level was skipped
/// (degenerate copies are invisible to a single Krylov space).
fn lanczos_lowest(op: &SparseOperator, k: usize, rel_tol: f64, seed: u64) -> Result<(Vec<f64>, Vec<Vec<C64>>)> {
    let n = op.dim();
    if k == 0 || n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let scale = op.norm_bound().max(f64::MIN_POSITIVE);
    let tol = rel_tol * scale;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vals: Vec<f64> = Vec::new();
    let mut vecs: Vec<Vec<C64>> = Vec::new();
    let mut restart: Option<Vec<C64>> = None;
    let max_cycles = 60 + 4 * k;
    for _ in 0..max_cycles {
        let avail = n - vecs.len();
        if avail == 0 {
            return Ok((vals, vecs));
        }
        let verifying = vecs.len() >= k;
        let want = if verifying { 1 } else { k - vecs.len() };
        let start = match restart.take() {
            Some(mut v) => {
                orthogonalize(&mut v, &vecs);
                let nv = norm(&v);
                if nv > 1e-8 {
                    v.iter_mut().for_each(|x| *x /= nv);
                    v
                } else {
                    random_unit(n, &mut rng, &vecs)
                }
            }
            None => random_unit(n, &mut rng, &vecs),
        };
        let m_max = avail.min((2 * want + 40).max(80));
        let ritz = lanczos_cycle(op, start, &vecs, want, m_max, tol, scale)?;
        if ritz.converged == 0 {
            restart = ritz.vectors.into_iter().next();
            continue;
        }
        if verifying && ritz.values[0] >= vals[k - 1] - tol {
            return Ok((vals, vecs));
        }
        for (e, x) in ritz.values.into_iter().zip(ritz.vectors).take(ritz.converged) {
            let pos = vals.partition_point(|&v| v <= e);
            vals.insert(pos, e);
            vecs.insert(pos, x);
        }
        vals.truncate(k);
        vecs.truncate(k);
    }
    Err(ScarError::NoConvergence(format!("Lanczos did not settle {k} extremal pairs in {max_cycles} cycles")))
}

// ---------------------------------------------------------------------------
// Level statistics

#[derive(Clone, Debug, Serialize)]
pub struct UnfoldParams {
    pub window: usize,
    pub edge_trim: f64,
    pub min_levels: usize,
    /// Spacings below this fraction of the spectral radius count as degeneracies.
    pub degeneracy_tol: f64,
}

impl Default for UnfoldParams {
    fn default() -> Self {
        UnfoldParams { window: 11, edge_trim: 0.05, min_levels: 50, degeneracy_tol: 1e-10 }
    }
}

/// Sorted, edge-trimmed raw spacings with exact degeneracies removed.
pub fn raw_spacings(evals: &[f64], params: &UnfoldParams) -> Result<Vec<f64>> {
    let mut e: Vec<f64> = evals.to_vec();
    e.sort_by(f64::total_cmp);
    let radius = e.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let cut = (e.len() as f64 * params.edge_trim).floor() as usize;
    let kept = &e[cut..e.len() - cut];
    if kept.len() < params.min_levels {
        return Err(ScarError::TooFewLevels { got: kept.len(), need: params.min_levels });
    }
    let floor = params.degeneracy_tol * radius;
    Ok(kept.windows(2).map(|w| w[1] - w[0]).filter(|&s| s > floor).collect())
}

/// Spacings divided by their centered moving average (window truncated at the ends).
pub fn unfolded_spacings(evals: &[f64], params: &UnfoldParams) -> Result<Vec<f64>> {
    if params.window % 2 == 0 || params.window == 0 {
        return Err(ScarError::InvalidConfig(format!("unfolding window must be odd, got {}", params.window)));
    }
    let s = raw_spacings(evals, params)?;
    let half = params.window / 2;
    let mut prefix = vec![0.0; s.len() + 1];
    for (i, x) in s.iter().enumerate() {
        prefix[i + 1] = prefix[i] + x;
    }
    Ok((0..s.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(s.len());
            s[i] * (hi - lo) as f64 / (prefix[hi] - prefix[lo])
        })
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct RStatistic {
    pub r_values: Vec<f64>,
    pub r_mean: f64,
    pub r_stderr: f64,
}

const BOOTSTRAP_SAMPLES: usize = 200;
const BOOTSTRAP_SEED: u64 = 0xb007_57a9;

/// Consecutive-gap ratios of the raw spacings, with a bootstrap standard error.
pub fn r_statistic(evals: &[f64], params: &UnfoldParams) -> Result<RStatistic> {
    let s = raw_spacings(evals, params)?;
    let r_values: Vec<f64> = s.windows(2).map(|w| w[0].min(w[1]) / w[0].max(w[1])).collect();
    if r_values.is_empty() {
        return Err(ScarError::TooFewLevels { got: s.len(), need: 2 });
    }
    let n = r_values.len();
    let r_mean = r_values.iter().sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(BOOTSTRAP_SEED);
    let means: Vec<f64> = (0..BOOTSTRAP_SAMPLES)
        .map(|_| (0..n).map(|_| r_values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    let mu = means.iter().sum::<f64>() / means.len() as f64;
    let var = means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
    Ok(RStatistic { r_values, r_mean, r_stderr: var.sqrt() })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct KsDistances {
    pub ks_wigner: f64,
    pub ks_poisson: f64,
}

pub fn wigner_cdf(s: f64) -> f64 {
    1.0 - (-std::f64::consts::PI * s * s / 4.0).exp()
}

pub fn poisson_cdf(s: f64) -> f64 {
    1.0 - (-s).exp()
}

/// One-sample Kolmogorov-Smirnov distance.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

pub fn spacing_distribution_test(spacings: &[f64]) -> KsDistances {
    KsDistances { ks_wigner: ks_distance(spacings, wigner_cdf), ks_poisson: ks_distance(spacings, poisson_cdf) }
}

#[derive(Clone, Debug, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub densities: Vec<f64>,
}

/// Normalized density histogram on [0, max]; samples beyond `max` still count
/// toward the normalization.
pub fn histogram(samples: &[f64], bins: usize, max: f64) -> Histogram {
    let width = max / bins as f64;
    let mut counts = vec![0usize; bins];
    for &s in samples {
        if (0.0..max).contains(&s) {
            counts[(s / width) as usize] += 1;
        }
    }
    let total = samples.len().max(1) as f64;
    Histogram {
        edges: (0..=bins).map(|i| i as f64 * width).collect(),
        densities: counts.iter().map(|&c| c as f64 / (total * width)).collect(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelStatistics {
    pub levels: usize,
    pub spacings: Vec<f64>,
    pub mean_spacing: f64,
    pub r_values: Vec<f64>,
    pub r_mean: f64,
    pub r_stderr: f64,
    pub histogram: Histogram,
    pub distances: KsDistances,
    pub params: UnfoldParams,
}

/// The compact record exported next to a spectrum.
#[derive(Clone, Debug, Serialize)]
pub struct LevelSummary {
    pub levels: usize,
    pub spacings_used: usize,
    pub r_mean: f64,
    pub r_stderr: f64,
    pub ks_wigner: f64,
    pub ks_poisson: f64,
    pub mean_spacing: f64,
    pub window: usize,
    pub edge_trim: f64,
    pub degeneracy_tol: f64,
    pub histogram_bins: usize,
    pub histogram_max: f64,
}

pub const HISTOGRAM_BINS: usize = 40;
pub const HISTOGRAM_MAX: f64 = 4.0;

pub fn level_statistics(evals: &[f64], params: &UnfoldParams) -> Result<LevelStatistics> {
    let spacings = unfolded_spacings(evals, params)?;
    let r = r_statistic(evals, params)?;
    let mean_spacing = spacings.iter().sum::<f64>() / spacings.len() as f64;
    Ok(LevelStatistics {
        levels: evals.len(),
        distances: spacing_distribution_test(&spacings),
        histogram: histogram(&spacings, HISTOGRAM_BINS, HISTOGRAM_MAX),
        mean_spacing,
        spacings,
        r_values: r.r_values,
        r_mean: r.r_mean,
        r_stderr: r.r_stderr,
        params: params.clone(),
    })
}

impl LevelStatistics {
    pub fn summary(&self) -> LevelSummary {
        LevelSummary {
            levels: self.levels,
            spacings_used: self.spacings.len(),
            r_mean: self.r_mean,
            r_stderr: self.r_stderr,
            ks_wigner: self.distances.ks_wigner,
            ks_poisson: self.distances.ks_poisson,
            mean_spacing: self.mean_spacing,
            window: self.params.window,
            edge_trim: self.params.edge_trim,
            degeneracy_tol: self.params.degeneracy_tol,
            histogram_bins: HISTOGRAM_BINS,
            histogram_max: HISTOGRAM_MAX,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{local_spin_matrices, SpinChainConfig};
    use crate::model::build_hamiltonian;
    use crate::sectors::{counting_sector, momentum_sector, sector_hamiltonian};
    use proptest::prelude::*;
    use rand_distr::{Distribution, Exp1, StandardNormal};
    use std::sync::Arc;

    fn cfg(two_j: u32, n: usize, a: f64, theta: f64) -> SpinChainConfig {
        SpinChainConfig::new(two_j, n, a, theta).unwrap()
    }

    fn dense() -> DiagMode {
        DiagMode::Dense { vectors: true }
    }

    #[test]
    fn free_spin_one_multiplet() {
        let h = build_hamiltonian(&cfg(2, 3, 1.0, 0.0)).unwrap();
        let sd = diagonalize(&h, dense()).unwrap();
        // Multiplicities: coefficients of (x⁻¹ + 1 + x)³.
        let mut poly = vec![1u32];
        for _ in 0..3 {
            let mut next = vec![0; poly.len() + 2];
            for (i, c) in poly.iter().enumerate() {
                for s in 0..3 {
                    next[i + s] += c;
                }
            }
            poly = next;
        }
        let mut want = Vec::new();
        for (i, &c) in poly.iter().enumerate() {
            want.extend(std::iter::repeat(i as f64 - 3.0).take(c as usize));
        }
        for (a, b) in sd.eigenvalues().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(sd.max_residual() < 1e-12);
    }

    #[test]
    fn spin_half_sx() {
        let sx = &local_spin_matrices(1).unwrap().sx;
        let op = SparseOperator::from_dense(BasisTag::Plain { dim: 2 }, sx).unwrap();
        let sd = diagonalize(&op, dense()).unwrap();
        assert!((sd.eigenvalues()[0] + 0.5).abs() < 1e-15 && (sd.eigenvalues()[1] - 0.5).abs() < 1e-15);
    }

    fn random_hermitian(n: usize, seed: u64) -> SparseOperator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::from_fn(n, n, |_, _| {
            C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        SparseOperator::from_dense(BasisTag::Plain { dim: n }, &m).unwrap()
    }

    #[test]
    fn random_hermitian_residuals() {
        let h = random_hermitian(500, 3);
        let sd = diagonalize(&h, dense()).unwrap();
        assert!(sd.max_residual() <= 1e-10 * sd.spectral_radius());
        let v = sd.eigenvectors().unwrap();
        let g = v.adjoint() * v - DMatrix::identity(500, 500);
        assert!(g.iter().map(|z| z.norm()).fold(0.0, f64::max) <= 1e-10);
    }

    #[test]
    fn refusals() {
        let h = random_hermitian(20, 1);
        let opts = DiagOptions { dense_cap: 10, ..DiagOptions::default() };
        assert!(matches!(diagonalize_with(&h, dense(), &opts), Err(ScarError::DenseCapExceeded { dim: 20, cap: 10 })));
        let t = SparseOperator::from_triplets(BasisTag::Plain { dim: 2 }, 2, vec![(0, 1, C64::new(1.0, 0.0))]).unwrap();
        assert!(matches!(diagonalize(&t, dense()), Err(ScarError::NotHermitian)));
        assert!(matches!(
            diagonalize(&t, DiagMode::Extremal { count: 1, end: SpectrumEnd::Lowest }),
            Err(ScarError::NotHermitian)
        ));
    }

    #[test]
    fn lanczos_matches_dense_on_c0_sector() {
        let c = cfg(2, 5, 0.0, 0.0);
        let c0 = counting_sector(&c, 0).unwrap();
        let h = sector_hamiltonian(&c, &c0).unwrap();
        let full = diagonalize(&h, DiagMode::Dense { vectors: false }).unwrap();
        let e = full.eigenvalues();
        let lo = diagonalize(&h, DiagMode::Extremal { count: 10, end: SpectrumEnd::Lowest }).unwrap();
        let hi = diagonalize(&h, DiagMode::Extremal { count: 10, end: SpectrumEnd::Highest }).unwrap();
        for i in 0..10 {
            assert!((lo.eigenvalues()[i] - e[i]).abs() <= 1e-9, "low {i}");
            assert!((hi.eigenvalues()[i] - e[e.len() - 10 + i]).abs() <= 1e-9, "high {i}");
        }
        assert!(lo.max_residual() <= 1e-8 * lo.spectral_radius());
    }

    #[test]
    fn lanczos_finds_degenerate_copies() {
        let h = build_hamiltonian(&cfg(2, 3, 1.0, 0.0)).unwrap();
        let lo = diagonalize(&h, DiagMode::Extremal { count: 5, end: SpectrumEnd::Lowest }).unwrap();
        let want = [-3.0, -2.0, -2.0, -2.0, -1.0];
        for (a, b) in lo.eigenvalues().iter().zip(want) {
            assert!((a - b).abs() < 1e-9, "{:?}", lo.eigenvalues());
        }
        let v = lo.eigenvectors().unwrap();
        let g = v.adjoint() * v - DMatrix::identity(5, 5);
        assert!(g.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-10);
    }

    #[test]
    fn lanczos_on_tiny_operator_is_exact() {
        let h = random_hermitian(6, 9);
        let all = diagonalize(&h, dense()).unwrap();
        let lo = diagonalize(&h, DiagMode::Extremal { count: 6, end: SpectrumEnd::Lowest }).unwrap();
        for (a, b) in lo.eigenvalues().iter().zip(all.eigenvalues()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn theta_isospectral() {
        let e1 = diagonalize(&build_hamiltonian(&cfg(2, 4, 0.5, 0.0)).unwrap(), DiagMode::Dense { vectors: false }).unwrap();
        let e2 = diagonalize(&build_hamiltonian(&cfg(2, 4, 0.5, 2.1)).unwrap(), DiagMode::Dense { vectors: false }).unwrap();
        for (a, b) in e1.eigenvalues().iter().zip(e2.eigenvalues()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn empty_block_is_an_error() {
        let h = SparseOperator::zero(BasisTag::Plain { dim: 0 }, 0);
        assert!(matches!(diagonalize(&h, dense()), Err(ScarError::Sector(_))));
    }

    #[test]
    fn csv_export() {
        let h = build_hamiltonian(&cfg(1, 2, 1.0, 0.0)).unwrap();
        let csv = diagonalize(&h, dense()).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "index,eigenvalue,residual");
        assert_eq!(lines.len(), 5);
        let e0: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
        assert!((e0 + 1.0).abs() < 1e-12);
    }

    #[test]
    fn rigid_ladder() {
        let e: Vec<f64> = (0..200).map(|l| l as f64).collect();
        let p = UnfoldParams::default();
        let s = unfolded_spacings(&e, &p).unwrap();
        assert!(s.iter().all(|x| (x - 1.0).abs() < 1e-12));
        let r = r_statistic(&e, &p).unwrap();
        assert!((r.r_mean - 1.0).abs() < 1e-12);
        let ks = spacing_distribution_test(&s);
        assert!((ks.ks_poisson - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut acc = 0.0;
        let e: Vec<f64> = (0..300)
            .map(|_| {
                let x: f64 = Exp1.sample(&mut rng);
                acc += x;
                acc
            })
            .collect();
        let p = UnfoldParams::default();
        let a = unfolded_spacings(&e, &p).unwrap();
        let b = unfolded_spacings(&e.iter().map(|x| 2.0 * x).collect::<Vec<_>>(), &p).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_levels() {
        let e: Vec<f64> = (0..40).map(|l| l as f64).collect();
        assert!(matches!(unfolded_spacings(&e, &UnfoldParams::default()), Err(ScarError::TooFewLevels { .. })));
        assert!(r_statistic(&e, &UnfoldParams::default()).is_err());
    }

    #[test]
    fn degeneracies_are_dropped() {
        let mut e: Vec<f64> = (0..100).map(|l| l as f64).collect();
        e.extend((20..40).map(|l| l as f64));
        let s = raw_spacings(&e, &UnfoldParams::default()).unwrap();
        assert!(s.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn poisson_sampling_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut acc = 0.0;
        let e: Vec<f64> = (0..100_000)
            .map(|_| {
                let x: f64 = Exp1.sample(&mut rng);
                acc += x;
                acc
            })
            .collect();
        let r = r_statistic(&e, &UnfoldParams::default()).unwrap();
        let exact = 2.0 * std::f64::consts::LN_2 - 1.0;
        assert!((r.r_mean - exact).abs() <= 0.005, "{}", r.r_mean);
        assert!((r.r_mean - 0.386).abs() <= 0.005);
        assert!(r.r_stderr > 0.0 && r.r_stderr < 0.002);
    }

    #[test]
    fn goe_sampling_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 1000;
        let mut rs = Vec::new();
        for _ in 0..20 {
            let a = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
            let m: DMatrix<f64> = (&a + a.transpose()) * 0.5;
            let e: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
            rs.push(r_statistic(&e, &UnfoldParams::default()).unwrap().r_mean);
        }
        let mean = rs.iter().sum::<f64>() / rs.len() as f64;
        assert!((mean - 0.531).abs() <= 0.01, "{mean}");
    }

    #[test]
    fn ks_sampling_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let wig: Vec<f64> = (0..10_000)
            .map(|_| {
                let u: f64 = rng.random();
                (-4.0 * (1.0 - u).ln() / std::f64::consts::PI).sqrt()
            })
            .collect();
        assert!(spacing_distribution_test(&wig).ks_wigner <= 0.02);
        let poi: Vec<f64> = (0..10_000).map(|_| -> f64 { Exp1.sample(&mut rng) }).collect();
        assert!(spacing_distribution_test(&poi).ks_poisson <= 0.02);
    }

    #[test]
    fn histogram_normalization() {
        let s: Vec<f64> = (0..400).map(|i| i as f64 / 100.0).collect();
        let h = histogram(&s, 40, 4.0);
        assert_eq!(h.edges.len(), 41);
        let area: f64 = h.densities.iter().map(|d| d * 0.1).sum();
        assert!((area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unfolding_sanity_on_chaotic_block() {
        let c = cfg(3, 6, 0.0, 0.0);
        let c0 = Arc::new(counting_sector(&c, 0).unwrap());
        let k1 = momentum_sector(&c0, 1).unwrap();
        let h = sector_hamiltonian(&c, &k1).unwrap();
        let sd = diagonalize(&h, DiagMode::Dense { vectors: false }).unwrap();
        let ls = level_statistics(sd.eigenvalues(), &UnfoldParams::default()).unwrap();
        assert!((ls.mean_spacing - 1.0).abs() <= 0.02, "{}", ls.mean_spacing);
        let j = serde_json::to_value(ls.summary()).unwrap();
        assert_eq!(j["window"], 11);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn statistics_permutation_invariant(seed in 0u64..1000, swaps in proptest::collection::vec((0usize..120, 0usize..120), 0..60)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e: Vec<f64> = (0..120).map(|_| rng.random::<f64>() * 10.0).collect();
            let mut p = e.clone();
            for (a, b) in swaps {
                p.swap(a, b);
            }
            let x = level_statistics(&e, &UnfoldParams::default()).unwrap();
            let y = level_statistics(&p, &UnfoldParams::default()).unwrap();
            prop_assert_eq!(x.r_mean, y.r_mean);
            prop_assert_eq!(x.r_stderr, y.r_stderr);
            prop_assert_eq!(x.spacings, y.spacings);
            prop_assert_eq!(x.distances.ks_wigner, y.distances.ks_wigner);
        }
    }
}
