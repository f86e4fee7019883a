// SPDX-License-Identifier: Apache-2.0
//! PXP ring, the spin-1 ↔ PXP isometry, magnon operators, and the
//! generalized pattern-counting construction with its numerical checks.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::chain::{embed_one_site, embed_two_site, local_spin_matrices, Geometry, SpinChainConfig, C64, ONE, ZERO};
use crate::error::{Result, ScarError};
use crate::model;
use crate::operator::{BasisTag, CodeSet, SparseOperator};
use crate::sectors::{counting_sector, Sector};
use crate::spectral::{self, DiagMode};
use crate::state::StateVector;

/// Ring of M two-level sites; bit i−1 of a code is site i, 1 meaning ↑.
#[derive(Clone, Debug)]
pub struct PxpChain {
    m: usize,
    basis: Vec<u64>,
    tag: BasisTag,
    h: SparseOperator,
}

impl PxpChain {
    pub fn sites(&self) -> usize {
        self.m
    }

    pub fn basis(&self) -> &[u64] {
        &self.basis
    }

    pub fn tag(&self) -> &BasisTag {
        &self.tag
    }

    pub fn hamiltonian(&self) -> &SparseOperator {
        &self.h
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn index_of(&self, code: u64) -> Option<usize> {
        self.basis.binary_search(&code).ok()
    }

    fn codes(&self) -> CodeSet<'_> {
        CodeSet::Sorted(&self.basis)
    }

    /// Σ_i f(i) · (local operator at site i), built by a per-site rule on the chain basis.
    fn site_sum(&self, mut rule: impl FnMut(usize, u64, &mut Vec<(u64, C64)>)) -> Result<SparseOperator> {
        let m = self.m;
        SparseOperator::from_rule(self.tag.clone(), self.codes(), |code, out| {
            for i in 0..m {
                rule(i, code, out);
            }
        })
    }
}

fn bit(code: u64, i: usize) -> u64 {
    (code >> i) & 1
}

fn down(code: u64, i: usize, m: usize) -> bool {
    bit(code, i % m) == 0
}

/// Cyclic binary words of length M without adjacent 1s, ascending.
pub fn ring_blockade_basis(m: usize) -> Vec<u64> {
    fn grow(len: usize, m: usize, prefix: u64, last: u64, out: &mut Vec<u64>) {
        if len == m {
            // Close the ring: site M next to site 1.
            if !(last == 1 && prefix & 1 == 1) {
                out.push(prefix);
            }
            return;
        }
        grow(len + 1, m, prefix, 0, out);
        if last == 0 {
            grow(len + 1, m, prefix | (1 << len), 1, out);
        }
    }
    let mut out = Vec::new();
    grow(0, m, 0, 0, &mut out);
    out.sort_unstable();
    out
}

/// Lucas number L_M, the ring blockade dimension.
pub fn lucas(m: usize) -> u64 {
    let (mut a, mut b) = (2u64, 1u64);
    for _ in 0..m {
        (a, b) = (b, a + b);
    }
    a
}

/// H_PXP = Σ_i P_{i−1} σ^x_i P_{i+1}, natively on the blockade ring or on all 2^M states.
pub fn build_pxp(m: usize, on_blockade: bool) -> Result<PxpChain> {
    if m < 3 {
        return Err(ScarError::InvalidConfig(format!("PXP ring needs M ≥ 3, got {m}")));
    }
    if !on_blockade && m > 20 {
        return Err(ScarError::InvalidConfig(format!("full 2^M PXP space limited to M ≤ 20, got {m}")));
    }
    let (basis, tag) = if on_blockade {
        let b = ring_blockade_basis(m);
        let dim = b.len();
        (b, BasisTag::Blockade { sites: m, dim })
    } else {
        ((0..1u64 << m).collect(), BasisTag::Full { local_dim: 2, sites: m })
    };
    let codes = if on_blockade { CodeSet::Sorted(&basis) } else { CodeSet::Range(1 << m) };
    let h = SparseOperator::from_rule(tag.clone(), codes, |code, out| {
        for i in 0..m {
            if down(code, i + m - 1, m) && down(code, i + 1, m) {
                out.push((code ^ (1 << i), ONE));
            }
        }
    })?;
    Ok(PxpChain { m, basis, tag, h })
}

/// Z_π, Y_π and S_π±(α) = (Y_π ± iαZ_π)/(2√2) on a PXP chain.
#[derive(Clone, Debug)]
pub struct MagnonOps {
    pub z_pi: SparseOperator,
    pub y_pi: SparseOperator,
}

impl MagnonOps {
    pub fn s_plus(&self, alpha: f64) -> Result<SparseOperator> {
        let k = 1.0 / (2.0 * 2f64.sqrt());
        self.y_pi.linear_combination(C64::new(k, 0.0), &self.z_pi, C64::new(0.0, alpha * k))
    }

    pub fn s_minus(&self, alpha: f64) -> Result<SparseOperator> {
        let k = 1.0 / (2.0 * 2f64.sqrt());
        self.y_pi.linear_combination(C64::new(k, 0.0), &self.z_pi, C64::new(0.0, -alpha * k))
    }
}

fn stagger(i: usize) -> f64 {
    // Sites are numbered from 1: site i+1 carries (−1)^{i+1}.
    if (i + 1) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn build_magnon_ops(chain: &PxpChain) -> Result<MagnonOps> {
    let m = chain.sites();
    if m % 2 != 0 {
        return Err(ScarError::InvalidConfig(format!("magnon operators need even M, got {m}")));
    }
    let z_pi = chain.site_sum(|i, code, out| {
        let sz = if bit(code, i) == 1 { 1.0 } else { -1.0 };
        out.push((code, C64::new(stagger(i) * sz, 0.0)));
    })?;
    let y_pi = chain.site_sum(|i, code, out| {
        if down(code, i + m - 1, m) && down(code, i + 1, m) {
            // σ^y|↓⟩ = −i|↑⟩, σ^y|↑⟩ = i|↓⟩.
            let amp = if bit(code, i) == 0 { C64::new(0.0, -1.0) } else { C64::new(0.0, 1.0) };
            out.push((code ^ (1 << i), amp * stagger(i)));
        }
    })?;
    Ok(MagnonOps { z_pi, y_pi })
}

/// σ^x on site `site` (1-based) times P on site `proj`, as a chain operator.
pub fn sigma_x_with_projector(chain: &PxpChain, site: usize, proj: usize) -> Result<SparseOperator> {
    let m = chain.sites();
    if site == 0 || site > m || proj == 0 || proj > m {
        return Err(ScarError::SiteOutOfRange { site: site.max(proj), sites: m });
    }
    SparseOperator::from_rule(chain.tag.clone(), chain.codes(), |code, out| {
        if down(code, proj - 1, m) {
            out.push((code ^ (1 << (site - 1)), ONE));
        }
    })
}

/// Spin-1 C = 0 sector ↔ PXP ring blockade basis, as an index permutation.
#[derive(Clone, Debug)]
pub struct Isometry {
    source: Arc<Sector>,
    target: PxpChain,
    /// source index → target index
    map: Vec<usize>,
}

/// Local dictionary on sites (2l−1, 2l): m=+1 → (↓,↑), m=0 → (↓,↓), m=−1 → (↑,↓).
pub fn spin1_code_to_pxp(geom: &Geometry, code: u64) -> u64 {
    let mut out = 0u64;
    for l in 0..geom.sites() {
        out |= match geom.digit(code, l) {
            2 => 1 << (2 * l + 1),
            1 => 0,
            _ => 1 << (2 * l),
        };
    }
    out
}

pub fn spin1_to_pxp(cfg: &SpinChainConfig) -> Result<Isometry> {
    if cfg.two_j() != 2 {
        return Err(ScarError::InvalidConfig(format!("PXP mapping needs j = 1, got twoJ = {}", cfg.two_j())));
    }
    let g = cfg.geometry();
    let source = Arc::new(counting_sector(cfg, 0)?);
    let target = build_pxp(2 * cfg.sites(), true)?;
    let map = source
        .states()
        .iter()
        .map(|&c| {
            target
                .index_of(spin1_code_to_pxp(&g, c))
                .ok_or_else(|| ScarError::Sector(format!("code {c} maps outside the blockade ring")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Isometry { source, target, map })
}

impl Isometry {
    pub fn source(&self) -> &Arc<Sector> {
        &self.source
    }

    pub fn target(&self) -> &PxpChain {
        &self.target
    }

    pub fn is_bijective(&self) -> bool {
        let mut seen = vec![false; self.target.dim()];
        for &t in &self.map {
            if std::mem::replace(&mut seen[t], true) {
                return false;
            }
        }
        self.map.len() == self.target.dim()
    }

    pub fn map_state(&self, v: &StateVector) -> Result<StateVector> {
        self.check(v.basis(), self.source.tag(), v.dim())?;
        let mut out = vec![ZERO; self.target.dim()];
        for (i, &t) in self.map.iter().enumerate() {
            out[t] = v.amplitudes()[i];
        }
        Ok(StateVector::new(self.target.tag.clone(), out))
    }

    pub fn pull_state(&self, v: &StateVector) -> Result<StateVector> {
        self.check(v.basis(), self.target.tag(), v.dim())?;
        Ok(StateVector::new(self.source.tag().clone(), self.map.iter().map(|&t| v.amplitudes()[t]).collect()))
    }

    /// V O V† for an operator on the spin-1 C = 0 sector.
    pub fn map_operator(&self, op: &SparseOperator) -> Result<SparseOperator> {
        self.check(op.basis(), self.source.tag(), op.dim())?;
        op.permuted(&self.map, self.target.tag.clone())
    }

    fn check(&self, got: &BasisTag, want: &BasisTag, dim: usize) -> Result<()> {
        if got != want {
            return Err(ScarError::BasisMismatch { left: got.to_string(), right: want.to_string() });
        }
        if dim != self.map.len() {
            return Err(ScarError::DimensionMismatch { expected: self.map.len(), got: dim });
        }
        Ok(())
    }
}

/// L and R in the (m = +1, 0, −1) ordering.
pub fn spin1_l_r() -> (DMatrix<C64>, DMatrix<C64>) {
    let one = |r: usize, c: usize| {
        let mut m = DMatrix::<C64>::zeros(3, 3);
        m[(r, c)] = ONE;
        m[(c, r)] = ONE;
        m
    };
    (one(1, 2), one(0, 1))
}

/// H(0) = (1/√2) Σ_l R_l R²_{l+1} + L²_l L_{l+1} on the full spin-1 chain.
pub fn build_spin1_lr_form(cfg: &SpinChainConfig) -> Result<SparseOperator> {
    if cfg.two_j() != 2 {
        return Err(ScarError::InvalidConfig("L/R form is defined for j = 1".into()));
    }
    let g = cfg.geometry();
    let (l, r) = spin1_l_r();
    let (l2, r2) = (&l * &l, &r * &r);
    let mut h = SparseOperator::zero(g.full_tag(), g.dim() as usize);
    for site in 1..=g.sites() {
        h = h.add(&embed_two_site(&r, &r2, site, &g)?)?.add(&embed_two_site(&l2, &l, site, &g)?)?;
    }
    Ok(h.scale(C64::new(FRAC_1_SQRT_2, 0.0)))
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumDigest {
    pub dim: usize,
    pub min: f64,
    pub max: f64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl SpectrumDigest {
    fn of(e: &[f64]) -> Self {
        SpectrumDigest {
            dim: e.len(),
            min: e.first().copied().unwrap_or(0.0),
            max: e.last().copied().unwrap_or(0.0),
            sum: e.iter().sum(),
            sum_sq: e.iter().map(|x| x * x).sum(),
        }
    }
}

/// Mapping audit for a spin-1 chain of N sites against the 2N-site PXP ring.
#[derive(Clone, Debug, Serialize)]
pub struct PxpAudit {
    pub sites: usize,
    pub pxp_sites: usize,
    pub spin1_c0_dim: usize,
    pub blockade_dim: usize,
    pub lucas: u64,
    pub bijective: bool,
    pub neel_image: bool,
    /// max |√2·spec(H(0)|C=0) − spec(H_PXP)|
    pub spectrum_deviation: f64,
    /// ‖V H(0) V† − H_PXP/√2‖ (max entry)
    pub intertwining_residual: f64,
    /// ‖LR form − H(0)‖ on the full chain
    pub lr_form_residual: f64,
    /// max_l of the L_l and R_l image checks
    pub lr_image_residual: f64,
    /// ‖V Q^z V† − Z_π/2‖ and ‖V Q^y V† − Y_π/√2‖
    pub qz_residual: f64,
    pub qy_residual: f64,
    pub spin_spectrum: SpectrumDigest,
    pub pxp_spectrum: SpectrumDigest,
}

impl PxpAudit {
    pub fn passes(&self, tol: f64) -> bool {
        self.bijective
            && self.neel_image
            && self.spin1_c0_dim == self.blockade_dim
            && self.blockade_dim as u64 == self.lucas
            && [self.spectrum_deviation, self.intertwining_residual, self.lr_form_residual, self.lr_image_residual, self.qz_residual, self.qy_residual]
                .iter()
                .all(|&r| r <= tol)
    }
}

pub fn pxp_audit(n: usize) -> Result<PxpAudit> {
    let cfg = SpinChainConfig::new(2, n, 0.0, 0.0)?;
    let g = cfg.geometry();
    let iso = spin1_to_pxp(&cfg)?;
    let c0 = iso.source().clone();
    let pxp = iso.target();
    let h0 = model::hamiltonian_on(&cfg, c0.product_basis()?)?;

    let mapped = iso.map_operator(&h0)?;
    let intertwining = mapped.sub(&pxp.hamiltonian().scale(C64::new(FRAC_1_SQRT_2, 0.0)))?.max_abs();

    let es = spectral::diagonalize(&h0, DiagMode::Dense { vectors: false })?;
    let ep = spectral::diagonalize(pxp.hamiltonian(), DiagMode::Dense { vectors: false })?;
    let scaled: Vec<f64> = es.eigenvalues().iter().map(|e| e * 2f64.sqrt()).collect();
    let spectrum_deviation = if scaled.len() == ep.len() {
        scaled.iter().zip(ep.eigenvalues()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };

    let lr_form_residual = build_spin1_lr_form(&cfg)?.sub(&model::build_hamiltonian(&cfg)?)?.max_abs();

    // L_l ↦ σ^x_{2l−1} P_{2l}, R_l ↦ P_{2l−1} σ^x_{2l}, each compressed to the two bases.
    let (l, r) = spin1_l_r();
    let idx: Vec<usize> = c0.states().iter().map(|&c| c as usize).collect();
    let mut lr_image_residual: f64 = 0.0;
    for site in 1..=n {
        for (op, sx_site, p_site) in [(&l, 2 * site - 1, 2 * site), (&r, 2 * site, 2 * site - 1)] {
            let full = embed_one_site(op, site, &g)?;
            let block = full.restrict(&idx, c0.tag().clone())?;
            let want = sigma_x_with_projector(pxp, sx_site, p_site)?;
            lr_image_residual = lr_image_residual.max(iso.map_operator(&block)?.sub(&want)?.max_abs());
        }
    }

    let q = model::q_operators_on(0.0, &cfg, c0.product_basis()?)?;
    let mags = build_magnon_ops(pxp)?;
    let qz_residual = iso.map_operator(&q.qz)?.sub(&mags.z_pi.scale(C64::new(0.5, 0.0)))?.max_abs();
    let qy_residual = iso.map_operator(&q.qy)?.sub(&mags.y_pi.scale(C64::new(FRAC_1_SQRT_2, 0.0)))?.max_abs();

    let all_up = g.dim() - 1;
    let neel: u64 = (0..n).map(|l| 1u64 << (2 * l + 1)).sum();
    let neel_image = c0.index_of(all_up).map(|i| pxp.basis()[iso.map[i]] == neel).unwrap_or(false);

    Ok(PxpAudit {
        sites: n,
        pxp_sites: 2 * n,
        spin1_c0_dim: c0.dim(),
        blockade_dim: pxp.dim(),
        lucas: lucas(2 * n),
        bijective: iso.is_bijective(),
        neel_image,
        spectrum_deviation,
        intertwining_residual: intertwining,
        lr_form_residual,
        lr_image_residual,
        qz_residual,
        qy_residual,
        spin_spectrum: SpectrumDigest::of(&scaled),
        pxp_spectrum: SpectrumDigest::of(ep.eigenvalues()),
    })
}

// ---------------------------------------------------------------------------
// Generalized pattern model

#[derive(Clone, Debug, Serialize)]
pub struct GeneralizedDiagnostics {
    /// ‖[H′(0), C′]‖
    pub commutator: f64,
    /// ‖H′(0)P′ − P′H₀P′‖
    pub blockade: f64,
    /// max_l ‖[H′(0), p_l]‖: nonzero when H′ moves patterns between bonds.
    pub pattern_hopping: f64,
    /// ‖Π^a Π^b‖ and ‖Π^a h Π^b‖ for the local pieces.
    pub ab_overlap: f64,
    pub ab_coupling: f64,
    pub h_norm: f64,
    pub condition_violated: bool,
}

impl GeneralizedDiagnostics {
    /// All three diagnostics at or below `rel`·‖H′‖.
    pub fn vanish(&self, rel: f64) -> bool {
        let t = rel * self.h_norm.max(1.0);
        self.commutator <= t && self.blockade <= t && self.pattern_hopping <= t
    }
}

#[derive(Clone, Debug)]
pub struct GeneralizedModel {
    pub c_prime: SparseOperator,
    pub u_prime_pi: SparseOperator,
    pub h0: SparseOperator,
    pub h_prime: SparseOperator,
    pub p_prime: SparseOperator,
    pub diagnostics: GeneralizedDiagnostics,
}

const CONDITION_TOL: f64 = 1e-12;

/// Ordered product Π_{l=1..N} (I − (1 − e^{iθ}) p_l).
pub fn u_prime(theta: f64, patterns: &[SparseOperator], geom: &Geometry) -> Result<SparseOperator> {
    let dim = geom.dim() as usize;
    let id = SparseOperator::identity(geom.full_tag(), dim);
    let k = ONE - C64::from_polar(1.0, theta);
    let mut u = id.clone();
    for p in patterns {
        u = u.mul(&id.linear_combination(ONE, p, -k)?)?;
    }
    Ok(u)
}

/// Build C′, U′(π), H′(0), P′ from local projectors Π^a, Π^b and a local term h
/// (all in the m = +j-first ordering), with the fragmentation diagnostics.
pub fn generalized_model(pa: &DMatrix<C64>, pb: &DMatrix<C64>, h: &DMatrix<C64>, geom: &Geometry) -> Result<GeneralizedModel> {
    let d = geom.local_dim() as usize;
    for m in [pa, pb, h] {
        if m.nrows() != d || m.ncols() != d {
            return Err(ScarError::DimensionMismatch { expected: d, got: m.nrows() });
        }
    }
    if (h - h.adjoint()).iter().any(|z| z.norm() > 1e-12) {
        return Err(ScarError::NotHermitian);
    }
    let dim = geom.dim() as usize;
    let tag = geom.full_tag();
    let patterns: Vec<SparseOperator> = (1..=geom.sites()).map(|l| embed_two_site(pa, pb, l, geom)).collect::<Result<_>>()?;
    let mut c_prime = SparseOperator::zero(tag.clone(), dim);
    let mut h0 = SparseOperator::zero(tag.clone(), dim);
    for l in 1..=geom.sites() {
        c_prime = c_prime.add(&patterns[l - 1])?;
        h0 = h0.add(&embed_one_site(h, l, geom)?)?;
    }
    let u = u_prime(PI, &patterns, geom)?;
    let h_prime = h0.add(&h0.conjugate_by(&u)?)?.scale(C64::new(0.5, 0.0));
    let id = SparseOperator::identity(tag.clone(), dim);
    let mut p_prime = id.clone();
    for p in &patterns {
        p_prime = p_prime.mul(&id.sub(p)?)?;
    }

    let commutator = h_prime.commutator(&c_prime)?.operator_norm_estimate();
    let blockade = h_prime.mul(&p_prime)?.sub(&p_prime.mul(&h0)?.mul(&p_prime)?)?.operator_norm_estimate();
    let pattern_hopping =
        patterns.iter().map(|p| Ok(h_prime.commutator(p)?.operator_norm_estimate())).collect::<Result<Vec<f64>>>()?.into_iter().fold(0.0, f64::max);
    let spectral_norm = |m: DMatrix<C64>| m.singular_values().iter().copied().fold(0.0, f64::max);
    let ab_overlap = spectral_norm(pa * pb);
    let ab_coupling = spectral_norm(pa * h * pb);
    let diagnostics = GeneralizedDiagnostics {
        commutator,
        blockade,
        pattern_hopping,
        ab_overlap,
        ab_coupling,
        h_norm: h_prime.operator_norm_estimate(),
        condition_violated: ab_overlap > CONDITION_TOL || ab_coupling > CONDITION_TOL,
    };
    Ok(GeneralizedModel { c_prime, u_prime_pi: u, h0, h_prime, p_prime, diagnostics })
}

/// Convenience form taking normalized local states |a⟩, |b⟩.
pub fn generalized_model_from_states(a: &[C64], b: &[C64], h: &DMatrix<C64>, geom: &Geometry) -> Result<GeneralizedModel> {
    let proj = |v: &[C64]| -> Result<DMatrix<C64>> {
        let n: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-10 {
            return Err(ScarError::NotNormalized(n));
        }
        let col = DMatrix::from_column_slice(v.len(), 1, v);
        Ok(&col * col.adjoint())
    };
    generalized_model(&proj(a)?, &proj(b)?, h, geom)
}

// ---------------------------------------------------------------------------
// High-spin PXP via logical pair sites

#[derive(Clone, Debug, Serialize)]
pub struct HpxpReport {
    pub two_s: u32,
    pub physical_sites: usize,
    pub logical_sites: usize,
    pub logical_local_dim: usize,
    pub constrained_dim: usize,
    pub logical_c0_dim: usize,
    pub spectrum_deviation: f64,
    /// ‖W V‖ and ‖W h V‖ on the logical site
    pub wv_norm: f64,
    pub whv_norm: f64,
}

/// Spin-s chain with no two neighbouring excitations (m ≠ −s), cyclic, versus the
/// generalized model on pair sites restricted to C′ = 0.
pub fn hpxp_equivalence(two_s: u32, n_phys: usize) -> Result<HpxpReport> {
    if n_phys < 4 || n_phys % 2 != 0 {
        return Err(ScarError::InvalidConfig(format!("physical site count must be even and ≥ 4, got {n_phys}")));
    }
    let d = two_s as u64 + 1;
    let cap = spectral::dense_cap();
    let phys_dim = d.checked_pow(n_phys as u32).unwrap_or(u64::MAX);
    if phys_dim > cap as u64 {
        return Err(ScarError::DenseCapExceeded { dim: phys_dim as usize, cap });
    }
    let spin = local_spin_matrices(two_s)?;
    let sx = &spin.sx;

    // Physical side: digit 0 is m = −s (unexcited).
    let pg = Geometry::new(d, n_phys)?;
    let allowed: Vec<u64> = (0..pg.dim())
        .filter(|&c| (0..n_phys).all(|i| pg.digit(c, i) == 0 || pg.digit(c, (i + 1) % n_phys) == 0))
        .collect();
    let ptag = BasisTag::Plain { dim: allowed.len() };
    let sx_cols: Vec<Vec<(usize, C64)>> =
        (0..d as usize).map(|c| (0..d as usize).filter(|&r| sx[(r, c)] != ZERO).map(|r| (r, sx[(r, c)])).collect()).collect();
    let level = |digit: u64| (d - 1 - digit) as usize;
    let h_phys = SparseOperator::from_rule(ptag, CodeSet::Sorted(&allowed), |code, out| {
        for i in 0..n_phys {
            for &(r, v) in &sx_cols[level(pg.digit(code, i))] {
                out.push((pg.with_digit(code, i, d - 1 - r as u64), v));
            }
        }
    })?;

    // Logical site: pair states with at most one excitation, listed as
    // c = (0,0), a_k = (0,k), b_k = (k,0) for k = 1..2s.
    let mut pairs: Vec<(u64, u64)> = vec![(0, 0)];
    pairs.extend((1..d).map(|k| (0, k)));
    pairs.extend((1..d).map(|k| (k, 0)));
    let dl = pairs.len();
    let mut h = DMatrix::<C64>::zeros(dl, dl);
    let mut w = DMatrix::<C64>::zeros(dl, dl);
    let mut v = DMatrix::<C64>::zeros(dl, dl);
    for (i, &(p1, p2)) in pairs.iter().enumerate() {
        for (j, &(q1, q2)) in pairs.iter().enumerate() {
            let mut x = ZERO;
            if p2 == 0 && q2 == 0 {
                x += sx[(level(p1), level(q1))];
            }
            if p1 == 0 && q1 == 0 {
                x += sx[(level(p2), level(q2))];
            }
            h[(i, j)] = x;
        }
        if p2 != 0 {
            w[(i, i)] = ONE;
        }
        if p1 != 0 {
            v[(i, i)] = ONE;
        }
    }
    let lg = Geometry::new(dl as u64, n_phys / 2)?;
    let gm = generalized_model(&w, &v, &h, &lg)?;
    let c_diag = gm.c_prime.diagonal_values();
    let c0: Vec<usize> = (0..c_diag.len()).filter(|&i| c_diag[i].norm() < 0.5).collect();
    let h_log = gm.h_prime.restrict(&c0, BasisTag::Plain { dim: c0.len() })?;

    let e_phys = spectral::diagonalize(&h_phys, DiagMode::Dense { vectors: false })?;
    let e_log = spectral::diagonalize(&h_log, DiagMode::Dense { vectors: false })?;
    let spectrum_deviation = if e_phys.len() == e_log.len() {
        e_phys.eigenvalues().iter().zip(e_log.eigenvalues()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let spectral_norm = |m: DMatrix<C64>| m.singular_values().iter().copied().fold(0.0, f64::max);
    Ok(HpxpReport {
        two_s,
        physical_sites: n_phys,
        logical_sites: n_phys / 2,
        logical_local_dim: dl,
        constrained_dim: allowed.len(),
        logical_c0_dim: c0.len(),
        spectrum_deviation,
        wv_norm: spectral_norm(&w * &v),
        whv_norm: spectral_norm(&w * &h * &v),
    })
}
