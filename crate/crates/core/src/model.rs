// SPDX-License-Identifier: Apache-2.0
//! Operators of the deformed scar model H(θ, a).
//!
//! Every builder has an `_on` variant that works on any sorted set of product
//! codes (a sector). On a subset the result is the compression P·O·P, which
//! equals the true restriction whenever the subset is invariant under O.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chain::{level_index, local_spin_matrices, Geometry, SpinChainConfig, C64, ONE, ZERO};
use crate::error::{Result, ScarError};
use crate::operator::{BasisTag, CodeSet, SparseOperator};
use crate::state::{norm, StateVector};

/// A product basis: a tag plus the codes it contains.
#[derive(Clone, Copy, Debug)]
pub struct ProductBasis<'a> {
    pub tag: &'a BasisTag,
    pub codes: CodeSet<'a>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Number of cyclic neighbours (m_l, m_{l+1}) = (+j, -j).
#[inline]
pub fn pattern_count(geom: &Geometry, code: u64) -> u32 {
    let top = geom.local_dim() - 1;
    let n = geom.sites();
    (0..n).filter(|&s| geom.digit(code, s) == top && geom.digit(code, (s + 1) % n) == 0).count() as u32
}

/// Bit l-1 set when a (+j, -j) pattern starts at site l.
#[inline]
pub fn pattern_mask(geom: &Geometry, code: u64) -> u64 {
    let top = geom.local_dim() - 1;
    let n = geom.sites();
    (0..n)
        .filter(|&s| geom.digit(code, s) == top && geom.digit(code, (s + 1) % n) == 0)
        .fold(0u64, |m, s| m | (1 << s))
}

fn full(cfg: &SpinChainConfig) -> (Geometry, BasisTag) {
    let g = cfg.geometry();
    let tag = g.full_tag();
    (g, tag)
}

fn diagonal_on<F: Fn(u64) -> C64>(basis: ProductBasis<'_>, f: F) -> SparseOperator {
    let diag: Vec<C64> = (0..basis.codes.len()).map(|i| f(basis.codes.code(i))).collect();
    SparseOperator::diagonal(basis.tag.clone(), &diag)
}

pub fn counting_on(cfg: &SpinChainConfig, basis: ProductBasis<'_>) -> SparseOperator {
    let g = cfg.geometry();
    diagonal_on(basis, |c| C64::new(pattern_count(&g, c) as f64, 0.0))
}

pub fn build_counting_operator(cfg: &SpinChainConfig) -> SparseOperator {
    let (g, tag) = full(cfg);
    counting_on(cfg, ProductBasis { tag: &tag, codes: CodeSet::Range(g.dim()) })
}

/// U(θ) = exp(iθĈ), diagonal.
pub fn unitary_on(theta: f64, cfg: &SpinChainConfig, basis: ProductBasis<'_>) -> SparseOperator {
    let g = cfg.geometry();
    let theta = theta.rem_euclid(2.0 * PI);
    diagonal_on(basis, |c| C64::from_polar(1.0, theta * pattern_count(&g, c) as f64))
}

pub fn build_unitary(theta: f64, cfg: &SpinChainConfig) -> SparseOperator {
    let (g, tag) = full(cfg);
    unitary_on(theta, cfg, ProductBasis { tag: &tag, codes: CodeSet::Range(g.dim()) })
}

/// P: projector onto pattern-free states.
pub fn blockade_projector_on(cfg: &SpinChainConfig, basis: ProductBasis<'_>) -> SparseOperator {
    let g = cfg.geometry();
    diagonal_on(basis, |c| if pattern_count(&g, c) == 0 { ONE } else { ZERO })
}

pub fn build_blockade_projector(cfg: &SpinChainConfig) -> SparseOperator {
    let (g, tag) = full(cfg);
    blockade_projector_on(cfg, ProductBasis { tag: &tag, codes: CodeSet::Range(g.dim()) })
}

/// ½√(j(j+1) − m(m+1)) indexed by digit of the lower state.
fn sx_up_amplitudes(two_j: u32) -> Vec<f64> {
    let j = two_j as f64 / 2.0;
    (0..=two_j as usize)
        .map(|dg| {
            let m = dg as f64 - j;
            0.5 * (j * (j + 1.0) - m * (m + 1.0)).max(0.0).sqrt()
        })
        .collect()
}

/// H(θ, a) assembled from its local terms:
/// Σ S^x + √(j/2) Σ { [(c−1)|j⟩⟨j−1| + h.c.]_l Π^{−j}_{l+1} + Π^{j}_l [(c−1)|−j⟩⟨−j+1| + h.c.]_{l+1} }
/// with c = a·e^{iθ}.
pub fn hamiltonian_on(cfg: &SpinChainConfig, basis: ProductBasis<'_>) -> Result<SparseOperator> {
    let g = cfg.geometry();
    let d = g.local_dim();
    let n = g.sites();
    let up = sx_up_amplitudes(cfg.two_j());
    let c = C64::from_polar(cfg.a(), cfg.theta());
    let gain = (cfg.j() / 2.0).sqrt();
    let create = (c - ONE) * gain;
    let destroy = (c.conj() - ONE) * gain;
    SparseOperator::from_rule(basis.tag.clone(), basis.codes, |code, out| {
        for s in 0..n {
            let t = (s + 1) % n;
            let dg = g.digit(code, s);
            let dn = g.digit(code, t);
            if dg + 1 < d {
                out.push((g.with_digit(code, s, dg + 1), C64::new(up[dg as usize], 0.0)));
            }
            if dg > 0 {
                out.push((g.with_digit(code, s, dg - 1), C64::new(up[dg as usize - 1], 0.0)));
            }
            if dn == 0 {
                if dg == d - 2 {
                    out.push((g.with_digit(code, s, d - 1), create));
                } else if dg == d - 1 {
                    out.push((g.with_digit(code, s, d - 2), destroy));
                }
            }
            if dg == d - 1 {
                if dn == 1 {
                    out.push((g.with_digit(code, t, 0), create));
                } else if dn == 0 {
                    out.push((g.with_digit(code, t, 1), destroy));
                }
            }
        }
    })
}

pub fn build_hamiltonian(cfg: &SpinChainConfig) -> Result<SparseOperator> {
    let (g, tag) = full(cfg);
    hamiltonian_on(cfg, ProductBasis { tag: &tag, codes: CodeSet::Range(g.dim()) })
}

/// Reference construction U(θ)·[(1+a)/2 J^x + (1−a)/2 U_π J^x U_π]·U(−θ) on the
/// full basis. Used to cross-check `build_hamiltonian`; the two coincide for
/// j ≥ 1 but not at j = 1/2, where a single flip can trade one pattern for another.
pub fn build_hamiltonian_conjugated(cfg: &SpinChainConfig) -> Result<SparseOperator> {
    let a = cfg.a();
    let jx = collective_generator(Axis::X, cfg)?;
    let upi = build_unitary(PI, cfg);
    let mixed = jx.linear_combination(C64::new((1.0 + a) / 2.0, 0.0), &jx.conjugate_by(&upi)?, C64::new((1.0 - a) / 2.0, 0.0))?;
    mixed.conjugate_by(&build_unitary(cfg.theta(), cfg))
}

fn local_axis(cfg: &SpinChainConfig, axis: Axis) -> Result<DMatrix<C64>> {
    let s = local_spin_matrices(cfg.two_j())?;
    Ok(match axis {
        Axis::X => s.sx,
        Axis::Y => s.sy,
        Axis::Z => s.sz,
    })
}

pub fn collective_generator_on(axis: Axis, cfg: &SpinChainConfig, basis: ProductBasis<'_>) -> Result<SparseOperator> {
    let op = local_axis(cfg, axis)?;
    crate::chain::collective_on(&op, &cfg.geometry(), basis.tag.clone(), basis.codes)
}

/// J^α = Σ_l S^α_l on the full basis.
pub fn collective_generator(axis: Axis, cfg: &SpinChainConfig) -> Result<SparseOperator> {
    let (g, tag) = full(cfg);
    collective_generator_on(axis, cfg, ProductBasis { tag: &tag, codes: CodeSet::Range(g.dim()) })
}

/// J^α(θ) = U(θ) J^α U(−θ).
pub fn build_deformed_generator(axis: Axis, theta: f64, cfg: &SpinChainConfig) -> Result<SparseOperator> {
    collective_generator(axis, cfg)?.conjugate_by(&build_unitary(theta, cfg))
}

#[derive(Clone, Debug)]
pub struct QOperators {
    pub qy: SparseOperator,
    pub qz: SparseOperator,
    pub qplus: SparseOperator,
    pub qminus: SparseOperator,
    pub r_hat: SparseOperator,
}

/// Q^α(a) = (1+a)/2 J^α + (1−a)/2 U_π J^α U_π, computed entrywise: U_π only
/// multiplies an element by (−1)^{C(row)+C(col)}.
fn q_axis_on(axis: Axis, a: f64, cfg: &SpinChainConfig, basis: ProductBasis<'_>) -> Result<SparseOperator> {
    let g = cfg.geometry();
    let d = g.local_dim();
    let op = local_axis(cfg, axis)?;
    let cols: Vec<Vec<(usize, C64)>> = (0..d as usize)
        .map(|c| (0..d as usize).filter(|&r| op[(r, c)] != ZERO).map(|r| (r, op[(r, c)])).collect())
        .collect();
    let (wp, wm) = ((1.0 + a) / 2.0, (1.0 - a) / 2.0);
    SparseOperator::from_rule(basis.tag.clone(), basis.codes, |code, out| {
        let c0 = pattern_count(&g, code);
        for s in 0..g.sites() {
            let idx = level_index(d, g.digit(code, s));
            for &(r, v) in &cols[idx] {
                let target = g.with_digit(code, s, d - 1 - r as u64);
                let parity = if (pattern_count(&g, target) + c0) % 2 == 0 { 1.0 } else { -1.0 };
                out.push((target, v * (wp + wm * parity)));
            }
        }
    })
}

/// R̂ = Σ Π^{(j−1)}_l Π^{(−j)}_{l+1} − Π^{(j)}_l Π^{(−j+1)}_{l+1}.
pub fn r_hat_on(cfg: &SpinChainConfig, basis: ProductBasis<'_>) -> SparseOperator {
    let g = cfg.geometry();
    let d = g.local_dim();
    let n = g.sites();
    diagonal_on(basis, |code| {
        let mut v = 0.0;
        for s in 0..n {
            let (x, y) = (g.digit(code, s), g.digit(code, (s + 1) % n));
            if x == d - 2 && y == 0 {
                v += 1.0;
            }
            if x == d - 1 && y == 1 {
                v -= 1.0;
            }
        }
        C64::new(v, 0.0)
    })
}

pub fn q_operators_on(a: f64, cfg: &SpinChainConfig, basis: ProductBasis<'_>) -> Result<QOperators> {
    if !(0.0..=1.0).contains(&a) {
        return Err(ScarError::InvalidConfig(format!("a = {a} outside [0, 1]")));
    }
    let qy = q_axis_on(Axis::Y, a, cfg, basis)?;
    let qz = q_axis_on(Axis::Z, a, cfg, basis)?;
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    let is = C64::new(0.0, FRAC_1_SQRT_2);
    let qplus = qy.linear_combination(s, &qz, is)?;
    let qminus = qy.linear_combination(s, &qz, -is)?;
    let r_hat = r_hat_on(cfg, basis);
    Ok(QOperators { qy, qz, qplus, qminus, r_hat })
}

pub fn build_q_operators(a: f64, cfg: &SpinChainConfig) -> Result<QOperators> {
    let (g, tag) = full(cfg);
    q_operators_on(a, cfg, ProductBasis { tag: &tag, codes: CodeSet::Range(g.dim()) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LadderSign {
    Raise,
    Lower,
}

impl LadderSign {
    fn value(self) -> f64 {
        match self {
            LadderSign::Raise => 1.0,
            LadderSign::Lower => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CommutatorResidual {
    /// Upper bound on ‖[H,Q±] ∓ Q± − i(1−a²)(j/√2)R̂‖.
    pub residual_norm: f64,
    /// max ‖([H,Q±] ∓ Q±)v‖ over sampled unit vectors v in ker R̂.
    pub kernel_check: f64,
}

pub fn commutator_residual(
    h: &SparseOperator,
    q: &SparseOperator,
    sign: LadderSign,
    a: f64,
    r_hat: &SparseOperator,
    cfg: &SpinChainConfig,
) -> Result<CommutatorResidual> {
    let comm = h.commutator(q)?;
    let shifted = comm.linear_combination(ONE, q, C64::new(-sign.value(), 0.0))?;
    let coeff = C64::new(0.0, (1.0 - a * a) * cfg.j() * FRAC_1_SQRT_2);
    let residual = shifted.linear_combination(ONE, r_hat, -coeff)?;
    let residual_norm = residual.norm_bound();

    if !r_hat.is_diagonal() {
        return Err(ScarError::InvalidConfig("R̂ expected diagonal in the product basis".into()));
    }
    let kernel: Vec<usize> =
        r_hat.diagonal_values().iter().enumerate().filter(|(_, v)| v.norm() == 0.0).map(|(i, _)| i).collect();
    let dim = h.dim();
    let mut kernel_check: f64 = 0.0;
    if !kernel.is_empty() {
        let mut probe = |v: &[C64]| -> Result<()> {
            let w = shifted.matvec(v)?;
            kernel_check = kernel_check.max(norm(&w) / norm(v));
            Ok(())
        };
        let stride = (kernel.len() / 32).max(1);
        for &k in kernel.iter().step_by(stride) {
            let mut e = vec![ZERO; dim];
            e[k] = ONE;
            probe(&e)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5ca7);
        for _ in 0..4 {
            let mut v = vec![ZERO; dim];
            for &k in &kernel {
                v[k] = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            }
            probe(&v)?;
        }
    }
    Ok(CommutatorResidual { residual_norm, kernel_check })
}

/// ‖H(θ,0)P − P J^x(θ) P‖ (bound). At θ = 0 this is the plain blockade identity.
pub fn blockade_identity_check(cfg: &SpinChainConfig) -> Result<f64> {
    if cfg.a() != 0.0 {
        return Err(ScarError::InvalidConfig("blockade identity holds for a = 0 only".into()));
    }
    let h = build_hamiltonian(cfg)?;
    let p = build_blockade_projector(cfg);
    let jx = build_deformed_generator(Axis::X, cfg.theta(), cfg)?;
    let lhs = h.mul(&p)?;
    let rhs = p.mul(&jx)?.mul(&p)?;
    Ok(lhs.sub(&rhs)?.norm_bound())
}

/// Single-site extremal S^x eigenvector in digit order (index = m + j),
/// phase fixed so the m = −j amplitude is real and positive.
pub fn x_polarized_local(two_j: u32, lowest: bool) -> Result<Vec<C64>> {
    let s = local_spin_matrices(two_j)?;
    let d = s.dim();
    let eig = s.sx.clone().symmetric_eigen();
    let pick = (0..d)
        .min_by(|&x, &y| {
            let (ex, ey) = (eig.eigenvalues[x], eig.eigenvalues[y]);
            if lowest { ex.total_cmp(&ey) } else { ey.total_cmp(&ex) }
        })
        .expect("d ≥ 2");
    let col = eig.eigenvectors.column(pick);
    let mut v: Vec<C64> = (0..d as u64).map(|dg| col[level_index(d as u64, dg)]).collect();
    let phase = v[0].conj() / v[0].norm();
    v.iter_mut().for_each(|z| *z *= phase);
    Ok(v)
}

/// Amplitudes Π_l local[digit_l] over a product basis.
pub fn product_amplitudes(geom: &Geometry, local: &[C64], codes: CodeSet<'_>) -> Vec<C64> {
    (0..codes.len())
        .map(|i| {
            let code = codes.code(i);
            (0..geom.sites()).map(|s| local[geom.digit(code, s) as usize]).product()
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SpinHalfTower {
    pub states: Vec<StateVector>,
    pub energies: Vec<f64>,
    pub q_plus: SparseOperator,
}

/// States (Q⁺)^k ⊗|↓⟩ˣ, k = 0..N, with Q⁺ = Σ(σ^y + iσ^z)/(2√2).
pub fn build_spinhalf_tower(cfg: &SpinChainConfig) -> Result<SpinHalfTower> {
    if cfg.two_j() != 1 {
        return Err(ScarError::InvalidConfig("spin-1/2 tower requires twoJ = 1".into()));
    }
    let (g, tag) = full(cfg);
    let h = build_hamiltonian(cfg)?;
    let q_plus = build_q_operators(1.0, cfg)?.qplus;
    let local = x_polarized_local(1, true)?;
    let mut psi = StateVector::new(tag, product_amplitudes(&g, &local, CodeSet::Range(g.dim())));
    psi.normalize()?;
    let mut states = Vec::with_capacity(cfg.sites() + 1);
    let mut energies = Vec::with_capacity(cfg.sites() + 1);
    for k in 0..=cfg.sites() {
        if k > 0 {
            psi = psi.apply(&q_plus)?;
            psi.normalize()?;
        }
        energies.push(psi.expectation(&h)?.re);
        states.push(psi.clone());
    }
    Ok(SpinHalfTower { states, energies, q_plus })
}
