// SPDX-License-Identifier: Apache-2.0
//! Scar-tower analysis: overlaps, entanglement, tower detection, Q± ladders
//! and the magnon cost function.

use std::collections::BTreeSet;
use std::f64::consts::SQRT_2;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{SpinChainConfig, C64, ZERO};
use crate::error::{Result, ScarError};
use crate::model::{self, q_operators_on};
use crate::operator::{BasisTag, CodeSet, SparseOperator};
use crate::quench::{initial_state, InitialKind};
use crate::sectors::{self, Sector};
use crate::spectral::{self, DiagMode, SpectralData};
use crate::state::{dot, norm, StateVector};

/// Von Neumann entropy (natural log) of sites 1..=cut for a full-chain state.
pub fn bipartite_entropy(state: &StateVector, cut: usize) -> Result<f64> {
    let BasisTag::Full { local_dim, sites } = *state.basis() else {
        return Err(ScarError::BasisMismatch { left: state.basis().to_string(), right: "full chain basis".into() });
    };
    if cut == 0 || cut >= sites {
        return Err(ScarError::InvalidConfig(format!("entropy cut {cut} outside 1..{sites}")));
    }
    state.require_normalized(1e-8)?;
    let d = local_dim as usize;
    let rows = d.pow(cut as u32);
    let cols = d.pow((sites - cut) as u32);
    // Sites 1..cut are the low digits, so code = row + rows·col.
    let m = DMatrix::from_column_slice(rows, cols, state.amplitudes());
    Ok(m.singular_values().iter().map(|s| s * s).filter(|&p| p > 1e-300).map(|p| -p * p.ln()).sum())
}

pub fn default_cut(sites: usize) -> usize {
    (sites / 2).max(1)
}

/// |⟨ψ0|E_n⟩|² for every stored eigenvector.
pub fn eigenstate_overlaps(sd: &SpectralData, psi0: &StateVector) -> Result<Vec<f64>> {
    Ok(eigenvector_amplitudes(sd, psi0)?.iter().map(|c| c.norm_sqr()).collect())
}

fn eigenvector_amplitudes(sd: &SpectralData, psi0: &StateVector) -> Result<Vec<C64>> {
    if psi0.basis() != sd.basis() {
        return Err(ScarError::BasisMismatch { left: psi0.basis().to_string(), right: sd.basis().to_string() });
    }
    let v = sd.eigenvectors().ok_or(ScarError::MissingEigenvectors)?;
    let x = DMatrix::from_column_slice(psi0.dim(), 1, psi0.amplitudes());
    Ok((v.adjoint() * x).iter().copied().collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct TowerParams {
    /// Degeneracy clustering tolerance relative to the spectral radius.
    pub deg_tol: f64,
    /// Nominal ladder step in energy units.
    pub step: f64,
    /// A member must be a local overlap maximum within ±window·step.
    pub window: f64,
    /// Consecutive members are more than min_gap·step apart.
    pub min_gap: f64,
    /// Clusters within ±hybrid_window·step of a member carrying at least
    /// hybrid_fraction of its weight are merged into it.
    pub hybrid_window: f64,
    pub hybrid_fraction: f64,
    /// The tower is flagged empty unless some cluster reaches floor_factor/dim.
    pub floor_factor: f64,
}

impl Default for TowerParams {
    fn default() -> Self {
        TowerParams { deg_tol: 1e-8, step: 1.0, window: 0.5, min_gap: 0.5, hybrid_window: 0.25, hybrid_fraction: 0.2, floor_factor: 10.0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScarTower {
    /// Eigenstate indices per member (a degenerate or hybridized group).
    pub indices: Vec<Vec<usize>>,
    /// Overlap-weighted group energies, strictly increasing.
    pub energies: Vec<f64>,
    pub overlaps: Vec<f64>,
    /// Filled by [`annotate_entropies`].
    pub entropies: Vec<f64>,
    #[serde(skip)]
    pub representatives: Vec<StateVector>,
    /// Total ψ0 weight over the whole spectrum.
    pub total_weight: f64,
    pub empty: bool,
}

impl ScarTower {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn member_of(&self) -> BTreeSet<usize> {
        self.indices.iter().flatten().copied().collect()
    }

    /// The `count` highest-energy members, as (position in tower) indices.
    pub fn top(&self, count: usize) -> std::ops::Range<usize> {
        self.len().saturating_sub(count)..self.len()
    }
}

fn clusters(e: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for i in 0..e.len() {
        match out.last_mut() {
            Some(c) if e[i] - e[*c.last().unwrap()] <= tol => c.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

/// Tower detection: anchor at the lowest cluster carrying ψ0 weight, then walk
/// upward to the nearest cluster that is a local overlap maximum.
pub fn detect_scar_tower(sd: &SpectralData, psi0: &StateVector, params: &TowerParams) -> Result<ScarTower> {
    let amps = eigenvector_amplitudes(sd, psi0)?;
    let ov: Vec<f64> = amps.iter().map(|c| c.norm_sqr()).collect();
    let e = sd.eigenvalues();
    let radius = sd.spectral_radius().max(f64::MIN_POSITIVE);
    let cl = clusters(e, params.deg_tol * radius);
    let ce: Vec<f64> = cl.iter().map(|g| g.iter().map(|&i| e[i]).sum::<f64>() / g.len() as f64).collect();
    let cov: Vec<f64> = cl.iter().map(|g| g.iter().map(|&i| ov[i]).sum()).collect();
    let total_weight = ov.iter().sum();
    let max = cov.iter().copied().fold(0.0, f64::max);
    let empty_tower = |empty| ScarTower {
        indices: vec![],
        energies: vec![],
        overlaps: vec![],
        entropies: vec![],
        representatives: vec![],
        total_weight,
        empty,
    };
    if max < params.floor_factor / e.len().max(1) as f64 {
        return Ok(empty_tower(true));
    }
    let floor = 1e-12 * max;
    let reach = params.window * params.step;
    let is_local_max = |c: usize| {
        cov[c] > floor && (0..cl.len()).filter(|&q| (ce[q] - ce[c]).abs() <= reach).all(|q| cov[q] <= cov[c])
    };
    let Some(anchor) = (0..cl.len()).find(|&c| cov[c] > floor) else { return Ok(empty_tower(true)) };
    let mut members = vec![anchor];
    let mut cur = anchor;
    while let Some(next) = (cur + 1..cl.len()).find(|&c| ce[c] > ce[cur] + params.min_gap * params.step && is_local_max(c)) {
        members.push(next);
        cur = next;
    }

    let v = sd.eigenvectors().ok_or(ScarError::MissingEigenvectors)?;
    let mut tower = empty_tower(false);
    for &m in &members {
        let group: Vec<usize> = (0..cl.len())
            .filter(|&q| (ce[q] - ce[m]).abs() <= params.hybrid_window * params.step && cov[q] >= params.hybrid_fraction * cov[m])
            .flat_map(|q| cl[q].iter().copied())
            .collect();
        let w: f64 = group.iter().map(|&i| ov[i]).sum();
        let mut rep = vec![ZERO; v.nrows()];
        for &i in &group {
            for (r, x) in rep.iter_mut().zip(v.column(i).iter()) {
                *r += x * amps[i];
            }
        }
        let rep = StateVector::new(sd.basis().clone(), rep).normalized()?;
        tower.energies.push(group.iter().map(|&i| ov[i] * e[i]).sum::<f64>() / w);
        tower.overlaps.push(w);
        tower.indices.push(group);
        tower.representatives.push(rep);
    }
    Ok(tower)
}

/// Lift a sector state all the way to the full chain basis.
pub fn to_full(sector: &Sector, v: &StateVector) -> Result<StateVector> {
    sector.lift_to_full(v)
}

pub fn annotate_entropies(tower: &mut ScarTower, sector: &Sector, cut: usize) -> Result<()> {
    tower.entropies = tower
        .representatives
        .par_iter()
        .map(|r| bipartite_entropy(&to_full(sector, r)?, cut))
        .collect::<Result<_>>()?;
    Ok(())
}

/// Entropies of selected eigenvectors of a sector spectrum.
pub fn eigenstate_entropies(sd: &SpectralData, sector: &Sector, cut: usize, indices: &[usize]) -> Result<Vec<f64>> {
    indices.par_iter().map(|&i| bipartite_entropy(&to_full(sector, &sd.eigenvector(i)?)?, cut)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct BulkComparison {
    pub energy: f64,
    pub overlap: f64,
    pub bulk_overlap_median: f64,
    pub overlap_ratio: f64,
    pub entropy: f64,
    pub bulk_entropy_median: f64,
    /// bulk median minus scar entropy; positive means the scar is less entangled.
    pub entropy_margin: f64,
}

fn median(mut x: Vec<f64>) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.sort_by(f64::total_cmp);
    let n = x.len();
    if n % 2 == 1 {
        x[n / 2]
    } else {
        0.5 * (x[n / 2 - 1] + x[n / 2])
    }
}

/// Compare each member with the `neighbours` non-tower eigenstates nearest in energy.
pub fn compare_with_bulk(
    sd: &SpectralData,
    overlaps: &[f64],
    tower: &ScarTower,
    sector: &Sector,
    cut: usize,
    neighbours: usize,
) -> Result<Vec<BulkComparison>> {
    if tower.entropies.len() != tower.len() {
        return Err(ScarError::Sector("tower entropies not annotated".into()));
    }
    let inside = tower.member_of();
    let e = sd.eigenvalues();
    let bulk: Vec<usize> = (0..e.len()).filter(|i| !inside.contains(i)).collect();
    let picks: Vec<Vec<usize>> = tower
        .energies
        .iter()
        .map(|&em| {
            let mut b = bulk.clone();
            b.sort_by(|&x, &y| (e[x] - em).abs().total_cmp(&(e[y] - em).abs()).then(x.cmp(&y)));
            b.truncate(neighbours);
            b
        })
        .collect();
    let needed: Vec<usize> = picks.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let ent = eigenstate_entropies(sd, sector, cut, &needed)?;
    let lookup = |i: usize| ent[needed.binary_search(&i).expect("computed")];
    Ok(picks
        .iter()
        .enumerate()
        .map(|(m, p)| {
            let bo = median(p.iter().map(|&i| overlaps[i]).collect());
            let be = median(p.iter().map(|&i| lookup(i)).collect());
            BulkComparison {
                energy: tower.energies[m],
                overlap: tower.overlaps[m],
                bulk_overlap_median: bo,
                overlap_ratio: tower.overlaps[m] / bo.max(f64::MIN_POSITIVE),
                entropy: tower.entropies[m],
                bulk_entropy_median: be,
                entropy_margin: be - tower.entropies[m],
            }
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct ApproxGroundState {
    pub state: StateVector,
    /// Norm of P⊗|−j⟩ˣ before renormalization.
    pub projected_norm: f64,
}

/// P ⊗|−j⟩ˣ on a sector contained in C = 0, normalized.
pub fn approximate_ground_state(cfg: &SpinChainConfig, sector: &Sector) -> Result<ApproxGroundState> {
    let g = cfg.geometry();
    if sector.geometry() != &g {
        return Err(ScarError::Sector("sector belongs to a different chain".into()));
    }
    if sector.states().iter().any(|&c| model::pattern_count(&g, c) != 0) {
        return Err(ScarError::Sector(format!("{} is not inside the C = 0 sector", sector.label())));
    }
    let local = model::x_polarized_local(cfg.two_j(), true)?;
    let raw = match sector.parent() {
        Some(parent) if sector.is_momentum() => {
            let amps = model::product_amplitudes(&g, &local, CodeSet::Sorted(parent.states()));
            sector.restrict(&StateVector::new(parent.tag().clone(), amps))?
        }
        _ => StateVector::new(sector.tag().clone(), model::product_amplitudes(&g, &local, CodeSet::Sorted(sector.states()))),
    };
    let projected_norm = raw.norm();
    if projected_norm < 1e-14 {
        return Err(ScarError::NotNormalized(projected_norm));
    }
    Ok(ApproxGroundState { state: raw.normalized()?, projected_norm })
}

#[derive(Clone, Debug)]
pub struct GeneratedTower {
    pub states: Vec<StateVector>,
    /// ‖Q⁺ψ_k‖ before each normalization (index k is the norm of Q⁺ψ_{k−1}).
    pub norms: Vec<f64>,
    pub truncated: bool,
    /// Norm left after one application beyond the requested count.
    pub residual_norm: f64,
}

/// ψ_k = normalize((Q⁺)^k gs) for k = 0..=count.
pub fn generate_tower(gs: &StateVector, qplus: &SparseOperator, count: usize) -> Result<GeneratedTower> {
    let mut states = vec![gs.clone().normalized()?];
    let mut norms = vec![1.0];
    let mut truncated = false;
    for _ in 0..count {
        let next = states.last().unwrap().apply(qplus)?;
        let n = next.norm();
        norms.push(n);
        if n < 1e-12 {
            truncated = true;
            break;
        }
        states.push(next.normalized()?);
    }
    let residual_norm = if truncated { 0.0 } else { states.last().unwrap().apply(qplus)?.norm() };
    Ok(GeneratedTower { states, norms, truncated, residual_norm })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Raise,
    Lower,
}

/// Per-pair efficiency |⟨target|Q|source⟩|² / ‖Q source‖² along an energy-ordered
/// ladder. Raising maps member n to n+1; lowering maps n+1 to n. `None` flags a
/// vanishing denominator.
pub fn ladder_fidelity(states: &[StateVector], q: &SparseOperator, direction: Direction) -> Result<Vec<Option<f64>>> {
    if states.len() < 2 {
        return Err(ScarError::TooFewLevels { got: states.len(), need: 2 });
    }
    states
        .windows(2)
        .map(|w| {
            let (src, dst) = match direction {
                Direction::Raise => (&w[0], &w[1]),
                Direction::Lower => (&w[1], &w[0]),
            };
            let x = src.apply(q)?;
            let den = x.norm().powi(2) * dst.norm().powi(2);
            if den <= 1e-24 {
                return Ok(None);
            }
            Ok(Some((dst.inner(&x)?.norm_sqr() / den).min(1.0)))
        })
        .collect()
}

/// f(α) = 1 − ½(|⟨b|S⁺|a⟩|²/‖S⁺a‖² + |⟨a|S⁻|b⟩|²/‖S⁻b‖²), with S± ∝ Y ± iαZ.
pub fn magnon_cost(alpha: f64, a: &[C64], b: &[C64], y: &SparseOperator, z: &SparseOperator) -> Result<f64> {
    let ya = y.matvec(a)?;
    let za = z.matvec(a)?;
    let yb = y.matvec(b)?;
    let zb = z.matvec(b)?;
    let ia = C64::new(0.0, alpha);
    let up: Vec<C64> = ya.iter().zip(&za).map(|(p, q)| p + ia * q).collect();
    let down: Vec<C64> = yb.iter().zip(&zb).map(|(p, q)| p - ia * q).collect();
    let ratio = |t: &[C64], x: &[C64]| {
        let n = norm(x).powi(2);
        if n < 1e-300 {
            0.0
        } else {
            dot(t, x).norm_sqr() / (n * norm(t).powi(2))
        }
    };
    Ok(1.0 - 0.5 * (ratio(b, &up) + ratio(a, &down)))
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaOptimum {
    pub alpha: f64,
    pub cost: f64,
    /// Every refined local minimum (α, f) found on the search interval.
    pub local_minima: Vec<(f64, f64)>,
    pub unimodal: bool,
    pub converged: bool,
}

pub const ALPHA_RANGE: (f64, f64) = (0.1, 1.5);
const ALPHA_GRID: usize = 141;
const ALPHA_TOL: f64 = 1e-4;

/// Grid bracketing plus golden-section refinement on [0.1, 1.5].
pub fn optimize_alpha(a: &StateVector, b: &StateVector, y: &SparseOperator, z: &SparseOperator) -> Result<AlphaOptimum> {
    if a.basis() != y.basis() || b.basis() != y.basis() || z.basis() != y.basis() {
        return Err(ScarError::BasisMismatch { left: a.basis().to_string(), right: y.basis().to_string() });
    }
    let f = |x: f64| magnon_cost(x, a.amplitudes(), b.amplitudes(), y, z);
    let (lo, hi) = ALPHA_RANGE;
    let h = (hi - lo) / (ALPHA_GRID - 1) as f64;
    let xs: Vec<f64> = (0..ALPHA_GRID).map(|i| lo + i as f64 * h).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect::<Result<_>>()?;
    let mut brackets = Vec::new();
    for i in 0..ALPHA_GRID {
        let left = i == 0 || fs[i] < fs[i - 1];
        let right = i + 1 == ALPHA_GRID || fs[i] <= fs[i + 1];
        if left && right {
            brackets.push((xs[i.saturating_sub(1)], xs[(i + 1).min(ALPHA_GRID - 1)]));
        }
    }
    let mut minima = Vec::new();
    let mut converged = true;
    for (l, r) in brackets {
        let (x, fx, ok) = golden_section(&f, l, r, ALPHA_TOL)?;
        converged &= ok;
        minima.push((x, fx));
    }
    let best = minima.iter().copied().min_by(|p, q| p.1.total_cmp(&q.1)).expect("grid has a minimum");
    Ok(AlphaOptimum { alpha: best.0, cost: best.1, unimodal: minima.len() == 1, local_minima: minima, converged })
}

fn golden_section(f: &impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64, bool)> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            let x = 0.5 * (a + b);
            return Ok((x, f(x)?, true));
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?, false))
}

#[derive(Clone, Debug, Serialize)]
pub struct SpacingReport {
    pub spacings: Vec<f64>,
    /// The same spacings in PXP units (H_PXP = √2·H).
    pub pxp_spacings: Vec<f64>,
    pub model_frame_prediction: f64,
    pub pxp_frame_prediction: f64,
    /// Mean spacing over the middle half of the tower.
    pub mid_spectrum_mean: f64,
}

pub fn scar_spacing_report(energies: &[f64]) -> Result<SpacingReport> {
    if energies.len() < 2 {
        return Err(ScarError::TooFewLevels { got: energies.len(), need: 2 });
    }
    let spacings: Vec<f64> = energies.windows(2).map(|w| w[1] - w[0]).collect();
    let n = spacings.len();
    let mid = &spacings[n / 4..(n - n / 4).max(n / 4 + 1)];
    Ok(SpacingReport {
        pxp_spacings: spacings.iter().map(|s| s * SQRT_2).collect(),
        mid_spectrum_mean: mid.iter().sum::<f64>() / mid.len() as f64,
        spacings,
        model_frame_prediction: 1.0,
        pxp_frame_prediction: SQRT_2,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LadderReport {
    pub step_fidelities: Vec<Option<f64>>,
    pub alpha_optima: Vec<Option<AlphaOptimum>>,
    pub spacings: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ScarAnalysisOptions {
    pub momentum: Option<usize>,
    pub cut: Option<usize>,
    pub params: TowerParams,
    pub bulk_neighbours: usize,
    pub top_view: usize,
}

impl Default for ScarAnalysisOptions {
    fn default() -> Self {
        ScarAnalysisOptions { momentum: Some(0), cut: None, params: TowerParams::default(), bulk_neighbours: 20, top_view: 11 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScarReport {
    pub sector: String,
    pub dim: usize,
    pub cut: usize,
    pub tower: ScarTower,
    pub bulk: Vec<BulkComparison>,
    /// Q⁻ efficiency per consecutive pair, from the bottom of the tower.
    pub q_minus_efficiency: Vec<Option<f64>>,
    pub spacing: Option<SpacingReport>,
    pub top_view: Vec<usize>,
    pub params: TowerParams,
    #[serde(skip)]
    pub overlaps: Vec<f64>,
    #[serde(skip)]
    pub eigenvalues: Vec<f64>,
}

impl ScarReport {
    /// Scatter data: index, energy, overlap, tower member id (empty if bulk).
    pub fn scatter_csv(&self) -> String {
        let mut member = vec![None; self.eigenvalues.len()];
        for (m, g) in self.tower.indices.iter().enumerate() {
            for &i in g {
                member[i] = Some(m);
            }
        }
        let mut out = String::from("index,energy,overlap,tower_member\n");
        for (i, e) in self.eigenvalues.iter().enumerate() {
            let tag = member[i].map(|m| m.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{i},{e:?},{:?},{tag}", self.overlaps[i]);
        }
        out
    }
}

/// Full pipeline on the C = 0 sector (optionally one momentum block of it):
/// spectrum, ⊗|j⟩ overlaps, tower, entropies, bulk comparison, Q⁻ efficiencies.
pub fn analyze_c0_tower(cfg: &SpinChainConfig, opts: &ScarAnalysisOptions) -> Result<ScarReport> {
    let c0 = Arc::new(sectors::counting_sector(cfg, 0)?);
    let sector = match opts.momentum {
        Some(k) => sectors::momentum_sector(&c0, k)?,
        None => (*c0).clone(),
    };
    analyze_tower_in(cfg, &sector, &c0, opts)
}

/// Same pipeline on an arbitrary sector. `ladder_space` is the product sector
/// on which Q± act (the sector itself or its momentum parent).
pub fn analyze_tower_in(cfg: &SpinChainConfig, sector: &Sector, ladder_space: &Arc<Sector>, opts: &ScarAnalysisOptions) -> Result<ScarReport> {
    let cut = opts.cut.unwrap_or_else(|| default_cut(cfg.sites()));
    let h = sectors::sector_hamiltonian(cfg, sector)?;
    let sd = spectral::diagonalize(&h, DiagMode::Dense { vectors: true })?;
    let psi0 = sector.restrict_from_full(&initial_state(cfg, &InitialKind::AllUpZ)?)?;
    let overlaps = eigenstate_overlaps(&sd, &psi0)?;
    let mut tower = detect_scar_tower(&sd, &psi0, &opts.params)?;
    let mut bulk = Vec::new();
    let mut eff = Vec::new();
    if !tower.is_empty() {
        annotate_entropies(&mut tower, sector, cut)?;
        bulk = compare_with_bulk(&sd, &overlaps, &tower, sector, cut, opts.bulk_neighbours)?;
        if tower.len() >= 2 {
            let lifted: Vec<StateVector> =
                tower.representatives.iter().map(|r| lift_into(sector, ladder_space, r)).collect::<Result<_>>()?;
            let q = q_operators_on(cfg.a(), cfg, ladder_space.product_basis()?)?;
            eff = ladder_fidelity(&lifted, &q.qminus, Direction::Lower)?;
        }
    }
    let spacing = (tower.len() >= 2).then(|| scar_spacing_report(&tower.energies)).transpose()?;
    Ok(ScarReport {
        sector: sector.label().to_string(),
        dim: sector.dim(),
        cut,
        top_view: tower.top(opts.top_view).collect(),
        bulk,
        q_minus_efficiency: eff,
        spacing,
        params: opts.params.clone(),
        tower,
        overlaps,
        eigenvalues: sd.eigenvalues().to_vec(),
    })
}

/// Lift a state from `sector` up its parent chain until it lives on `target`.
pub fn lift_into(sector: &Sector, target: &Sector, v: &StateVector) -> Result<StateVector> {
    let mut cur = v.clone();
    let mut sec = sector;
    while sec.tag() != target.tag() {
        cur = sec.lift(&cur)?;
        sec = sec.parent().ok_or_else(|| ScarError::Sector(format!("{} is not below {}", sector.label(), target.label())))?;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_hamiltonian, build_spinhalf_tower, collective_generator, Axis};
    use crate::sectors::{counting_sector, momentum_sector, sector_hamiltonian};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(two_j: u32, n: usize, a: f64) -> SpinChainConfig {
        SpinChainConfig::new(two_j, n, a, 0.0).unwrap()
    }

    /// The free-spin multiplets of a 27-state chain carry at most 20/64 of
    /// the weight, below the default 10/dim floor.
    fn small_space() -> TowerParams {
        TowerParams { floor_factor: 1.0, ..TowerParams::default() }
    }

    fn binomial(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn entropy_examples() {
        let c = cfg(2, 4, 0.0);
        let prod = initial_state(&c, &InitialKind::AllDownX).unwrap();
        assert!(bipartite_entropy(&prod, 2).unwrap().abs() < 1e-12);

        let g = cfg(1, 2, 0.0).geometry();
        let s = 0.5f64.sqrt();
        let bell = StateVector::new(g.full_tag(), vec![C64::new(s, 0.0), ZERO, ZERO, C64::new(s, 0.0)]);
        assert!((bipartite_entropy(&bell, 1).unwrap() - 2f64.ln()).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let amps: Vec<C64> = (0..81).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let r = StateVector::new(c.geometry().full_tag(), amps).normalized().unwrap();
        let e = bipartite_entropy(&r, 2).unwrap();
        assert!(e > 0.0 && e <= 2.0 * 3f64.ln() + 1e-12);

        let bad = StateVector::new(g.full_tag(), vec![C64::new(1.0, 0.0); 4]);
        assert!(bipartite_entropy(&bad, 1).is_err());
        assert!(bipartite_entropy(&bell, 2).is_err());
    }

    #[test]
    fn overlaps_indicator_and_completeness() {
        let c = cfg(2, 3, 0.3);
        let h = build_hamiltonian(&c).unwrap();
        let sd = spectral::diagonalize(&h, DiagMode::Dense { vectors: true }).unwrap();
        let ov = eigenstate_overlaps(&sd, &sd.eigenvector(5).unwrap()).unwrap();
        for (i, o) in ov.iter().enumerate() {
            assert!((o - if i == 5 { 1.0 } else { 0.0 }).abs() < 1e-10);
        }
        let psi = initial_state(&c, &InitialKind::AllUpZ).unwrap();
        let total: f64 = eigenstate_overlaps(&sd, &psi).unwrap().iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
        let values_only = spectral::diagonalize(&h, DiagMode::Dense { vectors: false }).unwrap();
        assert!(matches!(eigenstate_overlaps(&values_only, &psi), Err(ScarError::MissingEigenvectors)));
    }

    #[test]
    fn free_limit_overlaps_are_binomial() {
        for (tj, n) in [(2u32, 3usize), (3, 3)] {
            let c = cfg(tj, n, 1.0);
            let h = build_hamiltonian(&c).unwrap();
            let sd = spectral::diagonalize(&h, DiagMode::Dense { vectors: true }).unwrap();
            let psi = initial_state(&c, &InitialKind::AllUpZ).unwrap();
            let ov = eigenstate_overlaps(&sd, &psi).unwrap();
            let m = (tj as u64) * n as u64;
            let mut per_level = vec![0.0; m as usize + 1];
            for (i, e) in sd.eigenvalues().iter().enumerate() {
                per_level[(e + m as f64 / 2.0).round() as usize] += ov[i];
            }
            for (k, w) in per_level.iter().enumerate() {
                let want = binomial(m, k as u64) / 2f64.powi(m as i32);
                assert!((w - want).abs() < 1e-10, "2j={tj} k={k}");
                assert!((w - per_level[m as usize - k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn detects_injected_spin_half_tower() {
        let c = cfg(1, 6, 0.5);
        let t = build_spinhalf_tower(&c).unwrap();
        let h = build_hamiltonian(&c).unwrap();
        let sd = spectral::diagonalize(&h, DiagMode::Dense { vectors: true }).unwrap();
        let mut inj = vec![ZERO; h.dim()];
        for s in &t.states {
            for (x, y) in inj.iter_mut().zip(s.amplitudes()) {
                *x += y;
            }
        }
        let psi = StateVector::new(h.basis().clone(), inj).normalized().unwrap();
        // Seven equal weights sit below the default 10/dim floor at dim 64.
        let params = TowerParams { step: 0.5, floor_factor: 1.0, ..TowerParams::default() };
        let tower = detect_scar_tower(&sd, &psi, &params).unwrap();
        assert_eq!(tower.len(), 7);
        for (k, rep) in tower.representatives.iter().enumerate() {
            assert!((rep.inner(&t.states[k]).unwrap().norm() - 1.0).abs() < 1e-8);
            assert!((tower.energies[k] - t.energies[k]).abs() < 1e-9);
        }
        assert!(tower.energies.windows(2).all(|w| w[1] > w[0]));
        assert!(tower.overlaps.iter().all(|&o| (0.0..=1.0 + 1e-12).contains(&o)));
    }

    #[test]
    fn spin_one_tower_cardinality() {
        let c = cfg(2, 6, 0.0);
        let rep = analyze_c0_tower(&c, &ScarAnalysisOptions::default()).unwrap();
        assert_eq!(rep.tower.len(), c.tower_size());
        assert!((rep.tower.total_weight - 1.0).abs() < 1e-10);
        for r in &rep.tower.representatives {
            assert!((r.norm() - 1.0).abs() < 1e-12);
        }
        assert!(rep.q_minus_efficiency.iter().all(|e| e.is_some()));
        let csv = rep.scatter_csv();
        assert_eq!(csv.lines().count(), rep.dim + 1);
    }

    #[test]
    fn representative_is_psi0_projection() {
        // Degenerate free spectrum: the representative of each J^x level is the
        // normalized projection of ψ0, orthogonal to everything else in the cluster.
        let c = cfg(2, 3, 1.0);
        let h = build_hamiltonian(&c).unwrap();
        let sd = spectral::diagonalize(&h, DiagMode::Dense { vectors: true }).unwrap();
        let psi = initial_state(&c, &InitialKind::AllUpZ).unwrap();
        let tower = detect_scar_tower(&sd, &psi, &small_space()).unwrap();
        assert_eq!(tower.len(), 7);
        let jx = collective_generator(Axis::X, &c).unwrap();
        for (k, rep) in tower.representatives.iter().enumerate() {
            let e = rep.expectation(&jx).unwrap().re;
            assert!((e - (k as f64 - 3.0)).abs() < 1e-10);
            let resid = rep.apply(&jx).unwrap();
            let r: f64 = resid.amplitudes().iter().zip(rep.amplitudes()).map(|(x, y)| (x - y * e).norm_sqr()).sum();
            assert!(r.sqrt() < 1e-10);
            for &i in &tower.indices[k] {
                let v = sd.eigenvector(i).unwrap();
                let perp_part = v.inner(&psi).unwrap() - v.inner(rep).unwrap() * rep.inner(&psi).unwrap();
                assert!(perp_part.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn empty_tower_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 200;
        let mut m = DMatrix::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        m = &m + m.adjoint();
        let h = SparseOperator::from_dense(BasisTag::Plain { dim: n }, &m).unwrap();
        let sd = spectral::diagonalize(&h, DiagMode::Dense { vectors: true }).unwrap();
        // Equal weight on every eigenvector: nothing rises above the floor.
        let v = sd.eigenvectors().unwrap();
        let amps: Vec<C64> = (0..n).map(|r| v.row(r).iter().sum()).collect();
        let psi = StateVector::new(h.basis().clone(), amps).normalized().unwrap();
        let tower = detect_scar_tower(&sd, &psi, &TowerParams::default()).unwrap();
        assert!(tower.empty && tower.is_empty());
        assert!((tower.total_weight - 1.0).abs() < 1e-10);
    }

    #[test]
    fn approximate_ground_state_spin_half() {
        let c = cfg(1, 4, 0.0);
        let c0 = counting_sector(&c, 0).unwrap();
        let gs = approximate_ground_state(&c, &c0).unwrap();
        let s = 0.5f64.sqrt();
        assert!((gs.state.amplitudes()[0] - C64::new(s, 0.0)).norm() < 1e-14);
        assert!((gs.state.amplitudes()[1] - C64::new(s, 0.0)).norm() < 1e-14);
        assert!((gs.projected_norm - (2.0f64 / 16.0).sqrt()).abs() < 1e-14);
        let full = sectors::full_sector(&c).unwrap();
        assert!(approximate_ground_state(&c, &full).is_err());
    }

    #[test]
    fn approximate_ground_state_spin_one() {
        let c = cfg(2, 5, 0.0);
        let c0 = Arc::new(counting_sector(&c, 0).unwrap());
        let gs = approximate_ground_state(&c, &c0).unwrap();
        assert!(gs.projected_norm < 1.0);
        let h = sector_hamiltonian(&c, &c0).unwrap();
        let sd = spectral::diagonalize(&h, DiagMode::Dense { vectors: true }).unwrap();
        let ov = sd.eigenvector(0).unwrap().inner(&gs.state).unwrap().norm_sqr();
        assert!(ov > 0.9, "{ov}");
        // The momentum-block version is the same state seen through the isometry.
        let k0 = momentum_sector(&c0, 0).unwrap();
        let gk = approximate_ground_state(&c, &k0).unwrap();
        let back = k0.lift(&gk.state).unwrap();
        assert!((back.inner(&gs.state).unwrap().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_tower_is_exact() {
        let c = cfg(2, 3, 1.0);
        let h = build_hamiltonian(&c).unwrap();
        let q = model::build_q_operators(1.0, &c).unwrap();
        let gs = initial_state(&c, &InitialKind::AllDownX).unwrap();
        let t = generate_tower(&gs, &q.qplus, 6).unwrap();
        assert!(!t.truncated && t.states.len() == 7);
        for (k, s) in t.states.iter().enumerate() {
            let e = k as f64 - 3.0;
            let hs = s.apply(&h).unwrap();
            let r: f64 = hs.amplitudes().iter().zip(s.amplitudes()).map(|(x, y)| (x - y * e).norm_sqr()).sum();
            assert!(r.sqrt() <= 1e-10);
        }
        assert!(t.residual_norm <= 1e-8);
        for d in [Direction::Raise, Direction::Lower] {
            let q_op = if d == Direction::Raise { &q.qplus } else { &q.qminus };
            for f in ladder_fidelity(&t.states, q_op, d).unwrap() {
                assert!((f.unwrap() - 1.0).abs() <= 1e-10);
            }
        }
        let sr = scar_spacing_report(&t.states.iter().map(|s| s.expectation(&h).unwrap().re).collect::<Vec<_>>()).unwrap();
        assert!(sr.spacings.iter().all(|s| (s - 1.0).abs() < 1e-10));
    }

    #[test]
    fn truncation_flag() {
        let c = cfg(2, 3, 1.0);
        let q = model::build_q_operators(1.0, &c).unwrap();
        let gs = initial_state(&c, &InitialKind::AllDownX).unwrap();
        let t = generate_tower(&gs, &q.qplus, 8).unwrap();
        assert!(t.truncated);
        assert_eq!(t.states.len(), 7);
    }

    #[test]
    fn spin_half_spacing_report() {
        let t = build_spinhalf_tower(&cfg(1, 6, 0.5)).unwrap();
        let r = scar_spacing_report(&t.energies).unwrap();
        assert!(r.spacings.iter().all(|s| (s - 0.5).abs() <= 1e-10));
        assert!((r.pxp_spacings[0] - 0.5 * SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn spin_one_generated_tower_tracks_detected() {
        let c = cfg(2, 6, 0.0);
        let rep = analyze_c0_tower(&c, &ScarAnalysisOptions::default()).unwrap();
        let c0 = Arc::new(counting_sector(&c, 0).unwrap());
        let k0 = momentum_sector(&c0, 0).unwrap();
        let gs = approximate_ground_state(&c, &c0).unwrap();
        let q = q_operators_on(0.0, &c, c0.product_basis().unwrap()).unwrap();
        let gen = generate_tower(&gs.state, &q.qplus, 2 * 6).unwrap();
        for k in 0..=6 {
            let det = k0.lift(&rep.tower.representatives[k]).unwrap();
            let o = det.inner(&gen.states[k]).unwrap().norm_sqr();
            assert!(o >= 0.8, "member {k}: {o}");
        }
    }

    #[test]
    fn alpha_is_one_for_exact_ladder() {
        let c = cfg(2, 3, 1.0);
        let h = build_hamiltonian(&c).unwrap();
        let sd = spectral::diagonalize(&h, DiagMode::Dense { vectors: true }).unwrap();
        let psi = initial_state(&c, &InitialKind::AllUpZ).unwrap();
        let tower = detect_scar_tower(&sd, &psi, &small_space()).unwrap();
        let y = collective_generator(Axis::Y, &c).unwrap();
        let z = collective_generator(Axis::Z, &c).unwrap();
        for k in 0..tower.len() - 1 {
            let opt = optimize_alpha(&tower.representatives[k], &tower.representatives[k + 1], &y, &z).unwrap();
            assert!((opt.alpha - 1.0).abs() <= 1e-4, "{k}: {opt:?}");
            assert!(opt.cost.abs() < 1e-8 && opt.unimodal && opt.converged);
        }
    }

    #[test]
    fn golden_section_on_parabola() {
        let f = |x: f64| -> Result<f64> { Ok((x - 0.707).powi(2)) };
        let (x, _, ok) = golden_section(&f, 0.1, 1.5, 1e-6).unwrap();
        assert!(ok && (x - 0.707).abs() < 1e-6);
    }
}
