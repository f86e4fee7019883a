// SPDX-License-Identifier: Apache-2.0
//! Quench dynamics: product initial states, eigenbasis or Krylov propagation,
//! Loschmidt-echo fidelity and revival analysis.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chain::{SpinChainConfig, C64, ZERO};
use crate::error::{Result, ScarError};
use crate::model;
use crate::operator::{CodeSet, SparseOperator};
use crate::sectors::Sector;
use crate::spectral::{self, DiagMode, SpectralData};
use crate::state::{dot, norm, StateVector};

#[derive(Clone, Debug, PartialEq)]
pub enum InitialKind {
    /// ⊗|+j⟩ along z.
    AllUpZ,
    /// ⊗ of the lowest S^x eigenstate.
    AllDownX,
    /// Full-basis amplitudes supplied by the caller.
    Custom(Vec<C64>),
}

impl std::str::FromStr for InitialKind {
    type Err = ScarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-up-z" => Ok(InitialKind::AllUpZ),
            "all-down-x" => Ok(InitialKind::AllDownX),
            other => Err(ScarError::InvalidConfig(format!("unknown initial state '{other}' (expected all-up-z or all-down-x)"))),
        }
    }
}

/// Normalized initial state in the full product basis.
pub fn initial_state(cfg: &SpinChainConfig, kind: &InitialKind) -> Result<StateVector> {
    let g = cfg.geometry();
    let dim = usize::try_from(g.dim()).map_err(|_| ScarError::InvalidConfig("state too large".into()))?;
    let tag = g.full_tag();
    match kind {
        InitialKind::AllUpZ => StateVector::basis_state(tag, dim, dim - 1),
        InitialKind::AllDownX => {
            let local = model::x_polarized_local(cfg.two_j(), true)?;
            Ok(StateVector::new(tag, model::product_amplitudes(&g, &local, CodeSet::Range(g.dim()))))
        }
        InitialKind::Custom(amps) => {
            if amps.len() != dim {
                return Err(ScarError::DimensionMismatch { expected: dim, got: amps.len() });
            }
            StateVector::new(tag, amps.clone()).normalized()
        }
    }
}

/// Initial state projected onto a sector, with the weight it retains there.
pub fn initial_state_in(cfg: &SpinChainConfig, kind: &InitialKind, sector: &Sector) -> Result<(StateVector, f64)> {
    let full = initial_state(cfg, kind)?;
    let proj = sector.restrict_from_full(&full)?;
    let w = proj.norm().powi(2);
    Ok((proj, w))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EvolveMethod {
    Eigenbasis,
    Krylov { tol: f64, max_dim: usize },
}

pub const KRYLOV_TOL: f64 = 1e-8;
pub const KRYLOV_MAX_DIM: usize = 60;

impl EvolveMethod {
    pub fn krylov() -> Self {
        EvolveMethod::Krylov { tol: KRYLOV_TOL, max_dim: KRYLOV_MAX_DIM }
    }

    /// Eigenbasis when the block fits the dense cap, Krylov otherwise.
    pub fn auto(dim: usize) -> Self {
        if dim <= spectral::dense_cap() {
            EvolveMethod::Eigenbasis
        } else {
            Self::krylov()
        }
    }
}

/// Uniform grid 0, dt, …, t_max (inclusive within rounding).
pub fn time_grid(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if dt.is_nan() || dt <= 0.0 || !t_max.is_finite() || t_max < 0.0 {
        return Err(ScarError::InvalidConfig(format!("bad time grid t_max={t_max} dt={dt}")));
    }
    let steps = (t_max / dt + 1e-9).floor() as usize;
    Ok((0..=steps).map(|i| i as f64 * dt).collect())
}

pub fn default_time_grid() -> Vec<f64> {
    time_grid(40.0, 0.02).expect("static grid")
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fidelity: Vec<f64>,
    pub energy: Vec<f64>,
    pub norm: Vec<f64>,
    pub method: EvolveMethod,
    /// Largest accepted local error estimate (Krylov); zero for the eigenbasis path.
    pub max_step_error: f64,
}

impl Trajectory {
    pub fn max_norm_deviation(&self) -> f64 {
        self.norm.iter().map(|n| (n - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.energy.first().copied().unwrap_or(0.0);
        let scale = e0.abs().max(1.0);
        self.energy.iter().map(|e| (e - e0).abs() / scale).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,fidelity,energy,norm\n");
        for i in 0..self.times.len() {
            let _ = writeln!(out, "{:?},{:?},{:?},{:?}", self.times[i], self.fidelity[i], self.energy[i], self.norm[i]);
        }
        out
    }
}

pub fn evolve(psi0: &StateVector, h: &SparseOperator, times: &[f64], method: EvolveMethod) -> Result<Trajectory> {
    if psi0.basis() != h.basis() {
        return Err(ScarError::BasisMismatch { left: psi0.basis().to_string(), right: h.basis().to_string() });
    }
    psi0.require_normalized(1e-10)?;
    match method {
        EvolveMethod::Eigenbasis => {
            let sd = spectral::diagonalize(h, DiagMode::Dense { vectors: true })?;
            evolve_in_eigenbasis(psi0, &sd, times)
        }
        EvolveMethod::Krylov { tol, max_dim } => evolve_krylov(psi0, h, times, tol, max_dim),
    }
}

/// Fidelity from eigenbasis weights: F(t) = |Σ |c_n|² e^{−iE_n t}|².
pub fn evolve_in_eigenbasis(psi0: &StateVector, sd: &SpectralData, times: &[f64]) -> Result<Trajectory> {
    if psi0.basis() != sd.basis() {
        return Err(ScarError::BasisMismatch { left: psi0.basis().to_string(), right: sd.basis().to_string() });
    }
    let v = sd.eigenvectors().ok_or(ScarError::MissingEigenvectors)?;
    let x = DMatrix::from_column_slice(psi0.dim(), 1, psi0.amplitudes());
    let c = v.adjoint() * x;
    let w: Vec<f64> = c.iter().map(|z| z.norm_sqr()).collect();
    let e = sd.eigenvalues();
    let total: f64 = w.iter().sum();
    let energy: f64 = w.iter().zip(e).map(|(w, e)| w * e).sum();
    let fidelity = times
        .iter()
        .map(|&t| w.iter().zip(e).map(|(w, e)| C64::from_polar(*w, -e * t)).sum::<C64>().norm_sqr())
        .collect();
    Ok(Trajectory {
        times: times.to_vec(),
        fidelity,
        energy: vec![energy; times.len()],
        norm: vec![total.sqrt(); times.len()],
        method: EvolveMethod::Eigenbasis,
        max_step_error: 0.0,
    })
}

fn evolve_krylov(psi0: &StateVector, h: &SparseOperator, times: &[f64], tol: f64, max_dim: usize) -> Result<Trajectory> {
    if max_dim == 0 {
        return Err(ScarError::InvalidConfig("Krylov dimension must be positive".into()));
    }
    let mut prop = KrylovPropagator::new(h, tol, max_dim);
    let mut psi = psi0.amplitudes().to_vec();
    let mut t_now = 0.0;
    let mut hpsi = vec![ZERO; psi.len()];
    let mut traj = Trajectory {
        times: times.to_vec(),
        fidelity: Vec::with_capacity(times.len()),
        energy: Vec::with_capacity(times.len()),
        norm: Vec::with_capacity(times.len()),
        method: EvolveMethod::Krylov { tol, max_dim },
        max_step_error: 0.0,
    };
    for &t in times {
        prop.advance(&mut psi, t - t_now)?;
        t_now = t;
        h.matvec_into(&psi, &mut hpsi)?;
        traj.fidelity.push(dot(psi0.amplitudes(), &psi).norm_sqr());
        traj.energy.push(dot(&psi, &hpsi).re);
        traj.norm.push(norm(&psi));
    }
    traj.max_step_error = prop.max_error;
    Ok(traj)
}

/// Lanczos approximation of e^{−iHτ}ψ with step halving on the a-posteriori
/// estimate β_m |[e^{−iTτ} e₁]_m|.
pub struct KrylovPropagator<'a> {
    h: &'a SparseOperator,
    tol: f64,
    max_dim: usize,
    pub max_error: f64,
    min_step: f64,
}

impl<'a> KrylovPropagator<'a> {
    pub fn new(h: &'a SparseOperator, tol: f64, max_dim: usize) -> Self {
        KrylovPropagator { h, tol, max_dim, max_error: 0.0, min_step: 1e-10 }
    }

    pub fn advance(&mut self, psi: &mut Vec<C64>, tau: f64) -> Result<()> {
        let mut remaining = tau;
        while remaining.abs() > 0.0 {
            let done = self.substep(psi, remaining)?;
            remaining -= done;
            if (remaining.abs()) < 1e-15 * tau.abs().max(1.0) {
                break;
            }
        }
        Ok(())
    }

    /// Advances by at most `tau`; returns the time actually covered.
    fn substep(&mut self, psi: &mut Vec<C64>, tau: f64) -> Result<f64> {
        let n = psi.len();
        let beta0 = norm(psi);
        if beta0 == 0.0 {
            return Ok(tau);
        }
        let mut q: Vec<Vec<C64>> = vec![psi.iter().map(|x| x / beta0).collect()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut w = vec![ZERO; n];
        let m_cap = self.max_dim.min(n);
        loop {
            let j = q.len() - 1;
            self.h.matvec_into(&q[j], &mut w)?;
            let a = dot(&q[j], &w).re;
            for (wi, qi) in w.iter_mut().zip(&q[j]) {
                *wi -= qi * a;
            }
            if j > 0 {
                for (wi, qi) in w.iter_mut().zip(&q[j - 1]) {
                    *wi -= qi * beta[j - 1];
                }
            }
            for _ in 0..2 {
                for qk in &q {
                    let c = dot(qk, &w);
                    for (wi, qi) in w.iter_mut().zip(qk) {
                        *wi -= c * qi;
                    }
                }
            }
            alpha.push(a);
            let b = norm(&w);
            let m = q.len();
            let breakdown = b <= 1e-14 * (1.0 + alpha.iter().fold(0.0f64, |s, x| s.max(x.abs())));
            let full = m >= m_cap;
            if breakdown || full || m % 4 == 0 {
                let t = DMatrix::from_fn(m, m, |r, c| match r.abs_diff(c) {
                    0 => alpha[r],
                    1 => beta[r.min(c)],
                    _ => 0.0,
                });
                let eig = t.symmetric_eigen();
                let expm_e1 = |dt: f64| -> Vec<C64> {
                    (0..m)
                        .map(|r| {
                            (0..m)
                                .map(|k| C64::from_polar(eig.eigenvectors[(r, k)] * eig.eigenvectors[(0, k)], -eig.eigenvalues[k] * dt))
                                .sum()
                        })
                        .collect()
                };
                let mut dt = tau;
                loop {
                    let y = expm_e1(dt);
                    let err = if breakdown { 0.0 } else { beta0 * b * y[m - 1].norm() };
                    if err <= self.tol {
                        self.max_error = self.max_error.max(err);
                        let mut out = vec![ZERO; n];
                        for (k, qk) in q.iter().enumerate() {
                            let c = y[k] * beta0;
                            for (o, x) in out.iter_mut().zip(qk) {
                                *o += c * x;
                            }
                        }
                        *psi = out;
                        return Ok(dt);
                    }
                    // Grow the space first; only shrink the step once it is full.
                    if !full {
                        break;
                    }
                    dt *= 0.5;
                    if dt.abs() < self.min_step {
                        return Err(ScarError::KrylovStep(format!(
                            "error estimate {err:.2e} above tolerance {:.1e} at the smallest step with Krylov dimension {m}",
                            self.tol
                        )));
                    }
                }
            }
            beta.push(b);
            q.push(w.iter().map(|x| x / b).collect());
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RevivalMetrics {
    pub peak_times: Vec<f64>,
    pub peak_values: Vec<f64>,
    pub period_estimate: Option<f64>,
    /// Slope of ln(peak value) against time; negative means decaying revivals.
    pub damping_rate: Option<f64>,
    /// False when fewer than three peaks were found.
    pub complete: bool,
    pub prominence: f64,
}

pub const PEAK_PROMINENCE: f64 = 0.05;

/// Interior local maxima with topographic prominence at least `prominence`,
/// refined by a parabola through the neighbouring samples.
pub fn find_peaks(t: &[f64], f: &[f64], prominence: f64) -> Vec<(f64, f64)> {
    let n = f.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if f[i] > f[i - 1] {
            // Plateau: take its centre, requiring a strict drop afterwards.
            let mut k = i;
            while k + 1 < n && f[k + 1] == f[i] {
                k += 1;
            }
            if k + 1 < n && f[k + 1] < f[i] {
                let c = (i + k) / 2;
                let mut left_min = f[i];
                let mut l = i;
                while l > 0 && f[l - 1] <= f[i] {
                    l -= 1;
                    left_min = left_min.min(f[l]);
                }
                let mut right_min = f[i];
                let mut r = k;
                while r + 1 < n && f[r + 1] <= f[i] {
                    r += 1;
                    right_min = right_min.min(f[r]);
                }
                if f[i] - left_min.max(right_min) >= prominence {
                    peaks.push(refine(t, f, c));
                }
            }
            i = k + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

fn refine(t: &[f64], f: &[f64], i: usize) -> (f64, f64) {
    let (y0, y1, y2) = (f[i - 1], f[i], f[i + 1]);
    let h = t[i + 1] - t[i];
    let denom = y0 - 2.0 * y1 + y2;
    if denom >= 0.0 || (t[i] - t[i - 1] - h).abs() > 1e-9 * h.abs() {
        return (t[i], y1);
    }
    let x = 0.5 * (y0 - y2) / denom;
    (t[i] + x * h, y1 - 0.25 * (y0 - y2) * x)
}

pub fn revival_metrics(traj: &Trajectory) -> RevivalMetrics {
    revival_metrics_with(&traj.times, &traj.fidelity, PEAK_PROMINENCE)
}

pub fn revival_metrics_with(times: &[f64], fidelity: &[f64], prominence: f64) -> RevivalMetrics {
    let peaks = find_peaks(times, fidelity, prominence);
    let (peak_times, peak_values): (Vec<f64>, Vec<f64>) = peaks.into_iter().unzip();
    let period_estimate = (peak_times.len() >= 2).then(|| {
        let mut gaps: Vec<f64> = peak_times.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.sort_by(f64::total_cmp);
        let m = gaps.len();
        if m % 2 == 1 {
            gaps[m / 2]
        } else {
            0.5 * (gaps[m / 2 - 1] + gaps[m / 2])
        }
    });
    let damping_rate = (peak_times.len() >= 2).then(|| {
        let logs: Vec<f64> = peak_values.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
        let n = logs.len() as f64;
        let mt = peak_times.iter().sum::<f64>() / n;
        let ml = logs.iter().sum::<f64>() / n;
        let sxy: f64 = peak_times.iter().zip(&logs).map(|(t, l)| (t - mt) * (l - ml)).sum();
        let sxx: f64 = peak_times.iter().map(|t| (t - mt).powi(2)).sum();
        sxy / sxx
    });
    RevivalMetrics { complete: peak_times.len() >= 3, peak_times, peak_values, period_estimate, damping_rate, prominence }
}
