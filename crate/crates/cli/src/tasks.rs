// SPDX-License-Identifier: Apache-2.0
//! Subcommand bodies. Each returns its artifacts in memory; writing and
//! hashing happen in the manifest layer.

use std::fmt::{Debug, Write as _};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use scarlab::pxp::{build_magnon_ops, hpxp_equivalence, pxp_audit, spin1_to_pxp};
use scarlab::quench::{evolve, initial_state_in, revival_metrics, time_grid, RevivalMetrics};
use scarlab::scars::{analyze_tower_in, lift_into, optimize_alpha, LadderReport, ScarAnalysisOptions, ScarReport};
use scarlab::sectors::{connectivity_fragments, counting_sector, full_sector, momentum_sector, sector_hamiltonian, Sector, SectorManifest};
use scarlab::spectral::{diagonalize, level_statistics, DiagMode, LevelStatistics, SpectrumEnd, UnfoldParams};
use scarlab::SpinChainConfig;

use crate::config::{Metric, RunConfig, SectorChoice, Task};
use crate::CliError;

pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn text(name: &str, s: String) -> Self {
        Artifact { name: name.into(), bytes: s.into_bytes() }
    }

    fn json(name: &str, v: &impl Serialize) -> Self {
        let mut s = serde_json::to_string_pretty(v).expect("serializable");
        s.push('\n');
        Artifact::text(name, s)
    }
}

#[derive(Default)]
pub struct Outcome {
    /// Printed to stdout and stored as summary.json.
    pub summary: Value,
    /// Optional human-readable line printed before the summary.
    pub headline: Option<String>,
    pub artifacts: Vec<Artifact>,
    pub sectors: Vec<SectorManifest>,
    pub timings: Vec<(String, f64)>,
}

struct Clock(Vec<(String, f64)>, Instant);

impl Clock {
    fn new() -> Self {
        Clock(Vec::new(), Instant::now())
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.0.push((stage.into(), (now - self.1).as_secs_f64()));
        self.1 = now;
    }
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match cfg.task {
        Task::Spectrum => spectrum(cfg),
        Task::Rstat => rstat(cfg),
        Task::Dynamics => dynamics(cfg),
        Task::Scars => scars(cfg),
        Task::PxpCheck => pxp_check(cfg),
        Task::Fragments => fragments(cfg),
        Task::Sweep => sweep(cfg),
    }
}

/// A block and the product sector it was cut from.
struct Block {
    parent: Arc<Sector>,
    sector: Sector,
}

fn select(model: &SpinChainConfig, choice: SectorChoice) -> Result<Block, CliError> {
    let parent = match choice.c {
        None => full_sector(model)?,
        Some(c) => {
            if model.a() != 0.0 {
                return Err(CliError::Config(format!(
                    "C{c} is not an invariant block for a = {}; use --sector full (the pattern count is conserved only at a = 0)",
                    model.a()
                )));
            }
            Arc::new(counting_sector(model, c)?)
        }
    };
    let sector = match choice.momentum {
        Some(k) => momentum_sector(&parent, k)?,
        None => (*parent).clone(),
    };
    Ok(Block { parent, sector })
}

/// C = 0 at a = 0 (where it is conserved), else the full space; optional momentum.
fn default_choice(model: &SpinChainConfig, momentum: Option<usize>) -> SectorChoice {
    SectorChoice { c: (model.a() == 0.0).then_some(0), momentum }
}

fn csv_column(header: &str, xs: &[f64]) -> String {
    let mut out = format!("index,{header}\n");
    for (i, x) in xs.iter().enumerate() {
        let _ = writeln!(out, "{i},{x:?}");
    }
    out
}

fn level_stats_on(model: &SpinChainConfig, block: &Block) -> Result<LevelStatistics, CliError> {
    let h = sector_hamiltonian(model, &block.sector)?;
    let sd = diagonalize(&h, DiagMode::Dense { vectors: false })?;
    Ok(level_statistics(sd.eigenvalues(), &UnfoldParams::default())?)
}

fn spectrum(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut clock = Clock::new();
    let block = select(&cfg.model, cfg.sector.unwrap_or(SectorChoice { c: None, momentum: None }))?;
    let h = sector_hamiltonian(&cfg.model, &block.sector)?;
    clock.lap("build");
    let mode = match cfg.lowest {
        Some(count) => DiagMode::Extremal { count: count.min(block.sector.dim()), end: SpectrumEnd::Lowest },
        None => DiagMode::Dense { vectors: false },
    };
    let sd = diagonalize(&h, mode)?;
    clock.lap("diagonalize");
    let e = sd.eigenvalues();
    let summary = json!({
        "sector": block.sector.label().to_string(),
        "dim": block.sector.dim(),
        "levels": e.len(),
        "min": e.first(),
        "max": e.last(),
        "max_residual": sd.max_residual(),
        "method": if cfg.lowest.is_some() { "lanczos" } else { "dense" },
    });
    Ok(Outcome {
        artifacts: vec![Artifact::text("spectrum.csv", sd.to_csv())],
        sectors: vec![block.sector.manifest()],
        summary,
        timings: clock.0,
        ..Default::default()
    })
}

fn rstat(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut clock = Clock::new();
    let choice = cfg.sector.unwrap_or_else(|| default_choice(&cfg.model, Some(1 % cfg.model.sites())));
    let block = select(&cfg.model, choice)?;
    let stats = level_stats_on(&cfg.model, &block)?;
    clock.lap("diagonalize");
    let summary = json!({
        "sector": block.sector.label().to_string(),
        "dim": block.sector.dim(),
        "r_mean": stats.r_mean,
        "r_stderr": stats.r_stderr,
        "ks_wigner": stats.distances.ks_wigner,
        "ks_poisson": stats.distances.ks_poisson,
        "statistics": stats.summary(),
    });
    let mut hist = String::from("left,right,density\n");
    let hg = &stats.histogram;
    for (i, d) in hg.densities.iter().enumerate() {
        let _ = writeln!(hist, "{:?},{:?},{d:?}", hg.edges[i], hg.edges[i + 1]);
    }
    Ok(Outcome {
        artifacts: vec![
            Artifact::text("spacings.csv", csv_column("s", &stats.spacings)),
            Artifact::text("r_values.csv", csv_column("r", &stats.r_values)),
            Artifact::text("histogram.csv", hist),
        ],
        sectors: vec![block.sector.manifest()],
        summary,
        timings: clock.0,
        ..Default::default()
    })
}

#[derive(Serialize)]
struct DynamicsSummary {
    sector: String,
    dim: usize,
    initial: String,
    /// Weight of the initial state inside the chosen block.
    weight: f64,
    method: scarlab::quench::EvolveMethod,
    max_norm_deviation: f64,
    max_energy_drift: f64,
    revival: RevivalMetrics,
}

fn run_dynamics(model: &SpinChainConfig, cfg: &RunConfig, block: &Block) -> Result<(DynamicsSummary, String), CliError> {
    let opts = &cfg.dynamics;
    let kind = opts.initial_kind();
    let (psi, weight) = initial_state_in(model, &kind, &block.sector)?;
    if weight < 1.0 - 1e-10 {
        log::warn!("initial state has weight {weight:.6} in {}; the block-projected state is evolved", block.sector.label());
    }
    let h = sector_hamiltonian(model, &block.sector)?;
    let times = time_grid(opts.tmax, opts.dt)?;
    let method = opts.evolve_method(block.sector.dim());
    let traj = evolve(&psi, &h, &times, method)?;
    let summary = DynamicsSummary {
        sector: block.sector.label().to_string(),
        dim: block.sector.dim(),
        initial: opts.initial.clone(),
        weight,
        method,
        max_norm_deviation: traj.max_norm_deviation(),
        max_energy_drift: traj.max_energy_drift(),
        revival: revival_metrics(&traj),
    };
    Ok((summary, traj.to_csv()))
}

fn dynamics(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut clock = Clock::new();
    let block = select(&cfg.model, cfg.sector.unwrap_or(SectorChoice { c: None, momentum: None }))?;
    let (summary, csv) = run_dynamics(&cfg.model, cfg, &block)?;
    clock.lap("evolve");
    Ok(Outcome {
        artifacts: vec![Artifact::text("fidelity.csv", csv), Artifact::json("revival.json", &summary)],
        sectors: vec![block.sector.manifest()],
        summary: serde_json::to_value(&summary).expect("serializable"),
        timings: clock.0,
        ..Default::default()
    })
}

fn scar_report(model: &SpinChainConfig, cfg: &RunConfig, block: &Block) -> Result<ScarReport, CliError> {
    let opts = ScarAnalysisOptions { momentum: None, cut: cfg.cut, ..Default::default() };
    Ok(analyze_tower_in(model, &block.sector, &block.parent, &opts)?)
}

/// α optima per consecutive pair of the lower half, in the PXP frame (j = 1, C = 0 only).
fn ladder_report(cfg: &RunConfig, block: &Block, report: &ScarReport) -> Result<Option<LadderReport>, CliError> {
    if cfg.model.two_j() != 2 || block.parent.label().to_string() != "C0" || report.tower.len() < 2 {
        return Ok(None);
    }
    let iso = spin1_to_pxp(&cfg.model)?;
    let mags = build_magnon_ops(iso.target())?;
    let frame = report
        .tower
        .representatives
        .iter()
        .map(|v| iso.map_state(&lift_into(&block.sector, &block.parent, v)?))
        .collect::<scarlab::Result<Vec<_>>>()?;
    let pairs = report.tower.len() / 2;
    let alpha_optima = (0..pairs)
        .into_par_iter()
        .map(|i| optimize_alpha(&frame[i], &frame[i + 1], &mags.y_pi, &mags.z_pi).ok())
        .collect();
    Ok(Some(LadderReport {
        step_fidelities: report.q_minus_efficiency.clone(),
        alpha_optima,
        spacings: report.spacing.as_ref().map(|s| s.spacings.clone()).unwrap_or_default(),
    }))
}

fn scars(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut clock = Clock::new();
    let choice = cfg.sector.unwrap_or_else(|| default_choice(&cfg.model, Some(0)));
    let block = select(&cfg.model, choice)?;
    let report = scar_report(&cfg.model, cfg, &block)?;
    clock.lap("tower");
    let ladder = ladder_report(cfg, &block, &report)?;
    clock.lap("ladder");
    let min_eff = report.q_minus_efficiency.iter().flatten().copied().reduce(f64::min);
    let summary = json!({
        "sector": report.sector,
        "dim": report.dim,
        "tower_size": report.tower.len(),
        "empty": report.tower.empty,
        "energies": report.tower.energies,
        "min_q_minus_efficiency": min_eff,
        "mid_spectrum_spacing": report.spacing.as_ref().map(|s| s.mid_spectrum_mean),
        "alpha": ladder.as_ref().map(|l| l.alpha_optima.iter().map(|a| a.as_ref().map(|a| a.alpha)).collect::<Vec<_>>()),
    });
    let mut artifacts = vec![Artifact::json("scars.json", &report), Artifact::text("scatter.csv", report.scatter_csv())];
    if let Some(l) = &ladder {
        artifacts.push(Artifact::json("ladder.json", l));
    }
    Ok(Outcome { artifacts, sectors: vec![block.sector.manifest()], summary, timings: clock.0, ..Default::default() })
}

const PXP_TOL: f64 = 1e-10;

fn pxp_check(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut clock = Clock::new();
    let audit = pxp_audit(cfg.model.sites())?;
    clock.lap("audit");
    let hpxp = cfg.hpxp.map(|(s, p)| hpxp_equivalence(s, p)).transpose()?;
    clock.lap("hpxp");
    let isospectral = audit.spectrum_deviation <= PXP_TOL && audit.spin1_c0_dim == audit.blockade_dim;
    let mut headline = format!(
        "isospectral: {isospectral}, max deviation {:.3e} (tolerance {PXP_TOL:e}); C=0 dim {} = ring blockade dim {} = L_{} {}",
        audit.spectrum_deviation, audit.spin1_c0_dim, audit.blockade_dim, audit.pxp_sites, audit.lucas
    );
    if let Some(h) = &hpxp {
        let _ = write!(headline, "\nhigh-spin PXP (2s={}, {} sites): max deviation {:.3e}", h.two_s, h.physical_sites, h.spectrum_deviation);
    }
    let summary = json!({ "isospectral": isospectral, "passes": audit.passes(PXP_TOL), "audit": audit, "hpxp": hpxp });
    Ok(Outcome {
        artifacts: vec![Artifact::json("pxp_audit.json", &summary)],
        headline: Some(headline),
        summary,
        timings: clock.0,
        ..Default::default()
    })
}

fn fragments(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut clock = Clock::new();
    let model = &cfg.model;
    let parents: Vec<Arc<Sector>> = if model.a() == 0.0 {
        (0..=model.sites() as u32).map(|c| counting_sector(model, c).map(Arc::new)).filter(|s| s.as_ref().map_or(true, |s| s.dim() > 0)).collect::<Result<_, _>>()?
    } else {
        log::warn!("a ≠ 0 does not conserve the pattern count; fragments are computed on the full space");
        vec![full_sector(model)?]
    };
    let per_sector: Vec<(Arc<Sector>, Vec<Sector>)> = parents
        .into_par_iter()
        .map(|p| {
            let h = sector_hamiltonian(model, &p)?;
            let f = connectivity_fragments(&h, &p)?;
            Ok((p, f))
        })
        .collect::<scarlab::Result<_>>()?;
    clock.lap("fragments");
    let mut csv = String::from("sector,fragment,dim,first_code\n");
    let mut rows = Vec::new();
    for (p, frags) in &per_sector {
        for f in frags {
            let _ = writeln!(csv, "{},{},{},{}", p.label(), f.label(), f.dim(), f.states()[0]);
        }
        let largest = frags.iter().map(Sector::dim).max().unwrap_or(0);
        let frozen = frags.iter().filter(|f| f.dim() == 1).count();
        rows.push(json!({ "sector": p.label().to_string(), "dim": p.dim(), "fragments": frags.len(), "largest": largest, "frozen_states": frozen }));
    }
    let summary = json!({
        "total_fragments": per_sector.iter().map(|(_, f)| f.len()).sum::<usize>(),
        "sectors": rows,
    });
    Ok(Outcome {
        artifacts: vec![Artifact::text("fragments.csv", csv)],
        sectors: per_sector.iter().map(|(p, _)| p.manifest()).collect(),
        summary,
        timings: clock.0,
        ..Default::default()
    })
}

#[derive(Serialize, Default, Clone)]
pub struct SweepRow {
    #[serde(rename = "twoJ")]
    pub two_j: u32,
    #[serde(rename = "N")]
    pub n: usize,
    pub a: f64,
    pub theta: f64,
    pub r_block: Option<String>,
    pub r_dim: Option<usize>,
    pub r_mean: Option<f64>,
    pub r_stderr: Option<f64>,
    pub ks_wigner: Option<f64>,
    pub ks_poisson: Option<f64>,
    pub revival_peaks: Option<usize>,
    pub revival_period: Option<f64>,
    pub first_peak: Option<f64>,
    pub damping_rate: Option<f64>,
    pub scar_count: Option<usize>,
    pub error: Option<String>,
}

const SWEEP_HEADER: &str =
    "twoJ,N,a,theta,r_block,r_dim,r_mean,r_stderr,ks_wigner,ks_poisson,revival_peaks,revival_period,first_peak,damping_rate,scar_count,error";

fn cell<T: Debug>(x: &Option<T>) -> String {
    x.as_ref().map(|v| format!("{v:?}")).unwrap_or_default()
}

impl SweepRow {
    fn csv(&self) -> String {
        let err = self.error.as_deref().map(|e| format!("\"{}\"", e.replace('"', "'"))).unwrap_or_default();
        format!(
            "{},{},{:?},{:?},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.two_j,
            self.n,
            self.a,
            self.theta,
            self.r_block.as_deref().unwrap_or_default(),
            cell(&self.r_dim),
            cell(&self.r_mean),
            cell(&self.r_stderr),
            cell(&self.ks_wigner),
            cell(&self.ks_poisson),
            cell(&self.revival_peaks),
            cell(&self.revival_period),
            cell(&self.first_peak),
            cell(&self.damping_rate),
            cell(&self.scar_count),
            err
        )
    }
}

/// One grid point. A failing metric leaves its columns empty and is noted in
/// `error`; the remaining metrics still run.
fn sweep_point(cfg: &RunConfig, two_j: u32, a: f64, theta: f64, metrics: &[Metric]) -> SweepRow {
    let n = cfg.model.sites();
    let mut row = SweepRow { two_j, n, a, theta, ..Default::default() };
    let model = match SpinChainConfig::new(two_j, n, a, theta) {
        Ok(m) => m,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    let mut errors = Vec::new();
    let k0 = default_choice(&model, Some(0));
    for &metric in metrics {
        let result = match metric {
            Metric::Rstat => (|| {
                // An explicit C selection applies only where C is conserved.
                let choice = cfg.sector.map(|s| SectorChoice { c: if a == 0.0 { s.c } else { None }, ..s });
                let block = select(&model, choice.unwrap_or_else(|| default_choice(&model, Some(1 % n))))?;
                row.r_block = Some(block.sector.label().to_string());
                row.r_dim = Some(block.sector.dim());
                let s = level_stats_on(&model, &block)?;
                row.r_mean = Some(s.r_mean);
                row.r_stderr = Some(s.r_stderr);
                row.ks_wigner = Some(s.distances.ks_wigner);
                row.ks_poisson = Some(s.distances.ks_poisson);
                Ok(())
            })(),
            Metric::Revival => (|| {
                let (d, _) = run_dynamics(&model, cfg, &select(&model, k0)?)?;
                row.revival_peaks = Some(d.revival.peak_times.len());
                row.revival_period = d.revival.period_estimate;
                row.first_peak = d.revival.peak_values.first().copied();
                row.damping_rate = d.revival.damping_rate;
                Ok(())
            })(),
            Metric::Scars => (|| {
                let r = scar_report(&model, cfg, &select(&model, k0)?)?;
                row.scar_count = Some(if r.tower.empty { 0 } else { r.tower.len() });
                Ok(())
            })(),
        };
        if let Err(e) = result {
            let e: CliError = e;
            log::warn!("sweep point twoJ={two_j} a={a} theta={theta}, {}: {e}", metric.name());
            errors.push(format!("{}: {e}", metric.name()));
        }
    }
    if !errors.is_empty() {
        row.error = Some(errors.join("; "));
    }
    row
}

fn sweep(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut clock = Clock::new();
    let grid = cfg.sweep.as_ref().expect("sweep grid resolved");
    let points: Vec<(u32, f64, f64)> =
        grid.two_j.iter().flat_map(|&j| grid.a.iter().flat_map(move |&a| grid.theta.iter().map(move |&t| (j, a, t)))).collect();
    // par_iter().collect() keeps grid order regardless of scheduling.
    let rows: Vec<SweepRow> = points.par_iter().map(|&(j, a, t)| sweep_point(cfg, j, a, t, &grid.metrics)).collect();
    clock.lap("sweep");
    let mut csv = format!("{SWEEP_HEADER}\n");
    for r in &rows {
        csv.push_str(&r.csv());
        csv.push('\n');
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    let summary = json!({ "points": rows.len(), "failed": failed, "rows": rows });
    Ok(Outcome {
        artifacts: vec![Artifact::text("sweep.csv", csv), Artifact::json("sweep.json", &rows)],
        summary,
        timings: clock.0,
        ..Default::default()
    })
}
