// SPDX-License-Identifier: Apache-2.0
//! Run configuration: command-line flags merged with an optional JSON file.

use std::fmt::Debug;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use scarlab::quench::{EvolveMethod, InitialKind};
use scarlab::SpinChainConfig;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Spectrum,
    Rstat,
    Dynamics,
    Scars,
    PxpCheck,
    Fragments,
    Sweep,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Spectrum => "spectrum",
            Task::Rstat => "rstat",
            Task::Dynamics => "dynamics",
            Task::Scars => "scars",
            Task::PxpCheck => "pxp-check",
            Task::Fragments => "fragments",
            Task::Sweep => "sweep",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Auto,
    Eigen,
    Krylov,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Rstat,
    Revival,
    Scars,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Rstat => "rstat",
            Metric::Revival => "revival",
            Metric::Scars => "scars",
        }
    }
}

/// Flags shared by every computing subcommand.
#[derive(Args, Clone, Debug, Default)]
pub struct CommonArgs {
    /// JSON config file; its values win over conflicting flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Twice the spin quantum number
    #[arg(long = "twoJ")]
    pub two_j: Option<u32>,
    /// Number of sites
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: physical cores)
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Block selection: `full` or `C<c>`, plus an optional momentum `k<k>`.
#[derive(Args, Clone, Debug, Default)]
pub struct SectorArgs {
    #[arg(long)]
    pub sector: Option<String>,
    #[arg(long)]
    pub momentum: Option<String>,
}

#[derive(Args, Clone, Debug, Default)]
pub struct DynamicsArgs {
    #[arg(long)]
    pub tmax: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// all-up-z or all-down-x
    #[arg(long)]
    pub initial: Option<String>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
}

#[derive(Args, Clone, Debug, Default)]
pub struct SweepArgs {
    /// Comma-separated values of a
    #[arg(long = "a-grid", value_delimiter = ',', allow_negative_numbers = true)]
    pub a_grid: Option<Vec<f64>>,
    /// Comma-separated n, each giving a = 1 − 2⁻ⁿ
    #[arg(long = "a-pow2", value_delimiter = ',')]
    pub a_pow2: Option<Vec<i32>>,
    #[arg(long = "theta-grid", value_delimiter = ',', allow_negative_numbers = true)]
    pub theta_grid: Option<Vec<f64>>,
    #[arg(long = "twoJ-grid", value_delimiter = ',')]
    pub two_j_grid: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',', value_enum)]
    pub metrics: Option<Vec<Metric>>,
}

/// Everything a subcommand may receive from flags.
#[derive(Clone, Debug, Default)]
pub struct FlagSet {
    pub common: CommonArgs,
    pub sector: SectorArgs,
    pub dynamics: DynamicsArgs,
    pub sweep: SweepArgs,
    pub cut: Option<usize>,
    pub lowest: Option<usize>,
    pub hpxp_two_s: Option<u32>,
    pub hpxp_sites: Option<usize>,
}

// JSON file layout; unknown keys are rejected.

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileModel {
    #[serde(rename = "twoJ")]
    two_j: Option<u32>,
    #[serde(rename = "N")]
    n: Option<usize>,
    a: Option<f64>,
    theta: Option<f64>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileSweep {
    a: Option<Vec<f64>>,
    a_pow2: Option<Vec<i32>>,
    theta: Option<Vec<f64>>,
    #[serde(rename = "twoJ")]
    two_j: Option<Vec<u32>>,
    metrics: Option<Vec<Metric>>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    task: Option<Task>,
    #[serde(default)]
    model: FileModel,
    sector: Option<String>,
    momentum: Option<SectorMomentum>,
    tmax: Option<f64>,
    dt: Option<f64>,
    initial: Option<String>,
    method: Option<Method>,
    cut: Option<usize>,
    lowest: Option<usize>,
    hpxp_two_s: Option<u32>,
    hpxp_sites: Option<usize>,
    #[serde(default)]
    sweep: FileSweep,
    output: Option<PathBuf>,
    seed: Option<u64>,
    threads: Option<usize>,
}

/// Momentum given either as an integer or as "k<int>".
#[derive(Deserialize, Debug, Clone)]
#[serde(untagged)]
enum SectorMomentum {
    Index(usize),
    Label(String),
}

impl SectorMomentum {
    fn into_string(self) -> String {
        match self {
            SectorMomentum::Index(k) => k.to_string(),
            SectorMomentum::Label(s) => s,
        }
    }
}

/// Block choice after parsing. `c = None` is the full space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SectorChoice {
    pub c: Option<u32>,
    pub momentum: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DynamicsOptions {
    pub tmax: f64,
    pub dt: f64,
    pub initial: String,
    pub method: Method,
}

impl DynamicsOptions {
    pub fn initial_kind(&self) -> InitialKind {
        self.initial.parse().expect("validated")
    }

    pub fn evolve_method(&self, dim: usize) -> EvolveMethod {
        match self.method {
            Method::Auto => EvolveMethod::auto(dim),
            Method::Eigen => EvolveMethod::Eigenbasis,
            Method::Krylov => EvolveMethod::krylov(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepGrid {
    pub two_j: Vec<u32>,
    pub a: Vec<f64>,
    pub theta: Vec<f64>,
    pub metrics: Vec<Metric>,
}

/// Fully resolved and validated configuration; serialized into the manifest.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub task: Task,
    pub model: SpinChainConfig,
    pub sector: Option<SectorChoice>,
    pub dynamics: DynamicsOptions,
    pub cut: Option<usize>,
    pub lowest: Option<usize>,
    pub hpxp: Option<(u32, usize)>,
    pub sweep: Option<SweepGrid>,
    pub output: PathBuf,
    pub seed: u64,
    pub threads: usize,
}

pub const DEFAULT_SEED: u64 = 0x5ca1_ab1e;
pub const DEFAULT_TMAX: f64 = 40.0;
pub const DEFAULT_DT: f64 = 0.02;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// JSON wins on conflict; a differing flag value triggers a warning.
fn pick<T: PartialEq + Debug>(key: &str, flag: Option<T>, file: Option<T>) -> Option<T> {
    match (flag, file) {
        (Some(f), Some(j)) => {
            if f != j {
                log::warn!("'{key}': config file value {j:?} overrides flag value {f:?}");
            }
            Some(j)
        }
        (f, j) => j.or(f),
    }
}

pub fn parse_sector(s: &str) -> Result<Option<u32>, CliError> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("full") {
        return Ok(None);
    }
    t.strip_prefix('C')
        .or_else(|| t.strip_prefix('c'))
        .and_then(|x| x.parse().ok())
        .map(Some)
        .ok_or_else(|| invalid(format!("sector '{s}' must be 'full' or 'C<count>'")))
}

pub fn parse_momentum(s: &str) -> Result<usize, CliError> {
    let t = s.trim();
    t.strip_prefix('k').unwrap_or(t).parse().map_err(|_| invalid(format!("momentum '{s}' must be 'k<int>' or an integer")))
}

fn read_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn finite(name: &str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(invalid(format!("{name} must be finite")))
    }
}

impl RunConfig {
    pub fn resolve(task: Task, flags: FlagSet) -> Result<Self, CliError> {
        let file = match &flags.common.config {
            Some(p) => read_file(p)?,
            None => FileConfig::default(),
        };
        if let Some(t) = file.task {
            if t != task {
                return Err(invalid(format!("config file is for task '{}' but '{}' was requested", t.name(), task.name())));
            }
        }
        let c = flags.common;
        let fixed_spin = (task == Task::PxpCheck).then_some(2);
        let two_j = pick("twoJ", c.two_j, file.model.two_j).or(fixed_spin).ok_or_else(|| invalid("twoJ is required"))?;
        if task == Task::PxpCheck && two_j != 2 {
            return Err(invalid("pxp-check maps the spin-1 chain; twoJ must be 2"));
        }
        let n = pick("N", c.n, file.model.n).ok_or_else(|| invalid("N is required"))?;
        let a = finite("a", pick("a", c.a, file.model.a).unwrap_or(0.0))?;
        let theta = finite("theta", pick("theta", c.theta, file.model.theta).unwrap_or(0.0))?;
        let model = SpinChainConfig::new(two_j, n, a, theta).map_err(|e| invalid(e.to_string()))?;

        let sector_s = pick("sector", flags.sector.sector, file.sector);
        let momentum_s = pick("momentum", flags.sector.momentum, file.momentum.map(SectorMomentum::into_string));
        let sector = match (sector_s, momentum_s) {
            (None, None) => None,
            (s, m) => {
                let c = match s {
                    Some(s) => parse_sector(&s)?,
                    None => None,
                };
                let momentum = m.map(|m| parse_momentum(&m)).transpose()?;
                if let Some(k) = momentum {
                    if k >= n {
                        return Err(invalid(format!("momentum k{k} out of range 0..{n}")));
                    }
                }
                if let Some(cc) = c {
                    if cc as usize > n {
                        return Err(invalid(format!("pattern count C{cc} exceeds N = {n}")));
                    }
                }
                Some(SectorChoice { c, momentum })
            }
        };

        let d = flags.dynamics;
        let dynamics = DynamicsOptions {
            tmax: finite("tmax", pick("tmax", d.tmax, file.tmax).unwrap_or(DEFAULT_TMAX))?,
            dt: finite("dt", pick("dt", d.dt, file.dt).unwrap_or(DEFAULT_DT))?,
            initial: pick("initial", d.initial, file.initial).unwrap_or_else(|| "all-up-z".into()),
            method: pick("method", d.method, file.method).unwrap_or(Method::Auto),
        };
        if dynamics.tmax < 0.0 || dynamics.dt <= 0.0 {
            return Err(invalid("need tmax ≥ 0 and dt > 0"));
        }
        dynamics.initial.parse::<InitialKind>().map_err(|e| invalid(e.to_string()))?;

        let cut = pick("cut", flags.cut, file.cut);
        if let Some(k) = cut {
            if k == 0 || k >= n {
                return Err(invalid(format!("cut must lie in 1..{n}")));
            }
        }
        let lowest = pick("lowest", flags.lowest, file.lowest);
        if lowest == Some(0) {
            return Err(invalid("lowest must be positive"));
        }
        let hpxp = match (pick("hpxp-two-s", flags.hpxp_two_s, file.hpxp_two_s), pick("hpxp-sites", flags.hpxp_sites, file.hpxp_sites)) {
            (Some(s), Some(p)) => Some((s, p)),
            (None, None) => None,
            _ => return Err(invalid("hpxp-two-s and hpxp-sites go together")),
        };

        let sweep = if task == Task::Sweep {
            let s = flags.sweep;
            let f = file.sweep;
            let pow2 = pick("sweep.a-pow2", s.a_pow2, f.a_pow2);
            let list = pick("sweep.a", s.a_grid, f.a);
            let a_values = match (list, pow2) {
                (Some(_), Some(_)) => return Err(invalid("give either an a grid or an a-pow2 grid, not both")),
                (Some(v), None) => v,
                (None, Some(p)) => p.iter().map(|&k| 1.0 - 2f64.powi(-k)).collect(),
                (None, None) => vec![a],
            };
            let grid = SweepGrid {
                two_j: pick("sweep.twoJ", s.two_j_grid, f.two_j).unwrap_or_else(|| vec![two_j]),
                a: a_values,
                theta: pick("sweep.theta", s.theta_grid, f.theta).unwrap_or_else(|| vec![theta]),
                metrics: pick("sweep.metrics", s.metrics, f.metrics).unwrap_or_else(|| vec![Metric::Rstat, Metric::Revival, Metric::Scars]),
            };
            for &tj in &grid.two_j {
                for &x in &grid.a {
                    for &t in &grid.theta {
                        SpinChainConfig::new(tj, n, finite("a", x)?, finite("theta", t)?).map_err(|e| invalid(e.to_string()))?;
                    }
                }
            }
            if grid.two_j.is_empty() || grid.a.is_empty() || grid.theta.is_empty() || grid.metrics.is_empty() {
                return Err(invalid("sweep grids must be non-empty"));
            }
            Some(grid)
        } else {
            None
        };

        let threads = pick("threads", c.threads, file.threads).unwrap_or_else(num_cpus::get_physical);
        if threads == 0 {
            return Err(invalid("threads must be positive"));
        }
        Ok(RunConfig {
            task,
            model,
            sector,
            dynamics,
            cut,
            lowest,
            hpxp,
            sweep,
            output: pick("output", c.out, file.output).unwrap_or_else(|| PathBuf::from("scarlab-out").join(task.name())),
            seed: pick("seed", c.seed, file.seed).unwrap_or(DEFAULT_SEED),
            threads,
        })
    }
}
