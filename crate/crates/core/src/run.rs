//! Orchestration of `solve` and `sweep` runs and their on-disk artifacts.
//!
//! A run directory holds `config.txt`, `summary.json`, `field.csv`,
//! `sonic_line.csv` and a `MANIFEST` of SHA-256 hashes of every other file.
//! Nothing time-dependent is written, so equal configs give equal manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::diagnostics::{self, DiagnosticsReport, SonicLine};
use crate::error::Result;
use crate::gas::GasModel;
use crate::mesh::Grid;
use crate::solver::{epsilon_sweep, l2_velocity_difference, FlowField, SolveOutcome, SolveReport, ViscousProblem};

/// Wall distance of the subdomain Ω_δ used for sweep L² differences.
pub const SWEEP_DELTA: f64 = 0.1;

#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub fluid_nodes: usize,
    pub unknowns: usize,
}

impl GridSummary {
    pub fn of(grid: &Grid) -> Self {
        let (nx, ny) = grid.dims();
        Self {
            nx,
            ny,
            h: grid.spacing(),
            fluid_nodes: grid.fluid_count(),
            unknowns: grid.unknowns().len(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GasSummary {
    pub gamma: f64,
    pub q_cr: f64,
    pub q_cav: f64,
    pub q_inf: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config: String,
    /// Domain size, ε and grid are user or implementer choices, not data.
    pub note: &'static str,
    pub gas: GasSummary,
    pub grid: GridSummary,
    pub epsilon: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub solve: SolveReport,
    /// Absent when the final field has invalid states.
    pub diagnostics: Option<DiagnosticsReport>,
    pub diagnostics_error: Option<String>,
}

const NOTE: &str = "domain geometry, epsilon and grid spacing are implementer-chosen defaults unless set in the config";

/// A finished solve together with what is needed to write it out.
#[derive(Debug, Clone)]
pub struct SolveRun {
    pub outcome: SolveOutcome,
    pub summary: RunSummary,
    pub sonic: Option<SonicLine>,
}

fn gas_summary(cfg: &RunConfig, gas: &GasModel) -> GasSummary {
    GasSummary {
        gamma: gas.gamma(),
        q_cr: gas.critical_speed(),
        q_cav: gas.cavitation_speed(),
        q_inf: cfg.q_inf_ratio * gas.critical_speed(),
    }
}

fn problem(cfg: &RunConfig, epsilon: f64) -> Result<ViscousProblem> {
    let gas = cfg.gas()?;
    let grid = Arc::new(cfg.grid()?);
    let sc = cfg.solve_config(&gas, epsilon);
    ViscousProblem::new(grid, gas, sc)
}

fn summarize(cfg: &RunConfig, epsilon: f64, outcome: SolveOutcome) -> SolveRun {
    let gas = outcome.field.gas().clone();
    let (diagnostics, sonic, diagnostics_error) = match diagnostics::full_report(&outcome.field, epsilon, cfg.bc_sign) {
        Ok((d, s)) => (Some(d), Some(s), None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    let summary = RunSummary {
        config: cfg.to_text(),
        note: NOTE,
        gas: gas_summary(cfg, &gas),
        grid: GridSummary::of(outcome.field.grid()),
        epsilon,
        converged: outcome.report.converged,
        iterations: outcome.report.total_iterations,
        final_residual: outcome.report.final_residual(),
        solve: outcome.report.clone(),
        diagnostics,
        diagnostics_error,
    };
    SolveRun { outcome, summary, sonic }
}

/// Solves at the first ε of the config.
pub fn run_solve(cfg: &RunConfig) -> Result<SolveRun> {
    let eps = cfg.epsilons[0];
    let outcome = problem(cfg, eps)?.solve()?;
    Ok(summarize(cfg, eps, outcome))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub converged: bool,
    pub iterations: usize,
    pub error: Option<String>,
    pub i2: Option<f64>,
    pub closure_error: Option<f64>,
    pub wall_mass_flux: Option<f64>,
    /// `min q` on Ω_δ for δ = [`SWEEP_DELTA`].
    pub min_speed: Option<f64>,
    pub entropy_positive_part: Option<f64>,
    pub max_mach: Option<f64>,
    /// L² difference of (u, v) on Ω_δ to the previous converged entry.
    pub l2_to_previous: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub config: String,
    pub note: &'static str,
    pub gas: GasSummary,
    pub grid: GridSummary,
    pub delta: f64,
    pub rows: Vec<SweepRow>,
    /// `max I₂ / min I₂` over converged entries.
    pub i2_ratio: Option<f64>,
    /// Whether the wall mass flux decreased with ε across converged entries.
    pub wall_flux_decreasing: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub runs: Vec<(f64, std::result::Result<SolveRun, String>)>,
    pub summary: SweepSummary,
}

impl SweepRun {
    pub fn all_converged(&self) -> bool {
        self.runs.iter().all(|(_, r)| matches!(r, Ok(s) if s.summary.converged))
    }
}

pub fn run_sweep(cfg: &RunConfig) -> Result<SweepRun> {
    let gas = cfg.gas()?;
    let p = problem(cfg, cfg.epsilons[0])?;
    let grid = GridSummary::of(&p.grid);
    let entries = epsilon_sweep(&p, &cfg.epsilons)?;
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut previous: Option<FlowField> = None;
    for entry in entries {
        let eps = entry.epsilon;
        match entry.outcome {
            Err(e) => {
                rows.push(SweepRow {
                    epsilon: eps,
                    converged: false,
                    iterations: 0,
                    error: Some(e.clone()),
                    i2: None,
                    closure_error: None,
                    wall_mass_flux: None,
                    min_speed: None,
                    entropy_positive_part: None,
                    max_mach: None,
                    l2_to_previous: None,
                });
                runs.push((eps, Err(e)));
            }
            Ok(outcome) => {
                let converged = outcome.report.converged;
                let l2 = match (&previous, converged) {
                    (Some(prev), true) => l2_velocity_difference(&outcome.field, prev, SWEEP_DELTA).ok(),
                    _ => None,
                };
                let field = outcome.field.clone();
                let run = summarize(cfg, eps, outcome);
                let d = run.summary.diagnostics.as_ref();
                rows.push(SweepRow {
                    epsilon: eps,
                    converged,
                    iterations: run.summary.iterations,
                    error: run.summary.diagnostics_error.clone(),
                    i2: d.map(|d| d.dissipation.i2),
                    closure_error: d.map(|d| d.dissipation.closure_error),
                    wall_mass_flux: d.map(|d| d.wall_mass_flux),
                    min_speed: diagnostics::stagnation_report(&field, &[SWEEP_DELTA])
                        .ok()
                        .map(|s| s[0].alpha),
                    entropy_positive_part: d.map(|d| d.entropy.positive_part),
                    max_mach: d.map(|d| d.containment.max_mach),
                    l2_to_previous: l2,
                });
                if converged {
                    previous = Some(field);
                }
                runs.push((eps, Ok(run)));
            }
        }
    }
    let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.converged).collect();
    let i2: Vec<f64> = ok.iter().filter_map(|r| r.i2).collect();
    let i2_ratio = (!i2.is_empty()).then(|| {
        let max = i2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = i2.iter().copied().fold(f64::INFINITY, f64::min);
        if max == 0.0 {
            1.0
        } else {
            max / min
        }
    });
    let flux: Vec<f64> = ok.iter().filter_map(|r| r.wall_mass_flux).collect();
    let wall_flux_decreasing = (flux.len() >= 2).then(|| flux.windows(2).all(|w| w[1] <= w[0]));
    let summary = SweepSummary {
        config: cfg.to_text(),
        note: NOTE,
        gas: gas_summary(cfg, &gas),
        grid,
        delta: SWEEP_DELTA,
        rows,
        i2_ratio,
        wall_flux_decreasing,
    };
    Ok(SweepRun { runs, summary })
}

/// `x,y,u,v,q,M,theta,rho` at every fluid node with a valid state.
pub fn field_csv(field: &FlowField) -> String {
    let grid = field.grid();
    let mut s = String::from("x,y,u,v,q,M,theta,rho\n");
    for n in 0..grid.len() {
        if !grid.kind(n).is_fluid() {
            continue;
        }
        let Ok(st) = field.state(n) else { continue };
        let [x, y] = grid.position(n);
        let theta = field.theta(n);
        let (sn, cs) = theta.sin_cos();
        let _ = writeln!(
            s,
            "{x},{y},{},{},{},{},{theta},{}",
            st.speed * cs,
            st.speed * sn,
            st.speed,
            st.mach(),
            st.rho
        );
    }
    s
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Writes files under `dir` (names may contain `/`) and a `MANIFEST` of
/// `sha256  path` lines sorted by path.
pub fn write_with_manifest(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut lines: Vec<String> = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        lines.push(format!("{}  {name}\n", sha256_hex(bytes)));
    }
    lines.sort_by(|a, b| a[66..].cmp(&b[66..]));
    let manifest = dir.join("MANIFEST");
    fs::write(&manifest, lines.concat())?;
    Ok(manifest)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn run_files(prefix: &str, run: &SolveRun) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = vec![
        (format!("{prefix}summary.json"), json_bytes(&run.summary)?),
        (format!("{prefix}field.csv"), field_csv(&run.outcome.field).into_bytes()),
    ];
    if let Some(sonic) = &run.sonic {
        files.push((format!("{prefix}sonic_line.csv"), sonic.to_csv().into_bytes()));
    }
    Ok(files)
}

pub fn write_solve(dir: &Path, run: &SolveRun) -> Result<PathBuf> {
    let mut files = vec![("config.txt".to_string(), run.summary.config.clone().into_bytes())];
    files.extend(run_files("", run)?);
    write_with_manifest(dir, &files)
}

/// Sweep layout: `config.txt`, `sweep.json`, and `eps_<k>/` per entry.
pub fn write_sweep(dir: &Path, sweep: &SweepRun) -> Result<PathBuf> {
    let mut files = vec![
        ("config.txt".to_string(), sweep.summary.config.clone().into_bytes()),
        ("sweep.json".to_string(), json_bytes(&sweep.summary)?),
    ];
    for (k, (_, run)) in sweep.runs.iter().enumerate() {
        if let Ok(run) = run {
            files.extend(run_files(&format!("eps_{k}/"), run)?);
        }
    }
    write_with_manifest(dir, &files)
}
