use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use transonic_core::config::{PathSpec, RunConfig};
use transonic_core::entropy::{entropy_pair, GeneratorSpec};
use transonic_core::phaseplane::{a_of_gamma, find_gamma_star, InvariantRegion};
use transonic_core::run::{run_solve, run_sweep, write_solve, write_sweep, write_with_manifest};
use transonic_core::{verify, Error, GasModel};

const EXIT_CONFIG: u8 = 2;
const EXIT_NO_CONVERGENCE: u8 = 3;
const EXIT_VERIFY: u8 = 4;

/// Vanishing-viscosity transonic flow solver and verification toolkit.
#[derive(Parser)]
#[command(name = "transonic", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the viscous problem at the config's ε and write a run directory.
    Solve {
        config: PathBuf,
        #[arg(short, long, default_value = "run")]
        out: PathBuf,
    },
    /// Solve for every ε in `epsilon_list`, warm-starting down the list.
    Sweep {
        config: PathBuf,
        #[arg(short, long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Invariant region boundary and the a(γ) report.
    Phaseplane {
        #[arg(long)]
        gamma: f64,
        /// Anchor speed; defaults to √2·q_cr.
        #[arg(long, conflicts_with = "q0_ratio")]
        q0: Option<f64>,
        /// Anchor speed as a multiple of q_cr.
        #[arg(long)]
        q0_ratio: Option<f64>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        theta0: f64,
        #[arg(long, default_value_t = 720)]
        points: usize,
        #[arg(short, long, default_value = "phaseplane")]
        out: PathBuf,
    },
    /// Evaluate an entropy pair along a (q, θ) path.
    Entropy {
        #[arg(long)]
        gamma: f64,
        /// `star[:qbar]`, `fourier:n[:cos|sin]` or `exp:n[:plus|minus]`.
        #[arg(long)]
        generator: String,
        /// `q1,θ1;q2,θ2;…@N`.
        #[arg(long, allow_hyphen_values = true)]
        path: String,
        /// Output CSV; stdout when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the property self-check suite.
    Verify {
        /// Print the results as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Dump the node classification of the config's grid as CSV.
    Grid {
        config: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Parse(_) | Error::Domain { .. } => EXIT_CONFIG,
        Error::NoConvergence { .. } => EXIT_NO_CONVERGENCE,
        _ => 1,
    }
}

fn load(path: &Path) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::parse(&text)
}

fn solve(config: &Path, out: &Path) -> Result<u8, Error> {
    let cfg = load(config)?;
    let run = run_solve(&cfg)?;
    write_solve(out, &run)?;
    let s = &run.summary;
    println!(
        "converged: {}  iterations: {}  residual: {:.3e}",
        s.converged, s.iterations, s.final_residual
    );
    if let Some(d) = &s.diagnostics {
        println!(
            "max M: {:.4}  inside region: {:.4}  sonic line length: {:.4}  entropy positive part: {:.3e}",
            d.containment.max_mach, d.containment.fraction_inside, d.sonic_line_length, d.entropy.positive_part
        );
    }
    if let Some(stage) = s.solve.stages.iter().find(|st| !st.converged) {
        eprintln!(
            "stage λ = {} did not converge: {}",
            stage.lambda,
            stage.failure.as_deref().unwrap_or("iteration limit")
        );
    }
    println!("wrote {}", out.display());
    Ok(if s.converged { 0 } else { EXIT_NO_CONVERGENCE })
}

fn sweep(config: &Path, out: &Path) -> Result<u8, Error> {
    let cfg = load(config)?;
    let sweep = run_sweep(&cfg)?;
    write_sweep(out, &sweep)?;
    println!("epsilon,converged,iterations,I2,closure_error,wall_mass_flux,min_speed,l2_to_previous");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6e}"));
    for r in &sweep.summary.rows {
        println!(
            "{},{},{},{},{},{},{},{}",
            r.epsilon,
            r.converged,
            r.iterations,
            opt(r.i2),
            opt(r.closure_error),
            opt(r.wall_mass_flux),
            opt(r.min_speed),
            opt(r.l2_to_previous)
        );
        if let Some(e) = &r.error {
            eprintln!("ε = {}: {e}", r.epsilon);
        }
    }
    if let Some(ratio) = sweep.summary.i2_ratio {
        println!("I2 max/min ratio: {ratio:.4}");
    }
    println!("wrote {}", out.display());
    Ok(if sweep.all_converged() { 0 } else { EXIT_NO_CONVERGENCE })
}

#[derive(Serialize)]
struct PhaseplaneReport {
    gamma: f64,
    gamma_star: f64,
    /// W(q_cav) − W(√2 q_cr); absent for γ outside (1, 3).
    a_gamma: Option<f64>,
    q_cr: f64,
    q_cav: f64,
    q0: f64,
    theta0: f64,
    effective_a: f64,
    copies: usize,
    q_star: f64,
}

fn phaseplane(
    gamma: f64,
    q0: Option<f64>,
    q0_ratio: Option<f64>,
    theta0: f64,
    points: usize,
    out: &Path,
) -> Result<u8, Error> {
    if !(4..=1_000_000).contains(&points) {
        return Err(Error::Config(format!("points = {points} must lie in 4..=1000000")));
    }
    if !theta0.is_finite() {
        return Err(Error::Config("theta0 must be finite".into()));
    }
    let gas = GasModel::new(gamma)?;
    let q_cr = gas.critical_speed();
    let q0 = q0.unwrap_or(q0_ratio.unwrap_or(2f64.sqrt()) * q_cr);
    let region = InvariantRegion::new(&gas, q0, theta0)?;
    let mut csv = String::from("q,theta,u,v\n");
    for p in region.boundary(points) {
        let _ = writeln!(csv, "{},{},{},{}", p.q, p.theta, p.u(), p.v());
    }
    let report = PhaseplaneReport {
        gamma,
        gamma_star: find_gamma_star(),
        a_gamma: a_of_gamma(gamma).ok(),
        q_cr,
        q_cav: gas.cavitation_speed(),
        q0,
        theta0,
        effective_a: region.effective_a(),
        copies: region.copies(),
        q_star: region.max_speed(),
    };
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    write_with_manifest(
        out,
        &[("region.csv".into(), csv.into_bytes()), ("report.json".into(), json)],
    )?;
    match report.a_gamma {
        Some(a) => println!("a(γ) = {a:.6}  (π = {:.6})", std::f64::consts::PI),
        None => println!("a(γ) is defined for 1 < γ < 3 only"),
    }
    println!(
        "γ* = {:.6}  copies m = {}  q* = {:.6}  q_cav = {:.6}",
        report.gamma_star, report.copies, report.q_star, report.q_cav
    );
    println!("wrote {}", out.display());
    Ok(0)
}

fn entropy(gamma: f64, generator: &str, path: &str, out: Option<&Path>) -> Result<u8, Error> {
    let gas = GasModel::new(gamma)?;
    let spec: GeneratorSpec = generator.parse()?;
    let path: PathSpec = path.parse()?;
    let points = path.sample();
    let q_cav = gas.cavitation_speed();
    if let Some(p) = points.iter().find(|p| !(p.q > 0.0 && p.q < q_cav)) {
        return Err(Error::Config(format!("path speed {} outside (0, q_cav = {q_cav})", p.q)));
    }
    let q_max = points.iter().map(|p| p.q).fold(gas.critical_speed(), f64::max);
    let generator = spec.build(&gas, 0.9 * gas.critical_speed(), q_max)?;
    let pair = entropy_pair(generator);
    let mut csv = String::from("q,theta,rho,H,Q1,Q2\n");
    for p in points {
        let rho = gas.density(p.q)?;
        let h = pair.generator().value(rho, p.theta)?;
        let (q1, q2) = pair.eval(rho, p.theta)?;
        let _ = writeln!(csv, "{},{},{rho},{h},{q1},{q2}", p.q, p.theta);
    }
    match out {
        Some(o) => std::fs::write(o, csv)?,
        None => print!("{csv}"),
    }
    Ok(0)
}

fn run_verify(json: bool) -> Result<u8, Error> {
    let checks = verify::suite();
    if json {
        println!("{}", serde_json::to_string_pretty(&checks)?);
    } else {
        for c in &checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            println!("{verdict} {:<28} {:>7.2}s  {}", c.name, c.seconds, c.detail);
        }
    }
    Ok(if checks.iter().all(|c| c.passed) { 0 } else { EXIT_VERIFY })
}

fn grid(config: &Path, out: Option<&Path>) -> Result<u8, Error> {
    let cfg = load(config)?;
    let csv = cfg.grid()?.mask_csv();
    match out {
        Some(o) => std::fs::write(o, csv)?,
        None => print!("{csv}"),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve { config, out } => solve(config, out),
        Command::Sweep { config, out } => sweep(config, out),
        Command::Phaseplane {
            gamma,
            q0,
            q0_ratio,
            theta0,
            points,
            out,
        } => phaseplane(*gamma, *q0, *q0_ratio, *theta0, *points, out),
        Command::Entropy {
            gamma,
            generator,
            path,
            out,
        } => entropy(*gamma, generator, path, out.as_deref()),
        Command::Verify { json } => run_verify(*json),
        Command::Grid { config, out } => grid(config, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
