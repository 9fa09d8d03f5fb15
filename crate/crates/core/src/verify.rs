//! Self-check suite behind `transonic verify`: fast versions of the
//! closed-form, identity and fixed-point properties, each reported as one
//! named pass/fail line.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::diagnostics::{containment_report, default_region, entropy_inequality_check};
use crate::elliptic::{dirichlet_from, flux_from, solve_mixed_poisson, MixedBc, PoissonSolver, SolverOptions};
use crate::entropy::{entropy_pair, tricomi_residual, Angular, HStar, ModeKind, ModeSolution, SeparatedGenerator};
use crate::error::Result;
use crate::gas::GasModel;
use crate::mesh::{DomainSpec, Grid};
use crate::phaseplane::{a_of_gamma, convexity_coefficient, find_gamma_star, riemann_invariants, PhaseState};
use crate::solver::{gamma_map, FlowField, MapSettings, SolveConfig, ViscousProblem};

const SEED: u64 = 0x7a11_50c0;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn run(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let t = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    Check {
        name,
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

pub fn suite() -> Vec<Check> {
    vec![
        run("gamma_star", gamma_star),
        run("a_of_gamma_monotone", a_monotone),
        run("bernoulli", bernoulli),
        run("viscosity_identity", viscosity_identity),
        run("hstar_tricomi", hstar_tricomi),
        run("fourier_mode", fourier_mode),
        run("elliptic_order", elliptic_order),
        run("gamma_map_equations", gamma_map_equations),
        run("flat_channel_fixed_point", flat_channel),
        run("lambda_consistency", lambda_consistency),
        run("uniform_field_diagnostics", uniform_diagnostics),
    ]
}

fn gamma_star() -> Result<(bool, String)> {
    let g = find_gamma_star();
    Ok(((1.223..=1.225).contains(&g), format!("γ* = {g:.6}")))
}

fn a_monotone() -> Result<(bool, String)> {
    let end = a_of_gamma(2.999)?;
    let values: Vec<f64> = (0..50)
        .map(|k| a_of_gamma(1.05 + 1.9 * k as f64 / 49.0))
        .collect::<Result<_>>()?;
    let monotone = values.windows(2).all(|w| w[1] < w[0]);
    Ok((end < 0.02 && monotone, format!("a(2.999) = {end:.3e}, monotone = {monotone}")))
}

fn bernoulli() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let gamma = if rng.gen_bool(0.1) { 1.0 } else { rng.gen_range(1.0..3.0) };
        let gas = GasModel::new(gamma)?;
        let top = if gas.is_isothermal() { 6.0 } else { gas.cavitation_speed() };
        let q = rng.gen_range(0.0..top);
        let rho = gas.density(q)?;
        let c2 = gas.sound_speed_sq(q)?;
        // q²/2 + h(ρ) = h(1) with h the enthalpy
        let (lhs, scale) = if gas.is_isothermal() {
            (0.5 * q * q + rho.ln(), 0.5 * q * q + rho.ln().abs())
        } else {
            let k = 1.0 / (gamma - 1.0);
            (0.5 * q * q + k * c2 - k, 0.5 * q * q + k * c2 + k)
        };
        worst = worst.max(lhs.abs() / scale.max(1.0));
    }
    Ok((worst <= 1e-12, format!("max relative error {worst:.2e}")))
}

fn viscosity_identity() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let mut worst = 0.0f64;
    for gamma in [1.0, 1.2, 1.4, 2.0, 2.8] {
        let gas = GasModel::new(gamma)?;
        let qj = 2f64.sqrt() * gas.critical_speed();
        let top = if gas.is_isothermal() { 4.0 } else { gas.cavitation_speed() };
        for _ in 0..20 {
            let q = qj + (top - qj) * rng.gen_range(0.02..0.95);
            let rho = gas.density(q)?;
            let w = |r: f64| -> Result<f64> {
                let q = gas.speed_from_density(r)?;
                Ok(riemann_invariants(&gas, PhaseState::new(q, 0.0), qj)?.0)
            };
            // fourth-order central differences
            let d = 1e-3 * rho;
            let wv = [w(rho - 2.0 * d)?, w(rho - d)?, w(rho)?, w(rho + d)?, w(rho + 2.0 * d)?];
            let w_r = (wv[0] - 8.0 * wv[1] + 8.0 * wv[3] - wv[4]) / (12.0 * d);
            let w_rr = (-wv[0] + 16.0 * wv[1] - 30.0 * wv[2] + 16.0 * wv[3] - wv[4]) / (12.0 * d * d);
            let s = |r: f64| gas.sigma2_of_rho(r);
            let s_r = (s(rho - 2.0 * d)? - 8.0 * s(rho - d)? + 8.0 * s(rho + d)? - s(rho + 2.0 * d)?) / (12.0 * d);
            let c2 = gas.sound_speed_sq(q)?;
            let lhs = w_rr - s_r * q * q / (q * q - c2) * w_r;
            let rhs = convexity_coefficient(&gas, q)?;
            worst = worst.max((lhs - rhs).abs() / rhs.abs());
        }
    }
    Ok((worst <= 1e-5, format!("max relative mismatch {worst:.2e}")))
}

fn hstar_tricomi() -> Result<(bool, String)> {
    let gas = GasModel::new(1.4)?;
    let h = HStar::new(&gas, 0.9 * gas.critical_speed())?;
    let pair = entropy_pair(&h);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let (mut tri, mut compat) = (0.0f64, 0.0f64);
    for k in 0..1000 {
        let q = rng.gen_range(0.1..0.95 * gas.cavitation_speed());
        let theta = rng.gen_range(-PI..PI);
        let rho = gas.density(q)?;
        tri = tri.max(tricomi_residual(&h, rho, theta)?.abs());
        if k % 10 == 0 && (q - gas.critical_speed()).abs() > 0.05 {
            compat = compat.max(pair.compatibility_residual(rho, theta)?);
        }
    }
    Ok((tri <= 1e-10 && compat <= 1e-6, format!("tricomi {tri:.2e}, compatibility {compat:.2e}")))
}

fn fourier_mode() -> Result<(bool, String)> {
    let gas = GasModel::new(1.4)?;
    let mu_end = gas.mu_of_speed(1.9)?;
    let f = Arc::new(ModeSolution::solve(&gas, 2, ModeKind::Oscillatory, 0.0, mu_end, (1.0, 0.0))?);
    let g = ModeSolution::solve(&gas, 2, ModeKind::Oscillatory, 0.0, mu_end, (0.0, 1.0))?;
    let gen = SeparatedGenerator::new(f.clone(), Angular::Cos)?;
    let (mut tri, mut wr) = (0.0f64, 0.0f64);
    for k in 0..=200 {
        let mu = mu_end * k as f64 / 200.0;
        wr = wr.max((f.wronskian(&g, mu)? - 1.0).abs());
        let rho = gas.rho_of_mu(mu)?;
        if rho < gas.mu_anchor() {
            tri = tri.max(tricomi_residual(&gen, rho, 0.4)?.abs());
        }
    }
    Ok((tri <= 1e-6 && wr <= 1e-7, format!("tricomi {tri:.2e}, wronskian drift {wr:.2e}")))
}

fn manufactured_error(spec: &DomainSpec, h: f64) -> Result<f64> {
    let grid = Grid::build(spec, h)?;
    let exact = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
    let grad = |x: f64, y: f64| [PI * (PI * x).cos() * (PI * y).sin(), PI * (PI * x).sin() * (PI * y).cos()];
    let f: Vec<f64> = (0..grid.len())
        .map(|n| {
            let [x, y] = grid.position(n);
            -2.0 * PI * PI * exact(x, y)
        })
        .collect();
    let bc = MixedBc {
        dirichlet: dirichlet_from(&grid, exact),
        flux: flux_from(&grid, grad),
    };
    let w = solve_mixed_poisson(&grid, &f, &bc, 1.0)?;
    Ok(grid
        .unknowns()
        .iter()
        .map(|&n| {
            let [x, y] = grid.position(n);
            (w[n] - exact(x, y)).abs()
        })
        .fold(0.0, f64::max))
}

fn elliptic_order() -> Result<(bool, String)> {
    let square = DomainSpec::Rectangle { width: 1.0, height: 1.0 };
    let channel = DomainSpec::Channel {
        length: 1.0,
        height: 1.0,
        bump_center: 0.5,
        bump_chord: 0.5,
        bump_height: 0.0,
    };
    let hs = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
    let d: Vec<f64> = hs.iter().map(|&h| manufactured_error(&square, h)).collect::<Result<_>>()?;
    let m: Vec<f64> = hs.iter().map(|&h| manufactured_error(&channel, h)).collect::<Result<_>>()?;
    let pd = (d[1] / d[2]).log2();
    let pm = (m[1] / m[2]).log2();
    Ok((
        (1.8..=2.2).contains(&pd) && pm >= 1.0,
        format!("Dirichlet order {pd:.3}, mixed order {pm:.3}"),
    ))
}

fn bump_field(h: f64, q_ratio: f64) -> Result<(FlowField, SolveConfig, GasModel)> {
    let gas = GasModel::new(1.4)?;
    let spec = DomainSpec::Channel {
        length: 3.0,
        height: 1.0,
        bump_center: 1.5,
        bump_chord: 1.0,
        bump_height: 0.08,
    };
    let grid = Arc::new(Grid::build(&spec, h)?);
    let cfg = SolveConfig::new(q_ratio * gas.critical_speed(), 0.2);
    let mut field = FlowField::uniform(grid, &gas, cfg.q_inf, 0.0)?;
    for k in 0..field.theta_bar.len() {
        if field.grid().kind(k).is_unknown() {
            field.theta_bar[k] = 0.02 * ((k % 5) as f64 - 2.0);
        }
    }
    Ok((field, cfg, gas))
}

/// Γ(x) solves the linear equations it claims to: −h²Δ_h of the output
/// reproduces the forcing, checked with the independent stencil apply.
fn gamma_map_equations() -> Result<(bool, String)> {
    let (field, cfg, gas) = bump_field(1.0 / 16.0, 0.6)?;
    let settings = MapSettings::from_config(&cfg, &gas)?;
    let (lambda, eps) = (0.7, cfg.epsilon);
    let out = gamma_map(&field, lambda, eps, settings)?;
    let map = crate::solver::GammaMap::new(field.grid(), settings, crate::elliptic::Preconditioner::Cholesky)?;
    let forcing = map.forcing(&field, lambda, eps)?;
    let grid = field.grid();
    let solver = PoissonSolver::new(grid, SolverOptions::default())?;
    let mut bc = MixedBc::zero(grid);
    bc.dirichlet = grid.far_field().iter().map(|b| out.theta_bar[b.node]).collect();
    let lap_t = solver.laplacian(&out.theta_bar, &bc);
    bc.dirichlet = grid.far_field().iter().map(|b| out.sigma_bar[b.node]).collect();
    bc.flux = forcing.sigma_flux.clone();
    let lap_s = solver.laplacian(&out.sigma_bar, &bc);
    let scale = forcing.f1.iter().chain(&forcing.f2).fold(1.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for &n in grid.unknowns() {
        worst = worst.max((eps * lap_t[n] - lambda * forcing.f1[n]).abs() / scale);
        worst = worst.max((eps * lap_s[n] - lambda * forcing.f2[n]).abs() / scale);
    }
    Ok((worst <= 1e-7, format!("max scaled equation residual {worst:.2e}")))
}

fn flat_channel() -> Result<(bool, String)> {
    let gas = GasModel::new(1.4)?;
    let spec = DomainSpec::Channel {
        length: 3.0,
        height: 1.0,
        bump_center: 1.5,
        bump_chord: 1.0,
        bump_height: 0.0,
    };
    let grid = Arc::new(Grid::build(&spec, 1.0 / 16.0)?);
    let mut worst = 0;
    let mut ok = true;
    for eps in [0.2, 0.05] {
        let cfg = SolveConfig::new(0.5 * gas.critical_speed(), eps);
        let out = ViscousProblem::new(grid.clone(), gas.clone(), cfg)?.solve()?;
        worst = worst.max(out.report.max_stage_iterations());
        ok &= out.report.converged && out.field.theta_bar.iter().all(|&t| t == 0.0);
    }
    Ok((ok && worst <= 2, format!("max iterations per stage {worst}")))
}

fn lambda_consistency() -> Result<(bool, String)> {
    let gas = GasModel::new(1.4)?;
    let spec = DomainSpec::Channel {
        length: 1.0,
        height: 1.0,
        bump_center: 0.5,
        bump_chord: 0.5,
        bump_height: 0.02,
    };
    let grid = Arc::new(Grid::build(&spec, 1.0 / 31.0)?);
    let eps = 1.0;
    let mut a = SolveConfig::new(0.5 * gas.critical_speed(), eps);
    a.lambda_schedule = vec![0.25, 0.5];
    let mut b = SolveConfig::new(0.5 * gas.critical_speed(), eps / 0.5);
    b.lambda_schedule = vec![0.5, 1.0];
    let tol = a.tol;
    let ra = ViscousProblem::new(grid.clone(), gas.clone(), a)?.solve()?;
    let rb = ViscousProblem::new(grid, gas, b)?.solve()?;
    let diff = ra
        .field
        .theta_bar
        .iter()
        .zip(&rb.field.theta_bar)
        .chain(ra.field.sigma_bar.iter().zip(&rb.field.sigma_bar))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let ok = ra.report.converged && rb.report.converged && diff <= 10.0 * tol;
    Ok((ok, format!("max difference {diff:.2e} (limit {:.0e})", 10.0 * tol)))
}

fn uniform_diagnostics() -> Result<(bool, String)> {
    let gas = GasModel::new(1.4)?;
    let grid = Arc::new(Grid::build(
        &DomainSpec::Hole {
            width: 4.0,
            height: 3.0,
            center: [2.0, 1.5],
            semi_axes: [0.5, 0.25],
        },
        1.0 / 8.0,
    )?);
    let field = FlowField::uniform(grid, &gas, 0.7 * gas.critical_speed(), 0.3)?;
    let c = containment_report(&field, &default_region(&field)?);
    let e = entropy_inequality_check(&field)?;
    let ok = c.all_inside() && c.min_margin > 0.0 && e.positive_part <= 1e-10 && e.max_production.abs() <= 1e-10;
    Ok((ok, format!("inside {:.3}, entropy positive part {:.1e}", c.fraction_inside, e.positive_part)))
}
