//! Acceptance suite: one PASS/FAIL line per criterion with its runtime.
//!
//! Oracles are computed here, independently of the library code under test,
//! wherever the criterion allows. Set `ACCEPTANCE_ONLY=1,7,8` to run a subset.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use transonic_core::diagnostics::{
    containment_report, default_region, dissipation_integral, entropy_inequality_check, sonic_line,
};
use transonic_core::elliptic::{dirichlet_from, flux_from, solve_mixed_poisson, MixedBc};
use transonic_core::entropy::{entropy_pair, tricomi_residual, Angular, HStar, ModeKind, ModeSolution, SeparatedGenerator};
use transonic_core::mesh::{DomainSpec, Grid, DIRECTIONS};
use transonic_core::phaseplane::{a_of_gamma, find_gamma_star, riemann_invariants, PhaseState};
use transonic_core::solver::{
    epsilon_sweep, gamma_map, uniform_schedule, BcSign, FlowField, MapSettings, SolveConfig, SolveOutcome,
    ViscousProblem,
};
use transonic_core::GasModel;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- oracles

/// Bernoulli's law in closed form (stagnation density one).
fn density_oracle(gamma: f64, q: f64) -> f64 {
    if gamma == 1.0 {
        (-0.5 * q * q).exp()
    } else {
        (1.0 - 0.5 * (gamma - 1.0) * q * q).powf(1.0 / (gamma - 1.0))
    }
}

fn speed_oracle(gamma: f64, rho: f64) -> f64 {
    if gamma == 1.0 {
        (-2.0 * rho.ln()).sqrt()
    } else {
        (2.0 * (1.0 - rho.powf(gamma - 1.0)) / (gamma - 1.0)).sqrt()
    }
}

fn sound_sq_oracle(gamma: f64, rho: f64) -> f64 {
    rho.powf(gamma - 1.0)
}

/// `∫ √(q² − c²)/(qc) dq` from √2 q_cr to q_cav by Gauss–Legendre on
/// `q = q_cav − t²`, which removes the endpoint singularity.
fn a_quadrature(gamma: f64) -> f64 {
    let q_cr = (2.0 / (gamma + 1.0)).sqrt();
    let q_cav = (2.0 / (gamma - 1.0)).sqrt();
    let t_max = (q_cav - 2f64.sqrt() * q_cr).sqrt();
    let integrand = |t: f64| {
        let q = q_cav - t * t;
        let c2 = 1.0 - 0.5 * (gamma - 1.0) * q * q;
        // 2t / c stays bounded: c² ≈ (γ−1) q_cav · 2t² near t = 0
        let two_t_over_c = if t == 0.0 {
            2.0 / ((gamma - 1.0) * q_cav * 2.0).sqrt()
        } else {
            2.0 * t / c2.sqrt()
        };
        (q * q - c2).sqrt() / q * two_t_over_c
    };
    // composite 5-point Gauss–Legendre
    let nodes = [0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
    let weights = [0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];
    let panels = 400;
    let w = t_max / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * w;
        for (k, (&x, &wt)) in nodes.iter().zip(&weights).enumerate() {
            let f = if k == 0 {
                integrand(mid)
            } else {
                integrand(mid - 0.5 * w * x) + integrand(mid + 0.5 * w * x)
            };
            sum += wt * f * 0.5 * w;
        }
    }
    sum
}

fn fd4_first(f: impl Fn(f64) -> f64, x: f64, d: f64) -> f64 {
    (f(x - 2.0 * d) - 8.0 * f(x - d) + 8.0 * f(x + d) - f(x + 2.0 * d)) / (12.0 * d)
}

fn fd4_second(f: impl Fn(f64) -> f64, x: f64, d: f64) -> f64 {
    (-f(x - 2.0 * d) + 16.0 * f(x - d) - 30.0 * f(x) + 16.0 * f(x + d) - f(x + 2.0 * d)) / (12.0 * d * d)
}

fn bump_channel(bump_height: f64) -> DomainSpec {
    DomainSpec::Channel {
        length: 3.0,
        height: 1.0,
        bump_center: 1.5,
        bump_chord: 1.0,
        bump_height,
    }
}

// ---------------------------------------------------------------- criteria

fn c1_gamma_star() -> Verdict {
    let g = find_gamma_star();
    let a = a_quadrature(g);
    verdict(
        (1.223..=1.225).contains(&g) && (a - PI).abs() < 1e-6,
        format!("γ* = {g:.6}; quadrature oracle a(γ*) − π = {:.1e}", a - PI),
    )
}

fn c2_a_limit() -> Verdict {
    let end = a_of_gamma(2.999).unwrap();
    let grid: Vec<f64> = (0..50).map(|k| 1.05 + 1.9 * k as f64 / 49.0).collect();
    let values: Vec<f64> = grid.iter().map(|&g| a_of_gamma(g).unwrap()).collect();
    let monotone = values.windows(2).all(|w| w[1] < w[0]);
    let oracle_gap = grid
        .iter()
        .zip(&values)
        .step_by(7)
        .map(|(&g, &a)| (a - a_quadrature(g)).abs())
        .fold(0.0, f64::max);
    verdict(
        end < 0.02 && monotone && oracle_gap < 1e-6,
        format!("a(2.999) = {end:.4e}; monotone = {monotone}; closed form vs quadrature {oracle_gap:.1e}"),
    )
}

fn c3_bernoulli() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let gamma = if rng.gen_bool(0.05) { 1.0 } else { rng.gen_range(1.0..3.0) };
        let gas = GasModel::new(gamma).unwrap();
        let top = if gamma == 1.0 { 5.0 } else { gas.cavitation_speed() };
        let q = rng.gen_range(0.0..0.999 * top);
        let rho = gas.density(q).unwrap();
        let exact = density_oracle(gamma, q);
        worst = worst.max((rho - exact).abs() / exact);
    }
    verdict(worst <= 1e-12, format!("max relative error {worst:.2e} over 10⁴ samples"))
}

fn c4_viscosity_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for gamma in [1.0, 1.2, 1.4, 2.0, 2.8] {
        let gas = GasModel::new(gamma).unwrap();
        let qj = 2f64.sqrt() * (2.0 / (gamma + 1.0)).sqrt();
        let top = if gamma == 1.0 { 4.0 } else { (2.0 / (gamma - 1.0)).sqrt() };
        for _ in 0..100 {
            // σ₂ = (γ+1)/2 − 1/q² holds above √2 q_cr
            let q = qj + (top - qj) * rng.gen_range(0.02..0.95);
            let rho = density_oracle(gamma, q);
            let w_plus = |r: f64| {
                let q = speed_oracle(gamma, r);
                riemann_invariants(&gas, PhaseState::new(q, 0.0), qj).unwrap().0
            };
            let sigma2 = |r: f64| {
                let q = speed_oracle(gamma, r);
                0.5 * (gamma + 1.0) - 1.0 / (q * q)
            };
            let d = 1e-3 * rho;
            let w_r = fd4_first(w_plus, rho, d);
            let w_rr = fd4_second(w_plus, rho, d);
            let s_r = fd4_first(sigma2, rho, d);
            let c2 = sound_sq_oracle(gamma, rho);
            let lhs = w_rr - s_r * q * q / (q * q - c2) * w_r;
            let rhs = c2.sqrt() * ((gamma - 3.0) * q * q + 4.0 * c2) / (2.0 * rho * rho * q * q * (q * q - c2).sqrt());
            worst = worst.max((lhs - rhs).abs() / rhs.abs());
        }
    }
    verdict(worst <= 1e-5, format!("max relative mismatch {worst:.2e} at 500 points"))
}

fn c5_hstar() -> Verdict {
    let gas = GasModel::new(1.4).unwrap();
    let hstar = HStar::new(&gas, 0.9 * gas.critical_speed()).unwrap();
    let pair = entropy_pair(&hstar);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut tri, mut tri_fd, mut compat) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let q = rng.gen_range(0.05..0.9 * gas.cavitation_speed());
        let theta = rng.gen_range(-PI..PI);
        let rho = density_oracle(1.4, q);
        tri = tri.max(tricomi_residual(&hstar, rho, theta).unwrap().abs());
        // independent H_μμ = −(q/ρ) dH_μ/dq, since dμ/dq = −ρ/q
        let c2 = sound_sq_oracle(1.4, rho);
        let dh_dq = fd4_first(|s| hstar.h_mu(density_oracle(1.4, s)).unwrap(), q, 1e-3 * q);
        let h_mumu = -q / rho * dh_dq;
        let m2 = q * q / c2;
        tri_fd = tri_fd.max((h_mumu - (m2 - 1.0) / (rho * rho)).abs() / (1.0 + h_mumu.abs()));
        compat = compat.max(pair.compatibility_residual(rho, theta).unwrap());
    }
    verdict(
        tri <= 1e-10 && compat <= 1e-6 && tri_fd <= 1e-6,
        format!("Tricomi {tri:.1e} (difference oracle {tri_fd:.1e}); compatibility {compat:.1e}"),
    )
}

fn c6_fourier_mode() -> Verdict {
    let gas = GasModel::new(1.4).unwrap();
    let mu_end = gas.mu_of_speed(1.9).unwrap();
    let f = Arc::new(ModeSolution::solve(&gas, 2, ModeKind::Oscillatory, 0.0, mu_end, (1.0, 0.0)).unwrap());
    let g = ModeSolution::solve(&gas, 2, ModeKind::Oscillatory, 0.0, mu_end, (0.0, 1.0)).unwrap();
    let generator = SeparatedGenerator::new(f.clone(), Angular::Cos).unwrap();
    let d = 1e-3 * mu_end;
    let (mut tri, mut tri_fd, mut wr) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..=200 {
        let mu = mu_end * k as f64 / 200.0;
        wr = wr.max((f.wronskian(&g, mu).unwrap() - 1.0).abs());
        let rho = gas.rho_of_mu(mu).unwrap();
        let theta = 0.37;
        tri = tri.max(tricomi_residual(&generator, rho, theta).unwrap().abs());
        if mu - 2.0 * d >= 0.0 && mu + 2.0 * d <= mu_end {
            // F̈ cos nθ − n²(M²−1)/ρ² F cos nθ with F̈ from the values alone
            let f_mumu = fd4_second(|m| f.eval(m).unwrap().0, mu, d);
            let fv = f.eval(mu).unwrap().0;
            let q = speed_oracle(1.4, rho);
            let m2 = q * q / sound_sq_oracle(1.4, rho);
            let r = (f_mumu - 4.0 * (m2 - 1.0) / (rho * rho) * fv) * (2.0 * theta).cos();
            tri_fd = tri_fd.max(r.abs());
        }
    }
    verdict(
        tri <= 1e-6 && tri_fd <= 1e-6 && wr <= 1e-7,
        format!("Tricomi {tri:.1e} (difference oracle {tri_fd:.1e}); Wronskian drift {wr:.1e}"),
    )
}

fn manufactured_error(spec: &DomainSpec, h: f64) -> f64 {
    let grid = Grid::build(spec, h).unwrap();
    let exact = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
    let grad = |x: f64, y: f64| [PI * (PI * x).cos() * (PI * y).sin(), PI * (PI * x).sin() * (PI * y).cos()];
    let eps = 0.7;
    let f: Vec<f64> = (0..grid.len())
        .map(|n| {
            let [x, y] = grid.position(n);
            -2.0 * PI * PI * eps * exact(x, y)
        })
        .collect();
    let bc = MixedBc {
        dirichlet: dirichlet_from(&grid, exact),
        flux: flux_from(&grid, grad),
    };
    let w = solve_mixed_poisson(&grid, &f, &bc, eps).unwrap();
    grid.unknowns()
        .iter()
        .map(|&n| {
            let [x, y] = grid.position(n);
            (w[n] - exact(x, y)).abs()
        })
        .fold(0.0, f64::max)
}

fn c7_elliptic() -> Verdict {
    let square = DomainSpec::Rectangle { width: 1.0, height: 1.0 };
    let channel = DomainSpec::Channel {
        length: 1.0,
        height: 1.0,
        bump_center: 0.5,
        bump_chord: 0.5,
        bump_height: 0.0,
    };
    let hs = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
    let d: Vec<f64> = hs.iter().map(|&h| manufactured_error(&square, h)).collect();
    let m: Vec<f64> = hs.iter().map(|&h| manufactured_error(&channel, h)).collect();
    let pd = [(d[0] / d[1]).log2(), (d[1] / d[2]).log2()];
    let pm = [(m[0] / m[1]).log2(), (m[1] / m[2]).log2()];
    let ok = pd.iter().all(|p| (1.8..=2.2).contains(p)) && pm.iter().all(|&p| p >= 1.0);
    verdict(
        ok,
        format!(
            "Dirichlet orders {:.3}, {:.3}; mixed orders {:.3}, {:.3}",
            pd[0], pd[1], pm[0], pm[1]
        ),
    )
}

/// Dense assembly of εΔ_h w = λ f with far-field deviations zero and wall
/// ghosts `w_P + h g (n·e)`, solved by LU.
fn dense_poisson(grid: &Grid, rhs: &[f64], flux: Option<&[f64]>, eps: f64) -> Vec<f64> {
    let h = grid.spacing();
    let unknowns = grid.unknowns();
    let index = |n: usize| unknowns.iter().position(|&u| u == n);
    let k = unknowns.len();
    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut b = DVector::<f64>::zeros(k);
    let faces = grid.wall_faces();
    for (row, &p) in unknowns.iter().enumerate() {
        b[row] = rhs[p] * h * h / eps;
        a[(row, row)] -= 4.0;
        for dir in 0..4 {
            let e = DIRECTIONS[dir];
            let face = faces.iter().enumerate().find(|(_, f)| f.node == p && f.dir == dir);
            if let Some((fi, f)) = face {
                // ghost value w_P + h g (n·e)
                a[(row, row)] += 1.0;
                if let Some(g) = flux {
                    let ndote = f.normal[0] * e.0 as f64 + f.normal[1] * e.1 as f64;
                    b[row] -= h * g[fi] * ndote;
                }
                continue;
            }
            let nb = grid.neighbor(p, dir).expect("missing neighbour without a wall face");
            if let Some(col) = index(nb) {
                a[(row, col)] += 1.0;
            }
        }
    }
    let x = a.lu().solve(&b).expect("dense system is singular");
    let mut out = vec![0.0; grid.len()];
    for (row, &p) in unknowns.iter().enumerate() {
        out[p] = x[row];
    }
    out
}

fn c8_gamma_oracle() -> Verdict {
    let gas = GasModel::new(1.4).unwrap();
    let spec = DomainSpec::Channel {
        length: 1.0,
        height: 1.0,
        bump_center: 0.5,
        bump_chord: 0.6,
        bump_height: 0.12,
    };
    let grid = Arc::new(Grid::build(&spec, 1.0 / 15.0).unwrap());
    assert_eq!(grid.dims(), (16, 16));
    let q_inf = 0.6 * gas.critical_speed();
    let mut field = FlowField::uniform(grid.clone(), &gas, q_inf, 0.1).unwrap();
    for &n in grid.unknowns() {
        let [x, y] = grid.position(n);
        field.theta_bar[n] = 0.05 * (PI * x).sin() * (PI * y).sin() + 0.02 * (3.0 * x - y).cos();
        field.sigma_bar[n] = -0.03 * (PI * x).sin() * (2.0 * PI * y).sin().abs();
    }
    let (lambda, eps) = (0.8, 0.3);
    let mut worst = 0.0f64;
    let mut details = Vec::new();
    for sign in [BcSign::Minus, BcSign::Plus] {
        let mut cfg = SolveConfig::new(q_inf, eps);
        cfg.bc_sign = sign;
        let settings = MapSettings::from_config(&cfg, &gas).unwrap();
        let out = gamma_map(&field, lambda, eps, settings).unwrap();

        // independent forcing
        let h = grid.spacing();
        let delta = 1e-8 * density_oracle(1.4, q_inf) * q_inf;
        let s_sign = if sign == BcSign::Minus { -1.0 } else { 1.0 };
        let state = |n: usize| {
            let st = gas.state_of_sigma(field.sigma(n)).unwrap();
            let rho = st.rho;
            let q = speed_oracle(1.4, rho);
            let c2 = sound_sq_oracle(1.4, rho);
            let sigma2 = if q * q >= 2.0 * gas.critical_speed().powi(2) {
                1.2 - 1.0 / (q * q)
            } else {
                st.sigma2
            };
            (rho, q, c2, sigma2)
        };
        let flux: Vec<f64> = grid
            .wall_faces()
            .iter()
            .map(|f| {
                let (rho, q, _, _) = state(f.node);
                let t = field.theta(f.node);
                let x = rho * q * (t.cos() * f.normal[0] + t.sin() * f.normal[1]);
                s_sign * lambda * ((x * x + delta * delta).sqrt() - delta) / eps
            })
            .collect();
        let mut f1 = vec![0.0; grid.len()];
        let mut f2 = vec![0.0; grid.len()];
        for &p in grid.unknowns() {
            let nb_val = |v: &[f64], dir: usize, g: Option<&[f64]>| -> f64 {
                if let Some((fi, f)) = grid.wall_faces().iter().enumerate().find(|(_, f)| f.node == p && f.dir == dir) {
                    let e = DIRECTIONS[dir];
                    let ndote = f.normal[0] * e.0 as f64 + f.normal[1] * e.1 as f64;
                    return v[p] + g.map_or(0.0, |g| h * g[fi] * ndote);
                }
                v[grid.neighbor(p, dir).unwrap()]
            };
            let tx = (nb_val(&field.theta_bar, 0, None) - nb_val(&field.theta_bar, 1, None)) / (2.0 * h);
            let ty = (nb_val(&field.theta_bar, 2, None) - nb_val(&field.theta_bar, 3, None)) / (2.0 * h);
            let sx = (nb_val(&field.sigma_bar, 0, Some(&flux)) - nb_val(&field.sigma_bar, 1, Some(&flux))) / (2.0 * h);
            let sy = (nb_val(&field.sigma_bar, 2, Some(&flux)) - nb_val(&field.sigma_bar, 3, Some(&flux))) / (2.0 * h);
            let (rho, q, c2, sigma2) = state(p);
            let dq = -c2 / (rho * q * sigma2);
            let dm = (q * q - c2) / (q * sigma2);
            let (s, c) = field.theta(p).sin_cos();
            f1[p] = lambda * (dq * s * sx + q * c * tx - dq * c * sy + q * s * ty);
            f2[p] = lambda * (dm * c * sx - rho * q * s * tx + dm * s * sy + rho * q * c * ty);
        }
        let theta = dense_poisson(&grid, &f1, None, eps);
        let sigma = dense_poisson(&grid, &f2, Some(&flux), eps);
        let diff = theta
            .iter()
            .zip(&out.theta_bar)
            .chain(sigma.iter().zip(&out.sigma_bar))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(diff);
        details.push(format!("{sign:?} {diff:.1e}"));
    }
    verdict(worst <= 1e-8, format!("max-norm gap to dense oracle: {}", details.join(", ")))
}

fn c9_fixed_points() -> Verdict {
    let gas = GasModel::new(1.4).unwrap();
    let q_inf = 0.5 * gas.critical_speed();
    let flat = Arc::new(Grid::build(&bump_channel(0.0), 1.0 / 32.0).unwrap());
    let mut flat_iters = Vec::new();
    let mut flat_ok = true;
    for eps in [0.2, 0.05] {
        let out = ViscousProblem::new(flat.clone(), gas.clone(), SolveConfig::new(q_inf, eps))
            .unwrap()
            .solve()
            .unwrap();
        flat_iters.push(out.report.max_stage_iterations());
        flat_ok &= out.report.converged
            && out.report.max_stage_iterations() <= 2
            && out.field.theta_bar.iter().chain(&out.field.sigma_bar).all(|&v| v == 0.0);
    }

    // (λ = 0.5, ε) against (λ = 1, ε/0.5) on 32×32 nodes with different schedules
    let spec = DomainSpec::Channel {
        length: 1.0,
        height: 1.0,
        bump_center: 0.5,
        bump_chord: 0.5,
        bump_height: 0.03,
    };
    let grid = Arc::new(Grid::build(&spec, 1.0 / 31.0).unwrap());
    assert_eq!(grid.dims(), (32, 32));
    let eps = 1.0;
    let mut a = SolveConfig::new(q_inf, eps);
    a.lambda_schedule = uniform_schedule(10).iter().map(|l| 0.5 * l).collect();
    let mut b = SolveConfig::new(q_inf, eps / 0.5);
    b.lambda_schedule = uniform_schedule(4);
    let tol = a.tol;
    let ra = ViscousProblem::new(grid.clone(), gas.clone(), a).unwrap().solve().unwrap();
    let rb = ViscousProblem::new(grid, gas, b).unwrap().solve().unwrap();
    let diff = ra
        .field
        .theta_bar
        .iter()
        .zip(&rb.field.theta_bar)
        .chain(ra.field.sigma_bar.iter().zip(&rb.field.sigma_bar))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let lam_ok = ra.report.converged && rb.report.converged && diff <= 10.0 * tol;
    verdict(
        flat_ok && lam_ok,
        format!(
            "flat channel iterations per stage {flat_iters:?}; λ-consistency gap {diff:.1e} (limit {:.0e})",
            10.0 * tol
        ),
    )
}

struct Transonic {
    outcome: SolveOutcome,
    seconds: f64,
}

fn transonic_run(eps: f64, sign: BcSign) -> Transonic {
    let gas = GasModel::new(1.4).unwrap();
    let grid = Arc::new(Grid::build(&bump_channel(0.1), 1.0 / 64.0).unwrap());
    let mut cfg = SolveConfig::new(0.95 * gas.critical_speed(), eps);
    cfg.bc_sign = sign;
    let t = Instant::now();
    let outcome = ViscousProblem::new(grid, gas, cfg).unwrap().solve().unwrap();
    Transonic {
        outcome,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn describe_transonic(run: &Transonic) -> (bool, String) {
    let o = &run.outcome;
    let failed = o.report.stages.iter().find(|s| !s.converged);
    let mut text = match failed {
        None => format!("converged in {} iterations ({:.0} s)", o.report.total_iterations, run.seconds),
        Some(s) => format!(
            "stage λ = {:.2} failed after {} iterations ({:.0} s): {}",
            s.lambda,
            s.iterations,
            run.seconds,
            s.failure.as_deref().unwrap_or("iteration limit")
        ),
    };
    let mut ok = o.report.converged;
    if let Ok(region) = default_region(&o.field) {
        let c = containment_report(&o.field, &region);
        let gas = o.field.gas();
        let sonic = sonic_line(&o.field);
        ok &= c.all_inside() && c.max_speed <= c.q_star && c.q_star < gas.cavitation_speed() && !sonic.is_empty();
        text.push_str(&format!(
            "; inside {:.4}; max q {:.4} vs q* {:.4} (q_cav {:.4}); max M {:.3}; sonic length {:.3}",
            c.fraction_inside,
            c.max_speed,
            c.q_star,
            gas.cavitation_speed(),
            c.max_mach,
            sonic.length
        ));
    }
    (ok, text)
}

fn entropy_part(run: &Transonic) -> Option<f64> {
    entropy_inequality_check(&run.outcome.field).ok().map(|e| e.positive_part)
}

fn c10_transonic() -> Verdict {
    let t = Instant::now();
    let fine = transonic_run(0.05, BcSign::Plus);
    let coarse = transonic_run(0.1, BcSign::Plus);
    let (ok_fine, text) = describe_transonic(&fine);
    let (e_fine, e_coarse) = (entropy_part(&fine), entropy_part(&coarse));
    let trend = matches!((e_fine, e_coarse), (Some(a), Some(b)) if a <= b) && coarse.outcome.report.converged;
    let elapsed = t.elapsed();
    verdict(
        ok_fine && trend && elapsed < Duration::from_secs(600),
        format!(
            "ε = 0.05: {text}; entropy positive part {e_fine:?} vs ε = 0.1 {e_coarse:?} (ε = 0.1 converged: {})",
            coarse.outcome.report.converged
        ),
    )
}

// the opposite wall-flux sign, reported for comparison only
fn minus_sign_info() {
    let run = transonic_run(0.05, BcSign::Minus);
    let (_, text) = describe_transonic(&run);
    println!("    info: wall-flux sign minus, ε = 0.05: {text}; entropy positive part {:?}", entropy_part(&run));
}

fn c11_sweep() -> Verdict {
    let gas = GasModel::new(1.4).unwrap();
    let eps_list = [0.2, 0.1, 0.05, 0.025];
    let mut closures: Vec<Vec<Option<f64>>> = Vec::new();
    let mut i2_fine = Vec::new();
    let mut notes = Vec::new();
    for h in [1.0 / 32.0, 1.0 / 64.0] {
        let grid = Arc::new(Grid::build(&bump_channel(0.1), h).unwrap());
        let cfg = SolveConfig::new(0.95 * gas.critical_speed(), eps_list[0]);
        let sign = cfg.bc_sign;
        let problem = ViscousProblem::new(grid, gas.clone(), cfg).unwrap();
        let entries = epsilon_sweep(&problem, &eps_list).unwrap();
        let mut row = Vec::new();
        for e in &entries {
            let d = match &e.outcome {
                Ok(o) if o.report.converged => dissipation_integral(&o.field, e.epsilon, sign).ok(),
                Ok(o) => {
                    if h == 1.0 / 64.0 {
                        let s = o.report.stages.iter().find(|s| !s.converged).unwrap();
                        notes.push(format!("ε = {} stopped at λ = {:.2}", e.epsilon, s.lambda));
                    }
                    None
                }
                Err(err) => {
                    notes.push(format!("ε = {}: {err}", e.epsilon));
                    None
                }
            };
            row.push(d.as_ref().map(|d| d.closure_error.abs()));
            if h == 1.0 / 64.0 {
                i2_fine.push(d.map(|d| d.i2));
            }
        }
        closures.push(row);
    }
    let all = i2_fine.iter().all(Option::is_some);
    let i2: Vec<f64> = i2_fine.iter().flatten().copied().collect();
    let ratio = if i2.is_empty() {
        f64::NAN
    } else {
        i2.iter().copied().fold(f64::MIN, f64::max) / i2.iter().copied().fold(f64::MAX, f64::min)
    };
    // O(h): halving h must not increase the closure error beyond first-order scaling
    let closure_ok = (0..eps_list.len()).all(|k| match (closures[0][k], closures[1][k]) {
        (Some(a), Some(b)) => b <= 0.75 * a || b < 1e-12,
        _ => false,
    });
    verdict(
        all && ratio <= 10.0 && closure_ok,
        format!(
            "I₂ at h = 1/64: {i2_fine:?}; max/min ratio {ratio:.3}; closure errors {closures:?}; {}",
            if notes.is_empty() { "all converged".into() } else { notes.join("; ") }
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Verdict); 11] = [
        (1, "gamma star root", c1_gamma_star),
        (2, "a(gamma) limit and monotonicity", c2_a_limit),
        (3, "Bernoulli identity", c3_bernoulli),
        (4, "Riemann-invariant viscosity identity", c4_viscosity_identity),
        (5, "H* Tricomi and pair compatibility", c5_hstar),
        (6, "F_n family", c6_fourier_mode),
        (7, "elliptic kernel convergence", c7_elliptic),
        (8, "Gamma map dense oracle", c8_gamma_oracle),
        (9, "fixed points and lambda consistency", c9_fixed_points),
        (10, "transonic bump run", c10_transonic),
        (11, "epsilon sweep boundedness", c11_sweep),
    ];
    let limits = [1, 1, 1, 5, 5, 5, 60, 10, 120, 600, 1800];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failures = Vec::new();
    for ((id, name, f), limit) in criteria.into_iter().zip(limits) {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| verdict(false, "panicked"));
        let secs = t.elapsed().as_secs_f64();
        let in_time = secs < limit as f64;
        let passed = v.passed && in_time;
        let timing = if in_time { String::new() } else { format!(" [over the {limit} s budget]") };
        println!(
            "criterion {id:>2} {} {name} ({secs:.2} s){timing}: {}",
            if passed { "PASS" } else { "FAIL" },
            v.detail
        );
        if !passed {
            failures.push(id);
        }
    }
    if std::env::var_os("ACCEPTANCE_INFO").is_some() {
        minus_sign_info();
    }
    if !failures.is_empty() {
        println!("failed criteria: {failures:?}");
        // verdicts are reported either way; a strict run turns them into the exit code
        if std::env::var_os("ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
