//! The viscous problem in the (θ, σ) variables:
//!
//! ```text
//! εΔθ̄ = λ f₁(θ, σ),   ∇θ̄·n = 0 on the wall,            θ̄ = 0 on the far field,
//! εΔσ̄ = λ f₂(θ, σ),   ε∇σ̄·n = ∓λ|ρq(cosθ, sinθ)·n| on the wall, σ̄ = 0 on the far field,
//! ```
//!
//! with `θ = θ̄ + θ∞`, `σ = σ̄ + σ∞`, f₁ the irrotationality and f₂ the mass
//! balance written through σ. The map Γ evaluates the right sides at a given
//! field and solves the two decoupled Poisson problems; its fixed points are
//! found by damped (optionally Anderson-accelerated) iteration along a
//! homotopy in λ.

use std::sync::Arc;

use crate::banded::BandedMatrix;
use crate::elliptic::{MixedBc, PoissonSolver, Preconditioner, SolverOptions};
use crate::error::{Error, Result};
use crate::gas::{GasModel, SigmaState};
use crate::mesh::Grid;

/// Sign in front of the wall flux term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcSign {
    /// `ε∇σ̄·n = −λ|ρq·n|`, the sign the invariant-region argument is built on.
    Minus,
    /// `ε∇σ̄·n = +λ|ρq·n|`, the sign of the homotopy problem (default).
    Plus,
}

/// How the fixed point of Γ is searched for at each λ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// `x ← x + ω(Γ(x) − x)`, optionally Anderson-mixed.
    Picard,
    /// Newton on the discrete equations with a finite-difference Jacobian;
    /// convergence is still certified through Γ.
    Newton,
}

/// Differencing of the first-order terms f₁, f₂.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Difference {
    Centered,
    /// One-sided differences taken from the upstream side of the local flow.
    Upwind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub epsilon: f64,
    /// Increasing λ values ending at 1.
    pub lambda_schedule: Vec<f64>,
    pub omega: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub q_inf: f64,
    pub theta_inf: f64,
    pub bc_sign: BcSign,
    pub difference: Difference,
    pub method: Method,
    /// Anderson history length; 0 gives plain damped iteration.
    pub anderson_depth: usize,
    /// Smoothing width of the wall |·|; `None` selects `1e−8 ρ∞q∞`.
    pub delta: Option<f64>,
}

impl SolveConfig {
    pub fn new(q_inf: f64, epsilon: f64) -> Self {
        Self {
            epsilon,
            lambda_schedule: uniform_schedule(10),
            omega: 0.5,
            tol: 1e-8,
            max_iter: 5000,
            q_inf,
            theta_inf: 0.0,
            bc_sign: BcSign::Plus,
            difference: Difference::Centered,
            method: Method::Newton,
            anderson_depth: 8,
            delta: None,
        }
    }

    pub fn validate(&self, gas: &GasModel) -> Result<()> {
        let q_cr = gas.critical_speed();
        if !(self.q_inf > 0.0 && self.q_inf < q_cr) {
            return Err(Error::Config(format!(
                "far-field speed q_inf = {} must satisfy 0 < q_inf < q_cr = {q_cr} (subsonic far field)",
                self.q_inf
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon = {} must be positive", self.epsilon)));
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::Config(format!("omega = {} must lie in (0, 1]", self.omega)));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("tol must be positive and max_iter nonzero".into()));
        }
        if self.lambda_schedule.is_empty()
            || self.lambda_schedule.iter().any(|&l| !(l > 0.0 && l <= 1.0))
            || self.lambda_schedule.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Config("lambda schedule must increase within (0, 1]".into()));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0) {
                return Err(Error::Config(format!("delta = {d} must be positive")));
            }
        }
        Ok(())
    }
}

/// `λ = k/steps` for k = 1..=steps.
pub fn uniform_schedule(steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    (1..=steps).map(|k| k as f64 / steps as f64).collect()
}

/// Deviation fields (θ̄, σ̄) on a grid together with the far-field state.
#[derive(Debug, Clone)]
pub struct FlowField {
    grid: Arc<Grid>,
    gas: GasModel,
    pub theta_inf: f64,
    pub sigma_inf: f64,
    pub q_inf: f64,
    pub theta_bar: Vec<f64>,
    pub sigma_bar: Vec<f64>,
}

impl FlowField {
    /// Uniform far-field flow (θ̄ = σ̄ = 0).
    pub fn uniform(grid: Arc<Grid>, gas: &GasModel, q_inf: f64, theta_inf: f64) -> Result<Self> {
        let sigma_inf = gas.sigma_of_rho(gas.density(q_inf)?)?;
        let n = grid.len();
        Ok(Self {
            grid,
            gas: gas.clone(),
            theta_inf,
            sigma_inf,
            q_inf,
            theta_bar: vec![0.0; n],
            sigma_bar: vec![0.0; n],
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn gas(&self) -> &GasModel {
        &self.gas
    }

    pub fn theta(&self, node: usize) -> f64 {
        self.theta_bar[node] + self.theta_inf
    }

    pub fn sigma(&self, node: usize) -> f64 {
        self.sigma_bar[node] + self.sigma_inf
    }

    /// Thermodynamic state at a node; invalid σ is an error, never clamped.
    pub fn state(&self, node: usize) -> Result<SigmaState> {
        let s = self.sigma(node);
        if !(s <= 0.0) {
            return Err(Error::InvalidState(format!(
                "sigma = {s} at node {node} implies density above stagnation"
            )));
        }
        self.gas
            .state_of_sigma(s)
            .map_err(|e| Error::InvalidState(format!("node {node}: {e}")))
    }

    /// States at every fluid node (solid nodes hold the far-field state).
    pub fn states(&self) -> Result<Vec<SigmaState>> {
        let far = self.gas.state_of_sigma(self.sigma_inf)?;
        (0..self.grid.len())
            .map(|n| if self.grid.kind(n).is_fluid() { self.state(n) } else { Ok(far) })
            .collect()
    }

    /// Velocity (u, v) at a node.
    pub fn velocity(&self, node: usize) -> Result<[f64; 2]> {
        let q = self.state(node)?.speed;
        let (s, c) = self.theta(node).sin_cos();
        Ok([q * c, q * s])
    }
}

/// Settings of the Γ map that do not change along the homotopy.
#[derive(Debug, Clone, Copy)]
pub struct MapSettings {
    pub bc_sign: BcSign,
    pub difference: Difference,
    pub delta: f64,
}

impl MapSettings {
    pub fn from_config(config: &SolveConfig, gas: &GasModel) -> Result<Self> {
        let rho_inf = gas.density(config.q_inf)?;
        Ok(Self {
            bc_sign: config.bc_sign,
            difference: config.difference,
            delta: config.delta.unwrap_or(1e-8 * rho_inf * config.q_inf),
        })
    }
}

/// Right sides and wall data of the viscous problem at a field.
#[derive(Debug, Clone)]
pub struct Forcing {
    /// Per node.
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    /// `∇σ̄·n` per wall face.
    pub sigma_flux: Vec<f64>,
}

/// The Γ map on a fixed grid with its Poisson solver cached.
pub struct GammaMap<'a> {
    grid: &'a Grid,
    settings: MapSettings,
    poisson: PoissonSolver<'a>,
    zero_theta_bc: MixedBc,
}

impl<'a> GammaMap<'a> {
    pub fn new(grid: &'a Grid, settings: MapSettings, preconditioner: Preconditioner) -> Result<Self> {
        let options = SolverOptions {
            preconditioner,
            ..SolverOptions::default()
        };
        Ok(Self {
            grid,
            settings,
            poisson: PoissonSolver::new(grid, options)?,
            zero_theta_bc: MixedBc::zero(grid),
        })
    }

    pub fn settings(&self) -> MapSettings {
        self.settings
    }

    /// Smoothed `|x|`, exact zero at zero.
    fn smooth_abs(&self, x: f64) -> f64 {
        let d = self.settings.delta;
        (x * x + d * d).sqrt() - d
    }

    /// Evaluates f₁, f₂ and the wall flux at a field.
    pub fn forcing(&self, field: &FlowField, lambda: f64, eps: f64) -> Result<Forcing> {
        let grid = self.grid;
        let h = grid.spacing();
        let states = field.states()?;
        let sign = match self.settings.bc_sign {
            BcSign::Minus => -1.0,
            BcSign::Plus => 1.0,
        };
        let mut sigma_flux = vec![0.0; grid.wall_faces().len()];
        for (k, face) in grid.wall_faces().iter().enumerate() {
            let st = &states[face.node];
            let (s, c) = field.theta(face.node).sin_cos();
            let normal_mass = st.rho * st.speed * (c * face.normal[0] + s * face.normal[1]);
            sigma_flux[k] = sign * lambda * self.smooth_abs(normal_mass) / eps;
        }
        let mut f1 = vec![0.0; grid.len()];
        let mut f2 = vec![0.0; grid.len()];
        for &node in grid.unknowns() {
            // neighbour values (θ̄, σ̄) in each direction, ghosts at wall faces
            let mut theta_n = [field.theta_bar[node]; 4];
            let mut sigma_n = [field.sigma_bar[node]; 4];
            for dir in 0..4 {
                if let Some(nb) = grid.neighbor(node, dir) {
                    theta_n[dir] = field.theta_bar[nb];
                    sigma_n[dir] = field.sigma_bar[nb];
                }
            }
            for fi in grid.faces_of(node) {
                let face = &grid.wall_faces()[fi];
                sigma_n[face.dir] = field.sigma_bar[node] + h * sigma_flux[fi] * face.normal_dot_dir();
            }
            let st = &states[node];
            let theta = field.theta(node);
            let (s, c) = theta.sin_cos();
            let (tx, ty, sx, sy) = match self.settings.difference {
                Difference::Centered => (
                    (theta_n[0] - theta_n[1]) / (2.0 * h),
                    (theta_n[2] - theta_n[3]) / (2.0 * h),
                    (sigma_n[0] - sigma_n[1]) / (2.0 * h),
                    (sigma_n[2] - sigma_n[3]) / (2.0 * h),
                ),
                Difference::Upwind => {
                    let (tc, sc) = (field.theta_bar[node], field.sigma_bar[node]);
                    let dx = |v: &[f64; 4], centre: f64| if c >= 0.0 { (centre - v[1]) / h } else { (v[0] - centre) / h };
                    let dy = |v: &[f64; 4], centre: f64| if s >= 0.0 { (centre - v[3]) / h } else { (v[2] - centre) / h };
                    (dx(&theta_n, tc), dy(&theta_n, tc), dx(&sigma_n, sc), dy(&sigma_n, sc))
                }
            };
            let q = st.speed;
            let dq = st.dspeed_dsigma();
            let dm = st.dmass_flux_dsigma();
            let m = st.rho * q;
            f1[node] = dq * s * sx + q * c * tx - dq * c * sy + q * s * ty;
            f2[node] = dm * c * sx - m * s * tx + dm * s * sy + m * c * ty;
            if !(f1[node].is_finite() && f2[node].is_finite()) {
                return Err(Error::InvalidState(format!("non-finite forcing at node {node}")));
            }
        }
        Ok(Forcing { f1, f2, sigma_flux })
    }

    fn sigma_bc(&self, forcing: &Forcing) -> MixedBc {
        MixedBc {
            dirichlet: vec![0.0; self.grid.far_field().len()],
            flux: forcing.sigma_flux.clone(),
        }
    }

    /// Γ(field): the pair of Poisson solutions.
    pub fn apply(&self, field: &FlowField, lambda: f64, eps: f64) -> Result<FlowField> {
        let forcing = self.forcing(field, lambda, eps)?;
        let scale = |f: &[f64]| f.iter().map(|v| lambda * v).collect::<Vec<f64>>();
        let theta = self
            .poisson
            .solve_from(&scale(&forcing.f1), &self.zero_theta_bc, eps, Some(&field.theta_bar))?;
        let sigma = self
            .poisson
            .solve_from(&scale(&forcing.f2), &self.sigma_bc(&forcing), eps, Some(&field.sigma_bar))?;
        let mut out = field.clone();
        out.theta_bar = theta.field;
        out.sigma_bar = sigma.field;
        Ok(out)
    }

    /// `(h²/ε)(εΔ_h θ̄ − λf₁)` and the σ̄ counterpart, per node (zero off the unknowns).
    pub fn residual_fields(&self, field: &FlowField, lambda: f64, eps: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let forcing = self.forcing(field, lambda, eps)?;
        let mut rt = self.poisson.laplacian(&field.theta_bar, &self.zero_theta_bc);
        let mut rs = self.poisson.laplacian(&field.sigma_bar, &self.sigma_bc(&forcing));
        let h2 = self.grid.spacing().powi(2);
        for &n in self.grid.unknowns() {
            rt[n] = h2 * (rt[n] - lambda * forcing.f1[n] / eps);
            rs[n] = h2 * (rs[n] - lambda * forcing.f2[n] / eps);
        }
        Ok((rt, rs))
    }

    /// Max-norm of `εΔ_h θ̄ − λf₁` and `εΔ_h σ̄ − λf₂` over the unknown nodes,
    /// scaled by `h²/ε` so it is measured in the units of the linear systems.
    pub fn residual(&self, field: &FlowField, lambda: f64, eps: f64) -> Result<f64> {
        let (rt, rs) = self.residual_fields(field, lambda, eps)?;
        Ok(self.grid.unknowns().iter().map(|&n| rt[n].abs().max(rs[n].abs())).fold(0.0, f64::max))
    }
}

/// One application of Γ with a freshly assembled solver.
pub fn gamma_map(field: &FlowField, lambda: f64, eps: f64, settings: MapSettings) -> Result<FlowField> {
    GammaMap::new(field.grid(), settings, Preconditioner::Jacobi)?.apply(field, lambda, eps)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StageReport {
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final `max |Γ(x) − x|`.
    pub update: f64,
    /// Final residual of the discrete equations.
    pub residual: f64,
    pub rejected_steps: usize,
    /// Why the stage stopped early, if it did.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub total_iterations: usize,
    pub stages: Vec<StageReport>,
    /// `max |Γ(x) − x|` after every iteration of every stage.
    pub update_history: Vec<f64>,
}

impl SolveReport {
    pub fn max_stage_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.iterations).max().unwrap_or(0)
    }

    pub fn final_residual(&self) -> f64 {
        self.stages.last().map_or(f64::NAN, |s| s.residual)
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub field: FlowField,
    pub report: SolveReport,
}

/// A configured viscous problem on a grid.
#[derive(Debug, Clone)]
pub struct ViscousProblem {
    pub grid: Arc<Grid>,
    pub gas: GasModel,
    pub config: SolveConfig,
}

impl ViscousProblem {
    pub fn new(grid: Arc<Grid>, gas: GasModel, config: SolveConfig) -> Result<Self> {
        config.validate(&gas)?;
        Ok(Self { grid, gas, config })
    }

    pub fn uniform_field(&self) -> Result<FlowField> {
        FlowField::uniform(self.grid.clone(), &self.gas, self.config.q_inf, self.config.theta_inf)
    }

    fn map(&self) -> Result<GammaMap<'_>> {
        let settings = MapSettings::from_config(&self.config, &self.gas)?;
        GammaMap::new(&self.grid, settings, Preconditioner::Cholesky)
    }

    /// Runs the λ schedule from the uniform field.
    pub fn solve(&self) -> Result<SolveOutcome> {
        let start = self.uniform_field()?;
        self.solve_from(start, &self.config.lambda_schedule)
    }

    /// Runs the given λ values, warm-starting each from the previous result.
    pub fn solve_from(&self, start: FlowField, schedule: &[f64]) -> Result<SolveOutcome> {
        let map = self.map()?;
        let mut field = start;
        let mut report = SolveReport {
            converged: true,
            total_iterations: 0,
            stages: Vec::new(),
            update_history: Vec::new(),
        };
        for &lambda in schedule {
            let (next, stage) = self.iterate(&map, field, lambda, &mut report.update_history)?;
            field = next;
            report.total_iterations += stage.iterations;
            report.converged &= stage.converged;
            let stop = !stage.converged;
            report.stages.push(stage);
            if stop {
                break;
            }
        }
        Ok(SolveOutcome { field, report })
    }

    fn iterate(&self, map: &GammaMap<'_>, start: FlowField, lambda: f64, history: &mut Vec<f64>) -> Result<(FlowField, StageReport)> {
        let fallback = start.clone();
        let run = match self.config.method {
            Method::Picard => self.picard(map, start, lambda, history),
            Method::Newton => self.newton(map, start, lambda, history),
        };
        match run {
            Err(Error::InvalidState(msg)) => {
                let residual = map.residual(&fallback, lambda, self.config.epsilon).unwrap_or(f64::INFINITY);
                Ok((
                    fallback,
                    StageReport {
                        lambda,
                        iterations: 0,
                        converged: false,
                        update: f64::INFINITY,
                        residual,
                        rejected_steps: 0,
                        failure: Some(msg),
                    },
                ))
            }
            other => other,
        }
    }

    fn newton(&self, map: &GammaMap<'_>, start: FlowField, lambda: f64, history: &mut Vec<f64>) -> Result<(FlowField, StageReport)> {
        let cfg = &self.config;
        let eps = cfg.epsilon;
        let system = NewtonSystem::new(&self.grid);
        let mut current = start;
        let mut iterations = 0;
        let mut rejected = 0;
        let mut update = f64::INFINITY;
        let mut residual = f64::INFINITY;
        let mut converged = false;
        let mut failure = None;
        let (mut best, mut best_at) = (f64::INFINITY, 0);
        while iterations < cfg.max_iter {
            iterations += 1;
            let image = map.apply(&current, lambda, eps)?;
            update = max_update(&self.grid, &current, &image);
            history.push(update);
            if update < 0.99 * best {
                (best, best_at) = (update, iterations);
            } else if iterations - best_at >= NEWTON_STALL {
                failure = Some(format!("no progress in {NEWTON_STALL} Newton steps"));
                break;
            }
            if update < cfg.tol {
                residual = map.residual(&image, lambda, eps)?;
                if residual <= 10.0 * cfg.tol {
                    current = image;
                    converged = true;
                    break;
                }
            }
            let r = system.residual(map, &current, lambda, eps)?;
            let norm0 = l2(&r);
            let direction = match system.jacobian(map, &current, &r, lambda, eps) {
                Ok(jac) => match jac.factor() {
                    Ok(lu) => {
                        let mut dx: Vec<f64> = r.iter().map(|v| -v).collect();
                        lu.solve(&mut dx);
                        Some(dx)
                    }
                    Err(Error::Singular(_)) => None,
                    Err(e) => return Err(e),
                },
                Err(Error::InvalidState(_)) => None,
                Err(e) => return Err(e),
            };
            let mut accepted = None;
            if let Some(dx) = &direction {
                let mut t = 1.0;
                while t >= 1.0 / 64.0 {
                    let trial = system.displaced(&current, dx, t);
                    if let Ok(rt) = system.residual(map, &trial, lambda, eps) {
                        if l2(&rt) < (1.0 - 1e-4 * t) * norm0 {
                            accepted = Some(trial);
                            break;
                        }
                    }
                    rejected += 1;
                    t *= 0.5;
                }
            }
            current = match accepted {
                Some(f) => f,
                // stalled Newton: fall back on a damped Γ step that keeps the state valid
                None => {
                    let mut omega = cfg.omega;
                    loop {
                        let trial = relax(&self.grid, &current, &image, omega);
                        if trial.states().is_ok() || omega < 1e-6 {
                            break trial;
                        }
                        omega *= 0.5;
                    }
                }
            };
            if let Err(e) = current.states() {
                return Err(e);
            }
        }
        if !converged && residual.is_infinite() {
            residual = map.residual(&current, lambda, eps).unwrap_or(f64::INFINITY);
        }
        Ok((
            current,
            StageReport {
                lambda,
                iterations,
                converged,
                update,
                residual,
                rejected_steps: rejected,
                failure,
            },
        ))
    }

    fn picard(&self, map: &GammaMap<'_>, start: FlowField, lambda: f64, history: &mut Vec<f64>) -> Result<(FlowField, StageReport)> {
        let cfg = &self.config;
        let eps = cfg.epsilon;
        let unknowns = self.grid.unknowns();
        let pack = |f: &FlowField| -> Vec<f64> {
            unknowns
                .iter()
                .map(|&n| f.theta_bar[n])
                .chain(unknowns.iter().map(|&n| f.sigma_bar[n]))
                .collect()
        };
        let unpack = |x: &[f64], template: &FlowField| -> FlowField {
            let mut f = template.clone();
            let m = unknowns.len();
            for (k, &n) in unknowns.iter().enumerate() {
                f.theta_bar[n] = x[k];
                f.sigma_bar[n] = x[m + k];
            }
            f
        };
        let mut omega = cfg.omega;
        let mut accel = Anderson::new(cfg.anderson_depth);
        let mut x = pack(&start);
        let mut current = start;
        let mut image = map.apply(&current, lambda, eps)?;
        let mut g: Vec<f64> = pack(&image).iter().zip(&x).map(|(a, b)| a - b).collect();
        let mut update = max_abs(&g);
        let mut best = update;
        let mut iterations = 1;
        let mut rejected = 0;
        history.push(update);
        let mut residual;
        loop {
            if update < cfg.tol {
                residual = map.residual(&image, lambda, eps)?;
                if residual <= 10.0 * cfg.tol {
                    current = image;
                    break;
                }
                // the image is the better iterate when Γ contracts; keep going from it
            }
            if iterations >= cfg.max_iter {
                residual = map.residual(&current, lambda, eps).unwrap_or(f64::INFINITY);
                break;
            }
            let proposal = accel.propose(&x, &g, omega);
            let candidate = unpack(&proposal, &current);
            iterations += 1;
            match map.apply(&candidate, lambda, eps) {
                Ok(next_image) => {
                    let x_new = proposal;
                    let g_new: Vec<f64> = pack(&next_image).iter().zip(&x_new).map(|(a, b)| a - b).collect();
                    let u_new = max_abs(&g_new);
                    history.push(u_new);
                    if u_new > 10.0 * best.max(cfg.tol) && u_new > update {
                        // diverging: restart from the best-known direction with less damping
                        rejected += 1;
                        omega = (0.5 * omega).max(1e-4);
                        accel.clear();
                        continue;
                    }
                    if u_new < update {
                        omega = cfg.omega.min(omega * 2.0);
                    } else if accel.depth == 0 {
                        omega = (0.5 * omega).max(1e-4);
                    }
                    best = best.min(u_new);
                    x = x_new;
                    g = g_new;
                    update = u_new;
                    current = candidate;
                    image = next_image;
                }
                Err(Error::InvalidState(_)) => {
                    rejected += 1;
                    omega = (0.5 * omega).max(1e-4);
                    accel.clear();
                }
                Err(e) => return Err(e),
            }
        }
        let converged = update < cfg.tol && residual <= 10.0 * cfg.tol;
        Ok((
            current,
            StageReport {
                lambda,
                iterations,
                converged,
                update,
                residual,
                rejected_steps: rejected,
                failure: None,
            },
        ))
    }
}

/// Newton steps without a 1% drop in the update before a stage is abandoned.
const NEWTON_STALL: usize = 25;

fn max_update(grid: &Grid, a: &FlowField, b: &FlowField) -> f64 {
    grid.unknowns()
        .iter()
        .map(|&n| (a.theta_bar[n] - b.theta_bar[n]).abs().max((a.sigma_bar[n] - b.sigma_bar[n]).abs()))
        .fold(0.0, f64::max)
}

fn relax(grid: &Grid, a: &FlowField, b: &FlowField, omega: f64) -> FlowField {
    let mut out = a.clone();
    for &n in grid.unknowns() {
        out.theta_bar[n] += omega * (b.theta_bar[n] - a.theta_bar[n]);
        out.sigma_bar[n] += omega * (b.sigma_bar[n] - a.sigma_bar[n]);
    }
    out
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Ordering and sparsity of the Newton system: unknowns interleaved (θ̄, σ̄)
/// and sorted along the shorter grid direction first, so the band is narrow.
struct NewtonSystem<'g> {
    grid: &'g Grid,
    /// Row of θ̄ at each unknown (σ̄ is the next row).
    row: Vec<usize>,
    /// Unknown index at each (θ̄) row / 2.
    node_of: Vec<usize>,
    band: usize,
}

impl<'g> NewtonSystem<'g> {
    fn new(grid: &'g Grid) -> Self {
        let (nx, ny) = grid.dims();
        let mut order: Vec<usize> = grid.unknowns().to_vec();
        if nx >= ny {
            order.sort_by_key(|&n| (n % nx, n / nx));
        } else {
            order.sort_by_key(|&n| (n / nx, n % nx));
        }
        let mut row = vec![usize::MAX; grid.len()];
        for (k, &n) in order.iter().enumerate() {
            row[n] = 2 * k;
        }
        let mut band = 1;
        for &n in &order {
            for dir in 0..4 {
                if let Some(nb) = grid.neighbor(n, dir) {
                    if row[nb] != usize::MAX {
                        band = band.max(row[n].abs_diff(row[nb]) + 1);
                    }
                }
            }
        }
        Self {
            grid,
            row,
            node_of: order,
            band,
        }
    }

    fn dim(&self) -> usize {
        2 * self.node_of.len()
    }

    fn residual(&self, map: &GammaMap<'_>, field: &FlowField, lambda: f64, eps: f64) -> Result<Vec<f64>> {
        let (rt, rs) = map.residual_fields(field, lambda, eps)?;
        let mut out = vec![0.0; self.dim()];
        for &n in &self.node_of {
            out[self.row[n]] = rt[n];
            out[self.row[n] + 1] = rs[n];
        }
        Ok(out)
    }

    fn displaced(&self, field: &FlowField, dx: &[f64], t: f64) -> FlowField {
        let mut out = field.clone();
        for &n in &self.node_of {
            out.theta_bar[n] += t * dx[self.row[n]];
            out.sigma_bar[n] += t * dx[self.row[n] + 1];
        }
        out
    }

    /// Jacobian by one-sided differences over a colouring in which columns of
    /// one colour never share a row: a row depends only on its node and the
    /// four neighbours, and `(i + 2j) mod 5` separates those stencils.
    fn jacobian(&self, map: &GammaMap<'_>, field: &FlowField, r0: &[f64], lambda: f64, eps: f64) -> Result<BandedMatrix> {
        let grid = self.grid;
        let nx = grid.dims().0;
        let mut jac = BandedMatrix::zeros(self.dim(), self.band, self.band);
        for colour in 0..5 {
            let members: Vec<usize> = self.node_of.iter().copied().filter(|&n| (n % nx + 2 * (n / nx)) % 5 == colour).collect();
            if members.is_empty() {
                continue;
            }
            for component in 0..2 {
                let mut trial = field.clone();
                let mut steps = Vec::with_capacity(members.len());
                for &n in &members {
                    let v = if component == 0 { &mut trial.theta_bar[n] } else { &mut trial.sigma_bar[n] };
                    let eta = 1e-7 * (1.0 + v.abs());
                    *v += eta;
                    steps.push(eta);
                }
                let r1 = self.residual(map, &trial, lambda, eps)?;
                for (&n, &eta) in members.iter().zip(&steps) {
                    let col = self.row[n] + component;
                    let mut rows = vec![n];
                    rows.extend((0..4).filter_map(|d| grid.neighbor(n, d)).filter(|&m| self.row[m] != usize::MAX));
                    for m in rows {
                        for out in 0..2 {
                            let r = self.row[m] + out;
                            let d = (r1[r] - r0[r]) / eta;
                            if d != 0.0 {
                                jac.add(r, col, d)?;
                            }
                        }
                    }
                }
            }
        }
        Ok(jac)
    }
}

/// Anderson mixing over a short history of iterates and residuals.
struct Anderson {
    depth: usize,
    xs: Vec<Vec<f64>>,
    gs: Vec<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Self {
            depth,
            xs: Vec::new(),
            gs: Vec::new(),
        }
    }

    fn clear(&mut self) {
        self.xs.clear();
        self.gs.clear();
    }

    /// Next iterate from the current point x and residual g = Γ(x) − x.
    fn propose(&mut self, x: &[f64], g: &[f64], omega: f64) -> Vec<f64> {
        let plain: Vec<f64> = x.iter().zip(g).map(|(a, b)| a + omega * b).collect();
        if self.depth == 0 {
            return plain;
        }
        self.xs.push(x.to_vec());
        self.gs.push(g.to_vec());
        if self.xs.len() > self.depth + 1 {
            self.xs.remove(0);
            self.gs.remove(0);
        }
        let m = self.xs.len() - 1;
        if m == 0 {
            return plain;
        }
        let dg: Vec<Vec<f64>> = (0..m).map(|j| diff(&self.gs[j + 1], &self.gs[j])).collect();
        let dx: Vec<Vec<f64>> = (0..m).map(|j| diff(&self.xs[j + 1], &self.xs[j])).collect();
        // least squares min |g − ΔG γ| through regularized normal equations
        let mut a = vec![vec![0.0; m]; m];
        let mut b = vec![0.0; m];
        for i in 0..m {
            for j in 0..=i {
                let v = dot(&dg[i], &dg[j]);
                a[i][j] = v;
                a[j][i] = v;
            }
            b[i] = dot(&dg[i], g);
        }
        let trace: f64 = (0..m).map(|i| a[i][i]).sum();
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += 1e-12 * trace.max(f64::MIN_POSITIVE);
        }
        let Some(gamma) = solve_small(a, b) else {
            self.clear();
            return plain;
        };
        let mut out = plain;
        for j in 0..m {
            for k in 0..out.len() {
                out[k] -= gamma[j] * (dx[j][k] + omega * dg[j][k]);
            }
        }
        out
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Gaussian elimination with partial pivoting for the small Anderson system.
fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Result of one ε in a sweep.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub outcome: std::result::Result<SolveOutcome, String>,
}

/// Solves for each ε (descending), warm-starting from the previous field.
pub fn epsilon_sweep(problem: &ViscousProblem, epsilons: &[f64]) -> Result<Vec<SweepEntry>> {
    if epsilons.is_empty() || epsilons.windows(2).any(|w| w[1] >= w[0]) || epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Config("epsilon list must be positive and strictly descending".into()));
    }
    let mut entries = Vec::new();
    let mut previous: Option<FlowField> = None;
    for &eps in epsilons {
        let mut p = problem.clone();
        p.config.epsilon = eps;
        let run = || -> Result<SolveOutcome> {
            if let Some(prev) = &previous {
                let warm = p.solve_from(prev.clone(), &[1.0])?;
                if warm.report.converged {
                    return Ok(warm);
                }
            }
            p.solve()
        };
        let outcome = run().map_err(|e| e.to_string());
        if let Ok(o) = &outcome {
            if o.report.converged {
                previous = Some(o.field.clone());
            }
        }
        entries.push(SweepEntry { epsilon: eps, outcome });
    }
    Ok(entries)
}

/// `(∫_Ω_δ |(u,v)_a − (u,v)_b|²)^{1/2}` over nodes at least δ from the wall.
pub fn l2_velocity_difference(a: &FlowField, b: &FlowField, delta: f64) -> Result<f64> {
    let grid = a.grid();
    let mut sum = 0.0;
    for n in 0..grid.len() {
        if !grid.kind(n).is_fluid() || grid.wall_distance(n) < delta {
            continue;
        }
        let va = a.velocity(n)?;
        let vb = b.velocity(n)?;
        sum += ((va[0] - vb[0]).powi(2) + (va[1] - vb[1]).powi(2)) * grid.area(n);
    }
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::DomainSpec;

    fn channel(bump_height: f64, h: f64) -> Arc<Grid> {
        let spec = DomainSpec::Channel {
            length: 3.0,
            height: 1.0,
            bump_center: 1.5,
            bump_chord: 1.0,
            bump_height,
        };
        Arc::new(Grid::build(&spec, h).unwrap())
    }

    #[test]
    fn subsonic_far_field_is_required() {
        let gas = GasModel::new(1.4).unwrap();
        let q_cr = gas.critical_speed();
        for q in [q_cr, 1.1 * q_cr, 0.0, -0.3] {
            let err = SolveConfig::new(q, 0.1).validate(&gas).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{err}");
        }
        assert!(SolveConfig::new(0.5 * q_cr, 0.1).validate(&gas).is_ok());
    }

    #[test]
    fn flat_channel_is_a_fixed_point() {
        let gas = GasModel::new(1.4).unwrap();
        let grid = channel(0.0, 1.0 / 16.0);
        let cfg = SolveConfig::new(0.6 * gas.critical_speed(), 0.1);
        let out = ViscousProblem::new(grid, gas, cfg).unwrap().solve().unwrap();
        assert!(out.report.converged);
        assert!(out.report.max_stage_iterations() <= 2, "{:?}", out.report.stages);
        let max_dev = out.field.theta_bar.iter().chain(&out.field.sigma_bar).fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_dev < 1e-12, "{max_dev}");
    }

    #[test]
    fn lambda_scales_like_viscosity() {
        // (λ, ε) and (1, ε/λ) define the same map
        let gas = GasModel::new(1.4).unwrap();
        let grid = channel(0.08, 1.0 / 16.0);
        let cfg = SolveConfig::new(0.6 * gas.critical_speed(), 0.2);
        let settings = MapSettings::from_config(&cfg, &gas).unwrap();
        let mut field = FlowField::uniform(grid, &gas, cfg.q_inf, 0.0).unwrap();
        for (k, v) in field.theta_bar.iter_mut().enumerate() {
            if field.grid.kind(k).is_unknown() {
                *v = 0.01 * ((k % 7) as f64 - 3.0);
            }
        }
        let a = gamma_map(&field, 0.4, 0.2, settings).unwrap();
        let b = gamma_map(&field, 1.0, 0.5, settings).unwrap();
        for (x, y) in a.theta_bar.iter().zip(&b.theta_bar).chain(a.sigma_bar.iter().zip(&b.sigma_bar)) {
            assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn subsonic_bump_converges_with_small_residual() {
        let gas = GasModel::new(1.4).unwrap();
        let q_cr = gas.critical_speed();
        let grid = channel(0.02, 1.0 / 16.0);
        let cfg = SolveConfig::new(0.5 * q_cr, 1.0);
        let out = ViscousProblem::new(grid, gas, cfg).unwrap().solve().unwrap();
        assert!(out.report.converged, "{:?}", out.report.stages);
        assert!(out.report.final_residual() <= 1e-7);
        assert!(out.field.states().unwrap().iter().all(|s| s.speed < q_cr));
    }

    #[test]
    fn picard_and_newton_reach_the_same_fixed_point() {
        let gas = GasModel::new(1.4).unwrap();
        let grid = channel(0.02, 1.0 / 16.0);
        let mut cfg = SolveConfig::new(0.5 * gas.critical_speed(), 1.0);
        let a = ViscousProblem::new(grid.clone(), gas.clone(), cfg.clone()).unwrap().solve().unwrap();
        cfg.method = Method::Picard;
        let b = ViscousProblem::new(grid, gas, cfg).unwrap().solve().unwrap();
        assert!(a.report.converged && b.report.converged, "{:?}", b.report.stages);
        let d = l2_velocity_difference(&a.field, &b.field, 0.0).unwrap();
        assert!(d < 1e-6, "{d}");
    }

    #[test]
    fn invalid_states_end_the_stage_without_an_error() {
        let gas = GasModel::new(1.4).unwrap();
        let grid = channel(0.1, 1.0 / 8.0);
        let mut cfg = SolveConfig::new(0.5 * gas.critical_speed(), 0.02);
        cfg.lambda_schedule = vec![1.0];
        cfg.max_iter = 30;
        let out = ViscousProblem::new(grid, gas, cfg).unwrap().solve().unwrap();
        assert!(!out.report.converged);
        out.field.states().unwrap();
    }
}
