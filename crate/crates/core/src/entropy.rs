//! Entropy generators solving the generalized Tricomi equation
//! `H_μμ + (1 − M²)/ρ² H_θθ = 0`, the Loewner–Morawetz entropy pairs they
//! generate, the convex prototype H*, and the separated families
//! `F_n(μ) e^{±inθ}` and `K_n(μ) e^{±nθ}`.
//!
//! Generators are evaluated at a state `(ρ, θ)`; the hodograph variable μ is
//! recovered from ρ through the gas model.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gas::GasModel;
use crate::ode::{self, Node, Tolerance};
use crate::quadrature;
use crate::table::HermiteTable;

/// Partial derivatives of a generator with respect to (μ, θ).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Partials {
    pub h_mu: f64,
    pub h_theta: f64,
    pub h_mumu: f64,
    pub h_thetatheta: f64,
    pub h_mutheta: f64,
}

impl Partials {
    pub fn scaled(self, a: f64) -> Self {
        Self {
            h_mu: a * self.h_mu,
            h_theta: a * self.h_theta,
            h_mumu: a * self.h_mumu,
            h_thetatheta: a * self.h_thetatheta,
            h_mutheta: a * self.h_mutheta,
        }
    }

    pub fn plus(self, o: Self) -> Self {
        Self {
            h_mu: self.h_mu + o.h_mu,
            h_theta: self.h_theta + o.h_theta,
            h_mumu: self.h_mumu + o.h_mumu,
            h_thetatheta: self.h_thetatheta + o.h_thetatheta,
            h_mutheta: self.h_mutheta + o.h_mutheta,
        }
    }
}

/// A function H(μ, θ), evaluated at density ρ and angle θ.
pub trait EntropyGenerator: Send + Sync {
    fn gas(&self) -> &GasModel;
    fn label(&self) -> String;
    fn value(&self, rho: f64, theta: f64) -> Result<f64>;
    fn partials(&self, rho: f64, theta: f64) -> Result<Partials>;
}

impl<G: EntropyGenerator + ?Sized> EntropyGenerator for &G {
    fn gas(&self) -> &GasModel {
        (**self).gas()
    }
    fn label(&self) -> String {
        (**self).label()
    }
    fn value(&self, rho: f64, theta: f64) -> Result<f64> {
        (**self).value(rho, theta)
    }
    fn partials(&self, rho: f64, theta: f64) -> Result<Partials> {
        (**self).partials(rho, theta)
    }
}

impl<G: EntropyGenerator + ?Sized> EntropyGenerator for Box<G> {
    fn gas(&self) -> &GasModel {
        (**self).gas()
    }
    fn label(&self) -> String {
        (**self).label()
    }
    fn value(&self, rho: f64, theta: f64) -> Result<f64> {
        (**self).value(rho, theta)
    }
    fn partials(&self, rho: f64, theta: f64) -> Result<Partials> {
        (**self).partials(rho, theta)
    }
}

/// `H_μμ + (1 − M²)/ρ² H_θθ` at a state.
pub fn tricomi_residual<G: EntropyGenerator + ?Sized>(generator: &G, rho: f64, theta: f64) -> Result<f64> {
    let p = generator.partials(rho, theta)?;
    let m2 = generator.gas().mach_sq_of_rho(rho);
    Ok(p.h_mumu + (1.0 - m2) / (rho * rho) * p.h_thetatheta)
}

/// First derivatives of (Q₁, Q₂) with respect to ρ and θ, in the form where
/// the `(c² − q²)` denominators have been cancelled using the Tricomi equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDerivatives {
    pub q1_rho: f64,
    pub q1_theta: f64,
    pub q2_rho: f64,
    pub q2_theta: f64,
}

/// The entropy pair generated by H through the Loewner–Morawetz relation
/// `Q₁ = ρqH_μ cosθ − qH_θ sinθ`, `Q₂ = ρqH_μ sinθ + qH_θ cosθ`.
#[derive(Debug, Clone)]
pub struct EntropyPair<G> {
    generator: G,
}

impl<G: EntropyGenerator> EntropyPair<G> {
    pub fn new(generator: G) -> Self {
        Self { generator }
    }

    pub fn generator(&self) -> &G {
        &self.generator
    }

    /// (Q₁, Q₂) at density ρ and angle θ.
    pub fn eval(&self, rho: f64, theta: f64) -> Result<(f64, f64)> {
        let p = self.generator.partials(rho, theta)?;
        let q = self.generator.gas().speed_sq_of_rho(rho).max(0.0).sqrt();
        let (s, c) = theta.sin_cos();
        let a = rho * q * p.h_mu;
        let b = q * p.h_theta;
        Ok((a * c - b * s, a * s + b * c))
    }

    /// (Q₁, Q₂) at speed q and angle θ.
    pub fn eval_at_speed(&self, q: f64, theta: f64) -> Result<(f64, f64)> {
        let rho = self.generator.gas().density(q)?;
        self.eval(rho, theta)
    }

    pub fn derivatives(&self, rho: f64, theta: f64) -> Result<PairDerivatives> {
        let gas = self.generator.gas();
        let p = self.generator.partials(rho, theta)?;
        let q2 = gas.speed_sq_of_rho(rho).max(0.0);
        let q = q2.sqrt();
        let c2 = gas.sound_speed_sq_of_rho(rho);
        let (s, c) = theta.sin_cos();
        let radial = p.h_mu + p.h_thetatheta / rho;
        let twist = rho * p.h_mutheta - p.h_theta;
        let stretch = (q2 - c2) / q;
        let turn = c2 / (rho * q);
        Ok(PairDerivatives {
            q1_rho: stretch * c * radial - turn * s * twist,
            q1_theta: q * c * twist - rho * q * s * radial,
            q2_rho: turn * c * twist + stretch * s * radial,
            q2_theta: q * s * twist + rho * q * c * radial,
        })
    }

    /// Largest mismatch `|∂θ(∂ρQᵢ) − ∂ρ(∂θQᵢ)|` over i = 1, 2 from finite
    /// differences of [`EntropyPair::derivatives`]. Vanishes (to truncation)
    /// exactly when H solves the Tricomi equation.
    pub fn compatibility_residual(&self, rho: f64, theta: f64) -> Result<f64> {
        let h_rho = 1e-3 * rho.min(1.0 - rho);
        let h_theta = 1e-3;
        let d_theta = |h: f64| -> Result<(f64, f64)> {
            let a = self.derivatives(rho, theta + h)?;
            let b = self.derivatives(rho, theta - h)?;
            Ok(((a.q1_rho - b.q1_rho) / (2.0 * h), (a.q2_rho - b.q2_rho) / (2.0 * h)))
        };
        let d_rho = |h: f64| -> Result<(f64, f64)> {
            let a = self.derivatives(rho + h, theta)?;
            let b = self.derivatives(rho - h, theta)?;
            Ok(((a.q1_theta - b.q1_theta) / (2.0 * h), (a.q2_theta - b.q2_theta) / (2.0 * h)))
        };
        let t = richardson(d_theta(h_theta)?, d_theta(0.5 * h_theta)?);
        let r = richardson(d_rho(h_rho)?, d_rho(0.5 * h_rho)?);
        Ok((t.0 - r.0).abs().max((t.1 - r.1).abs()))
    }
}

fn richardson(coarse: (f64, f64), fine: (f64, f64)) -> (f64, f64) {
    ((4.0 * fine.0 - coarse.0) / 3.0, (4.0 * fine.1 - coarse.1) / 3.0)
}

pub fn entropy_pair<G: EntropyGenerator>(generator: G) -> EntropyPair<G> {
    EntropyPair::new(generator)
}

const K_TABLE_NODES: usize = 8192;
const K_TABLE_RHO_MIN: f64 = 1e-8;

/// The convex generator `H* = θ²/2 + G(μ)` with `G″(μ) = (M² − 1)/ρ²`.
///
/// `H*_μ = ∫_{q̄}^q dq′/(ρq′) − 1/ρ`, so the pair flux vanishes at the
/// reference speed q̄ on horizontal flow. G is normalized to zero at the sonic
/// density.
#[derive(Debug, Clone)]
pub struct HStar {
    gas: GasModel,
    qbar: f64,
    /// `K(ρ) = ∫₀^{q(ρ)} (1/ρ − 1)/q dq` against ln ρ.
    k_table: Arc<HermiteTable>,
    k_bar: f64,
}

impl HStar {
    pub fn new(gas: &GasModel, qbar: f64) -> Result<Self> {
        if !(qbar > 0.0 && qbar < gas.cavitation_speed()) {
            return Err(Error::domain("reference speed", qbar, format!("(0, {})", gas.cavitation_speed())));
        }
        let slope = |t: f64| -> f64 {
            if t == 0.0 {
                return -0.5;
            }
            let rho = t.exp();
            let q2 = gas.speed_sq_of_rho(rho);
            -(-t).exp_m1() * gas.sound_speed_sq_of_rho(rho) / q2
        };
        let t0 = K_TABLE_RHO_MIN.ln();
        let dt = -t0 / (K_TABLE_NODES - 1) as f64;
        let ts: Vec<f64> = (0..K_TABLE_NODES)
            .map(|i| if i == K_TABLE_NODES - 1 { 0.0 } else { t0 + dt * i as f64 })
            .collect();
        let mut values = vec![0.0; K_TABLE_NODES];
        for i in (0..K_TABLE_NODES - 1).rev() {
            values[i] = values[i + 1] - quadrature::integrate(slope, ts[i], ts[i + 1], 1e-15);
        }
        let slopes = ts.iter().map(|&t| slope(t)).collect();
        let k_table = HermiteTable::new(t0, dt, values, slopes);
        let k_bar = k_table.eval(gas.density(qbar)?.ln());
        Ok(Self {
            gas: gas.clone(),
            qbar,
            k_table: Arc::new(k_table),
            k_bar,
        })
    }

    pub fn reference_speed(&self) -> f64 {
        self.qbar
    }

    fn check(&self, rho: f64) -> Result<()> {
        if !(rho >= K_TABLE_RHO_MIN && rho <= 1.0) {
            return Err(Error::domain("density", rho, format!("[{K_TABLE_RHO_MIN}, 1]")));
        }
        Ok(())
    }

    /// `J(ρ) = ∫_{q̄}^{q(ρ)} dq/(ρq)`.
    pub fn flux_integral(&self, rho: f64) -> Result<f64> {
        self.check(rho)?;
        let q = self.gas.speed_sq_of_rho(rho).max(0.0).sqrt().max(f64::MIN_POSITIVE);
        Ok((q / self.qbar).ln() + self.k_table.eval(rho.ln()) - self.k_bar)
    }

    /// `H*_μ` as a function of ρ alone.
    pub fn h_mu(&self, rho: f64) -> Result<f64> {
        Ok(self.flux_integral(rho)? - 1.0 / rho)
    }

    /// `H*_μμ = (M² − 1)/ρ²`.
    pub fn h_mumu(&self, rho: f64) -> f64 {
        (self.gas.mach_sq_of_rho(rho) - 1.0) / (rho * rho)
    }

    /// The θ-independent part G(μ(ρ)), by quadrature in ln q from the sonic speed.
    pub fn mu_part(&self, rho: f64) -> Result<f64> {
        self.check(rho)?;
        let q = self.gas.speed_from_density(rho)?;
        if q < self.gas.mu_cutoff_speed() {
            return Err(Error::domain("speed", q, "above the stagnation cutoff of mu"));
        }
        let integrand = |t: f64| -> f64 {
            let rho = self.gas.density(t.exp()).unwrap_or(0.0).max(K_TABLE_RHO_MIN);
            -rho * self.h_mu(rho).unwrap_or(0.0)
        };
        Ok(quadrature::integrate(integrand, self.gas.critical_speed().ln(), q.ln(), 1e-12))
    }
}

impl EntropyGenerator for HStar {
    fn gas(&self) -> &GasModel {
        &self.gas
    }

    fn label(&self) -> String {
        format!("star:{}", self.qbar)
    }

    fn value(&self, rho: f64, theta: f64) -> Result<f64> {
        Ok(0.5 * theta * theta + self.mu_part(rho)?)
    }

    fn partials(&self, rho: f64, theta: f64) -> Result<Partials> {
        Ok(Partials {
            h_mu: self.h_mu(rho)?,
            h_theta: theta,
            h_mumu: self.h_mumu(rho),
            h_thetatheta: 1.0,
            h_mutheta: 0.0,
        })
    }
}

/// `V* = θ²/2 + P(ρ)` with `P′(ρ) = ((c² − q²)/q²) J(ρ)`, P(ρ(q̄)) = 0.
#[derive(Debug, Clone)]
pub struct VStar {
    hstar: HStar,
}

impl VStar {
    pub fn new(hstar: HStar) -> Self {
        Self { hstar }
    }

    /// The closed-form integrand `P′(ρ)`.
    pub fn p_prime(&self, rho: f64) -> Result<f64> {
        let gas = &self.hstar.gas;
        let q2 = gas.speed_sq_of_rho(rho);
        let c2 = gas.sound_speed_sq_of_rho(rho);
        Ok((c2 - q2) / q2 * self.hstar.flux_integral(rho)?)
    }

    /// P(ρ) by quadrature in q of `dP/dq = ρ(M² − 1)J/q`.
    pub fn p(&self, rho: f64) -> Result<f64> {
        let gas = &self.hstar.gas;
        let q = gas.speed_from_density(rho)?;
        if q < gas.mu_cutoff_speed() {
            return Err(Error::domain("speed", q, "above the stagnation cutoff"));
        }
        let integrand = |s: f64| -> f64 {
            let r = gas.density(s).unwrap_or(0.0);
            let m2 = gas.mach_sq_of_rho(r);
            r * (m2 - 1.0) * self.hstar.flux_integral(r).unwrap_or(0.0) / s
        };
        Ok(quadrature::integrate(integrand, self.hstar.qbar, q, 1e-13))
    }

    pub fn value(&self, rho: f64, theta: f64) -> Result<f64> {
        Ok(0.5 * theta * theta + self.p(rho)?)
    }

    /// `V*_θ = θ`.
    pub fn theta_derivative(&self, theta: f64) -> f64 {
        theta
    }
}

/// Which separated family a mode belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    /// `F̈ + n²(M² − 1)/ρ² F = 0`, paired with `e^{±inθ}`.
    Oscillatory,
    /// `K̈ − n²(M² − 1)/ρ² K = 0`, paired with `e^{±nθ}`.
    Exponential,
}

/// Dense solution of a separated mode equation in μ.
#[derive(Debug, Clone)]
pub struct ModeSolution {
    gas: GasModel,
    n: u32,
    kind: ModeKind,
    /// State (ρ, F, Ḟ) at accepted steps, ordered by increasing μ.
    nodes: Vec<Node<3>>,
}

impl ModeSolution {
    /// Integrates the mode equation from `mu_start` (where `(F, Ḟ)` is
    /// prescribed) to `mu_end`.
    pub fn solve(gas: &GasModel, n: u32, kind: ModeKind, mu_start: f64, mu_end: f64, initial: (f64, f64)) -> Result<Self> {
        let (lo, hi) = gas.mu_range();
        for mu in [mu_start, mu_end] {
            if !(mu >= lo && mu <= hi) {
                return Err(Error::domain("mu", mu, format!("[{lo}, {hi}]")));
            }
        }
        let rho0 = gas.rho_of_mu(mu_start)?;
        let sign = match kind {
            ModeKind::Oscillatory => -1.0,
            ModeKind::Exponential => 1.0,
        };
        let n2 = (n * n) as f64;
        let rhs = |_: f64, y: &[f64; 3]| {
            let rho = y[0];
            let m2 = gas.mach_sq_of_rho(rho);
            [m2, y[2], sign * n2 * (m2 - 1.0) / (rho * rho) * y[1]]
        };
        let tol = Tolerance { rel: 1e-12, abs: 1e-14 };
        let mut nodes = ode::integrate(rhs, mu_start, [rho0, initial.0, initial.1], mu_end, tol)?;
        if mu_end < mu_start {
            nodes.reverse();
        }
        Ok(Self {
            gas: gas.clone(),
            n,
            kind,
            nodes,
        })
    }

    /// Oscillatory mode started at the sonic density with `(F, Ḟ) = (1, 0)`,
    /// covering speeds up to `q_max`.
    pub fn sonic_start(gas: &GasModel, n: u32, kind: ModeKind, q_max: f64) -> Result<Self> {
        let mu_end = gas.mu_of_speed(q_max)?;
        Self::solve(gas, n, kind, 0.0, mu_end, (1.0, 0.0))
    }

    pub fn mode(&self) -> u32 {
        self.n
    }

    pub fn kind(&self) -> ModeKind {
        self.kind
    }

    pub fn mu_range(&self) -> (f64, f64) {
        (self.nodes[0].t, self.nodes[self.nodes.len() - 1].t)
    }

    pub fn nodes(&self) -> &[Node<3>] {
        &self.nodes
    }

    fn third_derivative(&self, node: &Node<3>) -> f64 {
        let sign = match self.kind {
            ModeKind::Oscillatory => -1.0,
            ModeKind::Exponential => 1.0,
        };
        let n2 = (self.n * self.n) as f64;
        let rho = node.y[0];
        let m2 = self.gas.mach_sq_of_rho(rho);
        let coeff = (m2 - 1.0) / (rho * rho);
        let dcoeff = self.gas.dmach_sq_drho(rho) / (rho * rho) - 2.0 * (m2 - 1.0) / (rho * rho * rho);
        sign * n2 * (dcoeff * node.dy[0] * node.y[1] + coeff * node.y[2])
    }

    /// `(F, Ḟ, F̈)` at μ from the quintic Hermite dense output.
    pub fn eval(&self, mu: f64) -> Result<(f64, f64, f64)> {
        let (lo, hi) = self.mu_range();
        if !(mu >= lo - 1e-12 && mu <= hi + 1e-12) {
            return Err(Error::domain("mu", mu, format!("[{lo}, {hi}]")));
        }
        let i = self.nodes.partition_point(|nd| nd.t <= mu).clamp(1, self.nodes.len() - 1);
        let (a, b) = (&self.nodes[i - 1], &self.nodes[i]);
        let (f, fd) = ode::quintic_hermite(a.t, b.t, [a.y[1], a.dy[1], a.dy[2]], [b.y[1], b.dy[1], b.dy[2]], mu);
        let (_, fdd) = ode::quintic_hermite(
            a.t,
            b.t,
            [a.y[2], a.dy[2], self.third_derivative(a)],
            [b.y[2], b.dy[2], self.third_derivative(b)],
            mu,
        );
        Ok((f, fd, fdd))
    }

    /// `F Ġ − Ḟ G` against another solution of the same equation.
    pub fn wronskian(&self, other: &ModeSolution, mu: f64) -> Result<f64> {
        let (f, fd, _) = self.eval(mu)?;
        let (g, gd, _) = other.eval(mu)?;
        Ok(f * gd - fd * g)
    }
}

/// Angular factor of a separated generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Angular {
    Cos,
    Sin,
    /// `e^{nθ}`
    Grow,
    /// `e^{−nθ}`
    Decay,
}

/// `H = F(μ) Θ(θ)` for a solved mode and matching angular factor.
#[derive(Debug, Clone)]
pub struct SeparatedGenerator {
    mode: Arc<ModeSolution>,
    angular: Angular,
}

impl SeparatedGenerator {
    pub fn new(mode: Arc<ModeSolution>, angular: Angular) -> Result<Self> {
        let ok = match mode.kind {
            ModeKind::Oscillatory => matches!(angular, Angular::Cos | Angular::Sin),
            ModeKind::Exponential => matches!(angular, Angular::Grow | Angular::Decay),
        };
        if !ok {
            return Err(Error::Construction(format!("{angular:?} does not pair with a {:?} mode", mode.kind)));
        }
        Ok(Self { mode, angular })
    }

    /// (Θ, Θ′, Θ″).
    fn angular_factor(&self, theta: f64) -> (f64, f64, f64) {
        let n = self.mode.n as f64;
        match self.angular {
            Angular::Cos => {
                let (s, c) = (n * theta).sin_cos();
                (c, -n * s, -n * n * c)
            }
            Angular::Sin => {
                let (s, c) = (n * theta).sin_cos();
                (s, n * c, -n * n * s)
            }
            Angular::Grow => {
                let e = (n * theta).exp();
                (e, n * e, n * n * e)
            }
            Angular::Decay => {
                let e = (-n * theta).exp();
                (e, -n * e, n * n * e)
            }
        }
    }
}

impl EntropyGenerator for SeparatedGenerator {
    fn gas(&self) -> &GasModel {
        &self.mode.gas
    }

    fn label(&self) -> String {
        let family = match self.mode.kind {
            ModeKind::Oscillatory => "fourier",
            ModeKind::Exponential => "exp",
        };
        format!("{family}:{}:{:?}", self.mode.n, self.angular).to_lowercase()
    }

    fn value(&self, rho: f64, theta: f64) -> Result<f64> {
        let mu = self.mode.gas.mu_of_rho(rho)?;
        let (f, _, _) = self.mode.eval(mu)?;
        Ok(f * self.angular_factor(theta).0)
    }

    fn partials(&self, rho: f64, theta: f64) -> Result<Partials> {
        let mu = self.mode.gas.mu_of_rho(rho)?;
        let (f, fd, fdd) = self.mode.eval(mu)?;
        let (a, ad, add) = self.angular_factor(theta);
        Ok(Partials {
            h_mu: fd * a,
            h_theta: f * ad,
            h_mumu: fdd * a,
            h_thetatheta: f * add,
            h_mutheta: fd * ad,
        })
    }
}

/// Real and imaginary parts `F_n cos nθ`, `F_n sin nθ` of an oscillatory mode
/// and their entropy pairs.
pub fn fourier_pair(mode: Arc<ModeSolution>) -> Result<(EntropyPair<SeparatedGenerator>, EntropyPair<SeparatedGenerator>)> {
    Ok((
        EntropyPair::new(SeparatedGenerator::new(mode.clone(), Angular::Cos)?),
        EntropyPair::new(SeparatedGenerator::new(mode, Angular::Sin)?),
    ))
}

type PartialsFn = dyn Fn(f64, f64) -> Partials + Send + Sync;
type ValueFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// Generator given by closed-form functions of (μ, θ).
#[derive(Clone)]
pub struct FnGenerator {
    gas: GasModel,
    label: String,
    value: Arc<ValueFn>,
    partials: Arc<PartialsFn>,
}

impl FnGenerator {
    pub fn new(
        gas: &GasModel,
        label: impl Into<String>,
        value: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        partials: impl Fn(f64, f64) -> Partials + Send + Sync + 'static,
    ) -> Self {
        Self {
            gas: gas.clone(),
            label: label.into(),
            value: Arc::new(value),
            partials: Arc::new(partials),
        }
    }
}

impl EntropyGenerator for FnGenerator {
    fn gas(&self) -> &GasModel {
        &self.gas
    }

    fn label(&self) -> String {
        self.label.clone()
    }

    fn value(&self, rho: f64, theta: f64) -> Result<f64> {
        Ok((self.value)(self.gas.mu_of_rho(rho)?, theta))
    }

    fn partials(&self, rho: f64, theta: f64) -> Result<Partials> {
        Ok((self.partials)(self.gas.mu_of_rho(rho)?, theta))
    }
}

/// Textual generator description: `star[:qbar]`, `fourier:n[:cos|sin]`,
/// `exp:n[:plus|minus]`.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorSpec {
    Star { qbar: Option<f64> },
    Fourier { n: u32, angular: Angular },
    Exponential { n: u32, angular: Angular },
}

impl std::str::FromStr for GeneratorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Parse(format!("generator '{s}': {why}"));
        let mut parts = s.trim().split(':');
        let head = parts.next().unwrap_or("").trim();
        let rest: Vec<&str> = parts.map(str::trim).collect();
        let mode = |rest: &[&str]| -> Result<u32> {
            let n: u32 = rest
                .first()
                .ok_or_else(|| bad("missing mode index"))?
                .parse()
                .map_err(|_| bad("mode index is not a non-negative integer"))?;
            if n > 64 {
                return Err(bad("mode index above 64"));
            }
            Ok(n)
        };
        match head {
            "star" => {
                if rest.len() > 1 {
                    return Err(bad("too many fields"));
                }
                let qbar = match rest.first() {
                    None => None,
                    Some(v) => {
                        let q: f64 = v.parse().map_err(|_| bad("reference speed is not a number"))?;
                        if !(q > 0.0 && q.is_finite()) {
                            return Err(bad("reference speed must be positive"));
                        }
                        Some(q)
                    }
                };
                Ok(GeneratorSpec::Star { qbar })
            }
            "fourier" => {
                if rest.len() > 2 {
                    return Err(bad("too many fields"));
                }
                let n = mode(&rest)?;
                let angular = match rest.get(1).copied() {
                    None | Some("cos") => Angular::Cos,
                    Some("sin") => Angular::Sin,
                    Some(_) => return Err(bad("angular factor must be cos or sin")),
                };
                Ok(GeneratorSpec::Fourier { n, angular })
            }
            "exp" => {
                if rest.len() > 2 {
                    return Err(bad("too many fields"));
                }
                let n = mode(&rest)?;
                let angular = match rest.get(1).copied() {
                    None | Some("plus") => Angular::Grow,
                    Some("minus") => Angular::Decay,
                    Some(_) => return Err(bad("sign must be plus or minus")),
                };
                Ok(GeneratorSpec::Exponential { n, angular })
            }
            _ => Err(bad("unknown family (expected star, fourier or exp)")),
        }
    }
}

impl GeneratorSpec {
    /// Builds the generator. Separated modes are integrated from the sonic
    /// density out to `q_max`; H* uses `default_qbar` unless a reference speed is given.
    pub fn build(&self, gas: &GasModel, default_qbar: f64, q_max: f64) -> Result<Box<dyn EntropyGenerator>> {
        Ok(match *self {
            GeneratorSpec::Star { qbar } => Box::new(HStar::new(gas, qbar.unwrap_or(default_qbar))?),
            GeneratorSpec::Fourier { n, angular } => {
                let mode = ModeSolution::sonic_start(gas, n, ModeKind::Oscillatory, q_max)?;
                Box::new(SeparatedGenerator::new(Arc::new(mode), angular)?)
            }
            GeneratorSpec::Exponential { n, angular } => {
                let mode = ModeSolution::sonic_start(gas, n, ModeKind::Exponential, q_max)?;
                Box::new(SeparatedGenerator::new(Arc::new(mode), angular)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn air() -> GasModel {
        GasModel::new(1.4).unwrap()
    }

    #[test]
    fn hstar_solves_tricomi_and_is_convex() {
        let gas = air();
        let h = HStar::new(&gas, 0.95 * gas.critical_speed()).unwrap();
        for k in 1..50 {
            let q = gas.critical_speed() * (0.2 + 1.6 * k as f64 / 50.0);
            let rho = gas.density(q).unwrap();
            assert!(tricomi_residual(&h, rho, 0.3).unwrap().abs() < 1e-12);
        }
        let rho = gas.density(1.5 * gas.critical_speed()).unwrap();
        assert!(h.h_mumu(rho) > 0.0);
        assert_eq!(h.partials(rho, 0.0).unwrap().h_theta, 0.0);
    }

    #[test]
    fn hstar_mu_derivative_matches_closed_form_second_derivative() {
        let gas = air();
        let h = HStar::new(&gas, 0.8).unwrap();
        for q in [0.3, 0.7, 1.0, 1.3, 1.7] {
            let rho = gas.density(q).unwrap();
            let d = 1e-4 * rho;
            let dmu = gas.mu_of_rho(rho + d).unwrap() - gas.mu_of_rho(rho - d).unwrap();
            let fd = (h.h_mu(rho + d).unwrap() - h.h_mu(rho - d).unwrap()) / dmu;
            assert!((fd - h.h_mumu(rho)).abs() < 1e-6 * (1.0 + h.h_mumu(rho).abs()), "q={q}");
        }
    }

    #[test]
    fn flux_integral_matches_quadrature() {
        let gas = air();
        let qbar = 0.8;
        let h = HStar::new(&gas, qbar).unwrap();
        for q in [0.05, 0.4, 0.8, 1.2, 1.9] {
            let direct = quadrature::integrate(|s| 1.0 / (gas.density(s).unwrap() * s), qbar, q, 1e-14);
            let rho = gas.density(q).unwrap();
            assert!((h.flux_integral(rho).unwrap() - direct).abs() < 1e-10, "q={q}");
        }
    }

    #[test]
    fn hstar_value_derivative_in_mu() {
        let gas = air();
        let h = HStar::new(&gas, 0.8).unwrap();
        assert!(h.mu_part(gas.mu_anchor()).unwrap().abs() < 1e-14);
        let rho = gas.density(1.2).unwrap();
        let d = 1e-5 * rho;
        let dmu = gas.mu_of_rho(rho + d).unwrap() - gas.mu_of_rho(rho - d).unwrap();
        let fd = (h.value(rho + d, 0.0).unwrap() - h.value(rho - d, 0.0).unwrap()) / dmu;
        assert!((fd - h.h_mu(rho).unwrap()).abs() < 1e-7);
    }

    #[test]
    fn star_pair_on_horizontal_flow() {
        let gas = air();
        let u_inf = 0.95 * gas.critical_speed();
        let pair = entropy_pair(HStar::new(&gas, u_inf).unwrap());
        let (q1, q2) = pair.eval_at_speed(1.1, 0.0).unwrap();
        assert_eq!(q2, 0.0);
        assert!(q1.is_finite());
        let rho = gas.density(u_inf).unwrap();
        let (q1, _) = pair.eval(rho, 0.0).unwrap();
        let expected = rho * u_inf * pair.generator().h_mu(rho).unwrap();
        assert!((q1 - expected).abs() < 1e-14);
        assert!((q1 + u_inf).abs() < 1e-12);
    }

    #[test]
    fn constant_and_linear_generators() {
        let gas = air();
        let constant = FnGenerator::new(&gas, "one", |_, _| 1.0, |_, _| Partials::default());
        let pair = entropy_pair(&constant);
        assert_eq!(pair.eval(0.5, 0.7).unwrap(), (0.0, 0.0));
        let linear = FnGenerator::new(&gas, "mu", |mu, _| mu, |_, _| Partials { h_mu: 1.0, ..Partials::default() });
        let pair = entropy_pair(&linear);
        for q in [1.0, 1.2, 1.5] {
            let rho = gas.density(q).unwrap();
            assert!(pair.compatibility_residual(rho, 0.4).unwrap() < 1e-8);
        }
    }

    #[test]
    fn non_solution_has_nonzero_compatibility_residual() {
        let gas = air();
        let bad = FnGenerator::new(
            &gas,
            "mu*theta^2",
            |mu, t| mu * t * t,
            |mu, t| Partials {
                h_mu: t * t,
                h_theta: 2.0 * mu * t,
                h_mumu: 0.0,
                h_thetatheta: 2.0 * mu,
                h_mutheta: 2.0 * t,
            },
        );
        let rho = gas.density(1.5 * gas.critical_speed()).unwrap();
        assert!(tricomi_residual(&bad, rho, 0.3).unwrap().abs() > 1e-3);
        assert!(entropy_pair(&bad).compatibility_residual(rho, 0.3).unwrap() > 1e-3);
    }

    #[test]
    fn star_pair_compatibility() {
        let gas = air();
        let pair = entropy_pair(HStar::new(&gas, 0.95 * gas.critical_speed()).unwrap());
        for k in 0..20 {
            let q = gas.critical_speed() * (1.02 + 0.9 * k as f64 / 20.0);
            let rho = gas.density(q).unwrap();
            let r = pair.compatibility_residual(rho, -0.5 + 0.05 * k as f64).unwrap();
            assert!(r < 1e-6, "q={q}: {r}");
        }
    }

    #[test]
    fn pair_derivatives_match_finite_differences_for_solutions() {
        let gas = air();
        let pair = entropy_pair(HStar::new(&gas, 0.9).unwrap());
        let rho = gas.density(1.3).unwrap();
        let theta = 0.2;
        let d = pair.derivatives(rho, theta).unwrap();
        let h = 1e-6;
        let (a1, a2) = pair.eval(rho + h, theta).unwrap();
        let (b1, b2) = pair.eval(rho - h, theta).unwrap();
        assert!(((a1 - b1) / (2.0 * h) - d.q1_rho).abs() < 1e-5);
        assert!(((a2 - b2) / (2.0 * h) - d.q2_rho).abs() < 1e-5);
        let (a1, a2) = pair.eval(rho, theta + h).unwrap();
        let (b1, b2) = pair.eval(rho, theta - h).unwrap();
        assert!(((a1 - b1) / (2.0 * h) - d.q1_theta).abs() < 1e-6);
        assert!(((a2 - b2) / (2.0 * h) - d.q2_theta).abs() < 1e-6);
    }

    #[test]
    fn fourier_mode_tricomi_and_wronskian() {
        let gas = air();
        let q_max = 1.9;
        let mu_end = gas.mu_of_speed(q_max).unwrap();
        let f = Arc::new(ModeSolution::solve(&gas, 2, ModeKind::Oscillatory, 0.0, mu_end, (1.0, 0.0)).unwrap());
        let g = ModeSolution::solve(&gas, 2, ModeKind::Oscillatory, 0.0, mu_end, (0.0, 1.0)).unwrap();
        let (cos_pair, sin_pair) = fourier_pair(f.clone()).unwrap();
        for k in 0..=100 {
            let mu = mu_end * k as f64 / 100.0;
            assert!((f.wronskian(&g, mu).unwrap() - 1.0).abs() < 1e-7);
            let rho = gas.rho_of_mu(mu).unwrap();
            if rho >= gas.mu_anchor() {
                continue;
            }
            assert!(tricomi_residual(cos_pair.generator(), rho, 0.4).unwrap().abs() < 1e-6);
            assert!(tricomi_residual(sin_pair.generator(), rho, 0.4).unwrap().abs() < 1e-6);
        }
        let zero = ModeSolution::solve(&gas, 3, ModeKind::Oscillatory, 0.0, mu_end, (0.0, 0.0)).unwrap();
        assert!(zero.nodes().iter().all(|n| n.y[1] == 0.0));
    }

    #[test]
    fn exponential_mode_solves_tricomi() {
        let gas = air();
        let k = Arc::new(ModeSolution::sonic_start(&gas, 1, ModeKind::Exponential, 1.8).unwrap());
        let h = SeparatedGenerator::new(k, Angular::Decay).unwrap();
        let rho = gas.density(1.4).unwrap();
        assert!(tricomi_residual(&h, rho, 0.3).unwrap().abs() < 1e-6);
        assert!(entropy_pair(&h).compatibility_residual(rho, 0.3).unwrap() < 1e-5);
    }

    #[test]
    fn mode_interval_must_lie_in_table() {
        let gas = air();
        assert!(ModeSolution::solve(&gas, 1, ModeKind::Oscillatory, 0.0, -1e6, (1.0, 0.0)).is_err());
    }

    #[test]
    fn vstar_derivative_and_anchor() {
        let gas = air();
        let qbar = 0.95 * gas.critical_speed();
        let v = VStar::new(HStar::new(&gas, qbar).unwrap());
        let rho = gas.density(0.5).unwrap();
        let d = 1e-5 * rho;
        let fd = (v.p(rho + d).unwrap() - v.p(rho - d).unwrap()) / (2.0 * d);
        let exact = v.p_prime(rho).unwrap();
        assert!((fd - exact).abs() < 1e-6 * exact.abs(), "{fd} vs {exact}");
        let rho_bar = gas.density(qbar).unwrap();
        assert!(v.p_prime(rho_bar).unwrap().abs() < 1e-12);
        assert_eq!(v.theta_derivative(0.7), 0.7);
    }

    #[test]
    fn generator_spec_parsing() {
        assert_eq!("star".parse::<GeneratorSpec>().unwrap(), GeneratorSpec::Star { qbar: None });
        assert_eq!("star:0.8".parse::<GeneratorSpec>().unwrap(), GeneratorSpec::Star { qbar: Some(0.8) });
        assert_eq!(
            "fourier:2:sin".parse::<GeneratorSpec>().unwrap(),
            GeneratorSpec::Fourier { n: 2, angular: Angular::Sin }
        );
        assert_eq!(
            "exp:3:minus".parse::<GeneratorSpec>().unwrap(),
            GeneratorSpec::Exponential { n: 3, angular: Angular::Decay }
        );
        for bad in ["", "star:-1", "star:x", "fourier", "fourier:2:tan", "exp:1:2:3", "bogus:1", "fourier:-2"] {
            assert!(bad.parse::<GeneratorSpec>().is_err(), "{bad}");
        }
        let gas = air();
        let g = "fourier:2".parse::<GeneratorSpec>().unwrap().build(&gas, 0.8, 1.8).unwrap();
        assert_eq!(g.label(), "fourier:2:cos");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn pair_is_linear_in_generator(a in -3.0f64..3.0, b in -3.0f64..3.0, q in 1.0f64..1.9, theta in -3.0f64..3.0) {
            let gas = air();
            let p1 = |mu: f64, t: f64| Partials { h_mu: mu.sin(), h_theta: t, h_mumu: mu.cos(), h_thetatheta: 1.0, h_mutheta: 0.5 };
            let p2 = |mu: f64, t: f64| Partials { h_mu: 2.0, h_theta: t * mu, h_mumu: 0.0, h_thetatheta: mu, h_mutheta: 1.0 };
            let g1 = FnGenerator::new(&gas, "g1", |_, _| 0.0, p1);
            let g2 = FnGenerator::new(&gas, "g2", |_, _| 0.0, p2);
            let combo = FnGenerator::new(&gas, "combo", |_, _| 0.0, move |mu, t| p1(mu, t).scaled(a).plus(p2(mu, t).scaled(b)));
            let rho = gas.density(q).unwrap();
            let (x1, y1) = entropy_pair(&g1).eval(rho, theta).unwrap();
            let (x2, y2) = entropy_pair(&g2).eval(rho, theta).unwrap();
            let (x, y) = entropy_pair(&combo).eval(rho, theta).unwrap();
            prop_assert!((x - (a * x1 + b * x2)).abs() < 1e-12 * (1.0 + x.abs()));
            prop_assert!((y - (a * y1 + b * y2)).abs() < 1e-12 * (1.0 + y.abs()));
        }
    }
}
