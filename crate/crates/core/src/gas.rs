//! Pointwise thermodynamics of the polytropic (γ > 1) and isothermal (γ = 1)
//! gas in the normalization where the stagnation density and, for γ = 1, the
//! sound speed equal one.
//!
//! Besides Bernoulli's law the model carries the two integrated variables the
//! rest of the crate works in: the viscosity potential `σ(ρ) = ∫₁^ρ σ₂` and the
//! hodograph coordinate `μ(ρ)` with `μ′(ρ) = c²/q²`. Both are tabulated once
//! per model on a Hermite table whose node slopes are the exact integrands.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::table::HermiteTable;

const TABLE_NODES: usize = 8192;
/// Smallest tabulated density; lighter states fall back to direct quadrature.
const TABLE_RHO_MIN: f64 = 1e-8;
const NODE_QUAD_TOL: f64 = 1e-15;

/// Smooth positive continuation of σ₂ below the junction speed `q² = 2 q_cr²`.
///
/// A cubic Hermite polynomial in `q²` on `[0, 2 q_cr²]` that starts at
/// `floor_value` with zero slope and meets the canonical σ₂ with matching
/// value and slope at the junction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sigma2Continuation {
    pub junction_speed_sq: f64,
    pub junction_value: f64,
    pub junction_slope: f64,
    pub floor_value: f64,
}

impl Sigma2Continuation {
    fn eval(&self, speed_sq: f64) -> f64 {
        let s = speed_sq / self.junction_speed_sq;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        self.floor_value * h00 + self.junction_value * h01 + self.junction_slope * self.junction_speed_sq * h11
    }

    fn min_on_interval(&self) -> f64 {
        (0..=256)
            .map(|k| self.eval(self.junction_speed_sq * k as f64 / 256.0))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Construction options for [`GasModel`].
#[derive(Debug, Clone, Copy)]
pub struct GasOptions {
    /// σ₂ at stagnation; `None` selects `(γ+1)/8`.
    pub sigma2_floor: Option<f64>,
    /// Stagnation-side cutoff of μ as a fraction of `q_cr`.
    pub mu_cutoff_ratio: f64,
}

impl Default for GasOptions {
    fn default() -> Self {
        Self {
            sigma2_floor: None,
            mu_cutoff_ratio: 1e-3,
        }
    }
}

#[derive(Debug)]
struct GasData {
    gamma: f64,
    q_cr: f64,
    q_cav: f64,
    continuation: Sigma2Continuation,
    mu_cutoff_speed: f64,
    mu_anchor: f64,
    /// σ against ln ρ, built on first use.
    sigma: OnceLock<HermiteTable>,
    /// μ against ln q, built on first use.
    mu: OnceLock<HermiteTable>,
}

/// Gas model for an adiabatic exponent γ ∈ [1, 3). Cheap to clone.
#[derive(Debug, Clone)]
pub struct GasModel {
    data: Arc<GasData>,
}

/// Thermodynamic state recovered from the viscosity potential σ.
#[derive(Debug, Clone, Copy)]
pub struct SigmaState {
    pub rho: f64,
    pub speed: f64,
    pub sound_speed_sq: f64,
    pub sigma2: f64,
}

impl SigmaState {
    pub fn mach(&self) -> f64 {
        self.speed / self.sound_speed_sq.sqrt()
    }

    /// `dq/dσ = −c²/(ρ q σ₂)`.
    pub fn dspeed_dsigma(&self) -> f64 {
        -self.sound_speed_sq / (self.rho * self.speed * self.sigma2)
    }

    /// `d(ρq)/dσ = (q² − c²)/(q σ₂)`.
    pub fn dmass_flux_dsigma(&self) -> f64 {
        (self.speed * self.speed - self.sound_speed_sq) / (self.speed * self.sigma2)
    }
}

/// Builds a uniform grid that contains both `t_hi` and `anchor` as nodes and
/// reaches down to at least `t_lo`. Returns (t0, dt, count).
fn anchored_grid(t_lo: f64, t_hi: f64, anchor: f64, target: usize) -> (f64, f64, usize) {
    let upper = t_hi - anchor;
    let full = t_hi - t_lo;
    if upper <= 0.0 {
        let dt = full / (target - 1) as f64;
        return (t_lo, dt, target);
    }
    let k = ((target - 1) as f64 * upper / full).round().max(1.0);
    let dt = upper / k;
    let count = (full / dt).ceil() as usize + 1;
    (t_hi - dt * (count - 1) as f64, dt, count)
}

impl GasModel {
    pub fn new(gamma: f64) -> Result<Self> {
        Self::with_options(gamma, GasOptions::default())
    }

    pub fn with_options(gamma: f64, options: GasOptions) -> Result<Self> {
        if !(1.0..3.0).contains(&gamma) {
            return Err(Error::domain("gamma", gamma, "[1, 3)"));
        }
        let q_cr = (2.0 / (gamma + 1.0)).sqrt();
        let q_cav = if gamma == 1.0 {
            f64::INFINITY
        } else {
            (2.0 / (gamma - 1.0)).sqrt()
        };
        let junction_speed_sq = 2.0 * q_cr * q_cr;
        let continuation = Sigma2Continuation {
            junction_speed_sq,
            junction_value: (gamma + 1.0) / 4.0,
            junction_slope: 1.0 / (junction_speed_sq * junction_speed_sq),
            floor_value: options.sigma2_floor.unwrap_or((gamma + 1.0) / 8.0),
        };
        if !(continuation.floor_value > 0.0) || continuation.min_on_interval() <= 0.0 {
            return Err(Error::Construction(format!(
                "sigma2 continuation with floor {} is not positive",
                continuation.floor_value
            )));
        }
        if !(options.mu_cutoff_ratio > 0.0 && options.mu_cutoff_ratio < 1.0) {
            return Err(Error::domain("mu_cutoff_ratio", options.mu_cutoff_ratio, "(0, 1)"));
        }
        let data = GasData {
            gamma,
            q_cr,
            q_cav,
            continuation,
            mu_cutoff_speed: options.mu_cutoff_ratio * q_cr,
            mu_anchor: density_raw(gamma, q_cr),
            sigma: OnceLock::new(),
            mu: OnceLock::new(),
        };
        Ok(GasModel { data: Arc::new(data) })
    }

    fn sigma_table(&self) -> &HermiteTable {
        self.data.sigma.get_or_init(|| self.build_sigma_table())
    }

    fn mu_table(&self) -> &HermiteTable {
        self.data.mu.get_or_init(|| self.build_mu_table())
    }

    fn build_sigma_table(&self) -> HermiteTable {
        let junction_rho = density_raw(self.gamma(), self.critical_speed() * 2f64.sqrt());
        let (t0, dt, n) = anchored_grid(TABLE_RHO_MIN.ln(), 0.0, junction_rho.ln(), TABLE_NODES);
        let ts: Vec<f64> = (0..n).map(|i| if i == n - 1 { 0.0 } else { t0 + dt * i as f64 }).collect();
        let integrand = |t: f64| {
            let rho = t.exp();
            rho * self.sigma2_of_rho_raw(rho)
        };
        let mut values = vec![0.0; n];
        for i in (0..n - 1).rev() {
            values[i] = values[i + 1] - quadrature::integrate(integrand, ts[i], ts[i + 1], NODE_QUAD_TOL);
        }
        let slopes = ts.iter().map(|&t| integrand(t)).collect();
        HermiteTable::new(t0, dt, values, slopes)
    }

    fn build_mu_table(&self) -> HermiteTable {
        let gamma = self.gamma();
        let t_lo = self.data.mu_cutoff_speed.ln();
        let t_hi = self.speed_from_density_raw(TABLE_RHO_MIN).ln();
        let t_anchor = self.critical_speed().ln();
        // anchored_grid keeps the top node; here the anchor is interior, so
        // grid from the top and shift the origin onto the anchor.
        let full = t_hi - t_lo;
        let dt = full / (TABLE_NODES - 1) as f64;
        let below = ((t_anchor - t_lo) / dt).ceil();
        let t0 = t_anchor - below * dt;
        let n = ((t_hi - t0) / dt).ceil() as usize + 1;
        let ts: Vec<f64> = (0..n).map(|i| t0 + dt * i as f64).collect();
        let integrand = |t: f64| -density_raw(gamma, t.exp());
        let anchor_index = below as usize;
        let mut values = vec![0.0; n];
        for i in anchor_index + 1..n {
            values[i] = values[i - 1] + quadrature::integrate(integrand, ts[i - 1], ts[i], NODE_QUAD_TOL);
        }
        for i in (0..anchor_index).rev() {
            values[i] = values[i + 1] - quadrature::integrate(integrand, ts[i], ts[i + 1], NODE_QUAD_TOL);
        }
        let slopes = ts.iter().map(|&t| integrand(t)).collect();
        HermiteTable::new(t0, dt, values, slopes)
    }

    pub fn gamma(&self) -> f64 {
        self.data.gamma
    }

    pub fn is_isothermal(&self) -> bool {
        self.data.gamma == 1.0
    }

    /// `q_cr = √(2/(γ+1))`.
    pub fn critical_speed(&self) -> f64 {
        self.data.q_cr
    }

    /// `q_cav = √(2/(γ−1))`, infinite for γ = 1.
    pub fn cavitation_speed(&self) -> f64 {
        self.data.q_cav
    }

    pub fn sigma2_continuation(&self) -> Sigma2Continuation {
        self.data.continuation
    }

    /// Density at which μ vanishes (the sonic density).
    pub fn mu_anchor(&self) -> f64 {
        self.data.mu_anchor
    }

    /// Smallest speed at which μ is evaluated.
    pub fn mu_cutoff_speed(&self) -> f64 {
        self.data.mu_cutoff_speed
    }

    fn check_speed(&self, q: f64) -> Result<()> {
        if !(q >= 0.0) || q > self.data.q_cav * (1.0 + 1e-14) {
            return Err(Error::domain("speed", q, format!("[0, {}]", self.data.q_cav)));
        }
        Ok(())
    }

    /// Bernoulli's law ρ(q).
    pub fn density(&self, q: f64) -> Result<f64> {
        self.check_speed(q)?;
        Ok(density_raw(self.gamma(), q))
    }

    pub fn sound_speed(&self, q: f64) -> Result<f64> {
        Ok(self.sound_speed_sq(q)?.sqrt())
    }

    pub fn sound_speed_sq(&self, q: f64) -> Result<f64> {
        self.check_speed(q)?;
        Ok(sound_speed_sq_raw(self.gamma(), q))
    }

    pub fn mach(&self, q: f64) -> Result<f64> {
        Ok(q / self.sound_speed(q)?)
    }

    /// Inverse of Bernoulli's law.
    pub fn speed_from_density(&self, rho: f64) -> Result<f64> {
        check_density(rho)?;
        Ok(self.speed_from_density_raw(rho))
    }

    fn speed_from_density_raw(&self, rho: f64) -> f64 {
        self.speed_sq_of_rho(rho).max(0.0).sqrt()
    }

    /// `q²` as a function of ρ, accurate near stagnation.
    pub fn speed_sq_of_rho(&self, rho: f64) -> f64 {
        let g = self.gamma();
        if g == 1.0 {
            -2.0 * rho.ln()
        } else {
            -2.0 * ((g - 1.0) * rho.ln()).exp_m1() / (g - 1.0)
        }
    }

    /// `c² = ρ^{γ−1}`.
    pub fn sound_speed_sq_of_rho(&self, rho: f64) -> f64 {
        let g = self.gamma();
        if g == 1.0 {
            1.0
        } else {
            rho.powf(g - 1.0)
        }
    }

    /// `M² = q²/c²` as a function of ρ.
    pub fn mach_sq_of_rho(&self, rho: f64) -> f64 {
        self.speed_sq_of_rho(rho) / self.sound_speed_sq_of_rho(rho)
    }

    /// `d(M²)/dρ = −2 ρ^{−γ}`.
    pub fn dmach_sq_drho(&self, rho: f64) -> f64 {
        -2.0 * rho.powf(-self.gamma())
    }

    /// σ₂ as a function of `q²`: canonical above the junction, continued below.
    pub fn sigma2_of_speed_sq(&self, speed_sq: f64) -> f64 {
        let cont = &self.data.continuation;
        if speed_sq >= cont.junction_speed_sq {
            (self.gamma() + 1.0) / 2.0 - 1.0 / speed_sq
        } else {
            cont.eval(speed_sq)
        }
    }

    /// Viscosity coefficient σ₂(q).
    pub fn sigma2(&self, q: f64) -> Result<f64> {
        self.check_speed(q)?;
        Ok(self.sigma2_of_speed_sq(q * q))
    }

    fn sigma2_of_rho_raw(&self, rho: f64) -> f64 {
        self.sigma2_of_speed_sq(self.speed_sq_of_rho(rho))
    }

    pub fn sigma2_of_rho(&self, rho: f64) -> Result<f64> {
        check_density(rho)?;
        Ok(self.sigma2_of_rho_raw(rho))
    }

    /// `σ(ρ) = ∫₁^ρ σ₂(ξ) dξ`.
    pub fn sigma_of_rho(&self, rho: f64) -> Result<f64> {
        check_density(rho)?;
        if rho == 1.0 {
            return Ok(0.0);
        }
        let t = rho.ln();
        let table = self.sigma_table();
        if t >= table.t_min() {
            return Ok(table.eval(t.min(0.0)));
        }
        let base = table.eval(table.t_min());
        let rest = quadrature::integrate(|x| self.sigma2_of_rho_raw(x), rho, TABLE_RHO_MIN, 1e-14);
        Ok(base - rest)
    }

    /// Range `[σ(0⁺), 0]` of the viscosity potential.
    pub fn sigma_range(&self) -> (f64, f64) {
        let table = self.sigma_table();
        let base = table.eval(table.t_min());
        let rest = quadrature::integrate(|x| self.sigma2_of_rho_raw(x), 0.0, TABLE_RHO_MIN, 1e-15);
        (base - rest, 0.0)
    }

    /// Inverse of [`GasModel::sigma_of_rho`].
    pub fn rho_of_sigma(&self, sigma: f64) -> Result<f64> {
        let table = self.sigma_table();
        if let Some(t) = table.invert(sigma) {
            return Ok(t.exp());
        }
        let (lo, hi) = self.sigma_range();
        if !(sigma >= lo && sigma <= hi) {
            return Err(Error::domain("sigma", sigma, format!("[{lo}, {hi}]")));
        }
        let (mut a, mut b) = (0.0, TABLE_RHO_MIN);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.sigma_of_rho(m)? < sigma {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }

    /// Full thermodynamic state at viscosity potential σ.
    pub fn state_of_sigma(&self, sigma: f64) -> Result<SigmaState> {
        let rho = self.rho_of_sigma(sigma)?;
        let speed_sq = self.speed_sq_of_rho(rho).max(0.0);
        Ok(SigmaState {
            rho,
            speed: speed_sq.sqrt(),
            sound_speed_sq: self.sound_speed_sq_of_rho(rho),
            sigma2: self.sigma2_of_speed_sq(speed_sq),
        })
    }

    /// `μ′(ρ) = c²/q²`.
    pub fn dmu_drho(&self, rho: f64) -> f64 {
        1.0 / self.mach_sq_of_rho(rho)
    }

    /// Hodograph variable μ(ρ), zero at the sonic density.
    pub fn mu_of_rho(&self, rho: f64) -> Result<f64> {
        check_density(rho)?;
        if rho == self.data.mu_anchor {
            return Ok(0.0);
        }
        self.mu_of_speed(self.speed_from_density_raw(rho))
    }

    /// μ as a function of speed; `dμ/dq = −ρ/q`.
    pub fn mu_of_speed(&self, q: f64) -> Result<f64> {
        self.check_speed(q)?;
        if q < self.data.mu_cutoff_speed {
            return Err(Error::domain(
                "speed",
                q,
                format!("[{}, q_cav) (stagnation cutoff of mu)", self.data.mu_cutoff_speed),
            ));
        }
        let t = q.ln();
        let table = self.mu_table();
        if t <= table.t_max() {
            return Ok(table.eval(t));
        }
        let gamma = self.gamma();
        let base = table.eval(table.t_max());
        Ok(base - quadrature::integrate(|x| density_raw(gamma, x) / x, table.t_max().exp(), q, 1e-14))
    }

    /// Range of μ over the tabulated speeds (decreasing in q).
    pub fn mu_range(&self) -> (f64, f64) {
        self.mu_table().value_range()
    }

    /// Speed at which μ takes the given value.
    pub fn speed_of_mu(&self, mu: f64) -> Result<f64> {
        self.mu_table()
            .invert(mu)
            .map(f64::exp)
            .ok_or_else(|| {
                let (lo, hi) = self.mu_range();
                Error::domain("mu", mu, format!("[{lo}, {hi}]"))
            })
    }

    pub fn rho_of_mu(&self, mu: f64) -> Result<f64> {
        Ok(density_raw(self.gamma(), self.speed_of_mu(mu)?))
    }
}

fn check_density(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::domain("density", rho, "(0, 1]"));
    }
    Ok(())
}

fn sound_speed_sq_raw(gamma: f64, q: f64) -> f64 {
    if gamma == 1.0 {
        1.0
    } else {
        (1.0 - 0.5 * (gamma - 1.0) * q * q).max(0.0)
    }
}

fn density_raw(gamma: f64, q: f64) -> f64 {
    if gamma == 1.0 {
        (-0.5 * q * q).exp()
    } else {
        sound_speed_sq_raw(gamma, q).powf(1.0 / (gamma - 1.0))
    }
}
