//! Riemann invariants of the supersonic hodograph system and the invariant
//! "apple" regions they bound in the (q, θ) plane.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::gas::GasModel;

/// A point of the hodograph plane. θ is kept unwrapped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseState {
    pub q: f64,
    pub theta: f64,
}

impl PhaseState {
    pub fn new(q: f64, theta: f64) -> Self {
        Self { q, theta }
    }

    pub fn from_velocity(u: f64, v: f64) -> Self {
        Self {
            q: u.hypot(v),
            theta: v.atan2(u),
        }
    }

    pub fn u(&self) -> f64 {
        self.q * self.theta.cos()
    }

    pub fn v(&self) -> f64 {
        self.q * self.theta.sin()
    }
}

/// Angular distance in [0, π].
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    if d > PI {
        2.0 * PI - d
    } else {
        d
    }
}

fn check_supersonic(gas: &GasModel, q: f64) -> Result<()> {
    let q_cr = gas.critical_speed();
    if !(q >= q_cr) || q > gas.cavitation_speed() {
        return Err(Error::domain("speed", q, format!("[{q_cr}, {}]", gas.cavitation_speed())));
    }
    Ok(())
}

fn w_raw(gamma: f64, q_cr: f64, q: f64) -> f64 {
    if gamma == 1.0 {
        return (q * q - 1.0).max(0.0).sqrt() - (1.0 / q).min(1.0).acos();
    }
    let k = ((gamma + 1.0) / (gamma - 1.0)).sqrt();
    let r = q / q_cr;
    let a = (0.5 * (gamma - 1.0) * (r * r - 1.0)).clamp(0.0, 1.0);
    let b = (0.5 * (gamma + 1.0) * (1.0 - 1.0 / (r * r))).clamp(0.0, 1.0);
    k * a.sqrt().asin() - b.sqrt().asin()
}

/// The monotone profile W(q) with W(q_cr) = 0 and `W′(q) = √(q²−c²)/(qc)`.
pub fn w_profile(gas: &GasModel, q: f64) -> Result<f64> {
    check_supersonic(gas, q)?;
    Ok(w_raw(gas.gamma(), gas.critical_speed(), q))
}

/// W at cavitation; infinite for the isothermal gas.
pub fn w_at_cavitation(gas: &GasModel) -> f64 {
    if gas.is_isothermal() {
        f64::INFINITY
    } else {
        let g = gas.gamma();
        (((g + 1.0) / (g - 1.0)).sqrt() - 1.0) * PI / 2.0
    }
}

/// Inverse of [`w_profile`] by bisection.
pub fn w_inverse(gas: &GasModel, w: f64) -> Result<f64> {
    let (gamma, q_cr) = (gas.gamma(), gas.critical_speed());
    let w_max = w_at_cavitation(gas);
    if !(w >= 0.0 && w <= w_max) {
        return Err(Error::domain("W", w, format!("[0, {w_max}]")));
    }
    let mut lo = q_cr;
    let mut hi = if gas.is_isothermal() {
        let mut hi = 2.0;
        while w_raw(gamma, q_cr, hi) < w {
            hi *= 2.0;
        }
        hi
    } else {
        gas.cavitation_speed()
    };
    while hi - lo > 1e-15 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if w_raw(gamma, q_cr, mid) < w {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `(W₊, W₋) = θ ∓ (W(q) − W(q_anchor))`.
pub fn riemann_invariants(gas: &GasModel, state: PhaseState, q_anchor: f64) -> Result<(f64, f64)> {
    let gap = w_profile(gas, state.q)? - w_profile(gas, q_anchor)?;
    Ok((state.theta - gap, state.theta + gap))
}

/// `|dθ/dq| = √(q²−c²)/(qc)` along level curves of W±.
pub fn level_curve_slope(gas: &GasModel, q: f64) -> Result<f64> {
    if !(q > gas.critical_speed()) {
        return Err(Error::domain("speed", q, format!("({}, q_cav)", gas.critical_speed())));
    }
    let c2 = gas.sound_speed_sq(q)?;
    Ok((q * q - c2).sqrt() / (q * c2.sqrt()))
}

/// `a(γ) = W(q_cav) − W(√2 q_cr)`.
pub fn a_of_gamma(gamma: f64) -> Result<f64> {
    if !(gamma > 1.0 && gamma < 3.0) {
        return Err(Error::domain("gamma", gamma, "(1, 3)"));
    }
    let k = ((gamma + 1.0) / (gamma - 1.0)).sqrt();
    let tail = k * (0.5 * (gamma - 1.0)).sqrt().asin() - (0.25 * (gamma + 1.0)).sqrt().asin();
    Ok((k - 1.0) * PI / 2.0 - tail)
}

/// Root of `a(γ) = π`, approximately 1.224.
pub fn find_gamma_star() -> f64 {
    let (mut lo, mut hi) = (1.0 + 1e-12, 3.0 - 1e-12);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if a_of_gamma(mid).expect("mid lies in (1, 3)") > PI {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `c((γ−3)q² + 4c²) / (2ρ²q²√(q²−c²))`: the coefficient whose sign decides
/// convexity of the apple boundary in the ρ variable. Negative exactly for
/// `q > √2 q_cr`.
pub fn convexity_coefficient(gas: &GasModel, q: f64) -> Result<f64> {
    if !(q > gas.critical_speed()) {
        return Err(Error::domain("speed", q, format!("({}, q_cav)", gas.critical_speed())));
    }
    let c2 = gas.sound_speed_sq(q)?;
    let rho = gas.density(q)?;
    let g = gas.gamma();
    Ok(c2.sqrt() * ((g - 3.0) * q * q + 4.0 * c2) / (2.0 * rho * rho * q * q * (q * q - c2).sqrt()))
}

/// Containment verdict with a signed margin (non-negative inside).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Containment {
    pub inside: bool,
    pub margin: f64,
}

/// Intersection of `m` rotated copies of the apple anchored at `(q0, θ0)`.
#[derive(Debug, Clone)]
pub struct InvariantRegion {
    gas: GasModel,
    q0: f64,
    theta0: f64,
    m: usize,
    w0: f64,
    a_eff: f64,
    max_speed: f64,
}

impl InvariantRegion {
    pub fn new(gas: &GasModel, q0: f64, theta0: f64) -> Result<Self> {
        let q_j = 2f64.sqrt() * gas.critical_speed();
        if !(q0 >= q_j * (1.0 - 1e-14) && q0 < gas.cavitation_speed()) {
            return Err(Error::domain("q0", q0, format!("[{q_j}, {})", gas.cavitation_speed())));
        }
        let w0 = w_profile(gas, q0.max(q_j))?;
        let a_eff = w_at_cavitation(gas) - w0;
        if !(a_eff > 0.0) {
            return Err(Error::Construction(format!("apple at q0 = {q0} has no room below cavitation")));
        }
        let m = if a_eff > PI {
            1
        } else {
            let mut m = 2usize;
            while PI / m as f64 >= a_eff {
                m *= 2;
            }
            m
        };
        let max_speed = w_inverse(gas, w0 + PI / m as f64)?;
        Ok(Self {
            gas: gas.clone(),
            q0,
            theta0,
            m,
            w0,
            a_eff,
            max_speed,
        })
    }

    /// Region anchored at the junction speed `√2 q_cr`.
    pub fn canonical(gas: &GasModel, theta0: f64) -> Result<Self> {
        Self::new(gas, 2f64.sqrt() * gas.critical_speed(), theta0)
    }

    pub fn q0(&self) -> f64 {
        self.q0
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn copies(&self) -> usize {
        self.m
    }

    /// `W(q_cav) − W(q0)`.
    pub fn effective_a(&self) -> f64 {
        self.a_eff
    }

    /// Global speed cap `q* = W⁻¹(W(q0) + π/m)`.
    pub fn max_speed(&self) -> f64 {
        self.max_speed
    }

    fn nearest_anchor_distance(&self, theta: f64) -> f64 {
        (0..self.m)
            .map(|j| angular_distance(theta, self.theta0 + 2.0 * PI * j as f64 / self.m as f64))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest admissible speed in direction θ.
    pub fn speed_cap(&self, theta: f64) -> f64 {
        let gap = self.nearest_anchor_distance(theta);
        w_inverse(&self.gas, self.w0 + gap).unwrap_or(self.max_speed)
    }

    pub fn contains(&self, state: PhaseState) -> Containment {
        let gap = self.nearest_anchor_distance(state.theta);
        let q_cav = self.gas.cavitation_speed();
        let rise = if state.q > q_cav {
            self.a_eff + (state.q - q_cav)
        } else {
            let q = state.q.max(self.gas.critical_speed());
            w_raw(self.gas.gamma(), self.gas.critical_speed(), q) - self.w0
        };
        let margin = gap - rise;
        Containment {
            inside: state.q <= self.q0 || margin >= 0.0,
            margin,
        }
    }

    /// Closed boundary curve sampled at `n` angles.
    pub fn boundary(&self, n: usize) -> Vec<PhaseState> {
        let n = n.max(4);
        (0..=n)
            .map(|i| {
                let theta = self.theta0 - PI + 2.0 * PI * i as f64 / n as f64;
                PhaseState::new(self.speed_cap(theta), theta)
            })
            .collect()
    }
}
