//! A posteriori checks on converged fields: invariant-region containment,
//! the entropy inequality for the H* pair, the dissipation balance, speed
//! floors away from the wall, the sonic line and the divergence-form residual.
//!
//! Everything here is a pure function of the field.

use serde::Serialize;

use crate::entropy::{EntropyPair, HStar};
use crate::error::Result;
use crate::gas::SigmaState;
use crate::mesh::{Grid, NodeKind};
use crate::phaseplane::{InvariantRegion, PhaseState};
use crate::solver::{BcSign, FlowField};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainmentReport {
    pub q0: f64,
    pub theta0: f64,
    pub copies: usize,
    /// Speed cap q* of the region.
    pub q_star: f64,
    pub fluid_nodes: usize,
    pub inside_nodes: usize,
    pub fraction_inside: f64,
    pub min_margin: f64,
    pub max_speed: f64,
    pub max_mach: f64,
    /// `q_cav − max q`.
    pub cavitation_gap: f64,
    pub below_speed_cap: bool,
}

impl ContainmentReport {
    pub fn all_inside(&self) -> bool {
        self.inside_nodes == self.fluid_nodes
    }
}

/// Region anchored at `max(√2 q_cr, q∞)` in the far-field direction.
pub fn default_region(field: &FlowField) -> Result<InvariantRegion> {
    let gas = field.gas();
    let q0 = (2f64.sqrt() * gas.critical_speed()).max(field.q_inf);
    InvariantRegion::new(gas, q0, field.theta_inf)
}

pub fn containment_report(field: &FlowField, region: &InvariantRegion) -> ContainmentReport {
    let grid = field.grid();
    let gas = field.gas();
    let mut report = ContainmentReport {
        q0: region.q0(),
        theta0: region.theta0(),
        copies: region.copies(),
        q_star: region.max_speed(),
        fluid_nodes: 0,
        inside_nodes: 0,
        fraction_inside: 0.0,
        min_margin: f64::INFINITY,
        max_speed: 0.0,
        max_mach: 0.0,
        cavitation_gap: 0.0,
        below_speed_cap: true,
    };
    for n in 0..grid.len() {
        if !grid.kind(n).is_fluid() {
            continue;
        }
        report.fluid_nodes += 1;
        let Ok(st) = field.state(n) else {
            report.min_margin = f64::NEG_INFINITY;
            continue;
        };
        let verdict = region.contains(PhaseState::new(st.speed, field.theta(n)));
        report.inside_nodes += usize::from(verdict.inside);
        report.min_margin = report.min_margin.min(verdict.margin);
        report.max_speed = report.max_speed.max(st.speed);
        report.max_mach = report.max_mach.max(st.mach());
    }
    report.fraction_inside = report.inside_nodes as f64 / report.fluid_nodes.max(1) as f64;
    report.cavitation_gap = gas.cavitation_speed() - report.max_speed;
    report.below_speed_cap = report.max_speed <= report.q_star && report.inside_nodes == report.fluid_nodes;
    report
}

/// Worst pairing of the entropy production against the dyadic test family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyCheck {
    /// `max(0, max_φ −⟨∂ₓQ₁* + ∂ᵧQ₂*, φ⟩ / ‖φ‖₁)`: zero when the
    /// production is non-negative against every test function.
    pub positive_part: f64,
    /// Largest normalized production `⟨div Q*, φ⟩ / ‖φ‖₁`, for reference.
    pub max_production: f64,
    pub test_functions: usize,
    /// Support `[x0, x1, y0, y1]` of the worst test function.
    pub worst_support: Option<[f64; 4]>,
}

/// Dyadic levels of tensor hats used by [`entropy_inequality_check`].
pub const TEST_LEVELS: u32 = 3;

/// Reference speed of H*: the horizontal far-field velocity when it is
/// positive, otherwise the far-field speed.
pub fn reference_speed(field: &FlowField) -> f64 {
    let u = field.q_inf * field.theta_inf.cos();
    if u > 0.0 {
        u
    } else {
        field.q_inf
    }
}

/// (Q₁*, Q₂*) at every node (NaN where the state is invalid or solid).
pub fn hstar_fluxes(field: &FlowField, hstar: &HStar) -> (Vec<f64>, Vec<f64>) {
    let grid = field.grid();
    let pair = EntropyPair::new(hstar);
    let mut q1 = vec![f64::NAN; grid.len()];
    let mut q2 = vec![f64::NAN; grid.len()];
    for n in 0..grid.len() {
        if !grid.kind(n).is_fluid() {
            continue;
        }
        if let Ok(st) = field.state(n) {
            if let Ok((a, b)) = pair.eval(st.rho, field.theta(n)) {
                q1[n] = a;
                q2[n] = b;
            }
        }
    }
    (q1, q2)
}

/// Tests the entropy inequality in the admissible direction: production of
/// the H* pair must be non-negative as a distribution. Test functions are
/// tensor hats on dyadic boxes (side `min(W, H)/2^ℓ`, ℓ = 1..=3, stride half
/// a side) whose positive part stays on interior nodes.
pub fn entropy_inequality_check(field: &FlowField) -> Result<EntropyCheck> {
    let hstar = HStar::new(field.gas(), reference_speed(field))?;
    let (q1, q2) = hstar_fluxes(field, &hstar);
    Ok(entropy_check_with_fluxes(field.grid(), &q1, &q2))
}

/// [`entropy_inequality_check`] on given nodal fluxes.
pub fn entropy_check_with_fluxes(grid: &Grid, q1: &[f64], q2: &[f64]) -> EntropyCheck {
    let h = grid.spacing();
    let (nx, ny) = grid.dims();
    // centred divergence on interior nodes
    let mut div = vec![f64::NAN; grid.len()];
    for n in 0..grid.len() {
        if grid.kind(n) != NodeKind::Interior {
            continue;
        }
        let nb = |d: usize| grid.neighbor(n, d);
        if let (Some(e), Some(w), Some(no), Some(s)) = (nb(0), nb(1), nb(2), nb(3)) {
            div[n] = (q1[e] - q1[w] + q2[no] - q2[s]) / (2.0 * h);
        }
    }
    let mut check = EntropyCheck {
        positive_part: 0.0,
        max_production: f64::NEG_INFINITY,
        test_functions: 0,
        worst_support: None,
    };
    let mut worst = f64::NEG_INFINITY;
    let nmin = (nx.min(ny) - 1) as f64;
    for level in 1..=TEST_LEVELS {
        // box side in cells
        let side = (nmin / f64::from(1u32 << level)).floor() as usize;
        if side < 2 {
            continue;
        }
        let stride = (side / 2).max(1);
        let mut i0 = 0;
        while i0 + side < nx {
            let mut j0 = 0;
            while j0 + side < ny {
                if let Some(p) = pair_with_hat(grid, &div, i0, j0, side) {
                    check.test_functions += 1;
                    check.max_production = check.max_production.max(p);
                    if -p > worst {
                        worst = -p;
                        check.worst_support = Some([
                            i0 as f64 * h,
                            (i0 + side) as f64 * h,
                            j0 as f64 * h,
                            (j0 + side) as f64 * h,
                        ]);
                    }
                }
                j0 += stride;
            }
            i0 += stride;
        }
    }
    check.positive_part = worst.max(0.0);
    if check.test_functions == 0 {
        check.max_production = 0.0;
    }
    check
}

/// `⟨div, φ⟩/‖φ‖₁` for the hat on cells `[i0, i0+side] × [j0, j0+side]`, or
/// `None` if its support touches a non-interior node.
fn pair_with_hat(grid: &Grid, div: &[f64], i0: usize, j0: usize, side: usize) -> Option<f64> {
    let half = side as f64 / 2.0;
    let hat = |k: usize, k0: usize| 1.0 - ((k as f64 - k0 as f64) - half).abs() / half;
    let mut num = 0.0;
    let mut mass = 0.0;
    for j in j0 + 1..j0 + side {
        for i in i0 + 1..i0 + side {
            let n = grid.index(i, j);
            let phi = hat(i, i0) * hat(j, j0);
            if phi <= 0.0 {
                continue;
            }
            let d = div[n];
            if !d.is_finite() {
                return None;
            }
            num += phi * d;
            mass += phi;
        }
    }
    (mass > 0.0).then(|| num / mass)
}

/// Terms of the global dissipation balance `∮ Q*·n_out ds = I₁ + I₂`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dissipation {
    /// `ε∫(|∇θ|² + c²/(σ₂(ρq)²)|∇σ|²)`.
    pub i2: f64,
    /// `ε∮(−θ∇θ + J∇σ)·n_out ds`, wall and far-field parts summed.
    pub i1: f64,
    pub i1_wall: f64,
    pub i1_far_field: f64,
    /// `∮ Q*·n_out ds` over the wall and far field.
    pub flux_wall: f64,
    pub flux_far_field: f64,
    /// `|flux − I₁ − I₂|`.
    pub closure_error: f64,
    /// Nodes left out of I₂ by the speed floor.
    pub excluded_nodes: usize,
}

/// Speed floor below which nodes are left out of I₂, relative to q_cr.
pub const SPEED_FLOOR_RATIO: f64 = 1e-6;

/// Gradient by centred differences, closing wall faces with ghost values
/// `w_P + h g (n·e)` and falling back on one-sided differences elsewhere.
fn gradient(grid: &Grid, w: &[f64], node: usize, wall_flux: impl Fn(usize) -> f64) -> [f64; 2] {
    let h = grid.spacing();
    let mut side = [None; 4];
    for (d, slot) in side.iter_mut().enumerate() {
        *slot = grid.neighbor(node, d).map(|m| w[m]);
    }
    for fi in grid.faces_of(node) {
        let face = &grid.wall_faces()[fi];
        side[face.dir] = Some(w[node] + h * wall_flux(fi) * face.normal_dot_dir());
    }
    let axis = |plus: Option<f64>, minus: Option<f64>| match (plus, minus) {
        (Some(p), Some(m)) => (p - m) / (2.0 * h),
        (Some(p), None) => (p - w[node]) / h,
        (None, Some(m)) => (w[node] - m) / h,
        (None, None) => 0.0,
    };
    [axis(side[0], side[1]), axis(side[2], side[3])]
}

/// `∇σ̄·n` imposed on each wall face at λ = 1.
fn sigma_wall_flux(field: &FlowField, eps: f64, sign: BcSign, states: &[Option<SigmaState>]) -> Vec<f64> {
    let s = match sign {
        BcSign::Minus => -1.0,
        BcSign::Plus => 1.0,
    };
    field
        .grid()
        .wall_faces()
        .iter()
        .map(|face| {
            let Some(st) = states[face.node] else { return 0.0 };
            let (sn, cs) = field.theta(face.node).sin_cos();
            s * (st.rho * st.speed * (cs * face.normal[0] + sn * face.normal[1])).abs() / eps
        })
        .collect()
}

pub fn dissipation_integral(field: &FlowField, eps: f64, sign: BcSign) -> Result<Dissipation> {
    let grid = field.grid();
    let gas = field.gas();
    let hstar = HStar::new(gas, reference_speed(field))?;
    let (q1, q2) = hstar_fluxes(field, &hstar);
    let states: Vec<Option<SigmaState>> = (0..grid.len())
        .map(|n| if grid.kind(n).is_fluid() { field.state(n).ok() } else { None })
        .collect();
    let sflux = sigma_wall_flux(field, eps, sign, &states);
    let theta: Vec<f64> = (0..grid.len()).map(|n| field.theta(n)).collect();
    let sigma: Vec<f64> = (0..grid.len()).map(|n| field.sigma(n)).collect();
    let floor = SPEED_FLOOR_RATIO * gas.critical_speed();
    let mut out = Dissipation {
        i2: 0.0,
        i1: 0.0,
        i1_wall: 0.0,
        i1_far_field: 0.0,
        flux_wall: 0.0,
        flux_far_field: 0.0,
        closure_error: 0.0,
        excluded_nodes: 0,
    };
    for n in 0..grid.len() {
        let Some(st) = states[n] else {
            if grid.kind(n).is_fluid() {
                out.excluded_nodes += 1;
            }
            continue;
        };
        if st.speed < floor {
            out.excluded_nodes += 1;
            continue;
        }
        let gt = gradient(grid, &theta, n, |_| 0.0);
        let gs = gradient(grid, &sigma, n, |fi| sflux[fi]);
        let m = st.rho * st.speed;
        let weight = st.sound_speed_sq / (st.sigma2 * m * m);
        out.i2 += (gt[0] * gt[0] + gt[1] * gt[1] + weight * (gs[0] * gs[0] + gs[1] * gs[1])) * grid.area(n);
    }
    out.i2 *= eps;
    let j_of = |n: usize| -> f64 { states[n].map_or(0.0, |st| hstar.flux_integral(st.rho).unwrap_or(0.0)) };
    for b in grid.wall_nodes() {
        let n = b.node;
        out.flux_wall += q1[n] * b.outward_area[0] + q2[n] * b.outward_area[1];
        // ∇θ·n = 0; ∇σ leaves through each face as g (n·e) h, matching the ghost closure
        for fi in grid.faces_of(n) {
            let face = &grid.wall_faces()[fi];
            out.i1_wall += eps * j_of(n) * sflux[fi] * face.normal_dot_dir() * grid.spacing();
        }
    }
    for b in grid.far_field() {
        let n = b.node;
        out.flux_far_field += q1[n] * b.outward_area[0] + q2[n] * b.outward_area[1];
        let gt = gradient(grid, &theta, n, |_| 0.0);
        let gs = gradient(grid, &sigma, n, |fi| sflux[fi]);
        let a = b.outward_area;
        out.i1_far_field += eps * (-theta[n] * (gt[0] * a[0] + gt[1] * a[1]) + j_of(n) * (gs[0] * a[0] + gs[1] * a[1]));
    }
    out.i1 = out.i1_wall + out.i1_far_field;
    out.closure_error = (out.flux_wall + out.flux_far_field - out.i1 - out.i2).abs();
    Ok(out)
}

/// `∫_{∂Ω₁} |ρ(u, v)·n| ds`.
pub fn wall_mass_flux(field: &FlowField) -> Result<f64> {
    let mut total = 0.0;
    for b in field.grid().wall_nodes() {
        let st = field.state(b.node)?;
        let (s, c) = field.theta(b.node).sin_cos();
        total += (st.rho * st.speed * (c * b.normal[0] + s * b.normal[1])).abs() * b.ds;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StagnationEntry {
    pub delta: f64,
    /// `min q` over fluid nodes at least δ from the wall (NaN if none).
    pub alpha: f64,
    pub nodes: usize,
}

pub fn stagnation_report(field: &FlowField, deltas: &[f64]) -> Result<Vec<StagnationEntry>> {
    let grid = field.grid();
    let speeds: Vec<Option<f64>> = (0..grid.len())
        .map(|n| if grid.kind(n).is_fluid() { Some(field.state(n).map(|s| s.speed)) } else { None })
        .map(Option::transpose)
        .collect::<Result<_>>()?;
    Ok(deltas
        .iter()
        .map(|&delta| {
            let mut alpha = f64::INFINITY;
            let mut nodes = 0;
            for n in 0..grid.len() {
                if let Some(q) = speeds[n] {
                    if grid.wall_distance(n) >= delta {
                        alpha = alpha.min(q);
                        nodes += 1;
                    }
                }
            }
            StagnationEntry {
                delta,
                alpha: if nodes == 0 { f64::NAN } else { alpha },
                nodes,
            }
        })
        .collect())
}

/// Level set M = 1 as line segments from marching squares.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SonicLine {
    pub segments: Vec<[[f64; 2]; 2]>,
    pub length: f64,
}

impl SonicLine {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("segment,x0,y0,x1,y1\n");
        for (k, [a, b]) in self.segments.iter().enumerate() {
            s.push_str(&format!("{k},{},{},{},{}\n", a[0], a[1], b[0], b[1]));
        }
        s
    }
}

pub fn sonic_line(field: &FlowField) -> SonicLine {
    let grid = field.grid();
    let (nx, ny) = grid.dims();
    let mach: Vec<f64> = (0..grid.len())
        .map(|n| {
            if grid.kind(n).is_fluid() {
                field.state(n).map_or(f64::NAN, |s| s.mach())
            } else {
                f64::NAN
            }
        })
        .collect();
    let mut segments = Vec::new();
    for j in 0..ny.saturating_sub(1) {
        for i in 0..nx.saturating_sub(1) {
            // corners counter-clockwise from (i, j)
            let ids = [grid.index(i, j), grid.index(i + 1, j), grid.index(i + 1, j + 1), grid.index(i, j + 1)];
            let v: Vec<f64> = ids.iter().map(|&n| mach[n] - 1.0).collect();
            if v.iter().any(|x| !x.is_finite()) {
                continue;
            }
            let p: Vec<[f64; 2]> = ids.iter().map(|&n| grid.position(n)).collect();
            let mut cuts = Vec::with_capacity(4);
            for e in 0..4 {
                let (a, b) = (e, (e + 1) % 4);
                if (v[a] < 0.0) != (v[b] < 0.0) {
                    let t = v[a] / (v[a] - v[b]);
                    cuts.push([p[a][0] + t * (p[b][0] - p[a][0]), p[a][1] + t * (p[b][1] - p[a][1])]);
                }
            }
            match cuts.len() {
                2 => segments.push([cuts[0], cuts[1]]),
                4 => {
                    // saddle: pair by the sign of the centre value
                    let centre = v.iter().sum::<f64>() / 4.0;
                    if (centre < 0.0) == (v[0] < 0.0) {
                        segments.push([cuts[0], cuts[3]]);
                        segments.push([cuts[1], cuts[2]]);
                    } else {
                        segments.push([cuts[0], cuts[1]]);
                        segments.push([cuts[2], cuts[3]]);
                    }
                }
                _ => {}
            }
        }
    }
    let length = segments
        .iter()
        .map(|[a, b]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
        .fold(0.0, |s, l| s + l);
    SonicLine { segments, length }
}

/// Residual of the divergence form
/// `(q sinθ)ₓ − (q cosθ)ᵧ = εΔθ`, `(ρq cosθ)ₓ + (ρq sinθ)ᵧ = εΔσ`
/// on interior nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservationResidual {
    pub max_irrotational: f64,
    pub max_mass: f64,
    /// Area-weighted L² norms.
    pub l2_irrotational: f64,
    pub l2_mass: f64,
}

pub fn conservation_residual(field: &FlowField, eps: f64) -> Result<ConservationResidual> {
    let grid = field.grid();
    let h = grid.spacing();
    let mut comps = vec![[0.0; 4]; grid.len()];
    for n in 0..grid.len() {
        if grid.kind(n).is_fluid() {
            let st = field.state(n)?;
            let (s, c) = field.theta(n).sin_cos();
            comps[n] = [st.speed * s, st.speed * c, st.rho * st.speed * c, st.rho * st.speed * s];
        }
    }
    let mut out = ConservationResidual {
        max_irrotational: 0.0,
        max_mass: 0.0,
        l2_irrotational: 0.0,
        l2_mass: 0.0,
    };
    for n in 0..grid.len() {
        if grid.kind(n) != NodeKind::Interior {
            continue;
        }
        let nb: Vec<usize> = (0..4).filter_map(|d| grid.neighbor(n, d)).collect();
        if nb.len() != 4 {
            continue;
        }
        let (e, w, no, so) = (nb[0], nb[1], nb[2], nb[3]);
        let lap = |f: &dyn Fn(usize) -> f64| (f(e) + f(w) + f(no) + f(so) - 4.0 * f(n)) / (h * h);
        let r1 = (comps[e][0] - comps[w][0]) / (2.0 * h) - (comps[no][1] - comps[so][1]) / (2.0 * h)
            - eps * lap(&|m| field.theta_bar[m]);
        let r2 = (comps[e][2] - comps[w][2]) / (2.0 * h) + (comps[no][3] - comps[so][3]) / (2.0 * h)
            - eps * lap(&|m| field.sigma_bar[m]);
        out.max_irrotational = out.max_irrotational.max(r1.abs());
        out.max_mass = out.max_mass.max(r2.abs());
        out.l2_irrotational += r1 * r1 * grid.area(n);
        out.l2_mass += r2 * r2 * grid.area(n);
    }
    out.l2_irrotational = out.l2_irrotational.sqrt();
    out.l2_mass = out.l2_mass.sqrt();
    Ok(out)
}

/// All diagnostics of one converged field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub containment: ContainmentReport,
    pub entropy: EntropyCheck,
    pub dissipation: Dissipation,
    pub stagnation: Vec<StagnationEntry>,
    pub sonic_line_length: f64,
    pub sonic_segments: usize,
    pub wall_mass_flux: f64,
    pub conservation: ConservationResidual,
}

/// Wall distances at which the speed floor α(δ) is reported by default.
pub const DEFAULT_DELTAS: [f64; 4] = [0.0, 0.05, 0.1, 0.2];

pub fn full_report(field: &FlowField, eps: f64, sign: BcSign) -> Result<(DiagnosticsReport, SonicLine)> {
    let region = default_region(field)?;
    let sonic = sonic_line(field);
    let report = DiagnosticsReport {
        containment: containment_report(field, &region),
        entropy: entropy_inequality_check(field)?,
        dissipation: dissipation_integral(field, eps, sign)?,
        stagnation: stagnation_report(field, &DEFAULT_DELTAS)?,
        sonic_line_length: sonic.length,
        sonic_segments: sonic.segments.len(),
        wall_mass_flux: wall_mass_flux(field)?,
        conservation: conservation_residual(field, eps)?,
    };
    Ok((report, sonic))
}
