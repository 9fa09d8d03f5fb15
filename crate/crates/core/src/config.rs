//! Run configuration as plain `key = value` text, and the `(q, θ)` path spec
//! used by the entropy evaluator.
//!
//! ```text
//! # transonic bump
//! gamma = 1.4
//! q_inf_ratio = 0.95
//! epsilon = 0.05
//! h = 1/64
//!
//! [domain]
//! kind = channel
//! bump_height = 0.1
//! ```
//!
//! Keys inside a `[section]` are prefixed with `section.`; unknown or
//! repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gas::GasModel;
use crate::mesh::{DomainSpec, Grid};
use crate::phaseplane::PhaseState;
use crate::solver::{uniform_schedule, BcSign, Difference, Method, SolveConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub gamma: f64,
    /// q∞ / q_cr.
    pub q_inf_ratio: f64,
    /// One entry for `solve`, several (descending) for `sweep`.
    pub epsilons: Vec<f64>,
    pub h: f64,
    pub domain: DomainSpec,
    pub omega: f64,
    pub lambda_steps: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub bc_sign: BcSign,
    pub theta_inf: f64,
    pub difference: Difference,
    pub method: Method,
    pub anderson_depth: usize,
    pub delta: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gamma: 1.4,
            q_inf_ratio: 0.5,
            epsilons: vec![0.1],
            h: 1.0 / 32.0,
            domain: DomainSpec::default(),
            omega: 0.5,
            lambda_steps: 10,
            tol: 1e-8,
            max_iter: 5000,
            bc_sign: BcSign::Plus,
            theta_inf: 0.0,
            difference: Difference::Centered,
            method: Method::Newton,
            anderson_depth: 8,
            delta: None,
        }
    }
}

const KEYS: &[&str] = &[
    "gamma",
    "q_inf_ratio",
    "epsilon",
    "epsilon_list",
    "h",
    "omega",
    "lambda_steps",
    "tol",
    "max_iter",
    "bc_sign",
    "theta_inf",
    "difference",
    "method",
    "anderson_depth",
    "delta",
    "domain.kind",
    "domain.length",
    "domain.width",
    "domain.height",
    "domain.bump_center",
    "domain.bump_chord",
    "domain.bump_height",
    "domain.center_x",
    "domain.center_y",
    "domain.semi_axis_x",
    "domain.semi_axis_y",
];

/// Splits text into `key → (line, value)`, rejecting malformed lines,
/// unknown keys and repeats.
fn tokenize(text: &str) -> Result<BTreeMap<String, (usize, String)>> {
    let mut map = BTreeMap::new();
    let mut section = String::new();
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::Parse(format!("line {line_no}: unterminated section header")))?
                .trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(Error::Parse(format!("line {line_no}: bad section name '{name}'")));
            }
            section = format!("{name}.");
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {line_no}: expected 'key = value'")))?;
        let key = format!("{section}{}", key.trim());
        let value = value.trim();
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("line {line_no}: unknown key '{key}'")));
        }
        if value.is_empty() {
            return Err(Error::Parse(format!("line {line_no}: empty value for '{key}'")));
        }
        if map.insert(key.clone(), (line_no, value.to_string())).is_some() {
            return Err(Error::Config(format!("line {line_no}: '{key}' given twice")));
        }
    }
    Ok(map)
}

/// A number, also accepting a simple fraction such as `1/64`.
pub fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| Error::Parse(format!("bad number '{s}'")))?;
            let b: f64 = b.trim().parse().map_err(|_| Error::Parse(format!("bad number '{s}'")))?;
            a / b
        }
        None => s.parse().map_err(|_| Error::Parse(format!("bad number '{s}'")))?,
    };
    if !v.is_finite() {
        return Err(Error::Parse(format!("'{s}' is not a finite number")));
    }
    Ok(v)
}

fn parse_count(s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Parse(format!("bad count '{s}'")))
}

impl FromStr for BcSign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "minus" | "section5" => Ok(BcSign::Minus),
            "plus" | "section10" => Ok(BcSign::Plus),
            other => Err(Error::Parse(format!("bc_sign '{other}' (expected minus|plus|section5|section10)"))),
        }
    }
}

impl FromStr for Difference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "centered" | "centred" => Ok(Difference::Centered),
            "upwind" => Ok(Difference::Upwind),
            other => Err(Error::Parse(format!("difference '{other}' (expected centered|upwind)"))),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "newton" => Ok(Method::Newton),
            "picard" => Ok(Method::Picard),
            other => Err(Error::Parse(format!("method '{other}' (expected newton|picard)"))),
        }
    }
}

fn sign_name(s: BcSign) -> &'static str {
    match s {
        BcSign::Minus => "minus",
        BcSign::Plus => "plus",
    }
}

fn difference_name(d: Difference) -> &'static str {
    match d {
        Difference::Centered => "centered",
        Difference::Upwind => "upwind",
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Newton => "newton",
        Method::Picard => "picard",
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let map = tokenize(text)?;
        let get = |k: &str| map.get(k).map(|(_, v)| v.as_str());
        let num = |k: &str, default: f64| -> Result<f64> { get(k).map_or(Ok(default), parse_number) };
        let mut cfg = RunConfig::default();
        cfg.gamma = num("gamma", cfg.gamma)?;
        cfg.q_inf_ratio = num("q_inf_ratio", cfg.q_inf_ratio)?;
        match (get("epsilon"), get("epsilon_list")) {
            (Some(_), Some(_)) => return Err(Error::Config("give either epsilon or epsilon_list, not both".into())),
            (Some(e), None) => cfg.epsilons = vec![parse_number(e)?],
            (None, Some(list)) => {
                cfg.epsilons = list.split(',').map(parse_number).collect::<Result<_>>()?;
            }
            (None, None) => {}
        }
        cfg.h = num("h", cfg.h)?;
        cfg.omega = num("omega", cfg.omega)?;
        if let Some(v) = get("lambda_steps") {
            cfg.lambda_steps = parse_count(v)?;
        }
        cfg.tol = num("tol", cfg.tol)?;
        if let Some(v) = get("max_iter") {
            cfg.max_iter = parse_count(v)?;
        }
        if let Some(v) = get("bc_sign") {
            cfg.bc_sign = v.parse()?;
        }
        cfg.theta_inf = num("theta_inf", cfg.theta_inf)?;
        if let Some(v) = get("difference") {
            cfg.difference = v.parse()?;
        }
        if let Some(v) = get("method") {
            cfg.method = v.parse()?;
        }
        if let Some(v) = get("anderson_depth") {
            cfg.anderson_depth = parse_count(v)?;
        }
        if let Some(v) = get("delta") {
            cfg.delta = Some(parse_number(v)?);
        }
        cfg.domain = parse_domain(&map)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let gas = self.gas()?;
        if !(self.q_inf_ratio > 0.0 && self.q_inf_ratio < 1.0) {
            return Err(Error::Config(format!(
                "q_inf_ratio = {} must lie in (0, 1): the far field must be subsonic (q_inf < q_cr)",
                self.q_inf_ratio
            )));
        }
        if self.epsilons.is_empty() || self.epsilons.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::Config("epsilon values must be positive".into()));
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("epsilon_list must be strictly descending".into()));
        }
        let (w, ht) = self.domain.extents();
        if !(self.h > 0.0 && self.h <= 0.25 * w.min(ht)) {
            return Err(Error::Config(format!("h = {} must be positive and at most a quarter of the domain", self.h)));
        }
        if self.lambda_steps == 0 || self.lambda_steps > 10_000 {
            return Err(Error::Config("lambda_steps must be in 1..=10000".into()));
        }
        if !self.theta_inf.is_finite() || self.theta_inf.abs() > std::f64::consts::PI {
            return Err(Error::Config("theta_inf must lie in [−π, π]".into()));
        }
        if self.anderson_depth > 50 {
            return Err(Error::Config("anderson_depth must be at most 50".into()));
        }
        for &eps in &self.epsilons {
            self.solve_config(&gas, eps).validate(&gas)?;
        }
        Ok(())
    }

    pub fn gas(&self) -> Result<GasModel> {
        GasModel::new(self.gamma).map_err(|e| Error::Config(format!("gamma: {e}")))
    }

    pub fn solve_config(&self, gas: &GasModel, epsilon: f64) -> SolveConfig {
        SolveConfig {
            epsilon,
            lambda_schedule: uniform_schedule(self.lambda_steps),
            omega: self.omega,
            tol: self.tol,
            max_iter: self.max_iter,
            q_inf: self.q_inf_ratio * gas.critical_speed(),
            theta_inf: self.theta_inf,
            bc_sign: self.bc_sign,
            difference: self.difference,
            method: self.method,
            anderson_depth: self.anderson_depth,
            delta: self.delta,
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::build(&self.domain, self.h)
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "q_inf_ratio = {}", self.q_inf_ratio);
        if self.epsilons.len() == 1 {
            let _ = writeln!(s, "epsilon = {}", self.epsilons[0]);
        } else {
            let list: Vec<String> = self.epsilons.iter().map(f64::to_string).collect();
            let _ = writeln!(s, "epsilon_list = {}", list.join(", "));
        }
        let _ = writeln!(s, "h = {}", self.h);
        let _ = writeln!(s, "omega = {}", self.omega);
        let _ = writeln!(s, "lambda_steps = {}", self.lambda_steps);
        let _ = writeln!(s, "tol = {}", self.tol);
        let _ = writeln!(s, "max_iter = {}", self.max_iter);
        let _ = writeln!(s, "bc_sign = {}", sign_name(self.bc_sign));
        let _ = writeln!(s, "theta_inf = {}", self.theta_inf);
        let _ = writeln!(s, "difference = {}", difference_name(self.difference));
        let _ = writeln!(s, "method = {}", method_name(self.method));
        let _ = writeln!(s, "anderson_depth = {}", self.anderson_depth);
        if let Some(d) = self.delta {
            let _ = writeln!(s, "delta = {d}");
        }
        s.push_str("\n[domain]\n");
        match self.domain {
            DomainSpec::Channel {
                length,
                height,
                bump_center,
                bump_chord,
                bump_height,
            } => {
                let _ = writeln!(s, "kind = channel");
                let _ = writeln!(s, "length = {length}");
                let _ = writeln!(s, "height = {height}");
                let _ = writeln!(s, "bump_center = {bump_center}");
                let _ = writeln!(s, "bump_chord = {bump_chord}");
                let _ = writeln!(s, "bump_height = {bump_height}");
            }
            DomainSpec::Hole {
                width,
                height,
                center,
                semi_axes,
            } => {
                let _ = writeln!(s, "kind = hole");
                let _ = writeln!(s, "width = {width}");
                let _ = writeln!(s, "height = {height}");
                let _ = writeln!(s, "center_x = {}", center[0]);
                let _ = writeln!(s, "center_y = {}", center[1]);
                let _ = writeln!(s, "semi_axis_x = {}", semi_axes[0]);
                let _ = writeln!(s, "semi_axis_y = {}", semi_axes[1]);
            }
            DomainSpec::Rectangle { width, height } => {
                let _ = writeln!(s, "kind = rectangle");
                let _ = writeln!(s, "width = {width}");
                let _ = writeln!(s, "height = {height}");
            }
        }
        s
    }
}

fn parse_domain(map: &BTreeMap<String, (usize, String)>) -> Result<DomainSpec> {
    let get = |k: &str| map.get(&format!("domain.{k}")).map(|(_, v)| v.as_str());
    let num = |k: &str, default: f64| -> Result<f64> { get(k).map_or(Ok(default), parse_number) };
    let kind = get("kind").unwrap_or("channel");
    let allowed: &[&str] = match kind {
        "channel" => &["kind", "length", "height", "bump_center", "bump_chord", "bump_height"],
        "hole" => &["kind", "width", "height", "center_x", "center_y", "semi_axis_x", "semi_axis_y"],
        "rectangle" => &["kind", "width", "height"],
        other => return Err(Error::Config(format!("domain.kind '{other}' (expected channel|hole|rectangle)"))),
    };
    for (key, (line, _)) in map.range("domain.".to_string()..) {
        let Some(name) = key.strip_prefix("domain.") else { break };
        if !allowed.contains(&name) {
            return Err(Error::Config(format!("line {line}: domain.{name} does not apply to a {kind} domain")));
        }
    }
    let spec = match kind {
        "channel" => {
            let DomainSpec::Channel {
                length,
                height,
                bump_center,
                bump_chord,
                bump_height,
            } = DomainSpec::default()
            else {
                unreachable!("default domain is a channel")
            };
            DomainSpec::Channel {
                length: num("length", length)?,
                height: num("height", height)?,
                bump_center: num("bump_center", bump_center)?,
                bump_chord: num("bump_chord", bump_chord)?,
                bump_height: num("bump_height", bump_height)?,
            }
        }
        "hole" => DomainSpec::Hole {
            width: num("width", 4.0)?,
            height: num("height", 3.0)?,
            center: [num("center_x", 2.0)?, num("center_y", 1.5)?],
            semi_axes: [num("semi_axis_x", 0.5)?, num("semi_axis_y", 0.25)?],
        },
        _ => DomainSpec::Rectangle {
            width: num("width", 2.0)?,
            height: num("height", 1.0)?,
        },
    };
    validate_domain(&spec)?;
    Ok(spec)
}

fn validate_domain(spec: &DomainSpec) -> Result<()> {
    let positive = |name: &str, v: f64| -> Result<()> {
        if v > 0.0 && v < 1e6 {
            Ok(())
        } else {
            Err(Error::Config(format!("domain.{name} = {v} must be positive")))
        }
    };
    match *spec {
        DomainSpec::Channel {
            length,
            height,
            bump_center,
            bump_chord,
            bump_height,
        } => {
            positive("length", length)?;
            positive("height", height)?;
            positive("bump_chord", bump_chord)?;
            if !(bump_height >= 0.0 && bump_height < 0.5 * height && bump_height <= 0.5 * bump_chord) {
                return Err(Error::Config(format!(
                    "domain.bump_height = {bump_height} must lie in [0, min(height, chord)/2)"
                )));
            }
            if !(bump_center - 0.5 * bump_chord > 0.0 && bump_center + 0.5 * bump_chord < length) {
                return Err(Error::Config("the bump must lie strictly inside the channel".into()));
            }
        }
        DomainSpec::Hole {
            width,
            height,
            center,
            semi_axes,
        } => {
            positive("width", width)?;
            positive("height", height)?;
            positive("semi_axis_x", semi_axes[0])?;
            positive("semi_axis_y", semi_axes[1])?;
            if !(center[0] - semi_axes[0] > 0.0
                && center[0] + semi_axes[0] < width
                && center[1] - semi_axes[1] > 0.0
                && center[1] + semi_axes[1] < height)
            {
                return Err(Error::Config("the obstacle must lie strictly inside the box".into()));
            }
        }
        DomainSpec::Rectangle { width, height } => {
            positive("width", width)?;
            positive("height", height)?;
        }
    }
    Ok(())
}

/// A polyline in the (q, θ) plane sampled at `samples` points:
/// `"q1,θ1;q2,θ2;…@N"`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    pub vertices: Vec<PhaseState>,
    pub samples: usize,
}

/// Sample count used when a path spec has no `@N`.
pub const DEFAULT_PATH_SAMPLES: usize = 64;
pub const MAX_PATH_SAMPLES: usize = 1_000_000;

impl FromStr for PathSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (body, count) = match s.rsplit_once('@') {
            Some((b, n)) => (b, Some(n)),
            None => (s, None),
        };
        let samples = match count {
            Some(n) => n
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad sample count '{n}'")))?,
            None => DEFAULT_PATH_SAMPLES,
        };
        if !(1..=MAX_PATH_SAMPLES).contains(&samples) {
            return Err(Error::Parse(format!("sample count {samples} outside 1..={MAX_PATH_SAMPLES}")));
        }
        let mut vertices = Vec::new();
        for point in body.split(';') {
            let point = point.trim();
            if point.is_empty() {
                continue;
            }
            let (q, t) = point
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("path point '{point}' is not 'q,theta'")))?;
            let q = parse_number(q)?;
            let theta = parse_number(t)?;
            if !(q >= 0.0) {
                return Err(Error::Parse(format!("path speed {q} is negative")));
            }
            vertices.push(PhaseState::new(q, theta));
        }
        if vertices.is_empty() {
            return Err(Error::Parse("path has no points".into()));
        }
        if vertices.len() > 1 && samples < 2 {
            return Err(Error::Parse("a path with several points needs at least 2 samples".into()));
        }
        Ok(PathSpec { vertices, samples })
    }
}

impl PathSpec {
    /// Points evenly spaced in the polyline parameter (each segment gets an
    /// equal share), ending exactly at the last vertex.
    pub fn sample(&self) -> Vec<PhaseState> {
        let v = &self.vertices;
        if v.len() == 1 {
            return vec![v[0]; self.samples];
        }
        let segments = (v.len() - 1) as f64;
        (0..self.samples)
            .map(|k| {
                let s = k as f64 / (self.samples - 1) as f64 * segments;
                let i = (s.floor() as usize).min(v.len() - 2);
                let t = s - i as f64;
                PhaseState::new(v[i].q + t * (v[i + 1].q - v[i].q), v[i].theta + t * (v[i + 1].theta - v[i].theta))
            })
            .collect()
    }
}
