//! Experiment parameters and the flat `key = value` config format.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Truncation height of the cylinder as a function of the triangle count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauRule {
    /// `τ = 1 + #T/3`.
    Linear,
    /// `τ = 1 + ln(#T)/3`.
    Log,
}

impl TauRule {
    pub fn tau(&self, triangles: usize) -> f64 {
        let n = triangles as f64;
        match self {
            TauRule::Linear => 1.0 + n / 3.0,
            TauRule::Log => 1.0 + n.ln() / 3.0,
        }
    }
}

impl FromStr for TauRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(TauRule::Linear),
            "log" => Ok(TauRule::Log),
            _ => Err(Error::Config(format!("unknown tau rule {s:?} (expected linear or log)"))),
        }
    }
}

impl fmt::Display for TauRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TauRule::Linear => "linear",
            TauRule::Log => "log",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreconditionerKind {
    VerticalLine,
    Jacobi,
}

impl FromStr for PreconditionerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line" => Ok(PreconditionerKind::VerticalLine),
            "jacobi" => Ok(PreconditionerKind::Jacobi),
            _ => Err(Error::Config(format!("unknown preconditioner {s:?} (expected line or jacobi)"))),
        }
    }
}

impl fmt::Display for PreconditionerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PreconditionerKind::VerticalLine => "line",
            PreconditionerKind::Jacobi => "jacobi",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Weight of the TV term in the pre-smoothing.
    pub zeta: f64,
    pub tol_tv: f64,
    pub tv_max_iter: usize,
    pub n_refine: usize,
    /// Edge-indicator scale during refinement.
    pub lambda: f64,
    /// Dörfler bulk fraction.
    pub beta: f64,
    /// Edge-indicator scale for the final exponent.
    pub nu: f64,
    /// Factor applied to intensity gradients before both edge indicators.
    pub grad_scale: f64,
    /// Triangles smaller than this many pixel widths are not refined further.
    pub min_diameter_px: f64,
    pub mu: f64,
    pub theta: f64,
    /// Number of intervals in the extended direction.
    pub k_layers: usize,
    pub tau_rule: TauRule,
    /// Overrides `tau_rule` when set.
    pub tau: Option<f64>,
    pub gamma: f64,
    pub sigma: f64,
    pub seed: u64,
    /// Initial uniform mesh divisions; derived from the image size when unset.
    pub mesh_m: Option<usize>,
    pub pcg_tol: f64,
    /// Derived from the system size when unset.
    pub pcg_max_iter: Option<usize>,
    pub preconditioner: PreconditionerKind,
    /// Tolerance of the TV baseline runs.
    pub tol_tv_star: f64,
    pub tv_star_max_iter: usize,
    pub zeta_grid: Vec<f64>,
    /// Side length of generated fixtures.
    pub size: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            zeta: 0.2,
            tol_tv: 1e-4,
            tv_max_iter: 100_000,
            n_refine: 8,
            lambda: 300.0,
            beta: 0.99,
            nu: 200.0,
            grad_scale: 16.0,
            min_diameter_px: 0.7,
            mu: 8050.0,
            theta: 1e-10,
            k_layers: 20,
            tau_rule: TauRule::Log,
            tau: None,
            gamma: 1.05 / 0.32,
            sigma: 0.1,
            seed: 7,
            mesh_m: None,
            pcg_tol: 1e-8,
            pcg_max_iter: None,
            preconditioner: PreconditionerKind::VerticalLine,
            tol_tv_star: 1e-8,
            tv_star_max_iter: 200_000,
            zeta_grid: (1..=20).map(|k| k as f64 * 0.05).collect(),
            size: 128,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("zeta", self.zeta),
            ("tol_tv", self.tol_tv),
            ("lambda", self.lambda),
            ("nu", self.nu),
            ("grad_scale", self.grad_scale),
            ("mu", self.mu),
            ("theta", self.theta),
            ("pcg_tol", self.pcg_tol),
            ("tol_tv_star", self.tol_tv_star),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Config(format!("beta must lie in (0,1], got {}", self.beta)));
        }
        if !(self.min_diameter_px >= 0.0 && self.min_diameter_px.is_finite()) {
            return Err(Error::Config(format!("min_diameter_px must be non-negative, got {}", self.min_diameter_px)));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::Config(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        if self.gamma < 1.0 {
            return Err(Error::Config(format!("gamma must be >= 1, got {}", self.gamma)));
        }
        if self.k_layers == 0 || self.tv_max_iter == 0 || self.tv_star_max_iter == 0 {
            return Err(Error::Config("k_layers and iteration limits must be positive".into()));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0) {
                return Err(Error::Config(format!("tau must be positive, got {t}")));
            }
        }
        if self.mesh_m == Some(0) || self.pcg_max_iter == Some(0) {
            return Err(Error::Config("mesh_m and pcg_max_iter must be positive".into()));
        }
        if self.zeta_grid.is_empty() || self.zeta_grid.iter().any(|z| !(*z > 0.0)) {
            return Err(Error::Config("zeta_grid must be a non-empty list of positive values".into()));
        }
        if self.size < 64 {
            return Err(Error::Config(format!("size must be at least 64, got {}", self.size)));
        }
        Ok(())
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let opt = |v: &str| v == "auto" || v.is_empty();
        match key {
            "zeta" => self.zeta = parse(key, value)?,
            "tol_tv" => self.tol_tv = parse(key, value)?,
            "tv_max_iter" => self.tv_max_iter = parse(key, value)?,
            "n_refine" => self.n_refine = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "nu" => self.nu = parse(key, value)?,
            "grad_scale" => self.grad_scale = parse(key, value)?,
            "min_diameter_px" => self.min_diameter_px = parse(key, value)?,
            "mu" => self.mu = parse(key, value)?,
            "theta" => self.theta = parse(key, value)?,
            "k_layers" | "K" => self.k_layers = parse(key, value)?,
            "tau_rule" => self.tau_rule = value.parse()?,
            "tau" => self.tau = if opt(value) { None } else { Some(parse(key, value)?) },
            "gamma" => self.gamma = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "mesh_m" => self.mesh_m = if opt(value) { None } else { Some(parse(key, value)?) },
            "pcg_tol" => self.pcg_tol = parse(key, value)?,
            "pcg_max_iter" => self.pcg_max_iter = if opt(value) { None } else { Some(parse(key, value)?) },
            "preconditioner" => self.preconditioner = value.parse()?,
            "tol_tv_star" => self.tol_tv_star = parse(key, value)?,
            "tv_star_max_iter" => self.tv_star_max_iter = parse(key, value)?,
            "zeta_grid" => {
                self.zeta_grid = value
                    .split(',')
                    .map(|v| parse::<f64>(key, v.trim()))
                    .collect::<Result<_>>()?
            }
            "size" => self.size = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim()).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    /// `(key, value)` pairs in a fixed order, in the same textual form
    /// accepted by [`set`](Self::set).
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let opt_f = |v: Option<f64>| v.map_or("auto".to_string(), |x| format!("{x:e}"));
        let opt_u = |v: Option<usize>| v.map_or("auto".to_string(), |x| x.to_string());
        vec![
            ("zeta", format!("{:e}", self.zeta)),
            ("tol_tv", format!("{:e}", self.tol_tv)),
            ("tv_max_iter", self.tv_max_iter.to_string()),
            ("n_refine", self.n_refine.to_string()),
            ("lambda", format!("{:e}", self.lambda)),
            ("beta", format!("{:e}", self.beta)),
            ("nu", format!("{:e}", self.nu)),
            ("grad_scale", format!("{:e}", self.grad_scale)),
            ("min_diameter_px", format!("{:e}", self.min_diameter_px)),
            ("mu", format!("{:e}", self.mu)),
            ("theta", format!("{:e}", self.theta)),
            ("k_layers", self.k_layers.to_string()),
            ("tau_rule", self.tau_rule.to_string()),
            ("tau", opt_f(self.tau)),
            ("gamma", format!("{:e}", self.gamma)),
            ("sigma", format!("{:e}", self.sigma)),
            ("seed", self.seed.to_string()),
            ("mesh_m", opt_u(self.mesh_m)),
            ("pcg_tol", format!("{:e}", self.pcg_tol)),
            ("pcg_max_iter", opt_u(self.pcg_max_iter)),
            ("preconditioner", self.preconditioner.to_string()),
            ("tol_tv_star", format!("{:e}", self.tol_tv_star)),
            ("tv_star_max_iter", self.tv_star_max_iter.to_string()),
            (
                "zeta_grid",
                self.zeta_grid.iter().map(|z| format!("{z:e}")).collect::<Vec<_>>().join(","),
            ),
            ("size", self.size.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Initial mesh divisions giving about one vertex per 16 pixels.
    pub fn initial_mesh_m(&self, width: usize, height: usize) -> usize {
        self.mesh_m
            .unwrap_or_else(|| ((((width * height) as f64 / 16.0).sqrt().round() as usize).saturating_sub(1)).max(1))
    }

    pub fn tau_for(&self, triangles: usize) -> f64 {
        self.tau.unwrap_or_else(|| self.tau_rule.tau(triangles))
    }
}
