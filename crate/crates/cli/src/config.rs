use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use symscale::operators::{CutoffProfile, ScalingParam};
use symscale::scaling::{make_analytic_vector, AnalyticVector};
use symscale::spectral::{GridSpec, TrajectoryConfig, TubeRadius};
use symscale::verify::Resolution;
use symscale::{Complex64, Space};

/// Configuration errors; the CLI exits with status 2 on these.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config error: {0}")]
pub struct ConfigError(pub String);

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub space: Space,
    pub grid: GridSpec,
    /// A single theta as `[re, im]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Complex64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_sweep: Option<Sweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exterior: Option<Exterior>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Complex64>,
    /// Points sampled in order, with sheet tracking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_path: Option<Vec<Complex64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<LambdaGrid>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub vectors: BTreeMap<String, VectorDef>,
    #[serde(default)]
    pub spectrum: SpectrumOptions,
    #[serde(default)]
    pub resolvent: ResolventOptions,
    #[serde(default)]
    pub green: GreenOptions,
    #[serde(default)]
    pub verify: VerifyOptions,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub from: Complex64,
    pub to: Complex64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exterior {
    #[serde(rename = "T")]
    pub t: f64,
    pub width: f64,
}

/// `re` and `im` as `[from, to, count]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaGrid {
    pub re: (f64, f64, usize),
    pub im: (f64, f64, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermDef {
    pub center: [f64; 2],
    pub width: f64,
    #[serde(default = "one")]
    pub coeff: Complex64,
}

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorDef {
    pub terms: Vec<TermDef>,
    #[serde(default = "yes")]
    pub symmetrize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumOptions {
    pub count: usize,
    /// Defaults to `ev0 + 0.5 e^{-2i Im theta}` (single theta) or the
    /// trajectory default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<Complex64>,
    #[serde(default)]
    pub tube: TubeRadius,
    pub stationarity: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            count: 30,
            shift: None,
            tube: TubeRadius::default(),
            stationarity: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolventOptions {
    pub f: String,
    pub g: String,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        ResolventOptions {
            f: "f".into(),
            g: "g".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenOptions {
    pub t: Vec<f64>,
    pub probe: String,
}

impl Default for GreenOptions {
    fn default() -> Self {
        GreenOptions {
            t: vec![0.04, 0.02, 0.01, 0.005],
            probe: "probe".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyOptions {
    pub resolution: Resolution,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            resolution: Resolution::Reduced,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            space: Space::H2,
            grid: GridSpec {
                h: 0.01,
                radius: 30.0,
                form: Default::default(),
            },
            theta: None,
            theta_sweep: None,
            exterior: None,
            lambda: None,
            lambda_path: None,
            lambda_grid: None,
            vectors: BTreeMap::new(),
            spectrum: SpectrumOptions::default(),
            resolvent: ResolventOptions::default(),
            green: GreenOptions::default(),
            verify: VerifyOptions::default(),
            seed: 0,
        }
    }
}

fn check_theta(key: &str, t: Complex64) -> Result<(), ConfigError> {
    if !t.re.is_finite() || !t.im.is_finite() {
        return Err(bad(format!("{key}: theta must be finite, got {t}")));
    }
    if t.im.abs() >= FRAC_PI_2 {
        return Err(bad(format!(
            "{key}: |Im theta| = {} violates the window |Im theta| < pi/2 ({FRAC_PI_2:.4})",
            t.im.abs()
        )));
    }
    Ok(())
}

fn check_lambda(key: &str, l: Complex64) -> Result<(), ConfigError> {
    if l.re.is_finite() && l.im.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("{key}: lambda must be finite, got {l}")))
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("{key} must be > 0, got {v}")))
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("grid.h", self.grid.h)?;
        positive("grid.R", self.grid.radius)?;
        if self.grid.radius <= 2.0 * self.grid.h {
            return Err(bad(format!(
                "grid.R must exceed 2 grid.h, got R = {} and h = {}",
                self.grid.radius, self.grid.h
            )));
        }
        if self.theta.is_some() && self.theta_sweep.is_some() {
            return Err(bad("theta and theta_sweep are mutually exclusive"));
        }
        if let Some(t) = self.theta {
            check_theta("theta", t)?;
        }
        if let Some(s) = self.theta_sweep {
            if s.steps == 0 {
                return Err(bad("theta_sweep.steps must be >= 1"));
            }
            check_theta("theta_sweep.from", s.from)?;
            check_theta("theta_sweep.to", s.to)?;
            if s.to.im < s.from.im {
                return Err(bad("theta_sweep must run in increasing Im theta"));
            }
        }
        if let Some(e) = self.exterior {
            positive("exterior.T", e.t)?;
            positive("exterior.width", e.width)?;
        }
        let given = [self.lambda.is_some(), self.lambda_path.is_some(), self.lambda_grid.is_some()];
        if given.iter().filter(|g| **g).count() > 1 {
            return Err(bad("lambda, lambda_path and lambda_grid are mutually exclusive"));
        }
        if let Some(l) = self.lambda {
            check_lambda("lambda", l)?;
        }
        if let Some(p) = &self.lambda_path {
            if p.is_empty() {
                return Err(bad("lambda_path must not be empty"));
            }
            for (k, l) in p.iter().enumerate() {
                check_lambda(&format!("lambda_path[{k}]"), *l)?;
            }
        }
        if let Some(g) = self.lambda_grid {
            if g.re.2 == 0 || g.im.2 == 0 {
                return Err(bad("lambda_grid counts must be >= 1"));
            }
            for (k, v) in [g.re.0, g.re.1, g.im.0, g.im.1].iter().enumerate() {
                if !v.is_finite() {
                    return Err(bad(format!("lambda_grid entry {k} must be finite")));
                }
            }
        }
        for name in self.vectors.keys() {
            self.vector(name)?;
        }
        if self.spectrum.count == 0 {
            return Err(bad("spectrum.count must be >= 1"));
        }
        positive("spectrum.stationarity", self.spectrum.stationarity)?;
        self.spectrum
            .tube
            .validate()
            .map_err(|e| bad(format!("spectrum.tube: {e}")))?;
        if self.green.t.is_empty() {
            return Err(bad("green.t must not be empty"));
        }
        for (k, t) in self.green.t.iter().enumerate() {
            positive(&format!("green.t[{k}]"), *t)?;
        }
        if self.green.t.windows(2).any(|w| w[1] >= w[0]) {
            return Err(bad("green.t must be strictly decreasing"));
        }
        Ok(())
    }

    pub fn thetas(&self) -> Vec<Complex64> {
        if let Some(s) = self.theta_sweep {
            if s.steps == 1 {
                return vec![s.from];
            }
            return (0..s.steps)
                .map(|k| s.from + (s.to - s.from) * (k as f64 / (s.steps - 1) as f64))
                .collect();
        }
        vec![self.theta.unwrap_or_default()]
    }

    /// The single theta of a non-sweep command.
    pub fn single_theta(&self, command: &str) -> Result<Complex64, ConfigError> {
        if self.theta_sweep.is_some() {
            return Err(bad(format!("{command} takes a single theta, not theta_sweep")));
        }
        Ok(self.theta.unwrap_or_default())
    }

    pub fn lambdas(&self) -> Vec<Complex64> {
        if let Some(l) = self.lambda {
            return vec![l];
        }
        if let Some(p) = &self.lambda_path {
            return p.clone();
        }
        if let Some(g) = self.lambda_grid {
            let mut out = Vec::new();
            for im in linspace(g.im.0, g.im.1, g.im.2) {
                for re in linspace(g.re.0, g.re.1, g.re.2) {
                    out.push(Complex64::new(re, im));
                }
            }
            return out;
        }
        Vec::new()
    }

    pub fn scaling(&self, theta: Complex64) -> Result<ScalingParam, ConfigError> {
        let sp = match self.exterior {
            None => ScalingParam::uniform(theta),
            Some(e) => CutoffProfile::new(e.t, e.width).and_then(|c| ScalingParam::exterior(theta, c)),
        };
        sp.map_err(|e| bad(format!("theta = {theta}: {e}")))
    }

    pub fn vector(&self, name: &str) -> Result<AnalyticVector, ConfigError> {
        let def = self
            .vectors
            .get(name)
            .ok_or_else(|| bad(format!("vectors.{name} is not defined")))?;
        if def.terms.is_empty() {
            return Err(bad(format!("vectors.{name} has no terms")));
        }
        let centers: Vec<[f64; 2]> = def.terms.iter().map(|t| t.center).collect();
        let widths: Vec<f64> = def.terms.iter().map(|t| t.width).collect();
        let coeffs: Vec<Complex64> = def.terms.iter().map(|t| t.coeff).collect();
        make_analytic_vector(self.space, &centers, &widths, &coeffs, def.symmetrize)
            .map_err(|e| bad(format!("vectors.{name}: {e}")))
    }

    pub fn trajectory(&self) -> TrajectoryConfig {
        TrajectoryConfig {
            space: self.space,
            grid: self.grid,
            count: self.spectrum.count,
            shift: self.spectrum.shift,
            tube: self.spectrum.tube,
            stationarity: self.spectrum.stationarity,
            exterior: self.exterior.map(|e| (e.t, e.width)),
        }
    }
}
