use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wgflow::jko::JkoConfig;
use wgflow::{Error, Measure1D, Potential};

use crate::failure::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Jko,
    Particles,
    Exact,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    potential: Potential,
    initial: Measure1D,
    method: Option<Method>,
    tau: Option<f64>,
    n: Option<usize>,
    dt: Option<f64>,
    t_end: Option<f64>,
    inner_tol: Option<f64>,
    inner_max_iters: Option<usize>,
    output_dir: Option<PathBuf>,
    diagnostics: Option<RawDiagnostics>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiagnostics {
    energy_identity: Option<bool>,
    evi_sigma: Option<Measure1D>,
    weak_residual: Option<bool>,
    metric_derivative: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub energy_identity: bool,
    pub evi_sigma: Option<Measure1D>,
    pub weak_residual: bool,
    pub metric_derivative: bool,
}

/// Fully resolved experiment: every default is filled in.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub potential: Potential,
    pub initial: Measure1D,
    pub method: Method,
    pub tau: f64,
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub inner_tol: f64,
    pub inner_max_iters: usize,
    pub output_dir: PathBuf,
    pub diagnostics: Diagnostics,
}

pub const DEFAULT_TAU: f64 = 1e-3;
pub const DEFAULT_N: usize = 200;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_T_END: f64 = 1.0;
pub const DEFAULT_OUTPUT_DIR: &str = "wgflow_out";

impl ExperimentConfig {
    pub fn load(path: &Path, out_override: Option<&Path>) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Failure::invalid("config", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::parse(&text, out_override)
    }

    pub fn parse(text: &str, out_override: Option<&Path>) -> Result<Self, Failure> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            Failure::invalid(
                if field == "." {
                    "config".to_string()
                } else {
                    field
                },
                format!("{inner} (line {}, column {})", inner.line(), inner.column()),
            )
        })?;
        let n = raw.n.unwrap_or(DEFAULT_N);
        let diag = raw.diagnostics.unwrap_or_default();
        let cfg = ExperimentConfig {
            potential: raw.potential,
            initial: raw.initial,
            method: raw.method.unwrap_or(Method::Jko),
            tau: raw.tau.unwrap_or(DEFAULT_TAU),
            n,
            dt: raw.dt.unwrap_or(DEFAULT_DT),
            t_end: raw.t_end.unwrap_or(DEFAULT_T_END),
            inner_tol: raw.inner_tol.unwrap_or(1e-10 * n as f64),
            inner_max_iters: raw.inner_max_iters.unwrap_or(10_000),
            output_dir: out_override
                .map(Path::to_path_buf)
                .or(raw.output_dir)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
            diagnostics: Diagnostics {
                energy_identity: diag.energy_identity.unwrap_or(true),
                evi_sigma: diag.evi_sigma,
                weak_residual: diag.weak_residual.unwrap_or(true),
                metric_derivative: diag.metric_derivative.unwrap_or(true),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn jko(&self) -> JkoConfig {
        JkoConfig {
            tau: self.tau,
            n: self.n,
            inner_tol: self.inner_tol,
            inner_max_iters: self.inner_max_iters,
            t_end: self.t_end,
        }
    }

    fn validate(&self) -> Result<(), Failure> {
        if self.n == 0 {
            return Err(Failure::invalid("n", "grid size must be at least 1"));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Failure::invalid("t_end", "must be finite and nonnegative"));
        }
        match self.method {
            Method::Jko | Method::Exact => {
                if !(self.tau > 0.0) || !self.tau.is_finite() {
                    return Err(Failure::invalid("tau", "must be positive and finite"));
                }
            }
            Method::Particles => {
                if !(self.dt > 0.0) || !self.dt.is_finite() {
                    return Err(Failure::invalid("dt", "must be positive and finite"));
                }
            }
        }
        match self.method {
            Method::Jko => {
                if !(self.inner_tol > 0.0) {
                    return Err(Failure::invalid("inner_tol", "must be positive"));
                }
                if self.inner_max_iters == 0 {
                    return Err(Failure::invalid("inner_max_iters", "must be at least 1"));
                }
                self.jko().validate(&self.potential).map_err(|e| match e {
                    Error::StepRestriction { .. } => Failure::invalid("tau", e.to_string()),
                    other => Failure::invalid("potential", other.to_string()),
                })
            }
            Method::Exact => {
                let w = &self.potential;
                if w.has_smooth_part() || w.eta() == 0.0 {
                    return Err(Failure::invalid(
                        "potential",
                        "the exact method needs a pure cusp potential eta*|x| with eta != 0",
                    ));
                }
                Ok(())
            }
            Method::Particles => Ok(()),
        }
    }
}
