//! Minimizing movements in quantile coordinates.
//!
//! Each step solves
//!
//! ```text
//! min over nondecreasing X of  (1/2τ) ‖X - X_prev‖² + W[X]
//! ```
//!
//! with `‖·‖` the discrete `L²(0,1)` norm. Because the cusp part of the energy
//! is linear on the monotone cone, the objective is smooth there and a
//! projected gradient method with isotonic projection solves it. For pure cusp
//! potentials the first projected step is already the exact minimizer.

mod isotonic;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{fmt_f64, Measure1D, QuantileGrid};
use crate::potential::{energy_subgradient, interaction_energy, Potential};
use crate::transport::w2_squared_quantile;

pub use isotonic::isotonic_project;

/// Largest admissible value of `τ λ⁻`.
pub const STEP_RESTRICTION: f64 = 1.0 / 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JkoConfig {
    pub tau: f64,
    pub n: usize,
    pub inner_tol: f64,
    pub inner_max_iters: usize,
    pub t_end: f64,
}

impl JkoConfig {
    /// Defaults: `inner_tol = 1e-10 n`, `inner_max_iters = 10_000`.
    pub fn new(tau: f64, n: usize, t_end: f64) -> Self {
        JkoConfig {
            tau,
            n,
            inner_tol: 1e-10 * n as f64,
            inner_max_iters: 10_000,
            t_end,
        }
    }

    pub fn validate(&self, w: &Potential) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::domain(format!(
                "tau = {} must be positive",
                self.tau
            )));
        }
        if self.n == 0 {
            return Err(Error::domain("grid size n must be positive"));
        }
        if !(self.inner_tol > 0.0) {
            return Err(Error::domain("inner_tol must be positive"));
        }
        if self.inner_max_iters == 0 {
            return Err(Error::domain("inner_max_iters must be at least 1"));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::domain("t_end must be finite and nonnegative"));
        }
        if !w.jko_eligible() {
            return Err(Error::InvalidPotential(
                "powers above 2 violate the quadratic growth bound required by the scheme".into(),
            ));
        }
        let lambda_minus = w.certificate(1.0)?.lambda_minus;
        let value = 12.0 * self.tau * lambda_minus;
        if value > 1.0 {
            return Err(Error::StepRestriction {
                tau: self.tau,
                lambda_minus,
                value,
            });
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        let r = self.t_end / self.tau;
        if (r - r.round()).abs() < 1e-9 {
            r.round() as usize
        } else {
            r.ceil() as usize
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: QuantileGrid,
    pub iterations: usize,
    pub residual: f64,
}

fn sq_norm(d: &[f64]) -> f64 {
    d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64
}

/// One minimizing-movement step from `prev`.
pub fn jko_step(w: &Potential, prev: &QuantileGrid, cfg: &JkoConfig) -> Result<QuantileGrid> {
    jko_step_detailed(w, prev, cfg).map(|o| o.state)
}

pub fn jko_step_detailed(
    w: &Potential,
    prev: &QuantileGrid,
    cfg: &JkoConfig,
) -> Result<StepOutcome> {
    cfg.validate(w)?;
    let p = prev.values();
    let n = p.len();
    let nf = n as f64;
    let tau = cfg.tau;

    let spread = (p[n - 1] - p[0]).max(1.0);
    let alpha0 = 1.0 / (1.0 / tau + w.curvature_bound(2.0 * spread));

    let objective = |x: &QuantileGrid| {
        let d: Vec<f64> = x.values().iter().zip(p).map(|(a, b)| a - b).collect();
        sq_norm(&d) / (2.0 * tau) + interaction_energy(w, x)
    };
    let gradient = |x: &QuantileGrid| -> Vec<f64> {
        let g = energy_subgradient(w, x);
        x.values()
            .iter()
            .zip(p)
            .zip(&g)
            .map(|((xi, pi), gi)| (xi - pi) / tau + nf * gi)
            .collect()
    };
    let descend = |x: &QuantileGrid, grad: &[f64], a: f64| {
        let y: Vec<f64> = x
            .values()
            .iter()
            .zip(grad)
            .map(|(xi, gi)| xi - a * gi)
            .collect();
        isotonic_project(&y)
    };
    let prox_residual = |x: &QuantileGrid, trial: &QuantileGrid| {
        let d: Vec<f64> = x
            .values()
            .iter()
            .zip(trial.values())
            .map(|(a, b)| a - b)
            .collect();
        sq_norm(&d).sqrt() / alpha0
    };

    let mut x = prev.clone();
    let mut fx = objective(&x);
    let f_start = fx;
    let mut residual = f64::INFINITY;
    for iter in 0..cfg.inner_max_iters {
        let grad = gradient(&x);
        let trial = descend(&x, &grad, alpha0);
        residual = prox_residual(&x, &trial);
        if residual <= cfg.inner_tol {
            debug_assert!(fx <= f_start + 1e-12 * (1.0 + f_start.abs()));
            return Ok(StepOutcome {
                state: x,
                iterations: iter,
                residual,
            });
        }
        // Armijo backtracking on the projected step
        let mut a = alpha0;
        let mut y = trial;
        let mut fy;
        loop {
            fy = objective(&y);
            let d: Vec<f64> = y
                .values()
                .iter()
                .zip(x.values())
                .map(|(a, b)| a - b)
                .collect();
            let lin = d.iter().zip(&grad).map(|(di, gi)| di * gi).sum::<f64>() / nf;
            let model = fx + lin + sq_norm(&d) / (2.0 * a);
            // objective values carry round-off of order eps |F|; tolerate it so
            // the iteration keeps contracting near the minimizer
            if fy <= model + 1e-13 * (1.0 + fx.abs()) || a < 1e-12 * alpha0 {
                break;
            }
            a *= 0.5;
            y = descend(&x, &grad, a);
        }
        if fy > fx + 1e-13 * (1.0 + fx.abs()) {
            // no descent possible at machine precision
            break;
        }
        x = y;
        fx = fy;
    }
    let grad = gradient(&x);
    let trial = descend(&x, &grad, alpha0);
    let final_residual = prox_residual(&x, &trial);
    if final_residual <= cfg.inner_tol {
        return Ok(StepOutcome {
            state: x,
            iterations: cfg.inner_max_iters,
            residual: final_residual,
        });
    }
    Err(Error::NoConvergence {
        step: None,
        iters: cfg.inner_max_iters,
        residual: residual.min(final_residual),
        last: Box::new(x),
    })
}

/// Discrete solution: grid states at `t_k = k τ` with per-step diagnostics.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    tau: f64,
    times: Vec<f64>,
    states: Vec<QuantileGrid>,
    energies: Vec<f64>,
    step_costs: Vec<f64>,
}

impl FlowTrajectory {
    /// Builds a trajectory from states at `k τ`, computing energies and step
    /// costs `W2²(μ_k, μ_{k+1}) / 2τ`.
    pub fn from_states(w: &Potential, tau: f64, states: Vec<QuantileGrid>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::domain("trajectory needs at least one state"));
        }
        let n = states[0].n();
        if states.iter().any(|s| s.n() != n) {
            return Err(Error::domain("all states must share one grid size"));
        }
        let times = (0..states.len()).map(|k| k as f64 * tau).collect();
        let energies = states.iter().map(|s| interaction_energy(w, s)).collect();
        let step_costs = states
            .windows(2)
            .map(|p| w2_squared_quantile(&p[0], &p[1]).map(|d| d / (2.0 * tau)))
            .collect::<Result<_>>()?;
        Ok(FlowTrajectory {
            tau,
            times,
            states,
            energies,
            step_costs,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[QuantileGrid] {
        &self.states
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn step_costs(&self) -> &[f64] {
        &self.step_costs
    }

    pub fn grid_size(&self) -> usize {
        self.states[0].n()
    }

    pub fn final_state(&self) -> &QuantileGrid {
        self.states.last().expect("nonempty trajectory")
    }

    /// Largest `|mean(X_k) - mean(X_0)|`.
    pub fn center_of_mass_drift(&self) -> f64 {
        let m0 = self.states[0].mean();
        self.states
            .iter()
            .map(|s| (s.mean() - m0).abs())
            .fold(0.0, f64::max)
    }

    /// CSV with columns `t,i,s_i,X_i` (1-based `i`).
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("t,i,s_i,X_i\n");
        for (t, g) in self.times.iter().zip(&self.states) {
            for (i, x) in g.values().iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    fmt_f64(*t),
                    i + 1,
                    fmt_f64(g.node(i)),
                    fmt_f64(*x)
                );
            }
        }
        out
    }

    /// CSV with columns `t,energy,step_cost`; the cost on row `k` is that of
    /// the step arriving at `t_k` (zero on the first row).
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("t,energy,step_cost\n");
        for (k, (t, e)) in self.times.iter().zip(&self.energies).enumerate() {
            let c = if k == 0 { 0.0 } else { self.step_costs[k - 1] };
            let _ = writeln!(out, "{},{},{}", fmt_f64(*t), fmt_f64(*e), fmt_f64(c));
        }
        out
    }
}

/// Iterates [`jko_step`] from the quantile grid of `init` up to `t_end`.
pub fn run_flow(w: &Potential, init: &Measure1D, cfg: &JkoConfig) -> Result<FlowTrajectory> {
    cfg.validate(w)?;
    let mut states = Vec::with_capacity(cfg.steps() + 1);
    states.push(init.to_quantile_grid(cfg.n)?);
    for k in 0..cfg.steps() {
        let next = jko_step(w, &states[k], cfg).map_err(|e| match e {
            Error::NoConvergence {
                iters,
                residual,
                last,
                ..
            } => Error::NoConvergence {
                step: Some(k),
                iters,
                residual,
                last,
            },
            other => other,
        })?;
        states.push(next);
    }
    FlowTrajectory::from_states(w, cfg.tau, states)
}

/// Per-step residual of the evolution variational inequality against `sigma`:
///
/// `[W2²(μ_{k+1},σ) - W2²(μ_k,σ)]/2τ + (λ/2) W2²(μ_{k+1},σ) - (W[σ] - W[μ_{k+1}])`
///
/// with `λ` from [`Potential::evi_modulus`]. Nonpositive up to `O(τ)`.
pub fn evi_residual(
    w: &Potential,
    traj: &FlowTrajectory,
    sigma: &QuantileGrid,
) -> Result<Vec<f64>> {
    if sigma.n() != traj.grid_size() {
        return Err(Error::domain(format!(
            "reference grid has size {}, trajectory {}",
            sigma.n(),
            traj.grid_size()
        )));
    }
    let lambda = w.evi_modulus();
    let e_sigma = interaction_energy(w, sigma);
    let dists = traj
        .states
        .iter()
        .map(|s| w2_squared_quantile(s, sigma))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..traj.states.len() - 1)
        .map(|k| {
            (dists[k + 1] - dists[k]) / (2.0 * traj.tau) + 0.5 * lambda * dists[k + 1]
                - (e_sigma - traj.energies[k + 1])
        })
        .collect())
}

/// `|Σ_k 2·step_cost_k - (W[μ_0] - W[μ_K])|`.
pub fn energy_identity_residual(w: &Potential, traj: &FlowTrajectory) -> f64 {
    let dissipated: f64 = traj.step_costs.iter().map(|c| 2.0 * c).sum();
    let drop = interaction_energy(w, &traj.states[0]) - interaction_energy(w, traj.final_state());
    (dissipated - drop).abs()
}
