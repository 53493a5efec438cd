use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};
use wgflow::analytic::{
    bump_library, metric_derivative_estimate, weak_residual, weak_residual_particles, ExactSolution,
};
use wgflow::jko::{energy_identity_residual, evi_residual, run_flow, FlowTrajectory};
use wgflow::measures::fmt_f64;
use wgflow::particles::{self, integrate, ParticleState};
use wgflow::transport::{solve_dual, solve_primal, w2_exact_discrete, DiscreteInstance};
use wgflow::Measure1D;

use crate::config::{ExperimentConfig, Method};
use crate::failure::Failure;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Runs one experiment and writes trajectory, summary and manifest files.
pub fn run(cfg: &ExperimentConfig, seed: u64) -> Result<String, Failure> {
    let (trajectory, summary, diagnostics) = match cfg.method {
        Method::Jko => {
            let traj = run_flow(&cfg.potential, &cfg.initial, &cfg.jko())?;
            flow_outputs(cfg, &traj)?
        }
        Method::Exact => {
            let exact = ExactSolution::for_potential(&cfg.potential, cfg.initial.clone())?;
            let traj = exact.trajectory(cfg.tau, cfg.n, cfg.jko().steps())?;
            flow_outputs(cfg, &traj)?
        }
        Method::Particles => particle_outputs(cfg)?,
    };
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join(TRAJECTORY_FILE), trajectory)?;
    fs::write(cfg.output_dir.join(SUMMARY_FILE), summary)?;
    let manifest = json!({
        "config": cfg,
        "seed": seed,
        "outputs": {
            "trajectory": TRAJECTORY_FILE,
            "summary": SUMMARY_FILE,
        },
        "diagnostics": diagnostics,
    });
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Runtime(e.to_string()))?;
    fs::write(cfg.output_dir.join(MANIFEST_FILE), text + "\n")?;
    let final_energy = diagnostics
        .get("final_energy")
        .cloned()
        .unwrap_or(Value::Null);
    Ok(format!(
        "wrote {} (final energy {final_energy})",
        cfg.output_dir.display()
    ))
}

fn flow_outputs(
    cfg: &ExperimentConfig,
    traj: &FlowTrajectory,
) -> Result<(String, String, Map<String, Value>), Failure> {
    let w = &cfg.potential;
    let d = &cfg.diagnostics;
    let steps = traj.states().len() - 1;
    let speeds = if d.metric_derivative && steps > 0 {
        Some(metric_derivative_estimate(traj)?)
    } else {
        None
    };
    let evi = match &d.evi_sigma {
        Some(sigma) if steps > 0 => Some(evi_residual(w, traj, &sigma.to_quantile_grid(cfg.n)?)?),
        _ => None,
    };

    let mut summary = String::from("t,energy,step_cost");
    if speeds.is_some() {
        summary.push_str(",metric_derivative");
    }
    if evi.is_some() {
        summary.push_str(",evi_residual");
    }
    summary.push('\n');
    for (k, (t, e)) in traj.times().iter().zip(traj.energies()).enumerate() {
        let cost = if k == 0 {
            0.0
        } else {
            traj.step_costs()[k - 1]
        };
        let _ = write!(summary, "{},{},{}", fmt_f64(*t), fmt_f64(*e), fmt_f64(cost));
        for column in [&speeds, &evi].into_iter().flatten() {
            summary.push(',');
            if k > 0 {
                summary.push_str(&fmt_f64(column[k - 1]));
            }
        }
        summary.push('\n');
    }

    let mut diag = Map::new();
    diag.insert("steps".into(), json!(steps));
    diag.insert("final_time".into(), json!(traj.times()[steps]));
    diag.insert("final_energy".into(), json!(traj.energies()[steps]));
    diag.insert(
        "center_of_mass_drift".into(),
        json!(traj.center_of_mass_drift()),
    );
    diag.insert(
        "energy_identity_residual".into(),
        if d.energy_identity {
            json!(energy_identity_residual(w, traj))
        } else {
            Value::Null
        },
    );
    diag.insert(
        "evi_max_residual".into(),
        evi.as_ref()
            .map(|r| json!(r.iter().cloned().fold(f64::NEG_INFINITY, f64::max)))
            .unwrap_or(Value::Null),
    );
    diag.insert(
        "metric_derivative_mean".into(),
        speeds
            .as_ref()
            .map(|s| json!(s.iter().sum::<f64>() / s.len() as f64))
            .unwrap_or(Value::Null),
    );
    let weak = if d.weak_residual && steps > 0 {
        let n = traj.grid_size();
        let lo = traj
            .states()
            .iter()
            .map(|s| s.values()[0])
            .fold(f64::INFINITY, f64::min);
        let hi = traj
            .states()
            .iter()
            .map(|s| s.values()[n - 1])
            .fold(f64::NEG_INFINITY, f64::max);
        json!(weak_residual(
            traj,
            w,
            &bump_library(lo, hi, traj.times()[steps])
        ))
    } else {
        Value::Null
    };
    diag.insert("weak_residual".into(), weak);
    Ok((traj.trajectory_csv(), summary, diag))
}

fn particle_outputs(
    cfg: &ExperimentConfig,
) -> Result<(String, String, Map<String, Value>), Failure> {
    let w = &cfg.potential;
    let st0 = ParticleState::from_measure(&cfg.initial, cfg.n)?;
    let states = integrate(w, &st0, cfg.t_end, cfg.dt)?;
    let measures: Vec<Measure1D> = states.iter().map(ParticleState::to_measure).collect();
    let speeds: Option<Vec<f64>> = cfg.diagnostics.metric_derivative.then(|| {
        states
            .windows(2)
            .zip(measures.windows(2))
            .map(|(s, m)| w2_exact_discrete(&m[0], &m[1]) / (s[1].time() - s[0].time()))
            .collect()
    });

    let mut summary = String::from("t,energy,particles");
    if speeds.is_some() {
        summary.push_str(",metric_derivative");
    }
    summary.push('\n');
    for (k, st) in states.iter().enumerate() {
        let _ = write!(
            summary,
            "{},{},{}",
            fmt_f64(st.time()),
            fmt_f64(st.energy(w)),
            st.len()
        );
        if let Some(s) = &speeds {
            summary.push(',');
            if k > 0 {
                summary.push_str(&fmt_f64(s[k - 1]));
            }
        }
        summary.push('\n');
    }

    let last = states.last().expect("integrator returns the initial state");
    let com0 = st0.center_of_mass();
    let drift = states
        .iter()
        .map(|s| (s.center_of_mass() - com0).abs())
        .fold(0.0, f64::max);
    let mut diag = Map::new();
    diag.insert("steps".into(), json!(states.len() - 1));
    diag.insert("final_time".into(), json!(last.time()));
    diag.insert("final_energy".into(), json!(last.energy(w)));
    diag.insert("final_particles".into(), json!(last.len()));
    diag.insert("center_of_mass_drift".into(), json!(drift));
    // the energy identity and EVI are statements about the JKO scheme
    diag.insert("energy_identity_residual".into(), Value::Null);
    diag.insert("evi_max_residual".into(), Value::Null);
    diag.insert(
        "metric_derivative_mean".into(),
        speeds
            .as_ref()
            .filter(|s| !s.is_empty())
            .map(|s| json!(s.iter().sum::<f64>() / s.len() as f64))
            .unwrap_or(Value::Null),
    );
    let weak = if cfg.diagnostics.weak_residual && states.len() > 1 {
        let lo = states
            .iter()
            .map(|s| s.positions()[0])
            .fold(f64::INFINITY, f64::min);
        let hi = states
            .iter()
            .map(|s| s.positions()[s.len() - 1])
            .fold(f64::NEG_INFINITY, f64::max);
        json!(weak_residual_particles(
            &states,
            w,
            &bump_library(lo, hi, last.time())
        ))
    } else {
        Value::Null
    };
    diag.insert("weak_residual".into(), weak);
    Ok((particles::trajectory_csv(&states), summary, diag))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, field: &str) -> Result<T, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::invalid(field, format!("cannot read {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        Failure::invalid(
            field,
            format!("{} at {at}: {}", path.display(), e.into_inner()),
        )
    })
}

/// `v` with 12 significant digits.
pub fn fmt_sig12(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v:.11}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // rounding can carry into a new leading digit, e.g. 9.99..→10.0
    let reparsed: f64 = s.parse().unwrap_or(v);
    if reparsed.abs() >= 10f64.powi(magnitude + 1) && decimals > 0 {
        let d = decimals - 1;
        format!("{v:.d$}")
    } else {
        s
    }
}

pub fn w2(a: &Path, b: &Path) -> Result<String, Failure> {
    let ma: Measure1D = read_json(a, "measure_a")?;
    let mb: Measure1D = read_json(b, "measure_b")?;
    Ok(fmt_sig12(w2_exact_discrete(&ma, &mb)))
}

/// Solves the instance; optionally writes the plan as a CSV matrix.
pub fn ot(instance: &Path, plan_out: Option<&Path>) -> Result<String, Failure> {
    let inst: DiscreteInstance = read_json(instance, "instance")?;
    let plan = solve_primal(&inst)?;
    let dual = solve_dual(&inst, &plan)?;
    if let Some(path) = plan_out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, plan.to_csv())?;
    }
    let (p, d) = (plan.objective(), dual.objective);
    Ok(format!(
        "primal {}\ndual {}\ngap {}",
        fmt_f64(p),
        fmt_f64(d),
        fmt_f64((p - d).abs())
    ))
}
