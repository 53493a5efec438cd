//! Closed-form solutions for the cusp potentials `W = ∓|η||x|` and
//! trajectory-level diagnostics (weak-form residual, metric derivative).
//!
//! Repulsive cusp: `X(t, z) = X(0, z) + |η| t (2z - 1)`.
//! Attractive cusp: the isotonic projection of `X(0, z) - |η| t (2z - 1)`,
//! computed exactly on the piecewise-affine quantile function. Mass that
//! collides sticks, and everything sits at the center of mass from the
//! collapse time on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jko::FlowTrajectory;
use crate::measures::{midpoint_node, Measure1D, QuantileGrid, QuantileSegment};
use crate::particles::ParticleState;
use crate::potential::{weighted_velocity, Potential};
use crate::transport::w2_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactKind {
    RepulsiveCuspDiffusion,
    AttractiveCuspCollapse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    kind: ExactKind,
    init: Measure1D,
    eta_abs: f64,
}

/// One block of the attractive profile on `[z0, z1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileBlock {
    /// Pooled mass sitting at one point.
    Flat { z0: f64, z1: f64, integral: f64 },
    /// Unpooled part, affine with positive slope.
    Linear {
        z0: f64,
        z1: f64,
        y0: f64,
        slope: f64,
    },
}

impl ProfileBlock {
    fn z0(&self) -> f64 {
        match *self {
            ProfileBlock::Flat { z0, .. } | ProfileBlock::Linear { z0, .. } => z0,
        }
    }

    fn z1(&self) -> f64 {
        match *self {
            ProfileBlock::Flat { z1, .. } | ProfileBlock::Linear { z1, .. } => z1,
        }
    }

    fn len(&self) -> f64 {
        self.z1() - self.z0()
    }

    fn left(&self) -> f64 {
        match *self {
            ProfileBlock::Flat { .. } => self.flat_value(),
            ProfileBlock::Linear { y0, .. } => y0,
        }
    }

    fn right(&self) -> f64 {
        match *self {
            ProfileBlock::Flat { .. } => self.flat_value(),
            ProfileBlock::Linear { y0, slope, .. } => y0 + slope * self.len(),
        }
    }

    fn flat_value(&self) -> f64 {
        match *self {
            ProfileBlock::Flat { integral, .. } => {
                let l = self.len();
                if l > 0.0 {
                    integral / l
                } else {
                    0.0
                }
            }
            ProfileBlock::Linear { .. } => unreachable!(),
        }
    }

    fn integral(&self) -> f64 {
        match *self {
            ProfileBlock::Flat { integral, .. } => integral,
            ProfileBlock::Linear { .. } => 0.5 * self.len() * (self.left() + self.right()),
        }
    }

    pub fn value_at(&self, z: f64) -> f64 {
        match *self {
            ProfileBlock::Flat { .. } => self.flat_value(),
            ProfileBlock::Linear { z0, y0, slope, .. } => y0 + slope * (z - z0),
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, ProfileBlock::Flat { .. })
    }
}

impl ExactSolution {
    pub fn new(kind: ExactKind, init: Measure1D, eta_abs: f64) -> Result<Self> {
        if !(eta_abs > 0.0) || !eta_abs.is_finite() {
            return Err(Error::domain("|eta| must be positive and finite"));
        }
        Ok(ExactSolution {
            kind,
            init,
            eta_abs,
        })
    }

    /// Exact solution for a pure cusp potential `η|x|`, `η ≠ 0`.
    pub fn for_potential(w: &Potential, init: Measure1D) -> Result<Self> {
        if w.has_smooth_part() || w.eta() == 0.0 {
            return Err(Error::domain(
                "closed-form solutions exist only for pure cusp potentials",
            ));
        }
        let kind = if w.eta() < 0.0 {
            ExactKind::RepulsiveCuspDiffusion
        } else {
            ExactKind::AttractiveCuspCollapse
        };
        ExactSolution::new(kind, init, w.eta().abs())
    }

    pub fn kind(&self) -> ExactKind {
        self.kind
    }

    pub fn init(&self) -> &Measure1D {
        &self.init
    }

    pub fn potential(&self) -> Potential {
        match self.kind {
            ExactKind::RepulsiveCuspDiffusion => Potential::cusp(-self.eta_abs),
            ExactKind::AttractiveCuspCollapse => Potential::cusp(self.eta_abs),
        }
    }

    /// Pooled profile of the attractive solution at time `t`.
    pub fn attractive_profile(&self, t: f64) -> Result<Vec<ProfileBlock>> {
        if self.kind != ExactKind::AttractiveCuspCollapse {
            return Err(Error::domain(
                "profile is defined for the attractive kind only",
            ));
        }
        if !(t >= 0.0) {
            return Err(Error::domain("time must be nonnegative"));
        }
        Ok(pool_profile(
            &self.init.quantile_segments(),
            self.eta_abs * t,
        ))
    }

    pub fn exact_quantile(&self, t: f64, z: f64) -> Result<f64> {
        if !(z > 0.0 && z < 1.0) {
            return Err(Error::domain(format!("quantile level {z} outside (0, 1)")));
        }
        if !(t >= 0.0) {
            return Err(Error::domain("time must be nonnegative"));
        }
        match self.kind {
            ExactKind::RepulsiveCuspDiffusion => {
                Ok(self.init.quantile(z)? + self.eta_abs * t * (2.0 * z - 1.0))
            }
            ExactKind::AttractiveCuspCollapse => Ok(eval_profile(&self.attractive_profile(t)?, z)),
        }
    }

    /// The exact solution sampled at midpoint nodes.
    pub fn grid(&self, t: f64, n: usize) -> Result<QuantileGrid> {
        if n == 0 {
            return Err(Error::domain("grid size must be positive"));
        }
        match self.kind {
            ExactKind::RepulsiveCuspDiffusion => {
                let g0 = self.init.to_quantile_grid(n)?;
                let values = g0
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x + self.eta_abs * t * (2.0 * midpoint_node(i + 1, n) - 1.0))
                    .collect();
                QuantileGrid::new(values)
            }
            ExactKind::AttractiveCuspCollapse => {
                let profile = self.attractive_profile(t)?;
                let values: Vec<f64> = (1..=n)
                    .map(|i| eval_profile(&profile, midpoint_node(i, n)))
                    .collect();
                // pooled values from different blocks can tie at round-off
                let mut values = values;
                for k in 1..values.len() {
                    if values[k] < values[k - 1] {
                        values[k] = values[k - 1];
                    }
                }
                QuantileGrid::new(values)
            }
        }
    }

    /// Grid trajectory at `t_k = k τ`, `k = 0..=steps`.
    pub fn trajectory(&self, tau: f64, n: usize, steps: usize) -> Result<FlowTrajectory> {
        let states = (0..=steps)
            .map(|k| self.grid(k as f64 * tau, n))
            .collect::<Result<Vec<_>>>()?;
        FlowTrajectory::from_states(&self.potential(), tau, states)
    }

    /// First time the attractive solution is a single Dirac at the center of
    /// mass: `sup_z ∫_0^z (x_c - X_0) / (|η| z (1 - z))`.
    pub fn collapse_time(&self) -> Result<f64> {
        if self.kind != ExactKind::AttractiveCuspCollapse {
            return Err(Error::domain(
                "collapse time is defined for the attractive kind only",
            ));
        }
        let segs = self.init.quantile_segments();
        let xc = self.init.mean();
        let mut best: f64 = 0.0;
        if let (Some(first), Some(last)) = (segs.first(), segs.last()) {
            // limits at z -> 0 and z -> 1
            best = best.max(xc - first.x0).max(last.x1 - xc);
        }
        // H(z) = h0 + b (z - z0) - (s/2)(z - z0)² on each segment
        let mut h0 = 0.0;
        for seg in &segs {
            let (z0, z1) = (seg.z0, seg.z1.min(1.0));
            let s = seg.slope();
            let b = xc - seg.x0;
            // global coefficients H = A z² + B z + C
            let a_c = -0.5 * s;
            let b_c = b + s * z0;
            let c_c = h0 - b * z0 - 0.5 * s * z0 * z0;
            let h = |z: f64| a_c * z * z + b_c * z + c_c;
            let ratio = |z: f64| {
                let d = z * (1.0 - z);
                if d > 0.0 {
                    h(z) / d
                } else {
                    f64::NEG_INFINITY
                }
            };
            best = best.max(ratio(z0)).max(ratio(z1));
            // stationary points of H / (z(1-z)): (A + B) z² + 2 C z - C = 0
            for z in quadratic_roots(a_c + b_c, 2.0 * c_c, -c_c) {
                if z > z0 && z < z1 {
                    best = best.max(ratio(z));
                }
            }
            h0 = h(z1);
        }
        Ok(best.max(0.0) / self.eta_abs)
    }
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a.abs() < 1e-300 {
        if b.abs() < 1e-300 {
            return vec![];
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let sq = disc.sqrt();
    vec![(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)]
}

fn eval_profile(blocks: &[ProfileBlock], z: f64) -> f64 {
    let idx = blocks.partition_point(|b| b.z1() <= z);
    match blocks.get(idx).or(blocks.last()) {
        Some(b) => b.value_at(z),
        None => 0.0,
    }
}

// Continuous pool-adjacent-violators on Y(z) = X0(z) - shift (2z - 1).
fn pool_profile(segs: &[QuantileSegment], shift: f64) -> Vec<ProfileBlock> {
    let mut stack: Vec<ProfileBlock> = Vec::with_capacity(segs.len());
    for seg in segs {
        let (z0, z1) = (seg.z0, seg.z1);
        if z1 <= z0 {
            continue;
        }
        let y0 = seg.x0 - shift * (2.0 * z0 - 1.0);
        let slope = seg.slope() - 2.0 * shift;
        let block = if slope > 0.0 {
            ProfileBlock::Linear { z0, z1, y0, slope }
        } else {
            let len = z1 - z0;
            ProfileBlock::Flat {
                z0,
                z1,
                integral: len * (y0 + 0.5 * slope * len),
            }
        };
        stack.push(block);
        resolve_violations(&mut stack);
    }
    stack
}

fn resolve_violations(stack: &mut Vec<ProfileBlock>) {
    while stack.len() >= 2 {
        let last = stack[stack.len() - 1];
        let prev = stack[stack.len() - 2];
        if prev.right() <= last.left() {
            break;
        }
        stack.truncate(stack.len() - 2);
        match (prev, last) {
            (ProfileBlock::Flat { .. }, ProfileBlock::Flat { .. }) => {
                stack.push(ProfileBlock::Flat {
                    z0: prev.z0(),
                    z1: last.z1(),
                    integral: prev.integral() + last.integral(),
                });
            }
            (ProfileBlock::Linear { slope, .. }, ProfileBlock::Flat { .. }) => {
                // pool the right end [p, z1] of the linear block into the flat one
                let (d, s_int, yr) = (last.len(), last.integral(), prev.right());
                let u = -d + (d * d - 2.0 * (s_int - yr * d) / slope).sqrt();
                if u >= prev.len() {
                    stack.push(ProfileBlock::Flat {
                        z0: prev.z0(),
                        z1: last.z1(),
                        integral: prev.integral() + s_int,
                    });
                } else {
                    let p = prev.z1() - u;
                    let yp = yr - slope * u;
                    stack.push(ProfileBlock::Linear {
                        z0: prev.z0(),
                        z1: p,
                        y0: prev.left(),
                        slope,
                    });
                    stack.push(ProfileBlock::Flat {
                        z0: p,
                        z1: last.z1(),
                        integral: s_int + 0.5 * u * (yp + yr),
                    });
                    break;
                }
            }
            (ProfileBlock::Flat { .. }, ProfileBlock::Linear { y0, slope, .. }) => {
                // pool the left end [z0, p] of the linear block into the flat one
                let (d, s_int) = (prev.len(), prev.integral());
                let u = -d + (d * d + 2.0 * (s_int - y0 * d) / slope).sqrt();
                if u >= last.len() {
                    stack.push(ProfileBlock::Flat {
                        z0: prev.z0(),
                        z1: last.z1(),
                        integral: s_int + last.integral(),
                    });
                } else {
                    let p = last.z0() + u;
                    let yp = y0 + slope * u;
                    stack.push(ProfileBlock::Flat {
                        z0: prev.z0(),
                        z1: p,
                        integral: s_int + 0.5 * u * (y0 + yp),
                    });
                    stack.push(ProfileBlock::Linear {
                        z0: p,
                        z1: last.z1(),
                        y0: yp,
                        slope,
                    });
                    break;
                }
            }
            (ProfileBlock::Linear { .. }, ProfileBlock::Linear { .. }) => {
                // quantile functions only jump upward, so this never happens
                debug_assert!(false, "downward jump between increasing blocks");
                stack.push(prev);
                stack.push(ProfileBlock::Flat {
                    z0: last.z0(),
                    z1: last.z1(),
                    integral: last.integral(),
                });
            }
        }
    }
}

/// `φ(x, t) = b((x - a)/r) b((t - c)/ρ)` with `b(u) = (1 - u²)³` on `|u| < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpTest {
    pub x_center: f64,
    pub x_radius: f64,
    pub t_center: f64,
    pub t_radius: f64,
}

fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        let v = 1.0 - u * u;
        v * v * v
    }
}

fn bump_deriv(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        let v = 1.0 - u * u;
        -6.0 * u * v * v
    }
}

impl BumpTest {
    fn xi(&self, x: f64) -> f64 {
        (x - self.x_center) / self.x_radius
    }

    fn theta(&self, t: f64) -> f64 {
        (t - self.t_center) / self.t_radius
    }

    pub fn phi(&self, x: f64, t: f64) -> f64 {
        bump(self.xi(x)) * bump(self.theta(t))
    }

    pub fn dphi_dx(&self, x: f64, t: f64) -> f64 {
        bump_deriv(self.xi(x)) / self.x_radius * bump(self.theta(t))
    }

    pub fn dphi_dt(&self, x: f64, t: f64) -> f64 {
        bump(self.xi(x)) * bump_deriv(self.theta(t)) / self.t_radius
    }
}

/// Bumps centred at a quarter, half and three quarters of `[lo, hi]`, with
/// time windows `[-T/2, T/2]`, `[0, T/2]` and `[0, T]` (all ending by `T`).
pub fn bump_library(lo: f64, hi: f64, t_end: f64) -> Vec<BumpTest> {
    let width = (hi - lo).max(1e-3);
    let mut out = Vec::new();
    for frac in [0.25, 0.5, 0.75] {
        for (c, r) in [(0.0, 0.5), (0.25, 0.25), (0.5, 0.5)] {
            out.push(BumpTest {
                x_center: lo + frac * width,
                x_radius: 0.4 * width,
                t_center: c * t_end,
                t_radius: r * t_end,
            });
        }
    }
    out
}

/// Time-indexed weighted point clouds.
#[derive(Debug, Clone)]
pub struct WeightedPath {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
}

impl WeightedPath {
    pub fn from_flow(traj: &FlowTrajectory) -> Self {
        let n = traj.grid_size();
        WeightedPath {
            times: traj.times().to_vec(),
            positions: traj.states().iter().map(|s| s.values().to_vec()).collect(),
            weights: vec![vec![1.0 / n as f64; n]; traj.states().len()],
        }
    }

    pub fn from_particles(states: &[ParticleState]) -> Self {
        WeightedPath {
            times: states.iter().map(|s| s.time()).collect(),
            positions: states.iter().map(|s| s.positions().to_vec()).collect(),
            weights: states.iter().map(|s| s.masses().to_vec()).collect(),
        }
    }
}

/// `max_φ |∫∫ (∂_t φ + v ∂_x φ) dμ_t dt + ∫ φ(·, 0) dμ_0|` with midpoint
/// quadrature between consecutive snapshots (positions interpolated linearly
/// when the particle count is unchanged) and `v` supplied by `velocity`.
pub fn weak_residual_with_velocity(
    path: &WeightedPath,
    velocity: impl Fn(&[f64], &[f64]) -> Vec<f64>,
    tests: &[BumpTest],
) -> f64 {
    let mut acc: Vec<f64> = tests
        .iter()
        .map(|phi| {
            path.positions[0]
                .iter()
                .zip(&path.weights[0])
                .map(|(x, m)| m * phi.phi(*x, 0.0))
                .sum()
        })
        .collect();
    for k in 0..path.times.len().saturating_sub(1) {
        let dt = path.times[k + 1] - path.times[k];
        if dt <= 0.0 {
            continue;
        }
        let tm = 0.5 * (path.times[k] + path.times[k + 1]);
        let (a, b) = (&path.positions[k], &path.positions[k + 1]);
        let x: Vec<f64> = if a.len() == b.len() {
            a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect()
        } else {
            a.clone()
        };
        let m = &path.weights[k];
        let v = velocity(&x, m);
        for (phi, total) in tests.iter().zip(acc.iter_mut()) {
            let s: f64 = x
                .iter()
                .zip(m)
                .zip(&v)
                .map(|((xi, mi), vi)| mi * (phi.dphi_dt(*xi, tm) + vi * phi.dphi_dx(*xi, tm)))
                .sum();
            *total += dt * s;
        }
    }
    acc.into_iter().map(f64::abs).fold(0.0, f64::max)
}

/// Weak-form residual of a grid trajectory with the velocity field of `w`.
pub fn weak_residual(traj: &FlowTrajectory, w: &Potential, tests: &[BumpTest]) -> f64 {
    weak_residual_with_velocity(
        &WeightedPath::from_flow(traj),
        |x, m| weighted_velocity(w, x, m),
        tests,
    )
}

pub fn weak_residual_particles(states: &[ParticleState], w: &Potential, tests: &[BumpTest]) -> f64 {
    weak_residual_with_velocity(
        &WeightedPath::from_particles(states),
        |x, m| weighted_velocity(w, x, m),
        tests,
    )
}

/// Per step `W2(μ_k, μ_{k+1}) / τ`.
pub fn metric_derivative_estimate(traj: &FlowTrajectory) -> Result<Vec<f64>> {
    if traj.states().len() < 2 {
        return Err(Error::domain("metric derivative needs at least two states"));
    }
    traj.states()
        .windows(2)
        .map(|p| w2_quantile(&p[0], &p[1]).map(|d| d / traj.tau()))
        .collect()
}
