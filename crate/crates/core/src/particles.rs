//! Finite particle systems `ẋ_i = -Σ_{j ∈ C(i)} m_j W'(x_i - x_j)`, where
//! `C(i)` excludes particles sitting at the same point as `i`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::measures::{fmt_f64, Measure1D, MASS_TOL};
use crate::potential::{weighted_velocity, Potential};

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    positions: Vec<f64>,
    masses: Vec<f64>,
    time: f64,
}

impl ParticleState {
    /// Particles are stored sorted by position.
    pub fn new(positions: Vec<f64>, masses: Vec<f64>, time: f64) -> Result<Self> {
        if positions.len() != masses.len() || positions.is_empty() {
            return Err(Error::domain(
                "positions and masses must be nonempty and equal in length",
            ));
        }
        if positions.iter().chain(&masses).any(|v| !v.is_finite()) || !time.is_finite() {
            return Err(Error::domain("particle data must be finite"));
        }
        if masses.iter().any(|&m| m <= 0.0) {
            return Err(Error::domain("particle masses must be positive"));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::domain(format!(
                "particle masses sum to {total}, not 1"
            )));
        }
        if !(time >= 0.0) {
            return Err(Error::domain("time must be nonnegative"));
        }
        let mut pairs: Vec<(f64, f64)> = positions.into_iter().zip(masses).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (positions, masses) = pairs.into_iter().unzip();
        Ok(ParticleState {
            positions,
            masses,
            time,
        })
    }

    /// Atoms of a measure; uniform pieces are first sampled on an `n`-point
    /// quantile grid.
    pub fn from_measure(m: &Measure1D, n: usize) -> Result<Self> {
        let atomic = if m.is_atomic() {
            m.clone()
        } else {
            Measure1D::from_quantile_grid(&m.to_quantile_grid(n)?)
        };
        let (x, w) = atomic.atoms().iter().copied().unzip();
        ParticleState::new(x, w, 0.0)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn center_of_mass(&self) -> f64 {
        self.positions
            .iter()
            .zip(&self.masses)
            .map(|(x, m)| x * m)
            .sum()
    }

    pub fn to_measure(&self) -> Measure1D {
        let atoms = self
            .positions
            .iter()
            .copied()
            .zip(self.masses.iter().copied())
            .collect();
        Measure1D::new(atoms, vec![]).expect("particle state is a probability measure")
    }

    /// `½ Σ_{i,j} m_i m_j W(x_i - x_j)`.
    pub fn energy(&self, w: &Potential) -> f64 {
        let (x, m) = (&self.positions, &self.masses);
        let mut e = 0.0;
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                e += m[i] * m[j] * w.eval(x[i] - x[j]);
            }
        }
        e
    }
}

pub fn ode_rhs(w: &Potential, st: &ParticleState) -> Vec<f64> {
    weighted_velocity(w, &st.positions, &st.masses)
}

/// Forward Euler with exact collision location.
///
/// When an adjacent gap would close within a substep, the step is cut at the
/// first contact. Contacts with a non-separating limit velocity are merged
/// into one particle carrying the summed mass at the momentum-preserving
/// position. Particles that start coincident stay together, since the
/// right-hand side excludes ties.
pub fn integrate(
    w: &Potential,
    st0: &ParticleState,
    t_end: f64,
    dt: f64,
) -> Result<Vec<ParticleState>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::domain(format!("dt = {dt} must be positive")));
    }
    let mut st = st0.clone();
    let mut out = vec![st.clone()];
    let eps_t = 1e-12 * t_end.abs().max(1.0);
    while st.time < t_end - eps_t {
        let h = dt.min(t_end - st.time);
        let v = ode_rhs(w, &st);
        let x = &st.positions;

        let mut hit = h;
        let mut closing_pairs = Vec::new();
        for k in 0..x.len().saturating_sub(1) {
            let gap = x[k + 1] - x[k];
            let closing = v[k] - v[k + 1];
            if gap > 0.0 && closing > 0.0 {
                let tc = gap / closing;
                closing_pairs.push((k, tc));
                hit = hit.min(tc);
            }
        }
        let contacts: Vec<usize> = closing_pairs
            .iter()
            .filter(|(_, tc)| *tc <= hit * (1.0 + 1e-9))
            .map(|(k, _)| *k)
            .collect();

        let mut next: Vec<f64> = x.iter().zip(&v).map(|(xi, vi)| xi + hit * vi).collect();
        st.time += hit;
        for &k in &contacts {
            let (m0, m1) = (st.masses[k], st.masses[k + 1]);
            let c = (m0 * next[k] + m1 * next[k + 1]) / (m0 + m1);
            next[k] = c;
            next[k + 1] = c;
        }
        for k in 0..next.len().saturating_sub(1) {
            let gap = next[k + 1] - next[k];
            if gap < -1e-12 * (1.0 + next[k].abs()) {
                return Err(Error::OrderViolation {
                    time: st.time,
                    left: k,
                    right: k + 1,
                    gap,
                });
            }
            if gap < 0.0 {
                next[k + 1] = next[k];
            }
        }
        st.positions = next;
        if !contacts.is_empty() {
            merge_contacts(w, &mut st, &contacts);
        }
        out.push(st.clone());
    }
    Ok(out)
}

// Merge touching pairs whose limit closing rate at contact is nonnegative.
// Just before contact the pair force is W̄'(0) ∓ η, so the closing rate of the
// pair at contact is η (m_k + m_{k+1}).
fn merge_contacts(w: &Potential, st: &mut ParticleState, contacts: &[usize]) {
    let merge: Vec<bool> = {
        let mut flags = vec![false; st.len()];
        for &k in contacts {
            let rate = w.eta() * (st.masses[k] + st.masses[k + 1]);
            if rate >= 0.0 {
                flags[k] = true;
            }
        }
        flags
    };
    let mut positions = Vec::with_capacity(st.len());
    let mut masses = Vec::with_capacity(st.len());
    let mut k = 0;
    while k < st.len() {
        let mut mass = st.masses[k];
        let mut moment = st.masses[k] * st.positions[k];
        while k < st.len() - 1 && merge[k] {
            k += 1;
            mass += st.masses[k];
            moment += st.masses[k] * st.positions[k];
        }
        positions.push(moment / mass);
        masses.push(mass);
        k += 1;
    }
    st.positions = positions;
    st.masses = masses;
}

/// Explicit solutions from a single Dirac at `x0` under `W = -|x|`, evaluated
/// at time `t`: stationary, symmetric pair, three particles with a stationary
/// middle one, and a pair that starts splitting at `onset`.
pub fn nonuniqueness_branches(x0: f64, t: f64, onset: f64) -> Result<Vec<ParticleState>> {
    if !(t >= 0.0) || !(onset > 0.0) {
        return Err(Error::domain("need t >= 0 and onset > 0"));
    }
    let third = 1.0 / 3.0;
    let delayed = (t - onset).max(0.0) / 2.0;
    Ok(vec![
        ParticleState::new(vec![x0], vec![1.0], t)?,
        ParticleState::new(vec![x0 - t / 2.0, x0 + t / 2.0], vec![0.5, 0.5], t)?,
        ParticleState::new(
            vec![x0 - 2.0 * t / 3.0, x0, x0 + 2.0 * t / 3.0],
            vec![third, third, 1.0 - 2.0 * third],
            t,
        )?,
        ParticleState::new(vec![x0 - delayed, x0 + delayed], vec![0.5, 0.5], t)?,
    ])
}

/// CSV with columns `t,i,x_i,m_i` (1-based `i`).
pub fn trajectory_csv(states: &[ParticleState]) -> String {
    let mut out = String::from("t,i,x_i,m_i\n");
    for st in states {
        for (i, (x, m)) in st.positions.iter().zip(&st.masses).enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                fmt_f64(st.time),
                i + 1,
                fmt_f64(*x),
                fmt_f64(*m)
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(a: f64, b: f64) -> ParticleState {
        ParticleState::new(vec![a, b], vec![0.5, 0.5], 0.0).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let single = ParticleState::new(vec![2.0], vec![1.0], 0.0).unwrap();
        assert_eq!(ode_rhs(&Potential::cusp(1.0), &single), vec![0.0]);
        let d = 0.6;
        assert_eq!(
            ode_rhs(&Potential::cusp(1.0), &pair(-d / 2.0, d / 2.0)),
            vec![0.5, -0.5]
        );
        let tied = ParticleState::new(vec![1.0; 4], vec![0.25; 4], 0.0).unwrap();
        assert!(ode_rhs(&Potential::cusp(-1.0), &tied)
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn attractive_pair_merges_at_two() {
        let w = Potential::cusp(1.0);
        let dt = 1e-3;
        let traj = integrate(&w, &pair(-1.0, 1.0), 3.0, dt).unwrap();
        let merged = traj.iter().find(|s| s.len() == 1).unwrap();
        assert!((merged.time() - 2.0).abs() <= dt);
        assert!(merged.positions()[0].abs() < 1e-12);
        assert_eq!(merged.masses(), &[1.0]);
        let last = traj.last().unwrap();
        assert!((last.time() - 3.0).abs() < 1e-12);
        assert!(last.positions()[0].abs() < 1e-12);
    }

    #[test]
    fn repulsive_pair_separates_linearly() {
        let w = Potential::cusp(-1.0);
        let x0 = 0.3;
        let traj = integrate(&w, &pair(x0 - 1.0, x0 + 1.0), 2.0, 0.01).unwrap();
        for st in traj.iter().step_by(37) {
            let t = st.time();
            assert!((st.positions()[0] - (x0 - 1.0 - t / 2.0)).abs() < 1e-12);
            assert!((st.positions()[1] - (x0 + 1.0 + t / 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_potential_is_static() {
        let w = Potential::new(0.0, 0.0, vec![]).unwrap();
        let st = ParticleState::new(vec![-1.0, 0.2, 3.0], vec![0.2, 0.3, 0.5], 0.0).unwrap();
        let traj = integrate(&w, &st, 1.0, 0.1).unwrap();
        assert!(traj.iter().all(|s| s.positions() == st.positions()));
    }

    #[test]
    fn rejects_nonpositive_dt() {
        let st = pair(0.0, 1.0);
        for dt in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                integrate(&Potential::cusp(1.0), &st, 1.0, dt),
                Err(Error::Domain(_))
            ));
        }
    }

    #[test]
    fn coincident_repulsive_particles_stay_put() {
        let w = Potential::cusp(-1.0);
        let st = ParticleState::new(vec![0.0; 3], vec![0.2, 0.3, 0.5], 0.0).unwrap();
        let traj = integrate(&w, &st, 1.0, 0.1).unwrap();
        assert!(traj.iter().all(|s| s.positions().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn branches_at_time_zero_coincide() {
        for st in nonuniqueness_branches(1.5, 0.0, 0.3).unwrap() {
            assert!(st.positions().iter().all(|&x| x == 1.5));
        }
    }

    #[test]
    fn branch_values() {
        let b = nonuniqueness_branches(0.0, 2.0, 0.5).unwrap();
        assert_eq!(b[1].positions(), &[-1.0, 1.0]);
        let b = nonuniqueness_branches(0.0, 3.0, 0.5).unwrap();
        assert_eq!(b[2].positions(), &[-2.0, 0.0, 2.0]);
        assert_eq!(b[3].positions(), &[-1.25, 1.25]);
    }

    #[test]
    fn branches_solve_the_ode() {
        let w = Potential::cusp(-1.0);
        let (x0, onset, h) = (0.7, 0.4, 1e-3);
        for t in [0.5, 1.0, 2.5] {
            let now = nonuniqueness_branches(x0, t, onset).unwrap();
            let later = nonuniqueness_branches(x0, t + h, onset).unwrap();
            for (a, b) in now.iter().zip(&later) {
                let rhs = ode_rhs(&w, a);
                for ((xa, xb), r) in a.positions().iter().zip(b.positions()).zip(&rhs) {
                    assert!(((xb - xa) / h - r).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn three_particle_attractive_merges() {
        let w = Potential::cusp(1.0);
        let st = ParticleState::new(vec![-1.0, 0.0, 2.0], vec![1.0 / 3.0; 3], 0.0).unwrap();
        let traj = integrate(&w, &st, 5.0, 0.01).unwrap();
        let c0 = st.center_of_mass();
        for s in &traj {
            assert!((s.center_of_mass() - c0).abs() < 1e-12);
        }
        assert_eq!(traj.last().unwrap().len(), 1);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let traj = vec![pair(0.0, 1.0)];
        let csv = trajectory_csv(&traj);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("t,i,x_i,m_i\n"));
    }
}
