//! Dual potentials recovered from an optimal plan by complementary slackness.

use std::collections::VecDeque;

use super::{DiscreteInstance, TransportPlan};
use crate::error::{Error, Result};

/// Flow below this is treated as outside the support.
const SUPPORT_TOL: f64 = 1e-13;
/// Allowed violation of `u_i + v_j <= c_ij`.
pub const DUAL_FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub objective: f64,
}

impl DualSolution {
    pub fn new(inst: &DiscreteInstance, u: Vec<f64>, v: Vec<f64>) -> Self {
        let objective = inst
            .supply()
            .iter()
            .zip(&u)
            .map(|(p, a)| p * a)
            .sum::<f64>()
            + inst
                .demand()
                .iter()
                .zip(&v)
                .map(|(q, b)| q * b)
                .sum::<f64>();
        DualSolution { u, v, objective }
    }

    /// `max(u_i + v_j - c_ij)`, nonpositive when feasible.
    pub fn max_violation(&self, inst: &DiscreteInstance) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (i, ui) in self.u.iter().enumerate() {
            for (j, vj) in self.v.iter().enumerate() {
                worst = worst.max(ui + vj - inst.cost(i, j));
            }
        }
        worst
    }
}

/// Dual certificate for an optimal `plan`.
///
/// Potentials satisfy `u_i + v_j = c_ij` on the support of the plan. When the
/// support graph falls apart into several components each component is
/// shifted independently; the shifts solve the difference constraints between
/// components by Bellman-Ford, which yields the tightest feasible choice.
/// Shifting a component leaves the objective unchanged because every support
/// component carries equal supply and demand.
pub fn solve_dual(inst: &DiscreteInstance, plan: &TransportPlan) -> Result<DualSolution> {
    let (rows, cols) = (inst.rows(), inst.cols());
    if plan.shape() != (rows, cols) {
        return Err(Error::domain("plan shape does not match instance"));
    }
    let total = rows + cols;
    let mut adj = vec![Vec::new(); total];
    for i in 0..rows {
        for j in 0..cols {
            if plan.get(i, j) > SUPPORT_TOL {
                adj[i].push(rows + j);
                adj[rows + j].push(i);
            }
        }
    }

    // potentials per component, rooted at the first node found
    let mut pot = vec![f64::NAN; total];
    let mut comp = vec![usize::MAX; total];
    let mut ncomp = 0;
    for root in 0..total {
        if comp[root] != usize::MAX {
            continue;
        }
        pot[root] = 0.0;
        comp[root] = ncomp;
        let mut queue = VecDeque::from([root]);
        while let Some(node) = queue.pop_front() {
            for &next in &adj[node] {
                if comp[next] != usize::MAX {
                    continue;
                }
                comp[next] = ncomp;
                let (i, j) = if node < rows {
                    (node, next - rows)
                } else {
                    (next, node - rows)
                };
                pot[next] = inst.cost(i, j) - pot[node];
                queue.push_back(next);
            }
        }
        ncomp += 1;
    }

    // shift[c] is added to rows and subtracted from columns of component c:
    // shift[a] - shift[b] <= c_ij - u_i - v_j for i in a, j in b.
    let mut bound = vec![vec![f64::INFINITY; ncomp]; ncomp];
    for i in 0..rows {
        for j in 0..cols {
            let (a, b) = (comp[i], comp[rows + j]);
            if a != b {
                let slack = inst.cost(i, j) - pot[i] - pot[rows + j];
                bound[a][b] = bound[a][b].min(slack);
            }
        }
    }
    let mut shift = vec![0.0; ncomp];
    for _ in 0..ncomp {
        let mut changed = false;
        for a in 0..ncomp {
            for b in 0..ncomp {
                let w = bound[a][b];
                if w.is_finite() && shift[b] + w < shift[a] {
                    shift[a] = shift[b] + w;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let u: Vec<f64> = (0..rows).map(|i| pot[i] + shift[comp[i]]).collect();
    let v: Vec<f64> = (0..cols)
        .map(|j| pot[rows + j] - shift[comp[rows + j]])
        .collect();
    let dual = DualSolution::new(inst, u, v);
    let violation = dual.max_violation(inst);
    if violation > DUAL_FEAS_TOL {
        return Err(Error::DualInfeasible { violation });
    }
    Ok(dual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{solve_primal, Site};

    fn sites(points: &[f64], masses: &[f64]) -> Vec<Site> {
        points
            .iter()
            .zip(masses)
            .map(|(&x, &m)| Site {
                point: vec![x],
                mass: m,
            })
            .collect()
    }

    #[test]
    fn identity_instance_dual_is_zero() {
        let s = sites(&[0.0, 2.0], &[0.5, 0.5]);
        let inst = DiscreteInstance::new(s.clone(), s, None).unwrap();
        let plan = solve_primal(&inst).unwrap();
        let dual = solve_dual(&inst, &plan).unwrap();
        assert_eq!(dual.objective, 0.0);
        assert!(dual.max_violation(&inst) <= 0.0);
    }

    #[test]
    fn dirac_to_dirac_dual_objective() {
        let inst =
            DiscreteInstance::new(sites(&[0.0], &[1.0]), sites(&[1.0], &[1.0]), None).unwrap();
        let plan = solve_primal(&inst).unwrap();
        let dual = solve_dual(&inst, &plan).unwrap();
        assert!((dual.objective - 1.0).abs() < 1e-15);
    }

    #[test]
    fn disconnected_support_gets_feasible_shift() {
        // block-diagonal optimum: two support components
        let inst = DiscreteInstance::new(
            sites(&[0.0, 10.0], &[0.5, 0.5]),
            sites(&[0.5, 10.5], &[0.5, 0.5]),
            None,
        )
        .unwrap();
        let plan = solve_primal(&inst).unwrap();
        let dual = solve_dual(&inst, &plan).unwrap();
        assert!((dual.objective - plan.objective()).abs() < 1e-12);
        assert!(dual.max_violation(&inst) <= DUAL_FEAS_TOL);
    }

    #[test]
    fn non_optimal_plan_is_detected() {
        let s = sites(&[0.0, 1.0], &[0.5, 0.5]);
        let inst = DiscreteInstance::new(s.clone(), s, None).unwrap();
        let crossed = TransportPlan::new(&inst, vec![0.0, 0.5, 0.5, 0.0]).unwrap();
        assert!(matches!(
            solve_dual(&inst, &crossed),
            Err(Error::DualInfeasible { .. })
        ));
    }
}
