//! Transportation simplex with Bland's rule.

use std::collections::VecDeque;

use super::{DiscreteInstance, TransportPlan};
use crate::error::Result;

const MAX_PIVOTS: usize = 100_000;

struct Basis {
    rows: usize,
    cols: usize,
    // basic cells as (i, j)
    cells: Vec<(usize, usize)>,
    flows: Vec<f64>,
}

impl Basis {
    fn north_west(supply: &[f64], demand: &[f64]) -> Self {
        let (rows, cols) = (supply.len(), demand.len());
        let mut a = supply.to_vec();
        let mut b = demand.to_vec();
        let mut flows = vec![0.0; rows * cols];
        let mut cells = Vec::with_capacity(rows + cols - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let f = a[i].min(b[j]);
            flows[i * cols + j] = f;
            cells.push((i, j));
            if i == rows - 1 && j == cols - 1 {
                break;
            }
            let down = if i == rows - 1 {
                false
            } else if j == cols - 1 {
                true
            } else {
                a[i] <= b[j]
            };
            a[i] -= f;
            b[j] -= f;
            if down {
                i += 1;
            } else {
                j += 1;
            }
        }
        debug_assert_eq!(cells.len(), rows + cols - 1);
        Basis {
            rows,
            cols,
            cells,
            flows,
        }
    }

    // Node ids: rows are 0..rows, columns rows..rows+cols.
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.rows + self.cols];
        for &(i, j) in &self.cells {
            adj[i].push(self.rows + j);
            adj[self.rows + j].push(i);
        }
        adj
    }

    fn potentials(&self, inst: &DiscreteInstance) -> (Vec<f64>, Vec<f64>) {
        let adj = self.adjacency();
        let mut u = vec![f64::NAN; self.rows];
        let mut v = vec![f64::NAN; self.cols];
        u[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(node) = queue.pop_front() {
            for &next in &adj[node] {
                if node < self.rows {
                    let j = next - self.rows;
                    if v[j].is_nan() {
                        v[j] = inst.cost(node, j) - u[node];
                        queue.push_back(next);
                    }
                } else {
                    let j = node - self.rows;
                    if u[next].is_nan() {
                        u[next] = inst.cost(next, j) - v[j];
                        queue.push_back(next);
                    }
                }
            }
        }
        (u, v)
    }

    /// Tree path from row node `i` to column node `j`, as a list of cells.
    fn path(&self, i: usize, j: usize) -> Vec<(usize, usize)> {
        let adj = self.adjacency();
        let total = self.rows + self.cols;
        let mut parent = vec![usize::MAX; total];
        parent[i] = i;
        let mut queue = VecDeque::from([i]);
        let target = self.rows + j;
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &next in &adj[node] {
                if parent[next] == usize::MAX {
                    parent[next] = node;
                    queue.push_back(next);
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = target;
        while node != i {
            let p = parent[node];
            let cell = if node < self.rows {
                (node, p - self.rows)
            } else {
                (p, node - self.rows)
            };
            cells.push(cell);
            node = p;
        }
        // cells run from column j back to row i
        cells
    }
}

/// Optimal plan of a balanced instance.
pub fn solve_primal(inst: &DiscreteInstance) -> Result<TransportPlan> {
    let supply = inst.supply();
    let demand = inst.demand();
    let (rows, cols) = (inst.rows(), inst.cols());
    let mut basis = Basis::north_west(&supply, &demand);
    let scale = 1.0
        + (0..rows * cols)
            .map(|k| inst.cost(k / cols, k % cols).abs())
            .fold(0.0, f64::max);
    let tol = 1e-12 * scale;

    for _ in 0..MAX_PIVOTS {
        let (u, v) = basis.potentials(inst);
        let mut is_basic = vec![false; rows * cols];
        for &(i, j) in &basis.cells {
            is_basic[i * cols + j] = true;
        }
        // Bland: lowest-index improving cell enters
        let entering = (0..rows * cols).find(|&k| {
            let (i, j) = (k / cols, k % cols);
            !is_basic[k] && inst.cost(i, j) - u[i] - v[j] < -tol
        });
        let Some(k) = entering else { break };
        let (ei, ej) = (k / cols, k % cols);

        // cycle: entering (+), then alternating -,+,... along the tree path
        let path = basis.path(ei, ej);
        let minus: Vec<(usize, usize)> = path.iter().copied().step_by(2).collect();
        let theta = minus
            .iter()
            .map(|&(i, j)| basis.flows[i * cols + j])
            .fold(f64::INFINITY, f64::min);
        let leaving = minus
            .iter()
            .copied()
            .filter(|&(i, j)| basis.flows[i * cols + j] <= theta)
            .min_by_key(|&(i, j)| i * cols + j)
            .expect("cycle has a minus cell");

        basis.flows[ei * cols + ej] = theta;
        for (step, &(i, j)) in path.iter().enumerate() {
            let f = &mut basis.flows[i * cols + j];
            if step % 2 == 0 {
                *f = (*f - theta).max(0.0);
            } else {
                *f += theta;
            }
        }
        basis.flows[leaving.0 * cols + leaving.1] = 0.0;
        let pos = basis
            .cells
            .iter()
            .position(|&c| c == leaving)
            .expect("leaving cell is basic");
        basis.cells[pos] = (ei, ej);
    }

    TransportPlan::new(inst, basis.flows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::Site;

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
    fn identity_instance_has_zero_cost() {
        let s = sites(&[0.0, 1.0, 3.0], &[0.2, 0.3, 0.5]);
        let inst = DiscreteInstance::new(s.clone(), s, None).unwrap();
        let plan = solve_primal(&inst).unwrap();
        assert!(plan.objective().abs() < 1e-15);
        assert!(plan.marginal_error(&inst) < 1e-12);
    }

    #[test]
    fn two_by_two_diagonal() {
        let s = sites(&[0.0, 1.0], &[0.5, 0.5]);
        let inst = DiscreteInstance::new(s.clone(), s, None).unwrap();
        let plan = solve_primal(&inst).unwrap();
        assert_eq!(plan.objective(), 0.0);
        assert_eq!(plan.get(0, 0), 0.5);
        assert_eq!(plan.get(1, 1), 0.5);
    }

    #[test]
    fn two_by_two_swap_cost() {
        let s = sites(&[0.0, 1.0], &[0.5, 0.5]);
        let inst = DiscreteInstance::new(s.clone(), s, Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]))
            .unwrap();
        let plan = solve_primal(&inst).unwrap();
        assert_eq!(plan.objective(), 0.0);
        assert_eq!(plan.get(0, 1), 0.5);
        assert_eq!(plan.get(1, 0), 0.5);
    }

    #[test]
    fn single_source_spreads_to_all_sinks() {
        let inst = DiscreteInstance::new(
            sites(&[0.0], &[1.0]),
            sites(&[1.0, 2.0, -1.0], &[0.25, 0.25, 0.5]),
            None,
        )
        .unwrap();
        let plan = solve_primal(&inst).unwrap();
        assert!((plan.objective() - (0.25 + 1.0 + 0.5)).abs() < 1e-14);
    }

    #[test]
    fn degenerate_nw_corner_still_optimal() {
        // equal partial sums force zero-flow basic cells
        let inst = DiscreteInstance::new(
            sites(&[0.0, 1.0, 2.0, 3.0], &[0.25; 4]),
            sites(&[3.0, 2.0, 1.0, 0.0], &[0.25; 4]),
            None,
        )
        .unwrap();
        let plan = solve_primal(&inst).unwrap();
        assert!(plan.objective().abs() < 1e-14);
    }
}
