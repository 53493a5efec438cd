//! Optimal transport: exact W2 on the line through quantile functions, and the
//! finite Kantorovich primal/dual pair.

mod dual;
mod simplex;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{eval_segments, fmt_f64, Measure1D, QuantileGrid, MASS_TOL};

pub use dual::{solve_dual, DualSolution};
pub use simplex::solve_primal;

/// Discrete W2 between two grids of equal size, the midpoint rule for
/// `(∫_0^1 |X1 - X2|² ds)^(1/2)`.
pub fn w2_quantile(g1: &QuantileGrid, g2: &QuantileGrid) -> Result<f64> {
    Ok(w2_squared_quantile(g1, g2)?.sqrt())
}

pub fn w2_squared_quantile(g1: &QuantileGrid, g2: &QuantileGrid) -> Result<f64> {
    if g1.n() != g2.n() {
        return Err(Error::domain(format!(
            "grid sizes differ: {} vs {}",
            g1.n(),
            g2.n()
        )));
    }
    let sum: f64 = g1
        .values()
        .iter()
        .zip(g2.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / g1.n() as f64)
}

/// Exact W2 between two measures. Both quantile functions are affine between
/// the merged mass breakpoints, so each piece of the integral is closed form.
pub fn w2_exact_discrete(m1: &Measure1D, m2: &Measure1D) -> f64 {
    w2_squared_exact(m1, m2).sqrt()
}

pub fn w2_squared_exact(m1: &Measure1D, m2: &Measure1D) -> f64 {
    let s1 = m1.quantile_segments();
    let s2 = m2.quantile_segments();
    let mut breaks: Vec<f64> = s1
        .iter()
        .chain(&s2)
        .flat_map(|s| [s.z0, s.z1])
        .filter(|z| *z > 0.0 && *z < 1.0)
        .collect();
    breaks.push(0.0);
    breaks.push(1.0);
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup();

    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let mid = 0.5 * (a + b);
        let d = |s: f64| affine_at(&s1, mid, s) - affine_at(&s2, mid, s);
        let (da, db) = (d(a), d(b));
        total += (b - a) * (da * da + da * db + db * db) / 3.0;
    }
    total
}

// Value at `s` of the affine piece that contains `mid`.
fn affine_at(segs: &[crate::measures::QuantileSegment], mid: f64, s: f64) -> f64 {
    let idx = segs.partition_point(|seg| seg.z1 <= mid);
    match segs.get(idx) {
        Some(seg) => seg.x0 + (s - seg.z0) * seg.slope(),
        None => eval_segments(segs, mid),
    }
}

/// A weighted point of a discrete measure in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub point: Vec<f64>,
    pub mass: f64,
}

/// A balanced transportation problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawInstance")]
pub struct DiscreteInstance {
    sources: Vec<Site>,
    sinks: Vec<Site>,
    cost: Vec<f64>,
}

#[derive(Deserialize)]
struct RawInstance {
    sources: Vec<Site>,
    sinks: Vec<Site>,
    #[serde(default)]
    cost: Option<Vec<Vec<f64>>>,
}

impl TryFrom<RawInstance> for DiscreteInstance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        DiscreteInstance::new(raw.sources, raw.sinks, raw.cost)
    }
}

impl DiscreteInstance {
    /// `cost = None` selects the squared Euclidean distance.
    pub fn new(sources: Vec<Site>, sinks: Vec<Site>, cost: Option<Vec<Vec<f64>>>) -> Result<Self> {
        if sources.is_empty() || sinks.is_empty() {
            return Err(Error::domain(
                "instance needs at least one source and one sink",
            ));
        }
        for s in sources.iter().chain(&sinks) {
            if !(s.mass > 0.0) || !s.mass.is_finite() {
                return Err(Error::domain(format!(
                    "site mass {} must be positive",
                    s.mass
                )));
            }
        }
        let ps: f64 = sources.iter().map(|s| s.mass).sum();
        let qs: f64 = sinks.iter().map(|s| s.mass).sum();
        if (ps - 1.0).abs() > MASS_TOL || (qs - 1.0).abs() > MASS_TOL {
            return Err(Error::Unbalanced {
                sources: ps,
                sinks: qs,
            });
        }
        let (m, n) = (sources.len(), sinks.len());
        let cost = match cost {
            Some(rows) => {
                if rows.len() != m || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::domain(format!("cost matrix must be {m}x{n}")));
                }
                rows.into_iter().flatten().collect()
            }
            None => {
                let d = sources[0].point.len();
                if sources.iter().chain(&sinks).any(|s| s.point.len() != d) {
                    return Err(Error::domain("all points must share one dimension"));
                }
                let mut c = Vec::with_capacity(m * n);
                for s in &sources {
                    for t in &sinks {
                        c.push(
                            s.point
                                .iter()
                                .zip(&t.point)
                                .map(|(a, b)| (a - b) * (a - b))
                                .sum(),
                        );
                    }
                }
                c
            }
        };
        if cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("cost entries must be finite"));
        }
        Ok(DiscreteInstance {
            sources,
            sinks,
            cost,
        })
    }

    /// Instance between two atomic measures on the line, squared cost.
    pub fn from_atomic(m1: &Measure1D, m2: &Measure1D) -> Result<Self> {
        if !m1.is_atomic() || !m2.is_atomic() {
            return Err(Error::domain("both measures must be purely atomic"));
        }
        let sites = |m: &Measure1D| {
            m.atoms()
                .iter()
                .map(|&(x, w)| Site {
                    point: vec![x],
                    mass: w,
                })
                .collect()
        };
        DiscreteInstance::new(sites(m1), sites(m2), None)
    }

    pub fn rows(&self) -> usize {
        self.sources.len()
    }

    pub fn cols(&self) -> usize {
        self.sinks.len()
    }

    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.cols() + j]
    }

    pub fn supply(&self) -> Vec<f64> {
        self.sources.iter().map(|s| s.mass).collect()
    }

    pub fn demand(&self) -> Vec<f64> {
        self.sinks.iter().map(|s| s.mass).collect()
    }

    pub fn sources(&self) -> &[Site] {
        &self.sources
    }

    pub fn sinks(&self) -> &[Site] {
        &self.sinks
    }
}

/// A coupling with prescribed marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    flows: Vec<f64>,
    objective: f64,
}

impl TransportPlan {
    pub fn new(inst: &DiscreteInstance, flows: Vec<f64>) -> Result<Self> {
        let (rows, cols) = (inst.rows(), inst.cols());
        if flows.len() != rows * cols {
            return Err(Error::domain("plan shape does not match instance"));
        }
        if flows.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::domain("plan entries must be nonnegative"));
        }
        let objective = flows
            .iter()
            .enumerate()
            .map(|(k, x)| x * inst.cost(k / cols, k % cols))
            .sum();
        Ok(TransportPlan {
            rows,
            cols,
            flows,
            objective,
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.flows[i * self.cols + j]
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.flows
            .chunks(self.cols)
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).sum())
            .collect()
    }

    /// Largest marginal violation against the instance.
    pub fn marginal_error(&self, inst: &DiscreteInstance) -> f64 {
        let r = self
            .row_sums()
            .iter()
            .zip(inst.supply())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let c = self
            .col_sums()
            .iter()
            .zip(inst.demand())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        r.max(c)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.flows.chunks(self.cols) {
            let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(m: &Measure1D, n: usize) -> QuantileGrid {
        m.to_quantile_grid(n).unwrap()
    }

    #[test]
    fn w2_between_constant_grids() {
        let g1 = QuantileGrid::constant(1.5, 7).unwrap();
        let g2 = QuantileGrid::constant(-0.25, 7).unwrap();
        assert!((w2_quantile(&g1, &g2).unwrap() - 1.75).abs() < 1e-15);
        assert_eq!(w2_quantile(&g1, &g1).unwrap(), 0.0);
    }

    #[test]
    fn w2_dirac_vs_uniform_grid() {
        let d = grid(&Measure1D::dirac(0.0), 200);
        let u = grid(&Measure1D::uniform(-1.0, 1.0).unwrap(), 200);
        assert!((w2_quantile(&d, &u).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn w2_quantile_rejects_mismatched_sizes() {
        let g1 = QuantileGrid::constant(0.0, 3).unwrap();
        let g2 = QuantileGrid::constant(0.0, 4).unwrap();
        assert!(matches!(w2_quantile(&g1, &g2), Err(Error::Domain(_))));
    }

    #[test]
    fn w2_exact_examples() {
        let d0 = Measure1D::dirac(0.0);
        assert!((w2_exact_discrete(&d0, &Measure1D::dirac(1.0)) - 1.0).abs() < 1e-15);
        for t in [0.5, 1.0, 3.0] {
            let u = Measure1D::uniform(-t, t).unwrap();
            let w = w2_exact_discrete(&d0, &u);
            assert!((w - t / 3f64.sqrt()).abs() < 1e-14, "{w}");
        }
        let m = Measure1D::atomic(&[(0.0, 0.5), (1.0, 0.5)]).unwrap();
        assert_eq!(w2_exact_discrete(&m, &m), 0.0);
    }

    #[test]
    fn w2_exact_shifted_uniforms() {
        let a = Measure1D::uniform(0.0, 1.0).unwrap();
        let b = Measure1D::uniform(2.0, 3.0).unwrap();
        assert!((w2_exact_discrete(&a, &b) - 2.0).abs() < 1e-14);
        // uniform(0,1) vs uniform(0,2): ∫ (s - 2s)² ds = 1/3
        let c = Measure1D::uniform(0.0, 2.0).unwrap();
        assert!((w2_squared_exact(&a, &c) - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn instance_validation() {
        let site = |x: f64, m: f64| Site {
            point: vec![x],
            mass: m,
        };
        let err = DiscreteInstance::new(vec![site(0.0, 0.6)], vec![site(1.0, 1.0)], None);
        assert!(matches!(err, Err(Error::Unbalanced { .. })));
        let err = DiscreteInstance::new(
            vec![site(0.0, 1.0)],
            vec![site(1.0, 1.0)],
            Some(vec![vec![1.0, 2.0]]),
        );
        assert!(matches!(err, Err(Error::Domain(_))));
        let ok = DiscreteInstance::new(vec![site(0.0, 1.0)], vec![site(2.0, 1.0)], None).unwrap();
        assert_eq!(ok.cost(0, 0), 4.0);
    }

    #[test]
    fn instance_from_json() {
        let inst: DiscreteInstance = serde_json::from_str(
            r#"{"sources":[{"point":[0.0],"mass":0.5},{"point":[1.0],"mass":0.5}],
                "sinks":[{"point":[0.0],"mass":0.5},{"point":[1.0],"mass":0.5}],
                "cost":[[1,0],[0,1]]}"#,
        )
        .unwrap();
        assert_eq!(inst.cost(0, 0), 1.0);
        assert_eq!(inst.cost(0, 1), 0.0);
    }
}
