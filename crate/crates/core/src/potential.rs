//! Even interaction potentials `W(x) = η|x| + (β/2)x² + Σ c_k |x|^{p_k}` and the
//! interaction energy they induce on quantile grids.
//!
//! The split `W = W̄ + η|x|` isolates the only non-differentiable term. On the
//! cone of nondecreasing grids the cusp energy is the linear form
//! `η/n² Σ (2i - n - 1) X_i`, which is what [`energy_subgradient`] returns for
//! the cusp part. [`velocity_field`] instead integrates over `y ≠ x` and so
//! ignores tied values; the two agree exactly when the grid is strictly
//! increasing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::QuantileGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPotential", into = "RawPotential")]
pub struct Potential {
    eta: f64,
    beta: f64,
    terms: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct RawPotential {
    #[serde(default)]
    eta: f64,
    #[serde(default)]
    beta: f64,
    #[serde(default)]
    terms: Vec<(f64, f64)>,
}

impl TryFrom<RawPotential> for Potential {
    type Error = Error;

    fn try_from(raw: RawPotential) -> Result<Self> {
        Potential::new(raw.eta, raw.beta, raw.terms)
    }
}

impl From<Potential> for RawPotential {
    fn from(w: Potential) -> Self {
        RawPotential {
            eta: w.eta,
            beta: w.beta,
            terms: w.terms,
        }
    }
}

impl Potential {
    /// `terms` holds `(c_k, p_k)` pairs with `p_k > 1`.
    pub fn new(eta: f64, beta: f64, terms: Vec<(f64, f64)>) -> Result<Self> {
        if !eta.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidPotential(
                "eta and beta must be finite".into(),
            ));
        }
        for &(c, p) in &terms {
            if !c.is_finite() || !p.is_finite() {
                return Err(Error::InvalidPotential(format!(
                    "non-finite term ({c}, {p})"
                )));
            }
            if p <= 1.0 {
                return Err(Error::InvalidPotential(format!(
                    "power {p} must exceed 1 for the smooth part to be C1"
                )));
            }
        }
        Ok(Potential { eta, beta, terms })
    }

    /// `η|x|`
    pub fn cusp(eta: f64) -> Self {
        Potential {
            eta,
            beta: 0.0,
            terms: vec![],
        }
    }

    /// `(β/2) x²`
    pub fn quadratic(beta: f64) -> Self {
        Potential {
            eta: 0.0,
            beta,
            terms: vec![],
        }
    }

    pub fn power(c: f64, p: f64) -> Result<Self> {
        Potential::new(0.0, 0.0, vec![(c, p)])
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn terms(&self) -> &[(f64, f64)] {
        &self.terms
    }

    pub fn eval(&self, x: f64) -> f64 {
        let a = x.abs();
        self.eta * a + self.eval_smooth(x)
    }

    /// `W̄(x) = W(x) - η|x|`.
    pub fn eval_smooth(&self, x: f64) -> f64 {
        let a = x.abs();
        let mut w = 0.5 * self.beta * a * a;
        for &(c, p) in &self.terms {
            w += c * a.powf(p);
        }
        w
    }

    /// `W̄'(x)`, zero at the origin.
    pub fn deriv_smooth(&self, x: f64) -> f64 {
        let mut d = self.beta * x;
        if x != 0.0 {
            let a = x.abs();
            for &(c, p) in &self.terms {
                d += c * p * a.powf(p - 1.0) * x.signum();
            }
        }
        d
    }

    /// `W̄''(x)` for `x ≠ 0`.
    pub fn second_deriv_smooth(&self, x: f64) -> f64 {
        let a = x.abs();
        let mut d = self.beta;
        for &(c, p) in &self.terms {
            d += c * p * (p - 1.0) * a.powf(p - 2.0);
        }
        d
    }

    /// `W̄' + η sign`, with `sign(0) = 0`.
    pub fn force(&self, x: f64) -> f64 {
        self.deriv_smooth(x) + self.eta * sign(x)
    }

    pub fn has_smooth_part(&self) -> bool {
        self.beta != 0.0 || self.terms.iter().any(|t| t.0 != 0.0)
    }

    /// True when some power exceeds 2, which breaks the quadratic growth bound.
    pub fn grows_faster_than_quadratic(&self) -> bool {
        self.terms.iter().any(|&(c, p)| c != 0.0 && p > 2.0)
    }

    pub fn jko_eligible(&self) -> bool {
        !self.grows_faster_than_quadratic()
    }

    /// Closed-form constants making `W + (λ''/2)x² + λ'|x|` convex on `[-R, R]`.
    pub fn certificate(&self, radius: f64) -> Result<ConvexityCertificate> {
        if !(radius > 0.0) {
            return Err(Error::domain("certificate radius must be positive"));
        }
        let mut lambda_second = (-self.beta).max(0.0);
        for &(c, p) in &self.terms {
            if c < 0.0 {
                if p < 2.0 {
                    return Err(Error::InvalidPotential(format!(
                        "term {c}|x|^{p} is not semiconvex at the origin"
                    )));
                }
                lambda_second += -c * p * (p - 1.0) * radius.powf(p - 2.0);
            }
        }
        let lambda_prime = (-self.eta).max(0.0);
        Ok(ConvexityCertificate {
            lambda_prime,
            lambda_second,
            lambda_minus: lambda_prime.max(lambda_second).max(0.0),
            radius,
        })
    }

    /// Upper bound on `|W̄''|` over `[-R, R]`, ignoring the singular part of
    /// powers below 2.
    pub fn curvature_bound(&self, radius: f64) -> f64 {
        let mut b = self.beta.abs();
        for &(c, p) in &self.terms {
            if p >= 2.0 {
                b += c.abs() * p * (p - 1.0) * radius.max(1e-300).powf(p - 2.0);
            }
        }
        b
    }

    /// Convexity modulus used by the evolution variational inequality. The
    /// cusp term is affine on the monotone cone; repulsive cusps and concave
    /// smooth parts lower it.
    pub fn evi_modulus(&self) -> f64 {
        let second = self
            .certificate(1.0)
            .map(|c| c.lambda_second)
            .unwrap_or(f64::INFINITY);
        self.eta.min(0.0) - second
    }
}

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityCertificate {
    pub lambda_prime: f64,
    pub lambda_second: f64,
    pub lambda_minus: f64,
    pub radius: f64,
}

impl ConvexityCertificate {
    /// Midpoint convexity of `W + (λ''/2)x² + λ'|x|` on `samples` equispaced
    /// points of `[-R, R]`, checked on all pairs.
    pub fn verify(&self, w: &Potential, samples: usize) -> bool {
        let h = |x: f64| w.eval(x) + 0.5 * self.lambda_second * x * x + self.lambda_prime * x.abs();
        let xs: Vec<f64> = (0..samples)
            .map(|k| -self.radius + 2.0 * self.radius * k as f64 / (samples - 1).max(1) as f64)
            .collect();
        for (a_idx, &a) in xs.iter().enumerate() {
            for &b in &xs[a_idx + 1..] {
                let mid = h(0.5 * (a + b));
                let chord = 0.5 * (h(a) + h(b));
                if mid > chord + 1e-12 * (1.0 + chord.abs()) {
                    return false;
                }
            }
        }
        true
    }
}

/// `(1/(2n²)) Σ_{i,j} W(X_i - X_j)`.
pub fn interaction_energy(w: &Potential, g: &QuantileGrid) -> f64 {
    let x = g.values();
    let n = x.len();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| x[i + 1..].iter().map(|&xj| w.eval(xj - x[i])).sum::<f64>())
        .collect();
    rows.iter().sum::<f64>() / (n * n) as f64
}

/// Cusp part `(η/(2n²)) Σ_{i,j} |X_i - X_j|`, evaluated directly.
pub fn cusp_energy(eta: f64, g: &QuantileGrid) -> f64 {
    let x = g.values();
    let n = x.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            acc += (x[j] - x[i]).abs();
        }
    }
    eta * acc / (n * n) as f64
}

/// The gradient of [`interaction_energy`] restricted to the monotone cone.
///
/// Component `i` is `(1/n²) [Σ_j W̄'(X_i - X_j) + η (2i - n - 1)]` with
/// 1-based `i`: ties in value are ordered by index.
pub fn energy_subgradient(w: &Potential, g: &QuantileGrid) -> Vec<f64> {
    let x = g.values();
    let n = x.len();
    let nf = n as f64;
    let smooth = w.has_smooth_part();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = w.eta * (2.0 * i as f64 + 1.0 - nf);
            if smooth {
                s += x.iter().map(|&xj| w.deriv_smooth(x[i] - xj)).sum::<f64>();
            }
            s / (nf * nf)
        })
        .collect()
}

/// Velocity `-Σ_{j: x_j ≠ x_i} m_j [W̄'(x_i - x_j) + η sign(x_i - x_j)]` of
/// weighted points; coincident points exert no force on each other.
pub fn weighted_velocity(w: &Potential, positions: &[f64], weights: &[f64]) -> Vec<f64> {
    debug_assert_eq!(positions.len(), weights.len());
    (0..positions.len())
        .into_par_iter()
        .map(|i| {
            let xi = positions[i];
            -positions
                .iter()
                .zip(weights)
                .filter(|(&xj, _)| xj != xi)
                .map(|(&xj, &mj)| mj * w.force(xi - xj))
                .sum::<f64>()
        })
        .collect()
}

/// `v_i = -k(X_i)` for equal weights `1/n`.
pub fn velocity_field(w: &Potential, g: &QuantileGrid, i: usize) -> f64 {
    let x = g.values();
    let xi = x[i];
    let sum: f64 = x
        .iter()
        .filter(|&&xj| xj != xi)
        .map(|&xj| w.force(xi - xj))
        .sum();
    -sum / g.n() as f64
}

pub fn velocity_field_all(w: &Potential, g: &QuantileGrid) -> Vec<f64> {
    let n = g.n();
    weighted_velocity(w, g.values(), &vec![1.0 / n as f64; n])
}
