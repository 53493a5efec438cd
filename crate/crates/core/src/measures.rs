//! Probability measures on the real line and their monotone rearrangements.
//!
//! A [`Measure1D`] is a finite mixture of Dirac atoms and uniform pieces. Its
//! quantile function `X(s) = inf { x : M(x) > s }` is piecewise affine in `s`,
//! which is what makes exact 1D transport computations possible. A
//! [`QuantileGrid`] samples that function at the midpoint nodes
//! `s_i = (i - 1/2) / n` and is the state variable of every flow in this crate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a measure.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure", into = "RawMeasure")]
pub struct Measure1D {
    atoms: Vec<(f64, f64)>,
    pieces: Vec<(f64, f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct RawMeasure {
    #[serde(default)]
    atoms: Vec<(f64, f64)>,
    #[serde(default)]
    pieces: Vec<(f64, f64, f64)>,
}

impl TryFrom<RawMeasure> for Measure1D {
    type Error = Error;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        Measure1D::new(raw.atoms, raw.pieces)
    }
}

impl From<Measure1D> for RawMeasure {
    fn from(m: Measure1D) -> Self {
        RawMeasure {
            atoms: m.atoms,
            pieces: m.pieces,
        }
    }
}

/// One affine piece of a quantile function: on `[z0, z1)` the quantile runs
/// linearly from `x0` to `x1`. Atoms give `x0 == x1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileSegment {
    pub z0: f64,
    pub z1: f64,
    pub x0: f64,
    pub x1: f64,
}

impl QuantileSegment {
    pub fn at(&self, s: f64) -> f64 {
        let w = self.z1 - self.z0;
        if w <= 0.0 || self.x0 == self.x1 {
            return self.x0;
        }
        self.x0 + (s - self.z0) / w * (self.x1 - self.x0)
    }

    pub fn slope(&self) -> f64 {
        let w = self.z1 - self.z0;
        if w <= 0.0 {
            0.0
        } else {
            (self.x1 - self.x0) / w
        }
    }
}

impl Measure1D {
    /// Builds a measure from `(position, mass)` atoms and `(left, right, mass)`
    /// uniform pieces. Atoms and pieces may overlap.
    pub fn new(atoms: Vec<(f64, f64)>, pieces: Vec<(f64, f64, f64)>) -> Result<Self> {
        for &(x, m) in &atoms {
            if !x.is_finite() || !m.is_finite() {
                return Err(Error::InvalidMeasure(format!("non-finite atom ({x}, {m})")));
            }
            if m <= 0.0 || m > 1.0 + MASS_TOL {
                return Err(Error::InvalidMeasure(format!(
                    "atom mass {m} outside (0, 1]"
                )));
            }
        }
        for &(l, r, m) in &pieces {
            if !(l.is_finite() && r.is_finite() && m.is_finite()) {
                return Err(Error::InvalidMeasure(format!(
                    "non-finite piece ({l}, {r}, {m})"
                )));
            }
            if l >= r {
                return Err(Error::InvalidMeasure(format!(
                    "piece with left {l} >= right {r}"
                )));
            }
            if m <= 0.0 {
                return Err(Error::InvalidMeasure(format!("piece mass {m} <= 0")));
            }
        }
        let total: f64 =
            atoms.iter().map(|a| a.1).sum::<f64>() + pieces.iter().map(|p| p.2).sum::<f64>();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!(
                "total mass {total} differs from 1"
            )));
        }
        Ok(Measure1D { atoms, pieces })
    }

    pub fn dirac(x: f64) -> Self {
        Measure1D {
            atoms: vec![(x, 1.0)],
            pieces: vec![],
        }
    }

    pub fn uniform(left: f64, right: f64) -> Result<Self> {
        Measure1D::new(vec![], vec![(left, right, 1.0)])
    }

    pub fn atomic(atoms: &[(f64, f64)]) -> Result<Self> {
        Measure1D::new(atoms.to_vec(), vec![])
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn pieces(&self) -> &[(f64, f64, f64)] {
        &self.pieces
    }

    pub fn is_atomic(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Smallest closed interval containing the support.
    pub fn support(&self) -> (f64, f64) {
        let lo = self
            .atoms
            .iter()
            .map(|a| a.0)
            .chain(self.pieces.iter().map(|p| p.0))
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .atoms
            .iter()
            .map(|a| a.0)
            .chain(self.pieces.iter().map(|p| p.1))
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// `mu((-inf, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &(a, m) in &self.atoms {
            if a <= x {
                acc += m;
            }
        }
        for &(l, r, m) in &self.pieces {
            let frac = ((x - l) / (r - l)).clamp(0.0, 1.0);
            acc += frac * m;
        }
        acc.clamp(0.0, 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(x, m)| m * x).sum::<f64>()
            + self
                .pieces
                .iter()
                .map(|&(l, r, m)| m * 0.5 * (l + r))
                .sum::<f64>()
    }

    /// Exact second moment `∫ x² dμ`.
    pub fn second_moment(&self) -> f64 {
        self.atoms.iter().map(|&(x, m)| m * x * x).sum::<f64>()
            + self
                .pieces
                .iter()
                .map(|&(l, r, m)| m * (l * l + l * r + r * r) / 3.0)
                .sum::<f64>()
    }

    /// The quantile function as contiguous affine segments covering `[0, 1]`.
    pub fn quantile_segments(&self) -> Vec<QuantileSegment> {
        let mut breaks: Vec<f64> = self
            .atoms
            .iter()
            .map(|a| a.0)
            .chain(self.pieces.iter().flat_map(|p| [p.0, p.1]))
            .collect();
        breaks.sort_by(|a, b| a.total_cmp(b));
        breaks.dedup();

        let mut segs = Vec::with_capacity(2 * breaks.len());
        let mut z = 0.0;
        for (b, &xb) in breaks.iter().enumerate() {
            let atom_mass: f64 = self.atoms.iter().filter(|a| a.0 == xb).map(|a| a.1).sum();
            if atom_mass > 0.0 {
                segs.push(QuantileSegment {
                    z0: z,
                    z1: z + atom_mass,
                    x0: xb,
                    x1: xb,
                });
                z += atom_mass;
            }
            if let Some(&xn) = breaks.get(b + 1) {
                let density: f64 = self
                    .pieces
                    .iter()
                    .filter(|p| p.0 <= xb && p.1 >= xn)
                    .map(|p| p.2 / (p.1 - p.0))
                    .sum();
                let mass = density * (xn - xb);
                if mass > 0.0 {
                    segs.push(QuantileSegment {
                        z0: z,
                        z1: z + mass,
                        x0: xb,
                        x1: xn,
                    });
                    z += mass;
                }
            }
        }
        segs
    }

    /// `X(s) = inf { x : M(x) > s }` for `s` in `(0, 1)`.
    pub fn quantile(&self, s: f64) -> Result<f64> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::domain(format!("quantile level {s} outside (0, 1)")));
        }
        Ok(eval_segments(&self.quantile_segments(), s))
    }

    pub fn to_quantile_grid(&self, n: usize) -> Result<QuantileGrid> {
        if n == 0 {
            return Err(Error::domain("grid size must be positive"));
        }
        let segs = self.quantile_segments();
        let values = (1..=n)
            .map(|i| eval_segments(&segs, midpoint_node(i, n)))
            .collect();
        Ok(QuantileGrid { values })
    }

    /// Equal mass `1/n` on each grid value; exactly equal values merge into
    /// one atom.
    pub fn from_quantile_grid(g: &QuantileGrid) -> Self {
        let n = g.n();
        let mut atoms: Vec<(f64, f64)> = Vec::new();
        let mut i = 0;
        while i < n {
            let x = g.values[i];
            let mut k = 1;
            while i + k < n && g.values[i + k] == x {
                k += 1;
            }
            atoms.push((x, k as f64 / n as f64));
            i += k;
        }
        Measure1D {
            atoms,
            pieces: vec![],
        }
    }
}

/// `s_i = (i - 1/2) / n` for `i = 1..=n`.
pub fn midpoint_node(i: usize, n: usize) -> f64 {
    (i as f64 - 0.5) / n as f64
}

pub(crate) fn eval_segments(segs: &[QuantileSegment], s: f64) -> f64 {
    let idx = segs.partition_point(|seg| seg.z1 <= s);
    match segs.get(idx) {
        Some(seg) => seg.at(s.max(seg.z0)),
        None => segs.last().map(|seg| seg.x1).unwrap_or(0.0),
    }
}

/// Monotone rearrangement sampled at midpoint nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileGrid {
    values: Vec<f64>,
}

impl QuantileGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid("empty grid".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite value {v}")));
        }
        if let Some(i) = values.windows(2).position(|w| w[0] > w[1]) {
            return Err(Error::InvalidGrid(format!(
                "values decrease at index {i}: {} > {}",
                values[i],
                values[i + 1]
            )));
        }
        Ok(QuantileGrid { values })
    }

    /// Caller guarantees monotonicity (e.g. output of an isotonic projection).
    pub(crate) fn from_sorted(values: Vec<f64>) -> Self {
        debug_assert!(values.windows(2).all(|w| w[0] <= w[1]));
        QuantileGrid { values }
    }

    pub fn constant(x: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("grid size must be positive"));
        }
        Ok(QuantileGrid { values: vec![x; n] })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn node(&self, i: usize) -> f64 {
        midpoint_node(i + 1, self.n())
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.n() as f64
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.values.windows(2).all(|w| w[0] < w[1])
    }

    /// Midpoint rule for `∫_0^1 f(X(s)) ds = ∫ f dμ`.
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.values.iter().map(|&x| f(x)).sum::<f64>() / self.n() as f64
    }

    pub fn translate(&self, c: f64) -> Self {
        QuantileGrid {
            values: self.values.iter().map(|x| x + c).collect(),
        }
    }

    /// `(1 - theta) * self + theta * other`; stays monotone for theta in [0, 1].
    pub fn interpolate(&self, other: &QuantileGrid, theta: f64) -> Result<Self> {
        if self.n() != other.n() {
            return Err(Error::domain(format!(
                "grid sizes differ: {} vs {}",
                self.n(),
                other.n()
            )));
        }
        let values: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (1.0 - theta) * a + theta * b)
            .collect();
        QuantileGrid::new(values)
    }

    /// Single CSV column with header `x`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x\n");
        for v in &self.values {
            let _ = writeln!(out, "{}", fmt_f64(*v));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut values = Vec::new();
        if let Some(first) = lines.next() {
            if let Ok(v) = first.trim().parse::<f64>() {
                values.push(v);
            }
        }
        for (k, line) in lines.enumerate() {
            let v = line
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidGrid(format!("line {}: {e}", k + 2)))?;
            values.push(v);
        }
        QuantileGrid::new(values)
    }
}

/// Locale-free float formatting with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
