use super::Landscape1D;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Minimum,
    Saddle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub x: f64,
    pub kind: CriticalKind,
}

/// Interleaved minima and separating local maxima `m_1 < s_1 < ... < m_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointSet {
    minima: Vec<f64>,
    saddles: Vec<f64>,
    radius: f64,
}

/// Result of locating a point among the attraction fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    /// Zero-based field index `i` with `x` in `(s_{i-1}, s_i)`.
    Inside(usize),
    /// `x` equals the zero-based saddle `s_j` exactly.
    Saddle(usize),
}

impl Field {
    pub fn index(self) -> Option<usize> {
        match self {
            Field::Inside(i) => Some(i),
            Field::Saddle(_) => None,
        }
    }
}

/// An attraction field `(lower, upper)` around one minimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttractionField {
    pub index: usize,
    pub minimum: f64,
    /// `-inf` for the leftmost field.
    pub lower: f64,
    /// `+inf` for the rightmost field.
    pub upper: f64,
}

impl AttractionField {
    /// Distance from the minimum to the nearest separating saddle.
    pub fn width(&self) -> f64 {
        (self.minimum - self.lower).min(self.upper - self.minimum)
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }
}

impl CriticalPointSet {
    /// Build from explicit positions; checks ordering and containment.
    pub fn from_positions(minima: Vec<f64>, saddles: Vec<f64>, radius: f64) -> Result<Self> {
        if minima.is_empty() || saddles.len() + 1 != minima.len() {
            return Err(Error::InterleavingViolation(format!(
                "{} minima need {} saddles, got {}",
                minima.len(),
                minima.len().saturating_sub(1),
                saddles.len()
            )));
        }
        let set = CriticalPointSet { minima, saddles, radius };
        let xs: Vec<f64> = set.points().map(|p| p.x).collect();
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InterleavingViolation(format!("positions not increasing: {xs:?}")));
        }
        if xs.iter().any(|x| x.abs() >= radius) {
            return Err(Error::InterleavingViolation(format!(
                "critical points must lie strictly inside (-{radius}, {radius})"
            )));
        }
        Ok(set)
    }

    pub fn minima(&self) -> &[f64] {
        &self.minima
    }

    pub fn saddles(&self) -> &[f64] {
        &self.saddles
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn n_min(&self) -> usize {
        self.minima.len()
    }

    /// All points in increasing order.
    pub fn points(&self) -> impl Iterator<Item = CriticalPoint> + '_ {
        let n = self.minima.len();
        (0..2 * n - 1).map(move |k| {
            if k % 2 == 0 {
                CriticalPoint { x: self.minima[k / 2], kind: CriticalKind::Minimum }
            } else {
                CriticalPoint { x: self.saddles[k / 2], kind: CriticalKind::Saddle }
            }
        })
    }

    pub fn field(&self, i: usize) -> AttractionField {
        AttractionField {
            index: i,
            minimum: self.minima[i],
            lower: if i == 0 { f64::NEG_INFINITY } else { self.saddles[i - 1] },
            upper: self.saddles.get(i).copied().unwrap_or(f64::INFINITY),
        }
    }

    pub fn fields(&self) -> impl Iterator<Item = AttractionField> + '_ {
        (0..self.n_min()).map(|i| self.field(i))
    }

    /// Widths `r_i`.
    pub fn widths(&self) -> Vec<f64> {
        self.fields().map(|f| f.width()).collect()
    }

    /// Which field `x` falls into; exact saddle hits are reported as such.
    #[inline]
    pub fn field_of(&self, x: f64) -> Field {
        // number of saddles strictly below x
        let below = self.saddles.partition_point(|&s| s < x);
        if below < self.saddles.len() && self.saddles[below] == x {
            Field::Saddle(below)
        } else {
            Field::Inside(below)
        }
    }

    /// Mirror image `x -> -x`; field `i` becomes field `n - 1 - i`.
    pub fn reflected(&self) -> Self {
        let minima = self.minima.iter().rev().map(|x| -x).collect();
        let saddles = self.saddles.iter().rev().map(|x| -x).collect();
        CriticalPointSet { minima, saddles, radius: self.radius }
    }

    /// Shift every point by `dx` (the radius grows to keep containment).
    pub fn translated(&self, dx: f64) -> Self {
        CriticalPointSet {
            minima: self.minima.iter().map(|x| x + dx).collect(),
            saddles: self.saddles.iter().map(|x| x + dx).collect(),
            radius: self.radius + dx.abs(),
        }
    }
}

/// Grid-and-bisection settings for [`find_critical_points_with`].
#[derive(Debug, Clone, Copy)]
pub struct CriticalSearch {
    pub grid_n: usize,
    pub tol: f64,
    pub curvature_tol: f64,
}

impl Default for CriticalSearch {
    fn default() -> Self {
        CriticalSearch { grid_n: 20_000, tol: 1e-10, curvature_tol: 1e-6 }
    }
}

/// Locate and classify every critical point of `land` inside its domain.
pub fn find_critical_points(land: &Landscape1D, grid_n: usize, tol: f64) -> Result<CriticalPointSet> {
    find_critical_points_with(land, CriticalSearch { grid_n, tol, ..Default::default() })
}

pub fn find_critical_points_with(land: &Landscape1D, search: CriticalSearch) -> Result<CriticalPointSet> {
    if search.grid_n < 100 {
        return Err(Error::config(format!("grid_n must be at least 100, got {}", search.grid_n)));
    }
    if !(search.tol > 0.0) {
        return Err(Error::config("bisection tolerance must be positive"));
    }
    let l = land.radius();
    let eps = 1e-6 * l;
    let (lo, hi) = (-l + eps, l - eps);
    let step = (hi - lo) / search.grid_n as f64;

    let mut roots = Vec::new();
    let mut prev_x = lo;
    let mut prev_g = land.grad(lo);
    if prev_g == 0.0 {
        roots.push(lo);
    }
    for k in 1..=search.grid_n {
        let x = lo + step * k as f64;
        let g = land.grad(x);
        if g == 0.0 {
            roots.push(x);
        } else if prev_g != 0.0 && (prev_g < 0.0) != (g < 0.0) {
            roots.push(bisect(land, prev_x, x, prev_g, search.tol));
        }
        prev_x = x;
        prev_g = g;
    }

    let mut minima = Vec::new();
    let mut saddles = Vec::new();
    for (k, &x) in roots.iter().enumerate() {
        let c = land.curvature(x);
        if c.abs() < search.curvature_tol {
            return Err(Error::DegenerateCritical { x, curvature: c });
        }
        let kind = if c > 0.0 { CriticalKind::Minimum } else { CriticalKind::Saddle };
        let expected = if k % 2 == 0 { CriticalKind::Minimum } else { CriticalKind::Saddle };
        if kind != expected {
            return Err(Error::InterleavingViolation(format!(
                "critical point #{k} at {x} is a {kind:?}, expected {expected:?}"
            )));
        }
        match kind {
            CriticalKind::Minimum => minima.push(x),
            CriticalKind::Saddle => saddles.push(x),
        }
    }
    if minima.is_empty() {
        return Err(Error::InterleavingViolation("no local minimum in the domain".into()));
    }
    if saddles.len() + 1 != minima.len() {
        return Err(Error::InterleavingViolation("the outermost critical points must be minima".into()));
    }
    CriticalPointSet::from_positions(minima, saddles, l)
}

fn bisect(land: &Landscape1D, mut a: f64, mut b: f64, ga: f64, tol: f64) -> f64 {
    let neg_at_a = ga < 0.0;
    while b - a > tol {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = land.grad(m);
        if gm == 0.0 {
            return m;
        }
        if (gm < 0.0) == neg_at_a {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}
