//! Objective functions, their critical points and attraction fields.
//!
//! One-dimensional landscapes live on `[-L, L]` and carry closed-form first
//! and second derivatives. The two-dimensional modified Himmelblau landscape
//! is in [`himmelblau`].

mod critical;
pub mod himmelblau;
pub mod jet;
mod poly;

pub use critical::{
    find_critical_points, find_critical_points_with, AttractionField, CriticalKind, CriticalPoint,
    CriticalPointSet, CriticalSearch, Field,
};
pub use himmelblau::{
    builtin_himmelblau2d, classify_basin_2d, Attractor, BasinRegistry, HimmelblauParams,
    Landscape2D,
};
pub use poly::Polynomial;

use crate::error::{Error, Result};
use jet::{Dual, Jet2, Scalar};
use serde::{Deserialize, Serialize};

/// Closed-form shape of a one-dimensional objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape1D {
    /// Seven-critical-point product benchmark with two wide and two sharp minima.
    PaperR1,
    Polynomial { coeffs: Vec<f64> },
}

/// A one-dimensional objective restricted to `[-radius, radius]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Landscape1D {
    shape: Shape1D,
    poly: Option<(Polynomial, Polynomial)>,
    radius: f64,
}

/// The product-form benchmark objective, generic over the derivative carrier.
#[inline]
fn paper_r1<T: Scalar>(x: T) -> T {
    let sq = |y: T| y * y;
    let base = (x + 1.6) * sq(x + 1.3) * sq(x - 0.2) * sq(x - 0.7) * (x - 1.6);
    let kink = ((T::constant(1.65) - x).abs() * 0.05).powf(0.6);
    let bump1 = (sq(x - 0.5) * 4.0 + 0.01).recip() + 1.0;
    let bump2 = (sq(x + 1.5) * 4.0 + 0.1).recip() + 1.0;
    let dip = -((sq(x + 0.8) * -5.0).exp() * 0.25) + 1.0;
    base * kink * bump1 * bump2 * dip
}

impl Landscape1D {
    pub fn new(shape: Shape1D, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::config(format!("domain radius must be positive, got {radius}")));
        }
        let poly = match &shape {
            Shape1D::PaperR1 => None,
            Shape1D::Polynomial { coeffs } => {
                if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::config("polynomial needs finite coefficients"));
                }
                let p = Polynomial::new(coeffs.clone());
                let d = p.derivative();
                Some((p, d))
            }
        };
        Ok(Landscape1D { shape, poly, radius })
    }

    pub fn polynomial(p: Polynomial, radius: f64) -> Result<Self> {
        Self::new(Shape1D::Polynomial { coeffs: p.coeffs }, radius)
    }

    /// Polynomial landscape whose gradient vanishes exactly at `roots`.
    pub fn from_critical_points(roots: &[f64], scale: f64, radius: f64) -> Result<Self> {
        Self::polynomial(Polynomial::from_gradient_roots(roots, scale), radius)
    }

    pub fn shape(&self) -> &Shape1D {
        &self.shape
    }

    /// Domain radius `L`.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn value(&self, x: f64) -> f64 {
        match &self.poly {
            None => paper_r1(x),
            Some((p, _)) => p.eval(x),
        }
    }

    #[inline]
    pub fn grad(&self, x: f64) -> f64 {
        match &self.poly {
            None => paper_r1(Dual::variable(x)).d,
            Some((_, d)) => d.eval(x),
        }
    }

    pub fn curvature(&self, x: f64) -> f64 {
        match &self.poly {
            None => paper_r1(Jet2::variable(x)).dd,
            Some((p, _)) => p.eval3(x).2,
        }
    }
}

/// The seven-critical-point benchmark on `[-1.6, 1.6]`.
pub fn builtin_paper_f() -> Landscape1D {
    Landscape1D::new(Shape1D::PaperR1, 1.6).expect("builtin landscape")
}

/// Names accepted by [`Landscape::by_name`].
pub const BUILTIN_NAMES: [&str; 2] = ["paper-r1", "himmelblau-r2"];

/// Either landscape family, as selected by name in configs and on the CLI.
#[derive(Debug, Clone)]
pub enum Landscape {
    R1(Landscape1D),
    R2(Landscape2D),
}

impl Landscape {
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "paper-r1" => Ok(Landscape::R1(builtin_paper_f())),
            "himmelblau-r2" => Ok(Landscape::R2(builtin_himmelblau2d())),
            other => Err(Error::config(format!(
                "unknown landscape {other:?}; expected one of {BUILTIN_NAMES:?}"
            ))),
        }
    }
}
