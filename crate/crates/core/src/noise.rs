//! Gradient-noise distributions and heavy-tail scalings.

use crate::error::{Error, Result};
use crate::rng::open_closed01;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Noise added to the gradient estimate, `f'(x) - Z`.
///
/// All kinds can be drawn in one or two dimensions: in 2-D the signed Pareto
/// and Gaussian kinds act independently per coordinate, and the isotropic kind
/// degenerates to a symmetric sign in 1-D.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    /// `Z = 0`.
    Zero,
    /// `Z = scale * U * W - mean_offset`, `P(W > w) = w^-alpha` on `w >= 1`,
    /// `P(U = 1) = p_plus`.
    #[serde(rename = "pareto")]
    SignedPareto {
        alpha: f64,
        scale: f64,
        #[serde(default = "half")]
        p_plus: f64,
        #[serde(default)]
        mean_offset: f64,
    },
    Gaussian { sigma: f64 },
    /// Uniform direction, `|Z| = scale * W`.
    #[serde(rename = "isotropic_pareto")]
    IsotropicPareto2D { alpha: f64, scale: f64 },
}

fn half() -> f64 {
    0.5
}

impl NoiseModel {
    /// Symmetric signed Pareto noise.
    pub fn pareto(alpha: f64, scale: f64) -> Self {
        NoiseModel::SignedPareto { alpha, scale, p_plus: 0.5, mean_offset: 0.0 }
    }

    pub fn gaussian(sigma: f64) -> Self {
        NoiseModel::Gaussian { sigma }
    }

    /// Offset that centers a signed Pareto with the given parameters.
    pub fn centering_offset(alpha: f64, scale: f64, p_plus: f64) -> f64 {
        scale * (2.0 * p_plus - 1.0) * alpha / (alpha - 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        match *self {
            NoiseModel::Zero => Ok(()),
            NoiseModel::SignedPareto { alpha, scale, p_plus, mean_offset } => {
                if !(alpha > 1.0) {
                    return bad("pareto noise needs alpha > 1");
                }
                if !(scale > 0.0) {
                    return bad("pareto noise needs scale > 0");
                }
                if !(p_plus > 0.0 && p_plus < 1.0) {
                    return bad("p_plus must lie in (0, 1)");
                }
                let centered = Self::centering_offset(alpha, scale, p_plus);
                if (centered - mean_offset).abs() > 1e-9 * scale.max(1.0) {
                    return bad("asymmetric pareto noise needs mean_offset equal to its mean");
                }
                Ok(())
            }
            NoiseModel::Gaussian { sigma } if sigma > 0.0 => Ok(()),
            NoiseModel::Gaussian { .. } => bad("gaussian noise needs sigma > 0"),
            NoiseModel::IsotropicPareto2D { alpha, scale } if alpha > 1.0 && scale > 0.0 => Ok(()),
            NoiseModel::IsotropicPareto2D { .. } => bad("isotropic pareto needs alpha > 1 and scale > 0"),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseModel::Zero => "zero",
            NoiseModel::SignedPareto { .. } => "pareto",
            NoiseModel::Gaussian { .. } => "gaussian",
            NoiseModel::IsotropicPareto2D { .. } => "isotropic_pareto",
        }
    }

    /// Tail index, for the heavy-tailed kinds.
    pub fn alpha(&self) -> Option<f64> {
        match *self {
            NoiseModel::SignedPareto { alpha, .. } | NoiseModel::IsotropicPareto2D { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    /// `(p_plus, p_minus)` of the limiting tail split.
    pub fn tail_split(&self) -> (f64, f64) {
        match *self {
            NoiseModel::SignedPareto { p_plus, .. } => (p_plus, 1.0 - p_plus),
            _ => (0.5, 0.5),
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseModel::Zero => 0.0,
            NoiseModel::SignedPareto { alpha, scale, p_plus, mean_offset } => {
                let w = pareto_unit(rng, alpha);
                let u = if open_closed01(rng) <= p_plus { 1.0 } else { -1.0 };
                scale * u * w - mean_offset
            }
            NoiseModel::Gaussian { sigma } => sigma * rng.sample::<f64, _>(StandardNormal),
            NoiseModel::IsotropicPareto2D { alpha, scale } => {
                let w = pareto_unit(rng, alpha);
                let u = if rng.next_u32() & 1 == 0 { 1.0 } else { -1.0 };
                scale * u * w
            }
        }
    }

    #[inline]
    pub fn sample2<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        match *self {
            NoiseModel::IsotropicPareto2D { alpha, scale } => {
                let r = scale * pareto_unit(rng, alpha);
                let theta = std::f64::consts::TAU * open_closed01(rng);
                let (s, c) = theta.sin_cos();
                [r * c, r * s]
            }
            _ => [self.sample(rng), self.sample(rng)],
        }
    }

    /// Tail function `H(x) = P(|Z| > x)`.
    pub fn tail(&self) -> Result<TailFunction> {
        match *self {
            NoiseModel::SignedPareto { alpha, scale, .. } | NoiseModel::IsotropicPareto2D { alpha, scale } => {
                Ok(TailFunction { alpha, scale })
            }
            NoiseModel::Gaussian { .. } => Err(Error::UnsupportedKind("gaussian")),
            NoiseModel::Zero => Err(Error::UnsupportedKind("zero")),
        }
    }
}

/// Pareto(alpha) variate on `[1, inf)` via inverse CDF.
#[inline]
pub fn pareto_unit<R: Rng + ?Sized>(rng: &mut R, alpha: f64) -> f64 {
    open_closed01(rng).powf(-1.0 / alpha)
}

/// `H(x) = (x / scale)^-alpha` for `x >= scale`, else 1. Any mean offset is
/// ignored; it does not change the regularly varying tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFunction {
    pub alpha: f64,
    pub scale: f64,
}

impl TailFunction {
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.scale {
            1.0
        } else {
            (x / self.scale).powf(-self.alpha)
        }
    }

    pub fn ln_eval(&self, x: f64) -> f64 {
        if x <= self.scale {
            0.0
        } else {
            -self.alpha * (x / self.scale).ln()
        }
    }
}

/// `lambda(eta) = H(1/eta) (H(1/eta) / eta)^(l* - 1)`, the inverse exit-time scale.
pub fn lambda_scale(model: &NoiseModel, l_star: u32, eta: f64) -> Result<f64> {
    Ok(ln_lambda_scale(model, l_star, eta)?.exp())
}

/// `ln lambda(eta)`; finite even where `lambda` underflows.
pub fn ln_lambda_scale(model: &NoiseModel, l_star: u32, eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::config(format!("learning rate must lie in (0, 1), got {eta}")));
    }
    if l_star == 0 {
        return Err(Error::config("jump count must be at least 1"));
    }
    let ln_h = model.tail()?.ln_eval(1.0 / eta);
    Ok(ln_h + (l_star as f64 - 1.0) * (ln_h - eta.ln()))
}

/// Hill estimate of the tail index from the `k` largest magnitudes.
pub fn hill_tail_index(samples: &[f64], k: usize) -> Result<f64> {
    let n = samples.len();
    if k == 0 || k >= n {
        return Err(Error::InsufficientSamples(format!("need 0 < k < n, got k = {k}, n = {n}")));
    }
    let mut mags: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    // after this, mags[..k] are the k largest and mags[k] is the (k+1)-th largest
    mags.select_nth_unstable_by(k, |a, b| b.total_cmp(a));
    let threshold = mags[k];
    if !(threshold > 0.0) {
        return Err(Error::InsufficientSamples("threshold order statistic is not positive".into()));
    }
    let sum: f64 = mags[..k].iter().map(|x| (x / threshold).ln()).sum();
    if !(sum > 0.0) {
        return Err(Error::InsufficientSamples("degenerate sample: zero log-spacings".into()));
    }
    Ok(k as f64 / sum)
}
