//! Log-log least squares and goodness-of-fit statistics.

use crate::error::{Error, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    /// Exponent `beta` in `t = e^intercept (1/eta)^beta`.
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub n: usize,
}

/// OLS of `ln t` on `ln(1/eta)` over `(eta, t)` pairs.
pub fn fit_powerlaw(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    let n = points.len();
    if n < 3 {
        return Err(Error::InsufficientPoints(n));
    }
    if points.iter().any(|&(e, t)| !(e > 0.0 && t > 0.0)) {
        return Err(Error::config("power-law fit needs positive learning rates and times"));
    }
    let xs: Vec<f64> = points.iter().map(|p| -p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let nf = n as f64;
    let xm = xs.iter().sum::<f64>() / nf;
    let ym = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::config("power-law fit needs at least two distinct learning rates"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let s2 = rss / (nf - 2.0);
    Ok(PowerLawFit {
        slope,
        intercept,
        slope_se: (s2 / sxx).sqrt(),
        intercept_se: (s2 * (1.0 / nf + xm * xm / sxx)).sqrt(),
        n,
    })
}

/// Kolmogorov-Smirnov distance between the sample and `Exp(1)`.
pub fn ks_exponential(samples: &[f64]) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - (-x.max(0.0)).exp();
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Sample mean and unbiased variance.
pub fn mean_var(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let m = samples.iter().sum::<f64>() / n;
    let v = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}
