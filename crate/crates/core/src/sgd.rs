//! The clipped, projected SGD recursion `X <- proj(X - clip_b(eta (f'(X) - Z)))`
//! and its trajectory statistics.

use crate::error::{Error, Result};
use crate::landscape::{CriticalPointSet, Field, Landscape1D, Landscape2D};
use crate::noise::NoiseModel;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Proximity radius for counting a 2-D iterate as visiting a basin.
pub const VISIT_RADIUS: f64 = 0.5;

/// Default censoring cap.
pub const DEFAULT_MAX_STEPS: u64 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub eta: f64,
    /// Clipping threshold; `None` means no clipping.
    #[serde(default)]
    pub b: Option<f64>,
    /// Projection radius; `None` uses the landscape's own.
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default = "default_stride")]
    pub record_stride: u64,
}

fn default_max_steps() -> u64 {
    DEFAULT_MAX_STEPS
}

fn default_stride() -> u64 {
    10
}

impl SgdConfig {
    pub fn new(eta: f64, b: Option<f64>) -> Self {
        SgdConfig { eta, b, radius: None, max_steps: DEFAULT_MAX_STEPS, record_stride: 10 }
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn with_stride(mut self, stride: u64) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.eta)));
        }
        if let Some(b) = self.b {
            if !(b > 0.0) {
                return Err(Error::config(format!("clipping threshold must be positive, got {b}")));
            }
        }
        if let Some(r) = self.radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::config(format!("projection radius must be positive, got {r}")));
            }
        }
        if self.record_stride == 0 {
            return Err(Error::config("record_stride must be at least 1"));
        }
        Ok(())
    }

    /// Threshold as a number, `inf` when unclipped.
    pub fn threshold(&self) -> f64 {
        self.b.unwrap_or(f64::INFINITY)
    }
}

/// `(w ^ c) v (-c)`.
#[inline]
pub fn truncate(w: f64, c: f64) -> f64 {
    w.clamp(-c, c)
}

/// Radial rescale to norm `c` when `|w| > c`.
#[inline]
pub fn truncate2(w: [f64; 2], c: f64) -> [f64; 2] {
    let n = w[0].hypot(w[1]);
    if n > c {
        let s = c / n;
        [w[0] * s, w[1] * s]
    } else {
        w
    }
}

/// Radial projection onto the closed ball of radius `r`.
#[inline]
pub fn project2(p: [f64; 2], r: f64) -> [f64; 2] {
    truncate2(p, r)
}

/// One step with a given noise value.
#[inline]
pub fn step_with(land: &Landscape1D, cfg: &SgdConfig, x: f64, z: f64) -> Result<f64> {
    let g = land.grad(x);
    if !g.is_finite() {
        return Err(Error::NonFiniteGradient(x));
    }
    let l = cfg.radius.unwrap_or(land.radius());
    Ok((x - truncate(cfg.eta * (g - z), cfg.threshold())).clamp(-l, l))
}

/// One step, consuming exactly one noise draw.
#[inline]
pub fn step<R: Rng + ?Sized>(land: &Landscape1D, noise: &NoiseModel, cfg: &SgdConfig, x: f64, rng: &mut R) -> Result<f64> {
    let z = noise.sample(rng);
    step_with(land, cfg, x, z)
}

#[inline]
pub fn step2_with(land: &Landscape2D, cfg: &SgdConfig, x: [f64; 2], z: [f64; 2]) -> Result<[f64; 2]> {
    let g = land.grad(x);
    if !(g[0].is_finite() && g[1].is_finite()) {
        return Err(Error::NonFiniteGradient(x[0].hypot(x[1])));
    }
    let u = truncate2([cfg.eta * (g[0] - z[0]), cfg.eta * (g[1] - z[1])], cfg.threshold());
    Ok(project2([x[0] - u[0], x[1] - u[1]], cfg.radius.unwrap_or(land.radius)))
}

#[inline]
pub fn step2<R: Rng + ?Sized>(
    land: &Landscape2D,
    noise: &NoiseModel,
    cfg: &SgdConfig,
    x: [f64; 2],
    rng: &mut R,
) -> Result<[f64; 2]> {
    let z = noise.sample2(rng);
    step2_with(land, cfg, x, z)
}

/// First exit from a field. Fields are zero-based here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitRecord {
    pub exit_step: u64,
    pub source: usize,
    /// `None` when censored.
    pub dest: Option<usize>,
    /// Exit position, or the last position when censored.
    pub position: f64,
}

impl ExitRecord {
    pub fn censored(&self) -> bool {
        self.dest.is_none()
    }
}

/// Iterate until the iterate leaves field `k` or `max_steps` is reached.
/// Landing exactly on a saddle does not count as leaving.
pub fn run_until_exit<R: Rng + ?Sized>(
    land: &Landscape1D,
    points: &CriticalPointSet,
    noise: &NoiseModel,
    cfg: &SgdConfig,
    x0: f64,
    k: usize,
    rng: &mut R,
) -> Result<ExitRecord> {
    if points.field_of(x0) != Field::Inside(k) {
        return Err(Error::config(format!("start {x0} is not inside field {}", k + 1)));
    }
    let field = points.field(k);
    let (lo, hi) = (field.lower, field.upper);
    let mut x = x0;
    for n in 1..=cfg.max_steps {
        x = step(land, noise, cfg, x, rng)?;
        if x < lo || x > hi {
            let dest = points.field_of(x).index();
            debug_assert!(dest.is_some() && dest != Some(k));
            return Ok(ExitRecord { exit_step: n, source: k, dest, position: x });
        }
    }
    Ok(ExitRecord { exit_step: cfg.max_steps, source: k, dest: None, position: x })
}

/// Visit counts at recorded steps. The last bin collects saddle hits (1-D)
/// or iterates far from every attractor (2-D).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupancyHistogram {
    pub labels: Vec<String>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl OccupancyHistogram {
    fn empty(n: usize, other: &str) -> Self {
        let mut labels: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
        labels.push(other.to_string());
        OccupancyHistogram { labels, counts: vec![0; n + 1], total: 0 }
    }

    pub fn fraction(&self, bin: usize) -> f64 {
        self.counts[bin] as f64 / self.total as f64
    }

    /// Combined fraction over the given (zero-based) bins.
    pub fn fraction_of(&self, bins: &[usize]) -> f64 {
        bins.iter().map(|&b| self.counts[b]).sum::<u64>() as f64 / self.total as f64
    }

    /// Combined fraction over `bins` relative to classified (non-"other") records.
    pub fn classified_fraction_of(&self, bins: &[usize]) -> f64 {
        let classified = self.total - self.counts[self.counts.len() - 1];
        bins.iter().map(|&b| self.counts[b]).sum::<u64>() as f64 / classified as f64
    }

    /// Pool histograms with identical labels.
    pub fn merge(&mut self, other: &OccupancyHistogram) {
        assert_eq!(self.labels, other.labels);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
    }
}

/// Run `max_steps` steps from `x0` and bin every `record_stride`-th iterate by field.
pub fn run_occupancy<R: Rng + ?Sized>(
    land: &Landscape1D,
    points: &CriticalPointSet,
    noise: &NoiseModel,
    cfg: &SgdConfig,
    x0: f64,
    rng: &mut R,
) -> Result<OccupancyHistogram> {
    let n = points.n_min();
    let mut hist = OccupancyHistogram::empty(n, "saddle");
    let mut x = x0;
    for step_n in 1..=cfg.max_steps {
        x = step(land, noise, cfg, x, rng)?;
        if step_n % cfg.record_stride == 0 {
            let bin = points.field_of(x).index().unwrap_or(n);
            hist.counts[bin] += 1;
            hist.total += 1;
        }
    }
    if hist.total == 0 {
        return Err(Error::EmptyHistogram);
    }
    Ok(hist)
}

/// Positions `(step, x)` every `stride` steps, starting with `(0, x0)`.
pub fn run_trace<R: Rng + ?Sized>(
    land: &Landscape1D,
    noise: &NoiseModel,
    cfg: &SgdConfig,
    x0: f64,
    stride: u64,
    rng: &mut R,
) -> Result<Vec<(u64, f64)>> {
    if stride < 100 {
        return Err(Error::config("trace stride must be at least 100"));
    }
    let mut out = vec![(0, x0)];
    let mut x = x0;
    for n in 1..=cfg.max_steps {
        x = step(land, noise, cfg, x, rng)?;
        if n % stride == 0 {
            out.push((n, x));
        }
    }
    Ok(out)
}

/// Two-dimensional occupancy plus the sequence of basin changes among
/// classified records, as `(step, basin)` with zero-based basins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Occupancy2D {
    pub histogram: OccupancyHistogram,
    pub transitions: Vec<(u64, usize)>,
}

pub fn run_occupancy2<R: Rng + ?Sized>(
    land: &Landscape2D,
    noise: &NoiseModel,
    cfg: &SgdConfig,
    x0: [f64; 2],
    rng: &mut R,
) -> Result<Occupancy2D> {
    let n = land.attractors().len();
    let mut hist = OccupancyHistogram::empty(n, "out");
    let mut transitions = Vec::new();
    let mut x = x0;
    for step_n in 1..=cfg.max_steps {
        x = step2(land, noise, cfg, x, rng)?;
        if step_n % cfg.record_stride == 0 {
            match land.visiting(x, VISIT_RADIUS) {
                Some(basin) => {
                    hist.counts[basin] += 1;
                    if transitions.last().map(|&(_, b)| b) != Some(basin) {
                        transitions.push((step_n, basin));
                    }
                }
                None => hist.counts[n] += 1,
            }
            hist.total += 1;
        }
    }
    if hist.total == 0 {
        return Err(Error::EmptyHistogram);
    }
    Ok(Occupancy2D { histogram: hist, transitions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{builtin_paper_f, find_critical_points, Polynomial};
    use crate::rng::{stream, Purpose};

    fn half_square() -> Landscape1D {
        Landscape1D::polynomial(Polynomial::new(vec![0.0, 0.0, 0.5]), 1.6).unwrap()
    }

    #[test]
    fn truncation() {
        assert_eq!(truncate(0.7, 0.5), 0.5);
        assert_eq!(truncate(-0.7, 0.5), -0.5);
        assert_eq!(truncate(0.3, 0.5), 0.3);
        let t = truncate2([3.0, 4.0], 2.5);
        assert!((t[0] - 1.5).abs() < 1e-15 && (t[1] - 2.0).abs() < 1e-15);
        assert_eq!(truncate2([0.3, 0.4], 2.5), [0.3, 0.4]);
    }

    #[test]
    fn deterministic_steps() {
        let f = half_square();
        let x = step_with(&f, &SgdConfig::new(0.1, None), 1.0, 0.0).unwrap();
        assert!((x - 0.9).abs() < 1e-15);
        let x = step_with(&f, &SgdConfig::new(0.1, Some(0.5)), 0.3, 1e6).unwrap();
        assert_eq!(x, 0.3 + 0.5);
        let x = step_with(&f, &SgdConfig::new(0.1, Some(0.3)), 0.2, -5.0).unwrap();
        assert!((x - (-0.1)).abs() < 1e-15);
        // projection
        let x = step_with(&f, &SgdConfig::new(0.1, None), 1.5, 1e3).unwrap();
        assert_eq!(x, 1.6);
    }

    #[test]
    fn noiseless_run_is_censored() {
        let f = builtin_paper_f();
        let pts = find_critical_points(&f, 20_000, 1e-10).unwrap();
        let cfg = SgdConfig::new(1e-2, Some(100.0)).with_max_steps(10_000);
        let mut rng = stream(0, Purpose::Test, 0);
        let r = run_until_exit(&f, &pts, &NoiseModel::Zero, &cfg, -0.7, 1, &mut rng).unwrap();
        assert!(r.censored());
        assert_eq!(r.exit_step, 10_000);
    }

    #[test]
    fn exits_leave_the_source() {
        let f = builtin_paper_f();
        let pts = find_critical_points(&f, 20_000, 1e-10).unwrap();
        let cfg = SgdConfig::new(5e-2, Some(0.5)).with_max_steps(5_000_000);
        let noise = NoiseModel::pareto(1.2, 0.1);
        for rep in 0..10 {
            let mut rng = stream(3, Purpose::Noise, rep);
            let r = run_until_exit(&f, &pts, &noise, &cfg, -0.7, 1, &mut rng).unwrap();
            if let Some(d) = r.dest {
                assert_ne!(d, 1);
                assert!(!pts.field(1).contains(r.position));
                assert!(d == 0 || d == 2, "destination {d}");
            }
        }
    }

    #[test]
    fn exit_is_reproducible() {
        let f = builtin_paper_f();
        let pts = find_critical_points(&f, 20_000, 1e-10).unwrap();
        let cfg = SgdConfig::new(5e-2, Some(0.5)).with_max_steps(1_000_000);
        let noise = NoiseModel::pareto(1.2, 0.1);
        let run = || run_until_exit(&f, &pts, &noise, &cfg, -0.7, 1, &mut stream(9, Purpose::Noise, 4)).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn occupancy_fixed_point() {
        let f = builtin_paper_f();
        let pts = find_critical_points(&f, 20_000, 1e-10).unwrap();
        let m2 = pts.minima()[1];
        let cfg = SgdConfig::new(1e-3, Some(0.5)).with_max_steps(10_000);
        let h = run_occupancy(&f, &pts, &NoiseModel::Zero, &cfg, m2, &mut stream(0, Purpose::Test, 0)).unwrap();
        assert_eq!(h.counts[1], h.total);
        assert_eq!(h.total, 1000);
        assert_eq!(h.counts.iter().sum::<u64>(), h.total);
    }

    #[test]
    fn zero_step_occupancy_errors() {
        let f = builtin_paper_f();
        let pts = find_critical_points(&f, 20_000, 1e-10).unwrap();
        let cfg = SgdConfig::new(1e-3, Some(0.5)).with_max_steps(0);
        let r = run_occupancy(&f, &pts, &NoiseModel::Zero, &cfg, 0.3, &mut stream(0, Purpose::Test, 0));
        assert!(matches!(r, Err(Error::EmptyHistogram)));
    }

    #[test]
    fn trace_stride_floor() {
        let f = half_square();
        let cfg = SgdConfig::new(1e-3, None).with_max_steps(1000);
        let mut rng = stream(0, Purpose::Test, 0);
        assert!(run_trace(&f, &NoiseModel::Zero, &cfg, 0.5, 10, &mut rng).is_err());
        let t = run_trace(&f, &NoiseModel::Zero, &cfg, 0.5, 100, &mut rng).unwrap();
        assert_eq!(t.len(), 11);
    }

    #[test]
    fn config_json() {
        let c: SgdConfig = serde_json::from_str(r#"{"eta": 0.001, "b": 0.5}"#).unwrap();
        assert_eq!(c.max_steps, DEFAULT_MAX_STEPS);
        assert!(serde_json::from_str::<SgdConfig>(r#"{"eta": 0.001, "bb": 0.5}"#).is_err());
        assert!(SgdConfig::new(0.0, None).validate().is_err());
        assert!(SgdConfig::new(0.1, Some(-1.0)).validate().is_err());
    }
}
