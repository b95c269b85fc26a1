use super::flow::FieldFlow;
use crate::error::{Error, Result};
use crate::graph::JumpProfile;
use crate::landscape::{CriticalPointSet, Landscape1D};
use crate::noise::{pareto_unit, NoiseModel};
use crate::par::{map_indexed, Execution};
use crate::rng::{open_closed01, stream, Purpose};
use serde::{Deserialize, Serialize};

const BLOCK: u64 = 4096;

/// Monte Carlo settings for the rate constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    #[serde(default = "default_samples")]
    pub n_samples: u64,
    /// Jump-size truncation; `None` uses `r_i - (l*_i - 1) b`, below which no
    /// jump vector can escape.
    #[serde(default)]
    pub w_min: Option<f64>,
    /// Gap truncation; `None` uses the computed bound beyond which no jump
    /// vector can escape.
    #[serde(default)]
    pub t_max: Option<f64>,
    /// Grid cells per side for the tabulated flow.
    #[serde(default = "default_flow_grid")]
    pub flow_grid: usize,
}

fn default_samples() -> u64 {
    1_000_000
}

fn default_flow_grid() -> usize {
    16_384
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig { n_samples: default_samples(), w_min: None, t_max: None, flow_grid: default_flow_grid() }
    }
}

impl RateConfig {
    pub fn with_samples(mut self, n: u64) -> Self {
        self.n_samples = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::config("n_samples must be positive"));
        }
        if matches!(self.w_min, Some(w) if !(w > 0.0)) {
            return Err(Error::config("w_min must be positive"));
        }
        if matches!(self.t_max, Some(t) if !(t > 0.0 && t.is_finite())) {
            return Err(Error::config("t_max must be positive and finite"));
        }
        if self.flow_grid < 16 {
            return Err(Error::config("flow_grid must be at least 16"));
        }
        Ok(())
    }
}

/// Estimated `q_i` and `q_{i,j}` for one field, all zero-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldRates {
    pub field: usize,
    pub l_star: u32,
    pub q: f64,
    pub q_se: f64,
    /// Dense over all fields; entry `field` is zero.
    pub q_ij: Vec<f64>,
    pub q_ij_se: Vec<f64>,
    pub w_min: f64,
    /// `None` for single-jump fields, which have no gaps.
    pub t_max: Option<f64>,
    /// Computed gap bound; escapes need every gap below it.
    pub t_bound: Option<f64>,
    pub n_samples: u64,
    pub escapes: u64,
    /// Largest gap and smallest jump among escaping samples.
    pub max_escape_gap: f64,
    pub min_escape_jump: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTable {
    pub b: f64,
    pub alpha: f64,
    pub p_plus: f64,
    pub fields: Vec<FieldRates>,
}

impl RateTable {
    pub fn n(&self) -> usize {
        self.fields.len()
    }
}

struct Tally {
    /// Escapes by destination field.
    dest: Vec<u64>,
    max_gap: f64,
    min_jump: f64,
}

impl Tally {
    fn new(n: usize) -> Self {
        Tally { dest: vec![0; n], max_gap: 0.0, min_jump: f64::INFINITY }
    }

    fn merge(mut self, o: Tally) -> Tally {
        for (a, b) in self.dest.iter_mut().zip(&o.dest) {
            *a += b;
        }
        self.max_gap = self.max_gap.max(o.max_gap);
        self.min_jump = self.min_jump.min(o.min_jump);
        self
    }
}

struct Setup<'a> {
    points: &'a CriticalPointSet,
    flow: FieldFlow,
    field: usize,
    l_star: usize,
    alpha: f64,
    p_plus: f64,
    w_min: f64,
    seed: u64,
}

impl Setup<'_> {
    fn run(&self, n_samples: u64, t_max: f64, exec: Execution) -> Tally {
        let blocks = n_samples.div_ceil(BLOCK);
        let parts = map_indexed(exec, blocks, |blk| self.block(blk, n_samples, t_max));
        parts.into_iter().fold(Tally::new(self.points.n_min()), Tally::merge)
    }

    fn block(&self, blk: u64, n_samples: u64, t_max: f64) -> Tally {
        let n = self.points.n_min();
        let mut rng = stream(self.seed, Purpose::RateSampling, ((self.field as u64) << 40) | blk);
        let l = self.l_star;
        let mut w = vec![0.0; l];
        let mut gaps = vec![0.0; l - 1];
        let mut tally = Tally::new(n);
        let end = ((blk + 1) * BLOCK).min(n_samples);
        for _ in blk * BLOCK..end {
            // draw everything first so the stream layout is independent of the outcome
            for wj in w.iter_mut() {
                let mag = self.w_min * pareto_unit(&mut rng, self.alpha);
                *wj = if open_closed01(&mut rng) <= self.p_plus { mag } else { -mag };
            }
            for g in gaps.iter_mut() {
                *g = open_closed01(&mut rng) * t_max;
            }
            let Some(x) = self.flow.escape(&w, &gaps) else {
                continue;
            };
            if let Some(dest) = self.points.field_of(x).index() {
                if dest != self.field {
                    tally.dest[dest] += 1;
                    let max_gap = gaps.iter().copied().fold(0.0, f64::max);
                    tally.max_gap = tally.max_gap.max(max_gap);
                    tally.min_jump = w.iter().fold(tally.min_jump, |m, v| m.min(v.abs()));
                }
            }
        }
        tally
    }
}

/// Binomial estimate `mass * k / n` and its standard error.
fn scaled(k: u64, n: u64, mass: f64) -> (f64, f64) {
    let p = k as f64 / n as f64;
    (mass * p, mass * (p * (1.0 - p) / n as f64).sqrt())
}

/// Monte Carlo estimate of `q_i = mu_i(E_i)` and `q_{i,j} = mu_i(E_{i,j})`.
///
/// Jump sizes are drawn from the tail measure restricted to `|w| >= w_min`
/// and gaps uniformly on `[0, T_max]`; the hit fraction is scaled by the
/// total mass `w_min^(-alpha l*) T_max^(l* - 1)`. With the default
/// truncations no escaping jump vector is cut off, so the estimate is unbiased.
pub fn mc_estimate_rates(
    land: &Landscape1D,
    points: &CriticalPointSet,
    profile: &JumpProfile,
    noise: &NoiseModel,
    field: usize,
    cfg: &RateConfig,
    seed: u64,
    exec: Execution,
) -> Result<FieldRates> {
    cfg.validate()?;
    if field >= points.n_min() {
        return Err(Error::config(format!("field {} does not exist", field + 1)));
    }
    profile.check_assumption3(field)?;
    let alpha = noise.alpha().ok_or(Error::UnsupportedKind(noise.name()))?;
    let (p_plus, _) = noise.tail_split();
    let l_star = profile.l_star[field];
    let b = profile.b;
    let w_min = cfg.w_min.unwrap_or_else(|| {
        let r = profile.widths[field];
        if b.is_finite() { r - (l_star as f64 - 1.0) * b } else { r }
    });
    let fl = points.field(field);
    let flow = FieldFlow::new(land, (fl.minimum, fl.lower, fl.upper), b, l_star, cfg.flow_grid)?;
    let t_bound = (l_star > 1).then(|| flow.gap_bound());
    // a hair above the bound keeps boundary escapes inside the box
    let t_max = (l_star > 1).then(|| cfg.t_max.unwrap_or_else(|| t_bound.unwrap() * (1.0 + 1e-6) + 1e-9));
    let setup = Setup { points, flow, field, l_star: l_star as usize, alpha, p_plus, w_min, seed };
    let tally = setup.run(cfg.n_samples, t_max.unwrap_or(0.0), exec);

    let n = points.n_min();
    let mass = w_min.powf(-alpha * l_star as f64) * t_max.map_or(1.0, |t| t.powi(l_star as i32 - 1));
    let escapes: u64 = tally.dest.iter().sum();
    let (q, q_se) = scaled(escapes, cfg.n_samples, mass);
    let (q_ij, q_ij_se) = (0..n).map(|j| scaled(tally.dest[j], cfg.n_samples, mass)).unzip();
    Ok(FieldRates {
        field,
        l_star,
        q,
        q_se,
        q_ij,
        q_ij_se,
        w_min,
        t_max,
        t_bound,
        n_samples: cfg.n_samples,
        escapes,
        max_escape_gap: tally.max_gap,
        min_escape_jump: tally.min_jump,
    })
}

/// Rates for every field.
pub fn estimate_all(
    land: &Landscape1D,
    points: &CriticalPointSet,
    profile: &JumpProfile,
    noise: &NoiseModel,
    cfg: &RateConfig,
    seed: u64,
    exec: Execution,
) -> Result<RateTable> {
    let fields = (0..points.n_min())
        .map(|i| mc_estimate_rates(land, points, profile, noise, i, cfg, seed, exec))
        .collect::<Result<Vec<_>>>()?;
    let alpha = noise.alpha().ok_or(Error::UnsupportedKind(noise.name()))?;
    Ok(RateTable { b: profile.b, alpha, p_plus: noise.tail_split().0, fields })
}

/// Closed form for a single-jump field: `p+ d+^-alpha + p- d-^-alpha` over
/// the saddle distances reachable with one clipped jump.
pub fn single_jump_rate(points: &CriticalPointSet, field: usize, b: f64, alpha: f64, p_plus: f64) -> f64 {
    let fl = points.field(field);
    let side = |d: f64, p: f64| if d.is_finite() && d < b { p * d.powf(-alpha) } else { 0.0 };
    side(fl.upper - fl.minimum, p_plus) + side(fl.minimum - fl.lower, 1.0 - p_plus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::jump_profile;
    use crate::landscape::{builtin_paper_f, find_critical_points};

    #[test]
    fn single_jump_matches_closed_form() {
        // m = 0, saddles at -0.4 and 0.6
        let land = Landscape1D::from_critical_points(&[-1.0, -0.4, 0.0, 0.6, 1.2], 1.0, 1.5).unwrap();
        let pts = find_critical_points(&land, 20_000, 1e-12).unwrap();
        let prof = jump_profile(&pts, 0.7).unwrap();
        let noise = NoiseModel::pareto(1.2, 0.1);
        let cfg = RateConfig::default().with_samples(200_000);
        let r = mc_estimate_rates(&land, &pts, &prof, &noise, 1, &cfg, 1, Execution::Parallel).unwrap();
        let exact = 0.5 * 0.6f64.powf(-1.2) + 0.5 * 0.4f64.powf(-1.2);
        assert!((exact - single_jump_rate(&pts, 1, 0.7, 1.2, 0.5)).abs() < 1e-9);
        assert!((r.q - exact).abs() < 3.0 * r.q_se, "{} ± {} vs {exact}", r.q, r.q_se);
        assert!(r.t_max.is_none());
        assert_eq!(r.q_ij[1], 0.0);
        assert!((r.q - (r.q_ij[0] + r.q_ij[2])).abs() < 1e-12 * r.q);
    }

    #[test]
    fn paper_field_one_reaches_only_its_neighbour() {
        let land = builtin_paper_f();
        let pts = find_critical_points(&land, 20_000, 1e-10).unwrap();
        let prof = jump_profile(&pts, 0.5).unwrap();
        let noise = NoiseModel::pareto(1.2, 0.1);
        let cfg = RateConfig::default().with_samples(50_000);
        let r = mc_estimate_rates(&land, &pts, &prof, &noise, 0, &cfg, 2, Execution::Parallel).unwrap();
        assert!(r.q_ij[1] > 0.0);
        assert_eq!(r.q_ij[2], 0.0);
        assert_eq!(r.q_ij[3], 0.0);
        assert_eq!(r.q, r.q_ij[1]);
    }

    #[test]
    fn gaussian_refused() {
        let land = builtin_paper_f();
        let pts = find_critical_points(&land, 20_000, 1e-10).unwrap();
        let prof = jump_profile(&pts, 0.5).unwrap();
        let cfg = RateConfig::default().with_samples(10);
        let r = mc_estimate_rates(&land, &pts, &prof, &NoiseModel::gaussian(1.0), 0, &cfg, 2, Execution::Sequential);
        assert!(matches!(r, Err(Error::UnsupportedKind(_))));
    }

    #[test]
    fn sequential_equals_parallel() {
        let land = builtin_paper_f();
        let pts = find_critical_points(&land, 20_000, 1e-10).unwrap();
        let prof = jump_profile(&pts, 0.5).unwrap();
        let noise = NoiseModel::pareto(1.2, 0.1);
        let cfg = RateConfig::default().with_samples(10_000);
        let a = mc_estimate_rates(&land, &pts, &prof, &noise, 1, &cfg, 5, Execution::Sequential).unwrap();
        let b = mc_estimate_rates(&land, &pts, &prof, &noise, 1, &cfg, 5, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
