//! Heavy-tailed noise injection for finite-sum objectives.
//!
//! The injected direction is `g_SB + Z (g_SB* - g_LB)` with a positive
//! multiplier `Z = c W`, `W ~ Pareto(alpha)`, followed by a clipped step.

use crate::error::{Error, Result};
use crate::landscape::{builtin_paper_f, find_critical_points, CriticalPointSet, Landscape1D};
use crate::noise::pareto_unit;
use crate::rng::{stream, Purpose, Stream};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// A loss `L(theta) = (1/N) sum_i l_i(theta)` over `N` examples.
pub trait FiniteSumProblem: Sync {
    fn n_examples(&self) -> usize;
    fn dim(&self) -> usize;
    fn loss_i(&self, i: usize, theta: &[f64]) -> f64;
    /// Writes the gradient of `l_i` into `out`.
    fn grad_i(&self, i: usize, theta: &[f64], out: &mut [f64]);

    fn loss(&self, theta: &[f64]) -> f64 {
        let n = self.n_examples();
        (0..n).map(|i| self.loss_i(i, theta)).sum::<f64>() / n as f64
    }

    /// Mean gradient over `batch` written into `out`.
    fn batch_grad(&self, batch: &[usize], theta: &[f64], out: &mut [f64]) {
        let mut g = vec![0.0; self.dim()];
        out.iter_mut().for_each(|o| *o = 0.0);
        for &i in batch {
            self.grad_i(i, theta, &mut g);
            for (o, gi) in out.iter_mut().zip(&g) {
                *o += gi;
            }
        }
        let k = batch.len() as f64;
        out.iter_mut().for_each(|o| *o /= k);
    }

    fn grad(&self, theta: &[f64], out: &mut [f64]) {
        let all: Vec<usize> = (0..self.n_examples()).collect();
        self.batch_grad(&all, theta, out);
    }

    /// Constraint applied after every step; unconstrained by default.
    fn project(&self, _theta: &mut [f64]) {}
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Ridge-regularised least squares on Gaussian features.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub ridge: f64,
}

impl LeastSquares {
    /// `n` examples in `d` dimensions with `y = x . w + 0.1 eps`.
    pub fn synthetic(n: usize, d: usize, ridge: f64, seed: u64) -> Self {
        let mut rng = stream(seed, Purpose::Init, 1);
        let w: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let xi: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let eps: f64 = rng.sample(StandardNormal);
            y.push(dot(&xi, &w) + 0.1 * eps);
            x.push(xi);
        }
        LeastSquares { x, y, ridge }
    }
}

impl FiniteSumProblem for LeastSquares {
    fn n_examples(&self) -> usize {
        self.y.len()
    }

    fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    fn loss_i(&self, i: usize, theta: &[f64]) -> f64 {
        let r = dot(&self.x[i], theta) - self.y[i];
        0.5 * r * r + 0.5 * self.ridge * dot(theta, theta)
    }

    fn grad_i(&self, i: usize, theta: &[f64], out: &mut [f64]) {
        let r = dot(&self.x[i], theta) - self.y[i];
        for ((o, xi), t) in out.iter_mut().zip(&self.x[i]).zip(theta) {
            *o = r * xi + self.ridge * t;
        }
    }
}

/// L2-regularised logistic regression on two separable Gaussian blobs.
#[derive(Debug, Clone)]
pub struct Logistic {
    pub x: Vec<Vec<f64>>,
    /// Labels in {-1, +1}.
    pub y: Vec<f64>,
    pub ridge: f64,
}

impl Logistic {
    /// Blobs centred at `+-mu` (with `|mu| = 3`) of unit spread. Points on
    /// the wrong side of the separating hyperplane are reflected, so the
    /// data are separable by construction.
    pub fn blobs(n: usize, d: usize, ridge: f64, seed: u64) -> Self {
        let mut rng = stream(seed, Purpose::Init, 2);
        let mut mu: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let s = 3.0 / norm(&mu);
        mu.iter_mut().for_each(|m| *m *= s);
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let label = if i % 2 == 0 { 1.0 } else { -1.0 };
            let mut xi: Vec<f64> = mu.iter().map(|m| label * m + rng.sample::<f64, _>(StandardNormal)).collect();
            let side = dot(&xi, &mu) * label;
            if side <= 0.0 {
                // reflect across the hyperplane orthogonal to mu
                let k = 2.0 * dot(&xi, &mu) / dot(&mu, &mu);
                xi.iter_mut().zip(&mu).for_each(|(v, m)| *v -= k * m);
            }
            x.push(xi);
            y.push(label);
        }
        Logistic { x, y, ridge }
    }
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl FiniteSumProblem for Logistic {
    fn n_examples(&self) -> usize {
        self.y.len()
    }

    fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    fn loss_i(&self, i: usize, theta: &[f64]) -> f64 {
        softplus(-self.y[i] * dot(&self.x[i], theta)) + 0.5 * self.ridge * dot(theta, theta)
    }

    fn grad_i(&self, i: usize, theta: &[f64], out: &mut [f64]) {
        let m = self.y[i] * dot(&self.x[i], theta);
        let w = -self.y[i] * sigmoid(-m);
        for ((o, xi), t) in out.iter_mut().zip(&self.x[i]).zip(theta) {
            *o = w * xi + self.ridge * t;
        }
    }
}

/// Scalar multi-well sum: `l_i(theta) = f(theta) + a_i theta` with shifts
/// `a_i = +-a` alternating, so the mean loss is exactly `f`. Iterates are
/// kept in `[-L, L]`.
#[derive(Debug, Clone)]
pub struct MultiWell {
    pub land: Landscape1D,
    pub points: CriticalPointSet,
    pub shifts: Vec<f64>,
}

impl MultiWell {
    pub fn new(land: Landscape1D, n: usize, a: f64) -> Result<Self> {
        if n == 0 || n % 2 == 1 {
            return Err(Error::config(format!("multi-well needs an even number of examples, got {n}")));
        }
        let points = find_critical_points(&land, 20_000, 1e-12)?;
        let shifts = (0..n).map(|i| if i % 2 == 0 { a } else { -a }).collect();
        Ok(MultiWell { land, points, shifts })
    }

    pub fn standard(n: usize, a: f64) -> Result<Self> {
        Self::new(builtin_paper_f(), n, a)
    }
}

impl FiniteSumProblem for MultiWell {
    fn n_examples(&self) -> usize {
        self.shifts.len()
    }

    fn dim(&self) -> usize {
        1
    }

    fn loss_i(&self, i: usize, theta: &[f64]) -> f64 {
        self.land.value(theta[0]) + self.shifts[i] * theta[0]
    }

    fn grad_i(&self, i: usize, theta: &[f64], out: &mut [f64]) {
        out[0] = self.land.grad(theta[0]) + self.shifts[i];
    }

    fn loss(&self, theta: &[f64]) -> f64 {
        self.land.value(theta[0])
    }

    fn batch_grad(&self, batch: &[usize], theta: &[f64], out: &mut [f64]) {
        let s: f64 = batch.iter().map(|&i| self.shifts[i]).sum();
        out[0] = self.land.grad(theta[0]) + s / batch.len() as f64;
    }

    fn project(&self, theta: &mut [f64]) {
        let l = self.land.radius();
        theta[0] = theta[0].clamp(-l, l);
    }
}

/// How the perturbation batch relates to the small batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionMode {
    /// `SB*` drawn independently of `SB`.
    Independent,
    /// `SB* = SB`.
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionConfig {
    pub eta: f64,
    /// Clipping threshold; `None` disables clipping.
    #[serde(default)]
    pub b: Option<f64>,
    pub sb: usize,
    /// Size of `SB*` in independent mode; defaults to `sb`.
    #[serde(default)]
    pub sb_star: Option<usize>,
    pub lb: usize,
    pub c: f64,
    pub alpha: f64,
    pub mode: InjectionMode,
    pub phase1: u64,
    pub phase2: u64,
    #[serde(default = "default_trace_stride")]
    pub trace_stride: u64,
    #[serde(default = "default_delta")]
    pub sharpness_delta: f64,
    #[serde(default = "default_draws")]
    pub sharpness_draws: usize,
}

fn default_trace_stride() -> u64 {
    100
}

fn default_delta() -> f64 {
    0.01
}

fn default_draws() -> usize {
    100
}

impl InjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.eta)));
        }
        if let Some(b) = self.b {
            if !(b > 0.0) {
                return Err(Error::config(format!("clipping threshold must be positive, got {b}")));
            }
        }
        if self.sb == 0 || self.sb_star == Some(0) {
            return Err(Error::config("batch sizes must be at least 1"));
        }
        if self.lb < self.sb {
            return Err(Error::config(format!("large batch {} is smaller than small batch {}", self.lb, self.sb)));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::config(format!("multiplier scale must be non-negative, got {}", self.c)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("tail index must be positive, got {}", self.alpha)));
        }
        if self.trace_stride == 0 {
            return Err(Error::config("trace_stride must be at least 1"));
        }
        if !(self.sharpness_delta > 0.0) || self.sharpness_draws == 0 {
            return Err(Error::config("sharpness needs delta > 0 and at least one draw"));
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        self.b.unwrap_or(f64::INFINITY)
    }

    pub fn sb_star_size(&self) -> usize {
        match self.mode {
            InjectionMode::Shared => self.sb,
            InjectionMode::Independent => self.sb_star.unwrap_or(self.sb),
        }
    }

    /// Draw one multiplier `Z = c W`.
    pub fn multiplier<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.c * pareto_unit(rng, self.alpha)
    }
}

/// Index sets for one step. `sb_star` is `None` in shared mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batches {
    pub sb: Vec<usize>,
    pub sb_star: Option<Vec<usize>>,
    pub lb: Vec<usize>,
}

fn sample_batch<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Result<Vec<usize>> {
    if k > n {
        return Err(Error::BatchTooLarge { requested: k, available: n });
    }
    Ok(index::sample(rng, n, k).into_vec())
}

/// Fresh batches, each without replacement, in the order `SB`, `SB*`, `LB`.
pub fn draw_batches<R: Rng + ?Sized>(cfg: &InjectionConfig, n: usize, rng: &mut R) -> Result<Batches> {
    let sb = sample_batch(rng, n, cfg.sb)?;
    let sb_star = match cfg.mode {
        InjectionMode::Shared => None,
        InjectionMode::Independent => Some(sample_batch(rng, n, cfg.sb_star_size())?),
    };
    let lb = sample_batch(rng, n, cfg.lb)?;
    Ok(Batches { sb, sb_star, lb })
}

/// Radial clip of `v` to norm `b`, in place.
pub fn clip(v: &mut [f64], b: f64) {
    let n = norm(v);
    if n > b {
        let s = b / n;
        v.iter_mut().for_each(|x| *x *= s);
    }
}

/// `g_heavy = g_SB + z (g_SB* - g_LB)` into `out`. The perturbation term is
/// skipped entirely when `z == 0`.
pub fn heavy_direction<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    theta: &[f64],
    batches: &Batches,
    z: f64,
    out: &mut [f64],
) {
    problem.batch_grad(&batches.sb, theta, out);
    if z != 0.0 {
        let d = problem.dim();
        let mut star = vec![0.0; d];
        let mut large = vec![0.0; d];
        problem.batch_grad(batches.sb_star.as_deref().unwrap_or(&batches.sb), theta, &mut star);
        problem.batch_grad(&batches.lb, theta, &mut large);
        for ((o, s), l) in out.iter_mut().zip(&star).zip(&large) {
            *o += z * (s - l);
        }
    }
}

/// `theta <- proj(theta - clip_b(eta g))`; returns the norm of the clipped update.
fn apply_update<P: FiniteSumProblem + ?Sized>(problem: &P, theta: &mut [f64], g: &mut [f64], eta: f64, b: f64) -> Result<f64> {
    g.iter_mut().for_each(|x| *x *= eta);
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteGradient(norm(theta)));
    }
    clip(g, b);
    for (t, u) in theta.iter_mut().zip(g.iter()) {
        *t -= u;
    }
    problem.project(theta);
    Ok(norm(g))
}

/// Heavy step with given batches and multiplier.
pub fn heavy_step_with<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    cfg: &InjectionConfig,
    theta: &mut [f64],
    batches: &Batches,
    z: f64,
) -> Result<f64> {
    let mut g = vec![0.0; problem.dim()];
    heavy_direction(problem, theta, batches, z, &mut g);
    apply_update(problem, theta, &mut g, cfg.eta, cfg.threshold())
}

/// Plain clipped step on one batch: `theta <- proj(theta - clip_b(eta g_B))`.
pub fn clipped_step<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    eta: f64,
    b: f64,
    theta: &mut [f64],
    batch: &[usize],
) -> Result<f64> {
    let mut g = vec![0.0; problem.dim()];
    problem.batch_grad(batch, theta, &mut g);
    apply_update(problem, theta, &mut g, eta, b)
}

/// Independent streams for batch indices, multipliers and sharpness draws,
/// so that changing `c` leaves the batch sequence untouched.
#[derive(Debug, Clone)]
pub struct InjectionRngs {
    pub batches: Stream,
    pub multiplier: Stream,
    pub sharpness: Stream,
}

impl InjectionRngs {
    pub fn new(seed: u64, index: u64) -> Self {
        InjectionRngs {
            batches: stream(seed, Purpose::Batches, index),
            multiplier: stream(seed, Purpose::Multiplier, index),
            sharpness: stream(seed, Purpose::Sharpness, index),
        }
    }
}

/// One injected step: fresh batches, exactly one multiplier draw, clipped
/// update. Returns the update norm.
pub fn heavy_step<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    cfg: &InjectionConfig,
    theta: &mut [f64],
    rngs: &mut InjectionRngs,
) -> Result<f64> {
    let batches = draw_batches(cfg, problem.n_examples(), &mut rngs.batches)?;
    let z = cfg.multiplier(&mut rngs.multiplier);
    heavy_step_with(problem, cfg, theta, &batches, z)
}

/// `E |L(theta + nu) - L(theta)|` for `nu ~ N(0, delta^2 I)`, averaged over `n_draws`.
pub fn expected_sharpness<P: FiniteSumProblem + ?Sized, R: Rng + ?Sized>(
    problem: &P,
    theta: &[f64],
    delta: f64,
    n_draws: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_draws == 0 {
        return Err(Error::config("expected sharpness needs at least one draw"));
    }
    let base = problem.loss(theta);
    let mut p = theta.to_vec();
    let mut acc = 0.0;
    for _ in 0..n_draws {
        for (pi, ti) in p.iter_mut().zip(theta) {
            let e: f64 = StandardNormal.sample(rng);
            *pi = ti + delta * e;
        }
        acc += (problem.loss(&p) - base).abs();
    }
    Ok(acc / n_draws as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub step: u64,
    /// 1 while injecting, 2 during the large-batch tail.
    pub phase: u8,
    pub loss: f64,
    pub sharpness: f64,
    /// Largest update norm since the previous trace point.
    pub max_update: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoPhaseRun {
    pub theta: Vec<f64>,
    pub trace: Vec<TracePoint>,
    pub max_update: f64,
}

/// `phase1` injected steps, then `phase2` clipped large-batch steps. The
/// trace records step 0 and every `trace_stride`-th step, plus the last one.
pub fn run_two_phase<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    cfg: &InjectionConfig,
    theta0: &[f64],
    rngs: &mut InjectionRngs,
) -> Result<TwoPhaseRun> {
    cfg.validate()?;
    if theta0.len() != problem.dim() {
        return Err(Error::config(format!("initial point has dimension {}, problem has {}", theta0.len(), problem.dim())));
    }
    let n = problem.n_examples();
    let total = cfg.phase1 + cfg.phase2;
    let mut theta = theta0.to_vec();
    problem.project(&mut theta);
    let mut trace = Vec::new();
    let mut window = 0.0f64;
    let mut max_update = 0.0f64;
    let record = |step: u64, theta: &[f64], window: f64, rngs: &mut InjectionRngs, trace: &mut Vec<TracePoint>| -> Result<()> {
        let sharpness = expected_sharpness(problem, theta, cfg.sharpness_delta, cfg.sharpness_draws, &mut rngs.sharpness)?;
        trace.push(TracePoint {
            step,
            phase: if step <= cfg.phase1 && cfg.phase1 > 0 { 1 } else { 2 },
            loss: problem.loss(theta),
            sharpness,
            max_update: window,
        });
        Ok(())
    };
    record(0, &theta, 0.0, rngs, &mut trace)?;
    for k in 1..=total {
        let u = if k <= cfg.phase1 {
            heavy_step(problem, cfg, &mut theta, rngs)?
        } else {
            let lb = sample_batch(&mut rngs.batches, n, cfg.lb)?;
            clipped_step(problem, cfg.eta, cfg.threshold(), &mut theta, &lb)?
        };
        window = window.max(u);
        max_update = max_update.max(u);
        if k % cfg.trace_stride == 0 || k == total {
            record(k, &theta, window, rngs, &mut trace)?;
            window = 0.0;
        }
    }
    Ok(TwoPhaseRun { theta, trace, max_update })
}

/// Names accepted by [`Problem::by_name`].
pub const PROBLEM_NAMES: [&str; 3] = ["least-squares", "logistic", "multi-well"];

/// One of the shipped synthetic problems.
#[derive(Debug, Clone)]
pub enum Problem {
    LeastSquares(LeastSquares),
    Logistic(Logistic),
    MultiWell(MultiWell),
}

impl Problem {
    /// Built-in problem; `data_seed` fixes the synthetic data set.
    pub fn by_name(name: &str, data_seed: u64) -> Result<Self> {
        match name {
            "least-squares" => Ok(Problem::LeastSquares(LeastSquares::synthetic(200, 10, 1e-3, data_seed))),
            "logistic" => Ok(Problem::Logistic(Logistic::blobs(200, 5, 1e-2, data_seed))),
            "multi-well" => Ok(Problem::MultiWell(MultiWell::standard(200, 2.0)?)),
            other => Err(Error::config(format!("unknown problem {other:?}; expected one of {PROBLEM_NAMES:?}"))),
        }
    }

    pub fn as_dyn(&self) -> &dyn FiniteSumProblem {
        match self {
            Problem::LeastSquares(p) => p,
            Problem::Logistic(p) => p,
            Problem::MultiWell(p) => p,
        }
    }

    /// Settings used when a demo config gives none.
    pub fn default_config(&self) -> InjectionConfig {
        let base = InjectionConfig {
            eta: 0.05,
            b: Some(5.0),
            sb: 10,
            sb_star: None,
            lb: 100,
            c: 0.5,
            alpha: 1.4,
            mode: InjectionMode::Independent,
            phase1: 2_000,
            phase2: 500,
            trace_stride: 100,
            sharpness_delta: default_delta(),
            sharpness_draws: default_draws(),
        };
        match self {
            Problem::MultiWell(_) => {
                InjectionConfig { eta: 0.01, b: Some(0.5), phase1: 20_000, phase2: 5_000, trace_stride: 500, ..base }
            }
            _ => base,
        }
    }

    /// Default start: the origin, or `0.3` (inside a sharp field) for the multi-well sum.
    pub fn default_start(&self) -> Vec<f64> {
        match self {
            Problem::MultiWell(_) => vec![0.3],
            p => vec![0.0; p.as_dyn().dim()],
        }
    }
}
