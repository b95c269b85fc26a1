use crate::error::{Error, Result};
use crate::landscape::Landscape1D;
use crate::sgd::truncate;

/// Signed jump sizes and the gaps between consecutive jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpVector {
    pub w: Vec<f64>,
    /// One fewer entry than `w`.
    pub t_prime: Vec<f64>,
}

impl JumpVector {
    pub fn new(w: Vec<f64>, t_prime: Vec<f64>) -> Result<Self> {
        if w.is_empty() || t_prime.len() + 1 != w.len() {
            return Err(Error::config(format!("{} jumps need {} gaps, got {}", w.len(), w.len().saturating_sub(1), t_prime.len())));
        }
        if t_prime.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
            return Err(Error::config("gaps must be finite and nonnegative"));
        }
        Ok(JumpVector { w, t_prime })
    }

    /// Jump times `t_1 = 0, t_j = t'_1 + ... + t'_{j-1}`.
    pub fn times(&self) -> Vec<f64> {
        let mut t = vec![0.0];
        for &g in &self.t_prime {
            t.push(t.last().unwrap() + g);
        }
        t
    }
}

/// Fixed-step RK4 for the gradient flow `x' = -f'(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowIntegrator {
    pub step: f64,
    /// Stop flowing once `|f'| <` this; the state is parked at its attractor.
    pub park_tol: f64,
}

impl Default for FlowIntegrator {
    fn default() -> Self {
        FlowIntegrator { step: 1e-3, park_tol: 1e-10 }
    }
}

impl FlowIntegrator {
    /// Flow for time `t`, or until `stop(x)` holds.
    #[inline]
    pub(crate) fn flow(&self, land: &Landscape1D, mut x: f64, t: f64, mut stop: impl FnMut(f64) -> bool) -> Result<f64> {
        let mut left = t;
        while left > 0.0 {
            let k1 = -land.grad(x);
            if !k1.is_finite() || !x.is_finite() {
                return Err(Error::IntegratorFailure);
            }
            if k1.abs() < self.park_tol || stop(x) {
                break;
            }
            let h = self.step.min(left);
            let k2 = -land.grad(x + 0.5 * h * k1);
            let k3 = -land.grad(x + 0.5 * h * k2);
            let k4 = -land.grad(x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            left -= h;
        }
        if !x.is_finite() {
            return Err(Error::IntegratorFailure);
        }
        Ok(x)
    }
}

/// Endpoint `h_i(w, t)` of the jump-perturbed flow started at `m`: jump,
/// flow for each gap, jump again; no flow after the last jump. Jumps are
/// clipped at `b` and projected onto `[-l, l]`.
pub fn jump_ode(land: &Landscape1D, m: f64, jv: &JumpVector, b: f64, l: f64, integ: &FlowIntegrator) -> Result<f64> {
    let mut x = (m + truncate(jv.w[0], b)).clamp(-l, l);
    for (w, &gap) in jv.w[1..].iter().zip(&jv.t_prime) {
        x = integ.flow(land, x, gap, |_| false)?;
        x = (x + truncate(*w, b)).clamp(-l, l);
    }
    Ok(x)
}

const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Flow-time coordinate on one side of a minimum: `theta(u)` is the time the
/// flow needs to travel from distance `u_far` to distance `u` from `m`.
/// Tabulated on a uniform grid in `u` and interpolated by cubic Hermite
/// polynomials using the exact slope `-1/|f'|`.
#[derive(Debug, Clone)]
struct SideTable {
    u0: f64,
    du: f64,
    theta: Vec<f64>,
    slope: Vec<f64>,
}

impl SideTable {
    fn new(land: &Landscape1D, m: f64, dir: f64, u_thr: f64, u_far: f64, n: usize) -> Result<Self> {
        let du = (u_far - u_thr) / n as f64;
        let speed = |u: f64| {
            let g = land.grad(m + dir * u).abs();
            if g > 0.0 && g.is_finite() { Ok(g) } else { Err(Error::IntegratorFailure) }
        };
        let mut theta = vec![0.0; n + 1];
        let mut slope = vec![0.0; n + 1];
        for k in (0..n).rev() {
            let (a, c) = (u_thr + k as f64 * du, 0.5 * du);
            let mut seg = 0.0;
            for (x, wt) in GAUSS5 {
                seg += wt * c / speed(a + c + c * x)?;
            }
            theta[k] = theta[k + 1] + seg;
        }
        for (k, s) in slope.iter_mut().enumerate() {
            *s = -1.0 / speed(u_thr + k as f64 * du)?;
        }
        Ok(SideTable { u0: u_thr, du, theta, slope })
    }

    fn u_far(&self) -> f64 {
        self.u0 + self.du * (self.theta.len() - 1) as f64
    }

    fn theta_thr(&self) -> f64 {
        self.theta[0]
    }

    /// Hermite basis on cell `k` at local coordinate `s`.
    #[inline]
    fn cell(&self, k: usize, s: f64) -> (f64, f64) {
        let (p0, p1) = (self.theta[k], self.theta[k + 1]);
        let (m0, m1) = (self.slope[k] * self.du, self.slope[k + 1] * self.du);
        let s2 = s * s;
        let s3 = s2 * s;
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * p0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * p1 + (s3 - s2) * m1;
        let d = (6.0 * s2 - 6.0 * s) * p0 + (3.0 * s2 - 4.0 * s + 1.0) * m0 + (-6.0 * s2 + 6.0 * s) * p1 + (3.0 * s2 - 2.0 * s) * m1;
        (v, d)
    }

    #[inline]
    fn theta_at(&self, u: f64) -> f64 {
        let pos = ((u - self.u0) / self.du).clamp(0.0, (self.theta.len() - 1) as f64);
        let k = (pos as usize).min(self.theta.len() - 2);
        self.cell(k, pos - k as f64).0
    }

    /// Distance reached from `u` after time `t`, or `None` once the flow has
    /// crossed the threshold end of the table.
    #[inline]
    fn advance(&self, u: f64, t: f64) -> Option<f64> {
        let target = self.theta_at(u) + t;
        if target >= self.theta_thr() {
            return None;
        }
        // theta decreases along the grid
        let k = self.theta.partition_point(|&th| th > target).clamp(1, self.theta.len() - 1) - 1;
        let (a, b) = (self.theta[k], self.theta[k + 1]);
        let mut s = if a > b { ((a - target) / (a - b)).clamp(0.0, 1.0) } else { 0.0 };
        for _ in 0..4 {
            let (v, d) = self.cell(k, s);
            if d == 0.0 {
                break;
            }
            s = (s - (v - target) / d).clamp(0.0, 1.0);
        }
        Some(self.u0 + (k as f64 + s) * self.du)
    }
}

/// Tabulated version of [`jump_ode`] for one field that also decides early
/// when a partial jump vector can no longer leave the field.
#[derive(Debug, Clone)]
pub(crate) struct FieldFlow {
    m: f64,
    lower: f64,
    upper: f64,
    b: f64,
    radius: f64,
    l_star: usize,
    /// Toward `lower`, toward `upper`.
    sides: [Option<SideTable>; 2],
}

impl FieldFlow {
    pub(crate) fn new(
        land: &Landscape1D,
        (m, lower, upper): (f64, f64, f64),
        b: f64,
        l_star: u32,
        grid: usize,
    ) -> Result<Self> {
        let l_star = l_star as usize;
        let mut sides = [None, None];
        if l_star > 1 {
            let far = (l_star - 1) as f64 * b;
            for (slot, (dir, d)) in sides.iter_mut().zip([(-1.0, m - lower), (1.0, upper - m)]) {
                let u_thr = d - far;
                if d.is_finite() && u_thr < far {
                    *slot = Some(SideTable::new(land, m, dir, u_thr, far * (1.0 + 1e-9), grid)?);
                }
            }
        }
        Ok(FieldFlow { m, lower, upper, b, radius: land.radius(), l_star, sides })
    }

    #[inline]
    fn trapped(&self, x: f64, remaining: usize) -> bool {
        let reach = remaining as f64 * self.b;
        x - reach >= self.lower && x + reach <= self.upper
    }

    /// Smallest `T` such that every escaping jump vector has all gaps `<= T`.
    pub(crate) fn gap_bound(&self) -> f64 {
        let mut bound: f64 = 0.0;
        for (side, d) in self.sides.iter().zip([self.m - self.lower, self.upper - self.m]) {
            let Some(tab) = side else { continue };
            for j in 1..self.l_star {
                let start = (j as f64 * self.b).min(tab.u_far());
                let thr = d - (self.l_star - j) as f64 * self.b;
                if thr < start {
                    bound = bound.max(tab.theta_at(thr.max(tab.u0)) - tab.theta_at(start));
                }
            }
        }
        bound
    }

    /// Endpoint of the jump-perturbed flow, or `None` when it stays inside.
    #[inline]
    pub(crate) fn escape(&self, w: &[f64], gaps: &[f64]) -> Option<f64> {
        let (m, b, l) = (self.m, self.b, self.radius);
        let mut x = (m + truncate(w[0], b)).clamp(-l, l);
        for (j, (wj, &gap)) in w[1..].iter().zip(gaps).enumerate() {
            let remaining = self.l_star - 1 - j;
            if self.trapped(x, remaining) {
                return None;
            }
            let (dir, tab) = if x > m { (1.0, self.sides[1].as_ref()) } else { (-1.0, self.sides[0].as_ref()) };
            let tab = tab?;
            let u = tab.advance((x - m).abs().min(tab.u_far()), gap)?;
            x = m + dir * u;
            if self.trapped(x, remaining) {
                return None;
            }
            x = (x + truncate(*wj, b)).clamp(-l, l);
        }
        Some(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{builtin_paper_f, find_critical_points};

    #[test]
    fn single_jump_has_no_flow() {
        let f = builtin_paper_f();
        let jv = JumpVector::new(vec![0.3], vec![]).unwrap();
        let x = jump_ode(&f, -0.7, &jv, 0.5, 1.6, &FlowIntegrator::default()).unwrap();
        assert!((x - (-0.4)).abs() < 1e-15);
        let jv = JumpVector::new(vec![9.0], vec![]).unwrap();
        assert_eq!(jump_ode(&f, 1.3, &jv, f64::INFINITY, 1.6, &FlowIntegrator::default()).unwrap(), 1.6);
    }

    #[test]
    fn zero_jumps_relax_to_the_minimum() {
        let f = builtin_paper_f();
        let pts = find_critical_points(&f, 20_000, 1e-10).unwrap();
        let m2 = pts.minima()[1];
        let jv = JumpVector::new(vec![0.0, 0.0], vec![5.0]).unwrap();
        let x = jump_ode(&f, m2, &jv, 0.5, 1.6, &FlowIntegrator::default()).unwrap();
        assert!(pts.field(1).contains(x));
        assert!((x - m2).abs() < 1e-6);
        // displaced start flows back
        let jv = JumpVector::new(vec![0.3, 0.0], vec![20.0]).unwrap();
        let x = jump_ode(&f, m2, &jv, 0.5, 1.6, &FlowIntegrator::default()).unwrap();
        assert!((x - m2).abs() < 1e-4, "{x} vs {m2}");
    }

    #[test]
    fn two_clipped_jumps_without_flow() {
        let f = builtin_paper_f();
        let pts = find_critical_points(&f, 20_000, 1e-10).unwrap();
        let m2 = pts.minima()[1];
        let jv = JumpVector::new(vec![10.0, 10.0], vec![0.0]).unwrap();
        let x = jump_ode(&f, m2, &jv, 0.5, 1.6, &FlowIntegrator::default()).unwrap();
        assert!((x - (m2 + 1.0)).abs() < 1e-12);
        assert_eq!(pts.field_of(x).index(), Some(2));
    }

    #[test]
    fn halving_the_step_changes_little() {
        let f = builtin_paper_f();
        let fine = FlowIntegrator { step: 5e-4, ..Default::default() };
        for (w, t) in [(vec![0.45, 0.5], vec![0.3]), (vec![-0.5, -0.4], vec![0.05]), (vec![0.2, -0.3, 0.5], vec![0.7, 0.1])] {
            let jv = JumpVector::new(w, t).unwrap();
            let a = jump_ode(&f, -0.7, &jv, 0.5, 1.6, &FlowIntegrator::default()).unwrap();
            let b = jump_ode(&f, -0.7, &jv, 0.5, 1.6, &fine).unwrap();
            assert!((a - b).abs() < 1e-6, "{a} {b}");
        }
    }

    #[test]
    fn tabulated_flow_agrees_with_rk4() {
        let f = builtin_paper_f();
        let pts = find_critical_points(&f, 20_000, 1e-10).unwrap();
        let integ = FlowIntegrator::default();
        for (field, b, l_star) in [(1usize, 0.5, 2u32), (1, 0.28, 3), (3, 0.5, 2)] {
            let fl = pts.field(field);
            let tab = FieldFlow::new(&f, (fl.minimum, fl.lower, fl.upper), b, l_star, 16_384).unwrap();
            let bound = tab.gap_bound();
            assert!(bound > 0.0 && bound < 20.0, "{bound}");
            let (mut escapes, mut checked) = (0, 0);
            for k in 0..3000 {
                let g = |a: f64| (k as f64 * a).sin();
                let w: Vec<f64> = (0..l_star).map(|j| g(0.37 + j as f64) * 0.6).collect();
                let t: Vec<f64> = (1..l_star).map(|j| g(0.91 * j as f64 + 0.13).abs() * 0.8 * bound).collect();
                let jv = JumpVector::new(w.clone(), t.clone()).unwrap();
                let full = jump_ode(&f, fl.minimum, &jv, b, 1.6, &integ).unwrap();
                match tab.escape(&w, &t) {
                    Some(x) => {
                        assert!((x - full).abs() < 1e-8, "{x} vs {full}");
                        escapes += !fl.contains(x) as u32;
                        checked += 1;
                    }
                    None => assert!(fl.contains(full), "{full}"),
                }
            }
            assert!(escapes > 0 && checked > 0);
        }
    }

    #[test]
    fn gaps_beyond_the_bound_never_escape() {
        let f = builtin_paper_f();
        let pts = find_critical_points(&f, 20_000, 1e-10).unwrap();
        let fl = pts.field(1);
        let integ = FlowIntegrator::default();
        let tab = FieldFlow::new(&f, (fl.minimum, fl.lower, fl.upper), 0.5, 2, 16_384).unwrap();
        let bound = tab.gap_bound();
        for k in 0..400 {
            let w = vec![-0.5, -(k as f64 * 0.01)];
            let jv = JumpVector::new(w, vec![bound * 1.001]).unwrap();
            let x = jump_ode(&f, fl.minimum, &jv, 0.5, 1.6, &integ).unwrap();
            assert!(fl.contains(x));
        }
        // and a gap just inside the bound escapes with maximal jumps
        let jv = JumpVector::new(vec![-0.5, -0.5], vec![bound * 0.99]).unwrap();
        assert!(!fl.contains(jump_ode(&f, fl.minimum, &jv, 0.5, 1.6, &integ).unwrap()));
    }

    #[test]
    fn malformed_vectors_rejected() {
        assert!(JumpVector::new(vec![1.0, 2.0], vec![]).is_err());
        assert!(JumpVector::new(vec![1.0, 2.0], vec![-1.0]).is_err());
        assert_eq!(JumpVector::new(vec![1.0, 2.0, 3.0], vec![0.5, 1.5]).unwrap().times(), vec![0.0, 0.5, 2.0]);
    }
}
