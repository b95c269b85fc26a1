//! Two-dimensional modified Himmelblau landscape.
//!
//! The classic Himmelblau function `h` is composed with a horizontal stretch
//! `(x, y) -> s(x) (x - a_x, y)`, `s = exp(c_0 (x - a_x - c_x)) + 1`, which
//! makes the four basins unequal in size. A rectangle around `y = a_y` is then
//! cut down to `min(h_phi, c_1 |y - a_y|^1.1)`, turning the lower-left minimum
//! into a segment of minimizers. The objective is `scale * h*`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub type Point2 = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HimmelblauParams {
    pub a_x: f64,
    pub a_y: f64,
    pub b_l: f64,
    pub b_r: f64,
    pub b_y: f64,
    pub c_0: f64,
    pub c_1: f64,
    /// Offset inside the stretch exponent.
    pub c_x: f64,
    pub scale: f64,
}

impl Default for HimmelblauParams {
    fn default() -> Self {
        HimmelblauParams {
            a_x: 1.5,
            a_y: -2.9,
            b_l: -5.5,
            b_r: -0.5,
            b_y: 2.0,
            c_0: 0.4,
            c_1: 12.0,
            c_x: 1.5,
            scale: 0.1,
        }
    }
}

/// A set of minimizers: isolated points or a segment.
#[derive(Debug, Clone, PartialEq)]
pub enum Attractor {
    Point(Point2),
    Segment(Point2, Point2),
}

impl Attractor {
    pub fn distance(&self, p: Point2) -> f64 {
        match *self {
            Attractor::Point(a) => dist(a, p),
            Attractor::Segment(a, b) => {
                let d = [b[0] - a[0], b[1] - a[1]];
                let len2 = d[0] * d[0] + d[1] * d[1];
                let t = if len2 > 0.0 {
                    (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                dist([a[0] + t * d[0], a[1] + t * d[1]], p)
            }
        }
    }

    /// A representative minimizer (segment midpoint).
    pub fn representative(&self) -> Point2 {
        match *self {
            Attractor::Point(a) => a,
            Attractor::Segment(a, b) => [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])],
        }
    }
}

#[inline]
fn dist(a: Point2, b: Point2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Debug, Clone)]
pub struct Landscape2D {
    pub params: HimmelblauParams,
    /// Projection ball radius.
    pub radius: f64,
    /// Known minimizer sets, in basin-label order.
    attractors: Vec<Attractor>,
}

struct Parts {
    h_phi: f64,
    grad_phi: Point2,
    in_rect: bool,
    cut: f64,
    grad_cut: Point2,
}

impl Landscape2D {
    /// Landscape without registered attractors (labels are assigned lazily).
    pub fn new(params: HimmelblauParams, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::config("projection radius must be positive"));
        }
        Ok(Landscape2D { params, radius, attractors: Vec::new() })
    }

    pub fn attractors(&self) -> &[Attractor] {
        &self.attractors
    }

    #[inline]
    fn parts(&self, p: Point2) -> Parts {
        let q = &self.params;
        let (x, y) = (p[0], p[1]);
        let xs = x - q.a_x;
        let e = (q.c_0 * (xs - q.c_x)).exp();
        let s = e + 1.0;
        let ds = q.c_0 * e;
        let big_x = xs * s;
        let big_y = y * s;
        let u = big_x * big_x + big_y - 11.0;
        let v = big_x + big_y * big_y - 7.0;
        let h_phi = u * u + v * v;
        let h_bx = 4.0 * big_x * u + 2.0 * v;
        let h_by = 2.0 * u + 4.0 * big_y * v;
        let grad_phi = [h_bx * (s + xs * ds) + h_by * y * ds, h_by * s];

        let dy = y - q.a_y;
        let in_rect = x >= q.b_l && x <= q.b_r && dy.abs() < q.b_y;
        let ady = dy.abs();
        let cut = q.c_1 * ady.powf(1.1);
        let grad_cut = [0.0, q.c_1 * 1.1 * ady.powf(0.1) * dy.signum()];
        Parts { h_phi, grad_phi, in_rect, cut, grad_cut }
    }

    pub fn value(&self, p: Point2) -> f64 {
        let k = self.parts(p);
        let h = if k.in_rect { k.h_phi.min(k.cut) } else { k.h_phi };
        self.params.scale * h
    }

    #[inline]
    pub fn grad(&self, p: Point2) -> Point2 {
        let k = self.parts(p);
        let g = if k.in_rect && k.cut < k.h_phi { k.grad_cut } else { k.grad_phi };
        [self.params.scale * g[0], self.params.scale * g[1]]
    }

    /// True when `p` is within `band` of a place where the objective is not
    /// differentiable: the rectangle edges or the switch of the `min`.
    pub fn near_nonsmooth(&self, p: Point2, band: f64) -> bool {
        let q = &self.params;
        let dy = (p[1] - q.a_y).abs();
        let x_in = p[0] >= q.b_l - band && p[0] <= q.b_r + band;
        let edge = (x_in && (dy - q.b_y).abs() < band)
            || (dy < q.b_y + band && ((p[0] - q.b_l).abs() < band || (p[0] - q.b_r).abs() < band));
        if edge {
            return true;
        }
        let k = self.parts(p);
        if k.in_rect {
            let gd = [k.grad_phi[0] - k.grad_cut[0], k.grad_phi[1] - k.grad_cut[1]];
            let slope = gd[0].hypot(gd[1]).max(1e-12);
            if (k.h_phi - k.cut).abs() / slope < band {
                return true;
            }
        }
        false
    }

    /// Radial projection onto the closed ball.
    #[inline]
    pub fn project(&self, p: Point2) -> Point2 {
        let n = p[0].hypot(p[1]);
        if n > self.radius {
            let s = self.radius / n;
            [p[0] * s, p[1] * s]
        } else {
            p
        }
    }

    /// Label of the registered attractor within `radius` of `p`, if any.
    pub fn visiting(&self, p: Point2, radius: f64) -> Option<usize> {
        self.attractors
            .iter()
            .enumerate()
            .map(|(i, a)| (i, a.distance(p)))
            .filter(|&(_, d)| d < radius)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    /// Deterministic descent from `x0`; returns the endpoint.
    pub fn descend(&self, x0: Point2, flow_step: f64, max_iter: usize) -> Result<Point2> {
        const MAX_MOVE: f64 = 0.05;
        const GRAD_TOL: f64 = 1e-8;
        const WINDOW: usize = 100;
        const STALL_TOL: f64 = 1e-9;
        let mut x = self.project(x0);
        let mut anchor = x;
        let mut g = [0.0, 0.0];
        for it in 0..max_iter {
            g = self.grad(x);
            let gn = g[0].hypot(g[1]);
            if !gn.is_finite() {
                return Err(Error::NonFiniteGradient(x[0]));
            }
            if gn < GRAD_TOL {
                return Ok(x);
            }
            let mut step = [flow_step * g[0], flow_step * g[1]];
            let sn = step[0].hypot(step[1]);
            if sn > MAX_MOVE {
                step = [step[0] * MAX_MOVE / sn, step[1] * MAX_MOVE / sn];
            }
            x = self.project([x[0] - step[0], x[1] - step[1]]);
            if (it + 1) % WINDOW == 0 {
                // settled on a fixed point or a stable cycle of even period
                if dist(x, anchor) < STALL_TOL {
                    return Ok(x);
                }
                anchor = x;
            }
        }
        Err(Error::NoConvergence { start: x0, grad_norm: g[0].hypot(g[1]) })
    }
}

/// The benchmark landscape with its four basins registered in label order:
/// upper-left point, lower-left segment, right-upper point, right-lower point.
pub fn builtin_himmelblau2d() -> Landscape2D {
    let mut land = Landscape2D::new(HimmelblauParams::default(), 4.2).expect("builtin");
    let q = land.params;
    let seg_left = (-(land.radius * land.radius - q.a_y * q.a_y).sqrt()).max(q.b_l);
    let descend = |seed: Point2| land.descend(seed, 1e-3, 400_000).expect("builtin basin");
    let attractors = vec![
        Attractor::Point(descend([-1.0, 2.5])),
        Attractor::Segment([seg_left, q.a_y], [q.b_r, q.a_y]),
        Attractor::Point(descend([2.9, 1.0])),
        Attractor::Point(descend([3.2, -0.9])),
    ];
    land.attractors = attractors;
    land
}

/// Endpoint clusters; seeded from the landscape's known attractors and grown
/// lazily when descent ends somewhere new.
#[derive(Debug, Clone)]
pub struct BasinRegistry {
    clusters: Vec<Vec<Attractor>>,
    pub cluster_radius: f64,
}

impl BasinRegistry {
    pub fn new(land: &Landscape2D) -> Self {
        BasinRegistry {
            clusters: land.attractors().iter().cloned().map(|a| vec![a]).collect(),
            cluster_radius: 0.25,
        }
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Label for an endpoint, registering a new cluster if none is close.
    pub fn label(&mut self, endpoint: Point2) -> usize {
        let hit = self.clusters.iter().position(|members| {
            members.iter().any(|a| a.distance(endpoint) < self.cluster_radius)
        });
        match hit {
            Some(i) => {
                if !self.clusters[i].iter().any(|a| a.distance(endpoint) < 1e-6) {
                    self.clusters[i].push(Attractor::Point(endpoint));
                }
                i
            }
            None => {
                self.clusters.push(vec![Attractor::Point(endpoint)]);
                self.clusters.len() - 1
            }
        }
    }

    pub fn classify(
        &mut self,
        land: &Landscape2D,
        x0: Point2,
        flow_step: f64,
        max_iter: usize,
    ) -> Result<usize> {
        if dist(x0, [0.0, 0.0]) > land.radius {
            return Err(Error::config(format!("start {x0:?} outside the projection ball")));
        }
        let end = land.descend(x0, flow_step, max_iter)?;
        Ok(self.label(end))
    }
}

/// One-off classification with a fresh registry seeded from `land`.
pub fn classify_basin_2d(land: &Landscape2D, x0: Point2, flow_step: f64, max_iter: usize) -> Result<usize> {
    BasinRegistry::new(land).classify(land, x0, flow_step, max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cut_indicator_region() {
        let land = builtin_himmelblau2d();
        let q = land.params;
        // on the segment the cut is active and the objective vanishes
        for &x in &[-5.0, -3.0, -1.0, -0.6] {
            assert_eq!(land.value([x, q.a_y]), 0.0);
        }
        // just outside the rectangle the uncut function applies
        assert!(land.value([-0.4, q.a_y]) > 0.0);
        assert!(land.value([-6.0, q.a_y]) > 0.0);
        let inside = |x: f64, y: f64| x >= q.b_l && x <= q.b_r && (y - q.a_y).abs() < q.b_y;
        assert!(inside(-5.5, -2.9) && inside(-0.5, -1.0) && !inside(-0.5, -0.9) && !inside(-5.6, -2.9));
    }

    #[test]
    fn gradient_matches_finite_differences_far_out() {
        let land = builtin_himmelblau2d();
        let h = 1e-6;
        for &p in &[[3.5, 2.0], [1.0, 1.0], [0.5, -3.0], [-2.0, 3.0]] {
            let g = land.grad(p);
            let fx = (land.value([p[0] + h, p[1]]) - land.value([p[0] - h, p[1]])) / (2.0 * h);
            let fy = (land.value([p[0], p[1] + h]) - land.value([p[0], p[1] - h])) / (2.0 * h);
            let err = (g[0] - fx).hypot(g[1] - fy) / g[0].hypot(g[1]).max(1.0);
            assert!(err < 1e-5, "{p:?}: {err}");
        }
    }

    #[test]
    fn basin_three_near_start() {
        let land = builtin_himmelblau2d();
        let m3 = land.attractors()[2].representative();
        assert!((m3[0] - 3.0).abs() < 1e-3 && (m3[1] - 1.0).abs() < 1e-3, "{m3:?}");
        assert_eq!(classify_basin_2d(&land, [2.9, 1.0], 5e-3, 200_000).unwrap(), 2);
    }

    #[test]
    fn attractor_is_its_own_basin() {
        let land = builtin_himmelblau2d();
        for (i, a) in land.attractors().iter().enumerate() {
            let p = a.representative();
            assert_eq!(classify_basin_2d(&land, p, 5e-3, 200_000).unwrap(), i);
        }
    }

    #[test]
    fn segment_distance() {
        let s = Attractor::Segment([-3.0, 0.0], [-1.0, 0.0]);
        assert_eq!(s.distance([-2.0, 0.5]), 0.5);
        assert_eq!(s.distance([0.0, 0.0]), 1.0);
        assert!((s.distance([-4.0, 1.0]) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn start_outside_ball_rejected() {
        let land = builtin_himmelblau2d();
        assert!(classify_basin_2d(&land, [5.0, 0.0], 5e-3, 1000).is_err());
    }
}
