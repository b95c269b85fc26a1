//! Jump counts between attraction fields and the typical transition graph.

use crate::error::{Error, Result};
use crate::landscape::CriticalPointSet;
use crate::noise::{lambda_scale, NoiseModel};

/// Relative distance from an integer below which `r_i / b` is treated as
/// an integer.
pub const INTEGER_TOL: f64 = 1e-9;

/// Jump counts for one clipping threshold. Indices are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpProfile {
    /// Clipping threshold, `inf` when unclipped.
    pub b: f64,
    pub widths: Vec<f64>,
    pub l_star: Vec<u32>,
    /// `l[i][j]`, with zeros on the diagonal.
    pub l: Vec<Vec<u32>>,
    /// Fields whose `r_i / b` sits on an integer.
    pub assumption3_violations: Vec<usize>,
}

/// `ceil(d / b)`, at least one jump.
fn jumps(d: f64, b: f64) -> u32 {
    ((d / b).ceil() as u32).max(1)
}

fn near_integer(ratio: f64) -> bool {
    let k = ratio.round();
    k >= 1.0 && (ratio - k).abs() <= INTEGER_TOL * ratio
}

/// Jump counts `l*_i = ceil(r_i / b)` and `l_{i,j}`; `b = inf` means unclipped.
pub fn jump_profile(points: &CriticalPointSet, b: f64) -> Result<JumpProfile> {
    if !(b > 0.0) {
        return Err(Error::config(format!("clipping threshold must be positive, got {b}")));
    }
    let n = points.n_min();
    if n < 2 {
        return Err(Error::config("a transition graph needs at least two minima"));
    }
    let m = points.minima();
    let s = points.saddles();
    let widths = points.widths();
    let l_star: Vec<u32> = widths.iter().map(|&r| jumps(r, b)).collect();
    let l = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match j.cmp(&i) {
                    std::cmp::Ordering::Equal => 0,
                    std::cmp::Ordering::Greater => jumps(s[j - 1] - m[i], b),
                    std::cmp::Ordering::Less => jumps(m[i] - s[j], b),
                })
                .collect()
        })
        .collect();
    let assumption3_violations =
        if b.is_finite() { (0..n).filter(|&i| near_integer(widths[i] / b)).collect() } else { Vec::new() };
    Ok(JumpProfile { b, widths, l_star, l, assumption3_violations })
}

impl JumpProfile {
    pub fn n(&self) -> usize {
        self.l_star.len()
    }

    /// Refuse fields whose rate constants are ill-defined.
    pub fn check_assumption3(&self, field: usize) -> Result<()> {
        if self.assumption3_violations.contains(&field) {
            return Err(Error::Assumption3Violation { field: field + 1, ratio: self.widths[field] / self.b, b: self.b });
        }
        Ok(())
    }

    /// `1 + (alpha - 1) l*_i` per field.
    pub fn scaling_exponents(&self, alpha: f64) -> Vec<f64> {
        self.l_star.iter().map(|&l| scaling_exponent(l, alpha)).collect()
    }
}

/// Exit-time exponent `1 + (alpha - 1) l*`.
pub fn scaling_exponent(l_star: u32, alpha: f64) -> f64 {
    1.0 + (alpha - 1.0) * l_star as f64
}

/// A communication class of the transition graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommClass {
    /// Sorted member indices.
    pub members: Vec<usize>,
    pub absorbing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionGraph {
    pub n: usize,
    /// Edges `(i, j)` in lexicographic order.
    pub edges: Vec<(usize, usize)>,
    /// Classes ordered by smallest member.
    pub classes: Vec<CommClass>,
    pub class_of: Vec<usize>,
    pub irreducible: bool,
    pub symmetric: bool,
    pub l_star: Vec<u32>,
    /// Minima with the largest `l*` overall.
    pub m_large: Vec<usize>,
    pub l_large: u32,
}

/// Edges `i -> j` iff `l_{i,j} = l*_i`, with communication classes.
pub fn build_graph(profile: &JumpProfile, points: &CriticalPointSet) -> TransitionGraph {
    let n = profile.n();
    let mut adj = vec![vec![false; n]; n];
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && profile.l[i][j] == profile.l_star[i] {
                adj[i][j] = true;
                edges.push((i, j));
            }
        }
    }

    // transitive closure; graphs here have a handful of nodes
    let mut reach = adj.clone();
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }

    let mut class_of = vec![usize::MAX; n];
    let mut classes = Vec::new();
    for i in 0..n {
        if class_of[i] != usize::MAX {
            continue;
        }
        let members: Vec<usize> = (i..n).filter(|&j| reach[i][j] && reach[j][i]).collect();
        for &j in &members {
            class_of[j] = classes.len();
        }
        classes.push(CommClass { members, absorbing: false });
    }
    for (c, class) in classes.iter_mut().enumerate() {
        class.absorbing = edges.iter().all(|&(i, j)| class_of[i] != c || class_of[j] == c);
    }
    let irreducible = classes.len() == 1;

    let m = points.minima();
    let s = points.saddles();
    let symmetric = (1..n.saturating_sub(1)).all(|i| {
        let far = (s[i] - m[i]).abs().max((m[i] - s[i - 1]).abs());
        far < profile.l_star[i] as f64 * profile.b
    });

    let l_large = *profile.l_star.iter().max().expect("nonempty profile");
    let m_large = (0..n).filter(|&i| profile.l_star[i] == l_large).collect();

    TransitionGraph {
        n,
        edges,
        classes,
        class_of,
        irreducible,
        symmetric,
        l_star: profile.l_star.clone(),
        m_large,
        l_large,
    }
}

impl TransitionGraph {
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i, j)).is_ok()
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|e| e.0 == i).count()
    }

    /// Largest `l*` inside class `c`.
    pub fn class_l_large(&self, c: usize) -> u32 {
        self.classes[c].members.iter().map(|&i| self.l_star[i]).max().expect("nonempty class")
    }

    /// Members of class `c` attaining its largest `l*`.
    pub fn class_large(&self, c: usize) -> Vec<usize> {
        let top = self.class_l_large(c);
        self.classes[c].members.iter().copied().filter(|&i| self.l_star[i] == top).collect()
    }

    /// Longest time scale `lambda_large(eta)`.
    pub fn lambda_large(&self, noise: &NoiseModel, eta: f64) -> Result<f64> {
        lambda_scale(noise, self.l_large, eta)
    }
}
