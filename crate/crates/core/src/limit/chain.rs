use super::rates::RateTable;
use crate::error::{Error, Result};
use crate::graph::TransitionGraph;
use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

/// Embedded jump chain `P(i, j) = q_ij / sum_k q_ik`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DtmcModel {
    pub p: Vec<Vec<f64>>,
}

pub fn dtmc(rates: &RateTable) -> Result<DtmcModel> {
    let p = rates
        .fields
        .iter()
        .map(|fr| {
            let total: f64 = fr.q_ij.iter().sum();
            if !(total > 0.0) {
                return Err(Error::ZeroExitRate(fr.field + 1));
            }
            Ok(fr.q_ij.iter().map(|q| q / total).collect())
        })
        .collect::<Result<_>>()?;
    Ok(DtmcModel { p })
}

impl DtmcModel {
    pub fn n(&self) -> usize {
        self.p.len()
    }
}

/// First-hit distribution of a class's large states (and of leaving the
/// class, as the last column) from each member.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Absorption {
    pub members: Vec<usize>,
    pub large: Vec<usize>,
    /// `rows[a][c]` for member `members[a]`; columns follow `large`, then
    /// one column for leaving the class.
    pub rows: Vec<Vec<f64>>,
}

impl Absorption {
    pub fn row(&self, i: usize) -> Option<&[f64]> {
        self.members.iter().position(|&m| m == i).map(|a| self.rows[a].as_slice())
    }
}

/// Solve the absorbing-chain system over the small states of class `c`.
pub fn absorption_probs(dtmc: &DtmcModel, graph: &TransitionGraph, c: usize) -> Result<Absorption> {
    let members = graph.classes.get(c).ok_or_else(|| Error::config(format!("class {} does not exist", c + 1)))?.members.clone();
    let large = graph.class_large(c);
    let small: Vec<usize> = members.iter().copied().filter(|i| !large.contains(i)).collect();
    let cols = large.len() + 1;
    let out_col = large.len();
    let target_of = |j: usize| -> Option<usize> {
        if let Some(k) = large.iter().position(|&l| l == j) {
            Some(k)
        } else if !members.contains(&j) {
            Some(out_col)
        } else {
            None
        }
    };

    // (I - P_ss) X = P_s,targets
    let ns = small.len();
    let mut a = DMatrix::<f64>::identity(ns, ns);
    let mut rhs = DMatrix::<f64>::zeros(ns, cols);
    for (r, &k) in small.iter().enumerate() {
        for j in 0..dtmc.n() {
            let pkj = dtmc.p[k][j];
            if pkj == 0.0 {
                continue;
            }
            match target_of(j) {
                Some(col) => rhs[(r, col)] += pkj,
                None => {
                    let s = small.iter().position(|&x| x == j).expect("small member");
                    a[(r, s)] -= pkj;
                }
            }
        }
    }
    let x = if ns > 0 {
        let lu = a.lu();
        lu.solve(&rhs).filter(|x| x.iter().all(|v| v.is_finite())).ok_or(Error::SingularSystem)?
    } else {
        rhs
    };

    let rows = members
        .iter()
        .map(|&i| match large.iter().position(|&l| l == i) {
            Some(k) => (0..cols).map(|col| (col == k) as u8 as f64).collect(),
            None => {
                let r = small.iter().position(|&s| s == i).unwrap();
                (0..cols).map(|col| x[(r, col)]).collect()
            }
        })
        .collect();
    Ok(Absorption { members, large, rows })
}

/// Limiting continuous-time chain on the large states of one class, with a
/// cemetery state appended when the class is transient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CtmcModel {
    pub class: usize,
    /// Minima indices of the chain's states.
    pub states: Vec<usize>,
    pub killed: bool,
    /// Total jump rate per state, dummy jumps included.
    pub rates: Vec<f64>,
    /// `kernel[a][c]`: rate from state `a` to column `c`; the extra last
    /// column is the cemetery when `killed`. Diagonal entries are dummy jumps.
    pub kernel: Vec<Vec<f64>>,
    /// Generator over the same columns; the cemetery row is zero.
    pub generator: Vec<Vec<f64>>,
    /// Initial law for each class member, over the same columns.
    pub pi: Vec<(usize, Vec<f64>)>,
}

impl CtmcModel {
    /// Column count (states plus the cemetery when killed).
    pub fn width(&self) -> usize {
        self.states.len() + self.killed as usize
    }

    /// Index of the cemetery state, when present.
    pub fn cemetery(&self) -> Option<usize> {
        self.killed.then_some(self.states.len())
    }

    pub fn initial(&self, minimum: usize) -> Option<&[f64]> {
        self.pi.iter().find(|(m, _)| *m == minimum).map(|(_, p)| p.as_slice())
    }
}

/// `q_bar_ij = 1{i != j} q_ij + sum_{k small} q_ik p_kj` on the large states of class `c`.
pub fn ctmc_generator(rates: &RateTable, dtmc: &DtmcModel, graph: &TransitionGraph, c: usize) -> Result<CtmcModel> {
    let abs = absorption_probs(dtmc, graph, c)?;
    let killed = !graph.classes[c].absorbing;
    let states = abs.large.clone();
    let members = &abs.members;
    let width = states.len() + killed as usize;
    let out_col = states.len();

    let mut kernel = vec![vec![0.0; width]; states.len()];
    for (a, &i) in states.iter().enumerate() {
        let q = &rates.fields[i].q_ij;
        for (j, &qij) in q.iter().enumerate() {
            if j == i || qij == 0.0 {
                continue;
            }
            if let Some(b) = states.iter().position(|&s| s == j) {
                kernel[a][b] += qij;
            } else if let Some(row) = abs.row(j) {
                // small member: route through its absorption law
                for (col, &p) in row.iter().enumerate().take(states.len()) {
                    kernel[a][col] += qij * p;
                }
                if killed {
                    kernel[a][out_col] += qij * row[out_col];
                }
            } else if killed {
                debug_assert!(!members.contains(&j));
                kernel[a][out_col] += qij;
            }
        }
    }
    let rates_out: Vec<f64> = kernel.iter().map(|row| row.iter().sum()).collect();
    let mut generator = vec![vec![0.0; width]; width];
    for a in 0..states.len() {
        for col in 0..width {
            if col != a {
                generator[a][col] = kernel[a][col];
            }
        }
        generator[a][a] = -(0..width).filter(|&col| col != a).map(|col| kernel[a][col]).sum::<f64>();
    }
    let pi = abs
        .members
        .iter()
        .zip(&abs.rows)
        .map(|(&m, row)| (m, if killed { row.clone() } else { row[..states.len()].to_vec() }))
        .collect();
    Ok(CtmcModel { class: c, states, killed, rates: rates_out, kernel, generator, pi })
}

/// A piecewise-constant path: `(jump time, column)` with the start at time 0.
/// Dummy jumps are recorded, so consecutive entries may repeat a state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CtmcPath {
    pub jumps: Vec<(f64, usize)>,
    pub horizon: f64,
}

impl CtmcPath {
    /// State at time `t`.
    pub fn at(&self, t: f64) -> usize {
        let k = self.jumps.partition_point(|&(s, _)| s <= t);
        self.jumps[k.saturating_sub(1)].1
    }
}

/// Draw a start column from a law over columns.
pub fn draw_column<R: Rng + ?Sized>(law: &[f64], rng: &mut R) -> usize {
    let total: f64 = law.iter().sum();
    let u = crate::rng::open_closed01(rng) * total;
    let mut acc = 0.0;
    for (c, &p) in law.iter().enumerate() {
        acc += p;
        if u <= acc && p > 0.0 {
            return c;
        }
    }
    law.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Simulate up to `horizon` from column `start`: `Exp(rate)` holding times,
/// destinations by kernel row. Paths stop at the cemetery.
pub fn sample_ctmc_path<R: Rng + ?Sized>(ctmc: &CtmcModel, start: usize, horizon: f64, rng: &mut R) -> Result<CtmcPath> {
    if !(horizon > 0.0) {
        return Err(Error::config("horizon must be positive"));
    }
    if start >= ctmc.width() {
        return Err(Error::config(format!("state {start} out of range")));
    }
    let mut jumps = vec![(0.0, start)];
    let mut t = 0.0;
    let mut s = start;
    while Some(s) != ctmc.cemetery() {
        let q = ctmc.rates[s];
        if !(q > 0.0) {
            break;
        }
        t += -crate::rng::open_closed01(rng).ln() / q;
        if t > horizon {
            break;
        }
        s = draw_column(&ctmc.kernel[s], rng);
        jumps.push((t, s));
    }
    Ok(CtmcPath { jumps, horizon })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, jump_profile};
    use crate::landscape::CriticalPointSet;
    use crate::limit::rates::FieldRates;
    use crate::rng::{stream, Purpose};

    fn table(q: Vec<Vec<f64>>) -> RateTable {
        let fields = q
            .into_iter()
            .enumerate()
            .map(|(i, q_ij)| FieldRates {
                field: i,
                l_star: 1,
                q: q_ij.iter().sum(),
                q_se: 0.0,
                q_ij_se: vec![0.0; q_ij.len()],
                q_ij,
                w_min: 1.0,
                t_max: None,
                t_bound: None,
                n_samples: 1,
                escapes: 1,
                max_escape_gap: 0.0,
                min_escape_jump: 1.0,
            })
            .collect();
        RateTable { b: 1.0, alpha: 1.2, p_plus: 0.5, fields }
    }

    fn three_wells() -> CriticalPointSet {
        CriticalPointSet::from_positions(vec![-0.9, 0.0, 1.2], vec![-0.6, 0.9], 1.5).unwrap()
    }

    #[test]
    fn two_field_dtmc() {
        let d = dtmc(&table(vec![vec![0.0, 2.0], vec![3.0, 0.0]])).unwrap();
        assert_eq!(d.p, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(matches!(dtmc(&table(vec![vec![0.0, 0.0], vec![3.0, 0.0]])), Err(Error::ZeroExitRate(1))));
    }

    #[test]
    fn one_step_absorption() {
        // field 1 (middle) is small with l* = 1 < 2; ends with l* = 2
        let pts = CriticalPointSet::from_positions(vec![-1.0, 0.0, 1.0], vec![-0.1, 0.3], 2.0).unwrap();
        let prof = jump_profile(&pts, 0.6).unwrap();
        assert_eq!(prof.l_star, vec![2, 1, 2]);
        let g = build_graph(&prof, &pts);
        assert!(g.irreducible);
        let d = dtmc(&table(vec![vec![0.0, 1.0, 0.0], vec![0.3, 0.0, 0.7], vec![0.0, 1.0, 0.0]])).unwrap();
        let abs = absorption_probs(&d, &g, 0).unwrap();
        assert_eq!(abs.large, vec![0, 2]);
        let row = abs.row(1).unwrap();
        assert!((row[0] - 0.3).abs() < 1e-12 && (row[1] - 0.7).abs() < 1e-12 && row[2] == 0.0);
        assert_eq!(abs.row(0).unwrap(), &[1.0, 0.0, 0.0]);
        for r in &abs.rows {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_routes_through_small_states() {
        let pts = CriticalPointSet::from_positions(vec![-1.0, 0.0, 1.0], vec![-0.1, 0.3], 2.0).unwrap();
        let g = build_graph(&jump_profile(&pts, 0.6).unwrap(), &pts);
        let rates = table(vec![vec![0.0, 4.0, 0.0], vec![0.3, 0.0, 0.7], vec![0.0, 2.0, 0.0]]);
        let d = dtmc(&rates).unwrap();
        let c = ctmc_generator(&rates, &d, &g, 0).unwrap();
        assert!(!c.killed);
        assert_eq!(c.states, vec![0, 2]);
        // from m_0: 4 * 0.3 dummy, 4 * 0.7 to m_2
        assert!((c.kernel[0][0] - 1.2).abs() < 1e-12 && (c.kernel[0][1] - 2.8).abs() < 1e-12);
        assert!((c.rates[0] - 4.0).abs() < 1e-12);
        assert!((c.generator[0][0] + 2.8).abs() < 1e-12);
        let pi = c.initial(1).unwrap();
        assert!((pi[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn transient_class_is_killed() {
        let pts = three_wells();
        let g = build_graph(&jump_profile(&pts, 0.4).unwrap(), &pts);
        let rates = table(vec![vec![0.0, 1.0, 0.0], vec![1.5, 0.0, 0.0], vec![0.0, 2.5, 0.0]]);
        let d = dtmc(&rates).unwrap();
        assert_eq!(d.p[1], vec![1.0, 0.0, 0.0]);
        let c = ctmc_generator(&rates, &d, &g, 1).unwrap();
        assert!(c.killed);
        assert_eq!(c.states, vec![2]);
        assert_eq!(c.kernel, vec![vec![0.0, 2.5]]);
        assert_eq!(c.generator, vec![vec![-2.5, 2.5], vec![0.0, 0.0]]);
        let path = sample_ctmc_path(&c, 0, 1e9, &mut stream(1, Purpose::Test, 0)).unwrap();
        assert_eq!(path.jumps.len(), 2);
        assert_eq!(path.jumps[1].1, 1);
    }

    #[test]
    fn single_large_state_only_dummy_jumps() {
        let pts = three_wells();
        let g = build_graph(&jump_profile(&pts, 0.4).unwrap(), &pts);
        let rates = table(vec![vec![0.0, 1.0, 0.0], vec![1.5, 0.0, 0.0], vec![0.0, 2.5, 0.0]]);
        let d = dtmc(&rates).unwrap();
        let c = ctmc_generator(&rates, &d, &g, 0).unwrap();
        assert_eq!(c.states, vec![1]);
        assert_eq!(c.generator, vec![vec![0.0]]);
        assert!((c.kernel[0][0] - 1.5).abs() < 1e-12);
        let path = sample_ctmc_path(&c, 0, 100.0, &mut stream(1, Purpose::Test, 0)).unwrap();
        assert!(path.jumps.iter().all(|&(_, s)| s == 0));
    }

    #[test]
    fn holding_times_and_destinations() {
        let rates = table(vec![vec![0.0, 1.0, 3.0], vec![2.0, 0.0, 2.0], vec![1.0, 1.0, 0.0]]);
        let pts = CriticalPointSet::from_positions(vec![-1.0, 0.0, 1.0], vec![-0.5, 0.5], 2.0).unwrap();
        let g = build_graph(&jump_profile(&pts, 5.0).unwrap(), &pts);
        let d = dtmc(&rates).unwrap();
        let c = ctmc_generator(&rates, &d, &g, 0).unwrap();
        let mut rng = stream(7, Purpose::Test, 0);
        let n = 10_000;
        let (mut hold, mut to2) = (0.0, 0);
        for _ in 0..n {
            let p = sample_ctmc_path(&c, 0, 50.0, &mut rng).unwrap();
            hold += p.jumps[1].0;
            to2 += (p.jumps[1].1 == 2) as u64;
        }
        let mean = hold / n as f64;
        assert!((mean - 0.25).abs() < 3.0 * 0.25 / (n as f64).sqrt(), "{mean}");
        let f = to2 as f64 / n as f64;
        assert!((f - 0.75).abs() < 3.0 * (0.75 * 0.25 / n as f64).sqrt(), "{f}");
    }
}
