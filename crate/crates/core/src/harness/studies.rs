//! The studies. Each returns a typed report; [`run_study`] renders it into
//! files. Fields, classes and basins are one-based in every output.

use super::config::{default_eta_grid, ExperimentConfig, Study};
#[cfg(test)]
use super::config::LandscapeSpec;
use super::fit::{fit_powerlaw, ks_exponential, mean_var, PowerLawFit};
use super::output::{render_json, Artifact, CsvTable, Provenance, StudyOutput};
use crate::error::{Error, Result};
use crate::graph::{build_graph, jump_profile, scaling_exponent, TransitionGraph};
use crate::injection::{run_two_phase, InjectionConfig, InjectionRngs, Problem, TwoPhaseRun};
use crate::landscape::{CriticalPointSet, Field, Landscape, Landscape1D};
use crate::limit::{ctmc_generator, dtmc, estimate_all, CtmcModel, DtmcModel, RateConfig, RateTable};
use crate::noise::{lambda_scale, NoiseModel};
use crate::par::{map_indexed, Execution};
use crate::rng::{stream, substream, Purpose};
use crate::sgd::{run_occupancy, run_occupancy2, run_until_exit, ExitRecord, OccupancyHistogram, SgdConfig};
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;

fn threshold(b: Option<f64>) -> f64 {
    b.unwrap_or(f64::INFINITY)
}

fn b_cell(b: Option<f64>) -> String {
    b.map_or("none".into(), |v| v.to_string())
}

fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|i| i + 1).collect()
}

fn field_index(points: &CriticalPointSet, field: usize) -> Result<usize> {
    if field == 0 || field > points.n_min() {
        return Err(Error::config(format!("field {field} does not exist (landscape has {})", points.n_min())));
    }
    Ok(field - 1)
}

fn check_start(points: &CriticalPointSet, start: f64, k: usize) -> Result<()> {
    if points.field_of(start) != Field::Inside(k) {
        return Err(Error::config(format!("start {start} is not inside field {}", k + 1)));
    }
    Ok(())
}

// ---------------------------------------------------------------- landscape

#[derive(Debug, Clone, Serialize)]
pub struct FieldInfo {
    pub field: usize,
    pub minimum: f64,
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
    pub curvature: f64,
}

fn field_infos(land: &Landscape1D, points: &CriticalPointSet) -> Vec<FieldInfo> {
    points
        .fields()
        .map(|f| FieldInfo {
            field: f.index + 1,
            minimum: f.minimum,
            lower: f.lower,
            upper: f.upper,
            width: f.width(),
            curvature: land.curvature(f.minimum),
        })
        .collect()
}

/// Critical points and fields (1-D) or basin attractors (2-D).
pub fn inspect_landscape(cfg: &ExperimentConfig) -> Result<Value> {
    match cfg.landscape().build()? {
        Landscape::R1(land) => {
            let (_, points) = cfg.landscape().build_1d()?;
            Ok(json!({
                "dimension": 1,
                "radius": land.radius(),
                "minima": points.minima(),
                "saddles": points.saddles(),
                "fields": field_infos(&land, &points),
            }))
        }
        Landscape::R2(land) => {
            let basins: Vec<Value> = land
                .attractors()
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let r = a.representative();
                    json!({ "basin": i + 1, "representative": r, "value": land.value(r), "attractor": format!("{a:?}") })
                })
                .collect();
            Ok(json!({ "dimension": 2, "radius": land.radius, "basins": basins }))
        }
    }
}

// ---------------------------------------------------------------- graph

pub fn graph_json(graph: &TransitionGraph, points: &CriticalPointSet, noise: &NoiseModel, b: Option<f64>) -> Value {
    let nodes: Vec<Value> = points
        .fields()
        .map(|f| json!({ "id": f.index + 1, "minimum": f.minimum, "width": f.width() }))
        .collect();
    let edges: Vec<[usize; 2]> = graph.edges.iter().map(|&(i, j)| [i + 1, j + 1]).collect();
    let classes: Vec<Value> = graph
        .classes
        .iter()
        .map(|c| json!({ "members": one_based(&c.members), "absorbing": c.absorbing }))
        .collect();
    let exponents: Option<Vec<f64>> =
        noise.alpha().map(|a| graph.l_star.iter().map(|&l| scaling_exponent(l, a)).collect());
    json!({
        "b": b,
        "nodes": nodes,
        "edges": edges,
        "classes": classes,
        "irreducible": graph.irreducible,
        "symmetric": graph.symmetric,
        "l_star": graph.l_star,
        "m_large": one_based(&graph.m_large),
        "exponents": exponents,
    })
}

pub fn study_graph(cfg: &ExperimentConfig) -> Result<(TransitionGraph, Value)> {
    let Study::Graph { b } = &cfg.study else { return Err(wrong_kind(cfg, "graph")) };
    let (_, points) = cfg.landscape().build_1d()?;
    let profile = jump_profile(&points, threshold(*b))?;
    let graph = build_graph(&profile, &points);
    let mut v = graph_json(&graph, &points, &cfg.noise(), *b);
    v["assumption3_violations"] = json!(one_based(&profile.assumption3_violations));
    Ok((graph, v))
}

fn wrong_kind(cfg: &ExperimentConfig, want: &str) -> Error {
    Error::config(format!("expected a {want} study, config has {}", cfg.study.kind()))
}

// ---------------------------------------------------------------- exit scaling

#[derive(Debug, Clone, Serialize)]
pub struct EtaPoint {
    pub eta: f64,
    pub replications: u64,
    pub censored: u64,
    /// Mean over all runs, censored ones counted at the cap.
    pub mean_exit: f64,
    pub se_exit: f64,
    pub used_in_fit: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegimeFit {
    pub b: Option<f64>,
    pub l_star: u32,
    pub predicted_exponent: Option<f64>,
    pub points: Vec<EtaPoint>,
    /// `None` with fewer than three usable points.
    pub fit: Option<PowerLawFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingFit {
    pub field: usize,
    pub start: f64,
    pub regimes: Vec<RegimeFit>,
}

#[derive(Debug, Clone)]
pub struct ExitRow {
    pub eta: f64,
    pub b: Option<f64>,
    pub replication: u64,
    pub record: ExitRecord,
}

pub fn exit_csv(rows: &[ExitRow]) -> CsvTable {
    let mut t = CsvTable::new(&[
        "eta",
        "b",
        "replication",
        "exit_step",
        "censored",
        "source_field",
        "dest_field",
        "exit_position",
    ]);
    for r in rows {
        t.push(vec![
            r.eta.to_string(),
            b_cell(r.b),
            r.replication.to_string(),
            r.record.exit_step.to_string(),
            (r.record.censored() as u8).to_string(),
            (r.record.source + 1).to_string(),
            r.record.dest.map_or(String::new(), |d| (d + 1).to_string()),
            r.record.position.to_string(),
        ]);
    }
    t
}

fn run_exits(
    land: &Landscape1D,
    points: &CriticalPointSet,
    noise: &NoiseModel,
    jobs: &[(f64, Option<f64>, u64, u64)],
    start: f64,
    k: usize,
    max_steps: u64,
    seed: u64,
    exec: Execution,
) -> Result<Vec<ExitRecord>> {
    map_indexed(exec, jobs.len() as u64, |j| {
        let (eta, b, rep, key) = jobs[j as usize];
        let sgd = SgdConfig::new(eta, b).with_max_steps(max_steps);
        sgd.validate()?;
        let mut rng = substream(seed, Purpose::Noise, rep, key);
        run_until_exit(land, points, noise, &sgd, start, k, &mut rng)
    })
    .into_iter()
    .collect()
}

pub fn study_exit_scaling(cfg: &ExperimentConfig, exec: Execution) -> Result<(ScalingFit, Vec<ExitRow>)> {
    let Study::ExitScaling { field, start, regimes, replications, max_steps } = &cfg.study else {
        return Err(wrong_kind(cfg, "exit_scaling"));
    };
    let (land, points) = cfg.landscape().build_1d()?;
    let noise = cfg.noise();
    let k = field_index(&points, *field)?;
    check_start(&points, *start, k)?;

    let mut plans = Vec::new();
    for r in regimes {
        let profile = jump_profile(&points, threshold(r.b))?;
        profile.check_assumption3(k)?;
        let l_star = profile.l_star[k];
        let grid = r.eta_grid.clone().unwrap_or_else(|| default_eta_grid(l_star));
        plans.push((r.b, l_star, grid));
    }
    let mut jobs = Vec::new();
    for (ri, (b, _, grid)) in plans.iter().enumerate() {
        for (ei, &eta) in grid.iter().enumerate() {
            for rep in 0..*replications {
                jobs.push((eta, *b, rep, ((ri as u64) << 20) | ei as u64));
            }
        }
    }
    let records = run_exits(&land, &points, &noise, &jobs, *start, k, *max_steps, cfg.seed, exec)?;

    let mut rows = Vec::with_capacity(records.len());
    let mut out = Vec::new();
    let mut it = records.into_iter();
    for (b, l_star, grid) in plans {
        let mut pts = Vec::new();
        for &eta in &grid {
            let recs: Vec<ExitRecord> = it.by_ref().take(*replications as usize).collect();
            let steps: Vec<f64> = recs.iter().map(|r| r.exit_step as f64).collect();
            let censored = recs.iter().filter(|r| r.censored()).count() as u64;
            let (mean, var) = mean_var(&steps);
            let n = recs.len() as u64;
            pts.push(EtaPoint {
                eta,
                replications: n,
                censored,
                mean_exit: mean,
                se_exit: if n > 1 { (var / n as f64).sqrt() } else { f64::NAN },
                used_in_fit: (censored as f64) < 0.5 * n as f64,
            });
            rows.extend(recs.into_iter().enumerate().map(|(rep, record)| ExitRow { eta, b, replication: rep as u64, record }));
        }
        if pts.iter().all(|p| p.censored == p.replications) {
            return Err(Error::AllCensored);
        }
        let usable: Vec<(f64, f64)> = pts.iter().filter(|p| p.used_in_fit).map(|p| (p.eta, p.mean_exit)).collect();
        let fit = match fit_powerlaw(&usable) {
            Ok(f) => Some(f),
            Err(Error::InsufficientPoints(_)) => None,
            Err(e) => return Err(e),
        };
        out.push(RegimeFit {
            b,
            l_star,
            predicted_exponent: noise.alpha().map(|a| scaling_exponent(l_star, a)),
            points: pts,
            fit,
        });
    }
    Ok((ScalingFit { field: *field, start: *start, regimes: out }, rows))
}

// ---------------------------------------------------------------- occupancy

#[derive(Debug, Clone, Serialize)]
pub struct OccupancyReport {
    pub b: Option<f64>,
    pub eta: f64,
    pub steps: u64,
    pub start_field: usize,
    pub pooled: OccupancyHistogram,
    pub per_path: Vec<OccupancyHistogram>,
    /// Fields attaining the largest jump count.
    pub large_fields: Vec<usize>,
    /// Fraction of recorded steps outside the large fields.
    pub small_field_fraction: f64,
    pub start_field_fraction: f64,
}

fn histogram_csv(h: &OccupancyHistogram) -> CsvTable {
    let mut t = CsvTable::new(&["field_label", "count", "fraction"]);
    for (i, l) in h.labels.iter().enumerate() {
        t.push(vec![l.clone(), h.counts[i].to_string(), h.fraction(i).to_string()]);
    }
    t
}

pub fn study_occupancy(cfg: &ExperimentConfig, exec: Execution) -> Result<OccupancyReport> {
    let Study::Occupancy { b, eta, steps, paths, start, record_stride } = &cfg.study else {
        return Err(wrong_kind(cfg, "occupancy"));
    };
    let (land, points) = cfg.landscape().build_1d()?;
    let noise = cfg.noise();
    let sgd = SgdConfig::new(*eta, *b).with_max_steps(*steps).with_stride(*record_stride);
    sgd.validate()?;
    let start_field = points
        .field_of(*start)
        .index()
        .ok_or_else(|| Error::config(format!("start {start} sits on a saddle")))?;
    let per_path: Vec<OccupancyHistogram> = map_indexed(exec, *paths, |p| {
        let mut rng = stream(cfg.seed, Purpose::Noise, p);
        run_occupancy(&land, &points, &noise, &sgd, *start, &mut rng)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut pooled = per_path[0].clone();
    for h in &per_path[1..] {
        pooled.merge(h);
    }
    let graph = build_graph(&jump_profile(&points, threshold(*b))?, &points);
    let small: Vec<usize> = (0..points.n_min()).filter(|i| !graph.m_large.contains(i)).collect();
    Ok(OccupancyReport {
        b: *b,
        eta: *eta,
        steps: *steps,
        start_field: start_field + 1,
        small_field_fraction: pooled.fraction_of(&small),
        start_field_fraction: pooled.fraction(start_field),
        large_fields: one_based(&graph.m_large),
        pooled,
        per_path,
    })
}

// ---------------------------------------------------------------- rates and chains

#[derive(Debug, Clone)]
pub struct RatesReport {
    pub b: Option<f64>,
    pub table: RateTable,
    pub graph: TransitionGraph,
    pub dtmc: DtmcModel,
    pub user_t_max: bool,
}

fn rate_inputs(cfg: &ExperimentConfig) -> Result<(Option<f64>, RateConfig)> {
    match &cfg.study {
        Study::Rates { b, rates, .. } => Ok((*b, *rates)),
        Study::CtmcCompare { b, rates, .. } => Ok((*b, *rates)),
        _ => Err(wrong_kind(cfg, "rates")),
    }
}

pub fn study_rates(cfg: &ExperimentConfig, exec: Execution) -> Result<RatesReport> {
    let (b, rc) = rate_inputs(cfg)?;
    let (land, points) = cfg.landscape().build_1d()?;
    let noise = cfg.noise();
    let profile = jump_profile(&points, threshold(b))?;
    let table = estimate_all(&land, &points, &profile, &noise, &rc, cfg.seed, exec)?;
    let graph = build_graph(&profile, &points);
    let chain = dtmc(&table)?;
    Ok(RatesReport { b, table, graph, dtmc: chain, user_t_max: rc.t_max.is_some() })
}

impl RatesReport {
    pub fn to_json(&self) -> Value {
        let mut fields = BTreeMap::new();
        for f in &self.table.fields {
            let mut targets = BTreeMap::new();
            for (j, (&q, &se)) in f.q_ij.iter().zip(&f.q_ij_se).enumerate() {
                if j != f.field {
                    targets.insert((j + 1).to_string(), json!({ "q_ij": q, "se": se }));
                }
            }
            fields.insert(
                (f.field + 1).to_string(),
                json!({
                    "l_star": f.l_star,
                    "q": f.q,
                    "q_se": f.q_se,
                    "targets": targets,
                    "w_min": f.w_min,
                    "T_max": f.t_max,
                    "T_bound": f.t_bound,
                    "n_samples": f.n_samples,
                    "escapes": f.escapes,
                }),
            );
        }
        let truncation = if self.user_t_max {
            "user-supplied T_max; escapes beyond it are lost"
        } else {
            "T_max is the computed gap bound beyond which no jump vector escapes"
        };
        json!({
            "b": self.b,
            "alpha": self.table.alpha,
            "p_plus": self.table.p_plus,
            "fields": fields,
            "dtmc": self.dtmc.p,
            "truncation": truncation,
        })
    }

    /// CTMC of class `class` (one-based).
    pub fn ctmc(&self, class: usize) -> Result<CtmcModel> {
        if class == 0 || class > self.graph.classes.len() {
            return Err(Error::config(format!("class {class} does not exist (graph has {})", self.graph.classes.len())));
        }
        ctmc_generator(&self.table, &self.dtmc, &self.graph, class - 1)
    }
}

pub fn ctmc_json(model: &CtmcModel, graph: &TransitionGraph) -> Value {
    let mut columns: Vec<String> = model.states.iter().map(|s| (s + 1).to_string()).collect();
    if model.killed {
        columns.push("cemetery".into());
    }
    let initial: BTreeMap<String, &Vec<f64>> = model.pi.iter().map(|(m, p)| ((m + 1).to_string(), p)).collect();
    json!({
        "class": model.class + 1,
        "members": one_based(&graph.classes[model.class].members),
        "absorbing": !model.killed,
        "states": one_based(&model.states),
        "columns": columns,
        "holding_rates": model.rates,
        "kernel": model.kernel,
        "generator": model.generator,
        "initial": initial,
    })
}

// ---------------------------------------------------------------- ctmc compare

#[derive(Debug, Clone, Serialize)]
pub struct Destination {
    pub field: usize,
    pub count: u64,
    pub frequency: f64,
    pub predicted: f64,
    pub sigma: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub field: usize,
    pub b: Option<f64>,
    pub eta: f64,
    pub l_star: u32,
    pub q: f64,
    pub q_se: f64,
    pub lambda: f64,
    pub replications: u64,
    pub censored: u64,
    pub scaled_mean: f64,
    pub scaled_var: f64,
    pub ks: f64,
    pub destinations: Vec<Destination>,
}

pub fn study_ctmc_compare(cfg: &ExperimentConfig, exec: Execution) -> Result<(CompareReport, Vec<ExitRow>)> {
    let Study::CtmcCompare { field, start, b, eta, replications, max_steps, rates } = &cfg.study else {
        return Err(wrong_kind(cfg, "ctmc_compare"));
    };
    let (land, points) = cfg.landscape().build_1d()?;
    let noise = cfg.noise();
    let k = field_index(&points, *field)?;
    check_start(&points, *start, k)?;
    let profile = jump_profile(&points, threshold(*b))?;
    profile.check_assumption3(k)?;
    let fr = crate::limit::mc_estimate_rates(&land, &points, &profile, &noise, k, rates, cfg.seed, exec)?;
    if !(fr.q > 0.0) {
        return Err(Error::ZeroExitRate(k + 1));
    }
    let lambda = lambda_scale(&noise, fr.l_star, *eta)?;
    let jobs: Vec<_> = (0..*replications).map(|rep| (*eta, *b, rep, 0u64)).collect();
    let records = run_exits(&land, &points, &noise, &jobs, *start, k, *max_steps, cfg.seed, exec)?;
    let scaled: Vec<f64> = records.iter().map(|r| fr.q * lambda * r.exit_step as f64).collect();
    let (scaled_mean, scaled_var) = mean_var(&scaled);
    let censored = records.iter().filter(|r| r.censored()).count() as u64;
    let exits = records.len() as u64 - censored;
    let mut destinations = Vec::new();
    for j in (0..points.n_min()).filter(|&j| j != k) {
        let count = records.iter().filter(|r| r.dest == Some(j)).count() as u64;
        let predicted = fr.q_ij[j] / fr.q;
        let frequency = count as f64 / exits as f64;
        let sigma = (predicted * (1.0 - predicted) / exits as f64).sqrt();
        let z = if sigma > 0.0 {
            (frequency - predicted) / sigma
        } else if count == 0 {
            0.0
        } else {
            f64::INFINITY
        };
        destinations.push(Destination { field: j + 1, count, frequency, predicted, sigma, z });
    }
    let rows = records
        .into_iter()
        .enumerate()
        .map(|(rep, record)| ExitRow { eta: *eta, b: *b, replication: rep as u64, record })
        .collect();
    Ok((
        CompareReport {
            field: *field,
            b: *b,
            eta: *eta,
            l_star: fr.l_star,
            q: fr.q,
            q_se: fr.q_se,
            lambda,
            replications: *replications,
            censored,
            scaled_mean,
            scaled_var,
            ks: ks_exponential(&scaled),
            destinations,
        },
        rows,
    ))
}

// ---------------------------------------------------------------- r2

#[derive(Debug, Clone, Serialize)]
pub struct R2Report {
    pub b: Option<f64>,
    pub eta: f64,
    pub steps: u64,
    pub histogram: OccupancyHistogram,
    /// `(step, basin)` at each change of visited basin.
    pub transitions: Vec<(u64, usize)>,
    pub first_basin: Option<usize>,
    /// Share of classified records in basins 1 and 2.
    pub wide_fraction: f64,
    pub all_visited: bool,
}

pub fn study_r2(cfg: &ExperimentConfig) -> Result<R2Report> {
    let Study::R2 { b, eta, steps, start, record_stride } = &cfg.study else {
        return Err(wrong_kind(cfg, "r2"));
    };
    let land = cfg.landscape().build_2d()?;
    let sgd = SgdConfig::new(*eta, *b).with_max_steps(*steps).with_stride(*record_stride);
    sgd.validate()?;
    let mut rng = stream(cfg.seed, Purpose::Noise, 0);
    let occ = run_occupancy2(&land, &cfg.noise(), &sgd, *start, &mut rng)?;
    let h = &occ.histogram;
    let n = h.counts.len() - 1;
    let classified = h.total - h.counts[n];
    let wide = if n >= 2 && classified > 0 { h.classified_fraction_of(&[0, 1]) } else { 0.0 };
    Ok(R2Report {
        b: *b,
        eta: *eta,
        steps: *steps,
        first_basin: occ.transitions.first().map(|t| t.1 + 1),
        transitions: occ.transitions.iter().map(|&(s, k)| (s, k + 1)).collect(),
        all_visited: h.counts[..n].iter().all(|&c| c > 0),
        wide_fraction: wide,
        histogram: occ.histogram,
    })
}

// ---------------------------------------------------------------- inject demo

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: &'static str,
    pub c: f64,
    pub final_loss_mean: f64,
    pub final_sharpness_mean: f64,
    pub max_update: f64,
    /// Final field per seed (multi-well only), one-based; `None` on a saddle.
    pub final_fields: Option<Vec<Option<usize>>>,
    pub wide_count: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InjectReport {
    pub problem: String,
    pub injection: InjectionConfig,
    pub seeds: u64,
    pub sb_star_resampled_per_step: bool,
    pub wide_fields: Option<Vec<usize>>,
    pub methods: Vec<MethodSummary>,
    #[serde(skip)]
    pub runs: Vec<(&'static str, Vec<TwoPhaseRun>)>,
}

pub fn study_inject(cfg: &ExperimentConfig, exec: Execution) -> Result<InjectReport> {
    let Study::InjectDemo { problem, data_seed, seeds, start, injection } = &cfg.study else {
        return Err(wrong_kind(cfg, "inject_demo"));
    };
    let prob = Problem::by_name(problem, *data_seed)?;
    let inj = injection.unwrap_or_else(|| prob.default_config());
    inj.validate()?;
    let theta0 = start.clone().unwrap_or_else(|| prob.default_start());
    let wide = match &prob {
        Problem::MultiWell(mw) => Some(build_graph(&jump_profile(&mw.points, inj.threshold())?, &mw.points).m_large),
        _ => None,
    };
    let baseline = InjectionConfig { c: 0.0, ..inj };
    let mut methods = Vec::new();
    let mut runs = Vec::new();
    for (name, c) in [("injected", inj), ("baseline", baseline)] {
        let rs: Vec<TwoPhaseRun> = map_indexed(exec, *seeds, |s| {
            run_two_phase(prob.as_dyn(), &c, &theta0, &mut InjectionRngs::new(cfg.seed, s))
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let n = rs.len() as f64;
        let last = |r: &TwoPhaseRun| *r.trace.last().expect("trace has the final step");
        let final_fields = match &prob {
            Problem::MultiWell(mw) => Some(rs.iter().map(|r| mw.points.field_of(r.theta[0]).index().map(|i| i + 1)).collect::<Vec<_>>()),
            _ => None,
        };
        let wide_count = final_fields.as_ref().zip(wide.as_ref()).map(|(ff, w)| {
            ff.iter().filter(|f| matches!(f, Some(i) if w.contains(&(i - 1)))).count() as u64
        });
        methods.push(MethodSummary {
            method: name,
            c: c.c,
            final_loss_mean: rs.iter().map(|r| last(r).loss).sum::<f64>() / n,
            final_sharpness_mean: rs.iter().map(|r| last(r).sharpness).sum::<f64>() / n,
            max_update: rs.iter().map(|r| r.max_update).fold(0.0, f64::max),
            final_fields,
            wide_count,
        });
        runs.push((name, rs));
    }
    Ok(InjectReport {
        problem: problem.clone(),
        injection: inj,
        seeds: *seeds,
        sb_star_resampled_per_step: true,
        wide_fields: wide.map(|w| one_based(&w)),
        methods,
        runs,
    })
}

// ---------------------------------------------------------------- dispatch

/// Run the configured study and render its files.
pub fn run_study(cfg: &ExperimentConfig, exec: Execution) -> Result<StudyOutput> {
    cfg.validate()?;
    let prov = Provenance::of(&cfg.canonical_json());
    let kind = cfg.study.kind();
    let art = |name: &str, contents: String| Artifact { name: name.into(), contents };
    let (summary, artifacts) = match &cfg.study {
        Study::ExitScaling { .. } => {
            let (fit, rows) = study_exit_scaling(cfg, exec)?;
            let v = serde_json::to_value(&fit)?;
            let files = vec![art("exit.csv", exit_csv(&rows).render(&prov)), art("exit_scaling.json", render_json(&prov, kind, v.clone()))];
            (v, files)
        }
        Study::Occupancy { .. } => {
            let r = study_occupancy(cfg, exec)?;
            let mut paths = CsvTable::new(&["path", "field_label", "count", "fraction"]);
            for (p, h) in r.per_path.iter().enumerate() {
                for row in histogram_csv(h).rows {
                    paths.push([vec![p.to_string()], row].concat());
                }
            }
            let v = serde_json::to_value(&r)?;
            let files = vec![
                art("occupancy.csv", histogram_csv(&r.pooled).render(&prov)),
                art("occupancy_paths.csv", paths.render(&prov)),
                art("occupancy.json", render_json(&prov, kind, v.clone())),
            ];
            (v, files)
        }
        Study::Graph { .. } => {
            let (_, v) = study_graph(cfg)?;
            (v.clone(), vec![art("graph.json", render_json(&prov, kind, v))])
        }
        Study::Rates { class, .. } => {
            let r = study_rates(cfg, exec)?;
            let mut v = r.to_json();
            let mut files = vec![art("rates.json", render_json(&prov, kind, v.clone()))];
            if let Some(c) = class {
                let m = ctmc_json(&r.ctmc(*c)?, &r.graph);
                files.push(art("ctmc.json", render_json(&prov, "ctmc", m.clone())));
                v["ctmc"] = m;
            }
            (v, files)
        }
        Study::CtmcCompare { .. } => {
            let (r, rows) = study_ctmc_compare(cfg, exec)?;
            let mut t = CsvTable::new(&["replication", "exit_step", "censored", "dest_field", "scaled_time"]);
            for row in &rows {
                t.push(vec![
                    row.replication.to_string(),
                    row.record.exit_step.to_string(),
                    (row.record.censored() as u8).to_string(),
                    row.record.dest.map_or(String::new(), |d| (d + 1).to_string()),
                    (r.q * r.lambda * row.record.exit_step as f64).to_string(),
                ]);
            }
            let v = serde_json::to_value(&r)?;
            let files = vec![art("compare.csv", t.render(&prov)), art("compare.json", render_json(&prov, kind, v.clone()))];
            (v, files)
        }
        Study::InjectDemo { .. } => {
            let r = study_inject(cfg, exec)?;
            let mut t = CsvTable::new(&["method", "seed", "step", "phase", "loss", "sharpness", "max_update"]);
            for (name, rs) in &r.runs {
                for (s, run) in rs.iter().enumerate() {
                    for p in &run.trace {
                        t.push(vec![
                            name.to_string(),
                            s.to_string(),
                            p.step.to_string(),
                            p.phase.to_string(),
                            p.loss.to_string(),
                            p.sharpness.to_string(),
                            p.max_update.to_string(),
                        ]);
                    }
                }
            }
            let v = serde_json::to_value(&r)?;
            let files = vec![art("inject_trace.csv", t.render(&prov)), art("inject.json", render_json(&prov, kind, v.clone()))];
            (v, files)
        }
        Study::R2 { .. } => {
            let r = study_r2(cfg)?;
            let mut t = CsvTable::new(&["step", "basin"]);
            for &(s, k) in &r.transitions {
                t.push(vec![s.to_string(), k.to_string()]);
            }
            let mut summary = serde_json::to_value(&r)?;
            summary.as_object_mut().unwrap().remove("transitions");
            summary["transition_count"] = json!(r.transitions.len());
            let files = vec![
                art("r2_occupancy.csv", histogram_csv(&r.histogram).render(&prov)),
                art("r2_transitions.csv", t.render(&prov)),
                art("r2.json", render_json(&prov, kind, summary.clone())),
            ];
            (summary, files)
        }
    };
    Ok(StudyOutput { summary, artifacts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(study: serde_json::Value) -> ExperimentConfig {
        ExperimentConfig::from_json(&json!({ "study": study }).to_string()).unwrap()
    }

    #[test]
    fn zero_noise_exit_study_is_all_censored() {
        let mut c = cfg(json!({"kind": "exit_scaling", "replications": 2, "max_steps": 1000,
            "regimes": [{"b": 0.5}]}));
        c.noise = Some(NoiseModel::Zero);
        assert!(matches!(study_exit_scaling(&c, Execution::Parallel), Err(Error::AllCensored)));
    }

    #[test]
    fn exit_study_reports_censoring_and_fit() {
        let c = cfg(json!({"kind": "exit_scaling", "replications": 4, "max_steps": 200_000,
            "regimes": [{"b": null, "eta_grid": [0.02, 0.01, 0.005]}]}));
        let (fit, rows) = study_exit_scaling(&c, Execution::Parallel).unwrap();
        assert_eq!(rows.len(), 12);
        let r = &fit.regimes[0];
        assert_eq!(r.l_star, 1);
        assert!((r.predicted_exponent.unwrap() - 1.2).abs() < 1e-12);
        assert!(r.points.iter().all(|p| p.used_in_fit));
        assert!(r.fit.is_some());
        let csv = exit_csv(&rows);
        assert_eq!(csv.columns.join(","), "eta,b,replication,exit_step,censored,source_field,dest_field,exit_position");
        assert!(csv.rows.iter().all(|row| row[1] == "none" && row[5] == "2"));
    }

    #[test]
    fn exit_study_checks_assumption3_and_start() {
        // width of field 2 is 0.6007; b = 0.6007... / 2 is not exact, but an integer ratio is refused
        let (_, points) = LandscapeSpec::Named("paper-r1".into()).build_1d().unwrap();
        let w = points.field(1).width();
        let c = cfg(json!({"kind": "exit_scaling", "regimes": [{"b": w / 2.0}]}));
        assert_eq!(study_exit_scaling(&c, Execution::Sequential).unwrap_err().exit_code(), 3);
        let c = cfg(json!({"kind": "exit_scaling", "start": 0.3}));
        assert_eq!(study_exit_scaling(&c, Execution::Sequential).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn light_tails_stay_put() {
        let mut c = cfg(json!({"kind": "occupancy", "steps": 200_000, "paths": 2}));
        c.noise = Some(NoiseModel::gaussian(1.0));
        let r = study_occupancy(&c, Execution::Parallel).unwrap();
        assert_eq!(r.start_field, 3);
        assert!(r.start_field_fraction > 0.99);
        assert_eq!(r.large_fields, vec![2, 4]);
        assert_eq!(r.pooled.total, 2 * 20_000);
    }

    #[test]
    fn empty_occupancy_run_is_an_error() {
        let c = cfg(json!({"kind": "occupancy", "steps": 0, "paths": 1}));
        assert!(matches!(study_occupancy(&c, Execution::Sequential), Err(Error::EmptyHistogram)));
    }

    #[test]
    fn zero_noise_r2_stays_in_its_basin() {
        let mut c = cfg(json!({"kind": "r2", "steps": 20_000}));
        c.noise = Some(NoiseModel::Zero);
        let r = study_r2(&c).unwrap();
        assert_eq!(r.first_basin, Some(3));
        assert_eq!(r.histogram.counts[2], r.histogram.total);
        assert_eq!(r.transitions.len(), 1);
    }

    #[test]
    fn graph_study_json_shape() {
        let (g, v) = study_graph(&cfg(json!({"kind": "graph", "b": 0.5}))).unwrap();
        assert!(g.irreducible);
        assert_eq!(v["l_star"], json!([1, 2, 1, 2]));
        for key in ["nodes", "edges", "classes", "irreducible", "symmetric", "l_star", "exponents"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!((v["exponents"][1].as_f64().unwrap() - 1.4).abs() < 1e-12);
    }

    #[test]
    fn rates_and_ctmc_outputs() {
        let c = cfg(json!({"kind": "rates", "b": 0.5, "class": 1, "rates": {"n_samples": 20_000}}));
        let out = run_study(&c, Execution::Parallel).unwrap();
        let v = &out.summary;
        assert_eq!(v["fields"]["2"]["targets"].as_object().unwrap().len(), 3);
        assert!(v["fields"]["2"]["q"].as_f64().unwrap() > 0.0);
        assert_eq!(v["ctmc"]["states"], json!([2, 4]));
        let rows = v["dtmc"].as_array().unwrap();
        for row in rows {
            let s: f64 = row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(out.artifact("ctmc.json").is_some());
    }

    #[test]
    fn outputs_are_byte_identical_and_stamped() {
        let c = cfg(json!({"kind": "occupancy", "steps": 50_000, "paths": 3}));
        let a = run_study(&c, Execution::Parallel).unwrap();
        let b = run_study(&c, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        let hash = Provenance::of(&c.canonical_json()).config_sha256;
        for art in &a.artifacts {
            assert!(art.contents.contains(&hash), "{}", art.name);
            assert!(art.contents.contains(super::super::VERSION), "{}", art.name);
        }
        let mut other = c.clone();
        other.seed = 1;
        assert_ne!(run_study(&other, Execution::Parallel).unwrap().artifacts, a.artifacts);
        assert_eq!(
            a.artifact("occupancy.csv").unwrap().lines().nth(1),
            Some("field_label,count,fraction")
        );
    }

    #[test]
    fn inject_demo_small() {
        let c = cfg(json!({"kind": "inject_demo", "seeds": 4, "injection": {
            "eta": 0.01, "b": 0.5, "sb": 10, "lb": 100, "c": 0.5, "alpha": 1.4, "mode": "independent",
            "phase1": 2000, "phase2": 500, "trace_stride": 500}}));
        let r = study_inject(&c, Execution::Parallel).unwrap();
        assert_eq!(r.wide_fields, Some(vec![2, 4]));
        assert_eq!(r.methods[1].c, 0.0);
        assert_eq!(r.methods[1].final_fields.as_ref().unwrap(), &vec![Some(3); 4]);
        assert!(r.methods.iter().all(|m| m.max_update <= 0.5));
        let out = run_study(&c, Execution::Parallel).unwrap();
        let trace = out.artifact("inject_trace.csv").unwrap();
        assert_eq!(trace.lines().nth(1), Some("method,seed,step,phase,loss,sharpness,max_update"));
        assert_eq!(trace.lines().count(), 2 + 2 * 4 * 6);
    }
}
