//! Experiment configuration: one JSON document, unknown keys rejected.

use crate::error::{Error, Result};
use crate::injection::InjectionConfig;
use crate::landscape::{find_critical_points, CriticalPointSet, HimmelblauParams, Landscape, Landscape1D, Landscape2D};
use crate::limit::RateConfig;
use crate::noise::NoiseModel;
use crate::sgd::DEFAULT_MAX_STEPS;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Default exit-study grid for clipped regimes with `l* <= 2` and the unclipped one.
pub const DEFAULT_ETA_GRID: [f64; 4] = [4e-3, 2e-3, 1e-3, 5e-4];

/// Grid for regimes needing three or more jumps, shifted upward to bound runtimes.
pub const DEFAULT_ETA_GRID_DEEP: [f64; 4] = [1.6e-2, 8e-3, 4e-3, 2e-3];

pub fn default_eta_grid(l_star: u32) -> Vec<f64> {
    if l_star >= 3 { DEFAULT_ETA_GRID_DEEP.to_vec() } else { DEFAULT_ETA_GRID.to_vec() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LandscapeSpec {
    /// `"paper-r1"` or `"himmelblau-r2"`.
    Named(String),
    Custom(CustomLandscape),
}

/// Exactly one of `polynomial` (coefficients, lowest degree first),
/// `critical_points` (gradient roots) or `himmelblau` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomLandscape {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polynomial: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critical_points: Option<Vec<f64>>,
    /// Gradient scale for `critical_points`.
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub himmelblau: Option<HimmelblauParams>,
    pub radius: f64,
}

fn one() -> f64 {
    1.0
}

impl LandscapeSpec {
    pub fn build(&self) -> Result<Landscape> {
        match self {
            LandscapeSpec::Named(name) => Landscape::by_name(name),
            LandscapeSpec::Custom(c) => {
                let given = [c.polynomial.is_some(), c.critical_points.is_some(), c.himmelblau.is_some()];
                if given.iter().filter(|&&g| g).count() != 1 {
                    return Err(Error::config(
                        "custom landscape needs exactly one of polynomial, critical_points, himmelblau",
                    ));
                }
                if let Some(p) = &c.polynomial {
                    Ok(Landscape::R1(Landscape1D::new(
                        crate::landscape::Shape1D::Polynomial { coeffs: p.clone() },
                        c.radius,
                    )?))
                } else if let Some(r) = &c.critical_points {
                    Ok(Landscape::R1(Landscape1D::from_critical_points(r, c.scale, c.radius)?))
                } else {
                    Ok(Landscape::R2(Landscape2D::new(c.himmelblau.unwrap(), c.radius)?))
                }
            }
        }
    }

    pub fn build_1d(&self) -> Result<(Landscape1D, CriticalPointSet)> {
        match self.build()? {
            Landscape::R1(l) => {
                let points = find_critical_points(&l, 20_000, 1e-12)?;
                Ok((l, points))
            }
            Landscape::R2(_) => Err(Error::config("this study needs a one-dimensional landscape")),
        }
    }

    pub fn build_2d(&self) -> Result<Landscape2D> {
        match self.build()? {
            Landscape::R2(l) => Ok(l),
            Landscape::R1(_) => Err(Error::config("this study needs a two-dimensional landscape")),
        }
    }
}

/// One clipping regime of the exit study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    /// `null` for unclipped.
    pub b: Option<f64>,
    /// `None` picks [`default_eta_grid`] from the regime's jump count.
    #[serde(default)]
    pub eta_grid: Option<Vec<f64>>,
}

fn paper_regimes() -> Vec<Regime> {
    [Some(0.28), Some(0.5), None].into_iter().map(|b| Regime { b, eta_grid: None }).collect()
}

fn two() -> usize {
    2
}
fn start_exit() -> f64 {
    -0.7
}
fn start_occ() -> f64 {
    0.3
}
fn twenty() -> u64 {
    20
}
fn ten() -> u64 {
    10
}
fn max_steps() -> u64 {
    DEFAULT_MAX_STEPS
}
fn b_half() -> Option<f64> {
    Some(0.5)
}
fn eta_occ() -> f64 {
    1e-3
}
fn steps_occ() -> u64 {
    10_000_000
}
fn eta_small() -> f64 {
    5e-4
}
fn reps_compare() -> u64 {
    200
}
fn b_r2() -> Option<f64> {
    Some(2.15)
}
fn steps_r2() -> u64 {
    3_000_000
}
fn start_r2() -> [f64; 2] {
    [2.9, 1.0]
}
fn multi_well() -> String {
    "multi-well".into()
}
fn fifty() -> u64 {
    50
}

/// Study-specific settings, tagged by `kind`. Fields are one-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Study {
    ExitScaling {
        #[serde(default = "two")]
        field: usize,
        #[serde(default = "start_exit")]
        start: f64,
        #[serde(default = "paper_regimes")]
        regimes: Vec<Regime>,
        #[serde(default = "twenty")]
        replications: u64,
        #[serde(default = "max_steps")]
        max_steps: u64,
    },
    Occupancy {
        #[serde(default = "b_half")]
        b: Option<f64>,
        #[serde(default = "eta_occ")]
        eta: f64,
        #[serde(default = "steps_occ")]
        steps: u64,
        #[serde(default = "ten")]
        paths: u64,
        #[serde(default = "start_occ")]
        start: f64,
        #[serde(default = "ten")]
        record_stride: u64,
    },
    Graph {
        #[serde(default = "b_half")]
        b: Option<f64>,
    },
    Rates {
        #[serde(default = "b_half")]
        b: Option<f64>,
        #[serde(default)]
        rates: RateConfig,
        /// Communication class for the CTMC, one-based.
        #[serde(default)]
        class: Option<usize>,
    },
    CtmcCompare {
        #[serde(default = "two")]
        field: usize,
        #[serde(default = "start_exit")]
        start: f64,
        #[serde(default = "b_half")]
        b: Option<f64>,
        #[serde(default = "eta_small")]
        eta: f64,
        #[serde(default = "reps_compare")]
        replications: u64,
        #[serde(default = "max_steps")]
        max_steps: u64,
        #[serde(default)]
        rates: RateConfig,
    },
    InjectDemo {
        #[serde(default = "multi_well")]
        problem: String,
        /// Seed of the synthetic data set, separate from the run seed.
        #[serde(default)]
        data_seed: u64,
        #[serde(default = "fifty")]
        seeds: u64,
        #[serde(default)]
        start: Option<Vec<f64>>,
        /// `None` uses the problem's defaults.
        #[serde(default)]
        injection: Option<InjectionConfig>,
    },
    R2 {
        #[serde(default = "b_r2")]
        b: Option<f64>,
        #[serde(default = "eta_small")]
        eta: f64,
        #[serde(default = "steps_r2")]
        steps: u64,
        #[serde(default = "start_r2")]
        start: [f64; 2],
        #[serde(default = "ten")]
        record_stride: u64,
    },
}

impl Study {
    pub fn kind(&self) -> &'static str {
        match self {
            Study::ExitScaling { .. } => "exit_scaling",
            Study::Occupancy { .. } => "occupancy",
            Study::Graph { .. } => "graph",
            Study::Rates { .. } => "rates",
            Study::CtmcCompare { .. } => "ctmc_compare",
            Study::InjectDemo { .. } => "inject_demo",
            Study::R2 { .. } => "r2",
        }
    }

    /// The study with every field at its default.
    pub fn default_of(kind: &str) -> Result<Self> {
        Ok(serde_json::from_value(serde_json::json!({ "kind": kind }))?)
    }
}

/// Top-level document. `landscape` and `noise` default per study: the
/// one-dimensional benchmark with `0.1 U Pareto(1.2)` noise, or the 2-D
/// landscape with isotropic `0.75 Pareto(1.2)` noise for `r2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub landscape: Option<LandscapeSpec>,
    #[serde(default)]
    pub noise: Option<NoiseModel>,
    #[serde(default)]
    pub seed: u64,
    /// Output directory.
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub study: Study,
}

impl ExperimentConfig {
    pub fn new(study: Study) -> Self {
        ExperimentConfig { landscape: None, noise: None, seed: 0, output: None, study }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    /// Fill in the per-study landscape and noise so the document is explicit
    /// (and its hash reflects what actually ran).
    pub fn resolved(mut self) -> Self {
        let r2 = matches!(self.study, Study::R2 { .. });
        if self.landscape.is_none() {
            let name = if r2 { "himmelblau-r2" } else { "paper-r1" };
            self.landscape = Some(LandscapeSpec::Named(name.into()));
        }
        if self.noise.is_none() {
            self.noise = Some(if r2 {
                NoiseModel::IsotropicPareto2D { alpha: 1.2, scale: 0.75 }
            } else {
                NoiseModel::pareto(1.2, 0.1)
            });
        }
        self
    }

    pub fn landscape(&self) -> LandscapeSpec {
        self.clone().resolved().landscape.unwrap()
    }

    pub fn noise(&self) -> NoiseModel {
        self.clone().resolved().noise.unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        self.noise().validate()?;
        self.landscape().build()?;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        let threshold = |b: Option<f64>| b.map_or(Ok(()), |b| positive("b", b));
        let counted = |name: &str, n: u64| {
            if n > 0 { Ok(()) } else { Err(Error::config(format!("{name} must be at least 1"))) }
        };
        match &self.study {
            Study::ExitScaling { field, regimes, replications, max_steps, .. } => {
                if *field == 0 {
                    return Err(Error::config("fields are numbered from 1"));
                }
                if regimes.is_empty() {
                    return Err(Error::config("exit study needs at least one regime"));
                }
                for r in regimes {
                    threshold(r.b)?;
                    if let Some(g) = &r.eta_grid {
                        g.iter().try_for_each(|&e| positive("eta", e))?;
                    }
                }
                counted("replications", *replications)?;
                counted("max_steps", *max_steps)?;
            }
            Study::Occupancy { b, eta, paths, record_stride, .. } => {
                threshold(*b)?;
                positive("eta", *eta)?;
                counted("paths", *paths)?;
                counted("record_stride", *record_stride)?;
            }
            Study::Graph { b } => threshold(*b)?,
            Study::Rates { b, rates, class } => {
                threshold(*b)?;
                rates.validate()?;
                if *class == Some(0) {
                    return Err(Error::config("classes are numbered from 1"));
                }
            }
            Study::CtmcCompare { field, b, eta, replications, max_steps, rates, .. } => {
                if *field == 0 {
                    return Err(Error::config("fields are numbered from 1"));
                }
                threshold(*b)?;
                positive("eta", *eta)?;
                counted("replications", *replications)?;
                counted("max_steps", *max_steps)?;
                rates.validate()?;
            }
            Study::InjectDemo { seeds, injection, .. } => {
                counted("seeds", *seeds)?;
                if let Some(i) = injection {
                    i.validate()?;
                }
            }
            Study::R2 { b, eta, record_stride, .. } => {
                threshold(*b)?;
                positive("eta", *eta)?;
                counted("record_stride", *record_stride)?;
            }
        }
        Ok(())
    }

    /// Canonical serialisation of the resolved config. The output directory
    /// is left out: it does not change results.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone().resolved();
        c.output = None;
        serde_json::to_string(&c).expect("config serialises")
    }
}
