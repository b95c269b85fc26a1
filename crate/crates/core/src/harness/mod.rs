//! Experiment orchestration: configuration, studies, fits and result files.

mod config;
mod fit;
mod output;
mod studies;

pub use config::{
    default_eta_grid, CustomLandscape, ExperimentConfig, LandscapeSpec, Regime, Study, DEFAULT_ETA_GRID,
    DEFAULT_ETA_GRID_DEEP,
};
pub use fit::{fit_powerlaw, ks_exponential, mean_var, PowerLawFit};
pub use output::{render_json, Artifact, CsvTable, Provenance, StudyOutput, VERSION};
pub use studies::{
    ctmc_json, exit_csv, graph_json, inspect_landscape, run_study, study_ctmc_compare, study_exit_scaling,
    study_graph, study_inject, study_occupancy, study_r2, study_rates, CompareReport, Destination, EtaPoint,
    ExitRow, FieldInfo, InjectReport, MethodSummary, OccupancyReport, R2Report, RatesReport, RegimeFit,
    ScalingFit,
};
