//! The limiting theory: the jump-perturbed flow map, Monte Carlo rate
//! constants, and the reduced discrete- and continuous-time chains.

mod chain;
mod flow;
mod rates;

pub use chain::{
    absorption_probs, ctmc_generator, draw_column, dtmc, sample_ctmc_path, Absorption, CtmcModel, CtmcPath,
    DtmcModel,
};
pub use flow::{jump_ode, FlowIntegrator, JumpVector};
pub use rates::{estimate_all, mc_estimate_rates, single_jump_rate, FieldRates, RateConfig, RateTable};
