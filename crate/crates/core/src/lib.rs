//! Block-maxima extreme value analysis with the Generalized Extreme Value
//! (GEV) distribution, optionally with a Gaussian random effect on the
//! location parameter.
//!
//! The crate is organised bottom-up:
//!
//! - [`gev`]: closed-form GEV mathematics (cdf, density, quantile, return
//!   level, support, mean, inverse-transform sampling).
//! - [`blocks`]: time-series ingestion and block-maxima extraction.
//! - [`model`]: fixed- and random-location posterior densities.
//! - [`mcmc`]: adaptive Metropolis-within-Gibbs sampler, posterior summaries
//!   and convergence diagnostics.
//! - [`report`]: return-level posteriors and percentile-annotated reports.
//! - [`oracle`]: maximum-likelihood fitting and synthetic panels used to
//!   cross-check the sampler.

pub mod blocks;
pub mod error;
pub mod gev;
pub mod mcmc;
pub mod model;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod stats;

pub use blocks::{
    extract_all, extract_block_maxima, BlockRecord, BlockRule, BlockSeries, ExtremumKind,
    Extraction, RawSeries,
};
pub use error::{Error, Result};
pub use gev::{GevParams, ShapeKind, SupportInterval, GUMBEL_TOL};
pub use model::{LocationMode, ModelSpec, ParamState, PriorSpec};
pub use mcmc::{run_chain, ChainDraws, McmcConfig, PosteriorSummary};
pub use oracle::{mle_fit, simulate_panel, MleFit, SimulationTruth, SyntheticPanel};
pub use report::{build_report, coverage_check, return_level_posterior, ReturnLevelReport, Scope};
