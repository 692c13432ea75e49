//! Community recovery for mean-field interacting binary chains on a random
//! directed graph.
//!
//! N components, split into an excitatory and an inhibitory community, evolve
//! as a Markov chain on `{0,1}^N` coupled through a directed Erdős–Rényi
//! graph with weights `±1/N`. The communities are recovered from an observed
//! trajectory by clustering the column sums of the empirical lag-one
//! covariance.
//!
//! * [`params`]: model parameters and closed-form limits
//! * [`environment`]: community layout and random graph
//! * [`simulator`] / [`trajectory_io`]: chain simulation and export
//! * [`oracle`]: exact environment-conditional means and covariances
//! * [`estimator`]: σ̂, 2-means, scoring
//! * [`experiment`]: Monte Carlo harness, heatmaps and sweeps

pub mod bits;
pub mod environment;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod oracle;
pub mod params;
pub mod rng;
pub mod simulator;
pub mod svg;
pub mod trajectory_io;

pub use environment::{CommunityLayout, Environment, ThetaEncoding};
pub use error::{Error, Result};
pub use estimator::{kmeans2, recover, score, sigma_hat, RecoveryResult, RecoveryScore};
pub use oracle::{OracleOptions, OracleQuantities};
pub use params::{ModelParams, TheoreticalConstants};
pub use simulator::{simulate, SimConfig, Simulator, Trajectory, TrajectorySummary};
