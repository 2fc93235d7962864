//! Subspace identification and network-aware Kalman filtering for teleoperated manipulators.
//!
//! The toolkit identifies a discrete-time state-space model of a slave manipulator
//! from master/slave trajectory data with the MOESP subspace method, degrades the
//! slave measurement stream through a simulated channel (constant delay, Gaussian
//! jitter, Bernoulli loss with hold), and tracks the slave position with a Kalman
//! filter whose noise covariances are bootstrapped from residuals.
//!
//! Modules:
//! - [`dataio`]: CSV datasets, min-max normalization, block Hankel matrices
//! - [`sysid`]: MOESP decomposition, order selection, realization, simulation
//! - [`netsim`]: channel impairment and the canonical scenario suite
//! - [`estimator`]: Kalman predict/update, filter runs, empirical Q/R
//! - [`metrics`]: RMSE, accuracy percentages, innovation whiteness, fit reports
//! - [`synthetic`]: random stable systems and a teleoperation surrogate trial
//! - [`pipeline`]: experiment configs and the identify/validate/sweep commands

pub mod dataio;
pub mod error;
pub mod estimator;
pub mod metrics;
pub mod netsim;
pub mod pipeline;
pub mod synthetic;
pub mod sysid;

pub use error::{Error, Result};
