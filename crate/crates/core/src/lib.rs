//! Multi-cell network energy-saving simulator.
//!
//! When some base stations are switched off, the remaining ones adapt the
//! tilt and transmit power of their sector antennas to cover stranded
//! users. This crate models the radio links ([`radio`]), association and
//! service constraints ([`network`]), the control problem as a decision
//! process ([`env`]), a deep Q-learning controller ([`dqn`]), two baseline
//! policies ([`baselines`]) and the experiment harness ([`harness`]).

pub mod baselines;
pub mod dqn;
pub mod env;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod network;
pub mod radio;

pub use env::{Env, EnvAction, EnvState, Scenario, StepResult};
pub use error::{Error, Result};
pub use harness::ExperimentConfig;
pub use metrics::{EvalSummary, MetricsLog};
