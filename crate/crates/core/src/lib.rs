//! Simulator and learning algorithms for cache-aided NOMA mobile edge computing.
//!
//! The crate is organised bottom-up:
//!
//! - [`sysmodel`]: configuration, tasks, topology, channels and per-slot decisions.
//! - [`noma`]: uplink SIC ordering, achievable rates, offloading time and energy.
//! - [`energy`]: local/MEC computing cost, the expected-energy objective and
//!   constraint checking, plus an exhaustive optimum for small instances.
//! - [`lstm`]: an LSTM popularity predictor trained with BPTT and RTRL.
//! - [`saq`]: tabular single-agent Q-learning over joint decisions.
//! - [`bla`]: Bayesian learning automata and the multi-agent offloading loop.
//! - [`harness`]: scenarios, baselines, sweeps and CSV output.
//!
//! Every generator takes an explicit seed so runs are reproducible.

pub mod bla;
pub mod energy;
pub mod env;
mod error;
pub mod harness;
pub mod lstm;
pub mod noma;
pub mod saq;
pub mod stats;
pub mod sysmodel;

pub use error::{Constraint, Error, Result};

pub use bla::{Action, BetaArmState, Outcome};
pub use energy::{EnergyBreakdown, EvalOptions, FormulaMode, PopularityMatrix};
pub use env::Scenario;
pub use lstm::{LstmParams, LstmState, SeriesDataset};
pub use noma::UplinkSet;
pub use saq::{ActionId, QTable, StateId};
pub use sysmodel::{ChannelState, DecisionVector, Placement, SystemConfig, TaskSpec, Topology};
