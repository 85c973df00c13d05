//! Rare-event exploration for negatively drifted random walks and Lévy
//! processes under finite time budgets.
//!
//! * [`cumulant`]: cumulant functions, Cramér roots, tilting, `N*`.
//! * [`paths`]: single trajectories, first passage and interval exit.
//! * [`parallel`]: independent particles sharing a budget.
//! * [`restart`]: restarted processes and restart measures.
//! * [`flemingviot`]: particle approximations of quasi-stationary laws.
//! * [`queueing`]: M/M/1 and M/M/1/K stationary estimation.
//! * [`oracle`]: exact ground truth used by the tests.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cumulant;
pub mod error;
pub mod flemingviot;
pub mod oracle;
pub mod parallel;
pub mod paths;
pub mod queueing;
pub mod restart;
pub mod rng;
pub mod stats;
pub mod table;

pub use cumulant::{Cumulant, CumulantProfile, IncrementLaw, LevyModel, Model};
pub use error::{Error, Result};
