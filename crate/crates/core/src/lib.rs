//! Tabular ContraDICE: offline imitation learning from good and bad
//! demonstrations via a convex occupancy-matching objective.

pub mod datasets;
pub mod envs;
pub mod experiment;
pub mod error;
pub mod mdp;
pub mod objectives;
pub mod oracle;
pub mod ratios;
pub mod trainer;

pub use error::{Error, Result};
pub use mdp::{OccupancyMeasure, Policy, TabularMdp, TransitionModel};
