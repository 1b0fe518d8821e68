//! Simulation, sensing, estimation, planning and control for an ellipsoidal
//! robot pushing through a pair of torsion-spring beams.

pub mod config;
pub mod controller;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod geometry;
pub mod landscape;
pub mod planner;
pub mod quasistatic;
pub mod sim;
pub mod simplex;

pub use config::WorldConfig;
pub use error::{Error, Result};
