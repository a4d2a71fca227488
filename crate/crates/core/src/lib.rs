//! Planar Filippov systems with sliding modes.
//!
//! This crate simulates a time-periodic piecewise-smooth planar system with
//! event-located integration (transversal crossings, attracting sliding,
//! deterministic repelling departure), verifies weighted-contraction
//! conditions on grids, and locates the attracting periodic orbit by
//! fixed-point iteration of the time-T map.
//!
//! Modules follow the pipeline: [`geometry`] defines the piecewise system
//! and switching surface, [`weight`] the contraction weight, [`flow`] the
//! event-located integrator, [`contraction`] the grid checks, [`analysis`]
//! trajectory-pair measurements and the orbit solver, and [`scenario`] the
//! JSON configuration and report plumbing shared with the CLI.

pub mod analysis;
pub mod contraction;
pub mod flow;
pub mod geometry;
pub mod scenario;
pub mod weight;

pub use geometry::{RegionSign, Side, State, SwitchingSurface, SystemDef};
pub use weight::WeightSpec;
