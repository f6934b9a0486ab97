//! Transition-state analysis for network dynamics under exponential-family
//! random graph models.
//!
//! The pipeline samples the graph distribution with Metropolis MCMC, collapses
//! sampled graphs into states keyed by sufficient statistics, finds the
//! maximum state probability change path between two aligned states, simulates
//! four continuous-time generating processes between the same states, and
//! compares the resulting walks with the predicted path.

pub mod analysis;
pub mod change_path;
pub mod config;
pub mod egp;
pub mod error;
pub mod graph;
pub mod io;
pub mod mcmc;
pub mod pipeline;
pub mod potential;
pub mod rng;
pub mod state_space;

pub use change_path::{mspcp, ChangePath, Milestone, PathWeight};
pub use egp::{EgpKind, EgpVariant, Trajectory};
pub use error::Error;
pub use graph::{Attr, Dyad, Graph, NodeAttributeTable};
pub use potential::{potential, stats, StatVector, Theta};
pub use state_space::{StateId, StateSpace};
