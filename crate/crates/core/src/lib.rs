//! Line-failure cascade workbench.
//!
//! Simulates overload cascades on DC power-flow grid models, learns static
//! and kinetic pairwise interaction models from the simulated trajectories
//! with weighted l1-regularized logistic regression, and uses the learned
//! models for cascade-size reconstruction, co-susceptible line clustering
//! and failure-unfolding prediction.

pub mod cascade;
pub mod error;
pub mod evaluation;
pub mod glauber;
pub mod grid;
pub mod inference;
pub mod infomap;
pub mod kinetic;
pub mod learn;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod rng;

pub use cascade::{Dataset, NetworkState, Trajectory, Variant};
pub use error::{Error, Result};
pub use grid::Grid;
pub use model::{InteractionModel, ModelKind};
