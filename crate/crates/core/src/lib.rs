//! Hard-sphere dynamics in the Boltzmann-Grad regime: exact event-driven
//! flow, pseudo-trajectory expansions of the BBGKY / Boltzmann-Enskog /
//! Boltzmann hierarchies, recollision-set geometry, and ensemble chaos
//! diagnostics.
//!
//! Particle indices are 0-based throughout.

pub mod badsets;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod geometry;
pub mod goodsets;
pub mod hierarchy;
pub mod jset;
pub mod mc;
pub mod pseudotraj;

pub use dynamics::{
    boundary_involution, flow, flow_with, is_free_backward, next_event, CollisionEvent, Direction, FlowLog,
    FlowOptions, Interaction, Particle, PhaseState,
};
pub use error::{Error, Result};
pub use geometry::{ray_min_distance, reflect_direction, scatter, UnitVec, Vector};
pub use mc::McEstimate;
pub use badsets::{Label, StabilityParams};
pub use ensemble::ChaosVariant;
pub use goodsets::GoodSetParams;
pub use hierarchy::{DensitySpec, SeriesQuery};
pub use jset::{jset, JSet};
pub use pseudotraj::{CreationSpec, HierarchyKind, PseudoTrajectory, Variant};
