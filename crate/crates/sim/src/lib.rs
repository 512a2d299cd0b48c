//! Articulated-body simulation for the legged walker zoo.
//!
//! The crate bundles a reduced-coordinate rigid-body simulator with penalty
//! ground contact, a series-elastic actuator model with thermal state, a TOML
//! morphology format and the built-in robot descriptions.

pub mod actuator;
pub mod morphology;
pub mod physics;
pub mod plant;
pub mod spatial;
pub mod terrain;
pub mod zoo;

pub use actuator::{ActuatorParams, ActuatorState, SetpointFilter};
pub use morphology::{RobotSpec, SpecError};
pub use physics::{LinkWrench, PhysicsConfig, PhysicsError, SimState, Simulator};
pub use plant::{Plant, PlantError};
pub use terrain::Terrain;
