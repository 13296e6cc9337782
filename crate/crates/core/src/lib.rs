//! Normalized ground states and semiclassical multi-peak states for nonlinear
//! Schrödinger equations with logarithmic-type nonlinearities.

pub mod analysis;
pub mod energy;
pub mod error;
pub mod field;
pub mod model;
pub mod multipeak;
pub mod solver;
pub mod verify;

pub use energy::{Functional, PenalizationParams, PenalizedFunctional, PotentialKind, PotentialSpec};
pub use error::{Error, Result};
pub use field::{Cutoff, Field, Grid};
pub use model::{Gausson, NonlinearityKind, NonlinearityModel, NonlinearityValues};
pub use multipeak::PeakSet;
