//! Ground-truth Hamiltonian systems and the Benettin exponent estimator.

pub mod benettin;
pub mod pendulum;
pub mod standard_map;

pub use benettin::{benettin_exponent, BenettinSettings};
pub use pendulum::{PendulumState, PendulumTrajectory};
pub use standard_map::{MapState, MapVariant};
