//! Shared geometric primitives: convex shapes with exact signed
//! distances, a planar kinematic chain, and small-matrix helpers.
//!
//! All types are immutable values and every operation is a pure
//! function, so everything here is safe to call concurrently.

mod chain;
mod rotation;
mod shape;

pub use chain::{
    min_separation, CapsuleSeg, CriticalPoint, KinematicChain, PointKinematics, RobotState,
    Separation, SphereObstacle,
};
pub use rotation::project_to_rotation;
pub use shape::{signed_distance, signed_distance_gradient, ConvexShape, GradientInfo};
