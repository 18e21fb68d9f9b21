//! A numerical laboratory for the geometry of negatively curved surfaces.
//!
//! The crate models the open unit disk with a conformal metric — the
//! constant-curvature hyperbolic metric, or a compactly supported
//! perturbation of it that stays invariant under a fixed genus-2 surface
//! group.  On top of that it builds the geodesic flow with Jacobi and
//! Riccati data, growth series (sphere areas, ball volumes, orbit counts),
//! Busemann functions, sphere-limit boundary measures, and the entropy /
//! curvature-average identities that characterize the constant-curvature
//! case in dimension two.

pub mod asymptotics;
pub mod boundary;
pub mod error;
pub mod flow;
pub mod fuchsian;
pub mod geometry;
pub mod measures;
pub mod metric;

pub use error::{Error, Result};
pub use geometry::{distance_to_origin, hyperbolic_distance, orthocircle, Point};
pub use metric::SurfaceMetric;
