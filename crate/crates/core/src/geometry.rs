//! Points of the open unit disk and the constant-curvature distance.
//!
//! The disk carries the conformal metric λ(z)²|dz|² with λ(z) = 2/(1-|z|²),
//! which has curvature -1.  Everything downstream (isometries, flows,
//! boundary data) works in these coordinates.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the open unit disk, kept valid by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint")]
pub struct Point {
    u: f64,
    v: f64,
}

#[derive(Deserialize)]
struct RawPoint {
    u: f64,
    v: f64,
}

impl TryFrom<RawPoint> for Point {
    type Error = Error;

    fn try_from(raw: RawPoint) -> Result<Self> {
        Point::new(raw.u, raw.v)
    }
}

impl Point {
    /// Builds a disk point, rejecting coordinates on or outside the circle.
    pub fn new(u: f64, v: f64) -> Result<Self> {
        if !(u * u + v * v).is_finite() || u * u + v * v >= 1.0 {
            return Err(Error::OutsideDisk(u, v));
        }
        Ok(Self { u, v })
    }

    pub fn origin() -> Self {
        Self { u: 0.0, v: 0.0 }
    }

    /// The same point as a complex number.
    pub fn complex(self) -> Complex64 {
        Complex64::new(self.u, self.v)
    }

    /// Builds a point from a complex number inside the disk.
    pub fn from_complex(z: Complex64) -> Result<Self> {
        Self::new(z.re, z.im)
    }

    pub fn u(self) -> f64 {
        self.u
    }

    pub fn v(self) -> f64 {
        self.v
    }

    pub fn norm_sqr(self) -> f64 {
        self.u * self.u + self.v * self.v
    }
}

/// Distance in the curvature -1 metric.
///
/// Uses d(x, y) = 2 asinh(|x-y| / sqrt((1-|x|²)(1-|y|²))), which is exact
/// and keeps full precision for nearby points, where the textbook
/// arccosh(1 + 2q) form loses half the significant digits.
pub fn hyperbolic_distance(x: Point, y: Point) -> f64 {
    let dx = x.u - y.u;
    let dy = x.v - y.v;
    let sep = (dx * dx + dy * dy).sqrt();
    let scale = ((1.0 - x.norm_sqr()) * (1.0 - y.norm_sqr())).sqrt();
    2.0 * (sep / scale).asinh()
}

/// Distance from the origin, a frequent special case.
pub fn distance_to_origin(x: Point) -> f64 {
    let r = x.norm_sqr().sqrt();
    2.0 * r.atanh()
}

/// Center and radius of the circle through `z1` and `z2` that meets the
/// unit circle at right angles — the geodesic through the two points.
/// Accepts points of the closed disk (boundary points included).  Returns
/// `None` when the two points are collinear with the origin, in which case
/// the geodesic is a straight diameter.
pub fn orthocircle(z1: Complex64, z2: Complex64) -> Option<(Complex64, f64)> {
    // Orthogonality to the unit circle means |c|² = r² + 1, which turns
    // |z - c| = r into the linear condition 2 Re(conj(z) c) = |z|² + 1.
    let det = z1.re * z2.im - z1.im * z2.re;
    let scale = (z1.norm() * z2.norm()).max(1e-300);
    if det.abs() < 1e-13 * scale {
        return None;
    }
    let s1 = z1.norm_sqr() + 1.0;
    let s2 = z2.norm_sqr() + 1.0;
    let cx = (s1 * z2.im - s2 * z1.im) / (2.0 * det);
    let cy = (s2 * z1.re - s1 * z2.re) / (2.0 * det);
    let c = Complex64::new(cx, cy);
    Some((c, (c.norm_sqr() - 1.0).sqrt()))
}
