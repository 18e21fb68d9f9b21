//! Error type shared by every module in the crate.

use crate::fuchsian::OrbitBall;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A coordinate pair that is not inside the open unit disk.
    #[error("point ({0}, {1}) lies outside the open unit disk")]
    OutsideDisk(f64, f64),

    /// Metric construction or evaluation found nonnegative curvature.
    #[error("metric invalid: curvature {max_k:.6e} at ({at_u:.4}, {at_v:.4}) is not negative (perturbation too large)")]
    InvalidMetric { max_k: f64, at_u: f64, at_v: f64 },

    /// A Jacobi field lost positivity, which cannot happen under
    /// nonpositive curvature; this always indicates a broken metric.
    #[error("Jacobi field vanished at t = {t:.6}: conjugate point encountered")]
    ConjugatePoint { t: f64 },

    /// A trajectory left the numerically representable part of the disk.
    #[error("geodesic reached |z| >= 1 - 1e-12 at t = {t:.4}; increase precision or reduce the horizon")]
    Horizon { t: f64 },

    /// An iteration failed to converge within its horizon or budget.
    #[error("numeric failure in {context}: {detail}")]
    NumericFailure {
        context: &'static str,
        detail: String,
    },

    /// Orbit enumeration hit the word budget before exhausting the ball.
    /// The partial enumeration is attached so a caller can inspect it.
    #[error("orbit enumeration exceeded the budget of {budget} words (radius reached {reached:.3}); results are partial")]
    BudgetExceeded {
        budget: usize,
        reached: f64,
        partial: Box<OrbitBall>,
    },

    /// Atom matching between two boundary measures failed.
    #[error("measure pairing failed: atom at angle {angle:.6} has no partner within {gap:.3e} rad")]
    Pairing { angle: f64, gap: f64 },

    /// Structurally invalid argument (zero radius, empty window, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Mathematically undefined request (e.g. a Gromov product of a
    /// boundary point with itself).
    #[error("undefined input: {0}")]
    UndefinedInput(String),

    /// Operation is only defined for a metric kind other than the one given.
    #[error("unsupported metric for {0}: closed-form boundary data requires the hyperbolic metric")]
    UnsupportedMetric(&'static str),

    /// I/O failures surfaced by report writers.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
