//! The geodesic flow of a conformal disk metric, together with the
//! transverse Jacobi field, the swept area, and the stable Riccati limit.
//!
//! Geodesics are integrated with a fixed-step RK4 on the state
//! (z, ż, J, J', ∫J).  The integrator periodically recenters the moving
//! point with an isometry — a group element for invariant perturbed
//! metrics, an arbitrary Möbius translation for the constant-curvature
//! metric — and accumulates the frame change, so rays can run for dozens
//! of units without ever pressing against the floating-point horizon of
//! the disk boundary.  Quantities read out at checkpoints are expressed in
//! the original frame.

use num_complex::Complex64;
use std::f64::consts::TAU;

use crate::asymptotics::{GrowthSeries, SeriesLabel};
use crate::error::{Error, Result};
use crate::fuchsian::Isometry;
use crate::geometry::{distance_to_origin, hyperbolic_distance, Point};
use crate::metric::SurfaceMetric;

/// Default integration step for all flows.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Default horizon for the stable Riccati limit.
pub const DEFAULT_RICCATI_HORIZON: f64 = 20.0;

/// Default stabilization certificate: |U(T) - U(T/2)| must fall below this.
pub const DEFAULT_RICCATI_TOLERANCE: f64 = 1e-8;

/// Default horizon when chasing a ray to its boundary endpoint.
pub const DEFAULT_ENDPOINT_HORIZON: f64 = 14.0;

/// A point with a unit-speed direction of the given metric.
#[derive(Debug, Clone, Copy)]
pub struct UnitTangent {
    point: Point,
    velocity: Complex64,
}

impl UnitTangent {
    /// Unit tangent at `point` whose velocity makes Euclidean angle `angle`
    /// with the u-axis (conformal metrics preserve angles, so this is also
    /// the metric angle).
    pub fn from_angle(metric: &SurfaceMetric, point: Point, angle: f64) -> Self {
        let lambda = metric.conformal_factor(point);
        Self {
            point,
            velocity: Complex64::from_polar(1.0 / lambda, angle),
        }
    }

    pub fn point(&self) -> Point {
        self.point
    }

    pub fn velocity(&self) -> Complex64 {
        self.velocity
    }

    pub fn reversed(&self) -> Self {
        Self {
            point: self.point,
            velocity: -self.velocity,
        }
    }
}

/// Everything the flow knows at a checkpoint, in the original frame.
#[derive(Debug, Clone, Copy)]
pub struct RaySample {
    pub t: f64,
    /// Transverse Jacobi field with J(0) = 0, J'(0) = 1.
    pub jacobi: f64,
    pub jacobi_rate: f64,
    /// ∫₀ᵗ J ds, the area swept per unit angle.
    pub swept: f64,
    /// Angle under which the ray point is seen from the origin of the
    /// original frame; converges to the boundary endpoint angle.
    pub boundary_angle: f64,
    /// |λ|ż| - 1|: how far the integration has drifted off unit speed.
    pub speed_defect: f64,
}

/// RK4 state derivative.
struct Derivative {
    dz: Complex64,
    dw: Complex64,
    dj: f64,
    djr: f64,
}

fn rhs(metric: &SurfaceMetric, t: f64, z: Complex64, w: Complex64, j: f64, jr: f64) -> Result<Derivative> {
    let p = Point::from_complex(z).map_err(|_| Error::Horizon { t })?;
    let s = metric.flow_sample(p);
    let (gx, gy) = (s.log_grad.re, s.log_grad.im);
    let (vx, vy) = (w.re, w.im);
    let quad = vx * vx - vy * vy;
    let cross = vx * vy;
    Ok(Derivative {
        dz: w,
        dw: Complex64::new(-gx * quad - 2.0 * gy * cross, gy * quad - 2.0 * gx * cross),
        dj: jr,
        djr: -s.curvature * j,
    })
}

/// The moving state of one geodesic.
struct Stepper<'m> {
    metric: &'m SurfaceMetric,
    z: Complex64,
    w: Complex64,
    jacobi: f64,
    jacobi_rate: f64,
    swept: f64,
    t: f64,
    /// Maps current coordinates back to the original frame.
    frame: Isometry,
}

impl<'m> Stepper<'m> {
    fn new(metric: &'m SurfaceMetric, start: &UnitTangent) -> Self {
        let mut st = Self {
            metric,
            z: start.point().complex(),
            w: start.velocity(),
            jacobi: 0.0,
            jacobi_rate: 1.0,
            swept: 0.0,
            t: 0.0,
            frame: Isometry::identity(),
        };
        st.recenter();
        st
    }

    /// One RK4 step of size `h`, then a horizon check and (if the point
    /// wandered far from the origin) a recentering.
    fn step_by(&mut self, h: f64) -> Result<()> {
        let (z0, w0, j0, r0, t0) = (self.z, self.w, self.jacobi, self.jacobi_rate, self.t);
        let k1 = rhs(self.metric, t0, z0, w0, j0, r0)?;
        let k2 = rhs(
            self.metric,
            t0 + 0.5 * h,
            z0 + 0.5 * h * k1.dz,
            w0 + 0.5 * h * k1.dw,
            j0 + 0.5 * h * k1.dj,
            r0 + 0.5 * h * k1.djr,
        )?;
        let k3 = rhs(
            self.metric,
            t0 + 0.5 * h,
            z0 + 0.5 * h * k2.dz,
            w0 + 0.5 * h * k2.dw,
            j0 + 0.5 * h * k2.dj,
            r0 + 0.5 * h * k2.djr,
        )?;
        let k4 = rhs(
            self.metric,
            t0 + h,
            z0 + h * k3.dz,
            w0 + h * k3.dw,
            j0 + h * k3.dj,
            r0 + h * k3.djr,
        )?;
        let sixth = h / 6.0;
        self.z = z0 + sixth * (k1.dz + 2.0 * (k2.dz + k3.dz) + k4.dz);
        self.w = w0 + sixth * (k1.dw + 2.0 * (k2.dw + k3.dw) + k4.dw);
        self.jacobi = j0 + sixth * (k1.dj + 2.0 * (k2.dj + k3.dj) + k4.dj);
        self.jacobi_rate = r0 + sixth * (k1.djr + 2.0 * (k2.djr + k3.djr) + k4.djr);
        // ∫J has J itself as integrand; reuse the Jacobi stage values.
        self.swept += sixth * (j0 + 2.0 * (j0 + 0.5 * h * k1.dj) + 2.0 * (j0 + 0.5 * h * k2.dj) + (j0 + h * k3.dj));
        self.t = t0 + h;
        if self.z.norm_sqr() >= (1.0 - 1e-12) * (1.0 - 1e-12) {
            return Err(Error::Horizon { t: self.t });
        }
        self.recenter();
        Ok(())
    }

    fn recenter(&mut self) {
        let p = match Point::from_complex(self.z) {
            Ok(p) => p,
            Err(_) => return, // the horizon check after the step will fire
        };
        let gamma = match self.metric.group() {
            Some(group) => {
                if distance_to_origin(p) <= group.circumradius() + 0.5 {
                    return;
                }
                let (_, gamma) = group.reduce_to_domain(p);
                gamma
            }
            None => {
                if self.z.norm_sqr() <= 0.81 {
                    return;
                }
                Isometry::centering(p)
            }
        };
        self.w *= gamma.derivative(self.z);
        self.z = gamma.apply_complex(self.z);
        self.frame = self.frame.compose(&gamma.inverse());
    }

    fn position_point(&self) -> Point {
        Point::from_complex(self.z).expect("recentered position stays well inside the disk")
    }

    fn curvature(&self) -> f64 {
        self.metric.flow_sample(self.position_point()).curvature
    }

    /// Angle of the current position seen from the original frame's origin.
    fn boundary_angle(&self) -> f64 {
        let (a, b) = self.frame.coefficients();
        let num = a * self.z + b;
        let den = b.conj() * self.z + a.conj();
        (num * den.conj()).arg()
    }

    /// d(observer, current position) in the constant-curvature metric,
    /// evaluated by pulling the observer into the current frame; stable out
    /// to arbitrary ray lengths because 1-|·|² of the pulled-back point is
    /// computed from the Möbius identity instead of by subtraction.
    fn distance_from(&self, observer: Point) -> f64 {
        let back = self.frame.inverse();
        let (a, b) = back.coefficients();
        let qc = observer.complex();
        let den = b.conj() * qc + a.conj();
        let pulled = (a * qc + b) / den;
        let one_minus_p = (1.0 - qc.norm_sqr()) / den.norm_sqr();
        let one_minus_z = 1.0 - self.z.norm_sqr();
        let sep = (pulled - self.z).norm();
        2.0 * (sep / (one_minus_p * one_minus_z).sqrt()).asinh()
    }

    fn speed_defect(&self) -> f64 {
        let lambda = self.metric.conformal_factor(self.position_point());
        (lambda * self.w.norm() - 1.0).abs()
    }

    fn sample(&self) -> RaySample {
        RaySample {
            t: self.t,
            jacobi: self.jacobi,
            jacobi_rate: self.jacobi_rate,
            swept: self.swept,
            boundary_angle: self.boundary_angle(),
            speed_defect: self.speed_defect(),
        }
    }
}

fn validate_grid(ts: &[f64], dt: f64) -> Result<()> {
    if ts.is_empty() {
        return Err(Error::DegenerateInput("checkpoint grid is empty".into()));
    }
    if ts[0] < 0.0 || ts.windows(2).any(|w| w[1] <= w[0]) || ts.iter().any(|t| !t.is_finite()) {
        return Err(Error::DegenerateInput(
            "checkpoint times must be finite, nonnegative and strictly increasing".into(),
        ));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::DegenerateInput(format!("step size must be positive, got {dt}")));
    }
    Ok(())
}

/// Walks the stepper through the sorted checkpoint times, calling `visit`
/// at each one.
fn run_checkpoints<T>(
    st: &mut Stepper,
    ts: &[f64],
    dt: f64,
    mut visit: impl FnMut(&Stepper) -> T,
) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(ts.len());
    for &target in ts {
        while st.t + dt <= target * (1.0 + 1e-15) {
            st.step_by(dt)?;
        }
        let rem = target - st.t;
        if rem > 1e-13 {
            st.step_by(rem)?;
        }
        out.push(visit(st));
    }
    Ok(out)
}

/// Integrates the ray from `start` and reports the flow state at each of
/// the strictly increasing checkpoint times.
pub fn probe_ray(
    metric: &SurfaceMetric,
    start: &UnitTangent,
    ts: &[f64],
    dt: f64,
) -> Result<Vec<RaySample>> {
    validate_grid(ts, dt)?;
    let mut st = Stepper::new(metric, start);
    run_checkpoints(&mut st, ts, dt, |s| s.sample())
}

/// (t, d(observer, c(t))) along the ray at the checkpoint times.  Distances
/// are those of the constant-curvature metric, so this requires a metric
/// that is pointwise hyperbolic (the perturbation strength must be zero).
pub fn ray_distances(
    metric: &SurfaceMetric,
    start: &UnitTangent,
    observer: Point,
    ts: &[f64],
    dt: f64,
) -> Result<Vec<(f64, f64)>> {
    if metric.eps() != 0.0 {
        return Err(Error::UnsupportedMetric(
            "ray distances use the constant-curvature distance; the metric must be unperturbed",
        ));
    }
    validate_grid(ts, dt)?;
    let mut st = Stepper::new(metric, start);
    run_checkpoints(&mut st, ts, dt, |s| (s.t, s.distance_from(observer)))
}

/// Growth series of geodesic sphere areas (circumferences) around `center`,
/// sampled at the given times from `n_dirs` equally spaced directions.
pub fn sphere_area(
    metric: &SurfaceMetric,
    center: Point,
    ts: &[f64],
    n_dirs: usize,
    dt: f64,
) -> Result<GrowthSeries> {
    direction_sweep(metric, center, ts, n_dirs, dt).map(|(a, _)| a)
}

/// Growth series of geodesic ball volumes (areas) around `center`.
pub fn ball_volume(
    metric: &SurfaceMetric,
    center: Point,
    ts: &[f64],
    n_dirs: usize,
    dt: f64,
) -> Result<GrowthSeries> {
    direction_sweep(metric, center, ts, n_dirs, dt).map(|(_, b)| b)
}

/// Sphere areas and ball volumes from one shared sweep: the circumference
/// is (2π/n) Σ J_θ(t) and the enclosed area is (2π/n) Σ ∫₀ᵗ J_θ.
pub fn direction_sweep(
    metric: &SurfaceMetric,
    center: Point,
    ts: &[f64],
    n_dirs: usize,
    dt: f64,
) -> Result<(GrowthSeries, GrowthSeries)> {
    if n_dirs < 4 {
        return Err(Error::DegenerateInput(format!(
            "a direction sweep needs at least 4 directions, got {n_dirs}"
        )));
    }
    validate_grid(ts, dt)?;
    let mut areas = vec![0.0; ts.len()];
    let mut volumes = vec![0.0; ts.len()];
    for i in 0..n_dirs {
        let angle = TAU * i as f64 / n_dirs as f64;
        let start = UnitTangent::from_angle(metric, center, angle);
        let samples = probe_ray(metric, &start, ts, dt)?;
        for (k, s) in samples.iter().enumerate() {
            if s.jacobi <= 0.0 && s.t > dt {
                return Err(Error::ConjugatePoint { t: s.t });
            }
            areas[k] += s.jacobi;
            volumes[k] += s.swept;
        }
    }
    let weight = TAU / n_dirs as f64;
    let area_samples = ts.iter().zip(&areas).map(|(&t, &a)| (t, weight * a)).collect();
    let volume_samples = ts.iter().zip(&volumes).map(|(&t, &v)| (t, weight * v)).collect();
    Ok((
        GrowthSeries::new(SeriesLabel::SphereArea, area_samples)?,
        GrowthSeries::new(SeriesLabel::BallVolume, volume_samples)?,
    ))
}

/// The stable Riccati limit at a unit tangent with its stabilization
/// certificate.
#[derive(Debug, Clone, Copy)]
pub struct RiccatiLimit {
    /// U(x, θ): the transverse expansion rate of the unstable field.
    pub value: f64,
    /// |U(T) - U(T/2)|, which must fall under the requested tolerance.
    pub certificate_gap: f64,
    pub horizon: f64,
}

/// Stable solution of the transverse Riccati equation U' = -(U² + K) at
/// `start`, obtained by integrating forward along the incoming geodesic
/// from distance `horizon` in the past with initial value 0.  Fails unless
/// the value has stabilized: |U(T) - U(T/2)| < tolerance.
pub fn riccati_limit(
    metric: &SurfaceMetric,
    start: &UnitTangent,
    horizon: f64,
    dt: f64,
    tolerance: f64,
) -> Result<RiccatiLimit> {
    if !(horizon > 0.0 && horizon.is_finite()) || !(dt > 0.0 && dt < horizon) {
        return Err(Error::DegenerateInput(format!(
            "riccati needs 0 < dt < horizon, got dt={dt}, horizon={horizon}"
        )));
    }
    // Even number of full steps so the half-horizon value lands on a node.
    let mut n = (horizon / dt).ceil() as usize;
    n += n % 2;
    let n = n.max(4);
    let h = horizon / n as f64;

    // Curvature along the incoming ray, sampled every h/2 so the RK4
    // stages of the Riccati sweep read exact nodes.
    let mut st = Stepper::new(metric, &start.reversed());
    let mut curvatures = Vec::with_capacity(2 * n + 1);
    curvatures.push(st.curvature());
    for _ in 0..2 * n {
        st.step_by(0.5 * h)?;
        curvatures.push(st.curvature());
    }

    let (value, at_half) = riccati_from_samples(&curvatures, h);
    let certificate_gap = (value - at_half).abs();
    if certificate_gap > tolerance {
        return Err(Error::NumericFailure {
            context: "riccati stabilization",
            detail: format!(
                "|U(T) - U(T/2)| = {certificate_gap:.3e} exceeds {tolerance:.3e} at horizon {horizon}"
            ),
        });
    }
    Ok(RiccatiLimit {
        value,
        certificate_gap,
        horizon,
    })
}

/// RK4 sweep of u' = -(u² + K(T-σ)) for σ from 0 to T with u(0) = 0, with
/// K sampled on a half-step grid along the incoming ray (k[i] = K at arc
/// length i·h/2 from the basepoint, so the sweep runs the array backward
/// and ends at the basepoint).  Returns u(T).
fn riccati_sweep(k: &[f64], h: f64) -> f64 {
    let n = (k.len() - 1) / 2;
    debug_assert!(k.len() == 2 * n + 1);
    let f = |u: f64, kk: f64| -(u * u + kk);
    let mut u = 0.0;
    for j in 0..n {
        let k0 = k[2 * (n - j)];
        let k1 = k[2 * (n - j) - 1];
        let k2 = k[2 * (n - j) - 2];
        let a1 = f(u, k0);
        let a2 = f(u + 0.5 * h * a1, k1);
        let a3 = f(u + 0.5 * h * a2, k1);
        let a4 = f(u + h * a3, k2);
        u += h / 6.0 * (a1 + 2.0 * (a2 + a3) + a4);
    }
    u
}

/// Riccati values at the basepoint from the full horizon and from half the
/// horizon (n even); the two runs share the curvature samples, and their
/// difference certifies stabilization because solutions launched at
/// different depths contract together exponentially.
pub(crate) fn riccati_from_samples(k: &[f64], h: f64) -> (f64, f64) {
    let n = (k.len() - 1) / 2;
    debug_assert!(k.len() == 2 * n + 1 && n % 2 == 0);
    (riccati_sweep(k, h), riccati_sweep(&k[..=n], h))
}

/// Distance between two points of a perturbed metric, by shooting: scan
/// launch angles coarsely, then refine the best one by golden-section
/// search on the closest-approach miss.  Also valid for the hyperbolic
/// metric, where it can be checked against the closed form.
pub fn shooting_distance(metric: &SurfaceMetric, x: Point, y: Point) -> Result<f64> {
    let base = hyperbolic_distance(x, y);
    if base == 0.0 {
        return Ok(0.0);
    }
    // Conformal ratios stay within a few percent of 1, so the true
    // distance cannot exceed this cap.
    let cap = 1.2 * base + 0.5;
    let dt = DEFAULT_STEP.min(base / 16.0);

    // Miss distance at closest approach and the arc length up to it.  The
    // minimum over the step grid is refined by a parabola through d², which
    // is exact along a geodesic (there d(c(t), y)² = (t - t*)² + miss² up
    // to curvature corrections), so the reported miss is the true
    // perpendicular one and not the grid quantization.
    let trace = |angle: f64| -> Result<(f64, f64)> {
        let start = UnitTangent::from_angle(metric, x, angle);
        let mut st = Stepper::new(metric, &start);
        let mut ds: Vec<f64> = vec![st.distance_from(y)];
        let mut running_min = ds[0];
        while st.t < cap {
            st.step_by(dt)?;
            let d = st.distance_from(y);
            ds.push(d);
            running_min = running_min.min(d);
            if d > running_min + 1.0 {
                break; // well past the closest approach and receding
            }
        }
        let (i, &dmin) = ds
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("trace records at least the start");
        if i == 0 || i + 1 == ds.len() {
            return Ok((dmin, i as f64 * dt));
        }
        let (a, b, c) = (ds[i - 1] * ds[i - 1], ds[i] * ds[i], ds[i + 1] * ds[i + 1]);
        let denom = a - 2.0 * b + c;
        if denom <= 0.0 {
            return Ok((dmin, i as f64 * dt));
        }
        let delta = (0.5 * (a - c) / denom).clamp(-1.0, 1.0);
        let vertex = b - 0.125 * (a - c) * (a - c) / denom;
        Ok((vertex.max(0.0).sqrt(), (i as f64 + delta) * dt))
    };

    let coarse = 64usize;
    let mut best_angle = 0.0;
    let mut best_miss = f64::INFINITY;
    let aim = (y.complex() - x.complex()).arg();
    for i in 0..coarse {
        let angle = aim + TAU * i as f64 / coarse as f64;
        let (miss, _) = trace(angle)?;
        if miss < best_miss {
            best_miss = miss;
            best_angle = angle;
        }
    }

    // Golden-section refinement of the miss over the bracketing window.
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (best_angle - TAU / coarse as f64, best_angle + TAU / coarse as f64);
    let mut m1 = hi - golden * (hi - lo);
    let mut m2 = lo + golden * (hi - lo);
    let mut f1 = trace(m1)?;
    let mut f2 = trace(m2)?;
    while hi - lo > 1e-12 {
        if f1.0 <= f2.0 {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - golden * (hi - lo);
            f1 = trace(m1)?;
        } else {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + golden * (hi - lo);
            f2 = trace(m2)?;
        }
    }
    let (miss, length) = if f1.0 < f2.0 { f1 } else { f2 };
    if miss > 1e-5 {
        return Err(Error::NumericFailure {
            context: "geodesic shooting",
            detail: format!("closest approach missed the target by {miss:.3e}"),
        });
    }
    Ok(length + miss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuchsian::build_genus2_group;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn perturbed(eps: f64) -> SurfaceMetric {
        let group = Arc::new(build_genus2_group());
        SurfaceMetric::perturbed(group, Point::new(0.2, 0.0).unwrap(), eps, 0.3).unwrap()
    }

    /// Closed-form hyperbolic geodesic from p with initial direction θ:
    /// c(t) = M_p(tanh(t/2) e^{iθ}) with M_p(ζ) = (ζ + p)/(1 + conj(p) ζ).
    fn exact_ray(p: Complex64, theta: f64, t: f64) -> Complex64 {
        let zeta = Complex64::from_polar((0.5 * t).tanh(), theta);
        (zeta + p) / (1.0 + p.conj() * zeta)
    }

    #[test]
    fn ray_arc_length_is_the_flow_parameter() {
        let metric = SurfaceMetric::hyperbolic();
        let p = Point::new(0.3, 0.1).unwrap();
        let start = UnitTangent::from_angle(&metric, p, 0.7);
        let ds = ray_distances(&metric, &start, p, &[1.0, 3.0, 6.0], DEFAULT_STEP).unwrap();
        for &(t, d) in &ds {
            assert!((d - t).abs() < 1e-9, "d(p, c({t})) = {d}");
        }
    }

    #[test]
    fn ray_tracks_the_closed_form_geodesic() {
        let metric = SurfaceMetric::hyperbolic();
        let p = Point::new(0.3, 0.1).unwrap();
        let theta = 0.7;
        let start = UnitTangent::from_angle(&metric, p, theta);
        // Distances from a second observer probe the position itself.
        let q = Point::new(-0.2, 0.4).unwrap();
        let ds = ray_distances(&metric, &start, q, &[2.0, 6.0], DEFAULT_STEP).unwrap();
        for &(t, d) in &ds {
            let exact_pt = Point::from_complex(exact_ray(p.complex(), theta, t)).unwrap();
            let exact_d = hyperbolic_distance(q, exact_pt);
            assert!((d - exact_d).abs() < 1e-9, "t={t}: {d} vs {exact_d}");
        }
        // And the boundary angle converges to the closed-form endpoint.
        let endpoint = exact_ray(p.complex(), theta, 60.0).arg();
        let samples = probe_ray(&metric, &start, &[DEFAULT_ENDPOINT_HORIZON], DEFAULT_STEP).unwrap();
        let angle = samples[0].boundary_angle;
        assert!(
            (angle - endpoint).abs() < 1e-6,
            "endpoint angle {angle} vs {endpoint}"
        );
    }

    #[test]
    fn speed_stays_unit_over_long_rays() {
        for metric in [SurfaceMetric::hyperbolic(), perturbed(0.01)] {
            let start = UnitTangent::from_angle(&metric, Point::new(0.25, -0.1).unwrap(), 1.9);
            let samples = probe_ray(&metric, &start, &[5.0, 20.0], DEFAULT_STEP).unwrap();
            for s in &samples {
                assert!(s.speed_defect < 1e-8, "speed defect {} at t={}", s.speed_defect, s.t);
            }
        }
    }

    #[test]
    fn jacobi_field_matches_sinh_on_hyperbolic() {
        let metric = SurfaceMetric::hyperbolic();
        for p in [Point::origin(), Point::new(0.3, -0.2).unwrap()] {
            let start = UnitTangent::from_angle(&metric, p, 2.4);
            let samples = probe_ray(&metric, &start, &[1.0, 4.0, 10.0], DEFAULT_STEP).unwrap();
            for s in &samples {
                let rel = (s.jacobi - s.t.sinh()).abs() / s.t.sinh();
                assert!(rel < 1e-10, "J({}) = {} vs sinh = {}", s.t, s.jacobi, s.t.sinh());
                let rel_rate = (s.jacobi_rate - s.t.cosh()).abs() / s.t.cosh();
                assert!(rel_rate < 1e-10);
                let rel_swept = (s.swept - (s.t.cosh() - 1.0)).abs() / (s.t.cosh() - 1.0);
                assert!(rel_swept < 1e-10, "swept({}) = {}", s.t, s.swept);
            }
        }
    }

    #[test]
    fn sphere_and_ball_match_constant_curvature_closed_forms() {
        let metric = SurfaceMetric::hyperbolic();
        let ts = [1.0, 2.0, 5.0];
        let (areas, volumes) =
            direction_sweep(&metric, Point::new(0.1, 0.22).unwrap(), &ts, 16, DEFAULT_STEP).unwrap();
        for &(t, a) in areas.samples() {
            let exact = 2.0 * PI * t.sinh();
            assert!((a - exact).abs() / exact < 1e-9, "area({t}) = {a} vs {exact}");
        }
        for &(t, v) in volumes.samples() {
            let exact = 2.0 * PI * (t.cosh() - 1.0);
            assert!((v - exact).abs() / exact < 1e-9, "volume({t}) = {v} vs {exact}");
        }
    }

    #[test]
    fn riccati_sweep_reproduces_tanh_for_constant_curvature() {
        let n = 2000usize;
        let h = 10.0 / n as f64;
        let ks = vec![-1.0; 2 * n + 1];
        let (end, half) = riccati_from_samples(&ks, h);
        assert!((end - 10f64.tanh()).abs() < 1e-12, "u(10) = {end}");
        assert!((half - 5f64.tanh()).abs() < 1e-12, "u(5) = {half}");

        // Flat curvature: the zero solution is stationary.
        let flat = vec![0.0; 2 * n + 1];
        let (end, _) = riccati_from_samples(&flat, h);
        assert_eq!(end, 0.0);
    }

    #[test]
    fn riccati_limit_is_one_on_hyperbolic() {
        let metric = SurfaceMetric::hyperbolic();
        let start = UnitTangent::from_angle(&metric, Point::new(-0.15, 0.3).unwrap(), 0.4);
        let lim = riccati_limit(
            &metric,
            &start,
            DEFAULT_RICCATI_HORIZON,
            DEFAULT_STEP,
            DEFAULT_RICCATI_TOLERANCE,
        )
        .unwrap();
        assert!((lim.value - 1.0).abs() < 1e-8, "U = {}", lim.value);
        assert!(lim.certificate_gap < DEFAULT_RICCATI_TOLERANCE);
    }

    #[test]
    fn riccati_limit_rejects_short_horizons() {
        // tanh(6) - tanh(3) ≈ 5e-3: far from stabilized at tolerance 1e-8.
        let metric = SurfaceMetric::hyperbolic();
        let start = UnitTangent::from_angle(&metric, Point::origin(), 1.0);
        let err = riccati_limit(&metric, &start, 6.0, DEFAULT_STEP, DEFAULT_RICCATI_TOLERANCE);
        assert!(matches!(err, Err(Error::NumericFailure { .. })));
    }

    #[test]
    fn riccati_limit_stays_near_one_under_perturbation() {
        let metric = perturbed(0.01);
        // A tangent pointing through the bump at (0.2, 0).
        let start = UnitTangent::from_angle(&metric, Point::new(0.05, 0.0).unwrap(), 0.0);
        let lim = riccati_limit(
            &metric,
            &start,
            DEFAULT_RICCATI_HORIZON,
            DEFAULT_STEP,
            DEFAULT_RICCATI_TOLERANCE,
        )
        .unwrap();
        assert!((lim.value - 1.0).abs() < 0.1, "U = {}", lim.value);
    }

    #[test]
    fn shooting_distance_matches_the_closed_form_on_hyperbolic() {
        let metric = SurfaceMetric::hyperbolic();
        let x = Point::new(0.1, -0.2).unwrap();
        let y = Point::new(-0.3, 0.25).unwrap();
        let d = shooting_distance(&metric, x, y).unwrap();
        let exact = hyperbolic_distance(x, y);
        assert!((d - exact).abs() < 1e-7, "{d} vs {exact}");
    }

    #[test]
    fn zero_strength_perturbed_distance_equals_hyperbolic() {
        let metric = perturbed(0.0);
        let x = Point::new(0.05, 0.0).unwrap();
        let y = Point::new(0.45, 0.1).unwrap();
        let d = metric.distance(x, y).unwrap();
        assert!((d - hyperbolic_distance(x, y)).abs() < 1e-7);
    }

    #[test]
    fn bump_lengthens_distances_across_it() {
        let metric = perturbed(0.01);
        // The segment passes straight through the bump center (0.2, 0).
        let x = Point::new(0.05, 0.0).unwrap();
        let y = Point::new(0.45, 0.0).unwrap();
        let d = metric.distance(x, y).unwrap();
        let base = hyperbolic_distance(x, y);
        assert!(d > base, "perturbed {d} should exceed hyperbolic {base}");
        assert!(d < base * 1.01, "perturbed {d} should stay within 1% of {base}");
    }

    #[test]
    fn long_perturbed_rays_recenter_without_drama() {
        let metric = perturbed(0.01);
        let start = UnitTangent::from_angle(&metric, Point::new(0.2, 0.1).unwrap(), 0.3);
        let samples = probe_ray(&metric, &start, &[25.0], DEFAULT_STEP).unwrap();
        assert!(samples[0].speed_defect < 1e-8);
        assert!(samples[0].jacobi > 1e9, "J(25) should be of order e^25/2");
    }
}
