//! Conformal metrics λ(z)²|dz|² on the disk: the constant-curvature
//! hyperbolic metric and compactly supported, group-invariant perturbations
//! of it.
//!
//! A perturbed metric multiplies the hyperbolic factor by
//! exp(ε r₀² B(z)), where B is a sum of radial bumps φ(d(z, γ z₀)) over the
//! orbit of a chosen center.  The bump profile φ(d) = (1 - (d/r₀)²)³ is C²
//! with compact support, so curvature stays smooth and the perturbation
//! vanishes identically outside tubes around the orbit.  The ε r₀² scaling
//! keeps the curvature deviation roughly ‖K + 1‖ ≈ 12ε independently of
//! the bump radius, because the Laplacian of a bump scales like 1/r₀².

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fuchsian::{enumerate_orbit, SurfaceGroup};
use crate::geometry::{hyperbolic_distance, Point};

/// Rejection threshold for the construction-time curvature sweep: the
/// metric must stay strictly negatively curved.
const CURVATURE_CEILING: f64 = -1e-6;

/// Grid resolution (per axis) of the construction-time curvature sweep.
const SWEEP_RESOLUTION: usize = 200;

/// One bump center with a Euclidean prefilter radius enclosing its
/// hyperbolic support ball.
#[derive(Debug, Clone, Copy)]
struct Bump {
    center: Complex64,
    prefilter_sq: f64,
}

/// The local data a geodesic integrator consumes: the gradient of log λ
/// (as ∂_u + i ∂_v) and the Gauss curvature.
#[derive(Debug, Clone, Copy)]
pub struct FlowSample {
    pub log_grad: Complex64,
    pub curvature: f64,
}

/// A conformal metric on the disk.
#[derive(Debug, Clone)]
pub enum SurfaceMetric {
    /// λ(z) = 2/(1-|z|²), curvature -1 everywhere.
    Hyperbolic,
    /// λ(z) = 2/(1-|z|²) · exp(ε r₀² B(z)) with B invariant under the group.
    Perturbed(PerturbedMetric),
}

#[derive(Debug, Clone)]
pub struct PerturbedMetric {
    group: Arc<SurfaceGroup>,
    z0: Point,
    eps: f64,
    r0: f64,
    /// Orbit points of z0 close enough to the fundamental domain for their
    /// bump to touch it.
    bumps: Vec<Bump>,
}

/// The hyperbolic conformal factor 2/(1-|z|²).
fn lambda_hyperbolic(z: Complex64) -> f64 {
    2.0 / (1.0 - z.norm_sqr())
}

/// Bump profile φ(u r₀) = (1-u²)³ on u ∈ [0, 1).
fn profile(u: f64) -> f64 {
    let s = 1.0 - u * u;
    s * s * s
}

/// φ'(d) for d = u r₀.
fn profile_d1(u: f64, r0: f64) -> f64 {
    let s = 1.0 - u * u;
    -6.0 * u * s * s / r0
}

/// φ''(d) for d = u r₀.
fn profile_d2(u: f64, r0: f64) -> f64 {
    let s = 1.0 - u * u;
    (-6.0 * s * s + 24.0 * u * u * s) / (r0 * r0)
}

/// Hyperbolic radial Laplacian ψ(d) = φ''(d) + coth(d) φ'(d), written as
/// φ'' + (φ'/d)·(d coth d) so the d → 0 limit -12/r₀² is exact.
fn profile_laplacian(u: f64, r0: f64) -> f64 {
    let d = u * r0;
    let s = 1.0 - u * u;
    let d1_over_d = -6.0 * s * s / (r0 * r0);
    let d_coth_d = if d < 1e-4 {
        // d·coth d = 1 + d²/3 - d⁴/45 + ...
        1.0 + d * d / 3.0
    } else {
        d / d.tanh()
    };
    profile_d2(u, r0) + d1_over_d * d_coth_d
}

impl SurfaceMetric {
    pub fn hyperbolic() -> Self {
        SurfaceMetric::Hyperbolic
    }

    /// Builds the invariant perturbed metric with bump center `z0`, bump
    /// radius `r0` and strength `eps`.  Fails when the bump radius is so
    /// large that translates of the bump overlap (r0 must stay below half
    /// the systole) or when the perturbation pushes curvature up to zero
    /// somewhere.
    pub fn perturbed(group: Arc<SurfaceGroup>, z0: Point, eps: f64, r0: f64) -> Result<Self> {
        if !eps.is_finite() || !r0.is_finite() || r0 <= 0.0 {
            return Err(Error::DegenerateInput(format!(
                "bump parameters must be finite with r0 > 0, got eps={eps}, r0={r0}"
            )));
        }
        let half_systole = 0.5 * group.translation_length();
        if r0 >= half_systole {
            return Err(Error::DegenerateInput(format!(
                "bump radius {r0} reaches its own translates; it must stay below \
                 half the systole {half_systole}"
            )));
        }

        // Collect every orbit point whose bump can touch the closed
        // fundamental domain (points within circumradius + r0 of the
        // origin, padded a little for safety).
        let reach = group.circumradius() + r0 + 0.5;
        let ball = enumerate_orbit(&group, Point::origin(), z0, reach, 3.0, 1_000_000)?;
        let bumps = ball
            .entries
            .iter()
            .map(|e| {
                let d0 = e.distance;
                // Euclidean radius around the center enclosing the
                // hyperbolic ball of radius r0 (the inward gap is the
                // larger one because tanh is concave).
                let enclosing = (0.5 * d0).tanh() - (0.5 * (d0 - r0)).tanh();
                let pad = enclosing + 1e-12;
                Bump {
                    center: e.point.complex(),
                    prefilter_sq: pad * pad,
                }
            })
            .collect();

        let metric = SurfaceMetric::Perturbed(PerturbedMetric {
            group,
            z0,
            eps,
            r0,
            bumps,
        });
        metric.validate_negative_curvature()?;
        Ok(metric)
    }

    pub fn is_hyperbolic(&self) -> bool {
        matches!(self, SurfaceMetric::Hyperbolic)
    }

    pub fn group(&self) -> Option<&Arc<SurfaceGroup>> {
        match self {
            SurfaceMetric::Hyperbolic => None,
            SurfaceMetric::Perturbed(p) => Some(&p.group),
        }
    }

    /// The conformal factor λ(z).
    pub fn conformal_factor(&self, z: Point) -> f64 {
        self.log_factor(z).exp()
    }

    /// log λ(z); the geodesic equations only ever need this and its
    /// gradient.
    pub fn log_factor(&self, z: Point) -> f64 {
        let zc = z.complex();
        let base = lambda_hyperbolic(zc).ln();
        match self {
            SurfaceMetric::Hyperbolic => base,
            SurfaceMetric::Perturbed(p) => base + p.eps * p.r0 * p.r0 * p.bump_sum(z),
        }
    }

    /// Sum of bump profiles B(z) over the orbit; identically zero for the
    /// unperturbed metric.  Invariant under the surface group because `z`
    /// is reduced to the fundamental domain before evaluation.
    pub fn invariant_bump_sum(&self, z: Point) -> f64 {
        match self {
            SurfaceMetric::Hyperbolic => 0.0,
            SurfaceMetric::Perturbed(p) => p.bump_sum(z),
        }
    }

    /// Gradient of log λ as the complex number ∂_u + i ∂_v.
    pub fn log_factor_grad(&self, z: Point) -> Complex64 {
        let zc = z.complex();
        // ∇ log(2/(1-|z|²)) = λ_h(z) · z.
        let base = lambda_hyperbolic(zc) * zc;
        match self {
            SurfaceMetric::Hyperbolic => base,
            SurfaceMetric::Perturbed(p) => base + p.eps * p.r0 * p.r0 * p.bump_sum_grad(z),
        }
    }

    /// Gauss curvature at `z`, computed in closed form.
    ///
    /// For a conformal factor λ = λ_h e^{g} the curvature is
    /// K = -(1 + Δ_hyp g) / e^{2g} with Δ_hyp the hyperbolic Laplacian,
    /// and for radial bumps Δ_hyp φ(d) = φ''(d) + coth(d) φ'(d).
    pub fn curvature_at(&self, z: Point) -> f64 {
        match self {
            SurfaceMetric::Hyperbolic => -1.0,
            SurfaceMetric::Perturbed(p) => {
                let scale = p.eps * p.r0 * p.r0;
                let (b, lap) = p.bump_sum_with_laplacian(z);
                -(1.0 + scale * lap) * (-2.0 * scale * b).exp()
            }
        }
    }

    /// Distance in this metric.  Exact for the hyperbolic metric; for a
    /// perturbed metric the geodesic between the points is found by
    /// shooting (see the flow module), accurate to ~1e-6.
    pub fn distance(&self, x: Point, y: Point) -> Result<f64> {
        match self {
            SurfaceMetric::Hyperbolic => Ok(hyperbolic_distance(x, y)),
            SurfaceMetric::Perturbed(_) => crate::flow::shooting_distance(self, x, y),
        }
    }

    /// Sweeps a grid over the perturbation's support and rejects the
    /// metric unless curvature stays strictly negative.
    fn validate_negative_curvature(&self) -> Result<()> {
        let p = match self {
            SurfaceMetric::Hyperbolic => return Ok(()),
            SurfaceMetric::Perturbed(p) => p,
        };
        let mut extent = 0.0f64;
        for b in &p.bumps {
            extent = extent.max(b.center.norm() + b.prefilter_sq.sqrt());
        }
        let extent = extent.min(0.95);
        let mut worst = f64::NEG_INFINITY;
        let mut at = (0.0, 0.0);
        for i in 0..SWEEP_RESOLUTION {
            for j in 0..SWEEP_RESOLUTION {
                let u = extent * (2.0 * (i as f64 + 0.5) / SWEEP_RESOLUTION as f64 - 1.0);
                let v = extent * (2.0 * (j as f64 + 0.5) / SWEEP_RESOLUTION as f64 - 1.0);
                if u * u + v * v >= 0.95 * 0.95 {
                    continue;
                }
                let z = Point::new(u, v).expect("sweep stays inside the disk");
                let k = self.curvature_at(z);
                if k > worst {
                    worst = k;
                    at = (u, v);
                }
            }
        }
        if worst > CURVATURE_CEILING {
            return Err(Error::InvalidMetric {
                max_k: worst,
                at_u: at.0,
                at_v: at.1,
            });
        }
        Ok(())
    }

    /// Everything a geodesic integrator needs at one position, computed in
    /// a single pass (one domain reduction, one sweep over the bumps).
    pub fn flow_sample(&self, z: Point) -> FlowSample {
        let zc = z.complex();
        let base = lambda_hyperbolic(zc) * zc;
        match self {
            SurfaceMetric::Hyperbolic => FlowSample {
                log_grad: base,
                curvature: -1.0,
            },
            SurfaceMetric::Perturbed(p) => {
                let scale = p.eps * p.r0 * p.r0;
                let (w, gamma) = p.group.reduce_to_domain(z);
                let wc = w.complex();
                let mut sum = 0.0;
                let mut lap = 0.0;
                let mut grad = Complex64::new(0.0, 0.0);
                for b in &p.bumps {
                    if (wc - b.center).norm_sqr() > b.prefilter_sq {
                        continue;
                    }
                    let d = pair_distance(wc, b.center);
                    if d < p.r0 {
                        let u = d / p.r0;
                        sum += profile(u);
                        lap += profile_laplacian(u, p.r0);
                        if d > 1e-9 {
                            grad += profile_d1(u, p.r0) * distance_gradient(wc, b.center);
                        }
                    }
                }
                FlowSample {
                    log_grad: base + scale * grad * gamma.derivative(zc).conj(),
                    curvature: -(1.0 + scale * lap) * (-2.0 * scale * sum).exp(),
                }
            }
        }
    }

    /// Strength of the perturbation; zero for the hyperbolic metric.
    pub fn eps(&self) -> f64 {
        match self {
            SurfaceMetric::Hyperbolic => 0.0,
            SurfaceMetric::Perturbed(p) => p.eps,
        }
    }

    /// Bump radius, when there is a perturbation.
    pub fn bump_radius(&self) -> Option<f64> {
        match self {
            SurfaceMetric::Hyperbolic => None,
            SurfaceMetric::Perturbed(p) => Some(p.r0),
        }
    }

    /// Bump center, when there is a perturbation.
    pub fn bump_center(&self) -> Option<Point> {
        match self {
            SurfaceMetric::Hyperbolic => None,
            SurfaceMetric::Perturbed(p) => Some(p.z0),
        }
    }
}

impl PerturbedMetric {
    /// B(z): reduce to the fundamental domain, then sum the few bumps whose
    /// support can reach it.
    fn bump_sum(&self, z: Point) -> f64 {
        let (w, _) = self.group.reduce_to_domain(z);
        let wc = w.complex();
        let mut sum = 0.0;
        for b in &self.bumps {
            if (wc - b.center).norm_sqr() > b.prefilter_sq {
                continue;
            }
            let d = pair_distance(wc, b.center);
            if d < self.r0 {
                sum += profile(d / self.r0);
            }
        }
        sum
    }

    /// (B(z), Δ_hyp B(z)) in one pass.
    fn bump_sum_with_laplacian(&self, z: Point) -> (f64, f64) {
        let (w, _) = self.group.reduce_to_domain(z);
        let wc = w.complex();
        let mut sum = 0.0;
        let mut lap = 0.0;
        for b in &self.bumps {
            if (wc - b.center).norm_sqr() > b.prefilter_sq {
                continue;
            }
            let d = pair_distance(wc, b.center);
            if d < self.r0 {
                let u = d / self.r0;
                sum += profile(u);
                lap += profile_laplacian(u, self.r0);
            }
        }
        (sum, lap)
    }

    /// ∇B(z) as a complex number, differentiated through the reduction:
    /// for B(z) = B̃(γz) the chain rule gives ∇B(z) = conj(γ'(z)) ∇B̃(w).
    fn bump_sum_grad(&self, z: Point) -> Complex64 {
        let (w, gamma) = self.group.reduce_to_domain(z);
        let wc = w.complex();
        let mut grad = Complex64::new(0.0, 0.0);
        for b in &self.bumps {
            if (wc - b.center).norm_sqr() > b.prefilter_sq {
                continue;
            }
            let d = pair_distance(wc, b.center);
            if d < self.r0 && d > 1e-9 {
                // |∇d| is bounded and φ'(d) → 0 linearly, so skipping the
                // immediate vicinity of a bump center is harmless.
                let u = d / self.r0;
                grad += profile_d1(u, self.r0) * distance_gradient(wc, b.center);
            }
        }
        grad * gamma.derivative(z.complex()).conj()
    }
}

/// Hyperbolic distance between complex coordinates (both inside the disk).
fn pair_distance(w: Complex64, p: Complex64) -> f64 {
    let sep = (w - p).norm();
    let scale = ((1.0 - w.norm_sqr()) * (1.0 - p.norm_sqr())).sqrt();
    2.0 * (sep / scale).asinh()
}

/// ∇_w d(w, p) as a complex number, from d = acosh(1 + 2q) with
/// q = |w-p|² / ((1-|w|²)(1-|p|²)): ∇d = ∇q / sqrt(q(1+q)).
fn distance_gradient(w: Complex64, p: Complex64) -> Complex64 {
    let n = (w - p).norm_sqr();
    let dw = 1.0 - w.norm_sqr();
    let dp = 1.0 - p.norm_sqr();
    let den = dw * dp;
    let q = n / den;
    // ∇n = 2(w-p); ∇(1/den) = 2w/(dw² dp) ⇒ ∇q = (2(w-p) + 2w q dp/den·...)
    let grad_q = 2.0 * (w - p) / den + n * 2.0 * w / (dw * dw * dp);
    grad_q / (q * (1.0 + q)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuchsian::build_genus2_group;

    fn perturbed(eps: f64) -> SurfaceMetric {
        let group = Arc::new(build_genus2_group());
        let z0 = Point::new(0.2, 0.0).unwrap();
        SurfaceMetric::perturbed(group, z0, eps, 0.3).unwrap()
    }

    #[test]
    fn hyperbolic_factor_matches_closed_form() {
        let m = SurfaceMetric::hyperbolic();
        assert_eq!(m.conformal_factor(Point::origin()), 2.0);
        let z = Point::new(0.5, 0.0).unwrap();
        assert!((m.conformal_factor(z) - 8.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.curvature_at(z), -1.0);
        assert_eq!(m.invariant_bump_sum(z), 0.0);
    }

    /// Five-point finite-difference curvature K = -Δ log λ / λ², used as an
    /// independent cross-check of the closed-form implementation.
    fn fd_curvature(m: &SurfaceMetric, z: Point, h: f64) -> f64 {
        let f = |du: f64, dv: f64| m.log_factor(Point::new(z.u() + du, z.v() + dv).unwrap());
        let lap = (f(h, 0.0) + f(-h, 0.0) + f(0.0, h) + f(0.0, -h) - 4.0 * f(0.0, 0.0)) / (h * h);
        let lambda = m.conformal_factor(z);
        -lap / (lambda * lambda)
    }

    #[test]
    fn closed_form_curvature_matches_finite_differences() {
        let hyp = SurfaceMetric::hyperbolic();
        for &(u, v) in &[(0.0, 0.0), (0.3, -0.2), (0.6, 0.5)] {
            let z = Point::new(u, v).unwrap();
            let fd = fd_curvature(&hyp, z, 1e-4);
            assert!((fd + 1.0).abs() < 1e-6, "hyperbolic FD curvature {fd} at ({u},{v})");
        }

        let m = perturbed(0.01);
        // Points inside, at the edge of, and outside the bump at (0.2, 0).
        for &(u, v) in &[
            (0.2, 0.0),
            (0.25, 0.03),
            (0.14, -0.05),
            (0.2, 0.13),
            (0.5, 0.5),
            (-0.3, 0.1),
        ] {
            let z = Point::new(u, v).unwrap();
            let fd = fd_curvature(&m, z, 1e-4);
            let exact = m.curvature_at(z);
            assert!(
                (fd - exact).abs() < 1e-5,
                "FD {fd} vs exact {exact} at ({u},{v})"
            );
        }
    }

    #[test]
    fn bump_sum_is_group_invariant() {
        let m = perturbed(0.01);
        let group = m.group().unwrap().clone();
        let z = Point::new(0.23, 0.05).unwrap();
        let b = m.invariant_bump_sum(z);
        assert!(b > 0.5, "test point should sit well inside the bump, B = {b}");
        for k in 0..8 {
            let moved = group.generator(k).apply(z);
            assert!((m.invariant_bump_sum(moved) - b).abs() < 1e-10);
        }
        let far = group.generator(1).compose(group.generator(4)).apply(z);
        assert!((m.invariant_bump_sum(far) - b).abs() < 1e-10);
    }

    #[test]
    fn bump_sum_is_one_at_the_center_and_zero_far_away() {
        let m = perturbed(0.01);
        // Orbit points are ≥ systole apart, so only the central bump
        // contributes at its own center.
        assert!((m.invariant_bump_sum(Point::new(0.2, 0.0).unwrap()) - 1.0).abs() < 1e-12);
        assert_eq!(m.invariant_bump_sum(Point::new(-0.4, 0.4).unwrap()), 0.0);
    }

    #[test]
    fn log_factor_gradient_matches_finite_differences() {
        let h = 1e-6;
        for metric in [SurfaceMetric::hyperbolic(), perturbed(0.01)] {
            for &(u, v) in &[(0.0, 0.1), (0.2, 0.0), (0.27, -0.06), (0.55, 0.35)] {
                let z = Point::new(u, v).unwrap();
                let g = metric.log_factor_grad(z);
                let fu = (metric.log_factor(Point::new(u + h, v).unwrap())
                    - metric.log_factor(Point::new(u - h, v).unwrap()))
                    / (2.0 * h);
                let fv = (metric.log_factor(Point::new(u, v + h).unwrap())
                    - metric.log_factor(Point::new(u, v - h).unwrap()))
                    / (2.0 * h);
                assert!(
                    (g.re - fu).abs() < 2e-6 && (g.im - fv).abs() < 2e-6,
                    "grad ({}, {}) vs FD ({fu}, {fv}) at ({u},{v})",
                    g.re,
                    g.im
                );
            }
        }
    }

    #[test]
    fn curvature_at_bump_center_matches_closed_form() {
        // At the bump center B = 1 and Δ_hyp B = -12/r₀², so
        // K = -(1 - 12 ε) e^{-2 ε r₀²}.
        let eps = 0.01;
        let m = perturbed(eps);
        let r0: f64 = 0.3;
        let expected = -(1.0 - 12.0 * eps) * (-2.0 * eps * r0 * r0).exp();
        let got = m.curvature_at(Point::new(0.2, 0.0).unwrap());
        assert!((got - expected).abs() < 1e-9, "K {got} vs {expected}");
    }

    #[test]
    fn zero_strength_perturbation_is_exactly_hyperbolic() {
        let m = perturbed(0.0);
        let hyp = SurfaceMetric::hyperbolic();
        for &(u, v) in &[(0.2, 0.0), (0.31, -0.44), (0.0, 0.0)] {
            let z = Point::new(u, v).unwrap();
            assert_eq!(m.conformal_factor(z), hyp.conformal_factor(z));
            assert_eq!(m.curvature_at(z), -1.0);
            let (g, gh) = (m.log_factor_grad(z), hyp.log_factor_grad(z));
            assert_eq!(g, gh);
        }
    }

    #[test]
    fn construction_rejects_oversized_bumps_and_strengths() {
        let group = Arc::new(build_genus2_group());
        let z0 = Point::new(0.2, 0.0).unwrap();
        // Bump radius beyond half the systole (≈ 1.53).
        assert!(SurfaceMetric::perturbed(group.clone(), z0, 0.01, 1.6).is_err());
        // Strength large enough to push curvature to zero (needs ~1/12).
        let err = SurfaceMetric::perturbed(group.clone(), z0, 0.2, 0.3).unwrap_err();
        match err {
            Error::InvalidMetric { max_k, .. } => assert!(max_k > CURVATURE_CEILING),
            other => panic!("expected curvature rejection, got {other:?}"),
        }
        // A modest strength passes.
        assert!(SurfaceMetric::perturbed(group, z0, 0.01, 0.3).is_ok());
    }

    #[test]
    fn flow_sample_agrees_with_individual_evaluations() {
        for metric in [SurfaceMetric::hyperbolic(), perturbed(0.01)] {
            for &(u, v) in &[(0.2, 0.0), (0.25, 0.08), (0.6, -0.3)] {
                let z = Point::new(u, v).unwrap();
                let s = metric.flow_sample(z);
                assert!((s.log_grad - metric.log_factor_grad(z)).norm() < 1e-14);
                assert!((s.curvature - metric.curvature_at(z)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn perturbed_curvature_stays_in_the_expected_band() {
        let m = perturbed(0.01);
        // ‖K + 1‖ ≈ 12ε plus the conformal rescaling; sample the bump disk.
        let mut min_k = f64::INFINITY;
        let mut max_k = f64::NEG_INFINITY;
        for i in 0..60 {
            for j in 0..60 {
                let u = 0.2 + 0.14 * (i as f64 / 59.0 * 2.0 - 1.0);
                let v = 0.14 * (j as f64 / 59.0 * 2.0 - 1.0);
                let k = m.curvature_at(Point::new(u, v).unwrap());
                min_k = min_k.min(k);
                max_k = max_k.max(k);
            }
        }
        assert!(min_k > -1.2 && max_k < -0.8, "K range [{min_k}, {max_k}]");
        assert!(max_k > -0.9, "the bump should visibly weaken curvature");
    }
}
