//! Exponential growth rates and the identities that tie them to curvature.
//!
//! Everything here consumes sampled series (sphere areas, ball volumes,
//! orbit counts) or averages over the unit tangent bundle and produces
//! scalar estimates: the volume entropy h, the mean transverse expansion
//! rate, and the defect of the dimension-two rigidity identity.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{
    probe_ray, riccati_limit, UnitTangent, DEFAULT_RICCATI_HORIZON, DEFAULT_RICCATI_TOLERANCE,
};
use crate::fuchsian::{build_genus2_group, SurfaceGroup};
use crate::geometry::Point;
use crate::metric::SurfaceMetric;

/// Arc-length step for the Riccati and Jacobi sweeps in this module; the
/// fourth-order error sits far below every certificate checked here.
const SWEEP_STEP: f64 = 2e-3;
/// Angular quadrature resolution over the octagon.  A multiple of eight,
/// so cell edges land exactly on the corners and every angular cell sees
/// one smooth boundary arc.
const QUAD_THETA: usize = 128;
/// Radial quadrature resolution (QUAD_THETA × QUAD_RADIAL ≈ 10⁴ cells).
const QUAD_RADIAL: usize = 80;

/// What a growth series measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum SeriesLabel {
    SphereArea,
    BallVolume,
    OrbitCount,
}

/// A labeled series of (t, value) samples on a strictly increasing grid.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthSeries {
    label: SeriesLabel,
    samples: Vec<(f64, f64)>,
}

impl GrowthSeries {
    pub fn new(label: SeriesLabel, samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::DegenerateInput("series needs at least one sample".into()));
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::DegenerateInput(
                "series time grid must be strictly increasing".into(),
            ));
        }
        if samples.iter().any(|&(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::DegenerateInput("series contains non-finite samples".into()));
        }
        Ok(Self { label, samples })
    }

    pub fn label(&self) -> SeriesLabel {
        self.label
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }
}

/// Result of fitting value ≈ c · exp(h t) on a window.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EntropyEstimate {
    /// Fitted exponential rate.
    pub h: f64,
    /// Fitted prefactor.
    pub c: f64,
    /// Max absolute deviation of log(value) from the fitted line.
    pub fit_residual: f64,
    /// The [t_min, t_max] window actually used.
    pub window: (f64, f64),
    /// Number of samples in the window.
    pub used: usize,
}

/// Least-squares line through (t, log value) over the window; the slope
/// estimates the exponential growth rate.
pub fn entropy_fit(series: &GrowthSeries, window: (f64, f64)) -> Result<EntropyEstimate> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::DegenerateInput(format!(
            "entropy window must satisfy lo < hi, got [{lo}, {hi}]"
        )));
    }
    let points: Vec<(f64, f64)> = series
        .samples()
        .iter()
        .filter(|&&(t, _)| t >= lo && t <= hi)
        .map(|&(t, v)| (t, v))
        .collect();
    if points.len() < 5 {
        return Err(Error::DegenerateInput(format!(
            "entropy window [{lo}, {hi}] holds {} samples; need at least 5",
            points.len()
        )));
    }
    if let Some(&(t, v)) = points.iter().find(|&&(_, v)| v <= 0.0) {
        return Err(Error::DegenerateInput(format!(
            "cannot fit an exponential through value {v} at t = {t}"
        )));
    }

    let n = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_log = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for &(t, v) in &points {
        cov += (t - mean_t) * (v.ln() - mean_log);
        var += (t - mean_t) * (t - mean_t);
    }
    let h = cov / var;
    let log_c = mean_log - h * mean_t;
    let fit_residual = points
        .iter()
        .map(|&(t, v)| (v.ln() - (log_c + h * t)).abs())
        .fold(0.0f64, f64::max);
    Ok(EntropyEstimate {
        h,
        c: log_c.exp(),
        fit_residual,
        window: (points[0].0, points[points.len() - 1].0),
        used: points.len(),
    })
}

/// The eight geodesic sides of the Dirichlet octagon around the origin as
/// Euclidean circles |z − c| = r, each the perpendicular bisector of the
/// segment from the origin to a generator image of it.  Every side meets
/// the unit circle at a right angle, so |c|² − r² = 1.
fn side_circles(group: &SurfaceGroup) -> [(Complex64, f64); 8] {
    let mut sides = [(Complex64::new(0.0, 0.0), 0.0); 8];
    for (side, gamma) in sides.iter_mut().zip(group.generators()) {
        let w = gamma.apply_complex(Complex64::new(0.0, 0.0));
        // Euclidean radius of the hyperbolic midpoint of [0, γ0].
        let m = (0.5 * w.norm().atanh()).tanh();
        let u = w / w.norm();
        *side = (u * ((1.0 + m * m) / (2.0 * m)), (1.0 - m * m) / (2.0 * m));
    }
    sides
}

/// Euclidean radius at which the ray from the origin at `angle` exits the
/// octagon: the nearest intersection with any side circle.
fn boundary_radius(sides: &[(Complex64, f64)], angle: f64) -> f64 {
    let dir = Complex64::from_polar(1.0, angle);
    let mut nearest = f64::INFINITY;
    for &(c, _) in sides {
        let beta = (c * dir.conj()).re;
        if beta > 1.0 {
            nearest = nearest.min(beta - (beta * beta - 1.0).sqrt());
        }
    }
    nearest
}

/// Whether `z` lies in the (closed) Dirichlet octagon: outside every side
/// circle, i.e. no generator image of the origin is closer than the origin.
fn inside_octagon(sides: &[(Complex64, f64)], z: Complex64) -> bool {
    sides.iter().all(|&(c, r)| (z - c).norm_sqr() >= r * r)
}

/// Midpoint quadrature of `f` against the metric's area element over the
/// Dirichlet octagon, on polar cells.  Within each of the eight boundary
/// sectors the angular nodes are cosine-clustered toward the corners:
/// there the exit ray grazes the side circle, the boundary radius bends
/// sharply, and uniform cells would concentrate the whole quadrature
/// error; the clustering Jacobian vanishes at the corners and suppresses
/// it.
fn octagon_integral<F: Fn(Point) -> f64>(
    metric: &SurfaceMetric,
    group: &SurfaceGroup,
    n_theta: usize,
    n_radial: usize,
    f: F,
) -> f64 {
    let sides = side_circles(group);
    let per_sector = (n_theta / 8).max(1);
    let du = 1.0 / per_sector as f64;
    let half_sector = TAU / 16.0;
    let mut total = 0.0;
    for (c, _) in sides {
        let sector_center = c.arg();
        for j in 0..per_sector {
            let u = (j as f64 + 0.5) * du;
            let theta = sector_center - half_sector * (PI * u).cos();
            let jacobian = half_sector * PI * (PI * u).sin() * du;
            let rho = boundary_radius(&sides, theta);
            let dr = rho / n_radial as f64;
            let dir = Complex64::from_polar(1.0, theta);
            let mut line = 0.0;
            for i in 0..n_radial {
                let s = (i as f64 + 0.5) * dr;
                let z = Point::from_complex(dir * s).expect("octagon lies inside the disk");
                let lambda = metric.conformal_factor(z);
                line += f(z) * lambda * lambda * s;
            }
            total += line * dr * jacobian;
        }
    }
    total
}

/// Total curvature ∫ (−K) dVol over the fundamental octagon by midpoint
/// quadrature.  Equals −2πχ = 4π for the genus-two surface whatever the
/// metric, so the value is a quadrature and invariance diagnostic at once.
pub fn gauss_bonnet_check(metric: &SurfaceMetric, group: &SurfaceGroup) -> f64 {
    octagon_integral(metric, group, QUAD_THETA, QUAD_RADIAL, |z| {
        -metric.curvature_at(z)
    })
}

/// The rigidity ratio h² · Vol(M) / (−2πχ) with χ = −2 for genus two.  It
/// equals one exactly when the curvature is constant (h = 1, Vol = 4π) and
/// exceeds one otherwise once h is the true entropy.
pub fn katok_identity(metric: &SurfaceMetric, group: &SurfaceGroup, h_estimate: f64) -> f64 {
    let volume = octagon_integral(metric, group, QUAD_THETA, QUAD_RADIAL, |_| 1.0);
    let euler = -2.0;
    h_estimate * h_estimate * volume / (-2.0 * PI * euler)
}

/// Average of the transverse expansion rate tr U(v) over unit tangents
/// drawn from the normalized Liouville measure: base points sampled by
/// rejection against the metric's area element over the fundamental
/// octagon, directions uniform.  Each sample integrates the transverse
/// Riccati equation along its incoming geodesic for time `horizon`.  In
/// constant curvature the integrand is identically the volume entropy.
pub fn tr_u_average(
    metric: &SurfaceMetric,
    n_geodesics: usize,
    horizon: f64,
    seed: u64,
) -> Result<f64> {
    if n_geodesics == 0 {
        return Err(Error::DegenerateInput(
            "the average needs at least one geodesic".into(),
        ));
    }
    let owned;
    let group = match metric.group() {
        Some(g) => g.as_ref(),
        None => {
            owned = build_genus2_group();
            &owned
        }
    };
    let sides = side_circles(group);
    let r_max = group
        .octagon()
        .iter()
        .map(|p| p.norm_sqr().sqrt())
        .fold(0.0f64, f64::max);
    // Exact dominating bound for λ² on the octagon: the hyperbolic factor
    // is radial and increasing, and the bump multiplies it by at most
    // exp(|ε| r₀²) since the bump profiles never overlap.
    let lambda_h_max = 2.0 / (1.0 - r_max * r_max);
    let bump_gain = metric.eps().abs() * metric.bump_radius().unwrap_or(0.0).powi(2);
    let bound = lambda_h_max * lambda_h_max * (2.0 * bump_gain).exp();
    // The two launch depths of the stabilization certificate contract
    // together like e^{−min√(−K)·horizon}; this threshold keeps the
    // certificate meaningful down to −K = 0.64 while still demanding the
    // stable digits the caller's horizon can deliver.
    let tolerance = (10.0 * (-0.8 * horizon).exp()).max(DEFAULT_RICCATI_TOLERANCE);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    for _ in 0..n_geodesics {
        let z = loop {
            let zc = Complex64::new(
                rng.gen_range(-r_max..r_max),
                rng.gen_range(-r_max..r_max),
            );
            if zc.norm_sqr() >= r_max * r_max || !inside_octagon(&sides, zc) {
                continue;
            }
            let z = Point::from_complex(zc).expect("octagon lies inside the disk");
            let lambda = metric.conformal_factor(z);
            if rng.gen::<f64>() * bound <= lambda * lambda {
                break z;
            }
        };
        let v = UnitTangent::from_angle(metric, z, rng.gen_range(0.0..TAU));
        sum += riccati_limit(metric, &v, horizon, SWEEP_STEP, tolerance)?.value;
    }
    Ok(sum / n_geodesics as f64)
}

/// Defect |h − Σᵢ tr U(x, ξᵢ) μ̄ᵢ| of the entropy identity against the
/// normalized sphere-limit measure at x.  The sum runs over the measure's
/// construction directions, whose normalized weights Jᵢ(R)/Σ Jᵢ(R) are
/// exactly the sphere-measure atom weights; indexing by direction keeps
/// the endpoint–direction pairing exact for perturbed metrics too.  Zero
/// up to solver accuracy in constant curvature, where tr U ≡ h; a clearly
/// positive defect signals nonconstant curvature.
pub fn rigidity_defect(
    metric: &SurfaceMetric,
    x: Point,
    h: f64,
    radius: f64,
    n_dirs: usize,
) -> Result<f64> {
    if !(radius >= 1.0) {
        return Err(Error::DegenerateInput(format!(
            "construction radius must be at least 1, got {radius}"
        )));
    }
    if n_dirs < 4 {
        return Err(Error::DegenerateInput(format!(
            "need at least 4 directions, got {n_dirs}"
        )));
    }
    let mut weighted = 0.0;
    let mut total = 0.0;
    for i in 0..n_dirs {
        let v = UnitTangent::from_angle(metric, x, TAU * i as f64 / n_dirs as f64);
        let jacobi = probe_ray(metric, &v, &[radius], SWEEP_STEP)?[0].jacobi;
        let expansion = riccati_limit(
            metric,
            &v,
            DEFAULT_RICCATI_HORIZON,
            SWEEP_STEP,
            DEFAULT_RICCATI_TOLERANCE,
        )?
        .value;
        weighted += jacobi * expansion;
        total += jacobi;
    }
    Ok((h - weighted / total).abs())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::flow::direction_sweep;
    use crate::fuchsian::count_series;

    fn geometric(label: SeriesLabel, c: f64, h: f64, ts: &[f64]) -> GrowthSeries {
        GrowthSeries::new(label, ts.iter().map(|&t| (t, c * (h * t).exp())).collect()).unwrap()
    }

    fn point(u: f64, v: f64) -> Point {
        Point::new(u, v).unwrap()
    }

    fn bump_metric(eps: f64) -> SurfaceMetric {
        let group = Arc::new(build_genus2_group());
        SurfaceMetric::perturbed(group, point(0.1, 0.05), eps, 0.5).unwrap()
    }

    #[test]
    fn fit_recovers_exact_exponential() {
        let ts: Vec<f64> = (0..=40).map(|i| 0.25 * i as f64).collect();
        let series = geometric(SeriesLabel::BallVolume, 3.0, 2.0, &ts);
        let est = entropy_fit(&series, (2.0, 10.0)).unwrap();
        assert!((est.h - 2.0).abs() < 1e-12, "h = {}", est.h);
        assert!((est.c - 3.0).abs() < 1e-11, "c = {}", est.c);
        assert!(est.fit_residual < 1e-12);
        assert_eq!(est.used, 33);
    }

    #[test]
    fn fit_on_sphere_length_series_finds_unit_rate() {
        // Circumference 2π sinh t: the e^{-2t} correction is below 1e-5
        // beyond t = 6, so the fitted rate is 1 to that accuracy.
        let ts: Vec<f64> = (0..=20).map(|i| 6.0 + 0.2 * i as f64).collect();
        let series = GrowthSeries::new(
            SeriesLabel::SphereArea,
            ts.iter().map(|&t| (t, 2.0 * PI * t.sinh())).collect(),
        )
        .unwrap();
        let est = entropy_fit(&series, (6.0, 10.0)).unwrap();
        assert!((est.h - 1.0).abs() < 1e-4, "h = {}", est.h);
        assert!((est.c - PI).abs() < 1e-3, "c = {}", est.c);
    }

    #[test]
    fn fit_rejects_bad_windows_and_values() {
        let ts: Vec<f64> = (0..=10).map(f64::from).map(|t| t as f64).collect();
        let series = geometric(SeriesLabel::OrbitCount, 1.0, 1.0, &ts);
        assert!(entropy_fit(&series, (5.0, 5.0)).is_err());
        assert!(entropy_fit(&series, (20.0, 30.0)).is_err());
        // Four samples are one short of a fit.
        assert!(entropy_fit(&series, (0.0, 3.0)).is_err());

        let flat = GrowthSeries::new(
            SeriesLabel::OrbitCount,
            (0..6).map(|i| (i as f64, i as f64)).collect(),
        )
        .unwrap();
        assert!(entropy_fit(&flat, (0.0, 5.0)).is_err());
    }

    #[test]
    fn series_constructor_validates_the_grid() {
        assert!(GrowthSeries::new(SeriesLabel::BallVolume, vec![]).is_err());
        assert!(GrowthSeries::new(SeriesLabel::BallVolume, vec![(1.0, 2.0), (1.0, 3.0)]).is_err());
        assert!(GrowthSeries::new(SeriesLabel::BallVolume, vec![(1.0, f64::NAN)]).is_err());
        assert!(GrowthSeries::new(SeriesLabel::BallVolume, vec![(1.0, 2.0), (2.0, 3.0)]).is_ok());
    }

    #[test]
    fn normalized_sphere_growth_flattens() {
        // G(t) = s_t(x) e^{-t} tends to a constant with derivative → 0.
        let metric = SurfaceMetric::hyperbolic();
        let series = crate::flow::sphere_area(
            &metric,
            Point::origin(),
            &[9.0, 9.5, 10.0],
            16,
            SWEEP_STEP,
        )
        .unwrap();
        let g: Vec<f64> = series
            .samples()
            .iter()
            .map(|&(t, v)| v * (-t).exp())
            .collect();
        assert!((g[1] - g[0]).abs() / 0.5 < 1e-2, "G' = {}", (g[1] - g[0]) / 0.5);
        assert!((g[2] - g[1]).abs() / 0.5 < 1e-2, "G' = {}", (g[2] - g[1]) / 0.5);
        assert!((g[2] - PI).abs() < 1e-3, "G(10) = {}", g[2]);
    }

    #[test]
    fn sphere_ball_and_orbit_rates_agree() {
        let metric = SurfaceMetric::hyperbolic();
        let ts: Vec<f64> = (0..=8).map(|i| 6.0 + 0.5 * i as f64).collect();
        let (areas, volumes) = direction_sweep(&metric, Point::origin(), &ts, 16, SWEEP_STEP).unwrap();
        let h_sphere = entropy_fit(&areas, (6.0, 10.0)).unwrap().h;
        let h_ball = entropy_fit(&volumes, (6.0, 10.0)).unwrap().h;
        assert!(
            (h_sphere - h_ball).abs() < 0.01 * h_sphere,
            "sphere rate {h_sphere} vs ball rate {h_ball}"
        );

        let group = build_genus2_group();
        let counts: Vec<f64> = (0..=8).map(|i| 8.0 + 0.5 * i as f64).collect();
        let orbit = count_series(
            &group,
            Point::origin(),
            Point::origin(),
            &counts,
            3.0,
            5_000_000,
        )
        .unwrap();
        let h_orbit = entropy_fit(&orbit, (8.0, 12.0)).unwrap().h;
        assert!(
            (h_orbit - h_sphere).abs() < 0.05 * h_sphere,
            "orbit rate {h_orbit} vs sphere rate {h_sphere}"
        );
    }

    #[test]
    fn average_expansion_is_the_entropy_in_constant_curvature() {
        let metric = SurfaceMetric::hyperbolic();
        let avg = tr_u_average(&metric, 12, 12.0, 5).unwrap();
        assert!((avg - 1.0).abs() < 1e-6, "tr U average = {avg}");
        assert!(tr_u_average(&metric, 0, 12.0, 5).is_err());
    }

    #[test]
    fn expansion_identities_hold_pointwise_in_constant_curvature() {
        // tr U = h and, through the Riccati equation U' = -(U² + K),
        // -tr U' + (tr U)² = 2 (tr U)² + K = h² when K ≡ -1.
        let metric = SurfaceMetric::hyperbolic();
        for (z, angle) in [
            (point(0.0, 0.0), 0.3),
            (point(0.2, -0.1), 2.1),
            (point(-0.3, 0.25), 4.4),
        ] {
            let v = UnitTangent::from_angle(&metric, z, angle);
            let u = riccati_limit(&metric, &v, 12.0, SWEEP_STEP, 1e-4).unwrap().value;
            assert!((u - 1.0).abs() < 1e-9, "tr U = {u}");
            let second = 2.0 * u * u + metric.curvature_at(z);
            assert!((second - 1.0).abs() < 1e-9, "second identity gives {second}");
        }
    }

    #[test]
    fn average_expansion_respects_curvature_bounds_when_perturbed() {
        let metric = bump_metric(0.05);
        let group = metric.group().unwrap().clone();
        let sides = side_circles(&group);
        // Curvature range over an octagon grid (the bump is Γ-invariant,
        // so the octagon sees the global range up to grid resolution).
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for j in 0..96 {
            let theta = TAU * (j as f64 + 0.5) / 96.0;
            let rho = boundary_radius(&sides, theta);
            for i in 0..32 {
                let s = rho * (i as f64 + 0.5) / 32.0;
                let k = metric.curvature_at(point(s * theta.cos(), s * theta.sin()));
                lo = lo.min(-k);
                hi = hi.max(-k);
            }
        }
        assert!(lo < 1.0 && hi > 1.0, "bump should move curvature both ways");
        let avg = tr_u_average(&metric, 16, 12.0, 3).unwrap();
        assert!(
            avg > lo.sqrt() - 5e-3 && avg < hi.sqrt() + 5e-3,
            "average {avg} outside [{}, {}]",
            lo.sqrt(),
            hi.sqrt()
        );
    }

    #[test]
    fn rigidity_defect_vanishes_in_constant_curvature() {
        let metric = SurfaceMetric::hyperbolic();
        let defect = rigidity_defect(&metric, point(0.1, -0.05), 1.0, 8.0, 16).unwrap();
        assert!(defect < 1e-7, "defect = {defect}");

        let flat = bump_metric(0.0);
        let defect = rigidity_defect(&flat, point(0.1, -0.05), 1.0, 8.0, 16).unwrap();
        assert!(defect < 1e-7, "defect at zero bump strength = {defect}");
    }

    #[test]
    fn rigidity_defect_is_reported_for_bumpy_metrics() {
        let metric = bump_metric(0.02);
        let defect = rigidity_defect(&metric, point(0.1, 0.05), 1.0, 8.0, 12).unwrap();
        assert!(defect.is_finite() && defect < 0.5, "defect = {defect}");
        assert!(rigidity_defect(&metric, Point::origin(), 1.0, 0.5, 12).is_err());
        assert!(rigidity_defect(&metric, Point::origin(), 1.0, 8.0, 3).is_err());
    }

    #[test]
    fn total_curvature_is_the_euler_characteristic() {
        let hyperbolic = SurfaceMetric::hyperbolic();
        let group = build_genus2_group();
        let target = 4.0 * PI;
        let flat = gauss_bonnet_check(&hyperbolic, &group);
        assert!(
            (flat - target).abs() < 0.005 * target,
            "hyperbolic total curvature {flat}"
        );

        let bumpy = bump_metric(0.01);
        let bent = gauss_bonnet_check(&bumpy, &group);
        assert!(
            (bent - target).abs() < 0.005 * target,
            "perturbed total curvature {bent}"
        );
    }

    #[test]
    fn octagon_angle_defect_is_four_pi() {
        // Interior angles of the regular (π/4)-octagon: area = 6π − 8·π/4.
        let area = 6.0 * PI - 8.0 * (PI / 4.0);
        assert!((area - 4.0 * PI).abs() < 1e-15);
    }

    #[test]
    fn katok_ratio_calibrates_to_one() {
        let metric = SurfaceMetric::hyperbolic();
        let group = build_genus2_group();
        let ratio = katok_identity(&metric, &group, 1.0);
        assert!((ratio - 1.0).abs() < 0.01, "ratio = {ratio}");
        let synthetic = katok_identity(&metric, &group, 2.0);
        assert!((synthetic - 4.0).abs() < 0.05, "synthetic ratio = {synthetic}");
    }
}
