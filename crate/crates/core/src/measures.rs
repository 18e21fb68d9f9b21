//! Boundary measures built from geodesic spheres: the sphere-limit
//! construction, Busemann-density (cocycle) checks, shadow ratios, and the
//! Margulis function estimators c(x) and c(x, y) with their scale
//! calibration against orbit counting.

use std::f64::consts::TAU;
use std::sync::Arc;

use serde::Serialize;

use crate::boundary::{busemann_closed, BoundaryPoint};
use crate::error::{Error, Result};
use crate::flow::{self, UnitTangent, DEFAULT_ENDPOINT_HORIZON};
use crate::fuchsian::{
    build_genus2_group, count_series, Isometry, DEFAULT_MARGIN, DEFAULT_WORD_BUDGET,
};
use crate::geometry::{hyperbolic_distance, Point};
use crate::metric::SurfaceMetric;

/// Integration step for measure construction.  Coarser than the flow
/// default: the Jacobi weights enter bounds of size 1e−2..1e−3, far above
/// the O(dt⁴) integration error, and measures sweep thousands of rays.
pub const MEASURE_STEP: f64 = 2e-3;

/// Defaults for the κ calibration: sphere radius, direction count, and the
/// orbit-counting horizon whose top three integer samples are averaged.
pub const KAPPA_RADIUS: f64 = 10.0;
pub const KAPPA_DIRS: usize = 1024;
pub const KAPPA_COUNTING_HORIZON: f64 = 12.0;

/// One boundary atom: a forward endpoint carrying the sphere volume of its
/// direction cell.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Atom {
    #[serde(rename = "angle")]
    pub xi: BoundaryPoint,
    pub weight: f64,
}

/// A discrete measure on the circle at infinity: the pushforward of the
/// geodesic sphere S(x, R), scaled by e^{−hR}, under the endpoint map.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryMeasure {
    basepoint: Point,
    #[serde(rename = "R")]
    radius: f64,
    h: f64,
    mass: f64,
    atoms: Vec<Atom>,
}

impl BoundaryMeasure {
    pub fn basepoint(&self) -> Point {
        self.basepoint
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn entropy(&self) -> f64 {
        self.h
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Local density per unit boundary angle at every atom, by cyclic
    /// central differences over the sorted atom angles.  Density, not raw
    /// weight, is what transforms by the Busemann cocycle: raw weights
    /// carry the distortion of the direction grid between basepoints.
    pub fn angular_densities(&self) -> Vec<f64> {
        let n = self.atoms.len();
        (0..n)
            .map(|i| {
                let prev = self.atoms[(i + n - 1) % n].xi.angle();
                let next = self.atoms[(i + 1) % n].xi.angle();
                let span = (next - prev).rem_euclid(TAU) / 2.0;
                self.atoms[i].weight / span
            })
            .collect()
    }

    /// Index of the atom nearest to `angle` on the circle.
    pub fn nearest_atom(&self, angle: f64) -> usize {
        let n = self.atoms.len();
        let split = self
            .atoms
            .partition_point(|a| a.xi.angle() < angle);
        let candidates = [split % n, (split + n - 1) % n];
        let gap = |i: usize| {
            let d = (self.atoms[i].xi.angle() - angle).rem_euclid(TAU);
            d.min(TAU - d)
        };
        if gap(candidates[0]) <= gap(candidates[1]) {
            candidates[0]
        } else {
            candidates[1]
        }
    }
}

/// Margulis function estimate at one basepoint.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MargulisEstimate {
    x: Point,
    c: f64,
    t_max: f64,
    cauchy_gap: f64,
}

impl MargulisEstimate {
    pub fn x(&self) -> Point {
        self.x
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn cauchy_gap(&self) -> f64 {
        self.cauchy_gap
    }
}

/// The sphere measure at radius R: one atom per direction θᵢ, placed at the
/// forward endpoint of the geodesic from `x` in direction θᵢ and weighted
/// by e^{−hR}·J_{θᵢ}(R)·(2π/nDirs).  Its mass is e^{−hR} times the sphere
/// circumference by construction.
pub fn sphere_measure(
    metric: &SurfaceMetric,
    x: Point,
    radius: f64,
    n_dirs: usize,
    h: f64,
) -> Result<BoundaryMeasure> {
    if !(radius.is_finite() && radius >= 1.0) {
        return Err(Error::DegenerateInput(format!(
            "sphere measures need radius ≥ 1, got {radius}"
        )));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::DegenerateInput(format!(
            "sphere measures need a positive entropy parameter, got {h}"
        )));
    }
    if n_dirs < 4 {
        return Err(Error::DegenerateInput(format!(
            "a sphere measure needs at least 4 directions, got {n_dirs}"
        )));
    }
    let far = DEFAULT_ENDPOINT_HORIZON.max(radius);
    let ts = if far > radius {
        vec![radius, far]
    } else {
        vec![radius]
    };
    let cell = TAU / n_dirs as f64;
    let scale = (-h * radius).exp() * cell;
    let mut atoms = Vec::with_capacity(n_dirs);
    for i in 0..n_dirs {
        let start = UnitTangent::from_angle(metric, x, cell * i as f64);
        let samples = flow::probe_ray(metric, &start, &ts, MEASURE_STEP)?;
        let at_radius = &samples[0];
        let at_far = &samples[samples.len() - 1];
        if at_radius.jacobi <= 0.0 {
            return Err(Error::ConjugatePoint { t: radius });
        }
        atoms.push(Atom {
            xi: BoundaryPoint::from_angle(at_far.boundary_angle)?,
            weight: scale * at_radius.jacobi,
        });
    }
    atoms.sort_by(|a, b| a.xi.angle().total_cmp(&b.xi.angle()));
    let mass = atoms.iter().map(|a| a.weight).sum();
    Ok(BoundaryMeasure {
        basepoint: x,
        radius,
        h,
        mass,
        atoms,
    })
}

/// Maximum Busemann-density defect between two sphere measures over the
/// same direction grid: |log(ρ_q/ρ_p)(ξ) + h·b_ξ(q, p)| at matched atoms,
/// with ρ the local angular densities.  Basepoints are expected inside the
/// fundamental domain and the comparison uses the constant-curvature
/// Busemann form.
pub fn ps_cocycle_check(
    nu_p: &BoundaryMeasure,
    nu_q: &BoundaryMeasure,
    h: f64,
) -> Result<f64> {
    if nu_p.atoms.len() != nu_q.atoms.len() {
        return Err(Error::DegenerateInput(format!(
            "density comparison needs a common direction grid, got {} vs {} atoms",
            nu_p.atoms.len(),
            nu_q.atoms.len()
        )));
    }
    if (nu_p.h - h).abs() > 1e-12 || (nu_q.h - h).abs() > 1e-12 {
        return Err(Error::DegenerateInput(
            "density comparison needs both measures built with the entropy being tested".into(),
        ));
    }
    let grid = TAU / nu_p.atoms.len() as f64;
    let rho_p = nu_p.angular_densities();
    let rho_q = nu_q.angular_densities();
    let mut worst = 0.0f64;
    for (j, atom) in nu_q.atoms.iter().enumerate() {
        let i = nu_p.nearest_atom(atom.xi.angle());
        let gap = nu_p.atoms[i].xi.gap(&atom.xi);
        if gap > 2.0 * grid {
            return Err(Error::Pairing {
                angle: atom.xi.angle(),
                gap,
            });
        }
        let b = busemann_closed(atom.xi, nu_q.basepoint, nu_p.basepoint).value();
        let deviation = ((rho_q[j] / rho_p[i]).ln() + h * b).abs();
        worst = worst.max(deviation);
    }
    Ok(worst)
}

/// Measure of the shadow of the ball B(x, ρ) as seen from the measure's
/// basepoint, rescaled by e^{h·d(p,x)}.  An atom belongs to the shadow when
/// the constant-curvature ray from the basepoint toward it passes within ρ
/// of x.
pub fn shadow_ratio(nu: &BoundaryMeasure, x: Point, rho: f64, h: f64) -> Result<f64> {
    if !(rho.is_finite() && rho >= 1.0) {
        return Err(Error::DegenerateInput(format!(
            "the shadow test runs in the large-radius regime ρ ≥ 1, got {rho}"
        )));
    }
    let p = nu.basepoint;
    let s = hyperbolic_distance(p, x);
    let in_shadow: f64 = if s == 0.0 {
        nu.mass
    } else {
        let center = Isometry::centering(p);
        let xc = center.apply_complex(x.complex());
        let sinh_s = s.sinh();
        nu.atoms
            .iter()
            .filter(|atom| {
                let u = center.apply_complex(atom.xi.complex());
                let psi = (u * xc.conj()).arg().abs();
                // Distance from x to the ray toward the atom: the foot of
                // the perpendicular lies behind the basepoint when ψ > π/2.
                let d = if psi >= std::f64::consts::FRAC_PI_2 {
                    s
                } else {
                    (sinh_s * psi.sin()).asinh()
                };
                d <= rho
            })
            .map(|atom| atom.weight)
            .sum()
    };
    if in_shadow == 0.0 {
        return Err(Error::DegenerateInput(format!(
            "empty shadow: no atom ray passes within {rho} of the target; \
             enlarge ρ or the construction radius"
        )));
    }
    Ok(in_shadow * (h * s).exp())
}

/// The Margulis ratio h·b_t(x)·e^{−ht} at t = tMax, with a Cauchy gap
/// against the same ratio at 0.8·tMax and a cross-check against the sphere
/// mass e^{−ht}·s_t(x), which shares the limit.
pub fn margulis_c(
    metric: &SurfaceMetric,
    x: Point,
    h: f64,
    t_max: f64,
    n_dirs: usize,
    dt: f64,
) -> Result<MargulisEstimate> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::DegenerateInput(format!(
            "the Margulis ratio needs a positive entropy, got {h}"
        )));
    }
    if !(t_max.is_finite() && t_max >= 1.0) {
        return Err(Error::DegenerateInput(format!(
            "the Margulis ratio needs tMax ≥ 1, got {t_max}"
        )));
    }
    let ts = [0.8 * t_max, t_max];
    let (areas, volumes) = flow::direction_sweep(metric, x, &ts, n_dirs, dt)?;
    let ratio = |&(t, v): &(f64, f64)| h * v * (-h * t).exp();
    let early = ratio(&volumes.samples()[0]);
    let c = ratio(&volumes.samples()[1]);
    let cauchy_gap = (c - early).abs();
    if !(c > 0.0) {
        return Err(Error::NumericFailure {
            context: "margulis ratio",
            detail: format!("nonpositive estimate {c}"),
        });
    }
    let (_, area) = areas.samples()[1];
    let sphere_mass = area * (-h * t_max).exp();
    if (c - sphere_mass).abs() > 2.0 * cauchy_gap {
        return Err(Error::NumericFailure {
            context: "margulis ratio",
            detail: format!(
                "ball estimate {c} and sphere-mass estimate {sphere_mass} disagree \
                 beyond twice the Cauchy gap {cauchy_gap:.3e}"
            ),
        });
    }
    Ok(MargulisEstimate {
        x,
        c,
        t_max,
        cauchy_gap,
    })
}

/// The pairing form c(x, y): both measure factors descend from the sphere
/// measure at the reference point x, so the double integral collapses to
/// mass(ν_x)·Σ_ξ w_x(ξ)·e^{−h·b_ξ(y, x)} over the atoms of ν_x.
pub fn margulis_c_xy(
    metric: &SurfaceMetric,
    x: Point,
    y: Point,
    h: f64,
    radius: f64,
    n_dirs: usize,
) -> Result<f64> {
    if metric.eps() != 0.0 {
        return Err(Error::UnsupportedMetric(
            "the pairing form tilts by the constant-curvature Busemann function; \
             the metric must be unperturbed",
        ));
    }
    let nu_x = sphere_measure(metric, x, radius, n_dirs, h)?;
    let tilted: f64 = nu_x
        .atoms
        .iter()
        .map(|a| a.weight * (-h * busemann_closed(a.xi, y, x).value()).exp())
        .sum();
    Ok(nu_x.mass * tilted)
}

/// The free scale of the boundary measures, fixed by orbit counting:
/// κ² = h·a_t(x, x)·e^{−ht} / c(x, x), averaged over the top three integer
/// counting horizons.
pub fn calibrate_kappa(metric: &SurfaceMetric, x: Point, h: f64) -> Result<f64> {
    kappa_with(
        metric,
        x,
        x,
        h,
        KAPPA_RADIUS,
        KAPPA_DIRS,
        KAPPA_COUNTING_HORIZON,
    )
}

/// κ with every knob exposed: sphere radius and grid for the measure side,
/// counting horizon for the orbit side.  The counting lattice is the
/// metric's group when it has one and the standard genus-2 lattice
/// otherwise.
pub fn kappa_with(
    metric: &SurfaceMetric,
    x: Point,
    y: Point,
    h: f64,
    radius: f64,
    n_dirs: usize,
    t_max: f64,
) -> Result<f64> {
    if !(t_max.is_finite() && t_max > 3.0) {
        return Err(Error::DegenerateInput(format!(
            "κ needs a counting horizon above 3 for its three samples, got {t_max}"
        )));
    }
    let c_xy = margulis_c_xy(metric, x, y, h, radius, n_dirs)?;
    let group = metric
        .group()
        .cloned()
        .unwrap_or_else(|| Arc::new(build_genus2_group()));
    let times = [t_max - 2.0, t_max - 1.0, t_max];
    let counts = count_series(&group, x, y, &times, DEFAULT_MARGIN, DEFAULT_WORD_BUDGET)?;
    let mut kappa_sq = 0.0;
    for &(t, a) in counts.samples() {
        if a <= 0.0 {
            return Err(Error::DegenerateInput(format!(
                "counting series too short: no orbit points within t = {t}"
            )));
        }
        kappa_sq += h * a * (-h * t).exp() / c_xy;
    }
    Ok((kappa_sq / times.len() as f64).sqrt())
}
