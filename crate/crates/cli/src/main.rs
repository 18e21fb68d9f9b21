//! Batch experiment harness for the geodesic-growth laboratory: builds a
//! metric from flags, runs one named experiment, and emits a machine-readable
//! report.
//!
//! Reports are byte-stable: identical flags (including the seed) produce
//! identical output bytes.  JSON reports are a single object
//! `{config, series, estimates, diagnostics}` with every number printed to 17
//! significant digits so values round-trip losslessly; CSV reports hold the
//! series alone.  Wall-clock timings go to stderr so they never perturb the
//! report bytes.  Exit codes: 0 ok, 2 usage/config error, 3 numeric failure,
//! 4 word budget exceeded.

use std::f64::consts::{PI, TAU};
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use horolab::asymptotics::{
    entropy_fit, gauss_bonnet_check, katok_identity, tr_u_average, EntropyEstimate, GrowthSeries,
    SeriesLabel,
};
use horolab::boundary::{busemann_closed, busemann_numeric, BoundaryPoint};
use horolab::flow::{ball_volume, direction_sweep};
use horolab::fuchsian::{
    build_genus2_group, enumerate_orbit, SurfaceGroup, DEFAULT_MARGIN, MAX_PRUNE_RADIUS,
};
use horolab::measures::{margulis_c, sphere_measure};
use horolab::{Point, SurfaceMetric};

// ---------------------------------------------------------------------------
// Command line.

#[derive(Parser)]
#[command(
    name = "horolab",
    version,
    about = "Numerical experiments on geodesic growth over a genus-2 hyperbolic surface",
    long_about = "Runs one named experiment against the hyperbolic disk metric or a \
        group-periodic conformal perturbation of it, and writes a deterministic, \
        machine-readable report.\n\nAll experiments use the origin as their basepoint \
        and the genus-2 octagon group as the deck group; the perturbed metric places \
        its curvature bump at the origin.  Same flags + same seed => byte-identical \
        output."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ball-volume growth: series h·vol(B_t)·e^{-ht} and its limit c with a
    /// Cauchy gap certificate.
    Volume(VolumeArgs),
    /// Orbit counting a_t = #{gamma : d(0, gamma·0) <= t} on an integer time
    /// grid from one pruned breadth-first enumeration.
    OrbitCount(OrbitCountArgs),
    /// Busemann functions on the unperturbed disk: integrated-ray limits
    /// against the closed form over random (direction, q, p) triples.
    Busemann(BusemannArgs),
    /// Boundary measure of a geodesic sphere: per-direction atoms
    /// (angle, weight) scaled by e^{-hR}, plus the total mass.
    PsMeasure(PsMeasureArgs),
    /// The volume-growth prefactor c(x) sampled on an n×n grid over the
    /// fundamental octagon's bounding box (rows y-major, x fastest).  Grid
    /// points outside the unit disk (the box corners) are skipped.
    MargulisMap(MargulisMapArgs),
    /// Volume entropy: least-squares exponential-rate fit to sphere growth
    /// over the late window [tmax-4, tmax], with an early/late split check.
    Entropy(EntropyArgs),
    /// Curvature-rigidity diagnostics: Liouville-averaged horosphere
    /// expansion, boundary-weighted defect |h - avg U|, total curvature vs
    /// 4π, and the Katok ratio h²·Vol/4π.
    Rigidity(RigidityArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricKind {
    /// Constant curvature -1 disk metric.
    Hyperbolic,
    /// Hyperbolic metric times a group-periodic conformal bump at the origin.
    Perturbed,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Single object {config, series, estimates, diagnostics}.
    Json,
    /// The series alone, one row per sample.
    Csv,
}

#[derive(Args, Clone)]
struct MetricArgs {
    /// Metric kind.
    #[arg(long, value_enum, default_value_t = MetricKind::Hyperbolic)]
    metric: MetricKind,
    /// Bump strength ε (requires --metric perturbed).
    #[arg(long)]
    eps: Option<f64>,
    /// Bump radius r₀ (requires --metric perturbed; default 0.5).
    #[arg(long)]
    bump_radius: Option<f64>,
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output path; stdout when omitted.  Nothing is written on failure.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VolumeArgs {
    #[command(flatten)]
    metric: MetricArgs,
    /// Largest time; the limit estimate c is evaluated here (perturbed
    /// metrics need tmax >= 5 so the entropy can be fitted first).
    #[arg(long, default_value_t = 10.0)]
    tmax: f64,
    /// Directions in the sweep.
    #[arg(long, default_value_t = 64)]
    ndirs: usize,
    /// Integrator step.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct OrbitCountArgs {
    /// Largest count radius; the series runs over t = 1, 2, ..., tmax.
    /// Bounded by the enumeration's certified prune range (tmax + 3 <= 17.5).
    #[arg(long, default_value_t = 12.0)]
    tmax: f64,
    /// Cap on distinct group elements discovered before giving up (exit 4).
    #[arg(long, default_value_t = 5_000_000)]
    budget: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct BusemannArgs {
    /// Number of random (direction, q, p) test triples.
    #[arg(long, default_value_t = 50)]
    ndirs: usize,
    /// RNG seed for the triples.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct PsMeasureArgs {
    #[command(flatten)]
    metric: MetricArgs,
    /// Sphere radius R (>= 1; perturbed metrics need >= 5 for the entropy
    /// fit).
    #[arg(long, default_value_t = 8.0)]
    radius: f64,
    /// Directions, i.e. boundary atoms.
    #[arg(long, default_value_t = 512)]
    ndirs: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct MargulisMapArgs {
    #[command(flatten)]
    metric: MetricArgs,
    /// Grid resolution per axis (2..=64).
    #[arg(long, default_value_t = 5)]
    grid_n: usize,
    /// Ratio evaluation time at every grid point.
    #[arg(long, default_value_t = 8.0)]
    tmax: f64,
    /// Directions per grid point.
    #[arg(long, default_value_t = 120)]
    ndirs: usize,
    /// Integrator step.
    #[arg(long, default_value_t = 2e-3)]
    dt: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct EntropyArgs {
    #[command(flatten)]
    metric: MetricArgs,
    /// End of the fit window [tmax-4, tmax] (>= 5).
    #[arg(long, default_value_t = 10.0)]
    tmax: f64,
    /// Directions in the sweep.
    #[arg(long, default_value_t = 32)]
    ndirs: usize,
    /// Integrator step.
    #[arg(long, default_value_t = 2e-3)]
    dt: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct RigidityArgs {
    #[command(flatten)]
    metric: MetricArgs,
    /// Liouville sample count and defect-integral direction count.
    #[arg(long, default_value_t = 32)]
    ndirs: usize,
    /// Riccati stabilization horizon.
    #[arg(long, default_value_t = 12.0)]
    tmax: f64,
    /// Defect integration radius (boundary-weight probe distance).
    #[arg(long, default_value_t = 8.0)]
    radius: f64,
    /// RNG seed for Liouville sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

// ---------------------------------------------------------------------------
// Failures and exit codes.

struct Failure {
    code: i32,
    kind: &'static str,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        kind: "usage",
        message: message.into(),
    }
}

fn classify(err: horolab::Error) -> Failure {
    use horolab::Error as E;
    let (code, kind) = match &err {
        E::BudgetExceeded { .. } => (4, "budget"),
        E::DegenerateInput(_)
        | E::UndefinedInput(_)
        | E::UnsupportedMetric(_)
        | E::OutsideDisk(..)
        | E::InvalidMetric { .. } => (2, "usage"),
        E::Io(_) => (3, "io"),
        _ => (3, "numeric"),
    };
    Failure {
        code,
        kind,
        message: err.to_string(),
    }
}

// ---------------------------------------------------------------------------
// Report document: an order-preserving JSON tree whose floats are printed to
// 17 significant digits, so equal configs yield equal bytes and every value
// survives a parse round-trip.

#[derive(Clone)]
enum Json {
    Num(f64),
    UInt(u64),
    Bool(bool),
    Str(String),
    Arr(Vec<Json>),
    Obj(Vec<(&'static str, Json)>),
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_escaped(out: &mut String, s: &str) {
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

fn write_json(out: &mut String, value: &Json, indent: usize) {
    let pad = |out: &mut String, n: usize| out.push_str(&"  ".repeat(n));
    match value {
        Json::Num(x) => out.push_str(&fmt_f64(*x)),
        Json::UInt(u) => out.push_str(&u.to_string()),
        Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Json::Str(s) => push_escaped(out, s),
        Json::Arr(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(out, indent + 1);
                write_json(out, item, indent + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push(']');
        }
        Json::Obj(fields) => {
            if fields.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (key, val)) in fields.iter().enumerate() {
                pad(out, indent + 1);
                push_escaped(out, key);
                out.push_str(": ");
                write_json(out, val, indent + 1);
                out.push_str(if i + 1 < fields.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

/// Series rows: time-indexed samples, or (x, y, value) map triples.
enum Rows {
    TValue(Vec<(f64, f64)>),
    Map(Vec<(f64, f64, f64)>),
}

struct Report {
    config: Vec<(&'static str, Json)>,
    rows: Rows,
    estimates: Vec<(&'static str, Json)>,
    diagnostics: Vec<(&'static str, Json)>,
}

impl Report {
    fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }

    fn to_json(&self) -> String {
        let series = match &self.rows {
            Rows::TValue(rows) => Json::Arr(
                rows.iter()
                    .map(|&(t, value)| {
                        Json::Obj(vec![("t", Json::Num(t)), ("value", Json::Num(value))])
                    })
                    .collect(),
            ),
            Rows::Map(rows) => Json::Arr(
                rows.iter()
                    .map(|&(x, y, value)| {
                        Json::Obj(vec![
                            ("x", Json::Num(x)),
                            ("y", Json::Num(y)),
                            ("value", Json::Num(value)),
                        ])
                    })
                    .collect(),
            ),
        };
        let doc = Json::Obj(vec![
            ("config", Json::Obj(self.config.clone())),
            ("series", series),
            ("estimates", Json::Obj(self.estimates.clone())),
            ("diagnostics", Json::Obj(self.diagnostics.clone())),
        ]);
        let mut out = String::new();
        write_json(&mut out, &doc, 0);
        out.push('\n');
        out
    }

    fn to_csv(&self) -> String {
        let mut out = String::new();
        match &self.rows {
            Rows::TValue(rows) => {
                out.push_str("t,value\n");
                for &(t, value) in rows {
                    out.push_str(&fmt_f64(t));
                    out.push(',');
                    out.push_str(&fmt_f64(value));
                    out.push('\n');
                }
            }
            Rows::Map(rows) => {
                out.push_str("x,y,c\n");
                for &(x, y, c) in rows {
                    out.push_str(&fmt_f64(x));
                    out.push(',');
                    out.push_str(&fmt_f64(y));
                    out.push(',');
                    out.push_str(&fmt_f64(c));
                    out.push('\n');
                }
            }
        }
        out
    }
}

fn output_config(out: &OutputArgs) -> Vec<(&'static str, Json)> {
    vec![
        (
            "format",
            Json::Str(
                match out.format {
                    Format::Json => "json",
                    Format::Csv => "csv",
                }
                .to_string(),
            ),
        ),
        (
            "out",
            Json::Str(
                out.out
                    .as_ref()
                    .map_or_else(|| "stdout".to_string(), |p| p.display().to_string()),
            ),
        ),
    ]
}

// ---------------------------------------------------------------------------
// Shared experiment plumbing.

fn origin() -> Point {
    Point::origin()
}

/// Strictly increasing grid from `lo` to exactly `hi`.
fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let mut ts = Vec::new();
    let mut t = lo;
    while t < hi - 0.25 * step {
        ts.push(t);
        t += step;
    }
    ts.push(hi);
    ts
}

fn build_metric(args: &MetricArgs) -> Result<(SurfaceMetric, Vec<(&'static str, Json)>), Failure> {
    match args.metric {
        MetricKind::Hyperbolic => {
            if args.eps.is_some() || args.bump_radius.is_some() {
                return Err(usage(
                    "--eps and --bump-radius apply only to --metric perturbed",
                ));
            }
            Ok((
                SurfaceMetric::hyperbolic(),
                vec![("kind", Json::Str("hyperbolic".into()))],
            ))
        }
        MetricKind::Perturbed => {
            let eps = args
                .eps
                .ok_or_else(|| usage("--metric perturbed requires --eps"))?;
            let bump_radius = args.bump_radius.unwrap_or(0.5);
            let group = Arc::new(build_genus2_group());
            let metric = SurfaceMetric::perturbed(group, origin(), eps, bump_radius)
                .map_err(classify)?;
            Ok((
                metric,
                vec![
                    ("kind", Json::Str("perturbed".into())),
                    ("eps", Json::Num(eps)),
                    ("bumpRadius", Json::Num(bump_radius)),
                    (
                        "bumpCenter",
                        Json::Arr(vec![Json::Num(0.0), Json::Num(0.0)]),
                    ),
                ],
            ))
        }
    }
}

fn deck_group(metric: &SurfaceMetric) -> Arc<SurfaceGroup> {
    metric
        .group()
        .cloned()
        .unwrap_or_else(|| Arc::new(build_genus2_group()))
}

/// The entropy used by downstream estimators: exactly 1 on constant
/// curvature, otherwise fitted to sphere growth over [lo, hi].
struct EntropySource {
    h: f64,
    fitted: Option<EntropyEstimate>,
}

impl EntropySource {
    fn resolve(
        metric: &SurfaceMetric,
        is_perturbed: bool,
        window: (f64, f64),
        n_dirs: usize,
        dt: f64,
    ) -> Result<Self, Failure> {
        if !is_perturbed {
            return Ok(Self {
                h: 1.0,
                fitted: None,
            });
        }
        let (lo, hi) = window;
        if lo < 0.5 {
            return Err(usage(format!(
                "perturbed metrics fit the entropy over [tmax-4, tmax]; raise tmax so that \
                 tmax - 4 >= 0.5 (window starts at {lo})"
            )));
        }
        let ts = grid(lo, hi, 0.5);
        let (areas, _) =
            direction_sweep(metric, origin(), &ts, n_dirs, dt).map_err(classify)?;
        let fit = entropy_fit(&areas, window).map_err(classify)?;
        Ok(Self {
            h: fit.h,
            fitted: Some(fit),
        })
    }

    fn diagnostics(&self) -> Vec<(&'static str, Json)> {
        match &self.fitted {
            None => vec![("hSource", Json::Str("exact".into()))],
            Some(fit) => vec![
                ("hSource", Json::Str("fit".into())),
                ("hFitResidual", Json::Num(fit.fit_residual)),
                (
                    "hFitWindow",
                    Json::Arr(vec![Json::Num(fit.window.0), Json::Num(fit.window.1)]),
                ),
            ],
        }
    }
}

fn validate_common(n_dirs: usize, dt: f64) -> Result<(), Failure> {
    if n_dirs < 4 {
        return Err(usage(format!("--ndirs must be at least 4, got {n_dirs}")));
    }
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(usage(format!("--dt must lie in (0, 0.1], got {dt}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Experiments.

fn run_volume(args: &VolumeArgs) -> Result<Report, Failure> {
    validate_common(args.ndirs, args.dt)?;
    if !(args.tmax >= 2.0 && args.tmax.is_finite()) {
        return Err(usage(format!("--tmax must be at least 2, got {}", args.tmax)));
    }
    let (metric, metric_cfg) = build_metric(&args.metric)?;
    let is_perturbed = args.metric.metric == MetricKind::Perturbed;
    let entropy = EntropySource::resolve(
        &metric,
        is_perturbed,
        (args.tmax - 4.0, args.tmax),
        args.ndirs,
        args.dt,
    )?;
    let h = entropy.h;

    let ts = grid(1.0, args.tmax, 0.5);
    let volumes = ball_volume(&metric, origin(), &ts, args.ndirs, args.dt).map_err(classify)?;
    let rows: Vec<(f64, f64)> = volumes
        .samples()
        .iter()
        .map(|&(t, v)| (t, h * v * (-h * t).exp()))
        .collect();

    let estimate = margulis_c(&metric, origin(), h, args.tmax, args.ndirs, args.dt)
        .map_err(classify)?;

    let mut estimates = vec![
        ("h", Json::Num(h)),
        ("c", Json::Num(estimate.c())),
        ("cauchyGap", Json::Num(estimate.cauchy_gap())),
    ];
    if !is_perturbed {
        let t = args.tmax;
        let closed = PI * (1.0 + (-2.0 * t).exp() - 2.0 * (-t).exp());
        estimates.push(("closedFormAtTmax", Json::Num(closed)));
    }

    let mut config = vec![("experiment", Json::Str("volume".into()))];
    config.push(("metric", Json::Obj(metric_cfg)));
    config.extend([
        (
            "basepoint",
            Json::Arr(vec![Json::Num(0.0), Json::Num(0.0)]),
        ),
        ("tmax", Json::Num(args.tmax)),
        ("ndirs", Json::UInt(args.ndirs as u64)),
        ("dt", Json::Num(args.dt)),
    ]);
    config.extend(output_config(&args.output));

    Ok(Report {
        config,
        rows: Rows::TValue(rows),
        estimates,
        diagnostics: entropy.diagnostics(),
    })
}

fn run_orbit_count(args: &OrbitCountArgs) -> Result<Report, Failure> {
    if !(args.tmax >= 1.0 && args.tmax.is_finite()) {
        return Err(usage(format!("--tmax must be at least 1, got {}", args.tmax)));
    }
    if args.tmax + DEFAULT_MARGIN > MAX_PRUNE_RADIUS {
        return Err(usage(format!(
            "--tmax {} plus the prune margin {DEFAULT_MARGIN} exceeds {MAX_PRUNE_RADIUS}, \
             the largest radius at which enumeration is certified",
            args.tmax
        )));
    }
    if args.budget == 0 {
        return Err(usage("--budget must be positive"));
    }

    let group = build_genus2_group();
    let ball = enumerate_orbit(
        &group,
        origin(),
        origin(),
        args.tmax,
        DEFAULT_MARGIN,
        args.budget,
    )
    .map_err(classify)?;

    let mut ts: Vec<f64> = (1..=args.tmax.floor() as usize).map(|k| k as f64).collect();
    if args.tmax > *ts.last().unwrap_or(&0.0) + 1e-9 {
        ts.push(args.tmax);
    }
    let mut rows = Vec::with_capacity(ts.len());
    let mut cursor = 0usize;
    for &t in &ts {
        while cursor < ball.entries.len() && ball.entries[cursor].distance <= t {
            cursor += 1;
        }
        rows.push((t, cursor as f64));
    }

    let last = *rows.last().expect("time grid is nonempty");
    let mut estimates = vec![(
        "lastNormalized",
        Json::Num(last.1 * (-last.0).exp()),
    )];
    if args.tmax >= 5.0 {
        let series = GrowthSeries::new(SeriesLabel::OrbitCount, rows.clone()).map_err(classify)?;
        let fit = entropy_fit(&series, (args.tmax - 4.0, args.tmax)).map_err(classify)?;
        estimates.push(("rate", Json::Num(fit.h)));
        estimates.push(("rateFitResidual", Json::Num(fit.fit_residual)));
    }

    let config = vec![
        ("experiment", Json::Str("orbit-count".into())),
        ("center", Json::Arr(vec![Json::Num(0.0), Json::Num(0.0)])),
        ("seedPoint", Json::Arr(vec![Json::Num(0.0), Json::Num(0.0)])),
        ("tmax", Json::Num(args.tmax)),
        ("margin", Json::Num(DEFAULT_MARGIN)),
        ("budget", Json::UInt(args.budget as u64)),
    ]
    .into_iter()
    .chain(output_config(&args.output))
    .collect();

    Ok(Report {
        config,
        rows: Rows::TValue(rows),
        estimates,
        diagnostics: vec![
            ("wordsVisited", Json::UInt(ball.words_visited as u64)),
            ("complete", Json::Bool(ball.complete)),
        ],
    })
}

fn run_busemann(args: &BusemannArgs) -> Result<Report, Failure> {
    if args.ndirs == 0 {
        return Err(usage("--ndirs must be positive"));
    }
    const TOLERANCE: f64 = 1e-8;
    const SAMPLE_CAP: f64 = 0.76;

    let metric = SurfaceMetric::hyperbolic();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let disk_point = |rng: &mut ChaCha8Rng| {
        let r = SAMPLE_CAP * rng.gen::<f64>().sqrt();
        let phi = rng.gen_range(0.0..TAU);
        Point::new(r * phi.cos(), r * phi.sin()).expect("sampled inside the disk")
    };

    let mut rows = Vec::with_capacity(args.ndirs);
    let mut max_abs = 0.0f64;
    let mut sum_abs = 0.0f64;
    for i in 1..=args.ndirs {
        let xi = BoundaryPoint::from_angle(rng.gen_range(0.0..TAU)).map_err(classify)?;
        let q = disk_point(&mut rng);
        let p = disk_point(&mut rng);
        let numeric = busemann_numeric(&metric, xi, q, p, TOLERANCE)
            .map_err(classify)?
            .value();
        let closed = busemann_closed(xi, q, p).value();
        let delta = numeric - closed;
        max_abs = max_abs.max(delta.abs());
        sum_abs += delta.abs();
        rows.push((i as f64, delta));
    }

    let config = vec![
        ("experiment", Json::Str("busemann".into())),
        (
            "metric",
            Json::Obj(vec![("kind", Json::Str("hyperbolic".into()))]),
        ),
        ("ndirs", Json::UInt(args.ndirs as u64)),
        ("seed", Json::UInt(args.seed)),
        ("tolerance", Json::Num(TOLERANCE)),
        ("sampleCap", Json::Num(SAMPLE_CAP)),
    ]
    .into_iter()
    .chain(output_config(&args.output))
    .collect();

    Ok(Report {
        config,
        rows: Rows::TValue(rows),
        estimates: vec![
            ("maxAbsDelta", Json::Num(max_abs)),
            ("meanAbsDelta", Json::Num(sum_abs / args.ndirs as f64)),
        ],
        diagnostics: vec![],
    })
}

fn run_ps_measure(args: &PsMeasureArgs) -> Result<Report, Failure> {
    if args.ndirs < 4 {
        return Err(usage(format!("--ndirs must be at least 4, got {}", args.ndirs)));
    }
    if !(args.radius >= 1.0 && args.radius.is_finite()) {
        return Err(usage(format!("--radius must be at least 1, got {}", args.radius)));
    }
    let (metric, metric_cfg) = build_metric(&args.metric)?;
    let is_perturbed = args.metric.metric == MetricKind::Perturbed;
    let entropy = EntropySource::resolve(
        &metric,
        is_perturbed,
        (args.radius - 4.0, args.radius),
        64,
        2e-3,
    )?;

    let measure = sphere_measure(&metric, origin(), args.radius, args.ndirs, entropy.h)
        .map_err(classify)?;
    let mut rows: Vec<(f64, f64)> = measure
        .atoms()
        .iter()
        .map(|atom| (atom.xi.angle(), atom.weight))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut estimates = vec![
        ("mass", Json::Num(measure.mass())),
        ("h", Json::Num(entropy.h)),
    ];
    if !is_perturbed {
        estimates.push(("massMinusPi", Json::Num(measure.mass() - PI)));
    }

    let mut config = vec![("experiment", Json::Str("ps-measure".into()))];
    config.push(("metric", Json::Obj(metric_cfg)));
    config.extend([
        (
            "basepoint",
            Json::Arr(vec![Json::Num(0.0), Json::Num(0.0)]),
        ),
        ("radius", Json::Num(args.radius)),
        ("ndirs", Json::UInt(args.ndirs as u64)),
    ]);
    config.extend(output_config(&args.output));

    Ok(Report {
        config,
        rows: Rows::TValue(rows),
        estimates,
        diagnostics: entropy.diagnostics(),
    })
}

fn run_margulis_map(args: &MargulisMapArgs) -> Result<Report, Failure> {
    validate_common(args.ndirs, args.dt)?;
    if !(2..=64).contains(&args.grid_n) {
        return Err(usage(format!("--grid-n must lie in 2..=64, got {}", args.grid_n)));
    }
    if !(args.tmax >= 2.0 && args.tmax.is_finite()) {
        return Err(usage(format!("--tmax must be at least 2, got {}", args.tmax)));
    }
    let (metric, metric_cfg) = build_metric(&args.metric)?;
    let is_perturbed = args.metric.metric == MetricKind::Perturbed;
    let group = deck_group(&metric);
    let entropy = EntropySource::resolve(
        &metric,
        is_perturbed,
        (args.tmax - 4.0, args.tmax),
        args.ndirs.min(64),
        args.dt,
    )?;

    // Bounding box half-width of the octagon: the vertex coordinate extent.
    let vertex_radius = (0.5 * group.circumradius()).tanh();
    let half = vertex_radius * (PI / 8.0).cos();
    let coord = |i: usize| -half + 2.0 * half * i as f64 / (args.grid_n - 1) as f64;

    let mut rows = Vec::new();
    let mut skipped = 0usize;
    let mut c_min = f64::INFINITY;
    let mut c_max = f64::NEG_INFINITY;
    let mut max_gap = 0.0f64;
    for j in 0..args.grid_n {
        let y = coord(j);
        for i in 0..args.grid_n {
            let x = coord(i);
            if x * x + y * y >= 0.995 * 0.995 {
                skipped += 1;
                continue;
            }
            let raw = Point::new(x, y).map_err(classify)?;
            let (reduced, _) = group.reduce_to_domain(raw);
            let estimate =
                margulis_c(&metric, reduced, entropy.h, args.tmax, args.ndirs, args.dt)
                    .map_err(classify)?;
            let c = estimate.c();
            c_min = c_min.min(c);
            c_max = c_max.max(c);
            max_gap = max_gap.max(estimate.cauchy_gap());
            rows.push((x, y, c));
        }
    }

    let mut config = vec![("experiment", Json::Str("margulis-map".into()))];
    config.push(("metric", Json::Obj(metric_cfg)));
    config.extend([
        ("gridN", Json::UInt(args.grid_n as u64)),
        ("tmax", Json::Num(args.tmax)),
        ("ndirs", Json::UInt(args.ndirs as u64)),
        ("dt", Json::Num(args.dt)),
    ]);
    config.extend(output_config(&args.output));

    let mut diagnostics = vec![
        ("gridHalfWidth", Json::Num(half)),
        ("skippedOutsideDisk", Json::UInt(skipped as u64)),
    ];
    diagnostics.extend(entropy.diagnostics());

    Ok(Report {
        config,
        rows: Rows::Map(rows),
        estimates: vec![
            ("h", Json::Num(entropy.h)),
            ("cMin", Json::Num(c_min)),
            ("cMax", Json::Num(c_max)),
            ("cSpread", Json::Num(c_max / c_min)),
            ("maxCauchyGap", Json::Num(max_gap)),
        ],
        diagnostics,
    })
}

fn run_entropy(args: &EntropyArgs) -> Result<Report, Failure> {
    validate_common(args.ndirs, args.dt)?;
    if !(args.tmax >= 5.0 && args.tmax.is_finite()) {
        return Err(usage(format!(
            "--tmax must be at least 5 so the window [tmax-4, tmax] has room, got {}",
            args.tmax
        )));
    }
    let (metric, metric_cfg) = build_metric(&args.metric)?;

    let lo = args.tmax - 4.0;
    let ts = grid(lo, args.tmax, 0.25);
    let (areas, _) =
        direction_sweep(&metric, origin(), &ts, args.ndirs, args.dt).map_err(classify)?;
    let full = entropy_fit(&areas, (lo, args.tmax)).map_err(classify)?;
    let early = entropy_fit(&areas, (lo, args.tmax - 2.0)).map_err(classify)?;
    let late = entropy_fit(&areas, (args.tmax - 2.0, args.tmax)).map_err(classify)?;

    let mut config = vec![("experiment", Json::Str("entropy".into()))];
    config.push(("metric", Json::Obj(metric_cfg)));
    config.extend([
        (
            "basepoint",
            Json::Arr(vec![Json::Num(0.0), Json::Num(0.0)]),
        ),
        ("tmax", Json::Num(args.tmax)),
        ("ndirs", Json::UInt(args.ndirs as u64)),
        ("dt", Json::Num(args.dt)),
    ]);
    config.extend(output_config(&args.output));

    Ok(Report {
        config,
        rows: Rows::TValue(areas.samples().to_vec()),
        estimates: vec![
            ("h", Json::Num(full.h)),
            ("c", Json::Num(full.c)),
            ("fitResidual", Json::Num(full.fit_residual)),
        ],
        diagnostics: vec![
            ("hEarlyWindow", Json::Num(early.h)),
            ("hLateWindow", Json::Num(late.h)),
            (
                "windowDisagreement",
                Json::Num((early.h - late.h).abs() / late.h.abs()),
            ),
        ],
    })
}

fn run_rigidity(args: &RigidityArgs) -> Result<Report, Failure> {
    if args.ndirs < 4 {
        return Err(usage(format!("--ndirs must be at least 4, got {}", args.ndirs)));
    }
    if !(args.tmax >= 4.0 && args.tmax.is_finite()) {
        return Err(usage(format!(
            "--tmax (Riccati horizon) must be at least 4, got {}",
            args.tmax
        )));
    }
    if !(args.radius >= 1.0 && args.radius.is_finite()) {
        return Err(usage(format!("--radius must be at least 1, got {}", args.radius)));
    }
    let (metric, metric_cfg) = build_metric(&args.metric)?;
    let is_perturbed = args.metric.metric == MetricKind::Perturbed;
    let group = deck_group(&metric);
    let entropy = EntropySource::resolve(&metric, is_perturbed, (4.0, 8.0), 32, 2e-3)?;
    let h = entropy.h;

    let tr_u = tr_u_average(&metric, args.ndirs, args.tmax, args.seed).map_err(classify)?;
    let defect =
        horolab::asymptotics::rigidity_defect(&metric, origin(), h, args.radius, args.ndirs)
            .map_err(classify)?;
    let total_curvature = gauss_bonnet_check(&metric, &group);
    let katok = katok_identity(&metric, &group, h);

    let mut config = vec![("experiment", Json::Str("rigidity".into()))];
    config.push(("metric", Json::Obj(metric_cfg)));
    config.extend([
        (
            "basepoint",
            Json::Arr(vec![Json::Num(0.0), Json::Num(0.0)]),
        ),
        ("ndirs", Json::UInt(args.ndirs as u64)),
        ("tmax", Json::Num(args.tmax)),
        ("radius", Json::Num(args.radius)),
        ("seed", Json::UInt(args.seed)),
    ]);
    config.extend(output_config(&args.output));

    let mut diagnostics = vec![("totalCurvatureTarget", Json::Num(4.0 * PI))];
    diagnostics.extend(entropy.diagnostics());

    Ok(Report {
        config,
        rows: Rows::TValue(Vec::new()),
        estimates: vec![
            ("h", Json::Num(h)),
            ("trUAverage", Json::Num(tr_u)),
            ("rigidityDefect", Json::Num(defect)),
            ("totalCurvature", Json::Num(total_curvature)),
            ("katokRatio", Json::Num(katok)),
        ],
        diagnostics,
    })
}

// ---------------------------------------------------------------------------
// Entry point.

fn run(cli: Cli) -> Result<(), Failure> {
    let clock = Instant::now();
    let (report, output) = match &cli.command {
        Command::Volume(args) => (run_volume(args)?, args.output.clone()),
        Command::OrbitCount(args) => (run_orbit_count(args)?, args.output.clone()),
        Command::Busemann(args) => (run_busemann(args)?, args.output.clone()),
        Command::PsMeasure(args) => (run_ps_measure(args)?, args.output.clone()),
        Command::MargulisMap(args) => (run_margulis_map(args)?, args.output.clone()),
        Command::Entropy(args) => (run_entropy(args)?, args.output.clone()),
        Command::Rigidity(args) => (run_rigidity(args)?, args.output.clone()),
    };
    eprintln!("timing: experiment {:.3}s", clock.elapsed().as_secs_f64());

    // Render fully before touching the output target, so failures never
    // leave a partial file behind.
    let rendered = report.render(output.format);
    match &output.out {
        Some(path) => std::fs::write(path, rendered).map_err(|e| Failure {
            code: 3,
            kind: "io",
            message: format!("cannot write {}: {e}", path.display()),
        })?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(rendered.as_bytes())
                .and_then(|_| lock.flush())
                .map_err(|e| Failure {
                    code: 3,
                    kind: "io",
                    message: format!("cannot write to stdout: {e}"),
                })?;
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(failure) => {
            let mut msg = String::new();
            let doc = Json::Obj(vec![(
                "error",
                Json::Obj(vec![
                    ("kind", Json::Str(failure.kind.into())),
                    ("message", Json::Str(failure.message.clone())),
                ]),
            )]);
            write_json(&mut msg, &doc, 0);
            eprintln!("{msg}");
            std::process::exit(failure.code);
        }
    }
}
