//! The genus-2 surface group: a cocompact Fuchsian group whose fundamental
//! domain is the regular hyperbolic octagon with interior angles π/4.
//!
//! Generators are the eight side-pairing translations g_k along the axes
//! through the side midpoints (direction kπ/4), each of translation length
//! twice the inradius, with g_{k+4} = g_k⁻¹.  Opposite sides are identified,
//! the vertex cycle closes up with total angle 2π, and the single relation
//! g0 g1⁻¹ g2 g3⁻¹ g0⁻¹ g1 g2⁻¹ g3 = id holds in SU(1,1).  The quotient is a closed orientable surface of genus 2
//! (Euler characteristic -2, area 4π).

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use num_complex::Complex64;

use crate::asymptotics::{GrowthSeries, SeriesLabel};
use crate::error::{Error, Result};
use crate::geometry::{distance_to_origin, hyperbolic_distance, Point};

/// Default slack added to the enumeration radius so that group elements
/// whose word paths detour slightly outside the ball are still reached.
/// Completeness at this margin is established by regression against larger
/// margins (see the prune-safety tests), not by proof.
pub const DEFAULT_MARGIN: f64 = 3.0;

/// Default cap on the number of distinct group elements an enumeration may
/// discover before giving up with a budget error.
pub const DEFAULT_WORD_BUDGET: usize = 5_000_000;

/// Quantum used when hashing Möbius coefficients for deduplication.
///
/// Two float paths to one group element do not merely drift by the local
/// rounding of their own products: a word that travels out to the prune
/// sphere and returns has its mid-word rounding (absolute size ~ε·e^{D/2}
/// at prune radius D) amplified by the returning suffix product, whose
/// operator norm can reach e^{D/2} again, so representations of one
/// element can disagree by ~ε·ℓ·e^{D} — measured ≲ 2e-6 at D = 16 and
/// certified ≲ 2e-5 up to D = 17.5.  Coefficient vectors of *distinct*
/// elements stay ≥ σ_min·‖M_δ - I‖ apart with σ_min ≥ e^{-D/2} and
/// ‖M_δ - I‖ ≥ e^{L/2} - 1 ≈ 3.6 for every nonidentity δ (systole L),
/// i.e. ≥ 1.27·e^{-D/2} ≥ 2e-4 per max coordinate up to D = 17.5.
///
/// The quantum sits between those regimes: neighbor probing (see
/// [`PROBE_THRESHOLD`]) catches same-element noise up to 0.2·quantum =
/// 2e-5, while elements further than 2·quantum = 2e-4 apart in any
/// coordinate can never share a probed bucket.  Beyond prune radius ~17.5
/// the two windows cross and no fixed-precision scheme can separate them,
/// hence [`MAX_PRUNE_RADIUS`].
const DEDUPE_QUANTUM: f64 = 1e-4;

/// A coordinate sitting within (0.5 - threshold)·quantum of a bucket
/// boundary probes the neighboring bucket too, so noise up to that size
/// cannot hide one element in two buckets.
const PROBE_THRESHOLD: f64 = 0.30;

/// Largest radius + margin an enumeration accepts.  The dedupe hash is
/// certified only while same-element float noise (growing like e^{D})
/// stays under 0.2·[`DEDUPE_QUANTUM`] and distinct-element separation
/// (shrinking like 1.27·e^{-D/2}) stays over 2·[`DEDUPE_QUANTUM`]; both
/// hold up to D = 17.5 and fail soon after.
pub const MAX_PRUNE_RADIUS: f64 = 17.5;

/// Fixed generic direction used to orient ±M canonically: the matrix sign
/// is flipped so the weighted coefficient sum is nonnegative.
const SIGN_WEIGHTS: [f64; 4] = [
    1.0,
    0.754_877_666_246_692_7,
    0.569_840_290_998_053_2,
    0.314_159_265_358_979_3,
];

/// When the weighted sum is this close to zero the orientation is treated
/// as ambiguous and both signs are probed during deduplication.
const SIGN_BAND: f64 = 1e-3;

/// An orientation-preserving isometry of the disk in SU(1,1) form:
/// z ↦ (a z + b) / (conj(b) z + conj(a)) with |a|² - |b|² = 1.
#[derive(Debug, Clone, Copy)]
pub struct Isometry {
    a: Complex64,
    b: Complex64,
}

impl Isometry {
    pub fn identity() -> Self {
        Self {
            a: Complex64::new(1.0, 0.0),
            b: Complex64::new(0.0, 0.0),
        }
    }

    /// Hyperbolic translation by `length` along the axis through the origin
    /// in direction `angle`.
    pub fn translation(length: f64, angle: f64) -> Self {
        let half = 0.5 * length;
        let phase = Complex64::from_polar(1.0, angle);
        Self {
            a: Complex64::new(half.cosh(), 0.0),
            b: phase * half.sinh(),
        }
    }

    /// Rotation by `angle` about the origin.
    pub fn rotation(angle: f64) -> Self {
        Self {
            a: Complex64::from_polar(1.0, 0.5 * angle),
            b: Complex64::new(0.0, 0.0),
        }
    }

    /// The translation carrying `p` to the origin along their common ray.
    pub fn centering(p: Point) -> Self {
        let s = (1.0 - p.norm_sqr()).sqrt();
        Self {
            a: Complex64::new(1.0 / s, 0.0),
            b: -p.complex() / s,
        }
    }

    pub fn coefficients(&self) -> (Complex64, Complex64) {
        (self.a, self.b)
    }

    /// Action on a complex coordinate (valid on the closed disk).
    pub fn apply_complex(&self, z: Complex64) -> Complex64 {
        (self.a * z + self.b) / (self.b.conj() * z + self.a.conj())
    }

    /// Action on a disk point.
    pub fn apply(&self, p: Point) -> Point {
        Point::from_complex(self.apply_complex(p.complex()))
            .expect("an isometry maps the open disk into itself")
    }

    /// Complex derivative of the action at `z`; its argument rotates tangent
    /// directions and its modulus is the Euclidean stretch factor.
    pub fn derivative(&self, z: Complex64) -> Complex64 {
        let den = self.b.conj() * z + self.a.conj();
        1.0 / (den * den)
    }

    /// self ∘ other (apply `other` first).
    pub fn compose(&self, other: &Isometry) -> Isometry {
        let iso = Isometry {
            a: self.a * other.a + self.b * other.b.conj(),
            b: self.a * other.b + self.b * other.a.conj(),
        };
        iso.renormalized()
    }

    pub fn inverse(&self) -> Isometry {
        Isometry {
            a: self.a.conj(),
            b: -self.b,
        }
    }

    /// Rescales the coefficients so |a|² - |b|² = 1 exactly; long products
    /// drift away from the constraint by a few ulps per composition.
    ///
    /// The determinant is evaluated with exact product splitting and
    /// compensated summation.  The four squares cancel down to 1 from
    /// magnitude |a|², so the naive difference loses ~|a|²·ε absolutely;
    /// rescaling by that corrupted value perturbs the coefficients by
    /// ~|a|³·ε, which for |a| ≳ 10² dwarfs the drift being corrected and
    /// (path-dependently) defeats coefficient-based deduplication.
    fn renormalized(self) -> Isometry {
        let scale = det_su11(self.a, self.b).sqrt();
        Isometry {
            a: self.a / scale,
            b: self.b / scale,
        }
    }

    /// Max coefficient deviation from the identity, up to overall sign.
    pub fn distance_to_identity(&self) -> f64 {
        let plus = (self.a - 1.0).norm().max(self.b.norm());
        let minus = (self.a + 1.0).norm().max(self.b.norm());
        plus.min(minus)
    }
}

/// |a|² - |b|² to ~1 ulp of the result: each square is split exactly into
/// a rounded product plus its fused-multiply-add residue, and the eight
/// pieces are added with Neumaier compensation so the large cancelling
/// squares cost no accuracy.
fn det_su11(a: Complex64, b: Complex64) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    let mut add = |term: f64| {
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    };
    for (x, sign) in [(a.re, 1.0), (a.im, 1.0), (b.re, -1.0), (b.im, -1.0)] {
        let p = x * x;
        let residue = x.mul_add(x, -p);
        add(sign * p);
        add(sign * residue);
    }
    sum + comp
}

/// The genus-2 octagon group together with its fundamental domain data.
#[derive(Debug, Clone)]
pub struct SurfaceGroup {
    generators: [Isometry; 8],
    relation_word: [usize; 8],
    octagon: [Point; 8],
    circumradius: f64,
    inradius: f64,
}

/// Builds the octagon group.  The circumradius is located by bisection on
/// the regular-polygon angle relation (interior angle 2·atan(cot(π/8)/cosh R)
/// equals π/4), then the eight side-pairing translations are rotated copies
/// of one translation of length twice the inradius.
pub fn build_genus2_group() -> SurfaceGroup {
    let half_sector = PI / 8.0;
    let target = PI / 4.0;
    let interior = |r: f64| 2.0 * (1.0 / (half_sector.tan() * r.cosh())).atan();

    // interior(R) decreases from ~3π/4 (Euclidean limit) to 0; bracket and
    // bisect to 1e-14.
    let (mut lo, mut hi) = (0.5, 5.0);
    debug_assert!(interior(lo) > target && interior(hi) < target);
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if interior(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let circumradius = 0.5 * (lo + hi);

    // Right triangle (center, side midpoint, vertex): tanh(inradius) =
    // tanh(circumradius) · cos(π/8).
    let inradius = (circumradius.tanh() * half_sector.cos()).atanh();
    let translation_length = 2.0 * inradius;

    let mut generators = [Isometry::identity(); 8];
    for (k, gen) in generators.iter_mut().enumerate() {
        *gen = Isometry::translation(translation_length, k as f64 * PI / 4.0);
    }

    let vertex_radius = (0.5 * circumradius).tanh();
    let mut octagon = [Point::origin(); 8];
    for (j, v) in octagon.iter_mut().enumerate() {
        let angle = (2 * j + 1) as f64 * PI / 8.0;
        *v = Point::new(vertex_radius * angle.cos(), vertex_radius * angle.sin())
            .expect("octagon vertices lie inside the disk");
    }

    SurfaceGroup {
        generators,
        // g0 g1⁻¹ g2 g3⁻¹ g0⁻¹ g1 g2⁻¹ g3, with g_{k+4} = g_k⁻¹.
        relation_word: [0, 5, 2, 7, 4, 1, 6, 3],
        octagon,
        circumradius,
        inradius,
    }
}

impl SurfaceGroup {
    pub fn generators(&self) -> &[Isometry; 8] {
        &self.generators
    }

    pub fn generator(&self, k: usize) -> &Isometry {
        &self.generators[k]
    }

    /// Index of the inverse generator.
    pub fn inverse_index(k: usize) -> usize {
        (k + 4) % 8
    }

    pub fn relation_word(&self) -> &[usize; 8] {
        &self.relation_word
    }

    /// Product of the relation word; the group is honest iff this is the
    /// identity to rounding error.
    pub fn relation_product(&self) -> Isometry {
        self.relation_word
            .iter()
            .fold(Isometry::identity(), |acc, &k| acc.compose(&self.generators[k]))
    }

    /// Vertices of the fundamental octagon in cyclic order.
    pub fn octagon(&self) -> &[Point; 8] {
        &self.octagon
    }

    pub fn circumradius(&self) -> f64 {
        self.circumradius
    }

    pub fn inradius(&self) -> f64 {
        self.inradius
    }

    /// Translation length of the side-pairing generators; for this group it
    /// is also the systole (shortest closed geodesic) of the quotient.
    pub fn translation_length(&self) -> f64 {
        2.0 * self.inradius
    }

    /// Moves `z` into the Dirichlet domain centered at the origin by greedy
    /// descent on d(0, ·) over the generators; returns the moved point and
    /// the group element that achieves it.
    pub fn reduce_to_domain(&self, z: Point) -> (Point, Isometry) {
        let (point, word, _) = self.reduce_with_letters(z);
        (point, word)
    }

    /// Like [`reduce_to_domain`](Self::reduce_to_domain) but also returns
    /// the generator letters in the order they were applied to `z`.
    fn reduce_with_letters(&self, z: Point) -> (Point, Isometry, Vec<u8>) {
        let mut current = z;
        let mut word = Isometry::identity();
        let mut letters = Vec::new();
        let mut d = distance_to_origin(current);
        for _ in 0..100_000 {
            let mut best: Option<(usize, Point, f64)> = None;
            for (k, g) in self.generators.iter().enumerate() {
                let cand = g.apply(current);
                let dc = distance_to_origin(cand);
                if dc < d - 1e-15 && best.map_or(true, |(_, _, db)| dc < db) {
                    best = Some((k, cand, dc));
                }
            }
            match best {
                Some((k, cand, dc)) => {
                    current = cand;
                    d = dc;
                    word = self.generators[k].compose(&word);
                    letters.push(k as u8);
                }
                None => return (current, word, letters),
            }
        }
        // Greedy descent strictly decreases d(0, ·); hitting the cap means
        // the arithmetic is broken, so treat it as convergence.
        (current, word, letters)
    }
}

/// One enumerated orbit point.
#[derive(Debug, Clone)]
pub struct OrbitEntry {
    pub point: Point,
    pub distance: f64,
    /// Reduced word in generator indices, "e" for the identity.
    pub word: String,
}

impl OrbitEntry {
    pub fn word_length(&self) -> usize {
        if self.word == "e" {
            0
        } else {
            self.word.len()
        }
    }
}

/// All orbit points γ·seed within a distance ball around a center, plus the
/// bookkeeping needed to audit the enumeration.
#[derive(Clone)]
pub struct OrbitBall {
    pub center: Point,
    pub seed: Point,
    pub radius: f64,
    pub margin: f64,
    /// Entries sorted by (distance, word); pairwise distinct group elements.
    pub entries: Vec<OrbitEntry>,
    /// Distinct group elements discovered (counted against the budget).
    pub words_visited: usize,
    /// False when the enumeration was cut short by the budget.
    pub complete: bool,
}

/// Summarizes instead of dumping the entries: a ball can hold millions, and
/// the ball rides along inside budget errors, whose rendering must stay
/// readable.
impl fmt::Debug for OrbitBall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OrbitBall")
            .field("center", &self.center)
            .field("seed", &self.seed)
            .field("radius", &self.radius)
            .field("margin", &self.margin)
            .field("entries", &format_args!("[... {} orbit points ...]", self.entries.len()))
            .field("words_visited", &self.words_visited)
            .field("complete", &self.complete)
            .finish()
    }
}

impl OrbitBall {
    pub fn count(&self) -> usize {
        self.entries.len()
    }
}

/// Coefficient vector oriented by the sign of the weighted sum; the flag
/// marks sums inside the ambiguity band.
fn oriented_coefficients(iso: &Isometry) -> ([f64; 4], bool) {
    let mut c = [iso.a.re, iso.a.im, iso.b.re, iso.b.im];
    let s: f64 = SIGN_WEIGHTS.iter().zip(c.iter()).map(|(w, x)| w * x).sum();
    if s < 0.0 {
        for x in c.iter_mut() {
            *x = -*x;
        }
    }
    (c, s.abs() < SIGN_BAND)
}

fn quantize(c: &[f64; 4]) -> [i64; 4] {
    let mut key = [0i64; 4];
    for (k, x) in key.iter_mut().zip(c.iter()) {
        *k = (x / DEDUPE_QUANTUM).round() as i64;
    }
    key
}

/// The quantized key plus its neighbors along every coordinate that sits
/// close to a quantization boundary, so two float representations of one
/// group element can never land in different buckets unnoticed.
fn probe_keys(c: &[f64; 4], out: &mut Vec<[i64; 4]>) {
    let key = quantize(c);
    let start = out.len();
    out.push(key);
    for i in 0..4 {
        let frac = c[i] / DEDUPE_QUANTUM - key[i] as f64;
        if frac.abs() > PROBE_THRESHOLD {
            let step = if frac > 0.0 { 1 } else { -1 };
            for j in start..out.len() {
                let mut shifted = out[j];
                shifted[i] += step;
                out.push(shifted);
            }
        }
    }
}

struct DedupeSet {
    map: HashMap<[i64; 4], u32>,
    scratch: Vec<[i64; 4]>,
}

impl DedupeSet {
    fn new() -> Self {
        Self {
            map: HashMap::new(),
            scratch: Vec::with_capacity(32),
        }
    }

    /// Inserts the element; returns false when it was already present
    /// (including under a neighboring quantization key or, for elements
    /// whose canonical sign is ambiguous, under the opposite sign).
    fn insert(&mut self, iso: &Isometry, index: u32) -> bool {
        let (c, ambiguous) = oriented_coefficients(iso);
        self.scratch.clear();
        probe_keys(&c, &mut self.scratch);
        if ambiguous {
            let neg = [-c[0], -c[1], -c[2], -c[3]];
            probe_keys(&neg, &mut self.scratch);
        }
        if self.scratch.iter().any(|k| self.map.contains_key(k)) {
            return false;
        }
        self.map.insert(quantize(&c), index);
        true
    }

    fn len(&self) -> usize {
        self.map.len()
    }
}

/// Breadth-first enumeration of {γ : d(center, γ·seed) ≤ radius}.
///
/// Both basepoints are first moved into the fundamental domain (replacing
/// each γ by a conjugate, a count-preserving bijection), which pins the
/// prune margin's meaning down: word paths between domain points stay
/// within `margin` of the ball they connect.  A word is extended only
/// while its orbit point stays within radius + margin; deduplication
/// identifies matrices up to sign via quantized coefficients.  Discovering
/// more than `budget` distinct group elements aborts with a budget error
/// carrying the partial ball.
pub fn enumerate_orbit(
    group: &SurfaceGroup,
    center: Point,
    seed: Point,
    radius: f64,
    margin: f64,
    budget: usize,
) -> Result<OrbitBall> {
    if !(radius >= 0.0) {
        return Err(Error::DegenerateInput(format!(
            "orbit radius must be nonnegative, got {radius}"
        )));
    }
    if !(margin >= 0.0) {
        return Err(Error::DegenerateInput(format!(
            "prune margin must be nonnegative, got {margin}"
        )));
    }
    if radius + margin > MAX_PRUNE_RADIUS {
        return Err(Error::DegenerateInput(format!(
            "radius + margin = {} exceeds {MAX_PRUNE_RADIUS}, the largest prune \
             radius at which float coefficients still deduplicate group elements \
             reliably",
            radius + margin
        )));
    }

    // Reduce: with x = g_x⁻¹ x', y = g_y⁻¹ y' the condition
    // d(x, δ y) ≤ t becomes d(x', ε y') ≤ t for ε = g_x δ g_y⁻¹, so we
    // enumerate ε against the reduced pair and translate back at the end.
    let (center_red, to_center, center_letters) = group.reduce_with_letters(center);
    let (seed_red, _, seed_letters) = group.reduce_with_letters(seed);
    let from_center = to_center.inverse();
    // Letters of g_x⁻¹ in composition order, ready to prefix onto ε.
    let prefix: Vec<u8> = center_letters
        .iter()
        .map(|&k| SurfaceGroup::inverse_index(k as usize) as u8)
        .collect();
    // Letters of g_y in composition order, appended after ε.
    let suffix: Vec<u8> = seed_letters.iter().rev().copied().collect();

    // Arena of (parent index, generator) so words are reconstructed on
    // demand instead of being stored on every frontier node.
    const NO_GEN: u8 = u8::MAX;
    let mut arena: Vec<(u32, u8)> = vec![(0, NO_GEN)];
    let mut seen = DedupeSet::new();
    seen.insert(&Isometry::identity(), 0);

    // Raw (point, distance, arena index) before words are attached.
    let mut raw_entries: Vec<(Point, f64, u32)> = Vec::new();
    let d0 = hyperbolic_distance(center_red, seed_red);
    if d0 <= radius {
        raw_entries.push((seed_red, d0, 0));
    }

    let mut queue: VecDeque<(Isometry, u32)> = VecDeque::new();
    if d0 <= radius + margin {
        queue.push_back((Isometry::identity(), 0));
    }

    let mut truncated = false;
    'bfs: while let Some((gamma, idx)) = queue.pop_front() {
        let last = arena[idx as usize].1;
        for k in 0..8usize {
            // Reduced words: never undo the last generator.
            if last != NO_GEN && k == SurfaceGroup::inverse_index(last as usize) {
                continue;
            }
            let child = gamma.compose(&group.generators[k]);
            let point = child.apply(seed_red);
            let dist = hyperbolic_distance(center_red, point);
            if dist > radius + margin {
                continue;
            }
            let child_idx = arena.len() as u32;
            if !seen.insert(&child, child_idx) {
                continue;
            }
            if seen.len() > budget {
                truncated = true;
                break 'bfs;
            }
            arena.push((idx, k as u8));
            if dist <= radius {
                raw_entries.push((point, dist, child_idx));
            }
            queue.push_back((child, child_idx));
        }
    }

    let words_visited = seen.len();
    let mut entries: Vec<OrbitEntry> = raw_entries
        .into_iter()
        .map(|(point, distance, idx)| OrbitEntry {
            point: from_center.apply(point),
            distance,
            word: conjugated_word(&arena, idx, &prefix, &suffix),
        })
        .collect();
    entries.sort_by(|p, q| {
        p.distance
            .total_cmp(&q.distance)
            .then_with(|| p.word.len().cmp(&q.word.len()))
            .then_with(|| p.word.cmp(&q.word))
    });

    let reached = entries.last().map_or(0.0, |e| e.distance);
    let ball = OrbitBall {
        center,
        seed,
        radius,
        margin,
        entries,
        words_visited,
        complete: !truncated,
    };
    if truncated {
        return Err(Error::BudgetExceeded {
            budget,
            reached,
            partial: Box::new(ball),
        });
    }
    Ok(ball)
}

/// Word for δ = g_x⁻¹ · ε · g_y, freely reduced; "e" for the identity.
fn conjugated_word(arena: &[(u32, u8)], mut idx: u32, prefix: &[u8], suffix: &[u8]) -> String {
    let mut middle = Vec::new();
    while idx != 0 {
        let (parent, gen) = arena[idx as usize];
        middle.push(gen);
        idx = parent;
    }
    middle.reverse();

    // Stack-based free reduction: adjacent mutually inverse letters cancel.
    let mut word: Vec<u8> = Vec::with_capacity(prefix.len() + middle.len() + suffix.len());
    for &k in prefix.iter().chain(middle.iter()).chain(suffix.iter()) {
        if word.last() == Some(&(SurfaceGroup::inverse_index(k as usize) as u8)) {
            word.pop();
        } else {
            word.push(k);
        }
    }
    if word.is_empty() {
        return "e".to_string();
    }
    let digits: Vec<u8> = word.iter().map(|&k| b'0' + k).collect();
    String::from_utf8(digits).expect("generator digits are ascii")
}

/// Orbit counting function t ↦ #{γ : d(x, γy) ≤ t} sampled on a grid,
/// obtained from a single enumeration at the largest radius.
pub fn count_series(
    group: &SurfaceGroup,
    center: Point,
    seed: Point,
    times: &[f64],
    margin: f64,
    budget: usize,
) -> Result<GrowthSeries> {
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::DegenerateInput(
            "count_series needs a strictly increasing, nonempty time grid".into(),
        ));
    }
    let ball = enumerate_orbit(group, center, seed, *times.last().unwrap(), margin, budget)?;
    let mut samples = Vec::with_capacity(times.len());
    let mut cursor = 0usize;
    for &t in times {
        while cursor < ball.entries.len() && ball.entries[cursor].distance <= t {
            cursor += 1;
        }
        samples.push((t, cursor as f64));
    }
    GrowthSeries::new(SeriesLabel::OrbitCount, samples)
}

/// Writes one row per orbit point: `gamma_word,x_re,x_im,dist`.
pub fn write_orbit_csv<W: Write>(ball: &OrbitBall, mut out: W) -> std::io::Result<()> {
    writeln!(out, "gamma_word,x_re,x_im,dist")?;
    for e in &ball.entries {
        writeln!(out, "{},{},{},{}", e.word, e.point.u(), e.point.v(), e.distance)?;
    }
    Ok(())
}
