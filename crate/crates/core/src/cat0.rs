//! Comparison triangles, the CAT(0) distance inequality on sampled
//! geodesic triangles, and regularity probes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::density::{DensitySpec, PhiSpec, SubharmonicSpec};
use crate::domain::PlaneDomain;
use crate::geodesic::{
    ConformalMetric, DistanceOptions, DistanceSolver, GeodesicError, GeodesicResult, HomotopyClass,
};
use crate::point::Point;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Cat0Error {
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("triangle does not bound: winding sum {0:?}")]
    NotNullHomotopic(Vec<i64>),
    #[error("arclength {s} outside [0, {len}]")]
    OutOfRange { s: f64, len: f64 },
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
}

type Result<T> = std::result::Result<T, Cat0Error>;

const SIDE_SLACK: f64 = 1e-12;

/// Side of a triangle, oriented `a→b`, `b→c`, `c→a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    AB,
    BC,
    CA,
}

impl Side {
    pub const ALL: [Side; 3] = [Side::AB, Side::BC, Side::CA];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn next(self) -> Side {
        Side::ALL[(self.index() + 1) % 3]
    }
}

/// Euclidean model triangle with `ā = 0` and `b̄` on the positive real axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonTriangle {
    pub a: Point,
    pub b: Point,
    pub c: Point,
    /// Side lengths `[ℓ_ab, ℓ_bc, ℓ_ca]` as given.
    pub lengths: [f64; 3],
}

impl ComparisonTriangle {
    pub fn vertex(&self, k: usize) -> Point {
        [self.a, self.b, self.c][k % 3]
    }

    pub fn side_length(&self, side: Side) -> f64 {
        self.lengths[side.index()]
    }

    pub fn is_degenerate(&self) -> bool {
        self.c.y == 0.0
    }
}

/// Model triangle from three side lengths; `c̄` lies in the closed upper
/// half-plane.
pub fn comparison_triangle(l_ab: f64, l_bc: f64, l_ca: f64) -> Result<ComparisonTriangle> {
    build_comparison(l_ab, l_bc, l_ca, 0.0)
}

/// As [`comparison_triangle`] with an extra absolute slack on the triangle
/// inequality.
fn build_comparison(l_ab: f64, l_bc: f64, l_ca: f64, slack: f64) -> Result<ComparisonTriangle> {
    let ls = [l_ab, l_bc, l_ca];
    if ls.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Cat0Error::Geometry(format!("side lengths must be finite and nonnegative, got {ls:?}")));
    }
    let scale = l_ab.max(l_bc).max(l_ca);
    let tol = SIDE_SLACK * scale + slack;
    for k in 0..3 {
        let excess = ls[k] - ls[(k + 1) % 3] - ls[(k + 2) % 3];
        if excess > tol {
            return Err(Cat0Error::Geometry(format!("triangle inequality fails by {excess:e} for {ls:?}")));
        }
    }
    let a = Point::ORIGIN;
    let b = Point::new(l_ab, 0.0);
    let c = if l_ab == 0.0 {
        Point::new(l_ca, 0.0)
    } else {
        let x = (l_ab * l_ab + l_ca * l_ca - l_bc * l_bc) / (2.0 * l_ab);
        let x = x.clamp(-l_ca, l_ca);
        Point::new(x, (l_ca * l_ca - x * x).max(0.0).sqrt())
    };
    Ok(ComparisonTriangle { a, b, c, lengths: ls })
}

/// Point at Euclidean arclength `s` along a side of the model triangle.
pub fn comparison_point(tri: &ComparisonTriangle, side: Side, s: f64) -> Result<Point> {
    let len = tri.side_length(side);
    let tol = SIDE_SLACK * len.max(1.0);
    if !(s >= -tol && s <= len + tol) {
        return Err(Cat0Error::OutOfRange { s, len });
    }
    let k = side.index();
    let (p, q) = (tri.vertex(k), tri.vertex(k + 1));
    if len == 0.0 {
        return Ok(p);
    }
    Ok(p.lerp(q, (s / len).clamp(0.0, 1.0)))
}

/// Three ρ-geodesics `α: a→b`, `β: b→c`, `γ: c→a`.
#[derive(Debug, Clone)]
pub struct GeodesicTriangle {
    pub vertices: [Point; 3],
    pub sides: [GeodesicResult; 3],
    /// Winding of each side about each hole.
    pub windings: [HomotopyClass; 3],
}

impl GeodesicTriangle {
    /// Sides by three distance calls; the closed loop must have zero
    /// winding about every hole.
    pub fn new(solver: &DistanceSolver, a: Point, b: Point, c: Point) -> Result<Self> {
        let sides = [solver.distance(a, b)?, solver.distance(b, c)?, solver.distance(c, a)?];
        Self::from_sides([a, b, c], sides)
    }

    pub fn from_sides(vertices: [Point; 3], sides: [GeodesicResult; 3]) -> Result<Self> {
        for (k, s) in sides.iter().enumerate() {
            if s.path.start() != vertices[k] || s.path.end() != vertices[(k + 1) % 3] {
                return Err(Cat0Error::Geometry(format!("side {k} does not join its vertices")));
            }
        }
        let windings = [sides[0].class.clone(), sides[1].class.clone(), sides[2].class.clone()];
        let total: Vec<i64> =
            (0..windings[0].0.len()).map(|h| windings.iter().map(|w| w.0.get(h).copied().unwrap_or(0)).sum()).collect();
        if total.iter().any(|&w| w != 0) {
            return Err(Cat0Error::NotNullHomotopic(total));
        }
        Ok(GeodesicTriangle { vertices, sides, windings })
    }

    pub fn side(&self, side: Side) -> &GeodesicResult {
        &self.sides[side.index()]
    }

    pub fn lengths(&self) -> [f64; 3] {
        [self.sides[0].length, self.sides[1].length, self.sides[2].length]
    }

    /// Largest side error estimate.
    pub fn side_error(&self) -> f64 {
        self.sides.iter().map(|s| s.error_estimate).fold(0.0, f64::max)
    }

    /// Some vertex coincides with another or lies on the opposite side
    /// (up to the side error estimates).
    pub fn is_degenerate(&self) -> bool {
        let l = self.lengths();
        let err: f64 = self.sides.iter().map(|s| s.error_estimate).sum();
        (0..3).any(|k| l[k] + l[(k + 1) % 3] - l[(k + 2) % 3] <= err)
    }

    /// Model triangle, allowing the triangle inequality to fail by the
    /// summed side error estimates.
    pub fn comparison(&self) -> Result<ComparisonTriangle> {
        let l = self.lengths();
        let err: f64 = self.sides.iter().map(|s| s.error_estimate).sum();
        build_comparison(l[0], l[1], l[2], err)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstPair {
    pub x: Point,
    pub y: Point,
    /// Side of `x`; `y` lies on the following side.
    pub side: Side,
    pub s_x: f64,
    pub s_y: f64,
    pub distance: f64,
    pub comparison: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cat0Report {
    pub samples: usize,
    pub evaluated: usize,
    pub failures: Vec<String>,
    /// `v* = max(d(x, y) − |x̄ − ȳ|)`.
    pub max_violation: f64,
    pub budget: f64,
    pub max_distance_error: f64,
    pub side_error: f64,
    pub worst: Option<WorstPair>,
    pub degenerate: bool,
    pub pass: bool,
}

/// One sampled pair: `x` on `side` at `s_x`, `y` on `side.next()` at `s_y`.
#[derive(Debug, Clone, Copy)]
struct Sample {
    side: Side,
    s_x: f64,
    s_y: f64,
}

/// Stratified pairs: round-robin over the three side pairs, Latin
/// hypercube over the two arclengths within each.
fn stratified_samples(lengths: [f64; 3], n_pairs: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_pairs);
    for side in Side::ALL {
        let k = side.index();
        let m = n_pairs / 3 + usize::from(k < n_pairs % 3);
        if m == 0 {
            continue;
        }
        let (lx, ly) = (lengths[k], lengths[(k + 1) % 3]);
        let mut px: Vec<usize> = (0..m).collect();
        let mut py: Vec<usize> = (0..m).collect();
        px.shuffle(&mut rng);
        py.shuffle(&mut rng);
        for j in 0..m {
            let ux: f64 = rng.gen();
            let uy: f64 = rng.gen();
            out.push(Sample {
                side,
                s_x: lx * (px[j] as f64 + ux) / m as f64,
                s_y: ly * (py[j] as f64 + uy) / m as f64,
            });
        }
    }
    out
}

/// Distance between two points of the triangle, in the class of the path
/// through the shared vertex when the domain has holes.
fn pair_distance(solver: &DistanceSolver, tri: &GeodesicTriangle, s: &Sample) -> Result<(Point, Point, GeodesicResult)> {
    let metric = solver.metric();
    let gx = tri.side(s.side);
    let gy = tri.side(s.side.next());
    let x = gx.point_at(metric, s.s_x);
    let y = gy.point_at(metric, s.s_y);
    let r = if metric.holes().is_empty() {
        solver.distance(x, y)?
    } else {
        let class = HomotopyClass::of(&through_vertex(metric, gx, s.s_x, gy, s.s_y), metric.holes());
        solver.geodesic_in_class(x, y, &class)?
    };
    Ok((x, y, r))
}

/// Polyline `x → (shared vertex) → y` along the two sides.
fn through_vertex(metric: &ConformalMetric, gx: &GeodesicResult, sx: f64, gy: &GeodesicResult, sy: f64) -> Vec<Point> {
    let mut pts = vec![gx.point_at(metric, sx)];
    let vx = gx.path.vertices();
    let first = gx.arclength.partition_point(|&a| a <= sx);
    pts.extend(vx[first.min(vx.len())..].iter().copied());
    let vy = gy.path.vertices();
    let last = gy.arclength.partition_point(|&a| a < sy);
    pts.extend(vy[1.min(vy.len())..last.min(vy.len())].iter().copied());
    pts.push(gy.point_at(metric, sy));
    pts.dedup();
    pts
}

/// Sample `n_pairs` pairs on distinct sides and test
/// `d(x, y) ≤ |x̄ − ȳ|` against the numerical budget
/// `2·max distance error + 3·max side error`.
pub fn cat0_check(solver: &DistanceSolver, tri: &GeodesicTriangle, n_pairs: usize, seed: u64) -> Result<Cat0Report> {
    let model = tri.comparison()?;
    let samples = stratified_samples(tri.lengths(), n_pairs, seed);
    let outcomes: Vec<_> = samples
        .par_iter()
        .map(|s| {
            let (x, y, r) = pair_distance(solver, tri, s)?;
            let k = s.side.index();
            let xb = comparison_point(&model, s.side, s.s_x.min(model.lengths[k]))?;
            let yb = comparison_point(&model, s.side.next(), s.s_y.min(model.lengths[(k + 1) % 3]))?;
            Ok::<_, Cat0Error>((x, y, r.length, r.error_estimate, xb.dist(yb)))
        })
        .collect();
    let mut worst: Option<WorstPair> = None;
    let mut v_star = f64::NEG_INFINITY;
    let mut dist_err = 0.0f64;
    let mut failures = Vec::new();
    let mut evaluated = 0;
    for (s, o) in samples.iter().zip(outcomes) {
        match o {
            Ok((x, y, d, e, cmp)) => {
                evaluated += 1;
                dist_err = dist_err.max(e);
                let v = d - cmp;
                if v > v_star {
                    v_star = v;
                    worst = Some(WorstPair { x, y, side: s.side, s_x: s.s_x, s_y: s.s_y, distance: d, comparison: cmp });
                }
            }
            Err(e) => failures.push(format!("{:?} s=({}, {}): {e}", s.side, s.s_x, s.s_y)),
        }
    }
    let side_error = tri.side_error();
    let budget = 2.0 * dist_err + 3.0 * side_error;
    Ok(Cat0Report {
        samples: samples.len(),
        evaluated,
        failures,
        max_violation: v_star,
        budget,
        max_distance_error: dist_err,
        side_error,
        worst,
        degenerate: tri.is_degenerate(),
        pass: evaluated > 0 && v_star <= budget,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    /// `f(i/n) = d(g1(i/n), g2(i/n))`.
    pub values: Vec<f64>,
    pub max_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Midpoint convexity of `t ↦ d(g1(t), g2(t))` on `{0, 1/n, …, 1}` with
/// `t` the normalized ρ-arclength.
pub fn convexity_check(
    solver: &DistanceSolver,
    g1: &GeodesicResult,
    g2: &GeodesicResult,
    n: usize,
) -> Result<ConvexityReport> {
    if n == 0 {
        return Err(Cat0Error::Geometry("need at least one interval".into()));
    }
    let metric = solver.metric();
    let results: Vec<Result<GeodesicResult>> = (0..=n)
        .into_par_iter()
        .map(|i| {
            let t = i as f64 / n as f64;
            let x = g1.point_at(metric, t * g1.length);
            let y = g2.point_at(metric, t * g2.length);
            Ok(solver.distance(x, y)?)
        })
        .collect();
    let mut values = Vec::with_capacity(n + 1);
    let mut err = 0.0f64;
    for r in results {
        let r = r?;
        err = err.max(r.error_estimate);
        values.push(r.length);
    }
    let mut worst = 0.0f64;
    for i in 0..=n {
        for j in (i + 2..=n).step_by(2) {
            worst = worst.max(values[(i + j) / 2] - 0.5 * (values[i] + values[j]));
        }
    }
    let tolerance = 3.0 * err;
    Ok(ConvexityReport { values, max_violation: worst, tolerance, pass: worst <= tolerance })
}

/// Largest turning angle per unit ρ-arclength over interior vertices.
pub fn turning_rate(result: &GeodesicResult) -> f64 {
    let v = result.path.vertices();
    let s = &result.arclength;
    let mut worst = 0.0f64;
    for i in 1..v.len().saturating_sub(1) {
        let (d0, d1) = (v[i] - v[i - 1], v[i + 1] - v[i]);
        let angle = d0.cross(d1).atan2(d0.dot(d1)).abs();
        let len = s[i + 1] - s[i - 1];
        if len > 0.0 {
            worst = worst.max(angle / len);
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C11Report {
    pub hs: Vec<f64>,
    pub rates: Vec<f64>,
    pub lengths: Vec<f64>,
    /// Absolute allowance for turning noise of near-straight geodesics.
    pub floor: f64,
    pub bounded: bool,
}

/// Recompute the geodesic `a → b` at each spacing and test
/// `L(h) ≤ 1.5·L(h_max) + floor`.
pub fn c11_probe(
    metric: &ConformalMetric,
    a: Point,
    b: Point,
    hs: &[f64],
    opts: &DistanceOptions,
    floor: f64,
) -> Result<C11Report> {
    if hs.is_empty() {
        return Err(Cat0Error::Geometry("no spacings given".into()));
    }
    let mut rates = Vec::with_capacity(hs.len());
    let mut lengths = Vec::with_capacity(hs.len());
    for &h in hs {
        let solver = DistanceSolver::for_points(metric.clone(), DistanceOptions { h, ..opts.clone() }, &[a, b])?;
        let r = solver.distance(a, b)?;
        rates.push(turning_rate(&r));
        lengths.push(r.length);
    }
    let coarse = hs
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .map(|(k, _)| rates[k])
        .expect("nonempty");
    let bounded = rates.iter().all(|&l| l <= 1.5 * coarse + floor);
    Ok(C11Report { hs: hs.to_vec(), rates, lengths, floor, bounded })
}

/// Whether the induced distance is complete, when known in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Completeness {
    Complete,
    Incomplete,
    Unknown,
}

impl Completeness {
    /// Inside the scope of the CAT(0) guarantee.
    pub fn in_scope(self) -> bool {
        self == Completeness::Complete
    }
}

pub fn completeness(spec: &DensitySpec, domain: &PlaneDomain) -> Completeness {
    use Completeness::*;
    let proper = !matches!(domain, PlaneDomain::FullPlane);
    let boundary_bounded = domain.is_bounded() || matches!(domain, PlaneDomain::Strip { .. });
    match spec {
        DensitySpec::Scaled { inner, .. } => completeness(inner, domain),
        DensitySpec::BoundaryPower { alpha } if !proper => {
            if *alpha == 0.0 {
                Complete
            } else {
                Unknown
            }
        }
        DensitySpec::BoundaryPower { alpha } => {
            if *alpha == -1.0 || (*alpha < -1.0 && boundary_bounded) {
                Complete
            } else if *alpha > -1.0 && domain.is_bounded() {
                Incomplete
            } else {
                Unknown
            }
        }
        DensitySpec::ModulusPower { alpha } => match domain {
            PlaneDomain::PuncturedPlane if *alpha == -1.0 => Complete,
            PlaneDomain::PuncturedPlane => Incomplete,
            _ => Unknown,
        },
        DensitySpec::HyperbolicDisk => match domain {
            PlaneDomain::Disk { center, radius } if *center == Point::ORIGIN && *radius == 1.0 => Complete,
            _ => Unknown,
        },
        DensitySpec::SphericalCap => Incomplete,
        DensitySpec::Composite { phi: PhiSpec::Exp { c, .. }, u: SubharmonicSpec::NegLogDelta } if proper && *c > 0.0 => {
            Complete
        }
        _ => Unknown,
    }
}
