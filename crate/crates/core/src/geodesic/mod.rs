//! ρ-lengths, ρ-distances and geodesics.
//!
//! Distances are computed discrete-first: Dijkstra on a masked lattice gives
//! an upper bound and the right homotopy class, then the polyline is relaxed
//! vertex by vertex at spacing `h` and `h/2`.

mod graph;
mod refine;
mod solver;

use std::f64::consts::TAU;

use crate::density::{DensityError, DensitySpec};
use crate::domain::{DomainError, PlaneDomain};
use crate::point::{polyline_swept_angle, Point};
use crate::quadrature::GL8_UNIT;

pub use graph::{grid_shortest_path, GridGraph, GridPath, Stencil};
pub use refine::{refine_geodesic, RefineOptions};
pub use solver::{default_bbox, distance, geodesic_in_class, DistanceOptions, DistanceSolver, UniquenessReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeodesicError {
    #[error("point not in domain: ({0}, {1})")]
    NotInDomain(f64, f64),
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("path leaves the domain on segment {0}")]
    PathExits(usize),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("winding {winding} exceeds the sheet budget {budget}")]
    BudgetExceeded { winding: i64, budget: i64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("refinement failed: {0}")]
    Refinement(String),
    #[error("bad stencil size {0}; expected 8, 16 or 32")]
    BadStencil(usize),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Density(#[from] DensityError),
}

pub type Result<T> = std::result::Result<T, GeodesicError>;

/// A density on a domain: the length element `ρ(z)|dz|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalMetric {
    pub domain: PlaneDomain,
    pub density: DensitySpec,
    holes: Vec<Point>,
    constant: Option<f64>,
}

/// Quadrature panels are split until their length is at most this fraction
/// of the clearance at their ends and midpoint.
const PANEL_CLEARANCE_RATIO: f64 = 0.5;
const MAX_PANEL_DEPTH: u32 = 40;

impl ConformalMetric {
    pub fn new(domain: PlaneDomain, density: DensitySpec) -> Self {
        let holes = domain.holes();
        let constant = density.constant_value();
        ConformalMetric { domain, density, holes, constant }
    }

    /// Representative points of the holes, carriers of the winding vector.
    pub fn holes(&self) -> &[Point] {
        &self.holes
    }

    #[inline]
    pub fn rho(&self, p: Point) -> Result<f64> {
        Ok(self.density.rho(&self.domain, p)?)
    }

    #[inline]
    pub fn segment_inside(&self, p: Point, q: Point, margin: f64) -> bool {
        self.domain.segment_inside(p, q, margin)
    }

    /// `∫_{[p,q]} ρ ds` by composite 8-point Gauss–Legendre, with panels
    /// refined towards the boundary where blow-up densities live.
    pub fn segment_length(&self, p: Point, q: Point) -> Result<f64> {
        if let Some(c) = self.constant {
            return Ok(c * p.dist(q));
        }
        let l = self.panel(p, q, self.domain.clearance(p), self.domain.clearance(q), 0)?;
        if l.is_finite() {
            Ok(l)
        } else {
            Err(GeodesicError::Density(DensityError::Singular(q.x, q.y)))
        }
    }

    /// Like [`segment_length`](Self::segment_length) but `+∞` on failure,
    /// for use inside minimizers.
    #[inline]
    pub fn segment_cost(&self, p: Point, q: Point) -> f64 {
        self.segment_length(p, q).unwrap_or(f64::INFINITY)
    }

    fn panel(&self, p: Point, q: Point, cp: f64, cq: f64, depth: u32) -> Result<f64> {
        let len = p.dist(q);
        if len == 0.0 {
            return Ok(0.0);
        }
        if depth < MAX_PANEL_DEPTH && len > PANEL_CLEARANCE_RATIO * cp.min(cq) {
            let m = p.lerp(q, 0.5);
            let cm = self.domain.clearance(m);
            return Ok(self.panel(p, m, cp, cm, depth + 1)? + self.panel(m, q, cm, cq, depth + 1)?);
        }
        let mut s = 0.0;
        for (t, w) in GL8_UNIT {
            s += w * self.rho(p.lerp(q, t))?;
        }
        Ok(s * len)
    }

    /// Point at ρ-arclength `s` from `p` along `[p, q]`, by Newton on the
    /// partial integral. `total` is the segment's ρ-length.
    pub fn point_at_length(&self, p: Point, q: Point, s: f64, total: f64) -> Point {
        if total <= 0.0 || s <= 0.0 {
            return p;
        }
        if s >= total {
            return q;
        }
        let d = p.dist(q);
        let mut t = s / total;
        for _ in 0..30 {
            let x = p.lerp(q, t);
            let f = self.segment_cost(p, x) - s;
            let fp = self.rho(x).map(|r| r * d).unwrap_or(f64::NAN);
            if !(fp > 0.0) || !f.is_finite() {
                break;
            }
            let next = (t - f / fp).clamp(0.0, 1.0);
            let done = (next - t).abs() < 1e-15;
            t = next;
            if done {
                break;
            }
        }
        p.lerp(q, t)
    }
}

/// An ordered vertex list. A single vertex is the constant path.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Polyline {
    vertices: Vec<Point>,
}

impl Polyline {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(GeodesicError::InvalidPath("no vertices".into()));
        }
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(GeodesicError::InvalidPath("non-finite vertex".into()));
        }
        if let Some(k) = vertices.windows(2).position(|w| w[0] == w[1]) {
            return Err(GeodesicError::InvalidPath(format!("vertices {k} and {} coincide", k + 1)));
        }
        Ok(Polyline { vertices })
    }

    /// Drop consecutive duplicates before building.
    pub fn dedup(mut vertices: Vec<Point>) -> Result<Self> {
        vertices.dedup();
        Polyline::new(vertices)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn start(&self) -> Point {
        self.vertices[0]
    }

    pub fn end(&self) -> Point {
        self.vertices[self.vertices.len() - 1]
    }

    pub fn segment_count(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn euclidean_length(&self) -> f64 {
        self.vertices.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    pub fn class(&self, holes: &[Point]) -> HomotopyClass {
        HomotopyClass::of(&self.vertices, holes)
    }
}

/// `ℓ_ρ(γ)` for a polyline; every segment must stay inside the domain.
pub fn path_length(metric: &ConformalMetric, path: &Polyline) -> Result<f64> {
    let mut total = 0.0;
    for (k, w) in path.vertices().windows(2).enumerate() {
        if !metric.segment_inside(w[0], w[1], 0.0) {
            return Err(GeodesicError::PathExits(k));
        }
        total += metric.segment_length(w[0], w[1])?;
    }
    Ok(total)
}

/// Winding numbers about the designated holes, relative to principal
/// arguments: class `w` sweeps `Arg(b−c) − Arg(a−c) + 2πw` about hole `c`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct HomotopyClass(pub Vec<i64>);

impl HomotopyClass {
    pub fn trivial(holes: usize) -> Self {
        HomotopyClass(vec![0; holes])
    }

    pub fn of(vertices: &[Point], holes: &[Point]) -> Self {
        let (a, b) = (vertices[0], vertices[vertices.len() - 1]);
        HomotopyClass(
            holes
                .iter()
                .map(|&c| {
                    let swept = polyline_swept_angle(c, vertices);
                    ((swept - ((b - c).arg() - (a - c).arg())) / TAU).round() as i64
                })
                .collect(),
        )
    }

    pub fn is_trivial(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }
}

/// A computed geodesic with its ρ-length and error estimate.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GeodesicResult {
    pub path: Polyline,
    /// Cumulative ρ-arclength at each vertex.
    pub arclength: Vec<f64>,
    pub length: f64,
    /// Convergence-based estimate of `|length − d_ρ|`.
    pub error_estimate: f64,
    /// Length of the lattice path that seeded the refinement.
    pub grid_length: Option<f64>,
    /// Relative angular gap of the lattice stencil.
    pub stencil_gap: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub class: HomotopyClass,
}

impl GeodesicResult {
    pub(crate) fn from_vertices(
        metric: &ConformalMetric,
        vertices: Vec<Point>,
        seg: &[f64],
    ) -> Result<GeodesicResult> {
        let path = Polyline::dedup(vertices)?;
        let seg: Vec<f64> = if seg.len() == path.segment_count() {
            seg.to_vec()
        } else {
            path.vertices()
                .windows(2)
                .map(|w| metric.segment_length(w[0], w[1]))
                .collect::<Result<_>>()?
        };
        let mut arclength = Vec::with_capacity(seg.len() + 1);
        let mut acc = 0.0;
        arclength.push(0.0);
        for s in &seg {
            acc += s;
            arclength.push(acc);
        }
        let class = path.class(metric.holes());
        Ok(GeodesicResult {
            path,
            arclength,
            length: acc,
            error_estimate: 0.0,
            grid_length: None,
            stencil_gap: 0.0,
            sweeps: 0,
            converged: true,
            class,
        })
    }

    pub fn zero(metric: &ConformalMetric, p: Point) -> GeodesicResult {
        GeodesicResult {
            path: Polyline { vertices: vec![p] },
            arclength: vec![0.0],
            length: 0.0,
            error_estimate: 0.0,
            grid_length: Some(0.0),
            stencil_gap: 0.0,
            sweeps: 0,
            converged: true,
            class: HomotopyClass::trivial(metric.holes().len()),
        }
    }

    /// Point at ρ-arclength `s ∈ [0, length]`.
    pub fn point_at(&self, metric: &ConformalMetric, s: f64) -> Point {
        let v = self.path.vertices();
        if v.len() == 1 || s <= 0.0 {
            return v[0];
        }
        if s >= self.length {
            return v[v.len() - 1];
        }
        let k = self.arclength.partition_point(|&a| a <= s).clamp(1, v.len() - 1);
        let seg = self.arclength[k] - self.arclength[k - 1];
        metric.point_at_length(v[k - 1], v[k], s - self.arclength[k - 1], seg)
    }
}

/// Symmetric Hausdorff distance between two polylines (vertices against
/// segments).
pub fn hausdorff(p: &Polyline, q: &Polyline) -> f64 {
    fn one_sided(a: &[Point], b: &[Point]) -> f64 {
        a.iter()
            .map(|&x| {
                if b.len() == 1 {
                    return x.dist(b[0]);
                }
                b.windows(2)
                    .map(|w| crate::point::point_segment_distance(x, w[0], w[1]))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
    one_sided(p.vertices(), q.vertices()).max(one_sided(q.vertices(), p.vertices()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_length_examples() {
        let flat = ConformalMetric::new(PlaneDomain::FullPlane, DensitySpec::constant());
        let seg = Polyline::new(vec![Point::ORIGIN, Point::new(3.0, 4.0)]).unwrap();
        assert_eq!(path_length(&flat, &seg).unwrap(), 5.0);

        let cyl = ConformalMetric::new(PlaneDomain::PuncturedPlane, DensitySpec::ModulusPower { alpha: -1.0 });
        let seg = Polyline::new(vec![Point::new(1.0, 0.0), Point::new(2.0, 0.0)]).unwrap();
        assert!((path_length(&cyl, &seg).unwrap() - 2f64.ln()).abs() < 1e-10);

        let qh = ConformalMetric::new(PlaneDomain::unit_disk(), DensitySpec::quasihyperbolic());
        let seg = Polyline::new(vec![Point::ORIGIN, Point::new(0.5, 0.0)]).unwrap();
        assert!((path_length(&qh, &seg).unwrap() - 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn path_exiting_domain_errors() {
        let qh = ConformalMetric::new(PlaneDomain::unit_disk(), DensitySpec::quasihyperbolic());
        let seg = Polyline::new(vec![Point::ORIGIN, Point::new(1.5, 0.0)]).unwrap();
        assert_eq!(path_length(&qh, &seg), Err(GeodesicError::PathExits(0)));
    }

    #[test]
    fn polyline_rejects_repeats() {
        assert!(Polyline::new(vec![Point::ORIGIN, Point::ORIGIN]).is_err());
        assert!(Polyline::new(vec![Point::ORIGIN]).is_ok());
    }

    #[test]
    fn class_of_loops() {
        let holes = [Point::ORIGIN];
        let up: Vec<Point> = (0..=4).map(|k| Point::polar(1.0, std::f64::consts::PI * k as f64 / 4.0)).collect();
        assert_eq!(HomotopyClass::of(&up, &holes), HomotopyClass(vec![0]));
        let mut down: Vec<Point> = (0..4).map(|k| Point::polar(1.0, -std::f64::consts::PI * k as f64 / 4.0)).collect();
        down.push(Point::new(-1.0, 0.0));
        // Arrives at Arg = π having swept −π.
        assert_eq!(HomotopyClass::of(&down, &holes), HomotopyClass(vec![-1]));
        let full: Vec<Point> = (0..=8).map(|k| Point::polar(1.0, TAU * k as f64 / 8.0)).collect();
        assert_eq!(HomotopyClass::of(&full, &holes), HomotopyClass(vec![1]));
    }

    #[test]
    fn point_at_length_inverts() {
        let cyl = ConformalMetric::new(PlaneDomain::PuncturedPlane, DensitySpec::ModulusPower { alpha: -1.0 });
        let (p, q) = (Point::new(1.0, 0.0), Point::new(4.0, 0.0));
        let total = cyl.segment_length(p, q).unwrap();
        let x = cyl.point_at_length(p, q, 2f64.ln(), total);
        assert!((x.x - 2.0).abs() < 1e-10 && x.y == 0.0);
    }
}
