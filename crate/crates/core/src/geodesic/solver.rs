//! The distance pipeline: lattice search, then nested refinement at `h`
//! and `h/2`.

use super::graph::{GridGraph, Stencil, Target};
use super::refine::{refine_levels, RefineOptions};
use super::{hausdorff, ConformalMetric, GeodesicError, GeodesicResult, HomotopyClass, Result};
use crate::domain::BBox;
use crate::grid::{build_grid, GridOptions};
use crate::point::Point;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DistanceOptions {
    /// Final vertex spacing of refined geodesics.
    pub h: f64,
    pub stencil: usize,
    /// Upper bound on lattice nodes for the search grid; its spacing is the
    /// smallest `h·2^k` that fits.
    pub search_nodes: usize,
    /// Search-grid margin; default twice the search spacing.
    pub grid_margin: Option<f64>,
    /// Required for unbounded domains unless derived from the endpoints.
    pub bbox: Option<BBox>,
    pub sheet_budget: i64,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        DistanceOptions {
            h: 1.0 / 64.0,
            stencil: 16,
            search_nodes: 250_000,
            grid_margin: None,
            bbox: None,
            sheet_budget: 2,
            tol: 1e-9,
            max_sweeps: 200,
        }
    }
}

impl DistanceOptions {
    pub fn with_h(h: f64) -> Self {
        DistanceOptions { h, ..Default::default() }
    }
}

/// Bounding box for an unbounded domain from the points of interest: their
/// box padded by half its span (at least 1), widened to hold a loop of
/// radius `1.25·r` about each hole, `r` the farthest point from it.
pub fn default_bbox(metric: &ConformalMetric, pts: &[Point]) -> Option<BBox> {
    let mut bb = BBox::around(pts)?;
    let pad = (0.5 * bb.width().max(bb.height())).max(1.0);
    bb = bb.padded(pad);
    for &c in metric.holes() {
        let r = 1.25 * pts.iter().map(|p| p.dist(c)).fold(0.0, f64::max);
        bb.include(c + Point::new(r, r));
        bb.include(c - Point::new(r, r));
    }
    Some(bb)
}

/// Distance and geodesic computations sharing one search graph.
#[derive(Debug, Clone)]
pub struct DistanceSolver {
    metric: ConformalMetric,
    opts: DistanceOptions,
    graph: GridGraph,
}

impl DistanceSolver {
    /// Solver over the whole domain (bounded, or clipped by `opts.bbox`).
    pub fn new(metric: ConformalMetric, opts: DistanceOptions) -> Result<Self> {
        Self::build(metric, opts, None)
    }

    /// Solver whose search grid holds `pts`; unbounded domains get
    /// [`default_bbox`] when `opts.bbox` is unset.
    pub fn for_points(metric: ConformalMetric, mut opts: DistanceOptions, pts: &[Point]) -> Result<Self> {
        if opts.bbox.is_none() && !metric.domain.is_bounded() {
            opts.bbox = default_bbox(&metric, pts);
        }
        Self::build(metric, opts, pts.first().copied())
    }

    fn build(metric: ConformalMetric, opts: DistanceOptions, anchor: Option<Point>) -> Result<Self> {
        if !(opts.h > 0.0 && opts.h.is_finite()) {
            return Err(GeodesicError::Domain(crate::domain::DomainError::BadSpacing(opts.h)));
        }
        let stencil = Stencil::new(opts.stencil)?;
        let bbox = match (metric.domain.bbox(), opts.bbox) {
            (Some(d), Some(u)) => d.intersect(&u).ok_or(crate::domain::DomainError::EmptyMask)?,
            (Some(d), None) => d,
            (None, Some(u)) => u,
            (None, None) => return Err(crate::domain::DomainError::NeedsBoundingBox.into()),
        };
        let area = bbox.width().max(opts.h) * bbox.height().max(opts.h);
        let mut spacing = opts.h;
        while area / (spacing * spacing) > opts.search_nodes as f64 {
            spacing *= 2.0;
        }
        let margin = opts.grid_margin.unwrap_or(2.0 * spacing);
        let grid = build_grid(
            &metric.domain,
            spacing,
            margin,
            GridOptions { anchor, bbox: Some(bbox), origin: Point::ORIGIN },
        )?;
        let graph = GridGraph::new(&metric, grid, stencil, 0.5 * margin, opts.sheet_budget);
        Ok(DistanceSolver { metric, opts, graph })
    }

    pub fn metric(&self) -> &ConformalMetric {
        &self.metric
    }

    pub fn options(&self) -> &DistanceOptions {
        &self.opts
    }

    pub fn graph(&self) -> &GridGraph {
        &self.graph
    }

    /// Spacing of the search lattice.
    pub fn search_spacing(&self) -> f64 {
        self.graph.grid().spacing()
    }

    fn check_points(&self, pts: &[Point]) -> Result<()> {
        for p in pts {
            if !self.metric.domain.contains(*p) {
                return Err(GeodesicError::NotInDomain(p.x, p.y));
            }
        }
        Ok(())
    }

    fn refine_options(&self) -> RefineOptions {
        RefineOptions { h: self.opts.h, tol: self.opts.tol, max_sweeps: self.opts.max_sweeps, margin: 0.0 }
    }

    /// Refine `init` at `h` and `h/2`; the error estimate is the change in
    /// length plus the optimizer tolerance.
    pub fn refine_from(&self, init: &[Point], grid_length: Option<f64>) -> Result<GeodesicResult> {
        let mut levels = refine_levels(&self.metric, init, &self.refine_options(), 1)?;
        let fine = levels.pop().expect("two levels");
        let coarse = levels.pop().expect("two levels");
        let mut r = fine;
        r.error_estimate = (coarse.length - r.length).abs() + self.opts.tol * r.length;
        r.grid_length = grid_length;
        r.stencil_gap = self.graph.stencil().gap_factor();
        r.converged &= coarse.converged;
        r.sweeps += coarse.sweeps;
        Ok(r)
    }

    /// `d_ρ(a, b)` with its geodesic.
    pub fn distance(&self, a: Point, b: Point) -> Result<GeodesicResult> {
        self.check_points(&[a, b])?;
        if a == b {
            return Ok(GeodesicResult::zero(&self.metric, a));
        }
        let gap = self.graph.stencil().gap_factor();
        let cands = self.graph.paths(&self.metric, a, b, Target::Near { slack: 2.0 * gap })?;
        let mut best: Option<GeodesicResult> = None;
        let mut last_err = None;
        for c in cands {
            match self.refine_from(&c.vertices, Some(c.length)) {
                Ok(r) => {
                    if best.as_ref().map_or(true, |b| r.length < b.length) {
                        best = Some(r);
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
        best.ok_or_else(|| last_err.unwrap_or_else(|| GeodesicError::Unreachable("no candidate path".into())))
    }

    /// The geodesic from `a` to `b` in a homotopy class; one designated hole
    /// at most.
    pub fn geodesic_in_class(&self, a: Point, b: Point, class: &HomotopyClass) -> Result<GeodesicResult> {
        self.check_points(&[a, b])?;
        let holes = self.metric.holes().len();
        if class.0.len() != holes {
            return Err(GeodesicError::InvalidPath(format!(
                "class has {} windings but the domain has {holes} holes",
                class.0.len()
            )));
        }
        if holes >= 2 {
            return Err(GeodesicError::Unsupported(
                "homotopy classes with two or more holes are not separated by winding numbers".into(),
            ));
        }
        if holes == 0 {
            return self.distance(a, b);
        }
        let w = class.0[0];
        if w.abs() > self.opts.sheet_budget {
            return Err(GeodesicError::BudgetExceeded { winding: w, budget: self.opts.sheet_budget });
        }
        if a == b && w == 0 {
            return Ok(GeodesicResult::zero(&self.metric, a));
        }
        let mut paths = self.graph.paths(&self.metric, a, b, Target::Class(w))?;
        let c = paths.swap_remove(0);
        let r = self.refine_from(&c.vertices, Some(c.length))?;
        if r.class != *class {
            return Err(GeodesicError::Refinement(format!("class drifted to {:?}", r.class.0)));
        }
        Ok(r)
    }

    /// Refine two different initial paths in the same class and compare.
    pub fn uniqueness_probe(&self, a: Point, b: Point, class: Option<&HomotopyClass>) -> Result<UniquenessReport> {
        let first = match class {
            Some(c) => self.geodesic_in_class(a, b, c)?,
            None => self.distance(a, b)?,
        };
        let seed = first.path.vertices().to_vec();
        let bent = bend(&self.metric, &seed)
            .ok_or_else(|| GeodesicError::Refinement("no admissible bent initialization".into()))?;
        let second = self.refine_from(&bent, None)?;
        let dist = hausdorff(&first.path, &second.path);
        let tolerance = 10.0 * self.opts.h;
        Ok(UniquenessReport {
            lengths: [first.length, second.length],
            hausdorff: dist,
            tolerance,
            same_class: first.class == second.class,
            pass: dist <= tolerance && first.class == second.class,
        })
    }
}

/// Displace the interior of `path` sideways by a sine bump, shrinking the
/// amplitude until the detour is admissible and in the same class.
fn bend(metric: &ConformalMetric, path: &[Point]) -> Option<Vec<Point>> {
    if path.len() < 2 {
        return None;
    }
    let n = 16;
    let total: f64 = path.windows(2).map(|w| w[0].dist(w[1])).sum();
    let mut pts = Vec::with_capacity(n + 1);
    let mut k = 0;
    let mut acc = 0.0;
    for j in 0..=n {
        let s = total * j as f64 / n as f64;
        while k + 2 < path.len() && acc + path[k].dist(path[k + 1]) < s {
            acc += path[k].dist(path[k + 1]);
            k += 1;
        }
        let len = path[k].dist(path[k + 1]);
        let t = if len > 0.0 { ((s - acc) / len).clamp(0.0, 1.0) } else { 0.0 };
        pts.push(path[k].lerp(path[k + 1], t));
    }
    pts[0] = path[0];
    pts[n] = path[path.len() - 1];
    let class = super::HomotopyClass::of(path, metric.holes());
    let mut amp = 0.25 * total;
    for _ in 0..12 {
        let bent: Vec<Point> = (0..=n)
            .map(|j| {
                if j == 0 || j == n {
                    return pts[j];
                }
                let dir = pts[j + 1] - pts[j - 1];
                let nrm = dir.norm();
                if nrm == 0.0 {
                    return pts[j];
                }
                let s = j as f64 / n as f64;
                pts[j] + dir.perp() * (amp * (std::f64::consts::PI * s).sin() / nrm)
            })
            .collect();
        let ok = bent.windows(2).all(|w| w[0] != w[1] && metric.segment_inside(w[0], w[1], 0.0))
            && super::HomotopyClass::of(&bent, metric.holes()) == class;
        if ok {
            return Some(bent);
        }
        amp *= 0.5;
    }
    None
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct UniquenessReport {
    pub lengths: [f64; 2],
    pub hausdorff: f64,
    pub tolerance: f64,
    pub same_class: bool,
    pub pass: bool,
}

/// One-shot [`DistanceSolver::distance`].
pub fn distance(metric: &ConformalMetric, a: Point, b: Point, opts: &DistanceOptions) -> Result<GeodesicResult> {
    DistanceSolver::for_points(metric.clone(), opts.clone(), &[a, b])?.distance(a, b)
}

/// One-shot [`DistanceSolver::geodesic_in_class`].
pub fn geodesic_in_class(
    metric: &ConformalMetric,
    a: Point,
    b: Point,
    class: &HomotopyClass,
    opts: &DistanceOptions,
) -> Result<GeodesicResult> {
    DistanceSolver::for_points(metric.clone(), opts.clone(), &[a, b])?.geodesic_in_class(a, b, class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensitySpec;
    use crate::domain::PlaneDomain;

    fn cylinder() -> ConformalMetric {
        ConformalMetric::new(PlaneDomain::PuncturedPlane, DensitySpec::ModulusPower { alpha: -1.0 })
    }

    #[test]
    fn cylinder_distances() {
        let opts = DistanceOptions::with_h(1.0 / 64.0);
        let e = std::f64::consts::E;
        let r = distance(&cylinder(), Point::new(1.0, 0.0), Point::new(e, 0.0), &opts).unwrap();
        assert!((r.length - 1.0).abs() < 1e-4, "{}", r.length);
        let r = distance(&cylinder(), Point::new(1.0, 0.0), Point::new(-1.0, 0.0), &opts).unwrap();
        assert!((r.length - std::f64::consts::PI).abs() < 1e-3, "{}", r.length);
        assert!(r.length <= r.grid_length.unwrap());
    }

    #[test]
    fn quasihyperbolic_radial() {
        let m = ConformalMetric::new(PlaneDomain::unit_disk(), DensitySpec::quasihyperbolic());
        let r = distance(&m, Point::ORIGIN, Point::new(0.5, 0.0), &DistanceOptions::with_h(1.0 / 64.0)).unwrap();
        assert!((r.length - 2f64.ln()).abs() < 1e-5, "{}", r.length - 2f64.ln());
    }

    #[test]
    fn class_geodesics_on_cylinder() {
        let opts = DistanceOptions::with_h(1.0 / 64.0);
        let a = Point::new(1.0, 0.0);
        let r = geodesic_in_class(&cylinder(), a, a, &HomotopyClass(vec![1]), &opts).unwrap();
        assert!((r.length - std::f64::consts::TAU).abs() < 1e-3, "{}", r.length);
        let z = geodesic_in_class(&cylinder(), a, a, &HomotopyClass(vec![0]), &opts).unwrap();
        assert_eq!(z.length, 0.0);
        let e = std::f64::consts::E;
        let r = geodesic_in_class(&cylinder(), a, Point::new(e, 0.0), &HomotopyClass(vec![1]), &opts).unwrap();
        let expect = (1.0 + 4.0 * std::f64::consts::PI.powi(2)).sqrt();
        assert!((r.length - expect).abs() < 1e-3, "{}", r.length - expect);
    }

    #[test]
    fn outside_point_rejected() {
        let m = ConformalMetric::new(PlaneDomain::unit_disk(), DensitySpec::constant());
        let err = distance(&m, Point::ORIGIN, Point::new(2.0, 0.0), &DistanceOptions::default()).unwrap_err();
        assert_eq!(err.to_string(), "point not in domain: (2, 0)");
    }

    #[test]
    fn two_holes_unsupported() {
        let dom = PlaneDomain::punctured(PlaneDomain::FullPlane, vec![Point::ORIGIN, Point::new(2.0, 0.0)]).unwrap();
        let m = ConformalMetric::new(dom, DensitySpec::constant());
        let err = geodesic_in_class(
            &m,
            Point::new(1.0, 1.0),
            Point::new(1.0, -1.0),
            &HomotopyClass(vec![0, 0]),
            &DistanceOptions::with_h(0.125),
        )
        .unwrap_err();
        assert!(matches!(err, GeodesicError::Unsupported(_)));
    }
}
