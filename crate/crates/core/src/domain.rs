//! Plane domains and the boundary distance `δ(z) = dist(z, ∂Ω)`.
//!
//! Every domain answers three queries: membership, boundary distance and
//! whether a straight segment stays inside at a given clearance. Punctures
//! are boundary components of radius zero, so on the punctured plane
//! `δ(z) = |z|`.

use crate::point::{point_segment_distance, segment_segment_distance, segments_intersect, Point};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error("unbounded: δ undefined")]
    Unbounded,
    #[error("unbounded domain requires a bounding box")]
    NeedsBoundingBox,
    #[error("invalid domain: {0}")]
    Invalid(String),
    #[error("grid spacing must be positive, got {0}")]
    BadSpacing(f64),
    #[error("margin must be nonnegative, got {0}")]
    BadMargin(f64),
    #[error("margin too large: empty grid mask")]
    EmptyMask,
    #[error("point not in domain: ({0}, {1})")]
    NotInDomain(f64, f64),
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BBox {
    pub min: Point,
    pub max: Point,
}

impl BBox {
    pub fn new(min: Point, max: Point) -> Self {
        BBox {
            min: Point::new(min.x.min(max.x), min.y.min(max.y)),
            max: Point::new(min.x.max(max.x), min.y.max(max.y)),
        }
    }

    pub fn around(points: &[Point]) -> Option<Self> {
        let first = *points.first()?;
        let mut b = BBox { min: first, max: first };
        for p in &points[1..] {
            b.include(*p);
        }
        Some(b)
    }

    pub fn include(&mut self, p: Point) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    pub fn padded(self, pad: f64) -> Self {
        BBox {
            min: Point::new(self.min.x - pad, self.min.y - pad),
            max: Point::new(self.max.x + pad, self.max.y + pad),
        }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn intersect(&self, o: &BBox) -> Option<BBox> {
        let min = Point::new(self.min.x.max(o.min.x), self.min.y.max(o.min.y));
        let max = Point::new(self.max.x.min(o.max.x), self.max.y.min(o.max.y));
        (min.x <= max.x && min.y <= max.y).then_some(BBox { min, max })
    }
}

/// Polygonal region: one outer ring and zero or more hole rings.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonRegion {
    rings: Vec<Vec<Point>>,
    edges: Vec<(Point, Point)>,
    index: Option<EdgeIndex>,
}

/// Bucket index used once a polygon has more than this many edges.
pub const EDGE_INDEX_THRESHOLD: usize = 10_000;

impl PolygonRegion {
    pub fn outer(&self) -> &[Point] {
        &self.rings[0]
    }

    pub fn holes(&self) -> &[Vec<Point>] {
        &self.rings[1..]
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_indexed(&self) -> bool {
        self.index.is_some()
    }

    fn parity_inside(&self, p: Point) -> bool {
        self.rings.iter().filter(|r| ring_contains(r, p)).count() % 2 == 1
    }

    fn boundary_distance(&self, p: Point) -> f64 {
        match &self.index {
            Some(index) => index.nearest(&self.edges, p),
            None => self
                .edges
                .iter()
                .map(|&(a, b)| point_segment_distance(p, a, b))
                .fold(f64::INFINITY, f64::min),
        }
    }

    fn segment_clear(&self, p: Point, q: Point, margin: f64) -> bool {
        let lo = Point::new(p.x.min(q.x) - margin, p.y.min(q.y) - margin);
        let hi = Point::new(p.x.max(q.x) + margin, p.y.max(q.y) + margin);
        self.edges.iter().all(|&(a, b)| {
            if a.x.max(b.x) < lo.x || a.x.min(b.x) > hi.x || a.y.max(b.y) < lo.y || a.y.min(b.y) > hi.y {
                return true;
            }
            if margin == 0.0 {
                !segments_intersect(p, q, a, b)
            } else {
                segment_segment_distance(p, q, a, b) > margin
            }
        })
    }
}

/// Uniform bucket grid over polygon edges for nearest-edge queries.
#[derive(Debug, Clone, PartialEq)]
struct EdgeIndex {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

impl EdgeIndex {
    fn build(edges: &[(Point, Point)]) -> Self {
        let mut bb = BBox { min: edges[0].0, max: edges[0].0 };
        for &(a, b) in edges {
            bb.include(a);
            bb.include(b);
        }
        let side = (edges.len() as f64).sqrt().ceil().max(1.0);
        let cell = (bb.width().max(bb.height()) / side).max(f64::MIN_POSITIVE);
        let nx = (bb.width() / cell).floor() as usize + 1;
        let ny = (bb.height() / cell).floor() as usize + 1;
        let mut cells = vec![Vec::new(); nx * ny];
        for (k, &(a, b)) in edges.iter().enumerate() {
            let i0 = ((a.x.min(b.x) - bb.min.x) / cell).floor() as usize;
            let i1 = (((a.x.max(b.x) - bb.min.x) / cell).floor() as usize).min(nx - 1);
            let j0 = ((a.y.min(b.y) - bb.min.y) / cell).floor() as usize;
            let j1 = (((a.y.max(b.y) - bb.min.y) / cell).floor() as usize).min(ny - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    cells[j * nx + i].push(k as u32);
                }
            }
        }
        EdgeIndex { origin: bb.min, cell, nx, ny, cells }
    }

    fn nearest(&self, edges: &[(Point, Point)], p: Point) -> f64 {
        let fi = ((p.x - self.origin.x) / self.cell).floor();
        let fj = ((p.y - self.origin.y) / self.cell).floor();
        let ci = fi.clamp(0.0, (self.nx - 1) as f64) as i64;
        let cj = fj.clamp(0.0, (self.ny - 1) as f64) as i64;
        let mut best = f64::INFINITY;
        let max_ring = self.nx.max(self.ny) as i64;
        for k in 0..=max_ring {
            for j in (cj - k)..=(cj + k) {
                for i in (ci - k)..=(ci + k) {
                    if (j - cj).abs() != k && (i - ci).abs() != k {
                        continue;
                    }
                    if i < 0 || j < 0 || i >= self.nx as i64 || j >= self.ny as i64 {
                        continue;
                    }
                    for &e in &self.cells[j as usize * self.nx + i as usize] {
                        let (a, b) = edges[e as usize];
                        best = best.min(point_segment_distance(p, a, b));
                    }
                }
            }
            // Every unvisited cell lies outside the square of rings 0..=k.
            let x_lo = self.origin.x + (ci - k) as f64 * self.cell;
            let x_hi = self.origin.x + (ci + k + 1) as f64 * self.cell;
            let y_lo = self.origin.y + (cj - k) as f64 * self.cell;
            let y_hi = self.origin.y + (cj + k + 1) as f64 * self.cell;
            let reach = (p.x - x_lo).min(x_hi - p.x).min(p.y - y_lo).min(y_hi - p.y).max(0.0);
            if best <= reach {
                break;
            }
        }
        best
    }
}

fn ring_contains(ring: &[Point], p: Point) -> bool {
    let mut inside = false;
    let n = ring.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn ring_edges(ring: &[Point]) -> impl Iterator<Item = (Point, Point)> + '_ {
    (0..ring.len()).map(move |i| (ring[i], ring[(i + 1) % ring.len()]))
}

fn validate_ring(ring: &[Point], what: &str) -> Result<(), DomainError> {
    if ring.len() < 3 {
        return Err(DomainError::Invalid(format!("{what} needs at least 3 vertices")));
    }
    if ring.iter().any(|p| !p.is_finite()) {
        return Err(DomainError::Invalid(format!("{what} has a non-finite vertex")));
    }
    let edges: Vec<_> = ring_edges(ring).collect();
    if edges.iter().any(|(a, b)| a == b) {
        return Err(DomainError::Invalid(format!("{what} has a repeated vertex")));
    }
    let n = edges.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            let (a, b) = edges[i];
            let (c, d) = edges[j];
            if adjacent {
                // Adjacent edges share exactly one vertex; reject fold-backs.
                let shared = if j == i + 1 { b } else { a };
                let (u, v) = if j == i + 1 { (a - shared, d - shared) } else { (b - shared, c - shared) };
                if u.cross(v) == 0.0 && u.dot(v) > 0.0 {
                    return Err(DomainError::Invalid(format!("{what} folds back on itself")));
                }
            } else if segments_intersect(a, b, c, d) {
                return Err(DomainError::Invalid(format!("{what} is not simple")));
            }
        }
    }
    Ok(())
}

fn rings_cross(r1: &[Point], r2: &[Point]) -> bool {
    ring_edges(r1).any(|(a, b)| ring_edges(r2).any(|(c, d)| segments_intersect(a, b, c, d)))
}

/// A point strictly inside a simple ring, found along a horizontal scanline.
fn ring_interior_point(ring: &[Point]) -> Point {
    let bb = BBox::around(ring).expect("ring is nonempty");
    let mut best = (f64::NEG_INFINITY, bb.min);
    for k in 1..16 {
        let y = bb.min.y + bb.height() * (k as f64 / 16.0 + 1e-7);
        let mut xs: Vec<f64> = ring_edges(ring)
            .filter(|(a, b)| (a.y > y) != (b.y > y))
            .map(|(a, b)| a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x))
            .collect();
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let p = Point::new(0.5 * (pair[0] + pair[1]), y);
            let clear = ring_edges(ring)
                .map(|(a, b)| point_segment_distance(p, a, b))
                .fold(f64::INFINITY, f64::min);
            if clear > best.0 {
                best = (clear, p);
            }
        }
    }
    best.1
}

/// A plane domain `Ω ⊂ ℂ`. Use the checked constructors; the variants are
/// public so callers can match on them.
#[derive(Debug, Clone, PartialEq)]
pub enum PlaneDomain {
    FullPlane,
    /// `ℂ_* = ℂ \ {0}`.
    PuncturedPlane,
    Disk { center: Point, radius: f64 },
    /// `{z : ⟨z, normal⟩ > offset}` with a unit inward normal.
    HalfPlane { normal: Point, offset: f64 },
    /// Vertical strip `{lo < Re z < hi}`; the exp-cover of an annulus.
    Strip { lo: f64, hi: f64 },
    Annulus { center: Point, r_in: f64, r_out: f64 },
    Polygon(PolygonRegion),
    Punctured { base: Box<PlaneDomain>, punctures: Vec<Point> },
}

impl PlaneDomain {
    pub fn disk(center: Point, radius: f64) -> Result<Self, DomainError> {
        if !(radius > 0.0 && radius.is_finite()) || !center.is_finite() {
            return Err(DomainError::Invalid(format!("disk radius must be positive, got {radius}")));
        }
        Ok(PlaneDomain::Disk { center, radius })
    }

    pub fn unit_disk() -> Self {
        PlaneDomain::Disk { center: Point::ORIGIN, radius: 1.0 }
    }

    pub fn half_plane(normal: Point, offset: f64) -> Result<Self, DomainError> {
        let n = normal.norm();
        if !(n > 0.0 && n.is_finite()) || !offset.is_finite() {
            return Err(DomainError::Invalid("half-plane normal must be nonzero".into()));
        }
        Ok(PlaneDomain::HalfPlane { normal: normal * (1.0 / n), offset: offset / n })
    }

    pub fn strip(lo: f64, hi: f64) -> Result<Self, DomainError> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(DomainError::Invalid(format!("strip needs lo < hi, got {lo}, {hi}")));
        }
        Ok(PlaneDomain::Strip { lo, hi })
    }

    pub fn annulus(center: Point, r_in: f64, r_out: f64) -> Result<Self, DomainError> {
        if !(0.0 < r_in && r_in < r_out && r_out.is_finite()) || !center.is_finite() {
            return Err(DomainError::Invalid(format!(
                "annulus needs 0 < r_in < r_out, got {r_in}, {r_out}"
            )));
        }
        Ok(PlaneDomain::Annulus { center, r_in, r_out })
    }

    pub fn polygon(outer: Vec<Point>, holes: Vec<Vec<Point>>) -> Result<Self, DomainError> {
        validate_ring(&outer, "outer boundary")?;
        for (k, hole) in holes.iter().enumerate() {
            let what = format!("hole {k}");
            validate_ring(hole, &what)?;
            if !hole.iter().all(|&p| ring_contains(&outer, p)) || rings_cross(&outer, hole) {
                return Err(DomainError::Invalid(format!("{what} is not strictly inside the outer boundary")));
            }
            for (l, other) in holes.iter().enumerate().take(k) {
                if rings_cross(hole, other)
                    || ring_contains(other, hole[0])
                    || ring_contains(hole, other[0])
                {
                    return Err(DomainError::Invalid(format!("holes {l} and {k} overlap")));
                }
            }
        }
        let mut rings = vec![outer];
        rings.extend(holes);
        let edges: Vec<_> = rings.iter().flat_map(|r| ring_edges(r)).collect();
        let index = (edges.len() > EDGE_INDEX_THRESHOLD).then(|| EdgeIndex::build(&edges));
        Ok(PlaneDomain::Polygon(PolygonRegion { rings, edges, index }))
    }

    /// Axis-aligned rectangle as a polygon.
    pub fn rectangle(min: Point, max: Point) -> Result<Self, DomainError> {
        PlaneDomain::polygon(
            vec![min, Point::new(max.x, min.y), max, Point::new(min.x, max.y)],
            vec![],
        )
    }

    pub fn unit_square() -> Self {
        PlaneDomain::rectangle(Point::ORIGIN, Point::new(1.0, 1.0)).expect("unit square is valid")
    }

    pub fn punctured(base: PlaneDomain, punctures: Vec<Point>) -> Result<Self, DomainError> {
        for p in &punctures {
            if !base.contains(*p) {
                return Err(DomainError::Invalid(format!(
                    "puncture ({}, {}) is not inside the base domain",
                    p.x, p.y
                )));
            }
        }
        Ok(PlaneDomain::Punctured { base: Box::new(base), punctures })
    }

    /// Boundary distance `δ(p)`; defined for every `p ∈ ℂ`.
    pub fn boundary_distance(&self, p: Point) -> Result<f64, DomainError> {
        match self {
            PlaneDomain::FullPlane => Err(DomainError::Unbounded),
            _ => Ok(self.clearance(p)),
        }
    }

    /// Like [`boundary_distance`](Self::boundary_distance), with `+∞` for `ℂ`.
    #[inline]
    pub fn clearance(&self, p: Point) -> f64 {
        match self {
            PlaneDomain::FullPlane => f64::INFINITY,
            PlaneDomain::PuncturedPlane => p.norm(),
            PlaneDomain::Disk { center, radius } => (radius - p.dist(*center)).abs(),
            PlaneDomain::HalfPlane { normal, offset } => (p.dot(*normal) - offset).abs(),
            PlaneDomain::Strip { lo, hi } => (p.x - lo).abs().min((hi - p.x).abs()),
            PlaneDomain::Annulus { center, r_in, r_out } => {
                let r = p.dist(*center);
                (r - r_in).abs().min((r_out - r).abs())
            }
            PlaneDomain::Polygon(poly) => poly.boundary_distance(p),
            PlaneDomain::Punctured { base, punctures } => punctures
                .iter()
                .map(|q| p.dist(*q))
                .fold(base.clearance(p), f64::min),
        }
    }

    /// Interior membership; punctures are excluded by exact equality.
    pub fn contains(&self, p: Point) -> bool {
        self.contains_with(p, 0.0)
    }

    /// Membership with punctures widened to closed disks of `exclusion` radius.
    pub fn contains_with(&self, p: Point, exclusion: f64) -> bool {
        if !p.is_finite() {
            return false;
        }
        match self {
            PlaneDomain::FullPlane => true,
            PlaneDomain::PuncturedPlane => p.norm() > exclusion,
            PlaneDomain::Disk { center, radius } => p.dist(*center) < *radius,
            PlaneDomain::HalfPlane { normal, offset } => p.dot(*normal) > *offset,
            PlaneDomain::Strip { lo, hi } => *lo < p.x && p.x < *hi,
            PlaneDomain::Annulus { center, r_in, r_out } => {
                let r = p.dist(*center);
                *r_in < r && r < *r_out
            }
            PlaneDomain::Polygon(poly) => poly.parity_inside(p) && poly.boundary_distance(p) > 0.0,
            PlaneDomain::Punctured { base, punctures } => {
                base.contains_with(p, exclusion) && punctures.iter().all(|q| p.dist(*q) > exclusion)
            }
        }
    }

    /// True when the closed segment `[p, q]` lies in `{z ∈ Ω : δ(z) > margin}`.
    pub fn segment_inside(&self, p: Point, q: Point, margin: f64) -> bool {
        match self {
            PlaneDomain::FullPlane => p.is_finite() && q.is_finite(),
            PlaneDomain::PuncturedPlane => point_segment_distance(Point::ORIGIN, p, q) > margin,
            // Convex cases: the clearance set is convex too.
            PlaneDomain::Disk { .. } | PlaneDomain::HalfPlane { .. } | PlaneDomain::Strip { .. } => {
                self.contains(p) && self.contains(q) && self.clearance(p) > margin && self.clearance(q) > margin
            }
            PlaneDomain::Annulus { center, r_in, r_out } => {
                p.dist(*center) < r_out - margin
                    && q.dist(*center) < r_out - margin
                    && point_segment_distance(*center, p, q) > r_in + margin
            }
            PlaneDomain::Polygon(poly) => {
                poly.parity_inside(p)
                    && poly.parity_inside(q)
                    && poly.segment_clear(p, q, margin)
                    && (margin == 0.0 || (poly.boundary_distance(p) > margin && poly.boundary_distance(q) > margin))
            }
            PlaneDomain::Punctured { base, punctures } => {
                base.segment_inside(p, q, margin)
                    && punctures.iter().all(|c| point_segment_distance(*c, p, q) > margin)
            }
        }
    }

    /// Bounding box of a bounded domain.
    pub fn bbox(&self) -> Option<BBox> {
        match self {
            PlaneDomain::Disk { center, radius } | PlaneDomain::Annulus { center, r_out: radius, .. } => {
                Some(BBox::new(
                    Point::new(center.x - radius, center.y - radius),
                    Point::new(center.x + radius, center.y + radius),
                ))
            }
            PlaneDomain::Polygon(poly) => BBox::around(poly.outer()),
            PlaneDomain::Punctured { base, .. } => base.bbox(),
            _ => None,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.bbox().is_some()
    }

    /// One representative point per hole or puncture, in a fixed order.
    /// These carry the winding vector of a homotopy class.
    pub fn holes(&self) -> Vec<Point> {
        match self {
            PlaneDomain::PuncturedPlane => vec![Point::ORIGIN],
            PlaneDomain::Annulus { center, .. } => vec![*center],
            PlaneDomain::Polygon(poly) => poly.holes().iter().map(|h| ring_interior_point(h)).collect(),
            PlaneDomain::Punctured { base, punctures } => {
                let mut h = base.holes();
                h.extend(punctures.iter().copied());
                h
            }
            _ => Vec::new(),
        }
    }

    /// A well-inside point used as the default anchor.
    pub fn reference_point(&self) -> Point {
        match self {
            PlaneDomain::FullPlane => Point::ORIGIN,
            PlaneDomain::PuncturedPlane => Point::new(1.0, 0.0),
            PlaneDomain::Disk { center, .. } => *center,
            PlaneDomain::HalfPlane { normal, offset } => *normal * (offset + 1.0),
            PlaneDomain::Strip { lo, hi } => Point::new(0.5 * (lo + hi), 0.0),
            PlaneDomain::Annulus { center, r_in, r_out } => *center + Point::new(0.5 * (r_in + r_out), 0.0),
            PlaneDomain::Punctured { base, punctures } if !base.is_bounded() => {
                let r = base.reference_point();
                let clear = |p: Point| punctures.iter().map(|q| p.dist(*q)).fold(f64::INFINITY, f64::min);
                (0..8)
                    .map(|k| r + Point::polar(1.0, std::f64::consts::FRAC_PI_4 * k as f64))
                    .chain(std::iter::once(r))
                    .filter(|p| base.contains(*p))
                    .fold(r, |best, p| if clear(p) > clear(best) { p } else { best })
            }
            PlaneDomain::Polygon(_) | PlaneDomain::Punctured { .. } => self.deepest_sample(),
        }
    }

    fn deepest_sample(&self) -> Point {
        let bb = self.bbox().expect("bounded domain");
        let mut best = (f64::NEG_INFINITY, bb.min);
        let n = 64;
        for j in 0..=n {
            for i in 0..=n {
                let p = Point::new(
                    bb.min.x + bb.width() * (i as f64 + 0.5) / (n as f64 + 1.0),
                    bb.min.y + bb.height() * (j as f64 + 0.5) / (n as f64 + 1.0),
                );
                if self.contains(p) {
                    let c = self.clearance(p);
                    if c > best.0 {
                        best = (c, p);
                    }
                }
            }
        }
        best.1
    }
}
