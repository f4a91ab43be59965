//! Fixed-viewport SVG overlays: domain outline, polylines, markers.

use std::fmt::Write;

use conformal_core::{BBox, PlaneDomain, Point};

const SIZE: f64 = 800.0;
const PAD: f64 = 20.0;

pub struct Figure {
    view: BBox,
    scale: f64,
    body: String,
}

impl Figure {
    /// Square viewport around `view`, padded to keep aspect ratio.
    pub fn new(view: BBox) -> Self {
        let side = view.width().max(view.height()).max(1e-9);
        let c = view.min.lerp(view.max, 0.5);
        let half = Point::new(0.5 * side, 0.5 * side);
        let view = BBox::new(c - half, c + half);
        Figure { view, scale: (SIZE - 2.0 * PAD) / side, body: String::new() }
    }

    /// Viewport for `domain` that also holds `pts`.
    pub fn around(domain: &PlaneDomain, pts: &[Point]) -> Self {
        let mut bb = match (domain.bbox(), BBox::around(pts)) {
            (Some(d), _) => d,
            (None, Some(p)) => p,
            (None, None) => BBox::new(Point::new(-1.0, -1.0), Point::new(1.0, 1.0)),
        };
        for p in pts {
            bb.include(*p);
        }
        for h in domain.holes() {
            bb.include(h);
        }
        let pad = 0.05 * bb.width().max(bb.height()).max(1e-3);
        Figure::new(bb.padded(pad))
    }

    fn map(&self, p: Point) -> (f64, f64) {
        (PAD + (p.x - self.view.min.x) * self.scale, SIZE - PAD - (p.y - self.view.min.y) * self.scale)
    }

    pub fn circle(&mut self, c: Point, r: f64, stroke: &str) {
        let (x, y) = self.map(c);
        let _ = writeln!(
            self.body,
            r#"<circle cx="{x:.3}" cy="{y:.3}" r="{:.3}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#,
            r * self.scale
        );
    }

    pub fn polyline(&mut self, pts: &[Point], stroke: &str, closed: bool) {
        let mut d = String::new();
        for (k, p) in pts.iter().enumerate() {
            let (x, y) = self.map(*p);
            let _ = write!(d, "{}{x:.3},{y:.3}", if k == 0 { "" } else { " " });
        }
        let tag = if closed { "polygon" } else { "polyline" };
        let _ = writeln!(self.body, r#"<{tag} points="{d}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#);
    }

    pub fn marker(&mut self, p: Point, fill: &str) {
        let (x, y) = self.map(p);
        let _ = writeln!(self.body, r#"<circle cx="{x:.3}" cy="{y:.3}" r="4" fill="{fill}"/>"#);
    }

    pub fn cross(&mut self, p: Point, stroke: &str) {
        let (x, y) = self.map(p);
        let _ = writeln!(
            self.body,
            r#"<path d="M{:.3},{:.3}L{:.3},{:.3}M{:.3},{:.3}L{:.3},{:.3}" stroke="{stroke}" stroke-width="1.5"/>"#,
            x - 5.0,
            y - 5.0,
            x + 5.0,
            y + 5.0,
            x - 5.0,
            y + 5.0,
            x + 5.0,
            y - 5.0
        );
    }

    /// Boundary of `domain`, clipped to the viewport for unbounded pieces.
    pub fn domain(&mut self, domain: &PlaneDomain) {
        let ink = "#555";
        match domain {
            PlaneDomain::FullPlane => {}
            PlaneDomain::PuncturedPlane => self.cross(Point::ORIGIN, ink),
            PlaneDomain::Disk { center, radius } => self.circle(*center, *radius, ink),
            PlaneDomain::Annulus { center, r_in, r_out } => {
                self.circle(*center, *r_in, ink);
                self.circle(*center, *r_out, ink);
            }
            PlaneDomain::HalfPlane { normal, offset } => {
                let base = *normal * *offset;
                let span = 2.0 * (self.view.width() + base.dist(self.view.min) + base.dist(self.view.max));
                let dir = normal.perp();
                self.polyline(&[base - dir * span, base + dir * span], ink, false);
            }
            PlaneDomain::Strip { lo, hi } => {
                let (y0, y1) = (self.view.min.y - 1.0, self.view.max.y + 1.0);
                for x in [*lo, *hi] {
                    self.polyline(&[Point::new(x, y0), Point::new(x, y1)], ink, false);
                }
            }
            PlaneDomain::Polygon(poly) => {
                self.polyline(poly.outer(), ink, true);
                for h in poly.holes() {
                    self.polyline(h, ink, true);
                }
            }
            PlaneDomain::Punctured { base, punctures } => {
                self.domain(base);
                for p in punctures {
                    self.cross(*p, ink);
                }
            }
        }
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
             <rect width=\"{SIZE}\" height=\"{SIZE}\" fill=\"white\"/>\n{}</svg>\n",
            self.body
        )
    }
}
