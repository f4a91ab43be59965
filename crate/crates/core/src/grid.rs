//! Lattice samplings of a domain restricted to `{δ > margin}`.

use std::collections::VecDeque;

use crate::domain::{BBox, DomainError, PlaneDomain};
use crate::point::Point;

/// Options for [`build_grid`].
#[derive(Debug, Clone, Copy, Default)]
pub struct GridOptions {
    /// Keep only the mask component nearest this point (default: the
    /// domain's reference point).
    pub anchor: Option<Point>,
    /// Required for unbounded domains; clips bounded ones.
    pub bbox: Option<BBox>,
    /// Lattice origin; nodes sit at `origin + (i h, j h)`.
    pub origin: Point,
}

/// A masked rectangular lattice carrying one value per node.
///
/// Every masked-in node has `δ(node) > margin` and the mask is a single
/// 4-connected component.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    origin: Point,
    h: f64,
    i0: i64,
    j0: i64,
    nx: usize,
    ny: usize,
    margin: f64,
    mask: Vec<bool>,
    clearance: Vec<f64>,
    values: Vec<f64>,
    anchor: usize,
}

/// Sample `domain` on the lattice of spacing `h`, keeping the component of
/// `{z ∈ Ω : δ(z) > m}` that holds the anchor.
pub fn build_grid(domain: &PlaneDomain, h: f64, m: f64, opts: GridOptions) -> Result<Grid, DomainError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(DomainError::BadSpacing(h));
    }
    if !(m >= 0.0) {
        return Err(DomainError::BadMargin(m));
    }
    let bbox = match (domain.bbox(), opts.bbox) {
        (Some(d), Some(user)) => d.intersect(&user).ok_or(DomainError::EmptyMask)?,
        (Some(d), None) => d,
        (None, Some(user)) => user,
        (None, None) => return Err(DomainError::NeedsBoundingBox),
    };
    let o = opts.origin;
    let i0 = ((bbox.min.x - o.x) / h).ceil() as i64;
    let i1 = ((bbox.max.x - o.x) / h).floor() as i64;
    let j0 = ((bbox.min.y - o.y) / h).ceil() as i64;
    let j1 = ((bbox.max.y - o.y) / h).floor() as i64;
    if i1 < i0 || j1 < j0 {
        return Err(DomainError::EmptyMask);
    }
    let nx = (i1 - i0 + 1) as usize;
    let ny = (j1 - j0 + 1) as usize;
    let mut grid = Grid {
        origin: o,
        h,
        i0,
        j0,
        nx,
        ny,
        margin: m,
        mask: vec![false; nx * ny],
        clearance: vec![0.0; nx * ny],
        values: vec![0.0; nx * ny],
        anchor: 0,
    };
    for idx in 0..nx * ny {
        let p = grid.point(idx);
        if domain.contains(p) {
            let c = domain.clearance(p);
            grid.clearance[idx] = c;
            grid.mask[idx] = c > m;
        }
    }
    let anchor = opts.anchor.unwrap_or_else(|| domain.reference_point());
    grid.restrict_to_component(anchor)?;
    Ok(grid)
}

impl Grid {
    #[inline]
    pub fn spacing(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn margin(&self) -> f64 {
        self.margin
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    #[inline]
    pub fn point(&self, idx: usize) -> Point {
        let (i, j) = self.coords(idx);
        Point::new(
            self.origin.x + (self.i0 + i as i64) as f64 * self.h,
            self.origin.y + (self.j0 + j as i64) as f64 * self.h,
        )
    }

    /// Neighbour at integer offset, if it is on the lattice.
    #[inline]
    pub fn offset(&self, idx: usize, di: i64, dj: i64) -> Option<usize> {
        let (i, j) = self.coords(idx);
        let ni = i as i64 + di;
        let nj = j as i64 + dj;
        if ni < 0 || nj < 0 || ni >= self.nx as i64 || nj >= self.ny as i64 {
            None
        } else {
            Some(nj as usize * self.nx + ni as usize)
        }
    }

    #[inline]
    pub fn is_masked(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    /// Boundary distance recorded at build time.
    #[inline]
    pub fn clearance(&self, idx: usize) -> f64 {
        self.clearance[idx]
    }

    #[inline]
    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn set_value(&mut self, idx: usize, v: f64) {
        self.values[idx] = v;
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn masked(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&k| self.mask[k])
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Same lattice and mask, values from `f(point)` at masked nodes.
    pub fn map_points<F: FnMut(Point) -> f64>(&self, mut f: F) -> Grid {
        let mut g = self.clone();
        for idx in 0..g.len() {
            g.values[idx] = if g.mask[idx] { f(g.point(idx)) } else { 0.0 };
        }
        g
    }

    /// Same lattice and mask, values transformed node by node.
    pub fn map_values<F: FnMut(f64) -> f64>(&self, mut f: F) -> Grid {
        let mut g = self.clone();
        for idx in 0..g.len() {
            if g.mask[idx] {
                g.values[idx] = f(g.values[idx]);
            }
        }
        g
    }

    /// Try each masked node with `f`; the first error aborts.
    pub fn try_map_points<E, F: FnMut(Point) -> Result<f64, E>>(&self, mut f: F) -> Result<Grid, E> {
        let mut g = self.clone();
        for idx in 0..g.len() {
            g.values[idx] = if g.mask[idx] { f(g.point(idx))? } else { 0.0 };
        }
        Ok(g)
    }

    /// Copy with a narrower mask: nodes failing `keep` are dropped and the
    /// result is cut down to the component of the old anchor.
    pub fn submask<F: Fn(usize) -> bool>(&self, new_margin: f64, keep: F) -> Result<Grid, DomainError> {
        let mut g = self.clone();
        for idx in 0..g.len() {
            g.mask[idx] = g.mask[idx] && keep(idx);
        }
        g.margin = new_margin;
        let anchor = self.point(self.anchor);
        g.restrict_to_component(anchor)?;
        Ok(g)
    }

    /// Copy keeping only masked nodes that pass `keep`, without the
    /// component restriction of [`submask`](Self::submask).
    pub fn filtered<F: Fn(usize) -> bool>(&self, keep: F) -> Result<Grid, DomainError> {
        let mut g = self.clone();
        for idx in 0..g.len() {
            g.mask[idx] = g.mask[idx] && keep(idx);
        }
        if !g.mask[g.anchor] {
            let first = g.masked().next().ok_or(DomainError::EmptyMask)?;
            g.anchor = first;
        }
        Ok(g)
    }

    /// Nearest masked node to `p` by Euclidean distance.
    pub fn nearest_masked(&self, p: Point) -> Option<usize> {
        let fi = ((p.x - self.origin.x) / self.h).round() as i64 - self.i0;
        let fj = ((p.y - self.origin.y) / self.h).round() as i64 - self.j0;
        let ci = fi.clamp(0, self.nx as i64 - 1);
        let cj = fj.clamp(0, self.ny as i64 - 1);
        let mut best: Option<(f64, usize)> = None;
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
                    let idx = j as usize * self.nx + i as usize;
                    if self.mask[idx] {
                        let d = self.point(idx).dist(p);
                        if best.map_or(true, |(bd, bi)| d < bd || (d == bd && idx < bi)) {
                            best = Some((d, idx));
                        }
                    }
                }
            }
            if let Some((bd, _)) = best {
                // Ring k+1 is at least (k + 1) h from the centre cell's node.
                let centre = self.point(cj as usize * self.nx + ci as usize);
                let slack = p.dist(centre);
                if bd <= (k as f64 + 1.0) * self.h - slack {
                    break;
                }
            }
        }
        best.map(|(_, i)| i)
    }

    /// Bilinear interpolation of node values; all four corners must be masked.
    pub fn interpolate(&self, p: Point) -> Option<f64> {
        let fx = (p.x - self.origin.x) / self.h - self.i0 as f64;
        let fy = (p.y - self.origin.y) / self.h - self.j0 as f64;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let i = (fx.floor() as usize).min(self.nx.saturating_sub(2));
        let j = (fy.floor() as usize).min(self.ny.saturating_sub(2));
        if i + 1 >= self.nx || j + 1 >= self.ny {
            return None;
        }
        let tx = fx - i as f64;
        let ty = fy - j as f64;
        if tx > 1.0 || ty > 1.0 {
            return None;
        }
        let c = [self.index(i, j), self.index(i + 1, j), self.index(i, j + 1), self.index(i + 1, j + 1)];
        if !c.iter().all(|&k| self.mask[k]) {
            return None;
        }
        let v = |k: usize| self.values[c[k]];
        Some((1.0 - ty) * ((1.0 - tx) * v(0) + tx * v(1)) + ty * ((1.0 - tx) * v(2) + tx * v(3)))
    }

    /// Build a grid directly from scattered lattice samples (e.g. a CSV of
    /// `x, y, value` rows). Points must lie on a common lattice of spacing `h`.
    pub fn from_samples(samples: &[(Point, f64)], h: f64) -> Result<Grid, DomainError> {
        if !(h > 0.0) {
            return Err(DomainError::BadSpacing(h));
        }
        let first = samples.first().ok_or(DomainError::EmptyMask)?.0;
        let origin = first;
        let key = |p: Point| {
            (((p.x - origin.x) / h).round() as i64, ((p.y - origin.y) / h).round() as i64)
        };
        let (mut imin, mut imax, mut jmin, mut jmax) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
        for (p, _) in samples {
            let (i, j) = key(*p);
            let snapped = Point::new(origin.x + i as f64 * h, origin.y + j as f64 * h);
            if snapped.dist(*p) > 1e-6 * h {
                return Err(DomainError::Invalid(format!(
                    "sample ({}, {}) is off the lattice of spacing {h}",
                    p.x, p.y
                )));
            }
            imin = imin.min(i);
            imax = imax.max(i);
            jmin = jmin.min(j);
            jmax = jmax.max(j);
        }
        let nx = (imax - imin + 1) as usize;
        let ny = (jmax - jmin + 1) as usize;
        let mut grid = Grid {
            origin,
            h,
            i0: imin,
            j0: jmin,
            nx,
            ny,
            margin: 0.0,
            mask: vec![false; nx * ny],
            clearance: vec![f64::INFINITY; nx * ny],
            values: vec![0.0; nx * ny],
            anchor: 0,
        };
        for (p, v) in samples {
            let (i, j) = key(*p);
            let idx = grid.index((i - imin) as usize, (j - jmin) as usize);
            grid.mask[idx] = true;
            grid.values[idx] = *v;
        }
        let first = grid.masked().next().unwrap_or(0);
        grid.anchor = first;
        Ok(grid)
    }

    fn restrict_to_component(&mut self, anchor: Point) -> Result<(), DomainError> {
        let start = self.nearest_masked(anchor).ok_or(DomainError::EmptyMask)?;
        let mut keep = vec![false; self.len()];
        keep[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(idx) = queue.pop_front() {
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                if let Some(n) = self.offset(idx, di, dj) {
                    if self.mask[n] && !keep[n] {
                        keep[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        self.mask = keep;
        self.anchor = start;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_disk_half_spacing_has_nine_nodes() {
        let g = build_grid(&PlaneDomain::unit_disk(), 0.5, 0.0, GridOptions::default()).unwrap();
        // Oracle: enumerate the lattice {-1,...,1}² scaled by 0.5 against |z| < 1.
        let mut expected = 0;
        for j in -2i32..=2 {
            for i in -2i32..=2 {
                let p = Point::new(0.5 * i as f64, 0.5 * j as f64);
                if p.norm() < 1.0 {
                    expected += 1;
                }
            }
        }
        assert_eq!(expected, 9);
        assert_eq!(g.masked_count(), 9);
    }

    #[test]
    fn large_margin_leaves_origin_only() {
        let g = build_grid(&PlaneDomain::unit_disk(), 0.5, 0.6, GridOptions::default()).unwrap();
        assert_eq!(g.masked_count(), 1);
        assert_eq!(g.point(g.anchor()), Point::ORIGIN);
    }

    #[test]
    fn unit_square_quarter_spacing() {
        let g = build_grid(&PlaneDomain::unit_square(), 0.25, 0.0, GridOptions::default()).unwrap();
        assert_eq!(g.masked_count(), 9);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let err = build_grid(&PlaneDomain::unit_disk(), 0.5, 1.0, GridOptions::default()).unwrap_err();
        assert_eq!(err, DomainError::EmptyMask);
        assert_eq!(err.to_string(), "margin too large: empty grid mask");
    }

    #[test]
    fn unbounded_needs_box() {
        let err = build_grid(&PlaneDomain::PuncturedPlane, 0.1, 0.0, GridOptions::default()).unwrap_err();
        assert_eq!(err, DomainError::NeedsBoundingBox);
        let opts = GridOptions {
            bbox: Some(BBox::new(Point::new(-1.0, -1.0), Point::new(1.0, 1.0))),
            ..Default::default()
        };
        let g = build_grid(&PlaneDomain::PuncturedPlane, 0.5, 0.0, opts).unwrap();
        assert_eq!(g.masked_count(), 24);
    }

    #[test]
    fn anchor_selects_component() {
        // Dumbbell: two squares joined by a thin corridor that a margin cuts.
        let d = PlaneDomain::polygon(
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(1.0, 0.45),
                Point::new(2.0, 0.45),
                Point::new(2.0, 0.0),
                Point::new(3.0, 0.0),
                Point::new(3.0, 1.0),
                Point::new(2.0, 1.0),
                Point::new(2.0, 0.55),
                Point::new(1.0, 0.55),
                Point::new(1.0, 1.0),
                Point::new(0.0, 1.0),
            ],
            vec![],
        )
        .unwrap();
        let left = GridOptions { anchor: Some(Point::new(0.5, 0.5)), ..Default::default() };
        let right = GridOptions { anchor: Some(Point::new(2.5, 0.5)), ..Default::default() };
        let gl = build_grid(&d, 0.1, 0.2, left).unwrap();
        let gr = build_grid(&d, 0.1, 0.2, right).unwrap();
        assert!(gl.masked().all(|k| gl.point(k).x < 1.0));
        assert!(gr.masked().all(|k| gr.point(k).x > 2.0));
        let joined = build_grid(&d, 0.025, 0.0, left).unwrap();
        assert!(joined.masked().any(|k| joined.point(k).x > 2.0));
    }

    #[test]
    fn bilinear_reproduces_affine() {
        let g = build_grid(&PlaneDomain::unit_square(), 0.125, 0.0, GridOptions::default()).unwrap();
        let g = g.map_points(|p| 2.0 * p.x - 3.0 * p.y + 1.0);
        let p = Point::new(0.3, 0.6);
        let v = g.interpolate(p).unwrap();
        assert!((v - (2.0 * 0.3 - 3.0 * 0.6 + 1.0)).abs() < 1e-14);
        assert!(g.interpolate(Point::new(0.01, 0.5)).is_none());
    }
}
