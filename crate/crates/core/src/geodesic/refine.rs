//! Local relaxation of polylines towards ρ-geodesics.

use std::f64::consts::PI;

use super::{ConformalMetric, GeodesicError, GeodesicResult, HomotopyClass, Polyline, Result};
use crate::point::{polyline_swept_angle, swept_angle, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOptions {
    /// Target Euclidean vertex spacing.
    pub h: f64,
    /// A level stops once a sweep improves the length by less than `tol`
    /// relative.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Vertices stay in `{δ > margin}`.
    pub margin: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions { h: 1.0 / 64.0, tol: 1e-9, max_sweeps: 200, margin: 0.0 }
    }
}

const MIN_COARSE_SEGMENTS: usize = 8;
/// Spacing drift (max/mean or mean/min of segment ρ-lengths) that triggers
/// re-spacing after a sweep.
const RESPACE_DRIFT: f64 = 1.25;
const GOLDEN: f64 = 0.381_966_011_250_105_1;
const NEWTON_MAX: usize = 12;
/// Finite-difference step relative to the shorter adjacent segment.
const FD_STEP: f64 = 1e-5;

/// Relax `path` to a locally shortest polyline of spacing about `opts.h`,
/// keeping its endpoints and homotopy class.
pub fn refine_geodesic(metric: &ConformalMetric, path: &Polyline, opts: &RefineOptions) -> Result<GeodesicResult> {
    let mut levels = refine_levels(metric, path.vertices(), opts, 0)?;
    Ok(levels.pop().expect("at least one level"))
}

/// Nested refinement: the result at spacing `h`, followed by `extra`
/// further results at `h/2, h/4, …`.
pub(crate) fn refine_levels(
    metric: &ConformalMetric,
    init: &[Point],
    opts: &RefineOptions,
    extra: usize,
) -> Result<Vec<GeodesicResult>> {
    if !(opts.h > 0.0) {
        return Err(GeodesicError::InvalidPath(format!("spacing must be positive, got {}", opts.h)));
    }
    let init = Polyline::dedup(init.to_vec())?;
    if init.vertices().len() == 1 {
        return Ok(vec![GeodesicResult::zero(metric, init.start()); extra + 1]);
    }
    let r = Relaxer { m: metric, margin: opts.margin, tol: opts.tol, max_sweeps: opts.max_sweeps };
    let mut x = init.vertices().to_vec();
    let mut seg = Vec::with_capacity(x.len() - 1);
    for (k, w) in x.windows(2).enumerate() {
        if !metric.segment_inside(w[0], w[1], opts.margin) {
            return Err(GeodesicError::PathExits(k));
        }
        seg.push(metric.segment_length(w[0], w[1])?);
    }

    let n_final = ((init.euclidean_length() / opts.h).ceil() as usize).max(2);
    let mut doublings = 0;
    while (n_final >> (doublings + 1)) >= MIN_COARSE_SEGMENTS {
        doublings += 1;
    }
    let mut n0 = n_final.div_ceil(1 << doublings);
    loop {
        if n0 >= x.len() - 1 {
            break;
        }
        if let Some((x2, s2)) = r.resample(&x, &seg, n0) {
            x = x2;
            seg = s2;
            break;
        }
        n0 *= 2;
    }

    let mut out = Vec::with_capacity(extra + 1);
    let mut sweeps = 0;
    let mut converged = true;
    loop {
        converged &= r.relax(&mut x, &mut seg, &mut sweeps);
        r.newton(&mut x, &mut seg);
        if x.len() - 1 >= n_final {
            let mut res = GeodesicResult::from_vertices(metric, x.clone(), &seg)?;
            res.sweeps = sweeps;
            res.converged = converged;
            out.push(res);
            if out.len() == extra + 1 {
                return Ok(out);
            }
        }
        r.bisect(&mut x, &mut seg);
    }
}

struct Relaxer<'a> {
    m: &'a ConformalMetric,
    margin: f64,
    tol: f64,
    max_sweeps: usize,
}

impl Relaxer<'_> {
    /// Replacing `v` by `v2` between `p` and `q` keeps the path inside and
    /// does not sweep across a hole.
    fn feasible(&self, p: Point, v: Point, q: Point, v2: Point) -> bool {
        if !self.m.segment_inside(p, v2, self.margin) || !self.m.segment_inside(v2, q, self.margin) {
            return false;
        }
        self.m.holes().iter().all(|&c| {
            let s = swept_angle(c, p, v) + swept_angle(c, v, q) + swept_angle(c, q, v2) + swept_angle(c, v2, p);
            s.abs() < PI
        })
    }

    /// Run sweeps on one level until the relative gain drops below `tol`.
    fn relax(&self, x: &mut [Point], seg: &mut Vec<f64>, sweeps: &mut usize) -> bool {
        let n = x.len();
        if n < 3 {
            return true;
        }
        let mut dirty = vec![true; n];
        dirty[0] = false;
        dirty[n - 1] = false;
        let mut len: f64 = seg.iter().sum();
        for k in 0..self.max_sweeps {
            let moved = self.sweep(x, seg, k % 2 == 0, &mut dirty);
            *sweeps += 1;
            if self.drifted(seg) {
                if let Some((x2, s2)) = self.resample(x, seg, seg.len()) {
                    if s2.iter().sum::<f64>() <= seg.iter().sum::<f64>() {
                        x.copy_from_slice(&x2);
                        *seg = s2;
                        dirty[1..n - 1].iter_mut().for_each(|d| *d = true);
                    }
                }
            }
            let new_len: f64 = seg.iter().sum();
            debug_assert!(new_len <= len * (1.0 + 1e-15));
            let gain = len - new_len;
            len = new_len;
            if moved == 0 || gain <= self.tol * new_len {
                return true;
            }
        }
        false
    }

    fn sweep(&self, x: &mut [Point], seg: &mut [f64], forward: bool, dirty: &mut [bool]) -> usize {
        let n = x.len();
        let mut moved = 0;
        let order: Box<dyn Iterator<Item = usize>> = if forward { Box::new(1..n - 1) } else { Box::new((1..n - 1).rev()) };
        for i in order {
            if !dirty[i] {
                continue;
            }
            dirty[i] = false;
            let (p, v, q) = (x[i - 1], x[i], x[i + 1]);
            let f0 = seg[i - 1] + seg[i];
            let chord = q - p;
            let (lp, lq) = (v.dist(p), v.dist(q));
            let normal = if chord.norm() > 1e-9 * (lp + lq) {
                chord.perp() * (1.0 / chord.norm())
            } else {
                (v - p).perp() * (1.0 / lp)
            };
            let r = 0.5 * lp.max(lq);
            let cost = |t: f64| {
                let v2 = v + normal * t;
                if t != 0.0 && !self.feasible(p, v, q, v2) {
                    return f64::INFINITY;
                }
                self.m.segment_cost(p, v2) + self.m.segment_cost(v2, q)
            };
            let (t, f) = brent_min(cost, -r, r, f0, 1e-7 * r, 60);
            if t != 0.0 && f < f0 {
                let v2 = v + normal * t;
                let (a, b) = (self.m.segment_cost(p, v2), self.m.segment_cost(v2, q));
                if a + b < f0 {
                    x[i] = v2;
                    seg[i - 1] = a;
                    seg[i] = b;
                    moved += 1;
                    if i > 1 {
                        dirty[i - 1] = true;
                    }
                    if i + 2 < n {
                        dirty[i + 1] = true;
                    }
                }
            }
        }
        moved
    }

    /// Newton steps on the normal offsets of all interior vertices at once.
    /// The Hessian is tridiagonal; it is built from finite differences of
    /// the segment costs and damped until positive definite.
    fn newton(&self, x: &mut [Point], seg: &mut [f64]) -> usize {
        let n = x.len();
        if n < 3 {
            return 0;
        }
        let holes = self.m.holes();
        let class = HomotopyClass::of(x, holes);
        let mut steps = 0;
        for _ in 0..NEWTON_MAX {
            let mut nu = vec![Point::ORIGIN; n];
            let mut step = vec![0.0; n];
            for i in 1..n - 1 {
                let chord = x[i + 1] - x[i - 1];
                let (lp, lq) = (x[i].dist(x[i - 1]), x[i].dist(x[i + 1]));
                nu[i] = if chord.norm() > 1e-9 * (lp + lq) {
                    chord.perp() * (1.0 / chord.norm())
                } else {
                    (x[i] - x[i - 1]).perp() * (1.0 / lp)
                };
                step[i] = FD_STEP * lp.min(lq);
            }
            let mut g = vec![0.0; n];
            let mut diag = vec![0.0; n];
            let mut off = vec![0.0; n];
            for k in 0..n - 1 {
                let (p, q) = (x[k], x[k + 1]);
                let (ds, dt) = (step[k], step[k + 1]);
                let (ns, nt) = (nu[k] * ds, nu[k + 1] * dt);
                let c = |a: f64, b: f64| self.m.segment_cost(p + ns * a, q + nt * b);
                let c0 = seg[k];
                if k > 0 {
                    let (cp, cm) = (c(1.0, 0.0), c(-1.0, 0.0));
                    g[k] += (cp - cm) / (2.0 * ds);
                    diag[k] += (cp - 2.0 * c0 + cm) / (ds * ds);
                }
                if k + 1 < n - 1 {
                    let (cp, cm) = (c(0.0, 1.0), c(0.0, -1.0));
                    g[k + 1] += (cp - cm) / (2.0 * dt);
                    diag[k + 1] += (cp - 2.0 * c0 + cm) / (dt * dt);
                }
                if k > 0 && k + 1 < n - 1 {
                    off[k] = (c(1.0, 1.0) - c(1.0, -1.0) - c(-1.0, 1.0) + c(-1.0, -1.0)) / (4.0 * ds * dt);
                }
            }
            if g.iter().chain(&diag).chain(&off).any(|v| !v.is_finite()) {
                break;
            }
            let Some(mut p) = solve_damped(&diag[1..n - 1], &off[1..n - 2], &g[1..n - 1]) else {
                break;
            };
            let mut scale = 1.0f64;
            for (j, pj) in p.iter().enumerate() {
                let i = j + 1;
                let r = 0.5 * x[i].dist(x[i - 1]).min(x[i].dist(x[i + 1]));
                if pj.abs() > r {
                    scale = scale.min(r / pj.abs());
                }
            }
            p.iter_mut().for_each(|v| *v *= scale);
            let old: f64 = seg.iter().sum();
            let mut accepted = false;
            let mut alpha = 1.0;
            for _ in 0..10 {
                let mut y = x.to_vec();
                for (j, pj) in p.iter().enumerate() {
                    y[j + 1] = x[j + 1] + nu[j + 1] * (alpha * pj);
                }
                if let Some(ns) = self.costs_if_valid(&y) {
                    let new: f64 = ns.iter().sum();
                    if new < old && HomotopyClass::of(&y, holes) == class {
                        x.copy_from_slice(&y);
                        seg.copy_from_slice(&ns);
                        accepted = true;
                        steps += 1;
                        if old - new <= 1e-14 * new {
                            return steps;
                        }
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        steps
    }

    /// Segment costs of `y`, if every segment stays inside.
    fn costs_if_valid(&self, y: &[Point]) -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(y.len() - 1);
        for w in y.windows(2) {
            if w[0] == w[1] || !self.m.segment_inside(w[0], w[1], self.margin) {
                return None;
            }
            let c = self.m.segment_cost(w[0], w[1]);
            if !c.is_finite() {
                return None;
            }
            out.push(c);
        }
        Some(out)
    }

    fn drifted(&self, seg: &[f64]) -> bool {
        let mean = seg.iter().sum::<f64>() / seg.len() as f64;
        let (lo, hi) = seg.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
        hi > RESPACE_DRIFT * mean || lo * RESPACE_DRIFT < mean
    }

    /// `count` segments of equal ρ-length along the polyline, if every new
    /// chord stays inside and in class.
    fn resample(&self, x: &[Point], seg: &[f64], count: usize) -> Option<(Vec<Point>, Vec<f64>)> {
        let total: f64 = seg.iter().sum();
        let mut cum = Vec::with_capacity(seg.len() + 1);
        cum.push(0.0);
        for s in seg {
            cum.push(cum[cum.len() - 1] + s);
        }
        let mut pts = Vec::with_capacity(count + 1);
        let mut owner = Vec::with_capacity(count + 1);
        pts.push(x[0]);
        owner.push(0usize);
        for j in 1..count {
            let s = total * j as f64 / count as f64;
            let k = (cum.partition_point(|&c| c <= s).max(1) - 1).min(seg.len() - 1);
            let t = if seg[k] > 0.0 { ((s - cum[k]) / seg[k]).clamp(0.0, 1.0) } else { 0.0 };
            pts.push(x[k].lerp(x[k + 1], t));
            owner.push(k);
        }
        pts.push(x[x.len() - 1]);
        owner.push(x.len() - 1);
        let mut new_seg = Vec::with_capacity(count);
        for j in 1..=count {
            let (p, q) = (pts[j - 1], pts[j]);
            if p == q {
                return None;
            }
            if !self.m.segment_inside(p, q, self.margin) {
                return None;
            }
            let (k0, k1) = (owner[j - 1], owner[j]);
            if k1 > k0 {
                let mut ring = Vec::with_capacity(k1 - k0 + 3);
                ring.push(p);
                ring.extend_from_slice(&x[k0 + 1..=k1.min(x.len() - 1)]);
                ring.push(q);
                ring.push(p);
                ring.dedup();
                if self.m.holes().iter().any(|&c| polyline_swept_angle(c, &ring).abs() > PI) {
                    return None;
                }
            }
            let l = self.m.segment_cost(p, q);
            if !l.is_finite() {
                return None;
            }
            new_seg.push(l);
        }
        Some((pts, new_seg))
    }

    /// Insert Euclidean midpoints; always stays inside and in class.
    fn bisect(&self, x: &mut Vec<Point>, seg: &mut Vec<f64>) {
        let mut nx = Vec::with_capacity(2 * x.len() - 1);
        let mut ns = Vec::with_capacity(2 * seg.len());
        for w in x.windows(2) {
            let m = w[0].lerp(w[1], 0.5);
            nx.push(w[0]);
            nx.push(m);
            ns.push(self.m.segment_cost(w[0], m));
            ns.push(self.m.segment_cost(m, w[1]));
        }
        nx.push(x[x.len() - 1]);
        *x = nx;
        *seg = ns;
    }
}

/// Solve `(T + μI) p = −g` for symmetric tridiagonal `T`, raising `μ` from
/// zero until the factorization has positive pivots.
fn solve_damped(diag: &[f64], off: &[f64], g: &[f64]) -> Option<Vec<f64>> {
    let scale = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if !(scale > 0.0) {
        return None;
    }
    let mut mu = 0.0;
    for _ in 0..12 {
        if let Some(p) = thomas(diag, off, g, mu) {
            return Some(p);
        }
        mu = if mu == 0.0 { 1e-6 * scale } else { mu * 10.0 };
    }
    None
}

fn thomas(diag: &[f64], off: &[f64], g: &[f64], mu: f64) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0] + mu;
    if !(piv > 0.0) {
        return None;
    }
    c[0] = if n > 1 { off[0] / piv } else { 0.0 };
    d[0] = -g[0] / piv;
    for i in 1..n {
        piv = diag[i] + mu - off[i - 1] * c[i - 1];
        if !(piv > 0.0) {
            return None;
        }
        c[i] = if i + 1 < n { off[i] / piv } else { 0.0 };
        d[i] = (-g[i] - off[i - 1] * d[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

/// Brent's minimizer on `[a, b]` started from `t = 0` with value `f0`.
/// Non-finite values fall back to golden-section steps.
fn brent_min<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, f0: f64, tol_abs: f64, max_iter: usize) -> (f64, f64) {
    let (mut a, mut b) = (a, b);
    let (mut x, mut w, mut v) = (0.0f64, 0.0f64, 0.0f64);
    let (mut fx, mut fw, mut fv) = (f0, f0, f0);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    let eps = f64::EPSILON.sqrt();
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = eps * x.abs() + tol_abs;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 && fx.is_finite() && fw.is_finite() && fv.is_finite() {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            let r = e;
            e = d;
            if p.abs() < (0.5 * q * r).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else if d > 0.0 { x + tol1 } else { x - tol1 };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensitySpec;
    use crate::domain::PlaneDomain;

    #[test]
    fn brent_finds_parabola_minimum() {
        let (t, f) = brent_min(|t| (t - 0.3).powi(2) + 1.0, -1.0, 1.0, 1.09, 1e-10, 100);
        assert!((t - 0.3).abs() < 1e-7 && (f - 1.0).abs() < 1e-13);
        let (t, _) = brent_min(|t| if t > 0.5 { f64::INFINITY } else { (t - 0.4).powi(2) }, -1.0, 1.0, 0.16, 1e-10, 100);
        assert!((t - 0.4).abs() < 1e-6);
    }

    #[test]
    fn zigzag_straightens() {
        let metric = ConformalMetric::new(PlaneDomain::FullPlane, DensitySpec::constant());
        let zig: Vec<Point> = (0..=10).map(|k| Point::new(k as f64 * 0.1, if k % 2 == 1 { 0.05 } else { -0.05 })).collect();
        let mut zig = zig;
        zig[0] = Point::ORIGIN;
        zig[10] = Point::new(1.0, 0.0);
        let path = Polyline::new(zig).unwrap();
        let r = refine_geodesic(&metric, &path, &RefineOptions { h: 0.05, ..Default::default() }).unwrap();
        assert!((r.length - 1.0).abs() < 1e-8, "{}", r.length);
        assert!(r.converged);
    }

    #[test]
    fn bent_radial_geodesic() {
        let metric = ConformalMetric::new(PlaneDomain::unit_disk(), DensitySpec::quasihyperbolic());
        let init = vec![Point::ORIGIN, Point::new(0.45, 0.3), Point::new(0.9, 0.0)];
        let path = Polyline::new(init).unwrap();
        let r = refine_geodesic(&metric, &path, &RefineOptions { h: 1.0 / 64.0, ..Default::default() }).unwrap();
        assert!((r.length - 10f64.ln()).abs() < 1e-6, "{}", r.length - 10f64.ln());
    }

    #[test]
    fn quarter_arc_on_cylinder() {
        let metric = ConformalMetric::new(PlaneDomain::PuncturedPlane, DensitySpec::ModulusPower { alpha: -1.0 });
        let init = vec![Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)];
        let path = Polyline::new(init).unwrap();
        let r = refine_geodesic(&metric, &path, &RefineOptions { h: 1.0 / 128.0, ..Default::default() }).unwrap();
        assert!((r.length - PI / 2.0).abs() < 1e-4, "{}", r.length - PI / 2.0);
    }
}
