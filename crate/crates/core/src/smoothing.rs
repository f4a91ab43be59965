//! Mollification `u_ε = u ∗ η_ε` on lattices and the approximating
//! densities `σ_n = ρ_n (1 + ε_n λ_n)`.

use std::f64::consts::PI;

use crate::density::{verify_hypotheses, DensityError, DensitySpec, HypothesisReport};
use crate::domain::{DomainError, PlaneDomain};
use crate::grid::{build_grid, Grid, GridOptions};
use crate::point::Point;
use crate::quadrature::gauss_legendre;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SmoothingError {
    #[error("resolution: {0}")]
    Resolution(String),
    #[error("margin too large: empty grid mask")]
    EmptyMask,
    #[error("hypotheses fail: {0}")]
    Hypothesis(String),
    #[error(transparent)]
    Domain(DomainError),
    #[error(transparent)]
    Density(#[from] DensityError),
}

impl From<DomainError> for SmoothingError {
    fn from(e: DomainError) -> Self {
        match e {
            DomainError::EmptyMask => SmoothingError::EmptyMask,
            other => SmoothingError::Domain(other),
        }
    }
}

type Result<T> = std::result::Result<T, SmoothingError>;

/// Radial bump `η(z) = c·exp(−1/(1−|z|²))` on the unit disk, `∫η dA = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    c: f64,
}

impl Default for Mollifier {
    fn default() -> Self {
        Mollifier::new(400)
    }
}

impl Mollifier {
    /// Normalize with `panels` Gauss–Legendre panels on the radial integral.
    pub fn new(panels: usize) -> Self {
        let radial = gauss_legendre(|r| bump(r) * r, 0.0, 1.0, panels);
        Mollifier { c: 1.0 / (2.0 * PI * radial) }
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    /// `η(r)` at unit scale.
    #[inline]
    pub fn profile(&self, r: f64) -> f64 {
        self.c * bump(r)
    }

    /// `η_ε(w) = ε⁻² η(w/ε)`.
    #[inline]
    pub fn eval(&self, w: Point, eps: f64) -> f64 {
        self.profile(w.norm() / eps) / (eps * eps)
    }
}

#[inline]
fn bump(r: f64) -> f64 {
    if r < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// Discrete kernel: lattice offsets and renormalized weights.
fn kernel(h: f64, eps: f64) -> Vec<(i64, i64, f64)> {
    let eta = Mollifier::default();
    let k = (eps / h).ceil() as i64;
    let mut out = Vec::new();
    for dj in -k..=k {
        for di in -k..=k {
            let w = eta.eval(Point::new(di as f64 * h, dj as f64 * h), eps);
            if w > 0.0 {
                out.push((di, dj, w));
            }
        }
    }
    let mass: f64 = out.iter().map(|t| t.2).sum();
    for t in &mut out {
        t.2 /= mass;
    }
    out
}

/// `u_ε(z) = Σ u(w) η_ε(z − w) / Σ η_ε(z − w)` over masked nodes, on the
/// nodes with clearance above `margin + eps`.
pub fn mollify(values: &Grid, eps: f64) -> Result<Grid> {
    let h = values.spacing();
    if !(eps >= 2.0 * h) {
        return Err(SmoothingError::Resolution(format!("eps = {eps} is below twice the spacing {h}")));
    }
    let margin = values.margin() + eps;
    let out_mask = values.submask(margin, |k| values.clearance(k) > margin)?;
    let ker = kernel(h, eps);
    let mut out = out_mask.clone();
    for idx in out_mask.masked() {
        let mut acc = 0.0;
        let mut mass = 0.0;
        for &(di, dj, w) in &ker {
            if let Some(j) = values.offset(idx, di, dj) {
                if values.is_masked(j) {
                    acc += w * values.value(j);
                    mass += w;
                }
            }
        }
        out.set_value(idx, acc / mass);
    }
    Ok(out)
}

/// Five-point Laplacian on nodes whose four neighbours are masked.
pub fn grid_laplacian(values: &Grid) -> Result<Grid> {
    let h = values.spacing();
    let inner = |k: usize| {
        [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .iter()
            .all(|&(di, dj)| values.offset(k, di, dj).is_some_and(|n| values.is_masked(n)))
    };
    let mut out = values.filtered(inner)?;
    for idx in out.masked().collect::<Vec<_>>() {
        let mut s = -4.0 * values.value(idx);
        for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            s += values.value(values.offset(idx, di, dj).expect("interior"));
        }
        out.set_value(idx, s / (h * h));
    }
    Ok(out)
}

/// Stencil roundoff floor `1e-8·scale/h²`, `scale` the largest magnitude
/// of the values (at least 1).
pub fn default_tol_lap(values: &Grid) -> f64 {
    let scale = values.masked().map(|k| values.value(k).abs()).fold(1.0, f64::max);
    1e-8 * scale / (values.spacing() * values.spacing())
}

/// Smallest Laplacian value and where it occurs.
fn min_laplacian(values: &Grid) -> Result<(f64, Option<Point>, usize)> {
    let lap = grid_laplacian(values)?;
    let mut worst = (f64::INFINITY, None);
    for k in lap.masked() {
        if lap.value(k) < worst.0 {
            worst = (lap.value(k), Some(lap.point(k)));
        }
    }
    Ok((worst.0, worst.1, lap.masked_count()))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LemmaReport {
    /// `ρ > 0` and `Δ log ρ ≥ −tol` on the grid.
    pub precondition: bool,
    pub precondition_margin: f64,
    /// Whether the `log(1 + ρ)` check ran.
    pub checked: bool,
    pub min_margin: f64,
    pub tol_lap: f64,
    pub worst_node: Option<Point>,
    pub nodes: usize,
    pub pass: bool,
}

/// Discrete check that `log(1 + ρ)` is subharmonic where `log ρ` is.
pub fn lemma_check(rho: &Grid) -> Result<LemmaReport> {
    let positive = rho.masked().all(|k| rho.value(k) > 0.0 && rho.value(k).is_finite());
    let log_rho = rho.map_values(|v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY });
    let (pre_margin, pre_worst, _) = if positive { min_laplacian(&log_rho)? } else { (f64::NEG_INFINITY, None, 0) };
    let pre_tol = if positive { default_tol_lap(&log_rho) } else { 0.0 };
    let precondition = positive && pre_margin >= -pre_tol;
    if !precondition {
        return Ok(LemmaReport {
            precondition,
            precondition_margin: pre_margin,
            checked: false,
            min_margin: f64::NAN,
            tol_lap: pre_tol,
            worst_node: pre_worst,
            nodes: 0,
            pass: false,
        });
    }
    let log1p = rho.map_values(f64::ln_1p);
    let tol_lap = default_tol_lap(&log1p);
    let (m, worst, nodes) = min_laplacian(&log1p)?;
    Ok(LemmaReport {
        precondition,
        precondition_margin: pre_margin,
        checked: true,
        min_margin: m,
        tol_lap,
        worst_node: worst,
        nodes,
        pass: m >= -tol_lap,
    })
}

/// Which `λ` term a step used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum LambdaKind {
    /// Hyperbolic density of the inset disk or annulus.
    Analytic,
    /// `2/δ_{Ω_n}`, with `δ_{Ω_n} = δ − ε_n`.
    Surrogate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaOptions {
    pub h: f64,
    /// Tolerance override for the `log σ_n` Laplacian check.
    pub tol_lap: Option<f64>,
    /// Skip the hypothesis check on `ρ`.
    pub skip_hypotheses: bool,
}

impl Default for SigmaOptions {
    fn default() -> Self {
        SigmaOptions { h: 1.0 / 64.0, tol_lap: None, skip_hypotheses: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaStep {
    pub n: usize,
    pub eps: f64,
    pub lambda: LambdaKind,
    /// `σ_n` on the anchor component of `{δ > ε_n}`.
    pub sigma: Grid,
    /// `ρ_n = e^{v_n}` on the same nodes.
    pub rho_n: Grid,
    pub min_laplacian: f64,
    pub tol_lap: f64,
    pub worst_node: Option<Point>,
    pub subharmonic: bool,
    /// `sup |σ_n − ρ|` over the mask of the first step in the run.
    pub sup_deviation: f64,
}

/// Plain record of a step for reports.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SigmaRecord {
    pub n: usize,
    pub eps: f64,
    pub nodes: usize,
    pub lambda: LambdaKind,
    pub min_laplacian: f64,
    pub tol_lap: f64,
    pub subharmonic: bool,
    pub sup_deviation: f64,
}

impl SigmaStep {
    pub fn record(&self) -> SigmaRecord {
        SigmaRecord {
            n: self.n,
            eps: self.eps,
            nodes: self.sigma.masked_count(),
            lambda: self.lambda,
            min_laplacian: self.min_laplacian,
            tol_lap: self.tol_lap,
            subharmonic: self.subharmonic,
            sup_deviation: self.sup_deviation,
        }
    }

    /// `σ_n`-length along the lattice ray from the anchor in direction
    /// `(di, dj)`, as (distance to `∂Ω_n`, cumulative length) per node.
    pub fn ray_profile(&self, domain: &PlaneDomain, di: i64, dj: i64) -> Vec<(f64, f64)> {
        let g = &self.sigma;
        let step = g.spacing() * ((di * di + dj * dj) as f64).sqrt();
        let mut k = g.anchor();
        let mut acc = 0.0;
        let mut out = vec![(domain.clearance(g.point(k)) - self.eps, 0.0)];
        while let Some(next) = g.offset(k, di, dj).filter(|&j| g.is_masked(j)) {
            acc += 0.5 * (g.value(k) + g.value(next)) * step;
            out.push((domain.clearance(g.point(next)) - self.eps, acc));
            k = next;
        }
        out
    }
}

/// Hyperbolic density of the round annulus `r1 < |z − c| < r2`.
pub fn annulus_lambda(c: Point, r1: f64, r2: f64, z: Point) -> f64 {
    let l = (r2 / r1).ln();
    let r = z.dist(c);
    (PI / l) / (r * (PI * (r / r1).ln() / l).sin())
}

/// Hyperbolic density of the disk `|z − c| < r`.
pub fn disk_lambda(c: Point, r: f64, z: Point) -> f64 {
    2.0 * r / (r * r - z.dist(c).powi(2))
}

fn lambda_term(domain: &PlaneDomain, eps: f64, z: Point) -> (f64, LambdaKind) {
    match *domain {
        PlaneDomain::Disk { center, radius } => (disk_lambda(center, radius - eps, z), LambdaKind::Analytic),
        PlaneDomain::Annulus { center, r_in, r_out } => {
            (annulus_lambda(center, r_in + eps, r_out - eps, z), LambdaKind::Analytic)
        }
        _ => (2.0 / (domain.clearance(z) - eps), LambdaKind::Surrogate),
    }
}

/// Run the approximation pipeline for each `n` in `ns`.
///
/// The outer error reports a failed hypothesis check; each step carries its
/// own result (e.g. an empty inset for small `n`).
pub fn sigma_sequence(
    spec: &DensitySpec,
    domain: &PlaneDomain,
    anchor: Point,
    ns: &[usize],
    opts: &SigmaOptions,
) -> Result<(Option<HypothesisReport>, Vec<Result<SigmaStep>>)> {
    if !domain.contains(anchor) {
        return Err(SmoothingError::Density(DensityError::NotInDomain(anchor.x, anchor.y)));
    }
    let d0 = domain.boundary_distance(anchor)?;
    let base = build_grid(domain, opts.h, 0.0, GridOptions { anchor: Some(anchor), ..Default::default() })?;
    let report = if opts.skip_hypotheses {
        None
    } else {
        let r = verify_hypotheses(spec, domain, &base);
        if !r.passes() {
            return Err(SmoothingError::Hypothesis(format!(
                "φ increasing: {}, log-convex: {}, subharmonic: {} (margin {:e})",
                r.phi_increasing, r.log_convex, r.subharmonic, r.min_submean_margin
            )));
        }
        Some(r)
    };
    let v = base.try_map_points(|p| spec.log_rho(domain, p))?;
    let mut reference: Option<Grid> = None;
    let mut steps = Vec::with_capacity(ns.len());
    for &n in ns {
        let step = sigma_step(spec, domain, &v, d0, n, opts, &mut reference);
        steps.push(step);
    }
    Ok((report, steps))
}

fn sigma_step(
    spec: &DensitySpec,
    domain: &PlaneDomain,
    v: &Grid,
    d0: f64,
    n: usize,
    opts: &SigmaOptions,
    reference: &mut Option<Grid>,
) -> Result<SigmaStep> {
    if n == 0 {
        return Err(SmoothingError::Resolution("n must be at least 1".into()));
    }
    let eps = d0 / n as f64;
    if opts.h > eps / 4.0 {
        return Err(SmoothingError::Resolution(format!(
            "spacing {} exceeds eps_n/4 = {}",
            opts.h,
            eps / 4.0
        )));
    }
    let v_n = mollify(v, eps)?;
    let rho_n = v_n.map_values(f64::exp);
    let mut kind = LambdaKind::Analytic;
    let mut sigma = rho_n.clone();
    for k in rho_n.masked().collect::<Vec<_>>() {
        let (lam, kd) = lambda_term(domain, eps, rho_n.point(k));
        kind = kd;
        sigma.set_value(k, rho_n.value(k) * (1.0 + eps * lam));
    }
    let log_sigma = sigma.map_values(f64::ln);
    let tol_lap = opts.tol_lap.unwrap_or_else(|| default_tol_lap(&log_sigma));
    let (min_lap, worst, _) = min_laplacian(&log_sigma)?;
    let fixed = reference.get_or_insert_with(|| sigma.clone());
    let mut sup = 0.0f64;
    for k in fixed.masked() {
        if sigma.is_masked(k) {
            let p = sigma.point(k);
            let rho = spec.rho(domain, p)?;
            sup = sup.max((sigma.value(k) - rho).abs());
        } else {
            sup = f64::INFINITY;
        }
    }
    Ok(SigmaStep {
        n,
        eps,
        lambda: kind,
        sigma,
        rho_n,
        min_laplacian: min_lap,
        tol_lap,
        worst_node: worst,
        subharmonic: min_lap >= -tol_lap,
        sup_deviation: sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_grid(h: f64) -> Grid {
        let dom = PlaneDomain::rectangle(Point::new(-1.0, -1.0), Point::new(1.0, 1.0)).unwrap();
        build_grid(&dom, h, 0.0, GridOptions::default()).unwrap()
    }

    #[test]
    fn mollifier_mass_is_one() {
        let eta = Mollifier::default();
        // Independent tensor-product rule on [−1, 1]².
        let total = gauss_legendre(
            |y| gauss_legendre(|x| eta.profile(Point::new(x, y).norm()), -1.0, 1.0, 64),
            -1.0,
            1.0,
            64,
        );
        assert!((total - 1.0).abs() < 1e-9, "{total}");
        assert!((eta.constant() - 2.143_565_775_792_248).abs() < 1e-9);
    }

    #[test]
    fn constants_and_affine_are_preserved() {
        let g = square_grid(0.02).map_points(|_| 7.0);
        let m = mollify(&g, 0.1).unwrap();
        assert!(m.masked().all(|k| (m.value(k) - 7.0).abs() < 1e-12));
        let g = square_grid(0.02).map_points(|p| p.x);
        let m = mollify(&g, 0.1).unwrap();
        for k in m.masked() {
            assert!((m.value(k) - m.point(k).x).abs() < 1e-10);
        }
    }

    #[test]
    fn second_moment_matches_radial_oracle() {
        // κ = ∫|w|²η dA from a 1-D radial rule, independent of the lattice.
        let eta = Mollifier::default();
        let kappa = 2.0 * PI * gauss_legendre(|r| r.powi(3) * eta.profile(r), 0.0, 1.0, 400);
        assert!((kappa - 0.261_311_203_420_554_1).abs() < 1e-12);
        let eps = 0.1;
        let g = square_grid(0.0025).map_points(|p| p.norm_sq());
        let m = mollify(&g, eps).unwrap();
        let k0 = m.nearest_masked(Point::ORIGIN).unwrap();
        assert!((m.value(k0) - kappa * eps * eps).abs() < 1e-6, "{} vs {}", m.value(k0), kappa * eps * eps);
    }

    #[test]
    fn mollify_rejects_small_eps() {
        let g = square_grid(0.1);
        assert!(matches!(mollify(&g, 0.15), Err(SmoothingError::Resolution(_))));
        assert_eq!(mollify(&g, 1.5), Err(SmoothingError::EmptyMask));
    }

    #[test]
    fn laplacian_examples() {
        let g = square_grid(0.05);
        for (f, expect) in [
            (Box::new(|p: Point| p.norm_sq()) as Box<dyn Fn(Point) -> f64>, 4.0),
            (Box::new(|p: Point| p.x * p.x - p.y * p.y), 0.0),
            (Box::new(|p: Point| p.x), 0.0),
        ] {
            let lap = grid_laplacian(&g.map_points(f)).unwrap();
            assert!(lap.masked_count() > 0);
            assert!(lap.masked().all(|k| (lap.value(k) - expect).abs() < 1e-9));
        }
    }

    #[test]
    fn lemma_examples() {
        let g = square_grid(0.05);
        let r = lemma_check(&g.map_points(|_| 3.0)).unwrap();
        assert!(r.pass && r.min_margin.abs() < 1e-9);
        let r = lemma_check(&g.map_points(|p| p.norm_sq().exp())).unwrap();
        assert!(r.precondition && r.pass, "{r:?}");
        let r = lemma_check(&g.map_points(|p| 2.0 / (1.0 + p.norm_sq()))).unwrap();
        assert!(!r.precondition && !r.checked);
    }

    #[test]
    fn annulus_lambda_has_curvature_minus_one() {
        let (c, r1, r2) = (Point::ORIGIN, 1.0, 3.0);
        let h = 1e-3;
        let z = Point::new(1.7, 0.4);
        let l = |p: Point| annulus_lambda(c, r1, r2, p).ln();
        let lap = (l(z + Point::new(h, 0.0)) + l(z - Point::new(h, 0.0)) + l(z + Point::new(0.0, h))
            + l(z - Point::new(0.0, h))
            - 4.0 * l(z))
            / (h * h);
        let k = -lap / annulus_lambda(c, r1, r2, z).powi(2);
        assert!((k + 1.0).abs() < 1e-4, "{k}");
    }

    #[test]
    fn sigma_first_step_empty_then_inset_disk() {
        let (_, steps) = sigma_sequence(
            &DensitySpec::quasihyperbolic(),
            &PlaneDomain::unit_disk(),
            Point::ORIGIN,
            &[1, 2],
            &SigmaOptions { h: 1.0 / 32.0, ..Default::default() },
        )
        .unwrap();
        assert_eq!(steps[0].as_ref().unwrap_err(), &SmoothingError::EmptyMask);
        let s2 = steps[1].as_ref().unwrap();
        assert_eq!(s2.eps, 0.5);
        assert!(s2.sigma.masked().all(|k| s2.sigma.point(k).norm() < 0.5));
        assert!(s2.subharmonic);
    }

    #[test]
    fn sigma_constant_density() {
        let (_, steps) = sigma_sequence(
            &DensitySpec::constant(),
            &PlaneDomain::unit_square(),
            Point::new(0.5, 0.5),
            &[4],
            &SigmaOptions { h: 1.0 / 64.0, ..Default::default() },
        )
        .unwrap();
        let s = steps[0].as_ref().unwrap();
        assert_eq!(s.lambda, LambdaKind::Surrogate);
        assert!(s.rho_n.masked().all(|k| (s.rho_n.value(k) - 1.0).abs() < 1e-12));
        assert!(s.subharmonic, "{}", s.min_laplacian);
    }
}
