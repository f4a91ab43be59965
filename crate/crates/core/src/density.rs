//! Conformal metric densities `ρ = φ∘u`, Gaussian curvature
//! `K = −ρ⁻² Δ log ρ`, and numerical checks of the hypotheses on `φ` and `u`.

use std::sync::Arc;

use crate::covers::CoverChart;
use crate::domain::PlaneDomain;
use crate::grid::Grid;
use crate::point::Point;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DensityError {
    #[error("point not in domain: ({0}, {1})")]
    NotInDomain(f64, f64),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("density singular at ({0}, {1})")]
    Singular(f64, f64),
    #[error("no closed-form curvature for this density")]
    NoClosedForm,
    #[error("invalid density: {0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, DensityError>;

/// Outer function `φ` of `ρ = φ∘u`.
#[derive(Debug, Clone, PartialEq)]
pub enum PhiSpec {
    /// `φ(t) = c·eᵗ + offset` with `c > 0`, `offset ≥ 0`.
    Exp { c: f64, offset: f64 },
    /// `φ(t) = (t − t0)^p` on `t > t0`, `p ≥ 1`.
    PowerAfterShift { p: f64, t0: f64 },
    Table(TableSpline),
}

/// Samples of a positive nondecreasing `φ`, interpolated piecewise-linearly
/// in `log φ`; this keeps log-convex data log-convex.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSpline {
    t: Vec<f64>,
    log_phi: Vec<f64>,
}

impl TableSpline {
    pub fn new(t: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if t.len() < 2 || t.len() != phi.len() {
            return Err(DensityError::Invalid("table needs ≥2 matching (t, φ) samples".into()));
        }
        if t.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(DensityError::Invalid("table abscissae must increase".into()));
        }
        if phi.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(DensityError::Invalid("table values must be positive".into()));
        }
        if phi.windows(2).any(|w| w[1] < w[0]) {
            return Err(DensityError::Invalid("table values must be nondecreasing".into()));
        }
        let log_phi: Vec<f64> = phi.iter().map(|v| v.ln()).collect();
        let slopes: Vec<f64> = (1..t.len()).map(|k| (log_phi[k] - log_phi[k - 1]) / (t[k] - t[k - 1])).collect();
        if slopes.windows(2).any(|s| s[1] < s[0] - 1e-12 * s[0].abs().max(1.0)) {
            return Err(DensityError::Invalid("table samples are not log-convex".into()));
        }
        Ok(TableSpline { t, log_phi })
    }

    fn log_eval(&self, x: f64) -> Option<f64> {
        let n = self.t.len();
        if !(x >= self.t[0] && x <= self.t[n - 1]) {
            return None;
        }
        let k = self.t.partition_point(|&v| v <= x).clamp(1, n - 1);
        let s = (x - self.t[k - 1]) / (self.t[k] - self.t[k - 1]);
        Some(self.log_phi[k - 1] + s * (self.log_phi[k] - self.log_phi[k - 1]))
    }
}

impl PhiSpec {
    pub fn exp() -> Self {
        PhiSpec::Exp { c: 1.0, offset: 0.0 }
    }

    /// Declared interval `(lo, hi, lo_closed)`.
    pub fn interval(&self) -> (f64, f64, bool) {
        match self {
            PhiSpec::Exp { .. } => (f64::NEG_INFINITY, f64::INFINITY, false),
            PhiSpec::PowerAfterShift { t0, .. } => (*t0, f64::INFINITY, false),
            PhiSpec::Table(tab) => (tab.t[0], tab.t[tab.t.len() - 1], true),
        }
    }

    pub fn in_interval(&self, t: f64) -> bool {
        let (lo, hi, closed) = self.interval();
        if closed {
            t >= lo && t <= hi
        } else {
            t > lo && t < hi
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PhiSpec::Exp { c, offset } if !(c > 0.0) || !(offset >= 0.0) => {
                Err(DensityError::Invalid(format!("exp φ needs c > 0 and offset ≥ 0, got {c}, {offset}")))
            }
            PhiSpec::PowerAfterShift { p, .. } if !(p >= 1.0) => {
                Err(DensityError::Invalid(format!("power φ needs p ≥ 1, got {p}")))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !self.in_interval(t) {
            return Err(DensityError::Hypothesis(format!("φ evaluated outside its interval at t = {t}")));
        }
        Ok(match self {
            PhiSpec::Exp { c, offset } => c * t.exp() + offset,
            PhiSpec::PowerAfterShift { p, t0 } => (t - t0).powf(*p),
            PhiSpec::Table(tab) => tab.log_eval(t).expect("checked interval").exp(),
        })
    }

    pub fn log_eval(&self, t: f64) -> Result<f64> {
        match self {
            PhiSpec::Exp { c, offset: 0.0 } if self.in_interval(t) => Ok(c.ln() + t),
            PhiSpec::Table(tab) => tab
                .log_eval(t)
                .ok_or_else(|| DensityError::Hypothesis(format!("φ evaluated outside its interval at t = {t}"))),
            _ => Ok(self.eval(t)?.ln()),
        }
    }
}

/// `a·x + b·y + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Affine {
    pub fn eval(&self, p: Point) -> f64 {
        self.a * p.x + self.b * p.y + self.c
    }
}

/// Inner function `u` of `ρ = φ∘u`.
#[derive(Debug, Clone, PartialEq)]
pub enum SubharmonicSpec {
    /// `u = −log δ`.
    NegLogDelta,
    /// `u = Σ wᵢ log|z − ζᵢ|`, `wᵢ ≥ 0`.
    LogModulusCombo(Vec<(f64, Point)>),
    /// `u = |z|²`.
    QuadraticModulus,
    /// Pointwise maximum of affine (hence harmonic) functions.
    MaxOfHarmonics(Vec<Affine>),
    /// Bilinear interpolation of lattice samples; only a candidate until
    /// the submean check passes.
    GridFunction(Arc<Grid>),
}

impl SubharmonicSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            SubharmonicSpec::LogModulusCombo(terms) if terms.iter().any(|(w, _)| !(*w >= 0.0)) => {
                Err(DensityError::Invalid("log-modulus weights must be nonnegative".into()))
            }
            SubharmonicSpec::MaxOfHarmonics(list) if list.is_empty() => {
                Err(DensityError::Invalid("max of harmonics needs at least one function".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, domain: &PlaneDomain, p: Point) -> Result<f64> {
        match self {
            SubharmonicSpec::NegLogDelta => {
                let d = domain
                    .boundary_distance(p)
                    .map_err(|e| DensityError::Invalid(e.to_string()))?;
                if d > 0.0 {
                    Ok(-d.ln())
                } else {
                    Err(DensityError::Singular(p.x, p.y))
                }
            }
            SubharmonicSpec::LogModulusCombo(terms) => {
                let mut s = 0.0;
                for &(w, c) in terms {
                    let r = p.dist(c);
                    if r == 0.0 {
                        return Err(DensityError::Singular(p.x, p.y));
                    }
                    s += w * r.ln();
                }
                Ok(s)
            }
            SubharmonicSpec::QuadraticModulus => Ok(p.norm_sq()),
            SubharmonicSpec::MaxOfHarmonics(list) => {
                Ok(list.iter().map(|f| f.eval(p)).fold(f64::NEG_INFINITY, f64::max))
            }
            SubharmonicSpec::GridFunction(g) => g.interpolate(p).ok_or(DensityError::NotInDomain(p.x, p.y)),
        }
    }

    /// Distance from `p` to the nearest point where `u` may lose analyticity.
    fn singular_distance(&self, domain: &PlaneDomain, p: Point) -> f64 {
        match self {
            SubharmonicSpec::LogModulusCombo(terms) => terms
                .iter()
                .map(|(_, c)| p.dist(*c))
                .fold(domain.clearance(p), f64::min),
            _ => domain.clearance(p),
        }
    }
}

/// A conformal density `ρ > 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum DensitySpec {
    /// `ρ = δ^α`.
    BoundaryPower { alpha: f64 },
    /// `ρ = |z|^α` on `ℂ_*`.
    ModulusPower { alpha: f64 },
    /// `ρ = 2/(1 − |z|²)` on the unit disk.
    HyperbolicDisk,
    /// `ρ = 2/(1 + |z|²)`, curvature `+1`.
    SphericalCap,
    Composite { phi: PhiSpec, u: SubharmonicSpec },
    /// Bilinear interpolation of `log ρ` samples.
    GridDensity(Arc<Grid>),
    /// `factor · inner`.
    Scaled { factor: f64, inner: Box<DensitySpec> },
    /// `ρ(Φ(ζ))·|Φ′(ζ)|` for an exp-cover `Φ` of `base`.
    Pullback { chart: CoverChart, base: Box<PlaneDomain>, inner: Box<DensitySpec> },
}

/// How [`curvature`] differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurvatureMethod {
    /// Five-point Laplacian of `log ρ`.
    Stencil,
    /// Closed form where one exists.
    Analytic,
}

impl DensitySpec {
    pub fn constant() -> Self {
        DensitySpec::BoundaryPower { alpha: 0.0 }
    }

    pub fn quasihyperbolic() -> Self {
        DensitySpec::BoundaryPower { alpha: -1.0 }
    }

    pub fn composite(phi: PhiSpec, u: SubharmonicSpec) -> Result<Self> {
        phi.validate()?;
        u.validate()?;
        Ok(DensitySpec::Composite { phi, u })
    }

    pub fn scaled(self, factor: f64) -> Self {
        DensitySpec::Scaled { factor, inner: Box::new(self) }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DensitySpec::Composite { phi, u } => {
                phi.validate()?;
                u.validate()
            }
            DensitySpec::Scaled { factor, inner } => {
                if !(*factor > 0.0) {
                    return Err(DensityError::Invalid(format!("scale factor must be positive, got {factor}")));
                }
                inner.validate()
            }
            DensitySpec::Pullback { inner, .. } => inner.validate(),
            _ => Ok(()),
        }
    }

    /// `ρ(p)` without a membership test; callers in hot loops have already
    /// checked that `p` is inside.
    #[inline]
    pub fn rho(&self, domain: &PlaneDomain, p: Point) -> Result<f64> {
        match self {
            DensitySpec::BoundaryPower { alpha } => {
                if *alpha == 0.0 {
                    return Ok(1.0);
                }
                let d = match domain {
                    PlaneDomain::FullPlane => {
                        return Err(DensityError::Invalid("δ^α needs a domain with nonempty boundary".into()))
                    }
                    _ => domain.clearance(p),
                };
                if !(d > 0.0) {
                    return Err(DensityError::Singular(p.x, p.y));
                }
                Ok(if *alpha == -1.0 { 1.0 / d } else { d.powf(*alpha) })
            }
            DensitySpec::ModulusPower { alpha } => {
                let r = p.norm();
                if r == 0.0 {
                    return Err(DensityError::Singular(p.x, p.y));
                }
                Ok(if *alpha == -1.0 { 1.0 / r } else { r.powf(*alpha) })
            }
            DensitySpec::HyperbolicDisk => {
                let s = 1.0 - p.norm_sq();
                if s > 0.0 {
                    Ok(2.0 / s)
                } else {
                    Err(DensityError::NotInDomain(p.x, p.y))
                }
            }
            DensitySpec::SphericalCap => Ok(2.0 / (1.0 + p.norm_sq())),
            DensitySpec::Composite { phi, u } => phi.eval(u.eval(domain, p)?),
            DensitySpec::GridDensity(g) => g
                .interpolate(p)
                .map(f64::exp)
                .ok_or(DensityError::NotInDomain(p.x, p.y)),
            DensitySpec::Scaled { factor, inner } => Ok(factor * inner.rho(domain, p)?),
            DensitySpec::Pullback { chart, base, inner } => {
                let z = chart.project(p);
                Ok(inner.rho(base, z)? * chart.derivative_modulus(p))
            }
        }
    }

    /// `log ρ(p)`, computed without forming `ρ` where that avoids overflow.
    pub fn log_rho(&self, domain: &PlaneDomain, p: Point) -> Result<f64> {
        match self {
            DensitySpec::BoundaryPower { alpha } => {
                if *alpha == 0.0 {
                    return Ok(0.0);
                }
                let d = domain
                    .boundary_distance(p)
                    .map_err(|_| DensityError::Invalid("δ^α needs a domain with nonempty boundary".into()))?;
                if !(d > 0.0) {
                    return Err(DensityError::Singular(p.x, p.y));
                }
                Ok(alpha * d.ln())
            }
            DensitySpec::ModulusPower { alpha } => {
                let r = p.norm();
                if r == 0.0 {
                    return Err(DensityError::Singular(p.x, p.y));
                }
                Ok(alpha * r.ln())
            }
            DensitySpec::HyperbolicDisk => {
                let s = 1.0 - p.norm_sq();
                if s > 0.0 {
                    Ok(std::f64::consts::LN_2 - s.ln())
                } else {
                    Err(DensityError::NotInDomain(p.x, p.y))
                }
            }
            DensitySpec::SphericalCap => Ok(std::f64::consts::LN_2 - p.norm_sq().ln_1p()),
            DensitySpec::Composite { phi, u } => phi.log_eval(u.eval(domain, p)?),
            DensitySpec::GridDensity(g) => g.interpolate(p).ok_or(DensityError::NotInDomain(p.x, p.y)),
            DensitySpec::Scaled { factor, inner } => Ok(factor.ln() + inner.log_rho(domain, p)?),
            DensitySpec::Pullback { chart, base, inner } => {
                let z = chart.project(p);
                Ok(inner.log_rho(base, z)? + chart.derivative_modulus(p).ln())
            }
        }
    }

    /// `Some(c)` when `ρ ≡ c`.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            DensitySpec::BoundaryPower { alpha } if *alpha == 0.0 => Some(1.0),
            DensitySpec::Scaled { factor, inner } => inner.constant_value().map(|c| c * factor),
            _ => None,
        }
    }

    /// Closed-form curvature, where one exists.
    pub fn analytic_curvature(&self) -> Option<f64> {
        match self {
            DensitySpec::HyperbolicDisk => Some(-1.0),
            DensitySpec::ModulusPower { .. } => Some(0.0),
            DensitySpec::SphericalCap => Some(1.0),
            DensitySpec::BoundaryPower { alpha } if *alpha == 0.0 => Some(0.0),
            DensitySpec::Scaled { factor, inner } => inner.analytic_curvature().map(|k| k / (factor * factor)),
            _ => None,
        }
    }

    /// Split into `(φ, u)`; densities without an explicit split use
    /// `φ = exp` and `u = log ρ`.
    fn split(&self) -> (Option<(&PhiSpec, f64)>, Option<&SubharmonicSpec>) {
        match self {
            DensitySpec::Composite { phi, u } => (Some((phi, 1.0)), Some(u)),
            DensitySpec::Scaled { factor, inner } => match inner.split() {
                (Some((phi, s)), u) => (Some((phi, s * factor)), u),
                other => other,
            },
            _ => (None, None),
        }
    }
}

/// `ρ(p)`, refusing points outside the domain.
pub fn eval_density(spec: &DensitySpec, domain: &PlaneDomain, p: Point) -> Result<f64> {
    if !domain.contains(p) {
        return Err(DensityError::NotInDomain(p.x, p.y));
    }
    spec.rho(domain, p)
}

/// Gaussian curvature `K = −ρ⁻² Δ log ρ` at `p`.
pub fn curvature(
    spec: &DensitySpec,
    domain: &PlaneDomain,
    p: Point,
    h: f64,
    method: CurvatureMethod,
) -> Result<f64> {
    if !domain.contains(p) {
        return Err(DensityError::NotInDomain(p.x, p.y));
    }
    if method == CurvatureMethod::Analytic {
        return spec.analytic_curvature().ok_or(DensityError::NoClosedForm);
    }
    if !(h > 0.0) {
        return Err(DensityError::Geometry(format!("stencil spacing must be positive, got {h}")));
    }
    if domain.clearance(p) <= 2.0 * h {
        return Err(DensityError::Geometry(format!(
            "stencil of radius {} leaves the domain at ({}, {})",
            2.0 * h,
            p.x,
            p.y
        )));
    }
    let lc = spec.log_rho(domain, p)?;
    let mut sum = -4.0 * lc;
    for d in [Point::new(h, 0.0), Point::new(-h, 0.0), Point::new(0.0, h), Point::new(0.0, -h)] {
        sum += spec.log_rho(domain, p + d)?;
    }
    let lap = sum / (h * h);
    Ok(-(-2.0 * lc).exp() * lap)
}

/// Circle mean of `u` minus its centre value, over `n` equally spaced samples.
pub fn submean_check(u: &SubharmonicSpec, domain: &PlaneDomain, p: Point, r: f64, n: usize) -> Result<f64> {
    if n < 16 {
        return Err(DensityError::Geometry(format!("need at least 16 circle samples, got {n}")));
    }
    if !(r > 0.0) {
        return Err(DensityError::Geometry(format!("radius must be positive, got {r}")));
    }
    if !domain.contains(p) || domain.clearance(p) <= r {
        return Err(DensityError::Geometry(format!(
            "disk of radius {r} about ({}, {}) exits the domain",
            p.x, p.y
        )));
    }
    circle_margin(|q| u.eval(domain, q), p, r, n)
}

fn circle_margin<F: Fn(Point) -> Result<f64>>(f: F, p: Point, r: f64, n: usize) -> Result<f64> {
    let mut mean = 0.0;
    for k in 0..n {
        let theta = std::f64::consts::TAU * k as f64 / n as f64;
        mean += f(p + Point::polar(r, theta))?;
    }
    Ok(mean / n as f64 - f(p)?)
}

/// Number of circle samples keeping trapezoid aliasing below `1e-15` when
/// the nearest singularity is `dist` away from the centre.
fn samples_for(r: f64, dist: f64) -> usize {
    if !dist.is_finite() {
        return 64;
    }
    let q = r / dist;
    ((1e-15f64).ln() / q.ln()).ceil().clamp(32.0, 4096.0) as usize
}

/// Result of [`verify_hypotheses`].
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct HypothesisReport {
    pub u_min: f64,
    pub u_max: f64,
    /// (i) `φ > 0` and nondecreasing on the sampled range of `u`.
    pub phi_increasing: bool,
    /// Smallest relative increment `(φ(t_{k+1}) − φ(t_k))/φ(t_k)`.
    pub phi_margin: f64,
    /// (ii) `log φ` midpoint-convex on a 1024-point mesh.
    pub log_convex: bool,
    pub convexity_violation: f64,
    /// (iii) submean inequality for `u` at grid-scale radius.
    pub subharmonic: bool,
    pub min_submean_margin: f64,
    pub worst_node: Option<Point>,
    pub nodes_tested: usize,
    pub notes: Vec<String>,
}

impl HypothesisReport {
    pub fn passes(&self) -> bool {
        self.phi_increasing && self.log_convex && self.subharmonic
    }
}

/// Mesh size for the `φ` checks.
pub const PHI_MESH: usize = 1024;
/// Relative tolerance of the log-convexity test.
pub const LOG_CONVEX_RTOL: f64 = 1e-12;
/// Relative tolerance of the submean test.
pub const SUBMEAN_RTOL: f64 = 1e-9;

/// Check the three hypotheses on `ρ = φ∘u` over the masked nodes of `mesh`.
pub fn verify_hypotheses(spec: &DensitySpec, domain: &PlaneDomain, mesh: &Grid) -> HypothesisReport {
    let mut report = HypothesisReport {
        u_min: f64::INFINITY,
        u_max: f64::NEG_INFINITY,
        phi_increasing: true,
        phi_margin: f64::INFINITY,
        log_convex: true,
        convexity_violation: f64::NEG_INFINITY,
        subharmonic: true,
        min_submean_margin: f64::INFINITY,
        worst_node: None,
        nodes_tested: 0,
        notes: Vec::new(),
    };
    if let DensitySpec::GridDensity(g) = spec {
        check_grid_log_density(g, &mut report);
        return report;
    }
    let (phi, u) = spec.split();
    let u_at = |q: Point| -> Result<f64> {
        match u {
            Some(u) => u.eval(domain, q),
            None => spec.log_rho(domain, q),
        }
    };

    let mut failed_eval = false;
    for idx in mesh.masked() {
        match u_at(mesh.point(idx)) {
            Ok(v) => {
                report.u_min = report.u_min.min(v);
                report.u_max = report.u_max.max(v);
            }
            Err(e) => {
                if !failed_eval {
                    report.notes.push(format!("u evaluation failed: {e}"));
                }
                failed_eval = true;
            }
        }
    }
    if failed_eval || !report.u_min.is_finite() {
        report.subharmonic = false;
    }

    match phi {
        Some((phi, scale)) if report.u_min.is_finite() => check_phi(phi, scale, &mut report),
        _ => {
            // φ = exp: positive, increasing, log-linear.
            report.phi_margin = 0.0;
            report.convexity_violation = 0.0;
        }
    }

    let h = mesh.spacing();
    for idx in mesh.masked() {
        let p = mesh.point(idx);
        let sing = match u {
            Some(u) => u.singular_distance(domain, p),
            None => domain.clearance(p),
        };
        if sing <= 1.05 * h || mesh.clearance(idx) <= 1.05 * h {
            continue;
        }
        let n = samples_for(h, sing.min(domain.clearance(p)));
        match circle_margin(u_at, p, h, n) {
            Ok(m) => {
                report.nodes_tested += 1;
                let centre = u_at(p).unwrap_or(0.0);
                let tol = SUBMEAN_RTOL * (1.0 + centre.abs());
                if m < report.min_submean_margin {
                    report.min_submean_margin = m;
                    report.worst_node = Some(p);
                }
                if m < -tol {
                    report.subharmonic = false;
                }
            }
            Err(e) => {
                report.subharmonic = false;
                report.notes.push(format!("submean sample failed at ({}, {}): {e}", p.x, p.y));
                break;
            }
        }
    }
    if report.nodes_tested == 0 {
        report.notes.push("no mesh node admits a grid-scale circle".into());
    }
    report
}

fn check_phi(phi: &PhiSpec, scale: f64, report: &mut HypothesisReport) {
    let (lo, hi) = (report.u_min, report.u_max);
    if !phi.in_interval(lo) || !phi.in_interval(hi) {
        report.phi_increasing = false;
        report.log_convex = false;
        report.notes.push(format!("range [{lo}, {hi}] of u leaves the interval of φ"));
        return;
    }
    let ts: Vec<f64> = (0..PHI_MESH)
        .map(|k| if hi > lo { lo + (hi - lo) * k as f64 / (PHI_MESH - 1) as f64 } else { lo })
        .collect();
    let vals: Vec<f64> = ts.iter().map(|&t| scale * phi.eval(t).unwrap_or(f64::NAN)).collect();
    if vals.iter().any(|v| !(*v > 0.0)) {
        report.phi_increasing = false;
        report.notes.push("φ is not positive on the sampled range".into());
    }
    for w in vals.windows(2) {
        let rel = (w[1] - w[0]) / w[0].abs().max(f64::MIN_POSITIVE);
        report.phi_margin = report.phi_margin.min(rel);
        if w[1] < w[0] {
            report.phi_increasing = false;
        }
    }
    let logs: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
    for w in logs.windows(3) {
        let excess = w[1] - 0.5 * (w[0] + w[2]);
        report.convexity_violation = report.convexity_violation.max(excess);
        let scale = w.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if excess > LOG_CONVEX_RTOL * scale {
            report.log_convex = false;
        }
    }
    if report.convexity_violation == f64::NEG_INFINITY {
        report.convexity_violation = 0.0;
    }
}

fn check_grid_log_density(g: &Grid, report: &mut HypothesisReport) {
    let h = g.spacing();
    let scale = g.masked().map(|k| g.value(k).abs()).fold(1.0f64, f64::max);
    let tol = 1e-8 * scale / (h * h);
    for idx in g.masked() {
        report.u_min = report.u_min.min(g.value(idx));
        report.u_max = report.u_max.max(g.value(idx));
        let nbrs = [(1, 0), (-1, 0), (0, 1), (0, -1)].map(|(di, dj)| g.offset(idx, di, dj));
        if nbrs.iter().all(|n| n.is_some_and(|k| g.is_masked(k))) {
            let lap = (nbrs.iter().map(|n| g.value(n.unwrap())).sum::<f64>() - 4.0 * g.value(idx)) / (h * h);
            report.nodes_tested += 1;
            if lap < report.min_submean_margin {
                report.min_submean_margin = lap;
                report.worst_node = Some(g.point(idx));
            }
            if lap < -tol {
                report.subharmonic = false;
            }
        }
    }
    report.phi_margin = 0.0;
    report.convexity_violation = 0.0;
    report.notes.push("grid density: discrete Laplacian of log ρ".into());
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridOptions};

    fn neg_log_delta_density() -> DensitySpec {
        DensitySpec::composite(PhiSpec::exp(), SubharmonicSpec::NegLogDelta).unwrap()
    }

    #[test]
    fn eval_examples() {
        let disk = PlaneDomain::unit_disk();
        assert_eq!(eval_density(&DensitySpec::quasihyperbolic(), &disk, Point::ORIGIN).unwrap(), 1.0);
        assert_eq!(eval_density(&DensitySpec::HyperbolicDisk, &disk, Point::ORIGIN).unwrap(), 2.0);
        let c = neg_log_delta_density();
        assert!((eval_density(&c, &disk, Point::ORIGIN).unwrap() - 1.0).abs() < 1e-15);
        assert!((eval_density(&c, &disk, Point::new(0.5, 0.0)).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(
            eval_density(&c, &disk, Point::new(1.5, 0.0)).unwrap_err(),
            DensityError::NotInDomain(1.5, 0.0)
        );
    }

    #[test]
    fn phi_outside_interval_is_hypothesis_error() {
        let spec = DensitySpec::composite(
            PhiSpec::PowerAfterShift { p: 2.0, t0: 0.5 },
            SubharmonicSpec::QuadraticModulus,
        )
        .unwrap();
        let err = eval_density(&spec, &PlaneDomain::unit_disk(), Point::new(0.1, 0.0)).unwrap_err();
        assert!(matches!(err, DensityError::Hypothesis(_)));
    }

    #[test]
    fn curvature_constant_is_zero() {
        let k = curvature(
            &DensitySpec::constant(),
            &PlaneDomain::unit_disk(),
            Point::new(0.1, 0.2),
            1e-3,
            CurvatureMethod::Stencil,
        )
        .unwrap();
        assert_eq!(k, 0.0);
    }

    #[test]
    fn curvature_hyperbolic_and_flat() {
        let disk = PlaneDomain::unit_disk();
        let k = curvature(&DensitySpec::HyperbolicDisk, &disk, Point::new(0.3, 0.2), 1e-3, CurvatureMethod::Stencil)
            .unwrap();
        assert!((k + 1.0).abs() < 1e-4, "{k}");
        let k = curvature(
            &DensitySpec::ModulusPower { alpha: -1.0 },
            &PlaneDomain::PuncturedPlane,
            Point::new(1.0, 0.0),
            1e-3,
            CurvatureMethod::Stencil,
        )
        .unwrap();
        assert!(k.abs() < 1e-4, "{k}");
        assert_eq!(
            curvature(&DensitySpec::SphericalCap, &PlaneDomain::FullPlane, Point::ORIGIN, 0.1, CurvatureMethod::Analytic),
            Ok(1.0)
        );
    }

    #[test]
    fn curvature_stencil_must_fit() {
        let err = curvature(
            &DensitySpec::HyperbolicDisk,
            &PlaneDomain::unit_disk(),
            Point::new(0.99, 0.0),
            0.01,
            CurvatureMethod::Stencil,
        )
        .unwrap_err();
        assert!(matches!(err, DensityError::Geometry(_)));
    }

    #[test]
    fn submean_examples() {
        let disk = PlaneDomain::unit_disk();
        let harmonic = SubharmonicSpec::LogModulusCombo(vec![(1.0, Point::new(2.0, 0.5))]);
        let m = submean_check(&harmonic, &disk, Point::new(0.1, -0.2), 0.5, 64).unwrap();
        assert!(m.abs() < 1e-12, "{m}");
        let m = submean_check(&SubharmonicSpec::QuadraticModulus, &PlaneDomain::FullPlane, Point::ORIGIN, 1.0, 64)
            .unwrap();
        assert!((m - 1.0).abs() < 1e-14);
        let m = submean_check(&SubharmonicSpec::NegLogDelta, &disk, Point::ORIGIN, 0.5, 128).unwrap();
        // −log(1 − 0.5) on the whole circle, minus −log 1.
        assert!((m - 2f64.ln()).abs() < 1e-12);
        assert!(submean_check(&SubharmonicSpec::NegLogDelta, &disk, Point::ORIGIN, 1.0, 128).is_err());
        assert!(submean_check(&SubharmonicSpec::NegLogDelta, &disk, Point::ORIGIN, 0.5, 8).is_err());
    }

    #[test]
    fn hypotheses_quasihyperbolic_square_pass() {
        let sq = PlaneDomain::unit_square();
        let mesh = build_grid(&sq, 1.0 / 16.0, 0.0, GridOptions::default()).unwrap();
        let r = verify_hypotheses(&neg_log_delta_density(), &sq, &mesh);
        assert!(r.passes(), "{r:?}");
        assert!(r.nodes_tested > 0);
    }

    #[test]
    fn hypotheses_spherical_fails_submean() {
        let d = PlaneDomain::disk(Point::ORIGIN, 2.0).unwrap();
        let mesh = build_grid(&d, 0.125, 0.0, GridOptions::default()).unwrap();
        let r = verify_hypotheses(&DensitySpec::SphericalCap, &d, &mesh);
        assert!(r.phi_increasing && r.log_convex);
        assert!(!r.subharmonic);
        assert!(r.min_submean_margin < 0.0);
    }

    #[test]
    fn hypotheses_identity_phi_fails_convexity() {
        let sq = PlaneDomain::unit_square();
        let mesh = build_grid(&sq, 0.125, 0.0, GridOptions::default()).unwrap();
        let spec = DensitySpec::composite(
            PhiSpec::PowerAfterShift { p: 1.0, t0: 0.0 },
            SubharmonicSpec::MaxOfHarmonics(vec![Affine { a: 1.0, b: 0.0, c: 1.0 }]),
        )
        .unwrap();
        let r = verify_hypotheses(&spec, &sq, &mesh);
        assert!(r.phi_increasing);
        assert!(!r.log_convex);
        assert!(r.convexity_violation > 0.0);
    }

    #[test]
    fn table_spline_rejects_log_concave() {
        assert!(TableSpline::new(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]).is_err());
        let t = TableSpline::new(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 4.5]).unwrap();
        assert!((t.log_eval(0.5).unwrap() - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!(t.log_eval(2.5).is_none());
    }
}
