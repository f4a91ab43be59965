//! One function per subcommand. Each writes its artifacts and returns
//! whether the run passed.

use std::path::PathBuf;

use serde::Serialize;

use conformal_core::cat0::{cat0_check, completeness, Cat0Report, Completeness, GeodesicTriangle, Side};
use conformal_core::density::{curvature, CurvatureMethod, DensitySpec};
use conformal_core::geodesic::{
    ConformalMetric, DistanceOptions, DistanceSolver, GeodesicResult, HomotopyClass, UniquenessReport,
};
use conformal_core::smoothing::{default_tol_lap, grid_laplacian, mollify, sigma_sequence, SigmaOptions, SigmaRecord};
use conformal_core::{build_grid, GridOptions, PlaneDomain, Point};

use crate::config::{need, pt, RunConfig};
use crate::svg::Figure;
use crate::{CliError, Output, Overrides};

pub const DEFAULT_OUT: &str = "out";

pub struct Setup {
    pub domain: PlaneDomain,
    pub density: DensitySpec,
    pub opts: DistanceOptions,
    pub out: Output,
    pub seed: u64,
}

pub fn setup(cfg: &RunConfig, ov: &Overrides) -> Result<Setup, CliError> {
    let domain = cfg.domain.build()?;
    let density = cfg.density.build()?;
    let mut opts = cfg.grid.distance_options();
    if let Some(h) = ov.h {
        opts.h = h;
    }
    if let Some(s) = ov.stencil {
        opts.stencil = s;
    }
    let dir = ov.out.clone().or_else(|| cfg.out.as_ref().map(PathBuf::from)).unwrap_or_else(|| DEFAULT_OUT.into());
    Ok(Setup { domain, density, opts, out: Output::new(&dir)?, seed: ov.seed.or(cfg.seed).unwrap_or(0) })
}

impl Setup {
    pub fn metric(&self) -> ConformalMetric {
        ConformalMetric::new(self.domain.clone(), self.density.clone())
    }

    pub fn solver(&self, pts: &[Point]) -> Result<DistanceSolver, CliError> {
        for p in pts {
            if !self.domain.contains(*p) {
                return Err(CliError::Geometry(format!("point not in domain: ({}, {})", p.x, p.y)));
            }
        }
        Ok(DistanceSolver::for_points(self.metric(), self.opts.clone(), pts)?)
    }

    /// Spacing for lattice commands: `--h`, then `grid.h`, then `default`.
    pub fn lattice_h(&self, cfg: &RunConfig, ov: &Overrides, default: f64) -> f64 {
        ov.h.or(cfg.grid.h).unwrap_or(default)
    }
}

#[derive(Serialize)]
struct PathRow {
    s: f64,
    x: f64,
    y: f64,
}

fn path_rows(r: &GeodesicResult) -> Vec<PathRow> {
    r.path.vertices().iter().zip(&r.arclength).map(|(p, s)| PathRow { s: *s, x: p.x, y: p.y }).collect()
}

#[derive(Serialize)]
struct GeodesicSummary {
    length: f64,
    error_estimate: f64,
    grid_length: Option<f64>,
    stencil_gap: f64,
    converged: bool,
    sweeps: usize,
    vertices: usize,
    winding: Vec<i64>,
}

impl From<&GeodesicResult> for GeodesicSummary {
    fn from(r: &GeodesicResult) -> Self {
        GeodesicSummary {
            length: r.length,
            error_estimate: r.error_estimate,
            grid_length: r.grid_length,
            stencil_gap: r.stencil_gap,
            converged: r.converged,
            sweeps: r.sweeps,
            vertices: r.path.vertices().len(),
            winding: r.class.0.clone(),
        }
    }
}

fn geodesic_figure(domain: &PlaneDomain, paths: &[&GeodesicResult]) -> String {
    let pts: Vec<Point> = paths.iter().flat_map(|r| r.path.vertices().iter().copied()).collect();
    let mut fig = Figure::around(domain, &pts);
    fig.domain(domain);
    for r in paths {
        fig.polyline(r.path.vertices(), "#c03", false);
        fig.marker(r.path.start(), "#03c");
        fig.marker(r.path.end(), "#03c");
    }
    fig.finish()
}

#[derive(Serialize)]
struct DistanceReport {
    command: &'static str,
    a: Point,
    b: Point,
    geodesic: GeodesicSummary,
}

pub fn distance(cfg: &RunConfig, ov: &Overrides) -> Result<bool, CliError> {
    let s = setup(cfg, ov)?;
    let (a, b) = (need(cfg.run.a, "a")?, need(cfg.run.b, "b")?);
    let r = s.solver(&[a, b])?.distance(a, b)?;
    s.out.json("distance.json", &DistanceReport { command: "distance", a, b, geodesic: (&r).into() })?;
    s.out.csv("geodesic.csv", &path_rows(&r))?;
    s.out.text("geodesic.svg", &geodesic_figure(&s.domain, &[&r]))?;
    println!("length {:.12} (error estimate {:.2e}, converged {})", r.length, r.error_estimate, r.converged);
    Ok(r.converged)
}

#[derive(Serialize)]
struct ClassReport {
    command: &'static str,
    a: Point,
    b: Point,
    winding: i64,
    geodesic: GeodesicSummary,
    uniqueness: UniquenessReport,
}

/// The class with winding `w` about the single hole, or the trivial class
/// when the domain has none.
pub fn class_for(metric: &ConformalMetric, w: i64) -> Result<HomotopyClass, CliError> {
    match metric.holes().len() {
        0 if w == 0 => Ok(HomotopyClass::trivial(0)),
        1 => Ok(HomotopyClass(vec![w])),
        n => Err(CliError::Geometry(format!("winding {w} needs a domain with one hole; this one has {n}"))),
    }
}

pub fn geodesic_class(cfg: &RunConfig, ov: &Overrides) -> Result<bool, CliError> {
    let s = setup(cfg, ov)?;
    let (a, b) = (need(cfg.run.a, "a")?, need(cfg.run.b, "b")?);
    let w = cfg.run.winding.unwrap_or(0);
    let solver = s.solver(&[a, b])?;
    let class = class_for(solver.metric(), w)?;
    let r = solver.geodesic_in_class(a, b, &class)?;
    let u = solver.uniqueness_probe(a, b, Some(&class))?;
    let pass = u.pass;
    s.out.csv("geodesic.csv", &path_rows(&r))?;
    s.out.text("geodesic.svg", &geodesic_figure(&s.domain, &[&r]))?;
    println!("winding {w}: length {:.12}, uniqueness hausdorff {:.2e} (<= {:.2e})", r.length, u.hausdorff, u.tolerance);
    s.out.json(
        "geodesic_class.json",
        &ClassReport { command: "geodesic-class", a, b, winding: w, geodesic: (&r).into(), uniqueness: u },
    )?;
    Ok(pass)
}

#[derive(Serialize)]
struct TriangleReport {
    command: &'static str,
    vertices: [Point; 3],
    side_lengths: [f64; 3],
    scope: Completeness,
    status: &'static str,
    /// `status` when the metric is known complete, otherwise out of scope.
    verdict: &'static str,
    report: Cat0Report,
}

fn triangle_figure(domain: &PlaneDomain, tri: &GeodesicTriangle, report: &Cat0Report) -> String {
    let pts: Vec<Point> = tri.sides.iter().flat_map(|r| r.path.vertices().iter().copied()).collect();
    let mut fig = Figure::around(domain, &pts);
    fig.domain(domain);
    for side in Side::ALL {
        fig.polyline(tri.side(side).path.vertices(), "#222", false);
    }
    if let Some(w) = &report.worst {
        fig.polyline(&[w.x, w.y], "#c03", false);
        fig.marker(w.x, "#c03");
        fig.marker(w.y, "#c03");
    }
    fig.finish()
}

pub fn triangle_check(cfg: &RunConfig, ov: &Overrides) -> Result<bool, CliError> {
    let s = setup(cfg, ov)?;
    let v = [need(cfg.run.a, "a")?, need(cfg.run.b, "b")?, need(cfg.run.c, "c")?];
    let solver = s.solver(&v)?;
    let tri = GeodesicTriangle::new(&solver, v[0], v[1], v[2])?;
    let report = cat0_check(&solver, &tri, cfg.run.n_pairs.unwrap_or(200), s.seed)?;
    let pass = report.pass;
    let status = match (report.degenerate, pass) {
        (true, _) => "degenerate",
        (false, true) => "pass",
        (false, false) => "fail",
    };
    let scope = completeness(&s.density, &s.domain);
    let verdict = if scope.in_scope() { status } else { "out of theorem scope" };
    println!("{status} ({verdict}): v* {:.3e}, budget {:.3e}", report.max_violation, report.budget);
    s.out.text("triangle.svg", &triangle_figure(&s.domain, &tri, &report))?;
    s.out.json(
        "triangle_check.json",
        &TriangleReport {
            command: "triangle-check",
            vertices: v,
            side_lengths: tri.lengths(),
            scope,
            status,
            verdict,
            report,
        },
    )?;
    Ok(pass)
}

#[derive(Serialize)]
struct CurvatureRow {
    x: f64,
    y: f64,
    k: f64,
}

#[derive(Serialize)]
struct CurvatureReport {
    command: &'static str,
    nodes: usize,
    fd_h: f64,
    min: f64,
    max: f64,
    mean: f64,
    analytic: Option<f64>,
    max_analytic_error: Option<f64>,
}

pub fn curvature_map(cfg: &RunConfig, ov: &Overrides) -> Result<bool, CliError> {
    let s = setup(cfg, ov)?;
    let fd_h = cfg.run.fd_h.unwrap_or(1e-3);
    let h = s.lattice_h(cfg, ov, 1.0 / 32.0);
    let margin = cfg.grid.margin.unwrap_or(0.0).max(2.0 * fd_h * (1.0 + 1e-9));
    let grid = build_grid(&s.domain, h, margin, GridOptions { bbox: cfg.grid.bbox(), ..Default::default() })?;
    let mut rows = Vec::with_capacity(grid.masked_count());
    for k in grid.masked() {
        let p = grid.point(k);
        rows.push(CurvatureRow { x: p.x, y: p.y, k: curvature(&s.density, &s.domain, p, fd_h, CurvatureMethod::Stencil)? });
    }
    let ks = rows.iter().map(|r| r.k);
    let analytic = s.density.analytic_curvature();
    let report = CurvatureReport {
        command: "curvature-map",
        nodes: rows.len(),
        fd_h,
        min: ks.clone().fold(f64::INFINITY, f64::min),
        max: ks.clone().fold(f64::NEG_INFINITY, f64::max),
        mean: ks.clone().sum::<f64>() / rows.len().max(1) as f64,
        analytic,
        max_analytic_error: analytic.map(|a| rows.iter().map(|r| (r.k - a).abs()).fold(0.0, f64::max)),
    };
    println!("{} nodes, K in [{:.6}, {:.6}]", report.nodes, report.min, report.max);
    s.out.csv("curvature.csv", &rows)?;
    s.out.json("curvature_map.json", &report)?;
    Ok(true)
}

#[derive(Serialize)]
struct MollifyStep {
    eps: f64,
    nodes: usize,
    /// `min(u_ε − u)`; nonnegative for subharmonic `u`.
    min_gain: f64,
    min_laplacian: f64,
    tol_lap: f64,
    sup_distance: f64,
}

#[derive(Serialize)]
struct MollifyRow {
    x: f64,
    y: f64,
    u: f64,
    u_eps: f64,
}

pub fn mollify_demo(cfg: &RunConfig, ov: &Overrides) -> Result<bool, CliError> {
    let s = setup(cfg, ov)?;
    let h = s.lattice_h(cfg, ov, 1.0 / 64.0);
    let grid = build_grid(&s.domain, h, 0.0, GridOptions { bbox: cfg.grid.bbox(), ..Default::default() })?;
    let u = grid.try_map_points(|p| s.density.log_rho(&s.domain, p))?;
    let mut eps = cfg.run.eps.clone().unwrap_or_else(|| vec![8.0 * h, 4.0 * h]);
    eps.sort_by(|a, b| b.total_cmp(a));
    let mut steps = Vec::new();
    let mut common = None;
    let mut pass = true;
    for (k, &e) in eps.iter().enumerate() {
        let m = mollify(&u, e)?;
        let common = common.get_or_insert_with(|| m.clone());
        let lap = grid_laplacian(&m)?;
        let tol = default_tol_lap(&m);
        let step = MollifyStep {
            eps: e,
            nodes: m.masked_count(),
            min_gain: m.masked().map(|i| m.value(i) - u.value(i)).fold(f64::INFINITY, f64::min),
            min_laplacian: lap.masked().map(|i| lap.value(i)).fold(f64::INFINITY, f64::min),
            tol_lap: tol,
            sup_distance: common.masked().map(|i| (m.value(i) - u.value(i)).abs()).fold(0.0, f64::max),
        };
        pass &= step.min_gain >= -1e-9 && step.min_laplacian >= -tol;
        let rows: Vec<MollifyRow> = m
            .masked()
            .map(|i| {
                let p = m.point(i);
                MollifyRow { x: p.x, y: p.y, u: u.value(i), u_eps: m.value(i) }
            })
            .collect();
        s.out.csv(&format!("mollified_{k}.csv"), &rows)?;
        println!("eps {e}: min(u_eps - u) {:.2e}, sup |u_eps - u| {:.4e}", step.min_gain, step.sup_distance);
        steps.push(step);
    }
    #[derive(Serialize)]
    struct Report {
        command: &'static str,
        h: f64,
        steps: Vec<MollifyStep>,
        pass: bool,
    }
    s.out.json("mollify_demo.json", &Report { command: "mollify-demo", h, steps, pass })?;
    Ok(pass)
}

#[derive(Serialize)]
struct SigmaRow {
    x: f64,
    y: f64,
    rho_n: f64,
    sigma: f64,
}

pub fn sigma_seq(cfg: &RunConfig, ov: &Overrides) -> Result<bool, CliError> {
    let s = setup(cfg, ov)?;
    let h = s.lattice_h(cfg, ov, 1.0 / 64.0);
    let anchor = cfg.run.anchor.map(pt).unwrap_or_else(|| s.domain.reference_point());
    let ns = cfg.run.ns.clone().unwrap_or_else(|| vec![4, 8, 16]);
    let (hyp, steps) =
        sigma_sequence(&s.density, &s.domain, anchor, &ns, &SigmaOptions { h, ..Default::default() })?;
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for st in &steps {
        match st {
            Ok(st) => {
                let g = &st.sigma;
                let rows: Vec<SigmaRow> = g
                    .masked()
                    .map(|i| {
                        let p = g.point(i);
                        SigmaRow { x: p.x, y: p.y, rho_n: st.rho_n.value(i), sigma: g.value(i) }
                    })
                    .collect();
                s.out.csv(&format!("sigma_{}.csv", st.n), &rows)?;
                records.push(st.record());
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    let sub = records.iter().all(|r| r.subharmonic);
    let mono = records.windows(2).all(|w| w[1].sup_deviation < w[0].sup_deviation);
    let pass = errors.is_empty() && sub && mono;
    for r in &records {
        println!("n {}: eps {:.4}, subharmonic {}, sup|sigma - rho| {:.4e}", r.n, r.eps, r.subharmonic, r.sup_deviation);
    }
    #[derive(Serialize)]
    struct Report {
        command: &'static str,
        anchor: Point,
        h: f64,
        hypotheses_pass: Option<bool>,
        steps: Vec<SigmaRecord>,
        errors: Vec<String>,
        subharmonic: bool,
        sup_decreasing: bool,
        pass: bool,
    }
    s.out.json(
        "sigma_seq.json",
        &Report {
            command: "sigma-seq",
            anchor,
            h,
            hypotheses_pass: hyp.map(|r| r.passes()),
            steps: records,
            errors,
            subharmonic: sub,
            sup_decreasing: mono,
            pass,
        },
    )?;
    Ok(pass)
}

/// Run a suite file, or the bundled suite when `path` is `None`.
pub fn verify(path: Option<&std::path::Path>, ov: &Overrides) -> Result<bool, CliError> {
    let text = match path {
        Some(p) => crate::config::read(p).map_err(|e| CliError::Suite(e.to_string()))?,
        None => crate::suite::BUNDLED.to_string(),
    };
    let suite = crate::suite::Suite::parse(&text)?;
    let out = Output::new(&ov.out.clone().unwrap_or_else(|| DEFAULT_OUT.into()))?;
    let seed = ov.seed.or(suite.seed).unwrap_or(0);
    let agg = crate::suite::run_suite(&suite, seed, ov.workers, &out)?;
    for r in &agg.cases {
        let m = r.margin.map_or("n/a".to_string(), |m| format!("{m:.3e}"));
        let status = if r.pass { "ok" } else { "FAILED" };
        println!("{status:>6}  {:<40} {:<11} {:<5} margin {m}", r.case, format!("{:?}", r.check), r.outcome);
        if let Some(e) = &r.error {
            println!("        {e}");
        }
    }
    println!("{} passed, {} failed", agg.passed, agg.failed);
    Ok(agg.failed == 0)
}
