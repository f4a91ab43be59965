//! Batch verification suites: a list of cases, each one check with an
//! expected outcome, aggregated into one report.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use conformal_core::cat0::{c11_probe, cat0_check, GeodesicTriangle};
use conformal_core::density::{curvature, verify_hypotheses, CurvatureMethod, DensitySpec};
use conformal_core::geodesic::{ConformalMetric, DistanceSolver};
use conformal_core::smoothing::{lemma_check, sigma_sequence, SigmaOptions};
use conformal_core::{build_grid, GridOptions, PlaneDomain, Point};

use crate::commands::class_for;
use crate::config::{need, pt, DensityConfig, DomainConfig, GridConfig, RunParams, Xy};
use crate::{CliError, Output};

pub const BUNDLED: &str = include_str!("../suites/default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Hypotheses,
    Lemma,
    Sigma,
    Cat0,
    Uniqueness,
    C11,
    Distance,
    Curvature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expected {
    #[default]
    Pass,
    Fail,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub name: String,
    pub check: Check,
    #[serde(default)]
    pub expected: Expected,
    pub domain: DomainConfig,
    pub density: DensityConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub run: RunParams,
    /// Explicit triangles for `cat0`.
    #[serde(default)]
    pub triangles: Vec<[Xy; 3]>,
    /// Additional seeded random triangles for `cat0`.
    #[serde(default)]
    pub random_triangles: usize,
    /// Smallest boundary distance of random vertices.
    pub min_clearance: Option<f64>,
    /// Evaluation points for `curvature`.
    #[serde(default)]
    pub points: Vec<Xy>,
    /// Reference value for `distance` and `curvature`.
    pub oracle: Option<f64>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    #[serde(default, rename = "case")]
    pub cases: Vec<Case>,
}

impl Suite {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let s: Suite = toml::from_str(text).map_err(|e| CliError::Suite(e.to_string()))?;
        if s.cases.is_empty() {
            return Err(CliError::NoCases);
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub case: String,
    pub check: Check,
    pub expected: Expected,
    /// `pass`, `fail` or `error`.
    pub outcome: &'static str,
    /// Signed distance to the pass threshold; nonnegative passes.
    pub margin: Option<f64>,
    /// The outcome met the expectation.
    pub pass: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub seed: u64,
    pub cases: Vec<Row>,
    pub passed: usize,
    pub failed: usize,
}

struct Checked {
    pass: bool,
    margin: f64,
    detail: Value,
}

fn case_seed(seed: u64, idx: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(idx as u64 + 1)
}

/// Run every case (concurrently up to `workers`), write one file per case
/// under `cases/` and the merged `aggregate.json`.
pub fn run_suite(suite: &Suite, seed: u64, workers: Option<usize>, out: &Output) -> Result<Aggregate, CliError> {
    let workers = workers.or(suite.workers).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let results: Vec<(Row, Value)> = pool.install(|| {
        suite
            .cases
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let res = catch_unwind(AssertUnwindSafe(|| run_case(c, case_seed(seed, i))))
                    .unwrap_or_else(|p| Err(CliError::Geometry(format!("panic: {}", panic_text(&p)))));
                let (outcome, margin, error, detail) = match res {
                    Ok(ch) => (if ch.pass { "pass" } else { "fail" }, Some(ch.margin), None, ch.detail),
                    Err(e) => ("error", None, Some(e.to_string()), Value::Null),
                };
                let pass = match (outcome, c.expected) {
                    ("pass", Expected::Pass) | ("fail", Expected::Fail) => true,
                    _ => false,
                };
                let margin = margin.filter(|m| m.is_finite());
                (Row { case: c.name.clone(), check: c.check, expected: c.expected, outcome, margin, pass, error }, detail)
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(results.len());
    for (i, (row, detail)) in results.into_iter().enumerate() {
        out.json(&format!("cases/{i:03}-{}.json", slug(&row.case)), &json!({ "row": row, "detail": detail }))?;
        rows.push(row);
    }
    let passed = rows.iter().filter(|r| r.pass).count();
    let agg = Aggregate { seed, failed: rows.len() - passed, passed, cases: rows };
    out.json("aggregate.json", &agg)?;
    Ok(agg)
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c.to_ascii_lowercase() } else { '_' }).collect()
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown panic".into())
}

fn run_case(c: &Case, seed: u64) -> Result<Checked, CliError> {
    let domain = c.domain.build()?;
    let density = c.density.build()?;
    match c.check {
        Check::Hypotheses => hypotheses(c, &domain, &density),
        Check::Lemma => lemma(c, &domain, &density),
        Check::Sigma => sigma(c, &domain, &density),
        Check::Cat0 => cat0(c, domain, density, seed),
        Check::Uniqueness => uniqueness(c, domain, density),
        Check::C11 => c11(c, domain, density),
        Check::Distance => distance(c, domain, density),
        Check::Curvature => curvature_case(c, &domain, &density),
    }
}

fn lattice(c: &Case, domain: &PlaneDomain, default_h: f64) -> Result<conformal_core::Grid, CliError> {
    let opts = GridOptions { bbox: c.grid.bbox(), ..Default::default() };
    Ok(build_grid(domain, c.grid.h_or(default_h), c.grid.margin.unwrap_or(0.0), opts)?)
}

fn hypotheses(c: &Case, domain: &PlaneDomain, density: &DensitySpec) -> Result<Checked, CliError> {
    let mesh = lattice(c, domain, 1.0 / 32.0)?;
    let r = verify_hypotheses(density, domain, &mesh);
    let margin = if !r.phi_increasing {
        r.phi_margin
    } else if !r.log_convex {
        -r.convexity_violation
    } else {
        r.min_submean_margin
    };
    Ok(Checked { pass: r.passes(), margin, detail: serde_json::to_value(&r).unwrap_or(Value::Null) })
}

fn lemma(c: &Case, domain: &PlaneDomain, density: &DensitySpec) -> Result<Checked, CliError> {
    let g = lattice(c, domain, 1.0 / 64.0)?;
    let rho = g.try_map_points(|p| density.rho(domain, p))?;
    let r = lemma_check(&rho)?;
    let margin = if r.checked { r.min_margin + r.tol_lap } else { r.precondition_margin + r.tol_lap };
    Ok(Checked { pass: r.pass, margin, detail: serde_json::to_value(&r).unwrap_or(Value::Null) })
}

fn sigma(c: &Case, domain: &PlaneDomain, density: &DensitySpec) -> Result<Checked, CliError> {
    let anchor = c.run.anchor.map(pt).unwrap_or_else(|| domain.reference_point());
    let ns = c.run.ns.clone().unwrap_or_else(|| vec![4, 8]);
    let opts = SigmaOptions { h: c.grid.h_or(1.0 / 64.0), ..Default::default() };
    let (_, steps) = sigma_sequence(density, domain, anchor, &ns, &opts)?;
    let mut records = Vec::new();
    for s in steps {
        records.push(s?.record());
    }
    let mut margin = records.iter().map(|r| r.min_laplacian + r.tol_lap).fold(f64::INFINITY, f64::min);
    for w in records.windows(2) {
        margin = margin.min(w[0].sup_deviation - w[1].sup_deviation);
    }
    let pass = records.iter().all(|r| r.subharmonic) && records.windows(2).all(|w| w[1].sup_deviation < w[0].sup_deviation);
    Ok(Checked { pass, margin, detail: json!({ "steps": records }) })
}

fn random_triangle(rng: &mut ChaCha8Rng, domain: &PlaneDomain, c: &Case) -> Result<[Point; 3], CliError> {
    let bb = c.grid.bbox().or_else(|| domain.bbox()).ok_or_else(|| {
        CliError::Config(format!("case `{}`: random triangles on an unbounded domain need grid.bbox", c.name))
    })?;
    let min_clear = c.min_clearance.unwrap_or(0.1);
    let mut v = [Point::ORIGIN; 3];
    for slot in v.iter_mut() {
        let mut tries = 0;
        *slot = loop {
            let p = Point::new(rng.gen_range(bb.min.x..bb.max.x), rng.gen_range(bb.min.y..bb.max.y));
            if domain.contains(p) && domain.clearance(p) >= min_clear {
                break p;
            }
            tries += 1;
            if tries > 100_000 {
                return Err(CliError::Geometry(format!("case `{}`: no point with clearance {min_clear}", c.name)));
            }
        };
    }
    Ok(v)
}

fn cat0(c: &Case, domain: PlaneDomain, density: DensitySpec, seed: u64) -> Result<Checked, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tris: Vec<[Point; 3]> = c.triangles.iter().map(|t| [pt(t[0]), pt(t[1]), pt(t[2])]).collect();
    for _ in 0..c.random_triangles {
        tris.push(random_triangle(&mut rng, &domain, c)?);
    }
    if tris.is_empty() {
        return Err(CliError::Config(format!("case `{}` lists no triangles", c.name)));
    }
    let all: Vec<Point> = tris.iter().flatten().copied().collect();
    let solver = DistanceSolver::for_points(ConformalMetric::new(domain, density), c.grid.distance_options(), &all)?;
    let mut margin = f64::INFINITY;
    let mut pass = true;
    let mut details = Vec::new();
    for (k, t) in tris.iter().enumerate() {
        let tri = GeodesicTriangle::new(&solver, t[0], t[1], t[2])?;
        let r = cat0_check(&solver, &tri, c.run.n_pairs.unwrap_or(200), seed.wrapping_add(k as u64))?;
        margin = margin.min(r.budget - r.max_violation);
        pass &= r.pass && r.failures.is_empty();
        details.push(json!({ "vertices": t, "report": r }));
    }
    Ok(Checked { pass, margin, detail: Value::Array(details) })
}

fn uniqueness(c: &Case, domain: PlaneDomain, density: DensitySpec) -> Result<Checked, CliError> {
    let (a, b) = (need(c.run.a, "a")?, need(c.run.b, "b")?);
    let solver = DistanceSolver::for_points(ConformalMetric::new(domain, density), c.grid.distance_options(), &[a, b])?;
    let class = class_for(solver.metric(), c.run.winding.unwrap_or(0))?;
    let r = solver.uniqueness_probe(a, b, Some(&class))?;
    Ok(Checked { pass: r.pass, margin: r.tolerance - r.hausdorff, detail: serde_json::to_value(&r).unwrap_or(Value::Null) })
}

fn c11(c: &Case, domain: PlaneDomain, density: DensitySpec) -> Result<Checked, CliError> {
    let (a, b) = (need(c.run.a, "a")?, need(c.run.b, "b")?);
    let hs = c.run.hs.clone().unwrap_or_else(|| vec![1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0]);
    let metric = ConformalMetric::new(domain, density);
    let r = c11_probe(&metric, a, b, &hs, &c.grid.distance_options(), c.run.floor.unwrap_or(1e-6))?;
    let coarse = hs.iter().zip(&r.rates).max_by(|x, y| x.0.total_cmp(y.0)).map(|(_, l)| *l).unwrap_or(0.0);
    let margin = 1.5 * coarse + r.floor - r.rates.iter().copied().fold(0.0, f64::max);
    Ok(Checked { pass: r.bounded, margin, detail: serde_json::to_value(&r).unwrap_or(Value::Null) })
}

fn distance(c: &Case, domain: PlaneDomain, density: DensitySpec) -> Result<Checked, CliError> {
    let (a, b) = (need(c.run.a, "a")?, need(c.run.b, "b")?);
    let oracle = c.oracle.ok_or_else(|| CliError::Config(format!("case `{}` needs an oracle", c.name)))?;
    let rtol = c.rtol.unwrap_or(1e-3);
    let solver = DistanceSolver::for_points(ConformalMetric::new(domain, density), c.grid.distance_options(), &[a, b])?;
    let r = match c.run.winding {
        Some(w) => solver.geodesic_in_class(a, b, &class_for(solver.metric(), w)?)?,
        None => solver.distance(a, b)?,
    };
    let rel = (r.length - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE);
    Ok(Checked {
        pass: rel <= rtol,
        margin: rtol - rel,
        detail: json!({ "length": r.length, "error_estimate": r.error_estimate, "oracle": oracle, "relative_error": rel }),
    })
}

fn curvature_case(c: &Case, domain: &PlaneDomain, density: &DensitySpec) -> Result<Checked, CliError> {
    let oracle = c.oracle.ok_or_else(|| CliError::Config(format!("case `{}` needs an oracle", c.name)))?;
    let atol = c.atol.unwrap_or(1e-4);
    let fd = c.run.fd_h.unwrap_or(1e-3);
    let mut worst = 0.0f64;
    let mut values = Vec::with_capacity(c.points.len());
    for p in &c.points {
        let k = curvature(density, domain, pt(*p), fd, CurvatureMethod::Stencil)?;
        worst = worst.max((k - oracle).abs());
        values.push(k);
    }
    Ok(Checked { pass: worst <= atol, margin: atol - worst, detail: json!({ "values": values, "max_error": worst }) })
}
