//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails. `ACCEPTANCE_ONLY=1,3` runs a subset.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use conformal_core::cat0::{c11_probe, cat0_check, completeness, GeodesicTriangle};
use conformal_core::density::{curvature, verify_hypotheses, CurvatureMethod, DensitySpec, PhiSpec, SubharmonicSpec};
use conformal_core::geodesic::{ConformalMetric, DistanceOptions, DistanceSolver, HomotopyClass};
use conformal_core::smoothing::{default_tol_lap, grid_laplacian, lemma_check, mollify, sigma_sequence, SigmaOptions};
use conformal_core::{build_grid, BBox, Grid, GridOptions, PlaneDomain, Point};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn square_bbox(r: f64) -> BBox {
    BBox::new(Point::new(-r, -r), Point::new(r, r))
}

/// Wrap an angle difference into `(−π, π]`.
fn wrap(t: f64) -> f64 {
    let w = t.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Distance on the flat cylinder `log r + iθ`, shortest way round.
fn cylinder_oracle(a: Point, b: Point) -> f64 {
    let dl = (b.norm() / a.norm()).ln();
    dl.hypot(wrap(b.arg() - a.arg()))
}

fn c1_flat_cylinder() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut pairs = Vec::new();
    for _ in 0..25 {
        let mut p = || Point::polar(rng.gen_range(0.5..2.0), rng.gen_range(0.0..2.0 * PI));
        pairs.push((p(), p()));
    }
    let metric = ConformalMetric::new(PlaneDomain::PuncturedPlane, DensitySpec::quasihyperbolic());
    let opts = DistanceOptions { h: 1.0 / 256.0, stencil: 16, bbox: Some(square_bbox(3.0)), ..Default::default() };
    let solver = DistanceSolver::for_points(metric, opts, &[pairs[0].0]).expect("solver");
    let mut worst = 0.0f64;
    for (a, b) in &pairs {
        let d = solver.distance(*a, *b).expect("distance").length;
        worst = worst.max((d - cylinder_oracle(*a, *b)).abs() / cylinder_oracle(*a, *b));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-3 && secs <= 60.0, format!("max rel err {worst:.2e} (<= 1e-3), {secs:.1}s (<= 60s)"))
}

fn c2_curvature() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let disk = PlaneDomain::unit_disk();
    let hyp = DensitySpec::HyperbolicDisk;
    let pts: Vec<Point> = (0..50).map(|_| Point::polar(0.8 * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..2.0 * PI))).collect();
    let k = |spec: &DensitySpec, dom: &PlaneDomain, p: Point, h: f64| {
        curvature(spec, dom, p, h, CurvatureMethod::Stencil).expect("curvature")
    };
    let hyp_err = pts.iter().map(|&p| (k(&hyp, &disk, p, 1e-3) + 1.0).abs()).fold(0.0, f64::max);
    let cyl = DensitySpec::ModulusPower { alpha: -1.0 };
    let flat_err = (0..50)
        .map(|_| Point::polar(rng.gen_range(0.5..2.0), rng.gen_range(0.0..2.0 * PI)))
        .map(|p| k(&cyl, &PlaneDomain::PuncturedPlane, p, 1e-3).abs())
        .fold(0.0, f64::max);
    let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
        .iter()
        .map(|&h| pts.iter().map(|&p| (k(&hyp, &disk, p, h) + 1.0).abs()).fold(0.0, f64::max))
        .collect();
    let order = (errs[0] / errs[1]).log2().min((errs[1] / errs[2]).log2());
    outcome(
        hyp_err <= 1e-4 && flat_err <= 1e-4 && order >= 1.9,
        format!("|K+1| {hyp_err:.2e}, |K| {flat_err:.2e} (<= 1e-4), order {order:.3} (>= 1.9)"),
    )
}

fn random_vertices(rng: &mut ChaCha8Rng, dom: &PlaneDomain, lo: Point, hi: Point, min_delta: f64) -> [Point; 3] {
    loop {
        let mut pick = || loop {
            let p = Point::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
            if dom.contains(p) && dom.clearance(p) >= min_delta {
                return p;
            }
        };
        let v = [pick(), pick(), pick()];
        if v[0].dist(v[1]).min(v[1].dist(v[2])).min(v[2].dist(v[0])) >= 0.1 {
            return v;
        }
    }
}

fn l_shape() -> PlaneDomain {
    let v = [(0.0, 0.0), (2.0, 0.0), (2.0, 1.0), (1.0, 1.0), (1.0, 2.0), (0.0, 2.0)];
    PlaneDomain::polygon(v.iter().map(|&(x, y)| Point::new(x, y)).collect(), vec![]).expect("L-shape")
}

fn c3_cat0_battery() -> Outcome {
    let start = Instant::now();
    let cases: Vec<(&str, PlaneDomain, DensitySpec, f64)> = vec![
        ("quasihyperbolic disk", PlaneDomain::unit_disk(), DensitySpec::quasihyperbolic(), 0.3),
        ("quasihyperbolic square", PlaneDomain::unit_square(), DensitySpec::quasihyperbolic(), 0.15),
        ("boundary power -1.5 disk", PlaneDomain::unit_disk(), DensitySpec::BoundaryPower { alpha: -1.5 }, 0.3),
        (
            "exp of -log delta, L-shape",
            l_shape(),
            DensitySpec::Composite { phi: PhiSpec::Exp { c: 1.0, offset: 1.0 }, u: SubharmonicSpec::NegLogDelta },
            0.15,
        ),
    ];
    let mut lines = Vec::new();
    let mut violations = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (name, dom, spec, min_delta) in cases {
        assert!(completeness(&spec, &dom).in_scope(), "{name} must be complete");
        let bb = dom.bbox().expect("bounded");
        let metric = ConformalMetric::new(dom.clone(), spec);
        let solver = DistanceSolver::new(metric, DistanceOptions::with_h(1.0 / 32.0)).expect("solver");
        let mut worst = f64::NEG_INFINITY;
        for t in 0..10 {
            let v = random_vertices(&mut rng, &dom, bb.min, bb.max, min_delta);
            let tri = GeodesicTriangle::new(&solver, v[0], v[1], v[2]).expect("triangle");
            let r = cat0_check(&solver, &tri, 200, 100 + t).expect("cat0");
            if !r.pass || !r.failures.is_empty() {
                violations += 1;
            }
            worst = worst.max(r.max_violation - r.budget);
        }
        lines.push(format!("{name}: max(v*-budget) {worst:.2e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(violations == 0 && secs <= 600.0, format!("{violations} violations; {}; {secs:.1}s (<= 600s)", lines.join("; ")))
}

fn c4_negative_control() -> Outcome {
    let spec = DensitySpec::SphericalCap;
    let dom = PlaneDomain::FullPlane;
    let metric = ConformalMetric::new(dom.clone(), spec.clone());
    let opts = DistanceOptions {
        h: 1.0 / 32.0,
        bbox: Some(BBox::new(Point::new(-3.0, -3.0), Point::new(6.0, 6.0))),
        ..Default::default()
    };
    let solver = DistanceSolver::new(metric, opts).expect("solver");
    let tri = GeodesicTriangle::new(&solver, Point::ORIGIN, Point::new(3.0, 0.0), Point::new(0.0, 3.0)).expect("tri");
    let r = cat0_check(&solver, &tri, 200, 4).expect("cat0");
    let mesh = build_grid(&dom, 1.0 / 16.0, 0.0, GridOptions { bbox: Some(square_bbox(3.0)), ..Default::default() })
        .expect("mesh");
    let h = verify_hypotheses(&spec, &dom, &mesh);
    let rejected_iii = h.phi_increasing && h.log_convex && !h.subharmonic;
    outcome(
        !r.pass && rejected_iii,
        format!("v* {:.3e} > budget {:.3e}: {}; hypotheses rejected at (iii): {rejected_iii}", r.max_violation, r.budget, !r.pass),
    )
}

fn c5_lemma() -> Outcome {
    let disk = PlaneDomain::unit_disk();
    let cases: Vec<(&str, PlaneDomain, DensitySpec)> = vec![
        ("quasihyperbolic disk", disk.clone(), DensitySpec::quasihyperbolic()),
        ("quasihyperbolic square", PlaneDomain::unit_square(), DensitySpec::quasihyperbolic()),
        ("boundary power -1.5 disk", disk.clone(), DensitySpec::BoundaryPower { alpha: -1.5 }),
        ("hyperbolic disk", disk.clone(), DensitySpec::HyperbolicDisk),
        (
            "exp of |z|^2",
            disk.clone(),
            DensitySpec::Composite { phi: PhiSpec::Exp { c: 1.0, offset: 0.0 }, u: SubharmonicSpec::QuadraticModulus },
        ),
    ];
    let mut ok = true;
    let mut lines = Vec::new();
    for (name, dom, spec) in cases {
        let bb = dom.bbox().expect("bounded");
        let h = bb.width() / 199.0;
        let g = build_grid(&dom, h, 0.0, GridOptions { origin: bb.min, ..Default::default() }).expect("grid");
        let rho = g.try_map_points(|p| spec.rho(&dom, p)).expect("rho");
        let r = lemma_check(&rho).expect("lemma");
        ok &= r.precondition && r.pass;
        lines.push(format!("{name} {:?}: margin {:.2e} (tol {:.1e})", g.dims(), r.min_margin, r.tol_lap));
    }
    outcome(ok, lines.join("; "))
}

fn sup_diff(a: &Grid, b: &Grid, on: &Grid) -> f64 {
    on.masked().map(|k| (a.value(k) - b.value(k)).abs()).fold(0.0, f64::max)
}

fn c6_mollification() -> Outcome {
    let dom = PlaneDomain::unit_disk();
    let base = build_grid(&dom, 1.0 / 128.0, 0.0, GridOptions::default()).expect("grid");
    let funcs: Vec<(&str, Grid)> = vec![
        ("|z|^2", base.map_points(|p| p.norm_sq())),
        ("max(x, -x, y/2)", base.map_points(|p| p.x.abs().max(0.5 * p.y))),
        ("-log delta", base.map_points(|p| -(1.0 - p.norm()).ln())),
    ];
    let mut ok = true;
    let mut lines = Vec::new();
    for (k, (name, u)) in funcs.iter().enumerate() {
        let coarse = mollify(u, 0.2).expect("mollify");
        let fine = mollify(u, 0.1).expect("mollify");
        let mut below = 0.0f64;
        let mut lap_ok = true;
        for m in [&coarse, &fine] {
            below = below.max(m.masked().map(|i| u.value(i) - m.value(i)).fold(f64::NEG_INFINITY, f64::max));
            let lap = grid_laplacian(m).expect("laplacian");
            let tol = default_tol_lap(m);
            lap_ok &= lap.masked().all(|i| lap.value(i) >= -tol);
        }
        ok &= below <= 1e-9 && lap_ok;
        let mut line = format!("{name}: max(u - u_eps) {below:.1e}, laplacian ok {lap_ok}");
        if k == 1 {
            let ratio = sup_diff(&coarse, u, &coarse) / sup_diff(&fine, u, &coarse);
            ok &= (ratio - 2.0).abs() <= 0.4;
            line += &format!(", sup ratio {ratio:.3} (2 +- 20%)");
        }
        lines.push(line);
    }
    outcome(ok, lines.join("; "))
}

fn c7_sigma() -> Outcome {
    let (_, steps) = sigma_sequence(
        &DensitySpec::quasihyperbolic(),
        &PlaneDomain::unit_disk(),
        Point::ORIGIN,
        &[4, 8, 16],
        &SigmaOptions { h: 1.0 / 64.0, ..Default::default() },
    )
    .expect("hypotheses");
    let steps: Vec<_> = steps.into_iter().map(|s| s.expect("step")).collect();
    let sub = steps.iter().all(|s| s.subharmonic);
    let sup: Vec<f64> = steps.iter().map(|s| s.sup_deviation).collect();
    let mono = sup.windows(2).all(|w| w[1] < w[0]);
    outcome(sub && mono, format!("subharmonic {sub}, sup|sigma_n - rho| {sup:.4?} decreasing {mono}"))
}

fn c8_homotopy_classes() -> Outcome {
    let metric = ConformalMetric::new(PlaneDomain::PuncturedPlane, DensitySpec::quasihyperbolic());
    let h = 1.0 / 64.0;
    let opts = DistanceOptions { h, bbox: Some(square_bbox(3.0)), ..Default::default() };
    let (a, b) = (Point::new(1.0, 0.0), Point::polar(1.5, 2.0));
    let solver = DistanceSolver::for_points(metric, opts, &[a, b]).expect("solver");
    let mut ok = true;
    let mut lines = Vec::new();
    for w in [-1i64, 0, 1] {
        let class = HomotopyClass(vec![w]);
        let d = solver.geodesic_in_class(a, b, &class).expect("class geodesic").length;
        let oracle = (1.5f64).ln().hypot(b.arg() - a.arg() + 2.0 * PI * w as f64);
        let rel = (d - oracle).abs() / oracle;
        let u = solver.uniqueness_probe(a, b, Some(&class)).expect("probe");
        ok &= rel <= 1e-3 && u.pass;
        lines.push(format!("w={w}: rel err {rel:.1e}, hausdorff {:.1e} (<= {:.1e})", u.hausdorff, u.tolerance));
    }
    outcome(ok, lines.join("; "))
}

fn c9_c11_ladder() -> Outcome {
    let metric = ConformalMetric::new(PlaneDomain::unit_square(), DensitySpec::quasihyperbolic());
    let r = c11_probe(
        &metric,
        Point::new(0.1, 0.1),
        Point::new(0.9, 0.1),
        &[1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0],
        &DistanceOptions::default(),
        1e-6,
    )
    .expect("probe");
    outcome(r.bounded, format!("L(h) {:.4?}, bound 1.5*L(1/64)", r.rates))
}

/// All files under `dir`, relative path and contents, sorted.
fn snapshot(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).expect("read dir") {
            let p = e.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).expect("prefix").to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).expect("read")));
            }
        }
    }
    out.sort();
    out
}

fn c10_determinism() -> Outcome {
    let tmp = tempfile::tempdir().expect("tempdir");
    let mut snaps = Vec::new();
    for run in ["first", "second"] {
        let dir = tmp.path().join(run);
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_conformal"))
            .args(["verify", "--seed", "7", "--out"])
            .arg(&dir)
            .stdout(std::process::Stdio::null())
            .status()
            .expect("run verify");
        if !status.success() {
            return outcome(false, format!("verify exited with {status}"));
        }
        snaps.push(snapshot(&dir));
    }
    let same = snaps[0] == snaps[1];
    outcome(same && !snaps[0].is_empty(), format!("{} report files byte-identical: {same}", snaps[0].len()))
}

fn main() {
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: Vec<(usize, &str, fn() -> Outcome)> = vec![
        (1, "flat-cylinder oracle", c1_flat_cylinder),
        (2, "curvature oracle", c2_curvature),
        (3, "CAT(0) battery", c3_cat0_battery),
        (4, "negative control", c4_negative_control),
        (5, "log(1+rho) lemma", c5_lemma),
        (6, "mollification", c6_mollification),
        (7, "sigma_n pipeline", c7_sigma),
        (8, "homotopy-class geodesics", c8_homotopy_classes),
        (9, "C^{1,1} ladder", c9_c11_ladder),
        (10, "determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|e| outcome(false, format!("panicked: {}", panic_message(&e))));
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {tag} {name} [{:.1}s]: {}", start.elapsed().as_secs_f64(), out.detail);
        failed += usize::from(!out.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn panic_message(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown".into())
}
