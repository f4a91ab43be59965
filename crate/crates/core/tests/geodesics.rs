use std::f64::consts::PI;

use conformal_core::cat0::c11_probe;
use conformal_core::density::DensitySpec;
use conformal_core::geodesic::{ConformalMetric, DistanceOptions, DistanceSolver};
use conformal_core::{BBox, PlaneDomain, Point};

/// `log r + iθ` makes the punctured plane a flat cylinder.
fn cylinder(a: Point, b: Point) -> f64 {
    let mut dt = (b.arg() - a.arg()).rem_euclid(2.0 * PI);
    if dt > PI {
        dt -= 2.0 * PI;
    }
    (b.norm() / a.norm()).ln().hypot(dt)
}

#[test]
fn error_estimate_covers_true_error() {
    let metric = ConformalMetric::new(PlaneDomain::PuncturedPlane, DensitySpec::quasihyperbolic());
    let bbox = BBox::new(Point::new(-3.0, -3.0), Point::new(3.0, 3.0));
    for h in [1.0 / 16.0, 1.0 / 32.0] {
        let opts = DistanceOptions { h, bbox: Some(bbox), ..Default::default() };
        let solver = DistanceSolver::new(metric.clone(), opts).unwrap();
        for (a, b) in [
            (Point::new(1.0, 0.0), Point::polar(2.0, 1.0)),
            (Point::polar(0.6, 2.0), Point::polar(1.7, -2.5)),
            (Point::polar(1.5, 0.3), Point::polar(0.7, 0.4)),
        ] {
            let r = solver.distance(a, b).unwrap();
            let err = (r.length - cylinder(a, b)).abs();
            assert!(err <= r.error_estimate, "h {h}: error {err:e} above estimate {:e}", r.error_estimate);
        }
    }
}

#[test]
fn radial_quasihyperbolic_distance() {
    let metric = ConformalMetric::new(PlaneDomain::unit_disk(), DensitySpec::quasihyperbolic());
    let solver = DistanceSolver::new(metric, DistanceOptions::with_h(1.0 / 32.0)).unwrap();
    let (r1, r2, t) = (0.1, 0.8, 0.7);
    let r = solver.distance(Point::polar(r1, t), Point::polar(r2, t)).unwrap();
    let exact = ((1.0 - r1) / (1.0 - r2)).ln();
    assert!((r.length - exact).abs() <= 1e-6 * exact, "{} vs {exact}", r.length);
}

#[test]
fn diameter_turning_stays_at_floor() {
    let metric = ConformalMetric::new(PlaneDomain::unit_disk(), DensitySpec::quasihyperbolic());
    let rep = c11_probe(
        &metric,
        Point::new(-0.6, 0.0),
        Point::new(0.6, 0.0),
        &[1.0 / 16.0, 1.0 / 32.0],
        &DistanceOptions::default(),
        1e-6,
    )
    .unwrap();
    assert!(rep.bounded, "{:?}", rep.rates);
    assert!(rep.rates.iter().all(|&l| l <= 1e-6), "{:?}", rep.rates);
}
