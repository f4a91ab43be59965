//! Exp-covers of one-hole domains and lifted distances.

use std::f64::consts::{PI, TAU};

use crate::density::{Affine, DensitySpec, PhiSpec, SubharmonicSpec};
use crate::domain::PlaneDomain;
use crate::geodesic::{ConformalMetric, DistanceOptions, DistanceSolver, GeodesicError, GeodesicResult};
use crate::point::Point;

/// `Φ(ζ) = center + e^ζ` from a simply connected cover onto a one-hole base.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind")]
pub enum CoverChart {
    /// `ℂ → ℂ \ {center}`.
    ExpToPuncturedPlane { center: Point },
    /// Strip `log r_in < Re ζ < log r_out` onto the annulus.
    ExpToAnnulus { center: Point, r_in: f64, r_out: f64 },
    /// Half-plane `Re ζ < log radius` onto the punctured disk.
    ExpToPuncturedDisk { center: Point, radius: f64 },
}

impl CoverChart {
    /// Chart for a base domain with one designated hole, if there is one.
    pub fn for_domain(domain: &PlaneDomain) -> Option<Self> {
        match domain {
            PlaneDomain::PuncturedPlane => Some(CoverChart::ExpToPuncturedPlane { center: Point::ORIGIN }),
            PlaneDomain::Annulus { center, r_in, r_out } => {
                Some(CoverChart::ExpToAnnulus { center: *center, r_in: *r_in, r_out: *r_out })
            }
            PlaneDomain::Punctured { base, punctures } if punctures.len() == 1 => match **base {
                PlaneDomain::FullPlane => Some(CoverChart::ExpToPuncturedPlane { center: punctures[0] }),
                PlaneDomain::Disk { center, radius } if center == punctures[0] => {
                    Some(CoverChart::ExpToPuncturedDisk { center, radius })
                }
                _ => None,
            },
            _ => None,
        }
    }

    pub fn center(&self) -> Point {
        match *self {
            CoverChart::ExpToPuncturedPlane { center }
            | CoverChart::ExpToAnnulus { center, .. }
            | CoverChart::ExpToPuncturedDisk { center, .. } => center,
        }
    }

    /// The base domain `Φ` covers.
    pub fn base_domain(&self) -> PlaneDomain {
        match *self {
            CoverChart::ExpToPuncturedPlane { center } if center == Point::ORIGIN => PlaneDomain::PuncturedPlane,
            CoverChart::ExpToPuncturedPlane { center } => PlaneDomain::Punctured {
                base: Box::new(PlaneDomain::FullPlane),
                punctures: vec![center],
            },
            CoverChart::ExpToAnnulus { center, r_in, r_out } => PlaneDomain::Annulus { center, r_in, r_out },
            CoverChart::ExpToPuncturedDisk { center, radius } => PlaneDomain::Punctured {
                base: Box::new(PlaneDomain::Disk { center, radius }),
                punctures: vec![center],
            },
        }
    }

    /// The simply connected domain of `Φ`.
    pub fn cover_domain(&self) -> PlaneDomain {
        match *self {
            CoverChart::ExpToPuncturedPlane { .. } => PlaneDomain::FullPlane,
            CoverChart::ExpToAnnulus { r_in, r_out, .. } => PlaneDomain::Strip { lo: r_in.ln(), hi: r_out.ln() },
            CoverChart::ExpToPuncturedDisk { radius, .. } => {
                PlaneDomain::HalfPlane { normal: Point::new(-1.0, 0.0), offset: -radius.ln() }
            }
        }
    }

    /// `Φ(ζ)`.
    #[inline]
    pub fn project(&self, zeta: Point) -> Point {
        self.center() + zeta.exp()
    }

    /// `|Φ′(ζ)| = e^{Re ζ}`.
    #[inline]
    pub fn derivative_modulus(&self, zeta: Point) -> f64 {
        zeta.x.exp()
    }

    /// Principal lift, `Im ζ ∈ (−π, π]`.
    pub fn lift(&self, z: Point) -> Point {
        (z - self.center()).ln()
    }

    /// Deck generator `ζ ↦ ζ + 2πi·k`.
    pub fn deck(&self, zeta: Point, k: i64) -> Point {
        zeta + Point::new(0.0, TAU * k as f64)
    }

    /// Continuous lift of a base polyline starting at the principal lift.
    pub fn lift_path(&self, path: &[Point]) -> Vec<Point> {
        let c = self.center();
        let mut out = Vec::with_capacity(path.len());
        let Some(&first) = path.first() else { return out };
        let mut zeta = self.lift(first);
        out.push(zeta);
        for w in path.windows(2) {
            let turn = crate::point::swept_angle(c, w[0], w[1]);
            zeta = Point::new((w[1] - c).norm().ln(), zeta.y + turn);
            out.push(zeta);
        }
        out
    }
}

/// `ρ̃(ζ) = ρ(Φ(ζ))·|Φ′(ζ)|` on the cover domain.
pub fn pullback_density(chart: &CoverChart, spec: &DensitySpec) -> DensitySpec {
    match spec {
        DensitySpec::ModulusPower { alpha } if chart.center() == Point::ORIGIN => DensitySpec::Composite {
            phi: PhiSpec::exp(),
            u: SubharmonicSpec::MaxOfHarmonics(vec![Affine { a: alpha + 1.0, b: 0.0, c: 0.0 }]),
        },
        DensitySpec::Scaled { factor, inner } => pullback_density(chart, inner).scaled(*factor),
        _ => DensitySpec::Pullback {
            chart: *chart,
            base: Box::new(chart.base_domain()),
            inner: Box::new(spec.clone()),
        },
    }
}

/// The cover metric `(Ω̃, ρ̃)`.
pub fn cover_metric(chart: &CoverChart, spec: &DensitySpec) -> ConformalMetric {
    ConformalMetric::new(chart.cover_domain(), pullback_density(chart, spec))
}

/// `d̃(ζ_a, ζ_b)` after translating both lifts by a deck transformation so
/// that `Im ζ_a ∈ (−π, π]`.
pub fn lifted_distance_between(
    chart: &CoverChart,
    spec: &DensitySpec,
    zeta_a: Point,
    zeta_b: Point,
    opts: &DistanceOptions,
) -> Result<GeodesicResult, GeodesicError> {
    let k = ((PI - zeta_a.y) / TAU).floor() as i64;
    let (za, zb) = (chart.deck(zeta_a, k), chart.deck(zeta_b, k));
    let metric = cover_metric(chart, spec);
    let solver = DistanceSolver::for_points(metric, opts.clone(), &[za, zb])?;
    solver.distance(za, zb)
}

/// Distance in the cover between the principal lift of `a` and the lift of
/// `b` shifted by `winding` sheets.
pub fn lifted_distance(
    chart: &CoverChart,
    spec: &DensitySpec,
    a: Point,
    b: Point,
    winding: i64,
    opts: &DistanceOptions,
) -> Result<GeodesicResult, GeodesicError> {
    let base = chart.base_domain();
    for p in [a, b] {
        if !base.contains(p) {
            return Err(GeodesicError::NotInDomain(p.x, p.y));
        }
    }
    let za = chart.lift(a);
    let zb = chart.deck(chart.lift(b), winding);
    lifted_distance_between(chart, spec, za, zb, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deck_periodicity() {
        let chart = CoverChart::ExpToAnnulus { center: Point::new(0.5, -1.0), r_in: 0.5, r_out: 3.0 };
        let z = Point::new(0.3, 1.1);
        let d = chart.project(chart.deck(z, 1)).dist(chart.project(z));
        assert!(d < 1e-12);
        assert!(chart.project(chart.lift(Point::new(1.2, 0.4))).dist(Point::new(1.2, 0.4)) < 1e-14);
    }

    #[test]
    fn pullback_modulus_power_closed_form() {
        let chart = CoverChart::ExpToPuncturedPlane { center: Point::ORIGIN };
        let dom = chart.cover_domain();
        let flat = pullback_density(&chart, &DensitySpec::ModulusPower { alpha: -1.0 });
        for z in [Point::new(0.0, 0.0), Point::new(-2.0, 5.0), Point::new(3.0, -1.0)] {
            assert!((flat.rho(&dom, z).unwrap() - 1.0).abs() < 1e-15);
        }
        let unit = pullback_density(&chart, &DensitySpec::ModulusPower { alpha: 0.0 });
        assert!((unit.rho(&dom, Point::new(0.7, 2.0)).unwrap() - 0.7f64.exp()).abs() < 1e-14);
        let a = pullback_density(&chart, &DensitySpec::ModulusPower { alpha: 0.5 });
        assert!((a.rho(&dom, Point::ORIGIN).unwrap() - 1.0).abs() < 1e-15);
        assert!((a.rho(&dom, Point::new(1.0, 0.3)).unwrap() - 1.5f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn generic_pullback_matches_definition() {
        let chart = CoverChart::ExpToAnnulus { center: Point::ORIGIN, r_in: 1.0, r_out: 4.0 };
        let spec = DensitySpec::quasihyperbolic();
        let rt = pullback_density(&chart, &spec);
        let zeta = Point::new(0.6, 2.0);
        let z = chart.project(zeta);
        let expect = spec.rho(&chart.base_domain(), z).unwrap() * 0.6f64.exp();
        assert!((rt.rho(&chart.cover_domain(), zeta).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn lift_path_tracks_winding() {
        let chart = CoverChart::ExpToPuncturedPlane { center: Point::ORIGIN };
        let loop_: Vec<Point> = (0..=8).map(|k| Point::polar(1.0, TAU * k as f64 / 8.0)).collect();
        let lifted = chart.lift_path(&loop_);
        assert!((lifted.last().unwrap().y - TAU).abs() < 1e-12);
    }

    #[test]
    fn chart_for_domains() {
        assert_eq!(
            CoverChart::for_domain(&PlaneDomain::PuncturedPlane),
            Some(CoverChart::ExpToPuncturedPlane { center: Point::ORIGIN })
        );
        let pd = PlaneDomain::punctured(PlaneDomain::unit_disk(), vec![Point::ORIGIN]).unwrap();
        assert_eq!(CoverChart::for_domain(&pd), Some(CoverChart::ExpToPuncturedDisk { center: Point::ORIGIN, radius: 1.0 }));
        assert_eq!(CoverChart::for_domain(&PlaneDomain::unit_square()), None);
    }
}
