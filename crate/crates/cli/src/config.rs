//! TOML run configuration and its conversion to library types.

use std::path::Path;

use serde::Deserialize;

use conformal_core::density::{Affine, DensitySpec, PhiSpec, SubharmonicSpec, TableSpline};
use conformal_core::geodesic::DistanceOptions;
use conformal_core::{BBox, PlaneDomain, Point};

use crate::CliError;

pub type Xy = [f64; 2];

pub fn pt(p: Xy) -> Point {
    Point::new(p[0], p[1])
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainConfig {
    FullPlane,
    PuncturedPlane,
    Disk {
        #[serde(default)]
        center: Xy,
        radius: f64,
    },
    HalfPlane {
        normal: Xy,
        offset: f64,
    },
    Strip {
        lo: f64,
        hi: f64,
    },
    Annulus {
        #[serde(default)]
        center: Xy,
        r_in: f64,
        r_out: f64,
    },
    Rectangle {
        min: Xy,
        max: Xy,
    },
    Polygon {
        outer: Vec<Xy>,
        #[serde(default)]
        holes: Vec<Vec<Xy>>,
    },
    Punctured {
        base: Box<DomainConfig>,
        punctures: Vec<Xy>,
    },
}

impl DomainConfig {
    pub fn build(&self) -> Result<PlaneDomain, CliError> {
        let d = match self {
            DomainConfig::FullPlane => PlaneDomain::FullPlane,
            DomainConfig::PuncturedPlane => PlaneDomain::PuncturedPlane,
            DomainConfig::Disk { center, radius } => PlaneDomain::disk(pt(*center), *radius)?,
            DomainConfig::HalfPlane { normal, offset } => PlaneDomain::half_plane(pt(*normal), *offset)?,
            DomainConfig::Strip { lo, hi } => PlaneDomain::strip(*lo, *hi)?,
            DomainConfig::Annulus { center, r_in, r_out } => PlaneDomain::annulus(pt(*center), *r_in, *r_out)?,
            DomainConfig::Rectangle { min, max } => PlaneDomain::rectangle(pt(*min), pt(*max))?,
            DomainConfig::Polygon { outer, holes } => PlaneDomain::polygon(
                outer.iter().copied().map(pt).collect(),
                holes.iter().map(|h| h.iter().copied().map(pt).collect()).collect(),
            )?,
            DomainConfig::Punctured { base, punctures } => {
                PlaneDomain::punctured(base.build()?, punctures.iter().copied().map(pt).collect())?
            }
        };
        Ok(d)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhiConfig {
    Exp {
        #[serde(default = "one")]
        c: f64,
        #[serde(default)]
        offset: f64,
    },
    PowerAfterShift {
        p: f64,
        t0: f64,
    },
    Table {
        t: Vec<f64>,
        phi: Vec<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum UConfig {
    NegLogDelta,
    /// Terms `[weight, x, y]`.
    LogModulusCombo { terms: Vec<[f64; 3]> },
    QuadraticModulus,
    /// Affine maps `[a, b, c]` for `a x + b y + c`.
    MaxOfHarmonics { affine: Vec<[f64; 3]> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensityConfig {
    Constant {
        #[serde(default = "one")]
        value: f64,
    },
    Quasihyperbolic,
    BoundaryPower {
        alpha: f64,
    },
    ModulusPower {
        alpha: f64,
    },
    HyperbolicDisk,
    SphericalCap,
    Composite {
        phi: PhiConfig,
        u: UConfig,
    },
}

fn one() -> f64 {
    1.0
}

impl DensityConfig {
    pub fn build(&self) -> Result<DensitySpec, CliError> {
        let d = match self {
            DensityConfig::Constant { value } if *value == 1.0 => DensitySpec::constant(),
            DensityConfig::Constant { value } => {
                let s = DensitySpec::constant().scaled(*value);
                s.validate()?;
                s
            }
            DensityConfig::Quasihyperbolic => DensitySpec::quasihyperbolic(),
            DensityConfig::BoundaryPower { alpha } => DensitySpec::BoundaryPower { alpha: *alpha },
            DensityConfig::ModulusPower { alpha } => DensitySpec::ModulusPower { alpha: *alpha },
            DensityConfig::HyperbolicDisk => DensitySpec::HyperbolicDisk,
            DensityConfig::SphericalCap => DensitySpec::SphericalCap,
            DensityConfig::Composite { phi, u } => {
                let phi = match phi {
                    PhiConfig::Exp { c, offset } => PhiSpec::Exp { c: *c, offset: *offset },
                    PhiConfig::PowerAfterShift { p, t0 } => PhiSpec::PowerAfterShift { p: *p, t0: *t0 },
                    PhiConfig::Table { t, phi } => PhiSpec::Table(TableSpline::new(t.clone(), phi.clone())?),
                };
                let u = match u {
                    UConfig::NegLogDelta => SubharmonicSpec::NegLogDelta,
                    UConfig::LogModulusCombo { terms } => {
                        SubharmonicSpec::LogModulusCombo(terms.iter().map(|t| (t[0], Point::new(t[1], t[2]))).collect())
                    }
                    UConfig::QuadraticModulus => SubharmonicSpec::QuadraticModulus,
                    UConfig::MaxOfHarmonics { affine } => SubharmonicSpec::MaxOfHarmonics(
                        affine.iter().map(|a| Affine { a: a[0], b: a[1], c: a[2] }).collect(),
                    ),
                };
                DensitySpec::composite(phi, u)?
            }
        };
        Ok(d)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub h: Option<f64>,
    pub margin: Option<f64>,
    pub stencil: Option<usize>,
    pub search_nodes: Option<usize>,
    /// `[xmin, ymin, xmax, ymax]`.
    pub bbox: Option<[f64; 4]>,
    pub sheet_budget: Option<i64>,
}

impl GridConfig {
    pub fn bbox(&self) -> Option<BBox> {
        self.bbox.map(|b| BBox::new(Point::new(b[0], b[1]), Point::new(b[2], b[3])))
    }

    pub fn h_or(&self, default: f64) -> f64 {
        self.h.unwrap_or(default)
    }

    pub fn distance_options(&self) -> DistanceOptions {
        let d = DistanceOptions::default();
        DistanceOptions {
            h: self.h.unwrap_or(d.h),
            stencil: self.stencil.unwrap_or(d.stencil),
            search_nodes: self.search_nodes.unwrap_or(d.search_nodes),
            grid_margin: self.margin,
            bbox: self.bbox(),
            sheet_budget: self.sheet_budget.unwrap_or(d.sheet_budget),
            ..d
        }
    }
}

/// Command parameters; each command reads the fields it needs.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunParams {
    pub a: Option<Xy>,
    pub b: Option<Xy>,
    pub c: Option<Xy>,
    pub winding: Option<i64>,
    pub n_pairs: Option<usize>,
    /// Refinement ladder for the regularity probe.
    pub hs: Option<Vec<f64>>,
    pub floor: Option<f64>,
    /// Approximation steps for `sigma-seq`.
    pub ns: Option<Vec<usize>>,
    pub anchor: Option<Xy>,
    /// Mollification radii for `mollify-demo`.
    pub eps: Option<Vec<f64>>,
    /// Finite-difference step for `curvature-map`.
    pub fd_h: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub density: DensityConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub run: RunParams,
    pub seed: Option<u64>,
    pub out: Option<String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::parse(&read(path)?)
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Required point parameter.
pub fn need(p: Option<Xy>, field: &str) -> Result<Point, CliError> {
    p.map(pt).ok_or_else(|| CliError::Config(format!("missing field `run.{field}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested_specs() {
        let c = RunConfig::parse(
            r#"
            seed = 3
            [domain]
            kind = "punctured"
            base = { kind = "disk", radius = 2.0 }
            punctures = [[0.5, 0.0]]
            [density]
            kind = "composite"
            phi = { kind = "exp", offset = 1.0 }
            u = { kind = "neg-log-delta" }
            [run]
            a = [0.0, 1.0]
            "#,
        )
        .unwrap();
        assert!(matches!(c.domain.build().unwrap(), PlaneDomain::Punctured { .. }));
        assert!(matches!(c.density.build().unwrap(), DensitySpec::Composite { .. }));
        assert_eq!(c.seed, Some(3));
    }

    #[test]
    fn unknown_field_reports_location() {
        let e = RunConfig::parse("[domain]\nkind = \"disk\"\nradius = 1.0\nradus = 2.0\n[density]\nkind = \"quasihyperbolic\"\n")
            .unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("radus") && msg.contains("line"), "{msg}");
    }
}
