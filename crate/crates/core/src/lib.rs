//! Conformal metrics `ρ|dz|` on plane domains: densities and curvature,
//! ρ-geodesics, mollification, exp-covers and CAT(0) comparison checks.

pub mod cat0;
pub mod covers;
pub mod density;
pub mod domain;
pub mod geodesic;
pub mod grid;
pub mod point;
pub mod quadrature;
pub mod smoothing;

pub use domain::{BBox, DomainError, PlaneDomain};
pub use grid::{build_grid, Grid, GridOptions};
pub use point::Point;
