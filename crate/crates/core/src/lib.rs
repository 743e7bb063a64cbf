//! Separable spatio-temporal Poisson point-process intensity models.
//!
//! The spatial intensity `λ(u) = exp(θᵀZ(u) + f(u))` is fitted by
//! Berman–Turner quadrature as a weighted Poisson GLM; the temporal
//! intensity `λ(t) = exp(βᵀZ(t) + f(t))` is a Poisson GAM on daily counts.
//! The two are combined as `λ(u, t) = λ(u) λ(t) / C`, with `C` chosen so that
//! the expected number of events equals the observed count.

// NaN-rejecting `!(a > b)` checks and index loops over triangular factors
// are intentional
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod basis;
pub mod error;
pub mod geom;
pub mod glm;
mod linalg;
pub mod quadrature;
pub mod raster;
pub mod separable;
pub mod spatial;
pub mod temporal;

pub use error::{Error, Result};
pub use geom::{Event, Interval, STPointPattern, SpatialPoint, Window};
pub use glm::{DesignMatrix, FitResult, Penalty};
pub use quadrature::QuadratureScheme;
pub use raster::GridRaster;
pub use separable::{combine, simulate_thinning, SeparableIntensity, SpatialIntensity, TemporalIntensity};
pub use spatial::{fit_spatial, SpatialCovariate, SpatialModelConfig, SpatialModelFit};
pub use temporal::{fit_temporal, TemporalModelConfig, TemporalModelFit, TemporalSeries};
