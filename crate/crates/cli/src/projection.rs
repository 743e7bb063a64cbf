//! Declared lon/lat → km mappings.

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use stpp_core::SpatialPoint;

/// Mean Earth radius in km.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Projector {
    /// `x = R (λ − λ₀) cos φ`, `y = R (φ − φ₀)` with angles in radians.
    Sinusoidal { lon0: f64, lat0: f64 },
    /// `x = c[0] + c[1] lon + c[2] lat`, `y = c[3] + c[4] lon + c[5] lat`.
    Affine { coefficients: [f64; 6] },
}

impl Projector {
    pub fn affine(coefficients: [f64; 6]) -> Result<Self> {
        let [_, a, b, _, c, d] = coefficients;
        if (a * d - b * c).abs() < 1e-300 || coefficients.iter().any(|v| !v.is_finite()) {
            bail!("affine projection {coefficients:?} is not invertible");
        }
        Ok(Self::Affine { coefficients })
    }

    pub fn forward(&self, lon: f64, lat: f64) -> SpatialPoint {
        match *self {
            Self::Sinusoidal { lon0, lat0 } => SpatialPoint::new(
                EARTH_RADIUS_KM * (lon - lon0).to_radians() * lat.to_radians().cos(),
                EARTH_RADIUS_KM * (lat - lat0).to_radians(),
            ),
            Self::Affine { coefficients: c } => {
                SpatialPoint::new(c[0] + c[1] * lon + c[2] * lat, c[3] + c[4] * lon + c[5] * lat)
            }
        }
    }

    /// `(lon, lat)` of a projected point.
    pub fn inverse(&self, p: &SpatialPoint) -> (f64, f64) {
        match *self {
            Self::Sinusoidal { lon0, lat0 } => {
                let lat = lat0 + (p.y / EARTH_RADIUS_KM).to_degrees();
                let lon = lon0 + (p.x / (EARTH_RADIUS_KM * lat.to_radians().cos())).to_degrees();
                (lon, lat)
            }
            Self::Affine { coefficients: c } => {
                let (u, v) = (p.x - c[0], p.y - c[3]);
                let det = c[1] * c[5] - c[2] * c[4];
                ((c[5] * u - c[2] * v) / det, (c[1] * v - c[4] * u) / det)
            }
        }
    }
}
