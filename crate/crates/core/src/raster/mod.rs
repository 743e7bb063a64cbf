//! Regular-grid covariates: point lookup, Horn slope, ESRI ASCII grids.

mod ascii;
mod landuse;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use landuse::{CategoryTable, LandUse, LandUseTable};

use crate::error::{Error, Result};
use crate::geom::SpatialPoint;

pub const DEFAULT_NODATA: f64 = -9999.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMethod {
    #[default]
    Nearest,
    Bilinear,
}

/// Regular grid with row-major values, row 0 being the northernmost row.
///
/// `(x0, y0)` is the lower-left corner of the lower-left cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRaster {
    x0: f64,
    y0: f64,
    dx: f64,
    dy: f64,
    ncols: usize,
    nrows: usize,
    values: Vec<f64>,
    nodata: f64,
    categories: Option<CategoryTable>,
}

impl GridRaster {
    pub fn new(
        x0: f64,
        y0: f64,
        dx: f64,
        dy: f64,
        ncols: usize,
        nrows: usize,
        values: Vec<f64>,
        nodata: f64,
    ) -> Result<Self> {
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(Error::InvalidInput(format!("cell sizes must be positive, got {dx} x {dy}")));
        }
        if !(x0.is_finite() && y0.is_finite()) {
            return Err(Error::InvalidInput("raster origin must be finite".into()));
        }
        if ncols == 0 || nrows == 0 || ncols * nrows != values.len() {
            return Err(Error::InvalidInput(format!(
                "{ncols} x {nrows} grid does not match {} values",
                values.len()
            )));
        }
        Ok(Self {
            x0,
            y0,
            dx,
            dy,
            ncols,
            nrows,
            values,
            nodata,
            categories: None,
        })
    }

    /// Builds a grid by evaluating `f` at every cell center.
    pub fn from_fn(
        x0: f64,
        y0: f64,
        dx: f64,
        dy: f64,
        ncols: usize,
        nrows: usize,
        nodata: f64,
        f: impl Fn(SpatialPoint) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(ncols * nrows);
        for row in 0..nrows {
            for col in 0..ncols {
                let c = SpatialPoint::new(
                    x0 + (col as f64 + 0.5) * dx,
                    y0 + ((nrows - row) as f64 - 0.5) * dy,
                );
                values.push(f(c));
            }
        }
        Self::new(x0, y0, dx, dy, ncols, nrows, values, nodata)
    }

    /// Marks the raster as categorical. Every non-nodata value must be a
    /// code present in the table.
    pub fn with_categories(mut self, table: CategoryTable) -> Result<Self> {
        for &v in &self.values {
            if self.is_nodata(v) {
                continue;
            }
            if v.fract() != 0.0 || table.label(v as i64).is_none() {
                return Err(Error::InvalidInput(format!("cell value {v} has no category label")));
            }
        }
        self.categories = Some(table);
        Ok(self)
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn y0(&self) -> f64 {
        self.y0
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn dy(&self) -> f64 {
        self.dy
    }
    pub fn ncols(&self) -> usize {
        self.ncols
    }
    pub fn nrows(&self) -> usize {
        self.nrows
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn nodata(&self) -> f64 {
        self.nodata
    }
    pub fn categories(&self) -> Option<&CategoryTable> {
        self.categories.as_ref()
    }
    pub fn is_categorical(&self) -> bool {
        self.categories.is_some()
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v.is_nan() || v == self.nodata
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.ncols + col]
    }

    /// Value at (row, col), or `None` on nodata.
    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.get(row, col);
        (!self.is_nodata(v)).then_some(v)
    }

    pub fn cell_center(&self, row: usize, col: usize) -> SpatialPoint {
        SpatialPoint::new(
            self.x0 + (col as f64 + 0.5) * self.dx,
            self.y0 + ((self.nrows - row) as f64 - 0.5) * self.dy,
        )
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + self.ncols as f64 * self.dx
    }

    pub fn y_max(&self) -> f64 {
        self.y0 + self.nrows as f64 * self.dy
    }

    /// Cell containing `p`; the top and right edges belong to the last cell.
    pub fn cell_of(&self, p: &SpatialPoint) -> Option<(usize, usize)> {
        if !(p.x >= self.x0 && p.x <= self.x_max() && p.y >= self.y0 && p.y <= self.y_max()) {
            return None;
        }
        let col = (((p.x - self.x0) / self.dx).floor() as usize).min(self.ncols - 1);
        let from_bottom = (((p.y - self.y0) / self.dy).floor() as usize).min(self.nrows - 1);
        Some((self.nrows - 1 - from_bottom, col))
    }

    /// Covariate value at `p`; `Ok(None)` when `p` is outside the grid or
    /// on nodata.
    pub fn sample(&self, p: &SpatialPoint, method: SampleMethod) -> Result<Option<f64>> {
        match method {
            SampleMethod::Nearest => Ok(self.cell_of(p).and_then(|(r, c)| self.value(r, c))),
            SampleMethod::Bilinear => {
                if self.is_categorical() {
                    return Err(Error::InvalidMethod(
                        "bilinear interpolation is undefined for categorical rasters".into(),
                    ));
                }
                Ok(self.bilinear(p))
            }
        }
    }

    fn bilinear(&self, p: &SpatialPoint) -> Option<f64> {
        self.cell_of(p)?;
        // continuous index in cell-center units, measured from the bottom row
        let fx = ((p.x - self.x0) / self.dx - 0.5).clamp(0.0, (self.ncols - 1) as f64);
        let fy = ((p.y - self.y0) / self.dy - 0.5).clamp(0.0, (self.nrows - 1) as f64);
        let c0 = (fx.floor() as usize).min(self.ncols.saturating_sub(2));
        let b0 = (fy.floor() as usize).min(self.nrows.saturating_sub(2));
        let c1 = (c0 + 1).min(self.ncols - 1);
        let b1 = (b0 + 1).min(self.nrows - 1);
        let tx = fx - c0 as f64;
        let ty = fy - b0 as f64;
        let corners = [
            (b0, c0, (1.0 - tx) * (1.0 - ty)),
            (b0, c1, tx * (1.0 - ty)),
            (b1, c0, (1.0 - tx) * ty),
            (b1, c1, tx * ty),
        ];
        let mut acc = 0.0;
        for (b, c, w) in corners {
            if w == 0.0 {
                continue;
            }
            acc += w * self.value(self.nrows - 1 - b, c)?;
        }
        Some(acc)
    }

    /// Same geometry, new values (categories dropped).
    pub fn with_values(&self, values: Vec<f64>, nodata: f64) -> Result<Self> {
        Self::new(self.x0, self.y0, self.dx, self.dy, self.ncols, self.nrows, values, nodata)
    }

    /// Multiplies every defined cell by `factor`, e.g. metres to kilometres.
    pub fn scaled(&self, factor: f64) -> Self {
        let values = self
            .values
            .iter()
            .map(|&v| if self.is_nodata(v) { v } else { v * factor })
            .collect();
        Self {
            values,
            categories: None,
            ..self.clone()
        }
    }
}

/// Slope in degrees using Horn's 3×3 weighted finite differences.
///
/// Neighbour numbering around the center cell `A0`:
/// ```text
/// A7 A8 A1      north
/// A6 A0 A2
/// A5 A4 A3      south
/// ```
/// `gx = ((A1 + 2A2 + A3) - (A7 + 2A6 + A5)) / (8 dx)`,
/// `gy = ((A7 + 2A8 + A1) - (A5 + 2A4 + A3)) / (8 dy)`,
/// slope = atan(sqrt(gx² + gy²)). Altitude and cell sizes must share a unit.
/// Border cells and cells touching nodata are nodata in the output.
pub fn horn_slope(dem: &GridRaster) -> Result<GridRaster> {
    if dem.is_categorical() {
        return Err(Error::InvalidInput("slope requires a numeric DEM".into()));
    }
    let (nrows, ncols) = (dem.nrows, dem.ncols);
    if nrows < 3 || ncols < 3 {
        return Err(Error::InvalidInput(format!(
            "slope needs at least a 3x3 grid, got {ncols}x{nrows}"
        )));
    }
    let nodata = if dem.nodata.is_nan() { DEFAULT_NODATA } else { dem.nodata };
    let eight_dx = 8.0 * dem.dx;
    let eight_dy = 8.0 * dem.dy;

    let values: Vec<f64> = (0..nrows)
        .into_par_iter()
        .flat_map_iter(|row| {
            (0..ncols).map(move |col| {
                if row == 0 || col == 0 || row == nrows - 1 || col == ncols - 1 {
                    return nodata;
                }
                let at = |r: usize, c: usize| dem.value(r, c);
                let cells = (|| {
                    Some([
                        at(row - 1, col + 1)?, // A1
                        at(row, col + 1)?,     // A2
                        at(row + 1, col + 1)?, // A3
                        at(row + 1, col)?,     // A4
                        at(row + 1, col - 1)?, // A5
                        at(row, col - 1)?,     // A6
                        at(row - 1, col - 1)?, // A7
                        at(row - 1, col)?,     // A8
                        at(row, col)?,
                    ])
                })();
                let Some([a1, a2, a3, a4, a5, a6, a7, a8, _]) = cells else {
                    return nodata;
                };
                let gx = ((a1 + 2.0 * a2 + a3) - (a7 + 2.0 * a6 + a5)) / eight_dx;
                let gy = ((a7 + 2.0 * a8 + a1) - (a5 + 2.0 * a4 + a3)) / eight_dy;
                gx.hypot(gy).atan().to_degrees()
            })
        })
        .collect();
    dem.with_values(values, nodata)
}

pub const KELVIN_OFFSET: f64 = 273.15;

pub fn kelvin_to_celsius(kelvin: f64) -> Result<f64> {
    if !(kelvin >= 0.0) {
        return Err(Error::InvalidInput(format!("temperature {kelvin} K is below absolute zero")));
    }
    Ok(kelvin - KELVIN_OFFSET)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(a: f64, b: f64, n: usize, cell: f64) -> GridRaster {
        GridRaster::from_fn(0.0, 0.0, cell, cell, n, n, DEFAULT_NODATA, |p| a * p.x + b * p.y).unwrap()
    }

    fn interior(r: &GridRaster) -> Vec<f64> {
        let mut out = Vec::new();
        for row in 1..r.nrows() - 1 {
            for col in 1..r.ncols() - 1 {
                out.push(r.get(row, col));
            }
        }
        out
    }

    #[test]
    fn constant_raster_bilinear() {
        let r = GridRaster::new(0.0, 0.0, 1.0, 1.0, 3, 3, vec![7.0; 9], DEFAULT_NODATA).unwrap();
        for p in [SpatialPoint::new(0.2, 0.9), SpatialPoint::new(1.5, 2.7), SpatialPoint::new(3.0, 3.0)] {
            assert_eq!(r.sample(&p, SampleMethod::Bilinear).unwrap(), Some(7.0));
        }
    }

    #[test]
    fn two_by_two_center_bilinear() {
        let r = GridRaster::new(0.0, 0.0, 1.0, 1.0, 2, 2, vec![0.0, 1.0, 1.0, 2.0], DEFAULT_NODATA).unwrap();
        let v = r.sample(&SpatialPoint::new(1.0, 1.0), SampleMethod::Bilinear).unwrap();
        assert_eq!(v, Some(1.0));
    }

    #[test]
    fn outside_and_nodata_are_missing() {
        let r = GridRaster::new(0.0, 0.0, 1.0, 1.0, 2, 1, vec![1.0, DEFAULT_NODATA], DEFAULT_NODATA).unwrap();
        let out = SpatialPoint::new(5.0, 0.5);
        assert_eq!(r.sample(&out, SampleMethod::Nearest).unwrap(), None);
        assert_eq!(r.sample(&out, SampleMethod::Bilinear).unwrap(), None);
        assert_eq!(r.sample(&SpatialPoint::new(1.5, 0.5), SampleMethod::Nearest).unwrap(), None);
        assert_eq!(r.sample(&SpatialPoint::new(0.5, 0.5), SampleMethod::Nearest).unwrap(), Some(1.0));
    }

    #[test]
    fn nearest_uses_top_row_first_layout() {
        // row 0 is north
        let r = GridRaster::new(0.0, 0.0, 1.0, 1.0, 1, 2, vec![10.0, 20.0], DEFAULT_NODATA).unwrap();
        assert_eq!(r.sample(&SpatialPoint::new(0.5, 1.5), SampleMethod::Nearest).unwrap(), Some(10.0));
        assert_eq!(r.sample(&SpatialPoint::new(0.5, 0.5), SampleMethod::Nearest).unwrap(), Some(20.0));
    }

    #[test]
    fn bilinear_rejected_on_categorical() {
        let table = CategoryTable::from_pairs([(1, "a".to_string())]).unwrap();
        let r = GridRaster::new(0.0, 0.0, 1.0, 1.0, 1, 1, vec![1.0], DEFAULT_NODATA)
            .unwrap()
            .with_categories(table)
            .unwrap();
        let p = SpatialPoint::new(0.5, 0.5);
        assert!(matches!(r.sample(&p, SampleMethod::Bilinear), Err(Error::InvalidMethod(_))));
        assert_eq!(r.sample(&p, SampleMethod::Nearest).unwrap(), Some(1.0));
    }

    #[test]
    fn flat_dem_has_zero_slope() {
        let s = horn_slope(&plane(0.0, 0.0, 6, 1.0)).unwrap();
        assert!(interior(&s).iter().all(|&v| v == 0.0));
        assert_eq!(s.get(0, 0), DEFAULT_NODATA);
    }

    #[test]
    fn unit_gradient_plane_is_45_degrees() {
        let s = horn_slope(&plane(1.0, 0.0, 5, 1.0)).unwrap();
        for v in interior(&s) {
            assert!((v - 45.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn plane_3x_4y() {
        let s = horn_slope(&plane(3.0, 4.0, 5, 1.0)).unwrap();
        let expected = 5.0_f64.atan().to_degrees();
        assert!((expected - 78.690).abs() < 1e-3);
        for v in interior(&s) {
            assert!((v - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn anisotropic_cells() {
        let dem = GridRaster::from_fn(0.0, 0.0, 2.0, 0.5, 5, 7, DEFAULT_NODATA, |p| 0.3 * p.x - 0.7 * p.y).unwrap();
        let s = horn_slope(&dem).unwrap();
        let expected = 0.3_f64.hypot(0.7).atan().to_degrees();
        for v in interior(&s) {
            assert!((v - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn nodata_neighbourhood_propagates() {
        let mut values = vec![1.0; 25];
        values[12] = DEFAULT_NODATA;
        let dem = GridRaster::new(0.0, 0.0, 1.0, 1.0, 5, 5, values, DEFAULT_NODATA).unwrap();
        let s = horn_slope(&dem).unwrap();
        assert_eq!(s.get(1, 1), DEFAULT_NODATA);
        assert_eq!(s.get(2, 2), DEFAULT_NODATA);
    }

    #[test]
    fn small_grid_rejected() {
        let dem = GridRaster::new(0.0, 0.0, 1.0, 1.0, 2, 3, vec![0.0; 6], DEFAULT_NODATA).unwrap();
        assert!(matches!(horn_slope(&dem), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn kelvin_conversion() {
        assert_eq!(kelvin_to_celsius(273.15).unwrap(), 0.0);
        assert_eq!(kelvin_to_celsius(0.0).unwrap(), -273.15);
        assert!((kelvin_to_celsius(300.0).unwrap() - 26.85).abs() < 1e-12);
        assert!(kelvin_to_celsius(-1.0).is_err());
    }
}
