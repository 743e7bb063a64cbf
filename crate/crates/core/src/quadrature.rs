//! Berman–Turner quadrature: data plus dummy points with area weights.
//!
//! Dummy points are the centers of an `nx × ny` grid of tiles laid over the
//! window's bounding box. Each tile's area is its exact intersection with the
//! window (polygon clipping), shared equally by every quadrature point that
//! falls in the tile, so the weights always add up to the window area.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{clip_ring_to_rect, BBox, SpatialPoint, Window};

pub const DEFAULT_DUMMY_GRID: (usize, usize) = (128, 128);

// tiles whose share of the window is below this fraction of a full tile are
// treated as empty
const SLIVER_FRACTION: f64 = 1e-12;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadratureScheme {
    points: Vec<SpatialPoint>,
    is_data: Vec<bool>,
    weights: Vec<f64>,
    window: Window,
    n_data: usize,
}

struct TileGrid {
    bbox: BBox,
    nx: usize,
    ny: usize,
    w: f64,
    h: f64,
}

impl TileGrid {
    fn rect(&self, ix: usize, iy: usize) -> BBox {
        let min_x = self.bbox.min_x + ix as f64 * self.w;
        let min_y = self.bbox.min_y + iy as f64 * self.h;
        BBox {
            min_x,
            min_y,
            max_x: if ix + 1 == self.nx { self.bbox.max_x } else { min_x + self.w },
            max_y: if iy + 1 == self.ny { self.bbox.max_y } else { min_y + self.h },
        }
    }

    fn index_of(&self, p: &SpatialPoint) -> (usize, usize) {
        let ix = ((p.x - self.bbox.min_x) / self.w).floor().max(0.0) as usize;
        let iy = ((p.y - self.bbox.min_y) / self.h).floor().max(0.0) as usize;
        (ix.min(self.nx - 1), iy.min(self.ny - 1))
    }
}

/// Builds the quadrature scheme for `data` (all inside `window`) with an
/// `nx × ny` dummy grid.
pub fn make_scheme(window: &Window, data: &[SpatialPoint], nx: usize, ny: usize) -> Result<QuadratureScheme> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidInput(format!("dummy grid {nx}x{ny} is empty")));
    }
    if !(window.area() > 0.0) {
        return Err(Error::InvalidInput("window has no area".into()));
    }
    let bbox = *window.bbox();
    let grid = TileGrid {
        bbox,
        nx,
        ny,
        w: bbox.width() / nx as f64,
        h: bbox.height() / ny as f64,
    };
    let sliver = SLIVER_FRACTION * grid.w * grid.h;

    let tile_area: Vec<f64> = (0..nx * ny)
        .into_par_iter()
        .map(|k| {
            let a = window.intersection_area(&grid.rect(k % nx, k / nx));
            if a > sliver {
                a
            } else {
                0.0
            }
        })
        .collect();

    let mut tile_of_data = Vec::with_capacity(data.len());
    for (i, p) in data.iter().enumerate() {
        if !window.contains(p) {
            return Err(Error::InvalidInput(format!(
                "data point {i} at ({}, {}) is outside the window",
                p.x, p.y
            )));
        }
        tile_of_data.push(data_tile(&grid, &tile_area, p));
    }

    let dummies: Vec<(SpatialPoint, usize)> = (0..nx * ny)
        .into_par_iter()
        .filter(|&k| tile_area[k] > 0.0)
        .map(|k| (dummy_location(window, &grid.rect(k % nx, k / nx)), k))
        .collect();

    if dummies.len() <= data.len() {
        return Err(Error::InsufficientDummies {
            data: data.len(),
            dummies: dummies.len(),
        });
    }

    let mut counts = vec![0usize; nx * ny];
    for &k in tile_of_data.iter().chain(dummies.iter().map(|(_, k)| k)) {
        counts[k] += 1;
    }

    let n = data.len();
    let mut points = Vec::with_capacity(n + dummies.len());
    let mut is_data = Vec::with_capacity(n + dummies.len());
    let mut weights = Vec::with_capacity(n + dummies.len());
    for (p, &k) in data.iter().zip(&tile_of_data) {
        points.push(*p);
        is_data.push(true);
        weights.push(tile_area[k] / counts[k] as f64);
    }
    for (p, k) in dummies {
        points.push(p);
        is_data.push(false);
        weights.push(tile_area[k] / counts[k] as f64);
    }

    Ok(QuadratureScheme {
        points,
        is_data,
        weights,
        window: window.clone(),
        n_data: n,
    })
}

/// Tile holding a data point; points on tile edges or in sliver tiles move to
/// the nearest neighbouring tile that has window area.
fn data_tile(grid: &TileGrid, tile_area: &[f64], p: &SpatialPoint) -> usize {
    let (ix, iy) = grid.index_of(p);
    let k = iy * grid.nx + ix;
    if tile_area[k] > 0.0 {
        return k;
    }
    let dist_to = |jx: usize, jy: usize| {
        let r = grid.rect(jx, jy);
        let dx = (r.min_x - p.x).max(p.x - r.max_x).max(0.0);
        let dy = (r.min_y - p.y).max(p.y - r.max_y).max(0.0);
        dx.hypot(dy)
    };
    let mut best: Option<(f64, usize)> = None;
    for jy in 0..grid.ny {
        for jx in 0..grid.nx {
            let j = jy * grid.nx + jx;
            if tile_area[j] <= 0.0 {
                continue;
            }
            let d = dist_to(jx, jy);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, j));
            }
        }
    }
    best.map_or(k, |(_, j)| j)
}

/// Tile center when it lies in the window, otherwise the sub-grid node
/// closest to the center that does, otherwise a vertex of the clipped window
/// piece (which lies on the window boundary, hence inside).
fn dummy_location(window: &Window, rect: &BBox) -> SpatialPoint {
    let center = SpatialPoint::new(0.5 * (rect.min_x + rect.max_x), 0.5 * (rect.min_y + rect.max_y));
    if window.contains(&center) {
        return center;
    }
    const SUB: usize = 8;
    let mut candidates: Vec<SpatialPoint> = Vec::with_capacity(SUB * SUB);
    for j in 0..SUB {
        for i in 0..SUB {
            candidates.push(SpatialPoint::new(
                rect.min_x + (i as f64 + 0.5) / SUB as f64 * rect.width(),
                rect.min_y + (j as f64 + 0.5) / SUB as f64 * rect.height(),
            ));
        }
    }
    candidates.sort_by(|a, b| a.distance_squared(&center).total_cmp(&b.distance_squared(&center)));
    if let Some(p) = candidates.into_iter().find(|p| window.contains(p)) {
        return p;
    }
    for poly in window.polygons() {
        for v in clip_ring_to_rect(poly.exterior(), rect) {
            if window.contains(&v) {
                return v;
            }
        }
    }
    center
}

impl QuadratureScheme {
    /// Rebuilds a scheme from explicit points; data points are moved first.
    pub fn from_parts(window: Window, points: Vec<SpatialPoint>, is_data: Vec<bool>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != is_data.len() || points.len() != weights.len() {
            return Err(Error::InvalidInput("scheme columns have different lengths".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput(format!("quadrature weight {w} is not positive")));
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by_key(|&i| !is_data[i]);
        let n_data = is_data.iter().filter(|d| **d).count();
        Ok(Self {
            points: order.iter().map(|&i| points[i]).collect(),
            is_data: order.iter().map(|&i| is_data[i]).collect(),
            weights: order.iter().map(|&i| weights[i]).collect(),
            window,
            n_data,
        })
    }

    pub fn points(&self) -> &[SpatialPoint] {
        &self.points
    }

    pub fn is_data(&self) -> &[bool] {
        &self.is_data
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_data(&self) -> usize {
        self.n_data
    }

    pub fn n_dummy(&self) -> usize {
        self.points.len() - self.n_data
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Pseudo-responses `y_k = e_k / a_k`.
    pub fn pseudo_responses(&self) -> Vec<f64> {
        self.is_data
            .iter()
            .zip(&self.weights)
            .map(|(&d, &a)| if d { 1.0 / a } else { 0.0 })
            .collect()
    }

    /// `Σ a_k f(u_k)`.
    pub fn riemann_integral(&self, f: impl Fn(&SpatialPoint) -> f64 + Sync) -> Result<f64> {
        let values: Vec<f64> = self.points.par_iter().map(&f).collect();
        self.integrate_values(&values)
    }

    /// `Σ a_k v_k` for values already evaluated at the quadrature points.
    pub fn integrate_values(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.points.len() {
            return Err(Error::InvalidInput(format!(
                "{} values for {} quadrature points",
                values.len(),
                self.points.len()
            )));
        }
        let mut acc = 0.0;
        for ((p, a), v) in self.points.iter().zip(&self.weights).zip(values) {
            if !v.is_finite() {
                return Err(Error::NonFinite { x: p.x, y: p.y, value: *v });
            }
            acc += a * v;
        }
        Ok(acc)
    }

    /// CSV with header `x,y,is_data,weight`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "y", "is_data", "weight"])?;
        for ((p, d), a) in self.points.iter().zip(&self.is_data).zip(&self.weights) {
            w.write_record([
                p.x.to_string(),
                p.y.to_string(),
                u8::from(*d).to_string(),
                a.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, window: Window) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            x: f64,
            y: f64,
            is_data: u8,
            weight: f64,
        }
        let mut rdr = csv::Reader::from_reader(reader);
        let (mut points, mut is_data, mut weights) = (Vec::new(), Vec::new(), Vec::new());
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::Parse { line: i + 2, message: e.to_string() })?;
            points.push(SpatialPoint::new(row.x, row.y));
            is_data.push(row.is_data != 0);
            weights.push(row.weight);
        }
        Self::from_parts(window, points, is_data, weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_counting_weights() {
        let s = make_scheme(&Window::unit_square(), &[], 4, 4).unwrap();
        assert_eq!(s.n_dummy(), 16);
        assert!(s.weights().iter().all(|&a| a == 1.0 / 16.0));
    }

    #[test]
    fn data_point_shares_its_tile() {
        let s = make_scheme(&Window::unit_square(), &[SpatialPoint::new(0.1, 0.1)], 4, 4).unwrap();
        assert_eq!(s.n_data(), 1);
        assert!(s.is_data()[0]);
        assert_eq!(s.weights()[0], 0.03125);
        let shared = s
            .points()
            .iter()
            .zip(s.weights())
            .filter(|(p, _)| p.x < 0.25 && p.y < 0.25)
            .count();
        assert_eq!(shared, 2);
        assert!((s.total_weight() - 1.0).abs() < 1e-15);
        let y = s.pseudo_responses();
        assert_eq!(y[0], 32.0);
        assert!(y[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn insufficient_dummies() {
        let data: Vec<_> = (0..5).map(|i| SpatialPoint::new(0.1 + 0.1 * i as f64, 0.5)).collect();
        assert!(matches!(
            make_scheme(&Window::unit_square(), &data, 2, 2),
            Err(Error::InsufficientDummies { data: 5, dummies: 4 })
        ));
    }

    #[test]
    fn riemann_integrals() {
        let w = Window::unit_square();
        let s = make_scheme(&w, &[], 10, 10).unwrap();
        assert!((s.riemann_integral(|_| 1.0).unwrap() - 1.0).abs() < 1e-14);
        let s50 = make_scheme(&w, &[], 50, 50).unwrap();
        assert!((s50.riemann_integral(|p| p.x).unwrap() - 0.5).abs() < 1e-3);
        let s100 = make_scheme(&w, &[], 100, 100).unwrap();
        let v = s100.riemann_integral(|p| p.x * p.x + p.y * p.y).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn non_finite_integrand_names_point() {
        let s = make_scheme(&Window::unit_square(), &[], 2, 2).unwrap();
        let err = s.riemann_integral(|p| if p.x > 0.5 { f64::NAN } else { 1.0 }).unwrap_err();
        match err {
            Error::NonFinite { x, .. } => assert_eq!(x, 0.75),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn irregular_window_conserves_mass() {
        let tri = Window::from_polygon(vec![
            SpatialPoint::new(0.0, 0.0),
            SpatialPoint::new(3.0, 0.2),
            SpatialPoint::new(1.1, 2.3),
        ])
        .unwrap();
        let s = make_scheme(&tri, &[SpatialPoint::new(1.0, 1.0)], 13, 7).unwrap();
        assert!(((s.total_weight() - tri.area()) / tri.area()).abs() < 1e-12);
        assert!(s.points().iter().all(|p| tri.contains(p)));
        assert!(s.weights().iter().all(|&a| a > 0.0));
    }

    #[test]
    fn csv_round_trip() {
        let w = Window::unit_square();
        let s = make_scheme(&w, &[SpatialPoint::new(0.3, 0.7)], 3, 3).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = QuadratureScheme::read_csv(buf.as_slice(), w).unwrap();
        assert_eq!(back.points(), s.points());
        assert_eq!(back.weights(), s.weights());
        assert_eq!(back.n_data(), 1);
    }
}
