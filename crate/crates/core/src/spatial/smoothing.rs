//! Edge-corrected Gaussian kernel smoothing and bandwidth selection.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{SpatialPoint, Window};
use crate::glm::log_grid;
use crate::quadrature::QuadratureScheme;
use crate::raster::{GridRaster, DEFAULT_NODATA};

/// Kernel contributions beyond this many standard deviations are dropped.
const CUTOFF_SIGMAS: f64 = 6.0;
const MAX_BUCKETS_PER_AXIS: usize = 2048;
const MAX_HIST_BINS: usize = 200_000;
const PAIR_CHUNK: usize = 256;

/// Isotropic bivariate Gaussian kernel with standard deviation `sigma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    pub sigma: f64,
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidInput(format!("bandwidth must be positive, got {sigma}")));
        }
        Ok(Self { sigma })
    }

    /// κ at squared distance `d2`.
    pub fn density(&self, d2: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        (-d2 / (2.0 * s2)).exp() / (2.0 * PI * s2)
    }

    pub fn cutoff(&self) -> f64 {
        CUTOFF_SIGMAS * self.sigma
    }
}

/// Uniform bucket index for fixed-radius neighbour queries.
struct Buckets<'a> {
    points: &'a [SpatialPoint],
    min_x: f64,
    min_y: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    reach: isize,
    cells: Vec<Vec<usize>>,
}

impl<'a> Buckets<'a> {
    fn new(points: &'a [SpatialPoint], radius: f64) -> Self {
        let (mut min_x, mut min_y, mut max_x, mut max_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in points {
            min_x = min_x.min(p.x);
            min_y = min_y.min(p.y);
            max_x = max_x.max(p.x);
            max_y = max_y.max(p.y);
        }
        if points.is_empty() {
            (min_x, min_y, max_x, max_y) = (0.0, 0.0, 0.0, 0.0);
        }
        let extent = (max_x - min_x).max(max_y - min_y);
        let cell = radius.max(extent / MAX_BUCKETS_PER_AXIS as f64).max(f64::MIN_POSITIVE);
        let nx = ((max_x - min_x) / cell) as usize + 1;
        let ny = ((max_y - min_y) / cell) as usize + 1;
        let mut cells = vec![Vec::new(); nx * ny];
        for (i, p) in points.iter().enumerate() {
            let cx = (((p.x - min_x) / cell) as usize).min(nx - 1);
            let cy = (((p.y - min_y) / cell) as usize).min(ny - 1);
            cells[cy * nx + cx].push(i);
        }
        Self {
            points,
            min_x,
            min_y,
            cell,
            nx,
            ny,
            reach: (radius / cell).ceil() as isize,
            cells,
        }
    }

    /// Calls `f(index, squared distance)` for every point within the radius
    /// window around `u` (a superset of the disc).
    fn for_near(&self, u: &SpatialPoint, mut f: impl FnMut(usize, f64)) {
        let cx = ((u.x - self.min_x) / self.cell).floor() as isize;
        let cy = ((u.y - self.min_y) / self.cell).floor() as isize;
        for gy in (cy - self.reach).max(0)..=(cy + self.reach).min(self.ny as isize - 1) {
            for gx in (cx - self.reach).max(0)..=(cx + self.reach).min(self.nx as isize - 1) {
                for &i in &self.cells[gy as usize * self.nx + gx as usize] {
                    f(i, u.distance_squared(&self.points[i]));
                }
            }
        }
    }

    fn kernel_sum(&self, masses: &[f64], kernel: &GaussianKernel, u: &SpatialPoint) -> f64 {
        let r2 = kernel.cutoff().powi(2);
        let mut acc = 0.0;
        self.for_near(u, |i, d2| {
            if d2 <= r2 {
                acc += masses[i] * kernel.density(d2);
            }
        });
        acc
    }
}

/// Edge-corrected kernel estimate `e(u) Σ m_i κ(u − x_i)` with
/// `e(u) = 1 / Σ_k a_k κ(u − u_k)` over the quadrature scheme. Entries are
/// `None` where no quadrature point lies within the kernel cutoff.
pub fn kernel_intensity(
    scheme: &QuadratureScheme,
    points: &[SpatialPoint],
    masses: &[f64],
    sigma: f64,
    at: &[SpatialPoint],
) -> Result<Vec<Option<f64>>> {
    if points.len() != masses.len() {
        return Err(Error::InvalidInput("one mass per point required".into()));
    }
    let kernel = GaussianKernel::new(sigma)?;
    let quad = Buckets::new(scheme.points(), kernel.cutoff());
    let pts = Buckets::new(points, kernel.cutoff());
    Ok(at
        .par_iter()
        .map(|u| {
            let denom = quad.kernel_sum(scheme.weights(), &kernel, u);
            (denom > 0.0).then(|| pts.kernel_sum(masses, &kernel, u) / denom)
        })
        .collect())
}

/// Smoothed data, smoothed fit and their difference on a common grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualField {
    /// `s(u) = λ̃(u) − λ†(u)`.
    pub residual: GridRaster,
    /// λ̃: edge-corrected kernel estimate from the data.
    pub data_smooth: GridRaster,
    /// λ†: the fitted masses `a_k λ̂(u_k)` smoothed the same way.
    pub fitted_smooth: GridRaster,
    pub bandwidth: f64,
}

impl ResidualField {
    /// Mean of `|s|` over cells with data.
    pub fn mean_abs_residual(&self) -> f64 {
        mean_valid(&self.residual, f64::abs)
    }
}

pub(crate) fn mean_valid(g: &GridRaster, f: impl Fn(f64) -> f64) -> f64 {
    let (sum, n) = g
        .values()
        .iter()
        .filter(|v| !g.is_nodata(**v))
        .fold((0.0, 0usize), |(s, n), v| (s + f(*v), n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Smooths unit-or-weighted data masses and per-quadrature-point fitted
/// masses with the same kernel and edge correction on an `nx × ny` grid over
/// the scheme's bounding box. Cells outside the window are nodata.
pub fn smoothed_residual_field(
    scheme: &QuadratureScheme,
    data: &[SpatialPoint],
    data_masses: &[f64],
    fitted_masses: &[f64],
    sigma: f64,
    nx: usize,
    ny: usize,
) -> Result<ResidualField> {
    if fitted_masses.len() != scheme.len() {
        return Err(Error::InvalidInput("one fitted mass per quadrature point required".into()));
    }
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidInput("residual grid is empty".into()));
    }
    let window = scheme.window();
    let bb = *window.bbox();
    let (dx, dy) = (bb.width() / nx as f64, bb.height() / ny as f64);
    let template = GridRaster::new(bb.min_x, bb.min_y, dx, dy, nx, ny, vec![DEFAULT_NODATA; nx * ny], DEFAULT_NODATA)?;
    let centers: Vec<SpatialPoint> =
        (0..ny).flat_map(|r| (0..nx).map(move |c| (r, c))).map(|(r, c)| template.cell_center(r, c)).collect();
    if data.len() != data_masses.len() {
        return Err(Error::InvalidInput("one mass per point required".into()));
    }
    let kernel = GaussianKernel::new(sigma)?;
    let quad = Buckets::new(scheme.points(), kernel.cutoff());
    let pts = Buckets::new(data, kernel.cutoff());
    let weights = scheme.weights();
    let r2 = kernel.cutoff().powi(2);
    // the edge correction and the fitted masses share quadrature points, so
    // both sums come from one pass
    let smoothed: Vec<Option<(f64, f64)>> = centers
        .par_iter()
        .map(|u| {
            if !window.contains(u) {
                return None;
            }
            let (mut denom, mut fitted) = (0.0, 0.0);
            quad.for_near(u, |i, d2| {
                if d2 <= r2 {
                    let k = kernel.density(d2);
                    denom += weights[i] * k;
                    fitted += fitted_masses[i] * k;
                }
            });
            (denom > 0.0).then(|| (pts.kernel_sum(data_masses, &kernel, u) / denom, fitted / denom))
        })
        .collect();

    let mut res = Vec::with_capacity(centers.len());
    let mut dat = Vec::with_capacity(centers.len());
    let mut fit = Vec::with_capacity(centers.len());
    for cell in smoothed {
        match cell {
            Some((a, b)) => {
                res.push(a - b);
                dat.push(a);
                fit.push(b);
            }
            _ => {
                res.push(DEFAULT_NODATA);
                dat.push(DEFAULT_NODATA);
                fit.push(DEFAULT_NODATA);
            }
        }
    }
    Ok(ResidualField {
        residual: template.with_values(res, DEFAULT_NODATA)?,
        data_smooth: template.with_values(dat, DEFAULT_NODATA)?,
        fitted_smooth: template.with_values(fit, DEFAULT_NODATA)?,
        bandwidth: sigma,
    })
}

/// `n` log-spaced bandwidths on `[lo, hi]`.
pub fn bandwidth_candidates(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    log_grid(lo, hi.max(lo), n)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BandwidthSelection {
    pub bandwidth: f64,
    pub candidates: Vec<f64>,
    pub scores: Vec<f64>,
}

/// Mean-square-error criterion
/// `M(σ) = 1/(4πσ²λ) + (λ²|W|)⁻¹ Σ_{i≠j} w_ij [κ_{√2σ}(r_ij) − 2κ_σ(r_ij)]`
/// with `λ = n/|W|` and translation weights `w_ij` from the window's
/// bounding box. Pair distances are binned once and reused for every σ.
pub fn diggle_criterion(points: &[SpatialPoint], window: &Window, sigmas: &[f64]) -> Result<Vec<f64>> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InvalidInput("bandwidth selection needs at least two points".into()));
    }
    if sigmas.is_empty() || sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidInput("bandwidth candidates must be positive".into()));
    }
    let bb = window.bbox();
    let (w, h) = (bb.width(), bb.height());
    let s_min = sigmas.iter().cloned().fold(f64::MAX, f64::min);
    let s_max = sigmas.iter().cloned().fold(0.0, f64::max);
    let r_max = (CUTOFF_SIGMAS * 2f64.sqrt() * s_max).min(bb.diameter());
    let mut width = s_min / 64.0;
    if r_max / width > MAX_HIST_BINS as f64 {
        width = r_max / MAX_HIST_BINS as f64;
    }
    let nbins = (r_max / width) as usize + 2;

    // per-chunk histograms collected in order keep the sum deterministic
    let chunks: Vec<Vec<f64>> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(PAIR_CHUNK)
        .map(|idx| {
            let mut hist = vec![0.0; nbins];
            for &i in idx {
                for j in i + 1..n {
                    let (ddx, ddy) = ((points[i].x - points[j].x).abs(), (points[i].y - points[j].y).abs());
                    let r = ddx.hypot(ddy);
                    if r > r_max {
                        continue;
                    }
                    let denom = (w - ddx) * (h - ddy);
                    if denom <= 0.0 {
                        continue;
                    }
                    // linear binning onto the two nearest grid distances
                    let pos = r / width;
                    let b = (pos as usize).min(nbins - 2);
                    let frac = pos - b as f64;
                    let wt = w * h / denom;
                    hist[b] += wt * (1.0 - frac);
                    hist[b + 1] += wt * frac;
                }
            }
            hist
        })
        .collect();
    let mut hist = vec![0.0; nbins];
    for c in &chunks {
        for (a, b) in hist.iter_mut().zip(c) {
            *a += b;
        }
    }

    let area = window.area();
    let lambda = n as f64 / area;
    Ok(sigmas
        .iter()
        .map(|&s| {
            let k1 = GaussianKernel { sigma: s * 2f64.sqrt() };
            let k2 = GaussianKernel { sigma: s };
            let pair: f64 = hist
                .iter()
                .enumerate()
                .filter(|(_, wt)| **wt != 0.0)
                .map(|(b, wt)| {
                    let r = b as f64 * width;
                    wt * (k1.density(r * r) - 2.0 * k2.density(r * r))
                })
                .sum();
            1.0 / (4.0 * PI * s * s * lambda) + 2.0 * pair / (lambda * lambda * area)
        })
        .collect())
}

/// Candidate minimising [`diggle_criterion`]; ties go to the larger bandwidth.
pub fn select_bandwidth(points: &[SpatialPoint], window: &Window, candidates: &[f64]) -> Result<BandwidthSelection> {
    let scores = diggle_criterion(points, window, candidates)?;
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] < scores[best] || (scores[i] == scores[best] && candidates[i] > candidates[best]) {
            best = i;
        }
    }
    Ok(BandwidthSelection {
        bandwidth: candidates[best],
        candidates: candidates.to_vec(),
        scores,
    })
}
