//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run alone with `cargo test -p stpp-cli --test acceptance`.

#![allow(clippy::needless_range_loop)]

mod common;

use std::f64::consts::{PI, TAU};
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use stpp_cli::{execute, rerun, Manifest, Step};
use stpp_core::glm::{fit_poisson, FitOptions};
use stpp_core::quadrature::make_scheme;
use stpp_core::raster::{horn_slope, DEFAULT_NODATA};
use stpp_core::separable::{simulate_spatial, simulate_thinning, SpatialFn, TemporalFn};
use stpp_core::{
    combine, fit_spatial, fit_temporal, DesignMatrix, GridRaster, Interval, STPointPattern, SpatialCovariate,
    SpatialModelConfig, SpatialPoint, TemporalModelConfig, TemporalSeries, Window,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Check = fn() -> Outcome;

fn main() -> ExitCode {
    let criteria: [(u32, &str, Duration, Check); 9] = [
        (1, "quadrature conservation", Duration::from_secs(10), quadrature_conservation),
        (2, "homogeneous oracle", Duration::from_secs(5), homogeneous_oracle),
        (3, "GLM oracle equivalence", Duration::from_secs(5), glm_oracle),
        (4, "coefficient recovery", Duration::from_secs(120), coefficient_recovery),
        (5, "Horn slope", Duration::from_secs(1), horn_planes),
        (6, "separable normalization", Duration::from_secs(10), separable_normalization),
        (7, "temporal GAM recovery", Duration::from_secs(60), temporal_recovery),
        (8, "residual self-consistency", Duration::from_secs(120), residual_consistency),
        (9, "determinism", Duration::MAX, determinism),
    ];
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let mut out = check();
        let elapsed = start.elapsed();
        if elapsed > limit {
            out.pass = false;
            out.detail.push_str(&format!("; runtime limit {limit:?} exceeded"));
        }
        if !out.pass {
            failed += 1;
        }
        println!(
            "{} {id} {name}: {} ({:.2} s)",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

/// Polygon area from its vertices, as a fan of triangles around the
/// centroid of the vertices.
fn shoelace(pts: &[SpatialPoint]) -> f64 {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    pts.iter()
        .zip(pts.iter().cycle().skip(1))
        .map(|(a, b)| (a.x - cx) * (b.y - cy) - (b.x - cx) * (a.y - cy))
        .sum::<f64>()
        .abs()
        / 2.0
}

/// Star-shaped polygon around a random center with `k` vertices. Jittered
/// angles keep every angular gap below π, so the ring is simple.
fn random_polygon(rng: &mut impl Rng) -> Vec<SpatialPoint> {
    let k = rng.random_range(3..=24);
    let cx = rng.random_range(-500.0..500.0);
    let cy = rng.random_range(-500.0..500.0);
    let scale = 10f64.powf(rng.random_range(-1.0..3.0));
    (0..k)
        .map(|i| {
            let a = (i as f64 + rng.random_range(-0.4..0.4)) * TAU / k as f64;
            let r = scale * rng.random_range(0.2..1.0);
            SpatialPoint::new(cx + r * a.cos(), cy + r * a.sin())
        })
        .collect()
}

fn uniform_points(window: &Window, n: usize, rng: &mut impl Rng) -> Vec<SpatialPoint> {
    let bb = *window.bbox();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = SpatialPoint::new(rng.random_range(bb.min_x..bb.max_x), rng.random_range(bb.min_y..bb.max_y));
        if window.contains(&p) {
            out.push(p);
        }
    }
    out
}

fn quadrature_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let ring = random_polygon(&mut rng);
        let area = shoelace(&ring);
        let window = match Window::from_polygon(ring) {
            Ok(w) => w,
            Err(e) => return Outcome::new(false, format!("window rejected: {e}")),
        };
        let n = rng.random_range(0..200);
        let data = uniform_points(&window, n, &mut rng);
        let scheme = match make_scheme(&window, &data, 128, 128) {
            Ok(s) => s,
            Err(e) => return Outcome::new(false, format!("scheme failed: {e}")),
        };
        let total: f64 = scheme.weights().iter().sum();
        worst = worst.max((total - area).abs() / area);
    }
    Outcome::new(worst < 1e-10, format!("max relative error {worst:.2e} over 50 windows"))
}

fn pentagon(cx: f64, cy: f64, r: f64) -> Vec<SpatialPoint> {
    (0..5)
        .map(|i| {
            let a = PI / 2.0 + i as f64 * TAU / 5.0;
            SpatialPoint::new(cx + r * a.cos(), cy + r * a.sin())
        })
        .collect()
}

fn homogeneous_oracle() -> Outcome {
    let ring = pentagon(0.0, 0.0, 25.0);
    let area = shoelace(&ring);
    let window = Window::from_polygon(ring).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let config = SpatialModelConfig {
        smooth: None,
        ..Default::default()
    };
    let mut worst = 0.0f64;
    for n in [100, 1000] {
        let events = uniform_points(&window, n, &mut rng)
            .into_iter()
            .map(|p| stpp_core::Event::new(p.x, p.y, 0.5))
            .collect();
        let pattern = STPointPattern::new(events, window.clone(), Interval::new(0.0, 1.0).unwrap()).unwrap();
        let fit = match fit_spatial(&pattern, &[], &config) {
            Ok(f) => f,
            Err(e) => return Outcome::new(false, format!("fit failed at n={n}: {e}")),
        };
        let theta = fit.fit().coefficients[0];
        worst = worst.max((theta - (n as f64 / area).ln()).abs());
    }
    Outcome::new(worst < 1e-6, format!("max |θ̂₀ − log(n/|W|)| = {worst:.2e}"))
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let p = b.len();
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..p {
            let f = a[r][c] / a[c][c];
            for k in c..p {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; p];
    for c in (0..p).rev() {
        let s: f64 = (c + 1..p).map(|k| a[c][k] * x[k]).sum();
        x[c] = (b[c] - s) / a[c][c];
    }
    x
}

fn loglik(x: &[Vec<f64>], y: &[f64], w: &[f64], beta: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .zip(w)
        .map(|((row, yi), wi)| {
            let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            wi * (yi * eta - eta.exp())
        })
        .sum()
}

/// Full-Newton maximizer of the weighted Poisson log-likelihood, with step
/// halving. `None` if it fails to settle (no finite MLE).
fn newton_oracle(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> Option<Vec<f64>> {
    let p = x[0].len();
    let ybar = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
    let mut beta = vec![0.0; p];
    beta[0] = ybar.max(1e-3).ln();
    for _ in 0..500 {
        let mut grad = vec![0.0; p];
        let mut hess = vec![vec![0.0; p]; p];
        for ((row, yi), wi) in x.iter().zip(y).zip(w) {
            let mu = row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>().exp();
            for j in 0..p {
                grad[j] += wi * (yi - mu) * row[j];
                for k in 0..p {
                    hess[j][k] += wi * mu * row[j] * row[k];
                }
            }
        }
        let step = solve(hess, grad);
        let before = loglik(x, y, w, &beta);
        let mut t = 1.0;
        let mut next: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + s).collect();
        while loglik(x, y, w, &next) < before - 1e-15 * before.abs() && t > 1e-10 {
            t /= 2.0;
            next = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
        }
        let change = step.iter().map(|s| (t * s).abs()).fold(0.0, f64::max);
        beta = next;
        if beta.iter().any(|b| b.abs() > 50.0) {
            return None;
        }
        if change < 1e-15 {
            return Some(beta);
        }
    }
    Some(beta)
}

fn glm_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut worst_coef, mut worst_dev) = (0.0f64, 0.0f64);
    let mut designs = 0;
    while designs < 10 {
        let n = rng.random_range(4..=8);
        let p = rng.random_range(1..=3usize).min(n - 1);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|j| if j == 0 { 1.0 } else { rng.random_range(-1.0..1.0) }).collect())
            .collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|row| {
                let mu = (1.0 + row.iter().skip(1).sum::<f64>()).exp();
                Poisson::new(mu).unwrap().sample(&mut rng) / rng.random_range(0.5..2.0)
            })
            .collect();
        let Some(beta) = newton_oracle(&x, &y, &w) else {
            continue;
        };
        designs += 1;
        let cols = (0..p).map(|j| (format!("x{j}"), x.iter().map(|r| r[j]).collect())).collect();
        let design = DesignMatrix::from_columns(cols, w.clone()).unwrap();
        let fit = match fit_poisson(&design, &y, None, &FitOptions::default()) {
            Ok(f) => f,
            Err(e) => return Outcome::new(false, format!("fit_poisson failed: {e}")),
        };
        let mu: Vec<f64> = x
            .iter()
            .map(|row| row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>().exp())
            .collect();
        let dev: f64 = 2.0
            * y.iter()
                .zip(&mu)
                .zip(&w)
                .map(|((yi, mi), wi)| wi * (if *yi > 0.0 { yi * (yi / mi).ln() } else { 0.0 } - (yi - mi)))
                .sum::<f64>();
        for (a, b) in fit.coefficients.iter().zip(&beta) {
            worst_coef = worst_coef.max((a - b).abs());
        }
        worst_dev = worst_dev.max((fit.deviance - dev).abs());
    }
    Outcome::new(
        worst_coef < 1e-8 && worst_dev < 1e-6,
        format!("max coefficient error {worst_coef:.2e}, max deviance error {worst_dev:.2e}"),
    )
}

fn coefficient_recovery() -> Outcome {
    let (theta1, theta2) = (0.8, -0.6);
    let window = Window::rectangle(0.0, 0.0, 10.0, 10.0).unwrap();
    let xr = GridRaster::from_fn(0.0, 0.0, 0.05, 0.05, 200, 200, DEFAULT_NODATA, |p| p.x / 10.0).unwrap();
    let zr = GridRaster::from_fn(0.0, 0.0, 0.05, 0.05, 200, 200, DEFAULT_NODATA, |p| {
        (p.x / 2.0).sin() * (p.y / 3.0).cos()
    })
    .unwrap();
    // raster cells tile the window exactly, so the integral is a cell sum
    let mass: f64 = xr
        .values()
        .iter()
        .zip(zr.values())
        .map(|(x, z)| (theta1 * x + theta2 * z).exp() * 0.05 * 0.05)
        .sum();
    let theta0 = (600.0 / mass).ln();
    let truth = [theta0, theta1, theta2];
    let at = |g: &GridRaster, u: &SpatialPoint| {
        let (r, c) = g.cell_of(u).unwrap();
        g.get(r, c)
    };
    let lambda = |u: &SpatialPoint| (theta0 + theta1 * at(&xr, u) + theta2 * at(&zr, u)).exp();
    let bound = (theta0 + theta1 + theta2.abs()).exp();
    let covs = vec![
        SpatialCovariate::numeric("x", xr.clone()).unwrap(),
        SpatialCovariate::numeric("z", zr.clone()).unwrap(),
    ];
    let config = SpatialModelConfig {
        smooth: None,
        ..Default::default()
    };
    let mut hits = 0;
    let mut sizes = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        let pattern = simulate_spatial(lambda, &window, bound, &mut rng).unwrap();
        sizes.push(pattern.len());
        let fit = match fit_spatial(&pattern, &covs, &config) {
            Ok(f) => f,
            Err(e) => return Outcome::new(false, format!("fit failed for seed {seed}: {e}")),
        };
        let f = fit.fit();
        let inside = ["(Intercept)", "x", "z"]
            .iter()
            .zip(truth)
            .all(|(name, t)| (f.coefficient(name).unwrap() - t).abs() <= 3.0 * f.std_error(name).unwrap());
        hits += inside as usize;
    }
    let mean_n = sizes.iter().sum::<usize>() as f64 / sizes.len() as f64;
    Outcome::new(
        hits >= 18,
        format!("{hits}/20 replicates within 3 SE (mean n = {mean_n:.0})"),
    )
}

fn horn_planes() -> Outcome {
    let pairs = [(0.1, 0.2), (1.0, 0.0), (0.0, -2.0), (3.5, 1.2), (-0.7, 0.05)];
    let mut worst = 0.0f64;
    for (a, b) in pairs {
        let dem = GridRaster::from_fn(500.0, 1000.0, 30.0, 30.0, 12, 9, DEFAULT_NODATA, |p| a * p.x + b * p.y).unwrap();
        let slope = horn_slope(&dem).unwrap();
        let expected = (a * a + b * b).sqrt().atan().to_degrees();
        for row in 1..dem.nrows() - 1 {
            for col in 1..dem.ncols() - 1 {
                let v = slope.value(row, col).unwrap();
                worst = worst.max((v - expected).abs());
            }
        }
    }
    let flat = GridRaster::from_fn(0.0, 0.0, 25.0, 25.0, 10, 10, DEFAULT_NODATA, |_| 812.5).unwrap();
    let fs = horn_slope(&flat).unwrap();
    let flat_zero = fs.values().iter().filter(|v| !fs.is_nodata(**v)).all(|v| *v == 0.0);
    Outcome::new(
        worst < 1e-9 && flat_zero,
        format!("max plane error {worst:.2e}°, flat DEM exactly zero: {flat_zero}"),
    )
}

/// `∫_ring f` by a three-point edge-midpoint rule on a fan triangulation,
/// each triangle split into `m²` pieces.
fn polygon_integral(ring: &[SpatialPoint], m: usize, f: impl Fn(&SpatialPoint) -> f64) -> f64 {
    let tri_rule = |a: SpatialPoint, b: SpatialPoint, c: SpatialPoint| {
        let area = ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y)).abs() / 2.0;
        let mid = |p: SpatialPoint, q: SpatialPoint| SpatialPoint::new((p.x + q.x) / 2.0, (p.y + q.y) / 2.0);
        area * (f(&mid(a, b)) + f(&mid(b, c)) + f(&mid(c, a))) / 3.0
    };
    let mut total = 0.0;
    let a = ring[0];
    for w in ring[1..].windows(2) {
        let (b, c) = (w[0], w[1]);
        let at = |i: usize, j: usize| {
            let (s, t) = (i as f64 / m as f64, j as f64 / m as f64);
            SpatialPoint::new(a.x + s * (b.x - a.x) + t * (c.x - a.x), a.y + s * (b.y - a.y) + t * (c.y - a.y))
        };
        for i in 0..m {
            for j in 0..m - i {
                total += tri_rule(at(i, j), at(i + 1, j), at(i, j + 1));
                if i + j + 1 < m {
                    total += tri_rule(at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
                }
            }
        }
    }
    total
}

fn separable_normalization() -> Outcome {
    let ring = pentagon(50.0, 50.0, 40.0);
    let window = Window::from_polygon(ring.clone()).unwrap();
    let (first, last, n) = (10i64, 70i64, 437usize);
    let spatial = |u: &SpatialPoint| (0.02 * u.x - 0.01 * u.y).exp();
    let temporal = |d: i64| 1.0 + 0.5 * (d as f64 / 7.0).sin();
    let base = combine(SpatialFn(spatial), TemporalFn(temporal), &window, first, last, n).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let (mut worst_mass, mut worst_scale) = (0.0f64, 0.0f64);
    for _ in 0..5 {
        let cs = 10f64.powf(rng.random_range(-3.0..3.0));
        let ct = 10f64.powf(rng.random_range(-3.0..3.0));
        let scaled = match combine(
            SpatialFn(move |u: &SpatialPoint| cs * spatial(u)),
            TemporalFn(move |d: i64| ct * temporal(d)),
            &window,
            first,
            last,
            n,
        ) {
            Ok(s) => s,
            Err(e) => return Outcome::new(false, format!("combine failed: {e}")),
        };
        // the rate is constant within a day, so day midpoints integrate time exactly
        let mass: f64 = (first..=last)
            .map(|d| polygon_integral(&ring, 24, |u| scaled.evaluate(u, d as f64 + 0.5).unwrap()))
            .sum();
        worst_mass = worst_mass.max((mass - n as f64).abs() / n as f64);
        let bb = *window.bbox();
        for _ in 0..100 {
            let u = loop {
                let p = SpatialPoint::new(rng.random_range(bb.min_x..bb.max_x), rng.random_range(bb.min_y..bb.max_y));
                if window.contains(&p) {
                    break p;
                }
            };
            let t = rng.random_range(first as f64..(last + 1) as f64);
            let (a, b) = (scaled.evaluate(&u, t).unwrap(), base.evaluate(&u, t).unwrap());
            worst_scale = worst_scale.max((a - b).abs() / b);
        }
    }
    Outcome::new(
        worst_mass < 0.02 && worst_scale < 1e-10,
        format!("max relative mass error {worst_mass:.2e}, max relative scaling change {worst_scale:.2e}"),
    )
}

fn temporal_recovery() -> Outcome {
    let config = TemporalModelConfig::default();
    let mut hits = 0;
    let (mut devs, mut edfs, mut ceiling) = (Vec::new(), Vec::new(), Vec::new());
    let rates: Vec<f64> = (0..365).map(|t| (3.0 + 0.5 * (TAU * t as f64 / 365.0).sin()).exp()).collect();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
        let counts: Vec<u64> = rates
            .iter()
            .map(|&rate| Poisson::new(rate).unwrap().sample(&mut rng) as u64)
            .collect();
        // deviance explained by the generating rate itself
        let ys: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let dev = |mu: &dyn Fn(usize) -> f64| {
            2.0 * ys
                .iter()
                .enumerate()
                .map(|(i, &y)| if y > 0.0 { y * (y / mu(i)).ln() } else { 0.0 } - (y - mu(i)))
                .sum::<f64>()
        };
        ceiling.push(1.0 - dev(&|i| rates[i]) / dev(&|_| mean));
        let series = TemporalSeries::new(0, counts, Vec::new()).unwrap();
        let fit = match fit_temporal(&series, &config) {
            Ok(f) => f,
            Err(e) => return Outcome::new(false, format!("fit failed for seed {seed}: {e}")),
        };
        let (d, e) = (fit.deviance_explained(), fit.fit().edf);
        hits += (d > 0.9 && e < 30.0) as usize;
        devs.push(d);
        edfs.push(e);
    }
    for v in [&mut devs, &mut edfs, &mut ceiling] {
        v.sort_by(f64::total_cmp);
    }
    Outcome::new(
        hits >= 18,
        format!(
            "{hits}/20 replicates with deviance explained > 90% and edf < 30 \
             (deviance explained {:.3}..{:.3}, edf {:.1}..{:.1}; the true rate explains {:.3}..{:.3})",
            devs[0], devs[19], edfs[0], edfs[19], ceiling[0], ceiling[19]
        ),
    )
}

fn residual_consistency() -> Outcome {
    let ring: Vec<SpatialPoint> = (0..6)
        .map(|i| {
            let a = i as f64 * TAU / 6.0;
            SpatialPoint::new(10.0 + 10.0 * a.cos(), 10.0 + 10.0 * a.sin())
        })
        .collect();
    let window = Window::from_polygon(ring).unwrap();
    let elev = GridRaster::from_fn(-1.0, -1.0, 0.1, 0.1, 220, 220, DEFAULT_NODATA, |p| {
        (p.x / 4.0).sin() + 0.5 * (p.y / 6.0).cos()
    })
    .unwrap();
    let covs = vec![SpatialCovariate::numeric("elevation", elev).unwrap()];
    let config = SpatialModelConfig::default();
    let (base_rate, slope) = (2.2, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let truth = |u: &SpatialPoint| base_rate * (slope * ((u.x / 4.0).sin() + 0.5 * (u.y / 6.0).cos())).exp();
    let observed = simulate_spatial(truth, &window, base_rate * (1.5 * slope).exp(), &mut rng).unwrap();
    let model = match fit_spatial(&observed, &covs, &config) {
        Ok(m) => m,
        Err(e) => return Outcome::new(false, format!("base fit failed: {e}")),
    };
    let bound = 1.5 * model.fitted_at_quadrature().iter().cloned().fold(0.0, f64::max);

    let mut hits = 0;
    let mut ratios = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(8000 + seed);
        let sim = match simulate_thinning(
            |u, _| model.intensity(u).unwrap_or(0.0),
            &window,
            Interval::new(0.0, 1.0).unwrap(),
            bound,
            &mut rng,
        ) {
            Ok(s) => s,
            Err(e) => return Outcome::new(false, format!("simulation failed for seed {seed}: {e}")),
        };
        let refit = match fit_spatial(&sim, &covs, &config) {
            Ok(m) => m,
            Err(e) => return Outcome::new(false, format!("refit failed for seed {seed}: {e}")),
        };
        let field = match refit.smoothed_residuals(None, 64, 64) {
            Ok(f) => f,
            Err(e) => return Outcome::new(false, format!("residuals failed for seed {seed}: {e}")),
        };
        let pred = refit.predict_intensity(64, 64).unwrap();
        let valid: Vec<f64> = pred.values().iter().filter(|v| !pred.is_nodata(**v)).copied().collect();
        let mean_fitted = valid.iter().sum::<f64>() / valid.len() as f64;
        let ratio = field.mean_abs_residual() / mean_fitted;
        hits += (ratio < 0.1) as usize;
        ratios.push(ratio);
    }
    ratios.sort_by(f64::total_cmp);
    Outcome::new(
        hits >= 18,
        format!(
            "{hits}/20 replicates with mean |s| < 10% of mean fitted intensity (ratio {:.3}..{:.3}, base n = {})",
            ratios[0],
            ratios[19],
            observed.len()
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_inputs(dir.path());
    let steps = [
        Step::Slope,
        Step::Quadscheme,
        Step::FitSpatial,
        Step::FitTemporal,
        Step::Combine,
        Step::PredictSpatial,
        Step::PredictTemporal,
        Step::Residuals,
        Step::Simulate,
        Step::SelectBackward,
    ];
    let mut files = 0;
    for step in steps {
        if let Err(e) = execute(step, &cfg) {
            return Outcome::new(false, format!("{} failed: {e:#}", step.name()));
        }
        let manifest = Manifest::read(&cfg.output.join(Manifest::file_name(step))).unwrap();
        let again = dir.path().join(format!("rerun-{}", step.name()));
        let (fresh, diff) = match rerun(&manifest, Some(&again)) {
            Ok(r) => r,
            Err(e) => return Outcome::new(false, format!("rerun of {} failed: {e:#}", step.name())),
        };
        if !diff.is_empty() || fresh.outputs != manifest.outputs {
            return Outcome::new(false, format!("{} outputs differ on rerun: {diff:?}", step.name()));
        }
        for name in manifest.outputs.keys() {
            if fs::read(cfg.output.join(name)).unwrap() != fs::read(again.join(name)).unwrap() {
                return Outcome::new(false, format!("{name} differs byte-wise on rerun"));
            }
            files += 1;
        }
    }
    Outcome::new(true, format!("{} steps, {files} output files byte-identical on rerun", steps.len()))
}
