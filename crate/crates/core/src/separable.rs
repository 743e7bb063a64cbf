//! Separable space-time intensity `λ̂(u,t) = λ̂(u) λ̂(t) / C` and thinning
//! simulation.
//!
//! The temporal factor has daily resolution, so `∫_T λ̂(t) dt` is the sum of
//! the daily rates and `t` maps to day `floor(t)`.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::geom::{Event, Interval, STPointPattern, SpatialPoint, Window};
use crate::quadrature::{make_scheme, DEFAULT_DUMMY_GRID};
use crate::spatial::SpatialModelFit;
use crate::temporal::{day_of, TemporalModelFit};

/// A spatial intensity `λ(u)`.
pub trait SpatialIntensity: Sync {
    /// `None` where the intensity is undefined (e.g. missing covariates).
    fn intensity_at(&self, u: &SpatialPoint) -> Option<f64>;

    /// `∫_W λ(u) du`; by default a midpoint rule on the dummy-grid
    /// quadrature of `window`.
    fn integral(&self, window: &Window) -> Result<f64> {
        let (nx, ny) = DEFAULT_DUMMY_GRID;
        let scheme = make_scheme(window, &[], nx, ny)?;
        let mut missing = None;
        let total = scheme.points().iter().zip(scheme.weights()).fold(0.0, |acc, (p, a)| {
            match self.intensity_at(p) {
                Some(v) => acc + a * v,
                None => {
                    missing.get_or_insert(*p);
                    acc
                }
            }
        });
        match missing {
            Some(p) => Err(Error::DegenerateComponent(format!(
                "spatial intensity undefined at ({}, {})",
                p.x, p.y
            ))),
            None => Ok(total),
        }
    }
}

/// A daily temporal rate `λ(t)`.
pub trait TemporalIntensity: Sync {
    fn rate_on_day(&self, day: i64) -> Option<f64>;
}

impl SpatialIntensity for SpatialModelFit {
    fn intensity_at(&self, u: &SpatialPoint) -> Option<f64> {
        self.intensity(u)
    }

    /// Uses the model's own quadrature, so the integral is the fitted count.
    fn integral(&self, window: &Window) -> Result<f64> {
        if window == self.window() {
            Ok(self.integrated_intensity())
        } else {
            let (nx, ny) = DEFAULT_DUMMY_GRID;
            let scheme = make_scheme(window, &[], nx, ny)?;
            scheme.points().iter().zip(scheme.weights()).try_fold(0.0, |acc, (p, a)| {
                self.intensity(p).map(|v| acc + a * v).ok_or_else(|| {
                    Error::DegenerateComponent(format!("spatial intensity undefined at ({}, {})", p.x, p.y))
                })
            })
        }
    }
}

impl TemporalIntensity for TemporalModelFit {
    fn rate_on_day(&self, day: i64) -> Option<f64> {
        self.rate_on(day)
    }
}

/// Adapts a closure `Fn(&SpatialPoint) -> f64` as a spatial intensity.
pub struct SpatialFn<F>(pub F);

impl<F: Fn(&SpatialPoint) -> f64 + Sync> SpatialIntensity for SpatialFn<F> {
    fn intensity_at(&self, u: &SpatialPoint) -> Option<f64> {
        Some((self.0)(u))
    }
}

/// Adapts a closure `Fn(i64) -> f64` as a daily rate.
pub struct TemporalFn<F>(pub F);

impl<F: Fn(i64) -> f64 + Sync> TemporalIntensity for TemporalFn<F> {
    fn rate_on_day(&self, day: i64) -> Option<f64> {
        Some((self.0)(day))
    }
}

impl<T: SpatialIntensity + ?Sized> SpatialIntensity for &T {
    fn intensity_at(&self, u: &SpatialPoint) -> Option<f64> {
        (**self).intensity_at(u)
    }

    fn integral(&self, window: &Window) -> Result<f64> {
        (**self).integral(window)
    }
}

impl<T: TemporalIntensity + ?Sized> TemporalIntensity for &T {
    fn rate_on_day(&self, day: i64) -> Option<f64> {
        (**self).rate_on_day(day)
    }
}

pub struct SeparableIntensity<S, T> {
    spatial: S,
    temporal: T,
    window: Window,
    first_day: i64,
    last_day: i64,
    spatial_integral: f64,
    temporal_sum: f64,
    norm: f64,
}

/// Normalizes `λ̂(u) λ̂(t)` so that it integrates to `n` over
/// `window × [first_day, last_day + 1)`.
pub fn combine<S: SpatialIntensity, T: TemporalIntensity>(
    spatial: S,
    temporal: T,
    window: &Window,
    first_day: i64,
    last_day: i64,
    n: usize,
) -> Result<SeparableIntensity<S, T>> {
    if last_day < first_day {
        return Err(Error::InvalidInput(format!("empty day range {first_day}..={last_day}")));
    }
    if n == 0 {
        return Err(Error::DegenerateComponent("no observed events to normalize to".into()));
    }
    let spatial_integral = spatial.integral(window)?;
    let mut temporal_sum = 0.0;
    for d in first_day..=last_day {
        let r = temporal
            .rate_on_day(d)
            .ok_or_else(|| Error::DegenerateComponent(format!("temporal rate undefined on day {d}")))?;
        temporal_sum += r;
    }
    for (what, v) in [("spatial integral", spatial_integral), ("temporal sum", temporal_sum)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::DegenerateComponent(format!("{what} is {v}")));
        }
    }
    Ok(SeparableIntensity {
        spatial,
        temporal,
        window: window.clone(),
        first_day,
        last_day,
        spatial_integral,
        temporal_sum,
        norm: spatial_integral * temporal_sum / n as f64,
    })
}

impl<S: SpatialIntensity, T: TemporalIntensity> SeparableIntensity<S, T> {
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn spatial_integral(&self) -> f64 {
        self.spatial_integral
    }

    pub fn temporal_sum(&self) -> f64 {
        self.temporal_sum
    }

    pub fn spatial(&self) -> &S {
        &self.spatial
    }

    pub fn temporal(&self) -> &T {
        &self.temporal
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn interval(&self) -> Interval {
        Interval {
            start: self.first_day as f64,
            end: (self.last_day + 1) as f64,
        }
    }

    /// `λ̂(u) λ̂(t) / C`; `t = last_day + 1` belongs to the last day.
    pub fn evaluate(&self, u: &SpatialPoint, t: f64) -> Result<f64> {
        let out = || Error::OutOfDomain { x: u.x, y: u.y, t };
        if !self.window.contains(u) || !self.interval().contains(t) {
            return Err(out());
        }
        let day = day_of(t).min(self.last_day);
        let s = self.spatial.intensity_at(u).ok_or_else(|| Error::DataCoverage {
            covariate: "spatial intensity".into(),
            points: vec![(u.x, u.y)],
        })?;
        let r = self.temporal.rate_on_day(day).ok_or_else(out)?;
        Ok(s * r / self.norm)
    }

    /// Thinning simulation of this intensity over its own domain.
    pub fn simulate<R: Rng + ?Sized>(&self, lambda_max: f64, rng: &mut R) -> Result<STPointPattern> {
        simulate_thinning_fallible(|u, t| self.evaluate(u, t), &self.window, self.interval(), lambda_max, rng)
    }
}

/// Poisson process with intensity `target` on `window × interval` by
/// thinning a homogeneous proposal of rate `lambda_max`. Fails with a
/// bound violation if `target` exceeds `lambda_max` at any proposal.
pub fn simulate_thinning<F, R>(
    target: F,
    window: &Window,
    interval: Interval,
    lambda_max: f64,
    rng: &mut R,
) -> Result<STPointPattern>
where
    F: Fn(&SpatialPoint, f64) -> f64,
    R: Rng + ?Sized,
{
    simulate_thinning_fallible(|u, t| Ok(target(u, t)), window, interval, lambda_max, rng)
}

/// [`simulate_thinning`] for a target that may fail; the first error aborts.
pub fn simulate_thinning_fallible<F, R>(
    target: F,
    window: &Window,
    interval: Interval,
    lambda_max: f64,
    rng: &mut R,
) -> Result<STPointPattern>
where
    F: Fn(&SpatialPoint, f64) -> Result<f64>,
    R: Rng + ?Sized,
{
    if !(lambda_max.is_finite() && lambda_max >= 0.0) {
        return Err(Error::InvalidInput(format!("dominating rate {lambda_max} must be finite and ≥ 0")));
    }
    let bb = *window.bbox();
    let mean = lambda_max * bb.area() * interval.length();
    let mut events = Vec::new();
    if mean > 0.0 {
        let n = Poisson::new(mean)
            .map_err(|e| Error::InvalidInput(format!("proposal count: {e}")))?
            .sample(rng) as usize;
        for _ in 0..n {
            let u = SpatialPoint::new(
                bb.min_x + rng.random::<f64>() * bb.width(),
                bb.min_y + rng.random::<f64>() * bb.height(),
            );
            let t = interval.start + rng.random::<f64>() * interval.length();
            let coin: f64 = rng.random();
            if !window.contains(&u) {
                continue;
            }
            let value = target(&u, t)?;
            if !(value >= 0.0 && value <= lambda_max) {
                return Err(Error::BoundViolation {
                    x: u.x,
                    y: u.y,
                    t,
                    value,
                    bound: lambda_max,
                });
            }
            if coin * lambda_max < value {
                events.push(Event { location: u, time: t });
            }
        }
    }
    STPointPattern::new(events, window.clone(), interval)
}

/// Spatial-only thinning on `window × [0, 1]`.
pub fn simulate_spatial<F, R>(target: F, window: &Window, lambda_max: f64, rng: &mut R) -> Result<STPointPattern>
where
    F: Fn(&SpatialPoint) -> f64,
    R: Rng + ?Sized,
{
    simulate_thinning(|u, _| target(u), window, Interval { start: 0.0, end: 1.0 }, lambda_max, rng)
}
