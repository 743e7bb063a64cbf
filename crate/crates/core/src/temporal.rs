//! Daily-count Poisson model `λ(t) = exp(β₀ + βᵀZ(t) + f(t))` with a
//! penalized cubic spline `f` and climate covariates aggregated to days.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{constraint_null_space, Basis1D, DEFAULT_TEMPORAL_KNOTS};
use crate::error::{Error, Result};
use crate::geom::{STPointPattern, Window};
use crate::glm::{fit_poisson, fit_smoothed, DesignMatrix, FitOptions, FitResult, Penalty, SmoothConfig, INTERCEPT};
use crate::raster::{kelvin_to_celsius, GridRaster};

/// Name of the temporal smooth term.
pub const SMOOTH_TERM: &str = "s(t)";

/// Variables delivered in kelvin and reported in °C.
pub const KELVIN_VARIABLES: [&str; 7] = ["t2m", "d2m", "skt", "stl1", "stl2", "stl3", "stl4"];

pub fn is_kelvin_variable(name: &str) -> bool {
    KELVIN_VARIABLES.contains(&name)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
}

impl Aggregation {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            other => Err(Error::InvalidInput(format!("unknown aggregation '{other}'"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::Max => "max",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalCovariate {
    pub name: String,
    pub aggregation: Aggregation,
    pub values: Vec<f64>,
}

/// One row per day over a contiguous day range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalSeries {
    first_day: i64,
    counts: Vec<u64>,
    covariates: Vec<TemporalCovariate>,
}

impl TemporalSeries {
    pub fn new(first_day: i64, counts: Vec<u64>, covariates: Vec<TemporalCovariate>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidInput("series has no days".into()));
        }
        let mut seen = Vec::new();
        for c in &covariates {
            if c.values.len() != counts.len() {
                return Err(Error::InvalidInput(format!(
                    "covariate '{}' has {} values for {} days",
                    c.name,
                    c.values.len(),
                    counts.len()
                )));
            }
            if let Some(v) = c.values.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("covariate '{}' has non-finite value {v}", c.name)));
            }
            if c.name == "count" || c.name == "day" || seen.contains(&c.name) {
                return Err(Error::InvalidInput(format!("duplicate or reserved column '{}'", c.name)));
            }
            seen.push(c.name.clone());
        }
        Ok(Self {
            first_day,
            counts,
            covariates,
        })
    }

    pub fn first_day(&self) -> i64 {
        self.first_day
    }

    pub fn last_day(&self) -> i64 {
        self.first_day + self.counts.len() as i64 - 1
    }

    pub fn days(&self) -> impl Iterator<Item = i64> + '_ {
        self.first_day..=self.last_day()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn covariates(&self) -> &[TemporalCovariate] {
        &self.covariates
    }

    pub fn covariate(&self, name: &str) -> Option<&TemporalCovariate> {
        self.covariates.iter().find(|c| c.name == name)
    }

    pub fn with_covariate(mut self, cov: TemporalCovariate) -> Result<Self> {
        self.covariates.push(cov);
        Self::new(self.first_day, self.counts, self.covariates)
    }

    /// Keeps only the named covariates, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let covs = names
            .iter()
            .map(|n| {
                self.covariate(n)
                    .cloned()
                    .ok_or_else(|| Error::InvalidInput(format!("no covariate '{n}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.first_day, self.counts.clone(), covs)
    }

    /// CSV with columns `day,count,<name>[:max]...`; a `:max` or `:mean`
    /// suffix records the aggregation (mean when absent).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "day" || &headers[1] != "count" {
            return Err(Error::Parse {
                line: 1,
                message: "header must start with day,count".into(),
            });
        }
        let mut covariates = Vec::new();
        for h in headers.iter().skip(2) {
            let (name, agg) = match h.rsplit_once(':') {
                Some((n, a)) => (n.to_string(), Aggregation::parse(a)?),
                None => (h.to_string(), Aggregation::Mean),
            };
            covariates.push(TemporalCovariate {
                name,
                aggregation: agg,
                values: Vec::new(),
            });
        }
        let mut first_day = None;
        let mut counts = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    message: format!("'{s}': {e}"),
                })
            };
            let day: i64 = rec[0].parse().map_err(|e| Error::Parse {
                line,
                message: format!("day '{}': {e}", &rec[0]),
            })?;
            let expected = first_day.map_or(day, |f: i64| f + counts.len() as i64);
            if day != expected {
                return Err(Error::Parse {
                    line,
                    message: format!("expected day {expected}, found {day}"),
                });
            }
            first_day.get_or_insert(day);
            let count: u64 = rec[1].parse().map_err(|e| Error::Parse {
                line,
                message: format!("count '{}': {e}", &rec[1]),
            })?;
            counts.push(count);
            for (j, c) in covariates.iter_mut().enumerate() {
                c.values.push(parse(&rec[j + 2])?);
            }
        }
        Self::new(first_day.unwrap_or(0), counts, covariates)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["day".to_string(), "count".to_string()];
        header.extend(self.covariates.iter().map(|c| format!("{}:{}", c.name, c.aggregation.as_str())));
        w.write_record(&header)?;
        for (i, day) in self.days().enumerate() {
            let mut row = vec![day.to_string(), self.counts[i].to_string()];
            row.extend(self.covariates.iter().map(|c| c.values[i].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Day index of a time coordinate in days.
pub fn day_of(t: f64) -> i64 {
    t.floor() as i64
}

/// Event counts per day over the pattern's interval. Days run from
/// `floor(start)` to `ceil(end) − 1`; an event exactly at an integer `end`
/// is counted on the last day.
pub fn daily_counts(pattern: &STPointPattern) -> Result<TemporalSeries> {
    let iv = pattern.interval();
    let first = day_of(iv.start);
    let last = (iv.end.ceil() as i64 - 1).max(first);
    let mut counts = vec![0u64; (last - first + 1) as usize];
    for e in pattern.events() {
        let d = day_of(e.time).clamp(first, last);
        counts[(d - first) as usize] += 1;
    }
    TemporalSeries::new(first, counts, Vec::new())
}

/// A timestamped covariate field (typically hourly).
#[derive(Clone, Debug)]
pub struct TimedRaster {
    /// Time in days; the layer belongs to day `floor(time)`.
    pub time: f64,
    pub raster: GridRaster,
}

/// Spatial mean of a raster over cells whose centers lie in `window` (all
/// cells when `None`), skipping nodata. `None` when no cell qualifies.
pub fn spatial_mean(raster: &GridRaster, window: Option<&Window>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for row in 0..raster.nrows() {
        for col in 0..raster.ncols() {
            let Some(v) = raster.value(row, col) else { continue };
            if window.is_some_and(|w| !w.contains(&raster.cell_center(row, col))) {
                continue;
            }
            sum += v;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Aggregates timestamped values to days `first..=last`: daily mean or max.
/// Kelvin variables (see [`KELVIN_VARIABLES`]) are converted to °C.
pub fn aggregate_daily_values(
    name: &str,
    values: &[(f64, f64)],
    how: Aggregation,
    first: i64,
    last: i64,
) -> Result<TemporalCovariate> {
    if last < first {
        return Err(Error::InvalidInput(format!("empty day range {first}..={last}")));
    }
    let mut by_day: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for &(t, v) in values {
        let d = day_of(t);
        if (first..=last).contains(&d) && v.is_finite() {
            by_day.entry(d).or_default().push(v);
        }
    }
    let missing: Vec<i64> = (first..=last).filter(|d| !by_day.contains_key(d)).collect();
    if !missing.is_empty() {
        return Err(Error::MissingDays(missing));
    }
    let convert = is_kelvin_variable(name);
    let out = by_day
        .values()
        .map(|vs| {
            let v = match how {
                Aggregation::Mean => vs.iter().sum::<f64>() / vs.len() as f64,
                Aggregation::Max => vs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            };
            if convert {
                kelvin_to_celsius(v)
            } else {
                Ok(v)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TemporalCovariate {
        name: name.to_string(),
        aggregation: how,
        values: out,
    })
}

/// Spatial mean over `window` per layer, then daily mean or max over layers.
pub fn aggregate_daily(
    name: &str,
    layers: &[TimedRaster],
    window: Option<&Window>,
    how: Aggregation,
    first: i64,
    last: i64,
) -> Result<TemporalCovariate> {
    let values: Vec<(f64, f64)> = layers
        .iter()
        .filter_map(|l| spatial_mean(&l.raster, window).map(|m| (l.time, m)))
        .collect();
    aggregate_daily_values(name, &values, how, first, last)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TemporalModelConfig {
    pub smooth: Option<SmoothConfig>,
}

impl Default for TemporalModelConfig {
    fn default() -> Self {
        Self {
            smooth: Some(SmoothConfig::gcv(DEFAULT_TEMPORAL_KNOTS)),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TemporalSmooth {
    basis: Basis1D,
    /// Absorbs the sum-to-zero constraint: columns are `B(t) Z`.
    constraint: DMatrix<f64>,
    start: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TemporalModelFit {
    fit: FitResult,
    smooth: Option<TemporalSmooth>,
    covariate_names: Vec<String>,
    first_day: i64,
    fitted: Vec<f64>,
}

fn design_row(smooth: Option<&TemporalSmooth>, covariates: &[f64], day: i64) -> Result<Vec<f64>> {
    let mut row = Vec::with_capacity(1 + covariates.len());
    row.push(1.0);
    row.extend_from_slice(covariates);
    if let Some(s) = smooth {
        let b = s.basis.eval(day as f64)?;
        let z = &s.constraint;
        for j in 0..z.ncols() {
            row.push((0..b.len()).map(|i| b[i] * z[(i, j)]).sum());
        }
    }
    Ok(row)
}

/// Fits the daily-count model to every covariate in `series`.
pub fn fit_temporal(series: &TemporalSeries, config: &TemporalModelConfig) -> Result<TemporalModelFit> {
    for c in series.covariates() {
        let first = c.values[0];
        if c.values.iter().all(|v| *v == first) {
            return Err(Error::InvalidInput(format!("covariate '{}' takes a single value", c.name)));
        }
    }
    let n = series.len();
    let smooth = match &config.smooth {
        None => None,
        Some(cfg) => {
            if n < 2 {
                return Err(Error::InvalidInput("a temporal smooth needs at least two days".into()));
            }
            let basis = Basis1D::new(series.first_day() as f64, series.last_day() as f64, cfg.knots)?;
            let mut colsum = vec![0.0; basis.n_basis()];
            for d in series.days() {
                for (s, v) in colsum.iter_mut().zip(basis.eval(d as f64)?) {
                    *s += v;
                }
            }
            Some(TemporalSmooth {
                constraint: constraint_null_space(&colsum),
                basis,
                start: 1 + series.covariates().len(),
            })
        }
    };

    let mut names = vec![INTERCEPT.to_string()];
    names.extend(series.covariates().iter().map(|c| c.name.clone()));
    if let Some(s) = &smooth {
        names.extend((1..=s.constraint.ncols()).map(|j| format!("{SMOOTH_TERM}.{j}")));
    }
    let rows = series
        .days()
        .enumerate()
        .map(|(i, d)| {
            let covs: Vec<f64> = series.covariates().iter().map(|c| c.values[i]).collect();
            design_row(smooth.as_ref(), &covs, d)
        })
        .collect::<Result<Vec<_>>>()?;
    let x = DMatrix::from_fn(n, names.len(), |i, j| rows[i][j]);
    let design = DesignMatrix::unweighted(names, x)?;
    let y: Vec<f64> = series.counts().iter().map(|&c| c as f64).collect();
    let opts = FitOptions::default();

    let fit = match (&smooth, &config.smooth) {
        (Some(s), Some(cfg)) => {
            let z = &s.constraint;
            let penalty = Penalty::single(SMOOTH_TERM, s.start, z.transpose() * s.basis.penalty() * z);
            fit_smoothed(&design, &y, &penalty, &cfg.smoothing, &opts)?
        }
        _ => fit_poisson(&design, &y, None, &opts)?,
    };
    Ok(TemporalModelFit {
        fitted: fit.fitted.clone(),
        fit,
        smooth,
        covariate_names: series.covariates().iter().map(|c| c.name.clone()).collect(),
        first_day: series.first_day(),
    })
}

impl TemporalModelFit {
    pub fn fit(&self) -> &FitResult {
        &self.fit
    }

    pub fn basis(&self) -> Option<&Basis1D> {
        self.smooth.as_ref().map(|s| &s.basis)
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn first_day(&self) -> i64 {
        self.first_day
    }

    pub fn last_day(&self) -> i64 {
        self.first_day + self.fitted.len() as i64 - 1
    }

    /// λ̂ on the training days.
    pub fn fitted(&self) -> &[f64] {
        &self.fitted
    }

    pub fn deviance_explained(&self) -> f64 {
        self.fit.deviance_explained()
    }

    /// Fitted rate on a training day.
    pub fn rate_on(&self, day: i64) -> Option<f64> {
        let i = usize::try_from(day - self.first_day).ok()?;
        self.fitted.get(i).copied()
    }

    /// λ̂ on `day` given covariate values in model order.
    pub fn rate_with(&self, day: i64, covariates: &[f64]) -> Result<f64> {
        if covariates.len() != self.covariate_names.len() {
            return Err(Error::InvalidInput(format!(
                "{} covariate values for {} covariates",
                covariates.len(),
                self.covariate_names.len()
            )));
        }
        let row = design_row(self.smooth.as_ref(), covariates, day)?;
        Ok(row.iter().zip(&self.fit.coefficients).map(|(x, b)| x * b).sum::<f64>().exp())
    }

    /// Per-day λ̂ for every day of `series`, whose covariates must include
    /// the model's.
    pub fn predict(&self, series: &TemporalSeries) -> Result<Vec<f64>> {
        let cols = self
            .covariate_names
            .iter()
            .map(|n| {
                series
                    .covariate(n)
                    .ok_or_else(|| Error::InvalidInput(format!("covariate '{n}' missing from series")))
            })
            .collect::<Result<Vec<_>>>()?;
        series
            .days()
            .enumerate()
            .map(|(i, d)| {
                let covs: Vec<f64> = cols.iter().map(|c| c.values[i]).collect();
                self.rate_with(d, &covs)
            })
            .collect()
    }
}

/// Same as [`TemporalModelFit::predict`].
pub fn predict_temporal(model: &TemporalModelFit, series: &TemporalSeries) -> Result<Vec<f64>> {
    model.predict(series)
}

/// Pearson correlations among `count` and every covariate. Entries
/// involving a zero-variance column are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        self.values[i][j]
    }

    /// Names of columns with zero variance.
    pub fn undefined(&self) -> Vec<&str> {
        self.names
            .iter()
            .enumerate()
            .filter(|(i, _)| self.values[*i][*i].is_none())
            .map(|(_, n)| n.as_str())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![String::new()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in self.names.iter().zip(&self.values) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.map_or_else(|| "NA".to_string(), |x| x.to_string())));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn correlation_matrix(series: &TemporalSeries) -> Result<CorrelationMatrix> {
    if series.len() < 3 {
        return Err(Error::InvalidInput("correlations need at least three days".into()));
    }
    let mut names = vec!["count".to_string()];
    let mut cols = vec![series.counts().iter().map(|&c| c as f64).collect::<Vec<f64>>()];
    for c in series.covariates() {
        names.push(c.name.clone());
        cols.push(c.values.clone());
    }
    let values = cols
        .iter()
        .map(|a| cols.iter().map(|b| pearson(a, b)).collect())
        .collect();
    Ok(CorrelationMatrix { names, values })
}
