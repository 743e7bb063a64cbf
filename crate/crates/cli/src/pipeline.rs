//! Subcommand implementations. Each step reads its inputs from the
//! configuration, writes artifacts into `config.output` and returns their
//! file names.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use stpp_core::basis::Basis1D;
use stpp_core::glm::{BackwardSelection, CoefficientRow, FitResult, SmoothConfig};
use stpp_core::quadrature::make_scheme;
use stpp_core::raster::{horn_slope, CategoryTable, LandUseTable};
use stpp_core::separable::combine;
use stpp_core::spatial::{fit_spatial, select_backward, SpatialCovariate, SpatialModelConfig, SpatialModelFit};
use stpp_core::temporal::{
    aggregate_daily_values, correlation_matrix, daily_counts, fit_temporal, Aggregation, TemporalCovariate,
    TemporalModelConfig, TemporalModelFit, TemporalSeries,
};
use stpp_core::{GridRaster, STPointPattern, SpatialPoint, Window};

use crate::config::RunConfig;
use crate::ingest::{ingest_fires, project_window, read_fire_records, write_pattern_csv, IngestReport};
use crate::manifest::Manifest;

#[derive(clap::Subcommand, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Step {
    /// Slope grid (degrees) from `dem`.
    Slope,
    /// Berman–Turner quadrature scheme for the fire pattern.
    Quadscheme,
    /// Spatial intensity fit with coefficient table.
    FitSpatial,
    /// Daily-count fit with climate covariates.
    FitTemporal,
    /// Normalized separable intensity from both fits.
    Combine,
    /// Fitted spatial intensity on a grid.
    PredictSpatial,
    /// Fitted daily rates.
    PredictTemporal,
    /// Smoothed residual field of the spatial fit.
    Residuals,
    /// Seeded simulation from the fitted separable intensity.
    Simulate,
    /// Backward elimination of spatial terms by AIC.
    SelectBackward,
}

impl Step {
    pub fn name(self) -> &'static str {
        match self {
            Self::Slope => "slope",
            Self::Quadscheme => "quadscheme",
            Self::FitSpatial => "fit-spatial",
            Self::FitTemporal => "fit-temporal",
            Self::Combine => "combine",
            Self::PredictSpatial => "predict-spatial",
            Self::PredictTemporal => "predict-temporal",
            Self::Residuals => "residuals",
            Self::Simulate => "simulate",
            Self::SelectBackward => "select-backward",
        }
    }
}

/// Runs `step` and writes its manifest.
pub fn execute(step: Step, config: &RunConfig) -> Result<Manifest> {
    config.validate()?;
    fs::create_dir_all(&config.output).with_context(|| format!("creating {}", config.output.display()))?;
    let outputs = run_step(step, config)?;
    let manifest = Manifest::build(step, config, &outputs)?;
    manifest.write()?;
    Ok(manifest)
}

/// Re-runs the step recorded in `manifest` (optionally into another output
/// directory) and returns the new manifest with the names of outputs whose
/// hashes differ.
pub fn rerun(manifest: &Manifest, output: Option<&Path>) -> Result<(Manifest, Vec<String>)> {
    let changed = manifest.changed_inputs()?;
    if !changed.is_empty() {
        bail!("inputs changed since the recorded run: {}", changed.join(", "));
    }
    let mut config = manifest.config.clone();
    if let Some(o) = output {
        config.output = o.to_path_buf();
    }
    let fresh = execute(manifest.command, &config)?;
    let diff = manifest.differing_outputs(&fresh);
    Ok((fresh, diff))
}

pub fn run_step(step: Step, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut out = Outputs::new(&cfg.output);
    match step {
        Step::Slope => slope(cfg, &mut out)?,
        Step::Quadscheme => quadscheme(cfg, &mut out)?,
        Step::FitSpatial => {
            let (_, m, rep) = spatial_fit(cfg)?;
            write_spatial_fit(&m, &rep, &mut out)?;
        }
        Step::FitTemporal => {
            let (series, m) = temporal_fit(cfg)?;
            write_temporal_fit(&series, &m, &mut out)?;
        }
        Step::Combine => combine_step(cfg, &mut out)?,
        Step::PredictSpatial => {
            let (_, m, _) = spatial_fit(cfg)?;
            let grid = m.predict_intensity(cfg.grid, cfg.grid)?;
            out.ascii("spatial_intensity.asc", &grid)?;
        }
        Step::PredictTemporal => {
            let (series, m) = temporal_fit(cfg)?;
            write_daily_rates(&series, &m, &mut out)?;
        }
        Step::Residuals => residuals(cfg, &mut out)?,
        Step::Simulate => simulate(cfg, &mut out)?,
        Step::SelectBackward => backward(cfg, &mut out)?,
    }
    Ok(out.files)
}

struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> Self {
        Self { dir, files: Vec::new() }
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.files.push(PathBuf::from(name));
        info!("writing {}", path.display());
        Ok(BufWriter::new(f))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    fn ascii(&mut self, name: &str, grid: &GridRaster) -> Result<()> {
        let mut w = self.create(name)?;
        grid.write_ascii(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| anyhow!("configuration key '{key}' is required for this command"))
}

fn read_raster(path: &Path) -> Result<GridRaster> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    GridRaster::read_ascii(BufReader::new(f)).with_context(|| format!("reading grid {}", path.display()))
}

pub fn load_window(cfg: &RunConfig) -> Result<Window> {
    let path = require(&cfg.window, "window")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let w = Window::from_geojson_str(&text).with_context(|| format!("parsing window {}", path.display()))?;
    if cfg.window_lonlat {
        project_window(&w, &cfg.projector()?)
    } else {
        Ok(w)
    }
}

pub fn load_pattern(cfg: &RunConfig) -> Result<(STPointPattern, IngestReport)> {
    let path = require(&cfg.fires, "fires")?;
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let records = read_fire_records(BufReader::new(f))?;
    let window = load_window(cfg)?;
    let (pattern, _, report) = ingest_fires(&records, &cfg.projector()?, cfg.year, &window, cfg.interval()?)?;
    info!("{} of {} detections kept", report.kept, report.read);
    Ok((pattern, report))
}

pub fn load_spatial_covariates(cfg: &RunConfig) -> Result<Vec<SpatialCovariate>> {
    let mut covs = Vec::new();
    for (name, path) in cfg.covariate_paths()? {
        covs.push(SpatialCovariate::numeric(name, read_raster(&path)?)?);
    }
    if let Some(path) = &cfg.landuse {
        let raster = read_raster(path)?;
        let table = match &cfg.landuse_table {
            Some(t) => CategoryTable::from_csv(BufReader::new(File::open(t)?))?,
            None => {
                let mut codes: Vec<i64> = raster
                    .values()
                    .iter()
                    .filter(|v| !raster.is_nodata(**v))
                    .map(|v| *v as i64)
                    .collect();
                codes.sort_unstable();
                codes.dedup();
                LandUseTable::from_corine_codes(codes)?.category_table()
            }
        };
        covs.push(SpatialCovariate::categorical(
            "landuse",
            raster.with_categories(table)?,
            cfg.landuse_baseline.clone(),
        )?);
    }
    Ok(covs)
}

fn spatial_config(cfg: &RunConfig) -> SpatialModelConfig {
    SpatialModelConfig {
        dummy_grid: (cfg.dummy_grid, cfg.dummy_grid),
        smooth: cfg.spatial_smooth.then(|| SmoothConfig {
            knots: cfg.spatial_knots,
            smoothing: cfg.smoothing(),
        }),
    }
}

pub fn spatial_fit(cfg: &RunConfig) -> Result<(STPointPattern, SpatialModelFit, IngestReport)> {
    let (pattern, report) = load_pattern(cfg)?;
    let covs = load_spatial_covariates(cfg)?;
    let model = fit_spatial(&pattern, &covs, &spatial_config(cfg))?;
    Ok((pattern, model, report))
}

/// Climate CSV: first column `day` (one row per day) or `time` (days,
/// fractional, aggregated per column); other headers are `name[:mean|max]`.
pub fn read_climate(path: &Path, first: i64, last: i64) -> Result<Vec<TemporalCovariate>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let daily = match headers.get(0) {
        Some("day") => true,
        Some("time") => false,
        _ => bail!("climate CSV {} must start with a 'day' or 'time' column", path.display()),
    };
    // name, aggregation, (time, value) samples
    type Column = (String, Aggregation, Vec<(f64, f64)>);
    let mut cols: Vec<Column> = headers
        .iter()
        .skip(1)
        .map(|h| match h.rsplit_once(':') {
            Some((n, a)) => Ok((n.to_string(), Aggregation::parse(a)?, Vec::new())),
            None => Ok((h.to_string(), Aggregation::Mean, Vec::new())),
        })
        .collect::<Result<_>>()?;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .with_context(|| format!("{} line {line}: '{s}' is not a number", path.display()))
        };
        let t = num(&rec[0])?;
        if daily && t.fract() != 0.0 {
            bail!("{} line {line}: day '{}' is not an integer", path.display(), &rec[0]);
        }
        for (j, c) in cols.iter_mut().enumerate() {
            c.2.push((t, num(&rec[j + 1])?));
        }
    }
    cols.into_iter()
        .map(|(name, how, values)| {
            aggregate_daily_values(&name, &values, how, first, last)
                .with_context(|| format!("climate variable '{name}'"))
        })
        .collect()
}

pub fn temporal_series(cfg: &RunConfig, pattern: &STPointPattern) -> Result<TemporalSeries> {
    let mut series = daily_counts(pattern)?;
    if let Some(path) = &cfg.climate {
        let mut covs = read_climate(path, series.first_day(), series.last_day())?;
        if !cfg.temporal_covariates.is_empty() {
            covs = cfg
                .temporal_covariates
                .iter()
                .map(|n| {
                    covs.iter()
                        .find(|c| &c.name == n)
                        .cloned()
                        .ok_or_else(|| anyhow!("climate file has no column '{n}'"))
                })
                .collect::<Result<_>>()?;
        }
        for c in covs {
            series = series.with_covariate(c)?;
        }
    }
    Ok(series)
}

pub fn temporal_fit(cfg: &RunConfig) -> Result<(TemporalSeries, TemporalModelFit)> {
    let (pattern, _) = load_pattern(cfg)?;
    let series = temporal_series(cfg, &pattern)?;
    let model = fit_temporal_series(cfg, &series)?;
    Ok((series, model))
}

fn slope(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let dem = read_raster(require(&cfg.dem, "dem")?)?;
    out.ascii("slope.asc", &horn_slope(&dem)?)
}

fn quadscheme(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let (pattern, _) = load_pattern(cfg)?;
    let scheme = make_scheme(pattern.window(), &pattern.locations(), cfg.dummy_grid, cfg.dummy_grid)?;
    let mut w = out.create("quadscheme.csv")?;
    scheme.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SpatialFitReport<'a> {
    converged: bool,
    n_events: usize,
    n_quadrature: usize,
    lambda: f64,
    edf: f64,
    aic: f64,
    deviance_explained: f64,
    coefficients: Vec<CoefficientRow>,
    knots: Vec<SpatialPoint>,
    ingest: &'a IngestReport,
    fit: &'a FitResult,
}

fn write_spatial_fit(m: &SpatialModelFit, rep: &IngestReport, out: &mut Outputs) -> Result<()> {
    let fit = m.fit();
    out.json(
        "spatial_fit.json",
        &SpatialFitReport {
            converged: fit.converged,
            n_events: m.n_events(),
            n_quadrature: m.scheme().len(),
            lambda: fit.lambda,
            edf: fit.edf,
            aic: fit.aic,
            deviance_explained: fit.deviance_explained(),
            coefficients: fit.coefficient_table(),
            knots: m.basis().map(|b| b.knots().to_vec()).unwrap_or_default(),
            ingest: rep,
            fit,
        },
    )?;
    let mut w = out.create("spatial_coefficients.csv")?;
    fit.write_coefficient_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TemporalFitReport<'a> {
    converged: bool,
    days: usize,
    total_count: u64,
    lambda: f64,
    edf: f64,
    aic: f64,
    deviance_explained: f64,
    coefficients: Vec<CoefficientRow>,
    knots: Vec<f64>,
    fit: &'a FitResult,
}

fn write_temporal_fit(series: &TemporalSeries, m: &TemporalModelFit, out: &mut Outputs) -> Result<()> {
    let fit = m.fit();
    out.json(
        "temporal_fit.json",
        &TemporalFitReport {
            converged: fit.converged,
            days: series.len(),
            total_count: series.total(),
            lambda: fit.lambda,
            edf: fit.edf,
            aic: fit.aic,
            deviance_explained: m.deviance_explained(),
            coefficients: fit.coefficient_table(),
            knots: m.basis().map(|b: &Basis1D| b.knots().to_vec()).unwrap_or_default(),
            fit,
        },
    )?;
    let mut w = out.create("temporal_coefficients.csv")?;
    fit.write_coefficient_csv(&mut w)?;
    w.flush()?;
    let mut w = out.create("daily_series.csv")?;
    series.write_csv(&mut w)?;
    w.flush()?;
    if series.len() >= 3 {
        let mut w = out.create("correlations.csv")?;
        correlation_matrix(series)?.write_csv(&mut w)?;
        w.flush()?;
    }
    write_daily_rates(series, m, out)
}

fn write_daily_rates(series: &TemporalSeries, m: &TemporalModelFit, out: &mut Outputs) -> Result<()> {
    let rates = m.predict(series)?;
    let mut w = csv::Writer::from_writer(out.create("temporal_intensity.csv")?);
    w.write_record(["day", "count", "fitted"])?;
    for ((d, c), r) in series.days().zip(series.counts()).zip(&rates) {
        w.write_record([d.to_string(), c.to_string(), r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SeparableReport {
    n: usize,
    first_day: i64,
    last_day: i64,
    spatial_integral: f64,
    temporal_sum: f64,
    norm: f64,
}

fn combine_step(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let (pattern, spatial, _) = spatial_fit(cfg)?;
    let series = temporal_series(cfg, &pattern)?;
    let temporal = fit_temporal_series(cfg, &series)?;
    let si = combine(&spatial, &temporal, pattern.window(), series.first_day(), series.last_day(), pattern.len())?;
    out.json(
        "separable.json",
        &SeparableReport {
            n: pattern.len(),
            first_day: series.first_day(),
            last_day: series.last_day(),
            spatial_integral: si.spatial_integral(),
            temporal_sum: si.temporal_sum(),
            norm: si.norm(),
        },
    )?;
    let mut w = csv::Writer::from_writer(out.create("separable_daily.csv")?);
    w.write_record(["day", "observed", "expected"])?;
    for (d, c) in series.days().zip(series.counts()) {
        let rate = temporal.rate_on(d).ok_or_else(|| anyhow!("no rate for day {d}"))?;
        w.write_record([d.to_string(), c.to_string(), (si.spatial_integral() * rate / si.norm()).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn fit_temporal_series(cfg: &RunConfig, series: &TemporalSeries) -> Result<TemporalModelFit> {
    let config = TemporalModelConfig {
        smooth: cfg.temporal_smooth.then(|| SmoothConfig {
            knots: cfg.temporal_knots,
            smoothing: cfg.smoothing(),
        }),
    };
    Ok(fit_temporal(series, &config)?)
}

#[derive(Serialize)]
struct ResidualReport {
    bandwidth: f64,
    bandwidth_candidates: Vec<f64>,
    bandwidth_scores: Vec<f64>,
    raw_residual: f64,
    mean_abs_residual: f64,
    mean_fitted_smooth: f64,
}

fn residuals(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let (_, m, _) = spatial_fit(cfg)?;
    let (bandwidth, candidates, scores) = match cfg.bandwidth {
        Some(b) => (b, Vec::new(), Vec::new()),
        None => {
            let sel = m.select_bandwidth(cfg.grid, cfg.grid, cfg.bandwidth_steps)?;
            (sel.bandwidth, sel.candidates, sel.scores)
        }
    };
    let field = m.smoothed_residuals(Some(bandwidth), cfg.grid, cfg.grid)?;
    out.ascii("residuals.asc", &field.residual)?;
    out.ascii("residuals_data.asc", &field.data_smooth)?;
    out.ascii("residuals_fitted.asc", &field.fitted_smooth)?;
    let valid: Vec<f64> = field
        .fitted_smooth
        .values()
        .iter()
        .copied()
        .filter(|v| !field.fitted_smooth.is_nodata(*v))
        .collect();
    out.json(
        "residuals.json",
        &ResidualReport {
            bandwidth,
            bandwidth_candidates: candidates,
            bandwidth_scores: scores,
            raw_residual: m.raw_residual(m.window()),
            mean_abs_residual: field.mean_abs_residual(),
            mean_fitted_smooth: valid.iter().sum::<f64>() / valid.len().max(1) as f64,
        },
    )
}

fn simulate(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let (pattern, spatial, _) = spatial_fit(cfg)?;
    let series = temporal_series(cfg, &pattern)?;
    let temporal = fit_temporal_series(cfg, &series)?;
    let si = combine(&spatial, &temporal, pattern.window(), series.first_day(), series.last_day(), pattern.len())?;
    let bound = match cfg.simulation_bound {
        Some(b) => b,
        None => {
            let s_max = spatial.fitted_at_quadrature().iter().cloned().fold(0.0, f64::max);
            let t_max = temporal.fitted().iter().cloned().fold(0.0, f64::max);
            2.0 * s_max * t_max / si.norm()
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sim = si.simulate(bound, &mut rng)?;
    info!("simulated {} events (observed {})", sim.len(), pattern.len());
    let mut w = out.create("simulated_fires.csv")?;
    write_pattern_csv(&mut w, &sim, &cfg.projector()?, cfg.year)?;
    w.flush()?;
    Ok(())
}

fn backward(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let (pattern, _) = load_pattern(cfg)?;
    let covs = load_spatial_covariates(cfg)?;
    let sel: BackwardSelection = select_backward(&pattern, &covs, &spatial_config(cfg))?;
    out.json("backward.json", &sel)
}
