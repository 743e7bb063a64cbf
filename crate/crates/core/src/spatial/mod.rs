//! Spatial log-linear intensity `λ(u) = exp(θᵀZ(u) + f(u))` fitted through
//! Berman–Turner quadrature, with prediction and residual diagnostics.

mod smoothing;

use serde::{Deserialize, Serialize};

pub use smoothing::{
    bandwidth_candidates, diggle_criterion, kernel_intensity, select_bandwidth, smoothed_residual_field,
    BandwidthSelection, GaussianKernel, ResidualField,
};

use crate::basis::{farthest_point_knots, Basis2D, DEFAULT_SPATIAL_KNOTS};
use crate::error::{Error, Result};
use crate::geom::{STPointPattern, SpatialPoint, Window};
use crate::glm::{
    backward_select, fit_poisson, fit_smoothed, BackwardSelection, DesignMatrix, FitOptions, FitResult, Penalty,
    SmoothConfig, INTERCEPT,
};
use crate::quadrature::{make_scheme, QuadratureScheme, DEFAULT_DUMMY_GRID};
use crate::raster::{GridRaster, SampleMethod, DEFAULT_NODATA};

pub const DEFAULT_BANDWIDTH_STEPS: usize = 32;

/// Name of the spatial smooth term in term lists and column prefixes.
pub const SMOOTH_TERM: &str = "s(x,y)";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CovariateKind {
    Numeric,
    /// Dummy-coded against `baseline`.
    Categorical { baseline: String },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpatialCovariate {
    pub name: String,
    pub raster: GridRaster,
    pub kind: CovariateKind,
}

impl SpatialCovariate {
    pub fn numeric(name: impl Into<String>, raster: GridRaster) -> Result<Self> {
        if raster.is_categorical() {
            return Err(Error::InvalidInput("numeric covariate given a categorical raster".into()));
        }
        Ok(Self {
            name: name.into(),
            raster,
            kind: CovariateKind::Numeric,
        })
    }

    pub fn categorical(name: impl Into<String>, raster: GridRaster, baseline: impl Into<String>) -> Result<Self> {
        let baseline = baseline.into();
        let table = raster
            .categories()
            .ok_or_else(|| Error::InvalidInput("categorical covariate needs a category table".into()))?;
        if !table.distinct_labels().contains(&baseline.as_str()) {
            return Err(Error::InvalidInput(format!("baseline '{baseline}' is not a category label")));
        }
        Ok(Self {
            name: name.into(),
            raster,
            kind: CovariateKind::Categorical { baseline },
        })
    }

    fn value_at(&self, p: &SpatialPoint) -> Option<CovariateValue> {
        let v = self.raster.sample(p, SampleMethod::Nearest).ok()??;
        match &self.kind {
            CovariateKind::Numeric => Some(CovariateValue::Numeric(v)),
            CovariateKind::Categorical { .. } => {
                let label = self.raster.categories()?.label(v as i64)?;
                Some(CovariateValue::Category(label.to_string()))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CovariateValue {
    Numeric(f64),
    Category(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpatialModelConfig {
    pub dummy_grid: (usize, usize),
    pub smooth: Option<SmoothConfig>,
}

impl Default for SpatialModelConfig {
    fn default() -> Self {
        Self {
            dummy_grid: DEFAULT_DUMMY_GRID,
            smooth: Some(SmoothConfig::gcv(DEFAULT_SPATIAL_KNOTS)),
        }
    }
}

/// Column layout of one covariate in the design.
#[derive(Clone, Debug)]
enum TermColumns {
    Numeric { covariate: usize, column: usize },
    Categorical { covariate: usize, levels: Vec<(String, usize)> },
}

#[derive(Clone, Debug)]
struct SmoothColumns {
    basis: Basis2D,
    start: usize,
    means: Vec<f64>,
}

/// Fitted spatial intensity model.
#[derive(Clone, Debug)]
pub struct SpatialModelFit {
    fit: FitResult,
    scheme: QuadratureScheme,
    covariates: Vec<SpatialCovariate>,
    terms: Vec<TermColumns>,
    smooth: Option<SmoothColumns>,
    data: Vec<SpatialPoint>,
}

/// Fits the spatial model to the locations of `pattern`.
pub fn fit_spatial(
    pattern: &STPointPattern,
    covariates: &[SpatialCovariate],
    config: &SpatialModelConfig,
) -> Result<SpatialModelFit> {
    let data = pattern.locations();
    let (nx, ny) = config.dummy_grid;
    let scheme = make_scheme(pattern.window(), &data, nx, ny)?;
    fit_on_scheme(scheme, data, covariates, config.smooth.as_ref())
}

fn fit_on_scheme(
    scheme: QuadratureScheme,
    data: Vec<SpatialPoint>,
    covariates: &[SpatialCovariate],
    smooth: Option<&SmoothConfig>,
) -> Result<SpatialModelFit> {
    let points = scheme.points();
    let nq = points.len();

    let mut columns: Vec<(String, Vec<f64>)> = vec![(INTERCEPT.to_string(), vec![1.0; nq])];
    let mut terms = Vec::with_capacity(covariates.len());
    for (ci, cov) in covariates.iter().enumerate() {
        let values: Vec<Option<CovariateValue>> = points.iter().map(|p| cov.value_at(p)).collect();
        let missing: Vec<(f64, f64)> = points
            .iter()
            .zip(&values)
            .filter(|(_, v)| v.is_none())
            .map(|(p, _)| (p.x, p.y))
            .collect();
        if !missing.is_empty() {
            return Err(Error::DataCoverage {
                covariate: cov.name.clone(),
                points: missing,
            });
        }
        let values: Vec<CovariateValue> = values.into_iter().flatten().collect();
        match &cov.kind {
            CovariateKind::Numeric => {
                terms.push(TermColumns::Numeric {
                    covariate: ci,
                    column: columns.len(),
                });
                let col = values
                    .iter()
                    .map(|v| match v {
                        CovariateValue::Numeric(x) => *x,
                        CovariateValue::Category(_) => unreachable!("numeric covariate"),
                    })
                    .collect();
                columns.push((cov.name.clone(), col));
            }
            CovariateKind::Categorical { baseline } => {
                let table = cov.raster.categories().expect("checked at construction");
                let mut levels = Vec::new();
                for label in table.distinct_labels() {
                    if label == baseline {
                        continue;
                    }
                    let col: Vec<f64> = values
                        .iter()
                        .map(|v| f64::from(u8::from(matches!(v, CovariateValue::Category(l) if l == label))))
                        .collect();
                    // levels absent from every quadrature point carry no information
                    if col.iter().all(|&c| c == 0.0) {
                        continue;
                    }
                    levels.push((label.to_string(), columns.len()));
                    columns.push((label.to_string(), col));
                }
                terms.push(TermColumns::Categorical { covariate: ci, levels });
            }
        }
    }

    let mut smooth_cols = None;
    let mut penalty = None;
    if let Some(cfg) = smooth {
        if cfg.knots < 4 {
            return Err(Error::InvalidKnots(format!("spatial smooth needs at least 4 knots, got {}", cfg.knots)));
        }
        let dummies: Vec<SpatialPoint> = points[scheme.n_data()..].to_vec();
        let basis = Basis2D::new(farthest_point_knots(&dummies, cfg.knots)?)?;
        let rows: Vec<Vec<f64>> = points.iter().map(|p| basis.eval(p)).collect();
        let m = basis.n_columns();
        let means: Vec<f64> = (0..m).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / nq as f64).collect();
        let start = columns.len();
        for j in 0..m {
            let col = rows.iter().map(|r| r[j] - means[j]).collect();
            columns.push((format!("{SMOOTH_TERM}.{}", j + 1), col));
        }
        penalty = Some((Penalty::single(SMOOTH_TERM, start, basis.column_penalty()), cfg.smoothing.clone()));
        smooth_cols = Some(SmoothColumns { basis, start, means });
    }

    let design = DesignMatrix::from_columns(columns, scheme.weights().to_vec())?;
    let y = scheme.pseudo_responses();
    let opts = FitOptions::default();
    let fit = match &penalty {
        None => fit_poisson(&design, &y, None, &opts)?,
        Some((pen, smoothing)) => fit_smoothed(&design, &y, pen, smoothing, &opts)?,
    };

    Ok(SpatialModelFit {
        fit,
        scheme,
        covariates: covariates.to_vec(),
        terms,
        smooth: smooth_cols,
        data,
    })
}

/// Backward elimination by AIC over the covariates (and the smooth term when
/// `config.smooth` is set), reusing one quadrature scheme for every fit.
pub fn select_backward(
    pattern: &STPointPattern,
    covariates: &[SpatialCovariate],
    config: &SpatialModelConfig,
) -> Result<BackwardSelection> {
    let data = pattern.locations();
    let (nx, ny) = config.dummy_grid;
    let scheme = make_scheme(pattern.window(), &data, nx, ny)?;
    let mut terms: Vec<String> = covariates.iter().map(|c| c.name.clone()).collect();
    if config.smooth.is_some() {
        terms.push(SMOOTH_TERM.to_string());
    }
    backward_select(&terms, |kept| {
        let covs: Vec<SpatialCovariate> = covariates.iter().filter(|c| kept.contains(&c.name)).cloned().collect();
        let smooth = if kept.iter().any(|t| t == SMOOTH_TERM) { config.smooth.as_ref() } else { None };
        Ok(fit_on_scheme(scheme.clone(), data.clone(), &covs, smooth)?.fit)
    })
}

impl SpatialModelFit {
    pub fn fit(&self) -> &FitResult {
        &self.fit
    }

    pub fn scheme(&self) -> &QuadratureScheme {
        &self.scheme
    }

    pub fn window(&self) -> &Window {
        self.scheme.window()
    }

    pub fn basis(&self) -> Option<&Basis2D> {
        self.smooth.as_ref().map(|s| &s.basis)
    }

    pub fn covariates(&self) -> &[SpatialCovariate] {
        &self.covariates
    }

    pub fn data(&self) -> &[SpatialPoint] {
        &self.data
    }

    pub fn n_events(&self) -> usize {
        self.data.len()
    }

    /// Fitted intensity at every quadrature point.
    pub fn fitted_at_quadrature(&self) -> &[f64] {
        &self.fit.fitted
    }

    /// Covariate values at `u`; `None` where any covariate is missing.
    pub fn covariate_values(&self, u: &SpatialPoint) -> Option<Vec<CovariateValue>> {
        self.covariates.iter().map(|c| c.value_at(u)).collect()
    }

    /// Linear predictor at `u` with explicitly supplied covariate values
    /// (one per covariate, in model order).
    pub fn linear_predictor_with(&self, u: &SpatialPoint, values: &[CovariateValue]) -> Result<f64> {
        if values.len() != self.covariates.len() {
            return Err(Error::InvalidInput(format!(
                "{} covariate values for {} covariates",
                values.len(),
                self.covariates.len()
            )));
        }
        let beta = &self.fit.coefficients;
        let mut eta = beta[0];
        for term in &self.terms {
            match term {
                TermColumns::Numeric { covariate, column } => match &values[*covariate] {
                    CovariateValue::Numeric(v) => eta += beta[*column] * v,
                    CovariateValue::Category(_) => {
                        return Err(Error::InvalidInput(format!(
                            "covariate '{}' expects a number",
                            self.covariates[*covariate].name
                        )))
                    }
                },
                TermColumns::Categorical { covariate, levels } => match &values[*covariate] {
                    CovariateValue::Category(label) => {
                        if let Some((_, col)) = levels.iter().find(|(l, _)| l == label) {
                            eta += beta[*col];
                        }
                    }
                    CovariateValue::Numeric(_) => {
                        return Err(Error::InvalidInput(format!(
                            "covariate '{}' expects a category",
                            self.covariates[*covariate].name
                        )))
                    }
                },
            }
        }
        if let Some(s) = &self.smooth {
            for (j, v) in s.basis.eval(u).iter().enumerate() {
                eta += beta[s.start + j] * (v - s.means[j]);
            }
        }
        Ok(eta)
    }

    pub fn linear_predictor(&self, u: &SpatialPoint) -> Option<f64> {
        let values = self.covariate_values(u)?;
        self.linear_predictor_with(u, &values).ok()
    }

    /// λ̂(u); `None` where covariates are missing.
    pub fn intensity(&self, u: &SpatialPoint) -> Option<f64> {
        self.linear_predictor(u).map(f64::exp)
    }

    /// λ̂ on an `nx × ny` grid over the window's bounding box; cells whose
    /// center is outside the window are nodata.
    pub fn predict_intensity(&self, nx: usize, ny: usize) -> Result<GridRaster> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidInput("prediction grid is empty".into()));
        }
        let bb = *self.window().bbox();
        GridRaster::from_fn(
            bb.min_x,
            bb.min_y,
            bb.width() / nx as f64,
            bb.height() / ny as f64,
            nx,
            ny,
            DEFAULT_NODATA,
            |c| {
                if self.window().contains(&c) {
                    self.intensity(&c).unwrap_or(DEFAULT_NODATA)
                } else {
                    DEFAULT_NODATA
                }
            },
        )
    }

    /// Observed minus expected count in `region`, the expectation being the
    /// quadrature sum of λ̂ over quadrature points inside `region`.
    pub fn raw_residual(&self, region: &Window) -> f64 {
        let observed = self.data.iter().filter(|p| region.contains(p)).count() as f64;
        let expected: f64 = self
            .scheme
            .points()
            .iter()
            .zip(self.scheme.weights())
            .zip(&self.fit.fitted)
            .filter(|((p, _), _)| region.contains(p))
            .map(|((_, a), mu)| a * mu)
            .sum();
        observed - expected
    }

    /// ∫_W λ̂ by quadrature.
    pub fn integrated_intensity(&self) -> f64 {
        self.scheme
            .weights()
            .iter()
            .zip(&self.fit.fitted)
            .map(|(a, m)| a * m)
            .sum()
    }

    /// Berman–Diggle selection over `steps` log-spaced bandwidths from the
    /// `nx × ny` cell size to a quarter of the window diameter.
    pub fn select_bandwidth(&self, nx: usize, ny: usize, steps: usize) -> Result<BandwidthSelection> {
        let bb = self.window().bbox();
        let cell = (bb.width() / nx.max(1) as f64).min(bb.height() / ny.max(1) as f64);
        let cands = bandwidth_candidates(cell, bb.diameter() / 4.0, steps);
        select_bandwidth(&self.data, self.window(), &cands)
    }

    /// Smoothed residual field `s(u) = λ̃(u) − λ†(u)` on an `nx × ny` grid.
    /// Without a bandwidth, one is chosen by [`Self::select_bandwidth`].
    pub fn smoothed_residuals(&self, bandwidth: Option<f64>, nx: usize, ny: usize) -> Result<ResidualField> {
        let sigma = match bandwidth {
            Some(s) => s,
            None => self.select_bandwidth(nx, ny, DEFAULT_BANDWIDTH_STEPS)?.bandwidth,
        };
        let masses: Vec<f64> = self
            .scheme
            .weights()
            .iter()
            .zip(&self.fit.fitted)
            .map(|(a, m)| a * m)
            .collect();
        smoothed_residual_field(&self.scheme, &self.data, &vec![1.0; self.data.len()], &masses, sigma, nx, ny)
    }
}
