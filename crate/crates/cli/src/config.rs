//! Run configuration: a TOML file whose every key can be overridden by the
//! command-line flag of the same name (`dummy-grid = 64` ↔ `--dummy-grid 64`).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::projection::Projector;

macro_rules! run_config {
    (
        required { $( $(#[doc = $rdoc:literal])* $rfield:ident : $rty:ty = $rdefault:expr ),* $(,)? }
        optional { $( $(#[doc = $odoc:literal])* $ofield:ident : $oty:ty ),* $(,)? }
    ) => {
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
        pub struct RunConfig {
            $( $(#[doc = $rdoc])* pub $rfield: $rty, )*
            $( $(#[doc = $odoc])* #[serde(skip_serializing_if = "Option::is_none")] pub $ofield: Option<$oty>, )*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self {
                    $( $rfield: $rdefault, )*
                    $( $ofield: None, )*
                }
            }
        }

        /// Command-line overrides, one flag per configuration key.
        #[derive(Clone, Debug, Default, clap::Args)]
        pub struct ConfigOverrides {
            $( $(#[doc = $rdoc])* #[arg(long, global = true)] pub $rfield: Option<$rty>, )*
            $( $(#[doc = $odoc])* #[arg(long, global = true)] pub $ofield: Option<$oty>, )*
        }

        impl ConfigOverrides {
            pub fn apply(&self, cfg: &mut RunConfig) {
                $( if let Some(v) = &self.$rfield { cfg.$rfield = v.clone(); } )*
                $( if let Some(v) = &self.$ofield { cfg.$ofield = Some(v.clone()); } )*
            }
        }
    };
}

run_config! {
    required {
        /// Calendar year of the study; times are days since 1 January.
        year: i32 = 2023,
        /// First day index of the study interval.
        first_day: i64 = 0,
        /// Window GeoJSON is in degrees and must be projected.
        window_lonlat: bool = false,
        /// `sinusoidal` or `affine`.
        projection: String = "sinusoidal".into(),
        lon0: f64 = 0.0,
        lat0: f64 = 0.0,
        /// Numeric raster covariates as `name=path` (ESRI ASCII grids in km).
        covariates: Vec<String> = Vec::new(),
        landuse_baseline: String = "Artificial surfaces".into(),
        /// Climate columns to use (all when empty).
        temporal_covariates: Vec<String> = Vec::new(),
        dummy_grid: usize = stpp_core::quadrature::DEFAULT_DUMMY_GRID.0,
        spatial_knots: usize = stpp_core::basis::DEFAULT_SPATIAL_KNOTS,
        temporal_knots: usize = stpp_core::basis::DEFAULT_TEMPORAL_KNOTS,
        spatial_smooth: bool = true,
        temporal_smooth: bool = true,
        lambda_min: f64 = 1e-4,
        lambda_max: f64 = 1e6,
        lambda_steps: usize = 41,
        bandwidth_steps: usize = 32,
        /// Cells per side of prediction and residual grids.
        grid: usize = 100,
        seed: u64 = 1,
        output: PathBuf = PathBuf::from("out"),
    }
    optional {
        /// Last day index (default: last day of `year`).
        last_day: i64,
        /// FIRMS-style detections CSV.
        fires: PathBuf,
        /// Study window as GeoJSON (Polygon, MultiPolygon or features).
        window: PathBuf,
        /// Affine coefficients `x0,ax_lon,ax_lat,y0,ay_lon,ay_lat`.
        affine: Vec<f64>,
        /// Elevation grid for `slope`.
        dem: PathBuf,
        /// Land-use code grid.
        landuse: PathBuf,
        /// `code,label` CSV; CORINE level-1 classes when absent.
        landuse_table: PathBuf,
        /// Climate CSV keyed by `day` (daily) or `time` (sub-daily).
        climate: PathBuf,
        /// Fixed smoothing parameter instead of GCV.
        lambda: f64,
        /// Fixed kernel bandwidth (km) instead of selection.
        bandwidth: f64,
        /// Dominating rate for simulation (default: twice the fitted maximum).
        simulation_bound: f64,
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid configuration")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn last_day(&self) -> i64 {
        self.last_day.unwrap_or_else(|| {
            let leap = chrono::NaiveDate::from_ymd_opt(self.year, 2, 29).is_some();
            if leap {
                365
            } else {
                364
            }
        })
    }

    /// `[first_day, last_day + 1]` in days.
    pub fn interval(&self) -> Result<stpp_core::Interval> {
        Ok(stpp_core::Interval::new(self.first_day as f64, (self.last_day() + 1) as f64)?)
    }

    pub fn projector(&self) -> Result<Projector> {
        match self.projection.as_str() {
            "sinusoidal" => Ok(Projector::Sinusoidal {
                lon0: self.lon0,
                lat0: self.lat0,
            }),
            "affine" => {
                let c = self.affine.as_deref().unwrap_or_default();
                let arr: [f64; 6] = c
                    .try_into()
                    .map_err(|_| anyhow::anyhow!("affine projection needs 6 coefficients, got {}", c.len()))?;
                Projector::affine(arr)
            }
            other => bail!("unknown projection '{other}' (expected sinusoidal or affine)"),
        }
    }

    pub fn lambda_grid(&self) -> Vec<f64> {
        stpp_core::glm::log_grid(self.lambda_min, self.lambda_max, self.lambda_steps)
    }

    pub fn smoothing(&self) -> stpp_core::glm::Smoothing {
        match self.lambda {
            Some(l) => stpp_core::glm::Smoothing::Fixed(l),
            None => stpp_core::glm::Smoothing::Gcv(self.lambda_grid()),
        }
    }

    /// `(name, path)` pairs from `covariates`.
    pub fn covariate_paths(&self) -> Result<Vec<(String, PathBuf)>> {
        self.covariates
            .iter()
            .map(|entry| match entry.split_once('=') {
                Some((n, p)) if !n.trim().is_empty() && !p.trim().is_empty() => {
                    Ok((n.trim().to_string(), PathBuf::from(p.trim())))
                }
                _ => bail!("covariate '{entry}' is not of the form name=path"),
            })
            .collect()
    }

    /// Every input file the configuration refers to.
    pub fn input_paths(&self) -> Result<Vec<PathBuf>> {
        let mut out: Vec<PathBuf> = [&self.fires, &self.window, &self.dem, &self.landuse, &self.landuse_table, &self.climate]
            .into_iter()
            .flatten()
            .cloned()
            .collect();
        out.extend(self.covariate_paths()?.into_iter().map(|(_, p)| p));
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        for p in self.input_paths()? {
            if !p.is_file() {
                bail!("input file {} does not exist", p.display());
            }
        }
        if self.spatial_knots < 4 || self.temporal_knots < 4 {
            bail!("knot counts must be at least 4");
        }
        if self.dummy_grid == 0 || self.grid == 0 {
            bail!("grid sizes must be positive");
        }
        if self.last_day() < self.first_day {
            bail!("last-day {} precedes first-day {}", self.last_day(), self.first_day);
        }
        if !(self.lambda_min > 0.0 && self.lambda_max >= self.lambda_min && self.lambda_steps > 0) {
            bail!("smoothing parameter grid is empty or not positive");
        }
        self.projector()?;
        self.covariate_paths()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let cfg = RunConfig::from_toml_str("dummy-grid = 64\nlast-day = 30\ncovariates = [\"elevation=dem.asc\"]\n").unwrap();
        assert_eq!(cfg.dummy_grid, 64);
        assert_eq!(cfg.spatial_knots, 30);
        assert_eq!(cfg.temporal_knots, 50);
        assert_eq!(cfg.last_day(), 30);
        assert_eq!(cfg.covariate_paths().unwrap()[0].0, "elevation");
        let back = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(RunConfig::from_toml_str("dummy_grid = 3").is_err());
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::default();
        let o = ConfigOverrides {
            seed: Some(9),
            climate: Some("c.csv".into()),
            ..Default::default()
        };
        o.apply(&mut cfg);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.climate.as_deref(), Some(Path::new("c.csv")));
        assert_eq!(RunConfig::default().last_day(), 364);
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig {
            spatial_knots: 3,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.spatial_knots = 10;
        cfg.fires = Some("/nonexistent/fires.csv".into());
        assert!(cfg.validate().is_err());
        cfg.fires = None;
        cfg.validate().unwrap();
        cfg.projection = "utm".into();
        assert!(cfg.validate().is_err());
    }
}
