//! Synthetic inputs shared by the integration and acceptance targets.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stpp_cli::ingest::write_pattern_csv;
use stpp_cli::projection::Projector;
use stpp_cli::RunConfig;
use stpp_core::separable::simulate_thinning;
use stpp_core::{GridRaster, Interval, Window};

const WINDOW: &str = r#"{"type":"Polygon","coordinates":[[[-50,-50],[50,-50],[50,50],[-50,50],[-50,-50]]]}"#;

pub fn write_inputs(dir: &Path) -> RunConfig {
    let projector = Projector::Sinusoidal { lon0: 14.0, lat0: 37.5 };
    let window = Window::from_geojson_str(WINDOW).unwrap();
    let iv = Interval::new(181.0, 212.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let pattern = simulate_thinning(
        |u, t| 0.001 * (0.015 * u.x).exp() * (1.0 + 0.5 * ((t - 181.0) / 5.0).sin()),
        &window,
        iv,
        0.001 * 0.75f64.exp() * 1.5,
        &mut rng,
    )
    .unwrap();
    assert!(pattern.len() > 100, "{}", pattern.len());
    let mut f = fs::File::create(dir.join("fires.csv")).unwrap();
    write_pattern_csv(&mut f, &pattern, &projector, 2023).unwrap();

    fs::write(dir.join("window.geojson"), WINDOW).unwrap();
    let dem = GridRaster::from_fn(-60.0, -60.0, 2.0, 2.0, 60, 60, -9999.0, |p| 300.0 + 5.0 * (p.x + 60.0) + 2.0 * p.y)
        .unwrap();
    fs::write(dir.join("dem.asc"), dem.to_ascii_string()).unwrap();
    let lu = GridRaster::from_fn(-60.0, -60.0, 2.0, 2.0, 60, 60, -9999.0, |p| {
        if p.x < -20.0 {
            111.0
        } else if p.x < 20.0 {
            211.0
        } else {
            311.0
        }
    })
    .unwrap();
    fs::write(dir.join("landuse.asc"), lu.to_ascii_string()).unwrap();

    let mut climate = String::from("day,v10:max,t2m\n");
    for d in 181..=211 {
        let x = (d - 181) as f64;
        climate.push_str(&format!("{d},{},{}\n", 2.0 + (x * 1.3).sin(), 295.0 + (x / 4.0).cos()));
    }
    fs::write(dir.join("climate.csv"), climate).unwrap();

    RunConfig {
        year: 2023,
        first_day: 181,
        last_day: Some(211),
        lon0: 14.0,
        lat0: 37.5,
        fires: Some(dir.join("fires.csv")),
        window: Some(dir.join("window.geojson")),
        dem: Some(dir.join("dem.asc")),
        covariates: vec![format!("elevation={}", dir.join("dem.asc").display())],
        landuse: Some(dir.join("landuse.asc")),
        climate: Some(dir.join("climate.csv")),
        dummy_grid: 32,
        spatial_knots: 8,
        temporal_knots: 8,
        lambda_min: 1e-2,
        lambda_max: 1e4,
        lambda_steps: 7,
        bandwidth_steps: 8,
        grid: 20,
        seed: 7,
        output: dir.join("out"),
        ..RunConfig::default()
    }
}
