//! FIRMS-style fire detections to and from space-time point patterns.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use anyhow::{anyhow, bail, Context, Result};
use chrono::{Datelike, Duration, NaiveDate};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use stpp_core::{Event, Interval, STPointPattern, SpatialPoint, Window};

use crate::projection::Projector;

const REQUIRED: [&str; 4] = ["latitude", "longitude", "acq_date", "acq_time"];

/// One detection; columns other than the four required ones are kept as
/// marks in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct FireRecord {
    pub latitude: f64,
    pub longitude: f64,
    pub acq_date: NaiveDate,
    /// `HHMM` UTC.
    pub acq_time: u32,
    pub marks: BTreeMap<String, String>,
}

impl FireRecord {
    /// Days since 1 January of `year`, plus the time of day as a fraction.
    pub fn time_index(&self, year: i32) -> f64 {
        let jan1 = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
        let days = (self.acq_date - jan1).num_days() as f64;
        let (h, m) = (self.acq_time / 100, self.acq_time % 100);
        days + (f64::from(h) + f64::from(m) / 60.0) / 24.0
    }
}

/// Parses `HHMM` (leading zeros optional).
pub fn parse_acq_time(s: &str) -> Result<u32> {
    let v: u32 = s.trim().parse().with_context(|| format!("acq_time '{s}' is not HHMM"))?;
    if v / 100 >= 24 || v % 100 >= 60 {
        bail!("acq_time '{s}' is not a valid time of day");
    }
    Ok(v)
}

pub fn read_fire_records<R: Read>(reader: R) -> Result<Vec<FireRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let cols: Vec<usize> = REQUIRED
        .iter()
        .map(|c| index(c).ok_or_else(|| anyhow!("fire CSV lacks column '{c}'")))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.with_context(|| format!("line {line}"))?;
        let field = |k: usize| rec.get(cols[k]).unwrap_or("");
        let parse = || -> Result<FireRecord> {
            let latitude: f64 = field(0).parse().context("latitude")?;
            let longitude: f64 = field(1).parse().context("longitude")?;
            if !(-90.0..=90.0).contains(&latitude) {
                bail!("latitude {latitude} outside [-90, 90]");
            }
            if !(-180.0..=180.0).contains(&longitude) {
                bail!("longitude {longitude} outside [-180, 180]");
            }
            let acq_date = NaiveDate::parse_from_str(field(2), "%Y-%m-%d").context("acq_date")?;
            let acq_time = parse_acq_time(field(3))?;
            let marks = headers
                .iter()
                .enumerate()
                .filter(|(j, _)| !cols.contains(j))
                .map(|(j, h)| (h.to_string(), rec.get(j).unwrap_or("").to_string()))
                .collect();
            Ok(FireRecord {
                latitude,
                longitude,
                acq_date,
                acq_time,
                marks,
            })
        };
        out.push(parse().with_context(|| format!("fire CSV line {line}"))?);
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub read: usize,
    pub outside_window: usize,
    pub outside_interval: usize,
    pub duplicates: usize,
    pub kept: usize,
}

/// Projects and filters records into a pattern on `window × interval`.
/// Records are returned alongside in event order.
pub fn ingest_fires(
    records: &[FireRecord],
    projector: &Projector,
    year: i32,
    window: &Window,
    interval: Interval,
) -> Result<(STPointPattern, Vec<FireRecord>, IngestReport)> {
    let mut report = IngestReport {
        read: records.len(),
        ..Default::default()
    };
    let mut seen = HashSet::new();
    let mut events = Vec::new();
    let mut kept = Vec::new();
    for r in records {
        let p = projector.forward(r.longitude, r.latitude);
        let t = r.time_index(year);
        if !window.contains(&p) {
            report.outside_window += 1;
            continue;
        }
        if !interval.contains(t) {
            report.outside_interval += 1;
            continue;
        }
        if !seen.insert((p.x.to_bits(), p.y.to_bits(), t.to_bits())) {
            report.duplicates += 1;
            warn!("duplicate detection at ({}, {}) {} {:04} dropped", r.latitude, r.longitude, r.acq_date, r.acq_time);
            continue;
        }
        events.push(Event { location: p, time: t });
        kept.push(r.clone());
    }
    report.kept = events.len();
    if report.outside_window > 0 || report.outside_interval > 0 {
        info!(
            "dropped {} detections outside the window and {} outside the study interval",
            report.outside_window, report.outside_interval
        );
    }
    if events.is_empty() {
        bail!("no detections left after filtering ({} read)", report.read);
    }
    Ok((STPointPattern::new(events, window.clone(), interval)?, kept, report))
}

/// Writes a pattern in the fire CSV schema with the projected coordinates
/// appended as `x_km,y_km,t_days`.
pub fn write_pattern_csv<W: Write>(
    writer: W,
    pattern: &STPointPattern,
    projector: &Projector,
    year: i32,
) -> Result<()> {
    let jan1 = NaiveDate::from_ymd_opt(year, 1, 1).ok_or_else(|| anyhow!("invalid year {year}"))?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["latitude", "longitude", "acq_date", "acq_time", "x_km", "y_km", "t_days"])?;
    for e in pattern.events() {
        let (lon, lat) = projector.inverse(&e.location);
        let day = e.time.floor();
        let minutes = (((e.time - day) * 1440.0).round() as u32).min(1439);
        let date = jan1 + Duration::days(day as i64);
        w.write_record([
            lat.to_string(),
            lon.to_string(),
            format!("{:04}-{:02}-{:02}", date.year(), date.month(), date.day()),
            format!("{:02}{:02}", minutes / 60, minutes % 60),
            e.location.x.to_string(),
            e.location.y.to_string(),
            e.time.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Projects a lon/lat window to km.
pub fn project_window(window: &Window, projector: &Projector) -> Result<Window> {
    let polys = window
        .polygons()
        .iter()
        .map(|poly| {
            let proj = |ring: &[SpatialPoint]| ring.iter().map(|p| projector.forward(p.x, p.y)).collect::<Vec<_>>();
            stpp_core::geom::Polygon::new(proj(poly.exterior()), poly.holes().iter().map(|h| proj(h)).collect())
        })
        .collect::<stpp_core::Result<Vec<_>>>()?;
    Ok(Window::new(polys)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "latitude,longitude,bright_ti4,acq_date,acq_time,frp\n\
37.5,14.0,330.1,2023-07-15,1330,4.2\n\
37.6,14.1,301.0,2023-07-16,5,1.0\n\
37.5,14.0,330.1,2023-07-15,1330,4.2\n";

    #[test]
    fn time_index_combines_date_and_clock() {
        let recs = read_fire_records(CSV.as_bytes()).unwrap();
        assert_eq!(recs[0].time_index(2023), 195.0 + 13.5 / 24.0);
        assert_eq!(recs[1].time_index(2023), 196.0 + (5.0 / 60.0) / 24.0);
        assert_eq!(recs[0].marks["frp"], "4.2");
        assert_eq!(recs[0].marks.len(), 2);
    }

    #[test]
    fn duplicates_and_outside_points_are_dropped() {
        let recs = read_fire_records(CSV.as_bytes()).unwrap();
        let proj = Projector::Sinusoidal { lon0: 14.0, lat0: 37.5 };
        let w = Window::rectangle(-50.0, -50.0, 50.0, 50.0).unwrap();
        let (pat, kept, rep) = ingest_fires(&recs, &proj, 2023, &w, Interval::new(0.0, 365.0).unwrap()).unwrap();
        assert_eq!(pat.len(), 2);
        assert_eq!(kept.len(), 2);
        assert_eq!(rep.duplicates, 1);
        let small = Window::rectangle(-1.0, -1.0, 1.0, 1.0).unwrap();
        let (pat, _, rep) = ingest_fires(&recs, &proj, 2023, &small, Interval::new(0.0, 365.0).unwrap()).unwrap();
        assert_eq!((pat.len(), rep.outside_window), (1, 1));
        assert!(ingest_fires(&recs, &proj, 2023, &w, Interval::new(0.0, 10.0).unwrap()).is_err());
    }

    #[test]
    fn bad_rows_report_line_numbers() {
        let bad = "latitude,longitude,acq_date,acq_time\n37.5,14.0,2023-07-15,1330\n37.5,14.0,2023-07-15,2460\n";
        let err = read_fire_records(bad.as_bytes()).unwrap_err();
        assert!(format!("{err:#}").contains("line 3"), "{err:#}");
        assert!(read_fire_records("lat,lon\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn written_patterns_read_back() {
        let recs = read_fire_records(CSV.as_bytes()).unwrap();
        let proj = Projector::Sinusoidal { lon0: 14.0, lat0: 37.5 };
        let w = Window::rectangle(-50.0, -50.0, 50.0, 50.0).unwrap();
        let iv = Interval::new(0.0, 365.0).unwrap();
        let (pat, _, _) = ingest_fires(&recs, &proj, 2023, &w, iv).unwrap();
        let mut buf = Vec::new();
        write_pattern_csv(&mut buf, &pat, &proj, 2023).unwrap();
        let back = read_fire_records(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].acq_date, recs[0].acq_date);
        assert_eq!(back[0].acq_time, 1330);
        assert!((back[0].latitude - 37.5).abs() < 1e-9);
        assert!(back[0].marks.contains_key("x_km"));
    }
}
