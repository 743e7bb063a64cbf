//! Planar geometry: observation windows, point patterns and containment.
//!
//! Coordinates are planar kilometres. Windows are unions of polygons with
//! optional holes; exterior rings are stored counter-clockwise and holes
//! clockwise regardless of the input orientation.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialPoint {
    pub x: f64,
    pub y: f64,
}

impl SpatialPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &SpatialPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_squared(&self, other: &SpatialPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Closed time interval `[start, end]`, in days.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite()) || end <= start {
            return Err(Error::InvalidInput(format!(
                "interval [{start}, {end}] must be finite with positive length"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains(&self, p: &SpatialPoint) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    fn of_points<'a>(points: impl IntoIterator<Item = &'a SpatialPoint>) -> Self {
        let mut bb = BBox {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for p in points {
            bb.min_x = bb.min_x.min(p.x);
            bb.min_y = bb.min_y.min(p.y);
            bb.max_x = bb.max_x.max(p.x);
            bb.max_y = bb.max_y.max(p.y);
        }
        bb
    }
}

/// Shoelace signed area; positive for counter-clockwise rings.
///
/// Coordinates are taken relative to the first vertex, so small rings far
/// from the origin keep their precision.
pub fn ring_signed_area(ring: &[SpatialPoint]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let o = ring[0];
    let mut acc = 0.0;
    for i in 1..n - 1 {
        let (ax, ay) = (ring[i].x - o.x, ring[i].y - o.y);
        let (bx, by) = (ring[i + 1].x - o.x, ring[i + 1].y - o.y);
        acc += ax * by - bx * ay;
    }
    0.5 * acc
}

/// Sutherland–Hodgman clip of a ring against an axis-aligned rectangle.
///
/// Concave rings may produce zero-width spurs along the rectangle edges; these
/// carry no area, so the signed area of the result is still exact.
pub fn clip_ring_to_rect(ring: &[SpatialPoint], rect: &BBox) -> Vec<SpatialPoint> {
    #[derive(Clone, Copy)]
    enum Edge {
        Left(f64),
        Right(f64),
        Bottom(f64),
        Top(f64),
    }
    fn inside(e: Edge, p: &SpatialPoint) -> bool {
        match e {
            Edge::Left(v) => p.x >= v,
            Edge::Right(v) => p.x <= v,
            Edge::Bottom(v) => p.y >= v,
            Edge::Top(v) => p.y <= v,
        }
    }
    fn cross(e: Edge, a: &SpatialPoint, b: &SpatialPoint) -> SpatialPoint {
        match e {
            Edge::Left(v) | Edge::Right(v) => {
                let t = (v - a.x) / (b.x - a.x);
                SpatialPoint::new(v, a.y + t * (b.y - a.y))
            }
            Edge::Bottom(v) | Edge::Top(v) => {
                let t = (v - a.y) / (b.y - a.y);
                SpatialPoint::new(a.x + t * (b.x - a.x), v)
            }
        }
    }

    let mut out: Vec<SpatialPoint> = ring.to_vec();
    for edge in [
        Edge::Left(rect.min_x),
        Edge::Right(rect.max_x),
        Edge::Bottom(rect.min_y),
        Edge::Top(rect.max_y),
    ] {
        if out.is_empty() {
            break;
        }
        let input = std::mem::take(&mut out);
        let n = input.len();
        for i in 0..n {
            let cur = input[i];
            let prev = input[(i + n - 1) % n];
            let cur_in = inside(edge, &cur);
            let prev_in = inside(edge, &prev);
            if cur_in {
                if !prev_in {
                    out.push(cross(edge, &prev, &cur));
                }
                out.push(cur);
            } else if prev_in {
                out.push(cross(edge, &prev, &cur));
            }
        }
    }
    out
}

fn on_segment(p: &SpatialPoint, a: &SpatialPoint, b: &SpatialPoint) -> bool {
    let scale = 1.0_f64
        .max(a.x.abs())
        .max(a.y.abs())
        .max(b.x.abs())
        .max(b.y.abs());
    let tol = 1e-12 * scale;
    if p.x < a.x.min(b.x) - tol
        || p.x > a.x.max(b.x) + tol
        || p.y < a.y.min(b.y) - tol
        || p.y > a.y.max(b.y) + tol
    {
        return false;
    }
    let len = a.distance(b);
    if len == 0.0 {
        return p.distance(a) <= tol;
    }
    let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    cross.abs() / len <= tol
}

fn ring_boundary_contains(ring: &[SpatialPoint], p: &SpatialPoint) -> bool {
    let n = ring.len();
    (0..n).any(|i| on_segment(p, &ring[i], &ring[(i + 1) % n]))
}

/// Even–odd crossing test; result for boundary points is unspecified.
fn ring_interior_contains(ring: &[SpatialPoint], p: &SpatialPoint) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn orient(p: &SpatialPoint, q: &SpatialPoint, r: &SpatialPoint) -> f64 {
    (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x)
}

fn segments_intersect(a: &SpatialPoint, b: &SpatialPoint, c: &SpatialPoint, d: &SpatialPoint) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(a, c, d))
        || (d2 == 0.0 && on_segment(b, c, d))
        || (d3 == 0.0 && on_segment(c, a, b))
        || (d4 == 0.0 && on_segment(d, a, b))
}

/// Sweep over segments sorted by their minimum x; adjacent edges share a
/// vertex and are skipped.
fn ring_is_simple(ring: &[SpatialPoint]) -> bool {
    let n = ring.len();
    let mut segs: Vec<(f64, f64, usize)> = (0..n)
        .map(|i| {
            let a = ring[i];
            let b = ring[(i + 1) % n];
            (a.x.min(b.x), a.x.max(b.x), i)
        })
        .collect();
    segs.sort_by(|l, r| l.0.total_cmp(&r.0));
    for (k, &(_, max_x, i)) in segs.iter().enumerate() {
        for &(min_x2, _, j) in &segs[k + 1..] {
            if min_x2 > max_x {
                break;
            }
            let adjacent = (i + 1) % n == j || (j + 1) % n == i;
            if adjacent {
                continue;
            }
            if segments_intersect(&ring[i], &ring[(i + 1) % n], &ring[j], &ring[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    exterior: Vec<SpatialPoint>,
    holes: Vec<Vec<SpatialPoint>>,
}

impl Polygon {
    pub fn new(exterior: Vec<SpatialPoint>, holes: Vec<Vec<SpatialPoint>>) -> Result<Self> {
        let exterior = normalize_ring(exterior, true)?;
        let holes = holes
            .into_iter()
            .map(|h| normalize_ring(h, false))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { exterior, holes })
    }

    pub fn exterior(&self) -> &[SpatialPoint] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<SpatialPoint>] {
        &self.holes
    }

    pub fn rings(&self) -> impl Iterator<Item = &[SpatialPoint]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(Vec::as_slice))
    }

    fn area(&self) -> f64 {
        self.rings().map(ring_signed_area).sum()
    }

    fn contains(&self, p: &SpatialPoint) -> bool {
        if self.rings().any(|r| ring_boundary_contains(r, p)) {
            return true;
        }
        ring_interior_contains(&self.exterior, p)
            && !self.holes.iter().any(|h| ring_interior_contains(h, p))
    }
}

fn normalize_ring(mut ring: Vec<SpatialPoint>, ccw: bool) -> Result<Vec<SpatialPoint>> {
    if ring.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidGeometry("ring has non-finite coordinates".into()));
    }
    if ring.len() >= 2 && ring.first() == ring.last() {
        ring.pop();
    }
    ring.dedup();
    if ring.len() < 3 {
        return Err(Error::InvalidGeometry(format!(
            "ring has {} distinct vertices, need at least 3",
            ring.len()
        )));
    }
    let area = ring_signed_area(&ring);
    if area == 0.0 {
        return Err(Error::InvalidGeometry("ring has zero area".into()));
    }
    if !ring_is_simple(&ring) {
        return Err(Error::InvalidGeometry("ring is self-intersecting".into()));
    }
    if (area > 0.0) != ccw {
        ring.reverse();
    }
    Ok(ring)
}

/// Polygonal observation window, possibly multi-part and with holes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    polygons: Vec<Polygon>,
    bbox: BBox,
    area: f64,
}

impl Window {
    pub fn new(polygons: Vec<Polygon>) -> Result<Self> {
        if polygons.is_empty() {
            return Err(Error::InvalidGeometry("window has no polygons".into()));
        }
        let area: f64 = polygons.iter().map(Polygon::area).sum();
        if !(area > 0.0) {
            return Err(Error::InvalidGeometry(format!("window area {area} is not positive")));
        }
        let bbox = BBox::of_points(polygons.iter().flat_map(|p| p.exterior.iter()));
        Ok(Self { polygons, bbox, area })
    }

    pub fn from_polygon(exterior: Vec<SpatialPoint>) -> Result<Self> {
        Self::new(vec![Polygon::new(exterior, Vec::new())?])
    }

    pub fn rectangle(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        Self::from_polygon(vec![
            SpatialPoint::new(min_x, min_y),
            SpatialPoint::new(max_x, min_y),
            SpatialPoint::new(max_x, max_y),
            SpatialPoint::new(min_x, max_y),
        ])
    }

    pub fn unit_square() -> Self {
        Self::rectangle(0.0, 0.0, 1.0, 1.0).expect("unit square is valid")
    }

    pub fn polygons(&self) -> &[Polygon] {
        &self.polygons
    }

    pub fn bbox(&self) -> &BBox {
        &self.bbox
    }

    /// Area in km².
    pub fn area(&self) -> f64 {
        self.area
    }

    /// Boundary points count as inside.
    pub fn contains(&self, p: &SpatialPoint) -> bool {
        self.bbox.contains(p) && self.polygons.iter().any(|poly| poly.contains(p))
    }

    /// Area of the intersection of the window with an axis-aligned rectangle.
    pub fn intersection_area(&self, rect: &BBox) -> f64 {
        if rect.max_x < self.bbox.min_x
            || rect.min_x > self.bbox.max_x
            || rect.max_y < self.bbox.min_y
            || rect.min_y > self.bbox.max_y
        {
            return 0.0;
        }
        self.polygons
            .iter()
            .flat_map(Polygon::rings)
            .map(|ring| ring_signed_area(&clip_ring_to_rect(ring, rect)))
            .sum::<f64>()
            .max(0.0)
    }

    /// Reads a GeoJSON Polygon, MultiPolygon, Feature or FeatureCollection
    /// whose coordinates are already projected to kilometres.
    pub fn from_geojson_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let mut polygons = Vec::new();
        collect_geojson_polygons(&value, &mut polygons)?;
        Self::new(polygons)
    }

    pub fn to_geojson(&self) -> Value {
        let ring_coords = |ring: &[SpatialPoint]| -> Value {
            let mut pts: Vec<Value> = ring.iter().map(|p| json!([p.x, p.y])).collect();
            pts.push(json!([ring[0].x, ring[0].y]));
            Value::Array(pts)
        };
        let polys: Vec<Value> = self
            .polygons
            .iter()
            .map(|p| Value::Array(p.rings().map(ring_coords).collect()))
            .collect();
        json!({ "type": "MultiPolygon", "coordinates": polys })
    }
}

fn parse_ring(value: &Value) -> Result<Vec<SpatialPoint>> {
    let arr = value
        .as_array()
        .ok_or_else(|| Error::InvalidGeometry("ring is not an array".into()))?;
    arr.iter()
        .map(|c| match c.as_array().map(Vec::as_slice) {
            Some([x, y, ..]) => match (x.as_f64(), y.as_f64()) {
                (Some(x), Some(y)) => Ok(SpatialPoint::new(x, y)),
                _ => Err(Error::InvalidGeometry("non-numeric coordinate".into())),
            },
            _ => Err(Error::InvalidGeometry("coordinate must be [x, y]".into())),
        })
        .collect()
}

fn parse_polygon(value: &Value) -> Result<Polygon> {
    let rings = value
        .as_array()
        .ok_or_else(|| Error::InvalidGeometry("polygon coordinates must be an array".into()))?;
    let mut rings = rings.iter().map(parse_ring);
    let exterior = rings
        .next()
        .ok_or_else(|| Error::InvalidGeometry("polygon has no rings".into()))??;
    let holes = rings.collect::<Result<Vec<_>>>()?;
    Polygon::new(exterior, holes)
}

fn collect_geojson_polygons(value: &Value, out: &mut Vec<Polygon>) -> Result<()> {
    let kind = value.get("type").and_then(Value::as_str).unwrap_or_default();
    match kind {
        "Polygon" => out.push(parse_polygon(&value["coordinates"])?),
        "MultiPolygon" => {
            let polys = value["coordinates"]
                .as_array()
                .ok_or_else(|| Error::InvalidGeometry("MultiPolygon coordinates must be an array".into()))?;
            for p in polys {
                out.push(parse_polygon(p)?);
            }
        }
        "Feature" => collect_geojson_polygons(&value["geometry"], out)?,
        "FeatureCollection" => {
            for f in value["features"].as_array().into_iter().flatten() {
                collect_geojson_polygons(f, out)?;
            }
        }
        other => {
            return Err(Error::InvalidGeometry(format!("unsupported GeoJSON type '{other}'")));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub location: SpatialPoint,
    /// Days since the start of the study year; fractional part is time of day.
    pub time: f64,
}

impl Event {
    pub const fn new(x: f64, y: f64, time: f64) -> Self {
        Self {
            location: SpatialPoint::new(x, y),
            time,
        }
    }
}

/// Realisation of a spatio-temporal point process inside `window × interval`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct STPointPattern {
    events: Vec<Event>,
    window: Window,
    interval: Interval,
}

impl STPointPattern {
    pub fn new(events: Vec<Event>, window: Window, interval: Interval) -> Result<Self> {
        let mut seen = HashSet::with_capacity(events.len());
        for (i, e) in events.iter().enumerate() {
            if !e.location.is_finite() || !e.time.is_finite() {
                return Err(Error::InvalidInput(format!("event {i} has non-finite coordinates")));
            }
            if !window.contains(&e.location) {
                return Err(Error::InvalidInput(format!(
                    "event {i} at ({}, {}) lies outside the window",
                    e.location.x, e.location.y
                )));
            }
            if !interval.contains(e.time) {
                return Err(Error::InvalidInput(format!(
                    "event {i} at time {} lies outside [{}, {}]",
                    e.time, interval.start, interval.end
                )));
            }
            if !seen.insert(event_key(e)) {
                return Err(Error::InvalidInput(format!(
                    "event {i} duplicates ({}, {}, {})",
                    e.location.x, e.location.y, e.time
                )));
            }
        }
        Ok(Self {
            events,
            window,
            interval,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn locations(&self) -> Vec<SpatialPoint> {
        self.events.iter().map(|e| e.location).collect()
    }

    /// N(region × interval).
    pub fn count_in(&self, region: &Window, interval: Interval) -> usize {
        self.events
            .iter()
            .filter(|e| interval.contains(e.time) && region.contains(&e.location))
            .count()
    }
}

pub(crate) fn event_key(e: &Event) -> (u64, u64, u64) {
    // -0.0 and 0.0 are the same location
    let norm = |v: f64| if v == 0.0 { 0.0_f64.to_bits() } else { v.to_bits() };
    (norm(e.location.x), norm(e.location.y), norm(e.time))
}
