//! Raw geolocation input: parsing, validation, distances and coverage.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Default speed above which an isolated fix is considered implausible (m/s).
pub const DEFAULT_MAX_SPEED_MPS: f64 = 70.0;

/// A single timestamped fix. `timestamp` is Unix seconds (UTC).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(timestamp: i64, lat: f64, lon: f64) -> Result<Self> {
        if !coordinates_valid(lat, lon) {
            return Err(Error::InvalidInput(format!(
                "coordinate out of range (lat {lat}, lon {lon})"
            )));
        }
        Ok(Self { timestamp, lat, lon })
    }
}

fn coordinates_valid(lat: f64, lon: f64) -> bool {
    lat.is_finite() && lon.is_finite() && (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub person_id: String,
    pub points: Vec<GeoPoint>,
}

impl Trajectory {
    pub fn first_time(&self) -> Option<i64> {
        self.points.first().map(|p| p.timestamp)
    }

    pub fn last_time(&self) -> Option<i64> {
        self.points.last().map(|p| p.timestamp)
    }

    pub fn span(&self) -> i64 {
        match (self.first_time(), self.last_time()) {
            (Some(a), Some(b)) => b - a,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Jsonl,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(Error::InvalidInput(format!("unknown input format `{other}`"))),
        }
    }
}

pub fn parse_timestamp(s: &str) -> std::result::Result<i64, String> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.timestamp())
        .map_err(|e| format!("bad timestamp `{s}`: {e}"))
}

pub fn format_timestamp(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .expect("timestamp out of chrono range")
        .to_rfc3339_opts(SecondsFormat::Secs, true)
}

#[derive(Debug, Deserialize, Serialize)]
struct RawRow {
    person_id: String,
    timestamp: String,
    lat: f64,
    lon: f64,
}

const CSV_HEADER: [&str; 4] = ["person_id", "timestamp", "lat", "lon"];

/// Parses a stream into one trajectory per person, ordered by person id.
pub fn parse_trajectories<R: BufRead>(reader: R, format: InputFormat) -> Result<Vec<Trajectory>> {
    let rows = match format {
        InputFormat::Csv => read_csv_rows(reader)?,
        InputFormat::Jsonl => read_jsonl_rows(reader)?,
    };

    let mut by_person: BTreeMap<String, Vec<(u64, GeoPoint)>> = BTreeMap::new();
    for (line, row) in rows {
        if !coordinates_valid(row.lat, row.lon) {
            return Err(Error::OutOfRange { line, lat: row.lat, lon: row.lon });
        }
        let timestamp = parse_timestamp(&row.timestamp).map_err(|message| Error::Parse { line, message })?;
        by_person
            .entry(row.person_id)
            .or_default()
            .push((line, GeoPoint { timestamp, lat: row.lat, lon: row.lon }));
    }

    let mut out = Vec::with_capacity(by_person.len());
    for (person_id, mut pts) in by_person {
        pts.sort_by_key(|(_, p)| p.timestamp);
        for w in pts.windows(2) {
            if w[0].1.timestamp == w[1].1.timestamp {
                return Err(Error::DuplicateTimestamp {
                    line: w[0].0.max(w[1].0),
                    person_id,
                    timestamp: format_timestamp(w[1].1.timestamp),
                });
            }
        }
        out.push(Trajectory { person_id, points: pts.into_iter().map(|(_, p)| p).collect() });
    }
    Ok(out)
}

fn read_csv_rows<R: BufRead>(reader: R) -> Result<Vec<(u64, RawRow)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        // an empty stream has no header at all
        Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
        Err(e) => return Err(Error::Parse { line: 1, message: e.to_string() }),
    };
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let header_line = headers.position().map_or(1, |p| p.line());
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Parse {
            line: header_line,
            message: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(header_line + rows.len() as u64 + 1, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(header_line + rows.len() as u64 + 1, |p| p.line());
        let row: RawRow = rec.deserialize(Some(&headers)).map_err(|e| Error::Parse { line, message: e.to_string() })?;
        rows.push((line, row));
    }
    Ok(rows)
}

fn read_jsonl_rows<R: BufRead>(reader: R) -> Result<Vec<(u64, RawRow)>> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: RawRow = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        rows.push((line_no, row));
    }
    Ok(rows)
}

/// Writes trajectories in the canonical csv input format.
pub fn write_trajectories_csv<W: Write>(writer: W, trajs: &[Trajectory]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for t in trajs {
        for p in &t.points {
            w.write_record([
                t.person_id.clone(),
                format_timestamp(p.timestamp),
                format!("{}", p.lat),
                format!("{}", p.lon),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Great-circle distance on a sphere of the given radius, coordinates in degrees.
pub fn haversine_deg<F: Float>(lat1: F, lon1: F, lat2: F, lon2: F, radius: F) -> F {
    let two = F::one() + F::one();
    let phi1 = lat1.to_radians();
    let phi2 = lat2.to_radians();
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / two).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / two).sin().powi(2);
    let a = a.min(F::one()).max(F::zero());
    two * radius * a.sqrt().asin()
}

/// Haversine distance in meters.
pub fn haversine(a: &GeoPoint, b: &GeoPoint) -> f64 {
    haversine_deg(a.lat, a.lon, b.lat, b.lon, EARTH_RADIUS_M)
}

fn to_unit(lat: f64, lon: f64) -> [f64; 3] {
    let (phi, lambda) = (lat.to_radians(), lon.to_radians());
    [phi.cos() * lambda.cos(), phi.cos() * lambda.sin(), phi.sin()]
}

fn from_unit(v: [f64; 3]) -> (f64, f64) {
    let lat = v[2].atan2((v[0] * v[0] + v[1] * v[1]).sqrt()).to_degrees();
    let lon = v[1].atan2(v[0]).to_degrees();
    (lat, lon)
}

/// Position a fraction `frac` of the way along the great circle from `a` to `b`.
/// The timestamp is interpolated linearly and rounded to the nearest second.
pub fn interpolate(a: &GeoPoint, b: &GeoPoint, frac: f64) -> GeoPoint {
    let timestamp = a.timestamp + ((b.timestamp - a.timestamp) as f64 * frac).round() as i64;
    if frac <= 0.0 {
        return GeoPoint { timestamp, ..*a };
    }
    if frac >= 1.0 {
        return GeoPoint { timestamp, ..*b };
    }
    let (va, vb) = (to_unit(a.lat, a.lon), to_unit(b.lat, b.lon));
    let theta = haversine_deg(a.lat, a.lon, b.lat, b.lon, 1.0);
    let (lat, lon) = if theta < 1e-12 {
        (a.lat + (b.lat - a.lat) * frac, a.lon + (b.lon - a.lon) * frac)
    } else {
        let s = theta.sin();
        let wa = ((1.0 - frac) * theta).sin() / s;
        let wb = (frac * theta).sin() / s;
        from_unit([
            wa * va[0] + wb * vb[0],
            wa * va[1] + wb * vb[1],
            wa * va[2] + wb * vb[2],
        ])
    };
    GeoPoint { timestamp, lat, lon }
}

/// Position on a time-ordered polyline at instant `t`, interpolating along the
/// great circle between the bracketing fixes. `None` outside the polyline's span.
pub fn position_at(points: &[GeoPoint], t: i64) -> Option<GeoPoint> {
    let first = points.first()?;
    let last = points.last()?;
    if t < first.timestamp || t > last.timestamp {
        return None;
    }
    let idx = points.partition_point(|p| p.timestamp <= t);
    let a = &points[idx - 1];
    if a.timestamp == t || idx == points.len() {
        return Some(*a);
    }
    let b = &points[idx];
    let frac = (t - a.timestamp) as f64 / (b.timestamp - a.timestamp) as f64;
    let mut p = interpolate(a, b, frac);
    p.timestamp = t;
    Some(p)
}

/// Point reached from `origin` after `distance_m` along initial `bearing_deg`.
pub fn destination(origin: &GeoPoint, bearing_deg: f64, distance_m: f64, timestamp: i64) -> GeoPoint {
    let delta = distance_m / EARTH_RADIUS_M;
    let theta = bearing_deg.to_radians();
    let phi1 = origin.lat.to_radians();
    let lambda1 = origin.lon.to_radians();
    let phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos()).asin();
    let lambda2 = lambda1
        + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * phi2.sin());
    let lon = (lambda2.to_degrees() + 540.0).rem_euclid(360.0) - 180.0;
    GeoPoint { timestamp, lat: phi2.to_degrees(), lon }
}

/// Half-open time interval `[start, end)` in Unix seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: i64,
    pub end: i64,
}

impl TimeWindow {
    pub fn new(start: i64, end: i64) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidInput(format!("window end {end} before start {start}")));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> i64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// Length of the overlap with `[a, b]`.
    pub fn overlap(&self, a: i64, b: i64) -> i64 {
        (b.min(self.end) - a.max(self.start)).max(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    /// Seconds inside the window spanned by runs of fixes no more than `max_gap` apart.
    pub covered_time: i64,
    pub coverage_fraction: f64,
    pub gap_count: usize,
    /// Mean clipped length (seconds) of over-threshold gaps; zero without gaps.
    pub mean_gap_length: f64,
    pub gap_time: i64,
    /// Window time before the first fix and after the last one.
    pub boundary_slack: i64,
}

pub fn coverage_stats(traj: &Trajectory, max_gap: i64, window: TimeWindow) -> Result<CoverageStats> {
    if max_gap <= 0 {
        return Err(Error::InvalidInput("max_gap must be positive".into()));
    }
    let pts = &traj.points;
    let mut covered = 0;
    let mut gap_time = 0;
    let mut gap_count = 0;

    if let (Some(first), Some(last)) = (pts.first(), pts.last()) {
        let mut run_start = first.timestamp;
        for w in pts.windows(2) {
            let (a, b) = (w[0].timestamp, w[1].timestamp);
            if b - a > max_gap {
                covered += window.overlap(run_start, a);
                let g = window.overlap(a, b);
                if g > 0 {
                    gap_count += 1;
                    gap_time += g;
                }
                run_start = b;
            }
        }
        covered += window.overlap(run_start, last.timestamp);
    }

    let len = window.len();
    Ok(CoverageStats {
        covered_time: covered,
        coverage_fraction: if len > 0 { covered as f64 / len as f64 } else { 0.0 },
        gap_count,
        mean_gap_length: if gap_count > 0 { gap_time as f64 / gap_count as f64 } else { 0.0 },
        gap_time,
        boundary_slack: len - covered - gap_time,
    })
}

/// Maximal slices spanning at least `min_span` seconds with no inter-fix gap above `max_gap`.
pub fn select_contiguous_sets(trajs: &[Trajectory], min_span: i64, max_gap: i64) -> Vec<Trajectory> {
    let mut out = Vec::new();
    for t in trajs {
        let mut start = 0;
        for i in 0..t.points.len() {
            let ends_run =
                i + 1 == t.points.len() || t.points[i + 1].timestamp - t.points[i].timestamp > max_gap;
            if ends_run {
                let run = &t.points[start..=i];
                if run[run.len() - 1].timestamp - run[0].timestamp >= min_span {
                    out.push(Trajectory { person_id: t.person_id.clone(), points: run.to_vec() });
                }
                start = i + 1;
            }
        }
    }
    out
}

fn speed(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let dt = (b.timestamp - a.timestamp).abs().max(1) as f64;
    haversine(a, b) / dt
}

/// Drops fixes whose implied speed to every neighbor exceeds `max_speed` (m/s).
/// An endpoint is dropped when its only neighbor is reached implausibly fast
/// while that neighbor is itself consistent with the next fix.
pub fn drop_implausible_speeds(traj: &Trajectory, max_speed: f64) -> Trajectory {
    let p = &traj.points;
    let n = p.len();
    let keep: Vec<bool> = (0..n)
        .map(|i| {
            if n < 3 {
                return true;
            }
            if i == 0 {
                return !(speed(&p[0], &p[1]) > max_speed && speed(&p[1], &p[2]) <= max_speed);
            }
            if i == n - 1 {
                return !(speed(&p[n - 2], &p[n - 1]) > max_speed
                    && speed(&p[n - 3], &p[n - 2]) <= max_speed);
            }
            !(speed(&p[i - 1], &p[i]) > max_speed && speed(&p[i], &p[i + 1]) > max_speed)
        })
        .collect();
    Trajectory {
        person_id: traj.person_id.clone(),
        points: p.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| *p).collect(),
    }
}
