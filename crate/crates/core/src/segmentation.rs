//! Stay-point detection, time-ratio simplification and per-track metrics.

use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{haversine, interpolate, GeoPoint, Trajectory};

pub const DEFAULT_STAY_RADIUS_M: f64 = 200.0;
pub const DEFAULT_MIN_STAY_S: i64 = 600;
pub const DEFAULT_TDTR_TOLERANCE_M: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentParams {
    pub radius_m: f64,
    pub min_stay_s: i64,
    pub tdtr_tolerance_m: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            radius_m: DEFAULT_STAY_RADIUS_M,
            min_stay_s: DEFAULT_MIN_STAY_S,
            tdtr_tolerance_m: DEFAULT_TDTR_TOLERANCE_M,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayPoint {
    pub lat: f64,
    pub lon: f64,
    pub arrive: i64,
    pub depart: i64,
    /// Indices into [`SegmentedDay::fixes`].
    pub members: Range<usize>,
}

impl StayPoint {
    pub fn member_count(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub fixes: Range<usize>,
}

/// A trajectory split into alternating stays and tracks.
///
/// `path` is the polyline used for distance metrics: the raw fixes, or their
/// time-ratio simplification once [`SegmentedDay::simplify_path`] has run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentedDay {
    pub person_id: String,
    pub fixes: Vec<GeoPoint>,
    pub stays: Vec<StayPoint>,
    pub tracks: Vec<Track>,
    pub path: Vec<GeoPoint>,
}

impl SegmentedDay {
    pub fn simplify_path(&mut self, tolerance_m: f64) {
        self.path = tdtr_simplify(&self.fixes, tolerance_m);
    }

    /// Movement span of a track: from the preceding departure to the next arrival.
    pub fn track_span(&self, k: usize) -> (i64, i64) {
        let r = &self.tracks[k].fixes;
        let mut start = self.fixes[r.start].timestamp;
        let mut end = self.fixes[r.end - 1].timestamp;
        if let Some(s) = self.stays.iter().rev().find(|s| s.members.end <= r.start) {
            start = s.depart;
        }
        if let Some(s) = self.stays.iter().find(|s| s.members.start >= r.end) {
            end = s.arrive;
        }
        (start, end)
    }

    /// Whether fix `i` belongs to a stay.
    pub fn in_stay(&self, i: usize) -> bool {
        let k = self.stays.partition_point(|s| s.members.end <= i);
        self.stays.get(k).is_some_and(|s| s.members.contains(&i))
    }

    /// Writes stay and track records as JSON lines.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        #[derive(Serialize)]
        #[serde(tag = "kind", rename_all = "lowercase")]
        enum Rec<'a> {
            Stay { person_id: &'a str, lat: f64, lon: f64, arrive: String, depart: String, member_count: usize },
            Track { person_id: &'a str, start: String, end: String, fixes: usize, distance_m: f64 },
        }
        let mut si = self.stays.iter().peekable();
        let mut ti = self.tracks.iter().peekable();
        loop {
            let next_is_stay = match (si.peek(), ti.peek()) {
                (Some(s), Some(t)) => s.members.start < t.fixes.start,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => break,
            };
            let rec = if next_is_stay {
                let s = si.next().unwrap();
                Rec::Stay {
                    person_id: &self.person_id,
                    lat: s.lat,
                    lon: s.lon,
                    arrive: crate::geo::format_timestamp(s.arrive),
                    depart: crate::geo::format_timestamp(s.depart),
                    member_count: s.member_count(),
                }
            } else {
                let t = ti.next().unwrap();
                let pts = &self.fixes[t.fixes.clone()];
                Rec::Track {
                    person_id: &self.person_id,
                    start: crate::geo::format_timestamp(pts[0].timestamp),
                    end: crate::geo::format_timestamp(pts[pts.len() - 1].timestamp),
                    fixes: pts.len(),
                    distance_m: track_distance(pts),
                }
            };
            serde_json::to_writer(&mut w, &rec)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Greedy forward scan: a cluster grows while each next fix lies within
/// `radius_m` of the running centroid and becomes a stay once it spans
/// `min_duration` seconds. Everything else falls into tracks.
pub fn detect_stay_points(traj: &Trajectory, radius_m: f64, min_duration: i64) -> SegmentedDay {
    let p = &traj.points;
    let n = p.len();
    let mut stays = Vec::new();
    let mut i = 0;
    while i < n {
        let (mut sum_lat, mut sum_lon) = (p[i].lat, p[i].lon);
        let mut j = i + 1;
        while j < n {
            let k = (j - i) as f64;
            let centroid = GeoPoint { timestamp: 0, lat: sum_lat / k, lon: sum_lon / k };
            if haversine(&centroid, &p[j]) > radius_m {
                break;
            }
            sum_lat += p[j].lat;
            sum_lon += p[j].lon;
            j += 1;
        }
        if p[j - 1].timestamp - p[i].timestamp >= min_duration {
            let k = (j - i) as f64;
            stays.push(StayPoint {
                lat: sum_lat / k,
                lon: sum_lon / k,
                arrive: p[i].timestamp,
                depart: p[j - 1].timestamp,
                members: i..j,
            });
            i = j;
        } else {
            i += 1;
        }
    }

    let mut tracks = Vec::new();
    let mut cursor = 0;
    for s in &stays {
        if s.members.start > cursor {
            tracks.push(Track { fixes: cursor..s.members.start });
        }
        cursor = s.members.end;
    }
    if cursor < n {
        tracks.push(Track { fixes: cursor..n });
    }

    SegmentedDay {
        person_id: traj.person_id.clone(),
        fixes: p.clone(),
        stays,
        tracks,
        path: p.clone(),
    }
}

/// Stay detection followed by path simplification.
pub fn segment(traj: &Trajectory, params: &SegmentParams) -> SegmentedDay {
    let mut day = detect_stay_points(traj, params.radius_m, params.min_stay_s);
    day.simplify_path(params.tdtr_tolerance_m);
    day
}

/// Distance from `p` to the position the chord `a -> b` predicts at `p`'s time.
fn time_ratio_deviation(a: &GeoPoint, b: &GeoPoint, p: &GeoPoint) -> f64 {
    let frac = (p.timestamp - a.timestamp) as f64 / (b.timestamp - a.timestamp) as f64;
    haversine(p, &interpolate(a, b, frac))
}

/// Top-down time-ratio simplification. Keeps the first and last points and
/// recursively splits at the largest time-synchronized deviation until every
/// dropped point lies within `tolerance_m` of its chord position.
pub fn tdtr_simplify(track: &[GeoPoint], tolerance_m: f64) -> Vec<GeoPoint> {
    let n = track.len();
    if n <= 2 {
        return track.to_vec();
    }
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    let mut stack = vec![(0, n - 1)];
    while let Some((a, b)) = stack.pop() {
        if b <= a + 1 {
            continue;
        }
        let mut worst = (a, f64::NEG_INFINITY);
        for k in a + 1..b {
            let d = time_ratio_deviation(&track[a], &track[b], &track[k]);
            if d > worst.1 {
                worst = (k, d);
            }
        }
        if worst.1 > tolerance_m {
            keep[worst.0] = true;
            stack.push((worst.0, b));
            stack.push((a, worst.0));
        }
    }
    track.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| *p).collect()
}

/// Sum of haversine distances over consecutive points, in meters.
pub fn track_distance(track: &[GeoPoint]) -> f64 {
    track.windows(2).map(|w| haversine(&w[0], &w[1])).sum()
}

/// Root-mean-square distance (meters) of the points from their lat/lon centroid.
pub fn radius_of_gyration(points: &[GeoPoint]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Empty("radius of gyration needs at least one point"));
    }
    let n = points.len() as f64;
    let lat = points.iter().map(|p| p.lat).sum::<f64>() / n;
    let lon = points.iter().map(|p| p.lon).sum::<f64>() / n;
    let c = GeoPoint { timestamp: 0, lat, lon };
    let ms = points.iter().map(|p| haversine(&c, p).powi(2)).sum::<f64>() / n;
    Ok(ms.sqrt())
}
