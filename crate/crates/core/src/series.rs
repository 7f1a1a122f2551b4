//! Fixed-interval metric series with response masks, and gap bookkeeping.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{format_timestamp, haversine, parse_timestamp, GeoPoint};
use crate::segmentation::{radius_of_gyration, SegmentedDay};

pub const DEFAULT_INTERVAL_S: i64 = 15 * 60;
pub const DEFAULT_MAX_GAP_S: i64 = 6 * 60;
pub const DAY_S: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    TravelDistanceKm,
    TripCount,
    RadiusOfGyrationKm,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::TravelDistanceKm, Metric::TripCount, Metric::RadiusOfGyrationKm];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::TravelDistanceKm => "travel_distance_km",
            Metric::TripCount => "trip_count",
            Metric::RadiusOfGyrationKm => "radius_of_gyration_km",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown metric `{s}`")))
    }
}

/// Discretization grid: `len` intervals of `interval` seconds from `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub start: i64,
    pub interval: i64,
    pub len: usize,
}

impl Grid {
    /// Whole intervals lying inside `[first, last]`, aligned to multiples of `interval`.
    pub fn inner(first: i64, last: i64, interval: i64) -> Self {
        let start = first.div_euclid(interval) * interval + if first.rem_euclid(interval) == 0 { 0 } else { interval };
        let end = last.div_euclid(interval) * interval;
        Self { start, interval, len: ((end - start) / interval).max(0) as usize }
    }

    /// Smallest aligned grid covering `[first, last]`.
    pub fn outer(first: i64, last: i64, interval: i64) -> Self {
        let start = first.div_euclid(interval) * interval;
        let end = last.div_euclid(interval) * interval + if last.rem_euclid(interval) == 0 { 0 } else { interval };
        Self { start, interval, len: ((end - start) / interval).max(0) as usize }
    }

    pub fn end(&self) -> i64 {
        self.start + self.len as i64 * self.interval
    }

    fn bounds(&self, t: usize) -> (i64, i64) {
        let a = self.start + t as i64 * self.interval;
        (a, a + self.interval)
    }
}

/// A person's metric series. `None` marks a missing element (r_t = 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub person_id: String,
    pub set_id: u32,
    pub metric: Metric,
    pub interval: i64,
    pub start: i64,
    pub values: Vec<Option<f64>>,
}

impl MetricSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn response(&self) -> Vec<bool> {
        self.values.iter().map(Option::is_some).collect()
    }

    /// Wall-clock start of element `t` (zero-based).
    pub fn time_of(&self, t: usize) -> i64 {
        self.start + t as i64 * self.interval
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    pub fn observed_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Copy with elements `[gap.start, gap.end)` set missing.
    pub fn masked(&self, gap: &GapSpec) -> MetricSeries {
        let mut out = self.clone();
        for v in &mut out.values[gap.start..gap.end] {
            *v = None;
        }
        out
    }
}

/// A maximal run of missing elements `[start, end)`, zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GapSpec {
    pub start: usize,
    pub end: usize,
    /// No observed element before the gap.
    pub leading: bool,
    /// No observed element after the gap.
    pub trailing: bool,
}

impl GapSpec {
    pub fn interior(start: usize, end: usize) -> Self {
        Self { start, end, leading: false, trailing: false }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// One-based `t` as used in reports.
    pub fn report_start(&self) -> usize {
        self.start + 1
    }

    /// One-based `s` as used in reports.
    pub fn report_end(&self) -> usize {
        self.end + 1
    }
}

/// Per-person matrix of metric series sharing one response mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesBundle {
    series: Vec<MetricSeries>,
}

impl SeriesBundle {
    pub fn new(series: Vec<MetricSeries>) -> Result<Self> {
        if let Some(first) = series.first() {
            let mask = first.response();
            for s in &series[1..] {
                if s.interval != first.interval || s.start != first.start || s.len() != first.len() {
                    return Err(Error::InvalidInput("bundle members must share grid".into()));
                }
                if s.response() != mask {
                    return Err(Error::InvalidInput("bundle members must share response mask".into()));
                }
            }
        }
        Ok(Self { series })
    }

    pub fn get(&self, metric: Metric) -> Option<&MetricSeries> {
        self.series.iter().find(|s| s.metric == metric)
    }

    pub fn series(&self) -> &[MetricSeries] {
        &self.series
    }

    pub fn into_series(self) -> Vec<MetricSeries> {
        self.series
    }
}

/// Response mask: an interval is missing iff some uncovered stretch (a silence
/// longer than `max_gap`, or the time before the first / after the last fix)
/// overlaps it by more than `max_gap` seconds.
pub fn response_mask(fixes: &[GeoPoint], grid: &Grid, max_gap: i64) -> Vec<bool> {
    let mut uncovered: Vec<(i64, i64)> = Vec::new();
    match (fixes.first(), fixes.last()) {
        (Some(f), Some(l)) => {
            uncovered.push((i64::MIN, f.timestamp));
            for w in fixes.windows(2) {
                if w[1].timestamp - w[0].timestamp > max_gap {
                    uncovered.push((w[0].timestamp, w[1].timestamp));
                }
            }
            uncovered.push((l.timestamp, i64::MAX));
        }
        _ => uncovered.push((i64::MIN, i64::MAX)),
    }
    (0..grid.len)
        .map(|t| {
            let (a, b) = grid.bounds(t);
            let first = uncovered.partition_point(|&(_, e)| e <= a);
            !uncovered[first..]
                .iter()
                .take_while(|&&(s, _)| s < b)
                .any(|&(s, e)| e.min(b) - s.max(a) > max_gap)
        })
        .collect()
}

fn split_segments_into(path: &[GeoPoint], grid: &Grid, acc: &mut [f64]) {
    for w in path.windows(2) {
        let (ta, tb) = (w[0].timestamp, w[1].timestamp);
        if tb <= ta || tb <= grid.start || ta >= grid.end() {
            continue;
        }
        let len = haversine(&w[0], &w[1]);
        let dt = (tb - ta) as f64;
        let first = ((ta.max(grid.start) - grid.start) / grid.interval) as usize;
        for (t, slot) in acc.iter_mut().enumerate().skip(first) {
            let (a, b) = grid.bounds(t);
            if a >= tb {
                break;
            }
            let overlap = tb.min(b) - ta.max(a);
            if overlap > 0 {
                *slot += len * overlap as f64 / dt;
            }
        }
    }
}

/// Discretizes a segmented trajectory onto `grid`.
///
/// * travel distance: each path segment's length is split across interval
///   boundaries in proportion to elapsed time, then summed per interval (km);
/// * trip count: tracks whose movement span touches the interval;
/// * radius of gyration: RoG of the interval's fixes when any of them is on a
///   track, zero for dwell-only intervals (km).
pub fn discretize(seg: &SegmentedDay, grid: &Grid, metric: Metric, max_gap: i64) -> Result<MetricSeries> {
    if seg.fixes.is_empty() {
        return Err(Error::Empty("segmented input has no fixes"));
    }
    if grid.interval <= 0 || DAY_S % grid.interval != 0 {
        return Err(Error::InvalidInput(format!("interval {} s does not divide a day", grid.interval)));
    }
    let mut raw = vec![0.0; grid.len];
    match metric {
        Metric::TravelDistanceKm => {
            split_segments_into(&seg.path, grid, &mut raw);
            for v in &mut raw {
                *v /= 1000.0;
            }
        }
        Metric::TripCount => {
            for k in 0..seg.tracks.len() {
                let (s, e) = seg.track_span(k);
                for (t, slot) in raw.iter_mut().enumerate() {
                    let (a, b) = grid.bounds(t);
                    let touches = if e > s { e.min(b) - s.max(a) > 0 } else { a <= s && s < b };
                    if touches {
                        *slot += 1.0;
                    }
                }
            }
        }
        Metric::RadiusOfGyrationKm => {
            for (t, slot) in raw.iter_mut().enumerate() {
                let (a, b) = grid.bounds(t);
                let lo = seg.fixes.partition_point(|p| p.timestamp < a);
                let hi = seg.fixes.partition_point(|p| p.timestamp < b);
                if (lo..hi).any(|i| !seg.in_stay(i)) {
                    *slot = radius_of_gyration(&seg.fixes[lo..hi])? / 1000.0;
                }
            }
        }
    }
    let mask = response_mask(&seg.fixes, grid, max_gap);
    Ok(MetricSeries {
        person_id: seg.person_id.clone(),
        set_id: 0,
        metric,
        interval: grid.interval,
        start: grid.start,
        values: raw.into_iter().zip(mask).map(|(v, r)| r.then_some(v)).collect(),
    })
}

/// All three metrics on one grid.
pub fn discretize_bundle(seg: &SegmentedDay, grid: &Grid, max_gap: i64, set_id: u32) -> Result<SeriesBundle> {
    let series = Metric::ALL
        .iter()
        .map(|&m| {
            discretize(seg, grid, m, max_gap).map(|mut s| {
                s.set_id = set_id;
                s
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SeriesBundle::new(series)
}

/// Maximal runs of missing elements.
pub fn find_gaps(series: &MetricSeries) -> Vec<GapSpec> {
    let n = series.len();
    let mut gaps = Vec::new();
    let mut t = 0;
    while t < n {
        if series.values[t].is_none() {
            let start = t;
            while t < n && series.values[t].is_none() {
                t += 1;
            }
            gaps.push(GapSpec { start, end: t, leading: start == 0, trailing: t == n });
        } else {
            t += 1;
        }
    }
    gaps
}

/// Observed elements immediately around a gap, at most
/// `match_buffer / interval` on each side. A slice stops early at the series
/// boundary or at another missing element.
pub fn split_query(series: &MetricSeries, gap: &GapSpec, match_buffer: i64) -> Result<(Vec<f64>, Vec<f64>)> {
    if match_buffer < series.interval {
        return Err(Error::InvalidInput("match buffer shorter than one interval".into()));
    }
    if gap.end > series.len() || gap.start > gap.end {
        return Err(Error::InvalidInput("gap outside series".into()));
    }
    let k = (match_buffer / series.interval) as usize;
    let mut pre: Vec<f64> = series.values[..gap.start].iter().rev().map_while(|v| *v).take(k).collect();
    pre.reverse();
    let post: Vec<f64> = series.values[gap.end..].iter().map_while(|v| *v).take(k).collect();
    if pre.is_empty() && post.is_empty() {
        return Err(Error::NoAnchor("no observed element on either side of the gap".into()));
    }
    Ok((pre, post))
}

const SERIES_HEADER: [&str; 8] = ["person_id", "set_id", "metric", "interval_s", "start_iso", "index", "value", "observed"];

/// Writes the `series-csv` format, one row per element.
pub fn write_series_csv<W: Write>(writer: W, series: &[MetricSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SERIES_HEADER)?;
    for s in series {
        let start = format_timestamp(s.start);
        for (i, v) in s.values.iter().enumerate() {
            w.write_record([
                s.person_id.as_str(),
                &s.set_id.to_string(),
                s.metric.as_str(),
                &s.interval.to_string(),
                &start,
                &i.to_string(),
                &v.map(|x| x.to_string()).unwrap_or_default(),
                if v.is_some() { "1" } else { "0" },
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_series_csv<R: Read>(reader: R) -> Result<Vec<MetricSeries>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let mut out: Vec<MetricSeries> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |m: &str| Error::Parse { line, message: m.to_string() };
        if rec.len() != SERIES_HEADER.len() {
            return Err(bad("wrong field count"));
        }
        let set_id: u32 = rec[1].parse().map_err(|_| bad("bad set_id"))?;
        let metric: Metric = rec[2].parse().map_err(|_| bad("bad metric"))?;
        let interval: i64 = rec[3].parse().map_err(|_| bad("bad interval_s"))?;
        let start = parse_timestamp(&rec[4]).map_err(|m| bad(&m))?;
        let index: usize = rec[5].parse().map_err(|_| bad("bad index"))?;
        let value = match &rec[7] {
            "1" => Some(rec[6].parse::<f64>().map_err(|_| bad("bad value"))?),
            "0" if rec[6].is_empty() => None,
            _ => return Err(bad("observed must be 1, or 0 with an empty value")),
        };
        let same = out.last().is_some_and(|s: &MetricSeries| {
            s.person_id == rec[0] && s.set_id == set_id && s.metric == metric
        });
        if !same {
            out.push(MetricSeries {
                person_id: rec[0].to_string(),
                set_id,
                metric,
                interval,
                start,
                values: Vec::new(),
            });
        }
        let s = out.last_mut().unwrap();
        if index != s.values.len() || s.interval != interval || s.start != start {
            return Err(bad("rows out of order"));
        }
        s.values.push(value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{destination, Trajectory};
    use crate::segmentation::{detect_stay_points, segment, track_distance, SegmentParams};
    use proptest::prelude::*;

    fn series(values: Vec<Option<f64>>) -> MetricSeries {
        MetricSeries {
            person_id: "k".into(),
            set_id: 0,
            metric: Metric::TravelDistanceKm,
            interval: 900,
            start: 0,
            values,
        }
    }

    fn hm(h: i64, m: i64) -> i64 {
        // 2018-11-01 00:00:00Z
        1_541_030_400 + h * 3600 + m * 60
    }

    fn leg(from: &GeoPoint, bearing: f64, dist: f64, t1: i64) -> Vec<GeoPoint> {
        let t0 = from.timestamp;
        (1..=(t1 - t0) / 60)
            .map(|k| {
                let t = t0 + k * 60;
                destination(from, bearing, dist * (t - t0) as f64 / (t1 - t0) as f64, t)
            })
            .collect()
    }

    /// Two stays bridged by one track across the 09:32 cutoff, with a slow
    /// right-angle drift inside the second stay. Fixes every minute.
    fn fig1_day() -> (SegmentedDay, Grid) {
        let home = GeoPoint { timestamp: hm(8, 50), lat: 52.0, lon: 5.0 };
        let mut pts: Vec<GeoPoint> = (0..=27).map(|m| GeoPoint { timestamp: hm(8, 50 + m), ..home }).collect();
        for (bearing, dist, until) in
            [(0.0, 1100.0, hm(9, 25)), (90.0, 3000.0, hm(9, 40)), (0.0, 2700.0, hm(9, 47)), (90.0, 1.0, hm(10, 2)), (0.0, 1.4, hm(10, 17))]
        {
            let from = *pts.last().unwrap();
            pts.extend(leg(&from, bearing, dist, until));
        }
        let traj = Trajectory { person_id: "k".into(), points: pts };
        let mut day = detect_stay_points(&traj, 200.0, 600);
        day.simplify_path(0.5);
        (day, Grid { start: hm(9, 17), interval: 900, len: 4 })
    }

    #[test]
    fn fig1_distance_series() {
        let (day, grid) = fig1_day();
        let s = discretize(&day, &grid, Metric::TravelDistanceKm, DEFAULT_MAX_GAP_S).unwrap();
        // the 3 km leg spans 09:25-09:40: 7/15 before the cutoff, 8/15 after
        let expected: [f64; 4] = [1.1 + 3.0 * 7.0 / 15.0, 3.0 * 8.0 / 15.0 + 2.7, 0.001, 0.0014];
        assert!((expected[0] - 2.5).abs() < 1e-12 && (expected[1] - 4.3).abs() < 1e-12);
        for (v, e) in s.values.iter().zip(expected) {
            let v = v.unwrap_or_else(|| panic!("missing in {:?}", s.values));
            assert!((v - e).abs() < 1e-6, "{v} vs {e}");
        }
    }

    #[test]
    fn sixteen_minute_silence_mask() {
        let start = hm(9, 17);
        let grid = Grid { start, interval: 900, len: 4 };
        let fixes: Vec<GeoPoint> = (0..=60)
            .map(|m| start + m * 60)
            .filter(|&t| t <= hm(9, 31) || t >= hm(9, 48))
            .map(|t| GeoPoint { timestamp: t, lat: 52.0, lon: 5.0 })
            .collect();
        assert_eq!(response_mask(&fixes, &grid, DEFAULT_MAX_GAP_S), vec![true, false, true, true]);
        let day = detect_stay_points(&Trajectory { person_id: "k".into(), points: fixes }, 200.0, 600);
        let s = discretize(&day, &grid, Metric::TravelDistanceKm, DEFAULT_MAX_GAP_S).unwrap();
        let gaps = find_gaps(&s);
        assert_eq!(gaps.len(), 1);
        assert_eq!((gaps[0].report_start(), gaps[0].len()), (2, 1));
        assert_eq!(gaps[0].report_end() - gaps[0].report_start(), 1);
    }

    #[test]
    fn stationary_day_is_all_zero() {
        let pts: Vec<GeoPoint> =
            (0..=1440).map(|m| GeoPoint { timestamp: m * 60, lat: 52.0, lon: 5.0 }).collect();
        let day = segment(&Trajectory { person_id: "k".into(), points: pts }, &SegmentParams::default());
        let grid = Grid::inner(0, 86_400, 900);
        assert_eq!(grid.len, 96);
        for m in Metric::ALL {
            let s = discretize(&day, &grid, m, DEFAULT_MAX_GAP_S).unwrap();
            assert!(s.values.iter().all(|v| *v == Some(0.0)), "{m}");
        }
    }

    #[test]
    fn empty_input_and_bad_interval() {
        let day = detect_stay_points(&Trajectory { person_id: "k".into(), points: vec![] }, 200.0, 600);
        let grid = Grid { start: 0, interval: 900, len: 1 };
        assert!(discretize(&day, &grid, Metric::TripCount, 360).is_err());
        let (day, _) = fig1_day();
        assert!(discretize(&day, &Grid { start: 0, interval: 7 * 60, len: 1 }, Metric::TripCount, 360).is_err());
    }

    #[test]
    fn trip_count_touches_every_interval() {
        let (day, grid) = fig1_day();
        let s = discretize(&day, &grid, Metric::TripCount, DEFAULT_MAX_GAP_S).unwrap();
        // one track from the 09:17 departure to the 09:47 arrival
        assert_eq!(day.tracks.len(), 1);
        assert_eq!(s.values, vec![Some(1.0), Some(1.0), Some(0.0), Some(0.0)]);
        let rog = discretize(&day, &grid, Metric::RadiusOfGyrationKm, DEFAULT_MAX_GAP_S).unwrap();
        assert!(rog.values[0].unwrap() > 0.0);
        assert_eq!(rog.values[3], Some(0.0));
    }

    #[test]
    fn gap_examples() {
        assert!(find_gaps(&series(vec![Some(1.0); 4])).is_empty());
        let g = find_gaps(&series(vec![Some(1.0), None, None, None, Some(1.0)]));
        assert_eq!(g, vec![GapSpec::interior(1, 4)]);
        assert_eq!(g[0].len(), 3);
        let g = find_gaps(&series(vec![None, Some(1.0), None]));
        assert!(g[0].leading && !g[0].trailing);
        assert!(!g[1].leading && g[1].trailing);
    }

    #[test]
    fn split_query_examples() {
        let q = series(vec![Some(2.5), None, Some(0.001), Some(0.0014)]);
        let gap = find_gaps(&q)[0];
        assert_eq!(split_query(&q, &gap, 900).unwrap(), (vec![2.5], vec![0.001]));
        assert_eq!(split_query(&q, &gap, 1800).unwrap(), (vec![2.5], vec![0.001, 0.0014]));
        assert_eq!(split_query(&q, &gap, 8 * 3600).unwrap(), (vec![2.5], vec![0.001, 0.0014]));
        assert!(split_query(&q, &gap, 600).is_err());

        let lead = series(vec![None, None, Some(1.0), Some(2.0)]);
        let gap = find_gaps(&lead)[0];
        assert_eq!(split_query(&lead, &gap, 1800).unwrap(), (vec![], vec![1.0, 2.0]));

        let all = series(vec![None, None]);
        assert!(matches!(split_query(&all, &find_gaps(&all)[0], 900), Err(Error::NoAnchor(_))));
    }

    #[test]
    fn bundle_requires_shared_mask() {
        let a = series(vec![Some(1.0), None]);
        let mut b = a.clone();
        b.metric = Metric::TripCount;
        assert!(SeriesBundle::new(vec![a.clone(), b.clone()]).is_ok());
        b.values[1] = Some(0.0);
        assert!(SeriesBundle::new(vec![a, b]).is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(Grid::inner(100, 2000, 900), Grid { start: 900, interval: 900, len: 1 });
        assert_eq!(Grid::inner(900, 2700, 900), Grid { start: 900, interval: 900, len: 2 });
        assert_eq!(Grid::outer(100, 2000, 900), Grid { start: 0, interval: 900, len: 3 });
    }

    fn random_path(steps: &[(f64, f64)]) -> Vec<GeoPoint> {
        let mut pts = vec![GeoPoint { timestamp: 0, lat: 52.0, lon: 5.0 }];
        for (k, (b, d)) in steps.iter().enumerate() {
            let last = *pts.last().unwrap();
            pts.push(destination(&last, *b, *d, (k as i64 + 1) * 60));
        }
        pts
    }

    proptest! {
        #[test]
        fn distance_conserved_over_observed_grid(
            steps in proptest::collection::vec((0.0f64..360.0, 0.0f64..900.0), 15..200),
        ) {
            let pts = random_path(&steps);
            let last = pts.last().unwrap().timestamp;
            let day = segment(&Trajectory { person_id: "k".into(), points: pts }, &SegmentParams::default());
            let grid = Grid::outer(0, last, 900);
            let s = discretize(&day, &grid, Metric::TravelDistanceKm, 900).unwrap();
            let total: f64 = s.values.iter().map(|v| v.unwrap()).sum();
            let expect = track_distance(&day.path) / 1000.0;
            prop_assert!((total - expect).abs() <= 1e-9 * expect.max(1e-12));
            // determinism
            prop_assert_eq!(discretize(&day, &grid, Metric::TravelDistanceKm, 900).unwrap(), s);
        }

        #[test]
        fn gaps_reconstruct_mask(mask in proptest::collection::vec(any::<bool>(), 0..60)) {
            let s = series(mask.iter().map(|&r| r.then_some(1.0)).collect());
            let mut rebuilt = vec![true; mask.len()];
            for g in find_gaps(&s) {
                prop_assert!(!g.is_empty());
                prop_assert_eq!(g.len(), g.end - g.start);
                if g.start > 0 { prop_assert!(mask[g.start - 1]); }
                if g.end < mask.len() { prop_assert!(mask[g.end]); }
                for r in &mut rebuilt[g.start..g.end] { *r = false; }
            }
            prop_assert_eq!(rebuilt, mask);
        }

        #[test]
        fn series_csv_round_trip(vals in proptest::collection::vec(proptest::option::of(0.0f64..100.0), 1..30)) {
            let mut a = series(vals.clone());
            a.start = 1_541_030_400;
            let mut b = a.clone();
            b.metric = Metric::TripCount;
            b.set_id = 3;
            let mut buf = Vec::new();
            write_series_csv(&mut buf, &[a.clone(), b.clone()]).unwrap();
            prop_assert_eq!(read_series_csv(buf.as_slice()).unwrap(), vec![a, b]);
        }
    }
}
