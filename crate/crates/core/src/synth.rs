//! Seeded synthetic movement data with a known ground truth.
//!
//! Each person lives on a timeline of stays joined by two-leg trips at a
//! constant speed. Fixes are sampled from that timeline at a fixed rate, with
//! a little jitter while stationary, and the phone goes silent between 01:00
//! and 04:00 on a few nights so that a week splits into one to four
//! contiguous sets.

use std::io::Write;

use chrono::NaiveDate;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{destination, haversine, interpolate, position_at, GeoPoint, Trajectory};
use crate::harness::derive_seed;
use crate::segmentation::track_distance;
use crate::series::DAY_S;

const MIN: i64 = 60;
const HOUR: i64 = 3600;
const MIN_STAY: i64 = 20 * MIN;
const OUTAGE: (i64, i64) = (HOUR, 4 * HOUR);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Archetype {
    /// Same commute every weekday, one short outing at weekends.
    Routine,
    /// Two to four errands a day between a handful of nearby places.
    Variable,
    /// Long, irregular trips and whole days at home.
    Atypical,
}

impl Archetype {
    pub const ALL: [Archetype; 3] = [Archetype::Routine, Archetype::Variable, Archetype::Atypical];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PersonaSpec {
    pub n_persons: usize,
    pub days: usize,
    /// Relative shares of routine, variable and atypical persons.
    pub routine: f64,
    pub variable: f64,
    pub atypical: f64,
    pub seed: u64,
    /// Local calendar date of the first day.
    pub start_date: String,
    /// Local time offset from UTC, seconds.
    pub utc_offset: i64,
    /// Seconds between fixes.
    pub fix_interval: i64,
    /// Standard deviation of stationary jitter, meters.
    pub jitter_m: f64,
    pub center_lat: f64,
    pub center_lon: f64,
}

impl Default for PersonaSpec {
    fn default() -> Self {
        Self {
            n_persons: 50,
            days: 7,
            routine: 0.5,
            variable: 0.3,
            atypical: 0.2,
            seed: 0,
            start_date: "2018-11-05".into(),
            utc_offset: 3600,
            fix_interval: 60,
            jitter_m: 3.0,
            center_lat: 52.09,
            center_lon: 5.12,
        }
    }
}

impl PersonaSpec {
    /// UTC timestamp of local midnight starting the first day.
    pub fn start_utc(&self) -> Result<i64> {
        let d = NaiveDate::parse_from_str(&self.start_date, "%Y-%m-%d")
            .map_err(|e| Error::Config(format!("start_date `{}`: {e}", self.start_date)))?;
        Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp() - self.utc_offset)
    }

    pub fn validate(&self) -> Result<()> {
        let shares = [self.routine, self.variable, self.atypical];
        if self.n_persons == 0 || self.days == 0 {
            return Err(Error::Config("persona spec needs at least one person and one day".into()));
        }
        if shares.iter().any(|s| !s.is_finite() || *s < 0.0) || shares.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("archetype shares must be non-negative and not all zero".into()));
        }
        if self.fix_interval <= 0 || self.fix_interval > 300 {
            return Err(Error::Config("fix interval must lie in 1..=300 s".into()));
        }
        if !(self.jitter_m.is_finite() && self.jitter_m >= 0.0) {
            return Err(Error::Config("jitter must be a non-negative distance".into()));
        }
        GeoPoint::new(0, self.center_lat, self.center_lon)?;
        self.start_utc().map(|_| ())
    }

    /// Archetype of person `i`: shares are laid out in order over the persons.
    pub fn archetype_of(&self, i: usize) -> Archetype {
        let total = self.routine + self.variable + self.atypical;
        let x = (i as f64 + 0.5) / self.n_persons as f64 * total;
        if x < self.routine {
            Archetype::Routine
        } else if x < self.routine + self.variable {
            Archetype::Variable
        } else {
            Archetype::Atypical
        }
    }
}

/// A labeled stationary episode of the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthStay {
    pub label: String,
    pub lat: f64,
    pub lon: f64,
    pub arrive: i64,
    pub depart: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonLedger {
    pub person_id: String,
    pub archetype: Archetype,
    pub stays: Vec<SynthStay>,
    /// Length of the noise-free route, meters.
    pub route_m: f64,
    /// Length of the polyline through the emitted fixes, meters.
    pub emitted_m: f64,
    /// Silent periods `[start, end)`.
    pub outages: Vec<(i64, i64)>,
    pub fixes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOutput {
    pub trajectories: Vec<Trajectory>,
    pub ledger: Vec<PersonLedger>,
}

pub fn write_ledger_jsonl<W: Write>(mut w: W, ledger: &[PersonLedger]) -> Result<()> {
    for p in ledger {
        serde_json::to_writer(&mut w, p)?;
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct Place {
    label: String,
    at: GeoPoint,
}

struct Timeline {
    verts: Vec<GeoPoint>,
    stays: Vec<SynthStay>,
    here: usize,
    since: i64,
    speed: f64,
}

impl Timeline {
    fn new(places: &[Place], start: i64, speed: f64) -> Self {
        let home = GeoPoint { timestamp: start, ..places[0].at };
        Self { verts: vec![home], stays: Vec::new(), here: 0, since: start, speed }
    }

    /// Leaves for `to` no earlier than `depart`; returns the arrival time.
    fn go(&mut self, places: &[Place], to: usize, depart: i64, rng: &mut ChaCha8Rng) -> i64 {
        let depart = depart.max(self.since + MIN_STAY);
        let (a, b) = (places[self.here].at, places[to].at);
        self.close_stay(places, depart);
        let dist = haversine(&a, &b);
        let mid = interpolate(&a, &b, 0.5);
        let way = destination(&mid, rng.random_range(0.0..360.0), dist * rng.random_range(0.0..0.25), 0);
        let t_way = depart + ((haversine(&a, &way) / self.speed).round() as i64).max(1);
        let arrive = t_way + ((haversine(&way, &b) / self.speed).round() as i64).max(1);
        self.verts.push(GeoPoint { timestamp: depart, ..a });
        self.verts.push(GeoPoint { timestamp: t_way, ..way });
        self.verts.push(GeoPoint { timestamp: arrive, ..b });
        self.here = to;
        self.since = arrive;
        arrive
    }

    fn close_stay(&mut self, places: &[Place], depart: i64) {
        let p = &places[self.here];
        self.stays.push(SynthStay { label: p.label.clone(), lat: p.at.lat, lon: p.at.lon, arrive: self.since, depart });
    }

    fn finish(mut self, places: &[Place], end: i64) -> (Vec<GeoPoint>, Vec<SynthStay>) {
        self.close_stay(places, end);
        self.verts.push(GeoPoint { timestamp: end, ..places[self.here].at });
        (self.verts, self.stays)
    }
}

fn normal(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    Normal::new(0.0, sd).expect("finite sd").sample(rng)
}

fn places_for(arch: Archetype, center: &GeoPoint, rng: &mut ChaCha8Rng) -> Vec<Place> {
    let home = destination(center, rng.random_range(0.0..360.0), rng.random_range(0.0..6000.0), 0);
    let mut out = vec![Place { label: "home".into(), at: home }];
    let (near, far) = match arch {
        Archetype::Routine => (500.0, 4000.0),
        Archetype::Variable => (500.0, 8000.0),
        Archetype::Atypical => (3000.0, 30000.0),
    };
    if arch == Archetype::Routine {
        let work = destination(&home, rng.random_range(0.0..360.0), rng.random_range(2000.0..12000.0), 0);
        out.push(Place { label: "work".into(), at: work });
    }
    for k in 0..5 {
        let at = destination(&home, rng.random_range(0.0..360.0), rng.random_range(near..far), 0);
        out.push(Place { label: format!("place{k}"), at });
    }
    out
}

fn speed_for(arch: Archetype, rng: &mut ChaCha8Rng) -> f64 {
    let choices: &[f64] = match arch {
        Archetype::Routine => &[4.5, 11.0],
        Archetype::Variable => &[1.4, 4.5, 11.0],
        Archetype::Atypical => &[11.0, 16.0],
    };
    choices[rng.random_range(0..choices.len())]
}

/// Errands departing between `from` and `until` (local seconds of the day),
/// then home.
fn errands(tl: &mut Timeline, places: &[Place], day: i64, n: usize, from: i64, until: i64, rng: &mut ChaCha8Rng) {
    let mut times: Vec<i64> = (0..n).map(|_| rng.random_range(from..until)).collect();
    times.sort_unstable();
    let first_errand = if places.len() > 6 { 2 } else { 1 };
    for t in times {
        if tl.since + MIN_STAY > day + until {
            break;
        }
        let mut to = rng.random_range(first_errand..places.len());
        if to == tl.here {
            to = first_errand + (to - first_errand + 1) % (places.len() - first_errand);
        }
        tl.go(places, to, day + t, rng);
    }
    if tl.here != 0 {
        let linger = rng.random_range(MIN_STAY..3 * MIN_STAY);
        tl.go(places, 0, tl.since + linger, rng);
    }
}

/// Outage nights: indices `k` in `1..days - 1`, pairwise at least two apart,
/// so every set between outages spans more than a day.
fn outage_nights(days: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if days < 3 {
        return Vec::new();
    }
    let candidates: Vec<usize> = (1..days - 1).collect();
    let max = candidates.len().div_ceil(2);
    let want = rng.random_range(0..=max);
    loop {
        let mut pick: Vec<usize> = candidates.choose_multiple(rng, want).copied().collect();
        pick.sort_unstable();
        if pick.windows(2).all(|w| w[1] - w[0] >= 2) {
            return pick;
        }
    }
}

fn generate_person(spec: &PersonaSpec, i: usize, start: i64) -> (Trajectory, PersonLedger) {
    let person_id = format!("p{:03}", i + 1);
    let arch = spec.archetype_of(i);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &["synth", &person_id]));
    let center = GeoPoint { timestamp: 0, lat: spec.center_lat, lon: spec.center_lon };
    let places = places_for(arch, &center, &mut rng);
    let mut tl = Timeline::new(&places, start, speed_for(arch, &mut rng));
    let leisure = [places.len() - 2, places.len() - 1];

    for d in 0..spec.days {
        let day = start + d as i64 * DAY_S;
        let weekday = d % 7 < 5;
        match arch {
            Archetype::Routine if weekday => {
                let leave = 8 * HOUR + normal(&mut rng, 300.0) as i64;
                tl.go(&places, 1, day + leave, &mut rng);
                let back = 17 * HOUR + normal(&mut rng, 300.0) as i64;
                tl.go(&places, 0, day + back, &mut rng);
            }
            Archetype::Routine => {
                let out = 11 * HOUR + normal(&mut rng, 1800.0) as i64;
                tl.go(&places, leisure[d % 2], day + out, &mut rng);
                let back = 13 * HOUR + normal(&mut rng, 1800.0) as i64;
                tl.go(&places, 0, day + back, &mut rng);
            }
            Archetype::Variable => {
                let n = rng.random_range(2..=4);
                errands(&mut tl, &places, day, n, 7 * HOUR, 18 * HOUR + 30 * MIN, &mut rng);
            }
            Archetype::Atypical => {
                if rng.random_bool(0.3) {
                    continue;
                }
                let n = rng.random_range(1..=3);
                errands(&mut tl, &places, day, n, 6 * HOUR, 18 * HOUR + 30 * MIN, &mut rng);
            }
        }
    }
    let end = start + spec.days as i64 * DAY_S;
    let (verts, stays) = tl.finish(&places, end);

    let nights = outage_nights(spec.days, &mut rng);
    let outages: Vec<(i64, i64)> =
        nights.iter().map(|&k| (start + k as i64 * DAY_S + OUTAGE.0, start + k as i64 * DAY_S + OUTAGE.1)).collect();
    let jitter = (spec.jitter_m > 0.0).then(|| Normal::new(0.0, spec.jitter_m).expect("finite jitter"));
    let mut points = Vec::new();
    let mut stay = 0;
    for t in (start..end).step_by(spec.fix_interval as usize) {
        if outages.iter().any(|&(a, b)| a <= t && t < b) {
            continue;
        }
        let mut p = position_at(&verts, t).expect("inside the timeline");
        while stays[stay].depart < t {
            stay += 1;
        }
        if let Some(j) = &jitter {
            if stays[stay].arrive <= t {
                p = destination(&p, rng.random_range(0.0..360.0), j.sample(&mut rng).abs(), t);
            }
        }
        points.push(p);
    }
    let ledger = PersonLedger {
        person_id: person_id.clone(),
        archetype: arch,
        route_m: track_distance(&verts),
        emitted_m: track_distance(&points),
        fixes: points.len(),
        stays,
        outages,
    };
    (Trajectory { person_id, points }, ledger)
}

/// Generates the persons described by `spec`, ordered by person id.
pub fn generate(spec: &PersonaSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let start = spec.start_utc()?;
    let (trajectories, ledger) = (0..spec.n_persons).into_par_iter().map(|i| generate_person(spec, i, start)).unzip();
    Ok(SynthOutput { trajectories, ledger })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::select_contiguous_sets;
    use crate::segmentation::detect_stay_points;
    use crate::series::{discretize, Grid, Metric, DEFAULT_MAX_GAP_S};

    fn one_routine_day() -> PersonaSpec {
        PersonaSpec { n_persons: 1, days: 1, routine: 1.0, variable: 0.0, atypical: 0.0, ..PersonaSpec::default() }
    }

    #[test]
    fn routine_day_is_home_work_home() {
        let out = generate(&one_routine_day()).unwrap();
        let l = &out.ledger[0];
        assert_eq!(l.stays.iter().map(|s| s.label.as_str()).collect::<Vec<_>>(), ["home", "work", "home"]);
        assert_eq!(l.archetype, Archetype::Routine);
        assert!(l.outages.is_empty());
        assert_eq!(out.trajectories[0].points.len(), 24 * 60);
        let seg = detect_stay_points(&out.trajectories[0], 200.0, 600);
        assert_eq!(seg.stays.len(), 3);
        assert_eq!(seg.tracks.len(), 2);
        for (found, truth) in seg.stays.iter().zip(&l.stays) {
            let c = GeoPoint { timestamp: 0, lat: found.lat, lon: found.lon };
            let t = GeoPoint { timestamp: 0, lat: truth.lat, lon: truth.lon };
            assert!(haversine(&c, &t) < 20.0);
        }
    }

    #[test]
    fn same_seed_same_output() {
        let spec = PersonaSpec { n_persons: 6, days: 3, ..PersonaSpec::default() };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = PersonaSpec { seed: 1, ..spec.clone() };
        assert_ne!(generate(&spec).unwrap().trajectories, generate(&other).unwrap().trajectories);
    }

    #[test]
    fn discretized_distance_equals_the_ledger() {
        let spec = PersonaSpec { n_persons: 4, days: 2, ..PersonaSpec::default() };
        let out = generate(&spec).unwrap();
        for (traj, l) in out.trajectories.iter().zip(&out.ledger) {
            let seg = detect_stay_points(traj, 200.0, 600);
            let grid = Grid::outer(traj.first_time().unwrap(), traj.last_time().unwrap(), 900);
            let s = discretize(&seg, &grid, Metric::TravelDistanceKm, 1_000_000).unwrap();
            let total: f64 = s.values.iter().map(|v| v.unwrap()).sum();
            assert!((total * 1000.0 - l.emitted_m).abs() <= 1e-9 * l.emitted_m.max(1.0), "{} {}", total, l.emitted_m);
            assert!(l.emitted_m >= l.route_m * 0.999);
        }
    }

    #[test]
    fn week_splits_into_one_to_four_sets() {
        let spec = PersonaSpec { n_persons: 40, ..PersonaSpec::default() };
        let out = generate(&spec).unwrap();
        let mut four = 0;
        for (traj, l) in out.trajectories.iter().zip(&out.ledger) {
            let sets = select_contiguous_sets(std::slice::from_ref(traj), DAY_S, DEFAULT_MAX_GAP_S);
            assert_eq!(sets.len(), l.outages.len() + 1);
            four += usize::from(sets.len() == 4);
        }
        assert!(four > 0 && four < 40);
    }

    #[test]
    fn nobody_moves_at_night() {
        let spec = PersonaSpec { n_persons: 20, ..PersonaSpec::default() };
        let out = generate(&spec).unwrap();
        for l in &out.ledger {
            for w in l.stays.windows(2) {
                let (leave, arrive) = (w[0].depart, w[1].arrive);
                for t in [leave, arrive] {
                    let tod = (t + spec.utc_offset).rem_euclid(DAY_S);
                    assert!((5 * HOUR..22 * HOUR).contains(&tod), "{} at {}", l.person_id, tod);
                }
            }
        }
    }

    #[test]
    fn archetype_mix_follows_shares() {
        let spec = PersonaSpec { n_persons: 10, routine: 0.5, variable: 0.3, atypical: 0.2, ..PersonaSpec::default() };
        let counts = Archetype::ALL.map(|a| (0..10).filter(|&i| spec.archetype_of(i) == a).count());
        assert_eq!(counts, [5, 3, 2]);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        for bad in [
            PersonaSpec { n_persons: 0, ..PersonaSpec::default() },
            PersonaSpec { routine: -1.0, ..PersonaSpec::default() },
            PersonaSpec { routine: 0.0, variable: 0.0, atypical: 0.0, ..PersonaSpec::default() },
            PersonaSpec { fix_interval: 600, ..PersonaSpec::default() },
            PersonaSpec { start_date: "05/11/2018".into(), ..PersonaSpec::default() },
        ] {
            assert!(matches!(generate(&bad), Err(Error::Config(_))), "{bad:?}");
        }
    }
}
