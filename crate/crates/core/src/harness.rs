//! Missingness induction, per-gap scoring and the simulation experiments.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dtw::{apply_phi, Donor, Phi, QueryContext, ReferenceCollection};
use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::impute::{
    impute_from_scores, impute_with, score_gap, DtwbmiParams, GapInput, ImputationResult, Method, MethodSettings,
    Specificity, DEFAULT_MOVEMENT_THRESHOLD_KM,
};
use crate::report::{GapScore, MetricRow, Row, Table, COMPARISON_COLUMNS, GRID_COLUMNS, OWN_SETS_COLUMNS};
use crate::series::{GapSpec, MetricSeries, DAY_S};

const HOUR: i64 = 3600;

/// Per-gap biases this close to zero are reported as zero.
pub const BIAS_RESOLUTION_KM: f64 = 1e-9;

/// Gap lengths of the method comparison.
pub const COMPARISON_GAP_HOURS: [i64; 5] = [1, 3, 6, 10, 12];
/// Gap lengths of the own-sets experiment.
pub const OWN_SETS_GAP_HOURS: [i64; 5] = [1, 3, 6, 8, 12];

/// Stable 64-bit seed for a named substream of `master`.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |b: u8| {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    };
    master.to_le_bytes().into_iter().for_each(&mut eat);
    for p in parts {
        p.bytes().for_each(&mut eat);
        eat(0xff);
    }
    // splitmix64 finalizer
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Local clock window, in seconds after midnight; may wrap midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NightWindow {
    pub start: i64,
    pub end: i64,
}

impl Default for NightWindow {
    fn default() -> Self {
        Self { start: 22 * HOUR, end: 5 * HOUR }
    }
}

impl NightWindow {
    /// Whether `[t, t + len)` lies inside the window on the local clock.
    pub fn contains(&self, t: i64, len: i64, utc_offset: i64) -> bool {
        let s = (t + utc_offset).rem_euclid(DAY_S);
        let e = s + len;
        if self.start <= self.end {
            s >= self.start && e <= self.end
        } else {
            (s >= self.start && e <= DAY_S) || e <= self.end
        }
    }

    /// Whether every element of `gap` falls inside the window.
    pub fn covers_gap(&self, series: &MetricSeries, gap: &GapSpec, utc_offset: i64) -> bool {
        (gap.start..gap.end).all(|t| self.contains(series.time_of(t), series.interval, utc_offset))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stratum {
    /// Any feasible start.
    #[default]
    Any,
    /// Every masked element inside the night window.
    NightOnly,
    /// At least one masked element outside the night window.
    Daytime,
}

impl Stratum {
    pub fn as_str(self) -> &'static str {
        match self {
            Stratum::Any => "any",
            Stratum::NightOnly => "night-only",
            Stratum::Daytime => "daytime",
        }
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stratum {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Stratum::Any, Stratum::NightOnly, Stratum::Daytime]
            .into_iter()
            .find(|x| x.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown stratum '{s}' (expected any, night-only or daytime)")))
    }
}

/// One missingness condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    /// Seconds.
    pub gap_length: i64,
    pub n_affected: usize,
    pub stratum: Stratum,
    pub seed: u64,
}

impl Scenario {
    /// A scenario whose seed is derived from `master` and its identity.
    pub fn new(gap_length: i64, n_affected: usize, stratum: Stratum, master: u64) -> Self {
        let mut s = Self { gap_length, n_affected, stratum, seed: 0 };
        s.seed = derive_seed(master, &["scenario", &s.id()]);
        s
    }

    pub fn id(&self) -> String {
        format!("gap={}s;n={};stratum={}", self.gap_length, self.n_affected, self.stratum)
    }

    /// Table heading, e.g. `3 hrs`.
    pub fn gap_label(&self) -> String {
        gap_label(self.gap_length)
    }
}

pub fn gap_label(secs: i64) -> String {
    if secs % HOUR == 0 {
        format!("{} hrs", secs / HOUR)
    } else {
        format!("{} min", secs / 60)
    }
}

/// A complete contiguous set: its metric series and the movement path it was
/// derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetRecord {
    pub series: MetricSeries,
    pub path: Vec<GeoPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub sets: Vec<SetRecord>,
    /// Local time offset from UTC, seconds.
    pub utc_offset: i64,
}

impl Dataset {
    pub fn new(sets: Vec<SetRecord>, utc_offset: i64) -> Result<Self> {
        let Some(first) = sets.first() else {
            return Err(Error::Empty("dataset has no sets"));
        };
        let (metric, interval) = (first.series.metric, first.series.interval);
        let mut seen = std::collections::BTreeSet::new();
        for s in &sets {
            if s.series.metric != metric || s.series.interval != interval {
                return Err(Error::InvalidInput("sets differ in metric or interval".into()));
            }
            if !s.series.is_complete() {
                return Err(Error::InvalidInput(format!(
                    "set {}/{} has missing elements",
                    s.series.person_id, s.series.set_id
                )));
            }
            if !seen.insert((s.series.person_id.clone(), s.series.set_id)) {
                return Err(Error::InvalidInput(format!("duplicate set {}/{}", s.series.person_id, s.series.set_id)));
            }
        }
        Ok(Self { sets, utc_offset })
    }

    pub fn own_set_counts(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for s in &self.sets {
            *m.entry(s.series.person_id.clone()).or_insert(0) += 1;
        }
        m
    }

    pub fn donors(&self) -> Vec<Donor<f64>> {
        self.sets.iter().map(|s| Donor::from(&s.series)).collect()
    }
}

/// How a person's set count is bucketed in reports.
pub fn own_sets_bucket(count: usize) -> &'static str {
    match count {
        0 | 1 => "No extra data",
        2 | 3 => "2-3 sets",
        _ => "4+ sets",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessSettings {
    pub methods: MethodSettings,
    pub movement_threshold_km: f64,
    /// Donor restrictions; the UTC offset is taken from the dataset.
    pub phi: Phi,
    pub night: NightWindow,
}

impl Default for HarnessSettings {
    fn default() -> Self {
        Self {
            methods: MethodSettings::default(),
            movement_threshold_km: DEFAULT_MOVEMENT_THRESHOLD_KM,
            phi: Phi::default(),
            night: NightWindow::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InducedGap {
    /// Index into the dataset's sets.
    pub set: usize,
    pub gap: GapSpec,
    pub masked: MetricSeries,
    pub night_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Induced {
    pub scenario: Scenario,
    pub gaps: Vec<InducedGap>,
}

fn masked_len(gap_length: i64, interval: i64) -> usize {
    ((gap_length + interval - 1) / interval) as usize
}

/// Gap starts in `series` that leave an observed element on both sides and
/// satisfy the stratum.
fn feasible_starts(series: &MetricSeries, len: usize, stratum: Stratum, night: &NightWindow, utc_offset: i64) -> Vec<usize> {
    if series.len() < len + 2 {
        return Vec::new();
    }
    (1..=series.len() - len - 1)
        .filter(|&s| {
            let g = GapSpec::interior(s, s + len);
            match stratum {
                Stratum::Any => true,
                Stratum::NightOnly => night.covers_gap(series, &g, utc_offset),
                Stratum::Daytime => !night.covers_gap(series, &g, utc_offset),
            }
        })
        .collect()
}

/// Masks one contiguous gap in each of `n_affected` randomly chosen sets.
pub fn induce_missingness(data: &Dataset, scenario: &Scenario, night: &NightWindow) -> Result<Induced> {
    if scenario.gap_length <= 0 {
        return Err(Error::Config(format!("scenario {}: gap length must be positive", scenario.id())));
    }
    let interval = data.sets.first().map_or(1, |s| s.series.interval);
    let len = masked_len(scenario.gap_length, interval);
    let eligible: Vec<(usize, Vec<usize>)> = data
        .sets
        .iter()
        .enumerate()
        .map(|(k, s)| (k, feasible_starts(&s.series, len, scenario.stratum, night, data.utc_offset)))
        .filter(|(_, starts)| !starts.is_empty())
        .collect();
    if eligible.len() < scenario.n_affected {
        return Err(Error::InsufficientData(format!(
            "scenario {}: {} eligible sets for {} requested",
            scenario.id(),
            eligible.len(),
            scenario.n_affected
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut picks = index::sample(&mut rng, eligible.len(), scenario.n_affected).into_vec();
    picks.sort_unstable();
    let gaps = picks
        .into_iter()
        .map(|i| {
            let (k, starts) = &eligible[i];
            let s = starts[rng.random_range(0..starts.len())];
            let gap = GapSpec::interior(s, s + len);
            let series = &data.sets[*k].series;
            InducedGap {
                set: *k,
                gap,
                masked: series.masked(&gap),
                night_only: night.covers_gap(series, &gap, data.utc_offset),
            }
        })
        .collect();
    Ok(Induced { scenario: *scenario, gaps })
}

/// Compares an imputation against the truth over the gap.
pub fn score(truth: &MetricSeries, imputed: &ImputationResult, threshold: f64) -> Result<GapScore> {
    let gap = imputed.gap;
    if gap.end > truth.len() || imputed.completed.iter().any(|c| c.len() != truth.len()) {
        return Err(Error::InvalidInput("imputation and truth differ in shape".into()));
    }
    let truth_gap: Vec<f64> = truth.values[gap.start..gap.end]
        .iter()
        .map(|v| v.ok_or_else(|| Error::InvalidInput("truth is missing inside the gap".into())))
        .collect::<Result<_>>()?;
    let m = imputed.m();
    if m == 0 {
        return Err(Error::Empty("imputation has no completed series"));
    }
    let w = 1.0 / m as f64;
    let travel = |v: f64| v >= threshold;
    let true_total: f64 = truth_gap.iter().sum();
    let truth_travel = truth_gap.iter().filter(|&&v| travel(v)).count();
    let (mut over, mut under, mut agree) = (0.0, 0.0, 0.0);
    for k in 0..m {
        let imp = imputed.gap_values(k);
        let (mut o, mut u, mut a) = (0usize, 0usize, 0usize);
        for (&t, &i) in truth_gap.iter().zip(&imp) {
            match (travel(t), travel(i)) {
                (false, true) => o += 1,
                (true, false) => u += 1,
                _ => a += 1,
            }
        }
        over += o as f64 * w;
        under += u as f64 * w;
        agree += a as f64 * w;
    }
    let totals = imputed.gap_totals();
    let imputed_total = totals.iter().sum::<f64>() / m as f64;
    let mut signed_bias = imputed_total - true_total;
    if signed_bias.abs() <= BIAS_RESOLUTION_KM {
        signed_bias = 0.0;
    }
    Ok(GapScore {
        true_total,
        imputed_total,
        signed_bias,
        periods: truth_gap.len(),
        truth_travel,
        truth_still: truth_gap.len() - truth_travel,
        over,
        under,
        agree,
    })
}

/// One method on one gap, as written to the raw per-gap output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub scenario: String,
    pub gap_length_s: i64,
    pub stratum: Stratum,
    pub night_only: bool,
    pub own_sets: usize,
    pub person_id: String,
    pub set_id: u32,
    /// One-based first missing element.
    pub gap_start: usize,
    /// One-based first observed element after the gap.
    pub gap_end: usize,
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cell: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub own_level: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub repetition: Option<usize>,
    pub seed: u64,
    pub m: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub score: Option<GapScore>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub skip_reason: Option<String>,
}

impl GapRecord {
    fn outcome(&mut self, r: Result<(usize, GapScore)>) {
        match r {
            Ok((m, s)) => {
                self.m = m;
                self.score = Some(s);
            }
            Err(e) => self.skip_reason = Some(e.to_string()),
        }
    }
}

pub fn write_records_jsonl<W: Write>(mut w: W, records: &[GapRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Reads records written by [`write_records_jsonl`]. Blank lines, `#` lines
/// and `{"gapfill": ...}` header objects are skipped.
pub fn read_records_jsonl<R: std::io::BufRead>(r: R) -> Result<Vec<GapRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with("{\"gapfill\"") {
            continue;
        }
        out.push(serde_json::from_str(t).map_err(|e| Error::Parse { line: i as u64 + 1, message: e.to_string() })?);
    }
    Ok(out)
}

fn aggregate<'a>(records: impl Iterator<Item = &'a GapRecord>) -> MetricRow {
    let mut scores = Vec::new();
    let mut skipped = 0;
    for r in records {
        match &r.score {
            Some(s) => scores.push(*s),
            None => skipped += 1,
        }
    }
    MetricRow::aggregate(&scores, skipped)
}

fn method_rows(records: &[&GapRecord], methods: &[String], labels: &[String]) -> Vec<Row> {
    methods
        .iter()
        .zip(labels)
        .map(|(m, label)| Row {
            keys: vec![label.clone()],
            metrics: aggregate(records.iter().copied().filter(|r| &r.method == m)),
        })
        .collect()
}

fn gap_context(data: &Dataset, g: &InducedGap, gap_length_s: i64, scenario: &str, counts: &BTreeMap<String, usize>) -> GapRecord {
    let s = &data.sets[g.set].series;
    GapRecord {
        scenario: scenario.to_string(),
        gap_length_s,
        stratum: Stratum::Any,
        night_only: g.night_only,
        own_sets: counts.get(&s.person_id).copied().unwrap_or(0),
        person_id: s.person_id.clone(),
        set_id: s.set_id,
        gap_start: g.gap.report_start(),
        gap_end: g.gap.report_end(),
        method: String::new(),
        cell: None,
        own_level: None,
        repetition: None,
        seed: 0,
        m: 0,
        score: None,
        skip_reason: None,
    }
}

fn pool_for(all: &ReferenceCollection<f64>, series: &MetricSeries, gap: &GapSpec, phi: &Phi) -> ReferenceCollection<f64> {
    let ctx = QueryContext { person_id: series.person_id.clone(), set_id: series.set_id, gap_start: series.time_of(gap.start) };
    apply_phi(all, &ctx, phi)
}

/// Method comparison output: raw records and the report tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub records: Vec<GapRecord>,
    pub tables: Vec<Table>,
}

/// Runs every method on every induced gap of every scenario.
pub fn run_comparison(
    data: &Dataset,
    methods: &[Method],
    scenarios: &[Scenario],
    settings: &HarnessSettings,
) -> Result<Comparison> {
    if methods.is_empty() || scenarios.is_empty() {
        return Err(Error::InvalidInput("comparison needs at least one method and one scenario".into()));
    }
    let induced: Vec<Induced> =
        scenarios.iter().map(|s| induce_missingness(data, s, &settings.night)).collect::<Result<_>>()?;
    let counts = data.own_set_counts();
    let all = ReferenceCollection::new(data.donors());
    let phi = Phi { utc_offset: data.utc_offset, ..settings.phi };
    let jobs: Vec<(&Induced, &InducedGap)> = induced.iter().flat_map(|i| i.gaps.iter().map(move |g| (i, g))).collect();
    let records: Vec<GapRecord> = jobs
        .par_iter()
        .flat_map_iter(|(ind, g)| {
            let set = &data.sets[g.set];
            let id = ind.scenario.id();
            let mut base = gap_context(data, g, ind.scenario.gap_length, &id, &counts);
            base.stratum = ind.scenario.stratum;
            let refs = if methods.iter().any(|m| m.needs_references()) {
                pool_for(&all, &g.masked, &g.gap, &phi)
            } else {
                ReferenceCollection::new(Vec::new())
            };
            methods
                .iter()
                .map(|&method| {
                    let mut rec = base.clone();
                    rec.method = method.as_str().into();
                    rec.seed = derive_seed(
                        ind.scenario.seed,
                        &[&g.masked.person_id, &g.masked.set_id.to_string(), &g.gap.start.to_string(), method.as_str()],
                    );
                    let input = GapInput { series: &g.masked, gap: &g.gap, path: &set.path, refs: &refs, seed: rec.seed };
                    rec.outcome(
                        impute_with(method, &input, &settings.methods)
                            .and_then(|r| Ok((r.m(), score(&set.series, &r, settings.movement_threshold_km)?))),
                    );
                    rec
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let lengths: Vec<i64> = scenarios.iter().map(|s| s.gap_length).collect();
    let tables = comparison_tables(&records, methods, &lengths);
    Ok(Comparison { records, tables })
}

/// Overall, gap-length, time-of-day and own-sets tables over comparison records.
pub fn comparison_tables(records: &[GapRecord], methods: &[Method], gap_lengths: &[i64]) -> Vec<Table> {
    let keys: Vec<String> = methods.iter().map(|m| m.as_str().to_string()).collect();
    let labels: Vec<String> = methods.iter().map(|m| m.label().to_string()).collect();
    let all: Vec<&GapRecord> = records.iter().collect();

    let mut overall = Table::new("overall", "Method comparison, all gaps", &[""], &COMPARISON_COLUMNS);
    overall.push_group("All gaps", method_rows(&all, &keys, &labels));

    let mut by_gap = Table::new("gap_length", "Method comparison across gap lengths", &[""], &COMPARISON_COLUMNS);
    let mut lengths = gap_lengths.to_vec();
    lengths.sort_unstable();
    lengths.dedup();
    for len in lengths {
        let sel: Vec<&GapRecord> = all.iter().copied().filter(|r| r.gap_length_s == len).collect();
        by_gap.push_group(gap_label(len), method_rows(&sel, &keys, &labels));
    }

    let mut by_time = Table::new("time_of_day", "Method comparison across night only vs day", &[""], &COMPARISON_COLUMNS);
    for (label, night) in [("Daytime Missing", false), ("Night Only", true)] {
        let sel: Vec<&GapRecord> = all.iter().copied().filter(|r| r.night_only == night).collect();
        by_time.push_group(label, method_rows(&sel, &keys, &labels));
    }

    let mut by_own = Table::new("own_sets", "Method comparison across number of reference sets", &[""], &COMPARISON_COLUMNS);
    for bucket in ["No extra data", "2-3 sets", "4+ sets"] {
        let sel: Vec<&GapRecord> = all.iter().copied().filter(|r| own_sets_bucket(r.own_sets) == bucket).collect();
        by_own.push_group(bucket, method_rows(&sel, &keys, &labels));
    }
    vec![overall, by_gap, by_time, by_own]
}

/// Levels of the DTWBMI parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub specificities: Vec<Specificity>,
    pub match_buffers: Vec<i64>,
    pub time_windows: Vec<Option<i64>>,
    pub imputations: Vec<usize>,
}

impl ParamGrid {
    /// Low/Medium/High, 1/4/8 h, <1 h/<3 h/none, 1/3/5/10.
    pub fn appendix_a() -> Self {
        Self {
            specificities: vec![Specificity::Low, Specificity::Medium, Specificity::High],
            match_buffers: vec![HOUR, 4 * HOUR, 8 * HOUR],
            time_windows: vec![Some(HOUR), Some(3 * HOUR), None],
            imputations: vec![1, 3, 5, 10],
        }
    }

    pub fn cells(&self) -> Vec<GridCellParams> {
        let mut out = Vec::new();
        for &specificity in &self.specificities {
            for &match_buffer in &self.match_buffers {
                for &time_window in &self.time_windows {
                    for &n_imputations in &self.imputations {
                        out.push(GridCellParams { specificity, match_buffer, time_window, n_imputations });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCellParams {
    pub specificity: Specificity,
    pub match_buffer: i64,
    pub time_window: Option<i64>,
    pub n_imputations: usize,
}

impl GridCellParams {
    fn params(&self, settings: &MethodSettings, seed: u64) -> DtwbmiParams {
        DtwbmiParams {
            match_buffer: self.match_buffer,
            time_window: self.time_window,
            specificity: self.specificity,
            n_imputations: self.n_imputations,
            rng_seed: seed,
            kappas: settings.kappas,
            constraints: settings.constraints,
            mode: settings.mode,
        }
    }
}

pub fn specificity_label(s: Specificity) -> String {
    match s {
        Specificity::Low => "Low".into(),
        Specificity::Medium => "Medium".into(),
        Specificity::High => "High".into(),
        Specificity::Best => "Best".into(),
        Specificity::Kappa(k) => format!("kappa {k}"),
    }
}

pub fn buffer_label(secs: i64) -> String {
    match (secs % HOUR, secs / HOUR) {
        (0, 1) => "1 hour".into(),
        (0, h) => format!("{h} hours"),
        _ => format!("{} minutes", secs / 60),
    }
}

pub fn window_label(w: Option<i64>) -> String {
    match w {
        None => "No Window".into(),
        Some(s) => format!("< {}", buffer_label(s)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub params: GridCellParams,
    pub metrics: MetricRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub cells: Vec<GridCell>,
    /// Per-level means over the cells sharing that level.
    pub marginals: Table,
    pub records: Vec<GapRecord>,
}

impl GridReport {
    /// All cells as one table.
    pub fn cells_table(&self) -> Table {
        let mut t = Table::new(
            "grid_cells",
            "DTWBMI parameter grid, all cells",
            &["Specificity", "Match buffer", "Time window", "Imputations"],
            &GRID_COLUMNS,
        );
        let rows = self
            .cells
            .iter()
            .map(|c| Row {
                keys: vec![
                    specificity_label(c.params.specificity),
                    buffer_label(c.params.match_buffer),
                    window_label(c.params.time_window),
                    c.params.n_imputations.to_string(),
                ],
                metrics: c.metrics,
            })
            .collect();
        t.push_group("All cells", rows);
        t
    }
}

/// Every DTWBMI parameter combination on the same induced gaps. Candidate
/// scores are shared by all cells with the same buffer and window.
pub fn run_parameter_grid(
    data: &Dataset,
    scenarios: &[Scenario],
    grid: &ParamGrid,
    settings: &HarnessSettings,
) -> Result<GridReport> {
    let cells = grid.cells();
    if cells.is_empty() || scenarios.is_empty() {
        return Err(Error::InvalidInput("grid needs at least one cell and one scenario".into()));
    }
    for c in &cells {
        c.params(&settings.methods, 0).validate()?;
    }
    let induced: Vec<Induced> =
        scenarios.iter().map(|s| induce_missingness(data, s, &settings.night)).collect::<Result<_>>()?;
    let counts = data.own_set_counts();
    let all = ReferenceCollection::new(data.donors());
    let phi = Phi { utc_offset: data.utc_offset, ..settings.phi };
    let jobs: Vec<(&Induced, &InducedGap)> = induced.iter().flat_map(|i| i.gaps.iter().map(move |g| (i, g))).collect();
    let records: Vec<GapRecord> = jobs
        .par_iter()
        .flat_map_iter(|(ind, g)| {
            let set = &data.sets[g.set];
            let id = ind.scenario.id();
            let mut base = gap_context(data, g, ind.scenario.gap_length, &id, &counts);
            base.stratum = ind.scenario.stratum;
            base.method = "dtwbmi".into();
            let refs = pool_for(&all, &g.masked, &g.gap, &phi);
            // alignments depend only on buffer and window
            let mut cache: BTreeMap<(i64, Option<i64>), Result<Vec<crate::AlignmentResult>>> = BTreeMap::new();
            let mut out = Vec::with_capacity(cells.len());
            for (k, cell) in cells.iter().enumerate() {
                let scores = cache
                    .entry((cell.match_buffer, cell.time_window))
                    .or_insert_with(|| score_gap(&g.masked, &g.gap, &refs, &cell.params(&settings.methods, 0)));
                let mut rec = base.clone();
                rec.cell = Some(k);
                rec.seed = derive_seed(
                    ind.scenario.seed,
                    &[&g.masked.person_id, &g.masked.set_id.to_string(), &g.gap.start.to_string(), "grid", &k.to_string()],
                );
                let params = cell.params(&settings.methods, rec.seed);
                let result = match scores {
                    Ok(s) => impute_from_scores("dtwbmi", &g.masked, &g.gap, s, &params)
                        .and_then(|r| Ok((r.m(), score(&set.series, &r, settings.movement_threshold_km)?))),
                    Err(e) => Err(Error::NoFeasibleDonor(e.to_string())),
                };
                rec.outcome(result);
                out.push(rec);
            }
            out
        })
        .collect();

    let grid_cells: Vec<GridCell> = cells
        .iter()
        .enumerate()
        .map(|(k, p)| GridCell { params: *p, metrics: aggregate(records.iter().filter(|r| r.cell == Some(k))) })
        .collect();

    let mut marginals = Table::new("grid", "Comparison among possible DTWBMI parameter values", &[""], &GRID_COLUMNS);
    let level_rows = |pick: &dyn Fn(&GridCellParams) -> String, levels: Vec<String>| -> Vec<Row> {
        levels
            .into_iter()
            .map(|level| {
                let rows: Vec<MetricRow> =
                    grid_cells.iter().filter(|c| pick(&c.params) == level).map(|c| c.metrics).collect();
                Row { keys: vec![level], metrics: MetricRow::mean_of(&rows) }
            })
            .collect()
    };
    marginals.push_group(
        "Candidate Specificity",
        level_rows(&|p| specificity_label(p.specificity), grid.specificities.iter().map(|&s| specificity_label(s)).collect()),
    );
    marginals.push_group(
        "Match Buffer",
        level_rows(&|p| buffer_label(p.match_buffer), grid.match_buffers.iter().map(|&b| buffer_label(b)).collect()),
    );
    marginals.push_group(
        "Time Window",
        level_rows(&|p| window_label(p.time_window), grid.time_windows.iter().map(|&w| window_label(w)).collect()),
    );
    marginals.push_group(
        "Imputations",
        level_rows(&|p| p.n_imputations.to_string(), grid.imputations.iter().map(|m| m.to_string()).collect()),
    );
    Ok(GridReport { cells: grid_cells, marginals, records })
}

/// Design of the own-reference-sets experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OwnSetsDesign {
    pub levels: Vec<usize>,
    pub base_pool: usize,
    /// Persons with at least this many sets are the subjects.
    pub min_own_sets: usize,
    /// Seconds.
    pub gap_lengths: Vec<i64>,
    pub repetitions: usize,
    /// Subjects per repetition; all qualifying persons when absent.
    pub n_persons: Option<usize>,
    pub methods: Vec<Method>,
    pub seed: u64,
}

impl Default for OwnSetsDesign {
    fn default() -> Self {
        Self {
            levels: vec![0, 1, 2, 3],
            base_pool: 48,
            min_own_sets: 4,
            gap_lengths: OWN_SETS_GAP_HOURS.iter().map(|h| h * HOUR).collect(),
            repetitions: 10,
            n_persons: None,
            methods: vec![Method::DtwbmiHi, Method::DtwbmiLo, Method::Dtwbi],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OwnSetsReport {
    pub records: Vec<GapRecord>,
    /// Donor pool size, identical at every level.
    pub pool_size: usize,
    pub tables: Vec<Table>,
}

/// Donor pools for one subject: own sets first, topped up with strangers.
fn own_set_pools(own: &[usize], base: &[usize], extras: &[usize], levels: &[usize]) -> Vec<Vec<usize>> {
    let max = extras.len();
    levels
        .iter()
        .map(|&l| base.iter().chain(&own[..l]).chain(&extras[..max - l]).copied().collect())
        .collect()
}

/// Imputes gaps of persons with many sets from pools mixing a fixed number
/// of stranger sets with 0..=3 of their own other sets.
pub fn run_own_sets_experiment(data: &Dataset, design: &OwnSetsDesign, settings: &HarnessSettings) -> Result<OwnSetsReport> {
    let max_level = design.levels.iter().copied().max().ok_or(Error::Config("no own-set levels".into()))?;
    if design.methods.is_empty() || design.gap_lengths.is_empty() || design.repetitions == 0 {
        return Err(Error::Config("own-sets design needs methods, gap lengths and repetitions".into()));
    }
    if max_level + 1 > design.min_own_sets {
        return Err(Error::Config(format!(
            "level {max_level} needs subjects with at least {} sets",
            max_level + 1
        )));
    }
    let counts = data.own_set_counts();
    let mut subjects: Vec<&String> = counts.iter().filter(|(_, &c)| c >= design.min_own_sets).map(|(p, _)| p).collect();
    let strangers: Vec<usize> = (0..data.sets.len())
        .filter(|&k| counts[&data.sets[k].series.person_id] < design.min_own_sets)
        .collect();
    let wanted = design.n_persons.unwrap_or(subjects.len());
    if subjects.is_empty() || subjects.len() < wanted {
        return Err(Error::InsufficientData(format!(
            "{} persons with at least {} sets, {} needed",
            subjects.len(),
            design.min_own_sets,
            wanted.max(1)
        )));
    }
    let pool_size = design.base_pool + max_level;
    if strangers.len() < pool_size {
        return Err(Error::InsufficientData(format!(
            "{} stranger sets available, {} needed for the base pool",
            strangers.len(),
            pool_size
        )));
    }
    if wanted < subjects.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(design.seed, &["own-sets", "subjects"]));
        subjects.shuffle(&mut rng);
        subjects.truncate(wanted);
        subjects.sort();
    }
    let interval = data.sets[0].series.interval;
    let donors = data.donors();
    let phi = Phi { utc_offset: data.utc_offset, ..settings.phi };

    let jobs: Vec<(usize, &String)> =
        (0..design.repetitions).flat_map(|r| subjects.iter().map(move |&p| (r, p))).collect();
    let records: Vec<GapRecord> = jobs
        .par_iter()
        .flat_map_iter(|&(rep, person)| {
            let rep_s = rep.to_string();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(design.seed, &["own-sets", &rep_s, person]));
            let mut own: Vec<usize> = (0..data.sets.len()).filter(|&k| &data.sets[k].series.person_id == person).collect();
            let target = own.remove(rng.random_range(0..own.len()));
            own.shuffle(&mut rng);
            let picked = index::sample(&mut rng, strangers.len(), pool_size).into_vec();
            let picked: Vec<usize> = picked.into_iter().map(|i| strangers[i]).collect();
            let (base, extras) = picked.split_at(design.base_pool);
            let pools = own_set_pools(&own, base, extras, &design.levels);
            let set = &data.sets[target];
            let mut out = Vec::new();
            for &len in &design.gap_lengths {
                let t = masked_len(len, interval);
                let starts = feasible_starts(&set.series, t, Stratum::Any, &settings.night, data.utc_offset);
                let chosen = (!starts.is_empty()).then(|| starts[rng.random_range(0..starts.len())]);
                for (&level, pool) in design.levels.iter().zip(&pools) {
                    for &method in &design.methods {
                        let mut rec = GapRecord {
                            scenario: format!("own-sets;gap={len}s"),
                            gap_length_s: len,
                            stratum: Stratum::Any,
                            night_only: false,
                            own_sets: counts[person],
                            person_id: person.clone(),
                            set_id: set.series.set_id,
                            gap_start: 0,
                            gap_end: 0,
                            method: method.as_str().into(),
                            cell: None,
                            own_level: Some(level),
                            repetition: Some(rep),
                            seed: 0,
                            m: 0,
                            score: None,
                            skip_reason: None,
                        };
                        let Some(s) = chosen else {
                            rec.skip_reason = Some(format!("set too short for a {len} s gap"));
                            out.push(rec);
                            continue;
                        };
                        let gap = GapSpec::interior(s, s + t);
                        let masked = set.series.masked(&gap);
                        rec.gap_start = gap.report_start();
                        rec.gap_end = gap.report_end();
                        rec.night_only = settings.night.covers_gap(&set.series, &gap, data.utc_offset);
                        rec.seed = derive_seed(
                            design.seed,
                            &["own-sets", &rep_s, person, &len.to_string(), &level.to_string(), method.as_str()],
                        );
                        let refs = ReferenceCollection { donors: pool.iter().map(|&k| donors[k].clone()).collect(), restrictions: phi };
                        let input = GapInput { series: &masked, gap: &gap, path: &set.path, refs: &refs, seed: rec.seed };
                        rec.outcome(
                            impute_with(method, &input, &settings.methods)
                                .and_then(|r| Ok((r.m(), score(&set.series, &r, settings.movement_threshold_km)?))),
                        );
                        out.push(rec);
                    }
                }
            }
            out
        })
        .collect();

    let labels: Vec<String> = design.methods.iter().map(|m| m.label().to_string()).collect();
    let keys: Vec<String> = design.methods.iter().map(|m| m.as_str().to_string()).collect();
    let mut by_level = Table::new("own_set_levels", "Method comparison across number of own reference sets", &[""], &OWN_SETS_COLUMNS);
    for &level in &design.levels {
        let sel: Vec<&GapRecord> = records.iter().filter(|r| r.own_level == Some(level)).collect();
        by_level.push_group(level.to_string(), method_rows(&sel, &keys, &labels));
    }
    let mut by_gap = Table::new(
        "own_set_gaps",
        "Method comparison across gap length and own reference sets",
        &["", "Own sets"],
        &OWN_SETS_COLUMNS,
    );
    for &len in &design.gap_lengths {
        let mut rows = Vec::new();
        for (key, label) in keys.iter().zip(&labels) {
            for &level in &design.levels {
                let sel = records.iter().filter(|r| r.gap_length_s == len && &r.method == key && r.own_level == Some(level));
                rows.push(Row { keys: vec![label.clone(), level.to_string()], metrics: aggregate(sel) });
            }
        }
        let h = if len % HOUR == 0 { format!("{}h", len / HOUR) } else { gap_label(len) };
        by_gap.push_group(h, rows);
    }
    Ok(OwnSetsReport { records, pool_size, tables: vec![by_level, by_gap] })
}
