//! End-to-end commands over a [`RunConfig`]. Each `cmd_*` reads its inputs,
//! writes its outputs below `config.out` and returns a short summary.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::dtw::{apply_phi, QueryContext, ReferenceCollection};
use crate::error::{Error, Result};
use crate::geo::{
    coverage_stats, drop_implausible_speeds, format_timestamp, parse_trajectories, select_contiguous_sets,
    write_trajectories_csv, CoverageStats, TimeWindow, Trajectory,
};
use crate::harness::{
    comparison_tables, derive_seed, read_records_jsonl, run_comparison, run_own_sets_experiment, run_parameter_grid,
    write_records_jsonl, Comparison, Dataset, GapRecord, GridReport, OwnSetsReport, ParamGrid, SetRecord,
};
use crate::impute::{impute_with, write_provenance, GapInput, ImputationResult, Method};
use crate::report::{render_tables_text, write_tables_csv, Table};
use crate::segmentation::{segment, SegmentedDay};
use crate::series::{discretize, find_gaps, write_series_csv, Grid, MetricSeries, DAY_S};
use crate::synth::{generate, write_ledger_jsonl, SynthOutput};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Identifies the command and seed that produced a file.
#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub gapfill: &'static str,
    pub seed: u64,
    pub version: &'static str,
}

impl Header {
    pub fn new(command: &'static str, seed: u64) -> Self {
        Self { gapfill: command, seed, version: VERSION }
    }

    /// `#` comment line for text and csv files.
    pub fn comment(&self) -> String {
        format!("# gapfill {} seed={} version={}", self.gapfill, self.seed, self.version)
    }

    pub fn json(&self) -> String {
        serde_json::to_string(self).expect("header serializes")
    }
}

fn create(out: &Path, rel: &str) -> Result<BufWriter<File>> {
    let path = out.join(rel);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir.display()))?;
    }
    let f = File::create(&path).map_err(|e| Error::from(e).in_file(path.display()))?;
    Ok(BufWriter::new(f))
}

fn finish(mut w: BufWriter<File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

/// What a command wrote and a few counts worth printing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
}

impl Summary {
    fn wrote(&mut self, out: &Path, rel: &str) {
        self.files.push(out.join(rel));
    }
}

/// Reads and merges all configured inputs, one trajectory per person.
pub fn read_inputs(cfg: &RunConfig) -> Result<Vec<Trajectory>> {
    if cfg.input.paths.is_empty() {
        return Err(Error::Config("no input paths given".into()));
    }
    let mut by_person: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for path in &cfg.input.paths {
        let f = File::open(path).map_err(|e| Error::from(e).in_file(path.display()))?;
        let trajs = parse_trajectories(BufReader::new(f), cfg.input.format).map_err(|e| e.in_file(path.display()))?;
        for t in trajs {
            by_person.entry(t.person_id).or_default().extend(t.points);
        }
    }
    by_person
        .into_iter()
        .map(|(person_id, mut points)| {
            points.sort_by_key(|p| p.timestamp);
            if let Some(w) = points.windows(2).find(|w| w[0].timestamp == w[1].timestamp) {
                return Err(Error::InvalidInput(format!(
                    "duplicate timestamp {} for person {person_id} across inputs",
                    format_timestamp(w[0].timestamp)
                )));
            }
            Ok(Trajectory { person_id, points })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersonCoverage {
    pub person_id: String,
    pub window: TimeWindow,
    pub fixes: usize,
    pub dropped: usize,
    pub stats: CoverageStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContiguousSet {
    pub set_id: u32,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    /// Inputs with implausible fixes removed.
    pub trajectories: Vec<Trajectory>,
    pub coverage: Vec<PersonCoverage>,
    pub sets: Vec<ContiguousSet>,
}

/// Local-day window covering a trajectory.
fn day_window(t: &Trajectory, utc_offset: i64) -> Result<TimeWindow> {
    let (a, b) = (t.first_time().unwrap_or(0), t.last_time().unwrap_or(0));
    let start = (a + utc_offset).div_euclid(DAY_S) * DAY_S - utc_offset;
    let end = (b + utc_offset).div_euclid(DAY_S) * DAY_S - utc_offset + DAY_S;
    TimeWindow::new(start, end)
}

/// Cleans trajectories, measures coverage and cuts contiguous sets
/// (numbered per person from 1).
pub fn ingest(cfg: &RunConfig, raw: &[Trajectory]) -> Result<Ingested> {
    let d = &cfg.dataset;
    let off = d.utc_offset()?;
    let trajectories: Vec<Trajectory> = raw.iter().map(|t| drop_implausible_speeds(t, d.max_speed_mps)).collect();
    let coverage = raw
        .iter()
        .zip(&trajectories)
        .map(|(r, t)| {
            let window = day_window(r, off)?;
            Ok(PersonCoverage {
                person_id: t.person_id.clone(),
                window,
                fixes: t.points.len(),
                dropped: r.points.len() - t.points.len(),
                stats: coverage_stats(t, d.max_gap_s, window)?,
            })
        })
        .collect::<Result<_>>()?;
    let mut next: BTreeMap<String, u32> = BTreeMap::new();
    let sets = select_contiguous_sets(&trajectories, d.min_set_span_s, d.max_gap_s)
        .into_iter()
        .map(|trajectory| {
            let id = next.entry(trajectory.person_id.clone()).or_insert(0);
            *id += 1;
            ContiguousSet { set_id: *id, trajectory }
        })
        .collect();
    Ok(Ingested { trajectories, coverage, sets })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedSet {
    pub set_id: u32,
    pub day: SegmentedDay,
    pub series: MetricSeries,
}

/// Segments each set and discretizes it on the whole intervals it spans.
pub fn segment_sets(cfg: &RunConfig, sets: &[ContiguousSet]) -> Result<Vec<SegmentedSet>> {
    let d = &cfg.dataset;
    sets.par_iter()
        .map(|s| {
            let day = segment(&s.trajectory, &cfg.segmentation);
            let (a, b) = (s.trajectory.first_time().unwrap_or(0), s.trajectory.last_time().unwrap_or(0));
            let mut series = discretize(&day, &Grid::inner(a, b, d.interval_s), d.metric, d.max_gap_s)?;
            series.set_id = s.set_id;
            Ok(SegmentedSet { set_id: s.set_id, day, series })
        })
        .collect()
}

/// Complete sets as a simulation dataset.
pub fn build_dataset(cfg: &RunConfig, segmented: &[SegmentedSet]) -> Result<Dataset> {
    let sets = segmented
        .iter()
        .filter(|s| !s.series.is_empty())
        .map(|s| SetRecord { series: s.series.clone(), path: s.day.path.clone() })
        .collect();
    Dataset::new(sets, cfg.dataset.utc_offset()?)
}

/// Inputs through to a dataset in one call.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let raw = read_inputs(cfg)?;
    let ing = ingest(cfg, &raw)?;
    build_dataset(cfg, &segment_sets(cfg, &ing.sets)?)
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<Summary> {
    cfg.validate()?;
    let raw = read_inputs(cfg)?;
    let ing = ingest(cfg, &raw)?;
    let h = Header::new("ingest", cfg.seed);
    let out = &cfg.out;
    let mut s = Summary::default();

    let mut w = create(out, "store/fixes.csv")?;
    writeln!(w, "{}", h.comment())?;
    write_trajectories_csv(&mut w, &ing.trajectories)?;
    finish(w)?;
    s.wrote(out, "store/fixes.csv");

    let mut w = create(out, "coverage.csv")?;
    writeln!(w, "{}", h.comment())?;
    let mut c = csv::Writer::from_writer(&mut w);
    c.write_record([
        "person_id",
        "window_start",
        "window_end",
        "fixes",
        "dropped_fixes",
        "max_gap_s",
        "covered_s",
        "coverage_fraction",
        "gap_count",
        "mean_gap_s",
        "gap_time_s",
        "boundary_slack_s",
    ])?;
    for p in &ing.coverage {
        let st = &p.stats;
        c.write_record([
            p.person_id.clone(),
            format_timestamp(p.window.start),
            format_timestamp(p.window.end),
            p.fixes.to_string(),
            p.dropped.to_string(),
            cfg.dataset.max_gap_s.to_string(),
            st.covered_time.to_string(),
            format!("{:.6}", st.coverage_fraction),
            st.gap_count.to_string(),
            format!("{:.1}", st.mean_gap_length),
            st.gap_time.to_string(),
            st.boundary_slack.to_string(),
        ])?;
    }
    c.flush()?;
    drop(c);
    finish(w)?;
    s.wrote(out, "coverage.csv");

    let mut w = create(out, "sets.csv")?;
    writeln!(w, "{}", h.comment())?;
    let mut c = csv::Writer::from_writer(&mut w);
    c.write_record(["person_id", "set_id", "start", "end", "fixes"])?;
    for set in &ing.sets {
        let t = &set.trajectory;
        c.write_record([
            t.person_id.clone(),
            set.set_id.to_string(),
            format_timestamp(t.first_time().unwrap_or(0)),
            format_timestamp(t.last_time().unwrap_or(0)),
            t.points.len().to_string(),
        ])?;
    }
    c.flush()?;
    drop(c);
    finish(w)?;
    s.wrote(out, "sets.csv");

    let dropped: usize = ing.coverage.iter().map(|c| c.dropped).sum();
    s.lines.push(format!(
        "{} persons, {} fixes ({} implausible dropped), {} sets of at least {} s with max gap {} s",
        ing.trajectories.len(),
        ing.trajectories.iter().map(|t| t.points.len()).sum::<usize>(),
        dropped,
        ing.sets.len(),
        cfg.dataset.min_set_span_s,
        cfg.dataset.max_gap_s
    ));
    Ok(s)
}

pub fn cmd_segment(cfg: &RunConfig) -> Result<Summary> {
    cfg.validate()?;
    let raw = read_inputs(cfg)?;
    let ing = ingest(cfg, &raw)?;
    let seg = segment_sets(cfg, &ing.sets)?;
    let h = Header::new("segment", cfg.seed);
    let out = &cfg.out;
    let mut s = Summary::default();

    let mut w = create(out, "segments.jsonl")?;
    writeln!(w, "{}", h.json())?;
    for set in &seg {
        set.day.write_jsonl(&mut w)?;
    }
    finish(w)?;
    s.wrote(out, "segments.jsonl");

    let mut w = create(out, "series.csv")?;
    writeln!(w, "{}", h.comment())?;
    let series: Vec<MetricSeries> = seg.iter().map(|x| x.series.clone()).collect();
    write_series_csv(&mut w, &series)?;
    finish(w)?;
    s.wrote(out, "series.csv");

    s.lines.push(format!(
        "{} sets, {} stays, {} tracks",
        seg.len(),
        seg.iter().map(|x| x.day.stays.len()).sum::<usize>(),
        seg.iter().map(|x| x.day.tracks.len()).sum::<usize>()
    ));
    Ok(s)
}

/// A gap that could not be imputed by a method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Infeasible {
    pub method: String,
    pub person_id: String,
    pub gap_start: usize,
    pub gap_end: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Imputed {
    pub series: Vec<MetricSeries>,
    pub results: Vec<ImputationResult>,
    pub infeasible: Vec<Infeasible>,
}

/// Imputes every gap of every person's full series (set 0) with each
/// configured method. Donors are the complete sets.
pub fn impute_all(cfg: &RunConfig, ing: &Ingested, dataset: &Dataset) -> Result<Imputed> {
    let d = &cfg.dataset;
    let phi = cfg.harness_settings()?.phi;
    let all = ReferenceCollection::new(dataset.donors());
    let paths: BTreeMap<&str, &Trajectory> = ing.trajectories.iter().map(|t| (t.person_id.as_str(), t)).collect();
    let per_person: Vec<(MetricSeries, Vec<std::result::Result<ImputationResult, Infeasible>>)> = paths
        .par_iter()
        .map(|(person, traj)| {
            let day = segment(traj, &cfg.segmentation);
            let (a, b) = (traj.first_time().unwrap_or(0), traj.last_time().unwrap_or(0));
            let series = discretize(&day, &Grid::inner(a, b, d.interval_s), d.metric, d.max_gap_s)?;
            let mut out = Vec::new();
            for gap in find_gaps(&series) {
                let ctx = QueryContext { person_id: person.to_string(), set_id: 0, gap_start: series.time_of(gap.start) };
                let refs = apply_phi(&all, &ctx, &phi);
                for &method in &cfg.impute.methods {
                    let seed =
                        derive_seed(cfg.seed, &["impute", person, "0", &gap.start.to_string(), method.as_str()]);
                    let input = GapInput { series: &series, gap: &gap, path: &day.path, refs: &refs, seed };
                    out.push(impute_with(method, &input, &cfg.impute.settings).map_err(|e| Infeasible {
                        method: method.as_str().into(),
                        person_id: person.to_string(),
                        gap_start: gap.report_start(),
                        gap_end: gap.report_end(),
                        reason: e.to_string(),
                    }));
                }
            }
            Ok((series, out))
        })
        .collect::<Result<_>>()?;
    let mut imputed = Imputed { series: Vec::new(), results: Vec::new(), infeasible: Vec::new() };
    for (series, rs) in per_person {
        imputed.series.push(series);
        for r in rs {
            match r {
                Ok(x) => imputed.results.push(x),
                Err(x) => imputed.infeasible.push(x),
            }
        }
    }
    Ok(imputed)
}

pub fn cmd_impute(cfg: &RunConfig) -> Result<Summary> {
    cfg.validate()?;
    let raw = read_inputs(cfg)?;
    let ing = ingest(cfg, &raw)?;
    let dataset = build_dataset(cfg, &segment_sets(cfg, &ing.sets)?);
    // a person without any complete set still gets LI and MI
    let dataset = match dataset {
        Ok(d) => d,
        Err(Error::Empty(_)) => Dataset { sets: Vec::new(), utc_offset: cfg.dataset.utc_offset()? },
        Err(e) => return Err(e),
    };
    let imp = impute_all(cfg, &ing, &dataset)?;
    let h = Header::new("impute", cfg.seed);
    let out = &cfg.out;
    let mut s = Summary::default();

    let mut w = create(out, "completed.csv")?;
    writeln!(w, "{}", h.comment())?;
    write_series_csv(&mut w, &imp.series)?;
    finish(w)?;
    s.wrote(out, "completed.csv");

    let mut w = create(out, "imputations.csv")?;
    writeln!(w, "{}", h.comment())?;
    let mut c = csv::Writer::from_writer(&mut w);
    c.write_record(["method", "person_id", "set_id", "gap_start", "gap_end", "imputation", "index", "timestamp", "value"])?;
    for r in &imp.results {
        let series = &r.completed[0];
        for k in 0..r.m() {
            for (i, v) in (r.gap.start..r.gap.end).zip(r.gap_values(k)) {
                c.write_record([
                    r.method.clone(),
                    series.person_id.clone(),
                    series.set_id.to_string(),
                    r.gap.report_start().to_string(),
                    r.gap.report_end().to_string(),
                    (k + 1).to_string(),
                    (i + 1).to_string(),
                    format_timestamp(series.time_of(i)),
                    v.to_string(),
                ])?;
            }
        }
    }
    c.flush()?;
    drop(c);
    finish(w)?;
    s.wrote(out, "imputations.csv");

    let mut w = create(out, "provenance.jsonl")?;
    writeln!(w, "{}", h.json())?;
    write_provenance(&mut w, &imp.results)?;
    finish(w)?;
    s.wrote(out, "provenance.jsonl");

    let mut w = create(out, "infeasible.csv")?;
    writeln!(w, "{}", h.comment())?;
    let mut c = csv::Writer::from_writer(&mut w);
    for x in &imp.infeasible {
        c.serialize(x)?;
    }
    if imp.infeasible.is_empty() {
        c.write_record(["method", "person_id", "gap_start", "gap_end", "reason"])?;
    }
    c.flush()?;
    drop(c);
    finish(w)?;
    s.wrote(out, "infeasible.csv");

    s.lines.push(format!(
        "{} gaps imputed, {} infeasible (see infeasible.csv)",
        imp.results.len(),
        imp.infeasible.len()
    ));
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub comparison: Option<Comparison>,
    pub grid: Option<GridReport>,
    pub own_sets: Option<OwnSetsReport>,
}

impl Simulation {
    pub fn tables(&self) -> Vec<Table> {
        let mut t = Vec::new();
        if let Some(c) = &self.comparison {
            t.extend(c.tables.iter().cloned());
        }
        if let Some(g) = &self.grid {
            t.push(g.marginals.clone());
            t.push(g.cells_table());
        }
        if let Some(o) = &self.own_sets {
            t.extend(o.tables.iter().cloned());
        }
        t
    }

    pub fn records(&self) -> impl Iterator<Item = &GapRecord> {
        let c = self.comparison.iter().flat_map(|c| &c.records);
        let g = self.grid.iter().flat_map(|g| &g.records);
        let o = self.own_sets.iter().flat_map(|o| &o.records);
        c.chain(g).chain(o)
    }
}

/// Runs the experiments enabled in the config on `dataset`.
pub fn simulate(cfg: &RunConfig, dataset: &Dataset) -> Result<Simulation> {
    let settings = cfg.harness_settings()?;
    let sim = &cfg.simulate;
    let scenarios = cfg.scenarios();
    let comparison = if sim.comparison {
        Some(run_comparison(dataset, &cfg.impute.methods, &scenarios, &settings)?)
    } else {
        None
    };
    let grid = if sim.grid {
        Some(run_parameter_grid(dataset, &scenarios, &ParamGrid::appendix_a(), &settings)?)
    } else {
        None
    };
    let own_sets = if sim.own_sets {
        Some(run_own_sets_experiment(dataset, &cfg.own_sets_design(), &settings)?)
    } else {
        None
    };
    Ok(Simulation { comparison, grid, own_sets })
}

fn write_tables(out: &Path, h: &Header, tables: &[Table], s: &mut Summary, stem: &str) -> Result<()> {
    let txt = format!("{stem}.txt");
    let mut w = create(out, &txt)?;
    writeln!(w, "{}", h.comment())?;
    w.write_all(render_tables_text(tables).as_bytes())?;
    finish(w)?;
    s.wrote(out, &txt);

    let csv_name = format!("{stem}.csv");
    let mut w = create(out, &csv_name)?;
    writeln!(w, "{}", h.comment())?;
    write_tables_csv(&mut w, tables)?;
    finish(w)?;
    s.wrote(out, &csv_name);
    Ok(())
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Summary> {
    cfg.validate()?;
    let dataset = load_dataset(cfg)?;
    let sim = simulate(cfg, &dataset)?;
    let h = Header::new("simulate", cfg.seed);
    let out = &cfg.out;
    let mut s = Summary::default();
    write_tables(out, &h, &sim.tables(), &mut s, "simulate/tables")?;

    let mut w = create(out, "simulate/gaps.jsonl")?;
    writeln!(w, "{}", h.json())?;
    let records: Vec<GapRecord> = sim.records().cloned().collect();
    write_records_jsonl(&mut w, &records)?;
    finish(w)?;
    s.wrote(out, "simulate/gaps.jsonl");

    let skipped = records.iter().filter(|r| r.score.is_none()).count();
    s.lines.push(format!(
        "{} sets from {} persons; {} gap records, {} skipped",
        dataset.sets.len(),
        dataset.own_set_counts().len(),
        records.len(),
        skipped
    ));
    Ok(s)
}

/// Comparison tables rebuilt from stored per-gap records.
pub fn report_from_records(records: &[GapRecord]) -> Result<Vec<Table>> {
    let cmp: Vec<GapRecord> =
        records.iter().filter(|r| r.cell.is_none() && r.own_level.is_none()).cloned().collect();
    if cmp.is_empty() {
        return Err(Error::Empty("no method comparison records"));
    }
    let mut methods: Vec<Method> = Vec::new();
    let mut lengths: Vec<i64> = Vec::new();
    for r in &cmp {
        let m: Method = r.method.parse()?;
        if !methods.contains(&m) {
            methods.push(m);
        }
        if !lengths.contains(&r.gap_length_s) {
            lengths.push(r.gap_length_s);
        }
    }
    Ok(comparison_tables(&cmp, &methods, &lengths))
}

/// Re-renders the comparison tables of a `gaps.jsonl` file.
pub fn cmd_report(cfg: &RunConfig, records_path: &Path) -> Result<Summary> {
    let f = File::open(records_path).map_err(|e| Error::from(e).in_file(records_path.display()))?;
    let records = read_records_jsonl(BufReader::new(f)).map_err(|e| e.in_file(records_path.display()))?;
    let seed = first_header_seed(records_path)?.unwrap_or(cfg.seed);
    let tables = report_from_records(&records)?;
    let mut s = Summary::default();
    write_tables(&cfg.out, &Header::new("report", seed), &tables, &mut s, "report")?;
    s.lines.push(format!("{} records, {} tables", records.len(), tables.len()));
    Ok(s)
}

fn first_header_seed(path: &Path) -> Result<Option<u64>> {
    #[derive(serde::Deserialize)]
    struct H {
        seed: u64,
    }
    let f = File::open(path).map_err(|e| Error::from(e).in_file(path.display()))?;
    let mut first = String::new();
    BufReader::new(f).read_line(&mut first)?;
    Ok(first.starts_with("{\"gapfill\"").then(|| serde_json::from_str::<H>(&first).ok().map(|h| h.seed)).flatten())
}

pub fn synth(cfg: &RunConfig) -> Result<SynthOutput> {
    generate(&cfg.persona_spec())
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<Summary> {
    let spec = cfg.persona_spec();
    let data = generate(&spec)?;
    let h = Header::new("synth", spec.seed);
    let out = &cfg.out;
    let mut s = Summary::default();

    let mut w = create(out, "fixes.csv")?;
    writeln!(w, "{}", h.comment())?;
    write_trajectories_csv(&mut w, &data.trajectories)?;
    finish(w)?;
    s.wrote(out, "fixes.csv");

    let mut w = create(out, "ledger.jsonl")?;
    writeln!(w, "{}", h.json())?;
    write_ledger_jsonl(&mut w, &data.ledger)?;
    finish(w)?;
    s.wrote(out, "ledger.jsonl");

    s.lines.push(format!(
        "{} persons over {} days, {} fixes",
        spec.n_persons,
        spec.days,
        data.ledger.iter().map(|l| l.fixes).sum::<usize>()
    ));
    Ok(s)
}
