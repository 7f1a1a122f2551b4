//! `gapfill`: batch front end over the pipeline commands.
//!
//! Settings resolve in three layers: library defaults, then the `--config`
//! TOML file, then flags (or their `GAPFILL_*` environment variables).

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use gapfill_core::config::RunConfig;
use gapfill_core::geo::InputFormat;
use gapfill_core::harness::Stratum;
use gapfill_core::impute::Method;
use gapfill_core::pipeline::{self, Summary};

#[derive(Debug, Parser)]
#[command(name = "gapfill", version, about = "Impute missing stretches of daily mobility series")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true, env = "GAPFILL_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory; every written path is relative to it.
    #[arg(long, global = true, env = "GAPFILL_OUT")]
    out: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, env = "GAPFILL_SEED")]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "GAPFILL_JOBS", value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Input files; several files may hold different persons.
    #[arg(value_name = "INPUT")]
    inputs: Vec<PathBuf>,
    /// Input format: csv or jsonl.
    #[arg(long, env = "GAPFILL_FORMAT", value_parser = parse_from_str::<InputFormat>)]
    format: Option<InputFormat>,
    /// Local offset from UTC, e.g. +01:00.
    #[arg(long, env = "GAPFILL_TIMEZONE", allow_hyphen_values = true)]
    timezone: Option<String>,
    /// Series interval, e.g. 15m.
    #[arg(long, value_parser = parse_secs)]
    interval: Option<i64>,
    /// Longest fix gap inside a contiguous set, e.g. 360s.
    #[arg(long, env = "GAPFILL_MAX_GAP", value_parser = parse_secs)]
    max_gap: Option<i64>,
    /// Travel above this many km per interval counts as movement.
    #[arg(long)]
    movement_threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct MethodArgs {
    /// Imputation methods, comma separated (li, mi, twi, dtwbi, dtwbmi-hi, dtwbmi-lo).
    #[arg(long = "methods", alias = "method", value_delimiter = ',', env = "GAPFILL_METHODS", value_parser = parse_from_str::<Method>)]
    methods: Option<Vec<Method>>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read raw fixes and write the canonical store with coverage statistics.
    Ingest(#[command(flatten)] DataArgs),
    /// Detect stays and trips and write per-day series.
    Segment(#[command(flatten)] DataArgs),
    /// Fill every gap in the series with the selected methods.
    Impute {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        methods: MethodArgs,
    },
    /// Induce gaps in complete sets and score every method against the truth.
    Simulate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        methods: MethodArgs,
        /// Scenario definition, e.g. `gaps=1h,3h;n=100;strata=night-only,daytime`.
        #[arg(long)]
        scenario: Option<Scenarios>,
        /// Run the DTWBMI parameter grid; only `appendix-a` is defined.
        #[arg(long, value_parser = ["appendix-a"])]
        grid: Option<String>,
        /// Run the own-sets experiment.
        #[arg(long)]
        own_sets: bool,
        /// Skip the method comparison.
        #[arg(long)]
        no_comparison: bool,
    },
    /// Generate a synthetic persona dataset in the csv input format.
    Synth {
        #[arg(long)]
        persons: Option<usize>,
        #[arg(long)]
        days: Option<usize>,
    },
    /// Rebuild report tables from a gap record file written by `simulate`.
    Report {
        /// Defaults to `simulate/gaps.jsonl` under the output directory.
        records: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Default)]
struct Scenarios {
    gaps: Option<Vec<i64>>,
    n: Option<usize>,
    strata: Option<Vec<Stratum>>,
}

impl FromStr for Scenarios {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut sc = Scenarios::default();
        for part in s.split(';').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| format!("expected key=value, got `{part}`"))?;
            let items = || v.split(',').map(str::trim).filter(|x| !x.is_empty());
            match k.trim() {
                "gaps" => sc.gaps = Some(items().map(parse_secs).collect::<Result<_, _>>()?),
                "n" => sc.n = Some(v.trim().parse().map_err(|e| format!("n: {e}"))?),
                "strata" => sc.strata = Some(items().map(parse_from_str::<Stratum>).collect::<Result<_, _>>()?),
                other => return Err(format!("unknown scenario key `{other}` (expected gaps, n or strata)")),
            }
        }
        Ok(sc)
    }
}

fn parse_from_str<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

fn parse_secs(s: &str) -> Result<i64, String> {
    let d: Duration = humantime::parse_duration(s.trim()).map_err(|e| format!("`{s}`: {e}"))?;
    if d.subsec_nanos() != 0 || d.is_zero() {
        return Err(format!("`{s}`: expected a positive whole number of seconds"));
    }
    i64::try_from(d.as_secs()).map_err(|e| e.to_string())
}

impl DataArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if !self.inputs.is_empty() {
            cfg.input.paths = self.inputs.clone();
        }
        if let Some(f) = self.format {
            cfg.input.format = f;
        }
        if let Some(tz) = &self.timezone {
            cfg.dataset.timezone = tz.clone();
        }
        if let Some(i) = self.interval {
            cfg.dataset.interval_s = i;
        }
        if let Some(g) = self.max_gap {
            cfg.dataset.max_gap_s = g;
        }
        if let Some(t) = self.movement_threshold {
            cfg.impute.movement_threshold_km = t;
        }
    }
}

impl MethodArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(m) = &self.methods {
            cfg.impute.methods = m.clone();
        }
    }
}

/// Layers the config file and flags over the defaults.
fn resolve(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let g = &cli.global;
    if let Some(out) = &g.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::Ingest(d) | Command::Segment(d) => d.apply(&mut cfg),
        Command::Impute { data, methods } => {
            data.apply(&mut cfg);
            methods.apply(&mut cfg);
        }
        Command::Simulate { data, methods, scenario, grid, own_sets, no_comparison } => {
            data.apply(&mut cfg);
            methods.apply(&mut cfg);
            let sim = &mut cfg.simulate;
            if let Some(sc) = scenario {
                if let Some(g) = &sc.gaps {
                    sim.gap_lengths_s = g.clone();
                }
                if let Some(n) = sc.n {
                    sim.n_affected = n;
                }
                if let Some(st) = &sc.strata {
                    sim.strata = st.clone();
                }
            }
            sim.grid |= grid.is_some();
            sim.own_sets |= own_sets;
            sim.comparison &= !no_comparison;
        }
        Command::Synth { persons, days } => {
            if let Some(n) = persons {
                cfg.synth.n_persons = *n;
            }
            if let Some(d) = days {
                cfg.synth.days = *d;
            }
        }
        Command::Report { .. } => {}
    }
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &RunConfig) -> anyhow::Result<Summary> {
    let needs_input = matches!(
        cli.command,
        Command::Ingest(_) | Command::Segment(_) | Command::Impute { .. } | Command::Simulate { .. }
    );
    if needs_input && cfg.input.paths.is_empty() {
        bail!("no input files: pass them as arguments or set input.paths in the config");
    }
    let summary = match &cli.command {
        Command::Ingest(_) => pipeline::cmd_ingest(cfg)?,
        Command::Segment(_) => pipeline::cmd_segment(cfg)?,
        Command::Impute { .. } => pipeline::cmd_impute(cfg)?,
        Command::Simulate { .. } => pipeline::cmd_simulate(cfg)?,
        Command::Synth { .. } => pipeline::cmd_synth(cfg)?,
        Command::Report { records } => {
            let path = records.clone().unwrap_or_else(|| cfg.out.join("simulate/gaps.jsonl"));
            pipeline::cmd_report(cfg, &path)?
        }
    };
    Ok(summary)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(&cli).and_then(|cfg| {
        if cli.global.print_config {
            print!("{}", cfg.to_toml()?);
            return Ok(None);
        }
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(j) = cli.global.jobs {
            pool = pool.num_threads(usize::from(j));
        }
        let pool = pool.build().context("starting worker pool")?;
        pool.install(|| run(&cli, &cfg)).map(Some)
    });
    match result {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(summary)) => {
            for line in &summary.lines {
                println!("{line}");
            }
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let summary = serde_json::json!({
                "error": e.to_string(),
                "causes": e.chain().skip(1).map(ToString::to_string).collect::<Vec<_>>(),
            });
            eprintln!("{summary}");
            ExitCode::FAILURE
        }
    }
}
