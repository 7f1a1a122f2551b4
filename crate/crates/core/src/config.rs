//! Run configuration: TOML sections over the library defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::FixedOffset;
use serde::{Deserialize, Serialize};

use crate::dtw::Phi;
use crate::error::{Error, Result};
use crate::geo::{InputFormat, DEFAULT_MAX_SPEED_MPS};
use crate::harness::{HarnessSettings, NightWindow, OwnSetsDesign, Scenario, Stratum, COMPARISON_GAP_HOURS};
use crate::impute::{Method, MethodSettings, DEFAULT_MOVEMENT_THRESHOLD_KM};
use crate::segmentation::SegmentParams;
use crate::series::{Metric, DAY_S, DEFAULT_INTERVAL_S, DEFAULT_MAX_GAP_S};
use crate::synth::PersonaSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub paths: Vec<PathBuf>,
    pub format: InputFormat,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self { paths: Vec::new(), format: InputFormat::Csv }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Fixed offset such as `+01:00`.
    pub timezone: String,
    pub interval_s: i64,
    pub max_gap_s: i64,
    /// Shortest contiguous stretch that counts as a set.
    pub min_set_span_s: i64,
    pub max_speed_mps: f64,
    pub metric: Metric,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            timezone: "+01:00".into(),
            interval_s: DEFAULT_INTERVAL_S,
            max_gap_s: DEFAULT_MAX_GAP_S,
            min_set_span_s: DAY_S,
            max_speed_mps: DEFAULT_MAX_SPEED_MPS,
            metric: Metric::TravelDistanceKm,
        }
    }
}

impl DatasetConfig {
    pub fn utc_offset(&self) -> Result<i64> {
        FixedOffset::from_str(&self.timezone)
            .map(|o| i64::from(o.local_minus_utc()))
            .map_err(|e| Error::Config(format!("timezone `{}`: {e}", self.timezone)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputeConfig {
    pub methods: Vec<Method>,
    pub movement_threshold_km: f64,
    #[serde(flatten)]
    pub settings: MethodSettings,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            movement_threshold_km: DEFAULT_MOVEMENT_THRESHOLD_KM,
            settings: MethodSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub gap_lengths_s: Vec<i64>,
    pub n_affected: usize,
    pub strata: Vec<Stratum>,
    pub comparison: bool,
    /// Full DTWBMI parameter grid.
    pub grid: bool,
    pub own_sets: bool,
    pub own_sets_design: OwnSetsDesign,
    pub night: NightWindow,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            gap_lengths_s: COMPARISON_GAP_HOURS.iter().map(|h| h * 3600).collect(),
            n_affected: 100,
            strata: vec![Stratum::Any],
            comparison: true,
            grid: false,
            own_sets: false,
            own_sets_design: OwnSetsDesign::default(),
            night: NightWindow::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    /// Output directory; all written paths are relative to it.
    pub out: PathBuf,
    pub input: InputConfig,
    pub dataset: DatasetConfig,
    pub segmentation: SegmentParams,
    pub impute: ImputeConfig,
    pub simulate: SimulateConfig,
    pub synth: PersonaSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            input: InputConfig::default(),
            dataset: DatasetConfig::default(),
            segmentation: SegmentParams::default(),
            impute: ImputeConfig::default(),
            simulate: SimulateConfig::default(),
            synth: PersonaSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path.display()))?;
        Self::from_toml(&text).map_err(|e| e.in_file(path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        d.utc_offset()?;
        if d.interval_s <= 0 || DAY_S % d.interval_s != 0 {
            return Err(Error::Config(format!("interval {} s does not divide a day", d.interval_s)));
        }
        if d.max_gap_s <= 0 || d.min_set_span_s <= 0 || d.max_speed_mps <= 0.0 {
            return Err(Error::Config("max_gap_s, min_set_span_s and max_speed_mps must be positive".into()));
        }
        let s = &self.segmentation;
        if s.radius_m <= 0.0 || s.min_stay_s <= 0 || s.tdtr_tolerance_m < 0.0 {
            return Err(Error::Config("segmentation parameters must be positive".into()));
        }
        if self.impute.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.impute.movement_threshold_km.is_nan() || self.impute.movement_threshold_km < 0.0 {
            return Err(Error::Config("movement threshold must be non-negative".into()));
        }
        for &m in &self.impute.methods {
            if let Some(p) = self.impute.settings.dtw_params(m, 0) {
                p.validate().map_err(|e| Error::Config(format!("{}: {e}", m.as_str())))?;
            }
        }
        if self.simulate.gap_lengths_s.iter().any(|&g| g <= 0) {
            return Err(Error::Config("gap lengths must be positive".into()));
        }
        self.synth.validate()
    }

    pub fn harness_settings(&self) -> Result<HarnessSettings> {
        Ok(HarnessSettings {
            methods: self.impute.settings,
            movement_threshold_km: self.impute.movement_threshold_km,
            phi: Phi { utc_offset: self.dataset.utc_offset()?, ..Phi::default() },
            night: self.simulate.night,
        })
    }

    /// One scenario per gap length and stratum, seeded from the master seed.
    pub fn scenarios(&self) -> Vec<Scenario> {
        let sim = &self.simulate;
        sim.strata
            .iter()
            .flat_map(|&st| sim.gap_lengths_s.iter().map(move |&g| Scenario::new(g, sim.n_affected, st, self.seed)))
            .collect()
    }

    pub fn own_sets_design(&self) -> OwnSetsDesign {
        OwnSetsDesign { seed: self.seed, ..self.simulate.own_sets_design.clone() }
    }

    pub fn persona_spec(&self) -> PersonaSpec {
        PersonaSpec { seed: self.seed, ..self.synth.clone() }
    }
}
