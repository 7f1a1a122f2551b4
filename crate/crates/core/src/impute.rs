//! Gap-filling methods and multiple-imputation pooling.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dtw::{score_donors, AlignmentConstraints, AlignmentResult, DonorId, MatchingMode, Query, ReferenceCollection};
use crate::error::{Error, Result};
use crate::geo::{haversine, position_at, GeoPoint};
use crate::scalar::{mean, sample_variance, Real};
use crate::series::{split_query, GapSpec, Metric, MetricSeries};

/// Added to dissimilarities before inversion.
pub const SELECTION_EPSILON: f64 = 1e-6;
/// A 15-minute period at or above this distance counts as travel.
pub const DEFAULT_MOVEMENT_THRESHOLD_KM: f64 = 0.1;

const HOUR: i64 = 3600;

/// Sharpness of the donor-selection law `p_v ∝ (1/(d_v + ε))^κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Specificity {
    Low,
    Medium,
    High,
    Kappa(f64),
    /// No sampling: the `m` lowest dissimilarities, ties by donor order.
    Best,
}

impl Specificity {
    pub fn kappa(self, table: &KappaTable) -> Option<f64> {
        match self {
            Specificity::Low => Some(table.low),
            Specificity::Medium => Some(table.medium),
            Specificity::High => Some(table.high),
            Specificity::Kappa(k) => Some(k),
            Specificity::Best => None,
        }
    }
}

impl fmt::Display for Specificity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Specificity::Low => f.write_str("low"),
            Specificity::Medium => f.write_str("medium"),
            Specificity::High => f.write_str("high"),
            Specificity::Kappa(k) => write!(f, "kappa={k}"),
            Specificity::Best => f.write_str("best"),
        }
    }
}

impl FromStr for Specificity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(Specificity::Low),
            "medium" => Ok(Specificity::Medium),
            "high" => Ok(Specificity::High),
            "best" => Ok(Specificity::Best),
            other => other
                .strip_prefix("kappa=")
                .and_then(|k| k.parse::<f64>().ok())
                .filter(|k| k.is_finite() && *k >= 0.0)
                .map(Specificity::Kappa)
                .ok_or_else(|| Error::Config(format!("unknown specificity '{s}'"))),
        }
    }
}

impl TryFrom<String> for Specificity {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Specificity> for String {
    fn from(s: Specificity) -> String {
        s.to_string()
    }
}

/// Exponents for the named specificity levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KappaTable {
    pub low: f64,
    pub medium: f64,
    pub high: f64,
}

impl Default for KappaTable {
    fn default() -> Self {
        Self { low: 1.0, medium: 3.0, high: 8.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtwbmiParams {
    /// Seconds of context matched on each side of the gap.
    pub match_buffer: i64,
    /// Maximum time-of-day offset of a donor placement, seconds.
    pub time_window: Option<i64>,
    pub specificity: Specificity,
    pub n_imputations: usize,
    pub rng_seed: u64,
    #[serde(default)]
    pub kappas: KappaTable,
    #[serde(default = "AlignmentConstraints::one_to_one")]
    pub constraints: AlignmentConstraints,
    #[serde(default)]
    pub mode: MatchingMode,
}

impl DtwbmiParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_imputations == 0 {
            return Err(Error::Config("n_imputations must be at least 1".into()));
        }
        if self.match_buffer <= 0 {
            return Err(Error::Config("match_buffer must be positive".into()));
        }
        if self.time_window.is_some_and(|w| w < 0) {
            return Err(Error::Config("time_window must be non-negative".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

/// Single best donor, 8 h buffer, 1 h window.
pub fn preset_dtwbi() -> DtwbmiParams {
    DtwbmiParams {
        match_buffer: 8 * HOUR,
        time_window: Some(HOUR),
        specificity: Specificity::Best,
        n_imputations: 1,
        rng_seed: 0,
        kappas: KappaTable::default(),
        constraints: AlignmentConstraints::one_to_one(),
        mode: MatchingMode::SplitBuffers,
    }
}

/// 8 h buffer, high specificity, 12 h window, three imputations.
pub fn preset_dtwbmi_hi() -> DtwbmiParams {
    DtwbmiParams { specificity: Specificity::High, time_window: Some(12 * HOUR), n_imputations: 3, ..preset_dtwbi() }
}

/// 1 h buffer, medium specificity, 3 h window, ten imputations.
pub fn preset_dtwbmi_lo() -> DtwbmiParams {
    DtwbmiParams {
        match_buffer: HOUR,
        specificity: Specificity::Medium,
        time_window: Some(3 * HOUR),
        n_imputations: 10,
        ..preset_dtwbi()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Li,
    Mi,
    Twi,
    Dtwbi,
    DtwbmiHi,
    DtwbmiLo,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Li, Method::Mi, Method::Twi, Method::Dtwbi, Method::DtwbmiHi, Method::DtwbmiLo];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Li => "li",
            Method::Mi => "mi",
            Method::Twi => "twi",
            Method::Dtwbi => "dtwbi",
            Method::DtwbmiHi => "dtwbmi-hi",
            Method::DtwbmiLo => "dtwbmi-lo",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Li => "LI",
            Method::Mi => "MI",
            Method::Twi => "TWI",
            Method::Dtwbi => "DTWBI",
            Method::DtwbmiHi => "DTWBMI-HI",
            Method::DtwbmiLo => "DTWBMI-LO",
        }
    }

    /// Whether the method draws from a reference pool.
    pub fn needs_references(self) -> bool {
        !matches!(self, Method::Li | Method::Mi)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s) || m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let known: Vec<&str> = Method::ALL.iter().map(|m| m.as_str()).collect();
                Error::Config(format!("unknown method '{s}' (expected one of {})", known.join(", ")))
            })
    }
}

/// Per-method settings that are not fixed by the presets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodSettings {
    pub twi_window: i64,
    pub twi_imputations: usize,
    pub kappas: KappaTable,
    pub constraints: AlignmentConstraints,
    pub mode: MatchingMode,
    pub dtwbi: PresetOverride,
    pub dtwbmi_hi: PresetOverride,
    pub dtwbmi_lo: PresetOverride,
}

/// Replaces selected fields of a DTW preset.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PresetOverride {
    pub match_buffer: Option<i64>,
    pub time_window: Option<i64>,
    /// Drops the preset's time window; wins over `time_window`.
    pub no_time_window: bool,
    pub specificity: Option<Specificity>,
    pub n_imputations: Option<usize>,
}

impl PresetOverride {
    pub fn apply(&self, mut p: DtwbmiParams) -> DtwbmiParams {
        if let Some(b) = self.match_buffer {
            p.match_buffer = b;
        }
        if let Some(w) = self.time_window {
            p.time_window = Some(w);
        }
        if self.no_time_window {
            p.time_window = None;
        }
        if let Some(s) = self.specificity {
            p.specificity = s;
        }
        if let Some(m) = self.n_imputations {
            p.n_imputations = m;
        }
        p
    }
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            twi_window: HOUR,
            twi_imputations: 10,
            kappas: KappaTable::default(),
            constraints: AlignmentConstraints::one_to_one(),
            mode: MatchingMode::SplitBuffers,
            dtwbi: PresetOverride::default(),
            dtwbmi_hi: PresetOverride::default(),
            dtwbmi_lo: PresetOverride::default(),
        }
    }
}

impl MethodSettings {
    /// Preset parameters for the DTW-based methods.
    pub fn dtw_params(&self, method: Method, seed: u64) -> Option<DtwbmiParams> {
        let base = match method {
            Method::Dtwbi => self.dtwbi.apply(preset_dtwbi()),
            Method::DtwbmiHi => self.dtwbmi_hi.apply(preset_dtwbmi_hi()),
            Method::DtwbmiLo => self.dtwbmi_lo.apply(preset_dtwbmi_lo()),
            _ => return None,
        };
        Some(DtwbmiParams { rng_seed: seed, kappas: self.kappas, constraints: self.constraints, mode: self.mode, ..base })
    }
}

/// Where a donated gap came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DonorDraw {
    pub donor_id: DonorId,
    /// Zero-based donor index of the first donated element.
    pub gap_position: usize,
    /// Alignment dissimilarity; absent for unscored draws.
    pub dissimilarity: Option<f64>,
}

impl From<&AlignmentResult<f64>> for DonorDraw {
    fn from(r: &AlignmentResult<f64>) -> Self {
        Self { donor_id: r.donor_id.clone(), gap_position: r.gap_position, dissimilarity: Some(r.dissimilarity) }
    }
}

/// Element-wise summary across imputations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pooled {
    pub mean: Vec<f64>,
    /// Between-imputation sample variance (zero for a single imputation).
    pub variance: Vec<f64>,
    pub total_mean: f64,
    pub total_variance: f64,
}

/// Element-wise mean and between-imputation variance of complete series.
pub fn pool(results: &[MetricSeries]) -> Result<Pooled> {
    let first = results.first().ok_or(Error::Empty("nothing to pool"))?;
    let n = first.len();
    let mut rows = Vec::with_capacity(results.len());
    for s in results {
        if s.len() != n {
            return Err(Error::InvalidInput("pooled series differ in length".into()));
        }
        let row: Option<Vec<f64>> = s.values.iter().copied().collect();
        rows.push(row.ok_or_else(|| Error::InvalidInput("pooled series must be complete".into()))?);
    }
    let mut column = vec![0.0; rows.len()];
    let (mut mean_v, mut var_v) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for t in 0..n {
        for (c, row) in column.iter_mut().zip(&rows) {
            *c = row[t];
        }
        mean_v.push(mean(&column).unwrap());
        var_v.push(sample_variance(&column).unwrap());
    }
    let totals: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
    Ok(Pooled {
        mean: mean_v,
        variance: var_v,
        total_mean: mean(&totals).unwrap(),
        total_variance: sample_variance(&totals).unwrap(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationResult {
    pub method: String,
    pub gap: GapSpec,
    pub completed: Vec<MetricSeries>,
    /// One entry per imputation; empty for methods without donors.
    pub donors: Vec<DonorDraw>,
    pub pooled: Pooled,
    pub seed: Option<u64>,
}

impl ImputationResult {
    fn build(
        method: &str,
        series: &MetricSeries,
        gap: &GapSpec,
        fills: Vec<Vec<f64>>,
        donors: Vec<DonorDraw>,
        seed: Option<u64>,
    ) -> Result<Self> {
        let completed: Vec<MetricSeries> = fills
            .into_iter()
            .map(|fill| {
                let mut s = series.clone();
                for (v, x) in s.values[gap.start..gap.end].iter_mut().zip(fill) {
                    *v = Some(x);
                }
                s
            })
            .collect();
        let pooled = pool(&completed)?;
        Ok(Self { method: method.to_string(), gap: *gap, completed, donors, pooled, seed })
    }

    pub fn m(&self) -> usize {
        self.completed.len()
    }

    /// Imputed values of imputation `k` over the gap.
    pub fn gap_values(&self, k: usize) -> Vec<f64> {
        self.completed[k].values[self.gap.start..self.gap.end].iter().map(|v| v.unwrap()).collect()
    }

    /// Sum over the gap for each imputation.
    pub fn gap_totals(&self) -> Vec<f64> {
        (0..self.m()).map(|k| self.gap_values(k).iter().sum()).collect()
    }
}

fn check_gap(series: &MetricSeries, gap: &GapSpec) -> Result<()> {
    if gap.is_empty() || gap.end > series.len() {
        return Err(Error::InvalidInput(format!("gap [{}, {}) outside series of {}", gap.start, gap.end, series.len())));
    }
    if series.values[gap.start..gap.end].iter().any(Option::is_some) {
        return Err(Error::InvalidInput("gap contains observed elements".into()));
    }
    Ok(())
}

/// Straight-line distance between the positions at the gap boundaries,
/// split equally over the missing intervals.
///
/// `path` is the movement path the series was built from.
pub fn impute_li(series: &MetricSeries, gap: &GapSpec, path: &[GeoPoint]) -> Result<ImputationResult> {
    check_gap(series, gap)?;
    if series.metric != Metric::TravelDistanceKm {
        return Err(Error::InvalidInput(format!("linear interpolation needs a distance series, got {}", series.metric.as_str())));
    }
    if gap.leading || gap.trailing || gap.start == 0 || gap.end == series.len() {
        return Err(Error::NoAnchor("gap touches the series boundary".into()));
    }
    let (t0, t1) = (series.time_of(gap.start), series.time_of(gap.end));
    let (a, b) = position_at(path, t0)
        .zip(position_at(path, t1))
        .ok_or_else(|| Error::NoAnchor(format!("no fix brackets the gap boundaries {t0} and {t1}")))?;
    let each = haversine(&a, &b) / 1000.0 / gap.len() as f64;
    ImputationResult::build(Method::Li.as_str(), series, gap, vec![vec![each; gap.len()]], Vec::new(), None)
}

/// The observed mean per interval, constant across the gap.
pub fn impute_mean(series: &MetricSeries, gap: &GapSpec) -> Result<ImputationResult> {
    check_gap(series, gap)?;
    let observed: Vec<f64> = series.values.iter().flatten().copied().collect();
    let m = mean(&observed).ok_or(Error::InsufficientData("series has no observed element".into()))?;
    ImputationResult::build(Method::Mi.as_str(), series, gap, vec![vec![m; gap.len()]], Vec::new(), None)
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `m` indices out of `n`: distinct when `n >= m`, independent otherwise.
fn draw_uniform<R: Rng>(rng: &mut R, n: usize, m: usize) -> Vec<usize> {
    if n >= m {
        index::sample(rng, n, m).into_vec()
    } else {
        (0..m).map(|_| rng.random_range(0..n)).collect()
    }
}

/// Random donor placements within the time window, copied into the gap.
pub fn impute_twi(
    series: &MetricSeries,
    gap: &GapSpec,
    refs: &ReferenceCollection<f64>,
    window: i64,
    m: usize,
    seed: u64,
) -> Result<ImputationResult> {
    check_gap(series, gap)?;
    if m == 0 {
        return Err(Error::Config("n_imputations must be at least 1".into()));
    }
    if refs.is_empty() {
        return Err(Error::EmptyReferences);
    }
    let phi = crate::dtw::Phi { time_window: Some(window), ..refs.restrictions };
    let gap_start = series.time_of(gap.start);
    let placements: Vec<(usize, usize)> = refs
        .donors
        .iter()
        .enumerate()
        .filter(|(_, d)| d.interval == series.interval)
        .flat_map(|(k, d)| phi.feasible_placements(d, 0, gap.len(), 0, gap_start).into_iter().map(move |p| (k, p)))
        .collect();
    if placements.is_empty() {
        return Err(Error::NoFeasibleDonor(format!(
            "none of {} donors is observed over {} intervals within {} s of the gap start",
            refs.len(),
            gap.len(),
            window
        )));
    }
    let mut rng = rng_for(seed);
    let picks = draw_uniform(&mut rng, placements.len(), m);
    let mut fills = Vec::with_capacity(m);
    let mut donors = Vec::with_capacity(m);
    for i in picks {
        let (k, p) = placements[i];
        let d = &refs.donors[k];
        fills.push(d.values[p..p + gap.len()].iter().map(|v| v.unwrap()).collect());
        donors.push(DonorDraw { donor_id: d.id.clone(), gap_position: p, dissimilarity: None });
    }
    ImputationResult::build(Method::Twi.as_str(), series, gap, fills, donors, Some(seed))
}

/// Normalized `(1/(d_v + eps))^kappa`, computed in log space.
pub fn selection_probabilities<F: Real>(dissimilarities: &[F], kappa: F, eps: F) -> Vec<F> {
    let logw: Vec<F> = dissimilarities.iter().map(|&d| -kappa * (d + eps).ln()).collect();
    let top = logw.iter().copied().fold(F::neg_infinity(), F::max);
    let w: Vec<F> = logw.iter().map(|&l| (l - top).exp()).collect();
    let total = w.iter().copied().fold(F::zero(), |a, b| a + b);
    w.into_iter().map(|x| x / total).collect()
}

/// Indices into `scores` of the `m` selected donors.
pub fn select_donors<R: Rng>(
    dissimilarities: &[f64],
    specificity: Specificity,
    kappas: &KappaTable,
    m: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = dissimilarities.len();
    if n == 0 {
        return Err(Error::NoFeasibleDonor("no scored donor".into()));
    }
    let Some(kappa) = specificity.kappa(kappas) else {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| dissimilarities[a].total_cmp(&dissimilarities[b]).then(a.cmp(&b)));
        return Ok((0..m).map(|i| order[i % n]).collect());
    };
    // floor keeps every feasible donor drawable after underflow
    let p: Vec<f64> = selection_probabilities(dissimilarities, kappa, SELECTION_EPSILON)
        .into_iter()
        .map(|x| x.max(f64::MIN_POSITIVE))
        .collect();
    if n >= m {
        let picked = index::sample_weighted(rng, n, |i| p[i], m).map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(picked.into_vec())
    } else {
        let dist = WeightedIndex::new(&p).map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok((0..m).map(|_| dist.sample(rng)).collect())
    }
}

/// Observed context around the gap, as a DTW query.
pub fn build_query<'a>(series: &MetricSeries, gap: &GapSpec, pre: &'a [f64], post: &'a [f64]) -> Query<'a, f64> {
    Query { pre, post, gap_len: gap.len(), gap_start: series.time_of(gap.start), interval: series.interval }
}

/// Aligns the gap context against every donor under `params`.
pub fn score_gap(
    series: &MetricSeries,
    gap: &GapSpec,
    refs: &ReferenceCollection<f64>,
    params: &DtwbmiParams,
) -> Result<Vec<AlignmentResult<f64>>> {
    params.validate()?;
    check_gap(series, gap)?;
    let (pre, post) = split_query(series, gap, params.match_buffer)?;
    let query = build_query(series, gap, &pre, &post);
    let phi = crate::dtw::Phi { time_window: params.time_window, ..refs.restrictions };
    let c = AlignmentConstraints { time_window: params.time_window, ..params.constraints };
    let scores = score_donors(&query, &refs.donors, &phi, &c, params.mode)?;
    if scores.is_empty() {
        return Err(Error::NoFeasibleDonor(format!(
            "none of {} donors has a fully observed placement for {}+{}+{} intervals within window {:?}",
            refs.len(),
            pre.len(),
            gap.len(),
            post.len(),
            params.time_window
        )));
    }
    Ok(scores)
}

/// Donor selection and donation from precomputed scores.
pub fn impute_from_scores(
    label: &str,
    series: &MetricSeries,
    gap: &GapSpec,
    scores: &[AlignmentResult<f64>],
    params: &DtwbmiParams,
) -> Result<ImputationResult> {
    params.validate()?;
    check_gap(series, gap)?;
    let d: Vec<f64> = scores.iter().map(|s| s.dissimilarity).collect();
    let mut rng = rng_for(params.rng_seed);
    let picks = select_donors(&d, params.specificity, &params.kappas, params.n_imputations, &mut rng)?;
    if let Some(bad) = picks.iter().map(|&i| &scores[i]).find(|s| s.donor_gap_values.len() != gap.len()) {
        return Err(Error::InvalidInput(format!("donor {:?} scored for a different gap length", bad.donor_id)));
    }
    let fills = picks.iter().map(|&i| scores[i].donor_gap_values.clone()).collect();
    let donors = picks.iter().map(|&i| DonorDraw::from(&scores[i])).collect();
    let seed = params.specificity.kappa(&params.kappas).map(|_| params.rng_seed);
    ImputationResult::build(label, series, gap, fills, donors, seed)
}

/// Dynamic time warping based (multiple) imputation.
pub fn impute_dtwbmi(
    series: &MetricSeries,
    gap: &GapSpec,
    refs: &ReferenceCollection<f64>,
    params: &DtwbmiParams,
) -> Result<ImputationResult> {
    let scores = score_gap(series, gap, refs, params)?;
    impute_from_scores("dtwbmi", series, gap, &scores, params)
}

/// Everything a method may need for one gap.
#[derive(Debug, Clone, Copy)]
pub struct GapInput<'a> {
    pub series: &'a MetricSeries,
    pub gap: &'a GapSpec,
    pub path: &'a [GeoPoint],
    pub refs: &'a ReferenceCollection<f64>,
    pub seed: u64,
}

/// Runs one of the named methods.
pub fn impute_with(method: Method, input: &GapInput<'_>, settings: &MethodSettings) -> Result<ImputationResult> {
    let mut r = match method {
        Method::Li => impute_li(input.series, input.gap, input.path),
        Method::Mi => impute_mean(input.series, input.gap),
        Method::Twi => impute_twi(input.series, input.gap, input.refs, settings.twi_window, settings.twi_imputations, input.seed),
        _ => {
            let params = settings.dtw_params(method, input.seed).unwrap();
            impute_dtwbmi(input.series, input.gap, input.refs, &params)
        }
    }?;
    r.method = method.as_str().to_string();
    Ok(r)
}

#[derive(Serialize)]
struct ProvenanceRecord<'a> {
    method: &'a str,
    person_id: &'a str,
    set_id: u32,
    metric: &'a str,
    gap_start: usize,
    gap_end: usize,
    seed: Option<u64>,
    imputation: usize,
    donor: Option<&'a DonorDraw>,
    gap_total: f64,
}

/// One JSON line per imputation.
pub fn write_provenance<W: Write>(mut w: W, results: &[ImputationResult]) -> Result<()> {
    for r in results {
        let totals = r.gap_totals();
        for (k, s) in r.completed.iter().enumerate() {
            let rec = ProvenanceRecord {
                method: &r.method,
                person_id: &s.person_id,
                set_id: s.set_id,
                metric: s.metric.as_str(),
                gap_start: r.gap.report_start(),
                gap_end: r.gap.report_end(),
                seed: r.seed,
                imputation: k + 1,
                donor: r.donors.get(k),
                gap_total: totals[k],
            };
            serde_json::to_writer(&mut w, &rec)?;
            writeln!(w)?;
        }
    }
    Ok(())
}
