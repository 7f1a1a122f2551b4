//! Constrained dynamic time warping and gap-aware donor alignment.
//!
//! The engine is generic over [`Scalar`], so alignments can be computed in
//! `f64`, `f32` or exactly in rational arithmetic.
//!
//! A query is the observed context around a gap: `pre` (elements before the
//! gap) and `post` (elements after it). Every donor series is scanned for
//! placements of an artificial gap of the same length, flanked by buffers as
//! long as `pre` and `post`; the placement with the lowest summed alignment
//! cost is that donor's candidate.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::series::{MetricSeries, DAY_S};

/// Circular time-of-day distance in seconds, in `[0, 12h]`.
pub fn time_of_day_offset(a: i64, b: i64) -> i64 {
    let d = (a - b).rem_euclid(DAY_S);
    d.min(DAY_S - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AlignmentConstraints {
    /// Maximum index offset `|t - j|` of matched cells.
    pub sakoe_chiba: Option<usize>,
    /// Diagonal steps only.
    pub one_to_one: bool,
    /// The path may start and end anywhere in the reference.
    pub open_begin_end: bool,
    /// Maximum time-of-day offset (seconds) between matched elements.
    pub time_window: Option<i64>,
}

impl AlignmentConstraints {
    pub fn one_to_one() -> Self {
        Self { one_to_one: true, ..Self::default() }
    }

    pub fn with_time_window(mut self, window: Option<i64>) -> Self {
        self.time_window = window;
        self
    }

    fn is_lockstep(&self) -> bool {
        (self.one_to_one || self.sakoe_chiba == Some(0)) && !self.open_begin_end
    }
}

/// A slice with wall-clock stamps `start + i * step`.
#[derive(Debug, Clone, Copy)]
pub struct Timed<'a, F> {
    pub values: &'a [F],
    pub start: i64,
    pub step: i64,
}

impl<'a, F> Timed<'a, F> {
    pub fn new(values: &'a [F], start: i64, step: i64) -> Self {
        Self { values, start, step }
    }

    /// All elements share one instant, so a time window never binds.
    pub fn untimed(values: &'a [F]) -> Self {
        Self { values, start: 0, step: 0 }
    }

    pub fn time_of(&self, i: usize) -> i64 {
        self.start + i as i64 * self.step
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Elementwise absolute differences, `D[t][j] = |q_t - rho_j|`.
pub fn cost_matrix<F: Scalar>(q: &[F], rho: &[F]) -> Result<Vec<Vec<F>>> {
    if q.is_empty() || rho.is_empty() {
        return Err(Error::Empty("cost matrix needs non-empty slices"));
    }
    Ok(q.iter().map(|&a| rho.iter().map(|&b| (a - b).abs()).collect()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warping<F> {
    pub cost: F,
    /// Matched `(query index, reference index)` pairs in order.
    pub path: Vec<(usize, usize)>,
}

#[derive(Clone, Copy)]
enum Step {
    Start,
    Diagonal,
    Vertical,
    Horizontal,
}

/// Minimum accumulated cost over admissible warping paths, with
/// `D(t,j) = |q_t - rho_j| + min{D(t-1,j-1), D(t-1,j), D(t,j-1)}`.
///
/// Cells outside the Sakoe-Chiba band or the time window are impassable.
/// With `open_begin_end` the path covers all of `q` but may start and end
/// anywhere in `rho`. Ties prefer the diagonal, then vertical, then
/// horizontal step, and the earliest end column.
pub fn dtw_distance<F: Scalar>(q: Timed<'_, F>, rho: Timed<'_, F>, c: &AlignmentConstraints) -> Result<Warping<F>> {
    let (n, m) = (q.len(), rho.len());
    if n == 0 || m == 0 {
        return Err(Error::Empty("dtw needs non-empty slices"));
    }
    if c.one_to_one && !c.open_begin_end && n != m {
        return Err(Error::InvalidInput(format!("one-to-one alignment needs equal lengths, got {n} and {m}")));
    }
    let allowed = |i: usize, j: usize| {
        c.sakoe_chiba.is_none_or(|w| i.abs_diff(j) <= w)
            && c.time_window.is_none_or(|w| time_of_day_offset(q.time_of(i), rho.time_of(j)) <= w)
    };

    let mut acc: Vec<Option<F>> = vec![None; n * m];
    let mut from = vec![Step::Start; n * m];
    for i in 0..n {
        for j in 0..m {
            if !allowed(i, j) {
                continue;
            }
            let d = (q.values[i] - rho.values[j]).abs();
            let mut best: Option<(F, Step)> = None;
            let mut offer = |v: Option<F>, s: Step| {
                if let Some(v) = v {
                    if best.is_none_or(|(b, _)| v < b) {
                        best = Some((v, s));
                    }
                }
            };
            if i == 0 {
                if j == 0 || c.open_begin_end {
                    best = Some((F::zero(), Step::Start));
                } else if !c.one_to_one {
                    offer(acc[j - 1], Step::Horizontal);
                }
            } else {
                if j > 0 {
                    offer(acc[(i - 1) * m + j - 1], Step::Diagonal);
                }
                if !c.one_to_one {
                    offer(acc[(i - 1) * m + j], Step::Vertical);
                    if j > 0 {
                        offer(acc[i * m + j - 1], Step::Horizontal);
                    }
                }
            }
            if let Some((prev, step)) = best {
                acc[i * m + j] = Some(match step {
                    Step::Start => d,
                    _ => d + prev,
                });
                from[i * m + j] = step;
            }
        }
    }

    let last_row = (n - 1) * m;
    let end = if c.open_begin_end {
        let mut end: Option<(usize, F)> = None;
        for j in 0..m {
            if let Some(v) = acc[last_row + j] {
                if end.is_none_or(|(_, b)| v < b) {
                    end = Some((j, v));
                }
            }
        }
        end
    } else {
        acc[last_row + m - 1].map(|v| (m - 1, v))
    };
    let (mut j, cost) = end.ok_or_else(|| Error::Infeasible(format!("no admissible path for {n}x{m} under {c:?}")))?;

    let mut i = n - 1;
    let mut path = vec![(i, j)];
    loop {
        match from[i * m + j] {
            Step::Start => break,
            Step::Diagonal => {
                i -= 1;
                j -= 1;
            }
            Step::Vertical => i -= 1,
            Step::Horizontal => j -= 1,
        }
        path.push((i, j));
    }
    path.reverse();
    Ok(Warping { cost, path })
}

/// Identifies a donor series.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DonorId {
    pub person_id: String,
    pub set_id: u32,
}

/// A candidate reference series. `None` marks an unobserved element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Donor<F> {
    pub id: DonorId,
    pub start: i64,
    pub interval: i64,
    pub values: Vec<Option<F>>,
}

impl<F: Scalar> Donor<F> {
    pub fn complete(id: DonorId, start: i64, interval: i64, values: &[F]) -> Self {
        Self { id, start, interval, values: values.iter().map(|&v| Some(v)).collect() }
    }

    pub fn time_of(&self, j: usize) -> i64 {
        self.start + j as i64 * self.interval
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl From<&MetricSeries> for Donor<f64> {
    fn from(s: &MetricSeries) -> Self {
        Donor {
            id: DonorId { person_id: s.person_id.clone(), set_id: s.set_id },
            start: s.start,
            interval: s.interval,
            values: s.values.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonFilter {
    #[default]
    All,
    ExcludeSelf,
    OnlySelf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayMatch {
    #[default]
    Any,
    /// Weekday gaps take weekday donors, weekend gaps weekend donors.
    WeekdayWeekend,
}

/// Restriction parameters applied to a reference pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phi {
    pub persons: PersonFilter,
    /// Drop the series the query itself comes from.
    pub exclude_query_set: bool,
    /// Maximum time-of-day offset between query gap and donor placement.
    pub time_window: Option<i64>,
    pub day_match: DayMatch,
    /// Local time offset from UTC, for day-of-week decisions.
    pub utc_offset: i64,
}

impl Default for Phi {
    fn default() -> Self {
        Self {
            persons: PersonFilter::All,
            exclude_query_set: true,
            time_window: None,
            day_match: DayMatch::Any,
            utc_offset: 0,
        }
    }
}

impl Phi {
    pub fn unrestricted() -> Self {
        Self { exclude_query_set: false, ..Self::default() }
    }

    fn is_weekend(&self, t: i64) -> bool {
        // 1970-01-01 was a Thursday
        let day = (t + self.utc_offset).div_euclid(DAY_S);
        matches!((day + 3).rem_euclid(7), 5 | 6)
    }

    /// Whether a donor gap starting at `donor_gap_start` may stand in for a
    /// query gap starting at `query_gap_start`.
    pub fn permits_placement(&self, query_gap_start: i64, donor_gap_start: i64) -> bool {
        if let Some(w) = self.time_window {
            if time_of_day_offset(query_gap_start, donor_gap_start) > w {
                return false;
            }
        }
        match self.day_match {
            DayMatch::Any => true,
            DayMatch::WeekdayWeekend => self.is_weekend(query_gap_start) == self.is_weekend(donor_gap_start),
        }
    }

    /// Placements `p` (donor index of the artificial gap) with `pre_len`
    /// observed elements before, `gap_len` observed elements inside and
    /// `post_len` observed elements after, that the restrictions permit.
    pub fn feasible_placements<F>(
        &self,
        d: &Donor<F>,
        pre_len: usize,
        gap_len: usize,
        post_len: usize,
        query_gap_start: i64,
    ) -> Vec<usize> {
        let span = pre_len + gap_len + post_len;
        if d.values.len() < span {
            return Vec::new();
        }
        let mut missing_prefix = Vec::with_capacity(d.values.len() + 1);
        missing_prefix.push(0usize);
        for v in &d.values {
            missing_prefix.push(missing_prefix.last().unwrap() + usize::from(v.is_none()));
        }
        (pre_len..=d.values.len() - gap_len - post_len)
            .filter(|&p| {
                let (a, b) = (p - pre_len, p + gap_len + post_len);
                missing_prefix[b] == missing_prefix[a]
                    && self.permits_placement(query_gap_start, d.start + p as i64 * d.interval)
            })
            .collect()
    }
}

/// Who is asking: the query's owner and gap start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryContext {
    pub person_id: String,
    pub set_id: u32,
    pub gap_start: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCollection<F> {
    pub donors: Vec<Donor<F>>,
    pub restrictions: Phi,
}

impl<F: Scalar> ReferenceCollection<F> {
    pub fn new(donors: Vec<Donor<F>>) -> Self {
        Self { donors, restrictions: Phi::unrestricted() }
    }

    pub fn len(&self) -> usize {
        self.donors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.donors.is_empty()
    }

    pub fn feasible_placements(
        &self,
        donor: usize,
        pre_len: usize,
        gap_len: usize,
        post_len: usize,
        query_gap_start: i64,
    ) -> Vec<usize> {
        self.restrictions.feasible_placements(&self.donors[donor], pre_len, gap_len, post_len, query_gap_start)
    }
}

/// Filters a pool by person and stores the placement restrictions with it.
pub fn apply_phi<F: Scalar>(refs: &ReferenceCollection<F>, query: &QueryContext, phi: &Phi) -> ReferenceCollection<F> {
    let donors = refs
        .donors
        .iter()
        .filter(|d| {
            let own = d.id.person_id == query.person_id;
            let person_ok = match phi.persons {
                PersonFilter::All => true,
                PersonFilter::ExcludeSelf => !own,
                PersonFilter::OnlySelf => own,
            };
            person_ok && !(phi.exclude_query_set && own && d.id.set_id == query.set_id)
        })
        .cloned()
        .collect();
    ReferenceCollection { donors, restrictions: *phi }
}

/// How the query context is matched against a donor placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchingMode {
    /// `pre` and `post` aligned separately against their buffers; costs summed.
    #[default]
    SplitBuffers,
    /// The gap is replaced by one interpolated element on both sides and the
    /// whole window aligned at once.
    CollapsedGap,
}

/// Observed context around a query gap.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a, F> {
    pub pre: &'a [F],
    pub post: &'a [F],
    pub gap_len: usize,
    /// Wall-clock start of the first missing element.
    pub gap_start: i64,
    pub interval: i64,
}

impl<'a, F> Query<'a, F> {
    fn pre_timed(&self) -> Timed<'a, F> {
        Timed::new(self.pre, self.gap_start - self.pre.len() as i64 * self.interval, self.interval)
    }

    fn post_timed(&self) -> Timed<'a, F> {
        Timed::new(self.post, self.gap_start + self.gap_len as i64 * self.interval, self.interval)
    }
}

/// A donor's best placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult<F> {
    /// Index of the donor within the collection.
    pub donor: usize,
    pub donor_id: DonorId,
    /// Donor index (zero-based) of the first element of the artificial gap.
    pub gap_position: usize,
    pub dissimilarity: F,
    pub donor_gap_values: Vec<F>,
    /// Path for the `pre` buffer, or for the whole window in collapsed mode.
    pub pre_path: Vec<(usize, usize)>,
    pub post_path: Vec<(usize, usize)>,
}

fn lockstep_cost<F: Scalar>(q: &[F], r: &[F]) -> F {
    q.iter().zip(r).fold(F::zero(), |acc, (&a, &b)| (a - b).abs() + acc)
}

fn diagonal(n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|i| (i, i)).collect()
}

struct Placed<F> {
    cost: F,
    pre_path: Vec<(usize, usize)>,
    post_path: Vec<(usize, usize)>,
}

fn align_segment<F: Scalar>(
    q: Timed<'_, F>,
    r: Timed<'_, F>,
    c: &AlignmentConstraints,
    keep_path: bool,
) -> Option<(F, Vec<(usize, usize)>)> {
    if q.is_empty() {
        return Some((F::zero(), Vec::new()));
    }
    if c.is_lockstep() {
        // every pair shares the placement offset
        if let Some(w) = c.time_window {
            if time_of_day_offset(q.start, r.start) > w {
                return None;
            }
        }
        let path = if keep_path { diagonal(q.len()) } else { Vec::new() };
        return Some((lockstep_cost(q.values, r.values), path));
    }
    dtw_distance(q, r, c).ok().map(|w| (w.cost, w.path))
}

fn place<F: Scalar>(
    query: &Query<'_, F>,
    donor: &Donor<F>,
    p: usize,
    c: &AlignmentConstraints,
    mode: MatchingMode,
    keep_path: bool,
) -> Option<Placed<F>> {
    let (np, t, nq) = (query.pre.len(), query.gap_len, query.post.len());
    let vals: Vec<F> = donor.values[p - np..p + t + nq].iter().map(|v| v.unwrap()).collect();
    match mode {
        MatchingMode::SplitBuffers => {
            let rp = Timed::new(&vals[..np], donor.time_of(p - np), donor.interval);
            let rq = Timed::new(&vals[np + t..], donor.time_of(p + t), donor.interval);
            let (a, pre_path) = align_segment(query.pre_timed(), rp, c, keep_path)?;
            let (b, post_path) = align_segment(query.post_timed(), rq, c, keep_path)?;
            Some(Placed { cost: a + b, pre_path, post_path })
        }
        MatchingMode::CollapsedGap => {
            let collapse = |pre: &[F], post: &[F]| -> Vec<F> {
                let mid = match (pre.last(), post.first()) {
                    (Some(&a), Some(&b)) => (a + b) / F::two(),
                    (Some(&a), None) => a,
                    (None, Some(&b)) => b,
                    (None, None) => F::zero(),
                };
                pre.iter().copied().chain(std::iter::once(mid)).chain(post.iter().copied()).collect()
            };
            let qv = collapse(query.pre, query.post);
            let rv = collapse(&vals[..np], &vals[np + t..]);
            // the collapsed element sits at the gap start; the post side is
            // shifted by T - 1 intervals, which only matters for time windows,
            // so windows are checked against the original instants
            let qs = query.gap_start - np as i64 * query.interval;
            let rs = donor.time_of(p - np);
            if let Some(w) = c.time_window {
                if time_of_day_offset(qs, rs) > w {
                    return None;
                }
            }
            let c = AlignmentConstraints { time_window: None, ..*c };
            let (cost, path) = align_segment(Timed::new(&qv, qs, query.interval), Timed::new(&rv, rs, donor.interval), &c, keep_path)?;
            Some(Placed { cost, pre_path: path, post_path: Vec::new() })
        }
    }
}

/// Best placement per donor, in donor order. Donors without a feasible
/// placement are omitted. Ties between placements go to the earliest.
pub fn score_candidates<F: Scalar>(
    query: &Query<'_, F>,
    refs: &ReferenceCollection<F>,
    c: &AlignmentConstraints,
    mode: MatchingMode,
) -> Result<Vec<AlignmentResult<F>>> {
    score_donors(query, &refs.donors, &refs.restrictions, c, mode)
}

/// [`score_candidates`] over a borrowed donor slice and explicit restrictions.
pub fn score_donors<F: Scalar>(
    query: &Query<'_, F>,
    donors: &[Donor<F>],
    phi: &Phi,
    c: &AlignmentConstraints,
    mode: MatchingMode,
) -> Result<Vec<AlignmentResult<F>>> {
    if donors.is_empty() {
        return Err(Error::EmptyReferences);
    }
    if query.pre.is_empty() && query.post.is_empty() {
        return Err(Error::InvalidInput("query has no observed context".into()));
    }
    let results: Vec<Option<AlignmentResult<F>>> = donors
        .par_iter()
        .enumerate()
        .map(|(k, donor)| {
            if donor.interval != query.interval {
                return None;
            }
            let mut best: Option<(usize, F)> = None;
            for p in phi.feasible_placements(donor, query.pre.len(), query.gap_len, query.post.len(), query.gap_start) {
                if let Some(placed) = place(query, donor, p, c, mode, false) {
                    if best.is_none_or(|(_, b)| placed.cost < b) {
                        best = Some((p, placed.cost));
                    }
                }
            }
            let (p, _) = best?;
            let placed = place(query, donor, p, c, mode, true)?;
            Some(AlignmentResult {
                donor: k,
                donor_id: donor.id.clone(),
                gap_position: p,
                dissimilarity: placed.cost,
                donor_gap_values: donor.values[p..p + query.gap_len].iter().map(|v| v.unwrap()).collect(),
                pre_path: placed.pre_path,
                post_path: placed.post_path,
            })
        })
        .collect();
    Ok(results.into_iter().flatten().collect())
}

/// Dumps alignment results as JSON lines.
pub fn write_alignment_trace<F: Serialize, W: Write>(mut w: W, results: &[AlignmentResult<F>]) -> Result<()> {
    for r in results {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    fn q(values: &[f64]) -> Timed<'_, f64> {
        Timed::untimed(values)
    }

    #[test]
    fn cost_matrix_examples() {
        assert_eq!(cost_matrix(&[1.0], &[1.0]).unwrap(), vec![vec![0.0]]);
        assert_eq!(cost_matrix(&[2.5], &[2.0, 5.0]).unwrap(), vec![vec![0.5, 2.5]]);
        assert!(cost_matrix::<f64>(&[], &[1.0]).is_err());
    }

    #[test]
    fn identical_series_have_zero_cost_and_diagonal_path() {
        let x = [1.0, 3.0, 2.0, 0.5];
        for c in [
            AlignmentConstraints::default(),
            AlignmentConstraints::one_to_one(),
            AlignmentConstraints { sakoe_chiba: Some(1), ..Default::default() },
            AlignmentConstraints { open_begin_end: true, ..Default::default() },
        ] {
            let w = dtw_distance(q(&x), q(&x), &c).unwrap();
            assert_eq!(w.cost, 0.0);
            assert_eq!(w.path, diagonal(4), "{c:?}");
        }
    }

    #[test]
    fn worked_window_one_to_one() {
        let w = dtw_distance(q(&[2.5, 0.001, 0.0014]), q(&[2.0, 0.0, 2.0]), &AlignmentConstraints::one_to_one()).unwrap();
        assert!((w.cost - 2.4996).abs() < 1e-12);
    }

    #[test]
    fn warping_beats_lockstep() {
        let a = [0.0, 1.0, 2.0, 2.0];
        let b = [0.0, 0.0, 1.0, 2.0];
        let free = dtw_distance(q(&a), q(&b), &Default::default()).unwrap();
        assert_eq!(free.cost, 0.0);
        assert_eq!(free.path.first(), Some(&(0, 0)));
        assert_eq!(free.path.last(), Some(&(3, 3)));
        let lock = dtw_distance(q(&a), q(&b), &AlignmentConstraints::one_to_one()).unwrap();
        assert_eq!(lock.cost, 2.0);
    }

    #[test]
    fn open_ended_subsequence() {
        let c = AlignmentConstraints { open_begin_end: true, one_to_one: true, ..Default::default() };
        let w = dtw_distance(q(&[5.0, 0.0]), q(&[2.0, 5.0, 0.0, 2.0]), &c).unwrap();
        assert_eq!(w.cost, 0.0);
        assert_eq!(w.path, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn infeasible_constraints_are_errors() {
        let c = AlignmentConstraints { sakoe_chiba: Some(0), ..Default::default() };
        assert!(matches!(dtw_distance(q(&[1.0, 2.0]), q(&[1.0, 2.0, 3.0]), &c), Err(Error::Infeasible(_))));
        assert!(matches!(
            dtw_distance(q(&[1.0, 2.0]), q(&[1.0]), &AlignmentConstraints::one_to_one()),
            Err(Error::InvalidInput(_))
        ));
        let c = AlignmentConstraints { time_window: Some(600), ..Default::default() };
        let a = [1.0, 2.0];
        let r = dtw_distance(Timed::new(&a, 0, 900), Timed::new(&a, 3 * 3600, 900), &c);
        assert!(matches!(r, Err(Error::Infeasible(_))));
        assert!(dtw_distance::<f64>(q(&[]), q(&[1.0]), &c).is_err());
    }

    #[test]
    fn time_window_paths_respect_bound() {
        let a = [0.0, 1.0, 4.0, 1.0, 0.0, 2.0];
        let b = [1.0, 4.0, 1.0, 0.0, 0.0, 2.0, 3.0];
        let c = AlignmentConstraints { time_window: Some(1800), ..Default::default() };
        let qa = Timed::new(&a, 8 * 3600, 900);
        let rb = Timed::new(&b, 8 * 3600 - 900, 900);
        let w = dtw_distance(qa, rb, &c).unwrap();
        for &(i, j) in &w.path {
            assert!(time_of_day_offset(qa.time_of(i), rb.time_of(j)) <= 1800);
        }
    }

    #[test]
    fn time_of_day_offset_wraps() {
        assert_eq!(time_of_day_offset(23 * 3600, 3600), 2 * 3600);
        assert_eq!(time_of_day_offset(DAY_S + 100, 0), 100);
        assert_eq!(time_of_day_offset(0, 12 * 3600), 12 * 3600);
    }

    fn worked_refs<F: Scalar>(conv: impl Fn(f64) -> F) -> ReferenceCollection<F> {
        let mk = |name: &str, v: &[f64]| {
            let vals: Vec<F> = v.iter().map(|&x| conv(x)).collect();
            Donor::complete(DonorId { person_id: name.into(), set_id: 0 }, 0, 900, &vals)
        };
        ReferenceCollection::new(vec![
            mk("rho1", &[2.0, 5.0, 0.0, 2.0, 5.0]),
            mk("rho2", &[0.0, 0.0, 0.0, 1.0]),
            mk("rho3", &[1.0, 0.0, 2.0]),
        ])
    }

    #[test]
    fn worked_example_in_f64() {
        let refs = worked_refs(|x| x);
        let query = Query { pre: &[2.5], post: &[0.001, 0.0014], gap_len: 1, gap_start: 900, interval: 900 };
        let res = score_candidates(&query, &refs, &AlignmentConstraints::one_to_one(), MatchingMode::SplitBuffers).unwrap();
        assert_eq!(res.len(), 2);
        assert_eq!(res[0].donor_id.person_id, "rho1");
        assert_eq!(res[0].gap_position, 1);
        assert!((res[0].dissimilarity - 2.4996).abs() < 1e-12);
        assert_eq!(res[0].donor_gap_values, vec![5.0]);
        assert_eq!(res[1].donor_id.person_id, "rho2");
        assert!((res[1].dissimilarity - 3.4996).abs() < 1e-12);
        assert_eq!(res[1].donor_gap_values, vec![0.0]);
    }

    #[test]
    fn worked_example_exact_rational() {
        let r = |x: f64| Ratio::<i64>::new((x * 10_000.0).round() as i64, 10_000);
        let refs = worked_refs(r);
        let pre = [r(2.5)];
        let post = [r(0.001), r(0.0014)];
        let query = Query { pre: &pre, post: &post, gap_len: 1, gap_start: 900, interval: 900 };
        let res = score_candidates(&query, &refs, &AlignmentConstraints::one_to_one(), MatchingMode::SplitBuffers).unwrap();
        assert_eq!(res[0].dissimilarity, Ratio::new(24_996, 10_000));
        assert_eq!(res[1].dissimilarity, Ratio::new(34_996, 10_000));
        // the other rho1 placement is 9.4976
        let d = &refs.donors[0];
        let alt = place(&query, d, 2, &AlignmentConstraints::one_to_one(), MatchingMode::SplitBuffers, false).unwrap();
        assert_eq!(alt.cost, Ratio::new(94_976, 10_000));
    }

    #[test]
    fn empty_pool_differs_from_no_placement() {
        let query = Query { pre: &[1.0], post: &[1.0], gap_len: 5, gap_start: 0, interval: 900 };
        let empty = ReferenceCollection::<f64>::new(vec![]);
        assert!(matches!(
            score_candidates(&query, &empty, &AlignmentConstraints::one_to_one(), MatchingMode::SplitBuffers),
            Err(Error::EmptyReferences)
        ));
        let res = score_candidates(&query, &worked_refs(|x| x), &AlignmentConstraints::one_to_one(), MatchingMode::SplitBuffers)
            .unwrap();
        assert!(res.is_empty());
    }

    #[test]
    fn partially_observed_donor_windows_are_skipped() {
        let donor = Donor {
            id: DonorId { person_id: "d".into(), set_id: 0 },
            start: 0,
            interval: 900,
            values: vec![Some(2.0), Some(5.0), None, Some(2.0), Some(5.0), Some(0.0)],
        };
        let refs = ReferenceCollection::new(vec![donor]);
        assert_eq!(refs.feasible_placements(0, 1, 1, 1, 0), vec![4]);
    }

    #[test]
    fn collapsed_gap_mode() {
        let refs = worked_refs(|x| x);
        let query = Query { pre: &[2.5], post: &[0.001, 0.0014], gap_len: 1, gap_start: 900, interval: 900 };
        let res = score_candidates(&query, &refs, &AlignmentConstraints::one_to_one(), MatchingMode::CollapsedGap).unwrap();
        // query window {2.5, 1.2505, .001, .0014} vs rho1 {2, 1, 0, 2}
        let expect = 0.5 + (1.2505f64 - 1.0).abs() + 0.001 + (0.0014f64 - 2.0).abs();
        assert!((res[0].dissimilarity - expect).abs() < 1e-12);
        assert_eq!(res[0].gap_position, 1);
    }

    fn pool_for_phi() -> ReferenceCollection<f64> {
        let mk = |p: &str, s: u32| Donor::complete(DonorId { person_id: p.into(), set_id: s }, 0, 3600, &[1.0; 24]);
        ReferenceCollection::new(vec![mk("me", 0), mk("me", 1), mk("you", 0)])
    }

    #[test]
    fn phi_person_filters() {
        let pool = pool_for_phi();
        let ctx = QueryContext { person_id: "me".into(), set_id: 0, gap_start: 0 };
        let ids = |r: &ReferenceCollection<f64>| r.donors.iter().map(|d| (d.id.person_id.clone(), d.id.set_id)).collect::<Vec<_>>();
        assert_eq!(ids(&apply_phi(&pool, &ctx, &Phi::unrestricted())), ids(&pool));
        let ex = Phi { persons: PersonFilter::ExcludeSelf, ..Phi::default() };
        assert_eq!(ids(&apply_phi(&pool, &ctx, &ex)), vec![("you".to_string(), 0)]);
        let only = Phi { persons: PersonFilter::OnlySelf, ..Phi::default() };
        assert_eq!(ids(&apply_phi(&pool, &ctx, &only)), vec![("me".to_string(), 1)]);
        let self_only = ReferenceCollection::new(vec![pool.donors[0].clone()]);
        assert!(apply_phi(&self_only, &ctx, &ex).is_empty());
    }

    #[test]
    fn phi_time_window_filters_placements() {
        let pool = pool_for_phi();
        let gap_start = 10 * 3600;
        let ctx = QueryContext { person_id: "me".into(), set_id: 0, gap_start };
        let phi = Phi { time_window: Some(3 * 3600), ..Phi::default() };
        let refs = apply_phi(&pool, &ctx, &phi);
        let all: Vec<usize> = (0..24).collect();
        let got = refs.feasible_placements(0, 0, 1, 0, gap_start);
        // offset oracle: hourly placements within 3 h of 10:00
        let expect: Vec<usize> =
            all.iter().copied().filter(|&p| (p as i64 * 3600 - gap_start).abs() <= 3 * 3600).collect();
        assert_eq!(got, expect);
        assert_eq!(got, vec![7, 8, 9, 10, 11, 12, 13]);
    }

    #[test]
    fn phi_weekday_weekend() {
        // 2018-11-03 is a Saturday, 2018-11-05 a Monday
        let sat = 1_541_203_200;
        let mon = 1_541_376_000;
        let phi = Phi { day_match: DayMatch::WeekdayWeekend, ..Phi::default() };
        assert!(phi.permits_placement(sat, sat + DAY_S));
        assert!(!phi.permits_placement(sat, mon));
        assert!(phi.permits_placement(mon, mon + DAY_S));
    }

    #[test]
    fn trace_is_json_lines() {
        let refs = worked_refs(|x| x);
        let query = Query { pre: &[2.5], post: &[0.001, 0.0014], gap_len: 1, gap_start: 900, interval: 900 };
        let res = score_candidates(&query, &refs, &AlignmentConstraints::one_to_one(), MatchingMode::SplitBuffers).unwrap();
        let mut buf = Vec::new();
        write_alignment_trace(&mut buf, &res).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }

    proptest! {
        #[test]
        fn symmetric_and_zero_on_self(
            a in proptest::collection::vec(0.0f64..10.0, 1..8),
            b in proptest::collection::vec(0.0f64..10.0, 1..8),
        ) {
            let c = AlignmentConstraints::default();
            prop_assert_eq!(dtw_distance(q(&a), q(&a), &c).unwrap().cost, 0.0);
            if a.len() == b.len() {
                let ab = dtw_distance(q(&a), q(&b), &c).unwrap().cost;
                let ba = dtw_distance(q(&b), q(&a), &c).unwrap().cost;
                prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
            }
        }

        #[test]
        fn tightening_never_decreases_cost(
            a in proptest::collection::vec(0.0f64..10.0, 1..9),
            b in proptest::collection::vec(0.0f64..10.0, 1..9),
            w in 0usize..4,
        ) {
            let free = dtw_distance(q(&a), q(&b), &AlignmentConstraints::default()).unwrap().cost;
            let banded = AlignmentConstraints { sakoe_chiba: Some(w), ..Default::default() };
            if let Ok(r) = dtw_distance(q(&a), q(&b), &banded) {
                prop_assert!(r.cost >= free);
            }
        }
    }
}
