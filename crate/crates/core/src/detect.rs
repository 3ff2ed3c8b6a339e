//! Windowing, per-miner run tests and FDR control.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, TimeZone, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runstat::{self, DomainError};

const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("block heights are not strictly increasing: height {height} follows {previous}")]
    Unsorted { height: u64, previous: u64 },
    #[error("p-value {0} is outside [0, 1]")]
    PValue(f64),
    #[error("bin edges must be strictly increasing within [0, 1]")]
    BinEdges,
    #[error("window {window} has T = {len} < 2 blocks and cannot be tested")]
    WindowTooShort { window: usize, len: usize },
    #[error("FDR level {0} is outside (0, 1]")]
    Fdr(f64),
    #[error("invalid window policy '{0}'")]
    Policy(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub height: u64,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    /// Label the tests run on: pool name when known, otherwise the miner address.
    pub miner: String,
    /// Raw miner address when the label came from a pool column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<String>,
}

impl BlockRecord {
    pub fn new(height: u64, timestamp: i64, miner: impl Into<String>) -> Self {
        Self {
            height,
            timestamp,
            miner: miner.into(),
            address: None,
        }
    }
}

/// How a block stream is cut into testing windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowPolicy {
    /// Calendar months, boundaries at the 1st 00:00:00 UTC.
    Monthly,
    /// ISO weeks, boundaries at Monday 00:00:00 UTC.
    Weekly,
    /// Consecutive `n`-day buckets counted from the Unix epoch. `Days(1)` is daily.
    Days(u32),
    /// Consecutive buckets of `n` blocks; the last one may be shorter.
    FixedCount(usize),
}

impl WindowPolicy {
    /// Default interval per coin ticker; unknown coins fall back to monthly.
    pub fn for_coin(coin: &str) -> Self {
        match coin.to_ascii_lowercase().as_str() {
            "btc" | "bitcoin" | "bch" | "bitcoin-cash" => WindowPolicy::Monthly,
            "ltc" | "litecoin" => WindowPolicy::Weekly,
            "mona" | "monacoin" => WindowPolicy::Days(5),
            "eth" | "ethereum" => WindowPolicy::Days(1),
            _ => WindowPolicy::Monthly,
        }
    }

    fn bucket(&self, timestamp: i64) -> i64 {
        let day = timestamp.div_euclid(SECONDS_PER_DAY);
        match *self {
            WindowPolicy::Monthly => {
                let dt = utc(timestamp);
                i64::from(dt.year()) * 12 + i64::from(dt.month0())
            }
            // 1970-01-01 was a Thursday; shift so buckets start on Monday.
            WindowPolicy::Weekly => (day + 3).div_euclid(7),
            WindowPolicy::Days(n) => day.div_euclid(i64::from(n)),
            WindowPolicy::FixedCount(_) => unreachable!("count policy has no calendar bucket"),
        }
    }

    /// `[start, end)` in epoch seconds for a calendar bucket.
    fn bucket_bounds(&self, bucket: i64) -> (i64, i64) {
        match *self {
            WindowPolicy::Monthly => {
                let start = month_start(bucket);
                (start, month_start(bucket + 1))
            }
            WindowPolicy::Weekly => {
                let start = (bucket * 7 - 3) * SECONDS_PER_DAY;
                (start, start + 7 * SECONDS_PER_DAY)
            }
            WindowPolicy::Days(n) => {
                let width = i64::from(n) * SECONDS_PER_DAY;
                (bucket * width, (bucket + 1) * width)
            }
            WindowPolicy::FixedCount(_) => unreachable!("count policy has no calendar bucket"),
        }
    }
}

fn utc(timestamp: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(timestamp, 0)
        .single()
        .unwrap_or(DateTime::<Utc>::MIN_UTC)
}

fn month_start(bucket: i64) -> i64 {
    let year = bucket.div_euclid(12) as i32;
    let month = bucket.rem_euclid(12) as u32 + 1;
    NaiveDate::from_ymd_opt(year, month, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
        .unwrap_or_default()
}

impl fmt::Display for WindowPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowPolicy::Monthly => write!(f, "monthly"),
            WindowPolicy::Weekly => write!(f, "weekly"),
            WindowPolicy::Days(1) => write!(f, "daily"),
            WindowPolicy::Days(n) => write!(f, "days:{n}"),
            WindowPolicy::FixedCount(n) => write!(f, "count:{n}"),
        }
    }
}

impl FromStr for WindowPolicy {
    type Err = DetectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DetectError::Policy(s.to_string());
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "monthly" => return Ok(WindowPolicy::Monthly),
            "weekly" => return Ok(WindowPolicy::Weekly),
            "daily" => return Ok(WindowPolicy::Days(1)),
            _ => {}
        }
        let (kind, n) = lower.split_once(':').ok_or_else(bad)?;
        let n: usize = n.parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        match kind {
            "days" => Ok(WindowPolicy::Days(u32::try_from(n).map_err(|_| bad())?)),
            "count" => Ok(WindowPolicy::FixedCount(n)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowSpan {
    /// `[start, end)` in epoch seconds.
    Calendar { start: i64, end: i64 },
    /// `[start, end)` as positions in the input stream.
    Count { start: usize, end: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub id: usize,
    pub coin: String,
    pub span: WindowSpan,
    pub first_height: u64,
    pub last_height: u64,
    pub sequence: Vec<String>,
}

impl Window {
    /// Builds a window directly from a label sequence (heights are positions).
    pub fn from_labels<S: Into<String>>(id: usize, labels: impl IntoIterator<Item = S>) -> Self {
        let sequence: Vec<String> = labels.into_iter().map(Into::into).collect();
        let len = sequence.len();
        Self {
            id,
            coin: String::new(),
            span: WindowSpan::Count { start: 0, end: len },
            first_height: 0,
            last_height: len.saturating_sub(1) as u64,
            sequence,
        }
    }

    /// Number of blocks, `T`.
    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    /// Blocks and overlapping same-miner adjacencies per miner, in label order.
    pub fn tally(&self) -> BTreeMap<&str, MinerTally> {
        let mut out: BTreeMap<&str, MinerTally> = BTreeMap::new();
        let mut prev: Option<&str> = None;
        for label in &self.sequence {
            let entry = out.entry(label.as_str()).or_default();
            entry.blocks += 1;
            if prev == Some(label.as_str()) {
                entry.runs += 1;
            }
            prev = Some(label.as_str());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MinerTally {
    pub blocks: usize,
    pub runs: usize,
}

/// Cuts an ordered block stream into windows.
///
/// Calendar buckets follow the running maximum timestamp, so a block whose
/// timestamp jitters backwards across a boundary stays in the current window
/// and windows remain contiguous in height.
pub fn split_windows(
    blocks: &[BlockRecord],
    policy: WindowPolicy,
    coin: &str,
) -> Result<Vec<Window>, DetectError> {
    for pair in blocks.windows(2) {
        if pair[1].height <= pair[0].height {
            return Err(DetectError::Unsorted {
                height: pair[1].height,
                previous: pair[0].height,
            });
        }
    }

    let make = |id: usize, span: WindowSpan, chunk: &[BlockRecord]| Window {
        id,
        coin: coin.to_string(),
        span,
        first_height: chunk[0].height,
        last_height: chunk[chunk.len() - 1].height,
        sequence: chunk.iter().map(|b| b.miner.clone()).collect(),
    };

    if let WindowPolicy::FixedCount(n) = policy {
        let n = n.max(1);
        return Ok(blocks
            .chunks(n)
            .enumerate()
            .map(|(id, chunk)| {
                let start = id * n;
                make(
                    id,
                    WindowSpan::Count {
                        start,
                        end: start + chunk.len(),
                    },
                    chunk,
                )
            })
            .collect());
    }

    let mut windows = Vec::new();
    let mut start = 0;
    let mut current: Option<i64> = None;
    let mut high_water = i64::MIN;
    for (i, block) in blocks.iter().enumerate() {
        high_water = high_water.max(block.timestamp);
        let bucket = policy.bucket(high_water);
        match current {
            Some(b) if b == bucket => {}
            Some(b) => {
                let (s, e) = policy.bucket_bounds(b);
                windows.push(make(
                    windows.len(),
                    WindowSpan::Calendar { start: s, end: e },
                    &blocks[start..i],
                ));
                start = i;
                current = Some(bucket);
            }
            None => current = Some(bucket),
        }
    }
    if let Some(b) = current {
        let (s, e) = policy.bucket_bounds(b);
        windows.push(make(
            windows.len(),
            WindowSpan::Calendar { start: s, end: e },
            &blocks[start..],
        ));
    }
    Ok(windows)
}

/// Overlapping count of adjacent positions both mined by `miner`.
pub fn count_runs(window: &Window, miner: &str) -> usize {
    runstat::count_adjacent_successes(window.sequence.iter().map(|m| m == miner))
}

/// Share of the window's blocks mined by `miner`; zero when absent.
pub fn estimate_power(window: &Window, miner: &str) -> f64 {
    if window.is_empty() {
        return 0.0;
    }
    let mined = window.sequence.iter().filter(|m| *m == miner).count();
    mined as f64 / window.len() as f64
}

fn check_pvalues(pvalues: &[f64]) -> Result<(), DetectError> {
    match pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        Some(&bad) => Err(DetectError::PValue(bad)),
        None => Ok(()),
    }
}

/// Benjamini-Hochberg step-up adjusted p-values, in input order.
pub fn bh_adjust(pvalues: &[f64]) -> Result<Vec<f64>, DetectError> {
    check_pvalues(pvalues)?;
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0_f64;
    for (rank0, &idx) in order.iter().enumerate().rev() {
        // m/k >= 1 exactly, so the rounded product never drops below p.
        let raw = pvalues[idx] * (m as f64 / (rank0 + 1) as f64);
        running = running.min(raw);
        adjusted[idx] = running.min(1.0);
    }
    Ok(adjusted)
}

/// `p_(k) * m / k` without the monotone step-up or the cap at 1.
///
/// Debug aid only; the detection pipeline uses [`bh_adjust`].
pub fn bh_raw(pvalues: &[f64]) -> Result<Vec<f64>, DetectError> {
    check_pvalues(pvalues)?;
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; m];
    for (rank0, &idx) in order.iter().enumerate() {
        out[idx] = pvalues[idx] * (m as f64 / (rank0 + 1) as f64);
    }
    Ok(out)
}

/// Number of hypotheses rejected at `level`: the largest `k` whose adjusted
/// value is below the level.
pub fn bh_rejections(adjusted: &[f64], level: f64) -> usize {
    adjusted.iter().filter(|&&p| p < level).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Family {
    /// Each window is one correction family.
    #[default]
    Window,
    /// All miner-window tests of the run form a single family.
    Global,
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "window" => Ok(Family::Window),
            "global" => Ok(Family::Global),
            other => Err(format!("unknown family '{other}' (expected window|global)")),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Window => "window",
            Family::Global => "global",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerWindowResult {
    pub miner: String,
    pub window: usize,
    pub blocks: usize,
    pub h_hat: f64,
    pub c: usize,
    pub p: f64,
    pub p_adj: f64,
    pub flagged: bool,
}

fn check_fdr(fdr: f64) -> Result<(), DetectError> {
    if fdr > 0.0 && fdr <= 1.0 {
        Ok(())
    } else {
        Err(DetectError::Fdr(fdr))
    }
}

/// Raw per-miner tests for one window, before any correction.
fn raw_tests(window: &Window) -> Result<Vec<MinerWindowResult>, DetectError> {
    let len = window.len();
    if len < 2 {
        return Err(DetectError::WindowTooShort {
            window: window.id,
            len,
        });
    }
    window
        .tally()
        .into_iter()
        .map(|(miner, tally)| {
            let h_hat = tally.blocks as f64 / len as f64;
            let p = runstat::p_value(h_hat, len, tally.runs)?;
            Ok(MinerWindowResult {
                miner: miner.to_string(),
                window: window.id,
                blocks: tally.blocks,
                h_hat,
                c: tally.runs,
                p,
                p_adj: p,
                flagged: false,
            })
        })
        .collect()
}

fn apply_adjustment(results: &mut [MinerWindowResult], fdr: f64) -> Result<(), DetectError> {
    let raw: Vec<f64> = results.iter().map(|r| r.p).collect();
    let adjusted = bh_adjust(&raw)?;
    for (r, p_adj) in results.iter_mut().zip(adjusted) {
        r.p_adj = p_adj;
        r.flagged = p_adj < fdr;
    }
    Ok(())
}

/// Tests every miner active in `window`, correcting within the window.
pub fn test_window(window: &Window, fdr: f64) -> Result<Vec<MinerWindowResult>, DetectError> {
    check_fdr(fdr)?;
    let mut results = raw_tests(window)?;
    apply_adjustment(&mut results, fdr)?;
    Ok(results)
}

/// Outcome of testing a sequence of windows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionRun {
    /// Ordered by (window id, miner label).
    pub results: Vec<MinerWindowResult>,
    /// Windows that could not be tested.
    pub skipped: Vec<DetectError>,
}

/// Tests all windows in parallel and merges deterministically.
pub fn test_windows(
    windows: &[Window],
    fdr: f64,
    family: Family,
) -> Result<DetectionRun, DetectError> {
    check_fdr(fdr)?;
    let per_window: Vec<Result<Vec<MinerWindowResult>, DetectError>> =
        windows.par_iter().map(raw_tests).collect();

    let mut run = DetectionRun::default();
    let mut groups = Vec::new();
    for outcome in per_window {
        match outcome {
            Ok(results) => groups.push(results),
            Err(e @ DetectError::WindowTooShort { .. }) => run.skipped.push(e),
            Err(e) => return Err(e),
        }
    }
    match family {
        Family::Window => {
            for mut group in groups {
                apply_adjustment(&mut group, fdr)?;
                run.results.extend(group);
            }
        }
        Family::Global => {
            run.results = groups.into_iter().flatten().collect();
            apply_adjustment(&mut run.results, fdr)?;
        }
    }
    Ok(run)
}

/// Linear interpolation between order statistics (`(n-1) q` positions).
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerSummary {
    pub miner: String,
    pub active_windows: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Share of active windows with `p_adj < level`.
    pub flagged_fraction: f64,
}

impl MinerSummary {
    pub fn quantile_for(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::Min => self.min,
            Criterion::Quarter => self.q1,
            Criterion::Half => self.median,
            Criterion::ThreeQuarters => self.q3,
            Criterion::Max => self.max,
        }
    }

    /// Quantile reading: the criterion's quantile of `p_adj` is below `level`.
    pub fn meets(&self, criterion: Criterion, level: f64) -> bool {
        self.quantile_for(criterion) < level
    }
}

/// Per-miner p_adj quantiles over active windows, ordered by label.
pub fn summarize_miners(results: &[MinerWindowResult], level: f64) -> Vec<MinerSummary> {
    let mut by_miner: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in results {
        by_miner.entry(&r.miner).or_default().push(r.p_adj);
    }
    by_miner
        .into_iter()
        .map(|(miner, mut ps)| {
            ps.sort_by(f64::total_cmp);
            let q = |x| quantile(&ps, x).unwrap_or(1.0);
            let flagged = ps.iter().filter(|&&p| p < level).count();
            MinerSummary {
                miner: miner.to_string(),
                active_windows: ps.len(),
                min: q(0.0),
                q1: q(0.25),
                median: q(0.5),
                q3: q(0.75),
                max: q(1.0),
                flagged_fraction: flagged as f64 / ps.len() as f64,
            }
        })
        .collect()
}

/// Bars of the abnormal-miner summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    Min,
    Quarter,
    Half,
    ThreeQuarters,
    Max,
}

impl Criterion {
    pub const ALL: [Criterion; 5] = [
        Criterion::Min,
        Criterion::Quarter,
        Criterion::Half,
        Criterion::ThreeQuarters,
        Criterion::Max,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Criterion::Min => "min",
            Criterion::Quarter => "q25",
            Criterion::Half => "q50",
            Criterion::ThreeQuarters => "q75",
            Criterion::Max => "max",
        }
    }

    /// Flagged-window share required under the fraction reading.
    fn share(&self) -> f64 {
        match self {
            Criterion::Min => f64::MIN_POSITIVE,
            Criterion::Quarter => 0.25,
            Criterion::Half => 0.5,
            Criterion::ThreeQuarters => 0.75,
            Criterion::Max => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionBar {
    pub criterion: Criterion,
    pub miners: usize,
    /// Share of miners whose p_adj quantile is below the level.
    pub quantile_share: f64,
    /// Share of miners flagged in at least the criterion's share of windows.
    pub fraction_share: f64,
}

pub fn criterion_bars(summaries: &[MinerSummary], level: f64) -> Vec<CriterionBar> {
    let n = summaries.len();
    let share = |count: usize| if n == 0 { 0.0 } else { count as f64 / n as f64 };
    Criterion::ALL
        .iter()
        .map(|&criterion| {
            let by_quantile = summaries.iter().filter(|s| s.meets(criterion, level)).count();
            let by_fraction = summaries
                .iter()
                .filter(|s| s.flagged_fraction >= criterion.share())
                .count();
            CriterionBar {
                criterion,
                miners: n,
                quantile_share: share(by_quantile),
                fraction_share: share(by_fraction),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerBucketStat {
    pub lower: f64,
    pub upper: f64,
    pub observations: usize,
    /// `None` for an empty bucket.
    pub abnormal_fraction: Option<f64>,
}

/// Groups miner-window observations by `h_hat` into `[e_i, e_{i+1})`.
///
/// When the last edge is exactly 1 the last bucket also takes `h_hat = 1`.
pub fn power_profile(
    results: &[MinerWindowResult],
    edges: &[f64],
) -> Result<Vec<PowerBucketStat>, DetectError> {
    let valid = edges.len() >= 2
        && edges.iter().all(|e| (0.0..=1.0).contains(e))
        && edges.windows(2).all(|w| w[0] < w[1]);
    if !valid {
        return Err(DetectError::BinEdges);
    }
    let bins = edges.len() - 1;
    let mut counts = vec![(0usize, 0usize); bins];
    for r in results {
        let slot = edges.partition_point(|&e| e <= r.h_hat);
        let idx = if slot == 0 {
            continue;
        } else if slot <= bins {
            slot - 1
        } else if r.h_hat == edges[bins] && edges[bins] == 1.0 {
            bins - 1
        } else {
            continue;
        };
        counts[idx].0 += 1;
        if r.flagged {
            counts[idx].1 += 1;
        }
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, (obs, flagged))| PowerBucketStat {
            lower: edges[i],
            upper: edges[i + 1],
            observations: obs,
            abnormal_fraction: (obs > 0).then(|| flagged as f64 / obs as f64),
        })
        .collect())
}

/// Tested and flagged miner counts per window id.
pub fn flag_counts(results: &[MinerWindowResult]) -> BTreeMap<usize, (usize, usize)> {
    let mut out: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in results {
        let entry = out.entry(r.window).or_default();
        entry.0 += 1;
        if r.flagged {
            entry.1 += 1;
        }
    }
    out
}
