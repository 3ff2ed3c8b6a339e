//! Exact distribution of the overlapping success-run count of order two.
//!
//! For a Bernoulli(h) sequence of length `T`, the statistic `c` counts the
//! adjacent index pairs `(t, t+1)` where both trials succeed. A streak of `L`
//! successes therefore contributes `L - 1`. Two structurally independent
//! evaluators are provided:
//!
//! * [`LingRecursion`] evaluates the first-failure recursion for the type II
//!   binomial distribution of order 2 (closed forms at `x = T-1` and
//!   `x = T-2`, a sum over the position of the first failure otherwise).
//! * [`pmf_chain`] walks the sequence position by position, tracking the run
//!   count so far and the last outcome.
//!
//! [`enumerate_bruteforce`] sums all `2^T` outcome sequences and is kept for
//! small `T` as the exhaustive oracle. [`sample_runcount`] draws seeded Monte
//! Carlo replicates.
//!
//! All probabilities are held in linear space. Tail sums use compensated
//! summation so that `p_value` is accurate to well below `1e-12` at the
//! sequence lengths used in detection (a few thousand blocks).

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Largest sequence length accepted by [`enumerate_bruteforce`].
pub const BRUTEFORCE_MAX_LEN: usize = 20;

/// Below this tail probability `p_value` sums the upper tail directly.
pub const FAR_TAIL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("success probability h = {0} is outside [0, 1]")]
    Probability(f64),
    #[error("run count x = {x} is outside 0..={max} for sequence length {len}")]
    Count { x: usize, max: usize, len: usize },
    #[error("significance level {0} is outside (0, 1)")]
    Significance(f64),
    #[error("sequence length {len} exceeds the exhaustive enumeration capacity of {max}")]
    Capacity { len: usize, max: usize },
    #[error("trial count must be at least 1")]
    NoTrials,
}

fn check_probability(h: f64) -> Result<(), DomainError> {
    if (0.0..=1.0).contains(&h) {
        Ok(())
    } else {
        Err(DomainError::Probability(h))
    }
}

/// Largest attainable run count for a sequence of `len` trials.
pub fn max_count(len: usize) -> usize {
    len.saturating_sub(1)
}

fn check_count(len: usize, x: usize) -> Result<(), DomainError> {
    let max = max_count(len);
    if x <= max {
        Ok(())
    } else {
        Err(DomainError::Count { x, max, len })
    }
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.carry += (self.sum - t) + value;
        } else {
            self.carry += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Observed statistic for one tested sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestStatistic {
    pub c: usize,
    pub len: usize,
    pub h: f64,
}

impl TestStatistic {
    /// Counts overlapping adjacent success pairs in `outcomes`.
    pub fn from_outcomes(outcomes: &[bool], h: f64) -> Self {
        Self {
            c: count_adjacent_successes(outcomes.iter().copied()),
            len: outcomes.len(),
            h,
        }
    }

    pub fn p_value(&self) -> Result<f64, DomainError> {
        p_value(self.h, self.len, self.c)
    }
}

/// Number of adjacent `(true, true)` pairs in the sequence.
pub fn count_adjacent_successes<I: IntoIterator<Item = bool>>(outcomes: I) -> usize {
    let mut prev = false;
    let mut runs = 0;
    for cur in outcomes {
        if prev && cur {
            runs += 1;
        }
        prev = cur;
    }
    runs
}

/// Probability table of the run count for fixed `(h, T)`.
///
/// Immutable once built. `pmf()[x]` is `P(c = x)` for `x` in `0..=max(T-1, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunCountDistribution {
    h: f64,
    len: usize,
    pmf: Vec<f64>,
}

impl RunCountDistribution {
    pub(crate) fn from_parts(h: f64, len: usize, pmf: Vec<f64>) -> Self {
        debug_assert_eq!(pmf.len(), max_count(len) + 1);
        Self { h, len, pmf }
    }

    /// Rebuilds a table from stored values, checking shape and normalization.
    pub fn from_table(h: f64, len: usize, pmf: Vec<f64>) -> Result<Self, String> {
        check_probability(h).map_err(|e| e.to_string())?;
        if pmf.len() != max_count(len) + 1 {
            return Err(format!(
                "table has {} entries, expected {} for T = {len}",
                pmf.len(),
                max_count(len) + 1
            ));
        }
        if let Some(bad) = pmf.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(format!("entry {bad} is outside [0, 1]"));
        }
        let total = pmf.iter().copied().collect::<CompensatedSum>().value();
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("table sums to {total}, not 1"));
        }
        Ok(Self { h, len, pmf })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn total(&self) -> f64 {
        self.pmf.iter().copied().collect::<CompensatedSum>().value()
    }

    /// `P(c >= x)` for every `x`.
    ///
    /// The upper sum is used once it drops below one half, so far-tail
    /// values keep their relative precision instead of collapsing to 0.
    pub fn tails(&self) -> Vec<f64> {
        let mut upper = vec![0.0; self.pmf.len()];
        let mut acc = CompensatedSum::new();
        for (x, &p) in self.pmf.iter().enumerate().rev() {
            acc.add(p);
            upper[x] = acc.value();
        }
        let mut head = CompensatedSum::new();
        let mut out = Vec::with_capacity(self.pmf.len());
        for (x, &p) in self.pmf.iter().enumerate() {
            let tail = if x > 0 && upper[x] < 0.5 {
                upper[x]
            } else {
                1.0 - head.value()
            };
            out.push(tail.clamp(0.0, 1.0));
            head.add(p);
        }
        out
    }

    /// `P(c >= c_obs)`.
    pub fn tail(&self, c_obs: usize) -> f64 {
        if c_obs == 0 {
            return 1.0;
        }
        if c_obs >= self.pmf.len() {
            return 0.0;
        }
        let upper: CompensatedSum = self.pmf[c_obs..].iter().copied().collect();
        let tail = if upper.value() < 0.5 {
            upper.value()
        } else {
            let below: CompensatedSum = self.pmf[..c_obs].iter().copied().collect();
            1.0 - below.value()
        };
        tail.clamp(0.0, 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(x, p)| x as f64 * p)
            .collect::<CompensatedSum>()
            .value()
    }

    /// Smallest `x` attaining the maximum probability.
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (x, &p) in self.pmf.iter().enumerate() {
            if p > self.pmf[best] {
                best = x;
            }
        }
        best
    }

    /// Largest `c*` whose tail probability still exceeds `alpha_sig`.
    ///
    /// An observation is significant when it is strictly greater than `c*`.
    pub fn critical_count(&self, alpha_sig: f64) -> Result<usize, DomainError> {
        if !(alpha_sig > 0.0 && alpha_sig < 1.0) {
            return Err(DomainError::Significance(alpha_sig));
        }
        let tails = self.tails();
        // tails[0] == 1 > alpha_sig, so the search always finds an entry.
        Ok(tails
            .iter()
            .rposition(|&t| t > alpha_sig)
            .unwrap_or_default())
    }
}

/// Evaluator for the first-failure recursion at a fixed `h`.
///
/// Rows `P(c^(T') = .)` are built bottom-up for `T' = 0, 1, 2, ...`. In the
/// general branch the sum over the first-failure position `j` is split into
/// the `j = 1` term and the `j >= 2` remainder; the remainder obeys
/// `G(T, x) = h(1-h) P(c^(T-2) = x) + h G(T-1, x-1)`, so each entry costs O(1)
/// instead of O(x). Only the two most recent rows are retained; finished
/// tables are memoized per `(T, width)`, so repeated queries at the same
/// `(h, T)` are lookups.
#[derive(Debug, Clone)]
pub struct LingRecursion {
    h: f64,
    memo: HashMap<usize, Vec<f64>>,
}

impl LingRecursion {
    pub fn new(h: f64) -> Result<Self, DomainError> {
        check_probability(h)?;
        Ok(Self {
            h,
            memo: HashMap::new(),
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// `P(c^(T) = x)`.
    pub fn probability(&mut self, len: usize, x: usize) -> Result<f64, DomainError> {
        check_count(len, x)?;
        Ok(self.row(len)[x])
    }

    /// The full row `P(c^(T) = .)`.
    pub fn row(&mut self, len: usize) -> &[f64] {
        let h = self.h;
        self.memo
            .entry(len)
            .or_insert_with(|| ling_rows(h, len, max_count(len) + 1))
    }

    pub fn distribution(&mut self, len: usize) -> RunCountDistribution {
        let pmf = self.row(len).to_vec();
        RunCountDistribution::from_parts(self.h, len, pmf)
    }
}

/// Bottom-up evaluation of the first `width` entries of row `len`.
fn ling_rows(h: f64, len: usize, width: usize) -> Vec<f64> {
    let width = width.min(max_count(len) + 1);
    if len < 2 || h == 0.0 {
        let mut row = vec![0.0; width];
        row[0] = 1.0;
        return row;
    }
    if h == 1.0 {
        let mut row = vec![0.0; width];
        if width == len {
            row[len - 1] = 1.0;
        }
        return row;
    }

    let q = 1.0 - h;
    // prev2 = row T-2, prev1 = row T-1, tail = G(T-1, .).
    let mut prev2 = vec![0.0; width];
    prev2[0] = 1.0; // T = 0
    let mut prev1 = vec![0.0; width];
    prev1[0] = 1.0; // T = 1
    let mut tail_prev = vec![0.0; width];
    let mut cur = vec![0.0; width];
    let mut tail_cur = vec![0.0; width];

    for t in 2..=len {
        let general = (t - 2).min(width); // x < t - 2
        for x in 0..general {
            let carried = if x == 0 { 0.0 } else { h * tail_prev[x - 1] };
            let g = h * q * prev2[x] + carried;
            tail_cur[x] = g;
            cur[x] = q * prev1[x] + g;
        }
        // G is only needed in the general branch; entries at x >= t-2 are unused.
        for slot in tail_cur.iter_mut().take(width).skip(general) {
            *slot = 0.0;
        }
        if t - 2 > 0 && t - 2 < width {
            cur[t - 2] = 2.0 * h.powi((t - 1) as i32) * q;
        }
        if t - 1 < width {
            cur[t - 1] = h.powi(t as i32);
        }
        if t == 2 && width > 0 {
            // x = 0 = T-2 falls in the general branch when T = 2.
            cur[0] = q * prev1[0] + h * q * prev2[0];
            tail_cur[0] = h * q * prev2[0];
        }
        for slot in cur.iter_mut().take(width).skip(t) {
            *slot = 0.0;
        }
        std::mem::swap(&mut prev2, &mut prev1);
        std::mem::swap(&mut prev1, &mut cur);
        std::mem::swap(&mut tail_prev, &mut tail_cur);
    }
    prev1
}

/// `P(c^(T) = x)` by the first-failure recursion.
pub fn pmf_ling(h: f64, len: usize, x: usize) -> Result<f64, DomainError> {
    check_probability(h)?;
    check_count(len, x)?;
    Ok(ling_rows(h, len, x + 1)[x])
}

/// Full table by the first-failure recursion.
pub fn ling_distribution(h: f64, len: usize) -> Result<RunCountDistribution, DomainError> {
    check_probability(h)?;
    Ok(RunCountDistribution::from_parts(
        h,
        len,
        ling_rows(h, len, max_count(len) + 1),
    ))
}

/// Position-by-position dynamic program over (run count so far, last outcome),
/// truncated to the first `width` run counts.
fn chain_rows(h: f64, len: usize, width: usize) -> Vec<f64> {
    let width = width.min(max_count(len) + 1);
    let mut out = vec![0.0; width];
    if len == 0 {
        out[0] = 1.0;
        return out;
    }
    let q = 1.0 - h;
    // ends_fail[c], ends_success[c]: probability of c runs so far with that last outcome.
    let mut ends_fail = vec![0.0; width];
    let mut ends_success = vec![0.0; width];
    ends_fail[0] = q;
    ends_success[0] = h;
    let mut next_fail = vec![0.0; width];
    let mut next_success = vec![0.0; width];
    for pos in 1..len {
        let reach = (pos + 1).min(width);
        for c in 0..reach {
            next_fail[c] = q * (ends_fail[c] + ends_success[c]);
            let extended = if c == 0 { 0.0 } else { ends_success[c - 1] };
            next_success[c] = h * (ends_fail[c] + extended);
        }
        std::mem::swap(&mut ends_fail, &mut next_fail);
        std::mem::swap(&mut ends_success, &mut next_success);
    }
    for c in 0..width {
        out[c] = ends_fail[c] + ends_success[c];
    }
    out
}

/// Full table by the position-state dynamic program.
pub fn pmf_chain(h: f64, len: usize) -> Result<RunCountDistribution, DomainError> {
    check_probability(h)?;
    Ok(RunCountDistribution::from_parts(
        h,
        len,
        chain_rows(h, len, max_count(len) + 1),
    ))
}

/// `P(c >= c_obs)` under Bernoulli(h) trials of length `len`.
///
/// Only the first `c_obs` table columns are evaluated, so the cost is
/// O(len * c_obs) rather than O(len^2). Tails below [`FAR_TAIL`] are summed
/// directly from a slightly wider table, which keeps tiny p-values accurate
/// in relative terms.
pub fn p_value(h: f64, len: usize, c_obs: usize) -> Result<f64, DomainError> {
    check_probability(h)?;
    check_count(len, c_obs)?;
    if c_obs == 0 {
        return Ok(1.0);
    }
    if h == 1.0 {
        // point mass at len - 1 >= c_obs
        return Ok(1.0);
    }
    let head = ling_rows(h, len, c_obs);
    let below: CompensatedSum = head.iter().copied().collect();
    let tail = 1.0 - below.value();
    if tail > FAR_TAIL {
        return Ok(tail.clamp(0.0, 1.0));
    }
    // Far tail: 1 - head has no relative precision left, so sum the upper
    // entries, widening until the truncated remainder is negligible.
    let full = max_count(len) + 1;
    let mut extra = 64;
    loop {
        let width = (c_obs + extra).min(full);
        let row = ling_rows(h, len, width);
        let upper: CompensatedSum = row[c_obs..].iter().copied().collect();
        let last = row.last().copied().unwrap_or(0.0);
        if width == full || last <= upper.value() * 1e-18 {
            return Ok(upper.value().clamp(0.0, 1.0));
        }
        extra *= 4;
    }
}

/// Largest `c*` with `p_value(h, len, c*) > alpha_sig`; flag when `c > c*`.
pub fn critical_count(h: f64, len: usize, alpha_sig: f64) -> Result<usize, DomainError> {
    check_probability(h)?;
    if !(alpha_sig > 0.0 && alpha_sig < 1.0) {
        return Err(DomainError::Significance(alpha_sig));
    }
    ling_distribution(h, len)?.critical_count(alpha_sig)
}

/// Exact table by summing the probability of every outcome sequence.
pub fn enumerate_bruteforce(h: f64, len: usize) -> Result<RunCountDistribution, DomainError> {
    check_probability(h)?;
    if len > BRUTEFORCE_MAX_LEN {
        return Err(DomainError::Capacity {
            len,
            max: BRUTEFORCE_MAX_LEN,
        });
    }
    let mut buckets = vec![CompensatedSum::new(); max_count(len) + 1];
    for mask in 0u32..(1u32 << len) {
        let successes = mask.count_ones() as i32;
        let prob = h.powi(successes) * (1.0 - h).powi(len as i32 - successes);
        let runs = (mask & (mask >> 1)).count_ones() as usize;
        buckets[runs].add(prob);
    }
    let pmf = buckets.iter().map(CompensatedSum::value).collect();
    Ok(RunCountDistribution::from_parts(h, len, pmf))
}

/// `n` seeded draws of the run count of an i.i.d. Bernoulli(h) sequence.
pub fn sample_runcount(
    h: f64,
    len: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<usize>, DomainError> {
    check_probability(h)?;
    if n == 0 {
        return Err(DomainError::NoTrials);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = (0..n)
        .map(|_| count_adjacent_successes((0..len).map(|_| rng.gen::<f64>() < h)))
        .collect();
    Ok(draws)
}
