//! Pairwise run tests for coordinated miners and the resulting cartel graph.
//!
//! A pair `(i, j)` is tested on the merged indicator "block mined by i or j":
//! its run count `c_ij` includes i-i, j-j, i-j and j-i adjacencies, and the
//! null success probability is `h_i + h_j`. A pair is reported as a cartel
//! only when the pair test rejects while neither member is individually
//! significant in the same window.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{bh_adjust, DetectError, MinerWindowResult, Window};
use crate::runstat::{self, DomainError};

/// Default minimum blocks each member must have mined in a window.
pub const DEFAULT_MIN_BLOCKS: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CartelError {
    #[error("a pair needs two distinct miners, got '{0}' twice")]
    SameMiner(String),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Unordered pair stored in label order.
fn ordered<'a>(a: &'a str, b: &'a str) -> (&'a str, &'a str) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Overlapping run count of the merged indicator for `i` or `j`.
pub fn count_pair_runs(window: &Window, i: &str, j: &str) -> Result<usize, CartelError> {
    if i == j {
        return Err(CartelError::SameMiner(i.to_string()));
    }
    Ok(runstat::count_adjacent_successes(
        window.sequence.iter().map(|m| m == i || m == j),
    ))
}

/// Adjacencies between different members only (i-j or j-i).
pub fn count_cross_runs(window: &Window, i: &str, j: &str) -> Result<usize, CartelError> {
    if i == j {
        return Err(CartelError::SameMiner(i.to_string()));
    }
    Ok(window
        .sequence
        .windows(2)
        .filter(|w| (w[0] == i && w[1] == j) || (w[0] == j && w[1] == i))
        .count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairWindowResult {
    /// Lexicographically smaller label.
    pub first: String,
    pub second: String,
    pub window: usize,
    /// Merged-indicator run count.
    pub c_pair: usize,
    /// Cross-member adjacencies only; reported for comparison, not tested.
    pub c_cross: usize,
    pub h_pair: f64,
    pub p: f64,
    pub p_adj: f64,
    pub is_cartel: bool,
}

/// Tests every candidate pair in `window`.
///
/// `individual` may hold results for many windows; only those for
/// `window.id` are used. Pairs form their own correction family.
pub fn test_pairs(
    window: &Window,
    individual: &[MinerWindowResult],
    fdr: f64,
    min_blocks: usize,
) -> Result<Vec<PairWindowResult>, CartelError> {
    let len = window.len();
    if len < 2 {
        return Ok(Vec::new());
    }
    let members: BTreeMap<&str, &MinerWindowResult> = individual
        .iter()
        .filter(|r| r.window == window.id)
        .map(|r| (r.miner.as_str(), r))
        .collect();
    let tally = window.tally();

    let mut cross: HashMap<(&str, &str), usize> = HashMap::new();
    for w in window.sequence.windows(2) {
        if w[0] != w[1] {
            *cross.entry(ordered(&w[0], &w[1])).or_default() += 1;
        }
    }

    let candidates: Vec<&str> = tally
        .iter()
        .filter(|(_, t)| t.blocks >= min_blocks.max(1))
        .map(|(m, _)| *m)
        .collect();
    let mut pairs = Vec::new();
    for (a, first) in candidates.iter().enumerate() {
        for second in &candidates[a + 1..] {
            pairs.push((*first, *second));
        }
    }

    let mut results = pairs
        .par_iter()
        .map(|&(first, second)| {
            let (ti, tj) = (tally[first], tally[second]);
            let c_cross = cross.get(&(first, second)).copied().unwrap_or(0);
            let c_pair = ti.runs + tj.runs + c_cross;
            let h_pair = ((ti.blocks + tj.blocks) as f64 / len as f64).min(1.0);
            let p = runstat::p_value(h_pair, len, c_pair)?;
            Ok(PairWindowResult {
                first: first.to_string(),
                second: second.to_string(),
                window: window.id,
                c_pair,
                c_cross,
                h_pair,
                p,
                p_adj: p,
                is_cartel: false,
            })
        })
        .collect::<Result<Vec<_>, CartelError>>()?;

    let raw: Vec<f64> = results.iter().map(|r| r.p).collect();
    let adjusted = bh_adjust(&raw)?;
    let individually_clear = |m: &str| members.get(m).is_some_and(|r| r.p_adj >= fdr);
    for (r, p_adj) in results.iter_mut().zip(adjusted) {
        r.p_adj = p_adj;
        r.is_cartel =
            p_adj < fdr && individually_clear(&r.first) && individually_clear(&r.second);
    }
    Ok(results)
}

/// Pair tests across many windows, in window order.
pub fn test_pairs_all(
    windows: &[Window],
    individual: &[MinerWindowResult],
    fdr: f64,
    min_blocks: usize,
) -> Result<Vec<PairWindowResult>, CartelError> {
    let mut by_window: HashMap<usize, Vec<MinerWindowResult>> = HashMap::new();
    for r in individual {
        by_window.entry(r.window).or_default().push(r.clone());
    }
    let empty = Vec::new();
    let per_window = windows
        .par_iter()
        .map(|w| test_pairs(w, by_window.get(&w.id).unwrap_or(&empty), fdr, min_blocks))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(per_window.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    /// Mean `h_hat` over the miner's active windows.
    pub mean_power: f64,
    pub degree: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CartelNetwork {
    pub nodes: BTreeMap<String, NodeStats>,
    /// Keyed by label-ordered pair; weight is the number of cartel windows.
    pub edges: BTreeMap<(String, String), usize>,
}

impl CartelNetwork {
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Edges by descending weight, ties broken by pair labels.
    pub fn ranked_edges(&self) -> Vec<(&str, &str, usize)> {
        let mut out: Vec<(&str, &str, usize)> = self
            .edges
            .iter()
            .map(|((a, b), w)| (a.as_str(), b.as_str(), *w))
            .collect();
        out.sort_by(|x, y| y.2.cmp(&x.2).then_with(|| (x.0, x.1).cmp(&(y.0, y.1))));
        out
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph cartels {\n");
        for (miner, stats) in &self.nodes {
            let _ = writeln!(
                out,
                "  \"{}\" [mean_power={:.6}, degree={}];",
                escape(miner),
                stats.mean_power,
                stats.degree
            );
        }
        for ((a, b), weight) in &self.edges {
            let _ = writeln!(
                out,
                "  \"{}\" -- \"{}\" [weight={weight}, penwidth={weight}];",
                escape(a),
                escape(b)
            );
        }
        out.push_str("}\n");
        out
    }
}

fn escape(label: &str) -> String {
    label.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Aggregates cartel detections into a weighted, undirected graph.
pub fn build_network(
    pair_results: &[PairWindowResult],
    individual: &[MinerWindowResult],
) -> CartelNetwork {
    let mut edges: BTreeMap<(String, String), usize> = BTreeMap::new();
    for r in pair_results.iter().filter(|r| r.is_cartel) {
        let (a, b) = ordered(&r.first, &r.second);
        *edges.entry((a.to_string(), b.to_string())).or_default() += 1;
    }

    let mut power: HashMap<&str, (f64, usize)> = HashMap::new();
    for r in individual {
        let e = power.entry(&r.miner).or_default();
        e.0 += r.h_hat;
        e.1 += 1;
    }

    let mut nodes: BTreeMap<String, NodeStats> = BTreeMap::new();
    for (a, b) in edges.keys() {
        for m in [a, b] {
            let entry = nodes.entry(m.clone()).or_insert_with(|| {
                let (sum, n) = power.get(m.as_str()).copied().unwrap_or((0.0, 0));
                NodeStats {
                    mean_power: if n == 0 { 0.0 } else { sum / n as f64 },
                    degree: 0,
                }
            });
            entry.degree += 1;
        }
    }
    CartelNetwork { nodes, edges }
}
