//! UTXO address clustering and pool tagging.
//!
//! Three heuristics add merges to one union-find partition, each merge
//! tagged with the heuristic that produced it:
//!
//! * `H1` multi-input: all input addresses of a transaction share an owner.
//! * `H2` optimal change: the single output smaller than every input is change.
//! * `Hp` peeling chain: in a run of 1-input/2-output transactions, the output
//!   spent by the next link is change.
//!
//! Tagging replays the merge log in priority order `H1 > H2 > Hp`, so each
//! pass sees exactly the clusters formed by its own and higher-priority
//! heuristics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::BlockRecord;

pub const UNKNOWN_POOL: &str = "Unknown";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("address {address} is listed under more than one pool ({first}, {second})")]
    OverlappingPools {
        address: String,
        first: String,
        second: String,
    },
    #[error("peeling-chain heuristic unavailable: no spend references in the transaction data")]
    SpendLinksUnavailable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxIo {
    pub address: String,
    /// Base units.
    pub amount: u64,
}

impl TxIo {
    pub fn new(address: impl Into<String>, amount: u64) -> Self {
        Self {
            address: address.into(),
            amount,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: String,
    pub is_coinbase: bool,
    pub inputs: Vec<TxIo>,
    pub outputs: Vec<TxIo>,
    /// Spending transaction per output, aligned with `outputs`. Empty when
    /// the dataset carries no spend references.
    #[serde(default)]
    pub spent_by: Vec<Option<String>>,
}

impl Transaction {
    fn is_peeling_shaped(&self) -> bool {
        !self.is_coinbase && self.inputs.len() == 1 && self.outputs.len() == 2
    }

    fn has_spend_links(&self) -> bool {
        !self.spent_by.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Heuristic {
    H1,
    H2,
    Hp,
}

impl Heuristic {
    pub const PRIORITY: [Heuristic; 3] = [Heuristic::H1, Heuristic::H2, Heuristic::Hp];
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Heuristic::H1 => "H1",
            Heuristic::H2 => "H2",
            Heuristic::Hp => "Hp",
        })
    }
}

impl FromStr for Heuristic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "H1" | "h1" => Ok(Heuristic::H1),
            "H2" | "h2" => Ok(Heuristic::H2),
            "Hp" | "hp" | "HP" => Ok(Heuristic::Hp),
            other => Err(format!("unknown heuristic '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Merge {
    pub a: String,
    pub b: String,
    pub heuristic: Heuristic,
}

/// Union-find over address labels with a provenance log of every merge that
/// joined two clusters.
#[derive(Debug, Clone, Default)]
pub struct AddressPartition {
    index: HashMap<String, usize>,
    names: Vec<String>,
    parent: Vec<usize>,
    rank: Vec<u8>,
    merges: Vec<Merge>,
}

impl AddressPartition {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, address: &str) -> usize {
        if let Some(&i) = self.index.get(address) {
            return i;
        }
        let i = self.names.len();
        self.index.insert(address.to_string(), i);
        self.names.push(address.to_string());
        self.parent.push(i);
        self.rank.push(0);
        i
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, address: &str) -> bool {
        self.index.contains_key(address)
    }

    pub fn addresses(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    fn root(&mut self, mut node: usize) -> usize {
        let mut root = node;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[node] != root {
            let next = self.parent[node];
            self.parent[node] = root;
            node = next;
        }
        root
    }

    /// Root index of the address's cluster, or `None` if unseen.
    pub fn find(&mut self, address: &str) -> Option<usize> {
        let i = *self.index.get(address)?;
        Some(self.root(i))
    }

    pub fn same_cluster(&mut self, a: &str, b: &str) -> bool {
        match (self.find(a), self.find(b)) {
            (Some(x), Some(y)) => x == y,
            _ => a == b,
        }
    }

    /// Joins the clusters of `a` and `b`. Returns false when already joined.
    pub fn union(&mut self, a: &str, b: &str, heuristic: Heuristic) -> bool {
        let ia = self.insert(a);
        let ib = self.insert(b);
        let (mut ra, mut rb) = (self.root(ia), self.root(ib));
        if ra == rb {
            return false;
        }
        if self.rank[ra] < self.rank[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        if self.rank[ra] == self.rank[rb] {
            self.rank[ra] = self.rank[ra].saturating_add(1);
        }
        self.merges.push(Merge {
            a: a.to_string(),
            b: b.to_string(),
            heuristic,
        });
        true
    }

    /// Partition over the same addresses using only merges from heuristics
    /// at or above `lowest` in priority.
    pub fn restricted(&self, lowest: Heuristic) -> AddressPartition {
        let mut out = AddressPartition::new();
        for name in &self.names {
            out.insert(name);
        }
        for m in self.merges.iter().filter(|m| m.heuristic <= lowest) {
            out.union(&m.a, &m.b, m.heuristic);
        }
        out
    }

    /// Clusters as sorted address lists, ordered by their smallest address.
    pub fn clusters(&mut self) -> Vec<Vec<String>> {
        let mut groups: HashMap<usize, Vec<String>> = HashMap::new();
        for i in 0..self.names.len() {
            let r = self.root(i);
            groups.entry(r).or_default().push(self.names[i].clone());
        }
        let mut out: Vec<Vec<String>> = groups
            .into_values()
            .map(|mut g| {
                g.sort();
                g
            })
            .collect();
        out.sort();
        out
    }

    /// Address to cluster id, where ids follow [`Self::clusters`] order.
    pub fn membership(&mut self) -> BTreeMap<String, usize> {
        self.clusters()
            .into_iter()
            .enumerate()
            .flat_map(|(id, members)| members.into_iter().map(move |a| (a, id)))
            .collect()
    }
}

/// Merges every input address of each non-coinbase transaction.
pub fn h1_multi_input(txs: &[Transaction], partition: &mut AddressPartition) -> usize {
    let mut merged = 0;
    for tx in txs {
        for io in tx.inputs.iter().chain(&tx.outputs) {
            partition.insert(&io.address);
        }
        if tx.is_coinbase {
            continue;
        }
        if let Some((first, rest)) = tx.inputs.split_first() {
            for io in rest {
                if partition.union(&first.address, &io.address, Heuristic::H1) {
                    merged += 1;
                }
            }
        }
    }
    merged
}

/// The unique output whose amount is below every input amount.
pub fn h2_optimal_change(tx: &Transaction) -> Option<&str> {
    if tx.is_coinbase || tx.inputs.is_empty() {
        return None;
    }
    let min_input = tx.inputs.iter().map(|io| io.amount).min()?;
    let mut qualifying = tx.outputs.iter().filter(|o| o.amount < min_input);
    let change = qualifying.next()?;
    if qualifying.next().is_some() {
        return None;
    }
    Some(&change.address)
}

/// Merges each inferred change address with its transaction's first input.
pub fn h2_apply(txs: &[Transaction], partition: &mut AddressPartition) -> usize {
    let mut merged = 0;
    for tx in txs {
        if let Some(change) = h2_optimal_change(tx) {
            if partition.union(&tx.inputs[0].address, change, Heuristic::H2) {
                merged += 1;
            }
        }
    }
    merged
}

/// Merges the continuing output of every interior peeling-chain link with
/// that link's input.
///
/// A link is interior when it and both its predecessor (the transaction
/// whose output it spends) and successor (a transaction spending one of its
/// outputs) have one input and two outputs. If both outputs continue into
/// peeling-shaped transactions the change is ambiguous and nothing is merged.
pub fn hp_peeling_chain(
    txs: &[Transaction],
    partition: &mut AddressPartition,
) -> Result<usize, ClusterError> {
    if !txs.iter().any(Transaction::has_spend_links) {
        return Err(ClusterError::SpendLinksUnavailable);
    }
    let by_id: HashMap<&str, &Transaction> = txs.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut predecessor: HashMap<&str, &Transaction> = HashMap::new();
    for tx in txs {
        for spender in tx.spent_by.iter().flatten() {
            predecessor.insert(spender.as_str(), tx);
        }
    }

    let mut merged = 0;
    for tx in txs.iter().filter(|t| t.is_peeling_shaped()) {
        let pred_ok = predecessor
            .get(tx.id.as_str())
            .is_some_and(|p| p.is_peeling_shaped());
        if !pred_ok {
            continue;
        }
        let continuing: Vec<&TxIo> = tx
            .outputs
            .iter()
            .zip(&tx.spent_by)
            .filter(|(_, spender)| {
                spender
                    .as_deref()
                    .and_then(|id| by_id.get(id))
                    .is_some_and(|s| s.is_peeling_shaped())
            })
            .map(|(out, _)| out)
            .collect();
        if let [change] = continuing.as_slice() {
            if partition.union(&tx.inputs[0].address, &change.address, Heuristic::Hp) {
                merged += 1;
            }
        }
    }
    Ok(merged)
}

/// Merge counts from a full clustering run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub h1_merges: usize,
    pub h2_merges: usize,
    /// `None` when spend references are missing.
    pub hp_merges: Option<usize>,
}

/// Runs H1, H2 and Hp in that order over a fresh partition.
pub fn cluster_addresses(txs: &[Transaction]) -> (AddressPartition, ClusterReport) {
    let mut partition = AddressPartition::new();
    let h1_merges = h1_multi_input(txs, &mut partition);
    let h2_merges = h2_apply(txs, &mut partition);
    let hp_merges = hp_peeling_chain(txs, &mut partition).ok();
    (
        partition,
        ClusterReport {
            h1_merges,
            h2_merges,
            hp_merges,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    /// Address came from the named-pool input.
    Known,
    Heuristic(Heuristic),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Known => f.write_str("known"),
            Provenance::Heuristic(h) => h.fmt(f),
        }
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "known" {
            Ok(Provenance::Known)
        } else {
            s.parse().map(Provenance::Heuristic)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolTag {
    pub pool: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagConflict {
    pub address: String,
    pub pools: Vec<String>,
    /// First pass in which the address's cluster touched several pools.
    pub heuristic: Heuristic,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolTagMap {
    pub tags: BTreeMap<String, PoolTag>,
    pub unknown: BTreeSet<String>,
    pub conflicts: Vec<TagConflict>,
}

impl PoolTagMap {
    pub fn pool_of(&self, address: &str) -> Option<&str> {
        self.tags.get(address).map(|t| t.pool.as_str())
    }
}

/// Named-pool address sets, checked for overlap.
pub fn validate_known(
    known: &BTreeMap<String, BTreeSet<String>>,
) -> Result<HashMap<&str, &str>, ClusterError> {
    let mut owner: HashMap<&str, &str> = HashMap::new();
    for (pool, addresses) in known {
        for a in addresses {
            if let Some(first) = owner.insert(a.as_str(), pool.as_str()) {
                return Err(ClusterError::OverlappingPools {
                    address: a.clone(),
                    first: first.to_string(),
                    second: pool.clone(),
                });
            }
        }
    }
    Ok(owner)
}

/// Tags unknown addresses to named pools in three passes, H1 then H2 then Hp.
///
/// In each pass an untagged address joins pool P when its cluster (under
/// that pass's merges and all higher-priority ones) contains known addresses
/// of P and of no other pool.
pub fn tag_unknown_miners(
    partition: &AddressPartition,
    known: &BTreeMap<String, BTreeSet<String>>,
) -> Result<PoolTagMap, ClusterError> {
    let owner = validate_known(known)?;
    let mut out = PoolTagMap::default();
    for (&address, &pool) in &owner {
        out.tags.insert(
            address.to_string(),
            PoolTag {
                pool: pool.to_string(),
                provenance: Provenance::Known,
            },
        );
    }
    let mut conflicted: BTreeSet<String> = BTreeSet::new();

    for heuristic in Heuristic::PRIORITY {
        let mut view = partition.restricted(heuristic);
        for (&address, _) in &owner {
            view.insert(address);
        }
        let mut pools_by_root: HashMap<usize, BTreeSet<&str>> = HashMap::new();
        for (&address, &pool) in &owner {
            let root = view.find(address).expect("inserted above");
            pools_by_root.entry(root).or_default().insert(pool);
        }
        let candidates: Vec<String> = partition
            .addresses()
            .filter(|a| !out.tags.contains_key(*a))
            .map(str::to_string)
            .collect();
        for address in candidates {
            let root = view.find(&address).expect("same address universe");
            let Some(pools) = pools_by_root.get(&root) else {
                continue;
            };
            if pools.len() == 1 {
                let pool = pools.iter().next().expect("one pool");
                out.tags.insert(
                    address,
                    PoolTag {
                        pool: pool.to_string(),
                        provenance: Provenance::Heuristic(heuristic),
                    },
                );
            } else if conflicted.insert(address.clone()) {
                out.conflicts.push(TagConflict {
                    address,
                    pools: pools.iter().map(|p| p.to_string()).collect(),
                    heuristic,
                });
            }
        }
    }
    out.unknown = partition
        .addresses()
        .filter(|a| !out.tags.contains_key(*a))
        .map(str::to_string)
        .collect();
    Ok(out)
}

fn is_unknown_label(label: &str) -> bool {
    label.eq_ignore_ascii_case(UNKNOWN_POOL)
}

/// Pool address sets implied by blocks whose label is a named pool.
pub fn known_pools_from_blocks(
    blocks: &[BlockRecord],
) -> Result<BTreeMap<String, BTreeSet<String>>, ClusterError> {
    let mut known: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for b in blocks {
        if let Some(address) = &b.address {
            if !is_unknown_label(&b.miner) {
                known
                    .entry(b.miner.clone())
                    .or_default()
                    .insert(address.clone());
            }
        }
    }
    validate_known(&known)?;
    Ok(known)
}

/// Replaces the label of "Unknown" blocks whose address has been tagged.
pub fn apply_tags(blocks: &[BlockRecord], tags: &PoolTagMap) -> Vec<BlockRecord> {
    blocks
        .iter()
        .map(|b| {
            let mut out = b.clone();
            if is_unknown_label(&b.miner) {
                if let Some(pool) = b.address.as_deref().and_then(|a| tags.pool_of(a)) {
                    out.miner = pool.to_string();
                }
            }
            out
        })
        .collect()
}

/// Relabels blocks by address cluster (`cluster:<id>`), for datasets
/// without pool names. Blocks whose address is outside the partition keep
/// their label.
pub fn relabel_by_cluster(blocks: &[BlockRecord], partition: &mut AddressPartition) -> Vec<BlockRecord> {
    let membership = partition.membership();
    blocks
        .iter()
        .map(|b| {
            let mut out = b.clone();
            let address = b.address.as_deref().unwrap_or(&b.miner);
            if let Some(id) = membership.get(address) {
                out.miner = format!("cluster:{id}");
            }
            out
        })
        .collect()
}

/// `(unknown blocks, total blocks)`.
pub fn unknown_share(blocks: &[BlockRecord]) -> (usize, usize) {
    let unknown = blocks.iter().filter(|b| is_unknown_label(&b.miner)).count();
    (unknown, blocks.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tx(id: &str, inputs: &[(&str, u64)], outputs: &[(&str, u64)]) -> Transaction {
        Transaction {
            id: id.into(),
            is_coinbase: false,
            inputs: inputs.iter().map(|(a, v)| TxIo::new(*a, *v)).collect(),
            outputs: outputs.iter().map(|(a, v)| TxIo::new(*a, *v)).collect(),
            spent_by: Vec::new(),
        }
    }

    fn linked(mut t: Transaction, spent_by: &[Option<&str>]) -> Transaction {
        t.spent_by = spent_by.iter().map(|s| s.map(str::to_string)).collect();
        t
    }

    fn peel_chain(n: usize) -> Vec<Transaction> {
        (0..n)
            .map(|k| {
                let next = (k + 1 < n).then(|| format!("p{}", k + 1));
                linked(
                    tx(
                        &format!("p{k}"),
                        &[(&format!("c{k}"), 1000 - 100 * k as u64)],
                        &[(&format!("r{k}"), 50), (&format!("c{}", k + 1), 900 - 100 * k as u64)],
                    ),
                    &[None, next.as_deref()],
                )
            })
            .collect()
    }

    #[test]
    fn h1_merges_inputs() {
        let mut p = AddressPartition::new();
        h1_multi_input(&[tx("t", &[("A", 1), ("B", 2)], &[("C", 3)])], &mut p);
        assert!(p.same_cluster("A", "B"));
        assert!(!p.same_cluster("A", "C"));

        let mut p = AddressPartition::new();
        assert_eq!(h1_multi_input(&[tx("t", &[("A", 1)], &[("C", 1)])], &mut p), 0);

        let mut p = AddressPartition::new();
        let txs = [tx("t1", &[("A", 1), ("B", 1)], &[]), tx("t2", &[("B", 1), ("C", 1)], &[])];
        h1_multi_input(&txs, &mut p);
        assert!(p.same_cluster("A", "C"));
        assert_eq!(p.merges().len(), 2);
    }

    #[test]
    fn h1_skips_coinbase() {
        let mut cb = tx("cb", &[("X", 0), ("Y", 0)], &[("M", 50)]);
        cb.is_coinbase = true;
        let mut p = AddressPartition::new();
        assert_eq!(h1_multi_input(&[cb], &mut p), 0);
        assert!(p.contains("M"));
    }

    #[test]
    fn h2_examples() {
        assert_eq!(h2_optimal_change(&tx("t", &[("A", 500)], &[("C", 420), ("D", 30)])), None);
        assert_eq!(
            h2_optimal_change(&tx("t", &[("A", 500)], &[("C", 600), ("D", 30)])),
            Some("D")
        );
        assert_eq!(
            h2_optimal_change(&tx("t", &[("A", 100), ("B", 200)], &[("C", 250), ("D", 50)])),
            Some("D")
        );
        assert_eq!(h2_optimal_change(&tx("t", &[("A", 100)], &[("C", 100)])), None);
        let mut cb = tx("cb", &[("A", 100)], &[("C", 10)]);
        cb.is_coinbase = true;
        assert_eq!(h2_optimal_change(&cb), None);
    }

    #[test]
    fn hp_chain_lengths() {
        let mut p = AddressPartition::new();
        assert_eq!(hp_peeling_chain(&peel_chain(3), &mut p).unwrap(), 1);
        assert!(p.same_cluster("c1", "c2"));

        let mut p = AddressPartition::new();
        assert_eq!(hp_peeling_chain(&peel_chain(5), &mut p).unwrap(), 3);

        let mut p = AddressPartition::new();
        assert_eq!(hp_peeling_chain(&peel_chain(1), &mut p).unwrap(), 0);
    }

    #[test]
    fn hp_requires_spend_links() {
        let txs = [tx("t", &[("A", 10)], &[("B", 5), ("C", 4)])];
        let mut p = AddressPartition::new();
        assert_eq!(
            hp_peeling_chain(&txs, &mut p),
            Err(ClusterError::SpendLinksUnavailable)
        );
        let (_, report) = cluster_addresses(&txs);
        assert_eq!(report.hp_merges, None);
    }

    #[test]
    fn hp_ambiguous_continuation_is_skipped() {
        let txs = vec![
            linked(tx("a", &[("x0", 100)], &[("x1", 90), ("y", 5)]), &[Some("b")]),
            linked(tx("b", &[("x1", 90)], &[("u", 40), ("v", 40)]), &[Some("c"), Some("d")]),
            tx("c", &[("u", 40)], &[("u1", 20), ("u2", 10)]),
            tx("d", &[("v", 40)], &[("v1", 20), ("v2", 10)]),
        ];
        let mut p = AddressPartition::new();
        assert_eq!(hp_peeling_chain(&txs, &mut p).unwrap(), 0);
    }

    #[test]
    fn heuristics_are_idempotent() {
        let mut txs = peel_chain(4);
        txs.push(tx("m", &[("A", 10), ("c0", 10)], &[("Z", 30), ("W", 1)]));
        let (mut once, _) = cluster_addresses(&txs);
        let before = once.clusters();
        h1_multi_input(&txs, &mut once);
        h2_apply(&txs, &mut once);
        hp_peeling_chain(&txs, &mut once).unwrap();
        assert_eq!(once.clusters(), before);
    }

    #[test]
    fn tagging_priority_and_conflicts() {
        let txs = vec![
            tx("t1", &[("X", 10), ("btc_com_1", 10)], &[("out", 30)]),
            tx("t2", &[("Y", 10), ("pool_a", 10)], &[("o2", 30)]),
            tx("t3", &[("Y", 10), ("pool_b", 10)], &[("o3", 30)]),
            tx("t4", &[("L", 10)], &[("o4", 30)]),
        ];
        let (partition, _) = cluster_addresses(&txs);
        let known: BTreeMap<String, BTreeSet<String>> = [
            ("BTC.com", vec!["btc_com_1"]),
            ("PoolA", vec!["pool_a"]),
            ("PoolB", vec!["pool_b"]),
        ]
        .into_iter()
        .map(|(p, a)| (p.to_string(), a.into_iter().map(String::from).collect()))
        .collect();
        let tags = tag_unknown_miners(&partition, &known).unwrap();
        assert_eq!(
            tags.tags["X"],
            PoolTag { pool: "BTC.com".into(), provenance: Provenance::Heuristic(Heuristic::H1) }
        );
        assert!(!tags.tags.contains_key("Y"));
        assert_eq!(tags.conflicts.len(), 1);
        assert_eq!(tags.conflicts[0].address, "Y");
        assert_eq!(tags.conflicts[0].pools, vec!["PoolA", "PoolB"]);
        assert!(tags.unknown.contains("L"));
        assert!(tags.unknown.contains("Y"));
    }

    #[test]
    fn overlapping_pools_rejected() {
        let known: BTreeMap<String, BTreeSet<String>> = [
            ("A".to_string(), BTreeSet::from(["x".to_string()])),
            ("B".to_string(), BTreeSet::from(["x".to_string()])),
        ]
        .into();
        let err = tag_unknown_miners(&AddressPartition::new(), &known).unwrap_err();
        assert!(matches!(err, ClusterError::OverlappingPools { .. }));
    }

    #[test]
    fn restricted_views_refine() {
        let mut txs = peel_chain(3);
        txs.push(tx("m", &[("A", 10), ("c0", 10)], &[("Z", 30), ("W", 1)]));
        let (full, report) = cluster_addresses(&txs);
        assert_eq!(report, ClusterReport { h1_merges: 1, h2_merges: 1, hp_merges: Some(1) });
        let mut h1 = full.restricted(Heuristic::H1);
        let mut h2 = full.restricted(Heuristic::H2);
        assert!(h1.same_cluster("A", "c0"));
        assert!(!h1.same_cluster("A", "W"));
        assert!(h2.same_cluster("A", "W"));
        assert!(!h2.same_cluster("c1", "c2"));
    }

    #[test]
    fn block_relabelling_and_unknown_share() {
        let mk = |h, miner: &str, address: &str| BlockRecord {
            height: h,
            timestamp: 0,
            miner: miner.into(),
            address: Some(address.into()),
        };
        let blocks = vec![mk(1, "PoolA", "a1"), mk(2, "Unknown", "x"), mk(3, "unknown", "y")];
        let known = known_pools_from_blocks(&blocks).unwrap();
        assert_eq!(known["PoolA"], BTreeSet::from(["a1".to_string()]));
        let mut tags = PoolTagMap::default();
        tags.tags.insert(
            "x".into(),
            PoolTag { pool: "PoolA".into(), provenance: Provenance::Heuristic(Heuristic::H1) },
        );
        let after = apply_tags(&blocks, &tags);
        assert_eq!(unknown_share(&blocks), (2, 3));
        assert_eq!(unknown_share(&after), (1, 3));
        assert_eq!(after[1].miner, "PoolA");

        let mut p = AddressPartition::new();
        p.union("x", "y", Heuristic::H1);
        let relabelled = relabel_by_cluster(&blocks, &mut p);
        assert_eq!(relabelled[1].miner, relabelled[2].miner);
        assert_eq!(relabelled[0].miner, "PoolA");
    }
}
