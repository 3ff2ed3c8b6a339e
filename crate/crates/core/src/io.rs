//! Block and transaction files, result stores, and cached distribution tables.
//!
//! CSV files are comma-separated UTF-8 with RFC 4180 quoting and a header
//! row. Timestamps are epoch seconds UTC. JSON-lines files carry one object
//! per line with the same field names.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cartel::{CartelNetwork, NodeStats, PairWindowResult};
use crate::cluster::{PoolTag, PoolTagMap, Provenance, Transaction, TxIo, UNKNOWN_POOL};
use crate::detect::{
    BlockRecord, MinerSummary, MinerWindowResult, PowerBucketStat, Window, WindowSpan,
};
use crate::runstat::{self, RunCountDistribution};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: height {height} is not above the previous height {previous}")]
    Unsorted {
        line: usize,
        height: u64,
        previous: u64,
    },
    #[error("line {line}: duplicate height {height}")]
    DuplicateHeight { line: usize, height: u64 },
    #[error("result references window {0}, which is not in the store")]
    DanglingWindow(usize),
    #[error("cached table {path}: {message}")]
    Cache { path: PathBuf, message: String },
}

impl IoError {
    /// Whether the failure is bad input rather than a filesystem problem.
    pub fn is_validation(&self) -> bool {
        !matches!(self, IoError::Io { .. })
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn schema(line: usize, message: impl Into<String>) -> Self {
        IoError::Schema {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FileFormat {
    #[default]
    Csv,
    Jsonl,
}

impl FromStr for FileFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(FileFormat::Csv),
            "jsonl" | "ndjson" => Ok(FileFormat::Jsonl),
            other => Err(format!("unknown format '{other}' (expected csv|jsonl)")),
        }
    }
}

fn open(path: &Path) -> Result<fs::File, IoError> {
    fs::File::open(path).map_err(|e| IoError::io(path, e))
}

#[derive(Debug, Deserialize)]
struct RawBlock {
    height: u64,
    timestamp: i64,
    miner: String,
    #[serde(default)]
    pool: Option<String>,
}

impl RawBlock {
    fn into_record(self, line: usize) -> Result<BlockRecord, IoError> {
        let pool = self.pool.filter(|p| !p.is_empty());
        if self.miner.is_empty() && pool.is_none() {
            return Err(IoError::schema(line, "empty miner label"));
        }
        Ok(match pool {
            Some(pool) => BlockRecord {
                height: self.height,
                timestamp: self.timestamp,
                miner: pool,
                address: (!self.miner.is_empty()).then_some(self.miner),
            },
            None => BlockRecord::new(self.height, self.timestamp, self.miner),
        })
    }
}

fn check_order(prev: Option<u64>, height: u64, line: usize) -> Result<(), IoError> {
    match prev {
        Some(p) if height == p => Err(IoError::DuplicateHeight { line, height }),
        Some(p) if height < p => Err(IoError::Unsorted {
            line,
            height,
            previous: p,
        }),
        _ => Ok(()),
    }
}

/// Reads and validates a block file. Heights must be strictly increasing.
pub fn parse_blocks(path: &Path, format: FileFormat) -> Result<Vec<BlockRecord>, IoError> {
    let file = open(path)?;
    match format {
        FileFormat::Csv => read_blocks_csv(file),
        FileFormat::Jsonl => read_blocks_jsonl(BufReader::new(file)),
    }
}

fn csv_line(record: &csv::StringRecord, fallback: usize) -> usize {
    record
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback)
}

fn csv_error(e: csv::Error) -> IoError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    IoError::schema(line, e.to_string())
}

pub fn read_blocks_csv<R: Read>(reader: R) -> Result<Vec<BlockRecord>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::Headers).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    for required in ["height", "timestamp", "miner"] {
        if !headers.iter().any(|h| h == required) {
            return Err(IoError::schema(1, format!("missing column '{required}'")));
        }
    }
    let mut out = Vec::new();
    let mut prev = None;
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(csv_error)?;
        let line = csv_line(&row, i + 2);
        let raw: RawBlock = row
            .deserialize(Some(&headers))
            .map_err(|e| IoError::schema(line, e.to_string()))?;
        check_order(prev, raw.height, line)?;
        prev = Some(raw.height);
        out.push(raw.into_record(line)?);
    }
    Ok(out)
}

pub fn read_blocks_jsonl<R: BufRead>(reader: R) -> Result<Vec<BlockRecord>, IoError> {
    let mut out = Vec::new();
    let mut prev = None;
    for (i, text) in reader.lines().enumerate() {
        let line = i + 1;
        let text = text.map_err(|e| IoError::schema(line, e.to_string()))?;
        if text.trim().is_empty() {
            continue;
        }
        let raw: RawBlock =
            serde_json::from_str(&text).map_err(|e| IoError::schema(line, e.to_string()))?;
        check_order(prev, raw.height, line)?;
        prev = Some(raw.height);
        out.push(raw.into_record(line)?);
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct BlockRow<'a> {
    height: u64,
    timestamp: i64,
    miner: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pool: Option<&'a str>,
}

fn block_row(b: &BlockRecord) -> BlockRow<'_> {
    match &b.address {
        Some(address) => BlockRow {
            height: b.height,
            timestamp: b.timestamp,
            miner: address,
            pool: Some(&b.miner),
        },
        None => BlockRow {
            height: b.height,
            timestamp: b.timestamp,
            miner: &b.miner,
            pool: None,
        },
    }
}

/// Writes blocks in the format [`parse_blocks`] reads. A pool column is
/// emitted when any record carries a separate address.
pub fn write_blocks<W: Write>(
    writer: W,
    blocks: &[BlockRecord],
    format: FileFormat,
) -> std::io::Result<()> {
    match format {
        FileFormat::Csv => {
            let with_pool = blocks.iter().any(|b| b.address.is_some());
            let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
            if with_pool {
                wtr.write_record(["height", "timestamp", "miner", "pool"])?;
            } else {
                wtr.write_record(["height", "timestamp", "miner"])?;
            }
            for b in blocks {
                let row = block_row(b);
                let height = row.height.to_string();
                let ts = row.timestamp.to_string();
                if with_pool {
                    wtr.write_record([&height, &ts, row.miner, row.pool.unwrap_or("")])?;
                } else {
                    wtr.write_record([&height, &ts, row.miner])?;
                }
            }
            wtr.flush()
        }
        FileFormat::Jsonl => {
            let mut w = writer;
            for b in blocks {
                serde_json::to_writer(&mut w, &block_row(b))?;
                w.write_all(b"\n")?;
            }
            w.flush()
        }
    }
}

fn parse_ios(field: &str, line: usize) -> Result<Vec<TxIo>, IoError> {
    field
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|entry| {
            let (address, amount) = entry.rsplit_once(':').ok_or_else(|| {
                IoError::schema(line, format!("expected address:amount, got '{entry}'"))
            })?;
            let amount = amount
                .parse()
                .map_err(|_| IoError::schema(line, format!("bad amount in '{entry}'")))?;
            Ok(TxIo::new(address, amount))
        })
        .collect()
}

fn parse_bool(field: &str, line: usize) -> Result<bool, IoError> {
    match field.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" | "" => Ok(false),
        other => Err(IoError::schema(line, format!("bad boolean '{other}'"))),
    }
}

fn validate_tx(tx: &Transaction, line: usize) -> Result<(), IoError> {
    if tx.is_coinbase && !tx.inputs.is_empty() && tx.inputs.iter().any(|i| i.amount > 0) {
        return Err(IoError::schema(line, "coinbase transaction has spendable inputs"));
    }
    if !tx.spent_by.is_empty() && tx.spent_by.len() != tx.outputs.len() {
        return Err(IoError::schema(
            line,
            format!(
                "spent_by has {} entries for {} outputs",
                tx.spent_by.len(),
                tx.outputs.len()
            ),
        ));
    }
    Ok(())
}

/// Reads a transaction file.
///
/// CSV columns: `id,is_coinbase,inputs,outputs[,spent_by]` where inputs and
/// outputs are `address:amount;...` and `spent_by` lists the spending
/// transaction per output (empty entry for unspent).
pub fn parse_transactions(path: &Path, format: FileFormat) -> Result<Vec<Transaction>, IoError> {
    let file = open(path)?;
    match format {
        FileFormat::Csv => read_transactions_csv(file),
        FileFormat::Jsonl => read_transactions_jsonl(BufReader::new(file)),
    }
}

pub fn read_transactions_csv<R: Read>(reader: R) -> Result<Vec<Transaction>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(id), Some(cb), Some(ins), Some(outs)) =
        (col("id"), col("is_coinbase"), col("inputs"), col("outputs"))
    else {
        return Err(IoError::schema(
            1,
            "expected columns id,is_coinbase,inputs,outputs[,spent_by]",
        ));
    };
    let spent = col("spent_by");
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(csv_error)?;
        let line = csv_line(&row, i + 2);
        let get = |c: usize| row.get(c).unwrap_or("");
        let outputs = parse_ios(get(outs), line)?;
        let spent_by = match spent {
            Some(c) => {
                let field = get(c);
                let mut refs: Vec<Option<String>> = field
                    .split(';')
                    .map(|s| (!s.trim().is_empty()).then(|| s.trim().to_string()))
                    .collect();
                refs.resize(outputs.len(), None);
                refs
            }
            None => Vec::new(),
        };
        let tx = Transaction {
            id: get(id).to_string(),
            is_coinbase: parse_bool(get(cb), line)?,
            inputs: parse_ios(get(ins), line)?,
            outputs,
            spent_by,
        };
        if tx.id.is_empty() {
            return Err(IoError::schema(line, "empty transaction id"));
        }
        validate_tx(&tx, line)?;
        out.push(tx);
    }
    Ok(out)
}

pub fn read_transactions_jsonl<R: BufRead>(reader: R) -> Result<Vec<Transaction>, IoError> {
    let mut out = Vec::new();
    for (i, text) in reader.lines().enumerate() {
        let line = i + 1;
        let text = text.map_err(|e| IoError::schema(line, e.to_string()))?;
        if text.trim().is_empty() {
            continue;
        }
        let tx: Transaction =
            serde_json::from_str(&text).map_err(|e| IoError::schema(line, e.to_string()))?;
        validate_tx(&tx, line)?;
        out.push(tx);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub coin: String,
    pub policy: String,
    pub fdr: f64,
    pub family: String,
    pub min_blocks: usize,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub window: usize,
    pub coin: String,
    pub kind: String,
    pub start: i64,
    pub end: i64,
    pub first_height: u64,
    pub last_height: u64,
    pub blocks: usize,
    pub miners: usize,
}

impl From<&Window> for WindowRow {
    fn from(w: &Window) -> Self {
        let (kind, start, end) = match w.span {
            WindowSpan::Calendar { start, end } => ("calendar", start, end),
            WindowSpan::Count { start, end } => ("count", start as i64, end as i64),
        };
        WindowRow {
            window: w.id,
            coin: w.coin.clone(),
            kind: kind.to_string(),
            start,
            end,
            first_height: w.first_height,
            last_height: w.last_height,
            blocks: w.len(),
            miners: w.tally().len(),
        }
    }
}

/// Everything one pipeline run produces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultStore {
    pub meta: RunMeta,
    pub windows: Vec<WindowRow>,
    pub miner_results: Vec<MinerWindowResult>,
    pub summaries: Vec<MinerSummary>,
    pub power_profile: Vec<PowerBucketStat>,
    pub pair_results: Vec<PairWindowResult>,
    pub network: CartelNetwork,
    /// Address to cluster id.
    pub clusters: BTreeMap<String, usize>,
    pub tags: PoolTagMap,
}

impl ResultStore {
    fn check_window_refs(&self) -> Result<(), IoError> {
        let ids: std::collections::HashSet<usize> = self.windows.iter().map(|w| w.window).collect();
        let referenced = self
            .miner_results
            .iter()
            .map(|r| r.window)
            .chain(self.pair_results.iter().map(|r| r.window));
        for w in referenced {
            if !ids.contains(&w) {
                return Err(IoError::DanglingWindow(w));
            }
        }
        Ok(())
    }
}

pub const WINDOWS_CSV: &str = "windows.csv";
pub const MINER_RESULTS_CSV: &str = "miner_results.csv";
pub const MINER_SUMMARY_CSV: &str = "miner_summary.csv";
pub const POWER_PROFILE_CSV: &str = "power_profile.csv";
pub const PAIR_RESULTS_CSV: &str = "pair_results.csv";
pub const CARTEL_EDGES_CSV: &str = "cartel_edges.csv";
pub const CARTEL_NODES_CSV: &str = "cartel_nodes.csv";
pub const CARTEL_DOT: &str = "cartel.dot";
pub const CLUSTERS_CSV: &str = "clusters.csv";
pub const TAGS_CSV: &str = "tags.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub meta: RunMeta,
    pub files: Vec<ManifestEntry>,
}

/// Builds an in-memory CSV with an explicit header so empty tables still
/// carry their columns.
pub fn csv_bytes<T: Serialize>(headers: &[&str], rows: &[T]) -> std::io::Result<Vec<u8>> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    wtr.write_record(headers)?;
    for row in rows {
        wtr.serialize(row).map_err(std::io::Error::other)?;
    }
    wtr.into_inner().map_err(|e| e.into_error())
}

/// Writes named files into `out_dir` plus a `manifest.json` with a SHA-256
/// digest per file. Files are written in the order given.
pub fn write_with_manifest(
    out_dir: &Path,
    meta: &RunMeta,
    files: Vec<(&str, Vec<u8>)>,
) -> Result<Manifest, IoError> {
    fs::create_dir_all(out_dir).map_err(|e| IoError::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = out_dir.join(name);
        fs::write(&path, &bytes).map_err(|e| IoError::io(&path, e))?;
        entries.push(ManifestEntry {
            file: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    let manifest = Manifest {
        meta: meta.clone(),
        files: entries,
    };
    let path = out_dir.join(MANIFEST_JSON);
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    fs::write(&path, json).map_err(|e| IoError::io(&path, e))?;
    Ok(manifest)
}

#[derive(Serialize, Deserialize)]
struct EdgeRow {
    first: String,
    second: String,
    weight: usize,
}

#[derive(Serialize, Deserialize)]
struct NodeRow {
    miner: String,
    mean_power: f64,
    degree: usize,
}

#[derive(Serialize, Deserialize)]
struct ClusterRow {
    address: String,
    cluster_id: usize,
}

#[derive(Serialize, Deserialize)]
struct TagRow {
    address: String,
    pool: String,
    provenance: String,
}

const MINER_RESULT_HEADERS: [&str; 8] =
    ["miner", "window", "blocks", "h_hat", "c", "p", "p_adj", "flagged"];
const SUMMARY_HEADERS: [&str; 8] = [
    "miner",
    "active_windows",
    "min",
    "q1",
    "median",
    "q3",
    "max",
    "flagged_fraction",
];
const PROFILE_HEADERS: [&str; 4] = ["lower", "upper", "observations", "abnormal_fraction"];
const PAIR_HEADERS: [&str; 9] = [
    "first", "second", "window", "c_pair", "c_cross", "h_pair", "p", "p_adj", "is_cartel",
];
const WINDOW_HEADERS: [&str; 9] = [
    "window",
    "coin",
    "kind",
    "start",
    "end",
    "first_height",
    "last_height",
    "blocks",
    "miners",
];

fn tag_rows(tags: &PoolTagMap) -> Vec<TagRow> {
    let conflicted: std::collections::HashSet<&str> =
        tags.conflicts.iter().map(|c| c.address.as_str()).collect();
    let mut rows: Vec<TagRow> = tags
        .tags
        .iter()
        .map(|(address, tag)| TagRow {
            address: address.clone(),
            pool: tag.pool.clone(),
            provenance: tag.provenance.to_string(),
        })
        .chain(tags.unknown.iter().map(|address| TagRow {
            address: address.clone(),
            pool: UNKNOWN_POOL.to_string(),
            provenance: if conflicted.contains(address.as_str()) {
                "conflict".to_string()
            } else {
                "none".to_string()
            },
        }))
        .collect();
    rows.sort_by(|a, b| a.address.cmp(&b.address));
    rows
}

/// Serialized tag map as written to `tags.csv`.
pub fn tags_csv(tags: &PoolTagMap) -> Vec<u8> {
    csv_bytes(&["address", "pool", "provenance"], &tag_rows(tags)).expect("in-memory csv")
}

/// Serialized address-to-cluster map as written to `clusters.csv`.
pub fn clusters_csv(clusters: &BTreeMap<String, usize>) -> Vec<u8> {
    let rows: Vec<ClusterRow> = clusters
        .iter()
        .map(|(a, id)| ClusterRow {
            address: a.clone(),
            cluster_id: *id,
        })
        .collect();
    csv_bytes(&["address", "cluster_id"], &rows).expect("in-memory csv")
}

/// Writes the full result file set and its manifest.
pub fn write_results(store: &ResultStore, out_dir: &Path) -> Result<Manifest, IoError> {
    store.check_window_refs()?;
    let to_err = |e: std::io::Error| IoError::io(out_dir, e);
    let edges: Vec<EdgeRow> = store
        .network
        .edges
        .iter()
        .map(|((a, b), w)| EdgeRow {
            first: a.clone(),
            second: b.clone(),
            weight: *w,
        })
        .collect();
    let nodes: Vec<NodeRow> = store
        .network
        .nodes
        .iter()
        .map(|(m, s)| NodeRow {
            miner: m.clone(),
            mean_power: s.mean_power,
            degree: s.degree,
        })
        .collect();
    let pair_headers = &PAIR_HEADERS[..];

    let files = vec![
        (WINDOWS_CSV, csv_bytes(&WINDOW_HEADERS, &store.windows).map_err(to_err)?),
        (
            MINER_RESULTS_CSV,
            csv_bytes(&MINER_RESULT_HEADERS, &store.miner_results).map_err(to_err)?,
        ),
        (
            MINER_SUMMARY_CSV,
            csv_bytes(&SUMMARY_HEADERS, &store.summaries).map_err(to_err)?,
        ),
        (
            POWER_PROFILE_CSV,
            csv_bytes(&PROFILE_HEADERS, &store.power_profile).map_err(to_err)?,
        ),
        (
            PAIR_RESULTS_CSV,
            csv_bytes(pair_headers, &store.pair_results).map_err(to_err)?,
        ),
        (
            CARTEL_EDGES_CSV,
            csv_bytes(&["first", "second", "weight"], &edges).map_err(to_err)?,
        ),
        (
            CARTEL_NODES_CSV,
            csv_bytes(&["miner", "mean_power", "degree"], &nodes).map_err(to_err)?,
        ),
        (CARTEL_DOT, store.network.to_dot().into_bytes()),
        (CLUSTERS_CSV, clusters_csv(&store.clusters)),
        (TAGS_CSV, tags_csv(&store.tags)),
    ];
    write_with_manifest(out_dir, &store.meta, files)
}

fn read_table<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| IoError::schema(i + 2, format!("{}: {e}", path.display()))))
        .collect()
}

/// Loads a store written by [`write_results`].
pub fn read_results(dir: &Path) -> Result<ResultStore, IoError> {
    let manifest_path = dir.join(MANIFEST_JSON);
    let text = fs::read_to_string(&manifest_path).map_err(|e| IoError::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| IoError::schema(e.line(), e.to_string()))?;

    let edges: Vec<EdgeRow> = read_table(&dir.join(CARTEL_EDGES_CSV))?;
    let nodes: Vec<NodeRow> = read_table(&dir.join(CARTEL_NODES_CSV))?;
    let clusters: Vec<ClusterRow> = read_table(&dir.join(CLUSTERS_CSV))?;
    let tag_rows: Vec<TagRow> = read_table(&dir.join(TAGS_CSV))?;

    let mut tags = PoolTagMap::default();
    for row in tag_rows {
        if row.pool == UNKNOWN_POOL {
            tags.unknown.insert(row.address);
        } else {
            let provenance = row
                .provenance
                .parse::<Provenance>()
                .map_err(|e| IoError::schema(0, e))?;
            tags.tags.insert(
                row.address,
                PoolTag {
                    pool: row.pool,
                    provenance,
                },
            );
        }
    }

    Ok(ResultStore {
        meta: manifest.meta,
        windows: read_table(&dir.join(WINDOWS_CSV))?,
        miner_results: read_table(&dir.join(MINER_RESULTS_CSV))?,
        summaries: read_table(&dir.join(MINER_SUMMARY_CSV))?,
        power_profile: read_table(&dir.join(POWER_PROFILE_CSV))?,
        pair_results: read_table(&dir.join(PAIR_RESULTS_CSV))?,
        network: CartelNetwork {
            nodes: nodes
                .into_iter()
                .map(|n| {
                    (
                        n.miner,
                        NodeStats {
                            mean_power: n.mean_power,
                            degree: n.degree,
                        },
                    )
                })
                .collect(),
            edges: edges
                .into_iter()
                .map(|e| ((e.first, e.second), e.weight))
                .collect(),
        },
        clusters: clusters.into_iter().map(|c| (c.address, c.cluster_id)).collect(),
        tags,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct CachedTable {
    blocks: usize,
    len: usize,
    pmf: Vec<f64>,
}

/// Run-count tables keyed by the exact plug-in power `blocks / len`.
///
/// Tables live in memory and, when a directory is configured, as
/// `runcount_<blocks>_<len>.json` files. Loaded files are checked for shape
/// and normalization before use.
#[derive(Debug, Default)]
pub struct TableCache {
    dir: Option<PathBuf>,
    tables: Mutex<HashMap<(usize, usize), Arc<RunCountDistribution>>>,
}

impl TableCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            tables: Mutex::default(),
        }
    }

    fn file(&self, blocks: usize, len: usize) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(format!("runcount_{blocks}_{len}.json")))
    }

    pub fn get(&self, blocks: usize, len: usize) -> Result<Arc<RunCountDistribution>, IoError> {
        if let Some(hit) = self.tables.lock().expect("cache lock").get(&(blocks, len)) {
            return Ok(Arc::clone(hit));
        }
        let table = match self.file(blocks, len).filter(|p| p.exists()) {
            Some(path) => self.load(&path, blocks, len)?,
            None => {
                let h = if len == 0 { 0.0 } else { blocks as f64 / len as f64 };
                let table = runstat::ling_distribution(h, len).map_err(|e| IoError::Cache {
                    path: PathBuf::new(),
                    message: e.to_string(),
                })?;
                if let Some(path) = self.file(blocks, len) {
                    self.store(&path, blocks, &table)?;
                }
                table
            }
        };
        let table = Arc::new(table);
        self.tables
            .lock()
            .expect("cache lock")
            .insert((blocks, len), Arc::clone(&table));
        Ok(table)
    }

    fn load(&self, path: &Path, blocks: usize, len: usize) -> Result<RunCountDistribution, IoError> {
        let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        let bad = |message: String| IoError::Cache {
            path: path.to_path_buf(),
            message,
        };
        let cached: CachedTable = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if cached.blocks != blocks || cached.len != len {
            return Err(bad(format!(
                "file holds ({}, {}), expected ({blocks}, {len})",
                cached.blocks, cached.len
            )));
        }
        let h = if len == 0 { 0.0 } else { blocks as f64 / len as f64 };
        RunCountDistribution::from_table(h, len, cached.pmf).map_err(bad)
    }

    fn store(&self, path: &Path, blocks: usize, table: &RunCountDistribution) -> Result<(), IoError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| IoError::io(parent, e))?;
        }
        let cached = CachedTable {
            blocks,
            len: table.len(),
            pmf: table.pmf().to_vec(),
        };
        let json = serde_json::to_vec(&cached).expect("table serializes");
        fs::write(path, json).map_err(|e| IoError::io(path, e))
    }
}
