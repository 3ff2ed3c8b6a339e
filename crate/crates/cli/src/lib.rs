//! `runscan` subcommands. Each `cmd_*` writes its summary to the given
//! writer and its files through the io module, so tests can drive the
//! whole pipeline in-process.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use runscan_core::cartel::{self, CartelError};
use runscan_core::cluster::{self, ClusterError, UNKNOWN_POOL};
use runscan_core::detect::{
    self, BlockRecord, DetectError, Family, MinerWindowResult, WindowPolicy,
};
use runscan_core::io::{self as rio, FileFormat, IoError, ResultStore, RunMeta, WindowRow};
use runscan_core::runstat::{self, DomainError};
use runscan_core::simkit::{self, CartelAttribution, SimError, StrategyParams};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Bucket edges for the hashing-power incidence table.
pub const POWER_EDGES: [f64; 8] = [0.0, 0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0];

/// Exit code 1: runtime or I/O failure.
pub const EXIT_IO: u8 = 1;
/// Exit code 2: invalid input or parameters.
pub const EXIT_INVALID: u8 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn invalid(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        let code = if e.is_validation() { EXIT_INVALID } else { EXIT_IO };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        // A closed stdout (e.g. piped into `head`) is not a failure.
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            return CliError {
                code: 0,
                message: String::new(),
            };
        }
        CliError::io(e.to_string())
    }
}

macro_rules! invalid_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::invalid(e.to_string())
            }
        }
    )*};
}
invalid_from!(DetectError, CartelError, ClusterError, SimError, DomainError);

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "runscan", version, about = "Detect selfish mining and mining cartels from block attribution data")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Input file (blocks, transactions) or result directory (report).
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Output directory, or output file for `simulate`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Input/output file format: csv or jsonl.
    #[arg(long, global = true, default_value = "csv")]
    pub format: FileFormat,
    /// Coin name; selects the default window policy.
    #[arg(long, global = true, default_value = "btc")]
    pub coin: String,
    /// monthly | weekly | daily | days:N | count:N
    #[arg(long, global = true)]
    pub policy: Option<WindowPolicy>,
    #[arg(long, global = true, default_value_t = 0.05)]
    pub fdr: f64,
    /// Minimum blocks in a window for a miner to enter pair tests.
    #[arg(long, global = true, default_value_t = cartel::DEFAULT_MIN_BLOCKS)]
    pub min_blocks: usize,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Correction family: window or global.
    #[arg(long, global = true, default_value = "window")]
    pub family: Family,
    #[arg(long, global = true)]
    pub quiet: bool,
}

impl GlobalArgs {
    fn policy(&self) -> WindowPolicy {
        self.policy
            .unwrap_or_else(|| WindowPolicy::for_coin(&self.coin))
    }

    fn check_fdr(&self) -> Result<()> {
        if self.fdr > 0.0 && self.fdr < 1.0 {
            Ok(())
        } else {
            Err(CliError::invalid(format!("--fdr {} must be in (0, 1)", self.fdr)))
        }
    }

    fn input(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::invalid("--input is required"))
    }

    fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::invalid("--out is required"))
    }

    fn meta(&self) -> RunMeta {
        RunMeta {
            coin: self.coin.clone(),
            policy: self.policy().to_string(),
            fdr: self.fdr,
            family: self.family.to_string(),
            min_blocks: self.min_blocks,
            tool_version: VERSION.to_string(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact run-count distribution and critical value.
    Dist(DistArgs),
    /// Per-window selfish-miner tests.
    Detect,
    /// Individual tests plus pairwise cartel tests and the cartel network.
    Cartel,
    /// Address clustering and pool tagging of a transaction file.
    Cluster(ClusterArgs),
    /// Generate a synthetic block file.
    Simulate(SimulateArgs),
    /// Figure-ready tables from a stored result directory.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DistArgs {
    /// Success probability (miner's hashing power).
    #[arg(long, required_unless_present = "curve")]
    pub h: Option<f64>,
    /// Sequence length in blocks.
    #[arg(long, short = 'T', required_unless_present = "curve")]
    pub len: Option<usize>,
    /// Significance level for the critical count.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Emit critical counts over a grid of h for each length in --lens.
    #[arg(long)]
    pub curve: bool,
    #[arg(long, value_delimiter = ',', default_value = "100,1000,5000")]
    pub lens: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    /// Block file with a pool column; named pools supply the known addresses.
    #[arg(long)]
    pub blocks: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMode {
    Honest,
    Selfish,
    Cartel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Attribution {
    Finder,
    Alternating,
}

impl From<Attribution> for CartelAttribution {
    fn from(a: Attribution) -> Self {
        match a {
            Attribution::Finder => CartelAttribution::Finder,
            Attribution::Alternating => CartelAttribution::Alternating,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "honest")]
    pub mode: SimMode,
    /// Canonical blocks per simulated window.
    #[arg(long, default_value_t = 5000)]
    pub blocks: usize,
    /// Independent windows, concatenated; window w uses seed + w.
    #[arg(long, default_value_t = 1)]
    pub windows: usize,
    /// Number of equal-power honest miners.
    #[arg(long, default_value_t = 20)]
    pub honest: usize,
    /// Selfish miner's hashing power.
    #[arg(long, default_value_t = 0.35)]
    pub alpha: f64,
    /// Cartel members' hashing powers.
    #[arg(long, value_delimiter = ',', default_value = "0.15,0.15")]
    pub shares: Vec<f64>,
    /// Share of honest power mining on the withheld branch during a tie.
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, value_enum, default_value = "finder")]
    pub attribution: Attribution,
    /// Timestamp of the first block (epoch seconds).
    #[arg(long, default_value_t = 1_577_836_800)]
    pub start: i64,
    /// Seconds between consecutive blocks.
    #[arg(long, default_value_t = 600)]
    pub interval: i64,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Result directory of a run before clustering, for the unknown-share table.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
}

pub const SELFISH_LABEL: &str = "selfish";
pub const CARTEL_LABELS: [&str; 2] = ["cartel_a", "cartel_b"];

pub fn honest_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("honest{i:02}")).collect()
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Dist(args) => cmd_dist(args, out),
        Command::Detect => cmd_detect(g, out),
        Command::Cartel => cmd_cartel(g, out),
        Command::Cluster(args) => cmd_cluster(g, args, out),
        Command::Simulate(args) => cmd_simulate(g, args, out),
        Command::Report(args) => cmd_report(g, args, out),
    }
}

/// `(h, len, c*)` for every h in `hs` and length in `lens`.
pub fn critical_curve(hs: &[f64], lens: &[usize], alpha: f64) -> Result<Vec<(f64, usize, usize)>> {
    let mut rows = Vec::with_capacity(hs.len() * lens.len());
    for &len in lens {
        for &h in hs {
            rows.push((h, len, runstat::critical_count(h, len, alpha)?));
        }
    }
    Ok(rows)
}

/// Shortest round-trip form, switching to exponent notation for tiny values.
pub fn fmt_prob(v: f64) -> String {
    if v == 0.0 || v.abs() >= 1e-5 {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn cmd_dist(args: &DistArgs, out: &mut dyn Write) -> Result<()> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::invalid(format!("--alpha {} must be in (0, 1)", args.alpha)));
    }
    if args.curve {
        let hs: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
        writeln!(out, "h,len,c_star")?;
        for (h, len, c) in critical_curve(&hs, &args.lens, args.alpha)? {
            writeln!(out, "{h},{len},{c}")?;
        }
        return Ok(());
    }
    let (h, len) = (args.h.unwrap_or_default(), args.len.unwrap_or_default());
    let table = runstat::ling_distribution(h, len)?;
    let tails = table.tails();
    writeln!(out, "x,pmf,tail")?;
    for (x, (p, t)) in table.pmf().iter().zip(&tails).enumerate() {
        writeln!(out, "{x},{},{}", fmt_prob(*p), fmt_prob(*t))?;
    }
    writeln!(out, "c*={}", table.critical_count(args.alpha)?)?;
    Ok(())
}

/// Windows plus individual (and optionally pair) results for a block list.
pub fn analyse(g: &GlobalArgs, blocks: &[BlockRecord], with_pairs: bool) -> Result<ResultStore> {
    g.check_fdr()?;
    let windows = detect::split_windows(blocks, g.policy(), &g.coin)?;
    let run = detect::test_windows(&windows, g.fdr, g.family)?;
    let summaries = detect::summarize_miners(&run.results, g.fdr);
    let power_profile = if run.results.is_empty() {
        Vec::new()
    } else {
        detect::power_profile(&run.results, &POWER_EDGES)?
    };
    let (pair_results, network) = if with_pairs {
        let pairs = cartel::test_pairs_all(&windows, &run.results, g.fdr, g.min_blocks)?;
        let network = cartel::build_network(&pairs, &run.results);
        (pairs, network)
    } else {
        Default::default()
    };
    Ok(ResultStore {
        meta: g.meta(),
        windows: windows.iter().map(WindowRow::from).collect(),
        miner_results: run.results,
        summaries,
        power_profile,
        pair_results,
        network,
        ..Default::default()
    })
}

fn print_detection(store: &ResultStore, out: &mut dyn Write) -> Result<()> {
    let counts = detect::flag_counts(&store.miner_results);
    let flagged: usize = counts.values().map(|c| c.1).sum();
    writeln!(
        out,
        "windows={} tested_windows={} miner_tests={} flagged={}",
        store.windows.len(),
        counts.len(),
        store.miner_results.len(),
        flagged
    )?;
    writeln!(out, "window,tested,flagged")?;
    for (w, (tested, flagged)) in &counts {
        writeln!(out, "{w},{tested},{flagged}")?;
    }
    writeln!(out, "criterion,miners,quantile_share,fraction_share")?;
    for bar in detect::criterion_bars(&store.summaries, store.meta.fdr) {
        writeln!(
            out,
            "{},{},{},{}",
            bar.criterion.label(),
            bar.miners,
            bar.quantile_share,
            bar.fraction_share
        )?;
    }
    Ok(())
}

pub fn cmd_detect(g: &GlobalArgs, out: &mut dyn Write) -> Result<()> {
    let blocks = rio::parse_blocks(g.input()?, g.format)?;
    let store = analyse(g, &blocks, false)?;
    rio::write_results(&store, g.out()?)?;
    if !g.quiet {
        print_detection(&store, out)?;
    }
    Ok(())
}

pub fn cmd_cartel(g: &GlobalArgs, out: &mut dyn Write) -> Result<()> {
    let blocks = rio::parse_blocks(g.input()?, g.format)?;
    let store = analyse(g, &blocks, true)?;
    rio::write_results(&store, g.out()?)?;
    if !g.quiet {
        print_detection(&store, out)?;
        let candidates = store.pair_results.len();
        let cartels = store.pair_results.iter().filter(|r| r.is_cartel).count();
        writeln!(out, "pair_tests={candidates} cartel_detections={cartels}")?;
        writeln!(out, "first,second,weight")?;
        for (a, b, w) in store.network.ranked_edges() {
            writeln!(out, "{a},{b},{w}")?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct MergeRow<'a> {
    a: &'a str,
    b: &'a str,
    heuristic: String,
}

#[derive(Serialize)]
struct UnknownShareRow {
    stage: &'static str,
    unknown_blocks: usize,
    total_blocks: usize,
    share: f64,
}

fn share(part: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        part as f64 / total as f64
    }
}

/// Account-model chains have no UTXO inputs to cluster.
fn is_account_chain(coin: &str) -> bool {
    matches!(coin.to_ascii_lowercase().as_str(), "eth" | "etc" | "ethereum")
}

pub fn cmd_cluster(g: &GlobalArgs, args: &ClusterArgs, out: &mut dyn Write) -> Result<()> {
    if is_account_chain(&g.coin) {
        return Err(CliError::invalid(format!(
            "address clustering needs a UTXO chain; '{}' is account-based",
            g.coin
        )));
    }
    let txs = rio::parse_transactions(g.input()?, g.format)?;
    let out_dir = g.out()?;
    let (mut partition, report) = cluster::cluster_addresses(&txs);
    let blocks = match &args.blocks {
        Some(path) => Some(rio::parse_blocks(path, g.format)?),
        None => None,
    };
    let known = match &blocks {
        Some(b) => cluster::known_pools_from_blocks(b)?,
        None => BTreeMap::new(),
    };
    let tags = cluster::tag_unknown_miners(&partition, &known)?;
    let membership = partition.membership();

    let merges: Vec<MergeRow> = partition
        .merges()
        .iter()
        .map(|m| MergeRow {
            a: &m.a,
            b: &m.b,
            heuristic: m.heuristic.to_string(),
        })
        .collect();
    let merges_csv = rio::csv_bytes(&["a", "b", "heuristic"], &merges)?;
    let mut files = vec![
        (rio::CLUSTERS_CSV, rio::clusters_csv(&membership)),
        (rio::TAGS_CSV, rio::tags_csv(&tags)),
        ("merges.csv", merges_csv),
    ];

    let mut shares = None;
    if let Some(blocks) = &blocks {
        let tagged = cluster::apply_tags(blocks, &tags);
        let (before, total) = cluster::unknown_share(blocks);
        let (after, _) = cluster::unknown_share(&tagged);
        let rows = [
            UnknownShareRow {
                stage: "before",
                unknown_blocks: before,
                total_blocks: total,
                share: share(before, total),
            },
            UnknownShareRow {
                stage: "after",
                unknown_blocks: after,
                total_blocks: total,
                share: share(after, total),
            },
        ];
        let table = rio::csv_bytes(&["stage", "unknown_blocks", "total_blocks", "share"], &rows)?;
        let mut tagged_file = Vec::new();
        rio::write_blocks(&mut tagged_file, &tagged, FileFormat::Csv)?;
        files.push(("unknown_share.csv", table));
        files.push(("tagged_blocks.csv", tagged_file));
        shares = Some((before, after, total));
    }
    rio::write_with_manifest(out_dir, &g.meta(), files)?;

    if !g.quiet {
        let clusters = partition.clusters();
        let multi = clusters.iter().filter(|c| c.len() > 1).count();
        writeln!(
            out,
            "addresses={} clusters={} multi_address_clusters={multi}",
            partition.len(),
            clusters.len()
        )?;
        write!(out, "merges H1={} H2={} Hp=", report.h1_merges, report.h2_merges)?;
        match report.hp_merges {
            Some(n) => writeln!(out, "{n}")?,
            None => writeln!(out, "skipped (no spend links)")?,
        }
        let heuristic_tags = tags
            .tags
            .values()
            .filter(|t| t.provenance != cluster::Provenance::Known)
            .count();
        writeln!(
            out,
            "tagged={heuristic_tags} conflicts={} unknown={}",
            tags.conflicts.len(),
            tags.unknown.len()
        )?;
        if let Some((before, after, total)) = shares {
            writeln!(out, "{UNKNOWN_POOL} blocks: before={before}/{total} after={after}/{total}")?;
        }
    }
    Ok(())
}

/// Label sequence for one simulated window.
pub fn simulate_window(args: &SimulateArgs, seed: u64) -> Result<simkit::SimResult> {
    let honest = honest_labels(args.honest);
    match args.mode {
        SimMode::Honest => {
            if args.honest == 0 {
                return Err(CliError::invalid("--honest must be at least 1"));
            }
            let powers = vec![1.0 / args.honest as f64; args.honest];
            let sequence = simkit::simulate_honest_labels(&honest, &powers, args.blocks, seed)?;
            Ok(simkit::SimResult {
                sequence,
                realized_share: 0.0,
                stale_count: 0,
                attacker_stale: 0,
            })
        }
        SimMode::Selfish => Ok(simkit::simulate_selfish(
            &StrategyParams {
                alpha_pow: args.alpha,
                gamma: args.gamma,
                horizon: args.blocks,
                seed,
            },
            SELFISH_LABEL,
            &honest,
        )?),
        SimMode::Cartel => {
            let [a, b] = args.shares[..] else {
                return Err(CliError::invalid("--shares takes exactly two values"));
            };
            Ok(simkit::simulate_cartel_with(
                CARTEL_LABELS,
                [a, b],
                args.gamma,
                args.blocks,
                seed,
                &honest,
                args.attribution.into(),
            )?)
        }
    }
}

pub fn cmd_simulate(g: &GlobalArgs, args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    if args.interval <= 0 {
        return Err(CliError::invalid("--interval must be positive"));
    }
    let mut sequence = Vec::with_capacity(args.blocks * args.windows);
    let (mut realized, mut stale) = (0.0, 0);
    for w in 0..args.windows {
        let result = simulate_window(args, g.seed.wrapping_add(w as u64))?;
        realized += result.realized_share;
        stale += result.stale_count;
        sequence.extend(result.sequence);
    }
    let blocks = simkit::to_blocks(&sequence, 1, args.start, args.interval);
    match &g.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            let file = fs::File::create(path)
                .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
            rio::write_blocks(std::io::BufWriter::new(file), &blocks, g.format)?;
            if !g.quiet {
                let windows = args.windows.max(1) as f64;
                writeln!(
                    out,
                    "blocks={} windows={} mean_realized_share={} orphaned_honest={}",
                    blocks.len(),
                    args.windows,
                    realized / windows,
                    stale
                )?;
            }
        }
        None => rio::write_blocks(out, &blocks, g.format)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct PowerShareRow<'a> {
    window: usize,
    miner: &'a str,
    blocks: usize,
    share: f64,
}

#[derive(Serialize)]
struct FlagCountRow {
    window: usize,
    tested: usize,
    flagged: usize,
}

#[derive(Serialize)]
struct UnknownWindowRow {
    window: usize,
    before: Option<f64>,
    after: f64,
}

#[derive(Serialize)]
struct CriterionRow {
    criterion: &'static str,
    miners: usize,
    quantile_share: f64,
    fraction_share: f64,
}

#[derive(Serialize)]
struct EdgeRankRow<'a> {
    rank: usize,
    first: &'a str,
    second: &'a str,
    weight: usize,
    first_power: f64,
    second_power: f64,
}

fn unknown_by_window(results: &[MinerWindowResult]) -> BTreeMap<usize, f64> {
    results
        .iter()
        .filter(|r| r.miner.eq_ignore_ascii_case(UNKNOWN_POOL))
        .map(|r| (r.window, r.h_hat))
        .collect()
}

pub const REPORT_FILES: [&str; 6] = [
    "fig2_power_shares.csv",
    "fig3_flag_counts.csv",
    "fig4_unknown_share.csv",
    "fig5_criterion_bars.csv",
    "fig6_power_profile.csv",
    "fig8_cartel_edges.csv",
];

pub fn cmd_report(g: &GlobalArgs, args: &ReportArgs, out: &mut dyn Write) -> Result<()> {
    let store = rio::read_results(g.input()?)?;
    let baseline = match &args.baseline {
        Some(dir) => Some(rio::read_results(dir)?),
        None => None,
    };

    let shares: Vec<PowerShareRow> = store
        .miner_results
        .iter()
        .map(|r| PowerShareRow {
            window: r.window,
            miner: &r.miner,
            blocks: r.blocks,
            share: r.h_hat,
        })
        .collect();

    let counts = detect::flag_counts(&store.miner_results);
    let flags: Vec<FlagCountRow> = store
        .windows
        .iter()
        .map(|w| {
            let (tested, flagged) = counts.get(&w.window).copied().unwrap_or_default();
            FlagCountRow {
                window: w.window,
                tested,
                flagged,
            }
        })
        .collect();

    let after = unknown_by_window(&store.miner_results);
    let before = baseline.as_ref().map(|b| unknown_by_window(&b.miner_results));
    let unknown: Vec<UnknownWindowRow> = store
        .windows
        .iter()
        .map(|w| UnknownWindowRow {
            window: w.window,
            before: before
                .as_ref()
                .map(|b| b.get(&w.window).copied().unwrap_or(0.0)),
            after: after.get(&w.window).copied().unwrap_or(0.0),
        })
        .collect();

    let bars: Vec<CriterionRow> = if store.summaries.is_empty() {
        Vec::new()
    } else {
        detect::criterion_bars(&store.summaries, store.meta.fdr)
            .into_iter()
            .map(|b| CriterionRow {
                criterion: b.criterion.label(),
                miners: b.miners,
                quantile_share: b.quantile_share,
                fraction_share: b.fraction_share,
            })
            .collect()
    };

    let power = |m: &str| store.network.nodes.get(m).map_or(0.0, |n| n.mean_power);
    let edges: Vec<EdgeRankRow> = store
        .network
        .ranked_edges()
        .into_iter()
        .enumerate()
        .map(|(i, (a, b, w))| EdgeRankRow {
            rank: i + 1,
            first: a,
            second: b,
            weight: w,
            first_power: power(a),
            second_power: power(b),
        })
        .collect();

    let files = vec![
        (
            REPORT_FILES[0],
            rio::csv_bytes(&["window", "miner", "blocks", "share"], &shares)?,
        ),
        (
            REPORT_FILES[1],
            rio::csv_bytes(&["window", "tested", "flagged"], &flags)?,
        ),
        (
            REPORT_FILES[2],
            rio::csv_bytes(&["window", "before", "after"], &unknown)?,
        ),
        (
            REPORT_FILES[3],
            rio::csv_bytes(&["criterion", "miners", "quantile_share", "fraction_share"], &bars)
                ?,
        ),
        (
            REPORT_FILES[4],
            rio::csv_bytes(
                &["lower", "upper", "observations", "abnormal_fraction"],
                &store.power_profile,
            )
            ?,
        ),
        (
            REPORT_FILES[5],
            rio::csv_bytes(
                &["rank", "first", "second", "weight", "first_power", "second_power"],
                &edges,
            )
            ?,
        ),
    ];
    let manifest = rio::write_with_manifest(g.out()?, &store.meta, files)?;
    if !g.quiet {
        for f in &manifest.files {
            writeln!(out, "{} {} {}", f.sha256, f.bytes, f.file)?;
        }
    }
    Ok(())
}
