//! Selfish-mining and mining-cartel detection from block attribution data.
//!
//! The test statistic is the number of overlapping pairs of consecutive
//! blocks mined by the same miner in a window. Under honest mining each
//! block is an independent draw with the miner's hash share as success
//! probability, so the count follows the type II binomial distribution of
//! order 2 ([`runstat`]). Windows are tested per miner with
//! Benjamini-Hochberg correction ([`detect`]), pairs of miners are tested on
//! their merged indicator ([`cartel`]), addresses are clustered with UTXO
//! heuristics ([`cluster`]), and [`simkit`] generates honest, selfish and
//! cartel chains for calibration.

pub mod runstat;
pub mod detect;
pub mod simkit;
pub mod cartel;
pub mod cluster;
pub mod io;
