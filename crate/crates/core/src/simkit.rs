//! Seeded generators for honest, selfish and cartel block sequences.
//!
//! The withholding engine follows the classic lead-state strategy: found
//! blocks are kept private, a lead of one is revealed when the honest network
//! catches up (creating a tie), a lead of two is revealed in full when
//! threatened, and longer leads release one block per honest block. Only the
//! resulting canonical chain is emitted, since that is all a ledger observer
//! can attribute.

use std::collections::VecDeque;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::BlockRecord;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("powers must be non-negative and sum to 1 (sum = {0})")]
    Simplex(f64),
    #[error("{name} = {value} is outside [0, 1]")]
    Parameter { name: &'static str, value: f64 },
    #[error("an honest miner set is required when the attacker share is below 1")]
    NoHonestMiners,
}

fn unit(name: &'static str, value: f64) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(SimError::Parameter { name, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    /// Attacker hash share.
    pub alpha_pow: f64,
    /// Share of honest power mining on the attacker's branch during a tie.
    pub gamma: f64,
    /// Canonical blocks to emit.
    pub horizon: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Canonical-chain miner labels, exactly `horizon` long.
    pub sequence: Vec<String>,
    /// Attacker (or cartel) blocks divided by `horizon`.
    pub realized_share: f64,
    /// Honest blocks orphaned by the attacker.
    pub stale_count: usize,
    /// Attacker blocks orphaned after losing a tie.
    pub attacker_stale: usize,
}

/// I.i.d. miner indices drawn with the given hash shares.
pub fn simulate_honest(powers: &[f64], len: usize, seed: u64) -> Result<Vec<usize>, SimError> {
    let total: f64 = powers.iter().sum();
    if powers.is_empty() || powers.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(SimError::Simplex(total));
    }
    let dist = WeightedIndex::new(powers).map_err(|_| SimError::Simplex(total))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..len).map(|_| dist.sample(&mut rng)).collect())
}

/// Honest sequence with string labels, for feeding detection directly.
pub fn simulate_honest_labels(
    labels: &[String],
    powers: &[f64],
    len: usize,
    seed: u64,
) -> Result<Vec<String>, SimError> {
    Ok(simulate_honest(powers, len, seed)?
        .into_iter()
        .map(|i| labels[i].clone())
        .collect())
}

/// `n` labels `prefix0`, `prefix1`, ...
pub fn miner_labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

enum State {
    /// The private queue holds the attacker's lead over the public chain.
    Lead,
    /// Two competing public branches of length one.
    Tie { attacker: String, honest: String },
}

struct Engine<'a, F: FnMut(&mut ChaCha8Rng, Option<&str>) -> String> {
    alpha: f64,
    gamma: f64,
    honest: &'a [String],
    attacker_label: F,
    rng: ChaCha8Rng,
    private: VecDeque<String>,
    state: State,
    canonical: Vec<String>,
    attacker_blocks: usize,
    stale_honest: usize,
    stale_attacker: usize,
}

impl<F: FnMut(&mut ChaCha8Rng, Option<&str>) -> String> Engine<'_, F> {
    fn publish_attacker(&mut self, label: String) {
        self.attacker_blocks += 1;
        self.canonical.push(label);
    }

    fn honest_label(&mut self) -> String {
        let i = self.rng.gen_range(0..self.honest.len());
        self.honest[i].clone()
    }

    fn step(&mut self) {
        let attacker_found = self.rng.gen::<f64>() < self.alpha;
        match std::mem::replace(&mut self.state, State::Lead) {
            State::Tie { attacker, honest } => {
                if attacker_found {
                    // Attacker extends its own branch and publishes: both blocks win.
                    let fresh = (self.attacker_label)(&mut self.rng, Some(attacker.as_str()));
                    self.publish_attacker(attacker);
                    self.publish_attacker(fresh);
                    self.stale_honest += 1;
                } else {
                    let fresh = self.honest_label();
                    if self.rng.gen::<f64>() < self.gamma {
                        self.publish_attacker(attacker);
                        self.stale_honest += 1;
                    } else {
                        self.canonical.push(honest);
                        self.stale_attacker += 1;
                    }
                    self.canonical.push(fresh);
                }
            }
            State::Lead => {
                if attacker_found {
                    let tip = self.private.back().map(String::as_str);
                    let label = (self.attacker_label)(&mut self.rng, tip);
                    self.private.push_back(label);
                    return;
                }
                let fresh = self.honest_label();
                match self.private.len() {
                    0 => self.canonical.push(fresh),
                    1 => {
                        let attacker = self.private.pop_front().expect("lead of one");
                        self.state = State::Tie {
                            attacker,
                            honest: fresh,
                        };
                    }
                    2 => {
                        while let Some(label) = self.private.pop_front() {
                            self.publish_attacker(label);
                        }
                        self.stale_honest += 1;
                    }
                    _ => {
                        let label = self.private.pop_front().expect("lead above two");
                        self.publish_attacker(label);
                        self.stale_honest += 1;
                    }
                }
            }
        }
    }

    fn run(mut self, horizon: usize) -> SimResult {
        while self.canonical.len() < horizon {
            self.step();
        }
        // The last step may append two blocks.
        if self.canonical.len() > horizon {
            let dropped = self.canonical.pop().expect("overshoot");
            if !self.honest.contains(&dropped) {
                self.attacker_blocks -= 1;
            }
        }
        let realized_share = if horizon == 0 {
            0.0
        } else {
            self.attacker_blocks as f64 / horizon as f64
        };
        SimResult {
            sequence: self.canonical,
            realized_share,
            stale_count: self.stale_honest,
            attacker_stale: self.stale_attacker,
        }
    }
}

fn withholding<F: FnMut(&mut ChaCha8Rng, Option<&str>) -> String>(
    alpha: f64,
    gamma: f64,
    horizon: usize,
    seed: u64,
    honest: &[String],
    mut attacker_label: F,
) -> Result<SimResult, SimError> {
    unit("alpha_pow", alpha)?;
    unit("gamma", gamma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if alpha >= 1.0 {
        // No competing chain exists: every block is the attacker's.
        let mut sequence: Vec<String> = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let label = attacker_label(&mut rng, sequence.last().map(String::as_str));
            sequence.push(label);
        }
        return Ok(SimResult {
            sequence,
            realized_share: if horizon == 0 { 0.0 } else { 1.0 },
            stale_count: 0,
            attacker_stale: 0,
        });
    }
    if honest.is_empty() {
        return Err(SimError::NoHonestMiners);
    }
    let engine = Engine {
        alpha,
        gamma,
        honest,
        attacker_label,
        rng,
        private: VecDeque::new(),
        state: State::Lead,
        canonical: Vec::with_capacity(horizon + 1),
        attacker_blocks: 0,
        stale_honest: 0,
        stale_attacker: 0,
    };
    Ok(engine.run(horizon))
}

/// Single selfish miner labelled `attacker` against uniformly drawn honest miners.
///
/// Honest labels must not include `attacker`.
pub fn simulate_selfish(
    params: &StrategyParams,
    attacker: &str,
    honest: &[String],
) -> Result<SimResult, SimError> {
    withholding(
        params.alpha_pow,
        params.gamma,
        params.horizon,
        params.seed,
        honest,
        |_, _| attacker.to_string(),
    )
}

/// Who is credited with each block on a cartel's shared private chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CartelAttribution {
    /// The member who found the block, with odds proportional to shares.
    #[default]
    Finder,
    /// Members take turns on the private tip: the first block of a private
    /// branch goes to a member drawn by share, each later block to the member
    /// who did not mine the previous one.
    Alternating,
}

/// Two members sharing one private chain with combined power `shares[0] + shares[1]`.
pub fn simulate_cartel(
    members: [&str; 2],
    shares: [f64; 2],
    gamma: f64,
    horizon: usize,
    seed: u64,
    honest: &[String],
) -> Result<SimResult, SimError> {
    simulate_cartel_with(
        members,
        shares,
        gamma,
        horizon,
        seed,
        honest,
        CartelAttribution::Finder,
    )
}

pub fn simulate_cartel_with(
    members: [&str; 2],
    shares: [f64; 2],
    gamma: f64,
    horizon: usize,
    seed: u64,
    honest: &[String],
    attribution: CartelAttribution,
) -> Result<SimResult, SimError> {
    unit("share", shares[0])?;
    unit("share", shares[1])?;
    let alpha = shares[0] + shares[1];
    let first = if alpha > 0.0 { shares[0] / alpha } else { 0.5 };
    let draw = move |rng: &mut ChaCha8Rng| usize::from(rng.gen::<f64>() >= first);
    match attribution {
        CartelAttribution::Finder => {
            withholding(alpha, gamma, horizon, seed, honest, |rng, _| {
                members[draw(rng)].to_string()
            })
        }
        CartelAttribution::Alternating => {
            withholding(alpha, gamma, horizon, seed, honest, |rng, tip| {
                let who = match tip {
                    Some(prev) if prev == members[0] => 1,
                    Some(prev) if prev == members[1] => 0,
                    _ => draw(rng),
                };
                members[who].to_string()
            })
        }
    }
}

/// Wraps a label sequence as block records with evenly spaced timestamps.
pub fn to_blocks(
    sequence: &[String],
    first_height: u64,
    start_time: i64,
    interval: i64,
) -> Vec<BlockRecord> {
    sequence
        .iter()
        .enumerate()
        .map(|(i, label)| {
            BlockRecord::new(
                first_height + i as u64,
                start_time + i as i64 * interval,
                label.clone(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{count_runs, Window};

    fn honest(n: usize) -> Vec<String> {
        miner_labels("h", n)
    }

    #[test]
    fn honest_sampling() {
        assert_eq!(simulate_honest(&[1.0], 5, 3).unwrap(), vec![0; 5]);
        let a = simulate_honest(&[0.5, 0.5], 100_000, 11).unwrap();
        let b = simulate_honest(&[0.5, 0.5], 100_000, 11).unwrap();
        assert_eq!(a, b);
        let ones = a.iter().filter(|&&i| i == 1).count() as f64;
        let sigma = (100_000.0_f64 * 0.25).sqrt();
        assert!((ones - 50_000.0).abs() < 3.0 * sigma);
        assert!(matches!(simulate_honest(&[0.5, 0.4], 10, 1), Err(SimError::Simplex(_))));
        assert!(simulate_honest(&[1.2, -0.2], 10, 1).is_err());
        assert!(simulate_honest(&[], 10, 1).is_err());
    }

    #[test]
    fn zero_attacker_is_honest() {
        let p = StrategyParams { alpha_pow: 0.0, gamma: 0.5, horizon: 500, seed: 4 };
        let r = simulate_selfish(&p, "atk", &honest(5)).unwrap();
        assert_eq!(r.sequence.len(), 500);
        assert_eq!(r.stale_count, 0);
        assert_eq!(r.realized_share, 0.0);
        assert!(r.sequence.iter().all(|l| l.starts_with('h')));
    }

    #[test]
    fn full_attacker_owns_chain() {
        let p = StrategyParams { alpha_pow: 1.0, gamma: 0.5, horizon: 50, seed: 4 };
        let r = simulate_selfish(&p, "atk", &honest(5)).unwrap();
        assert!(r.sequence.iter().all(|l| l == "atk"));
        assert_eq!(r.realized_share, 1.0);
    }

    #[test]
    fn horizon_exact_and_labels_declared() {
        let h = honest(7);
        for seed in 0..20 {
            let p = StrategyParams { alpha_pow: 0.4, gamma: 0.3, horizon: 997, seed };
            let r = simulate_selfish(&p, "atk", &h).unwrap();
            assert_eq!(r.sequence.len(), 997);
            assert!(r.sequence.iter().all(|l| l == "atk" || h.contains(l)));
            let atk = r.sequence.iter().filter(|l| *l == "atk").count();
            assert_eq!(r.realized_share, atk as f64 / 997.0);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let p = StrategyParams { alpha_pow: 0.3, gamma: 0.5, horizon: 2000, seed: 99 };
        let a = simulate_selfish(&p, "atk", &honest(4)).unwrap();
        let b = simulate_selfish(&p, "atk", &honest(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tie_without_gamma_needs_attacker_block() {
        // With gamma = 0 the attacker's tie block survives only when the
        // attacker also finds the next block.
        let alpha = 0.3;
        let mut ties = 0usize;
        let mut wins = 0usize;
        for seed in 0..2000 {
            let mut engine = Engine {
                alpha,
                gamma: 0.0,
                honest: &honest(3),
                attacker_label: |_: &mut ChaCha8Rng, _: Option<&str>| "atk".to_string(),
                rng: ChaCha8Rng::seed_from_u64(seed),
                private: VecDeque::new(),
                state: State::Tie { attacker: "atk".into(), honest: "h0".into() },
                canonical: Vec::new(),
                attacker_blocks: 0,
                stale_honest: 0,
                stale_attacker: 0,
            };
            engine.step();
            ties += 1;
            if engine.canonical.first().map(String::as_str) == Some("atk") {
                wins += 1;
                assert_eq!(engine.canonical, vec!["atk", "atk"]);
            } else {
                assert_eq!(engine.canonical[0], "h0");
                assert_eq!(engine.stale_attacker, 1);
            }
        }
        let rate = wins as f64 / ties as f64;
        let se = (alpha * (1.0 - alpha) / ties as f64).sqrt();
        assert!((rate - alpha).abs() < 4.0 * se, "tie win rate {rate}");
    }

    #[test]
    fn selfish_attacker_clusters_blocks() {
        let p = StrategyParams { alpha_pow: 0.35, gamma: 0.5, horizon: 5000, seed: 1 };
        let r = simulate_selfish(&p, "atk", &honest(19)).unwrap();
        let w = Window::from_labels(0, r.sequence.clone());
        let c = count_runs(&w, "atk") as f64;
        let h = r.realized_share;
        assert!(c > 4999.0 * h * h * 1.2, "c = {c}, share {h}");
        assert!(r.stale_count > 0);
    }

    #[test]
    fn cartel_members_and_degenerate_shares() {
        let r = simulate_cartel(["a", "b"], [0.0, 0.0], 0.5, 300, 2, &honest(5)).unwrap();
        assert!(r.sequence.iter().all(|l| l.starts_with('h')));
        let r = simulate_cartel(["a", "b"], [0.15, 0.15], 0.5, 20_000, 2, &honest(14)).unwrap();
        let a = r.sequence.iter().filter(|l| *l == "a").count() as f64;
        let b = r.sequence.iter().filter(|l| *l == "b").count() as f64;
        assert!((a / b - 1.0).abs() < 0.1, "{a} vs {b}");
        assert!(simulate_cartel(["a", "b"], [0.6, 1.2], 0.5, 10, 2, &honest(2)).is_err());
    }

    #[test]
    fn parameter_validation() {
        let p = StrategyParams { alpha_pow: 0.3, gamma: 1.5, horizon: 10, seed: 0 };
        assert!(matches!(
            simulate_selfish(&p, "atk", &honest(2)),
            Err(SimError::Parameter { name: "gamma", .. })
        ));
        let p = StrategyParams { alpha_pow: 0.3, gamma: 0.5, horizon: 10, seed: 0 };
        assert_eq!(simulate_selfish(&p, "atk", &[]), Err(SimError::NoHonestMiners));
    }

    #[test]
    fn block_wrapping() {
        let blocks = to_blocks(&honest(3), 10, 1_000, 600);
        assert_eq!(blocks[2].height, 12);
        assert_eq!(blocks[2].timestamp, 2_200);
        assert_eq!(blocks[1].miner, "h1");
    }
}
