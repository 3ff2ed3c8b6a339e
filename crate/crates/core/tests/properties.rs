use std::collections::BTreeMap;

use proptest::prelude::*;

use runscan_core::cartel::{self, PairWindowResult};
use runscan_core::cluster::{self, AddressPartition, Heuristic, Transaction, TxIo};
use runscan_core::detect::{self, BlockRecord, Window, WindowPolicy};
use runscan_core::io::{self as rio, FileFormat};
use runscan_core::runstat;

fn labels_strategy(max_len: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(0u8..5, 0..max_len)
        .prop_map(|v| v.into_iter().map(|i| format!("m{i}")).collect())
}

fn window_of(labels: &[String]) -> Window {
    Window::from_labels(0, labels.iter().cloned())
}

/// Re-applies the step-up monotonization and cap in rank order of `raw`.
fn monotonize(raw: &[f64], adjusted: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]).then(a.cmp(&b)));
    let mut out = adjusted.to_vec();
    let mut running = 1.0f64;
    for &i in order.iter().rev() {
        running = running.min(adjusted[i]);
        out[i] = running.min(1.0);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn p_value_monotone_in_count_and_power(
        h1 in 0.0f64..1.0,
        dh in 0.0f64..0.5,
        len in 2usize..80,
        c in 0usize..80,
    ) {
        let c = c % len;
        let h2 = (h1 + dh).min(1.0);
        let p = runstat::p_value(h1, len, c).unwrap();
        if c + 1 < len {
            prop_assert!(runstat::p_value(h1, len, c + 1).unwrap() <= p + 1e-12);
        }
        prop_assert!(runstat::p_value(h2, len, c).unwrap() + 1e-12 >= p);
    }

    #[test]
    fn boundary_branches(h in 0.0f64..=1.0, len in 3usize..120) {
        let d = runstat::ling_distribution(h, len).unwrap();
        prop_assert!((d.pmf()[len - 1] - h.powi(len as i32)).abs() <= 1e-12);
        let expect = 2.0 * h.powi(len as i32 - 1) * (1.0 - h);
        prop_assert!((d.pmf()[len - 2] - expect).abs() <= 1e-12);
        prop_assert!((d.total() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn recursion_matches_chain(h in 0.0f64..=1.0, len in 0usize..60) {
        let a = runstat::ling_distribution(h, len).unwrap();
        let b = runstat::pmf_chain(h, len).unwrap();
        for (x, y) in a.pmf().iter().zip(b.pmf()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn bh_permutation_invariant(
        p in prop::collection::vec(0.0f64..=1.0, 1..30),
        seed in any::<u64>(),
    ) {
        let adjusted = detect::bh_adjust(&p).unwrap();
        let mut perm: Vec<usize> = (0..p.len()).collect();
        // deterministic shuffle from the seed
        let mut state = seed | 1;
        for i in (1..perm.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            perm.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let shuffled: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
        let adj_shuffled = detect::bh_adjust(&shuffled).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(adj_shuffled[k], adjusted[i]);
        }
    }

    #[test]
    fn bh_never_decreases_and_is_monotone_fixed_point(
        p in prop::collection::vec(0.0f64..=1.0, 1..30),
    ) {
        let adjusted = detect::bh_adjust(&p).unwrap();
        for (raw, adj) in p.iter().zip(&adjusted) {
            prop_assert!(adj >= raw);
            prop_assert!(*adj <= 1.0);
        }
        prop_assert_eq!(monotonize(&p, &adjusted), adjusted.clone());
        let ones = vec![1.0; p.len()];
        prop_assert_eq!(detect::bh_adjust(&ones).unwrap(), ones);
    }

    #[test]
    fn windows_partition_the_stream(
        steps in prop::collection::vec((-3000i64..200_000, 0u8..4), 0..300),
        policy_pick in 0usize..5,
        count in 1usize..50,
    ) {
        let policy = [
            WindowPolicy::Monthly,
            WindowPolicy::Weekly,
            WindowPolicy::Days(1),
            WindowPolicy::Days(5),
            WindowPolicy::FixedCount(count),
        ][policy_pick];
        let mut ts = 1_500_000_000i64;
        let blocks: Vec<BlockRecord> = steps
            .iter()
            .enumerate()
            .map(|(i, &(dt, m))| {
                ts += dt;
                BlockRecord::new(10 + i as u64, ts, format!("m{m}"))
            })
            .collect();
        let windows = detect::split_windows(&blocks, policy, "btc").unwrap();
        let joined: Vec<&String> = windows.iter().flat_map(|w| w.sequence.iter()).collect();
        let expected: Vec<&String> = blocks.iter().map(|b| &b.miner).collect();
        prop_assert_eq!(joined, expected);
        let mut next = 10u64;
        for (i, w) in windows.iter().enumerate() {
            prop_assert_eq!(w.id, i);
            prop_assert!(!w.is_empty());
            prop_assert_eq!(w.first_height, next);
            next = w.last_height + 1;
        }
    }

    #[test]
    fn runs_fit_in_adjacencies(labels in labels_strategy(200)) {
        let w = window_of(&labels);
        let total: usize = w.tally().values().map(|t| t.runs).sum();
        prop_assert!(total <= labels.len().saturating_sub(1));
        for (miner, t) in w.tally() {
            prop_assert_eq!(t.runs, detect::count_runs(&w, miner));
        }
    }

    #[test]
    fn fdr_extremes(labels in labels_strategy(120)) {
        let w = window_of(&labels);
        prop_assume!(w.len() >= 2);
        let all = detect::test_window(&w, 1.0).unwrap();
        let any_unit = all.iter().any(|r| r.p >= 1.0);
        for r in &all {
            prop_assert_eq!(r.flagged, r.p_adj < 1.0);
            if !any_unit && r.p < 1.0 {
                prop_assert!(r.flagged);
            }
        }
        let none = detect::test_window(&w, f64::MIN_POSITIVE).unwrap();
        prop_assert!(none.iter().all(|r| !r.flagged));
    }

    #[test]
    fn pair_counts_symmetric_and_dominating(labels in labels_strategy(150)) {
        let w = window_of(&labels);
        for i in 0..5 {
            for j in (i + 1)..5 {
                let (a, b) = (format!("m{i}"), format!("m{j}"));
                let ab = cartel::count_pair_runs(&w, &a, &b).unwrap();
                prop_assert_eq!(ab, cartel::count_pair_runs(&w, &b, &a).unwrap());
                prop_assert!(ab >= detect::count_runs(&w, &a) + detect::count_runs(&w, &b));
                prop_assert_eq!(
                    ab,
                    detect::count_runs(&w, &a)
                        + detect::count_runs(&w, &b)
                        + cartel::count_cross_runs(&w, &a, &b).unwrap()
                );
            }
        }
    }

    #[test]
    fn pair_power_is_merged_share(labels in labels_strategy(150)) {
        let w = window_of(&labels);
        prop_assume!(w.len() >= 2);
        let individual = detect::test_window(&w, 0.05).unwrap();
        for r in cartel::test_pairs(&w, &individual, 0.05, 1).unwrap() {
            let merged = labels.iter().filter(|l| **l == r.first || **l == r.second).count();
            prop_assert_eq!(r.h_pair, merged as f64 / labels.len() as f64);
        }
    }

    #[test]
    fn network_ignores_input_order(
        flags in prop::collection::vec((0u8..5, 0u8..5, 0usize..10, any::<bool>()), 0..60),
    ) {
        let records: Vec<PairWindowResult> = flags
            .iter()
            .filter(|(a, b, _, _)| a < b)
            .map(|&(a, b, window, is_cartel)| PairWindowResult {
                first: format!("m{a}"),
                second: format!("m{b}"),
                window,
                c_pair: 0,
                c_cross: 0,
                h_pair: 0.1,
                p: 0.0,
                p_adj: 0.0,
                is_cartel,
            })
            .collect();
        let forward = cartel::build_network(&records, &[]);
        let mut reversed = records.clone();
        reversed.reverse();
        prop_assert_eq!(&forward, &cartel::build_network(&reversed, &[]));

        let mut expected: BTreeMap<(String, String), usize> = BTreeMap::new();
        for r in records.iter().filter(|r| r.is_cartel) {
            *expected.entry((r.first.clone(), r.second.clone())).or_default() += 1;
        }
        prop_assert_eq!(forward.edges, expected);
    }

    #[test]
    fn block_files_round_trip(
        rows in prop::collection::vec((1u64..50, -1000i64..1000, "[a-z,\" ]{1,8}", prop::option::of("[A-Za-z]{1,6}")), 0..40),
        jsonl in any::<bool>(),
    ) {
        let mut height = 0u64;
        let blocks: Vec<BlockRecord> = rows
            .into_iter()
            .map(|(dh, ts, miner, pool)| {
                height += dh;
                match pool {
                    Some(pool) => BlockRecord {
                        height,
                        timestamp: ts,
                        miner: pool,
                        address: Some(miner),
                    },
                    None => BlockRecord::new(height, ts, miner),
                }
            })
            .collect();
        let format = if jsonl { FileFormat::Jsonl } else { FileFormat::Csv };
        let mut buf = Vec::new();
        rio::write_blocks(&mut buf, &blocks, format).unwrap();
        let back = match format {
            FileFormat::Csv => rio::read_blocks_csv(buf.as_slice()).unwrap(),
            FileFormat::Jsonl => rio::read_blocks_jsonl(buf.as_slice()).unwrap(),
        };
        prop_assert_eq!(back, blocks);
    }

    #[test]
    fn heuristic_views_refine(txs in prop::collection::vec(
        (prop::collection::vec((0u8..12, 1u64..1000), 1..4), prop::collection::vec((0u8..12, 1u64..1000), 1..3)),
        1..25,
    )) {
        let txs: Vec<Transaction> = txs
            .into_iter()
            .enumerate()
            .map(|(i, (ins, outs))| Transaction {
                id: format!("t{i}"),
                is_coinbase: false,
                inputs: ins.into_iter().map(|(a, v)| TxIo::new(format!("a{a}"), v)).collect(),
                outputs: outs.into_iter().map(|(a, v)| TxIo::new(format!("a{a}"), v)).collect(),
                spent_by: Vec::new(),
            })
            .collect();
        let (partition, _) = cluster::cluster_addresses(&txs);
        let views: Vec<AddressPartition> = Heuristic::PRIORITY
            .iter()
            .map(|&h| partition.restricted(h))
            .collect();
        let addresses: Vec<String> = partition.addresses().map(str::to_string).collect();
        for pair in views.windows(2) {
            let (mut coarse_src, mut fine) = (pair[1].clone(), pair[0].clone());
            for a in &addresses {
                for b in &addresses {
                    if fine.same_cluster(a, b) {
                        prop_assert!(coarse_src.same_cluster(a, b));
                    }
                }
            }
        }

        // re-running H1 adds no merges
        let mut again = partition.clone();
        prop_assert_eq!(cluster::h1_multi_input(&txs, &mut again), 0);
        prop_assert_eq!(cluster::h2_apply(&txs, &mut again), 0);

        // H1 is order-free
        let mut reversed = txs.clone();
        reversed.reverse();
        let mut fwd = AddressPartition::new();
        let mut rev = AddressPartition::new();
        cluster::h1_multi_input(&txs, &mut fwd);
        cluster::h1_multi_input(&reversed, &mut rev);
        for a in &addresses {
            for b in &addresses {
                prop_assert_eq!(fwd.same_cluster(a, b), rev.same_cluster(a, b));
            }
        }
    }
}
