//! Property suites over generated datasets, tables, and the scoring pipeline.

use std::collections::BTreeMap;

use proptest::prelude::*;
use siforest::scan::{read_labels, read_scans, write_labels, write_scans};
use siforest::si::flag_top_k;
use siforest::{
    aggregate_by_ip, build_catalog, compute_metrics, expected_path_c, fit_forest, fit_si_forest,
    flatten, generate_experiment, path_length, score_table, si_path_length, summarize,
    validate_dataset, Aggregation, AnomalyType, ForestConfig, GeneratorConfig, GroundTruth,
    GroupedTable, Label, Node, ScanDataset, SiForestConfig, StandardServiceMap,
};

fn small_config() -> impl Strategy<Value = GeneratorConfig> {
    (
        10usize..40,
        1usize..5,
        (1usize..4, 0usize..5),
        0.1f64..0.45,
        2u32..6,
        1usize..5,
        any::<u64>(),
        12usize..48,
        any::<bool>(),
    )
        .prop_map(
            |(n_ips, scans, (lo, extra), rate, factor, mismatch, seed, sc, fixed)| {
                GeneratorConfig {
                    n_ips,
                    scans_per_ip: scans,
                    pairs_per_scan: (lo, lo + extra),
                    anomaly_rate: rate,
                    type1_spike_factor: factor,
                    type2_mismatch_pairs: mismatch,
                    seed,
                    service_count: sc,
                    fixed_counts: fixed,
                }
            },
        )
}

fn anomaly_type() -> impl Strategy<Value = AnomalyType> {
    prop_oneof![Just(AnomalyType::Type1), Just(AnomalyType::Type2)]
}

/// Feature tables with heavy value repetition, so constant nodes occur.
fn coarse_table() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..50, 1usize..4).prop_flat_map(|(n_rows, n_features)| {
        prop::collection::vec(
            prop::collection::vec((0i32..12).prop_map(f64::from), n_features),
            n_rows,
        )
    })
}

fn records_per_ip(ds: &ScanDataset) -> BTreeMap<&str, usize> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &ds.records {
        *counts.entry(r.ip.as_str()).or_default() += 1;
    }
    counts
}

fn median(mut values: Vec<usize>) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generated_datasets_validate_and_round_trip(cfg in small_config(), ty in anomaly_type()) {
        let (ds, truth) = generate_experiment(ty, cfg).unwrap();
        prop_assert!(validate_dataset(&ds).is_empty());
        prop_assert!(truth.covers(&ds));

        let mut bytes = Vec::new();
        write_scans(&mut bytes, &ds).unwrap();
        let reread = read_scans(bytes.as_slice(), "mem").unwrap();
        prop_assert_eq!(&reread, &ds);
        let mut again = Vec::new();
        write_scans(&mut again, &reread).unwrap();
        prop_assert_eq!(&again, &bytes);

        let mut label_bytes = Vec::new();
        write_labels(&mut label_bytes, &truth).unwrap();
        let truth_back = read_labels(label_bytes.as_slice(), "mem").unwrap();
        prop_assert_eq!(&truth_back, &truth);
    }

    #[test]
    fn planted_count_is_exact(cfg in small_config(), ty in anomaly_type()) {
        let (ds, truth) = generate_experiment(ty, cfg).unwrap();
        prop_assert_eq!(truth.anomalous_ips().len(), cfg.planted_count().unwrap());
        prop_assert_eq!(ds.distinct_ips().len(), cfg.n_ips);
        prop_assert_eq!(truth.len(), cfg.n_ips);
        for ip in truth.anomalous_ips() {
            match truth.get(ip) {
                Some(Label::Anomalous(t)) => prop_assert_eq!(t, ty),
                other => prop_assert!(false, "unexpected label {other:?}"),
            }
        }
    }

    #[test]
    fn type1_injection_is_sound(cfg in small_config()) {
        let (ds, truth) = generate_experiment(AnomalyType::Type1, cfg).unwrap();
        let map = StandardServiceMap::sized(cfg.service_count).unwrap();
        prop_assert_eq!(siforest::synth::count_non_standard_pairs(&ds, &map), 0);

        let counts = records_per_ip(&ds);
        let normal_counts: Vec<usize> = counts
            .iter()
            .filter(|(ip, _)| !truth.get(ip).unwrap().is_anomalous())
            .map(|(_, c)| *c)
            .collect();
        let floor = (median(normal_counts) * 0.5).ceil().max(1.0) as usize;
        for ip in truth.anomalous_ips() {
            let got = counts[ip];
            prop_assert!(
                got >= cfg.type1_spike_factor as usize * floor,
                "spiked {ip} has {got} records, floor {floor}, factor {}",
                cfg.type1_spike_factor
            );
        }
    }

    #[test]
    fn type2_injection_is_sound(cfg in small_config()) {
        let (ds, truth) = generate_experiment(AnomalyType::Type2, cfg).unwrap();
        let map = StandardServiceMap::sized(cfg.service_count).unwrap();
        let mut non_standard: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &ds.records {
            let bad = r
                .pairs()
                .filter(|(port, service)| !map.is_standard_pair(service, *port))
                .count();
            *non_standard.entry(r.ip.as_str()).or_default() += bad;
        }
        for (ip, label) in truth.iter() {
            let expected = if label.is_anomalous() { cfg.type2_mismatch_pairs } else { 0 };
            prop_assert_eq!(non_standard.get(ip).copied().unwrap_or(0), expected);
        }
    }

    #[test]
    fn flatten_preserves_pair_multisets(cfg in small_config(), ty in anomaly_type()) {
        let (ds, _) = generate_experiment(ty, cfg).unwrap();
        let catalog = build_catalog(&ds);
        let table = flatten(&ds, &catalog, false).unwrap();
        prop_assert_eq!(table.n_rows(), ds.total_pairs());

        let mut expected: BTreeMap<String, Vec<(u32, String)>> = BTreeMap::new();
        for r in &ds.records {
            let entry = expected.entry(r.ip.clone()).or_default();
            for (port, service) in r.pairs() {
                entry.push((port, service.to_string()));
            }
        }
        for pairs in expected.values_mut() {
            pairs.sort();
        }
        prop_assert_eq!(table.pairs_by_ip(), expected);
    }

    #[test]
    fn summarize_conserves_pair_counts(cfg in small_config(), ty in anomaly_type()) {
        let (ds, _) = generate_experiment(ty, cfg).unwrap();
        let table = summarize(&ds);
        let mut pair_totals: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &ds.records {
            *pair_totals.entry(r.ip.as_str()).or_default() += r.pair_count();
        }
        prop_assert_eq!(table.n_rows(), pair_totals.len());
        for (i, ip) in table.ips().iter().enumerate() {
            let total = pair_totals[ip.as_str()] as f64;
            prop_assert_eq!(table.port_sum(i), total);
            prop_assert_eq!(table.service_sum(i), total);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn scores_stay_within_unit_interval(
        rows in coarse_table(),
        n_trees in 3usize..12,
        seed in any::<u64>(),
        parallel in any::<bool>(),
    ) {
        let cfg = ForestConfig { n_trees, subsample_size: 32, seed, parallel, ..ForestConfig::default() };
        let forest = fit_forest(&rows, cfg).unwrap();
        for (_, score) in score_table(&forest, &rows).unwrap() {
            prop_assert!(score > 0.0 && score <= 1.0, "score {score} out of range");
        }
    }

    #[test]
    fn path_lengths_respect_depth_cap(
        rows in coarse_table(),
        seed in any::<u64>(),
    ) {
        let cfg = ForestConfig { n_trees: 5, subsample_size: 16, seed, ..ForestConfig::default() };
        let forest = fit_forest(&rows, cfg).unwrap();
        let psi = forest.subsample_size();
        let cap = (psi as f64).log2().ceil().max(1.0);
        let bound = cap + expected_path_c(psi) + 1e-9;
        for tree in forest.trees() {
            for row in &rows {
                let h = path_length(tree, row).unwrap();
                prop_assert!(h >= 0.0 && h <= bound, "path {h} outside [0, {bound}]");
            }
        }
    }

    #[test]
    fn forest_json_round_trips(rows in coarse_table(), seed in any::<u64>()) {
        let cfg = ForestConfig { n_trees: 4, subsample_size: 16, seed, ..ForestConfig::default() };
        let forest = fit_forest(&rows, cfg).unwrap();
        let mut bytes = Vec::new();
        siforest::forest::save_forest(&mut bytes, &forest).unwrap();
        let loaded = siforest::forest::load_forest(bytes.as_slice()).unwrap();
        prop_assert_eq!(loaded, forest);
    }

    #[test]
    fn distinct_groups_match_baseline_exactly(
        rows in coarse_table(),
        seed in any::<u64>(),
    ) {
        let keys: Vec<String> = (0..rows.len()).map(|i| format!("k{i}")).collect();
        let grouped = GroupedTable::new(rows.clone(), &keys).unwrap();
        let forest_cfg = ForestConfig { n_trees: 5, subsample_size: 16, seed, ..ForestConfig::default() };
        let baseline = fit_forest(&rows, forest_cfg).unwrap();
        let si_cfg = SiForestConfig { forest: forest_cfg, ..SiForestConfig::default() };
        let si = fit_si_forest(&grouped, &si_cfg).unwrap();

        fn same_shape(a: &Node, b: &Node) -> bool {
            match (a, b) {
                (
                    Node::Internal { feature: fa, split: sa, left: la, right: ra },
                    Node::Internal { feature: fb, split: sb, left: lb, right: rb },
                ) => fa == fb && sa == sb && same_shape(la, lb) && same_shape(ra, rb),
                (Node::External { size: za, .. }, Node::External { size: zb, .. }) => za == zb,
                _ => false,
            }
        }
        for (a, b) in baseline.trees().iter().zip(si.trees()) {
            prop_assert!(same_shape(a, b));
            for row in &rows {
                let h_base = path_length(a, row).unwrap();
                let h_si = si_path_length(b, row, si_cfg.pure_leaf).unwrap();
                prop_assert_eq!(h_base, h_si);
            }
        }
    }

    #[test]
    fn every_leaf_has_a_stop_reason(
        order in (8usize..40)
            .prop_flat_map(|n| Just((0..n).collect::<Vec<usize>>()).prop_shuffle()),
        group_pool in 2usize..6,
        seed in any::<u64>(),
    ) {
        // Distinct per-column values rule out constant nodes, so every leaf
        // must be single-row, group-pure, or sitting at the depth cap.
        let rows: Vec<Vec<f64>> = order.iter().map(|&v| vec![v as f64]).collect();
        let keys: Vec<String> = (0..rows.len()).map(|i| format!("g{}", i % group_pool)).collect();
        let grouped = GroupedTable::new(rows, &keys).unwrap();
        let forest_cfg = ForestConfig { n_trees: 4, subsample_size: 16, seed, ..ForestConfig::default() };
        let si_cfg = SiForestConfig { forest: forest_cfg, ..SiForestConfig::default() };
        let forest = fit_si_forest(&grouped, &si_cfg).unwrap();
        let cap = (forest.subsample_size() as f64).log2().ceil().max(1.0) as usize;

        fn check(node: &Node, depth: usize, cap: usize) -> std::result::Result<(), String> {
            match node {
                Node::Internal { left, right, .. } => {
                    check(left, depth + 1, cap)?;
                    check(right, depth + 1, cap)
                }
                Node::External { size, group_pure, .. } => {
                    if *size == 1 || *group_pure || depth >= cap {
                        Ok(())
                    } else {
                        Err(format!("leaf of size {size} at depth {depth} has no stop reason"))
                    }
                }
            }
        }
        for tree in forest.trees() {
            if let Err(msg) = check(tree, 0, cap) {
                prop_assert!(false, "{}", msg);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_respects_group_bounds(
        scored in prop::collection::vec((0usize..8, 0.0f64..1.0), 1..60),
    ) {
        let groups: Vec<String> = scored.iter().map(|(g, _)| format!("10.0.0.{g}")).collect();
        let row_scores: Vec<(usize, f64)> =
            scored.iter().enumerate().map(|(i, (_, s))| (i, *s)).collect();
        let extreme = aggregate_by_ip(&row_scores, &groups, Aggregation::Extreme).unwrap();
        let mean = aggregate_by_ip(&row_scores, &groups, Aggregation::Mean).unwrap();
        prop_assert_eq!(extreme.len(), mean.len());

        let mut by_group: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for ((_, s), g) in scored.iter().zip(&groups) {
            by_group.entry(g.as_str()).or_default().push(*s);
        }
        prop_assert_eq!(extreme.len(), by_group.len());
        for ((ip_e, hi), (ip_m, avg)) in extreme.iter().zip(&mean) {
            prop_assert_eq!(ip_e, ip_m);
            let rows = &by_group[ip_e.as_str()];
            let lo = rows.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = rows.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((max - hi).abs() < 1e-12);
            prop_assert!(*avg <= hi + 1e-12);
            prop_assert!(*avg >= lo - 1e-12 && *avg <= max + 1e-12);
        }
        let mut sorted = extreme.clone();
        sorted.sort_by(|a, b| a.0.cmp(&b.0));
        prop_assert_eq!(sorted, extreme);
    }

    #[test]
    fn top_k_flags_are_the_highest_scores(
        scores in prop::collection::vec(0.0f64..1.0, 1..50),
        k_seed in any::<u64>(),
    ) {
        let per_ip: Vec<(String, f64)> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("ip{i:03}"), *s))
            .collect();
        let k = (k_seed as usize % per_ip.len()) + 1;
        let flagged = flag_top_k(&per_ip, k);
        prop_assert_eq!(flagged.len(), k);
        let min_flagged = flagged.iter().map(|(_, s)| *s).fold(f64::INFINITY, f64::min);
        let flagged_ips: std::collections::BTreeSet<&str> =
            flagged.iter().map(|(ip, _)| ip.as_str()).collect();
        for (ip, s) in &per_ip {
            if !flagged_ips.contains(ip.as_str()) {
                prop_assert!(*s <= min_flagged + 1e-12);
            }
        }
    }

    #[test]
    fn metrics_stay_bounded_and_favor_recall(
        labels in prop::collection::vec((any::<bool>(), any::<bool>()), 1..80),
    ) {
        let mut truth = GroundTruth::new();
        let mut flagged = Vec::new();
        for (i, (anomalous, flag)) in labels.iter().enumerate() {
            let ip = format!("192.0.2.{i}");
            let label = if *anomalous {
                Label::Anomalous(AnomalyType::Type2)
            } else {
                Label::Normal
            };
            truth.set(ip.clone(), label);
            if *flag {
                flagged.push(ip);
            }
        }
        let m = compute_metrics(&flagged, &truth).unwrap();
        for v in [m.precision, m.recall, m.f2] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(m.true_positives + m.false_positives, flagged.len());
        let planted = truth.anomalous_ips().len();
        prop_assert_eq!(m.true_positives + m.false_negatives, planted);
        if m.precision > 0.0 && m.recall > 0.0 {
            let f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
            if m.recall >= m.precision {
                prop_assert!(m.f2 >= f1 - 1e-12);
            } else {
                prop_assert!(m.f2 <= f1 + 1e-12);
            }
            prop_assert!(m.f2 >= m.precision.min(m.recall) - 1e-12);
            prop_assert!(m.f2 <= m.precision.max(m.recall) + 1e-12);
        }
    }
}
