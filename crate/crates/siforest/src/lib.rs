//! Isolation forests for set-structured network-scan data.
//!
//! Internet-wide scans describe each host as an IP plus variable-length
//! lists of open ports and the services on them. This crate implements two
//! ways to feed such data to an isolation forest and one forest variant
//! built for it:
//!
//! - [`preprocess::flatten`] expands every service-port pair into its own
//!   row, [`preprocess::summarize`] collapses each IP into one vector of
//!   occurrence counts;
//! - [`forest`] is a baseline isolation forest over numeric rows;
//! - [`si`] is the set-partitioned variant: trees stop splitting once a
//!   node's rows all belong to one IP, and row scores aggregate per IP.
//!
//! [`synth`] generates seeded datasets with planted volume spikes (type 1)
//! and service-port mismatches (type 2); [`eval`] benchmarks the three
//! resulting detection methods against the planted ground truth. Every
//! random decision flows from explicit seeds, so all outputs, including
//! serialized reports, are reproducible byte for byte.

pub mod error;
pub mod eval;
pub mod forest;
pub mod preprocess;
pub mod scan;
pub mod si;
pub mod synth;

mod rng;

pub use error::{Error, Result};
pub use eval::{
    compute_metrics, f2_score, run_benchmark, run_full_benchmark, run_method, BenchmarkConfig,
    BenchmarkReport, EvalMetrics, MethodId,
};
pub use forest::{
    anomaly_score, expected_path_c, fit_forest, path_length, score_table, Forest, ForestConfig,
    Node, PureLeafAdjust,
};
pub use preprocess::{flatten, summarize, FlatTable, SummaryTable};
pub use scan::{
    build_catalog, read_labels_path, read_scans_path, validate_dataset, write_labels_path,
    write_scans_path, AnomalyType, GroundTruth, Label, ScanDataset, ScanRecord, ServiceCatalog,
};
pub use si::{
    aggregate_by_ip, detect_ips, fit_si_forest, flag_top_k, si_path_length, top_k_count,
    Aggregation, DetectResult, GroupedTable, Sampler, SiForestConfig,
};
pub use synth::{
    generate_experiment, generate_normal, standard_service_map, GeneratorConfig,
    StandardServiceMap,
};
