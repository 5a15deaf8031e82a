//! Command-line wiring for the siforest library: dataset generation,
//! preprocessing, detection, and the three-method benchmark, all driven by
//! explicit seeds so identical invocations produce identical files.

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use siforest::eval::{write_histogram_csv, write_report_csv, write_report_json};
use siforest::preprocess::{write_flat_csv, write_summary_csv};
use siforest::scan::{read_labels_path, read_scans_path, write_labels_path, write_scans_path};
use siforest::{
    build_catalog, compute_metrics, detect_ips, fit_forest, fit_si_forest, flag_top_k, flatten,
    generate_experiment, run_full_benchmark, score_table, summarize, top_k_count, Aggregation,
    AnomalyType, BenchmarkConfig, Error, ForestConfig, GeneratorConfig, GroupedTable, MethodId,
    SiForestConfig,
};

/// Usage problems (bad flags, unknown values) exit with this code.
pub const EXIT_USAGE: i32 = 1;

/// Data and configuration problems (unreadable files, invalid ranges) exit
/// with this code.
pub const EXIT_DATA: i32 = 2;

#[derive(Parser)]
#[command(
    name = "siforest",
    version,
    about = "Anomaly detection for set-structured scan data",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scan dataset with planted anomalies.
    Generate(GenerateArgs),
    /// Convert a scan dataset into a flat or summary feature table (CSV).
    Preprocess(PreprocessArgs),
    /// Score a dataset and flag the most anomalous IPs.
    Detect(DetectArgs),
    /// Compare the three methods over repeated seeded runs.
    Benchmark(BenchmarkArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AnomalyTypeArg {
    #[value(name = "1", help = "usage spike on standard services")]
    Type1,
    #[value(name = "2", help = "standard service on a non-standard port")]
    Type2,
}

impl From<AnomalyTypeArg> for AnomalyType {
    fn from(a: AnomalyTypeArg) -> Self {
        match a {
            AnomalyTypeArg::Type1 => AnomalyType::Type1,
            AnomalyTypeArg::Type2 => AnomalyType::Type2,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    #[value(name = "flat_iforest")]
    FlatIforest,
    #[value(name = "summary_iforest")]
    SummaryIforest,
    #[value(name = "siforest")]
    Siforest,
}

impl From<MethodArg> for MethodId {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::FlatIforest => MethodId::FlatIforest,
            MethodArg::SummaryIforest => MethodId::SummaryIforest,
            MethodArg::Siforest => MethodId::SiForest,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    #[value(name = "extreme")]
    Extreme,
    #[value(name = "mean")]
    Mean,
}

impl From<AggregationArg> for Aggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::Extreme => Aggregation::Extreme,
            AggregationArg::Mean => Aggregation::Mean,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "flatten")]
    Flatten,
    #[value(name = "summarize")]
    Summarize,
}

#[derive(Args, Clone, Copy)]
struct GeneratorArgs {
    /// Distinct IPs to generate.
    #[arg(long = "n-ips", default_value_t = 1000)]
    n_ips: usize,
    /// Mean scan records per IP.
    #[arg(long = "scans-per-ip", default_value_t = 20)]
    scans_per_ip: usize,
    /// Fraction of IPs to plant as anomalous.
    #[arg(long = "anomaly-rate", default_value_t = 0.05)]
    anomaly_rate: f64,
    /// Volume multiplier for type-1 spikes.
    #[arg(long = "spike-factor", default_value_t = 10)]
    spike_factor: u32,
    /// Mismatched pairs in each type-2 record.
    #[arg(long = "mismatch-pairs", default_value_t = 3)]
    mismatch_pairs: usize,
    /// Size of the standard service map.
    #[arg(long = "service-count", default_value_t = 32)]
    service_count: usize,
}

impl GeneratorArgs {
    fn to_config(self, seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            n_ips: self.n_ips,
            scans_per_ip: self.scans_per_ip,
            anomaly_rate: self.anomaly_rate,
            type1_spike_factor: self.spike_factor,
            type2_mismatch_pairs: self.mismatch_pairs,
            service_count: self.service_count,
            seed,
            ..GeneratorConfig::default()
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Which anomaly type to plant.
    #[arg(long = "anomaly-type", value_enum)]
    anomaly_type: AnomalyTypeArg,
    #[command(flatten)]
    generator: GeneratorArgs,
    /// Master seed for all randomness.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output path for the scan dataset (JSON lines).
    #[arg(long = "out")]
    out: PathBuf,
    /// Optional output path for the ground-truth label CSV.
    #[arg(long = "labels")]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Input scan dataset (JSON lines).
    #[arg(long = "in")]
    input: PathBuf,
    /// Output CSV path.
    #[arg(long = "out")]
    out: PathBuf,
    /// Table layout to produce.
    #[arg(long, value_enum, default_value = "flatten")]
    mode: ModeArg,
    /// Include the numeric IP as a feature column (flatten mode only).
    #[arg(long = "include-ip", default_value_t = false)]
    include_ip: bool,
}

#[derive(Args)]
struct DetectArgs {
    /// Input scan dataset (JSON lines).
    #[arg(long = "in")]
    input: PathBuf,
    /// Detection method.
    #[arg(long, value_enum, default_value = "siforest")]
    method: MethodArg,
    /// Per-IP score aggregation for row-level methods.
    #[arg(long, value_enum, default_value = "extreme")]
    aggregation: AggregationArg,
    /// Trees per forest.
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Training rows sampled per tree (capped at the dataset size).
    #[arg(long, default_value_t = 256)]
    subsample: usize,
    /// Fraction of IPs to flag.
    #[arg(long, default_value_t = 0.05)]
    contamination: f64,
    /// Master seed for all randomness.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output path for the flagged-IP CSV (ip,score).
    #[arg(long = "out")]
    out: PathBuf,
    /// Optional ground-truth label CSV; when given, metrics are printed.
    #[arg(long = "labels")]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Restrict the run to one anomaly type (default: both).
    #[arg(long = "anomaly-type", value_enum)]
    anomaly_type: Option<AnomalyTypeArg>,
    #[command(flatten)]
    generator: GeneratorArgs,
    /// Base seed; repeat i uses seed + i.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Trees per forest.
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Training rows sampled per tree (capped at the dataset size).
    #[arg(long, default_value_t = 256)]
    subsample: usize,
    /// Per-IP score aggregation for row-level methods.
    #[arg(long, value_enum, default_value = "extreme")]
    aggregation: AggregationArg,
    /// Fraction of IPs to flag (default: the planted anomaly rate).
    #[arg(long)]
    contamination: Option<f64>,
    /// Seeded repeats per anomaly type.
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Output path for the JSON report.
    #[arg(long = "out")]
    out: PathBuf,
    /// Optional per-seed metrics CSV.
    #[arg(long = "csv")]
    csv: Option<PathBuf>,
    /// Optional per-IP score histogram CSV for plotting.
    #[arg(long = "plot-data")]
    plot_data: Option<PathBuf>,
}

/// Parses `argv` and runs the selected subcommand, returning the process
/// exit code. Writes human-readable errors to stderr.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful terminations.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Preprocess(args) => cmd_preprocess(args),
        Command::Detect(args) => cmd_detect(args),
        Command::Benchmark(args) => cmd_benchmark(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn cmd_generate(args: GenerateArgs) -> siforest::Result<()> {
    let cfg = args.generator.to_config(args.seed);
    let (ds, truth) = generate_experiment(args.anomaly_type.into(), cfg)?;
    write_scans_path(&args.out, &ds)?;
    if let Some(labels) = &args.labels {
        write_labels_path(labels, &truth)?;
    }
    println!(
        "wrote {} records for {} IPs ({} anomalous) to {}",
        ds.len(),
        cfg.n_ips,
        truth.anomalous_ips().len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_preprocess(args: PreprocessArgs) -> siforest::Result<()> {
    let ds = read_scans_path(&args.input)?;
    let out = File::create(&args.out)?;
    match args.mode {
        ModeArg::Flatten => {
            let catalog = build_catalog(&ds);
            let table = flatten(&ds, &catalog, args.include_ip)?;
            write_flat_csv(out, &table)?;
            println!(
                "wrote {} rows x {} features to {}",
                table.n_rows(),
                table.n_features(),
                args.out.display()
            );
        }
        ModeArg::Summarize => {
            let table = summarize(&ds);
            write_summary_csv(out, &table)?;
            println!(
                "wrote {} rows x {} features to {}",
                table.n_rows(),
                table.n_features(),
                args.out.display()
            );
        }
    }
    Ok(())
}

/// Scores every IP with the chosen method; row-level methods aggregate with
/// the configured mode, the summary method scores IP rows directly.
fn score_ips(
    ds: &siforest::ScanDataset,
    method: MethodId,
    si_cfg: &SiForestConfig,
) -> siforest::Result<Vec<(String, f64)>> {
    match method {
        MethodId::FlatIforest => {
            let catalog = build_catalog(ds);
            let table = flatten(ds, &catalog, false)?;
            let forest = fit_forest(table.rows(), si_cfg.forest)?;
            let scores = score_table(&forest, table.rows())?;
            siforest::aggregate_by_ip(&scores, table.group_keys(), si_cfg.aggregation)
        }
        MethodId::SummaryIforest => {
            let table = summarize(ds);
            let forest = fit_forest(table.rows(), si_cfg.forest)?;
            let scores = score_table(&forest, table.rows())?;
            let mut per_ip: Vec<(String, f64)> = scores
                .into_iter()
                .map(|(i, s)| (table.ips()[i].clone(), s))
                .collect();
            per_ip.sort_by(|a, b| a.0.cmp(&b.0));
            Ok(per_ip)
        }
        MethodId::SiForest => {
            let catalog = build_catalog(ds);
            let table = flatten(ds, &catalog, false)?;
            let grouped = GroupedTable::from(&table);
            let forest = fit_si_forest(&grouped, si_cfg)?;
            let scored = siforest::si::si_score_table(&forest, &grouped, si_cfg.pure_leaf)?;
            siforest::aggregate_by_ip(&scored, &grouped.keys(), si_cfg.aggregation)
        }
    }
}

fn cmd_detect(args: DetectArgs) -> siforest::Result<()> {
    if !(args.contamination > 0.0 && args.contamination < 1.0) {
        return Err(Error::Config(format!(
            "contamination must be within (0, 1), got {}",
            args.contamination
        )));
    }
    let ds = read_scans_path(&args.input)?;
    let si_cfg = SiForestConfig {
        forest: ForestConfig {
            n_trees: args.trees,
            subsample_size: args.subsample,
            seed: args.seed,
            ..ForestConfig::default()
        },
        aggregation: args.aggregation.into(),
        ..SiForestConfig::default()
    };
    let method: MethodId = args.method.into();
    let flagged = if method == MethodId::SiForest {
        let catalog = build_catalog(&ds);
        let table = flatten(&ds, &catalog, false)?;
        let grouped = GroupedTable::from(&table);
        let forest = fit_si_forest(&grouped, &si_cfg)?;
        detect_ips(&forest, &grouped, &si_cfg, args.contamination)?.flagged
    } else {
        let per_ip = score_ips(&ds, method, &si_cfg)?;
        let k = top_k_count(args.contamination, per_ip.len());
        flag_top_k(&per_ip, k)
    };

    let mut writer = csv::Writer::from_writer(File::create(&args.out)?);
    writer
        .write_record(["ip", "score"])
        .and_then(|()| {
            flagged
                .iter()
                .try_for_each(|(ip, score)| writer.write_record([ip.as_str(), &score.to_string()]))
        })
        .map_err(|e| Error::Serialize(e.to_string()))?;
    writer
        .into_inner()
        .map_err(|e| Error::Serialize(e.to_string()))?
        .flush()?;
    println!("flagged {} IPs to {}", flagged.len(), args.out.display());

    if let Some(labels) = &args.labels {
        let truth = read_labels_path(labels)?;
        let ips: Vec<String> = flagged.iter().map(|(ip, _)| ip.clone()).collect();
        let m = compute_metrics(&ips, &truth)?;
        println!(
            "precision={:.4} recall={:.4} f2={:.4}",
            m.precision, m.recall, m.f2
        );
    }
    Ok(())
}

fn cmd_benchmark(args: BenchmarkArgs) -> siforest::Result<()> {
    let cfg = BenchmarkConfig {
        generator: args.generator.to_config(args.seed),
        si: SiForestConfig {
            forest: ForestConfig {
                n_trees: args.trees,
                subsample_size: args.subsample,
                seed: args.seed,
                ..ForestConfig::default()
            },
            aggregation: args.aggregation.into(),
            ..SiForestConfig::default()
        },
        n_repeats: args.repeats,
        contamination: args.contamination,
    };
    let types: Vec<AnomalyType> = match args.anomaly_type {
        Some(t) => vec![t.into()],
        None => vec![AnomalyType::Type1, AnomalyType::Type2],
    };
    let run = run_full_benchmark(&types, &cfg)?;

    write_report_json(File::create(&args.out)?, &run.report)?;
    if let Some(path) = &args.csv {
        write_report_csv(File::create(path)?, &run.report)?;
    }
    if let Some(path) = &args.plot_data {
        write_histogram_csv(File::create(path)?, &run.histograms)?;
    }
    for type_report in &run.report.results {
        for method in &type_report.methods {
            println!(
                "type {} {:<16} mean F2 {:.4} (P {:.4}, R {:.4})",
                type_report.anomaly_type,
                method.method,
                method.mean.f2,
                method.mean.precision,
                method.mean.recall
            );
        }
    }
    println!("wrote report to {}", args.out.display());
    Ok(())
}
