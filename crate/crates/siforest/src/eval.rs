//! Benchmark harness: three detection methods on seeded synthetic datasets.
//!
//! For each anomaly type and repeat seed, one dataset is generated and all
//! three methods run on it, so differences in metrics come from the methods
//! alone. Flags come from a shared top-k rule whose contamination defaults
//! to the generator's planted anomaly rate. Reports are deterministic in the
//! base seed, down to the serialized bytes.

use std::collections::BTreeSet;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{fit_forest, score_table, Forest};
use crate::preprocess::{flatten, summarize};
use crate::scan::{build_catalog, AnomalyType, GroundTruth, ScanDataset};
use crate::si::{
    aggregate_by_ip, detect_ips, fit_si_forest, flag_top_k, top_k_count, GroupedTable,
    SiForestConfig,
};
use crate::synth::{generate_experiment, GeneratorConfig};

/// The three compared detection methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodId {
    /// Flatten to one row per pair, baseline forest, per-IP aggregation.
    FlatIforest,
    /// Summarize to one count-vector row per IP, baseline forest.
    SummaryIforest,
    /// Flatten, set-partitioned forest, per-IP aggregation.
    SiForest,
}

impl MethodId {
    pub const ALL: [MethodId; 3] = [
        MethodId::FlatIforest,
        MethodId::SummaryIforest,
        MethodId::SiForest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodId::FlatIforest => "flat_iforest",
            MethodId::SummaryIforest => "summary_iforest",
            MethodId::SiForest => "siforest",
        }
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat_iforest" => Ok(MethodId::FlatIforest),
            "summary_iforest" => Ok(MethodId::SummaryIforest),
            "siforest" => Ok(MethodId::SiForest),
            other => Err(Error::Config(format!(
                "unknown method {other:?}, expected flat_iforest, summary_iforest, or siforest"
            ))),
        }
    }
}

/// Detection quality against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f2: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// F-beta with beta = 2: recall weighted four times precision.
/// Zero when both inputs are zero.
pub fn f2_score(precision: f64, recall: f64) -> f64 {
    let denominator = 4.0 * precision + recall;
    if denominator == 0.0 {
        0.0
    } else {
        5.0 * precision * recall / denominator
    }
}

/// Counts flagged IPs against truth labels. Fractions with a zero
/// denominator are reported as zero.
pub fn compute_metrics(flagged: &[String], truth: &GroundTruth) -> Result<EvalMetrics> {
    let flagged: BTreeSet<&str> = flagged.iter().map(String::as_str).collect();
    for ip in &flagged {
        if truth.get(ip).is_none() {
            return Err(Error::Data(format!(
                "flagged IP {ip} is absent from the ground truth"
            )));
        }
    }
    let anomalous: BTreeSet<&str> = truth.anomalous_ips().into_iter().collect();
    let true_positives = flagged.intersection(&anomalous).count();
    let false_positives = flagged.len() - true_positives;
    let false_negatives = anomalous.len() - true_positives;
    let fraction = |num: usize, denom: usize| {
        if denom == 0 {
            0.0
        } else {
            num as f64 / denom as f64
        }
    };
    let precision = fraction(true_positives, true_positives + false_positives);
    let recall = fraction(true_positives, true_positives + false_negatives);
    Ok(EvalMetrics {
        precision,
        recall,
        f2: f2_score(precision, recall),
        true_positives,
        false_positives,
        false_negatives,
    })
}

/// One method's scores and flags on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutput {
    /// Aggregated score per IP, sorted by IP.
    pub per_ip: Vec<(String, f64)>,
    /// Flagged IPs, highest score first.
    pub flagged: Vec<(String, f64)>,
    pub metrics: EvalMetrics,
}

fn check_contamination(contamination: f64) -> Result<()> {
    if !contamination.is_finite() || contamination <= 0.0 || contamination >= 1.0 {
        return Err(Error::Config(format!(
            "contamination must be within (0, 1), got {contamination}"
        )));
    }
    Ok(())
}

fn fit_baseline(rows: &[Vec<f64>], cfg: &SiForestConfig) -> Result<Forest> {
    fit_forest(rows, cfg.forest)
}

/// Runs one method end to end on one labeled dataset.
pub fn run_method(
    method: MethodId,
    ds: &ScanDataset,
    truth: &GroundTruth,
    cfg: &SiForestConfig,
    contamination: f64,
) -> Result<MethodOutput> {
    check_contamination(contamination)?;
    let (per_ip, flagged) = match method {
        MethodId::FlatIforest => {
            let catalog = build_catalog(ds);
            let table = flatten(ds, &catalog, false)?;
            let forest = fit_baseline(table.rows(), cfg)?;
            let row_scores = score_table(&forest, table.rows())?;
            let per_ip = aggregate_by_ip(&row_scores, table.group_keys(), cfg.aggregation)?;
            let k = top_k_count(contamination, per_ip.len());
            let flagged = flag_top_k(&per_ip, k);
            (per_ip, flagged)
        }
        MethodId::SummaryIforest => {
            let table = summarize(ds);
            let forest = fit_baseline(table.rows(), cfg)?;
            let row_scores = score_table(&forest, table.rows())?;
            let mut per_ip: Vec<(String, f64)> = row_scores
                .into_iter()
                .map(|(i, score)| (table.ips()[i].clone(), score))
                .collect();
            per_ip.sort_by(|a, b| a.0.cmp(&b.0));
            let k = top_k_count(contamination, per_ip.len());
            let flagged = flag_top_k(&per_ip, k);
            (per_ip, flagged)
        }
        MethodId::SiForest => {
            let catalog = build_catalog(ds);
            let table = flatten(ds, &catalog, false)?;
            let grouped = GroupedTable::from(&table);
            let forest = fit_si_forest(&grouped, cfg)?;
            let result = detect_ips(&forest, &grouped, cfg, contamination)?;
            (result.per_ip, result.flagged)
        }
    };
    let flagged_ips: Vec<String> = flagged.iter().map(|(ip, _)| ip.clone()).collect();
    let metrics = compute_metrics(&flagged_ips, truth)?;
    Ok(MethodOutput {
        per_ip,
        flagged,
        metrics,
    })
}

/// Arithmetic mean; zero for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Population standard deviation (n divisor); zero for fewer than two values.
pub fn population_stddev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let variance = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64;
    variance.sqrt()
}

/// Benchmark parameters: the generator base config (its seed is the base
/// seed), the forest config shared by all methods, and the repeat count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkConfig {
    pub generator: GeneratorConfig,
    pub si: SiForestConfig,
    pub n_repeats: usize,
    /// Flagging fraction; `None` uses the generator's anomaly rate.
    pub contamination: Option<f64>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            generator: GeneratorConfig::default(),
            si: SiForestConfig::default(),
            n_repeats: 10,
            contamination: None,
        }
    }
}

impl BenchmarkConfig {
    fn resolved_contamination(&self) -> f64 {
        self.contamination.unwrap_or(self.generator.anomaly_rate)
    }

    fn validate(&self) -> Result<f64> {
        if self.n_repeats == 0 {
            return Err(Error::Config("n_repeats must be >= 1".to_string()));
        }
        self.generator.validate()?;
        self.si.forest.validate()?;
        let contamination = self.resolved_contamination();
        check_contamination(contamination)?;
        Ok(contamination)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub precision: f64,
    pub recall: f64,
    pub f2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub metrics: EvalMetrics,
}

/// One method's results across all repeats of one anomaly type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub per_seed: Vec<SeedMetrics>,
    pub mean: MetricSummary,
    pub stddev: MetricSummary,
}

impl MethodReport {
    fn from_runs(method: MethodId, runs: &[(u64, EvalMetrics)]) -> Self {
        let collect = |f: fn(&EvalMetrics) -> f64| -> Vec<f64> {
            runs.iter().map(|(_, m)| f(m)).collect()
        };
        let precisions = collect(|m| m.precision);
        let recalls = collect(|m| m.recall);
        let f2s = collect(|m| m.f2);
        MethodReport {
            method: method.name().to_string(),
            per_seed: runs
                .iter()
                .map(|&(seed, metrics)| SeedMetrics { seed, metrics })
                .collect(),
            mean: MetricSummary {
                precision: mean(&precisions),
                recall: mean(&recalls),
                f2: mean(&f2s),
            },
            stddev: MetricSummary {
                precision: population_stddev(&precisions),
                recall: population_stddev(&recalls),
                f2: population_stddev(&f2s),
            },
        }
    }

    pub fn mean_f2(&self) -> f64 {
        self.mean.f2
    }

    pub fn mean_recall(&self) -> f64 {
        self.mean.recall
    }
}

/// All methods' results for one anomaly type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeReport {
    pub anomaly_type: u8,
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodReport>,
}

impl TypeReport {
    pub fn method(&self, id: MethodId) -> &MethodReport {
        self.methods
            .iter()
            .find(|m| m.method == id.name())
            .expect("reports carry all three methods")
    }
}

/// Configuration echo embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub generator: GeneratorConfig,
    pub forest: SiForestConfig,
    pub n_repeats: usize,
    pub contamination: f64,
}

/// The full benchmark result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: ReportConfig,
    pub results: Vec<TypeReport>,
}

/// Per-IP score distribution of one (anomaly type, method, label) cell,
/// pooled across repeats: 20 equal bins over [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreHistogram {
    pub anomaly_type: u8,
    pub method: String,
    pub label: String,
    pub bins: [u64; HISTOGRAM_BINS],
}

pub const HISTOGRAM_BINS: usize = 20;

impl ScoreHistogram {
    fn new(anomaly_type: u8, method: MethodId, label: &str) -> Self {
        ScoreHistogram {
            anomaly_type,
            method: method.name().to_string(),
            label: label.to_string(),
            bins: [0; HISTOGRAM_BINS],
        }
    }

    fn record(&mut self, score: f64) {
        let bin = ((score * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        self.bins[bin] += 1;
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }
}

/// A report plus the score histograms behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRun {
    pub report: BenchmarkReport,
    pub histograms: Vec<ScoreHistogram>,
}

fn run_type(
    anomaly_type: AnomalyType,
    cfg: &BenchmarkConfig,
    contamination: f64,
    histograms: &mut Vec<ScoreHistogram>,
) -> Result<TypeReport> {
    let ty = anomaly_type.as_index();
    let seeds: Vec<u64> = (0..cfg.n_repeats as u64)
        .map(|i| cfg.generator.seed.wrapping_add(i))
        .collect();
    let mut runs: Vec<Vec<(u64, EvalMetrics)>> = vec![Vec::new(); MethodId::ALL.len()];
    let mut cells: Vec<(ScoreHistogram, ScoreHistogram)> = MethodId::ALL
        .iter()
        .map(|&m| {
            (
                ScoreHistogram::new(ty, m, "normal"),
                ScoreHistogram::new(ty, m, "anomalous"),
            )
        })
        .collect();
    for &seed in &seeds {
        let gen_cfg = GeneratorConfig {
            seed,
            ..cfg.generator
        };
        let (ds, truth) = generate_experiment(anomaly_type, gen_cfg)?;
        for (slot, &method) in MethodId::ALL.iter().enumerate() {
            let si_cfg = SiForestConfig {
                forest: crate::forest::ForestConfig {
                    seed,
                    ..cfg.si.forest
                },
                ..cfg.si
            };
            let output = run_method(method, &ds, &truth, &si_cfg, contamination)?;
            for (ip, score) in &output.per_ip {
                let label = truth
                    .get(ip)
                    .ok_or_else(|| Error::Data(format!("scored IP {ip} has no label")))?;
                if label.is_anomalous() {
                    cells[slot].1.record(*score);
                } else {
                    cells[slot].0.record(*score);
                }
            }
            runs[slot].push((seed, output.metrics));
        }
    }
    for (normal, anomalous) in cells {
        histograms.push(normal);
        histograms.push(anomalous);
    }
    Ok(TypeReport {
        anomaly_type: ty,
        seeds,
        methods: MethodId::ALL
            .iter()
            .enumerate()
            .map(|(slot, &m)| MethodReport::from_runs(m, &runs[slot]))
            .collect(),
    })
}

/// Runs the three-method comparison for one anomaly type.
pub fn run_benchmark(anomaly_type: AnomalyType, cfg: &BenchmarkConfig) -> Result<TypeReport> {
    let contamination = cfg.validate()?;
    let mut histograms = Vec::new();
    run_type(anomaly_type, cfg, contamination, &mut histograms)
}

/// Runs the comparison for the requested anomaly types (both by default).
pub fn run_full_benchmark(
    types: &[AnomalyType],
    cfg: &BenchmarkConfig,
) -> Result<BenchmarkRun> {
    let contamination = cfg.validate()?;
    let mut histograms = Vec::new();
    let mut results = Vec::new();
    for &ty in types {
        results.push(run_type(ty, cfg, contamination, &mut histograms)?);
    }
    Ok(BenchmarkRun {
        report: BenchmarkReport {
            config: ReportConfig {
                generator: cfg.generator,
                forest: cfg.si,
                n_repeats: cfg.n_repeats,
                contamination,
            },
            results,
        },
        histograms,
    })
}

/// Serializes a report as canonical JSON: byte-identical for equal inputs.
pub fn write_report_json<W: Write>(mut writer: W, report: &BenchmarkReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, report)
        .map_err(|e| Error::Serialize(e.to_string()))?;
    writer.write_all(b"\n")?;
    Ok(())
}

/// Writes per-seed metrics as CSV: `anomaly_type,method,seed,precision,recall,f2`.
pub fn write_report_csv<W: Write>(writer: W, report: &BenchmarkReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["anomaly_type", "method", "seed", "precision", "recall", "f2"])
        .map_err(|e| Error::Serialize(e.to_string()))?;
    for ty in &report.results {
        for method in &ty.methods {
            for entry in &method.per_seed {
                w.write_record([
                    ty.anomaly_type.to_string(),
                    method.method.clone(),
                    entry.seed.to_string(),
                    entry.metrics.precision.to_string(),
                    entry.metrics.recall.to_string(),
                    entry.metrics.f2.to_string(),
                ])
                .map_err(|e| Error::Serialize(e.to_string()))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes score histograms as CSV:
/// `anomaly_type,method,label,bin_lo,bin_hi,count`.
pub fn write_histogram_csv<W: Write>(writer: W, histograms: &[ScoreHistogram]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["anomaly_type", "method", "label", "bin_lo", "bin_hi", "count"])
        .map_err(|e| Error::Serialize(e.to_string()))?;
    for h in histograms {
        for (i, &count) in h.bins.iter().enumerate() {
            let lo = i as f64 / HISTOGRAM_BINS as f64;
            let hi = (i + 1) as f64 / HISTOGRAM_BINS as f64;
            w.write_record([
                h.anomaly_type.to_string(),
                h.method.clone(),
                h.label.clone(),
                lo.to_string(),
                hi.to_string(),
                count.to_string(),
            ])
            .map_err(|e| Error::Serialize(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}
