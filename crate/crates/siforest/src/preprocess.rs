//! Feature engineering for set-structured scan data.
//!
//! Two strategies turn variable-length scan records into fixed-width numeric
//! tables: flattening expands every service-port pair into its own row keyed
//! by IP, summarization collapses each IP into one row of per-port and
//! per-service occurrence counts.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::scan::{ip_to_u32, ScanDataset, ServiceCatalog};

/// One row per service-port pair, keyed by the owning IP.
///
/// Feature columns are numeric: the port and the catalog id of the service,
/// plus optionally the IP itself. Row order follows the source dataset
/// (records front to back, pairs left to right).
#[derive(Debug, Clone, PartialEq)]
pub struct FlatTable {
    group_keys: Vec<String>,
    rows: Vec<Vec<f64>>,
    columns: Vec<String>,
    catalog: ServiceCatalog,
}

impl FlatTable {
    /// IPs per row, parallel to `rows`.
    pub fn group_keys(&self) -> &[String] {
        &self.group_keys
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Feature column names.
    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn catalog(&self) -> &ServiceCatalog {
        &self.catalog
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    /// Reconstructs each IP's multiset of `(port, service)` pairs, sorted
    /// for order-free comparison.
    pub fn pairs_by_ip(&self) -> BTreeMap<String, Vec<(u32, String)>> {
        let mut grouped: BTreeMap<String, Vec<(u32, String)>> = BTreeMap::new();
        for (key, row) in self.group_keys.iter().zip(&self.rows) {
            let port = row[0] as u32;
            let service = self
                .catalog
                .name(row[1] as usize)
                .expect("row service ids resolve in the catalog")
                .to_string();
            grouped.entry(key.clone()).or_default().push((port, service));
        }
        for pairs in grouped.values_mut() {
            pairs.sort_unstable();
        }
        grouped
    }
}

/// Expands `ds` into one row per service-port pair. Services are encoded by
/// their `catalog` id; `include_ip` appends the IP's integer value as a third
/// feature column.
pub fn flatten(ds: &ScanDataset, catalog: &ServiceCatalog, include_ip: bool) -> Result<FlatTable> {
    let mut columns = vec!["port".to_string(), "service_id".to_string()];
    if include_ip {
        columns.push("ip_numeric".to_string());
    }
    let mut group_keys = Vec::with_capacity(ds.total_pairs());
    let mut rows = Vec::with_capacity(ds.total_pairs());
    for record in &ds.records {
        let ip_value = if include_ip {
            Some(ip_to_u32(&record.ip)? as f64)
        } else {
            None
        };
        for (port, service) in record.pairs() {
            let id = catalog
                .id(service)
                .ok_or_else(|| Error::UnknownService(service.to_string()))?;
            let mut row = vec![port as f64, id as f64];
            if let Some(v) = ip_value {
                row.push(v);
            }
            group_keys.push(record.ip.clone());
            rows.push(row);
        }
    }
    Ok(FlatTable {
        group_keys,
        rows,
        columns,
        catalog: catalog.clone(),
    })
}

/// One row per distinct IP, counting its port and service occurrences.
///
/// Columns cover the vocabularies observed in the source dataset: every
/// distinct port ascending, then every distinct service in catalog order.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    ips: Vec<String>,
    port_columns: Vec<u32>,
    service_columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl SummaryTable {
    /// IPs per row, in dataset first-appearance order.
    pub fn ips(&self) -> &[String] {
        &self.ips
    }

    pub fn port_columns(&self) -> &[u32] {
        &self.port_columns
    }

    pub fn service_columns(&self) -> &[String] {
        &self.service_columns
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.port_columns.len() + self.service_columns.len()
    }

    /// Sum of one row's port-count columns.
    pub fn port_sum(&self, row: usize) -> f64 {
        self.rows[row][..self.port_columns.len()].iter().sum()
    }

    /// Sum of one row's service-count columns.
    pub fn service_sum(&self, row: usize) -> f64 {
        self.rows[row][self.port_columns.len()..].iter().sum()
    }
}

/// Aggregates `ds` into per-IP occurrence counts.
pub fn summarize(ds: &ScanDataset) -> SummaryTable {
    let mut ips = Vec::new();
    let mut row_of: BTreeMap<&str, usize> = BTreeMap::new();
    let mut ports: Vec<u32> = Vec::new();
    let mut catalog = ServiceCatalog::new();
    for record in &ds.records {
        if !row_of.contains_key(record.ip.as_str()) {
            row_of.insert(&record.ip, ips.len());
            ips.push(record.ip.clone());
        }
        for (port, service) in record.pairs() {
            ports.push(port);
            catalog.intern(service);
        }
    }
    ports.sort_unstable();
    ports.dedup();
    let port_index: BTreeMap<u32, usize> = ports.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let width = ports.len() + catalog.len();
    let mut rows = vec![vec![0.0; width]; ips.len()];
    for record in &ds.records {
        let row = &mut rows[row_of[record.ip.as_str()]];
        for (port, service) in record.pairs() {
            row[port_index[&port]] += 1.0;
            row[ports.len() + catalog.id(service).expect("service interned above")] += 1.0;
        }
    }
    SummaryTable {
        ips,
        port_columns: ports,
        service_columns: catalog.names().to_vec(),
        rows,
    }
}

fn write_number(value: f64) -> String {
    // Counts, ports, and ids are integral; print them without a fraction.
    if value.fract() == 0.0 && value.abs() < 1e15 {
        format!("{}", value as i64)
    } else {
        format!("{value}")
    }
}

/// Writes a flat table as CSV: header `ip,<feature columns>`, one line per row.
pub fn write_flat_csv<W: Write>(writer: W, table: &FlatTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["ip".to_string()];
    header.extend(table.columns.iter().cloned());
    w.write_record(&header)
        .map_err(|e| Error::Serialize(e.to_string()))?;
    for (key, row) in table.group_keys.iter().zip(&table.rows) {
        let mut record = vec![key.clone()];
        record.extend(row.iter().map(|&v| write_number(v)));
        w.write_record(&record)
            .map_err(|e| Error::Serialize(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a summary table as CSV: header `ip,port_<p>...,svc_<name>...`.
pub fn write_summary_csv<W: Write>(writer: W, table: &SummaryTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["ip".to_string()];
    header.extend(table.port_columns.iter().map(|p| format!("port_{p}")));
    header.extend(table.service_columns.iter().map(|s| format!("svc_{s}")));
    w.write_record(&header)
        .map_err(|e| Error::Serialize(e.to_string()))?;
    for (ip, row) in table.ips.iter().zip(&table.rows) {
        let mut record = vec![ip.clone()];
        record.extend(row.iter().map(|&v| write_number(v)));
        w.write_record(&record)
            .map_err(|e| Error::Serialize(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scan::{build_catalog, ScanRecord};
    use crate::synth::{generate_normal, GeneratorConfig};

    fn record(ip: &str, pairs: &[(u32, &str)]) -> ScanRecord {
        ScanRecord::new(ip, pairs)
    }

    #[test]
    fn flatten_expands_pairs_to_rows() {
        let ds = ScanDataset::new(vec![record("10.0.0.1", &[(80, "HTTP"), (21, "FTP")])]);
        let catalog = build_catalog(&ds);
        let table = flatten(&ds, &catalog, false).unwrap();
        assert_eq!(table.n_rows(), 2);
        assert_eq!(table.columns(), ["port", "service_id"]);
        assert_eq!(table.group_keys(), ["10.0.0.1", "10.0.0.1"]);
        assert_eq!(table.rows()[0], vec![80.0, 0.0]);
        assert_eq!(table.rows()[1], vec![21.0, 1.0]);
    }

    #[test]
    fn flatten_empty_dataset_is_empty() {
        let ds = ScanDataset::default();
        let table = flatten(&ds, &build_catalog(&ds), false).unwrap();
        assert_eq!(table.n_rows(), 0);
        assert_eq!(table.n_features(), 2);
    }

    #[test]
    fn flatten_rejects_service_missing_from_catalog() {
        let known = ScanDataset::new(vec![record("10.0.0.1", &[(80, "HTTP")])]);
        let catalog = build_catalog(&known);
        let ds = ScanDataset::new(vec![record("10.0.0.1", &[(9999, "MYSTERY")])]);
        let err = flatten(&ds, &catalog, false).unwrap_err();
        assert!(err.to_string().contains("MYSTERY"));
    }

    #[test]
    fn flatten_can_carry_numeric_ip_feature() {
        let ds = ScanDataset::new(vec![record("10.0.0.1", &[(80, "HTTP")])]);
        let catalog = build_catalog(&ds);
        let table = flatten(&ds, &catalog, true).unwrap();
        assert_eq!(table.columns(), ["port", "service_id", "ip_numeric"]);
        assert_eq!(table.rows()[0], vec![80.0, 0.0, ((10 << 24) + 1) as f64]);
    }

    #[test]
    fn flatten_row_count_equals_total_pairs() {
        let (ds, _) = generate_normal(GeneratorConfig {
            n_ips: 30,
            seed: 3,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let table = flatten(&ds, &build_catalog(&ds), false).unwrap();
        assert_eq!(table.n_rows(), ds.total_pairs());
    }

    #[test]
    fn flatten_then_regroup_recovers_pair_multisets() {
        let (ds, _) = generate_normal(GeneratorConfig {
            n_ips: 25,
            seed: 11,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let table = flatten(&ds, &build_catalog(&ds), false).unwrap();
        let grouped = table.pairs_by_ip();
        let mut expected: BTreeMap<String, Vec<(u32, String)>> = BTreeMap::new();
        for r in &ds.records {
            let pairs = expected.entry(r.ip.clone()).or_default();
            for (port, service) in r.pairs() {
                pairs.push((port, service.to_string()));
            }
        }
        for pairs in expected.values_mut() {
            pairs.sort_unstable();
        }
        assert_eq!(grouped, expected);
    }

    #[test]
    fn summarize_counts_ports_then_services() {
        let ds = ScanDataset::new(vec![record(
            "10.0.0.1",
            &[(80, "HTTP"), (80, "HTTP"), (80, "HTTP"), (22, "SSH")],
        )]);
        let table = summarize(&ds);
        assert_eq!(table.n_rows(), 1);
        assert_eq!(table.port_columns(), [22, 80]);
        assert_eq!(table.service_columns(), ["HTTP", "SSH"]);
        assert_eq!(table.rows()[0], vec![1.0, 3.0, 3.0, 1.0]);
    }

    #[test]
    fn summarize_emits_one_row_per_ip() {
        let (ds, _) = generate_normal(GeneratorConfig {
            n_ips: 10,
            seed: 5,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let table = summarize(&ds);
        assert_eq!(table.n_rows(), 10);
        assert_eq!(table.ips(), ds.distinct_ips().as_slice());
    }

    #[test]
    fn summarize_conserves_pair_counts() {
        let (ds, _) = generate_normal(GeneratorConfig {
            n_ips: 40,
            seed: 13,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let table = summarize(&ds);
        let mut pair_counts: BTreeMap<&str, f64> = BTreeMap::new();
        for r in &ds.records {
            *pair_counts.entry(r.ip.as_str()).or_insert(0.0) += r.pair_count() as f64;
        }
        for (i, ip) in table.ips().iter().enumerate() {
            assert_eq!(table.port_sum(i), pair_counts[ip.as_str()]);
            assert_eq!(table.service_sum(i), pair_counts[ip.as_str()]);
        }
    }

    #[test]
    fn flat_csv_has_pinned_header() {
        let ds = ScanDataset::new(vec![record("10.0.0.1", &[(80, "HTTP"), (21, "FTP")])]);
        let table = flatten(&ds, &build_catalog(&ds), false).unwrap();
        let mut buf = Vec::new();
        write_flat_csv(&mut buf, &table).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "ip,port,service_id\n10.0.0.1,80,0\n10.0.0.1,21,1\n"
        );
    }

    #[test]
    fn summary_csv_embeds_column_schema() {
        let ds = ScanDataset::new(vec![record(
            "10.0.0.1",
            &[(80, "HTTP"), (80, "HTTP"), (80, "HTTP"), (22, "SSH")],
        )]);
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &summarize(&ds)).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "ip,port_22,port_80,svc_HTTP,svc_SSH\n10.0.0.1,1,3,3,1\n"
        );
    }
}
