//! Scan-record data model and file formats.
//!
//! A scan record is one observation of a host: its IP plus parallel lists of
//! open ports and the services seen on them (`ports[i]` pairs with
//! `services[i]`). Datasets are stored as JSON Lines, one record per line;
//! ground-truth labels travel in a separate CSV keyed by IP.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest valid TCP/UDP port.
pub const MAX_PORT: u32 = 65_535;

/// One scan observation of one host.
///
/// `ports` and `services` are parallel: the pair `(ports[i], services[i])`
/// is one observed service-port binding. Duplicate pairs are meaningful and
/// preserved. Ports are stored as `u32` so that out-of-range values survive
/// parsing and can be reported by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanRecord {
    pub ip: String,
    pub ports: Vec<u32>,
    pub services: Vec<String>,
}

impl ScanRecord {
    pub fn new(ip: impl Into<String>, pairs: &[(u32, &str)]) -> Self {
        ScanRecord {
            ip: ip.into(),
            ports: pairs.iter().map(|&(p, _)| p).collect(),
            services: pairs.iter().map(|&(_, s)| s.to_string()).collect(),
        }
    }

    /// Number of service-port pairs in this record.
    pub fn pair_count(&self) -> usize {
        self.ports.len()
    }

    /// Iterates over `(port, service)` pairs in record order.
    pub fn pairs(&self) -> impl Iterator<Item = (u32, &str)> {
        self.ports
            .iter()
            .copied()
            .zip(self.services.iter().map(String::as_str))
    }
}

/// An ordered collection of scan records.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanDataset {
    pub records: Vec<ScanRecord>,
}

impl ScanDataset {
    pub fn new(records: Vec<ScanRecord>) -> Self {
        ScanDataset { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct IPs in first-appearance order.
    pub fn distinct_ips(&self) -> Vec<String> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for r in &self.records {
            if !seen.contains_key(r.ip.as_str()) {
                seen.insert(r.ip.clone(), ());
                out.push(r.ip.clone());
            }
        }
        out
    }

    /// Total service-port pairs across all records.
    pub fn total_pairs(&self) -> usize {
        self.records.iter().map(ScanRecord::pair_count).sum()
    }
}

/// Dense integer ids for service names, assigned in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ServiceCatalog {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ServiceCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id for `name`, inserting it if unseen.
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    /// Service names in id order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Builds a catalog from every service name in `ds`, scanning records
/// front to back and pairs left to right.
pub fn build_catalog(ds: &ScanDataset) -> ServiceCatalog {
    let mut catalog = ServiceCatalog::new();
    for record in &ds.records {
        for service in &record.services {
            catalog.intern(service);
        }
    }
    catalog
}

/// Which planted anomaly produced a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AnomalyType {
    /// Usage spike: record volume multiplied, concentrated on few ports.
    Type1,
    /// Service-port mismatch: standard services on non-standard ports.
    Type2,
}

impl AnomalyType {
    pub fn as_index(self) -> u8 {
        match self {
            AnomalyType::Type1 => 1,
            AnomalyType::Type2 => 2,
        }
    }

    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            1 => Some(AnomalyType::Type1),
            2 => Some(AnomalyType::Type2),
            _ => None,
        }
    }
}

impl fmt::Display for AnomalyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_index())
    }
}

/// Ground-truth label for one IP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Normal,
    Anomalous(AnomalyType),
}

impl Label {
    pub fn is_anomalous(self) -> bool {
        matches!(self, Label::Anomalous(_))
    }
}

/// IP-level ground truth: every IP in a dataset has exactly one label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    labels: BTreeMap<String, Label>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, ip: impl Into<String>, label: Label) {
        self.labels.insert(ip.into(), label);
    }

    pub fn get(&self, ip: &str) -> Option<Label> {
        self.labels.get(ip).copied()
    }

    /// Iterates labels in ascending IP-string order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, Label)> {
        self.labels.iter().map(|(ip, &l)| (ip.as_str(), l))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// IPs labeled anomalous, ascending.
    pub fn anomalous_ips(&self) -> Vec<&str> {
        self.iter()
            .filter(|(_, l)| l.is_anomalous())
            .map(|(ip, _)| ip)
            .collect()
    }

    /// Checks that `truth` and `ds` cover exactly the same IPs.
    pub fn covers(&self, ds: &ScanDataset) -> bool {
        let ips = ds.distinct_ips();
        ips.len() == self.labels.len() && ips.iter().all(|ip| self.labels.contains_key(ip))
    }
}

/// One structural violation found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Index of the offending record in the dataset.
    pub record: usize,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "record {}: {}", self.record, self.message)
    }
}

fn is_canonical_ipv4(ip: &str) -> bool {
    let mut parts = 0;
    for part in ip.split('.') {
        parts += 1;
        if parts > 4 || part.is_empty() || part.len() > 3 {
            return false;
        }
        if !part.bytes().all(|b| b.is_ascii_digit()) {
            return false;
        }
        if part.len() > 1 && part.starts_with('0') {
            return false;
        }
        if part.parse::<u32>().map_or(true, |v| v > 255) {
            return false;
        }
    }
    parts == 4
}

/// Converts a canonical dotted-quad IP to its 32-bit integer value.
pub fn ip_to_u32(ip: &str) -> Result<u32> {
    if !is_canonical_ipv4(ip) {
        return Err(Error::Data(format!("not a canonical IPv4 address: {ip:?}")));
    }
    let mut value: u32 = 0;
    for part in ip.split('.') {
        value = (value << 8) | part.parse::<u32>().unwrap();
    }
    Ok(value)
}

/// Checks every record against the structural rules and returns all
/// violations found. Never aborts on the first problem.
pub fn validate_dataset(ds: &ScanDataset) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut push = |record: usize, message: String| violations.push(Violation { record, message });
    for (i, r) in ds.records.iter().enumerate() {
        if !is_canonical_ipv4(&r.ip) {
            push(i, format!("ip not in canonical dotted-quad form: {:?}", r.ip));
        }
        if r.ports.len() != r.services.len() {
            push(
                i,
                format!(
                    "ports/services length mismatch: {} ports vs {} services",
                    r.ports.len(),
                    r.services.len()
                ),
            );
        }
        if r.ports.is_empty() {
            push(i, "empty ports list".to_string());
        }
        for &p in &r.ports {
            if p > MAX_PORT {
                push(i, format!("port out of range: {p} > {MAX_PORT}"));
            }
        }
        for s in &r.services {
            if s.is_empty() {
                push(i, "empty service name".to_string());
            }
        }
    }
    violations
}

// ---------------------------------------------------------------------------
// JSON Lines dataset files
// ---------------------------------------------------------------------------

/// Reads a scan dataset from JSON Lines. `origin` names the source in errors.
pub fn read_scans<R: Read>(reader: R, origin: &str) -> Result<ScanDataset> {
    let mut records = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ScanRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(ScanDataset::new(records))
}

pub fn read_scans_path(path: &Path) -> Result<ScanDataset> {
    let file = File::open(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    read_scans(file, &path.display().to_string())
}

/// Writes a dataset as JSON Lines: one compact object per record, LF line
/// endings. Writing the result of [`read_scans`] reproduces a canonical file
/// byte for byte.
pub fn write_scans<W: Write>(writer: W, ds: &ScanDataset) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for record in &ds.records {
        serde_json::to_writer(&mut w, record).map_err(|e| Error::Serialize(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scans_path(path: &Path, ds: &ScanDataset) -> Result<()> {
    let file = File::create(path)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))?;
    write_scans(file, ds)
}

// ---------------------------------------------------------------------------
// Ground-truth label files
// ---------------------------------------------------------------------------

const LABEL_HEADER: [&str; 3] = ["ip", "label", "anomaly_type"];

/// Writes ground truth as CSV with header `ip,label,anomaly_type`, rows in
/// ascending IP order. `anomaly_type` is `1`, `2`, or empty for normal rows.
pub fn write_labels<W: Write>(writer: W, truth: &GroundTruth) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(LABEL_HEADER)
        .map_err(|e| Error::Serialize(e.to_string()))?;
    for (ip, label) in truth.iter() {
        let (kind, ty) = match label {
            Label::Normal => ("normal", String::new()),
            Label::Anomalous(t) => ("anomalous", t.to_string()),
        };
        w.write_record([ip, kind, &ty])
            .map_err(|e| Error::Serialize(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_labels_path(path: &Path, truth: &GroundTruth) -> Result<()> {
    let file = File::create(path)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))?;
    write_labels(file, truth)
}

/// Reads a ground-truth CSV produced by [`write_labels`].
pub fn read_labels<R: Read>(reader: R, origin: &str) -> Result<GroundTruth> {
    let mut r = csv::ReaderBuilder::new().from_reader(reader);
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let header = r
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.iter().ne(LABEL_HEADER) {
        return Err(parse_err(
            1,
            format!("expected header ip,label,anomaly_type, got {header:?}"),
        ));
    }
    let mut truth = GroundTruth::new();
    for (i, row) in r.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| parse_err(line, e.to_string()))?;
        if row.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, got {}", row.len())));
        }
        let ip = row[0].to_string();
        let label = match (&row[1], &row[2]) {
            ("normal", "") => Label::Normal,
            ("normal", t) => {
                return Err(parse_err(line, format!("normal row with anomaly_type {t:?}")));
            }
            ("anomalous", t) => {
                let idx: u8 = t
                    .parse()
                    .map_err(|_| parse_err(line, format!("bad anomaly_type {t:?}")))?;
                let kind = AnomalyType::from_index(idx)
                    .ok_or_else(|| parse_err(line, format!("bad anomaly_type {t:?}")))?;
                Label::Anomalous(kind)
            }
            (other, _) => {
                return Err(parse_err(line, format!("unknown label {other:?}")));
            }
        };
        if truth.get(&ip).is_some() {
            return Err(parse_err(line, format!("duplicate label for ip {ip}")));
        }
        truth.set(ip, label);
    }
    Ok(truth)
}

pub fn read_labels_path(path: &Path) -> Result<GroundTruth> {
    let file = File::open(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    read_labels(file, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(ip: &str, pairs: &[(u32, &str)]) -> ScanRecord {
        ScanRecord::new(ip, pairs)
    }

    #[test]
    fn catalog_assigns_first_appearance_ids() {
        let ds = ScanDataset::new(vec![record("10.0.0.1", &[(80, "HTTP"), (21, "FTP")])]);
        let catalog = build_catalog(&ds);
        assert_eq!(catalog.id("HTTP"), Some(0));
        assert_eq!(catalog.id("FTP"), Some(1));
    }

    #[test]
    fn catalog_ignores_later_duplicates() {
        let ds = ScanDataset::new(vec![
            record("10.0.0.1", &[(80, "HTTP")]),
            record("10.0.0.2", &[(21, "FTP"), (80, "HTTP")]),
        ]);
        let catalog = build_catalog(&ds);
        assert_eq!(catalog.id("HTTP"), Some(0));
        assert_eq!(catalog.id("FTP"), Some(1));
        assert_eq!(catalog.len(), 2);
    }

    #[test]
    fn empty_dataset_gives_empty_catalog() {
        let catalog = build_catalog(&ScanDataset::default());
        assert!(catalog.is_empty());
    }

    #[test]
    fn valid_records_produce_no_violations() {
        let ds = ScanDataset::new(vec![
            record("10.0.0.1", &[(80, "HTTP")]),
            record("10.0.0.2", &[(21, "FTP"), (22, "SSH")]),
            record("192.0.2.5", &[(443, "HTTPS")]),
        ]);
        assert_eq!(validate_dataset(&ds), Vec::new());
    }

    #[test]
    fn length_mismatch_is_one_violation() {
        let ds = ScanDataset::new(vec![ScanRecord {
            ip: "10.0.0.1".to_string(),
            ports: vec![80, 21],
            services: vec!["HTTP".to_string()],
        }]);
        let violations = validate_dataset(&ds);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].message.contains("length mismatch"));
    }

    #[test]
    fn out_of_range_port_is_reported() {
        let ds = ScanDataset::new(vec![record("10.0.0.1", &[(70_000, "HTTP")])]);
        let violations = validate_dataset(&ds);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].message.contains("port out of range"));
        assert!(violations[0].message.contains("70000"));
    }

    #[test]
    fn empty_ports_and_bad_ip_are_reported() {
        let ds = ScanDataset::new(vec![ScanRecord {
            ip: "10.0.0.256".to_string(),
            ports: vec![],
            services: vec![],
        }]);
        let messages: Vec<String> = validate_dataset(&ds)
            .into_iter()
            .map(|v| v.message)
            .collect();
        assert_eq!(messages.len(), 2);
        assert!(messages.iter().any(|m| m.contains("canonical")));
        assert!(messages.iter().any(|m| m.contains("empty ports")));
    }

    #[test]
    fn leading_zero_ip_is_not_canonical() {
        assert!(is_canonical_ipv4("10.0.0.1"));
        assert!(!is_canonical_ipv4("010.0.0.1"));
        assert!(!is_canonical_ipv4("10.0.0"));
        assert!(!is_canonical_ipv4("10.0.0.1.2"));
        assert!(!is_canonical_ipv4("10.0.0.-1"));
    }

    #[test]
    fn ip_to_u32_is_big_endian() {
        assert_eq!(ip_to_u32("0.0.0.1").unwrap(), 1);
        assert_eq!(ip_to_u32("10.0.0.1").unwrap(), (10 << 24) + 1);
        assert_eq!(ip_to_u32("255.255.255.255").unwrap(), u32::MAX);
        assert!(ip_to_u32("10.0.0").is_err());
    }

    #[test]
    fn jsonl_round_trip_is_byte_identical() {
        let ds = ScanDataset::new(vec![
            record("192.0.2.5", &[(80, "HTTP"), (21, "FTP")]),
            record("10.0.0.1", &[(22, "SSH")]),
        ]);
        let mut first = Vec::new();
        write_scans(&mut first, &ds).unwrap();
        let reread = read_scans(first.as_slice(), "mem").unwrap();
        assert_eq!(reread, ds);
        let mut second = Vec::new();
        write_scans(&mut second, &reread).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn jsonl_line_format_matches_convention() {
        let ds = ScanDataset::new(vec![record("192.0.2.5", &[(80, "HTTP"), (21, "FTP")])]);
        let mut buf = Vec::new();
        write_scans(&mut buf, &ds).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"ip\":\"192.0.2.5\",\"ports\":[80,21],\"services\":[\"HTTP\",\"FTP\"]}\n"
        );
    }

    #[test]
    fn jsonl_parse_error_reports_line() {
        let input = b"{\"ip\":\"10.0.0.1\",\"ports\":[80],\"services\":[\"HTTP\"]}\nnot json\n";
        let err = read_scans(input.as_slice(), "bad.jsonl").unwrap_err();
        match err {
            Error::Parse { path, line, .. } => {
                assert_eq!(path, "bad.jsonl");
                assert_eq!(line, 2);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn labels_round_trip() {
        let mut truth = GroundTruth::new();
        truth.set("10.0.0.1", Label::Normal);
        truth.set("10.0.0.2", Label::Anomalous(AnomalyType::Type1));
        truth.set("10.0.0.3", Label::Anomalous(AnomalyType::Type2));
        let mut buf = Vec::new();
        write_labels(&mut buf, &truth).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("ip,label,anomaly_type\n"));
        assert!(text.contains("10.0.0.1,normal,\n"));
        assert!(text.contains("10.0.0.2,anomalous,1\n"));
        let reread = read_labels(buf.as_slice(), "mem").unwrap();
        assert_eq!(reread, truth);
    }

    #[test]
    fn labels_reject_bad_header_and_duplicates() {
        let bad_header = b"ip,label\n10.0.0.1,normal\n";
        assert!(read_labels(bad_header.as_slice(), "mem").is_err());
        let dup = b"ip,label,anomaly_type\n10.0.0.1,normal,\n10.0.0.1,normal,\n";
        let err = read_labels(dup.as_slice(), "mem").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn ground_truth_covers_checks_ip_sets() {
        let ds = ScanDataset::new(vec![
            record("10.0.0.1", &[(80, "HTTP")]),
            record("10.0.0.1", &[(21, "FTP")]),
            record("10.0.0.2", &[(22, "SSH")]),
        ]);
        let mut truth = GroundTruth::new();
        truth.set("10.0.0.1", Label::Normal);
        assert!(!truth.covers(&ds));
        truth.set("10.0.0.2", Label::Normal);
        assert!(truth.covers(&ds));
    }
}
