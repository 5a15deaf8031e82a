//! Seeded synthetic scan-data generator.
//!
//! Normal traffic draws service-port pairs from a standard service map, so
//! every pair is a service on its conventional port. Two anomaly injectors
//! plant labeled deviations: type 1 multiplies an IP's scan volume with extra
//! records concentrated on a few services, type 2 appends a record whose
//! services sit on ports outside the standard map entirely.
//!
//! All randomness derives from `GeneratorConfig::seed` through per-IP and
//! per-injection streams, so outputs are pure functions of the config and
//! stable under changes to unrelated parameters.

use std::collections::HashMap;
use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{choose_distinct, stream, DOMAIN_INJECT1, DOMAIN_INJECT2, DOMAIN_NORMAL};
use crate::scan::{AnomalyType, GroundTruth, Label, ScanDataset, ScanRecord, MAX_PORT};

/// Entries in the default standard service map.
pub const DEFAULT_SERVICE_COUNT: usize = 32;

/// Smallest allowed map size: keeps the full curated core present.
pub const MIN_SERVICE_COUNT: usize = 12;

/// Largest allowed map size.
pub const MAX_SERVICE_COUNT: usize = 4096;

/// Well-known services on their conventional ports. The first twelve form
/// the documented core; the rest extend coverage for larger maps. All curated
/// ports stay below `FILLER_PORT_BASE` so synthesized filler never collides.
const CURATED_SERVICES: &[(&str, u32)] = &[
    ("HTTP", 80),
    ("HTTPS", 443),
    ("FTP", 21),
    ("SSH", 22),
    ("SMTP", 25),
    ("DNS", 53),
    ("POP3", 110),
    ("IMAP", 143),
    ("TELNET", 23),
    ("RDP", 3389),
    ("MYSQL", 3306),
    ("NTP", 123),
    ("ECHO", 7),
    ("DISCARD", 9),
    ("DAYTIME", 13),
    ("QOTD", 17),
    ("CHARGEN", 19),
    ("FTP-DATA", 20),
    ("TIME", 37),
    ("WHOIS", 43),
    ("TFTP", 69),
    ("GOPHER", 70),
    ("FINGER", 79),
    ("KERBEROS", 88),
    ("POP2", 109),
    ("SUNRPC", 111),
    ("NNTP", 119),
    ("NETBIOS-NS", 137),
    ("NETBIOS-SSN", 139),
    ("SNMP", 161),
    ("SNMPTRAP", 162),
    ("BGP", 179),
    ("IRC", 194),
    ("IMAP3", 220),
    ("LDAP", 389),
    ("SMB", 445),
    ("SMTPS", 465),
    ("SYSLOG", 514),
    ("LPD", 515),
    ("RIP", 520),
    ("UUCP", 540),
    ("SUBMISSION", 587),
    ("LDAPS", 636),
    ("RSYNC", 873),
    ("FTPS", 990),
    ("TELNETS", 992),
    ("IMAPS", 993),
    ("POP3S", 995),
    ("MSSQL", 1433),
    ("ORACLE", 1521),
    ("PPTP", 1723),
    ("MQTT", 1883),
    ("NFS", 2049),
    ("ZOOKEEPER", 2181),
    ("DOCKER", 2375),
    ("ETCD", 2379),
    ("SQUID", 3128),
    ("SVN", 3690),
    ("SIP", 5060),
    ("POSTGRES", 5432),
    ("AMQP", 5672),
    ("VNC", 5900),
    ("X11", 6000),
    ("REDIS", 6379),
    ("HTTP-ALT", 8080),
    ("HTTPS-ALT", 8443),
    ("HADOOP", 9000),
    ("CASSANDRA", 9042),
    ("ELASTICSEARCH", 9200),
    ("MEMCACHED", 11211),
];

const FILLER_PORT_BASE: u32 = 20000;

/// Association table from service name to its one standard port.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StandardServiceMap {
    entries: Vec<(String, u32)>,
    ports: HashSet<u32>,
    by_name: HashMap<String, u32>,
}

impl StandardServiceMap {
    /// Builds a map with exactly `count` entries: the curated services first,
    /// then synthetic `SVC-<port>` entries on high ports.
    pub fn sized(count: usize) -> Result<Self> {
        if !(MIN_SERVICE_COUNT..=MAX_SERVICE_COUNT).contains(&count) {
            return Err(Error::Config(format!(
                "service_count must be within [{MIN_SERVICE_COUNT}, {MAX_SERVICE_COUNT}], got {count}"
            )));
        }
        let mut entries: Vec<(String, u32)> = CURATED_SERVICES
            .iter()
            .take(count)
            .map(|&(name, port)| (name.to_string(), port))
            .collect();
        for i in entries.len()..count {
            let port = FILLER_PORT_BASE + (i - CURATED_SERVICES.len()) as u32;
            entries.push((format!("SVC-{port}"), port));
        }
        let ports: HashSet<u32> = entries.iter().map(|&(_, p)| p).collect();
        let by_name: HashMap<String, u32> =
            entries.iter().map(|(n, p)| (n.clone(), *p)).collect();
        debug_assert_eq!(ports.len(), entries.len());
        debug_assert_eq!(by_name.len(), entries.len());
        Ok(StandardServiceMap {
            entries,
            ports,
            by_name,
        })
    }

    /// `(service, port)` entries in fixed order.
    pub fn entries(&self) -> &[(String, u32)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Standard port of `service`, if it is in the map.
    pub fn port_of(&self, service: &str) -> Option<u32> {
        self.by_name.get(service).copied()
    }

    /// Whether any service claims `port` as its standard port.
    pub fn contains_port(&self, port: u32) -> bool {
        self.ports.contains(&port)
    }

    /// Whether `(service, port)` is a service on its own standard port.
    pub fn is_standard_pair(&self, service: &str, port: u32) -> bool {
        self.port_of(service) == Some(port)
    }
}

/// Returns the default standard service map.
pub fn standard_service_map() -> StandardServiceMap {
    StandardServiceMap::sized(DEFAULT_SERVICE_COUNT).expect("default size is in range")
}

/// Counts pairs across `ds` that are not a service on its standard port.
pub fn count_non_standard_pairs(ds: &ScanDataset, map: &StandardServiceMap) -> usize {
    ds.records
        .iter()
        .flat_map(ScanRecord::pairs)
        .filter(|&(port, service)| !map.is_standard_pair(service, port))
        .count()
}

/// Parameters for one synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Distinct IPs to generate.
    pub n_ips: usize,
    /// Mean scan records per IP.
    pub scans_per_ip: usize,
    /// Inclusive range of service-port pairs per record.
    pub pairs_per_scan: (usize, usize),
    /// Fraction of IPs to mark anomalous, in [0, 1).
    pub anomaly_rate: f64,
    /// Volume multiplier for type-1 spikes, at least 2.
    pub type1_spike_factor: u32,
    /// Mismatched pairs in each type-2 record, at least 1.
    pub type2_mismatch_pairs: usize,
    /// Master seed; all outputs are pure functions of the config.
    pub seed: u64,
    /// Size of the standard service map to draw pairs from.
    pub service_count: usize,
    /// Give every IP exactly `scans_per_ip` records instead of drawing
    /// counts around that mean.
    pub fixed_counts: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_ips: 1000,
            scans_per_ip: 20,
            pairs_per_scan: (1, 10),
            anomaly_rate: 0.05,
            type1_spike_factor: 10,
            type2_mismatch_pairs: 3,
            seed: 42,
            service_count: DEFAULT_SERVICE_COUNT,
            fixed_counts: false,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_ips == 0 {
            return bad(format!("n_ips must be >= 1, got {}", self.n_ips));
        }
        if self.n_ips > (1 << 24) {
            return bad(format!("n_ips must be <= {}, got {}", 1 << 24, self.n_ips));
        }
        if self.scans_per_ip == 0 {
            return bad(format!("scans_per_ip must be >= 1, got {}", self.scans_per_ip));
        }
        let (lo, hi) = self.pairs_per_scan;
        if lo == 0 || lo > hi {
            return bad(format!(
                "pairs_per_scan must satisfy 1 <= min <= max, got ({lo}, {hi})"
            ));
        }
        if !self.anomaly_rate.is_finite() || self.anomaly_rate < 0.0 || self.anomaly_rate >= 1.0 {
            return bad(format!(
                "anomaly_rate must be within [0, 1), got {}",
                self.anomaly_rate
            ));
        }
        if self.type1_spike_factor < 2 {
            return bad(format!(
                "type1_spike_factor must be >= 2, got {}",
                self.type1_spike_factor
            ));
        }
        if self.type2_mismatch_pairs == 0 {
            return bad(format!(
                "type2_mismatch_pairs must be >= 1, got {}",
                self.type2_mismatch_pairs
            ));
        }
        if !(MIN_SERVICE_COUNT..=MAX_SERVICE_COUNT).contains(&self.service_count) {
            return bad(format!(
                "service_count must be within [{MIN_SERVICE_COUNT}, {MAX_SERVICE_COUNT}], got {}",
                self.service_count
            ));
        }
        Ok(())
    }

    /// Exact number of IPs an injector will mark anomalous.
    pub fn planted_count(&self) -> Result<usize> {
        let expected = self.anomaly_rate * self.n_ips as f64;
        if expected < 1.0 {
            return Err(Error::Config(format!(
                "anomaly_rate * n_ips must be >= 1 when anomalies are requested, \
                 got {} * {} = {expected}",
                self.anomaly_rate, self.n_ips
            )));
        }
        // Guard against binary rounding pushing an exact product over the
        // next integer (0.05 * 1000 evaluates slightly above 50).
        Ok((expected - 1e-9).ceil() as usize)
    }
}

fn ip_string(index: usize) -> String {
    format!(
        "10.{}.{}.{}",
        (index >> 16) & 255,
        (index >> 8) & 255,
        index & 255
    )
}

fn draw_record_count(rng: &mut ChaCha8Rng, cfg: GeneratorConfig) -> usize {
    if cfg.fixed_counts {
        return cfg.scans_per_ip;
    }
    let poisson = Poisson::new(cfg.scans_per_ip as f64).expect("validated mean is positive");
    (poisson.sample(rng) as usize).max(1)
}

fn draw_record(
    rng: &mut ChaCha8Rng,
    cfg: GeneratorConfig,
    ip: &str,
    pick_pair: impl Fn(&mut ChaCha8Rng) -> (u32, String),
) -> ScanRecord {
    let (lo, hi) = cfg.pairs_per_scan;
    let n_pairs = rng.random_range(lo..=hi);
    let mut ports = Vec::with_capacity(n_pairs);
    let mut services = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let (port, service) = pick_pair(rng);
        ports.push(port);
        services.push(service);
    }
    ScanRecord {
        ip: ip.to_string(),
        ports,
        services,
    }
}

/// Generates all-normal traffic: every pair is a uniformly drawn map entry.
pub fn generate_normal(cfg: GeneratorConfig) -> Result<(ScanDataset, GroundTruth)> {
    cfg.validate()?;
    let map = StandardServiceMap::sized(cfg.service_count)?;
    let mut records = Vec::new();
    let mut truth = GroundTruth::new();
    for i in 0..cfg.n_ips {
        let ip = ip_string(i);
        let mut rng = stream(cfg.seed, DOMAIN_NORMAL, i as u64);
        let count = draw_record_count(&mut rng, cfg);
        for _ in 0..count {
            records.push(draw_record(&mut rng, cfg, &ip, |rng| {
                let (name, port) = &map.entries()[rng.random_range(0..map.len())];
                (*port, name.clone())
            }));
        }
        truth.set(ip, Label::Normal);
    }
    Ok((ScanDataset::new(records), truth))
}

/// Planted `(index, ip)` pairs ascending by index, plus the per-IP record
/// counts of the whole dataset.
type TargetSelection = (Vec<(usize, String)>, HashMap<String, usize>);

fn select_targets(ds: &ScanDataset, cfg: GeneratorConfig, domain: u64) -> Result<TargetSelection> {
    let ips = ds.distinct_ips();
    if ips.len() != cfg.n_ips {
        return Err(Error::Data(format!(
            "dataset has {} distinct IPs but config says n_ips = {}",
            ips.len(),
            cfg.n_ips
        )));
    }
    let planted = cfg.planted_count()?;
    let mut rng = stream(cfg.seed, domain, 0);
    let mut chosen = choose_distinct(&mut rng, ips.len(), planted);
    chosen.sort_unstable();
    let mut counts: HashMap<String, usize> = HashMap::new();
    for r in &ds.records {
        *counts.entry(r.ip.clone()).or_insert(0) += 1;
    }
    let targets = chosen.into_iter().map(|i| (i, ips[i].clone())).collect();
    Ok((targets, counts))
}

fn median(mut values: Vec<usize>) -> f64 {
    debug_assert!(!values.is_empty());
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    }
}

/// Plants usage-spike anomalies: each selected IP gains enough additional
/// records, drawn from 1-3 spike services, to multiply its volume by
/// `type1_spike_factor`. Low-volume targets are first lifted to half the
/// normal median so every spike clears the volume-separation floor.
pub fn inject_type1(
    ds: ScanDataset,
    truth: GroundTruth,
    cfg: GeneratorConfig,
) -> Result<(ScanDataset, GroundTruth)> {
    cfg.validate()?;
    let map = StandardServiceMap::sized(cfg.service_count)?;
    let (targets, counts) = select_targets(&ds, cfg, DOMAIN_INJECT1)?;
    let target_ips: HashSet<&str> = targets.iter().map(|(_, ip)| ip.as_str()).collect();
    let normal_counts: Vec<usize> = counts
        .iter()
        .filter(|(ip, _)| !target_ips.contains(ip.as_str()))
        .map(|(_, &c)| c)
        .collect();
    // All IPs selected: fall back to the overall median so the floor stays
    // defined (the soundness bound is vacuous with no normal IPs left).
    let volume_floor = if normal_counts.is_empty() {
        (median(counts.values().copied().collect()) * 0.5).ceil() as usize
    } else {
        (median(normal_counts) * 0.5).ceil() as usize
    };
    let mut ds = ds;
    let mut truth = truth;
    for (index, ip) in targets {
        let mut rng = stream(cfg.seed, DOMAIN_INJECT1, 1 + index as u64);
        let n_spike = rng.random_range(1..=3usize);
        let spike: Vec<&(String, u32)> = choose_distinct(&mut rng, map.len(), n_spike)
            .into_iter()
            .map(|i| &map.entries()[i])
            .collect();
        let existing = counts[&ip];
        let lifted = existing.max(volume_floor.max(1));
        let added = cfg.type1_spike_factor as usize * lifted - existing;
        for _ in 0..added {
            let record = draw_record(&mut rng, cfg, &ip, |rng| {
                let (name, port) = spike[rng.random_range(0..spike.len())];
                (*port, name.clone())
            });
            ds.records.push(record);
        }
        truth.set(ip, Label::Anomalous(AnomalyType::Type1));
    }
    Ok((ds, truth))
}

/// Plants service-port mismatches: each selected IP gains exactly one record
/// of `type2_mismatch_pairs` pairs, each a standard service on a uniformly
/// drawn port outside the standard map.
pub fn inject_type2(
    ds: ScanDataset,
    truth: GroundTruth,
    cfg: GeneratorConfig,
) -> Result<(ScanDataset, GroundTruth)> {
    cfg.validate()?;
    let map = StandardServiceMap::sized(cfg.service_count)?;
    if map.len() > MAX_PORT as usize {
        return Err(Error::Data(
            "standard map covers all 65536 ports; no free port for mismatches".to_string(),
        ));
    }
    let (targets, _) = select_targets(&ds, cfg, DOMAIN_INJECT2)?;
    let mut ds = ds;
    let mut truth = truth;
    for (index, ip) in targets {
        let mut rng = stream(cfg.seed, DOMAIN_INJECT2, 1 + index as u64);
        let mut ports = Vec::with_capacity(cfg.type2_mismatch_pairs);
        let mut services = Vec::with_capacity(cfg.type2_mismatch_pairs);
        for _ in 0..cfg.type2_mismatch_pairs {
            let (name, _) = &map.entries()[rng.random_range(0..map.len())];
            let port = loop {
                let p = rng.random_range(0..=MAX_PORT);
                if !map.contains_port(p) {
                    break p;
                }
            };
            ports.push(port);
            services.push(name.clone());
        }
        ds.records.push(ScanRecord {
            ip: ip.clone(),
            ports,
            services,
        });
        truth.set(ip, Label::Anomalous(AnomalyType::Type2));
    }
    Ok((ds, truth))
}

/// Generates a labeled experiment dataset: normal traffic plus one planted
/// anomaly type.
pub fn generate_experiment(
    anomaly_type: AnomalyType,
    cfg: GeneratorConfig,
) -> Result<(ScanDataset, GroundTruth)> {
    let (ds, truth) = generate_normal(cfg)?;
    match anomaly_type {
        AnomalyType::Type1 => inject_type1(ds, truth, cfg),
        AnomalyType::Type2 => inject_type2(ds, truth, cfg),
    }
}
