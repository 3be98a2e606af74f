use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::AdversaryConfig;
use crate::bt::{BehaviorMix, CatalogConfig};
use crate::sim::PopulationTable;
use crate::tor::{CircuitPolicy, PortGroups};

/// The bundled default scenario. User files are layered over it, so any
/// section or key they omit keeps its default.
pub const DEFAULT_SCENARIO: &str = include_str!("../../scenarios/default.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config does not parse: {0}")]
    Syntax(String),
    #[error("bad override `{0}`: expected key=value")]
    Override(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    MultiplexAll,
    OneStreamPerCircuit,
    PortGroupIsolation,
    PerApplicationIsolation,
}

impl PolicyName {
    pub const ALL: [PolicyName; 4] = [
        PolicyName::MultiplexAll,
        PolicyName::OneStreamPerCircuit,
        PolicyName::PortGroupIsolation,
        PolicyName::PerApplicationIsolation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::MultiplexAll => "multiplex_all",
            PolicyName::OneStreamPerCircuit => "one_stream_per_circuit",
            PolicyName::PortGroupIsolation => "port_group_isolation",
            PolicyName::PerApplicationIsolation => "per_application_isolation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let norm = s.replace('-', "_");
        Self::ALL.into_iter().find(|p| p.as_str() == norm)
    }
}

impl std::fmt::Display for PolicyName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub latency_min_ms: u64,
    pub latency_max_ms: u64,
    /// Keep the dispatched-event log and write it next to the reports.
    pub event_log: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorConfig {
    pub n_hops: usize,
    pub circuit_lifetime_s: u64,
    pub policy: PolicyName,
    pub port_groups: Vec<Vec<u16>>,
    pub n_entry: usize,
    pub n_middle: usize,
    pub n_exit: usize,
    /// Indices into the exit relays.
    pub instrumented_exits: Vec<usize>,
    /// Index of the exit that rewrites tracker answers; must be instrumented.
    pub hijack_exit: Option<usize>,
}

impl TorConfig {
    pub fn circuit_policy(&self) -> CircuitPolicy {
        match self.policy {
            PolicyName::MultiplexAll => CircuitPolicy::MultiplexAll,
            PolicyName::OneStreamPerCircuit => CircuitPolicy::OneStreamPerCircuit,
            PolicyName::PortGroupIsolation => CircuitPolicy::PortGroupIsolation(PortGroups {
                groups: self.port_groups.clone(),
            }),
            PolicyName::PerApplicationIsolation => CircuitPolicy::PerApplicationIsolation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BtConfig {
    pub n_peers: usize,
    pub tor_user_fraction: f64,
    pub behavior: BehaviorMix,
    pub announce_interval_s: u64,
    /// Relative jitter on the announce interval.
    pub announce_jitter: f64,
    pub max_peers: usize,
    pub max_connections: usize,
    pub encryption_fraction: f64,
    pub dht_enabled: bool,
    pub pex_enabled: bool,
    pub max_downloads: usize,
    pub session_mean_s: u64,
    pub gap_mean_s: u64,
    pub n_trackers: usize,
    pub catalog: CatalogConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortWeight {
    pub port: u16,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WebConfig {
    /// Share of Tor BitTorrent users that also browse through Tor.
    pub browse_fraction: f64,
    pub n_web_only_users: usize,
    pub browse_mean_interval_s: u64,
    pub n_sites: usize,
    pub ports: Vec<PortWeight>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    pub tor: PopulationTable,
    pub baseline: PopulationTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub top_k: usize,
    pub snapshot_interval_s: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub virtual_duration_s: u64,
    pub report_dir: PathBuf,
    pub sim: SimConfig,
    pub tor: TorConfig,
    pub bittorrent: BtConfig,
    pub web: WebConfig,
    pub population: PopulationConfig,
    pub adversary: AdversaryConfig,
    pub analysis: AnalysisConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_SCENARIO, &[]).expect("bundled scenario is valid")
    }
}

fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Sets `path` (dot-separated) in `table` to `raw`, read as a TOML value
/// when it parses as one and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(assignment.to_string()))?;
    let path = path.trim();
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(ConfigError::Override(assignment.to_string()));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| invalid(path, format!("`{k}` is not a table")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

impl ScenarioConfig {
    /// Parses `text` over the bundled defaults, applies `overrides` and
    /// validates the result.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table =
            toml::from_str(DEFAULT_SCENARIO).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let user: toml::Table =
            toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        merge(&mut table, user);
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ScenarioConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn with_policy(mut self, policy: PolicyName) -> Self {
        self.tor.policy = policy;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    // `!(x >= 0.0)` also rejects NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fractions = [
            (
                "bittorrent.tor_user_fraction",
                self.bittorrent.tor_user_fraction,
            ),
            (
                "bittorrent.encryption_fraction",
                self.bittorrent.encryption_fraction,
            ),
            (
                "bittorrent.announce_jitter",
                self.bittorrent.announce_jitter,
            ),
            (
                "bittorrent.behavior.tracker_only_via_tor",
                self.bittorrent.behavior.tracker_only_via_tor,
            ),
            (
                "bittorrent.behavior.all_via_tor",
                self.bittorrent.behavior.all_via_tor,
            ),
            (
                "bittorrent.catalog.ecosystem_shares.public",
                self.bittorrent.catalog.ecosystem_shares.public,
            ),
            (
                "bittorrent.catalog.ecosystem_shares.private",
                self.bittorrent.catalog.ecosystem_shares.private,
            ),
            (
                "bittorrent.catalog.ecosystem_shares.underground",
                self.bittorrent.catalog.ecosystem_shares.underground,
            ),
            ("web.browse_fraction", self.web.browse_fraction),
        ];
        for (key, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(key, format!("{v} is not a fraction in [0, 1]")));
            }
        }
        let mix = &self.bittorrent.behavior;
        if (mix.tracker_only_via_tor + mix.all_via_tor - 1.0).abs() > 1e-9 {
            return Err(invalid("bittorrent.behavior", "shares must sum to 1"));
        }
        let eco = &self.bittorrent.catalog.ecosystem_shares;
        if (eco.public + eco.private + eco.underground - 1.0).abs() > 1e-9 {
            return Err(invalid(
                "bittorrent.catalog.ecosystem_shares",
                "shares must sum to 1",
            ));
        }
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(invalid("name", "use letters, digits, '-', '_' or '.'"));
        }
        if self.virtual_duration_s == 0 {
            return Err(invalid("virtual_duration_s", "must be positive"));
        }
        if self.sim.latency_min_ms > self.sim.latency_max_ms {
            return Err(invalid("sim.latency_min_ms", "exceeds sim.latency_max_ms"));
        }
        let tor = &self.tor;
        if tor.n_hops == 0 {
            return Err(invalid("tor.n_hops", "must be at least 1"));
        }
        if tor.n_exit == 0 {
            return Err(invalid("tor.n_exit", "need at least one exit relay"));
        }
        if tor.n_hops >= 2 && tor.n_entry == 0 {
            return Err(invalid("tor.n_entry", "need at least one entry relay"));
        }
        if tor.n_hops > 2 && tor.n_middle < tor.n_hops - 2 {
            return Err(invalid(
                "tor.n_middle",
                "too few middle relays for the hop count",
            ));
        }
        if let Some(&i) = tor.instrumented_exits.iter().find(|&&i| i >= tor.n_exit) {
            return Err(invalid(
                "tor.instrumented_exits",
                format!("exit index {i} out of range"),
            ));
        }
        if let Some(h) = tor.hijack_exit {
            if !tor.instrumented_exits.contains(&h) {
                return Err(invalid(
                    "tor.hijack_exit",
                    "must be one of tor.instrumented_exits",
                ));
            }
        }
        PortGroups {
            groups: tor.port_groups.clone(),
        }
        .validate()
        .map_err(|e| invalid("tor.port_groups", e.to_string()))?;
        let bt = &self.bittorrent;
        if bt.announce_interval_s == 0 {
            return Err(invalid(
                "bittorrent.announce_interval_s",
                "must be positive",
            ));
        }
        if bt.n_trackers == 0 {
            return Err(invalid(
                "bittorrent.n_trackers",
                "need at least one tracker",
            ));
        }
        if bt.catalog.n_items == 0 {
            return Err(invalid("bittorrent.catalog.n_items", "catalog is empty"));
        }
        if bt.catalog.swarm_size.is_empty()
            || bt
                .catalog
                .swarm_size
                .iter()
                .any(|s| s.size == 0 || s.weight < 0.0)
        {
            return Err(invalid(
                "bittorrent.catalog.swarm_size",
                "need positive sizes and non-negative weights",
            ));
        }
        if bt.catalog.tags.iter().any(|t| !(t.weight >= 0.0)) {
            return Err(invalid(
                "bittorrent.catalog.tags",
                "weights must be non-negative",
            ));
        }
        if bt.max_downloads == 0 {
            return Err(invalid("bittorrent.max_downloads", "must be at least 1"));
        }
        if bt.session_mean_s == 0 {
            return Err(invalid("bittorrent.session_mean_s", "must be positive"));
        }
        let web = &self.web;
        if web.browse_mean_interval_s == 0 {
            return Err(invalid("web.browse_mean_interval_s", "must be positive"));
        }
        if web.n_sites == 0 || web.ports.is_empty() || web.ports.iter().any(|p| !(p.weight >= 0.0))
        {
            return Err(invalid("web", "need sites and non-negative port weights"));
        }
        self.population
            .tor
            .validate()
            .map_err(|e| invalid("population.tor", e.to_string()))?;
        self.population
            .baseline
            .validate()
            .map_err(|e| invalid("population.baseline", e.to_string()))?;
        if self.analysis.snapshot_interval_s == 0 {
            return Err(invalid("analysis.snapshot_interval_s", "must be positive"));
        }
        Ok(())
    }
}
