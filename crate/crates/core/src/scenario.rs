// SPDX-License-Identifier: Apache-2.0

//! Declarative experiment description, loaded from JSON.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::bf::BandwidthFunction;
use crate::coordinator::{Mode, Scope};
use crate::sim::topology::TopologySpec;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("override {key:?}: {message}")]
    Override { key: String, message: String },
    #[error("invalid scenario:\n{0}")]
    Invalid(ValidationErrors),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Validation failures, each prefixed with its path inside the document.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationErrors(pub Vec<String>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.0 {
            writeln!(f, "  {e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TenantConfig {
    pub id: u32,
    #[serde(default = "one")]
    pub weight: f64,
    /// Explicit tenant BF; otherwise `min(weight·unit·s, limit)` where `limit`
    /// is the combined rate limit of the hosts sending the tenant's flows.
    #[serde(default)]
    pub bf: Option<BandwidthFunction>,
    /// Bits per second, encoded as the tenant BF's value at share 0.
    #[serde(default)]
    pub min_guarantee: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SourceKind {
    Cbr,
    Aimd,
    FlowList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FlowArrival {
    pub start: f64,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PoissonSpec {
    /// Arrivals per second.
    pub rate: f64,
    pub count: usize,
    /// Mean flow size in bytes.
    pub mean_size: f64,
    #[serde(default)]
    pub start: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub tenant: u32,
    pub src: String,
    pub dst: String,
    /// CBR rate in bits per second (also used by CBR flow lists). For AIMD
    /// sources, the starting rate; the access link capacity if absent.
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub start: f64,
    #[serde(default)]
    pub stop: Option<f64>,
    /// Flow size in bytes; unbounded if absent.
    #[serde(default)]
    pub size: Option<u64>,
    /// Explicit node path from `src` to `dst`; ECMP otherwise.
    #[serde(default)]
    pub path: Option<Vec<String>>,
    #[serde(default = "default_host_buffer")]
    pub host_buffer_packets: u64,
    /// CBR only: each packet is generated up to this fraction of the
    /// packet interval late, drawn from the scenario seed.
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub max_cwnd: Option<f64>,
    /// Flow-list entries.
    #[serde(default)]
    pub flows: Vec<FlowArrival>,
    #[serde(default)]
    pub poisson: Option<PoissonSpec>,
    /// Transport of flow-list entries (`cbr` or `aimd`).
    #[serde(default)]
    pub transport: Option<SourceKind>,
}

fn default_host_buffer() -> u64 {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CawcConfig {
    #[serde(default = "default_sliding")]
    pub sliding_time: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_check")]
    pub check_period_packets: u32,
}

impl Default for CawcConfig {
    fn default() -> Self {
        Self {
            sliding_time: default_sliding(),
            threshold: default_threshold(),
            check_period_packets: default_check(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TenantCounterConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_th")]
    pub th: f64,
    /// Switch names carrying a counter; all switches if absent.
    #[serde(default)]
    pub switches: Option<Vec<String>>,
}

impl Default for TenantCounterConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            th: default_th(),
            switches: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EcnConfig {
    #[serde(default = "default_ecn_min")]
    pub min: u64,
    #[serde(default = "default_ecn_max")]
    pub max: u64,
}

impl Default for EcnConfig {
    fn default() -> Self {
        Self {
            min: default_ecn_min(),
            max: default_ecn_max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CoordinatorConfig {
    #[serde(default)]
    pub scope: Scope,
    #[serde(default)]
    pub mode: Mode,
    /// One-way control-channel delay in seconds.
    #[serde(default)]
    pub delay: f64,
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        Self {
            scope: Scope::default(),
            mode: Mode::default(),
            delay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ProNetConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_report_cycle")]
    pub report_cycle: f64,
    /// Defaults to a tenth of the report cycle.
    #[serde(default)]
    pub rate_control_cycle: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub k: f64,
    #[serde(default = "default_min_fs")]
    pub min_fair_share: f64,
    #[serde(default = "default_unit")]
    pub fair_share_unit: f64,
    /// Token bucket depth; 1.5 MTU if absent.
    #[serde(default)]
    pub burst_bytes: Option<f64>,
    #[serde(default)]
    pub cawc: CawcConfig,
    #[serde(default)]
    pub tenant_counter: TenantCounterConfig,
    #[serde(default)]
    pub ecn: EcnConfig,
    /// Per-host limit; the host's total link capacity if absent.
    #[serde(default)]
    pub device_rate_limit: Option<f64>,
    #[serde(default)]
    pub coordinator: CoordinatorConfig,
    /// See [`crate::host::HostParams::compensate_every_cycle`].
    #[serde(default = "yes")]
    pub compensate_every_cycle: bool,
}

impl Default for ProNetConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            report_cycle: default_report_cycle(),
            rate_control_cycle: None,
            alpha: default_alpha(),
            k: 1.0,
            min_fair_share: default_min_fs(),
            fair_share_unit: default_unit(),
            burst_bytes: None,
            cawc: CawcConfig::default(),
            tenant_counter: TenantCounterConfig::default(),
            ecn: EcnConfig::default(),
            device_rate_limit: None,
            coordinator: CoordinatorConfig::default(),
            compensate_every_cycle: true,
        }
    }
}

impl ProNetConfig {
    pub fn rate_control_cycle(&self) -> f64 {
        self.rate_control_cycle.unwrap_or(self.report_cycle / 10.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub topology: TopologySpec,
    pub tenants: Vec<TenantConfig>,
    #[serde(default)]
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub pronet: ProNetConfig,
    /// Simulated seconds.
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    /// Sampling interval in seconds.
    #[serde(default = "default_sampling")]
    pub sampling: f64,
    #[serde(default)]
    pub expect: Vec<String>,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_sliding() -> f64 {
    10e-6
}
fn default_threshold() -> f64 {
    0.2
}
fn default_check() -> u32 {
    50
}
fn default_th() -> f64 {
    0.1
}
fn default_ecn_min() -> u64 {
    50_000
}
fn default_ecn_max() -> u64 {
    200_000
}
fn default_report_cycle() -> f64 {
    0.01
}
fn default_alpha() -> f64 {
    0.1
}
fn default_min_fs() -> f64 {
    0.01
}
fn default_unit() -> f64 {
    crate::bf::DEFAULT_FAIR_SHARE_UNIT
}
fn default_sampling() -> f64 {
    0.01
}

fn parse_error(origin: &str, e: serde_json::Error) -> ScenarioError {
    ScenarioError::Parse {
        origin: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Sets `key` (dot-separated, numeric segments index arrays) to `raw`, parsed
/// as JSON when possible and as a string otherwise.
pub fn apply_override(doc: &mut Value, key: &str, raw: &str) -> Result<(), ScenarioError> {
    let err = |message: String| ScenarioError::Override {
        key: key.to_string(),
        message,
    };
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let segments: Vec<&str> = key.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(err("empty path segment".into()));
    }
    let mut at = doc;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        if at.is_null() {
            *at = Value::Object(Default::default());
        }
        at = match at {
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| err(format!("{seg:?} is not an array index")))?;
                let len = items.len();
                items
                    .get_mut(idx)
                    .ok_or_else(|| err(format!("index {idx} out of range (len {len})")))?
            }
            Value::Object(map) => map.entry(seg.to_string()).or_insert(if last {
                Value::Null
            } else {
                Value::Object(Default::default())
            }),
            _ => return Err(err(format!("cannot descend into scalar at {seg:?}"))),
        };
    }
    *at = value;
    Ok(())
}

/// Splits `key=value`.
pub fn parse_assignment(text: &str) -> Result<(String, String), ScenarioError> {
    match text.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(ScenarioError::Override {
            key: text.to_string(),
            message: "expected key=value".into(),
        }),
    }
}

impl Scenario {
    pub fn from_json(text: &str, origin: &str, overrides: &[(String, String)]) -> Result<Scenario, ScenarioError> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| parse_error(origin, e))?;
        for (k, v) in overrides {
            apply_override(&mut doc, k, v)?;
        }
        let scenario: Scenario = if overrides.is_empty() {
            serde_json::from_str(text).map_err(|e| parse_error(origin, e))?
        } else {
            serde_json::from_value(doc).map_err(|e| parse_error(origin, e))?
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, &path.display().to_string(), overrides)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Structural checks that do not need the built topology.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut errs = Vec::new();
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            errs.push(format!("duration: must be positive, got {}", self.duration));
        }
        if !(self.sampling > 0.0) {
            errs.push(format!("sampling: must be positive, got {}", self.sampling));
        }
        let mut ids: Vec<u32> = self.tenants.iter().map(|t| t.id).collect();
        ids.sort();
        for w in ids.windows(2) {
            if w[0] == w[1] {
                errs.push(format!("tenants: duplicate id {}", w[0]));
            }
        }
        for (i, t) in self.tenants.iter().enumerate() {
            if !(t.weight > 0.0) || !t.weight.is_finite() {
                errs.push(format!("tenants[{i}].weight: must be positive, got {}", t.weight));
            }
            if let Some(g) = t.min_guarantee {
                if !(g >= 0.0) {
                    errs.push(format!("tenants[{i}].minGuarantee: must be non-negative"));
                }
            }
        }
        for (i, s) in self.sources.iter().enumerate() {
            let at = format!("sources[{i}]");
            if !ids.contains(&s.tenant) {
                errs.push(format!("{at}.tenant: unknown tenant {}", s.tenant));
            }
            if s.src == s.dst {
                errs.push(format!("{at}: src and dst are the same host"));
            }
            if !(s.start >= 0.0) {
                errs.push(format!("{at}.start: must be non-negative"));
            }
            if let Some(stop) = s.stop {
                if stop < s.start {
                    errs.push(format!("{at}.stop: before start"));
                }
            }
            if !(0.0..1.0).contains(&s.jitter) {
                errs.push(format!("{at}.jitter: must be in [0, 1), got {}", s.jitter));
            }
            let cbr_like = s.kind == SourceKind::Cbr
                || (s.kind == SourceKind::FlowList && s.transport == Some(SourceKind::Cbr));
            match s.rate {
                Some(r) if !(r > 0.0) => errs.push(format!("{at}.rate: must be positive")),
                None if cbr_like => errs.push(format!("{at}.rate: required for CBR traffic")),
                _ => {}
            }
            if s.kind == SourceKind::FlowList {
                if s.flows.is_empty() && s.poisson.is_none() {
                    errs.push(format!("{at}: flow list needs `flows` or `poisson`"));
                }
                if s.transport == Some(SourceKind::FlowList) {
                    errs.push(format!("{at}.transport: must be cbr or aimd"));
                }
                if let Some(p) = &s.poisson {
                    if !(p.rate > 0.0) || !(p.mean_size >= 1.0) {
                        errs.push(format!("{at}.poisson: rate and meanSize must be positive"));
                    }
                }
            }
        }
        let p = &self.pronet;
        if !(p.report_cycle > 0.0) {
            errs.push("pronet.reportCycle: must be positive".into());
        }
        if !(p.rate_control_cycle() > 0.0) || p.rate_control_cycle() > p.report_cycle {
            errs.push("pronet.rateControlCycle: must be positive and at most reportCycle".into());
        }
        if !(p.alpha >= 0.0) {
            errs.push("pronet.alpha: must be non-negative".into());
        }
        if !(p.k >= 0.0) {
            errs.push("pronet.k: must be non-negative".into());
        }
        if !(p.fair_share_unit > 0.0) {
            errs.push("pronet.fairShareUnit: must be positive".into());
        }
        if !(0.0..=1.0).contains(&p.cawc.threshold) {
            errs.push("pronet.cawc.threshold: must be in [0, 1]".into());
        }
        if p.cawc.check_period_packets == 0 {
            errs.push("pronet.cawc.checkPeriodPackets: must be positive".into());
        }
        if p.ecn.min > p.ecn.max {
            errs.push("pronet.ecn: min exceeds max".into());
        }
        if !(p.coordinator.delay >= 0.0) {
            errs.push("pronet.coordinator.delay: must be non-negative".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(ValidationErrors(errs)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "topology": {"kind": "dumbbell", "senders": 1, "capacity": 1e9},
        "tenants": [{"id": 0}],
        "sources": [{"kind": "cbr", "tenant": 0, "src": "h0", "dst": "r0", "rate": 1e8}],
        "duration": 0.1
    }"#;

    #[test]
    fn defaults_fill_in() {
        let s = Scenario::from_json(MINIMAL, "min", &[]).unwrap();
        assert_eq!(s.pronet.alpha, 0.1);
        assert_eq!(s.pronet.report_cycle, 0.01);
        assert!((s.pronet.rate_control_cycle() - 0.001).abs() < 1e-15);
        assert_eq!(s.pronet.cawc.check_period_packets, 50);
        assert_eq!(s.pronet.tenant_counter.th, 0.1);
        assert_eq!(s.sampling, 0.01);
        assert_eq!(s.tenants[0].weight, 1.0);
    }

    #[test]
    fn overrides_take_effect() {
        let o = vec![
            parse_assignment("pronet.alpha=0.0").unwrap(),
            parse_assignment("tenants.0.weight=3").unwrap(),
            parse_assignment("pronet.coordinator.mode=reflect").unwrap(),
        ];
        let s = Scenario::from_json(MINIMAL, "min", &o).unwrap();
        assert_eq!(s.pronet.alpha, 0.0);
        assert_eq!(s.tenants[0].weight, 3.0);
        assert_eq!(s.pronet.coordinator.mode, Mode::Reflect);
    }

    #[test]
    fn bad_override_paths_are_reported() {
        let o = vec![("tenants.7.weight".to_string(), "1".to_string())];
        assert!(matches!(
            Scenario::from_json(MINIMAL, "min", &o),
            Err(ScenarioError::Override { .. })
        ));
        assert!(parse_assignment("novalue").is_err());
    }

    #[test]
    fn parse_errors_carry_positions() {
        let err = Scenario::from_json("{\n  \"duration\": ,\n}", "broken.json", &[]).unwrap_err();
        match err {
            ScenarioError::Parse { line, origin, .. } => {
                assert_eq!(line, 2);
                assert_eq!(origin, "broken.json");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_lists_paths() {
        let text = MINIMAL.replace("\"tenant\": 0", "\"tenant\": 4").replace("1e8", "-1");
        let err = Scenario::from_json(&text, "x", &[]).unwrap_err();
        let ScenarioError::Invalid(ValidationErrors(list)) = err else {
            panic!("expected validation error");
        };
        assert!(list.iter().any(|e| e.starts_with("sources[0].tenant")));
        assert!(list.iter().any(|e| e.starts_with("sources[0].rate")));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = MINIMAL.replace("\"duration\"", "\"durration\": 1, \"duration\"");
        assert!(matches!(
            Scenario::from_json(&text, "x", &[]),
            Err(ScenarioError::Parse { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let s = Scenario::from_json(MINIMAL, "min", &[]).unwrap();
        let back = Scenario::from_json(&s.to_json(), "again", &[]).unwrap();
        assert_eq!(s, back);
    }
}
