//! Scenario files: verticals, requests and pool in JSON, with every
//! physical quantity written as a string carrying its unit (`"20 ms"`,
//! `"10 Gbit/s"`). Loading happens in two passes: the JSON is decoded into
//! raw string-typed records, then each quantity is converted with its field
//! path kept for diagnostics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use arbiter_core::engine::{ArbitrationRequest, BudgetShortfallPolicy, PlacementFailurePolicy};
use arbiter_core::orchestrator::PoolConfig;
use arbiter_core::units::{parse_quantity, Dimension};
use arbiter_core::{
    GraphViolation, Resources, Slo, Tolerance, VerticalId, VirtualLinkSpec, VnfSpec, Vnffg, VsiId,
    VsiRecord,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}, column {column}, at `{field}`: {message}")]
    Syntax {
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("at `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("at `{field}`: invalid forwarding graph: {}", list(.violations))]
    Graph {
        field: String,
        violations: Vec<GraphViolation>,
    },
}

fn list(violations: &[GraphViolation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl ScenarioError {
    fn field(field: impl fmt::Display, message: impl fmt::Display) -> Self {
        ScenarioError::Field {
            field: field.to_string(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub pool: Option<RawPool>,
    #[serde(default)]
    pub tolerance: Option<Tolerance<f64>>,
    #[serde(default)]
    pub verticals: Vec<RawVertical>,
    #[serde(default)]
    pub requests: Vec<RawRequest>,
    /// VSIs to terminate after all requests were arbitrated.
    #[serde(default)]
    pub terminations: Vec<String>,
    #[serde(default)]
    pub expected: BTreeMap<String, RawExpectation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawResources {
    pub cpu: String,
    pub bandwidth: String,
    pub memory: String,
    pub storage: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPool {
    pub capacity: RawResources,
    #[serde(default)]
    pub colocated_cpu: Option<String>,
    #[serde(default)]
    pub scaling_headroom: f64,
    #[serde(default)]
    pub ladder: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawVertical {
    pub id: String,
    #[serde(default)]
    pub priority: i64,
    pub budget: RawResources,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSlo {
    pub max_latency: String,
    pub max_request_rate: String,
    #[serde(default)]
    pub coverage_radius: Option<String>,
    #[serde(default)]
    pub min_data_rate: Option<String>,
    #[serde(default)]
    pub max_streams: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawVnf {
    pub id: String,
    pub compute_weight: f64,
    /// Defaults to the SLO's maximum request rate.
    #[serde(default)]
    pub arrival_rate: Option<String>,
    #[serde(default)]
    pub memory: Option<String>,
    #[serde(default)]
    pub storage: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLink {
    pub from: String,
    pub to: String,
    pub data_volume: String,
    pub bandwidth_weight: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawShortfall {
    #[default]
    Cancel,
    Force,
    IncreaseBudget(RawResources),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRequest {
    pub id: String,
    /// Required in scenario files; taken from the path in the HTTP API.
    #[serde(default)]
    pub vertical: Option<String>,
    /// Defaults to the vertical's priority.
    #[serde(default)]
    pub priority: Option<i64>,
    #[serde(default)]
    pub isolated: bool,
    pub slo: RawSlo,
    pub vnfs: Vec<RawVnf>,
    #[serde(default)]
    pub links: Vec<RawLink>,
    #[serde(default)]
    pub on_budget_shortfall: RawShortfall,
    #[serde(default = "default_placement_policy")]
    pub on_placement_failure: PlacementFailurePolicy,
}

fn default_placement_policy() -> PlacementFailurePolicy {
    PlacementFailurePolicy::Undo
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawExpectation {
    #[serde(default)]
    pub decision: Option<String>,
    #[serde(default)]
    pub state: Option<String>,
    #[serde(default)]
    pub cpu_within: Option<[String; 2]>,
    #[serde(default)]
    pub bandwidth_within: Option<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertical {
    pub id: VerticalId,
    pub priority: i64,
    pub budget: Resources,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    pub decision: Option<String>,
    pub state: Option<String>,
    /// packets/s
    pub cpu_within: Option<(f64, f64)>,
    /// bits/s
    pub bandwidth_within: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub pool: PoolConfig,
    pub tolerance: Tolerance<f64>,
    pub verticals: Vec<Vertical>,
    pub requests: Vec<ArbitrationRequest>,
    pub terminations: Vec<VsiId>,
    pub expected: BTreeMap<VsiId, Expectation>,
}

/// Pool used when a scenario does not declare one: large enough that only
/// budgets constrain the outcome.
pub fn default_pool() -> PoolConfig {
    PoolConfig::new(Resources::new(1e9, 1e15, 1e18, 1e18))
}

fn quantity(text: &str, dimension: Dimension, field: &str) -> Result<f64, ScenarioError> {
    parse_quantity(text, dimension).map_err(|e| ScenarioError::field(field, e))
}

fn optional(text: &Option<String>, dimension: Dimension, field: &str) -> Result<Option<f64>, ScenarioError> {
    text.as_deref().map(|t| quantity(t, dimension, field)).transpose()
}

pub fn convert_resources(raw: &RawResources, field: &str) -> Result<Resources, ScenarioError> {
    Ok(Resources::new(
        quantity(&raw.cpu, Dimension::PacketRate, &format!("{field}.cpu"))?,
        quantity(&raw.bandwidth, Dimension::Bandwidth, &format!("{field}.bandwidth"))?,
        quantity(&raw.memory, Dimension::Bytes, &format!("{field}.memory"))?,
        quantity(&raw.storage, Dimension::Bytes, &format!("{field}.storage"))?,
    ))
}

fn convert_pool(raw: &RawPool, field: &str) -> Result<PoolConfig, ScenarioError> {
    let capacity = convert_resources(&raw.capacity, &format!("{field}.capacity"))?;
    let mut pool = PoolConfig::new(capacity);
    if let Some(tier) = optional(&raw.colocated_cpu, Dimension::PacketRate, &format!("{field}.colocated_cpu"))? {
        pool.colocated_cpu = tier;
    }
    if !(0.0..=1.0).contains(&raw.scaling_headroom) {
        return Err(ScenarioError::field(
            format!("{field}.scaling_headroom"),
            "must lie in [0, 1]",
        ));
    }
    pool.scaling_headroom = raw.scaling_headroom;
    if let Some(ladder) = &raw.ladder {
        if let Some(bad) = ladder.iter().position(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(ScenarioError::field(
                format!("{field}.ladder[{bad}]"),
                "intermediate points must lie in (0, 1)",
            ));
        }
        pool.ladder = ladder.clone();
    }
    Ok(pool)
}

/// Converts one request. `vertical_priority` supplies the default priority;
/// `vertical` overrides the request's own vertical field when given.
pub fn convert_request(
    raw: &RawRequest,
    field: &str,
    vertical: Option<&str>,
    vertical_priority: i64,
) -> Result<ArbitrationRequest, ScenarioError> {
    let vertical = match (vertical, raw.vertical.as_deref()) {
        (Some(v), _) => v.to_owned(),
        (None, Some(v)) => v.to_owned(),
        (None, None) => return Err(ScenarioError::field(format!("{field}.vertical"), "missing vertical id")),
    };
    let slo_field = format!("{field}.slo");
    let mut slo = Slo::new(
        quantity(&raw.slo.max_latency, Dimension::Time, &format!("{slo_field}.max_latency"))?,
        quantity(
            &raw.slo.max_request_rate,
            Dimension::RequestRate,
            &format!("{slo_field}.max_request_rate"),
        )?,
    );
    if let Some(r) = optional(&raw.slo.coverage_radius, Dimension::Length, &format!("{slo_field}.coverage_radius"))? {
        slo.coverage_radius = r;
    }
    slo.min_data_rate = optional(&raw.slo.min_data_rate, Dimension::Bandwidth, &format!("{slo_field}.min_data_rate"))?;
    slo.max_streams = raw.slo.max_streams;
    slo.validate().map_err(|m| ScenarioError::field(&slo_field, m))?;

    let mut vnfs = Vec::with_capacity(raw.vnfs.len());
    for (i, v) in raw.vnfs.iter().enumerate() {
        let f = format!("{field}.vnfs[{i}]");
        let rate = match &v.arrival_rate {
            Some(t) => quantity(t, Dimension::RequestRate, &format!("{f}.arrival_rate"))?,
            None => slo.max_request_rate,
        };
        let memory = optional(&v.memory, Dimension::Bytes, &format!("{f}.memory"))?.unwrap_or(0.0);
        let storage = optional(&v.storage, Dimension::Bytes, &format!("{f}.storage"))?.unwrap_or(0.0);
        vnfs.push(VnfSpec::new(v.id.as_str(), v.compute_weight, rate).with_demands(memory, storage));
    }
    let mut links = Vec::with_capacity(raw.links.len());
    for (i, l) in raw.links.iter().enumerate() {
        let volume = quantity(&l.data_volume, Dimension::DataVolume, &format!("{field}.links[{i}].data_volume"))?;
        links.push(VirtualLinkSpec::new(l.from.as_str(), l.to.as_str(), volume, l.bandwidth_weight));
    }
    let graph = Vnffg::new(vnfs, links);
    graph.validate().map_err(|violations| ScenarioError::Graph {
        field: field.to_owned(),
        violations,
    })?;

    let shortfall = match &raw.on_budget_shortfall {
        RawShortfall::Cancel => BudgetShortfallPolicy::Cancel,
        RawShortfall::Force => BudgetShortfallPolicy::Force,
        RawShortfall::IncreaseBudget(b) => BudgetShortfallPolicy::IncreaseBudget(convert_resources(
            b,
            &format!("{field}.on_budget_shortfall.increase_budget"),
        )?),
    };
    let vsi = VsiRecord::new(
        raw.id.as_str(),
        vertical,
        raw.priority.unwrap_or(vertical_priority),
        graph,
        slo,
    )
    .isolated(raw.isolated);
    Ok(ArbitrationRequest::new(vsi)
        .on_shortfall(shortfall)
        .on_placement_failure(raw.on_placement_failure))
}

fn range(raw: &[String; 2], dimension: Dimension, field: &str) -> Result<(f64, f64), ScenarioError> {
    let lo = quantity(&raw[0], dimension, &format!("{field}[0]"))?;
    let hi = quantity(&raw[1], dimension, &format!("{field}[1]"))?;
    if lo > hi {
        return Err(ScenarioError::field(field, "lower bound above upper bound"));
    }
    Ok((lo, hi))
}

impl RawScenario {
    pub fn convert(&self) -> Result<Scenario, ScenarioError> {
        let pool = match &self.pool {
            Some(p) => convert_pool(p, "pool")?,
            None => default_pool(),
        };
        let mut verticals = Vec::new();
        let mut priorities = BTreeMap::new();
        for (i, v) in self.verticals.iter().enumerate() {
            let field = format!("verticals[{i}]");
            if priorities.insert(v.id.clone(), v.priority).is_some() {
                return Err(ScenarioError::field(format!("{field}.id"), format!("duplicate vertical `{}`", v.id)));
            }
            let budget = convert_resources(&v.budget, &format!("{field}.budget"))?;
            verticals.push(Vertical {
                id: VerticalId::new(v.id.as_str()),
                priority: v.priority,
                budget,
            });
        }
        let mut requests = Vec::new();
        let mut ids = BTreeSet::new();
        for (i, r) in self.requests.iter().enumerate() {
            let field = format!("requests[{i}]");
            let vertical = r
                .vertical
                .as_deref()
                .ok_or_else(|| ScenarioError::field(format!("{field}.vertical"), "missing vertical id"))?;
            let Some(priority) = priorities.get(vertical) else {
                return Err(ScenarioError::field(
                    format!("{field}.vertical"),
                    format!("undeclared vertical `{vertical}`"),
                ));
            };
            if !ids.insert(r.id.clone()) {
                return Err(ScenarioError::field(format!("{field}.id"), format!("duplicate request id `{}`", r.id)));
            }
            requests.push(convert_request(r, &field, None, *priority)?);
        }
        let mut terminations = Vec::new();
        for (i, t) in self.terminations.iter().enumerate() {
            if !ids.contains(t) {
                return Err(ScenarioError::field(format!("terminations[{i}]"), format!("unknown request `{t}`")));
            }
            terminations.push(VsiId::new(t.as_str()));
        }
        let mut expected = BTreeMap::new();
        for (id, e) in &self.expected {
            let field = format!("expected.{id}");
            if !ids.contains(id) {
                return Err(ScenarioError::field(&field, format!("unknown request `{id}`")));
            }
            expected.insert(
                VsiId::new(id.as_str()),
                Expectation {
                    decision: e.decision.clone(),
                    state: e.state.clone(),
                    cpu_within: e
                        .cpu_within
                        .as_ref()
                        .map(|r| range(r, Dimension::PacketRate, &format!("{field}.cpu_within")))
                        .transpose()?,
                    bandwidth_within: e
                        .bandwidth_within
                        .as_ref()
                        .map(|r| range(r, Dimension::Bandwidth, &format!("{field}.bandwidth_within")))
                        .transpose()?,
                },
            );
        }
        Ok(Scenario {
            seed: self.seed,
            pool,
            tolerance: self.tolerance.unwrap_or_default(),
            verticals,
            requests,
            terminations,
            expected,
        })
    }
}

/// serde_json's message without its trailing position.
fn bare_message(err: &serde_json::Error) -> String {
    let text = err.to_string();
    match text.rfind(" at line ") {
        Some(i) => text[..i].to_owned(),
        None => text,
    }
}

/// Decodes JSON into `T`, reporting the line, column and field path of the
/// first problem.
pub fn decode<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ScenarioError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let field = err.path().to_string();
        let inner = err.into_inner();
        ScenarioError::Syntax {
            line: inner.line(),
            column: inner.column(),
            field,
            message: bare_message(&inner),
        }
    })?;
    de.end().map_err(|inner| ScenarioError::Syntax {
        line: inner.line(),
        column: inner.column(),
        field: ".".to_owned(),
        message: bare_message(&inner),
    })?;
    Ok(value)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    decode::<RawScenario>(text)?.convert()
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "seed": 3,
        "verticals": [
            {"id": "auto", "priority": 2,
             "budget": {"cpu": "10000 packets/s", "bandwidth": "10 Gbit/s", "memory": "64 GB", "storage": "1 TB"}}
        ],
        "requests": [
            {"id": "ica", "vertical": "auto",
             "slo": {"max_latency": "20 ms", "max_request_rate": "60 requests/s", "coverage_radius": "500 m"},
             "vnfs": [
                {"id": "a", "compute_weight": 0.5, "memory": "1 GB"},
                {"id": "b", "compute_weight": 0.5, "arrival_rate": "40 requests/s"}
             ],
             "links": [{"from": "a", "to": "b", "data_volume": "1 Mbit", "bandwidth_weight": 0.5}]}
        ]
    }"#;

    #[test]
    fn converts_units_and_defaults() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.seed, 3);
        assert_eq!(s.verticals[0].budget, Resources::new(1e4, 1e10, 64e9, 1e12));
        let vsi = &s.requests[0].vsi;
        assert_eq!(vsi.priority, 2);
        assert_eq!(vsi.slo.max_latency, 0.02);
        assert_eq!(vsi.slo.coverage_radius, 500.0);
        assert_eq!(vsi.vnffg.vnfs[0].arrival_rate, 60.0);
        assert_eq!(vsi.vnffg.vnfs[1].arrival_rate, 40.0);
        assert_eq!(vsi.vnffg.vnfs[0].memory_demand, 1e9);
        assert_eq!(vsi.vnffg.links[0].data_volume, 1e6);
        assert_eq!(s.requests[0].on_budget_shortfall, BudgetShortfallPolicy::Cancel);
    }

    #[test]
    fn wrong_dimension_names_the_field() {
        let text = MINIMAL.replace("\"20 ms\"", "\"20 Gbit/s\"");
        let err = parse_scenario(&text).unwrap_err();
        match err {
            ScenarioError::Field { field, .. } => assert_eq!(field, "requests[0].slo.max_latency"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn bare_numbers_are_rejected_with_position() {
        let text = MINIMAL.replace("\"20 ms\"", "0.02");
        match parse_scenario(&text).unwrap_err() {
            ScenarioError::Syntax { line, field, .. } => {
                assert_eq!(line, 9);
                assert_eq!(field, "requests[0].slo.max_latency");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn undeclared_vertical_is_reported() {
        let text = MINIMAL.replace("\"vertical\": \"auto\"", "\"vertical\": \"media\"");
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("undeclared vertical `media`"), "{err}");
    }

    #[test]
    fn dangling_link_is_reported() {
        let text = MINIMAL.replace("\"to\": \"b\"", "\"to\": \"z\"");
        match parse_scenario(&text).unwrap_err() {
            ScenarioError::Graph { violations, .. } => {
                assert!(matches!(violations[0], GraphViolation::DanglingEndpoint { .. }))
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn empty_scenario_is_valid() {
        let s = parse_scenario("{}").unwrap();
        assert!(s.requests.is_empty() && s.verticals.is_empty());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = parse_scenario(r#"{"sead": 1}"#).unwrap_err();
        assert!(matches!(err, ScenarioError::Syntax { .. }));
    }
}
