//! Allocation reports. Every quantity is printed from the engine's own
//! value with its unit suffix; nothing is recomputed here except the
//! conservation check.

use std::collections::BTreeMap;

use arbiter_core::engine::{ArbitrationOutcome, Decision, Displacement, Engine, RejectReason, TerminationOutcome};
use arbiter_core::orchestrator::{InfrastructurePool, PlacementPoint, Reservation};
use arbiter_core::units::{format_quantity, Dimension};
use arbiter_core::{
    DeploymentFlavour, ElementId, NsiId, NsiRecord, ResourceBudget, Resources, VerticalId, VsiId, VsiRecord,
    VsiState,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest conservation residual a report may carry.
pub const CONSERVATION_LIMIT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("budget conservation violated: residual {0:e}")]
    Conservation(f64),
}

fn cpu(v: f64) -> String {
    format_quantity(v, Dimension::PacketRate)
}

fn bandwidth(v: f64) -> String {
    format_quantity(v, Dimension::Bandwidth)
}

fn bytes(v: f64) -> String {
    format_quantity(v, Dimension::Bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourcesReport {
    pub cpu: String,
    pub bandwidth: String,
    pub memory: String,
    pub storage: String,
}

impl From<&Resources> for ResourcesReport {
    fn from(r: &Resources) -> Self {
        Self {
            cpu: cpu(r.cpu),
            bandwidth: bandwidth(r.bandwidth),
            memory: bytes(r.memory),
            storage: bytes(r.storage),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlavourReport {
    /// `[min, max]`
    pub cpu: [String; 2],
    pub bandwidth: [String; 2],
    pub memory: String,
    pub storage: String,
}

impl From<&DeploymentFlavour> for FlavourReport {
    fn from(f: &DeploymentFlavour) -> Self {
        Self {
            cpu: [cpu(f.cpu_min), cpu(f.cpu_max)],
            bandwidth: [bandwidth(f.bandwidth_min), bandwidth(f.bandwidth_max)],
            memory: bytes(f.memory),
            storage: bytes(f.storage),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementReport {
    pub vsi_id: VsiId,
    pub previous: Option<FlavourReport>,
    /// Absent when the service was terminated.
    pub current: Option<FlavourReport>,
}

impl From<&Displacement> for DisplacementReport {
    fn from(d: &Displacement) -> Self {
        Self {
            vsi_id: d.vsi_id.clone(),
            previous: d.previous.as_ref().map(FlavourReport::from),
            current: d.current.as_ref().map(FlavourReport::from),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeReport {
    pub vsi_id: VsiId,
    pub decision: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nsi_id: Option<NsiId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flavour: Option<FlavourReport>,
    /// Failed elements (degraded) or unserved ones (partial).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub elements: Vec<ElementId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub displaced_vsis: Vec<DisplacementReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rescaled_vsis: Vec<VsiId>,
}

fn reject_text(reason: &RejectReason) -> String {
    match reason {
        RejectReason::DuplicateVsi => "a VSI with this id already exists".to_owned(),
        RejectReason::Infeasible { reason } => reason.to_string(),
        RejectReason::BudgetBelowAllocated => "the increased budget is below what is already allocated".to_owned(),
        RejectReason::ShortfallUnresolvable { cause } => cause.to_string(),
        RejectReason::PlacementFailed { elements } => format!(
            "placement failed at {}",
            elements.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
        ),
    }
}

impl From<&ArbitrationOutcome> for OutcomeReport {
    fn from(o: &ArbitrationOutcome) -> Self {
        let mut report = OutcomeReport {
            vsi_id: o.vsi_id.clone(),
            decision: o.decision.label().to_owned(),
            reason: None,
            nsi_id: None,
            shared: None,
            flavour: o.decision.flavour().map(FlavourReport::from),
            elements: Vec::new(),
            displaced_vsis: o.displaced_vsis.iter().map(DisplacementReport::from).collect(),
            rescaled_vsis: o.rescaled_vsis.clone(),
        };
        match &o.decision {
            Decision::Deployed { nsi_id, shared, .. } => {
                report.nsi_id = Some(nsi_id.clone());
                report.shared = Some(*shared);
            }
            Decision::Degraded { nsi_id, failed, .. } => {
                report.nsi_id = Some(nsi_id.clone());
                report.elements = failed.clone();
            }
            Decision::Partial { nsi_id, unserved, .. } => {
                report.nsi_id = Some(nsi_id.clone());
                report.elements = unserved.clone();
            }
            Decision::Rejected { reason } => report.reason = Some(reject_text(reason)),
            Decision::Cancelled { reason } => report.reason = Some(reason.to_string()),
        }
        report
    }
}

impl OutcomeReport {
    /// A request the engine refused before arbitrating it.
    pub fn error(vsi_id: VsiId, message: String) -> Self {
        Self {
            vsi_id,
            decision: "error".to_owned(),
            reason: Some(message),
            nsi_id: None,
            shared: None,
            flavour: None,
            elements: Vec::new(),
            displaced_vsis: Vec::new(),
            rescaled_vsis: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminationReport {
    pub vsi_id: VsiId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rescaled_vsis: Vec<VsiId>,
}

impl TerminationReport {
    pub fn from_result<E: std::fmt::Display>(vsi_id: VsiId, result: &Result<TerminationOutcome, E>) -> Self {
        match result {
            Ok(t) => Self {
                vsi_id,
                error: None,
                rescaled_vsis: t.rescaled_vsis.clone(),
            },
            Err(e) => Self {
                vsi_id,
                error: Some(e.to_string()),
                rescaled_vsis: Vec::new(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VsiReport {
    pub vertical_id: VerticalId,
    pub priority: i64,
    pub state: VsiState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nsi_id: Option<NsiId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flavour: Option<FlavourReport>,
    pub charge: ResourcesReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unserved: Vec<ElementId>,
}

impl From<&VsiRecord> for VsiReport {
    fn from(v: &VsiRecord) -> Self {
        Self {
            vertical_id: v.vertical_id.clone(),
            priority: v.priority,
            state: v.state,
            nsi_id: v.nsi_id.clone(),
            flavour: v.flavour.as_ref().map(FlavourReport::from),
            charge: ResourcesReport::from(&v.charge),
            unserved: v.unserved.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedInstanceReport {
    /// Per-service service rate.
    pub service_rates: BTreeMap<VsiId, String>,
    pub link_bandwidths: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsiReport {
    pub isolated: bool,
    pub vsi_ids: Vec<VsiId>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub shared_instances: BTreeMap<String, SharedInstanceReport>,
}

impl From<&NsiRecord> for NsiReport {
    fn from(n: &NsiRecord) -> Self {
        Self {
            isolated: n.isolated,
            vsi_ids: n.vsi_ids.iter().cloned().collect(),
            shared_instances: n
                .shared_vnf_instances
                .iter()
                .map(|(vnf, s)| {
                    (
                        vnf.to_string(),
                        SharedInstanceReport {
                            service_rates: s
                                .per_service_rates
                                .iter()
                                .map(|(id, r)| (id.clone(), cpu(r.service_rate)))
                                .collect(),
                            link_bandwidths: s
                                .link_bandwidths
                                .iter()
                                .map(|(l, b)| (l.to_string(), bandwidth(*b)))
                                .collect(),
                        },
                    )
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub total: ResourcesReport,
    pub remaining: ResourcesReport,
}

impl From<&ResourceBudget> for BudgetReport {
    fn from(b: &ResourceBudget) -> Self {
        Self {
            total: ResourcesReport::from(&b.total),
            remaining: ResourcesReport::from(&b.remaining),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementReport {
    pub point: PlacementPoint,
    pub reserved: ResourcesReport,
    pub elements: BTreeMap<ElementId, ResourcesReport>,
}

impl From<&Reservation> for PlacementReport {
    fn from(r: &Reservation) -> Self {
        Self {
            point: r.point,
            reserved: ResourcesReport::from(&r.amount),
            elements: r
                .elements
                .iter()
                .map(|(e, amount)| (e.clone(), ResourcesReport::from(amount)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolReport {
    pub capacity: ResourcesReport,
    pub free: ResourcesReport,
    pub placements: BTreeMap<VsiId, PlacementReport>,
}

impl From<&InfrastructurePool> for PoolReport {
    fn from(p: &InfrastructurePool) -> Self {
        Self {
            capacity: ResourcesReport::from(&p.config().capacity),
            free: ResourcesReport::from(&p.free()),
            placements: p
                .reservations()
                .iter()
                .map(|(id, r)| (id.clone(), PlacementReport::from(r)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub arbitration: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationReport {
    pub seed: u64,
    /// In arbitration order.
    pub outcomes: Vec<OutcomeReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terminations: Vec<TerminationReport>,
    pub vsis: BTreeMap<VsiId, VsiReport>,
    pub nsis: BTreeMap<NsiId, NsiReport>,
    pub budgets: BTreeMap<VerticalId, BudgetReport>,
    pub pool: PoolReport,
    pub conservation_residual: f64,
    /// Only present when timings were requested; it is the one field that
    /// differs between otherwise identical runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingReport>,
}

impl AllocationReport {
    pub fn build(
        engine: &Engine,
        seed: u64,
        outcomes: Vec<OutcomeReport>,
        terminations: Vec<TerminationReport>,
        arbitration_seconds: Option<f64>,
    ) -> Result<Self, ReportError> {
        let residual = engine.conservation_residual();
        if !(residual <= CONSERVATION_LIMIT) {
            return Err(ReportError::Conservation(residual));
        }
        Ok(Self {
            seed,
            outcomes,
            terminations,
            vsis: engine.vsis().iter().map(|(id, v)| (id.clone(), VsiReport::from(v))).collect(),
            nsis: engine.nsis().iter().map(|(id, n)| (id.clone(), NsiReport::from(n))).collect(),
            budgets: engine
                .budgets()
                .iter()
                .map(|(id, b)| (id.clone(), BudgetReport::from(b)))
                .collect(),
            pool: PoolReport::from(engine.orchestrator()),
            conservation_residual: residual,
            timing: arbitration_seconds.map(|s| TimingReport {
                arbitration: format_quantity(s, Dimension::Time),
            }),
        })
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use arbiter_core::units::parse_quantity;

    #[test]
    fn flavour_numbers_round_trip_exactly() {
        let f = DeploymentFlavour {
            cpu_min: 2840.8741234567891,
            cpu_max: 2907.9151,
            bandwidth_min: 0.0,
            bandwidth_max: 2.907915e9 + 0.123,
            memory: 1e9,
            storage: 0.0,
        };
        let r = FlavourReport::from(&f);
        assert_eq!(parse_quantity(&r.cpu[0], Dimension::PacketRate).unwrap(), f.cpu_min);
        assert_eq!(parse_quantity(&r.bandwidth[1], Dimension::Bandwidth).unwrap(), f.bandwidth_max);
        assert_eq!(r.memory, "1000000000 B");
    }

    #[test]
    fn empty_engine_reports_nothing() {
        let engine = Engine::new(
            InfrastructurePool::new(crate::scenario::default_pool()),
            Default::default(),
        );
        let report = AllocationReport::build(&engine, 7, Vec::new(), Vec::new(), None).unwrap();
        assert!(report.outcomes.is_empty() && report.vsis.is_empty());
        assert_eq!(report.conservation_residual, 0.0);
        assert!(!report.to_json().contains("timing"));
    }
}
