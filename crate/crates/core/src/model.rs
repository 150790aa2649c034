//! Domain types shared by the solver, the engine and the orchestrator.
//!
//! Everything here is a plain value type. The only logic is validation of the
//! invariants each type carries; quantities are stored in canonical units
//! (packets/s, bits/s, bits, bytes, seconds).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(id: &str) -> Self {
                Self(id.to_string())
            }
        }
    };
}

string_id!(
    /// Identifier of a VNF, unique inside a forwarding graph. Equal ids in
    /// different graphs denote the same shareable function.
    VnfId
);
string_id!(VsiId);
string_id!(VerticalId);
string_id!(NsiId);

/// A directed virtual link, written `source->target`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct LinkId {
    pub source: VnfId,
    pub target: VnfId,
}

impl LinkId {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            source: VnfId(source.into()),
            target: VnfId(target.into()),
        }
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.source, self.target)
    }
}

impl FromStr for LinkId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (source, target) = s
            .split_once("->")
            .ok_or_else(|| format!("link id `{s}` is not of the form source->target"))?;
        Ok(LinkId::new(source, target))
    }
}

impl From<LinkId> for String {
    fn from(id: LinkId) -> Self {
        id.to_string()
    }
}

impl TryFrom<String> for LinkId {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

/// A VNF or a virtual link, as named in placement failures.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ElementId {
    Vnf(VnfId),
    Link(LinkId),
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementId::Vnf(id) => write!(f, "vnf:{id}"),
            ElementId::Link(id) => write!(f, "vl:{id}"),
        }
    }
}

impl FromStr for ElementId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(id) = s.strip_prefix("vnf:") {
            Ok(ElementId::Vnf(VnfId::from(id)))
        } else if let Some(id) = s.strip_prefix("vl:") {
            Ok(ElementId::Link(id.parse()?))
        } else {
            Err(format!("element id `{s}` must start with vnf: or vl:"))
        }
    }
}

impl From<ElementId> for String {
    fn from(id: ElementId) -> Self {
        id.to_string()
    }
}

impl TryFrom<String> for ElementId {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

/// One amount per resource dimension.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Resources<T> {
    /// packets/s
    pub cpu: T,
    /// bits/s
    pub bandwidth: T,
    /// bytes
    pub memory: T,
    /// bytes
    pub storage: T,
}

impl<T: Scalar> Resources<T> {
    pub fn new(cpu: T, bandwidth: T, memory: T, storage: T) -> Self {
        Self {
            cpu,
            bandwidth,
            memory,
            storage,
        }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    pub fn map(self, f: impl Fn(T) -> T) -> Self {
        Self::new(f(self.cpu), f(self.bandwidth), f(self.memory), f(self.storage))
    }

    pub fn zip(self, other: Self, f: impl Fn(T, T) -> T) -> Self {
        Self::new(
            f(self.cpu, other.cpu),
            f(self.bandwidth, other.bandwidth),
            f(self.memory, other.memory),
            f(self.storage, other.storage),
        )
    }

    pub fn as_array(&self) -> [T; 4] {
        [self.cpu, self.bandwidth, self.memory, self.storage]
    }

    /// True when every dimension of `self` is at most the matching one of `other`.
    pub fn fits_within(&self, other: &Self) -> bool {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .all(|(a, b)| *a <= b)
    }

    /// Componentwise `max(self - other, 0)`.
    pub fn deficit(&self, other: &Self) -> Self {
        self.zip(*other, |a, b| (a - b).max(T::zero()))
    }
}

impl<T: Scalar> Add for Resources<T> {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        self.zip(rhs, |a, b| a + b)
    }
}

impl<T: Scalar> Sub for Resources<T> {
    type Output = Self;

    fn sub(self, rhs: Self) -> Self {
        self.zip(rhs, |a, b| a - b)
    }
}

impl<T: Scalar> std::iter::Sum for Resources<T> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |acc, r| acc + r)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BudgetError {
    #[error("budget total for {0} must be strictly positive and finite")]
    NonPositiveTotal(&'static str),
    #[error("{0} drawn exceeds the remaining budget")]
    Insufficient(&'static str),
    #[error("new budget total for {0} is below the amount already allocated")]
    BelowAllocated(&'static str),
}

const DIMENSION_NAMES: [&str; 4] = ["cpu", "bandwidth", "memory", "storage"];

/// A vertical's agreed (C, B, M, S) budget and the part not yet committed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceBudget<T> {
    pub total: Resources<T>,
    pub remaining: Resources<T>,
}

impl<T: Scalar> ResourceBudget<T> {
    pub fn new(total: Resources<T>) -> Result<Self, BudgetError> {
        for (value, name) in total.as_array().into_iter().zip(DIMENSION_NAMES) {
            if !(value > T::zero() && value.is_finite()) {
                return Err(BudgetError::NonPositiveTotal(name));
            }
        }
        Ok(Self {
            total,
            remaining: total,
        })
    }

    /// A budget of `total` of which `allocated` is already committed.
    pub fn with_allocated(total: Resources<T>, allocated: Resources<T>) -> Result<Self, BudgetError> {
        let mut budget = Self::new(total)?;
        budget.reconcile(allocated)?;
        Ok(budget)
    }

    pub fn allocated(&self) -> Resources<T> {
        self.total - self.remaining
    }

    /// Recomputes `remaining` as `total - allocated`. Rounding residue below
    /// 1e-12 of the total is clamped to zero.
    pub fn reconcile(&mut self, allocated: Resources<T>) -> Result<(), BudgetError> {
        let eps = T::lit(1e-12);
        let raw = self.total - allocated;
        let mut clamped = raw;
        let dims = [
            (&mut clamped.cpu, self.total.cpu),
            (&mut clamped.bandwidth, self.total.bandwidth),
            (&mut clamped.memory, self.total.memory),
            (&mut clamped.storage, self.total.storage),
        ];
        for ((value, total), name) in dims.into_iter().zip(DIMENSION_NAMES) {
            if *value < T::zero() {
                if *value >= -eps * total {
                    *value = T::zero();
                } else {
                    return Err(BudgetError::Insufficient(name));
                }
            }
        }
        self.remaining = clamped;
        Ok(())
    }

    pub fn try_deduct(&mut self, amount: &Resources<T>) -> Result<(), BudgetError> {
        let next = self.allocated() + *amount;
        self.reconcile(next)
    }

    pub fn credit(&mut self, amount: &Resources<T>) {
        let next = (self.allocated() - *amount).map(|v| v.max(T::zero()));
        self.remaining = self.total - next;
    }

    /// True when `0 <= remaining <= total` in every dimension.
    pub fn is_consistent(&self) -> bool {
        self.remaining
            .as_array()
            .iter()
            .zip(self.total.as_array())
            .all(|(r, t)| *r >= T::zero() && *r <= t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VnfSpec<T> {
    pub id: VnfId,
    /// Relative computational requirement, `0 < w <= 1`.
    pub compute_weight: T,
    /// requests/s entering this VNF.
    pub arrival_rate: T,
    pub memory_demand: T,
    pub storage_demand: T,
}

impl<T: Scalar> VnfSpec<T> {
    pub fn new(id: impl Into<String>, compute_weight: T, arrival_rate: T) -> Self {
        Self {
            id: VnfId(id.into()),
            compute_weight,
            arrival_rate,
            memory_demand: T::zero(),
            storage_demand: T::zero(),
        }
    }

    pub fn with_demands(mut self, memory: T, storage: T) -> Self {
        self.memory_demand = memory;
        self.storage_demand = storage;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualLinkSpec<T> {
    pub source: VnfId,
    pub target: VnfId,
    /// bits exchanged per request.
    pub data_volume: T,
    /// Fraction of the service bandwidth given to this link, `0 < w <= 1`.
    pub bandwidth_weight: T,
}

impl<T: Scalar> VirtualLinkSpec<T> {
    pub fn new(source: impl Into<String>, target: impl Into<String>, data_volume: T, bandwidth_weight: T) -> Self {
        Self {
            source: VnfId(source.into()),
            target: VnfId(target.into()),
            data_volume,
            bandwidth_weight,
        }
    }

    pub fn id(&self) -> LinkId {
        LinkId {
            source: self.source.clone(),
            target: self.target.clone(),
        }
    }
}

/// VNF forwarding graph of a service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vnffg<T> {
    pub vnfs: Vec<VnfSpec<T>>,
    pub links: Vec<VirtualLinkSpec<T>>,
}

impl<T: Scalar> Vnffg<T> {
    pub fn new(vnfs: Vec<VnfSpec<T>>, links: Vec<VirtualLinkSpec<T>>) -> Self {
        Self { vnfs, links }
    }

    pub fn validate(&self) -> Result<(), Vec<GraphViolation>> {
        validate_vnffg(self)
    }

    pub fn vnf(&self, id: &VnfId) -> Option<&VnfSpec<T>> {
        self.vnfs.iter().find(|v| &v.id == id)
    }

    pub fn vnf_ids(&self) -> BTreeSet<VnfId> {
        self.vnfs.iter().map(|v| v.id.clone()).collect()
    }

    pub fn memory_demand(&self) -> T {
        self.vnfs.iter().fold(T::zero(), |acc, v| acc + v.memory_demand)
    }

    pub fn storage_demand(&self) -> T {
        self.vnfs.iter().fold(T::zero(), |acc, v| acc + v.storage_demand)
    }

    /// True when some link moves a positive amount of data.
    pub fn needs_bandwidth(&self) -> bool {
        self.links.iter().any(|l| l.data_volume > T::zero())
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
pub enum GraphViolation {
    #[error("graph has no VNFs")]
    Empty,
    #[error("duplicate VNF id `{0}`")]
    DuplicateVnf(VnfId),
    #[error("VNF `{vnf}` has compute weight {weight} outside (0, 1]")]
    ComputeWeight { vnf: VnfId, weight: f64 },
    #[error("VNF `{vnf}` has negative or non-finite arrival rate {rate}")]
    ArrivalRate { vnf: VnfId, rate: f64 },
    #[error("VNF `{vnf}` has a negative or non-finite memory or storage demand")]
    Demand { vnf: VnfId },
    #[error("compute weights sum to {sum}, expected 1")]
    WeightSum { sum: f64 },
    #[error("link `{link}` references unknown VNF `{endpoint}`")]
    DanglingEndpoint { link: LinkId, endpoint: VnfId },
    #[error("link `{0}` connects a VNF to itself")]
    SelfLoop(LinkId),
    #[error("duplicate link `{0}`")]
    DuplicateLink(LinkId),
    #[error("link `{link}` has negative or non-finite data volume {volume}")]
    DataVolume { link: LinkId, volume: f64 },
    #[error("link `{link}` has bandwidth weight {weight} outside (0, 1]")]
    BandwidthWeight { link: LinkId, weight: f64 },
}

fn weight_sum_tolerance<T: Scalar>(count: usize) -> T {
    let floor = T::lit(1e-9);
    let scaled = T::epsilon() * T::lit(4.0 * count.max(1) as f64);
    floor.max(scaled)
}

/// Checks every structural and numeric invariant of a forwarding graph and
/// reports all violations found.
pub fn validate_vnffg<T: Scalar>(graph: &Vnffg<T>) -> Result<(), Vec<GraphViolation>> {
    let mut violations = Vec::new();
    if graph.vnfs.is_empty() {
        violations.push(GraphViolation::Empty);
    }

    let mut ids = BTreeSet::new();
    let mut weight_sum = T::zero();
    for vnf in &graph.vnfs {
        if !ids.insert(vnf.id.clone()) {
            violations.push(GraphViolation::DuplicateVnf(vnf.id.clone()));
        }
        let w = vnf.compute_weight;
        if !(w > T::zero() && w <= T::one()) {
            violations.push(GraphViolation::ComputeWeight {
                vnf: vnf.id.clone(),
                weight: w.as_f64(),
            });
        }
        if !(vnf.arrival_rate >= T::zero() && vnf.arrival_rate.is_finite()) {
            violations.push(GraphViolation::ArrivalRate {
                vnf: vnf.id.clone(),
                rate: vnf.arrival_rate.as_f64(),
            });
        }
        let demands_ok = [vnf.memory_demand, vnf.storage_demand]
            .iter()
            .all(|d| *d >= T::zero() && d.is_finite());
        if !demands_ok {
            violations.push(GraphViolation::Demand { vnf: vnf.id.clone() });
        }
        weight_sum = weight_sum + w;
    }
    if !graph.vnfs.is_empty()
        && !((weight_sum - T::one()).abs() <= weight_sum_tolerance::<T>(graph.vnfs.len()))
    {
        violations.push(GraphViolation::WeightSum {
            sum: weight_sum.as_f64(),
        });
    }

    let mut seen_links = BTreeSet::new();
    for link in &graph.links {
        let id = link.id();
        for endpoint in [&link.source, &link.target] {
            if !ids.contains(endpoint) {
                violations.push(GraphViolation::DanglingEndpoint {
                    link: id.clone(),
                    endpoint: endpoint.clone(),
                });
            }
        }
        if link.source == link.target {
            violations.push(GraphViolation::SelfLoop(id.clone()));
        }
        if !seen_links.insert(id.clone()) {
            violations.push(GraphViolation::DuplicateLink(id.clone()));
        }
        if !(link.data_volume >= T::zero() && link.data_volume.is_finite()) {
            violations.push(GraphViolation::DataVolume {
                link: id.clone(),
                volume: link.data_volume.as_f64(),
            });
        }
        let w = link.bandwidth_weight;
        if !(w > T::zero() && w <= T::one()) {
            violations.push(GraphViolation::BandwidthWeight {
                link: id,
                weight: w.as_f64(),
            });
        }
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Per-service objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slo<T> {
    /// seconds
    pub max_latency: T,
    /// requests/s
    pub max_request_rate: T,
    /// meters
    pub coverage_radius: T,
    /// bits/s
    pub min_data_rate: Option<T>,
    pub max_streams: Option<u32>,
}

impl<T: Scalar> Slo<T> {
    pub fn new(max_latency: T, max_request_rate: T) -> Self {
        Self {
            max_latency,
            max_request_rate,
            coverage_radius: T::zero(),
            min_data_rate: None,
            max_streams: None,
        }
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.max_latency > T::zero() && self.max_latency.is_finite()) {
            return Err("max latency must be positive");
        }
        if !(self.max_request_rate >= T::zero()) {
            return Err("max request rate must be non-negative");
        }
        Ok(())
    }
}

/// CPU and bandwidth ranges handed to the orchestrator, plus fixed memory
/// and storage. The low end is the colocated (best) case, the high end the
/// distributed (worst) case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeploymentFlavour<T> {
    pub cpu_min: T,
    pub cpu_max: T,
    pub bandwidth_min: T,
    pub bandwidth_max: T,
    pub memory: T,
    pub storage: T,
}

impl<T: Scalar> DeploymentFlavour<T> {
    /// What the budget is charged for this flavour.
    pub fn worst_case(&self) -> Resources<T> {
        Resources::new(self.cpu_max, self.bandwidth_max, self.memory, self.storage)
    }

    pub fn best_case(&self) -> Resources<T> {
        Resources::new(self.cpu_min, self.bandwidth_min, self.memory, self.storage)
    }

    pub fn is_well_formed(&self) -> bool {
        self.cpu_min <= self.cpu_max
            && self.bandwidth_min <= self.bandwidth_max
            && self.bandwidth_min == T::zero()
    }
}

/// Lifecycle of a vertical service instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VsiState {
    Requested,
    Arbitrated,
    Instantiating,
    Active,
    Degraded,
    Partial,
    Terminated,
}

impl VsiState {
    pub fn can_transition_to(self, next: VsiState) -> bool {
        use VsiState::*;
        matches!(
            (self, next),
            (Requested, Arbitrated)
                | (Arbitrated, Instantiating)
                | (Instantiating, Active | Degraded | Partial)
                | (Requested | Arbitrated | Instantiating, Terminated)
                | (Active | Degraded | Partial, Terminated)
        )
    }

    /// States in which the instance holds budget.
    pub fn is_running(self) -> bool {
        matches!(self, VsiState::Active | VsiState::Degraded | VsiState::Partial)
    }
}

impl fmt::Display for VsiState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            VsiState::Requested => "requested",
            VsiState::Arbitrated => "arbitrated",
            VsiState::Instantiating => "instantiating",
            VsiState::Active => "active",
            VsiState::Degraded => "degraded",
            VsiState::Partial => "partial",
            VsiState::Terminated => "terminated",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("illegal lifecycle transition {from} -> {to}")]
pub struct IllegalTransition {
    pub from: VsiState,
    pub to: VsiState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VsiRecord<T> {
    pub id: VsiId,
    pub vertical_id: VerticalId,
    /// Larger is more important.
    pub priority: i64,
    pub vnffg: Vnffg<T>,
    pub slo: Slo<T>,
    pub flavour: Option<DeploymentFlavour<T>>,
    pub state: VsiState,
    pub nsi_id: Option<NsiId>,
    pub isolation_required: bool,
    /// Amount currently deducted from the vertical's budget.
    pub charge: Resources<T>,
    /// Elements the orchestrator could not serve (partial deployments).
    pub unserved: Vec<ElementId>,
    pub history: Vec<VsiState>,
}

impl<T: Scalar> VsiRecord<T> {
    pub fn new(
        id: impl Into<String>,
        vertical_id: impl Into<String>,
        priority: i64,
        vnffg: Vnffg<T>,
        slo: Slo<T>,
    ) -> Self {
        Self {
            id: VsiId(id.into()),
            vertical_id: VerticalId(vertical_id.into()),
            priority,
            vnffg,
            slo,
            flavour: None,
            state: VsiState::Requested,
            nsi_id: None,
            isolation_required: false,
            charge: Resources::zero(),
            unserved: Vec::new(),
            history: vec![VsiState::Requested],
        }
    }

    pub fn isolated(mut self, isolation_required: bool) -> Self {
        self.isolation_required = isolation_required;
        self
    }

    pub fn transition(&mut self, next: VsiState) -> Result<(), IllegalTransition> {
        if !self.state.can_transition_to(next) {
            return Err(IllegalTransition {
                from: self.state,
                to: next,
            });
        }
        self.state = next;
        self.history.push(next);
        Ok(())
    }
}

/// Rates one service contributes to a shared VNF instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceRates<T> {
    /// packets/s granted to the service on this instance.
    pub service_rate: T,
    /// requests/s the service sends through this instance.
    pub arrival_rate: T,
}

/// Allocation state of one VNF instance inside an NSI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedVnfState<T> {
    pub vnf_id: VnfId,
    /// Keyed by service; the key set is the sharing set of this instance.
    pub per_service_rates: BTreeMap<VsiId, ServiceRates<T>>,
    /// Aggregate bandwidth of the links leaving this instance.
    pub link_bandwidths: BTreeMap<LinkId, T>,
}

impl<T: Scalar> SharedVnfState<T> {
    pub fn new(vnf_id: VnfId) -> Self {
        Self {
            vnf_id,
            per_service_rates: BTreeMap::new(),
            link_bandwidths: BTreeMap::new(),
        }
    }

    /// `Σ_s (μ_v^s − λ_v^s)`.
    pub fn aggregate_surplus(&self) -> T {
        self.per_service_rates
            .values()
            .fold(T::zero(), |acc, r| acc + r.service_rate - r.arrival_rate)
    }

    pub fn total_service_rate(&self) -> T {
        self.per_service_rates
            .values()
            .fold(T::zero(), |acc, r| acc + r.service_rate)
    }

    pub fn total_link_bandwidth(&self) -> T {
        self.link_bandwidths.values().fold(T::zero(), |acc, b| acc + *b)
    }

    /// Every service sees a stable queue: `μ_v^s > λ_v^s`.
    pub fn is_stable(&self) -> bool {
        self.per_service_rates
            .values()
            .all(|r| r.service_rate > r.arrival_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsiRecord<T> {
    pub id: NsiId,
    pub vsi_ids: BTreeSet<VsiId>,
    pub shared_vnf_instances: BTreeMap<VnfId, SharedVnfState<T>>,
    pub isolated: bool,
}

impl<T: Scalar> NsiRecord<T> {
    pub fn new(id: NsiId, isolated: bool) -> Self {
        Self {
            id,
            vsi_ids: BTreeSet::new(),
            shared_vnf_instances: BTreeMap::new(),
            isolated,
        }
    }

    pub fn is_consistent(&self) -> bool {
        !self.isolated || self.vsi_ids.len() <= 1
    }

    pub fn total_cpu(&self) -> T {
        self.shared_vnf_instances
            .values()
            .fold(T::zero(), |acc, s| acc + s.total_service_rate())
    }

    pub fn total_bandwidth(&self) -> T {
        self.shared_vnf_instances
            .values()
            .fold(T::zero(), |acc, s| acc + s.total_link_bandwidth())
    }
}

/// Verticals that share one priority value, in selection order `I_v`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorityClass {
    pub priority: i64,
    pub vertical_ids: Vec<VerticalId>,
}

impl PriorityClass {
    /// Probability of any one member being picked next, `1 / |I_v|`.
    pub fn selection_probability(&self) -> f64 {
        if self.vertical_ids.is_empty() {
            0.0
        } else {
            1.0 / self.vertical_ids.len() as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ica_like() -> Vnffg<f64> {
        Vnffg::new(
            vec![
                VnfSpec::new("database", 0.05, 60.0),
                VnfSpec::new("frontend", 0.05, 60.0),
                VnfSpec::new("collision-detector", 0.9, 60.0),
            ],
            vec![
                VirtualLinkSpec::new("frontend", "collision-detector", 1e5, 0.5),
                VirtualLinkSpec::new("collision-detector", "database", 1e5, 0.5),
            ],
        )
    }

    #[test]
    fn three_vnf_partition_is_valid() {
        assert_eq!(validate_vnffg(&ica_like()), Ok(()));
    }

    #[test]
    fn single_node_graph_is_valid() {
        let g = Vnffg::new(vec![VnfSpec::new("only", 1.0, 0.0)], vec![]);
        assert_eq!(validate_vnffg(&g), Ok(()));
    }

    #[test]
    fn weight_sum_off_by_point_one_is_reported() {
        let g = Vnffg::new(
            vec![VnfSpec::new("a", 0.5, 0.0), VnfSpec::new("b", 0.6, 0.0)],
            vec![],
        );
        let errs = validate_vnffg(&g).unwrap_err();
        assert_eq!(errs.len(), 1);
        match &errs[0] {
            GraphViolation::WeightSum { sum } => assert!((sum - 1.1).abs() < 1e-12),
            other => panic!("unexpected violation {other:?}"),
        }
    }

    #[test]
    fn dangling_and_self_links_are_reported() {
        let mut g = ica_like();
        g.links.push(VirtualLinkSpec::new("frontend", "ghost", 1.0, 0.5));
        g.links.push(VirtualLinkSpec::new("database", "database", 1.0, 0.5));
        let errs = validate_vnffg(&g).unwrap_err();
        assert!(errs.contains(&GraphViolation::DanglingEndpoint {
            link: LinkId::new("frontend", "ghost"),
            endpoint: VnfId::from("ghost"),
        }));
        assert!(errs.contains(&GraphViolation::SelfLoop(LinkId::new("database", "database"))));
    }

    #[test]
    fn empty_graph_is_reported() {
        let g: Vnffg<f64> = Vnffg::new(vec![], vec![]);
        assert_eq!(validate_vnffg(&g), Err(vec![GraphViolation::Empty]));
    }

    #[test]
    fn f32_graphs_validate_with_scaled_tolerance() {
        let g: Vnffg<f32> = Vnffg::new(
            vec![
                VnfSpec::new("a", 0.05, 1.0),
                VnfSpec::new("b", 0.05, 1.0),
                VnfSpec::new("c", 0.9, 1.0),
            ],
            vec![],
        );
        assert_eq!(validate_vnffg(&g), Ok(()));
    }

    #[test]
    fn budget_rejects_zero_totals_and_overdraw() {
        assert_eq!(
            ResourceBudget::new(Resources::new(1.0, 0.0, 1.0, 1.0)),
            Err(BudgetError::NonPositiveTotal("bandwidth"))
        );
        let mut budget = ResourceBudget::new(Resources::new(10.0, 10.0, 10.0, 10.0)).unwrap();
        budget.try_deduct(&Resources::new(4.0, 1.0, 0.0, 0.0)).unwrap();
        assert_eq!(budget.remaining.cpu, 6.0);
        assert_eq!(
            budget.try_deduct(&Resources::new(7.0, 0.0, 0.0, 0.0)),
            Err(BudgetError::Insufficient("cpu"))
        );
        budget.credit(&Resources::new(4.0, 1.0, 0.0, 0.0));
        assert_eq!(budget.remaining, budget.total);
        assert!(budget.is_consistent());
    }

    #[test]
    fn lifecycle_forbids_skipping_to_active() {
        let mut vsi = VsiRecord::new("s", "v", 1, ica_like(), Slo::new(0.02, 60.0));
        assert!(vsi.transition(VsiState::Active).is_err());
        vsi.transition(VsiState::Arbitrated).unwrap();
        vsi.transition(VsiState::Instantiating).unwrap();
        vsi.transition(VsiState::Active).unwrap();
        vsi.transition(VsiState::Terminated).unwrap();
        assert!(vsi.transition(VsiState::Requested).is_err());
        assert_eq!(
            vsi.history,
            vec![
                VsiState::Requested,
                VsiState::Arbitrated,
                VsiState::Instantiating,
                VsiState::Active,
                VsiState::Terminated
            ]
        );
    }

    #[test]
    fn element_ids_round_trip_through_strings() {
        for id in [
            ElementId::Vnf(VnfId::from("cache")),
            ElementId::Link(LinkId::new("a", "b")),
        ] {
            let text = id.to_string();
            assert_eq!(text.parse::<ElementId>().unwrap(), id);
        }
        assert!("x:a".parse::<ElementId>().is_err());
    }
}
