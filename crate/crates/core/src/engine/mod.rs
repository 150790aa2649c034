//! Arbitration engine: budgets, lifecycle, slice mapping and the policies
//! applied when a request does not fit.

use std::cmp::Reverse;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BudgetError, ElementId, GraphViolation, IllegalTransition, NsiId, VerticalId, VnfId, VsiId, VsiState};
use crate::orchestrator::{Directive, Event, InfrastructurePool, Orchestrator};
use crate::solver::{
    build_flavour, instances_for_isolated, resolve_after_departure, solve_shared, AllocationError,
    InfeasibleReason, ShareMember, SharedAllocation, Tolerance,
};
use crate::{DeploymentFlavour, NsiRecord, ResourceBudget, Resources, SharedVnfState, VsiRecord};

pub mod journal;
pub mod mapping;
pub mod ordering;

pub use journal::{Journal, JournalEntry, JournalEvent};
pub use mapping::{map_to_nsi, NsiMapping};
pub use ordering::{order_verticals, priority_classes};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub tolerance: Tolerance<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "budget")]
pub enum BudgetShortfallPolicy {
    Cancel,
    /// Replace the vertical's total with this one and retry once.
    IncreaseBudget(Resources),
    /// Shrink or terminate lower-priority services of the same vertical.
    Force,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementFailurePolicy {
    Undo,
    DeployDegraded,
    DeployPartial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationRequest {
    pub vsi: VsiRecord,
    pub on_budget_shortfall: BudgetShortfallPolicy,
    pub on_placement_failure: PlacementFailurePolicy,
}

impl ArbitrationRequest {
    pub fn new(vsi: VsiRecord) -> Self {
        Self {
            vsi,
            on_budget_shortfall: BudgetShortfallPolicy::Cancel,
            on_placement_failure: PlacementFailurePolicy::Undo,
        }
    }

    pub fn on_shortfall(mut self, policy: BudgetShortfallPolicy) -> Self {
        self.on_budget_shortfall = policy;
        self
    }

    pub fn on_placement_failure(mut self, policy: PlacementFailurePolicy) -> Self {
        self.on_placement_failure = policy;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShortfallImpossible {
    #[error("no lower-priority service of the vertical is running")]
    NoLowerPriority,
    #[error("terminating every lower-priority service does not free enough")]
    StillInsufficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RejectReason {
    DuplicateVsi,
    Infeasible { reason: InfeasibleReason },
    BudgetBelowAllocated,
    ShortfallUnresolvable { cause: ShortfallImpossible },
    PlacementFailed { elements: Vec<ElementId> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "decision")]
pub enum Decision {
    Deployed {
        nsi_id: NsiId,
        flavour: DeploymentFlavour,
        shared: bool,
    },
    Degraded {
        nsi_id: NsiId,
        flavour: DeploymentFlavour,
        failed: Vec<ElementId>,
    },
    Partial {
        nsi_id: NsiId,
        flavour: DeploymentFlavour,
        unserved: Vec<ElementId>,
    },
    Rejected {
        reason: RejectReason,
    },
    Cancelled {
        reason: InfeasibleReason,
    },
}

impl Decision {
    pub fn label(&self) -> &'static str {
        match self {
            Decision::Deployed { .. } => "deployed",
            Decision::Degraded { .. } => "degraded",
            Decision::Partial { .. } => "partial",
            Decision::Rejected { .. } => "rejected",
            Decision::Cancelled { .. } => "cancelled",
        }
    }

    pub fn flavour(&self) -> Option<&DeploymentFlavour> {
        match self {
            Decision::Deployed { flavour, .. }
            | Decision::Degraded { flavour, .. }
            | Decision::Partial { flavour, .. } => Some(flavour),
            _ => None,
        }
    }
}

/// A running service changed by someone else's arbitration. `current` is
/// `None` when it was terminated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Displacement {
    pub vsi_id: VsiId,
    pub previous: Option<DeploymentFlavour>,
    pub current: Option<DeploymentFlavour>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationOutcome {
    pub vsi_id: VsiId,
    pub decision: Decision,
    pub displaced_vsis: Vec<Displacement>,
    /// Services of a shared slice whose per-instance rates changed.
    pub rescaled_vsis: Vec<VsiId>,
}

impl ArbitrationOutcome {
    fn new(vsi_id: VsiId, decision: Decision) -> Self {
        Self {
            vsi_id,
            decision,
            displaced_vsis: Vec::new(),
            rescaled_vsis: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ShortfallPlan {
    pub shrink: Vec<(VsiId, DeploymentFlavour)>,
    pub terminate: Vec<VsiId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminationOutcome {
    pub vsi_id: VsiId,
    pub rescaled_vsis: Vec<VsiId>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("unknown vertical `{0}`")]
    UnknownVertical(VerticalId),
    #[error("vertical `{0}` is already registered")]
    DuplicateVertical(VerticalId),
    #[error("unknown VSI `{0}`")]
    UnknownVsi(VsiId),
    #[error("invalid VNF forwarding graph: {0:?}")]
    InvalidGraph(Vec<GraphViolation>),
    #[error("invalid SLO: {0}")]
    InvalidSlo(&'static str),
    #[error("VSI `{0}` is not in the requested state")]
    NotRequested(VsiId),
    #[error("VSI `{0}` is not running")]
    NotRunning(VsiId),
    #[error("VSI `{0}` is not being instantiated")]
    NotInFlight(VsiId),
    #[error("VSI `{0}` is not active")]
    NotActive(VsiId),
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error(transparent)]
    Transition(#[from] IllegalTransition),
    #[error(transparent)]
    Solver(#[from] AllocationError),
}

#[derive(Debug, Clone, PartialEq)]
struct JoinPlan {
    nsi_id: NsiId,
    allocation: SharedAllocation<f64>,
    charge: Resources,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Engine<O = InfrastructurePool> {
    config: EngineConfig,
    budgets: BTreeMap<VerticalId, ResourceBudget>,
    vsis: BTreeMap<VsiId, VsiRecord>,
    nsis: BTreeMap<NsiId, NsiRecord>,
    next_nsi: u64,
    journal: Journal,
    orchestrator: O,
    /// Instance states of a shared NSI before an in-flight join.
    #[serde(skip)]
    rollback: BTreeMap<VsiId, BTreeMap<VnfId, SharedVnfState>>,
}

/// `(C, B)` of the ratio constraint: what the vertical has left, or its
/// total where nothing is left.
fn ratio_of(remaining: &Resources, total: &Resources) -> (f64, f64) {
    let cpu = if remaining.cpu > 0.0 { remaining.cpu } else { total.cpu };
    let bandwidth = if remaining.bandwidth > 0.0 {
        remaining.bandwidth
    } else {
        total.bandwidth
    };
    (cpu, bandwidth)
}

fn infeasible(err: AllocationError) -> Result<InfeasibleReason, EngineError> {
    match err {
        AllocationError::Infeasible(reason) => Ok(reason),
        other => Err(EngineError::Solver(other)),
    }
}

fn rates_of(states: &BTreeMap<VnfId, SharedVnfState>, vsi_id: &VsiId) -> BTreeMap<VnfId, f64> {
    states
        .iter()
        .filter_map(|(vnf, s)| s.per_service_rates.get(vsi_id).map(|r| (vnf.clone(), r.service_rate)))
        .collect()
}

impl<O: Orchestrator> Engine<O> {
    pub fn new(orchestrator: O, config: EngineConfig) -> Self {
        Self {
            config,
            budgets: BTreeMap::new(),
            vsis: BTreeMap::new(),
            nsis: BTreeMap::new(),
            next_nsi: 0,
            journal: Journal::default(),
            orchestrator,
            rollback: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn budget(&self, vertical_id: &VerticalId) -> Option<&ResourceBudget> {
        self.budgets.get(vertical_id)
    }

    pub fn budgets(&self) -> &BTreeMap<VerticalId, ResourceBudget> {
        &self.budgets
    }

    pub fn vsi(&self, vsi_id: &VsiId) -> Option<&VsiRecord> {
        self.vsis.get(vsi_id)
    }

    pub fn vsis(&self) -> &BTreeMap<VsiId, VsiRecord> {
        &self.vsis
    }

    pub fn nsi(&self, nsi_id: &NsiId) -> Option<&NsiRecord> {
        self.nsis.get(nsi_id)
    }

    pub fn nsis(&self) -> &BTreeMap<NsiId, NsiRecord> {
        &self.nsis
    }

    pub fn journal(&self) -> &Journal {
        &self.journal
    }

    pub fn orchestrator(&self) -> &O {
        &self.orchestrator
    }

    pub fn orchestrator_mut(&mut self) -> &mut O {
        &mut self.orchestrator
    }

    pub fn register_vertical(
        &mut self,
        vertical_id: VerticalId,
        total: Resources,
    ) -> Result<(), EngineError> {
        if self.budgets.contains_key(&vertical_id) {
            return Err(EngineError::DuplicateVertical(vertical_id));
        }
        let budget = ResourceBudget::new(total)?;
        self.journal.push(JournalEvent::VerticalRegistered {
            vertical_id: vertical_id.clone(),
            total,
        });
        self.budgets.insert(vertical_id, budget);
        Ok(())
    }

    /// Replaces a vertical's total. All or nothing: the new total must cover
    /// what is already allocated.
    pub fn increase_budget(
        &mut self,
        vertical_id: &VerticalId,
        total: Resources,
    ) -> Result<(), EngineError> {
        let allocated = self.allocated(vertical_id)?;
        let budget = ResourceBudget::with_allocated(total, allocated).map_err(|err| match err {
            BudgetError::Insufficient(dim) => BudgetError::BelowAllocated(dim),
            other => other,
        })?;
        self.budgets.insert(vertical_id.clone(), budget);
        self.journal.push(JournalEvent::BudgetChanged {
            vertical_id: vertical_id.clone(),
            total,
        });
        Ok(())
    }

    fn allocated(&self, vertical_id: &VerticalId) -> Result<Resources, EngineError> {
        if !self.budgets.contains_key(vertical_id) {
            return Err(EngineError::UnknownVertical(vertical_id.clone()));
        }
        Ok(self
            .vsis
            .values()
            .filter(|v| &v.vertical_id == vertical_id)
            .map(|v| v.charge)
            .sum())
    }

    fn refresh_budget(&mut self, vertical_id: &VerticalId) -> Result<(), EngineError> {
        let allocated = self.allocated(vertical_id)?;
        let budget = self.budgets.get_mut(vertical_id).expect("checked by allocated");
        budget.reconcile(allocated)?;
        Ok(())
    }

    fn set_charge(&mut self, vsi_id: &VsiId, charge: Resources) -> Result<(), EngineError> {
        let vsi = self.record_mut(vsi_id)?;
        vsi.charge = charge;
        let vertical = vsi.vertical_id.clone();
        self.refresh_budget(&vertical)
    }

    fn record_mut(&mut self, vsi_id: &VsiId) -> Result<&mut VsiRecord, EngineError> {
        self.vsis
            .get_mut(vsi_id)
            .ok_or_else(|| EngineError::UnknownVsi(vsi_id.clone()))
    }

    fn record(&self, vsi_id: &VsiId) -> Result<&VsiRecord, EngineError> {
        self.vsis
            .get(vsi_id)
            .ok_or_else(|| EngineError::UnknownVsi(vsi_id.clone()))
    }

    fn transition(&mut self, vsi_id: &VsiId, next: VsiState) -> Result<(), EngineError> {
        let vsi = self.record_mut(vsi_id)?;
        let from = vsi.state;
        vsi.transition(next)?;
        self.journal.push(JournalEvent::Transition {
            vsi_id: vsi_id.clone(),
            from,
            to: next,
        });
        Ok(())
    }

    fn set_flavour(&mut self, vsi_id: &VsiId, flavour: DeploymentFlavour) -> Result<(), EngineError> {
        self.record_mut(vsi_id)?.flavour = Some(flavour);
        self.journal.push(JournalEvent::FlavourChanged {
            vsi_id: vsi_id.clone(),
            flavour,
        });
        Ok(())
    }

    fn flavour_within(&self, vsi: &VsiRecord, remaining: &Resources, total: &Resources) -> Result<DeploymentFlavour, AllocationError> {
        build_flavour(
            &vsi.vnffg,
            &vsi.slo,
            remaining,
            ratio_of(remaining, total),
            &self.config.tolerance,
        )
    }

    fn isolated_flavour(&self, vsi_id: &VsiId) -> Result<DeploymentFlavour, AllocationError> {
        let vsi = &self.vsis[vsi_id];
        let budget = &self.budgets[&vsi.vertical_id];
        self.flavour_within(vsi, &budget.remaining, &budget.total)
    }

    fn reject(
        &mut self,
        vsi_id: &VsiId,
        reason: RejectReason,
        displaced: Vec<Displacement>,
    ) -> Result<ArbitrationOutcome, EngineError> {
        self.transition(vsi_id, VsiState::Terminated)?;
        let mut outcome = ArbitrationOutcome::new(vsi_id.clone(), Decision::Rejected { reason });
        outcome.displaced_vsis = displaced;
        Ok(outcome)
    }

    /// Runs one request through mapping, dimensioning, the shortfall policy
    /// and placement.
    pub fn arbitrate(&mut self, request: ArbitrationRequest) -> Result<ArbitrationOutcome, EngineError> {
        let ArbitrationRequest {
            mut vsi,
            on_budget_shortfall,
            on_placement_failure,
        } = request;
        if self.vsis.contains_key(&vsi.id) {
            return Ok(ArbitrationOutcome::new(
                vsi.id,
                Decision::Rejected {
                    reason: RejectReason::DuplicateVsi,
                },
            ));
        }
        if !self.budgets.contains_key(&vsi.vertical_id) {
            return Err(EngineError::UnknownVertical(vsi.vertical_id));
        }
        if vsi.state != VsiState::Requested {
            return Err(EngineError::NotRequested(vsi.id));
        }
        vsi.vnffg.validate().map_err(EngineError::InvalidGraph)?;
        vsi.slo.validate().map_err(EngineError::InvalidSlo)?;
        vsi.flavour = None;
        vsi.nsi_id = None;
        vsi.charge = Resources::zero();
        vsi.unserved.clear();
        vsi.history = vec![VsiState::Requested];
        let id = vsi.id.clone();
        self.journal.push(JournalEvent::VsiRequested {
            vsi_id: id.clone(),
            vertical_id: vsi.vertical_id.clone(),
        });
        self.vsis.insert(id.clone(), vsi);

        if let NsiMapping::ShareWith { nsi_id, .. } = map_to_nsi(&self.vsis[&id], self.nsis.values()) {
            if let Some(plan) = self.plan_join(&id, &nsi_id) {
                return self.commit_join(&id, plan, on_placement_failure);
            }
        }

        let mut displaced = Vec::new();
        let flavour = match self.isolated_flavour(&id) {
            Ok(flavour) => flavour,
            Err(err) => {
                let reason = infeasible(err)?;
                match on_budget_shortfall {
                    BudgetShortfallPolicy::Cancel => {
                        self.transition(&id, VsiState::Terminated)?;
                        return Ok(ArbitrationOutcome::new(id, Decision::Cancelled { reason }));
                    }
                    BudgetShortfallPolicy::IncreaseBudget(total) => {
                        let vertical = self.vsis[&id].vertical_id.clone();
                        match self.increase_budget(&vertical, total) {
                            Ok(()) => {}
                            Err(EngineError::Budget(_)) => {
                                return self.reject(&id, RejectReason::BudgetBelowAllocated, displaced)
                            }
                            Err(other) => return Err(other),
                        }
                        match self.isolated_flavour(&id) {
                            Ok(flavour) => flavour,
                            Err(err) => {
                                let reason = infeasible(err)?;
                                return self.reject(&id, RejectReason::Infeasible { reason }, displaced);
                            }
                        }
                    }
                    BudgetShortfallPolicy::Force => {
                        let vsi = self.vsis[&id].clone();
                        let plan = match self.reassign_for_shortfall(&vsi) {
                            Ok(plan) => plan,
                            Err(cause) => {
                                return self.reject(
                                    &id,
                                    RejectReason::ShortfallUnresolvable { cause },
                                    displaced,
                                )
                            }
                        };
                        displaced = self.apply_plan(plan)?;
                        match self.isolated_flavour(&id) {
                            Ok(flavour) => flavour,
                            Err(err) => {
                                let reason = infeasible(err)?;
                                return self.reject(&id, RejectReason::Infeasible { reason }, displaced);
                            }
                        }
                    }
                }
            }
        };
        self.commit_isolated(&id, flavour)?;
        let mut outcome = self.instantiate(&id, on_placement_failure)?;
        outcome.displaced_vsis = displaced;
        Ok(outcome)
    }

    /// Arbitrates several requests in vertical order (see [`order_verticals`]);
    /// within a vertical, higher-priority requests go first, then submission
    /// order.
    pub fn arbitrate_batch(
        &mut self,
        requests: Vec<ArbitrationRequest>,
        seed: u64,
    ) -> Vec<(VsiId, Result<ArbitrationOutcome, EngineError>)> {
        let pending: Vec<(VerticalId, i64)> = requests
            .iter()
            .map(|r| (r.vsi.vertical_id.clone(), r.vsi.priority))
            .collect();
        let order = order_verticals(&pending, seed);
        let mut grouped: BTreeMap<VerticalId, Vec<(usize, ArbitrationRequest)>> = BTreeMap::new();
        for (index, request) in requests.into_iter().enumerate() {
            grouped
                .entry(request.vsi.vertical_id.clone())
                .or_default()
                .push((index, request));
        }
        let mut results = Vec::new();
        for vertical in order {
            let mut batch = grouped.remove(&vertical).unwrap_or_default();
            batch.sort_by_key(|(index, r)| (Reverse(r.vsi.priority), *index));
            for (_, request) in batch {
                let id = request.vsi.id.clone();
                results.push((id, self.arbitrate(request)));
            }
        }
        results
    }

    fn plan_join(&self, vsi_id: &VsiId, nsi_id: &NsiId) -> Option<JoinPlan> {
        let vsi = &self.vsis[vsi_id];
        let nsi = self.nsis.get(nsi_id)?;
        let budget = &self.budgets[&vsi.vertical_id];
        let members: Vec<ShareMember<'_, f64>> = nsi
            .vsi_ids
            .iter()
            .filter_map(|m| self.vsis.get(m))
            .map(|r| ShareMember {
                id: &r.id,
                graph: &r.vnffg,
                max_latency: r.slo.max_latency,
            })
            .collect();
        let joining = ShareMember {
            id: &vsi.id,
            graph: &vsi.vnffg,
            max_latency: vsi.slo.max_latency,
        };
        let allocation = solve_shared(
            &nsi.shared_vnf_instances,
            &members,
            &joining,
            ratio_of(&budget.remaining, &budget.total),
            budget.remaining.bandwidth,
            budget.remaining.cpu,
        )
        .ok()?;
        let fresh = vsi
            .vnffg
            .vnfs
            .iter()
            .filter(|v| !nsi.shared_vnf_instances.contains_key(&v.id));
        let (memory, storage) = fresh.fold((0.0, 0.0), |(m, s), v| (m + v.memory_demand, s + v.storage_demand));
        let charge = Resources::new(
            allocation.cpu_increase.max(0.0),
            allocation.bandwidth_increase.max(0.0),
            memory,
            storage,
        );
        if !charge.fits_within(&budget.remaining) {
            return None;
        }
        Some(JoinPlan {
            nsi_id: nsi_id.clone(),
            allocation,
            charge,
        })
    }

    fn commit_join(
        &mut self,
        vsi_id: &VsiId,
        plan: JoinPlan,
        on_failure: PlacementFailurePolicy,
    ) -> Result<ArbitrationOutcome, EngineError> {
        let JoinPlan {
            nsi_id,
            allocation,
            charge,
        } = plan;
        let nsi = self.nsis.get_mut(&nsi_id).expect("planned against this NSI");
        let before = std::mem::replace(&mut nsi.shared_vnf_instances, allocation.states);
        nsi.vsi_ids.insert(vsi_id.clone());
        self.rollback.insert(vsi_id.clone(), before.clone());
        self.journal.push(JournalEvent::NsiJoined {
            nsi_id: nsi_id.clone(),
            vsi_id: vsi_id.clone(),
        });
        self.record_mut(vsi_id)?.nsi_id = Some(nsi_id.clone());
        self.set_flavour(
            vsi_id,
            DeploymentFlavour {
                cpu_min: charge.cpu,
                cpu_max: charge.cpu,
                bandwidth_min: 0.0,
                bandwidth_max: charge.bandwidth,
                memory: charge.memory,
                storage: charge.storage,
            },
        )?;
        self.set_charge(vsi_id, charge)?;
        self.transition(vsi_id, VsiState::Arbitrated)?;
        let mut outcome = self.instantiate(vsi_id, on_failure)?;
        self.rollback.remove(vsi_id);
        if self.vsis[vsi_id].state.is_running() {
            outcome.rescaled_vsis = self.notify_rescaled(&nsi_id, &before, vsi_id);
        }
        Ok(outcome)
    }

    /// Sends rate updates to members of `nsi_id` whose per-instance rates
    /// differ from `before`.
    fn notify_rescaled(
        &mut self,
        nsi_id: &NsiId,
        before: &BTreeMap<VnfId, SharedVnfState>,
        skip: &VsiId,
    ) -> Vec<VsiId> {
        let Some(nsi) = self.nsis.get(nsi_id) else {
            return Vec::new();
        };
        let mut changed = Vec::new();
        for member in nsi.vsi_ids.iter().filter(|m| *m != skip) {
            let now = rates_of(&nsi.shared_vnf_instances, member);
            if now != rates_of(before, member) {
                changed.push((member.clone(), now));
            }
        }
        let mut rescaled = Vec::new();
        for (member, rates) in changed {
            if self.vsis.get(&member).map(|v| v.state) == Some(VsiState::Active) {
                self.orchestrator.handle(Directive::Scale {
                    vsi_id: member.clone(),
                    flavour: None,
                    rates,
                });
            }
            rescaled.push(member);
        }
        rescaled
    }

    fn commit_isolated(&mut self, vsi_id: &VsiId, flavour: DeploymentFlavour) -> Result<(), EngineError> {
        let nsi_id = NsiId::new(format!("nsi-{}", self.next_nsi));
        self.next_nsi += 1;
        let vsi = &self.vsis[vsi_id];
        let mut nsi = NsiRecord::new(nsi_id.clone(), vsi.isolation_required);
        nsi.vsi_ids.insert(vsi_id.clone());
        nsi.shared_vnf_instances = instances_for_isolated(vsi_id, &vsi.vnffg, &flavour);
        self.nsis.insert(nsi_id.clone(), nsi);
        self.journal.push(JournalEvent::NsiCreated {
            nsi_id: nsi_id.clone(),
        });
        self.journal.push(JournalEvent::NsiJoined {
            nsi_id: nsi_id.clone(),
            vsi_id: vsi_id.clone(),
        });
        self.record_mut(vsi_id)?.nsi_id = Some(nsi_id);
        self.set_flavour(vsi_id, flavour)?;
        self.set_charge(vsi_id, flavour.worst_case())?;
        self.transition(vsi_id, VsiState::Arbitrated)
    }

    fn instantiate(
        &mut self,
        vsi_id: &VsiId,
        on_failure: PlacementFailurePolicy,
    ) -> Result<ArbitrationOutcome, EngineError> {
        self.transition(vsi_id, VsiState::Instantiating)?;
        let vsi = &self.vsis[vsi_id];
        let flavour = vsi.flavour.expect("arbitrated VSIs carry a flavour");
        let directive = Directive::Place {
            vsi_id: vsi_id.clone(),
            flavour,
            graph: vsi.vnffg.clone(),
        };
        match self.orchestrator.handle(directive) {
            Event::Placed(_) => {
                self.transition(vsi_id, VsiState::Active)?;
                let nsi_id = self.vsis[vsi_id].nsi_id.clone().expect("arbitrated VSIs have an NSI");
                let shared = self.nsis[&nsi_id].vsi_ids.len() > 1;
                Ok(ArbitrationOutcome::new(
                    vsi_id.clone(),
                    Decision::Deployed {
                        nsi_id,
                        flavour,
                        shared,
                    },
                ))
            }
            Event::Failed { elements, .. } => self.handle_placement_failure(vsi_id, elements, on_failure),
            _ => self.handle_placement_failure(vsi_id, Vec::new(), on_failure),
        }
    }

    /// Applies the placement-failure policy to a VSI being instantiated.
    pub fn handle_placement_failure(
        &mut self,
        vsi_id: &VsiId,
        failed: Vec<ElementId>,
        policy: PlacementFailurePolicy,
    ) -> Result<ArbitrationOutcome, EngineError> {
        let vsi = self.record(vsi_id)?;
        if vsi.state != VsiState::Instantiating {
            return Err(EngineError::NotInFlight(vsi_id.clone()));
        }
        let nsi_id = vsi.nsi_id.clone().expect("arbitrated VSIs have an NSI");
        let flavour = vsi.flavour.expect("arbitrated VSIs carry a flavour");
        match policy {
            PlacementFailurePolicy::Undo => {
                self.detach_in_flight(vsi_id, &nsi_id);
                self.record_mut(vsi_id)?.nsi_id = None;
                self.set_charge(vsi_id, Resources::zero())?;
                self.reject(
                    vsi_id,
                    RejectReason::PlacementFailed { elements: failed },
                    Vec::new(),
                )
            }
            PlacementFailurePolicy::DeployDegraded => {
                self.transition(vsi_id, VsiState::Degraded)?;
                Ok(ArbitrationOutcome::new(
                    vsi_id.clone(),
                    Decision::Degraded {
                        nsi_id,
                        flavour,
                        failed,
                    },
                ))
            }
            PlacementFailurePolicy::DeployPartial => {
                self.record_mut(vsi_id)?.unserved = failed.clone();
                self.transition(vsi_id, VsiState::Partial)?;
                Ok(ArbitrationOutcome::new(
                    vsi_id.clone(),
                    Decision::Partial {
                        nsi_id,
                        flavour,
                        unserved: failed,
                    },
                ))
            }
        }
    }

    fn detach_in_flight(&mut self, vsi_id: &VsiId, nsi_id: &NsiId) {
        let restored = self.rollback.remove(vsi_id);
        let Some(nsi) = self.nsis.get_mut(nsi_id) else {
            return;
        };
        nsi.vsi_ids.remove(vsi_id);
        self.journal.push(JournalEvent::NsiLeft {
            nsi_id: nsi_id.clone(),
            vsi_id: vsi_id.clone(),
        });
        match restored {
            Some(states) if !nsi.vsi_ids.is_empty() => nsi.shared_vnf_instances = states,
            _ if nsi.vsi_ids.is_empty() => {
                self.nsis.remove(nsi_id);
                self.journal.push(JournalEvent::NsiRemoved {
                    nsi_id: nsi_id.clone(),
                });
            }
            _ => {}
        }
    }

    /// Plans how to free budget for `vsi_id` from lower-priority services of
    /// its own vertical: shrink where a tighter flavour exists, otherwise
    /// terminate, lowest priority and largest CPU first. Nothing is changed.
    pub fn reassign_for_shortfall(&self, vsi: &VsiRecord) -> Result<ShortfallPlan, ShortfallImpossible> {
        let Some(budget) = self.budgets.get(&vsi.vertical_id) else {
            return Err(ShortfallImpossible::NoLowerPriority);
        };
        let mut victims: Vec<&VsiRecord> = self
            .vsis
            .values()
            .filter(|v| {
                v.id != vsi.id
                    && v.vertical_id == vsi.vertical_id
                    && v.state.is_running()
                    && v.priority < vsi.priority
            })
            .collect();
        if victims.is_empty() {
            return Err(ShortfallImpossible::NoLowerPriority);
        }
        victims.sort_by(|a, b| {
            a.priority
                .cmp(&b.priority)
                .then(b.charge.cpu.total_cmp(&a.charge.cpu))
                .then(a.id.cmp(&b.id))
        });
        let fits = |remaining: &Resources| self.flavour_within(vsi, remaining, &budget.total).is_ok();

        let mut remaining = budget.remaining;
        let mut plan = ShortfallPlan::default();
        let mut shrunk: BTreeMap<VsiId, Resources> = BTreeMap::new();
        for victim in &victims {
            let alone = victim
                .nsi_id
                .as_ref()
                .and_then(|n| self.nsis.get(n))
                .is_some_and(|n| n.vsi_ids.len() == 1);
            if !alone || victim.flavour.is_none() {
                continue;
            }
            let Ok(tighter) = build_flavour(
                &victim.vnffg,
                &victim.slo,
                &victim.charge,
                (budget.total.cpu, budget.total.bandwidth),
                &self.config.tolerance,
            ) else {
                continue;
            };
            let next = tighter.worst_case();
            if !next.fits_within(&victim.charge) {
                continue;
            }
            let freed = victim.charge - next;
            // Anything below twice the bisection width is search noise.
            let noise = 2.0 * self.config.tolerance.width(victim.charge.cpu) / victim.charge.cpu;
            let meaningful = freed.cpu > noise * victim.charge.cpu
                || freed.bandwidth > noise * victim.charge.bandwidth;
            if !meaningful {
                continue;
            }
            remaining = remaining + freed;
            shrunk.insert(victim.id.clone(), next);
            plan.shrink.push((victim.id.clone(), tighter));
            if fits(&remaining) {
                return Ok(plan);
            }
        }
        for victim in &victims {
            let held = shrunk.remove(&victim.id).unwrap_or(victim.charge);
            plan.shrink.retain(|(id, _)| id != &victim.id);
            remaining = remaining + held;
            plan.terminate.push(victim.id.clone());
            if fits(&remaining) {
                return Ok(plan);
            }
        }
        Err(ShortfallImpossible::StillInsufficient)
    }

    fn apply_plan(&mut self, plan: ShortfallPlan) -> Result<Vec<Displacement>, EngineError> {
        let mut displaced = Vec::new();
        for (victim, flavour) in plan.shrink {
            let previous = self.record(&victim)?.flavour;
            let applied = if self.vsis[&victim].state == VsiState::Active {
                matches!(
                    self.trigger_scaling_update(&victim, flavour)?,
                    Some(Event::Scaled { .. })
                )
            } else {
                self.apply_flavour(&victim, flavour)?;
                true
            };
            if applied {
                displaced.push(Displacement {
                    vsi_id: victim,
                    previous,
                    current: Some(flavour),
                });
            }
        }
        for victim in plan.terminate {
            let previous = self.record(&victim)?.flavour;
            self.terminate(&victim)?;
            displaced.push(Displacement {
                vsi_id: victim,
                previous,
                current: None,
            });
        }
        Ok(displaced)
    }

    fn apply_flavour(&mut self, vsi_id: &VsiId, flavour: DeploymentFlavour) -> Result<(), EngineError> {
        self.set_flavour(vsi_id, flavour)?;
        self.set_charge(vsi_id, flavour.worst_case())?;
        let vsi = &self.vsis[vsi_id];
        if let Some(nsi) = vsi.nsi_id.as_ref().and_then(|n| self.nsis.get(n)) {
            if nsi.vsi_ids.len() == 1 {
                let states = instances_for_isolated(vsi_id, &vsi.vnffg, &flavour);
                let nsi_id = nsi.id.clone();
                self.nsis.get_mut(&nsi_id).expect("looked up above").shared_vnf_instances = states;
            }
        }
        Ok(())
    }

    /// Asks the orchestrator to move an active VSI to a new flavour. The
    /// record changes only when the orchestrator confirms.
    pub fn trigger_scaling_update(
        &mut self,
        vsi_id: &VsiId,
        flavour: DeploymentFlavour,
    ) -> Result<Option<Event>, EngineError> {
        let vsi = self.record(vsi_id)?;
        if vsi.state != VsiState::Active {
            return Err(EngineError::NotActive(vsi_id.clone()));
        }
        if vsi.flavour == Some(flavour) {
            return Ok(None);
        }
        let budget = &self.budgets[&vsi.vertical_id];
        let allocated = budget.allocated() - vsi.charge + flavour.worst_case();
        ResourceBudget::with_allocated(budget.total, allocated)?;
        let rates = vsi
            .vnffg
            .vnfs
            .iter()
            .map(|v| (v.id.clone(), v.compute_weight * flavour.cpu_max))
            .collect();
        let event = self.orchestrator.handle(Directive::Scale {
            vsi_id: vsi_id.clone(),
            flavour: Some(flavour),
            rates,
        });
        if matches!(event, Event::Scaled { .. }) {
            self.apply_flavour(vsi_id, flavour)?;
        }
        Ok(Some(event))
    }

    /// Stops a running VSI, returns its charge to the vertical and shrinks
    /// the slice it leaves behind.
    pub fn terminate(&mut self, vsi_id: &VsiId) -> Result<TerminationOutcome, EngineError> {
        let vsi = self.record(vsi_id)?;
        let (state, nsi_id) = (vsi.state, vsi.nsi_id.clone());
        if !state.is_running() {
            return Err(EngineError::NotRunning(vsi_id.clone()));
        }
        if state == VsiState::Active {
            self.orchestrator.handle(Directive::Release {
                vsi_id: vsi_id.clone(),
            });
        }
        let mut rescaled = Vec::new();
        if let Some(nsi_id) = nsi_id {
            rescaled = self.leave_nsi(vsi_id, &nsi_id);
        }
        self.set_charge(vsi_id, Resources::zero())?;
        self.transition(vsi_id, VsiState::Terminated)?;
        Ok(TerminationOutcome {
            vsi_id: vsi_id.clone(),
            rescaled_vsis: rescaled,
        })
    }

    fn leave_nsi(&mut self, vsi_id: &VsiId, nsi_id: &NsiId) -> Vec<VsiId> {
        let Some(nsi) = self.nsis.get_mut(nsi_id) else {
            return Vec::new();
        };
        nsi.vsi_ids.remove(vsi_id);
        self.journal.push(JournalEvent::NsiLeft {
            nsi_id: nsi_id.clone(),
            vsi_id: vsi_id.clone(),
        });
        if nsi.vsi_ids.is_empty() {
            self.nsis.remove(nsi_id);
            self.journal.push(JournalEvent::NsiRemoved {
                nsi_id: nsi_id.clone(),
            });
            return Vec::new();
        }
        let nsi = &self.nsis[nsi_id];
        let before = nsi.shared_vnf_instances.clone();
        let members: Vec<ShareMember<'_, f64>> = nsi
            .vsi_ids
            .iter()
            .filter_map(|m| self.vsis.get(m))
            .map(|r| ShareMember {
                id: &r.id,
                graph: &r.vnffg,
                max_latency: r.slo.max_latency,
            })
            .collect();
        let ratio = members
            .first()
            .and_then(|m| self.vsis.get(m.id))
            .and_then(|r| self.budgets.get(&r.vertical_id))
            .map(|b| ratio_of(&b.remaining, &b.total))
            .unwrap_or((1.0, 1.0));
        let next = match resolve_after_departure(&before, &members, vsi_id, ratio) {
            Ok(allocation) => allocation.states,
            Err(_) => {
                let mut states = before.clone();
                for state in states.values_mut() {
                    state.per_service_rates.remove(vsi_id);
                }
                states.retain(|_, s| !s.per_service_rates.is_empty());
                states
            }
        };
        self.nsis.get_mut(nsi_id).expect("still present").shared_vnf_instances = next;
        self.notify_rescaled(nsi_id, &before, vsi_id)
    }

    /// Largest `|Σ charges + remaining − total| / total` over all verticals
    /// and dimensions.
    pub fn conservation_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (vertical_id, budget) in &self.budgets {
            let allocated = self.allocated(vertical_id).unwrap_or_else(|_| Resources::zero());
            let sum = allocated + budget.remaining;
            for (s, t) in sum.as_array().into_iter().zip(budget.total.as_array()) {
                worst = worst.max((s - t).abs() / t);
            }
        }
        worst
    }

    /// Budgets are within bounds and exclusive NSIs hold at most one VSI.
    pub fn is_consistent(&self) -> bool {
        self.budgets.values().all(ResourceBudget::is_consistent)
            && self.nsis.values().all(NsiRecord::is_consistent)
    }
}
