//! Dimensioning of VNF instances shared by several services.
//!
//! A service's latency over shared instances is
//! `Σ_v 1 / Σ_s(μ_v^s − λ_v^s) + Σ_(u,v) d_{u,v} / β_{u,v}` and every member of
//! the sharing set must meet the smallest latency objective among them.
//!
//! Only the aggregate surplus `M_v = Σ_s(μ_v^s − λ_v^s)` of an instance enters
//! the delay, so the search runs over one scale factor `k`: instance `v` gets
//! `M_v(k) = k·w_v` with `w_v` the sum of the members' compute weights on `v`,
//! and link `l` gets `β_l(k) = k·φ_l·B/C` with `φ_l` the sum of the members'
//! bandwidth weights on `l`. On a join the current surplus and bandwidth of
//! existing instances act as floors, so resources only grow. Each instance's
//! surplus is then split among its users in proportion to their arrival rates
//! (equally when some user sends nothing).

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{
    DeploymentFlavour, LinkId, ServiceRates, SharedVnfState, VnfId, Vnffg, VsiId,
};
use crate::scalar::Scalar;

use super::{bisect_min, AllocationError, InfeasibleReason};

/// A service taking part in a sharing set.
#[derive(Debug, Clone, Copy)]
pub struct ShareMember<'a, T> {
    pub id: &'a VsiId,
    pub graph: &'a Vnffg<T>,
    /// seconds
    pub max_latency: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharedAllocation<T> {
    pub states: BTreeMap<VnfId, SharedVnfState<T>>,
    /// Change of `Σ μ` over all instances; negative when resources were freed.
    pub cpu_increase: T,
    /// Change of `Σ β` over all links.
    pub bandwidth_increase: T,
    /// `min_s D_s` over the sharing set.
    pub latency_bound: T,
    /// Scale factor the search settled on; zero when floors alone suffice.
    pub scale: T,
}

/// Latency of `member` over the given shared instance states.
pub fn shared_delay<T: Scalar>(
    states: &BTreeMap<VnfId, SharedVnfState<T>>,
    member: &ShareMember<'_, T>,
) -> T {
    let mut total = T::zero();
    for vnf in &member.graph.vnfs {
        let Some(state) = states.get(&vnf.id) else {
            return T::infinity();
        };
        let surplus = state.aggregate_surplus();
        if !(surplus > T::zero()) {
            return T::infinity();
        }
        total = total + surplus.recip();
    }
    for link in &member.graph.links {
        if link.data_volume == T::zero() {
            continue;
        }
        let bandwidth = states
            .get(&link.source)
            .and_then(|s| s.link_bandwidths.get(&link.id()))
            .copied()
            .unwrap_or_else(T::zero);
        if !(bandwidth > T::zero()) {
            return T::infinity();
        }
        total = total + link.data_volume / bandwidth;
    }
    total
}

/// Instance states of a service that has an NSI to itself: VNF `v` runs at
/// `f_v·μ` and link `l` gets `f_l·β` of the worst-case allocation.
pub fn instances_for_isolated<T: Scalar>(
    id: &VsiId,
    graph: &Vnffg<T>,
    flavour: &DeploymentFlavour<T>,
) -> BTreeMap<VnfId, SharedVnfState<T>> {
    let mut states = BTreeMap::new();
    for vnf in &graph.vnfs {
        let mut state = SharedVnfState::new(vnf.id.clone());
        state.per_service_rates.insert(
            id.clone(),
            ServiceRates {
                service_rate: vnf.compute_weight * flavour.cpu_max,
                arrival_rate: vnf.arrival_rate,
            },
        );
        states.insert(vnf.id.clone(), state);
    }
    for link in &graph.links {
        if let Some(state) = states.get_mut(&link.source) {
            state
                .link_bandwidths
                .insert(link.id(), link.bandwidth_weight * flavour.bandwidth_max);
        }
    }
    states
}

struct InstanceDemand<T> {
    weight: T,
    floor: T,
    users: Vec<(VsiId, T)>,
}

struct LinkDemand<T> {
    weight: T,
    floor: T,
}

/// Aggregated demand of a set of members over the instances they use.
struct Dimensioning<T> {
    instances: BTreeMap<VnfId, InstanceDemand<T>>,
    links: BTreeMap<LinkId, LinkDemand<T>>,
    bandwidth_per_scale: T,
    members: Vec<(Vec<VnfId>, Vec<(LinkId, T)>)>,
    latency_bound: T,
}

impl<T: Scalar> Dimensioning<T> {
    fn new(members: &[ShareMember<'_, T>], ratio: (T, T)) -> Self {
        let mut instances: BTreeMap<VnfId, InstanceDemand<T>> = BTreeMap::new();
        let mut links: BTreeMap<LinkId, LinkDemand<T>> = BTreeMap::new();
        let mut per_member = Vec::with_capacity(members.len());
        let mut latency_bound = T::infinity();
        for member in members {
            latency_bound = latency_bound.min(member.max_latency);
            let mut vnfs = Vec::new();
            for vnf in &member.graph.vnfs {
                let entry = instances.entry(vnf.id.clone()).or_insert(InstanceDemand {
                    weight: T::zero(),
                    floor: T::zero(),
                    users: Vec::new(),
                });
                entry.weight = entry.weight + vnf.compute_weight;
                entry.users.push((member.id.clone(), vnf.arrival_rate));
                vnfs.push(vnf.id.clone());
            }
            let mut member_links = Vec::new();
            for link in &member.graph.links {
                let entry = links.entry(link.id()).or_insert(LinkDemand {
                    weight: T::zero(),
                    floor: T::zero(),
                });
                entry.weight = entry.weight + link.bandwidth_weight;
                member_links.push((link.id(), link.data_volume));
            }
            per_member.push((vnfs, member_links));
        }
        Self {
            instances,
            links,
            bandwidth_per_scale: ratio.1 / ratio.0,
            members: per_member,
            latency_bound,
        }
    }

    fn with_floors(mut self, states: &BTreeMap<VnfId, SharedVnfState<T>>) -> Self {
        for (id, demand) in self.instances.iter_mut() {
            if let Some(state) = states.get(id) {
                demand.floor = state.aggregate_surplus().max(T::zero());
            }
        }
        for (id, demand) in self.links.iter_mut() {
            if let Some(bw) = states
                .get(&id.source)
                .and_then(|s| s.link_bandwidths.get(id))
            {
                demand.floor = *bw;
            }
        }
        self
    }

    fn surplus(&self, id: &VnfId, scale: T) -> T {
        let d = &self.instances[id];
        (scale * d.weight).max(d.floor)
    }

    fn bandwidth(&self, id: &LinkId, scale: T) -> T {
        let d = &self.links[id];
        (scale * d.weight * self.bandwidth_per_scale).max(d.floor)
    }

    fn worst_delay(&self, scale: T) -> T {
        let mut worst = T::zero();
        for (vnfs, links) in &self.members {
            let mut total = T::zero();
            for id in vnfs {
                let m = self.surplus(id, scale);
                if !(m > T::zero()) {
                    return T::infinity();
                }
                total = total + m.recip();
            }
            for (id, volume) in links {
                if *volume == T::zero() {
                    continue;
                }
                let b = self.bandwidth(id, scale);
                if !(b > T::zero()) {
                    return T::infinity();
                }
                total = total + *volume / b;
            }
            worst = worst.max(total);
        }
        worst
    }

    fn feasible(&self, scale: T) -> bool {
        self.worst_delay(scale) <= self.latency_bound
    }

    /// Smallest feasible scale, or `None` when no finite scale meets the bound.
    fn minimal_scale(&self) -> Option<T> {
        if self.feasible(T::zero()) {
            return Some(T::zero());
        }
        let two = T::lit(2.0);
        let mut hi = T::one();
        let mut doublings = 0;
        while !self.feasible(hi) {
            hi = hi * two;
            doublings += 1;
            if doublings > 2000 || hi.is_infinite() {
                return None;
            }
        }
        let width = hi * T::lit(1e-12);
        Some(bisect_min(T::zero(), hi, width, |k| self.feasible(k)))
    }

    fn states_at(&self, scale: T) -> BTreeMap<VnfId, SharedVnfState<T>> {
        let mut states = BTreeMap::new();
        for (id, demand) in &self.instances {
            let surplus = self.surplus(id, scale);
            states.insert(id.clone(), split_surplus(id, surplus, &demand.users));
        }
        for id in self.links.keys() {
            if let Some(state) = states.get_mut(&id.source) {
                state.link_bandwidths.insert(id.clone(), self.bandwidth(id, scale));
            }
        }
        states
    }
}

fn split_surplus<T: Scalar>(id: &VnfId, surplus: T, users: &[(VsiId, T)]) -> SharedVnfState<T> {
    let mut state = SharedVnfState::new(id.clone());
    let load = users.iter().fold(T::zero(), |acc, (_, l)| acc + *l);
    let proportional = users.iter().all(|(_, l)| *l > T::zero());
    let count = T::lit(users.len() as f64);
    for (vsi, arrival) in users {
        let share = if proportional { *arrival / load } else { count.recip() };
        let entry = state
            .per_service_rates
            .entry(vsi.clone())
            .or_insert(ServiceRates {
                service_rate: T::zero(),
                arrival_rate: T::zero(),
            });
        entry.arrival_rate = entry.arrival_rate + *arrival;
        entry.service_rate = entry.service_rate + *arrival + share * surplus;
    }
    state
}

fn totals<T: Scalar>(states: &BTreeMap<VnfId, SharedVnfState<T>>) -> (T, T) {
    states.values().fold((T::zero(), T::zero()), |(c, b), s| {
        (c + s.total_service_rate(), b + s.total_link_bandwidth())
    })
}

/// Re-dimensions the instances of an NSI so that `joining` can be added to
/// the existing `members`. Existing surplus and link bandwidth never shrink.
///
/// `cpu_cap` and `link_budget_cap` bound the increase of the total CPU and
/// link bandwidth; `ratio` is the `(C, B)` pair tying new bandwidth to CPU.
pub fn solve_shared<T: Scalar>(
    states: &BTreeMap<VnfId, SharedVnfState<T>>,
    members: &[ShareMember<'_, T>],
    joining: &ShareMember<'_, T>,
    ratio: (T, T),
    link_budget_cap: T,
    cpu_cap: T,
) -> Result<SharedAllocation<T>, AllocationError> {
    if !joining.graph.vnfs.iter().any(|v| states.contains_key(&v.id)) {
        return Err(AllocationError::InvalidProblem(
            "joining service shares no VNF instance",
        ));
    }
    if members.iter().any(|m| m.id == joining.id) {
        return Err(AllocationError::InvalidProblem("service already in the sharing set"));
    }
    if !(ratio.0 > T::zero() && ratio.1 > T::zero()) {
        return Err(AllocationError::InvalidProblem("ratio terms must be positive"));
    }
    let mut all: Vec<ShareMember<'_, T>> = members.to_vec();
    all.push(*joining);
    let dims = Dimensioning::new(&all, ratio).with_floors(states);
    let scale = dims
        .minimal_scale()
        .ok_or(AllocationError::Infeasible(InfeasibleReason::CpuCapExceeded))?;
    let next = dims.states_at(scale);
    let (cpu_before, bw_before) = totals(states);
    let (cpu_after, bw_after) = totals(&next);
    let cpu_increase = cpu_after - cpu_before;
    let bandwidth_increase = bw_after - bw_before;
    if cpu_increase > cpu_cap {
        return Err(InfeasibleReason::CpuCapExceeded.into());
    }
    if bandwidth_increase > link_budget_cap {
        return Err(InfeasibleReason::BandwidthCapExceeded.into());
    }
    Ok(SharedAllocation {
        states: next,
        cpu_increase,
        bandwidth_increase,
        latency_bound: dims.latency_bound,
        scale,
    })
}

/// Re-dimensions an NSI after `departing` left. The result never uses more
/// CPU or bandwidth than keeping the current surplus for the remaining
/// members; the tighter minimal dimensioning is adopted when it is cheaper in
/// both dimensions.
pub fn resolve_after_departure<T: Scalar>(
    states: &BTreeMap<VnfId, SharedVnfState<T>>,
    remaining: &[ShareMember<'_, T>],
    departing: &VsiId,
    ratio: (T, T),
) -> Result<SharedAllocation<T>, AllocationError> {
    if remaining.iter().any(|m| m.id == departing) {
        return Err(AllocationError::InvalidProblem("departing service still listed"));
    }
    let (cpu_before, bw_before) = totals(states);
    if remaining.is_empty() {
        return Ok(SharedAllocation {
            states: BTreeMap::new(),
            cpu_increase: -cpu_before,
            bandwidth_increase: -bw_before,
            latency_bound: T::infinity(),
            scale: T::zero(),
        });
    }
    let dims = Dimensioning::new(remaining, ratio);

    let mut kept = BTreeMap::new();
    let used_links: BTreeSet<LinkId> = dims.links.keys().cloned().collect();
    for (id, demand) in &dims.instances {
        let Some(state) = states.get(id) else {
            return Err(AllocationError::InvalidProblem("remaining member uses an unknown instance"));
        };
        let mut next = split_surplus(id, state.aggregate_surplus(), &demand.users);
        next.link_bandwidths = state
            .link_bandwidths
            .iter()
            .filter(|(l, _)| used_links.contains(*l))
            .map(|(l, b)| (l.clone(), *b))
            .collect();
        kept.insert(id.clone(), next);
    }
    let (kept_cpu, kept_bw) = totals(&kept);

    let mut chosen = kept;
    let mut scale = T::zero();
    if let Some(k) = dims.minimal_scale() {
        let minimal = dims.states_at(k);
        let (cpu, bw) = totals(&minimal);
        if cpu <= kept_cpu && bw <= kept_bw {
            chosen = minimal;
            scale = k;
        }
    }
    let (cpu_after, bw_after) = totals(&chosen);
    Ok(SharedAllocation {
        states: chosen,
        cpu_increase: cpu_after - cpu_before,
        bandwidth_increase: bw_after - bw_before,
        latency_bound: dims.latency_bound,
        scale,
    })
}
