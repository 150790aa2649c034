//! Delay-constrained CPU and bandwidth allocation.
//!
//! Each VNF is an M/M/1 queue served at `f_v·μ` with arrivals `λ_v`, and each
//! virtual link adds `d_{u,v} / (f_{u,v}·β)` of transfer time. The worst case
//! counts both terms and ties bandwidth to CPU through the budget ratio
//! `μ/β = C/B`; the best case colocates every VNF and drops the link term.
//! Both are solved for the smallest `μ` meeting the latency objective by
//! bisection, which is valid because the delay is strictly decreasing in `μ`
//! on the stable region.

mod shared;

pub use shared::{
    instances_for_isolated, resolve_after_departure, shared_delay, solve_shared, ShareMember,
    SharedAllocation,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DeploymentFlavour, Resources, Slo, Vnffg};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasibleReason {
    #[error("required CPU exceeds the cap")]
    CpuCapExceeded,
    #[error("required bandwidth exceeds the cap")]
    BandwidthCapExceeded,
    #[error("some VNF queue is unstable even at the CPU cap")]
    UnstableAtCap,
    #[error("memory demand exceeds the remaining budget")]
    MemoryExceeded,
    #[error("storage demand exceeds the remaining budget")]
    StorageExceeded,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AllocationError {
    #[error("infeasible: {0}")]
    Infeasible(InfeasibleReason),
    #[error("invalid allocation problem: {0}")]
    InvalidProblem(&'static str),
}

impl AllocationError {
    pub fn reason(&self) -> Option<InfeasibleReason> {
        match self {
            AllocationError::Infeasible(reason) => Some(*reason),
            AllocationError::InvalidProblem(_) => None,
        }
    }
}

impl From<InfeasibleReason> for AllocationError {
    fn from(reason: InfeasibleReason) -> Self {
        AllocationError::Infeasible(reason)
    }
}

/// Bisection stops once the bracket is at most `max(relative·cap, absolute)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance<T> {
    pub relative: T,
    /// packets/s
    pub absolute: T,
}

impl<T: Scalar> Default for Tolerance<T> {
    fn default() -> Self {
        Self {
            relative: T::lit(1e-6),
            absolute: T::lit(1e-3),
        }
    }
}

impl<T: Scalar> Tolerance<T> {
    pub fn width(&self, cap: T) -> T {
        (self.relative * cap).max(self.absolute)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationCase {
    Best,
    Worst,
    Shared,
}

#[derive(Debug, Clone, Copy)]
pub struct AllocationProblem<'a, T> {
    pub vnffg: &'a Vnffg<T>,
    pub slo: &'a Slo<T>,
    /// packets/s
    pub cpu_cap: T,
    /// bits/s
    pub bandwidth_cap: T,
    /// `C` of the ratio constraint, packets/s.
    pub ratio_cpu: T,
    /// `B` of the ratio constraint, bits/s.
    pub ratio_bandwidth: T,
}

impl<'a, T: Scalar> AllocationProblem<'a, T> {
    /// Problem whose caps and ratio are both the given budget.
    pub fn with_budget(vnffg: &'a Vnffg<T>, slo: &'a Slo<T>, cpu: T, bandwidth: T) -> Self {
        Self {
            vnffg,
            slo,
            cpu_cap: cpu,
            bandwidth_cap: bandwidth,
            ratio_cpu: cpu,
            ratio_bandwidth: bandwidth,
        }
    }

    fn check(&self) -> Result<(), AllocationError> {
        let positive = |v: T| v > T::zero() && v.is_finite();
        if !positive(self.cpu_cap) {
            return Err(AllocationError::InvalidProblem("cpu cap must be positive"));
        }
        if !(self.bandwidth_cap >= T::zero()) {
            return Err(AllocationError::InvalidProblem("bandwidth cap must be non-negative"));
        }
        if !positive(self.ratio_cpu) || !positive(self.ratio_bandwidth) {
            return Err(AllocationError::InvalidProblem("ratio terms must be positive"));
        }
        if !positive(self.slo.max_latency) {
            return Err(AllocationError::InvalidProblem("max latency must be positive"));
        }
        if self.vnffg.vnfs.is_empty() {
            return Err(AllocationError::InvalidProblem("graph has no VNFs"));
        }
        Ok(())
    }

    /// `β` tied to `μ` by the ratio constraint, or zero when no link carries data.
    fn tied_bandwidth(&self, cpu: T) -> T {
        if self.vnffg.needs_bandwidth() {
            cpu * self.ratio_bandwidth / self.ratio_cpu
        } else {
            T::zero()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult<T> {
    /// packets/s
    pub cpu: T,
    /// bits/s
    pub bandwidth: T,
    /// seconds
    pub achieved_latency: T,
    pub case: AllocationCase,
}

fn processing_delay<T: Scalar>(graph: &Vnffg<T>, cpu: T) -> T {
    let mut total = T::zero();
    for vnf in &graph.vnfs {
        let surplus = vnf.compute_weight * cpu - vnf.arrival_rate;
        if !(surplus > T::zero()) {
            return T::infinity();
        }
        total = total + surplus.recip();
    }
    total
}

/// Latency with every VNF on its own server: processing plus transfer time.
/// Infinite when a queue is unstable or data must move over zero bandwidth.
pub fn delay_worst_case<T: Scalar>(graph: &Vnffg<T>, cpu: T, bandwidth: T) -> T {
    let mut total = processing_delay(graph, cpu);
    if total.is_infinite() {
        return total;
    }
    for link in &graph.links {
        if link.data_volume == T::zero() {
            continue;
        }
        let share = link.bandwidth_weight * bandwidth;
        if !(share > T::zero()) {
            return T::infinity();
        }
        total = total + link.data_volume / share;
    }
    total
}

/// Latency with all VNFs colocated; links cost nothing.
pub fn delay_best_case<T: Scalar>(graph: &Vnffg<T>, cpu: T) -> T {
    processing_delay(graph, cpu)
}

/// Largest `λ_v / f_v`: below it some queue is unstable.
pub fn stability_bound<T: Scalar>(graph: &Vnffg<T>) -> T {
    graph
        .vnfs
        .iter()
        .map(|v| v.arrival_rate / v.compute_weight)
        .fold(T::zero(), T::max)
}

/// Smallest `x` in `(lo, hi]` with `feasible(x)`, to within `width`.
///
/// Requires `feasible(hi)`. `lo` is treated as infeasible.
pub(crate) fn bisect_min<T: Scalar>(
    mut lo: T,
    mut hi: T,
    width: T,
    feasible: impl Fn(T) -> bool,
) -> T {
    debug_assert!(feasible(hi), "bisection upper end must be feasible");
    let two = T::lit(2.0);
    for _ in 0..512 {
        if hi - lo <= width {
            break;
        }
        let mid = lo + (hi - lo) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        debug_assert!(lo < hi && feasible(hi), "bracket lost");
    }
    hi
}

/// Minimal `μ` (and the tied `β`) meeting the latency objective when VNFs
/// may land on different servers.
pub fn solve_worst_case<T: Scalar>(
    problem: &AllocationProblem<'_, T>,
    tolerance: &Tolerance<T>,
) -> Result<AllocationResult<T>, AllocationError> {
    problem.check()?;
    let target = problem.slo.max_latency;
    let lower = stability_bound(problem.vnffg);
    let delay = |cpu: T| delay_worst_case(problem.vnffg, cpu, problem.tied_bandwidth(cpu));
    if problem.cpu_cap <= lower {
        return Err(InfeasibleReason::UnstableAtCap.into());
    }
    if !(delay(problem.cpu_cap) <= target) {
        return Err(InfeasibleReason::CpuCapExceeded.into());
    }
    let cpu = bisect_min(lower, problem.cpu_cap, tolerance.width(problem.cpu_cap), |mu| {
        delay(mu) <= target
    });
    let bandwidth = problem.tied_bandwidth(cpu);
    if bandwidth > problem.bandwidth_cap {
        return Err(InfeasibleReason::BandwidthCapExceeded.into());
    }
    Ok(AllocationResult {
        cpu,
        bandwidth,
        achieved_latency: delay(cpu),
        case: AllocationCase::Worst,
    })
}

/// Minimal `μ` meeting the latency objective with every VNF colocated.
pub fn solve_best_case<T: Scalar>(
    problem: &AllocationProblem<'_, T>,
    tolerance: &Tolerance<T>,
) -> Result<AllocationResult<T>, AllocationError> {
    problem.check()?;
    let target = problem.slo.max_latency;
    let lower = stability_bound(problem.vnffg);
    let delay = |cpu: T| delay_best_case(problem.vnffg, cpu);
    if problem.cpu_cap <= lower {
        return Err(InfeasibleReason::UnstableAtCap.into());
    }
    if !(delay(problem.cpu_cap) <= target) {
        return Err(InfeasibleReason::CpuCapExceeded.into());
    }
    let cpu = bisect_min(lower, problem.cpu_cap, tolerance.width(problem.cpu_cap), |mu| {
        delay(mu) <= target
    });
    Ok(AllocationResult {
        cpu,
        bandwidth: T::zero(),
        achieved_latency: delay(cpu),
        case: AllocationCase::Best,
    })
}

/// Best- and worst-case solutions folded into one flavour, checked against
/// the remaining budget. `ratio` is the `(C, B)` pair of the ratio constraint.
pub fn build_flavour<T: Scalar>(
    graph: &Vnffg<T>,
    slo: &Slo<T>,
    remaining: &Resources<T>,
    ratio: (T, T),
    tolerance: &Tolerance<T>,
) -> Result<DeploymentFlavour<T>, AllocationError> {
    if !(remaining.cpu > T::zero()) {
        return Err(InfeasibleReason::CpuCapExceeded.into());
    }
    let problem = AllocationProblem {
        vnffg: graph,
        slo,
        cpu_cap: remaining.cpu,
        bandwidth_cap: remaining.bandwidth,
        ratio_cpu: ratio.0,
        ratio_bandwidth: ratio.1,
    };
    let best = solve_best_case(&problem, tolerance)?;
    let worst = solve_worst_case(&problem, tolerance)?;
    let memory = graph.memory_demand();
    let storage = graph.storage_demand();
    if memory > remaining.memory {
        return Err(InfeasibleReason::MemoryExceeded.into());
    }
    if storage > remaining.storage {
        return Err(InfeasibleReason::StorageExceeded.into());
    }
    Ok(DeploymentFlavour {
        cpu_min: best.cpu.min(worst.cpu),
        cpu_max: worst.cpu,
        bandwidth_min: T::zero(),
        bandwidth_max: worst.bandwidth,
        memory,
        storage,
    })
}
