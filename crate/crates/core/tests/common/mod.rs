//! Random instances and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use arbiter_core::{Slo, VirtualLinkSpec, VnfSpec, Vnffg};
use rand::Rng;

pub const GRID_POINTS: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: Vnffg,
    pub slo: Slo,
    pub cpu_cap: f64,
    pub bandwidth_cap: f64,
    /// Cap sized for the best case the same way `cpu_cap` is for the worst.
    pub best_cpu_cap: f64,
}

/// Worst-case delay written out independently of the library.
pub fn oracle_worst(graph: &Vnffg, mu: f64, beta: f64) -> f64 {
    let mut total = 0.0;
    for v in &graph.vnfs {
        let rate = v.compute_weight * mu - v.arrival_rate;
        if rate <= 0.0 {
            return f64::INFINITY;
        }
        total += 1.0 / rate;
    }
    for l in &graph.links {
        if l.data_volume > 0.0 {
            if beta <= 0.0 {
                return f64::INFINITY;
            }
            total += l.data_volume / (l.bandwidth_weight * beta);
        }
    }
    total
}

pub fn oracle_best(graph: &Vnffg, mu: f64) -> f64 {
    oracle_worst(&Vnffg::new(graph.vnfs.clone(), Vec::new()), mu, 0.0)
}

/// First feasible point of a uniform scan of `(lo, hi]`.
pub fn grid_min(lo: f64, hi: f64, feasible: impl Fn(f64) -> bool) -> Option<f64> {
    let step = (hi - lo) / GRID_POINTS as f64;
    (1..=GRID_POINTS).map(|i| lo + step * i as f64).find(|mu| feasible(*mu))
}

pub fn lower_bound(graph: &Vnffg) -> f64 {
    graph
        .vnfs
        .iter()
        .map(|v| v.arrival_rate / v.compute_weight)
        .fold(0.0, f64::max)
}

/// 2–6 VNFs, λ in [0, 100]/s, d in [0, 10] Gbit, link weights in (0, 1],
/// D in [10 ms, 10 s]. Caps are a random multiple (1–4×) of a doubling-search
/// upper bound on the case's minimum, so both cases are feasible and the
/// scanned interval stays within a small multiple of the answer.
pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let n = rng.gen_range(2..=6);
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let mut vnfs: Vec<VnfSpec> = raw
        .iter()
        .enumerate()
        .map(|(i, w)| VnfSpec::new(format!("v{i}"), w / sum, rng.gen_range(0.0..=100.0)))
        .collect();
    // Make the weights sum to one exactly up to rounding in the last entry.
    let head: f64 = vnfs[..n - 1].iter().map(|v| v.compute_weight).sum();
    vnfs[n - 1].compute_weight = 1.0 - head;

    let mut links = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || rng.gen_bool(0.3) {
                links.push(VirtualLinkSpec::new(
                    format!("v{i}"),
                    format!("v{j}"),
                    rng.gen_range(0.0..=1e10),
                    1.0 - rng.gen_range(0.0..1.0),
                ));
            }
        }
    }
    let graph = Vnffg::new(vnfs, links);
    let latency = 10f64.powf(rng.gen_range(-2.0..=1.0));
    let ratio = 10f64.powf(rng.gen_range(5.0..=7.0));

    let lo = lower_bound(&graph);
    let mut upper = lo + 1.0;
    while oracle_worst(&graph, upper, upper * ratio) > latency {
        upper = lo + 2.0 * (upper - lo);
    }
    let cpu_cap = upper * rng.gen_range(1.0..=4.0);
    let mut best_upper = lo + 1.0;
    while oracle_best(&graph, best_upper) > latency {
        best_upper = lo + 2.0 * (best_upper - lo);
    }
    let best_cpu_cap = best_upper * rng.gen_range(1.0..=4.0);
    Instance {
        graph,
        slo: Slo::new(latency, 100.0),
        cpu_cap,
        bandwidth_cap: cpu_cap * ratio,
        best_cpu_cap,
    }
}

pub mod engine {
    use arbiter_core::engine::{
        ArbitrationOutcome, ArbitrationRequest, BudgetShortfallPolicy, Engine, EngineConfig,
        PlacementFailurePolicy,
    };
    use arbiter_core::model::VsiState;
    use arbiter_core::orchestrator::{InfrastructurePool, PoolConfig};
    use arbiter_core::solver::{shared_delay, ShareMember};
    use arbiter_core::{Resources, Slo, VirtualLinkSpec, VnfSpec, Vnffg, VsiId, VsiRecord};
    use rand::seq::SliceRandom;
    use rand::Rng;

    pub fn roomy_engine() -> Engine {
        let pool = InfrastructurePool::new(PoolConfig::new(Resources::new(1e9, 1e15, 1e18, 1e18)));
        Engine::new(pool, EngineConfig::default())
    }

    /// A chain over `names` with random weights, rates and link volumes.
    pub fn service(
        rng: &mut impl Rng,
        id: &str,
        vertical: &str,
        priority: i64,
        names: &[String],
    ) -> VsiRecord {
        let raw: Vec<f64> = names.iter().map(|_| rng.gen_range(0.2..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let mut vnfs: Vec<VnfSpec> = names
            .iter()
            .zip(&raw)
            .map(|(n, w)| {
                VnfSpec::new(n.as_str(), w / sum, rng.gen_range(0.0..50.0))
                    .with_demands(rng.gen_range(0.0..1e6), rng.gen_range(0.0..1e6))
            })
            .collect();
        let head: f64 = vnfs[..vnfs.len() - 1].iter().map(|v| v.compute_weight).sum();
        vnfs.last_mut().unwrap().compute_weight = 1.0 - head;
        let links = names
            .windows(2)
            .map(|w| {
                VirtualLinkSpec::new(
                    w[0].as_str(),
                    w[1].as_str(),
                    rng.gen_range(0.0..1e6),
                    rng.gen_range(0.1..=1.0),
                )
            })
            .collect();
        let latency = rng.gen_range(0.05..1.0);
        VsiRecord::new(id, vertical, priority, Vnffg::new(vnfs, links), Slo::new(latency, 50.0))
    }

    /// 2–4 services that all contain `s0` and draw from 1–3 shared VNFs,
    /// each with one private VNF, each in its own vertical.
    pub fn sharing_set(rng: &mut impl Rng) -> Vec<VsiRecord> {
        let shared_count = rng.gen_range(1..=3);
        let services = rng.gen_range(2..=4);
        (0..services)
            .map(|i| {
                let mut names = vec!["s0".to_string()];
                for k in 1..shared_count {
                    if rng.gen_bool(0.6) {
                        names.push(format!("s{k}"));
                    }
                }
                if rng.gen_bool(0.7) {
                    names.push(format!("p{i}"));
                }
                names.shuffle(rng);
                service(rng, &format!("svc{i}"), &format!("v{i}"), 0, &names)
            })
            .collect()
    }

    /// Every member of every slice meets the slice's tightest latency with
    /// stable queues.
    pub fn check_sharing(engine: &Engine) -> Result<(), String> {
        for nsi in engine.nsis().values() {
            let members: Vec<&VsiRecord> = nsi
                .vsi_ids
                .iter()
                .map(|id| &engine.vsis()[id])
                .collect();
            let bound = members
                .iter()
                .map(|m| m.slo.max_latency)
                .fold(f64::INFINITY, f64::min);
            for state in nsi.shared_vnf_instances.values() {
                if !state.is_stable() {
                    return Err(format!("{}: unstable instance {}", nsi.id, state.vnf_id));
                }
            }
            for m in &members {
                let d = shared_delay(
                    &nsi.shared_vnf_instances,
                    &ShareMember {
                        id: &m.id,
                        graph: &m.vnffg,
                        max_latency: m.slo.max_latency,
                    },
                );
                if d > bound + 1e-6 {
                    return Err(format!("{}: {} sees {d} s over bound {bound} s", nsi.id, m.id));
                }
            }
        }
        Ok(())
    }

    pub fn is_lifecycle_path(history: &[VsiState]) -> bool {
        history.first() == Some(&VsiState::Requested)
            && history.windows(2).all(|w| w[0].can_transition_to(w[1]))
    }

    #[derive(Debug, Default)]
    pub struct Tally {
        pub forced: usize,
        pub displaced: usize,
        pub violations: Vec<String>,
    }

    /// Random register / request / terminate / force sequence. `after` runs
    /// after every operation.
    pub fn random_operations(
        rng: &mut impl Rng,
        operations: usize,
        mut after: impl FnMut(&Engine) -> Result<(), String>,
    ) -> (Engine, Tally) {
        let mut engine = roomy_engine();
        let mut tally = Tally::default();
        let mut verticals: Vec<String> = Vec::new();
        let mut next = 0usize;
        let names: Vec<String> = (0..8).map(|i| format!("n{i}")).collect();
        for step in 0..operations {
            let roll = rng.gen_range(0..100);
            if verticals.is_empty() || (roll < 8 && verticals.len() < 6) {
                let id = format!("vert{}", verticals.len());
                let total = Resources::new(
                    rng.gen_range(200.0..3000.0),
                    rng.gen_range(1e7..1e9),
                    rng.gen_range(1e6..1e7),
                    rng.gen_range(1e6..1e7),
                );
                engine.register_vertical(id.as_str().into(), total).unwrap();
                verticals.push(id);
            } else if roll < 75 {
                let vertical = verticals.choose(rng).unwrap().clone();
                let count = rng.gen_range(1..=3);
                let picked: Vec<String> = names.choose_multiple(rng, count).cloned().collect();
                let priority = rng.gen_range(0..5);
                let vsi = service(rng, &format!("r{next}"), &vertical, priority, &picked)
                    .isolated(rng.gen_bool(0.2));
                next += 1;
                let policy = match rng.gen_range(0..4) {
                    0 => BudgetShortfallPolicy::Cancel,
                    1 => {
                        let current = engine.budget(&vertical.as_str().into()).unwrap().total;
                        let grow = rng.gen_range(0.5..2.0);
                        BudgetShortfallPolicy::IncreaseBudget(Resources::new(
                            current.cpu * grow,
                            current.bandwidth * grow,
                            current.memory * grow,
                            current.storage * grow,
                        ))
                    }
                    _ => BudgetShortfallPolicy::Force,
                };
                let forced = matches!(policy, BudgetShortfallPolicy::Force);
                let priority = vsi.priority;
                let request = ArbitrationRequest::new(vsi)
                    .on_shortfall(policy)
                    .on_placement_failure(PlacementFailurePolicy::Undo);
                let outcome: ArbitrationOutcome = engine.arbitrate(request).unwrap();
                if forced {
                    tally.forced += 1;
                }
                for d in &outcome.displaced_vsis {
                    tally.displaced += 1;
                    let victim = engine.vsi(&d.vsi_id).unwrap();
                    if victim.priority >= priority {
                        tally.violations.push(format!(
                            "step {step}: {} (p{}) displaced {} (p{})",
                            outcome.vsi_id, priority, d.vsi_id, victim.priority
                        ));
                    }
                }
            } else {
                let running: Vec<VsiId> = engine
                    .vsis()
                    .values()
                    .filter(|v| v.state.is_running())
                    .map(|v| v.id.clone())
                    .collect();
                if let Some(id) = running.choose(rng) {
                    engine.terminate(id).unwrap();
                }
            }
            if let Err(msg) = after(&engine) {
                tally.violations.push(format!("step {step}: {msg}"));
            }
        }
        (engine, tally)
    }
}
