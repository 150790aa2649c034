mod common;

use arbiter_core::engine::ArbitrationRequest;
use arbiter_core::solver::{shared_delay, solve_shared, ShareMember};
use arbiter_core::{VsiId, VsiRecord};
use common::engine::{check_sharing, is_lifecycle_path, random_operations, roomy_engine, sharing_set};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn budgets_are_conserved_after_every_operation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (engine, tally) = random_operations(&mut rng, 120, |e| {
            let r = e.conservation_residual();
            if r > 1e-9 {
                return Err(format!("conservation residual {r}"));
            }
            if !e.is_consistent() {
                return Err("inconsistent budget or NSI".into());
            }
            Ok(())
        });
        prop_assert!(tally.violations.is_empty(), "{:?}", tally.violations);
        for vsi in engine.vsis().values() {
            prop_assert!(is_lifecycle_path(&vsi.history), "{}: {:?}", vsi.id, vsi.history);
            if !vsi.state.is_running() {
                prop_assert_eq!(vsi.charge, arbiter_core::Resources::zero());
            }
        }
    }

    #[test]
    fn force_never_displaces_equal_or_higher_priority(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, tally) = random_operations(&mut rng, 80, |_| Ok(()));
        prop_assert!(tally.violations.is_empty(), "{:?}", tally.violations);
    }

    #[test]
    fn shared_slices_stay_feasible(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let services = sharing_set(&mut rng);
        let mut engine = roomy_engine();
        for s in &services {
            engine.register_vertical(s.vertical_id.clone(), arbiter_core::Resources::new(1e6, 1e12, 1e9, 1e9)).unwrap();
        }
        for s in &services {
            let out = engine.arbitrate(ArbitrationRequest::new(s.clone())).unwrap();
            prop_assert_eq!(out.decision.label(), "deployed");
            prop_assert!(check_sharing(&engine).is_ok(), "{:?}", check_sharing(&engine));
        }
        prop_assert_eq!(engine.nsis().len(), 1);
        let mut order: Vec<VsiId> = services.iter().map(|s| s.id.clone()).collect();
        order.shuffle(&mut rng);
        for id in order {
            let before = engine.nsis().values().map(|n| (n.total_cpu(), n.total_bandwidth())).next();
            engine.terminate(&id).unwrap();
            prop_assert!(check_sharing(&engine).is_ok(), "{:?}", check_sharing(&engine));
            if let (Some((c0, b0)), Some(n)) = (before, engine.nsis().values().next()) {
                prop_assert!(n.total_cpu() <= c0 + 1e-9 && n.total_bandwidth() <= b0 + 1e-6);
            }
        }
        prop_assert!(engine.nsis().is_empty());
        prop_assert!(engine.conservation_residual() <= 1e-9);
    }
}

/// A tighter joiner forces a rescale; the scale factor the solver settles on
/// matches a 1-D scan over the scale factor.
#[test]
fn tighter_joiner_matches_scale_factor_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for round in 0..20 {
        let mut services = sharing_set(&mut rng);
        services.truncate(2);
        let lead = &services[0];
        let mut joiner: VsiRecord = services[1].clone();
        joiner.slo.max_latency = lead.slo.max_latency * 0.3;

        let mut engine = roomy_engine();
        engine.register_vertical(lead.vertical_id.clone(), arbiter_core::Resources::new(1e6, 1e12, 1e9, 1e9)).unwrap();
        engine.arbitrate(ArbitrationRequest::new(lead.clone())).unwrap();
        let nsi = engine.nsis().values().next().unwrap().clone();

        let members = [ShareMember { id: &lead.id, graph: &lead.vnffg, max_latency: lead.slo.max_latency }];
        let join = ShareMember { id: &joiner.id, graph: &joiner.vnffg, max_latency: joiner.slo.max_latency };
        let ratio = (1e6, 1e12);
        let alloc = solve_shared(&nsi.shared_vnf_instances, &members, &join, ratio, 1e12, 1e6).unwrap();
        assert!((alloc.latency_bound - joiner.slo.max_latency).abs() < 1e-15, "round {round}");
        for m in members.iter().chain([&join]) {
            assert!(shared_delay(&alloc.states, m) <= alloc.latency_bound + 1e-6, "round {round}");
        }

        // Scan k on a grid; a point is feasible when the states the solver
        // would build at k meet the bound for both services.
        let hi = if alloc.scale > 0.0 { alloc.scale * 2.0 } else { continue };
        let steps = 200_000;
        let feasible = |k: f64| {
            let mut trial = alloc.clone();
            let probe = solve_shared_at(&nsi.shared_vnf_instances, &members, &join, ratio, k);
            trial.states = probe;
            members.iter().chain([&join]).all(|m| shared_delay(&trial.states, m) <= alloc.latency_bound)
        };
        let grid = (1..=steps).map(|i| hi * i as f64 / steps as f64).find(|k| feasible(*k)).unwrap();
        assert!((alloc.scale - grid).abs() / grid <= 1e-3, "round {round}: {} vs {}", alloc.scale, grid);
    }
}

/// Independent construction of the instance states at scale factor `k`:
/// surplus `max(k·Σf, floor)` per instance, link bandwidth
/// `max(k·Σf_l·B/C, floor)`, split in proportion to arrival rates.
fn solve_shared_at(
    floors: &std::collections::BTreeMap<arbiter_core::VnfId, arbiter_core::SharedVnfState>,
    members: &[ShareMember<'_, f64>],
    joining: &ShareMember<'_, f64>,
    ratio: (f64, f64),
    k: f64,
) -> std::collections::BTreeMap<arbiter_core::VnfId, arbiter_core::SharedVnfState> {
    use arbiter_core::model::ServiceRates;
    use std::collections::BTreeMap;
    let all: Vec<&ShareMember<'_, f64>> = members.iter().chain([joining]).collect();
    let mut out: BTreeMap<arbiter_core::VnfId, arbiter_core::SharedVnfState> = BTreeMap::new();
    let mut weights: BTreeMap<arbiter_core::VnfId, (f64, Vec<(VsiId, f64)>)> = BTreeMap::new();
    let mut links: BTreeMap<arbiter_core::LinkId, (arbiter_core::VnfId, f64)> = BTreeMap::new();
    for m in &all {
        for v in &m.graph.vnfs {
            let e = weights.entry(v.id.clone()).or_default();
            e.0 += v.compute_weight;
            e.1.push((m.id.clone(), v.arrival_rate));
        }
        for l in &m.graph.links {
            links.entry(l.id()).or_insert((l.source.clone(), 0.0)).1 += l.bandwidth_weight;
        }
    }
    for (id, (w, users)) in weights {
        let floor = floors.get(&id).map(|s| s.aggregate_surplus()).unwrap_or(0.0);
        let surplus = (k * w).max(floor);
        let total_lambda: f64 = users.iter().map(|u| u.1).sum();
        let even = users.iter().any(|u| u.1 == 0.0);
        let mut state = arbiter_core::SharedVnfState::new(id.clone());
        for (user, lambda) in &users {
            let share = if even { surplus / users.len() as f64 } else { surplus * lambda / total_lambda };
            state.per_service_rates.insert(user.clone(), ServiceRates { service_rate: lambda + share, arrival_rate: *lambda });
        }
        out.insert(id, state);
    }
    for (link, (source, phi)) in links {
        let floor = floors
            .get(&source)
            .and_then(|s| s.link_bandwidths.get(&link))
            .copied()
            .unwrap_or(0.0);
        let bw = (k * phi * ratio.1 / ratio.0).max(floor);
        out.get_mut(&source).unwrap().link_bandwidths.insert(link, bw);
    }
    out
}
