use arbiter_service::api::Service;
use arbiter_service::config::ServiceConfig;
use arbiter_service::store::Store;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn config(dir: &std::path::Path) -> ServiceConfig {
    ServiceConfig {
        store_dir: Some(dir.to_owned()),
        ..ServiceConfig::default()
    }
}

fn request(rng: &mut impl Rng, id: usize) -> String {
    let shared = rng.gen_bool(0.5);
    let first = if shared { "common".to_owned() } else { format!("f{id}") };
    let w = rng.gen_range(0.2..0.8);
    json!({
        "id": format!("r{id}"),
        "priority": rng.gen_range(0..3),
        "slo": {"max_latency": format!("{} ms", rng.gen_range(20..500)), "max_request_rate": "20 req/s"},
        "vnfs": [
            {"id": first, "compute_weight": w, "arrival_rate": format!("{} req/s", rng.gen_range(0..30))},
            {"id": format!("g{id}"), "compute_weight": 1.0 - w}
        ],
        "links": [{"from": first, "to": format!("g{id}"), "data_volume": format!("{} kbit", rng.gen_range(1..900)), "bandwidth_weight": 1.0}],
        "on_budget_shortfall": if rng.gen_bool(0.5) { json!("force") } else { json!("cancel") }
    })
    .to_string()
}

/// Drives `service` with a seeded sequence and returns every response body.
fn drive(service: &Service, rng: &mut impl Rng, ids: std::ops::Range<usize>) -> Vec<String> {
    let mut out = Vec::new();
    for id in ids {
        let vertical = ["a", "b"][rng.gen_range(0..2)];
        let text = match service.api_request_vsi(vertical, &request(rng, id)) {
            Ok((status, outcome)) => format!("{status} {}", serde_json::to_string(&outcome).unwrap()),
            Err(e) => format!("{} {}", e.status, e.error),
        };
        out.push(text);
        if rng.gen_bool(0.25) {
            let victim = format!("r{}", rng.gen_range(0..=id));
            out.push(match service.api_terminate_vsi(&victim) {
                Ok(t) => serde_json::to_string(&t).unwrap(),
                Err(e) => format!("{} {}", e.status, e.error),
            });
        }
    }
    out
}

fn register(service: &Service) {
    for (id, cpu) in [("a", "800 pkt/s"), ("b", "1500 pkt/s")] {
        service
            .api_register_vertical(
                &json!({"id": id, "priority": 1, "budget": {"cpu": cpu, "bandwidth": "1 Gbit/s", "memory": "1 GB", "storage": "1 GB"}})
                    .to_string(),
            )
            .unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn restored_state_answers_like_the_original(seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let original = Service::open(&config(dir.path())).unwrap();
        register(&original);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        drive(&original, &mut rng, 0..15);

        let restored = Service::open(&config(dir.path())).unwrap();
        prop_assert_eq!(
            serde_json::to_string(&restored.snapshot()).unwrap(),
            serde_json::to_string(&original.snapshot()).unwrap()
        );

        let mut a = rng.clone();
        let mut b = rng;
        let continued = drive(&original, &mut a, 15..30);
        let resumed = drive(&restored, &mut b, 15..30);
        prop_assert_eq!(continued, resumed);
    }
}

#[test]
fn journal_matches_engine_history() {
    let dir = tempfile::tempdir().unwrap();
    let service = Service::open(&config(dir.path())).unwrap();
    register(&service);
    drive(&service, &mut ChaCha8Rng::seed_from_u64(5), 0..10);
    let journal = Store::open(dir.path()).unwrap().journal().unwrap();
    assert_eq!(journal, service.snapshot().engine.journal().entries());
    for (i, entry) in journal.iter().enumerate() {
        assert_eq!(entry.seq, i as u64);
    }
}

#[test]
fn failed_mutations_leave_no_trace() {
    let dir = tempfile::tempdir().unwrap();
    let service = Service::open(&config(dir.path())).unwrap();
    register(&service);
    let before = Store::open(dir.path()).unwrap().journal().unwrap().len();
    assert!(service.api_terminate_vsi("ghost").is_err());
    assert!(service.api_request_vsi("a", "{\"id\": 1}").is_err());
    assert_eq!(Store::open(dir.path()).unwrap().journal().unwrap().len(), before);
}
