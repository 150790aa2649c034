//! Grid search for per-VNF rates and link volumes of the bundled reference
//! scenario. Prints the best parameterization found for each service and the
//! flavour it produces.
//!
//!     cargo run -p arbiter-core --example calibrate_reference --release

use arbiter_core::solver::build_flavour;
use arbiter_core::{DeploymentFlavour, Resources, Slo, Tolerance, VirtualLinkSpec, VnfSpec, Vnffg};

const C: f64 = 10_000.0;
const B: f64 = 10e9;

struct Target {
    cpu: (f64, f64),
    bandwidth_max: f64,
}

fn score(f: &DeploymentFlavour, t: &Target) -> Option<f64> {
    let inside = f.cpu_min >= t.cpu.0 && f.cpu_max <= t.cpu.1 && f.bandwidth_max <= t.bandwidth_max;
    inside.then(|| (f.cpu_min - t.cpu.0).abs() + (t.cpu.1 - f.cpu_max).abs())
}

fn volumes() -> impl Iterator<Item = f64> {
    (0..=60).map(|k| 1e4 * 1.2f64.powi(k))
}

fn ica(lambda_side: f64, lambda_detector: f64, volume: f64, weight: f64) -> Vnffg {
    Vnffg::new(
        vec![
            VnfSpec::new("ica-receiver", 0.05, lambda_side),
            VnfSpec::new("ica-database", 0.05, lambda_side),
            VnfSpec::new("ica-detector", 0.9, lambda_detector),
        ],
        vec![
            VirtualLinkSpec::new("ica-receiver", "ica-detector", volume, weight),
            VirtualLinkSpec::new("ica-detector", "ica-database", volume, weight),
        ],
    )
}

fn ms(lambda_cache: f64, lambda_web: f64, volume: f64) -> Vnffg {
    Vnffg::new(
        vec![
            VnfSpec::new("ms-cache", 0.95, lambda_cache),
            VnfSpec::new("ms-web", 0.05, lambda_web),
        ],
        vec![VirtualLinkSpec::new("ms-web", "ms-cache", volume, 1.0)],
    )
}

fn main() {
    let tol = Tolerance::default();
    let budget = Resources::new(C, B, 1e12, 1e12);

    let ica_slo = Slo::new(0.020, 60.0);
    let ica_target = Target {
        cpu: (2835.0, 2908.0),
        bandwidth_max: 2.91e9,
    };
    let mut best_ica: Option<(f64, (f64, f64, f64, f64), DeploymentFlavour)> = None;
    let mut tried = 0usize;
    for side in (0..=60).map(f64::from) {
        for detector in [60.0] {
            for weight in [0.25, 0.5, 1.0] {
                for volume in volumes() {
                    tried += 1;
                    let g = ica(side, detector, volume, weight);
                    let Ok(f) = build_flavour(&g, &ica_slo, &budget, (C, B), &tol) else {
                        continue;
                    };
                    if let Some(s) = score(&f, &ica_target) {
                        if best_ica.as_ref().map_or(true, |b| s < b.0) {
                            best_ica = Some((s, (side, detector, volume, weight), f));
                        }
                    }
                }
            }
        }
    }
    println!("ICA: {tried} points");
    let Some((s, (side, detector, volume, weight), ica_flavour)) = best_ica else {
        println!("  no parameterization lands inside the published intervals");
        return;
    };
    println!(
        "  lambda receiver/database = {side}/s, detector = {detector}/s, link volume = {volume:.1} bit, link weight = {weight}"
    );
    println!(
        "  cpu [{:.3}, {:.3}] packets/s, bandwidth [0, {:.6}] Gbit/s, score {s:.3}",
        ica_flavour.cpu_min,
        ica_flavour.cpu_max,
        ica_flavour.bandwidth_max / 1e9
    );

    let remaining = budget - ica_flavour.worst_case();
    let ratio = (remaining.cpu, remaining.bandwidth);
    let ms_slo = Slo::new(5.0, 6.0);
    let ms_target = Target {
        cpu: (124.0, 125.0),
        bandwidth_max: 0.17e9,
    };
    let mut best_ms: Option<(f64, (f64, f64, f64), DeploymentFlavour)> = None;
    tried = 0;
    for cache in (1..=12).map(|k| k as f64 * 0.5) {
        for web in (10..=12).map(|k| k as f64 * 0.5) {
            for volume in volumes().chain((0..=40).map(|k| 1e7 * 1.1f64.powi(k))) {
                tried += 1;
                let g = ms(cache, web, volume);
                let Ok(f) = build_flavour(&g, &ms_slo, &remaining, ratio, &tol) else {
                    continue;
                };
                if let Some(s) = score(&f, &ms_target) {
                    if best_ms.as_ref().map_or(true, |b| s < b.0) {
                        best_ms = Some((s, (cache, web, volume), f));
                    }
                }
            }
        }
    }
    println!("MS: {tried} points");
    match best_ms {
        Some((s, (cache, web, volume), f)) => {
            println!("  lambda cache = {cache}/s, web = {web}/s, link volume = {volume:.1} bit");
            println!(
                "  cpu [{:.3}, {:.3}] packets/s, bandwidth [0, {:.6}] Gbit/s, score {s:.3}",
                f.cpu_min,
                f.cpu_max,
                f.bandwidth_max / 1e9
            );
        }
        None => println!("  no parameterization lands inside the published intervals"),
    }
}
