//! Runs a scenario against a fresh engine and pool.

use std::fmt;
use std::time::Instant;

use arbiter_core::engine::{Engine, EngineConfig, EngineError};
use arbiter_core::orchestrator::InfrastructurePool;
use arbiter_core::units::{format_quantity, Dimension};
use arbiter_core::{VsiId, VsiState};
use serde::Serialize;
use thiserror::Error;

use crate::report::{AllocationReport, OutcomeReport, ReportError, TerminationReport};
use crate::scenario::{Expectation, Scenario};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot register vertical `{id}`: {source}")]
    Register { id: String, source: EngineError },
    #[error(transparent)]
    Report(#[from] ReportError),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the scenario's seed.
    pub seed: Option<u64>,
    pub timings: bool,
}

/// One expected value that the run did not reproduce.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub vsi_id: VsiId,
    pub field: &'static str,
    pub expected: String,
    pub actual: String,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{}\n  - expected: {}\n  + actual:   {}",
            self.vsi_id, self.field, self.expected, self.actual
        )
    }
}

pub struct RunOutput {
    pub engine: Engine,
    pub report: AllocationReport,
    pub mismatches: Vec<Mismatch>,
}

pub fn run(scenario: &Scenario, options: &RunOptions) -> Result<RunOutput, RunError> {
    let seed = options.seed.unwrap_or(scenario.seed);
    let mut engine = Engine::new(
        InfrastructurePool::new(scenario.pool.clone()),
        EngineConfig {
            tolerance: scenario.tolerance,
        },
    );
    for v in &scenario.verticals {
        engine
            .register_vertical(v.id.clone(), v.budget)
            .map_err(|source| RunError::Register {
                id: v.id.to_string(),
                source,
            })?;
    }

    let start = Instant::now();
    let results = engine.arbitrate_batch(scenario.requests.clone(), seed);
    let elapsed = start.elapsed().as_secs_f64();
    let outcomes: Vec<OutcomeReport> = results
        .iter()
        .map(|(id, r)| match r {
            Ok(outcome) => OutcomeReport::from(outcome),
            Err(e) => OutcomeReport::error(id.clone(), e.to_string()),
        })
        .collect();

    let terminations = scenario
        .terminations
        .iter()
        .map(|id| TerminationReport::from_result(id.clone(), &engine.terminate(id)))
        .collect();

    let report = AllocationReport::build(
        &engine,
        seed,
        outcomes,
        terminations,
        options.timings.then_some(elapsed),
    )?;
    let mismatches = compare(scenario, &engine, &report);
    Ok(RunOutput {
        engine,
        report,
        mismatches,
    })
}

fn state_name(state: VsiState) -> String {
    serde_json::to_value(state)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn range_text(range: (f64, f64), dimension: Dimension) -> String {
    format!(
        "within [{}, {}]",
        format_quantity(range.0, dimension),
        format_quantity(range.1, dimension)
    )
}

fn check_range(
    out: &mut Vec<Mismatch>,
    vsi_id: &VsiId,
    field: &'static str,
    expected: Option<(f64, f64)>,
    actual: Option<(f64, f64)>,
    dimension: Dimension,
) {
    let Some(expected) = expected else { return };
    let ok = actual.is_some_and(|(lo, hi)| lo >= expected.0 && hi <= expected.1);
    if !ok {
        out.push(Mismatch {
            vsi_id: vsi_id.clone(),
            field,
            expected: range_text(expected, dimension),
            actual: match actual {
                Some((lo, hi)) => format!(
                    "[{}, {}]",
                    format_quantity(lo, dimension),
                    format_quantity(hi, dimension)
                ),
                None => "no flavour".to_owned(),
            },
        });
    }
}

/// Compares the run with the scenario's expected outcomes. Ranges pass
/// when the flavour's interval lies inside the expected one.
pub fn compare(scenario: &Scenario, engine: &Engine, report: &AllocationReport) -> Vec<Mismatch> {
    let mut out = Vec::new();
    for (vsi_id, expectation) in &scenario.expected {
        let Expectation {
            decision,
            state,
            cpu_within,
            bandwidth_within,
        } = expectation;
        let outcome = report.outcomes.iter().find(|o| &o.vsi_id == vsi_id);
        if let Some(decision) = decision {
            let actual = outcome.map_or("none", |o| o.decision.as_str());
            if actual != decision {
                out.push(Mismatch {
                    vsi_id: vsi_id.clone(),
                    field: "decision",
                    expected: decision.clone(),
                    actual: actual.to_owned(),
                });
            }
        }
        let record = engine.vsi(vsi_id);
        if let Some(state) = state {
            let actual = record.map_or_else(|| "none".to_owned(), |r| state_name(r.state));
            if &actual != state {
                out.push(Mismatch {
                    vsi_id: vsi_id.clone(),
                    field: "state",
                    expected: state.clone(),
                    actual,
                });
            }
        }
        let flavour = record.and_then(|r| r.flavour);
        check_range(
            &mut out,
            vsi_id,
            "cpu",
            *cpu_within,
            flavour.map(|f| (f.cpu_min, f.cpu_max)),
            Dimension::PacketRate,
        );
        check_range(
            &mut out,
            vsi_id,
            "bandwidth",
            *bandwidth_within,
            flavour.map(|f| (f.bandwidth_min, f.bandwidth_max)),
            Dimension::Bandwidth,
        );
    }
    out
}
