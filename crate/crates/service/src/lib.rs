//! Operational shell around the arbitration engine: scenario files, the
//! allocation report, durable records, configuration and the HTTP API.

pub mod api;
pub mod config;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod store;
