//! File formats, command line and HTTP service around `hsgd-core`.
//!
//! * [`dsl`]: the line-oriented model language, with located diagnostics
//!   and a canonical writer.
//! * [`ingest`]: monitoring CSV and its conversion into actual dynamics.
//! * [`export`]: byte-deterministic JSON.
//! * [`workspace`]: a checked model and the operations run against it.
//! * [`service`] and [`cli`]: the two front ends.

pub mod cli;
pub mod dsl;
pub mod export;
pub mod ingest;
pub mod service;
pub mod workspace;

pub use dsl::{parse_model, write_model, Diagnostic, ModelDocument};
pub use export::{export_report, export_trajectory, to_canonical_json};
pub use ingest::{ingest_monitoring, read_monitoring, IngestError, IngestReport, MonitoringRecord};
pub use workspace::{model_hash, OpError, Workspace};

/// Reported with every service response and every exported run.
pub const ENGINE_VERSION: &str = concat!("hsgd ", env!("CARGO_PKG_VERSION"));
