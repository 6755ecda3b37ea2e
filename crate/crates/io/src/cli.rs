//! The `hsgd` command line. Exit codes: 0 success or confirmed, 1 validation
//! failure or refuted, 2 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use hsgd_core::planner::{Budgets, PlannerError};
use hsgd_core::scenario::{compare, Verdict};
use hsgd_core::{DiagramId, ScenarioReport, Tick};
use serde_json::{json, Value};

use crate::export::to_canonical_json;
use crate::ingest::{ingest_monitoring, read_monitoring};
use crate::service::{serve, AppState};
use crate::workspace::{OpError, RunOutcome, Workspace};
use crate::ENGINE_VERSION;

pub const OK: i32 = 0;
pub const FAILED: i32 = 1;
pub const USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "hsgd", version, about = "Hierarchical state graph diagram engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and check a model file.
    Validate { model: PathBuf },
    /// Run a declared scenario and write its report.
    Run {
        model: PathBuf,
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        horizon: Option<Tick>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run without control input.
    Inertial {
        model: PathBuf,
        #[arg(long)]
        horizon: Tick,
    },
    /// Count monitoring samples against the model's diagrams.
    Ingest { model: PathBuf, monitoring: PathBuf },
    /// Pareto-optimal rule chains between two states.
    Plan {
        model: PathBuf,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long)]
        max_resource: Option<f64>,
        #[arg(long)]
        max_time: Option<Tick>,
        /// Rule base to search when the model declares several.
        #[arg(long)]
        diagram: Option<String>,
    },
    /// Rank saved run reports.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Serve the HTTP interface.
    Serve {
        #[arg(long)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Model loaded at start-up.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

/// Runs one invocation, writing results to `out` and problems to `err`.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                USAGE
            } else {
                let _ = write!(out, "{text}");
                OK
            };
        }
    };
    match execute(cli.command, out, err) {
        Ok(code) => code,
        Err((code, message)) => {
            let _ = writeln!(err, "error: {message}");
            code
        }
    }
}

type Outcome = Result<i32, (i32, String)>;

fn read(path: &Path) -> Result<String, (i32, String)> {
    std::fs::read_to_string(path).map_err(|e| (USAGE, format!("cannot read {}: {e}", path.display())))
}

fn load(path: &Path, err: &mut dyn Write) -> Result<Workspace, (i32, String)> {
    let text = read(path)?;
    Workspace::load(&text).map_err(|diagnostics| {
        for d in &diagnostics {
            let _ = writeln!(err, "{}:{d}", path.display());
        }
        (FAILED, format!("{} is not a valid model", path.display()))
    })
}

fn emit(out: &mut dyn Write, text: &str) -> Outcome {
    out.write_all(text.as_bytes()).map_err(|e| (FAILED, format!("cannot write output: {e}")))?;
    Ok(OK)
}

fn op_code(e: &OpError) -> i32 {
    match e {
        OpError::UnknownScenario(_)
        | OpError::InvalidHorizon(_)
        | OpError::NoRules
        | OpError::AmbiguousRules(_)
        | OpError::UnknownRules(_) => USAGE,
        OpError::Scenario(_) | OpError::Planner(_) => FAILED,
    }
}

fn run_document(ws: &Workspace, outcome: &RunOutcome) -> String {
    to_canonical_json(&json!({
        "engine_version": ENGINE_VERSION,
        "model_hash": ws.hash,
        "report": outcome.report,
        "trajectory": outcome.trajectory,
        "verdict": outcome.verdict,
    }))
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match command {
        Command::Validate { model } => {
            let text = read(&model)?;
            match Workspace::load(&text) {
                Ok(ws) => {
                    for w in &ws.warnings {
                        let _ = writeln!(out, "{}:{w}", model.display());
                    }
                    emit(out, &format!("ok {} {}\n", ws.model.name, ws.hash))
                }
                Err(diagnostics) => {
                    for d in &diagnostics {
                        let _ = writeln!(out, "{}:{d}", model.display());
                    }
                    Ok(FAILED)
                }
            }
        }
        Command::Run { model, scenario, horizon, out: target } => {
            let ws = load(&model, err)?;
            let outcome = ws.run_named(&scenario, horizon).map_err(|e| (op_code(&e), e.to_string()))?;
            let text = run_document(&ws, &outcome);
            match target {
                Some(path) => std::fs::write(&path, text.as_bytes())
                    .map_err(|e| (FAILED, format!("cannot write {}: {e}", path.display())))?,
                None => {
                    emit(out, &text)?;
                }
            }
            match &outcome.verdict {
                Some(Verdict::Refuted(by)) => {
                    let _ = writeln!(err, "refuted: {by:?}");
                    Ok(FAILED)
                }
                _ => Ok(OK),
            }
        }
        Command::Inertial { model, horizon } => {
            let ws = load(&model, err)?;
            let outcome = ws.inertial(horizon).map_err(|e| (op_code(&e), e.to_string()))?;
            emit(out, &run_document(&ws, &outcome))
        }
        Command::Ingest { model, monitoring } => {
            let ws = load(&model, err)?;
            let file = std::fs::File::open(&monitoring)
                .map_err(|e| (USAGE, format!("cannot read {}: {e}", monitoring.display())))?;
            let records = read_monitoring(file).map_err(|e| (FAILED, e.to_string()))?;
            let report = ingest_monitoring(&records, &ws.model, &ws.document.classifiers)
                .map_err(|e| (FAILED, e.to_string()))?;
            emit(
                out,
                &to_canonical_json(&json!({
                    "engine_version": ENGINE_VERSION,
                    "model_hash": ws.hash,
                    "ingest": report,
                })),
            )
        }
        Command::Plan { model, from, to, max_resource, max_time, diagram } => {
            let ws = load(&model, err)?;
            let budgets = Budgets { resource: max_resource, time: max_time };
            let diagram = diagram.map(DiagramId::from);
            let outcome = ws.plan(diagram.as_ref(), &from.into(), &to.into(), budgets).map_err(|e| match e {
                OpError::Planner(PlannerError::NoPlanExists(s)) => (FAILED, format!("no rule mentions state {s}")),
                e => (op_code(&e), e.to_string()),
            })?;
            let mut doc = json!(outcome);
            doc["engine_version"] = json!(ENGINE_VERSION);
            doc["model_hash"] = json!(ws.hash);
            emit(out, &to_canonical_json(&doc))
        }
        Command::Compare { reports } => {
            let mut loaded: Vec<ScenarioReport> = Vec::with_capacity(reports.len());
            for path in &reports {
                let text = read(path)?;
                let doc: Value = serde_json::from_str(&text)
                    .map_err(|e| (FAILED, format!("{} is not JSON: {e}", path.display())))?;
                let report = doc.get("report").cloned().unwrap_or(doc);
                loaded.push(
                    serde_json::from_value(report)
                        .map_err(|e| (FAILED, format!("{} holds no run report: {e}", path.display())))?,
                );
            }
            let ranking = compare(&loaded).map_err(|e| (FAILED, e.to_string()))?;
            emit(out, &to_canonical_json(&json!({ "engine_version": ENGINE_VERSION, "ranking": ranking })))
        }
        Command::Serve { port, host, model } => {
            let state = match model {
                Some(path) => AppState::with_workspace(load(&path, err)?),
                None => AppState::default(),
            };
            let runtime = tokio::runtime::Runtime::new().map_err(|e| (FAILED, e.to_string()))?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                    .await
                    .map_err(|e| (USAGE, format!("cannot listen on {host}:{port}: {e}")))?;
                let addr = listener.local_addr().map_err(|e| (FAILED, e.to_string()))?;
                let _ = writeln!(out, "listening on http://{addr}");
                let _ = out.flush();
                serve(listener, state).await.map_err(|e| (FAILED, e.to_string()))?;
                Ok(OK)
            })
        }
    }
}
