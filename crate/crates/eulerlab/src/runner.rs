//! Scenario execution, output files and run manifests.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::scenario::{Outcome, Overrides, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_EARLY: i32 = 4;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "EULERLAB_WORKERS";

/// Sizes the global worker pool from `EULERLAB_WORKERS`; returns the pool size.
pub fn init_workers() -> usize {
    if let Some(n) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0) {
        // a second initialization keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    rayon::current_num_threads()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
pub struct Request {
    pub scenarios: Vec<PathBuf>,
    pub out: PathBuf,
    /// Task the subcommand expects; `None` accepts any.
    pub expected_task: Option<String>,
    pub overrides: Overrides,
}

/// Per-scenario result as reported on stderr and in the exit code.
#[derive(Debug, Clone)]
pub struct Report {
    pub scenario: PathBuf,
    pub code: i32,
    pub message: String,
}

/// Runs every scenario; several scenarios run concurrently and write to `out/<name>`.
pub fn execute(req: &Request) -> (i32, Vec<Report>) {
    let nested = req.scenarios.len() > 1;
    let reports: Vec<Report> = req.scenarios.par_iter().map(|path| execute_one(path, req, nested)).collect();
    let code = reports.iter().map(|r| r.code).max().unwrap_or(EXIT_OK);
    (code, reports)
}

fn schema_error(path: &Path, message: String) -> Report {
    Report { scenario: path.to_path_buf(), code: EXIT_SCHEMA, message }
}

fn execute_one(path: &Path, req: &Request, nested: bool) -> Report {
    let start = Instant::now();
    let text = match fs::read(path) {
        Ok(t) => t,
        Err(e) => return schema_error(path, format!("cannot read scenario: {e}")),
    };
    let raw: Value = match serde_json::from_slice(&text) {
        Ok(v) => v,
        Err(e) => return schema_error(path, format!("malformed JSON: {e}")),
    };
    let scenario: Scenario = match serde_json::from_value(raw.clone()) {
        Ok(s) => s,
        Err(e) => return schema_error(path, format!("schema error: {e}")),
    };
    if let Some(task) = &req.expected_task {
        if scenario.task.name() != task {
            return schema_error(path, format!("scenario task is `{}`, not `{task}`", scenario.task.name()));
        }
    }
    if let Some(t) = req.overrides.tol {
        if !(t > 0.0) || !t.is_finite() {
            return schema_error(path, format!("tolerance {t} must be positive"));
        }
    }
    let result = scenario.run(&req.overrides);
    let (code, outcome, error) = match result {
        Ok(o) if o.event.is_some() => (EXIT_EARLY, Some(o), None),
        Ok(o) => (EXIT_OK, Some(o), None),
        Err(e @ (Error::Argument(_) | Error::Domain(_))) => return schema_error(path, format!("invalid scenario: {e}")),
        Err(e) => (EXIT_NUMERICAL, None, Some(e)),
    };
    let dir = if nested { req.out.join(&scenario.name) } else { req.out.clone() };
    let written = write_outputs(&dir, path, &text, raw, &scenario, req, code, outcome.as_ref(), error.as_ref(), start);
    let message = match (&written, &error) {
        (Err(e), _) => return Report { scenario: path.to_path_buf(), code: EXIT_NUMERICAL, message: format!("cannot write outputs: {e}") },
        (_, Some(e)) => format!("numerical failure: {e}"),
        _ if code == EXIT_EARLY => "early termination".to_string(),
        _ => "ok".to_string(),
    };
    Report { scenario: path.to_path_buf(), code, message: format!("{message} ({})", dir.display()) }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "domain",
        Error::Argument(_) => "argument",
        Error::Convergence(_) => "convergence",
        Error::Construction(_) => "construction",
        Error::Singular(_) => "singular",
        Error::Stiffness(_) => "stiffness",
        Error::Size(_) => "size",
        Error::Conservation(_) => "conservation",
        Error::Unsupported(_) => "unsupported",
    }
}

#[allow(clippy::too_many_arguments)]
fn write_outputs(
    dir: &Path,
    path: &Path,
    text: &[u8],
    raw: Value,
    scenario: &Scenario,
    req: &Request,
    code: i32,
    outcome: Option<&Outcome>,
    error: Option<&Error>,
    start: Instant,
) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut files = vec![];
    if let Some(o) = outcome {
        for (name, bytes) in &o.files {
            fs::write(dir.join(name), bytes)?;
            files.push(json!({ "path": name, "sha256": sha256_hex(bytes), "bytes": bytes.len() }));
        }
    }
    let status = match code {
        EXIT_OK => "ok",
        EXIT_EARLY => "early_termination",
        _ => "numerical_failure",
    };
    let mut manifest = json!({
        "name": scenario.name,
        "task": scenario.task.name(),
        "status": status,
        "exit_code": code,
        "scenario": { "path": path.display().to_string(), "sha256": sha256_hex(text), "input": raw },
        "overrides": { "seed": req.overrides.seed, "tol": req.overrides.tol },
        "seed": scenario.seed(&req.overrides),
        "versions": { "eulerlab": env!("CARGO_PKG_VERSION"), "manifest": 1 },
        "platform": { "os": std::env::consts::OS, "arch": std::env::consts::ARCH },
        "workers": rayon::current_num_threads(),
        "files": files,
        "diagnostics": outcome.map(|o| o.diagnostics.clone()).unwrap_or(Value::Null),
    });
    if let Some(ev) = outcome.and_then(|o| o.event.clone()) {
        manifest["event"] = ev;
    }
    if let Some(e) = error {
        manifest["error"] = json!({ "kind": error_kind(e), "message": e.to_string() });
    }
    manifest["wall_time_s"] = json!(start.elapsed().as_secs_f64());
    let body = serde_json::to_vec_pretty(&manifest).map_err(std::io::Error::other)?;
    fs::write(dir.join("manifest.json"), body)
}
