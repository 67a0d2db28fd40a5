//! Run orchestration and artifact persistence.
//!
//! Tasks are scheduled on the rayon pool and collected in configuration order.
//! Every artifact is a pure function of the configuration (minus the output
//! location): no timestamps, host names or timings are written, so a rerun with
//! the same seed is byte-identical.

use crate::config::{Format, RunConfig};
use crate::tasks::{run_task, TaskOutput};
use curvedflow::record::{hex, VerificationRecord};
use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Version of the CSV and JSON layouts, recorded in the manifest.
pub const SCHEMA_VERSION: u32 = 1;

/// Result of a completed run.
#[derive(Debug)]
pub struct RunSummary {
    pub directory: PathBuf,
    pub outputs: Vec<TaskOutput>,
    /// Files written, relative to `directory`, in writing order.
    pub files: Vec<String>,
}

impl RunSummary {
    /// Total number of failed records.
    pub fn failures(&self) -> usize {
        self.outputs.iter().map(TaskOutput::failures).sum()
    }

    /// 0 if no record failed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        i32::from(self.failures() > 0)
    }
}

/// Execute every task of a validated configuration and write its artifacts.
pub fn run(cfg: &RunConfig) -> std::io::Result<RunSummary> {
    let outputs: Vec<TaskOutput> = cfg.task.run.par_iter().map(|&t| run_task(cfg, t)).collect();
    let dir = cfg.output_dir();
    write_artifacts(cfg, &dir, outputs)
}

fn csv_text(header: &str, rows: &[String]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(header);
    s.push('\n');
    for r in rows {
        s.push_str(r);
        s.push('\n');
    }
    s
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

/// Write records, tables, summaries and the manifest of `outputs` into `dir`.
pub fn write_artifacts(cfg: &RunConfig, dir: &Path, outputs: Vec<TaskOutput>) -> std::io::Result<RunSummary> {
    std::fs::create_dir_all(dir)?;
    let csv = cfg.output.formats.contains(&Format::Csv);
    let json_out = cfg.output.formats.contains(&Format::Json);
    let mut files: Vec<(String, String)> = Vec::new();
    for out in &outputs {
        let name = out.task.name();
        if csv {
            let (header, rows) = out.records_csv();
            files.push((format!("{name}.csv"), csv_text(&header, &rows)));
            for t in &out.tables {
                files.push((format!("{name}_{}.csv", t.suffix), csv_text(&t.header, &t.rows)));
            }
        }
        if json_out {
            let v = json!({ "task": name, "seed": out.seed, "records": out.records, "data": out.data });
            files.push((format!("{name}.json"), pretty(&v)));
        }
    }
    let tasks: Vec<_> = outputs
        .iter()
        .map(|o| {
            json!({
                "task": o.task.name(),
                "seed": o.seed,
                "records": o.records.len(),
                "failed": o.failures(),
                "record_names": o.records.iter().map(|r| r.name.clone()).collect::<Vec<_>>(),
            })
        })
        .collect();
    let failed: usize = outputs.iter().map(TaskOutput::failures).sum();
    if json_out {
        let total: usize = outputs.iter().map(|o| o.records.len()).sum();
        files.push(("summary.json".into(), pretty(&json!({ "records": total, "failed": failed, "tasks": tasks }))));
    }
    for (name, text) in &files {
        std::fs::write(dir.join(name), text)?;
    }
    let listing: Vec<_> = files
        .iter()
        .map(|(name, text)| json!({ "path": name, "bytes": text.len(), "sha256": hex(&Sha256::digest(text.as_bytes())) }))
        .collect();
    let manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "record_csv_header": VerificationRecord::csv_header(),
        "config_digest": cfg.digest(),
        "seed": cfg.numeric.seed,
        "status": if failed == 0 { "pass" } else { "fail" },
        "tasks": tasks,
        "files": listing,
    });
    std::fs::write(dir.join("manifest.json"), pretty(&manifest))?;
    let mut names: Vec<String> = files.into_iter().map(|(n, _)| n).collect();
    names.push("manifest.json".into());
    Ok(RunSummary { directory: dir.to_path_buf(), outputs, files: names })
}
