//! Few-shot sweep: every (proportion, seed) cell runs as its own worker
//! process; at most `jobs` run at a time.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::thread;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::cell::{CellSpec, DONE};
use crate::spec::ExperimentSpec;

pub const SWEEP_REPORT: &str = "sweep_report.json";
pub const WORKER_LOG: &str = "worker.log";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub proportion: f64,
    pub seed: u64,
    pub dir: PathBuf,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub variant: String,
    pub mode: String,
    pub cells: usize,
    pub skipped: usize,
    pub succeeded: usize,
    pub failed: Vec<CellFailure>,
}

/// Cells in proportion-major order.
pub fn plan(spec: &ExperimentSpec) -> Vec<CellSpec> {
    let seeds = spec.seed_list();
    spec.proportions
        .iter()
        .flat_map(|&p| seeds.iter().map(move |&s| (p, s)))
        .map(|(p, s)| CellSpec::new(spec, p, s))
        .collect()
}

pub fn is_done(cell: &CellSpec) -> bool {
    cell.dir().join(DONE).exists()
}

fn sweep_spec_path(spec: &ExperimentSpec) -> PathBuf {
    spec.out
        .join("sweeps")
        .join(format!("{}-{}.json", spec.variant.as_str(), spec.mode.as_str()))
}

fn run_worker(exe: &Path, spec_path: &Path, cell: &CellSpec) -> Result<()> {
    let dir = cell.dir();
    fs::create_dir_all(&dir)?;
    let log = fs::File::create(dir.join(WORKER_LOG))?;
    let status = Command::new(exe)
        .arg("train")
        .arg("--config")
        .arg(spec_path)
        .arg("--proportion")
        .arg(cell.proportion.to_string())
        .arg("--seed")
        .arg(cell.seed.to_string())
        .stdin(Stdio::null())
        .stdout(log.try_clone()?)
        .stderr(log)
        .status()
        .with_context(|| format!("spawning {}", exe.display()))?;
    if !status.success() {
        let tail = fs::read_to_string(dir.join(WORKER_LOG)).unwrap_or_default();
        let last = tail.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("no output");
        bail!("worker exited with {status}: {last}");
    }
    if !is_done(cell) {
        bail!("worker finished without a DONE marker");
    }
    Ok(())
}

/// Run every unfinished cell through `exe train`. Failures are collected,
/// not fatal; the caller decides the exit status.
pub fn cmd_sweep(spec: &ExperimentSpec, exe: &Path, jobs: usize) -> Result<SweepReport> {
    spec.validate()?;
    if !spec.prepared_dir().join(crate::prepare::MANIFEST).exists() {
        bail!("{} has no prepared data; run `argpet prepare` first", spec.out.display());
    }
    let spec_path = sweep_spec_path(spec);
    fs::create_dir_all(spec_path.parent().expect("has parent"))?;
    fs::write(&spec_path, spec.to_json()?)?;

    let cells = plan(spec);
    let total = cells.len();
    let pending: VecDeque<CellSpec> = cells.into_iter().filter(|c| !is_done(c)).collect();
    let skipped = total - pending.len();
    let queue = Mutex::new(pending);
    let failures = Mutex::new(Vec::new());
    let succeeded = Mutex::new(0usize);
    thread::scope(|s| {
        for _ in 0..jobs.max(1) {
            s.spawn(|| loop {
                let Some(cell) = queue.lock().expect("queue lock").pop_front() else {
                    break;
                };
                match run_worker(exe, &spec_path, &cell) {
                    Ok(()) => {
                        eprintln!("done   p={} seed={}", cell.proportion, cell.seed);
                        *succeeded.lock().expect("counter lock") += 1;
                    }
                    Err(e) => {
                        eprintln!("FAILED p={} seed={}: {e:#}", cell.proportion, cell.seed);
                        failures.lock().expect("failure lock").push(CellFailure {
                            proportion: cell.proportion,
                            seed: cell.seed,
                            dir: cell.dir(),
                            message: format!("{e:#}"),
                        });
                    }
                }
            });
        }
    });
    let mut failed = failures.into_inner().expect("failure lock");
    failed.sort_by(|a, b| a.proportion.total_cmp(&b.proportion).then(a.seed.cmp(&b.seed)));
    let report = SweepReport {
        variant: spec.variant.as_str().to_string(),
        mode: spec.mode.as_str().to_string(),
        cells: total,
        skipped,
        succeeded: succeeded.into_inner().expect("counter lock"),
        failed,
    };
    let path = spec_path.with_file_name(format!("{}-{}.{SWEEP_REPORT}", report.variant, report.mode));
    fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}
