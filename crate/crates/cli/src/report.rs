//! Collect finished cells below a directory into per-run and aggregate CSVs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use argpet_core::evaluation::{
    aggregate_rows, aggregate_runs, feasibility_report, metrics_rows, write_csv, write_table6_csv, RunAggregate, RunKey,
};
use serde::{Deserialize, Serialize};

use crate::cell::{load_report, load_train_log, RunReport, DONE, RUN_REPORT};

pub const REPORT_DIR: &str = "report";

/// One point of the macro-F1 over proportion chart: single runs are
/// `run` rows, the condition mean a `mean` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartRow {
    pub variant: String,
    pub mode: String,
    pub persons: String,
    pub labels: String,
    pub proportion: f64,
    pub kind: String,
    pub seed: Option<u64>,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub runs: usize,
    pub conditions: usize,
    pub files: Vec<PathBuf>,
}

fn find_runs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if dir.join(RUN_REPORT).is_file() && dir.join(DONE).exists() {
        out.push(dir.to_path_buf());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    for e in entries {
        find_runs(&e, out)?;
    }
    Ok(())
}

fn condition(k: &RunKey) -> (String, String, String, String, u64) {
    (k.persons.clone(), k.labels.clone(), k.variant.clone(), k.mode.clone(), k.proportion.to_bits())
}

/// Scan `dir` recursively for finished cells and write `report/` below it.
pub fn cmd_report(dir: &Path) -> Result<ReportSummary> {
    let mut dirs = Vec::new();
    if dir.is_dir() {
        find_runs(dir, &mut dirs)?;
    }
    if dirs.is_empty() {
        bail!("no finished runs below {}", dir.display());
    }
    let mut runs: Vec<(PathBuf, RunReport)> = dirs
        .into_iter()
        .map(|d| load_report(&d).map(|r| (d, r)))
        .collect::<Result<_>>()?;
    runs.sort_by(|(_, a), (_, b)| {
        condition(&a.key)
            .cmp(&condition(&b.key))
            .then(a.key.proportion.total_cmp(&b.key.proportion))
            .then(a.key.seed.cmp(&b.key.seed))
    });

    let out = dir.join(REPORT_DIR);
    fs::create_dir_all(&out)?;
    let mut files = Vec::new();

    let rows: Vec<_> = runs.iter().flat_map(|(_, r)| metrics_rows(&r.key, &r.metrics, Some(&r.stance3))).collect();
    files.push(out.join("metrics.csv"));
    write_csv(files.last().expect("pushed"), &rows)?;

    let mut groups: BTreeMap<_, (RunKey, Vec<&RunReport>)> = BTreeMap::new();
    for (_, r) in &runs {
        groups.entry(condition(&r.key)).or_insert_with(|| (r.key.clone(), Vec::new())).1.push(r);
    }
    let mut aggregates: Vec<(RunKey, RunAggregate)> = Vec::new();
    let mut chart = Vec::new();
    for (key, members) in groups.values() {
        for r in members {
            chart.push(ChartRow {
                variant: key.variant.clone(),
                mode: key.mode.clone(),
                persons: key.persons.clone(),
                labels: key.labels.clone(),
                proportion: key.proportion,
                kind: "run".into(),
                seed: Some(r.key.seed),
                macro_f1: r.metrics.macro_f1,
            });
        }
        let tables: Vec<_> = members.iter().map(|r| r.metrics.clone()).collect();
        let mean = tables.iter().map(|t| t.macro_f1).sum::<f64>() / tables.len() as f64;
        chart.push(ChartRow {
            variant: key.variant.clone(),
            mode: key.mode.clone(),
            persons: key.persons.clone(),
            labels: key.labels.clone(),
            proportion: key.proportion,
            kind: "mean".into(),
            seed: None,
            macro_f1: mean,
        });
        // Mean ± std needs at least two runs.
        if tables.len() >= 2 {
            aggregates.push((key.clone(), aggregate_runs(&tables)?));
        }
    }
    let agg_rows: Vec<_> = aggregates.iter().flat_map(|(k, a)| aggregate_rows(k, a)).collect();
    files.push(out.join("aggregate.csv"));
    write_csv(files.last().expect("pushed"), &agg_rows)?;
    files.push(out.join("table6.csv"));
    write_table6_csv(files.last().expect("pushed"), &aggregates)?;
    files.push(out.join("macro_f1_by_proportion.csv"));
    write_csv(files.last().expect("pushed"), &chart)?;

    let mut logs = Vec::new();
    for (d, r) in &runs {
        if let Ok(log) = load_train_log(d) {
            logs.push((r, log));
        }
    }
    let feas_input: Vec<_> = logs
        .iter()
        .map(|(r, log)| (r.key.variant.as_str(), log, &r.parameters, r.checkpoint_bytes))
        .collect();
    files.push(out.join("feasibility.csv"));
    write_csv(files.last().expect("pushed"), &feasibility_report(&feas_input))?;

    Ok(ReportSummary {
        runs: runs.len(),
        conditions: groups.len(),
        files,
    })
}
