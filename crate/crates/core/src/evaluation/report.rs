use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::aggregate::{MeanStd, RunAggregate};
use super::stance::Stance3;
use super::MetricsTable;
use crate::corpus::Label;
use crate::error::Result;
use crate::model::ParameterReport;
use crate::training::TrainLog;

/// Class-name prefix for rows of the collapsed 3-class evaluation.
pub const STANCE3_PREFIX: &str = "stance3:";

/// Identifies one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunKey {
    pub variant: String,
    /// Few-shot sampling mode, `stratified` or `tfs`.
    pub mode: String,
    pub persons: String,
    pub labels: String,
    pub proportion: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: String,
    pub mode: String,
    pub persons: String,
    pub labels: String,
    pub proportion: f64,
    pub seed: u64,
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub support: u64,
}

/// One row per class of the 5-class table, then one per class of the
/// optional 3-class table (prefixed), whose rows carry the 3-class
/// accuracy and macro-F1.
pub fn metrics_rows(key: &RunKey, five: &MetricsTable, three: Option<&MetricsTable>) -> Vec<MetricsRow> {
    let row = |class: String, t: &MetricsTable, i: usize| MetricsRow {
        variant: key.variant.clone(),
        mode: key.mode.clone(),
        persons: key.persons.clone(),
        labels: key.labels.clone(),
        proportion: key.proportion,
        seed: key.seed,
        class,
        precision: t.classes[i].precision,
        recall: t.classes[i].recall,
        f1: t.classes[i].f1,
        accuracy: t.accuracy,
        macro_f1: t.macro_f1,
        support: t.classes[i].support,
    };
    let mut rows: Vec<MetricsRow> = Label::ALL.iter().map(|l| row(l.as_str().into(), five, l.index())).collect();
    if let Some(t) = three {
        rows.extend(Stance3::ALL.iter().map(|s| row(format!("{STANCE3_PREFIX}{}", s.as_str()), t, s.index())));
    }
    rows
}

/// Tidy aggregate: one row per condition and metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub variant: String,
    pub mode: String,
    pub persons: String,
    pub labels: String,
    pub proportion: f64,
    pub runs: usize,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

fn metric_list(a: &RunAggregate) -> Vec<(String, MeanStd)> {
    let mut out = vec![("macro_f1".to_string(), a.macro_f1), ("accuracy".to_string(), a.accuracy)];
    for (l, c) in Label::ALL.iter().zip(&a.classes) {
        out.push((format!("{}:f1", l.as_str()), c.f1));
        out.push((format!("{}:precision", l.as_str()), c.precision));
        out.push((format!("{}:recall", l.as_str()), c.recall));
    }
    out
}

/// `key.seed` is ignored.
pub fn aggregate_rows(key: &RunKey, a: &RunAggregate) -> Vec<AggregateRow> {
    metric_list(a)
        .into_iter()
        .map(|(metric, m)| AggregateRow {
            variant: key.variant.clone(),
            mode: key.mode.clone(),
            persons: key.persons.clone(),
            labels: key.labels.clone(),
            proportion: key.proportion,
            runs: a.runs,
            metric,
            mean: m.mean,
            std: m.std,
        })
        .collect()
}

/// Wide layout: metrics down, conditions across, cells `mean ± std`.
pub fn write_table6_csv(path: impl AsRef<Path>, cells: &[(RunKey, RunAggregate)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let header = |f: &dyn Fn(&RunKey) -> String, name: &str| -> Vec<String> {
        std::iter::once(name.to_string()).chain(cells.iter().map(|(k, _)| f(k))).collect()
    };
    w.write_record(header(&|k| k.persons.clone(), "persons"))?;
    w.write_record(header(&|k| k.labels.clone(), "labels"))?;
    w.write_record(header(&|k| k.variant.clone(), "variant"))?;
    w.write_record(header(&|k| k.mode.clone(), "mode"))?;
    w.write_record(header(&|k| k.proportion.to_string(), "proportion"))?;
    let columns: Vec<BTreeMap<String, MeanStd>> = cells.iter().map(|(_, a)| metric_list(a).into_iter().collect()).collect();
    if let Some((_, first)) = cells.first() {
        for (metric, _) in metric_list(first) {
            let mut rec = vec![metric.clone()];
            rec.extend(columns.iter().map(|c| c[&metric].to_string()));
            w.write_record(rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityRow {
    pub variant: String,
    pub epochs: usize,
    pub total_seconds: f64,
    pub seconds_per_epoch: f64,
    pub total_parameters: usize,
    pub trainable_parameters: usize,
    pub checkpoint_bytes: u64,
}

/// Sizes and training time per run. Each entry is
/// `(variant, log, parameter report, checkpoint file size)`.
pub fn feasibility_report(runs: &[(&str, &TrainLog, &ParameterReport, u64)]) -> Vec<FeasibilityRow> {
    runs.iter()
        .map(|&(variant, log, params, bytes)| {
            let total: f64 = log.epochs.iter().map(|e| e.seconds).sum();
            let epochs = log.epochs.len();
            FeasibilityRow {
                variant: variant.to_string(),
                epochs,
                total_seconds: total,
                seconds_per_epoch: if epochs == 0 { 0.0 } else { total / epochs as f64 },
                total_parameters: params.total,
                trainable_parameters: params.trainable,
                checkpoint_bytes: bytes,
            }
        })
        .collect()
}
