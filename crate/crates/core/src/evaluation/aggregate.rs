use serde::{Deserialize, Serialize};

use super::MetricsTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n − 1).
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Result<Self> {
        if xs.len() < 2 {
            return Err(Error::argument(format!("need at least 2 values, got {}", xs.len())));
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(MeanStd { mean, std: var.sqrt() })
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAggregate {
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub runs: usize,
    pub accuracy: MeanStd,
    pub macro_f1: MeanStd,
    pub classes: Vec<ClassAggregate>,
}

pub fn aggregate_runs(tables: &[MetricsTable]) -> Result<RunAggregate> {
    if tables.len() < 2 {
        return Err(Error::argument(format!("aggregation needs at least 2 runs, got {}", tables.len())));
    }
    let k = tables[0].classes.len();
    if tables.iter().any(|t| t.classes.len() != k) {
        return Err(Error::argument("runs disagree on the number of classes"));
    }
    let col = |f: &dyn Fn(&MetricsTable) -> f64| MeanStd::of(&tables.iter().map(f).collect::<Vec<_>>());
    let classes = (0..k)
        .map(|i| {
            Ok(ClassAggregate {
                precision: col(&|t| t.classes[i].precision)?,
                recall: col(&|t| t.classes[i].recall)?,
                f1: col(&|t| t.classes[i].f1)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(RunAggregate {
        runs: tables.len(),
        accuracy: col(&|t| t.accuracy)?,
        macro_f1: col(&|t| t.macro_f1)?,
        classes,
    })
}
