//! Validity metrics, stance collapse, run aggregation and reports.

mod aggregate;
mod report;
mod stance;

pub use aggregate::{aggregate_runs, ClassAggregate, MeanStd, RunAggregate};
pub use report::{
    aggregate_rows, feasibility_report, metrics_rows, write_csv, write_table6_csv, AggregateRow, FeasibilityRow,
    MetricsRow, RunKey, STANCE3_PREFIX,
};
pub use stance::{collapse_confusion, collapse_stance, error_breakdown, ErrorBreakdown, Stance3};

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

/// Gold × predicted counts over `k` classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    counts: Vec<Vec<u64>>,
}

impl Confusion {
    pub fn new(classes: usize) -> Self {
        Confusion {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_indices(classes: usize, gold: &[usize], pred: &[usize]) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(Error::argument(format!("{} gold labels vs {} predictions", gold.len(), pred.len())));
        }
        if gold.is_empty() {
            return Err(Error::argument("no units to evaluate"));
        }
        let mut c = Confusion::new(classes);
        for (&g, &p) in gold.iter().zip(pred) {
            if g >= classes || p >= classes {
                return Err(Error::argument(format!("class index outside 0..{classes}")));
            }
            c.counts[g][p] += 1;
        }
        Ok(c)
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold][pred]
    }

    pub fn add(&mut self, gold: usize, pred: usize, n: u64) {
        self.counts[gold][pred] += n;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }
}

pub fn confusion(gold: &[Label], pred: &[Label]) -> Result<Confusion> {
    let g: Vec<usize> = gold.iter().map(|l| l.index()).collect();
    let p: Vec<usize> = pred.iter().map(|l| l.index()).collect();
    Confusion::from_indices(Label::COUNT, &g, &p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Nothing was predicted as this class.
    pub precision_undefined: bool,
    /// The class has no gold units.
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_f1: f64,
}

impl MetricsTable {
    /// Any zero denominator was replaced by 0.
    pub fn has_undefined(&self) -> bool {
        self.classes.iter().any(|c| c.precision_undefined || c.recall_undefined)
    }
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Per-class precision, recall and F1, accuracy, and macro-F1 over every
/// class including zero-support ones. Zero denominators give 0, flagged.
pub fn metrics(c: &Confusion) -> Result<MetricsTable> {
    let total = c.total();
    if total == 0 {
        return Err(Error::argument("empty confusion matrix"));
    }
    let k = c.classes();
    let classes: Vec<ClassMetrics> = (0..k)
        .map(|i| {
            let tp = c.get(i, i);
            let predicted: u64 = (0..k).map(|g| c.get(g, i)).sum();
            let support: u64 = c.rows()[i].iter().sum();
            let (precision, precision_undefined) = ratio(tp, predicted);
            let (recall, recall_undefined) = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
                precision_undefined,
                recall_undefined,
            }
        })
        .collect();
    let macro_f1 = classes.iter().map(|c| c.f1).sum::<f64>() / k as f64;
    Ok(MetricsTable {
        accuracy: c.trace() as f64 / total as f64,
        macro_f1,
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_class_worked_example() {
        // A = 0, B = 1
        let c = Confusion::from_indices(2, &[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
        let m = metrics(&c).unwrap();
        assert_eq!(m.classes[0].precision, 1.0);
        assert_eq!(m.classes[0].recall, 0.5);
        assert!((m.classes[0].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.classes[1].precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.classes[1].recall, 1.0);
        assert!((m.classes[1].f1 - 0.8).abs() < 1e-12);
        assert!((m.macro_f1 - 0.7333).abs() < 1e-4);
        assert_eq!(m.accuracy, 0.75);
    }

    #[test]
    fn perfect_and_diagonal() {
        let labels = [Label::ClaimFor, Label::NoStance, Label::ArgumentFor, Label::ArgumentAgainst, Label::ClaimAgainst];
        let c = confusion(&labels, &labels).unwrap();
        for g in 0..5 {
            for p in 0..5 {
                assert_eq!(c.get(g, p), u64::from(g == p));
            }
        }
        let m = metrics(&c).unwrap();
        assert_eq!((m.accuracy, m.macro_f1), (1.0, 1.0));
    }

    #[test]
    fn single_unit_and_zero_support_flags() {
        let c = confusion(&[Label::ClaimFor], &[Label::ClaimFor]).unwrap();
        assert_eq!(c.total(), 1);
        let m = metrics(&c).unwrap();
        assert!(m.classes[Label::NoStance.index()].recall_undefined);
        assert!((m.macro_f1 - 0.2).abs() < 1e-12);
        assert!(m.has_undefined());
    }

    #[test]
    fn length_mismatch_is_error() {
        assert!(confusion(&[Label::ClaimFor], &[]).is_err());
        assert!(confusion(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn order_invariant(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..30), rot in 0usize..30) {
            let (g, p): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
            let r = rot % pairs.len();
            let (mut g2, mut p2) = (g.clone(), p.clone());
            g2.rotate_left(r);
            p2.rotate_left(r);
            prop_assert_eq!(Confusion::from_indices(5, &g, &p).unwrap(), Confusion::from_indices(5, &g2, &p2).unwrap());
        }
    }
}
