use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::{floor_share, Label, LabeledDataset, SentenceUnit};
use crate::error::{Error, Result};
use crate::seed;

/// Train-set proportions of the few-shot sweep.
pub const STANDARD_PROPORTIONS: [f64; 8] = [0.025, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Per-label floor of the proportion, at least one per non-empty label.
    Stratified,
    /// True few-shot: a uniform draw ignoring labels.
    Tfs,
}

impl SamplingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplingMode::Stratified => "stratified",
            SamplingMode::Tfs => "tfs",
        }
    }

    /// Repetitions used by the published protocols: five seeded runs for
    /// stratified few-shot, ten resamples for true few-shot.
    pub fn default_repetitions(self) -> usize {
        match self {
            SamplingMode::Stratified => 5,
            SamplingMode::Tfs => 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotPlan {
    pub proportion: f64,
    pub mode: SamplingMode,
    pub seed: u64,
    pub repetitions: usize,
}

impl FewShotPlan {
    pub fn new(proportion: f64, mode: SamplingMode, seed: u64, repetitions: usize) -> Result<Self> {
        check_proportion(proportion)?;
        if repetitions == 0 {
            return Err(Error::argument("repetitions must be positive"));
        }
        Ok(FewShotPlan {
            proportion,
            mode,
            seed,
            repetitions,
        })
    }

    /// Whether the proportion is one of the sweep's standard grid points.
    pub fn is_standard(&self) -> bool {
        STANDARD_PROPORTIONS.iter().any(|p| (p - self.proportion).abs() < 1e-12)
    }

    pub fn sample(&self, train: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
        match self.mode {
            SamplingMode::Stratified => sample_stratified(train, self.proportion, seed),
            SamplingMode::Tfs => sample_tfs(train, self.proportion, seed),
        }
    }
}

fn check_proportion(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::argument(format!("proportion must lie in (0, 1], got {p}")))
    }
}

/// Stratified few-shot sample keyed on each unit's current label.
pub fn sample_stratified(train: &LabeledDataset, proportion: f64, seed: u64) -> Result<LabeledDataset> {
    sample_stratified_by(train, proportion, seed, |u| u.label)
}

/// Stratified few-shot sample with a caller-chosen stratification key, e.g.
/// the pre-swap label of an onion-swapped dataset.
pub fn sample_stratified_by<F>(
    train: &LabeledDataset,
    proportion: f64,
    seed: u64,
    key: F,
) -> Result<LabeledDataset>
where
    F: Fn(&SentenceUnit) -> Label,
{
    check_proportion(proportion)?;
    if train.is_empty() {
        return Err(Error::argument("cannot sample from an empty train set"));
    }
    let mut chosen = Vec::new();
    for label in Label::ALL {
        let members: Vec<usize> = (0..train.len()).filter(|&i| key(&train.units[i]) == label).collect();
        if members.is_empty() {
            continue;
        }
        let n = floor_share(proportion, members.len()).max(1);
        let mut rng = seed::derive_rng(seed, label.as_str());
        chosen.extend(index::sample(&mut rng, members.len(), n).into_iter().map(|j| members[j]));
    }
    chosen.sort_unstable();
    Ok(train.select(&chosen))
}

/// True few-shot sample: `floor(proportion * |train|)` units drawn uniformly.
pub fn sample_tfs(train: &LabeledDataset, proportion: f64, seed: u64) -> Result<LabeledDataset> {
    check_proportion(proportion)?;
    let n = floor_share(proportion, train.len());
    if n == 0 {
        return Err(Error::argument(format!(
            "proportion {proportion} of {} units selects nothing",
            train.len()
        )));
    }
    let mut chosen = index::sample(&mut seed::derive_rng(seed, "tfs"), train.len(), n).into_vec();
    chosen.sort_unstable();
    Ok(train.select(&chosen))
}
