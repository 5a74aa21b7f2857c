use rand::seq::{index, SliceRandom};

use super::{floor_share, Label, LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const STANDARD: SplitRatios = SplitRatios {
        train: 0.7,
        dev: 0.1,
        test: 0.2,
    };

    pub fn new(train: f64, dev: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, dev, test };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.dev, self.test];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || self.train <= 0.0 {
            return Err(Error::argument(format!("invalid split ratios {parts:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::argument(format!("split ratios {parts:?} do not sum to 1")));
        }
        Ok(())
    }
}

/// Stratified split: per label, `floor(ratio * size)` units go to dev and
/// test, everything left over goes to train.
pub fn split_dataset(ds: &LabeledDataset, ratios: SplitRatios, seed: u64) -> Result<LabeledDataset> {
    ratios.validate()?;
    let mut tags = vec![Split::Train; ds.len()];
    for label in Label::ALL {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.units[i].label == label).collect();
        members.shuffle(&mut seed::derive_rng(seed, label.as_str()));
        let n = members.len();
        let n_dev = floor_share(ratios.dev, n);
        let n_test = floor_share(ratios.test, n);
        let n_train = n - n_dev - n_test;
        for &i in &members[n_train..n_train + n_dev] {
            tags[i] = Split::Dev;
        }
        for &i in &members[n_train + n_dev..] {
            tags[i] = Split::Test;
        }
    }
    let mut out = ds.clone();
    out.splits = Some(tags);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DownsampleReport {
    pub stance_units: usize,
    pub available: usize,
    /// Smallest no-stance count reaching the requested share.
    pub target: usize,
    pub kept: usize,
    pub shortfall: bool,
}

/// Subsample no-stance units so that they make up at least `share` of the
/// result, keeping as few as possible. Stance units and order are untouched.
pub fn downsample_no_stance(
    ds: &LabeledDataset,
    share: f64,
    seed: u64,
) -> Result<(LabeledDataset, DownsampleReport)> {
    if !(share > 0.0 && share < 1.0) {
        return Err(Error::argument(format!("share must lie in (0, 1), got {share}")));
    }
    let pool: Vec<usize> = (0..ds.len())
        .filter(|&i| ds.units[i].label == Label::NoStance)
        .collect();
    if pool.is_empty() {
        return Err(Error::argument("dataset contains no no_stance units"));
    }
    let k = ds.len() - pool.len();
    let target = smallest_count_for_share(k, share);
    let kept = target.min(pool.len());
    let mut chosen = vec![false; ds.len()];
    for j in index::sample(&mut seed::derive_rng(seed, "downsample"), pool.len(), kept) {
        chosen[pool[j]] = true;
    }
    let keep: Vec<usize> = (0..ds.len())
        .filter(|&i| ds.units[i].label != Label::NoStance || chosen[i])
        .collect();
    let report = DownsampleReport {
        stance_units: k,
        available: pool.len(),
        target,
        kept,
        shortfall: target > pool.len(),
    };
    Ok((ds.select(&keep), report))
}

/// Smallest `n` with `n / (n + k) >= share`.
fn smallest_count_for_share(k: usize, share: f64) -> usize {
    let reaches = |n: usize| n + k > 0 && (n as f64) >= share * (n + k) as f64;
    let mut n = (share * k as f64 / (1.0 - share)).ceil().max(0.0) as usize;
    while n > 0 && reaches(n - 1) {
        n -= 1;
    }
    while !reaches(n) {
        n += 1;
    }
    n
}
