//! Optimization loops for every variant, near-domain pretraining, and
//! per-epoch logging.

mod config;
mod optim;
mod recipe;

pub use config::{HeadKind, InputKind, TrainConfig, Variant};
pub use optim::{clip_grad_norm, lr_schedule, AdamW};
pub use recipe::{
    build_assembly, encode_dataset, encode_sam_records, encode_unit, masked_lm_pool, near_domain_stage, sam_head,
    InputContext, NearDomain, SAM_ADAPTER, TASK_ADAPTER, TASK_TOPIC,
};

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{EncodedInput, SegmentKind, TokenId};
use crate::error::{Error, Result};
use crate::evaluation::{metrics, Confusion, MetricsTable};
use crate::model::{count_parameters, Backbone, ModelAssembly, ParameterReport, Parameters, Tensor};
use crate::seed;

/// One encoded unit with its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: EncodedInput,
    pub label: usize,
}

/// Unlabeled inputs for the auxiliary masked-LM objective.
#[derive(Debug, Clone)]
pub struct MaskedLmPool {
    pub inputs: Vec<EncodedInput>,
    pub mask_id: TokenId,
}

impl MaskedLmPool {
    /// Hide a random `share` (at least one) of the non-special tokens.
    /// Returns `(ids, positions, targets)`.
    pub fn mask(&self, item: usize, share: f64, rng: &mut impl Rng) -> Option<(Vec<TokenId>, Vec<usize>, Vec<TokenId>)> {
        let input = &self.inputs[item];
        let candidates: Vec<usize> = input
            .segments
            .iter()
            .filter(|s| s.kind != SegmentKind::Special)
            .flat_map(|s| s.start..s.end)
            .filter(|&p| input.ids[p] != self.mask_id)
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let k = ((share * candidates.len() as f64).round() as usize).clamp(1, candidates.len());
        let mut positions: Vec<usize> = index::sample(rng, candidates.len(), k).into_iter().map(|i| candidates[i]).collect();
        positions.sort_unstable();
        let targets = positions.iter().map(|&p| input.ids[p]).collect();
        let mut ids = input.ids.clone();
        for &p in &positions {
            ids[p] = self.mask_id;
        }
        Some((ids, positions, targets))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean training loss over the epoch's examples.
    pub loss: f64,
    /// Rate used by the epoch's last update.
    pub lr: f64,
    pub seconds: f64,
    pub dev_macro_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
    /// 1-based epoch whose parameters were returned, when selecting.
    pub best_epoch: Option<usize>,
    pub parameters: ParameterReport,
}

#[derive(Serialize)]
struct EpochCsv {
    epoch: usize,
    loss: f64,
    lr: f64,
    seconds: f64,
}

impl TrainLog {
    /// `epoch,loss,lr,seconds`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for e in &self.epochs {
            w.serialize(EpochCsv {
                epoch: e.epoch,
                loss: e.loss,
                lr: e.lr,
                seconds: e.seconds,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn predict_all<B: Backbone>(m: &ModelAssembly<B>, examples: &[Example]) -> Result<Vec<usize>> {
    examples.iter().map(|e| m.predict(&e.input)).collect()
}

pub fn evaluate<B: Backbone>(m: &ModelAssembly<B>, examples: &[Example]) -> Result<MetricsTable> {
    let pred = predict_all(m, examples)?;
    let gold: Vec<usize> = examples.iter().map(|e| e.label).collect();
    metrics(&Confusion::from_indices(m.head.classes(), &gold, &pred)?)
}

fn tensor_digests<B: Backbone>(m: &ModelAssembly<B>) -> Vec<(String, u64)> {
    let mut out = Vec::new();
    m.visit_frozen(&mut |name, p| {
        let mut h = DefaultHasher::new();
        p.value.shape().hash(&mut h);
        for x in p.value.data() {
            x.to_bits().hash(&mut h);
        }
        out.push((name, h.finish()));
    });
    out
}

fn snapshot<B: Backbone>(m: &ModelAssembly<B>) -> Vec<Tensor> {
    let mut out = Vec::new();
    m.visit_trainable(&mut |_, p| out.push(p.value.clone()));
    out
}

fn restore<B: Backbone>(m: &mut ModelAssembly<B>, snap: Vec<Tensor>) {
    let mut it = snap.into_iter();
    m.visit_trainable_mut(&mut |_, p| p.value = it.next().expect("snapshot matches partition"));
}

/// Minimize class cross-entropy (plus the weighted masked-LM term for
/// `pet_full`) with AdamW under the linear warm-up schedule.
pub fn train<B: Backbone>(
    mut m: ModelAssembly<B>,
    train_ds: &[Example],
    dev_ds: Option<&[Example]>,
    cfg: &TrainConfig,
    mlm: Option<&MaskedLmPool>,
) -> Result<(ModelAssembly<B>, TrainLog)> {
    cfg.validate()?;
    if train_ds.is_empty() {
        return Err(Error::argument("training set is empty"));
    }
    let classes = m.head.classes();
    if let Some(e) = train_ds.iter().chain(dev_ds.unwrap_or(&[])).find(|e| e.label >= classes) {
        return Err(Error::argument(format!("label {} outside the head's {classes} classes", e.label)));
    }
    if cfg.best_epoch_selection && dev_ds.is_none_or(|d| d.is_empty()) {
        return Err(Error::Config("best-epoch selection needs a dev set".into()));
    }
    let lm_weight = if cfg.variant == Variant::PetFull { cfg.lm_loss_weight } else { 0.0 };
    let pool = match (lm_weight > 0.0, mlm) {
        (true, Some(p)) if !p.inputs.is_empty() => Some(p),
        (true, _) => return Err(Error::Config("pet_full needs a non-empty masked-LM pool".into())),
        (false, _) => None,
    };

    let frozen_before = tensor_digests(&m);
    let steps_per_epoch = train_ds.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut opt = AdamW::new(cfg.weight_decay);
    let mut log = TrainLog {
        epochs: Vec::with_capacity(cfg.epochs),
        steps: Vec::with_capacity(total_steps),
        best_epoch: None,
        parameters: count_parameters(&m),
    };
    let mut best: Option<(f64, Vec<Tensor>)> = None;
    let mut step = 0;
    m.zero_grad();

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train_ds.len()).collect();
        order.shuffle(&mut seed::derive_rng(cfg.seed, &format!("order/{epoch}")));
        let mut mlm_rng = seed::derive_rng(cfg.seed, &format!("mlm/{epoch}"));
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let e = &train_ds[i];
                let cls = m.classification_step(&e.input, e.label, (1.0 - lm_weight) * scale)?;
                let mut loss = (1.0 - lm_weight) * cls;
                if let Some(pool) = pool {
                    let item = mlm_rng.random_range(0..pool.inputs.len());
                    if let Some((ids, pos, tgt)) = pool.mask(item, cfg.mlm_probability, &mut mlm_rng) {
                        loss += lm_weight * m.mlm_step(&ids, &pos, &tgt, lm_weight * scale)?;
                    }
                }
                loss_sum += loss;
            }
            let grad_norm = clip_grad_norm(&mut m, cfg.max_grad_norm);
            lr = lr_schedule(step, total_steps, cfg.learning_rate, cfg.warmup_fraction)?;
            opt.step(&mut m, lr);
            m.zero_grad();
            log.steps.push(StepRecord { step, lr, grad_norm });
            step += 1;
        }
        let dev_macro_f1 = match dev_ds {
            Some(d) if !d.is_empty() => Some(evaluate(&m, d)?.macro_f1),
            _ => None,
        };
        if cfg.best_epoch_selection {
            let f1 = dev_macro_f1.expect("dev set checked above");
            if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                best = Some((f1, snapshot(&m)));
                log.best_epoch = Some(epoch);
            }
        }
        log.epochs.push(EpochRecord {
            epoch,
            loss: loss_sum / train_ds.len() as f64,
            lr,
            seconds: started.elapsed().as_secs_f64(),
            dev_macro_f1,
        });
    }
    if let Some((_, snap)) = best {
        restore(&mut m, snap);
    }
    for ((name, before), (_, after)) in frozen_before.iter().zip(tensor_digests(&m)) {
        if *before != after {
            return Err(Error::FrozenParameterChanged(name.clone()));
        }
    }
    Ok((m, log))
}

/// Train on topic-prefixed 3-class stance data. The head must have three
/// classes; the returned model seeds task training.
pub fn pretrain_near_domain<B: Backbone>(
    m: ModelAssembly<B>,
    sam_ds: &[Example],
    cfg: &TrainConfig,
) -> Result<(ModelAssembly<B>, TrainLog)> {
    let classes = m.head.classes();
    if classes != crate::corpus::SamStance::COUNT {
        return Err(Error::Config(format!(
            "near-domain head has {classes} classes, stance data has {}",
            crate::corpus::SamStance::COUNT
        )));
    }
    let cfg = TrainConfig {
        best_epoch_selection: false,
        ..cfg.clone()
    };
    train(m, sam_ds, None, &cfg, None)
}
