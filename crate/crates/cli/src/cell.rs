//! One sweep cell: sample, train, evaluate on the fixed test split, persist.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use argpet_core::corpus::{load_sam_tsv, Label, LabeledDataset};
use argpet_core::encoding::{PatternVerbalizerPair, Tokenizer};
use argpet_core::evaluation::{
    collapse_confusion, confusion, metrics, metrics_rows, write_csv, Confusion, MetricsTable, RunKey,
};
use argpet_core::model::{
    count_parameters, deserialize_trainable, load_adapter, save_adapter, serialize_trainable, MiniBackbone,
    MiniBackboneConfig, ModelAssembly, ParameterReport,
};
use argpet_core::preprocess::{sample_stratified_by, sample_tfs, SamplingMode};
use argpet_core::seed;
use argpet_core::training::{
    build_assembly, encode_dataset, encode_sam_records, masked_lm_pool, near_domain_stage, predict_all, train,
    InputContext, InputKind, TrainLog, Variant, SAM_ADAPTER, TASK_TOPIC,
};
use serde::{Deserialize, Serialize};

use crate::prepare::{load_prepared, Prepared};
use crate::spec::{ExperimentSpec, Labels};

pub const CELL_SPEC: &str = "cell.json";
pub const RUN_REPORT: &str = "run.json";
pub const METRICS: &str = "metrics.csv";
pub const TRAIN_LOG_CSV: &str = "train_log.csv";
pub const TRAIN_LOG_JSON: &str = "train_log.json";
pub const MODEL: &str = "model.ckpt";
pub const SAM_CHECKPOINT: &str = "sam_adapter.ckpt";
pub const DONE: &str = "DONE";

/// Everything needed to rebuild a cell's model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub spec: ExperimentSpec,
    pub proportion: f64,
    pub seed: u64,
    pub cell_seed: u64,
}

impl CellSpec {
    pub fn new(spec: &ExperimentSpec, proportion: f64, seed: u64) -> Self {
        let label = format!("cell/{}/{proportion}", spec.mode.as_str());
        CellSpec {
            spec: spec.clone(),
            proportion,
            seed,
            cell_seed: seed::derive(seed, &label),
        }
    }

    pub fn key(&self) -> RunKey {
        RunKey {
            variant: self.spec.variant.as_str().to_string(),
            mode: self.spec.mode.as_str().to_string(),
            persons: self.spec.persons.as_str().to_string(),
            labels: self.spec.labels.as_str().to_string(),
            proportion: self.proportion,
            seed: self.seed,
        }
    }

    pub fn dir(&self) -> PathBuf {
        self.spec.cell_dir(self.proportion, self.seed)
    }
}

/// Deterministic record of one trained and evaluated cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub key: RunKey,
    pub cell_seed: u64,
    pub train_counts: BTreeMap<String, usize>,
    pub epochs: usize,
    pub final_loss: f64,
    pub best_epoch: Option<usize>,
    pub parameters: ParameterReport,
    pub checkpoint_bytes: u64,
    pub confusion: Confusion,
    pub metrics: MetricsTable,
    pub stance3: MetricsTable,
}

/// Few-shot sample of the train split. Stratification keys on the
/// pre-swap label so that onion conditions draw the same units.
pub fn sample_train(cell: &CellSpec, train: &LabeledDataset) -> Result<LabeledDataset> {
    let seed = seed::derive(cell.cell_seed, "sample");
    let swapped = cell.spec.labels == Labels::Onion;
    Ok(match cell.spec.mode {
        SamplingMode::Stratified => sample_stratified_by(train, cell.proportion, seed, |u| u.original_label(swapped))?,
        SamplingMode::Tfs => sample_tfs(train, cell.proportion, seed)?,
    })
}

fn backbone(spec: &ExperimentSpec, vocab_size: usize) -> Result<MiniBackbone> {
    Ok(MiniBackbone::new(MiniBackboneConfig {
        vocab_size,
        hidden_size: spec.hidden_size,
        layers: spec.layers,
        heads: spec.heads,
        ffn_size: spec.ffn_size,
        max_positions: spec.max_len,
        seed: spec.backbone_seed,
        init_std: spec.init_std,
    })?)
}

fn pvp_for(spec: &ExperimentSpec, t: &dyn Tokenizer) -> Result<Option<PatternVerbalizerPair>> {
    Ok(match spec.variant.input_kind() {
        InputKind::Pet | InputKind::SamPet => Some(PatternVerbalizerPair::verbalize(spec.preset()?.definition(), t)?),
        InputKind::Standard | InputKind::Sam => None,
    })
}

fn test_tables(
    m: &ModelAssembly<MiniBackbone>,
    test: &LabeledDataset,
    cx: &InputContext<'_>,
    kind: InputKind,
) -> Result<(Confusion, MetricsTable, MetricsTable)> {
    let examples = encode_dataset(kind, test, cx)?;
    let pred: Vec<Label> = predict_all(m, &examples)?
        .into_iter()
        .map(|i| Label::from_index(i).expect("five-class head"))
        .collect();
    let c = confusion(&test.labels(), &pred)?;
    let five = metrics(&c)?;
    let three = metrics(&collapse_confusion(&c))?;
    Ok((c, five, three))
}

/// Train and evaluate one cell, writing its artifacts and finally a DONE
/// marker. Existing artifacts of an unfinished cell are overwritten.
pub fn run_cell(cell: &CellSpec) -> Result<RunReport> {
    let spec = &cell.spec;
    spec.validate()?;
    let Prepared { train: train_split, dev, test, tokenizer } = load_prepared(spec)?;
    let dir = cell.dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let _ = fs::remove_file(dir.join(DONE));
    fs::write(dir.join(CELL_SPEC), serde_json::to_string_pretty(cell)? + "\n")?;

    let sample = sample_train(cell, &train_split)?;
    let pvp = pvp_for(spec, &tokenizer)?;
    let cx = InputContext {
        tokenizer: &tokenizer,
        pvp: pvp.as_ref(),
        topic: TASK_TOPIC,
        max_len: spec.max_len,
    };
    let kind = spec.variant.input_kind();
    let train_x = encode_dataset(kind, &sample, &cx)?;
    let dev_x = encode_dataset(kind, &dev, &cx)?;

    let mut bb = backbone(spec, tokenizer.vocab_size())?;
    let mut lower = None;
    if spec.variant.near_domain() {
        let path = spec.sam_dataset.as_ref().expect("validated");
        let sam = encode_sam_records(&load_sam_tsv(path)?, &cx)?;
        let stage = near_domain_stage(
            spec.variant,
            bb,
            &sam,
            &spec.near_domain_config(seed::derive(cell.cell_seed, "near_domain")),
            spec.reduction_factor,
            cell.cell_seed,
        )?;
        bb = stage.backbone;
        lower = stage.lower;
    }
    let m = build_assembly(spec.variant, bb, pvp.as_ref(), lower, spec.reduction_factor, cell.cell_seed)?;
    let pool = match spec.variant {
        Variant::PetFull => Some(masked_lm_pool(&train_split, &cx)?),
        _ => None,
    };
    let cfg = spec.train_config(cell.cell_seed);
    let (m, log) = train(m, &train_x, Some(&dev_x), &cfg, pool.as_ref())?;

    let checkpoint_bytes = serialize_trainable(&m, dir.join(MODEL))?;
    if let Some(stack) = m.adapter(SAM_ADAPTER) {
        save_adapter(stack, dir.join(SAM_CHECKPOINT))?;
    }
    let (c, five, three) = test_tables(&m, &test, &cx, kind)?;
    let counts = sample.label_counts();
    let report = RunReport {
        key: cell.key(),
        cell_seed: cell.cell_seed,
        train_counts: Label::ALL.iter().map(|l| (l.as_str().to_string(), counts[l.index()])).collect(),
        epochs: log.epochs.len(),
        final_loss: log.epochs.last().map_or(f64::NAN, |e| e.loss),
        best_epoch: log.best_epoch,
        parameters: count_parameters(&m),
        checkpoint_bytes,
        confusion: c,
        metrics: five,
        stance3: three,
    };
    write_csv(dir.join(METRICS), &metrics_rows(&report.key, &report.metrics, Some(&report.stance3)))?;
    log.write_csv(dir.join(TRAIN_LOG_CSV))?;
    fs::write(dir.join(TRAIN_LOG_JSON), serde_json::to_string(&log)?)?;
    fs::write(dir.join(RUN_REPORT), serde_json::to_string_pretty(&report)? + "\n")?;
    fs::write(dir.join(DONE), "")?;
    Ok(report)
}

pub fn load_cell(dir: &Path) -> Result<CellSpec> {
    let path = dir.join(CELL_SPEC);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_report(dir: &Path) -> Result<RunReport> {
    let path = dir.join(RUN_REPORT);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_train_log(dir: &Path) -> Result<TrainLog> {
    let path = dir.join(TRAIN_LOG_JSON);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Rebuild a finished cell from its checkpoints and re-evaluate it on the
/// test split. Returns the fresh tables and whether they equal the stored
/// report.
pub fn evaluate_cell(dir: &Path) -> Result<(MetricsTable, MetricsTable, bool)> {
    let cell = load_cell(dir)?;
    let spec = &cell.spec;
    if !dir.join(DONE).exists() {
        bail!("{} is not a finished cell", dir.display());
    }
    let Prepared { test, tokenizer, .. } = load_prepared(spec)?;
    let pvp = pvp_for(spec, &tokenizer)?;
    let cx = InputContext {
        tokenizer: &tokenizer,
        pvp: pvp.as_ref(),
        topic: TASK_TOPIC,
        max_len: spec.max_len,
    };
    let lower = if dir.join(SAM_CHECKPOINT).exists() {
        Some(load_adapter(dir.join(SAM_CHECKPOINT))?)
    } else {
        None
    };
    let bb = backbone(spec, tokenizer.vocab_size())?;
    let m = build_assembly(spec.variant, bb, pvp.as_ref(), lower, spec.reduction_factor, cell.cell_seed)?;
    let m = deserialize_trainable(dir.join(MODEL), m)?;
    let (c, five, three) = test_tables(&m, &test, &cx, spec.variant.input_kind())?;
    let stored = load_report(dir)?;
    let same = stored.confusion == c && stored.metrics == five && stored.stance3 == three;
    Ok((five, three, same))
}
