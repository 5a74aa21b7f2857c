//! Materialize the preprocessed splits of one (persons, labels) condition.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use argpet_core::corpus::{
    downsample_no_stance, load_dataset, load_sam_tsv, save_dataset, split_dataset, Label, LabeledDataset, Split,
};
use argpet_core::encoding::{PvpPreset, WordPieceTokenizer, INPUT_SLOT, MASK_MARKER};
use argpet_core::preprocess::{shuffle_persons, swap_onion, DictionaryRecognizer};
use argpet_core::seed;
use argpet_core::training::TASK_TOPIC;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::spec::{ExperimentSpec, Labels, Persons};

pub const MANIFEST: &str = "manifest.json";
pub const VOCAB: &str = "vocab.txt";

const PRESETS: [PvpPreset; 2] = [PvpPreset::Naive, PvpPreset::Elaborate];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareManifest {
    pub spec: ExperimentSpec,
    pub seeds: BTreeMap<String, u64>,
    pub downsample: Option<argpet_core::corpus::DownsampleReport>,
    pub persons: Option<argpet_core::preprocess::ShuffleReport>,
    /// Flagged units per original label that the onion swap relabeled.
    pub onion_flips: Option<BTreeMap<String, usize>>,
    /// Label counts per split after every transform.
    pub counts: BTreeMap<String, BTreeMap<String, usize>>,
    pub files: BTreeMap<String, String>,
}

fn label_map(counts: [usize; Label::COUNT]) -> BTreeMap<String, usize> {
    Label::ALL.iter().map(|l| (l.as_str().to_string(), counts[l.index()])).collect()
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Texts seen by the tokenizer: every target and context sentence, the
/// near-domain sentences and topics, the task topic and both PVP presets,
/// so one prepared directory serves either preset.
fn build_vocabulary(ds: &LabeledDataset, spec: &ExperimentSpec) -> Result<WordPieceTokenizer> {
    let mut texts: Vec<String> = Vec::new();
    for u in &ds.units {
        texts.push(u.text.clone());
        texts.extend(u.context_before.iter().cloned());
        texts.extend(u.context_after.iter().cloned());
    }
    if let Some(path) = &spec.sam_dataset {
        for r in load_sam_tsv(path)? {
            texts.push(r.topic);
            texts.push(r.sentence);
        }
    }
    texts.push(TASK_TOPIC.to_string());
    let mut pieces: Vec<&str> = Vec::new();
    for preset in PRESETS {
        let pattern = preset.definition().pattern.replace(MASK_MARKER, " ").replace(INPUT_SLOT, " ");
        texts.push(pattern);
        pieces.extend(preset.vocabulary_pieces());
    }
    Ok(WordPieceTokenizer::from_corpus(texts.iter().map(String::as_str), pieces)?)
}

/// Downsample no_stance, shuffle persons, split on the original labels,
/// then apply the onion swap. Writes `train/dev/test.jsonl`, `vocab.txt`
/// and a manifest into `<out>/prepared`.
pub fn cmd_prepare(spec: &ExperimentSpec) -> Result<PrepareManifest> {
    spec.validate()?;
    let mut ds = load_dataset(&spec.dataset)?;
    let mut seeds = BTreeMap::new();

    let downsample = match spec.no_stance_share {
        Some(share) => {
            let s = seed::derive(spec.split_seed, "downsample");
            seeds.insert("downsample".to_string(), s);
            let (kept, report) = downsample_no_stance(&ds, share, s)?;
            ds = kept;
            Some(report)
        }
        None => None,
    };

    let persons = match spec.persons {
        Persons::Shuffled => {
            let list_path = spec.person_list.as_ref().expect("validated");
            let list = fs::read_to_string(list_path).with_context(|| format!("reading {}", list_path.display()))?;
            let recognizer = DictionaryRecognizer::from_list(&list)?;
            let s = seed::derive(spec.split_seed, "persons");
            seeds.insert("persons".to_string(), s);
            let (shuffled, report) = shuffle_persons(&ds, &recognizer, s);
            ds = shuffled;
            Some(report)
        }
        Persons::Original => None,
    };

    let split_seed = seed::derive(spec.split_seed, "split");
    seeds.insert("split".to_string(), split_seed);
    let mut tagged = split_dataset(&ds, spec.split_ratios()?, split_seed)?;

    let onion_flips = match spec.labels {
        Labels::Onion => {
            let mut flips = [0usize; Label::COUNT];
            for u in tagged.units.iter().filter(|u| u.onion) {
                flips[u.label.index()] += 1;
            }
            tagged = swap_onion(&tagged);
            Some(label_map(flips))
        }
        Labels::Original => None,
    };

    let dir = spec.prepared_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let tokenizer = build_vocabulary(&tagged, spec)?;
    tokenizer.save(dir.join(VOCAB))?;
    let mut counts = BTreeMap::new();
    let mut files = BTreeMap::new();
    for split in Split::ALL {
        let part = tagged.subset(split);
        let name = format!("{}.jsonl", split.as_str());
        save_dataset(&part, dir.join(&name))?;
        counts.insert(split.as_str().to_string(), label_map(part.label_counts()));
        files.insert(name.clone(), sha256_file(&dir.join(&name))?);
    }
    files.insert(VOCAB.to_string(), sha256_file(&dir.join(VOCAB))?);

    let manifest = PrepareManifest {
        spec: spec.clone(),
        seeds,
        downsample,
        persons,
        onion_flips,
        counts,
        files,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    fs::write(spec.out.join("spec.json"), spec.to_json()?)?;
    Ok(manifest)
}

/// The prepared splits and tokenizer of an experiment.
pub struct Prepared {
    pub train: LabeledDataset,
    pub dev: LabeledDataset,
    pub test: LabeledDataset,
    pub tokenizer: WordPieceTokenizer,
}

pub fn load_prepared(spec: &ExperimentSpec) -> Result<Prepared> {
    let dir = spec.prepared_dir();
    if !dir.join(MANIFEST).exists() {
        anyhow::bail!("{} has no prepared data; run `argpet prepare` first", spec.out.display());
    }
    let load = |name: &str| load_dataset(dir.join(name)).with_context(|| format!("loading {name}"));
    Ok(Prepared {
        train: load("train.jsonl")?,
        dev: load("dev.jsonl")?,
        test: load("test.jsonl")?,
        tokenizer: WordPieceTokenizer::load(dir.join(VOCAB))?,
    })
}
