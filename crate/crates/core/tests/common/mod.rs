#![allow(dead_code)]

pub mod gradcheck;

use argpet_core::corpus::LabeledDataset;
use argpet_core::encoding::{PatternVerbalizerPair, PvpPreset, WordPieceTokenizer};
use argpet_core::model::{MiniBackbone, MiniBackboneConfig, INIT_STD};
use argpet_core::synthetic;
use argpet_core::training::{encode_dataset, Example, InputContext, InputKind, TASK_TOPIC};

pub const MAX_LEN: usize = 64;

pub fn tokenizer(preset: PvpPreset) -> WordPieceTokenizer {
    let vocab = synthetic::vocabulary();
    let pattern = preset.definition().pattern;
    WordPieceTokenizer::from_corpus(
        vocab.iter().map(String::as_str).chain([pattern.as_str()]),
        preset.vocabulary_pieces().iter().copied(),
    )
    .unwrap()
}

pub fn pvp(preset: PvpPreset, t: &WordPieceTokenizer) -> PatternVerbalizerPair {
    PatternVerbalizerPair::verbalize(preset.definition(), t).unwrap()
}

pub fn backbone(vocab: usize, hidden: usize, seed: u64) -> MiniBackbone {
    backbone_with_std(vocab, hidden, seed, INIT_STD)
}

pub fn backbone_with_std(vocab: usize, hidden: usize, seed: u64, init_std: f64) -> MiniBackbone {
    MiniBackbone::new(MiniBackboneConfig {
        vocab_size: vocab,
        hidden_size: hidden,
        layers: 2,
        heads: 2,
        ffn_size: 2 * hidden,
        max_positions: MAX_LEN,
        seed,
        init_std,
    })
    .unwrap()
}

/// First `train` units for training, the rest for testing.
pub fn split(ds: &LabeledDataset, train: usize) -> (LabeledDataset, LabeledDataset) {
    let idx: Vec<usize> = (0..ds.len()).collect();
    (ds.select(&idx[..train]), ds.select(&idx[train..]))
}

pub fn encode(kind: InputKind, ds: &LabeledDataset, t: &WordPieceTokenizer, pvp: Option<&PatternVerbalizerPair>) -> Vec<Example> {
    let cx = InputContext {
        tokenizer: t,
        pvp,
        topic: TASK_TOPIC,
        max_len: MAX_LEN,
    };
    encode_dataset(kind, ds, &cx).unwrap()
}
