//! Shared fixtures for the benchmarks.

use argpet_core::corpus::LabeledDataset;
use argpet_core::encoding::{PatternVerbalizerPair, PvpPreset, WordPieceTokenizer};
use argpet_core::model::{MiniBackbone, MiniBackboneConfig};
use argpet_core::synthetic;
use argpet_core::training::TASK_TOPIC;

pub fn tokenizer() -> WordPieceTokenizer {
    let mut texts = synthetic::vocabulary();
    texts.push(TASK_TOPIC.to_string());
    texts.push(PvpPreset::Naive.definition().pattern.replace("<mask>", " ").replace("[Input]", " "));
    WordPieceTokenizer::from_corpus(texts.iter().map(String::as_str), PvpPreset::Naive.vocabulary_pieces().iter().copied())
        .expect("tokenizer")
}

pub fn pvp(t: &WordPieceTokenizer) -> PatternVerbalizerPair {
    PatternVerbalizerPair::verbalize(PvpPreset::Naive.definition(), t).expect("naive PVP")
}

pub fn backbone(vocab_size: usize, hidden: usize) -> MiniBackbone {
    MiniBackbone::new(MiniBackboneConfig {
        hidden_size: hidden,
        ffn_size: 2 * hidden,
        ..MiniBackboneConfig::new(vocab_size)
    })
    .expect("backbone")
}

pub fn dataset(n: usize) -> LabeledDataset {
    synthetic::separable_dataset(n, 0).expect("dataset")
}
