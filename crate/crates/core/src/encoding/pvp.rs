use serde::{Deserialize, Serialize};

use super::{TokenId, Tokenizer};
use crate::corpus::Label;
use crate::error::{Error, Result};

pub const MASK_MARKER: &str = "<mask>";
pub const INPUT_SLOT: &str = "[Input]";

/// A pattern with `<mask>` markers and one `[Input]` slot, plus one
/// verbalizer string per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvpDefinition {
    pub name: String,
    pub pattern: String,
    pub argument_for: String,
    pub argument_against: String,
    pub claim_for: String,
    pub claim_against: String,
    pub no_stance: String,
    /// Require every verbalizer to fill every mask (one token per mask).
    #[serde(default)]
    pub uniform_length: bool,
}

impl PvpDefinition {
    pub fn verbalizer(&self, label: Label) -> &str {
        match label {
            Label::ArgumentFor => &self.argument_for,
            Label::ArgumentAgainst => &self.argument_against,
            Label::ClaimFor => &self.claim_for,
            Label::ClaimAgainst => &self.claim_against,
            Label::NoStance => &self.no_stance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PvpPreset {
    Naive,
    Elaborate,
}

impl PvpPreset {
    pub fn definition(self) -> PvpDefinition {
        match self {
            PvpPreset::Naive => PvpDefinition {
                name: "naive".into(),
                pattern: "Dies ist ein <mask> <mask> Waffenlieferungen an die Ukraine: [Input]".into(),
                argument_for: "argument für".into(),
                argument_against: "argument gegen".into(),
                claim_for: "claim für".into(),
                claim_against: "claim gegen".into(),
                no_stance: "Satz ohne".into(),
                uniform_length: true,
            },
            PvpPreset::Elaborate => PvpDefinition {
                name: "elaborate".into(),
                pattern: "Dieser Satz <mask> <mask> <mask> Waffenlieferungen an die Ukraine: [Input]".into(),
                argument_for: "argumentiert für".into(),
                argument_against: "argumentiert gegen".into(),
                claim_for: "fordert".into(),
                claim_against: "widerspricht".into(),
                no_stance: "ist neutral zu".into(),
                uniform_length: false,
            },
        }
    }

    /// Vocabulary pieces under which the preset's verbalizers tokenize the
    /// way a multilingual subword tokenizer splits them: every naive
    /// verbalizer word is one token; the elaborate verbalizers are three
    /// pieces each except the single-token `fordert`.
    pub fn vocabulary_pieces(self) -> &'static [&'static str] {
        match self {
            PvpPreset::Naive => &["argument", "claim", "Satz", "für", "gegen", "ohne"],
            PvpPreset::Elaborate => &[
                "argument", "##iert", "für", "gegen", "wider", "##spr", "##icht", "fordert", "ist", "neutral", "zu",
            ],
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(PvpPreset::Naive),
            "elaborate" => Ok(PvpPreset::Elaborate),
            other => Err(Error::Config(format!("unknown PVP preset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum PatternPiece {
    Tokens(Vec<TokenId>),
    Mask,
}

/// A tokenizer-validated pattern-verbalizer pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternVerbalizerPair {
    pub definition: PvpDefinition,
    /// Number of mask slots, equal to the longest verbalizer.
    pub mask_count: usize,
    /// Token ids of each label's verbalizer, in `Label::ALL` order.
    pub label_tokens: Vec<Vec<TokenId>>,
    /// Distinct verbalizer tokens in order of first appearance.
    pub vocab: Vec<TokenId>,
    /// Each label's verbalizer as indices into `vocab`.
    pub label_vocab_index: Vec<Vec<usize>>,
    pub(crate) before_input: Vec<PatternPiece>,
    pub(crate) after_input: Vec<PatternPiece>,
}

impl PatternVerbalizerPair {
    /// Tokenize the verbalizers and the pattern under `tokenizer`.
    pub fn verbalize(definition: PvpDefinition, tokenizer: &dyn Tokenizer) -> Result<Self> {
        let mut label_tokens = Vec::with_capacity(Label::COUNT);
        for label in Label::ALL {
            let text = definition.verbalizer(label);
            if text.trim().is_empty() {
                return Err(Error::Config(format!("PVP `{}`: empty verbalizer for {label}", definition.name)));
            }
            let ids = tokenizer.encode(text);
            if ids.contains(&tokenizer.special().unk) {
                return Err(Error::validation(format!(
                    "PVP `{}`: verbalizer `{text}` contains tokens unknown to the tokenizer",
                    definition.name
                )));
            }
            label_tokens.push(ids);
        }
        let mask_count = label_tokens.iter().map(Vec::len).max().unwrap_or(0);

        let parts: Vec<&str> = definition.pattern.split(INPUT_SLOT).collect();
        if parts.len() != 2 {
            return Err(Error::Config(format!(
                "PVP `{}`: pattern needs exactly one {INPUT_SLOT} slot",
                definition.name
            )));
        }
        let before_input = pattern_pieces(parts[0], tokenizer);
        let after_input = pattern_pieces(parts[1], tokenizer);
        let masks = before_input
            .iter()
            .chain(&after_input)
            .filter(|p| matches!(p, PatternPiece::Mask))
            .count();
        if masks != mask_count {
            return Err(Error::Config(format!(
                "PVP `{}`: pattern has {masks} mask slots but the longest verbalizer has {mask_count} tokens",
                definition.name
            )));
        }
        if definition.uniform_length {
            if let Some((label, ids)) = Label::ALL.iter().zip(&label_tokens).find(|(_, ids)| ids.len() != mask_count) {
                return Err(Error::validation(format!(
                    "PVP `{}`: verbalizer for {label} tokenizes to {} tokens, expected {mask_count}; adjust it for this tokenizer",
                    definition.name,
                    ids.len()
                )));
            }
        }

        let mut vocab: Vec<TokenId> = Vec::new();
        let label_vocab_index = label_tokens
            .iter()
            .map(|ids| {
                ids.iter()
                    .map(|id| match vocab.iter().position(|v| v == id) {
                        Some(p) => p,
                        None => {
                            vocab.push(*id);
                            vocab.len() - 1
                        }
                    })
                    .collect()
            })
            .collect();

        Ok(PatternVerbalizerPair {
            definition,
            mask_count,
            label_tokens,
            vocab,
            label_vocab_index,
            before_input,
            after_input,
        })
    }

    pub fn name(&self) -> &str {
        &self.definition.name
    }

    pub fn label_lengths(&self) -> Vec<usize> {
        self.label_tokens.iter().map(Vec::len).collect()
    }
}

fn pattern_pieces(text: &str, tokenizer: &dyn Tokenizer) -> Vec<PatternPiece> {
    let mut pieces = Vec::new();
    for (i, chunk) in text.split(MASK_MARKER).enumerate() {
        if i > 0 {
            pieces.push(PatternPiece::Mask);
        }
        let ids = tokenizer.encode(chunk);
        if !ids.is_empty() {
            pieces.push(PatternPiece::Tokens(ids));
        }
    }
    pieces
}
