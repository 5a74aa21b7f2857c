//! Tokenization and model-input construction.

mod input;
mod pvp;
mod tokenizer;

pub use input::{
    build_pet_input, build_sam_input, build_sam_pet_input, build_standard_input, EncodedInput, Segment,
    SegmentKind,
};
pub use pvp::{PatternVerbalizerPair, PvpDefinition, PvpPreset, INPUT_SLOT, MASK_MARKER};
pub use tokenizer::{SpecialIds, Tokenizer, WordPieceTokenizer};

pub type TokenId = u32;

/// Sequence limit of the reference encoder.
pub const DEFAULT_MAX_LEN: usize = 512;
