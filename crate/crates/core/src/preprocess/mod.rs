//! Label and text transformations applied before training, and the two
//! few-shot sampling protocols.

mod onion;
mod persons;
mod sampling;

pub use onion::swap_onion;
pub use persons::{
    shuffle_persons, DictionaryRecognizer, Field, PersonRecognizer, PersonSpan, ShuffleReport, Span,
};
pub use sampling::{
    sample_stratified, sample_stratified_by, sample_tfs, FewShotPlan, SamplingMode, STANDARD_PROPORTIONS,
};
