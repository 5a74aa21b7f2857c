//! Labeled sentence-level datasets: the data model, the JSON-lines
//! interchange format, coder aggregation, agreement and splitting.

mod alpha;
mod majority;
mod sam;
mod split;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use alpha::{krippendorff_alpha, load_reliability_csv, AlphaResult, ReliabilityMatrix};
pub use majority::aggregate_majority;
pub use sam::{load_sam_tsv, SamRecord, SamStance};
pub use split::{downsample_no_stance, split_dataset, DownsampleReport, SplitRatios};

/// The five mutually exclusive sentence codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    ArgumentFor,
    ArgumentAgainst,
    ClaimFor,
    ClaimAgainst,
    NoStance,
}

/// Argumentative concept of a stance-bearing label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Concept {
    Argument,
    Claim,
}

/// Polarity of a stance-bearing label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    For,
    Against,
}

impl Label {
    pub const ALL: [Label; 5] = [
        Label::ArgumentFor,
        Label::ArgumentAgainst,
        Label::ClaimFor,
        Label::ClaimAgainst,
        Label::NoStance,
    ];

    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::ArgumentFor => "argument_for",
            Label::ArgumentAgainst => "argument_against",
            Label::ClaimFor => "claim_for",
            Label::ClaimAgainst => "claim_against",
            Label::NoStance => "no_stance",
        }
    }

    pub fn is_stance(self) -> bool {
        self != Label::NoStance
    }

    pub fn concept(self) -> Option<Concept> {
        match self {
            Label::ArgumentFor | Label::ArgumentAgainst => Some(Concept::Argument),
            Label::ClaimFor | Label::ClaimAgainst => Some(Concept::Claim),
            Label::NoStance => None,
        }
    }

    pub fn polarity(self) -> Option<Polarity> {
        match self {
            Label::ArgumentFor | Label::ClaimFor => Some(Polarity::For),
            Label::ArgumentAgainst | Label::ClaimAgainst => Some(Polarity::Against),
            Label::NoStance => None,
        }
    }

    /// Same concept, opposite polarity. `NoStance` maps to itself.
    pub fn flipped(self) -> Label {
        match self {
            Label::ArgumentFor => Label::ArgumentAgainst,
            Label::ArgumentAgainst => Label::ArgumentFor,
            Label::ClaimFor => Label::ClaimAgainst,
            Label::ClaimAgainst => Label::ClaimFor,
            Label::NoStance => Label::NoStance,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Label::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::argument(format!("unknown label `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// One coding unit: a target sentence with up to two neighbours on each side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceUnit {
    pub unit_id: String,
    pub doc_id: String,
    pub sent_index: u32,
    pub text: String,
    /// Preceding sentences in reading order; the nearest one is last.
    #[serde(default)]
    pub context_before: Vec<String>,
    /// Following sentences in reading order; the nearest one is first.
    #[serde(default)]
    pub context_after: Vec<String>,
    pub label: Label,
    #[serde(default)]
    pub onion: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coder_labels: Option<BTreeMap<String, Label>>,
}

pub const MAX_CONTEXT: usize = 2;

impl SentenceUnit {
    pub fn new(unit_id: impl Into<String>, text: impl Into<String>, label: Label) -> Self {
        let unit_id = unit_id.into();
        SentenceUnit {
            doc_id: unit_id.clone(),
            unit_id,
            sent_index: 0,
            text: text.into(),
            context_before: Vec::new(),
            context_after: Vec::new(),
            label,
            onion: false,
            coder_labels: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::validation(format!("unit `{}`: empty text", self.unit_id)));
        }
        if self.context_before.len() > MAX_CONTEXT || self.context_after.len() > MAX_CONTEXT {
            return Err(Error::validation(format!(
                "unit `{}`: at most {MAX_CONTEXT} context sentences per side (got {} before, {} after)",
                self.unit_id,
                self.context_before.len(),
                self.context_after.len()
            )));
        }
        if self.onion && !self.label.is_stance() {
            return Err(Error::validation(format!(
                "unit `{}`: onion flag on a no_stance unit",
                self.unit_id
            )));
        }
        Ok(())
    }

    /// The label as coded before any onion swap, given that `swapped` tells
    /// whether the swap has been applied to this dataset.
    pub fn original_label(&self, swapped: bool) -> Label {
        if swapped && self.onion {
            self.label.flipped()
        } else {
            self.label
        }
    }
}

/// Serialized form of a unit; carries the optional split tag.
#[derive(Serialize, Deserialize)]
struct Record {
    #[serde(flatten)]
    unit: SentenceUnit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledDataset {
    pub units: Vec<SentenceUnit>,
    /// Per-unit split tags, parallel to `units`, when assigned.
    pub splits: Option<Vec<Split>>,
    pub metadata: BTreeMap<String, String>,
}

impl LabeledDataset {
    pub fn new(units: Vec<SentenceUnit>) -> Result<Self> {
        let ds = LabeledDataset {
            units,
            splits: None,
            metadata: BTreeMap::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.units.len());
        for u in &self.units {
            u.validate()?;
            if !seen.insert(u.unit_id.as_str()) {
                return Err(Error::validation(format!("duplicate unit_id `{}`", u.unit_id)));
            }
        }
        if let Some(splits) = &self.splits {
            if splits.len() != self.units.len() {
                return Err(Error::validation(format!(
                    "split tags cover {} of {} units",
                    splits.len(),
                    self.units.len()
                )));
            }
        }
        Ok(())
    }

    /// Per-label counts in `Label::ALL` order.
    pub fn label_counts(&self) -> [usize; Label::COUNT] {
        let mut counts = [0; Label::COUNT];
        for u in &self.units {
            counts[u.label.index()] += 1;
        }
        counts
    }

    pub fn labels(&self) -> Vec<Label> {
        self.units.iter().map(|u| u.label).collect()
    }

    /// The units tagged with `split`, as a dataset without split tags.
    pub fn subset(&self, split: Split) -> LabeledDataset {
        let units = match &self.splits {
            Some(tags) => self
                .units
                .iter()
                .zip(tags)
                .filter(|(_, t)| **t == split)
                .map(|(u, _)| u.clone())
                .collect(),
            None => Vec::new(),
        };
        LabeledDataset {
            units,
            splits: None,
            metadata: self.metadata.clone(),
        }
    }

    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            units: indices.iter().map(|&i| self.units[i].clone()).collect(),
            splits: self
                .splits
                .as_ref()
                .map(|s| indices.iter().map(|&i| s[i]).collect()),
            metadata: self.metadata.clone(),
        }
    }
}

/// Read a JSON-lines dataset. Blank lines are skipped.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut units = Vec::new();
    let mut splits = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        record
            .unit
            .validate()
            .map_err(|e| Error::validation(format!("line {lineno}: {e}")))?;
        if !ids.insert(record.unit.unit_id.clone()) {
            return Err(Error::validation(format!(
                "line {lineno}: duplicate unit_id `{}`",
                record.unit.unit_id
            )));
        }
        splits.push(record.split);
        units.push(record.unit);
    }
    let tagged = splits.iter().filter(|s| s.is_some()).count();
    let splits = if tagged == 0 {
        None
    } else if tagged == splits.len() {
        Some(splits.into_iter().flatten().collect())
    } else {
        return Err(Error::validation(format!(
            "{}: split tags present on {tagged} of {} records",
            path.display(),
            units.len()
        )));
    };
    Ok(LabeledDataset {
        units,
        splits,
        metadata: BTreeMap::new(),
    })
}

pub fn save_dataset(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, unit) in ds.units.iter().enumerate() {
        let record = Record {
            unit: unit.clone(),
            split: ds.splits.as_ref().map(|s| s[i]),
        };
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Floor of `ratio * n`, tolerant to representation error in the product
/// (`0.7 * 100.0` is not exactly 70).
pub(crate) fn floor_share(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + 1e-9).floor() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    const A: &str = r#"{"unit_id":"a","doc_id":"d1","sent_index":0,"text":"Erster Satz.","context_before":[],"context_after":["Zweiter."],"label":"claim_for","onion":false}"#;
    const B: &str = r#"{"unit_id":"b","doc_id":"d1","sent_index":1,"text":"Zweiter.","context_before":["Erster Satz."],"context_after":[],"label":"no_stance","onion":false}"#;
    const C: &str = r#"{"unit_id":"c","doc_id":"d2","sent_index":0,"text":"Dritter.","label":"argument_against","onion":true,"coder_labels":{"c1":"argument_against","c2":"claim_against"}}"#;

    #[test]
    fn loads_records_in_file_order() {
        let f = write_lines(&[A, B, "", C]);
        let ds = load_dataset(f.path()).unwrap();
        let ids: Vec<_> = ds.units.iter().map(|u| u.unit_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert!(ds.units[2].onion);
        assert_eq!(ds.units[2].coder_labels.as_ref().unwrap().len(), 2);
        assert!(ds.splits.is_none());
    }

    #[test]
    fn onion_on_no_stance_is_rejected() {
        let bad = B.replace(r#""onion":false"#, r#""onion":true"#);
        let f = write_lines(&[A, &bad]);
        let err = load_dataset(f.path()).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("line 2")), "{err}");
    }

    #[test]
    fn three_context_sentences_are_rejected() {
        let bad = A.replace(r#""context_before":[]"#, r#""context_before":["x","y","z"]"#);
        let f = write_lines(&[&bad]);
        assert!(matches!(load_dataset(f.path()), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_record_names_line() {
        let f = write_lines(&[A, "{not json"]);
        match load_dataset(f.path()) {
            Err(Error::Load { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected load error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let f = write_lines(&[A, A]);
        assert!(matches!(load_dataset(f.path()), Err(Error::Validation(_))));
    }

    #[test]
    fn partial_split_tags_are_rejected() {
        let tagged = A.replace(r#""onion":false"#, r#""onion":false,"split":"train""#);
        let f = write_lines(&[&tagged, B]);
        assert!(matches!(load_dataset(f.path()), Err(Error::Validation(_))));
    }

    #[test]
    fn label_helpers() {
        for l in Label::ALL {
            assert_eq!(l.flipped().flipped(), l);
            assert_eq!(l.as_str().parse::<Label>().unwrap(), l);
            assert_eq!(Label::from_index(l.index()), Some(l));
        }
        assert_eq!(Label::ClaimFor.flipped(), Label::ClaimAgainst);
        assert_eq!(Label::NoStance.flipped(), Label::NoStance);
    }

    #[test]
    fn floor_share_absorbs_rounding() {
        assert_eq!(floor_share(0.7, 100), 70);
        assert_eq!(floor_share(0.3, 10), 3);
        assert_eq!(floor_share(0.025, 46), 1);
    }
}
