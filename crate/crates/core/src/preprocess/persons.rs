use std::collections::{BTreeSet, HashMap};

use aho_corasick::{AhoCorasick, MatchKind};
use rand::seq::IndexedRandom;

use crate::corpus::{LabeledDataset, SentenceUnit};
use crate::error::{Error, Result};
use crate::seed;

/// Character-offset span of a recognized person mention.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

/// Which text field of a unit a span lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Text,
    ContextBefore(usize),
    ContextAfter(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonSpan {
    pub field: Field,
    pub span: Span,
}

/// Finds person mentions. Implementations must be deterministic and return
/// non-overlapping spans sorted by start.
pub trait PersonRecognizer {
    fn recognize(&self, text: &str) -> Vec<Span>;
}

/// Recognizes a fixed list of surface forms at word boundaries, preferring
/// the longest match.
pub struct DictionaryRecognizer {
    matcher: AhoCorasick,
    surfaces: Vec<String>,
}

impl DictionaryRecognizer {
    pub fn new<I, S>(surfaces: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let surfaces: Vec<String> = surfaces
            .into_iter()
            .map(Into::into)
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let matcher = AhoCorasick::builder()
            .match_kind(MatchKind::LeftmostLongest)
            .build(&surfaces)
            .map_err(|e| Error::Config(format!("person dictionary: {e}")))?;
        Ok(DictionaryRecognizer { matcher, surfaces })
    }

    /// One surface per line; blank lines and `#` comments are ignored.
    pub fn from_list(contents: &str) -> Result<Self> {
        Self::new(
            contents
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

impl PersonRecognizer for DictionaryRecognizer {
    fn recognize(&self, text: &str) -> Vec<Span> {
        let mut spans = Vec::new();
        for m in self.matcher.find_iter(text) {
            let before = text[..m.start()].chars().next_back();
            let after = text[m.end()..].chars().next();
            if before.is_some_and(is_word_char) || after.is_some_and(is_word_char) {
                continue;
            }
            let start = text[..m.start()].chars().count();
            let surface = &text[m.start()..m.end()];
            spans.push(Span {
                start,
                end: start + surface.chars().count(),
                surface: surface.to_string(),
            });
        }
        spans
    }
}

fn fields(u: &SentenceUnit) -> Vec<(Field, &str)> {
    let mut out = vec![(Field::Text, u.text.as_str())];
    out.extend(
        u.context_before
            .iter()
            .enumerate()
            .map(|(i, s)| (Field::ContextBefore(i), s.as_str())),
    );
    out.extend(
        u.context_after
            .iter()
            .enumerate()
            .map(|(i, s)| (Field::ContextAfter(i), s.as_str())),
    );
    out
}

fn field_mut(u: &mut SentenceUnit, f: Field) -> &mut String {
    match f {
        Field::Text => &mut u.text,
        Field::ContextBefore(i) => &mut u.context_before[i],
        Field::ContextAfter(i) => &mut u.context_after[i],
    }
}

/// All person mentions in a unit, target sentence first, then contexts.
pub fn recognize_unit(u: &SentenceUnit, recognizer: &dyn PersonRecognizer) -> Vec<PersonSpan> {
    fields(u)
        .into_iter()
        .flat_map(|(field, text)| {
            recognizer
                .recognize(text)
                .into_iter()
                .map(move |span| PersonSpan { field, span })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ShuffleReport {
    pub pool: Vec<String>,
    pub replaced_mentions: usize,
    pub units_touched: usize,
    /// Set when no person was found anywhere; the dataset is returned as is.
    pub empty_pool: bool,
}

/// Replace every recognized person with a name drawn uniformly from the set
/// of all distinct person surfaces in the dataset. Within one unit (target
/// and contexts) a given name always maps to the same replacement; each unit
/// draws its own mapping.
pub fn shuffle_persons(
    ds: &LabeledDataset,
    recognizer: &dyn PersonRecognizer,
    seed: u64,
) -> (LabeledDataset, ShuffleReport) {
    let mentions: Vec<Vec<PersonSpan>> = ds
        .units
        .iter()
        .map(|u| recognize_unit(u, recognizer))
        .collect();
    let pool: Vec<String> = mentions
        .iter()
        .flatten()
        .map(|m| m.span.surface.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut report = ShuffleReport {
        pool: pool.clone(),
        replaced_mentions: 0,
        units_touched: 0,
        empty_pool: pool.is_empty(),
    };
    if pool.is_empty() {
        return (ds.clone(), report);
    }

    let mut out = ds.clone();
    for (unit, spans) in out.units.iter_mut().zip(&mentions) {
        if spans.is_empty() {
            continue;
        }
        let mut rng = seed::derive_rng(seed, &format!("persons/{}", unit.unit_id));
        let mut mapping: HashMap<&str, &str> = HashMap::new();
        for m in spans {
            if !mapping.contains_key(m.span.surface.as_str()) {
                let pick = pool.choose(&mut rng).expect("pool is non-empty");
                mapping.insert(m.span.surface.as_str(), pick.as_str());
            }
        }
        // Rewrite right to left so earlier offsets stay valid.
        for m in spans.iter().rev() {
            let text = field_mut(unit, m.field);
            let (b0, b1) = char_range_to_bytes(text, m.span.start, m.span.end);
            text.replace_range(b0..b1, mapping[m.span.surface.as_str()]);
        }
        report.replaced_mentions += spans.len();
        report.units_touched += 1;
    }
    (out, report)
}

fn char_range_to_bytes(s: &str, start: usize, end: usize) -> (usize, usize) {
    let mut idx = s.char_indices().map(|(b, _)| b).chain(std::iter::once(s.len()));
    let b0 = idx.nth(start).unwrap_or(s.len());
    let b1 = if end > start {
        idx.nth(end - start - 1).unwrap_or(s.len())
    } else {
        b0
    };
    (b0, b1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    fn recognizer() -> DictionaryRecognizer {
        DictionaryRecognizer::new(["Scholz", "Olaf Scholz", "Baerbock", "Merz", "Strack-Zimmermann"]).unwrap()
    }

    #[test]
    fn dictionary_respects_word_boundaries_and_longest_match() {
        let r = recognizer();
        let spans = r.recognize("Kanzler Olaf Scholz traf Baerbock, nicht Scholzens Team.");
        let surfaces: Vec<_> = spans.iter().map(|s| s.surface.as_str()).collect();
        assert_eq!(surfaces, ["Olaf Scholz", "Baerbock"]);
        assert_eq!(spans[0].start, 8);
        assert_eq!(spans[0].end, 19);
    }

    #[test]
    fn char_offsets_survive_umlauts() {
        let r = recognizer();
        let text = "Für Merz gilt das.";
        let s = &r.recognize(text)[0];
        let got: String = text.chars().skip(s.start).take(s.end - s.start).collect();
        assert_eq!(got, "Merz");
    }

    #[test]
    fn single_entity_pool_maps_everything_to_it() {
        let r = DictionaryRecognizer::new(["Scholz"]).unwrap();
        let ds = LabeledDataset::new(vec![SentenceUnit::new("a", "Scholz sagt nein.", Label::ClaimAgainst)]).unwrap();
        let (out, rep) = shuffle_persons(&ds, &r, 1);
        assert_eq!(out, ds);
        assert_eq!(rep.replaced_mentions, 1);
    }

    #[test]
    fn repeated_mentions_share_a_replacement() {
        let r = recognizer();
        let mut u = SentenceUnit::new("a", "Baerbock sagt, Baerbock bleibt dabei.", Label::ClaimFor);
        u.context_after = vec!["Merz widerspricht Baerbock.".into()];
        let ds = LabeledDataset::new(vec![u]).unwrap();
        for seed in 0..20 {
            let (out, _) = shuffle_persons(&ds, &r, seed);
            let u = &out.units[0];
            let spans = recognize_unit(u, &r);
            let text_names: Vec<_> = r.recognize(&u.text).into_iter().map(|s| s.surface).collect();
            assert_eq!(text_names.len(), 2, "{}", u.text);
            assert_eq!(text_names[0], text_names[1]);
            assert!(spans.len() >= 3);
            // the context mention of the same person received the same name
            assert!(u.context_after[0].ends_with(&format!("{}.", text_names[0])));
        }
    }

    #[test]
    fn empty_pool_returns_input() {
        let r = recognizer();
        let ds = LabeledDataset::new(vec![SentenceUnit::new("a", "Niemand hier.", Label::NoStance)]).unwrap();
        let (out, rep) = shuffle_persons(&ds, &r, 1);
        assert!(rep.empty_pool);
        assert_eq!(out, ds);
    }

    #[test]
    fn deterministic_per_seed() {
        let r = recognizer();
        let ds = LabeledDataset::new(
            (0..30)
                .map(|i| SentenceUnit::new(format!("u{i}"), format!("Merz und Scholz, Fall {i}."), Label::ClaimFor))
                .collect(),
        )
        .unwrap();
        let (a, _) = shuffle_persons(&ds, &r, 4);
        let (b, _) = shuffle_persons(&ds, &r, 4);
        let (c, _) = shuffle_persons(&ds, &r, 5);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.labels(), ds.labels());
    }
}
