//! Seeded toy corpora: each label owns a handful of cue words, and every
//! sentence mixes cue words of its label with shared filler.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::corpus::{Label, LabeledDataset, SamRecord, SamStance, SentenceUnit};
use crate::error::Result;
use crate::seed;

const CUES: [[&str; 4]; 5] = [
    ["weil", "deshalb", "liefern", "hilft"],
    ["denn", "folglich", "eskaliert", "gefahr"],
    ["fordert", "verlangt", "unterstuetzt", "befuerwortet"],
    ["lehnt", "verweigert", "bremst", "zoegert"],
    ["wetter", "bericht", "montag", "sitzung"],
];

const FILLER: [&str; 16] = [
    "die", "der", "das", "regierung", "kanzler", "panzer", "ukraine", "waffen", "heute", "nach", "und", "mit",
    "berlin", "zeitung", "woche", "frage",
];

pub const PERSONS: [&str; 6] = ["Anna Berg", "Olaf Kranz", "Lena Vogt", "Paul Stein", "Maria Wolf", "Jonas Hahn"];

fn sentence(label: Option<Label>, rng: &mut impl Rng) -> String {
    let mut words: Vec<&str> = (0..rng.random_range(2..5)).map(|_| *FILLER.choose(rng).unwrap()).collect();
    if let Some(l) = label {
        for _ in 0..rng.random_range(2..4) {
            let w = *CUES[l.index()].choose(rng).unwrap();
            let at = rng.random_range(0..=words.len());
            words.insert(at, w);
        }
    }
    words.join(" ")
}

/// `n` units with labels cycling through all five classes, one context
/// sentence on each side.
pub fn separable_dataset(n: usize, seed: u64) -> Result<LabeledDataset> {
    let mut rng = seed::derive_rng(seed, "synthetic");
    let units = (0..n)
        .map(|i| {
            let label = Label::ALL[i % Label::COUNT];
            let mut u = SentenceUnit::new(format!("u{i:05}"), sentence(Some(label), &mut rng), label);
            u.doc_id = format!("d{:04}", i / 10);
            u.sent_index = (i % 10) as u32;
            u.context_before = vec![sentence(None, &mut rng)];
            u.context_after = vec![sentence(None, &mut rng)];
            u
        })
        .collect();
    LabeledDataset::new(units)
}

/// Like [`separable_dataset`] with a person name in every target sentence,
/// often repeated in the context, and roughly a fifth of stance units
/// flagged as onion.
pub fn person_dataset(n: usize, seed: u64) -> Result<LabeledDataset> {
    let mut ds = separable_dataset(n, seed)?;
    let mut rng = seed::derive_rng(seed, "persons");
    for u in &mut ds.units {
        let who = *PERSONS.choose(&mut rng).unwrap();
        u.text = format!("{who} sagt: {}", u.text);
        if rng.random_bool(0.5) {
            u.context_after[0] = format!("{} meint {who}", u.context_after[0]);
        }
        if rng.random_bool(0.3) {
            let other = *PERSONS.choose(&mut rng).unwrap();
            u.context_before[0] = format!("{other} und {}", u.context_before[0]);
        }
        u.onion = u.label.is_stance() && rng.random_bool(0.2);
    }
    ds.validate()?;
    Ok(ds)
}

pub fn sam_records(n: usize, seed: u64) -> Vec<SamRecord> {
    let mut rng = seed::derive_rng(seed, "sam");
    let topics = ["nuclear energy", "school uniforms", "minimum wage"];
    (0..n)
        .map(|i| {
            let stance = [SamStance::Pro, SamStance::Contra, SamStance::Neutral][i % 3];
            let label = match stance {
                SamStance::Pro => Label::ClaimFor,
                SamStance::Contra => Label::ClaimAgainst,
                SamStance::Neutral => Label::NoStance,
            };
            SamRecord {
                topic: topics[i % topics.len()].to_string(),
                sentence: sentence(Some(label), &mut rng),
                stance,
                set: Some("train".into()),
            }
        })
        .collect()
}

/// Every word the generators can emit, for building a tokenizer.
pub fn vocabulary() -> Vec<String> {
    let mut words: Vec<String> = CUES.iter().flatten().chain(FILLER.iter()).map(|s| s.to_string()).collect();
    words.extend(["sagt", "meint", "und", ":", "nuclear", "energy", "school", "uniforms", "minimum", "wage"].map(String::from));
    words.extend(PERSONS.iter().flat_map(|p| p.split(' ')).map(String::from));
    words.extend(crate::training::TASK_TOPIC.split(' ').map(String::from));
    words
}
