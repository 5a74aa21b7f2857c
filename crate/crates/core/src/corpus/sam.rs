//! Loader for near-domain stance data in the tab-separated layout of the
//! UKP sentential argument mining corpus (`topic`, `sentence`, `annotation`,
//! `set` columns; other columns ignored).

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamStance {
    Pro,
    Contra,
    Neutral,
}

impl SamStance {
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    fn parse(s: &str) -> Option<SamStance> {
        match s.trim() {
            "Argument_for" | "pro" => Some(SamStance::Pro),
            "Argument_against" | "contra" | "con" => Some(SamStance::Contra),
            "NoArgument" | "neutral" => Some(SamStance::Neutral),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamRecord {
    pub topic: String,
    pub sentence: String,
    pub stance: SamStance,
    pub set: Option<String>,
}

#[derive(Deserialize)]
struct Row {
    topic: String,
    sentence: String,
    annotation: String,
    #[serde(default)]
    set: Option<String>,
}

pub fn load_sam_tsv(path: impl AsRef<Path>) -> Result<Vec<SamRecord>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .from_path(path)?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        // header is line 1
        let line = i + 2;
        let row = row.map_err(|e| Error::Load {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        let stance = SamStance::parse(&row.annotation).ok_or_else(|| Error::Load {
            path: path.to_path_buf(),
            line,
            message: format!("unknown annotation `{}`", row.annotation),
        })?;
        out.push(SamRecord {
            topic: row.topic,
            sentence: row.sentence,
            stance,
            set: row.set.filter(|s| !s.is_empty()),
        });
    }
    Ok(out)
}
