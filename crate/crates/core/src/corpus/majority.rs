use super::Label;
use crate::error::{Error, Result};

/// Majority label among coder votes.
///
/// A label wins when at least `quorum` coders chose it and strictly more
/// coders chose it than any other label. Ties and sub-quorum pluralities
/// yield `None`, which excludes the unit from training data.
pub fn aggregate_majority<'a, I>(votes: I, quorum: usize) -> Result<Option<Label>>
where
    I: IntoIterator<Item = &'a Label>,
{
    if quorum == 0 {
        return Err(Error::argument("quorum must be positive"));
    }
    let mut counts = [0usize; Label::COUNT];
    let mut coders = 0;
    for l in votes {
        counts[l.index()] += 1;
        coders += 1;
    }
    if coders == 0 {
        return Err(Error::argument("no coder labels"));
    }
    if quorum > coders {
        return Err(Error::argument(format!(
            "quorum {quorum} exceeds the number of coders ({coders})"
        )));
    }
    let best = *counts.iter().max().unwrap_or(&0);
    let mut winners = Label::ALL.iter().filter(|l| counts[l.index()] == best);
    let winner = winners.next().copied();
    if winners.next().is_some() || best < quorum {
        return Ok(None);
    }
    Ok(winner)
}
