use crate::corpus::LabeledDataset;

/// Flip the polarity of every onion-flagged unit, keeping its concept.
/// Applying it twice restores the input.
pub fn swap_onion(ds: &LabeledDataset) -> LabeledDataset {
    let mut out = ds.clone();
    for u in out.units.iter_mut().filter(|u| u.onion) {
        u.label = u.label.flipped();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, SentenceUnit};

    fn unit(id: &str, label: Label, onion: bool) -> SentenceUnit {
        let mut u = SentenceUnit::new(id, "x", label);
        u.onion = onion;
        u
    }

    #[test]
    fn flips_only_flagged_units() {
        let ds = LabeledDataset::new(vec![
            unit("a", Label::ClaimFor, true),
            unit("b", Label::ArgumentAgainst, false),
            unit("c", Label::ArgumentAgainst, true),
            unit("d", Label::NoStance, false),
        ])
        .unwrap();
        let out = swap_onion(&ds);
        assert_eq!(
            out.labels(),
            [Label::ClaimAgainst, Label::ArgumentAgainst, Label::ArgumentFor, Label::NoStance]
        );
        assert_eq!(swap_onion(&out), ds);
    }
}
