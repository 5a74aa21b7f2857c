use serde::{Deserialize, Serialize};

use super::Confusion;
use crate::corpus::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance3 {
    For,
    Against,
    NoStance,
}

impl Stance3 {
    pub const ALL: [Stance3; 3] = [Stance3::For, Stance3::Against, Stance3::NoStance];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stance3::For => "for",
            Stance3::Against => "against",
            Stance3::NoStance => "no_stance",
        }
    }
}

pub fn collapse_stance(label: Label) -> Stance3 {
    match label {
        Label::ArgumentFor | Label::ClaimFor => Stance3::For,
        Label::ArgumentAgainst | Label::ClaimAgainst => Stance3::Against,
        Label::NoStance => Stance3::NoStance,
    }
}

/// Merge a 5-class confusion into the 3-class stance confusion.
pub fn collapse_confusion(c: &Confusion) -> Confusion {
    let mut out = Confusion::new(3);
    for g in Label::ALL {
        for p in Label::ALL {
            out.add(collapse_stance(g).index(), collapse_stance(p).index(), c.get(g.index(), p.index()));
        }
    }
    out
}

/// Disjoint tally of misclassifications.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    /// Claim and argument confused, stance right.
    pub concept_only: u64,
    /// Concept right, for and against confused.
    pub stance_only: u64,
    /// Both concept and stance wrong.
    pub both: u64,
    /// One side is no_stance.
    pub stance_vs_no_stance: u64,
}

impl ErrorBreakdown {
    pub fn total(&self) -> u64 {
        self.concept_only + self.stance_only + self.both + self.stance_vs_no_stance
    }
}

pub fn error_breakdown(c: &Confusion) -> ErrorBreakdown {
    let mut b = ErrorBreakdown::default();
    for g in Label::ALL {
        for p in Label::ALL {
            let n = c.get(g.index(), p.index());
            if g == p || n == 0 {
                continue;
            }
            let bin = match (g.is_stance() && p.is_stance(), g.concept() == p.concept(), g.polarity() == p.polarity()) {
                (false, _, _) => &mut b.stance_vs_no_stance,
                (true, false, true) => &mut b.concept_only,
                (true, true, false) => &mut b.stance_only,
                (true, _, _) => &mut b.both,
            };
            *bin += n;
        }
    }
    debug_assert_eq!(b.total(), c.total() - c.trace());
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{confusion, metrics};
    use proptest::prelude::*;

    #[test]
    fn collapse_map() {
        assert_eq!(collapse_stance(Label::ClaimFor), Stance3::For);
        assert_eq!(collapse_stance(Label::ArgumentAgainst), Stance3::Against);
        assert_eq!(collapse_stance(Label::NoStance), Stance3::NoStance);
    }

    #[test]
    fn bins() {
        let c = confusion(&[Label::ArgumentFor], &[Label::ClaimFor]).unwrap();
        assert_eq!(error_breakdown(&c).concept_only, 1);
        let c = confusion(&[Label::ClaimFor], &[Label::ClaimAgainst]).unwrap();
        assert_eq!(error_breakdown(&c).stance_only, 1);
        let c = confusion(&[Label::ClaimFor], &[Label::ArgumentAgainst]).unwrap();
        assert_eq!(error_breakdown(&c).both, 1);
        let c = confusion(&[Label::NoStance, Label::ClaimFor], &[Label::ClaimFor, Label::NoStance]).unwrap();
        assert_eq!(error_breakdown(&c).stance_vs_no_stance, 2);
    }

    proptest! {
        #[test]
        fn routes_agree_and_bins_partition(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..40)) {
            let gold: Vec<Label> = pairs.iter().map(|p| Label::from_index(p.0).unwrap()).collect();
            let pred: Vec<Label> = pairs.iter().map(|p| Label::from_index(p.1).unwrap()).collect();
            let c = confusion(&gold, &pred).unwrap();
            let g3: Vec<usize> = gold.iter().map(|&l| collapse_stance(l).index()).collect();
            let p3: Vec<usize> = pred.iter().map(|&l| collapse_stance(l).index()).collect();
            let direct = Confusion::from_indices(3, &g3, &p3).unwrap();
            prop_assert_eq!(&collapse_confusion(&c), &direct);
            prop_assert_eq!(metrics(&collapse_confusion(&c)).unwrap(), metrics(&direct).unwrap());
            prop_assert_eq!(error_breakdown(&c).total(), c.total() - c.trace());
        }
    }
}
