use super::pvp::PatternPiece;
use super::{PatternVerbalizerPair, TokenId, Tokenizer};
use crate::corpus::SentenceUnit;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SegmentKind {
    Special,
    Target,
    Before,
    After,
    Topic,
    Pattern,
}

/// Half-open token range `[start, end)` of one kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInput {
    pub ids: Vec<TokenId>,
    pub mask_positions: Vec<usize>,
    /// Contiguous, non-overlapping spans covering `ids`.
    pub segments: Vec<Segment>,
    /// Some context or target tokens were cut to fit the length limit.
    pub truncated: bool,
    /// The target sentence itself was cut.
    pub target_truncated: bool,
}

impl EncodedInput {
    /// Untagged input: a single special segment covering `ids`.
    pub fn from_ids(ids: Vec<TokenId>, mask_positions: Vec<usize>) -> Self {
        let end = ids.len();
        EncodedInput {
            ids,
            mask_positions,
            segments: vec![Segment {
                kind: SegmentKind::Special,
                start: 0,
                end,
            }],
            truncated: false,
            target_truncated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn segment_tokens(&self, kind: SegmentKind) -> Vec<TokenId> {
        self.segments
            .iter()
            .filter(|s| s.kind == kind)
            .flat_map(|s| self.ids[s.start..s.end].iter().copied())
            .collect()
    }
}

/// Token pieces, either protected from truncation (prefix and suffix) or
/// cut from the right (body).
#[derive(Default)]
struct Layout {
    prefix: Vec<(SegmentKind, Vec<TokenId>, bool)>,
    body: Vec<(SegmentKind, Vec<TokenId>)>,
    suffix: Vec<(SegmentKind, Vec<TokenId>, bool)>,
}

impl Layout {
    fn push_pattern(pieces: &[PatternPiece], mask: TokenId, out: &mut Vec<(SegmentKind, Vec<TokenId>, bool)>) {
        for p in pieces {
            match p {
                PatternPiece::Tokens(ids) => out.push((SegmentKind::Pattern, ids.clone(), false)),
                PatternPiece::Mask => out.push((SegmentKind::Pattern, vec![mask], true)),
            }
        }
    }

    fn assemble(self, end_marker: TokenId, max_len: usize) -> Result<EncodedInput> {
        let protected: usize = self.prefix.iter().chain(&self.suffix).map(|p| p.1.len()).sum::<usize>() + 1;
        if protected > max_len {
            return Err(Error::argument(format!(
                "protected tokens ({protected}) exceed the length limit {max_len}"
            )));
        }
        let mut budget = max_len - protected;

        let mut ids = Vec::with_capacity(max_len);
        let mut segments: Vec<Segment> = Vec::new();
        let mut mask_positions = Vec::new();
        let mut push = |kind: SegmentKind, toks: &[TokenId], is_mask: bool, ids: &mut Vec<TokenId>| {
            if toks.is_empty() {
                return;
            }
            let start = ids.len();
            if is_mask {
                mask_positions.push(start);
            }
            ids.extend_from_slice(toks);
            match segments.last_mut() {
                Some(last) if last.kind == kind && last.end == start => last.end = ids.len(),
                _ => segments.push(Segment {
                    kind,
                    start,
                    end: ids.len(),
                }),
            }
        };

        for (kind, toks, is_mask) in &self.prefix {
            push(*kind, toks, *is_mask, &mut ids);
        }
        let mut truncated = false;
        let mut target_truncated = false;
        for (kind, toks) in &self.body {
            let take = toks.len().min(budget);
            if take < toks.len() {
                truncated = true;
                if *kind == SegmentKind::Target {
                    target_truncated = true;
                }
            }
            push(*kind, &toks[..take], false, &mut ids);
            budget -= take;
        }
        for (kind, toks, is_mask) in &self.suffix {
            push(*kind, toks, *is_mask, &mut ids);
        }
        push(SegmentKind::Special, &[end_marker], false, &mut ids);

        Ok(EncodedInput {
            ids,
            mask_positions,
            segments,
            truncated,
            target_truncated,
        })
    }
}

/// `target </s> before </s> after`, the contextual input body.
fn body(u: &SentenceUnit, t: &dyn Tokenizer) -> Vec<(SegmentKind, Vec<TokenId>)> {
    let sep = t.special().sep;
    let join = |sents: &[String]| sents.iter().flat_map(|s| t.encode(s)).collect::<Vec<_>>();
    vec![
        (SegmentKind::Target, t.encode(&u.text)),
        (SegmentKind::Special, vec![sep]),
        (SegmentKind::Before, join(&u.context_before)),
        (SegmentKind::Special, vec![sep]),
        (SegmentKind::After, join(&u.context_after)),
    ]
}

fn topic_prefix(topic: &str, t: &dyn Tokenizer) -> Result<Vec<(SegmentKind, Vec<TokenId>, bool)>> {
    let ids = t.encode(topic);
    if topic.trim().is_empty() || ids.is_empty() {
        return Err(Error::argument("topic must be non-empty"));
    }
    Ok(vec![
        (SegmentKind::Topic, ids, false),
        (SegmentKind::Special, vec![t.special().sep], false),
    ])
}

fn begin(t: &dyn Tokenizer) -> (SegmentKind, Vec<TokenId>, bool) {
    (SegmentKind::Special, vec![t.special().begin], false)
}

/// `<s> target </s> before </s> after </s>`, cut from the right so that the
/// following context goes first, then the preceding context, then the
/// target.
pub fn build_standard_input(u: &SentenceUnit, t: &dyn Tokenizer, max_len: usize) -> Result<EncodedInput> {
    Layout {
        prefix: vec![begin(t)],
        body: body(u, t),
        suffix: vec![],
    }
    .assemble(t.special().sep, max_len)
}

/// `<s> topic </s> target </s> before </s> after </s>`; the topic is never cut.
pub fn build_sam_input(topic: &str, u: &SentenceUnit, t: &dyn Tokenizer, max_len: usize) -> Result<EncodedInput> {
    let mut prefix = vec![begin(t)];
    prefix.extend(topic_prefix(topic, t)?);
    Layout {
        prefix,
        body: body(u, t),
        suffix: vec![],
    }
    .assemble(t.special().sep, max_len)
}

/// The pattern with its masks around the contextual body. Pattern tokens and
/// masks are never cut.
pub fn build_pet_input(
    u: &SentenceUnit,
    pvp: &PatternVerbalizerPair,
    t: &dyn Tokenizer,
    max_len: usize,
) -> Result<EncodedInput> {
    pet_layout(vec![begin(t)], u, pvp, t).assemble(t.special().sep, max_len)
}

/// `<s> topic </s> [PET input]`.
pub fn build_sam_pet_input(
    topic: &str,
    u: &SentenceUnit,
    pvp: &PatternVerbalizerPair,
    t: &dyn Tokenizer,
    max_len: usize,
) -> Result<EncodedInput> {
    let mut prefix = vec![begin(t)];
    prefix.extend(topic_prefix(topic, t)?);
    pet_layout(prefix, u, pvp, t).assemble(t.special().sep, max_len)
}

fn pet_layout(
    mut prefix: Vec<(SegmentKind, Vec<TokenId>, bool)>,
    u: &SentenceUnit,
    pvp: &PatternVerbalizerPair,
    t: &dyn Tokenizer,
) -> Layout {
    let mask = t.special().mask;
    Layout::push_pattern(&pvp.before_input, mask, &mut prefix);
    let mut suffix = Vec::new();
    Layout::push_pattern(&pvp.after_input, mask, &mut suffix);
    Layout {
        prefix,
        body: body(u, t),
        suffix,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use crate::encoding::{PvpPreset, WordPieceTokenizer};
    use proptest::prelude::*;

    fn tok() -> WordPieceTokenizer {
        let mut pieces: Vec<&str> = PvpPreset::Naive.vocabulary_pieces().to_vec();
        pieces.extend_from_slice(PvpPreset::Elaborate.vocabulary_pieces());
        WordPieceTokenizer::from_corpus(
            ["a b c d e f g h Dies ist ein Dieser Satz Waffenlieferungen an die Ukraine : Waffenlieferung"],
            pieces,
        )
        .unwrap()
    }

    fn unit(text: &str, before: &[&str], after: &[&str]) -> SentenceUnit {
        let mut u = SentenceUnit::new("u", text, Label::ClaimFor);
        u.context_before = before.iter().map(|s| s.to_string()).collect();
        u.context_after = after.iter().map(|s| s.to_string()).collect();
        u
    }

    fn check_tiling(e: &EncodedInput) {
        let mut pos = 0;
        for s in &e.segments {
            assert_eq!(s.start, pos);
            assert!(s.end > s.start);
            pos = s.end;
        }
        assert_eq!(pos, e.ids.len());
    }

    #[test]
    fn empty_contexts() {
        let t = tok();
        let s = t.special();
        let e = build_standard_input(&unit("a b", &[], &[]), &t, 512).unwrap();
        let ab = t.encode("a b");
        assert_eq!(e.ids, [vec![s.begin], ab, vec![s.sep, s.sep, s.sep]].concat());
        assert!(e.mask_positions.is_empty());
        check_tiling(&e);
    }

    #[test]
    fn contexts_in_reading_order() {
        let t = tok();
        let e = build_standard_input(&unit("a", &["b", "c"], &["d", "e"]), &t, 512).unwrap();
        assert_eq!(e.segment_tokens(SegmentKind::Before), t.encode("b c"));
        assert_eq!(e.segment_tokens(SegmentKind::After), t.encode("d e"));
        // target occupies the earliest content positions
        assert_eq!(e.segments[1].kind, SegmentKind::Target);
        assert_eq!(e.segments[1].start, 1);
    }

    #[test]
    fn long_target_drops_contexts_first() {
        let t = tok();
        let max_len = 12;
        // target of max_len - 3 tokens
        let target = vec!["a"; max_len - 3].join(" ");
        let e = build_standard_input(&unit(&target, &["b c"], &["d e"]), &t, max_len).unwrap();
        assert_eq!(e.ids.len(), max_len);
        assert_eq!(e.segment_tokens(SegmentKind::Target).len(), max_len - 3);
        assert!(e.segment_tokens(SegmentKind::Before).is_empty());
        assert!(e.segment_tokens(SegmentKind::After).is_empty());
        assert!(e.truncated && !e.target_truncated);
    }

    #[test]
    fn oversized_target_is_cut_and_flagged() {
        let t = tok();
        let target = vec!["a"; 40].join(" ");
        let e = build_standard_input(&unit(&target, &[], &[]), &t, 16).unwrap();
        assert_eq!(e.ids.len(), 16);
        assert!(e.target_truncated);
        assert_eq!(*e.ids.last().unwrap(), t.special().sep);
    }

    #[test]
    fn sam_input_prefixes_topic_and_rejects_empty_topic() {
        let t = tok();
        let u = unit("a b", &["c"], &[]);
        let std = build_standard_input(&u, &t, 512).unwrap();
        let sam = build_sam_input("Waffenlieferung Ukraine", &u, &t, 512).unwrap();
        let topic = t.encode("Waffenlieferung Ukraine");
        let mut expected = vec![t.special().begin];
        expected.extend(&topic);
        expected.push(t.special().sep);
        expected.extend(&std.ids[1..]);
        assert_eq!(sam.ids, expected);
        assert_eq!(sam, build_sam_input("Waffenlieferung Ukraine", &u, &t, 512).unwrap());
        assert!(build_sam_input(" ", &u, &t, 512).is_err());
        // topic survives even when everything else is cut
        let tight = build_sam_input("Waffenlieferung Ukraine", &unit("a b c d e", &[], &[]), &t, 6).unwrap();
        assert_eq!(tight.segment_tokens(SegmentKind::Topic), topic);
        check_tiling(&tight);
    }

    #[test]
    fn pet_inputs_carry_masks() {
        let t = tok();
        let u = unit("a b c", &["d"], &["e"]);
        for (preset, k) in [(PvpPreset::Naive, 2), (PvpPreset::Elaborate, 3)] {
            let pvp = PatternVerbalizerPair::verbalize(preset.definition(), &t).unwrap();
            let e = build_pet_input(&u, &pvp, &t, 512).unwrap();
            assert_eq!(e.mask_positions.len(), k);
            assert_eq!(e.ids.iter().filter(|&&i| i == t.special().mask).count(), k);
            for &p in &e.mask_positions {
                assert_eq!(e.ids[p], t.special().mask);
            }
            check_tiling(&e);
        }
    }

    #[test]
    fn pet_truncation_keeps_pattern() {
        let t = tok();
        let pvp = PatternVerbalizerPair::verbalize(PvpPreset::Naive.definition(), &t).unwrap();
        let u = unit(&vec!["a"; 50].join(" "), &["b"], &["c"]);
        let full = build_pet_input(&u, &pvp, &t, 512).unwrap();
        let cut = build_pet_input(&u, &pvp, &t, 20).unwrap();
        assert_eq!(cut.ids.len(), 20);
        assert_eq!(cut.segment_tokens(SegmentKind::Pattern), full.segment_tokens(SegmentKind::Pattern));
        assert_eq!(cut.mask_positions, full.mask_positions);
        assert!(cut.target_truncated);
        let sam_pet = build_sam_pet_input("Waffenlieferung Ukraine", &u, &pvp, &t, 24).unwrap();
        assert_eq!(sam_pet.mask_positions.len(), 2);
        check_tiling(&sam_pet);
    }

    proptest! {
        #[test]
        fn truncation_is_monotone(
            target in 1usize..20, before in 0usize..12, after in 0usize..12,
            small in 3usize..40, extra in 0usize..20,
        ) {
            let t = tok();
            let words = |n: usize| vec!["b"; n].join(" ");
            let u = unit(&vec!["a"; target].join(" "), &[&words(before)], &[&words(after)]);
            let u = SentenceUnit { context_before: u.context_before.into_iter().filter(|s| !s.is_empty()).collect(),
                                   context_after: u.context_after.into_iter().filter(|s| !s.is_empty()).collect(), ..u };
            let a = build_standard_input(&u, &t, small).unwrap();
            let b = build_standard_input(&u, &t, small + extra).unwrap();
            prop_assert!(a.ids.len() <= small);
            let a_body = &a.ids[..a.ids.len() - 1];
            let b_body = &b.ids[..b.ids.len() - 1];
            prop_assert!(b_body.starts_with(a_body));
            prop_assert!(a.mask_positions.is_empty());
        }
    }
}
