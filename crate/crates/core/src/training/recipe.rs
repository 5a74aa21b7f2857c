//! Variant plumbing: input construction, head choice, adapter layout and
//! near-domain pretraining.

use super::config::{HeadKind, InputKind, TrainConfig, Variant};
use super::{pretrain_near_domain, Example, MaskedLmPool, TrainLog};
use crate::corpus::{LabeledDataset, SamRecord, SamStance, SentenceUnit};
use crate::encoding::{
    build_pet_input, build_sam_input, build_sam_pet_input, build_standard_input, EncodedInput, PatternVerbalizerPair,
    Tokenizer,
};
use crate::error::{Error, Result};
use crate::model::{
    AdapterConfig, AdapterStack, Backbone, Head, LmVerbalizer, ModelAssembly, PetHead, StandardHead,
};
use crate::seed;

/// Topic label prefixed to task inputs of near-domain variants.
pub const TASK_TOPIC: &str = "Waffenlieferung Ukraine";

pub const SAM_ADAPTER: &str = "sam";
pub const TASK_ADAPTER: &str = "task";

#[derive(Clone, Copy)]
pub struct InputContext<'a> {
    pub tokenizer: &'a dyn Tokenizer,
    pub pvp: Option<&'a PatternVerbalizerPair>,
    pub topic: &'a str,
    pub max_len: usize,
}

impl InputContext<'_> {
    fn pvp(&self) -> Result<&PatternVerbalizerPair> {
        self.pvp.ok_or_else(|| Error::Config("pattern-based input needs a PVP".into()))
    }
}

pub fn encode_unit(kind: InputKind, u: &SentenceUnit, cx: &InputContext<'_>) -> Result<EncodedInput> {
    let t = cx.tokenizer;
    match kind {
        InputKind::Standard => build_standard_input(u, t, cx.max_len),
        InputKind::Sam => build_sam_input(cx.topic, u, t, cx.max_len),
        InputKind::Pet => build_pet_input(u, cx.pvp()?, t, cx.max_len),
        InputKind::SamPet => build_sam_pet_input(cx.topic, u, cx.pvp()?, t, cx.max_len),
    }
}

pub fn encode_dataset(kind: InputKind, ds: &LabeledDataset, cx: &InputContext<'_>) -> Result<Vec<Example>> {
    ds.units
        .iter()
        .map(|u| {
            Ok(Example {
                input: encode_unit(kind, u, cx)?,
                label: u.label.index(),
            })
        })
        .collect()
}

/// Topic-prefixed stance examples; each record carries its own topic.
pub fn encode_sam_records(records: &[SamRecord], cx: &InputContext<'_>) -> Result<Vec<Example>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let u = SentenceUnit::new(format!("sam-{i}"), r.sentence.clone(), crate::corpus::Label::NoStance);
            Ok(Example {
                input: build_sam_input(&r.topic, &u, cx.tokenizer, cx.max_len)?,
                label: r.stance.index(),
            })
        })
        .collect()
}

/// Standard inputs of every unit, for the auxiliary masked-LM objective.
pub fn masked_lm_pool(ds: &LabeledDataset, cx: &InputContext<'_>) -> Result<MaskedLmPool> {
    Ok(MaskedLmPool {
        inputs: ds
            .units
            .iter()
            .map(|u| build_standard_input(u, cx.tokenizer, cx.max_len))
            .collect::<Result<_>>()?,
        mask_id: cx.tokenizer.special().mask,
    })
}

pub fn sam_head(hidden: usize, seed: u64) -> Head {
    Head::Standard(StandardHead::new(hidden, SamStance::COUNT, &mut seed::derive_rng(seed, "sam_head")))
}

fn task_head(kind: HeadKind, hidden: usize, pvp: Option<&PatternVerbalizerPair>, seed: u64) -> Result<Head> {
    let mut rng = seed::derive_rng(seed, "head");
    let need = || pvp.ok_or_else(|| Error::Config("PET head needs a PVP".into()));
    Ok(match kind {
        HeadKind::Standard => Head::Standard(StandardHead::new(hidden, crate::corpus::Label::COUNT, &mut rng)),
        HeadKind::Pet => Head::Pet(PetHead::new(hidden, need()?, &mut rng)),
        HeadKind::LanguageModel => Head::LanguageModel(LmVerbalizer::new(need()?)),
    })
}

/// Task model for `variant`. Near-domain adapter variants need the
/// pretrained `lower` stack; `ft_sam` expects an already pretrained
/// backbone.
pub fn build_assembly<B: Backbone>(
    variant: Variant,
    backbone: B,
    pvp: Option<&PatternVerbalizerPair>,
    lower: Option<AdapterStack>,
    reduction_factor: usize,
    seed: u64,
) -> Result<ModelAssembly<B>> {
    let head = task_head(variant.head_kind(), backbone.hidden_size(), pvp, seed)?;
    let adapter_seed = seed::derive(seed, "adapter");
    let task = AdapterConfig::new(TASK_ADAPTER, reduction_factor);
    match (variant.uses_adapter(), variant.near_domain(), lower) {
        (false, _, None) => Ok(ModelAssembly::full(backbone, head)),
        (true, false, None) => ModelAssembly::with_adapter(backbone, task, head, adapter_seed),
        (true, true, Some(lower)) => ModelAssembly::full(backbone, head).stack_adapters(lower, task, adapter_seed),
        (true, true, None) => Err(Error::Config(format!("{variant} needs a pretrained near-domain adapter"))),
        (_, _, Some(_)) => Err(Error::Config(format!("{variant} takes no pretrained adapter"))),
    }
}

/// Output of near-domain pretraining: the backbone to continue from and,
/// for adapter variants, the trained lower adapter.
pub struct NearDomain<B> {
    pub backbone: B,
    pub lower: Option<AdapterStack>,
    pub log: TrainLog,
}

pub fn near_domain_stage<B: Backbone>(
    variant: Variant,
    backbone: B,
    sam: &[Example],
    cfg: &TrainConfig,
    reduction_factor: usize,
    seed: u64,
) -> Result<NearDomain<B>> {
    if !variant.near_domain() {
        return Err(Error::Config(format!("{variant} has no near-domain stage")));
    }
    let head = sam_head(backbone.hidden_size(), seed);
    let m = if variant.uses_adapter() {
        let cfg = AdapterConfig::new(SAM_ADAPTER, reduction_factor);
        ModelAssembly::with_adapter(backbone, cfg, head, seed::derive(seed, "sam_adapter"))?
    } else {
        ModelAssembly::full(backbone, head)
    };
    let (mut m, log) = pretrain_near_domain(m, sam, cfg)?;
    let lower = if variant.uses_adapter() {
        let mut s = m.adapters.remove(0);
        s.frozen = true;
        Some(s)
    } else {
        None
    };
    Ok(NearDomain {
        backbone: m.backbone,
        lower,
        log,
    })
}
