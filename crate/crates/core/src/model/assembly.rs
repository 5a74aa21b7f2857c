//! Backbone + adapters + head.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::adapter::{AdapterConfig, AdapterStack};
use super::backbone::Backbone;
use super::heads::{verbalizer_class_backward, verbalizer_class_logits, PetHead, PetHeadCache, StandardHead};
use super::layers::cross_entropy;
use super::tensor::{join, Param, Parameters, Tensor};
use crate::encoding::{EncodedInput, PatternVerbalizerPair, TokenId};
use crate::error::{Error, Result};

/// Class-logit head over the encoder output.
#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Standard(StandardHead),
    Pet(PetHead),
    /// Scores verbalizer tokens with the backbone's own masked-LM head.
    /// Owns no parameters.
    LanguageModel(LmVerbalizer),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmVerbalizer {
    /// Per label, backbone token ids of the verbalizer pieces.
    pub label_tokens: Vec<Vec<usize>>,
    pub mask_count: usize,
}

impl LmVerbalizer {
    pub fn new(pvp: &PatternVerbalizerPair) -> Self {
        LmVerbalizer {
            label_tokens: pvp
                .label_tokens
                .iter()
                .map(|t| t.iter().map(|&id| id as usize).collect())
                .collect(),
            mask_count: pvp.mask_count,
        }
    }
}

impl Head {
    pub fn classes(&self) -> usize {
        match self {
            Head::Standard(h) => h.classes(),
            Head::Pet(h) => h.label_index.len(),
            Head::LanguageModel(h) => h.label_tokens.len(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Head::Standard(_) => "standard",
            Head::Pet(_) => "pet",
            Head::LanguageModel(_) => "language_model",
        }
    }
}

impl Parameters for Head {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        match self {
            Head::Standard(h) => h.visit(prefix, f),
            Head::Pet(h) => h.visit(prefix, f),
            Head::LanguageModel(_) => {}
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        match self {
            Head::Standard(h) => h.visit_mut(prefix, f),
            Head::Pet(h) => h.visit_mut(prefix, f),
            Head::LanguageModel(_) => {}
        }
    }
}

pub enum HeadTrace<L> {
    Standard,
    Pet(PetHeadCache),
    LanguageModel { lm: L, shape: Vec<usize> },
}

/// Everything needed to backpropagate one forward pass.
pub struct Forward<B: Backbone> {
    pub logits: Vec<f64>,
    pub hidden: Tensor,
    trace: B::Trace,
    head: HeadTrace<B::LmTrace>,
}

pub const BACKBONE_PREFIX: &str = "backbone";
pub const ADAPTER_PREFIX: &str = "adapters";
pub const HEAD_PREFIX: &str = "head";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelAssembly<B> {
    pub backbone: B,
    /// Applied per layer in order, lowest first.
    pub adapters: Vec<AdapterStack>,
    pub head: Head,
    backbone_trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterReport {
    pub total: usize,
    pub trainable: usize,
    pub by_component: BTreeMap<String, usize>,
    pub serialized_bytes_fp32: usize,
}

impl<B: Backbone> ModelAssembly<B> {
    /// Full fine-tuning: every backbone parameter is trainable.
    pub fn full(backbone: B, head: Head) -> Self {
        ModelAssembly {
            backbone,
            adapters: Vec::new(),
            head,
            backbone_trainable: true,
        }
    }

    /// Frozen backbone with one fresh trainable adapter stack.
    pub fn with_adapter(backbone: B, config: AdapterConfig, head: Head, seed: u64) -> Result<Self> {
        let mut m = ModelAssembly::full(backbone, head);
        m.add_adapter(config, seed)?;
        Ok(m)
    }

    pub fn add_adapter(&mut self, config: AdapterConfig, seed: u64) -> Result<()> {
        if self.adapters.iter().any(|a| a.name() == config.name) {
            return Err(Error::Config(format!("adapter `{}` already attached", config.name)));
        }
        let stack = AdapterStack::new(config, self.backbone.hidden_size(), self.backbone.layer_count(), seed)?;
        self.adapters.push(stack);
        self.backbone_trainable = false;
        Ok(())
    }

    /// Freeze `lower`, place it under a fresh trainable `upper` stack.
    /// Any previously attached stack with `lower`'s name is replaced.
    pub fn stack_adapters(mut self, mut lower: AdapterStack, upper: AdapterConfig, seed: u64) -> Result<Self> {
        self.check_stack(&lower)?;
        if lower.name() == upper.name {
            return Err(Error::Config(format!("stacked adapters share the name `{}`", upper.name)));
        }
        self.adapters.retain(|a| a.name() != lower.name());
        lower.frozen = true;
        self.adapters.push(lower);
        self.add_adapter(upper, seed)?;
        Ok(self)
    }

    fn check_stack(&self, s: &AdapterStack) -> Result<()> {
        let (h, l) = (self.backbone.hidden_size(), self.backbone.layer_count());
        if s.hidden() != h || s.layers.len() != l {
            return Err(Error::shape(format!(
                "adapter `{}` is sized for H={} × {} layers, backbone has H={h} × {l}",
                s.name(),
                s.hidden(),
                s.layers.len()
            )));
        }
        Ok(())
    }

    pub fn backbone_trainable(&self) -> bool {
        self.backbone_trainable
    }

    pub fn adapter(&self, name: &str) -> Option<&AdapterStack> {
        self.adapters.iter().find(|a| a.name() == name)
    }

    pub fn replace_head(&mut self, head: Head) -> Head {
        std::mem::replace(&mut self.head, head)
    }

    pub fn forward(&self, input: &EncodedInput) -> Result<Forward<B>> {
        let (hidden, trace) = self.backbone.encode(&input.ids, &self.adapters)?;
        let (logits, head) = match &self.head {
            Head::Standard(h) => (h.forward(&hidden)?, HeadTrace::Standard),
            Head::Pet(h) => {
                let (l, c) = h.forward(&hidden, &input.mask_positions)?;
                (l, HeadTrace::Pet(c))
            }
            Head::LanguageModel(v) => {
                if input.mask_positions.len() != v.mask_count {
                    return Err(Error::shape(format!(
                        "verbalizer expects {} mask positions, got {}",
                        v.mask_count,
                        input.mask_positions.len()
                    )));
                }
                let (mask_logits, lm) = self.backbone.lm_logits(&hidden, &input.mask_positions);
                let logits = verbalizer_class_logits(&mask_logits, &v.label_tokens);
                (
                    logits,
                    HeadTrace::LanguageModel {
                        lm,
                        shape: mask_logits.shape().to_vec(),
                    },
                )
            }
        };
        Ok(Forward {
            logits,
            hidden,
            trace,
            head,
        })
    }

    pub fn logits(&self, input: &EncodedInput) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.logits)
    }

    /// Argmax class; ties resolve to the lowest index.
    pub fn predict(&self, input: &EncodedInput) -> Result<usize> {
        Ok(argmax(&self.logits(input)?))
    }

    /// Accumulate gradients of a loss whose gradient w.r.t. the class
    /// logits is `d_logits`.
    pub fn backward(&mut self, fwd: &Forward<B>, d_logits: &[f64]) {
        let pg = self.backbone_trainable;
        let d_hidden = match (&mut self.head, &fwd.head) {
            (Head::Standard(h), HeadTrace::Standard) => h.backward(&fwd.hidden, d_logits),
            (Head::Pet(h), HeadTrace::Pet(c)) => h.backward(c, d_logits),
            (Head::LanguageModel(v), HeadTrace::LanguageModel { lm, shape }) => {
                let d_mask = verbalizer_class_backward(d_logits, shape, &v.label_tokens);
                self.backbone.lm_backward(lm, &d_mask, pg)
            }
            _ => unreachable!("forward trace does not match head"),
        };
        self.backbone.encode_backward(&fwd.trace, &d_hidden, &mut self.adapters, pg);
    }

    /// Cross-entropy on the class logits, scaled by `weight`; gradients
    /// accumulate. Returns the unscaled loss.
    pub fn classification_step(&mut self, input: &EncodedInput, target: usize, weight: f64) -> Result<f64> {
        let fwd = self.forward(input)?;
        if target >= fwd.logits.len() {
            return Err(Error::argument(format!("class {target} outside {} logits", fwd.logits.len())));
        }
        let (loss, mut grad) = cross_entropy(&fwd.logits, target);
        grad.iter_mut().for_each(|g| *g *= weight);
        self.backward(&fwd, &grad);
        Ok(loss)
    }

    /// Masked-token cross-entropy averaged over `positions`, scaled by
    /// `weight`; gradients accumulate. `ids` already carry the mask tokens.
    pub fn mlm_step(&mut self, ids: &[TokenId], positions: &[usize], targets: &[TokenId], weight: f64) -> Result<f64> {
        if positions.is_empty() || positions.len() != targets.len() {
            return Err(Error::argument("masked positions and targets must be non-empty and aligned"));
        }
        let (hidden, trace) = self.backbone.encode(ids, &self.adapters)?;
        if let Some(&p) = positions.iter().find(|&&p| p >= hidden.rows()) {
            return Err(Error::shape(format!("masked position {p} beyond sequence of {}", hidden.rows())));
        }
        let (logits, lm) = self.backbone.lm_logits(&hidden, positions);
        let m = positions.len() as f64;
        let mut d = Tensor::zeros(logits.shape());
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let (loss, g) = cross_entropy(logits.row(i), t as usize);
            total += loss;
            d.row_mut(i).iter_mut().zip(g).for_each(|(d, g)| *d = g * weight / m);
        }
        let pg = self.backbone_trainable;
        let d_hidden = self.backbone.lm_backward(&lm, &d, pg);
        self.backbone.encode_backward(&trace, &d_hidden, &mut self.adapters, pg);
        Ok(total / m)
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.trainable_names().contains(name)
    }

    pub fn trainable_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit_trainable(&mut |n, _| {
            out.insert(n);
        });
        out
    }

    pub fn visit_trainable<'a>(&'a self, f: &mut dyn FnMut(String, &'a Param)) {
        if self.backbone_trainable {
            self.backbone.visit(BACKBONE_PREFIX, f);
        }
        for a in self.adapters.iter().filter(|a| !a.frozen) {
            a.visit(&adapter_prefix(a.name()), f);
        }
        self.head.visit(HEAD_PREFIX, f);
    }

    pub fn visit_trainable_mut(&mut self, f: &mut dyn FnMut(String, &mut Param)) {
        if self.backbone_trainable {
            self.backbone.visit_mut(BACKBONE_PREFIX, f);
        }
        for a in self.adapters.iter_mut().filter(|a| !a.frozen) {
            let p = adapter_prefix(a.name());
            a.visit_mut(&p, f);
        }
        self.head.visit_mut(HEAD_PREFIX, f);
    }

    pub fn visit_frozen<'a>(&'a self, f: &mut dyn FnMut(String, &'a Param)) {
        if !self.backbone_trainable {
            self.backbone.visit(BACKBONE_PREFIX, f);
        }
        for a in self.adapters.iter().filter(|a| a.frozen) {
            a.visit(&adapter_prefix(a.name()), f);
        }
    }

    /// SHA-256 over every frozen tensor.
    pub fn frozen_fingerprint(&self) -> String {
        struct Frozen<'a, B: Backbone>(&'a ModelAssembly<B>);
        impl<B: Backbone> super::tensor::ParametersDyn for Frozen<'_, B> {
            fn visit_dyn(&self, f: &mut dyn FnMut(String, &Param)) {
                self.0.visit_frozen(&mut |n, p| f(n, p));
            }
        }
        super::tensor::fingerprint(&Frozen(self))
    }
}

pub fn adapter_prefix(name: &str) -> String {
    join(ADAPTER_PREFIX, name)
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

impl<B: Backbone> Parameters for ModelAssembly<B> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        self.backbone.visit(&join(prefix, BACKBONE_PREFIX), f);
        for a in &self.adapters {
            a.visit(&join(prefix, &adapter_prefix(a.name())), f);
        }
        self.head.visit(&join(prefix, HEAD_PREFIX), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.backbone.visit_mut(&join(prefix, BACKBONE_PREFIX), f);
        for a in &mut self.adapters {
            let p = join(prefix, &adapter_prefix(a.name()));
            a.visit_mut(&p, f);
        }
        self.head.visit_mut(&join(prefix, HEAD_PREFIX), f);
    }
}

/// Exact parameter counts per component. Adapter stacks are keyed
/// `adapter:<name>`.
pub fn count_parameters<B: Backbone>(m: &ModelAssembly<B>) -> ParameterReport {
    let mut by_component = BTreeMap::new();
    by_component.insert("backbone".to_string(), m.backbone.param_count());
    for a in &m.adapters {
        by_component.insert(format!("adapter:{}", a.name()), a.param_count());
    }
    by_component.insert("head".to_string(), m.head.param_count());
    let total = by_component.values().sum();
    let mut trainable = 0;
    m.visit_trainable(&mut |_, p| trainable += p.len());
    ParameterReport {
        total,
        trainable,
        by_component,
        serialized_bytes_fp32: 4 * trainable,
    }
}
