//! Encoder backbones. [`MiniBackbone`] is a small post-norm transformer
//! encoder with a tied masked-language-model head, seeded at construction.

use serde::{Deserialize, Serialize};

use super::adapter::{AdapterCache, AdapterStack};
use super::layers::{gelu_all, gelu_backward, softmax_in_place, LayerNorm, LayerNormCache, Linear};
use super::tensor::{axpy, dot, join, Param, Parameters, Tensor};
use crate::encoding::TokenId;
use crate::error::{Error, Result};
use crate::seed;

/// An encoder that exposes per-position hidden states and masked-token
/// logits, with adapter insertion points after every layer's feed-forward
/// block.
pub trait Backbone: Parameters {
    type Trace;
    type LmTrace;

    fn hidden_size(&self) -> usize;
    fn layer_count(&self) -> usize;
    fn vocab_size(&self) -> usize;
    fn max_positions(&self) -> usize;

    /// Hidden states `[len, H]`. Each adapter stack contributes one adapter
    /// per layer, applied in slice order (lowest first).
    fn encode(&self, ids: &[TokenId], adapters: &[AdapterStack]) -> Result<(Tensor, Self::Trace)>;

    /// Backpropagate `d_hidden` through the encoder. Gradients accumulate
    /// for unfrozen adapters, and for backbone parameters when `param_grads`.
    fn encode_backward(
        &mut self,
        trace: &Self::Trace,
        d_hidden: &Tensor,
        adapters: &mut [AdapterStack],
        param_grads: bool,
    );

    /// Vocabulary logits `[positions.len(), V]` at the given positions.
    fn lm_logits(&self, hidden: &Tensor, positions: &[usize]) -> (Tensor, Self::LmTrace);

    /// Gradient with respect to the hidden states; LM-head gradients are
    /// accumulated when `param_grads`.
    fn lm_backward(&mut self, trace: &Self::LmTrace, d_logits: &Tensor, param_grads: bool) -> Tensor;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiniBackboneConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_size: usize,
    pub max_positions: usize,
    pub seed: u64,
    /// Standard deviation of the random weight and embedding init.
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

fn default_init_std() -> f64 {
    INIT_STD
}

impl MiniBackboneConfig {
    pub fn new(vocab_size: usize) -> Self {
        MiniBackboneConfig {
            vocab_size,
            hidden_size: 32,
            layers: 2,
            heads: 2,
            ffn_size: 64,
            max_positions: 512,
            seed: 0,
            init_std: INIT_STD,
        }
    }
}

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
struct Attention {
    query: Linear,
    key: Linear,
    value: Linear,
    output: Linear,
    heads: usize,
}

struct AttentionCache {
    input: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `[heads, n, n]`
    probs: Vec<f64>,
    context: Vec<f64>,
}

impl Attention {
    fn width(&self) -> usize {
        self.query.output_dim()
    }

    fn forward(&self, x: &[f64], n: usize) -> (Vec<f64>, AttentionCache) {
        let h = self.width();
        let dh = h / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = self.query.forward(x, n);
        let k = self.key.forward(x, n);
        let v = self.value.forward(x, n);
        let mut probs = vec![0.0; self.heads * n * n];
        let mut context = vec![0.0; n * h];
        for hd in 0..self.heads {
            let off = hd * dh;
            for i in 0..n {
                let row = &mut probs[(hd * n + i) * n..(hd * n + i + 1) * n];
                let qi = &q[i * h + off..i * h + off + dh];
                for (j, r) in row.iter_mut().enumerate() {
                    *r = scale * dot(qi, &k[j * h + off..j * h + off + dh]);
                }
                softmax_in_place(row);
                let ci = &mut context[i * h + off..i * h + off + dh];
                for (j, &p) in row.iter().enumerate() {
                    axpy(p, &v[j * h + off..j * h + off + dh], ci);
                }
            }
        }
        let out = self.output.forward(&context, n);
        (
            out,
            AttentionCache {
                input: x.to_vec(),
                q,
                k,
                v,
                probs,
                context,
            },
        )
    }

    fn backward(&mut self, c: &AttentionCache, dy: &[f64], pg: bool) -> Vec<f64> {
        let h = self.width();
        let n = c.input.len() / h;
        let dh = h / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let d_context = self.output.backward(&c.context, n, dy, pg);
        let mut dq = vec![0.0; n * h];
        let mut dk = vec![0.0; n * h];
        let mut dv = vec![0.0; n * h];
        let mut dp = vec![0.0; n];
        for hd in 0..self.heads {
            let off = hd * dh;
            for i in 0..n {
                let p = &c.probs[(hd * n + i) * n..(hd * n + i + 1) * n];
                let dci = &d_context[i * h + off..i * h + off + dh];
                for j in 0..n {
                    dp[j] = dot(dci, &c.v[j * h + off..j * h + off + dh]);
                    axpy(p[j], dci, &mut dv[j * h + off..j * h + off + dh]);
                }
                let inner = dot(&dp, p);
                for j in 0..n {
                    let ds = p[j] * (dp[j] - inner) * scale;
                    if ds != 0.0 {
                        axpy(ds, &c.k[j * h + off..j * h + off + dh], &mut dq[i * h + off..i * h + off + dh]);
                        axpy(ds, &c.q[i * h + off..i * h + off + dh], &mut dk[j * h + off..j * h + off + dh]);
                    }
                }
            }
        }
        let mut dx = self.query.backward(&c.input, n, &dq, pg);
        axpy(1.0, &self.key.backward(&c.input, n, &dk, pg), &mut dx);
        axpy(1.0, &self.value.backward(&c.input, n, &dv, pg), &mut dx);
        dx
    }
}

impl Parameters for Attention {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        self.query.visit(&join(prefix, "query"), f);
        self.key.visit(&join(prefix, "key"), f);
        self.value.visit(&join(prefix, "value"), f);
        self.output.visit(&join(prefix, "output"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.query.visit_mut(&join(prefix, "query"), f);
        self.key.visit_mut(&join(prefix, "key"), f);
        self.value.visit_mut(&join(prefix, "value"), f);
        self.output.visit_mut(&join(prefix, "output"), f);
    }
}

#[derive(Debug, Clone, PartialEq)]
struct EncoderLayer {
    attention: Attention,
    attention_norm: LayerNorm,
    ffn_in: Linear,
    ffn_out: Linear,
    output_norm: LayerNorm,
}

struct LayerCache {
    attention: AttentionCache,
    attention_norm: LayerNormCache,
    normed: Vec<f64>,
    ffn_pre: Vec<f64>,
    ffn_act: Vec<f64>,
    adapters: Vec<AdapterCache>,
    output_norm: LayerNormCache,
}

impl EncoderLayer {
    fn forward(
        &self,
        x: &[f64],
        n: usize,
        layer: usize,
        adapters: &[AdapterStack],
    ) -> Result<(Vec<f64>, LayerCache)> {
        let (attn, attention) = self.attention.forward(x, n);
        let mut residual = x.to_vec();
        axpy(1.0, &attn, &mut residual);
        let (normed, attention_norm) = self.attention_norm.forward(&residual, n);
        let ffn_pre = self.ffn_in.forward(&normed, n);
        let ffn_act = gelu_all(&ffn_pre);
        let mut ffn = self.ffn_out.forward(&ffn_act, n);
        let mut adapter_caches = Vec::with_capacity(adapters.len());
        for stack in adapters {
            let adapter = stack.layers.get(layer).ok_or_else(|| {
                Error::shape(format!("adapter `{}` has no entry for layer {layer}", stack.name()))
            })?;
            let (y, c) = adapter.forward(&ffn, n)?;
            ffn = y;
            adapter_caches.push(c);
        }
        axpy(1.0, &normed, &mut ffn);
        let (out, output_norm) = self.output_norm.forward(&ffn, n);
        Ok((
            out,
            LayerCache {
                attention,
                attention_norm,
                normed,
                ffn_pre,
                ffn_act,
                adapters: adapter_caches,
                output_norm,
            },
        ))
    }

    fn backward(
        &mut self,
        c: &LayerCache,
        dy: &[f64],
        n: usize,
        layer: usize,
        adapters: &mut [AdapterStack],
        pg: bool,
    ) -> Vec<f64> {
        let d_sum = self.output_norm.backward(&c.output_norm, dy, pg);
        let mut d_ffn = d_sum.clone();
        for (stack, cache) in adapters.iter_mut().zip(&c.adapters).rev() {
            let frozen = stack.frozen;
            d_ffn = stack.layers[layer].backward(cache, &d_ffn, !frozen);
        }
        let d_act = self.ffn_out.backward(&c.ffn_act, n, &d_ffn, pg);
        let d_pre = gelu_backward(&c.ffn_pre, &d_act);
        let mut d_normed = self.ffn_in.backward(&c.normed, n, &d_pre, pg);
        axpy(1.0, &d_sum, &mut d_normed);
        let d_res = self.attention_norm.backward(&c.attention_norm, &d_normed, pg);
        let mut dx = self.attention.backward(&c.attention, &d_res, pg);
        axpy(1.0, &d_res, &mut dx);
        dx
    }
}

impl Parameters for EncoderLayer {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        self.attention.visit(&join(prefix, "attention"), f);
        self.attention_norm.visit(&join(prefix, "attention_norm"), f);
        self.ffn_in.visit(&join(prefix, "ffn_in"), f);
        self.ffn_out.visit(&join(prefix, "ffn_out"), f);
        self.output_norm.visit(&join(prefix, "output_norm"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.attention.visit_mut(&join(prefix, "attention"), f);
        self.attention_norm.visit_mut(&join(prefix, "attention_norm"), f);
        self.ffn_in.visit_mut(&join(prefix, "ffn_in"), f);
        self.ffn_out.visit_mut(&join(prefix, "ffn_out"), f);
        self.output_norm.visit_mut(&join(prefix, "output_norm"), f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiniBackbone {
    config: MiniBackboneConfig,
    token_embeddings: Param,
    position_embeddings: Param,
    embedding_norm: LayerNorm,
    layers: Vec<EncoderLayer>,
    lm_transform: Linear,
    lm_norm: LayerNorm,
    lm_bias: Param,
}

pub struct MiniTrace {
    ids: Vec<TokenId>,
    embedding_norm: LayerNormCache,
    layers: Vec<LayerCache>,
}

pub struct MiniLmTrace {
    positions: Vec<usize>,
    n: usize,
    gathered: Vec<f64>,
    pre: Vec<f64>,
    norm: LayerNormCache,
    normed: Vec<f64>,
}

impl MiniBackbone {
    pub fn new(config: MiniBackboneConfig) -> Result<Self> {
        let h = config.hidden_size;
        if config.heads == 0 || !h.is_multiple_of(config.heads) {
            return Err(Error::Config(format!(
                "hidden size {h} is not divisible by {} heads",
                config.heads
            )));
        }
        if config.vocab_size == 0 || config.layers == 0 || config.max_positions == 0 {
            return Err(Error::Config("backbone dimensions must be positive".into()));
        }
        let std = config.init_std;
        if !(std.is_finite() && std > 0.0) {
            return Err(Error::Config("init_std must be positive".into()));
        }
        let mut rng = seed::derive_rng(config.seed, "backbone");
        let layers = (0..config.layers)
            .map(|_| EncoderLayer {
                attention: Attention {
                    query: Linear::new(h, h, std, &mut rng),
                    key: Linear::new(h, h, std, &mut rng),
                    value: Linear::new(h, h, std, &mut rng),
                    output: Linear::new(h, h, std, &mut rng),
                    heads: config.heads,
                },
                attention_norm: LayerNorm::new(h),
                ffn_in: Linear::new(h, config.ffn_size, std, &mut rng),
                ffn_out: Linear::new(config.ffn_size, h, std, &mut rng),
                output_norm: LayerNorm::new(h),
            })
            .collect();
        Ok(MiniBackbone {
            token_embeddings: Param::new(Tensor::normal(&[config.vocab_size, h], std, &mut rng)),
            position_embeddings: Param::new(Tensor::normal(&[config.max_positions, h], std, &mut rng)),
            embedding_norm: LayerNorm::new(h),
            layers,
            lm_transform: Linear::new(h, h, std, &mut rng),
            lm_norm: LayerNorm::new(h),
            lm_bias: Param::zeros(&[config.vocab_size]),
            config,
        })
    }

    pub fn config(&self) -> &MiniBackboneConfig {
        &self.config
    }
}

impl Parameters for MiniBackbone {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        f(join(prefix, "embeddings.token"), &self.token_embeddings);
        f(join(prefix, "embeddings.position"), &self.position_embeddings);
        self.embedding_norm.visit(&join(prefix, "embeddings.norm"), f);
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("layers.{i}")), f);
        }
        self.lm_transform.visit(&join(prefix, "lm_head.transform"), f);
        self.lm_norm.visit(&join(prefix, "lm_head.norm"), f);
        f(join(prefix, "lm_head.bias"), &self.lm_bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "embeddings.token"), &mut self.token_embeddings);
        f(join(prefix, "embeddings.position"), &mut self.position_embeddings);
        self.embedding_norm.visit_mut(&join(prefix, "embeddings.norm"), f);
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("layers.{i}")), f);
        }
        self.lm_transform.visit_mut(&join(prefix, "lm_head.transform"), f);
        self.lm_norm.visit_mut(&join(prefix, "lm_head.norm"), f);
        f(join(prefix, "lm_head.bias"), &mut self.lm_bias);
    }
}

impl Backbone for MiniBackbone {
    type Trace = MiniTrace;
    type LmTrace = MiniLmTrace;

    fn hidden_size(&self) -> usize {
        self.config.hidden_size
    }

    fn layer_count(&self) -> usize {
        self.config.layers
    }

    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn max_positions(&self) -> usize {
        self.config.max_positions
    }

    fn encode(&self, ids: &[TokenId], adapters: &[AdapterStack]) -> Result<(Tensor, MiniTrace)> {
        let h = self.hidden_size();
        let n = ids.len();
        if n == 0 || n > self.max_positions() {
            return Err(Error::shape(format!(
                "sequence length {n} outside 1..={}",
                self.max_positions()
            )));
        }
        for stack in adapters {
            if stack.hidden() != h || stack.layers.len() != self.layer_count() {
                return Err(Error::shape(format!(
                    "adapter `{}` is sized for H={} × {} layers, backbone has H={h} × {}",
                    stack.name(),
                    stack.hidden(),
                    stack.layers.len(),
                    self.layer_count()
                )));
            }
        }
        let mut x = vec![0.0; n * h];
        for (i, &id) in ids.iter().enumerate() {
            let id = id as usize;
            if id >= self.vocab_size() {
                return Err(Error::shape(format!("token id {id} outside vocabulary of {}", self.vocab_size())));
            }
            let xi = &mut x[i * h..(i + 1) * h];
            xi.copy_from_slice(self.token_embeddings.value.row(id));
            axpy(1.0, self.position_embeddings.value.row(i), xi);
        }
        let (mut x, embedding_norm) = self.embedding_norm.forward(&x, n);
        let mut caches = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let (y, c) = layer.forward(&x, n, l, adapters)?;
            x = y;
            caches.push(c);
        }
        Ok((
            Tensor::from_vec(&[n, h], x),
            MiniTrace {
                ids: ids.to_vec(),
                embedding_norm,
                layers: caches,
            },
        ))
    }

    fn encode_backward(&mut self, trace: &MiniTrace, d_hidden: &Tensor, adapters: &mut [AdapterStack], pg: bool) {
        let h = self.hidden_size();
        let n = trace.ids.len();
        let mut d = d_hidden.data().to_vec();
        for l in (0..self.layers.len()).rev() {
            d = self.layers[l].backward(&trace.layers[l], &d, n, l, adapters, pg);
        }
        if pg {
            let d_emb = self.embedding_norm.backward(&trace.embedding_norm, &d, true);
            for (i, &id) in trace.ids.iter().enumerate() {
                let di = &d_emb[i * h..(i + 1) * h];
                axpy(1.0, di, self.token_embeddings.grad.row_mut(id as usize));
                axpy(1.0, di, self.position_embeddings.grad.row_mut(i));
            }
        }
    }

    fn lm_logits(&self, hidden: &Tensor, positions: &[usize]) -> (Tensor, MiniLmTrace) {
        let h = self.hidden_size();
        let m = positions.len();
        let mut gathered = Vec::with_capacity(m * h);
        for &p in positions {
            gathered.extend_from_slice(hidden.row(p));
        }
        let pre = self.lm_transform.forward(&gathered, m);
        let act = gelu_all(&pre);
        let (normed, norm) = self.lm_norm.forward(&act, m);
        let v = self.vocab_size();
        let emb = self.token_embeddings.value.data();
        let bias = self.lm_bias.value.data();
        let mut logits = vec![0.0; m * v];
        for i in 0..m {
            let xi = &normed[i * h..(i + 1) * h];
            for t in 0..v {
                logits[i * v + t] = bias[t] + dot(xi, &emb[t * h..(t + 1) * h]);
            }
        }
        (
            Tensor::from_vec(&[m, v], logits),
            MiniLmTrace {
                positions: positions.to_vec(),
                n: hidden.rows(),
                gathered,
                pre,
                norm,
                normed,
            },
        )
    }

    fn lm_backward(&mut self, t: &MiniLmTrace, d_logits: &Tensor, pg: bool) -> Tensor {
        let h = self.hidden_size();
        let v = self.vocab_size();
        let m = t.positions.len();
        let mut d_normed = vec![0.0; m * h];
        {
            let emb = self.token_embeddings.value.data();
            for i in 0..m {
                let dl = d_logits.row(i);
                let dn = &mut d_normed[i * h..(i + 1) * h];
                for (tok, &g) in dl.iter().enumerate() {
                    if g != 0.0 {
                        axpy(g, &emb[tok * h..(tok + 1) * h], dn);
                    }
                }
            }
        }
        if pg {
            for i in 0..m {
                let dl = d_logits.row(i);
                let xi = &t.normed[i * h..(i + 1) * h];
                axpy(1.0, dl, self.lm_bias.grad.data_mut());
                let demb = self.token_embeddings.grad.data_mut();
                for (tok, &g) in dl.iter().enumerate().take(v) {
                    if g != 0.0 {
                        axpy(g, xi, &mut demb[tok * h..(tok + 1) * h]);
                    }
                }
            }
        }
        let d_act = self.lm_norm.backward(&t.norm, &d_normed, pg);
        let d_pre = gelu_backward(&t.pre, &d_act);
        let d_gathered = self.lm_transform.backward(&t.gathered, m, &d_pre, pg);
        let mut d_hidden = Tensor::zeros(&[t.n, h]);
        for (i, &p) in t.positions.iter().enumerate() {
            axpy(1.0, &d_gathered[i * h..(i + 1) * h], d_hidden.row_mut(p));
        }
        d_hidden
    }
}
