//! Residual bottleneck adapters inserted after each layer's feed-forward
//! block: `y = x + up(gelu(down(x)))`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{gelu_all, gelu_backward, Linear};
use super::tensor::{join, Param, Parameters};
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_REDUCTION_FACTOR: usize = 16;
/// Init std of the down-projection; the up-projection starts at zero.
pub const ADAPTER_INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub name: String,
    pub reduction_factor: usize,
}

impl AdapterConfig {
    pub fn new(name: impl Into<String>, reduction_factor: usize) -> Self {
        AdapterConfig {
            name: name.into(),
            reduction_factor,
        }
    }

    pub fn bottleneck(&self, hidden: usize) -> Result<usize> {
        if self.reduction_factor == 0 || !hidden.is_multiple_of(self.reduction_factor) {
            return Err(Error::Config(format!(
                "hidden size {hidden} is not divisible by reduction factor {}",
                self.reduction_factor
            )));
        }
        Ok(hidden / self.reduction_factor)
    }

    /// `layers * ((H*b + b) + (b*H + H))` with `b = H / r`.
    pub fn closed_form_param_count(&self, hidden: usize, layers: usize) -> Result<usize> {
        let b = self.bottleneck(hidden)?;
        Ok(layers * ((hidden * b + b) + (b * hidden + hidden)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adapter {
    pub down: Linear,
    pub up: Linear,
}

pub struct AdapterCache {
    input: Vec<f64>,
    pre_act: Vec<f64>,
    act: Vec<f64>,
    n: usize,
}

impl Adapter {
    pub fn new(hidden: usize, bottleneck: usize, rng: &mut impl Rng) -> Self {
        Adapter {
            down: Linear::new(hidden, bottleneck, ADAPTER_INIT_STD, rng),
            up: Linear::zeros(bottleneck, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.down.input_dim()
    }

    pub fn forward(&self, x: &[f64], n: usize) -> Result<(Vec<f64>, AdapterCache)> {
        if x.len() != n * self.hidden() {
            return Err(Error::shape(format!(
                "adapter expects width {}, got {} values for {n} positions",
                self.hidden(),
                x.len()
            )));
        }
        let pre_act = self.down.forward(x, n);
        let act = gelu_all(&pre_act);
        let mut y = self.up.forward(&act, n);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += xi;
        }
        Ok((
            y,
            AdapterCache {
                input: x.to_vec(),
                pre_act,
                act,
                n,
            },
        ))
    }

    pub fn backward(&mut self, cache: &AdapterCache, dy: &[f64], param_grads: bool) -> Vec<f64> {
        let d_act = self.up.backward(&cache.act, cache.n, dy, param_grads);
        let d_pre = gelu_backward(&cache.pre_act, &d_act);
        let mut dx = self.down.backward(&cache.input, cache.n, &d_pre, param_grads);
        for (d, g) in dx.iter_mut().zip(dy) {
            *d += g;
        }
        dx
    }
}

impl Parameters for Adapter {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        self.down.visit(&join(prefix, "down"), f);
        self.up.visit(&join(prefix, "up"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.down.visit_mut(&join(prefix, "down"), f);
        self.up.visit_mut(&join(prefix, "up"), f);
    }
}

/// One adapter per encoder layer, sharing a name and configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterStack {
    pub config: AdapterConfig,
    pub layers: Vec<Adapter>,
    pub frozen: bool,
}

impl AdapterStack {
    pub fn new(config: AdapterConfig, hidden: usize, layers: usize, seed: u64) -> Result<Self> {
        let b = config.bottleneck(hidden)?;
        let mut rng = seed::derive_rng(seed, &format!("adapter/{}", config.name));
        let layers = (0..layers).map(|_| Adapter::new(hidden, b, &mut rng)).collect();
        Ok(AdapterStack {
            config,
            layers,
            frozen: false,
        })
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn hidden(&self) -> usize {
        self.layers.first().map_or(0, Adapter::hidden)
    }
}

impl Parameters for AdapterStack {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        for (i, a) in self.layers.iter().enumerate() {
            a.visit(&join(prefix, &format!("layers.{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        for (i, a) in self.layers.iter_mut().enumerate() {
            a.visit_mut(&join(prefix, &format!("layers.{i}")), f);
        }
    }
}
