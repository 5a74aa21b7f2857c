use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{to_f32_grid, Backbone, ModelAssembly};

/// Linear warm-up from 0 to `peak`, then linear decay to 0 at `total`.
pub fn lr_schedule(step: usize, total: usize, peak: f64, warmup_fraction: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::argument("schedule needs at least one step"));
    }
    if step > total {
        return Err(Error::argument(format!("step {step} beyond {total}")));
    }
    let warmup = (warmup_fraction * total as f64).floor() as usize;
    Ok(if step < warmup {
        peak * step as f64 / warmup as f64
    } else {
        peak * (total - step) as f64 / (total - warmup) as f64
    })
}

/// Adam with decoupled weight decay. Biases and normalization parameters
/// are not decayed. Updated values are rounded onto the f32 grid.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

fn decays(name: &str) -> bool {
    !(name.ends_with("bias") || name.ends_with("gamma") || name.ends_with("beta"))
}

impl AdamW {
    pub fn new(weight_decay: f64) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step<B: Backbone>(&mut self, m: &mut ModelAssembly<B>, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps, wd) = (self.beta1, self.beta2, self.eps, self.weight_decay);
        let moments = &mut self.moments;
        m.visit_trainable_mut(&mut |name, p| {
            let decay = decays(&name);
            let (mv, vv) = moments
                .entry(name)
                .or_insert_with(|| (vec![0.0; p.len()], vec![0.0; p.len()]));
            let grad = p.grad.data();
            let value = p.value.data_mut();
            for i in 0..value.len() {
                let g = grad[i];
                mv[i] = b1 * mv[i] + (1.0 - b1) * g;
                vv[i] = b2 * vv[i] + (1.0 - b2) * g * g;
                let update = (mv[i] / c1) / ((vv[i] / c2).sqrt() + eps);
                let mut x = value[i];
                if decay {
                    x -= lr * wd * x;
                }
                value[i] = to_f32_grid(x - lr * update);
            }
        });
    }
}

/// Scale trainable gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<B: Backbone>(m: &mut ModelAssembly<B>, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    m.visit_trainable(&mut |_, p| sq += p.grad.sum_sq());
    let norm = sq.sqrt();
    if norm > max_norm {
        let s = max_norm / (norm + 1e-6);
        m.visit_trainable_mut(&mut |_, p| p.grad.data_mut().iter_mut().for_each(|g| *g *= s));
    }
    norm
}
