//! Central finite differences against analytic gradients.

use argpet_core::encoding::EncodedInput;
use argpet_core::model::{
    cross_entropy, Backbone, Head, LayerNorm, Linear, MiniBackbone, MiniBackboneConfig, ModelAssembly, Parameters, PetHead,
    StandardHead, Tensor,
};
use argpet_core::seed;
use rand::Rng;

pub const STEP: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-4;
pub const DRAWS: u64 = 20;
/// Norms below this are finite-difference noise, e.g. key biases, whose
/// exact gradient vanishes because softmax ignores a per-query shift.
pub const NOISE_FLOOR: f64 = 1e-6;
pub const VOCAB: usize = 17;

pub fn backbone(hidden: usize, draw: u64) -> MiniBackbone {
    MiniBackbone::new(MiniBackboneConfig {
        vocab_size: VOCAB,
        hidden_size: hidden,
        layers: 2,
        heads: 2,
        ffn_size: hidden + hidden / 2,
        max_positions: 16,
        seed: draw,
        init_std: 0.02,
    })
    .unwrap()
}

/// Replace every parameter with a wider random draw so that zero-initialized
/// projections and unit norms do not hide gradient paths. Weights shrink
/// with the square root of the width, keeping pre-activations (and so the
/// finite-difference truncation error) at the same scale for any width.
pub fn randomize(m: &mut ModelAssembly<MiniBackbone>, draw: u64) {
    let mut rng = seed::derive_rng(draw, "randomize");
    let width = (8.0 / m.backbone.hidden_size() as f64).sqrt();
    m.visit_mut("", &mut |name, p| {
        let std = if name.contains("norm") { 0.3 } else { 0.4 * width };
        let mut t = Tensor::normal(p.value.shape(), std, &mut rng);
        if name.ends_with("gamma") {
            t.data_mut().iter_mut().for_each(|x| *x += 1.0);
        }
        p.value = t;
    });
}

pub fn input(draw: u64, masks: usize) -> (EncodedInput, usize) {
    let mut rng = seed::derive_rng(draw, "input");
    let len = rng.random_range(masks + 2..10);
    let ids = (0..len).map(|_| rng.random_range(0..VOCAB as u32)).collect();
    let mask_positions = (1..=masks).collect();
    (EncodedInput::from_ids(ids, mask_positions), rng.random_range(0..5))
}

pub fn tensor_errors(m: &mut ModelAssembly<MiniBackbone>, loss: &dyn Fn(&ModelAssembly<MiniBackbone>) -> f64) -> Vec<(String, f64)> {
    let mut analytic = Vec::new();
    m.visit_trainable(&mut |n, p| analytic.push((n, p.grad.data().to_vec())));
    let mut out = Vec::new();
    for (name, a) in analytic {
        let mut fd = vec![0.0; a.len()];
        for (k, slot) in fd.iter_mut().enumerate() {
            let nudge = |m: &mut ModelAssembly<MiniBackbone>, d: f64| {
                m.visit_trainable_mut(&mut |n, p| {
                    if n == name {
                        p.value.data_mut()[k] += d;
                    }
                })
            };
            nudge(m, STEP);
            let up = loss(m);
            nudge(m, -2.0 * STEP);
            let down = loss(m);
            nudge(m, STEP);
            *slot = (up - down) / (2.0 * STEP);
        }
        let diff = a.iter().zip(&fd).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(fd.iter().map(|x| x * x).sum::<f64>().sqrt());
        let rel = diff / scale.max(NOISE_FLOOR);
        out.push((name, rel));
    }
    out
}

/// Per-tensor relative errors of one randomized draw, and the squared
/// gradient norm that reached frozen parameters.
pub fn classification_errors(mut m: ModelAssembly<MiniBackbone>, masks: usize, draw: u64) -> (Vec<(String, f64)>, f64) {
    randomize(&mut m, draw);
    let (x, y) = input(draw, masks);
    m.zero_grad();
    m.classification_step(&x, y, 1.0).unwrap();
    let mut frozen_grad = 0.0;
    m.visit_frozen(&mut |_, p| frozen_grad += p.grad.sum_sq());
    let errs = tensor_errors(&mut m, &|m| cross_entropy(&m.logits(&x).unwrap(), y).0);
    (errs, frozen_grad)
}

pub fn classification_check(m: ModelAssembly<MiniBackbone>, masks: usize, draw: u64) {
    let (errs, frozen_grad) = classification_errors(m, masks, draw);
    assert_eq!(frozen_grad, 0.0, "frozen parameters received gradient");
    assert!(!errs.is_empty());
    for (name, rel) in errs {
        assert!(rel <= TOLERANCE, "draw {draw}: {name} relative error {rel:.3e}");
    }
}

pub fn standard_head(hidden: usize, draw: u64) -> Head {
    Head::Standard(StandardHead::new(hidden, 5, &mut seed::derive_rng(draw, "head")))
}

pub fn pet_head(hidden: usize, draw: u64) -> Head {
    let mut rng = seed::derive_rng(draw, "head");
    Head::Pet(PetHead {
        project: Linear::new(hidden, hidden, 0.02, &mut rng),
        norm: LayerNorm::new(hidden),
        emit: Linear::new(hidden, 6, 0.02, &mut rng),
        label_index: vec![vec![0, 3], vec![0, 4], vec![1, 3], vec![1, 4], vec![2]],
        mask_count: 2,
    })
}

