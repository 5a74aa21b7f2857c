use argpet_core::encoding::{EncodedInput, PatternVerbalizerPair, PvpPreset, WordPieceTokenizer};
use argpet_core::model::{
    count_parameters, deserialize_trainable, load_adapter, save_adapter, serialize_trainable, AdapterConfig,
    AdapterStack, Backbone, Head, LayerNorm, Linear, MiniBackbone, MiniBackboneConfig, ModelAssembly, Parameters,
    PetHead, StandardHead, Tensor,
};
use argpet_core::seed;
use proptest::prelude::*;

fn mini(hidden: usize, seed: u64) -> MiniBackbone {
    MiniBackbone::new(MiniBackboneConfig {
        vocab_size: 30,
        hidden_size: hidden,
        layers: 2,
        heads: 2,
        ffn_size: 2 * hidden,
        max_positions: 32,
        seed,
        init_std: 0.02,
    })
    .unwrap()
}

fn standard(h: usize) -> Head {
    Head::Standard(StandardHead::new(h, 5, &mut seed::rng(1)))
}

fn input() -> EncodedInput {
    EncodedInput::from_ids(vec![0, 7, 3, 9, 2, 4, 2], vec![2, 3])
}

fn tensor_count(p: &impl Parameters) -> usize {
    let mut n = 0;
    p.visit("", &mut |_, p| n += p.value.data().len());
    n
}

#[test]
fn reference_adapter_size() {
    let cfg = AdapterConfig::new("task", 16);
    let per_layer = (1024 * 64 + 64) + (64 * 1024 + 1024);
    assert_eq!(per_layer, 132_160);
    let stack = AdapterStack::new(cfg.clone(), 1024, 24, 0).unwrap();
    assert_eq!(tensor_count(&stack), 24 * per_layer);
    assert_eq!(cfg.closed_form_param_count(1024, 24).unwrap(), 3_171_840);
    // 12.7 MB in fp32
    assert_eq!(4 * 3_171_840 / 100_000, 126);
}

#[test]
fn reference_pet_head_size() {
    let mut rng = seed::rng(0);
    let head = PetHead {
        project: Linear::new(1024, 1024, 0.02, &mut rng),
        norm: LayerNorm::new(1024),
        emit: Linear::new(1024, 6, 0.02, &mut rng),
        label_index: vec![vec![0, 3], vec![0, 4], vec![1, 3], vec![1, 4], vec![2, 5]],
        mask_count: 2,
    };
    assert_eq!(tensor_count(&head), 1_057_798);
}

#[test]
fn full_model_is_entirely_trainable() {
    let m = ModelAssembly::full(mini(8, 0), standard(8));
    let r = count_parameters(&m);
    assert_eq!(r.trainable, r.total);
    assert_eq!(r.total, tensor_count(&m));
    assert_eq!(r.by_component.values().sum::<usize>(), r.total);
}

#[test]
fn adapter_freezes_backbone() {
    let m = ModelAssembly::with_adapter(mini(8, 0), AdapterConfig::new("task", 4), standard(8), 3).unwrap();
    let r = count_parameters(&m);
    assert!(r.trainable < r.total);
    assert_eq!(r.trainable, r.by_component["adapter:task"] + r.by_component["head"]);
    assert_eq!(r.serialized_bytes_fp32, 4 * r.trainable);
    assert!(m.trainable_names().iter().all(|n| !n.starts_with("backbone")));
}

#[test]
fn stacking_partition_and_identity() {
    let mut lower = AdapterStack::new(AdapterConfig::new("sam", 4), 8, 2, 5).unwrap();
    let mut rng = seed::rng(9);
    lower.visit_mut("", &mut |_, p| p.value = Tensor::normal(p.value.shape(), 0.3, &mut rng));
    let lower_only = ModelAssembly::with_adapter(mini(8, 0), AdapterConfig::new("sam", 4), standard(8), 0)
        .map(|mut m| {
            m.adapters[0] = lower.clone();
            m
        })
        .unwrap();
    let stacked = ModelAssembly::full(mini(8, 0), standard(8))
        .stack_adapters(lower, AdapterConfig::new("task", 4), 1)
        .unwrap();
    for n in stacked.trainable_names() {
        assert!(n.starts_with("adapters.task.") || n.starts_with("head."), "{n}");
    }
    assert_eq!(stacked.logits(&input()).unwrap(), lower_only.logits(&input()).unwrap());
    let r = count_parameters(&stacked);
    let single = count_parameters(&lower_only).by_component["adapter:sam"];
    assert_eq!(r.by_component["adapter:sam"] + r.by_component["adapter:task"], 2 * single);
}

#[test]
fn stacking_rejects_mismatched_lower() {
    let lower = AdapterStack::new(AdapterConfig::new("sam", 4), 16, 2, 5).unwrap();
    assert!(ModelAssembly::full(mini(8, 0), standard(8))
        .stack_adapters(lower, AdapterConfig::new("task", 4), 1)
        .is_err());
}

#[test]
fn zero_standard_head_gives_zero_logits() {
    let mut m = ModelAssembly::full(mini(8, 0), standard(8));
    m.head.visit_mut("", &mut |_, p| p.value.fill(0.0));
    for len in 1..6 {
        let x = EncodedInput::from_ids(vec![1; len], vec![]);
        assert_eq!(m.logits(&x).unwrap(), vec![0.0; 5]);
    }
}

fn pvp() -> PatternVerbalizerPair {
    let preset = PvpPreset::Naive;
    let tok = WordPieceTokenizer::from_corpus(["Der Satz ist ein Beispiel ."], preset.vocabulary_pieces().iter().copied()).unwrap();
    PatternVerbalizerPair::verbalize(preset.definition(), &tok).unwrap()
}

#[test]
fn zero_emit_ties_all_classes() {
    let pvp = pvp();
    let mut head = PetHead::new(8, &pvp, &mut seed::rng(0));
    head.emit.visit_mut("", &mut |_, p| p.value.fill(0.0));
    let m = ModelAssembly::with_adapter(mini(8, 0), AdapterConfig::new("t", 4), Head::Pet(head), 0).unwrap();
    let l = m.logits(&input()).unwrap();
    assert!(l.iter().all(|&x| x == l[0]));
}

#[test]
fn pet_head_rejects_wrong_mask_count() {
    let pvp = pvp();
    let head = PetHead::new(8, &pvp, &mut seed::rng(0));
    let m = ModelAssembly::with_adapter(mini(8, 0), AdapterConfig::new("t", 4), Head::Pet(head), 0).unwrap();
    let x = EncodedInput::from_ids(vec![0, 1, 2], vec![1]);
    assert!(matches!(m.logits(&x), Err(argpet_core::Error::Shape(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn pet_logits_equivariant_under_vocab_reordering(seed in any::<u64>(), rot in 1usize..6) {
        let mut rng = seed::rng(seed);
        let head = PetHead {
            project: Linear::new(8, 8, 0.3, &mut rng),
            norm: LayerNorm::new(8),
            emit: Linear::new(8, 6, 0.3, &mut rng),
            label_index: vec![vec![0, 3], vec![0, 4], vec![1, 3], vec![1, 4], vec![2, 5]],
            mask_count: 2,
        };
        // vocab slot v moves to (v + rot) % 6
        let mut permuted = head.clone();
        for v in 0..6 {
            let to = (v + rot) % 6;
            permuted.emit.weight.value.row_mut(to).copy_from_slice(head.emit.weight.value.row(v));
            permuted.emit.bias.value.data_mut()[to] = head.emit.bias.value.data()[v];
        }
        permuted.label_index = head.label_index.iter().map(|t| t.iter().map(|v| (v + rot) % 6).collect()).collect();
        let h = Tensor::normal(&[5, 8], 1.0, &mut rng);
        let (a, _) = head.forward(&h, &[1, 2]).unwrap();
        let (b, _) = permuted.forward(&h, &[1, 2]).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let pvp = pvp();
    let build = |s| {
        let head = PetHead::new(8, &pvp, &mut seed::rng(s));
        ModelAssembly::with_adapter(mini(8, 0), AdapterConfig::new("task", 4), Head::Pet(head), s).unwrap()
    };
    let mut trained = build(1);
    let mut rng = seed::rng(4);
    trained.visit_trainable_mut(&mut |_, p| p.value = Tensor::normal(p.value.shape(), 0.2, &mut rng));
    let path = dir.path().join("task.ckpt");
    let bytes = serialize_trainable(&trained, &path).unwrap();
    let report = count_parameters(&trained);
    assert!(bytes as usize >= report.serialized_bytes_fp32);
    assert!((bytes as usize) < report.serialized_bytes_fp32 + 16 * 1024, "header {bytes}");
    let restored = deserialize_trainable(&path, build(2)).unwrap();
    assert_eq!(restored.logits(&input()).unwrap(), trained.logits(&input()).unwrap());
    assert_eq!(restored, trained);
}

#[test]
fn checkpoint_into_other_width_names_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    let m8 = ModelAssembly::with_adapter(mini(8, 0), AdapterConfig::new("task", 4), standard(8), 0).unwrap();
    serialize_trainable(&m8, &path).unwrap();
    let m16 = ModelAssembly::with_adapter(mini(16, 0), AdapterConfig::new("task", 4), standard(16), 0).unwrap();
    let err = deserialize_trainable(&path, m16).unwrap_err().to_string();
    assert!(err.contains("adapters.task.layers.0.down.weight") || err.contains("head."), "{err}");
}

#[test]
fn adapter_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sam.ckpt");
    let mut stack = AdapterStack::new(AdapterConfig::new("sam", 4), 8, 2, 1).unwrap();
    let mut rng = seed::rng(2);
    stack.visit_mut("", &mut |_, p| p.value = Tensor::normal(p.value.shape(), 0.2, &mut rng));
    let bytes = save_adapter(&stack, &path).unwrap();
    assert!(bytes as usize >= 4 * stack.param_count());
    assert_eq!(load_adapter(&path).unwrap(), stack);
}

#[test]
fn frozen_fingerprint_tracks_backbone() {
    let mut m = ModelAssembly::with_adapter(mini(8, 0), AdapterConfig::new("task", 4), standard(8), 0).unwrap();
    let before = m.frozen_fingerprint();
    m.visit_trainable_mut(&mut |_, p| p.value.fill(0.5));
    assert_eq!(m.frozen_fingerprint(), before);
    m.backbone.visit_mut("", &mut |_, p| p.value.data_mut()[0] += 1.0);
    assert_ne!(m.frozen_fingerprint(), before);
    assert_eq!(m.backbone.hidden_size(), 8);
}
