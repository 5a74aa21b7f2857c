use std::hint::black_box;

use argpet_bench::{dataset, pvp, tokenizer};
use argpet_core::training::{encode_dataset, InputContext, InputKind, TASK_TOPIC};
use criterion::{criterion_group, criterion_main, Criterion};

fn build_inputs(c: &mut Criterion) {
    let t = tokenizer();
    let pvp = pvp(&t);
    let cx = InputContext {
        tokenizer: &t,
        pvp: Some(&pvp),
        topic: TASK_TOPIC,
        max_len: 128,
    };
    let ds = dataset(200);
    for (name, kind) in [
        ("standard", InputKind::Standard),
        ("sam", InputKind::Sam),
        ("pet", InputKind::Pet),
        ("sam_pet", InputKind::SamPet),
    ] {
        c.bench_function(&format!("encode_200/{name}"), |b| {
            b.iter(|| black_box(encode_dataset(kind, &ds, &cx).unwrap()))
        });
    }
}

criterion_group!(benches, build_inputs);
criterion_main!(benches);
