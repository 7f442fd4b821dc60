use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;
use stylevec_core::adapter::{mix_mhr, AdapterInventory, StyleVector};
use stylevec_core::game::{generate_probe_set, play_match, ScriptedPolicy, StyleParams};
use stylevec_core::numeric::{cross_entropy_with_grad, Tensor};
use stylevec_core::policy::{NetConfig, PolicyNet};
use stylevec_core::rng::Streams;
use stylevec_core::stylelab::{probe_profile, ProbeSet};

fn mixing(c: &mut Criterion) {
    let mut rng = Streams::new(1).stream("bench/mix");
    let inv = AdapterInventory::<f32>::init(8, 128, 64, 4, &mut rng);
    let style = StyleVector::new(Tensor::randn(&[8, 4], 1.0, &mut rng), None).unwrap();
    c.bench_function("mix_mhr 8x4 modules, 128x64 rank 4", |b| {
        b.iter(|| mix_mhr(black_box(&inv), black_box(&style)).unwrap())
    });
}

fn training_step(c: &mut Criterion) {
    let cfg = NetConfig::default();
    let streams = Streams::new(2);
    let net = PolicyNet::<f32>::new(cfg, &mut streams.stream("init")).unwrap();
    let mut rng = streams.stream("batch");
    let x = Tensor::<f32>::randn(&[256, cfg.input_dim], 1.0, &mut rng);
    let y: Vec<usize> = (0..256).map(|i| i % cfg.actions).collect();
    let style = StyleVector::new(Tensor::randn(&[cfg.modules, cfg.heads], 1.0, &mut rng), None).unwrap();
    c.bench_function("forward batch 256", |b| {
        b.iter(|| net.forward(Some(black_box(&style)), black_box(&x)).unwrap())
    });
    c.bench_function("forward+backward batch 256", |b| {
        b.iter_batched(
            || net.params().zero_grads(),
            |mut grads| {
                let (logits, cache) = net.forward_cached(Some(&style), &x).unwrap();
                let (_, d) = cross_entropy_with_grad(&logits, &y).unwrap();
                let mut ds = vec![0.0; cfg.style_len()];
                net.backward(&cache, &d, &mut grads, Some(&mut ds)).unwrap();
                grads
            },
            BatchSize::SmallInput,
        )
    });
}

fn games(c: &mut Criterion) {
    let style = StyleParams {
        chase_weight: 1.0,
        goal_push_weight: 1.0,
        defend_weight: 0.5,
        kick_bias: -1.0,
        temperature: 0.5,
    };
    let p = ScriptedPolicy::sampling(style);
    let mut seed = 0u64;
    c.bench_function("scripted match", |b| {
        b.iter(|| {
            seed += 1;
            play_match(&p, &p, seed).unwrap()
        })
    });
    let cfg = NetConfig::default();
    let net = PolicyNet::<f32>::new(cfg, &mut Streams::new(3).stream("init")).unwrap();
    let probes = ProbeSet::new(generate_probe_set(4, 4096).unwrap(), 4).unwrap();
    c.bench_function("probe profile 4096 states", |b| {
        b.iter(|| probe_profile(&net, None, black_box(&probes)).unwrap())
    });
}

criterion_group!(benches, mixing, training_step, games);
criterion_main!(benches);
