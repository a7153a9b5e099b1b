use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use hafunet::losses::{loss_from_logits, LossConfig};
use hafunet::train::ABLATION_GRID;
use hafunet_bench::{desk_model, input, square_target};

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("model_forward_64");
    group.sample_size(20);
    let x = input([1, 1, 64, 64], 7);
    for (use_haf, use_cbe) in ABLATION_GRID {
        let model = desk_model(64, use_haf, use_cbe);
        let id = BenchmarkId::from_parameter(format!("haf{}_cbe{}", u8::from(use_haf), u8::from(use_cbe)));
        group.bench_with_input(id, &x, |b, x| b.iter(|| model.forward(black_box(x)).unwrap()));
    }
    group.finish();
}

fn train_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("model_train_step_64");
    group.sample_size(10);
    let model = desk_model(64, true, true);
    let x = input([4, 1, 64, 64], 8);
    let y = square_target(4, 64);
    let cfg = LossConfig::default();
    group.bench_function("batch4", |b| {
        b.iter(|| {
            let (logits, cache) = model.forward_train(black_box(&x)).unwrap();
            let (_, d) = loss_from_logits(&y, logits.as_slice(), &cfg).unwrap();
            let mut dl = logits;
            dl.as_mut_slice().copy_from_slice(&d);
            model.backward(&cache, &dl)
        })
    });
    group.finish();
}

criterion_group!(benches, forward, train_step);
criterion_main!(benches);
