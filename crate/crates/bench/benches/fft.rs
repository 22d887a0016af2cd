use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use loglo_bench::random_field;
use loglo_core::tensor_fft::{irfft2, rfft2};
use loglo_core::NormMode;

fn transforms(c: &mut Criterion) {
    let mut g = c.benchmark_group("rfft2");
    for n in [32, 64, 128] {
        let f = random_field([4, 16, n, n], 1);
        g.bench_with_input(BenchmarkId::new("forward", n), &f, |b, f| b.iter(|| rfft2(f, NormMode::Backward).unwrap()));
        let s = rfft2(&f, NormMode::Backward).unwrap();
        g.bench_with_input(BenchmarkId::new("inverse", n), &s, |b, s| {
            b.iter(|| irfft2(s, n, n, NormMode::Backward).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, transforms);
criterion_main!(benches);
