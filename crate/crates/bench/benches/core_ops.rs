use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use bluref_bench::{frame_pair, smooth_flow};
use bluref_core::densematch::brute_force_match;
use bluref_core::image::{psnr, ssim, warp_backward};
use bluref_core::synthgen::{degrade, DegradationConfig};

fn bench_warp_backward(c: &mut Criterion) {
    let (_, reference) = frame_pair(96, 96);
    let flow = smooth_flow(96, 96);
    c.bench_function("warp_backward_96", |b| {
        b.iter(|| warp_backward(black_box(&reference), black_box(&flow)).unwrap())
    });
}

fn bench_metrics(c: &mut Criterion) {
    let (a, b_img) = frame_pair(96, 96);
    c.bench_function("psnr_96", |b| {
        b.iter(|| psnr(black_box(&a), black_box(&b_img), 1.0).unwrap())
    });
    c.bench_function("ssim_96", |b| {
        b.iter(|| ssim(black_box(&a), black_box(&b_img)).unwrap())
    });
}

fn bench_brute_force_match(c: &mut Criterion) {
    let (a, b_img) = frame_pair(48, 48);
    c.bench_function("brute_force_match_48_p7_r3", |b| {
        b.iter(|| brute_force_match(black_box(&a), black_box(&b_img), 7, 3).unwrap())
    });
}

fn bench_degrade(c: &mut Criterion) {
    let (a, _) = frame_pair(96, 96);
    let cfg = DegradationConfig::default();
    c.bench_function("degrade_96", |b| {
        b.iter(|| degrade(black_box(&a), black_box(&cfg), 7).unwrap())
    });
}

criterion_group!(benches, bench_warp_backward, bench_metrics, bench_brute_force_match, bench_degrade);
criterion_main!(benches);
