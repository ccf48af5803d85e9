//! Quick matcher training probe: prints held-out EPE before/after training.

use bluref_core::densematch::{evaluate_epe, train_matcher, Matcher, MatcherConfig, MatchTrainConfig};
use bluref_core::synthgen::{
    make_warp_pair, synthesize_toy_video, DegradationConfig, ToyVideoConfig, WarpConfig,
};

fn main() {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let video = synthesize_toy_video(&ToyVideoConfig { frames: 12, ..ToyVideoConfig::default() }, 7).unwrap();
    let wcfg = WarpConfig::default();
    let dcfg = DegradationConfig::default();
    let t0 = std::time::Instant::now();
    let train_pairs: Vec<_> = (0..120)
        .map(|i| make_warp_pair(&video.frames[i % video.frames.len()], &wcfg, &dcfg, i as u64).unwrap())
        .collect();
    let held_out: Vec<_> = (1000..1020)
        .map(|i| make_warp_pair(&video.frames[i % video.frames.len()], &wcfg, &dcfg, i as u64).unwrap())
        .collect();
    println!("pair gen: {:.1?}", t0.elapsed());

    let arch = MatcherConfig::default();
    let fresh = Matcher::new(arch.clone(), 0);
    println!("params: {}", fresh.param_count());
    let epe0 = evaluate_epe(&fresh, &held_out).unwrap();
    println!("untrained EPE: {epe0:.3}");

    let cfg = MatchTrainConfig { steps, ..MatchTrainConfig::default() };
    let t1 = std::time::Instant::now();
    let (trained, log) = train_matcher(&train_pairs, arch, &cfg, 0).unwrap();
    let dt = t1.elapsed();
    println!(
        "trained {} steps in {:.1?} ({:.0} ms/step), first loss {:.4}, last loss {:.4}",
        steps,
        dt,
        dt.as_millis() as f64 / steps as f64,
        log.first().unwrap().loss,
        log.last().unwrap().loss
    );
    let epe1 = evaluate_epe(&trained, &held_out).unwrap();
    println!("trained EPE: {epe1:.3}");
}
