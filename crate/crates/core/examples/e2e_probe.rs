//! End-to-end toy-loop probe with cached matcher/dataset for fast iteration.

use std::path::PathBuf;

use bluref_core::blureftrain::{deblur, run_bluref, BlurRefConfig, DeblurConfig};
use bluref_core::datasetproto::{assemble_toy_dataset, read_toy_dataset, ToyDatasetConfig};
use bluref_core::densematch::{load_matcher, save_matcher, train_matcher, MatchTrainConfig, MatcherConfig};
use bluref_core::image::{psnr, PSNR_CAP_DB};
use bluref_core::synthgen::{make_warp_pair_from, synthesize_blur, synthesize_toy_video, DegradationConfig, ToyVideoConfig, WarpConfig};

fn main() {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let matcher_steps: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(500);
    let scratch = PathBuf::from("/tmp/e2e_probe");
    let data_dir = scratch.join("data");
    let ckpt = scratch.join(format!("matcher_{matcher_steps}.ckpt"));
    let cfg = ToyDatasetConfig {
        video: ToyVideoConfig {
            height: 96,
            width: 96,
            frames: 64,
            camera_speed: 1.0,
            n_sprites: 14,
            sprite_radius: (5.0, 10.0),
            sprite_speed: (1.5, 2.8),
            ..ToyVideoConfig::default()
        },
        scene_seed: 21,
        delta: 2,
        n_refs: 6,
        blur_window: 7,
        spacing: 3,
        max_samples: Some(16),
    };
    if !data_dir.join("manifest.json").exists() {
        assemble_toy_dataset(&cfg, &data_dir).unwrap();
        println!("dataset assembled");
    }
    let (blurs, refs, gts, _) = read_toy_dataset(&data_dir).unwrap();

    let matcher = if ckpt.exists() {
        load_matcher(&ckpt).unwrap()
    } else {
        let t0 = std::time::Instant::now();
        let video = synthesize_toy_video(&cfg.video, cfg.scene_seed).unwrap();
        let wcfg = WarpConfig::default();
        // the warped side is a real multi-frame blur, so keep only mild
        // photometric degradations on top
        let dcfg = DegradationConfig {
            gaussian_blur: None,
            aniso_blur: None,
            motion_blur: None,
            resample: None,
            ..DegradationConfig::default()
        };
        let half = cfg.blur_window / 2;
        let centers: Vec<usize> = (half..video.frames.len() - half).collect();
        let pairs: Vec<_> = (0..100)
            .map(|i| {
                let c = centers[i % centers.len()];
                let blur = synthesize_blur(&video.frames, c, cfg.blur_window).unwrap();
                make_warp_pair_from(&blur, &video.frames[c], &wcfg, &dcfg, i as u64).unwrap()
            })
            .collect();
        let tcfg = MatchTrainConfig { steps: matcher_steps, ..MatchTrainConfig::default() };
        let (m, _) = train_matcher(&pairs, MatcherConfig::default(), &tcfg, 5).unwrap();
        save_matcher(&m, &ckpt, None).unwrap();
        println!("matcher trained in {:.1?}", t0.elapsed());
        m
    };

    let split = 13usize;
    let tcfg = BlurRefConfig { epochs, seed: 11, tau: 0.55, ..BlurRefConfig::toy_preset() };
    let t0 = std::time::Instant::now();
    let result = run_bluref(&blurs[..split], &refs[..split], Some(&gts[..split]), &matcher, &DeblurConfig::default(), &tcfg);
    let (net, state) = match result {
        Ok(v) => v,
        Err(e) => {
            println!("run_bluref error: {e}");
            return;
        }
    };
    println!("loop done in {:.1?}", t0.elapsed());
    for r in &state.history {
        println!(
            "epoch {}: loss {:.5}, masked-psnr {:.2}, psnr-deblur {:.2}",
            r.epoch,
            r.mean_loss,
            r.masked_psnr_pseudo.unwrap_or(f64::NAN),
            r.psnr_deblur.unwrap_or(f64::NAN)
        );
    }
    let mut pb = 0.0;
    let mut pd = 0.0;
    for i in split..blurs.len() {
        pb += psnr(&blurs[i], &gts[i], 1.0).unwrap().min(PSNR_CAP_DB);
        let d = deblur(&net, &blurs[i]).unwrap();
        pd += psnr(&d, &gts[i], 1.0).unwrap().min(PSNR_CAP_DB);
    }
    let n = (blurs.len() - split) as f64;
    println!("held-out: blurry {:.2} dB -> deblurred {:.2} dB", pb / n, pd / n);
}
