//! Coverage probe: per-sample binarized-mask coverage for each strategy,
//! using the cached matcher/dataset from e2e_probe.

use std::path::PathBuf;

use bluref_core::datasetproto::read_toy_dataset;
use bluref_core::densematch::load_matcher;
use bluref_core::image::masked_psnr;
use bluref_core::pseudosharp::{binarize_mask, generate_pseudo_with, Strategy};

fn main() {
    let scratch = PathBuf::from("/tmp/e2e_probe");
    let (blurs, refs, gts, _) = read_toy_dataset(&scratch.join("data")).unwrap();
    let ckpt = std::env::args().nth(1).unwrap_or_else(|| "matcher_500.ckpt".into());
    let matcher = load_matcher(&scratch.join(ckpt)).unwrap();
    for i in 0..blurs.len() {
        let p = bluref_core::image::psnr(&blurs[i], &gts[i], 1.0).unwrap();
        println!("sample {i}: blurry psnr {p:.2}");
    }
    for (s, blend) in [
        (Strategy::WeightedAverage, false),
        (Strategy::Sequential, false),
        (Strategy::Progressive, false),
        (Strategy::Progressive, true),
    ] {
        println!("--- {s}{}", if blend { "-blend" } else { "" });
        for i in 0..blurs.len() {
            let t = generate_pseudo_with(&matcher, &blurs[i], &refs[i], s, blend).unwrap();
            let conf = t.conf.mean();
            let mut line = format!("sample {i}: mean conf {conf:.3}");
            for tau in [0.5f32, 0.6, 0.7] {
                let m = binarize_mask(&t.conf, tau).unwrap();
                line += &format!(", cov@{tau:.1} {:.3}", m.coverage());
            }
            let m = binarize_mask(&t.conf, 0.4).unwrap();
            if m.coverage() > 0.0 {
                line += &format!(
                    ", @0.4 masked-psnr lit {:.2} / norm {:.2}",
                    masked_psnr(&t.image, &gts[i], &m).unwrap(),
                    masked_psnr(&t.training_image(), &gts[i], &m).unwrap()
                );
            }
            println!("{line}");
        }
    }
}
