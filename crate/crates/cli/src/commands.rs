//! Subcommand implementations.

use std::path::{Path, PathBuf};

use bluref_core::blureftrain::{
    export_pseudo_pairs, run_bluref, save_deblur, train_from_pairs,
};
use bluref_core::datasetproto::{assemble_toy_dataset, read_toy_dataset};
use bluref_core::densematch::{evaluate_epe, infer_flow, load_matcher, save_matcher, train_matcher};
use bluref_core::image::{
    psnr, read_image_png, ssim, warp_backward, write_flow, write_image_png, write_mask_png,
    PSNR_CAP_DB,
};
use bluref_core::pseudosharp::{binarize_mask, generate_pseudo, ReferenceSet, Strategy};
use bluref_core::synthgen::{read_pair, read_pair_manifest, synthesize_toy_video, write_pair_dataset};
use bluref_core::Image;

use crate::config::{
    load_config, seed_override, write_resolved_config, EvalConfig, GenDataConfig, GenPseudoConfig,
    MatchConfig, RunBlurefConfig, TrainDmConfig, TrainPairsConfig,
};
use crate::CliError;

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), CliError> {
    let mut text = String::from(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn confidence_image(conf: &bluref_core::ConfidenceMap) -> Image {
    Image::new(conf.height(), conf.width(), 1, conf.values().to_vec()).expect("confidence dims")
}

pub fn cmd_gen_data(config_path: &Path) -> Result<(), CliError> {
    let mut cfg: GenDataConfig = load_config(config_path)?;
    if let Some(seed) = seed_override()? {
        cfg.seed = seed;
    }
    if cfg.toy_dataset.is_none() && cfg.warp_pairs.is_none() {
        return Err(CliError::config(
            "gen-data config enables neither toy_dataset nor warp_pairs".into(),
        ));
    }
    if let Some(section) = &cfg.toy_dataset {
        let mut ds_cfg = section.config.clone();
        ds_cfg.scene_seed = ds_cfg.scene_seed.wrapping_add(cfg.seed);
        let manifest = assemble_toy_dataset(&ds_cfg, &section.out_dir).map_err(CliError::from)?;
        write_resolved_config(&cfg, &section.out_dir)?;
        println!(
            "toy dataset: {} samples at {}",
            manifest.entries.len(),
            section.out_dir.display()
        );
    }
    if let Some(section) = &cfg.warp_pairs {
        let video = synthesize_toy_video(&section.video, cfg.seed).map_err(CliError::from)?;
        let manifest = write_pair_dataset(
            &section.out_dir,
            &video.frames,
            &section.warp,
            &section.degradation,
            section.count,
            cfg.seed,
        )
        .map_err(CliError::from)?;
        write_resolved_config(&cfg, &section.out_dir)?;
        println!(
            "warp pairs: {} samples at {}",
            manifest.entries.len(),
            section.out_dir.display()
        );
    }
    Ok(())
}

pub fn cmd_train_dm(config_path: &Path) -> Result<(), CliError> {
    let mut cfg: TrainDmConfig = load_config(config_path)?;
    if let Some(seed) = seed_override()? {
        cfg.seed = seed;
    }
    let manifest = read_pair_manifest(&cfg.pairs_dir).map_err(CliError::from)?;
    let total = manifest.entries.len();
    if cfg.holdout >= total {
        return Err(CliError::config(format!(
            "holdout {} leaves no training pairs out of {total}",
            cfg.holdout
        )));
    }
    let mut pairs = Vec::with_capacity(total);
    for e in &manifest.entries {
        pairs.push(read_pair(&cfg.pairs_dir, e.index).map_err(CliError::from)?);
    }
    let held = pairs.split_off(total - cfg.holdout);

    let (matcher, log) = train_matcher(&pairs, cfg.arch.clone(), &cfg.train, cfg.seed).map_err(CliError::from)?;

    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
    let rows: Vec<String> = log.iter().map(|s| format!("{},{:.8e},{:.8}", s.step, s.lr, s.loss)).collect();
    write_csv(&cfg.out_dir.join("loss.csv"), "step,lr,loss", &rows)?;

    let epe = if held.is_empty() {
        None
    } else {
        Some(evaluate_epe(&matcher, &held).map_err(CliError::from)?)
    };
    let training_meta = serde_json::json!({
        "seed": cfg.seed,
        "steps": cfg.train.steps,
        "holdout_epe": epe,
    });
    save_matcher(&matcher, &cfg.out_dir.join("matcher.ckpt"), Some(training_meta)).map_err(CliError::from)?;
    write_resolved_config(&cfg, &cfg.out_dir)?;
    let metrics = serde_json::json!({ "holdout_epe": epe, "train_pairs": pairs.len(), "holdout_pairs": held.len() });
    std::fs::write(
        cfg.out_dir.join("metrics.json"),
        serde_json::to_string_pretty(&metrics).expect("json"),
    )
    .map_err(|e| CliError::data(e.to_string()))?;
    if let Some(e) = epe {
        println!("held-out EPE: {e:.4} px over {} pairs", held.len());
        if let Some(budget) = cfg.epe_budget {
            if e > budget {
                return Err(CliError::numerical(format!(
                    "held-out EPE {e:.4} exceeds budget {budget:.4}"
                )));
            }
        }
    }
    Ok(())
}

pub fn cmd_match(config_path: &Path) -> Result<(), CliError> {
    let cfg: MatchConfig = load_config(config_path)?;
    let matcher = load_matcher(&cfg.checkpoint).map_err(CliError::from)?;
    let target = read_image_png(&cfg.target).map_err(CliError::from)?;
    let reference = read_image_png(&cfg.reference).map_err(CliError::from)?;
    let (flow, conf) = infer_flow(&matcher, &target, &reference).map_err(CliError::from)?;
    let warped = warp_backward(&reference, &flow).map_err(CliError::from)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::data(e.to_string()))?;
    write_image_png(&warped, &cfg.out_dir.join("warped.png")).map_err(CliError::from)?;
    write_image_png(&confidence_image(&conf), &cfg.out_dir.join("confidence.png")).map_err(CliError::from)?;
    write_flow(&flow, &cfg.out_dir.join("flow.bflw")).map_err(CliError::from)?;
    write_resolved_config(&cfg, &cfg.out_dir)?;
    println!("mean confidence: {:.4}", conf.mean());
    Ok(())
}

/// Reference PNGs sorted numerically by file stem when possible.
fn read_refs_dir(dir: &Path) -> Result<Vec<Image>, CliError> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "png").unwrap_or(false))
        .collect();
    names.sort_by_key(|p| {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
        (stem.parse::<u64>().ok(), stem)
    });
    if names.is_empty() {
        return Err(CliError::data(format!("no PNG references in {}", dir.display())));
    }
    names
        .iter()
        .map(|p| read_image_png(p).map_err(CliError::from))
        .collect()
}

pub fn cmd_gen_pseudo(config_path: &Path, strategy: Option<Strategy>, tau: Option<f32>) -> Result<(), CliError> {
    let mut cfg: GenPseudoConfig = load_config(config_path)?;
    if let Some(s) = strategy {
        cfg.strategy = s;
    }
    if let Some(t) = tau {
        cfg.tau = t;
    }
    let matcher = load_matcher(&cfg.checkpoint).map_err(CliError::from)?;
    let blur = read_image_png(&cfg.blur).map_err(CliError::from)?;
    let refs = ReferenceSet::new(read_refs_dir(&cfg.refs_dir)?).map_err(CliError::from)?;
    let target = generate_pseudo(&matcher, &blur, &refs, cfg.strategy).map_err(CliError::from)?;
    let mask = binarize_mask(&target.conf, cfg.tau).map_err(CliError::from)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::data(e.to_string()))?;
    write_image_png(&target.image, &cfg.out_dir.join("pseudo.png")).map_err(CliError::from)?;
    write_image_png(&confidence_image(&target.conf), &cfg.out_dir.join("confidence.png"))
        .map_err(CliError::from)?;
    write_mask_png(&mask, &cfg.out_dir.join("mask.png")).map_err(CliError::from)?;
    let stats = serde_json::json!({
        "strategy": cfg.strategy,
        "tau": cfg.tau,
        "mean_confidence": target.conf.mean(),
        "coverage_fraction": mask.coverage(),
    });
    std::fs::write(cfg.out_dir.join("stats.json"), serde_json::to_string_pretty(&stats).expect("json"))
        .map_err(|e| CliError::data(e.to_string()))?;
    write_resolved_config(&cfg, &cfg.out_dir)?;
    Ok(())
}

pub fn cmd_run_bluref(
    config_path: &Path,
    strategy: Option<Strategy>,
    tau: Option<f32>,
    export_pairs: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut cfg: RunBlurefConfig = load_config(config_path)?;
    if let Some(s) = strategy {
        cfg.train.strategy = s;
    }
    if let Some(t) = tau {
        cfg.train.tau = t;
    }
    if export_pairs.is_some() {
        cfg.export_pairs = export_pairs;
    }
    if let Some(seed) = seed_override()? {
        cfg.train.seed = seed;
    }

    let matcher = load_matcher(&cfg.matcher_checkpoint).map_err(CliError::from)?;
    let (blurs, refsets, gts, _manifest) = read_toy_dataset(&cfg.dataset_dir).map_err(CliError::from)?;
    let (net, state) = run_bluref(&blurs, &refsets, Some(&gts), &matcher, &cfg.net, &cfg.train)
        .map_err(CliError::from)?;

    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::data(e.to_string()))?;
    let history_json = serde_json::to_string_pretty(&state.history).expect("json");
    std::fs::write(cfg.out_dir.join("history.json"), history_json)
        .map_err(|e| CliError::data(e.to_string()))?;
    let rows: Vec<String> = state
        .history
        .iter()
        .map(|r| {
            format!(
                "{},{:.8},{},{}",
                r.epoch,
                r.mean_loss,
                r.masked_psnr_pseudo.map(|v| format!("{v:.4}")).unwrap_or_default(),
                r.psnr_deblur.map(|v| format!("{v:.4}")).unwrap_or_default()
            )
        })
        .collect();
    write_csv(&cfg.out_dir.join("metrics.csv"), "epoch,mean_loss,masked_psnr_pseudo,psnr_deblur", &rows)?;

    let points: Vec<(f64, f64)> = state
        .history
        .iter()
        .filter_map(|r| r.masked_psnr_pseudo.map(|v| (r.epoch as f64, v)))
        .collect();
    if !points.is_empty() {
        write_image_png(&crate::plot::line_plot(&points), &cfg.out_dir.join("masked_psnr.png"))
            .map_err(CliError::from)?;
    }

    let training_meta = serde_json::json!({
        "config": &cfg.train,
        "epochs_completed": state.epochs_completed,
    });
    save_deblur(&net, &cfg.out_dir.join("deblur.ckpt"), Some(training_meta)).map_err(CliError::from)?;
    write_resolved_config(&cfg, &cfg.out_dir)?;

    if let Some(dir) = &cfg.export_pairs {
        let manifest = export_pseudo_pairs(&state, &blurs, dir).map_err(CliError::from)?;
        println!("exported {} pseudo pairs to {}", manifest.count, dir.display());
    }
    if let Some(rec) = state.history.last() {
        if let (Some(mp), Some(dp)) = (rec.masked_psnr_pseudo, rec.psnr_deblur) {
            println!("final epoch: masked-PSNR(pseudo) {mp:.2} dB, PSNR(deblur) {dp:.2} dB");
        }
    }
    Ok(())
}

pub fn cmd_train_pairs(config_path: &Path) -> Result<(), CliError> {
    let mut cfg: TrainPairsConfig = load_config(config_path)?;
    if let Some(seed) = seed_override()? {
        cfg.train.seed = seed;
    }
    let (net, losses) = train_from_pairs(&cfg.pairs_dir, &cfg.net, &cfg.train).map_err(CliError::from)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::data(e.to_string()))?;
    let rows: Vec<String> = losses.iter().enumerate().map(|(i, l)| format!("{i},{l:.8}")).collect();
    write_csv(&cfg.out_dir.join("loss.csv"), "step,loss", &rows)?;
    let training_meta = serde_json::json!({ "config": &cfg.train, "steps": losses.len() });
    save_deblur(&net, &cfg.out_dir.join("deblur.ckpt"), Some(training_meta)).map_err(CliError::from)?;
    write_resolved_config(&cfg, &cfg.out_dir)?;
    Ok(())
}

pub fn cmd_eval(config_path: &Path) -> Result<(), CliError> {
    let cfg: EvalConfig = load_config(config_path)?;
    let mut names: Vec<String> = std::fs::read_dir(&cfg.pred_dir)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", cfg.pred_dir.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".png"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(CliError::data(format!("no PNG images in {}", cfg.pred_dir.display())));
    }
    let mut rows = Vec::new();
    let mut per_image = Vec::new();
    let mut psnr_sum = 0.0;
    let mut ssim_sum = 0.0;
    for name in &names {
        let pred = read_image_png(&cfg.pred_dir.join(name)).map_err(CliError::from)?;
        let gt_path = cfg.gt_dir.join(name);
        if !gt_path.exists() {
            return Err(CliError::data(format!("missing ground truth {}", gt_path.display())));
        }
        let gt = read_image_png(&gt_path).map_err(CliError::from)?;
        let p = psnr(&pred, &gt, 1.0).map_err(CliError::from)?.min(PSNR_CAP_DB);
        let s = ssim(&pred, &gt).map_err(CliError::from)?;
        psnr_sum += p;
        ssim_sum += s;
        rows.push(format!("{name},{p:.4},{s:.6}"));
        per_image.push(serde_json::json!({ "image": name, "psnr": p, "ssim": s }));
    }
    let n = names.len() as f64;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::data(e.to_string()))?;
    write_csv(&cfg.out_dir.join("metrics.csv"), "image,psnr,ssim", &rows)?;
    let metrics = serde_json::json!({
        "count": names.len(),
        "mean_psnr": psnr_sum / n,
        "mean_ssim": ssim_sum / n,
        "images": per_image,
    });
    std::fs::write(
        cfg.out_dir.join("metrics.json"),
        serde_json::to_string_pretty(&metrics).expect("json"),
    )
    .map_err(|e| CliError::data(e.to_string()))?;

    if let Some(csv) = &cfg.history_csv {
        let text = std::fs::read_to_string(csv)
            .map_err(|e| CliError::data(format!("cannot read {}: {e}", csv.display())))?;
        let mut points = Vec::new();
        for line in text.lines().skip(1) {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() >= 3 {
                if let (Ok(epoch), Ok(v)) = (cells[0].parse::<f64>(), cells[2].parse::<f64>()) {
                    points.push((epoch, v));
                }
            }
        }
        if points.is_empty() {
            return Err(CliError::data(format!("{} holds no plottable rows", csv.display())));
        }
        write_image_png(&crate::plot::line_plot(&points), &cfg.out_dir.join("masked_psnr.png"))
            .map_err(CliError::from)?;
    }
    write_resolved_config(&cfg, &cfg.out_dir)?;
    println!("mean PSNR {:.2} dB, mean SSIM {:.4} over {} images", psnr_sum / n, ssim_sum / n, names.len());
    Ok(())
}

