use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gliomapipe_core::metrics::{cohort_summary, dice_report_with, DiceReport, EmptyPolicy};
use gliomapipe_core::pipeline::{
    list_manifests, load_network, read_targets, render_overlay, run_pipeline, write_predictions, FeatureTable,
    PipelineConfig, Prediction, Stage, SEED_ENV,
};
use gliomapipe_core::postprocess::{binarize_masks, remove_small_components, Connectivity};
use gliomapipe_core::preprocess::{preprocess_study, ReferenceSet};
use gliomapipe_core::radiomics::{extract_feature_row, feature_names};
use gliomapipe_core::survival::{predict_many, train_gbt, GbtModel};
use gliomapipe_core::synthetic::{write_synthetic_cohort, SyntheticConfig};
use gliomapipe_core::training::{fit, segment_study, TrainOptions};
use gliomapipe_core::volume_io::{read_segmentation, read_study, write_segmentation, write_study};

use crate::{Command, ConfigArg};

/// Config from `--config` (or defaults) with the seed environment override applied.
fn load_config(arg: &ConfigArg) -> Result<PipelineConfig> {
    let mut cfg = match &arg.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    let env = std::env::var(SEED_ENV).ok();
    cfg.apply_seed_override(env.as_deref())?;
    Ok(cfg)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Preprocess {
            manifest,
            reference,
            out,
            n_levels,
            foreground_only,
            cfg,
        } => {
            let cfg = load_config(&cfg)?;
            let n_levels = n_levels.unwrap_or(cfg.preprocess.n_levels);
            let refs = ReferenceSet::from_study(&read_study(&reference)?, n_levels)?;
            let study = read_study(&manifest)?;
            let pp = preprocess_study(&study, &refs, foreground_only || cfg.preprocess.foreground_only)?;
            let m = write_study(&pp, &out, "_pp")?;
            println!("{}", m.display());
        }
        Command::Train {
            studies,
            out,
            epochs,
            cfg,
        } => {
            let mut cfg = load_config(&cfg)?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let all = list_manifests(&studies)?
                .iter()
                .map(read_study)
                .collect::<Result<Vec<_>, _>>()?;
            let labelled: Vec<_> = all.into_iter().filter(|s| s.ground_truth.is_some()).collect();
            ensure_parent(&out)?;
            let opts = TrainOptions {
                validation: &[],
                checkpoint: Some(out.clone()),
            };
            let (_, report) = fit(&cfg.network, &cfg.train, &labelled, &opts)?;
            for e in &report.epochs {
                println!("epoch {:>3}  loss {:.6}", e.epoch, e.loss);
            }
            println!("{} slices, best epoch {}", report.slices, report.best_epoch);
        }
        Command::Segment {
            ckpt,
            manifest,
            out,
            cfg,
        } => {
            load_config(&cfg)?;
            let mut net = load_network(&ckpt)?;
            let seg = segment_study(&mut net, &read_study(&manifest)?)?;
            ensure_parent(&out)?;
            write_segmentation(&seg, &out)?;
        }
        Command::Postprocess {
            input,
            out,
            min_size,
            connectivity,
            cfg,
        } => {
            let cfg = load_config(&cfg)?;
            let min_size = min_size.unwrap_or(cfg.postprocess.min_size);
            let conn = Connectivity::from_count(connectivity.unwrap_or(cfg.postprocess.connectivity))?;
            let seg = read_segmentation(&input)?;
            let clean = remove_small_components(&seg, min_size, conn);
            ensure_parent(&out)?;
            write_segmentation(&clean, &out)?;
            println!("{} -> {} lesion voxels", seg.foreground_count(), clean.foreground_count());
        }
        Command::Features {
            manifest,
            seg,
            out,
            bin_width,
            cfg,
        } => {
            let mut cfg = load_config(&cfg)?;
            if let Some(w) = bin_width {
                cfg.radiomics.bin_width = w;
            }
            let study = read_study(&manifest)?;
            let Some(age) = study.age else {
                bail!("{} has no age in its manifest", manifest.display());
            };
            let masks = binarize_masks(&read_segmentation(&seg)?)?;
            let row = extract_feature_row(&study, &masks, age, &cfg.radiomics)?;
            for m in &row.missing {
                eprintln!("warning: {m} mask empty; zero block");
            }
            FeatureTable::from_rows(feature_names(), &[row]).write(&out)?;
        }
        Command::SurvivalTrain {
            features,
            targets,
            out,
            cfg,
        } => {
            let cfg = load_config(&cfg)?;
            let table = FeatureTable::read(&features)?;
            let mut rows = Vec::new();
            let mut y = Vec::new();
            for (id, days) in read_targets(&targets)? {
                let Some(r) = table.row_of(&id) else {
                    bail!("target {id} has no row in {}", features.display());
                };
                rows.push(r.to_vec());
                y.push(days);
            }
            let model = train_gbt(&rows, &y, &table.names, &cfg.survival)?;
            ensure_parent(&out)?;
            model.save(&out)?;
        }
        Command::SurvivalPredict {
            model,
            features,
            out,
            cfg,
        } => {
            load_config(&cfg)?;
            let model = GbtModel::load(&model)?;
            let table = FeatureTable::read(&features)?;
            if table.names != model.feature_names {
                bail!("feature columns of {} do not match the model", features.display());
            }
            let preds = predict_many(&model, &table.rows)?;
            let out_rows = table
                .patient_ids
                .iter()
                .zip(preds)
                .map(|(id, d)| Prediction::new(id.clone(), d))
                .collect::<Result<Vec<_>, _>>()?;
            write_predictions(&out, &out_rows)?;
        }
        Command::Evaluate {
            pred,
            truth,
            out,
            empty_policy,
            cfg,
        } => {
            load_config(&cfg)?;
            let policy: EmptyPolicy = empty_policy.parse()?;
            evaluate(&pred, &truth, &out, policy)?;
        }
        Command::Pipeline { stages, cfg } => {
            if cfg.config.is_none() {
                bail!("pipeline needs --config");
            }
            let cfg = load_config(&cfg)?;
            let stages: Vec<Stage> = match stages {
                Some(names) => names.iter().map(|s| s.parse()).collect::<Result<_, _>>()?,
                None => Stage::ALL.to_vec(),
            };
            let prov = run_pipeline(&cfg, &stages)?;
            for s in &prov.stages {
                println!("{:<12} {:>5} items {:>9.2}s", s.stage.name(), s.items, s.seconds);
            }
            for w in &prov.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Synth { out, n, seed, dims } => {
            let [nx, ny, nz] = dims[..] else {
                bail!("--dims needs three values");
            };
            let cfg = SyntheticConfig {
                dims: [nx, ny, nz],
                ..Default::default()
            };
            let manifests = write_synthetic_cohort(&cfg, n, seed, &out)?;
            println!("{} studies in {}", manifests.len(), out.display());
        }
        Command::Overlay {
            manifest,
            seg,
            slice,
            out,
        } => {
            let study = read_study(&manifest)?;
            ensure_parent(&out)?;
            render_overlay(&study, &read_segmentation(&seg)?, slice, &out)?;
        }
    }
    Ok(())
}

/// Per-study Dice rows followed by mean, std and median rows.
fn evaluate(pred: &Path, truth: &Path, out: &Path, policy: EmptyPolicy) -> Result<()> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(pred)
        .with_context(|| format!("reading {}", pred.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "gpv1"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .gpv1 segmentations in {}", pred.display());
    }
    let mut rows: Vec<(String, DiceReport)> = Vec::new();
    for p in &files {
        let name = p.file_name().unwrap();
        let t = truth.join(name);
        if !t.exists() {
            bail!("no ground truth {} for {}", t.display(), p.display());
        }
        let report = dice_report_with(&read_segmentation(p)?, &read_segmentation(&t)?, policy)?;
        let id = p.file_stem().unwrap().to_string_lossy();
        rows.push((id.trim_end_matches("_seg").to_string(), report));
    }
    let summary = cohort_summary(&rows.iter().map(|r| r.1.clone()).collect::<Vec<_>>())?;
    ensure_parent(out)?;
    let mut text = String::from("patient_id,whole,core,active\n");
    for (id, r) in &rows {
        text += &format!("{id},{},{},{}\n", r.whole, r.core, r.active);
    }
    for (name, pick) in [
        ("mean", (|s: gliomapipe_core::metrics::SummaryStats| s.mean) as fn(_) -> f64),
        ("std", |s| s.std),
        ("median", |s| s.median),
    ] {
        text += &format!(
            "{name},{},{},{}\n",
            pick(summary.whole),
            pick(summary.core),
            pick(summary.active)
        );
    }
    std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "whole {:.4}  core {:.4}  active {:.4}  (mean over {} studies)",
        summary.whole.mean,
        summary.core.mean,
        summary.active.mean,
        rows.len()
    );
    Ok(())
}
