//! Stage orchestration over an output directory, with provenance.
//!
//! Layout under `paths.output`:
//! `preprocessed/` (`<id>_<mod>_pp.gpv1`, `<id>_t1c_hm.gpv1`, `<id>_pp.toml`),
//! `model/network.ckpt` (+ `.best`), `model/training.json`,
//! `segmentation/<id>_seg.gpv1`, `postprocessed/<id>_seg.gpv1`,
//! `evaluation.csv`, `features.csv`, `targets.csv`, `model/gbt.json`,
//! `survival.csv`, `survival_metrics.json`, `provenance.json`.

mod config;
mod overlay;
mod tables;

pub use config::{PathsConfig, PipelineConfig, PostprocessConfig, PreprocessConfig, SEED_ENV};
pub use overlay::{label_color, overlay_ppm, render_overlay, ALPHA};
pub use tables::{
    read_predictions, read_targets, write_dice_table, write_predictions, write_targets, FeatureTable, Prediction,
};

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::dice_report;
use crate::postprocess::{binarize_masks, remove_small_components};
use crate::preprocess::{preprocess_study, ReferenceSet};
use crate::radiomics::{extract_feature_row, feature_names, FeatureRow, FEATURES_PER_MASK, ROW_LEN};
use crate::survival::{evaluate_survival, predict_many, train_gbt};
use crate::training::{fit, segment_study, Checkpoint, Network, TrainOptions};
use crate::volume_io::{read_segmentation, read_study, write_segmentation, write_study, Study};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Preprocess,
    /// Trains the network on studies with ground truth, then segments all.
    Segment,
    Postprocess,
    Features,
    Survival,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Preprocess,
        Stage::Segment,
        Stage::Postprocess,
        Stage::Features,
        Stage::Survival,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Preprocess => "preprocess",
            Self::Segment => "segment",
            Self::Postprocess => "postprocess",
            Self::Features => "features",
            Self::Survival => "survival",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

/// Checks that stages are unique and listed in pipeline order.
pub fn validate_stages(stages: &[Stage]) -> Result<()> {
    if stages.is_empty() {
        return Err(Error::Config("no stages selected".into()));
    }
    if stages.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "stages must be unique and in pipeline order ({})",
            Stage::ALL.map(Stage::name).join(", ")
        )));
    }
    Ok(())
}

/// Paths of every artifact inside an output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn preprocessed_dir(&self) -> PathBuf {
        self.root.join("preprocessed")
    }
    pub fn model_dir(&self) -> PathBuf {
        self.root.join("model")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.model_dir().join("network.ckpt")
    }
    pub fn training_report(&self) -> PathBuf {
        self.model_dir().join("training.json")
    }
    pub fn gbt_model(&self) -> PathBuf {
        self.model_dir().join("gbt.json")
    }
    pub fn raw_segmentation(&self, id: &str) -> PathBuf {
        self.root.join("segmentation").join(format!("{id}_seg.gpv1"))
    }
    pub fn clean_segmentation(&self, id: &str) -> PathBuf {
        self.root.join("postprocessed").join(format!("{id}_seg.gpv1"))
    }
    pub fn evaluation(&self) -> PathBuf {
        self.root.join("evaluation.csv")
    }
    pub fn features(&self) -> PathBuf {
        self.root.join("features.csv")
    }
    pub fn targets(&self) -> PathBuf {
        self.root.join("targets.csv")
    }
    pub fn survival(&self) -> PathBuf {
        self.root.join("survival.csv")
    }
    pub fn survival_metrics(&self) -> PathBuf {
        self.root.join("survival_metrics.json")
    }
    pub fn provenance(&self) -> PathBuf {
        self.root.join("provenance.json")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub seconds: f64,
    /// Number of studies (or rows) the stage processed.
    pub items: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub formats: FormatVersions,
    pub stages: Vec<StageRecord>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormatVersions {
    pub volume: String,
    pub checkpoint: u32,
    pub gbt_model: u32,
}

/// Manifests (`*.toml`) in a directory, sorted by file name.
pub fn list_manifests(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for e in entries {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "toml") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn load_studies(dir: &Path) -> Result<Vec<Study>> {
    list_manifests(dir)?.iter().map(read_study).collect()
}

fn require(stage: Stage, path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::StageDependency {
            stage: stage.name().into(),
            missing: path.display().to_string(),
        })
    }
}

fn preprocessed_studies(stage: Stage, layout: &Layout) -> Result<Vec<Study>> {
    let dir = layout.preprocessed_dir();
    require(stage, &dir)?;
    let studies = load_studies(&dir)?;
    if studies.is_empty() {
        return Err(Error::StageDependency {
            stage: stage.name().into(),
            missing: format!("preprocessed studies in {}", dir.display()),
        });
    }
    Ok(studies)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn stage_preprocess(cfg: &PipelineConfig, layout: &Layout) -> Result<usize> {
    let reference = read_study(&cfg.paths.reference)?;
    let refs = ReferenceSet::from_study(&reference, cfg.preprocess.n_levels)?;
    let manifests = list_manifests(&cfg.paths.studies)?;
    if manifests.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no study manifests in {}",
            cfg.paths.studies.display()
        )));
    }
    for m in &manifests {
        let study = read_study(m)?;
        study.require_all_modalities()?;
        let pp = preprocess_study(&study, &refs, cfg.preprocess.foreground_only)?;
        write_study(&pp, layout.preprocessed_dir(), "_pp")?;
    }
    Ok(manifests.len())
}

#[derive(Serialize)]
struct TrainingSummary<'a> {
    slices: usize,
    best_epoch: usize,
    epochs: &'a [crate::training::EpochStats],
}

fn stage_segment(cfg: &PipelineConfig, layout: &Layout) -> Result<usize> {
    let studies = preprocessed_studies(Stage::Segment, layout)?;
    let labelled: Vec<Study> = studies.iter().filter(|s| s.ground_truth.is_some()).cloned().collect();
    if labelled.is_empty() {
        return Err(Error::NoTrainingData);
    }
    std::fs::create_dir_all(layout.model_dir()).map_err(|e| Error::io(layout.model_dir(), e))?;
    let opts = TrainOptions {
        validation: &[],
        checkpoint: Some(layout.checkpoint()),
    };
    let (mut net, report) = fit(&cfg.network, &cfg.train, &labelled, &opts)?;
    write_json(
        &layout.training_report(),
        &TrainingSummary {
            slices: report.slices,
            best_epoch: report.best_epoch,
            epochs: &report.epochs,
        },
    )?;
    for s in &studies {
        let seg = segment_study(&mut net, s)?;
        let path = layout.raw_segmentation(&s.patient_id);
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| Error::io(&path, e))?;
        write_segmentation(&seg, &path)?;
    }
    Ok(studies.len())
}

fn stage_postprocess(cfg: &PipelineConfig, layout: &Layout) -> Result<usize> {
    let studies = preprocessed_studies(Stage::Postprocess, layout)?;
    let conn = cfg.postprocess.connectivity()?;
    let mut evaluation = Vec::new();
    for s in &studies {
        let raw_path = layout.raw_segmentation(&s.patient_id);
        require(Stage::Postprocess, &raw_path)?;
        let raw = read_segmentation(&raw_path)?;
        let clean = remove_small_components(&raw, cfg.postprocess.min_size, conn);
        let out = layout.clean_segmentation(&s.patient_id);
        std::fs::create_dir_all(out.parent().unwrap()).map_err(|e| Error::io(&out, e))?;
        write_segmentation(&clean, &out)?;
        if let Some(gt) = &s.ground_truth {
            evaluation.push((s.patient_id.clone(), vec![dice_report(&raw, gt)?, dice_report(&clean, gt)?]));
        }
    }
    if !evaluation.is_empty() {
        write_dice_table(layout.evaluation(), &["raw", ""], &evaluation)?;
    }
    Ok(studies.len())
}

fn stage_features(cfg: &PipelineConfig, layout: &Layout, warnings: &mut Vec<String>) -> Result<usize> {
    let studies = preprocessed_studies(Stage::Features, layout)?;
    let mut rows = Vec::with_capacity(studies.len());
    let mut targets = Vec::new();
    for s in &studies {
        let path = layout.clean_segmentation(&s.patient_id);
        require(Stage::Features, &path)?;
        let seg = read_segmentation(&path)?;
        let age = s
            .age
            .ok_or_else(|| Error::InvalidData(format!("study {} has no age", s.patient_id)))?;
        let masks = binarize_masks(&seg)?;
        let row = match extract_feature_row(s, &masks, age, &cfg.radiomics) {
            Ok(r) => r,
            Err(Error::EmptyLesion) => {
                warnings.push(format!("{}: empty lesion after post-processing; zero feature row", s.patient_id));
                let mut values = vec![0.0; 4 * FEATURES_PER_MASK];
                values.push(age);
                FeatureRow {
                    patient_id: s.patient_id.clone(),
                    values,
                    missing: vec!["whole", "edema", "necrosis", "enhancing"],
                    degenerate: Vec::new(),
                }
            }
            Err(e) => return Err(e),
        };
        debug_assert_eq!(row.values.len(), ROW_LEN);
        for m in &row.missing {
            if *m != "whole" {
                warnings.push(format!("{}: {m} mask empty; zero block", s.patient_id));
            }
        }
        rows.push(row);
        if let Some(d) = s.survival_days {
            targets.push((s.patient_id.clone(), d));
        }
    }
    FeatureTable::from_rows(feature_names(), &rows).write(layout.features())?;
    write_targets(layout.targets(), &targets)?;
    Ok(rows.len())
}

fn stage_survival(cfg: &PipelineConfig, layout: &Layout) -> Result<usize> {
    require(Stage::Survival, &layout.features())?;
    require(Stage::Survival, &layout.targets())?;
    let table = FeatureTable::read(layout.features())?;
    let targets = read_targets(layout.targets())?;
    let mut train_rows = Vec::new();
    let mut train_y = Vec::new();
    for (id, days) in &targets {
        let row = table
            .row_of(id)
            .ok_or_else(|| Error::InvalidData(format!("target for {id} has no feature row")))?;
        train_rows.push(row.to_vec());
        train_y.push(*days);
    }
    let model = train_gbt(&train_rows, &train_y, &table.names, &cfg.survival)?;
    model.save(layout.gbt_model())?;
    let preds = predict_many(&model, &table.rows)?;
    let out: Vec<Prediction> = table
        .patient_ids
        .iter()
        .zip(&preds)
        .map(|(id, &d)| Prediction::new(id.clone(), d))
        .collect::<Result<_>>()?;
    write_predictions(layout.survival(), &out)?;
    let fitted = predict_many(&model, &train_rows)?;
    write_json(&layout.survival_metrics(), &evaluate_survival(&fitted, &train_y)?)?;
    Ok(out.len())
}

/// Runs `stages` in order. Stages not listed must have left their
/// artifacts in the output directory from an earlier run.
pub fn run_pipeline(cfg: &PipelineConfig, stages: &[Stage]) -> Result<Provenance> {
    cfg.validate()?;
    validate_stages(stages)?;
    let layout = Layout::new(&cfg.paths.output);
    std::fs::create_dir_all(&layout.root).map_err(|e| Error::io(&layout.root, e))?;
    let mut prov = Provenance {
        tool: "gliomapipe".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: cfg.hash()?,
        seed: cfg.seed,
        formats: FormatVersions {
            volume: "GPV1".into(),
            checkpoint: crate::training::CHECKPOINT_VERSION,
            gbt_model: crate::survival::MODEL_VERSION,
        },
        stages: Vec::new(),
        warnings: Vec::new(),
    };
    for &stage in stages {
        let t = Instant::now();
        let items = match stage {
            Stage::Preprocess => stage_preprocess(cfg, &layout)?,
            Stage::Segment => stage_segment(cfg, &layout)?,
            Stage::Postprocess => stage_postprocess(cfg, &layout)?,
            Stage::Features => stage_features(cfg, &layout, &mut prov.warnings)?,
            Stage::Survival => stage_survival(cfg, &layout)?,
        };
        prov.stages.push(StageRecord {
            stage,
            seconds: t.elapsed().as_secs_f64(),
            items,
        });
    }
    write_json(&layout.provenance(), &prov)?;
    Ok(prov)
}

/// Loads a network checkpoint written by the segment stage or `train`.
pub fn load_network(path: impl AsRef<Path>) -> Result<Network<f32>> {
    Ok(Checkpoint::load(path)?.network)
}
