//! Training loop and slice-wise inference.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::augment::hflip_sample;
use super::checkpoint::Checkpoint;
use super::{Network, NetworkConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::{softmax_weighted_ce, AdamConfig, AdamState, Mode};
use crate::tensor::Tensor4;
use crate::volume_io::{extract_axial_slices, SegmentationVolume, Study};

/// Stored label → network class index (necrosis 1, edema 2, enhancing 4 → 3).
pub fn label_to_class(label: u8) -> Result<u8> {
    match label {
        0..=2 => Ok(label),
        4 => Ok(3),
        other => Err(Error::Label(format!("label {other} not in {{0,1,2,4}}"))),
    }
}

/// Network class index → stored label.
pub fn class_to_label(class: u8) -> Result<u8> {
    match class {
        0..=2 => Ok(class),
        3 => Ok(4),
        other => Err(Error::Label(format!("class {other} not in 0..4"))),
    }
}

/// One training example: a `1 × 4 × H × W` slice and its class indices.
#[derive(Clone, Debug)]
pub struct TrainingSlice {
    pub patient_id: String,
    pub index: usize,
    pub image: Tensor4<f32>,
    pub targets: Vec<u8>,
}

/// Slices of every study that carry ground truth, zero-padded to the
/// network divisor. With `lesion_only`, planes without lesion are skipped.
pub fn collect_slices(studies: &[Study], lesion_only: bool, divisor: usize) -> Result<Vec<TrainingSlice>> {
    let mut out = Vec::new();
    for s in studies {
        if s.ground_truth.is_none() {
            return Err(Error::MissingGroundTruth(s.patient_id.clone()));
        }
        for sl in extract_axial_slices(s, lesion_only)? {
            let [_, _, h, w] = sl.image.shape();
            let labels = sl.labels.expect("ground truth present");
            let targets = labels.iter().map(|&l| label_to_class(l)).collect::<Result<Vec<_>>>()?;
            let (image, targets) = pad_slice(&sl.image, &targets, divisor, h, w);
            out.push(TrainingSlice {
                patient_id: s.patient_id.clone(),
                index: sl.index,
                image,
                targets,
            });
        }
    }
    Ok(out)
}

fn padded_extent(n: usize, div: usize) -> (usize, usize) {
    let total = n.div_ceil(div) * div;
    let before = (total - n) / 2;
    (total, before)
}

/// Zero-pads a single-sample tensor symmetrically so H and W are multiples
/// of `div`; padded targets are background.
fn pad_slice(image: &Tensor4<f32>, targets: &[u8], div: usize, h: usize, w: usize) -> (Tensor4<f32>, Vec<u8>) {
    let (ph, top) = padded_extent(h, div);
    let (pw, left) = padded_extent(w, div);
    if (ph, pw) == (h, w) {
        return (image.clone(), targets.to_vec());
    }
    let c = image.channels();
    let padded = Tensor4::from_fn([1, c, ph, pw], |[_, ch, y, x]| {
        if y >= top && y < top + h && x >= left && x < left + w {
            image.get(0, ch, y - top, x - left)
        } else {
            0.0
        }
    });
    let mut t = vec![0u8; ph * pw];
    if !targets.is_empty() {
        for y in 0..h {
            for x in 0..w {
                t[(y + top) * pw + x + left] = targets[y * w + x];
            }
        }
    }
    (padded, t)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Weighted cross-entropy averaged over the epoch's pixels.
    pub loss: f64,
    /// Fraction of pixels of each class predicted as that class; `None`
    /// when the class never occurred.
    pub class_accuracy: [Option<f64>; 4],
    pub validation_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub slices: usize,
}

impl TrainingReport {
    pub fn initial_loss(&self) -> f64 {
        self.epochs.first().map_or(f64::NAN, |e| e.loss)
    }
    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.loss)
    }
}

/// Optional extras for [`train_with`].
#[derive(Clone, Debug, Default)]
pub struct TrainOptions<'a> {
    pub validation: &'a [Study],
    /// Latest state is written here after each epoch; the best-loss state
    /// goes to the same path with a `.best` extension appended.
    pub checkpoint: Option<PathBuf>,
}

pub fn train(network: &mut Network<f32>, studies: &[Study], cfg: &TrainConfig) -> Result<TrainingReport> {
    train_with(network, studies, cfg, &TrainOptions::default())
}

/// Builds, seeds and trains a fresh network.
pub fn fit(
    net_cfg: &NetworkConfig,
    cfg: &TrainConfig,
    studies: &[Study],
    opts: &TrainOptions<'_>,
) -> Result<(Network<f32>, TrainingReport)> {
    let mut net = Network::new(net_cfg.clone())?;
    net.init(cfg.seed);
    let report = train_with(&mut net, studies, cfg, opts)?;
    Ok((net, report))
}

pub fn best_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".best");
    PathBuf::from(s)
}

pub fn train_with(
    network: &mut Network<f32>,
    studies: &[Study],
    cfg: &TrainConfig,
    opts: &TrainOptions<'_>,
) -> Result<TrainingReport> {
    cfg.validate()?;
    let div = network.config().divisor();
    let slices = collect_slices(studies, cfg.lesion_slices_only, div)?;
    if slices.is_empty() {
        return Err(Error::NoTrainingData);
    }
    let validation = if opts.validation.is_empty() {
        Vec::new()
    } else {
        collect_slices(opts.validation, cfg.lesion_slices_only, div)?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(AdamConfig {
        lr: cfg.lr,
        ..Default::default()
    });
    let mut order: Vec<usize> = (0..slices.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, 0usize);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut weight_sum = 0.0;
        let mut hits = [0usize; 4];
        let mut totals = [0usize; 4];
        for chunk in order.chunks(cfg.batch_size) {
            let (mut batch, mut targets) = assemble(&slices, chunk)?;
            if cfg.augment_hflip {
                for i in 0..chunk.len() {
                    if rng.random_bool(0.5) {
                        hflip_sample(&mut batch, &mut targets, i);
                    }
                }
            }
            let logits = network.forward(&batch, Mode::Train)?;
            let out = softmax_weighted_ce(&logits, &targets, &cfg.class_weights)?;
            let w: f64 = targets.iter().map(|&t| cfg.class_weights[t as usize]).sum();
            loss_sum += out.loss * w;
            weight_sum += w;
            tally(&logits, &targets, &mut hits, &mut totals);
            network.zero_grad();
            network.backward(&out.grad)?;
            adam.step(&mut network.params_mut());
        }
        let loss = loss_sum / weight_sum;
        let validation_loss = if validation.is_empty() {
            None
        } else {
            Some(evaluate_loss(network, &validation, &cfg.class_weights, cfg.batch_size)?)
        };
        let mut class_accuracy = [None; 4];
        for k in 0..4 {
            if totals[k] > 0 {
                class_accuracy[k] = Some(hits[k] as f64 / totals[k] as f64);
            }
        }
        epochs.push(EpochStats {
            epoch,
            loss,
            class_accuracy,
            validation_loss,
        });
        if let Some(path) = &opts.checkpoint {
            let mut ck = Checkpoint {
                seed: cfg.seed,
                epoch: epoch as u64,
                network: network.clone(),
                adam: Some(adam.clone()),
            };
            ck.save(path)?;
            if loss < best.0 {
                ck.save(best_path(path))?;
            }
        }
        if loss < best.0 {
            best = (loss, epoch);
        }
    }
    Ok(TrainingReport {
        epochs,
        best_epoch: best.1,
        slices: slices.len(),
    })
}

fn assemble(slices: &[TrainingSlice], idx: &[usize]) -> Result<(Tensor4<f32>, Vec<u8>)> {
    let images: Vec<&Tensor4<f32>> = idx.iter().map(|&i| &slices[i].image).collect();
    let batch = Tensor4::stack(&images)?;
    let targets = idx.iter().flat_map(|&i| slices[i].targets.iter().copied()).collect();
    Ok((batch, targets))
}

fn tally(logits: &Tensor4<f32>, targets: &[u8], hits: &mut [usize; 4], totals: &mut [usize; 4]) {
    let pred = argmax_classes(logits);
    for (&p, &t) in pred.iter().zip(targets) {
        totals[t as usize] += 1;
        if p == t {
            hits[t as usize] += 1;
        }
    }
}

/// Weighted loss of `slices` in inference mode.
pub fn evaluate_loss(
    network: &mut Network<f32>,
    slices: &[TrainingSlice],
    weights: &[f64],
    batch_size: usize,
) -> Result<f64> {
    let idx: Vec<usize> = (0..slices.len()).collect();
    let (mut sum, mut wsum) = (0.0, 0.0);
    for chunk in idx.chunks(batch_size.max(1)) {
        let (batch, targets) = assemble(slices, chunk)?;
        let logits = network.forward(&batch, Mode::Infer)?;
        let out = softmax_weighted_ce(&logits, &targets, weights)?;
        let w: f64 = targets.iter().map(|&t| weights[t as usize]).sum();
        sum += out.loss * w;
        wsum += w;
    }
    Ok(sum / wsum)
}

/// Per-pixel argmax over channels, `(n, h, w)` order; ties go to the lowest class.
pub fn argmax_classes(logits: &Tensor4<f32>) -> Vec<u8> {
    let [n, c, h, w] = logits.shape();
    let plane = h * w;
    let data = logits.as_slice();
    let mut out = Vec::with_capacity(n * plane);
    for i in 0..n {
        for px in 0..plane {
            let mut best = 0;
            let mut best_v = data[i * c * plane + px];
            for k in 1..c {
                let v = data[(i * c + k) * plane + px];
                if v > best_v {
                    best = k;
                    best_v = v;
                }
            }
            out.push(best as u8);
        }
    }
    out
}

/// Labels every voxel of `study` by running each axial slice through the
/// network in inference mode.
pub fn segment_study(network: &mut Network<f32>, study: &Study) -> Result<SegmentationVolume> {
    let (dims, spacing) = study
        .geometry()
        .ok_or_else(|| Error::MissingModality(format!("{} has no volumes", study.patient_id)))?;
    let [nx, ny, _] = dims;
    let div = network.config().divisor();
    let (ph, top) = padded_extent(ny, div);
    let (pw, left) = padded_extent(nx, div);
    let mut labels = vec![0u8; dims.iter().product()];
    let plane = nx * ny;
    for sl in extract_axial_slices(study, false)? {
        let (image, _) = pad_slice(&sl.image, &[], div, ny, nx);
        let logits = network.forward(&image, Mode::Infer)?;
        let classes = argmax_classes(&logits);
        let dst = &mut labels[sl.index * plane..(sl.index + 1) * plane];
        for y in 0..ny {
            for x in 0..nx {
                dst[y * nx + x] = class_to_label(classes[(y + top) * pw + x + left])?;
            }
        }
        debug_assert_eq!(classes.len(), ph * pw);
    }
    SegmentationVolume::new(dims, spacing, labels)
}
