//! Intensity standardization: histogram matching against a reference volume
//! followed by z-score normalization.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::volume_io::{Modality, Study, Volume};

/// Bin count used when none is configured.
pub const DEFAULT_LEVELS: usize = 1024;
/// Standard deviations at or below this are treated as constant volumes.
pub const MIN_STD: f64 = 1e-8;

/// Cumulative histogram of a volume's foreground.
///
/// Bin `i` spans `(levels[i-1], levels[i]]` with `levels[-1] == lower`;
/// `cumulative[i]` is the fraction of foreground voxels in bins `0..=i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceCdf {
    pub lower: f64,
    pub levels: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub foreground_threshold: f64,
}

impl ReferenceCdf {
    fn width(&self) -> f64 {
        self.levels[0] - self.lower
    }

    /// All foreground mass in the first bin only happens for constant data.
    fn is_constant(&self) -> bool {
        self.cumulative[0] >= 1.0
    }

    /// Piecewise-linear CDF evaluated at `v`.
    pub fn cdf_at(&self, v: f64) -> f64 {
        if self.is_constant() {
            return 0.5;
        }
        let w = self.width();
        let last = self.levels.len() - 1;
        let b = (((v - self.lower) / w).floor().max(0.0) as usize).min(last);
        let left = self.lower + b as f64 * w;
        let frac = ((v - left) / w).clamp(0.0, 1.0);
        let before = if b == 0 { 0.0 } else { self.cumulative[b - 1] };
        before + frac * (self.cumulative[b] - before)
    }

    /// Intensity whose cumulative probability first reaches `q`, interpolated
    /// linearly inside the bin. An exact hit on a flat stretch resolves to its
    /// right end so that bin edges map onto themselves.
    pub fn inverse(&self, q: f64) -> f64 {
        if self.is_constant() {
            return self.lower;
        }
        let last = self.levels.len() - 1;
        let q = q.clamp(0.0, 1.0);
        let i = self.cumulative.partition_point(|&c| c < q).min(last);
        if self.cumulative[i] == q {
            let mut j = i;
            while j < last && self.cumulative[j + 1] == q {
                j += 1;
            }
            if q > 0.0 || i > 0 {
                return self.levels[j];
            }
        }
        let lo_c = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
        let x0 = if i == 0 { self.lower } else { self.levels[i - 1] };
        let x1 = self.levels[i];
        let span = self.cumulative[i] - lo_c;
        if span <= 0.0 {
            return x0;
        }
        let t = ((q - lo_c) / span).clamp(0.0, 1.0);
        x0 + t * (x1 - x0)
    }
}

pub fn compute_reference_cdf(volume: &Volume, n_levels: usize) -> Result<ReferenceCdf> {
    compute_reference_cdf_with_threshold(volume, n_levels, 0.0)
}

/// Equal-width histogram of voxels strictly above `threshold`.
pub fn compute_reference_cdf_with_threshold(
    volume: &Volume,
    n_levels: usize,
    threshold: f64,
) -> Result<ReferenceCdf> {
    if n_levels < 2 {
        return Err(Error::Config(format!("n_levels must be >= 2, got {n_levels}")));
    }
    let fg: Vec<f64> = volume
        .data()
        .iter()
        .map(|&v| v as f64)
        .filter(|&v| v > threshold)
        .collect();
    if fg.is_empty() {
        return Err(Error::EmptyForeground);
    }
    let lo = fg.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = fg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w = if hi > lo {
        (hi - lo) / n_levels as f64
    } else {
        1.0
    };
    let mut counts = vec![0usize; n_levels];
    for &v in &fg {
        let b = (((v - lo) / w).floor() as usize).min(n_levels - 1);
        counts[b] += 1;
    }
    let total = fg.len() as f64;
    let mut acc = 0usize;
    let mut cumulative: Vec<f64> = counts
        .iter()
        .map(|&c| {
            acc += c;
            acc as f64 / total
        })
        .collect();
    cumulative[n_levels - 1] = 1.0;
    let mut levels: Vec<f64> = (1..=n_levels).map(|i| lo + i as f64 * w).collect();
    if hi > lo {
        levels[n_levels - 1] = hi;
    }
    Ok(ReferenceCdf {
        lower: lo,
        levels,
        cumulative,
        foreground_threshold: threshold,
    })
}

/// Maps foreground intensities of `volume` onto the reference distribution.
/// Voxels at or below the reference's foreground threshold become 0.
pub fn histogram_match(volume: &Volume, reference: &ReferenceCdf, n_levels: usize) -> Result<Volume> {
    let source =
        compute_reference_cdf_with_threshold(volume, n_levels, reference.foreground_threshold)?;
    let data = volume
        .data()
        .iter()
        .map(|&v| {
            let v = v as f64;
            if v <= reference.foreground_threshold {
                0.0
            } else {
                reference.inverse(source.cdf_at(v)) as f32
            }
        })
        .collect();
    volume.with_data(data)
}

/// `(x - mean) / std` with population statistics over every voxel.
pub fn zscore_normalize(volume: &Volume) -> Result<Volume> {
    zscore_normalize_with(volume, false)
}

/// When `foreground_only` is set, statistics come from voxels `> 0`, those
/// voxels are normalized, and background stays 0.
pub fn zscore_normalize_with(volume: &Volume, foreground_only: bool) -> Result<Volume> {
    let keep = |v: f32| !foreground_only || v > 0.0;
    let (mut n, mut sum) = (0usize, 0.0f64);
    for &v in volume.data() {
        if keep(v) {
            n += 1;
            sum += v as f64;
        }
    }
    if n == 0 {
        return Err(Error::EmptyForeground);
    }
    let mean = sum / n as f64;
    let var = volume
        .data()
        .iter()
        .filter(|&&v| keep(v))
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    let std = var.sqrt();
    if std <= MIN_STD {
        return Err(Error::DegenerateVolume(std));
    }
    let data = volume
        .data()
        .iter()
        .map(|&v| {
            if keep(v) {
                ((v as f64 - mean) / std) as f32
            } else {
                0.0
            }
        })
        .collect();
    volume.with_data(data)
}

/// Per-modality reference CDFs taken from one designated study.
#[derive(Clone, Debug)]
pub struct ReferenceSet {
    pub cdfs: BTreeMap<Modality, ReferenceCdf>,
    pub n_levels: usize,
}

impl ReferenceSet {
    pub fn from_study(reference: &Study, n_levels: usize) -> Result<Self> {
        let cdfs = reference
            .volumes
            .iter()
            .map(|(&m, v)| Ok((m, compute_reference_cdf(v, n_levels)?)))
            .collect::<Result<_>>()?;
        Ok(Self { cdfs, n_levels })
    }
}

/// Histogram-matches then z-scores every modality of `study`. The matched,
/// un-normalized T1c is kept for radiomics.
pub fn preprocess_study(study: &Study, refs: &ReferenceSet, foreground_only: bool) -> Result<Study> {
    let mut volumes = BTreeMap::new();
    let mut t1c_matched = None;
    for (&m, v) in &study.volumes {
        let cdf = refs
            .cdfs
            .get(&m)
            .ok_or_else(|| Error::MissingModality(format!("reference has no {}", m.key())))?;
        let matched = histogram_match(v, cdf, refs.n_levels)?;
        volumes.insert(m, zscore_normalize_with(&matched, foreground_only)?);
        if m == Modality::T1c {
            t1c_matched = Some(matched);
        }
    }
    let mut out = Study::new(
        study.patient_id.clone(),
        volumes,
        study.ground_truth.clone(),
        study.age,
        study.survival_days,
    )?;
    out.t1c_matched = t1c_matched;
    Ok(out)
}
