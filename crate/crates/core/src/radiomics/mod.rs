//! First-order intensity and shape features per lesion mask, assembled into
//! the survival feature row.

mod first_order;
mod shape;

pub use first_order::{first_order_features, first_order_from_values, masked_values, percentile_sorted, FirstOrderFeatures};
pub use shape::{exposed_surface_area, principal_variances, shape_features, ShapeFeatures};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::postprocess::MaskSet;
use crate::volume_io::Study;

pub const FEATURES_PER_MASK: usize = 19 + 16;
pub const ROW_LEN: usize = 4 * FEATURES_PER_MASK + 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadiomicsConfig {
    /// Histogram bin width for entropy and uniformity, in intensity units.
    pub bin_width: f64,
}

impl Default for RadiomicsConfig {
    fn default() -> Self {
        Self { bin_width: 25.0 }
    }
}

/// Column names in row order: `mask.feature` for each mask, then `age`.
pub fn feature_names() -> Vec<String> {
    let mut out = Vec::with_capacity(ROW_LEN);
    for mask in MaskSet::NAMES {
        for f in FirstOrderFeatures::NAMES.iter().chain(ShapeFeatures::NAMES.iter()) {
            out.push(format!("{mask}.{f}"));
        }
    }
    out.push("age".into());
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub patient_id: String,
    /// [`ROW_LEN`] values in [`feature_names`] order.
    pub values: Vec<f64>,
    /// Masks (by name) that were empty and contributed a zero block.
    pub missing: Vec<&'static str>,
    /// `mask.first_order` / `mask.shape` blocks with degenerate moments or axes.
    pub degenerate: Vec<String>,
}

impl FeatureRow {
    pub fn age(&self) -> f64 {
        self.values[ROW_LEN - 1]
    }
}

/// Features of the study's T1c (histogram-matched when available) under each
/// mask, followed by `age`.
pub fn extract_feature_row(study: &Study, masks: &MaskSet, age: f64, cfg: &RadiomicsConfig) -> Result<FeatureRow> {
    if masks.whole.is_empty() {
        return Err(Error::EmptyLesion);
    }
    let t1c = study.radiomics_t1c()?;
    let mut values = Vec::with_capacity(ROW_LEN);
    let mut missing = Vec::new();
    let mut degenerate = Vec::new();
    for (name, mask) in masks.iter() {
        if mask.is_empty() {
            values.extend(std::iter::repeat_n(0.0, FEATURES_PER_MASK));
            missing.push(name);
            continue;
        }
        let fo = first_order_features(t1c, mask, cfg.bin_width)?;
        let sh = shape_features(mask)?;
        if fo.degenerate {
            degenerate.push(format!("{name}.first_order"));
        }
        if sh.degenerate {
            degenerate.push(format!("{name}.shape"));
        }
        values.extend(fo.to_array());
        values.extend(sh.to_array());
    }
    values.push(age);
    Ok(FeatureRow {
        patient_id: study.patient_id.clone(),
        values,
        missing,
        degenerate,
    })
}

#[cfg(test)]
mod tests;
