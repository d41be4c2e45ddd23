use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the encoder-decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    /// Output channels of each encoder level, shallowest first. The
    /// bottleneck uses twice the deepest entry.
    pub encoder_filters: Vec<usize>,
    pub levels: usize,
    pub n_classes: usize,
    pub input_channels: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            encoder_filters: vec![8, 16, 32, 64],
            levels: 4,
            n_classes: 4,
            input_channels: 4,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.levels != self.encoder_filters.len() {
            return Err(Error::Config(format!(
                "levels = {} but {} encoder filter counts given",
                self.levels,
                self.encoder_filters.len()
            )));
        }
        if self.encoder_filters.contains(&0) || self.n_classes < 2 || self.input_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        Ok(())
    }

    /// Conv and transposed-conv layers: two per conv block (2·levels + 1
    /// blocks), one transposed conv per level, and the 1×1 head.
    pub fn expected_layer_count(&self) -> usize {
        2 * (2 * self.levels + 1) + self.levels + 1
    }

    /// Spatial sizes must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << self.levels
    }
}

/// Optimization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Loss weights for background, necrosis, edema, enhancing.
    pub class_weights: Vec<f64>,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub augment_hflip: bool,
    pub lesion_slices_only: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            class_weights: vec![1.0, 5.0, 2.0, 3.0],
            lr: 1e-4,
            batch_size: 4,
            seed: 0,
            augment_hflip: true,
            lesion_slices_only: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.class_weights.len() != 4 || self.class_weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Config("class_weights must be 4 positive numbers".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr {} must be positive", self.lr)));
        }
        Ok(())
    }
}
