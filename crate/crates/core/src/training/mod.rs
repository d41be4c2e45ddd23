//! Network assembly, the training loop, and slice-wise inference.

mod augment;
mod checkpoint;
mod config;
mod network;
mod trainer;

pub use augment::{augment_hflip, hflip_sample};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{NetworkConfig, TrainConfig};
pub use network::{build_network, ConvBlock, LayerInfo, LayerKind, Network};
pub use trainer::{
    argmax_classes, best_path, class_to_label, collect_slices, evaluate_loss, fit, label_to_class,
    segment_study, train, train_with, EpochStats, TrainOptions, TrainingReport, TrainingSlice,
};
