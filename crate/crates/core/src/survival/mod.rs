//! Gradient-boosted regression trees for overall survival, prognosis
//! buckets, and survival evaluation.

mod eval;
mod gbt;

pub use eval::{
    average_ranks, bucketize, evaluate_survival, pearson, spearman, SurvivalBucket, SurvivalMetrics, DAYS_PER_MONTH,
    LONG_LIMIT_DAYS, SHORT_LIMIT_DAYS,
};
pub(crate) use eval::{mean_std, median};
pub use gbt::{predict_gbt, predict_many, train_gbt, GbtModel, GbtParams, Node, Tree, MODEL_FORMAT, MODEL_VERSION};
