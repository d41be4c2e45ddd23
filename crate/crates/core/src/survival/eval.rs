use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Days per month used for the bucket boundaries.
pub const DAYS_PER_MONTH: f64 = 365.25 / 12.0;
pub const SHORT_LIMIT_DAYS: f64 = 10.0 * DAYS_PER_MONTH;
pub const LONG_LIMIT_DAYS: f64 = 15.0 * DAYS_PER_MONTH;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurvivalBucket {
    Short,
    Mid,
    Long,
}

impl SurvivalBucket {
    pub fn name(self) -> &'static str {
        match self {
            Self::Short => "short",
            Self::Mid => "mid",
            Self::Long => "long",
        }
    }
}

/// Short below 10 months, Long above 15, Mid in between with both
/// boundaries included.
pub fn bucketize(days: f64) -> Result<SurvivalBucket> {
    if !(days >= 0.0) {
        return Err(Error::InvalidData(format!("survival of {days} days")));
    }
    Ok(if days < SHORT_LIMIT_DAYS {
        SurvivalBucket::Short
    } else if days <= LONG_LIMIT_DAYS {
        SurvivalBucket::Mid
    } else {
        SurvivalBucket::Long
    })
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; NaN when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return f64::NAN;
    }
    sab / (saa * sbb).sqrt()
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{} vs {} values", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::InsufficientData("spearman of empty sequences".into()));
    }
    Ok(pearson(&average_ranks(a), &average_ranks(b)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalMetrics {
    pub accuracy: f64,
    pub mse: f64,
    pub median_se: f64,
    pub std_se: f64,
    pub spearman_r: f64,
}

/// Median with the midpoint of the two central values for even counts.
pub(crate) fn median(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

pub fn evaluate_survival(pred_days: &[f64], true_days: &[f64]) -> Result<SurvivalMetrics> {
    if pred_days.len() != true_days.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred_days.len(),
            true_days.len()
        )));
    }
    if pred_days.is_empty() {
        return Err(Error::InsufficientData("no survival predictions".into()));
    }
    let mut hits = 0usize;
    for (&p, &t) in pred_days.iter().zip(true_days) {
        // Negative regressor output still belongs to the shortest bucket.
        if bucketize(p.max(0.0))? == bucketize(t)? {
            hits += 1;
        }
    }
    let se: Vec<f64> = pred_days.iter().zip(true_days).map(|(p, t)| (p - t) * (p - t)).collect();
    let (mse, std_se) = mean_std(&se);
    Ok(SurvivalMetrics {
        accuracy: hits as f64 / se.len() as f64,
        mse,
        median_se: median(&se),
        std_se,
        spearman_r: spearman(pred_days, true_days)?,
    })
}
