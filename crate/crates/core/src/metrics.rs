//! Dice overlap over the whole-tumor, tumor-core and active-tumor regions,
//! and cohort aggregation.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::{mean_std, median};
use crate::volume_io::SegmentationVolume;

pub use crate::survival::spearman;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// Labels {1, 2, 4}.
    Whole,
    /// Labels {1, 4}.
    Core,
    /// Label 4.
    Active,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Whole, Region::Core, Region::Active];

    pub fn contains(self, label: u8) -> bool {
        match self {
            Self::Whole => label != 0,
            Self::Core => label == 1 || label == 4,
            Self::Active => label == 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Whole => "whole",
            Self::Core => "core",
            Self::Active => "active",
        }
    }
}

/// `2|P∩T| / (|P|+|T|)` over the region's voxels; 1.0 when both are empty.
pub fn dice(pred: &SegmentationVolume, truth: &SegmentationVolume, region: Region) -> Result<f64> {
    if pred.dims() != truth.dims() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs truth {:?}",
            pred.dims(),
            truth.dims()
        )));
    }
    Ok(dice_labels(pred.labels(), truth.labels(), region))
}

pub(crate) fn dice_labels(pred: &[u8], truth: &[u8], region: Region) -> f64 {
    let (mut inter, mut p, mut t) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.iter().zip(truth) {
        let (ia, ib) = (region.contains(a), region.contains(b));
        p += ia as usize;
        t += ib as usize;
        inter += (ia && ib) as usize;
    }
    if p + t == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (p + t) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiceReport {
    pub whole: f64,
    pub core: f64,
    pub active: f64,
}

impl DiceReport {
    pub fn get(&self, region: Region) -> f64 {
        match region {
            Region::Whole => self.whole,
            Region::Core => self.core,
            Region::Active => self.active,
        }
    }
}

pub fn dice_report(pred: &SegmentationVolume, truth: &SegmentationVolume) -> Result<DiceReport> {
    Ok(DiceReport {
        whole: dice(pred, truth, Region::Whole)?,
        core: dice(pred, truth, Region::Core)?,
        active: dice(pred, truth, Region::Active)?,
    })
}

/// How cohort statistics treat regions absent from both prediction and truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmptyPolicy {
    /// Score them 1.0 like any other Dice value.
    #[default]
    One,
    /// Leave them out of the cohort statistics.
    ExcludeNan,
}

impl FromStr for EmptyPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(Self::One),
            "exclude-nan" | "nan" => Ok(Self::ExcludeNan),
            other => Err(Error::Config(format!("empty policy {other:?}; expected one or exclude-nan"))),
        }
    }
}

/// Per-region Dice under an [`EmptyPolicy`]; both-empty regions become NaN
/// with `ExcludeNan`.
pub fn dice_report_with(pred: &SegmentationVolume, truth: &SegmentationVolume, policy: EmptyPolicy) -> Result<DiceReport> {
    let mut r = dice_report(pred, truth)?;
    if policy == EmptyPolicy::ExcludeNan {
        for region in Region::ALL {
            let absent = !pred.labels().iter().chain(truth.labels()).any(|&l| region.contains(l));
            if absent {
                match region {
                    Region::Whole => r.whole = f64::NAN,
                    Region::Core => r.core = f64::NAN,
                    Region::Active => r.active = f64::NAN,
                }
            }
        }
    }
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub median: f64,
    /// Number of values that entered the statistics.
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub whole: SummaryStats,
    pub core: SummaryStats,
    pub active: SummaryStats,
}

impl CohortSummary {
    pub fn get(&self, region: Region) -> SummaryStats {
        match region {
            Region::Whole => self.whole,
            Region::Core => self.core,
            Region::Active => self.active,
        }
    }
}

/// Mean, std and median of a sample; NaN entries are skipped.
pub fn summary_stats(values: &[f64]) -> Result<SummaryStats> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return Err(Error::InsufficientData("no values to summarize".into()));
    }
    // Sorting first makes the sums independent of cohort order.
    v.sort_by(f64::total_cmp);
    let (mean, std) = mean_std(&v);
    Ok(SummaryStats {
        mean,
        std,
        median: median(&v),
        n: v.len(),
    })
}

pub fn cohort_summary(reports: &[DiceReport]) -> Result<CohortSummary> {
    if reports.is_empty() {
        return Err(Error::InsufficientData("empty cohort".into()));
    }
    let col = |r: Region| summary_stats(&reports.iter().map(|d| d.get(r)).collect::<Vec<_>>());
    Ok(CohortSummary {
        whole: col(Region::Whole)?,
        core: col(Region::Core)?,
        active: col(Region::Active)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SP: [f32; 3] = [1.0, 1.0, 1.0];

    fn seg(labels: Vec<u8>) -> SegmentationVolume {
        let n = labels.len();
        SegmentationVolume::new([n, 1, 1], SP, labels).unwrap()
    }

    fn report(v: f64) -> DiceReport {
        DiceReport {
            whole: v,
            core: v,
            active: v,
        }
    }

    #[test]
    fn identical_is_one() {
        let a = seg(vec![0, 1, 2, 4, 4]);
        for r in Region::ALL {
            assert_eq!(dice(&a, &a, r).unwrap(), 1.0);
        }
    }

    #[test]
    fn disjoint_is_zero() {
        let a = seg(vec![2, 2, 0, 0]);
        let b = seg(vec![0, 0, 2, 2]);
        assert_eq!(dice(&a, &b, Region::Whole).unwrap(), 0.0);
    }

    #[test]
    fn half_overlap() {
        let a = seg((0..150).map(|i| (i < 100) as u8).collect());
        let b = seg((0..150).map(|i| (i >= 50) as u8).collect());
        assert_eq!(dice(&a, &b, Region::Whole).unwrap(), 0.5);
    }

    #[test]
    fn both_empty_conventions() {
        let a = seg(vec![0, 2, 2]);
        assert_eq!(dice(&a, &a, Region::Active).unwrap(), 1.0);
        let r = dice_report_with(&a, &a, EmptyPolicy::ExcludeNan).unwrap();
        assert!(r.active.is_nan() && r.core.is_nan());
        assert_eq!(r.whole, 1.0);
    }

    #[test]
    fn core_ignores_edema() {
        let truth = seg(vec![1, 4, 2, 2, 0]);
        let pred = seg(vec![1, 4, 0, 0, 0]);
        assert_eq!(dice(&pred, &truth, Region::Core).unwrap(), 1.0);
        assert!(dice(&pred, &truth, Region::Whole).unwrap() < 1.0);
    }

    #[test]
    fn dims_mismatch() {
        assert!(matches!(dice(&seg(vec![0]), &seg(vec![0, 0]), Region::Whole), Err(Error::Shape(_))));
    }

    #[test]
    fn single_report_summary() {
        let s = cohort_summary(&[report(0.7)]).unwrap();
        assert_eq!((s.whole.mean, s.whole.median, s.whole.std), (0.7, 0.7, 0.0));
    }

    #[test]
    fn two_value_summary() {
        let s = cohort_summary(&[report(0.8), report(0.9)]).unwrap();
        assert!((s.core.mean - 0.85).abs() < 1e-12);
        assert!((s.core.median - 0.85).abs() < 1e-12);
        assert!((s.core.std - 0.05).abs() < 1e-12);
    }

    #[test]
    fn empty_cohort() {
        assert!(matches!(cohort_summary(&[]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn nan_entries_excluded() {
        let s = cohort_summary(&[report(0.5), report(f64::NAN), report(1.0)]).unwrap();
        assert_eq!(s.whole.n, 2);
        assert_eq!(s.whole.mean, 0.75);
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("exclude-nan".parse::<EmptyPolicy>().unwrap(), EmptyPolicy::ExcludeNan);
        assert!("zero".parse::<EmptyPolicy>().is_err());
    }

    fn arb_pair() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
        (1usize..60).prop_flat_map(|n| {
            let l = prop::sample::select(vec![0u8, 1, 2, 4]);
            (proptest::collection::vec(l.clone(), n), proptest::collection::vec(l, n))
        })
    }

    proptest! {
        #[test]
        fn symmetric((a, b) in arb_pair()) {
            for r in Region::ALL {
                prop_assert_eq!(dice(&seg(a.clone()), &seg(b.clone()), r).unwrap(), dice(&seg(b.clone()), &seg(a.clone()), r).unwrap());
            }
        }

        #[test]
        fn adding_true_positive_never_hurts((a, b) in arb_pair(), pick in any::<prop::sample::Index>()) {
            let idx: Vec<usize> = (0..b.len()).filter(|&i| b[i] != 0 && a[i] == 0).collect();
            prop_assume!(!idx.is_empty());
            let i = idx[pick.index(idx.len())];
            let mut a2 = a.clone();
            a2[i] = b[i];
            let before = dice(&seg(a), &seg(b.clone()), Region::Whole).unwrap();
            let after = dice(&seg(a2), &seg(b), Region::Whole).unwrap();
            prop_assert!(after >= before);
        }

        #[test]
        fn scores_in_unit_interval((a, b) in arb_pair()) {
            let r = dice_report(&seg(a), &seg(b)).unwrap();
            for region in Region::ALL {
                prop_assert!((0.0..=1.0).contains(&r.get(region)));
            }
        }

        #[test]
        fn summary_permutation_invariant(vals in proptest::collection::vec(0.0f64..1.0, 1..30), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let reports: Vec<DiceReport> = vals.iter().map(|&v| report(v)).collect();
            let mut shuffled = reports.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(cohort_summary(&reports).unwrap(), cohort_summary(&shuffled).unwrap());
        }
    }
}
