use crate::error::{Error, Result};
use crate::postprocess::BinaryMask;
use crate::volume_io::Volume;

/// Intensity statistics of the image under a mask.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FirstOrderFeatures {
    pub volume_mm3: f64,
    pub total_energy: f64,
    pub entropy: f64,
    pub minimum: f64,
    pub p10: f64,
    pub p90: f64,
    pub maximum: f64,
    pub mean: f64,
    pub median: f64,
    pub iqr: f64,
    pub range: f64,
    pub mad: f64,
    pub robust_mad: f64,
    pub rms: f64,
    pub std: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub variance: f64,
    pub uniformity: f64,
    /// Set when the second central moment is zero, so skewness and kurtosis
    /// are reported as 0.
    pub degenerate: bool,
}

impl FirstOrderFeatures {
    pub const NAMES: [&'static str; 19] = [
        "volume_mm3",
        "total_energy",
        "entropy",
        "minimum",
        "p10",
        "p90",
        "maximum",
        "mean",
        "median",
        "iqr",
        "range",
        "mad",
        "robust_mad",
        "rms",
        "std",
        "skewness",
        "kurtosis",
        "variance",
        "uniformity",
    ];

    pub fn to_array(&self) -> [f64; 19] {
        [
            self.volume_mm3,
            self.total_energy,
            self.entropy,
            self.minimum,
            self.p10,
            self.p90,
            self.maximum,
            self.mean,
            self.median,
            self.iqr,
            self.range,
            self.mad,
            self.robust_mad,
            self.rms,
            self.std,
            self.skewness,
            self.kurtosis,
            self.variance,
            self.uniformity,
        ]
    }
}

/// Percentile of sorted data with linear interpolation between order
/// statistics (`q` in `[0, 1]`).
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean absolute deviation; 0 for an empty sample.
fn mean_abs_dev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).abs()).sum::<f64>() / xs.len() as f64
}

pub(crate) fn check_geometry(image: &Volume, mask: &BinaryMask) -> Result<()> {
    if image.dims() != mask.dims() {
        return Err(Error::Shape(format!(
            "image dims {:?} but mask dims {:?}",
            image.dims(),
            mask.dims()
        )));
    }
    Ok(())
}

/// Values of `image` where `mask` is set, in scan order.
pub fn masked_values(image: &Volume, mask: &BinaryMask) -> Result<Vec<f64>> {
    check_geometry(image, mask)?;
    Ok(image
        .data()
        .iter()
        .zip(mask.data())
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v as f64)
        .collect())
}

pub fn first_order_features(image: &Volume, mask: &BinaryMask, bin_width: f64) -> Result<FirstOrderFeatures> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::Config(format!("bin_width must be positive, got {bin_width}")));
    }
    let xs = masked_values(image, mask)?;
    if xs.is_empty() {
        return Err(Error::EmptyMask);
    }
    first_order_from_values(&xs, image.voxel_volume(), bin_width)
}

/// First-order features of an explicit sample.
pub fn first_order_from_values(xs: &[f64], voxel_volume: f64, bin_width: f64) -> Result<FirstOrderFeatures> {
    if xs.is_empty() {
        return Err(Error::EmptyMask);
    }
    let n = xs.len() as f64;
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let minimum = sorted[0];
    let maximum = sorted[sorted.len() - 1];
    let sum_sq: f64 = xs.iter().map(|x| x * x).sum();
    let mean = mean(xs);

    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let degenerate = m2 == 0.0;
    let (skewness, kurtosis) = if degenerate {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    };

    let n_bins = ((maximum - minimum) / bin_width).floor() as usize + 1;
    let mut counts = vec![0usize; n_bins];
    for &x in xs {
        let b = (((x - minimum) / bin_width).floor() as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    let (mut entropy, mut uniformity) = (0.0, 0.0);
    for &c in counts.iter().filter(|&&c| c > 0) {
        let p = c as f64 / n;
        entropy -= p * p.log2();
        uniformity += p * p;
    }

    let p10 = percentile_sorted(&sorted, 0.10);
    let p90 = percentile_sorted(&sorted, 0.90);
    let robust: Vec<f64> = sorted.iter().copied().filter(|&x| x >= p10 && x <= p90).collect();

    Ok(FirstOrderFeatures {
        volume_mm3: n * voxel_volume,
        total_energy: voxel_volume * sum_sq,
        entropy,
        minimum,
        p10,
        p90,
        maximum,
        mean,
        median: percentile_sorted(&sorted, 0.5),
        iqr: percentile_sorted(&sorted, 0.75) - percentile_sorted(&sorted, 0.25),
        range: maximum - minimum,
        mad: mean_abs_dev(xs),
        robust_mad: mean_abs_dev(&robust),
        rms: (sum_sq / n).sqrt(),
        std: m2.sqrt(),
        skewness,
        kurtosis,
        variance: m2,
        uniformity,
        degenerate,
    })
}
