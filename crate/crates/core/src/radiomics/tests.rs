use super::*;
use crate::postprocess::{binarize_masks, BinaryMask};
use crate::volume_io::{Modality, SegmentationVolume, Spacing, Volume};
use proptest::prelude::*;
use std::collections::BTreeMap;

const SP: Spacing = [1.0, 1.0, 1.0];

fn close(a: f64, b: f64, rel: f64) -> bool {
    let diff = (a - b).abs();
    diff <= rel * a.abs().max(b.abs()) || diff < 1e-12
}

fn line_volume(values: &[f32]) -> (Volume, BinaryMask) {
    let n = values.len();
    let v = Volume::isotropic([n, 1, 1], values.to_vec(), Modality::T1c).unwrap();
    (v, BinaryMask::from_fn([n, 1, 1], SP, |_, _, _| true))
}

#[test]
fn constant_set() {
    let (v, m) = line_volume(&[2.0; 4]);
    let f = first_order_features(&v, &m, 25.0).unwrap();
    assert_eq!((f.mean, f.std, f.entropy, f.uniformity), (2.0, 0.0, 0.0, 1.0));
    assert!(f.degenerate);
    assert_eq!((f.skewness, f.kurtosis), (0.0, 0.0));
}

#[test]
fn one_value_per_bin() {
    let (v, m) = line_volume(&[1.0, 2.0, 3.0, 4.0]);
    let f = first_order_features(&v, &m, 1.0).unwrap();
    assert!((f.entropy - 2.0).abs() < 1e-12);
    assert!((f.uniformity - 0.25).abs() < 1e-12);
}

#[test]
fn small_set_statistics() {
    let (v, m) = line_volume(&[1.0, 2.0, 3.0, 4.0]);
    let f = first_order_features(&v, &m, 25.0).unwrap();
    assert!((f.iqr - 1.5).abs() < 1e-12);
    assert_eq!(f.range, 3.0);
    assert!((f.mad - 1.0).abs() < 1e-12);
    assert!((f.rms - 7.5f64.sqrt()).abs() < 1e-12);
    assert_eq!(f.volume_mm3, 4.0);
    assert_eq!(f.total_energy, 30.0);
}

#[test]
fn single_voxel_first_order_is_degenerate() {
    let (v, m) = line_volume(&[5.0]);
    let f = first_order_features(&v, &m, 25.0).unwrap();
    assert!(f.degenerate);
    assert_eq!(f.median, 5.0);
}

#[test]
fn empty_mask_rejected() {
    let (v, _) = line_volume(&[1.0, 2.0]);
    let m = BinaryMask::from_fn([2, 1, 1], SP, |_, _, _| false);
    assert!(matches!(first_order_features(&v, &m, 25.0), Err(Error::EmptyMask)));
    assert!(matches!(shape_features(&m), Err(Error::EmptyMask)));
}

#[test]
fn single_voxel_shape() {
    let m = BinaryMask::from_fn([1, 1, 1], SP, |_, _, _| true);
    let s = shape_features(&m).unwrap();
    assert_eq!(s.volume_mm3, 1.0);
    assert_eq!(s.surface_area_mm2, 6.0);
    let expected = std::f64::consts::PI.cbrt() * 6f64.powf(2.0 / 3.0) / 6.0;
    assert!((s.sphericity - expected).abs() < 1e-15);
}

#[test]
fn cube_sphericity_is_scale_free() {
    let target = (std::f64::consts::PI / 6.0).cbrt();
    for side in [1usize, 3, 7] {
        let n = side + 2;
        let m = BinaryMask::from_fn([n, n, n], SP, |x, y, z| {
            (1..=side).contains(&x) && (1..=side).contains(&y) && (1..=side).contains(&z)
        });
        let s = shape_features(&m).unwrap();
        assert!((s.sphericity - target).abs() < 1e-12, "side {side}: {}", s.sphericity);
    }
}

#[test]
fn rod() {
    let m = BinaryMask::from_fn([1, 1, 10], SP, |_, _, _| true);
    let s = shape_features(&m).unwrap();
    assert_eq!(s.max_3d_diameter, 9.0);
    assert_eq!(s.elongation, s.flatness);
    assert_eq!(s.max_2d_coronal, 9.0);
    assert_eq!(s.max_2d_sagittal, 9.0);
    assert_eq!(s.max_2d_axial, 0.0);
    // Variance of 0..=9 is 8.25.
    assert!((s.major_axis - 4.0 * 8.25f64.sqrt()).abs() < 1e-9);
}

#[test]
fn anisotropic_spacing_scales_geometry() {
    let sp: Spacing = [2.0, 1.0, 0.5];
    let m = BinaryMask::from_fn([3, 1, 1], sp, |_, _, _| true);
    let s = shape_features(&m).unwrap();
    assert_eq!(s.volume_mm3, 3.0);
    // Faces: 2 along x (1*0.5), 6 along y (2*0.5), 6 along z (2*1).
    assert_eq!(s.surface_area_mm2, 2.0 * 0.5 + 6.0 * 1.0 + 6.0 * 2.0);
    assert_eq!(s.max_3d_diameter, 4.0);
}

fn ball(r: usize) -> BinaryMask {
    let n = 2 * r + 3;
    let c = (n / 2) as f64;
    BinaryMask::from_fn([n, n, n], SP, |x, y, z| {
        let d = (x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2);
        d <= (r * r) as f64
    })
}

#[test]
fn ball_sphericity_is_stable() {
    let s8 = shape_features(&ball(8)).unwrap().sphericity;
    let s12 = shape_features(&ball(12)).unwrap().sphericity;
    assert!(s8 < 1.0 && s12 < 1.0);
    assert!((s8 - s12).abs() / s12 < 0.10, "{s8} vs {s12}");
    let s = shape_features(&ball(8)).unwrap();
    assert!((s.elongation - 1.0).abs() < 1e-9);
}

#[test]
fn names_and_row_length() {
    let names = feature_names();
    assert_eq!(names.len(), 141);
    assert_eq!(names[0], "whole.volume_mm3");
    assert_eq!(names[19], "whole.shape_volume_mm3");
    let unique: std::collections::HashSet<_> = names.iter().collect();
    assert_eq!(unique.len(), 141);
    assert_eq!(names[35], "edema.volume_mm3");
    assert_eq!(names[140], "age");
}

fn study_with(labels: Vec<u8>, dims: [usize; 3]) -> (Study, MaskSet) {
    let n = labels.len();
    let mut vols = BTreeMap::new();
    for m in Modality::ALL {
        let data = (0..n).map(|i| 100.0 + (i * 7 % 13) as f32).collect();
        vols.insert(m, Volume::isotropic(dims, data, m).unwrap());
    }
    let seg = SegmentationVolume::new(dims, SP, labels).unwrap();
    let masks = binarize_masks(&seg).unwrap();
    (Study::new("P", vols, Some(seg), Some(60.0), None).unwrap(), masks)
}

#[test]
fn empty_necrosis_gives_zero_block() {
    let labels: Vec<u8> = (0..27).map(|i| if i < 9 { 2 } else if i < 18 { 4 } else { 0 }).collect();
    let (study, masks) = study_with(labels, [3, 3, 3]);
    let row = extract_feature_row(&study, &masks, 60.0, &RadiomicsConfig::default()).unwrap();
    assert_eq!(row.values.len(), ROW_LEN);
    assert_eq!(row.missing, vec!["necrosis"]);
    assert!(row.values[2 * FEATURES_PER_MASK..3 * FEATURES_PER_MASK].iter().all(|&v| v == 0.0));
    assert_eq!(row.age(), 60.0);
    let again = extract_feature_row(&study, &masks, 60.0, &RadiomicsConfig::default()).unwrap();
    assert_eq!(row, again);
}

#[test]
fn empty_lesion_rejected() {
    let (study, masks) = study_with(vec![0; 8], [2, 2, 2]);
    assert!(matches!(
        extract_feature_row(&study, &masks, 1.0, &RadiomicsConfig::default()),
        Err(Error::EmptyLesion)
    ));
}

/// Straightforward recomputation used as the oracle.
fn naive(xs: &[f64], bw: f64) -> [f64; 19] {
    let n = xs.len() as f64;
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |q: f64| {
        let h = (s.len() - 1) as f64 * q;
        let i = h as usize;
        if i + 1 < s.len() {
            s[i] + (h - i as f64) * (s[i + 1] - s[i])
        } else {
            s[i]
        }
    };
    let mean = s.iter().sum::<f64>() / n;
    let central = |k: i32| s.iter().map(|x| (x - mean).powi(k)).sum::<f64>() / n;
    let (m2, m3, m4) = (central(2), central(3), central(4));
    let energy = s.iter().map(|x| x * x).sum::<f64>();
    let mut bins = std::collections::HashMap::new();
    for x in &s {
        *bins.entry(((x - s[0]) / bw).floor() as i64).or_insert(0usize) += 1;
    }
    let mut ent = 0.0;
    let mut uni = 0.0;
    for c in bins.values() {
        let p = *c as f64 / n;
        ent += -p * p.log2();
        uni += p * p;
    }
    let mad_of = |v: &[f64]| {
        if v.is_empty() {
            return 0.0;
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).abs()).sum::<f64>() / v.len() as f64
    };
    let (p10, p90) = (pct(0.1), pct(0.9));
    let inner: Vec<f64> = s.iter().copied().filter(|x| *x >= p10 && *x <= p90).collect();
    let (sk, ku) = if m2 == 0.0 { (0.0, 0.0) } else { (m3 / m2.powf(1.5), m4 / (m2 * m2)) };
    [
        n,
        energy,
        ent,
        s[0],
        p10,
        p90,
        s[s.len() - 1],
        mean,
        pct(0.5),
        pct(0.75) - pct(0.25),
        s[s.len() - 1] - s[0],
        mad_of(&s),
        mad_of(&inner),
        (energy / n).sqrt(),
        m2.sqrt(),
        sk,
        ku,
        m2,
        uni,
    ]
}

fn arb_masked() -> impl Strategy<Value = (Volume, BinaryMask)> {
    (1usize..=6, 1usize..=6, 1usize..=4).prop_flat_map(|(x, y, z)| {
        let n = x * y * z;
        (
            proptest::collection::vec(0.0f32..1000.0, n),
            proptest::collection::vec(any::<bool>(), n),
            0..n,
        )
            .prop_map(move |(vals, mut bits, forced)| {
                bits[forced] = true;
                (
                    Volume::isotropic([x, y, z], vals, Modality::T1c).unwrap(),
                    BinaryMask::new([x, y, z], SP, bits).unwrap(),
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn first_order_matches_naive((vol, mask) in arb_masked(), bw in 1.0f64..100.0) {
        let f = first_order_features(&vol, &mask, bw).unwrap().to_array();
        let xs = masked_values(&vol, &mask).unwrap();
        let o = naive(&xs, bw);
        for (i, (a, b)) in f.iter().zip(o.iter()).enumerate() {
            prop_assert!(close(*a, *b, 1e-9), "{}: {a} vs {b}", FirstOrderFeatures::NAMES[i]);
        }
    }

    #[test]
    fn first_order_invariants((vol, mask) in arb_masked()) {
        let f = first_order_features(&vol, &mask, 25.0).unwrap();
        prop_assert!(f.minimum <= f.p10 && f.p10 <= f.median && f.median <= f.p90 && f.p90 <= f.maximum);
        prop_assert!(close(f.variance, f.std * f.std, 1e-6));
        prop_assert!(f.uniformity > 0.0 && f.uniformity <= 1.0);
    }

    #[test]
    fn intensity_shift((vol, mask) in arb_masked(), c in -50.0f32..50.0) {
        // Shift in f64 space to avoid f32 rounding of the stored values.
        let xs = masked_values(&vol, &mask).unwrap();
        let shifted: Vec<f64> = xs.iter().map(|x| x + c as f64).collect();
        let a = first_order_from_values(&xs, 1.0, 25.0).unwrap();
        let b = first_order_from_values(&shifted, 1.0, 25.0).unwrap();
        prop_assert!((b.mean - a.mean - c as f64).abs() < 1e-9);
        for (x, y) in [(a.std, b.std), (a.variance, b.variance), (a.mad, b.mad), (a.iqr, b.iqr), (a.range, b.range)] {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
        if !a.degenerate {
            prop_assert!((a.skewness - b.skewness).abs() < 1e-6);
            prop_assert!((a.kurtosis - b.kurtosis).abs() < 1e-6);
        }
    }

    #[test]
    fn translation_invariance(
        bits in proptest::collection::vec(any::<bool>(), 4 * 4 * 4),
        vals in proptest::collection::vec(0.0f32..500.0, 4 * 4 * 4),
        shift in (0usize..3, 0usize..3, 0usize..3),
    ) {
        prop_assume!(bits.iter().any(|&b| b));
        let sp: Spacing = [1.0, 0.75, 2.5];
        let place = |dx: usize, dy: usize, dz: usize| {
            let dims = [9, 9, 9];
            let inside = |x: usize, y: usize, z: usize| {
                x > dx && y > dy && z > dz && x < 5 + dx && y < 5 + dy && z < 5 + dz
            };
            let idx = |x: usize, y: usize, z: usize| ((z - 1 - dz) * 4 + (y - 1 - dy)) * 4 + (x - 1 - dx);
            let mask = BinaryMask::from_fn(dims, sp, |x, y, z| inside(x, y, z) && bits[idx(x, y, z)]);
            let mut data = vec![0f32; 729];
            for z in 0..9 { for y in 0..9 { for x in 0..9 {
                if inside(x, y, z) { data[(z * 9 + y) * 9 + x] = vals[idx(x, y, z)]; }
            }}}
            (Volume::new(dims, sp, data, Modality::T1c).unwrap(), mask)
        };
        let (v0, m0) = place(0, 0, 0);
        let (v1, m1) = place(shift.0, shift.1, shift.2);
        let a: Vec<f64> = first_order_features(&v0, &m0, 25.0).unwrap().to_array().into_iter()
            .chain(shape_features(&m0).unwrap().to_array()).collect();
        let b: Vec<f64> = first_order_features(&v1, &m1, 25.0).unwrap().to_array().into_iter()
            .chain(shape_features(&m1).unwrap().to_array()).collect();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn shape_invariants(bits in proptest::collection::vec(any::<bool>(), 5 * 5 * 5)) {
        prop_assume!(bits.iter().any(|&b| b));
        let m = BinaryMask::new([5, 5, 5], SP, bits).unwrap();
        let s = shape_features(&m).unwrap();
        prop_assert!(s.sphericity > 0.0 && s.sphericity <= 1.0);
        prop_assert!(close(s.spherical_disproportion, 1.0 / s.sphericity, 1e-6));
        prop_assert!(close(s.compactness2, s.sphericity.powi(3), 1e-6));
        prop_assert!(s.major_axis >= s.minor_axis && s.minor_axis >= s.least_axis && s.least_axis >= 0.0);
        if !s.degenerate {
            prop_assert!(s.elongation > 0.0 || s.minor_axis == 0.0);
            prop_assert!(s.elongation <= 1.0 + 1e-12 && s.flatness <= 1.0 + 1e-12);
        }
    }
}
