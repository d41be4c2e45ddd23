//! Seeded synthetic studies: an elliptical brain with a layered lesion
//! (necrotic core, enhancing rim, edema) imaged in four modalities.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::volume_io::{write_study, Dims, Modality, SegmentationVolume, Spacing, Study, Volume};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub dims: Dims,
    pub spacing: Spacing,
    pub noise_sigma: f64,
    /// Edema radius in-plane, as a fraction of the smaller in-plane extent.
    pub lesion_radius: (f64, f64),
    /// Edema half-extent along z, in voxels.
    pub lesion_half_depth: (f64, f64),
    /// Per-study, per-modality intensity scale range.
    pub scale_range: (f64, f64),
    pub with_lesion: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            dims: [64, 64, 8],
            spacing: [1.0, 1.0, 1.0],
            noise_sigma: 5.0,
            lesion_radius: (0.14, 0.22),
            lesion_half_depth: (2.6, 3.4),
            scale_range: (0.8, 1.25),
            with_lesion: true,
        }
    }
}

/// Tissue means in `Modality::ALL` order.
const BRAIN: [f64; 4] = [300.0, 250.0, 400.0, 350.0];
const EDEMA: [f64; 4] = [600.0, 550.0, 330.0, 330.0];
const ENHANCING: [f64; 4] = [450.0, 400.0, 380.0, 800.0];
const NECROSIS: [f64; 4] = [350.0, 700.0, 150.0, 180.0];

fn tissue_mean(label: u8, m: usize) -> f64 {
    match label {
        1 => NECROSIS[m],
        2 => EDEMA[m],
        4 => ENHANCING[m],
        _ => BRAIN[m],
    }
}

/// One study; identical `(cfg, patient_id, seed)` give identical output.
pub fn synthetic_study(cfg: &SyntheticConfig, patient_id: &str, seed: u64) -> Result<Study> {
    let [nx, ny, nz] = cfg.dims;
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::Config(format!("synthetic dims {:?}", cfg.dims)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cx, cy, cz) = ((nx as f64 - 1.0) / 2.0, (ny as f64 - 1.0) / 2.0, (nz as f64 - 1.0) / 2.0);
    let (bx, by) = (0.45 * nx as f64, 0.45 * ny as f64);
    let bz = (0.5 * nz as f64).max(1.0) * 1.6;

    let short = nx.min(ny) as f64;
    let r_xy = short * rng.random_range(cfg.lesion_radius.0..=cfg.lesion_radius.1);
    let r_x = r_xy * rng.random_range(0.85..=1.15);
    let r_y = r_xy * rng.random_range(0.85..=1.15);
    let r_z = rng.random_range(cfg.lesion_half_depth.0..=cfg.lesion_half_depth.1);
    let room_x = (bx - r_x).max(0.0) * 0.35;
    let room_y = (by - r_y).max(0.0) * 0.35;
    let lx = cx + rng.random_range(-room_x..=room_x);
    let ly = cy + rng.random_range(-room_y..=room_y);
    let lz = cz + rng.random_range(-0.5..=0.5);
    let core = rng.random_range(0.3..=0.4);
    let rim = core + rng.random_range(0.2..=0.3);

    let n = nx * ny * nz;
    let mut brain = vec![false; n];
    let mut labels = vec![0u8; n];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = (z * ny + y) * nx + x;
                let (fx, fy, fz) = (x as f64, y as f64, z as f64);
                let db = ((fx - cx) / bx).powi(2) + ((fy - cy) / by).powi(2) + ((fz - cz) / bz).powi(2);
                brain[i] = db <= 1.0;
                if !brain[i] || !cfg.with_lesion {
                    continue;
                }
                let d = (((fx - lx) / r_x).powi(2) + ((fy - ly) / r_y).powi(2) + ((fz - lz) / r_z).powi(2)).sqrt();
                labels[i] = if d <= core {
                    1
                } else if d <= rim {
                    4
                } else if d <= 1.0 {
                    2
                } else {
                    0
                };
            }
        }
    }

    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let mut volumes = BTreeMap::new();
    for (mi, &m) in Modality::ALL.iter().enumerate() {
        let scale = rng.random_range(cfg.scale_range.0..=cfg.scale_range.1);
        let data = (0..n)
            .map(|i| {
                if !brain[i] {
                    return 0.0;
                }
                let v = scale * (tissue_mean(labels[i], mi) + noise.sample(&mut rng));
                v.max(1.0) as f32
            })
            .collect();
        volumes.insert(m, Volume::new(cfg.dims, cfg.spacing, data, m)?);
    }

    let age = rng.random_range(30.0..80.0_f64).round();
    let lesion_voxels = labels.iter().filter(|&&l| l != 0).count() as f64;
    let voxel_mm3 = cfg.spacing.iter().map(|&s| s as f64).product::<f64>();
    let jitter = Normal::new(0.0, 40.0).expect("valid sigma").sample(&mut rng);
    let survival = (1100.0 - 0.25 * lesion_voxels * voxel_mm3 - 6.0 * (age - 50.0) + jitter).max(30.0).round();

    let gt = SegmentationVolume::new(cfg.dims, cfg.spacing, labels)?;
    Study::new(patient_id, volumes, Some(gt), Some(age), Some(survival))
}

/// `n` studies named `SYN000`, `SYN001`, …, each seeded from `seed` and its index.
pub fn synthetic_cohort(cfg: &SyntheticConfig, n: usize, seed: u64) -> Result<Vec<Study>> {
    (0..n)
        .map(|i| {
            let s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64);
            synthetic_study(cfg, &format!("SYN{i:03}"), s)
        })
        .collect()
}

/// Writes a cohort as GPV1 volumes plus one `<id>.toml` manifest per study
/// into `dir`, returning the manifest paths.
pub fn write_synthetic_cohort(cfg: &SyntheticConfig, n: usize, seed: u64, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    synthetic_cohort(cfg, n, seed)?
        .iter()
        .map(|s| write_study(s, dir.as_ref(), ""))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let cfg = SyntheticConfig::default();
        let a = synthetic_study(&cfg, "A", 3).unwrap();
        let b = synthetic_study(&cfg, "A", 3).unwrap();
        assert_eq!(a.volumes, b.volumes);
        assert_eq!(a.ground_truth, b.ground_truth);
        assert_eq!(a.survival_days, b.survival_days);
    }

    #[test]
    fn lesion_has_all_three_labels() {
        let s = synthetic_study(&SyntheticConfig::default(), "A", 9).unwrap();
        let gt = s.ground_truth.unwrap();
        for l in [1u8, 2, 4] {
            assert!(gt.labels().contains(&l), "label {l} missing");
        }
        let slices = (0..8)
            .filter(|&z| gt.labels()[z * 64 * 64..(z + 1) * 64 * 64].iter().any(|&v| v != 0))
            .count();
        assert!((4..=8).contains(&slices), "{slices} lesion slices");
    }

    #[test]
    fn background_is_zero_and_brain_positive() {
        let s = synthetic_study(&SyntheticConfig::default(), "A", 1).unwrap();
        let v = s.volume(Modality::Flair).unwrap();
        assert_eq!(v.get(0, 0, 0), 0.0);
        assert!(v.get(32, 32, 4) > 0.0);
    }

    #[test]
    fn lesion_free_option() {
        let cfg = SyntheticConfig {
            with_lesion: false,
            ..Default::default()
        };
        let s = synthetic_study(&cfg, "A", 1).unwrap();
        assert_eq!(s.ground_truth.unwrap().foreground_count(), 0);
    }

    #[test]
    fn cohort_ids_unique() {
        let c = synthetic_cohort(&SyntheticConfig { dims: [8, 8, 2], ..Default::default() }, 3, 0).unwrap();
        let ids: Vec<_> = c.iter().map(|s| s.patient_id.as_str()).collect();
        assert_eq!(ids, ["SYN000", "SYN001", "SYN002"]);
    }
}
