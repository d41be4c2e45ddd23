use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::postprocess::BinaryMask;

/// Geometric descriptors of a binary mask in physical units.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ShapeFeatures {
    pub volume_mm3: f64,
    pub surface_area_mm2: f64,
    pub surface_to_volume: f64,
    pub sphericity: f64,
    pub spherical_disproportion: f64,
    pub compactness1: f64,
    pub max_3d_diameter: f64,
    pub max_2d_axial: f64,
    pub max_2d_coronal: f64,
    pub max_2d_sagittal: f64,
    pub major_axis: f64,
    pub minor_axis: f64,
    pub least_axis: f64,
    pub elongation: f64,
    pub flatness: f64,
    pub compactness2: f64,
    /// Set when the largest principal variance is zero, so elongation and
    /// flatness are reported as 0.
    pub degenerate: bool,
}

impl ShapeFeatures {
    /// Column names; the volume column is prefixed to stay distinct from the
    /// first-order masked volume.
    pub const NAMES: [&'static str; 16] = [
        "shape_volume_mm3",
        "surface_area_mm2",
        "surface_to_volume",
        "sphericity",
        "spherical_disproportion",
        "compactness1",
        "max_3d_diameter",
        "max_2d_axial",
        "max_2d_coronal",
        "max_2d_sagittal",
        "major_axis",
        "minor_axis",
        "least_axis",
        "elongation",
        "flatness",
        "compactness2",
    ];

    pub fn to_array(&self) -> [f64; 16] {
        [
            self.volume_mm3,
            self.surface_area_mm2,
            self.surface_to_volume,
            self.sphericity,
            self.spherical_disproportion,
            self.compactness1,
            self.max_3d_diameter,
            self.max_2d_axial,
            self.max_2d_coronal,
            self.max_2d_sagittal,
            self.major_axis,
            self.minor_axis,
            self.least_axis,
            self.elongation,
            self.flatness,
            self.compactness2,
        ]
    }
}

/// Area of all voxel faces that border background or the volume edge.
pub fn exposed_surface_area(mask: &BinaryMask) -> f64 {
    let [nx, ny, nz] = mask.dims();
    let s = mask.spacing().map(f64::from);
    // Face normal along x has area sy*sz, etc.
    let face = [s[1] * s[2], s[0] * s[2], s[0] * s[1]];
    let mut counts = [0usize; 3];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !mask.get(x, y, z) {
                    continue;
                }
                let c = [x, y, z];
                let n = [nx, ny, nz];
                for axis in 0..3 {
                    for forward in [false, true] {
                        let exposed = if forward {
                            c[axis] + 1 == n[axis] || {
                                let mut q = c;
                                q[axis] += 1;
                                !mask.get(q[0], q[1], q[2])
                            }
                        } else {
                            c[axis] == 0 || {
                                let mut q = c;
                                q[axis] -= 1;
                                !mask.get(q[0], q[1], q[2])
                            }
                        };
                        if exposed {
                            counts[axis] += 1;
                        }
                    }
                }
            }
        }
    }
    (0..3).map(|a| counts[a] as f64 * face[a]).sum()
}

/// Foreground voxels with at least one face exposed, as index triples.
fn boundary_voxels(mask: &BinaryMask) -> Vec<[usize; 3]> {
    let [nx, ny, nz] = mask.dims();
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !mask.get(x, y, z) {
                    continue;
                }
                let edge = x == 0 || y == 0 || z == 0 || x + 1 == nx || y + 1 == ny || z + 1 == nz;
                if edge
                    || !mask.get(x - 1, y, z)
                    || !mask.get(x + 1, y, z)
                    || !mask.get(x, y - 1, z)
                    || !mask.get(x, y + 1, z)
                    || !mask.get(x, y, z - 1)
                    || !mask.get(x, y, z + 1)
                {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

/// Largest center-to-center distance, from integer index deltas so the
/// result is exactly translation invariant.
fn max_pairwise(points: &[[usize; 3]], spacing: [f64; 3]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let mut d = 0.0;
            for k in 0..3 {
                let delta = (a[k] as f64 - b[k] as f64) * spacing[k];
                d += delta * delta;
            }
            best = best.max(d);
        }
    }
    best.sqrt()
}

/// Largest in-plane diameter over all slices perpendicular to `axis`.
fn max_planar(boundary: &[[usize; 3]], spacing: [f64; 3], axis: usize, n_slices: usize) -> f64 {
    let mut per_slice: Vec<Vec<[usize; 3]>> = vec![Vec::new(); n_slices];
    for v in boundary {
        per_slice[v[axis]].push(*v);
    }
    per_slice.iter().map(|pts| max_pairwise(pts, spacing)).fold(0.0, f64::max)
}

/// Eigenvalues of the population covariance of voxel-center coordinates,
/// descending and clamped at zero.
pub fn principal_variances(mask: &BinaryMask) -> [f64; 3] {
    let [nx, ny, nz] = mask.dims();
    let s = mask.spacing().map(f64::from);
    let mut lo = [usize::MAX; 3];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if mask.get(x, y, z) {
                    lo = [lo[0].min(x), lo[1].min(y), lo[2].min(z)];
                }
            }
        }
    }
    let mut pts = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if mask.get(x, y, z) {
                    pts.push([
                        (x - lo[0]) as f64 * s[0],
                        (y - lo[1]) as f64 * s[1],
                        (z - lo[2]) as f64 * s[2],
                    ]);
                }
            }
        }
    }
    let n = pts.len() as f64;
    let mut mean = [0.0; 3];
    for p in &pts {
        for a in 0..3 {
            mean[a] += p[a];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = Matrix3::<f64>::zeros();
    for p in &pts {
        for i in 0..3 {
            for j in 0..3 {
                cov[(i, j)] += (p[i] - mean[i]) * (p[j] - mean[j]);
            }
        }
    }
    cov /= n;
    let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    [ev[0], ev[1], ev[2]]
}

pub fn shape_features(mask: &BinaryMask) -> Result<ShapeFeatures> {
    let count = mask.count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let [nx, ny, nz] = mask.dims();
    let s = mask.spacing().map(f64::from);
    let v = count as f64 * s[0] * s[1] * s[2];
    let a = exposed_surface_area(mask);
    let sphericity = PI.cbrt() * (6.0 * v).powf(2.0 / 3.0) / a;

    let boundary = boundary_voxels(mask);

    let lambda = principal_variances(mask);
    let degenerate = lambda[0] == 0.0;
    let (elongation, flatness) = if degenerate {
        (0.0, 0.0)
    } else {
        ((lambda[1] / lambda[0]).sqrt(), (lambda[2] / lambda[0]).sqrt())
    };

    Ok(ShapeFeatures {
        volume_mm3: v,
        surface_area_mm2: a,
        surface_to_volume: a / v,
        sphericity,
        spherical_disproportion: 1.0 / sphericity,
        compactness1: v / (PI.sqrt() * a.powf(1.5)),
        max_3d_diameter: max_pairwise(&boundary, s),
        max_2d_axial: max_planar(&boundary, s, 2, nz),
        max_2d_coronal: max_planar(&boundary, s, 1, ny),
        max_2d_sagittal: max_planar(&boundary, s, 0, nx),
        major_axis: 4.0 * lambda[0].sqrt(),
        minor_axis: 4.0 * lambda[1].sqrt(),
        least_axis: 4.0 * lambda[2].sqrt(),
        elongation,
        flatness,
        compactness2: 36.0 * PI * v * v / (a * a * a),
        degenerate,
    })
}
