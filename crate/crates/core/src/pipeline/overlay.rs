//! Static label overlays on FLAIR slices, written as binary PPM.

use std::path::Path;

use crate::error::{Error, Result};
use crate::volume_io::{Modality, SegmentationVolume, Study, Volume};

pub const ALPHA: f64 = 0.5;

/// Overlay color of a label; background has none.
pub fn label_color(label: u8) -> Option<[u8; 3]> {
    match label {
        1 => Some([255, 0, 0]),
        2 => Some([0, 255, 0]),
        4 => Some([255, 255, 0]),
        _ => None,
    }
}

/// P6 image of axial slice `z`: FLAIR scaled to 0..255 over the slice's own
/// range, labels alpha-blended on top. Row 0 is y = 0.
pub fn overlay_ppm(flair: &Volume, seg: &SegmentationVolume, z: usize) -> Result<Vec<u8>> {
    let [nx, ny, nz] = flair.dims();
    if seg.dims() != flair.dims() {
        return Err(Error::Shape(format!(
            "segmentation {:?} vs image {:?}",
            seg.dims(),
            flair.dims()
        )));
    }
    if z >= nz {
        return Err(Error::Shape(format!("slice {z} out of range 0..{nz}")));
    }
    let plane = nx * ny;
    let img = &flair.data()[z * plane..(z + 1) * plane];
    let labels = &seg.labels()[z * plane..(z + 1) * plane];
    let lo = img.iter().copied().fold(f32::INFINITY, f32::min) as f64;
    let hi = img.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let mut out = format!("P6\n{nx} {ny}\n255\n").into_bytes();
    out.reserve(plane * 3);
    for (&v, &l) in img.iter().zip(labels) {
        let g = if hi > lo { (v as f64 - lo) / (hi - lo) * 255.0 } else { 0.0 };
        let px = match label_color(l) {
            Some(c) => c.map(|c| ((1.0 - ALPHA) * g + ALPHA * c as f64).round() as u8),
            None => [g.round() as u8; 3],
        };
        out.extend_from_slice(&px);
    }
    Ok(out)
}

pub fn render_overlay(study: &Study, seg: &SegmentationVolume, slice_index: usize, out: impl AsRef<Path>) -> Result<()> {
    let flair = study.volume(Modality::Flair)?;
    let bytes = overlay_ppm(flair, seg, slice_index)?;
    let out = out.as_ref();
    std::fs::write(out, bytes).map_err(|e| Error::io(out, e))
}
