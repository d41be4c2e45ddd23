//! GPV1 volume container, study manifests, and axial slice extraction.
//!
//! A GPV1 file is a 64-byte little-endian header followed by the raw `f32`
//! payload in x-fastest order:
//!
//! | bytes  | content                       |
//! |--------|-------------------------------|
//! | 0..4   | magic `GPV1`                  |
//! | 4..16  | `nx, ny, nz` as `u32`         |
//! | 16..28 | `sx, sy, sz` as `f32` (mm)    |
//! | 28     | modality code                 |
//! | 29..64 | reserved, zero                |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

pub const MAGIC: &[u8; 4] = b"GPV1";
pub const HEADER_LEN: usize = 64;
/// Modality code used for label volumes.
pub const LABEL_CODE: u8 = 4;

pub type Dims = [usize; 3];
pub type Spacing = [f32; 3];

/// MR sequence. The declaration order is the network's channel order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    Flair,
    T2,
    T1,
    T1c,
}

impl Modality {
    /// Channel order fed to the network.
    pub const ALL: [Modality; 4] = [Modality::Flair, Modality::T2, Modality::T1, Modality::T1c];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Manifest key and file-name tag.
    pub fn key(self) -> &'static str {
        match self {
            Modality::Flair => "flair",
            Modality::T2 => "t2",
            Modality::T1 => "t1",
            Modality::T1c => "t1c",
        }
    }
}

/// A single-modality scalar field.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    dims: Dims,
    spacing: Spacing,
    data: Vec<f32>,
    modality: Modality,
}

fn check_geometry(dims: Dims, spacing: Spacing, len: usize) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::Format(format!("zero-sized dims {dims:?}")));
    }
    if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(Error::Format(format!("non-positive spacing {spacing:?}")));
    }
    let n = dims[0] * dims[1] * dims[2];
    if len != n {
        return Err(Error::Shape(format!(
            "dims {dims:?} need {n} voxels, got {len}"
        )));
    }
    Ok(())
}

impl Volume {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<f32>, modality: Modality) -> Result<Self> {
        check_geometry(dims, spacing, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite value at voxel {i}")));
        }
        Ok(Self {
            dims,
            spacing,
            data,
            modality,
        })
    }

    /// Isotropic 1 mm volume.
    pub fn isotropic(dims: Dims, data: Vec<f32>, modality: Modality) -> Result<Self> {
        Self::new(dims, [1.0; 3], data, modality)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }
    pub fn spacing(&self) -> Spacing {
        self.spacing
    }
    pub fn modality(&self) -> Modality {
        self.modality
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }

    /// Same geometry and modality with new values.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        Self::new(self.dims, self.spacing, data, self.modality)
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().map(|&s| s as f64).product()
    }
}

/// Per-voxel tumor labels: 0 background, 1 necrosis, 2 edema, 4 enhancing.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationVolume {
    dims: Dims,
    spacing: Spacing,
    labels: Vec<u8>,
}

pub const VALID_LABELS: [u8; 4] = [0, 1, 2, 4];

pub(crate) fn check_label(v: u8) -> Result<()> {
    if VALID_LABELS.contains(&v) {
        Ok(())
    } else {
        Err(Error::Label(format!("label {v} not in {{0,1,2,4}}")))
    }
}

impl SegmentationVolume {
    pub fn new(dims: Dims, spacing: Spacing, labels: Vec<u8>) -> Result<Self> {
        check_geometry(dims, spacing, labels.len())?;
        for &l in &labels {
            check_label(l)?;
        }
        Ok(Self {
            dims,
            spacing,
            labels,
        })
    }

    pub fn zeros(dims: Dims, spacing: Spacing) -> Result<Self> {
        Self::new(dims, spacing, vec![0; dims.iter().product()])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }
    pub fn spacing(&self) -> Spacing {
        self.spacing
    }
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.labels[self.index(x, y, z)]
    }

    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Self> {
        Self::new(self.dims, self.spacing, labels)
    }

    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }
}

fn encode(dims: Dims, spacing: Spacing, code: u8, payload: impl Iterator<Item = f32>) -> Vec<u8> {
    let n: usize = dims.iter().product();
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * n);
    buf.extend_from_slice(MAGIC);
    for d in dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for s in spacing {
        buf.extend_from_slice(&s.to_le_bytes());
    }
    buf.push(code);
    buf.resize(HEADER_LEN, 0);
    for v in payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

struct Decoded {
    dims: Dims,
    spacing: Spacing,
    code: u8,
    payload: Vec<f32>,
}

fn decode(bytes: &[u8]) -> Result<Decoded> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing GPV1 magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::CorruptFile(format!(
            "header truncated at {} bytes",
            bytes.len()
        )));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let dims = [u32_at(4), u32_at(8), u32_at(12)];
    let spacing = [f32_at(16), f32_at(20), f32_at(24)];
    let code = bytes[28];
    if bytes[29..HEADER_LEN].iter().any(|&b| b != 0) {
        return Err(Error::Format("reserved header bytes are not zero".into()));
    }
    if dims.contains(&0) {
        return Err(Error::Format(format!("zero-sized dims {dims:?}")));
    }
    let n = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != n * 4 {
        return Err(Error::CorruptFile(format!(
            "header declares {n} voxels ({} bytes) but payload has {} bytes",
            n * 4,
            body.len()
        )));
    }
    let payload = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Decoded {
        dims,
        spacing,
        code,
        payload,
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let d = decode(&read_bytes(path.as_ref())?)?;
    let modality = Modality::from_code(d.code)
        .ok_or_else(|| Error::Format(format!("unknown modality code {}", d.code)))?;
    Volume::new(d.dims, d.spacing, d.payload, modality)
}

pub fn write_volume(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    // Volumes built through `new` are already validated; re-check since the
    // file must never carry NaN or empty dims.
    check_geometry(volume.dims, volume.spacing, volume.data.len())?;
    if volume.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("refusing to write non-finite voxel".into()));
    }
    let bytes = encode(
        volume.dims,
        volume.spacing,
        volume.modality.code(),
        volume.data.iter().copied(),
    );
    write_bytes(path.as_ref(), &bytes)
}

pub fn read_segmentation(path: impl AsRef<Path>) -> Result<SegmentationVolume> {
    let d = decode(&read_bytes(path.as_ref())?)?;
    if d.code != LABEL_CODE {
        return Err(Error::Format(format!(
            "expected label volume (code {LABEL_CODE}), found code {}",
            d.code
        )));
    }
    let mut labels = Vec::with_capacity(d.payload.len());
    for v in d.payload {
        if !v.is_finite() {
            return Err(Error::InvalidData("non-finite label".into()));
        }
        if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
            return Err(Error::Label(format!("label value {v} is not an integer label")));
        }
        labels.push(v as u8);
    }
    SegmentationVolume::new(d.dims, d.spacing, labels)
}

pub fn write_segmentation(seg: &SegmentationVolume, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(
        seg.dims,
        seg.spacing,
        LABEL_CODE,
        seg.labels.iter().map(|&l| l as f32),
    );
    write_bytes(path.as_ref(), &bytes)
}

/// Four co-registered modalities plus optional labels and clinical data.
#[derive(Clone, Debug)]
pub struct Study {
    pub patient_id: String,
    pub volumes: BTreeMap<Modality, Volume>,
    pub ground_truth: Option<SegmentationVolume>,
    pub age: Option<f64>,
    pub survival_days: Option<f64>,
    /// Histogram-matched T1c before z-scoring; radiomics reads this when present.
    pub t1c_matched: Option<Volume>,
}

impl Study {
    /// Builds a study and verifies that every volume shares dims and spacing.
    pub fn new(
        patient_id: impl Into<String>,
        volumes: BTreeMap<Modality, Volume>,
        ground_truth: Option<SegmentationVolume>,
        age: Option<f64>,
        survival_days: Option<f64>,
    ) -> Result<Self> {
        let study = Self {
            patient_id: patient_id.into(),
            volumes,
            ground_truth,
            age,
            survival_days,
            t1c_matched: None,
        };
        study.validate()?;
        Ok(study)
    }

    pub fn validate(&self) -> Result<()> {
        for (m, v) in &self.volumes {
            if v.modality() != *m {
                return Err(Error::StudyInconsistent(format!(
                    "{} slot holds a {:?} volume",
                    m.key(),
                    v.modality()
                )));
            }
        }
        let mut geoms: Vec<(String, Dims, Spacing)> = self
            .volumes
            .iter()
            .map(|(m, v)| (m.key().to_string(), v.dims(), v.spacing()))
            .collect();
        if let Some(gt) = &self.ground_truth {
            geoms.push(("seg".into(), gt.dims(), gt.spacing()));
        }
        if let Some(v) = &self.t1c_matched {
            geoms.push(("t1c_matched".into(), v.dims(), v.spacing()));
        }
        if let Some((name0, d0, s0)) = geoms.first() {
            for (name, d, s) in &geoms[1..] {
                if d != d0 || s != s0 {
                    return Err(Error::StudyInconsistent(format!(
                        "{name} is {d:?} @ {s:?} but {name0} is {d0:?} @ {s0:?}"
                    )));
                }
            }
        }
        if let Some(days) = self.survival_days {
            if !(days.is_finite() && days >= 0.0) {
                return Err(Error::InvalidData(format!("survival_days {days}")));
            }
        }
        if let Some(age) = self.age {
            if !age.is_finite() {
                return Err(Error::InvalidData(format!("age {age}")));
            }
        }
        Ok(())
    }

    pub fn volume(&self, m: Modality) -> Result<&Volume> {
        self.volumes
            .get(&m)
            .ok_or_else(|| Error::MissingModality(format!("{} for {}", m.key(), self.patient_id)))
    }

    pub fn require_all_modalities(&self) -> Result<()> {
        for m in Modality::ALL {
            self.volume(m)?;
        }
        Ok(())
    }

    /// Shared geometry of the study.
    pub fn geometry(&self) -> Option<(Dims, Spacing)> {
        self.volumes
            .values()
            .next()
            .map(|v| (v.dims(), v.spacing()))
            .or_else(|| self.ground_truth.as_ref().map(|g| (g.dims(), g.spacing())))
    }

    /// T1c volume radiomics should read: matched if available.
    pub fn radiomics_t1c(&self) -> Result<&Volume> {
        match &self.t1c_matched {
            Some(v) => Ok(v),
            None => self.volume(Modality::T1c),
        }
    }
}

/// On-disk manifest. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub patient_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survival_days: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flair: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t2: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1c: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seg: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1c_matched: Option<PathBuf>,
}

impl Manifest {
    pub fn path_for(&self, m: Modality) -> Option<&PathBuf> {
        match m {
            Modality::Flair => self.flair.as_ref(),
            Modality::T2 => self.t2.as_ref(),
            Modality::T1 => self.t1.as_ref(),
            Modality::T1c => self.t1c.as_ref(),
        }
    }

    fn set_path(&mut self, m: Modality, p: PathBuf) {
        let slot = match m {
            Modality::Flair => &mut self.flair,
            Modality::T2 => &mut self.t2,
            Modality::T1 => &mut self.t1,
            Modality::T1c => &mut self.t1c,
        };
        *slot = Some(p);
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| Error::Format(format!("manifest {}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = toml::to_string(self)
            .map_err(|e| Error::Format(format!("cannot encode manifest: {e}")))?;
        write_bytes(path.as_ref(), text.as_bytes())
    }
}

pub fn read_study(manifest_path: impl AsRef<Path>) -> Result<Study> {
    let manifest_path = manifest_path.as_ref();
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut volumes = BTreeMap::new();
    for m in Modality::ALL {
        if let Some(rel) = manifest.path_for(m) {
            let v = read_volume(base.join(rel))?;
            if v.modality() != m {
                return Err(Error::StudyInconsistent(format!(
                    "{} points at a {:?} volume",
                    m.key(),
                    v.modality()
                )));
            }
            volumes.insert(m, v);
        }
    }
    let ground_truth = match &manifest.seg {
        Some(rel) => Some(read_segmentation(base.join(rel))?),
        None => None,
    };
    let mut study = Study::new(
        manifest.patient_id.clone(),
        volumes,
        ground_truth,
        manifest.age,
        manifest.survival_days,
    )?;
    if let Some(rel) = &manifest.t1c_matched {
        study.t1c_matched = Some(read_volume(base.join(rel))?);
        study.validate()?;
    }
    Ok(study)
}

/// Writes every volume of `study` into `dir` as `<id>_<key><suffix>.gpv1`
/// plus a manifest `<id><suffix>.toml`, returning the manifest path.
pub fn write_study(study: &Study, dir: impl AsRef<Path>, suffix: &str) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let id = &study.patient_id;
    let mut manifest = Manifest {
        patient_id: id.clone(),
        age: study.age,
        survival_days: study.survival_days,
        ..Default::default()
    };
    for (m, v) in &study.volumes {
        let name = PathBuf::from(format!("{id}_{}{suffix}.gpv1", m.key()));
        write_volume(v, dir.join(&name))?;
        manifest.set_path(*m, name);
    }
    if let Some(gt) = &study.ground_truth {
        let name = PathBuf::from(format!("{id}_seg.gpv1"));
        write_segmentation(gt, dir.join(&name))?;
        manifest.seg = Some(name);
    }
    if let Some(v) = &study.t1c_matched {
        let name = PathBuf::from(format!("{id}_t1c_hm.gpv1"));
        write_volume(v, dir.join(&name))?;
        manifest.t1c_matched = Some(name);
    }
    let path = dir.join(format!("{id}{suffix}.toml"));
    manifest.save(&path)?;
    Ok(path)
}

/// One axial plane ready for the network.
#[derive(Clone, Debug)]
pub struct AxialSlice {
    pub index: usize,
    /// `1 × 4 × ny × nx`, channels in [`Modality::ALL`] order.
    pub image: Tensor4<f32>,
    /// Raw labels of the plane, `ny × nx`, x fastest.
    pub labels: Option<Vec<u8>>,
}

pub fn extract_axial_slices(study: &Study, lesion_only: bool) -> Result<Vec<AxialSlice>> {
    study.require_all_modalities()?;
    if lesion_only && study.ground_truth.is_none() {
        return Err(Error::MissingGroundTruth(study.patient_id.clone()));
    }
    let vols: Vec<&Volume> = Modality::ALL
        .iter()
        .map(|&m| study.volume(m))
        .collect::<Result<_>>()?;
    let [nx, ny, nz] = vols[0].dims();
    let plane = nx * ny;
    let mut out = Vec::new();
    for z in 0..nz {
        let labels = study
            .ground_truth
            .as_ref()
            .map(|gt| gt.labels()[z * plane..(z + 1) * plane].to_vec());
        if lesion_only && !labels.as_ref().is_some_and(|l| l.iter().any(|&v| v != 0)) {
            continue;
        }
        let mut data = Vec::with_capacity(4 * plane);
        for v in &vols {
            data.extend_from_slice(&v.data()[z * plane..(z + 1) * plane]);
        }
        out.push(AxialSlice {
            index: z,
            image: Tensor4::new([1, 4, ny, nx], data)?,
            labels,
        });
    }
    Ok(out)
}
