//! 3-D connected-component cleanup and per-class binarization.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::volume_io::{check_label, Dims, SegmentationVolume, Spacing};

pub const DEFAULT_MIN_SIZE: usize = 2000;

/// Voxel neighborhood used for component linking.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Connectivity {
    /// Face neighbors.
    Six,
    /// Face, edge and corner neighbors.
    #[default]
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            6 => Ok(Self::Six),
            26 => Ok(Self::TwentySix),
            other => Err(Error::Config(format!("connectivity must be 6 or 26, got {other}"))),
        }
    }

    pub fn count(self) -> u32 {
        match self {
            Self::Six => 6,
            Self::TwentySix => 26,
        }
    }

    /// Neighbor offsets preceding a voxel in x-fastest scan order.
    fn backward_offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dz in -1..=1isize {
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    if manhattan == 0 || (self == Self::Six && manhattan > 1) {
                        continue;
                    }
                    if (dz, dy, dx) < (0, 0, 0) {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

impl FromStr for Connectivity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let n = s
            .trim()
            .parse::<u32>()
            .map_err(|_| Error::Config(format!("connectivity {s:?}")))?;
        Self::from_count(n)
    }
}

/// Boolean volume sharing the geometry of the segmentation it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask {
    dims: Dims,
    spacing: Spacing,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<bool>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::Shape(format!("{} voxels for dims {dims:?}", data.len())));
        }
        Ok(Self { dims, spacing, data })
    }
    pub fn from_fn(dims: Dims, spacing: Spacing, f: impl Fn(usize, usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self { dims, spacing, data }
    }
    pub fn dims(&self) -> Dims {
        self.dims
    }
    pub fn spacing(&self) -> Spacing {
        self.spacing
    }
    pub fn data(&self) -> &[bool] {
        &self.data
    }
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[(z * self.dims[1] + y) * self.dims[0] + x]
    }
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentLabeling {
    /// Per-voxel component id, 0 for background, ids dense in `1..=K`.
    pub labels: Vec<u32>,
    /// `sizes[k - 1]` is the voxel count of component `k`.
    pub sizes: Vec<usize>,
}

impl ComponentLabeling {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }
    pub fn size_of(&self, id: u32) -> usize {
        self.sizes[id as usize - 1]
    }
}

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        let p = parent[i as usize];
        parent[i as usize] = parent[p as usize];
        i = p;
    }
    i
}

/// Two-pass union-find labeling. Components are numbered in the order their
/// first voxel appears in x-fastest scan order.
pub fn connected_components_3d(mask: &BinaryMask, connectivity: Connectivity) -> ComponentLabeling {
    let [nx, ny, nz] = mask.dims;
    let offsets = connectivity.backward_offsets();
    let n = mask.data.len();
    let mut provisional = vec![0u32; n];
    let mut parent: Vec<u32> = vec![0];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = (z * ny + y) * nx + x;
                if !mask.data[i] {
                    continue;
                }
                let mut root = 0u32;
                for &[dx, dy, dz] in &offsets {
                    let (qx, qy, qz) = (x as isize + dx, y as isize + dy, z as isize + dz);
                    if qx < 0 || qy < 0 || qz < 0 || qx >= nx as isize || qy >= ny as isize {
                        continue;
                    }
                    let q = provisional[(qz as usize * ny + qy as usize) * nx + qx as usize];
                    if q == 0 {
                        continue;
                    }
                    let rq = find(&mut parent, q);
                    if root == 0 {
                        root = rq;
                    } else if rq != root {
                        let (lo, hi) = (root.min(rq), root.max(rq));
                        parent[hi as usize] = lo;
                        root = lo;
                    }
                }
                if root == 0 {
                    root = parent.len() as u32;
                    parent.push(root);
                }
                provisional[i] = root;
            }
        }
    }
    let mut canonical = vec![0u32; parent.len()];
    let mut sizes = Vec::new();
    let mut labels = vec![0u32; n];
    for i in 0..n {
        if provisional[i] == 0 {
            continue;
        }
        let r = find(&mut parent, provisional[i]) as usize;
        if canonical[r] == 0 {
            sizes.push(0);
            canonical[r] = sizes.len() as u32;
        }
        let id = canonical[r];
        sizes[id as usize - 1] += 1;
        labels[i] = id;
    }
    ComponentLabeling { labels, sizes }
}

/// Zeroes every lesion component (any nonzero label) smaller than
/// `threshold_voxels`; surviving voxels keep their class labels.
pub fn remove_small_components(
    seg: &SegmentationVolume,
    threshold_voxels: usize,
    connectivity: Connectivity,
) -> SegmentationVolume {
    let whole = BinaryMask {
        dims: seg.dims(),
        spacing: seg.spacing(),
        data: seg.labels().iter().map(|&l| l != 0).collect(),
    };
    let cc = connected_components_3d(&whole, connectivity);
    let labels = seg
        .labels()
        .iter()
        .zip(&cc.labels)
        .map(|(&l, &id)| if id != 0 && cc.size_of(id) < threshold_voxels { 0 } else { l })
        .collect();
    seg.with_labels(labels).expect("labels drawn from a valid volume")
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskSet {
    pub whole: BinaryMask,
    pub edema: BinaryMask,
    pub necrosis: BinaryMask,
    pub enhancing: BinaryMask,
}

impl MaskSet {
    pub const NAMES: [&'static str; 4] = ["whole", "edema", "necrosis", "enhancing"];

    /// Masks in `NAMES` order.
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &BinaryMask)> {
        Self::NAMES
            .into_iter()
            .zip([&self.whole, &self.edema, &self.necrosis, &self.enhancing])
    }
}

pub fn binarize_masks(seg: &SegmentationVolume) -> Result<MaskSet> {
    for &l in seg.labels() {
        check_label(l)?;
    }
    let mk = |f: fn(u8) -> bool| BinaryMask {
        dims: seg.dims(),
        spacing: seg.spacing(),
        data: seg.labels().iter().map(|&l| f(l)).collect(),
    };
    Ok(MaskSet {
        whole: mk(|l| l != 0),
        edema: mk(|l| l == 2),
        necrosis: mk(|l| l == 1),
        enhancing: mk(|l| l == 4),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::{HashMap, VecDeque};

    const SP: Spacing = [1.0, 1.0, 1.0];

    fn bfs_partition(mask: &BinaryMask, conn: Connectivity) -> Vec<usize> {
        let [nx, ny, nz] = mask.dims;
        let mut comp = vec![usize::MAX; mask.data.len()];
        let mut next = 0;
        for start in 0..mask.data.len() {
            if !mask.data[start] || comp[start] != usize::MAX {
                continue;
            }
            comp[start] = next;
            let mut q = VecDeque::from([start]);
            while let Some(i) = q.pop_front() {
                let (x, y, z) = ((i % nx) as i64, ((i / nx) % ny) as i64, (i / (nx * ny)) as i64);
                for dz in -1..=1i64 {
                    for dy in -1..=1i64 {
                        for dx in -1..=1i64 {
                            let m = dx.abs() + dy.abs() + dz.abs();
                            if m == 0 || (conn == Connectivity::Six && m != 1) {
                                continue;
                            }
                            let (a, b, c) = (x + dx, y + dy, z + dz);
                            if a < 0 || b < 0 || c < 0 || a >= nx as i64 || b >= ny as i64 || c >= nz as i64 {
                                continue;
                            }
                            let j = (c as usize * ny + b as usize) * nx + a as usize;
                            if mask.data[j] && comp[j] == usize::MAX {
                                comp[j] = next;
                                q.push_back(j);
                            }
                        }
                    }
                }
            }
            next += 1;
        }
        comp
    }

    fn cube_pair(gap: usize) -> BinaryMask {
        let nx = 3 + gap + 3;
        BinaryMask::from_fn([nx, 3, 3], SP, |x, _, _| x < 3 || x >= 3 + gap)
    }

    #[test]
    fn separated_cubes() {
        let cc = connected_components_3d(&cube_pair(2), Connectivity::TwentySix);
        assert_eq!(cc.sizes, vec![27, 27]);
    }

    #[test]
    fn corner_contact() {
        let m = BinaryMask::from_fn([2, 2, 2], SP, |x, y, z| (x, y, z) == (0, 0, 0) || (x, y, z) == (1, 1, 1));
        assert_eq!(connected_components_3d(&m, Connectivity::TwentySix).count(), 1);
        assert_eq!(connected_components_3d(&m, Connectivity::Six).count(), 2);
    }

    #[test]
    fn empty_volume() {
        let m = BinaryMask::from_fn([4, 4, 4], SP, |_, _, _| false);
        let cc = connected_components_3d(&m, Connectivity::TwentySix);
        assert_eq!(cc.count(), 0);
        assert!(cc.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn ids_follow_scan_order() {
        // The second blob starts earlier in scan order despite a larger x.
        let m = BinaryMask::from_fn([5, 3, 1], SP, |x, y, _| (x == 0 && y == 2) || (x == 4 && y == 0));
        let cc = connected_components_3d(&m, Connectivity::TwentySix);
        assert_eq!(cc.labels[4], 1);
        assert_eq!(cc.labels[10], 2);
    }

    #[test]
    fn u_shape_merges() {
        // Two arms discovered separately then joined at the bottom row.
        let m = BinaryMask::from_fn([5, 4, 1], SP, |x, y, _| x == 0 || x == 4 || y == 3);
        let cc = connected_components_3d(&m, Connectivity::Six);
        assert_eq!(cc.sizes, vec![11]);
    }

    fn seg_with_blobs(sizes: &[usize]) -> SegmentationVolume {
        // Each blob is a run of whole rows in its own z-plane pair, separated by empty planes.
        let nx = 50;
        let ny = 50;
        let nz = sizes.len() * 3;
        let mut labels = vec![0u8; nx * ny * nz];
        for (b, &size) in sizes.iter().enumerate() {
            let z = b * 3;
            for k in 0..size {
                let (zz, rest) = (z + k / (nx * ny), k % (nx * ny));
                labels[zz * nx * ny + rest] = [1u8, 2, 4][k % 3];
            }
        }
        SegmentationVolume::new([nx, ny, nz], SP, labels).unwrap()
    }

    #[test]
    fn threshold_boundary() {
        let seg = seg_with_blobs(&[1999, 2000]);
        let out = remove_small_components(&seg, DEFAULT_MIN_SIZE, Connectivity::TwentySix);
        assert_eq!(out.foreground_count(), 2000);
        let plane = 50 * 50;
        assert!(out.labels()[..plane].iter().all(|&l| l == 0));
        assert_eq!(&out.labels()[3 * plane..4 * plane], &seg.labels()[3 * plane..4 * plane]);
    }

    #[test]
    fn keeps_only_large_blob() {
        let seg = seg_with_blobs(&[3000, 150]);
        let out = remove_small_components(&seg, DEFAULT_MIN_SIZE, Connectivity::TwentySix);
        assert_eq!(out.foreground_count(), 3000);
        for (i, (&a, &b)) in seg.labels().iter().zip(out.labels()).enumerate() {
            if i < 3 * 2500 {
                assert_eq!(a, b);
            } else {
                assert_eq!(b, 0);
            }
        }
    }

    #[test]
    fn background_unchanged() {
        let seg = SegmentationVolume::zeros([5, 5, 5], SP).unwrap();
        assert_eq!(remove_small_components(&seg, 2000, Connectivity::Six), seg);
    }

    #[test]
    fn binarize_definition() {
        let seg = SegmentationVolume::new([4, 1, 1], SP, vec![0, 1, 2, 4]).unwrap();
        let m = binarize_masks(&seg).unwrap();
        assert_eq!(m.whole.data(), &[false, true, true, true]);
        assert_eq!(m.edema.data(), &[false, false, true, false]);
        assert_eq!(m.necrosis.data(), &[false, true, false, false]);
        assert_eq!(m.enhancing.data(), &[false, false, false, true]);
    }

    #[test]
    fn all_edema_whole_equals_edema() {
        let seg = SegmentationVolume::new([3, 3, 1], SP, vec![2; 9]).unwrap();
        let m = binarize_masks(&seg).unwrap();
        assert_eq!(m.whole.data(), m.edema.data());
    }

    #[test]
    fn connectivity_parsing() {
        assert_eq!("6".parse::<Connectivity>().unwrap(), Connectivity::Six);
        assert_eq!(Connectivity::from_count(26).unwrap().count(), 26);
        assert!(Connectivity::from_count(18).is_err());
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        (1usize..=8, 1usize..=8, 1usize..=8, 0.1f64..0.7).prop_flat_map(|(x, y, z, p)| {
            proptest::collection::vec(proptest::bool::weighted(p), x * y * z)
                .prop_map(move |d| BinaryMask::new([x, y, z], SP, d).unwrap())
        })
    }

    fn arb_seg() -> impl Strategy<Value = SegmentationVolume> {
        (1usize..=8, 1usize..=8, 1usize..=8).prop_flat_map(|(x, y, z)| {
            proptest::collection::vec(prop::sample::select(vec![0u8, 0, 0, 1, 2, 4]), x * y * z)
                .prop_map(move |d| SegmentationVolume::new([x, y, z], SP, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn matches_bfs_partition(mask in arb_mask(), six in any::<bool>()) {
            let conn = if six { Connectivity::Six } else { Connectivity::TwentySix };
            let cc = connected_components_3d(&mask, conn);
            let bfs = bfs_partition(&mask, conn);
            let mut map: HashMap<u32, usize> = HashMap::new();
            for (i, &id) in cc.labels.iter().enumerate() {
                prop_assert_eq!(id == 0, bfs[i] == usize::MAX);
                if id != 0 {
                    // BFS numbers components by scan order too, so ids correspond directly.
                    prop_assert_eq!(*map.entry(id).or_insert(bfs[i]), bfs[i]);
                    prop_assert_eq!(id as usize - 1, bfs[i]);
                }
            }
            prop_assert_eq!(cc.sizes.iter().sum::<usize>(), mask.count());
        }

        #[test]
        fn removal_idempotent_and_shrinking(seg in arb_seg(), t in 0usize..10, six in any::<bool>()) {
            let conn = if six { Connectivity::Six } else { Connectivity::TwentySix };
            let once = remove_small_components(&seg, t, conn);
            let twice = remove_small_components(&once, t, conn);
            prop_assert_eq!(&once, &twice);
            for (&a, &b) in seg.labels().iter().zip(once.labels()) {
                prop_assert!(b == 0 || a == b);
            }
        }

        #[test]
        fn masks_partition_whole(seg in arb_seg()) {
            let m = binarize_masks(&seg).unwrap();
            for i in 0..seg.labels().len() {
                let parts = [m.edema.data()[i], m.necrosis.data()[i], m.enhancing.data()[i]];
                prop_assert_eq!(m.whole.data()[i], parts.iter().any(|&b| b));
                prop_assert!(parts.iter().filter(|&&b| b).count() <= 1);
            }
        }
    }
}
