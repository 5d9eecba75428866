//! Connected-component postprocessing: dust removal and hole filling
//! over the nested tumor regions, plus ground-truth lesion cleaning.
//!
//! Foreground connectivity defaults to 26 and hole (background)
//! connectivity to 6, the topological dual; a mask can then never both
//! enclose a cavity and leak into it.

use std::collections::VecDeque;

use crate::error::Result;
use crate::labels::{self, LABEL_ED, LABEL_ET, LABEL_NCR};
use crate::metrics::{identify_lesions, LesionMatchParams};
use crate::volume::{BinaryMask, GridShape, LabelVolume};

/// Voxel adjacency: face (6), face+edge (18) or full (26) neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Six,
    Eighteen,
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            other => Err(crate::error::Error::Config(format!(
                "connectivity {other} not one of 6, 18, 26"
            ))),
        }
    }

    pub fn count(self) -> u32 {
        match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }

    /// Neighbor offsets in storage order (z, then y, then x fastest).
    pub fn offsets(self) -> Vec<(i64, i64, i64)> {
        let mut out = Vec::with_capacity(self.count() as usize);
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let nonzero = (dx != 0) as u32 + (dy != 0) as u32 + (dz != 0) as u32;
                    let keep = match self {
                        Connectivity::Six => nonzero == 1,
                        Connectivity::Eighteen => nonzero <= 2,
                        Connectivity::TwentySix => true,
                    };
                    if keep {
                        out.push((dx, dy, dz));
                    }
                }
            }
        }
        out
    }
}

/// Per-voxel component ids (0 = background), ids 1..=count assigned in
/// first-visited order of a storage-order scan.
#[derive(Debug, Clone)]
pub struct ComponentLabeling {
    shape: GridShape,
    labels: Vec<u32>,
    sizes: Vec<usize>,
}

impl ComponentLabeling {
    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Voxel count of component `id` (1-based).
    pub fn size(&self, id: u32) -> usize {
        self.sizes[(id - 1) as usize]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Flat voxel indices grouped by component id, ascending within
    /// each group.
    pub fn voxels_by_component(&self) -> Vec<Vec<usize>> {
        let mut groups: Vec<Vec<usize>> = self.sizes.iter().map(|s| Vec::with_capacity(*s)).collect();
        for (i, id) in self.labels.iter().enumerate() {
            if *id != 0 {
                groups[(*id - 1) as usize].push(i);
            }
        }
        groups
    }
}

/// Label connected foreground components by breadth-first search.
pub fn connected_components(mask: &BinaryMask, conn: Connectivity) -> ComponentLabeling {
    let shape = mask.shape();
    let data = mask.data();
    let offsets = conn.offsets();
    let mut labels = vec![0u32; shape.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..shape.len() {
        if !data[start] || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        let mut size = 0usize;
        labels[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y, z) = shape.coords(i);
            for (dx, dy, dz) in &offsets {
                let (nx, ny, nz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                if !shape.contains(nx, ny, nz) {
                    continue;
                }
                let j = shape.index(nx as usize, ny as usize, nz as usize);
                if data[j] && labels[j] == 0 {
                    labels[j] = id;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    ComponentLabeling { shape, labels, sizes }
}

/// Tunable postprocessing knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PostprocessParams {
    /// Components of at most this many voxels are dust.
    pub dust_max: usize,
    pub fg_connectivity: Connectivity,
    pub hole_connectivity: Connectivity,
}

impl Default for PostprocessParams {
    fn default() -> Self {
        PostprocessParams {
            dust_max: 50,
            fg_connectivity: Connectivity::TwentySix,
            hole_connectivity: Connectivity::Six,
        }
    }
}

/// Clear foreground components whose size is `<= dust_max`.
pub fn remove_dust(mask: &BinaryMask, params: &PostprocessParams) -> BinaryMask {
    let cl = connected_components(mask, params.fg_connectivity);
    let labels = cl.labels();
    BinaryMask::from_fn(mask.shape(), |i| {
        labels[i] != 0 && cl.size(labels[i]) > params.dust_max
    })
}

/// Background components (under the hole connectivity) that touch no
/// face of the volume; these are cavities fully enclosed by foreground.
pub fn find_holes(mask: &BinaryMask, params: &PostprocessParams) -> ComponentLabeling {
    let shape = mask.shape();
    let data = mask.data();
    let inverted = BinaryMask::from_fn(shape, |i| !data[i]);
    let bg = connected_components(&inverted, params.hole_connectivity);
    let mut touches = vec![false; bg.count()];
    for i in 0..shape.len() {
        let id = bg.labels()[i];
        if id == 0 {
            continue;
        }
        let (x, y, z) = shape.coords(i);
        if x == 0
            || y == 0
            || z == 0
            || x == shape.dx - 1
            || y == shape.dy - 1
            || z == shape.dz - 1
        {
            touches[(id - 1) as usize] = true;
        }
    }
    // Renumber surviving components, preserving first-visited order.
    let mut remap = vec![0u32; bg.count() + 1];
    let mut sizes = Vec::new();
    for id in 1..=bg.count() as u32 {
        if !touches[(id - 1) as usize] {
            sizes.push(bg.size(id));
            remap[id as usize] = sizes.len() as u32;
        }
    }
    let labels = bg.labels().iter().map(|id| remap[*id as usize]).collect();
    ComponentLabeling { shape, labels, sizes }
}

fn region_mask(shape: GridShape, labels: &[u8], predicate: impl Fn(u8) -> bool + Sync) -> BinaryMask {
    BinaryMask::from_fn(shape, |i| predicate(labels[i]))
}

/// Clear dust of one region from the label buffer (cleared voxels → 0).
fn clear_region_dust(
    shape: GridShape,
    labels: &mut [u8],
    predicate: impl Fn(u8) -> bool + Sync,
    params: &PostprocessParams,
) {
    let mask = region_mask(shape, labels, &predicate);
    let cl = connected_components(&mask, params.fg_connectivity);
    for (i, id) in cl.labels().iter().enumerate() {
        if *id != 0 && cl.size(*id) <= params.dust_max {
            labels[i] = 0;
        }
    }
}

/// Relabel holes present in `after` that are not identical (as voxel
/// sets) to any hole in `before`.
fn fill_created_holes(
    labels: &mut [u8],
    before: &ComponentLabeling,
    after: &ComponentLabeling,
    fill_with: u8,
) {
    for voxels in after.voxels_by_component() {
        let first_pre = before.labels()[voxels[0]];
        let identical = first_pre != 0
            && before.size(first_pre) == voxels.len()
            && voxels.iter().all(|v| before.labels()[*v] == first_pre);
        if !identical {
            for v in voxels {
                labels[v] = fill_with;
            }
        }
    }
}

/// The five-step prediction cleanup:
/// (1) remove ET dust; (2) fill TC holes created by step 1 with NCR;
/// (3) remove TC dust; (4) fill WT holes created by step 3 with ED;
/// (5) remove WT dust. Region masks are recomputed from the labels
/// between steps.
pub fn postprocess_prediction(lab: &LabelVolume, params: &PostprocessParams) -> LabelVolume {
    let shape = lab.shape();
    let mut labels = lab.data().to_vec();

    let is_et = |l: u8| l == LABEL_ET;
    let is_tc = |l: u8| l == LABEL_NCR || l == LABEL_ET;
    let is_wt = |l: u8| l != 0;

    // Step 1: ET dust, with the TC hole inventory captured first.
    let tc_holes_before = find_holes(&region_mask(shape, &labels, is_tc), params);
    clear_region_dust(shape, &mut labels, is_et, params);
    // Step 2: newly created TC holes become NCR.
    let tc_holes_after = find_holes(&region_mask(shape, &labels, is_tc), params);
    fill_created_holes(&mut labels, &tc_holes_before, &tc_holes_after, LABEL_NCR);

    // Step 3: TC dust, same pattern against the WT holes.
    let wt_holes_before = find_holes(&region_mask(shape, &labels, is_wt), params);
    clear_region_dust(shape, &mut labels, is_tc, params);
    // Step 4: newly created WT holes become ED.
    let wt_holes_after = find_holes(&region_mask(shape, &labels, is_wt), params);
    fill_created_holes(&mut labels, &wt_holes_before, &wt_holes_after, LABEL_ED);

    // Step 5: WT dust.
    clear_region_dust(shape, &mut labels, is_wt, params);

    lab.with_data(labels).expect("labels stay in domain")
}

/// Ground-truth cleaning: per region, drop whole lesions (dilation-
/// merged component groups) whose undilated size is `<= dust_max`,
/// then rebuild labels from the intersected cleaned regions so the
/// nesting et ⊆ tc ⊆ wt holds by construction.
pub fn clean_ground_truth(
    lab: &LabelVolume,
    params: &PostprocessParams,
    dilation_iters: usize,
) -> Result<LabelVolume> {
    let shape = lab.shape();
    let regions = labels::labels_to_regions(lab);
    let lesion_params = LesionMatchParams {
        dilation_iters,
        ..LesionMatchParams::default()
    };
    let mut cleaned: Vec<Vec<bool>> = Vec::with_capacity(3);
    for mask in regions.channels() {
        let mut keep = mask.data().to_vec();
        for lesion in identify_lesions(mask, &lesion_params) {
            if lesion.size <= params.dust_max {
                for v in &lesion.voxels {
                    keep[*v] = false;
                }
            }
        }
        cleaned.push(keep);
    }
    let (c_et, c_tc, c_wt) = (&cleaned[0], &cleaned[1], &cleaned[2]);
    let et = BinaryMask::from_fn(shape, |i| c_et[i] && c_tc[i] && c_wt[i]);
    let tc = BinaryMask::from_fn(shape, |i| c_tc[i] && c_wt[i]);
    let wt = BinaryMask::from_fn(shape, |i| c_wt[i]);
    let rebuilt = labels::regions_to_labels(&labels::RegionSet::new(et, tc, wt)?)?;
    lab.with_data(rebuilt.data().to_vec())
}
