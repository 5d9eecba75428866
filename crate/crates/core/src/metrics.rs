//! Lesion-wise and whole-volume ("legacy") Dice and HD95 evaluation.
//!
//! A lesion is a group of 26-connected components whose dilated
//! footprints overlap pairwise; each lesion is scored with equal weight
//! and unmatched lesions draw fixed penalties. HD95 runs on mask
//! boundaries via an exact separable Euclidean distance transform.

use crate::error::{Error, Result};
use crate::labels::{labels_to_regions, RegionSet};
use crate::postprocess::{connected_components, Connectivity};
use crate::volume::{percentile_sorted, BinaryMask, GridShape, LabelVolume};

/// Lesion identification and matching knobs.
///
/// The dilation count and the HD95 penalties mirror public evaluation
/// harness conventions; they are configuration, not derived quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LesionMatchParams {
    /// Dilation iterations (3x3x3 structuring element each).
    pub dilation_iters: usize,
    /// Ground-truth lesions of at most this size are ignored.
    pub gt_min_size: usize,
    /// HD95 charged per false-positive lesion, in millimetres.
    pub fp_hd95_penalty: f64,
    /// HD95 charged per false-negative lesion, in millimetres.
    pub fn_hd95_penalty: f64,
}

impl Default for LesionMatchParams {
    fn default() -> Self {
        LesionMatchParams {
            dilation_iters: 3,
            gt_min_size: 50,
            fp_hd95_penalty: 374.0,
            fn_hd95_penalty: 374.0,
        }
    }
}

impl LesionMatchParams {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("fp", self.fp_hd95_penalty), ("fn", self.fn_hd95_penalty)] {
            if !p.is_finite() || p <= 0.0 {
                return Err(Error::Config(format!("{name} hd95 penalty must be positive, got {p}")));
            }
        }
        Ok(())
    }
}

/// One scored unit: a dilation-merged group of connected components.
#[derive(Debug, Clone)]
pub struct Lesion {
    /// Flat voxel indices, ascending; only original (undilated) voxels.
    pub voxels: Vec<usize>,
    pub size: usize,
    /// Component ids (from the 26-connectivity labeling), ascending.
    pub component_ids: Vec<u32>,
}

/// Binary dilation by `iters` applications of the full 3x3x3
/// structuring element, i.e. Chebyshev distance `<= iters`. Computed
/// separably per axis.
pub fn dilate(mask: &BinaryMask, iters: usize) -> BinaryMask {
    if iters == 0 {
        return mask.clone();
    }
    let shape = mask.shape();
    let mut data = mask.data().to_vec();
    let dims = [shape.dx, shape.dy, shape.dz];
    let strides = [1usize, shape.dx, shape.dx * shape.dy];
    for axis in 0..3 {
        let n = dims[axis];
        let stride = strides[axis];
        let mut next = vec![false; data.len()];
        for i in 0..data.len() {
            let (x, y, z) = shape.coords(i);
            let u = [x, y, z][axis];
            let lo = u.saturating_sub(iters);
            let hi = (u + iters).min(n - 1);
            let base = i - u * stride;
            next[i] = (lo..=hi).any(|c| data[base + c * stride]);
        }
        data = next;
    }
    BinaryMask::new(shape, data).expect("same shape")
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root wins, keeping group identity stable.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Dilated voxel set of one component, computed inside its padded
/// bounding box.
fn dilated_component_voxels(
    shape: GridShape,
    voxels: &[usize],
    iters: usize,
) -> Vec<usize> {
    if iters == 0 {
        return voxels.to_vec();
    }
    let (mut lo, mut hi) = ([usize::MAX; 3], [0usize; 3]);
    for v in voxels {
        let (x, y, z) = shape.coords(*v);
        for (axis, c) in [x, y, z].into_iter().enumerate() {
            lo[axis] = lo[axis].min(c);
            hi[axis] = hi[axis].max(c);
        }
    }
    let dims_full = [shape.dx, shape.dy, shape.dz];
    let mut origin = [0usize; 3];
    let mut dims = [0usize; 3];
    for axis in 0..3 {
        origin[axis] = lo[axis].saturating_sub(iters);
        let end = (hi[axis] + iters).min(dims_full[axis] - 1);
        dims[axis] = end - origin[axis] + 1;
    }
    let local = GridShape::new(dims[0], dims[1], dims[2]).expect("nonempty box");
    let mut marked = vec![false; local.len()];
    for v in voxels {
        let (x, y, z) = shape.coords(*v);
        marked[local.index(x - origin[0], y - origin[1], z - origin[2])] = true;
    }
    let dilated = dilate(&BinaryMask::new(local, marked).expect("same shape"), iters);
    dilated
        .indices()
        .into_iter()
        .map(|i| {
            let (x, y, z) = local.coords(i);
            shape.index(x + origin[0], y + origin[1], z + origin[2])
        })
        .collect()
}

/// Partition a mask's foreground into lesions: 26-connected components
/// merged transitively whenever their dilated footprints overlap.
/// Lesions are ordered by their smallest member component id.
pub fn identify_lesions(mask: &BinaryMask, params: &LesionMatchParams) -> Vec<Lesion> {
    let shape = mask.shape();
    let cl = connected_components(mask, Connectivity::TwentySix);
    let count = cl.count();
    if count == 0 {
        return Vec::new();
    }
    let comp_voxels = cl.voxels_by_component();
    let mut uf = UnionFind::new(count);
    // First-writer grid over dilated footprints: whenever two dilated
    // components share a voxel, the later one unions with whichever
    // wrote the voxel first. Any pairwise overlap has a witness voxel,
    // and all components meeting at a voxel end up transitively joined.
    let mut owner = vec![0u32; shape.len()];
    for c in 0..count {
        for v in dilated_component_voxels(shape, &comp_voxels[c], params.dilation_iters) {
            let prev = owner[v];
            if prev == 0 {
                owner[v] = c as u32 + 1;
            } else if prev as usize != c + 1 {
                uf.union(c, prev as usize - 1);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); count];
    for c in 0..count {
        groups[uf.find(c)].push(c);
    }
    let mut lesions = Vec::new();
    for members in groups.into_iter().filter(|g| !g.is_empty()) {
        let mut voxels = Vec::new();
        for c in &members {
            voxels.extend_from_slice(&comp_voxels[*c]);
        }
        voxels.sort_unstable();
        lesions.push(Lesion {
            size: voxels.len(),
            voxels,
            component_ids: members.iter().map(|c| *c as u32 + 1).collect(),
        });
    }
    // Root index equals the smallest member, so ordering by the first
    // component id is ordering by first appearance in storage order.
    lesions.sort_by_key(|l| l.component_ids[0]);
    lesions
}

/// Whole-volume Dice overlap; two empty masks score 1.0.
pub fn legacy_dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return Err(Error::Shape(format!(
            "pred shape {} vs gt shape {}",
            pred.shape(),
            gt.shape()
        )));
    }
    let mut inter = 0usize;
    let mut total = 0usize;
    for (p, g) in pred.data().iter().zip(gt.data()) {
        inter += (*p && *g) as usize;
        total += *p as usize + *g as usize;
    }
    if total == 0 {
        Ok(1.0)
    } else {
        Ok(2.0 * inter as f64 / total as f64)
    }
}

/// Foreground voxels with at least one six-neighbor outside the mask;
/// out-of-bounds counts as outside.
fn boundary_voxels(mask: &BinaryMask) -> Vec<usize> {
    let shape = mask.shape();
    let data = mask.data();
    let mut out = Vec::new();
    for i in 0..shape.len() {
        if !data[i] {
            continue;
        }
        let (x, y, z) = shape.coords(i);
        let exposed = [
            (x as i64 - 1, y as i64, z as i64),
            (x as i64 + 1, y as i64, z as i64),
            (x as i64, y as i64 - 1, z as i64),
            (x as i64, y as i64 + 1, z as i64),
            (x as i64, y as i64, z as i64 - 1),
            (x as i64, y as i64, z as i64 + 1),
        ]
        .into_iter()
        .any(|(nx, ny, nz)| {
            !shape.contains(nx, ny, nz) || !data[shape.index(nx as usize, ny as usize, nz as usize)]
        });
        if exposed {
            out.push(i);
        }
    }
    out
}

/// 1-D squared distance transform (lower envelope of parabolas) over
/// grid positions `i * step`. Infinite entries carry "no seed yet".
fn dt1d(f: &[f64], step: f64, out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n]; // parabola sites
    let mut z = vec![0.0f64; n + 1]; // envelope boundaries
    let mut k = 0usize;
    let mut started = false;
    for q in 0..n {
        if f[q].is_infinite() {
            continue;
        }
        let xq = q as f64 * step;
        if !started {
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            started = true;
            continue;
        }
        loop {
            let p = v[k];
            let xp = p as f64 * step;
            let s = ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * xq - 2.0 * xp);
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    if !started {
        out.copy_from_slice(f);
        return;
    }
    let mut k = 0usize;
    for (i, slot) in out.iter_mut().enumerate() {
        let x = i as f64 * step;
        while z[k + 1] < x {
            k += 1;
        }
        let xv = v[k] as f64 * step;
        *slot = (x - xv) * (x - xv) + f[v[k]];
    }
}

/// Exact squared Euclidean distance to the nearest seed voxel,
/// anisotropic via per-axis spacing.
fn edt_squared(shape: GridShape, spacing: [f32; 3], seeds: &[usize]) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; shape.len()];
    for s in seeds {
        dist[*s] = 0.0;
    }
    let dims = [shape.dx, shape.dy, shape.dz];
    let strides = [1usize, shape.dx, shape.dx * shape.dy];
    for axis in 0..3 {
        let n = dims[axis];
        if n == 1 {
            continue;
        }
        let step = spacing[axis] as f64;
        let lines = shape.len() / n;
        let stride = strides[axis];
        let mut f = vec![0.0f64; n];
        let mut out = vec![0.0f64; n];
        for line in 0..lines {
            // Base index of this line: distribute `line` over the two
            // non-transform axes.
            let mut rem = line;
            let mut base = 0usize;
            for other in 0..3 {
                if other == axis {
                    continue;
                }
                let c = rem % dims[other];
                rem /= dims[other];
                base += c * strides[other];
            }
            for i in 0..n {
                f[i] = dist[base + i * stride];
            }
            dt1d(&f, step, &mut out);
            for i in 0..n {
                dist[base + i * stride] = out[i];
            }
        }
    }
    dist
}

/// Directed boundary distances from every voxel of `from_boundary` to
/// the nearest seed of `to_field`, ascending.
fn directed_distances(edt: &[f64], from_boundary: &[usize]) -> Vec<f64> {
    let mut d: Vec<f64> = from_boundary.iter().map(|v| edt[*v].sqrt()).collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    d
}

/// 95th-percentile symmetric Hausdorff distance between mask
/// boundaries, in millimetres.
pub fn hd95(pred: &BinaryMask, gt: &BinaryMask, spacing: [f32; 3]) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return Err(Error::Shape(format!(
            "pred shape {} vs gt shape {}",
            pred.shape(),
            gt.shape()
        )));
    }
    if pred.count() == 0 || gt.count() == 0 {
        return Err(Error::EmptyMask(
            "hd95 requires non-empty masks on both sides".into(),
        ));
    }
    let shape = pred.shape();
    let pb = boundary_voxels(pred);
    let gb = boundary_voxels(gt);
    let edt_g = edt_squared(shape, spacing, &gb);
    let edt_p = edt_squared(shape, spacing, &pb);
    let d_pg = directed_distances(&edt_g, &pb);
    let d_gp = directed_distances(&edt_p, &gb);
    Ok(percentile_sorted(&d_pg, 95.0).max(percentile_sorted(&d_gp, 95.0)))
}

/// Lesion-wise scores for one region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LesionWiseScores {
    pub dice: f64,
    pub hd95: f64,
    /// Matched ground-truth lesions.
    pub tp: usize,
    /// Predicted lesions matching no kept ground-truth lesion.
    pub fp: usize,
    /// Kept ground-truth lesions with no matching prediction.
    pub fn_count: usize,
    /// Ground-truth lesions below the size floor, excluded everywhere.
    pub ignored: usize,
}

fn mask_from_indices(shape: GridShape, indices: &[usize]) -> BinaryMask {
    let mut data = vec![false; shape.len()];
    for i in indices {
        data[*i] = true;
    }
    BinaryMask::new(shape, data).expect("same shape")
}

/// Score a region lesion-wise.
///
/// Ground-truth lesions of size `<= gt_min_size` are ignored: they are
/// not scored, and predicted lesions falling only inside their dilated
/// footprints are dropped rather than counted as false positives. A
/// predicted lesion matches the first kept ground-truth lesion (by
/// lesion order) whose dilated footprint it intersects. Each matched
/// ground-truth lesion is scored against the union of its matched
/// predictions; false negatives and false positives contribute Dice 0
/// and the configured HD95 penalty. Both sums divide by
/// `tp + fn + fp`; with nothing to score the result is (1.0, 0.0).
pub fn lesion_wise_scores(
    pred: &BinaryMask,
    gt: &BinaryMask,
    params: &LesionMatchParams,
    spacing: [f32; 3],
) -> Result<LesionWiseScores> {
    if pred.shape() != gt.shape() {
        return Err(Error::Shape(format!(
            "pred shape {} vs gt shape {}",
            pred.shape(),
            gt.shape()
        )));
    }
    params.validate()?;
    let shape = pred.shape();
    let gt_lesions = identify_lesions(gt, params);
    let ignored = gt_lesions.iter().filter(|l| l.size <= params.gt_min_size).count();

    let mut kept = Vec::new();
    let mut ignored_footprint = vec![false; shape.len()];
    for lesion in &gt_lesions {
        let footprint =
            dilated_component_voxels(shape, &lesion.voxels, params.dilation_iters);
        if lesion.size <= params.gt_min_size {
            for v in footprint {
                ignored_footprint[v] = true;
            }
        } else {
            let mut in_footprint = vec![false; shape.len()];
            for v in footprint {
                in_footprint[v] = true;
            }
            kept.push((lesion, in_footprint));
        }
    }

    let mut matched_pred_voxels: Vec<Vec<usize>> = vec![Vec::new(); kept.len()];
    let mut fp = 0usize;
    for pl in identify_lesions(pred, params) {
        let hit = kept
            .iter()
            .position(|(_, footprint)| pl.voxels.iter().any(|v| footprint[*v]));
        match hit {
            Some(g) => matched_pred_voxels[g].extend_from_slice(&pl.voxels),
            None => {
                let shielded = pl.voxels.iter().any(|v| ignored_footprint[*v]);
                if !shielded {
                    fp += 1;
                }
            }
        }
    }

    let mut tp = 0usize;
    let mut fn_count = 0usize;
    let mut dice_sum = 0.0f64;
    let mut hd_sum = 0.0f64;
    for ((lesion, _), pred_union) in kept.iter().zip(&matched_pred_voxels) {
        if pred_union.is_empty() {
            fn_count += 1;
            hd_sum += params.fn_hd95_penalty;
            continue;
        }
        tp += 1;
        let gt_mask = mask_from_indices(shape, &lesion.voxels);
        let pred_mask = mask_from_indices(shape, pred_union);
        dice_sum += legacy_dice(&pred_mask, &gt_mask)?;
        hd_sum += hd95(&pred_mask, &gt_mask, spacing)?;
    }
    hd_sum += fp as f64 * params.fp_hd95_penalty;

    let denom = tp + fn_count + fp;
    let (dice, hd) = if denom == 0 {
        (1.0, 0.0)
    } else {
        (dice_sum / denom as f64, hd_sum / denom as f64)
    };
    Ok(LesionWiseScores { dice, hd95: hd, tp, fp, fn_count, ignored })
}

/// Scores for one region of one subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionReport {
    pub lesion_wise_dice: f64,
    pub lesion_wise_hd95: f64,
    pub legacy_dice: f64,
    pub legacy_hd95: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_count: usize,
    pub ignored: usize,
}

/// Full per-subject evaluation: per-region scores plus the cross-region
/// means, regions ordered (ET, TC, WT).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub et: RegionReport,
    pub tc: RegionReport,
    pub wt: RegionReport,
    pub mean_lesion_wise_dice: f64,
    pub mean_lesion_wise_hd95: f64,
    pub mean_legacy_dice: f64,
    pub mean_legacy_hd95: f64,
}

impl EvalReport {
    pub fn regions(&self) -> [&RegionReport; 3] {
        [&self.et, &self.tc, &self.wt]
    }
}

fn region_report(
    pred: &BinaryMask,
    gt: &BinaryMask,
    params: &LesionMatchParams,
    spacing: [f32; 3],
) -> Result<RegionReport> {
    let lw = lesion_wise_scores(pred, gt, params, spacing)?;
    let legacy = legacy_dice(pred, gt)?;
    let legacy_hd = match (pred.count() == 0, gt.count() == 0) {
        (false, false) => hd95(pred, gt, spacing)?,
        (true, false) => params.fn_hd95_penalty,
        (false, true) => params.fp_hd95_penalty,
        (true, true) => 0.0,
    };
    Ok(RegionReport {
        lesion_wise_dice: lw.dice,
        lesion_wise_hd95: lw.hd95,
        legacy_dice: legacy,
        legacy_hd95: legacy_hd,
        tp: lw.tp,
        fp: lw.fp,
        fn_count: lw.fn_count,
        ignored: lw.ignored,
    })
}

/// Evaluate one subject: region masks from both label volumes, then
/// lesion-wise and legacy metrics per region.
pub fn evaluate_case(
    pred: &LabelVolume,
    gt: &LabelVolume,
    params: &LesionMatchParams,
    spacing: [f32; 3],
) -> Result<EvalReport> {
    if pred.shape() != gt.shape() {
        return Err(Error::Shape(format!(
            "pred shape {} vs gt shape {}",
            pred.shape(),
            gt.shape()
        )));
    }
    let pr = labels_to_regions(pred);
    let gr = labels_to_regions(gt);
    evaluate_regions(&pr, &gr, params, spacing)
}

/// Evaluate pre-extracted region sets (same semantics as
/// [`evaluate_case`]).
pub fn evaluate_regions(
    pred: &RegionSet,
    gt: &RegionSet,
    params: &LesionMatchParams,
    spacing: [f32; 3],
) -> Result<EvalReport> {
    let et = region_report(pred.et(), gt.et(), params, spacing)?;
    let tc = region_report(pred.tc(), gt.tc(), params, spacing)?;
    let wt = region_report(pred.wt(), gt.wt(), params, spacing)?;
    let mean = |f: fn(&RegionReport) -> f64| (f(&et) + f(&tc) + f(&wt)) / 3.0;
    Ok(EvalReport {
        et,
        tc,
        wt,
        mean_lesion_wise_dice: mean(|r| r.lesion_wise_dice),
        mean_lesion_wise_hd95: mean(|r| r.lesion_wise_hd95),
        mean_legacy_dice: mean(|r| r.legacy_dice),
        mean_legacy_hd95: mean(|r| r.legacy_hd95),
    })
}
