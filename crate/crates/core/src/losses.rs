//! Segmentation losses with analytic gradients: MSE, cross-entropy,
//! soft Dice, focal, and an edge-agreement loss, plus weighted
//! compounds over the three region channels.
//!
//! Every loss returns both its value and the exact derivative with
//! respect to each prediction voxel, so the analytic gradients can be
//! validated against finite differences.

use crate::error::{Error, Result};
use crate::exec;
use crate::labels::{RegionProbs, RegionSet};
use crate::volume::{BinaryMask, GridShape, ScalarVolume};

/// Probabilities are clamped to `[EPS, 1-EPS]` before any logarithm.
pub const CLAMP_EPS: f64 = 1e-7;
/// Smoothing added to the soft-Dice numerator and denominator.
pub const DICE_SMOOTH: f64 = 1e-5;

/// The five component losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Mse,
    Ce,
    Dice,
    Focal,
    Edge,
}

impl LossKind {
    pub const ALL: [LossKind; 5] =
        [LossKind::Mse, LossKind::Ce, LossKind::Dice, LossKind::Focal, LossKind::Edge];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Ce => "ce",
            LossKind::Dice => "dice",
            LossKind::Focal => "focal",
            LossKind::Edge => "edge",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "ce" => Ok(LossKind::Ce),
            "dice" => Ok(LossKind::Dice),
            "focal" => Ok(LossKind::Focal),
            "edge" => Ok(LossKind::Edge),
            other => Err(Error::Config(format!(
                "unknown loss kind {other:?}; expected one of mse, ce, dice, focal, edge"
            ))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A loss over one prediction channel: scalar value plus the gradient
/// with respect to every prediction voxel.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub value: f64,
    pub gradient: ScalarVolume,
}

/// A loss averaged over the three region channels; gradients are per
/// channel, in (ET, TC, WT) order.
#[derive(Debug, Clone)]
pub struct RegionLossValue {
    pub value: f64,
    pub gradients: [ScalarVolume; 3],
}

fn check_shapes(pred: GridShape, target: GridShape) -> Result<()> {
    if pred != target {
        return Err(Error::Shape(format!("pred shape {pred} vs target shape {target}")));
    }
    Ok(())
}

fn indicator(t: bool) -> f64 {
    if t {
        1.0
    } else {
        0.0
    }
}

fn gradient_volume(pred: &ScalarVolume, f: impl Fn(usize) -> f32 + Sync) -> ScalarVolume {
    pred.map_indexed(f)
}

/// Mean squared error between a prediction and a binary target.
pub fn mse_loss(pred: &ScalarVolume, target: &BinaryMask) -> Result<LossValue> {
    check_shapes(pred.shape(), target.shape())?;
    let p = pred.data();
    let t = target.data();
    let n = p.len() as f64;
    let value = exec::sum_indexed(p.len(), |i| {
        let d = p[i] as f64 - indicator(t[i]);
        d * d
    }) / n;
    let gradient =
        gradient_volume(pred, |i| (2.0 / n * (p[i] as f64 - indicator(t[i]))) as f32);
    Ok(LossValue { value, gradient })
}

/// Shared cross-entropy / focal kernel.
///
/// With `gamma == 0` both modulating factors are exactly `1.0`
/// (`powf(·, 0)` is 1 for every base) and the zero-multiplied gradient
/// term vanishes to a signed zero, so this computes plain binary
/// cross-entropy bit for bit.
fn bce_kernel(pred: &ScalarVolume, target: &BinaryMask, gamma: f64) -> Result<LossValue> {
    check_shapes(pred.shape(), target.shape())?;
    let p = pred.data();
    let t = target.data();
    let n = p.len() as f64;
    let value = exec::sum_indexed(p.len(), |i| {
        let q = (p[i] as f64).clamp(CLAMP_EPS, 1.0 - CLAMP_EPS);
        if t[i] {
            -((1.0 - q).powf(gamma) * q.ln())
        } else {
            -(q.powf(gamma) * (1.0 - q).ln())
        }
    }) / n;
    let gradient = gradient_volume(pred, |i| {
        let q = p[i] as f64;
        // The loss is constant in the clamped zones, so its derivative
        // there is zero.
        if !(CLAMP_EPS..=1.0 - CLAMP_EPS).contains(&q) {
            return 0.0;
        }
        let g = if t[i] {
            gamma * (1.0 - q).powf(gamma - 1.0) * q.ln() - (1.0 - q).powf(gamma) / q
        } else {
            -gamma * q.powf(gamma - 1.0) * (1.0 - q).ln() + q.powf(gamma) / (1.0 - q)
        };
        (g / n) as f32
    });
    Ok(LossValue { value, gradient })
}

/// Mean binary cross-entropy with clamped logarithms.
pub fn ce_loss(pred: &ScalarVolume, target: &BinaryMask) -> Result<LossValue> {
    bce_kernel(pred, target, 0.0)
}

/// Focal loss: cross-entropy with the easy voxels down-weighted by
/// `(1 - q)^gamma` (resp. `q^gamma`). `gamma = 0` recovers `ce_loss`
/// exactly.
pub fn focal_loss(pred: &ScalarVolume, target: &BinaryMask, gamma: f64) -> Result<LossValue> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::Config(format!("focal gamma must be finite and >= 0, got {gamma}")));
    }
    bce_kernel(pred, target, gamma)
}

/// Soft Dice loss `1 - (2·Σpt + s)/(Σp + Σt + s)` over the whole
/// volume, with the gradient from the quotient rule.
pub fn dice_loss(pred: &ScalarVolume, target: &BinaryMask) -> Result<LossValue> {
    check_shapes(pred.shape(), target.shape())?;
    let p = pred.data();
    let t = target.data();
    let (inter, total) = exec::sum2_indexed(p.len(), |i| {
        let pv = p[i] as f64;
        let tv = indicator(t[i]);
        (pv * tv, pv + tv)
    });
    let num = 2.0 * inter + DICE_SMOOTH;
    let den = total + DICE_SMOOTH;
    let value = 1.0 - num / den;
    let gradient =
        gradient_volume(pred, |i| ((num - 2.0 * indicator(t[i]) * den) / (den * den)) as f32);
    Ok(LossValue { value, gradient })
}

/// Forward pieces of the edge extraction, kept for the backward pass.
struct EdgeInternals {
    /// Central differences per axis (x, y, z), borders replicated.
    diffs: [Vec<f64>; 3],
    /// Gradient magnitudes before normalization.
    mags: Vec<f64>,
    max: f64,
    /// First voxel (storage order) attaining the maximum.
    argmax: usize,
}

fn edge_internals(shape: GridShape, data: &[f32]) -> EdgeInternals {
    let dims = [shape.dx, shape.dy, shape.dz];
    let strides = [1usize, shape.dx, shape.dx * shape.dy];
    let mut diffs = [vec![0.0f64; data.len()], vec![0.0f64; data.len()], vec![0.0f64; data.len()]];
    let mut mags = vec![0.0f64; data.len()];
    let mut max = 0.0f64;
    let mut argmax = 0usize;
    for i in 0..data.len() {
        let (x, y, z) = shape.coords(i);
        let coords = [x, y, z];
        let mut sq = 0.0f64;
        for axis in 0..3 {
            let u = coords[axis];
            let up = (u + 1).min(dims[axis] - 1);
            let um = u.saturating_sub(1);
            let base = i - u * strides[axis];
            let d = (data[base + up * strides[axis]] as f64
                - data[base + um * strides[axis]] as f64)
                / 2.0;
            diffs[axis][i] = d;
            sq += d * d;
        }
        let m = sq.sqrt();
        mags[i] = m;
        if m > max {
            max = m;
            argmax = i;
        }
    }
    EdgeInternals { diffs, mags, max, argmax }
}

fn normalized_map(internals: &EdgeInternals) -> Vec<f32> {
    if internals.max == 0.0 {
        vec![0.0f32; internals.mags.len()]
    } else {
        internals.mags.iter().map(|m| (m / internals.max) as f32).collect()
    }
}

/// Normalized gradient-magnitude map: central differences per axis with
/// replicated borders, Euclidean magnitude, divided by the global
/// maximum (all zeros when the volume is constant).
pub fn edge_map(vol: &ScalarVolume) -> ScalarVolume {
    let internals = edge_internals(vol.shape(), vol.data());
    let data = normalized_map(&internals);
    ScalarVolume::new(vol.shape(), vol.spacing(), vol.orient().clone(), data)
        .expect("same shape")
}

/// Full-precision normalized map, used internally so the loss value
/// and its gradient differentiate the same function; the exported
/// [`edge_map`] volume rounds the same quantities to storage precision.
fn normalized_map64(internals: &EdgeInternals) -> Vec<f64> {
    if internals.max == 0.0 {
        vec![0.0f64; internals.mags.len()]
    } else {
        internals.mags.iter().map(|m| m / internals.max).collect()
    }
}

fn mse_of_maps(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    exec::sum_indexed(a.len(), |i| {
        let d = a[i] - b[i];
        d * d
    }) / n
}

/// MSE between the edge maps of the prediction and of the target
/// indicator, differentiated through the edge extraction and the
/// max-normalization.
pub fn edge_loss(pred: &ScalarVolume, target: &BinaryMask) -> Result<LossValue> {
    check_shapes(pred.shape(), target.shape())?;
    let shape = pred.shape();
    let target_vol: Vec<f32> = target.data().iter().map(|t| indicator(*t) as f32).collect();
    let ip = edge_internals(shape, pred.data());
    let it = edge_internals(shape, &target_vol);
    let ep = normalized_map64(&ip);
    let et = normalized_map64(&it);
    let value = mse_of_maps(&ep, &et);

    // Constant prediction: the max-normalization is non-differentiable
    // there; take the zero subgradient.
    if ip.max == 0.0 {
        return Ok(LossValue { value, gradient: pred.map_indexed(|_| 0.0) });
    }

    let n = ep.len() as f64;
    let m = ip.max;
    // r = dL/d(normalized map); S couples every voxel to the argmax
    // through the shared normalizer.
    let r: Vec<f64> = (0..ep.len()).map(|i| 2.0 / n * (ep[i] - et[i])).collect();
    let s_coupling = exec::sum_indexed(ep.len(), |i| r[i] * ip.mags[i]);
    // dL/d(magnitude), then dL/d(per-axis difference).
    let mbar: Vec<f64> = (0..ep.len())
        .map(|i| {
            let mut v = r[i] / m;
            if i == ip.argmax {
                v -= s_coupling / (m * m);
            }
            v
        })
        .collect();
    let dbar: [Vec<f64>; 3] = std::array::from_fn(|axis| {
        (0..ep.len())
            .map(|i| if ip.mags[i] == 0.0 { 0.0 } else { mbar[i] * ip.diffs[axis][i] / ip.mags[i] })
            .collect()
    });

    let dims = [shape.dx, shape.dy, shape.dz];
    let strides = [1usize, shape.dx, shape.dx * shape.dy];
    // Gather form of the difference adjoint: voxel j receives
    // +0.5·dbar from every voxel whose replicated plus-neighbor is j
    // and -0.5·dbar from every voxel whose minus-neighbor is j. The
    // candidates sit within one step of j along the axis.
    let gradient = gradient_volume(pred, |j| {
        let (x, y, z) = shape.coords(j);
        let coords = [x, y, z];
        let mut acc = 0.0f64;
        for axis in 0..3 {
            let u = coords[axis];
            let nd = dims[axis];
            let base = j - u * strides[axis];
            let lo = u.saturating_sub(1);
            let hi = (u + 1).min(nd - 1);
            for c in lo..=hi {
                let i = base + c * strides[axis];
                if (c + 1).min(nd - 1) == u {
                    acc += 0.5 * dbar[axis][i];
                }
                if c.saturating_sub(1) == u {
                    acc -= 0.5 * dbar[axis][i];
                }
            }
        }
        acc as f32
    });
    Ok(LossValue { value, gradient })
}

fn channel_loss(
    kind: LossKind,
    pred: &ScalarVolume,
    target: &BinaryMask,
    gamma: f64,
) -> Result<LossValue> {
    match kind {
        LossKind::Mse => mse_loss(pred, target),
        LossKind::Ce => ce_loss(pred, target),
        LossKind::Dice => dice_loss(pred, target),
        LossKind::Focal => focal_loss(pred, target, gamma),
        LossKind::Edge => edge_loss(pred, target),
    }
}

/// One loss evaluated per region channel and averaged: the value is
/// exactly `(et + tc + wt) / 3` and each channel gradient is the
/// per-channel gradient divided by 3.
pub fn region_loss(
    kind: LossKind,
    probs: &RegionProbs,
    gt: &RegionSet,
    gamma: f64,
) -> Result<RegionLossValue> {
    check_shapes(probs.shape(), gt.shape())?;
    let per: [LossValue; 3] = [
        channel_loss(kind, probs.et(), gt.et(), gamma)?,
        channel_loss(kind, probs.tc(), gt.tc(), gamma)?,
        channel_loss(kind, probs.wt(), gt.wt(), gamma)?,
    ];
    let value = (per[0].value + per[1].value + per[2].value) / 3.0;
    let gradients = per.map(|lv| {
        let g = lv.gradient;
        g.map_indexed(|i| (g.data()[i] as f64 / 3.0) as f32)
    });
    Ok(RegionLossValue { value, gradients })
}

/// A weighted combination of component losses.
#[derive(Debug, Clone, PartialEq)]
pub struct CompoundLossSpec {
    terms: Vec<(LossKind, f64)>,
    pub focal_gamma: f64,
}

/// Default focal exponent.
pub const DEFAULT_FOCAL_GAMMA: f64 = 2.0;

impl CompoundLossSpec {
    /// Validates: at least one term, finite weights `>= 0`, at least
    /// one weight nonzero, `gamma` finite `>= 0`.
    pub fn new(terms: Vec<(LossKind, f64)>, focal_gamma: f64) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Config("compound loss needs at least one term".into()));
        }
        for (kind, w) in &terms {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::Config(format!(
                    "weight for {kind} must be finite and >= 0, got {w}"
                )));
            }
        }
        if terms.iter().all(|(_, w)| *w == 0.0) {
            return Err(Error::Config("compound loss needs a nonzero weight".into()));
        }
        if !focal_gamma.is_finite() || focal_gamma < 0.0 {
            return Err(Error::Config(format!(
                "focal gamma must be finite and >= 0, got {focal_gamma}"
            )));
        }
        Ok(CompoundLossSpec { terms, focal_gamma })
    }

    /// MSE + CE + Edge at weights 0.25, 0.0044, 0.00015.
    pub fn combo1() -> Self {
        CompoundLossSpec {
            terms: vec![
                (LossKind::Mse, 0.25),
                (LossKind::Ce, 0.0044),
                (LossKind::Edge, 0.00015),
            ],
            focal_gamma: DEFAULT_FOCAL_GAMMA,
        }
    }

    /// Dice + Focal + Edge at weights 1, 1, 0.05.
    pub fn combo2() -> Self {
        CompoundLossSpec {
            terms: vec![
                (LossKind::Dice, 1.0),
                (LossKind::Focal, 1.0),
                (LossKind::Edge, 0.05),
            ],
            focal_gamma: DEFAULT_FOCAL_GAMMA,
        }
    }

    /// Dice + Focal + Edge with the edge weight lowered to 0.005.
    pub fn combo3() -> Self {
        CompoundLossSpec {
            terms: vec![
                (LossKind::Dice, 1.0),
                (LossKind::Focal, 1.0),
                (LossKind::Edge, 0.005),
            ],
            focal_gamma: DEFAULT_FOCAL_GAMMA,
        }
    }

    /// Look up a named preset (case-insensitive).
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "combo1" => Ok(Self::combo1()),
            "combo2" => Ok(Self::combo2()),
            "combo3" => Ok(Self::combo3()),
            other => Err(Error::Config(format!(
                "unknown loss preset {other:?}; expected combo1, combo2, or combo3"
            ))),
        }
    }

    /// Parse either a preset name or an explicit `kind:weight,...`
    /// list, e.g. `"dice:1,focal:1,edge:0.05"`.
    pub fn parse(s: &str) -> Result<Self> {
        if !s.contains(':') {
            return Self::from_name(s);
        }
        let mut terms = Vec::new();
        for part in s.split(',') {
            let (kind, weight) = part
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("malformed loss term {part:?}")))?;
            let w: f64 = weight
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad weight in loss term {part:?}")))?;
            terms.push((LossKind::parse(kind.trim())?, w));
        }
        Self::new(terms, DEFAULT_FOCAL_GAMMA)
    }

    pub fn terms(&self) -> &[(LossKind, f64)] {
        &self.terms
    }
}

/// Weighted sum of channel-averaged component losses; the gradient is
/// the matching weighted sum of component gradients, accumulated in
/// f64.
pub fn compound_loss(
    spec: &CompoundLossSpec,
    probs: &RegionProbs,
    gt: &RegionSet,
) -> Result<RegionLossValue> {
    if spec.terms.is_empty() {
        return Err(Error::Config("compound loss needs at least one term".into()));
    }
    check_shapes(probs.shape(), gt.shape())?;
    let shape = probs.shape();
    let mut value = 0.0f64;
    let mut acc: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0f64; shape.len()]);
    for (kind, weight) in &spec.terms {
        let part = region_loss(*kind, probs, gt, spec.focal_gamma)?;
        value += weight * part.value;
        for (acc_c, grad_c) in acc.iter_mut().zip(&part.gradients) {
            let g = grad_c.data();
            for (a, gv) in acc_c.iter_mut().zip(g) {
                *a += weight * *gv as f64;
            }
        }
    }
    let gradients = std::array::from_fn(|c| {
        let data: Vec<f32> = acc[c].iter().map(|v| *v as f32).collect();
        probs.et().with_data(data).expect("same shape")
    });
    Ok(RegionLossValue { value, gradients })
}
