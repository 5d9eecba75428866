//! Intensity preprocessing: z-score normalization, percentile rescaling
//! and histogram matching, composable through [`PreprocessPlan`].
//!
//! All statistics are computed over the nonzero (brain) voxels only;
//! skull-stripped background would otherwise dominate them. Every
//! transform leaves background voxels exactly 0.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::exec;
use crate::nifti;
use crate::volume::{percentile, BinaryMask, ScalarVolume};

pub const DEFAULT_P_LOW: f64 = 2.0;
pub const DEFAULT_P_HIGH: f64 = 98.0;
pub const DEFAULT_N_QUANTILES: usize = 256;

/// Mask of voxels carrying brain tissue: exactly the nonzero voxels.
pub fn brain_mask(vol: &ScalarVolume) -> BinaryMask {
    let data = vol.data();
    BinaryMask::from_fn(vol.shape(), |i| data[i] != 0.0)
}

/// Summary statistics over the masked voxels of a volume.
#[derive(Debug, Clone, Copy)]
pub struct MaskedStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub p2: f64,
    pub p98: f64,
}

pub fn masked_stats(vol: &ScalarVolume, mask: &BinaryMask) -> Result<MaskedStats> {
    let (mean, std, count) = masked_moments(vol, mask)?;
    Ok(MaskedStats {
        count,
        mean,
        std,
        p2: percentile(vol, 2.0, Some(mask))?,
        p98: percentile(vol, 98.0, Some(mask))?,
    })
}

/// Mean and population standard deviation over masked voxels.
fn masked_moments(vol: &ScalarVolume, mask: &BinaryMask) -> Result<(f64, f64, usize)> {
    if mask.shape() != vol.shape() {
        return Err(Error::Shape(format!(
            "mask shape {} vs volume shape {}",
            mask.shape(),
            vol.shape()
        )));
    }
    let data = vol.data();
    let m = mask.data();
    let n = mask.count();
    if n == 0 {
        return Err(Error::DegenerateInput("statistics over an empty mask".into()));
    }
    let sum = exec::sum_indexed(data.len(), |i| if m[i] { data[i] as f64 } else { 0.0 });
    let mean = sum / n as f64;
    let ssq = exec::sum_indexed(data.len(), |i| {
        if m[i] {
            let d = data[i] as f64 - mean;
            d * d
        } else {
            0.0
        }
    });
    Ok((mean, (ssq / n as f64).sqrt(), n))
}

/// Subtract the masked mean and divide by the masked population
/// standard deviation; background voxels become 0.
pub fn zscore_normalize(vol: &ScalarVolume, mask: &BinaryMask) -> Result<ScalarVolume> {
    let (mean, std, n) = masked_moments(vol, mask)?;
    if n < 2 {
        return Err(Error::DegenerateInput(format!(
            "z-score needs at least 2 masked voxels, got {n}"
        )));
    }
    // Relative guard: a constant region has std 0 up to rounding noise.
    if std <= 1e-12 * mean.abs().max(1.0) {
        return Err(Error::DegenerateInput(
            "z-score over a constant masked region (std = 0)".into(),
        ));
    }
    let data = vol.data();
    let m = mask.data();
    Ok(vol.map_indexed(|i| {
        if m[i] {
            ((data[i] as f64 - mean) / std) as f32
        } else {
            0.0
        }
    }))
}

/// Affinely stretch the masked [P_low, P_high] percentile range to
/// [0, 1], clamping outside it; background voxels stay 0.
pub fn rescale_percentile(
    vol: &ScalarVolume,
    mask: &BinaryMask,
    p_low: f64,
    p_high: f64,
) -> Result<ScalarVolume> {
    if !(0.0..=100.0).contains(&p_low) || !(0.0..=100.0).contains(&p_high) || p_low >= p_high {
        return Err(Error::Config(format!(
            "percentile range [{p_low}, {p_high}] must satisfy 0 <= low < high <= 100"
        )));
    }
    let lo = percentile(vol, p_low, Some(mask))?;
    let hi = percentile(vol, p_high, Some(mask))?;
    if hi <= lo {
        return Err(Error::DegenerateInput(format!(
            "percentile range collapsed: P{p_low} = P{p_high} = {lo}"
        )));
    }
    let span = hi - lo;
    let data = vol.data();
    let m = mask.data();
    Ok(vol.map_indexed(|i| {
        if m[i] {
            (((data[i] as f64 - lo) / span).clamp(0.0, 1.0)) as f32
        } else {
            0.0
        }
    }))
}

/// Piecewise-linear quantile map fitted on `n_quantiles` anchor points.
struct QuantileMap {
    src: Vec<f64>,
    dst: Vec<f64>,
}

impl QuantileMap {
    /// `src_sorted` and `ref_sorted` are ascending masked value lists.
    fn fit(src_sorted: &[f64], ref_sorted: &[f64], n_quantiles: usize) -> Self {
        let q = n_quantiles;
        let mut src = Vec::with_capacity(q);
        let mut dst = Vec::with_capacity(q);
        for k in 0..q {
            let p = 100.0 * k as f64 / (q - 1) as f64;
            src.push(crate::volume::percentile_sorted(src_sorted, p));
            dst.push(crate::volume::percentile_sorted(ref_sorted, p));
        }
        QuantileMap { src, dst }
    }

    /// Monotone non-decreasing evaluation with end clamping.
    fn apply(&self, v: f64) -> f64 {
        let q = self.src.len();
        if v <= self.src[0] {
            return self.dst[0];
        }
        if v >= self.src[q - 1] {
            return self.dst[q - 1];
        }
        // Largest k with src[k] <= v; v < src[q-1] keeps k < q-1.
        let k = self.src.partition_point(|s| *s <= v) - 1;
        let (s0, s1) = (self.src[k], self.src[k + 1]);
        let (d0, d1) = (self.dst[k], self.dst[k + 1]);
        if s1 <= s0 {
            d0
        } else {
            d0 + (v - s0) / (s1 - s0) * (d1 - d0)
        }
    }
}

/// Transform masked source intensities so their distribution matches
/// the masked reference distribution, via quantile mapping.
pub fn histogram_match(
    src: &ScalarVolume,
    src_mask: &BinaryMask,
    reference: &ScalarVolume,
    ref_mask: &BinaryMask,
    n_quantiles: usize,
) -> Result<ScalarVolume> {
    if n_quantiles < 2 {
        return Err(Error::Config(format!(
            "histogram matching needs at least 2 quantile anchors, got {n_quantiles}"
        )));
    }
    if src_mask.shape() != src.shape() {
        return Err(Error::Shape(format!(
            "mask shape {} vs volume shape {}",
            src_mask.shape(),
            src.shape()
        )));
    }
    if ref_mask.shape() != reference.shape() {
        return Err(Error::Shape(format!(
            "reference mask shape {} vs reference shape {}",
            ref_mask.shape(),
            reference.shape()
        )));
    }
    let collect_sorted = |vol: &ScalarVolume, mask: &BinaryMask, what: &str| -> Result<Vec<f64>> {
        let mut vals: Vec<f64> = vol
            .data()
            .iter()
            .zip(mask.data())
            .filter_map(|(v, keep)| keep.then_some(*v as f64))
            .collect();
        if vals.is_empty() {
            return Err(Error::DegenerateInput(format!("empty {what} mask")));
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(vals)
    };
    let src_sorted = collect_sorted(src, src_mask, "source")?;
    let ref_sorted = collect_sorted(reference, ref_mask, "reference")?;
    let map = QuantileMap::fit(&src_sorted, &ref_sorted, n_quantiles);
    let data = src.data();
    let m = src_mask.data();
    Ok(src.map_indexed(|i| if m[i] { map.apply(data[i] as f64) as f32 } else { 0.0 }))
}

/// One step of a preprocessing plan.
#[derive(Debug, Clone, PartialEq)]
pub enum PreprocessStep {
    Zscore,
    Rescale { p_low: f64, p_high: f64 },
    HistMatch { reference: PathBuf, n_quantiles: usize },
}

/// Ordered list of preprocessing steps. The brain mask is computed once
/// from the raw input and reused by every step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PreprocessPlan {
    steps: Vec<PreprocessStep>,
}

impl PreprocessPlan {
    pub fn new(steps: Vec<PreprocessStep>) -> Result<Self> {
        for step in &steps {
            match step {
                PreprocessStep::Zscore => {}
                PreprocessStep::Rescale { p_low, p_high } => {
                    if !(0.0..=100.0).contains(p_low)
                        || !(0.0..=100.0).contains(p_high)
                        || p_low >= p_high
                    {
                        return Err(Error::Config(format!(
                            "rescale percentiles [{p_low}, {p_high}] must satisfy 0 <= low < high <= 100"
                        )));
                    }
                }
                PreprocessStep::HistMatch { n_quantiles, .. } => {
                    if *n_quantiles < 2 {
                        return Err(Error::Config(format!(
                            "histmatch needs at least 2 quantiles, got {n_quantiles}"
                        )));
                    }
                }
            }
        }
        Ok(PreprocessPlan { steps })
    }

    pub fn steps(&self) -> &[PreprocessStep] {
        &self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Parse a comma-separated plan string.
    ///
    /// Steps: `zscore`, `rescale` or `rescale:LOW:HIGH`,
    /// `histmatch:PATH` or `histmatch:PATH:QUANTILES`. An empty string
    /// is the identity plan.
    pub fn parse(text: &str) -> Result<Self> {
        let mut steps = Vec::new();
        for part in text.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (head, rest) = match part.split_once(':') {
                Some((h, r)) => (h, Some(r)),
                None => (part, None),
            };
            let step = match head {
                "zscore" => {
                    if rest.is_some() {
                        return Err(Error::Config(format!("zscore takes no arguments: {part}")));
                    }
                    PreprocessStep::Zscore
                }
                "rescale" => match rest {
                    None => PreprocessStep::Rescale {
                        p_low: DEFAULT_P_LOW,
                        p_high: DEFAULT_P_HIGH,
                    },
                    Some(r) => {
                        let (lo, hi) = r.split_once(':').ok_or_else(|| {
                            Error::Config(format!("rescale wants LOW:HIGH, got {part}"))
                        })?;
                        let parse = |s: &str| {
                            s.parse::<f64>().map_err(|_| {
                                Error::Config(format!("bad percentile {s:?} in {part}"))
                            })
                        };
                        PreprocessStep::Rescale { p_low: parse(lo)?, p_high: parse(hi)? }
                    }
                },
                "histmatch" => {
                    let r = rest.ok_or_else(|| {
                        Error::Config(format!("histmatch wants a reference path: {part}"))
                    })?;
                    // A trailing :N is a quantile count; the rest is the path.
                    let (path, nq) = match r.rsplit_once(':') {
                        Some((p, n)) if n.parse::<usize>().is_ok() => {
                            (p, n.parse::<usize>().unwrap())
                        }
                        _ => (r, DEFAULT_N_QUANTILES),
                    };
                    PreprocessStep::HistMatch {
                        reference: PathBuf::from(path),
                        n_quantiles: nq,
                    }
                }
                other => {
                    return Err(Error::Config(format!("unknown preprocessing step {other:?}")))
                }
            };
            steps.push(step);
        }
        PreprocessPlan::new(steps)
    }
}

/// Apply the plan's steps in order. The brain mask comes from the raw
/// input once; histogram-matching references are masked by their own
/// nonzero voxels.
pub fn run_plan(plan: &PreprocessPlan, vol: &ScalarVolume) -> Result<ScalarVolume> {
    let mask = brain_mask(vol);
    let mut current = vol.clone();
    for step in &plan.steps {
        current = match step {
            PreprocessStep::Zscore => zscore_normalize(&current, &mask)?,
            PreprocessStep::Rescale { p_low, p_high } => {
                rescale_percentile(&current, &mask, *p_low, *p_high)?
            }
            PreprocessStep::HistMatch { reference, n_quantiles } => {
                let reference = nifti::read_scalar_nifti(reference)?;
                let ref_mask = brain_mask(&reference);
                histogram_match(&current, &mask, &reference, &ref_mask, *n_quantiles)?
            }
        };
    }
    Ok(current)
}
