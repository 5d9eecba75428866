//! In-memory volume model.
//!
//! All volumes are dense 3-D grids stored in a flat buffer with x fastest:
//! `i = x + dx * (y + dy * z)`. Voxel data is `f32` (`u8` for labels,
//! `bool` for masks); every numeric reduction in this crate accumulates
//! in `f64`. Volumes are immutable once constructed, which keeps them
//! trivially shareable across worker threads.

use crate::error::{Error, Result};
use crate::exec;

/// Grid dimensions of a volume. All axes are at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridShape {
    pub dx: usize,
    pub dy: usize,
    pub dz: usize,
}

impl GridShape {
    pub fn new(dx: usize, dy: usize, dz: usize) -> Result<Self> {
        if dx == 0 || dy == 0 || dz == 0 {
            return Err(Error::Shape(format!(
                "grid dimensions must be positive, got {dx}x{dy}x{dz}"
            )));
        }
        Ok(GridShape { dx, dy, dz })
    }

    /// Total voxel count.
    pub fn len(&self) -> usize {
        self.dx * self.dy * self.dz
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat index of `(x, y, z)`. Callers must stay in bounds.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dx * (y + self.dy * z)
    }

    /// Inverse of [`index`](Self::index).
    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize, usize) {
        let x = i % self.dx;
        let r = i / self.dx;
        (x, r % self.dy, r / self.dy)
    }

    #[inline]
    pub fn contains(&self, x: i64, y: i64, z: i64) -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < self.dx
            && (y as usize) < self.dy
            && (z as usize) < self.dz
    }
}

impl std::fmt::Display for GridShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.dx, self.dy, self.dz)
    }
}

/// Spatial orientation block carried through from the source file.
///
/// The fields mirror the NIfTI-1 qform/sform slots. This crate never
/// interprets them; they are preserved verbatim so that derived volumes
/// land in the same physical frame as their source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation {
    pub qform_code: i16,
    pub sform_code: i16,
    /// quatern_b, quatern_c, quatern_d, qoffset_x, qoffset_y, qoffset_z.
    pub quatern: [f32; 6],
    /// srow_x, srow_y, srow_z concatenated.
    pub srow: [f32; 12],
}

impl Default for Orientation {
    fn default() -> Self {
        Orientation {
            qform_code: 0,
            sform_code: 0,
            quatern: [0.0; 6],
            srow: [0.0; 12],
        }
    }
}

fn check_spacing(spacing: [f32; 3]) -> Result<()> {
    for (axis, s) in spacing.iter().enumerate() {
        if !s.is_finite() || *s <= 0.0 {
            return Err(Error::Config(format!(
                "voxel spacing must be positive and finite, axis {axis} is {s}"
            )));
        }
    }
    Ok(())
}

/// Dense f32 volume with voxel spacing in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    shape: GridShape,
    spacing: [f32; 3],
    orient: Orientation,
    data: Vec<f32>,
}

impl ScalarVolume {
    /// Build a volume, rejecting non-finite voxels and bad spacing.
    pub fn new(
        shape: GridShape,
        spacing: [f32; 3],
        orient: Orientation,
        data: Vec<f32>,
    ) -> Result<Self> {
        check_spacing(spacing)?;
        if data.len() != shape.len() {
            return Err(Error::Shape(format!(
                "buffer holds {} voxels, shape {} needs {}",
                data.len(),
                shape,
                shape.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            let (x, y, z) = shape.coords(i);
            return Err(Error::FiniteValue(format!(
                "voxel ({x}, {y}, {z}) is {}",
                data[i]
            )));
        }
        Ok(ScalarVolume { shape, spacing, orient, data })
    }

    pub fn zeros(shape: GridShape, spacing: [f32; 3]) -> Result<Self> {
        check_spacing(spacing)?;
        Ok(ScalarVolume {
            shape,
            spacing,
            orient: Orientation::default(),
            data: vec![0.0; shape.len()],
        })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn orient(&self) -> &Orientation {
        &self.orient
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.shape.index(x, y, z)]
    }

    /// New volume with the same geometry and `f(i)` as voxel values.
    /// `f` must produce finite values.
    pub fn map_indexed(&self, f: impl Fn(usize) -> f32 + Sync) -> ScalarVolume {
        let mut data = vec![0.0f32; self.data.len()];
        exec::map_indexed(&mut data, f);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        ScalarVolume {
            shape: self.shape,
            spacing: self.spacing,
            orient: self.orient,
            data,
        }
    }

    /// Same-geometry volume around an externally produced buffer.
    pub fn with_data(&self, data: Vec<f32>) -> Result<ScalarVolume> {
        ScalarVolume::new(self.shape, self.spacing, self.orient, data)
    }
}

/// Segmentation labels: 0 background, 1 necrotic core, 2 edema,
/// 3 enhancing tumor.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    shape: GridShape,
    spacing: [f32; 3],
    orient: Orientation,
    data: Vec<u8>,
}

/// Largest valid label value.
pub const MAX_LABEL: u8 = 3;

impl LabelVolume {
    pub fn new(
        shape: GridShape,
        spacing: [f32; 3],
        orient: Orientation,
        data: Vec<u8>,
    ) -> Result<Self> {
        check_spacing(spacing)?;
        if data.len() != shape.len() {
            return Err(Error::Shape(format!(
                "buffer holds {} voxels, shape {} needs {}",
                data.len(),
                shape,
                shape.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| *v > MAX_LABEL) {
            let (x, y, z) = shape.coords(i);
            return Err(Error::LabelDomain(format!(
                "voxel ({x}, {y}, {z}) holds {}, labels must be 0..={MAX_LABEL}",
                data[i]
            )));
        }
        Ok(LabelVolume { shape, spacing, orient, data })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn orient(&self) -> &Orientation {
        &self.orient
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.data[self.shape.index(x, y, z)]
    }

    /// Same-geometry volume around a replacement label buffer.
    pub fn with_data(&self, data: Vec<u8>) -> Result<LabelVolume> {
        LabelVolume::new(self.shape, self.spacing, self.orient, data)
    }
}

/// Boolean voxel mask. Carries no spatial metadata; operations that need
/// spacing take it as an argument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    shape: GridShape,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(shape: GridShape, data: Vec<bool>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Shape(format!(
                "buffer holds {} voxels, shape {} needs {}",
                data.len(),
                shape,
                shape.len()
            )));
        }
        Ok(BinaryMask { shape, data })
    }

    pub fn filled(shape: GridShape, value: bool) -> Self {
        BinaryMask { shape, data: vec![value; shape.len()] }
    }

    /// Mask of voxels where `f(i)` holds.
    pub fn from_fn(shape: GridShape, f: impl Fn(usize) -> bool + Sync) -> Self {
        let mut data = vec![false; shape.len()];
        exec::map_indexed(&mut data, f);
        BinaryMask { shape, data }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.shape.index(x, y, z)]
    }

    /// Number of set voxels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    /// Flat indices of set voxels, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.then_some(i))
            .collect()
    }
}

/// Interpolated percentile of the masked voxels of `vol`.
///
/// The rank is `p / 100 * (n - 1)` over the ascending sorted values,
/// interpolated linearly between neighbours. With no mask all voxels
/// participate. Errors: `p` outside [0, 100] (`Config`), mask shape
/// mismatch (`Shape`), empty selection (`DegenerateInput`).
pub fn percentile(vol: &ScalarVolume, p: f64, mask: Option<&BinaryMask>) -> Result<f64> {
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Config(format!("percentile {p} outside [0, 100]")));
    }
    let mut vals: Vec<f64> = match mask {
        Some(m) => {
            if m.shape() != vol.shape() {
                return Err(Error::Shape(format!(
                    "mask shape {} vs volume shape {}",
                    m.shape(),
                    vol.shape()
                )));
            }
            vol.data()
                .iter()
                .zip(m.data())
                .filter_map(|(v, keep)| keep.then_some(*v as f64))
                .collect()
        }
        None => vol.data().iter().map(|v| *v as f64).collect(),
    };
    if vals.is_empty() {
        return Err(Error::DegenerateInput(
            "percentile over an empty voxel selection".into(),
        ));
    }
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(percentile_sorted(&vals, p))
}

/// Interpolated percentile of an ascending sorted, non-empty slice.
pub(crate) fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = p / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = rank - lo as f64;
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}
