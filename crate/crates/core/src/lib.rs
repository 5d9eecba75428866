//! Non-training stages of a 3-D brain tumor segmentation pipeline:
//! NIfTI-1 volume I/O, intensity preprocessing, label/region algebra with
//! threshold-cascade decoding, segmentation losses with analytic
//! gradients, connected-component postprocessing, and lesion-wise
//! evaluation metrics.
//!
//! Voxel data is `f32` in memory with all reductions accumulated in
//! `f64`. Heavy kernels run data-parallel when the `parallel` feature
//! (default) is enabled; [`exec::set_deterministic`] (default on) makes
//! every reduction bitwise reproducible across worker counts and
//! identical to the sequential build.

pub mod error;
pub mod exec;
pub mod labels;
pub mod losses;
pub mod metrics;
pub mod nifti;
pub mod postprocess;
pub mod preprocess;
pub mod volume;

pub use error::{Error, Result};
pub use labels::{RegionProbs, RegionSet, Thresholds};
pub use volume::{BinaryMask, GridShape, LabelVolume, Orientation, ScalarVolume};
