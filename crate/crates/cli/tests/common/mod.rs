//! Shared fixtures for the CLI integration tests. Each test target
//! compiles its own copy, so not every helper is used by every target.
#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use voxelseg::labels::{labels_to_regions, RegionProbs};
use voxelseg::volume::{GridShape, LabelVolume, Orientation, ScalarVolume};

pub const SUBJECT_SHAPE: usize = 24;
pub const SUBJECT_SPACING: [f32; 3] = [1.0, 1.0, 1.2];

/// Command handle for the compiled `voxelseg` binary.
pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_voxelseg"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn voxelseg")
}

pub fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn in_box(c: (usize, usize, usize), lo: usize, hi: usize) -> bool {
    let (x, y, z) = c;
    (lo..hi).contains(&x) && (lo..hi).contains(&y) && (lo..hi).contains(&z)
}

fn shifted_in_box(c: (usize, usize, usize), lo: usize, hi: usize) -> bool {
    let (x, y, z) = c;
    (lo + 1..hi + 1).contains(&x) && (lo..hi).contains(&y) && (lo..hi).contains(&z)
}

/// Ground-truth labels: nested boxes, enhancing tumor 10..14 inside
/// core 8..16 inside whole tumor 6..18.
pub fn subject_gt() -> LabelVolume {
    let shape = GridShape::new(SUBJECT_SHAPE, SUBJECT_SHAPE, SUBJECT_SHAPE).unwrap();
    let data: Vec<u8> = (0..shape.len())
        .map(|i| {
            let c = shape.coords(i);
            if in_box(c, 10, 14) {
                3
            } else if in_box(c, 8, 16) {
                1
            } else if in_box(c, 6, 18) {
                2
            } else {
                0
            }
        })
        .collect();
    LabelVolume::new(shape, SUBJECT_SPACING, Orientation::default(), data).unwrap()
}

/// Prediction probabilities: the ground-truth boxes shifted by one
/// voxel along x, plus a 27-voxel whole-tumor-only dust blob near the
/// origin that post-processing should remove. Values are exact binary
/// fractions, far from every decision threshold.
pub fn subject_probs() -> RegionProbs {
    let shape = GridShape::new(SUBJECT_SHAPE, SUBJECT_SHAPE, SUBJECT_SHAPE).unwrap();
    let channel = |member: &dyn Fn((usize, usize, usize)) -> bool| -> ScalarVolume {
        let data: Vec<f32> = (0..shape.len())
            .map(|i| if member(shape.coords(i)) { 0.875 } else { 0.0625 })
            .collect();
        ScalarVolume::new(shape, SUBJECT_SPACING, Orientation::default(), data).unwrap()
    };
    let dust = |c: (usize, usize, usize)| in_box(c, 1, 4);
    let et = channel(&|c| shifted_in_box(c, 10, 14));
    let tc = channel(&|c| shifted_in_box(c, 8, 16));
    let wt = channel(&|c| shifted_in_box(c, 6, 18) || dust(c));
    RegionProbs::new(et, tc, wt).unwrap()
}

/// Probabilities that decode exactly back to `lab`: indicator values
/// of its nested regions.
pub fn indicator_probs(lab: &LabelVolume) -> RegionProbs {
    RegionProbs::from_indicators(&labels_to_regions(lab), lab.spacing()).unwrap()
}

/// Lay out one synthetic subject on disk for an end-to-end run:
/// `<dir>/probs/case-0001-pred.nii.gz` and
/// `<dir>/gt/case-0001-seg.nii.gz`.
pub fn write_subject(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let probs_dir = dir.join("probs");
    let gt_dir = dir.join("gt");
    std::fs::create_dir_all(&probs_dir).unwrap();
    std::fs::create_dir_all(&gt_dir).unwrap();
    let probs_path = probs_dir.join("case-0001-pred.nii.gz");
    let gt_path = gt_dir.join("case-0001-seg.nii.gz");
    voxelseg::nifti::write_region_probs(&subject_probs(), &probs_path).unwrap();
    voxelseg::nifti::write_label_nifti(&subject_gt(), &gt_path).unwrap();
    (probs_path, gt_path)
}
