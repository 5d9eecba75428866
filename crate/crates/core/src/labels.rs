//! Conversion between disjoint labels and overlapping evaluation
//! regions, and threshold decoding of region probabilities.
//!
//! Labels: 0 background, 1 NCR, 2 ED, 3 ET. Regions: ET = {3},
//! TC = {1, 3}, WT = {1, 2, 3}, nested ET ⊆ TC ⊆ WT. Channel order is
//! (ET, TC, WT) in every API and file.

use crate::error::{Error, Result};
use crate::exec;
use crate::volume::{BinaryMask, GridShape, LabelVolume, ScalarVolume};

pub const LABEL_BACKGROUND: u8 = 0;
pub const LABEL_NCR: u8 = 1;
pub const LABEL_ED: u8 = 2;
pub const LABEL_ET: u8 = 3;

/// Three same-shape binary region masks.
///
/// Construction checks shapes only; the nesting invariant is validated
/// where it matters (see [`regions_to_labels`]), so partially edited
/// sets can exist transiently.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionSet {
    et: BinaryMask,
    tc: BinaryMask,
    wt: BinaryMask,
}

impl RegionSet {
    pub fn new(et: BinaryMask, tc: BinaryMask, wt: BinaryMask) -> Result<Self> {
        if et.shape() != tc.shape() || et.shape() != wt.shape() {
            return Err(Error::Shape(format!(
                "region masks disagree: et {}, tc {}, wt {}",
                et.shape(),
                tc.shape(),
                wt.shape()
            )));
        }
        Ok(RegionSet { et, tc, wt })
    }

    pub fn shape(&self) -> GridShape {
        self.et.shape()
    }

    pub fn et(&self) -> &BinaryMask {
        &self.et
    }

    pub fn tc(&self) -> &BinaryMask {
        &self.tc
    }

    pub fn wt(&self) -> &BinaryMask {
        &self.wt
    }

    /// Masks in fixed (ET, TC, WT) channel order.
    pub fn channels(&self) -> [&BinaryMask; 3] {
        [&self.et, &self.tc, &self.wt]
    }

    /// Check et ⊆ tc ⊆ wt voxelwise.
    pub fn validate_nesting(&self) -> Result<()> {
        for i in 0..self.shape().len() {
            let (e, t, w) = (self.et.data()[i], self.tc.data()[i], self.wt.data()[i]);
            if (e && !t) || (t && !w) {
                let (x, y, z) = self.shape().coords(i);
                return Err(Error::RegionNesting(format!(
                    "voxel ({x}, {y}, {z}): et={e} tc={t} wt={w} violates et ⊆ tc ⊆ wt"
                )));
            }
        }
        Ok(())
    }
}

/// Three same-shape probability channels with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RegionProbs {
    et: ScalarVolume,
    tc: ScalarVolume,
    wt: ScalarVolume,
}

impl RegionProbs {
    pub fn new(et: ScalarVolume, tc: ScalarVolume, wt: ScalarVolume) -> Result<Self> {
        if et.shape() != tc.shape() || et.shape() != wt.shape() {
            return Err(Error::Shape(format!(
                "probability channels disagree: et {}, tc {}, wt {}",
                et.shape(),
                tc.shape(),
                wt.shape()
            )));
        }
        for (name, chan) in [("et", &et), ("tc", &tc), ("wt", &wt)] {
            if let Some(i) = chan.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
                let (x, y, z) = chan.shape().coords(i);
                return Err(Error::Config(format!(
                    "{name} probability at ({x}, {y}, {z}) is {}, must lie in [0, 1]",
                    chan.data()[i]
                )));
            }
        }
        Ok(RegionProbs { et, tc, wt })
    }

    pub fn shape(&self) -> GridShape {
        self.et.shape()
    }

    pub fn et(&self) -> &ScalarVolume {
        &self.et
    }

    pub fn tc(&self) -> &ScalarVolume {
        &self.tc
    }

    pub fn wt(&self) -> &ScalarVolume {
        &self.wt
    }

    /// Channels in fixed (ET, TC, WT) order.
    pub fn channels(&self) -> [&ScalarVolume; 3] {
        [&self.et, &self.tc, &self.wt]
    }

    /// Indicator probabilities (exact 0/1) of a region set.
    pub fn from_indicators(rs: &RegionSet, spacing: [f32; 3]) -> Result<Self> {
        let shape = rs.shape();
        let channel = |mask: &BinaryMask| -> Result<ScalarVolume> {
            let data = mask.data().iter().map(|b| *b as u8 as f32).collect();
            ScalarVolume::new(shape, spacing, Default::default(), data)
        };
        RegionProbs::new(channel(rs.et())?, channel(rs.tc())?, channel(rs.wt())?)
    }
}

/// Decision thresholds of the WT → TC → ET cascade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub wt: f64,
    pub tc: f64,
    pub et: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { wt: 0.45, tc: 0.4, et: 0.45 }
    }
}

impl Thresholds {
    pub fn new(wt: f64, tc: f64, et: f64) -> Result<Self> {
        for (name, v) in [("wt", wt), ("tc", tc), ("et", et)] {
            if !v.is_finite() || v <= 0.0 || v >= 1.0 {
                return Err(Error::Config(format!(
                    "{name} threshold {v} outside the open interval (0, 1)"
                )));
            }
        }
        Ok(Thresholds { wt, tc, et })
    }
}

/// Expand labels into the three overlapping region masks.
pub fn labels_to_regions(lab: &LabelVolume) -> RegionSet {
    let shape = lab.shape();
    let data = lab.data();
    let et = BinaryMask::from_fn(shape, |i| data[i] == LABEL_ET);
    let tc = BinaryMask::from_fn(shape, |i| data[i] == LABEL_NCR || data[i] == LABEL_ET);
    let wt = BinaryMask::from_fn(shape, |i| data[i] != LABEL_BACKGROUND);
    RegionSet { et, tc, wt }
}

/// Collapse nested region masks back to disjoint labels:
/// et → 3, tc∖et → 1, wt∖tc → 2, complement → 0.
pub fn regions_to_labels(rs: &RegionSet) -> Result<LabelVolume> {
    rs.validate_nesting()?;
    let shape = rs.shape();
    let (et, tc, wt) = (rs.et.data(), rs.tc.data(), rs.wt.data());
    let mut data = vec![0u8; shape.len()];
    exec::map_indexed(&mut data, |i| {
        if et[i] {
            LABEL_ET
        } else if tc[i] {
            LABEL_NCR
        } else if wt[i] {
            LABEL_ED
        } else {
            LABEL_BACKGROUND
        }
    });
    LabelVolume::new(shape, [1.0; 3], Default::default(), data)
}

/// Decode region probabilities into one disjoint label per voxel.
///
/// Per voxel: wt below its threshold → 0; otherwise tc below its
/// threshold → 2; otherwise et below its threshold → 1; otherwise 3.
/// Rejection is strict less-than, so a value exactly at the threshold
/// passes.
pub fn threshold_cascade(probs: &RegionProbs, th: Thresholds) -> Result<LabelVolume> {
    let shape = probs.shape();
    if probs.tc.shape() != shape || probs.wt.shape() != shape {
        return Err(Error::Shape("probability channels disagree".into()));
    }
    let (et, tc, wt) = (probs.et.data(), probs.tc.data(), probs.wt.data());
    // Compare at the data's precision so that a stored value equal to
    // the threshold passes (rejection is strict less-than).
    let (th_wt, th_tc, th_et) = (th.wt as f32, th.tc as f32, th.et as f32);
    let mut data = vec![0u8; shape.len()];
    exec::map_indexed(&mut data, |i| {
        if wt[i] < th_wt {
            LABEL_BACKGROUND
        } else if tc[i] < th_tc {
            LABEL_ED
        } else if et[i] < th_et {
            LABEL_NCR
        } else {
            LABEL_ET
        }
    });
    LabelVolume::new(shape, probs.et.spacing(), *probs.et.orient(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Orientation;

    fn single_label_volume(lab: u8) -> LabelVolume {
        let s = GridShape::new(1, 1, 1).unwrap();
        LabelVolume::new(s, [1.0; 3], Orientation::default(), vec![lab]).unwrap()
    }

    #[test]
    fn region_expansion_per_label() {
        // label 2: only WT; label 1: TC and WT but not ET.
        let rs = labels_to_regions(&single_label_volume(2));
        assert_eq!(
            (rs.et().data()[0], rs.tc().data()[0], rs.wt().data()[0]),
            (false, false, true)
        );
        let rs = labels_to_regions(&single_label_volume(1));
        assert_eq!(
            (rs.et().data()[0], rs.tc().data()[0], rs.wt().data()[0]),
            (false, true, true)
        );
        let rs = labels_to_regions(&single_label_volume(3));
        assert_eq!(
            (rs.et().data()[0], rs.tc().data()[0], rs.wt().data()[0]),
            (true, true, true)
        );
        let rs = labels_to_regions(&single_label_volume(0));
        assert_eq!(rs.wt().count(), 0);
    }

    #[test]
    fn round_trip_all_labels() {
        let s = GridShape::new(4, 1, 1).unwrap();
        let lab =
            LabelVolume::new(s, [1.0; 3], Orientation::default(), vec![0, 1, 2, 3]).unwrap();
        let back = regions_to_labels(&labels_to_regions(&lab)).unwrap();
        assert_eq!(back.data(), lab.data());
    }

    #[test]
    fn nesting_violation_detected() {
        let s = GridShape::new(1, 1, 1).unwrap();
        let rs = RegionSet::new(
            BinaryMask::filled(s, false),
            BinaryMask::filled(s, true),
            BinaryMask::filled(s, false),
        )
        .unwrap();
        assert!(matches!(regions_to_labels(&rs), Err(Error::RegionNesting(_))));
    }

    #[test]
    fn cascade_branch_examples() {
        let s = GridShape::new(1, 1, 1).unwrap();
        let mk = |et: f32, tc: f32, wt: f32| {
            let vol = |v: f32| {
                ScalarVolume::new(s, [1.0; 3], Orientation::default(), vec![v]).unwrap()
            };
            RegionProbs::new(vol(et), vol(tc), vol(wt)).unwrap()
        };
        let th = Thresholds::default();
        assert_eq!(threshold_cascade(&mk(0.9, 0.9, 0.3), th).unwrap().data(), &[0]);
        assert_eq!(threshold_cascade(&mk(0.9, 0.3, 0.5), th).unwrap().data(), &[2]);
        assert_eq!(threshold_cascade(&mk(0.3, 0.5, 0.5), th).unwrap().data(), &[1]);
        assert_eq!(threshold_cascade(&mk(0.5, 0.5, 0.5), th).unwrap().data(), &[3]);
        // A value exactly at the threshold passes.
        assert_eq!(threshold_cascade(&mk(0.45, 0.4, 0.45), th).unwrap().data(), &[3]);
    }

    #[test]
    fn thresholds_outside_unit_interval_rejected() {
        assert!(matches!(Thresholds::new(1.5, 0.4, 0.45), Err(Error::Config(_))));
        assert!(matches!(Thresholds::new(0.45, 0.0, 0.45), Err(Error::Config(_))));
    }

    #[test]
    fn probs_outside_unit_interval_rejected() {
        let s = GridShape::new(1, 1, 1).unwrap();
        let vol = |v: f32| ScalarVolume::new(s, [1.0; 3], Orientation::default(), vec![v]).unwrap();
        assert!(matches!(
            RegionProbs::new(vol(1.2), vol(0.5), vol(0.5)),
            Err(Error::Config(_))
        ));
    }
}
