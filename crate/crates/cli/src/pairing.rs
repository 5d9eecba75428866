//! Subject discovery and pairing across prediction and ground-truth
//! directories. A file's subject id is its name without the volume
//! extension and without a trailing `-`-separated role tag such as
//! `-seg` or `-pred`; a trailing segment is treated as a role tag only
//! when it contains an ASCII letter, so numeric id segments survive
//! (`case-0001.nii.gz` and `case-0001-seg.nii.gz` both map to
//! `case-0001`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use voxelseg::{Error, Result};

/// Subject id for a volume file name; `None` when the name does not
/// carry a recognized volume extension.
pub fn subject_id(file_name: &str) -> Option<String> {
    let base = file_name
        .strip_suffix(".nii.gz")
        .or_else(|| file_name.strip_suffix(".nii"))?;
    if base.is_empty() {
        return None;
    }
    match base.rsplit_once('-') {
        Some((head, tail))
            if !head.is_empty() && tail.chars().any(|c| c.is_ascii_alphabetic()) =>
        {
            Some(head.to_string())
        }
        _ => Some(base.to_string()),
    }
}

/// All volume files in `dir`, keyed by subject id, sorted by id. Two
/// files mapping to the same subject is an input error.
pub fn subjects_in(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut out: BTreeMap<String, PathBuf> = BTreeMap::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(id) = subject_id(name) else { continue };
        let path = entry.path();
        if let Some(previous) = out.insert(id.clone(), path.clone()) {
            return Err(Error::Config(format!(
                "subject {id:?} appears twice in {}: {} and {}",
                dir.display(),
                previous.display(),
                path.display()
            )));
        }
    }
    Ok(out)
}

/// Pair subjects across the two directories; any id present on one
/// side only is an input error listing every unmatched subject.
pub fn pair_directories(
    pred_dir: &Path,
    gt_dir: &Path,
) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let mut preds = subjects_in(pred_dir)?;
    let gts = subjects_in(gt_dir)?;
    let mut pairs = Vec::new();
    let mut missing_pred = Vec::new();
    for (id, gt_path) in gts {
        match preds.remove(&id) {
            Some(pred_path) => pairs.push((id, pred_path, gt_path)),
            None => missing_pred.push(id),
        }
    }
    let missing_gt: Vec<String> = preds.into_keys().collect();
    if !missing_pred.is_empty() || !missing_gt.is_empty() {
        let mut msg = format!(
            "unmatched subjects between {} and {}:",
            pred_dir.display(),
            gt_dir.display()
        );
        if !missing_pred.is_empty() {
            msg.push_str(&format!(" no prediction for [{}];", missing_pred.join(", ")));
        }
        if !missing_gt.is_empty() {
            msg.push_str(&format!(" no ground truth for [{}];", missing_gt.join(", ")));
        }
        return Err(Error::Config(msg.trim_end_matches(';').to_string()));
    }
    if pairs.is_empty() {
        return Err(Error::Config(format!(
            "no volume files found in {} and {}",
            pred_dir.display(),
            gt_dir.display()
        )));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn role_tags_are_dropped_and_numeric_segments_kept() {
        assert_eq!(subject_id("case-0001-seg.nii.gz").as_deref(), Some("case-0001"));
        assert_eq!(subject_id("case-0001-pred.nii").as_deref(), Some("case-0001"));
        assert_eq!(subject_id("case-0001.nii.gz").as_deref(), Some("case-0001"));
        assert_eq!(subject_id("sub-007-000-t1ce.nii.gz").as_deref(), Some("sub-007-000"));
        assert_eq!(subject_id("sub-007-000.nii.gz").as_deref(), Some("sub-007-000"));
        assert_eq!(subject_id("volume.nii").as_deref(), Some("volume"));
        assert_eq!(subject_id("pred-x.nii"), Some("pred".to_string()));
        assert_eq!(subject_id("notes.txt"), None);
        assert_eq!(subject_id(".nii"), None);
    }

    #[test]
    fn pairing_reports_both_directions_of_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let pred = dir.path().join("pred");
        let gt = dir.path().join("gt");
        std::fs::create_dir_all(&pred).unwrap();
        std::fs::create_dir_all(&gt).unwrap();
        for name in ["a-pred.nii", "b-pred.nii"] {
            std::fs::write(pred.join(name), b"x").unwrap();
        }
        for name in ["b-seg.nii", "c-seg.nii"] {
            std::fs::write(gt.join(name), b"x").unwrap();
        }
        let err = pair_directories(&pred, &gt).unwrap_err();
        assert!(err.is_input_error());
        let msg = err.to_string();
        assert!(msg.contains("no prediction for [c]"), "{msg}");
        assert!(msg.contains("no ground truth for [a]"), "{msg}");
        let listed: Vec<&str> =
            msg.split('[').skip(1).filter_map(|s| s.split(']').next()).collect();
        assert!(
            listed.iter().all(|l| !l.contains('b')),
            "matched subject listed: {msg}"
        );
    }

    #[test]
    fn duplicate_subjects_in_one_directory_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a-seg.nii"), b"x").unwrap();
        std::fs::write(dir.path().join("a-pred.nii"), b"x").unwrap();
        let err = subjects_in(dir.path()).unwrap_err();
        assert!(err.to_string().contains("appears twice"), "{err}");
    }

    #[test]
    fn matched_directories_pair_in_sorted_order() {
        let dir = tempfile::tempdir().unwrap();
        let pred = dir.path().join("pred");
        let gt = dir.path().join("gt");
        std::fs::create_dir_all(&pred).unwrap();
        std::fs::create_dir_all(&gt).unwrap();
        for name in ["z-pred.nii", "a-pred.nii"] {
            std::fs::write(pred.join(name), b"x").unwrap();
        }
        for name in ["z.nii", "a-seg.nii.gz"] {
            std::fs::write(gt.join(name), b"x").unwrap();
        }
        let pairs = pair_directories(&pred, &gt).unwrap();
        let ids: Vec<&str> = pairs.iter().map(|(id, _, _)| id.as_str()).collect();
        assert_eq!(ids, ["a", "z"]);
    }
}
