//! End-to-end behavior of the `voxelseg` binary: exit codes, error
//! messages, golden outputs versus direct library calls, and the
//! config/flag layering.

mod common;

use common::{bin, indicator_probs, run, stderr_of, stdout_of, subject_gt, subject_probs};
use voxelseg::labels::{threshold_cascade, Thresholds};
use voxelseg::nifti::{
    read_label_nifti, read_scalar_nifti, write_label_nifti, write_region_probs,
    write_scalar_nifti,
};
use voxelseg::preprocess::PreprocessPlan;
use voxelseg::volume::{GridShape, LabelVolume, Orientation, ScalarVolume};

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

fn path_str(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_exits_zero_for_every_subcommand() {
    for sub in ["preprocess", "threshold", "postprocess", "clean-gt", "loss", "evaluate"] {
        let out = run(&[sub, "--help"]);
        assert!(out.status.success(), "{sub} --help failed");
        assert!(!out.stdout.is_empty());
    }
    assert!(run(&["--help"]).status.success());
}

#[test]
fn missing_input_file_exits_two_and_names_the_path() {
    let dir = tmp();
    let missing = dir.path().join("does-not-exist.nii");
    let out_path = dir.path().join("out.nii");
    for args in [
        vec!["threshold", path_str(&missing), path_str(&out_path)],
        vec!["preprocess", path_str(&missing), path_str(&out_path)],
        vec!["postprocess", path_str(&missing), path_str(&out_path)],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(stderr_of(&out).contains("does-not-exist.nii"), "{args:?}");
    }
}

#[test]
fn missing_required_path_is_a_usage_error() {
    let out = run(&["threshold"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("input path"));
}

fn sample_scalar() -> ScalarVolume {
    let shape = GridShape::new(8, 8, 8).unwrap();
    let data: Vec<f32> = (0..shape.len())
        .map(|i| {
            if i % 11 == 0 {
                if i % 22 == 0 { 0.0 } else { -0.0 }
            } else {
                40.0 + ((i * 7) % 23) as f32 + if i % 5 == 0 { 1.0e-3 } else { 0.0 }
            }
        })
        .collect();
    ScalarVolume::new(shape, [1.0, 1.0, 2.0], Orientation::default(), data).unwrap()
}

#[test]
fn empty_plan_copies_the_input_through() {
    let dir = tmp();
    let input = dir.path().join("in.nii");
    let output = dir.path().join("out.nii");
    let vol = sample_scalar();
    write_scalar_nifti(&vol, &input).unwrap();
    let out = run(&["preprocess", "--plan", "", path_str(&input), path_str(&output)]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let copied = read_scalar_nifti(&output).unwrap();
    let same = vol
        .data()
        .iter()
        .zip(copied.data())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    assert!(same, "identity copy changed voxel bits");
    assert!(stdout_of(&out).contains("mean="));
}

#[test]
fn preprocess_output_matches_the_library_byte_for_byte() {
    let dir = tmp();
    let input = dir.path().join("in.nii");
    let cli_out = dir.path().join("cli.nii");
    let lib_out = dir.path().join("lib.nii");
    let vol = sample_scalar();
    write_scalar_nifti(&vol, &input).unwrap();

    let out = run(&[
        "preprocess",
        "--plan",
        "zscore,rescale:2:98",
        path_str(&input),
        path_str(&cli_out),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));

    let plan = PreprocessPlan::parse("zscore,rescale:2:98").unwrap();
    let expected = voxelseg::preprocess::run_plan(&plan, &vol).unwrap();
    write_scalar_nifti(&expected, &lib_out).unwrap();
    assert_eq!(
        std::fs::read(&cli_out).unwrap(),
        std::fs::read(&lib_out).unwrap(),
        "binary output differs from direct library output"
    );
}

#[test]
fn threshold_matches_the_library_and_inverts_indicators() {
    let dir = tmp();
    let probs_path = dir.path().join("probs.nii.gz");
    let cli_out = dir.path().join("cli-labels.nii.gz");
    let lib_out = dir.path().join("lib-labels.nii.gz");
    let probs = subject_probs();
    write_region_probs(&probs, &probs_path).unwrap();

    let out = run(&["threshold", path_str(&probs_path), path_str(&cli_out)]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let expected = threshold_cascade(&probs, Thresholds::default()).unwrap();
    write_label_nifti(&expected, &lib_out).unwrap();
    assert_eq!(
        std::fs::read(&cli_out).unwrap(),
        std::fs::read(&lib_out).unwrap()
    );

    // Indicator probabilities of a label volume decode back to it.
    let gt = subject_gt();
    let ind_path = dir.path().join("ind.nii.gz");
    let ind_out = dir.path().join("ind-labels.nii.gz");
    write_region_probs(&indicator_probs(&gt), &ind_path).unwrap();
    let out = run(&["threshold", path_str(&ind_path), path_str(&ind_out)]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert_eq!(read_label_nifti(&ind_out).unwrap().data(), gt.data());
}

#[test]
fn out_of_range_threshold_exits_two() {
    let dir = tmp();
    let probs_path = dir.path().join("probs.nii.gz");
    write_region_probs(&subject_probs(), &probs_path).unwrap();
    let out = run(&[
        "threshold",
        "--wt",
        "1.5",
        path_str(&probs_path),
        path_str(&dir.path().join("out.nii")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("(0, 1)"));
}

#[test]
fn three_dimensional_input_to_threshold_exits_two() {
    let dir = tmp();
    let input = dir.path().join("scalar.nii");
    write_scalar_nifti(&sample_scalar(), &input).unwrap();
    let out = run(&["threshold", path_str(&input), path_str(&dir.path().join("o.nii"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("3 channels"));
}

fn two_blob_labels() -> LabelVolume {
    let shape = GridShape::new(12, 8, 8).unwrap();
    let data: Vec<u8> = (0..shape.len())
        .map(|i| {
            let (x, y, z) = shape.coords(i);
            if x < 6 && y < 6 && z < 6 {
                3 // 216-voxel component: above the dust limit
            } else if x >= 9 && y >= 5 && z >= 5 {
                3 // 27-voxel component: dust
            } else {
                0
            }
        })
        .collect();
    LabelVolume::new(shape, [1.0; 3], Orientation::default(), data).unwrap()
}

#[test]
fn postprocess_removes_dust_components() {
    let dir = tmp();
    let input = dir.path().join("labels.nii");
    let output = dir.path().join("clean.nii");
    write_label_nifti(&two_blob_labels(), &input).unwrap();
    let out = run(&["postprocess", path_str(&input), path_str(&output)]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let cleaned = read_label_nifti(&output).unwrap();
    assert_eq!(cleaned.get(2, 2, 2), 3, "large component must survive");
    assert_eq!(cleaned.get(10, 6, 6), 0, "dust component must be removed");

    // A tighter dust limit keeps the small component.
    let keep = dir.path().join("keep.nii");
    let out =
        run(&["postprocess", "--dust-max", "20", path_str(&input), path_str(&keep)]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert_eq!(read_label_nifti(&keep).unwrap().get(10, 6, 6), 3);
}

#[test]
fn clean_gt_drops_small_lesions() {
    let dir = tmp();
    let input = dir.path().join("gt.nii");
    let output = dir.path().join("gt-clean.nii");
    write_label_nifti(&two_blob_labels(), &input).unwrap();

    // With single-iteration dilation the blobs stay separate lesions,
    // so the 27-voxel one falls under the size limit and is removed.
    let out = run(&[
        "clean-gt",
        "--dilation-iters",
        "1",
        path_str(&input),
        path_str(&output),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let cleaned = read_label_nifti(&output).unwrap();
    assert_eq!(cleaned.get(2, 2, 2), 3);
    assert_eq!(cleaned.get(10, 6, 6), 0);

    // At the default dilation the footprints meet (gap 4 <= 2*3), the
    // blobs count as one 243-voxel lesion, and nothing is removed.
    let merged = dir.path().join("gt-merged.nii");
    let out = run(&["clean-gt", path_str(&input), path_str(&merged)]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert_eq!(read_label_nifti(&merged).unwrap().get(10, 6, 6), 3);
}

#[test]
fn loss_on_identical_pred_and_gt_prints_a_tiny_value() {
    let dir = tmp();
    let gt = subject_gt();
    let probs_path = dir.path().join("probs.nii.gz");
    let gt_path = dir.path().join("gt.nii.gz");
    write_region_probs(&indicator_probs(&gt), &probs_path).unwrap();
    write_label_nifti(&gt, &gt_path).unwrap();
    let out = run(&[
        "loss",
        "--spec",
        "combo2",
        "--pred",
        path_str(&probs_path),
        "--gt",
        path_str(&gt_path),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let text = stdout_of(&out);
    let value: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("loss = "))
        .expect("loss line")
        .trim()
        .parse()
        .expect("numeric loss");
    assert!(value <= 2e-5, "loss {value} on identical pred/gt");
}

#[test]
fn loss_grad_out_writes_three_gradient_volumes() {
    let dir = tmp();
    let gt = subject_gt();
    let probs_path = dir.path().join("probs.nii.gz");
    let gt_path = dir.path().join("gt.nii.gz");
    write_region_probs(&subject_probs(), &probs_path).unwrap();
    write_label_nifti(&gt, &gt_path).unwrap();
    let prefix = dir.path().join("grads");
    let out = run(&[
        "loss",
        "--pred",
        path_str(&probs_path),
        "--gt",
        path_str(&gt_path),
        "--grad-out",
        path_str(&prefix),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    for suffix in ["et", "tc", "wt"] {
        let path = dir.path().join(format!("grads-{suffix}.nii.gz"));
        let grad = read_scalar_nifti(&path).unwrap();
        assert_eq!(grad.shape(), gt.shape(), "{suffix} gradient shape");
    }
}

#[test]
fn mismatched_directories_exit_two_listing_unmatched_subjects() {
    let dir = tmp();
    let pred_dir = dir.path().join("pred");
    let gt_dir = dir.path().join("gt");
    std::fs::create_dir_all(&pred_dir).unwrap();
    std::fs::create_dir_all(&gt_dir).unwrap();
    let gt = subject_gt();
    write_label_nifti(&gt, pred_dir.join("case-0001-pred.nii")).unwrap();
    write_label_nifti(&gt, gt_dir.join("case-0001-seg.nii")).unwrap();
    write_label_nifti(&gt, gt_dir.join("case-0002-seg.nii")).unwrap();
    let out = run(&[
        "evaluate",
        "--pred",
        path_str(&pred_dir),
        "--gt",
        path_str(&gt_dir),
        "--csv",
        path_str(&dir.path().join("eval.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("case-0002"), "{}", stderr_of(&out));
}

#[test]
fn evaluate_writes_csv_and_json_reports() {
    let dir = tmp();
    let pred_dir = dir.path().join("pred");
    let gt_dir = dir.path().join("gt");
    std::fs::create_dir_all(&pred_dir).unwrap();
    std::fs::create_dir_all(&gt_dir).unwrap();
    let gt = subject_gt();
    let decoded = threshold_cascade(&subject_probs(), Thresholds::default()).unwrap();
    write_label_nifti(&decoded, pred_dir.join("case-0001-pred.nii.gz")).unwrap();
    write_label_nifti(&gt, gt_dir.join("case-0001-seg.nii.gz")).unwrap();
    write_label_nifti(&gt, pred_dir.join("case-0002-pred.nii.gz")).unwrap();
    write_label_nifti(&gt, gt_dir.join("case-0002-seg.nii.gz")).unwrap();

    let csv_path = dir.path().join("eval.csv");
    let json_path = dir.path().join("eval.json");
    let out = run(&[
        "evaluate",
        "--pred",
        path_str(&pred_dir),
        "--gt",
        path_str(&gt_dir),
        "--csv",
        path_str(&csv_path),
        "--json",
        path_str(&json_path),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(stdout_of(&out).contains("2 subjects"));

    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4, "header, two subjects, cohort mean");
    assert!(lines[0].starts_with("subject,et_lesionwise_dice"));
    assert!(lines[1].starts_with("case-0001,"));
    assert!(lines[3].starts_with("cohort_mean,"));
    // The identical pair scores perfect lesion-wise Dice 1 / HD95 0.
    let perfect: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(perfect[0], "case-0002");
    assert_eq!(&perfect[1..5], &["1", "0", "1", "0"]);

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(json["subjects"].as_array().unwrap().len(), 2);
    assert_eq!(json["subjects"][1]["et"]["lesionwise_dice"], 1.0);
    assert!(json["cohort_mean"]["mean_legacy_dice"].is_number());
}

#[test]
fn config_file_supplies_defaults_and_flags_override_it() {
    let dir = tmp();
    let shape = GridShape::new(4, 4, 4).unwrap();
    let chan = |v: f32| {
        ScalarVolume::new(shape, [1.0; 3], Orientation::default(), vec![v; shape.len()])
            .unwrap()
    };
    let probs =
        voxelseg::labels::RegionProbs::new(chan(0.875), chan(0.875), chan(0.875)).unwrap();
    let probs_path = dir.path().join("probs.nii");
    write_region_probs(&probs, &probs_path).unwrap();
    let config_path = dir.path().join("run.toml");
    std::fs::write(&config_path, "[thresholds]\nwt = 0.95\n").unwrap();

    // Config alone: 0.875 < 0.95 rejects the whole tumor everywhere.
    let rejected = dir.path().join("rejected.nii");
    let out = run(&[
        "--config",
        path_str(&config_path),
        "threshold",
        path_str(&probs_path),
        path_str(&rejected),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(read_label_nifti(&rejected).unwrap().data().iter().all(|l| *l == 0));

    // Flag overrides the config: 0.875 >= 0.5 passes every gate.
    let accepted = dir.path().join("accepted.nii");
    let out = run(&[
        "--config",
        path_str(&config_path),
        "threshold",
        "--wt",
        "0.5",
        path_str(&probs_path),
        path_str(&accepted),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(read_label_nifti(&accepted).unwrap().data().iter().all(|l| *l == 3));
}

#[test]
fn jobs_and_deterministic_flags_are_accepted() {
    let dir = tmp();
    let probs_path = dir.path().join("probs.nii.gz");
    write_region_probs(&subject_probs(), &probs_path).unwrap();
    let out_path = dir.path().join("labels.nii");
    let out = bin()
        .args([
            "--jobs",
            "2",
            "--deterministic",
            "false",
            "threshold",
            path_str(&probs_path),
            path_str(&out_path),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(out_path.exists());
}
