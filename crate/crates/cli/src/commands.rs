//! Subcommand implementations. Each resolves its parameters through
//! the layered config, delegates the actual work to the library, and
//! keeps all printing ordered and single-threaded so deterministic mode
//! yields byte-identical output at any parallelism degree.

use std::path::{Path, PathBuf};

use voxelseg::labels::labels_to_regions;
use voxelseg::losses::compound_loss;
use voxelseg::metrics::evaluate_case;
use voxelseg::nifti::{
    read_label_nifti, read_region_probs, read_scalar_nifti, write_label_nifti,
    write_scalar_nifti,
};
use voxelseg::postprocess::{clean_ground_truth, postprocess_prediction};
use voxelseg::preprocess::{brain_mask, masked_stats, run_plan, MaskedStats};
use voxelseg::{Error, Result};

use crate::config::FileConfig;
use crate::pairing::pair_directories;
use crate::report;
use crate::{
    CleanGtArgs, EvaluateArgs, LossArgs, PostprocessArgs, PreprocessArgs, ThresholdArgs,
};

/// Apply `f` to every item, concurrently when built with the
/// `parallel` feature, preserving item order in the result.
#[cfg(feature = "parallel")]
fn run_all<I, O, F>(items: Vec<I>, f: F) -> Result<Vec<O>>
where
    I: Send,
    O: Send,
    F: Fn(I) -> Result<O> + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_all<I, O, F>(items: Vec<I>, f: F) -> Result<Vec<O>>
where
    F: Fn(I) -> Result<O>,
{
    items.into_iter().map(f).collect()
}

/// Volume files directly inside `dir`, sorted by file name.
fn volume_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if name.ends_with(".nii") || name.ends_with(".nii.gz") {
            out.push((name.to_string(), entry.path()));
        }
    }
    if out.is_empty() {
        return Err(Error::Config(format!("no volume files in {}", dir.display())));
    }
    out.sort();
    Ok(out)
}

fn print_stats(name: &str, s: &MaskedStats) {
    println!(
        "{name}: voxels={} mean={} std={} p2={} p98={}",
        s.count, s.mean, s.std, s.p2, s.p98
    );
}

pub fn preprocess(cfg: &FileConfig, args: PreprocessArgs) -> Result<()> {
    let input = cfg.input(args.input)?;
    let output = cfg.output(args.output)?;
    let plan = cfg.plan(args.plan.as_deref())?;

    let process = |src: &Path, dst: &Path| -> Result<MaskedStats> {
        let vol = read_scalar_nifti(src)?;
        let mask = brain_mask(&vol);
        let out = run_plan(&plan, &vol)?;
        let stats = masked_stats(&out, &mask)?;
        write_scalar_nifti(&out, dst)?;
        Ok(stats)
    };

    if input.is_dir() {
        std::fs::create_dir_all(&output)
            .map_err(|e| Error::Io(format!("{}: {e}", output.display())))?;
        let files = volume_files(&input)?;
        let stats = run_all(files, |(name, path)| {
            let stats = process(&path, &output.join(&name))?;
            Ok((name, stats))
        })?;
        for (name, s) in &stats {
            print_stats(name, s);
        }
    } else {
        let stats = process(&input, &output)?;
        let name = input
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("volume")
            .to_string();
        print_stats(&name, &stats);
    }
    Ok(())
}

pub fn threshold(cfg: &FileConfig, args: ThresholdArgs) -> Result<()> {
    let input = cfg.input(args.input)?;
    let output = cfg.output(args.output)?;
    let th = cfg.thresholds(args.wt, args.tc, args.et)?;
    let probs = read_region_probs(&input)?;
    let labels = voxelseg::labels::threshold_cascade(&probs, th)?;
    write_label_nifti(&labels, &output)
}

pub fn postprocess(cfg: &FileConfig, args: PostprocessArgs) -> Result<()> {
    let input = cfg.input(args.input)?;
    let output = cfg.output(args.output)?;
    let params =
        cfg.postprocess_params(args.dust_max, args.fg_connectivity, args.hole_connectivity)?;
    let labels = read_label_nifti(&input)?;
    let cleaned = postprocess_prediction(&labels, &params);
    write_label_nifti(&cleaned, &output)
}

pub fn clean_gt(cfg: &FileConfig, args: CleanGtArgs) -> Result<()> {
    let input = cfg.input(args.input)?;
    let output = cfg.output(args.output)?;
    let params = cfg.postprocess_params(args.dust_max, None, None)?;
    let iters = cfg.clean_gt_dilation(args.dilation_iters);
    let labels = read_label_nifti(&input)?;
    let cleaned = clean_ground_truth(&labels, &params, iters)?;
    write_label_nifti(&cleaned, &output)
}

pub fn loss(cfg: &FileConfig, args: LossArgs) -> Result<()> {
    let pred_path = cfg.pred(args.pred)?;
    let gt_path = cfg.gt(args.gt)?;
    let spec = cfg.loss_spec(args.spec.as_deref(), args.focal_gamma)?;
    let probs = read_region_probs(&pred_path)?;
    let gt = labels_to_regions(&read_label_nifti(&gt_path)?);
    let result = compound_loss(&spec, &probs, &gt)?;
    println!("loss = {}", result.value);
    if let Some(prefix) = args.grad_out {
        for (suffix, grad) in ["et", "tc", "wt"].iter().zip(&result.gradients) {
            let path = PathBuf::from(format!("{}-{suffix}.nii.gz", prefix.display()));
            write_scalar_nifti(grad, &path)?;
        }
    }
    Ok(())
}

pub fn evaluate(cfg: &FileConfig, args: EvaluateArgs) -> Result<()> {
    let pred_dir = cfg.pred(args.pred)?;
    let gt_dir = cfg.gt(args.gt)?;
    let csv_path = cfg.csv(args.csv)?;
    let json_path = cfg.json(args.json);
    let params = cfg.lesion_params(
        args.dilation_iters,
        args.gt_min_size,
        args.fp_penalty,
        args.fn_penalty,
    )?;

    let pairs = pair_directories(&pred_dir, &gt_dir)?;
    let reports = run_all(pairs, |(subject, pred_path, gt_path)| {
        let pred = read_label_nifti(&pred_path)?;
        let gt = read_label_nifti(&gt_path)?;
        if pred.spacing() != gt.spacing() {
            return Err(Error::Config(format!(
                "subject {subject}: voxel spacing differs between prediction {:?} and ground truth {:?}",
                pred.spacing(),
                gt.spacing()
            )));
        }
        let report = evaluate_case(&pred, &gt, &params, gt.spacing())?;
        Ok((subject, report))
    })?;

    let csv = report::csv_document(&reports);
    std::fs::write(&csv_path, &csv)
        .map_err(|e| Error::Io(format!("{}: {e}", csv_path.display())))?;
    if let Some(path) = json_path {
        let json = report::json_document(&reports);
        std::fs::write(&path, json)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    println!("wrote {} ({} subjects)", csv_path.display(), reports.len());
    Ok(())
}
