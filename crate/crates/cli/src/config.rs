//! Layered runtime configuration. Every parameter resolves in order:
//! command-line flag, then TOML manifest, then the compiled default.
//! Validation is delegated to the library constructors so the manifest
//! and the flags obey exactly the same invariants.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use voxelseg::labels::Thresholds;
use voxelseg::losses::CompoundLossSpec;
use voxelseg::metrics::LesionMatchParams;
use voxelseg::postprocess::{Connectivity, PostprocessParams};
use voxelseg::preprocess::PreprocessPlan;
use voxelseg::{Error, Result};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    jobs: Option<usize>,
    deterministic: Option<bool>,
    #[serde(default)]
    paths: PathsSection,
    #[serde(default)]
    preprocess: PreprocessSection,
    #[serde(default)]
    thresholds: ThresholdSection,
    #[serde(default)]
    postprocess: PostprocessSection,
    #[serde(default)]
    lesion_match: LesionMatchSection,
    #[serde(default)]
    loss: LossSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathsSection {
    input: Option<PathBuf>,
    output: Option<PathBuf>,
    pred: Option<PathBuf>,
    gt: Option<PathBuf>,
    csv: Option<PathBuf>,
    json: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PreprocessSection {
    plan: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdSection {
    wt: Option<f64>,
    tc: Option<f64>,
    et: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PostprocessSection {
    dust_max: Option<usize>,
    fg_connectivity: Option<u32>,
    hole_connectivity: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LesionMatchSection {
    dilation_iters: Option<usize>,
    gt_min_size: Option<usize>,
    fp_hd95_penalty: Option<f64>,
    fn_hd95_penalty: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossSection {
    spec: Option<String>,
    focal_gamma: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn jobs(&self, flag: Option<usize>) -> Result<Option<usize>> {
        match flag.or(self.jobs) {
            Some(0) => Err(Error::Config("--jobs must be at least 1".into())),
            other => Ok(other),
        }
    }

    pub fn deterministic(&self, flag: Option<bool>) -> bool {
        flag.or(self.deterministic).unwrap_or(true)
    }

    pub fn plan(&self, flag: Option<&str>) -> Result<PreprocessPlan> {
        let text = flag
            .map(str::to_owned)
            .or_else(|| self.preprocess.plan.clone())
            .unwrap_or_else(|| "zscore".into());
        PreprocessPlan::parse(&text)
    }

    pub fn thresholds(
        &self,
        wt: Option<f64>,
        tc: Option<f64>,
        et: Option<f64>,
    ) -> Result<Thresholds> {
        let d = Thresholds::default();
        Thresholds::new(
            wt.or(self.thresholds.wt).unwrap_or(d.wt),
            tc.or(self.thresholds.tc).unwrap_or(d.tc),
            et.or(self.thresholds.et).unwrap_or(d.et),
        )
    }

    pub fn postprocess_params(
        &self,
        dust_max: Option<usize>,
        fg: Option<u32>,
        hole: Option<u32>,
    ) -> Result<PostprocessParams> {
        let d = PostprocessParams::default();
        Ok(PostprocessParams {
            dust_max: dust_max.or(self.postprocess.dust_max).unwrap_or(d.dust_max),
            fg_connectivity: match fg.or(self.postprocess.fg_connectivity) {
                Some(n) => Connectivity::from_count(n)?,
                None => d.fg_connectivity,
            },
            hole_connectivity: match hole.or(self.postprocess.hole_connectivity) {
                Some(n) => Connectivity::from_count(n)?,
                None => d.hole_connectivity,
            },
        })
    }

    pub fn lesion_params(
        &self,
        dilation_iters: Option<usize>,
        gt_min_size: Option<usize>,
        fp_penalty: Option<f64>,
        fn_penalty: Option<f64>,
    ) -> Result<LesionMatchParams> {
        let d = LesionMatchParams::default();
        let s = &self.lesion_match;
        let params = LesionMatchParams {
            dilation_iters: dilation_iters.or(s.dilation_iters).unwrap_or(d.dilation_iters),
            gt_min_size: gt_min_size.or(s.gt_min_size).unwrap_or(d.gt_min_size),
            fp_hd95_penalty: fp_penalty.or(s.fp_hd95_penalty).unwrap_or(d.fp_hd95_penalty),
            fn_hd95_penalty: fn_penalty.or(s.fn_hd95_penalty).unwrap_or(d.fn_hd95_penalty),
        };
        params.validate()?;
        Ok(params)
    }

    /// Lesion-grouping dilation for `clean-gt`, shared with the lesion
    /// matcher's default.
    pub fn clean_gt_dilation(&self, flag: Option<usize>) -> usize {
        flag.or(self.lesion_match.dilation_iters)
            .unwrap_or_else(|| LesionMatchParams::default().dilation_iters)
    }

    pub fn loss_spec(&self, flag: Option<&str>, gamma: Option<f64>) -> Result<CompoundLossSpec> {
        let text = flag
            .map(str::to_owned)
            .or_else(|| self.loss.spec.clone())
            .unwrap_or_else(|| "combo2".into());
        let parsed = CompoundLossSpec::parse(&text)?;
        match gamma.or(self.loss.focal_gamma) {
            Some(g) => CompoundLossSpec::new(parsed.terms().to_vec(), g),
            None => Ok(parsed),
        }
    }

    fn required(
        flag: Option<PathBuf>,
        file: &Option<PathBuf>,
        what: &str,
    ) -> Result<PathBuf> {
        flag.or_else(|| file.clone())
            .ok_or_else(|| Error::Config(format!("missing {what}: pass it on the command line or set it in the config file")))
    }

    pub fn input(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        Self::required(flag, &self.paths.input, "input path")
    }

    pub fn output(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        Self::required(flag, &self.paths.output, "output path")
    }

    pub fn pred(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        Self::required(flag, &self.paths.pred, "--pred path")
    }

    pub fn gt(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        Self::required(flag, &self.paths.gt, "--gt path")
    }

    pub fn csv(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        Self::required(flag, &self.paths.csv, "--csv path")
    }

    pub fn json(&self, flag: Option<PathBuf>) -> Option<PathBuf> {
        flag.or_else(|| self.paths.json.clone())
    }
}
