//! Serialized forms of the command outputs. The layouts are described in
//! `docs/formats.md`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tdcox::survdata::ScalingInfo;

use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KktJson {
    pub ok: bool,
    pub max_violation: f64,
    /// Offending columns, named on the original covariate list.
    pub violations: Vec<KktViolation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KktViolation {
    pub column: String,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitJson {
    pub format_version: u32,
    pub alpha: f64,
    pub lambda: f64,
    pub columns: Vec<String>,
    /// Coefficients on the scale named by `coefficient_scale`.
    pub coefficients: Vec<f64>,
    pub coefficient_scale: String,
    pub coefficients_original: Vec<f64>,
    /// One entry per original column; dropped columns hold 0.
    pub coefficients_standardized: Vec<f64>,
    pub scaling: ScalingInfo,
    pub n_nonzero: usize,
    pub n_covariates: usize,
    pub n_rows: usize,
    pub n_subjects: usize,
    pub n_events: usize,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub kkt: KktJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveJson {
    pub alpha: f64,
    pub lambdas: Vec<f64>,
    /// `null` where no fold could be scored.
    pub mean: Vec<Option<f64>>,
    pub se: Vec<Option<f64>>,
    pub folds_used: usize,
    pub skipped_folds: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvJson {
    pub format_version: u32,
    pub metric: String,
    pub k: usize,
    pub seed: u64,
    pub alphas: Vec<f64>,
    pub lamfract: f64,
    pub nlambda: usize,
    pub lambda_min: f64,
    pub lambda_1se: f64,
    pub alpha_optimal: f64,
    pub surface: Vec<CurveJson>,
    pub warnings: Vec<String>,
    pub refit: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurvJson {
    pub format_version: u32,
    pub times: Vec<f64>,
    pub subjects: Vec<String>,
    /// `subjects.len()` rows of `times.len()` probabilities.
    pub surv: Vec<Vec<f64>>,
    pub average: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcordanceJson {
    pub format_version: u32,
    pub c: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub se: f64,
    pub concordant: u64,
    pub discordant: u64,
    pub tied: u64,
    pub n_rows: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthJson {
    pub format_version: u32,
    pub columns: Vec<String>,
    pub beta_true: Vec<f64>,
    pub n_subjects: usize,
    pub n_rows: usize,
    pub n_events: usize,
    pub config: tdcox::simtdc::SimConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub command: String,
    pub inputs: Vec<String>,
    pub config: Value,
    pub seed: Option<u64>,
    pub versions: Value,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
}

/// Collects the files written by one command.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        let mut f = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        f.write_all(bytes).map_err(|e| CliError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).expect("output types serialize");
        s.push('\n');
        self.write_bytes(name, s.as_bytes())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

/// Float formatting shared by every CSV output: the shortest text that
/// parses back to the same value.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v:?}")
    }
}

pub fn finite_or_none(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().map(|x| x.is_finite().then_some(*x)).collect()
}
