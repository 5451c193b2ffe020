//! K-fold cross-validation over (alpha, lambda) grids.
//!
//! Folds are drawn at the subject level, so every row of a subject lands in
//! the same fold. All folds share the full-data standardization, which keeps
//! coefficients from different folds on one scale and lets the
//! Verweij-van Houwelingen deviance evaluate them against the full data.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{CoxError, Result};
use crate::likelihood::LikelihoodContext;
use crate::predict::concordance;
use crate::solver::{fit_path, lambda_max, make_lambda_grid, LambdaGrid, PathResult, SolverConfig};
use crate::survdata::{Dataset, SurvRecord};

/// Cross-validation score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvMetric {
    /// Deviance contrasting full-data and retained-data likelihoods.
    Vv,
    /// Deviance of the held-out rows alone.
    Basic,
    /// Harrell's C on the held-out rows.
    CIndex,
}

impl CvMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            CvMetric::Vv => "vv",
            CvMetric::Basic => "basic",
            CvMetric::CIndex => "cindex",
        }
    }

    fn higher_is_better(self) -> bool {
        self == CvMetric::CIndex
    }
}

impl fmt::Display for CvMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CvMetric {
    type Err = CoxError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vv" => Ok(CvMetric::Vv),
            "basic" => Ok(CvMetric::Basic),
            "cindex" => Ok(CvMetric::CIndex),
            other => Err(CoxError::InvalidParameter(format!(
                "unknown metric `{other}` (expected vv, basic or cindex)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub subject_fold: BTreeMap<String, usize>,
    /// Fold of each dataset row.
    pub row_fold: Vec<usize>,
}

impl FoldAssignment {
    pub fn rows_in(&self, fold: usize) -> Vec<usize> {
        (0..self.row_fold.len()).filter(|&i| self.row_fold[i] == fold).collect()
    }

    pub fn rows_outside(&self, fold: usize) -> Vec<usize> {
        (0..self.row_fold.len()).filter(|&i| self.row_fold[i] != fold).collect()
    }
}

/// Shuffle subjects with a seeded RNG, separately for subjects with and
/// without an event, then deal them round-robin into `k` folds.
pub fn make_folds(d: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(CoxError::InvalidParameter(format!("need at least 2 folds, got {k}")));
    }
    let subjects = d.subject_ids();
    if k > subjects.len() {
        return Err(CoxError::InvalidParameter(format!(
            "{k} folds requested but only {} subjects",
            subjects.len()
        )));
    }
    let mut has_event: HashMap<&str, bool> = HashMap::new();
    for r in d.records() {
        *has_event.entry(r.subject_id.as_str()).or_default() |= r.status;
    }
    let (mut events, mut censored): (Vec<&str>, Vec<&str>) =
        subjects.iter().partition(|s| has_event[*s]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    events.shuffle(&mut rng);
    censored.shuffle(&mut rng);

    let subject_fold: BTreeMap<String, usize> = events
        .iter()
        .chain(censored.iter())
        .enumerate()
        .map(|(i, s)| (s.to_string(), i % k))
        .collect();
    let row_fold = d
        .records()
        .iter()
        .map(|r| subject_fold[&r.subject_id])
        .collect();
    Ok(FoldAssignment {
        k,
        seed,
        subject_fold,
        row_fold,
    })
}

/// Mean and standard error of a score across folds, per lambda.
#[derive(Debug, Clone, PartialEq)]
pub struct CvCurve {
    pub alpha: f64,
    pub lambdas: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub folds_used: usize,
    pub skipped_folds: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub curves: Vec<CvCurve>,
    pub lambda_min: f64,
    pub lambda_1se: f64,
    pub alpha_optimal: f64,
    pub metric: CvMetric,
    pub refit: Option<PathResult>,
    pub warnings: Vec<String>,
}

impl CvResult {
    pub fn optimal_curve(&self) -> &CvCurve {
        self.curves
            .iter()
            .find(|c| c.alpha == self.alpha_optimal)
            .expect("optimal alpha comes from the curves")
    }
}

/// Deviance contribution of one fold at coefficients fitted without it.
///
/// `Vv`: `-2 (l_full(beta) - l_retained(beta))`. `Basic`: `-2 l_held_out(beta)`.
pub fn fold_deviance(
    full: &LikelihoodContext,
    retained: &LikelihoodContext,
    held_out: Option<&LikelihoodContext>,
    beta: ArrayView1<f64>,
    metric: CvMetric,
) -> Result<f64> {
    match metric {
        CvMetric::Vv => Ok(-2.0 * (full.log_partial_likelihood(beta)? - retained.log_partial_likelihood(beta)?)),
        CvMetric::Basic => {
            let h = held_out.ok_or(CoxError::NoEvents)?;
            Ok(-2.0 * h.log_partial_likelihood(beta)?)
        }
        CvMetric::CIndex => Err(CoxError::InvalidParameter("C-index is not a deviance".into())),
    }
}

/// Per-lambda scores of one fold, or `None` when the fold cannot be scored.
#[allow(clippy::too_many_arguments)]
fn score_fold(
    full: &LikelihoodContext,
    records: &[SurvRecord],
    folds: &FoldAssignment,
    fold: usize,
    alpha: f64,
    grid: &LambdaGrid,
    cfg: &SolverConfig,
    metric: CvMetric,
) -> Result<std::result::Result<Vec<f64>, String>> {
    let retained = match full.subset(&folds.rows_outside(fold)) {
        Ok(c) => c,
        Err(CoxError::NoEvents) => return Ok(Err(format!("fold {fold}: no events in retained data"))),
        Err(e) => return Err(e),
    };
    let test_rows = folds.rows_in(fold);
    let held_out = match metric {
        CvMetric::Basic => match full.subset(&test_rows) {
            Ok(c) => Some(c),
            Err(CoxError::NoEvents) => return Ok(Err(format!("fold {fold}: no events in held-out data"))),
            Err(e) => return Err(e),
        },
        _ => None,
    };
    let path = fit_path(&retained, alpha, grid, cfg)?;
    let mut scores = Vec::with_capacity(grid.values.len());
    for k in 0..grid.values.len() {
        let beta = path.coefs.column(k);
        let s = match metric {
            CvMetric::CIndex => {
                let eta = full.linear_predictor(beta);
                let sc: Vec<f64> = test_rows.iter().map(|&i| eta[i]).collect();
                let outcomes: Vec<SurvRecord> = test_rows.iter().map(|&i| records[i].clone()).collect();
                match concordance(&sc, &outcomes) {
                    Ok(c) => c.c,
                    Err(CoxError::NoComparablePairs) => {
                        return Ok(Err(format!("fold {fold}: no comparable pairs in held-out data")))
                    }
                    Err(e) => return Err(e),
                }
            }
            _ => fold_deviance(full, &retained, held_out.as_ref(), beta, metric)?,
        };
        scores.push(s);
    }
    Ok(Ok(scores))
}

fn summarize(
    alpha: f64,
    grid: &LambdaGrid,
    per_fold: Vec<std::result::Result<Vec<f64>, String>>,
    warnings: &mut Vec<String>,
) -> CvCurve {
    let mut used = Vec::new();
    let mut skipped = Vec::new();
    for (f, r) in per_fold.into_iter().enumerate() {
        match r {
            Ok(v) => used.push(v),
            Err(msg) => {
                log::warn!("alpha {alpha}: {msg}, skipped");
                warnings.push(format!("alpha {alpha}: {msg}"));
                skipped.push(f);
            }
        }
    }
    let n = used.len();
    let n_lambda = grid.values.len();
    let mut mean = vec![f64::NAN; n_lambda];
    let mut se = vec![f64::NAN; n_lambda];
    if n > 0 {
        for k in 0..n_lambda {
            let m = used.iter().map(|v| v[k]).sum::<f64>() / n as f64;
            let var = if n > 1 {
                used.iter().map(|v| (v[k] - m).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            mean[k] = m;
            se[k] = (var / n as f64).sqrt();
        }
    }
    CvCurve {
        alpha,
        lambdas: grid.values.clone(),
        mean,
        se,
        folds_used: n,
        skipped_folds: skipped,
    }
}

fn standardized_context(d: &Dataset) -> Result<LikelihoodContext> {
    LikelihoodContext::standardized(d)
}

fn check_folds(d: &Dataset, folds: &FoldAssignment) -> Result<()> {
    if folds.row_fold.len() != d.n_rows() {
        return Err(CoxError::DimensionMismatch {
            expected: d.n_rows(),
            got: folds.row_fold.len(),
        });
    }
    Ok(())
}

/// Cross-validated partial-likelihood deviance per lambda (`Vv` or `Basic`).
pub fn cv_pld(
    d: &Dataset,
    folds: &FoldAssignment,
    alpha: f64,
    grid: &LambdaGrid,
    cfg: &SolverConfig,
    variant: CvMetric,
) -> Result<CvCurve> {
    if variant == CvMetric::CIndex {
        return Err(CoxError::InvalidParameter("cv_pld takes vv or basic".into()));
    }
    check_folds(d, folds)?;
    let ctx = standardized_context(d)?;
    curve_for_alpha(&ctx, d.records(), folds, alpha, grid, cfg, variant, &mut Vec::new())
}

/// Cross-validated Harrell's C per lambda.
pub fn cv_cindex(
    d: &Dataset,
    folds: &FoldAssignment,
    alpha: f64,
    grid: &LambdaGrid,
    cfg: &SolverConfig,
) -> Result<CvCurve> {
    check_folds(d, folds)?;
    let ctx = standardized_context(d)?;
    curve_for_alpha(&ctx, d.records(), folds, alpha, grid, cfg, CvMetric::CIndex, &mut Vec::new())
}

#[allow(clippy::too_many_arguments)]
fn curve_for_alpha(
    ctx: &LikelihoodContext,
    records: &[SurvRecord],
    folds: &FoldAssignment,
    alpha: f64,
    grid: &LambdaGrid,
    cfg: &SolverConfig,
    metric: CvMetric,
    warnings: &mut Vec<String>,
) -> Result<CvCurve> {
    let per_fold = (0..folds.k)
        .into_par_iter()
        .map(|f| score_fold(ctx, records, folds, f, alpha, grid, cfg, metric))
        .collect::<Result<Vec<_>>>()?;
    let curve = summarize(alpha, grid, per_fold, warnings);
    if curve.folds_used == 0 {
        return Err(CoxError::AllFoldsFailed);
    }
    Ok(curve)
}

#[derive(Debug, Clone)]
pub struct CvOptions {
    pub k: usize,
    pub seed: u64,
    pub metric: CvMetric,
    pub lamfract: f64,
    /// Full grid length before `lamfract` truncation.
    pub nlambda: usize,
    pub epsilon: Option<f64>,
    pub refit: bool,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            k: 10,
            seed: 1,
            metric: CvMetric::Vv,
            lamfract: 1.0,
            nlambda: 100,
            epsilon: None,
            refit: false,
            threads: None,
        }
    }
}

/// Penalty grid for one mixing weight, anchored at its full-data `lambda_max`.
pub fn grid_for_alpha(ctx: &LikelihoodContext, alpha: f64, opts: &CvOptions) -> Result<LambdaGrid> {
    let lmax = lambda_max(ctx, alpha)?;
    make_lambda_grid(lmax, ctx.n_rows(), ctx.n_covariates(), opts.nlambda, opts.lamfract, opts.epsilon)
}

/// Cross-validate every `(alpha, lambda)` pair on one shared fold assignment
/// and pick the best pair.
pub fn cross_validate(d: &Dataset, alphas: &[f64], opts: &CvOptions, cfg: &SolverConfig) -> Result<CvResult> {
    if alphas.is_empty() {
        return Err(CoxError::InvalidParameter("no alpha values supplied".into()));
    }
    if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(CoxError::InvalidParameter(format!("alpha must lie in [0, 1], got {a}")));
    }
    cfg.validate()?;
    let folds = make_folds(d, opts.k, opts.seed)?;
    let ctx = standardized_context(d)?;
    let grids = alphas
        .iter()
        .map(|&a| grid_for_alpha(&ctx, a, opts))
        .collect::<Result<Vec<_>>>()?;

    let run = || -> Result<Vec<_>> {
        let jobs: Vec<(usize, usize)> = (0..alphas.len())
            .flat_map(|a| (0..folds.k).map(move |f| (a, f)))
            .collect();
        jobs.par_iter()
            .map(|&(a, f)| score_fold(&ctx, d.records(), &folds, f, alphas[a], &grids[a], cfg, opts.metric))
            .collect()
    };
    let scored = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CoxError::InvalidParameter(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };

    let mut warnings = Vec::new();
    let mut scored = scored.into_iter();
    let mut curves = Vec::with_capacity(alphas.len());
    for (a, &alpha) in alphas.iter().enumerate() {
        let per_fold: Vec<_> = scored.by_ref().take(folds.k).collect();
        let curve = summarize(alpha, &grids[a], per_fold, &mut warnings);
        if curve.folds_used == 0 {
            warnings.push(format!("alpha {alpha}: every fold failed"));
        }
        curves.push(curve);
    }

    let higher = opts.metric.higher_is_better();
    let mut best: Option<(usize, usize, f64)> = None;
    for (a, c) in curves.iter().enumerate() {
        for (k, &m) in c.mean.iter().enumerate() {
            if m.is_nan() {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, _, b)) => (higher && m > b) || (!higher && m < b),
            };
            if better {
                best = Some((a, k, m));
            }
        }
    }
    let (a_best, k_best, score) = best.ok_or(CoxError::AllFoldsFailed)?;
    let curve = &curves[a_best];
    let se = curve.se[k_best];
    // grid is descending, so the first qualifying index is the largest lambda
    let k_1se = (0..=k_best)
        .find(|&k| {
            let m = curve.mean[k];
            if higher {
                m >= score - se
            } else {
                m <= score + se
            }
        })
        .unwrap_or(k_best);

    let alpha_optimal = alphas[a_best];
    let refit = if opts.refit {
        Some(fit_path(&ctx, alpha_optimal, &grids[a_best], cfg)?)
    } else {
        None
    };
    Ok(CvResult {
        lambda_min: curve.lambdas[k_best],
        lambda_1se: curve.lambdas[k_1se],
        alpha_optimal,
        metric: opts.metric,
        curves,
        refit,
        warnings,
    })
}
