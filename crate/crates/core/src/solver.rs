//! Proximal gradient descent for the elastic-net penalized Cox objective.
//!
//! The objective is split into a smooth part (scaled negative log partial
//! likelihood plus the ridge term) and the l1 term, which is handled by soft
//! thresholding. Step sizes come from the Barzilai-Borwein (BB1) rule and are
//! backtracked until a sufficient-decrease condition holds, so the objective
//! never increases between accepted iterates.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{CoxError, Result};
use crate::likelihood::LikelihoodContext;
use crate::penalty::{prox, PenaltyParams};
use crate::survdata::unstandardize_coefs;

/// Smallest mixing weight used when computing `lambda_max` for ridge fits.
pub const ALPHA_FLOOR: f64 = 0.001;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Bound on `max |delta beta| / max(1, max |beta|)` that ends iteration.
    pub tol: f64,
    pub kkt_tol: f64,
    /// Factor applied to the step on each failed sufficient-decrease test.
    pub backtrack: f64,
    pub armijo: f64,
    pub step_init: f64,
    pub step_min: f64,
    pub step_max: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-7,
            kkt_tol: 1e-4,
            backtrack: 0.5,
            armijo: 1e-4,
            step_init: 1.0,
            step_min: 1e-10,
            step_max: 1e10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.tol,
            self.kkt_tol,
            self.backtrack,
            self.armijo,
            self.step_init,
            self.step_min,
            self.step_max,
        ];
        if positive.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(CoxError::InvalidParameter("solver settings must be positive".into()));
        }
        if self.max_iter == 0 || self.tol >= 1.0 || self.backtrack >= 1.0 || self.armijo >= 1.0 {
            return Err(CoxError::InvalidParameter(
                "need max_iter >= 1 and tol, backtrack, armijo below 1".into(),
            ));
        }
        if self.step_min > self.step_max {
            return Err(CoxError::InvalidParameter("step_min exceeds step_max".into()));
        }
        Ok(())
    }
}

/// Per-coordinate optimality residuals of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// Coordinates whose residual exceeds the tolerance, with that residual.
    pub violations: Vec<(usize, f64)>,
    pub max_violation: f64,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Coefficients on the fitting (usually standardized) scale.
    pub beta: Array1<f64>,
    /// Coefficients for the raw covariate columns.
    pub beta_original: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt: KktReport,
    pub kkt_ok: bool,
    pub params: PenaltyParams,
    pub n_nonzero: usize,
}

impl FitResult {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the starting value")
    }
}

/// Smallest `lambda` at which the all-zero coefficient vector is optimal
/// for mixing weight `alpha` (ridge fits use [`ALPHA_FLOOR`]).
pub fn lambda_max(ctx: &LikelihoodContext, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(CoxError::InvalidParameter(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let zero = Array1::zeros(ctx.n_covariates());
    let (_, grad) = ctx.value_and_gradient(zero.view())?;
    let max_abs = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    Ok(max_abs / alpha.max(ALPHA_FLOOR))
}

/// Geometric sequence of penalty strengths, largest first.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    pub values: Vec<f64>,
    pub lambda_max: f64,
    pub epsilon: f64,
    pub m: usize,
    pub lamfract: f64,
}

/// `lmax * epsilon^(i / (m - 1))` for the first `ceil(lamfract * m)` indices.
///
/// `epsilon` defaults to `1e-4` when `n_rows >= p` and `1e-2` otherwise.
pub fn make_lambda_grid(
    lmax: f64,
    n_rows: usize,
    p: usize,
    m: usize,
    lamfract: f64,
    epsilon_override: Option<f64>,
) -> Result<LambdaGrid> {
    if !lmax.is_finite() || lmax <= 0.0 {
        return Err(CoxError::InvalidParameter(format!("lambda_max must be positive, got {lmax}")));
    }
    if !(lamfract > 0.0 && lamfract <= 1.0) {
        return Err(CoxError::InvalidParameter(format!("lamfract must lie in (0, 1], got {lamfract}")));
    }
    if m == 0 {
        return Err(CoxError::InvalidParameter("grid needs at least one value".into()));
    }
    let epsilon = match epsilon_override {
        Some(e) if e > 0.0 && e < 1.0 => e,
        Some(e) => return Err(CoxError::InvalidParameter(format!("epsilon must lie in (0, 1), got {e}"))),
        None if n_rows >= p => 1e-4,
        None => 1e-2,
    };
    // guard against lamfract * m landing a hair above an integer
    let keep = ((lamfract * m as f64) - 1e-9).ceil().max(1.0) as usize;
    let values = (0..keep.min(m))
        .map(|i| {
            if m == 1 {
                lmax
            } else {
                lmax * epsilon.powf(i as f64 / (m - 1) as f64)
            }
        })
        .collect();
    Ok(LambdaGrid {
        values,
        lambda_max: lmax,
        epsilon,
        m,
        lamfract,
    })
}

struct Smooth<'a> {
    ctx: &'a LikelihoodContext,
    ridge: f64,
}

impl Smooth<'_> {
    fn eval(&self, beta: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        let (nll, mut grad) = self.ctx.value_and_gradient(beta)?;
        if self.ridge == 0.0 {
            return Ok((nll, grad));
        }
        grad.scaled_add(self.ridge, &beta);
        let sq: f64 = beta.iter().map(|b| b * b).sum();
        Ok((nll + 0.5 * self.ridge * sq, grad))
    }
}

fn l1_part(beta: ArrayView1<f64>, p: PenaltyParams) -> f64 {
    p.lambda * p.alpha * beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn max_abs(v: ArrayView1<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Minimize the penalized objective from `init` (zeros when absent).
pub fn fit(
    ctx: &LikelihoodContext,
    params: PenaltyParams,
    cfg: &SolverConfig,
    init: Option<ArrayView1<f64>>,
) -> Result<FitResult> {
    cfg.validate()?;
    let params = PenaltyParams::new(params.alpha, params.lambda)?;
    let p = ctx.n_covariates();
    let mut beta = match init {
        Some(b) if b.len() != p => return Err(CoxError::DimensionMismatch { expected: p, got: b.len() }),
        Some(b) => b.to_owned(),
        None => Array1::zeros(p),
    };
    let smooth = Smooth {
        ctx,
        ridge: params.ridge_weight(),
    };

    let (g0, mut grad) = smooth.eval(beta.view())?;
    let mut obj = g0 + l1_part(beta.view(), params);
    let mut trace = vec![obj];
    let mut gamma = cfg.step_init.clamp(cfg.step_min, cfg.step_max);
    let mut converged = false;
    let mut iterations = 0;

    'outer: for it in 1..=cfg.max_iter {
        iterations = it;
        let mut step = gamma;
        loop {
            let mut v = beta.clone();
            v.scaled_add(-step, &grad);
            let cand = prox(v.view(), step, params);
            let diff = &cand - &beta;
            let rel = max_abs(diff.view()) / max_abs(beta.view()).max(1.0);

            let evaluated = match smooth.eval(cand.view()) {
                Ok(r) => Some(r),
                // overflow on an overly long step: treat as a failed decrease test
                Err(CoxError::Numeric(_)) => None,
                Err(e) => return Err(e),
            };
            if let Some((c_val, c_grad)) = evaluated {
                let c_obj = c_val + l1_part(cand.view(), params);
                if rel < cfg.tol {
                    if c_obj <= obj {
                        beta = cand;
                        obj = c_obj;
                        trace.push(obj);
                    }
                    converged = true;
                    break 'outer;
                }
                let sq: f64 = diff.iter().map(|d| d * d).sum();
                if c_obj <= obj - cfg.armijo / (2.0 * step) * sq {
                    let s_dot_y: f64 = diff.iter().zip(c_grad.iter().zip(grad.iter())).map(|(s, (a, b))| s * (a - b)).sum();
                    gamma = if s_dot_y > 0.0 { sq / s_dot_y } else { step };
                    gamma = gamma.clamp(cfg.step_min, cfg.step_max);
                    beta = cand;
                    grad = c_grad;
                    obj = c_obj;
                    trace.push(obj);
                    break;
                }
            }
            step *= cfg.backtrack;
            if step < cfg.step_min {
                log::debug!("step size fell below {} at iteration {it}", cfg.step_min);
                break 'outer;
            }
        }
    }

    let kkt = kkt_residuals(ctx, beta.view(), params, cfg.kkt_tol)?;
    let beta_original = unstandardize_coefs(&beta.to_vec(), ctx.scaling())?;
    let n_nonzero = beta.iter().filter(|&&b| b != 0.0).count();
    Ok(FitResult {
        kkt_ok: kkt.ok,
        kkt,
        beta,
        beta_original,
        objective_trace: trace,
        iterations,
        converged,
        params,
        n_nonzero,
    })
}

/// Check the subgradient optimality conditions of a finished fit.
pub fn kkt_check(fit: &FitResult, ctx: &LikelihoodContext, kkt_tol: f64) -> Result<KktReport> {
    kkt_residuals(ctx, fit.beta.view(), fit.params, kkt_tol)
}

fn kkt_residuals(
    ctx: &LikelihoodContext,
    beta: ArrayView1<f64>,
    params: PenaltyParams,
    kkt_tol: f64,
) -> Result<KktReport> {
    let (_, mut grad) = ctx.value_and_gradient(beta)?;
    grad.scaled_add(params.ridge_weight(), &beta);
    let l1 = params.lambda * params.alpha;
    let mut violations = Vec::new();
    let mut max_violation = 0.0f64;
    for (j, (&b, &g)) in beta.iter().zip(grad.iter()).enumerate() {
        let r = if b != 0.0 {
            (g + l1 * b.signum()).abs()
        } else {
            (g.abs() - l1).max(0.0)
        };
        max_violation = max_violation.max(r);
        if r > kkt_tol {
            violations.push((j, r));
        }
    }
    Ok(KktReport {
        ok: violations.is_empty(),
        violations,
        max_violation,
    })
}

/// Solutions along a penalty grid for one mixing weight.
#[derive(Debug, Clone)]
pub struct PathResult {
    pub alpha: f64,
    pub lambdas: Vec<f64>,
    /// `p x n_lambda` coefficients on the fitting scale.
    pub coefs: Array2<f64>,
    /// Coefficients for the raw covariate columns.
    pub coefs_original: Array2<f64>,
    pub n_nonzero: Vec<usize>,
    pub converged: Vec<bool>,
    pub kkt_ok: Vec<bool>,
    pub iterations: Vec<usize>,
    /// Message for each grid point whose fit failed; its column repeats the
    /// last successful solution.
    pub errors: Vec<Option<String>>,
}

impl PathResult {
    pub fn column(&self, k: usize) -> Array1<f64> {
        self.coefs.column(k).to_owned()
    }
}

/// Fit every grid value from largest to smallest, starting each fit at the
/// previous solution.
pub fn fit_path(
    ctx: &LikelihoodContext,
    alpha: f64,
    grid: &LambdaGrid,
    cfg: &SolverConfig,
) -> Result<PathResult> {
    if grid.values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CoxError::InvalidParameter("lambda grid must be strictly decreasing".into()));
    }
    cfg.validate()?;
    let p = ctx.n_covariates();
    let n_orig = ctx.scaling().n_original();
    let n_lambda = grid.values.len();
    let mut out = PathResult {
        alpha,
        lambdas: grid.values.clone(),
        coefs: Array2::zeros((p, n_lambda)),
        coefs_original: Array2::zeros((n_orig, n_lambda)),
        n_nonzero: Vec::with_capacity(n_lambda),
        converged: Vec::with_capacity(n_lambda),
        kkt_ok: Vec::with_capacity(n_lambda),
        iterations: Vec::with_capacity(n_lambda),
        errors: Vec::with_capacity(n_lambda),
    };
    let mut warm = Array1::zeros(p);
    let mut warm_orig = vec![0.0; n_orig];
    for (k, &lambda) in grid.values.iter().enumerate() {
        let params = PenaltyParams::new(alpha, lambda)?;
        match fit(ctx, params, cfg, Some(warm.view())) {
            Ok(f) => {
                out.n_nonzero.push(f.n_nonzero);
                out.converged.push(f.converged);
                out.kkt_ok.push(f.kkt_ok);
                out.iterations.push(f.iterations);
                out.errors.push(None);
                warm = f.beta;
                warm_orig = f.beta_original;
            }
            Err(e) => {
                log::warn!("fit at lambda {lambda} failed: {e}");
                out.n_nonzero.push(warm.iter().filter(|&&b| b != 0.0).count());
                out.converged.push(false);
                out.kkt_ok.push(false);
                out.iterations.push(0);
                out.errors.push(Some(e.to_string()));
            }
        }
        out.coefs.column_mut(k).assign(&warm);
        out.coefs_original
            .column_mut(k)
            .assign(&ArrayView1::from(&warm_orig[..]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use crate::penalty::elastic_net_penalty;

    fn toy() -> LikelihoodContext {
        LikelihoodContext::from_parts(
            array![[1.0, 0.2], [0.5, -1.0], [-0.3, 0.4], [-1.0, 1.5], [0.0, -0.7]],
            vec![0.0; 5],
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
            vec![true, true, false, true, true],
        )
        .unwrap()
    }

    #[test]
    fn grid_formula() {
        let g = make_lambda_grid(1.0, 10, 2, 5, 1.0, Some(0.01)).unwrap();
        let expected = [1.0, 10f64.powf(-0.5), 0.1, 10f64.powf(-1.5), 0.01];
        for (a, b) in g.values.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn grid_epsilon_defaults() {
        assert_eq!(make_lambda_grid(1.0, 115, 549, 100, 1.0, None).unwrap().epsilon, 0.01);
        assert_eq!(make_lambda_grid(1.0, 203, 13, 100, 1.0, None).unwrap().epsilon, 1e-4);
    }

    #[test]
    fn grid_lamfract() {
        assert_eq!(make_lambda_grid(1.0, 10, 2, 100, 0.8, None).unwrap().values.len(), 80);
        assert_eq!(make_lambda_grid(1.0, 10, 2, 100, 0.6, None).unwrap().values.len(), 60);
        assert_eq!(make_lambda_grid(1.0, 10, 2, 1, 1.0, None).unwrap().values, vec![1.0]);
        assert!(make_lambda_grid(0.0, 10, 2, 5, 1.0, None).is_err());
        assert!(make_lambda_grid(1.0, 10, 2, 5, 0.0, None).is_err());
    }

    #[test]
    fn zero_covariates_give_zero_lambda_max() {
        let ctx = LikelihoodContext::from_parts(
            Array2::zeros((3, 2)),
            vec![0.0; 3],
            vec![1.0, 2.0, 3.0],
            vec![true; 3],
        )
        .unwrap();
        assert_eq!(lambda_max(&ctx, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn lambda_max_is_scaled_gradient_at_zero() {
        let ctx = toy();
        let g = crate::likelihood::gradient(Array1::zeros(2).view(), &ctx).unwrap();
        let m = g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert_abs_diff_eq!(lambda_max(&ctx, 0.5).unwrap(), m / 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(lambda_max(&ctx, 0.0).unwrap(), m / ALPHA_FLOOR, epsilon = 1e-12);
    }

    #[test]
    fn above_lambda_max_is_null_in_one_iteration() {
        let ctx = toy();
        let lmax = lambda_max(&ctx, 0.7).unwrap();
        let f = fit(&ctx, PenaltyParams::new(0.7, lmax * 1.0001).unwrap(), &SolverConfig::default(), None).unwrap();
        assert!(f.beta.iter().all(|&b| b == 0.0));
        assert!(f.converged);
        assert!(f.iterations <= 2);
        assert!(f.kkt_ok);
        assert_eq!(f.n_nonzero, 0);
    }

    #[test]
    fn truncated_fit_reports_kkt_violation() {
        let ctx = toy();
        let lmax = lambda_max(&ctx, 0.5).unwrap();
        let cfg = SolverConfig { max_iter: 1, step_init: 1e-3, ..Default::default() };
        let f = fit(&ctx, PenaltyParams::new(0.5, lmax * 0.01).unwrap(), &cfg, None).unwrap();
        assert!(!f.converged);
        assert!(!f.kkt_ok);
        assert!(!f.kkt.violations.is_empty());
    }

    #[test]
    fn converged_fit_is_monotone_and_optimal() {
        let ctx = toy();
        let lmax = lambda_max(&ctx, 0.5).unwrap();
        let f = fit(&ctx, PenaltyParams::new(0.5, lmax * 0.05).unwrap(), &SolverConfig::default(), None).unwrap();
        assert!(f.converged);
        assert!(f.kkt.max_violation < 1e-4, "{:?}", f.kkt);
        for w in f.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        let direct = crate::likelihood::neg_log_partial_likelihood(f.beta.view(), &ctx).unwrap()
            + elastic_net_penalty(f.beta.view(), f.params);
        assert_abs_diff_eq!(f.objective(), direct, epsilon = 1e-12);
    }

    #[test]
    fn fit_is_deterministic() {
        let ctx = toy();
        let params = PenaltyParams::new(0.3, 0.01).unwrap();
        let a = fit(&ctx, params, &SolverConfig::default(), None).unwrap();
        let b = fit(&ctx, params, &SolverConfig::default(), None).unwrap();
        assert_eq!(a.beta, b.beta);
        assert_eq!(a.objective_trace, b.objective_trace);
    }

    #[test]
    fn path_starts_at_zero_and_rejects_unsorted_grid() {
        let ctx = toy();
        let lmax = lambda_max(&ctx, 1.0).unwrap();
        let grid = make_lambda_grid(lmax, 5, 2, 10, 1.0, Some(0.01)).unwrap();
        let path = fit_path(&ctx, 1.0, &grid, &SolverConfig::default()).unwrap();
        assert!(path.column(0).iter().all(|&b| b == 0.0));
        assert_eq!(path.coefs.ncols(), 10);
        let mut bad = grid.clone();
        bad.values.reverse();
        assert!(fit_path(&ctx, 1.0, &bad, &SolverConfig::default()).is_err());
    }

    #[test]
    fn wrong_init_length() {
        let ctx = toy();
        let init = array![0.0];
        assert!(fit(&ctx, PenaltyParams::new(0.5, 0.1).unwrap(), &SolverConfig::default(), Some(init.view())).is_err());
    }
}
