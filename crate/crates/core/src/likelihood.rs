//! Breslow partial log-likelihood for counting-process data and its gradient.
//!
//! The loss minimized by the solver is the negative log partial likelihood
//! divided by the number of rows, so that penalty strengths are comparable
//! across sample sizes. [`LikelihoodContext::log_partial_likelihood`] gives
//! the unscaled value used by cross-validation.

use ndarray::{Array1, Array2, ArrayView1, ShapeBuilder};

use crate::error::{CoxError, Result};
use crate::survdata::{build_risk_index, standardize, Dataset, RiskIndex, ScalingInfo};

/// Largest spread of the linear predictor for which a single shift is used;
/// `exp(-500)` is still a normal double with ample headroom.
const GLOBAL_SHIFT_SPREAD: f64 = 500.0;

/// Everything needed to evaluate the loss for one dataset.
///
/// `x` holds the retained (and usually standardized) covariates in
/// column-major order; `scaling` maps coefficients back to the raw columns.
#[derive(Debug, Clone)]
pub struct LikelihoodContext {
    x: Array2<f64>,
    t_start: Vec<f64>,
    t_stop: Vec<f64>,
    status: Vec<bool>,
    risk: RiskIndex,
    scaling: ScalingInfo,
}

impl LikelihoodContext {
    /// Context over raw covariates.
    pub fn new(d: &Dataset) -> Result<Self> {
        Self::with_scaling(d, ScalingInfo::identity(d.n_covariates()))
    }

    /// Context over covariates standardized with the dataset's own statistics.
    pub fn standardized(d: &Dataset) -> Result<Self> {
        let (_, info) = standardize(d);
        Self::with_scaling(d, info)
    }

    /// Context over covariates transformed by an existing scaling.
    pub fn with_scaling(d: &Dataset, scaling: ScalingInfo) -> Result<Self> {
        scaling.validate()?;
        let z = scaling.apply(d)?;
        let risk = build_risk_index(&z)?;
        let (n, p) = (z.n_rows(), z.n_covariates());
        let recs = z.records();
        let x = Array2::from_shape_fn((n, p).f(), |(i, j)| recs[i].covariates[j]);
        Ok(Self {
            x,
            t_start: recs.iter().map(|r| r.t_start).collect(),
            t_stop: recs.iter().map(|r| r.t_stop).collect(),
            status: recs.iter().map(|r| r.status).collect(),
            risk,
            scaling,
        })
    }

    /// Context from explicit arrays, with identity scaling.
    pub fn from_parts(
        x: Array2<f64>,
        t_start: Vec<f64>,
        t_stop: Vec<f64>,
        status: Vec<bool>,
    ) -> Result<Self> {
        let n = x.nrows();
        for len in [t_start.len(), t_stop.len(), status.len()] {
            if len != n {
                return Err(CoxError::DimensionMismatch { expected: n, got: len });
            }
        }
        let risk = RiskIndex::from_intervals(&t_start, &t_stop, &status)?;
        let mut xf = Array2::zeros(x.raw_dim().f());
        xf.assign(&x);
        let p = x.ncols();
        Ok(Self {
            x: xf,
            t_start,
            t_stop,
            status,
            risk,
            scaling: ScalingInfo::identity(p),
        })
    }

    /// Context restricted to the given rows (same scaling).
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let p = self.n_covariates();
        let mut x = Array2::zeros((rows.len(), p).f());
        for (k, &i) in rows.iter().enumerate() {
            x.row_mut(k).assign(&self.x.row(i));
        }
        let t_start: Vec<f64> = rows.iter().map(|&i| self.t_start[i]).collect();
        let t_stop: Vec<f64> = rows.iter().map(|&i| self.t_stop[i]).collect();
        let status: Vec<bool> = rows.iter().map(|&i| self.status[i]).collect();
        let risk = RiskIndex::from_intervals(&t_start, &t_stop, &status)?;
        Ok(Self {
            x,
            t_start,
            t_stop,
            status,
            risk,
            scaling: self.scaling.clone(),
        })
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn risk_index(&self) -> &RiskIndex {
        &self.risk
    }

    pub fn scaling(&self) -> &ScalingInfo {
        &self.scaling
    }

    pub fn t_start(&self) -> &[f64] {
        &self.t_start
    }

    pub fn t_stop(&self) -> &[f64] {
        &self.t_stop
    }

    pub fn status(&self) -> &[bool] {
        &self.status
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_events(&self) -> usize {
        self.status.iter().filter(|&&s| s).count()
    }

    /// `X beta`, skipping zero coefficients when beta is sparse.
    pub fn linear_predictor(&self, beta: ArrayView1<f64>) -> Array1<f64> {
        let nnz = beta.iter().filter(|&&b| b != 0.0).count();
        if 4 * nnz < self.n_covariates() {
            let mut eta = Array1::zeros(self.n_rows());
            for (j, &b) in beta.iter().enumerate() {
                if b != 0.0 {
                    eta.scaled_add(b, &self.x.column(j));
                }
            }
            eta
        } else {
            self.x.dot(&beta)
        }
    }

    fn check_beta(&self, beta: ArrayView1<f64>) -> Result<()> {
        if beta.len() != self.n_covariates() {
            return Err(CoxError::DimensionMismatch {
                expected: self.n_covariates(),
                got: beta.len(),
            });
        }
        Ok(())
    }

    /// Unscaled log partial likelihood `l(beta)` (Breslow ties).
    pub fn log_partial_likelihood(&self, beta: ArrayView1<f64>) -> Result<f64> {
        self.check_beta(beta)?;
        let eta = self.linear_predictor(beta);
        self.eval(&eta, None)
    }

    /// Negative log partial likelihood and its gradient, both scaled by `1/n_rows`.
    pub fn value_and_gradient(&self, beta: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        self.check_beta(beta)?;
        let eta = self.linear_predictor(beta);
        let mut resid = Array1::zeros(self.n_rows());
        let ll = self.eval(&eta, Some(&mut resid))?;
        let n = self.n_rows() as f64;
        let grad = self.x.t().dot(&resid) / -n;
        Ok((-ll / n, grad))
    }

    /// Log-likelihood from the linear predictor; optionally fills the
    /// martingale-type residual `status_j - sum_{i: j in R_i} d_i w_j / S0_i`
    /// whose product with `X` is the score.
    fn eval(&self, eta: &Array1<f64>, mut resid: Option<&mut Array1<f64>>) -> Result<f64> {
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(CoxError::Numeric("non-finite linear predictor".into()));
        }
        if let Some(r) = resid.as_deref_mut() {
            for (rj, &sj) in r.iter_mut().zip(&self.status) {
                *rj = if sj { 1.0 } else { 0.0 };
            }
        }
        let (lo, hi) = eta.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let ll = if hi - lo < GLOBAL_SHIFT_SPREAD {
            self.eval_global_shift(eta, hi, resid)
        } else {
            self.eval_per_set_shift(eta, resid)
        };
        if !ll.is_finite() {
            return Err(CoxError::Numeric("non-finite log partial likelihood".into()));
        }
        Ok(ll)
    }
}

impl LikelihoodContext {
    /// One exponential per row, shifted by the overall maximum. Only used when
    /// the spread of `eta` keeps every weight far from underflow.
    fn eval_global_shift(&self, eta: &Array1<f64>, shift: f64, resid: Option<&mut Array1<f64>>) -> f64 {
        let w: Vec<f64> = eta.iter().map(|&v| (v - shift).exp()).collect();
        let n_times = self.risk.n_event_times();
        let mut ll = 0.0;
        let mut coef = Vec::with_capacity(n_times);
        for i in 0..n_times {
            let d = self.risk.tie_counts[i] as f64;
            let s0: f64 = self.risk.risk_set(i).iter().map(|&j| w[j]).sum();
            let deaths: f64 = self.risk.death_sets[i].iter().map(|&j| eta[j]).sum();
            ll += deaths - d * (shift + s0.ln());
            coef.push(d / s0);
        }
        if let Some(r) = resid {
            for (i, c) in coef.into_iter().enumerate() {
                for &j in self.risk.risk_set(i) {
                    r[j] -= c * w[j];
                }
            }
        }
        ll
    }

    /// Log-sum-exp with a separate shift for every risk set.
    fn eval_per_set_shift(&self, eta: &Array1<f64>, mut resid: Option<&mut Array1<f64>>) -> f64 {
        let mut ll = 0.0;
        for i in 0..self.risk.n_event_times() {
            let rs = self.risk.risk_set(i);
            let d = self.risk.tie_counts[i] as f64;
            let shift = rs.iter().map(|&j| eta[j]).fold(f64::NEG_INFINITY, f64::max);
            let s0: f64 = rs.iter().map(|&j| (eta[j] - shift).exp()).sum();
            let log_s0 = shift + s0.ln();
            let deaths: f64 = self.risk.death_sets[i].iter().map(|&j| eta[j]).sum();
            ll += deaths - d * log_s0;
            if let Some(r) = resid.as_deref_mut() {
                for &j in rs {
                    r[j] -= d * (eta[j] - log_s0).exp();
                }
            }
        }
        ll
    }
}

/// `-l(beta) / n_rows`.
pub fn neg_log_partial_likelihood(beta: ArrayView1<f64>, ctx: &LikelihoodContext) -> Result<f64> {
    Ok(-ctx.log_partial_likelihood(beta)? / ctx.n_rows() as f64)
}

/// Gradient of [`neg_log_partial_likelihood`]; penalty-free.
pub fn gradient(beta: ArrayView1<f64>, ctx: &LikelihoodContext) -> Result<Array1<f64>> {
    Ok(ctx.value_and_gradient(beta)?.1)
}

/// Negative log partial likelihood (scaled by `1/n`) for time-fixed data,
/// where the risk set of an event at `t` is every row with `time >= t`.
///
/// Uses a single sort and running sums instead of a risk index; it agrees
/// with the counting-process evaluation whenever all start times are zero.
pub fn fixed_time_neg_log_likelihood(
    time: &[f64],
    status: &[bool],
    x: &Array2<f64>,
    beta: ArrayView1<f64>,
) -> Result<f64> {
    let n = time.len();
    if x.nrows() != n || status.len() != n {
        return Err(CoxError::DimensionMismatch { expected: n, got: x.nrows() });
    }
    let eta = x.dot(&beta);
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| time[b].total_cmp(&time[a]));

    let mut ll = 0.0;
    let mut running = 0.0;
    let mut k = 0;
    while k < n {
        // a block of equal times enters the risk set together
        let t = time[order[k]];
        let end = k + order[k..].iter().take_while(|&&j| time[j] == t).count();
        for &j in &order[k..end] {
            running += (eta[j] - shift).exp();
        }
        let log_denom = shift + running.ln();
        for &j in order[k..end].iter().filter(|&&j| status[j]) {
            ll += eta[j] - log_denom;
        }
        k = end;
    }
    if !ll.is_finite() {
        return Err(CoxError::Numeric("non-finite log partial likelihood".into()));
    }
    Ok(-ll / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};

    fn nested() -> LikelihoodContext {
        LikelihoodContext::from_parts(
            array![[1.0], [0.0], [-1.0]],
            vec![0.0; 3],
            vec![1.0, 2.0, 3.0],
            vec![true; 3],
        )
        .unwrap()
    }

    #[test]
    fn zero_beta_nested_risk_sets() {
        let ctx = nested();
        let v = neg_log_partial_likelihood(array![0.0].view(), &ctx).unwrap();
        assert_abs_diff_eq!(v, (3f64.ln() + 2f64.ln()) / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_beta_single_tied_time() {
        let ctx = LikelihoodContext::from_parts(
            array![[1.0], [2.0], [3.0]],
            vec![0.0; 3],
            vec![2.0, 2.0, 4.0],
            vec![true, true, false],
        )
        .unwrap();
        let v = neg_log_partial_likelihood(array![0.0].view(), &ctx).unwrap();
        assert_abs_diff_eq!(v, 2.0 * 3f64.ln() / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn symmetric_column_has_zero_gradient_at_zero() {
        // one event time; the death's covariate equals the risk-set mean
        let ctx = LikelihoodContext::from_parts(
            array![[0.0], [-1.0], [1.0]],
            vec![0.0; 3],
            vec![1.0, 2.0, 2.0],
            vec![true, false, false],
        )
        .unwrap();
        let g = gradient(array![0.0].view(), &ctx).unwrap();
        assert_abs_diff_eq!(g[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn large_predictors_stay_finite() {
        let ctx = nested();
        let v = neg_log_partial_likelihood(array![800.0].view(), &ctx).unwrap();
        assert!(v.is_finite());
        let g = gradient(array![800.0].view(), &ctx).unwrap();
        assert!(g[0].is_finite());
    }

    #[test]
    fn rejects_wrong_length() {
        let ctx = nested();
        assert!(matches!(
            ctx.log_partial_likelihood(array![0.0, 1.0].view()),
            Err(CoxError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn fixed_time_path_matches_counting_process() {
        let x = Array2::from_shape_fn((6, 2), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let time = vec![3.0, 1.0, 4.0, 1.0, 5.0, 2.0];
        let status = vec![true, true, false, true, true, false];
        let ctx =
            LikelihoodContext::from_parts(x.clone(), vec![0.0; 6], time.clone(), status.clone())
                .unwrap();
        let beta = array![0.3, -0.7];
        let a = neg_log_partial_likelihood(beta.view(), &ctx).unwrap();
        let b = fixed_time_neg_log_likelihood(&time, &status, &x, beta.view()).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
}
