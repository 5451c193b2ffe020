//! Elastic-net penalty and its proximal operator.

use ndarray::{Array1, ArrayView1};

use crate::error::{CoxError, Result};

/// Mixing weight `alpha` (1 = lasso, 0 = ridge) and overall strength `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams {
    pub alpha: f64,
    pub lambda: f64,
}

impl PenaltyParams {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(CoxError::InvalidParameter(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(CoxError::InvalidParameter(format!(
                "lambda must be finite and non-negative, got {lambda}"
            )));
        }
        Ok(Self { alpha, lambda })
    }

    /// Threshold applied by the proximal step of size `gamma`.
    pub fn l1_threshold(&self, gamma: f64) -> f64 {
        gamma * self.lambda * self.alpha
    }

    /// Weight of the quadratic term, which lives in the smooth part of the objective.
    pub fn ridge_weight(&self) -> f64 {
        self.lambda * (1.0 - self.alpha)
    }
}

/// `lambda * (alpha * |beta|_1 + 0.5 * (1 - alpha) * |beta|_2^2)`.
pub fn elastic_net_penalty(beta: ArrayView1<f64>, p: PenaltyParams) -> f64 {
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    p.lambda * (p.alpha * l1 + 0.5 * (1.0 - p.alpha) * l2)
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x >= t {
        x - t
    } else if x <= -t {
        x + t
    } else {
        0.0
    }
}

/// Proximal map of the l1 part: elementwise soft thresholding at
/// `gamma * lambda * alpha`.
pub fn prox(v: ArrayView1<f64>, gamma: f64, p: PenaltyParams) -> Array1<f64> {
    let t = p.l1_threshold(gamma);
    if t == 0.0 {
        return v.to_owned();
    }
    v.mapv(|x| soft_threshold(x, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn penalty_arithmetic() {
        let b = array![1.0, -2.0];
        let pen = |a| elastic_net_penalty(b.view(), PenaltyParams { alpha: a, lambda: 0.5 });
        assert_abs_diff_eq!(pen(1.0), 1.5);
        assert_abs_diff_eq!(pen(0.0), 1.25);
        assert_abs_diff_eq!(pen(0.5), 1.375);
    }

    #[test]
    fn soft_threshold_branches() {
        assert_eq!(soft_threshold(5.0, 2.0), 3.0);
        assert_eq!(soft_threshold(-1.0, 2.0), 0.0);
        assert_eq!(soft_threshold(-5.0, 2.0), -3.0);
        assert_eq!(soft_threshold(2.0, 2.0), 0.0);
    }

    #[test]
    fn prox_cases() {
        let v = array![0.3, -0.1];
        let ridge = PenaltyParams { alpha: 0.0, lambda: 3.0 };
        assert_eq!(prox(v.view(), 1.0, ridge), v);
        let p = PenaltyParams { alpha: 0.5, lambda: 0.4 };
        let out = prox(v.view(), 1.0, p);
        assert_abs_diff_eq!(out[0], 0.1, epsilon = 1e-15);
        assert_eq!(out[1], 0.0);
    }

    #[test]
    fn validates_params() {
        assert!(PenaltyParams::new(1.5, 1.0).is_err());
        assert!(PenaltyParams::new(0.5, -1.0).is_err());
        assert!(PenaltyParams::new(0.5, f64::NAN).is_err());
        assert!(PenaltyParams::new(0.0, 0.0).is_ok());
    }

    /// Minimize `(1/2g)(b - v)^2 + t|b|` by nested grid search: each level
    /// scans 2001 nodes around the previous best.
    fn grid_argmin(v: f64, gamma: f64, t: f64) -> f64 {
        let f = |b: f64| (b - v).powi(2) / (2.0 * gamma) + t * b.abs();
        let (mut center, mut half) = (0.0, v.abs() + 1.0);
        for _ in 0..4 {
            let h = half / 1000.0;
            let mut best = (f64::INFINITY, center);
            for k in -1000..=1000 {
                let b = center + k as f64 * h;
                let fb = f(b);
                if fb < best.0 {
                    best = (fb, b);
                }
            }
            center = best.1;
            half = 2.0 * h;
        }
        // the kink at 0 is not necessarily a grid node
        if f(0.0) <= f(center) {
            0.0
        } else {
            center
        }
    }

    proptest! {
        #[test]
        fn prox_matches_grid_search(v in -3.0f64..3.0, gamma in 0.1f64..2.0, lam in 0.0f64..2.0, alpha in 0.0f64..=1.0) {
            let p = PenaltyParams { alpha, lambda: lam };
            let out = prox(array![v].view(), gamma, p)[0];
            let oracle = grid_argmin(v, gamma, lam * alpha);
            prop_assert!((out - oracle).abs() < 1e-6, "prox {out} vs grid {oracle}");
        }

        #[test]
        fn prox_is_non_expansive(u in proptest::collection::vec(-5.0f64..5.0, 6),
                                 w in proptest::collection::vec(-5.0f64..5.0, 6),
                                 thr in 0.0f64..3.0) {
            let p = PenaltyParams { alpha: 1.0, lambda: thr };
            let (u, w) = (Array1::from(u), Array1::from(w));
            let d_out = (&prox(u.view(), 1.0, p) - &prox(w.view(), 1.0, p)).mapv(|x| x * x).sum().sqrt();
            let d_in = (&u - &w).mapv(|x| x * x).sum().sqrt();
            prop_assert!(d_out <= d_in + 1e-12);
        }

        #[test]
        fn survivors_exceed_threshold(v in proptest::collection::vec(-5.0f64..5.0, 8), thr in 0.0f64..3.0) {
            let p = PenaltyParams { alpha: 1.0, lambda: thr };
            let v = Array1::from(v);
            let out = prox(v.view(), 1.0, p);
            for (o, x) in out.iter().zip(v.iter()) {
                if *o != 0.0 {
                    prop_assert!(x.abs() > thr || thr == 0.0);
                    prop_assert_eq!(o.signum(), x.signum());
                }
            }
        }

        #[test]
        fn penalty_is_linear_in_alpha(b in proptest::collection::vec(-5.0f64..5.0, 5), a in 0.0f64..=1.0, lam in 0.0f64..3.0) {
            let b = Array1::from(b);
            let lasso = elastic_net_penalty(b.view(), PenaltyParams { alpha: 1.0, lambda: lam });
            let ridge = elastic_net_penalty(b.view(), PenaltyParams { alpha: 0.0, lambda: lam });
            let mixed = elastic_net_penalty(b.view(), PenaltyParams { alpha: a, lambda: lam });
            prop_assert!((mixed - (a * lasso + (1.0 - a) * ridge)).abs() < 1e-10);
        }
    }
}
