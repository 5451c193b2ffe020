//! Baseline cumulative hazard, survival curves and Harrell's concordance.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{CoxError, Result};
use crate::likelihood::LikelihoodContext;
use crate::survdata::{Dataset, RiskIndex, ScalingInfo, SurvRecord};

/// Breslow estimate of the cumulative baseline hazard at each event time.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineHazard {
    pub times: Vec<f64>,
    pub cumhaz: Vec<f64>,
}

impl BaselineHazard {
    /// Step-function value at `t` (zero before the first event time).
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.cumhaz[k - 1]
        }
    }
}

/// `H0(t) = sum_{t_i <= t} d_i / sum_{j in R_i} exp(x_j beta)`, evaluated on
/// the context's covariate scale.
pub fn baseline_cumhaz(beta: ArrayView1<f64>, ctx: &LikelihoodContext) -> Result<BaselineHazard> {
    if beta.len() != ctx.n_covariates() {
        return Err(CoxError::DimensionMismatch {
            expected: ctx.n_covariates(),
            got: beta.len(),
        });
    }
    let eta = ctx.linear_predictor(beta);
    let risk = ctx.risk_index();
    let mut total = 0.0;
    let mut cumhaz = Vec::with_capacity(risk.n_event_times());
    for i in 0..risk.n_event_times() {
        let rs = risk.risk_set(i);
        let shift = rs.iter().map(|&j| eta[j]).fold(f64::NEG_INFINITY, f64::max);
        let s0: f64 = rs.iter().map(|&j| (eta[j] - shift).exp()).sum();
        total += risk.tie_counts[i] as f64 * (-shift).exp() / s0;
        if !total.is_finite() {
            return Err(CoxError::Numeric("non-finite cumulative hazard".into()));
        }
        cumhaz.push(total);
    }
    Ok(BaselineHazard {
        times: risk.event_times.clone(),
        cumhaz,
    })
}

/// Survival probabilities of new subjects at every baseline time.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvCurve {
    pub times: Vec<f64>,
    /// Subject id of each curve (one curve per input row).
    pub labels: Vec<String>,
    /// `n_new x n_times`.
    pub surv: Array2<f64>,
}

impl SurvCurve {
    /// Pointwise mean over curves.
    pub fn average(&self) -> Vec<f64> {
        match self.surv.mean_axis(Axis(0)) {
            Some(m) => m.to_vec(),
            None => vec![1.0; self.times.len()],
        }
    }
}

/// `S(t | x) = exp(-H0(t) exp(x beta))` for each row of `newdata`.
///
/// `newdata` carries raw covariates; they are transformed with the training
/// `scaling` so that they match the scale of `beta` and `bh`.
pub fn survival_curves(
    beta: ArrayView1<f64>,
    bh: &BaselineHazard,
    newdata: &Dataset,
    scaling: &ScalingInfo,
) -> Result<SurvCurve> {
    let z = scaling.apply(newdata)?;
    if z.n_covariates() != beta.len() {
        return Err(CoxError::DimensionMismatch {
            expected: beta.len(),
            got: z.n_covariates(),
        });
    }
    let rel: Vec<f64> = z
        .records()
        .iter()
        .map(|r| r.covariates.iter().zip(beta.iter()).map(|(x, b)| x * b).sum::<f64>().exp())
        .collect();
    let surv = Array2::from_shape_fn((rel.len(), bh.times.len()), |(i, k)| (-bh.cumhaz[k] * rel[i]).exp());
    Ok(SurvCurve {
        times: bh.times.clone(),
        labels: z.records().iter().map(|r| r.subject_id.clone()).collect(),
        surv,
    })
}

/// Harrell's C with pair counts and a normal-approximation 95% interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcordanceResult {
    pub c: f64,
    pub concordant: u64,
    pub discordant: u64,
    pub tied: u64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl ConcordanceResult {
    pub fn comparable(&self) -> u64 {
        self.concordant + self.discordant + self.tied
    }
}

/// Harrell's concordance of risk scores (higher = riskier) on
/// counting-process outcomes.
///
/// A pair `(a, b)` is comparable when row `a` has an event at `t_a`, row `b`
/// is at risk at `t_a` (`t_start_b < t_a <= t_stop_b`) and `b` does not
/// itself fail at `t_a`. The pair is concordant when `a` scores higher;
/// equal scores count one half.
///
/// The standard error linearizes `C` over subjects: with `A_s` the summed
/// pair scores and `N_s` the number of pairs involving subject `s`,
/// `var(C) ~ sum_s (A_s - C N_s)^2 / N^2`.
pub fn concordance(scores: &[f64], outcomes: &[SurvRecord]) -> Result<ConcordanceResult> {
    if scores.len() != outcomes.len() {
        return Err(CoxError::DimensionMismatch {
            expected: outcomes.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(CoxError::Numeric("non-finite risk score".into()));
    }
    let start: Vec<f64> = outcomes.iter().map(|r| r.t_start).collect();
    let stop: Vec<f64> = outcomes.iter().map(|r| r.t_stop).collect();
    let status: Vec<bool> = outcomes.iter().map(|r| r.status).collect();
    let risk = match RiskIndex::from_intervals(&start, &stop, &status) {
        Ok(r) => r,
        Err(CoxError::NoEvents) => return Err(CoxError::NoComparablePairs),
        Err(e) => return Err(e),
    };

    let mut subject_of = HashMap::new();
    let subj: Vec<usize> = outcomes
        .iter()
        .map(|r| {
            let next = subject_of.len();
            *subject_of.entry(r.subject_id.as_str()).or_insert(next)
        })
        .collect();
    let mut per_subject = vec![(0.0f64, 0.0f64); subject_of.len()];

    let (mut conc, mut disc, mut tied) = (0u64, 0u64, 0u64);
    for i in 0..risk.n_event_times() {
        let deaths = &risk.death_sets[i];
        for &b in risk.risk_set(i) {
            if status[b] && stop[b] == risk.event_times[i] {
                continue;
            }
            for &a in deaths {
                let h = if scores[a] > scores[b] {
                    conc += 1;
                    1.0
                } else if scores[a] < scores[b] {
                    disc += 1;
                    0.0
                } else {
                    tied += 1;
                    0.5
                };
                for s in [subj[a], subj[b]] {
                    per_subject[s].0 += h;
                    per_subject[s].1 += 1.0;
                }
            }
        }
    }

    let n_pairs = conc + disc + tied;
    if n_pairs == 0 {
        return Err(CoxError::NoComparablePairs);
    }
    let total = n_pairs as f64;
    let c = (conc as f64 + 0.5 * tied as f64) / total;
    let var: f64 = per_subject
        .iter()
        .map(|&(a, n)| (a - c * n).powi(2))
        .sum::<f64>()
        / (total * total);
    let se = var.sqrt();
    Ok(ConcordanceResult {
        c,
        concordant: conc,
        discordant: disc,
        tied,
        se,
        ci_low: (c - 1.959964 * se).max(0.0),
        ci_high: (c + 1.959964 * se).min(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn row(id: &str, stop: f64, status: bool) -> SurvRecord {
        SurvRecord {
            subject_id: id.into(),
            t_start: 0.0,
            t_stop: stop,
            status,
            covariates: vec![],
        }
    }

    #[test]
    fn cumhaz_nested_at_zero() {
        let ctx = LikelihoodContext::from_parts(
            array![[0.3], [0.1], [2.0]],
            vec![0.0; 3],
            vec![1.0, 2.0, 3.0],
            vec![true; 3],
        )
        .unwrap();
        let bh = baseline_cumhaz(array![0.0].view(), &ctx).unwrap();
        let expected = [1.0 / 3.0, 1.0 / 3.0 + 0.5, 1.0 / 3.0 + 0.5 + 1.0];
        for (a, b) in bh.cumhaz.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert_eq!(bh.at(0.5), 0.0);
        assert_abs_diff_eq!(bh.at(2.5), 5.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn cumhaz_tie_step() {
        let ctx = LikelihoodContext::from_parts(
            array![[0.0], [1.0], [2.0]],
            vec![0.0; 3],
            vec![1.0, 1.0, 3.0],
            vec![true, true, false],
        )
        .unwrap();
        let bh = baseline_cumhaz(array![0.0].view(), &ctx).unwrap();
        assert_abs_diff_eq!(bh.cumhaz[0], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn perfect_and_tied_scores() {
        let rows = vec![row("a", 1.0, true), row("b", 2.0, true), row("c", 3.0, true), row("d", 4.0, false)];
        let c = concordance(&[4.0, 3.0, 2.0, 1.0], &rows).unwrap();
        assert_eq!(c.c, 1.0);
        assert_eq!(c.comparable(), 6);
        let c = concordance(&[1.0; 4], &rows).unwrap();
        assert_eq!(c.c, 0.5);
        assert_eq!(c.tied, 6);
        let c = concordance(&[1.0, 2.0, 3.0, 4.0], &rows).unwrap();
        assert_eq!(c.c, 0.0);
    }

    #[test]
    fn tied_event_times_are_not_compared() {
        let rows = vec![row("a", 1.0, true), row("b", 1.0, true)];
        assert!(matches!(concordance(&[1.0, 2.0], &rows), Err(CoxError::NoComparablePairs)));
        // censored at the event time still counts as outliving it
        let rows = vec![row("a", 1.0, true), row("b", 1.0, false)];
        assert_eq!(concordance(&[2.0, 1.0], &rows).unwrap().concordant, 1);
    }

    #[test]
    fn no_events_means_no_pairs() {
        let rows = vec![row("a", 1.0, false), row("b", 2.0, false)];
        assert!(matches!(concordance(&[1.0, 2.0], &rows), Err(CoxError::NoComparablePairs)));
    }

    #[test]
    fn interval_contains_estimate() {
        let rows: Vec<_> = (0..30).map(|i| row(&i.to_string(), 1.0 + i as f64, i % 3 != 0)).collect();
        let scores: Vec<f64> = (0..30).map(|i| ((i * 37) % 11) as f64 - 0.05 * i as f64).collect();
        let c = concordance(&scores, &rows).unwrap();
        assert!(c.ci_low <= c.c && c.c <= c.ci_high);
        assert!(c.se > 0.0);
    }
}
