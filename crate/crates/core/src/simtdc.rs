//! Simulation of survival data with time-fixed and time-dependent covariates
//! by the permutational algorithm.
//!
//! Survival times are generated from their marginal distribution first and
//! only afterwards matched to subjects, each event going to an unassigned
//! subject with probability proportional to its relative hazard at that
//! time. The marginal distribution of the observed times therefore does not
//! depend on the covariate effects.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{CoxError, Result};
use crate::survdata::{self, Dataset, SurvRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_subjects: usize,
    /// Follow-up horizon; censoring times are uniform on `(0, max_time]`.
    pub max_time: f64,
    pub n_fixed: usize,
    /// Covariates redrawn on every unit-length time interval.
    pub n_td: usize,
    /// Log-hazard effects, time-fixed covariates first.
    pub beta_true: Vec<f64>,
    /// Rate of the exponential event-time distribution.
    pub event_rate: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(CoxError::InvalidParameter(m));
        if self.n_subjects == 0 {
            return invalid("n_subjects must be positive".into());
        }
        if self.n_fixed + self.n_td == 0 {
            return invalid("at least one covariate is required".into());
        }
        if self.beta_true.len() != self.n_fixed + self.n_td {
            return invalid(format!(
                "beta_true has {} entries but there are {} covariates",
                self.beta_true.len(),
                self.n_fixed + self.n_td
            ));
        }
        if self.beta_true.iter().any(|b| !b.is_finite()) {
            return invalid("beta_true must be finite".into());
        }
        if !self.event_rate.is_finite() || self.event_rate <= 0.0 {
            return invalid(format!("event_rate must be positive, got {}", self.event_rate));
        }
        if !self.max_time.is_finite() || self.max_time <= 0.0 {
            return invalid(format!("max_time must be positive, got {}", self.max_time));
        }
        Ok(())
    }
}

/// Effects drawn uniformly from `[low, high)` with their own seed.
pub fn uniform_effects(n: usize, low: f64, high: f64, seed: u64) -> Result<Vec<f64>> {
    if !low.is_finite() || !high.is_finite() || low >= high {
        return Err(CoxError::InvalidParameter(format!("empty effect range [{low}, {high})")));
    }
    let dist = Uniform::new(low, high).map_err(|e| CoxError::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub dataset: Dataset,
    pub truth: Vec<f64>,
    pub n_events: usize,
}

/// Column names: `fixed_1..`, then `td_1..`.
pub fn column_names(cfg: &SimConfig) -> Vec<String> {
    (1..=cfg.n_fixed)
        .map(|j| format!("fixed_{j}"))
        .chain((1..=cfg.n_td).map(|j| format!("td_{j}")))
        .collect()
}

pub fn simulate(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let n = cfg.n_subjects;
    let n_units = (cfg.max_time.ceil() as usize).max(1);
    let (beta_fixed, beta_td) = cfg.beta_true.split_at(cfg.n_fixed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    let fixed: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..cfg.n_fixed).map(|_| normal(&mut rng)).collect())
        .collect();
    // td[s][u] holds the values on (u, u + 1]
    let td: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|_| {
            (0..n_units)
                .map(|_| (0..cfg.n_td).map(|_| normal(&mut rng)).collect())
                .collect()
        })
        .collect();

    let dot = |x: &[f64], b: &[f64]| x.iter().zip(b).map(|(x, b)| x * b).sum::<f64>();
    // eta[s][u]: linear predictor of subject s on unit interval u
    let eta: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            let f = dot(&fixed[s], beta_fixed);
            td[s].iter().map(|x| f + dot(x, beta_td)).collect()
        })
        .collect();

    let exp = Exp::new(cfg.event_rate).map_err(|e| CoxError::InvalidParameter(e.to_string()))?;
    let mut times: Vec<(f64, bool)> = (0..n)
        .map(|_| {
            let t: f64 = exp.sample(&mut rng);
            let c = cfg.max_time * (1.0 - rng.random::<f64>());
            if t <= c {
                (t, true)
            } else {
                (c, false)
            }
        })
        .collect();
    times.sort_by(|a, b| a.0.total_cmp(&b.0));

    let unit_of = |t: f64| ((t.ceil() as usize).max(1) - 1).min(n_units - 1);
    let mut unassigned: Vec<usize> = (0..n).collect();
    let mut assigned = vec![(0.0, false); n];
    let mut weights = Vec::with_capacity(n);
    for &(t, event) in &times {
        let pick = if event {
            let u = unit_of(t);
            let shift = unassigned.iter().map(|&s| eta[s][u]).fold(f64::NEG_INFINITY, f64::max);
            weights.clear();
            let mut total = 0.0;
            for &s in &unassigned {
                total += (eta[s][u] - shift).exp();
                weights.push(total);
            }
            let r = rng.random::<f64>() * total;
            weights.partition_point(|&w| w <= r).min(unassigned.len() - 1)
        } else {
            rng.random_range(0..unassigned.len())
        };
        let s = unassigned.remove(pick);
        assigned[s] = (t, event);
    }

    let mut records = Vec::new();
    for s in 0..n {
        let (t, event) = assigned[s];
        let id = (s + 1).to_string();
        if cfg.n_td == 0 {
            records.push(SurvRecord {
                subject_id: id,
                t_start: 0.0,
                t_stop: t,
                status: event,
                covariates: fixed[s].clone(),
            });
            continue;
        }
        let pieces = (t.ceil() as usize).max(1);
        for u in 0..pieces {
            let stop = ((u + 1) as f64).min(t);
            let mut x = fixed[s].clone();
            x.extend_from_slice(&td[s][u.min(n_units - 1)]);
            records.push(SurvRecord {
                subject_id: id.clone(),
                t_start: u as f64,
                t_stop: stop,
                status: event && u + 1 == pieces,
                covariates: x,
            });
        }
    }
    let dataset = Dataset::new(records, column_names(cfg))?;
    let n_events = assigned.iter().filter(|a| a.1).count();
    Ok(SimOutput {
        dataset,
        truth: cfg.beta_true.clone(),
        n_events,
    })
}

/// Write the simulated rows in the standard CSV layout.
pub fn write_csv<W: Write>(out: &SimOutput, sink: W) -> Result<()> {
    survdata::write_csv(&out.dataset, sink)
}
