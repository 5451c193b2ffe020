//! Independent reference implementations used as test oracles. Nothing here
//! shares code with the library beyond its data types.
#![allow(dead_code, clippy::needless_range_loop)]

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tdcox::likelihood::LikelihoodContext;
use tdcox::survdata::{Dataset, SurvRecord};

#[derive(Debug, Clone)]
pub struct Instance {
    pub ids: Vec<String>,
    pub start: Vec<f64>,
    pub stop: Vec<f64>,
    pub status: Vec<bool>,
    pub x: Array2<f64>,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.stop.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn ctx(&self) -> LikelihoodContext {
        LikelihoodContext::from_parts(self.x.clone(), self.start.clone(), self.stop.clone(), self.status.clone())
            .unwrap()
    }

    pub fn dataset(&self) -> Dataset {
        let records = (0..self.n())
            .map(|i| SurvRecord {
                subject_id: self.ids[i].clone(),
                t_start: self.start[i],
                t_stop: self.stop[i],
                status: self.status[i],
                covariates: self.x.row(i).to_vec(),
            })
            .collect();
        let names = (1..=self.p()).map(|j| format!("x{j}")).collect();
        Dataset::new(records, names).unwrap()
    }
}

/// One row per subject. With `ties`, stop times are small integers so that
/// several rows fail together; with `staggered`, rows enter late, some of
/// them exactly at another row's event time.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, p: usize, ties: bool, staggered: bool) -> Instance {
    let levels = (n / 3).max(2);
    let mut stop: Vec<f64> = (0..n)
        .map(|_| {
            if ties {
                rng.random_range(1..=levels) as f64
            } else {
                rng.random_range(0.5..10.0)
            }
        })
        .collect();
    let start: Vec<f64> = stop
        .iter_mut()
        .map(|t| {
            if !staggered || rng.random_bool(0.4) {
                0.0
            } else if ties && rng.random_bool(0.5) {
                *t - 1.0
            } else {
                *t * rng.random_range(0.0..0.9)
            }
        })
        .collect();
    let mut status: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
    status[0] = true;
    let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
    Instance {
        ids: (0..n).map(|i| format!("s{i}")).collect(),
        start,
        stop,
        status,
        x,
    }
}

fn event_times(inst: &Instance) -> Vec<f64> {
    let mut t: Vec<f64> = (0..inst.n()).filter(|&i| inst.status[i]).map(|i| inst.stop[i]).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

fn at_risk(inst: &Instance, j: usize, t: f64) -> bool {
    inst.start[j] < t && t <= inst.stop[j]
}

fn dot(inst: &Instance, i: usize, beta: &[f64]) -> f64 {
    inst.x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum()
}

/// Breslow negative log partial likelihood over `n`, summed term by term
/// without any stabilization.
pub fn naive_nll(inst: &Instance, beta: &[f64]) -> f64 {
    let mut ll = 0.0;
    for t in event_times(inst) {
        let deaths: Vec<usize> = (0..inst.n()).filter(|&i| inst.status[i] && inst.stop[i] == t).collect();
        let denom: f64 = (0..inst.n()).filter(|&j| at_risk(inst, j, t)).map(|j| dot(inst, j, beta).exp()).sum();
        for &s in &deaths {
            ll += dot(inst, s, beta);
        }
        ll -= deaths.len() as f64 * denom.ln();
    }
    -ll / inst.n() as f64
}

/// Gradient and Hessian of [`naive_nll`].
pub fn naive_grad_hess(inst: &Instance, beta: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = inst.p();
    let mut g = vec![0.0; p];
    let mut h = vec![vec![0.0; p]; p];
    for t in event_times(inst) {
        let deaths: Vec<usize> = (0..inst.n()).filter(|&i| inst.status[i] && inst.stop[i] == t).collect();
        let d = deaths.len() as f64;
        let risk: Vec<usize> = (0..inst.n()).filter(|&j| at_risk(inst, j, t)).collect();
        let w: Vec<f64> = risk.iter().map(|&j| dot(inst, j, beta).exp()).collect();
        let s0: f64 = w.iter().sum();
        let mut mean = vec![0.0; p];
        for (k, &j) in risk.iter().enumerate() {
            for a in 0..p {
                mean[a] += w[k] * inst.x[[j, a]] / s0;
            }
        }
        for a in 0..p {
            g[a] -= deaths.iter().map(|&s| inst.x[[s, a]]).sum::<f64>() - d * mean[a];
            for b in 0..p {
                let second: f64 = risk
                    .iter()
                    .enumerate()
                    .map(|(k, &j)| w[k] * inst.x[[j, a]] * inst.x[[j, b]])
                    .sum::<f64>()
                    / s0;
                h[a][b] += d * (second - mean[a] * mean[b]);
            }
        }
    }
    let n = inst.n() as f64;
    g.iter_mut().for_each(|v| *v /= n);
    h.iter_mut().flatten().for_each(|v| *v /= n);
    (g, h)
}

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Damped Newton-Raphson on `naive_nll + ridge/2 |beta|^2`.
pub fn newton_oracle(inst: &Instance, ridge: f64) -> Vec<f64> {
    let p = inst.p();
    let obj = |b: &[f64]| naive_nll(inst, b) + 0.5 * ridge * b.iter().map(|v| v * v).sum::<f64>();
    let mut beta = vec![0.0; p];
    for _ in 0..200 {
        let (mut g, mut h) = naive_grad_hess(inst, &beta);
        for a in 0..p {
            g[a] += ridge * beta[a];
            h[a][a] += ridge;
        }
        let step = solve(h, g);
        let mut t = 1.0;
        let f0 = obj(&beta);
        loop {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b - t * s).collect();
            if obj(&cand) <= f0 || t < 1e-12 {
                beta = cand;
                break;
            }
            t *= 0.5;
        }
        if step.iter().fold(0.0f64, |m, s| m.max(s.abs())) * t < 1e-13 {
            break;
        }
    }
    beta
}

/// Harrell's C pair counts by enumerating every ordered pair of rows.
pub fn brute_concordance(scores: &[f64], rows: &[SurvRecord]) -> (u64, u64, u64) {
    let (mut c, mut d, mut t) = (0, 0, 0);
    for (a, ra) in rows.iter().enumerate() {
        if !ra.status {
            continue;
        }
        for (b, rb) in rows.iter().enumerate() {
            if a == b || !(rb.t_start < ra.t_stop && ra.t_stop <= rb.t_stop) {
                continue;
            }
            if rb.status && rb.t_stop == ra.t_stop {
                continue;
            }
            match scores[a].partial_cmp(&scores[b]).unwrap() {
                std::cmp::Ordering::Greater => c += 1,
                std::cmp::Ordering::Less => d += 1,
                std::cmp::Ordering::Equal => t += 1,
            }
        }
    }
    (c, d, t)
}

/// Breslow cumulative hazard at each distinct event time, term by term.
pub fn naive_cumhaz(inst: &Instance, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let times = event_times(inst);
    let mut total = 0.0;
    let mut h = Vec::new();
    for &t in &times {
        let d = (0..inst.n()).filter(|&i| inst.status[i] && inst.stop[i] == t).count() as f64;
        let denom: f64 = (0..inst.n()).filter(|&j| at_risk(inst, j, t)).map(|j| dot(inst, j, beta).exp()).sum();
        total += d / denom;
        h.push(total);
    }
    (times, h)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn to_vec(a: &Array1<f64>) -> Vec<f64> {
    a.to_vec()
}

/// Central finite differences of `f` with step `h`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, beta: &[f64], h: f64) -> Vec<f64> {
    (0..beta.len())
        .map(|j| {
            let mut up = beta.to_vec();
            let mut dn = beta.to_vec();
            up[j] += h;
            dn[j] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

/// CDF of observed event times when `T ~ Exp(rate)` is observed only if it
/// precedes `C ~ U(0, tau]`, normalized to a distribution on `(0, tau]`.
pub fn observed_event_cdf(t: f64, rate: f64, tau: f64) -> f64 {
    let g = |t: f64| {
        let e = (-rate * t).exp();
        (1.0 - e) - (-t * e + (1.0 - e) / rate) / tau
    };
    g(t.clamp(0.0, tau)) / g(tau)
}

/// One-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0f64, |m, (i, &x)| {
        let f = cdf(x);
        m.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Average ranks (1-based), ties sharing their mean rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}
