use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;
use std::time::Instant;

use ndarray::Array1;
use rayon::prelude::*;
use serde_json::json;
use tdcox::crossval::{cross_validate, grid_for_alpha, CvMetric, CvOptions};
use tdcox::penalty::PenaltyParams;
use tdcox::predict::{baseline_cumhaz, concordance, survival_curves};
use tdcox::simtdc::{self, SimConfig};
use tdcox::solver::{fit, fit_path, PathResult, SolverConfig};
use tdcox::survdata::{parse_csv, CsvSchema, Dataset, ScalingInfo};
use tdcox::LikelihoodContext;

use crate::output::{
    finite_or_none, num, ConcordanceJson, CurveJson, CvJson, FitJson, KktJson, KktViolation, Manifest, OutDir,
    SurvJson, TruthJson, FORMAT_VERSION,
};
use crate::{
    Cli, CliError, Command, ConcordanceArgs, CvArgs, FitArgs, PathArgs, PredictArgs, SimulateArgs, SolverArgs,
    DEFAULT_SEED,
};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    let started = Instant::now();
    let mut out = OutDir::create(&cli.common.out_dir)?;
    let (name, inputs, config, seed) = match &cli.command {
        Command::Simulate(a) => {
            let seed = simulate(cli, a, &mut out)?;
            let inputs = a.config.iter().map(|p| p.display().to_string()).collect();
            ("simulate", inputs, json!(a), Some(seed))
        }
        Command::Fit(a) => {
            cmd_fit(cli, a, &mut out)?;
            ("fit", vec![a.data.display().to_string()], json!(a), None)
        }
        Command::Path(a) => {
            cmd_path(cli, a, &mut out)?;
            ("path", vec![a.data.display().to_string()], json!(a), None)
        }
        Command::Cv(a) => {
            let seed = cmd_cv(cli, a, &mut out)?;
            ("cv", vec![a.data.display().to_string()], json!(a), Some(seed))
        }
        Command::Predict(a) => {
            cmd_predict(cli, a, &mut out)?;
            let inputs = [&a.fit, &a.data, &a.newdata].iter().map(|p| p.display().to_string()).collect();
            ("predict", inputs, json!(a), None)
        }
        Command::Concordance(a) => {
            cmd_concordance(a, &mut out)?;
            let inputs = [&a.fit, &a.data].iter().map(|p| p.display().to_string()).collect();
            ("concordance", inputs, json!(a), None)
        }
    };
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        command: name.into(),
        inputs,
        config: json!({ "command": config, "threads": cli.common.threads, "quiet": cli.common.quiet }),
        seed,
        versions: json!({ "tdcox": env!("CARGO_PKG_VERSION"), "format": FORMAT_VERSION }),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        outputs: out.written().to_vec(),
    };
    out.write_json("manifest.json", &manifest)
}

fn say(cli: &Cli, msg: impl AsRef<str>) {
    if !cli.common.quiet {
        println!("{}", msg.as_ref());
    }
}

fn read_data(path: &Path) -> Result<Dataset> {
    let f = File::open(path).map_err(|e| CliError::input(path, e))?;
    parse_csv(f, &CsvSchema::default()).map_err(|e| match e {
        tdcox::CoxError::Io(source) => CliError::input(path, source),
        e => CliError::Model(e),
    })
}

fn read_fit(path: &Path) -> Result<FitJson> {
    let f = File::open(path).map_err(|e| CliError::input(path, e))?;
    let fit: FitJson = serde_json::from_reader(f)
        .map_err(|e| CliError::Usage(format!("{} is not a fit file: {e}", path.display())))?;
    fit.scaling.validate()?;
    if fit.coefficients_standardized.len() != fit.columns.len() || fit.scaling.n_original() != fit.columns.len() {
        return Err(CliError::Usage(format!("{}: inconsistent coefficient lengths", path.display())));
    }
    Ok(fit)
}

fn check_columns(fit: &FitJson, d: &Dataset, path: &Path) -> Result<()> {
    if d.column_names() != fit.columns.as_slice() {
        return Err(CliError::Usage(format!(
            "{}: covariate columns {:?} do not match the fitted columns {:?}",
            path.display(),
            d.column_names(),
            fit.columns
        )));
    }
    Ok(())
}

fn solver_config(tol: f64, max_iter: usize) -> Result<SolverConfig> {
    let cfg = SolverConfig {
        tol,
        max_iter,
        ..Default::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn context(d: &Dataset, s: &SolverArgs) -> Result<LikelihoodContext> {
    Ok(if s.no_standardize {
        LikelihoodContext::new(d)?
    } else {
        LikelihoodContext::standardized(d)?
    })
}

/// Spread retained-column values back over all original columns.
fn expand(values: &[f64], scaling: &ScalingInfo) -> Vec<f64> {
    let mut full = vec![0.0; scaling.n_original()];
    for (k, j) in scaling.retained().into_iter().enumerate() {
        full[j] = values[k];
    }
    full
}

fn retained_coefs(fit: &FitJson) -> Array1<f64> {
    fit.scaling
        .retained()
        .into_iter()
        .map(|j| fit.coefficients_standardized[j])
        .collect()
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?
            .install(f)),
        None => Ok(f()),
    }
}

fn simulate(cli: &Cli, a: &SimulateArgs, out: &mut OutDir) -> Result<u64> {
    let mut cfg = match &a.config {
        Some(path) => {
            let f = File::open(path).map_err(|e| CliError::input(path, e))?;
            serde_json::from_reader::<_, SimConfig>(f)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => {
            let seed = cli.common.seed.unwrap_or(DEFAULT_SEED);
            let beta = match &a.beta {
                Some(b) => b.clone(),
                None => simtdc::uniform_effects(a.n_fixed + a.n_td, a.effect_low, a.effect_high, seed)?,
            };
            SimConfig {
                n_subjects: a.n_subjects,
                max_time: a.max_time,
                n_fixed: a.n_fixed,
                n_td: a.n_td,
                beta_true: beta,
                event_rate: a.event_rate,
                seed,
            }
        }
    };
    if let Some(s) = cli.common.seed {
        cfg.seed = s;
    }
    let sim = simtdc::simulate(&cfg)?;
    let mut buf = Vec::new();
    simtdc::write_csv(&sim, &mut buf)?;
    out.write_bytes("sim.csv", &buf)?;
    out.write_json(
        "truth.json",
        &TruthJson {
            format_version: FORMAT_VERSION,
            columns: sim.dataset.column_names().to_vec(),
            beta_true: sim.truth.clone(),
            n_subjects: sim.dataset.n_subjects(),
            n_rows: sim.dataset.n_rows(),
            n_events: sim.n_events,
            config: cfg.clone(),
        },
    )?;
    say(
        cli,
        format!(
            "simulated {} subjects, {} rows, {} events",
            sim.dataset.n_subjects(),
            sim.dataset.n_rows(),
            sim.n_events
        ),
    );
    Ok(cfg.seed)
}

fn cmd_fit(cli: &Cli, a: &FitArgs, out: &mut OutDir) -> Result<()> {
    let d = read_data(&a.data)?;
    let cfg = solver_config(a.solver.tol, a.solver.max_iter)?;
    let params = PenaltyParams::new(a.alpha, a.lambda)?;
    let ctx = context(&d, &a.solver)?;
    let f = fit(&ctx, params, &cfg, None)?;
    if !f.converged {
        log::warn!("no convergence after {} iterations", f.iterations);
    }
    if !f.kkt_ok {
        log::warn!("KKT check failed (max violation {:.3e})", f.kkt.max_violation);
    }
    let scaling = ctx.scaling().clone();
    let names = d.column_names();
    let retained = scaling.retained();
    let std_full = expand(&f.beta.to_vec(), &scaling);
    let json = FitJson {
        format_version: FORMAT_VERSION,
        alpha: a.alpha,
        lambda: a.lambda,
        columns: names.to_vec(),
        coefficients: if a.standardized_coefs {
            std_full.clone()
        } else {
            f.beta_original.clone()
        },
        coefficient_scale: if a.standardized_coefs { "standardized" } else { "original" }.into(),
        coefficients_original: f.beta_original.clone(),
        coefficients_standardized: std_full,
        n_nonzero: f.n_nonzero,
        n_covariates: d.n_covariates(),
        n_rows: d.n_rows(),
        n_subjects: d.n_subjects(),
        n_events: d.n_events(),
        converged: f.converged,
        iterations: f.iterations,
        objective: f.objective(),
        kkt: KktJson {
            ok: f.kkt.ok,
            max_violation: f.kkt.max_violation,
            violations: f
                .kkt
                .violations
                .iter()
                .map(|&(k, r)| KktViolation {
                    column: names[retained[k]].clone(),
                    residual: r,
                })
                .collect(),
        },
        scaling,
    };
    out.write_json("fit.json", &json)?;
    say(cli, format!("{} out of {} coefficients are nonzero", f.n_nonzero, d.n_covariates()));
    say(cli, format!("n = {}, number of events = {}", d.n_rows(), d.n_events()));
    Ok(())
}

fn path_csv(paths: &[PathResult], columns: &[String]) -> String {
    let mut s = String::from("alpha,lambda,n_nonzero,converged");
    for c in columns {
        s.push(',');
        s.push_str(c);
    }
    s.push('\n');
    for p in paths {
        for k in 0..p.lambdas.len() {
            let _ = write!(s, "{},{},{},{}", num(p.alpha), num(p.lambdas[k]), p.n_nonzero[k], p.converged[k]);
            for v in p.coefs_original.column(k) {
                s.push(',');
                s.push_str(&num(*v));
            }
            s.push('\n');
        }
    }
    s
}

fn cmd_path(cli: &Cli, a: &PathArgs, out: &mut OutDir) -> Result<()> {
    let d = read_data(&a.data)?;
    let cfg = solver_config(a.solver.tol, a.solver.max_iter)?;
    let ctx = context(&d, &a.solver)?;
    let opts = CvOptions {
        nlambda: a.grid.nlambda,
        lamfract: a.grid.lamfract,
        epsilon: a.grid.epsilon,
        ..Default::default()
    };
    let grids = a
        .alphas
        .iter()
        .map(|&alpha| grid_for_alpha(&ctx, alpha, &opts))
        .collect::<tdcox::Result<Vec<_>>>()?;
    let paths = with_threads(cli.common.threads, || {
        a.alphas
            .par_iter()
            .zip(grids.par_iter())
            .map(|(&alpha, g)| fit_path(&ctx, alpha, g, &cfg))
            .collect::<tdcox::Result<Vec<_>>>()
    })??;
    for p in &paths {
        for (k, e) in p.errors.iter().enumerate() {
            if let Some(e) = e {
                log::warn!("alpha {} lambda {}: {e}", p.alpha, p.lambdas[k]);
            }
        }
    }
    out.write_bytes("path.csv", path_csv(&paths, d.column_names()).as_bytes())?;
    for p in &paths {
        say(
            cli,
            format!(
                "alpha {}: {} lambdas, {} nonzero at the smallest",
                p.alpha,
                p.lambdas.len(),
                p.n_nonzero.last().copied().unwrap_or(0)
            ),
        );
    }
    Ok(())
}

fn cmd_cv(cli: &Cli, a: &CvArgs, out: &mut OutDir) -> Result<u64> {
    let d = read_data(&a.data)?;
    let cfg = solver_config(a.tol, a.max_iter)?;
    let metric: CvMetric = a.metric.parse()?;
    let seed = cli.common.seed.unwrap_or(DEFAULT_SEED);
    let opts = CvOptions {
        k: a.k,
        seed,
        metric,
        lamfract: a.grid.lamfract,
        nlambda: a.grid.nlambda,
        epsilon: a.grid.epsilon,
        refit: a.refit,
        threads: cli.common.threads,
    };
    if a.refit {
        say(cli, "cross-validating, then refitting at the selected alpha");
    }
    let r = cross_validate(&d, &a.alphas, &opts, &cfg)?;
    for w in &r.warnings {
        log::warn!("{w}");
    }
    let json = CvJson {
        format_version: FORMAT_VERSION,
        metric: metric.to_string(),
        k: a.k,
        seed,
        alphas: a.alphas.clone(),
        lamfract: a.grid.lamfract,
        nlambda: a.grid.nlambda,
        lambda_min: r.lambda_min,
        lambda_1se: r.lambda_1se,
        alpha_optimal: r.alpha_optimal,
        surface: r
            .curves
            .iter()
            .map(|c| CurveJson {
                alpha: c.alpha,
                lambdas: c.lambdas.clone(),
                mean: finite_or_none(&c.mean),
                se: finite_or_none(&c.se),
                folds_used: c.folds_used,
                skipped_folds: c.skipped_folds.clone(),
            })
            .collect(),
        warnings: r.warnings.clone(),
        refit: a.refit,
    };
    out.write_json("cv.json", &json)?;

    let mut csv = String::from("alpha,lambda,mean,se\n");
    for c in &r.curves {
        for k in 0..c.lambdas.len() {
            let _ = writeln!(csv, "{},{},{},{}", num(c.alpha), num(c.lambdas[k]), num(c.mean[k]), num(c.se[k]));
        }
    }
    out.write_bytes("cv_error.csv", csv.as_bytes())?;
    if let Some(p) = &r.refit {
        out.write_bytes("path.csv", path_csv(std::slice::from_ref(p), d.column_names()).as_bytes())?;
    }
    say(cli, "Optimal parameter values");
    say(cli, " lambda.min lambda.1se alpha.optimal");
    say(cli, format!(" {} {} {}", r.lambda_min, r.lambda_1se, r.alpha_optimal));
    Ok(seed)
}

fn cmd_predict(cli: &Cli, a: &PredictArgs, out: &mut OutDir) -> Result<()> {
    let fitted = read_fit(&a.fit)?;
    let train = read_data(&a.data)?;
    check_columns(&fitted, &train, &a.data)?;
    let newdata = read_data(&a.newdata)?;
    check_columns(&fitted, &newdata, &a.newdata)?;
    let ctx = LikelihoodContext::with_scaling(&train, fitted.scaling.clone())?;
    let beta = retained_coefs(&fitted);
    let bh = baseline_cumhaz(beta.view(), &ctx)?;
    let curves = survival_curves(beta.view(), &bh, &newdata, &fitted.scaling)?;
    let avg = curves.average();

    let mut long = String::from("subject,row,time,surv\n");
    for (i, label) in curves.labels.iter().enumerate() {
        for (k, t) in curves.times.iter().enumerate() {
            let _ = writeln!(long, "{},{},{},{}", label, i + 1, num(*t), num(curves.surv[[i, k]]));
        }
    }
    out.write_bytes("surv.csv", long.as_bytes())?;
    let mut mean = String::from("time,surv\n");
    for (t, s) in curves.times.iter().zip(&avg) {
        let _ = writeln!(mean, "{},{}", num(*t), num(*s));
    }
    out.write_bytes("surv_avg.csv", mean.as_bytes())?;
    out.write_json(
        "surv.json",
        &SurvJson {
            format_version: FORMAT_VERSION,
            times: curves.times.clone(),
            subjects: curves.labels.clone(),
            surv: curves.surv.rows().into_iter().map(|r| r.to_vec()).collect(),
            average: avg,
        },
    )?;
    say(
        cli,
        format!("{} survival curves over {} event times", curves.labels.len(), curves.times.len()),
    );
    Ok(())
}

fn cmd_concordance(a: &ConcordanceArgs, out: &mut OutDir) -> Result<()> {
    let fitted = read_fit(&a.fit)?;
    let d = read_data(&a.data)?;
    check_columns(&fitted, &d, &a.data)?;
    let z = fitted.scaling.apply(&d)?;
    let beta = retained_coefs(&fitted);
    let scores: Vec<f64> = z
        .records()
        .iter()
        .map(|r| r.covariates.iter().zip(beta.iter()).map(|(x, b)| x * b).sum())
        .collect();
    let c = concordance(&scores, d.records())?;
    let json = ConcordanceJson {
        format_version: FORMAT_VERSION,
        c: c.c,
        ci_low: c.ci_low,
        ci_high: c.ci_high,
        se: c.se,
        concordant: c.concordant,
        discordant: c.discordant,
        tied: c.tied,
        n_rows: d.n_rows(),
    };
    out.write_json("concordance.json", &json)?;
    println!("{}", serde_json::to_string(&json).expect("serializable"));
    Ok(())
}
