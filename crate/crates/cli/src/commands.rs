use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use spherefit::analysis::{
    beta_metric, convergence_study, derive_seed, discrepancy_probe, effective_dimension,
    error_norm, stability_functional, NormEvaluator, ScenarioConfig, Target,
};
use spherefit::distributed::DcModel;
use spherefit::estimator::{fit_wsfa, DataSet, WeightedSpectrum};
use spherefit::geometry::{
    fibonacci_points, geometry_stats, random_uniform_points, DEFAULT_GRID_RESOLUTION,
};
use spherefit::io::{read_points, read_samples, write_fitted, write_points, write_rule};
use spherefit::kernel::KernelSpec;
use spherefit::quadrature::{compute_weights, is_dtype, max_exact_degree, QuadratureRule};
use spherefit::selection::{
    calibrate_kappa, default_kappa_candidates, filter_at, lepskii_select_with, oracle_best_lambda,
    LepskiiConfig, LepskiiPath,
};

use crate::config::{RunConfig, NOISE_STREAM, POINTS_STREAM, PROBE_STREAM};
use crate::{CliError, Job, PointKind};

/// Runs a job and returns the names of the files written.
pub fn run(job: &Job, seed: u64, out: &Path) -> Result<Vec<String>, CliError> {
    if !job.writes_file() {
        fs::create_dir_all(out).map_err(|e| CliError::io(format!("{}: {e}", out.display())))?;
    }
    let mut sink = Sink::new(out);
    match job {
        Job::GenPoints { kind, n } => gen_points(*kind, *n, seed, out)?,
        Job::Quadrature {
            points,
            degree,
            tol,
            c_star,
            equal_weights,
        } => quadrature(points, *degree, *tol, *c_star, *equal_weights, out)?,
        Job::Fit { config } => fit(config, seed, &mut sink)?,
        Job::Lepskii { config } => lepskii(config, seed, &mut sink)?,
        Job::Dcfit {
            config,
            parts,
            filter,
            lambda,
        } => dcfit(config, seed, *parts, filter.as_deref(), *lambda, &mut sink)?,
        Job::Study { config } => study(config, &mut sink)?,
        Job::Diagnostics { config } => diagnostics(config, seed, &mut sink)?,
        Job::Calibrate {
            config,
            trials,
            ratio,
        } => calibrate(config, seed, *trials, *ratio, &mut sink)?,
    }
    if job.writes_file() {
        let name = out
            .file_name()
            .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        return Ok(vec![name]);
    }
    Ok(sink.written)
}

/// Output directory that remembers what was written.
struct Sink<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl<'a> Sink<'a> {
    fn new(dir: &'a Path) -> Self {
        Self {
            dir,
            written: Vec::new(),
        }
    }

    fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(e.to_string()))?;
        self.text(name, &(text + "\n"))
    }

    /// Writes a CSV plus its JSON sidecar through `write`.
    fn with_sidecar(
        &mut self,
        name: &str,
        write: impl FnOnce(&Path) -> spherefit::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.dir.join(name);
        write(&path)?;
        self.written.push(name.to_string());
        self.written.push(
            spherefit::io::sidecar_path(Path::new(name))
                .to_string_lossy()
                .into_owned(),
        );
        Ok(())
    }
}

fn gen_points(kind: PointKind, n: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    let ps = match kind {
        PointKind::Fibonacci => fibonacci_points(n)?,
        PointKind::Random => random_uniform_points(n, derive_seed(seed, &[POINTS_STREAM]))?,
    };
    Ok(write_points(out, &ps)?)
}

fn quadrature(
    points: &Path,
    degree: usize,
    tol: f64,
    c_star: f64,
    equal: bool,
    out: &Path,
) -> Result<(), CliError> {
    let ps = read_points(points).map_err(|e| CliError::input(points, e))?;
    let rule = if equal {
        QuadratureRule::equal_weights(ps, degree, tol)?
    } else {
        compute_weights(&ps, degree, tol)?
    };
    println!(
        "degree {} residual {:e} max_exact_degree {} scaled_max_weight {} dtype {}",
        rule.degree(),
        rule.residual(),
        max_exact_degree(&rule, tol),
        rule.scaled_max_weight(),
        is_dtype(&rule, c_star)
    );
    Ok(write_rule(out, &rule, c_star)?)
}

/// Data, kernel and ground truth of a run config.
struct Prepared {
    kernel: KernelSpec,
    data: DataSet,
    target: Option<Target>,
}

fn prepare(cfg: &RunConfig, seed: u64) -> Result<Prepared, CliError> {
    let kernel = cfg.kernel.build()?;
    let target = cfg.target(&kernel)?;
    let data = match (&cfg.data, &cfg.points) {
        (Some(path), _) => {
            let (ps, y) = read_samples(path, "y").map_err(|e| CliError::input(path, e))?;
            let data = DataSet::new(ps, y)?;
            match &target {
                Some(t) => {
                    let clean = t.evaluate(data.points())?;
                    data.with_clean_values(clean)?
                }
                None => data,
            }
        }
        (None, Some(points)) => {
            let ps = points.build(seed)?;
            let t = target
                .as_ref()
                .ok_or_else(|| CliError::config("synthetic data needs a \"target\""))?;
            let clean = t.evaluate(&ps)?;
            let noise = match &cfg.noise {
                Some(kind) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[NOISE_STREAM]));
                    kind.sample(ps.len(), &mut rng)?
                }
                None => vec![0.0; ps.len()],
            };
            let y = clean.iter().zip(&noise).map(|(c, e)| c + e).collect();
            DataSet::new(ps, y)?.with_clean_values(clean)?
        }
        (None, None) => return Err(CliError::config("config needs \"data\" or \"points\"")),
    };
    Ok(Prepared {
        kernel,
        data,
        target,
    })
}

fn rule_for(cfg: &RunConfig, data: &DataSet) -> Result<QuadratureRule, CliError> {
    Ok(compute_weights(
        data.points(),
        cfg.quadrature.degree_for(data.len()),
        cfg.quadrature.tol,
    )?)
}

fn rule_summary(rule: &QuadratureRule, c_star: f64) -> serde_json::Value {
    json!({
        "degree": rule.degree(),
        "residual": rule.residual(),
        "scaled_max_weight": rule.scaled_max_weight(),
        "is_dtype": is_dtype(rule, c_star),
    })
}

fn fit(cfg: &RunConfig, seed: u64, sink: &mut Sink) -> Result<(), CliError> {
    let p = prepare(cfg, seed)?;
    let rule = rule_for(cfg, &p.data)?;
    let filter = filter_at(&cfg.family()?, cfg.lambda()?)?;
    let f = fit_wsfa(&p.data, &rule, &p.kernel, &filter)?;
    let error = p
        .target
        .as_ref()
        .map(|t| error_norm(&f, t, cfg.beta))
        .transpose()?;
    sink.with_sidecar("fit.csv", |path| write_fitted(path, &f))?;
    sink.with_sidecar("rule.csv", |path| {
        write_rule(path, &rule, cfg.quadrature.c_star)
    })?;
    sink.json(
        "summary.json",
        &json!({
            "n": p.data.len(),
            "k_max": p.kernel.k_max(),
            "filter": filter.to_string(),
            "lambda": filter.lambda(),
            "rule": rule_summary(&rule, cfg.quadrature.c_star),
            "metric": beta_metric(cfg.beta),
            "error": error,
        }),
    )
}

fn trace_csv(trace: &[spherefit::selection::TraceRow]) -> String {
    let mut out = String::from("k,lambda,statistic,threshold,accepted\n");
    for r in trace {
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{}",
            r.k, r.lambda, r.statistic, r.threshold, r.accepted
        );
    }
    out
}

fn lepskii(cfg: &RunConfig, seed: u64, sink: &mut Sink) -> Result<(), CliError> {
    let p = prepare(cfg, seed)?;
    let rule = rule_for(cfg, &p.data)?;
    let spectrum = WeightedSpectrum::new(&rule, &p.kernel)?;
    let family = cfg.family()?;
    let lcfg = cfg.lepskii.unwrap_or_default();
    let outcome = lepskii_select_with(&spectrum, p.data.values(), &family, &lcfg)?;
    let f = spectrum.fit(p.data.values(), &outcome.filter)?;
    let mut summary = json!({
        "n": p.data.len(),
        "filter": outcome.filter.to_string(),
        "lepskii": lcfg,
        "lambda_hat": outcome.lambda_hat,
        "k_hat": outcome.k_hat,
        "grid": outcome.grid,
        "rule": rule_summary(&rule, cfg.quadrature.c_star),
    });
    if let Some(t) = &p.target {
        let evaluator = NormEvaluator::new(p.data.points(), t, cfg.beta)?;
        let (best, idx, errors) = oracle_best_lambda(
            &spectrum,
            p.data.values(),
            &family,
            &outcome.grid,
            &evaluator,
        )?;
        summary["metric"] = json!(beta_metric(cfg.beta));
        summary["error"] = json!(errors[outcome.k_hat - 1]);
        summary["oracle"] = json!({ "lambda": best, "k": idx + 1, "errors": errors });
    }
    sink.text("trace.csv", &trace_csv(&outcome.trace))?;
    sink.with_sidecar("fit.csv", |path| write_fitted(path, &f))?;
    sink.json("selection.json", &summary)
}

fn dcfit(
    cfg: &RunConfig,
    seed: u64,
    parts: Option<usize>,
    filter: Option<&str>,
    lambda: Option<f64>,
    sink: &mut Sink,
) -> Result<(), CliError> {
    let p = prepare(cfg, seed)?;
    let dc = cfg.dc(parts, filter, lambda)?;
    let model = DcModel::new(p.data.points(), &dc, &p.kernel)?;
    let f = model.fit(p.data.values())?;
    let reports = match &p.target {
        Some(t) => model.reports_with_errors(p.data.values(), t, cfg.beta)?,
        None => model.reports(),
    };
    let mut table =
        String::from("block,size,mesh_ratio,degree,residual,is_dtype,fallback,local_error\n");
    for r in &reports {
        let err = r
            .local_error
            .map_or_else(String::new, |e| format!("{e:.16e}"));
        let _ = writeln!(
            table,
            "{},{},{:.16e},{},{:.16e},{},{},{}",
            r.block, r.size, r.mesh_ratio, r.degree, r.residual, r.is_dtype, r.fallback, err
        );
    }
    let error = p
        .target
        .as_ref()
        .map(|t| error_norm(&f, t, cfg.beta))
        .transpose()?;
    sink.with_sidecar("fit.csv", |path| write_fitted(path, &f))?;
    sink.text("subsets.csv", &table)?;
    sink.json(
        "summary.json",
        &json!({
            "n": p.data.len(),
            "parts": reports.len(),
            "filter": dc.family.at(dc.lambda)?.to_string(),
            "lambda": dc.lambda,
            "metric": beta_metric(cfg.beta),
            "error": error,
        }),
    )
}

fn study(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<(), CliError> {
    let result = convergence_study(cfg)?;
    let mut slopes = BTreeMap::new();
    for metric in result.summary.iter().map(|s| s.metric.clone()) {
        if slopes.contains_key(&metric) {
            continue;
        }
        if let Ok(s) = result.slope(&metric) {
            slopes.insert(metric, s);
        }
    }
    sink.text("rows.csv", &result.rows_csv())?;
    sink.text("summary.csv", &result.summary_csv())?;
    sink.json("slopes.json", &slopes)
}

fn diagnostics(cfg: &RunConfig, seed: u64, sink: &mut Sink) -> Result<(), CliError> {
    let p = prepare(cfg, seed)?;
    let rule = rule_for(cfg, &p.data)?;
    let stats = geometry_stats(p.data.points(), DEFAULT_GRID_RESOLUTION)?;
    let mut report = json!({
        "n": p.data.len(),
        "k_max": p.kernel.k_max(),
        "geometry": {
            "mesh_norm": stats.mesh_norm,
            "separation_radius": stats.separation_radius,
            "mesh_ratio": stats.mesh_ratio,
        },
        "rule": rule_summary(&rule, cfg.quadrature.c_star),
        "max_exact_degree": max_exact_degree(&rule, cfg.quadrature.tol),
    });
    if let Some(lambda) = cfg.lambda {
        report["lambda"] = json!(lambda);
        report["effective_dimension"] = json!(effective_dimension(&p.kernel, lambda)?);
        if p.data.clean_values().is_some() {
            report["stability"] = json!(stability_functional(&p.data, &rule, &p.kernel, lambda)?);
        }
        let alpha = p.target.as_ref().and_then(Target::alpha).unwrap_or(1.0);
        let probe = discrepancy_probe(
            &rule,
            &p.kernel,
            alpha,
            lambda,
            0.5,
            20,
            derive_seed(seed, &[PROBE_STREAM]),
        )?;
        report["discrepancy_probe"] =
            json!({ "alpha": alpha, "u": 0.5, "trials": 20, "value": probe });
    }
    sink.json("diagnostics.json", &report)
}

fn calibrate(
    cfg: &RunConfig,
    seed: u64,
    trials: usize,
    ratio: f64,
    sink: &mut Sink,
) -> Result<(), CliError> {
    if trials == 0 {
        return Err(CliError::config("calibration needs at least one trial"));
    }
    if cfg.data.is_some() {
        return Err(CliError::config(
            "calibration runs on synthetic data; remove \"data\"",
        ));
    }
    let kernel = cfg.kernel.build()?;
    let target = cfg
        .target(&kernel)?
        .ok_or_else(|| CliError::config("calibration needs a \"target\""))?;
    let noise = cfg
        .noise
        .ok_or_else(|| CliError::config("calibration needs \"noise\""))?;
    let ps = cfg
        .points
        .as_ref()
        .ok_or_else(|| CliError::config("calibration needs \"points\""))?
        .build(seed)?;
    let clean = target.evaluate(&ps)?;
    let rule = compute_weights(&ps, cfg.quadrature.degree_for(ps.len()), cfg.quadrature.tol)?;
    let spectrum = WeightedSpectrum::new(&rule, &kernel)?;
    let evaluator = NormEvaluator::new(&ps, &target, cfg.beta)?;
    let family = cfg.family()?;
    let lcfg: LepskiiConfig = cfg.lepskii.unwrap_or_default();
    let paths = (0..trials as u64)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[NOISE_STREAM, t]));
            let e = noise.sample(ps.len(), &mut rng)?;
            let y: Vec<f64> = clean.iter().zip(&e).map(|(c, e)| c + e).collect();
            let path = LepskiiPath::new(&spectrum, &y, &family, &lcfg)?;
            let errors = path.errors(&evaluator)?;
            Ok((path, errors))
        })
        .collect::<spherefit::Result<Vec<_>>>()?;
    let calibration = calibrate_kappa(&paths, &default_kappa_candidates(), lcfg.rule, ratio)?;
    sink.json(
        "calibration.json",
        &json!({
            "kappa_lp": calibration.kappa,
            "agreement": calibration.agreement,
            "ratio": calibration.ratio,
            "trials": trials,
            "metric": beta_metric(cfg.beta),
            "lepskii": lcfg.with_kappa(calibration.kappa),
            "curve": calibration.curve,
        }),
    )
}
