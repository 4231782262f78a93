use anyhow::{bail, Context, Result};
use serde::Serialize;

use ce_survey::design::{self, inclusion_frequencies, pps_first_order, SampleDraw, SchemeSpec};
use ce_survey::el::{maximize_ce, SolverOptions, SolverPath};
use ce_survey::mc::{normal_quantile, run_study, write_histogram_csv, write_report, MCReport};
use ce_survey::model::{ModelKind, Observations};
use ce_survey::population::{save_population, synth_population, write_population, Schema, SynthSpec};
use ce_survey::variance::{
    hartley_rao_var, linearized_values, prediction_variance, sandwich_vce, ygs_var, VarianceEstimate,
    VarianceTarget,
};
use ce_survey::visibility::{parse_basis, passthrough_visibility, smoothed_visibility, Covariates};
use ce_survey::Population;

use crate::output::{load, resolve_seed, with_sink, write_json};
use crate::{study, EstimateArgs, Format, Global, InclusionArgs, SampleArgs, SimulateArgs, SynthArgs, VisibilityChoice};

#[derive(Debug, Serialize)]
struct VarianceReport {
    method: &'static str,
    /// Per-parameter standard errors; `null` when the estimator is undefined.
    se: Option<Vec<f64>>,
    valid: bool,
    approximate: bool,
}

impl VarianceReport {
    fn from(est: &VarianceEstimate<f64>) -> Self {
        Self {
            method: est.method.as_str(),
            se: est.se(),
            valid: est.valid,
            approximate: est.approximate,
        }
    }
}

#[derive(Debug, Serialize)]
struct EstimateReport {
    model: ModelKind,
    path: SolverPath,
    visibility: &'static str,
    n: usize,
    population_size: usize,
    theta_hat: Vec<f64>,
    /// Sandwich standard errors.
    se: Vec<f64>,
    /// Normal-theory interval `θ̂ ± z·se` at `level`.
    ci: Vec<[f64; 2]>,
    level: f64,
    /// Standard errors with the finite-population correction.
    prediction_se: Vec<f64>,
    kappa: Vec<f64>,
    loglik: f64,
    converged: bool,
    boundary: bool,
    inner_iterations: usize,
    outer_iterations: usize,
    variances: Vec<VarianceReport>,
}

fn draw_for_estimate(global: &Global, args: &EstimateArgs, pop: &Population) -> Result<SampleDraw> {
    if let Some(path) = &args.scheme_file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let draw: SampleDraw = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        draw.validate(pop.len())?;
        return Ok(draw);
    }
    // clap guarantees both when no scheme file is given
    let (Some(kind), Some(n)) = (args.scheme, args.n) else {
        bail!("either --scheme-file or both --scheme and --n are required");
    };
    let target = pps_first_order(&pop.sizes(), n)?;
    let spec = SchemeSpec::new(kind, n, resolve_seed(global));
    Ok(design::draw(&target, &spec)?)
}

/// Sample observations laid out for `kind`: regression models get the
/// auxiliary columns (with a leading 1 unless suppressed); the others none.
fn model_observations(kind: ModelKind, pop: &Population, ids: &[usize], intercept: bool) -> Result<Observations<f64>> {
    let obs = pop.observations(ids)?;
    match kind {
        ModelKind::Proportion | ModelKind::Mean => Ok(Observations::response_only(obs.y)),
        ModelKind::Linear | ModelKind::Logistic => {
            let a: Vec<Vec<f64>> = obs
                .a
                .into_iter()
                .map(|row| if intercept { std::iter::once(1.0).chain(row).collect() } else { row })
                .collect();
            if a.first().is_none_or(|r| r.is_empty()) {
                bail!("{kind:?} model needs regressors: pass --col-aux or drop --no-intercept");
            }
            Ok(Observations::new(obs.y, a)?)
        }
    }
}

pub fn estimate(global: &Global, args: &EstimateArgs) -> Result<()> {
    if !(args.level > 0.0 && args.level < 1.0) {
        bail!("--level must lie in (0, 1)");
    }
    let pop = load(&args.pop)?;
    let draw = draw_for_estimate(global, args, &pop)?;
    let obs = model_observations(args.model, &pop, &draw.indices, !args.no_intercept)?;
    let model = args.model.build::<f64>(obs.aux_dim())?;

    let nu = match args.visibility {
        VisibilityChoice::Passthrough => passthrough_visibility(&draw.pi)?.nu,
        VisibilityChoice::Smooth => {
            let units: Vec<_> = draw.indices.iter().map(|&id| pop.unit(id).expect("validated id")).collect();
            let mut cov = Covariates::new().with("size", units.iter().map(|u| u.c).collect());
            for (k, name) in pop.aux_names().iter().enumerate() {
                cov = cov.with(name.clone(), units.iter().map(|u| u.a[k]).collect());
            }
            let (fit, vis) = smoothed_visibility(&draw.pi, &cov, &parse_basis(&args.smooth_basis)?)?;
            log::info!("visibility fit coefficients {:?}, {} clamped", fit.alpha, fit.clamped);
            vis.nu
        }
    };

    let sol = maximize_ce(model.as_ref(), &obs, &nu, None, args.path, &SolverOptions::default())?;
    let sandwich = sandwich_vce(model.as_ref(), &obs, &sol)?;
    let Some(se) = sandwich.se() else {
        bail!("sandwich variance is undefined for this sample");
    };
    let z = normal_quantile(args.level)?;
    let ci = sol.theta.iter().zip(&se).map(|(t, s)| [t - z * s, t + z * s]).collect();
    let prediction = prediction_variance(&sandwich, obs.len(), pop.len())?;

    let mut variances = vec![VarianceReport::from(&sandwich), VarianceReport::from(&prediction)];
    if let Ok(lin) = linearized_values(model.as_ref(), &obs, &sol) {
        // design-based estimators applied to each coordinate of the linearized values
        let column = |k: usize| lin.iter().map(|v| v[k]).collect::<Vec<f64>>();
        let p = sol.theta.len();
        let per_coord = |f: &dyn Fn(&[f64]) -> ce_survey::Result<VarianceEstimate<f64>>| -> Option<VarianceReport> {
            let ests: Vec<VarianceEstimate<f64>> = (0..p).map(|k| f(&column(k))).collect::<ce_survey::Result<_>>().ok()?;
            let valid = ests.iter().all(|e| e.valid);
            Some(VarianceReport {
                method: ests[0].method.as_str(),
                se: valid.then(|| ests.iter().map(|e| e.se().expect("valid")[0]).collect()),
                valid,
                approximate: ests[0].approximate,
            })
        };
        variances.extend(per_coord(&|v| hartley_rao_var(v, &draw.pi, VarianceTarget::Hajek, None)));
        if draw.joint_pi.is_some() {
            variances.extend(per_coord(&|v| ygs_var(v, &draw.pi, draw.joint_pi.as_ref(), VarianceTarget::Hajek)));
        }
    }

    if let Some(path) = &args.dump_weights {
        with_sink(Some(path), |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["id", "weight"])?;
            for (id, wt) in draw.indices.iter().zip(&sol.weights) {
                csv.write_record([id.to_string(), wt.to_string()])?;
            }
            csv.flush()?;
            Ok(())
        })?;
    }

    let report = EstimateReport {
        model: args.model,
        path: sol.path,
        visibility: match args.visibility {
            VisibilityChoice::Passthrough => "passthrough",
            VisibilityChoice::Smooth => "smooth",
        },
        n: obs.len(),
        population_size: pop.len(),
        se: se.clone(),
        ci,
        level: args.level,
        prediction_se: prediction.se().unwrap_or_default(),
        theta_hat: sol.theta.clone(),
        kappa: sol.kappa.clone(),
        loglik: sol.loglik,
        converged: sol.converged,
        boundary: sol.boundary,
        inner_iterations: sol.iterations.inner,
        outer_iterations: sol.iterations.outer,
        variances,
    };
    match global.format.unwrap_or(Format::Json) {
        Format::Json => write_json(global.out.as_deref(), &report),
        Format::Csv => with_sink(global.out.as_deref(), |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["param", "theta_hat", "se", "ci_lo", "ci_hi"])?;
            for (k, ((t, s), [lo, hi])) in report.theta_hat.iter().zip(&report.se).zip(&report.ci).enumerate() {
                csv.write_record([k.to_string(), t.to_string(), s.to_string(), lo.to_string(), hi.to_string()])?;
            }
            csv.flush()?;
            Ok(())
        }),
    }
}

fn write_cells_csv(report: &MCReport, w: &mut dyn std::io::Write) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record([
        "scheme",
        "estimator",
        "truth",
        "mean_estimate",
        "mc_se",
        "observed_rmse",
        "variance",
        "mean_se",
        "coverage",
        "na_count",
        "failures",
    ])?;
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    for cell in &report.cells {
        for v in &cell.variances {
            csv.write_record([
                cell.scheme.to_string(),
                format!("{:?}", cell.estimator).to_lowercase(),
                cell.truth.to_string(),
                cell.mean_estimate.to_string(),
                cell.mc_se.to_string(),
                cell.observed_rmse.to_string(),
                v.method.to_string(),
                opt(v.mean_se),
                opt(v.coverage),
                v.na_count.to_string(),
                cell.failures.to_string(),
            ])?;
        }
    }
    csv.flush()?;
    Ok(())
}

pub fn simulate(global: &Global, args: &SimulateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let study::StudyFile { model, mut config, has_seed } = study::parse(&text)?;
    if let Some(seed) = global.seed {
        config.seed = seed;
    } else if !has_seed {
        config.seed = resolve_seed(global);
    }
    if global.threads.is_some() {
        config.threads = global.threads;
    }
    let pop = load(&args.pop)?;
    let model_fn = model.build::<f64>(0)?;
    let report = run_study(&config, &pop, model_fn.as_ref())?;
    for (scheme, count) in &report.empty_redraws {
        if *count > 0 {
            log::info!("{scheme}: {count} empty samples redrawn");
        }
    }
    if let Some(path) = &args.hist_out {
        with_sink(Some(path), |w| Ok(write_histogram_csv(&report, w)?))?;
    }
    match global.format.unwrap_or(Format::Json) {
        Format::Json => with_sink(global.out.as_deref(), |w| {
            write_report(&report, &mut *w)?;
            writeln!(w)?;
            Ok(())
        }),
        Format::Csv => with_sink(global.out.as_deref(), |w| write_cells_csv(&report, w)),
    }
}

pub fn sample(global: &Global, args: &SampleArgs) -> Result<()> {
    let pop = load(&args.pop)?;
    let target = pps_first_order(&pop.sizes(), args.n)?;
    let mut spec = SchemeSpec::new(args.scheme, args.n, resolve_seed(global));
    spec.frame_order = args.frame_order;
    let draw = design::draw(&target, &spec)?;
    match global.format.unwrap_or(Format::Json) {
        Format::Json => write_json(global.out.as_deref(), &draw),
        Format::Csv => with_sink(global.out.as_deref(), |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["id", "pi"])?;
            for (id, p) in draw.indices.iter().zip(&draw.pi) {
                csv.write_record([id.to_string(), p.to_string()])?;
            }
            csv.flush()?;
            Ok(())
        }),
    }
}

#[derive(Debug, Serialize)]
struct InclusionRow {
    id: usize,
    target: f64,
    empirical: f64,
    abs_dev: f64,
    max_abs_dev: f64,
}

pub fn inclusion(global: &Global, args: &InclusionArgs) -> Result<()> {
    let pop = load(&args.pop)?;
    let target = pps_first_order(&pop.sizes(), args.n)?;
    let mut spec = SchemeSpec::new(args.scheme, args.n, resolve_seed(global));
    spec.frame_order = args.frame_order;
    let freq = inclusion_frequencies(&target, &spec, args.reps)?;
    let max_abs_dev = target.pi.iter().zip(&freq).map(|(p, f)| (p - f).abs()).fold(0.0, f64::max);
    let rows: Vec<InclusionRow> = target
        .pi
        .iter()
        .zip(&freq)
        .enumerate()
        .map(|(k, (&p, &f))| InclusionRow { id: k + 1, target: p, empirical: f, abs_dev: (p - f).abs(), max_abs_dev })
        .collect();
    match global.format.unwrap_or(Format::Csv) {
        Format::Json => write_json(global.out.as_deref(), &rows),
        Format::Csv => with_sink(global.out.as_deref(), |w| {
            let mut csv = csv::Writer::from_writer(w);
            for row in &rows {
                csv.serialize(row)?;
            }
            csv.flush()?;
            Ok(())
        }),
    }
}

pub fn synth(global: &Global, args: &SynthArgs) -> Result<()> {
    if global.format == Some(Format::Json) {
        bail!("synth writes CSV only");
    }
    let spec = SynthSpec {
        n_units: args.units,
        prop_true: args.prop,
        size_law: args.size_law,
        size_outcome_corr: args.corr,
        seed: resolve_seed(global),
    };
    let pop = synth_population(&spec)?;
    let schema = Schema::new(args.col_y.clone(), args.col_size.clone());
    match global.out.as_deref() {
        Some(path) => save_population(&pop, path, &schema)?,
        None => write_population(&pop, std::io::stdout().lock(), &schema)?,
    }
    Ok(())
}
