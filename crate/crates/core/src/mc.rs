//! Monte Carlo study harness: repeated draws, CE/HT/Hájek estimates, their
//! variance estimates, Gaussian intervals and per-scheme summaries.
//!
//! Replicate `r` of scheme `s` draws from a ChaCha stream seeded with
//! `seed + r` on stream `s`. Replicates are collected in order and folded
//! sequentially, so reports are identical for any thread count.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::design::{pps_first_order, FrameOrder, PpsTarget, Sampler, SchemeKind};
use crate::el::{maximize_ce, PathChoice, SolverOptions};
use crate::error::{Error, Result};
use crate::model::EstimatingFunction;
use crate::population::{census_parameter, Population};
use crate::variance::{
    hajek_mean, hartley_rao_var, ht_mean, linearized_values, sandwich_vce, ygs_var, VarianceTarget,
};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Ce,
    Ht,
    Hajek,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Ce => "ce",
            Estimator::Ht => "ht",
            Estimator::Hajek => "hajek",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" => Ok(Estimator::Ce),
            "ht" => Ok(Estimator::Ht),
            "hajek" => Ok(Estimator::Hajek),
            _ => Err(Error::Validation(format!("unknown estimator `{s}` (expected ce, ht or hajek)"))),
        }
    }
}

/// Standard errors the study can attach to a replicate's estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyVariance {
    /// Sandwich estimate; CE only.
    CeSandwich,
    /// Study-wide RMSE, identical for every replicate.
    Observed,
    HartleyRao,
    Ygs,
}

impl StudyVariance {
    pub fn as_str(self) -> &'static str {
        match self {
            StudyVariance::CeSandwich => "ce_sandwich",
            StudyVariance::Observed => "observed",
            StudyVariance::HartleyRao => "hartley_rao",
            StudyVariance::Ygs => "ygs",
        }
    }

    fn applies_to(self, est: Estimator) -> bool {
        !(self == StudyVariance::CeSandwich && est != Estimator::Ce)
    }
}

impl fmt::Display for StudyVariance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StudyVariance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce_sandwich" | "sandwich" => Ok(StudyVariance::CeSandwich),
            "observed" => Ok(StudyVariance::Observed),
            "hartley_rao" | "hr" => Ok(StudyVariance::HartleyRao),
            "ygs" => Ok(StudyVariance::Ygs),
            _ => Err(Error::Validation(format!(
                "unknown variance method `{s}` (expected ce_sandwich, observed, hartley_rao or ygs)"
            ))),
        }
    }
}

fn default_nominal() -> f64 {
    0.95
}

fn default_bins() -> usize {
    50
}

fn default_estimators() -> Vec<Estimator> {
    vec![Estimator::Ce, Estimator::Ht, Estimator::Hajek]
}

fn default_variances() -> Vec<StudyVariance> {
    vec![
        StudyVariance::CeSandwich,
        StudyVariance::Observed,
        StudyVariance::HartleyRao,
        StudyVariance::Ygs,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MCStudyConfig {
    pub schemes: Vec<SchemeKind>,
    #[serde(default)]
    pub frame_order: FrameOrder,
    pub n: usize,
    pub reps: usize,
    #[serde(default = "default_nominal")]
    pub nominal: f64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Estimator>,
    #[serde(default = "default_variances")]
    pub variance_methods: Vec<StudyVariance>,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

impl MCStudyConfig {
    pub fn new(schemes: Vec<SchemeKind>, n: usize, reps: usize, seed: u64) -> Self {
        Self {
            schemes,
            frame_order: FrameOrder::AsGiven,
            n,
            reps,
            nominal: default_nominal(),
            estimators: default_estimators(),
            variance_methods: default_variances(),
            seed,
            threads: None,
            bins: default_bins(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::Validation("no sampling schemes configured".into()));
        }
        if self.reps == 0 {
            return Err(Error::Validation("reps must be at least 1".into()));
        }
        if !(self.nominal > 0.0 && self.nominal < 1.0) {
            return Err(Error::Validation(format!("nominal level {} outside (0,1)", self.nominal)));
        }
        if self.estimators.is_empty() {
            return Err(Error::Validation("no estimators configured".into()));
        }
        if self.bins == 0 {
            return Err(Error::Validation("bins must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Validation("threads must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    #[serde(deserialize_with = "nullable_f64")]
    pub lo: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn build(values: &[f64], bins: usize) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut counts = vec![0u64; bins];
        if values.is_empty() {
            return Self { lo: 0.0, hi: 0.0, counts };
        }
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let k = if width > 0.0 {
                (((v - lo) / width) as usize).min(bins - 1)
            } else {
                0
            };
            counts[k] += 1;
        }
        Self { lo, hi, counts }
    }

    pub fn edges(&self) -> Vec<(f64, f64)> {
        let bins = self.counts.len();
        let width = (self.hi - self.lo) / bins as f64;
        (0..bins)
            .map(|k| (self.lo + width * k as f64, if k + 1 == bins { self.hi } else { self.lo + width * (k + 1) as f64 }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceSummary {
    pub method: StudyVariance,
    /// Mean SE over all replicates; `None` (NA) when any replicate was NA.
    pub mean_se: Option<f64>,
    /// Mean SE over the replicates where it was defined.
    pub mean_se_valid: Option<f64>,
    /// Interval coverage over replicates with a defined SE.
    pub coverage: Option<f64>,
    pub na_count: usize,
}

/// JSON writes NaN as `null`; read it back as NaN.
fn nullable_f64<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// Summary of one estimator under one scheme. Float fields are NaN (`null`
/// in JSON) when every replicate failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub scheme: SchemeKind,
    pub estimator: Estimator,
    pub truth: f64,
    /// Replicates whose estimator failed and were excluded.
    pub failures: usize,
    #[serde(deserialize_with = "nullable_f64")]
    pub mean_estimate: f64,
    /// Monte Carlo standard error of `mean_estimate`.
    #[serde(deserialize_with = "nullable_f64")]
    pub mc_se: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub observed_rmse: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub min: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub max: f64,
    pub count_above_one: usize,
    pub variances: Vec<VarianceSummary>,
    pub histogram: Histogram,
}

impl CellReport {
    pub fn variance(&self, method: StudyVariance) -> Option<&VarianceSummary> {
        self.variances.iter().find(|v| v.method == method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCReport {
    pub format_version: u32,
    pub config: MCStudyConfig,
    pub model: String,
    pub population_size: usize,
    /// Census solution of the model.
    pub truth: f64,
    /// Population mean of the response (the HT and Hájek target).
    pub mean_response: f64,
    pub cells: Vec<CellReport>,
    /// Poisson only: empty samples redrawn, summed over replicates.
    pub empty_redraws: Vec<(SchemeKind, usize)>,
}

impl MCReport {
    pub fn cell(&self, scheme: SchemeKind, estimator: Estimator) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.scheme == scheme && c.estimator == estimator)
    }
}

/// Two-sided Gaussian quantile `z_{1−α/2}` for a nominal level.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Validation(format!("level {level} outside (0,1)")));
    }
    let std = Normal::standard();
    Ok(std.inverse_cdf(0.5 + level / 2.0))
}

/// Fraction of replicates with `|estimate − truth| ≤ z·se`, over entries
/// whose SE is defined. `None` when every SE is NA.
pub fn coverage(estimates: &[f64], ses: &[Option<f64>], truth: f64, level: f64) -> Result<Option<f64>> {
    if estimates.len() != ses.len() {
        return Err(Error::Validation(format!(
            "{} estimates but {} standard errors",
            estimates.len(),
            ses.len()
        )));
    }
    let z = normal_quantile(level)?;
    let mut hits = 0usize;
    let mut valid = 0usize;
    for (&e, se) in estimates.iter().zip(ses) {
        if let Some(se) = se {
            if *se < 0.0 || se.is_nan() {
                return Err(Error::Validation("standard errors must be non-negative".into()));
            }
            valid += 1;
            if (e - truth).abs() <= z * se {
                hits += 1;
            }
        }
    }
    Ok((valid > 0).then(|| hits as f64 / valid as f64))
}

/// One estimator's outcome in one replicate.
#[derive(Debug, Clone)]
struct Outcome {
    estimate: f64,
    ses: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
struct Replicate {
    outcomes: Vec<Option<Outcome>>,
    empty_redraws: usize,
}

struct Context<'a> {
    cfg: &'a MCStudyConfig,
    pop: &'a Population,
    model: &'a dyn EstimatingFunction<f64>,
    opts: SolverOptions<f64>,
}

impl Context<'_> {
    fn replicate(&self, sampler: &Sampler, stream: u64, r: usize) -> Replicate {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed.wrapping_add(r as u64));
        rng.set_stream(stream);
        let draw = sampler.draw(&mut rng);
        let outcomes = self
            .cfg
            .estimators
            .iter()
            .map(|&est| match self.estimate(est, &draw) {
                Ok(o) => Some(o),
                Err(e) => {
                    log::debug!("replicate {r}: {est} failed: {e}");
                    None
                }
            })
            .collect();
        Replicate {
            outcomes,
            empty_redraws: draw.empty_redraws,
        }
    }

    fn estimate(&self, est: Estimator, draw: &crate::design::SampleDraw) -> Result<Outcome> {
        let obs = self.pop.observations(&draw.indices)?;
        let pi = &draw.pi;
        let big_n = self.pop.len() as f64;
        let (estimate, values, target, sandwich) = match est {
            Estimator::Ce => {
                let sol = maximize_ce(self.model, &obs, pi, None, PathChoice::Auto, &self.opts)?;
                let lin: Vec<f64> = linearized_values(self.model, &obs, &sol)?.into_iter().map(|v| v[0]).collect();
                let sandwich = if self.cfg.variance_methods.contains(&StudyVariance::CeSandwich) {
                    Some(sandwich_vce(self.model, &obs, &sol)?)
                } else {
                    None
                };
                (sol.theta[0], lin, VarianceTarget::Hajek, sandwich)
            }
            Estimator::Ht => (
                ht_mean(&obs.y, pi, big_n)?,
                obs.y.clone(),
                VarianceTarget::HtMean { population_size: big_n },
                None,
            ),
            Estimator::Hajek => {
                let m = hajek_mean(&obs.y, pi)?;
                (m, obs.y.iter().map(|y| y - m).collect(), VarianceTarget::Hajek, None)
            }
        };
        let ses = self
            .cfg
            .variance_methods
            .iter()
            .map(|&method| match method {
                StudyVariance::CeSandwich => sandwich.as_ref().and_then(|v| v.se()).map(|s| s[0]),
                StudyVariance::Observed => None,
                StudyVariance::HartleyRao => hartley_rao_var(&values, pi, target, None)
                    .ok()
                    .and_then(|v| v.se())
                    .map(|s| s[0]),
                StudyVariance::Ygs => ygs_var(&values, pi, draw.joint_pi.as_ref(), target)
                    .ok()
                    .and_then(|v| v.se())
                    .map(|s| s[0]),
            })
            .collect();
        Ok(Outcome { estimate, ses })
    }
}

fn summarize(
    cfg: &MCStudyConfig,
    scheme: SchemeKind,
    est_index: usize,
    truth: f64,
    reps: &[Replicate],
) -> Result<CellReport> {
    let estimator = cfg.estimators[est_index];
    let ok: Vec<&Outcome> = reps.iter().filter_map(|r| r.outcomes[est_index].as_ref()).collect();
    let failures = reps.len() - ok.len();
    let estimates: Vec<f64> = ok.iter().map(|o| o.estimate).collect();
    let m = estimates.len() as f64;
    let (mean, mc_se, rmse, lo, hi) = if estimates.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    } else {
        let mean = estimates.iter().sum::<f64>() / m;
        let var = if estimates.len() > 1 {
            estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        let rmse = (estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / m).sqrt();
        let lo = estimates.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = estimates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (mean, (var / m).sqrt(), rmse, lo, hi)
    };
    let mut variances = Vec::new();
    for (k, &method) in cfg.variance_methods.iter().enumerate() {
        if !method.applies_to(estimator) {
            continue;
        }
        let ses: Vec<Option<f64>> = if method == StudyVariance::Observed {
            vec![(!estimates.is_empty()).then_some(rmse); ok.len()]
        } else {
            ok.iter().map(|o| o.ses[k]).collect()
        };
        let valid: Vec<f64> = ses.iter().flatten().copied().collect();
        let na_count = ses.len() - valid.len() + failures;
        let mean_se_valid = (!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64);
        variances.push(VarianceSummary {
            method,
            mean_se: if na_count == 0 { mean_se_valid } else { None },
            mean_se_valid,
            coverage: coverage(&estimates, &ses, truth, cfg.nominal)?,
            na_count,
        });
    }
    Ok(CellReport {
        scheme,
        estimator,
        truth,
        failures,
        mean_estimate: mean,
        mc_se,
        observed_rmse: rmse,
        min: lo,
        max: hi,
        count_above_one: estimates.iter().filter(|&&e| e > 1.0).count(),
        variances,
        histogram: Histogram::build(&estimates, cfg.bins),
    })
}

/// Runs the study: for every scheme, `reps` draws from the size-proportional
/// design, each estimated by every configured estimator with every
/// applicable variance method.
pub fn run_study(
    cfg: &MCStudyConfig,
    pop: &Population,
    model: &dyn EstimatingFunction<f64>,
) -> Result<MCReport> {
    cfg.validate()?;
    if model.param_dim() != 1 {
        return Err(Error::Validation(format!(
            "the study summarizes scalar parameters; model `{}` has dimension {}",
            model.name(),
            model.param_dim()
        )));
    }
    let truth = census_parameter(model, pop)?[0];
    let target = pps_first_order(&pop.sizes(), cfg.n)?;
    let work = || study_cells(cfg, pop, model, &target, truth);
    let (cells, empty_redraws) = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    Ok(MCReport {
        format_version: REPORT_FORMAT_VERSION,
        config: cfg.clone(),
        model: model.name().to_string(),
        population_size: pop.len(),
        truth,
        mean_response: pop.mean_response(),
        cells,
        empty_redraws,
    })
}

type CellsAndRedraws = (Vec<CellReport>, Vec<(SchemeKind, usize)>);

fn study_cells(
    cfg: &MCStudyConfig,
    pop: &Population,
    model: &dyn EstimatingFunction<f64>,
    target: &PpsTarget,
    truth: f64,
) -> Result<CellsAndRedraws> {
    let ctx = Context {
        cfg,
        pop,
        model,
        opts: SolverOptions::default(),
    };
    let want_joint = cfg.variance_methods.contains(&StudyVariance::Ygs);
    let mut cells = Vec::new();
    let mut redraws = Vec::new();
    for (s, &scheme) in cfg.schemes.iter().enumerate() {
        let sampler = Sampler::new(target, scheme, cfg.n, cfg.frame_order)?.with_joint(want_joint);
        let reps: Vec<Replicate> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| ctx.replicate(&sampler, s as u64, r))
            .collect();
        let mean_truth = pop.mean_response();
        for k in 0..cfg.estimators.len() {
            let t = if cfg.estimators[k] == Estimator::Ce { truth } else { mean_truth };
            cells.push(summarize(cfg, scheme, k, t, &reps)?);
        }
        redraws.push((scheme, reps.iter().map(|r| r.empty_redraws).sum()));
    }
    Ok((cells, redraws))
}

pub fn write_report<W: Write>(report: &MCReport, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, report)?;
    Ok(())
}

pub fn read_report<R: Read>(reader: R) -> Result<MCReport> {
    let report: MCReport = serde_json::from_reader(reader)?;
    if report.format_version != REPORT_FORMAT_VERSION {
        return Err(Error::Schema(format!(
            "report format version {} (expected {REPORT_FORMAT_VERSION})",
            report.format_version
        )));
    }
    Ok(report)
}

pub fn load_report(path: impl AsRef<Path>) -> Result<MCReport> {
    read_report(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Histogram bins as CSV: `scheme,estimator,bin,lo,hi,count`.
pub fn write_histogram_csv<W: Write>(report: &MCReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["scheme", "estimator", "bin", "lo", "hi", "count"])?;
    for cell in &report.cells {
        for (k, ((lo, hi), count)) in cell.histogram.edges().into_iter().zip(&cell.histogram.counts).enumerate() {
            w.write_record([
                cell.scheme.to_string(),
                cell.estimator.to_string(),
                k.to_string(),
                format!("{lo:?}"),
                format!("{hi:?}"),
                count.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
