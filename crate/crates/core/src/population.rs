//! Finite population records, CSV ingestion, a synthetic population
//! generator and census (finite-population) parameter solutions.

use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{EstimatingFunction, Observations};
use crate::newton::{solve_weighted_score, NewtonOptions};

/// One population unit. `id` is the 1-based row position in the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub id: usize,
    pub y: f64,
    pub a: Vec<f64>,
    /// Size measure driving the design; strictly positive.
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    units: Vec<UnitRecord>,
    aux_names: Vec<String>,
}

impl Population {
    /// Builds a population, re-assigning ids by position and validating sizes.
    pub fn new(mut units: Vec<UnitRecord>, aux_names: Vec<String>) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::Validation("population must contain at least one unit".into()));
        }
        for (k, u) in units.iter_mut().enumerate() {
            u.id = k + 1;
            if !(u.c > 0.0 && u.c.is_finite()) {
                return Err(Error::InvalidRow {
                    row: k + 1,
                    message: format!("size must be positive, got {}", u.c),
                });
            }
            if u.a.len() != aux_names.len() {
                return Err(Error::InvalidRow {
                    row: k + 1,
                    message: format!("expected {} auxiliary values", aux_names.len()),
                });
            }
        }
        Ok(Self { units, aux_names })
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn units(&self) -> &[UnitRecord] {
        &self.units
    }

    pub fn aux_names(&self) -> &[String] {
        &self.aux_names
    }

    /// Unit by 1-based id.
    pub fn unit(&self, id: usize) -> Option<&UnitRecord> {
        id.checked_sub(1).and_then(|k| self.units.get(k))
    }

    pub fn sizes(&self) -> Vec<f64> {
        self.units.iter().map(|u| u.c).collect()
    }

    pub fn responses(&self) -> Vec<f64> {
        self.units.iter().map(|u| u.y).collect()
    }

    pub fn mean_response(&self) -> f64 {
        self.units.iter().map(|u| u.y).sum::<f64>() / self.len() as f64
    }

    /// Observations for the listed unit ids, in the given order.
    pub fn observations(&self, ids: &[usize]) -> Result<Observations<f64>> {
        let mut y = Vec::with_capacity(ids.len());
        let mut a = Vec::with_capacity(ids.len());
        for &id in ids {
            let u = self
                .unit(id)
                .ok_or_else(|| Error::Validation(format!("unit id {id} not in population")))?;
            y.push(u.y);
            a.push(u.a.clone());
        }
        Observations::new(y, a)
    }

    pub fn all_observations(&self) -> Observations<f64> {
        Observations {
            y: self.responses(),
            a: self.units.iter().map(|u| u.a.clone()).collect(),
        }
    }
}

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub y: String,
    pub size: String,
    pub aux: Vec<String>,
    pub delimiter: u8,
}

impl Schema {
    pub fn new(y: impl Into<String>, size: impl Into<String>) -> Self {
        Self {
            y: y.into(),
            size: size.into(),
            aux: Vec::new(),
            delimiter: b',',
        }
    }

    pub fn with_aux(mut self, aux: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.aux = aux.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_delimiter(mut self, delimiter: u8) -> Self {
        self.delimiter = delimiter;
        self
    }
}

pub fn load_population(path: impl AsRef<Path>, schema: &Schema) -> Result<Population> {
    let file = std::fs::File::open(path)?;
    read_population(file, schema)
}

pub fn read_population<R: Read>(reader: R, schema: &Schema) -> Result<Population> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found in header")))
    };
    let y_col = find(&schema.y)?;
    let c_col = find(&schema.size)?;
    let aux_cols = schema
        .aux
        .iter()
        .map(|name| find(name))
        .collect::<Result<Vec<_>>>()?;

    let mut units = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let row = k + 1;
        let parse = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row,
                    column: name.to_string(),
                    value: raw.to_string(),
                })
        };
        let y = parse(y_col, &schema.y)?;
        let c = parse(c_col, &schema.size)?;
        if c <= 0.0 {
            return Err(Error::InvalidRow {
                row,
                message: format!("size column `{}` must be positive, got {c}", schema.size),
            });
        }
        let a = aux_cols
            .iter()
            .zip(&schema.aux)
            .map(|(&col, name)| parse(col, name))
            .collect::<Result<Vec<_>>>()?;
        units.push(UnitRecord { id: row, y, a, c });
    }
    Population::new(units, schema.aux.clone())
}

/// Writes the population as CSV with the schema's column names.
pub fn write_population<W: Write>(pop: &Population, writer: W, schema: &Schema) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(schema.delimiter)
        .from_writer(writer);
    let mut header = vec![schema.y.clone(), schema.size.clone()];
    header.extend(pop.aux_names.iter().cloned());
    wtr.write_record(&header)?;
    for u in &pop.units {
        let mut row = vec![format_float(u.y), format_float(u.c)];
        row.extend(u.a.iter().map(|&v| format_float(v)));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_population(pop: &Population, path: impl AsRef<Path>, schema: &Schema) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_population(pop, std::io::BufWriter::new(file), schema)
}

// shortest representation that parses back to the same f64
fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Distribution of the synthetic size measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum SizeLaw {
    LogNormal { mu: f64, sigma: f64 },
    Pareto { alpha: f64, x_min: f64 },
}

impl SizeLaw {
    /// Size at standard-normal score `z` (a monotone transform).
    fn quantile_at(&self, z: f64, normal: &Normal) -> f64 {
        match *self {
            SizeLaw::LogNormal { mu, sigma } => (mu + sigma * z).exp(),
            SizeLaw::Pareto { alpha, x_min } => {
                // upper tail 1 - Φ(z) = Φ(-z), computed directly to avoid cancellation
                let tail = normal.cdf(-z).max(f64::MIN_POSITIVE);
                x_min * tail.powf(-1.0 / alpha)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            SizeLaw::LogNormal { mu, sigma } => mu.is_finite() && sigma > 0.0 && sigma.is_finite(),
            SizeLaw::Pareto { alpha, x_min } => alpha > 0.0 && x_min > 0.0 && x_min.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid size law {self:?}")))
        }
    }
}

impl FromStr for SizeLaw {
    type Err = Error;

    /// Parses `lognormal:MU,SIGMA` or `pareto:ALPHA,XMIN`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("size law `{s}`: expected lognormal:MU,SIGMA or pareto:ALPHA,XMIN"));
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        let law = match (kind.trim(), nums.as_slice()) {
            ("lognormal", [mu, sigma]) => SizeLaw::LogNormal { mu: *mu, sigma: *sigma },
            ("pareto", [alpha, x_min]) => SizeLaw::Pareto { alpha: *alpha, x_min: *x_min },
            _ => return Err(bad()),
        };
        law.validate()?;
        Ok(law)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_units: usize,
    pub prop_true: f64,
    pub size_law: SizeLaw,
    /// Latent Gaussian-copula correlation between size and outcome.
    pub size_outcome_corr: f64,
    pub seed: u64,
}

/// Synthetic population with exactly `round(n_units·prop_true)` units having `y = 1`.
///
/// A latent normal score `z_i` drives the size through the size law's
/// quantile function; the outcome score is `ρ z_i + √(1−ρ²) e_i` and the
/// units with the largest outcome scores get `y = 1`.
pub fn synth_population(spec: &SynthSpec) -> Result<Population> {
    let SynthSpec {
        n_units,
        prop_true,
        size_law,
        size_outcome_corr: rho,
        seed,
    } = *spec;
    if n_units == 0 {
        return Err(Error::Validation("n_units must be positive".into()));
    }
    if !(prop_true > 0.0 && prop_true < 1.0) {
        return Err(Error::Validation(format!("prop_true must lie in (0,1), got {prop_true}")));
    }
    if prop_true * (n_units as f64) < 1.0 {
        return Err(Error::Validation(format!(
            "prop_true·n_units = {} yields no positive units",
            prop_true * n_units as f64
        )));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Validation(format!("correlation {rho} outside [-1,1]")));
    }
    size_law.validate()?;

    let winners = ((n_units as f64) * prop_true).round() as usize;
    let normal = Normal::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut size_scores = Vec::with_capacity(n_units);
    let mut outcome_scores = Vec::with_capacity(n_units);
    let resid = (1.0 - rho * rho).sqrt();
    for _ in 0..n_units {
        let z: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        size_scores.push(z);
        outcome_scores.push(rho * z + resid * e);
    }
    let mut order: Vec<usize> = (0..n_units).collect();
    order.sort_by(|&i, &j| outcome_scores[j].total_cmp(&outcome_scores[i]));
    let mut y = vec![0.0; n_units];
    for &k in &order[..winners] {
        y[k] = 1.0;
    }
    let units = (0..n_units)
        .map(|k| UnitRecord {
            id: k + 1,
            y: y[k],
            a: Vec::new(),
            c: size_law.quantile_at(size_scores[k], &normal),
        })
        .collect();
    Population::new(units, Vec::new())
}

/// Finite-population parameter: the root of `Σ_{i=1}^N ψ_θ(y_i, a_i) = 0`.
pub fn census_solution(
    model: &dyn EstimatingFunction<f64>,
    pop: &Population,
    init: &[f64],
) -> Result<Vec<f64>> {
    let obs = pop.all_observations();
    crate::model::check_compatible(model, &obs)?;
    let ones = vec![1.0; pop.len()];
    let opts = NewtonOptions {
        max_iter: 200,
        max_halvings: 60,
        tol: 1e-10 * pop.len() as f64,
    };
    Ok(solve_weighted_score(model, &obs, &ones, init, opts)?.theta)
}

/// Census solution started from the model's own initializer.
pub fn census_parameter(model: &dyn EstimatingFunction<f64>, pop: &Population) -> Result<Vec<f64>> {
    let obs = pop.all_observations();
    crate::model::check_compatible(model, &obs)?;
    let init = model.initial_guess(&obs, &vec![1.0; pop.len()])?;
    census_solution(model, pop, &init)
}
