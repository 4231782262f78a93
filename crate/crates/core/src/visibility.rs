//! Conditional visibilities `ν_i`: either the design probabilities
//! themselves or `1 / E_S(π⁻¹ | V)` smoothed by least squares.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lstsq, Matrix};
use crate::scalar::Scalar;

/// Positive visibilities aligned to the sample, normalized to mean 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visibilities<T> {
    pub nu: Vec<T>,
}

impl<T: Scalar> Visibilities<T> {
    /// Rescales positive values to mean 1.
    pub fn normalized(values: &[T]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation("no visibilities".into()));
        }
        if values.iter().any(|&v| !(v > T::zero() && v.is_finite())) {
            return Err(Error::Validation("visibilities must be positive and finite".into()));
        }
        let mean = values.iter().copied().sum::<T>() / T::from_count(values.len());
        Ok(Self {
            nu: values.iter().map(|&v| v / mean).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }
}

/// `ν = π`, rescaled to mean 1.
pub fn passthrough_visibility<T: Scalar>(pi: &[T]) -> Result<Visibilities<T>> {
    Visibilities::normalized(pi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisibilityKind {
    Passthrough,
    InverseRegression,
}

/// One regressor of the smoothing basis, a transform of a named covariate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BasisTerm {
    Intercept,
    Linear(String),
    Log(String),
    Sqrt(String),
    Inv(String),
    Power(String, i32),
}

impl BasisTerm {
    fn variable(&self) -> Option<&str> {
        match self {
            BasisTerm::Intercept => None,
            BasisTerm::Linear(v)
            | BasisTerm::Log(v)
            | BasisTerm::Sqrt(v)
            | BasisTerm::Inv(v)
            | BasisTerm::Power(v, _) => Some(v),
        }
    }

    fn apply<T: Scalar>(&self, x: T) -> Option<T> {
        let out = match self {
            BasisTerm::Intercept => T::one(),
            BasisTerm::Linear(_) => x,
            BasisTerm::Log(_) if x > T::zero() => x.ln(),
            BasisTerm::Sqrt(_) if x >= T::zero() => x.sqrt(),
            BasisTerm::Inv(_) if x != T::zero() => x.recip(),
            BasisTerm::Power(_, k) => x.powi(*k),
            _ => return None,
        };
        out.is_finite().then_some(out)
    }
}

impl fmt::Display for BasisTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisTerm::Intercept => write!(f, "1"),
            BasisTerm::Linear(v) => write!(f, "{v}"),
            BasisTerm::Log(v) => write!(f, "log({v})"),
            BasisTerm::Sqrt(v) => write!(f, "sqrt({v})"),
            BasisTerm::Inv(v) => write!(f, "inv({v})"),
            BasisTerm::Power(v, k) => write!(f, "{v}^{k}"),
        }
    }
}

impl FromStr for BasisTerm {
    type Err = Error;

    /// Accepts `1`, `x`, `log(x)`, `sqrt(x)`, `inv(x)` and `x^k`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Validation(format!("cannot parse basis term `{s}`"));
        let valid_name = |v: &str| {
            !v.is_empty() && v.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.')
        };
        if s == "1" {
            return Ok(BasisTerm::Intercept);
        }
        for (prefix, make) in [
            ("log(", BasisTerm::Log as fn(String) -> BasisTerm),
            ("sqrt(", BasisTerm::Sqrt),
            ("inv(", BasisTerm::Inv),
        ] {
            if let Some(inner) = s.strip_prefix(prefix).and_then(|r| r.strip_suffix(')')) {
                let inner = inner.trim();
                return if valid_name(inner) { Ok(make(inner.to_string())) } else { Err(bad()) };
            }
        }
        if let Some((v, k)) = s.split_once('^') {
            let k: i32 = k.trim().parse().map_err(|_| bad())?;
            let v = v.trim();
            return if valid_name(v) { Ok(BasisTerm::Power(v.to_string(), k)) } else { Err(bad()) };
        }
        if valid_name(s) {
            Ok(BasisTerm::Linear(s.to_string()))
        } else {
            Err(bad())
        }
    }
}

impl TryFrom<String> for BasisTerm {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BasisTerm> for String {
    fn from(t: BasisTerm) -> String {
        t.to_string()
    }
}

/// Parses a comma-separated basis such as `1,log(size)`.
pub fn parse_basis(spec: &str) -> Result<Vec<BasisTerm>> {
    spec.split(',').map(str::parse).collect()
}

/// Named sample covariates `V` used by the smoothing basis.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Covariates<T> {
    columns: Vec<(String, Vec<T>)>,
}

impl<T: Scalar> Covariates<T> {
    pub fn new() -> Self {
        Self { columns: Vec::new() }
    }

    pub fn with(mut self, name: impl Into<String>, values: Vec<T>) -> Self {
        self.columns.push((name.into(), values));
        self
    }

    pub fn get(&self, name: &str) -> Option<&[T]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityModel<T> {
    pub kind: VisibilityKind,
    pub basis: Vec<BasisTerm>,
    /// Least-squares coefficients of `π⁻¹` on the basis.
    pub alpha: Vec<T>,
    /// Mean of the raw `1 / fitted` values; `ν = (1/fitted) / scale`.
    pub scale: T,
    /// Fitted values raised to the positive floor.
    pub clamped: usize,
}

/// Fraction of clamped fits above which a warning is logged.
const CLAMP_WARN_FRACTION: f64 = 0.10;

pub fn smoothed_visibility<T: Scalar>(
    pi: &[T],
    observed: &Covariates<T>,
    basis: &[BasisTerm],
) -> Result<(VisibilityModel<T>, Visibilities<T>)> {
    let n = pi.len();
    if n == 0 || basis.is_empty() {
        return Err(Error::Validation("smoothing needs a sample and a basis".into()));
    }
    if pi.iter().any(|&p| !(p > T::zero() && p.is_finite())) {
        return Err(Error::Validation("inclusion probabilities must be positive".into()));
    }
    let mut x = Matrix::zeros(n, basis.len());
    for (col, term) in basis.iter().enumerate() {
        let values = match term.variable() {
            None => None,
            Some(v) => {
                let vals = observed
                    .get(v)
                    .ok_or_else(|| Error::Validation(format!("basis variable `{v}` not observed")))?;
                if vals.len() != n {
                    return Err(Error::Validation(format!(
                        "basis variable `{v}` has {} values for {n} units",
                        vals.len()
                    )));
                }
                Some(vals)
            }
        };
        for i in 0..n {
            let raw = values.map_or(T::one(), |v| v[i]);
            let val = term.apply(raw).ok_or_else(|| {
                Error::Validation(format!("basis term `{term}` undefined at unit {}", i + 1))
            })?;
            x[(i, col)] = val;
        }
    }
    let inv_pi: Vec<T> = pi.iter().map(|&p| p.recip()).collect();
    let alpha = lstsq(&x, &inv_pi).map_err(|e| match e {
        Error::Singular(msg) => Error::Validation(format!("smoothing basis is rank deficient: {msg}")),
        other => other,
    })?;
    let floor = T::lit(1e-8) * median(&inv_pi);
    let mut clamped = 0;
    let raw: Vec<T> = x
        .matvec(&alpha)
        .into_iter()
        .map(|f| {
            if f <= floor {
                clamped += 1;
                floor.recip()
            } else {
                f.recip()
            }
        })
        .collect();
    if clamped > 0 {
        log::debug!("{clamped} of {n} smoothed π⁻¹ values raised to the floor");
    }
    if clamped as f64 > CLAMP_WARN_FRACTION * n as f64 {
        log::warn!("{clamped} of {n} smoothed π⁻¹ values were non-positive and clamped");
    }
    let scale = raw.iter().copied().sum::<T>() / T::from_count(n);
    let vis = Visibilities::normalized(&raw)?;
    let model = VisibilityModel {
        kind: VisibilityKind::InverseRegression,
        basis: basis.to_vec(),
        alpha,
        scale,
        clamped,
    };
    Ok((model, vis))
}

fn median<T: Scalar>(xs: &[T]) -> T {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / T::lit(2.0)
    }
}
