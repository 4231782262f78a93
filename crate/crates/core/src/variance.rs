//! Variance estimators for CE solutions and the classical design-based
//! HT and Hájek means.

use serde::{Deserialize, Serialize};

use crate::el::ELSolution;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{check_compatible, psi_rows, EstimatingFunction, Observations};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    CeSandwich,
    ProportionClosed,
    HartleyRao,
    Ygs,
    PredictionFpc,
}

impl VarianceMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            VarianceMethod::CeSandwich => "ce_sandwich",
            VarianceMethod::ProportionClosed => "proportion_closed",
            VarianceMethod::HartleyRao => "hartley_rao",
            VarianceMethod::Ygs => "ygs",
            VarianceMethod::PredictionFpc => "prediction_fpc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize + Clone", deserialize = "T: Deserialize<'de> + Clone"))]
pub struct VarianceEstimate<T> {
    pub value: Matrix<T>,
    pub method: VarianceMethod,
    /// False when the estimate is undefined or negative (reported as NA).
    pub valid: bool,
    #[serde(default)]
    pub approximate: bool,
}

impl<T: Scalar> VarianceEstimate<T> {
    fn scalar(value: T, method: VarianceMethod, valid: bool) -> Self {
        Self {
            value: Matrix::scalar(value),
            method,
            valid,
            approximate: false,
        }
    }

    /// Standard errors, `None` when the estimate is NA.
    pub fn se(&self) -> Option<Vec<T>> {
        self.valid
            .then(|| self.value.diagonal().into_iter().map(|v| v.max(T::zero()).sqrt()).collect())
    }

    /// The (0,0) entry, `None` when NA.
    pub fn variance(&self) -> Option<T> {
        self.valid.then(|| self.value[(0, 0)])
    }
}

/// How a total-level variance is rescaled for the reported estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarianceTarget<T> {
    Total,
    /// `N⁻¹ Σ y_i/π_i`; divides by `N²`.
    HtMean { population_size: T },
    /// Ratio estimators (Hájek, CE); divides by `(Σ 1/π_i)²`.
    Hajek,
}

impl<T: Scalar> VarianceTarget<T> {
    fn divisor(&self, pi: &[T]) -> T {
        match *self {
            VarianceTarget::Total => T::one(),
            VarianceTarget::HtMean { population_size } => population_size * population_size,
            VarianceTarget::Hajek => {
                let s: T = pi.iter().map(|p| p.recip()).sum();
                s * s
            }
        }
    }
}

fn check_pi<T: Scalar>(values: &[T], pi: &[T]) -> Result<()> {
    if values.len() != pi.len() {
        return Err(Error::Validation(format!(
            "{} values for {} inclusion probabilities",
            values.len(),
            pi.len()
        )));
    }
    if values.is_empty() {
        return Err(Error::Validation("empty sample".into()));
    }
    if pi.iter().any(|&p| !(p > T::zero() && p <= T::one())) {
        return Err(Error::Validation("inclusion probabilities must lie in (0,1]".into()));
    }
    Ok(())
}

/// `N⁻¹ Σ y_i/π_i`.
pub fn ht_mean<T: Scalar>(values: &[T], pi: &[T], population_size: T) -> Result<T> {
    check_pi(values, pi)?;
    Ok(values.iter().zip(pi).map(|(&y, &p)| y / p).sum::<T>() / population_size)
}

/// `Σ y_i/π_i ÷ Σ 1/π_i`.
pub fn hajek_mean<T: Scalar>(values: &[T], pi: &[T]) -> Result<T> {
    check_pi(values, pi)?;
    let num: T = values.iter().zip(pi).map(|(&y, &p)| y / p).sum();
    let den: T = pi.iter().map(|p| p.recip()).sum();
    Ok(num / den)
}

/// `Σ(I_i − p̂)²π_i⁻² / (Σπ_i⁻¹)²` with `p̂` the Hájek proportion.
pub fn proportion_closed_var<T: Scalar>(indicators: &[T], pi: &[T]) -> Result<VarianceEstimate<T>> {
    let p_hat = hajek_mean(indicators, pi)?;
    let num: T = indicators
        .iter()
        .zip(pi)
        .map(|(&y, &p)| {
            let e = (y - p_hat) / p;
            e * e
        })
        .sum();
    let v = num / VarianceTarget::Hajek.divisor(pi);
    Ok(VarianceEstimate::scalar(v, VarianceMethod::ProportionClosed, true))
}

/// Plug-in `Ĝ = Σ w_i ∂ψ/∂θ` and `Ĝ* = Σ w_i² ψψᵀ` at the solution.
fn plug_in<T: Scalar>(
    model: &dyn EstimatingFunction<T>,
    obs: &Observations<T>,
    sol: &ELSolution<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    check_compatible(model, obs)?;
    if sol.weights.len() != obs.len() || sol.theta.len() != model.param_dim() {
        return Err(Error::Validation("solution does not match the data".into()));
    }
    let (r, p) = (model.eq_dim(), model.param_dim());
    let mut g = Matrix::zeros(r, p);
    let mut g_star = Matrix::zeros(r, r);
    let psi = psi_rows(model, &sol.theta, obs);
    for (((&y, a), row), &w) in obs.y.iter().zip(&obs.a).zip(&psi).zip(&sol.weights) {
        g.axpy(w, &model.jacobian(&sol.theta, y, a));
        g_star.axpy(w * w, &Matrix::outer(row, row));
    }
    Ok((g, g_star))
}

fn sandwich_from<T: Scalar>(g: &Matrix<T>, g_star: &Matrix<T>) -> Result<Matrix<T>> {
    let v = if g.nrows() == g.ncols() {
        let g_inv = g.inverse()?;
        g_inv.matmul(g_star).matmul(&g_inv.transpose())
    } else {
        let info = g.transpose().matmul(&g_star.inverse()?.matmul(g));
        info.inverse()?
    };
    Ok(v.symmetrize())
}

/// `V̂_CE = {Ĝᵀ Ĝ*⁻¹ Ĝ}⁻¹`, computed as `Ĝ⁻¹ Ĝ* Ĝ⁻ᵀ` when `Ĝ` is square.
pub fn sandwich_vce<T: Scalar>(
    model: &dyn EstimatingFunction<T>,
    obs: &Observations<T>,
    sol: &ELSolution<T>,
) -> Result<VarianceEstimate<T>> {
    let (g, g_star) = plug_in(model, obs, sol)?;
    Ok(VarianceEstimate {
        value: sandwich_from(&g, &g_star)?,
        method: VarianceMethod::CeSandwich,
        valid: true,
        approximate: false,
    })
}

/// `V_κ = Ĝ*⁻¹ (I − Ĝ V̂_CE Ĝᵀ Ĝ*⁻¹)`.
pub fn kappa_covariance<T: Scalar>(
    model: &dyn EstimatingFunction<T>,
    obs: &Observations<T>,
    sol: &ELSolution<T>,
) -> Result<Matrix<T>> {
    let (g, g_star) = plug_in(model, obs, sol)?;
    let s_inv = g_star.inverse()?;
    let v = sandwich_from(&g, &g_star)?;
    let inner = Matrix::identity(g.nrows()).sub(&g.matmul(&v).matmul(&g.transpose()).matmul(&s_inv));
    Ok(s_inv.matmul(&inner).symmetrize())
}

/// Linearized values `−Ĝ⁻¹ψ_i` of a just-identified solution, one row per
/// observation. With `VarianceTarget::Hajek` these feed the design-based
/// variances of the CE estimate.
pub fn linearized_values<T: Scalar>(
    model: &dyn EstimatingFunction<T>,
    obs: &Observations<T>,
    sol: &ELSolution<T>,
) -> Result<Vec<Vec<T>>> {
    if model.eq_dim() != model.param_dim() {
        return Err(Error::Validation("linearization needs a just-identified model".into()));
    }
    let (g, _) = plug_in(model, obs, sol)?;
    let g_inv = g.inverse()?;
    Ok(psi_rows(model, &sol.theta, obs)
        .iter()
        .map(|row| g_inv.matvec(row).into_iter().map(|x| -x).collect())
        .collect())
}

/// Hartley–Rao approximation in the pairwise form used by survey software:
/// `Σ_{i<j} c_ij (z_i − z_j)²`, `z = y/π`, `c_ij = (1 − π_i − π_j + P/n)/(n − 1)`
/// with `P = Σ_U π_k²`. When `sum_pi_sq` is `None`, `P` is estimated by
/// `Σ_S π_k`, which is unbiased for it.
pub fn hartley_rao_var<T: Scalar>(
    values: &[T],
    pi: &[T],
    target: VarianceTarget<T>,
    sum_pi_sq: Option<T>,
) -> Result<VarianceEstimate<T>> {
    check_pi(values, pi)?;
    let n = values.len();
    if n < 2 {
        return Err(Error::Validation("Hartley-Rao variance needs n ≥ 2".into()));
    }
    let nf = T::from_count(n);
    let p_sum = sum_pi_sq.unwrap_or_else(|| pi.iter().copied().sum());
    let z: Vec<T> = values.iter().zip(pi).map(|(&y, &p)| y / p).collect();
    let mut total = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            let c = (T::one() - pi[i] - pi[j] + p_sum / nf) / (nf - T::one());
            let d = z[i] - z[j];
            total = total + c * d * d;
        }
    }
    let v = total / target.divisor(pi);
    let mut est = VarianceEstimate::scalar(v, VarianceMethod::HartleyRao, v >= T::zero() && v.is_finite());
    est.approximate = true;
    Ok(est)
}

/// Sen–Yates–Grundy `Σ_{i<j} ((π_iπ_j − π_ij)/π_ij)(z_i − z_j)²` on the
/// sample-level joint matrix. Any zero joint probability or a negative total
/// gives an NA estimate.
pub fn ygs_var<T: Scalar>(
    values: &[T],
    pi: &[T],
    joint: Option<&Matrix<T>>,
    target: VarianceTarget<T>,
) -> Result<VarianceEstimate<T>> {
    check_pi(values, pi)?;
    let joint = joint.ok_or(Error::MissingJointPi)?;
    let n = values.len();
    if joint.nrows() != n || joint.ncols() != n {
        return Err(Error::Validation(format!(
            "joint inclusion matrix is {}×{}, sample has {n} units",
            joint.nrows(),
            joint.ncols()
        )));
    }
    let z: Vec<T> = values.iter().zip(pi).map(|(&y, &p)| y / p).collect();
    let mut total = T::zero();
    let mut defined = true;
    for i in 0..n {
        for j in i + 1..n {
            let pij = joint[(i, j)];
            if !(pij > T::zero()) {
                defined = false;
                continue;
            }
            let d = z[i] - z[j];
            total = total + (pi[i] * pi[j] - pij) / pij * d * d;
        }
    }
    let v = total / target.divisor(pi);
    let valid = defined && v >= T::zero() && v.is_finite();
    let value = if defined { v } else { T::nan() };
    Ok(VarianceEstimate::scalar(value, VarianceMethod::Ygs, valid))
}

/// `(1 − n/N) V̂`, flagged approximate since dependence terms are ignored.
pub fn prediction_variance<T: Scalar>(
    vce: &VarianceEstimate<T>,
    n: usize,
    population_size: usize,
) -> Result<VarianceEstimate<T>> {
    if n == 0 || n > population_size {
        return Err(Error::Validation(format!(
            "prediction variance needs 1 ≤ n ≤ N, got n={n}, N={population_size}"
        )));
    }
    let fpc = T::one() - T::from_count(n) / T::from_count(population_size);
    Ok(VarianceEstimate {
        value: vce.value.scale(fpc),
        method: VarianceMethod::PredictionFpc,
        valid: vce.valid,
        approximate: true,
    })
}
