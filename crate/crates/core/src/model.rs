//! Estimating functions `ψ_θ(y, a)` whose population mean vanishes at the
//! true parameter, plus the built-in proportion, mean and GLM-score models.

use crate::error::{Error, Result};
use crate::linalg::{lstsq, Matrix};
use crate::scalar::Scalar;

/// Sampled observations: response `y` and auxiliary rows `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations<T> {
    pub y: Vec<T>,
    pub a: Vec<Vec<T>>,
}

impl<T: Scalar> Observations<T> {
    pub fn new(y: Vec<T>, a: Vec<Vec<T>>) -> Result<Self> {
        if y.len() != a.len() {
            return Err(Error::Validation(format!(
                "{} responses but {} auxiliary rows",
                y.len(),
                a.len()
            )));
        }
        let width = a.first().map_or(0, Vec::len);
        if a.iter().any(|r| r.len() != width) {
            return Err(Error::Validation("auxiliary rows have unequal length".into()));
        }
        Ok(Self { y, a })
    }

    /// Observations without auxiliaries.
    pub fn response_only(y: Vec<T>) -> Self {
        let a = vec![Vec::new(); y.len()];
        Self { y, a }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn aux_dim(&self) -> usize {
        self.a.first().map_or(0, Vec::len)
    }
}

/// Box constraints on the parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBox<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> ParamBox<T> {
    pub fn unbounded(p: usize) -> Self {
        Self {
            lower: vec![T::neg_infinity(); p],
            upper: vec![T::infinity(); p],
        }
    }

    pub fn project(&self, theta: &mut [T]) {
        for ((t, &lo), &hi) in theta.iter_mut().zip(&self.lower).zip(&self.upper) {
            *t = t.max(lo).min(hi);
        }
    }

    pub fn on_boundary(&self, theta: &[T]) -> bool {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .any(|(&t, (&lo, &hi))| t == lo || t == hi)
    }
}

pub trait EstimatingFunction<T: Scalar>: Send + Sync {
    fn name(&self) -> &str;

    /// Parameter dimension `p`.
    fn param_dim(&self) -> usize;

    /// Equation dimension `r ≥ p`.
    fn eq_dim(&self) -> usize {
        self.param_dim()
    }

    /// Expected length of each auxiliary row.
    fn aux_dim(&self) -> usize {
        0
    }

    fn psi(&self, theta: &[T], y: T, a: &[T]) -> Vec<T>;

    /// `∂ψ/∂θ`, an `r × p` matrix.
    fn jacobian(&self, theta: &[T], y: T, a: &[T]) -> Matrix<T>;

    fn domain(&self) -> ParamBox<T> {
        ParamBox::unbounded(self.param_dim())
    }

    /// Starting point for the solvers given inverse-visibility weights.
    fn initial_guess(&self, _obs: &Observations<T>, _inv_nu: &[T]) -> Result<Vec<T>> {
        Ok(vec![T::zero(); self.param_dim()])
    }
}

/// Checks that a model can be evaluated on these observations.
pub fn check_compatible<T: Scalar>(
    model: &dyn EstimatingFunction<T>,
    obs: &Observations<T>,
) -> Result<()> {
    if model.eq_dim() < model.param_dim() {
        return Err(Error::Validation(format!(
            "model `{}` has fewer equations ({}) than parameters ({})",
            model.name(),
            model.eq_dim(),
            model.param_dim()
        )));
    }
    if obs.is_empty() {
        return Err(Error::Validation("no observations".into()));
    }
    if model.aux_dim() != obs.aux_dim() {
        return Err(Error::Validation(format!(
            "model `{}` expects {} auxiliary columns, data has {}",
            model.name(),
            model.aux_dim(),
            obs.aux_dim()
        )));
    }
    Ok(())
}

/// `ψ_θ` evaluated at every observation (n rows of length r).
pub fn psi_rows<T: Scalar>(
    model: &dyn EstimatingFunction<T>,
    theta: &[T],
    obs: &Observations<T>,
) -> Vec<Vec<T>> {
    obs.y
        .iter()
        .zip(&obs.a)
        .map(|(&y, a)| model.psi(theta, y, a))
        .collect()
}

fn weighted_mean<T: Scalar>(y: &[T], w: &[T]) -> T {
    let num: T = y.iter().zip(w).map(|(&y, &w)| y * w).sum();
    let den: T = w.iter().copied().sum();
    num / den
}

/// `ψ_p(I) = I − p` for a 0/1 indicator.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProportionModel;

pub fn proportion_model() -> ProportionModel {
    ProportionModel
}

impl<T: Scalar> EstimatingFunction<T> for ProportionModel {
    fn name(&self) -> &str {
        "proportion"
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn psi(&self, theta: &[T], y: T, _a: &[T]) -> Vec<T> {
        vec![y - theta[0]]
    }
    fn jacobian(&self, _theta: &[T], _y: T, _a: &[T]) -> Matrix<T> {
        Matrix::scalar(-T::one())
    }
    fn domain(&self) -> ParamBox<T> {
        ParamBox {
            lower: vec![T::zero()],
            upper: vec![T::one()],
        }
    }
    fn initial_guess(&self, obs: &Observations<T>, inv_nu: &[T]) -> Result<Vec<T>> {
        Ok(vec![weighted_mean(&obs.y, inv_nu)])
    }
}

/// `ψ_μ(y) = y − μ`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanModel;

pub fn mean_model() -> MeanModel {
    MeanModel
}

impl<T: Scalar> EstimatingFunction<T> for MeanModel {
    fn name(&self) -> &str {
        "mean"
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn psi(&self, theta: &[T], y: T, _a: &[T]) -> Vec<T> {
        vec![y - theta[0]]
    }
    fn jacobian(&self, _theta: &[T], _y: T, _a: &[T]) -> Matrix<T> {
        Matrix::scalar(-T::one())
    }
    fn initial_guess(&self, obs: &Observations<T>, inv_nu: &[T]) -> Result<Vec<T>> {
        Ok(vec![weighted_mean(&obs.y, inv_nu)])
    }
}

/// Least-squares score `ψ_θ = a (y − aᵀθ)`. Include a constant column in `a`
/// for an intercept.
#[derive(Debug, Clone, Copy)]
pub struct LinearScoreModel {
    p: usize,
}

pub fn linear_score_model(p_a: usize) -> Result<LinearScoreModel> {
    if p_a == 0 {
        return Err(Error::Validation("linear model needs at least one regressor".into()));
    }
    Ok(LinearScoreModel { p: p_a })
}

impl<T: Scalar> EstimatingFunction<T> for LinearScoreModel {
    fn name(&self) -> &str {
        "linear"
    }
    fn param_dim(&self) -> usize {
        self.p
    }
    fn aux_dim(&self) -> usize {
        self.p
    }
    fn psi(&self, theta: &[T], y: T, a: &[T]) -> Vec<T> {
        let resid = y - crate::scalar::dot(a, theta);
        a.iter().map(|&aj| aj * resid).collect()
    }
    fn jacobian(&self, _theta: &[T], _y: T, a: &[T]) -> Matrix<T> {
        Matrix::outer(a, a).scale(-T::one())
    }
    fn initial_guess(&self, obs: &Observations<T>, inv_nu: &[T]) -> Result<Vec<T>> {
        // ν-weighted least squares: scale rows by sqrt(1/ν)
        let rows: Vec<Vec<T>> = obs
            .a
            .iter()
            .zip(inv_nu)
            .map(|(a, &w)| a.iter().map(|&x| x * w.sqrt()).collect())
            .collect();
        let x = Matrix::from_rows(rows)?;
        let y: Vec<T> = obs.y.iter().zip(inv_nu).map(|(&y, &w)| y * w.sqrt()).collect();
        lstsq(&x, &y)
    }
}

/// Logistic-regression score `ψ_θ = a (y − expit(aᵀθ))`.
#[derive(Debug, Clone, Copy)]
pub struct LogisticScoreModel {
    p: usize,
}

pub fn logistic_score_model(p_a: usize) -> Result<LogisticScoreModel> {
    if p_a == 0 {
        return Err(Error::Validation("logistic model needs at least one regressor".into()));
    }
    Ok(LogisticScoreModel { p: p_a })
}

fn expit<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> EstimatingFunction<T> for LogisticScoreModel {
    fn name(&self) -> &str {
        "logistic"
    }
    fn param_dim(&self) -> usize {
        self.p
    }
    fn aux_dim(&self) -> usize {
        self.p
    }
    fn psi(&self, theta: &[T], y: T, a: &[T]) -> Vec<T> {
        let resid = y - expit(crate::scalar::dot(a, theta));
        a.iter().map(|&aj| aj * resid).collect()
    }
    fn jacobian(&self, theta: &[T], _y: T, a: &[T]) -> Matrix<T> {
        let m = expit(crate::scalar::dot(a, theta));
        Matrix::outer(a, a).scale(-(m * (T::one() - m)))
    }
    // logistic Newton iterations start from zero, where the IRLS weights are well behaved
}

/// Built-in model selector used by the CLI and the simulation harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Proportion,
    Mean,
    Linear,
    Logistic,
}

impl ModelKind {
    pub fn build<T: Scalar>(self, p_a: usize) -> Result<Box<dyn EstimatingFunction<T>>> {
        Ok(match self {
            ModelKind::Proportion => Box::new(ProportionModel),
            ModelKind::Mean => Box::new(MeanModel),
            ModelKind::Linear => Box::new(linear_score_model(p_a)?),
            ModelKind::Logistic => Box::new(logistic_score_model(p_a)?),
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proportion" => Ok(Self::Proportion),
            "mean" => Ok(Self::Mean),
            "linear" => Ok(Self::Linear),
            "logistic" => Ok(Self::Logistic),
            other => Err(Error::Validation(format!("unknown model `{other}`"))),
        }
    }
}

/// Central-difference Jacobian with step `h_j = 1e-6·(1 + |θ_j|)`.
pub fn finite_difference_jacobian<T: Scalar>(
    model: &dyn EstimatingFunction<T>,
    theta: &[T],
    y: T,
    a: &[T],
) -> Matrix<T> {
    let p = model.param_dim();
    let r = model.eq_dim();
    let mut jac = Matrix::zeros(r, p);
    let mut tp = theta.to_vec();
    let mut tm = theta.to_vec();
    for j in 0..p {
        let h = T::lit(1e-6) * (T::one() + theta[j].abs());
        tp[j] = theta[j] + h;
        tm[j] = theta[j] - h;
        let fp = model.psi(&tp, y, a);
        let fm = model.psi(&tm, y, a);
        for i in 0..r {
            jac[(i, j)] = (fp[i] - fm[i]) / (h + h);
        }
        tp[j] = theta[j];
        tm[j] = theta[j];
    }
    jac
}

/// Largest entrywise relative discrepancy `|J − J_fd| / max(1, |J_fd|)`.
pub fn jacobian_error<T: Scalar>(
    model: &dyn EstimatingFunction<T>,
    theta: &[T],
    y: T,
    a: &[T],
) -> T {
    let analytic = model.jacobian(theta, y, a);
    let numeric = finite_difference_jacobian(model, theta, y, a);
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .fold(T::zero(), |m, (&x, &f)| {
            m.max((x - f).abs() / T::one().max(f.abs()))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn proportion_values() {
        let m = proportion_model();
        assert!((EstimatingFunction::<f64>::psi(&m, &[0.3], 1.0, &[])[0] - 0.7).abs() < 1e-15);
        assert!((EstimatingFunction::<f64>::psi(&m, &[0.3], 0.0, &[])[0] + 0.3).abs() < 1e-15);
        for t in [0.01, 0.5, 0.99] {
            assert_eq!(EstimatingFunction::<f64>::jacobian(&m, &[t], 1.0, &[])[(0, 0)], -1.0);
        }
    }

    #[test]
    fn linear_exact_fit_has_zero_score() {
        let m = linear_score_model(2).unwrap();
        let theta = [1.5, -0.25];
        for x in [0.0, 1.0, 3.5, -2.0] {
            let a = [1.0, x];
            let y = 1.5 - 0.25 * x;
            let s = m.psi(&theta, y, &a);
            assert!(s.iter().all(|v: &f64| v.abs() < 1e-14));
        }
    }

    #[test]
    fn logistic_jacobian_matches_finite_differences() {
        let m = logistic_score_model(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let theta: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            worst = worst.max(jacobian_error(&m, &theta, y, &a));
        }
        assert!(worst < 1e-6, "max relative error {worst}");
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = linear_score_model(2).unwrap();
        let obs = Observations::new(vec![1.0, 2.0], vec![vec![1.0], vec![1.0]]).unwrap();
        assert!(check_compatible(&m, &obs).is_err());
    }

    #[test]
    fn weighted_least_squares_start() {
        let m = linear_score_model(2).unwrap();
        let obs = Observations::new(
            vec![1.0, 3.0, 5.0, 7.0],
            vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0], vec![1.0, 3.0]],
        )
        .unwrap();
        let init: Vec<f64> = m.initial_guess(&obs, &[1.0, 2.0, 0.5, 1.0]).unwrap();
        assert!((init[0] - 1.0).abs() < 1e-12 && (init[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn model_kind_parses() {
        assert_eq!("logistic".parse::<ModelKind>().unwrap(), ModelKind::Logistic);
        assert!("probit".parse::<ModelKind>().is_err());
    }
}
