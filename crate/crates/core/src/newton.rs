//! Damped Newton iteration for weighted score equations `Σ_i w_i ψ_θ(y_i, a_i) = 0`.
//!
//! Shared by the census solution (unit weights) and the inverse-visibility
//! score path (weights `1/ν_i`).

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{EstimatingFunction, Observations};
use crate::scalar::{norm2, norm_inf, Scalar};

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions<T> {
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Required bound on `‖Σ w_i ψ_i‖∞` at the returned point.
    pub tol: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome<T> {
    pub theta: Vec<T>,
    pub residual: T,
    pub iterations: usize,
    /// The solution sits on the boundary of the model's parameter box.
    pub boundary: bool,
}

/// Weighted score and its Jacobian at `theta`, plus the roundoff scale `Σ‖w_i ψ_i‖∞`.
pub(crate) fn weighted_score<T: Scalar>(
    model: &dyn EstimatingFunction<T>,
    obs: &Observations<T>,
    weights: &[T],
    theta: &[T],
) -> (Vec<T>, Matrix<T>, T) {
    let r = model.eq_dim();
    let p = model.param_dim();
    let mut f = vec![T::zero(); r];
    let mut jac = Matrix::zeros(r, p);
    let mut scale = T::zero();
    for ((&y, a), &w) in obs.y.iter().zip(&obs.a).zip(weights) {
        let psi = model.psi(theta, y, a);
        for (fi, &s) in f.iter_mut().zip(&psi) {
            *fi = *fi + w * s;
        }
        scale = scale + w * norm_inf(&psi);
        jac.axpy(w, &model.jacobian(theta, y, a));
    }
    (f, jac, scale)
}

fn newton_direction<T: Scalar>(f: &[T], jac: &Matrix<T>) -> Result<Vec<T>> {
    let neg: Vec<T> = f.iter().map(|&x| -x).collect();
    if jac.is_square() {
        jac.solve(&neg)
    } else {
        // over-identified: Gauss-Newton on ‖F‖²
        let jt = jac.transpose();
        jt.matmul(jac).solve(&jt.matvec(&neg))
    }
}

pub fn solve_weighted_score<T: Scalar>(
    model: &dyn EstimatingFunction<T>,
    obs: &Observations<T>,
    weights: &[T],
    init: &[T],
    opts: NewtonOptions<T>,
) -> Result<NewtonOutcome<T>> {
    let domain = model.domain();
    let mut theta = init.to_vec();
    domain.project(&mut theta);
    let (mut f, mut jac, mut scale) = weighted_score(model, obs, weights, &theta);
    let mut fnorm = norm_inf(&f);
    let floor = |scale: T| T::epsilon() * T::lit(16.0) * scale;

    let mut last_step = T::infinity();
    for iter in 0..opts.max_iter {
        if !fnorm.is_finite() {
            break;
        }
        if fnorm == T::zero() {
            return Ok(outcome(theta, fnorm, iter, &domain));
        }
        let dir = newton_direction(&f, &jac)?;
        let dnorm = norm2(&dir);
        last_step = dnorm;
        let settled = dnorm <= T::epsilon().sqrt() * (T::one() + norm2(&theta));
        if settled && fnorm <= floor(scale) {
            return Ok(outcome(theta, fnorm, iter, &domain));
        }
        if dnorm <= T::epsilon() * T::lit(4.0) * (T::one() + norm2(&theta)) {
            break;
        }
        let mut step = T::one();
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let mut trial: Vec<T> = theta.iter().zip(&dir).map(|(&t, &d)| t + step * d).collect();
            domain.project(&mut trial);
            let (tf, tj, ts) = weighted_score(model, obs, weights, &trial);
            let tn = norm_inf(&tf);
            if tn.is_finite() && tn < fnorm {
                theta = trial;
                f = tf;
                jac = tj;
                scale = ts;
                fnorm = tn;
                accepted = true;
                break;
            }
            step = step * T::lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    // a root has a vanishing Newton step; a run-away iterate (e.g. separation) does not
    let settled = last_step <= T::epsilon().sqrt() * (T::one() + norm2(&theta));
    if fnorm <= opts.tol && settled {
        return Ok(outcome(theta, fnorm, opts.max_iter, &domain));
    }
    Err(Error::Convergence {
        solver: "Newton score solver",
        iterations: opts.max_iter,
        residual: fnorm.as_f64(),
    })
}

fn outcome<T: Scalar>(
    theta: Vec<T>,
    residual: T,
    iterations: usize,
    domain: &crate::model::ParamBox<T>,
) -> NewtonOutcome<T> {
    let boundary = domain.on_boundary(&theta);
    NewtonOutcome {
        theta,
        residual,
        iterations,
        boundary,
    }
}
