//! Conditional empirical likelihood: the inner multiplier solve, profile
//! log-likelihood, inverse-visibility score path and outer maximization.
//!
//! Visibilities are rescaled to mean one on entry. Everything reported is
//! invariant to that choice except `κ`, which scales with `ν` and is mapped
//! back before returning.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{check_compatible, psi_rows, EstimatingFunction, Observations};
use crate::newton::{solve_weighted_score, NewtonOptions};
use crate::scalar::{dot, norm2, norm_inf, Scalar};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathChoice {
    /// Score path first, profile path if it fails.
    #[default]
    Auto,
    ElProfile,
    IpwScore,
}

impl FromStr for PathChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(PathChoice::Auto),
            "profile" | "el_profile" => Ok(PathChoice::ElProfile),
            "score" | "ipw_score" => Ok(PathChoice::IpwScore),
            _ => Err(Error::Validation(format!(
                "unknown path `{s}` (expected auto, profile or score)"
            ))),
        }
    }
}

/// Which path produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    ElProfile,
    IpwScore,
}

impl fmt::Display for SolverPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverPath::ElProfile => "el_profile",
            SolverPath::IpwScore => "ipw_score",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    /// Accepted `‖Σ ψ_i/(ν_i + κᵀψ_i)‖∞` on the normalized problem.
    pub kappa_tol: T,
    pub max_kappa_iter: usize,
    /// Accepted `‖Σ ψ_i/ν_i‖∞` per observation on the score path.
    pub score_tol: T,
    pub max_score_iter: usize,
    /// Accepted profile gradient `‖Σ J_iᵀκ/d_i‖∞`.
    pub derivative_tol: T,
    pub max_outer_iter: usize,
    /// Profile-path starting points (the initializer plus deterministic offsets).
    pub starts: usize,
    /// Offset of the extra starts, relative to `1 + |θ₀|`.
    pub start_radius: T,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        let tol = T::tolerance();
        Self {
            kappa_tol: tol * T::lit(10.0),
            max_kappa_iter: 200,
            score_tol: tol * T::lit(100.0),
            max_score_iter: 200,
            derivative_tol: tol * T::lit(1000.0),
            max_outer_iter: 200,
            starts: 5,
            start_radius: T::lit(0.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSolution<T> {
    pub kappa: Vec<T>,
    /// `w_i ∝ 1/(ν_i + κᵀψ_i)` on the simplex.
    pub weights: Vec<T>,
    pub residual: T,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Iterations {
    pub inner: usize,
    pub outer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ELSolution<T> {
    pub theta: Vec<T>,
    pub kappa: Vec<T>,
    pub weights: Vec<T>,
    /// `Υ̂ = Σ ν_i w_i` in the caller's visibility scale.
    pub upsilon: T,
    pub loglik: T,
    pub iterations: Iterations,
    pub converged: bool,
    pub path: SolverPath,
    /// `θ̂` lies on the boundary of the model's parameter box.
    pub boundary: bool,
    /// `‖Σ w_i ψ_θ̂(y_i, a_i)‖∞`.
    pub kappa_residual: T,
    /// `‖Σ J_iᵀ κ / (ν_i + κᵀψ_i)‖∞`.
    pub derivative_residual: T,
}

fn check_nu<T: Scalar>(nu: &[T], n: usize) -> Result<T> {
    if nu.len() != n {
        return Err(Error::Validation(format!(
            "{} visibilities for {n} observations",
            nu.len()
        )));
    }
    if n == 0 {
        return Err(Error::Validation("no observations".into()));
    }
    if nu.iter().any(|&v| !(v > T::zero() && v.is_finite())) {
        return Err(Error::Validation("visibilities must be positive and finite".into()));
    }
    Ok(nu.iter().copied().sum::<T>() / T::from_count(n))
}

/// Inverse-visibility weights `w_i = ν_i⁻¹ / Σ ν_j⁻¹`.
pub fn ce_distribution<T: Scalar>(nu: &[T]) -> Result<Vec<T>> {
    let mean = check_nu(nu, nu.len())?;
    let inv: Vec<T> = nu.iter().map(|&v| mean / v).collect();
    let total: T = inv.iter().copied().sum();
    Ok(inv.into_iter().map(|x| x / total).collect())
}

/// CE log-likelihood of simplex weights, `n ln n + Σ ln(ν_i w_i) − n ln Σ ν_i w_i`.
pub fn loglik_from_weights<T: Scalar>(weights: &[T], nu: &[T]) -> Result<T> {
    let n = weights.len();
    let mean = check_nu(nu, n)?;
    if weights.iter().any(|&w| !(w > T::zero())) {
        return Err(Error::Validation("weights must be positive".into()));
    }
    let nf = T::from_count(n);
    let scaled: Vec<T> = weights.iter().zip(nu).map(|(&w, &v)| w * (v / mean)).collect();
    let total: T = scaled.iter().copied().sum();
    Ok(nf * nf.ln() + scaled.iter().map(|x| x.ln()).sum::<T>() - nf * total.ln())
}

/// Inner problem on mean-one visibilities; `κ` in that scale.
fn kappa_normalized<T: Scalar>(
    psi: &[Vec<T>],
    nu: &[T],
    opts: &SolverOptions<T>,
) -> Result<(Vec<T>, Vec<T>, T, usize)> {
    let r = psi[0].len();
    let n = psi.len();
    let z_max = psi
        .iter()
        .zip(nu)
        .map(|(p, &v)| norm_inf(p) / v)
        .fold(T::zero(), T::max);
    let mut kappa = vec![T::zero(); r];
    if z_max == T::zero() {
        return Ok((kappa, nu.to_vec(), T::zero(), 0));
    }
    if r == 1 {
        let pos = psi.iter().any(|p| p[0] > T::zero());
        let neg = psi.iter().any(|p| p[0] < T::zero());
        if !(pos && neg) {
            let dir = if pos { 1.0 } else { -1.0 };
            return Err(Error::Infeasible { direction: vec![dir] });
        }
    }
    let barrier_floor = T::lit(1e-12);
    let nu_max = nu.iter().copied().fold(T::zero(), T::max);
    let denominators = |k: &[T]| -> Vec<T> {
        psi.iter().zip(nu).map(|(p, &v)| v + dot(k, p)).collect()
    };
    let objective = |d: &[T]| -> T { d.iter().map(|x| x.ln()).sum() };
    let gradient_norm = |d: &[T]| -> T {
        let mut g = vec![T::zero(); r];
        for (p, &di) in psi.iter().zip(d) {
            for (gk, &x) in g.iter_mut().zip(p) {
                *gk = *gk + x / di;
            }
        }
        norm_inf(&g)
    };

    let mut d = denominators(&kappa);
    let mut obj = objective(&d);
    let mut gnorm;
    let mut iterations = 0;
    loop {
        let mut grad = vec![T::zero(); r];
        let mut hess = Matrix::zeros(r, r);
        let mut scale = T::zero();
        for (p, &di) in psi.iter().zip(&d) {
            let inv = di.recip();
            for (g, &x) in grad.iter_mut().zip(p) {
                *g = *g + x * inv;
            }
            hess.axpy(inv * inv, &Matrix::outer(p, p));
            scale = scale + norm_inf(p) * inv;
        }
        gnorm = norm_inf(&grad);
        let roundoff = T::epsilon() * T::lit(64.0) * scale.max(T::one());
        if gnorm <= roundoff || iterations >= opts.max_kappa_iter {
            break;
        }
        let step = match hess.solve(&grad) {
            Ok(s) => s,
            Err(_) => {
                // collinear ψ: a tiny ridge keeps the step in their span
                let ridge = T::epsilon() * T::lit(1e3) * hess.diagonal().into_iter().fold(T::zero(), T::max);
                hess.add(&Matrix::identity(r).scale(ridge)).solve(&grad)?
            }
        };
        let slope = dot(&grad, &step);
        let mut t = T::one();
        let mut accepted = false;
        for halving in 0..60 {
            let trial: Vec<T> = kappa.iter().zip(&step).map(|(&k, &s)| k + t * s).collect();
            if trial == kappa {
                break;
            }
            let td = denominators(&trial);
            if td.iter().all(|&x| x > barrier_floor) {
                let tobj = objective(&td);
                // near the root the objective stops resolving; a full step that
                // shrinks the gradient is then accepted instead
                let shrinks = halving == 0 && gradient_norm(&td) < gnorm;
                if tobj >= obj + T::lit(1e-4) * t * slope || shrinks {
                    kappa = trial;
                    d = td;
                    obj = tobj;
                    accepted = true;
                    break;
                }
            }
            t = t * T::lit(0.5);
        }
        iterations += 1;
        if norm_inf(&kappa) * z_max > T::lit(1e10) * nu_max {
            let len = norm2(&kappa);
            return Err(Error::Infeasible {
                direction: kappa.iter().map(|&k| (k / len).as_f64()).collect(),
            });
        }
        if !accepted {
            break;
        }
    }
    if gnorm > opts.kappa_tol * T::from_count(n).sqrt() {
        return Err(Error::Convergence {
            solver: "multiplier solve",
            iterations,
            residual: gnorm.as_f64(),
        });
    }
    Ok((kappa, d, gnorm, iterations))
}

fn weights_from_denominators<T: Scalar>(d: &[T]) -> Vec<T> {
    let inv: Vec<T> = d.iter().map(|x| x.recip()).collect();
    let total: T = inv.iter().copied().sum();
    inv.into_iter().map(|x| x / total).collect()
}

/// Multiplier `κ` solving `Σ ψ_i/(ν_i + κᵀψ_i) = 0` and the resulting weights.
pub fn solve_kappa<T: Scalar>(
    psi: &[Vec<T>],
    nu: &[T],
    opts: &SolverOptions<T>,
) -> Result<KappaSolution<T>> {
    let mean = check_nu(nu, psi.len())?;
    let r = psi[0].len();
    if psi.iter().any(|p| p.len() != r) || r == 0 {
        return Err(Error::Validation("ψ rows must share a positive length".into()));
    }
    let nu_n: Vec<T> = nu.iter().map(|&v| v / mean).collect();
    let (kappa, d, residual, iterations) = kappa_normalized(psi, &nu_n, opts)?;
    Ok(KappaSolution {
        kappa: kappa.into_iter().map(|k| k * mean).collect(),
        weights: weights_from_denominators(&d),
        residual,
        iterations,
    })
}

/// Profile quantities at one θ on mean-one visibilities.
struct ProfilePoint<T> {
    theta: Vec<T>,
    psi: Vec<Vec<T>>,
    kappa: Vec<T>,
    d: Vec<T>,
    loglik: T,
    grad: Vec<T>,
    inner_iterations: usize,
}

struct Problem<'a, T: Scalar> {
    model: &'a dyn EstimatingFunction<T>,
    obs: &'a Observations<T>,
    nu: Vec<T>,
    opts: &'a SolverOptions<T>,
}

impl<T: Scalar> Problem<'_, T> {
    fn eval(&self, theta: &[T]) -> Result<ProfilePoint<T>> {
        let psi = psi_rows(self.model, theta, self.obs);
        let (kappa, d, _, inner) = kappa_normalized(&psi, &self.nu, self.opts)?;
        let loglik = -psi
            .iter()
            .zip(&self.nu)
            .map(|(p, &v)| (dot(&kappa, p) / v).ln_1p())
            .sum::<T>();
        let mut grad = vec![T::zero(); self.model.param_dim()];
        for ((&y, a), &di) in self.obs.y.iter().zip(&self.obs.a).zip(&d) {
            let jt_k = self.model.jacobian(theta, y, a).tr_matvec(&kappa);
            for (g, x) in grad.iter_mut().zip(jt_k) {
                *g = *g - x / di;
            }
        }
        Ok(ProfilePoint {
            theta: theta.to_vec(),
            psi,
            kappa,
            d,
            loglik,
            grad,
            inner_iterations: inner,
        })
    }

    /// Central-difference Hessian of the analytic profile gradient.
    fn fd_hessian(&self, pt: &ProfilePoint<T>) -> Option<Matrix<T>> {
        let p = pt.theta.len();
        let mut h = Matrix::zeros(p, p);
        for k in 0..p {
            let step = T::lit(1e-5) * (T::one() + pt.theta[k].abs());
            let mut up = pt.theta.clone();
            let mut dn = pt.theta.clone();
            up[k] = up[k] + step;
            dn[k] = dn[k] - step;
            let (gu, gd, span) = match (self.eval(&up), self.eval(&dn)) {
                (Ok(u), Ok(d)) => (u.grad, d.grad, step + step),
                (Ok(u), Err(_)) => (u.grad, pt.grad.clone(), step),
                (Err(_), Ok(d)) => (pt.grad.clone(), d.grad, step),
                _ => return None,
            };
            for i in 0..p {
                h[(i, k)] = (gu[i] - gd[i]) / span;
            }
        }
        Some(h.symmetrize())
    }

    /// `(Σ J_i/d_i)ᵀ (Σ ψψᵀ/d²)⁻¹ (Σ J_i/d_i)`, the curvature at `κ = 0`.
    fn gauss_newton(&self, pt: &ProfilePoint<T>) -> Result<Matrix<T>> {
        let (r, p) = (self.model.eq_dim(), self.model.param_dim());
        let mut g = Matrix::zeros(r, p);
        let mut s = Matrix::zeros(r, r);
        for (((&y, a), psi), &di) in self.obs.y.iter().zip(&self.obs.a).zip(&pt.psi).zip(&pt.d) {
            g.axpy(di.recip(), &self.model.jacobian(&pt.theta, y, a));
            s.axpy((di * di).recip(), &Matrix::outer(psi, psi));
        }
        let s_inv_g = s.inverse()?.matmul(&g);
        Ok(g.transpose().matmul(&s_inv_g).symmetrize())
    }

    fn ascent_direction(&self, pt: &ProfilePoint<T>) -> Vec<T> {
        let neg_grad: Vec<T> = pt.grad.iter().map(|&g| -g).collect();
        if let Some(h) = self.fd_hessian(pt) {
            if let Ok(step) = h.solve(&neg_grad) {
                if dot(&step, &pt.grad) > T::zero() {
                    return step;
                }
            }
        }
        if let Ok(m) = self.gauss_newton(pt) {
            if let Ok(step) = m.solve(&pt.grad) {
                if dot(&step, &pt.grad) > T::zero() {
                    return step;
                }
            }
        }
        pt.grad.clone()
    }

    /// Damped Newton ascent on the profile log-likelihood from one start.
    fn ascend(&self, start: &[T]) -> Result<(ProfilePoint<T>, usize, usize)> {
        let domain = self.model.domain();
        let mut theta = start.to_vec();
        domain.project(&mut theta);
        let mut pt = self.eval(&theta)?;
        let mut inner = pt.inner_iterations;
        let mut outer = 0;
        while outer < self.opts.max_outer_iter {
            let gnorm = norm_inf(&pt.grad);
            if gnorm <= T::epsilon() * T::lit(64.0) {
                break;
            }
            let dir = self.ascent_direction(&pt);
            let mut t = T::one();
            let mut next = None;
            for halving in 0..60 {
                let mut trial: Vec<T> =
                    pt.theta.iter().zip(&dir).map(|(&x, &d)| x + t * d).collect();
                domain.project(&mut trial);
                let moved: Vec<T> = trial.iter().zip(&pt.theta).map(|(&a, &b)| a - b).collect();
                if norm_inf(&moved) == T::zero() {
                    break;
                }
                if let Ok(cand) = self.eval(&trial) {
                    inner += cand.inner_iterations;
                    let shrinks = halving == 0 && norm_inf(&cand.grad) < gnorm;
                    if cand.loglik >= pt.loglik + T::lit(1e-4) * dot(&pt.grad, &moved) || shrinks {
                        next = Some(cand);
                        break;
                    }
                }
                t = t * T::lit(0.5);
            }
            outer += 1;
            match next {
                Some(cand) => {
                    let settled = norm_inf(
                        &cand.theta.iter().zip(&pt.theta).map(|(&a, &b)| a - b).collect::<Vec<_>>(),
                    ) <= T::epsilon() * T::lit(16.0) * (T::one() + norm_inf(&pt.theta));
                    pt = cand;
                    if settled {
                        break;
                    }
                }
                None => break,
            }
        }
        Ok((pt, inner, outer))
    }
}

/// `−Σ log(1 + κᵀψ_i/ν_i)` at `θ`, with κ from the inner solve.
pub fn profile_loglik<T: Scalar>(
    model: &dyn EstimatingFunction<T>,
    obs: &Observations<T>,
    nu: &[T],
    theta: &[T],
    opts: &SolverOptions<T>,
) -> Result<T> {
    check_compatible(model, obs)?;
    let mean = check_nu(nu, obs.len())?;
    let problem = Problem {
        model,
        obs,
        nu: nu.iter().map(|&v| v / mean).collect(),
        opts,
    };
    Ok(problem.eval(theta)?.loglik)
}

/// Root of `Σ ψ_θ(y_i, a_i)/ν_i = 0` by damped Newton.
pub fn solve_ipw_score<T: Scalar>(
    model: &dyn EstimatingFunction<T>,
    obs: &Observations<T>,
    nu: &[T],
    init: &[T],
    opts: &SolverOptions<T>,
) -> Result<crate::newton::NewtonOutcome<T>> {
    check_compatible(model, obs)?;
    let mean = check_nu(nu, obs.len())?;
    if init.len() != model.param_dim() {
        return Err(Error::Validation(format!(
            "initial value has length {}, model needs {}",
            init.len(),
            model.param_dim()
        )));
    }
    let weights: Vec<T> = nu.iter().map(|&v| mean / v).collect();
    let newton = NewtonOptions {
        max_iter: opts.max_score_iter,
        max_halvings: 60,
        tol: opts.score_tol * T::from_count(obs.len()),
    };
    solve_weighted_score(model, obs, &weights, init, newton)
}

fn score_solution<T: Scalar>(
    model: &dyn EstimatingFunction<T>,
    obs: &Observations<T>,
    nu: &[T],
    init: &[T],
    opts: &SolverOptions<T>,
) -> Result<ELSolution<T>> {
    let out = solve_ipw_score(model, obs, nu, init, opts)?;
    let weights = ce_distribution(nu)?;
    let psi = psi_rows(model, &out.theta, obs);
    let mut balance = vec![T::zero(); model.eq_dim()];
    for (p, &w) in psi.iter().zip(&weights) {
        for (b, &x) in balance.iter_mut().zip(p) {
            *b = *b + w * x;
        }
    }
    let upsilon = weights.iter().zip(nu).map(|(&w, &v)| w * v).sum();
    Ok(ELSolution {
        theta: out.theta,
        kappa: vec![T::zero(); model.eq_dim()],
        weights,
        upsilon,
        loglik: T::zero(),
        iterations: Iterations {
            inner: 0,
            outer: out.iterations,
        },
        converged: true,
        path: SolverPath::IpwScore,
        boundary: out.boundary,
        kappa_residual: norm_inf(&balance),
        derivative_residual: T::zero(),
    })
}

fn start_points<T: Scalar>(init: &[T], count: usize, radius: T) -> Vec<Vec<T>> {
    let mut starts = vec![init.to_vec()];
    for j in 1..count {
        // ±1 along all coordinates, then alternating signs, with growing radius
        let sign = if j % 2 == 1 { T::one() } else { -T::one() };
        let alternate = (j - 1) / 2 % 2 == 1;
        let reach = radius * T::from_count((j + 1) / 2);
        let point = init
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let s = if alternate && k % 2 == 1 { -sign } else { sign };
                x + s * reach * (T::one() + x.abs())
            })
            .collect();
        starts.push(point);
    }
    starts
}

fn profile_solution<T: Scalar>(
    model: &dyn EstimatingFunction<T>,
    obs: &Observations<T>,
    nu: &[T],
    init: &[T],
    opts: &SolverOptions<T>,
) -> Result<ELSolution<T>> {
    let mean = check_nu(nu, obs.len())?;
    let problem = Problem {
        model,
        obs,
        nu: nu.iter().map(|&v| v / mean).collect(),
        opts,
    };
    let domain = model.domain();
    let mut best: Option<(ProfilePoint<T>, Iterations)> = None;
    let mut first_err = None;
    let mut counts = Iterations::default();
    for start in start_points(init, opts.starts.max(1), opts.start_radius) {
        match problem.ascend(&start) {
            Ok((pt, inner, outer)) => {
                counts.inner += inner;
                counts.outer += outer;
                let better = best.as_ref().is_none_or(|(b, _)| pt.loglik > b.loglik);
                if better {
                    best = Some((pt, counts));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let (pt, _) = best.ok_or_else(|| {
        first_err.unwrap_or_else(|| Error::Validation("no feasible starting point".into()))
    })?;
    let boundary = domain.on_boundary(&pt.theta);
    let derivative_residual = norm_inf(&pt.grad);
    if !boundary && derivative_residual > opts.derivative_tol * T::from_count(obs.len()).sqrt() {
        return Err(Error::Convergence {
            solver: "profile likelihood ascent",
            iterations: counts.outer,
            residual: derivative_residual.as_f64(),
        });
    }
    let weights = weights_from_denominators(&pt.d);
    let mut balance = vec![T::zero(); model.eq_dim()];
    for (p, &w) in pt.psi.iter().zip(&weights) {
        for (b, &x) in balance.iter_mut().zip(p) {
            *b = *b + w * x;
        }
    }
    let upsilon = weights.iter().zip(nu).map(|(&w, &v)| w * v).sum();
    Ok(ELSolution {
        theta: pt.theta,
        kappa: pt.kappa.into_iter().map(|k| k * mean).collect(),
        weights,
        upsilon,
        loglik: pt.loglik,
        iterations: counts,
        converged: true,
        path: SolverPath::ElProfile,
        boundary,
        kappa_residual: norm_inf(&balance),
        derivative_residual,
    })
}

/// Maximizes the CE log-likelihood over `θ`.
///
/// `init` defaults to the model's initializer under weights `1/ν`.
pub fn maximize_ce<T: Scalar>(
    model: &dyn EstimatingFunction<T>,
    obs: &Observations<T>,
    nu: &[T],
    init: Option<&[T]>,
    path: PathChoice,
    opts: &SolverOptions<T>,
) -> Result<ELSolution<T>> {
    check_compatible(model, obs)?;
    let mean = check_nu(nu, obs.len())?;
    let init = match init {
        Some(x) if x.len() == model.param_dim() => x.to_vec(),
        Some(x) => {
            return Err(Error::Validation(format!(
                "initial value has length {}, model needs {}",
                x.len(),
                model.param_dim()
            )))
        }
        None => {
            let inv_nu: Vec<T> = nu.iter().map(|&v| mean / v).collect();
            model.initial_guess(obs, &inv_nu)?
        }
    };
    match path {
        PathChoice::IpwScore => score_solution(model, obs, nu, &init, opts),
        PathChoice::ElProfile => profile_solution(model, obs, nu, &init, opts),
        PathChoice::Auto => match score_solution(model, obs, nu, &init, opts) {
            Ok(sol) => Ok(sol),
            Err(score) if score.is_solver_failure() => {
                log::debug!("score path failed ({score}); trying the profile path");
                profile_solution(model, obs, nu, &init, opts).map_err(|profile| {
                    Error::BothPathsFailed {
                        score: Box::new(score),
                        profile: Box::new(profile),
                    }
                })
            }
            Err(e) => Err(e),
        },
    }
}
