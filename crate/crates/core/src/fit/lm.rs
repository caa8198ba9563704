//! Damped least-squares (Levenberg–Marquardt) minimization with numeric
//! Jacobians and t-interval parameter uncertainties.
//!
//! The residual callback returns *weighted* residuals
//! r_i = (model_i − data_i)·√w_i, so the cost is the usual chi-square.
//! Steps solve (JᵀJ + λ·diag(JᵀJ))·δ = −Jᵀr; a step that fails to
//! evaluate (out-of-domain parameters) is treated like a cost increase and
//! the damping grows.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::fit::linalg::SymMatrix;

/// Relative step used by the central-difference Jacobian, per unit of
/// parameter scale. cbrt(ε) balances truncation against rounding.
const JACOBIAN_STEP: f64 = 6.055_454_452_393_343e-6;

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the residual/Jacobian orthogonality
    /// (largest cosine between the residual vector and a Jacobian column).
    pub gradient_tolerance: f64,
    /// Convergence threshold on the scaled step infinity norm.
    pub step_tolerance: f64,
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    /// Characteristic magnitude of each parameter, used for difference
    /// steps and convergence scaling. Defaults to max(|p|, 1).
    pub step_scales: Option<Vec<f64>>,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 100,
            gradient_tolerance: 1e-6,
            step_tolerance: 1e-11,
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 10.0,
            step_scales: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub params: Vec<f64>,
    /// σ̂²·(JᵀWJ)⁻¹ over the fitted parameters.
    pub covariance: Vec<Vec<f64>>,
    /// 95% confidence half-widths (t-quantile × standard error).
    pub ci95: Vec<f64>,
    /// √(Σ weighted residual²) at the solution.
    pub residual_norm: f64,
    /// Reduced chi-square σ̂² = Σr²/dof.
    pub reduced_chi_square: f64,
    pub iterations: usize,
    pub converged: bool,
    pub dof: usize,
}

/// Central-difference Jacobian of the residual vector.
///
/// `step_factor` scales the base difference step; passing a different
/// factor re-derives the same matrix from shifted evaluation points, which
/// is how the Jacobian self-check works.
pub fn numeric_jacobian<F>(
    residual_fn: &F,
    params: &[f64],
    scales: &[f64],
    step_factor: f64,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let k = params.len();
    let mut jac: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut work = params.to_vec();
    for j in 0..k {
        let h = JACOBIAN_STEP * step_factor * scales[j];
        work[j] = params[j] + h;
        let plus = residual_fn(&work)?;
        work[j] = params[j] - h;
        let minus = residual_fn(&work)?;
        work[j] = params[j];
        let col: Vec<f64> = plus
            .iter()
            .zip(minus.iter())
            .map(|(p, m)| (p - m) / (2.0 * h))
            .collect();
        jac.push(col);
    }
    Ok(jac) // jac[j][i] = ∂r_i/∂p_j
}

/// Largest cosine between the residual vector and any Jacobian column:
/// zero at a least-squares minimum regardless of weighting or parameter
/// scales (the MINPACK orthogonality measure).
fn gradient_cosine(jac: &[Vec<f64>], residuals: &[f64], cost: f64) -> f64 {
    if cost <= 0.0 {
        return 0.0;
    }
    let rnorm = cost.sqrt();
    let mut worst = 0.0_f64;
    for col in jac {
        let mut dot = 0.0;
        let mut norm_sq = 0.0;
        for (j, r) in col.iter().zip(residuals.iter()) {
            dot += j * r;
            norm_sq += j * j;
        }
        if norm_sq > 0.0 {
            worst = worst.max(dot.abs() / (norm_sq.sqrt() * rnorm));
        }
    }
    worst
}

fn cost_of(residuals: &[f64]) -> Option<f64> {
    let mut sum = 0.0;
    for r in residuals {
        if !r.is_finite() {
            return None;
        }
        sum += r * r;
    }
    Some(sum)
}

/// Minimize Σ r_i(p)² starting from `init`.
pub fn levenberg_marquardt<F>(residual_fn: F, init: &[f64], options: &LmOptions) -> Result<LmResult>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let k = init.len();
    if k == 0 {
        return Err(Error::config("no free parameters to fit"));
    }
    for p in init {
        if !p.is_finite() {
            return Err(Error::config(format!("non-finite initial parameter {p}")));
        }
    }
    let scales: Vec<f64> = match &options.step_scales {
        Some(s) => {
            if s.len() != k {
                return Err(Error::config(format!(
                    "step_scales length {} does not match parameter count {k}",
                    s.len()
                )));
            }
            s.iter().map(|v| v.abs().max(1e-12)).collect()
        }
        None => init.iter().map(|p| p.abs().max(1.0)).collect(),
    };

    let mut params = init.to_vec();
    let mut residuals = residual_fn(&params)?;
    let n = residuals.len();
    if n < k + 1 {
        return Err(Error::InsufficientData(format!(
            "{n} residuals cannot constrain {k} parameters"
        )));
    }
    let mut cost = cost_of(&residuals)
        .ok_or_else(|| Error::Numeric("non-finite residual at initial parameters".into()))?;

    let mut lambda = options.initial_damping;
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = numeric_jacobian(&residual_fn, &params, &scales, 1.0)?;

    'outer: for iter in 1..=options.max_iterations {
        iterations = iter;
        // gradient g = Jᵀr and normal matrix A = JᵀJ
        let mut gradient = vec![0.0; k];
        let mut normal = SymMatrix::zeros(k);
        for j in 0..k {
            for i in 0..n {
                gradient[j] += jac[j][i] * residuals[i];
            }
            for l in 0..=j {
                let mut sum = 0.0;
                for i in 0..n {
                    sum += jac[j][i] * jac[l][i];
                }
                normal.set(j, l, sum);
                normal.set(l, j, sum);
            }
        }

        let grad_cosine = gradient_cosine(&jac, &residuals, cost);
        if grad_cosine <= options.gradient_tolerance {
            converged = true;
            break;
        }

        let mut accepted = false;
        for _attempt in 0..30 {
            let mut damped = normal.clone();
            for j in 0..k {
                let d = normal.get(j, j);
                damped.add(j, j, lambda * d.max(1e-30));
            }
            let rhs: Vec<f64> = gradient.iter().map(|g| -g).collect();
            let step = match damped.solve(&rhs) {
                Ok(s) => s,
                Err(_) => {
                    lambda *= options.damping_increase;
                    continue;
                }
            };
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, d)| p + d).collect();
            let trial_cost = residual_fn(&trial).ok().and_then(|r| cost_of(&r));
            match trial_cost {
                Some(c) if c < cost => {
                    let step_norm = step
                        .iter()
                        .zip(scales.iter())
                        .map(|(d, s)| (d / s).abs())
                        .fold(0.0_f64, f64::max);
                    params = trial;
                    residuals = residual_fn(&params)?;
                    cost = c;
                    lambda = (lambda / options.damping_decrease).max(1e-14);
                    accepted = true;
                    if step_norm <= options.step_tolerance {
                        // Stalled in parameter space; report convergence only
                        // if the gradient criterion also holds at the new point.
                        jac = numeric_jacobian(&residual_fn, &params, &scales, 1.0)?;
                        converged = gradient_cosine(&jac, &residuals, cost)
                            <= options.gradient_tolerance;
                        break 'outer;
                    }
                    break;
                }
                _ => {
                    lambda *= options.damping_increase;
                }
            }
        }
        if !accepted {
            // Damping exhausted: no downhill step exists at this resolution.
            converged = grad_cosine <= options.gradient_tolerance;
            break;
        }
        jac = numeric_jacobian(&residual_fn, &params, &scales, 1.0)?;
    }

    // Undamped Gauss–Newton polish: once the gradient test fires the
    // basin is parabolic, so a λ = 0 step removes the damping bias.
    if converged && cost > 0.0 {
        for _ in 0..2 {
            let pj = numeric_jacobian(&residual_fn, &params, &scales, 1.0)?;
            let mut gradient = vec![0.0; k];
            let mut normal = SymMatrix::zeros(k);
            for j in 0..k {
                for i in 0..n {
                    gradient[j] += pj[j][i] * residuals[i];
                }
                for l in 0..=j {
                    let mut sum = 0.0;
                    for i in 0..n {
                        sum += pj[j][i] * pj[l][i];
                    }
                    normal.set(j, l, sum);
                    normal.set(l, j, sum);
                }
            }
            let rhs: Vec<f64> = gradient.iter().map(|g| -g).collect();
            let step = match normal.solve(&rhs) {
                Ok(s) => s,
                Err(_) => break,
            };
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, d)| p + d).collect();
            match residual_fn(&trial).ok().and_then(|r| cost_of(&r)) {
                Some(c) if c < cost => {
                    params = trial;
                    residuals = residual_fn(&params)?;
                    cost = c;
                }
                _ => break,
            }
        }
        jac = numeric_jacobian(&residual_fn, &params, &scales, 1.0)?;
    }

    let dof = n - k;
    if dof == 0 {
        return Err(Error::DegenerateFit(
            "zero degrees of freedom after fitting".into(),
        ));
    }
    let reduced_chi_square = cost / dof as f64;

    // Covariance from the undamped normal matrix at the solution.
    let mut normal = SymMatrix::zeros(k);
    for j in 0..k {
        for l in 0..=j {
            let mut sum = 0.0;
            for i in 0..n {
                sum += jac[j][i] * jac[l][i];
            }
            normal.set(j, l, sum);
            normal.set(l, j, sum);
        }
    }
    let inverse = normal.invert()?;
    let mut covariance = inverse.to_rows();
    for row in covariance.iter_mut() {
        for v in row.iter_mut() {
            *v *= reduced_chi_square;
        }
    }
    let t = t_quantile_975(dof);
    let ci95: Vec<f64> = (0..k)
        .map(|j| t * covariance[j][j].max(0.0).sqrt())
        .collect();

    Ok(LmResult {
        params,
        covariance,
        ci95,
        residual_norm: cost.sqrt(),
        reduced_chi_square,
        iterations,
        converged,
        dof,
    })
}

/// Two-sided 95% Student-t quantile for `dof` degrees of freedom.
pub fn t_quantile_975(dof: usize) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, dof as f64)
        .expect("degrees of freedom are positive by construction");
    dist.inverse_cdf(0.975)
}
