//! Error bounds: covariance and precision gaps under a Wasserstein budget,
//! perturbations of the aggregation matrix, and the compositional score MSE.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::compose::{lambda_matrix, PrecisionKind, PrecisionSet};
use crate::error::{Error, Result};
use crate::gaussmodel::{quad_expectation, GaussianLinearModel};
use crate::matkernel::SymMatrix;

/// Bound on `‖Σ̃ − Σ‖` when `W₂(p, p̃) ≤ η`.
pub fn covariance_gap_bound(sigma_norm: f64, eta: f64) -> Result<f64> {
    let max = (sigma_norm / 2.0).sqrt();
    if !(eta > 0.0 && eta < max) {
        return Err(Error::EtaOutOfRange { eta, max });
    }
    let root = (2.0 * sigma_norm).sqrt();
    Ok((2.0 * root * eta + eta * eta * (1.0 + SQRT_2)) * sigma_norm / (sigma_norm - eta * root))
}

/// Bound on `‖Σ̃⁻¹ − Σ⁻¹‖` given `‖Σ̃ − Σ‖ ≤ γ`.
pub fn precision_gap_bound(gamma: f64, sigma_inv_norm: f64) -> Result<f64> {
    let g = gamma * sigma_inv_norm;
    if !(g < 1.0) {
        return Err(Error::GammaTooLarge(g));
    }
    Ok(gamma * sigma_inv_norm * sigma_inv_norm / (1.0 - g))
}

/// Largest admissible `η`: `min(√(‖Σ‖/2), η₊)` where `η₊` is the positive
/// root at which `covariance_gap_bound · ‖Σ⁻¹‖` reaches 1.
pub fn eta_admissible_max(sigma_norm: f64, sigma_inv_norm: f64) -> f64 {
    let m = sigma_norm.sqrt();
    let k = 2.0 * m + 1.0 / (m * sigma_inv_norm);
    let disc = 2.0 * k * k + 4.0 * (SQRT_2 + 1.0) / sigma_inv_norm;
    let eta_plus = (-SQRT_2 * k + disc.sqrt()) / (2.0 * (1.0 + SQRT_2));
    (sigma_norm / 2.0).sqrt().min(eta_plus)
}

/// `(n − 1) ε_λ + n ε`, the bound on `‖Λ − Λ̃‖`.
pub fn lambda_gap_bound(n: usize, eps: f64, eps_lambda: f64) -> f64 {
    let n = n as f64;
    (n - 1.0) * eps_lambda + n * eps
}

/// Bound on `‖Λ̃⁻¹ − Λ⁻¹‖`.
pub fn lambda_inv_gap_bound(n: usize, eps: f64, eps_lambda: f64, lambda_inv_norm: f64) -> Result<f64> {
    let gap = lambda_gap_bound(n, eps, eps_lambda);
    let g = gap * lambda_inv_norm;
    if !(g < 1.0) {
        return Err(Error::AssumptionViolated(format!(
            "((n-1) eps_lambda + n eps) * ||inv(Lambda)|| = {g} is not below 1"
        )));
    }
    Ok(gap * lambda_inv_norm * lambda_inv_norm / (1.0 - g))
}

/// Inputs of the compositional score MSE bound.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: usize,
    pub lambda_inv_norm: f64,
    /// `max_j ‖Σ⁻¹_{t,j}‖`
    pub m: f64,
    /// `‖Σ⁻¹_{t,λ}‖` or an upper bound
    pub m_lambda: f64,
    /// `max_j E‖∇log p_t(θ|x_j)‖²` under the multi-observation posterior
    pub l: f64,
    pub l_lambda: f64,
    pub eps: f64,
    pub eps_lambda: f64,
    pub eps_dsm: f64,
    pub eps_dsm_lambda: f64,
}

impl BoundInputs {
    pub fn with_errors(mut self, eps: f64, eps_lambda: f64, eps_dsm: f64, eps_dsm_lambda: f64) -> Self {
        self.eps = eps;
        self.eps_lambda = eps_lambda;
        self.eps_dsm = eps_dsm;
        self.eps_dsm_lambda = eps_dsm_lambda;
        self
    }

    /// `G = ((n − 1) ε_λ + n ε) ‖Λ⁻¹‖`
    pub fn g(&self) -> f64 {
        lambda_gap_bound(self.n, self.eps, self.eps_lambda) * self.lambda_inv_norm
    }

    pub fn admissible(&self) -> bool {
        self.g() < 1.0
    }

    fn validate(&self) -> Result<()> {
        let fields = [
            self.lambda_inv_norm,
            self.m,
            self.m_lambda,
            self.l,
            self.l_lambda,
            self.eps,
            self.eps_lambda,
            self.eps_dsm,
            self.eps_dsm_lambda,
        ];
        if self.n == 0 || fields.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::AssumptionViolated(
                "bound inputs must be finite and nonnegative with n >= 1".into(),
            ));
        }
        if !self.admissible() {
            return Err(Error::AssumptionViolated(format!(
                "G = {} is not below 1",
                self.g()
            )));
        }
        Ok(())
    }
}

/// Upper bound on `E_{θ∼p_t(·|x_{1:n})} ‖∇log p_t(θ|x_{1:n}) − s(θ, x_{1:n}, t)‖²`,
/// allowing errors in the prior precision and prior score.
pub fn prop2_bound(b: &BoundInputs) -> Result<f64> {
    b.validate()?;
    let nm1 = (b.n - 1) as f64;
    let n = b.n as f64;
    let li = b.lambda_inv_norm;
    let g = b.g();
    let prior = nm1 * li * (b.l_lambda.sqrt() + b.eps_dsm_lambda)
        * (b.eps_lambda + g * (b.m_lambda + b.eps_lambda) / (1.0 - g));
    let indiv = n * li * (b.l.sqrt() + b.eps_dsm) * (b.eps + g * (b.m + b.eps) / (1.0 - g));
    let direct = li * (nm1 * b.m_lambda * b.eps_dsm_lambda + n * b.m * b.eps_dsm);
    let bracket = prior + indiv + direct;
    Ok(bracket * bracket)
}

/// The exact-prior form, coded independently of [`prop2_bound`] as a
/// cross-check. Ignores `eps_lambda` and `eps_dsm_lambda`.
pub fn prop2_bound_exact_prior(b: &BoundInputs) -> Result<f64> {
    let n = b.n as f64;
    let ne_li = n * b.eps * b.lambda_inv_norm;
    if b.n == 0 || !(ne_li < 1.0) {
        return Err(Error::AssumptionViolated(format!(
            "n eps ||inv(Lambda)|| = {ne_li} is not below 1"
        )));
    }
    let first = (n - 1.0) * b.lambda_inv_norm * b.l_lambda.sqrt() * (ne_li * b.m_lambda / (1.0 - ne_li));
    let second = n * b.lambda_inv_norm * (b.l.sqrt() + b.eps_dsm) * (b.eps + ne_li * (b.m + b.eps) / (1.0 - ne_li));
    let third = b.lambda_inv_norm * n * b.m * b.eps_dsm;
    Ok((first + second + third).powi(2))
}

/// `‖Λ⁻¹‖`, `M`, `M_λ`, `L`, `L_λ` for the Gaussian model at level `α`;
/// error fields are left at zero.
pub fn bound_constants(model: &GaussianLinearModel, xs: &[Vec<f64>], alpha_t: f64) -> Result<BoundInputs> {
    if xs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    if !(alpha_t > 0.0 && alpha_t < 1.0) {
        return Err(Error::InvalidAlpha(alpha_t));
    }
    let n = xs.len();
    let post_precision = model.posterior_precision(1);
    let set = PrecisionSet::new(
        model.prior_precision().clone(),
        vec![post_precision.clone(); n],
        PrecisionKind::Exact,
    )?;
    let lambda = lambda_matrix(&set, alpha_t)?;
    let lambda_inv_norm = lambda.symmetric_inverse(crate::compose::LAMBDA_REL_TOL)?.spectral_norm();
    let c = alpha_t / (1.0 - alpha_t);
    let m = post_precision.shift_diagonal(c).spectral_norm();
    let m_lambda = model.prior_precision().shift_diagonal(c).spectral_norm();

    let target = model.posterior_multi(xs)?.diffused(alpha_t)?;
    let root = alpha_t.sqrt();
    // ∇log of N(√α μ, αΣ + (1 − α)I) is −(αΣ + (1 − α)I)⁻¹(θ − √α μ).
    let score_matrix = |cov: &SymMatrix| -> Result<SymMatrix> {
        Ok(cov.scale(alpha_t).shift_diagonal(1.0 - alpha_t).cholesky_inverse()?.scale(-1.0))
    };
    let post_cov = post_precision.cholesky_inverse()?;
    let a_post = score_matrix(&post_cov)?;
    let mut l: f64 = 0.0;
    for x in xs {
        let mean = model.posterior(x)?.mean().iter().map(|v| root * v).collect::<Vec<_>>();
        l = l.max(quad_expectation(&a_post, &mean, &target)?);
    }
    let prior_mean: Vec<f64> = model.prior().mean().iter().map(|v| root * v).collect();
    let l_lambda = quad_expectation(&score_matrix(model.prior().cov())?, &prior_mean, &target)?;
    Ok(BoundInputs {
        n,
        lambda_inv_norm,
        m,
        m_lambda,
        l,
        l_lambda,
        ..BoundInputs::default()
    })
}
