//! Gaussian prior / Gaussian simulator test case.
//!
//! With prior `N(μ_λ, Σ_λ)` and likelihood `x | θ ~ N(θ, Σ)` every object in
//! the pipeline is Gaussian: single- and multi-observation posteriors, their
//! variance-preserving diffusions and the corresponding scores. This module
//! provides those closed forms together with the Gaussian utilities (sampling,
//! empirical fits, Wasserstein-2, quadratic expectations) the rest of the
//! crate measures against.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::matkernel::{norm_sq, sub, Cholesky, SymMatrix, PSD_CLAMP};
use crate::rng::{rng_from_seed, Rng};

/// Multivariate normal with an SPD covariance.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: Vec<f64>,
    cov: SymMatrix,
    chol: Cholesky,
}

impl PartialEq for Gaussian {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, cov: SymMatrix) -> Result<Self> {
        check_dim(cov.dim(), mean.len())?;
        let chol = cov.cholesky()?;
        Ok(Gaussian { mean, cov, chol })
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(vec![0.0; dim], SymMatrix::identity(dim)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &SymMatrix {
        &self.cov
    }

    pub fn precision(&self) -> SymMatrix {
        self.chol
            .inverse()
            .expect("factor dimensions are consistent")
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let r = sub(x, &self.mean);
        let y = self.chol.solve(&r)?;
        let maha: f64 = r.iter().zip(&y).map(|(a, b)| a * b).sum();
        Ok(-0.5 * (maha + self.chol.log_det() + self.dim() as f64 * (2.0 * PI).ln()))
    }

    /// Marginal after the variance-preserving forward kernel
    /// `N(√α θ₀, (1−α) I)`.
    pub fn diffused(&self, alpha_t: f64) -> Result<Gaussian> {
        if !(alpha_t > 0.0 && alpha_t <= 1.0) {
            return Err(Error::InvalidAlpha(alpha_t));
        }
        let s = alpha_t.sqrt();
        let cov = self.cov.scale(alpha_t).shift_diagonal(1.0 - alpha_t);
        Gaussian::new(self.mean.iter().map(|m| s * m).collect(), cov)
    }

    /// Score of the diffused marginal at `theta`:
    /// `−(α Σ + (1−α) I)⁻¹ (θ − √α μ)`.
    pub fn diffused_score(&self, alpha_t: f64, theta: &[f64]) -> Result<Vec<f64>> {
        let g = self.diffused(alpha_t)?;
        check_dim(g.dim(), theta.len())?;
        let r = sub(theta, &g.mean);
        Ok(g.chol.solve(&r)?.into_iter().map(|v| -v).collect())
    }

    pub(crate) fn draw_into(&self, rng: &mut Rng, z: &mut [f64], out: &mut [f64]) {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        self.chol.mul_lower(z, out);
        for (o, m) in out.iter_mut().zip(&self.mean) {
            *o += m;
        }
    }

    pub fn sample_with(&self, rng: &mut Rng, count: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut z = vec![0.0; d];
        (0..count)
            .map(|_| {
                let mut out = vec![0.0; d];
                self.draw_into(rng, &mut z, &mut out);
                out
            })
            .collect()
    }

    /// `count` IID draws, deterministic in `seed`.
    pub fn sample(&self, seed: u64, count: usize) -> Vec<Vec<f64>> {
        self.sample_with(&mut rng_from_seed(seed), count)
    }
}

pub fn diffused(g: &Gaussian, alpha_t: f64) -> Result<Gaussian> {
    g.diffused(alpha_t)
}

pub fn analytic_score(g: &Gaussian, alpha_t: f64, theta: &[f64]) -> Result<Vec<f64>> {
    g.diffused_score(alpha_t, theta)
}

pub fn sample(g: &Gaussian, seed: u64, count: usize) -> Vec<Vec<f64>> {
    g.sample(seed, count)
}

/// Conjugate model `θ ~ N(μ_λ, Σ_λ)`, `x | θ ~ N(θ, Σ)`.
#[derive(Debug, Clone)]
pub struct GaussianLinearModel {
    prior: Gaussian,
    likelihood_cov: SymMatrix,
    prior_precision: SymMatrix,
    likelihood_precision: SymMatrix,
}

impl GaussianLinearModel {
    pub fn new(prior: Gaussian, likelihood_cov: SymMatrix) -> Result<Self> {
        check_dim(prior.dim(), likelihood_cov.dim())?;
        let likelihood_precision = likelihood_cov.cholesky_inverse()?;
        let prior_precision = prior.precision();
        Ok(GaussianLinearModel {
            prior,
            likelihood_cov,
            prior_precision,
            likelihood_precision,
        })
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn prior(&self) -> &Gaussian {
        &self.prior
    }

    pub fn likelihood_cov(&self) -> &SymMatrix {
        &self.likelihood_cov
    }

    pub fn prior_precision(&self) -> &SymMatrix {
        &self.prior_precision
    }

    /// Precision of `p(θ | x_{1:n})`: `nΣ⁻¹ + Σ_λ⁻¹`.
    pub fn posterior_precision(&self, n: usize) -> SymMatrix {
        self.likelihood_precision
            .scale(n as f64)
            .add(&self.prior_precision)
            .expect("dimensions checked at construction")
    }

    pub fn posterior(&self, x: &[f64]) -> Result<Gaussian> {
        self.posterior_multi(&[x.to_vec()])
    }

    pub fn posterior_multi(&self, xs: &[Vec<f64>]) -> Result<Gaussian> {
        if xs.is_empty() {
            return Err(Error::EmptyObservations);
        }
        let d = self.dim();
        let mut sum = vec![0.0; d];
        for x in xs {
            check_dim(d, x.len())?;
            sum.iter_mut().zip(x).for_each(|(s, v)| *s += v);
        }
        let precision = self.posterior_precision(xs.len());
        let chol = precision.cholesky()?;
        let cov = chol.inverse()?;
        let mut rhs = self.likelihood_precision.mul_vec(&sum)?;
        let prior_term = self.prior_precision.mul_vec(self.prior.mean())?;
        rhs.iter_mut().zip(&prior_term).for_each(|(r, p)| *r += p);
        let mean = chol.solve(&rhs)?;
        Gaussian::new(mean, cov)
    }

    /// Observations `x_i ~ N(θ, Σ)` drawn sequentially from `seed`, so a
    /// shorter request is a prefix of a longer one.
    pub fn simulate(&self, theta: &[f64], n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let sim = Gaussian::new(theta.to_vec(), self.likelihood_cov.clone())?;
        Ok(sim.sample(seed, n))
    }
}

/// Closed-form Wasserstein-2 distance between Gaussians.
pub fn gaussian_w2(a: &Gaussian, b: &Gaussian) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let mean_term = norm_sq(&sub(a.mean(), b.mean()));
    let root_b = b.cov().sqrtm_psd()?;
    let cross = a.cov().sandwich(&root_b)?.sqrtm_psd()?;
    let radicand = mean_term + a.cov().trace() + b.cov().trace() - 2.0 * cross.trace();
    if radicand < 0.0 && radicand > PSD_CLAMP {
        return Ok(0.0);
    }
    Ok(radicand.max(0.0).sqrt())
}

/// `E_{θ ~ dist} ‖A (θ − b)‖² = tr(AᵀA Σ) + ‖A(μ − b)‖²` for symmetric `A`.
pub fn quad_expectation(a: &SymMatrix, b: &[f64], dist: &Gaussian) -> Result<f64> {
    check_dim(a.dim(), dist.dim())?;
    check_dim(a.dim(), b.len())?;
    let a2 = a.sym_product(a)?;
    let trace_term = a2.sym_product(dist.cov())?.trace();
    let shift = a.mul_vec(&sub(dist.mean(), b))?;
    Ok(trace_term + norm_sq(&shift))
}

/// Sample mean and unbiased covariance. When the covariance is not
/// positive definite, `λ I` is added with `λ = 1e-8 · tr/d` (or `1e-8` for a
/// zero matrix), growing tenfold until Cholesky succeeds.
pub fn empirical_gaussian(samples: &[Vec<f64>]) -> Result<Gaussian> {
    let d = samples.first().map(|s| s.len()).unwrap_or(0);
    if d == 0 || samples.len() < d + 1 {
        return Err(Error::TooFewSamples {
            needed: d.max(1) + 1,
            found: samples.len(),
        });
    }
    let count = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for s in samples {
        check_dim(d, s.len())?;
        mean.iter_mut().zip(s).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut acc = vec![0.0; d * d];
    let mut r = vec![0.0; d];
    for s in samples {
        r.iter_mut()
            .zip(s.iter().zip(&mean))
            .for_each(|(ri, (x, m))| *ri = x - m);
        for i in 0..d {
            for j in i..d {
                acc[i * d + j] += r[i] * r[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = acc[i * d + j] / (count - 1.0);
            acc[i * d + j] = v;
            acc[j * d + i] = v;
        }
    }
    let cov = SymMatrix::new(d, acc)?;
    if cov.cholesky().is_ok() {
        return Gaussian::new(mean, cov);
    }
    let base = cov.trace() / d as f64;
    let mut jitter = if base > 0.0 { 1e-8 * base } else { 1e-8 };
    for _ in 0..12 {
        let jittered = cov.shift_diagonal(jitter);
        if jittered.cholesky().is_ok() {
            return Gaussian::new(mean, jittered);
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite {
        row: 0,
        pivot: cov.min_eigenvalue(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(mean: f64, var: f64) -> Gaussian {
        Gaussian::new(vec![mean], SymMatrix::diag(&[var])).unwrap()
    }

    fn unit_model(d: usize) -> GaussianLinearModel {
        GaussianLinearModel::new(Gaussian::standard(d), SymMatrix::identity(d)).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn scalar_posterior() {
        let p = unit_model(1).posterior(&[0.0]).unwrap();
        assert!(close(p.mean()[0], 0.0, 1e-15));
        assert!(close(p.cov().get(0, 0), 0.5, 1e-15));
    }

    #[test]
    fn flat_prior_posterior_follows_data() {
        let prior = scalar(0.0, 1e6);
        let model = GaussianLinearModel::new(prior, SymMatrix::identity(1)).unwrap();
        let p = model.posterior(&[2.0]).unwrap();
        assert!(close(p.mean()[0], 2.0, 1e-4));
    }

    #[test]
    fn two_dim_posterior() {
        let p = unit_model(2).posterior(&[2.0, 4.0]).unwrap();
        assert!(close(p.mean()[0], 1.0, 1e-14) && close(p.mean()[1], 2.0, 1e-14));
        assert!(
            p.cov()
                .sub(&SymMatrix::scaled_identity(2, 0.5))
                .unwrap()
                .spectral_norm()
                < 1e-15
        );
    }

    #[test]
    fn multi_observation_posterior() {
        let model = unit_model(1);
        let single = model.posterior(&[1.3]).unwrap();
        let multi = model.posterior_multi(&[vec![1.3]]).unwrap();
        assert_eq!(single, multi);

        let p = model.posterior_multi(&[vec![0.0], vec![0.0]]).unwrap();
        assert!(close(p.cov().get(0, 0), 1.0 / 3.0, 1e-15));
        let p = model.posterior_multi(&[vec![3.0], vec![-3.0]]).unwrap();
        assert!(close(p.mean()[0], 0.0, 1e-15));
        assert!(close(p.cov().get(0, 0), 1.0 / 3.0, 1e-15));

        assert_eq!(
            model.posterior_multi(&[]).unwrap_err(),
            Error::EmptyObservations
        );
        assert!(matches!(
            model.posterior(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn diffusion_of_gaussian() {
        let g = scalar(2.0, 0.5);
        assert_eq!(g.diffused(1.0).unwrap(), g);
        let h = g.diffused(0.5).unwrap();
        assert!(close(h.mean()[0], 0.5f64.sqrt() * 2.0, 1e-15));
        assert!(close(h.cov().get(0, 0), 0.75, 1e-15));
        let z = g.diffused(1e-12).unwrap();
        assert!(close(z.mean()[0], 0.0, 1e-5) && close(z.cov().get(0, 0), 1.0, 1e-11));
        assert!(matches!(g.diffused(0.0), Err(Error::InvalidAlpha(_))));
        assert!(matches!(g.diffused(1.5), Err(Error::InvalidAlpha(_))));
    }

    #[test]
    fn analytic_score_examples() {
        let g = Gaussian::new(vec![1.0, -2.0], SymMatrix::diag(&[0.3, 2.0])).unwrap();
        let mode: Vec<f64> = g.mean().iter().map(|m| 0.7f64.sqrt() * m).collect();
        assert!(norm_sq(&analytic_score(&g, 0.7, &mode).unwrap()) < 1e-28);
        let s = analytic_score(&scalar(0.0, 0.5), 0.5, &[1.0]).unwrap();
        assert!(close(s[0], -4.0 / 3.0, 1e-14));
        let s = analytic_score(&scalar(0.0, 1.0), 0.5, &[1.0]).unwrap();
        assert!(close(s[0], -1.0, 1e-14));
    }

    #[test]
    fn w2_examples() {
        let a = scalar(0.0, 1.0);
        assert!(gaussian_w2(&a, &a).unwrap() <= 1e-9);
        assert!(close(
            gaussian_w2(&a, &scalar(3.0, 1.0)).unwrap(),
            3.0,
            1e-12
        ));
        assert!(close(
            gaussian_w2(&a, &scalar(0.0, 4.0)).unwrap(),
            1.0,
            1e-12
        ));
        assert!(gaussian_w2(&a, &Gaussian::standard(2)).is_err());
    }

    #[test]
    fn quad_expectation_examples() {
        let dist = Gaussian::new(vec![1.0, 2.0], SymMatrix::identity(2)).unwrap();
        let v = quad_expectation(&SymMatrix::identity(2), &[1.0, 2.0], &dist).unwrap();
        assert!(close(v, 2.0, 1e-15));
        assert_eq!(
            quad_expectation(&SymMatrix::zeros(2), &[0.0, 0.0], &dist).unwrap(),
            0.0
        );
        let a = SymMatrix::diag(&[-4.0 / 3.0]);
        let v = quad_expectation(&a, &[0.0], &scalar(0.0, 2.0 / 3.0)).unwrap();
        assert!(close(v, 32.0 / 27.0, 1e-14));
    }

    #[test]
    fn sampling_statistics() {
        let samples = Gaussian::standard(2).sample(11, 100_000);
        for k in 0..2 {
            let m: f64 = samples.iter().map(|s| s[k]).sum::<f64>() / 1e5;
            assert!(m.abs() < 0.02, "coordinate {k} mean {m}");
        }
        let g = Gaussian::new(vec![0.0, 0.0], SymMatrix::diag(&[4.0, 1.0])).unwrap();
        let fit = empirical_gaussian(&g.sample(12, 100_000)).unwrap();
        assert!(close(fit.cov().get(0, 0), 4.0, 0.1));
        assert_eq!(g.sample(5, 10), g.sample(5, 10));
        assert_ne!(g.sample(5, 10), g.sample(6, 10));
    }

    #[test]
    fn empirical_gaussian_examples() {
        let square = vec![
            vec![0.0, 0.0],
            vec![2.0, 0.0],
            vec![0.0, 2.0],
            vec![2.0, 2.0],
        ];
        let fit = empirical_gaussian(&square).unwrap();
        assert_eq!(fit.mean(), &[1.0, 1.0]);
        assert!(
            fit.cov()
                .sub(&SymMatrix::scaled_identity(2, 4.0 / 3.0))
                .unwrap()
                .spectral_norm()
                < 1e-14
        );

        let same = vec![vec![1.0, 2.0]; 5];
        let fit = empirical_gaussian(&same).unwrap();
        assert_eq!(fit.mean(), &[1.0, 2.0]);
        assert!(fit.cov().get(0, 1).abs() < 1e-20);
        assert!(fit.cov().get(0, 0) > 0.0 && fit.cov().get(0, 0) < 1e-6);

        assert!(matches!(
            empirical_gaussian(&square[..2]),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn empirical_fit_of_many_draws_is_close_in_w2() {
        let target = Gaussian::standard(2);
        for seed in 0..10 {
            let fit = empirical_gaussian(&target.sample(100 + seed, 100_000)).unwrap();
            assert!(gaussian_w2(&fit, &target).unwrap() <= 0.03);
        }
    }

    #[test]
    fn log_density_matches_scalar_formula() {
        let g = scalar(1.0, 4.0);
        let expected = -0.5 * ((3.0 - 1.0f64).powi(2) / 4.0 + 4.0f64.ln() + (2.0 * PI).ln());
        assert!(close(g.log_density(&[3.0]).unwrap(), expected, 1e-14));
    }
}
