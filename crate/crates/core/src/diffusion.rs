//! Variance-preserving diffusion.
//!
//! `α(t) = exp(−β_min t − (β_max − β_min) t² / 2)` with linear
//! `β(t) = β_min + (β_max − β_min) t`. Reverse-time sampling uses
//! Euler–Maruyama on `dθ = [−β/2 θ − β s(θ, t)] dt + √β dW̄`, integrated from
//! `t = 1` down to `t_clamp` on a uniform grid and started at `N(0, I)`.

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussmodel::Gaussian;
use crate::matkernel::{dot, norm};
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// Trajectories are integrated in blocks of this size; each block advances
/// all of its trajectories one step at a time so that time-dependent work in
/// the score field is shared.
const BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionSchedule {
    pub beta_min: f64,
    pub beta_max: f64,
    pub t_clamp: f64,
    pub steps: usize,
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        DiffusionSchedule {
            beta_min: 0.1,
            beta_max: 20.0,
            t_clamp: 1e-3,
            steps: 1000,
        }
    }
}

impl DiffusionSchedule {
    pub fn new(beta_min: f64, beta_max: f64, t_clamp: f64, steps: usize) -> Result<Self> {
        let s = DiffusionSchedule {
            beta_min,
            beta_max,
            t_clamp,
            steps,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_min > 0.0 && self.beta_min < self.beta_max && self.beta_max.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "need 0 < beta_min < beta_max, got {} and {}",
                self.beta_min, self.beta_max
            )));
        }
        if !(self.t_clamp > 0.0 && self.t_clamp < 0.1) {
            return Err(Error::InvalidSchedule(format!(
                "t_clamp must lie in (0, 0.1), got {}",
                self.t_clamp
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidSchedule("steps must be positive".into()));
        }
        Ok(())
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        // Grid points are computed as t_clamp + k·h and may overshoot 1 by an ulp.
        if t >= self.t_clamp && t <= 1.0 + 1e-12 {
            Ok(())
        } else {
            Err(Error::TimeOutOfRange {
                t,
                t_clamp: self.t_clamp,
            })
        }
    }

    #[inline]
    pub fn beta(&self, t: f64) -> f64 {
        self.beta_min + (self.beta_max - self.beta_min) * t
    }

    /// `α(t)` without range checks; valid for any `t ≥ 0`.
    #[inline]
    pub fn alpha(&self, t: f64) -> f64 {
        (-self.beta_min * t - 0.5 * (self.beta_max - self.beta_min) * t * t).exp()
    }

    pub fn alpha_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.alpha(t))
    }

    pub fn step_size(&self) -> f64 {
        (1.0 - self.t_clamp) / self.steps as f64
    }

    /// `steps + 1` uniformly spaced points from `t_clamp` to 1.
    pub fn time_grid(&self) -> Vec<f64> {
        let h = self.step_size();
        (0..=self.steps)
            .map(|k| {
                if k == self.steps {
                    1.0
                } else {
                    self.t_clamp + k as f64 * h
                }
            })
            .collect()
    }

    pub fn forward_sample(&self, theta0: &[f64], t: f64, rng_seed: u64) -> Result<Vec<f64>> {
        let alpha = self.alpha_at(t)?;
        let mut rng = rng_from_seed(rng_seed);
        let (a, s) = (alpha.sqrt(), (1.0 - alpha).sqrt());
        Ok(theta0
            .iter()
            .map(|x| {
                let z: f64 = rng.sample(StandardNormal);
                a * x + s * z
            })
            .collect())
    }
}

pub fn alpha_at(schedule: &DiffusionSchedule, t: f64) -> Result<f64> {
    schedule.alpha_at(t)
}

pub fn forward_sample(
    schedule: &DiffusionSchedule,
    theta0: &[f64],
    t: f64,
    rng_seed: u64,
) -> Result<Vec<f64>> {
    schedule.forward_sample(theta0, t, rng_seed)
}

/// A time-dependent score `(θ, t) ↦ s(θ, t)`.
///
/// Implementations must be deterministic and safe to call concurrently.
pub trait ScoreField: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `s(θ, t)` into `out`; both slices have length `dim()`.
    fn evaluate_into(&self, theta: &[f64], t: f64, out: &mut [f64]);

    /// Row-major batch version: `thetas` and `out` hold `k · dim()` values.
    /// Override when per-time work can be shared across points.
    fn evaluate_batch(&self, thetas: &[f64], t: f64, out: &mut [f64]) {
        let d = self.dim();
        for (th, o) in thetas.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            self.evaluate_into(th, t, o);
        }
    }

    fn evaluate(&self, theta: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.evaluate_into(theta, t, &mut out);
        out
    }
}

impl<S: ScoreField + ?Sized> ScoreField for Arc<S> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn evaluate_into(&self, theta: &[f64], t: f64, out: &mut [f64]) {
        (**self).evaluate_into(theta, t, out)
    }
    fn evaluate_batch(&self, thetas: &[f64], t: f64, out: &mut [f64]) {
        (**self).evaluate_batch(thetas, t, out)
    }
}

pub type SharedScore = Arc<dyn ScoreField>;

/// Exact score of the diffused version of a Gaussian target.
///
/// The covariance is diagonalised once, so each evaluation costs `O(d²)`.
#[derive(Debug, Clone)]
pub struct AnalyticScore {
    target: Gaussian,
    schedule: DiffusionSchedule,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
}

impl AnalyticScore {
    pub fn new(target: Gaussian, schedule: DiffusionSchedule) -> Self {
        let eig = target.cov().eigen();
        AnalyticScore {
            target,
            schedule,
            eigenvalues: eig.values,
            eigenvectors: eig.vectors,
        }
    }

    pub fn shared(target: Gaussian, schedule: DiffusionSchedule) -> SharedScore {
        Arc::new(Self::new(target, schedule))
    }

    pub fn target(&self) -> &Gaussian {
        &self.target
    }

    fn coefficients(&self, t: f64) -> (f64, Vec<f64>) {
        let alpha = self.schedule.alpha(t);
        let inv = self
            .eigenvalues
            .iter()
            .map(|l| 1.0 / (alpha * l + 1.0 - alpha))
            .collect();
        (alpha.sqrt(), inv)
    }

    #[inline]
    fn apply(&self, root_alpha: f64, inv: &[f64], theta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (w, v) in inv.iter().zip(&self.eigenvectors) {
            let proj: f64 = v
                .iter()
                .zip(theta.iter().zip(self.target.mean()))
                .map(|(vi, (th, m))| vi * (th - root_alpha * m))
                .sum();
            let c = -w * proj;
            out.iter_mut().zip(v).for_each(|(o, vi)| *o += c * vi);
        }
    }
}

impl ScoreField for AnalyticScore {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn evaluate_into(&self, theta: &[f64], t: f64, out: &mut [f64]) {
        let (ra, inv) = self.coefficients(t);
        self.apply(ra, &inv, theta, out);
    }

    fn evaluate_batch(&self, thetas: &[f64], t: f64, out: &mut [f64]) {
        let (ra, inv) = self.coefficients(t);
        let d = self.dim();
        for (th, o) in thetas.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            self.apply(ra, &inv, th, o);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationMode {
    /// Constant offset `ε · e₁`.
    #[default]
    FixedBias,
    /// Offset of norm `ε` along a direction that depends only on `t`.
    RandomField,
}

/// `base + ε · u(t)` with `‖u(t)‖ = 1` and `u` independent of θ, so the mean
/// squared deviation from `base` is exactly `ε²` under any measure.
pub struct PerturbedScore {
    base: SharedScore,
    eps_dsm: f64,
    mode: PerturbationMode,
    seed: u64,
}

impl PerturbedScore {
    pub fn new(base: SharedScore, eps_dsm: f64, mode: PerturbationMode, rng_seed: u64) -> Self {
        assert!(eps_dsm >= 0.0, "eps_dsm must be nonnegative");
        PerturbedScore {
            base,
            eps_dsm,
            mode,
            seed: rng_seed,
        }
    }

    pub fn eps_dsm(&self) -> f64 {
        self.eps_dsm
    }

    pub fn direction(&self, t: f64) -> Vec<f64> {
        let d = self.base.dim();
        match self.mode {
            PerturbationMode::FixedBias => {
                let mut u = vec![0.0; d];
                u[0] = 1.0;
                u
            }
            PerturbationMode::RandomField => {
                let mut rng: Rng = rng_from_seed(derive_seed(self.seed, t.to_bits()));
                loop {
                    let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                    let n = norm(&v);
                    if n > 1e-12 {
                        return v.into_iter().map(|x| x / n).collect();
                    }
                }
            }
        }
    }
}

impl ScoreField for PerturbedScore {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn evaluate_into(&self, theta: &[f64], t: f64, out: &mut [f64]) {
        self.base.evaluate_into(theta, t, out);
        if self.eps_dsm > 0.0 {
            let u = self.direction(t);
            out.iter_mut()
                .zip(&u)
                .for_each(|(o, ui)| *o += self.eps_dsm * ui);
        }
    }

    fn evaluate_batch(&self, thetas: &[f64], t: f64, out: &mut [f64]) {
        self.base.evaluate_batch(thetas, t, out);
        if self.eps_dsm > 0.0 {
            let u = self.direction(t);
            for o in out.chunks_exact_mut(u.len()) {
                o.iter_mut()
                    .zip(&u)
                    .for_each(|(oi, ui)| *oi += self.eps_dsm * ui);
            }
        }
    }
}

pub fn perturbed_score(
    base: SharedScore,
    eps_dsm: f64,
    mode: PerturbationMode,
    rng_seed: u64,
) -> SharedScore {
    Arc::new(PerturbedScore::new(base, eps_dsm, mode, rng_seed))
}

/// Reverse-time Euler–Maruyama endpoints for trajectories seeded by
/// `derive_seed(rng_seed, i)`, `i = 0..count`.
pub fn backward_sample(
    schedule: &DiffusionSchedule,
    score: &dyn ScoreField,
    rng_seed: u64,
    count: usize,
) -> Result<Vec<Vec<f64>>> {
    let seeds: Vec<u64> = (0..count as u64)
        .map(|i| derive_seed(rng_seed, i))
        .collect();
    backward_sample_with_seeds(schedule, score, &seeds)
}

/// One trajectory per entry of `seeds`. Trajectory `i` depends only on
/// `seeds[i]`, never on its position, block or worker thread.
pub fn backward_sample_with_seeds(
    schedule: &DiffusionSchedule,
    score: &dyn ScoreField,
    seeds: &[u64],
) -> Result<Vec<Vec<f64>>> {
    schedule.validate()?;
    if seeds.is_empty() {
        return Err(Error::TooFewSamples {
            needed: 1,
            found: 0,
        });
    }
    let grid = schedule.time_grid();
    let blocks: Vec<Result<Vec<Vec<f64>>>> = seeds
        .par_chunks(BLOCK)
        .map(|chunk| integrate_block(schedule, score, &grid, chunk))
        .collect();
    let mut out = Vec::with_capacity(seeds.len());
    for b in blocks {
        out.extend(b?);
    }
    Ok(out)
}

fn integrate_block(
    schedule: &DiffusionSchedule,
    score: &dyn ScoreField,
    grid: &[f64],
    seeds: &[u64],
) -> Result<Vec<Vec<f64>>> {
    let d = score.dim();
    let k = seeds.len();
    let mut rngs: Vec<Rng> = seeds.iter().map(|s| rng_from_seed(*s)).collect();
    let mut theta = vec![0.0; k * d];
    for (rng, th) in rngs.iter_mut().zip(theta.chunks_exact_mut(d)) {
        th.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
    }
    let mut s = vec![0.0; k * d];
    let h = schedule.step_size();
    for idx in (1..grid.len()).rev() {
        let t = grid[idx];
        let beta = schedule.beta(t);
        score.evaluate_batch(&theta, t, &mut s);
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteScore { t });
        }
        let noise = (beta * h).sqrt();
        for ((rng, th), sc) in rngs
            .iter_mut()
            .zip(theta.chunks_exact_mut(d))
            .zip(s.chunks_exact(d))
        {
            for (x, si) in th.iter_mut().zip(sc) {
                let z: f64 = rng.sample(StandardNormal);
                *x += (0.5 * beta * *x + beta * si) * h + noise * z;
            }
        }
    }
    Ok(theta.chunks_exact(d).map(|c| c.to_vec()).collect())
}

/// Checks a field's dimension against an expected one.
pub fn check_score_dim(score: &dyn ScoreField, dim: usize) -> Result<()> {
    check_dim(dim, score.dim())
}

/// Mean squared difference between two fields over a set of points.
pub fn mean_sq_gap(a: &dyn ScoreField, b: &dyn ScoreField, points: &[Vec<f64>], t: f64) -> f64 {
    let total: f64 = points
        .iter()
        .map(|p| {
            let (x, y) = (a.evaluate(p, t), b.evaluate(p, t));
            let diff: Vec<f64> = x.iter().zip(&y).map(|(u, v)| u - v).collect();
            dot(&diff, &diff)
        })
        .sum();
    total / points.len() as f64
}
