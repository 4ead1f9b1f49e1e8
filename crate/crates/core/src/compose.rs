//! Compositional score for `n` conditionally independent observations.
//!
//! Every diffused precision is the undiffused one shifted by `c(t) I` with
//! `c = α/(1 − α)`, so the aggregation matrix is
//! `Λ(t) = Λ₀ + c(t) I` with `Λ₀ = Σ_j P_j − (n − 1) P_λ`. One
//! eigen-decomposition of `Λ₀` therefore serves every time point.

use std::sync::Arc;

use crate::diffusion::{AnalyticScore, DiffusionSchedule, ScoreField, SharedScore};
use crate::error::{check_dim, Error, Result};
use crate::gaussmodel::GaussianLinearModel;
use crate::matkernel::{SymEigen, SymMatrix};

/// Relative threshold below which `Λ` is declared singular.
pub const LAMBDA_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecisionKind {
    Exact,
    Estimated,
}

/// Prior precision plus one precision per observation.
#[derive(Debug, Clone)]
pub struct PrecisionSet {
    prior_precision: SymMatrix,
    individual_precisions: Vec<SymMatrix>,
    kind: PrecisionKind,
}

impl PrecisionSet {
    pub fn new(
        prior_precision: SymMatrix,
        individual_precisions: Vec<SymMatrix>,
        kind: PrecisionKind,
    ) -> Result<Self> {
        if individual_precisions.is_empty() {
            return Err(Error::EmptyObservations);
        }
        let d = prior_precision.dim();
        prior_precision.cholesky()?;
        for p in &individual_precisions {
            check_dim(d, p.dim())?;
            p.cholesky()?;
        }
        Ok(PrecisionSet {
            prior_precision,
            individual_precisions,
            kind,
        })
    }

    pub fn dim(&self) -> usize {
        self.prior_precision.dim()
    }

    pub fn n(&self) -> usize {
        self.individual_precisions.len()
    }

    pub fn kind(&self) -> PrecisionKind {
        self.kind
    }

    pub fn prior_precision(&self) -> &SymMatrix {
        &self.prior_precision
    }

    pub fn individual_precisions(&self) -> &[SymMatrix] {
        &self.individual_precisions
    }

    /// `Σ_j P_j − (n − 1) P_λ`, i.e. `Λ` without the diffusion shift.
    fn undiffused_lambda(&self) -> SymMatrix {
        let n = self.n() as f64;
        let mut acc = self.prior_precision.scale(-(n - 1.0));
        for p in &self.individual_precisions {
            acc = acc.add(p).expect("dimensions checked at construction");
        }
        acc
    }
}

#[inline]
fn shift(alpha_t: f64) -> f64 {
    alpha_t / (1.0 - alpha_t)
}

/// `prec + α/(1 − α) · I`, the precision after diffusing to level `α`.
pub fn diffuse_precision(prec: &SymMatrix, alpha_t: f64) -> Result<SymMatrix> {
    if !(alpha_t > 0.0 && alpha_t < 1.0) {
        return Err(Error::InvalidAlpha(alpha_t));
    }
    Ok(prec.shift_diagonal(shift(alpha_t)))
}

fn check_invertible(values: &[f64]) -> Result<()> {
    let norm = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min_abs = values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min_abs == 0.0 || !(min_abs >= LAMBDA_REL_TOL * norm) {
        return Err(Error::SingularLambda {
            min_abs_eigenvalue: min_abs,
            norm,
        });
    }
    Ok(())
}

/// `Λ = Σ_j Σ⁻¹_{t,j} − (n − 1) Σ⁻¹_{t,λ}` at diffusion level `alpha_t`.
pub fn lambda_matrix(prec_set: &PrecisionSet, alpha_t: f64) -> Result<SymMatrix> {
    if !(alpha_t > 0.0 && alpha_t < 1.0) {
        return Err(Error::InvalidAlpha(alpha_t));
    }
    let lambda = prec_set.undiffused_lambda().shift_diagonal(shift(alpha_t));
    check_invertible(&lambda.eigen().values)?;
    Ok(lambda)
}

/// Score field of the form
/// `Λ⁻¹ (Σ_j Σ⁻¹_{t,j} s_j(θ, t) − (n − 1) Σ⁻¹_{t,λ} s_λ(θ, t))`.
pub struct ComposedScore {
    schedule: DiffusionSchedule,
    precisions: PrecisionSet,
    individual: Vec<SharedScore>,
    prior_score: SharedScore,
    lambda0: SymEigen,
}

impl ComposedScore {
    fn build(
        individual: Vec<SharedScore>,
        prior_score: SharedScore,
        precisions: PrecisionSet,
        schedule: DiffusionSchedule,
    ) -> Result<Self> {
        schedule.validate()?;
        let d = precisions.dim();
        if individual.len() != precisions.n() {
            return Err(Error::DimensionMismatch {
                expected: precisions.n(),
                found: individual.len(),
            });
        }
        check_dim(d, prior_score.dim())?;
        for s in &individual {
            check_dim(d, s.dim())?;
        }
        let lambda0 = precisions.undiffused_lambda().eigen();
        let out = ComposedScore {
            schedule,
            precisions,
            individual,
            prior_score,
            lambda0,
        };
        out.validate_over_schedule()?;
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.individual.len()
    }

    pub fn schedule(&self) -> &DiffusionSchedule {
        &self.schedule
    }

    pub fn precisions(&self) -> &PrecisionSet {
        &self.precisions
    }

    /// `c(t)` is monotone, so `Λ` stays invertible on `[t_clamp, 1]` exactly
    /// when no eigenvalue of `Λ₀ + c I` changes sign between the endpoints
    /// and the relative tolerance holds on the grid.
    fn validate_over_schedule(&self) -> Result<()> {
        let lo = shift(self.schedule.alpha(1.0));
        let hi = shift(self.schedule.alpha(self.schedule.t_clamp));
        for v in &self.lambda0.values {
            let (a, b) = (v + lo, v + hi);
            if !(a * b > 0.0) {
                let norm = self.lambda0.values.iter().fold(0.0_f64, |m, w| m.max((w + hi).abs()));
                return Err(Error::SingularLambda {
                    min_abs_eigenvalue: 0.0,
                    norm,
                });
            }
        }
        for t in self.schedule.time_grid() {
            self.lambda_eigenvalues(t)?;
        }
        Ok(())
    }

    fn lambda_eigenvalues(&self, t: f64) -> Result<Vec<f64>> {
        let c = shift(self.schedule.alpha_at(t)?);
        let values: Vec<f64> = self.lambda0.values.iter().map(|v| v + c).collect();
        check_invertible(&values)?;
        Ok(values)
    }

    /// `Λ` (or `Λ̃`) at time `t`.
    pub fn lambda_at(&self, t: f64) -> Result<SymMatrix> {
        let values = self.lambda_eigenvalues(t)?;
        Ok(SymEigen {
            values,
            vectors: self.lambda0.vectors.clone(),
        }
        .reconstruct(|v| v))
    }

    pub fn lambda_inverse_at(&self, t: f64) -> Result<SymMatrix> {
        let values = self.lambda_eigenvalues(t)?;
        Ok(SymEigen {
            values,
            vectors: self.lambda0.vectors.clone(),
        }
        .reconstruct(|v| 1.0 / v))
    }

    /// Fallible evaluation: rejects times outside the schedule and singular `Λ`.
    pub fn try_evaluate(&self, theta: &[f64], t: f64) -> Result<Vec<f64>> {
        check_dim(self.dim(), theta.len())?;
        let inv = self.lambda_inverse_at(t)?;
        let mut out = vec![0.0; self.dim()];
        self.combine_batch(theta, t, &inv, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteScore { t });
        }
        Ok(out)
    }

    /// Combines component scores for `k` points given a precomputed `Λ⁻¹`.
    fn combine_batch(&self, thetas: &[f64], t: f64, lambda_inv: &SymMatrix, out: &mut [f64]) {
        let d = self.dim();
        let c = shift(self.schedule.alpha(t));
        let nm1 = (self.n() - 1) as f64;
        let mut comp = vec![0.0; thetas.len()];
        let mut acc = vec![0.0; thetas.len()];
        let mut tmp = vec![0.0; d];

        // Prior term: −(n − 1)(P_λ + cI) s_λ.
        if self.n() > 1 {
            self.prior_score.evaluate_batch(thetas, t, &mut comp);
            let p = self.precisions.prior_precision();
            for (a, s) in acc.chunks_exact_mut(d).zip(comp.chunks_exact(d)) {
                p.mul_vec_into(s, &mut tmp);
                for ((ai, ti), si) in a.iter_mut().zip(&tmp).zip(s) {
                    *ai -= nm1 * (ti + c * si);
                }
            }
        }
        for (field, p) in self
            .individual
            .iter()
            .zip(self.precisions.individual_precisions())
        {
            field.evaluate_batch(thetas, t, &mut comp);
            for (a, s) in acc.chunks_exact_mut(d).zip(comp.chunks_exact(d)) {
                p.mul_vec_into(s, &mut tmp);
                for ((ai, ti), si) in a.iter_mut().zip(&tmp).zip(s) {
                    *ai += ti + c * si;
                }
            }
        }
        for (o, a) in out.chunks_exact_mut(d).zip(acc.chunks_exact(d)) {
            lambda_inv.mul_vec_into(a, o);
        }
    }
}

impl ScoreField for ComposedScore {
    fn dim(&self) -> usize {
        self.precisions.dim()
    }

    /// Infallible form; yields NaN where `Λ` is singular or `t` is off-range,
    /// which the sampler reports as a non-finite score.
    fn evaluate_into(&self, theta: &[f64], t: f64, out: &mut [f64]) {
        self.evaluate_batch(theta, t, out)
    }

    fn evaluate_batch(&self, thetas: &[f64], t: f64, out: &mut [f64]) {
        match self.lambda_inverse_at(t) {
            Ok(inv) => self.combine_batch(thetas, t, &inv, out),
            Err(_) => out.iter_mut().for_each(|o| *o = f64::NAN),
        }
    }
}

/// Exact compositional score of the Gaussian model: analytic individual and
/// prior scores with exact precisions.
pub fn compose_true(
    model: &GaussianLinearModel,
    xs: &[Vec<f64>],
    schedule: &DiffusionSchedule,
) -> Result<ComposedScore> {
    if xs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let post_precision = model.posterior_precision(1);
    let mut scores: Vec<SharedScore> = Vec::with_capacity(xs.len());
    for x in xs {
        scores.push(AnalyticScore::shared(model.posterior(x)?, *schedule));
    }
    let prec = PrecisionSet::new(
        model.prior_precision().clone(),
        vec![post_precision; xs.len()],
        PrecisionKind::Exact,
    )?;
    ComposedScore::build(
        scores,
        AnalyticScore::shared(model.prior().clone(), *schedule),
        prec,
        *schedule,
    )
}

/// Estimator built from approximate individual scores and precisions.
pub fn compose_estimate(
    individual_scores: Vec<SharedScore>,
    prior_score: SharedScore,
    prec_set: PrecisionSet,
    schedule: &DiffusionSchedule,
) -> Result<ComposedScore> {
    ComposedScore::build(individual_scores, prior_score, prec_set, *schedule)
}

/// Analytic score of the diffused multi-observation posterior.
pub fn analytic_multi_score(
    model: &GaussianLinearModel,
    xs: &[Vec<f64>],
    schedule: &DiffusionSchedule,
) -> Result<AnalyticScore> {
    Ok(AnalyticScore::new(model.posterior_multi(xs)?, *schedule))
}

/// Shares a composed score as a plain field.
pub fn into_shared(score: ComposedScore) -> SharedScore {
    Arc::new(score)
}
