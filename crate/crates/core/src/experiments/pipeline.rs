use crate::compose::{PrecisionKind, PrecisionSet};
use crate::diffusion::{backward_sample, DiffusionSchedule, ScoreField, SharedScore};
use crate::error::{Error, Result};
use crate::gaussmodel::{empirical_gaussian, Gaussian, GaussianLinearModel};
use crate::matkernel::SymMatrix;
use crate::rng::derive_seed;

/// Estimated precisions plus the per-observation spectral errors.
#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    pub set: PrecisionSet,
    pub eps_j: Vec<f64>,
}

impl PrecisionEstimate {
    /// `max_j eps_j`
    pub fn eps(&self) -> f64 {
        self.eps_j.iter().fold(0.0, |m: f64, v| m.max(*v))
    }

    /// Keeps the first `n` observations.
    pub fn prefix(&self, n: usize) -> Result<PrecisionEstimate> {
        Ok(PrecisionEstimate {
            set: PrecisionSet::new(
                self.set.prior_precision().clone(),
                self.set.individual_precisions()[..n].to_vec(),
                self.set.kind(),
            )?,
            eps_j: self.eps_j[..n].to_vec(),
        })
    }
}

fn finish(model: &GaussianLinearModel, fits: Vec<Gaussian>, kind: PrecisionKind) -> Result<PrecisionEstimate> {
    let exact = model.posterior_precision(1);
    let mut precisions = Vec::with_capacity(fits.len());
    let mut eps_j = Vec::with_capacity(fits.len());
    for fit in fits {
        let p = fit.precision();
        eps_j.push(p.sub(&exact)?.spectral_norm());
        precisions.push(p);
    }
    Ok(PrecisionEstimate {
        set: PrecisionSet::new(model.prior_precision().clone(), precisions, kind)?,
        eps_j,
    })
}

/// Precision of each individual posterior from the empirical covariance of
/// `cov_samples` backward-diffusion draws driven by `score_fields[j]`.
/// Observation `j` uses the seed `derive_seed(seed, j)`.
pub fn estimate_precisions(
    model: &GaussianLinearModel,
    xs: &[Vec<f64>],
    schedule: &DiffusionSchedule,
    score_fields: &[SharedScore],
    cov_samples: usize,
    seed: u64,
) -> Result<PrecisionEstimate> {
    if xs.len() != score_fields.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            found: score_fields.len(),
        });
    }
    if xs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let mut fits = Vec::with_capacity(xs.len());
    for (j, field) in score_fields.iter().enumerate() {
        let draws = backward_sample(schedule, field.as_ref(), derive_seed(seed, j as u64), cov_samples)?;
        fits.push(empirical_gaussian(&draws)?);
    }
    finish(model, fits, PrecisionKind::Estimated)
}

/// Same as [`estimate_precisions`] but drawing straight from the true
/// individual posteriors, which isolates covariance-estimation noise.
pub fn estimate_precisions_direct(
    model: &GaussianLinearModel,
    xs: &[Vec<f64>],
    cov_samples: usize,
    seed: u64,
) -> Result<PrecisionEstimate> {
    if xs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let mut fits = Vec::with_capacity(xs.len());
    for (j, x) in xs.iter().enumerate() {
        let draws = model.posterior(x)?.sample(derive_seed(seed, j as u64), cov_samples);
        fits.push(empirical_gaussian(&draws)?);
    }
    finish(model, fits, PrecisionKind::Estimated)
}

/// Exact precisions with zero error.
pub fn exact_precisions(model: &GaussianLinearModel, n: usize) -> Result<PrecisionEstimate> {
    Ok(PrecisionEstimate {
        set: PrecisionSet::new(
            model.prior_precision().clone(),
            vec![model.posterior_precision(1); n],
            PrecisionKind::Exact,
        )?,
        eps_j: vec![0.0; n],
    })
}

/// Adds `eps · v vᵀ` to each precision; the perturbation has spectral norm
/// exactly `eps` and keeps the matrix positive definite.
pub fn perturb_precisions(set: &PrecisionSet, eps: f64, directions: &[Vec<f64>]) -> Result<PrecisionSet> {
    let perturbed = set
        .individual_precisions()
        .iter()
        .zip(directions)
        .map(|(p, v)| p.add(&SymMatrix::outer(v).scale(eps)))
        .collect::<Result<Vec<_>>>()?;
    PrecisionSet::new(set.prior_precision().clone(), perturbed, PrecisionKind::Estimated)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseEstimate {
    pub mean: f64,
    pub std_err: f64,
}

/// Fixed Monte Carlo draws from a target with the reference score already
/// evaluated, so several estimates can be compared on common points.
pub struct MseProbe {
    dim: usize,
    t: f64,
    points: Vec<f64>,
    reference: Vec<f64>,
}

impl MseProbe {
    pub fn new(reference: &dyn ScoreField, target: &Gaussian, t: f64, mc_samples: usize, seed: u64) -> Result<Self> {
        if mc_samples == 0 {
            return Err(Error::TooFewSamples { needed: 1, found: 0 });
        }
        let d = target.dim();
        let points: Vec<f64> = target.sample(seed, mc_samples).into_iter().flatten().collect();
        let mut values = vec![0.0; points.len()];
        reference.evaluate_batch(&points, t, &mut values);
        Ok(MseProbe {
            dim: d,
            t,
            points,
            reference: values,
        })
    }

    pub fn mse(&self, estimate: &dyn ScoreField) -> MseEstimate {
        let d = self.dim;
        let mut values = vec![0.0; self.points.len()];
        estimate.evaluate_batch(&self.points, self.t, &mut values);
        let sq: Vec<f64> = values
            .chunks_exact(d)
            .zip(self.reference.chunks_exact(d))
            .map(|(e, r)| e.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect();
        mean_and_se(&sq)
    }
}

pub(crate) fn mean_and_se(values: &[f64]) -> MseEstimate {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    MseEstimate {
        mean,
        std_err: (var / k).sqrt(),
    }
}

/// Monte Carlo estimate of `E‖reference − estimate‖²` with θ drawn from the
/// diffused multi-observation posterior at time `t`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_mse(
    reference: &dyn ScoreField,
    estimate: &dyn ScoreField,
    model: &GaussianLinearModel,
    xs: &[Vec<f64>],
    schedule: &DiffusionSchedule,
    t: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<MseEstimate> {
    let target = model.posterior_multi(xs)?.diffused(schedule.alpha_at(t)?)?;
    Ok(MseProbe::new(reference, &target, t, mc_samples, seed)?.mse(estimate))
}
