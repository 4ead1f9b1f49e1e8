use std::fmt::Write as _;
use std::path::Path;

use super::config::{stream, ExperimentConfig};
use super::pipeline::estimate_precisions;
use crate::compose::compose_estimate;
use crate::diffusion::{backward_sample, perturbed_score, AnalyticScore, SharedScore};
use crate::error::{Error, Result};
use crate::gaussmodel::Gaussian;
use crate::rng::{derive_path, derive_seed};

/// Observation count of the second sample cloud.
pub const FIGURE1_N_LARGE: usize = 11;

pub struct Figure1Data {
    pub samples_n1: Vec<Vec<f64>>,
    pub samples_n11: Vec<Vec<f64>>,
    /// `(θ₁, θ₂, log p(θ|x₁), log p(θ|x_{1:11}))`, θ₁ varying fastest.
    pub grid: Vec<[f64; 4]>,
    pub posterior_n1: Gaussian,
    pub posterior_n11: Gaussian,
}

/// Sample clouds for one and eleven observations under inexact scores, and
/// the true posterior log-densities on a square grid.
pub fn run_figure1(config: &ExperimentConfig) -> Result<Figure1Data> {
    config.validate()?;
    if config.dim != 2 {
        return Err(Error::RequiresDim2(config.dim));
    }
    let fig = &config.figure1;
    let schedule = config.schedule;
    let model = config.model()?;
    let xs = config.observations(FIGURE1_N_LARGE)?;
    let eps_dsm = fig.eps_dsm_sq.sqrt();

    let scores: Vec<SharedScore> = xs
        .iter()
        .enumerate()
        .map(|(j, x)| {
            Ok(perturbed_score(
                AnalyticScore::shared(model.posterior(x)?, schedule),
                eps_dsm,
                config.perturbation,
                derive_path(config.seed, &[stream::SCORE, j as u64]),
            ))
        })
        .collect::<Result<_>>()?;

    let samples_n1 = backward_sample(
        &schedule,
        scores[0].as_ref(),
        derive_path(config.seed, &[stream::FIGURE, 1]),
        fig.samples,
    )?;

    let est = estimate_precisions(
        &model,
        &xs,
        &schedule,
        &scores,
        config.cov_samples,
        derive_seed(config.seed, stream::PRECISION),
    )?;
    let composed = compose_estimate(
        scores,
        AnalyticScore::shared(model.prior().clone(), schedule),
        est.set,
        &schedule,
    )?;
    let samples_n11 = backward_sample(
        &schedule,
        &composed,
        derive_path(config.seed, &[stream::FIGURE, FIGURE1_N_LARGE as u64]),
        fig.samples,
    )?;

    let posterior_n1 = model.posterior(&xs[0])?;
    let posterior_n11 = model.posterior_multi(&xs)?;
    let center: Vec<f64> = posterior_n1
        .mean()
        .iter()
        .zip(posterior_n11.mean())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let r = fig.grid_resolution;
    let step = 2.0 * fig.grid_half_width / (r - 1) as f64;
    let mut grid = Vec::with_capacity(r * r);
    for i2 in 0..r {
        for i1 in 0..r {
            let th = [
                center[0] - fig.grid_half_width + i1 as f64 * step,
                center[1] - fig.grid_half_width + i2 as f64 * step,
            ];
            grid.push([th[0], th[1], posterior_n1.log_density(&th)?, posterior_n11.log_density(&th)?]);
        }
    }
    Ok(Figure1Data {
        samples_n1,
        samples_n11,
        grid,
        posterior_n1,
        posterior_n11,
    })
}

fn write_rows<const K: usize>(path: &Path, header: &str, rows: impl Iterator<Item = [f64; K]>) -> Result<()> {
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for row in rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v:.16e}").unwrap();
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

impl Figure1Data {
    /// Writes `samples_n1.csv`, `samples_n11.csv` and `grid.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let pairs = |s: &[Vec<f64>]| s.iter().map(|v| [v[0], v[1]]).collect::<Vec<_>>();
        write_rows(&dir.join("samples_n1.csv"), "theta1,theta2", pairs(&self.samples_n1).into_iter())?;
        write_rows(&dir.join("samples_n11.csv"), "theta1,theta2", pairs(&self.samples_n11).into_iter())?;
        write_rows(
            &dir.join("grid.csv"),
            "theta1,theta2,log_density_n1,log_density_n11",
            self.grid.iter().copied(),
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::DiffusionSchedule;
    use crate::gaussmodel::{empirical_gaussian, gaussian_w2};

    #[test]
    fn requires_two_dimensions() {
        let cfg = ExperimentConfig {
            dim: 1,
            prior_mean: vec![0.0],
            prior_cov: vec![vec![1.0]],
            likelihood_cov: vec![vec![1.0]],
            ..ExperimentConfig::default()
        };
        assert!(matches!(run_figure1(&cfg), Err(Error::RequiresDim2(1))));
    }

    #[test]
    fn exact_scores_reproduce_posteriors() {
        let mut cfg = ExperimentConfig::default();
        cfg.figure1.eps_dsm_sq = 0.0;
        cfg.figure1.grid_resolution = 7;
        let data = run_figure1(&cfg).unwrap();
        assert_eq!(data.grid.len(), 49);
        assert!(data.posterior_n11.cov().trace() < data.posterior_n1.cov().trace());
        for (samples, truth) in [(&data.samples_n1, &data.posterior_n1), (&data.samples_n11, &data.posterior_n11)] {
            let w2 = gaussian_w2(&empirical_gaussian(samples).unwrap(), truth).unwrap();
            assert!(w2 <= 0.05, "{w2}");
        }
        let dir = tempfile::tempdir().unwrap();
        data.write_dir(dir.path()).unwrap();
        let grid = std::fs::read_to_string(dir.path().join("grid.csv")).unwrap();
        assert_eq!(grid.lines().count(), 50);
        assert!(grid.starts_with("theta1,theta2,log_density_n1,log_density_n11\n"));
        let s = std::fs::read_to_string(dir.path().join("samples_n11.csv")).unwrap();
        assert_eq!(s.lines().count(), cfg.figure1.samples + 1);
    }

    #[test]
    fn score_error_shifts_the_cloud() {
        let mut cfg = ExperimentConfig {
            schedule: DiffusionSchedule { steps: 200, ..DiffusionSchedule::default() },
            cov_samples: 2000,
            ..ExperimentConfig::default()
        };
        cfg.figure1.samples = 2000;
        cfg.figure1.grid_resolution = 2;
        cfg.figure1.eps_dsm_sq = 0.0;
        let exact = run_figure1(&cfg).unwrap();
        cfg.figure1.eps_dsm_sq = 0.25;
        let biased = run_figure1(&cfg).unwrap();
        let mean = |s: &[Vec<f64>]| s.iter().map(|v| v[0]).sum::<f64>() / s.len() as f64;
        assert!((mean(&biased.samples_n1) - mean(&exact.samples_n1)).abs() > 0.1);
    }
}
