use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionSchedule, PerturbationMode};
use crate::error::{Error, Result};
use crate::gaussmodel::{Gaussian, GaussianLinearModel};
use crate::matkernel::SymMatrix;
use crate::rng::derive_seed;

/// Seed streams derived from the master seed. Each consumer draws from its
/// own stream so that changing one sweep never shifts another's numbers.
pub(crate) mod stream {
    pub const TRUE_THETA: u64 = 1;
    pub const OBSERVATIONS: u64 = 2;
    pub const PRECISION: u64 = 3;
    pub const MONTE_CARLO: u64 = 4;
    pub const PANEL_A_DIRECTION: u64 = 5;
    pub const SCORE: u64 = 6;
    pub const FIGURE: u64 = 7;
    pub const CHECKS: u64 = 8;
}

/// Where the estimated precisions of panels B and C come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrecisionSource {
    /// Empirical covariance of backward-diffusion samples.
    #[default]
    Diffusion,
    /// Empirical covariance of exact posterior draws.
    DirectPosterior,
    /// No estimation error.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "panel", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SweepSpec {
    PanelA { eps: Vec<f64> },
    PanelB { n: Vec<usize>, eps_dsm_sq: f64 },
    PanelC { eps_dsm_sq: Vec<f64>, n: usize },
}

impl SweepSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SweepSpec::PanelA { .. } => "panel-a",
            SweepSpec::PanelB { .. } => "panel-b",
            SweepSpec::PanelC { .. } => "panel-c",
        }
    }

    pub fn default_panel_a() -> Self {
        SweepSpec::PanelA {
            eps: vec![0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0],
        }
    }

    pub fn default_panel_b() -> Self {
        SweepSpec::PanelB {
            n: vec![1, 2, 5, 10, 20, 30, 40, 50],
            eps_dsm_sq: 0.01,
        }
    }

    pub fn default_panel_c(n: usize) -> Self {
        SweepSpec::PanelC {
            eps_dsm_sq: vec![0.0, 0.01, 0.05, 0.1, 0.2],
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure1Config {
    pub eps_dsm_sq: f64,
    pub samples: usize,
    pub grid_resolution: usize,
    pub grid_half_width: f64,
}

impl Default for Figure1Config {
    fn default() -> Self {
        Figure1Config {
            eps_dsm_sq: 0.01,
            samples: 10_000,
            grid_resolution: 100,
            grid_half_width: 3.0,
        }
    }
}

/// Every field is optional in JSON; missing ones take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub prior_mean: Vec<f64>,
    pub prior_cov: Vec<Vec<f64>>,
    pub likelihood_cov: Vec<Vec<f64>>,
    /// Drawn from the prior at the master seed when absent.
    pub true_theta: Option<Vec<f64>>,
    pub n_obs: usize,
    pub seed: u64,
    pub mc_samples: usize,
    pub cov_samples: usize,
    pub schedule: DiffusionSchedule,
    pub time_grid: Vec<f64>,
    pub sweep: Option<SweepSpec>,
    pub perturbation: PerturbationMode,
    pub precision_source: PrecisionSource,
    pub figure1: Figure1Config,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dim: 2,
            prior_mean: vec![0.0, 0.0],
            prior_cov: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            likelihood_cov: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            true_theta: None,
            n_obs: 10,
            seed: 0,
            mc_samples: 10_000,
            cov_samples: 10_000,
            schedule: DiffusionSchedule::default(),
            time_grid: vec![0.25, 0.5, 0.75],
            sweep: None,
            perturbation: PerturbationMode::FixedBias,
            precision_source: PrecisionSource::Diffusion,
            figure1: Figure1Config::default(),
        }
    }
}

fn matrix(name: &str, rows: &[Vec<f64>], dim: usize) -> Result<SymMatrix> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Config(format!("{name} must be a {dim}x{dim} nested array")));
    }
    let m = SymMatrix::from_rows(rows)?;
    let asym = rows
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, v)| (v - rows[j][i]).abs()))
        .fold(0.0_f64, f64::max);
    if asym > 1e-12 * (1.0 + m.spectral_norm()) {
        return Err(Error::Config(format!("{name} is not symmetric")));
    }
    m.cholesky()
        .map_err(|_| Error::Config(format!("{name} is not positive definite")))?;
    Ok(m)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        if d == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        if self.prior_mean.len() != d {
            return Err(Error::Config(format!("prior_mean must have length {d}")));
        }
        matrix("prior_cov", &self.prior_cov, d)?;
        matrix("likelihood_cov", &self.likelihood_cov, d)?;
        if let Some(t) = &self.true_theta {
            if t.len() != d {
                return Err(Error::Config(format!("true_theta must have length {d}")));
            }
        }
        let finite = self
            .prior_mean
            .iter()
            .chain(self.true_theta.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("vectors must be finite".into()));
        }
        if self.n_obs == 0 || self.mc_samples == 0 {
            return Err(Error::Config("n_obs and mc_samples must be positive".into()));
        }
        if self.cov_samples <= d {
            return Err(Error::Config(format!("cov_samples must exceed dim ({d})")));
        }
        self.schedule
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.time_grid.is_empty() {
            return Err(Error::Config("time_grid must not be empty".into()));
        }
        for t in &self.time_grid {
            if !(*t >= self.schedule.t_clamp && *t < 1.0) {
                return Err(Error::Config(format!(
                    "time {t} outside [t_clamp, 1)"
                )));
            }
        }
        let bad_level = |e: &f64| !(e.is_finite() && *e >= 0.0);
        match &self.sweep {
            Some(SweepSpec::PanelA { eps }) if eps.is_empty() || eps.iter().any(bad_level) => {
                return Err(Error::Config("panel-a eps must be nonnegative".into()));
            }
            Some(SweepSpec::PanelB { n, eps_dsm_sq }) if n.is_empty() || n.contains(&0) || bad_level(eps_dsm_sq) => {
                return Err(Error::Config("panel-b needs positive n and eps_dsm_sq >= 0".into()));
            }
            Some(SweepSpec::PanelC { eps_dsm_sq, n }) if *n == 0 || eps_dsm_sq.is_empty() || eps_dsm_sq.iter().any(bad_level) => {
                return Err(Error::Config("panel-c needs n > 0 and eps_dsm_sq >= 0".into()));
            }
            _ => {}
        }
        let f = &self.figure1;
        if f.samples <= d || f.grid_resolution < 2 || !(f.grid_half_width > 0.0) || !(f.eps_dsm_sq >= 0.0) {
            return Err(Error::Config("invalid figure1 section".into()));
        }
        Ok(())
    }

    /// The sweep to run for `wanted` (`panel-a`, `panel-b`, `panel-c`). A
    /// configured sweep for a different panel is a configuration error.
    pub fn sweep_for(&self, wanted: &str) -> Result<SweepSpec> {
        match &self.sweep {
            Some(s) if s.name() == wanted => Ok(s.clone()),
            Some(s) => Err(Error::Config(format!(
                "config holds a {} sweep but {wanted} was requested",
                s.name()
            ))),
            None => match wanted {
                "panel-a" => Ok(SweepSpec::default_panel_a()),
                "panel-b" => Ok(SweepSpec::default_panel_b()),
                "panel-c" => Ok(SweepSpec::default_panel_c(self.n_obs)),
                other => Err(Error::Config(format!("unknown sweep {other}"))),
            },
        }
    }

    pub fn model(&self) -> Result<GaussianLinearModel> {
        let prior = Gaussian::new(
            self.prior_mean.clone(),
            matrix("prior_cov", &self.prior_cov, self.dim)?,
        )?;
        GaussianLinearModel::new(prior, matrix("likelihood_cov", &self.likelihood_cov, self.dim)?)
    }

    pub fn true_theta(&self) -> Result<Vec<f64>> {
        match &self.true_theta {
            Some(t) => Ok(t.clone()),
            None => Ok(self
                .model()?
                .prior()
                .sample(derive_seed(self.seed, stream::TRUE_THETA), 1)
                .remove(0)),
        }
    }

    /// `n` observations; a shorter request is a prefix of a longer one.
    pub fn observations(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        self.model()?.simulate(
            &self.true_theta()?,
            n,
            derive_seed(self.seed, stream::OBSERVATIONS),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), cfg);
    }

    #[test]
    fn partial_config_and_sweep() {
        let cfg = ExperimentConfig::from_json(
            r#"{"seed": 7, "sweep": {"panel": "panel-b", "n": [1, 3], "eps_dsm_sq": 0.04}}"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(
            cfg.sweep_for("panel-b").unwrap(),
            SweepSpec::PanelB { n: vec![1, 3], eps_dsm_sq: 0.04 }
        );
        assert!(matches!(cfg.sweep_for("panel-a"), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for bad in [
            r#"{"dim": 3}"#,
            r#"{"prior_cov": [[1, 2], [2, 1]]}"#,
            r#"{"likelihood_cov": [[1, 0.5], [0, 1]]}"#,
            r#"{"time_grid": [0.0]}"#,
            r#"{"cov_samples": 2}"#,
            r#"{"unknown_key": 1}"#,
            r#"{"sweep": {"panel": "panel-c", "eps_dsm_sq": [], "n": 3}}"#,
            "not json",
        ] {
            assert!(matches!(ExperimentConfig::from_json(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn observations_are_prefix_consistent() {
        let cfg = ExperimentConfig::default();
        let long = cfg.observations(20).unwrap();
        assert_eq!(cfg.observations(5).unwrap(), long[..5].to_vec());
        let theta = cfg.true_theta().unwrap();
        assert_eq!(theta, cfg.true_theta().unwrap());
        let other = ExperimentConfig { seed: 1, ..ExperimentConfig::default() };
        assert_ne!(theta, other.true_theta().unwrap());
    }
}
