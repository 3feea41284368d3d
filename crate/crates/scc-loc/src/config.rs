//! Run configuration. Every section defaults to the reference hyperparameters;
//! unknown keys are rejected so typos cannot silently fall back to defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use scc_loc_core::cdraps::{ErrMetric, OptimConfig};
use scc_loc_core::csatsf::FilterConfig;
use scc_loc_core::retrieval::RetrievalConfig;
use scc_loc_core::sgva::SgvaConfig;

pub const SEED_ENV: &str = "SCC_LOC_SEED";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{SEED_ENV} is not an unsigned integer: {0:?}")]
    BadSeed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalSection {
    pub psi: f64,
    pub eps_min: f64,
    pub search_area: f64,
    pub overlap: f64,
    pub gsd_scale: f64,
    pub top_n: usize,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        let c = RetrievalConfig::default();
        Self {
            psi: c.psi,
            eps_min: c.eps_min,
            search_area: c.search_area,
            overlap: c.overlap,
            gsd_scale: c.gsd_scale,
            top_n: c.top_n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgvaSection {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for SgvaSection {
    fn default() -> Self {
        let c = SgvaConfig::default();
        Self {
            lambda: c.lambda,
            alpha: c.alpha,
            beta: c.beta,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    pub grid: usize,
    pub q_base: usize,
    pub q_max: usize,
    pub gamma: f64,
    pub window: usize,
    pub eps_topo: f64,
    pub eps_ang_deg: f64,
    pub eps_scale: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        let c = FilterConfig::default();
        Self {
            grid: c.grid_g,
            q_base: c.q_base,
            q_max: c.q_max,
            gamma: c.gamma,
            window: c.window,
            eps_topo: c.eps_topo,
            eps_ang_deg: c.eps_ang.to_degrees(),
            eps_scale: c.eps_scale,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrMetricName {
    #[default]
    ReprojRms,
    Objective,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimSection {
    pub lambda_roll: f64,
    pub lambda_pitch: f64,
    pub ransac_iters: usize,
    pub ransac_thresh_px: f64,
    pub ransac_confidence: f64,
    pub lm_max_iters: usize,
    pub lm_tol: f64,
    pub min_inliers: usize,
    pub weights: [f64; 4],
    pub d_max: f64,
    pub tau: f64,
    pub omega_geo: f64,
    pub omega_base: f64,
    pub max_condition: f64,
    pub err_metric: ErrMetricName,
}

impl Default for OptimSection {
    fn default() -> Self {
        let c = OptimConfig::default();
        Self {
            lambda_roll: c.lambda_roll,
            lambda_pitch: c.lambda_pitch,
            ransac_iters: c.ransac_iters,
            ransac_thresh_px: c.ransac_thresh_px,
            ransac_confidence: c.ransac_confidence,
            lm_max_iters: c.lm_max_iters,
            lm_tol: c.lm_tol,
            min_inliers: c.min_inliers,
            weights: c.weights,
            d_max: c.d_max,
            tau: c.tau,
            omega_geo: c.omega_geo,
            omega_base: c.omega_base,
            max_condition: c.max_condition,
            err_metric: ErrMetricName::ReprojRms,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    /// Dataset directory holding `dataset.json`; relative paths resolve
    /// against the config file's directory.
    pub dataset: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    /// Substitute the largest possible in-area error for failed queries.
    pub penalize_failures: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub retrieval: RetrievalSection,
    pub sgva: SgvaSection,
    pub filter: FilterSection,
    pub optim: OptimSection,
    pub paths: PathsSection,
    pub run: RunSection,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(ds), Some(dir)) = (cfg.paths.dataset.as_mut(), path.parent()) {
            if ds.is_relative() {
                *ds = dir.join(&*ds);
            }
        }
        Ok(cfg)
    }

    /// Applies `SCC_LOC_SEED` when set.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        self.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())
    }

    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<(), ConfigError> {
        if let Some(v) = value {
            self.run.seed = v
                .trim()
                .parse()
                .map_err(|_| ConfigError::BadSeed(v.to_string()))?;
        }
        Ok(())
    }

    pub fn retrieval(&self) -> RetrievalConfig {
        let r = &self.retrieval;
        RetrievalConfig {
            psi: r.psi,
            eps_min: r.eps_min,
            search_area: r.search_area,
            overlap: r.overlap,
            gsd_scale: r.gsd_scale,
            top_n: r.top_n,
        }
    }

    pub fn sgva(&self) -> SgvaConfig {
        SgvaConfig {
            lambda: self.sgva.lambda,
            alpha: self.sgva.alpha,
            beta: self.sgva.beta,
        }
    }

    pub fn filter(&self) -> FilterConfig {
        let f = &self.filter;
        FilterConfig {
            grid_g: f.grid,
            q_base: f.q_base,
            q_max: f.q_max,
            gamma: f.gamma,
            window: f.window,
            eps_topo: f.eps_topo,
            eps_ang: f.eps_ang_deg.to_radians(),
            eps_scale: f.eps_scale,
        }
    }

    pub fn optim(&self) -> OptimConfig {
        let o = &self.optim;
        OptimConfig {
            lambda_roll: o.lambda_roll,
            lambda_pitch: o.lambda_pitch,
            ransac_iters: o.ransac_iters,
            ransac_thresh_px: o.ransac_thresh_px,
            ransac_confidence: o.ransac_confidence,
            lm_max_iters: o.lm_max_iters,
            lm_tol: o.lm_tol,
            min_inliers: o.min_inliers,
            weights: o.weights,
            d_max: o.d_max,
            tau: o.tau,
            omega_geo: o.omega_geo,
            omega_base: o.omega_base,
            max_condition: o.max_condition,
            seed: self.run.seed,
            err_metric: match o.err_metric {
                ErrMetricName::ReprojRms => ErrMetric::ReprojRms,
                ErrMetricName::Objective => ErrMetric::Objective,
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.retrieval().validate().map_err(|e| inv(&e))?;
        self.filter().validate().map_err(|e| inv(&e))?;
        self.optim().validate().map_err(|e| inv(&e))?;
        let s = &self.sgva;
        if !(s.lambda >= 0.0 && s.alpha >= 0.0 && s.beta >= 0.0) {
            return Err(ConfigError::Invalid(
                "sgva lambda, alpha and beta must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, excluding paths.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = PathsSection::default();
        format!("{:x}", Sha256::digest(c.to_toml().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_reference_defaults() {
        let c = PipelineConfig::from_toml("").unwrap();
        assert_eq!(c.retrieval.psi, 4.0);
        assert_eq!(c.retrieval.overlap, 0.6);
        assert_eq!(c.retrieval.gsd_scale, 1.5);
        assert_eq!((c.sgva.lambda, c.sgva.alpha, c.sgva.beta), (5.0, 0.5, 0.2));
        assert_eq!(
            (c.filter.grid, c.filter.q_base, c.filter.gamma),
            (8, 3, 0.5)
        );
        assert_eq!(
            (c.filter.eps_topo, c.filter.eps_ang_deg, c.filter.eps_scale),
            (0.4, 20.0, 0.3)
        );
        assert_eq!((c.optim.lambda_roll, c.optim.lambda_pitch), (1000.0, 15.0));
        assert_eq!(c.optim.weights, [0.1, 0.2, 0.35, 0.35]);
        assert_eq!(
            (
                c.optim.d_max,
                c.optim.tau,
                c.optim.omega_geo,
                c.optim.omega_base
            ),
            (20.0, 0.3, 0.2, 0.5)
        );
        assert_eq!(c.filter(), FilterConfig::default());
        assert_eq!(c.optim(), OptimConfig::default());
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(matches!(
            PipelineConfig::from_toml("[optim]\nlamda_roll = 5\n"),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(
            PipelineConfig::from_toml("[nope]\n"),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c = PipelineConfig::from_toml("[optim]\nd_max = 30.0\nerr_metric = \"objective\"\n")
            .unwrap();
        assert_eq!(c.optim.d_max, 30.0);
        assert_eq!(c.optim.lambda_roll, 1000.0);
        assert_eq!(c.optim().err_metric, ErrMetric::Objective);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(matches!(
            PipelineConfig::from_toml("[optim]\nweights = [0.5, 0.5, 0.5, 0.5]\n"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            PipelineConfig::from_toml("[retrieval]\noverlap = 1.0\n"),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn round_trip_and_hash() {
        let mut c = PipelineConfig::default();
        let back = PipelineConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        let h = c.hash();
        assert_eq!(h.len(), 64);
        c.paths.dataset = Some("elsewhere".into());
        assert_eq!(c.hash(), h);
        c.run.seed = 7;
        assert_ne!(c.hash(), h);
    }

    #[test]
    fn seed_override() {
        let mut c = PipelineConfig::default();
        c.apply_seed_override(Some(" 42 ")).unwrap();
        assert_eq!(c.run.seed, 42);
        assert_eq!(c.optim().seed, 42);
        assert!(matches!(
            c.apply_seed_override(Some("x")),
            Err(ConfigError::BadSeed(_))
        ));
        c.apply_seed_override(None).unwrap();
        assert_eq!(c.run.seed, 42);
    }
}
