//! TOML experiment configuration.
//!
//! ```toml
//! [model]
//! kind = "burgers"          # or "nse"
//! nu = 0.1
//! modes = 64                # D for burgers, kmax for nse
//! forcing = [[1, 1.0], [2, 0.5]]   # burgers: (mode, amplitude of sin(jx))
//! # forcing_shell = 4       # nse: Kolmogorov wavenumber
//! # forcing_amplitude = 1.0
//! # resolution = 128        # default: next power of two above the alias-free minimum
//!
//! [integrator]
//! dt = 2e-3
//! scheme = "exponential_rk4"   # or "imex_cnab2"
//! t_transient = 1.0
//! t_sample = 6.0
//! sample_stride = 20
//! seed = 1
//!
//! [analysis]
//! m_factor = 4.0            # M = m_factor · sup norm unless m0 / m1 given
//! cutoffs = [4, 6, 8, 12, 16, 24]
//! embed_dims = [8, 16, 32]
//! embed_seeds = 10
//! ```
//!
//! Every key is optional; unknown keys are rejected.

use std::path::Path;

use serde::Deserialize;

use crate::embedding::dyadic_grid;
use crate::error::{LabError, Result};
use crate::integrator::{IntegratorConfig, PerturbationPlan, Scheme};
use crate::manifold::ExtensionRule;
use crate::models::{self, ModelConfig, ModelId};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    integrator: RawIntegrator,
    #[serde(default)]
    analysis: RawAnalysis,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: Option<ModelId>,
    nu: Option<f64>,
    modes: Option<usize>,
    forcing: Option<Vec<(usize, f64)>>,
    forcing_shell: Option<usize>,
    forcing_amplitude: Option<f64>,
    resolution: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    dt: Option<f64>,
    scheme: Option<Scheme>,
    t_transient: Option<f64>,
    t_sample: Option<f64>,
    sample_stride: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    m_factor: Option<f64>,
    m0: Option<f64>,
    m1: Option<f64>,
    alpha: Option<f64>,
    perturbations: Option<usize>,
    perturbation_amplitude: Option<f64>,
    perturbation_horizons: Option<Vec<f64>>,
    perturbation_seed: Option<u64>,
    cutoffs: Option<Vec<usize>>,
    extension_rule: Option<ExtensionRuleName>,
    embed_dims: Option<Vec<usize>>,
    embed_seeds: Option<u64>,
    embed_seed_base: Option<u64>,
    box_eps_coarse: Option<f64>,
    box_scales: Option<usize>,
    box_coords: Option<usize>,
    deviation_m: Option<f64>,
    deviation_eps: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ExtensionRuleName {
    NearestAnchor,
    McshaneCoordinatewise,
}

/// Analysis settings shared by the report subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    /// `M₀ = m_factor · sup‖u‖`, `M₁ = m_factor · sup‖A^{1/2}u‖` unless overridden
    pub m_factor: f64,
    pub m0: Option<f64>,
    pub m1: Option<f64>,
    /// power in the field log-Lipschitz estimate
    pub alpha: f64,
    pub perturbation: PerturbationPlan,
    pub cutoffs: Vec<usize>,
    pub extension_rule: ExtensionRule,
    pub embed_dims: Vec<usize>,
    pub embed_seeds: u64,
    pub embed_seed_base: u64,
    /// box-counting grid `box_eps_coarse · 2^{-k}`, relative to the sample diameter
    pub box_eps_coarse: f64,
    pub box_scales: usize,
    pub box_coords: usize,
    pub deviation_m: f64,
    /// deviation grid, relative to the sample diameter
    pub deviation_eps: Vec<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            m_factor: 4.0,
            m0: None,
            m1: None,
            alpha: 0.5,
            perturbation: PerturbationPlan::default(),
            cutoffs: vec![4, 6, 8, 12, 16, 24],
            extension_rule: ExtensionRule::NearestAnchor,
            embed_dims: vec![8, 16, 32],
            embed_seeds: 10,
            embed_seed_base: 1000,
            box_eps_coarse: 0.5,
            box_scales: 10,
            box_coords: crate::embedding::DEFAULT_BOX_COORDS,
            deviation_m: 1.0,
            deviation_eps: dyadic_grid(0.5, 16),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub integrator: IntegratorConfig,
    pub analysis: AnalysisConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::burgers_default(),
            integrator: IntegratorConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| LabError::Config(e.message().to_string()))?;
        let model = build_model(&raw.model)?;

        let d = IntegratorConfig::default();
        let ri = &raw.integrator;
        let integrator = IntegratorConfig {
            dt: ri.dt.unwrap_or(d.dt),
            scheme: ri.scheme.unwrap_or(d.scheme),
            t_transient: ri.t_transient.unwrap_or(d.t_transient),
            t_sample: ri.t_sample.unwrap_or(d.t_sample),
            sample_stride: ri.sample_stride.unwrap_or(d.sample_stride),
            seed: ri.seed.unwrap_or(d.seed),
        };
        integrator.validate()?;

        let a = AnalysisConfig::default();
        let ra = raw.analysis;
        let analysis = AnalysisConfig {
            m_factor: ra.m_factor.unwrap_or(a.m_factor),
            m0: ra.m0,
            m1: ra.m1,
            alpha: ra.alpha.unwrap_or(a.alpha),
            perturbation: PerturbationPlan {
                count: ra.perturbations.unwrap_or(a.perturbation.count),
                relative_amplitude: ra.perturbation_amplitude.unwrap_or(a.perturbation.relative_amplitude),
                horizons: ra.perturbation_horizons.unwrap_or(a.perturbation.horizons),
                seed: ra.perturbation_seed.unwrap_or(a.perturbation.seed),
            },
            cutoffs: ra.cutoffs.unwrap_or(a.cutoffs),
            extension_rule: match ra.extension_rule {
                Some(ExtensionRuleName::NearestAnchor) => ExtensionRule::NearestAnchor,
                Some(ExtensionRuleName::McshaneCoordinatewise) => ExtensionRule::McshaneCoordinatewise,
                None => a.extension_rule,
            },
            embed_dims: ra.embed_dims.unwrap_or(a.embed_dims),
            embed_seeds: ra.embed_seeds.unwrap_or(a.embed_seeds),
            embed_seed_base: ra.embed_seed_base.unwrap_or(a.embed_seed_base),
            box_eps_coarse: ra.box_eps_coarse.unwrap_or(a.box_eps_coarse),
            box_scales: ra.box_scales.unwrap_or(a.box_scales),
            box_coords: ra.box_coords.unwrap_or(a.box_coords),
            deviation_m: ra.deviation_m.unwrap_or(a.deviation_m),
            deviation_eps: ra.deviation_eps.unwrap_or(a.deviation_eps),
        };
        analysis.validate(&model)?;
        Ok(Self { model, integrator, analysis })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

fn positive(name: &str, x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(LabError::Config(format!("{name} must be positive, got {x}")))
    }
}

fn build_model(raw: &RawModel) -> Result<ModelConfig> {
    let kind = raw.kind.unwrap_or(ModelId::Burgers1d);
    let mut cfg = match kind {
        ModelId::Burgers1d => {
            if raw.forcing_shell.is_some() || raw.forcing_amplitude.is_some() {
                return Err(LabError::Config("forcing_shell / forcing_amplitude apply to nse only".into()));
            }
            let nu = positive("nu", raw.nu.unwrap_or(models::BURGERS_DEFAULT_NU))?;
            let dim = raw.modes.unwrap_or(models::BURGERS_DEFAULT_DIM);
            let forcing = raw.forcing.clone().unwrap_or_else(|| models::BURGERS_DEFAULT_FORCING.to_vec());
            ModelConfig::burgers(nu, dim, &forcing)?
        }
        ModelId::Nse2d => {
            if raw.forcing.is_some() {
                return Err(LabError::Config("forcing list applies to burgers only".into()));
            }
            let nu = positive("nu", raw.nu.unwrap_or(models::NSE_DEFAULT_NU))?;
            ModelConfig::nse(
                nu,
                raw.modes.unwrap_or(models::NSE_DEFAULT_KMAX),
                raw.forcing_shell.unwrap_or(models::NSE_DEFAULT_FORCING_SHELL),
                raw.forcing_amplitude.unwrap_or(models::NSE_DEFAULT_FORCING_AMPLITUDE),
            )?
        }
    };
    if let Some(r) = raw.resolution {
        cfg.resolution = r;
    }
    // builds transforms and checks the dealiasing condition
    cfg.build()?;
    Ok(cfg)
}

impl AnalysisConfig {
    fn validate(&self, model: &ModelConfig) -> Result<()> {
        positive("m_factor", self.m_factor)?;
        if let Some(m) = self.m0 {
            positive("m0", m)?;
        }
        if let Some(m) = self.m1 {
            positive("m1", m)?;
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(LabError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        positive("perturbation_amplitude", self.perturbation.relative_amplitude)?;
        for &h in &self.perturbation.horizons {
            positive("perturbation horizon", h)?;
        }
        let d = model.operator()?.dim();
        if let Some(&n) = self.cutoffs.iter().find(|&&n| n == 0 || n >= d) {
            return Err(LabError::Config(format!("cutoff {n} outside 1..{d}")));
        }
        if let Some(&n) = self.embed_dims.iter().find(|&&n| n == 0 || n > d) {
            return Err(LabError::Config(format!("embedding dimension {n} outside 1..={d}")));
        }
        positive("box_eps_coarse", self.box_eps_coarse)?;
        if self.box_scales < 4 {
            return Err(LabError::Config("box_scales must be >= 4".into()));
        }
        if self.box_coords == 0 {
            return Err(LabError::Config("box_coords must be >= 1".into()));
        }
        positive("deviation_m", self.deviation_m)?;
        for &e in &self.deviation_eps {
            positive("deviation eps", e)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::parse("[model]\nviscosity = 0.1\n").unwrap_err();
        assert!(matches!(err, LabError::Config(_)));
        assert!(ExperimentConfig::parse("[extras]\nx = 1\n").is_err());
    }

    #[test]
    fn nse_section() {
        let cfg = ExperimentConfig::parse(
            "[model]\nkind = \"nse\"\nnu = 0.1\nmodes = 4\nforcing_shell = 2\n[analysis]\ncutoffs = [4, 8]\nembed_dims = [8]\n",
        )
        .unwrap();
        assert_eq!(cfg.model.model_id, ModelId::Nse2d);
        assert_eq!(cfg.model.resolution, 16);
    }

    #[test]
    fn resolution_below_dealias_minimum_rejected() {
        let err = ExperimentConfig::parse("[model]\nmodes = 16\nresolution = 20\n").unwrap_err();
        assert!(matches!(err, LabError::Config(_)));
    }

    #[test]
    fn bad_values_rejected() {
        assert!(ExperimentConfig::parse("[integrator]\ndt = -1.0\n").is_err());
        assert!(ExperimentConfig::parse("[analysis]\ncutoffs = [64]\n").is_err());
        assert!(ExperimentConfig::parse("[model]\nnu = 0.0\n").is_err());
    }
}
