//! Concrete dissipative models `du/dt + Au = F(u)`.

pub mod burgers;
pub mod nse;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::spectral::{OperatorSpec, SpectralField};

pub use burgers::Burgers;
pub use nse::NavierStokes2d;

/// A semilinear evolution equation in the eigenbasis of its linear part.
pub trait VectorField: Send + Sync {
    fn operator(&self) -> &OperatorSpec;

    /// `F(u)`, forcing included.
    fn nonlinear_term(&self, u: &SpectralField) -> Result<SpectralField>;

    /// `𝒢(u) = -Au + F(u)`.
    fn vector_field(&self, u: &SpectralField) -> Result<SpectralField> {
        let f = self.nonlinear_term(u)?;
        let op = self.operator();
        Ok(SpectralField::new(
            u.coeffs
                .iter()
                .zip(op.eigenvalues())
                .zip(&f.coeffs)
                .map(|((a, l), n)| n - l * a)
                .collect(),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    #[serde(rename = "burgers")]
    Burgers1d,
    #[serde(rename = "nse")]
    Nse2d,
}

impl ModelId {
    pub fn code(self) -> u8 {
        match self {
            ModelId::Burgers1d => 1,
            ModelId::Nse2d => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(ModelId::Burgers1d),
            2 => Some(ModelId::Nse2d),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DealiasRule {
    #[default]
    TwoThirds,
}

/// Model parameters. `modes` is `D` for Burgers and the shell radius `kmax`
/// for Navier–Stokes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub model_id: ModelId,
    pub nu: f64,
    pub modes: usize,
    pub forcing: SpectralField,
    pub resolution: usize,
    pub dealias_rule: DealiasRule,
}

pub const BURGERS_DEFAULT_NU: f64 = 0.1;
pub const BURGERS_DEFAULT_DIM: usize = 64;
/// physical amplitudes of `sin(jx)` in the default Burgers forcing
pub const BURGERS_DEFAULT_FORCING: [(usize, f64); 2] = [(1, 1.0), (2, 0.5)];
pub const NSE_DEFAULT_NU: f64 = 0.05;
pub const NSE_DEFAULT_KMAX: usize = 10;
pub const NSE_DEFAULT_FORCING_SHELL: usize = 4;
pub const NSE_DEFAULT_FORCING_AMPLITUDE: f64 = 1.0;

impl ModelConfig {
    /// Burgers with sine forcing given as `(mode, physical amplitude)` pairs.
    pub fn burgers(nu: f64, dim: usize, forcing: &[(usize, f64)]) -> Result<Self> {
        let mut f = SpectralField::zeros(dim);
        for &(j, amp) in forcing {
            if j == 0 || j > dim {
                return Err(LabError::Config(format!("forcing mode {j} outside 1..={dim}")));
            }
            f.coeffs[j - 1] = burgers::sine_amplitude_to_coeff(amp);
        }
        Ok(Self {
            model_id: ModelId::Burgers1d,
            nu,
            modes: dim,
            forcing: f,
            resolution: default_resolution(ModelId::Burgers1d, dim),
            dealias_rule: DealiasRule::TwoThirds,
        })
    }

    pub fn burgers_default() -> Self {
        Self::burgers(BURGERS_DEFAULT_NU, BURGERS_DEFAULT_DIM, &BURGERS_DEFAULT_FORCING)
            .expect("default burgers config")
    }

    /// Navier–Stokes with Kolmogorov forcing `amplitude·sin(kf y) e_x`.
    pub fn nse(nu: f64, kmax: usize, kf: usize, amplitude: f64) -> Result<Self> {
        let op = OperatorSpec::fourier_divfree(nu, kmax)?;
        let forcing = nse::kolmogorov_forcing(&op, kf, amplitude)?;
        Ok(Self {
            model_id: ModelId::Nse2d,
            nu,
            modes: kmax,
            forcing,
            resolution: default_resolution(ModelId::Nse2d, kmax),
            dealias_rule: DealiasRule::TwoThirds,
        })
    }

    pub fn nse_default() -> Self {
        Self::nse(
            NSE_DEFAULT_NU,
            NSE_DEFAULT_KMAX,
            NSE_DEFAULT_FORCING_SHELL,
            NSE_DEFAULT_FORCING_AMPLITUDE,
        )
        .expect("default nse config")
    }

    pub fn operator(&self) -> Result<OperatorSpec> {
        match self.model_id {
            ModelId::Burgers1d => OperatorSpec::sine_dirichlet(self.nu, self.modes),
            ModelId::Nse2d => OperatorSpec::fourier_divfree(self.nu, self.modes),
        }
    }

    pub fn build(&self) -> Result<Model> {
        Model::new(self)
    }
}

/// Smallest FFT-friendly alias-free grid.
pub fn default_resolution(id: ModelId, modes: usize) -> usize {
    match id {
        ModelId::Burgers1d => burgers::min_resolution(modes).next_power_of_two(),
        ModelId::Nse2d => nse::min_resolution(modes).next_power_of_two(),
    }
}

/// A built model: operator, forcing and transform plans.
#[derive(Debug)]
pub enum Model {
    Burgers(Burgers),
    Nse(NavierStokes2d),
}

impl Model {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        if !(cfg.nu > 0.0) {
            return Err(LabError::Config(format!("nu must be positive, got {}", cfg.nu)));
        }
        if !cfg.forcing.is_finite() {
            return Err(LabError::Config("forcing must be finite".into()));
        }
        match cfg.model_id {
            ModelId::Burgers1d => Ok(Model::Burgers(Burgers::new(
                cfg.nu,
                cfg.modes,
                cfg.forcing.clone(),
                cfg.resolution,
            )?)),
            ModelId::Nse2d => Ok(Model::Nse(NavierStokes2d::new(
                cfg.nu,
                cfg.modes,
                cfg.forcing.clone(),
                cfg.resolution,
            )?)),
        }
    }

    pub fn id(&self) -> ModelId {
        match self {
            Model::Burgers(_) => ModelId::Burgers1d,
            Model::Nse(_) => ModelId::Nse2d,
        }
    }

    pub fn forcing(&self) -> &SpectralField {
        match self {
            Model::Burgers(m) => m.forcing(),
            Model::Nse(m) => m.forcing(),
        }
    }

    /// Quadratic part only, `F(u) - forcing`.
    pub fn advection(&self, u: &SpectralField) -> Result<SpectralField> {
        match self {
            Model::Burgers(m) => m.advection(u),
            Model::Nse(m) => m.advection(u),
        }
    }
}

impl VectorField for Model {
    fn operator(&self) -> &OperatorSpec {
        match self {
            Model::Burgers(m) => m.operator(),
            Model::Nse(m) => m.operator(),
        }
    }

    fn nonlinear_term(&self, u: &SpectralField) -> Result<SpectralField> {
        let adv = self.advection(u)?;
        Ok(&adv + self.forcing())
    }
}

/// Affine model `F(u) = M u + c`, with `M` optional (row-major `D×D`).
///
/// With `M = 0` this is the linear flow used for exactness checks.
#[derive(Debug, Clone)]
pub struct AffineModel {
    op: OperatorSpec,
    matrix: Option<Vec<f64>>,
    forcing: SpectralField,
}

impl AffineModel {
    pub fn new(op: OperatorSpec, matrix: Option<Vec<f64>>, forcing: SpectralField) -> Result<Self> {
        let d = op.dim();
        if forcing.len() != d {
            return Err(LabError::Dimension { expected: d, got: forcing.len() });
        }
        if let Some(m) = &matrix {
            if m.len() != d * d {
                return Err(LabError::Dimension { expected: d * d, got: m.len() });
            }
        }
        Ok(Self { op, matrix, forcing })
    }

    /// `F ≡ 0`.
    pub fn linear(op: OperatorSpec) -> Self {
        let forcing = op.zeros();
        Self { op, matrix: None, forcing }
    }
}

impl VectorField for AffineModel {
    fn operator(&self) -> &OperatorSpec {
        &self.op
    }

    fn nonlinear_term(&self, u: &SpectralField) -> Result<SpectralField> {
        let d = self.op.dim();
        if u.len() != d {
            return Err(LabError::Dimension { expected: d, got: u.len() });
        }
        let mut out = self.forcing.clone();
        if let Some(m) = &self.matrix {
            for (i, o) in out.coeffs.iter_mut().enumerate() {
                *o += m[i * d..(i + 1) * d].iter().zip(&u.coeffs).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        Ok(out)
    }
}

/// Empirical local Lipschitz constants of `F` on a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzEstimate {
    /// radius of the sample in the `‖A^α·‖` norm
    pub radius: f64,
    /// `max ‖F(u)-F(v)‖ / ‖A^α(u-v)‖`
    pub k_hat: f64,
    /// `max -(f, Aw) / (‖w‖ ‖A^{1/2} w‖)`, clipped at zero
    pub k2: f64,
    pub pair_count: usize,
    pub skipped: usize,
    pub worst_pair: (usize, usize),
}

/// per-row `(k_hat, k2, used, skipped, worst pair)`
type PairRow = (f64, f64, usize, usize, (usize, usize));

pub fn lipschitz_constant_estimate(
    sample: &[SpectralField],
    model: &dyn VectorField,
    alpha: f64,
) -> Result<LipschitzEstimate> {
    if sample.len() < 2 {
        return Err(LabError::Sample(format!("need at least 2 points, got {}", sample.len())));
    }
    if !(alpha >= 0.0) {
        return Err(LabError::Domain(format!("alpha must be >= 0, got {alpha}")));
    }
    let op = model.operator();
    let images: Vec<SpectralField> = sample
        .par_iter()
        .map(|u| model.nonlinear_term(u))
        .collect::<Result<_>>()?;
    let mut radius = 0.0f64;
    for u in sample {
        radius = radius.max(op.norm_pow(u, alpha)?);
    }

    let n = sample.len();
    let rows: Vec<PairRow> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = (0.0f64, (i, i));
            let mut k2 = 0.0f64;
            let (mut used, mut skipped) = (0usize, 0usize);
            for j in (i + 1)..n {
                let w = &sample[i] - &sample[j];
                let wa = op.norm_pow_unchecked(&w.coeffs, alpha);
                if wa == 0.0 || w.norm() == 0.0 {
                    skipped += 1;
                    continue;
                }
                used += 1;
                let f = &images[i] - &images[j];
                let ratio = f.norm() / wa;
                if ratio > best.0 {
                    best = (ratio, (i, j));
                }
                let aw = op.apply_pow(&w, 1.0).expect("dims checked");
                let denom = w.norm() * op.norm_pow_unchecked(&w.coeffs, 0.5);
                k2 = k2.max(-f.dot(&aw) / denom);
            }
            (best.0, k2, used, skipped, best.1)
        })
        .collect();

    let mut est = LipschitzEstimate {
        radius,
        k_hat: 0.0,
        k2: 0.0,
        pair_count: 0,
        skipped: 0,
        worst_pair: (0, 1),
    };
    for (k, k2, used, skipped, pair) in rows {
        if k > est.k_hat {
            est.k_hat = k;
            est.worst_pair = pair;
        }
        est.k2 = est.k2.max(k2);
        est.pair_count += used;
        est.skipped += skipped;
    }
    if est.pair_count == 0 {
        return Err(LabError::Sample("all sample points coincide".into()));
    }
    Ok(est)
}
