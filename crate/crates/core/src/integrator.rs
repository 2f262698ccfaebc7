//! Stiff time stepping, attractor sampling and paired trajectories.
//!
//! The default scheme is integrating-factor RK4: the linear part is
//! propagated exactly by `e^{-A dt}` and only `F` is sampled at the stages,
//! so `F ≡ 0` reproduces the semigroup to roundoff.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::models::{ModelConfig, VectorField};
use crate::spectral::{OperatorSpec, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ExponentialRk4,
    ImexCnab2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub t_transient: f64,
    pub t_sample: f64,
    pub sample_stride: usize,
    pub seed: u64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 2e-3,
            scheme: Scheme::ExponentialRk4,
            t_transient: 1.0,
            t_sample: 6.0,
            sample_stride: 20,
            seed: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(LabError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_transient >= 0.0) || !(self.t_sample >= 0.0) {
            return Err(LabError::Config("t_transient and t_sample must be >= 0".into()));
        }
        if self.sample_stride == 0 {
            return Err(LabError::Config("sample_stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Snapshot count implied by `t_sample` at the configured stride.
    pub fn sample_count(&self) -> usize {
        ((self.t_sample / (self.dt * self.sample_stride as f64)) + 1e-9).floor() as usize
    }
}

/// Stateful single-trajectory stepper.
///
/// Holds the exponential factors for `dt` and, for CNAB2, the previous
/// nonlinear evaluation.
pub struct Stepper<'a> {
    field: &'a dyn VectorField,
    scheme: Scheme,
    dt: f64,
    full: Vec<f64>,
    half: Vec<f64>,
    previous: Option<SpectralField>,
    pub time: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(field: &'a dyn VectorField, scheme: Scheme, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(LabError::Config(format!("dt must be positive, got {dt}")));
        }
        let (full, half) = factors(field.operator(), dt);
        Ok(Self { field, scheme, dt, full, half, previous: None, time: 0.0 })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `u` by one step of size `dt`.
    pub fn step(&mut self, u: &SpectralField) -> Result<SpectralField> {
        let next = match self.scheme {
            Scheme::ExponentialRk4 => self.if_rk4(u, self.dt)?,
            Scheme::ImexCnab2 => self.cnab2(u)?,
        };
        self.time += self.dt;
        if !next.is_finite() {
            return Err(LabError::Divergence { time: self.time });
        }
        Ok(next)
    }

    /// One exponential step of arbitrary size `h`, used for partial final steps.
    pub fn step_partial(&mut self, u: &SpectralField, h: f64) -> Result<SpectralField> {
        let (full, half) = factors(self.field.operator(), h);
        let keep = (std::mem::replace(&mut self.full, full), std::mem::replace(&mut self.half, half));
        let out = self.if_rk4(u, h);
        self.full = keep.0;
        self.half = keep.1;
        let out = out?;
        self.time += h;
        self.previous = None;
        if !out.is_finite() {
            return Err(LabError::Divergence { time: self.time });
        }
        Ok(out)
    }

    fn if_rk4(&self, u: &SpectralField, h: f64) -> Result<SpectralField> {
        let e = &self.full;
        let e2 = &self.half;
        let k1 = self.field.nonlinear_term(u)?;
        let stage = |base: &SpectralField, k: &SpectralField, s: f64, damp: &[f64]| {
            SpectralField::new(
                base.coeffs
                    .iter()
                    .zip(&k.coeffs)
                    .zip(damp)
                    .map(|((a, b), d)| d * (a + s * b))
                    .collect(),
            )
        };
        let k2 = self.field.nonlinear_term(&stage(u, &k1, 0.5 * h, e2))?;
        let u_half = SpectralField::new(u.coeffs.iter().zip(e2).map(|(a, d)| a * d).collect());
        let k3 = self.field.nonlinear_term(&u_half.axpy(0.5 * h, &k2))?;
        let u_full = SpectralField::new(
            u.coeffs.iter().zip(e).zip(e2).zip(&k3.coeffs).map(|(((a, d), d2), k)| d * a + h * d2 * k).collect(),
        );
        let k4 = self.field.nonlinear_term(&u_full)?;
        let coeffs = (0..u.len())
            .map(|j| {
                e[j] * u.coeffs[j]
                    + h / 6.0 * (e[j] * k1.coeffs[j] + 2.0 * e2[j] * (k2.coeffs[j] + k3.coeffs[j]) + k4.coeffs[j])
            })
            .collect();
        Ok(SpectralField::new(coeffs))
    }

    fn cnab2(&mut self, u: &SpectralField) -> Result<SpectralField> {
        let n_now = self.field.nonlinear_term(u)?;
        let n_prev = self.previous.take().unwrap_or_else(|| n_now.clone());
        let h = self.dt;
        let lam = self.field.operator().eigenvalues();
        let coeffs = (0..u.len())
            .map(|j| {
                let rhs = (1.0 - 0.5 * h * lam[j]) * u.coeffs[j]
                    + h * (1.5 * n_now.coeffs[j] - 0.5 * n_prev.coeffs[j]);
                rhs / (1.0 + 0.5 * h * lam[j])
            })
            .collect();
        self.previous = Some(n_now);
        Ok(SpectralField::new(coeffs))
    }
}

fn factors(op: &OperatorSpec, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let full = op.eigenvalues().iter().map(|l| (-l * dt).exp()).collect();
    let half = op.eigenvalues().iter().map(|l| (-0.5 * l * dt).exp()).collect();
    (full, half)
}

/// One step from `u` with a fresh stepper (CNAB2 starts with an Euler predictor).
pub fn step(field: &dyn VectorField, u: &SpectralField, icfg: &IntegratorConfig) -> Result<SpectralField> {
    icfg.validate()?;
    check_dim(field, u)?;
    Stepper::new(field, icfg.scheme, icfg.dt)?.step(u)
}

fn check_dim(field: &dyn VectorField, u: &SpectralField) -> Result<()> {
    let d = field.operator().dim();
    if u.len() != d {
        return Err(LabError::Dimension { expected: d, got: u.len() });
    }
    Ok(())
}

/// `Φ_T u0`: whole steps of `dt` followed by a partial step if `T` is off-grid.
pub fn evolve(field: &dyn VectorField, u0: &SpectralField, t_end: f64, icfg: &IntegratorConfig) -> Result<SpectralField> {
    icfg.validate()?;
    check_dim(field, u0)?;
    if !(t_end >= 0.0) {
        return Err(LabError::Domain(format!("evolution time must be >= 0, got {t_end}")));
    }
    let mut stepper = Stepper::new(field, icfg.scheme, icfg.dt)?;
    let steps = (t_end / icfg.dt + 1e-9).floor() as usize;
    let mut u = u0.clone();
    for _ in 0..steps {
        u = stepper.step(&u)?;
    }
    let rest = t_end - steps as f64 * icfg.dt;
    if rest > 1e-12 * icfg.dt.max(1.0) {
        u = stepper.step_partial(&u, rest)?;
    }
    Ok(u)
}

/// Seeded initial data: the linear response to the forcing plus random
/// low-mode perturbations.
pub fn initial_condition(op: &OperatorSpec, forcing: &SpectralField, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = SpectralField::new(
        forcing.coeffs.iter().zip(op.eigenvalues()).map(|(f, l)| f / l).collect(),
    );
    let amp = 0.5 * base.norm().max(1.0);
    let low = op.dim().min(8);
    let mut u = base;
    for j in 0..low {
        let xi: f64 = rng.sample(StandardNormal);
        u.coeffs[j] += amp * xi / (j + 1) as f64;
    }
    u
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleMeta {
    pub dt: f64,
    pub t_transient: f64,
    pub stride: usize,
    pub seed: u64,
}

/// Finite stand-in for the global attractor.
#[derive(Debug, Clone, PartialEq)]
pub struct AttractorSample {
    pub points: Vec<SpectralField>,
    pub model: Option<ModelConfig>,
    pub meta: SampleMeta,
}

impl AttractorSample {
    pub fn from_points(points: Vec<SpectralField>) -> Self {
        Self {
            points,
            model: None,
            meta: SampleMeta { dt: 0.0, t_transient: 0.0, stride: 1, seed: 0 },
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `sup ‖A^β u‖` over the sample.
    pub fn sup_norm(&self, op: &OperatorSpec, beta: f64) -> Result<f64> {
        let mut s = 0.0f64;
        for p in &self.points {
            s = s.max(op.norm_pow(p, beta)?);
        }
        Ok(s)
    }

    /// `M₀ = 4 sup ‖u‖`.
    pub fn m0(&self, op: &OperatorSpec) -> Result<f64> {
        Ok(4.0 * self.sup_norm(op, 0.0)?)
    }

    /// `M₁ = 4 sup ‖A^{1/2} u‖`.
    pub fn m1(&self, op: &OperatorSpec) -> Result<f64> {
        Ok(4.0 * self.sup_norm(op, 0.5)?)
    }
}

/// Burn-in then `count` snapshots every `stride` steps along one trajectory.
pub fn sample_trajectory(
    field: &dyn VectorField,
    u0: &SpectralField,
    icfg: &IntegratorConfig,
    count: usize,
) -> Result<Vec<SpectralField>> {
    icfg.validate()?;
    check_dim(field, u0)?;
    let mut u = evolve(field, u0, icfg.t_transient, icfg)?;
    let mut stepper = Stepper::new(field, icfg.scheme, icfg.dt)?;
    stepper.time = icfg.t_transient;
    let mut points = Vec::with_capacity(count);
    points.push(u.clone());
    while points.len() < count {
        for _ in 0..icfg.sample_stride {
            u = stepper.step(&u)?;
        }
        points.push(u.clone());
    }
    Ok(points)
}

pub fn sample_attractor(cfg: &ModelConfig, icfg: &IntegratorConfig, count: usize) -> Result<AttractorSample> {
    if count < 2 {
        return Err(LabError::Sample(format!("need at least 2 snapshots, got {count}")));
    }
    let model = cfg.build()?;
    let op = model.operator();
    let u0 = initial_condition(op, model.forcing(), icfg.seed);
    let points = sample_trajectory(&model, &u0, icfg, count)?;
    Ok(AttractorSample {
        points,
        model: Some(cfg.clone()),
        meta: SampleMeta {
            dt: icfg.dt,
            t_transient: icfg.t_transient,
            stride: icfg.sample_stride,
            seed: icfg.seed,
        },
    })
}

/// Two solutions on a shared time grid and their difference.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPair {
    pub times: Vec<f64>,
    pub u_path: Vec<SpectralField>,
    pub v_path: Vec<SpectralField>,
    pub w_path: Vec<SpectralField>,
}

/// Threshold below which two initial states count as the same point.
pub const DEGENERATE_SEPARATION: f64 = 1e-14;

/// Integrates `u0`, `v0` on identical schedules, recording every `sample_stride` steps.
pub fn pair_trajectories(
    field: &dyn VectorField,
    u0: &SpectralField,
    v0: &SpectralField,
    t_end: f64,
    icfg: &IntegratorConfig,
) -> Result<TrajectoryPair> {
    icfg.validate()?;
    check_dim(field, u0)?;
    check_dim(field, v0)?;
    if u0.distance(v0) < DEGENERATE_SEPARATION {
        return Err(LabError::DegeneratePair(format!(
            "initial separation {} below {DEGENERATE_SEPARATION}",
            u0.distance(v0)
        )));
    }
    let steps = (t_end / icfg.dt + 1e-9).floor() as usize;
    let mut su = Stepper::new(field, icfg.scheme, icfg.dt)?;
    let mut sv = Stepper::new(field, icfg.scheme, icfg.dt)?;
    let (mut u, mut v) = (u0.clone(), v0.clone());
    let mut pair = TrajectoryPair {
        times: vec![0.0],
        u_path: vec![u.clone()],
        v_path: vec![v.clone()],
        w_path: vec![&u - &v],
    };
    for k in 1..=steps {
        u = su.step(&u)?;
        v = sv.step(&v)?;
        if k % icfg.sample_stride == 0 {
            pair.times.push(k as f64 * icfg.dt);
            pair.w_path.push(&u - &v);
            pair.u_path.push(u.clone());
            pair.v_path.push(v.clone());
        }
    }
    Ok(pair)
}

/// Points plus the index pairs used for two-point statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub points: Vec<SpectralField>,
    pub pairs: Vec<(usize, usize)>,
}

impl PairSet {
    /// All `i < j` pairs of `points`.
    pub fn all_pairs(points: Vec<SpectralField>) -> Self {
        let n = points.len();
        let pairs = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        Self { points, pairs }
    }
}

/// Short re-integrations of perturbed snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationPlan {
    /// number of perturbed snapshots
    pub count: usize,
    /// perturbation size relative to the sample's `sup ‖u‖`
    pub relative_amplitude: f64,
    /// times at which every perturbed pair is recorded
    pub horizons: Vec<f64>,
    pub seed: u64,
}

impl Default for PerturbationPlan {
    fn default() -> Self {
        Self {
            count: 48,
            relative_amplitude: 1e-3,
            horizons: vec![0.01, 0.02, 0.04, 0.08, 0.16, 0.32, 0.64],
            seed: 7,
        }
    }
}

/// Snapshot pairs plus `(Φ_τ u_i, Φ_τ(u_i + εξ))` pairs at small separations.
///
/// Perturbations `ξ` are white Gaussian in the coefficients, normalised to
/// `ε = relative_amplitude · sup ‖u‖`, so the recorded differences are
/// heat-smoothed noise at every horizon `τ`. Snapshots are picked evenly
/// through the sample and jobs are collected in index order.
pub fn build_pair_set(
    field: &dyn VectorField,
    snapshots: &[SpectralField],
    icfg: &IntegratorConfig,
    plan: &PerturbationPlan,
) -> Result<PairSet> {
    if snapshots.len() < 2 {
        return Err(LabError::Sample("need at least 2 snapshots".into()));
    }
    let mut set = PairSet::all_pairs(snapshots.to_vec());
    if plan.count == 0 || plan.horizons.is_empty() {
        return Ok(set);
    }
    let mut horizons = plan.horizons.clone();
    horizons.sort_by(|a, b| a.total_cmp(b));
    if !(horizons[0] > 0.0) || !horizons.iter().all(|h| h.is_finite()) {
        return Err(LabError::Config("perturbation horizons must be positive".into()));
    }
    let sup = snapshots.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let eps = plan.relative_amplitude * sup.max(f64::MIN_POSITIVE);
    let d = field.operator().dim();
    let jobs: Vec<(usize, u64)> = (0..plan.count)
        .map(|k| (k * snapshots.len() / plan.count, plan.seed.wrapping_add(k as u64)))
        .collect();
    let extra: Vec<Vec<(SpectralField, SpectralField)>> = jobs
        .par_iter()
        .map(|&(idx, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xi = SpectralField::new((0..d).map(|_| rng.sample(StandardNormal)).collect());
            let xi = xi.scale(eps / xi.norm());
            let mut reference = snapshots[idx].clone();
            let mut perturbed = &reference + &xi;
            let mut t = 0.0;
            let mut records = Vec::with_capacity(horizons.len());
            for &tau in &horizons {
                reference = evolve(field, &reference, tau - t, icfg)?;
                perturbed = evolve(field, &perturbed, tau - t, icfg)?;
                t = tau;
                records.push((reference.clone(), perturbed.clone()));
            }
            Ok(records)
        })
        .collect::<Result<_>>()?;
    let extra: Vec<(SpectralField, SpectralField)> = extra.into_iter().flatten().collect();
    for (reference, perturbed) in extra {
        let i = set.points.len();
        set.points.push(reference);
        set.points.push(perturbed);
        set.pairs.push((i, i + 1));
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::AffineModel;

    #[test]
    fn linear_step_is_semigroup() {
        let op = OperatorSpec::sine_dirichlet(1.0, 16).unwrap();
        let m = AffineModel::linear(op.clone());
        let u = SpectralField::new((0..16).map(|j| 1.0 / (j + 1) as f64).collect());
        let icfg = IntegratorConfig { dt: 0.01, ..Default::default() };
        let stepped = step(&m, &u, &icfg).unwrap();
        let exact = op.semigroup_apply(&u, 0.01).unwrap();
        for (a, b) in stepped.coeffs.iter().zip(&exact.coeffs) {
            assert!((a - b).abs() <= 1e-13 * b.abs().max(1e-300), "{a} vs {b}");
        }
    }

    #[test]
    fn constant_forcing_converges_to_c_over_lambda() {
        let op = OperatorSpec::new(vec![2.0], crate::spectral::Basis::SineDirichlet1d).unwrap();
        let m = AffineModel::new(op, None, SpectralField::new(vec![3.0])).unwrap();
        // CNAB2 fixes c/λ exactly; the IF-RK4 fixed point is off by O((λh)^4)
        for (scheme, tol) in [(Scheme::ExponentialRk4, 1e-6), (Scheme::ImexCnab2, 1e-10)] {
            let icfg = IntegratorConfig { dt: 0.05, scheme, ..Default::default() };
            let u = evolve(&m, &SpectralField::new(vec![0.0]), 20.0, &icfg).unwrap();
            assert!((u.coeffs[0] - 1.5).abs() < tol, "{scheme:?}: {}", u.coeffs[0]);
        }
    }

    #[test]
    fn evolve_zero_time_is_identity() {
        let op = OperatorSpec::sine_dirichlet(1.0, 4).unwrap();
        let m = AffineModel::linear(op);
        let u = SpectralField::new(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(evolve(&m, &u, 0.0, &IntegratorConfig::default()).unwrap(), u);
    }

    #[test]
    fn blow_up_reports_time() {
        // F(u) = 10 u on a unit eigenvalue grows without bound
        let op = OperatorSpec::new(vec![1.0], crate::spectral::Basis::SineDirichlet1d).unwrap();
        let m = AffineModel::new(op, Some(vec![1000.0]), SpectralField::new(vec![0.0])).unwrap();
        let icfg = IntegratorConfig { dt: 0.1, ..Default::default() };
        let err = evolve(&m, &SpectralField::new(vec![1.0]), 100.0, &icfg).unwrap_err();
        match err {
            LabError::Divergence { time } => assert!(time > 0.0 && time < 100.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn degenerate_pair_flagged() {
        let op = OperatorSpec::sine_dirichlet(1.0, 4).unwrap();
        let m = AffineModel::linear(op);
        let u = SpectralField::new(vec![1.0, 0.0, 0.0, 0.0]);
        let err = pair_trajectories(&m, &u, &u, 1.0, &IntegratorConfig::default()).unwrap_err();
        assert!(matches!(err, LabError::DegeneratePair(_)));
    }

    #[test]
    fn config_validation() {
        let bad = IntegratorConfig { dt: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = IntegratorConfig { sample_stride: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
