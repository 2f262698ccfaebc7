//! States in the eigenbasis of a positive self-adjoint operator `A`.
//!
//! A state is a real coefficient vector aligned with the eigenvalue list of
//! an [`OperatorSpec`]. Everything here is diagonal: fractional powers,
//! projections and the semigroup `e^{-At}` act coefficient-wise.

use std::ops::{Add, Sub};

use crate::error::{LabError, Result};

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sine or cosine member of a real Fourier pair on the 2-torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Cos,
    Sin,
}

/// Divergence-free Fourier mode `(k⊥/|k|) trig(k·x)` on `[0, 2π]²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Mode2d {
    pub k1: i32,
    pub k2: i32,
    pub parity: Parity,
}

impl Mode2d {
    pub fn norm_sq(&self) -> i64 {
        (self.k1 as i64).pow(2) + (self.k2 as i64).pow(2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Basis {
    /// `sqrt(2/π) sin(j x)` on `[0, π]`, `j = 1..D`.
    SineDirichlet1d,
    /// Real divergence-free Fourier modes, one entry per coefficient.
    FourierDivFree2d { modes: Vec<Mode2d> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisId {
    SineDirichlet1d,
    FourierDivFree2d,
}

/// Eigenvalues of `A` (viscosity folded in) plus the basis they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    eigenvalues: Vec<f64>,
    basis: Basis,
}

impl OperatorSpec {
    /// Generic constructor; validates positivity and ordering.
    pub fn new(eigenvalues: Vec<f64>, basis: Basis) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(LabError::Domain("operator needs at least one eigenvalue".into()));
        }
        if !eigenvalues.iter().all(|l| l.is_finite() && *l > 0.0) {
            return Err(LabError::Domain("eigenvalues must be finite and positive".into()));
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(LabError::Domain("eigenvalues must be nondecreasing".into()));
        }
        if let Basis::FourierDivFree2d { modes } = &basis {
            if modes.len() != eigenvalues.len() {
                return Err(LabError::Dimension { expected: eigenvalues.len(), got: modes.len() });
            }
        }
        Ok(Self { eigenvalues, basis })
    }

    /// `A = -ν d²/dx²` on `[0, π]` with Dirichlet data: `λ_j = ν j²`.
    pub fn sine_dirichlet(nu: f64, dim: usize) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(LabError::Domain(format!("viscosity must be positive, got {nu}")));
        }
        let eig = (1..=dim).map(|j| nu * (j * j) as f64).collect();
        Self::new(eig, Basis::SineDirichlet1d)
    }

    /// `ν·Stokes` on the periodic square, all modes with `0 < |k| <= kmax`.
    ///
    /// Modes are ordered by `|k|²`, then `k1`, `k2`, cosine before sine, so
    /// the eigenvalue sequence is sorted and the ordering is reproducible.
    pub fn fourier_divfree(nu: f64, kmax: usize) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(LabError::Domain(format!("viscosity must be positive, got {nu}")));
        }
        if kmax == 0 {
            return Err(LabError::Domain("kmax must be at least 1".into()));
        }
        let kmax = kmax as i32;
        let mut modes = Vec::new();
        for k1 in 0..=kmax {
            for k2 in -kmax..=kmax {
                // half-plane representatives of ±k
                if k1 == 0 && k2 <= 0 {
                    continue;
                }
                if k1 * k1 + k2 * k2 > kmax * kmax {
                    continue;
                }
                modes.push(Mode2d { k1, k2, parity: Parity::Cos });
                modes.push(Mode2d { k1, k2, parity: Parity::Sin });
            }
        }
        modes.sort_by_key(|m| (m.norm_sq(), m.k1, m.k2, m.parity == Parity::Sin));
        let eig = modes.iter().map(|m| nu * m.norm_sq() as f64).collect();
        Self::new(eig, Basis::FourierDivFree2d { modes })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `λ_{n+1}` in one-based notation, i.e. the first eigenvalue outside `P_n`.
    pub fn lambda_next(&self, n: usize) -> Result<f64> {
        self.eigenvalues
            .get(n)
            .copied()
            .ok_or(LabError::Index { index: n + 1, limit: self.dim() })
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn basis_id(&self) -> BasisId {
        match self.basis {
            Basis::SineDirichlet1d => BasisId::SineDirichlet1d,
            Basis::FourierDivFree2d { .. } => BasisId::FourierDivFree2d,
        }
    }

    pub fn zeros(&self) -> SpectralField {
        SpectralField::zeros(self.dim())
    }

    fn check(&self, u: &SpectralField) -> Result<()> {
        if u.len() != self.dim() {
            return Err(LabError::Dimension { expected: self.dim(), got: u.len() });
        }
        Ok(())
    }

    /// `‖A^β u‖`.
    pub fn norm_pow(&self, u: &SpectralField, beta: f64) -> Result<f64> {
        self.check(u)?;
        if !(beta >= 0.0) {
            return Err(LabError::Domain(format!("beta must be >= 0, got {beta}")));
        }
        Ok(self.norm_pow_unchecked(&u.coeffs, beta))
    }

    pub(crate) fn norm_pow_unchecked(&self, coeffs: &[f64], beta: f64) -> f64 {
        if beta == 0.0 {
            return compensated_sum(coeffs.iter().map(|a| a * a)).sqrt();
        }
        let two_beta = 2.0 * beta;
        compensated_sum(
            coeffs
                .iter()
                .zip(&self.eigenvalues)
                .map(|(a, l)| l.powf(two_beta) * a * a),
        )
        .sqrt()
    }

    /// Squared `‖A^β u‖` restricted to the coefficient range `range`.
    pub(crate) fn norm_pow_sq_range(&self, coeffs: &[f64], beta: f64, range: std::ops::Range<usize>) -> f64 {
        let two_beta = 2.0 * beta;
        compensated_sum(range.map(|j| {
            let a = coeffs[j];
            if beta == 0.0 {
                a * a
            } else {
                self.eigenvalues[j].powf(two_beta) * a * a
            }
        }))
    }

    /// `A^β u` coefficient-wise.
    pub fn apply_pow(&self, u: &SpectralField, beta: f64) -> Result<SpectralField> {
        self.check(u)?;
        if !(beta >= 0.0) {
            return Err(LabError::Domain(format!("beta must be >= 0, got {beta}")));
        }
        Ok(SpectralField::new(
            u.coeffs.iter().zip(&self.eigenvalues).map(|(a, l)| a * l.powf(beta)).collect(),
        ))
    }

    /// Splits `u` into `P_n u` and `Q_n u`.
    pub fn project(&self, u: &SpectralField, n: usize) -> Result<ProjectionSplit> {
        self.check(u)?;
        if n > self.dim() {
            return Err(LabError::Index { index: n, limit: self.dim() });
        }
        let mut low = u.clone();
        let mut high = u.clone();
        low.coeffs[n..].iter_mut().for_each(|a| *a = 0.0);
        high.coeffs[..n].iter_mut().for_each(|a| *a = 0.0);
        Ok(ProjectionSplit { n, low, high })
    }

    /// `e^{-At} u`. Negative times are rejected.
    pub fn semigroup_apply(&self, u: &SpectralField, t: f64) -> Result<SpectralField> {
        self.check(u)?;
        if !(t >= 0.0) {
            return Err(LabError::Domain(format!("semigroup time must be >= 0, got {t}")));
        }
        Ok(SpectralField::new(
            u.coeffs.iter().zip(&self.eigenvalues).map(|(a, l)| a * (-l * t).exp()).collect(),
        ))
    }

    /// The tail bound `b_{n,α}(t)` on `‖A^α e^{-At} Q_n‖`.
    pub fn tail_decay_bound(&self, n: usize, alpha: f64, t: f64) -> Result<f64> {
        let lambda = self.lambda_next(n)?;
        tail_decay_bound(lambda, alpha, t)
    }
}

/// `b(t)` for a given first tail eigenvalue `λ_{n+1}`:
/// `(e t/α)^{-α}` up to the knot `t = α/λ_{n+1}`, `λ_{n+1}^α e^{-λ_{n+1} t}` after.
pub fn tail_decay_bound(lambda_next: f64, alpha: f64, t: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(LabError::Domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if !(t > 0.0) {
        return Err(LabError::Domain(format!("t must be > 0, got {t}")));
    }
    if !(lambda_next > 0.0) {
        return Err(LabError::Domain("lambda_{n+1} must be positive".into()));
    }
    let knot = alpha / lambda_next;
    Ok(if t <= knot {
        (std::f64::consts::E * t / alpha).powf(-alpha)
    } else {
        lambda_next.powf(alpha) * (-lambda_next * t).exp()
    })
}

/// Coefficients of a state in the eigenbasis of its operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { coeffs: vec![0.0; dim] }
    }

    /// Unit coefficient at index `j` (zero based).
    pub fn unit(dim: usize, j: usize) -> Self {
        let mut f = Self::zeros(dim);
        f.coeffs[j] = 1.0;
        f
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|a| a.is_finite())
    }

    /// Plain `H` norm via Parseval.
    pub fn norm(&self) -> f64 {
        compensated_sum(self.coeffs.iter().map(|a| a * a)).sqrt()
    }

    pub fn dot(&self, other: &SpectralField) -> f64 {
        compensated_sum(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b))
    }

    pub fn scale(&self, s: f64) -> SpectralField {
        SpectralField::new(self.coeffs.iter().map(|a| a * s).collect())
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &SpectralField) -> SpectralField {
        SpectralField::new(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + s * b).collect())
    }

    pub fn distance(&self, other: &SpectralField) -> f64 {
        compensated_sum(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b) * (a - b))).sqrt()
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        SpectralField::new(self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        SpectralField::new(self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect())
    }
}

/// `P_n u` and `Q_n u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSplit {
    pub n: usize,
    pub low: SpectralField,
    pub high: SpectralField,
}

impl ProjectionSplit {
    pub fn recombine(&self) -> SpectralField {
        &self.low + &self.high
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(eigs: &[f64]) -> OperatorSpec {
        OperatorSpec::new(eigs.to_vec(), Basis::SineDirichlet1d).unwrap()
    }

    #[test]
    fn fractional_norm_examples() {
        let spec = op(&[1.0, 4.0]);
        let single = SpectralField::new(vec![0.0, 1.0]);
        assert!((spec.norm_pow(&single, 0.5).unwrap() - 2.0).abs() < 1e-15);
        let both = SpectralField::new(vec![1.0, 1.0]);
        assert!((spec.norm_pow(&both, 0.5).unwrap() - 5f64.sqrt()).abs() < 1e-15);
        let u = SpectralField::new(vec![3.0, -4.0]);
        assert_eq!(spec.norm_pow(&u, 0.0).unwrap(), 5.0);
    }

    #[test]
    fn norm_rejects_mismatch() {
        let spec = op(&[1.0, 4.0]);
        let u = SpectralField::zeros(3);
        assert!(matches!(spec.norm_pow(&u, 0.5), Err(LabError::Dimension { .. })));
    }

    #[test]
    fn projection_edges() {
        let spec = OperatorSpec::sine_dirichlet(1.0, 5).unwrap();
        let u = SpectralField::new(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let full = spec.project(&u, 5).unwrap();
        assert_eq!(full.high.norm(), 0.0);
        assert_eq!(full.low, u);
        let empty = spec.project(&u, 0).unwrap();
        assert_eq!(empty.low.norm(), 0.0);
        let mid = spec.project(&u, 2).unwrap();
        assert_eq!(mid.recombine(), u);
        assert_eq!(mid.low.dot(&mid.high), 0.0);
        assert!(matches!(spec.project(&u, 6), Err(LabError::Index { .. })));
    }

    #[test]
    fn semigroup_examples() {
        let spec = op(&[1.0]);
        let u = SpectralField::new(vec![1.0]);
        assert_eq!(spec.semigroup_apply(&u, 0.0).unwrap(), u);
        let v = spec.semigroup_apply(&u, 1.0).unwrap();
        assert!((v.coeffs[0] - (-1f64).exp()).abs() < 1e-16);
        assert!(matches!(spec.semigroup_apply(&u, -1.0), Err(LabError::Domain(_))));
    }

    #[test]
    fn tail_bound_examples() {
        let b = tail_decay_bound(4.0, 0.5, 1.0).unwrap();
        assert!((b - 2.0 * (-4f64).exp()).abs() < 1e-15);
        assert!((b - 0.036631).abs() < 5e-7);

        // knot continuity for α = 1/4, λ = 9
        let knot = 0.25 / 9.0;
        let left = (std::f64::consts::E * knot / 0.25).powf(-0.25);
        let right = 9f64.powf(0.25) * (-9.0 * knot).exp();
        let expected = 9f64.powf(0.25) * (-0.25f64).exp();
        assert!((left - expected).abs() < 1e-14);
        assert!((right - expected).abs() < 1e-14);
        assert!((tail_decay_bound(9.0, 0.25, 1.0 / 36.0).unwrap() - expected).abs() < 1e-14);

        assert!(tail_decay_bound(4.0, 1.0, 1.0).is_err());
        assert!(tail_decay_bound(4.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn divfree_modes_sorted_and_paired() {
        let spec = OperatorSpec::fourier_divfree(0.5, 3).unwrap();
        // lattice points with 0 < |k| <= 3, halved, times two parities
        let count = (-3i32..=3)
            .flat_map(|a| (-3i32..=3).map(move |b| (a, b)))
            .filter(|&(a, b)| a * a + b * b > 0 && a * a + b * b <= 9)
            .count();
        assert_eq!(spec.dim(), count);
        assert_eq!(spec.eigenvalues()[0], 0.5);
        assert!(spec.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
    }
}
