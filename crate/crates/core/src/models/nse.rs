//! Two-dimensional incompressible Navier–Stokes on the periodic square.
//!
//! States are velocity coefficients in the orthonormal divergence-free basis
//! `c_k = (k⊥/|k|) √2 cos(k·x)/(2π)`, `s_k = (k⊥/|k|) √2 sin(k·x)/(2π)`.
//! The nonlinearity is evaluated in vorticity form: `curl c_k = -|k| S_k`,
//! `curl s_k = |k| C_k`, and the projected term `-P(u·∇u)` is recovered from
//! `-u·∇ω` by inverting the curl on each mode.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{LabError, Result};
use crate::spectral::{Basis, Mode2d, OperatorSpec, Parity, SpectralField};

pub struct NavierStokes2d {
    op: OperatorSpec,
    kmax: usize,
    forcing: SpectralField,
    resolution: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// half-plane wavevectors, with (cos index, sin index) into the state
    pairs: Vec<(i32, i32, usize, usize)>,
}

impl std::fmt::Debug for NavierStokes2d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NavierStokes2d")
            .field("kmax", &self.kmax)
            .field("dim", &self.op.dim())
            .field("resolution", &self.resolution)
            .finish()
    }
}

pub fn min_resolution(kmax: usize) -> usize {
    3 * kmax + 1
}

/// Scalar Fourier normalisation of `√2 trig(k·x)/(2π)`.
const SCALAR_NORM: f64 = std::f64::consts::SQRT_2 / (4.0 * PI);

impl NavierStokes2d {
    pub fn new(nu: f64, kmax: usize, forcing: SpectralField, resolution: usize) -> Result<Self> {
        let op = OperatorSpec::fourier_divfree(nu, kmax)?;
        if forcing.len() != op.dim() {
            return Err(LabError::Dimension { expected: op.dim(), got: forcing.len() });
        }
        if resolution < min_resolution(kmax) {
            return Err(LabError::Config(format!(
                "nse resolution {resolution} too small for kmax {kmax} (need >= {})",
                min_resolution(kmax)
            )));
        }
        let modes = match op.basis() {
            Basis::FourierDivFree2d { modes } => modes.clone(),
            Basis::SineDirichlet1d => unreachable!(),
        };
        let mut pairs: Vec<(i32, i32, usize, usize)> = Vec::new();
        for (idx, m) in modes.iter().enumerate() {
            if m.parity == Parity::Cos {
                let sin_idx = modes
                    .iter()
                    .position(|o| o.k1 == m.k1 && o.k2 == m.k2 && o.parity == Parity::Sin)
                    .ok_or_else(|| LabError::Consistency("unpaired cosine mode".into()))?;
                pairs.push((m.k1, m.k2, idx, sin_idx));
            }
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            op,
            kmax,
            forcing,
            resolution,
            forward: planner.plan_fft_forward(resolution),
            inverse: planner.plan_fft_inverse(resolution),
            pairs,
        })
    }

    pub fn operator(&self) -> &OperatorSpec {
        &self.op
    }

    pub fn forcing(&self) -> &SpectralField {
        &self.forcing
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    fn wrap(&self, k: i32) -> usize {
        let r = self.resolution as i32;
        (((k % r) + r) % r) as usize
    }

    fn fft2(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let r = self.resolution;
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for row in data.chunks_exact_mut(r) {
            plan.process_with_scratch(row, &mut scratch);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); r];
        for c in 0..r {
            for (i, v) in col.iter_mut().enumerate() {
                *v = data[i * r + c];
            }
            plan.process_with_scratch(&mut col, &mut scratch);
            for (i, v) in col.iter().enumerate() {
                data[i * r + c] = *v;
            }
        }
    }

    /// Places `ŝ_k` and its conjugate at `k`, `-k` on an `R×R` grid indexed `[k1][k2]`.
    fn scatter(&self, grid: &mut [Complex64], k1: i32, k2: i32, value: Complex64) {
        let r = self.resolution;
        grid[self.wrap(k1) * r + self.wrap(k2)] = value;
        grid[self.wrap(-k1) * r + self.wrap(-k2)] = value.conj();
    }

    /// Coefficients of `-P(u·∇u)` (no forcing).
    pub fn advection(&self, u: &SpectralField) -> Result<SpectralField> {
        let dim = self.op.dim();
        if u.len() != dim {
            return Err(LabError::Dimension { expected: dim, got: u.len() });
        }
        let r = self.resolution;
        let zero = Complex64::new(0.0, 0.0);
        let mut ux = vec![zero; r * r];
        let mut uy = vec![zero; r * r];
        let mut wx = vec![zero; r * r];
        let mut wy = vec![zero; r * r];
        for &(k1, k2, ci, si) in &self.pairs {
            let kn = ((k1 * k1 + k2 * k2) as f64).sqrt();
            let (a, b) = (u.coeffs[ci], u.coeffs[si]);
            // ω̂_k = N (|k| b + i |k| a),  ψ̂_k = -ω̂_k / |k|²
            let omega = Complex64::new(kn * b, kn * a) * SCALAR_NORM;
            let psi = -omega / (kn * kn);
            let (f1, f2) = (k1 as f64, k2 as f64);
            let i = Complex64::new(0.0, 1.0);
            // u = (-ψ_y, ψ_x)
            self.scatter(&mut ux, k1, k2, -i * f2 * psi);
            self.scatter(&mut uy, k1, k2, i * f1 * psi);
            self.scatter(&mut wx, k1, k2, i * f1 * omega);
            self.scatter(&mut wy, k1, k2, i * f2 * omega);
        }
        for g in [&mut ux, &mut uy, &mut wx, &mut wy] {
            self.fft2(g, &self.inverse);
        }
        let mut adv: Vec<Complex64> = (0..r * r)
            .map(|p| Complex64::new(-(ux[p].re * wx[p].re + uy[p].re * wy[p].re), 0.0))
            .collect();
        self.fft2(&mut adv, &self.forward);

        let scale = 1.0 / (r * r) as f64;
        let mut out = SpectralField::zeros(dim);
        for &(k1, k2, ci, si) in &self.pairs {
            let kn = ((k1 * k1 + k2 * k2) as f64).sqrt();
            let nh = adv[self.wrap(k1) * r + self.wrap(k2)] * scale;
            // n̂_k = N (α - iβ) in the scalar C_k/S_k basis
            let alpha = nh.re / SCALAR_NORM;
            let beta = -nh.im / SCALAR_NORM;
            out.coeffs[ci] = -beta / kn;
            out.coeffs[si] = alpha / kn;
        }
        Ok(out)
    }
}

/// Velocity coefficients of the Kolmogorov-type forcing `amplitude·sin(kf y) e_x`.
pub fn kolmogorov_forcing(op: &OperatorSpec, kf: usize, amplitude: f64) -> Result<SpectralField> {
    let modes = match op.basis() {
        Basis::FourierDivFree2d { modes } => modes,
        Basis::SineDirichlet1d => {
            return Err(LabError::Config("kolmogorov forcing needs the 2d basis".into()))
        }
    };
    let target = Mode2d { k1: 0, k2: kf as i32, parity: Parity::Sin };
    let idx = modes
        .iter()
        .position(|m| *m == target)
        .ok_or_else(|| LabError::Config(format!("forcing wavenumber {kf} outside truncation")))?;
    // s_(0,kf) = (-1, 0) √2 sin(kf y)/(2π)
    let mut f = op.zeros();
    f.coeffs[idx] = -amplitude * 2.0 * PI / std::f64::consts::SQRT_2;
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_state_zero_advection() {
        let op = OperatorSpec::fourier_divfree(1.0, 3).unwrap();
        let m = NavierStokes2d::new(1.0, 3, op.zeros(), 10).unwrap();
        assert_eq!(m.advection(&op.zeros()).unwrap().norm(), 0.0);
    }

    #[test]
    fn single_shell_is_steady() {
        // a single Fourier pair ±k is an exact Euler solution: u·∇ω = 0
        let op = OperatorSpec::fourier_divfree(1.0, 3).unwrap();
        let m = NavierStokes2d::new(1.0, 3, op.zeros(), 10).unwrap();
        let mut u = op.zeros();
        u.coeffs[0] = 0.7;
        u.coeffs[1] = -0.3;
        assert!(m.advection(&u).unwrap().norm() < 1e-13);
    }

    #[test]
    fn resolution_rejected_when_aliasing() {
        let op = OperatorSpec::fourier_divfree(1.0, 4).unwrap();
        assert!(NavierStokes2d::new(1.0, 4, op.zeros(), 12).is_err());
        assert!(NavierStokes2d::new(1.0, 4, op.zeros(), 13).is_ok());
    }

    #[test]
    fn kolmogorov_forcing_has_unit_physical_amplitude() {
        let op = OperatorSpec::fourier_divfree(1.0, 4).unwrap();
        let f = kolmogorov_forcing(&op, 2, 1.0).unwrap();
        // ‖sin(2y) e_x‖²_{L²} = 2π²
        assert!((f.norm() - (2.0 * PI * PI).sqrt()).abs() < 1e-12);
        assert!(kolmogorov_forcing(&op, 5, 1.0).is_err());
    }
}
