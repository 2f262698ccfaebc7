//! Viscous Burgers equation on `[0, π]` with homogeneous Dirichlet data.
//!
//! The state is expanded in `sqrt(2/π) sin(jx)`. The quadratic term `-u u_x`
//! is evaluated on the odd periodic extension over `[0, 2π)` and projected
//! back onto the sine modes; with `2R > 3D` grid points per half period the
//! product is alias-free for every retained mode.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{LabError, Result};
use crate::spectral::{OperatorSpec, SpectralField};

pub struct Burgers {
    op: OperatorSpec,
    forcing: SpectralField,
    /// grid points on `[0, π)`; the FFT length is twice this
    resolution: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Burgers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Burgers")
            .field("dim", &self.op.dim())
            .field("resolution", &self.resolution)
            .finish()
    }
}

/// Smallest half-period grid that keeps the quadratic product alias-free.
pub fn min_resolution(dim: usize) -> usize {
    3 * dim / 2 + 1
}

impl Burgers {
    pub fn new(nu: f64, dim: usize, forcing: SpectralField, resolution: usize) -> Result<Self> {
        let op = OperatorSpec::sine_dirichlet(nu, dim)?;
        if forcing.len() != dim {
            return Err(LabError::Dimension { expected: dim, got: forcing.len() });
        }
        if 2 * resolution <= 3 * dim {
            return Err(LabError::Config(format!(
                "burgers resolution {resolution} too small for {dim} modes (need > {})",
                3 * dim / 2
            )));
        }
        let mut planner = FftPlanner::new();
        let n = 2 * resolution;
        Ok(Self {
            op,
            forcing,
            resolution,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn operator(&self) -> &OperatorSpec {
        &self.op
    }

    pub fn forcing(&self) -> &SpectralField {
        &self.forcing
    }

    /// Coefficients of `-u u_x` (no forcing).
    pub fn advection(&self, u: &SpectralField) -> Result<SpectralField> {
        let dim = self.op.dim();
        if u.len() != dim {
            return Err(LabError::Dimension { expected: dim, got: u.len() });
        }
        let n = 2 * self.resolution;
        let norm = (2.0 / PI).sqrt();
        let mut field = vec![Complex64::new(0.0, 0.0); n];
        let mut deriv = vec![Complex64::new(0.0, 0.0); n];
        for (idx, a) in u.coeffs.iter().enumerate() {
            let j = idx + 1;
            let b = norm * a;
            // b sin(jx) = (-ib/2) e^{ijx} + (ib/2) e^{-ijx}
            field[j] = Complex64::new(0.0, -0.5 * b);
            field[n - j] = Complex64::new(0.0, 0.5 * b);
            // b j cos(jx)
            let c = 0.5 * b * j as f64;
            deriv[j] = Complex64::new(c, 0.0);
            deriv[n - j] = Complex64::new(c, 0.0);
        }
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        self.inverse.process_with_scratch(&mut field, &mut scratch);
        self.inverse.process_with_scratch(&mut deriv, &mut scratch);

        let mut prod: Vec<Complex64> = field
            .iter()
            .zip(&deriv)
            .map(|(u, ux)| Complex64::new(-u.re * ux.re, 0.0))
            .collect();
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        self.forward.process_with_scratch(&mut prod, &mut scratch);

        // g = Σ c_j sin(jx)  =>  G_j = -i N c_j / 2; project on sqrt(2/π) sin(jx)
        let to_orthonormal = (PI / 2.0).sqrt();
        let coeffs = (1..=dim)
            .map(|j| -2.0 * prod[j].im / n as f64 * to_orthonormal)
            .collect();
        Ok(SpectralField::new(coeffs))
    }
}

/// Orthonormal coefficient for a physical amplitude `c` on `sin(jx)`.
pub fn sine_amplitude_to_coeff(c: f64) -> f64 {
    c * (PI / 2.0).sqrt()
}
