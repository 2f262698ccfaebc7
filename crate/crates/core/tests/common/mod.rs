//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use attractor_lab::SpectralField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian coefficients with standard deviation `scale(j)` on mode `j` (0-based).
pub fn random_field(rng: &mut ChaCha8Rng, dim: usize, scale: impl Fn(usize) -> f64) -> SpectralField {
    SpectralField::new((0..dim).map(|j| scale(j) * rng.sample::<f64, _>(StandardNormal)).collect())
}

/// Adaptive Simpson on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 48)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `ϑ_n / (K C)` by quadrature of the definition, independent of the closed form.
///
/// The head `∫₀^τ (e t/α)^{-α} e^{-μt} dt` has a `t^{-α}` singularity; the
/// substitution `t = τ x^{1/(1-α)}` makes it smooth on `[0, 1]`. The tail
/// is integrated over 60 e-folds past the knot.
pub fn theta_quadrature(mu: f64, alpha: f64, lambda: f64) -> f64 {
    let tau = alpha / lambda;
    let e = std::f64::consts::E;
    let s = 1.0 - alpha;
    let pref = (e / alpha).powf(-alpha) * tau.powf(s) / s;
    let head = adaptive_simpson(&|x: f64| pref * (-mu * tau * x.powf(1.0 / s)).exp(), 0.0, 1.0, 1e-14);
    let b = |t: f64| {
        let bt = if t <= tau { (e * t / alpha).powf(-alpha) } else { lambda.powf(alpha) * (-lambda * t).exp() };
        bt * (-mu * t).exp()
    };
    let end = tau + 60.0 / (lambda + mu);
    let tail = adaptive_simpson(&b, tau, end, 1e-15);
    head + tail
}

/// Closed 1-Lipschitz graph over the first three coordinates of `R^dim`.
///
/// Tail coordinate `c` is `w_c sin(a_c · p)` with `Σ w_c² |a_c|² < 1`.
pub fn graph_over_p3(count: usize, dim: usize, seed: u64) -> Vec<SpectralField> {
    let mut r = rng(seed);
    let tail = dim - 3;
    let dirs: Vec<[f64; 3]> = (0..tail)
        .map(|_| {
            let v: [f64; 3] = [r.sample(StandardNormal), r.sample(StandardNormal), r.sample(StandardNormal)];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            [v[0] / n, v[1] / n, v[2] / n]
        })
        .collect();
    let w = 0.9 / (tail as f64).sqrt();
    (0..count)
        .map(|_| {
            let p: [f64; 3] = [r.random::<f64>(), r.random::<f64>(), r.random::<f64>()];
            let mut c = p.to_vec();
            for d in &dirs {
                c.push(w * (d[0] * p[0] + d[1] * p[1] + d[2] * p[2]).sin());
            }
            SpectralField::new(c)
        })
        .collect()
}

/// Smooth closed curve `s ↦ (j^{-2} cos js, j^{-2} sin js)_j` in `R^dim`.
pub fn closed_curve(count: usize, dim: usize) -> Vec<SpectralField> {
    (0..count)
        .map(|k| {
            let s = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            SpectralField::new(
                (0..dim)
                    .map(|c| {
                        let j = (c / 2 + 1) as f64;
                        let a = 1.0 / (j * j);
                        if c % 2 == 0 {
                            a * (j * s).cos()
                        } else {
                            a * (j * s).sin()
                        }
                    })
                    .collect(),
            )
        })
        .collect()
}
