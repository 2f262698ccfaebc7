//! Dirichlet and log-Dirichlet quotients of solution differences, and the
//! empirical log-Lipschitz constants for `A^{1/2}`, `A` and `𝒢`.
//!
//! Every constant here is a maximum over a finite pair set and is reported
//! together with the pair that achieves it.

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::integrator::{PairSet, TrajectoryPair};
use crate::models::VectorField;
use crate::spectral::{OperatorSpec, SpectralField};

/// `log(M²/s²)`.
pub fn log_factor(m: f64, s: f64) -> f64 {
    2.0 * (m / s).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuotientSeries {
    pub times: Vec<f64>,
    /// `‖A^{1/2}w‖² / ‖w‖²`
    pub q: Vec<f64>,
    /// `log(M²/‖w‖²)`
    pub l: Vec<f64>,
    pub qtilde: Vec<f64>,
    pub norm_w: Vec<f64>,
    pub norm_half: Vec<f64>,
    pub norm_full: Vec<f64>,
    pub m: f64,
}

pub fn quotient_series(op: &OperatorSpec, pair: &TrajectoryPair, m: f64) -> Result<QuotientSeries> {
    quotient_series_from(op, &pair.times, &pair.w_path, m)
}

/// Pointwise quotients of a difference path `w(t)`.
pub fn quotient_series_from(op: &OperatorSpec, times: &[f64], w_path: &[SpectralField], m: f64) -> Result<QuotientSeries> {
    if times.len() != w_path.len() {
        return Err(LabError::Dimension { expected: times.len(), got: w_path.len() });
    }
    if !(m > 0.0) {
        return Err(LabError::Domain(format!("M must be positive, got {m}")));
    }
    let degenerate: Vec<usize> = w_path
        .iter()
        .enumerate()
        .filter(|(_, w)| w.norm() == 0.0)
        .map(|(k, _)| k)
        .collect();
    if !degenerate.is_empty() {
        return Err(LabError::DegenerateTime { indices: degenerate });
    }
    let mut s = QuotientSeries {
        times: times.to_vec(),
        q: Vec::new(),
        l: Vec::new(),
        qtilde: Vec::new(),
        norm_w: Vec::new(),
        norm_half: Vec::new(),
        norm_full: Vec::new(),
        m,
    };
    for w in w_path {
        let n0 = op.norm_pow(w, 0.0)?;
        let nh = op.norm_pow(w, 0.5)?;
        let nf = op.norm_pow(w, 1.0)?;
        let q = (nh / n0).powi(2);
        let l = log_factor(m, n0);
        s.q.push(q);
        s.l.push(l);
        s.qtilde.push(q / l);
        s.norm_w.push(n0);
        s.norm_half.push(nh);
        s.norm_full.push(nf);
    }
    Ok(s)
}

impl QuotientSeries {
    /// `Q̃'` by centred differences, one-sided at the ends.
    pub fn qtilde_derivative(&self) -> Vec<f64> {
        let n = self.qtilde.len();
        if n < 2 {
            return vec![0.0; n];
        }
        let (t, y) = (&self.times, &self.qtilde);
        (0..n)
            .map(|k| {
                if k == 0 {
                    (y[1] - y[0]) / (t[1] - t[0])
                } else if k == n - 1 {
                    (y[n - 1] - y[n - 2]) / (t[n - 1] - t[n - 2])
                } else {
                    (y[k + 1] - y[k - 1]) / (t[k + 1] - t[k - 1])
                }
            })
            .collect()
    }
}

/// Parameters of `Q̃' + K₃ Q̃² ≤ K₄`, i.e. `y' + γ y^p ≤ δ` with `p = 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiParams {
    pub k3: f64,
    pub k4: f64,
    pub p: f64,
}

pub const DEFAULT_K3: f64 = 0.5;

impl RiccatiParams {
    pub fn new(k3: f64, k4: f64) -> Result<Self> {
        if !(k3 > 0.0 && k3 < 1.0) {
            return Err(LabError::Domain(format!("K3 must lie in (0,1), got {k3}")));
        }
        if !(k4 >= 0.0) {
            return Err(LabError::Domain(format!("K4 must be >= 0, got {k4}")));
        }
        Ok(Self { k3, k4, p: 2.0 })
    }

    pub fn gamma(&self) -> f64 {
        self.k3
    }

    pub fn delta(&self) -> f64 {
        self.k4
    }

    /// Lower bounds on `K₄` implied by a measured `K₁`, under the two
    /// readings of `4K₁⁴/4(1-K₃)`: `(K₁⁴/(1-K₃), K₁⁴/(4(1-K₃)))`.
    pub fn k4_from_k1(k1: f64, k3: f64) -> (f64, f64) {
        let k = k1.powi(4);
        (k / (1.0 - k3), k / (4.0 * (1.0 - k3)))
    }

    /// Fits `K₄ = max(Q̃' + K₃ Q̃²)` over the series, clipped at zero.
    pub fn fit(series: &[QuotientSeries], k3: f64) -> Result<Self> {
        let mut k4 = 0.0f64;
        for s in series {
            let d = s.qtilde_derivative();
            for (dq, q) in d.iter().zip(&s.qtilde) {
                k4 = k4.max(dq + k3 * q * q);
            }
        }
        Self::new(k3, k4)
    }

    pub fn bound(&self, t: f64) -> Result<f64> {
        riccati_bound(self.gamma(), self.delta(), self.p, t)
    }
}

/// `(δ/γ)^{1/p} + (γ(p-1)t)^{-1/(p-1)}` for `y' + γ y^p ≤ δ`.
pub fn riccati_bound(gamma: f64, delta: f64, p: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(LabError::Domain(format!("t must be > 0, got {t}")));
    }
    if !(p > 1.0) || !(gamma > 0.0) || !(delta >= 0.0) {
        return Err(LabError::Domain(format!("need p > 1, γ > 0, δ >= 0 (p={p}, γ={gamma}, δ={delta})")));
    }
    Ok((delta / gamma).powf(1.0 / p) + (gamma * (p - 1.0) * t).powf(-1.0 / (p - 1.0)))
}

/// Worst violation ratio `Q̃(t) / bound(t - t₀)` over `t > t₀`.
pub fn riccati_excess(series: &QuotientSeries, params: &RiccatiParams) -> Result<f64> {
    let t0 = series.times.first().copied().unwrap_or(0.0);
    let mut worst = 0.0f64;
    for (t, q) in series.times.iter().zip(&series.qtilde).skip(1) {
        worst = worst.max(q / params.bound(t - t0)?);
    }
    Ok(worst)
}

/// A maximum over a pair set with its arg-max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantEstimate {
    pub value: f64,
    pub worst_pair: Option<(usize, usize)>,
    pub used: usize,
    pub skipped: usize,
}

/// Deterministic parallel max of `f(i, j)` over the index pairs; `None` skips.
fn max_over_pairs<F>(set: &PairSet, f: F) -> Result<ConstantEstimate>
where
    F: Fn(usize, usize) -> Result<Option<f64>> + Sync,
{
    let values: Vec<Option<f64>> = set
        .pairs
        .par_iter()
        .map(|&(i, j)| f(i, j))
        .collect::<Result<_>>()?;
    let mut est = ConstantEstimate { value: 0.0, worst_pair: None, used: 0, skipped: 0 };
    for (v, &pair) in values.iter().zip(&set.pairs) {
        match v {
            Some(x) => {
                est.used += 1;
                if est.worst_pair.is_none() || *x > est.value {
                    est.value = *x;
                    est.worst_pair = Some(pair);
                }
            }
            None => est.skipped += 1,
        }
    }
    if est.used == 0 {
        return Err(LabError::Sample("no nondegenerate pairs".into()));
    }
    Ok(est)
}

fn check_m(m: f64) -> Result<()> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(LabError::Domain(format!("M must be positive and finite, got {m}")));
    }
    Ok(())
}

/// `C_half = max ‖A^{1/2}w‖² / (‖w‖² log(M²/‖w‖²))`.
pub fn verify_h1_bound(op: &OperatorSpec, set: &PairSet, m: f64) -> Result<ConstantEstimate> {
    check_m(m)?;
    max_over_pairs(set, |i, j| {
        let w = &set.points[i] - &set.points[j];
        let n0 = op.norm_pow(&w, 0.0)?;
        if n0 == 0.0 {
            return Ok(None);
        }
        let nh = op.norm_pow(&w, 0.5)?;
        Ok(Some(nh * nh / (n0 * n0 * log_factor(m, n0))))
    })
}

/// `C₁ = max ‖Aw‖² / (‖A^{1/2}w‖² log(M₁²/‖A^{1/2}w‖²))`, the same inequality one level up.
pub fn verify_h1_level(op: &OperatorSpec, set: &PairSet, m1: f64) -> Result<ConstantEstimate> {
    check_m(m1)?;
    max_over_pairs(set, |i, j| {
        let w = &set.points[i] - &set.points[j];
        let nh = op.norm_pow(&w, 0.5)?;
        if nh == 0.0 {
            return Ok(None);
        }
        let nf = op.norm_pow(&w, 1.0)?;
        Ok(Some(nf * nf / (nh * nh * log_factor(m1, nh))))
    })
}

/// `A` log-Lipschitz constant with its chained comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullLogLip {
    pub c_full: ConstantEstimate,
    pub c0: ConstantEstimate,
    pub c1: ConstantEstimate,
    pub m0: f64,
    pub m1: f64,
    /// `max √(L₀ L₁') / L₁` over the pairs; the chain gives `C_full ≤ √(C₀C₁)·chain_factor`
    pub chain_factor: f64,
}

impl FullLogLip {
    pub fn chained_bound(&self) -> f64 {
        (self.c0.value * self.c1.value).sqrt()
    }

    /// `C_full ≤ (1 + slack) √(C₀ C₁)`.
    pub fn chain_holds(&self, slack: f64) -> bool {
        self.c_full.value <= (1.0 + slack) * self.chained_bound()
    }
}

/// `C_full = max ‖Aw‖ / (‖w‖ log(M₁²/‖w‖²))`, plus `C₀` at the `L²` level with
/// `M₀` and `C₁` at the `H¹` level with `M₁`.
pub fn verify_loglip_a(op: &OperatorSpec, set: &PairSet, m0: f64, m1: f64) -> Result<FullLogLip> {
    check_m(m0)?;
    check_m(m1)?;
    let c_full = max_over_pairs(set, |i, j| {
        let w = &set.points[i] - &set.points[j];
        let n0 = op.norm_pow(&w, 0.0)?;
        if n0 == 0.0 {
            return Ok(None);
        }
        let nf = op.norm_pow(&w, 1.0)?;
        Ok(Some(nf / (n0 * log_factor(m1, n0))))
    })?;
    let c0 = verify_h1_bound(op, set, m0)?;
    let c1 = verify_h1_level(op, set, m1)?;
    let chain = max_over_pairs(set, |i, j| {
        let w = &set.points[i] - &set.points[j];
        let n0 = op.norm_pow(&w, 0.0)?;
        if n0 == 0.0 {
            return Ok(None);
        }
        let nh = op.norm_pow(&w, 0.5)?;
        let l0 = log_factor(m0, n0);
        let l1h = log_factor(m1, nh);
        let l1 = log_factor(m1, n0);
        Ok(Some((l0 * l1h).sqrt() / l1))
    })?;
    Ok(FullLogLip { c_full, c0, c1, m0, m1, chain_factor: chain.value })
}

/// Vector-field log-Lipschitz constant and its triangle-inequality bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldLogLip {
    pub c_field: ConstantEstimate,
    /// `max ‖F(u)-F(v)‖ / (‖w‖ log(M₁²/‖w‖²))`
    pub c_nonlinear: ConstantEstimate,
    /// `max ‖A^α w‖ / (‖w‖ log(M₁²/‖w‖²))`, the log slack that multiplies `K_hat`
    pub log_slack: f64,
}

impl FieldLogLip {
    /// `C_full + K_hat · log_slack`.
    pub fn triangle_bound(&self, c_full: f64, k_hat: f64) -> f64 {
        c_full + k_hat * self.log_slack
    }
}

/// `C_field = max ‖𝒢(u)-𝒢(v)‖ / (‖w‖ log(M₁²/‖w‖²))`.
pub fn verify_field_loglip(field: &dyn VectorField, set: &PairSet, m1: f64, alpha: f64) -> Result<FieldLogLip> {
    check_m(m1)?;
    let op = field.operator();
    let images: Vec<(SpectralField, SpectralField)> = set
        .points
        .par_iter()
        .map(|u| Ok((field.vector_field(u)?, field.nonlinear_term(u)?)))
        .collect::<Result<_>>()?;
    let c_field = max_over_pairs(set, |i, j| {
        let w = &set.points[i] - &set.points[j];
        let n0 = w.norm();
        if n0 == 0.0 {
            return Ok(None);
        }
        let (gu, gv) = (&images[i].0, &images[j].0);
        Ok(Some(gu.distance(gv) / (n0 * log_factor(m1, n0))))
    })?;
    let c_nonlinear = max_over_pairs(set, |i, j| {
        let w = &set.points[i] - &set.points[j];
        let n0 = w.norm();
        if n0 == 0.0 {
            return Ok(None);
        }
        let (fu, fv) = (&images[i].1, &images[j].1);
        Ok(Some(fu.distance(fv) / (n0 * log_factor(m1, n0))))
    })?;
    let slack = max_over_pairs(set, |i, j| {
        let w = &set.points[i] - &set.points[j];
        let n0 = w.norm();
        if n0 == 0.0 {
            return Ok(None);
        }
        Ok(Some(op.norm_pow(&w, alpha)? / (n0 * log_factor(m1, n0))))
    })?;
    Ok(FieldLogLip { c_field, c_nonlinear, log_slack: slack.value })
}

/// All log-Lipschitz constants for one pair set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLipReport {
    pub m0: f64,
    pub m1: f64,
    pub c_half: ConstantEstimate,
    pub full: FullLogLip,
    pub field: FieldLogLip,
    pub pair_count: usize,
}

pub fn loglip_report(field: &dyn VectorField, set: &PairSet, m0: f64, m1: f64) -> Result<LogLipReport> {
    let op = field.operator();
    let c_half = verify_h1_bound(op, set, m0)?;
    let full = verify_loglip_a(op, set, m0, m1)?;
    let fld = verify_field_loglip(field, set, m1, 0.5)?;
    Ok(LogLipReport { m0, m1, c_half, full, field: fld, pair_count: set.pairs.len() })
}
