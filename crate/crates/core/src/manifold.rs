//! Graph structure of attractor samples over spectral subspaces.
//!
//! Two families of checks live here. The first bounds how far the tail
//! `Q_n u` can move relative to `u` (the contraction factor `ϑ_n`, the
//! sampled graph ratio, and the `A^β` Lipschitz ratio). The second builds
//! an explicit 1-Lipschitz graph `Φ_n : P_nH → Q_nH` from a greedily
//! maximal subset of the sample and measures how far the remaining points
//! sit from it as `n` grows.

use rayon::prelude::*;
use statrs::function::gamma::gamma_li;

use crate::error::{LabError, Result};
use crate::spectral::{compensated_sum, OperatorSpec, SpectralField};

/// Flow and nonlinearity constants entering `ϑ_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowLipschitzParams {
    pub c: f64,
    pub mu: f64,
    pub k: f64,
    pub alpha: f64,
}

impl FlowLipschitzParams {
    pub fn new(c: f64, mu: f64, k: f64, alpha: f64) -> Result<Self> {
        if !(c >= 1.0) || !(mu > 0.0) || !(k >= 0.0) || !(alpha > 0.0 && alpha < 1.0) {
            return Err(LabError::Domain(format!(
                "need C >= 1, mu > 0, K >= 0, alpha in (0,1); got C={c}, mu={mu}, K={k}, alpha={alpha}"
            )));
        }
        Ok(Self { c, mu, k, alpha })
    }
}

/// `ϑ_n = K C ∫₀^∞ b_{n,α}(t) e^{-μt} dt`, split at the knot `τ = α/λ_{n+1}`.
///
/// Below the knot the integrand is `(e t/α)^{-α} e^{-μt}`, which integrates
/// to `(e/α)^{-α} μ^{α-1} γ(1-α, μτ)`; above it the integral is
/// `λ^α e^{-(λ+μ)τ} / (λ+μ)`.
pub fn theta_n(params: &FlowLipschitzParams, lambda_next: f64) -> Result<f64> {
    if !(lambda_next > 0.0 && lambda_next.is_finite()) {
        return Err(LabError::Domain(format!("lambda_(n+1) must be positive, got {lambda_next}")));
    }
    let FlowLipschitzParams { c, mu, k, alpha } = *params;
    let knot = alpha / lambda_next;
    let s = 1.0 - alpha;
    let head = (std::f64::consts::E / alpha).powf(-alpha) * mu.powf(-s) * gamma_li(s, mu * knot);
    let tail = lambda_next.powf(alpha) * (-(lambda_next + mu) * knot).exp() / (lambda_next + mu);
    Ok(k * c * (head + tail))
}

/// Result of the sampled graph inequality `‖Q_n w‖_α ≤ r ‖P_n w‖_α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphRatio {
    /// max over pairs; `∞` when some pair has `P_n w = 0 ≠ Q_n w`
    pub ratio: f64,
    /// max over the pairs with `P_n w ≠ 0`
    pub finite_ratio: f64,
    pub sentinel_pairs: usize,
}

impl GraphRatio {
    /// `c = 1/(1 - ratio)` in `‖w‖_α ≤ c ‖P_n w‖_α`, when `ratio < 1`.
    pub fn implied_constant(&self) -> Option<f64> {
        (self.ratio < 1.0).then(|| 1.0 / (1.0 - self.ratio))
    }
}

pub fn graph_ratio_check(points: &[SpectralField], op: &OperatorSpec, n: usize, alpha: f64) -> Result<GraphRatio> {
    check_cutoff(op, n)?;
    check_points(points, op)?;
    let d = op.dim();
    let rows: Vec<(f64, usize)> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut best = 0.0f64;
            let mut sentinels = 0usize;
            for j in (i + 1)..points.len() {
                let w = &points[i] - &points[j];
                let low = op.norm_pow_sq_range(&w.coeffs, alpha, 0..n).sqrt();
                let high = op.norm_pow_sq_range(&w.coeffs, alpha, n..d).sqrt();
                if low == 0.0 {
                    if high > 0.0 {
                        sentinels += 1;
                    }
                    continue;
                }
                best = best.max(high / low);
            }
            (best, sentinels)
        })
        .collect();
    let finite_ratio = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let sentinel_pairs = rows.iter().map(|r| r.1).sum();
    Ok(GraphRatio {
        ratio: if sentinel_pairs > 0 { f64::INFINITY } else { finite_ratio },
        finite_ratio,
        sentinel_pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbetaCheck {
    /// `max ‖A^β w‖_α / ‖w‖_α`
    pub ratio: f64,
    /// set when `α + β ≥ 1`, outside the range where the bound is claimed
    pub outside_range: bool,
    pub skipped: usize,
}

pub fn abeta_lipschitz_check(points: &[SpectralField], op: &OperatorSpec, alpha: f64, beta: f64) -> Result<AbetaCheck> {
    check_points(points, op)?;
    if !(alpha >= 0.0 && beta >= 0.0) {
        return Err(LabError::Domain("alpha and beta must be >= 0".into()));
    }
    let rows: Vec<(f64, usize)> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut best = 0.0f64;
            let mut skipped = 0;
            for j in (i + 1)..points.len() {
                let w = &points[i] - &points[j];
                let base = op.norm_pow_unchecked(&w.coeffs, alpha);
                if base == 0.0 {
                    skipped += 1;
                    continue;
                }
                best = best.max(op.norm_pow_unchecked(&w.coeffs, alpha + beta) / base);
            }
            (best, skipped)
        })
        .collect();
    Ok(AbetaCheck {
        ratio: rows.iter().map(|r| r.0).fold(0.0, f64::max),
        outside_range: alpha + beta >= 1.0,
        skipped: rows.iter().map(|r| r.1).sum(),
    })
}

fn check_cutoff(op: &OperatorSpec, n: usize) -> Result<()> {
    if n >= op.dim() {
        return Err(LabError::Index { index: n, limit: op.dim() - 1 });
    }
    Ok(())
}

fn check_points(points: &[SpectralField], op: &OperatorSpec) -> Result<()> {
    if points.is_empty() {
        return Err(LabError::Sample("empty sample".into()));
    }
    for p in points {
        if p.len() != op.dim() {
            return Err(LabError::Dimension { expected: op.dim(), got: p.len() });
        }
    }
    Ok(())
}

fn split_norms(a: &[f64], b: &[f64], n: usize) -> (f64, f64) {
    let low = compensated_sum(a[..n].iter().zip(&b[..n]).map(|(x, y)| (x - y) * (x - y))).sqrt();
    let high = compensated_sum(a[n..].iter().zip(&b[n..]).map(|(x, y)| (x - y) * (x - y))).sqrt();
    (low, high)
}

/// `‖Q_n(u-v)‖ ≤ m ‖P_n(u-v)‖` in the plain norm.
pub fn relation_holds(u: &SpectralField, v: &SpectralField, n: usize, m: f64) -> bool {
    let (low, high) = split_norms(&u.coeffs, &v.coeffs, n);
    high <= m * low
}

/// Greedy maximal subset for the relation with threshold 1.
pub fn maximal_subset(points: &[SpectralField], op: &OperatorSpec, n: usize) -> Result<Vec<usize>> {
    maximal_subset_with(points, op, n, 1.0)
}

/// Scans in order and keeps a point iff it satisfies the relation against
/// every point already kept. Returns kept indices in scan order.
pub fn maximal_subset_with(points: &[SpectralField], op: &OperatorSpec, n: usize, m: f64) -> Result<Vec<usize>> {
    check_points(points, op)?;
    if n > op.dim() {
        return Err(LabError::Index { index: n, limit: op.dim() });
    }
    let mut kept: Vec<usize> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if kept.iter().all(|&k| relation_holds(p, &points[k], n, m)) {
            kept.push(i);
        }
    }
    Ok(kept)
}

/// Rejected indices that could still be added to `subset`; empty when the
/// subset is maximal.
pub fn maximality_violations(points: &[SpectralField], subset: &[usize], n: usize, m: f64) -> Vec<usize> {
    let mut member = vec![false; points.len()];
    for &i in subset {
        member[i] = true;
    }
    (0..points.len())
        .filter(|&r| !member[r])
        .filter(|&r| subset.iter().all(|&x| relation_holds(&points[r], &points[x], n, m)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionRule {
    /// tail of the nearest anchor in `P_n` distance; worst-case constant 2
    #[default]
    NearestAnchor,
    /// upper McShane extension per tail coordinate; vector constant `≤ √(tail dim)`
    McshaneCoordinatewise,
}

/// A Lipschitz graph over `P_nH` interpolating the anchors `(P_n u, Q_n u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphModel {
    pub n: usize,
    pub dim: usize,
    /// `(p_i, q_i)`; `p_i` has length `n`, `q_i` length `dim - n`
    pub anchors: Vec<(Vec<f64>, Vec<f64>)>,
    /// sample indices of the anchors
    pub sources: Vec<usize>,
    /// certified `max ‖Δq‖/‖Δp‖` on the anchors
    pub lipschitz_m: f64,
    /// relation threshold used to select the anchors
    pub threshold: f64,
    pub extension_rule: ExtensionRule,
}

pub const CERTIFICATE_TOLERANCE: f64 = 1e-12;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    compensated_sum(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y))).sqrt()
}

/// Builds anchors from `subset` with threshold 1.
pub fn build_graph(points: &[SpectralField], subset: &[usize], n: usize, rule: ExtensionRule) -> Result<GraphModel> {
    build_graph_with(points, subset, n, 1.0, rule)
}

pub fn build_graph_with(
    points: &[SpectralField],
    subset: &[usize],
    n: usize,
    threshold: f64,
    rule: ExtensionRule,
) -> Result<GraphModel> {
    if subset.is_empty() {
        return Err(LabError::Sample("empty subset".into()));
    }
    let dim = points[subset[0]].len();
    if n > dim {
        return Err(LabError::Index { index: n, limit: dim });
    }
    let mut anchors: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut sources = Vec::new();
    for &i in subset {
        let u = &points[i];
        let (p, q) = (u.coeffs[..n].to_vec(), u.coeffs[n..].to_vec());
        if let Some((_, q_prev)) = anchors.iter().find(|(pa, _)| *pa == p) {
            if *q_prev != q {
                return Err(LabError::Consistency(format!("anchor {i} repeats a base point with a different tail")));
            }
            continue;
        }
        anchors.push((p, q));
        sources.push(i);
    }
    let mut lip = 0.0f64;
    for a in 0..anchors.len() {
        for b in (a + 1)..anchors.len() {
            let dp = dist(&anchors[a].0, &anchors[b].0);
            let dq = dist(&anchors[a].1, &anchors[b].1);
            lip = lip.max(dq / dp);
        }
    }
    if lip > threshold * (1.0 + CERTIFICATE_TOLERANCE) {
        return Err(LabError::Consistency(format!(
            "anchor Lipschitz constant {lip} exceeds threshold {threshold}"
        )));
    }
    Ok(GraphModel { n, dim, anchors, sources, lipschitz_m: lip, threshold, extension_rule: rule })
}

impl GraphModel {
    /// `Φ_n(p)` under the extension rule.
    pub fn evaluate(&self, p: &[f64]) -> Vec<f64> {
        match self.extension_rule {
            ExtensionRule::NearestAnchor => {
                let mut best = (f64::INFINITY, 0usize);
                for (k, (pa, _)) in self.anchors.iter().enumerate() {
                    let d = dist(p, pa);
                    if d < best.0 {
                        best = (d, k);
                    }
                }
                self.anchors[best.1].1.clone()
            }
            ExtensionRule::McshaneCoordinatewise => {
                let dists: Vec<f64> = self.anchors.iter().map(|(pa, _)| dist(p, pa)).collect();
                (0..self.dim - self.n)
                    .map(|c| {
                        self.anchors
                            .iter()
                            .zip(&dists)
                            .map(|((_, q), d)| q[c] + self.threshold * d)
                            .fold(f64::INFINITY, f64::min)
                    })
                    .collect()
            }
        }
    }

    /// Worst-case Lipschitz constant of the extension off the anchors.
    pub fn extension_constant(&self) -> f64 {
        match self.extension_rule {
            ExtensionRule::NearestAnchor => 2.0 * self.threshold,
            ExtensionRule::McshaneCoordinatewise => self.threshold * ((self.dim - self.n) as f64).sqrt(),
        }
    }
}

/// Distances of off-graph sample points at one cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRow {
    pub n: usize,
    pub lambda_next: f64,
    pub subset_size: usize,
    /// `max_u min(extension residual, nearest-anchor distance)`
    pub d_n: f64,
    /// `max_u min_{v∈X} ‖u - v‖`
    pub d_n_free: f64,
    /// `max_u ‖Q_n u - Φ_n(P_n u)‖`
    pub d_n_extension: f64,
}

pub fn graph_distance(points: &[SpectralField], model: &GraphModel, op: &OperatorSpec) -> Result<DecayRow> {
    check_points(points, op)?;
    let n = model.n;
    let mut member = vec![false; points.len()];
    for &i in &model.sources {
        member[i] = true;
    }
    // duplicates of anchors are on the graph as well
    let anchors: Vec<&SpectralField> = model.sources.iter().map(|&i| &points[i]).collect();
    let residuals: Vec<(f64, f64, f64)> = (0..points.len())
        .into_par_iter()
        .filter(|&i| !member[i])
        .map(|i| {
            let u = &points[i];
            let ext = dist(&u.coeffs[n..], &model.evaluate(&u.coeffs[..n]));
            let free = anchors.iter().map(|v| u.distance(v)).fold(f64::INFINITY, f64::min);
            (ext.min(free), free, ext)
        })
        .collect();
    let max = |k: usize| {
        residuals
            .iter()
            .map(|r| match k {
                0 => r.0,
                1 => r.1,
                _ => r.2,
            })
            .fold(0.0, f64::max)
    };
    Ok(DecayRow {
        n,
        lambda_next: op.lambda_next(n).unwrap_or(f64::INFINITY),
        subset_size: model.sources.len(),
        d_n: max(0),
        d_n_free: max(1),
        d_n_extension: max(2),
    })
}

/// Greedy subset, graph and distance for one cutoff and threshold.
pub fn graph_row(points: &[SpectralField], op: &OperatorSpec, n: usize, threshold: f64, rule: ExtensionRule) -> Result<DecayRow> {
    let subset = maximal_subset_with(points, op, n, threshold)?;
    let model = build_graph_with(points, &subset, n, threshold, rule)?;
    graph_distance(points, &model, op)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualKind {
    Combined,
    ExtensionFree,
}

impl DecayRow {
    pub fn residual(&self, kind: ResidualKind) -> f64 {
        match kind {
            ResidualKind::Combined => self.d_n,
            ResidualKind::ExtensionFree => self.d_n_free,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub rows_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecayOutcome {
    Fit(DecayFit),
    /// every `d_n` vanished: the sample already lies on each graph
    PerfectGraph,
}

/// Least-squares fit of `log d_n` against `λ_{n+1}` over rows with `d_n > 0`.
pub fn decay_fit(rows: &[DecayRow], kind: ResidualKind) -> Result<DecayOutcome> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.residual(kind) > 0.0)
        .map(|r| (r.lambda_next, r.residual(kind).ln()))
        .collect();
    if pts.is_empty() && !rows.is_empty() {
        return Ok(DecayOutcome::PerfectGraph);
    }
    if pts.len() < 3 {
        return Err(LabError::Estimation(format!("need 3 rows with d_n > 0, got {}", pts.len())));
    }
    let (slope, intercept, r2) = least_squares(&pts);
    Ok(DecayOutcome::Fit(DecayFit { slope, intercept, r2, rows_used: pts.len() }))
}

/// Ordinary least squares `y = a x + b`, returning `(a, b, R²)`.
pub fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return (0.0, my, 0.0);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

/// Rates of the two distance normalisations for a log-Lipschitz constant `C`:
/// `(-1/(√2 C), -1/(2√2 C))` for `2M₁²e^{-λ/(√2C)}` and its square root.
pub fn predicted_slopes(c: f64) -> (f64, f64) {
    let s = -1.0 / (std::f64::consts::SQRT_2 * c);
    (s, 0.5 * s)
}

/// Full sweep over cutoffs with its fit.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub rows: Vec<DecayRow>,
    pub fit: Result<DecayOutcome>,
}

pub fn decay_sweep(
    points: &[SpectralField],
    op: &OperatorSpec,
    cutoffs: &[usize],
    rule: ExtensionRule,
    kind: ResidualKind,
) -> Result<DecayReport> {
    let mut sorted = cutoffs.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let rows = sorted
        .iter()
        .map(|&n| {
            check_cutoff(op, n)?;
            graph_row(points, op, n, 1.0, rule)
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = decay_fit(&rows, kind);
    Ok(DecayReport { rows, fit })
}
