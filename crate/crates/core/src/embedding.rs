//! Finite-dimensional linear embeddings of attractor samples.
//!
//! Random Gaussian maps stand in for a prevalent set of linear maps. The
//! Hölder exponent of the inverse is read off a low quantile line through
//! the log-log cloud of (image distance, preimage distance) pairs.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::manifold::{graph_row, least_squares, ExtensionRule};
use crate::spectral::{compensated_sum, OperatorSpec, SpectralField};

/// Row-major `N×D` matrix acting on coefficient vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMapSpec {
    pub target_dim: usize,
    pub source_dim: usize,
    pub matrix: Vec<f64>,
    pub seed: Option<u64>,
}

impl LinearMapSpec {
    pub fn from_matrix(target_dim: usize, source_dim: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != target_dim * source_dim {
            return Err(LabError::Dimension { expected: target_dim * source_dim, got: matrix.len() });
        }
        if !matrix.iter().all(|x| x.is_finite()) {
            return Err(LabError::Config("map entries must be finite".into()));
        }
        Ok(Self { target_dim, source_dim, matrix, seed: None })
    }

    /// Orthogonal projection onto the first `n` coordinates.
    pub fn coordinate_projection(n: usize, d: usize) -> Result<Self> {
        let mut m = vec![0.0; n * d];
        for i in 0..n.min(d) {
            m[i * d + i] = 1.0;
        }
        Self::from_matrix(n, d, m)
    }

    pub fn apply(&self, u: &SpectralField) -> Result<Vec<f64>> {
        if u.len() != self.source_dim {
            return Err(LabError::Dimension { expected: self.source_dim, got: u.len() });
        }
        Ok(self
            .matrix
            .chunks_exact(self.source_dim)
            .map(|row| compensated_sum(row.iter().zip(&u.coeffs).map(|(a, b)| a * b)))
            .collect())
    }
}

/// i.i.d. `N(0, 1/N)` entries, reproducible from `seed`.
pub fn random_linear_map(source_dim: usize, target_dim: usize, seed: u64) -> Result<LinearMapSpec> {
    if target_dim == 0 || target_dim > source_dim {
        return Err(LabError::Config(format!(
            "target dimension {target_dim} must lie in 1..={source_dim}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (target_dim as f64).sqrt();
    let matrix = (0..target_dim * source_dim)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            g * scale
        })
        .collect();
    Ok(LinearMapSpec { target_dim, source_dim, matrix, seed: Some(seed) })
}

pub const ENVELOPE_QUANTILE: f64 = 0.05;
pub const MIN_EMBED_POINTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingReport {
    pub theta_hat: f64,
    pub c_hat: f64,
    /// min image distance over min preimage distance
    pub injectivity_margin: f64,
    pub injective: bool,
    pub d_hat: Option<f64>,
    pub theta_bound: Option<f64>,
    pub pair_count: usize,
}

/// Fits `C ‖L u - L v‖^θ ≥ ‖u - v‖` on all sample pairs.
///
/// The lower 5% quantile line `log|Lw| ≈ a log‖w‖ + b` gives `θ = min(1, 1/a)`;
/// `C_hat` is the 95th percentile of `‖w‖ / |Lw|^θ`.
pub fn holder_inverse_estimate(points: &[SpectralField], map: &LinearMapSpec) -> Result<EmbeddingReport> {
    if points.len() < MIN_EMBED_POINTS {
        return Err(LabError::Sample(format!(
            "need at least {MIN_EMBED_POINTS} points, got {}",
            points.len()
        )));
    }
    let images: Vec<Vec<f64>> = points.par_iter().map(|u| map.apply(u)).collect::<Result<_>>()?;
    let n = points.len();
    let per_row: Vec<Vec<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .filter_map(|j| {
                    let pre = points[i].distance(&points[j]);
                    if pre == 0.0 {
                        return None;
                    }
                    let img = compensated_sum(images[i].iter().zip(&images[j]).map(|(a, b)| (a - b) * (a - b))).sqrt();
                    Some((img, pre))
                })
                .collect()
        })
        .collect();
    let pairs: Vec<(f64, f64)> = per_row.into_iter().flatten().collect();
    if pairs.is_empty() {
        return Err(LabError::Sample("all points coincide".into()));
    }
    let min_img = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let min_pre = pairs.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let margin = min_img / min_pre;
    if min_img == 0.0 {
        return Ok(EmbeddingReport {
            theta_hat: 0.0,
            c_hat: f64::INFINITY,
            injectivity_margin: 0.0,
            injective: false,
            d_hat: None,
            theta_bound: None,
            pair_count: pairs.len(),
        });
    }
    // regress x = log image on y = log preimage
    let cloud: Vec<(f64, f64)> = pairs.iter().map(|&(img, pre)| (pre.ln(), img.ln())).collect();
    let (slope, _) = quantile_line(&cloud, ENVELOPE_QUANTILE);
    let theta = if slope > 1.0 { 1.0 / slope } else { 1.0 };
    let mut spread: Vec<f64> = pairs.iter().map(|&(img, pre)| pre.ln() - theta * img.ln()).collect();
    spread.sort_by(|a, b| a.total_cmp(b));
    let c_hat = quantile_sorted(&spread, 1.0 - ENVELOPE_QUANTILE).exp();
    Ok(EmbeddingReport {
        theta_hat: theta,
        c_hat,
        injectivity_margin: margin,
        injective: true,
        d_hat: None,
        theta_bound: None,
        pair_count: pairs.len(),
    })
}

/// Lower-interpolated quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).floor() as usize;
    sorted[idx]
}

fn check_loss(points: &[(f64, f64)], slope: f64, intercept: f64, tau: f64) -> f64 {
    compensated_sum(points.iter().map(|&(x, y)| {
        let r = y - slope * x - intercept;
        if r >= 0.0 {
            tau * r
        } else {
            (tau - 1.0) * r
        }
    }))
}

/// Quantile regression `y ≈ a x + b` at level `tau` for one regressor.
///
/// Pivots through data points: for a fixed pivot the optimal slope is a
/// weighted quantile of the slopes to every other point, and the optimal
/// line passes through that point, which becomes the next pivot. The
/// check loss decreases monotonically and the iteration stops at a vertex.
pub fn quantile_line(points: &[(f64, f64)], tau: f64) -> (f64, f64) {
    assert!(!points.is_empty(), "quantile_line on empty data");
    // start from the tau-quantile of y at the median x
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].0.total_cmp(&points[b].0));
    let mut pivot = order[order.len() / 2];
    let mut best = (0.0, points[pivot].1);
    let mut best_loss = f64::INFINITY;
    for _ in 0..100 {
        let (px, py) = points[pivot];
        let mut cands: Vec<(f64, f64, f64, usize)> = points
            .iter()
            .enumerate()
            .filter(|(_, p)| p.0 != px)
            .map(|(k, &(x, y))| {
                let d = x - px;
                let s = (y - py) / d;
                // weights below / above the candidate slope
                let (lo, hi) = if d > 0.0 { ((1.0 - tau) * d, tau * d) } else { (tau * -d, (1.0 - tau) * -d) };
                (s, lo, hi, k)
            })
            .collect();
        if cands.is_empty() {
            break;
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.3.cmp(&b.3)));
        let total_hi: f64 = cands.iter().map(|c| c.2).sum();
        let mut below = 0.0;
        let mut above = total_hi;
        let mut chosen = cands.len() - 1;
        for (k, c) in cands.iter().enumerate() {
            above -= c.2;
            below += c.1;
            if below >= above {
                chosen = k;
                break;
            }
        }
        let (slope, _, _, next) = cands[chosen];
        let intercept = py - slope * px;
        let loss = check_loss(points, slope, intercept, tau);
        if loss >= best_loss {
            break;
        }
        best_loss = loss;
        best = (slope, intercept);
        if next == pivot {
            break;
        }
        pivot = next;
    }
    best
}

/// Box counts on the leading coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxCount {
    pub d_hat: f64,
    /// `(ε, N(ε))`, in the order given
    pub table: Vec<(f64, usize)>,
    /// scales used in the slope fit
    pub window: Vec<f64>,
}

pub const DEFAULT_BOX_COORDS: usize = 3;
const MIN_BOXES: usize = 16;

/// Box-counting dimension on the first [`DEFAULT_BOX_COORDS`] coordinates.
pub fn box_counting_dimension(points: &[SpectralField], eps_grid: &[f64]) -> Result<BoxCount> {
    box_counting_dimension_with(points, eps_grid, DEFAULT_BOX_COORDS)
}

/// Box-counting dimension of the projection onto the first `coords` coordinates.
///
/// Boxes are anchored at the sample's lower corner. Scales with fewer than
/// 16 occupied boxes (coarse end, dominated by edge effects) or more than a
/// quarter of the points in distinct boxes (fine end, saturated) are
/// dropped; `d_hat` is minus the least-squares slope of `log N` vs `log ε`
/// over the remaining window.
pub fn box_counting_dimension_with(points: &[SpectralField], eps_grid: &[f64], coords: usize) -> Result<BoxCount> {
    if eps_grid.len() < 4 {
        return Err(LabError::Estimation(format!("need at least 4 scales, got {}", eps_grid.len())));
    }
    for w in eps_grid.windows(2) {
        let r = w[0] / w[1];
        if !((r - 2.0).abs() < 1e-9 || (r - 0.5).abs() < 1e-9) {
            return Err(LabError::Estimation("eps grid must be dyadic".into()));
        }
    }
    if !eps_grid.iter().all(|e| *e > 0.0 && e.is_finite()) {
        return Err(LabError::Estimation("eps must be positive".into()));
    }
    if points.is_empty() {
        return Err(LabError::Sample("empty sample".into()));
    }
    let k = coords.min(points[0].len()).max(1);
    let distinct: HashSet<Vec<u64>> = points.iter().map(|p| p.coeffs[..k].iter().map(|x| x.to_bits()).collect()).collect();
    if distinct.len() == 1 {
        let table = eps_grid.iter().map(|&e| (e, 1)).collect();
        return Ok(BoxCount { d_hat: 0.0, table, window: Vec::new() });
    }
    if points.len() < MIN_EMBED_POINTS {
        return Err(LabError::Sample(format!("need at least {MIN_EMBED_POINTS} points, got {}", points.len())));
    }
    let corner: Vec<f64> = (0..k)
        .map(|c| points.iter().map(|p| p.coeffs[c]).fold(f64::INFINITY, f64::min))
        .collect();
    let table: Vec<(f64, usize)> = eps_grid
        .par_iter()
        .map(|&eps| {
            let boxes: HashSet<Vec<i64>> = points
                .iter()
                .map(|p| p.coeffs[..k].iter().zip(&corner).map(|(x, o)| ((x - o) / eps).floor() as i64).collect())
                .collect();
            (eps, boxes.len())
        })
        .collect();
    let cap = points.len() / 4;
    let window: Vec<(f64, usize)> = table.iter().copied().filter(|&(_, c)| c >= MIN_BOXES && c <= cap).collect();
    if window.len() < 2 {
        return Err(LabError::Estimation(format!(
            "only {} scales inside the scaling window",
            window.len()
        )));
    }
    let pts: Vec<(f64, f64)> = window.iter().map(|&(e, c)| (e.ln(), (c as f64).ln())).collect();
    let (slope, _, _) = least_squares(&pts);
    Ok(BoxCount { d_hat: -slope, table, window: window.iter().map(|w| w.0).collect() })
}

/// `ε_k = coarse · 2^{-k}`, `k = 0..count`.
pub fn dyadic_grid(coarse: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| coarse * 0.5f64.powi(k as i32)).collect()
}

/// `1 - 2d/N`, valid only for `N > 2d`.
pub fn theta_bound(d_hat: f64, n: usize) -> Result<f64> {
    if (n as f64) <= 2.0 * d_hat {
        return Err(LabError::BoundInapplicable { n, two_d: 2.0 * d_hat });
    }
    Ok(1.0 - 2.0 * d_hat / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub m: f64,
    /// `(ε, δ_m(ε))`; `None` when no cutoff reaches `ε`
    pub table: Vec<(f64, Option<usize>)>,
    /// least-squares slope of `log δ_m` against `-log ε` over the finer half of the grid
    pub dev_hat: f64,
    /// `d_n` for `n = 1..=D`
    pub residuals: Vec<f64>,
}

/// Upper estimate of the `m`-Lipschitz deviation using spectral spans.
///
/// `δ_m(ε)` is the smallest `n ≥ 1` whose greedy graph with threshold `m`
/// leaves every sample point within `ε`; subspaces are restricted to `P_nH`.
pub fn lipschitz_deviation(points: &[SpectralField], op: &OperatorSpec, m: f64, eps_grid: &[f64]) -> Result<DeviationReport> {
    if !(m > 0.0) {
        return Err(LabError::Domain(format!("m must be positive, got {m}")));
    }
    let d = op.dim();
    let residuals: Vec<f64> = (1..=d)
        .into_par_iter()
        .map(|n| {
            if n == d {
                return Ok(0.0);
            }
            Ok(graph_row(points, op, n, m, ExtensionRule::NearestAnchor)?.d_n)
        })
        .collect::<Result<_>>()?;
    deviation_from_residuals(m, &residuals, eps_grid)
}

/// `δ_m(ε)` from precomputed `d_n`, `n = 1..=residuals.len()`.
pub fn deviation_from_residuals(m: f64, residuals: &[f64], eps_grid: &[f64]) -> Result<DeviationReport> {
    let table: Vec<(f64, Option<usize>)> = eps_grid
        .iter()
        .map(|&eps| (eps, residuals.iter().position(|&r| r < eps).map(|k| k + 1)))
        .collect();
    // the limsup lives at small ε: fit the finer half of the finite entries
    let mut pts: Vec<(f64, f64)> = table
        .iter()
        .filter_map(|&(e, d)| d.map(|d| (-(e.ln()), (d as f64).ln())))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let fine = &pts[pts.len() / 2..];
    let dev_hat = if fine.len() >= 2 { least_squares(fine).0 } else { 0.0 };
    Ok(DeviationReport { m, table, dev_hat, residuals: residuals.to_vec() })
}
