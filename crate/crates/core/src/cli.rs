//! `atrlab` command-line runner.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::archive::SnapshotArchive;
use crate::config::ExperimentConfig;
use crate::embedding::{
    box_counting_dimension_with, dyadic_grid, holder_inverse_estimate, lipschitz_deviation, random_linear_map,
    theta_bound,
};
use crate::error::{LabError, Result};
use crate::integrator::{build_pair_set, sample_attractor, PairSet};
use crate::manifold::{decay_sweep, predicted_slopes, DecayOutcome, ResidualKind};
use crate::models::{Model, VectorField};
use crate::quotients::{verify_field_loglip, verify_h1_bound, verify_loglip_a, ConstantEstimate};
use crate::spectral::{OperatorSpec, SpectralField};

pub const ARCHIVE_NAME: &str = "snapshots.atrl";
pub const QUOTIENTS_CSV: &str = "quotients.csv";
pub const MANIFOLD_CSV: &str = "manifold.csv";
pub const EMBED_CSV: &str = "embed.csv";

#[derive(Debug, Parser)]
#[command(name = "atrlab", version, about = "Attractor sampling and inequality checks for dissipative PDEs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML experiment file; built-in defaults when omitted
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// output directory
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// overrides the integrator seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// worker threads (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the attractor and write a snapshot archive
    Simulate,
    /// Log-Lipschitz constants of A and the vector field
    Quotients(ArchiveArg),
    /// Graph-approximation residuals against the spectral cutoff
    Manifold(ArchiveArg),
    /// Hölder exponents of random linear embeddings
    Embed(ArchiveArg),
    /// simulate followed by every analysis
    Report,
}

#[derive(Debug, Args)]
pub struct ArchiveArg {
    /// snapshot archive (default: OUT/snapshots.atrl)
    #[arg(long)]
    pub archive: Option<PathBuf>,
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.integrator.seed = seed;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(g.threads.unwrap_or(0))
        .build()
        .map_err(|e| LabError::Config(format!("thread pool: {e}")))?;
    fs::create_dir_all(&g.out)?;
    let archive_path = |a: &ArchiveArg| a.archive.clone().unwrap_or_else(|| g.out.join(ARCHIVE_NAME));
    pool.install(|| match &cli.command {
        Command::Simulate => {
            print!("{}", cmd_simulate(&cfg, &g.out.join(ARCHIVE_NAME))?);
            Ok(())
        }
        Command::Quotients(a) => {
            let csv = cmd_quotients(&SnapshotArchive::read(&archive_path(a))?, &cfg)?;
            fs::write(g.out.join(QUOTIENTS_CSV), csv)?;
            Ok(())
        }
        Command::Manifold(a) => {
            let csv = cmd_manifold(&SnapshotArchive::read(&archive_path(a))?, &cfg)?;
            fs::write(g.out.join(MANIFOLD_CSV), csv)?;
            Ok(())
        }
        Command::Embed(a) => {
            let csv = cmd_embed(&SnapshotArchive::read(&archive_path(a))?, &cfg)?;
            fs::write(g.out.join(EMBED_CSV), csv)?;
            Ok(())
        }
        Command::Report => {
            let path = g.out.join(ARCHIVE_NAME);
            print!("{}", cmd_simulate(&cfg, &path)?);
            let archive = SnapshotArchive::read(&path)?;
            fs::write(g.out.join(QUOTIENTS_CSV), cmd_quotients(&archive, &cfg)?)?;
            fs::write(g.out.join(MANIFOLD_CSV), cmd_manifold(&archive, &cfg)?)?;
            fs::write(g.out.join(EMBED_CSV), cmd_embed(&archive, &cfg)?)?;
            Ok(())
        }
    })
}

/// Fixed 17-significant-digit rendering.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), fmt_f64)
}

fn fmt_pair(p: Option<(usize, usize)>) -> String {
    p.map_or_else(|| "NA,NA".to_string(), |(i, j)| format!("{i},{j}"))
}

/// Runs the sampler, writes the archive and returns the summary text.
pub fn cmd_simulate(cfg: &ExperimentConfig, path: &Path) -> Result<String> {
    let count = cfg.integrator.sample_count().max(2);
    let sample = sample_attractor(&cfg.model, &cfg.integrator, count)?;
    let op = cfg.model.operator()?;
    let archive = SnapshotArchive::new(cfg.model.model_id, sample.points.clone())?;
    archive.write(path)?;
    let mut s = String::new();
    writeln!(s, "snapshots {}", sample.len()).unwrap();
    writeln!(s, "sup_l2 {}", fmt_f64(sample.m0(&op)?)).unwrap();
    writeln!(s, "sup_h1 {}", fmt_f64(sample.m1(&op)?)).unwrap();
    writeln!(s, "sup_a {}", fmt_f64(sample.sup_norm(&op, 1.0)?)).unwrap();
    writeln!(s, "M0 {}", fmt_f64(m0_of(cfg, &op, &sample.points)?)).unwrap();
    writeln!(s, "M1 {}", fmt_f64(m1_of(cfg, &op, &sample.points)?)).unwrap();
    Ok(s)
}

fn sup_pow(op: &OperatorSpec, points: &[SpectralField], beta: f64) -> Result<f64> {
    points.iter().try_fold(0.0f64, |m, u| Ok(m.max(op.norm_pow(u, beta)?)))
}

fn m0_of(cfg: &ExperimentConfig, op: &OperatorSpec, points: &[SpectralField]) -> Result<f64> {
    Ok(match cfg.analysis.m0 {
        Some(m) => m,
        None => cfg.analysis.m_factor * sup_pow(op, points, 0.0)?,
    })
}

fn m1_of(cfg: &ExperimentConfig, op: &OperatorSpec, points: &[SpectralField]) -> Result<f64> {
    Ok(match cfg.analysis.m1 {
        Some(m) => m,
        None => cfg.analysis.m_factor * sup_pow(op, points, 0.5)?,
    })
}

/// Loads the archive rows after checking them against the configured model.
fn checked_points(archive: &SnapshotArchive, cfg: &ExperimentConfig, min: usize) -> Result<(Model, Vec<SpectralField>)> {
    if archive.model_id != cfg.model.model_id {
        return Err(LabError::Config(format!(
            "archive holds {:?} data but the config describes {:?}",
            archive.model_id, cfg.model.model_id
        )));
    }
    let model = cfg.model.build()?;
    let d = model.operator().dim();
    if archive.dim != d && !archive.rows.is_empty() {
        return Err(LabError::Config(format!("archive has D = {}, config has D = {d}", archive.dim)));
    }
    if archive.rows.len() < min {
        return Err(LabError::Sample(format!("archive has {} rows, need at least {min}", archive.rows.len())));
    }
    if archive.rows.iter().any(|r| !r.is_finite()) {
        return Err(LabError::Integrity("archive contains non-finite coefficients".into()));
    }
    Ok((model, archive.rows.clone()))
}

const QUOTIENT_HEADER: &str = "pair_set,m_scale,pairs,M0,M1,C_half,C_full,C0,C1,chained_bound,chain_factor,C_field,C_nonlinear,log_slack,worst_half_i,worst_half_j,worst_full_i,worst_full_j,worst_field_i,worst_field_j";

/// One row per (pair set, M scale): snapshot pairs alone and with perturbed re-integrations,
/// at the configured `M` and at twice it.
pub fn cmd_quotients(archive: &SnapshotArchive, cfg: &ExperimentConfig) -> Result<String> {
    let (model, points) = checked_points(archive, cfg, 2)?;
    let op = model.operator().clone();
    let m0 = m0_of(cfg, &op, &points)?;
    let m1 = m1_of(cfg, &op, &points)?;
    let snapshot = PairSet::all_pairs(points.clone());
    let augmented = build_pair_set(&model, &points, &cfg.integrator, &cfg.analysis.perturbation)?;
    let mut out = String::from(QUOTIENT_HEADER);
    out.push('\n');
    for (name, set) in [("snapshot", &snapshot), ("perturbed", &augmented)] {
        for scale in [1.0, 2.0] {
            let (a0, a1) = (scale * m0, scale * m1);
            let half = verify_h1_bound(&op, set, a0)?;
            let full = verify_loglip_a(&op, set, a0, a1)?;
            let field = verify_field_loglip(&model, set, a1, cfg.analysis.alpha)?;
            let v = |c: &ConstantEstimate| fmt_f64(c.value);
            writeln!(
                out,
                "{name},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                fmt_f64(scale),
                set.pairs.len(),
                fmt_f64(a0),
                fmt_f64(a1),
                v(&half),
                v(&full.c_full),
                v(&full.c0),
                v(&full.c1),
                fmt_f64(full.chained_bound()),
                fmt_f64(full.chain_factor),
                v(&field.c_field),
                v(&field.c_nonlinear),
                fmt_f64(field.log_slack),
                fmt_pair(half.worst_pair),
                fmt_pair(full.c_full.worst_pair),
                fmt_pair(field.c_field.worst_pair),
            )
            .unwrap();
        }
    }
    Ok(out)
}

const MANIFOLD_HEADER: &str = "n,lambda_next,subset_size,d_n,d_n_free,d_n_extension,slope,r2,slope_combined,r2_combined,C_field,bound_sq,bound_sqrt,predicted_slope_sq,predicted_slope_sqrt";

/// Residual table per cutoff over the snapshots and their perturbed
/// re-integrations. `slope`/`r2` fit the extension-free residual,
/// `*_combined` the graph residual; `bound_sq` is `2M₁²e^{-λ/(√2C)}` and
/// `bound_sqrt` its square root, with `C` the measured field constant.
pub fn cmd_manifold(archive: &SnapshotArchive, cfg: &ExperimentConfig) -> Result<String> {
    let (model, points) = checked_points(archive, cfg, 2)?;
    let op = model.operator().clone();
    let m1 = m1_of(cfg, &op, &points)?;
    let set = build_pair_set(&model, &points, &cfg.integrator, &cfg.analysis.perturbation)?;
    let field = verify_field_loglip(&model, &set, m1, cfg.analysis.alpha)?;
    let c = field.c_field.value;
    let report = decay_sweep(&set.points, &op, &cfg.analysis.cutoffs, cfg.analysis.extension_rule, ResidualKind::ExtensionFree)?;
    let fit_cols = |o: &Result<DecayOutcome>| match o {
        Ok(DecayOutcome::Fit(f)) => (fmt_f64(f.slope), fmt_f64(f.r2)),
        Ok(DecayOutcome::PerfectGraph) => ("perfect".to_string(), "perfect".to_string()),
        Err(_) => ("NA".to_string(), "NA".to_string()),
    };
    let (slope, r2) = fit_cols(&report.fit);
    let (slope_c, r2_c) = fit_cols(&crate::manifold::decay_fit(&report.rows, ResidualKind::Combined));
    let (ps, pq) = predicted_slopes(c);
    let mut out = String::from(MANIFOLD_HEADER);
    out.push('\n');
    for row in &report.rows {
        let bound_sq = 2.0 * m1 * m1 * (-row.lambda_next / (std::f64::consts::SQRT_2 * c)).exp();
        writeln!(
            out,
            "{},{},{},{},{},{},{slope},{r2},{slope_c},{r2_c},{},{},{},{},{}",
            row.n,
            fmt_f64(row.lambda_next),
            row.subset_size,
            fmt_f64(row.d_n),
            fmt_f64(row.d_n_free),
            fmt_f64(row.d_n_extension),
            fmt_f64(c),
            fmt_f64(bound_sq),
            fmt_f64(bound_sq.sqrt()),
            fmt_f64(ps),
            fmt_f64(pq),
        )
        .unwrap();
    }
    Ok(out)
}

const EMBED_HEADER: &str = "N,seed,theta_hat,C_hat,d_hat,theta_bound,dev_1_hat,injectivity_margin";

/// Diameter of the sample, used to make the ε grids scale-free.
fn diameter(points: &[SpectralField]) -> f64 {
    let mut d = 0.0f64;
    for (i, u) in points.iter().enumerate() {
        for v in &points[i + 1..] {
            d = d.max(u.distance(v));
        }
    }
    d
}

pub fn cmd_embed(archive: &SnapshotArchive, cfg: &ExperimentConfig) -> Result<String> {
    let (model, points) = checked_points(archive, cfg, crate::embedding::MIN_EMBED_POINTS)?;
    let op = model.operator().clone();
    let a = &cfg.analysis;
    let diam = diameter(&points);
    let grid = dyadic_grid(a.box_eps_coarse * diam, a.box_scales);
    let d_hat = box_counting_dimension_with(&points, &grid, a.box_coords).ok().map(|b| b.d_hat);
    let eps: Vec<f64> = a.deviation_eps.iter().map(|e| e * diam).collect();
    let dev = lipschitz_deviation(&points, &op, a.deviation_m, &eps)?;
    let mut out = String::from(EMBED_HEADER);
    out.push('\n');
    for &n in &a.embed_dims {
        for k in 0..a.embed_seeds {
            let seed = a.embed_seed_base.wrapping_add(k);
            let map = random_linear_map(op.dim(), n, seed)?;
            let r = holder_inverse_estimate(&points, &map)?;
            let bound = match d_hat {
                Some(d) => match theta_bound(d, n) {
                    Ok(b) => fmt_f64(b),
                    Err(LabError::BoundInapplicable { .. }) => "inapplicable".to_string(),
                    Err(e) => return Err(e),
                },
                None => "NA".to_string(),
            };
            writeln!(
                out,
                "{n},{seed},{},{},{},{bound},{},{}",
                fmt_f64(r.theta_hat),
                fmt_f64(r.c_hat),
                fmt_opt(d_hat),
                fmt_f64(dev.dev_hat),
                fmt_f64(r.injectivity_margin),
            )
            .unwrap();
        }
    }
    Ok(out)
}
