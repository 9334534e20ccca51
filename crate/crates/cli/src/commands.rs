//! The six subcommands. Each writes its data file, prints JSON summaries and
//! records warnings or invariant failures in the [`Log`].

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use mrm_core::chaos::{compose_chaos, estimate_zeta, ChaosSimulator, DiscreteMeasure};
use mrm_core::geometry::PullbackChart;
use mrm_core::io::{read_tmap_file, write_csv, write_tmap_file, GridFile};
use mrm_core::kpz::{
    cantor_set, dyadic_side, filled_square, geodesic_dimension_experiment, kpz_check, segment,
};
use mrm_core::rng::{role, StreamKey};
use mrm_core::timechange::{corner_field, time_change_1d};
use mrm_core::transport::{multi_step, total_variation, ChainedMap, MapKind};
use mrm_core::{Error, ModelParams, Point};

use crate::config::{Command, RunConfig, Steps, TestSet};
use crate::log::Log;
use crate::CliError;

/// Share of the total mass above which a single cell is flagged.
pub const HEAVY_TAIL_FRACTION: f64 = 0.1;
/// Binned total variation allowed for the exact route.
pub const EXACT_TV: f64 = 1e-3;
const IDENTITY_TOL: f64 = 1e-12;

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cfg: &RunConfig, log: &mut Log) -> Result<()> {
    cfg.validate()?;
    match cfg.command {
        Command::Simulate => simulate(cfg, log),
        Command::Transport => transport(cfg, log),
        Command::Geodesic => geodesic(cfg, log),
        Command::Kpz => kpz(cfg, log),
        Command::Timechange => timechange(cfg, log),
        Command::Scaling => scaling(cfg, log),
    }
}

/// `out` for a single replica, `stem.k.ext` otherwise.
pub fn replica_path(out: &Path, replica: usize, replicas: usize) -> PathBuf {
    if replicas == 1 {
        return out.to_path_buf();
    }
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}.{replica}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{replica}"),
    };
    out.with_file_name(name)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(Error::from)?))
}

fn require_input(cfg: &RunConfig) -> Result<&Path> {
    cfg.input.as_deref().ok_or_else(|| {
        CliError::Config(format!("{} needs --input <file.tmap>", cfg.command.as_str()))
    })
}

fn simulate(cfg: &RunConfig, log: &mut Log) -> Result<()> {
    let sim = ChaosSimulator::new(&cfg.params, cfg.grid)?;
    let header = cfg.to_header();
    for r in 0..cfg.replicas {
        let measure = sim.measure(r as u64);
        let path = replica_path(&cfg.out, r, cfg.replicas);
        GridFile::from_measure(&measure, &header)?.write(&path)?;
        let total = measure.total_mass();
        let max_fraction = measure.max_weight() / total;
        if !(total.is_finite() && total > 0.0) || measure.min_weight() < 0.0 {
            log.fail("mass", "total mass is not positive and finite", json!({ "replica": r, "total_mass": total }));
        }
        if max_fraction > HEAVY_TAIL_FRACTION {
            log.warn(
                "heavy_tail",
                format!("one cell carries more than {HEAVY_TAIL_FRACTION} of the mass"),
                json!({ "replica": r, "max_fraction": max_fraction }),
            );
        }
        log.summary(json!({
            "cmd": "simulate",
            "replica": r,
            "path": path.display().to_string(),
            "total_mass": total,
            "expected_mass": cfg.params.domain_volume(),
            "max_fraction": max_fraction,
        }));
    }
    Ok(())
}

/// Transport step count for `cfg`, enforcing the minimum unless forced.
pub fn resolve_steps(cfg: &RunConfig, log: &mut Log) -> Result<(usize, usize)> {
    let min = cfg.params.min_steps()?;
    let n = match cfg.steps {
        Steps::Auto => min,
        Steps::Exactly(n) if n >= min => n,
        Steps::Exactly(n) if cfg.force => {
            log.warn(
                "below_min_steps",
                "step count below the minimum, forced",
                json!({ "steps": n, "min_steps": min }),
            );
            n
        }
        Steps::Exactly(n) => {
            return Err(CliError::Config(format!(
                "{n} steps is below the minimum of {min} for gamma2 = {}; pass --force to override",
                cfg.params.gamma2
            )))
        }
    };
    Ok((n, min))
}

fn transport(cfg: &RunConfig, log: &mut Log) -> Result<()> {
    let (n, min) = resolve_steps(cfg, log)?;
    let header = cfg.to_header();
    for r in 0..cfg.replicas {
        let layers = compose_chaos(&cfg.params, n, cfg.grid, r as u64)?;
        let chain = multi_step(&layers, &cfg.solver.options())?;
        let path = replica_path(&cfg.out, r, cfg.replicas);
        write_tmap_file(&path, &chain, &header)?;
        for s in &chain.steps {
            log.summary(json!({
                "cmd": "transport",
                "replica": r,
                "step": s.step,
                "cost": s.map.cost,
                "row_error": s.info.row_error,
                "col_error": s.info.col_error,
                "iterations": s.info.iterations,
            }));
        }
        let tv = total_variation(&chain.pushforward(true), &chain.lambda_r());
        check_chain(&chain, tv, r, log);
        log.summary(json!({
            "cmd": "transport",
            "replica": r,
            "path": path.display().to_string(),
            "steps": n,
            "min_steps": min,
            "solver": chain.kind.as_str(),
            "atoms": chain.len(),
            "binned_tv": tv,
            "quantization_tv": chain.quantization_tv,
            "mass_b_r": chain.mass_b_r,
            "c_r": chain.c_r,
        }));
    }
    Ok(())
}

fn check_chain(chain: &ChainedMap, tv: f64, replica: usize, log: &mut Log) {
    match chain.kind {
        MapKind::ExactAssignment if tv > EXACT_TV => log.fail(
            "pushforward",
            "binned pushforward is not within the exact tolerance of lambda_R",
            json!({ "replica": replica, "binned_tv": tv, "limit": EXACT_TV }),
        ),
        MapKind::Barycentric => {
            let tol = chain.options.sinkhorn.tol;
            for s in chain.steps.iter().filter(|s| s.info.marginal_error() > tol) {
                log.fail(
                    "marginal",
                    "sinkhorn step misses its marginal tolerance",
                    json!({ "replica": replica, "step": s.step, "error": s.info.marginal_error(), "tol": tol }),
                );
            }
        }
        _ => {}
    }
}

fn geodesic(cfg: &RunConfig, log: &mut Log) -> Result<()> {
    let chain = read_tmap_file(require_input(cfg)?)?;
    let chart = PullbackChart::new(&chain)?;
    let from = cfg.from.ok_or_else(|| CliError::Config("geodesic needs --from".into()))?;
    let to = cfg.to.ok_or_else(|| CliError::Config("geodesic needs --to".into()))?;
    let a = chart.locate(&from);
    let b = chart.locate(&to);
    for (name, p, l) in [("from", from, a), ("to", to, b)] {
        if l.off_support {
            log.warn(
                "off_support",
                format!("--{name} is not a support atom; using the nearest one"),
                json!({ "point": p, "atom": chart.atoms[l.index] }),
            );
        }
    }
    let columns = ["t", "x", "y", "image_x", "image_y", "atom"];
    let row = |t: f64, x: &Point, y: &Point, k: usize| vec![t, x[0], x[1], y[0], y[1], k as f64];
    let mut header = cfg.to_header();
    header.set("atom_from", a.index).set("atom_to", b.index);
    let w = create(&cfg.out)?;
    if a.index == b.index {
        log.warn("degenerate_geodesic", "endpoints coincide; writing a single point", json!({ "atom": a.index }));
        let k = a.index;
        write_csv(w, &header, &columns, [row(0.0, &chart.atoms[k], &chart.images[k], k)])?;
        log.summary(json!({ "cmd": "geodesic", "points": 1, "dist": 0.0 }));
        return Ok(());
    }
    let line = chart.geodesic_polyline(b.index, a.index, cfg.samples.max(2))?;
    let (first, last) = (line.indices[0], line.indices[line.len() - 1]);
    if first != a.index || last != b.index {
        log.fail(
            "endpoints",
            "geodesic does not start and end at its endpoints",
            json!({ "first": first, "last": last, "from": a.index, "to": b.index }),
        );
    }
    let rows = (0..line.len()).map(|k| row(line.t[k], &line.points[k], &line.images[k], line.indices[k]));
    write_csv(w, &header, &columns, rows)?;
    log.summary(json!({
        "cmd": "geodesic",
        "points": line.len(),
        "repeats": line.repeats(),
        "dist": chart.dist(a.index, b.index)?,
        "metric_factor": chart.metric_factor(),
    }));
    Ok(())
}

/// Default dyadic levels: six levels ending one level above the grid
/// resolution (boxes two cells wide), capped at 8.
pub fn default_levels(grid: usize) -> Vec<u32> {
    let finest = grid.max(2).ilog2().saturating_sub(1).min(8);
    (finest.saturating_sub(5).max(1)..=finest).collect()
}

fn kpz(cfg: &RunConfig, log: &mut Log) -> Result<()> {
    if cfg.set == TestSet::Geodesic {
        return geodesic_dimension(cfg, log);
    }
    let levels = cfg.levels.clone().unwrap_or_else(|| default_levels(cfg.grid));
    let p = &cfg.params;
    let r = p.r;
    let finest = levels.iter().copied().max().unwrap_or(3);
    let step = dyadic_side(r, finest) / 4.0;
    let (e, dim) = match cfg.set {
        TestSet::Segment => (segment([-r, 0.137 * r], [r, 0.137 * r], step), 1.0),
        TestSet::Square => (filled_square([-r, -r], [r, r], step), 2.0),
        _ => (cantor_set(finest + 4, -r, r, 0.137 * r), 2f64.ln() / 3f64.ln()),
    };
    let sim = ChaosSimulator::new(p, cfg.grid)?;
    let measures: Vec<DiscreteMeasure> = (0..cfg.replicas as u64).into_par_iter().map(|k| sim.measure(k)).collect();
    let report = kpz_check(p, &e, dim, &measures, &levels)?;
    if report.estimate.clamped {
        log.warn("clamped", "dimension estimate clamped to [0, 2]", json!({ "s_hat": report.estimate.s_hat }));
    }
    if !report.estimate.s_hat.is_finite() {
        log.fail("estimate", "dimension estimate is not finite", json!({}));
    }
    let columns = ["gamma2", "euclidean_dim", "s_hat", "xi_of_half", "s_target", "spread", "replicas"];
    let est = &report.estimate;
    let values = vec![
        report.gamma2,
        report.euclidean_dim,
        est.s_hat,
        report.xi_of_half,
        report.s_target,
        report.spread,
        est.replicas as f64,
    ];
    write_csv(create(&cfg.out)?, &cfg.to_header(), &columns, [values])?;
    log.summary(json!({
        "cmd": "kpz",
        "set": cfg.set.as_str(),
        "levels": levels,
        "gamma2": report.gamma2,
        "euclidean_dim": report.euclidean_dim,
        "s_hat": est.s_hat,
        "xi_of_half": report.xi_of_half,
        "s_target": report.s_target,
        "spread": report.spread,
        "residual": est.residual,
    }));
    Ok(())
}

fn geodesic_dimension(cfg: &RunConfig, log: &mut Log) -> Result<()> {
    let chain = read_tmap_file(require_input(cfg)?)?;
    let levels = cfg.levels.clone().unwrap_or_else(|| default_levels(chain.grid_n));
    let chart = PullbackChart::new(&chain)?;
    let mut rng = StreamKey::new(cfg.params.seed, 0, 1, role::SAMPLING).rng();
    let n = chart.len();
    let mut pairs = Vec::with_capacity(cfg.points);
    for _ in 0..100 * cfg.points {
        if pairs.len() == cfg.points || n < 2 {
            break;
        }
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        if chart.images[i] != chart.images[j] {
            pairs.push((i, j));
        }
    }
    let report = match geodesic_dimension_experiment(&chart, &chain.params, &pairs, cfg.samples, &levels) {
        Err(Error::DegeneratePolyline) => {
            log.warn("degenerate_geodesic", "a sampled geodesic collapsed to one point", json!({}));
            return Ok(());
        }
        other => other?,
    };
    let rows = pairs
        .iter()
        .zip(&report.estimates)
        .map(|(&(i, j), s)| vec![i as f64, j as f64, *s, report.conjectured]);
    write_csv(create(&cfg.out)?, &cfg.to_header(), &["atom_i", "atom_j", "dimension", "conjectured"], rows)?;
    log.summary(json!({
        "cmd": "kpz",
        "set": "geodesic",
        "gamma2": report.gamma2,
        "mean": report.mean,
        "conjectured": report.conjectured,
        "pairs": pairs.len(),
        "levels": levels,
    }));
    Ok(())
}

fn timechange(cfg: &RunConfig, log: &mut Log) -> Result<()> {
    match cfg.params.m {
        1 => timechange_1d(cfg, log),
        _ => timechange_corner(cfg, log),
    }
}

fn timechange_1d(cfg: &RunConfig, log: &mut Log) -> Result<()> {
    let sim = ChaosSimulator::new(&cfg.params, cfg.grid)?;
    let header = cfg.to_header();
    for r in 0..cfg.replicas {
        let measure = sim.measure(r as u64);
        let key = StreamKey::new(cfg.params.seed, r as u64, 1, role::BROWNIAN);
        let path = time_change_1d(&measure, cfg.resolution, key)?;
        let mass = measure.total_mass();
        let qv = path.quadratic_variation();
        if (qv - mass).abs() > IDENTITY_TOL * mass {
            log.fail("quadratic_variation", "quadratic variation differs from total mass", json!({ "qv": qv, "mass": mass }));
        }
        let out = replica_path(&cfg.out, r, cfg.replicas);
        let rows = (0..path.len()).map(|k| vec![path.t[k], path.clock[k], path.values[k]]);
        write_csv(create(&out)?, &header, &["t", "clock", "value"], rows)?;
        log.summary(json!({
            "cmd": "timechange",
            "replica": r,
            "path": out.display().to_string(),
            "total_mass": mass,
            "quadratic_variation": qv,
            "realized_variation": path.realized_variation(),
        }));
    }
    Ok(())
}

fn timechange_corner(cfg: &RunConfig, log: &mut Log) -> Result<()> {
    let chain = read_tmap_file(require_input(cfg)?)?;
    let r = chain.params.r;
    let side = cfg.points.max(1);
    let points: Vec<Point> = (1..=side)
        .flat_map(|a| (1..=side).map(move |b| [r * a as f64 / side as f64, r * b as f64 / side as f64]))
        .collect();
    let key = StreamKey::new(cfg.params.seed, 0, 1, role::WHITE_NOISE);
    let field = corner_field(&chain, &points, key)?;
    let total = field.total_variance();
    if (total - chain.c_r).abs() > IDENTITY_TOL * chain.c_r {
        log.fail("total_variance", "corner-field total variance differs from C_R", json!({ "total": total, "c_r": chain.c_r }));
    }
    let worst = points
        .iter()
        .zip(&field.variances)
        .map(|(x, v)| (field.conditional_covariance(x, x) - v).abs())
        .fold(0.0, f64::max);
    if worst > IDENTITY_TOL * chain.c_r {
        log.fail("conditional_variance", "conditional variance identity fails", json!({ "worst": worst }));
    }
    let rows = (0..points.len()).map(|k| vec![points[k][0], points[k][1], field.values[k], field.variances[k]]);
    write_csv(create(&cfg.out)?, &cfg.to_header(), &["x", "y", "value", "variance"], rows)?;
    log.summary(json!({
        "cmd": "timechange",
        "points": points.len(),
        "total_variance": total,
        "c_r": chain.c_r,
    }));
    Ok(())
}

/// Default radii `min(T, R) / 2^k`, kept while at least two cells wide.
pub fn default_radii(params: &ModelParams, grid: usize) -> Vec<f64> {
    let h = 2.0 * params.r / grid as f64;
    let top = params.t.min(params.r);
    let mut radii: Vec<f64> = (0..5)
        .map(|k| top / f64::powi(2.0, k))
        .filter(|&r| r >= 2.0 * h)
        .collect();
    radii.reverse();
    radii
}

fn scaling(cfg: &RunConfig, log: &mut Log) -> Result<()> {
    let radii = cfg.radii.clone().unwrap_or_else(|| default_radii(&cfg.params, cfg.grid));
    let report = estimate_zeta(&cfg.params, &cfg.qs, &radii, cfg.replicas, cfg.grid)?;
    for w in &report.warnings {
        log.warn("moment", w.clone(), json!({}));
    }
    let rows: Vec<Vec<f64>> = (0..report.qs.len())
        .map(|i| {
            let q = report.qs[i];
            vec![q, report.zeta_hat[i], report.stderr[i], cfg.params.zeta(q)]
        })
        .collect();
    for row in &rows {
        log.summary(json!({
            "cmd": "scaling",
            "q": row[0],
            "zeta_hat": row[1],
            "stderr": row[2],
            "zeta": row[3],
        }));
    }
    log.summary(json!({ "cmd": "scaling", "radii": radii, "replicas": report.replicas }));
    write_csv(create(&cfg.out)?, &cfg.to_header(), &["q", "zeta_hat", "stderr", "zeta"], rows)?;
    Ok(())
}
