//! Box-counting dimension of planar sets relative to a measure, the KPZ
//! relation `xi(dim^M / 2) = dim` and the geodesic-dimension experiment.
//!
//! The content at scale `delta` is `sum nu(B)^{s/2}` over the dyadic boxes
//! of side `delta` meeting `E`; the dimension is the `s` at which the
//! regression slope of log content against `log delta` vanishes.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::chaos::{ols_slope, DiscreteMeasure};
use crate::error::{Error, Result};
use crate::geometry::PullbackChart;
use crate::model::ModelParams;
use crate::Point;

const BISECTION_STEPS: usize = 80;

/// Measure used to weigh the covering boxes.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    /// `nu(B) = delta^2`.
    Lebesgue,
    Measure(&'a DiscreteMeasure),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionEstimate {
    pub s_hat: f64,
    /// Box sides, coarse to fine.
    pub deltas: Vec<f64>,
    /// Mean log content at `s_hat` per scale.
    pub log_contents: Vec<f64>,
    /// RMS residual of the log-content regression at `s_hat`.
    pub residual: f64,
    /// Covering boxes per scale (first replica).
    pub boxes: Vec<usize>,
    /// Set when the root fell outside `[0, 2]` and was clamped.
    pub clamped: bool,
    pub lebesgue: bool,
    pub replicas: usize,
}

/// Dyadic side `2R / 2^level`.
pub fn dyadic_side(radius: f64, level: u32) -> f64 {
    2.0 * radius / (1u64 << level) as f64
}

fn check_levels(levels: &[u32]) -> Result<()> {
    let distinct: BTreeSet<u32> = levels.iter().copied().collect();
    if distinct.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 distinct scales, got {}",
            distinct.len()
        )));
    }
    if distinct.iter().any(|&l| l > 20) {
        return Err(Error::InvalidArgument("dyadic level above 20".into()));
    }
    Ok(())
}

fn box_index(p: &Point, radius: f64, level: u32) -> usize {
    let n = 1usize << level;
    let delta = dyadic_side(radius, level);
    let idx = |x: f64| (((x + radius) / delta).floor().max(0.0) as usize).min(n - 1);
    idx(p[0]) * n + idx(p[1])
}

/// Distinct boxes of `level` meeting `e`, ascending.
fn covering_boxes(e: &[Point], radius: f64, level: u32) -> Vec<usize> {
    let mut boxes: Vec<usize> = e.iter().map(|p| box_index(p, radius, level)).collect();
    boxes.sort_unstable();
    boxes.dedup();
    boxes
}

/// Positive box masses of every covering box, per level.
fn cover_masses(e: &[Point], nu: Reference<'_>, radius: f64, levels: &[u32]) -> Result<Vec<Vec<f64>>> {
    levels
        .iter()
        .map(|&level| {
            let boxes = covering_boxes(e, radius, level);
            let masses: Vec<f64> = match nu {
                Reference::Lebesgue => vec![dyadic_side(radius, level).powi(2); boxes.len()],
                Reference::Measure(mu) => {
                    if let Some(g) = mu.meta.grid_n {
                        if (1usize << level) > g {
                            return Err(Error::InvalidArgument(format!(
                                "level {level} is finer than the {g}-cell grid"
                            )));
                        }
                    }
                    let n = 1usize << level;
                    let mut grid = vec![0.0; n * n];
                    for (a, w) in mu.atoms.iter().zip(&mu.weights) {
                        grid[box_index(a, radius, level)] += w;
                    }
                    boxes.iter().map(|&b| grid[b]).filter(|&w| w > 0.0).collect()
                }
            };
            if masses.is_empty() {
                return Err(Error::ZeroMass);
            }
            Ok(masses)
        })
        .collect()
}

fn log_content(masses: &[f64], s: f64) -> f64 {
    // log-sum-exp of (s/2) ln nu
    let logs = masses.iter().map(|w| 0.5 * s * w.ln());
    let max = logs.clone().fold(f64::NEG_INFINITY, f64::max);
    max + logs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Root of the slope of `mean_r log content_r(s, delta)` in `s`.
fn fit(tables: &[Vec<Vec<f64>>], log_deltas: &[f64]) -> (f64, bool, Vec<f64>) {
    let mean_logs = |s: f64| -> Vec<f64> {
        (0..log_deltas.len())
            .map(|k| tables.iter().map(|t| log_content(&t[k], s)).sum::<f64>() / tables.len() as f64)
            .collect()
    };
    let slope = |s: f64| ols_slope(log_deltas, &mean_logs(s));
    let (mut lo, mut hi) = (0.0, 4.0);
    let (s, clamped) = if slope(lo) >= 0.0 {
        (lo, true)
    } else if slope(hi) <= 0.0 {
        (hi, true)
    } else {
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if slope(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi), false)
    };
    let (s_hat, clamped) = if s > 2.0 { (2.0, true) } else { (s, clamped) };
    (s_hat, clamped, mean_logs(s_hat))
}

fn estimate(e: &[Point], refs: &[Reference<'_>], radius: f64, levels: &[u32]) -> Result<DimensionEstimate> {
    if e.is_empty() {
        return Err(Error::InvalidArgument("empty set".into()));
    }
    check_levels(levels)?;
    let mut levels = levels.to_vec();
    levels.sort_unstable();
    levels.dedup();
    let tables = refs
        .par_iter()
        .map(|nu| cover_masses(e, *nu, radius, &levels))
        .collect::<Result<Vec<_>>>()?;
    let deltas: Vec<f64> = levels.iter().map(|&l| dyadic_side(radius, l)).collect();
    let log_deltas: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let (s_hat, clamped, log_contents) = fit(&tables, &log_deltas);
    let slope = ols_slope(&log_deltas, &log_contents);
    let n = log_deltas.len() as f64;
    let (mx, my) = (
        log_deltas.iter().sum::<f64>() / n,
        log_contents.iter().sum::<f64>() / n,
    );
    let residual = (log_deltas
        .iter()
        .zip(&log_contents)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DimensionEstimate {
        s_hat,
        deltas,
        log_contents,
        residual,
        boxes: levels.iter().map(|&l| covering_boxes(e, radius, l).len()).collect(),
        clamped,
        lebesgue: matches!(refs[0], Reference::Lebesgue),
        replicas: refs.len(),
    })
}

/// Dimension of `e` relative to `nu` on the square `[-R, R]^2`, from the
/// dyadic levels given (at least 3).
pub fn hausdorff_estimate(e: &[Point], nu: Reference<'_>, radius: f64, levels: &[u32]) -> Result<DimensionEstimate> {
    estimate(e, &[nu], radius, levels)
}

/// As [`hausdorff_estimate`] with log contents averaged over replicas
/// before the root is taken.
pub fn hausdorff_estimate_replicas(
    e: &[Point],
    measures: &[DiscreteMeasure],
    radius: f64,
    levels: &[u32],
) -> Result<DimensionEstimate> {
    if measures.is_empty() {
        return Err(Error::InvalidArgument("no replicas".into()));
    }
    let refs: Vec<Reference<'_>> = measures.iter().map(Reference::Measure).collect();
    estimate(e, &refs, radius, levels)
}

/// `xi(s / 2) = zeta(s / 2)`.
pub fn kpz_transform(params: &ModelParams, s: f64) -> f64 {
    params.zeta(0.5 * s)
}

/// Both roots `s` of `xi(s / 2) = d`, lower first.
pub fn kpz_roots(params: &ModelParams, d: f64) -> Result<(f64, f64)> {
    let m = params.m as f64;
    let b = m + 0.5 * params.gamma2;
    let disc = b * b - 2.0 * params.gamma2 * d;
    if disc < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "dimension {d} exceeds the maximum of xi"
        )));
    }
    let root = disc.sqrt();
    // 2 d / (b + root) is the lower root without cancellation as gamma2 -> 0
    let lower = 2.0 * (2.0 * d / (b + root));
    let upper = if params.gamma2 > 0.0 {
        2.0 * (b + root) / params.gamma2
    } else {
        f64::INFINITY
    };
    Ok((lower, upper))
}

/// Lower-branch inverse of [`kpz_transform`].
pub fn kpz_inverse(params: &ModelParams, d: f64) -> Result<f64> {
    Ok(kpz_roots(params, d)?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KpzReport {
    pub gamma2: f64,
    pub euclidean_dim: f64,
    pub estimate: DimensionEstimate,
    /// `xi(s_hat / 2)`, to compare with `euclidean_dim`.
    pub xi_of_half: f64,
    /// Exact `s` with `xi(s / 2) = euclidean_dim`.
    pub s_target: f64,
    /// Standard deviation of per-replica estimates.
    pub spread: f64,
}

/// Estimates `dim^M(E)` over replicas and maps it through `xi`.
pub fn kpz_check(
    params: &ModelParams,
    e: &[Point],
    euclidean_dim: f64,
    measures: &[DiscreteMeasure],
    levels: &[u32],
) -> Result<KpzReport> {
    params.validate()?;
    if params.m != 2 {
        return Err(Error::InvalidArgument("the KPZ check is planar".into()));
    }
    let estimate = hausdorff_estimate_replicas(e, measures, params.r, levels)?;
    let singles = measures
        .par_iter()
        .map(|mu| hausdorff_estimate(e, Reference::Measure(mu), params.r, levels).map(|d| d.s_hat))
        .collect::<Result<Vec<_>>>()?;
    let n = singles.len() as f64;
    let mean = singles.iter().sum::<f64>() / n;
    let spread = if singles.len() > 1 {
        (singles.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(KpzReport {
        gamma2: params.gamma2,
        euclidean_dim,
        xi_of_half: kpz_transform(params, estimate.s_hat),
        s_target: kpz_inverse(params, euclidean_dim)?,
        estimate,
        spread,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicDimensionReport {
    pub gamma2: f64,
    /// Euclidean box dimension per geodesic.
    pub estimates: Vec<f64>,
    pub mean: f64,
    /// `1 + gamma2 / 8`.
    pub conjectured: f64,
}

/// Points every `step` along the polygonal path through `points`.
pub fn densify(points: &[Point], step: f64) -> Vec<Point> {
    let mut out = Vec::new();
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        let k = (len / step).ceil().max(1.0) as usize;
        for i in 0..k {
            let t = i as f64 / k as f64;
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    if let Some(last) = points.last() {
        out.push(*last);
    }
    out
}

/// Euclidean box dimension of geodesic polylines between the given atom
/// pairs, reported next to the conjectured `1 + gamma2 / 8`. No tolerance
/// is implied.
pub fn geodesic_dimension_experiment(
    chart: &PullbackChart,
    params: &ModelParams,
    pairs: &[(usize, usize)],
    samples: usize,
    levels: &[u32],
) -> Result<GeodesicDimensionReport> {
    check_levels(levels)?;
    let finest = levels.iter().copied().max().expect("checked");
    let step = dyadic_side(params.r, finest) / 4.0;
    let estimates = pairs
        .iter()
        .map(|&(i, j)| {
            let line = chart.geodesic_polyline(i, j, samples)?;
            if line.points.iter().all(|p| *p == line.points[0]) {
                return Err(Error::DegeneratePolyline);
            }
            let e = densify(&line.points, step);
            Ok(hausdorff_estimate(&e, Reference::Lebesgue, params.r, levels)?.s_hat)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = if estimates.is_empty() {
        f64::NAN
    } else {
        estimates.iter().sum::<f64>() / estimates.len() as f64
    };
    Ok(GeodesicDimensionReport {
        gamma2: params.gamma2,
        estimates,
        mean,
        conjectured: 1.0 + params.gamma2 / 8.0,
    })
}

/// Horizontal or oblique segment from `a` to `b` sampled every `step`.
pub fn segment(a: Point, b: Point, step: f64) -> Vec<Point> {
    densify(&[a, b], step)
}

/// Axis-aligned filled rectangle `[lo, hi]` sampled on a lattice of pitch `step`.
pub fn filled_square(lo: Point, hi: Point, step: f64) -> Vec<Point> {
    let nx = ((hi[0] - lo[0]) / step).floor() as usize + 1;
    let ny = ((hi[1] - lo[1]) / step).floor() as usize + 1;
    (0..nx)
        .flat_map(|i| (0..ny).map(move |j| [lo[0] + i as f64 * step, lo[1] + j as f64 * step]))
        .collect()
}

/// Endpoints of the `2^depth` intervals of the middle-thirds Cantor
/// construction on `[x0, x1]`, at height `y`.
pub fn cantor_set(depth: u32, x0: f64, x1: f64, y: f64) -> Vec<Point> {
    let mut intervals = vec![(x0, x1)];
    for _ in 0..depth {
        intervals = intervals
            .into_iter()
            .flat_map(|(a, b)| {
                let third = (b - a) / 3.0;
                [(a, a + third), (b - third, b)]
            })
            .collect();
    }
    intervals
        .into_iter()
        .flat_map(|(a, b)| [[a, y], [b, y]])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const LEVELS: [u32; 6] = [3, 4, 5, 6, 7, 8];

    fn params(gamma2: f64) -> ModelParams {
        ModelParams::new(2, gamma2, 1.0, 1.0, 0).unwrap()
    }

    #[test]
    fn lebesgue_segment_square_cantor() {
        let fine = dyadic_side(1.0, 8) / 4.0;
        let seg = segment([-1.0, 0.137], [1.0, 0.137], fine);
        let s = hausdorff_estimate(&seg, Reference::Lebesgue, 1.0, &LEVELS).unwrap();
        assert!((s.s_hat - 1.0).abs() < 0.05, "{}", s.s_hat);
        let sq = filled_square([-1.0, -1.0], [1.0, 1.0], fine);
        let s = hausdorff_estimate(&sq, Reference::Lebesgue, 1.0, &LEVELS).unwrap();
        assert!((s.s_hat - 2.0).abs() < 1e-9, "{}", s.s_hat);
        // dyadic boxes see the triadic set with a log-periodic wobble; a
        // deeper scale range averages it out
        let c = cantor_set(12, 0.0, 1.0, 0.137);
        let levels: Vec<u32> = (4..=14).collect();
        let s = hausdorff_estimate(&c, Reference::Lebesgue, 1.0, &levels).unwrap();
        assert!((s.s_hat - 2f64.ln() / 3f64.ln()).abs() < 0.05, "{}", s.s_hat);
    }

    #[test]
    fn nested_sets_never_lower_the_estimate() {
        let fine = dyadic_side(1.0, 8) / 4.0;
        let seg = segment([-0.5, 0.137], [0.5, 0.137], fine);
        let mut cross = seg.clone();
        cross.extend(segment([0.037, -0.5], [0.037, 0.5], fine));
        let mut plate = cross.clone();
        plate.extend(filled_square([0.1, 0.1], [0.6, 0.6], fine));
        let est = |e: &[Point]| hausdorff_estimate(e, Reference::Lebesgue, 1.0, &LEVELS).unwrap().s_hat;
        let (a, b, c) = (est(&seg), est(&cross), est(&plate));
        assert!(a <= b && b <= c, "{a} {b} {c}");
    }

    #[test]
    fn needs_three_scales_and_mass() {
        let e = vec![[0.1, 0.1]];
        assert!(hausdorff_estimate(&e, Reference::Lebesgue, 1.0, &[3, 4]).is_err());
        assert!(hausdorff_estimate(&e, Reference::Lebesgue, 1.0, &[3, 3, 4]).is_err());
        let zero = DiscreteMeasure::new(
            2,
            vec![[0.5, 0.5]],
            vec![1.0],
            crate::chaos::MeasureMeta {
                params: params(0.0),
                layers: 1,
                cutoff_l: 0.1,
                grid_n: None,
                replica: 0,
            },
        )
        .unwrap();
        assert!(matches!(
            hausdorff_estimate(&[[-0.5, -0.5]], Reference::Measure(&zero), 1.0, &[1, 2, 3]),
            Err(Error::ZeroMass)
        ));
    }

    #[test]
    fn transform_examples() {
        assert!((kpz_transform(&params(2.0), 1.0) - 1.25).abs() < 1e-15);
        let flat = params(0.0);
        for s in [0.0, 0.3, 1.0, 1.7, 2.0] {
            assert!((kpz_transform(&flat, s) - s).abs() < 1e-15);
            assert!((kpz_inverse(&flat, s).unwrap() - s).abs() < 1e-15);
        }
        let target = 5.0 - 17f64.sqrt();
        assert!((kpz_inverse(&params(1.0), 1.0).unwrap() - target).abs() < 1e-14);
        // quadratic oracle: 1.25 s - 0.125 s^2 = 1
        assert!((1.25 * target - 0.125 * target * target - 1.0).abs() < 1e-14);
    }

    #[test]
    fn inverse_round_trips_on_lower_branch() {
        for g in [0.1, 0.5, 1.0, 2.0, 3.5] {
            let p = params(g);
            for k in 0..=20 {
                let s = 2.0 * k as f64 / 20.0;
                let d = kpz_transform(&p, s);
                let (lo, hi) = kpz_roots(&p, d).unwrap();
                assert!((lo - s).abs() < 1e-12, "g {g} s {s} lo {lo}");
                assert!(hi >= lo);
                assert!((kpz_transform(&p, hi) - d).abs() < 1e-9 * d.max(1.0));
            }
        }
    }

    #[test]
    fn flat_measure_matches_lebesgue() {
        let p = params(0.0);
        let mu = DiscreteMeasure::lebesgue_grid(&p, 256);
        let seg = segment([-0.8, 0.137], [0.8, 0.137], dyadic_side(1.0, 8) / 4.0);
        let report = kpz_check(&p, &seg, 1.0, &[mu.clone(), mu], &LEVELS).unwrap();
        let leb = hausdorff_estimate(&seg, Reference::Lebesgue, 1.0, &LEVELS).unwrap();
        assert!((report.estimate.s_hat - leb.s_hat).abs() < 1e-9);
        assert!((report.xi_of_half - report.estimate.s_hat).abs() < 1e-9);
        assert_eq!(report.spread, 0.0);
    }

    #[test]
    fn square_has_full_dimension_for_any_measure() {
        let p = params(1.0);
        let mu = crate::chaos::ChaosSimulator::new(&p, 64).unwrap().measure(0);
        let sq = filled_square([-1.0, -1.0], [1.0, 1.0], dyadic_side(1.0, 6) / 2.0);
        let report = kpz_check(&p, &sq, 2.0, &[mu], &[2, 3, 4, 5, 6]).unwrap();
        assert!((report.estimate.s_hat - 2.0).abs() < 1e-6);
        assert!((report.xi_of_half - 2.0).abs() < 1e-6);
    }

    #[test]
    fn cantor_construction() {
        let c = cantor_set(2, 0.0, 1.0, 0.0);
        let expect = [0.0, 1.0 / 9.0, 2.0 / 9.0, 1.0 / 3.0, 2.0 / 3.0, 7.0 / 9.0, 8.0 / 9.0, 1.0];
        for (p, x) in c.iter().zip(expect) {
            assert!((p[0] - x).abs() < 1e-15);
        }
    }
}
