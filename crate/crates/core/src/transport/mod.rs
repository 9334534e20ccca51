//! Quadratic-cost optimal transport between discrete measures and the
//! n-step chain that pushes a composed chaos onto the uniform measure of
//! the ball `B_R`.
//!
//! Step `k` is solved in image coordinates: the source is
//! `phi^(k-1) # Mbar^(k)` and the target is `lambda_R`, so every step is a
//! plain Euclidean problem and `phi^(k) = S^(k) o phi^(k-1)`.

mod assignment;
mod sinkhorn;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chaos::{DiscreteMeasure, MeasureMeta};
use crate::error::{Error, Result};
use crate::field::cell_center;
use crate::model::ModelParams;
use crate::Point;

pub use assignment::{assignment_cost, solve as solve_assignment};
pub use sinkhorn::{SinkhornOptions, MAX_ENTRIES};

/// Plan entries below this fraction of their row mass are dropped from the
/// sparse representation.
const SPARSE_CUTOFF: f64 = 1e-15;
/// Relative round-off allowance in the monotonicity checks.
const MONOTONE_RTOL: f64 = 1e-12;

pub fn squared_euclidean(a: &Point, b: &Point) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverInfo {
    pub epsilon: f64,
    pub iterations: usize,
    pub row_error: f64,
    pub col_error: f64,
    pub converged: bool,
}

impl SolverInfo {
    fn exact() -> Self {
        Self {
            epsilon: 0.0,
            iterations: 0,
            row_error: 0.0,
            col_error: 0.0,
            converged: true,
        }
    }

    pub fn marginal_error(&self) -> f64 {
        self.row_error.max(self.col_error)
    }
}

/// A coupling between two normalized measures, stored by sparse rows.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub source: DiscreteMeasure,
    pub target: DiscreteMeasure,
    /// `rows[i]` lists `(j, pi_ij)` with `pi_ij > 0`, sorted by `j`.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub cost_value: f64,
    pub info: SolverInfo,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|e| e.1).sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.target.len()];
        for row in &self.rows {
            for &(j, p) in row {
                out[j] += p;
            }
        }
        out
    }

    pub fn nonzeros(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    ExactAssignment,
    Barycentric,
}

impl MapKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MapKind::ExactAssignment => "exact",
            MapKind::Barycentric => "sinkhorn",
        }
    }
}

/// One image per source atom.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMap {
    pub sources: Vec<Point>,
    pub images: Vec<Point>,
    pub kind: MapKind,
    /// Target atom of each source for exact assignments.
    pub target_index: Option<Vec<usize>>,
    /// Transport cost against the source weights the map was solved for.
    pub cost: f64,
}

impl TransportMap {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// Image measure with the weights of `measure`, whose atoms must be the
    /// map's sources in order.
    pub fn pushforward(&self, measure: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        pushforward(&self.images, measure, None)
    }
}

fn normalized_weights(measure: &DiscreteMeasure) -> Result<Vec<f64>> {
    let total = measure.total_mass();
    if !(total > 0.0) {
        return Err(Error::ZeroMass);
    }
    Ok(measure.weights.iter().map(|w| w / total).collect())
}

fn cost_matrix<C>(sources: &[Point], targets: &[Point], cost_fn: &C) -> Result<Vec<f64>>
where
    C: Fn(&Point, &Point) -> f64 + Sync,
{
    let cols = targets.len();
    if sources.len().saturating_mul(cols) > MAX_ENTRIES {
        return Err(Error::InvalidArgument(format!(
            "{} x {} cost matrix exceeds {} entries",
            sources.len(),
            cols,
            MAX_ENTRIES
        )));
    }
    let mut cost = vec![0.0; sources.len() * cols];
    cost.par_chunks_mut(cols.max(1))
        .zip(sources)
        .for_each(|(row, x)| {
            for (c, y) in row.iter_mut().zip(targets) {
                *c = cost_fn(x, y);
            }
        });
    Ok(cost)
}

/// Entropy-regularized plan between `mu` and `nu` (both normalized first).
/// Non-convergence is reported in `info.converged`, not as an error.
pub fn sinkhorn<C>(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost_fn: C,
    opts: &SinkhornOptions,
) -> Result<TransportPlan>
where
    C: Fn(&Point, &Point) -> f64 + Sync,
{
    if !(opts.epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", opts.epsilon)));
    }
    let a = normalized_weights(mu)?;
    let b = normalized_weights(nu)?;
    // zero-weight atoms carry no mass; solve on the support and re-expand
    let rows_idx: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let cols_idx: Vec<usize> = (0..b.len()).filter(|&j| b[j] > 0.0).collect();
    let sa: Vec<f64> = rows_idx.iter().map(|&i| a[i]).collect();
    let sb: Vec<f64> = cols_idx.iter().map(|&j| b[j]).collect();
    let src: Vec<Point> = rows_idx.iter().map(|&i| mu.atoms[i]).collect();
    let tgt: Vec<Point> = cols_idx.iter().map(|&j| nu.atoms[j]).collect();
    let cost = cost_matrix(&src, &tgt, &cost_fn)?;
    let out = sinkhorn::solve(&sa, &sb, &cost, opts);

    let cols = sb.len();
    let mut rows = vec![Vec::new(); a.len()];
    let mut cost_value = 0.0;
    for (r, &i) in rows_idx.iter().enumerate() {
        let prow = &out.plan[r * cols..(r + 1) * cols];
        let row_mass: f64 = prow.iter().sum();
        let cut = SPARSE_CUTOFF * row_mass;
        for (c, &p) in prow.iter().enumerate() {
            if p > cut {
                rows[i].push((cols_idx[c], p));
                cost_value += p * cost[r * cols + c];
            }
        }
    }
    let mut plan = TransportPlan {
        source: mu.normalized()?,
        target: nu.normalized()?,
        rows,
        cost_value,
        info: SolverInfo {
            epsilon: opts.epsilon,
            iterations: out.iterations,
            row_error: out.row_error,
            col_error: out.col_error,
            converged: out.converged,
        },
    };
    let (row_error, col_error) = plan_errors(&plan);
    plan.info.row_error = row_error;
    plan.info.col_error = col_error;
    plan.info.converged = out.converged && row_error.max(col_error) <= opts.tol;
    Ok(plan)
}

fn plan_errors(plan: &TransportPlan) -> (f64, f64) {
    let max_err = |sums: Vec<f64>, w: &[f64]| {
        sums.iter()
            .zip(w)
            .map(|(s, w)| (s - w).abs())
            .fold(0.0, f64::max)
    };
    (
        max_err(plan.row_sums(), &plan.source.weights),
        max_err(plan.col_sums(), &plan.target.weights),
    )
}

fn check_uniform(measure: &DiscreteMeasure, side: &str) -> Result<()> {
    let (lo, hi) = (measure.min_weight(), measure.max_weight());
    if !(lo > 0.0) || hi - lo > 1e-12 * hi {
        return Err(Error::InvalidArgument(format!(
            "{side} measure must have uniform positive weights"
        )));
    }
    Ok(())
}

/// Optimal permutation between equal-count uniform measures. Ties are
/// broken towards lower target indices.
pub fn exact_assignment<C>(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost_fn: C) -> Result<TransportMap>
where
    C: Fn(&Point, &Point) -> f64 + Sync,
{
    if mu.len() != nu.len() {
        return Err(Error::InvalidArgument(format!(
            "exact assignment needs equal atom counts, got {} and {}",
            mu.len(),
            nu.len()
        )));
    }
    if mu.is_empty() {
        return Err(Error::InvalidArgument("empty measures".into()));
    }
    check_uniform(mu, "source")?;
    check_uniform(nu, "target")?;
    let n = mu.len();
    let cost = cost_matrix(&mu.atoms, &nu.atoms, &cost_fn)?;
    let target = assignment::solve(&cost, n);
    Ok(TransportMap {
        sources: mu.atoms.clone(),
        images: target.iter().map(|&j| nu.atoms[j]).collect(),
        kind: MapKind::ExactAssignment,
        cost: assignment_cost(&cost, n, &target) / n as f64,
        target_index: Some(target),
    })
}

/// Rank pairing of two equal-size point sets on the first axis: the exact
/// quadratic-cost assignment in dimension one. Stable sorts make ties
/// resolve by index.
pub fn quantile_assignment(sources: &[Point], targets: &[Point]) -> Vec<usize> {
    assert_eq!(sources.len(), targets.len());
    let order = |pts: &[Point]| {
        let mut idx: Vec<usize> = (0..pts.len()).collect();
        idx.sort_by(|&i, &j| pts[i][0].total_cmp(&pts[j][0]));
        idx
    };
    let (src, tgt) = (order(sources), order(targets));
    let mut out = vec![0; sources.len()];
    for (s, t) in src.into_iter().zip(tgt) {
        out[s] = t;
    }
    out
}

/// Deterministic reduction of a plan: `T(x_i) = sum_j pi_ij y_j / sum_j pi_ij`.
pub fn barycentric_map(plan: &TransportPlan) -> Result<TransportMap> {
    let mut images = Vec::with_capacity(plan.rows.len());
    let mut cost = 0.0;
    for (i, row) in plan.rows.iter().enumerate() {
        let mass: f64 = row.iter().map(|e| e.1).sum();
        if !(mass > 0.0) || plan.source.weights[i] <= 0.0 {
            return Err(Error::InvalidArgument(format!("source atom {i} carries no mass")));
        }
        let mut y = [0.0; 2];
        for &(j, p) in row {
            let t = plan.target.atoms[j];
            y[0] += p * t[0];
            y[1] += p * t[1];
        }
        let img = [y[0] / mass, y[1] / mass];
        cost += plan.source.weights[i] * squared_euclidean(&plan.source.atoms[i], &img);
        images.push(img);
    }
    Ok(TransportMap {
        sources: plan.source.atoms.clone(),
        images,
        kind: MapKind::Barycentric,
        target_index: None,
        cost,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Exact,
    Sinkhorn,
    /// Exact when the ball holds at most `exact_threshold` cells.
    Auto,
}

impl Solver {
    pub fn as_str(&self) -> &'static str {
        match self {
            Solver::Exact => "exact",
            Solver::Sinkhorn => "sinkhorn",
            Solver::Auto => "auto",
        }
    }
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Solver::Exact),
            "sinkhorn" => Ok(Solver::Sinkhorn),
            "auto" => Ok(Solver::Auto),
            _ => Err(Error::Parse(format!("unknown solver {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiStepOptions {
    pub solver: Solver,
    pub exact_threshold: usize,
    pub sinkhorn: SinkhornOptions,
}

impl Default for MultiStepOptions {
    fn default() -> Self {
        Self {
            solver: Solver::Auto,
            exact_threshold: 4096,
            sinkhorn: SinkhornOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransportStep {
    /// 1-based step number.
    pub step: usize,
    /// `S^(k)`: sources are `phi^(k-1)` of the step's atoms (the chain atoms
    /// on the sinkhorn route, the layer-`k` units on the exact route).
    pub map: TransportMap,
    /// Source weights of the step (normalized).
    pub weights: Vec<f64>,
    pub info: SolverInfo,
}

/// `phi^(n) = S^(n) o ... o S^(1)` on the atoms of `Mbar^(n)` restricted to
/// the ball.
///
/// With the sinkhorn route the chain atoms are the grid cells inside the ball
/// carrying their own weights. With the exact route every layer is first
/// quantized into as many equal-mass units as the ball has cells, units
/// sitting at distinct points inside their cell, so each step is a
/// permutation onto the cells.
#[derive(Debug, Clone)]
pub struct ChainedMap {
    pub m: usize,
    pub params: ModelParams,
    pub grid_n: usize,
    pub spacing: f64,
    pub kind: MapKind,
    pub options: MultiStepOptions,
    pub steps: Vec<TransportStep>,
    /// Chain atoms in the original coordinates.
    pub atoms: Vec<Point>,
    /// `phi^(n)(atoms[i])`.
    pub images: Vec<Point>,
    /// Normalized masses carried by the atoms.
    pub weights: Vec<f64>,
    /// Ball cell owning each atom, indexing `cells`.
    pub owner: Vec<usize>,
    /// Centers of the grid cells strictly inside `B_R`: the atoms of `lambda_R`.
    pub cells: Vec<Point>,
    /// Normalized `Mbar^(n)` on `cells`.
    pub cell_weights: Vec<f64>,
    /// Unnormalized `M^(n)(B_R)`.
    pub mass_b_r: f64,
    /// Discrete ball volume `|cells| h^m`.
    pub c_r: f64,
    /// Total variation between the chain weights aggregated per cell and
    /// `cell_weights` (zero on the sinkhorn route).
    pub quantization_tv: f64,
}

impl ChainedMap {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Chain atoms with their weights.
    pub fn source_measure(&self) -> DiscreteMeasure {
        DiscreteMeasure {
            m: self.m,
            atoms: self.atoms.clone(),
            weights: self.weights.clone(),
            meta: self.meta(),
        }
    }

    /// Uniform probability on the ball cells.
    pub fn lambda_r(&self) -> DiscreteMeasure {
        let k = self.cells.len();
        DiscreteMeasure {
            m: self.m,
            atoms: self.cells.clone(),
            weights: vec![1.0 / k as f64; k],
            meta: MeasureMeta {
                layers: 0,
                ..self.meta()
            },
        }
    }

    fn meta(&self) -> MeasureMeta {
        MeasureMeta {
            params: self.params,
            layers: self.steps.len(),
            cutoff_l: self.spacing,
            grid_n: None,
            replica: 0,
        }
    }

    pub fn binning(&self) -> GridBinning {
        GridBinning {
            m: self.m,
            grid_n: self.grid_n,
            radius: self.params.r,
        }
    }

    /// `phi^(n) # ` of the chain weights, optionally binned to grid cells.
    pub fn pushforward(&self, binned: bool) -> DiscreteMeasure {
        let bin = self.binning();
        pushforward(&self.images, &self.source_measure(), binned.then_some(&bin))
            .expect("chain images and atoms have equal length")
    }
}

/// Solves the chain for layers `M^(0), ..., M^(n)` as produced by chaos
/// composition (`M^(0)` the Lebesgue grid).
pub fn multi_step(layers: &[DiscreteMeasure], options: &MultiStepOptions) -> Result<ChainedMap> {
    if layers.len() < 2 {
        return Err(Error::InvalidArgument(
            "need M^(0) and at least one chaos layer".into(),
        ));
    }
    let base = &layers[0];
    let grid_n = base.meta.grid_n.ok_or_else(|| {
        Error::InvalidArgument("layers must live on the full simulation grid".into())
    })?;
    for (k, layer) in layers.iter().enumerate() {
        if layer.meta.layers != k || layer.len() != base.len() || layer.meta.grid_n != Some(grid_n) {
            return Err(Error::InvalidArgument(format!(
                "layer {k} does not match the chain (holds {} composed layers, {} atoms)",
                layer.meta.layers,
                layer.len()
            )));
        }
    }
    let m = base.m;
    let params = layers[layers.len() - 1].meta.params;
    let radius = params.r;
    let spacing = 2.0 * radius / grid_n as f64;
    let inside: Vec<usize> = (0..base.len())
        .filter(|&i| crate::chaos::norm(&base.atoms[i]) < radius)
        .collect();
    let cells: Vec<Point> = inside.iter().map(|&i| base.atoms[i]).collect();
    let k_cells = cells.len();
    if k_cells == 0 {
        return Err(Error::InvalidArgument("no grid cell lies inside the ball".into()));
    }
    let solver = match options.solver {
        Solver::Auto if k_cells <= options.exact_threshold => Solver::Exact,
        Solver::Auto => Solver::Sinkhorn,
        Solver::Exact if k_cells > options.exact_threshold => {
            return Err(Error::InvalidArgument(format!(
                "{k_cells} ball cells exceed the exact threshold {}",
                options.exact_threshold
            )))
        }
        s => s,
    };
    let n = layers.len() - 1;
    let mut ball_weights = Vec::with_capacity(n);
    let mut mass_b_r = 0.0;
    for (k, layer) in layers.iter().enumerate().skip(1) {
        let w: Vec<f64> = inside.iter().map(|&i| layer.weights[i]).collect();
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Step {
                step: k,
                source: Box::new(Error::ZeroMass),
            });
        }
        if k == n {
            mass_b_r = total;
        }
        ball_weights.push(w.into_iter().map(|x| x / total).collect::<Vec<f64>>());
    }
    let c_r = k_cells as f64 * spacing.powi(m as i32);
    let resolved = MultiStepOptions { solver, ..*options };
    let chain = match solver {
        Solver::Sinkhorn => sinkhorn_chain(m, &cells, &ball_weights, &options.sinkhorn)?,
        _ => exact_chain(m, spacing, &cells, &ball_weights)?,
    };
    let final_weights = &ball_weights[n - 1];
    let mut per_cell = vec![0.0; k_cells];
    for (&o, w) in chain.owner.iter().zip(&chain.weights) {
        per_cell[o] += w;
    }
    let quantization_tv = 0.5
        * per_cell
            .iter()
            .zip(final_weights)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    let images = chain.steps.last().expect("n >= 1").map.images.clone();
    Ok(ChainedMap {
        m,
        params,
        grid_n,
        spacing,
        kind: match solver {
            Solver::Sinkhorn => MapKind::Barycentric,
            _ => MapKind::ExactAssignment,
        },
        options: resolved,
        steps: chain.steps,
        atoms: chain.atoms,
        images,
        weights: chain.weights,
        owner: chain.owner,
        cells,
        cell_weights: final_weights.clone(),
        mass_b_r,
        c_r,
        quantization_tv,
    })
}

struct Chain {
    steps: Vec<TransportStep>,
    atoms: Vec<Point>,
    weights: Vec<f64>,
    owner: Vec<usize>,
}

fn sinkhorn_chain(
    m: usize,
    cells: &[Point],
    ball_weights: &[Vec<f64>],
    opts: &SinkhornOptions,
) -> Result<Chain> {
    let k_cells = cells.len();
    let meta = |layers| MeasureMeta {
        params: ModelParams {
            m,
            gamma2: 0.0,
            t: 1.0,
            r: 1.0,
            seed: 0,
        },
        layers,
        cutoff_l: 0.0,
        grid_n: None,
        replica: 0,
    };
    let target = DiscreteMeasure::new(m, cells.to_vec(), vec![1.0 / k_cells as f64; k_cells], meta(0))?;
    let mut current: Vec<Point> = cells.to_vec();
    let mut steps = Vec::with_capacity(ball_weights.len());
    for (idx, w) in ball_weights.iter().enumerate() {
        let step = idx + 1;
        let wrap = |e: Error| Error::Step {
            step,
            source: Box::new(e),
        };
        let source = DiscreteMeasure::new(m, current.clone(), w.clone(), meta(step)).map_err(wrap)?;
        let plan = sinkhorn(&source, &target, squared_euclidean, opts).map_err(wrap)?;
        if !plan.info.converged {
            return Err(wrap(Error::NoConvergence {
                error: plan.info.marginal_error(),
                iterations: plan.info.iterations,
            }));
        }
        let map = barycentric_map(&plan).map_err(wrap)?;
        current = map.images.clone();
        steps.push(TransportStep {
            step,
            map,
            weights: w.clone(),
            info: plan.info,
        });
    }
    Ok(Chain {
        steps,
        atoms: cells.to_vec(),
        weights: ball_weights[ball_weights.len() - 1].clone(),
        owner: (0..k_cells).collect(),
    })
}

/// Unit counts `c_i = round(K F_i) - round(K F_{i-1})` from cumulative mass.
pub fn unit_counts(weights: &[f64], units: usize) -> Vec<usize> {
    let k = units as f64;
    let mut acc = 0.0;
    let mut prev = 0usize;
    let mut out = Vec::with_capacity(weights.len());
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        let cur = if i + 1 == weights.len() {
            units
        } else {
            ((k * acc).round() as usize).min(units)
        };
        out.push(cur.saturating_sub(prev));
        prev = prev.max(cur);
    }
    out
}

/// `count` distinct points inside the cell of side `spacing` centered at
/// `center`: evenly spaced in 1D, the first `count` nodes of a
/// `ceil(sqrt(count))` subgrid (row-major) in 2D.
pub fn unit_positions(m: usize, center: &Point, spacing: f64, count: usize) -> Vec<Point> {
    if count == 0 {
        return Vec::new();
    }
    let side = if m == 1 {
        count
    } else {
        (count as f64).sqrt().ceil() as usize
    };
    let off = |k: usize| -0.5 * spacing + (k as f64 + 0.5) * spacing / side as f64;
    (0..count)
        .map(|u| match m {
            1 => [center[0] + off(u), 0.0],
            _ => [center[0] + off(u / side), center[1] + off(u % side)],
        })
        .collect()
}

struct Units {
    positions: Vec<Point>,
    owner: Vec<usize>,
    /// Unit indices per cell.
    by_cell: Vec<Vec<usize>>,
}

fn quantize(m: usize, spacing: f64, cells: &[Point], weights: &[f64]) -> Units {
    let counts = unit_counts(weights, cells.len());
    let mut positions = Vec::with_capacity(cells.len());
    let mut owner = Vec::with_capacity(cells.len());
    let mut by_cell = vec![Vec::new(); cells.len()];
    for (c, (&count, center)) in counts.iter().zip(cells).enumerate() {
        for p in unit_positions(m, center, spacing, count) {
            by_cell[c].push(positions.len());
            positions.push(p);
            owner.push(c);
        }
    }
    Units {
        positions,
        owner,
        by_cell,
    }
}

fn nearest(points: &[Point], candidates: impl Iterator<Item = usize>, y: &Point) -> usize {
    let mut best = (f64::INFINITY, usize::MAX);
    for i in candidates {
        let d = squared_euclidean(&points[i], y);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

fn exact_chain(m: usize, spacing: f64, cells: &[Point], ball_weights: &[Vec<f64>]) -> Result<Chain> {
    let k_cells = cells.len();
    let mut steps: Vec<TransportStep> = Vec::with_capacity(ball_weights.len());
    let mut prev: Option<Units> = None;
    let mut units = quantize(m, spacing, cells, &ball_weights[0]);
    for (idx, w) in ball_weights.iter().enumerate() {
        let step = idx + 1;
        if idx > 0 {
            units = quantize(m, spacing, cells, w);
        }
        // phi^(k-1) at each unit: the image of the nearest previous unit,
        // searched within the same cell when that cell had units
        let sources: Vec<Point> = match (&prev, steps.last()) {
            (Some(p), Some(last)) => units
                .positions
                .par_iter()
                .zip(&units.owner)
                .map(|(x, &c)| {
                    let j = if p.by_cell[c].is_empty() {
                        nearest(&p.positions, 0..p.positions.len(), x)
                    } else {
                        nearest(&p.positions, p.by_cell[c].iter().copied(), x)
                    };
                    last.map.images[j]
                })
                .collect(),
            _ => units.positions.clone(),
        };
        let target = if m == 1 {
            quantile_assignment(&sources, cells)
        } else {
            let cost = cost_matrix(&sources, cells, &squared_euclidean).map_err(|e| Error::Step {
                step,
                source: Box::new(e),
            })?;
            assignment::solve(&cost, k_cells)
        };
        let images: Vec<Point> = target.iter().map(|&j| cells[j]).collect();
        let cost = sources
            .iter()
            .zip(&images)
            .map(|(x, y)| squared_euclidean(x, y))
            .sum::<f64>()
            / k_cells as f64;
        steps.push(TransportStep {
            step,
            map: TransportMap {
                sources,
                images,
                kind: MapKind::ExactAssignment,
                target_index: Some(target),
                cost,
            },
            weights: vec![1.0 / k_cells as f64; k_cells],
            info: SolverInfo::exact(),
        });
        if idx + 1 < ball_weights.len() {
            prev = Some(std::mem::replace(
                &mut units,
                Units {
                    positions: Vec::new(),
                    owner: Vec::new(),
                    by_cell: Vec::new(),
                },
            ));
        }
    }
    Ok(Chain {
        steps,
        atoms: units.positions,
        weights: vec![1.0 / k_cells as f64; k_cells],
        owner: units.owner,
    })
}

/// `chi`: nearest-image inverse of a chained map, ties to the lowest index.
#[derive(Debug, Clone)]
pub struct InverseMap {
    pub atoms: Vec<Point>,
    pub images: Vec<Point>,
}

impl InverseMap {
    /// Index of the atom whose image is nearest to `y`.
    pub fn index_of(&self, y: &Point) -> usize {
        nearest(&self.images, 0..self.images.len(), y)
    }

    pub fn apply(&self, y: &Point) -> Point {
        self.atoms[self.index_of(y)]
    }

    pub fn apply_many(&self, ys: &[Point]) -> Vec<usize> {
        ys.par_iter().map(|y| self.index_of(y)).collect()
    }
}

pub fn invert_map(chained: &ChainedMap) -> Result<InverseMap> {
    invert_images(&chained.atoms, &chained.images)
}

pub fn invert_images(atoms: &[Point], images: &[Point]) -> Result<InverseMap> {
    if atoms.is_empty() {
        return Err(Error::InvalidArgument("cannot invert an empty map".into()));
    }
    if atoms.len() != images.len() {
        return Err(Error::InvalidArgument("atoms and images differ in length".into()));
    }
    Ok(InverseMap {
        atoms: atoms.to_vec(),
        images: images.to_vec(),
    })
}

/// Grid of `grid_n^m` cells on `[-R, R]^m` used to bin image points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridBinning {
    pub m: usize,
    pub grid_n: usize,
    pub radius: f64,
}

impl GridBinning {
    pub fn cell_of(&self, p: &Point) -> usize {
        let h = 2.0 * self.radius / self.grid_n as f64;
        let idx = |x: f64| (((x + self.radius) / h).floor().max(0.0) as usize).min(self.grid_n - 1);
        match self.m {
            1 => idx(p[0]),
            _ => idx(p[0]) * self.grid_n + idx(p[1]),
        }
    }

    pub fn center(&self, cell: usize) -> Point {
        cell_center(self.m, self.grid_n, self.radius, cell)
    }
}

pub(crate) fn point_key(p: &Point) -> (u64, u64) {
    // +0.0 and -0.0 are the same point
    ((p[0] + 0.0).to_bits(), (p[1] + 0.0).to_bits())
}

/// Image measure: atom `images[i]` carries `measure.weights[i]`. Identical
/// images merge (first occurrence fixes the order); with `bin` every image
/// is first moved to the center of its grid cell.
pub fn pushforward(
    images: &[Point],
    measure: &DiscreteMeasure,
    bin: Option<&GridBinning>,
) -> Result<DiscreteMeasure> {
    if images.len() != measure.len() {
        return Err(Error::InvalidArgument(format!(
            "{} images for {} atoms",
            images.len(),
            measure.len()
        )));
    }
    let mut slot: HashMap<(u64, u64), usize> = HashMap::new();
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for (y, w) in images.iter().zip(&measure.weights) {
        let y = match bin {
            Some(b) => b.center(b.cell_of(y)),
            None => *y,
        };
        let s = *slot.entry(point_key(&y)).or_insert_with(|| {
            atoms.push(y);
            weights.push(0.0);
            atoms.len() - 1
        });
        weights[s] += w;
    }
    Ok(DiscreteMeasure {
        m: measure.m,
        atoms,
        weights,
        meta: MeasureMeta {
            grid_n: None,
            ..measure.meta.clone()
        },
    })
}

/// `sup_A |mu(A) - nu(A)| = 1/2 sum |mu - nu|` over the union of atoms.
pub fn total_variation(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let mut diff: HashMap<(u64, u64), f64> = HashMap::new();
    for (a, w) in mu.atoms.iter().zip(&mu.weights) {
        *diff.entry(point_key(a)).or_default() += w;
    }
    for (a, w) in nu.atoms.iter().zip(&nu.weights) {
        *diff.entry(point_key(a)).or_default() -= w;
    }
    0.5 * diff.values().map(|d| d.abs()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MonotonicityReport {
    pub pairs_checked: usize,
    pub pair_violations: usize,
    pub cycles_checked: usize,
    pub cycle_violations: usize,
}

impl MonotonicityReport {
    pub fn is_clean(&self) -> bool {
        self.pair_violations == 0 && self.cycle_violations == 0
    }
}

/// `<S(x_i) - S(x_j), x_i - x_j> >= 0`, up to round-off.
pub fn pair_monotone(map: &TransportMap, i: usize, j: usize) -> bool {
    let (xi, xj) = (map.sources[i], map.sources[j]);
    let (si, sj) = (map.images[i], map.images[j]);
    let dx = [xi[0] - xj[0], xi[1] - xj[1]];
    let ds = [si[0] - sj[0], si[1] - sj[1]];
    let dot = dx[0] * ds[0] + dx[1] * ds[1];
    let scale = dx[0].hypot(dx[1]) * ds[0].hypot(ds[1]);
    dot >= -MONOTONE_RTOL * scale
}

/// Rotating the images along `i -> j -> k -> i` never lowers the quadratic cost.
pub fn cycle_monotone(map: &TransportMap, i: usize, j: usize, k: usize) -> bool {
    let c = |a: usize, b: usize| squared_euclidean(&map.sources[a], &map.images[b]);
    let identity = c(i, i) + c(j, j) + c(k, k);
    let rotated = c(i, j) + c(j, k) + c(k, i);
    rotated >= identity - MONOTONE_RTOL * (identity + rotated)
}

/// Checks `samples` random pairs and `samples` random 3-cycles.
pub fn check_monotonicity(map: &TransportMap, samples: usize, seed: u64) -> MonotonicityReport {
    let n = map.len();
    let mut report = MonotonicityReport::default();
    if n < 2 {
        return report;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let i = rng.random_range(0..n);
        let j = (i + rng.random_range(1..n)) % n;
        report.pairs_checked += 1;
        if !pair_monotone(map, i, j) {
            report.pair_violations += 1;
        }
    }
    if n < 3 {
        return report;
    }
    for _ in 0..samples {
        let i = rng.random_range(0..n);
        let j = (i + rng.random_range(1..n)) % n;
        let k = loop {
            let k = rng.random_range(0..n);
            if k != i && k != j {
                break k;
            }
        };
        report.cycles_checked += 1;
        if !cycle_monotone(map, i, j, k) {
            report.cycle_violations += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::compose_chaos;

    fn meta() -> MeasureMeta {
        MeasureMeta {
            params: ModelParams::new(2, 0.0, 1.0, 1.0, 0).unwrap(),
            layers: 0,
            cutoff_l: 0.0,
            grid_n: None,
            replica: 0,
        }
    }

    fn measure(m: usize, atoms: Vec<Point>, weights: Vec<f64>) -> DiscreteMeasure {
        DiscreteMeasure::new(m, atoms, weights, meta()).unwrap()
    }

    fn uniform(m: usize, atoms: Vec<Point>) -> DiscreteMeasure {
        let n = atoms.len();
        measure(m, atoms, vec![1.0 / n as f64; n])
    }

    fn line(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| [x, 0.0]).collect()
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<Point> {
        (0..n)
            .map(|_| match m {
                1 => [rng.random::<f64>(), 0.0],
                _ => [rng.random::<f64>(), rng.random::<f64>()],
            })
            .collect()
    }

    fn brute_force(cost: &[f64], n: usize) -> f64 {
        fn rec(cost: &[f64], n: usize, row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
            if row == n {
                *best = best.min(acc);
                return;
            }
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    rec(cost, n, row + 1, used, acc + cost[row * n + j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, n, 0, &mut vec![false; n], 0.0, &mut best);
        best
    }

    #[test]
    fn single_atom_plan_is_diagonal() {
        let mu = uniform(2, vec![[0.3, 0.1]]);
        let plan = sinkhorn(&mu, &mu, squared_euclidean, &SinkhornOptions::default()).unwrap();
        assert_eq!(plan.rows, vec![vec![(0, 1.0)]]);
        assert_eq!(plan.cost_value, 0.0);
    }

    #[test]
    fn two_point_shift_costs_four() {
        let mu = uniform(1, line(&[0.0, 1.0]));
        let nu = uniform(1, line(&[2.0, 3.0]));
        let opts = SinkhornOptions {
            epsilon: 0.02,
            ..Default::default()
        };
        let plan = sinkhorn(&mu, &nu, squared_euclidean, &opts).unwrap();
        assert!(plan.info.converged);
        assert!((plan.cost_value - 4.0).abs() < 1e-9, "{}", plan.cost_value);
        let map = exact_assignment(&mu, &nu, squared_euclidean).unwrap();
        assert_eq!(map.target_index, Some(vec![0, 1]));
        assert_eq!(map.cost, 4.0);
    }

    #[test]
    fn two_point_barycentric_fixed_point() {
        // gibbs ratio pi_11 pi_22 / pi_12^2 = e^{2/eps} gives pi_11 = sigmoid(1/eps)/2
        let mu = uniform(1, line(&[0.0, 1.0]));
        let nu = uniform(1, line(&[2.0, 3.0]));
        for eps in [0.25, 0.5, 1.0] {
            let opts = SinkhornOptions {
                epsilon: eps,
                tol: 1e-13,
                halvings: 0,
                ..Default::default()
            };
            let map = barycentric_map(&sinkhorn(&mu, &nu, squared_euclidean, &opts).unwrap()).unwrap();
            let lag = 1.0 / (1.0 + (1.0 / eps).exp());
            assert!((map.images[0][0] - (2.0 + lag)).abs() < 1e-10);
            assert!((map.images[1][0] - (3.0 - lag)).abs() < 1e-10);
        }
    }

    #[test]
    fn uniform_sixteen_is_near_identity() {
        let atoms: Vec<Point> = (0..16).map(|k| [(k / 4) as f64, (k % 4) as f64]).collect();
        let mu = uniform(2, atoms.clone());
        let opts = SinkhornOptions {
            epsilon: 0.01,
            ..Default::default()
        };
        let plan = sinkhorn(&mu, &mu, squared_euclidean, &opts).unwrap();
        assert!(plan.cost_value <= 0.01 * 16f64.ln() * 2.0);
        let map = barycentric_map(&plan).unwrap();
        for (x, y) in atoms.iter().zip(&map.images) {
            assert!(squared_euclidean(x, y) < 1e-12);
        }
    }

    #[test]
    fn barycentric_of_uniform_rows_is_barycenter() {
        let mu = uniform(2, vec![[0.0, 0.0], [1.0, 0.0]]);
        let nu = uniform(2, vec![[0.0, 1.0], [2.0, 3.0], [4.0, -1.0]]);
        let rows = (0..2)
            .map(|_| (0..3).map(|j| (j, 1.0 / 6.0)).collect())
            .collect();
        let plan = TransportPlan {
            source: mu,
            target: nu,
            rows,
            cost_value: 0.0,
            info: SolverInfo::exact(),
        };
        let map = barycentric_map(&plan).unwrap();
        for img in &map.images {
            assert!((img[0] - 2.0).abs() < 1e-15 && (img[1] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_matches_brute_force_on_planar_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let (xs, ys) = (random_points(&mut rng, 5, 2), random_points(&mut rng, 5, 2));
            let map = exact_assignment(&uniform(2, xs.clone()), &uniform(2, ys.clone()), squared_euclidean).unwrap();
            let cost: Vec<f64> = xs
                .iter()
                .flat_map(|x| ys.iter().map(move |y| squared_euclidean(x, y)))
                .collect();
            let got = assignment_cost(&cost, 5, map.target_index.as_ref().unwrap());
            assert_eq!(got, brute_force(&cost, 5));
        }
    }

    #[test]
    fn exact_on_line_is_rank_pairing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [2, 7, 40] {
            for _ in 0..10 {
                let (xs, ys) = (random_points(&mut rng, n, 1), random_points(&mut rng, n, 1));
                let map = exact_assignment(&uniform(1, xs.clone()), &uniform(1, ys.clone()), squared_euclidean).unwrap();
                // oracle: k-th smallest source goes to k-th smallest target
                let mut sx: Vec<usize> = (0..n).collect();
                sx.sort_by(|&a, &b| xs[a][0].partial_cmp(&xs[b][0]).unwrap());
                let mut sy: Vec<usize> = (0..n).collect();
                sy.sort_by(|&a, &b| ys[a][0].partial_cmp(&ys[b][0]).unwrap());
                let target = map.target_index.unwrap();
                for k in 0..n {
                    assert_eq!(target[sx[k]], sy[k]);
                }
                assert_eq!(quantile_assignment(&xs, &ys), target);
            }
        }
    }

    #[test]
    fn exact_identity_when_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs = random_points(&mut rng, 12, 2);
        let map = exact_assignment(&uniform(2, xs.clone()), &uniform(2, xs), squared_euclidean).unwrap();
        assert_eq!(map.target_index, Some((0..12).collect()));
        assert_eq!(map.cost, 0.0);
    }

    #[test]
    fn exact_rejects_bad_inputs() {
        let a = uniform(1, line(&[0.0, 1.0]));
        let b = uniform(1, line(&[0.0, 1.0, 2.0]));
        assert!(exact_assignment(&a, &b, squared_euclidean).is_err());
        let c = measure(1, line(&[0.0, 1.0]), vec![0.3, 0.7]);
        assert!(exact_assignment(&a, &c, squared_euclidean).is_err());
    }

    #[test]
    fn sinkhorn_rejects_zero_mass() {
        let a = uniform(1, line(&[0.0]));
        let z = measure(1, line(&[0.0]), vec![0.0]);
        assert!(matches!(sinkhorn(&a, &z, squared_euclidean, &SinkhornOptions::default()), Err(Error::ZeroMass)));
    }

    #[test]
    fn sinkhorn_gap_shrinks_with_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (xs, ys) = (random_points(&mut rng, 30, 2), random_points(&mut rng, 30, 2));
        let (mu, nu) = (uniform(2, xs.clone()), uniform(2, ys.clone()));
        let exact = exact_assignment(&mu, &nu, squared_euclidean).unwrap().cost;
        let mean_cost = xs
            .iter()
            .flat_map(|x| ys.iter().map(move |y| squared_euclidean(x, y)))
            .sum::<f64>()
            / 900.0;
        let mut last = f64::INFINITY;
        for frac in [0.1, 0.03, 0.01] {
            let opts = SinkhornOptions {
                epsilon: frac * mean_cost,
                tol: 1e-10,
                ..Default::default()
            };
            let plan = sinkhorn(&mu, &nu, squared_euclidean, &opts).unwrap();
            assert!(plan.info.converged);
            let gap = plan.cost_value - exact;
            assert!(gap >= -1e-9, "sinkhorn below exact by {gap}");
            assert!(gap < last);
            last = gap;
        }
    }

    #[test]
    fn sinkhorn_meets_marginals_under_annealing() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs = random_points(&mut rng, 200, 2);
        let w: Vec<f64> = (0..200).map(|_| rng.random::<f64>() + 0.1).collect();
        let mu = measure(2, xs, w);
        let nu = uniform(2, random_points(&mut rng, 150, 2));
        let opts = SinkhornOptions {
            epsilon: 1e-3,
            tol: 1e-8,
            ..Default::default()
        };
        let plan = sinkhorn(&mu, &nu, squared_euclidean, &opts).unwrap();
        assert!(plan.info.converged, "{:?}", plan.info);
        assert!(plan.info.marginal_error() <= 1e-8);
        assert!(plan.rows.iter().flatten().all(|e| e.1 >= 0.0));
    }

    #[test]
    fn quantization_counts_sum_to_units() {
        let w = [0.1, 0.05, 0.3, 0.001, 0.249, 0.3];
        let c = unit_counts(&w, 10);
        assert_eq!(c.iter().sum::<usize>(), 10);
        assert_eq!(c, vec![1, 1, 3, 0, 2, 3]);
        let pos = unit_positions(2, &[0.0, 0.0], 1.0, 3);
        assert_eq!(pos, vec![[-0.25, -0.25], [-0.25, 0.25], [0.25, -0.25]]);
        let pos = unit_positions(1, &[1.0, 0.0], 0.5, 2);
        assert_eq!(pos, vec![[0.875, 0.0], [1.125, 0.0]]);
    }

    fn lebesgue_chain(m: usize, grid: usize, n: usize, solver: Solver) -> ChainedMap {
        let params = ModelParams::new(m, 0.0, 1.0, 1.0, 4).unwrap();
        let layers = compose_chaos(&params, n, grid, 0).unwrap();
        let opts = MultiStepOptions {
            solver,
            ..Default::default()
        };
        multi_step(&layers, &opts).unwrap()
    }

    #[test]
    fn lebesgue_chain_is_identity() {
        for (m, grid) in [(1, 64), (2, 16)] {
            for n in [1, 3] {
                let chain = lebesgue_chain(m, grid, n, Solver::Exact);
                assert_eq!(chain.atoms, chain.cells);
                assert_eq!(chain.images, chain.cells);
                assert_eq!(chain.quantization_tv, 0.0);
                let tv = total_variation(&chain.pushforward(true), &chain.lambda_r());
                assert!(tv < 1e-12);
            }
        }
        let chain = lebesgue_chain(2, 16, 2, Solver::Sinkhorn);
        let h = chain.spacing;
        for step in &chain.steps {
            for (x, y) in step.map.sources.iter().zip(&step.map.images) {
                assert!(squared_euclidean(x, y).sqrt() < h);
            }
        }
    }

    #[test]
    fn one_layer_chain_is_single_solve() {
        let params = ModelParams::new(2, 1.0, 1.0, 1.0, 9).unwrap();
        let layers = compose_chaos(&params, 1, 16, 3).unwrap();
        let opts = MultiStepOptions {
            solver: Solver::Sinkhorn,
            ..Default::default()
        };
        let chain = multi_step(&layers, &opts).unwrap();
        let source = layers[1].restrict_to_ball(1.0);
        let target = uniform(2, chain.cells.clone());
        let plan = sinkhorn(&source, &target, squared_euclidean, &opts.sinkhorn).unwrap();
        let map = barycentric_map(&plan).unwrap();
        for (a, b) in map.images.iter().zip(&chain.images) {
            assert!(squared_euclidean(a, b) < 1e-24);
        }
    }

    #[test]
    fn exact_chain_pushes_units_onto_cells() {
        let params = ModelParams::new(2, 1.0, 1.0, 1.0, 9).unwrap();
        let layers = compose_chaos(&params, 3, 16, 1).unwrap();
        let chain = multi_step(&layers, &MultiStepOptions::default()).unwrap();
        assert_eq!(chain.kind, MapKind::ExactAssignment);
        let tv = total_variation(&chain.pushforward(true), &chain.lambda_r());
        assert!(tv < 1e-12);
        let mut seen = chain.images.clone();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        seen.dedup();
        assert_eq!(seen.len(), chain.cells.len());
        for step in &chain.steps {
            assert!(check_monotonicity(&step.map, 2000, 1).is_clean());
        }
        let inv = invert_map(&chain).unwrap();
        for (i, y) in chain.images.iter().enumerate() {
            assert_eq!(inv.apply(y), chain.atoms[i]);
        }
    }

    #[test]
    fn chain_rejects_mismatched_layers() {
        let params = ModelParams::new(1, 0.5, 1.0, 1.0, 0).unwrap();
        let layers = compose_chaos(&params, 2, 32, 0).unwrap();
        assert!(multi_step(&layers[..1], &MultiStepOptions::default()).is_err());
        assert!(multi_step(&[layers[0].clone(), layers[2].clone()], &MultiStepOptions::default()).is_err());
    }

    #[test]
    fn inverse_picks_nearest_then_lowest() {
        let atoms = line(&[0.0, 1.0, 2.0]);
        let inv = invert_images(&atoms, &line(&[10.0, 20.0, 30.0])).unwrap();
        assert_eq!(inv.apply(&[14.0, 0.0]), [0.0, 0.0]);
        assert_eq!(inv.apply(&[15.0, 0.0]), [0.0, 0.0]);
        assert_eq!(inv.apply(&[26.0, 0.0]), [2.0, 0.0]);
        assert!(invert_images(&[], &[]).is_err());
    }

    #[test]
    fn identity_inverse_is_nearest_atom() {
        let chain = lebesgue_chain(2, 8, 1, Solver::Exact);
        let inv = invert_map(&chain).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let y = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let got = inv.apply(&y);
            let best = chain
                .cells
                .iter()
                .map(|c| squared_euclidean(c, &y))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(squared_euclidean(&got, &y), best);
        }
    }

    #[test]
    fn pushforward_examples() {
        let mu = measure(2, vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![0.2, 0.3, 0.5]);
        let same = pushforward(&mu.atoms, &mu, None).unwrap();
        assert_eq!(same.atoms, mu.atoms);
        assert_eq!(same.weights, mu.weights);
        let constant = pushforward(&[[4.0, 4.0]; 3], &mu, None).unwrap();
        assert_eq!(constant.atoms, vec![[4.0, 4.0]]);
        assert!((constant.weights[0] - 1.0).abs() < 1e-15);
        assert!(total_variation(&mu, &same) == 0.0);
        assert!((total_variation(&mu, &constant) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn monotonicity_flags_a_crossing() {
        let map = TransportMap {
            sources: line(&[0.0, 1.0]),
            images: line(&[3.0, 2.0]),
            kind: MapKind::ExactAssignment,
            target_index: None,
            cost: 0.0,
        };
        assert!(!pair_monotone(&map, 0, 1));
        let report = check_monotonicity(&map, 10, 0);
        assert_eq!(report.pair_violations, 10);
    }
}
