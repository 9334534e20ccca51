//! Entropy-regularized transport by Sinkhorn scaling.
//!
//! The plan is parametrized as `pi_ij = u_i a_i b_j exp((f_i + g_j - c_ij) / eps) v_j`.
//! Scalings `u, v` are absorbed into the dual potentials `f, g` whenever they
//! drift, so the kernel never under- or overflows even for small `eps`.
//! `eps` is annealed geometrically from `2^halvings * eps` down to `eps`,
//! warm-starting each stage from the previous potentials.

use rayon::prelude::*;

/// Largest `|ln u|` tolerated before the scalings are absorbed.
const ABSORB_THRESHOLD: f64 = 30.0;
/// Scaling iterations between two marginal checks.
const CHECK_EVERY: usize = 5;
/// Dense kernels above this many entries are refused.
pub const MAX_ENTRIES: usize = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornOptions {
    /// Final regularization.
    pub epsilon: f64,
    /// Target max-abs row marginal error (columns are exact after each sweep).
    pub tol: f64,
    /// Iteration budget per annealing stage.
    pub max_iter: usize,
    pub halvings: u32,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            tol: 1e-7,
            max_iter: 20_000,
            halvings: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct SinkhornOutput {
    /// Dense plan, row-major `rows x cols`.
    pub plan: Vec<f64>,
    pub iterations: usize,
    pub row_error: f64,
    pub col_error: f64,
    pub converged: bool,
}

fn logsumexp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Solves for the plan between probability vectors `a` and `b` with cost
/// matrix `cost` (row-major `a.len() x b.len()`).
pub(crate) fn solve(a: &[f64], b: &[f64], cost: &[f64], opts: &SinkhornOptions) -> SinkhornOutput {
    let (rows, cols) = (a.len(), b.len());
    let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let mut f = vec![0.0; rows];
    let mut g = vec![0.0; cols];
    let mut kernel = vec![0.0; rows * cols];
    let mut iterations = 0;
    let mut converged = false;

    for stage in (0..=opts.halvings).rev() {
        let eps = opts.epsilon * 2f64.powi(stage as i32);
        let final_stage = stage == 0;
        let stage_tol = if final_stage { opts.tol } else { opts.tol * 10.0 };
        let mut stage_iter = 0;
        converged = false;
        'stage: while stage_iter < opts.max_iter {
            // exact log-domain sweep: f then g
            f.par_iter_mut().enumerate().for_each(|(i, fi)| {
                let row = &cost[i * cols..(i + 1) * cols];
                *fi = -eps * logsumexp((0..cols).map(|j| log_b[j] + (g[j] - row[j]) / eps));
            });
            g.par_iter_mut().enumerate().for_each(|(j, gj)| {
                *gj = -eps * logsumexp((0..rows).map(|i| log_a[i] + (f[i] - cost[i * cols + j]) / eps));
            });
            // with these potentials pi_ij = a_i b_j exp((f_i + g_j - c_ij)/eps)
            kernel.par_chunks_mut(cols).enumerate().for_each(|(i, krow)| {
                let row = &cost[i * cols..(i + 1) * cols];
                for j in 0..cols {
                    krow[j] = a[i] * b[j] * ((f[i] + g[j] - row[j]) / eps).exp();
                }
            });
            stage_iter += 1;
            iterations += 1;
            let mut u = vec![1.0; rows];
            let mut v = vec![1.0; cols];
            let mut kv = row_sums(&kernel, &v, cols);
            loop {
                let row_error = kv
                    .iter()
                    .zip(&u)
                    .zip(a)
                    .map(|((k, ui), ai)| (ui * k - ai).abs())
                    .fold(0.0, f64::max);
                if row_error <= stage_tol {
                    converged = true;
                    absorb(&mut f, &mut g, &u, &v, eps);
                    break 'stage;
                }
                if stage_iter >= opts.max_iter {
                    absorb(&mut f, &mut g, &u, &v, eps);
                    break 'stage;
                }
                for _ in 0..CHECK_EVERY {
                    for i in 0..rows {
                        u[i] = a[i] / kv[i];
                    }
                    let ktu = col_sums(&kernel, &u, rows, cols);
                    for j in 0..cols {
                        v[j] = b[j] / ktu[j];
                    }
                    kv = row_sums(&kernel, &v, cols);
                    stage_iter += 1;
                    iterations += 1;
                }
                let drift = u
                    .iter()
                    .chain(&v)
                    .map(|x| x.ln().abs())
                    .fold(0.0, f64::max);
                if !drift.is_finite() || drift > ABSORB_THRESHOLD {
                    if drift.is_finite() {
                        absorb(&mut f, &mut g, &u, &v, eps);
                    }
                    continue 'stage;
                }
            }
        }
        if final_stage {
            break;
        }
    }

    drop(kernel);
    let eps = opts.epsilon;
    let mut plan = vec![0.0; rows * cols];
    plan.par_chunks_mut(cols).enumerate().for_each(|(i, prow)| {
        let row = &cost[i * cols..(i + 1) * cols];
        for j in 0..cols {
            prow[j] = a[i] * b[j] * ((f[i] + g[j] - row[j]) / eps).exp();
        }
    });
    let (row_error, col_error) = marginal_errors(&plan, a, b);
    SinkhornOutput {
        plan,
        iterations,
        row_error,
        col_error,
        converged: converged && row_error.max(col_error) <= opts.tol,
    }
}

fn absorb(f: &mut [f64], g: &mut [f64], u: &[f64], v: &[f64], eps: f64) {
    f.iter_mut().zip(u).for_each(|(fi, ui)| *fi += eps * ui.ln());
    g.iter_mut().zip(v).for_each(|(gj, vj)| *gj += eps * vj.ln());
}

fn row_sums(kernel: &[f64], v: &[f64], cols: usize) -> Vec<f64> {
    kernel
        .par_chunks(cols)
        .map(|row| row.iter().zip(v).map(|(k, x)| k * x).sum())
        .collect()
}

fn col_sums(kernel: &[f64], u: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for i in 0..rows {
        let ui = u[i];
        let row = &kernel[i * cols..(i + 1) * cols];
        for (o, k) in out.iter_mut().zip(row) {
            *o += k * ui;
        }
    }
    out
}

/// Max-abs row and column marginal errors of a dense plan.
pub(crate) fn marginal_errors(plan: &[f64], a: &[f64], b: &[f64]) -> (f64, f64) {
    let cols = b.len();
    let row = plan
        .chunks(cols)
        .zip(a)
        .map(|(r, ai)| (r.iter().sum::<f64>() - ai).abs())
        .fold(0.0, f64::max);
    let ones = vec![1.0; a.len()];
    let col = col_sums(plan, &ones, a.len(), cols)
        .iter()
        .zip(b)
        .map(|(c, bj)| (c - bj).abs())
        .fold(0.0, f64::max);
    (row, col)
}
