//! Discrete multifractal random measures: construction from field slices,
//! chaos composition, moment scaling and energy integrals.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{cell_center, default_cutoff, FieldSampler, FieldSlice};
use crate::model::ModelParams;
use crate::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureMeta {
    /// Parameters of the full measure (total intermittency).
    pub params: ModelParams,
    /// Number of chaos layers applied on top of the Lebesgue measure.
    pub layers: usize,
    pub cutoff_l: f64,
    /// `Some(n)` when the atoms are exactly the row-major `n^m` grid.
    pub grid_n: Option<usize>,
    pub replica: u64,
}

/// Atoms with nonnegative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    pub m: usize,
    pub atoms: Vec<Point>,
    pub weights: Vec<f64>,
    pub meta: MeasureMeta,
}

impl DiscreteMeasure {
    pub fn new(m: usize, atoms: Vec<Point>, weights: Vec<f64>, meta: MeasureMeta) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidArgument(format!("invalid weight {w}")));
        }
        Ok(Self {
            m,
            atoms,
            weights,
            meta,
        })
    }

    /// Uniform measure `spacing^m` per cell on the full grid (Lebesgue).
    pub fn lebesgue_grid(params: &ModelParams, grid_n: usize) -> Self {
        let m = params.m;
        let h = 2.0 * params.r / grid_n as f64;
        let count = grid_n.pow(m as u32);
        Self {
            m,
            atoms: (0..count).map(|i| cell_center(m, grid_n, params.r, i)).collect(),
            weights: vec![h.powi(m as i32); count],
            meta: MeasureMeta {
                params: *params,
                layers: 0,
                cutoff_l: default_cutoff(params, grid_n),
                grid_n: Some(grid_n),
                replica: 0,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Probability measure with the same atoms.
    pub fn normalized(&self) -> Result<Self> {
        let total = self.total_mass();
        if total <= 0.0 {
            return Err(Error::ZeroMass);
        }
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w /= total);
        Ok(out)
    }

    /// Mass of the atoms satisfying `inside`.
    pub fn mass_where(&self, inside: impl Fn(&Point) -> bool) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .filter(|(a, _)| inside(a))
            .map(|(_, w)| w)
            .sum()
    }

    /// Restriction to atoms strictly inside the Euclidean ball `B_R`.
    pub fn restrict_to_ball(&self, radius: f64) -> Self {
        let (atoms, weights): (Vec<Point>, Vec<f64>) = self
            .atoms
            .iter()
            .zip(&self.weights)
            .filter(|(a, _)| norm(a) < radius)
            .map(|(a, w)| (*a, *w))
            .unzip();
        Self {
            m: self.m,
            atoms,
            weights,
            meta: MeasureMeta {
                grid_n: None,
                ..self.meta.clone()
            },
        }
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }
}

pub(crate) fn norm(p: &Point) -> f64 {
    p[0].hypot(p[1])
}

pub(crate) fn dist(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Discretized `M_l(A) = int_A e^{omega_l}`: weight `e^{omega(x_i)} h^m`.
pub fn build_measure(field: &FieldSlice) -> DiscreteMeasure {
    let m = field.m();
    let cell = field.spacing.powi(m as i32);
    DiscreteMeasure {
        m,
        atoms: (0..field.values.len()).map(|i| field.cell_center(i)).collect(),
        weights: field.values.iter().map(|v| cell * v.exp()).collect(),
        meta: MeasureMeta {
            params: field.params,
            layers: 1,
            cutoff_l: field.cutoff_l,
            grid_n: Some(field.grid_n),
            replica: field.replica,
        },
    }
}

/// Reusable simulator: one field factorization shared by every replica and
/// chaos layer at a given geometry.
#[derive(Debug)]
pub struct ChaosSimulator {
    pub params: ModelParams,
    pub grid_n: usize,
    sampler: FieldSampler,
}

impl ChaosSimulator {
    /// Uses the default cutoff `l = spacing`.
    pub fn new(params: &ModelParams, grid_n: usize) -> Result<Self> {
        Self::with_cutoff(params, grid_n, default_cutoff(params, grid_n))
    }

    pub fn with_cutoff(params: &ModelParams, grid_n: usize, l: f64) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params: *params,
            grid_n,
            sampler: FieldSampler::new(params, grid_n, l)?,
        })
    }

    pub fn sampler(&self) -> &FieldSampler {
        &self.sampler
    }

    /// Field of replica `replica`, drawn from the layer-1 stream.
    pub fn field(&self, replica: u64) -> FieldSlice {
        self.sampler.sample(&self.params, self.params.gamma2, replica, 1)
    }

    pub fn measure(&self, replica: u64) -> DiscreteMeasure {
        build_measure(&self.field(replica))
    }

    /// `M^(0), ..., M^(n)`: `M^(0)` is Lebesgue and layer `k` multiplies the
    /// previous weights by `e^{omega^(k)}` drawn at intermittency `gamma2/n`
    /// from the stream of layer `k`.
    pub fn compose(&self, n: usize, replica: u64) -> Result<Vec<DiscreteMeasure>> {
        if n < 1 {
            return Err(Error::InvalidArgument("at least one chaos layer is required".into()));
        }
        let layer_gamma2 = self.params.gamma2 / n as f64;
        let mut layers = Vec::with_capacity(n + 1);
        let mut current = DiscreteMeasure::lebesgue_grid(&self.params, self.grid_n);
        current.meta.replica = replica;
        current.meta.cutoff_l = self.sampler.kernel.l;
        layers.push(current.clone());
        for k in 1..=n {
            let field = self.sampler.sample(&self.params, layer_gamma2, replica, k as u64);
            current
                .weights
                .iter_mut()
                .zip(&field.values)
                .for_each(|(w, v)| *w *= v.exp());
            current.meta.layers = k;
            layers.push(current.clone());
        }
        Ok(layers)
    }
}

/// Chaos layers `M^(0..=n)` for one replica.
pub fn compose_chaos(
    params: &ModelParams,
    n: usize,
    grid_n: usize,
    replica: u64,
) -> Result<Vec<DiscreteMeasure>> {
    ChaosSimulator::new(params, grid_n)?.compose(n, replica)
}

/// Estimated structure exponents from centered-ball moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub qs: Vec<f64>,
    pub radii: Vec<f64>,
    pub zeta_hat: Vec<f64>,
    /// Jackknife standard errors over replicas.
    pub stderr: Vec<f64>,
    pub replicas: usize,
    /// `log_moments[iq][ir] = ln mean_replicas M(B(0, r))^q`.
    pub log_moments: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl ScalingReport {
    pub fn zeta_hat_for(&self, q: f64) -> Option<(f64, f64)> {
        self.qs
            .iter()
            .position(|&x| x == q)
            .map(|i| (self.zeta_hat[i], self.stderr[i]))
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Masses `M(B(0, r))` of the sup-norm balls (centered cubes `[-r, r]^m`)
/// for each radius. Cells are counted when their center lies in the cube.
pub fn centered_ball_masses(measure: &DiscreteMeasure, radii: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; radii.len()];
    for (a, w) in measure.atoms.iter().zip(&measure.weights) {
        let s = a[0].abs().max(a[1].abs());
        for (o, r) in out.iter_mut().zip(radii) {
            if s < *r {
                *o += w;
            }
        }
    }
    out
}

fn check_radii(params: &ModelParams, radii: &[f64]) -> Result<()> {
    if radii.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "at least 3 radii are required, got {}",
            radii.len()
        )));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 {
        return Err(Error::InvalidArgument("radii must be positive and strictly increasing".into()));
    }
    let top = radii[radii.len() - 1];
    if top > params.t || top > params.r {
        return Err(Error::InvalidArgument(format!(
            "radius {top} exceeds min(T, R) = {}",
            params.t.min(params.r)
        )));
    }
    Ok(())
}

/// Ball masses per replica (rows) and radius (columns).
pub fn ball_mass_samples(
    sim: &ChaosSimulator,
    radii: &[f64],
    replicas: usize,
) -> Result<Vec<Vec<f64>>> {
    check_radii(&sim.params, radii)?;
    Ok((0..replicas as u64)
        .into_par_iter()
        .map(|r| centered_ball_masses(&sim.measure(r), radii))
        .collect())
}

/// Regression of `ln E[M(B(0,r))^q]` on `ln r` for each `q`.
///
/// Balls are sup-norm balls centered at the origin (cubes of half-side `r`),
/// which keeps `M(B(0,r))` an exact sum of whole cells when `r` is a multiple
/// of the spacing. Standard errors are jackknife estimates over replicas.
pub fn estimate_zeta(
    params: &ModelParams,
    qs: &[f64],
    radii: &[f64],
    replicas: usize,
    grid_n: usize,
) -> Result<ScalingReport> {
    if replicas == 0 {
        return Err(Error::InvalidArgument("no replicas".into()));
    }
    let sim = ChaosSimulator::new(params, grid_n)?;
    let samples = ball_mass_samples(&sim, radii, replicas)?;
    scaling_report(params, qs, radii, &samples)
}

/// Builds a [`ScalingReport`] from precomputed ball masses.
pub fn scaling_report(
    params: &ModelParams,
    qs: &[f64],
    radii: &[f64],
    samples: &[Vec<f64>],
) -> Result<ScalingReport> {
    check_radii(params, radii)?;
    let n = samples.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no replicas".into()));
    }
    let log_r: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let mut warnings = Vec::new();
    let (mut zeta_hat, mut stderr, mut log_moments) = (vec![], vec![], vec![]);
    for &q in qs {
        if q > 1.0 && params.zeta(q) <= params.m as f64 {
            warnings.push(format!(
                "moment q = {q} may not exist: zeta(q) = {:.4} <= m",
                params.zeta(q)
            ));
        }
        let powered: Vec<Vec<f64>> = samples
            .iter()
            .map(|row| row.iter().map(|x| x.powf(q)).collect())
            .collect();
        let sums: Vec<f64> = (0..radii.len())
            .map(|j| powered.iter().map(|row| row[j]).sum())
            .collect();
        let full: Vec<f64> = sums.iter().map(|s| (s / n as f64).ln()).collect();
        let slope = ols_slope(&log_r, &full);
        let se = if n > 1 {
            let loo: Vec<f64> = powered
                .iter()
                .map(|row| {
                    let ys: Vec<f64> = sums
                        .iter()
                        .zip(row)
                        .map(|(s, x)| ((s - x) / (n - 1) as f64).ln())
                        .collect();
                    ols_slope(&log_r, &ys)
                })
                .collect();
            let mean = loo.iter().sum::<f64>() / n as f64;
            let var = loo.iter().map(|s| (s - mean).powi(2)).sum::<f64>() * (n - 1) as f64 / n as f64;
            var.sqrt()
        } else {
            f64::NAN
        };
        zeta_hat.push(slope);
        stderr.push(se);
        log_moments.push(full);
    }
    Ok(ScalingReport {
        qs: qs.to_vec(),
        radii: radii.to_vec(),
        zeta_hat,
        stderr,
        replicas: n,
        log_moments,
        warnings,
    })
}

/// Discrete energy `sum_{i != j} w_i w_j d(x_i, x_j)^{-alpha}`.
///
/// The diagonal is excluded: in the continuum a single point carries no
/// mass. Coincident distinct atoms are an error when `alpha > 0`.
pub fn energy<D>(measure: &DiscreteMeasure, distance: D, alpha: f64) -> Result<f64>
where
    D: Fn(&Point, &Point) -> f64 + Sync,
{
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha}")));
    }
    let atoms = &measure.atoms;
    let w = &measure.weights;
    let partial: Result<Vec<f64>> = (0..atoms.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in i + 1..atoms.len() {
                let k = if alpha == 0.0 {
                    1.0
                } else {
                    let d = distance(&atoms[i], &atoms[j]);
                    if d <= 0.0 {
                        return Err(Error::CoincidentAtoms(i, j));
                    }
                    d.powf(-alpha)
                };
                acc += w[i] * w[j] * k;
            }
            Ok(acc)
        })
        .collect();
    Ok(2.0 * partial?.iter().sum::<f64>())
}

/// Euclidean distance, the default for [`energy`].
pub fn euclidean(a: &Point, b: &Point) -> f64 {
    dist(a, b)
}
