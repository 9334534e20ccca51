//! Multifractal changes of time: Brownian motion run on the clock
//! `t -> M([0, t])`, and the white-noise corner field
//! `B(x) = W(Gamma(B_R cap C(x)))` realized atom by atom.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::chaos::DiscreteMeasure;
use crate::error::{Error, Result};
use crate::rng::{role, StreamKey};
use crate::transport::ChainedMap;
use crate::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeChangedPath {
    /// Time grid starting at 0.
    pub t: Vec<f64>,
    /// `M([0, t_i])`.
    pub clock: Vec<f64>,
    /// `B(clock_i)`.
    pub values: Vec<f64>,
}

impl TimeChangedPath {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Variances of the Gaussian increments, i.e. the clock increments.
    pub fn increment_variances(&self) -> Vec<f64> {
        self.clock.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Sum of increment variances; equals the final clock value.
    pub fn quadratic_variation(&self) -> f64 {
        self.increment_variances().iter().sum()
    }

    /// `sum (B_{i+1} - B_i)^2` along the sampled path.
    pub fn realized_variation(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.t.partition_point(|&s| s <= t).saturating_sub(1);
        self.values[k]
    }
}

/// Brownian motion evaluated at the clock of a 1D measure. Time runs from
/// the left edge of the grid; each cell is split into `resolution`
/// substeps sharing its mass equally.
pub fn time_change_1d(measure: &DiscreteMeasure, resolution: usize, key: StreamKey) -> Result<TimeChangedPath> {
    if measure.m != 1 {
        return Err(Error::InvalidArgument("time change needs a 1D measure".into()));
    }
    if measure.is_empty() || resolution == 0 {
        return Err(Error::InvalidArgument("empty measure or zero resolution".into()));
    }
    let mut order: Vec<usize> = (0..measure.len()).collect();
    order.sort_by(|&a, &b| measure.atoms[a][0].total_cmp(&measure.atoms[b][0]));
    let h = match measure.len() {
        1 => 2.0 * measure.meta.params.r,
        n => (measure.atoms[order[n - 1]][0] - measure.atoms[order[0]][0]) / (n - 1) as f64,
    };
    let key = StreamKey {
        role: role::BROWNIAN,
        ..key
    };
    let mut rng = key.rng();
    let steps = measure.len() * resolution;
    let mut t = Vec::with_capacity(steps + 1);
    let mut clock = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    t.push(0.0);
    clock.push(0.0);
    values.push(0.0);
    let dt = h / resolution as f64;
    let mut k = 0usize;
    for &i in &order {
        let dv = measure.weights[i] / resolution as f64;
        assert!(dv >= 0.0, "negative clock increment");
        for _ in 0..resolution {
            k += 1;
            let z: f64 = rng.sample(StandardNormal);
            t.push(k as f64 * dt);
            clock.push(clock[k - 1] + dv);
            values.push(values[k - 1] + dv.sqrt() * z);
        }
    }
    Ok(TimeChangedPath { t, clock, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CornerField {
    pub m: usize,
    pub points: Vec<Point>,
    pub values: Vec<f64>,
    /// `Var[B(x) | M, Gamma]` per evaluation point.
    pub variances: Vec<f64>,
    /// Source atoms carrying the noise.
    pub atoms: Vec<Point>,
    /// Per-atom standard normals.
    pub gaussians: Vec<f64>,
    /// Per-atom image masses `v_i = C_R w_i / M(B_R)`.
    pub image_masses: Vec<f64>,
}

/// Membership in `C(x)`, the box between the origin and `x` (so
/// `[x_k, 0]` on negative axes); empty when some `x_k = 0`.
pub fn in_corner(m: usize, x: &Point, a: &Point) -> bool {
    (0..m).all(|k| {
        let (lo, hi) = if x[k] < 0.0 { (x[k], 0.0) } else { (0.0, x[k]) };
        lo < hi && a[k] >= lo && a[k] <= hi
    })
}

impl CornerField {
    pub fn total_variance(&self) -> f64 {
        self.image_masses.iter().sum()
    }

    /// `sum v_i` over atoms in `C(x) cap C(y)`.
    pub fn conditional_covariance(&self, x: &Point, y: &Point) -> f64 {
        self.atoms
            .iter()
            .zip(&self.image_masses)
            .filter(|(a, _)| in_corner(self.m, x, a) && in_corner(self.m, y, a))
            .map(|(_, v)| v)
            .sum()
    }

    /// `B(x)` for further points with the same atom Gaussians.
    pub fn evaluate(&self, x: &Point) -> f64 {
        self.atoms
            .iter()
            .zip(self.gaussians.iter().zip(&self.image_masses))
            .filter(|(a, _)| in_corner(self.m, x, a))
            .map(|(_, (g, v))| g * v.sqrt())
            .sum()
    }
}

/// Corner field of a chain: its atoms carry the noise and `M(B_R)`, `C_R`
/// come from the chain.
pub fn corner_field(chain: &ChainedMap, points: &[Point], key: StreamKey) -> Result<CornerField> {
    let masses: Vec<f64> = chain.weights.iter().map(|w| w * chain.mass_b_r).collect();
    corner_field_from(
        chain.m,
        chain.params.r,
        chain.c_r,
        &chain.atoms,
        &masses,
        points,
        key,
    )
}

/// Corner field for atoms with unnormalized masses `w_i` summing to
/// `M(B_R)`.
pub fn corner_field_from(
    m: usize,
    radius: f64,
    c_r: f64,
    atoms: &[Point],
    masses: &[f64],
    points: &[Point],
    key: StreamKey,
) -> Result<CornerField> {
    if atoms.len() != masses.len() {
        return Err(Error::InvalidArgument("atoms and masses differ in length".into()));
    }
    if let Some(p) = points
        .iter()
        .find(|p| (0..m).any(|k| !(p[k].abs() <= radius)))
    {
        return Err(Error::InvalidArgument(format!(
            "evaluation point ({}, {}) lies outside the simulation square",
            p[0], p[1]
        )));
    }
    let mass_b_r: f64 = masses.iter().sum();
    if !(mass_b_r > 0.0) {
        return Err(Error::ZeroMass);
    }
    let scale = c_r / mass_b_r;
    let image_masses: Vec<f64> = masses.iter().map(|w| scale * w).collect();
    let mut rng = StreamKey {
        role: role::WHITE_NOISE,
        ..key
    }
    .rng();
    let gaussians: Vec<f64> = (0..atoms.len()).map(|_| rng.sample(StandardNormal)).collect();
    let field = CornerField {
        m,
        points: points.to_vec(),
        values: Vec::new(),
        variances: Vec::new(),
        atoms: atoms.to_vec(),
        gaussians,
        image_masses,
    };
    let (values, variances) = points
        .par_iter()
        .map(|x| (field.evaluate(x), field.conditional_covariance(x, x)))
        .unzip();
    Ok(CornerField {
        values,
        variances,
        ..field
    })
}
