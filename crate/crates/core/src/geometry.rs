//! Flat pullback geometry of a chained transport map: on its support the
//! metric is `d(omega) |dx|^2` read through `phi`, and geodesics are
//! straight segments in image space pulled back by the nearest-image
//! inverse.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::transport::{invert_images, point_key, squared_euclidean, ChainedMap, InverseMap};
use crate::Point;

#[derive(Debug, Clone)]
pub struct PullbackChart {
    pub m: usize,
    /// Support atoms `x_i` in original coordinates.
    pub atoms: Vec<Point>,
    /// `phi(x_i)`.
    pub images: Vec<Point>,
    pub inverse: InverseMap,
    /// `M(B_R)`.
    pub mass_b_r: f64,
    /// Volume of `B_R`.
    pub c_r: f64,
    lookup: HashMap<(u64, u64), usize>,
}

/// Support atom resolved from a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Located {
    pub index: usize,
    /// Set when the query was not itself a support atom and was replaced by
    /// the nearest one.
    pub off_support: bool,
}

impl PullbackChart {
    pub fn new(chain: &ChainedMap) -> Result<Self> {
        Self::from_parts(chain.m, chain.atoms.clone(), chain.images.clone(), chain.mass_b_r, chain.c_r)
    }

    pub fn from_parts(m: usize, atoms: Vec<Point>, images: Vec<Point>, mass_b_r: f64, c_r: f64) -> Result<Self> {
        if !(mass_b_r > 0.0) {
            return Err(Error::ZeroMass);
        }
        if !(c_r > 0.0) {
            return Err(Error::InvalidArgument(format!("ball volume must be positive, got {c_r}")));
        }
        let inverse = invert_images(&atoms, &images)?;
        let mut lookup = HashMap::with_capacity(atoms.len());
        for (i, a) in atoms.iter().enumerate().rev() {
            lookup.insert(point_key(a), i);
        }
        Ok(Self {
            m,
            atoms,
            images,
            inverse,
            mass_b_r,
            c_r,
            lookup,
        })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `d(omega) = (M(B_R) / C_R)^2`.
    pub fn metric_factor(&self) -> f64 {
        let s = self.scale();
        s * s
    }

    /// Conformal length scale `M(B_R) / C_R`.
    pub fn scale(&self) -> f64 {
        self.mass_b_r / self.c_r
    }

    /// Index of the support atom at exactly `x`.
    pub fn support_index(&self, x: &Point) -> Result<usize> {
        self.lookup
            .get(&point_key(x))
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("({}, {}) is not a support atom", x[0], x[1])))
    }

    /// Support atom at `x`, or the nearest one (lowest index on ties) with
    /// the off-support flag raised.
    pub fn locate(&self, x: &Point) -> Located {
        match self.lookup.get(&point_key(x)) {
            Some(&index) => Located {
                index,
                off_support: false,
            },
            None => {
                let mut best = (f64::INFINITY, 0);
                for (i, a) in self.atoms.iter().enumerate() {
                    let d = squared_euclidean(a, x);
                    if d < best.0 {
                        best = (d, i);
                    }
                }
                Located {
                    index: best.1,
                    off_support: true,
                }
            }
        }
    }

    fn check(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "atom index {i} out of range for {} atoms",
                self.len()
            )));
        }
        Ok(())
    }

    /// `d(x_i, x_j) = (M(B_R)/C_R) |phi(x_i) - phi(x_j)|`.
    pub fn dist(&self, i: usize, j: usize) -> Result<f64> {
        self.check(i)?;
        self.check(j)?;
        Ok(self.scale() * squared_euclidean(&self.images[i], &self.images[j]).sqrt())
    }

    pub fn dist_points(&self, x: &Point, y: &Point) -> Result<f64> {
        self.dist(self.support_index(x)?, self.support_index(y)?)
    }

    /// Image-space point `t phi(x_i) + (1 - t) phi(x_j)`.
    pub fn geodesic_image(&self, i: usize, j: usize, t: f64) -> Result<Point> {
        self.check(i)?;
        self.check(j)?;
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!("t = {t} is outside [0, 1]")));
        }
        let (a, b) = (self.images[i], self.images[j]);
        Ok([t * a[0] + (1.0 - t) * b[0], t * a[1] + (1.0 - t) * b[1]])
    }

    /// Index of the support atom `chi(t phi(x_i) + (1 - t) phi(x_j))`.
    pub fn geodesic_index(&self, i: usize, j: usize, t: f64) -> Result<usize> {
        Ok(self.inverse.index_of(&self.geodesic_image(i, j, t)?))
    }

    /// `gamma(t)`: `x_i` at `t = 1`, `x_j` at `t = 0`.
    pub fn geodesic(&self, i: usize, j: usize, t: f64) -> Result<Point> {
        Ok(self.atoms[self.geodesic_index(i, j, t)?])
    }

    /// Geodesic sampled at `t_k = k / (samples - 1)`, from `x_j` to `x_i`.
    pub fn geodesic_polyline(&self, i: usize, j: usize, samples: usize) -> Result<Polyline> {
        if samples < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 samples, got {samples}")));
        }
        let ts: Vec<f64> = (0..samples)
            .map(|k| k as f64 / (samples - 1) as f64)
            .collect();
        let targets = ts
            .iter()
            .map(|&t| self.geodesic_image(i, j, t))
            .collect::<Result<Vec<_>>>()?;
        let indices: Vec<usize> = targets.par_iter().map(|p| self.inverse.index_of(p)).collect();
        let repeated = indices
            .iter()
            .enumerate()
            .map(|(k, idx)| k > 0 && indices[k - 1] == *idx)
            .collect();
        Ok(Polyline {
            points: indices.iter().map(|&k| self.atoms[k]).collect(),
            images: indices.iter().map(|&k| self.images[k]).collect(),
            t: ts,
            targets,
            indices,
            repeated,
        })
    }

    /// Largest distance from an image to its nearest other image.
    pub fn image_spacing(&self) -> f64 {
        let n = self.images.len();
        (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| squared_euclidean(&self.images[i], &self.images[j]))
                    .fold(f64::INFINITY, f64::min)
            })
            .filter(|d| d.is_finite())
            .map(f64::sqrt)
            .reduce(|| 0.0, f64::max)
    }

    /// Pairs of distinct atoms sharing an image (the chart is not injective
    /// there).
    pub fn shared_images(&self) -> Vec<(usize, usize)> {
        let mut first: HashMap<(u64, u64), usize> = HashMap::new();
        let mut out = Vec::new();
        for (i, y) in self.images.iter().enumerate() {
            match first.get(&point_key(y)) {
                Some(&j) => out.push((j, i)),
                None => {
                    first.insert(point_key(y), i);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub t: Vec<f64>,
    /// Snapped support atoms `gamma(t)`.
    pub points: Vec<Point>,
    pub indices: Vec<usize>,
    /// Image-space points before snapping.
    pub targets: Vec<Point>,
    /// `phi(gamma(t))`.
    pub images: Vec<Point>,
    /// `repeated[k]` when sample `k` snapped to the same atom as `k - 1`.
    pub repeated: Vec<bool>,
}

impl Polyline {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn repeats(&self) -> usize {
        self.repeated.iter().filter(|r| **r).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::compose_chaos;
    use crate::model::ModelParams;
    use crate::transport::{multi_step, MultiStepOptions, Solver};

    fn chain(gamma2: f64, grid: usize, solver: Solver) -> ChainedMap {
        let params = ModelParams::new(2, gamma2, 1.0, 1.0, 12).unwrap();
        let n = params.min_steps().unwrap();
        let layers = compose_chaos(&params, n, grid, 0).unwrap();
        multi_step(
            &layers,
            &MultiStepOptions {
                solver,
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn dist_between(a: &Point, b: &Point) -> f64 {
        squared_euclidean(a, b).sqrt()
    }

    #[test]
    fn lebesgue_chart_is_flat() {
        let c = chain(0.0, 16, Solver::Exact);
        let chart = PullbackChart::new(&c).unwrap();
        assert!((chart.metric_factor() - 1.0).abs() < 1e-12);
        let h = c.spacing;
        for i in (0..chart.len()).step_by(7) {
            for j in (0..chart.len()).step_by(11) {
                let d = chart.dist(i, j).unwrap();
                assert!((d - dist_between(&chart.atoms[i], &chart.atoms[j])).abs() <= h);
            }
        }
    }

    #[test]
    fn metric_factor_is_quadratic_in_mass() {
        let c = chain(1.0, 16, Solver::Exact);
        let chart = PullbackChart::new(&c).unwrap();
        let doubled = PullbackChart::from_parts(2, c.atoms.clone(), c.images.clone(), 2.0 * c.mass_b_r, c.c_r).unwrap();
        assert!((doubled.metric_factor() / chart.metric_factor() - 4.0).abs() < 1e-12);
        assert!(PullbackChart::from_parts(2, c.atoms.clone(), c.images.clone(), 0.0, c.c_r).is_err());
    }

    #[test]
    fn dist_is_a_pseudometric() {
        let c = chain(1.0, 16, Solver::Exact);
        let chart = PullbackChart::new(&c).unwrap();
        let n = chart.len();
        for i in (0..n).step_by(13) {
            assert_eq!(chart.dist(i, i).unwrap(), 0.0);
            for j in (0..n).step_by(17) {
                let dij = chart.dist(i, j).unwrap();
                assert_eq!(dij, chart.dist(j, i).unwrap());
                // permutation onto cells: injective
                assert_eq!(dij == 0.0, i == j);
                for k in (0..n).step_by(29) {
                    let slack = 1e-12 * (dij + chart.dist(j, k).unwrap());
                    assert!(chart.dist(i, k).unwrap() <= dij + chart.dist(j, k).unwrap() + slack);
                }
            }
        }
        assert!(chart.dist(0, n).is_err());
        assert!(chart.dist_points(&[5.0, 5.0], &chart.atoms[0].clone()).is_err());
    }

    #[test]
    fn geodesic_endpoints_and_speed() {
        let c = chain(1.0, 16, Solver::Exact);
        let chart = PullbackChart::new(&c).unwrap();
        let (i, j) = (3, chart.len() - 5);
        assert_eq!(chart.geodesic(i, j, 1.0).unwrap(), chart.atoms[i]);
        assert_eq!(chart.geodesic(i, j, 0.0).unwrap(), chart.atoms[j]);
        assert!(chart.geodesic(i, j, 1.5).is_err());
        let span = dist_between(&chart.images[i], &chart.images[j]);
        for (t, s) in [(0.1, 0.7), (0.25, 0.5), (0.9, 0.3)] {
            let a = chart.geodesic_image(i, j, t).unwrap();
            let b = chart.geodesic_image(i, j, s).unwrap();
            assert!((dist_between(&a, &b) - (t - s).abs() * span).abs() < 1e-12);
        }
        let bound = chart.image_spacing();
        let line = chart.geodesic_polyline(i, j, 64).unwrap();
        for (p, q) in line.targets.iter().zip(&line.images) {
            assert!(dist_between(p, q) <= bound);
        }
    }

    #[test]
    fn polyline_shapes() {
        let c = chain(0.0, 32, Solver::Exact);
        let chart = PullbackChart::new(&c).unwrap();
        let (i, j) = (10, chart.len() - 20);
        let two = chart.geodesic_polyline(i, j, 2).unwrap();
        assert_eq!(two.points, vec![chart.atoms[j], chart.atoms[i]]);
        let line = chart.geodesic_polyline(i, j, 100).unwrap();
        let (a, b) = (chart.atoms[j], chart.atoms[i]);
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len = dx.hypot(dy);
        for p in &line.points {
            let off = ((p[0] - a[0]) * dy - (p[1] - a[1]) * dx).abs() / len;
            assert!(off <= c.spacing);
        }
        assert!(line.repeats() > 0);
        assert!(chart.geodesic_polyline(i, j, 1).is_err());
    }

    #[test]
    fn off_support_queries_are_flagged() {
        let c = chain(0.0, 8, Solver::Exact);
        let chart = PullbackChart::new(&c).unwrap();
        let hit = chart.locate(&chart.atoms[4]);
        assert_eq!(hit, Located { index: 4, off_support: false });
        let near = chart.atoms[4];
        let miss = chart.locate(&[near[0] + 0.01, near[1]]);
        assert_eq!(miss, Located { index: 4, off_support: true });
        assert!(chart.shared_images().is_empty());
    }
}
