//! Cutoff log-correlated Gaussian fields on a regular grid.
//!
//! The field `omega_l` has covariance `gamma2 * K_l(x - y)` where `K_l` is the
//! rotation average of the one-dimensional kernel [`rho`]. Samples are drawn
//! by circulant embedding of the covariance on a zero-padded torus, with a
//! dense Cholesky fallback for small grids whose embedding is not
//! nonnegative.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::quadrature::{gauss_legendre, integrate};
use crate::rng::{role, StreamKey};
use crate::Point;

/// Relative negative spectral mass that may be clamped to zero.
pub const CLAMP_TOLERANCE: f64 = 1e-6;
/// Largest atom count handled by the dense fallback.
pub const DENSE_LIMIT: usize = 4096;
/// Minimum number of quadrature nodes for the two-dimensional kernel.
pub const QUADRATURE_FLOOR: usize = 8;
pub const DEFAULT_QUADRATURE: usize = 32;

fn check_cutoff(l: f64, t: f64) -> Result<()> {
    if !(l > 0.0 && l <= t) {
        return Err(Error::InvalidArgument(format!(
            "cutoff l = {l} must lie in (0, T = {t}]"
        )));
    }
    Ok(())
}

/// One-dimensional kernel `rho_l(r)`:
/// `ln(T/l) + 1 - r/l` on `[0, l]`, `ln(T/r)` on `[l, T]`, zero beyond.
pub fn rho(r: f64, l: f64, t: f64) -> Result<f64> {
    check_cutoff(l, t)?;
    Ok(rho_unchecked(r.abs(), l, t))
}

#[inline]
fn rho_unchecked(r: f64, l: f64, t: f64) -> f64 {
    if r <= l {
        (t / l).ln() + 1.0 - r / l
    } else if r <= t {
        (t / r).ln()
    } else {
        0.0
    }
}

/// Isotropic kernel `K_l`, the Haar average of `rho_l` over rotations.
///
/// In dimension two the average reduces to
/// `(2/pi) * int_0^{pi/2} rho_l(r sin u) du`. The integral is split at the
/// branch points of `rho_l`: the ramp piece is integrated in closed form, the
/// logarithmic piece as `ln(T/r) - ln u - ln(sin u / u)` with the last term by
/// Gauss–Legendre.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub m: usize,
    pub l: f64,
    pub t: f64,
    rule: (Vec<f64>, Vec<f64>),
}

impl Kernel {
    pub fn new(m: usize, l: f64, t: f64) -> Result<Self> {
        Self::with_resolution(m, l, t, DEFAULT_QUADRATURE)
    }

    pub fn with_resolution(m: usize, l: f64, t: f64, nodes: usize) -> Result<Self> {
        check_cutoff(l, t)?;
        if !(1..=2).contains(&m) {
            return Err(Error::InvalidArgument(format!("dimension m = {m}")));
        }
        if nodes < QUADRATURE_FLOOR {
            return Err(Error::QuadratureResolution {
                got: nodes,
                floor: QUADRATURE_FLOOR,
            });
        }
        Ok(Self {
            m,
            l,
            t,
            rule: gauss_legendre(nodes),
        })
    }

    /// `K_l(0) = ln(T/l) + 1`, the pointwise variance for unit intermittency.
    pub fn at_origin(&self) -> f64 {
        (self.t / self.l).ln() + 1.0
    }

    pub fn eval_point(&self, x: &[f64]) -> f64 {
        self.eval(x.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// Kernel as a function of the distance `r = |x|`.
    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        let (l, t) = (self.l, self.t);
        if self.m == 1 {
            return rho_unchecked(r, l, t);
        }
        if r <= l {
            // whole quarter period on the ramp
            return self.at_origin() - (2.0 / PI) * r / l;
        }
        let u_l = (l / r).asin();
        let u_t = if r > t { (t / r).asin() } else { 0.5 * PI };
        let ramp = self.at_origin() * u_l - (r / l) * (1.0 - u_l.cos());
        let xlogx = |u: f64| u * u.ln() - u;
        let log_sinc = integrate(&self.rule, u_l, u_t, |u| (u.sin() / u).ln());
        let log_part = (u_t - u_l) * (t / r).ln() - (xlogx(u_t) - xlogx(u_l)) - log_sinc;
        (2.0 / PI) * (ramp + log_part)
    }
}

/// `K_l(x)` with `m = x.len()` and the default quadrature resolution.
pub fn kernel(x: &[f64], l: f64, t: f64) -> Result<f64> {
    Ok(Kernel::new(x.len(), l, t)?.eval_point(x))
}

/// Nonnegative spectral factors of a circulant covariance.
#[derive(Debug, Clone)]
pub struct SpectralFactor {
    pub dims: Vec<usize>,
    /// `sqrt(max(lambda_k, 0) / N)` for each frequency.
    pub factors: Vec<f64>,
    /// Negative eigenvalue mass relative to the total absolute mass.
    pub clamp_mass: f64,
}

/// In-place multidimensional FFT over a row-major buffer (m <= 2).
pub(crate) struct NdFft {
    dims: Vec<usize>,
    plans: Vec<Arc<dyn Fft<f64>>>,
}

impl NdFft {
    pub(crate) fn forward(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            dims: dims.to_vec(),
            plans: dims.iter().map(|&n| planner.plan_fft_forward(n)).collect(),
        }
    }

    pub(crate) fn process(&self, data: &mut [Complex64]) {
        match self.dims.len() {
            1 => self.plans[0].process(data),
            2 => {
                let (rows, cols) = (self.dims[0], self.dims[1]);
                // contiguous rows first; process() handles every chunk
                self.plans[1].process(data);
                let mut t = transpose(data, rows, cols);
                self.plans[0].process(&mut t);
                data.copy_from_slice(&transpose(&t, cols, rows));
            }
            _ => unreachable!("dimension checked at construction"),
        }
    }
}

fn transpose(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); data.len()];
    const B: usize = 32;
    for rb in (0..rows).step_by(B) {
        for cb in (0..cols).step_by(B) {
            for r in rb..(rb + B).min(rows) {
                for c in cb..(cb + B).min(cols) {
                    out[c * rows + r] = data[r * cols + c];
                }
            }
        }
    }
    out
}

/// Eigen-decomposition of a circulant covariance given its first row.
///
/// Negative eigenvalues whose relative mass is at most [`CLAMP_TOLERANCE`]
/// are clamped to zero; larger negative mass is an error carrying the
/// measured value.
pub fn spectral_factorization(cov_row: &[f64], dims: &[usize]) -> Result<SpectralFactor> {
    let total: usize = dims.iter().product();
    if total != cov_row.len() || dims.is_empty() || dims.len() > 2 {
        return Err(Error::InvalidArgument(format!(
            "covariance row of length {} does not match dims {dims:?}",
            cov_row.len()
        )));
    }
    let mut buf: Vec<Complex64> = cov_row.iter().map(|&c| Complex64::new(c, 0.0)).collect();
    NdFft::forward(dims).process(&mut buf);
    let (mut abs_mass, mut neg_mass) = (0.0, 0.0);
    for z in &buf {
        abs_mass += z.re.abs();
        if z.re < 0.0 {
            neg_mass -= z.re;
        }
    }
    let clamp_mass = if abs_mass > 0.0 { neg_mass / abs_mass } else { 0.0 };
    if clamp_mass > CLAMP_TOLERANCE {
        return Err(Error::Embedding {
            negative_mass: clamp_mass,
            atoms: total,
        });
    }
    let n = total as f64;
    Ok(SpectralFactor {
        dims: dims.to_vec(),
        factors: buf.iter().map(|z| (z.re.max(0.0) / n).sqrt()).collect(),
        clamp_mass,
    })
}

/// Smallest 5-smooth integer not below `n`.
fn fft_friendly(n: usize) -> usize {
    let mut k = n.max(1);
    loop {
        let mut r = k;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return k;
        }
        k += 1;
    }
}

/// Lower-triangular Cholesky factor; tiny negative pivots from round-off are
/// clamped, anything larger is reported.
fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        let scale = a[j * n + j].abs().max(1e-300);
        if d < -1e-9 * scale {
            return Err(Error::NotPositive { pivot: j, value: d });
        }
        let d = d.max(0.0).sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = if d > 0.0 { s / d } else { 0.0 };
        }
    }
    Ok(l)
}

enum Factorization {
    Circulant {
        factor: SpectralFactor,
        fft: NdFft,
    },
    Dense {
        lower: Vec<f64>,
    },
}

/// Reusable sampler for unit-intermittency fields at a fixed geometry.
///
/// Building the factorization is the expensive part; replicas and chaos
/// layers reuse it and only differ in their random stream.
pub struct FieldSampler {
    pub m: usize,
    pub grid_n: usize,
    pub radius: f64,
    pub spacing: f64,
    pub kernel: Kernel,
    factorization: Factorization,
}

impl std::fmt::Debug for FieldSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FieldSampler")
            .field("m", &self.m)
            .field("grid_n", &self.grid_n)
            .field("spacing", &self.spacing)
            .field("cutoff_l", &self.kernel.l)
            .field("clamp_mass", &self.clamp_mass())
            .finish()
    }
}

impl FieldSampler {
    /// Embeds the kernel on a torus of side at least `4R + 2T`.
    pub fn new(params: &ModelParams, grid_n: usize, l: f64) -> Result<Self> {
        if grid_n < 2 {
            return Err(Error::InvalidArgument(format!("grid_n = {grid_n}")));
        }
        let m = params.m;
        let spacing = 2.0 * params.r / grid_n as f64;
        if l < spacing * (1.0 - 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "cutoff l = {l} is below the grid spacing {spacing}"
            )));
        }
        let kernel = Kernel::new(m, l, params.t)?;
        let side = (4.0 * params.r + 2.0 * params.t) / spacing;
        let padded = fft_friendly((side.ceil() as usize).max(2 * grid_n));
        let dims = vec![padded; m];
        let row = periodized_row(&kernel, padded, m, spacing);
        let factorization = match spectral_factorization(&row, &dims) {
            Ok(factor) => Factorization::Circulant {
                factor,
                fft: NdFft::forward(&dims),
            },
            Err(Error::Embedding { negative_mass, .. }) => {
                let atoms = grid_n.pow(m as u32);
                if atoms > DENSE_LIMIT {
                    return Err(Error::Embedding {
                        negative_mass,
                        atoms,
                    });
                }
                Factorization::Dense {
                    lower: dense_factor(&kernel, grid_n, m, spacing)?,
                }
            }
            Err(e) => return Err(e),
        };
        Ok(Self {
            m,
            grid_n,
            radius: params.r,
            spacing,
            kernel,
            factorization,
        })
    }

    /// Forces the dense Cholesky route (grids up to [`DENSE_LIMIT`] atoms).
    pub fn new_dense(params: &ModelParams, grid_n: usize, l: f64) -> Result<Self> {
        let m = params.m;
        let spacing = 2.0 * params.r / grid_n as f64;
        let atoms = grid_n.pow(m as u32);
        if atoms > DENSE_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "{atoms} atoms exceed the dense limit {DENSE_LIMIT}"
            )));
        }
        let kernel = Kernel::new(m, l, params.t)?;
        Ok(Self {
            m,
            grid_n,
            radius: params.r,
            spacing,
            factorization: Factorization::Dense {
                lower: dense_factor(&kernel, grid_n, m, spacing)?,
            },
            kernel,
        })
    }

    pub fn is_circulant(&self) -> bool {
        matches!(self.factorization, Factorization::Circulant { .. })
    }

    pub fn clamp_mass(&self) -> f64 {
        match &self.factorization {
            Factorization::Circulant { factor, .. } => factor.clamp_mass,
            Factorization::Dense { .. } => 0.0,
        }
    }

    pub fn atoms(&self) -> usize {
        self.grid_n.pow(self.m as u32)
    }

    /// Centered Gaussian grid with covariance `K_l` (unit intermittency).
    pub fn sample_unit(&self, key: StreamKey) -> Vec<f64> {
        let mut rng = key.rng();
        let n = self.grid_n;
        match &self.factorization {
            Factorization::Circulant { factor, fft } => {
                let mut buf: Vec<Complex64> = factor
                    .factors
                    .iter()
                    .map(|&s| {
                        let a: f64 = rng.sample(StandardNormal);
                        let b: f64 = rng.sample(StandardNormal);
                        Complex64::new(s * a, s * b)
                    })
                    .collect();
                fft.process(&mut buf);
                let p = factor.dims[0];
                match self.m {
                    1 => buf[..n].iter().map(|z| z.re).collect(),
                    _ => (0..n)
                        .flat_map(|i| buf[i * p..i * p + n].iter().map(|z| z.re))
                        .collect(),
                }
            }
            Factorization::Dense { lower } => {
                let atoms = self.atoms();
                let z: Vec<f64> = (0..atoms).map(|_| rng.sample(StandardNormal)).collect();
                (0..atoms)
                    .map(|i| {
                        lower[i * atoms..i * atoms + i + 1]
                            .iter()
                            .zip(&z)
                            .map(|(a, b)| a * b)
                            .sum()
                    })
                    .collect()
            }
        }
    }

    /// Field with intermittency `gamma2`, shifted so that `E[e^omega] = 1`.
    pub fn sample(&self, params: &ModelParams, gamma2: f64, replica: u64, layer: u64) -> FieldSlice {
        let var0 = gamma2 * self.kernel.at_origin();
        let values = if gamma2 == 0.0 {
            vec![0.0; self.atoms()]
        } else {
            let scale = gamma2.sqrt();
            self.sample_unit(StreamKey::new(params.seed, replica, layer, role::FIELD))
                .into_iter()
                .map(|g| scale * g - 0.5 * var0)
                .collect()
        };
        FieldSlice {
            params: params.with_gamma2(gamma2),
            grid_n: self.grid_n,
            spacing: self.spacing,
            cutoff_l: self.kernel.l,
            values,
            var0,
            replica,
            layer,
            clamp_mass: self.clamp_mass(),
        }
    }
}

/// First row of the circulant covariance on a `padded^m` torus using
/// minimum-image lags.
fn periodized_row(kernel: &Kernel, padded: usize, m: usize, spacing: f64) -> Vec<f64> {
    let lag = |i: usize| i.min(padded - i) as f64 * spacing;
    match m {
        1 => (0..padded).map(|i| kernel.eval(lag(i))).collect(),
        _ => {
            let half = padded / 2 + 1;
            // radial symmetry: tabulate the unique (|di|, |dj|) pairs once
            let mut table = vec![0.0; half * half];
            for a in 0..half {
                for b in a..half {
                    let (x, y) = (a as f64 * spacing, b as f64 * spacing);
                    let v = kernel.eval((x * x + y * y).sqrt());
                    table[a * half + b] = v;
                    table[b * half + a] = v;
                }
            }
            let fold = |i: usize| i.min(padded - i);
            let mut row = Vec::with_capacity(padded * padded);
            for i in 0..padded {
                for j in 0..padded {
                    row.push(table[fold(i) * half + fold(j)]);
                }
            }
            row
        }
    }
}

fn dense_factor(kernel: &Kernel, grid_n: usize, m: usize, spacing: f64) -> Result<Vec<f64>> {
    let atoms = grid_n.pow(m as u32);
    let coord = |k: usize| -> [f64; 2] {
        match m {
            1 => [k as f64 * spacing, 0.0],
            _ => [(k / grid_n) as f64 * spacing, (k % grid_n) as f64 * spacing],
        }
    };
    let mut cov = vec![0.0; atoms * atoms];
    for i in 0..atoms {
        let pi = coord(i);
        for j in 0..=i {
            let pj = coord(j);
            let v = kernel.eval((pi[0] - pj[0]).hypot(pi[1] - pj[1]));
            cov[i * atoms + j] = v;
            cov[j * atoms + i] = v;
        }
    }
    cholesky(&cov, atoms)
}

/// One realization of `omega_l` on the grid covering `[-R, R]^m`.
#[derive(Debug, Clone)]
pub struct FieldSlice {
    /// Parameters with `gamma2` set to the intermittency of this slice.
    pub params: ModelParams,
    pub grid_n: usize,
    pub spacing: f64,
    pub cutoff_l: f64,
    /// Row-major samples (`grid_n^m` entries).
    pub values: Vec<f64>,
    /// Pointwise variance `gamma2 * K_l(0)`.
    pub var0: f64,
    pub replica: u64,
    pub layer: u64,
    pub clamp_mass: f64,
}

impl FieldSlice {
    pub fn m(&self) -> usize {
        self.params.m
    }

    pub fn cell_center(&self, index: usize) -> Point {
        cell_center(self.params.m, self.grid_n, self.params.r, index)
    }
}

/// Center of cell `index` of the row-major grid on `[-R, R]^m`. The first
/// coordinate indexes rows; in dimension one the second coordinate is 0.
pub fn cell_center(m: usize, grid_n: usize, radius: f64, index: usize) -> Point {
    let h = 2.0 * radius / grid_n as f64;
    let c = |k: usize| -radius + (k as f64 + 0.5) * h;
    match m {
        1 => [c(index), 0.0],
        _ => [c(index / grid_n), c(index % grid_n)],
    }
}

/// The default cutoff: one grid spacing.
pub fn default_cutoff(params: &ModelParams, grid_n: usize) -> f64 {
    2.0 * params.r / grid_n as f64
}

/// Samples replica `replica` of the field at cutoff `l`.
pub fn sample_field(params: &ModelParams, grid_n: usize, l: f64, replica: u64) -> Result<FieldSlice> {
    let sampler = FieldSampler::new(params, grid_n, l)?;
    Ok(sampler.sample(params, params.gamma2, replica, 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(m: usize, gamma2: f64) -> ModelParams {
        ModelParams::new(m, gamma2, 1.0, 1.0, 11).unwrap()
    }

    #[test]
    fn rho_branches() {
        let (l, t) = (0.01, 1.0);
        assert_eq!(rho(t, l, t).unwrap(), 0.0);
        assert!((rho(l, l, t).unwrap() - (t / l).ln()).abs() < 1e-14);
        assert!((rho(0.0, l, t).unwrap() - ((t / l).ln() + 1.0)).abs() < 1e-14);
        assert_eq!(rho(2.0, l, t).unwrap(), 0.0);
        assert!(rho(0.1, 2.0, 1.0).is_err());
        assert!(rho(0.1, 0.0, 1.0).is_err());
    }

    #[test]
    fn rho_is_continuous_at_junctions() {
        let (l, t) = (0.05, 2.0);
        for r in [l, t] {
            let a = rho(r * (1.0 - 1e-12), l, t).unwrap();
            let b = rho(r * (1.0 + 1e-12), l, t).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn kernel_at_origin_and_support() {
        for m in [1, 2] {
            let k = Kernel::new(m, 0.01, 1.0).unwrap();
            assert!((k.eval(0.0) - ((100f64).ln() + 1.0)).abs() < 1e-14);
        }
        assert_eq!(Kernel::new(1, 0.01, 1.0).unwrap().eval(1.0), 0.0);
    }

    #[test]
    fn kernel_two_dims_tends_to_ln2_at_t() {
        let k = Kernel::new(2, 1e-12, 1.0).unwrap();
        assert!((k.eval(1.0) - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn kernel_resolution_floor() {
        assert!(matches!(
            Kernel::with_resolution(2, 0.1, 1.0, 4),
            Err(Error::QuadratureResolution { .. })
        ));
    }

    #[test]
    fn kernel_is_radially_nonincreasing() {
        let k = Kernel::new(2, 0.02, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..400 {
            let v = k.eval(i as f64 * 0.01);
            assert!(v <= prev + 1e-12, "r = {}", i as f64 * 0.01);
            prev = v;
        }
    }

    #[test]
    fn zero_row_factors_are_zero() {
        let f = spectral_factorization(&vec![0.0; 64], &[64]).unwrap();
        assert!(f.factors.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn white_noise_row_has_flat_spectrum() {
        let mut row = vec![0.0; 16 * 16];
        row[0] = 1.0;
        let f = spectral_factorization(&row, &[16, 16]).unwrap();
        let expected = (1.0 / 256.0f64).sqrt();
        assert!(f.factors.iter().all(|&v| (v - expected).abs() < 1e-15));
        assert_eq!(f.clamp_mass, 0.0);
    }

    #[test]
    fn indefinite_row_is_rejected() {
        let mut row = vec![0.0; 8];
        row[0] = 1.0;
        row[1] = 0.9;
        row[7] = 0.9;
        assert!(matches!(
            spectral_factorization(&row, &[8]),
            Err(Error::Embedding { .. })
        ));
    }

    #[test]
    fn zero_intermittency_field_is_zero() {
        let f = sample_field(&params(2, 0.0), 32, default_cutoff(&params(2, 0.0), 32), 0).unwrap();
        assert_eq!(f.values.len(), 32 * 32);
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = params(2, 1.0);
        let a = sample_field(&p, 32, default_cutoff(&p, 32), 3).unwrap();
        let b = sample_field(&p, 32, default_cutoff(&p, 32), 3).unwrap();
        let c = sample_field(&p, 32, default_cutoff(&p, 32), 4).unwrap();
        assert_eq!(a.values, b.values);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn cutoff_below_spacing_is_rejected() {
        let p = params(1, 1.0);
        assert!(sample_field(&p, 64, 0.5 * default_cutoff(&p, 64), 0).is_err());
    }

    #[test]
    fn dense_route_matches_variance() {
        let p = params(1, 1.0);
        let s = FieldSampler::new_dense(&p, 16, default_cutoff(&p, 16)).unwrap();
        assert!(!s.is_circulant());
        let reps = 4000;
        let mut acc = 0.0;
        for r in 0..reps {
            let v = s.sample_unit(StreamKey::new(1, r, 0, role::FIELD));
            acc += v[5] * v[5];
        }
        let var = acc / reps as f64;
        let k0 = s.kernel.at_origin();
        // variance estimate sd ~ k0 * sqrt(2 / reps)
        assert!((var - k0).abs() < 4.0 * k0 * (2.0 / reps as f64).sqrt());
    }

    #[test]
    fn fft_friendly_sizes() {
        assert_eq!(fft_friendly(7), 8);
        assert_eq!(fft_friendly(1537), 1600);
        assert_eq!(fft_friendly(1536), 1536);
    }
}
