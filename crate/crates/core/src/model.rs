//! Model parameters and the closed-form exponents of the log-normal
//! multifractal random measure.
//!
//! The Laplace exponent is `psi(q) = (gamma2 / 2) q (q - 1)`, which satisfies
//! the renormalisation `psi(1) = 0`. The structure exponent is
//! `zeta(q) = m q - psi(q)`.

use crate::error::{Error, Result};
use crate::header::Header;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Spatial dimension (1 or 2).
    pub m: usize,
    /// Intermittency `gamma^2`.
    pub gamma2: f64,
    /// Correlation length.
    pub t: f64,
    /// Domain radius; the simulation square is `[-R, R]^m`.
    pub r: f64,
    pub seed: u64,
}

impl ModelParams {
    /// Validated constructor. Degenerate intermittency (`gamma2 / 2 >= m`)
    /// is rejected.
    pub fn new(m: usize, gamma2: f64, t: f64, r: f64, seed: u64) -> Result<Self> {
        let params = Self {
            m,
            gamma2,
            t,
            r,
            seed,
        };
        params.validate()?;
        Ok(params)
    }

    /// Range checks plus the non-degeneracy condition.
    pub fn validate(&self) -> Result<()> {
        self.validate_ranges()?;
        if !self.is_non_degenerate() {
            return Err(Error::Degenerate {
                psi_prime: self.psi_prime_one(),
                m: self.m,
            });
        }
        Ok(())
    }

    fn validate_ranges(&self) -> Result<()> {
        if !(1..=2).contains(&self.m) {
            return Err(Error::InvalidParams(format!(
                "dimension m = {} (supported: 1, 2)",
                self.m
            )));
        }
        if !(self.gamma2.is_finite() && self.gamma2 >= 0.0) {
            return Err(Error::InvalidParams(format!("gamma2 = {}", self.gamma2)));
        }
        if !(self.t.is_finite() && self.t > 0.0) {
            return Err(Error::InvalidParams(format!("T = {}", self.t)));
        }
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(Error::InvalidParams(format!("R = {}", self.r)));
        }
        Ok(())
    }

    pub fn with_gamma2(&self, gamma2: f64) -> Self {
        Self { gamma2, ..*self }
    }

    pub fn psi(&self, q: f64) -> f64 {
        0.5 * self.gamma2 * q * (q - 1.0)
    }

    /// `psi'(1) = gamma2 / 2`, the intermittency.
    pub fn psi_prime_one(&self) -> f64 {
        0.5 * self.gamma2
    }

    pub fn zeta(&self, q: f64) -> f64 {
        self.m as f64 * q - self.psi(q)
    }

    pub fn is_non_degenerate(&self) -> bool {
        self.psi_prime_one() < self.m as f64
    }

    /// Number of chaos layers needed for the multi-step transport.
    ///
    /// Returns 1 whenever `psi'(1) < 1` (a single optimal map exists),
    /// otherwise the smallest `n` with `m psi(2) < n (m - psi'(1))`.
    pub fn min_steps(&self) -> Result<usize> {
        self.validate()?;
        let psi_prime = self.psi_prime_one();
        if psi_prime < 1.0 {
            return Ok(1);
        }
        let m = self.m as f64;
        let lhs = m * self.psi(2.0);
        let margin = m - psi_prime;
        let mut n = 1usize;
        while lhs >= n as f64 * margin {
            n += 1;
        }
        Ok(n)
    }

    /// `E[exp(q Omega_lambda)] = lambda^(-psi(q))`.
    pub fn omega_lambda_moments(&self, lambda: f64, q: f64) -> Result<f64> {
        check_lambda(lambda)?;
        Ok(lambda.powf(-self.psi(q)))
    }

    /// Mean and variance of the Gaussian `Omega_lambda`.
    pub fn omega_lambda_law(&self, lambda: f64) -> Result<(f64, f64)> {
        check_lambda(lambda)?;
        let log_inv = (1.0 / lambda).ln();
        Ok((-0.5 * self.gamma2 * log_inv, self.gamma2 * log_inv))
    }

    /// Lebesgue measure `C_R` of the closed ball `B_R`.
    pub fn ball_volume(&self) -> f64 {
        match self.m {
            1 => 2.0 * self.r,
            _ => std::f64::consts::PI * self.r * self.r,
        }
    }

    /// Lebesgue measure of the simulation square `[-R, R]^m`.
    pub fn domain_volume(&self) -> f64 {
        (2.0 * self.r).powi(self.m as i32)
    }

    pub fn exponent_table(&self, qs: &[f64]) -> ExponentTable {
        ExponentTable {
            rows: qs
                .iter()
                .map(|&q| ExponentRow {
                    q,
                    psi: self.psi(q),
                    zeta: self.zeta(q),
                })
                .collect(),
        }
    }

    pub fn to_header(&self) -> Header {
        let mut h = Header::new();
        h.set("m", self.m)
            .set("gamma2", self.gamma2)
            .set("T", self.t)
            .set("R", self.r)
            .set("seed", self.seed);
        h
    }

    /// Reads the parameter keys back from a header. Only range checks are
    /// applied so that files written for degenerate sweeps still parse.
    pub fn from_header(h: &Header) -> Result<Self> {
        let params = Self {
            m: h.parse_value("m")?,
            gamma2: h.parse_value("gamma2")?,
            t: h.parse_value("T")?,
            r: h.parse_value("R")?,
            seed: h.parse_value("seed")?,
        };
        params.validate_ranges()?;
        Ok(params)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "lambda = {lambda} is outside (0, 1]"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentRow {
    pub q: f64,
    pub psi: f64,
    pub zeta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentTable {
    pub rows: Vec<ExponentRow>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(m: usize, gamma2: f64) -> ModelParams {
        ModelParams::new(m, gamma2, 1.0, 1.0, 0).unwrap()
    }

    #[test]
    fn psi_values() {
        assert_eq!(p(2, 1.0).psi(1.0), 0.0);
        assert_eq!(p(2, 1.0).psi(2.0), 1.0);
        assert_eq!(p(2, 2.0).psi(0.5), -0.25);
        assert_eq!(p(2, 2.0).psi(0.0), 0.0);
    }

    #[test]
    fn zeta_values() {
        assert_eq!(p(2, 2.0).zeta(0.5), 1.25);
        assert_eq!(p(2, 0.0).zeta(3.0), 6.0);
        assert_eq!(p(2, 1.0).zeta(2.0), 3.0);
    }

    #[test]
    fn non_degeneracy_boundary() {
        let mut q = p(2, 1.0);
        q.gamma2 = 3.9;
        assert!(q.is_non_degenerate());
        q.gamma2 = 4.0;
        assert!(!q.is_non_degenerate());
        assert!(p(1, 0.5).is_non_degenerate());
        assert!(matches!(
            ModelParams::new(2, 4.0, 1.0, 1.0, 0),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn min_steps_table() {
        assert_eq!(p(2, 1.0).min_steps().unwrap(), 1);
        assert_eq!(p(2, 2.5).min_steps().unwrap(), 7);
        assert_eq!(p(2, 3.0).min_steps().unwrap(), 13);
        let mut d = p(2, 1.0);
        d.gamma2 = 4.5;
        assert!(d.min_steps().is_err());
    }

    #[test]
    fn omega_moments() {
        assert_eq!(p(2, 1.0).omega_lambda_moments(1.0, 3.7).unwrap(), 1.0);
        assert_eq!(p(2, 1.0).omega_lambda_moments(0.5, 1.0).unwrap(), 1.0);
        assert!((p(2, 1.0).omega_lambda_moments(0.5, 2.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(p(2, 1.0).omega_lambda_moments(0.0, 1.0).is_err());
        assert!(p(2, 1.0).omega_lambda_moments(1.5, 1.0).is_err());
    }

    #[test]
    fn omega_law_matches_moment_generating_function() {
        let params = p(2, 1.3);
        let (mean, var) = params.omega_lambda_law(0.3).unwrap();
        for q in [0.5, 1.0, 2.0, 3.0] {
            let mgf = (q * mean + 0.5 * q * q * var).exp();
            let direct = params.omega_lambda_moments(0.3, q).unwrap();
            assert!((mgf / direct - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(ModelParams::new(3, 1.0, 1.0, 1.0, 0).is_err());
        assert!(ModelParams::new(2, -1.0, 1.0, 1.0, 0).is_err());
        assert!(ModelParams::new(2, 1.0, 0.0, 1.0, 0).is_err());
        assert!(ModelParams::new(2, 1.0, 1.0, -1.0, 0).is_err());
    }

    #[test]
    fn header_round_trip() {
        let params = ModelParams::new(2, 1.7, 0.25, 3.0, 99).unwrap();
        let back = ModelParams::from_header(&Header::parse(&params.to_header().emit()).unwrap());
        assert_eq!(back.unwrap(), params);
    }

    proptest! {
        #[test]
        fn psi_is_convex(g in 0.0f64..3.9, a in -3.0f64..3.0, d1 in 0.01f64..2.0, d2 in 0.01f64..2.0) {
            let params = p(2, g);
            let (q1, q3) = (a, a + d1 + d2);
            let q2 = a + d1;
            let w = d1 / (d1 + d2);
            let chord = (1.0 - w) * params.psi(q1) + w * params.psi(q3);
            prop_assert!(params.psi(q2) <= chord + 1e-12);
        }

        #[test]
        fn zeta_one_is_m(g in 0.0f64..1.99, m in 1usize..=2) {
            prop_assert_eq!(p(m, g).zeta(1.0), m as f64);
        }

        #[test]
        fn min_steps_is_minimal(g in 2.0f64..3.95) {
            let params = p(2, g);
            let n = params.min_steps().unwrap();
            let lhs = 2.0 * params.psi(2.0);
            let margin = 2.0 - params.psi_prime_one();
            prop_assert!(lhs < n as f64 * margin);
            if n > 1 {
                prop_assert!(lhs >= (n - 1) as f64 * margin);
            }
        }

        #[test]
        fn omega_moments_are_multiplicative(g in 0.0f64..3.9, l1 in 0.01f64..1.0, l2 in 0.01f64..1.0, q in -2.0f64..4.0) {
            let params = p(2, g);
            let a = params.omega_lambda_moments(l1, q).unwrap();
            let b = params.omega_lambda_moments(l2, q).unwrap();
            let c = params.omega_lambda_moments(l1 * l2, q).unwrap();
            prop_assert!((a * b / c - 1.0).abs() < 1e-10);
        }
    }
}
