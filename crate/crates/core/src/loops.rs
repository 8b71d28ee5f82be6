//! Banded matrix-valued Laurent loops on circles.
//!
//! A loop is stored as its coefficient band `X_k`, `k in [-K, K]`, with
//! samples at the `N`-th roots of unity cached on demand; FFT converts
//! between the two views. Coefficients are the ground truth, so all
//! arithmetic that can be done exactly on the band is done there, and
//! sample-level arithmetic is exact on the shared grid.

use std::sync::OnceLock;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft;
use crate::linalg::{self, Mat2, C};

/// Matrix-valued loop with a finite Laurent band.
#[derive(Debug, Clone)]
pub struct LaurentLoop {
    band: usize,
    /// `coeffs[i]` is the coefficient of `lambda^(i - band)`.
    coeffs: Vec<Mat2>,
    nsamples: usize,
    radius: f64,
    samples: OnceLock<Vec<Mat2>>,
}

/// Scalar loop; same representation with 1x1 entries.
#[derive(Debug, Clone)]
pub struct ScalarLoop {
    band: usize,
    coeffs: Vec<C>,
    nsamples: usize,
    radius: f64,
    samples: OnceLock<Vec<C>>,
}

fn checked_nsamples(band: usize, nsamples: usize) -> usize {
    assert!(
        nsamples >= 2 * band + 2,
        "nsamples {nsamples} violates nsamples >= 2*band + 2 for band {band}"
    );
    nsamples
}

/// Largest band representable on an `n`-point grid.
pub fn max_band(nsamples: usize) -> usize {
    assert!(nsamples >= 2);
    (nsamples - 2) / 2
}

impl LaurentLoop {
    /// Builds a loop from coefficients for `lambda^k`, `k in [-band, band]`.
    pub fn new(coeffs: Vec<Mat2>, nsamples: usize, radius: f64) -> Self {
        assert!(coeffs.len() % 2 == 1, "coefficient list must have odd length");
        let band = coeffs.len() / 2;
        checked_nsamples(band, nsamples);
        Self { band, coeffs, nsamples, radius, samples: OnceLock::new() }
    }

    pub fn zero(band: usize, nsamples: usize) -> Self {
        Self::new(vec![Mat2::zeros(); 2 * band + 1], nsamples, 1.0)
    }

    pub fn constant(m: Mat2, nsamples: usize) -> Self {
        Self::new(vec![m], nsamples, 1.0)
    }

    pub fn identity(nsamples: usize) -> Self {
        Self::constant(Mat2::identity(), nsamples)
    }

    /// Recovers a loop from samples at the `N`-th roots of unity, keeping the
    /// largest representable band. Returns the magnitude of the largest
    /// discarded coefficient (only the Nyquist bin on even grids).
    pub fn from_samples(samples: &[Mat2], radius: f64) -> (Self, f64) {
        let n = samples.len();
        Self::from_samples_banded(samples, max_band(n), radius)
    }

    /// As [`Self::from_samples`] but truncating to the given band.
    pub fn from_samples_banded(samples: &[Mat2], band: usize, radius: f64) -> (Self, f64) {
        let n = samples.len();
        assert!(n >= 2 * band + 2);
        let mut entry_coeffs = Vec::with_capacity(4);
        let mut discarded: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                let buf: Vec<C> = samples.iter().map(|m| m[(r, c)]).collect();
                let (coeffs, d) = fft::samples_to_coeffs(&buf, band, 0.0);
                discarded = discarded.max(d);
                entry_coeffs.push(coeffs);
            }
        }
        let coeffs: Vec<Mat2> = (0..2 * band + 1)
            .map(|i| {
                Mat2::new(
                    entry_coeffs[0][i],
                    entry_coeffs[1][i],
                    entry_coeffs[2][i],
                    entry_coeffs[3][i],
                )
            })
            .collect();
        (Self::new(coeffs, n, radius), discarded)
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn nsamples(&self) -> usize {
        self.nsamples
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Coefficient of `lambda^k` (zero outside the band).
    pub fn coeff(&self, k: i64) -> Mat2 {
        if k.unsigned_abs() as usize > self.band {
            Mat2::zeros()
        } else {
            self.coeffs[(k + self.band as i64) as usize]
        }
    }

    pub fn coeffs(&self) -> &[Mat2] {
        &self.coeffs
    }

    /// Samples at the `nsamples`-th roots of unity (cached).
    pub fn unit_samples(&self) -> &[Mat2] {
        self.samples.get_or_init(|| self.samples_at(self.nsamples))
    }

    /// Samples on an arbitrary grid size (`n >= 2*band + 2`).
    pub fn samples_at(&self, n: usize) -> Vec<Mat2> {
        let mut entry_samples = Vec::with_capacity(4);
        for r in 0..2 {
            for c in 0..2 {
                let buf: Vec<C> = self.coeffs.iter().map(|m| m[(r, c)]).collect();
                entry_samples.push(fft::coeffs_to_samples(&buf, self.band, n, 0.0));
            }
        }
        (0..n)
            .map(|j| {
                Mat2::new(
                    entry_samples[0][j],
                    entry_samples[1][j],
                    entry_samples[2][j],
                    entry_samples[3][j],
                )
            })
            .collect()
    }

    /// The star operator: `(X*)_k = (X_{-k})^dagger`; on the unit circle the
    /// samples of `X*` are the Hermitian adjoints of the samples of `X`.
    pub fn star(&self) -> Self {
        let coeffs: Vec<Mat2> = (0..self.coeffs.len())
            .map(|i| self.coeffs[self.coeffs.len() - 1 - i].adjoint())
            .collect();
        Self::new(coeffs, self.nsamples, self.radius)
    }

    /// Differentiation with respect to `theta` where `lambda = e^{i theta}`:
    /// `(X')_k = i k X_k`.
    pub fn theta_derivative(&self) -> Self {
        let coeffs: Vec<Mat2> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, m)| m * C::new(0.0, i as f64 - self.band as f64))
            .collect();
        Self::new(coeffs, self.nsamples, self.radius)
    }

    /// Max over sample points on the circle of radius `rho` of the matrix
    /// 2-norm.
    pub fn sup_norm(&self, rho: f64) -> f64 {
        assert!(rho > 0.0);
        let scaled = self.scale_lambda(rho);
        scaled.unit_samples().iter().map(linalg::two_norm).fold(0.0, f64::max)
    }

    /// Loop with coefficients `X_k rho^k`, i.e. `X(rho lambda)`.
    pub fn scale_lambda(&self, rho: f64) -> Self {
        let coeffs: Vec<Mat2> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, m)| m * C::new(rho.powi(i as i32 - self.band as i32), 0.0))
            .collect();
        Self::new(coeffs, self.nsamples, self.radius)
    }

    /// Evaluates the Laurent series at `lambda` by Horner summation in
    /// `lambda` and `1/lambda`. Rejects `lambda = 0` when any negative-index
    /// coefficient is nonzero above the numerical plus tolerance.
    pub fn eval(&self, lambda: C) -> Result<Mat2> {
        if lambda.norm() == 0.0 {
            let neg = self.plus_residual();
            if neg > 1e-9 * self.max_coeff_norm().max(1e-300) {
                return Err(Error::SingularInput(neg));
            }
            return Ok(self.coeff(0));
        }
        // positive part by Horner from the top
        let mut pos = Mat2::zeros();
        for k in (1..=self.band as i64).rev() {
            pos = (pos + self.coeff(k)) * lambda;
        }
        let inv = linalg::ONE / lambda;
        let mut neg = Mat2::zeros();
        for k in (1..=self.band as i64).rev() {
            neg = (neg + self.coeff(-k)) * inv;
        }
        Ok(pos + neg + self.coeff(0))
    }

    /// Full-band product (band `K + L`), computed by coefficient convolution.
    pub fn mul_full(&self, rhs: &Self) -> Self {
        let band = self.band + rhs.band;
        let n = self.nsamples.max(rhs.nsamples).max(2 * band + 2);
        let mut coeffs = vec![Mat2::zeros(); 2 * band + 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            let ka = i as i64 - self.band as i64;
            for (j, b) in rhs.coeffs.iter().enumerate() {
                let kb = j as i64 - rhs.band as i64;
                coeffs[(ka + kb + band as i64) as usize] += a * b;
            }
        }
        Self::new(coeffs, n, self.radius.min(rhs.radius))
    }

    /// Product truncated back to `kmax`, returning the largest dropped
    /// coefficient magnitude.
    pub fn mul_truncated(&self, rhs: &Self, kmax: usize) -> (Self, f64) {
        self.mul_full(rhs).truncate(kmax)
    }

    /// Pointwise product on the common sample grid; exact on the grid, band
    /// limited to what the grid can carry.
    pub fn mul_samplewise(&self, rhs: &Self) -> Self {
        let n = self.nsamples.max(rhs.nsamples);
        let a = self.samples_at(n);
        let b = rhs.samples_at(n);
        let prod: Vec<Mat2> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        Self::from_samples(&prod, self.radius.min(rhs.radius)).0
    }

    /// Pointwise inverse on the sample grid.
    pub fn inverse_samplewise(&self) -> Result<Self> {
        let mut min_det = f64::INFINITY;
        let inv: Option<Vec<Mat2>> = self
            .unit_samples()
            .iter()
            .map(|m| {
                min_det = min_det.min(linalg::det2(m).norm());
                linalg::inv2(m)
            })
            .collect();
        match inv {
            Some(v) => Ok(Self::from_samples(&v, self.radius).0),
            None => Err(Error::SingularInput(min_det)),
        }
    }

    /// Truncates to band `kmax`, returning the largest dropped coefficient.
    pub fn truncate(&self, kmax: usize) -> (Self, f64) {
        if kmax >= self.band {
            return (self.clone(), 0.0);
        }
        let mut dropped: f64 = 0.0;
        for k in (kmax as i64 + 1)..=(self.band as i64) {
            dropped = dropped.max(linalg::max_abs_entry(&self.coeff(k)));
            dropped = dropped.max(linalg::max_abs_entry(&self.coeff(-k)));
        }
        let coeffs: Vec<Mat2> =
            (-(kmax as i64)..=kmax as i64).map(|k| self.coeff(k)).collect();
        (Self::new(coeffs, self.nsamples, self.radius), dropped)
    }

    /// Re-grids the loop to `n` samples (coefficients unchanged).
    pub fn with_nsamples(&self, n: usize) -> Self {
        checked_nsamples(self.band, n);
        Self::new(self.coeffs.clone(), n, self.radius)
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let band = self.band.max(rhs.band);
        let n = self.nsamples.max(rhs.nsamples);
        let coeffs: Vec<Mat2> =
            (-(band as i64)..=band as i64).map(|k| self.coeff(k) + rhs.coeff(k)).collect();
        Self::new(coeffs, n, self.radius.min(rhs.radius))
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        let band = self.band.max(rhs.band);
        let n = self.nsamples.max(rhs.nsamples);
        let coeffs: Vec<Mat2> =
            (-(band as i64)..=band as i64).map(|k| self.coeff(k) - rhs.coeff(k)).collect();
        Self::new(coeffs, n, self.radius.min(rhs.radius))
    }

    pub fn scale(&self, s: C) -> Self {
        let coeffs: Vec<Mat2> = self.coeffs.iter().map(|m| m * s).collect();
        Self::new(coeffs, self.nsamples, self.radius)
    }

    /// Extracts one matrix entry as a scalar loop.
    pub fn entry(&self, r: usize, c: usize) -> ScalarLoop {
        let coeffs: Vec<C> = self.coeffs.iter().map(|m| m[(r, c)]).collect();
        ScalarLoop::new(coeffs, self.nsamples, self.radius)
    }

    /// Determinant as a scalar loop (exact band `2K`).
    pub fn det_loop(&self) -> ScalarLoop {
        let a = self.entry(0, 0).mul_full(&self.entry(1, 1));
        let b = self.entry(0, 1).mul_full(&self.entry(1, 0));
        a.sub(&b)
    }

    /// Max magnitude of a negative-index coefficient ("plus" deviation).
    pub fn plus_residual(&self) -> f64 {
        (0..self.band)
            .map(|i| linalg::max_abs_entry(&self.coeffs[i]))
            .fold(0.0, f64::max)
    }

    /// Max over unit-circle samples of `|X X^dagger - I|` (reality-condition
    /// deviation).
    pub fn reality_residual(&self) -> f64 {
        self.unit_samples()
            .iter()
            .map(|m| linalg::two_norm(&(m * m.adjoint() - Mat2::identity())))
            .fold(0.0, f64::max)
    }

    /// Max coefficient deviation from `X = X*`.
    pub fn hermitian_symmetry_residual(&self) -> f64 {
        (0..=self.band as i64)
            .map(|k| linalg::max_abs_entry(&(self.coeff(k) - self.coeff(-k).adjoint())))
            .fold(0.0, f64::max)
    }

    pub fn max_coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(linalg::max_abs_entry).fold(0.0, f64::max)
    }
}

impl ScalarLoop {
    pub fn new(coeffs: Vec<C>, nsamples: usize, radius: f64) -> Self {
        assert!(coeffs.len() % 2 == 1);
        let band = coeffs.len() / 2;
        checked_nsamples(band, nsamples);
        Self { band, coeffs, nsamples, radius, samples: OnceLock::new() }
    }

    pub fn constant(v: C, nsamples: usize) -> Self {
        Self::new(vec![v], nsamples, 1.0)
    }

    pub fn from_samples(samples: &[C], radius: f64) -> (Self, f64) {
        let n = samples.len();
        let (coeffs, d) = fft::samples_to_coeffs(samples, max_band(n), 0.0);
        (Self::new(coeffs, n, radius), d)
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn nsamples(&self) -> usize {
        self.nsamples
    }

    pub fn coeff(&self, k: i64) -> C {
        if k.unsigned_abs() as usize > self.band {
            linalg::ZERO
        } else {
            self.coeffs[(k + self.band as i64) as usize]
        }
    }

    pub fn coeffs(&self) -> &[C] {
        &self.coeffs
    }

    pub fn unit_samples(&self) -> &[C] {
        self.samples.get_or_init(|| self.samples_at(self.nsamples))
    }

    pub fn samples_at(&self, n: usize) -> Vec<C> {
        fft::coeffs_to_samples(&self.coeffs, self.band, n, 0.0)
    }

    /// Samples on the rotated grid `lambda_j = e^{i(2 pi j / n + phase)}`.
    pub fn samples_rotated(&self, n: usize, phase: f64) -> Vec<C> {
        fft::coeffs_to_samples(&self.coeffs, self.band, n, phase)
    }

    pub fn star(&self) -> Self {
        let coeffs: Vec<C> =
            (0..self.coeffs.len()).map(|i| self.coeffs[self.coeffs.len() - 1 - i].conj()).collect();
        Self::new(coeffs, self.nsamples, self.radius)
    }

    pub fn theta_derivative(&self) -> Self {
        let coeffs: Vec<C> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, v)| v * C::new(0.0, i as f64 - self.band as f64))
            .collect();
        Self::new(coeffs, self.nsamples, self.radius)
    }

    pub fn eval(&self, lambda: C) -> Result<C> {
        if lambda.norm() == 0.0 {
            let neg = self.plus_residual();
            if neg > 1e-9 * self.max_coeff_norm().max(1e-300) {
                return Err(Error::SingularInput(neg));
            }
            return Ok(self.coeff(0));
        }
        let mut pos = linalg::ZERO;
        for k in (1..=self.band as i64).rev() {
            pos = (pos + self.coeff(k)) * lambda;
        }
        let inv = linalg::ONE / lambda;
        let mut neg = linalg::ZERO;
        for k in (1..=self.band as i64).rev() {
            neg = (neg + self.coeff(-k)) * inv;
        }
        Ok(pos + neg + self.coeff(0))
    }

    /// Evaluates at `e^{i theta}` directly from the band (no grid).
    pub fn eval_theta(&self, theta: f64) -> C {
        self.eval(C::from_polar(1.0, theta)).expect("unit lambda is nonzero")
    }

    pub fn mul_full(&self, rhs: &Self) -> Self {
        let band = self.band + rhs.band;
        let n = self.nsamples.max(rhs.nsamples).max(2 * band + 2);
        let mut coeffs = vec![linalg::ZERO; 2 * band + 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            let ka = i as i64 - self.band as i64;
            for (j, b) in rhs.coeffs.iter().enumerate() {
                let kb = j as i64 - rhs.band as i64;
                coeffs[(ka + kb + band as i64) as usize] += a * b;
            }
        }
        Self::new(coeffs, n, self.radius.min(rhs.radius))
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        let band = self.band.max(rhs.band);
        let n = self.nsamples.max(rhs.nsamples);
        let coeffs: Vec<C> =
            (-(band as i64)..=band as i64).map(|k| self.coeff(k) - rhs.coeff(k)).collect();
        Self::new(coeffs, n, self.radius.min(rhs.radius))
    }

    /// Max coefficient deviation from `f = f*` (real on the unit circle).
    pub fn real_symmetry_residual(&self) -> f64 {
        (0..=self.band as i64)
            .map(|k| (self.coeff(k) - self.coeff(-k).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn plus_residual(&self) -> f64 {
        (0..self.band).map(|i| self.coeffs[i].norm()).fold(0.0, f64::max)
    }

    pub fn max_coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}
