//! Loop factorization engines.
//!
//! Three factorizations drive the pipeline:
//! - a scalar spectral factorization `f = h* h` for nonnegative circle
//!   functions, with explicit deflation of double zeros on the circle,
//! - an Iwasawa factorization `X = F B` (`F` satisfying the reality
//!   condition, `B` a positive loop), computed through a Wilson-type
//!   Newton iteration on `G = X* X`,
//! - a singular matrix Birkhoff factorization `f X = C* C` for positive
//!   semidefinite loops, built from the two above.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft;
use crate::linalg::{self, Mat2, C, ONE, ZERO};
use crate::loops::{max_band, LaurentLoop, ScalarLoop};

/// Iteration controls for the Wilson spectral factorization.
#[derive(Debug, Clone)]
pub struct IwasawaParams {
    /// Maximum Newton iterations.
    pub max_iters: usize,
    /// Relative successive-iterate change declaring convergence.
    pub tol: f64,
    /// Output band limit (defaults to the largest the grid carries).
    pub out_band: Option<usize>,
}

impl Default for IwasawaParams {
    fn default() -> Self {
        Self { max_iters: 200, tol: 1e-12, out_band: None }
    }
}

/// Result of the Iwasawa factorization `X = F B`.
#[derive(Debug, Clone)]
pub struct IwasawaResult {
    /// Unitary part (reality condition on the unit circle).
    pub f: LaurentLoop,
    /// Positive part: plus loop with `B(0)` upper triangular, positive
    /// real diagonal.
    pub b: LaurentLoop,
    /// Max sample error of `X - F B` for the returned (band-limited) loops.
    pub residual_recon: f64,
    /// Max sample error of `F F* - I`.
    pub residual_reality: f64,
    /// Max magnitude of a negative-index coefficient of `B`.
    pub residual_plus: f64,
}

/// Result of the scalar spectral factorization `f = h* h`.
#[derive(Debug, Clone)]
pub struct ScalarFactorization {
    /// Plus factor, normalized so `h(0)` is real positive.
    pub h: ScalarLoop,
    /// Detected unit-modulus zeros of `f` (each of multiplicity two).
    pub zeros: Vec<C>,
    /// Max sample error of `h* h - f`.
    pub residual: f64,
}

/// Result of the singular matrix Birkhoff factorization `f X = C* C`.
#[derive(Debug, Clone)]
pub struct MatrixBirkhoff {
    /// Plus loop with `C(0)` upper triangular, positive real diagonal.
    pub c: LaurentLoop,
    /// The scalar factor `f = x_11`.
    pub f: ScalarLoop,
    /// Max sample error of `f X - C* C`.
    pub residual: f64,
    /// Circle zeros of `det X` (angles in `[0, 2 pi)`).
    pub det_x_zeros: Vec<f64>,
}

// ---------------------------------------------------------------------------
// circle zero detection
// ---------------------------------------------------------------------------

/// Locates the zeros of a real nonnegative circle function.
///
/// Local sample minima below a loose screen are refined by Newton iteration
/// on `f'` using exact trigonometric-polynomial evaluation; a refined
/// minimum is certified as a zero when `f < rel_threshold * max f` there
/// (a zero landing between grid points still leaves its neighboring samples
/// well above `rel_threshold`, hence the two-stage test), and as
/// multiplicity two by `f''`. Returns angles in `[0, 2 pi)`.
pub fn find_circle_zeros(f: &ScalarLoop, rel_threshold: f64) -> Result<Vec<f64>> {
    let n = f.nsamples();
    let samples: Vec<f64> = f.unit_samples().iter().map(|v| v.re).collect();
    let max_f = samples.iter().cloned().fold(0.0, f64::max);
    if max_f <= 0.0 {
        return Ok(Vec::new());
    }
    let screen = 1e-3 * max_f;
    let d1 = f.theta_derivative();
    let d2 = d1.theta_derivative();
    let dtheta = 2.0 * std::f64::consts::PI / n as f64;

    let mut zeros: Vec<f64> = Vec::new();
    for j in 0..n {
        let prev = samples[(j + n - 1) % n];
        let next = samples[(j + 1) % n];
        if samples[j] > screen || samples[j] > prev || samples[j] > next {
            continue;
        }
        let center = j as f64 * dtheta;
        let mut theta = center;
        for _ in 0..80 {
            let g = d1.eval_theta(theta).re;
            let gg = d2.eval_theta(theta).re;
            if gg.abs() < 1e-300 {
                break;
            }
            let step = (g / gg).clamp(-dtheta, dtheta);
            theta = (theta - step).clamp(center - 1.5 * dtheta, center + 1.5 * dtheta);
            if step.abs() < 1e-15 {
                break;
            }
        }
        let fval = f.eval_theta(theta).re;
        if fval > rel_threshold * max_f {
            continue; // shallow dip, not a zero
        }
        let curv = d2.eval_theta(theta).re;
        if curv < 1e-6 * max_f {
            return Err(Error::HigherOrderZero { theta, second_deriv: curv });
        }
        let theta = theta.rem_euclid(2.0 * std::f64::consts::PI);
        if zeros.iter().all(|z| {
            let d = (z - theta).rem_euclid(2.0 * std::f64::consts::PI);
            d.min(2.0 * std::f64::consts::PI - d) > 0.25 * dtheta
        }) {
            zeros.push(theta);
        }
    }
    zeros.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(zeros)
}

// ---------------------------------------------------------------------------
// scalar spectral factorization
// ---------------------------------------------------------------------------

/// Factors a real nonnegative circle function as `f = h* h` with `h` a plus
/// loop without zeros in the open disk; double zeros of `f` on the circle
/// become simple zeros of `h`.
pub fn scalar_spectral_factor(f: &ScalarLoop) -> Result<ScalarFactorization> {
    let n = f.nsamples();
    let scale = f.max_coeff_norm();
    if scale < 1e-300 {
        return Err(Error::IdenticallyZero);
    }
    let sym = f.real_symmetry_residual();
    if sym > 1e-10 * scale {
        return Err(Error::NotRealSymmetric(sym));
    }
    let samples: Vec<f64> = f.unit_samples().iter().map(|v| v.re).collect();
    let max_f = samples.iter().cloned().fold(f64::MIN, f64::max);
    let min_f = samples.iter().cloned().fold(f64::MAX, f64::min);
    if min_f < -1e-10 * scale {
        return Err(Error::NegativeSamples(min_f));
    }
    if max_f <= 0.0 {
        return Err(Error::IdenticallyZero);
    }

    let zero_thetas = find_circle_zeros(f, 1e-8)?;

    // Rotate the sample grid so no sample sits on a zero.
    let dtheta = 2.0 * std::f64::consts::PI / n as f64;
    let phase = if zero_thetas.is_empty() {
        0.0
    } else {
        let score = |phi: f64| -> f64 {
            zero_thetas
                .iter()
                .map(|t| {
                    let d = (t - phi).rem_euclid(dtheta);
                    d.min(dtheta - d)
                })
                .fold(f64::MAX, f64::min)
        };
        let mut best = (0.0, score(0.0));
        for i in 1..64 {
            let phi = dtheta * i as f64 / 64.0;
            let s = score(phi);
            if s > best.1 {
                best = (phi, s);
            }
        }
        best.0
    };

    let zeros: Vec<C> = zero_thetas.iter().map(|&t| C::from_polar(1.0, t)).collect();
    let f_rot = f.samples_rotated(n, phase);
    let q_at = |lam: C| -> C { zeros.iter().map(|a| lam - a).product() };

    // g = f / (q* q); on the circle q* q = |q|^2
    let mut log_g = vec![ZERO; n];
    for j in 0..n {
        let lam = C::from_polar(1.0, j as f64 * dtheta + phase);
        let qq = q_at(lam).norm_sqr().max(1e-300);
        let g = (f_rot[j].re / qq).max(1e-16 * max_f);
        log_g[j] = C::new(g.ln(), 0.0);
    }

    // Szego step: h0 = exp(P_+ log g) with the constant term halved.
    // The bins carry the grid rotation as a diagonal-in-k factor, so the
    // plus projection commutes with it and the inverse FFT lands back on
    // the rotated grid.
    let mut bins = log_g;
    fft::forward(&mut bins);
    let nf = n as f64;
    for (j, v) in bins.iter_mut().enumerate() {
        let k = fft::bin_to_index(j, n);
        *v /= nf;
        if k == 0 {
            *v *= 0.5;
        } else if k < 0 {
            *v = ZERO;
        }
    }
    let mut p_samples = bins;
    fft::inverse(&mut p_samples);
    let h_rot: Vec<C> = (0..n)
        .map(|j| {
            let lam = C::from_polar(1.0, j as f64 * dtheta + phase);
            p_samples[j].exp() * q_at(lam)
        })
        .collect();

    let (mut h_coeffs, _) = fft::samples_to_coeffs(&h_rot, max_band(n), phase);
    // clear aliasing-level negative coefficients: h is a plus loop
    let band = max_band(n);
    for k in 0..band {
        h_coeffs[k] = ZERO;
    }
    let mut h = ScalarLoop::new(h_coeffs, n, 1.0);

    // unimodular normalization: h(0) real positive
    let h0 = h.eval(ZERO)?;
    if h0.norm() > 0.0 {
        let u = h0.conj() / h0.norm();
        let coeffs: Vec<C> = h.coeffs().iter().map(|c| c * u).collect();
        h = ScalarLoop::new(coeffs, n, 1.0);
    }

    let residual = h
        .unit_samples()
        .iter()
        .zip(f.unit_samples())
        .map(|(hv, fv)| (hv.norm_sqr() - fv.re).abs())
        .fold(0.0, f64::max);

    Ok(ScalarFactorization { h, zeros, residual })
}

// ---------------------------------------------------------------------------
// Iwasawa factorization via Wilson iteration
// ---------------------------------------------------------------------------

/// Upper Cholesky factor `R` (positive real diagonal) with `R* R = g`.
fn upper_cholesky(g: &Mat2) -> Option<Mat2> {
    let g11 = g[(0, 0)].re;
    if g11 <= 0.0 {
        return None;
    }
    let r11 = g11.sqrt();
    let r12 = g[(0, 1)] / r11;
    let t = g[(1, 1)].re - r12.norm_sqr();
    if t <= 0.0 {
        return None;
    }
    Some(Mat2::new(C::new(r11, 0.0), r12, ZERO, C::new(t.sqrt(), 0.0)))
}

/// Plus-half projection of a Hermitian-symmetric sample curve: keeps
/// positive-frequency bins, halves the constant term.
fn plus_half_project(mats: &mut [Mat2]) {
    let n = mats.len();
    for r in 0..2 {
        for c in 0..2 {
            let mut buf: Vec<C> = mats.iter().map(|m| m[(r, c)]).collect();
            fft::forward(&mut buf);
            let nf = n as f64;
            for (j, v) in buf.iter_mut().enumerate() {
                let k = fft::bin_to_index(j, n);
                *v /= nf;
                if k == 0 {
                    *v *= 0.5;
                } else if k < 0 {
                    *v = ZERO;
                }
            }
            fft::inverse(&mut buf);
            for (m, v) in mats.iter_mut().zip(buf) {
                m[(r, c)] = v;
            }
        }
    }
}

/// Iwasawa factorization `X = F B` through the identity `B* B = X* X`.
///
/// `G = X* X` is formed on the sample grid (plus `regularization * |G|`
/// ridge), factored as `B* B` by a Wilson-type Newton iteration on the
/// Laurent coefficients, and `F = X B^{-1}`.
pub fn iwasawa(x: &LaurentLoop, regularization: f64) -> Result<IwasawaResult> {
    iwasawa_with(x, regularization, &IwasawaParams::default())
}

pub fn iwasawa_with(
    x: &LaurentLoop,
    regularization: f64,
    params: &IwasawaParams,
) -> Result<IwasawaResult> {
    let n = x.nsamples();
    let xs = x.unit_samples();

    let mut g: Vec<Mat2> = xs.iter().map(|m| m.adjoint() * m).collect();
    let gscale = g.iter().map(linalg::two_norm).fold(0.0, f64::max);
    if regularization > 0.0 {
        let ridge = C::new(regularization * gscale, 0.0);
        for m in g.iter_mut() {
            m[(0, 0)] += ridge;
            m[(1, 1)] += ridge;
        }
    }
    let mut min_eig = f64::MAX;
    for m in &g {
        min_eig = min_eig.min(linalg::hermitian_eigenvalues(m).0);
    }
    if min_eig <= 0.0 {
        return Err(Error::SingularInput(min_eig));
    }

    // Wilson init: constant upper Cholesky factor of the mean coefficient.
    let g_mean = g.iter().sum::<Mat2>() / C::new(n as f64, 0.0);
    let b_init =
        upper_cholesky(&g_mean).ok_or(Error::SingularInput(min_eig))?;
    let mut b: Vec<Mat2> = vec![b_init; n];

    let mut last_update = f64::MAX;
    let mut converged = false;
    for _ in 0..params.max_iters {
        // T = B^{-*} G B^{-1}; U = I/2 + P_+half(T); B <- U B
        let mut t = Vec::with_capacity(n);
        for j in 0..n {
            let binv = linalg::inv2(&b[j]).ok_or(Error::SingularInput(0.0))?;
            t.push(binv.adjoint() * g[j] * binv);
        }
        plus_half_project(&mut t);
        let half = Mat2::identity() * C::new(0.5, 0.0);
        let mut delta: f64 = 0.0;
        for j in 0..n {
            let u = t[j] + half;
            delta = delta.max(linalg::two_norm(&(u - Mat2::identity())));
            b[j] = u * b[j];
        }
        last_update = delta;
        if delta <= params.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SpectralFactorizationDiverged {
            iters: params.max_iters,
            last_update,
        });
    }

    // Normalize so B(0) is upper triangular with positive real diagonal.
    let b0 = b.iter().sum::<Mat2>() / C::new(n as f64, 0.0);
    let (q, _) = linalg::qr_positive(&b0).ok_or(Error::SingularInput(0.0))?;
    let qh = q.adjoint();
    for m in b.iter_mut() {
        *m = qh * *m;
    }

    // plus residual from the raw bins before truncation
    let mut residual_plus: f64 = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            let mut buf: Vec<C> = b.iter().map(|m| m[(r, c)]).collect();
            fft::forward(&mut buf);
            for (j, v) in buf.iter().enumerate() {
                if fft::bin_to_index(j, n) < 0 {
                    residual_plus = residual_plus.max(v.norm() / n as f64);
                }
            }
        }
    }

    let f_samples: Vec<Mat2> = (0..n)
        .map(|j| {
            let binv = linalg::inv2(&b[j]).expect("B invertible at convergence");
            xs[j] * binv
        })
        .collect();

    let out_band = params.out_band.unwrap_or(max_band(n)).min(max_band(n));
    let (f_loop, _) = LaurentLoop::from_samples_banded(&f_samples, out_band, x.radius());
    let (b_loop, _) = LaurentLoop::from_samples_banded(&b, out_band, x.radius());

    let fs = f_loop.samples_at(n);
    let bs = b_loop.samples_at(n);
    let residual_recon = (0..n)
        .map(|j| linalg::two_norm(&(xs[j] - fs[j] * bs[j])))
        .fold(0.0, f64::max);
    let residual_reality = f_loop.reality_residual();

    Ok(IwasawaResult { f: f_loop, b: b_loop, residual_recon, residual_reality, residual_plus })
}

// ---------------------------------------------------------------------------
// singular matrix Birkhoff factorization
// ---------------------------------------------------------------------------

/// Factors a positive semidefinite Hermitian-symmetric loop as
/// `f X = C* C` with `C` a plus loop and `f = x_11`.
pub fn matrix_singular_birkhoff(x: &LaurentLoop) -> Result<MatrixBirkhoff> {
    let n = x.nsamples();
    let xs = x.unit_samples();
    let scale = xs.iter().map(linalg::two_norm).fold(0.0, f64::max);
    if scale < 1e-300 {
        return Err(Error::IdenticallyZero);
    }
    let herm = x.hermitian_symmetry_residual();
    if herm > 1e-8 * scale {
        return Err(Error::NotHermitianSymmetric(herm));
    }
    let mut min_eig = f64::MAX;
    for m in xs {
        let h = (m + m.adjoint()) * C::new(0.5, 0.0);
        min_eig = min_eig.min(linalg::hermitian_eigenvalues(&h).0);
    }
    if min_eig < -1e-9 * scale {
        return Err(Error::NotPsd(min_eig));
    }

    let d = x.det_loop();
    let d_max = d.unit_samples().iter().map(|v| v.re).fold(0.0, f64::max);
    if d_max <= 1e-12 * scale * scale {
        return Err(Error::DegenerateDeterminant);
    }
    let d_grid = ScalarLoop::from_samples(d.unit_samples(), 1.0).0;
    let det_fact = scalar_spectral_factor(&d_grid)?;

    // Y = [[x11, x12], [0, e]] satisfies Y* Y = x11 X on the circle.
    // e may carry a finer band than the x grid holds; evaluate it pointwise.
    let e_samples: Vec<C> = (0..n)
        .map(|j| det_fact.h.eval_theta(2.0 * std::f64::consts::PI * j as f64 / n as f64))
        .collect();
    let y_samples: Vec<Mat2> = (0..n)
        .map(|j| Mat2::new(xs[j][(0, 0)], xs[j][(0, 1)], ZERO, e_samples[j]))
        .collect();
    let (y, _) = LaurentLoop::from_samples(&y_samples, x.radius());

    // det Y vanishes on the circle at zeros of x11 or e; ridge restores PD.
    let iw = iwasawa(&y, 1e-12)?;
    let c = iw.b;
    let f = x.entry(0, 0);

    let cs = c.samples_at(n);
    let fs = f.samples_at(n);
    let residual = (0..n)
        .map(|j| linalg::two_norm(&(xs[j] * fs[j] - cs[j].adjoint() * cs[j])))
        .fold(0.0, f64::max);

    let det_x_zeros = det_fact.zeros.iter().map(|z| z.arg().rem_euclid(2.0 * std::f64::consts::PI)).collect();

    Ok(MatrixBirkhoff { c, f, residual, det_x_zeros })
}
