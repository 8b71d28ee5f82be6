//! Closed-form helpers for 2x2 complex matrices.

use nalgebra::Matrix2;
use num_complex::Complex;

pub type C = Complex<f64>;
pub type Mat2 = Matrix2<C>;

pub const ZERO: C = Complex::new(0.0, 0.0);
pub const ONE: C = Complex::new(1.0, 0.0);

pub fn ident() -> Mat2 {
    Mat2::identity()
}

/// Matrix 2-norm (largest singular value) from the eigenvalues of `A* A`.
pub fn two_norm(m: &Mat2) -> f64 {
    let g = m.adjoint() * m;
    // g is Hermitian PSD; eigenvalues (t +- sqrt(t^2 - 4d)) / 2
    let t = (g[(0, 0)] + g[(1, 1)]).re;
    let d = (g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)]).re;
    let disc = (t * t - 4.0 * d).max(0.0).sqrt();
    (0.5 * (t + disc)).max(0.0).sqrt()
}

/// Eigenvalues of a general 2x2 complex matrix.
pub fn eigenvalues(m: &Mat2) -> (C, C) {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = (tr * tr * 0.25 - det).sqrt();
    (tr * 0.5 + disc, tr * 0.5 - disc)
}

/// Eigenvalues of a Hermitian 2x2 matrix (real, ascending).
pub fn hermitian_eigenvalues(m: &Mat2) -> (f64, f64) {
    let t = (m[(0, 0)] + m[(1, 1)]).re;
    let d = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re;
    let disc = (t * t - 4.0 * d).max(0.0).sqrt();
    (0.5 * (t - disc), 0.5 * (t + disc))
}

pub fn det2(m: &Mat2) -> C {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

pub fn inv2(m: &Mat2) -> Option<Mat2> {
    let d = det2(m);
    if d.norm() == 0.0 {
        return None;
    }
    let inv = ONE / d;
    Some(Mat2::new(
        m[(1, 1)] * inv,
        -m[(0, 1)] * inv,
        -m[(1, 0)] * inv,
        m[(0, 0)] * inv,
    ))
}

/// QR decomposition `m = q r` with `q` unitary and `r` upper triangular
/// with positive real diagonal. Requires `m` invertible.
pub fn qr_positive(m: &Mat2) -> Option<(Mat2, Mat2)> {
    let a = m.column(0);
    let na = a.norm();
    if na == 0.0 {
        return None;
    }
    let q1 = a / C::new(na, 0.0);
    let b = m.column(1);
    let r12 = q1.dotc(&b);
    let b_perp = b - q1 * r12;
    let nb = b_perp.norm();
    if nb == 0.0 {
        return None;
    }
    let q2 = b_perp / C::new(nb, 0.0);
    let q = Mat2::from_columns(&[q1, q2]);
    let r = Mat2::new(C::new(na, 0.0), r12, ZERO, C::new(nb, 0.0));
    Some((q, r))
}

/// exp(M) for trace-free `M` via `M^2 = -det(M) I`:
/// `exp(M) = cosh(mu) I + sinh(mu)/mu M` with `mu^2 = -det M`.
pub fn exp_tracefree(m: &Mat2) -> Mat2 {
    let mu2 = -det2(m);
    let mu = mu2.sqrt();
    let (ch, shm) = if mu.norm() < 1e-8 {
        // sinh(mu)/mu = 1 + mu^2/6 + mu^4/120
        (
            ONE + mu2 * 0.5 + mu2 * mu2 / 24.0,
            ONE + mu2 / 6.0 + mu2 * mu2 / 120.0,
        )
    } else {
        (mu.cosh(), mu.sinh() / mu)
    };
    Mat2::identity() * ch + m * shm
}

/// Frobenius norm.
pub fn fro_norm(m: &Mat2) -> f64 {
    m.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs_entry(m: &Mat2) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}
