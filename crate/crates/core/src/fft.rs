//! Shared FFT plumbing: cached plans and the sample/coefficient index maps
//! used by the loop types.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

type C = Complex<f64>;

struct PlanCache {
    planner: FftPlanner<f64>,
    forward: HashMap<usize, Arc<dyn Fft<f64>>>,
    inverse: HashMap<usize, Arc<dyn Fft<f64>>>,
}

fn cache() -> &'static Mutex<PlanCache> {
    static CACHE: OnceLock<Mutex<PlanCache>> = OnceLock::new();
    CACHE.get_or_init(|| {
        Mutex::new(PlanCache {
            planner: FftPlanner::new(),
            forward: HashMap::new(),
            inverse: HashMap::new(),
        })
    })
}

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    let mut guard = cache().lock().unwrap();
    let PlanCache { planner, forward: fw, inverse: inv } = &mut *guard;
    let map = if forward { fw } else { inv };
    map.entry(n)
        .or_insert_with(|| {
            if forward {
                planner.plan_fft_forward(n)
            } else {
                planner.plan_fft_inverse(n)
            }
        })
        .clone()
}

/// Unnormalized forward DFT in place: `X_k = sum_n x_n e^{-2 pi i k n / N}`.
pub fn forward(buf: &mut [C]) {
    plan(buf.len(), true).process(buf);
}

/// Unnormalized inverse DFT in place: `x_n = sum_k X_k e^{+2 pi i k n / N}`.
pub fn inverse(buf: &mut [C]) {
    plan(buf.len(), false).process(buf);
}

/// Laurent index for DFT bin `j` of an `n`-point transform.
///
/// Bins above `n/2` represent negative frequencies; the Nyquist bin of an
/// even-length transform is assigned to `-n/2`.
pub fn bin_to_index(j: usize, n: usize) -> i64 {
    let j = j as i64;
    let n = n as i64;
    if 2 * j < n {
        j
    } else {
        j - n
    }
}

/// DFT bin holding Laurent index `k` (requires `|k| <= n/2`).
pub fn index_to_bin(k: i64, n: usize) -> usize {
    let n = n as i64;
    debug_assert!(2 * k.abs() <= n);
    (k.rem_euclid(n)) as usize
}

/// Samples of the trigonometric polynomial with Laurent coefficients
/// `coeffs[k + band]` for `k in [-band, band]`, at the `n` points
/// `lambda_j = e^{2 pi i j / n}` (optionally rotated by `phase`).
pub fn coeffs_to_samples(coeffs: &[C], band: usize, n: usize, phase: f64) -> Vec<C> {
    debug_assert_eq!(coeffs.len(), 2 * band + 1);
    debug_assert!(n >= 2 * band + 2, "n = {n} too small for band {band}");
    let mut buf = vec![C::new(0.0, 0.0); n];
    for (i, &c) in coeffs.iter().enumerate() {
        let k = i as i64 - band as i64;
        let rot = if phase == 0.0 {
            C::new(1.0, 0.0)
        } else {
            C::from_polar(1.0, k as f64 * phase)
        };
        buf[index_to_bin(k, n)] = c * rot;
    }
    inverse(&mut buf);
    buf
}

/// Inverse of [`coeffs_to_samples`]: recovers Laurent coefficients on the
/// band `[-band, band]` from `n` equispaced samples, discarding (and
/// reporting) the energy outside the band.
///
/// Returns `(coeffs, discarded)` where `discarded` is the maximum magnitude
/// of a dropped coefficient.
pub fn samples_to_coeffs(samples: &[C], band: usize, phase: f64) -> (Vec<C>, f64) {
    let n = samples.len();
    debug_assert!(n >= 2 * band + 2);
    let mut buf = samples.to_vec();
    forward(&mut buf);
    let scale = 1.0 / n as f64;
    let mut coeffs = vec![C::new(0.0, 0.0); 2 * band + 1];
    let mut discarded: f64 = 0.0;
    for (j, &v) in buf.iter().enumerate() {
        let k = bin_to_index(j, n);
        let v = v * scale;
        if k.unsigned_abs() as usize <= band {
            let rot = if phase == 0.0 {
                C::new(1.0, 0.0)
            } else {
                C::from_polar(1.0, -(k as f64) * phase)
            };
            coeffs[(k + band as i64) as usize] = v * rot;
        } else {
            discarded = discarded.max(v.norm());
        }
    }
    (coeffs, discarded)
}
