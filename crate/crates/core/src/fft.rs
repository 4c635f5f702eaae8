//! Multi-axis complex FFT over lattice arrays, with a process-wide plan
//! cache. The forward transform normalizes by `1/N` per transformed axis, so
//! a constant field has coefficient `c` at frequency zero and the inverse
//! transform applies no factor; partial-axis transforms compose to the full
//! one.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::lattice::AnisotropicLattice;

pub type Spectrum = Vec<Complex<f64>>;

fn plan(len: usize, dir: FftDirection) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<Mutex<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().unwrap();
    let key = (len, dir == FftDirection::Forward);
    if let Some(f) = guard.1.get(&key) {
        return f.clone();
    }
    let f = guard.0.plan_fft(len, dir);
    guard.1.insert(key, f.clone());
    f
}

fn transform_axis(data: &mut [Complex<f64>], n: usize, stride: usize, fft: &dyn Fft<f64>) {
    let block = n * stride;
    let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
    if stride == 1 {
        for chunk in data.chunks_exact_mut(n) {
            fft.process_with_scratch(chunk, &mut scratch);
        }
        return;
    }
    let mut line = vec![Complex::default(); n];
    for b0 in (0..data.len()).step_by(block) {
        for off in 0..stride {
            for (k, slot) in line.iter_mut().enumerate() {
                *slot = data[b0 + off + k * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (k, slot) in line.iter().enumerate() {
                data[b0 + off + k * stride] = *slot;
            }
        }
    }
}

/// Transform the given axes in place. Forward axes are normalized by `1/n`.
pub fn fft_axes(lattice: &AnisotropicLattice, data: &mut [Complex<f64>], axes: &[usize], forward: bool) {
    debug_assert_eq!(data.len(), lattice.node_count());
    let total_axes = lattice.num_axes();
    let dir = if forward { FftDirection::Forward } else { FftDirection::Inverse };
    for &a in axes {
        let n = lattice.axis_len(a);
        let stride: usize = (a + 1..total_axes).map(|b| lattice.axis_len(b)).product();
        let fft = plan(n, dir);
        transform_axis(data, n, stride, fft.as_ref());
        if forward {
            let s = 1.0 / n as f64;
            for v in data.iter_mut() {
                *v *= s;
            }
        }
    }
}

pub fn all_axes(lattice: &AnisotropicLattice) -> Vec<usize> {
    (0..lattice.num_axes()).collect()
}

/// Transform a free-standing multi-axis array (row-major over `dims`), all
/// axes. Forward is normalized by `1/len`.
pub fn fft_nd(dims: &[usize], data: &mut [Complex<f64>], forward: bool) {
    debug_assert_eq!(data.len(), dims.iter().product::<usize>());
    let dir = if forward { FftDirection::Forward } else { FftDirection::Inverse };
    for (a, &n) in dims.iter().enumerate() {
        let stride: usize = dims[a + 1..].iter().product();
        let fft = plan(n, dir);
        transform_axis(data, n, stride, fft.as_ref());
        if forward {
            let s = 1.0 / n as f64;
            for v in data.iter_mut() {
                *v *= s;
            }
        }
    }
}

/// Full forward transform of a real scalar buffer.
pub fn forward(lattice: &AnisotropicLattice, data: &[f64]) -> Spectrum {
    let mut buf: Spectrum = data.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft_axes(lattice, &mut buf, &all_axes(lattice), true);
    buf
}

/// Full inverse transform in place.
pub fn inverse(lattice: &AnisotropicLattice, spec: &mut Spectrum) {
    fft_axes(lattice, spec, &all_axes(lattice), false);
}

/// Extract the real part, rejecting imaginary residue above `tol` relative
/// to the field scale (a residue signals a broken Hermitian symmetry).
pub fn to_real(spec: &Spectrum, tol: f64) -> Result<Vec<f64>> {
    let scale = spec.iter().fold(0.0f64, |m, c| m.max(c.re.abs())).max(1.0);
    let mut residue = 0.0f64;
    for c in spec {
        residue = residue.max(c.im.abs());
    }
    if residue > tol * scale {
        return Err(Error::NonRealOutput { residue, tol: tol * scale });
    }
    Ok(spec.iter().map(|c| c.re).collect())
}

/// Apply a real multiplier table to a spectrum in place.
pub fn apply_real_multiplier(spec: &mut Spectrum, mult: &[f64]) {
    debug_assert_eq!(spec.len(), mult.len());
    for (c, &m) in spec.iter_mut().zip(mult.iter()) {
        *c *= m;
    }
}
