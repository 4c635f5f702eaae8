//! The explicit kinetic kernel, the shear, the semigroup `P_t` and the
//! Duhamel integral.
//!
//! `p_t` is the Gaussian density of `(sqrt(2) int_0^t B_s ds, sqrt(2) B_t)`;
//! per dimension its covariance is `[[2t^3/3, t^2], [t^2, 2t]]`. The
//! semigroup acts as `P_t f = Gamma_t (p_t * f)` with the shear
//! `Gamma_t f(x,v) = f(x - t v, v)`, and the Duhamel integral is
//! `I_t^lambda(f) = int_0^t e^{-lambda(t-s)} P_{t-s} f_s ds`, discretized by
//! a left-endpoint Riemann sum (trapezoid available as an option).
//!
//! The discrete kernel is sampled on the lattice in the wrap-to-negative
//! offset layout and renormalized to unit discrete mass before convolving,
//! so convolution preserves means exactly and nonnegativity up to roundoff.
//! Below `t_min` the kernel width falls under the grid spacing; the
//! operator then degrades to pure shear and logs a warning instead of
//! aliasing.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft::{self, Spectrum};
use crate::lattice::{AnisotropicLattice, LatticeField};

/// Gaussian kernel density of the free kinetic flow at time `t > 0`,
/// evaluated at position `x` and velocity `v` (each of dimension `d`).
pub fn kernel_density(t: f64, x: &[f64], v: &[f64]) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    debug_assert_eq!(x.len(), v.len());
    let d = x.len() as i32;
    let mut q = 0.0;
    for (xi, vi) in x.iter().zip(v.iter()) {
        let w = 3.0 * xi - 2.0 * t * vi;
        q += 3.0 * xi * xi + w * w;
    }
    let norm = (4.0 * std::f64::consts::PI * std::f64::consts::PI * t.powi(4) / 3.0)
        .powf(-0.5 * d as f64);
    Ok(norm * (-q / (4.0 * t.powi(3))).exp())
}

/// Shear `Gamma_t f(x, v) = f(x - t v, v)`, realized per v-slice as an exact
/// Fourier phase translation in x. Any real `t` is allowed;
/// `Gamma_{-t} Gamma_t = id`.
pub fn shear_apply(t: f64, f: &LatticeField) -> Result<LatticeField> {
    if t == 0.0 {
        return Ok(f.clone());
    }
    let lat = f.lattice;
    let x_axes: Vec<usize> = (0..lat.d()).collect();
    let w = shear_phase_table(&lat);
    let mut out = LatticeField::zeros(lat, f.components);
    for c in 0..f.components {
        let comp = f.component(c);
        let mut buf: Spectrum = comp.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft::fft_axes(&lat, &mut buf, &x_axes, true);
        for (b, &wi) in buf.iter_mut().zip(w.iter()) {
            *b *= Complex::from_polar(1.0, -t * wi);
        }
        fft::fft_axes(&lat, &mut buf, &x_axes, false);
        out.set_component(c, &fft::to_real(&buf, 1e-10)?);
    }
    Ok(out)
}

/// Per-node table of `xi_1 . v` in the mixed representation (x-frequencies,
/// v-coordinates); the shear by `t` multiplies that representation by
/// `exp(-i t xi_1 . v)`. Unmatched x-Nyquist bins are self-conjugate and
/// cannot carry an arbitrary translation phase; they get `dot = 0` (the
/// mode passes through unsheared), which keeps real fields real and the
/// group property exact.
fn shear_phase_table(lat: &AnisotropicLattice) -> Vec<f64> {
    let axes = lat.num_axes();
    let d = lat.d();
    let n = lat.node_count();
    let mut out = vec![0.0f64; n];
    let mut idx = vec![0usize; axes];
    for slot in out.iter_mut() {
        let mut dot = 0.0;
        let mut nyquist = false;
        for i in 0..d {
            if idx[i] == lat.axis_len(i) / 2 {
                nyquist = true;
            }
            dot += lat.frequency(i, idx[i]) * lat.coordinate(d + i, idx[d + i]);
        }
        *slot = if nyquist { 0.0 } else { dot };
        for a in (0..axes).rev() {
            idx[a] += 1;
            if idx[a] < lat.axis_len(a) {
                break;
            }
            idx[a] = 0;
        }
    }
    out
}

/// Uniform time grid `t_k = k T / K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_end: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end > 0.0) || steps == 0 {
            return Err(Error::InvalidConfig(format!(
                "time grid needs T > 0 and K >= 1, got T={t_end}, K={steps}"
            )));
        }
        Ok(Self { t_end, steps })
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        self.t_end * k as f64 / self.steps as f64
    }

    pub fn num_nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = t / self.dt();
        let kr = k.round();
        if (k - kr).abs() > 1e-9 || kr < 0.0 || kr > self.steps as f64 {
            return Err(Error::OffGrid(t));
        }
        Ok(kr as usize)
    }
}

/// One lattice field per time node.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    pub grid: TimeGrid,
    pub slices: Vec<LatticeField>,
}

impl SpaceTimeField {
    pub fn new(grid: TimeGrid, slices: Vec<LatticeField>) -> Result<Self> {
        if slices.len() != grid.num_nodes() {
            return Err(Error::InvalidConfig(format!(
                "need {} slices for K={} steps, got {}",
                grid.num_nodes(),
                grid.steps,
                slices.len()
            )));
        }
        if slices.windows(2).any(|w| w[0].lattice != w[1].lattice) {
            return Err(Error::LatticeMismatch);
        }
        Ok(Self { grid, slices })
    }

    pub fn constant_in_time(grid: TimeGrid, f: &LatticeField) -> Self {
        Self { grid, slices: vec![f.clone(); grid.num_nodes()] }
    }

    pub fn from_fn<F: FnMut(f64, &[f64]) -> f64>(
        grid: TimeGrid,
        lattice: AnisotropicLattice,
        mut f: F,
    ) -> Self {
        let slices = (0..grid.num_nodes())
            .map(|k| {
                let t = grid.node(k);
                LatticeField::from_fn(lattice, |z| f(t, z))
            })
            .collect();
        Self { grid, slices }
    }

    pub fn lattice(&self) -> AnisotropicLattice {
        self.slices[0].lattice
    }

    /// Max over time nodes of the spatial max norm.
    pub fn sup_norm(&self) -> f64 {
        self.slices.iter().map(|s| s.max_abs()).fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        let slices = self
            .slices
            .iter()
            .zip(other.slices.iter())
            .map(|(a, b)| a.sub(b))
            .collect();
        Self { grid: self.grid, slices }
    }
}

/// Time quadrature for the Duhamel integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    LeftEndpoint,
    Trapezoid,
}

/// Kinetic semigroup operator on one lattice, with a cache of discrete
/// kernel multipliers keyed by time.
pub struct KineticPropagator {
    pub lattice: AnisotropicLattice,
    /// Below this time the kernel is under-resolved and the operator
    /// degrades to pure shear (with a logged warning).
    pub t_min: f64,
    multipliers: Mutex<HashMap<u64, Arc<Vec<f64>>>>,
}

impl KineticPropagator {
    pub fn new(lattice: AnisotropicLattice, t_min: f64) -> Self {
        Self { lattice, t_min, multipliers: Mutex::new(HashMap::new()) }
    }

    /// Propagator for Duhamel sums on `grid`: `t_min = T / (4K)`.
    pub fn for_grid(lattice: AnisotropicLattice, grid: &TimeGrid) -> Self {
        Self::new(lattice, grid.t_end / (4.0 * grid.steps as f64))
    }

    /// Frequency multiplier of convolution with the sampled, mass-one
    /// kernel at time `t`.
    fn multiplier(&self, t: f64) -> Arc<Vec<f64>> {
        let key = t.to_bits();
        if let Some(m) = self.multipliers.lock().unwrap().get(&key) {
            return m.clone();
        }
        let lat = &self.lattice;
        let n = lat.node_count();
        let d = lat.d();
        let axes = lat.num_axes();
        let mut kern = vec![0.0f64; n];
        let mut idx = vec![0usize; axes];
        let mut x = vec![0.0f64; d];
        let mut v = vec![0.0f64; d];
        let mut mass = 0.0f64;
        for slot in kern.iter_mut() {
            for i in 0..d {
                x[i] = lat.offset_coordinate(i, idx[i]);
                // The operator composed with the shear x - t v must be the
                // evolution of Delta_v - v.grad_x, whose transition kernel is
                // the v-reflection of the forward free-flow density
                // (cross-covariance -t^2, not +t^2); with the unreflected
                // kernel the Chapman-Kolmogorov law fails at O(s t^2).
                v[i] = -lat.offset_coordinate(d + i, idx[d + i]);
            }
            let val = kernel_density(t, &x, &v).expect("t > 0 checked by caller");
            *slot = val;
            mass += val;
            for a in (0..axes).rev() {
                idx[a] += 1;
                if idx[a] < lat.axis_len(a) {
                    break;
                }
                idx[a] = 0;
            }
        }
        // renormalize to unit discrete mass, then transform: the multiplier
        // value at frequency zero is exactly 1
        let scale = 1.0 / mass;
        for k in kern.iter_mut() {
            *k *= scale;
        }
        let spec = fft::forward(lat, &kern);
        // the kernel is even, so its spectrum is real
        let mult: Vec<f64> = spec.iter().map(|c| c.re * n as f64).collect();
        let arc = Arc::new(mult);
        self.multipliers.lock().unwrap().insert(key, arc.clone());
        arc
    }

    /// Apply `P_t = Gamma_t (p_t * .)` to every component of `f`.
    pub fn apply(&self, t: f64, f: &LatticeField) -> Result<LatticeField> {
        if f.lattice != self.lattice {
            return Err(Error::LatticeMismatch);
        }
        if t < 0.0 {
            return Err(Error::NonPositiveTime(t));
        }
        if t == 0.0 {
            return Ok(f.clone());
        }
        if t < self.t_min {
            log::warn!(
                "semigroup time {t:.3e} below t_min {:.3e}: kernel under-resolved, using pure shear",
                self.t_min
            );
            return shear_apply(t, f);
        }
        let mult = self.multiplier(t);
        let conv = crate::filter::apply_multiplier(f, &mult)?;
        shear_apply(t, &conv)
    }
}

/// One-shot semigroup application (no short-time cutoff; grid-driven
/// callers should use [`KineticPropagator::for_grid`]).
pub fn semigroup_apply(t: f64, f: &LatticeField) -> Result<LatticeField> {
    KineticPropagator::new(f.lattice, 0.0).apply(t, f)
}

/// A prepared Duhamel evaluation: forward spectra of every time slice of
/// `f` plus per-gap kernel multipliers. Evaluating node `m` is a single
/// accumulation pass; the result is bitwise independent of how many nodes
/// are evaluated or on how many threads.
pub struct DuhamelPass<'a> {
    lambda: f64,
    quadrature: Quadrature,
    grid: TimeGrid,
    prop: &'a KineticPropagator,
    f_hat: Vec<Spectrum>,
    /// per-gap-index multipliers (index j <-> gap j*dt); empty slot for j
    /// under the shear cutoff
    gap_mult: Vec<Option<Arc<Vec<f64>>>>,
    shear_dot: Vec<f64>,
}

impl<'a> DuhamelPass<'a> {
    pub fn new(
        lambda: f64,
        f: &SpaceTimeField,
        prop: &'a KineticPropagator,
        quadrature: Quadrature,
    ) -> Result<Self> {
        if f.lattice() != prop.lattice {
            return Err(Error::LatticeMismatch);
        }
        if lambda < 0.0 {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
        }
        let lat = prop.lattice;
        let f_hat: Vec<Spectrum> = f
            .slices
            .par_iter()
            .map(|s| {
                debug_assert!(s.is_scalar());
                fft::forward(&lat, &s.values)
            })
            .collect();
        let dt = f.grid.dt();
        let mut gap_mult: Vec<Option<Arc<Vec<f64>>>> = vec![None; f.grid.steps + 1];
        for (j, slot) in gap_mult.iter_mut().enumerate().skip(1) {
            let gap = j as f64 * dt;
            if gap >= prop.t_min {
                *slot = Some(prop.multiplier(gap));
            } else {
                log::warn!(
                    "duhamel gap {gap:.3e} below t_min {:.3e}: shear-only slice",
                    prop.t_min
                );
            }
        }
        Ok(Self {
            lambda,
            quadrature,
            grid: f.grid,
            prop,
            f_hat,
            gap_mult,
            shear_dot: shear_phase_table(&lat),
        })
    }

    /// `I_{t_m}^lambda(f)`.
    pub fn evaluate(&self, m: usize) -> Result<LatticeField> {
        let lat = self.prop.lattice;
        let n = lat.node_count();
        let dt = self.grid.dt();
        let v_axes: Vec<usize> = (lat.d()..lat.num_axes()).collect();
        let x_axes: Vec<usize> = (0..lat.d()).collect();
        let mut acc: Spectrum = vec![Complex::new(0.0, 0.0); n];
        if m == 0 {
            return Ok(LatticeField::zeros(lat, 1));
        }
        // running shear phase exp(-i * j*dt * xi1.v), advanced by one gap
        // step per iteration
        let base: Vec<Complex<f64>> = self
            .shear_dot
            .iter()
            .map(|&w| Complex::from_polar(1.0, -dt * w))
            .collect();
        let mut phase = base.clone();
        let mut term: Spectrum = vec![Complex::new(0.0, 0.0); n];
        for j in 1..=m {
            let k = m - j;
            let gap = j as f64 * dt;
            let mut coeff = dt * (-self.lambda * gap).exp();
            if self.quadrature == Quadrature::Trapezoid && k == 0 {
                coeff *= 0.5;
            }
            // exponentially dead terms contribute nothing at f64 precision
            if self.lambda * gap < 37.0 {
                match &self.gap_mult[j] {
                    Some(mult) => {
                        for ((t, f), &mu) in
                            term.iter_mut().zip(self.f_hat[k].iter()).zip(mult.iter())
                        {
                            *t = f * mu;
                        }
                    }
                    None => term.copy_from_slice(&self.f_hat[k]),
                }
                fft::fft_axes(&lat, &mut term, &v_axes, false);
                for ((a, t), p) in acc.iter_mut().zip(term.iter()).zip(phase.iter()) {
                    *a += coeff * t * p;
                }
            }
            if j < m {
                for (p, b) in phase.iter_mut().zip(base.iter()) {
                    *p *= b;
                }
            }
        }
        if self.quadrature == Quadrature::Trapezoid {
            // the s = t endpoint uses P_0 = id
            let coeff = 0.5 * dt;
            term.copy_from_slice(&self.f_hat[m]);
            fft::fft_axes(&lat, &mut term, &v_axes, false);
            for (a, t) in acc.iter_mut().zip(term.iter()) {
                *a += coeff * t;
            }
        }
        fft::fft_axes(&lat, &mut acc, &x_axes, false);
        Ok(LatticeField::from_component(lat, fft::to_real(&acc, 1e-8)?))
    }

    /// Evaluate every time node (parallel over nodes, deterministic).
    pub fn evaluate_all(&self) -> Result<SpaceTimeField> {
        let slices: Result<Vec<LatticeField>> =
            (0..self.grid.num_nodes()).into_par_iter().map(|m| self.evaluate(m)).collect();
        SpaceTimeField::new(self.grid, slices?)
    }
}

/// `I_t^lambda(f)` at one grid time, left-endpoint quadrature.
pub fn duhamel_integral(
    lambda: f64,
    f: &SpaceTimeField,
    t: f64,
    prop: &KineticPropagator,
) -> Result<LatticeField> {
    let m = f.grid.index_of(t)?;
    DuhamelPass::new(lambda, f, prop, Quadrature::LeftEndpoint)?.evaluate(m)
}
