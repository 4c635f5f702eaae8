//! Periodic anisotropic lattices over position x velocity space.
//!
//! The state space is the box `[-Lx,Lx)^d x [-Lv,Lv)^d` with `Nx` (resp.
//! `Nv`) equispaced nodes per position (resp. velocity) axis. The kinetic
//! scaling vector `a = (3,1)` is attached here: dilations act as
//! `(x,v) -> (s^3 x, s v)`, the distance is `|z|_a = |x|^{1/3} + |v|`, and
//! the same formula is used for frequency vectors, so that the dyadic
//! dilation `2^{j a} xi = (2^{3j} xi_1, 2^j xi_2)` scales `|xi|_a` by `2^j`
//! exactly.

use crate::error::{Error, Result};

/// The kinetic scaling vector `a = (3, 1)`: position scales like the cube
/// of velocity. Centralized so every exponent in the crate derives from it.
pub const SCALING: [u32; 2] = [3, 1];

/// Anisotropic distance `|x - x'|^{1/3} + |v - v'|` between two points of
/// `R^{2d}`, Euclidean norms on each half.
pub fn anisotropic_distance(z: &[f64], z_prime: &[f64]) -> f64 {
    assert_eq!(z.len(), z_prime.len());
    assert!(z.len() % 2 == 0, "points live in R^{{2d}}");
    let d = z.len() / 2;
    let mut dx2 = 0.0;
    let mut dv2 = 0.0;
    for i in 0..d {
        let ex = z[i] - z_prime[i];
        let ev = z[d + i] - z_prime[d + i];
        dx2 += ex * ex;
        dv2 += ev * ev;
    }
    dx2.sqrt().cbrt() + dv2.sqrt()
}

/// `|z|_a` of a single point.
pub fn anorm(z: &[f64]) -> f64 {
    anisotropic_distance(z, &vec![0.0; z.len()])
}

/// Polynomial weight `rho_kappa(z) = ((1+|x|^2)^{1/3} + 1 + |v|^2)^{-kappa/2}`,
/// comparable to `(1+|z|_a)^{-kappa}`.
pub fn weight_rho(kappa: f64, z: &[f64]) -> f64 {
    assert!(z.len() % 2 == 0);
    let d = z.len() / 2;
    let mut x2 = 0.0;
    let mut v2 = 0.0;
    for i in 0..d {
        x2 += z[i] * z[i];
        v2 += z[d + i] * z[d + i];
    }
    ((1.0 + x2).cbrt() + 1.0 + v2).powf(-kappa / 2.0)
}

/// Periodic anisotropic lattice; owner of all index and frequency
/// conventions used by the spectral operators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisotropicLattice {
    d: usize,
    nx: usize,
    nv: usize,
    lx: f64,
    lv: f64,
}

impl AnisotropicLattice {
    pub fn new(d: usize, nx: usize, nv: usize, lx: f64, lv: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidLattice("dimension d must be positive".into()));
        }
        if nx == 0 || nv == 0 || nx % 2 != 0 || nv % 2 != 0 {
            return Err(Error::InvalidLattice(format!(
                "grid sizes must be positive even integers, got Nx={nx}, Nv={nv}"
            )));
        }
        if !(lx > 0.0) || !(lv > 0.0) {
            return Err(Error::InvalidLattice(format!(
                "half-periods must be strictly positive, got Lx={lx}, Lv={lv}"
            )));
        }
        let lat = Self { d, nx, nv, lx, lv };
        let nodes = lat.node_count();
        if nodes == 0 || nodes > 1 << 28 {
            return Err(Error::InvalidLattice(format!("node count {nodes} out of range")));
        }
        Ok(lat)
    }

    /// Desk-scale default: d=1, 256x256 nodes on the box of half-period 8*pi.
    pub fn default_desk() -> Self {
        Self::new(1, 256, 256, 8.0 * std::f64::consts::PI, 8.0 * std::f64::consts::PI).unwrap()
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn nv(&self) -> usize {
        self.nv
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn lv(&self) -> f64 {
        self.lv
    }

    /// Grid spacing along position axes.
    pub fn hx(&self) -> f64 {
        2.0 * self.lx / self.nx as f64
    }
    /// Grid spacing along velocity axes.
    pub fn hv(&self) -> f64 {
        2.0 * self.lv / self.nv as f64
    }
    /// Volume of one cell, `hx^d * hv^d`.
    pub fn cell_volume(&self) -> f64 {
        self.hx().powi(self.d as i32) * self.hv().powi(self.d as i32)
    }

    /// Number of axes of the flattened array (2d: positions then velocities).
    pub fn num_axes(&self) -> usize {
        2 * self.d
    }

    pub fn axis_len(&self, axis: usize) -> usize {
        if axis < self.d {
            self.nx
        } else {
            self.nv
        }
    }

    fn axis_half_period(&self, axis: usize) -> f64 {
        if axis < self.d {
            self.lx
        } else {
            self.lv
        }
    }

    pub fn node_count(&self) -> usize {
        self.nx.pow(self.d as u32) * self.nv.pow(self.d as u32)
    }

    /// Physical coordinate of grid index `i` on `axis`: `-L + i*h`, so the
    /// box is `[-L, L)`.
    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        let l = self.axis_half_period(axis);
        let n = self.axis_len(axis);
        -l + 2.0 * l * i as f64 / n as f64
    }

    /// Offset coordinate of bin `i` on `axis` in the wrap-to-negative layout
    /// used for convolution kernels: index 0 is offset 0, the upper half of
    /// the axis holds negative offsets.
    pub fn offset_coordinate(&self, axis: usize, i: usize) -> f64 {
        let n = self.axis_len(axis);
        let h = 2.0 * self.axis_half_period(axis) / n as f64;
        Self::freq_index(n, i) as f64 * h
    }

    /// Signed integer frequency of DFT bin `i` on an axis of length `n`:
    /// `0..n/2` map to themselves, the rest to negative frequencies.
    pub fn freq_index(n: usize, i: usize) -> i64 {
        if i <= n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    /// Continuous frequency of DFT bin `i` on `axis`: `k * pi / L`.
    pub fn frequency(&self, axis: usize, i: usize) -> f64 {
        let n = self.axis_len(axis);
        Self::freq_index(n, i) as f64 * std::f64::consts::PI / self.axis_half_period(axis)
    }

    /// Per-node table of some function of the frequency vector. The closure
    /// receives the full 2d-dimensional frequency vector of each node.
    pub fn frequency_table<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> Vec<f64> {
        let axes = self.num_axes();
        let mut idx = vec![0usize; axes];
        let mut xi = vec![0.0f64; axes];
        let mut out = Vec::with_capacity(self.node_count());
        for a in 0..axes {
            xi[a] = self.frequency(a, 0);
        }
        loop {
            out.push(f(&xi));
            // odometer increment, last axis fastest
            let mut a = axes;
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < self.axis_len(a) {
                    xi[a] = self.frequency(a, idx[a]);
                    break;
                }
                idx[a] = 0;
                xi[a] = self.frequency(a, 0);
            }
        }
    }

    /// `|xi|_a = |xi_1|^{1/3} + |xi_2|` of a frequency vector, the quantity
    /// that is `2^j`-homogeneous under the dyadic dilation `2^{j a}`.
    pub fn freq_anorm(&self, xi: &[f64]) -> f64 {
        let mut x2 = 0.0;
        let mut v2 = 0.0;
        for i in 0..self.d {
            x2 += xi[i] * xi[i];
            v2 += xi[self.d + i] * xi[self.d + i];
        }
        x2.sqrt().cbrt() + v2.sqrt()
    }

    /// Largest `|xi|_a` resolvable on the grid (attained at the Nyquist corner).
    pub fn max_freq_anorm(&self) -> f64 {
        let xm = std::f64::consts::PI / self.hx() * (self.d as f64).sqrt();
        let vm = std::f64::consts::PI / self.hv() * (self.d as f64).sqrt();
        xm.cbrt() + vm
    }

    /// Physical coordinates of a flat node index (positions then velocities).
    pub fn node_coordinates(&self, mut flat: usize) -> Vec<f64> {
        let axes = self.num_axes();
        let mut out = vec![0.0; axes];
        for a in (0..axes).rev() {
            let n = self.axis_len(a);
            out[a] = self.coordinate(a, flat % n);
            flat /= n;
        }
        out
    }

    /// Flat node index of per-axis indices.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0usize;
        for (a, &i) in idx.iter().enumerate() {
            flat = flat * self.axis_len(a) + i;
        }
        flat
    }
}

/// Real samples on a lattice; scalar (`components = 1`) or a d-vector per
/// node. Values are stored node-major with the component index innermost,
/// matching the KRLF1 on-disk layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField {
    pub lattice: AnisotropicLattice,
    pub components: usize,
    pub values: Vec<f64>,
}

impl LatticeField {
    pub fn new(lattice: AnisotropicLattice, components: usize, values: Vec<f64>) -> Result<Self> {
        if components == 0 {
            return Err(Error::ComponentMismatch { expected: 1, got: 0 });
        }
        if values.len() != lattice.node_count() * components {
            return Err(Error::InvalidLattice(format!(
                "value buffer length {} does not match {} nodes x {} components",
                values.len(),
                lattice.node_count(),
                components
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidLattice("field contains non-finite entries".into()));
        }
        Ok(Self { lattice, components, values })
    }

    pub fn zeros(lattice: AnisotropicLattice, components: usize) -> Self {
        Self { lattice, components, values: vec![0.0; lattice.node_count() * components] }
    }

    pub fn constant(lattice: AnisotropicLattice, c: f64) -> Self {
        Self { lattice, components: 1, values: vec![c; lattice.node_count()] }
    }

    /// Sample a function of the node coordinates into a scalar field.
    pub fn from_fn<F: FnMut(&[f64]) -> f64>(lattice: AnisotropicLattice, mut f: F) -> Self {
        let n = lattice.node_count();
        let mut values = Vec::with_capacity(n);
        for flat in 0..n {
            values.push(f(&lattice.node_coordinates(flat)));
        }
        Self { lattice, components: 1, values }
    }

    pub fn is_scalar(&self) -> bool {
        self.components == 1
    }

    pub fn same_lattice(&self, other: &Self) -> bool {
        self.lattice == other.lattice
    }

    /// Contiguous copy of one component.
    pub fn component(&self, c: usize) -> Vec<f64> {
        assert!(c < self.components);
        if self.components == 1 {
            return self.values.clone();
        }
        self.values.iter().skip(c).step_by(self.components).copied().collect()
    }

    /// Wrap a contiguous scalar buffer as a view-field on the same lattice.
    pub fn from_component(lattice: AnisotropicLattice, buf: Vec<f64>) -> Self {
        debug_assert_eq!(buf.len(), lattice.node_count());
        Self { lattice, components: 1, values: buf }
    }

    pub fn set_component(&mut self, c: usize, buf: &[f64]) {
        assert!(c < self.components);
        assert_eq!(buf.len(), self.lattice.node_count());
        for (n, &v) in buf.iter().enumerate() {
            self.values[n * self.components + c] = v;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        out
    }

    pub fn add_assign(&mut self, other: &Self, weight: f64) {
        debug_assert!(self.same_lattice(other) && self.components == other.components);
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            *a += weight * b;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_assign(other, -1.0);
        out
    }

    /// Pointwise product of two scalar fields.
    pub fn pointwise_mul(&self, other: &Self) -> Self {
        debug_assert!(self.is_scalar() && other.is_scalar() && self.same_lattice(other));
        let values = self.values.iter().zip(other.values.iter()).map(|(a, b)| a * b).collect();
        Self { lattice: self.lattice, components: 1, values }
    }

    /// Multilinear (2d-linear) interpolation at an arbitrary point, with
    /// periodic wrap on every axis. Returns one value per component.
    pub fn interpolate(&self, point: &[f64]) -> Vec<f64> {
        let lat = &self.lattice;
        let axes = lat.num_axes();
        debug_assert_eq!(point.len(), axes);
        // Per-axis lower index and fractional offset.
        let mut i0 = vec![0usize; axes];
        let mut frac = vec![0.0f64; axes];
        for a in 0..axes {
            let n = lat.axis_len(a);
            let l = if a < lat.d() { lat.lx() } else { lat.lv() };
            let h = 2.0 * l / n as f64;
            let t = (point[a] + l) / h;
            let fl = t.floor();
            let mut idx = fl as i64 % n as i64;
            if idx < 0 {
                idx += n as i64;
            }
            i0[a] = idx as usize;
            frac[a] = t - fl;
        }
        let mut out = vec![0.0; self.components];
        // Sum over the 2^{2d} corners of the surrounding cell.
        for corner in 0..(1usize << axes) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for a in 0..axes {
                let n = lat.axis_len(a);
                let hi = (corner >> a) & 1 == 1;
                let ia = if hi { (i0[a] + 1) % n } else { i0[a] };
                w *= if hi { frac[a] } else { 1.0 - frac[a] };
                flat = flat * n + ia;
            }
            if w == 0.0 {
                continue;
            }
            for c in 0..self.components {
                out[c] += w * self.values[flat * self.components + c];
            }
        }
        out
    }
}
