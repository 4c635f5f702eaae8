//! Dyadic anisotropic block filters.
//!
//! The generating cutoff is radial in `|xi|_a`: `chi0(xi) = psi(|xi|_a)`
//! with `psi` a smoothstep that equals 1 on `[0,1]`, 0 on `[4/3,inf)`, and
//! ramps with the classical `exp(-1/t)` bump in between. The blocks are
//! `phi_0 = chi0` and `phi_j(xi) = chi0(2^{-j a} xi) - chi0(2^{-(j-1) a} xi)`
//! for `1 <= j < J`; since `|2^{-j a} xi|_a = 2^{-j} |xi|_a`, every symbol
//! is a function of `r = |xi|_a` alone. The top block is closed as
//! `phi_J = 1 - sum_{j<J} phi_j` so the partition of unity is exact on the
//! grid despite truncation.

use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft;
use crate::lattice::{AnisotropicLattice, LatticeField};

/// Smooth transition `s(0)=0, s(1)=1` built from `g(t)=exp(-1/t)`.
fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let g = (-1.0 / t).exp();
    let h = (-1.0 / (1.0 - t)).exp();
    g / (g + h)
}

/// The radial profile of the generating cutoff: 1 on [0,1], 0 from 4/3 on.
pub fn chi0_profile(r: f64) -> f64 {
    smoothstep((4.0 / 3.0 - r) * 3.0)
}

/// Frequency-side symbols realizing the dyadic block operators `R_j^a` and
/// the low-pass `S_k^a` on one lattice.
#[derive(Debug, Clone)]
pub struct DyadicFilterBank {
    pub lattice: AnisotropicLattice,
    /// Top block index; blocks are 0..=J.
    pub top: usize,
    /// `symbols[j][node]` = phi_j^a at that frequency node.
    pub symbols: Vec<Vec<f64>>,
    /// Per-node values of the generating cutoff chi_0^a.
    pub chi0: Vec<f64>,
    /// Per-node `|xi|_a` table.
    pub anorm: Vec<f64>,
}

/// Build the filter bank. `J` is the smallest index whose block reaches past
/// the largest resolvable `|xi|_a`, so the closed top block absorbs the
/// tail. Lattices that support fewer than 3 blocks are rejected (slope fits
/// need a dyadic range to work with).
pub fn build_filter_bank(lattice: &AnisotropicLattice) -> Result<DyadicFilterBank> {
    let anorm = lattice.frequency_table(|xi| lattice.freq_anorm(xi));
    let ximax = anorm.iter().cloned().fold(0.0f64, f64::max);
    let mut top = 1usize;
    while (2.0f64).powi(top as i32 + 1) <= ximax {
        top += 1;
    }
    if top < 2 {
        return Err(Error::TooCoarse { blocks: top + 1, need: 3 });
    }
    let n = anorm.len();
    let mut symbols = vec![vec![0.0f64; n]; top + 1];
    let chi0: Vec<f64> = anorm.iter().map(|&r| chi0_profile(r)).collect();
    symbols[0].copy_from_slice(&chi0);
    for j in 1..top {
        let sj = 0.5f64.powi(j as i32);
        for (i, &r) in anorm.iter().enumerate() {
            symbols[j][i] = chi0_profile(sj * r) - chi0_profile(2.0 * sj * r);
        }
    }
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..top {
            acc += symbols[j][i];
        }
        symbols[top][i] = 1.0 - acc;
    }
    Ok(DyadicFilterBank { lattice: *lattice, top, symbols, chi0, anorm })
}

impl DyadicFilterBank {
    pub fn blocks(&self) -> usize {
        self.top + 1
    }

    fn check_lattice(&self, f: &LatticeField) -> Result<()> {
        if f.lattice != self.lattice {
            return Err(Error::LatticeMismatch);
        }
        Ok(())
    }

    /// Summed symbol of the low-pass `S_k = sum_{j<k} R_j` (empty sum for
    /// k <= 0).
    pub fn low_pass_symbol(&self, k: i64) -> Vec<f64> {
        let n = self.lattice.node_count();
        let mut m = vec![0.0f64; n];
        let kk = k.clamp(0, self.blocks() as i64) as usize;
        for j in 0..kk {
            for (slot, &s) in m.iter_mut().zip(self.symbols[j].iter()) {
                *slot += s;
            }
        }
        m
    }
}

/// Apply the dyadic block operator `R_j^a` to every component of `f`.
pub fn block_apply(f: &LatticeField, j: usize, bank: &DyadicFilterBank) -> Result<LatticeField> {
    bank.check_lattice(f)?;
    if j > bank.top {
        return Err(Error::BlockOutOfRange { j, top: bank.top });
    }
    apply_multiplier(f, &bank.symbols[j])
}

/// Low-pass `S_k^a f = sum_{j=0}^{k-1} R_j^a f`; `k <= 0` gives the zero
/// field and `k >= J+1` reproduces `f` by the partition of unity.
pub fn low_pass(f: &LatticeField, k: i64, bank: &DyadicFilterBank) -> Result<LatticeField> {
    bank.check_lattice(f)?;
    if k <= 0 {
        return Ok(LatticeField::zeros(f.lattice, f.components));
    }
    apply_multiplier(f, &bank.low_pass_symbol(k))
}

/// Apply a real frequency multiplier to every component.
pub fn apply_multiplier(f: &LatticeField, mult: &[f64]) -> Result<LatticeField> {
    let mut out = LatticeField::zeros(f.lattice, f.components);
    for c in 0..f.components {
        let comp = f.component(c);
        let mut spec = fft::forward(&f.lattice, &comp);
        fft::apply_real_multiplier(&mut spec, mult);
        fft::inverse(&f.lattice, &mut spec);
        let real = fft::to_real(&spec, 1e-10)?;
        out.set_component(c, &real);
    }
    Ok(out)
}

/// All blocks of a scalar field at once: one forward transform, `J+1`
/// inverse transforms. The returned buffers sum to `f` exactly (up to fp
/// roundoff) by the closed partition of unity.
pub fn block_decompose(f: &LatticeField, bank: &DyadicFilterBank) -> Result<Vec<Vec<f64>>> {
    bank.check_lattice(f)?;
    debug_assert!(f.is_scalar());
    let spec = fft::forward(&f.lattice, &f.values);
    let mut out = Vec::with_capacity(bank.blocks());
    for j in 0..bank.blocks() {
        let mut s: Vec<Complex<f64>> = spec.clone();
        fft::apply_real_multiplier(&mut s, &bank.symbols[j]);
        fft::inverse(&f.lattice, &mut s);
        out.push(fft::to_real(&s, 1e-10)?);
    }
    Ok(out)
}
