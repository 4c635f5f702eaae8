//! Bony paraproducts and the drift-gradient product.
//!
//! With `S_k = sum_{j<k} R_j` (so `S_{-1} = S_0 = 0`),
//!
//! ```text
//! f < g := sum_k S_{k-1} f . R_k g        (low-high; block gap >= 2)
//! f o g := sum_k R_k f . R^_k g           (resonant, R^_k = sum_{|i-k|<=1} R_i)
//! f g   =  f < g + f o g + g < f
//! ```
//!
//! all sums clipped to the available blocks `0..=J`. The resonant width 1
//! is the partner of the gap-2 low-high sum: together the three terms
//! classify every block pair exactly once, so with the closed top block the
//! reconstruction identity is exact on the grid (a width-2 resonant window
//! would count pairs at distance exactly 2 twice and only reconstruct the
//! product up to those cross terms). The drift term of
//! the kinetic equation is assembled as
//!
//! ```text
//! b . grad_v u  "="  div_v(b <= u) + b > grad_v u - (div_v b) <= u
//! ```
//!
//! with `<= := < + o`, which stays meaningful when `b` has negative
//! regularity and `div_v b` is controlled.

use crate::error::{Error, Result};
use crate::filter::{block_decompose, DyadicFilterBank};
use crate::holder::spectral_derivative;
use crate::lattice::LatticeField;

/// The three frequency-interaction parts of a pointwise product.
#[derive(Debug, Clone)]
pub struct BonyTriple {
    /// `f < g`
    pub low_high: LatticeField,
    /// `f o g`
    pub resonant: LatticeField,
    /// `g < f`
    pub high_low: LatticeField,
}

impl BonyTriple {
    pub fn sum(&self) -> LatticeField {
        let mut s = self.low_high.clone();
        s.add_assign(&self.resonant, 1.0);
        s.add_assign(&self.high_low, 1.0);
        s
    }
}

fn check_pair(f: &LatticeField, g: &LatticeField, bank: &DyadicFilterBank) -> Result<()> {
    if f.lattice != bank.lattice || g.lattice != bank.lattice {
        return Err(Error::LatticeMismatch);
    }
    Ok(())
}

/// Low-high paraproduct from precomputed block decompositions.
fn low_high_from_blocks(fb: &[Vec<f64>], gb: &[Vec<f64>]) -> Vec<f64> {
    let n = fb[0].len();
    let top = fb.len() - 1;
    let mut out = vec![0.0f64; n];
    // running S_{k-1} f: empty for k <= 1, adds block k-2 when advancing to k
    let mut low = vec![0.0f64; n];
    for k in 2..=top {
        for (l, b) in low.iter_mut().zip(fb[k - 2].iter()) {
            *l += b;
        }
        for ((o, l), g) in out.iter_mut().zip(low.iter()).zip(gb[k].iter()) {
            *o += l * g;
        }
    }
    out
}

fn resonant_from_blocks(fb: &[Vec<f64>], gb: &[Vec<f64>]) -> Vec<f64> {
    let n = fb[0].len();
    let top = fb.len() - 1;
    let mut out = vec![0.0f64; n];
    for k in 0..=top {
        let lo = k.saturating_sub(1);
        let hi = (k + 1).min(top);
        let mut tilde = vec![0.0f64; n];
        for gblock in gb.iter().take(hi + 1).skip(lo) {
            for (t, g) in tilde.iter_mut().zip(gblock.iter()) {
                *t += g;
            }
        }
        for ((o, f), t) in out.iter_mut().zip(fb[k].iter()).zip(tilde.iter()) {
            *o += f * t;
        }
    }
    out
}

/// `f < g`, exact discrete sum over blocks.
pub fn para_low_high(
    f: &LatticeField,
    g: &LatticeField,
    bank: &DyadicFilterBank,
) -> Result<LatticeField> {
    check_pair(f, g, bank)?;
    let fb = block_decompose(f, bank)?;
    let gb = block_decompose(g, bank)?;
    Ok(LatticeField::from_component(f.lattice, low_high_from_blocks(&fb, &gb)))
}

/// `f o g`, resonant part.
pub fn resonant(f: &LatticeField, g: &LatticeField, bank: &DyadicFilterBank) -> Result<LatticeField> {
    check_pair(f, g, bank)?;
    let fb = block_decompose(f, bank)?;
    let gb = block_decompose(g, bank)?;
    Ok(LatticeField::from_component(f.lattice, resonant_from_blocks(&fb, &gb)))
}

/// Full Bony decomposition of `f g`.
pub fn bony_decompose(
    f: &LatticeField,
    g: &LatticeField,
    bank: &DyadicFilterBank,
) -> Result<BonyTriple> {
    check_pair(f, g, bank)?;
    let fb = block_decompose(f, bank)?;
    let gb = block_decompose(g, bank)?;
    let lat = f.lattice;
    Ok(BonyTriple {
        low_high: LatticeField::from_component(lat, low_high_from_blocks(&fb, &gb)),
        resonant: LatticeField::from_component(lat, resonant_from_blocks(&fb, &gb)),
        high_low: LatticeField::from_component(lat, low_high_from_blocks(&gb, &fb)),
    })
}

/// `f <= g := f < g + f o g`.
pub fn para_less_eq(
    f: &LatticeField,
    g: &LatticeField,
    bank: &DyadicFilterBank,
) -> Result<LatticeField> {
    check_pair(f, g, bank)?;
    let fb = block_decompose(f, bank)?;
    let gb = block_decompose(g, bank)?;
    let mut out = low_high_from_blocks(&fb, &gb);
    let res = resonant_from_blocks(&fb, &gb);
    for (o, r) in out.iter_mut().zip(res.iter()) {
        *o += r;
    }
    Ok(LatticeField::from_component(f.lattice, out))
}

/// Prepared drift operator `u -> b (.) grad_v u - (div_v b) <= u`: the block
/// decompositions of `b` and `div_v b` are computed once and reused across
/// Picard sweeps and time slices.
pub struct DriftOperator<'a> {
    bank: &'a DyadicFilterBank,
    /// per component, per block
    b_blocks: Vec<Vec<Vec<f64>>>,
    div_blocks: Option<Vec<Vec<f64>>>,
}

impl<'a> DriftOperator<'a> {
    pub fn new(
        b: &LatticeField,
        div_b: &LatticeField,
        bank: &'a DyadicFilterBank,
    ) -> Result<Self> {
        let lat = bank.lattice;
        let d = lat.d();
        if b.components != d {
            return Err(Error::ComponentMismatch { expected: d, got: b.components });
        }
        if !div_b.is_scalar() {
            return Err(Error::ComponentMismatch { expected: 1, got: div_b.components });
        }
        if b.lattice != lat || div_b.lattice != lat {
            return Err(Error::LatticeMismatch);
        }
        let mut b_blocks = Vec::with_capacity(d);
        for c in 0..d {
            let bc = LatticeField::from_component(lat, b.component(c));
            b_blocks.push(block_decompose(&bc, bank)?);
        }
        let div_blocks = if div_b.max_abs() > 0.0 {
            Some(block_decompose(div_b, bank)?)
        } else {
            None
        };
        Ok(Self { bank, b_blocks, div_blocks })
    }

    /// `div_v(b <= u) + b > grad_v u - (div_v b) <= u`, v-derivatives
    /// spectral.
    pub fn apply(&self, u: &LatticeField) -> Result<LatticeField> {
        let bank = self.bank;
        let lat = bank.lattice;
        let d = lat.d();
        if !u.is_scalar() {
            return Err(Error::ComponentMismatch { expected: 1, got: u.components });
        }
        if u.lattice != lat {
            return Err(Error::LatticeMismatch);
        }
        let ub = block_decompose(u, bank)?;
        let mut out = LatticeField::zeros(lat, 1);
        for (c, bcb) in self.b_blocks.iter().enumerate() {
            // div_v(b <= u): v_c-derivative of (b_c < u + b_c o u)
            let mut le = low_high_from_blocks(bcb, &ub);
            let res = resonant_from_blocks(bcb, &ub);
            for (l, r) in le.iter_mut().zip(res.iter()) {
                *l += r;
            }
            let le_field = LatticeField::from_component(lat, le);
            let div_term = spectral_derivative(&le_field, d + c)?;
            out.add_assign(&div_term, 1.0);
            // b > grad_v u: (d_{v_c} u) < b_c
            let du = spectral_derivative(u, d + c)?;
            let dub = block_decompose(&du, bank)?;
            let hi = low_high_from_blocks(&dub, bcb);
            out.add_assign(&LatticeField::from_component(lat, hi), 1.0);
        }
        if let Some(divb) = &self.div_blocks {
            // - (div_v b) <= u
            let mut corr = low_high_from_blocks(divb, &ub);
            let res = resonant_from_blocks(divb, &ub);
            for (l, r) in corr.iter_mut().zip(res.iter()) {
                *l += r;
            }
            out.add_assign(&LatticeField::from_component(lat, corr), -1.0);
        }
        Ok(out)
    }
}

/// The paraproduct-interpreted drift term
/// `b (.) grad_v u - (div_v b) <= u = div_v(b <= u) + b > grad_v u - (div_v b) <= u`.
///
/// `b` has `d` components, `div_b` is supplied by the caller (identically
/// zero for velocity-independent drifts, where this is exact), `u` is
/// scalar. All v-derivatives are spectral. This is the right-hand-side
/// driver of the mild formulation.
pub fn drift_gradient_product(
    b: &LatticeField,
    div_b: &LatticeField,
    u: &LatticeField,
    bank: &DyadicFilterBank,
) -> Result<LatticeField> {
    check_pair(div_b, u, bank)?;
    DriftOperator::new(b, div_b, bank)?.apply(u)
}
