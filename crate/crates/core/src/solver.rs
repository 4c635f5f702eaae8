//! Mild (Picard) solver for the degenerate Kolmogorov equation
//! `d_t u = Delta_v u - v.grad_x u - lambda u + b.grad_v u + f`, `u_0 = 0`,
//! with the drift term read through the paraproduct decomposition, plus the
//! weighted-regularity ratio scan over a lambda grid.
//!
//! The mild formulation iterates
//! `u <- I^lambda(div_v(b <= u) + b > grad_v u - (div_v b) <= u + f)`.
//! On the discrete grid the left-endpoint Duhamel sum at node m only reads
//! the iterate at nodes k < m, so the Picard map is affine with nilpotent
//! feedback: with no relaxation it reaches the exact fixed point in at most
//! K+1 sweeps; in practice the sup-change drops below tolerance much
//! earlier.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::DyadicFilterBank;
use crate::holder::{holder_norm_with_weights, weight_table, HolderSpec};
use crate::kernel::{DuhamelPass, KineticPropagator, Quadrature, SpaceTimeField, TimeGrid};
use crate::lattice::{AnisotropicLattice, LatticeField};
use crate::para;

/// Drift data of a PDE problem. Time-dependent drifts are piecewise
/// constant on the time grid.
#[derive(Debug, Clone)]
pub enum Drift {
    Zero,
    Static { b: LatticeField, div_b: LatticeField },
    Varying { b: Vec<LatticeField>, div_b: Vec<LatticeField> },
}

impl Drift {
    fn slice(&self, k: usize) -> Option<(&LatticeField, &LatticeField)> {
        match self {
            Drift::Zero => None,
            Drift::Static { b, div_b } => Some((b, div_b)),
            Drift::Varying { b, div_b } => Some((&b[k.min(b.len() - 1)], &div_b[k.min(div_b.len() - 1)])),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Drift::Zero)
    }
}

/// One instance of the Kolmogorov equation on a lattice/time grid.
#[derive(Debug, Clone)]
pub struct PdeProblem {
    pub drift: Drift,
    pub forcing: SpaceTimeField,
    pub lambda: f64,
}

impl PdeProblem {
    pub fn grid(&self) -> TimeGrid {
        self.forcing.grid
    }
    pub fn lattice(&self) -> AnisotropicLattice {
        self.forcing.lattice()
    }

    fn validate(&self, bank: &DyadicFilterBank) -> Result<()> {
        let lat = self.lattice();
        if lat != bank.lattice {
            return Err(Error::LatticeMismatch);
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        match &self.drift {
            Drift::Zero => {}
            Drift::Static { b, div_b } => {
                if b.lattice != lat || div_b.lattice != lat {
                    return Err(Error::LatticeMismatch);
                }
                if b.components != lat.d() {
                    return Err(Error::ComponentMismatch { expected: lat.d(), got: b.components });
                }
            }
            Drift::Varying { b, div_b } => {
                if b.is_empty() || b.len() != div_b.len() {
                    return Err(Error::InvalidConfig("drift slice count mismatch".into()));
                }
                for (bb, dd) in b.iter().zip(div_b.iter()) {
                    if bb.lattice != lat || dd.lattice != lat {
                        return Err(Error::LatticeMismatch);
                    }
                    if bb.components != lat.d() {
                        return Err(Error::ComponentMismatch {
                            expected: lat.d(),
                            got: bb.components,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Solver knobs. `omega` is the optional relaxation weight
/// (`u <- (1-omega) u_old + omega u_new`); 1.0 disables damping.
#[derive(Debug, Clone, Copy)]
pub struct PicardOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub omega: f64,
    pub quadrature: Quadrature,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { max_iter: 60, tol: 1e-9, omega: 1.0, quadrature: Quadrature::LeftEndpoint }
    }
}

/// Convergence record of one solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    /// sup-over-time max-norm change per sweep
    pub residual_history: Vec<f64>,
}

fn drift_rhs(
    problem: &PdeProblem,
    u: &SpaceTimeField,
    bank: &DyadicFilterBank,
) -> Result<SpaceTimeField> {
    let grid = problem.grid();
    // static drift: prepare the operator once, share across slices
    let static_op = match &problem.drift {
        Drift::Static { b, div_b } => Some(para::DriftOperator::new(b, div_b, bank)?),
        _ => None,
    };
    let slices: Result<Vec<LatticeField>> = (0..grid.num_nodes())
        .into_par_iter()
        .map(|k| {
            let mut rhs = problem.forcing.slices[k].clone();
            if let Some(op) = &static_op {
                rhs.add_assign(&op.apply(&u.slices[k])?, 1.0);
            } else if let Some((b, div_b)) = problem.drift.slice(k) {
                let dp = para::drift_gradient_product(b, div_b, &u.slices[k], bank)?;
                rhs.add_assign(&dp, 1.0);
            }
            Ok(rhs)
        })
        .collect();
    SpaceTimeField::new(grid, slices?)
}

/// Picard iteration for the mild formulation. Returns the solution and the
/// convergence record; a sweep budget overrun is a hard error carrying the
/// residual history (the drift is too rough or too large for the grid).
pub fn picard_solve(
    problem: &PdeProblem,
    bank: &DyadicFilterBank,
    prop: &KineticPropagator,
    opts: &PicardOptions,
) -> Result<(SpaceTimeField, SolveReport)> {
    problem.validate(bank)?;
    let base_pass = DuhamelPass::new(problem.lambda, &problem.forcing, prop, opts.quadrature)?;
    let mut u = base_pass.evaluate_all()?;
    if problem.drift.is_zero() {
        // the first iterate is already the fixed point
        return Ok((u, SolveReport { iterations: 1, residual_history: vec![0.0] }));
    }
    let mut history = Vec::new();
    for it in 0..opts.max_iter {
        let rhs = drift_rhs(problem, &u, bank)?;
        let pass = DuhamelPass::new(problem.lambda, &rhs, prop, opts.quadrature)?;
        let u_new = pass.evaluate_all()?;
        let diff = u_new.sub(&u).sup_norm();
        history.push(diff);
        if opts.omega >= 1.0 {
            u = u_new;
        } else {
            let grid = problem.grid();
            let slices = u
                .slices
                .iter()
                .zip(u_new.slices.iter())
                .map(|(old, new)| {
                    let mut s = old.scaled(1.0 - opts.omega);
                    s.add_assign(new, opts.omega);
                    s
                })
                .collect();
            u = SpaceTimeField::new(grid, slices)?;
        }
        let scale = u.sup_norm().max(1.0);
        if diff <= opts.tol * scale {
            return Ok((u, SolveReport { iterations: it + 1, residual_history: history }));
        }
    }
    Err(Error::NonConvergence { iters: opts.max_iter, history })
}

/// Reflect a field through `x -> -x` (index `i -> (N - i) mod N` on every
/// position axis).
pub fn reflect_x(f: &LatticeField) -> LatticeField {
    let lat = f.lattice;
    let axes = lat.num_axes();
    let n = lat.node_count();
    let mut out = LatticeField::zeros(lat, f.components);
    let mut idx = vec![0usize; axes];
    for flat in 0..n {
        let mut rflat = 0usize;
        for (a, &i) in idx.iter().enumerate() {
            let na = lat.axis_len(a);
            let ri = if a < lat.d() && i > 0 { na - i } else { i };
            rflat = rflat * na + ri;
        }
        for c in 0..f.components {
            out.values[rflat * f.components + c] = f.values[flat * f.components + c];
        }
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

/// Solve the backward problem
/// `d_t u + Delta_v u + v.grad_x u - lambda u + (drift term) = f`, `u(T)=0`,
/// by the substitution `u(t,x,v) = w(T-t,-x,v)`: the x-reflection flips the
/// sign of `v.grad_x`, turning the backward operator into the forward one
/// with data `f~(t,x,v) = -f(T-t,-x,v)` and `b~(t,x,v) = b(T-t,-x,v)`.
pub fn backward_solve(
    problem: &PdeProblem,
    bank: &DyadicFilterBank,
    prop: &KineticPropagator,
    opts: &PicardOptions,
) -> Result<(SpaceTimeField, SolveReport)> {
    let grid = problem.grid();
    let steps = grid.steps;
    let forward_forcing = SpaceTimeField::new(
        grid,
        (0..=steps)
            .map(|k| reflect_x(&problem.forcing.slices[steps - k]).scaled(-1.0))
            .collect(),
    )?;
    let forward_drift = match &problem.drift {
        Drift::Zero => Drift::Zero,
        Drift::Static { b, div_b } => {
            Drift::Static { b: reflect_x(b), div_b: reflect_x(div_b) }
        }
        Drift::Varying { b, div_b } => Drift::Varying {
            b: (0..=steps).map(|k| reflect_x(&b[(steps - k).min(b.len() - 1)])).collect(),
            div_b: (0..=steps)
                .map(|k| reflect_x(&div_b[(steps - k).min(div_b.len() - 1)]))
                .collect(),
        },
    };
    let forward = PdeProblem { drift: forward_drift, forcing: forward_forcing, lambda: problem.lambda };
    let (w, report) = picard_solve(&forward, bank, prop, opts)?;
    let slices = (0..=steps).map(|k| reflect_x(&w.slices[steps - k])).collect();
    Ok((SpaceTimeField::new(grid, slices)?, report))
}

/// Exponent bookkeeping for the weighted-regularity scan.
#[derive(Debug, Clone)]
pub struct SchauderParams {
    pub alpha_b: f64,
    pub q_b: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub q: f64,
    pub delta: f64,
    pub lambdas: Vec<f64>,
    pub thetas: Vec<f64>,
}

impl SchauderParams {
    /// `nu = 2 kappa / (1 + alpha - 2/q) + delta`.
    pub fn nu(&self) -> f64 {
        2.0 * self.kappa / (1.0 + self.alpha - 2.0 / self.q) + self.delta
    }

    /// Check every exponent window; the violated inequality is named in the
    /// error.
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::ExponentWindow(msg));
        if !(self.alpha_b > -1.0 && self.alpha_b < 0.0) {
            return err(format!("alpha_b in (-1,0) violated: alpha_b={}", self.alpha_b));
        }
        if !(self.q_b > 2.0 / (1.0 + self.alpha_b)) {
            return err(format!(
                "q_b > 2/(1+alpha_b) violated: q_b={}, bound={}",
                self.q_b,
                2.0 / (1.0 + self.alpha_b)
            ));
        }
        let kappa_max = (1.0 + self.alpha_b - 2.0 / self.q_b) / (3.0 + self.alpha_b - 2.0 / self.q_b);
        if !(self.kappa >= 0.0 && self.kappa <= kappa_max) {
            return err(format!(
                "kappa in [0, (1+alpha_b-2/q_b)/(3+alpha_b-2/q_b)] violated: kappa={}, max={kappa_max}",
                self.kappa
            ));
        }
        let alpha_lo = 2.0 / self.q_b + (3.0 * self.kappa - 1.0) / (1.0 - self.kappa);
        if !(self.alpha > alpha_lo && self.alpha <= self.alpha_b) {
            return err(format!(
                "alpha in (2/q_b + (3 kappa - 1)/(1 - kappa), alpha_b] violated: alpha={}, window=({alpha_lo}, {}]",
                self.alpha, self.alpha_b
            ));
        }
        let q_lo = (2.0 - 2.0 * self.kappa) / (1.0 + (1.0 - self.kappa) * self.alpha - 3.0 * self.kappa);
        if !(self.q > q_lo && self.q <= self.q_b) {
            return err(format!(
                "q in ((2-2 kappa)/(1+(1-kappa) alpha - 3 kappa), q_b] violated: q={}, window=({q_lo}, {}]",
                self.q, self.q_b
            ));
        }
        let theta_hi = 2.0 - 2.0 / self.q;
        for &theta in &self.thetas {
            if !(theta >= 0.0 && theta < theta_hi) {
                return err(format!("theta in [0, 2-2/q) violated: theta={theta}, sup={theta_hi}"));
            }
        }
        if self.lambdas.is_empty() || self.lambdas.iter().any(|&l| l < 0.0) {
            return err("lambda grid must be nonempty and nonnegative".into());
        }
        Ok(())
    }
}

/// One measured row of the scan.
#[derive(Debug, Clone)]
pub struct SchauderRow {
    pub lambda: f64,
    pub theta: f64,
    pub u_norm: f64,
    pub f_norm: f64,
    /// `(1+lambda)^{theta/2} u_norm / f_norm`
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct SchauderReport {
    pub params: SchauderParams,
    pub nu: f64,
    pub rows: Vec<SchauderRow>,
    pub picard_iterations: Vec<(f64, usize)>,
}

/// `||f||_{L_T^q C_a^alpha(rho_delta)}`: discrete left-endpoint L^q in time
/// of the weighted Holder norms.
pub fn time_lq_holder_norm(
    f: &SpaceTimeField,
    spec: &HolderSpec,
    bank: &DyadicFilterBank,
    q: f64,
) -> Result<f64> {
    let weights = weight_table(&f.lattice(), spec.kappa);
    let norms: Result<Vec<f64>> = f
        .slices
        .par_iter()
        .map(|s| holder_norm_with_weights(s, spec, bank, &weights))
        .collect();
    let norms = norms?;
    if q.is_infinite() {
        return Ok(norms.iter().cloned().fold(0.0, f64::max));
    }
    let dt = f.grid.dt();
    let sum: f64 = norms[..f.grid.steps].iter().map(|n| n.powf(q)).sum();
    Ok((sum * dt).powf(1.0 / q))
}

/// Solve the problem once per lambda and tabulate
/// `(1+lambda)^{theta/2} ||u||_{L_T^inf C^{2+alpha-2/q-theta}(rho_nu)} / ||f||_{L_T^q C^alpha(rho_delta)}`.
pub fn schauder_scan(
    drift: &Drift,
    forcing: &SpaceTimeField,
    params: &SchauderParams,
    bank: &DyadicFilterBank,
    prop: &KineticPropagator,
    opts: &PicardOptions,
) -> Result<SchauderReport> {
    params.validate()?;
    let nu = params.nu();
    let f_norm = time_lq_holder_norm(
        forcing,
        &HolderSpec::new(params.alpha, params.delta),
        bank,
        params.q,
    )?;
    let mut rows = Vec::new();
    let mut picard_iterations = Vec::new();
    let weights = weight_table(&forcing.lattice(), nu);
    for &lambda in &params.lambdas {
        let problem = PdeProblem { drift: drift.clone(), forcing: forcing.clone(), lambda };
        let (u, rep) = picard_solve(&problem, bank, prop, opts)?;
        picard_iterations.push((lambda, rep.iterations));
        // one block decomposition per slice, shared by every theta row
        let profiles: Result<Vec<Vec<f64>>> = u
            .slices
            .par_iter()
            .map(|slice| {
                let blocks = crate::filter::block_decompose(slice, bank)?;
                Ok(blocks
                    .iter()
                    .map(|b| {
                        b.iter()
                            .zip(weights.iter())
                            .fold(0.0f64, |m, (v, w)| m.max((v * w).abs()))
                    })
                    .collect())
            })
            .collect();
        let profiles = profiles?;
        for &theta in &params.thetas {
            let s = 2.0 + params.alpha - 2.0 / params.q - theta;
            let u_norm = if s >= 0.0 && (s - s.round()).abs() < 1e-12 {
                // integer regularity adds the derivative term; fall back to
                // the full norm
                time_lq_holder_norm(&u, &HolderSpec::new(s, nu), bank, f64::INFINITY)?
            } else {
                profiles
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .map(|(j, b)| 2.0f64.powf(j as f64 * s) * b)
                            .fold(0.0f64, f64::max)
                    })
                    .fold(0.0f64, f64::max)
            };
            let ratio = if f_norm > 0.0 {
                (1.0 + lambda).powf(theta / 2.0) * u_norm / f_norm
            } else {
                0.0
            };
            rows.push(SchauderRow { lambda, theta, u_norm, f_norm, ratio });
        }
    }
    Ok(SchauderReport { params: params.clone(), nu, rows, picard_iterations })
}
