//! Kinetic SDE simulation and the Monte Carlo verification harness.
//!
//! The integrator splits the dynamics: per step h the free-flow increment
//! `(DX, DV)` is drawn from its exact joint Gaussian law per dimension
//! (`Var DX = 2h^3/3`, `Var DV = 2h`, `Cov = h^2` -- the law of
//! `(sqrt(2) int_0^h B, sqrt(2) B_h)`), then the drift contributes
//! `b(t, Z) h` at the left endpoint. The drift-free simulator therefore
//! samples the exact kinetic Gaussian at every node and any bias for
//! `b != 0` is attributable to the drift term alone.
//!
//! Paths live in `R^{2d}`; sampled drift fields are evaluated by
//! multilinear interpolation with periodic wrap and excursions beyond the
//! box are counted in the ensemble diagnostics.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::DyadicFilterBank;
use crate::holder::{holder_norm, spectral_derivative, HolderSpec};
use crate::kernel::{SpaceTimeField, TimeGrid};
use crate::lattice::{weight_rho, LatticeField};
use crate::mollify::{mollify_drift, MollifierSpec};
use crate::rng::NormalSource;
use crate::stats;

/// Analytic drift components (regular part `b_2` of the drift split, or a
/// test drift on its own).
#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticDrift {
    Zero,
    /// constant acceleration per velocity component
    Constant(Vec<f64>),
    /// `b(v) = -rate v` (linear growth with c0 = 0, c1 = rate)
    VelocityDamping { rate: f64 },
}

impl AnalyticDrift {
    fn eval(&self, state: &[f64], d: usize, out: &mut [f64]) {
        match self {
            AnalyticDrift::Zero => out.fill(0.0),
            AnalyticDrift::Constant(c) => out.copy_from_slice(c),
            AnalyticDrift::VelocityDamping { rate } => {
                for i in 0..d {
                    out[i] = -rate * state[d + i];
                }
            }
        }
    }
}

/// Where the (possibly singular, mollified) drift values come from.
#[derive(Debug, Clone)]
pub enum DriftSource {
    Analytic(AnalyticDrift),
    /// sampled lattice field with d components, interpolated multilinearly
    Field(LatticeField),
}

#[derive(Debug, Clone)]
pub struct SdeConfig {
    pub d: usize,
    /// initial point (x0, v0) in R^{2d}
    pub z0: Vec<f64>,
    pub t_end: f64,
    pub steps: usize,
    pub paths: usize,
    pub master_seed: u64,
    /// optional regular component added to the drift source
    pub b2: Option<AnalyticDrift>,
}

impl SdeConfig {
    pub fn grid(&self) -> TimeGrid {
        TimeGrid { t_end: self.t_end, steps: self.steps }
    }

    fn validate(&self) -> Result<()> {
        if self.paths < 2 || self.steps < 1 {
            return Err(Error::InvalidConfig(format!(
                "need M >= 2 paths and K >= 1 steps, got M={}, K={}",
                self.paths, self.steps
            )));
        }
        if self.z0.len() != 2 * self.d {
            return Err(Error::InvalidConfig(format!(
                "z0 must have 2d = {} coordinates, got {}",
                2 * self.d,
                self.z0.len()
            )));
        }
        Ok(())
    }
}

/// Simulated trajectories on a uniform grid, path-major storage,
/// reproducible from the config alone.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub d: usize,
    pub grid: TimeGrid,
    pub paths: usize,
    pub z0: Vec<f64>,
    pub master_seed: u64,
    /// `states[(p * (K+1) + k) * 2d + c]`
    pub states: Vec<f64>,
    pub poisoned: Vec<bool>,
    /// evaluation-time excursions beyond the periodic box (diagnostic)
    pub boundary_excursions: u64,
}

impl PathEnsemble {
    pub fn state(&self, path: usize, node: usize) -> &[f64] {
        let w = 2 * self.d;
        let base = (path * self.grid.num_nodes() + node) * w;
        &self.states[base..base + w]
    }

    pub fn poisoned_count(&self) -> usize {
        self.poisoned.iter().filter(|p| **p).count()
    }
}

/// Run the splitting integrator. Deterministic for a fixed config,
/// independent of worker count (per-path substreams, indexed result slots).
pub fn simulate_ensemble(config: &SdeConfig, drift: &DriftSource) -> Result<PathEnsemble> {
    config.validate()?;
    let d = config.d;
    if let DriftSource::Field(f) = drift {
        if f.components != d {
            return Err(Error::ComponentMismatch { expected: d, got: f.components });
        }
        if f.lattice.d() != d {
            return Err(Error::LatticeMismatch);
        }
    }
    if let DriftSource::Field(f) = drift {
        // heuristic margin diagnostic (logged, not enforced): the start
        // point should sit well inside the box relative to the expected
        // free-flow spread
        let t = config.t_end;
        let x_spread = 3.0 * (2.0 * t * t * t / 3.0f64).sqrt();
        let v_spread = 3.0 * (2.0 * t).sqrt();
        let lat = f.lattice;
        for i in 0..d {
            let x_margin = lat.lx() - config.z0[i].abs();
            let v_margin = lat.lv() - config.z0[d + i].abs();
            if x_margin < x_spread.mul_add(1.0, config.z0[d + i].abs() * t)
                || v_margin < v_spread
            {
                log::warn!(
                    "z0 component {i} within the expected displacement of the box boundary \
                     (margins x {x_margin:.2}, v {v_margin:.2})"
                );
            }
        }
    }
    let grid = config.grid();
    let nodes = grid.num_nodes();
    let w = 2 * d;
    let h = grid.dt();
    let sig_v = (2.0 * h).sqrt();
    let sig_x = (h * h * h / 6.0).sqrt();
    let mut states = vec![0.0f64; config.paths * nodes * w];
    let mut poisoned = vec![false; config.paths];
    let excursions: Vec<u64> = states
        .par_chunks_mut(nodes * w)
        .zip(poisoned.par_iter_mut())
        .enumerate()
        .map(|(p, (chunk, poison))| {
            let mut src = NormalSource::substream(config.master_seed, p as u64);
            let mut z = config.z0.clone();
            let mut b = vec![0.0f64; d];
            let mut b2 = vec![0.0f64; d];
            let mut wrapped = 0u64;
            chunk[..w].copy_from_slice(&z);
            for k in 0..grid.steps {
                // left-endpoint drift evaluation
                match drift {
                    DriftSource::Analytic(a) => a.eval(&z, d, &mut b),
                    DriftSource::Field(f) => {
                        let lat = f.lattice;
                        for i in 0..d {
                            if z[i].abs() > lat.lx() || z[d + i].abs() > lat.lv() {
                                wrapped += 1;
                                break;
                            }
                        }
                        let vals = f.interpolate(&z);
                        b.copy_from_slice(&vals);
                    }
                }
                if let Some(extra) = &config.b2 {
                    extra.eval(&z, d, &mut b2);
                    for i in 0..d {
                        b[i] += b2[i];
                    }
                }
                for i in 0..d {
                    let g1 = src.next_normal();
                    let g2 = src.next_normal();
                    let dv_free = sig_v * g1;
                    let dx_free = 0.5 * h * dv_free + sig_x * g2;
                    let x_new = z[i] + z[d + i] * h + dx_free;
                    let v_new = z[d + i] + b[i] * h + dv_free;
                    z[i] = x_new;
                    z[d + i] = v_new;
                }
                if z.iter().any(|c| !c.is_finite()) {
                    *poison = true;
                    // freeze the path at its last finite state
                    let last = chunk[k * w..(k + 1) * w].to_vec();
                    for kk in (k + 1)..nodes {
                        chunk[kk * w..(kk + 1) * w].copy_from_slice(&last);
                    }
                    return wrapped;
                }
                chunk[(k + 1) * w..(k + 2) * w].copy_from_slice(&z);
            }
            wrapped
        })
        .collect();
    let boundary_excursions = excursions.iter().sum();
    if boundary_excursions > 0 {
        log::info!("ensemble: {boundary_excursions} drift evaluations outside the periodic box");
    }
    Ok(PathEnsemble {
        d,
        grid,
        paths: config.paths,
        z0: config.z0.clone(),
        master_seed: config.master_seed,
        states,
        poisoned,
        boundary_excursions,
    })
}

/// Scalar observable along paths: a static field or one slice per time
/// node.
pub enum Functional<'a> {
    Static(&'a LatticeField),
    Varying(&'a SpaceTimeField),
}

impl<'a> Functional<'a> {
    fn eval(&self, k: usize, z: &[f64]) -> f64 {
        match self {
            Functional::Static(f) => f.interpolate(z)[0],
            Functional::Varying(f) => f.slices[k.min(f.slices.len() - 1)].interpolate(z)[0],
        }
    }
}

/// Per-path cumulative left-endpoint sums `A_k = sum_{j<k} f(t_j, Z_j) dt`,
/// path-major, length `K+1` per path.
pub fn cumulative_functional(ensemble: &PathEnsemble, f: &Functional) -> Vec<f64> {
    let nodes = ensemble.grid.num_nodes();
    let dt = ensemble.grid.dt();
    let mut out = vec![0.0f64; ensemble.paths * nodes];
    out.par_chunks_mut(nodes).enumerate().for_each(|(p, chunk)| {
        let mut acc = 0.0;
        chunk[0] = 0.0;
        for k in 0..ensemble.grid.steps {
            acc += f.eval(k, ensemble.state(p, k)) * dt;
            chunk[k + 1] = acc;
        }
    });
    out
}

/// Per-path `int_{t0}^{t1} f(s, Z_s) ds` (left-endpoint sum; the window
/// endpoints must be grid nodes).
pub fn functional_integral(
    ensemble: &PathEnsemble,
    f: &Functional,
    t0: f64,
    t1: f64,
) -> Result<Vec<f64>> {
    let k0 = ensemble.grid.index_of(t0)?;
    let k1 = ensemble.grid.index_of(t1)?;
    if k0 >= k1 {
        return Err(Error::InvalidConfig(format!("need t0 < t1 on the grid, got {t0}, {t1}")));
    }
    let cum = cumulative_functional(ensemble, f);
    let nodes = ensemble.grid.num_nodes();
    Ok((0..ensemble.paths).map(|p| cum[p * nodes + k1] - cum[p * nodes + k0]).collect())
}

#[derive(Debug, Clone)]
pub struct KrylovParams {
    pub alpha: f64,
    /// time exponent of the f-norm (inf allowed)
    pub q: f64,
    /// L^p(Omega) exponent
    pub p: f64,
    /// window sizes in time units (must be node multiples)
    pub windows: Vec<f64>,
    /// weight exponent of f's norm
    pub delta: f64,
    /// weight exponent kappa of the drift class (enters nu)
    pub kappa: f64,
}

impl KrylovParams {
    /// `(2 + alpha - 2/q) / 2`
    pub fn target_exponent(&self) -> f64 {
        (2.0 + self.alpha - 2.0 / self.q) / 2.0
    }

    /// `nu = 2 kappa / (1 + alpha - 2/q) + delta`
    pub fn nu(&self) -> f64 {
        2.0 * self.kappa / (1.0 + self.alpha - 2.0 / self.q) + self.delta
    }
}

#[derive(Debug, Clone)]
pub struct KrylovWindowRow {
    pub sigma: f64,
    /// max over window offsets of the empirical L^p(Omega) norm
    pub lp_norm: f64,
    pub lp_stderr: f64,
    /// `rho_{-nu}(z0) sigma^{(2+alpha-2/q)/2} ||f||`
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct KrylovReport {
    pub params: KrylovParams,
    pub f_norm: f64,
    pub weight_factor: f64,
    pub rows: Vec<KrylovWindowRow>,
    pub fitted_slope: f64,
    pub slope_stderr: f64,
}

fn window_lp_stats(
    cum: &[f64],
    nodes: usize,
    paths: usize,
    win: usize,
    p: f64,
    seed: u64,
) -> (f64, f64) {
    let stride = (win / 2).max(1);
    let mut best = (0.0f64, 0.0f64);
    let mut k0 = 0usize;
    let mut vals = vec![0.0f64; paths];
    while k0 + win < nodes {
        for (pp, slot) in vals.iter_mut().enumerate() {
            *slot = cum[pp * nodes + k0 + win] - cum[pp * nodes + k0];
        }
        let lp = stats::empirical_lp(&vals, p);
        if lp > best.0 {
            let se = stats::bootstrap_stderr(&vals, 200, seed ^ (k0 as u64), |v| {
                stats::empirical_lp(v, p)
            });
            best = (lp, se);
        }
        k0 += stride;
    }
    best
}

/// Sliding-window occupation-functional scan: for each window size the
/// empirical `L^p(Omega)` norm of `int f(s,Z_s) ds`, its ratio against
/// `sigma^{(2+alpha-2/q)/2} ||f||`, and the log-log slope across window
/// sizes.
pub fn krylov_scan(
    ensemble: &PathEnsemble,
    f: &Functional,
    f_norm: f64,
    params: &KrylovParams,
) -> Result<KrylovReport> {
    if !(f_norm > 0.0) {
        return Err(Error::DegenerateReport("f-norm must be positive".into()));
    }
    if params.windows.len() < 2 {
        return Err(Error::DegenerateReport("need at least 2 window sizes".into()));
    }
    let nodes = ensemble.grid.num_nodes();
    let dt = ensemble.grid.dt();
    let cum = cumulative_functional(ensemble, f);
    let weight_factor = weight_rho(-params.nu(), &ensemble.z0);
    let theta = params.target_exponent();
    let mut rows = Vec::new();
    for &sigma in &params.windows {
        let win = (sigma / dt).round() as usize;
        if win == 0 || win >= nodes {
            return Err(Error::DegenerateReport(format!("window {sigma} not on the grid")));
        }
        let (lp, se) =
            window_lp_stats(&cum, nodes, ensemble.paths, win, params.p, ensemble.master_seed);
        let bound = weight_factor * sigma.powf(theta) * f_norm;
        rows.push(KrylovWindowRow {
            sigma,
            lp_norm: lp,
            lp_stderr: se,
            bound,
            ratio: lp / bound,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.sigma.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.lp_norm.ln()).collect();
    let (slope, _) = stats::least_squares(&xs, &ys);
    // slope uncertainty from the per-window lp stderr, propagated through
    // the fit
    let mut rel = 0.0f64;
    for r in &rows {
        rel = rel.max(r.lp_stderr / r.lp_norm.max(1e-300));
    }
    let span = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
    let slope_stderr = 2.0 * rel / span.max(1e-9);
    Ok(KrylovReport {
        params: params.clone(),
        f_norm,
        weight_factor,
        rows,
        fitted_slope: slope,
        slope_stderr,
    })
}

/// `||f||_{L_T^q C_a^alpha(rho_delta)}` of a static observable on a grid of
/// `K` steps: for static f this is `T^{1/q}` times the spatial norm.
pub fn static_f_norm(
    f: &LatticeField,
    alpha: f64,
    q: f64,
    delta: f64,
    t_end: f64,
    bank: &DyadicFilterBank,
) -> Result<f64> {
    let spatial = holder_norm(f, &HolderSpec::new(alpha, delta), bank)?;
    if q.is_infinite() {
        Ok(spatial)
    } else {
        Ok(t_end.powf(1.0 / q) * spatial)
    }
}

#[derive(Debug, Clone)]
pub struct HolderFitReport {
    pub gaps: Vec<f64>,
    pub moduli: Vec<f64>,
    pub fitted_exponent: f64,
    /// path-bootstrap standard error of the fitted exponent
    pub fitted_stderr: f64,
}

fn holder_fit_on(
    cum: &[f64],
    path_ids: &[usize],
    nodes: usize,
    wins: &[usize],
    gaps: &[f64],
    p: f64,
) -> f64 {
    let mut ys = Vec::with_capacity(wins.len());
    let mut vals = vec![0.0f64; path_ids.len()];
    for &win in wins {
        let stride = (win / 2).max(1);
        let mut best = 0.0f64;
        let mut k0 = 0usize;
        while k0 + win < nodes {
            for (slot, &pp) in vals.iter_mut().zip(path_ids.iter()) {
                *slot = cum[pp * nodes + k0 + win] - cum[pp * nodes + k0];
            }
            best = best.max(stats::empirical_lp(&vals, p));
            k0 += stride;
        }
        ys.push(best.ln());
    }
    let xs: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    stats::least_squares(&xs, &ys).0
}

/// Fit the L^p modulus `||A_t - A_s||_{L^p}` against `|t - s|` in log-log
/// over dyadic gaps (max over window offsets per gap), with a path-bootstrap
/// standard error for the exponent.
pub fn holder_exponent_of_a(
    ensemble: &PathEnsemble,
    f: &Functional,
    p: f64,
    gaps: &[f64],
) -> Result<HolderFitReport> {
    if gaps.len() < 2 {
        return Err(Error::DegenerateReport("need at least 2 gaps".into()));
    }
    let nodes = ensemble.grid.num_nodes();
    let dt = ensemble.grid.dt();
    let cum = cumulative_functional(ensemble, f);
    let mut wins = Vec::with_capacity(gaps.len());
    for &g in gaps {
        let win = (g / dt).round() as usize;
        if win == 0 || win >= nodes {
            return Err(Error::DegenerateReport(format!("gap {g} not on the grid")));
        }
        wins.push(win);
    }
    let all: Vec<usize> = (0..ensemble.paths).collect();
    let slope = holder_fit_on(&cum, &all, nodes, &wins, gaps, p);
    let mut moduli = Vec::new();
    {
        let mut vals = vec![0.0f64; ensemble.paths];
        for &win in &wins {
            let stride = (win / 2).max(1);
            let mut best = 0.0f64;
            let mut k0 = 0usize;
            while k0 + win < nodes {
                for (pp, slot) in vals.iter_mut().enumerate() {
                    *slot = cum[pp * nodes + k0 + win] - cum[pp * nodes + k0];
                }
                best = best.max(stats::empirical_lp(&vals, p));
                k0 += stride;
            }
            moduli.push(best);
        }
    }
    // bootstrap over paths
    let resamples = 60usize;
    let boot: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            use rand_chacha::rand_core::RngCore;
            let mut rng = crate::rng::substream(ensemble.master_seed ^ 0x401DE7, r as u64);
            let ids: Vec<usize> = (0..ensemble.paths)
                .map(|_| (rng.next_u64() % ensemble.paths as u64) as usize)
                .collect();
            holder_fit_on(&cum, &ids, nodes, &wins, gaps, p)
        })
        .collect();
    let (_, se_of_mean) = stats::mean_stderr(&boot);
    let fitted_stderr = se_of_mean * (resamples as f64).sqrt();
    Ok(HolderFitReport { gaps: gaps.to_vec(), moduli, fitted_exponent: slope, fitted_stderr })
}

#[derive(Debug, Clone)]
pub struct CauchyRow {
    pub n_coarse: u32,
    pub n_fine: u32,
    /// sup over grid nodes of the empirical L^2(Omega) norm of
    /// `|A_t^{b_m} - A_t^{b_n}|`
    pub sup_l2_diff: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct CauchyReport {
    pub rows: Vec<CauchyRow>,
    /// sup-t L^2 distance between the two mollifier families at the largest
    /// level
    pub bump_independence: f64,
    pub bump_independence_stderr: f64,
    /// Monte Carlo noise floor: stderr of the largest-level functional's
    /// sup-t L^2 statistic
    pub noise_floor: f64,
}

/// Vector-valued cumulative drift functionals `A_t^{b_n}` along frozen
/// paths, per mollification level.
fn drift_cumulatives(
    ensemble: &PathEnsemble,
    b: &LatticeField,
    spec: &MollifierSpec,
) -> Result<Vec<f64>> {
    let bn = mollify_drift(b, spec)?;
    let d = ensemble.d;
    let nodes = ensemble.grid.num_nodes();
    let dt = ensemble.grid.dt();
    let mut out = vec![0.0f64; ensemble.paths * nodes * d];
    out.par_chunks_mut(nodes * d).enumerate().for_each(|(p, chunk)| {
        let mut acc = vec![0.0f64; d];
        for k in 0..ensemble.grid.steps {
            let vals = bn.interpolate(ensemble.state(p, k));
            for i in 0..d {
                acc[i] += vals[i] * dt;
                chunk[(k + 1) * d + i] = acc[i];
            }
        }
    });
    Ok(out)
}

fn sup_l2_diff(
    a: &[f64],
    b: &[f64],
    paths: usize,
    nodes: usize,
    d: usize,
    seed: u64,
) -> (f64, f64) {
    // per node: empirical L2 over paths of the euclidean difference
    let mut best = (0.0f64, 0usize);
    for k in 1..nodes {
        let mut s = 0.0;
        for p in 0..paths {
            let base = (p * nodes + k) * d;
            let mut e2 = 0.0;
            for i in 0..d {
                let diff = a[base + i] - b[base + i];
                e2 += diff * diff;
            }
            s += e2;
        }
        let l2 = (s / paths as f64).sqrt();
        if l2 > best.0 {
            best = (l2, k);
        }
    }
    // bootstrap stderr at the arg-sup node
    let k = best.1.max(1);
    let per_path: Vec<f64> = (0..paths)
        .map(|p| {
            let base = (p * nodes + k) * d;
            (0..d).map(|i| (a[base + i] - b[base + i]).powi(2)).sum::<f64>()
        })
        .collect();
    let se = stats::bootstrap_stderr(&per_path, 200, seed, |v| stats::mean(v).max(0.0).sqrt());
    (best.0, se)
}

/// Along one frozen high-level ensemble, compare the drift functionals of
/// successive mollification levels (the L^2 Cauchy property) and of two
/// different base bumps at the top level (mollifier independence).
pub fn drift_functional_cauchy(
    ensemble: &PathEnsemble,
    b: &LatticeField,
    levels: &[u32],
    reference_level: u32,
    bump_a: MollifierSpec,
    bump_b: MollifierSpec,
) -> Result<CauchyReport> {
    if levels.len() < 2 || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("levels must be strictly increasing".into()));
    }
    if *levels.last().unwrap() >= reference_level {
        return Err(Error::InvalidConfig(format!(
            "reference level {reference_level} must exceed every compared level"
        )));
    }
    let d = ensemble.d;
    let nodes = ensemble.grid.num_nodes();
    let cums: Result<Vec<Vec<f64>>> = levels
        .iter()
        .map(|&n| drift_cumulatives(ensemble, b, &MollifierSpec { level: n, ..bump_a }))
        .collect();
    let cums = cums?;
    let mut rows = Vec::new();
    for i in 0..levels.len() - 1 {
        let (sup, se) = sup_l2_diff(
            &cums[i],
            &cums[i + 1],
            ensemble.paths,
            nodes,
            d,
            ensemble.master_seed ^ (i as u64),
        );
        rows.push(CauchyRow { n_coarse: levels[i], n_fine: levels[i + 1], sup_l2_diff: sup, stderr: se });
    }
    let top = *levels.last().unwrap();
    let top_a = cums.last().unwrap();
    let top_b = drift_cumulatives(ensemble, b, &MollifierSpec { level: top, ..bump_b })?;
    let (indep, indep_se) =
        sup_l2_diff(top_a, &top_b, ensemble.paths, nodes, d, ensemble.master_seed ^ 0xB0B);
    // noise floor: fluctuation scale of the top-level sup-t functional
    let k_last = nodes - 1;
    let per_path: Vec<f64> = (0..ensemble.paths)
        .map(|p| {
            let base = (p * nodes + k_last) * d;
            (0..d).map(|i| top_a[base + i].powi(2)).sum::<f64>().sqrt()
        })
        .collect();
    let noise_floor = stats::bootstrap_stderr(
        &per_path,
        200,
        ensemble.master_seed ^ 0xF100,
        |v| stats::empirical_lp(v, 2.0),
    );
    Ok(CauchyReport {
        rows,
        bump_independence: indep,
        bump_independence_stderr: indep_se,
        noise_floor,
    })
}

#[derive(Debug, Clone)]
pub struct MomentRow {
    pub delta: f64,
    /// `E[sup_t rho_delta(Z_t)] / rho_delta(z0)`
    pub ratio: f64,
    pub stderr: f64,
}

/// Weighted running-supremum moments against the start-point weight.
pub fn moment_report(ensemble: &PathEnsemble, deltas: &[f64]) -> Vec<MomentRow> {
    let nodes = ensemble.grid.num_nodes();
    deltas
        .iter()
        .map(|&delta| {
            let denom = weight_rho(delta, &ensemble.z0);
            let sups: Vec<f64> = (0..ensemble.paths)
                .into_par_iter()
                .map(|p| {
                    let mut best = f64::MIN;
                    for k in 0..nodes {
                        best = best.max(weight_rho(delta, ensemble.state(p, k)));
                    }
                    best
                })
                .collect();
            let (m, se) = stats::mean_stderr(&sups);
            MomentRow { delta, ratio: m / denom, stderr: se / denom }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ItoReport {
    /// pooled OLS slope of `M_{k+1} - M_k` against `M_k`
    pub regression_slope: f64,
    pub regression_stderr: f64,
    /// mean quadratic variation of M over [0, T]
    pub qv_mean: f64,
    pub qv_stderr: f64,
    /// mean of `2 int |grad_v u|^2(s, Z_s) ds`
    pub qv_expected: f64,
    pub qv_expected_stderr: f64,
}

impl ItoReport {
    /// Martingale checks at `band` standard errors.
    pub fn passes(&self, band: f64) -> bool {
        self.regression_slope.abs() <= band * self.regression_stderr
            && (self.qv_mean - self.qv_expected).abs()
                <= band * (self.qv_stderr + self.qv_expected_stderr)
    }
}

/// Verify the martingale identity `M_t := u(t,Z_t) - u(0,Z_0) - A_t^f` along
/// an ensemble whose drift matches the one used in the backward solve of
/// `u`. The ensemble grid must refine the PDE grid by an integer stride.
pub fn ito_martingale_test(
    u: &SpaceTimeField,
    ensemble: &PathEnsemble,
    f: &Functional,
) -> Result<ItoReport> {
    let pde_steps = u.grid.steps;
    if ensemble.grid.steps % pde_steps != 0 {
        return Err(Error::InvalidConfig(format!(
            "ensemble steps {} must be a multiple of PDE steps {pde_steps}",
            ensemble.grid.steps
        )));
    }
    if (ensemble.grid.t_end - u.grid.t_end).abs() > 1e-12 {
        return Err(Error::InvalidConfig("horizon mismatch between PDE and ensemble".into()));
    }
    let stride = ensemble.grid.steps / pde_steps;
    let d = ensemble.d;
    // spectral gradients per PDE slice
    let mut grads: Vec<LatticeField> = Vec::with_capacity(u.slices.len());
    for s in &u.slices {
        let mut g = LatticeField::zeros(s.lattice, d);
        for i in 0..d {
            let di = spectral_derivative(s, s.lattice.d() + i)?;
            g.set_component(i, &di.values);
        }
        grads.push(g);
    }
    let cum = cumulative_functional(ensemble, f);
    let e_nodes = ensemble.grid.num_nodes();
    let p_nodes = u.grid.num_nodes();
    let paths = ensemble.paths;
    // per path: M at PDE nodes, QV, expected QV
    let mut m_values = vec![0.0f64; paths * p_nodes];
    let mut qv = vec![0.0f64; paths];
    let mut qv_exp = vec![0.0f64; paths];
    let pde_dt = u.grid.dt();
    m_values
        .par_chunks_mut(p_nodes)
        .zip(qv.par_iter_mut().zip(qv_exp.par_iter_mut()))
        .enumerate()
        .for_each(|(p, (mrow, (qv_p, qve_p)))| {
            let u0 = u.slices[0].interpolate(ensemble.state(p, 0))[0];
            let mut prev_m = 0.0;
            mrow[0] = 0.0;
            for k in 1..p_nodes {
                let z = ensemble.state(p, k * stride);
                let a = cum[p * e_nodes + k * stride];
                let m = u.slices[k].interpolate(z)[0] - u0 - a;
                mrow[k] = m;
                let dm = m - prev_m;
                *qv_p += dm * dm;
                prev_m = m;
            }
            // trapezoid in time: |grad_v u|^2 varies linearly to leading
            // order over a step and the left sum alone biases the
            // comparison at O(dt)
            let mut prev_g2 = {
                let g = grads[0].interpolate(ensemble.state(p, 0));
                g.iter().map(|v| v * v).sum::<f64>()
            };
            for k in 1..=pde_steps {
                let z = ensemble.state(p, k * stride);
                let g = grads[k].interpolate(z);
                let g2: f64 = g.iter().map(|v| v * v).sum();
                *qve_p += (prev_g2 + g2) * pde_dt;
                prev_g2 = g2;
            }
        });
    // pooled regression of increments on current value
    let mut xs = Vec::with_capacity(paths * (p_nodes - 1));
    let mut ys = Vec::with_capacity(paths * (p_nodes - 1));
    for p in 0..paths {
        for k in 0..p_nodes - 1 {
            xs.push(m_values[p * p_nodes + k]);
            ys.push(m_values[p * p_nodes + k + 1] - m_values[p * p_nodes + k]);
        }
    }
    let (slope, intercept) = stats::least_squares(&xs, &ys);
    // OLS slope stderr
    let n = xs.len() as f64;
    let mx = stats::mean(&xs);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys.iter())
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let slope_se = (ss_res / (n - 2.0) / sxx).sqrt();
    let (qv_mean, qv_se) = stats::mean_stderr(&qv);
    let (qve_mean, qve_se) = stats::mean_stderr(&qv_exp);
    Ok(ItoReport {
        regression_slope: slope,
        regression_stderr: slope_se,
        qv_mean,
        qv_stderr: qv_se,
        qv_expected: qve_mean,
        qv_expected_stderr: qve_se,
    })
}
